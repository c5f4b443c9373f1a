//! The sequential step loop and the run record it produces.
//!
//! A step seeds its cursor with the previous transcript, performs `d`
//! dependent reads (each address is derived from the cursor produced by the
//! previous read), overwrites one vertex with a value bound to both its old
//! causal digest and the final cursor, updates the arena tree at that vertex
//! only, and extends the transcript.

use crate::arena::{init_arena, Arena, Block, Genesis};
use crate::commitment::MerkleTree;
use crate::error::{ParamError, RunError};
use crate::hashing::{
    bind_causal, bind_data, chain_cursor, derive_read_coord, derive_write_coord, extend_transcript,
    Digest, Dim, Vertex,
};
use crate::params::RunParams;

/// Address trace of one step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepRecord {
    pub t: u64,
    pub reads: Vec<Vertex>,
    pub write: Vertex,
}

/// The overwrite performed by step `t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WriteLogEntry {
    pub t: u64,
    pub vertex: Vertex,
    pub old: Block,
    /// Cursor after the step's last read.
    pub cursor: Digest,
    pub new: Block,
}

impl WriteLogEntry {
    /// Checks the symbiotic binding of `new` to `old` and the cursor.
    pub fn is_bound(&self) -> bool {
        self.new == bound_block(&self.old, &self.cursor, self.t)
    }
}

/// Where the value a read observed came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Origin {
    /// Never written since initialization.
    Init,
    /// Last written by this step.
    Step(u64),
}

/// Value written over `old` by step `t` with final cursor `cursor`.
#[inline]
pub fn bound_block(old: &Block, cursor: &Digest, t: u64) -> Block {
    Block {
        data: bind_data(&old.data, cursor, &old.causal),
        causal: bind_causal(&old.causal, cursor, t),
    }
}

/// Performs the dependent reads of one step.
///
/// Read `j`'s address is derived from the cursor after read `j-1` has been
/// chained in, so `load` is invoked strictly in order and no address can be
/// known before the previous block is in hand. Writes the addresses into
/// `coords` (its length is `d`) and returns the final cursor.
#[inline]
pub fn chase(
    mut cursor: Digest,
    dim: Dim,
    coords: &mut [Vertex],
    mut load: impl FnMut(usize, Vertex) -> Block,
) -> Digest {
    for (j, slot) in coords.iter_mut().enumerate() {
        let v = derive_read_coord(&cursor, j as u64, dim);
        *slot = v;
        let b = load(j, v);
        cursor = chain_cursor(&cursor, &b.data, &b.causal);
    }
    cursor
}

/// Result of one step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepOutcome {
    pub transcript: Digest,
    pub root: Digest,
    pub write: WriteLogEntry,
}

/// Executes step `t` against `arena` and its tree, starting from the
/// previous transcript. Read addresses are written into `coords`.
pub fn step(
    t: u64,
    arena: &mut Arena,
    tree: &mut MerkleTree,
    prev: &Digest,
    coords: &mut [Vertex],
) -> StepOutcome {
    let dim = arena.dim();
    let cursor = chase(*prev, dim, coords, |_, v| *arena.get(v));
    let vertex = derive_write_coord(&cursor, dim);
    let old = *arena.get(vertex);
    let new = bound_block(&old, &cursor, t);
    arena.set(vertex, new);
    let root = tree
        .update_leaf(vertex, &new)
        .expect("write coordinate is masked to the arena");
    let transcript = extend_transcript(prev, t, &cursor, &root);
    StepOutcome {
        transcript,
        root,
        write: WriteLogEntry {
            t,
            vertex,
            old,
            cursor,
            new,
        },
    }
}

/// Receives every step of a run as it executes.
pub trait StepObserver {
    fn on_start(&mut self, _genesis: &Genesis) {}
    fn on_step(&mut self, reads: &[Vertex], outcome: &StepOutcome);
}

impl StepObserver for () {
    fn on_step(&mut self, _: &[Vertex], _: &StepOutcome) {}
}

/// Live execution state: arena, tree, and the chain heads.
#[derive(Clone, Debug)]
pub struct Machine {
    pub arena: Arena,
    pub tree: MerkleTree,
    pub transcript: Digest,
    pub root: Digest,
    /// Last executed step (0 right after init).
    pub t: u64,
    reads: Vec<Vertex>,
}

impl Machine {
    pub fn from_genesis(g: Genesis, reads: u32) -> Machine {
        Machine {
            transcript: g.transcript,
            root: g.root,
            arena: g.arena,
            tree: g.tree,
            t: 0,
            reads: vec![Vertex::default(); reads as usize],
        }
    }

    /// Executes the next step.
    #[inline]
    pub fn advance(&mut self) -> StepOutcome {
        let t = self.t + 1;
        let out = step(
            t,
            &mut self.arena,
            &mut self.tree,
            &self.transcript,
            &mut self.reads,
        );
        self.t = t;
        self.transcript = out.transcript;
        self.root = out.root;
        out
    }

    /// Read addresses of the most recent step.
    pub fn last_reads(&self) -> &[Vertex] {
        &self.reads
    }
}

/// Runs init and `K` steps, reporting each to `observer`. Returns the
/// final machine state.
pub fn gen_with<O: StepObserver + ?Sized>(
    seed: &Digest,
    params: &RunParams,
    observer: &mut O,
) -> Result<Machine, ParamError> {
    params.validate(crate::params::Strictness::Toy)?;
    let g = init_arena(seed, params.dim)?;
    observer.on_start(&g);
    let mut m = Machine::from_genesis(g, params.reads);
    for _ in 0..params.steps {
        let out = m.advance();
        observer.on_step(&m.reads, &out);
    }
    Ok(m)
}

/// How much of a run is kept in memory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Retention {
    /// Roots, transcripts, step records and the write log.
    #[default]
    Full,
    /// Roots and transcripts only; step records are re-derived by replay.
    Lean,
}

/// Execution record of a run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunLog {
    pub params: RunParams,
    pub seed: Digest,
    /// `r_0..r_K`.
    pub roots: Vec<Digest>,
    /// `T_0..T_K`.
    pub transcripts: Vec<Digest>,
    reads: Vec<Vertex>,
    writes: Vec<Vertex>,
    write_log: Vec<WriteLogEntry>,
    writers: WriterIndex,
}

struct Recorder {
    log: RunLog,
    retention: Retention,
}

impl StepObserver for Recorder {
    fn on_start(&mut self, g: &Genesis) {
        self.log.roots.push(g.root);
        self.log.transcripts.push(g.transcript);
    }

    fn on_step(&mut self, reads: &[Vertex], out: &StepOutcome) {
        self.log.roots.push(out.root);
        self.log.transcripts.push(out.transcript);
        if self.retention == Retention::Full {
            self.log.reads.extend_from_slice(reads);
            self.log.writes.push(out.write.vertex);
            self.log.write_log.push(out.write);
        }
    }
}

/// Runs a complete execution and records it.
pub fn gen(seed: &Digest, params: &RunParams) -> Result<(RunLog, Arena), ParamError> {
    gen_retaining(seed, params, Retention::Full)
}

pub fn gen_retaining(
    seed: &Digest,
    params: &RunParams,
    retention: Retention,
) -> Result<(RunLog, Arena), ParamError> {
    let k = params.steps as usize;
    let full = retention == Retention::Full;
    let mut rec = Recorder {
        log: RunLog {
            params: *params,
            seed: *seed,
            roots: Vec::with_capacity(k + 1),
            transcripts: Vec::with_capacity(k + 1),
            reads: Vec::with_capacity(if full { k * params.reads as usize } else { 0 }),
            writes: Vec::with_capacity(if full { k } else { 0 }),
            write_log: Vec::with_capacity(if full { k } else { 0 }),
            writers: WriterIndex::default(),
        },
        retention,
    };
    let m = gen_with(seed, params, &mut rec)?;
    let mut log = rec.log;
    if full {
        log.writers = WriterIndex::build(params.vertex_count(), &log.writes);
    }
    Ok((log, m.arena))
}

impl RunLog {
    /// Assembles a log from its parts (as read back from a run directory).
    /// Pass empty record vectors for a lean log.
    pub fn from_parts(
        params: RunParams,
        seed: Digest,
        roots: Vec<Digest>,
        transcripts: Vec<Digest>,
        reads: Vec<Vertex>,
        write_log: Vec<WriteLogEntry>,
    ) -> Result<RunLog, RunError> {
        let k = params.steps as usize;
        if roots.len() != k + 1 || transcripts.len() != k + 1 {
            return Err(RunError::Missing("one root and transcript per step"));
        }
        let lean = reads.is_empty() && write_log.is_empty() && k > 0;
        if !lean && (reads.len() != k * params.reads as usize || write_log.len() != k) {
            return Err(RunError::Missing(
                "one step record and write-log entry per step",
            ));
        }
        let writes: Vec<Vertex> = write_log.iter().map(|w| w.vertex).collect();
        let writers = if lean {
            WriterIndex::default()
        } else {
            WriterIndex::build(params.vertex_count(), &writes)
        };
        Ok(RunLog {
            params,
            seed,
            roots,
            transcripts,
            reads,
            writes,
            write_log,
            writers,
        })
    }

    pub fn steps(&self) -> u64 {
        self.params.steps
    }

    pub fn final_transcript(&self) -> Digest {
        *self.transcripts.last().expect("T_0 is always present")
    }

    /// True when step records were not retained.
    pub fn is_lean(&self) -> bool {
        self.params.steps > 0 && self.write_log.is_empty()
    }

    /// Read addresses of step `t` (1-based).
    pub fn reads_of(&self, t: u64) -> &[Vertex] {
        let d = self.params.reads as usize;
        let i = (t - 1) as usize;
        &self.reads[i * d..(i + 1) * d]
    }

    pub fn write_of(&self, t: u64) -> Vertex {
        self.writes[(t - 1) as usize]
    }

    pub fn record(&self, t: u64) -> StepRecord {
        StepRecord {
            t,
            reads: self.reads_of(t).to_vec(),
            write: self.write_of(t),
        }
    }

    pub fn write_entry(&self, t: u64) -> &WriteLogEntry {
        &self.write_log[(t - 1) as usize]
    }

    /// All read addresses, step-major.
    pub fn all_reads(&self) -> &[Vertex] {
        &self.reads
    }

    /// All write addresses in step order.
    pub fn all_writes(&self) -> &[Vertex] {
        &self.writes
    }

    pub fn write_log(&self) -> &[WriteLogEntry] {
        &self.write_log
    }

    /// Steps that wrote `v`, ascending.
    pub fn writes_to(&self, v: Vertex) -> &[u64] {
        self.writers.steps_for(v)
    }

    /// The latest step strictly before `t` that wrote `v`.
    pub fn last_write_before(&self, v: Vertex, t: u64) -> Origin {
        let steps = self.writers.steps_for(v);
        match steps.partition_point(|&w| w < t) {
            0 => Origin::Init,
            i => Origin::Step(steps[i - 1]),
        }
    }

    /// Recomputes `T_1..T_K` from the logged cursors and roots. Returns the
    /// first step whose stored transcript disagrees.
    pub fn audit_transcripts(&self) -> Result<(), u64> {
        for (i, w) in self.write_log.iter().enumerate() {
            let t = i as u64 + 1;
            let expect = extend_transcript(&self.transcripts[i], t, &w.cursor, &self.roots[i + 1]);
            if w.t != t || expect != self.transcripts[i + 1] {
                return Err(t);
            }
        }
        Ok(())
    }

    /// Rebuilds step records for a lean log by replaying the run, checking
    /// every root and transcript on the way.
    pub fn rederive_records(&mut self) -> Result<(), RunError> {
        if !self.is_lean() {
            return Ok(());
        }
        let (full, _) = gen(&self.seed, &self.params)?;
        if let Some(t) = (0..full.roots.len()).find(|&t| full.roots[t] != self.roots[t]) {
            return Err(RunError::Diverged {
                what: "root",
                step: t as u64,
            });
        }
        if let Some(t) =
            (0..full.transcripts.len()).find(|&t| full.transcripts[t] != self.transcripts[t])
        {
            return Err(RunError::Diverged {
                what: "transcript",
                step: t as u64,
            });
        }
        *self = full;
        Ok(())
    }
}

/// Per-vertex ascending lists of writing steps, in compressed-row form.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct WriterIndex {
    offsets: Vec<u64>,
    steps: Vec<u64>,
}

impl WriterIndex {
    fn build(n: u64, writes: &[Vertex]) -> WriterIndex {
        let mut offsets = vec![0u64; n as usize + 1];
        for w in writes {
            offsets[w.as_usize() + 1] += 1;
        }
        for i in 0..n as usize {
            offsets[i + 1] += offsets[i];
        }
        let mut fill = offsets.clone();
        let mut steps = vec![0u64; writes.len()];
        for (i, w) in writes.iter().enumerate() {
            let slot = &mut fill[w.as_usize()];
            steps[*slot as usize] = i as u64 + 1;
            *slot += 1;
        }
        WriterIndex { offsets, steps }
    }

    fn steps_for(&self, v: Vertex) -> &[u64] {
        if self.offsets.is_empty() {
            return &[];
        }
        let i = v.as_usize();
        &self.steps[self.offsets[i] as usize..self.offsets[i + 1] as usize]
    }
}
