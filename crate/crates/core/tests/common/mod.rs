#![allow(dead_code)]

use posme::arena::init_arena;
use posme::engine::{gen, Machine, RunLog};
use posme::proof::{Opening, Proof, Provenance, ProvenanceNode};
use posme::verifier::{verify, Check};
use posme::{Digest, Params, RunParams, Strictness};

pub struct Fixture {
    pub seed: Digest,
    pub params: Params,
    pub log: RunLog,
    pub proof: Proof,
}

impl Fixture {
    pub fn new(seed: Digest, dim: u32, rho: u64, d: u32, q: u32, r: u32) -> Fixture {
        let run = RunParams::with_density(dim, rho, d).unwrap();
        let (log, _) = gen(&seed, &run).unwrap();
        let proof = posme::prove(&log, q, r, Strictness::Toy).unwrap();
        Fixture {
            seed,
            params: Params::new(run, q, r).unwrap(),
            log,
            proof,
        }
    }

    pub fn check(&self, p: &Proof) -> Option<Check> {
        verify(&p.to_bytes(), &self.seed, &self.params, Strictness::Toy).check()
    }

    /// A genuine opening of `v` in the arena as it stood after step `t`.
    pub fn opening_after(&self, t: u64, v: u64) -> Opening {
        let mut m = Machine::from_genesis(
            init_arena(&self.seed, self.params.run.dim).unwrap(),
            self.params.run.reads,
        );
        for _ in 0..t {
            m.advance();
        }
        Opening {
            block: *m.arena.get(posme::Vertex(v)),
            path: m.tree.open(v).unwrap(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tamper {
    FinalTranscript,
    Commitment,
    ReadOpening,
    WriteCoord,
    RootPair,
    ProvenanceBlock,
}

impl Tamper {
    pub const ALL: [Tamper; 6] = [
        Tamper::FinalTranscript,
        Tamper::Commitment,
        Tamper::ReadOpening,
        Tamper::WriteCoord,
        Tamper::RootPair,
        Tamper::ProvenanceBlock,
    ];

    pub fn expected(self) -> Check {
        match self {
            Tamper::FinalTranscript | Tamper::Commitment | Tamper::RootPair => {
                Check::RootMembership
            }
            Tamper::ReadOpening => Check::PreState,
            Tamper::WriteCoord => Check::RootMatches,
            Tamper::ProvenanceBlock => Check::Provenance,
        }
    }
}

/// Deterministic stream of small integers for choosing tamper sites.
pub struct Picker(u64);

impl Picker {
    pub fn new(seed: u64) -> Picker {
        Picker(seed ^ 0x9e37_79b9_7f4a_7c15)
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((self.0 >> 33) % n as u64) as usize
    }
}

fn first_writer(nodes: &mut [ProvenanceNode]) -> Option<&mut ProvenanceNode> {
    nodes
        .iter_mut()
        .find(|n| matches!(n.origin, Provenance::Writer { .. }))
}

/// Applies `kind` at a site chosen by `pick`. Returns false when the proof
/// offers no such site (e.g. no provenance node at all).
pub fn apply(f: &Fixture, proof: &mut Proof, kind: Tamper, pick: &mut Picker) -> bool {
    let q = proof.witnesses.len();
    let i = pick.below(q);
    let bit = pick.below(256);
    let w = &mut proof.witnesses[i];
    match kind {
        Tamper::FinalTranscript => {
            proof.final_transcript = proof.final_transcript.with_bit_flipped(bit)
        }
        Tamper::Commitment => proof.root_commitment = proof.root_commitment.with_bit_flipped(bit),
        Tamper::ReadOpening => {
            let j = pick.below(w.step.reads.len());
            let o = &mut w.step.reads[j];
            match pick.below(3) {
                0 => o.block.data = o.block.data.with_bit_flipped(bit),
                1 => o.block.causal = o.block.causal.with_bit_flipped(bit),
                _ => {
                    let k = pick.below(o.path.siblings.len());
                    o.path.siblings[k] = o.path.siblings[k].with_bit_flipped(bit);
                }
            }
        }
        Tamper::WriteCoord => {
            let s = w.step.step;
            let n = f.params.run.vertex_count();
            let real = w.step.write.path.leaf;
            let other = (real + 1 + pick.below(n as usize - 1) as u64) % n;
            w.step.write = f.opening_after(s - 1, other);
        }
        Tamper::RootPair => {
            let o = if pick.below(2) == 0 {
                &mut w.step.before
            } else {
                &mut w.step.after
            };
            if pick.below(2) == 0 {
                o.root = o.root.with_bit_flipped(bit);
            } else {
                let k = pick.below(o.path.siblings.len());
                o.path.siblings[k] = o.path.siblings[k].with_bit_flipped(bit);
            }
        }
        Tamper::ProvenanceBlock => {
            // Prefer a writer node so the lineage replay is exercised.
            let Some(n) = (match first_writer(&mut w.provenance) {
                Some(n) => Some(n),
                None => w.provenance.first_mut(),
            }) else {
                return false;
            };
            n.observed.data = n.observed.data.with_bit_flipped(bit);
        }
    }
    true
}
