//! Proof objects and their versioned byte format.
//!
//! ```text
//! proof   := "PSME" version:u8 d_hc:u8 K:u64 d:u16 Q:u16 R:u8 T_K:[32] C:[32] record*Q
//! record  := len:u32 challenge                     (len = byte length of challenge)
//! challenge := step_witness node*(R >= 2 ? d : 0)
//! step_witness := step:u64 T_prev:[32] opening*d opening(pre-write) root_opening root_opening
//! opening := block:[64] path
//! root_opening := root:[32] path
//! path    := leaf:u64 count:u16 sibling:[32]*count
//! node    := vertex:u64 observed:[64] tag:u8 (tag = 1: step_witness node*(depth < R-1 ? d : 0))
//! ```
//!
//! All integers little-endian. The node count is implied by `d` and `R`.

use crate::arena::Block;
use crate::codec::{Reader, WriteLe};
use crate::commitment::MerklePath;
use crate::error::FormatError;
use crate::hashing::{Digest, Dim, Vertex};
use crate::params::{Params, RunParams};

pub const MAGIC: &[u8; 4] = b"PSME";
pub const VERSION: u8 = 1;

/// Fixed header length in bytes.
pub const HEADER_LEN: usize = 4 + 1 + 1 + 8 + 2 + 2 + 1 + 32 + 32;

/// A block together with its authentication path. The vertex is the
/// path's leaf index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Opening {
    pub block: Block,
    pub path: MerklePath,
}

impl Opening {
    pub fn vertex(&self) -> Vertex {
        Vertex(self.path.leaf)
    }
}

/// A root `r_t` and its path in the root commitment `C`; `t` is the leaf.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RootOpening {
    pub root: Digest,
    pub path: MerklePath,
}

impl RootOpening {
    pub fn index(&self) -> u64 {
        self.path.leaf
    }
}

/// Everything needed to re-execute one step: the transcript it started
/// from, its `d` read blocks and the overwritten block (all opened against
/// `r_{s-1}`), and the pair `(r_{s-1}, r_s)` opened in `C`.
///
/// The post-write opening of `v_w` under `r_s` has the same siblings as the
/// pre-write opening under `r_{s-1}` (only that leaf changed), so it is not
/// carried separately; [`StepWitness::post_path`] returns it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepWitness {
    pub step: u64,
    pub prev_transcript: Digest,
    pub reads: Vec<Opening>,
    pub write: Opening,
    pub before: RootOpening,
    pub after: RootOpening,
}

impl StepWitness {
    pub fn write_vertex(&self) -> Vertex {
        self.write.vertex()
    }

    pub fn post_path(&self) -> &MerklePath {
        &self.write.path
    }

    pub fn opened_blocks(&self) -> usize {
        self.reads.len() + 1
    }
}

/// Lineage of one read block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Provenance {
    /// Never written; recomputable from the seed.
    Init,
    /// Produced by an earlier step, whose own reads are traced further while
    /// depth allows.
    Writer {
        witness: Box<StepWitness>,
        children: Vec<ProvenanceNode>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProvenanceNode {
    pub vertex: Vertex,
    /// The value the consuming step read.
    pub observed: Block,
    pub origin: Provenance,
}

impl ProvenanceNode {
    /// Step witnesses in this subtree, including this node's own.
    pub fn witness_count(&self) -> usize {
        match &self.origin {
            Provenance::Init => 0,
            Provenance::Writer { children, .. } => {
                1 + children
                    .iter()
                    .map(ProvenanceNode::witness_count)
                    .sum::<usize>()
            }
        }
    }

    /// Visits this node and all descendants depth-first.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a ProvenanceNode)) {
        f(self);
        if let Provenance::Writer { children, .. } = &self.origin {
            for c in children {
                c.walk(f);
            }
        }
    }
}

/// Witness for one Fiat-Shamir challenge: the challenged step and, when
/// `R >= 2`, one provenance tree per read block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChallengeWitness {
    pub step: StepWitness,
    pub provenance: Vec<ProvenanceNode>,
}

impl ChallengeWitness {
    /// Blocks opened by this challenge across all its step witnesses.
    pub fn opened_blocks(&self) -> usize {
        let per = self.step.opened_blocks();
        per * (1 + self
            .provenance
            .iter()
            .map(ProvenanceNode::witness_count)
            .sum::<usize>())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Proof {
    pub params: Params,
    pub final_transcript: Digest,
    pub root_commitment: Digest,
    pub witnesses: Vec<ChallengeWitness>,
}

impl Proof {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.put_u8(VERSION);
        out.put_u8(self.params.run.dim.bits() as u8);
        out.put_u64(self.params.run.steps);
        out.put_u16(self.params.run.reads as u16);
        out.put_u16(self.params.challenges as u16);
        out.put_u8(self.params.depth as u8);
        out.put_digest(&self.final_transcript);
        out.put_digest(&self.root_commitment);
        let mut body = Vec::new();
        for w in &self.witnesses {
            body.clear();
            encode_step(&mut body, &w.step);
            for n in &w.provenance {
                encode_node(&mut body, n);
            }
            out.put_u32(body.len() as u32);
            out.extend_from_slice(&body);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Proof, FormatError> {
        let mut r = Reader::new(bytes);
        if r.take(4)? != MAGIC {
            return Err(FormatError::Magic);
        }
        let version = r.u8()?;
        if version != VERSION {
            return Err(FormatError::Version(version));
        }
        let dim_bits = r.u8()? as u32;
        let steps = r.u64()?;
        let reads = r.u16()? as u32;
        let challenges = r.u16()? as u32;
        let depth = r.u8()? as u32;
        let dim = Dim::new(dim_bits).map_err(|e| invalid("d_hc", e))?;
        let run = RunParams { dim, steps, reads };
        let params = Params::new(run, challenges, depth).map_err(|e| invalid("params", e))?;
        let final_transcript = r.digest()?;
        let root_commitment = r.digest()?;

        let shape = Shape {
            reads: reads as usize,
            depth,
        };
        let mut witnesses = Vec::with_capacity(challenges.min(1024) as usize);
        for _ in 0..challenges {
            let len = r.u32()? as usize;
            let mut rec = Reader::new(r.take(len)?);
            let step = decode_step(&mut rec, shape)?;
            let provenance = if depth >= 2 {
                decode_nodes(&mut rec, shape, 1)?
            } else {
                Vec::new()
            };
            rec.finish()?;
            witnesses.push(ChallengeWitness { step, provenance });
        }
        r.finish()?;
        Ok(Proof {
            params,
            final_transcript,
            root_commitment,
            witnesses,
        })
    }
}

fn invalid(field: &'static str, e: impl std::fmt::Display) -> FormatError {
    FormatError::Invalid {
        field,
        detail: e.to_string(),
    }
}

#[derive(Clone, Copy)]
struct Shape {
    reads: usize,
    depth: u32,
}

fn encode_opening(out: &mut Vec<u8>, o: &Opening) {
    out.put_digest(&o.block.data);
    out.put_digest(&o.block.causal);
    o.path.encode_into(out);
}

fn encode_root(out: &mut Vec<u8>, o: &RootOpening) {
    out.put_digest(&o.root);
    o.path.encode_into(out);
}

fn encode_step(out: &mut Vec<u8>, w: &StepWitness) {
    out.put_u64(w.step);
    out.put_digest(&w.prev_transcript);
    for o in &w.reads {
        encode_opening(out, o);
    }
    encode_opening(out, &w.write);
    encode_root(out, &w.before);
    encode_root(out, &w.after);
}

fn encode_node(out: &mut Vec<u8>, n: &ProvenanceNode) {
    out.put_u64(n.vertex.0);
    out.put_digest(&n.observed.data);
    out.put_digest(&n.observed.causal);
    match &n.origin {
        Provenance::Init => out.put_u8(0),
        Provenance::Writer { witness, children } => {
            out.put_u8(1);
            encode_step(out, witness);
            for c in children {
                encode_node(out, c);
            }
        }
    }
}

fn decode_block(r: &mut Reader<'_>) -> Result<Block, FormatError> {
    Ok(Block {
        data: r.digest()?,
        causal: r.digest()?,
    })
}

fn decode_opening(r: &mut Reader<'_>) -> Result<Opening, FormatError> {
    Ok(Opening {
        block: decode_block(r)?,
        path: MerklePath::decode(r)?,
    })
}

fn decode_root(r: &mut Reader<'_>) -> Result<RootOpening, FormatError> {
    Ok(RootOpening {
        root: r.digest()?,
        path: MerklePath::decode(r)?,
    })
}

fn decode_step(r: &mut Reader<'_>, shape: Shape) -> Result<StepWitness, FormatError> {
    let step = r.u64()?;
    let prev_transcript = r.digest()?;
    let reads = (0..shape.reads)
        .map(|_| decode_opening(r))
        .collect::<Result<_, _>>()?;
    Ok(StepWitness {
        step,
        prev_transcript,
        reads,
        write: decode_opening(r)?,
        before: decode_root(r)?,
        after: decode_root(r)?,
    })
}

fn decode_nodes(
    r: &mut Reader<'_>,
    shape: Shape,
    depth: u32,
) -> Result<Vec<ProvenanceNode>, FormatError> {
    (0..shape.reads)
        .map(|_| decode_node(r, shape, depth))
        .collect()
}

fn decode_node(
    r: &mut Reader<'_>,
    shape: Shape,
    depth: u32,
) -> Result<ProvenanceNode, FormatError> {
    let vertex = Vertex(r.u64()?);
    let observed = decode_block(r)?;
    let origin = match r.u8()? {
        0 => Provenance::Init,
        1 => {
            let witness = decode_step(r, shape)?;
            let children = if depth + 1 < shape.depth {
                decode_nodes(r, shape, depth + 1)?
            } else {
                Vec::new()
            };
            Provenance::Writer { witness: Box::new(witness), children }
        }
        tag => {
            return Err(invalid(
                "provenance.tag",
                format!("unknown origin tag {tag}"),
            ))
        }
    };
    Ok(ProvenanceNode {
        vertex,
        observed,
        origin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(leaf: u64, n: usize) -> MerklePath {
        MerklePath {
            leaf,
            siblings: (0..n).map(|i| Digest([i as u8; 32])).collect(),
        }
    }

    fn opening(v: u64) -> Opening {
        Opening {
            block: Block {
                data: Digest([v as u8; 32]),
                causal: Digest([!v as u8; 32]),
            },
            path: path(v, 3),
        }
    }

    fn witness(step: u64, d: usize) -> StepWitness {
        StepWitness {
            step,
            prev_transcript: Digest([step as u8; 32]),
            reads: (0..d as u64).map(opening).collect(),
            write: opening(7),
            before: RootOpening {
                root: Digest([1; 32]),
                path: path(step - 1, 2),
            },
            after: RootOpening {
                root: Digest([2; 32]),
                path: path(step, 2),
            },
        }
    }

    fn sample(depth: u32) -> Proof {
        let d = 2;
        let leaf = |v| ProvenanceNode {
            vertex: Vertex(v),
            observed: opening(v).block,
            origin: Provenance::Init,
        };
        let node = |v: u64, children| ProvenanceNode {
            vertex: Vertex(v),
            observed: opening(v).block,
            origin: Provenance::Writer {
                witness: Box::new(witness(2, d)),
                children,
            },
        };
        let provenance = match depth {
            1 => vec![],
            2 => vec![node(0, vec![]), leaf(1)],
            _ => vec![node(0, vec![leaf(3), node(4, vec![])]), leaf(1)],
        };
        Proof {
            params: Params::new(RunParams::new(3, 4, d as u32).unwrap(), 1, depth).unwrap(),
            final_transcript: Digest([9; 32]),
            root_commitment: Digest([8; 32]),
            witnesses: vec![ChallengeWitness {
                step: witness(3, d),
                provenance,
            }],
        }
    }

    #[test]
    fn roundtrip_at_each_depth() {
        for depth in 1..=3 {
            let p = sample(depth);
            let bytes = p.to_bytes();
            assert_eq!(&bytes[..4], MAGIC);
            assert_eq!(bytes[4], VERSION);
            assert_eq!(Proof::from_bytes(&bytes).unwrap(), p);
        }
    }

    #[test]
    fn header_layout() {
        let b = sample(2).to_bytes();
        assert_eq!(b[5], 3); // d_hc
        assert_eq!(&b[6..14], &4u64.to_le_bytes());
        assert_eq!(&b[14..16], &2u16.to_le_bytes());
        assert_eq!(&b[16..18], &1u16.to_le_bytes());
        assert_eq!(b[18], 2);
        assert_eq!(&b[19..51], &[9u8; 32]);
        assert_eq!(&b[51..83], &[8u8; 32]);
        assert_eq!(HEADER_LEN, 83);
    }

    #[test]
    fn every_truncation_is_a_parse_error() {
        let b = sample(3).to_bytes();
        for cut in 0..b.len() {
            assert!(Proof::from_bytes(&b[..cut]).is_err(), "cut at {cut}");
        }
        let mut long = b.clone();
        long.push(0);
        assert_eq!(Proof::from_bytes(&long), Err(FormatError::Trailing(1)));
    }

    #[test]
    fn bad_magic_version_and_tag() {
        let mut b = sample(2).to_bytes();
        b[0] = b'X';
        assert_eq!(Proof::from_bytes(&b), Err(FormatError::Magic));
        let mut b = sample(2).to_bytes();
        b[4] = 2;
        assert_eq!(Proof::from_bytes(&b), Err(FormatError::Version(2)));
        let p = sample(2);
        let mut b = p.to_bytes();
        // Tag byte of the second (Init) top-level node is the last byte.
        *b.last_mut().unwrap() = 7;
        assert!(matches!(
            Proof::from_bytes(&b),
            Err(FormatError::Invalid {
                field: "provenance.tag",
                ..
            })
        ));
    }

    #[test]
    fn opened_block_counting() {
        // d = 2: challenged step (3 blocks) + two writer witnesses (3 each).
        assert_eq!(sample(3).witnesses[0].opened_blocks(), 9);
        assert_eq!(sample(2).witnesses[0].opened_blocks(), 6);
        assert_eq!(sample(1).witnesses[0].opened_blocks(), 3);
    }
}
