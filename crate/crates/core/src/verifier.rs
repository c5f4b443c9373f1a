//! Classical verification. Holds no arena: every value it checks arrives
//! in the proof with a Merkle path, or is recomputed from the seed.

use std::fmt;

use serde::Serialize;

use crate::arena::{initial_block, Block};
use crate::commitment::{leaf_hash, root_path_len, verify_path, verify_root};
use crate::engine::{bound_block, chase};
use crate::hashing::{derive_write_coord, fiat_shamir_sigma, fiat_shamir_step, Digest, Vertex};
use crate::params::{Params, Strictness};
use crate::proof::{Proof, Provenance, ProvenanceNode, StepWitness};

/// Named verification checks, in evaluation order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    /// Bytes do not decode.
    Parse,
    /// Header parameters differ from the expected ones or are unacceptable.
    Params,
    /// `r_{s-1}` and `r_s` are not the committed roots at the re-derived step.
    RootMembership,
    /// A read or pre-write opening does not hold against `r_{s-1}`.
    PreState,
    /// The cursor chain from `T_{s-1}` addresses different vertices.
    ReadCoords,
    /// The write coordinate, bound block or updated root disagrees with `r_s`.
    RootMatches,
    /// A read block's lineage does not check out.
    Provenance,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Check::Parse => "parse",
            Check::Params => "params",
            Check::RootMembership => "root-membership",
            Check::PreState => "pre-state",
            Check::ReadCoords => "read-coords",
            Check::RootMatches => "root-matches",
            Check::Provenance => "provenance",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Rejection {
    /// 0-based challenge index, absent for whole-proof failures.
    pub challenge: Option<u32>,
    pub check: Check,
    pub detail: String,
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.challenge {
            Some(i) => write!(
                f,
                "challenge {i}: {} check failed: {}",
                self.check, self.detail
            ),
            None => write!(f, "{} check failed: {}", self.check, self.detail),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct VerifyReport {
    pub accepted: bool,
    pub rejection: Option<Rejection>,
}

impl VerifyReport {
    fn accept() -> VerifyReport {
        VerifyReport {
            accepted: true,
            rejection: None,
        }
    }

    fn reject(challenge: Option<u32>, check: Check, detail: impl Into<String>) -> VerifyReport {
        VerifyReport {
            accepted: false,
            rejection: Some(Rejection {
                challenge,
                check,
                detail: detail.into(),
            }),
        }
    }

    pub fn check(&self) -> Option<Check> {
        self.rejection.as_ref().map(|r| r.check)
    }
}

/// Verifies `bytes` as a proof of a run from `seed` under `params`.
/// Stops at the first failed check.
pub fn verify(bytes: &[u8], seed: &Digest, params: &Params, mode: Strictness) -> VerifyReport {
    match Proof::from_bytes(bytes) {
        Ok(p) => verify_proof(&p, seed, params, mode),
        Err(e) => VerifyReport::reject(None, Check::Parse, e.to_string()),
    }
}

pub fn verify_proof(
    proof: &Proof,
    seed: &Digest,
    params: &Params,
    mode: Strictness,
) -> VerifyReport {
    if let Err(e) = params.validate(mode) {
        return VerifyReport::reject(None, Check::Params, e.to_string());
    }
    if proof.params != *params {
        return VerifyReport::reject(
            None,
            Check::Params,
            format!("proof is for {:?}, expected {:?}", proof.params, params),
        );
    }
    let ctx = Ctx {
        seed,
        params,
        c: &proof.root_commitment,
    };
    let sigma = fiat_shamir_sigma(&proof.final_transcript, &proof.root_commitment);
    for (i, w) in proof.witnesses.iter().enumerate() {
        let s = fiat_shamir_step(&sigma, i as u64 + 1, params.run.steps);
        if let Err((check, detail)) = ctx.challenge(s, &w.step, &w.provenance) {
            return VerifyReport::reject(Some(i as u32), check, detail);
        }
    }
    VerifyReport::accept()
}

type Fail = (Check, String);

struct Ctx<'a> {
    seed: &'a Digest,
    params: &'a Params,
    c: &'a Digest,
}

impl Ctx<'_> {
    fn challenge(
        &self,
        s: u64,
        w: &StepWitness,
        provenance: &[ProvenanceNode],
    ) -> Result<(), Fail> {
        self.step(s, w)?;
        self.lineage(w, provenance, 1).map_err(|(path, detail)| {
            let at: Vec<String> = path.iter().rev().map(|j| j.to_string()).collect();
            (
                Check::Provenance,
                format!("read {}: {detail}", at.join(".")),
            )
        })
    }

    /// Root membership through root matching for witness `w` claimed to
    /// execute step `s`.
    /// Returns the post-write block.
    fn step(&self, s: u64, w: &StepWitness) -> Result<Block, Fail> {
        let run = &self.params.run;
        let dim = run.dim;

        if w.step != s {
            return Err((
                Check::RootMembership,
                format!("witness is for step {}, challenged step is {s}", w.step),
            ));
        }
        for (t, o, name) in [(s - 1, &w.before, "r_{s-1}"), (s, &w.after, "r_s")] {
            if !verify_root(self.c, run.steps, t, &o.root, &o.path) {
                return Err((
                    Check::RootMembership,
                    format!("{name} at index {t} is not committed in C"),
                ));
            }
        }

        if w.reads.len() != run.reads as usize {
            return Err((
                Check::PreState,
                format!("{} read openings, expected {}", w.reads.len(), run.reads),
            ));
        }
        for (j, o) in w.reads.iter().enumerate() {
            if !verify_path(&w.before.root, dim, o.vertex(), &o.block, &o.path) {
                return Err((
                    Check::PreState,
                    format!(
                        "read {j} at vertex {} does not open under r_{{s-1}}",
                        o.path.leaf
                    ),
                ));
            }
        }
        if !verify_path(
            &w.before.root,
            dim,
            w.write.vertex(),
            &w.write.block,
            &w.write.path,
        ) {
            return Err((
                Check::PreState,
                format!(
                    "pre-write block at vertex {} does not open",
                    w.write.path.leaf
                ),
            ));
        }

        // The served blocks are the opened ones; each address must match the
        // opening it was served from.
        let mut coords = vec![Vertex(0); w.reads.len()];
        let cursor = chase(w.prev_transcript, dim, &mut coords, |j, _| w.reads[j].block);
        if let Some(j) = (0..coords.len()).find(|&j| coords[j] != w.reads[j].vertex()) {
            return Err((
                Check::ReadCoords,
                format!(
                    "read {j} derives vertex {}, witness opened {}",
                    coords[j].0, w.reads[j].path.leaf
                ),
            ));
        }

        let v_w = derive_write_coord(&cursor, dim);
        if v_w != w.write_vertex() {
            return Err((
                Check::RootMatches,
                format!(
                    "write coordinate derives to {}, witness opened {}",
                    v_w.0, w.write.path.leaf
                ),
            ));
        }
        let new = bound_block(&w.write.block, &cursor, s);
        let r_post = w.post_path().root_from(leaf_hash(v_w, &new));
        if r_post != w.after.root {
            return Err((Check::RootMatches, "updated root differs from r_s".into()));
        }
        Ok(new)
    }

    /// Provenance check over the provenance trees of `consumer`'s reads. Errors carry
    /// the read-index path (innermost first) and a description.
    fn lineage(
        &self,
        consumer: &StepWitness,
        nodes: &[ProvenanceNode],
        level: u32,
    ) -> Result<(), (Vec<usize>, String)> {
        let expect = if level < self.params.depth {
            consumer.reads.len()
        } else {
            0
        };
        if nodes.len() != expect {
            return Err((
                vec![],
                format!(
                    "{} provenance nodes at depth {level}, expected {expect}",
                    nodes.len()
                ),
            ));
        }
        for (j, (n, read)) in nodes.iter().zip(&consumer.reads).enumerate() {
            let here = |d: String| (vec![j], d);
            if n.vertex != read.vertex() {
                return Err(here(format!(
                    "node names vertex {}, the step read {}",
                    n.vertex.0, read.path.leaf
                )));
            }
            if n.observed != read.block {
                return Err(here("observed block differs from the opened read".into()));
            }
            match &n.origin {
                Provenance::Init => {
                    if initial_block(self.seed, n.vertex) != n.observed {
                        return Err(here(format!(
                            "vertex {} is not its seed-derived initial block",
                            n.vertex.0
                        )));
                    }
                }
                Provenance::Writer { witness, children } => {
                    let w = witness.step;
                    if w == 0 || w >= consumer.step {
                        return Err(here(format!(
                            "writer step {w} does not precede step {}",
                            consumer.step
                        )));
                    }
                    let post = self
                        .step(w, witness)
                        .map_err(|(check, d)| here(format!("writer step {w}: {check}: {d}")))?;
                    if witness.write_vertex() != n.vertex {
                        return Err(here(format!(
                            "writer step {w} wrote vertex {}, not {}",
                            witness.write.path.leaf, n.vertex.0
                        )));
                    }
                    if post != n.observed {
                        return Err(here(format!("writer step {w} produced a different block")));
                    }
                    self.lineage(witness, children, level + 1)
                        .map_err(|(mut p, d)| {
                            p.push(j);
                            (p, d)
                        })?;
                }
            }
        }
        Ok(())
    }
}

/// Closed-form hash count of a verification in which every provenance node
/// is a writer step: `1 + Q (1 + W p)` with `W = sum_{l<R} d^l` step
/// witnesses per challenge and `p = 2(1 + L_C) + (d+2)(1 + d_hc) + 2d + 3`
/// hashes per witness. Exact for `R = 1`; init-terminated nodes replace a
/// witness by a skip-chain walk of `2(bit_length(v) + 1)` hashes.
pub fn verify_cost_estimate(params: &Params) -> u64 {
    let d = params.run.reads as u64;
    let dim = params.run.dim.bits() as u64;
    let l_c = root_path_len(params.run.steps + 1) as u64;
    let per = 2 * (1 + l_c) + (d + 2) * (1 + dim) + 2 * d + 3;
    let mut w = 0u64;
    let mut width = 1u64;
    for _ in 0..params.depth {
        w = w.saturating_add(width);
        width = width.saturating_mul(d);
    }
    1 + params.challenges as u64 * (1 + w.saturating_mul(per))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::gen;
    use crate::hashing::count_hashes;
    use crate::params::RunParams;
    use crate::prover::prove;

    fn setup(dim: u32, rho: u64, q: u32, r: u32) -> (Digest, Params, Vec<u8>) {
        let seed = Digest([0x5a; 32]);
        let run = RunParams::with_density(dim, rho, 4).unwrap();
        let (log, _) = gen(&seed, &run).unwrap();
        let proof = prove(&log, q, r, Strictness::Toy).unwrap();
        (seed, Params::new(run, q, r).unwrap(), proof.to_bytes())
    }

    #[test]
    fn honest_proofs_accept() {
        for r in 1..=3 {
            let (seed, params, bytes) = setup(8, 4, 8, r);
            let rep = verify(&bytes, &seed, &params, Strictness::Toy);
            assert!(rep.accepted, "R={r}: {:?}", rep.rejection);
        }
    }

    #[test]
    fn wrong_seed_fails_provenance() {
        let (_, params, bytes) = setup(8, 4, 8, 2);
        let rep = verify(&bytes, &Digest([1; 32]), &params, Strictness::Toy);
        assert_eq!(rep.check(), Some(Check::Provenance));
    }

    #[test]
    fn header_must_match_expected_params() {
        let (seed, params, bytes) = setup(8, 4, 8, 2);
        let other = Params {
            challenges: 9,
            ..params
        };
        assert_eq!(
            verify(&bytes, &seed, &other, Strictness::Toy).check(),
            Some(Check::Params)
        );
        assert_eq!(
            verify(&bytes, &seed, &params, Strictness::Strict).check(),
            Some(Check::Params)
        );
        assert_eq!(
            verify(&bytes[..40], &seed, &params, Strictness::Toy).check(),
            Some(Check::Parse)
        );
    }

    #[test]
    fn cost_estimate_is_exact_without_provenance() {
        for (dim, q) in [(8u32, 1u32), (8, 5), (11, 3)] {
            let (seed, params, bytes) = setup(dim, 4, q, 1);
            let proof = Proof::from_bytes(&bytes).unwrap();
            let (rep, n) = count_hashes(|| verify_proof(&proof, &seed, &params, Strictness::Toy));
            assert!(rep.accepted);
            assert_eq!(n, verify_cost_estimate(&params), "d_hc={dim} Q={q}");
        }
    }

    #[test]
    fn cost_estimate_scales_linearly_in_q() {
        let p = |q| Params::new(RunParams::new(24, 1 << 26, 8).unwrap(), q, 2).unwrap();
        let one = verify_cost_estimate(&p(1)) - 1;
        assert_eq!(verify_cost_estimate(&p(128)) - 1, 128 * one);
    }
}
