//! Time-memory tradeoff: the analytic bound against a direct simulation of
//! an adversary that keeps a fixed random subset of the arena.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::bounds::tmto_bound;
use crate::engine::RunLog;
use crate::error::ParamError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TmtoReport {
    pub alpha: f64,
    pub rho: f64,
    pub d: u32,
    pub stored: u64,
    /// `K d`, the honest read count.
    pub honest: u64,
    pub analytic_bound: f64,
    /// Misses replay the write chain up to the reading step.
    pub simulated_cost: u64,
    /// Misses replay the vertex's full-run write chain.
    pub simulated_cost_full_chain: u64,
    pub misses: u64,
    pub mean_miss_cost: f64,
    pub penalty_ratio: f64,
    pub penalty_ratio_full_chain: f64,
    pub analytic_ratio: f64,
}

/// Replays the run's read trace against an adversary storing a uniformly
/// random set of `floor(alpha N)` vertices. A stored read costs 1; a miss
/// costs `2c + 1` where `c` is the number of earlier writes to the vertex.
pub fn tmto_simulate(log: &RunLog, alpha: f64, seed: u64) -> Result<TmtoReport, ParamError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(ParamError::Alpha(alpha));
    }
    let p = log.params;
    let n = p.vertex_count() as usize;
    let stored = ((alpha * n as f64).floor() as usize).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_set = vec![false; n];
    for v in rand::seq::index::sample(&mut rng, n, stored) {
        in_set[v] = true;
    }

    let mut writes_so_far = vec![0u64; n];
    let final_writes = {
        let mut w = vec![0u64; n];
        for v in log.all_writes() {
            w[v.as_usize()] += 1;
        }
        w
    };
    let (mut cost, mut cost_full, mut misses) = (0u64, 0u64, 0u64);
    let d = p.reads as usize;
    for (reads, w) in log.all_reads().chunks(d.max(1)).zip(log.all_writes()) {
        for v in reads {
            let i = v.as_usize();
            if in_set[i] {
                cost += 1;
                cost_full += 1;
            } else {
                misses += 1;
                cost += 2 * writes_so_far[i] + 1;
                cost_full += 2 * final_writes[i] + 1;
            }
        }
        writes_so_far[w.as_usize()] += 1;
    }
    let honest = p.steps * p.reads as u64;
    let rho = p.rho();
    let analytic = tmto_bound(alpha, rho, p.reads as f64, p.steps as f64);
    let ratio = |x: f64| {
        if honest == 0 {
            f64::NAN
        } else {
            x / honest as f64
        }
    };
    Ok(TmtoReport {
        alpha,
        rho,
        d: p.reads,
        stored: stored as u64,
        honest,
        analytic_bound: analytic,
        simulated_cost: cost,
        simulated_cost_full_chain: cost_full,
        misses,
        mean_miss_cost: if misses == 0 {
            f64::NAN
        } else {
            (cost - (honest - misses)) as f64 / misses as f64
        },
        penalty_ratio: ratio(cost as f64),
        penalty_ratio_full_chain: ratio(cost_full as f64),
        analytic_ratio: ratio(analytic),
    })
}
