//! Monte-Carlo check of the recomputation cascade: a branching process in
//! which each node's `d` reads miss independently with probability
//! `1 - alpha`, truncated at depth `rho`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::ParamError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CascadeEstimate {
    pub alpha: f64,
    pub rho: u32,
    pub d: u32,
    pub trials: u64,
    pub mean: f64,
    pub std_err: f64,
}

/// Total nodes of one truncated Galton-Watson tree. Generations are drawn
/// whole: `n_l ~ Binomial(d n_{l-1}, 1 - alpha)`.
pub fn cascade_trial(rng: &mut ChaCha8Rng, alpha: f64, rho: u32, d: u32) -> u64 {
    let mut gen = 1u64;
    let mut total = 1u64;
    for _ in 0..rho {
        if gen == 0 {
            break;
        }
        let trials = gen.saturating_mul(d as u64);
        gen = Binomial::new(trials, 1.0 - alpha)
            .expect("probability in [0, 1]")
            .sample(rng);
        total = total.saturating_add(gen);
    }
    total
}

/// Mean tree size over `trials` independent trees. Trial `i` draws from
/// stream `i` of a generator seeded with `seed`, so the result does not
/// depend on how trials are spread over threads.
pub fn cascade_monte_carlo(
    alpha: f64,
    rho: u32,
    d: u32,
    trials: u64,
    seed: u64,
) -> Result<CascadeEstimate, ParamError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(ParamError::Alpha(alpha));
    }
    let (sum, sq) = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            let x = cascade_trial(&mut rng, alpha, rho, d) as u128;
            (x, x * x)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = trials.max(1) as f64;
    let mean = sum as f64 / n;
    let var = (sq as f64 / n - mean * mean).max(0.0);
    Ok(CascadeEstimate {
        alpha,
        rho,
        d,
        trials,
        mean,
        std_err: (var / n).sqrt(),
    })
}
