//! Adaptive caching adversaries. Between steps the stored set may be
//! rebuilt from anything seen so far; reads are then scored as hits or
//! misses against the set held when the step began.

use std::collections::BTreeSet;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::engine::RunLog;
use crate::error::ParamError;
use crate::hashing::Vertex;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    /// One uniformly random set, fixed for the whole run.
    Static,
    /// A fresh uniformly random set before every step.
    Random,
    /// The vertices written most recently.
    MostRecentlyWritten,
    /// The vertices read most often so far.
    MostFrequentlyRead,
}

impl Policy {
    pub const ALL: [Policy; 4] = [
        Policy::Static,
        Policy::Random,
        Policy::MostRecentlyWritten,
        Policy::MostFrequentlyRead,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Policy::Static => "static",
            Policy::Random => "random",
            Policy::MostRecentlyWritten => "most-recently-written",
            Policy::MostFrequentlyRead => "most-frequently-read",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AdaptiveReport {
    pub policy: Policy,
    pub alpha: f64,
    pub stored: u64,
    pub reads: u64,
    pub hits: u64,
    pub hit_rate: f64,
}

/// A stored set of fixed size `m` with a membership test.
trait Cache {
    fn contains(&self, v: Vertex) -> bool;
    /// Called once per step after its reads have been scored.
    fn after_step(&mut self, reads: &[Vertex], write: Vertex, rng: &mut ChaCha8Rng);
}

struct Fixed(Vec<bool>);

impl Fixed {
    fn random(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Fixed {
        let mut s = vec![false; n];
        for v in rand::seq::index::sample(rng, n, m) {
            s[v] = true;
        }
        Fixed(s)
    }
}

impl Cache for Fixed {
    fn contains(&self, v: Vertex) -> bool {
        self.0[v.as_usize()]
    }

    fn after_step(&mut self, _: &[Vertex], _: Vertex, _: &mut ChaCha8Rng) {}
}

/// A uniformly random `m`-subset per step, represented as the preimage of
/// `[0, m)` under a random affine bijection of `Z_N` (odd multiplier).
struct Reshuffled {
    n: u64,
    m: u64,
    a: u64,
    b: u64,
}

impl Reshuffled {
    fn draw(&mut self, rng: &mut ChaCha8Rng) {
        self.a = rng.random::<u64>() | 1;
        self.b = rng.random::<u64>();
    }
}

impl Cache for Reshuffled {
    fn contains(&self, v: Vertex) -> bool {
        (self.a.wrapping_mul(v.0).wrapping_add(self.b) & (self.n - 1)) < self.m
    }

    fn after_step(&mut self, _: &[Vertex], _: Vertex, rng: &mut ChaCha8Rng) {
        self.draw(rng);
    }
}

/// Keeps the `m` members with the largest keys; ties broken by vertex.
struct TopM {
    key: Vec<u64>,
    member: Vec<bool>,
    inside: BTreeSet<(u64, u64)>,
    outside: BTreeSet<(u64, u64)>,
}

impl TopM {
    /// Starts from a random `m`-set, all keys zero, members ranked first.
    fn new(n: usize, m: usize, rng: &mut ChaCha8Rng) -> TopM {
        let Fixed(member) = Fixed::random(n, m, rng);
        let mut t = TopM {
            key: vec![0; n],
            member,
            inside: BTreeSet::new(),
            outside: BTreeSet::new(),
        };
        for v in 0..n {
            if t.member[v] {
                t.key[v] = 1;
                t.inside.insert((1, v as u64));
            } else {
                t.outside.insert((0, v as u64));
            }
        }
        t
    }

    fn set_key(&mut self, v: usize, key: u64) {
        let old = (self.key[v], v as u64);
        self.key[v] = key;
        let new = (key, v as u64);
        if self.member[v] {
            self.inside.remove(&old);
            self.inside.insert(new);
        } else {
            self.outside.remove(&old);
            self.outside.insert(new);
        }
        self.rebalance();
    }

    fn rebalance(&mut self) {
        while let (Some(&lo), Some(&hi)) = (self.inside.first(), self.outside.last()) {
            if hi <= lo {
                break;
            }
            self.inside.pop_first();
            self.outside.pop_last();
            self.member[lo.1 as usize] = false;
            self.member[hi.1 as usize] = true;
            self.outside.insert(lo);
            self.inside.insert(hi);
        }
    }
}

struct Recent {
    top: TopM,
    clock: u64,
}

impl Cache for Recent {
    fn contains(&self, v: Vertex) -> bool {
        self.top.member[v.as_usize()]
    }

    fn after_step(&mut self, _: &[Vertex], write: Vertex, _: &mut ChaCha8Rng) {
        self.clock += 1;
        self.top.set_key(write.as_usize(), self.clock);
    }
}

struct Frequent(TopM);

impl Cache for Frequent {
    fn contains(&self, v: Vertex) -> bool {
        self.0.member[v.as_usize()]
    }

    fn after_step(&mut self, reads: &[Vertex], _: Vertex, _: &mut ChaCha8Rng) {
        for v in reads {
            let i = v.as_usize();
            let k = self.0.key[i] + 1;
            self.0.set_key(i, k);
        }
    }
}

/// Scores every read of the run against the set `policy` holds when the
/// read's step begins.
pub fn adaptive_simulate(
    log: &RunLog,
    alpha: f64,
    policy: Policy,
    seed: u64,
) -> Result<AdaptiveReport, ParamError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(ParamError::Alpha(alpha));
    }
    let n = log.params.vertex_count() as usize;
    let m = ((alpha * n as f64).floor() as usize).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cache: Box<dyn Cache> = match policy {
        Policy::Static => Box::new(Fixed::random(n, m, &mut rng)),
        Policy::Random => {
            let mut r = Reshuffled {
                n: n as u64,
                m: m as u64,
                a: 1,
                b: 0,
            };
            r.draw(&mut rng);
            Box::new(r)
        }
        Policy::MostRecentlyWritten => Box::new(Recent {
            top: TopM::new(n, m, &mut rng),
            clock: 1,
        }),
        Policy::MostFrequentlyRead => Box::new(Frequent(TopM::new(n, m, &mut rng))),
    };
    let d = log.params.reads as usize;
    let (mut reads, mut hits) = (0u64, 0u64);
    for (rs, &w) in log.all_reads().chunks(d.max(1)).zip(log.all_writes()) {
        for &v in rs {
            reads += 1;
            hits += cache.contains(v) as u64;
        }
        cache.after_step(rs, w, &mut rng);
    }
    Ok(AdaptiveReport {
        policy,
        alpha,
        stored: m as u64,
        reads,
        hits,
        hit_rate: if reads == 0 {
            f64::NAN
        } else {
            hits as f64 / reads as f64
        },
    })
}

/// Two-sided two-proportion z-test with pooled variance. Returns `(z, p)`.
pub fn two_proportion_z(hits_a: u64, n_a: u64, hits_b: u64, n_b: u64) -> (f64, f64) {
    let (pa, pb) = (hits_a as f64 / n_a as f64, hits_b as f64 / n_b as f64);
    let pool = (hits_a + hits_b) as f64 / (n_a + n_b) as f64;
    let se = (pool * (1.0 - pool) * (1.0 / n_a as f64 + 1.0 / n_b as f64)).sqrt();
    if se == 0.0 {
        return (0.0, if pa == pb { 1.0 } else { 0.0 });
    }
    let z = (pa - pb) / se;
    let p = 2.0 * (1.0 - Normal::standard().cdf(z.abs()));
    (z, p)
}

/// Hit rate of a static random set on reads whose value would have to be
/// reconstructed as of `level * N` steps earlier: a stored copy only helps
/// if the vertex was not rewritten in that window.
pub fn staleness_hit_rates(
    log: &RunLog,
    alpha: f64,
    levels: u32,
    seed: u64,
) -> Result<Vec<f64>, ParamError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(ParamError::Alpha(alpha));
    }
    let n = log.params.vertex_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let set = Fixed::random(n as usize, (alpha * n as f64).floor() as usize, &mut rng);
    let d = log.params.reads as usize;
    let rates = (0..=levels)
        .map(|l| {
            let lag = l as u64 * n;
            let (mut reads, mut hits) = (0u64, 0u64);
            for (i, rs) in log.all_reads().chunks(d.max(1)).enumerate() {
                let t = i as u64 + 1;
                if t <= lag {
                    continue;
                }
                for &v in rs {
                    reads += 1;
                    if set.contains(v) {
                        let ws = log.writes_to(v);
                        let lo = ws.partition_point(|&w| w < t - lag);
                        let hi = ws.partition_point(|&w| w < t);
                        hits += (lo == hi) as u64;
                    }
                }
            }
            if reads == 0 {
                f64::NAN
            } else {
                hits as f64 / reads as f64
            }
        })
        .collect();
    Ok(rates)
}
