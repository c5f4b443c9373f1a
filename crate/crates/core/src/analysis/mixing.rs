//! Address-uniformity statistics over a run's read and write coordinates.

use num_traits::Float;
use serde::Serialize;

use crate::engine::{RunLog, StepObserver, StepOutcome};
use crate::hashing::Vertex;
use crate::params::RunParams;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MixingReport<T> {
    pub read_chi2_per_df: T,
    pub write_chi2_per_df: T,
    pub read_sigma: T,
    pub write_sigma: T,
    pub unwritten_fraction: T,
    pub max_read_over_mean: T,
    pub max_write_over_mean: T,
    pub n: u64,
    pub k: u64,
    pub d: u32,
    pub rho: T,
}

/// Per-vertex read and write counts. Usable as a [`StepObserver`] so a run
/// can be measured without retaining its step records.
#[derive(Clone, Debug)]
pub struct MixingCounter {
    params: RunParams,
    reads: Vec<u32>,
    writes: Vec<u32>,
    steps: u64,
}

impl MixingCounter {
    pub fn new(params: RunParams) -> MixingCounter {
        let n = params.vertex_count() as usize;
        MixingCounter {
            params,
            reads: vec![0; n],
            writes: vec![0; n],
            steps: 0,
        }
    }

    pub fn record(&mut self, reads: &[Vertex], write: Vertex) {
        for v in reads {
            self.reads[v.as_usize()] += 1;
        }
        self.writes[write.as_usize()] += 1;
        self.steps += 1;
    }

    pub fn read_counts(&self) -> &[u32] {
        &self.reads
    }

    pub fn write_counts(&self) -> &[u32] {
        &self.writes
    }

    pub fn report<T: Float>(&self) -> MixingReport<T> {
        let n = self.reads.len() as u64;
        let d = self.params.reads;
        let f = |x: u64| T::from(x).expect("count fits the scalar");
        let k = self.steps;
        let read = CountStats::<T>::of(&self.reads, f(k * d as u64) / f(n));
        let write = CountStats::<T>::of(&self.writes, f(k) / f(n));
        let unwritten = self.writes.iter().filter(|&&c| c == 0).count() as u64;
        MixingReport {
            read_chi2_per_df: read.chi2_per_df,
            write_chi2_per_df: write.chi2_per_df,
            read_sigma: read.sigma,
            write_sigma: write.sigma,
            unwritten_fraction: f(unwritten) / f(n),
            max_read_over_mean: read.max_over_mean,
            max_write_over_mean: write.max_over_mean,
            n,
            k,
            d,
            rho: f(k) / f(n),
        }
    }
}

impl StepObserver for MixingCounter {
    fn on_step(&mut self, reads: &[Vertex], outcome: &StepOutcome) {
        self.record(reads, outcome.write.vertex);
    }
}

struct CountStats<T> {
    chi2_per_df: T,
    sigma: T,
    max_over_mean: T,
}

impl<T: Float> CountStats<T> {
    /// Goodness of fit against a flat expectation `e`, with `N - 1`
    /// degrees of freedom, and the population spread of the counts.
    fn of(counts: &[u32], e: T) -> CountStats<T> {
        let n = counts.len();
        let to = |c: u32| T::from(c).expect("count fits the scalar");
        // Accumulate in f64 regardless of T; the sums span many magnitudes.
        let ef = e.to_f64().expect("finite");
        let mut ss = 0.0f64;
        let mut max = 0u32;
        for &c in counts {
            let dev = c as f64 - ef;
            ss += dev * dev;
            max = max.max(c);
        }
        let df = (n.max(2) - 1) as f64;
        let nan = T::nan();
        let chi2 = if ef > 0.0 {
            T::from(ss / ef / df).unwrap_or(nan)
        } else {
            nan
        };
        CountStats {
            chi2_per_df: chi2,
            sigma: T::from((ss / n as f64).sqrt()).unwrap_or(nan),
            max_over_mean: if ef > 0.0 { to(max) / e } else { nan },
        }
    }
}

/// Mixing statistics of a recorded run (step records required).
pub fn mixing_stats<T: Float>(log: &RunLog) -> MixingReport<T> {
    let mut c = MixingCounter::new(log.params);
    let d = log.params.reads as usize;
    for (reads, &w) in log.all_reads().chunks(d.max(1)).zip(log.all_writes()) {
        c.record(reads, w);
    }
    c.report()
}
