//! Protocol parameters and their validity gate.

use serde::{Deserialize, Serialize};

use crate::error::ParamError;
use crate::hashing::Dim;

/// Whether the production floors are enforced.
///
/// `Strict` requires `K >= N`, `d >= 4`, `Q >= 64` and `R >= 2`. `Toy`
/// keeps only the structural constraints so small arenas and short runs
/// can be exercised in tests.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Strictness {
    #[default]
    Strict,
    Toy,
}

pub const MIN_READS: u32 = 4;
pub const MIN_CHALLENGES: u32 = 64;
pub const MIN_DEPTH: u32 = 2;

// Widths of the proof header fields.
pub const MAX_READS: u32 = u16::MAX as u32;
pub const MAX_CHALLENGES: u32 = u16::MAX as u32;
pub const MAX_DEPTH: u32 = u8::MAX as u32;

/// Parameters of the sequential execution: arena dimension `d_hc`,
/// step count `K` and reads per step `d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunParams {
    pub dim: Dim,
    pub steps: u64,
    pub reads: u32,
}

impl RunParams {
    pub fn new(dim_bits: u32, steps: u64, reads: u32) -> Result<RunParams, ParamError> {
        let p = RunParams {
            dim: Dim::new(dim_bits)?,
            steps,
            reads,
        };
        p.validate(Strictness::Toy)?;
        Ok(p)
    }

    /// `K = rho * N`.
    pub fn with_density(dim_bits: u32, rho: u64, reads: u32) -> Result<RunParams, ParamError> {
        let dim = Dim::new(dim_bits)?;
        let steps = rho
            .checked_mul(dim.vertex_count())
            .ok_or(ParamError::TooLarge {
                name: "K",
                value: u64::MAX,
                max: u64::MAX,
            })?;
        RunParams::new(dim_bits, steps, reads)
    }

    /// Production scale: `N = 2^24`, `K = 4N`, `d = 8`.
    pub fn recommended() -> RunParams {
        RunParams {
            dim: Dim::new(24).unwrap(),
            steps: 4 << 24,
            reads: 8,
        }
    }

    pub fn vertex_count(&self) -> u64 {
        self.dim.vertex_count()
    }

    /// Write density `rho = K / N`.
    pub fn rho(&self) -> f64 {
        self.steps as f64 / self.vertex_count() as f64
    }

    pub fn validate(&self, mode: Strictness) -> Result<(), ParamError> {
        if self.dim.bits() == 0 {
            return Err(ParamError::Dimension(0));
        }
        if self.reads == 0 {
            return Err(below("d", 0, 1, ""));
        }
        if self.reads > MAX_READS {
            return Err(ParamError::TooLarge {
                name: "d",
                value: self.reads as u64,
                max: MAX_READS as u64,
            });
        }
        if mode == Strictness::Strict {
            if self.steps < self.vertex_count() {
                return Err(below(
                    "K",
                    self.steps,
                    self.vertex_count(),
                    " (write density must be >= 1)",
                ));
            }
            if self.reads < MIN_READS {
                return Err(below("d", self.reads as u64, MIN_READS as u64, TOY_HINT));
            }
        }
        Ok(())
    }
}

const TOY_HINT: &str = " (pass the toy override for desk-scale runs)";

fn below(name: &'static str, value: u64, floor: u64, hint: &'static str) -> ParamError {
    ParamError::BelowFloor {
        name,
        value,
        floor,
        hint,
    }
}

/// Full parameter set for proving and verification: the run parameters
/// plus challenge count `Q` and provenance depth `R`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Params {
    pub run: RunParams,
    pub challenges: u32,
    pub depth: u32,
}

impl Params {
    pub fn new(run: RunParams, challenges: u32, depth: u32) -> Result<Params, ParamError> {
        let p = Params {
            run,
            challenges,
            depth,
        };
        p.validate(Strictness::Toy)?;
        Ok(p)
    }

    pub fn recommended() -> Params {
        Params {
            run: RunParams::recommended(),
            challenges: 128,
            depth: 3,
        }
    }

    pub fn validate(&self, mode: Strictness) -> Result<(), ParamError> {
        self.run.validate(mode)?;
        if self.depth == 0 {
            return Err(below("R", 0, 1, ""));
        }
        if self.challenges > MAX_CHALLENGES {
            return Err(ParamError::TooLarge {
                name: "Q",
                value: self.challenges as u64,
                max: MAX_CHALLENGES as u64,
            });
        }
        if self.depth > MAX_DEPTH {
            return Err(ParamError::TooLarge {
                name: "R",
                value: self.depth as u64,
                max: MAX_DEPTH as u64,
            });
        }
        if self.challenges > 0 && self.run.steps == 0 {
            return Err(ParamError::NoStepsToChallenge);
        }
        if mode == Strictness::Strict {
            if self.challenges < MIN_CHALLENGES {
                return Err(below(
                    "Q",
                    self.challenges as u64,
                    MIN_CHALLENGES as u64,
                    TOY_HINT,
                ));
            }
            if self.depth < MIN_DEPTH {
                return Err(below("R", self.depth as u64, MIN_DEPTH as u64, TOY_HINT));
            }
        }
        Ok(())
    }

    /// Upper bound on blocks opened per challenge: `sum_{l<R} d^l (d+1)`.
    pub fn blocks_per_challenge(&self) -> u64 {
        blocks_per_challenge(self.run.reads as u64, self.depth)
    }
}

/// `B = sum_{l=0}^{R-1} d^l (d+1)`, saturating on overflow.
pub fn blocks_per_challenge(d: u64, depth: u32) -> u64 {
    let mut total = 0u64;
    let mut width = 1u64;
    for _ in 0..depth {
        total = total.saturating_add(width.saturating_mul(d + 1));
        width = width.saturating_mul(d);
    }
    total
}
