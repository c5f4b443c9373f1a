//! Executable versions of the security analysis: tradeoff and cascade
//! bounds, their simulations, and address-mixing statistics.

pub mod adaptive;
pub mod bounds;
pub mod cascade;
pub mod mixing;
pub mod tables;
pub mod tmto;

pub use adaptive::{
    adaptive_simulate, staleness_hit_rates, two_proportion_z, AdaptiveReport, Policy,
};
pub use bounds::{
    cascade_w, chernoff_tail, st_product, staleness_st_product, staleness_w, tmto_bound, Regime,
};
pub use cascade::{cascade_monte_carlo, CascadeEstimate};
pub use mixing::{mixing_stats, MixingCounter, MixingReport};
pub use tables::{format_sig, render_mixing, CascadeTable, TextTable};
pub use tmto::{tmto_simulate, TmtoReport};
