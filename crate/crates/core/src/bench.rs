//! Timing harness: step latency, the share of it spent hashing, a pure
//! dependent-load chase, and arena initialization.
//!
//! Timings are side-cars; nothing here feeds back into a run's outputs.

use std::hint::black_box;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::arena::init_arena;
use crate::engine::Machine;
use crate::error::ParamError;
use crate::hashing::{capture_hash_inputs, count_hashes, replay_hash_inputs, Digest, Dim};
use crate::params::RunParams;

/// How the hash fraction is obtained; carried in every report.
pub const HASH_FRACTION_METHOD: &str =
    "separate replay: median time to re-hash the recorded inputs of a step window over median full-step time";

/// Steps whose hash inputs are captured for the replay.
const HASH_WINDOW: u64 = 1 << 14;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchReport {
    pub dim: u32,
    pub arena_bytes: u64,
    pub steps: u64,
    pub reads: u32,
    pub reps: u32,
    pub ns_per_step: f64,
    pub hash_ns_per_step: f64,
    pub hash_fraction: f64,
    pub hash_calls_per_step: f64,
    pub method: &'static str,
    pub pinned: bool,
    pub machine: String,
    pub timestamp: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum BenchOutcome {
    Measured(BenchReport),
    Skipped { dim: u32, reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChaseReport {
    pub arena_bytes: u64,
    pub loads: u64,
    pub ns_per_load: f64,
    pub total_ns: u64,
    pub pinned: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InitReport {
    pub dim: u32,
    pub arena_bytes: u64,
    pub seconds: f64,
    pub root: Digest,
}

/// Free text describing the host.
pub fn machine_descriptor() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|m| m.trim().to_string())
        })
        .unwrap_or_else(|| std::env::consts::ARCH.to_string());
    let threads = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    format!(
        "{cpu}; {threads} hardware threads; {}",
        std::env::consts::OS
    )
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Pins the calling thread to the CPU it is running on. Returns whether
/// the platform honored it.
pub fn pin_current_thread() -> bool {
    #[cfg(target_os = "linux")]
    unsafe {
        let cpu = libc::sched_getcpu();
        if cpu < 0 {
            return false;
        }
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        libc::CPU_SET(cpu as usize, &mut set);
        libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &set) == 0
    }
    #[cfg(not(target_os = "linux"))]
    {
        false
    }
}

/// `MemAvailable` in bytes, where the platform reports it.
fn available_memory() -> Option<u64> {
    let s = std::fs::read_to_string("/proc/meminfo").ok()?;
    let line = s.lines().find(|l| l.starts_with("MemAvailable:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Arena plus tree: 64 bytes per block and 64 per leaf/internal pair.
fn working_set(dim: Dim) -> u64 {
    dim.vertex_count() * 128
}

fn bench_seed(dim: u32) -> Digest {
    crate::hashing::derive_seed(b"posme-bench", &dim.to_le_bytes())
}

/// Times `K = rho N` steps at each arena dimension, `reps` times each, and
/// reports medians. The hash share comes from replaying the exact hash
/// inputs of the first `min(K, 2^14)` steps.
pub fn bench_steps(
    dims: &[u32],
    rho: u64,
    d: u32,
    reps: u32,
) -> Result<Vec<BenchOutcome>, ParamError> {
    let pinned = pin_current_thread();
    let machine = machine_descriptor();
    let mut out = Vec::new();
    for &dim_bits in dims {
        let params = RunParams::with_density(dim_bits, rho, d)?;
        if let Some(avail) = available_memory() {
            let need = working_set(params.dim);
            if need > avail / 10 * 9 {
                out.push(BenchOutcome::Skipped {
                    dim: dim_bits,
                    reason: format!("needs {need} bytes, {avail} available"),
                });
                continue;
            }
        }
        let seed = bench_seed(dim_bits);
        let k = params.steps;
        let mut step_ns = Vec::new();
        for _ in 0..reps.max(1) {
            let mut m = Machine::from_genesis(init_arena(&seed, params.dim)?, d);
            let start = Instant::now();
            for _ in 0..k {
                black_box(m.advance());
            }
            step_ns.push(start.elapsed().as_nanos() as f64 / k.max(1) as f64);
        }

        let window = k.min(HASH_WINDOW);
        let mut m = Machine::from_genesis(init_arena(&seed, params.dim)?, d);
        let (calls, inputs) = capture_hash_inputs(|| {
            count_hashes(|| {
                for _ in 0..window {
                    m.advance();
                }
            })
            .1
        });
        assert_eq!(
            calls,
            inputs.len() as u64,
            "hash replay must cover every call"
        );
        let mut hash_ns = Vec::new();
        for _ in 0..reps.max(1) {
            let start = Instant::now();
            let (acc, replayed) = count_hashes(|| replay_hash_inputs(&inputs));
            let elapsed = start.elapsed();
            black_box(acc);
            assert_eq!(
                replayed, calls,
                "replay must perform the same number of hash calls"
            );
            hash_ns.push(elapsed.as_nanos() as f64 / window.max(1) as f64);
        }
        let ns_per_step = median(step_ns);
        let hash_ns_per_step = median(hash_ns);
        out.push(BenchOutcome::Measured(BenchReport {
            dim: dim_bits,
            arena_bytes: params.vertex_count() * 64,
            steps: k,
            reads: d,
            reps: reps.max(1),
            ns_per_step,
            hash_ns_per_step,
            hash_fraction: hash_ns_per_step / ns_per_step,
            hash_calls_per_step: calls as f64 / window.max(1) as f64,
            method: HASH_FRACTION_METHOD,
            pinned,
            machine: machine.clone(),
            timestamp: unix_now(),
        }));
    }
    Ok(out)
}

/// One cache line per node; only `next` is used.
#[derive(Clone, Copy)]
#[repr(C, align(64))]
struct Node {
    next: u64,
    _pad: [u64; 7],
}

/// Builds a single random cycle over `n` nodes (Sattolo's shuffle), so
/// following `next` from any node visits all of them.
fn sattolo_cycle(n: usize, seed: u64) -> Vec<Node> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<u64> = (0..n as u64).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..i);
        perm.swap(i, j);
    }
    let mut nodes = vec![
        Node {
            next: 0,
            _pad: [0; 7]
        };
        n
    ];
    for (i, &p) in perm.iter().enumerate() {
        nodes[i].next = p;
    }
    nodes
}

fn chase(nodes: &[Node], loads: u64) -> (u64, Duration) {
    let mut i = 0usize;
    let start = Instant::now();
    for _ in 0..loads {
        i = black_box(nodes[i].next) as usize;
    }
    (i as u64, start.elapsed())
}

/// Mean latency of `loads` serialized loads over an arena of
/// `arena_bytes` (rounded down to whole 64-byte nodes, at least 2).
pub fn bench_pointer_chase(arena_bytes: u64, loads: u64, seed: u64) -> ChaseReport {
    let pinned = pin_current_thread();
    let n = ((arena_bytes / 64) as usize).max(2);
    let nodes = sattolo_cycle(n, seed);
    // One untimed lap warms the page tables.
    black_box(chase(&nodes, (n as u64).min(loads)));
    let (_, t) = chase(&nodes, loads);
    let total_ns = t.as_nanos() as u64;
    ChaseReport {
        arena_bytes: n as u64 * 64,
        loads,
        ns_per_load: total_ns as f64 / loads.max(1) as f64,
        total_ns,
        pinned,
    }
}

/// Wall time of a full arena initialization including the tree.
pub fn bench_init(dim_bits: u32) -> Result<InitReport, ParamError> {
    let dim = Dim::new(dim_bits)?;
    let start = Instant::now();
    let g = init_arena(&bench_seed(dim_bits), dim)?;
    let seconds = start.elapsed().as_secs_f64();
    Ok(InitReport {
        dim: dim_bits,
        arena_bytes: g.arena.byte_len() as u64,
        seconds,
        root: g.root,
    })
}

pub fn render_steps(rows: &[BenchOutcome]) -> String {
    let mut t = crate::analysis::tables::TextTable::new(&[
        "Arena",
        "K",
        "Step (ns)",
        "Hash (ns)",
        "Hash %",
    ]);
    for r in rows {
        match r {
            BenchOutcome::Measured(b) => t.row(vec![
                human_bytes(b.arena_bytes),
                b.steps.to_string(),
                format!("{:.0}", b.ns_per_step),
                format!("{:.0}", b.hash_ns_per_step),
                format!("{:.1}", 100.0 * b.hash_fraction),
            ]),
            BenchOutcome::Skipped { dim, reason } => t.row(vec![
                format!("2^{dim} blocks"),
                "-".into(),
                "skipped".into(),
                reason.clone(),
                "-".into(),
            ]),
        }
    }
    t.render()
}

pub fn human_bytes(b: u64) -> String {
    const UNITS: [&str; 5] = ["B", "KiB", "MiB", "GiB", "TiB"];
    let mut x = b as f64;
    let mut u = 0;
    while x >= 1024.0 && u + 1 < UNITS.len() {
        x /= 1024.0;
        u += 1;
    }
    if x.fract() == 0.0 {
        format!("{x:.0} {}", UNITS[u])
    } else {
        format!("{x:.1} {}", UNITS[u])
    }
}
