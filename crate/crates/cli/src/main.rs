//! `posme`: generate, prove, verify, analyze and benchmark sequential
//! memory executions.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use posme::analysis::{
    adaptive_simulate, chernoff_tail, mixing_stats, render_mixing, tmto_simulate, two_proportion_z,
    CascadeTable, Policy, TextTable,
};
use posme::bench::{bench_init, bench_pointer_chase, bench_steps, human_bytes, render_steps};
use posme::engine::{gen_retaining, Retention};
use posme::hashing::derive_seed;
use posme::rundir::{read_run, write_run, RunHeader};
use posme::{Digest, Params, Proof, RunLog, RunParams, Strictness};

#[derive(Parser)]
#[command(
    name = "posme",
    version,
    about = "Proof of sequential memory execution"
)]
struct Cli {
    /// Accept parameters below the production floors.
    #[arg(long, global = true)]
    allow_toy: bool,
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct SeedArgs {
    #[arg(long, required_unless_present = "seed_hex")]
    task_id: Option<String>,
    #[arg(long, required_unless_present = "seed_hex")]
    nonce: Option<String>,
    /// UNSAFE: use a raw 32-byte seed instead of binding the arena to a
    /// task. For test vectors only.
    #[arg(long, conflicts_with_all = ["task_id", "nonce"])]
    seed_hex: Option<String>,
}

impl SeedArgs {
    fn seed(&self) -> Result<Digest, Fail> {
        match (&self.seed_hex, &self.task_id, &self.nonce) {
            (Some(h), _, _) => h
                .parse()
                .map_err(|e| Fail::Usage(anyhow!("--seed-hex: {e}"))),
            (None, Some(t), Some(n)) => Ok(derive_seed(t.as_bytes(), n.as_bytes())),
            _ => Err(Fail::Usage(anyhow!("--task-id and --nonce are required"))),
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the sequential execution and write a run directory.
    Gen {
        #[command(flatten)]
        seed: SeedArgs,
        #[arg(long)]
        d_hc: u32,
        /// Write density; K = rho * 2^d_hc.
        #[arg(long)]
        rho: u64,
        #[arg(long)]
        d: u32,
        #[arg(long)]
        out: PathBuf,
        /// Keep only roots and transcripts.
        #[arg(long)]
        lean: bool,
    },
    /// Build a proof from a run directory.
    Prove {
        run_dir: PathBuf,
        #[arg(short = 'q', long)]
        challenges: u32,
        #[arg(short = 'r', long)]
        depth: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a proof. Exit 0 accept, 1 reject, 2 malformed.
    Verify {
        proof: PathBuf,
        #[command(flatten)]
        seed: SeedArgs,
        /// Expected parameters; any given must match the proof header.
        #[arg(long)]
        d_hc: Option<u32>,
        #[arg(long)]
        rho: Option<u64>,
        #[arg(long)]
        d: Option<u32>,
        #[arg(short = 'q', long)]
        challenges: Option<u32>,
        #[arg(short = 'r', long)]
        depth: Option<u32>,
    },
    /// Read and write distribution of a run.
    Stats { run_dir: PathBuf },
    /// Analytic space-time bounds.
    Bounds {
        /// Storage fraction in [0, 1); a decimal or a ratio such as 1/6.
        #[arg(long = "alpha", value_parser = parse_alpha, num_args = 1.., default_values = ["1/6", "1/4", "1/2", "3/4", "7/8"])]
        alphas: Vec<Alpha>,
        #[arg(long, default_value_t = 4)]
        rho: u32,
        #[arg(long, default_value_t = 8)]
        d: u32,
    },
    /// Simulate a random-subset time-memory trade-off on a run.
    Tmto {
        run_dir: PathBuf,
        #[arg(long, value_parser = parse_alpha)]
        alpha: Alpha,
        #[arg(long, default_value_t = 0)]
        rng_seed: u64,
    },
    /// Compare cache policies on a run.
    Adaptive {
        run_dir: PathBuf,
        #[arg(long, value_parser = parse_alpha)]
        alpha: Alpha,
        #[arg(long, default_value_t = 0)]
        rng_seed: u64,
    },
    /// Timing measurements.
    #[command(subcommand)]
    Bench(BenchCmd),
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Per-step cost and hash fraction.
    Steps {
        #[arg(long, value_delimiter = ',', default_values = ["16", "18", "20"])]
        d_hc: Vec<u32>,
        #[arg(long, default_value_t = 1)]
        rho: u64,
        #[arg(long, default_value_t = 8)]
        d: u32,
        #[arg(long, default_value_t = 3)]
        reps: u32,
    },
    /// Dependent-load latency over a buffer.
    Chase {
        #[arg(long, default_value_t = 1 << 30)]
        bytes: u64,
        #[arg(long, default_value_t = 10_000_000)]
        loads: u64,
        #[arg(long, default_value_t = 0)]
        rng_seed: u64,
    },
    /// Arena initialization time.
    Init {
        #[arg(long)]
        d_hc: u32,
    },
}

#[derive(Clone, Debug)]
struct Alpha {
    value: f64,
    label: String,
}

fn parse_alpha(s: &str) -> Result<Alpha, String> {
    let value = match s.split_once('/') {
        Some((n, d)) => {
            let n: f64 = n.trim().parse().map_err(|e| format!("{e}"))?;
            let d: f64 = d.trim().parse().map_err(|e| format!("{e}"))?;
            n / d
        }
        None => s.trim().parse().map_err(|e| format!("{e}"))?,
    };
    if !(0.0..1.0).contains(&value) {
        return Err(format!("alpha = {s} must lie in [0, 1)"));
    }
    Ok(Alpha {
        value,
        label: s.trim().to_string(),
    })
}

enum Fail {
    Reject,
    Usage(anyhow::Error),
    Internal(anyhow::Error),
}

impl From<anyhow::Error> for Fail {
    fn from(e: anyhow::Error) -> Fail {
        Fail::Internal(e)
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Fail {
    Fail::Usage(e.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail::Reject) => ExitCode::from(1),
        Err(Fail::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Fail::Internal(e)) => {
            eprintln!("internal error: {e:#}");
            ExitCode::from(3)
        }
    }
}

fn mode(cli: &Cli) -> Strictness {
    if cli.allow_toy {
        Strictness::Toy
    } else {
        Strictness::Strict
    }
}

fn emit<T: Serialize>(cli: &Cli, value: &T, text: impl FnOnce() -> String) {
    if cli.json {
        println!(
            "{}",
            serde_json::to_string_pretty(value).expect("report serializes")
        );
    } else {
        print!("{}", text());
    }
}

fn load(dir: &Path) -> Result<(RunHeader, RunLog), Fail> {
    read_run(dir).map_err(|e| usage(anyhow!(e).context(format!("reading {}", dir.display()))))
}

fn load_full(dir: &Path) -> Result<RunLog, Fail> {
    let (_, mut log) = load(dir)?;
    log.rederive_records().map_err(usage)?;
    Ok(log)
}

fn run(cli: &Cli) -> Result<(), Fail> {
    match &cli.cmd {
        Cmd::Gen {
            seed,
            d_hc,
            rho,
            d,
            out,
            lean,
        } => cmd_gen(cli, seed, *d_hc, *rho, *d, out, *lean),
        Cmd::Prove {
            run_dir,
            challenges,
            depth,
            out,
        } => cmd_prove(cli, run_dir, *challenges, *depth, out),
        Cmd::Verify {
            proof,
            seed,
            d_hc,
            rho,
            d,
            challenges,
            depth,
        } => cmd_verify(cli, proof, seed, [*d_hc, *d, *challenges, *depth], *rho),
        Cmd::Stats { run_dir } => {
            let log = load_full(run_dir)?;
            let r = mixing_stats::<f64>(&log);
            emit(cli, &r, || render_mixing(&r));
            Ok(())
        }
        Cmd::Bounds { alphas, rho, d } => cmd_bounds(cli, alphas, *rho, *d),
        Cmd::Tmto {
            run_dir,
            alpha,
            rng_seed,
        } => {
            let log = load_full(run_dir)?;
            let r = tmto_simulate(&log, alpha.value, *rng_seed).map_err(usage)?;
            emit(cli, &r, || {
                format!(
                    "alpha {}  stored {}  honest {} hashes\n\
                     simulated {} (full chain {})  misses {}  mean miss cost {}\n\
                     penalty {} (full chain {})  analytic {}\n",
                    r.alpha,
                    r.stored,
                    r.honest,
                    r.simulated_cost,
                    r.simulated_cost_full_chain,
                    r.misses,
                    r.mean_miss_cost,
                    r.penalty_ratio,
                    r.penalty_ratio_full_chain,
                    r.analytic_ratio
                )
            });
            Ok(())
        }
        Cmd::Adaptive {
            run_dir,
            alpha,
            rng_seed,
        } => cmd_adaptive(cli, run_dir, alpha.value, *rng_seed),
        Cmd::Bench(b) => cmd_bench(cli, b),
    }
}

#[derive(Serialize)]
struct GenSummary {
    out: PathBuf,
    params: RunParams,
    seed: Digest,
    final_transcript: Digest,
    final_root: Digest,
    lean: bool,
}

fn cmd_gen(
    cli: &Cli,
    seed: &SeedArgs,
    d_hc: u32,
    rho: u64,
    d: u32,
    out: &Path,
    lean: bool,
) -> Result<(), Fail> {
    let s = seed.seed()?;
    let params = RunParams::with_density(d_hc, rho, d).map_err(usage)?;
    params.validate(mode(cli)).map_err(usage)?;
    let retention = if lean {
        Retention::Lean
    } else {
        Retention::Full
    };
    let (log, _) = gen_retaining(&s, &params, retention).map_err(usage)?;
    if let Err(t) = log.audit_transcripts() {
        return Err(Fail::Internal(anyhow!("self-audit failed at step {t}")));
    }
    let mut header = RunHeader::new(&log);
    header.task_id = seed.task_id.clone();
    header.nonce = seed.nonce.clone();
    write_run(out, &log, &header).with_context(|| format!("writing {}", out.display()))?;
    let summary = GenSummary {
        out: out.to_path_buf(),
        params,
        seed: s,
        final_transcript: log.final_transcript(),
        final_root: *log.roots.last().expect("r_0 is always present"),
        lean,
    };
    emit(cli, &summary, || {
        format!(
            "wrote {} (N = 2^{}, K = {}, d = {})\nT_K {}\nr_K {}\n",
            out.display(),
            d_hc,
            params.steps,
            d,
            summary.final_transcript,
            summary.final_root
        )
    });
    Ok(())
}

#[derive(Serialize)]
struct ProveSummary {
    out: PathBuf,
    params: Params,
    bytes: usize,
    opened_blocks: u64,
}

fn cmd_prove(cli: &Cli, dir: &Path, q: u32, r: u32, out: &Path) -> Result<(), Fail> {
    let (_, log) = load(dir)?;
    let proof = posme::prove(&log, q, r, mode(cli)).map_err(|e| match e {
        posme::ProveError::SelfAudit { .. } => Fail::Internal(anyhow!(e)),
        _ => usage(e),
    })?;
    let bytes = proof.to_bytes();
    fs::write(out, &bytes).with_context(|| format!("writing {}", out.display()))?;
    let summary = ProveSummary {
        out: out.to_path_buf(),
        params: proof.params,
        bytes: bytes.len(),
        opened_blocks: proof
            .witnesses
            .iter()
            .map(|w| w.opened_blocks() as u64)
            .sum(),
    };
    emit(cli, &summary, || {
        format!(
            "wrote {} ({} bytes, {} opened blocks over {} challenges)\n",
            out.display(),
            summary.bytes,
            summary.opened_blocks,
            q
        )
    });
    Ok(())
}

fn cmd_verify(
    cli: &Cli,
    path: &Path,
    seed: &SeedArgs,
    expect: [Option<u32>; 4],
    rho: Option<u64>,
) -> Result<(), Fail> {
    let s = seed.seed()?;
    let bytes = fs::read(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(usage)?;
    let proof = match Proof::from_bytes(&bytes) {
        Ok(p) => p,
        Err(e) => {
            if cli.json {
                let report = posme::verify(&bytes, &s, &Params::recommended(), mode(cli));
                emit(cli, &report, String::new);
            }
            return Err(Fail::Usage(anyhow!("malformed proof: {e}")));
        }
    };
    let [d_hc, d, q, r] = expect;
    let mut params = proof.params;
    if let Some(b) = d_hc {
        params.run = RunParams::new(b, params.run.steps, params.run.reads).map_err(usage)?;
    }
    if let Some(rho) = rho {
        params.run =
            RunParams::with_density(params.run.dim.bits(), rho, params.run.reads).map_err(usage)?;
    }
    params.run.reads = d.unwrap_or(params.run.reads);
    params.challenges = q.unwrap_or(params.challenges);
    params.depth = r.unwrap_or(params.depth);
    let report = posme::verifier::verify_proof(&proof, &s, &params, mode(cli));
    emit(cli, &report, || match &report.rejection {
        None => "accept\n".into(),
        Some(rej) => match rej.challenge {
            Some(i) => format!("reject: {} (challenge {}): {}\n", rej.check, i, rej.detail),
            None => format!("reject: {}: {}\n", rej.check, rej.detail),
        },
    });
    if report.accepted {
        Ok(())
    } else {
        Err(Fail::Reject)
    }
}

#[derive(Serialize)]
struct BoundsReport {
    table: CascadeTable,
    chernoff: Vec<ChernoffRow>,
}

#[derive(Serialize)]
struct ChernoffRow {
    n_log2: u32,
    delta: f64,
    expected_overloaded: f64,
}

fn cmd_bounds(cli: &Cli, alphas: &[Alpha], rho: u32, d: u32) -> Result<(), Fail> {
    if rho == 0 || d == 0 {
        return Err(usage(anyhow!("--rho and --d must be positive")));
    }
    let values: Vec<f64> = alphas.iter().map(|a| a.value).collect();
    let labels: Vec<String> = alphas.iter().map(|a| a.label.clone()).collect();
    let table = CascadeTable::build(&values, rho, d);
    let chernoff = [16u32, 20, 24]
        .into_iter()
        .map(|b| ChernoffRow {
            n_log2: b,
            delta: 1.0,
            expected_overloaded: chernoff_tail((1u64 << b) as f64, d as f64, rho as f64, 1.0),
        })
        .collect();
    let report = BoundsReport { table, chernoff };
    emit(cli, &report, || {
        let mut t = TextTable::new(&["N", "delta", "E[blocks read > 2 x mean]"]);
        for c in &report.chernoff {
            t.row(vec![
                format!("2^{}", c.n_log2),
                format!("{}", c.delta),
                format!("{}", c.expected_overloaded),
            ]);
        }
        format!(
            "{}\nChernoff tail at d={}, rho={}\n{}",
            report.table.render(&labels),
            d,
            rho,
            t.render()
        )
    });
    Ok(())
}

#[derive(Serialize)]
struct AdaptiveRow {
    #[serde(flatten)]
    report: posme::analysis::AdaptiveReport,
    z_vs_static: f64,
    p_vs_static: f64,
}

fn cmd_adaptive(cli: &Cli, dir: &Path, alpha: f64, seed: u64) -> Result<(), Fail> {
    let log = load_full(dir)?;
    let reports = Policy::ALL
        .iter()
        .map(|&p| adaptive_simulate(&log, alpha, p, seed))
        .collect::<Result<Vec<_>, _>>()
        .map_err(usage)?;
    let base = reports[0];
    let rows: Vec<AdaptiveRow> = reports
        .into_iter()
        .map(|r| {
            let (z, p) = two_proportion_z(r.hits, r.reads, base.hits, base.reads);
            AdaptiveRow {
                report: r,
                z_vs_static: z,
                p_vs_static: p,
            }
        })
        .collect();
    emit(cli, &rows, || {
        let mut t = TextTable::new(&["policy", "stored", "hit rate", "z vs static", "p"]);
        for r in &rows {
            t.row(vec![
                r.report.policy.name().into(),
                r.report.stored.to_string(),
                format!("{}", r.report.hit_rate),
                format!("{}", r.z_vs_static),
                format!("{}", r.p_vs_static),
            ]);
        }
        format!("alpha {alpha}\n{}", t.render())
    });
    Ok(())
}

fn cmd_bench(cli: &Cli, b: &BenchCmd) -> Result<(), Fail> {
    match b {
        BenchCmd::Steps { d_hc, rho, d, reps } => {
            if *reps == 0 {
                return Err(usage(anyhow!("--reps must be positive")));
            }
            let rows = bench_steps(d_hc, *rho, *d, *reps).map_err(usage)?;
            emit(cli, &rows, || render_steps(&rows));
        }
        BenchCmd::Chase {
            bytes,
            loads,
            rng_seed,
        } => {
            if *bytes < 8 || *loads == 0 {
                return Err(usage(anyhow!(
                    "--bytes must be at least 8 and --loads positive"
                )));
            }
            let r = bench_pointer_chase(*bytes, *loads, *rng_seed);
            emit(cli, &r, || {
                format!(
                    "{} buffer: {} ns per dependent load\n",
                    human_bytes(r.arena_bytes),
                    r.ns_per_load
                )
            });
        }
        BenchCmd::Init { d_hc } => {
            let r = bench_init(*d_hc).map_err(usage)?;
            emit(cli, &r, || {
                format!(
                    "2^{} arena ({}): {} s, r_0 {}\n",
                    r.dim,
                    human_bytes(r.arena_bytes),
                    r.seconds,
                    r.root
                )
            });
        }
    }
    Ok(())
}
