//! Table builders and their aligned text rendering. Text cells are the JSON
//! values printed at a fixed significant-figure precision.

use serde::Serialize;

use super::bounds::{cascade_w, st_product, staleness_st_product, staleness_w, Regime};
use super::mixing::MixingReport;

/// Rounds `x` to `sig` significant figures but never below the units digit
/// (2324 stays 2324), then drops trailing zeros (74.03 prints as 74).
pub fn format_sig(x: f64, sig: usize) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".into();
    }
    let digits = x.abs().log10().floor() as i64 + 1;
    let decimals = (sig as i64 - digits).max(0) as usize;
    // Halves round away from zero, as printed tables do (170.5 -> 171).
    let scale = 10f64.powi(decimals as i32);
    let s = format!("{:.decimals$}", (x * scale).round() / scale);
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CascadeRow {
    pub alpha: f64,
    pub branching: f64,
    pub w: f64,
    pub st_over_k2: f64,
    pub regime: Regime,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StalenessRow {
    pub alpha: f64,
    pub w: f64,
    pub w_star: f64,
    pub st_over_k2: f64,
    pub st_star_over_k2: f64,
    pub gain: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CascadeTable {
    pub rho: u32,
    pub d: u32,
    pub rows: Vec<CascadeRow>,
    pub strengthened: Vec<StalenessRow>,
}

impl CascadeTable {
    pub fn build(alphas: &[f64], rho: u32, d: u32) -> CascadeTable {
        let df = d as f64;
        let rows = alphas
            .iter()
            .map(|&a| {
                let m = df * (1.0 - a);
                CascadeRow {
                    alpha: a,
                    branching: m,
                    w: cascade_w(a, rho, df),
                    st_over_k2: st_product(a, rho, df),
                    regime: Regime::of(&m),
                }
            })
            .collect();
        let strengthened = alphas
            .iter()
            .map(|&a| {
                let w = cascade_w(a, rho, df);
                let ws = staleness_w(a, rho, df);
                StalenessRow {
                    alpha: a,
                    w,
                    w_star: ws,
                    st_over_k2: st_product(a, rho, df),
                    st_star_over_k2: staleness_st_product(a, rho, df),
                    gain: ws / w,
                }
            })
            .collect();
        CascadeTable {
            rho,
            d,
            rows,
            strengthened,
        }
    }

    pub fn render(&self, labels: &[String]) -> String {
        let label = |i: usize, a: f64| labels.get(i).cloned().unwrap_or_else(|| format_sig(a, 3));
        let mut t = TextTable::new(&["alpha", "d(1-alpha)", "W", "S*T/K^2", "Regime"]);
        for (i, r) in self.rows.iter().enumerate() {
            t.row(vec![
                label(i, r.alpha),
                format_sig(r.branching, 3),
                format_sig(r.w, 3),
                format_sig(r.st_over_k2, 3),
                r.regime.as_str().into(),
            ]);
        }
        let mut s = TextTable::new(&["alpha", "W", "W*", "S*T/K^2", "S*T/K^2 (W*)", "Gain"]);
        for (i, r) in self.strengthened.iter().enumerate() {
            s.row(vec![
                label(i, r.alpha),
                format_sig(r.w, 2),
                format_sig(r.w_star, 3),
                format_sig(r.st_over_k2, 3),
                format_sig(r.st_star_over_k2, 3),
                format!("{}x", format_sig(r.gain, 2)),
            ]);
        }
        format!(
            "Space-time product at d={}, rho={}\n{}\nTemporal staleness strengthening at d={}, rho={}\n{}",
            self.d,
            self.rho,
            t.render(),
            self.d,
            self.rho,
            s.render()
        )
    }
}

pub fn render_mixing(r: &MixingReport<f64>) -> String {
    let mut t = TextTable::new(&["Metric", "Value", "Expected"]);
    let dr = r.d as f64 * r.rho;
    let pct = |x: f64| format!("{:.4}%", 100.0 * x);
    t.row(vec![
        "Read chi2/df".into(),
        format!("{:.6}", r.read_chi2_per_df),
        "1.000000".into(),
    ]);
    t.row(vec![
        "Write chi2/df".into(),
        format!("{:.6}", r.write_chi2_per_df),
        "1.000000".into(),
    ]);
    t.row(vec![
        "Read sigma".into(),
        format!("{:.4}", r.read_sigma),
        format!("{:.4} (sqrt {})", dr.sqrt(), format_sig(dr, 4)),
    ]);
    t.row(vec![
        "Write sigma".into(),
        format!("{:.4}", r.write_sigma),
        format!("{:.4} (sqrt {})", r.rho.sqrt(), format_sig(r.rho, 4)),
    ]);
    t.row(vec![
        "Unwritten frac.".into(),
        pct(r.unwritten_fraction),
        format!("{} (e^-rho)", pct((-r.rho).exp())),
    ]);
    t.row(vec![
        "Max read / mu".into(),
        format!("{:.2}x", r.max_read_over_mean),
        "< 3x (Chernoff)".into(),
    ]);
    t.row(vec![
        "Max write / mu".into(),
        format!("{:.2}x", r.max_write_over_mean),
        "Poisson tail".into(),
    ]);
    format!(
        "Mixing at N={}, K={}, d={}, rho={}\n{}",
        r.n,
        r.k,
        r.d,
        format_sig(r.rho, 3),
        t.render()
    )
}

/// Left-aligned first column, right-aligned others.
pub struct TextTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl TextTable {
    pub fn new(header: &[&str]) -> TextTable {
        TextTable {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        self.rows.push(cells);
    }

    pub fn render(&self) -> String {
        let cols = self.header.len();
        let mut width = vec![0usize; cols];
        for r in std::iter::once(&self.header).chain(&self.rows) {
            for (w, c) in width.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |r: &Vec<String>| {
            let cells: Vec<String> = r
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    if i == 0 {
                        format!("{c:<w$}", w = width[i])
                    } else {
                        format!("{c:>w$}", w = width[i])
                    }
                })
                .collect();
            cells.join("  ").trim_end().to_string()
        };
        let rule = "-".repeat(width.iter().sum::<usize>() + 2 * (cols - 1));
        let mut out = vec![line(&self.header), rule];
        out.extend(self.rows.iter().map(line));
        out.join("\n") + "\n"
    }
}
