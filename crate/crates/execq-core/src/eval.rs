//! Baselines, P&L accounting and reporting.
//!
//! Evaluation prices child orders at the start of each second; training
//! rewards revalue inventory against the next second. The two accountings
//! are intentionally kept distinct.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::PolicyGrid;
use crate::env::{admissible_actions, EnvConfig};
use crate::error::{Error, Result};
use crate::features::{compute_qv, FeatureConfig, FeatureSet, RawState};
use crate::market_data::{EpisodeWindow, HourLabel};
use crate::nn::QNetworkParams;

/// Even schedule: `floor(q0/N)` per period with the remainder spread one
/// lot each over the earliest periods; always sums to `q0`.
pub fn twap_schedule(q0: u32, periods: usize) -> Vec<u32> {
    let n = periods.max(1) as u32;
    let base = q0 / n;
    let rem = q0 % n;
    (0..n).map(|k| base + u32::from(k < rem)).collect()
}

/// An action source evaluated against a window.
pub trait ExecutionPolicy {
    fn decide(&self, state: &RawState, admissible: &[u32]) -> Result<u32>;
}

/// Plays a fixed per-period schedule (clamped to remaining inventory).
pub struct SchedulePolicy {
    schedule: Vec<u32>,
}

impl SchedulePolicy {
    pub fn new(schedule: Vec<u32>) -> Self {
        Self { schedule }
    }

    pub fn twap(q0: u32, periods: usize) -> Self {
        Self::new(twap_schedule(q0, periods))
    }
}

impl ExecutionPolicy for SchedulePolicy {
    fn decide(&self, state: &RawState, _admissible: &[u32]) -> Result<u32> {
        Ok(self.schedule.get(state.k).copied().unwrap_or(0).min(state.q))
    }
}

/// Plays the frozen network greedily.
pub struct GreedyPolicy<'a> {
    pub params: &'a QNetworkParams,
    pub env: &'a EnvConfig,
    pub features: &'a FeatureConfig,
    pub set: FeatureSet,
}

impl ExecutionPolicy for GreedyPolicy<'_> {
    fn decide(&self, state: &RawState, _admissible: &[u32]) -> Result<u32> {
        crate::agent::select_greedy(self.params, state, self.env, self.features, self.set)
    }
}

/// Outcome of running one policy over one window.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyRun {
    /// P&L with transaction cost: start-of-second proceeds minus the
    /// per-second quadratic penalty, terminal liquidation included under
    /// the same accounting.
    pub pnl: f64,
    /// Period actions actually taken.
    pub actions: Vec<u32>,
    /// Inventory force-liquidated after the horizon.
    pub q_left_at_terminal: u32,
}

/// Evaluates a policy on a window. Pure in (policy, window, config).
pub fn run_policy(
    policy: &dyn ExecutionPolicy,
    window: &EpisodeWindow,
    cfg: &EnvConfig,
) -> Result<PolicyRun> {
    cfg.validate()?;
    if window.spec() != cfg.window_spec() {
        return Err(Error::Validation(
            "window geometry does not match env config".into(),
        ));
    }
    let m = cfg.seconds_per_period;
    let a = cfg.penalty_a;
    let p0 = window.price(0);
    let mut qv_prev = compute_qv(window.leading_prices())?;
    let mut q = cfg.q0;
    let mut pnl = 0.0;
    let mut actions = Vec::with_capacity(cfg.periods);
    for k in 0..cfg.periods {
        let t0 = (k * m) as i64;
        let state = RawState {
            k,
            q,
            price: window.price(t0),
            hour_start_price: p0,
            qv_prev,
        };
        let admissible = admissible_actions(q, k, cfg);
        let x = policy.decide(&state, &admissible)?;
        if !admissible.contains(&x) {
            return Err(Error::Domain(format!(
                "policy chose inadmissible action {x} (q={q}, k={k})"
            )));
        }
        let child = f64::from(x) / m as f64;
        for i in 0..m as i64 {
            pnl += child * window.price(t0 + i) - a * child * child;
        }
        let period_prices: Vec<f64> = (t0..=t0 + m as i64).map(|t| window.price(t)).collect();
        qv_prev = compute_qv(&period_prices)?;
        q -= x;
        actions.push(x);
    }
    // Remaining lots go in the single post-horizon second, undivided.
    let q_left = q;
    if q_left > 0 {
        let p_t = window.price(cfg.trading_seconds() as i64);
        let qf = f64::from(q_left);
        pnl += qf * p_t - a * qf * qf;
    }
    Ok(PolicyRun {
        pnl,
        actions,
        q_left_at_terminal: q_left,
    })
}

/// Relative performance in basis points.
pub fn delta_pnl(model: f64, twap: f64) -> Result<f64> {
    if twap == 0.0 {
        return Err(Error::Undefined(
            "delta P&L undefined for zero benchmark P&L".into(),
        ));
    }
    Ok((model - twap) / twap * 1e4)
}

/// Model-vs-benchmark outcome for one evaluated window.
#[derive(Debug, Clone, PartialEq)]
pub struct HourResult {
    pub date: String,
    pub hour: HourLabel,
    pub model_pnl: f64,
    pub twap_pnl: f64,
    pub delta_bps: f64,
}

pub const HOUR_RESULT_CSV_HEADER: &str = "date,hour,model_pnl,twap_pnl,delta_bps";

impl HourResult {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.date, self.hour, self.model_pnl, self.twap_pnl, self.delta_bps
        )
    }
}

/// How the gain-loss ratio degenerated, if it did.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlrFlag {
    Normal,
    /// No negative samples: GLR is +infinity (stored as `None`).
    NoLosses,
    /// No positive samples: GLR is 0.
    NoGains,
    /// Every sample is exactly zero.
    AllZero,
}

/// Distribution summary of the relative performance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub n: usize,
    pub median: f64,
    pub mean: f64,
    /// Sample standard deviation (n-1); 0 for a single sample.
    pub std: f64,
    /// Mean positive delta over mean |negative| delta; `None` encodes
    /// +infinity (see `glr_flag`). Zeros count on neither side.
    pub glr: Option<f64>,
    pub glr_flag: GlrFlag,
    /// Fraction of samples strictly above zero.
    pub win_prob: f64,
    pub zero_count: usize,
}

fn median_of(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Summary statistics over per-window relative performance.
pub fn summarize(results: &[HourResult]) -> Result<SummaryStats> {
    if results.is_empty() {
        return Err(Error::Argument("cannot summarize zero results".into()));
    }
    let deltas: Vec<f64> = results.iter().map(|r| r.delta_bps).collect();
    let n = deltas.len();
    let mut sorted = deltas.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean = deltas.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (deltas.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let gains: Vec<f64> = deltas.iter().copied().filter(|&d| d > 0.0).collect();
    let losses: Vec<f64> = deltas.iter().copied().filter(|&d| d < 0.0).collect();
    let zero_count = n - gains.len() - losses.len();
    let (glr, glr_flag) = match (gains.is_empty(), losses.is_empty()) {
        (false, false) => {
            let g = gains.iter().sum::<f64>() / gains.len() as f64;
            let l = -losses.iter().sum::<f64>() / losses.len() as f64;
            (Some(g / l), GlrFlag::Normal)
        }
        (false, true) => (None, GlrFlag::NoLosses),
        (true, false) => (Some(0.0), GlrFlag::NoGains),
        (true, true) => (None, GlrFlag::AllZero),
    };
    Ok(SummaryStats {
        n,
        median: median_of(&sorted),
        mean,
        std,
        glr,
        glr_flag,
        win_prob: gains.len() as f64 / n as f64,
        zero_count,
    })
}

/// Fixed-width histogram with Freedman-Diaconis bin width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    /// `counts.len() + 1` edges; bin i covers `[edges[i], edges[i+1])`,
    /// the last bin closed on the right.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

pub const HISTOGRAM_CSV_HEADER: &str = "bin_left,bin_right,count";

impl Histogram {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(HISTOGRAM_CSV_HEADER);
        out.push('\n');
        for (i, c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", self.edges[i], self.edges[i + 1], c));
        }
        out
    }
}

fn quartiles(sorted: &[f64]) -> (f64, f64) {
    // Linear interpolation between closest ranks.
    let q = |p: f64| -> f64 {
        let pos = p * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    };
    (q(0.25), q(0.75))
}

/// Builds the histogram of pooled values with Freedman-Diaconis width
/// `2 * IQR / n^(1/3)`; degenerate spreads collapse to a single bin.
pub fn histogram_fd(values: &[f64]) -> Result<Histogram> {
    if values.is_empty() {
        return Err(Error::Argument("cannot bin zero values".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
    let (q1, q3) = quartiles(&sorted);
    let iqr = q3 - q1;
    let fd = 2.0 * iqr / (values.len() as f64).cbrt();
    let span = max - min;
    if span == 0.0 || fd <= 0.0 {
        // Everything identical (or IQR zero): one bin covering the data.
        let width = if span > 0.0 { span } else { 1.0 };
        return Ok(Histogram {
            bin_width: width,
            edges: vec![min, min + width],
            counts: vec![values.len() as u64],
        });
    }
    let bins = (span / fd).ceil().max(1.0) as usize;
    let edges: Vec<f64> = (0..=bins).map(|i| min + fd * i as f64).collect();
    let mut counts = vec![0u64; bins];
    for &v in values {
        let mut idx = ((v - min) / fd).floor() as usize;
        if idx >= bins {
            idx = bins - 1;
        }
        counts[idx] += 1;
    }
    Ok(Histogram {
        bin_width: fd,
        edges,
        counts,
    })
}

/// Versioned on-disk summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub schema_version: u32,
    pub stats: SummaryStats,
    pub histogram: Histogram,
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Paths written by [`emit_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReportPaths {
    pub summary_json: PathBuf,
    pub per_hour_csv: PathBuf,
    pub histogram_csv: PathBuf,
}

/// Writes the summary JSON, per-hour CSV and delta-P&L histogram CSV.
pub fn emit_report(
    stats: &SummaryStats,
    results: &[HourResult],
    histogram: &Histogram,
    out_dir: &Path,
) -> Result<ReportPaths> {
    fs::create_dir_all(out_dir)?;
    let summary = ReportSummary {
        schema_version: REPORT_SCHEMA_VERSION,
        stats: stats.clone(),
        histogram: histogram.clone(),
    };
    let summary_json = out_dir.join("summary.json");
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::Validation(format!("summary serialization: {e}")))?;
    fs::write(&summary_json, json)?;

    let per_hour_csv = out_dir.join("per_hour.csv");
    let mut csv = String::from(HOUR_RESULT_CSV_HEADER);
    csv.push('\n');
    for r in results {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    fs::write(&per_hour_csv, csv)?;

    let histogram_csv = out_dir.join("delta_pnl_histogram.csv");
    fs::write(&histogram_csv, histogram.to_csv())?;

    Ok(ReportPaths {
        summary_json,
        per_hour_csv,
        histogram_csv,
    })
}

pub const POLICY_GRID_CSV_HEADER: &str = "k,q,price_bucket,qv_bucket,action";

/// Writes one CSV per (price bucket, qv bucket) pair; returns the paths.
pub fn write_policy_grid(grid: &PolicyGrid, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut paths = Vec::new();
    for pb in 0..grid.price_levels.len() {
        for qb in 0..grid.qv_levels.len() {
            let path = out_dir.join(format!("policy_p{pb}_q{qb}.csv"));
            let mut csv = String::from(POLICY_GRID_CSV_HEADER);
            csv.push('\n');
            for c in grid
                .cells
                .iter()
                .filter(|c| c.price_bucket == pb && c.qv_bucket == qb)
            {
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    c.k, c.q, c.price_bucket, c.qv_bucket, c.action
                ));
            }
            fs::write(&path, csv)?;
            paths.push(path);
        }
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::{synth_windows, SynthModel, SynthSpec};
    use approx::assert_relative_eq;

    fn result(delta: f64) -> HourResult {
        HourResult {
            date: "d".into(),
            hour: HourLabel::Synthetic,
            model_pnl: 0.0,
            twap_pnl: 1.0,
            delta_bps: delta,
        }
    }

    #[test]
    fn twap_schedule_examples() {
        assert_eq!(twap_schedule(20, 5), vec![4, 4, 4, 4, 4]);
        assert_eq!(twap_schedule(7, 5), vec![2, 2, 1, 1, 1]);
        assert_eq!(twap_schedule(0, 4), vec![0, 0, 0, 0]);
    }

    fn const_env() -> EnvConfig {
        EnvConfig {
            q0: 20,
            periods: 5,
            seconds_per_period: 720,
            terminal_seconds: 1,
            penalty_a: 0.01,
            lot_multiple: 1,
            strict_terminal: false,
        }
    }

    fn const_window(p: f64, cfg: &EnvConfig) -> EpisodeWindow {
        EpisodeWindow::from_prices(
            "const",
            HourLabel::Synthetic,
            vec![p; cfg.window_spec().total_points()],
            cfg.window_spec(),
        )
        .unwrap()
    }

    #[test]
    fn run_policy_constant_price_no_penalty() {
        let cfg = EnvConfig {
            penalty_a: 0.0,
            ..const_env()
        };
        let w = const_window(10.0, &cfg);
        let run = run_policy(&SchedulePolicy::twap(20, 5), &w, &cfg).unwrap();
        assert_relative_eq!(run.pnl, 200.0, max_relative = 1e-12);
        assert_eq!(run.q_left_at_terminal, 0);
    }

    #[test]
    fn run_policy_twap_closed_form() {
        let cfg = const_env();
        let w = const_window(10.0, &cfg);
        let run = run_policy(&SchedulePolicy::twap(20, 5), &w, &cfg).unwrap();
        let expected = 200.0 - 0.01 * (4.0 / 720.0_f64).powi(2) * 3600.0;
        assert_relative_eq!(run.pnl, expected, max_relative = 1e-12);
    }

    #[test]
    fn run_policy_zero_schedule_is_terminal_only() {
        let cfg = const_env();
        let w = const_window(10.0, &cfg);
        let run = run_policy(&SchedulePolicy::new(vec![0; 5]), &w, &cfg).unwrap();
        assert_eq!(run.q_left_at_terminal, 20);
        assert_relative_eq!(run.pnl, 200.0 - 0.01 * 400.0, max_relative = 1e-12);
    }

    #[test]
    fn delta_pnl_examples() {
        assert_eq!(delta_pnl(200.0, 200.0).unwrap(), 0.0);
        assert_relative_eq!(delta_pnl(200.2, 200.0).unwrap(), 10.0, max_relative = 1e-9);
        assert_relative_eq!(delta_pnl(199.8, 200.0).unwrap(), -10.0, max_relative = 1e-9);
        assert!(matches!(delta_pnl(1.0, 0.0), Err(Error::Undefined(_))));
    }

    #[test]
    fn summarize_symmetric_pair() {
        let s = summarize(&[result(1.0), result(-1.0)]).unwrap();
        assert_eq!(s.mean, 0.0);
        assert_eq!(s.glr, Some(1.0));
        assert_eq!(s.glr_flag, GlrFlag::Normal);
        assert_eq!(s.win_prob, 0.5);
    }

    #[test]
    fn summarize_hand_example() {
        let s = summarize(&[result(2.0), result(4.0), result(-1.0)]).unwrap();
        assert_relative_eq!(s.mean, 5.0 / 3.0, max_relative = 1e-12);
        assert_relative_eq!(s.glr.unwrap(), 3.0, max_relative = 1e-12);
        assert_relative_eq!(s.win_prob, 2.0 / 3.0, max_relative = 1e-12);
        assert_eq!(s.median, 2.0);
    }

    #[test]
    fn summarize_degenerate_sides() {
        let s = summarize(&[result(1.0), result(2.0)]).unwrap();
        assert_eq!(s.glr, None);
        assert_eq!(s.glr_flag, GlrFlag::NoLosses);
        assert_eq!(s.win_prob, 1.0);

        let s = summarize(&[result(-1.0), result(-2.0)]).unwrap();
        assert_eq!(s.glr, Some(0.0));
        assert_eq!(s.glr_flag, GlrFlag::NoGains);

        let s = summarize(&[result(0.0), result(0.0)]).unwrap();
        assert_eq!(s.glr_flag, GlrFlag::AllZero);
        assert_eq!(s.zero_count, 2);
    }

    #[test]
    fn summarize_negation_swaps_glr_and_win_prob() {
        let deltas = [3.0, -1.5, 0.0, 2.0, -4.0, 1.0];
        let a = summarize(&deltas.iter().map(|&d| result(d)).collect::<Vec<_>>()).unwrap();
        let b = summarize(&deltas.iter().map(|&d| result(-d)).collect::<Vec<_>>()).unwrap();
        assert_relative_eq!(
            a.glr.unwrap(),
            1.0 / b.glr.unwrap(),
            max_relative = 1e-12
        );
        let zeros_share = a.zero_count as f64 / deltas.len() as f64;
        assert_relative_eq!(
            b.win_prob,
            1.0 - a.win_prob - zeros_share,
            max_relative = 1e-12
        );
    }

    #[test]
    fn twap_on_martingale_has_unbiased_pnl() {
        let cfg = EnvConfig {
            q0: 20,
            periods: 5,
            seconds_per_period: 30,
            ..const_env()
        };
        let spec = SynthSpec {
            model: SynthModel::Martingale,
            vol: 0.01,
            p0: 10.0,
        };
        let windows = synth_windows(&spec, cfg.window_spec(), 200, 77).unwrap();
        let twap = SchedulePolicy::twap(cfg.q0, cfg.periods);
        let pnls: Vec<f64> = windows
            .iter()
            .map(|w| run_policy(&twap, w, &cfg).unwrap().pnl)
            .collect();
        let n = pnls.len() as f64;
        let mean = pnls.iter().sum::<f64>() / n;
        let var = pnls.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        let penalty: f64 = twap_schedule(cfg.q0, cfg.periods)
            .iter()
            .map(|&x| {
                let c = f64::from(x) / cfg.seconds_per_period as f64;
                cfg.penalty_a * c * c * cfg.seconds_per_period as f64
            })
            .sum();
        let expected = 20.0 * 10.0 - penalty;
        assert!(
            (mean - expected).abs() < 4.0 * se,
            "mean {mean} expected {expected} se {se}"
        );
    }

    #[test]
    fn histogram_buckets_and_empty_bins() {
        let values = [0.0, 0.1, 0.2, 5.0];
        let h = histogram_fd(&values).unwrap();
        assert_eq!(h.counts.iter().sum::<u64>(), 4);
        assert!(h.counts.iter().any(|&c| c == 0), "expected an empty bin");
        assert_eq!(h.edges.len(), h.counts.len() + 1);

        let constant = [2.0, 2.0, 2.0];
        let h = histogram_fd(&constant).unwrap();
        assert_eq!(h.counts, vec![3]);
    }

    #[test]
    fn report_round_trip_and_headers() {
        let results = vec![result(1.0), result(-2.0), result(0.5)];
        let stats = summarize(&results).unwrap();
        let hist = histogram_fd(&[1.0, -2.0, 0.5]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let paths = emit_report(&stats, &results, &hist, dir.path()).unwrap();
        let text = std::fs::read_to_string(&paths.summary_json).unwrap();
        let parsed: ReportSummary = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed.stats, stats);
        let csv = std::fs::read_to_string(&paths.per_hour_csv).unwrap();
        assert!(csv.starts_with("date,hour,model_pnl,twap_pnl,delta_bps\n"));
        assert_eq!(csv.lines().count(), 4);
        let hcsv = std::fs::read_to_string(&paths.histogram_csv).unwrap();
        assert!(hcsv.starts_with("bin_left,bin_right,count\n"));
    }

}
