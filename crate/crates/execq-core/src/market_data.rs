//! Second-level midprice series: loading, validation, window slicing and
//! synthetic generation.
//!
//! A series is stored on a dense one-second grid. Duplicate seconds in the
//! input collapse to the last value, missing seconds are forward-filled and
//! flagged, and windows whose filled fraction exceeds a threshold are
//! rejected at slicing time.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::DateTime;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Prices are floored here so a synthetic path can never violate the
/// positive-midprice invariant.
const MIN_PRICE: f64 = 1e-9;

/// One observation on the one-second grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PricePoint {
    /// Seconds since the Unix epoch.
    pub timestamp: i64,
    /// Midprice in currency units, strictly positive.
    pub midprice: f64,
}

/// A gap-free one-second midprice series for a single instrument.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    instrument: String,
    start_ts: i64,
    prices: Vec<f64>,
    /// True where the value was forward-filled rather than observed.
    filled: Vec<bool>,
}

impl PriceSeries {
    /// Builds a series from raw points: collapses duplicate seconds to the
    /// last value, rejects decreasing timestamps, forward-fills gaps.
    pub fn from_points(instrument: &str, points: &[PricePoint]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Validation(format!(
                "series needs at least 2 points, got {}",
                points.len()
            )));
        }
        for p in points {
            if !(p.midprice > 0.0) || !p.midprice.is_finite() {
                return Err(Error::Validation(format!(
                    "non-positive midprice {} at t={}",
                    p.midprice, p.timestamp
                )));
            }
        }
        // Collapse duplicates, keeping the last value for each second.
        let mut dedup: Vec<PricePoint> = Vec::with_capacity(points.len());
        for p in points {
            match dedup.last_mut() {
                Some(last) if last.timestamp == p.timestamp => last.midprice = p.midprice,
                Some(last) if last.timestamp > p.timestamp => {
                    return Err(Error::Validation(format!(
                        "non-monotone timestamps: {} after {}",
                        p.timestamp, last.timestamp
                    )));
                }
                _ => dedup.push(*p),
            }
        }
        if dedup.len() < 2 {
            return Err(Error::Validation(
                "series needs at least 2 distinct seconds".into(),
            ));
        }
        let start_ts = dedup[0].timestamp;
        let len = (dedup.last().unwrap().timestamp - start_ts) as usize + 1;
        let mut prices = Vec::with_capacity(len);
        let mut filled = Vec::with_capacity(len);
        let mut it = dedup.iter().peekable();
        let mut current = dedup[0].midprice;
        for t in start_ts..=dedup.last().unwrap().timestamp {
            if let Some(p) = it.peek() {
                if p.timestamp == t {
                    current = p.midprice;
                    prices.push(current);
                    filled.push(false);
                    it.next();
                    continue;
                }
            }
            prices.push(current);
            filled.push(true);
        }
        Ok(Self {
            instrument: instrument.to_string(),
            start_ts,
            prices,
            filled,
        })
    }

    pub fn instrument(&self) -> &str {
        &self.instrument
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    pub fn start_ts(&self) -> i64 {
        self.start_ts
    }

    pub fn end_ts(&self) -> i64 {
        self.start_ts + self.prices.len() as i64 - 1
    }

    /// Price at an absolute timestamp, if covered.
    pub fn price_at(&self, ts: i64) -> Option<f64> {
        if ts < self.start_ts || ts > self.end_ts() {
            return None;
        }
        Some(self.prices[(ts - self.start_ts) as usize])
    }

    /// Number of forward-filled seconds over the whole series.
    pub fn filled_count(&self) -> usize {
        self.filled.iter().filter(|&&f| f).count()
    }

    /// Number of forward-filled seconds in `[ts0, ts1]` inclusive.
    pub fn filled_in_range(&self, ts0: i64, ts1: i64) -> usize {
        let lo = (ts0.max(self.start_ts) - self.start_ts) as usize;
        let hi = (ts1.min(self.end_ts()) - self.start_ts) as usize;
        if lo > hi {
            return 0;
        }
        self.filled[lo..=hi].iter().filter(|&&f| f).count()
    }

    pub fn points(&self) -> impl Iterator<Item = PricePoint> + '_ {
        self.prices.iter().enumerate().map(move |(i, &p)| PricePoint {
            timestamp: self.start_ts + i as i64,
            midprice: p,
        })
    }

    /// Canonical CSV form (the same schema accepted by [`load_price_series`]).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("timestamp_s,midprice\n");
        for p in self.points() {
            out.push_str(&format!("{},{}\n", p.timestamp, p.midprice));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

/// Which trading hour a window was cut from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HourLabel {
    Hour(u8),
    Synthetic,
}

impl fmt::Display for HourLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HourLabel::Hour(h) => write!(f, "{h}"),
            HourLabel::Synthetic => write!(f, "synthetic"),
        }
    }
}

/// Geometry of an episode window in seconds: one leading period for the
/// initial quadratic-variation estimate, the trading horizon, and the
/// trailing liquidation extension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub lead_seconds: usize,
    pub trading_seconds: usize,
    pub terminal_seconds: usize,
}

impl WindowSpec {
    /// Total covered seconds (number of points minus one).
    pub fn total_seconds(&self) -> usize {
        self.lead_seconds + self.trading_seconds + self.terminal_seconds
    }

    pub fn total_points(&self) -> usize {
        self.total_seconds() + 1
    }
}

/// One episode's worth of prices: leading period, trading horizon and the
/// single liquidation second, on a relative clock where second 0 is the
/// first decision time.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeWindow {
    date: String,
    hour: HourLabel,
    prices: Vec<f64>,
    spec: WindowSpec,
}

impl EpisodeWindow {
    pub fn from_prices(
        date: &str,
        hour: HourLabel,
        prices: Vec<f64>,
        spec: WindowSpec,
    ) -> Result<Self> {
        if prices.len() != spec.total_points() {
            return Err(Error::Validation(format!(
                "window must cover exactly {} seconds ({} points), got {} points",
                spec.total_seconds(),
                spec.total_points(),
                prices.len()
            )));
        }
        if prices.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
            return Err(Error::Validation("window contains non-positive price".into()));
        }
        Ok(Self {
            date: date.to_string(),
            hour,
            prices,
            spec,
        })
    }

    pub fn date(&self) -> &str {
        &self.date
    }

    pub fn hour(&self) -> HourLabel {
        self.hour
    }

    pub fn spec(&self) -> WindowSpec {
        self.spec
    }

    /// Price at trading-relative second `t` in
    /// `[-lead_seconds, trading_seconds + terminal_seconds]`.
    ///
    /// Panics when `t` is outside the window; callers are expected to stay
    /// on the episode clock.
    pub fn price(&self, t: i64) -> f64 {
        let idx = t + self.spec.lead_seconds as i64;
        assert!(
            idx >= 0 && (idx as usize) < self.prices.len(),
            "window time {t} outside [-{}, {}]",
            self.spec.lead_seconds,
            self.spec.trading_seconds + self.spec.terminal_seconds
        );
        self.prices[idx as usize]
    }

    /// The leading-period prices (lead_seconds + 1 points ending at second 0).
    pub fn leading_prices(&self) -> &[f64] {
        &self.prices[..=self.spec.lead_seconds]
    }
}

/// One skipped (date, hour) pair and why.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkipEntry {
    pub date: String,
    pub hour: u8,
    pub reason: String,
}

impl SkipEntry {
    pub fn csv_row(&self) -> String {
        format!("{},{},{}", self.date, self.hour, self.reason)
    }
}

fn date_label(day_start_ts: i64) -> String {
    match DateTime::from_timestamp(day_start_ts, 0) {
        Some(dt) => dt.date_naive().format("%Y-%m-%d").to_string(),
        None => format!("day-{}", day_start_ts / 86_400),
    }
}

/// Cuts one window per (UTC day, hour). Windows with insufficient coverage
/// or too many filled seconds are skipped and logged, not errors.
pub fn slice_windows(
    series: &PriceSeries,
    spec: WindowSpec,
    hours: &[u8],
    max_fill_fraction: f64,
) -> (Vec<EpisodeWindow>, Vec<SkipEntry>) {
    let mut windows = Vec::new();
    let mut skips = Vec::new();
    let first_day = series.start_ts().div_euclid(86_400);
    let last_day = series.end_ts().div_euclid(86_400);
    for day in first_day..=last_day {
        let day_start = day * 86_400;
        let date = date_label(day_start);
        for &h in hours {
            let t0 = day_start + i64::from(h) * 3600;
            let lo = t0 - spec.lead_seconds as i64;
            let hi = t0 + (spec.trading_seconds + spec.terminal_seconds) as i64;
            if lo < series.start_ts() || hi > series.end_ts() {
                skips.push(SkipEntry {
                    date: date.clone(),
                    hour: h,
                    reason: "insufficient_data".into(),
                });
                continue;
            }
            let filled = series.filled_in_range(lo, hi);
            let frac = filled as f64 / spec.total_points() as f64;
            if frac > max_fill_fraction {
                log::warn!("skipping {date} hour {h}: filled fraction {frac:.4}");
                skips.push(SkipEntry {
                    date: date.clone(),
                    hour: h,
                    reason: "gap_fraction_exceeded".into(),
                });
                continue;
            }
            let prices: Vec<f64> = (lo..=hi).map(|t| series.price_at(t).unwrap()).collect();
            windows.push(
                EpisodeWindow::from_prices(&date, HourLabel::Hour(h), prices, spec)
                    .expect("slice geometry is exact by construction"),
            );
        }
    }
    (windows, skips)
}

/// Loads and validates a `timestamp_s,midprice` CSV.
pub fn load_price_series(path: &Path, instrument: &str) -> Result<PriceSeries> {
    let text = fs::read_to_string(path)?;
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim();
        if i == 0 {
            if line != "timestamp_s,midprice" {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected header 'timestamp_s,midprice', got '{line}'"),
                });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let (ts, px) = match (fields.next(), fields.next(), fields.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => {
                return Err(Error::Parse {
                    line: lineno,
                    msg: "expected exactly 2 comma-separated fields".into(),
                })
            }
        };
        let timestamp: i64 = ts.trim().parse().map_err(|e| Error::Parse {
            line: lineno,
            msg: format!("bad timestamp '{ts}': {e}"),
        })?;
        let midprice: f64 = px.trim().parse().map_err(|e| Error::Parse {
            line: lineno,
            msg: format!("bad midprice '{px}': {e}"),
        })?;
        if !(midprice > 0.0) || !midprice.is_finite() {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("midprice must be positive, got {midprice}"),
            });
        }
        points.push(PricePoint {
            timestamp,
            midprice,
        });
    }
    let series = PriceSeries::from_points(instrument, &points)?;
    let filled = series.filled_count();
    if filled > 0 {
        log::info!(
            "{}: forward-filled {filled} missing seconds of {}",
            instrument,
            series.len()
        );
    }
    Ok(series)
}

/// Price process used for synthetic series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SynthModel {
    /// Independent zero-mean Gaussian increments.
    Martingale,
    /// Adds `mu` per second on top of the Gaussian increments.
    Drift { mu: f64 },
    /// Mean-reverts toward `pbar` at rate `kappa` per second.
    Ou { kappa: f64, pbar: f64 },
}

/// Parameters of a synthetic price path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub model: SynthModel,
    /// Per-second standard deviation of the Gaussian increments.
    pub vol: f64,
    /// Initial price.
    pub p0: f64,
}

/// Generates `length` one-second prices starting at t=0. Reproducible for a
/// given seed.
pub fn synth_series(spec: &SynthSpec, length: usize, seed: u64) -> Result<PriceSeries> {
    if spec.vol < 0.0 {
        return Err(Error::Argument(format!("vol must be >= 0, got {}", spec.vol)));
    }
    if length < 2 {
        return Err(Error::Argument(format!("length must be >= 2, got {length}")));
    }
    if !(spec.p0 > 0.0) {
        return Err(Error::Argument(format!("p0 must be > 0, got {}", spec.p0)));
    }
    let mut rng: ChaCha8Rng = rand::SeedableRng::seed_from_u64(seed);
    let noise = if spec.vol > 0.0 {
        Some(Normal::new(0.0, spec.vol).map_err(|e| Error::Argument(e.to_string()))?)
    } else {
        None
    };
    let mut prices = Vec::with_capacity(length);
    let mut p = spec.p0;
    prices.push(p);
    for _ in 1..length {
        let eps = noise.map_or(0.0, |n| n.sample(&mut rng));
        let inc = match spec.model {
            SynthModel::Martingale => eps,
            SynthModel::Drift { mu } => mu + eps,
            SynthModel::Ou { kappa, pbar } => kappa * (pbar - p) + eps,
        };
        p = (p + inc).max(MIN_PRICE);
        prices.push(p);
    }
    let points: Vec<PricePoint> = prices
        .iter()
        .enumerate()
        .map(|(i, &midprice)| PricePoint {
            timestamp: i as i64,
            midprice,
        })
        .collect();
    PriceSeries::from_points("SYNTH", &points)
}

/// Generates `count` independent synthetic windows; window `i` uses seed
/// `seed + i`.
pub fn synth_windows(
    spec: &SynthSpec,
    wspec: WindowSpec,
    count: usize,
    seed: u64,
) -> Result<Vec<EpisodeWindow>> {
    let mut windows = Vec::with_capacity(count);
    for i in 0..count {
        let series = synth_series(spec, wspec.total_points(), seed.wrapping_add(i as u64))?;
        let prices: Vec<f64> = series.points().map(|p| p.midprice).collect();
        windows.push(EpisodeWindow::from_prices(
            &format!("synthetic-{i:04}"),
            HourLabel::Synthetic,
            prices,
            wspec,
        )?);
    }
    Ok(windows)
}

/// Chronological train/eval split: train takes the earliest
/// `floor(ratio * n)` windows (clamped so both sides are non-empty).
pub fn train_eval_split(
    windows: Vec<EpisodeWindow>,
    ratio: f64,
) -> Result<(Vec<EpisodeWindow>, Vec<EpisodeWindow>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Argument(format!(
            "split ratio must be in (0,1), got {ratio}"
        )));
    }
    if windows.len() < 2 {
        return Err(Error::State(format!(
            "need at least 2 windows to split, got {}",
            windows.len()
        )));
    }
    let n = windows.len();
    let train_n = ((n as f64 * ratio).floor() as usize).clamp(1, n - 1);
    let mut train = windows;
    let eval = train.split_off(train_n);
    Ok((train, eval))
}
