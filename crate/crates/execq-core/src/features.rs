//! Feature transforms feeding the Q-network.
//!
//! Every input is projected toward `[-1, 1]`: time by an affine map,
//! inventory/action pairs by a polar stretch of their triangular domain
//! onto the unit square, price by differencing against the window start and
//! scaling, and quadratic variation by standardization against
//! training-set statistics.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::EpisodeWindow;

/// Which features the network sees (the action input is always appended).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSet {
    /// Time, inventory.
    Ti,
    /// Time, inventory, price.
    Tip,
    /// Time, inventory, price, quadratic variation.
    Tipqv,
}

impl FeatureSet {
    /// Network input dimension: features plus one action slot.
    pub fn input_dim(&self) -> usize {
        match self {
            FeatureSet::Ti => 3,
            FeatureSet::Tip => 4,
            FeatureSet::Tipqv => 5,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ti" => Ok(FeatureSet::Ti),
            "tip" => Ok(FeatureSet::Tip),
            "tipqv" => Ok(FeatureSet::Tipqv),
            other => Err(Error::Argument(format!(
                "unknown feature set '{other}' (expected ti, tip or tipqv)"
            ))),
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureSet::Ti => write!(f, "ti"),
            FeatureSet::Tip => write!(f, "tip"),
            FeatureSet::Tipqv => write!(f, "tipqv"),
        }
    }
}

/// Normalization constants, fitted once on training data and persisted with
/// the checkpoint so evaluation reuses them bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Initial inventory in lots.
    pub q0: u32,
    /// Number of decision periods.
    pub periods: usize,
    /// Divisor for the price feature; strictly positive.
    pub price_scale: f64,
    /// Mean of per-period quadratic variation on the training set.
    pub qv_mean: f64,
    /// Standard deviation of per-period quadratic variation; strictly positive.
    pub qv_std: f64,
}

impl FeatureConfig {
    pub fn new(q0: u32, periods: usize, price_scale: f64, qv_mean: f64, qv_std: f64) -> Result<Self> {
        if q0 == 0 {
            return Err(Error::Argument("q0 must be positive".into()));
        }
        if periods < 2 {
            return Err(Error::Argument("periods must be >= 2".into()));
        }
        if !(price_scale > 0.0) {
            return Err(Error::Argument(format!(
                "price scale must be > 0, got {price_scale}"
            )));
        }
        if !(qv_std > 0.0) {
            return Err(Error::Argument(format!("qv std must be > 0, got {qv_std}")));
        }
        Ok(Self {
            q0,
            periods,
            price_scale,
            qv_mean,
            qv_std,
        })
    }

    /// Fits the price scale and QV statistics on training windows.
    ///
    /// The price scale is twice the standard deviation of `p - p_start`
    /// pooled over all trading seconds; QV statistics pool every per-period
    /// estimate a training episode would observe (the leading period and
    /// all but the last trading period). Degenerate (constant-price) inputs
    /// fall back to a unit scale.
    pub fn fit(
        windows: &[EpisodeWindow],
        q0: u32,
        periods: usize,
        seconds_per_period: usize,
    ) -> Result<Self> {
        if windows.is_empty() {
            return Err(Error::Argument("cannot fit features on zero windows".into()));
        }
        let mut deviations = Vec::new();
        let mut qvs = Vec::new();
        for w in windows {
            let p_start = w.price(0);
            let trading = periods * seconds_per_period;
            for t in 0..=trading as i64 {
                deviations.push(w.price(t) - p_start);
            }
            qvs.push(compute_qv(w.leading_prices())?);
            for k in 0..periods.saturating_sub(1) {
                let lo = (k * seconds_per_period) as i64;
                let prices: Vec<f64> = (lo..=lo + seconds_per_period as i64)
                    .map(|t| w.price(t))
                    .collect();
                qvs.push(compute_qv(&prices)?);
            }
        }
        let price_scale = {
            let s = 2.0 * sample_std(&deviations);
            if s > 1e-12 {
                s
            } else {
                1.0
            }
        };
        let qv_mean = mean(&qvs);
        let qv_std = {
            let s = sample_std(&qvs);
            if s > 1e-12 {
                s
            } else {
                1.0
            }
        };
        FeatureConfig::new(q0, periods, price_scale, qv_mean, qv_std)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Raw market/inventory quantities at one decision time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawState {
    /// Period index in `[0, periods - 1]` (`periods` marks end-of-horizon).
    pub k: usize,
    /// Remaining inventory in lots.
    pub q: u32,
    /// Midprice at the decision time.
    pub price: f64,
    /// Midprice at the start of the window's trading horizon.
    pub hour_start_price: f64,
    /// Quadratic variation of the previous period.
    pub qv_prev: f64,
}

/// Affine time map: `2k/(N-1) - 1`, hitting the endpoints exactly.
pub fn transform_time(k: usize, periods: usize) -> Result<f64> {
    if periods < 2 {
        return Err(Error::Argument(format!(
            "periods must be >= 2, got {periods}"
        )));
    }
    if k > periods - 1 {
        return Err(Error::Argument(format!(
            "period index {k} outside [0, {}]",
            periods - 1
        )));
    }
    Ok(2.0 * k as f64 / (periods - 1) as f64 - 1.0)
}

/// Price relative to the window start, scaled. Deliberately unclipped:
/// only outliers land outside `[-1, 1]`.
pub fn transform_price(p: f64, p_hour: f64, scale: f64) -> Result<f64> {
    if !(scale > 0.0) {
        return Err(Error::Argument(format!("price scale must be > 0, got {scale}")));
    }
    Ok((p - p_hour) / scale)
}

/// Sum of squared one-second increments over a period path.
pub fn compute_qv(prices: &[f64]) -> Result<f64> {
    if prices.len() < 2 {
        return Err(Error::Argument(format!(
            "quadratic variation needs >= 2 prices, got {}",
            prices.len()
        )));
    }
    Ok(prices.windows(2).map(|w| (w[1] - w[0]) * (w[1] - w[0])).sum())
}

/// Centers and scales QV by twice its training standard deviation.
pub fn standardize_qv(qv: f64, mean: f64, std: f64) -> Result<f64> {
    if !(std > 0.0) {
        return Err(Error::Argument(format!("qv std must be > 0, got {std}")));
    }
    Ok((qv - mean) / (2.0 * std))
}

/// Maps an (inventory, action) pair from the triangle
/// `{0 < q <= q0, 0 <= x <= q}` into `[-1, 1]^2`.
///
/// The pair is first normalized to `qn = q/q0 - 1`, `xn = x/q0`; the polar
/// quantities are computed on the normalized pair and the radius is
/// stretched so the triangle's hypotenuse lands on the square's boundary.
/// The degenerate origin (full inventory, zero action) maps to `(0, 0)`;
/// `qn = 0` with a positive action takes the analytic limit at the vertical
/// angle.
pub fn transform_inventory_action(q: f64, x: f64, q0: f64) -> Result<(f64, f64)> {
    if !(q0 > 0.0) {
        return Err(Error::Argument(format!("q0 must be > 0, got {q0}")));
    }
    if !(q > 0.0) || q > q0 {
        return Err(Error::Domain(format!("inventory {q} outside (0, {q0}]")));
    }
    if x < 0.0 || x > q {
        return Err(Error::Domain(format!("action {x} outside [0, {q}]")));
    }
    let qn = q / q0 - 1.0;
    let xn = x / q0;
    if qn == 0.0 && xn == 0.0 {
        return Ok((0.0, 0.0));
    }
    let r = (qn * qn + xn * xn).sqrt();
    let (theta, stretch_sq) = if qn == 0.0 {
        // zeta -> infinity: theta = pi/2 and 1/zeta^2 = 0.
        let t = FRAC_PI_2;
        let c = (t - FRAC_PI_4).cos();
        (t, (0.0 + 1.0) * 2.0 * c * c)
    } else {
        let zeta = -xn / qn;
        let t = zeta.atan();
        if t <= FRAC_PI_4 {
            let c = (FRAC_PI_4 - t).cos();
            (t, (zeta * zeta + 1.0) * 2.0 * c * c)
        } else {
            let c = (t - FRAC_PI_4).cos();
            (t, (1.0 / (zeta * zeta) + 1.0) * 2.0 * c * c)
        }
    };
    let r_stretched = r * stretch_sq.sqrt();
    Ok((-r_stretched * theta.cos(), r_stretched * theta.sin()))
}

/// Assembles the ordered network input `(t, q~, x~[, p~][, qv~])` for the
/// requested feature set.
pub fn build_state_vector(
    raw: &RawState,
    action: u32,
    cfg: &FeatureConfig,
    set: FeatureSet,
) -> Result<Vec<f64>> {
    let t = transform_time(raw.k, cfg.periods)?;
    let (qt, xt) = transform_inventory_action(f64::from(raw.q), f64::from(action), f64::from(cfg.q0))?;
    let mut v = Vec::with_capacity(set.input_dim());
    v.push(t);
    v.push(qt);
    v.push(xt);
    if matches!(set, FeatureSet::Tip | FeatureSet::Tipqv) {
        v.push(transform_price(raw.price, raw.hour_start_price, cfg.price_scale)?);
    }
    if matches!(set, FeatureSet::Tipqv) {
        v.push(standardize_qv(raw.qv_prev, cfg.qv_mean, cfg.qv_std)?);
    }
    Ok(v)
}
