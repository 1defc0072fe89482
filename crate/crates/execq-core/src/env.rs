//! Episodic execution environment.
//!
//! A decision is made at the start of each of `N` periods; the chosen size
//! is worked as equal child orders, one per second. Rewards accrue per
//! second as inventory revaluation minus a quadratic penalty on the child
//! order, with pre-trade inventory earning the next second's price move.
//! Whatever remains after the last period is force-liquidated in a single
//! extra second.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{compute_qv, RawState};
use crate::market_data::{EpisodeWindow, WindowSpec};

/// Environment parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    /// Initial inventory in lots.
    pub q0: u32,
    /// Number of decision periods N.
    pub periods: usize,
    /// Seconds per period (constant across periods).
    pub seconds_per_period: usize,
    /// Length of the forced-liquidation extension in seconds.
    pub terminal_seconds: usize,
    /// Quadratic penalty coefficient on per-second child orders.
    pub penalty_a: f64,
    /// Action granularity in lots.
    pub lot_multiple: u32,
    /// When set, the only admissible action at the last decision time is
    /// the full remaining inventory.
    pub strict_terminal: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            q0: 20,
            periods: 5,
            seconds_per_period: 720,
            terminal_seconds: 1,
            penalty_a: 0.01,
            lot_multiple: 1,
            strict_terminal: false,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.q0 == 0 {
            return Err(Error::Argument("env.q0 must be positive".into()));
        }
        if self.periods < 2 {
            return Err(Error::Argument("env.periods must be >= 2".into()));
        }
        if self.seconds_per_period == 0 {
            return Err(Error::Argument("env.seconds_per_period must be >= 1".into()));
        }
        if self.terminal_seconds == 0 {
            return Err(Error::Argument("env.terminal_seconds must be >= 1".into()));
        }
        if self.penalty_a < 0.0 {
            return Err(Error::Argument("env.penalty_a must be >= 0".into()));
        }
        if self.lot_multiple == 0 {
            return Err(Error::Argument("env.lot_multiple must be >= 1".into()));
        }
        Ok(())
    }

    pub fn trading_seconds(&self) -> usize {
        self.periods * self.seconds_per_period
    }

    /// Window geometry implied by this configuration: one leading period
    /// for the initial QV estimate plus the trailing liquidation second(s).
    pub fn window_spec(&self) -> WindowSpec {
        WindowSpec {
            lead_seconds: self.seconds_per_period,
            trading_seconds: self.trading_seconds(),
            terminal_seconds: self.terminal_seconds,
        }
    }
}

/// Where a transition's next state sits on the decision grid. Drives the
/// learning-target case split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NextStateTag {
    /// Next state is an ordinary decision time (its period index).
    Interior(usize),
    /// Next state is the final decision time.
    Penultimate,
    /// Next state is the end of the horizon; the liquidation reward is
    /// already folded into the realized reward.
    Terminal,
}

/// Outcome of executing one period's action.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    /// Period reward (inventory revaluation minus penalties).
    pub reward: f64,
    /// Raw state at the next decision time (or at the horizon end).
    pub next: RawState,
    pub terminal: bool,
    /// Forced-liquidation reward, present only on the final step.
    pub terminal_component: Option<f64>,
    pub tag: NextStateTag,
    /// Realized reward of the forced full liquidation from the next state
    /// over the final period; present only when `tag` is `Penultimate`.
    pub penultimate_bootstrap: Option<f64>,
}

/// Reward from liquidating `q_left` lots in one second: revaluation against
/// the post-horizon price minus the undivided quadratic penalty.
pub fn terminal_reward(price_at_t: f64, price_at_t_plus: f64, q_left: f64, penalty_a: f64) -> f64 {
    q_left * (price_at_t_plus - price_at_t) - penalty_a * q_left * q_left
}

/// Admissible order sizes for inventory `q` at period `k`: multiples of the
/// lot granularity up to `q` (plus `q` itself so full liquidation is always
/// available). In strict-terminal mode the last decision is forced to `q`.
pub fn admissible_actions(q: u32, k: usize, cfg: &EnvConfig) -> Vec<u32> {
    if q == 0 {
        return vec![0];
    }
    if cfg.strict_terminal && k == cfg.periods - 1 {
        return vec![q];
    }
    let mut actions: Vec<u32> = (0..=q / cfg.lot_multiple).map(|i| i * cfg.lot_multiple).collect();
    if *actions.last().unwrap() != q {
        actions.push(q);
    }
    actions
}

/// Sum of period rewards plus the terminal component.
pub fn episode_total_reward(rewards: &[f64], terminal: f64) -> f64 {
    rewards.iter().sum::<f64>() + terminal
}

/// A single in-progress episode over one window. Single-owner and stateful;
/// distinct instances share nothing.
#[derive(Debug, Clone)]
pub struct Episode<'w> {
    window: &'w EpisodeWindow,
    cfg: EnvConfig,
    state: RawState,
    done: bool,
    rewards: Vec<f64>,
    terminal_component: Option<f64>,
    actions: Vec<u32>,
}

impl<'w> Episode<'w> {
    /// Starts an episode at the first decision time with full inventory.
    pub fn reset(window: &'w EpisodeWindow, cfg: EnvConfig) -> Result<Episode<'w>> {
        cfg.validate()?;
        if window.spec() != cfg.window_spec() {
            return Err(Error::Validation(format!(
                "window geometry {:?} does not match env {:?}",
                window.spec(),
                cfg.window_spec()
            )));
        }
        let p0 = window.price(0);
        let qv_prev = compute_qv(window.leading_prices())?;
        Ok(Episode {
            window,
            cfg,
            state: RawState {
                k: 0,
                q: cfg.q0,
                price: p0,
                hour_start_price: p0,
                qv_prev,
            },
            done: false,
            rewards: Vec::with_capacity(cfg.periods),
            terminal_component: None,
            actions: Vec::with_capacity(cfg.periods),
        })
    }

    pub fn state(&self) -> &RawState {
        &self.state
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn window(&self) -> &'w EpisodeWindow {
        self.window
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn admissible_actions(&self) -> Vec<u32> {
        admissible_actions(self.state.q, self.state.k, &self.cfg)
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn actions(&self) -> &[u32] {
        &self.actions
    }

    pub fn terminal_component(&self) -> Option<f64> {
        self.terminal_component
    }

    /// Total realized reward including the forced liquidation. Errors until
    /// the episode has finished.
    pub fn total_reward(&self) -> Result<f64> {
        match self.terminal_component {
            Some(t) if self.done => Ok(episode_total_reward(&self.rewards, t)),
            _ => Err(Error::State("episode is not complete".into())),
        }
    }

    /// Realized reward of working `x` lots over period `k` starting from
    /// inventory `q_start`: pre-trade inventory earns each next second's
    /// price move, each child order pays the quadratic penalty.
    fn period_reward(&self, k: usize, q_start: f64, x: f64) -> f64 {
        let m = self.cfg.seconds_per_period;
        let a = self.cfg.penalty_a;
        let t0 = (k * m) as i64;
        let child = x / m as f64;
        let mut q_run = q_start;
        let mut reward = 0.0;
        for i in 0..m as i64 {
            let p = self.window.price(t0 + i);
            let p_next = self.window.price(t0 + i + 1);
            reward += q_run * (p_next - p) - a * child * child;
            q_run -= child;
        }
        reward
    }

    /// Executes `x` lots over the current period as equal per-second child
    /// orders and advances the clock.
    pub fn step(&mut self, x: u32) -> Result<StepResult> {
        if self.done {
            return Err(Error::State("episode already finished".into()));
        }
        if !self.admissible_actions().contains(&x) {
            return Err(Error::Domain(format!(
                "action {x} not admissible for q={} at k={}",
                self.state.q, self.state.k
            )));
        }
        let m = self.cfg.seconds_per_period;
        let a = self.cfg.penalty_a;
        let k = self.state.k;
        let t0 = (k * m) as i64;
        let reward = self.period_reward(k, f64::from(self.state.q), f64::from(x));
        let q_next = self.state.q - x;
        let next_k = k + 1;
        let period_prices: Vec<f64> = (t0..=t0 + m as i64).map(|t| self.window.price(t)).collect();
        let qv_prev = compute_qv(&period_prices)?;
        let next = RawState {
            k: next_k,
            q: q_next,
            price: self.window.price((next_k * m) as i64),
            hour_start_price: self.state.hour_start_price,
            qv_prev,
        };
        let horizon_end = self.cfg.trading_seconds() as i64;
        let post_horizon = horizon_end + self.cfg.terminal_seconds as i64;
        let (tag, terminal_component, penultimate_bootstrap) = if next_k == self.cfg.periods {
            let r_term = terminal_reward(
                self.window.price(horizon_end),
                self.window.price(post_horizon),
                f64::from(q_next),
                a,
            );
            (NextStateTag::Terminal, Some(r_term), None)
        } else if next_k == self.cfg.periods - 1 {
            // Value of the landing state under its forced continuation:
            // the remaining-inventory constraint pins the final decision to
            // a full liquidation worked evenly over the last period, so the
            // realized reward of that forced sale stands in for a network
            // estimate in the learning target.
            let boot = self.period_reward(next_k, f64::from(q_next), f64::from(q_next));
            (NextStateTag::Penultimate, None, Some(boot))
        } else {
            (NextStateTag::Interior(next_k), None, None)
        };
        self.rewards.push(reward);
        self.actions.push(x);
        self.state = next;
        if next_k == self.cfg.periods {
            self.done = true;
            self.terminal_component = terminal_component;
        }
        Ok(StepResult {
            reward,
            next,
            terminal: next_k == self.cfg.periods,
            terminal_component,
            tag,
            penultimate_bootstrap,
        })
    }
}
