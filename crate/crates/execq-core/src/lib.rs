//! Double-DQN optimal trade execution over second-level midprice replay.
//!
//! The crate is organized around the training pipeline: [`market_data`]
//! loads or synthesizes price windows, [`features`] normalizes state for
//! the network, [`env`] replays episodes and accounts rewards, [`nn`] is a
//! self-contained dense network with exact gradients, [`replay`] the
//! bounded experience memory, [`agent`] the Double-DQN learner, and
//! [`eval`] the TWAP benchmark and reporting.

pub mod agent;
pub mod env;
pub mod error;
pub mod eval;
pub mod features;
pub mod market_data;
pub mod nn;
pub mod replay;

pub use agent::{
    build_target, extract_policy_grid, select_egreedy, select_greedy, AgentConfig, AgentState,
    Checkpoint, NullObserver, PolicyCell, PolicyGrid, TrainLogRow, TrainObserver, Trainer,
    CHECKPOINT_VERSION,
};
pub use env::{
    admissible_actions, episode_total_reward, terminal_reward, EnvConfig, Episode, NextStateTag,
    StepResult,
};
pub use error::{Error, Result};
pub use eval::{
    delta_pnl, emit_report, histogram_fd, run_policy, summarize, twap_schedule, write_policy_grid,
    ExecutionPolicy, GlrFlag, GreedyPolicy, Histogram, HourResult, PolicyRun, ReportSummary,
    SchedulePolicy, SummaryStats,
};
pub use features::{
    build_state_vector, compute_qv, standardize_qv, transform_inventory_action, transform_price,
    transform_time, FeatureConfig, FeatureSet, RawState,
};
pub use market_data::{
    load_price_series, slice_windows, synth_series, synth_windows, train_eval_split,
    EpisodeWindow, HourLabel, PricePoint, PriceSeries, SkipEntry, SynthModel, SynthSpec,
    WindowSpec,
};
pub use nn::{Gradients, Layer, QNetworkParams, RmsPropConfig, RmsPropState};
pub use replay::{ReplayBuffer, Transition};
