//! Command implementations shared by the binary and the test suites.

use std::fs;
use std::path::{Path, PathBuf};

use execq_core::{
    delta_pnl, emit_report, extract_policy_grid, histogram_fd, load_price_series, run_policy,
    slice_windows, summarize, synth_series, synth_windows, train_eval_split, write_policy_grid,
    AgentState, Checkpoint, EpisodeWindow, Error as CoreError, FeatureConfig, GreedyPolicy,
    HourResult, SchedulePolicy, TrainLogRow, TrainObserver, Trainer, CHECKPOINT_VERSION,
};

use crate::config::{DataSource, RunConfig};
use crate::CliError;

fn runtime(e: CoreError) -> CliError {
    CliError::Runtime(e.to_string())
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Loads or synthesizes the full window set, plus any skip-log rows.
fn build_windows(cfg: &RunConfig) -> Result<(Vec<EpisodeWindow>, Vec<String>), CliError> {
    let wspec = cfg.env_config().window_spec();
    match cfg.data_source {
        DataSource::Synth => {
            let spec = cfg.synth_spec()?;
            let windows =
                synth_windows(&spec, wspec, cfg.synth_windows, cfg.synth_seed).map_err(runtime)?;
            Ok((windows, Vec::new()))
        }
        DataSource::Csv => {
            if cfg.data_path.is_empty() {
                return Err(usage("data.path is required when data.source = csv"));
            }
            let path = Path::new(&cfg.data_path);
            if !path.is_file() {
                return Err(usage(format!("data path not found: {}", cfg.data_path)));
            }
            let series = load_price_series(path, &cfg.data_instrument).map_err(runtime)?;
            let (windows, skips) = slice_windows(
                &series,
                wspec,
                &cfg.data_hours,
                cfg.data_max_fill_fraction,
            );
            let skip_rows = skips.iter().map(|s| s.csv_row()).collect();
            if windows.is_empty() {
                return Err(CliError::Runtime(
                    "no usable windows in the input data".into(),
                ));
            }
            Ok((windows, skip_rows))
        }
    }
}

fn split_windows(
    cfg: &RunConfig,
    windows: Vec<EpisodeWindow>,
) -> Result<(Vec<EpisodeWindow>, Vec<EpisodeWindow>), CliError> {
    train_eval_split(windows, cfg.data_split_ratio).map_err(runtime)
}

/// Writes sync and diagnostic checkpoints during training.
struct CheckpointWriter {
    out: PathBuf,
    feature_config: FeatureConfig,
    feature_set: execq_core::FeatureSet,
}

impl CheckpointWriter {
    fn checkpoint_of(&self, state: &AgentState) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            feature_set: self.feature_set,
            input_dim: self.feature_set.input_dim(),
            episode: state.episode,
            epsilon: state.epsilon,
            feature_config: self.feature_config.clone(),
            params: state.main.clone(),
        }
    }
}

impl TrainObserver for CheckpointWriter {
    fn on_target_sync(&mut self, state: &AgentState) -> execq_core::Result<()> {
        let path = self.out.join(format!("checkpoint_ep{:06}.json", state.episode));
        self.checkpoint_of(state).save(&path)
    }

    fn on_abort(&mut self, state: &AgentState) {
        let path = self.out.join("checkpoint_diagnostic.json");
        if let Err(e) = self.checkpoint_of(state).save(&path) {
            log::error!("could not write diagnostic checkpoint: {e}");
        }
    }
}

/// Artifacts produced by `train`.
#[derive(Debug, Clone)]
pub struct TrainArtifacts {
    pub checkpoint: PathBuf,
    pub training_log: PathBuf,
    pub resolved_config: PathBuf,
}

/// Pre-train, train, and persist checkpoints, the training log and the
/// resolved-config snapshot.
pub fn run_train(cfg: &RunConfig) -> Result<TrainArtifacts, CliError> {
    cfg.validate()?;
    let (windows, skip_rows) = build_windows(cfg)?;
    let (train_w, _eval_w) = split_windows(cfg, windows)?;
    let env = cfg.env_config();
    let features = FeatureConfig::fit(&train_w, env.q0, env.periods, env.seconds_per_period)
        .map_err(runtime)?;

    fs::create_dir_all(&cfg.out).map_err(|e| CliError::Runtime(e.to_string()))?;

    let mut trainer = Trainer::new(
        env,
        features.clone(),
        cfg.features,
        cfg.agent_config(),
        cfg.rms_config(),
        cfg.replay_capacity,
    )
    .map_err(runtime)?;

    let mut observer = CheckpointWriter {
        out: cfg.out.clone(),
        feature_config: features,
        feature_set: cfg.features,
    };

    trainer.pretrain(&train_w).map_err(runtime)?;
    let log = trainer.train(&train_w, &mut observer).map_err(runtime)?;

    let training_log = cfg.out.join("training_log.csv");
    let mut csv = String::from(TrainLogRow::CSV_HEADER);
    csv.push('\n');
    for row in &log {
        csv.push_str(&row.csv_row());
        csv.push('\n');
    }
    fs::write(&training_log, csv).map_err(|e| CliError::Runtime(e.to_string()))?;

    if cfg.data_source == DataSource::Csv {
        let mut skip_csv = String::from("date,hour,reason\n");
        for row in &skip_rows {
            skip_csv.push_str(row);
            skip_csv.push('\n');
        }
        fs::write(cfg.out.join("window_skips.csv"), skip_csv)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }

    let checkpoint = cfg.out.join("checkpoint_final.json");
    trainer.checkpoint().save(&checkpoint).map_err(runtime)?;

    let resolved_config = cfg.out.join("resolved_config.txt");
    fs::write(&resolved_config, cfg.snapshot()).map_err(|e| CliError::Runtime(e.to_string()))?;

    Ok(TrainArtifacts {
        checkpoint,
        training_log,
        resolved_config,
    })
}

fn load_checkpoint_checked(cfg: &RunConfig, path: &Path) -> Result<Checkpoint, CliError> {
    let cp = Checkpoint::load(path).map_err(|e| usage(e.to_string()))?;
    if cp.feature_set != cfg.features {
        return Err(usage(format!(
            "checkpoint was trained with feature set '{}' but the configuration says '{}'",
            cp.feature_set, cfg.features
        )));
    }
    let env = cfg.env_config();
    if cp.feature_config.q0 != env.q0 || cp.feature_config.periods != env.periods {
        return Err(usage(
            "checkpoint inventory/period structure does not match env configuration",
        ));
    }
    Ok(cp)
}

/// Artifacts produced by `eval`.
#[derive(Debug, Clone)]
pub struct EvalArtifacts {
    pub summary_json: PathBuf,
    pub per_hour_csv: PathBuf,
    pub histogram_csv: PathBuf,
    pub results: Vec<HourResult>,
}

/// Evaluates the frozen greedy policy and TWAP on the eval split.
pub fn run_eval(cfg: &RunConfig, checkpoint: &Path) -> Result<EvalArtifacts, CliError> {
    cfg.validate()?;
    let cp = load_checkpoint_checked(cfg, checkpoint)?;
    let (windows, _) = build_windows(cfg)?;
    let (_train_w, eval_w) = split_windows(cfg, windows)?;
    let env = cfg.env_config();

    let greedy = GreedyPolicy {
        params: &cp.params,
        env: &env,
        features: &cp.feature_config,
        set: cp.feature_set,
    };
    let twap = SchedulePolicy::twap(env.q0, env.periods);

    let mut results = Vec::with_capacity(eval_w.len());
    for w in &eval_w {
        let model_run = run_policy(&greedy, w, &env).map_err(runtime)?;
        let twap_run = run_policy(&twap, w, &env).map_err(runtime)?;
        let delta_bps = delta_pnl(model_run.pnl, twap_run.pnl).map_err(runtime)?;
        results.push(HourResult {
            date: w.date().to_string(),
            hour: w.hour(),
            model_pnl: model_run.pnl,
            twap_pnl: twap_run.pnl,
            delta_bps,
        });
    }
    let stats = summarize(&results).map_err(runtime)?;
    let deltas: Vec<f64> = results.iter().map(|r| r.delta_bps).collect();
    let histogram = histogram_fd(&deltas).map_err(runtime)?;
    let paths = emit_report(&stats, &results, &histogram, &cfg.out).map_err(runtime)?;
    Ok(EvalArtifacts {
        summary_json: paths.summary_json,
        per_hour_csv: paths.per_hour_csv,
        histogram_csv: paths.histogram_csv,
        results,
    })
}

/// Writes greedy-action heatmap grids, one CSV per (price, qv) bucket pair.
pub fn run_policy_map(cfg: &RunConfig, checkpoint: &Path) -> Result<Vec<PathBuf>, CliError> {
    cfg.validate()?;
    let cp = load_checkpoint_checked(cfg, checkpoint)?;
    let env = cfg.env_config();
    let grid = extract_policy_grid(
        &cp.params,
        &env,
        &cp.feature_config,
        cp.feature_set,
        cfg.policy_price_buckets,
        cfg.policy_qv_buckets,
    )
    .map_err(runtime)?;
    write_policy_grid(&grid, &cfg.out).map_err(runtime)
}

/// Generates a synthetic midprice CSV (one window's worth by default).
pub fn run_synth_gen(cfg: &RunConfig, length: Option<usize>) -> Result<PathBuf, CliError> {
    cfg.validate()?;
    let points = length.unwrap_or(if cfg.synth_length > 0 {
        cfg.synth_length
    } else {
        cfg.env_config().window_spec().total_points()
    });
    let spec = cfg.synth_spec()?;
    let series = synth_series(&spec, points, cfg.synth_seed).map_err(|e| match e {
        CoreError::Argument(_) => usage(e.to_string()),
        other => runtime(other),
    })?;
    fs::create_dir_all(&cfg.out).map_err(|e| CliError::Runtime(e.to_string()))?;
    let path = cfg.out.join("synthetic.csv");
    series.write_csv(&path).map_err(runtime)?;
    Ok(path)
}
