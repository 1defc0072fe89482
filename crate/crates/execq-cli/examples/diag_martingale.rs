//! Scratch diagnostic for the martingale TWAP-recovery experiment.

use execq_core::{
    run_policy, AgentConfig, EnvConfig, FeatureConfig, FeatureSet, GreedyPolicy, NullObserver,
    RawState, RmsPropConfig, SchedulePolicy, SynthModel, SynthSpec, Trainer,
};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let vol: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.005);
    let a: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let episodes: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(2500);
    let eta: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let tau: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(0.998);
    let seed: u64 = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(44);
    let capacity: usize = args.get(7).and_then(|s| s.parse().ok()).unwrap_or(10_000);
    let m: usize = args.get(8).and_then(|s| s.parse().ok()).unwrap_or(60);

    let env = EnvConfig {
        q0: 20,
        periods: 5,
        seconds_per_period: m,
        terminal_seconds: 1,
        penalty_a: a,
        lot_multiple: 1,
        strict_terminal: false,
    };
    let spec = SynthSpec {
        model: SynthModel::Martingale,
        vol,
        p0: 10.0,
    };
    let train_w = execq_core::synth_windows(&spec, env.window_spec(), 500, 1000).unwrap();
    let eval_w = execq_core::synth_windows(&spec, env.window_spec(), 200, 9000).unwrap();
    let features = FeatureConfig::fit(&train_w, env.q0, env.periods, env.seconds_per_period).unwrap();
    let cfg = AgentConfig {
        gamma: 0.99,
        epsilon0: 1.0,
        tau,
        rho: 15,
        minibatch: 32,
        pretrain_episodes: 200,
        episodes,
        seed,
    };
    let t0 = std::time::Instant::now();
    let mut trainer = Trainer::new(
        env,
        features,
        FeatureSet::Ti,
        cfg,
        RmsPropConfig {
            eta,
            ..RmsPropConfig::default()
        },
        capacity,
    )
    .unwrap();
    trainer.pretrain(&train_w).unwrap();
    let log = trainer.train(&train_w, &mut NullObserver).unwrap();
    println!(
        "trained {episodes} episodes in {:.1}s, final mean_loss {:.4}, final eps {:.4}",
        t0.elapsed().as_secs_f64(),
        log.last().unwrap().mean_loss,
        log.last().unwrap().epsilon
    );

    // Greedy rollout path and Q-values along it.
    let greedy = GreedyPolicy {
        params: &trainer.state.main,
        env: &env,
        features: &trainer.features,
        set: FeatureSet::Ti,
    };
    let run = run_policy(&greedy, &eval_w[0], &env).unwrap();
    println!("greedy rollout actions: {:?}", run.actions);

    let mut q = env.q0;
    for k in 0..env.periods {
        if q == 0 {
            println!("k={k} q= 0: (inventory exhausted)");
            continue;
        }
        let raw = RawState {
            k,
            q,
            price: 10.0,
            hour_start_price: 10.0,
            qv_prev: trainer.features.qv_mean,
        };
        let mut line = format!("k={k} q={q:2}: ");
        let lo = run.actions[k].saturating_sub(3);
        let hi = (run.actions[k] + 3).min(q);
        for x in lo..=hi {
            let v = execq_core::build_state_vector(&raw, x, &trainer.features, FeatureSet::Ti)
                .and_then(|inp| trainer.state.main.forward(&inp))
                .unwrap();
            line.push_str(&format!("Q({x})={v:.4} "));
        }
        println!("{line}");
        q -= run.actions[k];
    }

    // Full (k, q) policy grid.
    let grid =
        execq_core::extract_policy_grid(&trainer.state.main, &env, &trainer.features, FeatureSet::Ti, 1, 1)
            .unwrap();
    println!("policy grid rows q, cols k:");
    let mut monotone = 0;
    let mut pairs = 0;
    let mut monotone_k1 = 0;
    let mut pairs_k1 = 0;
    for q in (0..=env.q0).rev() {
        let mut row = format!("q={q:2}: ");
        for k in 0..env.periods {
            let a = grid.cell(k, q, 0, 0).unwrap().action;
            row.push_str(&format!("{a:3}"));
            if k + 1 < env.periods {
                let b = grid.cell(k + 1, q, 0, 0).unwrap().action;
                pairs += 1;
                if b >= a {
                    monotone += 1;
                }
                if k >= 1 {
                    pairs_k1 += 1;
                    if b >= a {
                        monotone_k1 += 1;
                    }
                }
            }
        }
        println!("{row}");
    }
    println!(
        "monotone-in-k pairs: {monotone}/{pairs} = {:.1}% (k>=1 only: {monotone_k1}/{pairs_k1} = {:.1}%)",
        100.0 * monotone as f64 / pairs as f64,
        100.0 * monotone_k1 as f64 / pairs_k1 as f64
    );

    // MAD + delta stats over eval windows.
    let twap = SchedulePolicy::twap(env.q0, env.periods);
    let reference = execq_core::twap_schedule(env.q0, env.periods);
    let mut mad = 0.0;
    let mut n = 0;
    let mut deltas = Vec::new();
    for w in &eval_w {
        let m = run_policy(&greedy, w, &env).unwrap();
        let t = run_policy(&twap, w, &env).unwrap();
        for (x, r) in m.actions.iter().zip(&reference) {
            mad += (f64::from(*x) - f64::from(*r)).abs();
            n += 1;
        }
        deltas.push(execq_core::delta_pnl(m.pnl, t.pnl).unwrap());
    }
    let mean = deltas.iter().sum::<f64>() / deltas.len() as f64;
    let var = deltas.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>()
        / (deltas.len() - 1) as f64;
    let se = (var / deltas.len() as f64).sqrt();
    println!(
        "MAD {:.3} lots, mean dPnL {mean:.3} bps, se {se:.3}",
        mad / n as f64
    );
}
