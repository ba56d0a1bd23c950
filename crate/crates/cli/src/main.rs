use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use opinion_core::costs::{
    additional_cost, cauchy_schwarz_bound, metrics, separable_bound, spectral_bound, DeviationBoundInputs, MetricsReport,
};
use opinion_core::fusion::FusionMode;
use opinion_core::harness::{
    build_scenario, metrics_table, run, run_with_counterfactual, write_bounds_csv, write_metrics_csv, Role,
    RunOptions, ScenarioConfig,
};
use opinion_core::riccati::check_stability_condition;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TABLE_SCHEDULES: &str = "tv,period1,period2,period3,period4,0.1175,0.1413,0.15";

#[derive(Parser)]
#[command(name = "opinion-sim", version, about = "Discounted LQR opinion dynamics with malicious agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Fusion {
    Boomerang,
    Averaging,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write its trace, events and metrics.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        horizon: Option<usize>,
        /// Schedule label: tv, periodN or a constant rate.
        #[arg(long)]
        schedule: Option<String>,
        #[arg(long)]
        no_adjust: bool,
        #[arg(long)]
        no_isolation: bool,
        #[arg(long, value_enum)]
        fusion: Option<Fusion>,
        /// Also run the baseline twin and write bounds.csv.
        #[arg(long)]
        counterfactual: bool,
    },
    /// Run several schedules on the same scenario and tabulate their metrics.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = TABLE_SCHEDULES, value_delimiter = ',')]
        schedules: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check the additional-cost bounds on random instances and along a run.
    BoundsCheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the periodic Riccati solution of one agent.
    Riccati {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        agent: usize,
    },
}

fn load(path: &Path, seed: Option<u64>) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn simulate(cfg: &ScenarioConfig, opts: RunOptions) -> Result<MetricsReport> {
    let scenario = build_scenario(cfg)?;
    let trace = run(&scenario, cfg.horizon, opts)?;
    Ok(metrics(&trace, cfg.convergence.eps, cfg.convergence.dwell)?)
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    config: &Path,
    out: &Path,
    seed: Option<u64>,
    horizon: Option<usize>,
    schedule: Option<&str>,
    no_adjust: bool,
    no_isolation: bool,
    fusion: Option<Fusion>,
    counterfactual: bool,
) -> Result<()> {
    let mut cfg = load(config, seed)?;
    if let Some(h) = horizon {
        cfg.horizon = h;
    }
    if let Some(f) = fusion {
        cfg.fusion_mode = match f {
            Fusion::Boomerang => FusionMode::Boomerang,
            Fusion::Averaging => FusionMode::Averaging,
        };
    }
    let label = schedule.unwrap_or("tv").to_string();
    let adjust = cfg.apply_schedule_label(&label)?;
    let opts = RunOptions {
        adjust: adjust && !no_adjust,
        isolate: !no_isolation,
    };
    let scenario = build_scenario(&cfg)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let dims = (scenario.state_dim(), scenario.input_dim());

    let trace = if counterfactual {
        let cf = run_with_counterfactual(&scenario, cfg.horizon, opts)?;
        cf.baseline.write_trace_csv_with_dims(out.join("baseline_trace.csv"), dims)?;
        write_bounds_csv(out.join("bounds.csv"), &cf.bounds)?;
        let violations = cf.bounds.iter().filter(|b| !b.holds(1e-9)).count();
        println!("bounds: {} records, {} violations", cf.bounds.len(), violations);
        cf.actual
    } else {
        run(&scenario, cfg.horizon, opts)?
    };
    trace.write_trace_csv_with_dims(out.join("trace.csv"), dims)?;
    trace.write_events_csv(out.join("events.csv"))?;
    trace.write_weights_csv(out.join("weights.csv"))?;

    let rows = vec![(label, metrics(&trace, cfg.convergence.eps, cfg.convergence.dwell)?)];
    let table = metrics_table(&rows);
    fs::write(out.join("metrics.txt"), &table)?;
    write_metrics_csv(out.join("metrics.csv"), &rows)?;
    print!("{table}");
    Ok(())
}

fn cmd_sweep(config: &Path, labels: &[String], out: &Path, seed: Option<u64>) -> Result<()> {
    let base = load(config, seed)?;
    let results: Vec<Result<MetricsReport>> = std::thread::scope(|s| {
        let handles: Vec<_> = labels
            .iter()
            .map(|label| {
                let mut cfg = base.clone();
                s.spawn(move || {
                    let adjust = cfg.apply_schedule_label(label)?;
                    simulate(&cfg, RunOptions { adjust, isolate: true })
                        .with_context(|| format!("schedule {label}"))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    let rows = labels
        .iter()
        .cloned()
        .zip(results)
        .map(|(l, r)| r.map(|m| (l, m)))
        .collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let table = metrics_table(&rows);
    fs::write(out.join("metrics.txt"), &table)?;
    write_metrics_csv(out.join("metrics.csv"), &rows)?;
    print!("{table}");
    Ok(())
}

fn unit_direction(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let norm = v.norm();
        if norm > 1e-3 && norm <= 1.0 {
            return v / norm;
        }
    }
}

struct Tally {
    checked: usize,
    failed: usize,
    /// Smallest `(bound - cost) / bound` seen.
    worst: f64,
}

impl Tally {
    fn new() -> Self {
        Self { checked: 0, failed: 0, worst: f64::INFINITY }
    }

    fn add(&mut self, cost: f64, bound: f64) {
        self.checked += 1;
        if cost > bound * (1.0 + 1e-9) {
            self.failed += 1;
        }
        if bound > 0.0 {
            self.worst = self.worst.min((bound - cost) / bound);
        }
    }

    fn line(&self, name: &str) -> String {
        format!("{name}: {}/{} hold, worst relative slack {:.3e}", self.checked - self.failed, self.checked, self.worst)
    }
}

fn cmd_bounds_check(config: &Path, trials: usize, seed: u64) -> Result<bool> {
    let cfg = load(config, None)?;
    let scenario = build_scenario(&cfg)?;
    let normals = scenario.normal_ids();
    if normals.is_empty() {
        bail!("config has no normal agents");
    }
    let n = scenario.state_dim();
    let max_m = scenario.network.malicious_ids().len().max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut spec, mut sep, mut cs) = (Tally::new(), Tally::new(), Tally::new());
    for t in 0..trials {
        let agent = scenario.agent(normals[t % normals.len()])?;
        let period = agent.schedule.period();
        let phase = rng.random_range(0..period);
        let m = rng.random_range(1..=max_m);
        let omegas: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1.0) * cfg.coupling).collect();
        let delta_per: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..2.0)).collect();
        let mut z = DVector::zeros(n * m);
        for (j, d) in delta_per.iter().enumerate() {
            let dir = unit_direction(&mut rng, n) * (*d * rng.random_range(0.0..=1.0));
            z.rows_mut(j * n, n).copy_from(&dir);
        }
        let k = rng.random_range(0..=cfg.horizon);
        let gamma = agent.schedule.gamma_at(phase + 1);
        let gain = agent.solution.gain(phase);
        let mut sz = DVector::zeros(n);
        for (j, w) in omegas.iter().enumerate() {
            sz += z.rows(j * n, n) * *w;
        }
        let du = gain * sz;
        let cost = additional_cost(&du, &DVector::zeros(du.len()), agent.problem.r(), gamma, k)?;
        let inputs = DeviationBoundInputs {
            k: gain.clone(),
            r: agent.problem.r().clone(),
            omegas,
            delta_total: z.norm(),
            delta_per,
            gamma,
            step: k,
        };
        spec.add(cost, spectral_bound(&inputs));
        sep.add(cost, separable_bound(&inputs)?);
        cs.add(cost, cauchy_schwarz_bound(&inputs)?);
    }
    println!("{}", spec.line("random spectral"));
    println!("{}", sep.line("random separable"));
    println!("{}", cs.line("random cauchy-schwarz"));

    let cf = run_with_counterfactual(&scenario, cfg.horizon, RunOptions::default())?;
    let (mut run_spec, mut run_sep) = (Tally::new(), Tally::new());
    for b in cf.bounds.iter().filter(|b| b.malicious_neighbors > 0) {
        run_spec.add(b.additional_cost, b.spectral);
        run_sep.add(b.additional_cost, b.separable);
    }
    println!("{}", run_spec.line("scenario spectral"));
    println!("{}", run_sep.line("scenario separable"));
    Ok([spec, sep, run_spec, run_sep].iter().all(|t| t.failed == 0))
}

fn cmd_riccati(config: &Path, id: usize) -> Result<()> {
    let cfg = load(config, None)?;
    let scenario = build_scenario(&cfg)?;
    let agent = scenario.agent(id)?;
    let role = match agent.role {
        Role::Normal => "normal",
        Role::Malicious => "malicious",
    };
    let sol = &agent.solution;
    println!("agent {id} ({role}), gammas {:?}", sol.gammas);
    for (tau, (p, k)) in sol.p.iter().zip(&sol.k).enumerate() {
        println!("phase {tau}: P ={p}K ={k}");
    }
    println!("residual {:.3e} after {} iterations", sol.residual, sol.iterations);
    let v = check_stability_condition(&agent.problem, &sol.gammas);
    println!(
        "stabilizable {}, product {:.12} vs threshold {:.12}: condition {}",
        v.stabilizable,
        v.product_value,
        v.threshold,
        if v.holds() { "holds" } else { "violated" }
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run {
            config,
            out,
            seed,
            horizon,
            schedule,
            no_adjust,
            no_isolation,
            fusion,
            counterfactual,
        } => cmd_run(
            config,
            out,
            *seed,
            *horizon,
            schedule.as_deref(),
            *no_adjust,
            *no_isolation,
            *fusion,
            *counterfactual,
        )
        .map(|()| true),
        Command::Sweep { config, schedules, out, seed } => cmd_sweep(config, schedules, out, *seed).map(|()| true),
        Command::BoundsCheck { config, trials, seed } => cmd_bounds_check(config, *trials, *seed),
        Command::Riccati { config, agent } => cmd_riccati(config, *agent).map(|()| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
