use clap::{Args, Parser, Subcommand};
use cone_bandit::analysis::{
    bound_multiple_shift, bound_single_shift, bound_special_family, dissimilarity, BoundParams,
};
use cone_bandit::environment::{DistributionSpec, Phase, ShiftSchedule};
use cone_bandit::harness::{export_gap_table, parse_cone_arg, run_experiment, run_with_jobs, sweep, RunConfig};
use cone_bandit::pareto::{ArmMeanTable, GapSolverConfig};
use serde_json::json;
use std::fs::File;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "cone-bandit", version, about = "Preference-cone contextual bandit simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    config: PathBuf,
    /// Replace the configured seeds with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every seed of a configuration.
    Run(RunArgs),
    /// Run the Cartesian product of the configuration's sweep axes.
    Sweep(RunArgs),
    /// Pareto flags and gaps of a table of arm means under one or more cones.
    GapTable {
        /// CSV with columns `label, r1, ..., rM`.
        arms: PathBuf,
        /// `NAME=orthant` or `NAME=a,b;c,d` (generator rows).
        #[arg(required = true)]
        cones: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1e-4)]
        grid_resolution: f64,
    },
    /// Evaluate the regret bounds with unit constants.
    Bounds(BoundArgs),
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long, default_value_t = 0.2)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 20)]
    arms: usize,
    #[arg(long, default_value_t = 2)]
    objectives: usize,
    /// Defaults to `1/T`.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value_t = 2000)]
    change_point: u64,
    #[arg(long, default_value_t = 50000)]
    horizon: u64,
    /// Defaults to the depth-`h` dissimilarity of the source phases against a uniform target.
    #[arg(long)]
    rho_pq: Option<f64>,
    /// Defaults to `2^h`.
    #[arg(long)]
    rho_qq: Option<f64>,
    #[arg(long, default_value_t = 5)]
    depth: u32,
    /// Power-law source phase `NU:DURATION`; repeat for several shifts.
    #[arg(long = "phase")]
    phases: Vec<String>,
}

fn parse_phase(s: &str) -> Result<Phase, String> {
    let (nu, dur) = s.split_once(':').ok_or_else(|| format!("phase `{s}` is not NU:DURATION"))?;
    Ok(Phase {
        dist: DistributionSpec::power_law(nu.trim().parse().map_err(|e| format!("phase `{s}`: {e}"))?),
        duration: dur.trim().parse().map_err(|e| format!("phase `{s}`: {e}"))?,
    })
}

fn load(args: &RunArgs) -> Result<RunConfig, String> {
    let mut cfg = RunConfig::from_path(&args.config).map_err(|e| e.to_string())?;
    if let Some(seed) = args.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(dir) = &args.out_dir {
        cfg.out_dir = Some(dir.clone());
    }
    if cfg.out_dir.is_none() {
        cfg.out_dir = Some(PathBuf::from("runs").join(if cfg.name.is_empty() { "run" } else { &cfg.name }));
    }
    Ok(cfg)
}

fn bounds(a: &BoundArgs) -> Result<serde_json::Value, String> {
    let phases = if a.phases.is_empty() {
        vec![Phase {
            dist: DistributionSpec::power_law(2.0),
            duration: a.change_point,
        }]
    } else {
        a.phases.iter().map(|s| parse_phase(s)).collect::<Result<_, _>>()?
    };
    let schedule = ShiftSchedule {
        phases: phases.into_iter().filter(|p| p.duration > 0).collect(),
        target: DistributionSpec::uniform(1),
        horizon: a.horizon,
    };
    let change_point = schedule.change_point();
    let u = DistributionSpec::uniform(1);
    let rho_qq = match a.rho_qq {
        Some(v) => v,
        None => dissimilarity(&u, &u, a.depth, 1).map_err(|e| e.to_string())?.value(),
    };
    let rho_pq = match (a.rho_pq, schedule.phases.first()) {
        (Some(v), _) => v,
        (None, Some(p)) => dissimilarity(&p.dist, &u, a.depth, 1).map_err(|e| e.to_string())?.value(),
        (None, None) => f64::INFINITY,
    };
    let p = BoundParams {
        alpha: a.alpha,
        c_alpha: 1.0,
        beta: a.beta,
        c_beta: 1.0,
        gamma: a.gamma,
        c_gamma: 1.0 + a.gamma,
        arms: a.arms,
        objectives: a.objectives,
        delta: a.delta.unwrap_or(1.0 / a.horizon as f64),
        change_point,
        horizon: a.horizon,
        rho_pq,
        rho_qq,
    };
    let show = |r: Result<f64, _>| match r {
        Ok(v) => json!(v),
        Err(e) => json!(format!("error: {e}")),
    };
    Ok(json!({
        "params": p,
        "single_shift": show(bound_single_shift(&p)),
        "special_family": show(bound_special_family(&p)),
        "multiple_shift": show(bound_multiple_shift(&p, &schedule, a.depth)),
    }))
}

fn execute(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Run(args) => {
            let cfg = load(&args)?;
            let r = run_with_jobs(args.jobs, || run_experiment(&cfg))
                .map_err(|e| e.to_string())?
                .map_err(|e| e.to_string())?;
            let s = r.summary();
            println!(
                "{} seeds, cumulative regret mean {:.4} std {:.4}, invariant violations {}, outputs in {}",
                s.seeds,
                s.mean,
                s.std,
                r.invariant_violations(),
                cfg.out_dir.as_deref().unwrap_or(std::path::Path::new(".")).display()
            );
        }
        Command::Sweep(args) => {
            let cfg = load(&args)?;
            let cells = run_with_jobs(args.jobs, || sweep(&cfg))
                .map_err(|e| e.to_string())?
                .map_err(|e| e.to_string())?;
            let mut failed = 0;
            for c in &cells {
                match &c.result {
                    Ok(r) => println!("{:?}: mean {:.4} std {:.4}", c.point, r.summary().mean, r.summary().std),
                    Err(e) => {
                        failed += 1;
                        eprintln!("{:?}: {e}", c.point);
                    }
                }
            }
            if failed > 0 {
                return Err(format!("{failed} of {} sweep cells failed", cells.len()));
            }
        }
        Command::GapTable {
            arms,
            cones,
            out,
            grid_resolution,
        } => {
            let file = File::open(&arms).map_err(|e| format!("{}: {e}", arms.display()))?;
            let table = ArmMeanTable::from_csv(file).map_err(|e| e.to_string())?;
            let cones = cones
                .iter()
                .enumerate()
                .map(|(i, c)| parse_cone_arg(c, i + 1, table.dim()))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| e.to_string())?;
            let cfg = GapSolverConfig {
                grid_resolution,
                ..GapSolverConfig::default()
            };
            export_gap_table(&table, &cones, &cfg, &out).map_err(|e| e.to_string())?;
            println!("wrote {}", out.display());
        }
        Command::Bounds(args) => {
            let v = bounds(&args)?;
            println!("{}", serde_json::to_string_pretty(&v).map_err(|e| e.to_string())?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
