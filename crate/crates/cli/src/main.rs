//! The `cellrom` command line: full-order simulations, reduced-model
//! construction and evaluation, degradation cycle studies, experiment
//! pipelines, and the verification suite.

use anyhow::{bail, Context, Result};
use cellrom::degradation::{DegradationSchedule, DegradationTarget};
use cellrom::rom::RomTolerances;
use cellrom::ParameterPoint;
use cellrom_cli::drivers;
use cellrom_cli::experiments::{
    run_experiment_1, run_experiment_2, run_experiment_3, DegradationExperiment, Experiment1,
};
use cellrom_cli::sets::{random_test_set, train_c_rate, TestRanges};
use cellrom_cli::spec::RunSpec;
use cellrom_cli::verify::{report_csv, run_verify};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "cellrom",
    about = "Homogenized intercalation-cell simulator with reduced-basis acceleration",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Key-value configuration file; defaults are built in.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Mesh resolution as `macro_per_region,micro`.
    #[arg(long, default_value = "20,10")]
    mesh: String,
    /// Time step.
    #[arg(long, default_value_t = 1e-2)]
    dt: f64,
    /// End of the time interval (early cutoff applies regardless).
    #[arg(long, default_value_t = 1.0)]
    t_end: f64,
    /// Newton tolerance (relative update norm).
    #[arg(long, default_value_t = 1e-5)]
    newton_rtol: f64,
    /// Seed of every random draw.
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct PointArgs {
    /// Charge rate.
    #[arg(long, default_value_t = 1.0)]
    c_rate: f64,
    /// Diffusion scale applied to both electrodes.
    #[arg(long, default_value_t = 0.5)]
    d_scale: f64,
    /// Reaction-rate scale applied to both electrodes.
    #[arg(long, default_value_t = 0.5)]
    l_scale: f64,
}

#[derive(Args, Clone)]
struct ToleranceArgs {
    /// Solution-basis compression tolerance.
    #[arg(long, default_value_t = 4e-8)]
    eps_rb: f64,
    /// Collateral-basis compression tolerance.
    #[arg(long, default_value_t = 4e-8)]
    eps_collateral: f64,
    /// Balance parameter of the hierarchical compression.
    #[arg(long, default_value_t = 0.9)]
    omega: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Run one full-order discharge and export the observables.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        point: PointArgs,
        /// Also write the full-state binary dump.
        #[arg(long)]
        dump_states: bool,
    },
    /// Build a reduced model from equidistant charge-rate training runs.
    Offline {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        tol: ToleranceArgs,
        /// Training charge rates as `lo:hi:count`.
        #[arg(long, default_value = "0.01:4:15")]
        train: String,
        #[arg(long, default_value_t = 0.5)]
        d_scale: f64,
        #[arg(long, default_value_t = 0.5)]
        l_scale: f64,
        /// Artifact output path.
        #[arg(long, default_value = "out/rom.bin")]
        artifact: PathBuf,
    },
    /// Simulate one parameter point with a persisted reduced model.
    RomRun {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        point: PointArgs,
        #[arg(long)]
        artifact: PathBuf,
    },
    /// Capacity-over-cycles study under a degradation schedule.
    CycleStudy {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        point: PointArgs,
        /// End fraction of the degraded parameters.
        #[arg(long, default_value_t = 0.6)]
        beta: f64,
        /// Cycle count.
        #[arg(long, default_value_t = 50)]
        cycles: usize,
        /// Degraded parameters: reaction, diffusion, or both.
        #[arg(long, default_value = "both")]
        target: String,
        /// Scale the decay exponent by the charge rate.
        #[arg(long)]
        coupled: bool,
        /// Sample every k-th cycle.
        #[arg(long, default_value_t = 1)]
        stride: usize,
        /// Reduced-model artifact; the full model runs when omitted.
        #[arg(long)]
        artifact: Option<PathBuf>,
        /// Initial value of the degraded parameters.
        #[arg(long, default_value_t = 0.5)]
        f0: f64,
    },
    /// Run the invariant suite and write a machine-readable report.
    Verify {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Compare a reduced model against the full model on a random test
    /// set.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        artifact: PathBuf,
        /// Test-set size.
        #[arg(long, default_value_t = 10)]
        test: usize,
        /// Charge-rate range sampled by the test set, `lo:hi`.
        #[arg(long, default_value = "0.01:4")]
        c_range: String,
        #[arg(long, default_value_t = 0.5)]
        d_scale: f64,
        #[arg(long, default_value_t = 0.5)]
        l_scale: f64,
    },
    /// Experiment 1: charge-rate variation on the unaged cell.
    Exp1 {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        tol: ToleranceArgs,
        #[arg(long, default_value_t = 15)]
        train: usize,
        #[arg(long, default_value_t = 10)]
        test: usize,
    },
    /// Experiment 2: reaction/diffusion degradation at fixed rate.
    Exp2 {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        tol: ToleranceArgs,
        #[arg(long, default_value_t = 10)]
        train: usize,
        #[arg(long, default_value_t = 10)]
        test: usize,
        /// Cycle count of the studies.
        #[arg(long, default_value_t = 1000)]
        cycles: usize,
        /// Comma-separated end fractions.
        #[arg(long, default_value = "0.1,0.4,0.6,0.9")]
        betas: String,
    },
    /// Experiment 3: degradation coupled to a varying charge rate.
    Exp3 {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        tol: ToleranceArgs,
        #[arg(long, default_value_t = 15)]
        train: usize,
        #[arg(long, default_value_t = 10)]
        test: usize,
        #[arg(long, default_value_t = 1000)]
        cycles: usize,
        #[arg(long, default_value_t = 0.6)]
        beta: f64,
        /// Charge-rate range `lo:hi`.
        #[arg(long, default_value = "0.5:2")]
        c_range: String,
    },
}

fn parse_mesh(s: &str) -> Result<(usize, usize)> {
    let (a, b) = s
        .split_once(',')
        .context("mesh must be `macro_per_region,micro`")?;
    Ok((a.trim().parse()?, b.trim().parse()?))
}

fn parse_range(s: &str) -> Result<(f64, f64)> {
    let (a, b) = s.split_once(':').context("range must be `lo:hi`")?;
    Ok((a.trim().parse()?, b.trim().parse()?))
}

fn parse_grid(s: &str) -> Result<(f64, f64, usize)> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        bail!("training grid must be `lo:hi:count`");
    }
    Ok((
        parts[0].trim().parse()?,
        parts[1].trim().parse()?,
        parts[2].trim().parse()?,
    ))
}

fn build_spec(common: &CommonArgs, tol: Option<&ToleranceArgs>) -> Result<RunSpec> {
    let (n, m) = parse_mesh(&common.mesh)?;
    let mut spec = RunSpec {
        n_per_region: n,
        n_micro: m,
        dtau: common.dt,
        t_end: common.t_end,
        newton_rtol: common.newton_rtol,
        seed: common.seed,
        out_dir: common.out.clone(),
        ..RunSpec::default()
    };
    if let Some(t) = tol {
        spec.tolerances = RomTolerances {
            eps_rb: t.eps_rb,
            eps_collateral: t.eps_collateral,
            omega: t.omega,
        };
    }
    spec.load_config(common.config.as_deref())?;
    Ok(spec)
}

fn parse_target(s: &str) -> Result<DegradationTarget> {
    Ok(match s {
        "reaction" | "reaction_rate" => DegradationTarget::ReactionRate,
        "diffusion" => DegradationTarget::Diffusion,
        "both" => DegradationTarget::Both,
        other => bail!("unknown degradation target `{other}`"),
    })
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate {
            common,
            point,
            dump_states,
        } => {
            let spec = build_spec(&common, None)?;
            let mu = ParameterPoint::new(point.c_rate, point.d_scale, point.l_scale);
            drivers::run_simulate(&spec, &mu, dump_states)?;
        }
        Command::Offline {
            common,
            tol,
            train,
            d_scale,
            l_scale,
            artifact,
        } => {
            let spec = build_spec(&common, Some(&tol))?;
            let (lo, hi, count) = parse_grid(&train)?;
            let train = train_c_rate(lo, hi, count, d_scale, l_scale);
            if let Some(parent) = artifact.parent() {
                std::fs::create_dir_all(parent)?;
            }
            drivers::run_offline(&spec, &train, &artifact)?;
        }
        Command::RomRun {
            common,
            point,
            artifact,
        } => {
            let spec = build_spec(&common, None)?;
            let mu = ParameterPoint::new(point.c_rate, point.d_scale, point.l_scale);
            drivers::run_rom(&spec, &mu, &artifact)?;
        }
        Command::CycleStudy {
            common,
            point,
            beta,
            cycles,
            target,
            coupled,
            stride,
            artifact,
            f0,
        } => {
            let spec = build_spec(&common, None)?;
            let schedule =
                DegradationSchedule::new(f0, beta, cycles, coupled, parse_target(&target)?)?;
            let base = ParameterPoint::new(point.c_rate, f0, f0);
            let sample: Vec<usize> = (0..=cycles).step_by(stride.max(1)).collect();
            drivers::run_cycle_study_driver(
                &spec,
                &schedule,
                &base,
                &sample,
                artifact.as_deref(),
                "study",
            )?;
        }
        Command::Verify { common } => {
            let spec = build_spec(&common, None)?;
            let checks = run_verify(&spec)?;
            let csv = report_csv(&checks);
            let path = spec.write_out("verify.csv", &csv)?;
            let mut failed = 0;
            for c in &checks {
                println!(
                    "{:<42} {}  measured {:.3e} vs {:.3e}",
                    c.name,
                    if c.passed() { "pass" } else { "FAIL" },
                    c.measured,
                    c.threshold
                );
                if !c.passed() {
                    failed += 1;
                }
            }
            println!("report: {}", path.display());
            if failed > 0 {
                bail!("{failed} verification checks failed");
            }
        }
        Command::Compare {
            common,
            artifact,
            test,
            c_range,
            d_scale,
            l_scale,
        } => {
            let spec = build_spec(&common, None)?;
            let (lo, hi) = parse_range(&c_range)?;
            let set = random_test_set(
                &TestRanges {
                    c_rate: (lo, hi),
                    d_scale: (d_scale, d_scale),
                    l_scale: (l_scale, l_scale),
                },
                test,
                spec.seed,
            );
            drivers::run_compare(&spec, &artifact, &set)?;
        }
        Command::Exp1 {
            common,
            tol,
            train,
            test,
        } => {
            let spec = build_spec(&common, Some(&tol))?;
            let exp = Experiment1 {
                n_train: train,
                n_test: test,
                ..Experiment1::default()
            };
            run_experiment_1(&spec, &exp)?;
        }
        Command::Exp2 {
            common,
            tol,
            train,
            test,
            cycles,
            betas,
        } => {
            let spec = build_spec(&common, Some(&tol))?;
            let betas: Vec<f64> = betas
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .context("parsing beta list")?;
            let exp = DegradationExperiment {
                n_train: train,
                n_test: test,
                n_cycles: cycles,
                betas,
                ..DegradationExperiment::experiment_2()
            };
            run_experiment_2(&spec, &exp)?;
        }
        Command::Exp3 {
            common,
            tol,
            train,
            test,
            cycles,
            beta,
            c_range,
        } => {
            let spec = build_spec(&common, Some(&tol))?;
            let exp = DegradationExperiment {
                n_train: train,
                n_test: test,
                n_cycles: cycles,
                betas: vec![beta],
                c_range: parse_range(&c_range)?,
                ..DegradationExperiment::experiment_3()
            };
            run_experiment_3(&spec, &exp)?;
        }
    }
    Ok(())
}
