//! The three experiment pipelines: charge-rate variation on an unaged
//! cell, degradation studies at fixed rate, and degradation studies with
//! rate variation. Each trains a reduced model, evaluates the reduction
//! error over a random test set for a ladder of nested basis sizes, and
//! emits voltage/capacity data as CSV.

use crate::drivers::{capacity_csv, fom_cycle_runner, rom_cycle_runner};
use crate::sets::{
    random_test_set, train_c_rate, train_degradation_axes,
    train_rate_and_degradation, TestRanges,
};
use crate::spec::RunSpec;
use anyhow::{Context, Result};
use cellrom::degradation::{run_cycle_study, DegradationSchedule, DegradationTarget};
use cellrom::io::trajectory_csv;
use cellrom::materials::f_active;
use cellrom::metrics::relative_l2l2_error;
use cellrom::rom::{offline_build, OfflineOptions, RomArtifact, RomSolver};
use cellrom::simulate::simulate;
use cellrom::{Electrode, ParameterPoint};
use std::time::Instant;

/// Settings of experiment 1 (charge-rate variation, unaged cell).
#[derive(Debug, Clone)]
pub struct Experiment1 {
    pub c_range: (f64, f64),
    pub n_train: usize,
    pub n_test: usize,
    pub d_scale: f64,
    pub l_scale: f64,
    /// Base reduced sizes of the error ladder; each further column adds
    /// one mode per component.
    pub base_sizes: [usize; 4],
    pub ladder: usize,
}

impl Default for Experiment1 {
    fn default() -> Self {
        Self {
            c_range: (0.01, 4.0),
            n_train: 15,
            n_test: 10,
            d_scale: 0.5,
            l_scale: 0.5,
            base_sizes: [2, 2, 4, 3],
            ladder: 4,
        }
    }
}

/// Error-ladder rows: total basis size, mean test error, timings.
pub struct ErrorTable {
    pub rows: Vec<ErrorTableRow>,
}

pub struct ErrorTableRow {
    pub sizes: [usize; 4],
    pub total: usize,
    pub mean_error: f64,
    pub mean_fom_seconds: f64,
    pub mean_rom_seconds: f64,
}

impl ErrorTable {
    pub fn errors_csv(&self) -> String {
        let mut out = String::from("basis_total,u1,u2,u3,u4,mean_rel_l2l2_error\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{:.12e}\n",
                r.total, r.sizes[0], r.sizes[1], r.sizes[2], r.sizes[3], r.mean_error
            ));
        }
        out
    }

    pub fn timing_csv(&self) -> String {
        let mut out =
            String::from("basis_total,mean_fom_seconds,mean_rom_seconds,mean_speedup\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.6e},{:.6e},{:.2}\n",
                r.total,
                r.mean_fom_seconds,
                r.mean_rom_seconds,
                r.mean_fom_seconds / r.mean_rom_seconds.max(1e-12)
            ));
        }
        out
    }
}

/// Evaluate the reduction error for a ladder of nested basis sizes on a
/// common collateral basis and point set.
pub fn error_ladder(
    spec: &RunSpec,
    artifact: &RomArtifact,
    base_sizes: [usize; 4],
    ladder: usize,
    test: &[ParameterPoint],
) -> Result<ErrorTable> {
    let mesh = spec.mesh()?;
    let opts = spec.sim_options(false);

    // the full-model test trajectories are shared by every ladder rung
    let t0 = Instant::now();
    let mut fom_runs = Vec::with_capacity(test.len());
    for mu in test {
        fom_runs.push(
            simulate(mu, &spec.config, &mesh, &opts)
                .map_err(|e| anyhow::anyhow!("full model failed at mu {mu:?}: {e}"))?,
        );
    }
    let mean_fom_seconds = t0.elapsed().as_secs_f64() / test.len() as f64;

    let mut rows = Vec::with_capacity(ladder);
    for step in 0..ladder {
        let sizes = base_sizes.map(|s| s + step);
        let truncated = artifact.with_reduced_sizes(sizes);
        let actual = truncated.reduced_sizes();
        let solver = RomSolver::new(&truncated, &mesh, &spec.config)?;
        let mut errors = 0.0;
        let mut rom_seconds = 0.0;
        for (mu, fom) in test.iter().zip(&fom_runs) {
            let t1 = Instant::now();
            let (rom_traj, _) = solver
                .simulate(mu, &opts)
                .map_err(|e| anyhow::anyhow!("reduced model failed at mu {mu:?}: {e}"))?;
            rom_seconds += t1.elapsed().as_secs_f64();
            let reconstructed = rom_traj.reconstruct(&truncated, &mesh);
            errors += relative_l2l2_error(&fom.trajectory, &reconstructed)?;
        }
        rows.push(ErrorTableRow {
            sizes: actual,
            total: actual.iter().sum(),
            mean_error: errors / test.len() as f64,
            mean_fom_seconds,
            mean_rom_seconds: rom_seconds / test.len() as f64,
        });
    }
    Ok(ErrorTable { rows })
}

/// The open-circuit voltage curve matching a trajectory: the equilibrium
/// voltage at the instantaneous electrode states of charge.
pub fn ocp_curve(
    spec: &RunSpec,
    traj: &cellrom::Trajectory,
    mesh: &cellrom::PseudoMesh,
) -> Vec<(f64, f64, f64)> {
    traj.states
        .iter()
        .map(|s| {
            let soc_an = s.state_of_charge(mesh, Electrode::Anode);
            let soc_cat = s.state_of_charge(mesh, Electrode::Cathode);
            let ocp = f_active(soc_an, spec.config.anode.enthalpy_gamma).unwrap_or(f64::NAN)
                - f_active(soc_cat, spec.config.cathode.enthalpy_gamma).unwrap_or(f64::NAN);
            (s.time, soc_cat, ocp)
        })
        .collect()
}

pub struct ExperimentReport {
    pub table: ErrorTable,
    pub artifact: RomArtifact,
}

/// Experiment 1: train over the charge rate, emit the error ladder, the
/// voltage-capacity spectrum of a low-rate discharge against the
/// open-circuit curve, and spectra for a set of rates.
pub fn run_experiment_1(spec: &RunSpec, exp: &Experiment1) -> Result<ExperimentReport> {
    spec.ensure_out_dir()?;
    let mesh = spec.mesh()?;
    let train = train_c_rate(
        exp.c_range.0,
        exp.c_range.1,
        exp.n_train,
        exp.d_scale,
        exp.l_scale,
    );
    let opts = OfflineOptions {
        sim: spec.sim_options(true),
        tolerances: spec.tolerances,
        parallel: true,
    };
    let t0 = Instant::now();
    let (artifact, stats) = offline_build(&spec.config, &mesh, &train, &opts)
        .context("experiment 1 offline phase")?;
    println!(
        "exp1 offline: {:.2}s ({} solution / {} operator snapshots), sizes {:?}, points {:?}",
        t0.elapsed().as_secs_f64(),
        stats.solution_snapshots,
        stats.operator_snapshots,
        artifact.reduced_sizes(),
        artifact.point_counts()
    );
    artifact.save(&spec.out_path("exp1_artifact.bin"))?;

    let test = random_test_set(
        &TestRanges {
            c_rate: exp.c_range,
            d_scale: (exp.d_scale, exp.d_scale),
            l_scale: (exp.l_scale, exp.l_scale),
        },
        exp.n_test,
        spec.seed,
    );
    let table = error_ladder(spec, &artifact, exp.base_sizes, exp.ladder, &test)
        .context("experiment 1 error ladder")?;
    spec.write_out("exp1_errors.csv", &table.errors_csv())?;
    spec.write_out("exp1_timing.csv", &table.timing_csv())?;
    for row in &table.rows {
        println!(
            "exp1 basis {:>3}: mean error {:.3e}",
            row.total, row.mean_error
        );
    }

    // voltage-capacity spectra for a bundle of rates, plus the OCP curve
    let mut spectrum = String::from("c_rate,tau,soc_cathode,e_dimless,ocp_dimless\n");
    for &c in &[exp.c_range.0, 0.1, 0.5, 1.0, 2.0, exp.c_range.1] {
        let mu = ParameterPoint::new(c, exp.d_scale, exp.l_scale);
        let run = simulate(&mu, &spec.config, &mesh, &spec.sim_options(false))?;
        for ((tau, soc, ocp), s) in ocp_curve(spec, &run.trajectory, &mesh)
            .into_iter()
            .zip(&run.trajectory.states)
        {
            spectrum.push_str(&format!(
                "{c:.12e},{tau:.12e},{soc:.12e},{:.12e},{ocp:.12e}\n",
                s.cell_voltage_dimless(&mesh)
            ));
        }
    }
    spec.write_out("exp1_spectrum.csv", &spectrum)?;
    Ok(ExperimentReport { table, artifact })
}

/// Settings of experiments 2 and 3 (degradation studies).
#[derive(Debug, Clone)]
pub struct DegradationExperiment {
    pub f0: f64,
    pub betas: Vec<f64>,
    pub n_cycles: usize,
    /// Cycle indices sampled by the full model (the reduced model samples
    /// every cycle).
    pub fom_sample_stride: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub base_sizes: [usize; 4],
    pub ladder: usize,
    /// Charge-rate range; a single value in experiment 2.
    pub c_range: (f64, f64),
    pub couple_c_rate: bool,
    pub target: DegradationTarget,
}

impl DegradationExperiment {
    pub fn experiment_2() -> Self {
        Self {
            f0: 0.5,
            betas: vec![0.1, 0.4, 0.6, 0.9],
            n_cycles: 1000,
            fom_sample_stride: 100,
            n_train: 10,
            n_test: 10,
            base_sizes: [2, 2, 4, 2],
            ladder: 4,
            c_range: (1.0, 1.0),
            couple_c_rate: false,
            target: DegradationTarget::Both,
        }
    }

    pub fn experiment_3() -> Self {
        Self {
            betas: vec![0.6],
            c_range: (0.5, 2.0),
            couple_c_rate: true,
            n_train: 15,
            base_sizes: [3, 3, 4, 3],
            ..Self::experiment_2()
        }
    }
}

/// Experiments 2 and 3 share the pipeline; they differ in the parameter
/// space the reduced model is trained on and in the rate coupling of the
/// degradation law.
pub fn run_degradation_experiment(
    spec: &RunSpec,
    exp: &DegradationExperiment,
    label: &str,
) -> Result<ExperimentReport> {
    spec.ensure_out_dir()?;
    let mesh = spec.mesh()?;
    let beta_min = exp.betas.iter().cloned().fold(1.0f64, f64::min);
    let train = if exp.c_range.0 == exp.c_range.1 {
        train_degradation_axes(exp.c_range.0, exp.f0, beta_min, exp.n_train)
    } else {
        let schedule = DegradationSchedule::new(
            exp.f0,
            beta_min,
            exp.n_cycles,
            exp.couple_c_rate,
            exp.target,
        )?;
        let rates = (exp.n_train / 3).max(2);
        train_rate_and_degradation(exp.c_range.0, exp.c_range.1, rates, &schedule, 3)
    };
    let opts = OfflineOptions {
        sim: spec.sim_options(true),
        tolerances: spec.tolerances,
        parallel: true,
    };
    let t0 = Instant::now();
    let (artifact, _) = offline_build(&spec.config, &mesh, &train, &opts)
        .with_context(|| format!("{label} offline phase"))?;
    println!(
        "{label} offline: {:.2}s over |train|={}, sizes {:?}, points {:?}",
        t0.elapsed().as_secs_f64(),
        train.len(),
        artifact.reduced_sizes(),
        artifact.point_counts()
    );
    artifact.save(&spec.out_path(&format!("{label}_artifact.bin")))?;

    // reduction-error ladder over a random test set of the trained space
    let test = random_test_set(
        &TestRanges {
            c_rate: exp.c_range,
            d_scale: (beta_min * exp.f0, exp.f0),
            l_scale: (beta_min * exp.f0, exp.f0),
        },
        exp.n_test,
        spec.seed,
    );
    let table = error_ladder(spec, &artifact, exp.base_sizes, exp.ladder, &test)?;
    spec.write_out(&format!("{label}_errors.csv"), &table.errors_csv())?;
    spec.write_out(&format!("{label}_timing.csv"), &table.timing_csv())?;
    for row in &table.rows {
        println!(
            "{label} basis {:>3}: mean error {:.3e}",
            row.total, row.mean_error
        );
    }

    // capacity-over-cycles studies per beta: reduced model on all sampled
    // cycles, full model on a sparse subset, both exported
    let solver = RomSolver::new(&artifact, &mesh, &spec.config)?;
    let mid_rate = 0.5 * (exp.c_range.0 + exp.c_range.1);
    let base = ParameterPoint::new(mid_rate, exp.f0, exp.f0);
    let mut summary = String::from("beta,first_capacity,last_capacity\n");
    for &beta in &exp.betas {
        let schedule =
            DegradationSchedule::new(exp.f0, beta, exp.n_cycles, exp.couple_c_rate, exp.target)?;
        let rom_cycles: Vec<usize> = (0..=exp.n_cycles)
            .step_by((exp.n_cycles / 100).max(1))
            .collect();
        let rom_study = run_cycle_study(
            &schedule,
            &base,
            &rom_cycles,
            rom_cycle_runner(spec, &solver, false),
        )?;
        let fom_cycles: Vec<usize> = (0..=exp.n_cycles)
            .step_by(exp.fom_sample_stride.max(1))
            .collect();
        let fom_study = run_cycle_study(
            &schedule,
            &base,
            &fom_cycles,
            fom_cycle_runner(spec, &mesh, false),
        )?;
        let tag = format!("{label}_beta{beta}");
        spec.write_out(&format!("{tag}_rom_capacity.csv"), &capacity_csv(&rom_study))?;
        spec.write_out(
            &format!("{tag}_rom_cycles_timed.csv"),
            &rom_study.to_csv(),
        )?;
        spec.write_out(&format!("{tag}_fom_capacity.csv"), &capacity_csv(&fom_study))?;
        let (first, last) = (
            rom_study.records.first().and_then(|r| r.soc_at_emin),
            rom_study.records.last().and_then(|r| r.soc_at_emin),
        );
        summary.push_str(&format!(
            "{beta:.3},{:.12e},{:.12e}\n",
            first.unwrap_or(f64::NAN),
            last.unwrap_or(f64::NAN)
        ));
        println!(
            "{label} beta={beta}: capacity {:.4} -> {:.4} over {} cycles",
            first.unwrap_or(f64::NAN),
            last.unwrap_or(f64::NAN),
            exp.n_cycles
        );
    }
    spec.write_out(&format!("{label}_capacity_summary.csv"), &summary)?;

    // a voltage spectrum of the aged vs fresh cell at the middle rate
    let mut spectrum = String::from("state,tau,soc_cathode,e_dimless\n");
    for (state, mu) in [
        ("fresh", base),
        (
            "aged",
            ParameterPoint::new(mid_rate, beta_min * exp.f0, beta_min * exp.f0),
        ),
    ] {
        let run = simulate(&mu, &spec.config, &mesh, &spec.sim_options(false))?;
        for s in &run.trajectory.states {
            spectrum.push_str(&format!(
                "{state},{:.12e},{:.12e},{:.12e}\n",
                s.time,
                s.state_of_charge(&mesh, Electrode::Cathode),
                s.cell_voltage_dimless(&mesh)
            ));
        }
    }
    spec.write_out(&format!("{label}_spectrum.csv"), &spectrum)?;
    Ok(ExperimentReport { table, artifact })
}

/// Experiment 2: degradation of the reaction rate and diffusion
/// coefficient at a fixed charge rate.
pub fn run_experiment_2(spec: &RunSpec, exp: &DegradationExperiment) -> Result<ExperimentReport> {
    run_degradation_experiment(spec, exp, "exp2")
}

/// Experiment 3: degradation coupled to a varying charge rate.
pub fn run_experiment_3(spec: &RunSpec, exp: &DegradationExperiment) -> Result<ExperimentReport> {
    run_degradation_experiment(spec, exp, "exp3")
}

/// Export one trajectory (used by the spectrum subcommands).
pub fn export_single_run(spec: &RunSpec, mu: &ParameterPoint, name: &str) -> Result<()> {
    let mesh = spec.mesh()?;
    let run = simulate(mu, &spec.config, &mesh, &spec.sim_options(false))?;
    spec.write_out(name, &trajectory_csv(&run.trajectory, &mesh, &spec.config))?;
    Ok(())
}
