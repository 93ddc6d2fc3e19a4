//! One driver per CLI subcommand, plus shared reporting helpers.
//!
//! Result files are written as CSV. Timing data goes into separate
//! `*_timing.csv` files so that every result file is byte-reproducible for
//! a fixed seed (wall-clock numbers never are).

use crate::spec::RunSpec;
use anyhow::{anyhow, bail, Context, Result};
use cellrom::degradation::{run_cycle_study, CycleStudyResult, DegradationSchedule};
use cellrom::io::{trajectory_csv, write_state_dump};
use cellrom::metrics::relative_l2l2_error;
use cellrom::rom::{offline_build, OfflineOptions, RomArtifact, RomSolver};
use cellrom::simulate::simulate;
use cellrom::{Electrode, ParameterPoint, PseudoMesh, Trajectory};
use std::path::Path;
use std::time::Instant;

/// Run one full-order discharge and export the observables.
pub fn run_simulate(spec: &RunSpec, mu: &ParameterPoint, dump_states: bool) -> Result<()> {
    let mesh = spec.mesh()?;
    let opts = spec.sim_options(false);
    let start = Instant::now();
    let result = simulate(mu, &spec.config, &mesh, &opts)?;
    let seconds = start.elapsed().as_secs_f64();
    let csv = trajectory_csv(&result.trajectory, &mesh, &spec.config);
    let path = spec.write_out("trajectory.csv", &csv)?;
    spec.write_out(
        "simulate_timing.csv",
        &format!("wall_seconds,newton_iterations\n{seconds:.6e},{}\n", result.newton_iterations_total),
    )?;
    if dump_states {
        spec.ensure_out_dir()?;
        write_state_dump(&spec.out_path("states.bin"), &result.trajectory, &mesh)?;
    }
    let last = result.trajectory.states.last().expect("nonempty");
    println!(
        "simulate: {} steps to tau={:.3} (cutoff: {}), terminal soc={:.4}, E={:.4} ({:.4} V); wrote {}",
        result.trajectory.len() - 1,
        last.time,
        result.trajectory.termination.reached_e_min,
        last.state_of_charge(&mesh, Electrode::Cathode),
        last.cell_voltage_dimless(&mesh),
        last.cell_voltage_volts(&mesh, &spec.config),
        path.display()
    );
    Ok(())
}

/// Build a reduced model from a training set and persist the artifact.
pub fn run_offline(
    spec: &RunSpec,
    train: &[ParameterPoint],
    artifact_path: &Path,
) -> Result<RomArtifact> {
    let mesh = spec.mesh()?;
    let opts = OfflineOptions {
        sim: spec.sim_options(true),
        tolerances: spec.tolerances,
        parallel: true,
    };
    let (artifact, stats) = offline_build(&spec.config, &mesh, train, &opts)?;
    artifact.save(artifact_path)?;
    println!(
        "offline: |train|={} basis sizes {:?} points {:?} (max condition {:.2e}); \
         fom {:.2}s + compression {:.2}s; wrote {}",
        train.len(),
        artifact.reduced_sizes(),
        artifact.point_counts(),
        artifact
            .point_conditions
            .iter()
            .cloned()
            .fold(0.0f64, f64::max),
        stats.fom_seconds,
        stats.compression_seconds,
        artifact_path.display()
    );
    Ok(artifact)
}

/// Load an artifact and simulate one parameter point online.
pub fn run_rom(spec: &RunSpec, mu: &ParameterPoint, artifact_path: &Path) -> Result<()> {
    let mesh = spec.mesh()?;
    let artifact = RomArtifact::load(artifact_path)?;
    let solver = RomSolver::new(&artifact, &mesh, &spec.config)?;
    let opts = spec.sim_options(false);
    let start = Instant::now();
    let (rom_traj, stats) = solver.simulate(mu, &opts)?;
    let seconds = start.elapsed().as_secs_f64();
    let reconstructed = rom_traj.reconstruct(&artifact, &mesh);
    let path = spec.write_out(
        "rom_trajectory.csv",
        &trajectory_csv(&reconstructed, &mesh, &spec.config),
    )?;
    spec.write_out(
        "rom_timing.csv",
        &format!(
            "wall_seconds,newton_iterations,dofs_touched_per_apply\n{seconds:.6e},{},{}\n",
            stats.newton_iterations_total, stats.dofs_touched_per_apply
        ),
    )?;
    let last = reconstructed.states.last().expect("nonempty");
    println!(
        "rom-run: {} steps to tau={:.3} (cutoff: {}), terminal soc={:.4}; wrote {}",
        reconstructed.len() - 1,
        last.time,
        reconstructed.termination.reached_e_min,
        last.state_of_charge(&mesh, Electrode::Cathode),
        path.display()
    );
    Ok(())
}

/// Thin a voltage-capacity curve to at most `max_points` samples.
fn thinned_curve(traj: &Trajectory, mesh: &PseudoMesh, max_points: usize) -> Vec<(f64, f64)> {
    let stride = (traj.len() / max_points.max(1)).max(1);
    traj.states
        .iter()
        .step_by(stride)
        .map(|s| {
            (
                s.state_of_charge(mesh, Electrode::Cathode),
                s.cell_voltage_dimless(mesh),
            )
        })
        .collect()
}

/// A cycle runner backed by the full-order model.
pub fn fom_cycle_runner<'a>(
    spec: &'a RunSpec,
    mesh: &'a PseudoMesh,
    keep_curves: bool,
) -> impl FnMut(&ParameterPoint) -> cellrom::Result<cellrom::degradation::CycleOutcome> + 'a {
    let opts = spec.sim_options(false);
    move |mu| {
        let r = simulate(mu, &spec.config, mesh, &opts)?;
        Ok((
            r.trajectory.capacity_at_cutoff(mesh, opts.e_min),
            r.trajectory.termination.reached_e_min,
            keep_curves.then(|| thinned_curve(&r.trajectory, mesh, 64)),
        ))
    }
}

/// A cycle runner backed by a reduced model.
pub fn rom_cycle_runner<'a>(
    spec: &'a RunSpec,
    solver: &'a RomSolver<'a>,
    keep_curves: bool,
) -> impl FnMut(&ParameterPoint) -> cellrom::Result<cellrom::degradation::CycleOutcome> + 'a {
    let opts = spec.sim_options(false);
    move |mu| {
        let (rom_traj, _) = solver.simulate(mu, &opts)?;
        let curve = keep_curves.then(|| {
            let reconstructed = rom_traj.reconstruct(solver.artifact, solver.mesh());
            thinned_curve(&reconstructed, solver.mesh(), 64)
        });
        Ok((
            rom_traj.capacity_at_cutoff(solver.artifact, solver.mesh(), opts.e_min),
            rom_traj.termination.reached_e_min,
            curve,
        ))
    }
}

/// Capacity-vs-cycle CSV without timing columns (byte-reproducible).
pub fn capacity_csv(study: &CycleStudyResult) -> String {
    let mut out = String::from("n,d_value,l_value,c_rate,soc_at_emin\n");
    for r in &study.records {
        let soc = r
            .soc_at_emin
            .map_or_else(|| "nan".to_string(), |v| format!("{v:.12e}"));
        out.push_str(&format!(
            "{},{:.12e},{:.12e},{:.12e},{soc}\n",
            r.cycle, r.parameter.d_scale, r.parameter.l_scale, r.parameter.c_rate
        ));
    }
    out
}

/// Run a cycle study with either the full-order model or a reduced model.
#[allow(clippy::too_many_arguments)]
pub fn run_cycle_study_driver(
    spec: &RunSpec,
    schedule: &DegradationSchedule,
    base: &ParameterPoint,
    sample_cycles: &[usize],
    artifact_path: Option<&Path>,
    label: &str,
) -> Result<CycleStudyResult> {
    let mesh = spec.mesh()?;
    let study = match artifact_path {
        None => run_cycle_study(
            schedule,
            base,
            sample_cycles,
            fom_cycle_runner(spec, &mesh, false),
        )?,
        Some(path) => {
            let artifact = RomArtifact::load(path)?;
            let solver = RomSolver::new(&artifact, &mesh, &spec.config)?;
            let mut s = run_cycle_study(
                schedule,
                base,
                sample_cycles,
                rom_cycle_runner(spec, &solver, false),
            )?;
            s.runner = "rom";
            s
        }
    };
    spec.write_out(&format!("{label}_capacity.csv"), &capacity_csv(&study))?;
    spec.write_out(&format!("{label}_cycles_timed.csv"), &study.to_csv())?;
    if !study.complete {
        eprintln!("warning: some cycles of {label} failed; gaps are flagged in the CSV");
    }
    if !study.capacity_monotone_nonincreasing(1e-9) {
        eprintln!("warning: {label} capacity curve is not monotonically nonincreasing");
    }
    println!(
        "cycle-study {label}: {} cycles via {}, capacity {:.4} -> {:.4}",
        study.records.len(),
        study.runner,
        study.records.first().and_then(|r| r.soc_at_emin).unwrap_or(f64::NAN),
        study.records.last().and_then(|r| r.soc_at_emin).unwrap_or(f64::NAN),
    );
    Ok(study)
}

/// FOM-vs-ROM comparison over a test set: per-point error and timings.
pub fn run_compare(
    spec: &RunSpec,
    artifact_path: &Path,
    test: &[ParameterPoint],
) -> Result<CompareReport> {
    if test.is_empty() {
        bail!("empty test set");
    }
    let mesh = spec.mesh()?;
    let artifact = RomArtifact::load(artifact_path)?;
    let solver = RomSolver::new(&artifact, &mesh, &spec.config)?;
    let report = compare_on_mesh(spec, &mesh, &solver, test)?;
    spec.write_out("compare_errors.csv", &report.errors_csv())?;
    spec.write_out("compare_timing.csv", &report.timing_csv())?;
    println!(
        "compare: mean l2l2 error {:.3e}, mean speedup {:.1}x over {} test points",
        report.mean_error(),
        report.mean_speedup(),
        report.rows.len()
    );
    Ok(report)
}

pub struct CompareRow {
    pub mu: ParameterPoint,
    pub error: f64,
    pub fom_seconds: f64,
    pub rom_seconds: f64,
}

pub struct CompareReport {
    pub rows: Vec<CompareRow>,
}

impl CompareReport {
    pub fn mean_error(&self) -> f64 {
        self.rows.iter().map(|r| r.error).sum::<f64>() / self.rows.len() as f64
    }

    pub fn mean_speedup(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.fom_seconds / r.rom_seconds.max(1e-12))
            .sum::<f64>()
            / self.rows.len() as f64
    }

    pub fn errors_csv(&self) -> String {
        let mut out = String::from("c_rate,d_scale,l_scale,rel_l2l2_error\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{:.12e},{:.12e},{:.12e},{:.12e}\n",
                r.mu.c_rate, r.mu.d_scale, r.mu.l_scale, r.error
            ));
        }
        out
    }

    pub fn timing_csv(&self) -> String {
        let mut out = String::from("c_rate,d_scale,l_scale,fom_seconds,rom_seconds,speedup\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{:.12e},{:.12e},{:.12e},{:.6e},{:.6e},{:.2}\n",
                r.mu.c_rate,
                r.mu.d_scale,
                r.mu.l_scale,
                r.fom_seconds,
                r.rom_seconds,
                r.fom_seconds / r.rom_seconds.max(1e-12)
            ));
        }
        out
    }
}

/// Error/timing rows for one solver against the full model on a test set.
pub fn compare_on_mesh(
    spec: &RunSpec,
    mesh: &PseudoMesh,
    solver: &RomSolver,
    test: &[ParameterPoint],
) -> Result<CompareReport> {
    let opts = spec.sim_options(false);
    let mut rows = Vec::with_capacity(test.len());
    for mu in test {
        let t0 = Instant::now();
        let fom = simulate(mu, &spec.config, mesh, &opts)
            .map_err(|e| anyhow!("full model failed at mu {mu:?}: {e}"))?;
        let fom_seconds = t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        let (rom_traj, _) = solver
            .simulate(mu, &opts)
            .map_err(|e| anyhow!("reduced model failed at mu {mu:?}: {e}"))?;
        let rom_seconds = t1.elapsed().as_secs_f64();
        let reconstructed = rom_traj.reconstruct(solver.artifact, mesh);
        let error = relative_l2l2_error(&fom.trajectory, &reconstructed)
            .context("error metric")?;
        rows.push(CompareRow {
            mu: *mu,
            error,
            fom_seconds,
            rom_seconds,
        });
    }
    Ok(CompareReport { rows })
}
