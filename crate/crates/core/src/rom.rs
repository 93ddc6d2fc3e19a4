//! Offline construction and online solution of the reduced model.
//!
//! Offline: full-order training runs (Newton stages recorded), solution
//! and operator snapshots compressed component-wise by incremental HAPOD,
//! greedy interpolation points, and precomputed projections, packaged into
//! a [`RomArtifact`]. Online: a reduced Newton time march whose cost is
//! independent of the mesh size; the nonlinear residual is reconstructed
//! only at the degrees of freedom the interpolation points depend on.

use crate::assembly::Assembler;
use crate::eim::{greedy_points, CollateralBasis, ComponentInterpolation, InterpolationPoints};
use crate::error::{Error, Result};
use crate::mesh::{Component, PseudoMesh};
use crate::params::{CellConfig, ParameterPoint};
use crate::pod::{componentwise_basis, BasisMatrix, IncrementalHapod, Provenance, SnapshotSet};
use crate::simulate::{simulate, SimOptions, SimResult};
use crate::state::{Fields, State, Termination, Trajectory};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

/// Tolerances of the offline compression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RomTolerances {
    /// Relative l2-energy tolerance of the solution bases.
    pub eps_rb: f64,
    /// Relative l2-energy tolerance of the collateral bases.
    pub eps_collateral: f64,
    /// HAPOD balance parameter.
    pub omega: f64,
}

impl Default for RomTolerances {
    fn default() -> Self {
        Self {
            eps_rb: 4e-8,
            eps_collateral: 4e-8,
            omega: 0.9,
        }
    }
}

/// Persisted reduced model.
#[derive(Debug, Clone, PartialEq)]
pub struct RomArtifact {
    pub reduced_bases: [BasisMatrix; 4],
    pub collateral: CollateralBasis,
    /// Interpolation points per component, component-local indices.
    pub points: [Vec<usize>; 4],
    /// Projections `V_i^T G_i` of the collateral modes onto the reduced
    /// bases.
    pub projected_collateral: [DMatrix<f64>; 4],
    /// Reduced coordinates of the equilibrium initial state.
    pub initial_coeffs: [DVector<f64>; 4],
    pub mesh_n_per_region: usize,
    pub mesh_n_micro: usize,
    pub mesh_eta_x: [f64; 3],
    pub mesh_signature: u64,
    pub config_hash: u64,
    pub train_set: Vec<ParameterPoint>,
    pub tolerances: RomTolerances,
    /// Condition numbers of the point-evaluation matrices, logged at
    /// build time.
    pub point_conditions: [f64; 4],
    /// Time step the training trajectories used.
    pub train_dtau: f64,
}

impl RomArtifact {
    pub fn reduced_sizes(&self) -> [usize; 4] {
        [
            self.reduced_bases[0].rank(),
            self.reduced_bases[1].rank(),
            self.reduced_bases[2].rank(),
            self.reduced_bases[3].rank(),
        ]
    }

    pub fn total_reduced_size(&self) -> usize {
        self.reduced_sizes().iter().sum()
    }

    pub fn point_counts(&self) -> [usize; 4] {
        [
            self.points[0].len(),
            self.points[1].len(),
            self.points[2].len(),
            self.points[3].len(),
        ]
    }

    /// A copy with each reduced basis truncated to the given size; the
    /// collateral data and interpolation points stay fixed, projections
    /// and initial coordinates are recomputed consistently.
    pub fn with_reduced_sizes(&self, sizes: [usize; 4]) -> RomArtifact {
        let mut out = self.clone();
        for (k, &r) in sizes.iter().enumerate() {
            out.reduced_bases[k] = self.reduced_bases[k].truncated(r);
            out.projected_collateral[k] =
                out.reduced_bases[k].modes.transpose() * &self.collateral.bases[k].modes;
            let r_eff = out.reduced_bases[k].rank();
            out.initial_coeffs[k] = self.initial_coeffs[k].rows(0, r_eff).into_owned();
        }
        out
    }

    /// Lift a reduced state to the full space.
    pub fn lift(&self, rs: &ReducedState, mesh: &PseudoMesh) -> Fields {
        let mut f = Fields::zeros(mesh);
        for c in Component::ALL {
            let k = c.index();
            let lifted = &self.reduced_bases[k].modes * &rs.coeffs[k];
            f.component_mut(c).copy_from_slice(lifted.as_slice());
        }
        f
    }

    /// Project full fields to reduced coordinates.
    pub fn project(&self, fields: &Fields) -> [DVector<f64>; 4] {
        Component::ALL.map(|c| {
            let k = c.index();
            self.reduced_bases[k].modes.transpose()
                * DVector::from_column_slice(fields.component(c))
        })
    }
}

/// Reduced coefficients of one time slice.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedState {
    pub coeffs: [DVector<f64>; 4],
    pub time: f64,
}

/// Reduced trajectory: coefficient trace plus termination data.
#[derive(Debug, Clone, PartialEq)]
pub struct RomTrajectory {
    pub states: Vec<ReducedState>,
    pub termination: Termination,
    pub parameter: ParameterPoint,
    pub dtau: f64,
}

impl RomTrajectory {
    /// Cathode state of charge at the cutoff voltage, interpolated across
    /// the crossing like the full-order variant. Lifts only the final two
    /// states.
    pub fn capacity_at_cutoff(
        &self,
        artifact: &RomArtifact,
        mesh: &PseudoMesh,
        e_min: f64,
    ) -> f64 {
        let lift_state = |rs: &ReducedState| State {
            fields: artifact.lift(rs, mesh),
            time: rs.time,
        };
        let last = lift_state(self.states.last().expect("nonempty"));
        let soc_last = last.state_of_charge(mesh, crate::params::Electrode::Cathode);
        if !self.termination.reached_e_min || self.states.len() < 2 {
            return soc_last;
        }
        let before = lift_state(&self.states[self.states.len() - 2]);
        let v0 = before.min_cathode_phi_s(mesh);
        let v1 = last.min_cathode_phi_s(mesh);
        if v0 <= e_min || v1 >= v0 {
            return soc_last;
        }
        let frac = ((v0 - e_min) / (v0 - v1)).clamp(0.0, 1.0);
        let soc_before = before.state_of_charge(mesh, crate::params::Electrode::Cathode);
        soc_before + frac * (soc_last - soc_before)
    }

    /// Reconstruct full states from the coefficient trace.
    pub fn reconstruct(&self, artifact: &RomArtifact, mesh: &PseudoMesh) -> Trajectory {
        let states = self
            .states
            .iter()
            .map(|rs| State {
                fields: artifact.lift(rs, mesh),
                time: rs.time,
            })
            .collect();
        Trajectory {
            states,
            termination: self.termination,
            parameter: self.parameter,
            dtau: self.dtau,
        }
    }
}

/// Online cost counters of one reduced simulation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RomStats {
    /// Full-order degrees of freedom written per operator evaluation (the
    /// interpolation closure size); independent of the mesh resolution.
    pub dofs_touched_per_apply: usize,
    pub newton_iterations_total: usize,
    pub operator_applies: usize,
}

/// Timings of the offline phase.
#[derive(Debug, Clone, Copy, Default)]
pub struct OfflineStats {
    pub fom_seconds: f64,
    pub compression_seconds: f64,
    pub operator_snapshots: usize,
    pub solution_snapshots: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct OfflineOptions {
    pub sim: SimOptions,
    pub tolerances: RomTolerances,
    /// Run training trajectories in parallel (results are ordered by the
    /// training-set index either way).
    pub parallel: bool,
}

impl Default for OfflineOptions {
    fn default() -> Self {
        Self {
            sim: SimOptions {
                record_stages: true,
                ..SimOptions::default()
            },
            tolerances: RomTolerances::default(),
            parallel: true,
        }
    }
}

/// Residual-operator images of every recorded Newton stage of a training
/// run, split by component. The columns equal a fresh residual assembly at
/// the stored iterate by construction.
pub fn collect_operator_snapshots(
    assembler: &Assembler,
    sim: &SimResult,
) -> Result<[SnapshotSet; 4]> {
    let stages = sim
        .stages
        .as_ref()
        .ok_or_else(|| Error::Config("trajectory lacks Newton-stage records".into()))?;
    let dims = assembler.mesh.component_dims();
    let mut sets = Component::ALL.map(|c| SnapshotSet::new(c, dims[c.index()]));
    let mu = sim.trajectory.parameter;
    let dtau = sim.trajectory.dtau;
    for (t, record) in stages.iter().enumerate() {
        let u_prev = &sim.trajectory.states[t].fields;
        for (stage, iterate) in record.iterates.iter().enumerate() {
            let image = assembler.residual(iterate, u_prev, &mu, dtau)?;
            let prov = Provenance {
                parameter: mu,
                time_index: t + 1,
                newton_stage: stage,
            };
            for c in Component::ALL {
                sets[c.index()].push_column(image.component(c), prov)?;
            }
        }
    }
    Ok(sets)
}

/// Build a reduced model from full-order training runs.
pub fn offline_build(
    config: &CellConfig,
    mesh: &PseudoMesh,
    train: &[ParameterPoint],
    opts: &OfflineOptions,
) -> Result<(RomArtifact, OfflineStats)> {
    if train.is_empty() {
        return Err(Error::EmptySnapshots("offline_build training set"));
    }
    let mut sim_opts = opts.sim;
    sim_opts.record_stages = true;

    let fom_start = std::time::Instant::now();
    let runs: Vec<Result<SimResult>> = if opts.parallel {
        train
            .par_iter()
            .map(|mu| simulate(mu, config, mesh, &sim_opts))
            .collect()
    } else {
        train
            .iter()
            .map(|mu| simulate(mu, config, mesh, &sim_opts))
            .collect()
    };
    let mut results = Vec::with_capacity(runs.len());
    for (mu, run) in train.iter().zip(runs) {
        match run {
            Ok(r) => results.push(r),
            Err(e) => {
                return Err(Error::Config(format!(
                    "training run for mu = {mu:?} failed: {e}"
                )))
            }
        }
    }
    let fom_seconds = fom_start.elapsed().as_secs_f64();

    let build_start = std::time::Instant::now();
    let assembler = Assembler::new(mesh, config)?;
    let dims = mesh.component_dims();
    let tol = opts.tolerances;

    // solution bases: one chunk per training trajectory and component
    let solution_snapshots: usize = results.iter().map(|r| r.trajectory.len()).sum();
    let trajectories: Vec<&crate::state::Trajectory> =
        results.iter().map(|r| &r.trajectory).collect();
    let reduced_bases = componentwise_basis(&trajectories, dims, tol.eps_rb, tol.omega)?;

    // collateral bases from residual images of every Newton stage; each
    // image is assembled once and split into the four component streams
    let mut operator_snapshots = 0;
    let mut hapods: Vec<IncrementalHapod> = Component::ALL
        .iter()
        .map(|_| IncrementalHapod::new(tol.eps_collateral, tol.omega))
        .collect::<Result<_>>()?;
    for run in &results {
        let stages = run.stages.as_ref().expect("stage recording was on");
        let n_images: usize = stages.iter().map(|r| r.iterates.len()).sum();
        let mut chunks: Vec<DMatrix<f64>> = Component::ALL
            .iter()
            .map(|c| DMatrix::zeros(dims[c.index()], n_images))
            .collect();
        let mu = run.trajectory.parameter;
        let mut col = 0;
        for (t, record) in stages.iter().enumerate() {
            let u_prev = &run.trajectory.states[t].fields;
            for iterate in &record.iterates {
                let image = assembler.residual(iterate, u_prev, &mu, run.trajectory.dtau)?;
                for c in Component::ALL {
                    chunks[c.index()]
                        .column_mut(col)
                        .copy_from_slice(image.component(c));
                }
                col += 1;
            }
        }
        operator_snapshots += n_images;
        for (h, chunk) in hapods.iter_mut().zip(&chunks) {
            h.push_chunk(chunk)?;
        }
    }
    let mut cb: Vec<BasisMatrix> = Vec::with_capacity(4);
    for h in hapods {
        cb.push(h.finish()?);
    }
    let collateral = CollateralBasis {
        bases: cb.try_into().expect("four components"),
    };
    for c in Component::ALL {
        if collateral.bases[c.index()].rank() == 0 {
            return Err(Error::Config(format!(
                "collateral basis of {} is empty; the training set carries no \
                 operator variation in that component",
                c.label()
            )));
        }
    }

    let interp = greedy_points(&collateral)?;
    let mut points: [Vec<usize>; 4] = Default::default();
    let mut point_conditions = [f64::NAN; 4];
    for (k, comp) in interp.components.iter().enumerate() {
        let comp = comp.as_ref().expect("nonempty collateral per component");
        points[k] = comp.points.clone();
        point_conditions[k] = comp.condition;
    }

    let projected_collateral = Component::ALL.map(|c| {
        let k = c.index();
        reduced_bases[k].modes.transpose() * &collateral.bases[k].modes
    });
    let u0 = State::initial(mesh, config)?;
    let initial_coeffs = Component::ALL.map(|c| {
        let k = c.index();
        reduced_bases[k].modes.transpose()
            * DVector::from_column_slice(u0.fields.component(c))
    });

    let artifact = RomArtifact {
        reduced_bases,
        collateral,
        points,
        projected_collateral,
        initial_coeffs,
        mesh_n_per_region: mesh.n_per_region,
        mesh_n_micro: mesh.n_micro,
        mesh_eta_x: mesh.eta_x,
        mesh_signature: mesh.signature(),
        config_hash: config.hash(),
        train_set: train.to_vec(),
        tolerances: tol,
        point_conditions,
        train_dtau: sim_opts.dtau,
    };
    let stats = OfflineStats {
        fom_seconds,
        compression_seconds: build_start.elapsed().as_secs_f64(),
        operator_snapshots,
        solution_snapshots,
    };
    Ok((artifact, stats))
}

/// Online solver bound to one artifact and one discretization.
pub struct RomSolver<'a> {
    pub artifact: &'a RomArtifact,
    assembler: Assembler<'a>,
    interp: InterpolationPoints,
    /// Interpolation rows in the flat numbering, component-ordered.
    point_rows: Vec<usize>,
    /// Range of each component's points inside `point_rows`.
    point_ranges: [std::ops::Range<usize>; 4],
    /// Source degrees of freedom the point rows depend on.
    closure: Vec<usize>,
    /// (component, local index) of each closure entry.
    closure_split: Vec<(Component, usize)>,
    /// Contiguous copies of the reduced-basis rows of every closure entry
    /// (row-major per entry), so lifting walks linear memory.
    lift_rows: Vec<f64>,
    /// Per closure entry: (component index, offset into `lift_rows`,
    /// rank).
    lift_spans: Vec<(usize, usize, usize)>,
    /// Flat degree of freedom -> closure position, `u32::MAX` if absent.
    closure_lookup: Vec<u32>,
    /// Rows of `V2` at the cathode macro nodes, for the termination check.
    v2_cathode: DMatrix<f64>,
}

impl<'a> RomSolver<'a> {
    pub fn new(
        artifact: &'a RomArtifact,
        mesh: &'a PseudoMesh,
        config: &'a CellConfig,
    ) -> Result<Self> {
        if artifact.mesh_signature != mesh.signature() {
            return Err(Error::Artifact(format!(
                "artifact was built for mesh signature {:#x}, got {:#x}",
                artifact.mesh_signature,
                mesh.signature()
            )));
        }
        if artifact.config_hash != config.hash() {
            return Err(Error::Artifact(format!(
                "artifact was built for configuration {:#x}, got {:#x}",
                artifact.config_hash,
                config.hash()
            )));
        }
        let assembler = Assembler::new(mesh, config)?;
        let zero = Fields::zeros(mesh);

        let mut interp_components: [Option<ComponentInterpolation>; 4] =
            [None, None, None, None];
        let mut point_rows = Vec::new();
        let mut point_ranges: [std::ops::Range<usize>; 4] =
            [0..0, 0..0, 0..0, 0..0];
        for c in Component::ALL {
            let k = c.index();
            let start = point_rows.len();
            let basis = &artifact.collateral.bases[k];
            if !artifact.points[k].is_empty() {
                interp_components[k] = Some(ComponentInterpolation::from_points(
                    basis,
                    &artifact.points[k],
                    k,
                )?);
                let offset = zero.flat_offset(c);
                point_rows.extend(artifact.points[k].iter().map(|&p| offset + p));
            }
            point_ranges[k] = start..point_rows.len();
        }
        let closure = assembler.closure_of_rows(&point_rows);
        let closure_split: Vec<(Component, usize)> =
            closure.iter().map(|&idx| zero.split_flat(idx)).collect();
        let mut lift_rows = Vec::new();
        let mut lift_spans = Vec::with_capacity(closure.len());
        let mut closure_lookup = vec![u32::MAX; zero.len()];
        for (pos, (&idx, &(c, k))) in closure.iter().zip(&closure_split).enumerate() {
            let basis = &artifact.reduced_bases[c.index()];
            let offset = lift_rows.len();
            for j in 0..basis.rank() {
                lift_rows.push(basis.modes[(k, j)]);
            }
            lift_spans.push((c.index(), offset, basis.rank()));
            closure_lookup[idx] = pos as u32;
        }

        let r2 = artifact.reduced_bases[1].rank();
        let cat_nodes: Vec<usize> = mesh.cathode_nodes().collect();
        let mut v2_cathode = DMatrix::zeros(cat_nodes.len(), r2);
        for (row, &node) in cat_nodes.iter().enumerate() {
            let col = mesh.col_of_node[node].expect("cathode node has a column");
            for j in 0..r2 {
                v2_cathode[(row, j)] = artifact.reduced_bases[1].modes[(col, j)];
            }
        }

        Ok(Self {
            artifact,
            assembler,
            interp: InterpolationPoints {
                components: interp_components,
            },
            point_rows,
            point_ranges,
            closure,
            closure_split,
            lift_rows,
            lift_spans,
            closure_lookup,
            v2_cathode,
        })
    }

    pub fn mesh(&self) -> &PseudoMesh {
        self.assembler.mesh
    }

    /// Number of full-order degrees of freedom one operator evaluation
    /// touches.
    pub fn closure_size(&self) -> usize {
        self.closure.len()
    }

    fn lift_into(&self, coeffs: &[DVector<f64>; 4], scratch: &mut Fields) {
        for ((&(ci, offset, rank), &(c, k)), _) in self
            .lift_spans
            .iter()
            .zip(&self.closure_split)
            .zip(&self.closure)
        {
            let row = &self.lift_rows[offset..offset + rank];
            let coeff = coeffs[ci].as_slice();
            let mut v = 0.0;
            for (a, b) in row.iter().zip(coeff) {
                v += a * b;
            }
            scratch.component_mut(c)[k] = v;
        }
    }

    /// Interpolated reduced residual at a reduced state. `scratch` fields
    /// must come from [`RomScratch::new`] for this solver.
    pub fn reduced_residual(
        &self,
        coeffs: &[DVector<f64>; 4],
        prev: &[DVector<f64>; 4],
        mu: &ParameterPoint,
        dtau: f64,
        scratch: &mut RomScratch,
    ) -> Result<DVector<f64>> {
        self.lift_into(coeffs, &mut scratch.u);
        self.lift_into(prev, &mut scratch.u_prev);
        let values = self.assembler.restricted_residual(
            &scratch.u,
            &scratch.u_prev,
            mu,
            dtau,
            &self.point_rows,
        )?;
        let sizes = self.artifact.reduced_sizes();
        let total: usize = sizes.iter().sum();
        let mut out = DVector::zeros(total);
        let mut offset = 0;
        for c in Component::ALL {
            let k = c.index();
            if let Some(comp) = &self.interp.components[k] {
                let vals = &values[self.point_ranges[k].clone()];
                let theta = comp.coefficients(vals);
                let projected = &self.artifact.projected_collateral[k] * theta;
                out.rows_mut(offset, sizes[k]).copy_from(&projected);
            }
            offset += sizes[k];
        }
        Ok(out)
    }

    /// Reduced residual and its exact derivative with respect to the
    /// reduced coefficients.
    pub fn reduced_residual_jacobian(
        &self,
        coeffs: &[DVector<f64>; 4],
        prev: &[DVector<f64>; 4],
        mu: &ParameterPoint,
        dtau: f64,
        scratch: &mut RomScratch,
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        self.lift_into(coeffs, &mut scratch.u);
        self.lift_into(prev, &mut scratch.u_prev);
        let (values, jrows) = self.assembler.restricted(
            &scratch.u,
            &scratch.u_prev,
            mu,
            dtau,
            &self.point_rows,
            true,
        )?;
        let jrows = jrows.expect("jacobian requested");
        let sizes = self.artifact.reduced_sizes();
        let total: usize = sizes.iter().sum();
        let col_offsets = {
            let mut off = [0usize; 4];
            let mut acc = 0;
            for c in Component::ALL {
                off[c.index()] = acc;
                acc += sizes[c.index()];
            }
            off
        };

        let mut residual = DVector::zeros(total);
        let mut jacobian = DMatrix::zeros(total, total);
        let mut row_offset = 0;
        for c in Component::ALL {
            let k = c.index();
            if let Some(comp) = &self.interp.components[k] {
                let m_k = comp.points.len();
                let vals = &values[self.point_ranges[k].clone()];
                let theta = comp.coefficients(vals);
                let projected = &self.artifact.projected_collateral[k] * theta;
                residual.rows_mut(row_offset, sizes[k]).copy_from(&projected);

                // dF_points/dc: chain the sparse jacobian rows through the
                // precomputed basis-row copies of the closure
                let mut dpts = DMatrix::zeros(m_k, total);
                for (local_row, ridx) in self.point_ranges[k].clone().enumerate() {
                    for &(col_flat, v) in &jrows[ridx] {
                        let pos = self.closure_lookup[col_flat];
                        debug_assert_ne!(pos, u32::MAX, "jacobian column outside closure");
                        let (ci, offset, rank) = self.lift_spans[pos as usize];
                        let row = &self.lift_rows[offset..offset + rank];
                        let off = col_offsets[ci];
                        for (j, &b) in row.iter().enumerate() {
                            dpts[(local_row, off + j)] += v * b;
                        }
                    }
                }
                // theta' = A^{-1} dpts, block = W * theta'
                let mut solved = dpts;
                assert!(comp.lu.solve_mut(&mut solved), "point system is regular");
                let block = &self.artifact.projected_collateral[k] * solved;
                jacobian
                    .view_mut((row_offset, 0), (sizes[k], total))
                    .copy_from(&block);
            }
            row_offset += sizes[k];
        }
        Ok((residual, jacobian))
    }

    /// Reduced Newton time march mirroring the full-order driver,
    /// including early termination on the reconstructed cathode potential.
    pub fn simulate(
        &self,
        mu: &ParameterPoint,
        opts: &SimOptions,
    ) -> Result<(RomTrajectory, RomStats)> {
        let mut scratch = RomScratch::new(self.mesh());
        let mut stats = RomStats {
            dofs_touched_per_apply: self.closure.len(),
            ..RomStats::default()
        };
        let newton = &opts.newton;
        let n_steps = (opts.t_end / opts.dtau).round() as usize;
        let mut states = vec![ReducedState {
            coeffs: self.artifact.initial_coeffs.clone(),
            time: 0.0,
        }];
        let mut reached_e_min = false;

        'time: for step in 1..=n_steps {
            let tau = step as f64 * opts.dtau;
            let prev = states.last().expect("nonempty").coeffs.clone();
            let mut coeffs = prev.clone();

            let res = self.reduced_residual(&coeffs, &prev, mu, opts.dtau, &mut scratch)?;
            stats.operator_applies += 1;
            let mut res_norm = res.norm();
            let mut converged = res_norm <= newton.atol;
            let mut iterations = 0;
            while !converged {
                iterations += 1;
                if iterations > newton.max_iter {
                    return Err(Error::RomNewtonFailure {
                        tau,
                        iterations: newton.max_iter,
                        last_update: f64::NAN,
                    });
                }
                let (res, jac) = self.reduced_residual_jacobian(
                    &coeffs,
                    &prev,
                    mu,
                    opts.dtau,
                    &mut scratch,
                )?;
                stats.operator_applies += 1;
                let lu = jac.lu();
                let delta = lu.solve(&res).ok_or(Error::RomNewtonFailure {
                    tau,
                    iterations,
                    last_update: f64::NAN,
                })?;

                // backtracking halving, mirroring the full-order iteration
                let mut applied = 1.0;
                let mut accepted = None;
                for _ in 0..=newton.max_backtracks {
                    let candidate = apply_update(&coeffs, &delta, -applied, self.artifact);
                    match self.reduced_residual(&candidate, &prev, mu, opts.dtau, &mut scratch)
                    {
                        Ok(r) => {
                            stats.operator_applies += 1;
                            let norm = r.norm();
                            if norm < res_norm || norm <= newton.atol {
                                accepted = Some((candidate, norm));
                                break;
                            }
                        }
                        Err(Error::Domain { .. }) => {
                            stats.operator_applies += 1;
                        }
                        Err(e) => return Err(e),
                    }
                    applied *= 0.5;
                }
                let Some((candidate, next_norm)) = accepted else {
                    return Err(Error::RomNewtonFailure {
                        tau,
                        iterations,
                        last_update: delta.norm(),
                    });
                };
                coeffs = candidate;
                res_norm = next_norm;
                let state_norm = coeffs.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt();
                let update = applied * delta.norm() / state_norm.max(1e-300);
                converged = update <= newton.rtol;
            }
            stats.newton_iterations_total += iterations;

            states.push(ReducedState {
                coeffs: coeffs.clone(),
                time: tau,
            });
            let phi_cat = &self.v2_cathode * &coeffs[1];
            if phi_cat.iter().cloned().fold(f64::INFINITY, f64::min) <= opts.e_min {
                reached_e_min = true;
                break 'time;
            }
        }

        let final_time = states.last().expect("nonempty").time;
        Ok((
            RomTrajectory {
                states,
                termination: Termination {
                    reached_e_min,
                    final_time,
                },
                parameter: *mu,
                dtau: opts.dtau,
            },
            stats,
        ))
    }
}

fn apply_update(
    coeffs: &[DVector<f64>; 4],
    delta: &DVector<f64>,
    scale: f64,
    artifact: &RomArtifact,
) -> [DVector<f64>; 4] {
    let sizes = artifact.reduced_sizes();
    let mut out = coeffs.clone();
    let mut off = 0;
    for k in 0..4 {
        for j in 0..sizes[k] {
            out[k][j] += scale * delta[off + j];
        }
        off += sizes[k];
    }
    out
}

/// Preallocated lift buffers of one online simulation; entries outside the
/// interpolation closure are never read.
pub struct RomScratch {
    u: Fields,
    u_prev: Fields,
}

impl RomScratch {
    pub fn new(mesh: &PseudoMesh) -> Self {
        Self {
            u: Fields::zeros(mesh),
            u_prev: Fields::zeros(mesh),
        }
    }
}
