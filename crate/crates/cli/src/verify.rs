//! The verification suite: every structural invariant of the pipeline as
//! a machine-readable pass/fail report with measured margins.

use crate::spec::RunSpec;
use anyhow::Result;
use cellrom::assembly::Assembler;
use cellrom::io::trajectory_csv;
use cellrom::materials::{
    butler_volmer_g, f_active, f_electrolyte, gamma_active, gamma_electrolyte, surface_affinity,
};
use cellrom::mesh::Component;
use cellrom::metrics::relative_l2l2_error;
use cellrom::newton::NewtonOptions;
use cellrom::pod::{hapod_incremental, pod_matrix, Truncation};
use cellrom::rom::{offline_build, OfflineOptions, RomSolver, RomTolerances};
use cellrom::simulate::{simulate, SimOptions};
use cellrom::state::State;
use cellrom::{CellConfig, Electrode, Fields, ParameterPoint, PseudoMesh, Region};
use nalgebra::DMatrix;

/// One verification entry: the measured value must stay below (or above,
/// see `direction`) the threshold.
pub struct Check {
    pub name: &'static str,
    pub measured: f64,
    pub threshold: f64,
    /// `true` when the measured value must stay below the threshold.
    pub upper_bound: bool,
}

impl Check {
    pub fn passed(&self) -> bool {
        if self.upper_bound {
            self.measured <= self.threshold
        } else {
            self.measured >= self.threshold
        }
    }
}

pub fn report_csv(checks: &[Check]) -> String {
    let mut out = String::from("check,pass,measured,threshold\n");
    for c in checks {
        out.push_str(&format!(
            "{},{},{:.6e},{:.6e}\n",
            c.name,
            c.passed(),
            c.measured,
            c.threshold
        ));
    }
    out
}

fn splitmix(state: &mut u64) -> f64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    ((z ^ (z >> 31)) >> 11) as f64 / (1u64 << 53) as f64
}

fn build_mesh(n: usize, m: usize, cfg: &CellConfig) -> PseudoMesh {
    PseudoMesh::build(
        n,
        m,
        [
            cfg.width_fraction(Region::Anode),
            cfg.width_fraction(Region::Separator),
            cfg.width_fraction(Region::Cathode),
        ],
    )
    .expect("verify mesh")
}

/// Max relative directional finite-difference error of the assembled
/// Jacobian. `corrupt` injects an entry perturbation (negative-control
/// fixture for the suite's own sensitivity).
pub fn jacobian_fd_measure(
    cfg: &CellConfig,
    n: usize,
    m: usize,
    directions: usize,
    states: usize,
    corrupt: Option<(usize, usize, f64)>,
) -> f64 {
    let mesh = build_mesh(n, m, cfg);
    let asm = Assembler::new(&mesh, cfg).expect("assembler");
    let mu = ParameterPoint::default();
    let dtau = 1e-2;
    let total = mesh.total_dofs();
    let mut rng = 90210u64;
    let mut worst: f64 = 0.0;
    for s in 0..states {
        let mut u = State::initial(&mesh, cfg).expect("initial").fields;
        let mut u_prev = u.clone();
        let perturb = |f: &mut Fields, scale: f64, rng: &mut u64| {
            for v in f.u1.iter_mut() {
                *v += scale * (splitmix(rng) - 0.5);
            }
            for v in f.u2.iter_mut() {
                *v += scale * (splitmix(rng) - 0.5);
            }
            for v in f.u3.iter_mut() {
                *v += 0.1 * scale * (splitmix(rng) - 0.5);
            }
            for v in f.u4.iter_mut() {
                *v += scale * (splitmix(rng) - 0.5);
            }
        };
        perturb(&mut u, 0.1 + 0.02 * s as f64, &mut rng);
        perturb(&mut u_prev, 0.05, &mut rng);
        let mut jac = vec![0.0f64; total * total];
        {
            let mut sink = |r: usize, c: usize, v: f64| jac[r * total + c] += v;
            asm.residual_full(&u, &u_prev, &mu, dtau, Some(&mut sink))
                .expect("jacobian");
        }
        if let Some((r, c, dv)) = corrupt {
            jac[r * total + c] += dv;
        }
        for _ in 0..directions {
            let mut dir = Fields::zeros(&mesh);
            for i in 0..total {
                let (comp, k) = dir.split_flat(i);
                let v = splitmix(&mut rng) - 0.5;
                dir.component_mut(comp)[k] = if comp == Component::U3 { 0.1 * v } else { v };
            }
            let h = 1e-6;
            let mut up = u.clone();
            up.axpy(h, &dir);
            let mut um = u.clone();
            um.axpy(-h, &dir);
            let rp = asm.residual(&up, &u_prev, &mu, dtau).expect("residual");
            let rm = asm.residual(&um, &u_prev, &mu, dtau).expect("residual");
            let dir_flat: Vec<f64> = (0..total).map(|i| dir.flat(i)).collect();
            let mut num = 0.0;
            let mut den = 0.0;
            for r in 0..total {
                let jd: f64 = (0..total).map(|c| jac[r * total + c] * dir_flat[c]).sum();
                let fd = (rp.flat(r) - rm.flat(r)) / (2.0 * h);
                num += (fd - jd) * (fd - jd);
                den += jd * jd;
            }
            worst = worst.max((num / den.max(1e-300)).sqrt());
        }
    }
    worst
}

/// Run the whole verification suite at desk scale.
pub fn run_verify(spec: &RunSpec) -> Result<Vec<Check>> {
    let cfg = &spec.config;
    let mut checks = Vec::new();

    // material-function identities: y f'(y) vs thermodynamic factors
    {
        let mut rng = 77u64;
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for _ in 0..50 {
            let y = 0.02 + 0.96 * splitmix(&mut rng);
            let gamma = -1.0 + 3.0 * splitmix(&mut rng);
            let fd =
                (f_active(y + h, gamma).unwrap() - f_active(y - h, gamma).unwrap()) / (2.0 * h);
            worst = worst.max(
                (y * fd - gamma_active(y, gamma).unwrap()).abs()
                    / gamma_active(y, gamma).unwrap().abs(),
            );
            let ye = 0.01 + 0.47 * splitmix(&mut rng);
            let kappa = 1.0 + 5.0 * splitmix(&mut rng);
            let fd = (f_electrolyte(ye + h, kappa).unwrap()
                - f_electrolyte(ye - h, kappa).unwrap())
                / (2.0 * h);
            worst = worst.max(
                (ye * fd - gamma_electrolyte(ye, kappa).unwrap()).abs()
                    / gamma_electrolyte(ye, kappa).unwrap(),
            );
        }
        checks.push(Check {
            name: "material_factor_identity_fd",
            measured: worst,
            threshold: 1e-6,
            upper_bound: true,
        });
    }

    // rate-factor oddness at the symmetric factor is exact
    {
        let mut worst: f64 = 0.0;
        for k in 1..40 {
            let z = 0.2 * k as f64;
            worst = worst.max((butler_volmer_g(-z, 0.5) + butler_volmer_g(z, 0.5)).abs());
        }
        checks.push(Check {
            name: "rate_factor_oddness",
            measured: worst,
            threshold: 0.0,
            upper_bound: true,
        });
    }

    // transport-parameter relation
    {
        let el = &cfg.electrolyte;
        checks.push(Check {
            name: "transference_conductivity_relation",
            measured: (el.s_e() - (2.0 * el.transference - 1.0) * el.molar_conductivity).abs(),
            threshold: 0.0,
            upper_bound: true,
        });
    }

    // zero affinity at the constructed initial state
    {
        let mesh = build_mesh(6, 5, cfg);
        let s = State::initial(&mesh, cfg)?;
        let mut worst: f64 = 0.0;
        for (col, &node) in mesh.node_of_col.iter().enumerate() {
            let gamma = match mesh.node_electrode_region(node) {
                Some(Region::Anode) => cfg.anode.enthalpy_gamma,
                Some(Region::Cathode) => cfg.cathode.enthalpy_gamma,
                _ => continue,
            };
            let lambda = surface_affinity(
                s.fields.u2[col],
                s.fields.u4[node],
                s.y_surface(&mesh, col),
                s.fields.u3[node],
                gamma,
                cfg.electrolyte.solvation_number,
            )?;
            worst = worst.max(lambda.abs());
        }
        checks.push(Check {
            name: "initial_affinity_zero",
            measured: worst,
            threshold: 1e-12,
            upper_bound: true,
        });
    }

    // equilibrium fixed point: zero-current residual and stationarity
    {
        let mesh = build_mesh(8, 6, cfg);
        let asm = Assembler::new(&mesh, cfg)?;
        let s = State::initial(&mesh, cfg)?;
        let mu = ParameterPoint::new(0.0, 0.5, 0.5);
        let res = asm.residual(&s.fields, &s.fields, &mu, 1e-2)?;
        checks.push(Check {
            name: "equilibrium_residual_norm",
            measured: res.norm(),
            threshold: 1e-10,
            upper_bound: true,
        });
        let run = simulate(
            &mu,
            cfg,
            &mesh,
            &SimOptions {
                t_end: 0.1,
                ..SimOptions::default()
            },
        )?;
        let mut drift: f64 = 0.0;
        for st in &run.trajectory.states {
            let mut d = st.fields.clone();
            d.axpy(-1.0, &s.fields);
            drift = drift.max(d.norm());
        }
        checks.push(Check {
            name: "equilibrium_stationary_10_steps",
            measured: drift,
            threshold: 1e-10,
            upper_bound: true,
        });
    }

    // Jacobian vs directional finite differences
    checks.push(Check {
        name: "jacobian_fd_agreement",
        measured: jacobian_fd_measure(cfg, 5, 4, 20, 5, None),
        threshold: 1e-6,
        upper_bound: true,
    });

    // discrete capacity balance on a partial discharge
    {
        let mesh = build_mesh(spec.n_per_region, spec.n_micro, cfg);
        let run = simulate(
            &ParameterPoint::default(),
            cfg,
            &mesh,
            &SimOptions {
                t_end: 0.25,
                dtau: spec.dtau,
                ..SimOptions::default()
            },
        )?;
        let soc0 = run.trajectory.states[0].state_of_charge(&mesh, Electrode::Cathode);
        let mut worst: f64 = 0.0;
        for st in &run.trajectory.states {
            worst = worst
                .max((st.state_of_charge(&mesh, Electrode::Cathode) - soc0 - st.time).abs());
        }
        checks.push(Check {
            name: "capacity_balance_drift",
            measured: worst,
            threshold: 5e-3,
            upper_bound: true,
        });
    }

    // POD optimality against the dense reconstruction, and orthonormality
    {
        let mut rng = 4242u64;
        let m = DMatrix::from_fn(120, 25, |_, _| splitmix(&mut rng) - 0.5);
        let full = pod_matrix(&m, Truncation::Relative(0.0)).expect("pod");
        let mut worst: f64 = 0.0;
        for rank in [4usize, 10, 18] {
            let b = pod_matrix(&m, Truncation::Rank(rank)).expect("pod");
            let mut err_sq = 0.0;
            for c in 0..m.ncols() {
                let col: Vec<f64> = m.column(c).iter().copied().collect();
                let e = b.projection_error(&col);
                err_sq += e * e;
            }
            let tail: f64 = full.singular_values[rank..].iter().map(|s| s * s).sum();
            worst = worst.max((err_sq.sqrt() - tail.sqrt()).abs());
        }
        checks.push(Check {
            name: "pod_projection_matches_singular_tail",
            measured: worst,
            threshold: 1e-9,
            upper_bound: true,
        });
        checks.push(Check {
            name: "pod_orthonormality_defect",
            measured: full.orthonormality_defect(),
            threshold: 1e-10,
            upper_bound: true,
        });

        // HAPOD: final bound and mode-count domination
        let eps = 1e-6;
        let chunks: Vec<DMatrix<f64>> =
            (0..5).map(|k| m.columns(k * 5, 5).into_owned()).collect();
        let h = hapod_incremental(&chunks, eps, 0.9).expect("hapod");
        let direct = pod_matrix(&m, Truncation::Relative(eps)).expect("pod");
        let mut err_sq = 0.0;
        for c in 0..m.ncols() {
            let col: Vec<f64> = m.column(c).iter().copied().collect();
            let e = h.projection_error(&col);
            err_sq += e * e;
        }
        let energy: f64 = m.iter().map(|v| v * v).sum();
        checks.push(Check {
            name: "hapod_relative_error_bound",
            measured: err_sq.sqrt() / energy.sqrt(),
            threshold: eps,
            upper_bound: true,
        });
        checks.push(Check {
            name: "hapod_mode_count_vs_pod",
            measured: h.rank() as f64,
            threshold: direct.rank() as f64,
            upper_bound: false,
        });
    }

    // interpolation exactness and ROM exact reproduction at tiny scale
    {
        let mesh = build_mesh(5, 4, cfg);
        let mu = ParameterPoint::default();
        let newton = NewtonOptions {
            rtol: 1e-9,
            ..NewtonOptions::default()
        };
        let sim = SimOptions {
            t_end: 0.1,
            newton,
            record_stages: true,
            ..SimOptions::default()
        };
        let opts = OfflineOptions {
            sim,
            tolerances: RomTolerances {
                eps_rb: 1e-13,
                eps_collateral: 1e-13,
                omega: 0.9,
            },
            parallel: false,
        };
        let (artifact, _) = offline_build(cfg, &mesh, &[mu], &opts)?;
        // greedy points reproduce every collateral mode
        let mut worst: f64 = 0.0;
        for k in 0..4 {
            let basis = &artifact.collateral.bases[k];
            let comp = cellrom::eim::ComponentInterpolation::from_points(
                basis,
                &artifact.points[k],
                k,
            )?;
            for q in 0..basis.rank() {
                let vals: Vec<f64> = comp.points.iter().map(|&p| basis.modes[(p, q)]).collect();
                let theta = comp.coefficients(&vals);
                let rec = &basis.modes * theta;
                worst = worst.max((rec - basis.modes.column(q)).norm());
            }
        }
        checks.push(Check {
            name: "interpolation_reproduces_collateral_modes",
            measured: worst,
            threshold: 1e-10,
            upper_bound: true,
        });
        checks.push(Check {
            name: "interpolation_condition_number",
            measured: artifact
                .point_conditions
                .iter()
                .cloned()
                .fold(0.0f64, f64::max),
            threshold: 1e8,
            upper_bound: true,
        });

        let solver = RomSolver::new(&artifact, &mesh, cfg)?;
        let (rom_traj, _) = solver.simulate(&mu, &sim)?;
        let fom = simulate(&mu, cfg, &mesh, &sim)?;
        let err = relative_l2l2_error(&fom.trajectory, &rom_traj.reconstruct(&artifact, &mesh))?;
        checks.push(Check {
            name: "rom_exact_reproduction",
            measured: err,
            threshold: 1e-6,
            upper_bound: true,
        });
    }

    // determinism: two identical short runs export identical bytes
    {
        let mesh = build_mesh(6, 5, cfg);
        let opts = SimOptions {
            t_end: 0.05,
            ..SimOptions::default()
        };
        let a = simulate(&ParameterPoint::default(), cfg, &mesh, &opts)?;
        let b = simulate(&ParameterPoint::default(), cfg, &mesh, &opts)?;
        let same = trajectory_csv(&a.trajectory, &mesh, cfg)
            == trajectory_csv(&b.trajectory, &mesh, cfg);
        checks.push(Check {
            name: "repeat_run_byte_identical",
            measured: if same { 0.0 } else { 1.0 },
            threshold: 0.0,
            upper_bound: true,
        });
    }

    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corrupted_jacobian_is_detected() {
        let cfg = CellConfig::default();
        let clean = jacobian_fd_measure(&cfg, 3, 3, 5, 1, None);
        assert!(clean < 1e-6, "clean measure {clean}");
        let corrupted = jacobian_fd_measure(&cfg, 3, 3, 5, 1, Some((3, 3, 1.0)));
        assert!(corrupted > 1e-6, "corruption slipped through: {corrupted}");
    }

    #[test]
    fn report_csv_is_well_formed() {
        let checks = vec![Check {
            name: "demo",
            measured: 1.0,
            threshold: 2.0,
            upper_bound: true,
        }];
        let csv = report_csv(&checks);
        assert!(csv.starts_with("check,pass,measured,threshold\n"));
        assert!(csv.contains("demo,true"));
    }
}
