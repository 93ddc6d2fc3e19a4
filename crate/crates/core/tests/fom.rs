//! Full-order model integration tests: an independent assembly oracle on
//! the smallest mesh, Jacobian finite-difference checks, Newton
//! convergence order, capacity balance, and restricted assembly.

use cellrom::assembly::Assembler;
use cellrom::materials::{
    butler_volmer_g, decode_g, f_active, f_electrolyte, gamma_active, gamma_electrolyte,
};
use cellrom::mesh::Component;
use cellrom::newton::{newton_solve, LinearLayout, NewtonOptions};
use cellrom::simulate::{simulate, SimOptions};
use cellrom::state::State;
use cellrom::{CellConfig, Electrode, Fields, ParameterPoint, PseudoMesh, Region};

fn build(n: usize, m: usize, cfg: &CellConfig) -> PseudoMesh {
    PseudoMesh::build(
        n,
        m,
        [
            cfg.width_fraction(Region::Anode),
            cfg.width_fraction(Region::Separator),
            cfg.width_fraction(Region::Cathode),
        ],
    )
    .unwrap()
}

fn splitmix(state: &mut u64) -> f64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    ((z ^ (z >> 31)) >> 11) as f64 / (1u64 << 53) as f64
}

/// A generic evaluable state: the initial state with deterministic
/// perturbations well inside all domains.
fn perturbed_state(mesh: &PseudoMesh, cfg: &CellConfig, seed: u64, scale: f64) -> Fields {
    let mut s = State::initial(mesh, cfg).unwrap().fields;
    let mut rng = seed;
    for v in s.u1.iter_mut() {
        *v += scale * (splitmix(&mut rng) - 0.5);
    }
    for v in s.u2.iter_mut() {
        *v += scale * (splitmix(&mut rng) - 0.5);
    }
    for v in s.u3.iter_mut() {
        *v += 0.1 * scale * (splitmix(&mut rng) - 0.5);
    }
    for v in s.u4.iter_mut() {
        *v += scale * (splitmix(&mut rng) - 0.5);
    }
    s
}

/// Independent brute-force assembly of the residual on an arbitrary mesh,
/// written directly from the weak form with explicit two-point Gauss
/// loops and naive dense indexing. Kept deliberately separate from the
/// production assembly.
fn brute_force_residual(
    mesh: &PseudoMesh,
    cfg: &CellConfig,
    u: &Fields,
    u_prev: &Fields,
    mu: &ParameterPoint,
    dtau: f64,
) -> Fields {
    let gp = [0.5 - 0.5 / 3.0f64.sqrt(), 0.5 + 0.5 / 3.0f64.sqrt()];
    let kappa = cfg.electrolyte.solvation_number;
    let ratio = cfg.electrolyte.n_solvent_ref / cfg.electrolyte.n_salt_ref;
    let n_tot = |y: f64| ratio / (1.0 + 2.0 * (kappa - 1.0) * y);
    let c_e = |y: f64| ratio / (1.0 + 2.0 * (kappa - 1.0) * y).powi(2);
    let t_ec = cfg.electrolyte.transference;
    let s_e = (2.0 * t_ec - 1.0) * cfg.electrolyte.molar_conductivity;

    let mut res = Fields::zeros(mesh);
    let n = mesh.n_per_region;

    // macro elements
    for e in 0..mesh.n_macro() - 1 {
        let region = mesh.element_region(e);
        let geom = cfg.geometry(region);
        let h = mesh.xi[e + 1] - mesh.xi[e];
        let pe = geom.psi_e * geom.pi_e;
        for &x in &gp {
            let w = 0.5 * h;
            let shp = [1.0 - x, x];
            let dshp = [-1.0 / h, 1.0 / h];
            let yq = u.u3[e] * shp[0] + u.u3[e + 1] * shp[1];
            let ypq = u_prev.u3[e] * shp[0] + u_prev.u3[e + 1] * shp[1];
            let dy = (u.u3[e + 1] - u.u3[e]) / h;
            let dphi = (u.u4[e + 1] - u.u4[e]) / h;
            let gamma_e = gamma_electrolyte(yq, kappa).unwrap();
            let d_hat_e = pe * cfg.electrolyte.diff_coeff * n_tot(yq) * gamma_e;
            let s_hat_e = pe * s_e * n_tot(yq) * gamma_e;
            let sigma_hat_e = pe * cfg.electrolyte.molar_conductivity * n_tot(yq) * yq;
            for m in 0..2 {
                res.u3[e + m] += w
                    * (geom.psi_e * mu.c_rate * c_e(yq) * (yq - ypq) / dtau * shp[m]
                        + d_hat_e * dy * dshp[m]);
                res.u4[e + m] += w * (s_hat_e * dy + sigma_hat_e * dphi) * dshp[m];
            }
            if region != Region::Separator {
                let ep = match region {
                    Region::Anode => &cfg.anode,
                    Region::Cathode => &cfg.cathode,
                    Region::Separator => unreachable!(),
                };
                let sigma_s =
                    geom.psi_s.unwrap() * geom.pi_s.unwrap() * ep.solid_conductivity;
                let c0 = mesh.col_of_node[e].unwrap();
                let c1 = mesh.col_of_node[e + 1].unwrap();
                let dphi_s = (u.u2[c1] - u.u2[c0]) / h;
                for (m, &cc) in [c0, c1].iter().enumerate() {
                    res.u2[cc] += w * sigma_s * dphi_s * dshp[m];
                }
            }
        }
    }

    // micro columns
    let h_nu = mesh.h_micro();
    for col in 0..mesh.n_cols() {
        let node = mesh.node_of_col[col];
        let region = mesh.node_electrode_region(node).unwrap();
        let ep = match region {
            Region::Anode => &cfg.anode,
            Region::Cathode => &cfg.cathode,
            Region::Separator => unreachable!(),
        };
        let r_a = ep.particle_radius;
        for e in 0..mesh.n_micro - 1 {
            for &x in &gp {
                let w = 0.5 * h_nu;
                let shp = [1.0 - x, x];
                let dshp = [-1.0 / h_nu, 1.0 / h_nu];
                let nu = 1.0 - (mesh.nu_t[e] + x * h_nu);
                let g0 = u.u1[col * mesh.n_micro + e];
                let g1 = u.u1[col * mesh.n_micro + e + 1];
                let gq = g0 * shp[0] + g1 * shp[1];
                let yq = decode_g(gq);
                let gp0 = u_prev.u1[col * mesh.n_micro + e];
                let gp1 = u_prev.u1[col * mesh.n_micro + e + 1];
                let ypq = decode_g(gp0 * shp[0] + gp1 * shp[1]);
                let d_hat_a = mu.d_scale
                    * (1.0 - yq)
                    * gamma_active(yq, ep.enthalpy_gamma).unwrap()
                    * nu
                    * nu;
                let dy_dnt = yq * (1.0 - yq) * (g1 - g0) / h_nu;
                for m in 0..2 {
                    res.u1[col * mesh.n_micro + e + m] += w
                        * (nu * nu * r_a * r_a * mu.c_rate * (yq - ypq) / dtau * shp[m]
                            + d_hat_a * dy_dnt * dshp[m]);
                }
            }
        }
    }

    // nodal reactions
    for col in 0..mesh.n_cols() {
        let node = mesh.node_of_col[col];
        let region = mesh.node_electrode_region(node).unwrap();
        let (ep, geom, eta_x) = match region {
            Region::Anode => (&cfg.anode, &cfg.geom_anode, mesh.eta_x[0]),
            Region::Cathode => (&cfg.cathode, &cfg.geom_cathode, mesh.eta_x[2]),
            Region::Separator => unreachable!(),
        };
        let y_s = decode_g(u.u1[col * mesh.n_micro]);
        let lambda = u.u2[col] - u.u4[node] + f_active(y_s, ep.enthalpy_gamma).unwrap()
            - f_electrolyte(u.u3[node], kappa).unwrap();
        // insertion rate: driven by the affinity of the insertion
        // direction, -lambda
        let rate = mu.l_scale * butler_volmer_g(-lambda, cfg.bv_symmetry);
        let h = eta_x / (n - 1) as f64;
        let boundary = match region {
            Region::Anode => node == 0 || node == n - 1,
            Region::Cathode => node == 2 * (n - 1) || node == mesh.n_macro() - 1,
            Region::Separator => unreachable!(),
        };
        let weight = if boundary { h / 2.0 } else { h };
        let eta_n = ep.lattice_density / cfg.electrolyte.n_salt_ref;
        res.u1[col * mesh.n_micro] -= ep.particle_radius * rate;
        res.u2[col] += geom.theta * weight * rate;
        res.u3[node] -= eta_n * (1.0 - t_ec) * geom.theta * weight * rate;
        res.u4[node] -= eta_n * geom.theta * weight * rate;
    }

    // collector flux and ground
    let cat = mesh.col_of_node[mesh.cathode_collector()].unwrap();
    res.u2[cat] -= mu.c_rate * cfg.eta_w_cat;
    let an = mesh.col_of_node[mesh.anode_collector()].unwrap();
    res.u2[an] = u.u2[an];
    res
}

#[test]
fn residual_matches_independent_assembly_on_smallest_mesh() {
    let cfg = CellConfig::default();
    for (n, m) in [(2usize, 2usize), (3, 4), (5, 3)] {
        let mesh = build(n, m, &cfg);
        let asm = Assembler::new(&mesh, &cfg).unwrap();
        let u = perturbed_state(&mesh, &cfg, 17, 0.2);
        let u_prev = perturbed_state(&mesh, &cfg, 99, 0.05);
        let mu = ParameterPoint::new(1.3, 0.6, 0.8);
        let got = asm.residual(&u, &u_prev, &mu, 2e-2).unwrap();
        let want = brute_force_residual(&mesh, &cfg, &u, &u_prev, &mu, 2e-2);
        for c in Component::ALL {
            for (k, (a, b)) in got
                .component(c)
                .iter()
                .zip(want.component(c))
                .enumerate()
            {
                assert!(
                    (a - b).abs() <= 1e-12 * (1.0 + b.abs()),
                    "mesh {n}x{m} {}[{k}]: {a} vs oracle {b}",
                    c.label()
                );
            }
        }
    }
}

#[test]
fn jacobian_matches_directional_finite_differences() {
    let cfg = CellConfig::default();
    let mesh = build(5, 4, &cfg);
    let asm = Assembler::new(&mesh, &cfg).unwrap();
    let mu = ParameterPoint::default();
    let dtau = 1e-2;
    let n = mesh.total_dofs();

    let mut rng = 2024u64;
    for state_idx in 0..5 {
        let u = perturbed_state(&mesh, &cfg, 1000 + state_idx, 0.15);
        let u_prev = perturbed_state(&mesh, &cfg, 2000 + state_idx, 0.05);

        // dense Jacobian from the assembly
        let mut jac = vec![0.0f64; n * n];
        {
            let mut sink = |r: usize, c: usize, v: f64| jac[r * n + c] += v;
            asm.residual_full(&u, &u_prev, &mu, dtau, Some(&mut sink))
                .unwrap();
        }

        for _ in 0..20 {
            // random direction, mild in u3 to stay in-domain
            let mut dir = Fields::zeros(&mesh);
            for v in dir.u1.iter_mut() {
                *v = splitmix(&mut rng) - 0.5;
            }
            for v in dir.u2.iter_mut() {
                *v = splitmix(&mut rng) - 0.5;
            }
            for v in dir.u3.iter_mut() {
                *v = 0.1 * (splitmix(&mut rng) - 0.5);
            }
            for v in dir.u4.iter_mut() {
                *v = splitmix(&mut rng) - 0.5;
            }
            let h = 1e-6;
            let mut up = u.clone();
            up.axpy(h, &dir);
            let mut um = u.clone();
            um.axpy(-h, &dir);
            let rp = asm.residual(&up, &u_prev, &mu, dtau).unwrap();
            let rm = asm.residual(&um, &u_prev, &mu, dtau).unwrap();

            // J * dir
            let mut jd = vec![0.0f64; n];
            let dir_flat: Vec<f64> = (0..n).map(|i| dir.flat(i)).collect();
            for r in 0..n {
                let mut acc = 0.0;
                for c in 0..n {
                    acc += jac[r * n + c] * dir_flat[c];
                }
                jd[r] = acc;
            }
            let mut num = 0.0;
            let mut den = 0.0;
            for r in 0..n {
                let fd = (rp.flat(r) - rm.flat(r)) / (2.0 * h);
                num += (fd - jd[r]) * (fd - jd[r]);
                den += jd[r] * jd[r];
            }
            let rel = (num / den.max(1e-300)).sqrt();
            assert!(rel < 1e-6, "state {state_idx}: directional FD error {rel}");
        }
    }
}

#[test]
fn jacobian_fd_check_detects_corruption() {
    // negative control: corrupting one Jacobian entry must break the
    // directional finite-difference agreement
    let cfg = CellConfig::default();
    let mesh = build(3, 3, &cfg);
    let asm = Assembler::new(&mesh, &cfg).unwrap();
    let mu = ParameterPoint::default();
    let dtau = 1e-2;
    let n = mesh.total_dofs();
    let u = perturbed_state(&mesh, &cfg, 5, 0.1);
    let u_prev = perturbed_state(&mesh, &cfg, 6, 0.05);
    let mut jac = vec![0.0f64; n * n];
    {
        let mut sink = |r: usize, c: usize, v: f64| jac[r * n + c] += v;
        asm.residual_full(&u, &u_prev, &mu, dtau, Some(&mut sink))
            .unwrap();
    }
    jac[3 * n + 3] += 1.0; // corruption
    let mut rng = 7u64;
    let mut dir = Fields::zeros(&mesh);
    for i in 0..n {
        let v = splitmix(&mut rng) - 0.5;
        let (c, kk) = dir.split_flat(i);
        dir.component_mut(c)[kk] = if c == Component::U3 { 0.1 * v } else { v };
    }
    let h = 1e-6;
    let mut up = u.clone();
    up.axpy(h, &dir);
    let mut um = u.clone();
    um.axpy(-h, &dir);
    let rp = asm.residual(&up, &u_prev, &mu, dtau).unwrap();
    let rm = asm.residual(&um, &u_prev, &mu, dtau).unwrap();
    let dir_flat: Vec<f64> = (0..n).map(|i| dir.flat(i)).collect();
    let mut num = 0.0;
    let mut den = 0.0;
    for r in 0..n {
        let jd: f64 = (0..n).map(|c| jac[r * n + c] * dir_flat[c]).sum();
        let fd = (rp.flat(r) - rm.flat(r)) / (2.0 * h);
        num += (fd - jd) * (fd - jd);
        den += jd * jd;
    }
    let rel = (num / den).sqrt();
    assert!(rel > 1e-6, "corrupted Jacobian slipped through: {rel}");
}

#[test]
fn newton_converges_quadratically_near_solution() {
    let cfg = CellConfig::default();
    let mesh = build(6, 5, &cfg);
    let asm = Assembler::new(&mesh, &cfg).unwrap();
    let layout = LinearLayout::new(&asm);
    let mu = ParameterPoint::default();
    let dtau = 1e-2;
    let u_prev = State::initial(&mesh, &cfg).unwrap().fields;

    // tightly converged reference
    let tight = NewtonOptions {
        rtol: 1e-14,
        ..NewtonOptions::default()
    };
    let reference = newton_solve(&asm, &u_prev, None, &mu, dtau, &tight, &layout, true, dtau)
        .unwrap();
    let exact = reference.fields;
    let iterates = reference.iterates.unwrap();
    // error sequence against the tight solution
    let errors: Vec<f64> = iterates
        .iter()
        .map(|it| {
            let mut d = it.clone();
            d.axpy(-1.0, &exact);
            d.norm()
        })
        .filter(|e| *e > 1e-13)
        .collect();
    assert!(errors.len() >= 2, "need at least two nonzero errors");
    // quadratic convergence: e_{k+1} <= C e_k^2 with modest C near the
    // solution
    for w in errors.windows(2) {
        let ratio = w[1] / (w[0] * w[0]);
        assert!(
            ratio < 50.0,
            "convergence not quadratic: e={:?} ratio={ratio}",
            errors
        );
    }
}

#[test]
fn capacity_balance_tracks_time_exactly() {
    let cfg = CellConfig::default();
    let mesh = build(8, 6, &cfg);
    let opts = SimOptions {
        t_end: 0.3,
        ..SimOptions::default()
    };
    let mu = ParameterPoint::default();
    let r = simulate(&mu, &cfg, &mesh, &opts).unwrap();
    let soc0 = r.trajectory.states[0].state_of_charge(&mesh, Electrode::Cathode);
    for s in &r.trajectory.states {
        let drift = (s.state_of_charge(&mesh, Electrode::Cathode) - soc0 - s.time).abs();
        assert!(drift < 5e-3, "tau={}: drift {drift}", s.time);
    }
}

#[test]
fn restricted_jacobian_rows_match_dense_assembly() {
    let cfg = CellConfig::default();
    let mesh = build(4, 4, &cfg);
    let asm = Assembler::new(&mesh, &cfg).unwrap();
    let mu = ParameterPoint::default();
    let u = perturbed_state(&mesh, &cfg, 31, 0.15);
    let u_prev = perturbed_state(&mesh, &cfg, 32, 0.05);
    let n = mesh.total_dofs();
    let mut dense = vec![0.0f64; n * n];
    {
        let mut sink = |r: usize, c: usize, v: f64| dense[r * n + c] += v;
        asm.residual_full(&u, &u_prev, &mu, 1e-2, Some(&mut sink))
            .unwrap();
    }
    let rows: Vec<usize> = vec![0, 3, n / 2, n - 1];
    let (vals, jrows) = asm
        .restricted(&u, &u_prev, &mu, 1e-2, &rows, true)
        .unwrap();
    let jrows = jrows.unwrap();
    let full = asm.residual(&u, &u_prev, &mu, 1e-2).unwrap();
    for (i, &row) in rows.iter().enumerate() {
        assert!((vals[i] - full.flat(row)).abs() < 1e-13);
        let mut reconstructed = vec![0.0f64; n];
        for &(c, v) in &jrows[i] {
            reconstructed[c] += v;
        }
        for c in 0..n {
            assert!(
                (reconstructed[c] - dense[row * n + c]).abs() < 1e-12,
                "row {row} col {c}: {} vs {}",
                reconstructed[c],
                dense[row * n + c]
            );
        }
    }
}

#[test]
fn voltage_curve_self_converges_under_refinement() {
    // halving h and dtau monotonically shrinks the change in the voltage
    // curve between consecutive refinement levels
    let cfg = CellConfig::default();
    let mu = ParameterPoint::default();
    let levels = [(6usize, 4usize, 4e-2), (12, 8, 2e-2), (24, 16, 1e-2)];
    let mut curves: Vec<Vec<f64>> = Vec::new();
    for &(n, m, dtau) in &levels {
        let mesh = build(n, m, &cfg);
        let opts = SimOptions {
            dtau,
            t_end: 0.2,
            ..SimOptions::default()
        };
        let r = simulate(&mu, &cfg, &mesh, &opts).unwrap();
        // sample the voltage at the shared coarse time grid
        let stride = (4e-2 / dtau).round() as usize;
        let v: Vec<f64> = r
            .trajectory
            .states
            .iter()
            .step_by(stride)
            .map(|s| s.cell_voltage_dimless(&mesh))
            .collect();
        curves.push(v);
    }
    let err01: f64 = curves[0]
        .iter()
        .zip(&curves[1])
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let err12: f64 = curves[1]
        .iter()
        .zip(&curves[2])
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    assert!(
        err12 < err01,
        "no self-convergence: {err01} then {err12}"
    );
}

#[test]
fn full_discharge_terminates_at_cutoff() {
    let cfg = CellConfig::default();
    let mesh = build(8, 6, &cfg);
    let opts = SimOptions::default();
    let r = simulate(&ParameterPoint::default(), &cfg, &mesh, &opts).unwrap();
    assert!(r.trajectory.termination.reached_e_min);
    let last = r.trajectory.states.last().unwrap();
    // the stopping rule: some cathode node is at or below the cutoff
    assert!(last.min_cathode_phi_s(&mesh) <= opts.e_min);
    // and the step before was still above it
    let before = &r.trajectory.states[r.trajectory.len() - 2];
    assert!(before.min_cathode_phi_s(&mesh) > opts.e_min);
    r.trajectory.validate_time_grid().unwrap();
    // the interpolated terminal capacity sits between the last two SOCs
    let cap = r.trajectory.capacity_at_cutoff(&mesh, opts.e_min);
    let s0 = before.state_of_charge(&mesh, Electrode::Cathode);
    let s1 = last.state_of_charge(&mesh, Electrode::Cathode);
    assert!(cap >= s0 && cap <= s1, "cap {cap} outside [{s0}, {s1}]");
}

#[test]
fn newton_failure_carries_partial_trajectory() {
    let cfg = CellConfig::default();
    let mesh = build(6, 4, &cfg);
    // a one-iteration budget cannot absorb the load step
    let opts = SimOptions {
        newton: NewtonOptions {
            max_iter: 1,
            ..NewtonOptions::default()
        },
        ..SimOptions::default()
    };
    match simulate(&ParameterPoint::new(4.0, 0.5, 0.5), &cfg, &mesh, &opts) {
        Err(cellrom::Error::StepFailed {
            step,
            partial,
            source,
            ..
        }) => {
            assert_eq!(step, 1);
            assert_eq!(partial.len(), 1, "partial trajectory holds the states so far");
            assert!(matches!(*source, cellrom::Error::NewtonFailure { .. }));
        }
        other => panic!("expected a step failure, got ok={}", other.is_ok()),
    }
}

#[test]
fn capacity_balance_holds_for_any_constant_rate() {
    let cfg = CellConfig::default();
    let mesh = build(10, 8, &cfg);
    for c_rate in [0.3, 2.0, 3.5] {
        let opts = SimOptions {
            t_end: 0.2,
            ..SimOptions::default()
        };
        let r = simulate(&ParameterPoint::new(c_rate, 0.5, 0.5), &cfg, &mesh, &opts).unwrap();
        let soc0 = r.trajectory.states[0].state_of_charge(&mesh, Electrode::Cathode);
        for s in &r.trajectory.states {
            let drift = (s.state_of_charge(&mesh, Electrode::Cathode) - soc0 - s.time).abs();
            assert!(drift < 5e-4, "C={c_rate} tau={}: drift {drift}", s.time);
        }
    }
}
