//! Newton iteration for one implicit-Euler step.
//!
//! Newton with a backtracking halving line search: a step is shortened
//! when it leaves the domain of the material functions or fails to reduce
//! the residual norm. Full steps are taken as soon as they decrease the
//! residual, so the quadratic convergence of the plain iteration is kept
//! near the solution. Linear systems are solved by a banded direct
//! factorization on an interleaved ordering of the degrees of freedom
//! (micro column, then the macro fields, per macro node), which is
//! deterministic run-to-run.

use crate::assembly::Assembler;
use crate::banded::BandedMatrix;
use crate::error::{Error, Result};
use crate::mesh::PseudoMesh;
use crate::params::ParameterPoint;
use crate::state::Fields;

/// Convergence criterion of the nonlinear iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NewtonCriterion {
    /// Update norm relative to the state norm (the default reading of a
    /// relative-error tolerance).
    UpdateNorm,
    /// Residual norm relative to the first residual of the step.
    ResidualNorm,
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub rtol: f64,
    /// Absolute residual norm below which the state counts as converged
    /// without any iteration.
    pub atol: f64,
    pub max_iter: usize,
    /// Maximum number of step halvings per iteration.
    pub max_backtracks: usize,
    pub criterion: NewtonCriterion,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-5,
            atol: 1e-12,
            max_iter: 60,
            max_backtracks: 16,
            criterion: NewtonCriterion::UpdateNorm,
        }
    }
}

/// Result of one Newton solve.
pub struct NewtonOutcome {
    pub fields: Fields,
    pub iterations: usize,
    /// All iterates (initial guess first, converged state last) when
    /// recording was requested.
    pub iterates: Option<Vec<Fields>>,
}

/// Interleaved ordering and band extents of the Jacobian; reusable across
/// steps of one mesh.
pub struct LinearLayout {
    /// flat index -> interleaved index
    perm: Vec<usize>,
    kl: usize,
    ku: usize,
}

impl LinearLayout {
    pub fn new(assembler: &Assembler) -> Self {
        let mesh = assembler.mesh;
        let n = mesh.total_dofs();
        let mut perm = vec![usize::MAX; n];
        let mut next = 0;
        for node in 0..mesh.n_macro() {
            if let Some(col) = mesh.col_of_node[node] {
                for m in 0..mesh.n_micro {
                    perm[assembler.flat_u1(col, m)] = next;
                    next += 1;
                }
                perm[assembler.flat_u2(col)] = next;
                next += 1;
            }
            perm[assembler.flat_u3(node)] = next;
            next += 1;
            perm[assembler.flat_u4(node)] = next;
            next += 1;
        }
        debug_assert_eq!(next, n);
        // band extents from the structural couplings: within a node block
        // everything couples; across neighbouring blocks the macro fields
        // couple. Two electrode blocks of size n_micro + 3 dominate.
        let block = mesh.n_micro + 3;
        let kl = block + 3;
        let ku = block + 3;
        Self { perm, kl, ku }
    }

    pub fn n(&self) -> usize {
        self.perm.len()
    }
}

/// Solve one implicit-Euler step starting from `u_prev`. An optional
/// predictor state seeds the iteration; when it is not evaluable the
/// iteration falls back to `u_prev` itself.
#[allow(clippy::too_many_arguments)]
pub fn newton_solve(
    assembler: &Assembler,
    u_prev: &Fields,
    guess: Option<&Fields>,
    mu: &ParameterPoint,
    dtau: f64,
    opts: &NewtonOptions,
    layout: &LinearLayout,
    record: bool,
    tau: f64,
) -> Result<NewtonOutcome> {
    let n = layout.n();
    let mut u = u_prev.clone();
    let mut initial_residual = None;
    if let Some(g) = guess {
        match assembler.residual(g, u_prev, mu, dtau) {
            Ok(r) => {
                u = g.clone();
                initial_residual = Some(r);
            }
            Err(Error::Domain { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    let mut iterates = record.then(|| vec![u.clone()]);

    let residual0 = match initial_residual {
        Some(r) => r,
        None => assembler.residual(&u, u_prev, mu, dtau)?,
    };
    let mut res_norm = flat_norm(&residual0);
    let res_norm0 = res_norm;
    if res_norm <= opts.atol {
        return Ok(NewtonOutcome {
            fields: u,
            iterations: 0,
            iterates,
        });
    }

    let mut last_update = f64::INFINITY;
    for iter in 1..=opts.max_iter {
        // assemble Jacobian into the banded store; the residual of the
        // same pass feeds the linear solve
        let mut matrix = BandedMatrix::new(n, layout.kl, layout.ku);
        let residual = {
            let perm = &layout.perm;
            let mut sink = |r: usize, c: usize, v: f64| {
                matrix.add(perm[r], perm[c], v);
            };
            assembler.residual_full(&u, u_prev, mu, dtau, Some(&mut sink))?
        };
        let lu = matrix.factor()?;
        let mut rhs = vec![0.0; n];
        scatter(&residual, &layout.perm, &mut rhs);
        lu.solve(&mut rhs);

        let mut delta = Fields::zeros(assembler.mesh);
        gather(&rhs, &layout.perm, &mut delta);

        // backtracking halving: shorten the step until it stays evaluable
        // and decreases the residual norm
        let mut applied = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let mut candidate = u.clone();
            candidate.axpy(-applied, &delta);
            match assembler.residual(&candidate, u_prev, mu, dtau) {
                Ok(r) => {
                    let norm = flat_norm(&r);
                    if norm < res_norm || norm <= opts.atol {
                        accepted = Some((candidate, norm));
                        break;
                    }
                }
                Err(Error::Domain { .. }) => {}
                Err(e) => return Err(e),
            }
            applied *= 0.5;
        }
        let Some((candidate, next_norm)) = accepted else {
            return Err(Error::NewtonFailure {
                tau,
                iterations: iter,
                last_update: flat_norm(&delta),
                last_residual: res_norm,
            });
        };

        u = candidate;
        res_norm = next_norm;
        last_update = applied * flat_norm(&delta) / flat_norm(&u).max(1e-300);
        if let Some(list) = iterates.as_mut() {
            list.push(u.clone());
        }

        let converged = match opts.criterion {
            NewtonCriterion::UpdateNorm => last_update <= opts.rtol,
            NewtonCriterion::ResidualNorm => {
                res_norm <= opts.rtol * res_norm0 + opts.atol
            }
        };
        if converged {
            return Ok(NewtonOutcome {
                fields: u,
                iterations: iter,
                iterates,
            });
        }
    }

    Err(Error::NewtonFailure {
        tau,
        iterations: opts.max_iter,
        last_update,
        last_residual: res_norm,
    })
}

fn flat_norm(f: &Fields) -> f64 {
    f.norm()
}

fn scatter(f: &Fields, perm: &[usize], out: &mut [f64]) {
    let mut flat = 0;
    for c in crate::mesh::Component::ALL {
        for &v in f.component(c) {
            out[perm[flat]] = v;
            flat += 1;
        }
    }
}

fn gather(values: &[f64], perm: &[usize], out: &mut Fields) {
    let mut flat = 0;
    for c in crate::mesh::Component::ALL {
        let dst = out.component_mut(c);
        for slot in dst.iter_mut() {
            *slot = values[perm[flat]];
            flat += 1;
        }
    }
}

/// Verify band extents cover every structural coupling; used by tests and
/// debug assertions.
pub fn check_bandwidth(assembler: &Assembler, mesh: &PseudoMesh, layout: &LinearLayout) -> bool {
    let u0 = match crate::state::State::initial(mesh, assembler.config) {
        Ok(s) => s.fields,
        Err(_) => return false,
    };
    let mut ok = true;
    let mut sink = |r: usize, c: usize, _v: f64| {
        let (pr, pc) = (layout.perm[r], layout.perm[c]);
        if pr > pc && pr - pc > layout.kl {
            ok = false;
        }
        if pc > pr && pc - pr > layout.ku {
            ok = false;
        }
    };
    let mu = ParameterPoint::default();
    let _ = assembler.residual_full(&u0, &u0, &mu, 1e-2, Some(&mut sink));
    ok
}
