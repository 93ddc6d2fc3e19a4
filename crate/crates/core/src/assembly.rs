//! Galerkin assembly of the coupled pseudo-2D system.
//!
//! Unknowns per time step: the transformed micro concentration `u1 = g`,
//! the solid potential `u2`, the electrolyte mole fraction `u3`, and the
//! electrolyte potential `u4`. The residual of one implicit-Euler step is
//!
//! * micro balance (per electrode column, transformed coordinate
//!   `nu_t = 1 - nu`): mass `nu^2 r^2 C_h (y - y_prev)/dtau`, diffusion
//!   with `D_hat_A`, and the surface flux `-r * R` at `nu_t = 0`;
//! * solid charge balance: `sigma_hat_S` stiffness, reaction source
//!   `+theta * R`, collector flux `-C_h * eta_W` at `xi = 1`, Dirichlet
//!   ground at `xi = 0`;
//! * electrolyte mass balance: `psi_E C_h c_E` mass term, `D_hat_E`
//!   stiffness, source `-eta_n (1 - t) theta R`;
//! * electrolyte charge balance: `S_hat_E`/`sigma_hat_E` stiffness and
//!   source `-eta_n theta R`.
//!
//! Reaction terms are nodal: the rate is evaluated at the micro surface
//! node collocated with each macro node and enters the macro rows through
//! lumped hat-function weights. Piecewise-linear elements with two-point
//! Gauss quadrature are used in both directions.

use crate::coefficients::RegionCoeffs;
use crate::error::{Error, Result};
use crate::materials::{
    butler_volmer_g, butler_volmer_g_deriv, decode_g, f_active, f_active_deriv, f_electrolyte,
    f_electrolyte_deriv,
};
use crate::mesh::{Component, PseudoMesh};
use crate::params::{CellConfig, ParameterPoint, Region};
use crate::state::Fields;

/// Gauss points of the two-point rule on [0, 1].
const GP: [f64; 2] = [0.21132486540518713, 0.7886751345948129];

/// Affinities beyond this magnitude are treated as evaluability failures;
/// they only arise from runaway Newton iterates and signal step rejection
/// before the exponential rate factor overflows.
pub const AFFINITY_BOUND: f64 = 500.0;

/// Transformed micro concentrations beyond this magnitude are treated as
/// evaluability failures: the logistic transform saturates in floating
/// point there and its derivative underflows, which would produce exactly
/// singular Jacobian rows.
pub const TRANSFORM_BOUND: f64 = 60.0;

/// Row-major sparse row: (column flat index, value).
pub type SparseRow = Vec<(usize, f64)>;

/// Nodal reaction data at one electrode macro node.
struct Reaction {
    rate: f64,
    /// Derivatives with respect to (g_surf, u2, u3, u4) at the node.
    d: [f64; 4],
}

/// Assembles residuals and Jacobians of the time-discrete system.
pub struct Assembler<'a> {
    pub mesh: &'a PseudoMesh,
    pub config: &'a CellConfig,
}

impl<'a> Assembler<'a> {
    pub fn new(mesh: &'a PseudoMesh, config: &'a CellConfig) -> Result<Self> {
        config.validate()?;
        let widths = [
            config.width_fraction(Region::Anode),
            config.width_fraction(Region::Separator),
            config.width_fraction(Region::Cathode),
        ];
        for (a, b) in widths.iter().zip(mesh.eta_x.iter()) {
            if (a - b).abs() > 1e-12 {
                return Err(Error::Mesh(format!(
                    "mesh width fractions {:?} do not match configuration {:?}",
                    mesh.eta_x, widths
                )));
            }
        }
        Ok(Self { mesh, config })
    }

    fn coeffs(&self, mu: &ParameterPoint) -> [RegionCoeffs; 3] {
        [
            RegionCoeffs::new(self.config, mu, Region::Anode),
            RegionCoeffs::new(self.config, mu, Region::Separator),
            RegionCoeffs::new(self.config, mu, Region::Cathode),
        ]
    }

    fn region_index(r: Region) -> usize {
        match r {
            Region::Anode => 0,
            Region::Separator => 1,
            Region::Cathode => 2,
        }
    }

    /// Flat index helpers (component-major numbering u1|u2|u3|u4).
    pub fn flat_u1(&self, col: usize, m: usize) -> usize {
        col * self.mesh.n_micro + m
    }
    pub fn flat_u2(&self, col: usize) -> usize {
        self.mesh.component_dims()[0] + col
    }
    pub fn flat_u3(&self, node: usize) -> usize {
        let d = self.mesh.component_dims();
        d[0] + d[1] + node
    }
    pub fn flat_u4(&self, node: usize) -> usize {
        let d = self.mesh.component_dims();
        d[0] + d[1] + d[2] + node
    }

    /// The flat row index of the grounded-collector Dirichlet condition.
    pub fn dirichlet_row(&self) -> usize {
        let col = self.mesh.col_of_node[self.mesh.anode_collector()].expect("collector column");
        self.flat_u2(col)
    }

    fn reaction_at(
        &self,
        coeffs: &RegionCoeffs,
        g_surf: f64,
        u2: f64,
        u3: f64,
        u4: f64,
    ) -> Result<Reaction> {
        let el = &self.config.electrolyte;
        let gamma = match coeffs.region {
            Region::Anode => self.config.anode.enthalpy_gamma,
            Region::Cathode => self.config.cathode.enthalpy_gamma,
            Region::Separator => unreachable!("no reaction in the separator"),
        };
        let kappa = el.solvation_number;
        let y_s = decode_g(g_surf);
        let lambda = u2 - u4 + f_active(y_s, gamma)? - f_electrolyte(u3, kappa)?;
        if !lambda.is_finite() || lambda.abs() > AFFINITY_BOUND {
            return Err(Error::Domain {
                context: "surface affinity",
                value: lambda,
                domain: "bounded",
            });
        }
        let alpha = self.config.bv_symmetry;
        let l_hat = coeffs.l_hat.expect("electrode region");
        // R is the insertion rate: positive when the affinity of the
        // insertion direction, -lambda, is positive. A particle that fills
        // up raises lambda and throttles further insertion.
        let rate = l_hat * butler_volmer_g(-lambda, alpha);
        let drate = -l_hat * butler_volmer_g_deriv(-lambda, alpha);
        // d lambda / d g = f_A'(y) * y(1-y)
        let dl_dg = f_active_deriv(y_s, gamma)? * y_s * (1.0 - y_s);
        let dl_du3 = -f_electrolyte_deriv(u3, kappa)?;
        Ok(Reaction {
            rate,
            d: [drate * dl_dg, drate, drate * dl_du3, -drate],
        })
    }

    /// Assemble the full residual; when `jac` is given, also emit all
    /// Jacobian entries as (row, col, value) triplets in the flat
    /// numbering.
    pub fn residual_full(
        &self,
        u: &Fields,
        u_prev: &Fields,
        mu: &ParameterPoint,
        dtau: f64,
        mut jac: Option<&mut dyn FnMut(usize, usize, f64)>,
    ) -> Result<Fields> {
        if dtau <= 0.0 {
            return Err(Error::Config(format!("time step must be positive: {dtau}")));
        }
        mu.validate()?;
        let mesh = self.mesh;
        let coeffs = self.coeffs(mu);
        let mut res = Fields::zeros(mesh);
        let dirichlet = self.dirichlet_row();

        // macro elements: u2 (electrodes), u3, u4
        for e in 0..mesh.n_macro() - 1 {
            let region = mesh.element_region(e);
            let c = &coeffs[Self::region_index(region)];
            let h = mesh.xi[e + 1] - mesh.xi[e];

            if region != Region::Separator {
                let (r2, j2) = self.u2_element(c, u, e, h)?;
                for (local, row_val) in r2.iter().enumerate() {
                    let row = self.flat_u2_node(e + local);
                    if row != dirichlet {
                        res.u2[self.col_at(e + local)] += row_val;
                        if let Some(sink) = jac.as_deref_mut() {
                            for (lc, v) in j2[local].iter().enumerate() {
                                sink(row, self.flat_u2_node(e + lc), *v);
                            }
                        }
                    }
                }
            }

            let (r3, j3) = self.u3_element(c, u, u_prev, mu, dtau, e, h)?;
            let (r4, j4_u3, j4_u4) = self.u4_element(c, u, e, h)?;
            for local in 0..2 {
                let node = e + local;
                res.u3[node] += r3[local];
                res.u4[node] += r4[local];
                if let Some(sink) = jac.as_deref_mut() {
                    for lc in 0..2 {
                        sink(self.flat_u3(node), self.flat_u3(e + lc), j3[local][lc]);
                        sink(self.flat_u4(node), self.flat_u3(e + lc), j4_u3[local][lc]);
                        sink(self.flat_u4(node), self.flat_u4(e + lc), j4_u4[local][lc]);
                    }
                }
            }
        }

        // micro elements
        for col in 0..mesh.n_cols() {
            let node = mesh.node_of_col[col];
            let region = mesh.node_electrode_region(node).expect("electrode column");
            let c = &coeffs[Self::region_index(region)];
            for e in 0..mesh.n_micro - 1 {
                let (r1, j1) = self.micro_element(c, u, u_prev, mu, dtau, col, e)?;
                for local in 0..2 {
                    let m = e + local;
                    res.u1[col * mesh.n_micro + m] += r1[local];
                    if let Some(sink) = jac.as_deref_mut() {
                        for lc in 0..2 {
                            sink(
                                self.flat_u1(col, m),
                                self.flat_u1(col, e + lc),
                                j1[local][lc],
                            );
                        }
                    }
                }
            }
        }

        // nodal reactions and the collector flux
        for col in 0..mesh.n_cols() {
            let node = mesh.node_of_col[col];
            let region = mesh.node_electrode_region(node).expect("electrode column");
            let c = &coeffs[Self::region_index(region)];
            let rw = mesh.reaction_weight(node);
            let reaction = self.reaction_at(
                c,
                u.u1[col * mesh.n_micro],
                u.u2[col],
                u.u3[node],
                u.u4[node],
            )?;
            let r_a = c.r_a.expect("electrode");
            let eta_n = c.eta_n.expect("electrode");
            let t = self.config.electrolyte.transference;
            // (row, factor) pairs of every row the nodal rate feeds
            let u2_row = self.flat_u2(col);
            let mut targets = vec![
                (self.flat_u1(col, 0), -r_a),
                (self.flat_u3(node), -eta_n * (1.0 - t) * c.theta * rw),
                (self.flat_u4(node), -eta_n * c.theta * rw),
            ];
            if u2_row != dirichlet {
                targets.push((u2_row, c.theta * rw));
            }
            let cols4 = [
                self.flat_u1(col, 0),
                u2_row,
                self.flat_u3(node),
                self.flat_u4(node),
            ];
            for (row, factor) in targets {
                let (comp, k) = res.split_flat(row);
                res.component_mut(comp)[k] += factor * reaction.rate;
                if let Some(sink) = jac.as_deref_mut() {
                    for (ci, &colf) in cols4.iter().enumerate() {
                        sink(row, colf, factor * reaction.d[ci]);
                    }
                }
            }
        }

        // collector Neumann flux
        let cat_col = mesh.col_of_node[mesh.cathode_collector()].expect("collector column");
        res.u2[cat_col] -= mu.c_rate * self.config.eta_w_cat;

        // Dirichlet ground replaces the anode-collector row
        let an_col = mesh.col_of_node[mesh.anode_collector()].expect("collector column");
        res.u2[an_col] = u.u2[an_col];
        if let Some(sink) = jac {
            sink(dirichlet, dirichlet, 1.0);
        }

        Ok(res)
    }

    /// Residual without Jacobian.
    pub fn residual(
        &self,
        u: &Fields,
        u_prev: &Fields,
        mu: &ParameterPoint,
        dtau: f64,
    ) -> Result<Fields> {
        self.residual_full(u, u_prev, mu, dtau, None)
    }

    fn col_at(&self, node: usize) -> usize {
        self.mesh.col_of_node[node].expect("electrode node")
    }

    fn flat_u2_node(&self, node: usize) -> usize {
        self.flat_u2(self.col_at(node))
    }

    /// Solid-potential stiffness on one electrode macro element.
    fn u2_element(
        &self,
        c: &RegionCoeffs,
        u: &Fields,
        e: usize,
        h: f64,
    ) -> Result<([f64; 2], [[f64; 2]; 2])> {
        let sigma = c.sigma_hat_s()?;
        let p0 = u.u2[self.col_at(e)];
        let p1 = u.u2[self.col_at(e + 1)];
        let flux = sigma * (p1 - p0) / h;
        let res = [-flux, flux];
        let k = sigma / h;
        let jac = [[k, -k], [-k, k]];
        Ok((res, jac))
    }

    /// Electrolyte mass balance on one macro element (all regions).
    #[allow(clippy::too_many_arguments)]
    fn u3_element(
        &self,
        c: &RegionCoeffs,
        u: &Fields,
        u_prev: &Fields,
        mu: &ParameterPoint,
        dtau: f64,
        e: usize,
        h: f64,
    ) -> Result<([f64; 2], [[f64; 2]; 2])> {
        let y = [u.u3[e], u.u3[e + 1]];
        let yp = [u_prev.u3[e], u_prev.u3[e + 1]];
        let dy_dxi = (y[1] - y[0]) / h;
        let mut res = [0.0f64; 2];
        let mut jac = [[0.0f64; 2]; 2];
        for &x in &GP {
            let w = 0.5 * h;
            let shp = [1.0 - x, x];
            let yq = y[0] * shp[0] + y[1] * shp[1];
            let ypq = yp[0] * shp[0] + yp[1] * shp[1];
            let ce = c.c_e(yq)?;
            let de = c.d_hat_e(yq)?;
            let mass_base = c.psi_e * mu.c_rate / dtau;
            for m in 0..2 {
                let dshp_m = if m == 0 { -1.0 / h } else { 1.0 / h };
                res[m] += w * (mass_base * ce.val * (yq - ypq) * shp[m] + de.val * dy_dxi * dshp_m);
                for k in 0..2 {
                    let dshp_k = if k == 0 { -1.0 / h } else { 1.0 / h };
                    jac[m][k] += w
                        * (mass_base
                            * (ce.der * shp[k] * (yq - ypq) + ce.val * shp[k])
                            * shp[m]
                            + (de.der * shp[k] * dy_dxi + de.val * dshp_k) * dshp_m);
                }
            }
        }
        Ok((res, jac))
    }

    /// Electrolyte charge balance on one macro element (all regions).
    /// Returns the residual and the Jacobian blocks with respect to `u3`
    /// and `u4`.
    #[allow(clippy::type_complexity)]
    fn u4_element(
        &self,
        c: &RegionCoeffs,
        u: &Fields,
        e: usize,
        h: f64,
    ) -> Result<([f64; 2], [[f64; 2]; 2], [[f64; 2]; 2])> {
        let y = [u.u3[e], u.u3[e + 1]];
        let phi = [u.u4[e], u.u4[e + 1]];
        let dy_dxi = (y[1] - y[0]) / h;
        let dphi_dxi = (phi[1] - phi[0]) / h;
        let mut res = [0.0f64; 2];
        let mut jac_u3 = [[0.0f64; 2]; 2];
        let mut jac_u4 = [[0.0f64; 2]; 2];
        for &x in &GP {
            let w = 0.5 * h;
            let shp = [1.0 - x, x];
            let yq = y[0] * shp[0] + y[1] * shp[1];
            let se = c.s_hat_e(yq)?;
            let sig = c.sigma_hat_e(yq)?;
            let flux = se.val * dy_dxi + sig.val * dphi_dxi;
            for m in 0..2 {
                let dshp_m = if m == 0 { -1.0 / h } else { 1.0 / h };
                res[m] += w * flux * dshp_m;
                for k in 0..2 {
                    let dshp_k = if k == 0 { -1.0 / h } else { 1.0 / h };
                    jac_u3[m][k] += w
                        * (se.der * shp[k] * dy_dxi
                            + se.val * dshp_k
                            + sig.der * shp[k] * dphi_dxi)
                        * dshp_m;
                    jac_u4[m][k] += w * sig.val * dshp_k * dshp_m;
                }
            }
        }
        Ok((res, jac_u3, jac_u4))
    }

    /// Micro diffusion on one element of a column.
    #[allow(clippy::too_many_arguments)]
    fn micro_element(
        &self,
        c: &RegionCoeffs,
        u: &Fields,
        u_prev: &Fields,
        mu: &ParameterPoint,
        dtau: f64,
        col: usize,
        e: usize,
    ) -> Result<([f64; 2], [[f64; 2]; 2])> {
        let mmesh = self.mesh;
        let m0 = col * mmesh.n_micro;
        let h = mmesh.h_micro();
        let g = [u.u1[m0 + e], u.u1[m0 + e + 1]];
        for &gv in &g {
            if !gv.is_finite() || gv.abs() > TRANSFORM_BOUND {
                return Err(Error::Domain {
                    context: "micro transform",
                    value: gv,
                    domain: "bounded",
                });
            }
        }
        let gp = [u_prev.u1[m0 + e], u_prev.u1[m0 + e + 1]];
        let dg_dnt = (g[1] - g[0]) / h;
        let r_a = c.r_a.expect("electrode");
        let r2c = r_a * r_a * mu.c_rate;
        let mut res = [0.0f64; 2];
        let mut jac = [[0.0f64; 2]; 2];
        for &x in &GP {
            let w = 0.5 * h;
            let shp = [1.0 - x, x];
            let nu_t = mmesh.nu_t[e] + x * h;
            let nu = 1.0 - nu_t;
            let gq = g[0] * shp[0] + g[1] * shp[1];
            let gpq = gp[0] * shp[0] + gp[1] * shp[1];
            let yq = decode_g(gq);
            let ypq = decode_g(gpq);
            let dy_dg = yq * (1.0 - yq);
            let da = c.d_hat_a(yq, nu)?;
            let dy_dnt = dy_dg * dg_dnt;
            let mass_base = nu * nu * r2c / dtau;
            for m in 0..2 {
                let dshp_m = if m == 0 { -1.0 / h } else { 1.0 / h };
                res[m] += w * (mass_base * (yq - ypq) * shp[m] + da.val * dy_dnt * dshp_m);
                for k in 0..2 {
                    let dshp_k = if k == 0 { -1.0 / h } else { 1.0 / h };
                    let dyq_dgk = dy_dg * shp[k];
                    let ddy_dnt = (1.0 - 2.0 * yq) * dyq_dgk * dg_dnt + dy_dg * dshp_k;
                    jac[m][k] += w
                        * (mass_base * dyq_dgk * shp[m]
                            + (da.der * dyq_dgk * dy_dnt + da.val * ddy_dnt) * dshp_m);
                }
            }
        }
        Ok((res, jac))
    }

    /// Source degrees of freedom a set of residual rows depends on
    /// (current and previous state alike), in the flat numbering.
    pub fn closure_of_rows(&self, rows: &[usize]) -> Vec<usize> {
        let mesh = self.mesh;
        let dims = mesh.component_dims();
        let zero = Fields::zeros(mesh);
        let mut needed = vec![false; dims.iter().sum()];
        let mark = |idx: usize, needed: &mut Vec<bool>| needed[idx] = true;
        for &row in rows {
            let (comp, k) = zero.split_flat(row);
            match comp {
                Component::U1 => {
                    let col = k / mesh.n_micro;
                    let m = k % mesh.n_micro;
                    let lo = m.saturating_sub(1);
                    let hi = (m + 1).min(mesh.n_micro - 1);
                    for mm in lo..=hi {
                        mark(self.flat_u1(col, mm), &mut needed);
                    }
                    if m == 0 {
                        let node = mesh.node_of_col[col];
                        mark(self.flat_u2(col), &mut needed);
                        mark(self.flat_u3(node), &mut needed);
                        mark(self.flat_u4(node), &mut needed);
                    }
                }
                Component::U2 => {
                    let col = k;
                    let node = mesh.node_of_col[col];
                    mark(self.flat_u2(col), &mut needed);
                    if row != self.dirichlet_row() {
                        for e in self.u2_elements_at(node) {
                            mark(self.flat_u2_node(e), &mut needed);
                            mark(self.flat_u2_node(e + 1), &mut needed);
                        }
                        mark(self.flat_u1(col, 0), &mut needed);
                        mark(self.flat_u3(node), &mut needed);
                        mark(self.flat_u4(node), &mut needed);
                    }
                }
                Component::U3 | Component::U4 => {
                    let node = k;
                    let lo = node.saturating_sub(1);
                    let hi = (node + 1).min(mesh.n_macro() - 1);
                    for nn in lo..=hi {
                        mark(self.flat_u3(nn), &mut needed);
                        if comp == Component::U4 {
                            mark(self.flat_u4(nn), &mut needed);
                        }
                    }
                    if comp == Component::U3 {
                        mark(self.flat_u3(node), &mut needed);
                    }
                    if let Some(col) = mesh.col_of_node[node] {
                        mark(self.flat_u1(col, 0), &mut needed);
                        mark(self.flat_u2(col), &mut needed);
                        mark(self.flat_u3(node), &mut needed);
                        mark(self.flat_u4(node), &mut needed);
                    }
                }
            }
        }
        needed
            .iter()
            .enumerate()
            .filter_map(|(i, &n)| n.then_some(i))
            .collect()
    }

    /// Macro elements of the same electrode adjacent to `node`.
    fn u2_elements_at(&self, node: usize) -> Vec<usize> {
        let n = self.mesh.n_per_region;
        let mut out = Vec::with_capacity(2);
        match self.mesh.node_electrode_region(node) {
            Some(Region::Anode) => {
                if node >= 1 {
                    out.push(node - 1);
                }
                if node <= n - 2 {
                    out.push(node);
                }
            }
            Some(Region::Cathode) => {
                if node > 2 * (n - 1) {
                    out.push(node - 1);
                }
                if node <= self.mesh.n_macro() - 2 {
                    out.push(node);
                }
            }
            _ => {}
        }
        out
    }

    /// Evaluate selected residual entries only; the work done is
    /// proportional to the number of requested rows. Optionally also
    /// returns the sparse Jacobian rows.
    pub fn restricted(
        &self,
        u: &Fields,
        u_prev: &Fields,
        mu: &ParameterPoint,
        dtau: f64,
        rows: &[usize],
        with_jac: bool,
    ) -> Result<(Vec<f64>, Option<Vec<SparseRow>>)> {
        mu.validate()?;
        let mesh = self.mesh;
        let coeffs = self.coeffs(mu);
        let zero = Fields::zeros(mesh);
        let dirichlet = self.dirichlet_row();
        let mut values = vec![0.0; rows.len()];
        let mut jrows: Vec<SparseRow> = vec![Vec::new(); rows.len()];
        for (ri, &row) in rows.iter().enumerate() {
            let (comp, k) = zero.split_flat(row);
            let mut val = 0.0;
            let mut jrow: SparseRow = Vec::new();
            let push = |jrow: &mut SparseRow, col: usize, v: f64| {
                if with_jac {
                    jrow.push((col, v));
                }
            };
            match comp {
                Component::U1 => {
                    let col = k / mesh.n_micro;
                    let m = k % mesh.n_micro;
                    let node = mesh.node_of_col[col];
                    let region = mesh.node_electrode_region(node).expect("column");
                    let c = &coeffs[Self::region_index(region)];
                    let e_lo = m.saturating_sub(1);
                    let e_hi = m.min(mesh.n_micro - 2);
                    for e in e_lo..=e_hi {
                        let local = m - e;
                        let (r1, j1) = self.micro_element(c, u, u_prev, mu, dtau, col, e)?;
                        val += r1[local];
                        for lc in 0..2 {
                            push(&mut jrow, self.flat_u1(col, e + lc), j1[local][lc]);
                        }
                    }
                    if m == 0 {
                        let r_a = c.r_a.expect("electrode");
                        let reaction = self.reaction_at(
                            c,
                            u.u1[col * mesh.n_micro],
                            u.u2[col],
                            u.u3[node],
                            u.u4[node],
                        )?;
                        val -= r_a * reaction.rate;
                        let cols4 = [
                            self.flat_u1(col, 0),
                            self.flat_u2(col),
                            self.flat_u3(node),
                            self.flat_u4(node),
                        ];
                        for (ci, &colf) in cols4.iter().enumerate() {
                            push(&mut jrow, colf, -r_a * reaction.d[ci]);
                        }
                    }
                }
                Component::U2 => {
                    let col = k;
                    let node = mesh.node_of_col[col];
                    if row == dirichlet {
                        val = u.u2[col];
                        push(&mut jrow, row, 1.0);
                    } else {
                        let region = mesh.node_electrode_region(node).expect("electrode");
                        let c = &coeffs[Self::region_index(region)];
                        for e in self.u2_elements_at(node) {
                            let h = mesh.xi[e + 1] - mesh.xi[e];
                            let local = node - e;
                            let (r2, j2) = self.u2_element(c, u, e, h)?;
                            val += r2[local];
                            for lc in 0..2 {
                                push(&mut jrow, self.flat_u2_node(e + lc), j2[local][lc]);
                            }
                        }
                        let rw = mesh.reaction_weight(node);
                        let reaction = self.reaction_at(
                            c,
                            u.u1[col * mesh.n_micro],
                            u.u2[col],
                            u.u3[node],
                            u.u4[node],
                        )?;
                        val += c.theta * rw * reaction.rate;
                        let cols4 = [
                            self.flat_u1(col, 0),
                            self.flat_u2(col),
                            self.flat_u3(node),
                            self.flat_u4(node),
                        ];
                        for (ci, &colf) in cols4.iter().enumerate() {
                            push(&mut jrow, colf, c.theta * rw * reaction.d[ci]);
                        }
                        if node == mesh.cathode_collector() {
                            val -= mu.c_rate * self.config.eta_w_cat;
                        }
                    }
                }
                Component::U3 | Component::U4 => {
                    let node = k;
                    let e_lo = node.saturating_sub(1);
                    let e_hi = node.min(mesh.n_macro() - 2);
                    for e in e_lo..=e_hi {
                        let region = mesh.element_region(e);
                        let c = &coeffs[Self::region_index(region)];
                        let h = mesh.xi[e + 1] - mesh.xi[e];
                        let local = node - e;
                        if comp == Component::U3 {
                            let (r3, j3) = self.u3_element(c, u, u_prev, mu, dtau, e, h)?;
                            val += r3[local];
                            for lc in 0..2 {
                                push(&mut jrow, self.flat_u3(e + lc), j3[local][lc]);
                            }
                        } else {
                            let (r4, j4_u3, j4_u4) = self.u4_element(c, u, e, h)?;
                            val += r4[local];
                            for lc in 0..2 {
                                push(&mut jrow, self.flat_u3(e + lc), j4_u3[local][lc]);
                                push(&mut jrow, self.flat_u4(e + lc), j4_u4[local][lc]);
                            }
                        }
                    }
                    if let Some(col) = mesh.col_of_node[node] {
                        let region = mesh.node_electrode_region(node).expect("electrode");
                        let c = &coeffs[Self::region_index(region)];
                        let rw = mesh.reaction_weight(node);
                        let eta_n = c.eta_n.expect("electrode");
                        let t = self.config.electrolyte.transference;
                        let factor = if comp == Component::U3 {
                            -eta_n * (1.0 - t) * c.theta * rw
                        } else {
                            -eta_n * c.theta * rw
                        };
                        let reaction = self.reaction_at(
                            c,
                            u.u1[col * mesh.n_micro],
                            u.u2[col],
                            u.u3[node],
                            u.u4[node],
                        )?;
                        val += factor * reaction.rate;
                        let cols4 = [
                            self.flat_u1(col, 0),
                            self.flat_u2(col),
                            self.flat_u3(node),
                            self.flat_u4(node),
                        ];
                        for (ci, &colf) in cols4.iter().enumerate() {
                            push(&mut jrow, colf, factor * reaction.d[ci]);
                        }
                    }
                }
            }
            values[ri] = val;
            if with_jac {
                // merge duplicate column entries
                jrow.sort_unstable_by_key(|&(c, _)| c);
                let mut merged: SparseRow = Vec::with_capacity(jrow.len());
                for (c, v) in jrow {
                    match merged.last_mut() {
                        Some((lc, lv)) if *lc == c => *lv += v,
                        _ => merged.push((c, v)),
                    }
                }
                jrows[ri] = merged;
            }
        }
        Ok((values, with_jac.then_some(jrows)))
    }

    /// Restricted residual values only.
    pub fn restricted_residual(
        &self,
        u: &Fields,
        u_prev: &Fields,
        mu: &ParameterPoint,
        dtau: f64,
        rows: &[usize],
    ) -> Result<Vec<f64>> {
        Ok(self.restricted(u, u_prev, mu, dtau, rows, false)?.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::State;
    use approx::assert_abs_diff_eq;

    fn setup(n: usize, m: usize) -> (PseudoMesh, CellConfig) {
        let cfg = CellConfig::default();
        let mesh = PseudoMesh::build(
            n,
            m,
            [
                cfg.width_fraction(Region::Anode),
                cfg.width_fraction(Region::Separator),
                cfg.width_fraction(Region::Cathode),
            ],
        )
        .unwrap();
        (mesh, cfg)
    }

    #[test]
    fn equilibrium_residual_is_zero_without_current() {
        let (mesh, cfg) = setup(6, 5);
        let asm = Assembler::new(&mesh, &cfg).unwrap();
        let s = State::initial(&mesh, &cfg).unwrap();
        let mu = ParameterPoint::new(0.0, 0.5, 0.5);
        let res = asm.residual(&s.fields, &s.fields, &mu, 1e-2).unwrap();
        for c in Component::ALL {
            for (k, v) in res.component(c).iter().enumerate() {
                assert!(
                    v.abs() < 1e-13,
                    "nonzero residual {v} in {} at {k}",
                    c.label()
                );
            }
        }
    }

    #[test]
    fn collector_term_scales_linearly_with_current() {
        let (mesh, cfg) = setup(5, 4);
        let asm = Assembler::new(&mesh, &cfg).unwrap();
        let s = State::initial(&mesh, &cfg).unwrap();
        let r1 = asm
            .residual(&s.fields, &s.fields, &ParameterPoint::new(1.0, 0.5, 0.5), 1e-2)
            .unwrap();
        let r2 = asm
            .residual(&s.fields, &s.fields, &ParameterPoint::new(2.0, 0.5, 0.5), 1e-2)
            .unwrap();
        let cat = mesh.col_of_node[mesh.cathode_collector()].unwrap();
        // only the collector entry changes, and it doubles
        assert_abs_diff_eq!(r2.u2[cat], 2.0 * r1.u2[cat], epsilon = 1e-14);
        for (k, (a, b)) in r1.u2.iter().zip(r2.u2.iter()).enumerate() {
            if k != cat {
                assert_abs_diff_eq!(a, b, epsilon = 1e-14);
            }
        }
        for c in [Component::U1, Component::U3, Component::U4] {
            for (a, b) in r1.component(c).iter().zip(r2.component(c)) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn restricted_rows_match_full_assembly() {
        let (mesh, cfg) = setup(5, 4);
        let asm = Assembler::new(&mesh, &cfg).unwrap();
        let mut s = State::initial(&mesh, &cfg).unwrap();
        // perturb to a generic evaluable state
        for (i, v) in s.fields.u1.iter_mut().enumerate() {
            *v += 0.01 * ((i % 7) as f64 - 3.0);
        }
        for (i, v) in s.fields.u3.iter_mut().enumerate() {
            *v += 0.002 * ((i % 5) as f64 - 2.0);
        }
        for (i, v) in s.fields.u4.iter_mut().enumerate() {
            *v += 0.05 * ((i % 3) as f64 - 1.0);
        }
        let prev = State::initial(&mesh, &cfg).unwrap();
        let mu = ParameterPoint::default();
        let full = asm.residual(&s.fields, &prev.fields, &mu, 1e-2).unwrap();
        let all_rows: Vec<usize> = (0..full.len()).collect();
        let restricted = asm
            .restricted_residual(&s.fields, &prev.fields, &mu, 1e-2, &all_rows)
            .unwrap();
        for (i, &row) in all_rows.iter().enumerate() {
            assert_abs_diff_eq!(restricted[i], full.flat(row), epsilon = 1e-14);
        }
        // empty set
        assert!(asm
            .restricted_residual(&s.fields, &prev.fields, &mu, 1e-2, &[])
            .unwrap()
            .is_empty());
        // a single collector entry
        let cat_row = asm.flat_u2(mesh.col_of_node[mesh.cathode_collector()].unwrap());
        let one = asm
            .restricted_residual(&s.fields, &prev.fields, &mu, 1e-2, &[cat_row])
            .unwrap();
        assert_abs_diff_eq!(one[0], full.flat(cat_row), epsilon = 1e-14);
    }

    #[test]
    fn closure_size_is_mesh_independent() {
        let (mesh_small, cfg) = setup(10, 6);
        let (mesh_big, _) = setup(40, 6);
        let asm_s = Assembler::new(&mesh_small, &cfg).unwrap();
        let asm_b = Assembler::new(&mesh_big, &cfg).unwrap();
        // a micro surface row, an interior micro row, and a u3 row
        let rows_s = [
            asm_s.flat_u1(1, 0),
            asm_s.flat_u1(1, 3),
            asm_s.flat_u3(2),
        ];
        let rows_b = [
            asm_b.flat_u1(1, 0),
            asm_b.flat_u1(1, 3),
            asm_b.flat_u3(2),
        ];
        let c_s = asm_s.closure_of_rows(&rows_s);
        let c_b = asm_b.closure_of_rows(&rows_b);
        assert_eq!(c_s.len(), c_b.len());
        assert!(c_s.len() <= 8 * rows_s.len());
    }
}
