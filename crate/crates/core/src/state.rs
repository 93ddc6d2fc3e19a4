//! Discrete states: the four solution components, trajectories, and the
//! derived scalar observables (state of charge, cell voltage).

use crate::error::{Error, Result};
use crate::materials::{decode_g, encode_y};
use crate::mesh::{Component, PseudoMesh};
use crate::params::{CellConfig, Electrode, ParameterPoint, Region, THERMAL_VOLTAGE};

/// One set of values for the four components. Used for states, residuals,
/// and Newton updates alike.
#[derive(Debug, Clone, PartialEq)]
pub struct Fields {
    /// Transformed micro concentration `g = ln(y/(1-y))`, column-major:
    /// `u1[col * n_micro + m]` with `m = 0` at the particle surface.
    pub u1: Vec<f64>,
    /// Solid potential at electrode macro nodes.
    pub u2: Vec<f64>,
    /// Electrolyte mole fraction at macro nodes.
    pub u3: Vec<f64>,
    /// Electrolyte potential at macro nodes.
    pub u4: Vec<f64>,
}

impl Fields {
    pub fn zeros(mesh: &PseudoMesh) -> Self {
        let [d1, d2, d3, d4] = mesh.component_dims();
        Self {
            u1: vec![0.0; d1],
            u2: vec![0.0; d2],
            u3: vec![0.0; d3],
            u4: vec![0.0; d4],
        }
    }

    pub fn component(&self, c: Component) -> &[f64] {
        match c {
            Component::U1 => &self.u1,
            Component::U2 => &self.u2,
            Component::U3 => &self.u3,
            Component::U4 => &self.u4,
        }
    }

    pub fn component_mut(&mut self, c: Component) -> &mut Vec<f64> {
        match c {
            Component::U1 => &mut self.u1,
            Component::U2 => &mut self.u2,
            Component::U3 => &mut self.u3,
            Component::U4 => &mut self.u4,
        }
    }

    pub fn len(&self) -> usize {
        self.u1.len() + self.u2.len() + self.u3.len() + self.u4.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Value at a flat index in the concatenated u1|u2|u3|u4 numbering.
    pub fn flat(&self, idx: usize) -> f64 {
        let (c, k) = self.split_flat(idx);
        self.component(c)[k]
    }

    /// Decompose a flat index into (component, local index).
    pub fn split_flat(&self, idx: usize) -> (Component, usize) {
        let mut k = idx;
        for c in Component::ALL {
            let n = self.component(c).len();
            if k < n {
                return (c, k);
            }
            k -= n;
        }
        panic!("flat index {idx} out of range {}", self.len());
    }

    /// Offset of a component in the flat numbering.
    pub fn flat_offset(&self, c: Component) -> usize {
        let mut off = 0;
        for cc in Component::ALL {
            if cc == c {
                return off;
            }
            off += self.component(cc).len();
        }
        unreachable!()
    }

    pub fn axpy(&mut self, alpha: f64, other: &Fields) {
        for c in Component::ALL {
            let dst = self.component_mut(c);
            let src = other.component(c);
            for (d, s) in dst.iter_mut().zip(src) {
                *d += alpha * s;
            }
        }
    }

    pub fn norm(&self) -> f64 {
        let mut s = 0.0;
        for c in Component::ALL {
            for v in self.component(c) {
                s += v * v;
            }
        }
        s.sqrt()
    }
}

/// One time slice of the solution.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub fields: Fields,
    pub time: f64,
}

impl State {
    /// The equilibrium initial state: uniform filling per electrode,
    /// uniform electrolyte mole fraction, potentials constructed so the
    /// surface affinity vanishes everywhere.
    pub fn initial(mesh: &PseudoMesh, config: &CellConfig) -> Result<State> {
        config.validate()?;
        let y_e0 = config.y_e_initial();
        if !(y_e0 > 0.0 && y_e0 < 0.5) {
            return Err(Error::Config(format!(
                "initial electrolyte mole fraction {y_e0} outside (0, 0.5)"
            )));
        }
        let mut f = Fields::zeros(mesh);
        for (col, &node) in mesh.node_of_col.iter().enumerate() {
            let electrode = match mesh.node_electrode_region(node) {
                Some(Region::Anode) => Electrode::Anode,
                Some(Region::Cathode) => Electrode::Cathode,
                _ => unreachable!("columns exist at electrode nodes only"),
            };
            let g0 = encode_y(config.electrode(electrode).y_initial);
            for m in 0..mesh.n_micro {
                f.u1[col * mesh.n_micro + m] = g0;
            }
        }
        let phi_s_cat = config.phi_s_cathode_initial()?;
        for (col, &node) in mesh.node_of_col.iter().enumerate() {
            f.u2[col] = match mesh.node_electrode_region(node) {
                Some(Region::Anode) => 0.0,
                Some(Region::Cathode) => phi_s_cat,
                _ => unreachable!(),
            };
        }
        let phi_e0 = config.phi_e_initial()?;
        for i in 0..mesh.n_macro() {
            f.u3[i] = y_e0;
            f.u4[i] = phi_e0;
        }
        Ok(State {
            fields: f,
            time: 0.0,
        })
    }

    /// Micro concentration at the particle surface of a column.
    pub fn y_surface(&self, mesh: &PseudoMesh, col: usize) -> f64 {
        decode_g(self.fields.u1[col * mesh.n_micro])
    }

    /// Dimensionless cell voltage: solid potential at the cathode collector
    /// minus the (grounded) anode collector value.
    pub fn cell_voltage_dimless(&self, mesh: &PseudoMesh) -> f64 {
        let cat = mesh.col_of_node[mesh.cathode_collector()].expect("collector has a column");
        let an = mesh.col_of_node[mesh.anode_collector()].expect("collector has a column");
        self.fields.u2[cat] - self.fields.u2[an]
    }

    /// Dimensional cell voltage in volts: thermal-voltage scaling plus the
    /// half-cell energy offset.
    pub fn cell_voltage_volts(&self, mesh: &PseudoMesh, config: &CellConfig) -> f64 {
        THERMAL_VOLTAGE * self.cell_voltage_dimless(mesh) + config.voltage_offset()
    }

    /// Minimum solid potential over the cathode macro nodes; the quantity
    /// tested against the termination voltage.
    pub fn min_cathode_phi_s(&self, mesh: &PseudoMesh) -> f64 {
        mesh.cathode_nodes()
            .map(|i| self.fields.u2[mesh.col_of_node[i].expect("cathode node has column")])
            .fold(f64::INFINITY, f64::min)
    }

    /// Electrode state of charge: the radially weighted mean filling
    /// `(1/eta_x) * int_xi 3 * int y nu^2 dnu dxi`, evaluated with the same
    /// Gauss quadrature the assembly uses so that the discrete capacity
    /// balance telescopes exactly.
    pub fn state_of_charge(&self, mesh: &PseudoMesh, electrode: Electrode) -> f64 {
        let nodes: Vec<usize> = match electrode {
            Electrode::Anode => mesh.anode_nodes().collect(),
            Electrode::Cathode => mesh.cathode_nodes().collect(),
        };
        let eta = match electrode {
            Electrode::Anode => mesh.eta_x[0],
            Electrode::Cathode => mesh.eta_x[2],
        };
        let mut total = 0.0;
        for &i in &nodes {
            let col = mesh.col_of_node[i].expect("electrode node has column");
            total += mesh.reaction_weight(i) * micro_mean_filling(self, mesh, col);
        }
        total / eta
    }
}

/// Radially weighted mean filling `3 * int_0^1 y(nu) nu^2 dnu` of one micro
/// column, using two-point Gauss quadrature per element on the transformed
/// grid (`nu = 1 - nu_t`).
pub fn micro_mean_filling(state: &State, mesh: &PseudoMesh, col: usize) -> f64 {
    const GP: [f64; 2] = [0.21132486540518713, 0.7886751345948129];
    let m = mesh.n_micro;
    let h = mesh.h_micro();
    let g = &state.fields.u1[col * m..(col + 1) * m];
    let mut acc = 0.0;
    for e in 0..m - 1 {
        for &xq in &GP {
            let nu_t = mesh.nu_t[e] + xq * h;
            let nu = 1.0 - nu_t;
            let gq = g[e] * (1.0 - xq) + g[e + 1] * xq;
            acc += 0.5 * h * 3.0 * nu * nu * decode_g(gq);
        }
    }
    acc
}

/// Why a trajectory ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Termination {
    /// The cathode potential dropped to the termination voltage.
    pub reached_e_min: bool,
    /// Last simulated time.
    pub final_time: f64,
}

/// Time-ordered sequence of states of one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub termination: Termination,
    pub parameter: ParameterPoint,
    /// Time step the trajectory was computed with.
    pub dtau: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Check strictly increasing, uniformly spaced times.
    pub fn validate_time_grid(&self) -> Result<()> {
        for w in self.states.windows(2) {
            let dt = w[1].time - w[0].time;
            if dt <= 0.0 || (dt - self.dtau).abs() > 1e-12 {
                return Err(Error::Dimension(format!(
                    "non-uniform time grid: step {dt} vs dtau {}",
                    self.dtau
                )));
            }
        }
        Ok(())
    }

    /// Cathode state of charge at the cutoff voltage. The crossing of the
    /// minimum cathode potential through `e_min` is located by linear
    /// interpolation between the last two states, which removes the
    /// time-step quantization of the terminal capacity. Falls back to the
    /// final state when the run ended without reaching the cutoff.
    pub fn capacity_at_cutoff(&self, mesh: &PseudoMesh, e_min: f64) -> f64 {
        let last = self.states.last().expect("nonempty trajectory");
        let soc_last = last.state_of_charge(mesh, Electrode::Cathode);
        if !self.termination.reached_e_min || self.states.len() < 2 {
            return soc_last;
        }
        let before = &self.states[self.states.len() - 2];
        let v0 = before.min_cathode_phi_s(mesh);
        let v1 = last.min_cathode_phi_s(mesh);
        if v0 <= e_min || v1 >= v0 {
            return soc_last;
        }
        let frac = ((v0 - e_min) / (v0 - v1)).clamp(0.0, 1.0);
        let soc_before = before.state_of_charge(mesh, Electrode::Cathode);
        soc_before + frac * (soc_last - soc_before)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials::surface_affinity;
    use approx::assert_abs_diff_eq;

    fn mesh() -> PseudoMesh {
        PseudoMesh::build(5, 4, [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]).unwrap()
    }

    #[test]
    fn initial_state_values() {
        let mesh = mesh();
        let cfg = CellConfig::default();
        let s = State::initial(&mesh, &cfg).unwrap();
        assert_abs_diff_eq!(s.fields.u3[0], 0.2557347, epsilon = 1e-6);
        assert_abs_diff_eq!(
            s.cell_voltage_dimless(&mesh),
            11.1502397,
            epsilon = 1e-6
        );
        // anode grounded
        let an_col = mesh.col_of_node[0].unwrap();
        assert_eq!(s.fields.u2[an_col], 0.0);
    }

    #[test]
    fn initial_state_has_zero_affinity_everywhere() {
        let mesh = mesh();
        let cfg = CellConfig::default();
        let s = State::initial(&mesh, &cfg).unwrap();
        for (col, &node) in mesh.node_of_col.iter().enumerate() {
            let (gamma, _) = match mesh.node_electrode_region(node).unwrap() {
                Region::Anode => (cfg.anode.enthalpy_gamma, ()),
                Region::Cathode => (cfg.cathode.enthalpy_gamma, ()),
                Region::Separator => unreachable!(),
            };
            let lambda = surface_affinity(
                s.fields.u2[col],
                s.fields.u4[node],
                s.y_surface(&mesh, col),
                s.fields.u3[node],
                gamma,
                cfg.electrolyte.solvation_number,
            )
            .unwrap();
            assert!(lambda.abs() < 1e-12, "affinity {lambda} at node {node}");
        }
    }

    #[test]
    fn rejects_config_with_invalid_initial_mole_fraction() {
        let mesh = mesh();
        let mut cfg = CellConfig::default();
        cfg.electrolyte.n_solvent_ref = 9.5; // y_E0 < 0
        assert!(State::initial(&mesh, &cfg).is_err());
    }

    #[test]
    fn soc_of_uniform_field_is_the_constant() {
        let mesh = mesh();
        let cfg = CellConfig::default();
        let s = State::initial(&mesh, &cfg).unwrap();
        assert_abs_diff_eq!(
            s.state_of_charge(&mesh, Electrode::Cathode),
            0.01,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            s.state_of_charge(&mesh, Electrode::Anode),
            0.99,
            epsilon = 1e-12
        );
    }

    #[test]
    fn micro_mean_of_linear_profile_matches_integral() {
        // y(nu) = a + b*nu encoded through the transform; compare against
        // the closed form 3*int (a + b nu) nu^2 dnu = a + 3b/4.
        let mesh = PseudoMesh::build(2, 64, [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]).unwrap();
        let cfg = CellConfig::default();
        let mut s = State::initial(&mesh, &cfg).unwrap();
        let (a, b) = (0.2, 0.3);
        for m in 0..mesh.n_micro {
            let nu = 1.0 - mesh.nu_t[m];
            s.fields.u1[m] = encode_y(a + b * nu);
        }
        let got = micro_mean_filling(&s, &mesh, 0);
        // the quadrature acts on the logistic interpolant, so agreement is
        // to the interpolation error of the fine micro grid
        assert_abs_diff_eq!(got, a + 0.75 * b, epsilon = 1e-5);
    }

    #[test]
    fn flat_indexing_round_trip() {
        let mesh = mesh();
        let f = Fields::zeros(&mesh);
        let dims = mesh.component_dims();
        assert_eq!(f.len(), dims.iter().sum::<usize>());
        let (c, k) = f.split_flat(dims[0]);
        assert_eq!((c, k), (Component::U2, 0));
        let (c, k) = f.split_flat(dims[0] + dims[1] + dims[2] + 1);
        assert_eq!((c, k), (Component::U4, 1));
        assert_eq!(f.flat_offset(Component::U3), dims[0] + dims[1]);
    }
}
