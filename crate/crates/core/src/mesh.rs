//! The pseudo-2D mesh: a macroscopic 1D grid over anode/separator/cathode
//! with a radial micro grid attached to every electrode macro node.
//!
//! The anode occupies the left subinterval (grounded collector at xi = 0)
//! and the cathode the right one (current-carrying collector at xi = 1).
//! Region boundaries coincide with macro nodes and interface nodes are
//! shared between neighbouring regions. Micro grids use the transformed
//! coordinate `nu_t = 1 - nu`, so the particle surface (`nu = 1`) is the
//! first micro node of every column, collocated with its macro node.

use crate::error::{Error, Result};
use crate::params::Region;

/// Degree-of-freedom layout and node coordinates of the discretization.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoMesh {
    /// Macro nodes per region (regions share their interface nodes).
    pub n_per_region: usize,
    /// Micro nodes per electrode macro node.
    pub n_micro: usize,
    /// Macro node coordinates, ascending in [0, 1].
    pub xi: Vec<f64>,
    /// Transformed micro coordinates `nu_t` in [0, 1].
    pub nu_t: Vec<f64>,
    /// For each macro node, the index of its micro column, if any.
    pub col_of_node: Vec<Option<usize>>,
    /// Macro node of each micro column.
    pub node_of_col: Vec<usize>,
    /// Width fractions the grid was built for (anode, separator, cathode).
    pub eta_x: [f64; 3],
}

impl PseudoMesh {
    /// Build a mesh with `n_per_region` macro nodes in each region and
    /// `n_micro` micro nodes per electrode column, for the given region
    /// width fractions.
    pub fn build(n_per_region: usize, n_micro: usize, eta_x: [f64; 3]) -> Result<Self> {
        if n_per_region < 2 || n_micro < 2 {
            return Err(Error::Mesh(format!(
                "need at least 2 nodes per region and per micro column, got {n_per_region}/{n_micro}"
            )));
        }
        let sum: f64 = eta_x.iter().sum();
        if (sum - 1.0).abs() > 1e-12 || eta_x.iter().any(|&w| w <= 0.0) {
            return Err(Error::Mesh(format!(
                "region width fractions must be positive and sum to one, got {eta_x:?}"
            )));
        }
        let n = n_per_region;
        let n_macro = 3 * n - 2;
        let mut xi = Vec::with_capacity(n_macro);
        let bounds = [0.0, eta_x[0], eta_x[0] + eta_x[1], 1.0];
        for r in 0..3 {
            let (a, b) = (bounds[r], bounds[r + 1]);
            let start = if r == 0 { 0 } else { 1 };
            for k in start..n {
                xi.push(a + (b - a) * k as f64 / (n - 1) as f64);
            }
        }
        debug_assert_eq!(xi.len(), n_macro);

        let nu_t = (0..n_micro)
            .map(|m| m as f64 / (n_micro - 1) as f64)
            .collect();

        let mut col_of_node = vec![None; n_macro];
        let mut node_of_col = Vec::with_capacity(2 * n);
        for (i, slot) in col_of_node.iter_mut().enumerate() {
            let in_anode = i < n;
            let in_cathode = i >= 2 * (n - 1);
            if in_anode || in_cathode {
                *slot = Some(node_of_col.len());
                node_of_col.push(i);
            }
        }

        Ok(Self {
            n_per_region,
            n_micro,
            xi,
            nu_t,
            col_of_node,
            node_of_col,
            eta_x,
        })
    }

    /// Total macro node count.
    pub fn n_macro(&self) -> usize {
        self.xi.len()
    }

    /// Number of micro columns (= electrode macro nodes).
    pub fn n_cols(&self) -> usize {
        self.node_of_col.len()
    }

    /// Component dimensions `(u1, u2, u3, u4)`.
    pub fn component_dims(&self) -> [usize; 4] {
        let cols = self.n_cols();
        [
            cols * self.n_micro,
            cols,
            self.n_macro(),
            self.n_macro(),
        ]
    }

    /// Total number of active degrees of freedom. The micro field and the
    /// solid potential carry no degrees of freedom in the separator.
    pub fn total_dofs(&self) -> usize {
        self.component_dims().iter().sum()
    }

    /// Region of macro element `e` (between nodes `e` and `e+1`).
    pub fn element_region(&self, e: usize) -> Region {
        let n = self.n_per_region;
        if e < n - 1 {
            Region::Anode
        } else if e < 2 * (n - 1) {
            Region::Separator
        } else {
            Region::Cathode
        }
    }

    /// Region a macro node belongs to for nodal (reaction) terms; interface
    /// nodes report the electrode they belong to.
    pub fn node_electrode_region(&self, i: usize) -> Option<Region> {
        let n = self.n_per_region;
        if i < n {
            Some(Region::Anode)
        } else if i >= 2 * (n - 1) {
            Some(Region::Cathode)
        } else {
            None
        }
    }

    /// Macro node index of the grounded anode collector.
    pub fn anode_collector(&self) -> usize {
        0
    }

    /// Macro node index of the cathode collector.
    pub fn cathode_collector(&self) -> usize {
        self.n_macro() - 1
    }

    /// Macro node range of the cathode (inclusive), interface node first.
    pub fn cathode_nodes(&self) -> std::ops::RangeInclusive<usize> {
        2 * (self.n_per_region - 1)..=self.n_macro() - 1
    }

    /// Macro node range of the anode (inclusive).
    pub fn anode_nodes(&self) -> std::ops::RangeInclusive<usize> {
        0..=self.n_per_region - 1
    }

    /// Lumped reaction weight of macro node `i` restricted to its electrode
    /// region: the integral of the nodal hat function over that region.
    pub fn reaction_weight(&self, i: usize) -> f64 {
        let Some(region) = self.node_electrode_region(i) else {
            return 0.0;
        };
        let n = self.n_per_region;
        let h = match region {
            Region::Anode => self.eta_x[0] / (n - 1) as f64,
            Region::Cathode => self.eta_x[2] / (n - 1) as f64,
            Region::Separator => unreachable!(),
        };
        let boundary = match region {
            Region::Anode => i == 0 || i == n - 1,
            Region::Cathode => i == 2 * (n - 1) || i == self.n_macro() - 1,
            Region::Separator => unreachable!(),
        };
        if boundary {
            h / 2.0
        } else {
            h
        }
    }

    /// Micro grid spacing.
    pub fn h_micro(&self) -> f64 {
        1.0 / (self.n_micro - 1) as f64
    }

    /// A stable signature of the discretization, used to match reduced
    /// artifacts to meshes.
    pub fn signature(&self) -> u64 {
        let text = format!(
            "mesh v1 n={} m={} eta=({:.17e},{:.17e},{:.17e})",
            self.n_per_region, self.n_micro, self.eta_x[0], self.eta_x[1], self.eta_x[2]
        );
        crate::params::fnv1a(text.as_bytes())
    }
}

/// Global flat indexing of the four components, concatenated in component
/// order u1|u2|u3|u4. Interpolation point indices and restricted-assembly
/// index sets use this numbering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    U1,
    U2,
    U3,
    U4,
}

impl Component {
    pub const ALL: [Component; 4] = [
        Component::U1,
        Component::U2,
        Component::U3,
        Component::U4,
    ];

    pub fn index(self) -> usize {
        match self {
            Component::U1 => 0,
            Component::U2 => 1,
            Component::U3 => 2,
            Component::U4 => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Component::U1 => "u1",
            Component::U2 => "u2",
            Component::U3 => "u3",
            Component::U4 => "u4",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn thirds() -> [f64; 3] {
        [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]
    }

    #[test]
    fn dof_counts_follow_the_layout_formula() {
        // active-DOF layout: u1 on electrode columns, u2 on electrode
        // nodes, u3/u4 on the full macro grid with shared interface nodes
        for (n, m) in [(2usize, 2usize), (20, 10), (100, 100)] {
            let mesh = PseudoMesh::build(n, m, thirds()).unwrap();
            let n_macro = 3 * n - 2;
            let n_el = 2 * n;
            assert_eq!(mesh.n_macro(), n_macro);
            assert_eq!(mesh.n_cols(), n_el);
            assert_eq!(mesh.total_dofs(), n_el * m + n_el + 2 * n_macro);
        }
        let desk = PseudoMesh::build(20, 10, thirds()).unwrap();
        assert_eq!(desk.total_dofs(), 556);
    }

    #[test]
    fn minimal_mesh_and_rejects() {
        let mesh = PseudoMesh::build(2, 2, thirds()).unwrap();
        assert_eq!(mesh.n_macro(), 4);
        assert_eq!(mesh.total_dofs(), 4 * 2 + 4 + 2 * 4);
        assert!(PseudoMesh::build(1, 2, thirds()).is_err());
        assert!(PseudoMesh::build(2, 1, thirds()).is_err());
        assert!(PseudoMesh::build(3, 3, [0.5, 0.6, 0.2]).is_err());
    }

    #[test]
    fn interface_nodes_shared_and_regions_consistent() {
        let n = 5;
        let mesh = PseudoMesh::build(n, 3, thirds()).unwrap();
        assert_eq!(mesh.n_macro(), 13);
        assert_abs_diff_eq!(mesh.xi[n - 1], 1.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(mesh.xi[2 * (n - 1)], 2.0 / 3.0, epsilon = 1e-14);
        assert_eq!(mesh.element_region(0), Region::Anode);
        assert_eq!(mesh.element_region(n - 1), Region::Separator);
        assert_eq!(mesh.element_region(2 * (n - 1)), Region::Cathode);
        assert_eq!(mesh.node_electrode_region(n - 1), Some(Region::Anode));
        assert_eq!(mesh.node_electrode_region(n), None);
        assert_eq!(
            mesh.node_electrode_region(2 * (n - 1)),
            Some(Region::Cathode)
        );
        // columns attached to electrode nodes only
        assert_eq!(mesh.n_cols(), 2 * n);
        assert!(mesh.col_of_node[n].is_none());
        assert!(mesh.col_of_node[0].is_some());
    }

    #[test]
    fn reaction_weights_integrate_hats_over_regions() {
        let mesh = PseudoMesh::build(4, 3, thirds()).unwrap();
        let h = (1.0 / 3.0) / 3.0;
        assert_abs_diff_eq!(mesh.reaction_weight(0), h / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(mesh.reaction_weight(1), h, epsilon = 1e-15);
        assert_abs_diff_eq!(mesh.reaction_weight(3), h / 2.0, epsilon = 1e-15);
        assert_eq!(mesh.reaction_weight(4), 0.0);
        // weights sum to each electrode's width fraction
        let sum_an: f64 = mesh.anode_nodes().map(|i| mesh.reaction_weight(i)).sum();
        let sum_cat: f64 = mesh.cathode_nodes().map(|i| mesh.reaction_weight(i)).sum();
        assert_abs_diff_eq!(sum_an, 1.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(sum_cat, 1.0 / 3.0, epsilon = 1e-14);
    }
}
