//! Simulation of a homogenized (pseudo-2D) intercalation battery cell and
//! reduced-basis acceleration of repeated parametrized runs.
//!
//! The full-order model couples radial particle diffusion at every
//! electrode grid point with three macroscopic balance equations across
//! anode, separator, and cathode, discretized by linear finite elements
//! and an implicit Euler scheme, and solved by Newton's method with banded
//! direct linear solves. The reduction pipeline compresses solution and
//! operator snapshots component-wise (POD / incremental hierarchical
//! approximate POD), interpolates the nonlinear residual at greedily
//! selected degrees of freedom, and ships the result as a self-contained
//! artifact for fast online simulations, e.g. cycle-aging studies.

pub mod assembly;
pub mod banded;
pub mod coefficients;
pub mod degradation;
pub mod eim;
pub mod error;
pub mod io;
pub mod materials;
pub mod mesh;
pub mod metrics;
pub mod newton;
pub mod params;
pub mod pod;
pub mod rom;
pub mod simulate;
pub mod state;

pub use error::{Error, Result};
pub use mesh::{Component, PseudoMesh};
pub use params::{
    CellConfig, Electrode, ElectrodeParams, ElectrolyteParams, ParameterPoint, PorousGeometry,
    Region,
};
pub use state::{Fields, State, Termination, Trajectory};
