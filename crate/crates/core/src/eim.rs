//! Empirical operator interpolation: greedy point selection over a
//! collateral basis and the point-value interpolation solve.
//!
//! Points are selected per component by the classic greedy rule: the first
//! point maximizes the magnitude of the first mode; every further point
//! maximizes the magnitude of the interpolation residual of the next mode
//! given the points chosen so far. The point-evaluation matrices are
//! factored once and reused for every online coefficient solve.

use crate::error::{Error, Result};
use crate::pod::BasisMatrix;
use nalgebra::{DMatrix, DVector, LU};

/// Collateral bases of the four residual components.
#[derive(Debug, Clone, PartialEq)]
pub struct CollateralBasis {
    pub bases: [BasisMatrix; 4],
}

impl CollateralBasis {
    pub fn mode_counts(&self) -> [usize; 4] {
        [
            self.bases[0].rank(),
            self.bases[1].rank(),
            self.bases[2].rank(),
            self.bases[3].rank(),
        ]
    }

    pub fn total_modes(&self) -> usize {
        self.mode_counts().iter().sum()
    }
}

/// Greedily selected interpolation points of one component together with
/// the factored point-evaluation system.
pub struct ComponentInterpolation {
    /// Component-local degree-of-freedom indices, in selection order.
    pub points: Vec<usize>,
    /// The point-evaluation matrix `G[points, :]`.
    pub matrix: DMatrix<f64>,
    pub lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    /// 2-norm condition number of the point-evaluation matrix.
    pub condition: f64,
}

impl ComponentInterpolation {
    /// Solve the point system for the interpolation coefficients.
    pub fn coefficients(&self, values_at_points: &[f64]) -> DVector<f64> {
        let mut rhs = DVector::from_column_slice(values_at_points);
        assert!(self.lu.solve_mut(&mut rhs), "factored system is regular");
        rhs
    }

    /// Rebuild the interpolation data from a basis and known points (used
    /// when loading persisted artifacts).
    pub fn from_points(basis: &BasisMatrix, points: &[usize], component: usize) -> Result<Self> {
        if points.len() != basis.rank() {
            return Err(Error::Dimension(format!(
                "{} interpolation points for a collateral basis of rank {}",
                points.len(),
                basis.rank()
            )));
        }
        let matrix = select_rows(&basis.modes, points, basis.rank());
        let svd = matrix.clone().svd(false, false);
        let smin = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
        let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        let lu = LU::new(matrix.clone());
        if lu.determinant() == 0.0 {
            return Err(Error::SingularInterpolation {
                component,
                mode: basis.rank(),
            });
        }
        Ok(Self {
            points: points.to_vec(),
            matrix,
            lu,
            condition,
        })
    }
}

/// Interpolation data of all four components.
pub struct InterpolationPoints {
    pub components: [Option<ComponentInterpolation>; 4],
}

impl InterpolationPoints {
    pub fn point_counts(&self) -> [usize; 4] {
        let mut out = [0; 4];
        for (k, c) in self.components.iter().enumerate() {
            out[k] = c.as_ref().map_or(0, |c| c.points.len());
        }
        out
    }

    pub fn max_condition(&self) -> f64 {
        self.components
            .iter()
            .flatten()
            .map(|c| c.condition)
            .fold(0.0, f64::max)
    }
}

/// Greedy interpolation points for every component of a collateral basis.
/// Components without modes are skipped.
pub fn greedy_points(collateral: &CollateralBasis) -> Result<InterpolationPoints> {
    let mut out: [Option<ComponentInterpolation>; 4] = [None, None, None, None];
    for (ci, basis) in collateral.bases.iter().enumerate() {
        if basis.rank() == 0 {
            continue;
        }
        out[ci] = Some(greedy_points_single(basis, ci)?);
    }
    Ok(InterpolationPoints { components: out })
}

fn argmax_abs(v: &DVector<f64>) -> (usize, f64) {
    let mut best = 0;
    let mut best_val = 0.0f64;
    for (i, &x) in v.iter().enumerate() {
        if x.abs() > best_val {
            best_val = x.abs();
            best = i;
        }
    }
    (best, best_val)
}

fn greedy_points_single(basis: &BasisMatrix, component: usize) -> Result<ComponentInterpolation> {
    let modes = &basis.modes;
    let m = modes.ncols();
    let mut points: Vec<usize> = Vec::with_capacity(m);

    for q in 0..m {
        let gq = modes.column(q).into_owned();
        let residual = if q == 0 {
            gq
        } else {
            // interpolate mode q with the current points and subtract
            let sub = select_rows(modes, &points, q);
            let rhs = DVector::from_iterator(q, points.iter().map(|&p| modes[(p, q)]));
            let lu = LU::new(sub);
            let mut c = rhs;
            if !lu.solve_mut(&mut c) {
                return Err(Error::SingularInterpolation { component, mode: q });
            }
            &gq - modes.columns(0, q) * c
        };
        let (p, val) = argmax_abs(&residual);
        if val == 0.0 {
            return Err(Error::SingularInterpolation { component, mode: q });
        }
        points.push(p);
    }

    let matrix = select_rows(modes, &points, m);
    let svd = matrix.clone().svd(false, false);
    let smin = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let lu = LU::new(matrix.clone());
    if lu.determinant() == 0.0 {
        return Err(Error::SingularInterpolation { component, mode: m });
    }
    Ok(ComponentInterpolation {
        points,
        matrix,
        lu,
        condition,
    })
}

fn select_rows(modes: &DMatrix<f64>, rows: &[usize], ncols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), ncols, |i, j| modes[(rows[i], j)])
}
