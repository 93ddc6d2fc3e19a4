//! Snapshot compression: POD with energy-based truncation and the
//! incremental hierarchical approximate POD.
//!
//! POD is computed as a Householder QR of the snapshot matrix followed by
//! an SVD of the small triangular factor, which keeps the returned modes
//! orthonormal to machine precision regardless of snapshot conditioning.
//! Truncation keeps the smallest rank `r` with
//! `sqrt(sum_{k>r} s_k^2) <= eps * sqrt(sum_k s_k^2)`.
//!
//! The incremental HAPOD processes an ordered chunk stream; each non-root
//! step compresses `[previous modes * singular values, next chunk]` at a
//! local absolute tolerance `sqrt(1 - omega^2) * eps * ||chunk||_F`, and
//! the root step uses `omega * eps * sqrt(total energy)`. Squared local
//! truncation errors add, so the final basis satisfies the relative
//! l2-energy bound `eps` for the whole concatenated snapshot set.

use crate::error::{Error, Result};
use crate::mesh::Component;
use nalgebra::{DMatrix, DVector};

/// Where a snapshot column came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Provenance {
    pub parameter: crate::params::ParameterPoint,
    pub time_index: usize,
    pub newton_stage: usize,
}

/// Snapshot columns of one solution component.
#[derive(Debug, Clone)]
pub struct SnapshotSet {
    pub component: Component,
    /// Column dimension.
    pub dim: usize,
    /// Column-major snapshot data, `dim * columns.len()` entries.
    pub data: Vec<f64>,
    pub provenance: Vec<Provenance>,
}

impl SnapshotSet {
    pub fn new(component: Component, dim: usize) -> Self {
        Self {
            component,
            dim,
            data: Vec::new(),
            provenance: Vec::new(),
        }
    }

    pub fn n_columns(&self) -> usize {
        self.provenance.len()
    }

    pub fn push_column(&mut self, column: &[f64], provenance: Provenance) -> Result<()> {
        if column.len() != self.dim {
            return Err(Error::Dimension(format!(
                "snapshot column of length {} pushed into set of dimension {}",
                column.len(),
                self.dim
            )));
        }
        self.data.extend_from_slice(column);
        self.provenance.push(provenance);
        Ok(())
    }

    pub fn column(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn as_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.dim, self.n_columns(), &self.data)
    }

    /// Squared Frobenius norm of all columns.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

/// Orthonormal modes with their singular values, nonincreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix {
    /// dim x rank, column-major.
    pub modes: DMatrix<f64>,
    pub singular_values: Vec<f64>,
}

impl BasisMatrix {
    pub fn empty(dim: usize) -> Self {
        Self {
            modes: DMatrix::zeros(dim, 0),
            singular_values: Vec::new(),
        }
    }

    pub fn rank(&self) -> usize {
        self.modes.ncols()
    }

    pub fn dim(&self) -> usize {
        self.modes.nrows()
    }

    /// Keep only the leading `rank` modes.
    pub fn truncated(&self, rank: usize) -> Self {
        let r = rank.min(self.rank());
        Self {
            modes: self.modes.columns(0, r).into_owned(),
            singular_values: self.singular_values[..r].to_vec(),
        }
    }

    /// Max deviation of `modes^T modes` from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let gram = self.modes.transpose() * &self.modes;
        let mut defect: f64 = 0.0;
        for i in 0..gram.nrows() {
            for j in 0..gram.ncols() {
                let expect = if i == j { 1.0 } else { 0.0 };
                defect = defect.max((gram[(i, j)] - expect).abs());
            }
        }
        defect
    }

    /// Project a vector onto the span and return the coefficient vector.
    pub fn project(&self, v: &[f64]) -> DVector<f64> {
        self.modes.transpose() * DVector::from_column_slice(v)
    }

    /// l2 norm of the projection residual of `v`.
    pub fn projection_error(&self, v: &[f64]) -> f64 {
        let x = DVector::from_column_slice(v);
        let c = self.modes.transpose() * &x;
        (&x - &self.modes * c).norm()
    }
}

/// Truncation rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truncation {
    /// Relative l2-energy tolerance.
    Relative(f64),
    /// Absolute l2 tolerance on the truncated tail.
    Absolute(f64),
    /// Fixed mode count (capped at the numerical rank).
    Rank(usize),
}

/// POD of a snapshot matrix under the given truncation rule. The returned
/// modes carry a fixed sign convention (first entry of largest magnitude
/// positive, ties to the lower index) so identical inputs give identical
/// bases.
pub fn pod_matrix(snapshots: &DMatrix<f64>, rule: Truncation) -> Result<BasisMatrix> {
    if snapshots.ncols() == 0 {
        return Err(Error::EmptySnapshots("pod"));
    }
    let (n, k) = (snapshots.nrows(), snapshots.ncols());

    // Householder QR, then SVD of the k x k triangular factor
    let qr = snapshots.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let svd = r.svd(true, false);
    let u_small = svd.u.as_ref().expect("u requested");
    let mut sigma: Vec<f64> = svd.singular_values.iter().copied().collect();
    // nalgebra returns values sorted in nonincreasing order already; make
    // that an invariant here.
    debug_assert!(sigma.windows(2).all(|w| w[0] >= w[1]));

    let total_sq: f64 = sigma.iter().map(|s| s * s).sum();
    let budget_sq = match rule {
        Truncation::Relative(eps) => {
            if eps < 0.0 {
                return Err(Error::Config(format!("negative POD tolerance {eps}")));
            }
            eps * eps * total_sq
        }
        Truncation::Absolute(e) => e * e,
        Truncation::Rank(_) => 0.0,
    };
    let max_rank = match rule {
        Truncation::Rank(r) => r.min(k.min(n)),
        _ => k.min(n),
    };
    // smallest rank whose truncated tail fits the budget
    let mut rank = max_rank;
    if !matches!(rule, Truncation::Rank(_)) {
        let mut tail = 0.0;
        rank = sigma.len();
        for r in (0..=sigma.len()).rev() {
            if r < sigma.len() {
                tail += sigma[r] * sigma[r];
            }
            if tail <= budget_sq {
                rank = r;
            } else {
                break;
            }
        }
    }
    // never keep numerically-zero directions
    let floor = sigma.first().map_or(0.0, |s| s * 1e-14);
    while rank > 0 && sigma[rank - 1] <= floor {
        rank -= 1;
    }
    sigma.truncate(rank);

    let mut modes = &q * u_small.columns(0, rank).into_owned();
    // sign convention: first nonzero entry of each mode positive
    for mut col in modes.column_iter_mut() {
        if let Some(&pivot) = col.iter().find(|v| **v != 0.0) {
            if pivot < 0.0 {
                col.neg_mut();
            }
        }
    }
    Ok(BasisMatrix {
        modes,
        singular_values: sigma,
    })
}

/// POD of a [`SnapshotSet`] at a relative l2-energy tolerance.
pub fn pod(snapshots: &SnapshotSet, eps: f64) -> Result<BasisMatrix> {
    if snapshots.n_columns() == 0 {
        return Err(Error::EmptySnapshots("pod"));
    }
    pod_matrix(&snapshots.as_matrix(), Truncation::Relative(eps))
}

/// Incremental HAPOD over an ordered chunk stream. `omega` balances how
/// much of the error budget the final compression may spend.
pub struct IncrementalHapod {
    eps: f64,
    omega: f64,
    dim: Option<usize>,
    /// Modes scaled by singular values, carried between steps.
    carried: Option<DMatrix<f64>>,
    total_energy: f64,
    chunks_seen: usize,
}

impl IncrementalHapod {
    pub fn new(eps: f64, omega: f64) -> Result<Self> {
        if !(0.0 < omega && omega < 1.0) {
            return Err(Error::Config(format!(
                "HAPOD balance must lie in (0,1), got {omega}"
            )));
        }
        if eps < 0.0 {
            return Err(Error::Config(format!("negative HAPOD tolerance {eps}")));
        }
        Ok(Self {
            eps,
            omega,
            dim: None,
            carried: None,
            total_energy: 0.0,
            chunks_seen: 0,
        })
    }

    /// Feed the next chunk (columns of one leaf).
    pub fn push_chunk(&mut self, chunk: &DMatrix<f64>) -> Result<()> {
        if chunk.ncols() == 0 {
            return Ok(());
        }
        match self.dim {
            None => self.dim = Some(chunk.nrows()),
            Some(d) if d == chunk.nrows() => {}
            Some(d) => {
                return Err(Error::Dimension(format!(
                    "HAPOD chunk dimension {} does not match {}",
                    chunk.nrows(),
                    d
                )))
            }
        }
        let chunk_energy: f64 = chunk.iter().map(|v| v * v).sum();
        self.total_energy += chunk_energy;
        self.chunks_seen += 1;

        let input = match self.carried.take() {
            None => chunk.clone(),
            Some(carried) => {
                let mut joined = DMatrix::zeros(chunk.nrows(), carried.ncols() + chunk.ncols());
                joined.columns_mut(0, carried.ncols()).copy_from(&carried);
                joined
                    .columns_mut(carried.ncols(), chunk.ncols())
                    .copy_from(chunk);
                joined
            }
        };
        let local_tol =
            (1.0 - self.omega * self.omega).sqrt() * self.eps * chunk_energy.sqrt();
        let basis = pod_matrix(&input, Truncation::Absolute(local_tol))?;
        self.carried = Some(scale_by_singular_values(&basis));
        Ok(())
    }

    /// Final compression at the root tolerance.
    pub fn finish(self) -> Result<BasisMatrix> {
        let carried = self.carried.ok_or(Error::EmptySnapshots("hapod"))?;
        let root_tol = self.omega * self.eps * self.total_energy.sqrt();
        pod_matrix(&carried, Truncation::Absolute(root_tol))
    }
}

fn scale_by_singular_values(basis: &BasisMatrix) -> DMatrix<f64> {
    let mut scaled = basis.modes.clone();
    for (k, mut col) in scaled.column_iter_mut().enumerate() {
        col *= basis.singular_values[k];
    }
    scaled
}

/// One-call incremental HAPOD over explicit chunks.
pub fn hapod_incremental(
    chunks: &[DMatrix<f64>],
    eps: f64,
    omega: f64,
) -> Result<BasisMatrix> {
    let mut h = IncrementalHapod::new(eps, omega)?;
    let mut any = false;
    for c in chunks {
        any = true;
        h.push_chunk(c)?;
    }
    if !any {
        return Err(Error::EmptySnapshots("hapod"));
    }
    h.finish()
}

/// Component-wise solution bases from a set of trajectories; each
/// trajectory is one HAPOD chunk per component.
pub fn componentwise_basis(
    trajectories: &[&crate::state::Trajectory],
    dims: [usize; 4],
    eps: f64,
    omega: f64,
) -> Result<[BasisMatrix; 4]> {
    if trajectories.is_empty() {
        return Err(Error::EmptySnapshots("componentwise_basis"));
    }
    let mut out = Vec::with_capacity(4);
    for c in Component::ALL {
        let dim = dims[c.index()];
        let mut h = IncrementalHapod::new(eps, omega)?;
        for traj in trajectories {
            let mut chunk = DMatrix::zeros(dim, traj.states.len());
            for (k, s) in traj.states.iter().enumerate() {
                let src = s.fields.component(c);
                if src.len() != dim {
                    return Err(Error::Dimension(format!(
                        "trajectory component {} has dimension {}, expected {dim}",
                        c.label(),
                        src.len()
                    )));
                }
                chunk.column_mut(k).copy_from_slice(src);
            }
            h.push_chunk(&chunk)?;
        }
        out.push(h.finish()?);
    }
    Ok(out.try_into().expect("four components"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn splitmix(state: &mut u64) -> f64 {
        *state = state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = *state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        ((z ^ (z >> 31)) >> 11) as f64 / (1u64 << 53) as f64
    }

    fn random_matrix(n: usize, k: usize, seed: u64) -> DMatrix<f64> {
        let mut s = seed;
        DMatrix::from_fn(n, k, |_, _| splitmix(&mut s) - 0.5)
    }

    #[test]
    fn rank_one_set_yields_normalized_column() {
        let mut set = SnapshotSet::new(Component::U3, 4);
        let v = [3.0, 0.0, 4.0, 0.0];
        let prov = Provenance {
            parameter: crate::params::ParameterPoint::default(),
            time_index: 0,
            newton_stage: 0,
        };
        set.push_column(&v, prov).unwrap();
        let b = pod(&set, 1e-12).unwrap();
        assert_eq!(b.rank(), 1);
        assert_abs_diff_eq!(b.singular_values[0], 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.modes[(0, 0)], 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(b.modes[(2, 0)], 0.8, epsilon = 1e-12);
    }

    #[test]
    fn orthogonal_columns_have_their_norms_as_singular_values() {
        // columns 3*e1, 2*e2, 1*e3: singular values (3, 2, 1); an eps
        // between the energies truncates analytically
        let mut m = DMatrix::zeros(5, 3);
        m[(0, 0)] = 3.0;
        m[(1, 1)] = 2.0;
        m[(2, 2)] = 1.0;
        let b = pod_matrix(&m, Truncation::Relative(0.0)).unwrap();
        assert_eq!(b.rank(), 3);
        assert_abs_diff_eq!(b.singular_values[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.singular_values[2], 1.0, epsilon = 1e-12);
        // dropping the weakest mode requires tail 1 <= eps * sqrt(14)
        let eps = (1.0f64 / 14.0).sqrt() * 1.001;
        let b = pod_matrix(&m, Truncation::Relative(eps)).unwrap();
        assert_eq!(b.rank(), 2);
        // dropping two requires sqrt(5)/sqrt(14)
        let eps = (5.0f64 / 14.0).sqrt() * 1.001;
        let b = pod_matrix(&m, Truncation::Relative(eps)).unwrap();
        assert_eq!(b.rank(), 1);
    }

    #[test]
    fn reconstruction_error_matches_truncated_singular_values() {
        let m = random_matrix(40, 12, 7);
        let full = pod_matrix(&m, Truncation::Relative(0.0)).unwrap();
        for rank in [2usize, 5, 9] {
            let b = pod_matrix(&m, Truncation::Rank(rank)).unwrap();
            let mut err_sq = 0.0;
            for c in 0..m.ncols() {
                let col: Vec<f64> = m.column(c).iter().copied().collect();
                let e = b.projection_error(&col);
                err_sq += e * e;
            }
            let tail_sq: f64 = full.singular_values[rank..].iter().map(|s| s * s).sum();
            assert_abs_diff_eq!(err_sq.sqrt(), tail_sq.sqrt(), epsilon = 1e-10);
        }
    }

    #[test]
    fn modes_are_orthonormal_even_for_ill_conditioned_snapshots() {
        // nearly dependent columns
        let mut m = random_matrix(30, 3, 3);
        let c0: Vec<f64> = m.column(0).iter().copied().collect();
        for i in 0..30 {
            m[(i, 1)] = c0[i] * (1.0 + 1e-10 * i as f64);
            m[(i, 2)] = c0[i] * (1.0 - 1e-10 * i as f64);
        }
        let b = pod_matrix(&m, Truncation::Relative(0.0)).unwrap();
        assert!(b.orthonormality_defect() < 1e-10);
    }

    #[test]
    fn deterministic_sign_convention() {
        let m = random_matrix(25, 8, 11);
        let a = pod_matrix(&m, Truncation::Relative(1e-8)).unwrap();
        let b = pod_matrix(&m, Truncation::Relative(1e-8)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_snapshots_rejected() {
        let set = SnapshotSet::new(Component::U1, 5);
        assert!(matches!(pod(&set, 1e-6), Err(Error::EmptySnapshots(_))));
        assert!(matches!(
            hapod_incremental(&[], 1e-6, 0.9),
            Err(Error::EmptySnapshots(_))
        ));
    }

    #[test]
    fn single_chunk_hapod_equals_pod() {
        let m = random_matrix(40, 10, 23);
        let eps = 1e-3;
        let direct = pod_matrix(&m, Truncation::Relative(eps)).unwrap();
        let h = hapod_incremental(std::slice::from_ref(&m), eps, 0.9).unwrap();
        // same span and same truncation: single leaf = root, so the local
        // tolerance is the root tolerance omega*eps and the chunk passes
        // through one POD; rank can only match or exceed the direct POD
        assert!(h.rank() >= direct.rank());
        for c in 0..m.ncols() {
            let col: Vec<f64> = m.column(c).iter().copied().collect();
            assert!(h.projection_error(&col) <= direct.projection_error(&col) + 1e-9);
        }
    }

    #[test]
    fn orthogonal_chunks_union_of_modes() {
        let mut a = DMatrix::zeros(8, 2);
        a[(0, 0)] = 2.0;
        a[(1, 1)] = 1.5;
        let mut b = DMatrix::zeros(8, 2);
        b[(4, 0)] = 1.0;
        b[(5, 1)] = 0.5;
        let h = hapod_incremental(&[a, b], 1e-12, 0.5).unwrap();
        assert_eq!(h.rank(), 4);
        assert!(h.orthonormality_defect() < 1e-12);
    }

    #[test]
    fn hapod_bound_holds_and_mode_count_dominates_pod() {
        let m = random_matrix(200, 60, 99);
        let total_energy: f64 = m.iter().map(|v| v * v).sum();
        for &(eps, omega) in &[(1e-6, 0.9), (1e-4, 0.5), (1e-2, 0.75)] {
            let chunks: Vec<DMatrix<f64>> = (0..6)
                .map(|k| m.columns(k * 10, 10).into_owned())
                .collect();
            let h = hapod_incremental(&chunks, eps, omega).unwrap();
            let direct = pod_matrix(&m, Truncation::Relative(eps)).unwrap();
            assert!(
                h.rank() >= direct.rank(),
                "eps={eps}: hapod rank {} < pod rank {}",
                h.rank(),
                direct.rank()
            );
            let mut err_sq = 0.0;
            for c in 0..m.ncols() {
                let col: Vec<f64> = m.column(c).iter().copied().collect();
                let e = h.projection_error(&col);
                err_sq += e * e;
            }
            assert!(
                err_sq.sqrt() <= eps * total_energy.sqrt() * (1.0 + 1e-12),
                "eps={eps}: error {} exceeds bound {}",
                err_sq.sqrt(),
                eps * total_energy.sqrt()
            );
        }
    }
}
