//! Linear operators with forward and adjoint application, plus the spectral
//! quantities (`‖L‖²` and the smallest positive eigenvalue of `L*L`) that feed
//! every stepsize rule.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Dense real coordinate vector; the element type of both primal and dual
/// spaces.
pub type Vector = DVector<f64>;

/// Largest dimension for which `spectral_info` densifies `L*L`.
pub const DENSE_SPECTRAL_LIMIT: usize = 500;

/// Relative rank threshold used to decide which eigenvalues of `L*L` count as
/// zero.
pub const RANK_THRESHOLD: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum LinOp {
    Identity(usize),
    Zero {
        in_dim: usize,
        out_dim: usize,
    },
    Dense(DMatrix<f64>),
    /// `(Dx)_i = x_i - x_{i+1}`, mapping `R^p` to `R^{p-1}`.
    FirstDifference(usize),
    /// Stack of coordinate selections `x ↦ (x_{G_1}, …, x_{G_m})`. Groups hold
    /// zero-based indices and may overlap.
    GroupSelector {
        dim: usize,
        groups: Vec<Vec<usize>>,
    },
    /// `Ŵ ⊗ I_d` for a symmetric positive semidefinite gossip matrix `Ŵ`.
    GossipKron {
        what: DMatrix<f64>,
        block_dim: usize,
    },
    VStack(Vec<LinOp>),
}

/// Spectral summary of an operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralInfo {
    /// Estimate of `‖L‖²`, the largest eigenvalue of `L*L`.
    pub op_norm_sq: f64,
    /// Smallest positive eigenvalue of `L*L`. `None` when the operator was too
    /// large to densify; supply it with [`SpectralInfo::with_omega`].
    pub omega: Option<f64>,
    pub tol: f64,
    pub iterations_used: usize,
    /// `true` when `op_norm_sq` is an upper bound rather than an estimate.
    pub bound: bool,
}

impl SpectralInfo {
    pub fn with_omega(mut self, omega: f64) -> Result<Self> {
        if !(omega > 0.0) || omega > self.op_norm_sq * (1.0 + 1e-9) {
            return Err(Error::InvalidParameter(format!(
                "omega must lie in (0, ‖L‖²], got {omega}"
            )));
        }
        self.omega = Some(omega);
        Ok(self)
    }

    /// `Σ‖L_i‖²` over the blocks of a vertical stack. Always `≥ ‖L‖²`.
    pub fn stacked_bound(children: &[SpectralInfo]) -> SpectralInfo {
        SpectralInfo {
            op_norm_sq: children.iter().map(|c| c.op_norm_sq).sum(),
            omega: None,
            tol: children.iter().map(|c| c.tol).fold(0.0, f64::max),
            iterations_used: children.iter().map(|c| c.iterations_used).sum(),
            bound: true,
        }
    }
}

impl LinOp {
    /// Gossip operator `Ŵ ⊗ I_d`. Rejects `Ŵ` that is not symmetric, has a
    /// negative eigenvalue, or does not annihilate the all-ones vector.
    pub fn gossip_kron(what: DMatrix<f64>, block_dim: usize) -> Result<Self> {
        let n = what.nrows();
        if what.ncols() != n {
            return Err(Error::InvalidParameter("gossip matrix must be square".into()));
        }
        let scale = what.amax().max(1.0);
        if (&what - what.transpose()).amax() > 1e-12 * scale {
            return Err(Error::InvalidParameter("gossip matrix must be symmetric".into()));
        }
        let row_sums = &what * DVector::from_element(n, 1.0);
        if row_sums.amax() > 1e-10 * scale {
            return Err(Error::InvalidParameter(
                "gossip matrix must have the all-ones vector in its kernel".into(),
            ));
        }
        let eig = SymmetricEigen::new(what.clone());
        if eig.eigenvalues.min() < -1e-10 * scale {
            return Err(Error::InvalidParameter(
                "gossip matrix must be positive semidefinite".into(),
            ));
        }
        Ok(LinOp::GossipKron { what, block_dim })
    }

    pub fn group_selector(dim: usize, groups: Vec<Vec<usize>>) -> Result<Self> {
        for g in &groups {
            for &i in g {
                if i >= dim {
                    return Err(Error::IndexOutOfRange { index: i, len: dim });
                }
            }
        }
        Ok(LinOp::GroupSelector { dim, groups })
    }

    pub fn vstack(children: Vec<LinOp>) -> Result<Self> {
        if let Some(first) = children.first() {
            let d = first.in_dim();
            for c in &children[1..] {
                check_dim(d, c.in_dim())?;
            }
        } else {
            return Err(Error::InvalidParameter("empty vertical stack".into()));
        }
        Ok(LinOp::VStack(children))
    }

    /// Loads a dense matrix from CSV, one row per line.
    pub fn dense_from_csv(path: impl AsRef<Path>) -> Result<Self> {
        Ok(LinOp::Dense(read_matrix_csv(path)?))
    }

    pub fn in_dim(&self) -> usize {
        match self {
            LinOp::Identity(n) => *n,
            LinOp::Zero { in_dim, .. } => *in_dim,
            LinOp::Dense(m) => m.ncols(),
            LinOp::FirstDifference(p) => *p,
            LinOp::GroupSelector { dim, .. } => *dim,
            LinOp::GossipKron { what, block_dim } => what.nrows() * block_dim,
            LinOp::VStack(children) => children.first().map_or(0, |c| c.in_dim()),
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            LinOp::Identity(n) => *n,
            LinOp::Zero { out_dim, .. } => *out_dim,
            LinOp::Dense(m) => m.nrows(),
            LinOp::FirstDifference(p) => p.saturating_sub(1),
            LinOp::GroupSelector { groups, .. } => groups.iter().map(Vec::len).sum(),
            LinOp::GossipKron { what, block_dim } => what.nrows() * block_dim,
            LinOp::VStack(children) => children.iter().map(LinOp::out_dim).sum(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            LinOp::Zero { .. } => true,
            LinOp::Dense(m) => m.iter().all(|&v| v == 0.0),
            LinOp::GroupSelector { groups, .. } => groups.iter().all(Vec::is_empty),
            LinOp::GossipKron { what, .. } => what.iter().all(|&v| v == 0.0),
            LinOp::VStack(children) => children.iter().all(LinOp::is_zero),
            LinOp::Identity(n) => *n == 0,
            LinOp::FirstDifference(p) => *p <= 1,
        }
    }

    /// `Lx`.
    pub fn apply(&self, x: &Vector) -> Result<Vector> {
        check_dim(self.in_dim(), x.len())?;
        Ok(match self {
            LinOp::Identity(_) => x.clone(),
            LinOp::Zero { out_dim, .. } => Vector::zeros(*out_dim),
            LinOp::Dense(m) => m * x,
            LinOp::FirstDifference(p) => {
                Vector::from_fn(p.saturating_sub(1), |i, _| x[i] - x[i + 1])
            }
            LinOp::GroupSelector { groups, .. } => {
                Vector::from_iterator(self.out_dim(), groups.iter().flatten().map(|&i| x[i]))
            }
            LinOp::GossipKron { what, block_dim } => kron_apply(what, *block_dim, x),
            LinOp::VStack(children) => {
                let mut out = Vector::zeros(self.out_dim());
                let mut offset = 0;
                for c in children {
                    let part = c.apply(x)?;
                    out.rows_mut(offset, part.len()).copy_from(&part);
                    offset += part.len();
                }
                out
            }
        })
    }

    /// `L*y`.
    pub fn adjoint_apply(&self, y: &Vector) -> Result<Vector> {
        check_dim(self.out_dim(), y.len())?;
        Ok(match self {
            LinOp::Identity(_) => y.clone(),
            LinOp::Zero { in_dim, .. } => Vector::zeros(*in_dim),
            LinOp::Dense(m) => m.tr_mul(y),
            LinOp::FirstDifference(p) => {
                let p = *p;
                Vector::from_fn(p, |i, _| {
                    let from_row_i = if i + 1 < p { y[i] } else { 0.0 };
                    let from_row_prev = if i > 0 { y[i - 1] } else { 0.0 };
                    from_row_i - from_row_prev
                })
            }
            LinOp::GroupSelector { dim, groups } => {
                let mut out = Vector::zeros(*dim);
                for (&i, &v) in groups.iter().flatten().zip(y.iter()) {
                    out[i] += v;
                }
                out
            }
            LinOp::GossipKron { what, block_dim } => kron_apply(what, *block_dim, y),
            LinOp::VStack(children) => {
                let mut out = Vector::zeros(self.in_dim());
                let mut offset = 0;
                for c in children {
                    let n = c.out_dim();
                    out += c.adjoint_apply(&y.rows(offset, n).into_owned())?;
                    offset += n;
                }
                out
            }
        })
    }

    /// `L*Lx`.
    pub fn gram_apply(&self, x: &Vector) -> Result<Vector> {
        self.adjoint_apply(&self.apply(x)?)
    }

    /// The operator whose spectrum `spectral_info` reports: `L*L` in general,
    /// and `W` itself for a gossip operator, which always enters the solvers
    /// as `W = L*L` with `L = W^{1/2}`.
    fn spectral_apply(&self, x: &Vector) -> Result<Vector> {
        match self {
            LinOp::GossipKron { .. } => self.apply(x),
            _ => self.gram_apply(x),
        }
    }

    /// Dense matrix of the operator. Only meant for desk-scale analysis and
    /// oracles; the solver paths never call it.
    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            LinOp::Dense(m) => m.clone(),
            LinOp::Identity(n) => DMatrix::identity(*n, *n),
            LinOp::Zero { in_dim, out_dim } => DMatrix::zeros(*out_dim, *in_dim),
            _ => {
                let (m, n) = (self.out_dim(), self.in_dim());
                let mut out = DMatrix::zeros(m, n);
                let mut e = Vector::zeros(n);
                for j in 0..n {
                    e[j] = 1.0;
                    let col = self.apply(&e).expect("dimension is consistent by construction");
                    out.set_column(j, &col);
                    e[j] = 0.0;
                }
                out
            }
        }
    }

    /// Power iteration on `L*L` (on `W` for gossip operators), stopped once
    /// the eigen-residual `‖L*Lv - θv‖` drops below `tol·θ`.
    pub fn power_norm_sq(&self, tol: f64, max_iter: usize) -> Result<(f64, usize)> {
        if !(tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tol must be > 0, got {tol}")));
        }
        let n = self.in_dim();
        if n == 0 || self.out_dim() == 0 || self.is_zero() {
            return Err(Error::RankZero);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_5eed);
        let mut v = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        v /= v.norm();
        let mut theta = 0.0;
        for it in 1..=max_iter.max(1) {
            let w = self.spectral_apply(&v)?;
            theta = v.dot(&w);
            let wn = w.norm();
            if wn == 0.0 {
                return Err(Error::RankZero);
            }
            let residual = (&w - &v * theta).norm();
            if residual <= tol * theta {
                return Ok((theta, it));
            }
            v = w / wn;
        }
        Ok((theta, max_iter.max(1)))
    }

    /// `‖L‖²` by power iteration and `ω(L*L)` by dense eigendecomposition.
    pub fn spectral_info(&self, tol: f64, max_iter: usize) -> Result<SpectralInfo> {
        let (op_norm_sq, iterations_used) = self.power_norm_sq(tol, max_iter)?;
        let small = self.in_dim().min(self.out_dim());
        let omega = if small <= DENSE_SPECTRAL_LIMIT {
            Some(smallest_positive_eig(&dense_gram_eigenvalues(self), op_norm_sq)?)
        } else {
            None
        };
        Ok(SpectralInfo { op_norm_sq, omega, tol, iterations_used, bound: false })
    }

    /// Cheap upper bound on `‖L‖²`: the sum of block norms for a stack, the
    /// power estimate otherwise.
    pub fn norm_sq_upper_bound(&self, tol: f64, max_iter: usize) -> Result<SpectralInfo> {
        match self {
            LinOp::VStack(children) => {
                let infos: Vec<SpectralInfo> = children
                    .iter()
                    .filter(|c| !c.is_zero())
                    .map(|c| c.spectral_info_norm_only(tol, max_iter))
                    .collect::<Result<_>>()?;
                Ok(SpectralInfo::stacked_bound(&infos))
            }
            _ => self.spectral_info_norm_only(tol, max_iter),
        }
    }

    fn spectral_info_norm_only(&self, tol: f64, max_iter: usize) -> Result<SpectralInfo> {
        let (op_norm_sq, iterations_used) = self.power_norm_sq(tol, max_iter)?;
        Ok(SpectralInfo { op_norm_sq, omega: None, tol, iterations_used, bound: false })
    }
}

/// Smallest eigenvalue above `RANK_THRESHOLD` times the spectral radius.
/// `scale_hint` guards against an eigensolver that underestimates the top.
pub fn smallest_positive_eig(eigenvalues: &[f64], scale_hint: f64) -> Result<f64> {
    let top = eigenvalues.iter().cloned().fold(0.0, f64::max);
    let threshold = RANK_THRESHOLD * scale_hint.max(top);
    let omega = eigenvalues.iter().cloned().filter(|&e| e > threshold).fold(f64::INFINITY, f64::min);
    if omega.is_finite() {
        Ok(omega)
    } else {
        Err(Error::RankZero)
    }
}

/// Eigenvalues of the smaller of `L*L` and `LL*` (they share nonzero spectra).
/// For a gossip operator these are the eigenvalues of `Ŵ` (each repeated
/// `block_dim` times in `Ŵ ⊗ I`).
pub fn dense_gram_eigenvalues(op: &LinOp) -> Vec<f64> {
    if let LinOp::GossipKron { what, .. } = op {
        return SymmetricEigen::new(what.clone()).eigenvalues.iter().cloned().collect();
    }
    let m = op.to_dense();
    let gram = if m.nrows() < m.ncols() { &m * m.transpose() } else { m.transpose() * &m };
    SymmetricEigen::new(gram).eigenvalues.iter().cloned().collect()
}

fn kron_apply(what: &DMatrix<f64>, d: usize, x: &Vector) -> Vector {
    let n = what.nrows();
    let mut out = Vector::zeros(n * d);
    for i in 0..n {
        for j in 0..n {
            let w = what[(i, j)];
            if w == 0.0 {
                continue;
            }
            for c in 0..d {
                out[i * d + c] += w * x[j * d + c];
            }
        }
    }
    out
}

/// Reads a dense matrix from CSV: one row per line, comma-separated decimals.
pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .map(|s| {
                s.parse::<f64>().map_err(|e| Error::Parse {
                    line: line + 1,
                    msg: format!("bad number {s:?}: {e}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    line: line + 1,
                    msg: format!("expected {} columns, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Writes a dense matrix as CSV in the format read by [`read_matrix_csv`].
pub fn write_matrix_csv(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for i in 0..m.nrows() {
        writer.write_record(m.row(i).iter().map(|v| format!("{v:e}")))?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(data: &[f64]) -> Vector {
        Vector::from_column_slice(data)
    }

    #[test]
    fn apply_examples() {
        assert_eq!(LinOp::Identity(3).apply(&v(&[1., 2., 3.])).unwrap(), v(&[1., 2., 3.]));
        assert_eq!(LinOp::FirstDifference(3).apply(&v(&[5., 2., 2.])).unwrap(), v(&[3., 0.]));
        let dense = LinOp::Dense(DMatrix::from_row_slice(2, 2, &[1., 0., 1., 1.]));
        assert_eq!(dense.apply(&v(&[2., 3.])).unwrap(), v(&[2., 5.]));
    }

    #[test]
    fn adjoint_examples() {
        assert_eq!(LinOp::Identity(3).adjoint_apply(&v(&[1., 2., 3.])).unwrap(), v(&[1., 2., 3.]));
        assert_eq!(
            LinOp::FirstDifference(3).adjoint_apply(&v(&[1., 0.])).unwrap(),
            v(&[1., -1., 0.])
        );
        let sel = LinOp::group_selector(3, vec![vec![0, 1], vec![1, 2]]).unwrap();
        let (a, b, c, d) = (1.5, -2.0, 0.25, 7.0);
        assert_eq!(sel.adjoint_apply(&v(&[a, b, c, d])).unwrap(), v(&[a, b + c, d]));
    }

    #[test]
    fn dimension_mismatch_reports_both_dims() {
        let err = LinOp::FirstDifference(4).apply(&v(&[1., 2.])).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 4, got: 2 }));
        let err = LinOp::FirstDifference(4).adjoint_apply(&v(&[1., 2.])).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 3, got: 2 }));
    }

    #[test]
    fn spectral_info_of_diagonal() {
        let op = LinOp::Dense(DMatrix::from_diagonal(&v(&[1., 2., 3.])));
        let info = op.spectral_info(1e-10, 10_000).unwrap();
        assert!((info.op_norm_sq - 9.0).abs() < 1e-8);
        assert!((info.omega.unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn first_difference_norm_closed_form() {
        for p in [4usize, 10, 50] {
            let info = LinOp::FirstDifference(p).spectral_info(1e-9, 1_000_000).unwrap();
            let exact = 4.0 * (std::f64::consts::PI * (p as f64 - 1.0) / (2.0 * p as f64)).sin().powi(2);
            assert!(exact < 4.0);
            assert!((info.op_norm_sq - exact).abs() <= 1e-6 * exact, "p={p}");
        }
    }

    #[test]
    fn path_laplacian_spectrum() {
        let lap = DMatrix::from_row_slice(3, 3, &[1., -1., 0., -1., 2., -1., 0., -1., 1.]);
        let op = LinOp::gossip_kron(lap, 1).unwrap();
        let info = op.spectral_info(1e-10, 100_000).unwrap();
        // a gossip operator reports the spectrum of W = L*L: {0, 1, 3}
        assert!((info.op_norm_sq - 3.0).abs() < 1e-7);
        assert!((info.omega.unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_operator_is_rank_zero() {
        let op = LinOp::Zero { in_dim: 3, out_dim: 2 };
        assert!(matches!(op.spectral_info(1e-6, 100), Err(Error::RankZero)));
    }

    #[test]
    fn gossip_rejects_bad_matrices() {
        let not_sym = DMatrix::from_row_slice(2, 2, &[1., -1., -0.5, 0.5]);
        assert!(LinOp::gossip_kron(not_sym, 1).is_err());
        let no_kernel = DMatrix::identity(2, 2);
        assert!(LinOp::gossip_kron(no_kernel, 1).is_err());
    }

    #[test]
    fn stacked_bound_dominates() {
        let a = LinOp::Dense(DMatrix::from_row_slice(2, 3, &[1., 2., 0., 0., 1., 1.]));
        let b = LinOp::FirstDifference(3);
        let stack = LinOp::vstack(vec![a, b]).unwrap();
        let exact = stack.spectral_info(1e-10, 100_000).unwrap();
        let bound = stack.norm_sq_upper_bound(1e-10, 100_000).unwrap();
        assert!(bound.bound);
        assert!(bound.op_norm_sq >= exact.op_norm_sq * (1.0 - 1e-9));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = DMatrix::from_row_slice(2, 3, &[1.0, -0.5, 3.25, 0.0, 1e-3, 7.0]);
        write_matrix_csv(&path, &m).unwrap();
        assert_eq!(read_matrix_csv(&path).unwrap(), m);
        std::fs::write(&path, "1,2\n3\n").unwrap();
        assert!(matches!(read_matrix_csv(&path), Err(Error::Parse { line: 2, .. }) | Err(Error::Csv(_))));
    }
}
