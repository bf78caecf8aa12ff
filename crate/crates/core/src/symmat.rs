//! Dense symmetric-matrix numerics shared by every other module.
//!
//! Everything downstream (noise models, consistency sets, LMI blocks,
//! Lyapunov certificates) is built from real symmetric matrices. The
//! [`SymMatrix`] newtype enforces exact symmetry at construction time by
//! averaging with the transpose, so eigensolvers never see asymmetry
//! introduced by floating-point assembly.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Thresholds for the definiteness tests.
///
/// All tests are relative: a matrix is measured against
/// `scale = max(1, |lambda|_max)` so that problems mixing entries of very
/// different magnitude (the aircraft benchmark spans four orders) are
/// judged consistently.
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    /// Magnitudes below `eig_zero * scale` count as zero (rank tests,
    /// singularity checks, PSD slack).
    pub eig_zero: f64,
    /// Slack allowed when validating nominally-PSD quantities produced by
    /// solvers or sampling (Lyapunov margins, residual projections).
    pub psd_margin: f64,
    /// Margin required before an eigenvalue counts as strictly positive.
    pub strict_margin: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            eig_zero: 1e-9,
            psd_margin: 1e-8,
            strict_margin: 1e-8,
        }
    }
}

impl Tolerance {
    pub fn validate(&self) -> Result<()> {
        if self.eig_zero > 0.0 && self.psd_margin > 0.0 && self.strict_margin > 0.0 {
            Ok(())
        } else {
            Err(Error::Problem(
                "tolerances must be strictly positive".into(),
            ))
        }
    }
}

/// Which definiteness test to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Definiteness {
    PositiveSemidefinite,
    PositiveDefinite,
    NegativeSemidefinite,
    NegativeDefinite,
}

/// Eigendecomposition of a symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SymEig {
    /// Eigenvalues sorted ascending.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors, column `j` paired with `values[j]`.
    pub vectors: DMatrix<f64>,
}

/// A real symmetric matrix.
///
/// Invariants: square, `dim >= 1`, all entries finite, and
/// `entries[i][j] == entries[j][i]` bit-exactly (both are computed as the
/// same average during construction).
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    m: DMatrix<f64>,
}

impl SymMatrix {
    /// Symmetrize `m` by averaging with its transpose.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Dimension(format!(
                "symmetric matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::Dimension("symmetric matrix must have dim >= 1".into()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("symmetric matrix entries".into()));
        }
        let n = m.nrows();
        let mut s = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
                s[(i, j)] = avg;
                s[(j, i)] = avg;
            }
        }
        Ok(SymMatrix { m: s })
    }

    pub fn from_rows(dim: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::Dimension(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                entries.len()
            )));
        }
        SymMatrix::new(DMatrix::from_row_slice(dim, dim, entries))
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix {
            m: DMatrix::identity(dim, dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        SymMatrix {
            m: DMatrix::zeros(dim, dim),
        }
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::Dimension("diagonal must have dim >= 1".into()));
        }
        if diag.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("diagonal entries".into()));
        }
        Ok(SymMatrix {
            m: DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(diag)),
        })
    }

    /// Scalar multiple of the identity.
    pub fn scaled_identity(dim: usize, c: f64) -> Self {
        SymMatrix {
            m: DMatrix::identity(dim, dim) * c,
        }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.m.trace()
    }

    pub fn scale(&self, c: f64) -> SymMatrix {
        SymMatrix { m: &self.m * c }
    }

    pub fn add(&self, other: &SymMatrix) -> Result<SymMatrix> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension(format!(
                "cannot add {}x{} and {}x{}",
                self.dim(),
                self.dim(),
                other.dim(),
                other.dim()
            )));
        }
        Ok(SymMatrix {
            m: &self.m + &other.m,
        })
    }

    /// Congruence transform `T * S * T^t` (always symmetric).
    pub fn congruence(&self, t: &DMatrix<f64>) -> Result<SymMatrix> {
        if t.ncols() != self.dim() {
            return Err(Error::Dimension(format!(
                "congruence: {}x{} times dim {}",
                t.nrows(),
                t.ncols(),
                self.dim()
            )));
        }
        SymMatrix::new(t * &self.m * t.transpose())
    }

    /// Eigendecomposition with eigenvalues sorted ascending.
    pub fn eig(&self) -> SymEig {
        let se = self.m.clone().symmetric_eigen();
        let n = self.dim();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| se.eigenvalues[a].partial_cmp(&se.eigenvalues[b]).unwrap());
        let values: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
        let mut vectors = DMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            vectors.set_column(dst, &se.eigenvectors.column(src));
        }
        SymEig { values, vectors }
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.eig().values
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues_minmax().0
    }

    pub fn max_abs_eigenvalue(&self) -> f64 {
        let (lo, hi) = self.eigenvalues_minmax();
        lo.abs().max(hi.abs())
    }

    fn eigenvalues_minmax(&self) -> (f64, f64) {
        let ev = self.m.clone().symmetric_eigen().eigenvalues;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in ev.iter() {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
        (lo, hi)
    }

    /// Relative spectral scale used by all tolerance tests.
    pub fn spectral_scale(&self) -> f64 {
        self.max_abs_eigenvalue().max(1.0)
    }

    /// Definiteness test with relative margins.
    ///
    /// PD requires `lambda_min > strict_margin * scale`; PSD requires
    /// `lambda_min >= -eig_zero * scale`; the negative modes negate.
    pub fn definiteness(&self, mode: Definiteness, tol: &Tolerance) -> bool {
        match mode {
            Definiteness::NegativeDefinite => {
                self.scale(-1.0).definiteness(Definiteness::PositiveDefinite, tol)
            }
            Definiteness::NegativeSemidefinite => self
                .scale(-1.0)
                .definiteness(Definiteness::PositiveSemidefinite, tol),
            Definiteness::PositiveDefinite => {
                let (lo, hi) = self.eigenvalues_minmax();
                let scale = lo.abs().max(hi.abs()).max(1.0);
                lo > tol.strict_margin * scale
            }
            Definiteness::PositiveSemidefinite => {
                let (lo, hi) = self.eigenvalues_minmax();
                let scale = lo.abs().max(hi.abs()).max(1.0);
                lo >= -tol.eig_zero * scale
            }
        }
    }

    pub fn is_pd(&self, tol: &Tolerance) -> bool {
        self.definiteness(Definiteness::PositiveDefinite, tol)
    }

    pub fn is_psd(&self, tol: &Tolerance) -> bool {
        self.definiteness(Definiteness::PositiveSemidefinite, tol)
    }

    pub fn is_nd(&self, tol: &Tolerance) -> bool {
        self.definiteness(Definiteness::NegativeDefinite, tol)
    }

    pub fn is_nsd(&self, tol: &Tolerance) -> bool {
        self.definiteness(Definiteness::NegativeSemidefinite, tol)
    }

    /// Schur complement `A - B D^-1 B^t` of `[A B; B^t D]`, where `A` is the
    /// leading `split x split` block.
    ///
    /// Fails when the trailing block is numerically singular.
    pub fn schur_complement(&self, split: usize) -> Result<SymMatrix> {
        let n = self.dim();
        if split == 0 || split >= n {
            return Err(Error::Dimension(format!(
                "schur split {split} must satisfy 0 < split < {n}"
            )));
        }
        let a = self.m.view((0, 0), (split, split)).into_owned();
        let b = self.m.view((0, split), (split, n - split)).into_owned();
        let d = SymMatrix::new(self.m.view((split, split), (n - split, n - split)).into_owned())?;
        let d_inv_bt = d.solve(&b.transpose())?;
        SymMatrix::new(a - b * d_inv_bt)
    }

    /// Solve `S X = RHS` via the eigendecomposition; fails when `S` is
    /// numerically singular relative to its spectral scale.
    pub fn solve(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let tol = Tolerance::default();
        let eig = self.eig();
        let scale = eig
            .values
            .iter()
            .fold(0.0_f64, |acc, v| acc.max(v.abs()))
            .max(1.0);
        if eig.values.iter().any(|v| v.abs() <= tol.eig_zero * scale) {
            return Err(Error::Singular(format!(
                "symmetric solve: |lambda|_min = {:.3e} below tolerance",
                eig.values.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()))
            )));
        }
        if rhs.nrows() != self.dim() {
            return Err(Error::Dimension(format!(
                "solve: rhs has {} rows, expected {}",
                rhs.nrows(),
                self.dim()
            )));
        }
        // S^-1 = V diag(1/lambda) V^t
        let vt_rhs = eig.vectors.transpose() * rhs;
        let mut scaled = vt_rhs;
        for (i, lam) in eig.values.iter().enumerate() {
            let mut row = scaled.row_mut(i);
            row /= *lam;
        }
        Ok(&eig.vectors * scaled)
    }

    /// Inverse as a symmetric matrix.
    pub fn inverse(&self) -> Result<SymMatrix> {
        let id = DMatrix::identity(self.dim(), self.dim());
        SymMatrix::new(self.solve(&id)?)
    }

    /// Symmetric square root of a PSD matrix. Eigenvalues in
    /// `[-eig_zero * scale, 0)` are clipped to zero; anything lower fails.
    pub fn sqrt_psd(&self, tol: &Tolerance) -> Result<SymMatrix> {
        let eig = self.eig();
        let scale = eig
            .values
            .iter()
            .fold(0.0_f64, |acc, v| acc.max(v.abs()))
            .max(1.0);
        let mut d = DMatrix::zeros(self.dim(), self.dim());
        for (i, &lam) in eig.values.iter().enumerate() {
            if lam < -tol.eig_zero * scale {
                return Err(Error::Definiteness(format!(
                    "sqrt of non-PSD matrix: lambda_min = {lam:.3e}"
                )));
            }
            d[(i, i)] = lam.max(0.0).sqrt();
        }
        SymMatrix::new(&eig.vectors * d * eig.vectors.transpose())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.m.norm()
    }
}

/// Largest singular value of a general rectangular matrix.
pub fn max_singular_value(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let svd = m.clone().svd(false, false);
    svd.singular_values
        .iter()
        .fold(0.0_f64, |acc, s| acc.max(*s))
}

/// Numerical row rank via singular values above `eig_zero * scale`.
pub fn numerical_rank(m: &DMatrix<f64>, tol: &Tolerance) -> usize {
    if m.is_empty() {
        return 0;
    }
    let svd = m.clone().svd(false, false);
    let s_max = svd
        .singular_values
        .iter()
        .fold(0.0_f64, |acc, s| acc.max(*s));
    let scale = s_max.max(1.0);
    svd.singular_values
        .iter()
        .filter(|s| **s > tol.eig_zero * scale)
        .count()
}
