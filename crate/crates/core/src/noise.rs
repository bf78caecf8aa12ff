//! Quadratic noise bounds on the stacked noise matrix.
//!
//! A noise model is the triple `(Phi11, Phi12, Phi22)` declaring the set of
//! admissible `n x T` noise matrices `W` through
//!
//! ```text
//! Phi11 + Phi12 W^t + W Phi12^t + W Phi22 W^t  >=  0,
//! ```
//!
//! with `Phi22` negative definite so the admissible set is bounded. The
//! constructors cover the standard special cases: a bound on the total
//! noise energy, per-sample norm bounds, sample-covariance bounds, and
//! noise confined to a known subspace.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::io;
use crate::symmat::{SymMatrix, Tolerance};

#[derive(Debug, Clone)]
pub struct NoiseModel {
    phi11: SymMatrix,
    phi12: DMatrix<f64>,
    phi22: SymMatrix,
}

impl NoiseModel {
    /// Build a model from its three blocks, enforcing the dimension and
    /// negative-definiteness invariants.
    pub fn new(phi11: SymMatrix, phi12: DMatrix<f64>, phi22: SymMatrix) -> Result<Self> {
        let n = phi11.dim();
        let t = phi22.dim();
        if phi12.nrows() != n || phi12.ncols() != t {
            return Err(Error::Dimension(format!(
                "phi12 must be {n}x{t}, got {}x{}",
                phi12.nrows(),
                phi12.ncols()
            )));
        }
        if phi12.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("phi12 entries".into()));
        }
        let tol = Tolerance::default();
        if !phi22.is_nd(&tol) {
            return Err(Error::Definiteness(format!(
                "phi22 must be negative definite (lambda_max = {:.3e})",
                phi22.eigenvalues().last().unwrap()
            )));
        }
        Ok(NoiseModel {
            phi11,
            phi12,
            phi22,
        })
    }

    /// Bound on the total energy: `W W^t <= bound`. Requires `bound` PSD.
    pub fn from_energy_bound(bound: SymMatrix, t: usize) -> Result<Self> {
        let tol = Tolerance::default();
        if !bound.is_psd(&tol) {
            return Err(Error::Definiteness(
                "energy bound must be positive semidefinite".into(),
            ));
        }
        let n = bound.dim();
        NoiseModel::new(
            bound,
            DMatrix::zeros(n, t),
            SymMatrix::scaled_identity(t, -1.0),
        )
    }

    /// Per-sample norm bound `|w(t)|^2 <= eps` aggregated over the horizon,
    /// yielding the energy bound `W W^t <= T eps I`.
    pub fn from_sample_norm_bound(eps: f64, n: usize, t: usize) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::Problem(format!("eps must be > 0, got {eps}")));
        }
        NoiseModel::from_energy_bound(SymMatrix::scaled_identity(n, t as f64 * eps), t)
    }

    /// Bound on the sample covariance:
    /// `1/(T-1) W (I - J/T) W^t <= bound` with `J` the all-ones matrix.
    ///
    /// The centering matrix has the all-ones vector in its kernel, so the
    /// induced `Phi22` is only negative SEMIdefinite and is rejected unless
    /// a regularization `delta > 0` shifts it to `Phi22 - delta I`.
    pub fn from_sample_covariance(
        bound: SymMatrix,
        t: usize,
        regularization: Option<f64>,
    ) -> Result<Self> {
        let tol = Tolerance::default();
        if !bound.is_psd(&tol) {
            return Err(Error::Definiteness(
                "covariance bound must be positive semidefinite".into(),
            ));
        }
        if t < 2 {
            return Err(Error::Problem("sample covariance needs T >= 2".into()));
        }
        let n = bound.dim();
        let tf = t as f64;
        let centering =
            DMatrix::identity(t, t) - DMatrix::from_element(t, t, 1.0 / tf);
        let mut phi22_m = centering * (-1.0 / (tf - 1.0));
        match regularization {
            Some(delta) if delta > 0.0 => {
                phi22_m -= DMatrix::identity(t, t) * delta;
            }
            Some(delta) => {
                return Err(Error::Problem(format!(
                    "regularization must be > 0, got {delta}"
                )));
            }
            None => {}
        }
        let phi22 = SymMatrix::new(phi22_m)?;
        if !phi22.is_nd(&tol) {
            return Err(Error::Definiteness(
                "sample-covariance Phi22 is only negative semidefinite \
                 (the all-ones vector is in its kernel); pass a regularization \
                 delta > 0 to shift it"
                    .into(),
            ));
        }
        NoiseModel::new(bound, DMatrix::zeros(n, t), phi22)
    }

    /// Lift a model for `r`-dimensional noise known to enter through the
    /// columns of `e`: the admissible set becomes `{E W_hat}` and the model
    /// blocks transform as `(E Phi11 E^t, E Phi12, Phi22)`.
    pub fn embed_subspace(e: &DMatrix<f64>, hat: &NoiseModel) -> Result<Self> {
        if e.ncols() != hat.n() {
            return Err(Error::Dimension(format!(
                "embedding matrix has {} columns, model dimension is {}",
                e.ncols(),
                hat.n()
            )));
        }
        let phi11 = hat.phi11.congruence(e)?;
        let phi12 = e * &hat.phi12;
        NoiseModel::new(phi11, phi12, hat.phi22.clone())
    }

    /// Block-diagonal composition for data collected on multiple intervals:
    /// `Phi11` adds, `Phi12` concatenates, `Phi22` goes block-diagonal, so a
    /// stacked noise matrix whose pieces satisfy the per-interval bounds
    /// satisfies the composed bound.
    pub fn compose(models: &[NoiseModel]) -> Result<Self> {
        let first = models
            .first()
            .ok_or_else(|| Error::Problem("compose needs at least one model".into()))?;
        let n = first.n();
        if models.iter().any(|m| m.n() != n) {
            return Err(Error::Dimension(
                "all composed models must share the noise dimension".into(),
            ));
        }
        let t_total: usize = models.iter().map(|m| m.t()).sum();
        let mut phi11 = SymMatrix::zeros(n);
        let mut phi12 = DMatrix::zeros(n, t_total);
        let mut phi22_m = DMatrix::zeros(t_total, t_total);
        let mut off = 0;
        for m in models {
            phi11 = phi11.add(&m.phi11)?;
            phi12.view_mut((0, off), (n, m.t())).copy_from(&m.phi12);
            phi22_m
                .view_mut((off, off), (m.t(), m.t()))
                .copy_from(m.phi22.as_matrix());
            off += m.t();
        }
        NoiseModel::new(phi11, phi12, SymMatrix::new(phi22_m)?)
    }

    /// Evaluate the bound on a candidate noise matrix. Returns the PSD
    /// verdict and the raw smallest eigenvalue as the margin.
    pub fn check_noise(&self, w: &DMatrix<f64>) -> Result<(bool, f64)> {
        if w.nrows() != self.n() || w.ncols() != self.t() {
            return Err(Error::Dimension(format!(
                "noise matrix must be {}x{}, got {}x{}",
                self.n(),
                self.t(),
                w.nrows(),
                w.ncols()
            )));
        }
        let form = SymMatrix::new(
            self.phi11.as_matrix()
                + &self.phi12 * w.transpose()
                + w * self.phi12.transpose()
                + w * self.phi22.as_matrix() * w.transpose(),
        )?;
        let margin = form.eigenvalues()[0];
        Ok((form.is_psd(&Tolerance::default()), margin))
    }

    /// The model with the roles of the two quadratic terms swapped:
    /// `(-Phi22^-1, 0, -Phi11^-1)`. Admits exactly the transposes of the
    /// matrices the original model admits; requires `Phi11` positive
    /// definite and `Phi12 = 0`.
    pub fn to_transposed_model(&self) -> Result<NoiseModel> {
        let tol = Tolerance::default();
        if !self.phi11.is_pd(&tol) {
            return Err(Error::Definiteness(
                "transposed model requires Phi11 positive definite".into(),
            ));
        }
        if self.phi12.iter().any(|v| *v != 0.0) {
            return Err(Error::Problem(
                "transposed model requires Phi12 = 0".into(),
            ));
        }
        let q11 = self.phi22.inverse()?.scale(-1.0);
        let q22 = self.phi11.inverse()?.scale(-1.0);
        NoiseModel::new(q11, DMatrix::zeros(self.t(), self.n()), q22)
    }

    pub fn n(&self) -> usize {
        self.phi11.dim()
    }

    pub fn t(&self) -> usize {
        self.phi22.dim()
    }

    pub fn phi11(&self) -> &SymMatrix {
        &self.phi11
    }

    pub fn phi12(&self) -> &DMatrix<f64> {
        &self.phi12
    }

    pub fn phi22(&self) -> &SymMatrix {
        &self.phi22
    }

    /// The assembled `(n+T) x (n+T)` block matrix `[Phi11 Phi12; _ Phi22]`.
    pub fn phi(&self) -> SymMatrix {
        let n = self.n();
        let t = self.t();
        let mut m = DMatrix::zeros(n + t, n + t);
        m.view_mut((0, 0), (n, n)).copy_from(self.phi11.as_matrix());
        m.view_mut((0, n), (n, t)).copy_from(&self.phi12);
        m.view_mut((n, 0), (t, n)).copy_from(&self.phi12.transpose());
        m.view_mut((n, n), (t, t)).copy_from(self.phi22.as_matrix());
        SymMatrix::new(m).expect("blocks are finite and symmetric by construction")
    }

    /// Read the `phi11.csv` / `phi12.csv` / `phi22.csv` triple from a
    /// directory.
    pub fn read_dir(dir: &Path) -> Result<Self> {
        let phi11 = SymMatrix::new(io::read_matrix(&dir.join("phi11.csv"))?)?;
        let phi12 = io::read_matrix(&dir.join("phi12.csv"))?;
        let phi22 = SymMatrix::new(io::read_matrix(&dir.join("phi22.csv"))?)?;
        NoiseModel::new(phi11, phi12, phi22)
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        io::write_matrix(&dir.join("phi11.csv"), self.phi11.as_matrix())?;
        io::write_matrix(&dir.join("phi12.csv"), &self.phi12)?;
        io::write_matrix(&dir.join("phi22.csv"), self.phi22.as_matrix())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn energy_bound_scalar_case() {
        // W W^t <= 1 over three samples.
        let m = NoiseModel::from_energy_bound(SymMatrix::identity(1), 3).unwrap();
        assert_eq!(m.n(), 1);
        assert_eq!(m.t(), 3);
        assert_eq!(m.phi22().get(0, 0), -1.0);
        assert_eq!(m.phi12()[(0, 2)], 0.0);
    }

    #[test]
    fn energy_bound_zero_admits_only_zero_noise() {
        let m = NoiseModel::from_energy_bound(SymMatrix::zeros(2), 3).unwrap();
        let (ok, _) = m.check_noise(&DMatrix::zeros(2, 3)).unwrap();
        assert!(ok);
        let mut w = DMatrix::zeros(2, 3);
        w[(0, 0)] = 1e-3;
        let (ok, margin) = m.check_noise(&w).unwrap();
        assert!(!ok);
        assert!(margin < 0.0);
    }

    #[test]
    fn energy_bound_rejects_non_psd_bound() {
        let bound = SymMatrix::diagonal(&[1.0, -1.0]).unwrap();
        assert!(NoiseModel::from_energy_bound(bound, 2).is_err());
    }

    #[test]
    fn sample_norm_bound_dimensions() {
        // eps = 0.5, n = 3, T = 20 gives Phi11 = 10 I.
        let m = NoiseModel::from_sample_norm_bound(0.5, 3, 20).unwrap();
        assert_eq!(m.phi11().get(0, 0), 10.0);
        assert_eq!(m.phi11().get(1, 0), 0.0);

        let m = NoiseModel::from_sample_norm_bound(1.0, 1, 1).unwrap();
        assert_eq!(m.phi11().get(0, 0), 1.0);
        assert!(NoiseModel::from_sample_norm_bound(0.0, 1, 1).is_err());
    }

    #[test]
    fn sample_norm_bound_admits_per_column_bounded_noise() {
        // Any W with every column norm^2 <= eps must pass.
        let eps = 0.7;
        let (n, t) = (3, 8);
        let m = NoiseModel::from_sample_norm_bound(eps, n, t).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let mut w = DMatrix::zeros(n, t);
            for c in 0..t {
                let mut col: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
                let target = eps.sqrt() * rng.random_range(0.0..1.0);
                for v in col.iter_mut() {
                    *v *= target / norm.max(1e-12);
                }
                for r in 0..n {
                    w[(r, c)] = col[r];
                }
            }
            let (ok, margin) = m.check_noise(&w).unwrap();
            assert!(ok, "margin = {margin}");
        }
    }

    #[test]
    fn sample_covariance_rejected_without_regularization() {
        // T = 2: centering matrix has eigenvalues {0, 1}.
        let bound = SymMatrix::identity(1);
        let err = NoiseModel::from_sample_covariance(bound.clone(), 2, None);
        assert!(err.is_err());

        let m = NoiseModel::from_sample_covariance(bound, 2, Some(1e-6)).unwrap();
        assert!(m.phi22().is_nd(&Tolerance::default()));
    }

    #[test]
    fn sample_covariance_centering_spectrum() {
        // Eigenvalues of -(1/(T-1))(I - J/T) for T = 2 are {0, -1}.
        let tf = 2.0;
        let centering = DMatrix::identity(2, 2) - DMatrix::from_element(2, 2, 1.0 / tf);
        let m = SymMatrix::new(centering * (-1.0 / (tf - 1.0))).unwrap();
        let ev = m.eigenvalues();
        assert!((ev[0] + 1.0).abs() < 1e-14);
        assert!(ev[1].abs() < 1e-14);
    }

    #[test]
    fn zero_covariance_bound_admits_only_zero() {
        let m = NoiseModel::from_sample_covariance(SymMatrix::zeros(1), 3, Some(1e-6)).unwrap();
        assert!(m.check_noise(&DMatrix::zeros(1, 3)).unwrap().0);
        assert!(!m.check_noise(&DMatrix::from_element(1, 3, 0.1)).unwrap().0);
    }

    #[test]
    fn check_noise_comparison_fixture() {
        // W = [0.5 0.5 0.5] against the unit energy bound: margin 1 - 0.75.
        let m = NoiseModel::from_energy_bound(SymMatrix::identity(1), 3).unwrap();
        let w = DMatrix::from_row_slice(1, 3, &[0.5, 0.5, 0.5]);
        let (ok, margin) = m.check_noise(&w).unwrap();
        assert!(ok);
        assert!((margin - 0.25).abs() < 1e-12);

        let w_big = DMatrix::from_element(1, 3, 2.0);
        let (ok, margin) = m.check_noise(&w_big).unwrap();
        assert!(!ok);
        assert!((margin + 11.0).abs() < 1e-12); // 1 - 12
    }

    #[test]
    fn check_noise_zero_noise_passes_psd_bound() {
        let m = NoiseModel::from_energy_bound(SymMatrix::identity(2), 4).unwrap();
        assert!(m.check_noise(&DMatrix::zeros(2, 4)).unwrap().0);
    }

    #[test]
    fn embed_identity_is_identity_transform() {
        let hat = NoiseModel::from_energy_bound(SymMatrix::identity(2), 3).unwrap();
        let e = DMatrix::identity(2, 2);
        let m = NoiseModel::embed_subspace(&e, &hat).unwrap();
        assert_eq!(m.phi11().as_matrix(), hat.phi11().as_matrix());
        assert_eq!(m.phi22().as_matrix(), hat.phi22().as_matrix());
    }

    #[test]
    fn embed_column_restricts_noise_to_image() {
        // E = [1; 0]: noise confined to the first coordinate.
        let hat = NoiseModel::from_energy_bound(SymMatrix::identity(1), 3).unwrap();
        let e = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let m = NoiseModel::embed_subspace(&e, &hat).unwrap();

        let w_in = DMatrix::from_row_slice(2, 3, &[0.5, 0.5, 0.5, 0.0, 0.0, 0.0]);
        assert!(m.check_noise(&w_in).unwrap().0);

        let w_out = DMatrix::from_row_slice(2, 3, &[0.0, 0.0, 0.0, 0.1, 0.0, 0.0]);
        assert!(!m.check_noise(&w_out).unwrap().0);
    }

    #[test]
    fn embed_zero_matrix_admits_only_zero_noise() {
        let hat = NoiseModel::from_energy_bound(SymMatrix::identity(1), 2).unwrap();
        let e = DMatrix::zeros(2, 1);
        let m = NoiseModel::embed_subspace(&e, &hat).unwrap();
        assert!(m.check_noise(&DMatrix::zeros(2, 2)).unwrap().0);
        assert!(!m.check_noise(&DMatrix::from_element(2, 2, 0.01)).unwrap().0);
    }

    #[test]
    fn embed_equivalence_on_lifted_noise() {
        // For W = E W_hat the embedded verdict matches the hat verdict.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let hat = NoiseModel::from_energy_bound(
            SymMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0])).unwrap(),
            4,
        )
        .unwrap();
        let e = DMatrix::from_fn(3, 2, |_, _| rng.random_range(-1.0..1.0));
        let m = NoiseModel::embed_subspace(&e, &hat).unwrap();
        for _ in 0..100 {
            let w_hat = DMatrix::from_fn(2, 4, |_, _| rng.random_range(-1.0..1.0));
            let lifted = &e * &w_hat;
            let (a, _) = hat.check_noise(&w_hat).unwrap();
            let (b, _) = m.check_noise(&lifted).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn transposed_model_self_dual_case() {
        let m = NoiseModel::from_energy_bound(SymMatrix::identity(2), 2).unwrap();
        let t = m.to_transposed_model().unwrap();
        assert_eq!(t.phi11().as_matrix(), &DMatrix::identity(2, 2));
        assert_eq!(t.phi22().as_matrix(), &(-DMatrix::identity(2, 2)));
    }

    #[test]
    fn transposed_model_equivalence_random() {
        // For Phi11 > 0, Phi12 = 0 the two quadratic forms admit the same
        // noise matrices (one applied to W, the other to W^t).
        let m = NoiseModel::from_energy_bound(SymMatrix::scaled_identity(2, 2.0), 3).unwrap();
        let t = m.to_transposed_model().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut seen_pass = 0;
        let mut seen_fail = 0;
        for _ in 0..100 {
            let w = DMatrix::from_fn(2, 3, |_, _| rng.random_range(-1.5..1.5));
            let (a, _) = m.check_noise(&w).unwrap();
            let (b, _) = t.check_noise(&w.transpose()).unwrap();
            assert_eq!(a, b);
            if a {
                seen_pass += 1;
            } else {
                seen_fail += 1;
            }
        }
        assert!(seen_pass > 0 && seen_fail > 0, "test must exercise both verdicts");
    }

    #[test]
    fn transposed_model_rejects_singular_phi11() {
        let m = NoiseModel::from_energy_bound(SymMatrix::zeros(2), 2).unwrap();
        assert!(m.to_transposed_model().is_err());
    }

    #[test]
    fn admissible_set_is_bounded() {
        // Every admissible W satisfies a norm bound induced by the model.
        let m = NoiseModel::from_energy_bound(SymMatrix::scaled_identity(2, 3.0), 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..200 {
            let w = DMatrix::from_fn(2, 4, |_, _| rng.random_range(-2.5..2.5));
            let (ok, _) = m.check_noise(&w).unwrap();
            if ok {
                // W W^t <= 3I means every entry is at most sqrt(3).
                assert!(w.iter().all(|v| v.abs() <= 3.0_f64.sqrt() + 1e-12));
            }
        }
    }

    #[test]
    fn compose_energy_bounds() {
        let a = NoiseModel::from_energy_bound(SymMatrix::identity(1), 2).unwrap();
        let b = NoiseModel::from_energy_bound(SymMatrix::scaled_identity(1, 2.0), 3).unwrap();
        let c = NoiseModel::compose(&[a, b]).unwrap();
        assert_eq!(c.t(), 5);
        assert_eq!(c.phi11().get(0, 0), 3.0);
        // Block-diagonal Phi22 stays -I here.
        assert_eq!(c.phi22().as_matrix(), &(-DMatrix::identity(5, 5)));
    }

    #[test]
    fn file_roundtrip() {
        let dir = std::env::temp_dir().join("noise-model-roundtrip-test");
        let m = NoiseModel::from_sample_norm_bound(0.5, 3, 20).unwrap();
        m.write_dir(&dir).unwrap();
        let back = NoiseModel::read_dir(&dir).unwrap();
        assert_eq!(m.phi11().as_matrix(), back.phi11().as_matrix());
        assert_eq!(m.phi22().as_matrix(), back.phi22().as_matrix());
        std::fs::remove_dir_all(&dir).ok();
    }
}
