//! The set of systems consistent with the measured data, characterized as
//! a quadratic matrix inequality.
//!
//! A system `(A, B)` explains the data exactly when the reconstructed
//! noise `X+ - A X- - B U-` satisfies the noise bound; eliminating the
//! noise yields a single QMI in `Z = [A^t; B^t]` whose coefficient matrix
//! `N` is assembled here from the data and the noise model. The module
//! also checks the generalized Slater condition required by the multiplier
//! lemmas and samples members of the consistency set for Monte Carlo
//! verification.

use nalgebra::DMatrix;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::SystemPair;
use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::symmat::{max_singular_value, numerical_rank, SymMatrix, Tolerance};

/// A quadratic matrix inequality `[I; Z]^t M [I; Z] >= 0` over `q x k`
/// matrices `Z`, stored as the symmetric coefficient matrix together with
/// the size `k` of the identity block.
#[derive(Debug, Clone)]
pub struct QmiForm {
    mat: SymMatrix,
    k: usize,
}

impl QmiForm {
    pub fn new(mat: SymMatrix, k: usize) -> Result<Self> {
        if k < 1 || k >= mat.dim() {
            return Err(Error::Dimension(format!(
                "identity block size {k} must satisfy 1 <= k < dim = {}",
                mat.dim()
            )));
        }
        Ok(QmiForm { mat, k })
    }

    pub fn mat(&self) -> &SymMatrix {
        &self.mat
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of rows of the matrix variable `Z`.
    pub fn q(&self) -> usize {
        self.mat.dim() - self.k
    }

    /// Leading `k x k` block.
    pub fn block11(&self) -> SymMatrix {
        SymMatrix::new(self.mat.as_matrix().view((0, 0), (self.k, self.k)).into_owned())
            .expect("principal block of a symmetric matrix")
    }

    /// Off-diagonal `k x q` block.
    pub fn block12(&self) -> DMatrix<f64> {
        self.mat
            .as_matrix()
            .view((0, self.k), (self.k, self.q()))
            .into_owned()
    }

    /// Trailing `q x q` block.
    pub fn block22(&self) -> SymMatrix {
        SymMatrix::new(
            self.mat
                .as_matrix()
                .view((self.k, self.k), (self.q(), self.q()))
                .into_owned(),
        )
        .expect("principal block of a symmetric matrix")
    }
}

/// `N = [I X+; 0 -X-; 0 -U-] Phi [I X+; 0 -X-; 0 -U-]^t`, the coefficient
/// matrix of the consistency QMI, with identity block size `n`.
pub fn build_n(
    x_plus: &DMatrix<f64>,
    x_minus: &DMatrix<f64>,
    u_minus: &DMatrix<f64>,
    model: &NoiseModel,
) -> Result<QmiForm> {
    let n = x_plus.nrows();
    let t = x_plus.ncols();
    if x_minus.nrows() != n || x_minus.ncols() != t || u_minus.ncols() != t {
        return Err(Error::Dimension(
            "data matrices must share the horizon and state dimension".into(),
        ));
    }
    if model.n() != n || model.t() != t {
        return Err(Error::Dimension(format!(
            "noise model is {}x{}, data needs {n}x{t}",
            model.n(),
            model.t()
        )));
    }
    let stack = data_stack(x_plus, x_minus, u_minus);
    let nmat = model.phi().congruence(&stack)?;
    QmiForm::new(nmat, n)
}

fn data_stack(
    x_plus: &DMatrix<f64>,
    x_minus: &DMatrix<f64>,
    u_minus: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = x_plus.nrows();
    let t = x_plus.ncols();
    let m = u_minus.nrows();
    let mut s = DMatrix::zeros(2 * n + m, n + t);
    s.view_mut((0, 0), (n, n)).copy_from(&DMatrix::identity(n, n));
    s.view_mut((0, n), (n, t)).copy_from(x_plus);
    s.view_mut((n, n), (n, t)).copy_from(&(-x_minus));
    s.view_mut((2 * n, n), (m, t)).copy_from(&(-u_minus));
    s
}

/// Membership test: `(A, B)` lies in the consistency set iff the QMI holds
/// at `Z = [A^t; B^t]`. Returns the verdict and the smallest eigenvalue of
/// the evaluated form as the margin.
pub fn membership(sys: &SystemPair, n_form: &QmiForm) -> Result<(bool, f64)> {
    let z = system_to_z(sys);
    if z.nrows() != n_form.q() || z.ncols() != n_form.k() {
        return Err(Error::Dimension(format!(
            "system gives Z of {}x{}, form expects {}x{}",
            z.nrows(),
            z.ncols(),
            n_form.q(),
            n_form.k()
        )));
    }
    let val = crate::slemma::qmi_eval(n_form, &z)?;
    let margin = val.eigenvalues()[0];
    Ok((val.is_psd(&Tolerance::default()), margin))
}

/// Stack a system as the QMI variable `Z = [A^t; B^t]`.
pub fn system_to_z(sys: &SystemPair) -> DMatrix<f64> {
    let n = sys.state_dim();
    let m = sys.input_dim();
    let mut z = DMatrix::zeros(n + m, n);
    z.view_mut((0, 0), (n, n)).copy_from(&sys.a.transpose());
    z.view_mut((n, 0), (m, n)).copy_from(&sys.b.transpose());
    z
}

/// Recover `(A, B)` from the QMI variable.
pub fn z_to_system(z: &DMatrix<f64>, n: usize) -> Result<SystemPair> {
    if z.ncols() != n || z.nrows() < n {
        return Err(Error::Dimension(format!(
            "Z must be (n+m)x{n} with n = {n}, got {}x{}",
            z.nrows(),
            z.ncols()
        )));
    }
    let m = z.nrows() - n;
    SystemPair::new(
        z.view((0, 0), (n, n)).transpose().into_owned(),
        z.view((n, 0), (m, n)).transpose().into_owned(),
    )
}

/// Outcome of the generalized Slater check on a consistency form.
#[derive(Debug, Clone)]
pub struct SlaterReport {
    /// Eigenvalues of `N` counted strictly positive.
    pub positive_eigenvalues: usize,
    /// A matrix making the form strictly positive definite, when found.
    pub certificate: Option<DMatrix<f64>>,
}

impl SlaterReport {
    pub fn satisfied(&self) -> bool {
        self.certificate.is_some()
    }
}

/// Check the generalized Slater condition: find `Z` with
/// `[I; Z]^t N [I; Z] > 0`.
///
/// Counts the positive eigenvalues of `N` (at least `n` of them is the
/// simple data-side sufficient check), then searches for an explicit
/// certificate: the analytic center `-N22^-1 N12^t` first, followed by
/// seeded Gaussian candidates swept over a logarithmic scale grid.
pub fn slater_check(n_form: &QmiForm, n: usize) -> SlaterReport {
    let tol = Tolerance::default();
    let scale = n_form.mat.spectral_scale();
    let positive = n_form
        .mat
        .eigenvalues()
        .iter()
        .filter(|v| **v > tol.strict_margin * scale)
        .count();

    let mut report = SlaterReport {
        positive_eigenvalues: positive,
        certificate: None,
    };
    if positive < n {
        return report;
    }

    let is_cert = |z: &DMatrix<f64>| -> bool {
        crate::slemma::qmi_eval(n_form, z)
            .map(|v| v.is_pd(&tol))
            .unwrap_or(false)
    };

    // Analytic center of the solution ellipsoid when N22 is invertible.
    let n22 = n_form.block22();
    if let Ok(center_t) = n22.solve(&n_form.block12().transpose()) {
        let z_bar = -center_t;
        if is_cert(&z_bar) {
            report.certificate = Some(z_bar);
            return report;
        }
    }

    // Randomized fallback: 1000 candidates over scales 1e-3 .. 1e3.
    let mut rng = ChaCha8Rng::seed_from_u64(0x534c4154);
    let scales: [f64; 7] = [1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3];
    let per_scale = 1000 / scales.len();
    for s in scales {
        for _ in 0..per_scale {
            let z = DMatrix::from_fn(n_form.q(), n_form.k(), |_, _| {
                s * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
            });
            if is_cert(&z) {
                report.certificate = Some(z);
                return report;
            }
        }
    }
    report
}

/// The consistency set is bounded iff `[X-; U-]` has full row rank.
pub fn is_bounded(x_minus: &DMatrix<f64>, u_minus: &DMatrix<f64>) -> bool {
    let n = x_minus.nrows();
    let m = u_minus.nrows();
    let mut stacked = DMatrix::zeros(n + m, x_minus.ncols());
    stacked.view_mut((0, 0), (n, x_minus.ncols())).copy_from(x_minus);
    stacked.view_mut((n, 0), (m, u_minus.ncols())).copy_from(u_minus);
    numerical_rank(&stacked, &Tolerance::default()) == n + m
}

/// Conservative bound on the squared spectral norm of any solution of the
/// QMI, available when `N22` is negative definite (bounded solution set):
/// every solution satisfies
/// `|Z| <= |Zc| + sqrt(lambda_max(Delta) / lambda_min(-N22))`.
pub fn solution_radius_sq(n_form: &QmiForm) -> Option<f64> {
    let tol = Tolerance::default();
    let n22 = n_form.block22();
    if !n22.is_nd(&tol) {
        return None;
    }
    let n12 = n_form.block12();
    let center = -n22.solve(&n12.transpose()).ok()?;
    let delta = SymMatrix::new(
        n_form.block11().as_matrix() - &n12 * n22.solve(&n12.transpose()).ok()?,
    )
    .ok()?;
    let lam_max_delta = delta.eigenvalues().last().copied()?.max(0.0);
    let lam_min_neg_n22 = n22.scale(-1.0).eigenvalues()[0];
    let radius = max_singular_value(&center) + (lam_max_delta / lam_min_neg_n22).sqrt();
    Some(radius * radius)
}

/// Where to draw samples of the solution set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    Interior,
    Boundary,
}

/// Sample matrices satisfying the QMI, using the ellipsoidal
/// parameterization
/// `Z = Zc + (-N22)^(-1/2) V Delta^(1/2)` with `Zc = -N22^-1 N12^t`,
/// `Delta` the Schur complement `N11 - N12 N22^-1 N12^t`, and `V` a random
/// matrix with largest singular value at most one (exactly one on the
/// boundary). Requires `N22` negative definite.
pub fn sample_solutions(
    n_form: &QmiForm,
    count: usize,
    seed: u64,
    mode: SampleMode,
) -> Result<Vec<DMatrix<f64>>> {
    let tol = Tolerance::default();
    let n22 = n_form.block22();
    if !n22.is_nd(&tol) {
        return Err(Error::Definiteness(
            "sampling requires N22 negative definite (bounded solution set)".into(),
        ));
    }
    let n12 = n_form.block12();
    let center = -n22.solve(&n12.transpose())?;
    let delta_raw = SymMatrix::new(
        n_form.block11().as_matrix() - &n12 * n22.solve(&n12.transpose())?,
    )?;
    // Floating-point Schur complements may leave tiny negative eigenvalues;
    // sqrt_psd clips them and rejects anything beyond tolerance.
    let delta_half = delta_raw.sqrt_psd(&tol).map_err(|_| {
        Error::Definiteness(format!(
            "solution set is empty: Schur complement has lambda_min = {:.3e}",
            delta_raw.eigenvalues()[0]
        ))
    })?;
    let neg_n22_inv_half = {
        let eig = n22.scale(-1.0).eig();
        let mut d = DMatrix::zeros(n22.dim(), n22.dim());
        for (i, &lam) in eig.values.iter().enumerate() {
            d[(i, i)] = 1.0 / lam.sqrt();
        }
        &eig.vectors * d * eig.vectors.transpose()
    };

    let q = n_form.q();
    let k = n_form.k();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let g = DMatrix::from_fn(q, k, |_, _| {
            <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
        });
        let sigma = max_singular_value(&g).max(1e-300);
        let target = match mode {
            SampleMode::Boundary => 1.0,
            SampleMode::Interior => rng.random_range(0.0..1.0),
        };
        let v = g * (target / sigma);
        out.push(&center + &neg_n22_inv_half * v * delta_half.as_matrix());
    }
    Ok(out)
}

/// Sample members of the consistency set as systems.
pub fn sample_sigma(
    n_form: &QmiForm,
    count: usize,
    seed: u64,
    mode: SampleMode,
) -> Result<Vec<SystemPair>> {
    sample_solutions(n_form, count, seed, mode)?
        .iter()
        .map(|z| z_to_system(z, n_form.k()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::comparison_fixture;

    fn fixture_form() -> QmiForm {
        let p = comparison_fixture().partition();
        let model = NoiseModel::from_energy_bound(SymMatrix::identity(1), 3).unwrap();
        build_n(&p.x_plus, &p.x_minus, &p.u_minus, &model).unwrap()
    }

    #[test]
    fn build_n_comparison_fixture_exact() {
        let f = fixture_form();
        let expect = [0.0, 0.0, 0.5, 0.0, -1.0, 1.5, 0.5, 1.5, -2.75];
        for i in 0..3 {
            for j in 0..3 {
                assert!(
                    (f.mat().get(i, j) - expect[3 * i + j]).abs() < 1e-14,
                    "N[{i}][{j}] = {}",
                    f.mat().get(i, j)
                );
            }
        }
        assert_eq!(f.k(), 1);
        assert_eq!(f.q(), 2);
    }

    #[test]
    fn build_n_zero_data_gives_diag_phi11_zero() {
        let model = NoiseModel::from_energy_bound(SymMatrix::identity(2), 4).unwrap();
        let f = build_n(
            &DMatrix::zeros(2, 4),
            &DMatrix::zeros(2, 4),
            &DMatrix::zeros(1, 4),
            &model,
        )
        .unwrap();
        let mut expect = DMatrix::zeros(5, 5);
        expect.view_mut((0, 0), (2, 2)).copy_from(&DMatrix::identity(2, 2));
        assert_eq!(f.mat().as_matrix(), &expect);
    }

    #[test]
    fn n22_is_negative_semidefinite_on_random_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let x_plus = DMatrix::from_fn(2, 6, |_, _| rng.random_range(-1.0..1.0));
            let x_minus = DMatrix::from_fn(2, 6, |_, _| rng.random_range(-1.0..1.0));
            let u_minus = DMatrix::from_fn(1, 6, |_, _| rng.random_range(-1.0..1.0));
            let model = NoiseModel::from_energy_bound(SymMatrix::identity(2), 6).unwrap();
            let f = build_n(&x_plus, &x_minus, &u_minus, &model).unwrap();
            assert!(f.block22().is_nsd(&Tolerance::default()));
        }
    }

    #[test]
    fn kernel_of_n22_inside_kernel_of_n12() {
        // ker N22 <= ker N12 holds for every data-built form.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            // Rank-deficient data: only 3 samples for n + m = 3, one zeroed.
            let mut x_minus = DMatrix::from_fn(2, 3, |_, _| rng.random_range(-1.0..1.0));
            x_minus.set_column(2, &nalgebra::DVector::zeros(2));
            let mut u_minus = DMatrix::from_fn(1, 3, |_, _| rng.random_range(-1.0..1.0));
            u_minus[(0, 2)] = 0.0;
            let x_plus = DMatrix::from_fn(2, 3, |_, _| rng.random_range(-1.0..1.0));
            let model = NoiseModel::from_energy_bound(SymMatrix::identity(2), 3).unwrap();
            let f = build_n(&x_plus, &x_minus, &u_minus, &model).unwrap();

            let n22 = f.block22();
            let n12 = f.block12();
            let eig = n22.eig();
            let scale = n22.spectral_scale();
            for (i, lam) in eig.values.iter().enumerate() {
                if lam.abs() <= 1e-9 * scale {
                    let v = eig.vectors.column(i);
                    let resid = (&n12 * v).norm();
                    assert!(resid <= 1e-8 * scale, "resid = {resid}");
                }
            }
        }
    }

    #[test]
    fn membership_true_system_on_fixture() {
        let f = fixture_form();
        let sys = SystemPair::new(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        let (ok, margin) = membership(&sys, &f).unwrap();
        assert!(ok);
        assert!((margin - 0.25).abs() < 1e-12);
    }

    #[test]
    fn membership_rejects_distant_system() {
        let f = fixture_form();
        let sys = SystemPair::new(
            DMatrix::from_element(1, 1, 10.0),
            DMatrix::from_element(1, 1, 10.0),
        )
        .unwrap();
        let (ok, _) = membership(&sys, &f).unwrap();
        assert!(!ok);
    }

    #[test]
    fn membership_agrees_with_noise_reconstruction() {
        // Lemma-style equivalence: QMI membership == noise-bound check on
        // the reconstructed W, for random systems and datasets.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..1000 {
            let n = 1 + (trial % 3);
            let m = 1 + (trial % 2);
            let t = n + m + 2;
            let x_plus = DMatrix::from_fn(n, t, |_, _| rng.random_range(-1.0..1.0));
            let x_minus = DMatrix::from_fn(n, t, |_, _| rng.random_range(-1.0..1.0));
            let u_minus = DMatrix::from_fn(m, t, |_, _| rng.random_range(-1.0..1.0));
            let model =
                NoiseModel::from_energy_bound(SymMatrix::scaled_identity(n, 2.0), t).unwrap();
            let f = build_n(&x_plus, &x_minus, &u_minus, &model).unwrap();

            let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.5..1.5));
            let b = DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.5..1.5));
            let sys = SystemPair::new(a.clone(), b.clone()).unwrap();

            let (via_qmi, margin_qmi) = membership(&sys, &f).unwrap();
            let w = &x_plus - &a * &x_minus - &b * &u_minus;
            let (via_noise, margin_noise) = model.check_noise(&w).unwrap();

            assert_eq!(via_qmi, via_noise, "trial {trial}");
            let scale = margin_qmi.abs().max(margin_noise.abs()).max(1.0);
            assert!(
                (margin_qmi - margin_noise).abs() <= 1e-9 * scale,
                "margins differ: {margin_qmi} vs {margin_noise}"
            );
        }
    }

    #[test]
    fn slater_fixture_has_one_positive_eigenvalue_and_certificate() {
        let f = fixture_form();
        let report = slater_check(&f, 1);
        assert_eq!(report.positive_eigenvalues, 1);
        assert!(report.satisfied());
        let z = report.certificate.unwrap();
        let val = crate::slemma::qmi_eval(&f, &z).unwrap();
        assert!(val.is_pd(&Tolerance::default()));
    }

    #[test]
    fn slater_trivial_cases() {
        // N = diag(I, -I): Z = 0 works.
        let f = QmiForm::new(SymMatrix::diagonal(&[1.0, 1.0, -1.0]).unwrap(), 2).unwrap();
        let report = slater_check(&f, 2);
        assert!(report.satisfied());

        // N = -I: no certificate exists.
        let f = QmiForm::new(SymMatrix::scaled_identity(3, -1.0), 1).unwrap();
        let report = slater_check(&f, 1);
        assert_eq!(report.positive_eigenvalues, 0);
        assert!(!report.satisfied());
    }

    #[test]
    fn bounded_fixture_and_degenerate() {
        let p = comparison_fixture().partition();
        assert!(is_bounded(&p.x_minus, &p.u_minus));
        assert!(!is_bounded(&DMatrix::zeros(1, 3), &DMatrix::zeros(1, 3)));
    }

    #[test]
    fn bounded_random_gaussian_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let x_minus = DMatrix::from_fn(3, 8, |_, _| rng.random_range(-1.0..1.0));
            let u_minus = DMatrix::from_fn(2, 8, |_, _| rng.random_range(-1.0..1.0));
            assert!(is_bounded(&x_minus, &u_minus));
        }
    }

    #[test]
    fn sample_center_passes_membership() {
        let f = fixture_form();
        let n22 = f.block22();
        let center = -n22.solve(&f.block12().transpose()).unwrap();
        let sys = z_to_system(&center, 1).unwrap();
        let (ok, _) = membership(&sys, &f).unwrap();
        assert!(ok);
    }

    #[test]
    fn all_interior_samples_pass_membership() {
        let f = fixture_form();
        let samples = sample_sigma(&f, 1000, 99, SampleMode::Interior).unwrap();
        assert_eq!(samples.len(), 1000);
        for sys in &samples {
            let (ok, _) = membership(sys, &f).unwrap();
            assert!(ok);
        }
    }

    #[test]
    fn boundary_samples_have_vanishing_margin() {
        let f = fixture_form();
        let scale = f.mat().spectral_scale();
        let samples = sample_sigma(&f, 200, 7, SampleMode::Boundary).unwrap();
        for sys in &samples {
            let (ok, margin) = membership(sys, &f).unwrap();
            assert!(ok, "margin = {margin}");
            assert!(margin.abs() <= 1e-6 * scale, "margin = {margin}");
        }
    }

    #[test]
    fn sampling_requires_bounded_set() {
        // Zero data: N22 = 0 is not negative definite.
        let model = NoiseModel::from_energy_bound(SymMatrix::identity(1), 3).unwrap();
        let f = build_n(
            &DMatrix::zeros(1, 3),
            &DMatrix::zeros(1, 3),
            &DMatrix::zeros(1, 3),
            &model,
        )
        .unwrap();
        assert!(sample_sigma(&f, 10, 1, SampleMode::Interior).is_err());
    }

    #[test]
    fn stacked_datasets_preserve_membership_of_true_system() {
        // Two intervals from the same system, each with admissible noise;
        // the composed model keeps the true system in the consistency set.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let sys = SystemPair::new(
            DMatrix::from_row_slice(2, 2, &[0.5, 0.2, -0.1, 0.3]),
            DMatrix::from_column_slice(2, 1, &[1.0, 0.5]),
        )
        .unwrap();
        let mut sets = Vec::new();
        let mut models = Vec::new();
        for t in [4usize, 6] {
            let x0 = nalgebra::DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
            let u = DMatrix::from_fn(1, t, |_, _| rng.random_range(-1.0..1.0));
            let w = DMatrix::from_fn(2, t, |_, _| rng.random_range(-0.2..0.2));
            sets.push(crate::data::simulate(&sys, &x0, &u, &w).unwrap());
            // Per-interval energy bound safely above the realized energy.
            models.push(
                NoiseModel::from_energy_bound(SymMatrix::scaled_identity(2, 0.2 * t as f64), t)
                    .unwrap(),
            );
        }
        let stacked = crate::data::stack(&sets).unwrap();
        let model = NoiseModel::compose(&models).unwrap();
        let f = build_n(&stacked.x_plus, &stacked.x_minus, &stacked.u_minus, &model).unwrap();
        let (ok, _) = membership(&sys, &f).unwrap();
        assert!(ok);
    }
}
