//! Multiplier searches for implications between quadratic matrix
//! inequalities, and a randomized falsifier for the same implications.
//!
//! The central question is when `[I; Z]^t M [I; Z]` is positive
//! (semi)definite for every `Z` satisfying `[I; Z]^t N [I; Z] >= 0`. Under
//! a generalized Slater condition this reduces to the existence of a
//! scalar multiplier `alpha >= 0` with `M - alpha N >= 0` (or `> 0`, or
//! `>= diag(beta I, 0)` in the structured variant). The searches here find
//! maximal-margin multipliers; [`falsify_implication`] hunts for explicit
//! counterexamples and serves as the independent check on the searches.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::consistency::{sample_solutions, QmiForm, SampleMode};
use crate::error::{Error, Result};
use crate::sdp::{SdpProblem, SolveStatus};
use crate::symmat::{max_singular_value, SymMatrix, Tolerance};

/// Which implication between the two quadratic forms is under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImplicationForm {
    /// Hypothesis `>= 0`, conclusion `>= 0`.
    Nonstrict,
    /// Hypothesis `> 0`, conclusion `>= 0`.
    StrictHypothesis,
    /// Hypothesis `>= 0`, conclusion `> 0`.
    Strict,
}

/// A multiplier certifying a QMI implication.
#[derive(Debug, Clone)]
pub struct MultiplierCertificate {
    pub alpha: f64,
    /// Present only for the structured form.
    pub beta: Option<f64>,
    /// Smallest eigenvalue of the certified matrix.
    pub margin: f64,
    pub form: ImplicationForm,
}

/// Evaluate `M11 + M12 Z + Z^t M12^t + Z^t M22 Z`.
pub fn qmi_eval(f: &QmiForm, z: &DMatrix<f64>) -> Result<SymMatrix> {
    if z.nrows() != f.q() || z.ncols() != f.k() {
        return Err(Error::Dimension(format!(
            "Z must be {}x{}, got {}x{}",
            f.q(),
            f.k(),
            z.nrows(),
            z.ncols()
        )));
    }
    let m12 = f.block12();
    let m12_z = &m12 * z;
    SymMatrix::new(
        f.block11().as_matrix() + &m12_z + m12_z.transpose() + z.transpose() * f.block22().as_matrix() * z,
    )
}

fn check_dims(m: &QmiForm, n: &QmiForm) -> Result<()> {
    if m.k() != n.k() || m.q() != n.q() {
        return Err(Error::Dimension(format!(
            "form partitions differ: ({}, {}) vs ({}, {})",
            m.k(),
            m.q(),
            n.k(),
            n.q()
        )));
    }
    Ok(())
}

/// `g(alpha) = lambda_min(M - alpha N)`.
fn multiplier_margin(m: &SymMatrix, n: &SymMatrix, alpha: f64) -> f64 {
    SymMatrix::new(m.as_matrix() - n.as_matrix() * alpha)
        .expect("difference of symmetric matrices")
        .eigenvalues()[0]
}

const ALPHA_CAP: f64 = 1e12;

/// Maximize the concave `g(alpha) = lambda_min(M - alpha N)` over
/// `alpha >= 0`: bracket by doubling from `[0, 1]` until `g` decreases,
/// then golden-section to width 1e-12, comparing against the endpoint
/// `alpha = 0`.
fn maximize_margin(m: &SymMatrix, n: &SymMatrix) -> (f64, f64) {
    let g = |a: f64| multiplier_margin(m, n, a);

    let mut prev_alpha = 0.0;
    let mut prev_val = g(0.0);
    let mut lo = 0.0;
    let hi;
    let mut alpha = 1.0;
    loop {
        let val = g(alpha);
        if val < prev_val {
            hi = alpha;
            break;
        }
        lo = prev_alpha;
        prev_alpha = alpha;
        prev_val = val;
        alpha *= 2.0;
        if alpha > ALPHA_CAP {
            // g still nondecreasing at the cap; take the cap as maximizer.
            return (prev_alpha, prev_val);
        }
    }

    // Golden-section search for the maximum on [lo, hi].
    let inv_phi = 0.5 * (5.0_f64.sqrt() - 1.0);
    let mut a = lo;
    let mut b = hi;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = g(x1);
    let mut f2 = g(x2);
    while b - a > 1e-12 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = g(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = g(x1);
        }
    }
    let best_alpha = 0.5 * (a + b);
    let best = g(best_alpha);
    let at_zero = g(0.0);
    if at_zero > best {
        (0.0, at_zero)
    } else {
        (best_alpha, best)
    }
}

/// Search for a scalar multiplier `alpha >= 0` with `M - alpha N >= 0`
/// (nonstrict conclusion) or `M - alpha N > 0` (strict conclusion).
///
/// Absence of a certificate is a valid outcome, not an error.
pub fn find_multiplier(
    m: &QmiForm,
    n: &QmiForm,
    form: ImplicationForm,
) -> Result<Option<MultiplierCertificate>> {
    check_dims(m, n)?;
    let tol = Tolerance::default();
    let (alpha, margin) = maximize_margin(m.mat(), n.mat());
    let certified = SymMatrix::new(m.mat().as_matrix() - n.mat().as_matrix() * alpha)
        .expect("difference of symmetric matrices");
    let scale = certified.spectral_scale();
    let accept = match form {
        ImplicationForm::Nonstrict | ImplicationForm::StrictHypothesis => {
            margin >= -tol.eig_zero * scale
        }
        ImplicationForm::Strict => margin > tol.strict_margin * scale,
    };
    Ok(accept.then_some(MultiplierCertificate {
        alpha,
        beta: None,
        margin,
        form,
    }))
}

/// Search for `alpha >= 0`, `beta > 0` with
/// `M - alpha N >= diag(beta I_k, 0)`, by maximizing `beta` as a
/// two-variable semidefinite program.
pub fn find_multiplier_structured(
    m: &QmiForm,
    n: &QmiForm,
) -> Result<Option<MultiplierCertificate>> {
    check_dims(m, n)?;
    let tol = Tolerance::default();
    let k = m.k();
    let dim = m.mat().dim();

    let mut pb = SdpProblem::new();
    let alpha = pb.scalar("alpha")?;
    let beta = pb.scalar("beta")?;
    pb.maximize(&[(pb.unknown(beta, 0, 0)?, 1.0)]);
    // M - alpha N - diag(beta I_k, 0) >= 0
    let blk = pb.psd_block("certificate", dim)?;
    pb.block_constant(blk, m.mat().as_matrix().clone())?;
    pb.block_scalar_term(blk, alpha, n.mat().as_matrix() * -1.0)?;
    let mut beta_coeff = DMatrix::zeros(dim, dim);
    for i in 0..k {
        beta_coeff[(i, i)] = -1.0;
    }
    pb.block_scalar_term(blk, beta, beta_coeff)?;
    // alpha >= 0
    let pos = pb.psd_block("alpha_nonneg", 1)?;
    pb.block_scalar_term(pos, alpha, DMatrix::from_element(1, 1, 1.0))?;

    let (assignment, report) = pb.solve(&Default::default())?;
    if report.status != SolveStatus::Optimal {
        return Ok(None);
    }
    let assignment = assignment.expect("optimal solve carries an assignment");
    let alpha_v = assignment.scalar(alpha)?;
    let beta_v = assignment.scalar(beta)?;
    let scale = m.mat().spectral_scale().max(n.mat().spectral_scale());
    if beta_v <= tol.strict_margin * scale {
        return Ok(None);
    }
    let mut certified = m.mat().as_matrix() - n.mat().as_matrix() * alpha_v;
    for i in 0..k {
        certified[(i, i)] -= beta_v;
    }
    let margin = SymMatrix::new(certified)?.eigenvalues()[0];
    Ok(Some(MultiplierCertificate {
        alpha: alpha_v.max(0.0),
        beta: Some(beta_v),
        margin,
        form: ImplicationForm::Strict,
    }))
}

/// Truth value of a precondition that may be undecidable from the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Holds,
    Fails,
    /// The sufficient check is inconclusive (e.g. boundedness of the
    /// solution set when `N22` is only negative semidefinite).
    Unknown,
}

/// Which multiplier lemma's preconditions to check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lemma {
    /// Strict lemma for bounded solution sets.
    StrictBounded,
    /// Structured lemma: `M22 <= 0`, `N22 <= 0`, `ker N22 <= ker N12`.
    Structured,
    /// Nonsingular corollary: `N` nonsingular, `N11 >= 0`, `N22 < 0`.
    NonsingularCorollary,
}

#[derive(Debug, Clone)]
pub struct PreconditionReport {
    pub lemma: Lemma,
    pub conditions: Vec<(&'static str, Verdict)>,
}

impl PreconditionReport {
    pub fn all_hold(&self) -> bool {
        self.conditions.iter().all(|(_, v)| *v == Verdict::Holds)
    }

    pub fn verdict(&self, name: &str) -> Option<Verdict> {
        self.conditions
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, v)| *v)
    }
}

fn kernel_inclusion(n22: &SymMatrix, n12: &DMatrix<f64>, tol: &Tolerance) -> Verdict {
    let eig = n22.eig();
    let scale = n22.spectral_scale();
    let mut ok = true;
    for (i, lam) in eig.values.iter().enumerate() {
        if lam.abs() <= tol.eig_zero * scale {
            let resid = (n12 * eig.vectors.column(i)).norm();
            if resid > tol.psd_margin * scale.max(n12.norm()) {
                ok = false;
            }
        }
    }
    if ok {
        Verdict::Holds
    } else {
        Verdict::Fails
    }
}

/// Check the assumptions of the selected lemma on concrete `(M, N)`.
pub fn check_theorem_preconditions(m: &QmiForm, n: &QmiForm, lemma: Lemma) -> Result<PreconditionReport> {
    check_dims(m, n)?;
    let tol = Tolerance::default();
    let to_verdict = |b: bool| if b { Verdict::Holds } else { Verdict::Fails };
    let n22 = n.block22();
    let conditions = match lemma {
        Lemma::StrictBounded => {
            let bounded = if n22.is_nd(&tol) {
                Verdict::Holds
            } else {
                // N22 <= 0 only: boundedness cannot be decided this way.
                Verdict::Unknown
            };
            vec![("solution_set_bounded", bounded)]
        }
        Lemma::Structured => vec![
            ("m22_nsd", to_verdict(m.block22().is_nsd(&tol))),
            ("n22_nsd", to_verdict(n22.is_nsd(&tol))),
            (
                "ker_n22_in_ker_n12",
                kernel_inclusion(&n22, &n.block12(), &tol),
            ),
        ],
        Lemma::NonsingularCorollary => {
            let eig = n.mat().eigenvalues();
            let scale = n.mat().spectral_scale();
            let nonsingular = eig.iter().all(|v| v.abs() > tol.eig_zero * scale);
            vec![
                ("n_nonsingular", to_verdict(nonsingular)),
                ("n11_psd", to_verdict(n.block11().is_psd(&tol))),
                ("n22_nd", to_verdict(n22.is_nd(&tol))),
            ]
        }
    };
    Ok(PreconditionReport { lemma, conditions })
}

/// Result of a falsification run.
#[derive(Debug, Clone)]
pub enum FalsifyOutcome {
    /// A matrix in the hypothesis set violating the conclusion.
    Counterexample(DMatrix<f64>),
    /// Budget exhausted without a violation.
    NoneFound { tested: usize },
    /// Rejection sampling fell below the acceptance floor; the hypothesis
    /// set could not be explored.
    Inconclusive { accepted: usize, attempted: usize },
}

impl FalsifyOutcome {
    pub fn counterexample(&self) -> Option<&DMatrix<f64>> {
        match self {
            FalsifyOutcome::Counterexample(z) => Some(z),
            _ => None,
        }
    }
}

/// Hunt for `Z` in the hypothesis set whose conclusion form fails the
/// target definiteness.
///
/// Draws from the solution set of `N` by the ellipsoidal parameterization
/// when `N22` is negative definite, alternating interior and boundary
/// draws; otherwise falls back to rejection sampling from scaled Gaussians
/// with a 0.1% acceptance floor.
pub fn falsify_implication(
    m: &QmiForm,
    n: &QmiForm,
    budget: usize,
    seed: u64,
    form: ImplicationForm,
) -> Result<FalsifyOutcome> {
    check_dims(m, n)?;
    let tol = Tolerance::default();
    let scale_mn = m.mat().spectral_scale().max(n.mat().spectral_scale());

    let strict_hypothesis = form == ImplicationForm::StrictHypothesis;
    let hypothesis_ok = |z: &DMatrix<f64>| -> bool {
        match qmi_eval(n, z) {
            Ok(v) => {
                if strict_hypothesis {
                    v.is_pd(&tol)
                } else {
                    v.is_psd(&tol)
                }
            }
            Err(_) => false,
        }
    };
    let is_counterexample = |z: &DMatrix<f64>| -> Result<bool> {
        let val = qmi_eval(m, z)?;
        let lam_min = val.eigenvalues()[0];
        let z_gain = 1.0 + max_singular_value(z).powi(2);
        Ok(match form {
            ImplicationForm::Nonstrict | ImplicationForm::StrictHypothesis => {
                lam_min < -tol.psd_margin * z_gain * scale_mn.max(val.spectral_scale())
            }
            ImplicationForm::Strict => lam_min < -tol.eig_zero * val.spectral_scale(),
        })
    };

    let n22 = n.block22();
    if n22.is_nd(&tol) {
        // Deterministic first probe: the analytic center.
        if let Ok(center) = n22.solve(&n.block12().transpose()) {
            let z = -center;
            if hypothesis_ok(&z) && is_counterexample(&z)? {
                return Ok(FalsifyOutcome::Counterexample(z));
            }
        }
        let half = budget / 2;
        let interior = sample_solutions(n, half, seed, SampleMode::Interior)?;
        let boundary = sample_solutions(n, budget - half, seed ^ 0x9e3779b9, SampleMode::Boundary)?;
        let mut tested = 0;
        for z in interior.iter().chain(boundary.iter()) {
            tested += 1;
            if !hypothesis_ok(z) {
                continue;
            }
            if is_counterexample(z)? {
                return Ok(FalsifyOutcome::Counterexample(z.clone()));
            }
        }
        return Ok(FalsifyOutcome::NoneFound { tested });
    }

    // Unbounded (or undecided) hypothesis set: rejection sampling.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scales: [f64; 7] = [1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3];
    let mut accepted = 0usize;
    let mut attempted = 0usize;
    while attempted < budget {
        attempted += 1;
        let s = scales[attempted % scales.len()];
        let z = DMatrix::from_fn(n.q(), n.k(), |_, _| {
            s * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
        });
        if !hypothesis_ok(&z) {
            continue;
        }
        accepted += 1;
        if is_counterexample(&z)? {
            return Ok(FalsifyOutcome::Counterexample(z));
        }
    }
    if (accepted as f64) < 0.001 * attempted as f64 {
        return Ok(FalsifyOutcome::Inconclusive {
            accepted,
            attempted,
        });
    }
    Ok(FalsifyOutcome::NoneFound { tested: accepted })
}
