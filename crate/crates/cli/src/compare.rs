//! The two competing LMI design procedures used in the comparison study.
//! Both certify stabilization through a data-based closed-loop
//! parameterization with decision variables of dimension `T x n`; on the
//! comparison fixture neither admits a solution while the consistency-set
//! design does.

use nalgebra::DMatrix;
use noisy_synth_core::error::{Error, Result};
use noisy_synth_core::sdp::{InfeasibilityCertificate, SdpProblem, SolveSettings, SolveStatus};
use noisy_synth_core::symmat::SymMatrix;

/// Outcome of a comparison LMI solve.
#[derive(Debug)]
pub enum LmiVerdict {
    Feasible {
        /// Worst constraint eigenvalue of the returned point.
        worst_eig: f64,
    },
    Infeasible {
        certificate: InfeasibilityCertificate,
    },
    Indeterminate {
        detail: String,
    },
}

impl LmiVerdict {
    pub fn is_feasible(&self) -> bool {
        matches!(self, LmiVerdict::Feasible { .. })
    }

    pub fn is_validated_infeasible(&self) -> bool {
        matches!(self, LmiVerdict::Infeasible { certificate } if certificate.validated)
    }

    pub fn label(&self) -> &'static str {
        match self {
            LmiVerdict::Feasible { .. } => "feasible",
            LmiVerdict::Infeasible { .. } => "infeasible",
            LmiVerdict::Indeterminate { .. } => "indeterminate",
        }
    }
}

const EPS_STRICT: f64 = 1e-6;

fn classify(
    status: SolveStatus,
    report_cert: Option<InfeasibilityCertificate>,
    worst: Option<f64>,
) -> LmiVerdict {
    match status {
        SolveStatus::Optimal => LmiVerdict::Feasible {
            worst_eig: worst.unwrap_or(f64::NAN),
        },
        SolveStatus::Infeasible => LmiVerdict::Infeasible {
            certificate: report_cert.expect("infeasible status carries a certificate"),
        },
        other => LmiVerdict::Indeterminate {
            detail: format!("solver status {other:?}"),
        },
    }
}

/// Closed-loop-parameterization design with a scalar multiplier: find
/// `Q` (`T x n`) and `alpha` such that `X- Q` is symmetric,
///
/// ```text
/// [ X- Q - alpha X+ X+^t   X+ Q ]        [ I    Q   ]
/// [ Q^t X+^t               X- Q ] > 0,   [ Q^t  X- Q] > 0,
/// ```
///
/// and `alpha^2 / (4 + 2 alpha) > gamma`. The scalar constraint is
/// monotone in `alpha > 0`, so it reduces to the linear bound
/// `alpha >= gamma + sqrt(gamma^2 + 4 gamma)`; everything else is jointly
/// affine in `(Q, alpha)`, making the whole search a single conic solve
/// with a definitive infeasibility certificate.
pub fn depersis_lmi(
    x_plus: &DMatrix<f64>,
    x_minus: &DMatrix<f64>,
    u_minus: &DMatrix<f64>,
    gamma: f64,
) -> Result<LmiVerdict> {
    let n = x_plus.nrows();
    let t = x_plus.ncols();
    if x_minus.nrows() != n || x_minus.ncols() != t || u_minus.ncols() != t {
        return Err(Error::Dimension("data matrices must share n and T".into()));
    }
    if !(gamma > 0.0) {
        return Err(Error::Problem(format!("gamma must be > 0, got {gamma}")));
    }
    let alpha_floor = gamma + (gamma * gamma + 4.0 * gamma).sqrt();

    let mut pb = SdpProblem::new();
    let q = pb.rectangular("Q", t, n)?;
    let alpha = pb.scalar("alpha")?;

    // Symmetry of X- Q, entrywise above the diagonal.
    for i in 0..n {
        for j in 0..i {
            let mut coeffs = Vec::new();
            for s in 0..t {
                coeffs.push((pb.unknown(q, s, j)?, x_minus[(i, s)]));
                coeffs.push((pb.unknown(q, s, i)?, -x_minus[(j, s)]));
            }
            pb.equality(coeffs, 0.0);
        }
    }

    // First LMI.
    let lmi1 = pb.psd_block("stability", 2 * n)?;
    pb.block_term(lmi1, 0, 0, 1.0, Some(x_minus), q, false, None)?;
    pb.block_scalar_term(lmi1, alpha, {
        let xxt = x_plus * x_plus.transpose();
        let mut c = DMatrix::zeros(2 * n, 2 * n);
        c.view_mut((0, 0), (n, n)).copy_from(&(-xxt));
        c
    })?;
    pb.block_term(lmi1, 0, n, 1.0, Some(x_plus), q, false, None)?;
    pb.block_term(lmi1, n, n, 1.0, Some(x_minus), q, false, None)?;
    pb.block_constant(lmi1, DMatrix::identity(2 * n, 2 * n) * -EPS_STRICT)?;

    // Second LMI.
    let lmi2 = pb.psd_block("normalization", t + n)?;
    pb.block_constant_at(lmi2, 0, 0, &DMatrix::identity(t, t))?;
    pb.block_term(lmi2, 0, t, 1.0, None, q, false, None)?;
    pb.block_term(lmi2, t, t, 1.0, Some(x_minus), q, false, None)?;
    pb.block_constant(lmi2, DMatrix::identity(t + n, t + n) * -EPS_STRICT)?;

    // alpha >= alpha_floor + eps.
    let floor = pb.psd_block("alpha_floor", 1)?;
    pb.block_scalar_term(floor, alpha, DMatrix::from_element(1, 1, 1.0))?;
    pb.block_constant(floor, DMatrix::from_element(1, 1, -(alpha_floor + EPS_STRICT)))?;

    let (assignment, report) = pb.solve(&SolveSettings::default())?;
    let worst = assignment
        .as_ref()
        .map(|a| pb.verify_assignment(a, 1e-8))
        .transpose()?
        .map(|(_, w)| w);
    Ok(classify(report.status, report.certificate, worst))
}

/// Closed-loop-parameterization design with noise-model weights
/// `(Q_w, R_w)` (and `S_w = 0`): find `Yc` (`n x n` symmetric) and `M`
/// (`T x n`) with `X- M = Yc` and
///
/// ```text
/// [ -Yc      0     M^t X+^t   M^t    ]
/// [ 0        Q_w   I          0      ]
/// [ X+ M     I     -Yc        0      ]  <  0.
/// [ M        0     0          -R_w^-1]
/// ```
pub fn berberich_lmi(
    x_plus: &DMatrix<f64>,
    x_minus: &DMatrix<f64>,
    u_minus: &DMatrix<f64>,
    q_w: &SymMatrix,
    r_w: &SymMatrix,
) -> Result<LmiVerdict> {
    let n = x_plus.nrows();
    let t = x_plus.ncols();
    if x_minus.nrows() != n || x_minus.ncols() != t || u_minus.ncols() != t {
        return Err(Error::Dimension("data matrices must share n and T".into()));
    }
    if q_w.dim() != n || r_w.dim() != t {
        return Err(Error::Dimension(format!(
            "weights must be Q_w {n}x{n} and R_w {t}x{t}"
        )));
    }
    let r_w_inv = r_w.inverse()?;

    let mut pb = SdpProblem::new();
    let yc = pb.symmetric("Yc", n)?;
    let m_var = pb.rectangular("M", t, n)?;

    // Negated strict LMI: the block below must be >= eps I.
    let dim = 3 * n + t;
    let blk = pb.psd_block("closed_loop", dim)?;
    pb.block_term(blk, 0, 0, 1.0, None, yc, false, None)?;
    pb.block_constant_at(blk, n, n, &(-q_w.as_matrix()))?;
    // (0,2): -M^t X+^t, (0,3): -M^t.
    let xpt = x_plus.transpose();
    pb.block_term(blk, 0, 2 * n, -1.0, None, m_var, true, Some(&xpt))?;
    pb.block_term(blk, 0, 2 * n + n, -1.0, None, m_var, true, None)?;
    pb.block_constant_at(blk, n, 2 * n, &(-DMatrix::identity(n, n)))?;
    pb.block_term(blk, 2 * n, 2 * n, 1.0, None, yc, false, None)?;
    pb.block_constant_at(blk, 3 * n, 3 * n, &r_w_inv.as_matrix().clone())?;
    pb.block_constant(blk, DMatrix::identity(dim, dim) * -EPS_STRICT)?;

    // X- M = Yc, entrywise.
    for i in 0..n {
        for j in 0..n {
            let mut coeffs = Vec::new();
            for s in 0..t {
                coeffs.push((pb.unknown(m_var, s, j)?, x_minus[(i, s)]));
            }
            coeffs.push((pb.unknown(yc, i, j)?, -1.0));
            pb.equality(coeffs, 0.0);
        }
    }

    let (assignment, report) = pb.solve(&SolveSettings::default())?;
    let worst = assignment
        .as_ref()
        .map(|a| pb.verify_assignment(a, 1e-8))
        .transpose()?
        .map(|(_, w)| w);
    Ok(classify(report.status, report.certificate, worst))
}

#[cfg(test)]
mod tests {
    use super::*;
    use noisy_synth_core::data::comparison_fixture;

    fn fixture() -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let p = comparison_fixture().partition();
        (p.x_plus, p.x_minus, p.u_minus)
    }

    #[test]
    fn depersis_infeasible_on_comparison_fixture() {
        let (xp, xm, um) = fixture();
        let verdict = depersis_lmi(&xp, &xm, &um, 1.0).unwrap();
        assert!(verdict.is_validated_infeasible(), "{verdict:?}");
    }

    #[test]
    fn depersis_feasible_on_benign_noiseless_data() {
        // Stable scalar system, tiny gamma: the method must succeed.
        let xm = DMatrix::from_row_slice(1, 4, &[1.0, 0.5, 0.25, 0.125]);
        let xp = &xm * 0.5;
        let um = DMatrix::zeros(1, 4);
        let verdict = depersis_lmi(&xp, &xm, &um, 1e-6).unwrap();
        assert!(verdict.is_feasible(), "{verdict:?}");
        if let LmiVerdict::Feasible { worst_eig } = verdict {
            assert!(worst_eig >= -1e-8);
        }
    }

    #[test]
    fn depersis_infeasible_on_zero_data() {
        let verdict = depersis_lmi(
            &DMatrix::zeros(1, 3),
            &DMatrix::zeros(1, 3),
            &DMatrix::zeros(1, 3),
            1.0,
        )
        .unwrap();
        assert!(!verdict.is_feasible());
    }

    #[test]
    fn berberich_infeasible_on_comparison_fixture() {
        let (xp, xm, um) = fixture();
        let q_w = SymMatrix::from_rows(1, &[-1.0]).unwrap();
        let r_w = SymMatrix::identity(3);
        let verdict = berberich_lmi(&xp, &xm, &um, &q_w, &r_w).unwrap();
        assert!(verdict.is_validated_infeasible(), "{verdict:?}");
    }

    #[test]
    fn berberich_infeasible_on_zero_data() {
        let q_w = SymMatrix::from_rows(1, &[-1.0]).unwrap();
        let r_w = SymMatrix::identity(3);
        let verdict = berberich_lmi(
            &DMatrix::zeros(1, 3),
            &DMatrix::zeros(1, 3),
            &DMatrix::zeros(1, 3),
            &q_w,
            &r_w,
        )
        .unwrap();
        assert!(!verdict.is_feasible());
    }
}
