//! Trajectory simulation, ingestion, and the data matrices used by the
//! synthesis LMIs.
//!
//! A dataset holds states `x(0..T)` and inputs `u(0..T-1)`; partitioning
//! yields the shifted matrices `X+`, `X-`, `U-` satisfying
//! `X+ = A X- + B U- + W-` for the generating system and noise.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// State and input matrices of a linear system `x(t+1) = A x(t) + B u(t) + w(t)`.
#[derive(Debug, Clone)]
pub struct SystemPair {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl SystemPair {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::Dimension(format!(
                "A must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != a.nrows() {
            return Err(Error::Dimension(format!(
                "B must have {} rows, got {}",
                a.nrows(),
                b.nrows()
            )));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("system matrices".into()));
        }
        Ok(SystemPair { a, b })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }
}

/// Measured (or simulated) trajectory over one interval.
#[derive(Debug, Clone)]
pub struct DataSet {
    /// States `x(0), ..., x(T)`, one column each (`n x (T+1)`).
    x: DMatrix<f64>,
    /// Inputs `u(0), ..., u(T-1)` (`m x T`).
    u: DMatrix<f64>,
    /// Noise actually injected, for synthetic runs.
    w_true: Option<DMatrix<f64>>,
}

/// The shifted data matrices entering every synthesis LMI.
#[derive(Debug, Clone)]
pub struct DataMatrices {
    pub x_plus: DMatrix<f64>,
    pub x_minus: DMatrix<f64>,
    pub u_minus: DMatrix<f64>,
}

impl DataSet {
    pub fn new(x: DMatrix<f64>, u: DMatrix<f64>, w_true: Option<DMatrix<f64>>) -> Result<Self> {
        let t = u.ncols();
        if t < 1 {
            return Err(Error::Dimension("need at least one sample (T >= 1)".into()));
        }
        if x.ncols() != t + 1 {
            return Err(Error::Dimension(format!(
                "states must have T+1 = {} columns, got {}",
                t + 1,
                x.ncols()
            )));
        }
        if let Some(w) = &w_true {
            if w.nrows() != x.nrows() || w.ncols() != t {
                return Err(Error::Dimension("w_true must be n x T".into()));
            }
        }
        if x.iter().chain(u.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("trajectory data".into()));
        }
        Ok(DataSet { x, u, w_true })
    }

    pub fn state_dim(&self) -> usize {
        self.x.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.u.nrows()
    }

    pub fn horizon(&self) -> usize {
        self.u.ncols()
    }

    pub fn states(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn w_true(&self) -> Option<&DMatrix<f64>> {
        self.w_true.as_ref()
    }

    /// Split into `X+` (columns 1..T), `X-` (columns 0..T-1), `U-`.
    pub fn partition(&self) -> DataMatrices {
        let n = self.state_dim();
        let t = self.horizon();
        DataMatrices {
            x_plus: self.x.view((0, 1), (n, t)).into_owned(),
            x_minus: self.x.view((0, 0), (n, t)).into_owned(),
            u_minus: self.u.clone(),
        }
    }

    /// Keep only the first `t` samples (states `0..=t`, inputs `0..t`).
    pub fn prefix(&self, t: usize) -> Result<DataSet> {
        if t < 1 || t > self.horizon() {
            return Err(Error::Dimension(format!(
                "prefix length {t} out of range 1..={}",
                self.horizon()
            )));
        }
        DataSet::new(
            self.x.view((0, 0), (self.state_dim(), t + 1)).into_owned(),
            self.u.view((0, 0), (self.input_dim(), t)).into_owned(),
            self.w_true
                .as_ref()
                .map(|w| w.view((0, 0), (self.state_dim(), t)).into_owned()),
        )
    }

    /// Trajectory CSV: header `t,x1..xn,u1..um`; the final row carries the
    /// terminal state and omits the input cells (there is no `u(T)`).
    pub fn to_csv(&self) -> String {
        let n = self.state_dim();
        let m = self.input_dim();
        let t = self.horizon();
        let mut out = String::from("t");
        for i in 1..=n {
            out.push_str(&format!(",x{i}"));
        }
        for i in 1..=m {
            out.push_str(&format!(",u{i}"));
        }
        out.push('\n');
        for k in 0..=t {
            out.push_str(&format!("{k}"));
            for i in 0..n {
                out.push_str(&format!(",{}", self.x[(i, k)]));
            }
            if k < t {
                for i in 0..m {
                    out.push_str(&format!(",{}", self.u[(i, k)]));
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<DataSet> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty trajectory file".into()))?;
        let cols: Vec<&str> = header.trim().split(',').map(|c| c.trim()).collect();
        if cols.first() != Some(&"t") {
            return Err(Error::Parse("trajectory header must start with 't'".into()));
        }
        let n = cols.iter().filter(|c| c.starts_with('x')).count();
        let m = cols.iter().filter(|c| c.starts_with('u')).count();
        if n == 0 {
            return Err(Error::Parse("trajectory header declares no states".into()));
        }
        let mut states: Vec<Vec<f64>> = Vec::new();
        let mut inputs: Vec<Vec<f64>> = Vec::new();
        for (idx, line) in lines.enumerate() {
            let cells: Vec<&str> = line.trim().split(',').map(|c| c.trim()).collect();
            // Missing trailing input cells mark the terminal row; they are
            // absent, not zero.
            let has_inputs = match cells.len() {
                l if l == 1 + n + m => true,
                l if l == 1 + n => false,
                l => {
                    return Err(Error::Parse(format!(
                        "row {}: expected {} or {} cells, got {l}",
                        idx + 2,
                        1 + n + m,
                        1 + n
                    )));
                }
            };
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("row {}: bad number {s:?}", idx + 2)))
            };
            let xs = cells[1..1 + n]
                .iter()
                .map(|c| parse(c))
                .collect::<Result<Vec<f64>>>()?;
            states.push(xs);
            if has_inputs {
                let us = cells[1 + n..]
                    .iter()
                    .map(|c| parse(c))
                    .collect::<Result<Vec<f64>>>()?;
                inputs.push(us);
            }
        }
        let t = inputs.len();
        if states.len() != t + 1 {
            return Err(Error::Parse(format!(
                "expected {} state rows for {} input rows, got {}",
                t + 1,
                t,
                states.len()
            )));
        }
        let x = DMatrix::from_fn(n, t + 1, |i, j| states[j][i]);
        let u = DMatrix::from_fn(m, t, |i, j| inputs[j][i]);
        DataSet::new(x, u, None)
    }

    pub fn read_csv(path: &Path) -> Result<DataSet> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        DataSet::from_csv(&text)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Run the recursion `x(t+1) = A x(t) + B u(t) + w(t)` exactly.
pub fn simulate(
    sys: &SystemPair,
    x0: &DVector<f64>,
    u: &DMatrix<f64>,
    w: &DMatrix<f64>,
) -> Result<DataSet> {
    let n = sys.state_dim();
    let m = sys.input_dim();
    let t = u.ncols();
    if x0.len() != n {
        return Err(Error::Dimension(format!(
            "x0 must have length {n}, got {}",
            x0.len()
        )));
    }
    if u.nrows() != m {
        return Err(Error::Dimension(format!(
            "inputs must have {m} rows, got {}",
            u.nrows()
        )));
    }
    if w.nrows() != n || w.ncols() != t {
        return Err(Error::Dimension(format!(
            "noise must be {n}x{t}, got {}x{}",
            w.nrows(),
            w.ncols()
        )));
    }
    let mut x = DMatrix::zeros(n, t + 1);
    x.set_column(0, x0);
    for k in 0..t {
        let next = &sys.a * x.column(k) + &sys.b * u.column(k) + w.column(k);
        x.set_column(k + 1, &next);
    }
    DataSet::new(x, u.clone(), Some(w.clone()))
}

/// Horizontally concatenate the partitions of several datasets collected
/// from the same system.
pub fn stack(datasets: &[DataSet]) -> Result<DataMatrices> {
    let first = datasets
        .first()
        .ok_or_else(|| Error::Problem("stack needs at least one dataset".into()))?;
    let n = first.state_dim();
    let m = first.input_dim();
    if datasets
        .iter()
        .any(|d| d.state_dim() != n || d.input_dim() != m)
    {
        return Err(Error::Dimension(
            "all stacked datasets must share state and input dimensions".into(),
        ));
    }
    let t_total: usize = datasets.iter().map(|d| d.horizon()).sum();
    let mut x_plus = DMatrix::zeros(n, t_total);
    let mut x_minus = DMatrix::zeros(n, t_total);
    let mut u_minus = DMatrix::zeros(m, t_total);
    let mut off = 0;
    for d in datasets {
        let p = d.partition();
        let t = d.horizon();
        x_plus.view_mut((0, off), (n, t)).copy_from(&p.x_plus);
        x_minus.view_mut((0, off), (n, t)).copy_from(&p.x_minus);
        u_minus.view_mut((0, off), (m, t)).copy_from(&p.u_minus);
        off += t;
    }
    Ok(DataMatrices {
        x_plus,
        x_minus,
        u_minus,
    })
}

/// The scalar comparison fixture: `A_s = B_s = 1`, `T = 3`,
/// `W- = [1/2 1/2 1/2]`, states `X = [0 0 1 0]`, inputs `U- = [-1/2 1/2 -3/2]`.
pub fn comparison_fixture() -> DataSet {
    DataSet::new(
        DMatrix::from_row_slice(1, 4, &[0.0, 0.0, 1.0, 0.0]),
        DMatrix::from_row_slice(1, 3, &[-0.5, 0.5, -1.5]),
        Some(DMatrix::from_row_slice(1, 3, &[0.5, 0.5, 0.5])),
    )
    .expect("fixture dimensions are consistent")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn simulate_zero_system_keeps_initial_state_only() {
        let sys = SystemPair::new(DMatrix::zeros(2, 2), DMatrix::zeros(2, 1)).unwrap();
        let x0 = DVector::from_row_slice(&[3.0, -1.0]);
        let d = simulate(&sys, &x0, &DMatrix::zeros(1, 3), &DMatrix::zeros(2, 3)).unwrap();
        assert_eq!(d.states().column(0), x0);
        for k in 1..=3 {
            assert!(d.states().column(k).iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn simulate_reproduces_comparison_fixture() {
        let sys = SystemPair::new(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        let u = DMatrix::from_row_slice(1, 3, &[-0.5, 0.5, -1.5]);
        let w = DMatrix::from_row_slice(1, 3, &[0.5, 0.5, 0.5]);
        let d = simulate(&sys, &DVector::zeros(1), &u, &w).unwrap();
        assert_eq!(
            d.states(),
            &DMatrix::from_row_slice(1, 4, &[0.0, 0.0, 1.0, 0.0])
        );
    }

    #[test]
    fn partition_satisfies_data_equation_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let b = DMatrix::from_fn(3, 2, |_, _| rng.random_range(-1.0..1.0));
        let sys = SystemPair::new(a.clone(), b.clone()).unwrap();
        let x0 = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
        let u = DMatrix::from_fn(2, 10, |_, _| rng.random_range(-1.0..1.0));
        let w = DMatrix::from_fn(3, 10, |_, _| rng.random_range(-0.1..0.1));
        let d = simulate(&sys, &x0, &u, &w).unwrap();
        let p = d.partition();
        let resid = &p.x_plus - (&a * &p.x_minus + &b * &p.u_minus + &w);
        assert!(resid.iter().all(|v| v.abs() == 0.0));
    }

    #[test]
    fn partition_comparison_fixture() {
        let p = comparison_fixture().partition();
        assert_eq!(p.x_minus, DMatrix::from_row_slice(1, 3, &[0.0, 0.0, 1.0]));
        assert_eq!(p.x_plus, DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 0.0]));
        assert_eq!(p.u_minus, DMatrix::from_row_slice(1, 3, &[-0.5, 0.5, -1.5]));
    }

    #[test]
    fn single_sample_trajectory() {
        let d = DataSet::new(
            DMatrix::from_row_slice(1, 2, &[1.0, 2.0]),
            DMatrix::from_row_slice(1, 1, &[3.0]),
            None,
        )
        .unwrap();
        let p = d.partition();
        assert_eq!(p.x_plus.ncols(), 1);
        assert_eq!(p.x_minus[(0, 0)], 1.0);
        assert_eq!(p.x_plus[(0, 0)], 2.0);
    }

    #[test]
    fn stack_single_equals_partition() {
        let d = comparison_fixture();
        let s = stack(std::slice::from_ref(&d)).unwrap();
        let p = d.partition();
        assert_eq!(s.x_plus, p.x_plus);
        assert_eq!(s.x_minus, p.x_minus);
        assert_eq!(s.u_minus, p.u_minus);
    }

    #[test]
    fn stack_two_copies_doubles_columns() {
        let d = comparison_fixture();
        let s = stack(&[d.clone(), d.clone()]).unwrap();
        assert_eq!(s.x_plus.ncols(), 6);
        let p = d.partition();
        assert_eq!(s.x_plus.view((0, 0), (1, 3)), p.x_plus.view((0, 0), (1, 3)));
        assert_eq!(s.x_plus.view((0, 3), (1, 3)), p.x_plus.view((0, 0), (1, 3)));
    }

    #[test]
    fn stack_is_associative_on_columns() {
        let d = comparison_fixture();
        let ab_c = stack(&[d.clone(), d.clone(), d.clone()]).unwrap();
        // Stacking [d d] then appending d must equal stacking all three.
        let mut x = DMatrix::zeros(1, 9);
        let two = stack(&[d.clone(), d.clone()]).unwrap();
        x.view_mut((0, 0), (1, 6)).copy_from(&two.x_plus);
        x.view_mut((0, 6), (1, 3)).copy_from(&d.partition().x_plus);
        assert_eq!(ab_c.x_plus, x);
    }

    #[test]
    fn csv_roundtrip_with_ragged_last_row() {
        let d = comparison_fixture();
        let text = d.to_csv();
        // Terminal row must omit the input cell.
        let last = text.lines().last().unwrap();
        assert_eq!(last.split(',').count(), 2);
        let back = DataSet::from_csv(&text).unwrap();
        assert_eq!(back.states(), d.states());
        assert_eq!(back.inputs(), d.inputs());
    }

    #[test]
    fn csv_rejects_malformed_rows() {
        assert!(DataSet::from_csv("t,x1,u1\n0,1\n1,2,3\n2,4").is_err());
        assert!(DataSet::from_csv("x1,u1\n1,2\n").is_err());
    }
}
