//! Linear-objective optimization over scalar and symmetric-matrix
//! variables with affine positive-semidefinite constraint blocks.
//!
//! Problems are assembled by placing variable terms into named blocks;
//! every block is canonicalized to `F0 + sum_u x_u G_u` over the
//! scalarized unknowns, with the coefficient matrices symmetrized at build
//! time so each block is symmetric for every assignment. The conic solve
//! itself is delegated to Clarabel (primal-dual interior point over the
//! PSD cone); [`SdpProblem::verify_assignment`] is an independent
//! eigenvalue-wise substitution check used to validate every optimal point
//! and to test externally supplied assignments.
//!
//! Strict inequalities do not exist at this layer: callers encode them as
//! margins (`X >= eps I`) before the problem reaches the solver.

use std::path::Path;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::io;
use crate::symmat::SymMatrix;

const SQRT2: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Scalar,
    /// Symmetric `d x d`; unknowns are the lower-triangle entries.
    Symmetric(usize),
    /// Rectangular `r x c`; sugar for `r * c` scalar unknowns.
    Rectangular(usize, usize),
}

impl VarKind {
    fn unknown_count(&self) -> usize {
        match *self {
            VarKind::Scalar => 1,
            VarKind::Symmetric(d) => d * (d + 1) / 2,
            VarKind::Rectangular(r, c) => r * c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarRef(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockRef(usize);

#[derive(Debug, Clone)]
struct VarDecl {
    name: String,
    kind: VarKind,
    offset: usize,
}

#[derive(Debug, Clone)]
enum Term {
    /// `scale * left * V^(t) * right` placed at `(row_off, col_off)`,
    /// mirrored when off-diagonal.
    Placed {
        var: usize,
        transpose: bool,
        left: DMatrix<f64>,
        right: DMatrix<f64>,
        row_off: usize,
        col_off: usize,
        scale: f64,
    },
    /// `x * coeff` for a scalar variable, spanning the whole block.
    ScalarFull { var: usize, coeff: DMatrix<f64> },
}

#[derive(Debug, Clone)]
struct Block {
    name: String,
    dim: usize,
    f0: DMatrix<f64>,
    terms: Vec<Term>,
}

#[derive(Debug, Clone)]
struct Equality {
    coeffs: Vec<(usize, f64)>,
    rhs: f64,
}

/// Solver settings; defaults match the report tolerances used throughout.
#[derive(Debug, Clone)]
pub struct SolveSettings {
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub max_iter: u32,
}

impl Default for SolveSettings {
    fn default() -> Self {
        SolveSettings {
            feas_tol: 1e-8,
            gap_tol: 1e-8,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Inaccurate,
    IterationLimit,
}

/// A validated certificate that no feasible point exists: a dual ray `z`
/// with `A^t z ~ 0`, `z` in the dual cone, and `b^t z < 0`, which bounds
/// the primal away from feasibility.
#[derive(Debug, Clone)]
pub struct InfeasibilityCertificate {
    pub dual_ray: Vec<f64>,
    /// `b^t z`; strictly negative for a valid certificate.
    pub primal_bound: f64,
    /// `max |A^t z| / max(1, |z|_inf)`.
    pub support_residual: f64,
    /// Most negative eigenvalue over the PSD components of `z` (scaled).
    pub cone_violation: f64,
    pub validated: bool,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub objective_value: Option<f64>,
    /// Worst constraint-block eigenvalue of the returned assignment.
    pub min_constraint_eig: Option<f64>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub certificate: Option<InfeasibilityCertificate>,
}

/// Values for every scalarized unknown of a problem.
#[derive(Debug, Clone)]
pub struct Assignment {
    vars: Vec<VarDecl>,
    values: Vec<f64>,
}

impl Assignment {
    /// Restrict to the variables of `target`, which must be a declaration
    /// prefix of this assignment's problem (e.g. the problem this one was
    /// extended from).
    pub fn project_onto(&self, target: &SdpProblem) -> Result<Assignment> {
        if target.vars.len() > self.vars.len()
            || target
                .vars
                .iter()
                .zip(&self.vars)
                .any(|(a, b)| a.name != b.name || a.kind != b.kind)
        {
            return Err(Error::Problem(
                "assignment does not extend the target problem".into(),
            ));
        }
        Ok(Assignment {
            vars: target.vars.clone(),
            values: self.values[..target.unknowns].to_vec(),
        })
    }

    fn decl<'a>(vars: &'a [VarDecl], var: VarRef) -> Result<&'a VarDecl> {
        vars.get(var.0)
            .ok_or_else(|| Error::Problem(format!("unknown variable reference {}", var.0)))
    }

    pub fn scalar(&self, var: VarRef) -> Result<f64> {
        let d = Self::decl(&self.vars, var)?;
        match d.kind {
            VarKind::Scalar => Ok(self.values[d.offset]),
            _ => Err(Error::Problem(format!("{} is not a scalar", d.name))),
        }
    }

    pub fn symmetric(&self, var: VarRef) -> Result<SymMatrix> {
        let d = Self::decl(&self.vars, var)?;
        match d.kind {
            VarKind::Symmetric(dim) => {
                let mut m = DMatrix::zeros(dim, dim);
                for i in 0..dim {
                    for j in 0..=i {
                        let v = self.values[d.offset + i * (i + 1) / 2 + j];
                        m[(i, j)] = v;
                        m[(j, i)] = v;
                    }
                }
                SymMatrix::new(m)
            }
            _ => Err(Error::Problem(format!("{} is not symmetric", d.name))),
        }
    }

    pub fn rectangular(&self, var: VarRef) -> Result<DMatrix<f64>> {
        let d = Self::decl(&self.vars, var)?;
        match d.kind {
            VarKind::Rectangular(r, c) => Ok(DMatrix::from_fn(r, c, |i, j| {
                self.values[d.offset + i * c + j]
            })),
            _ => Err(Error::Problem(format!("{} is not rectangular", d.name))),
        }
    }

    pub fn set_scalar(&mut self, var: VarRef, value: f64) -> Result<()> {
        let d = Self::decl(&self.vars, var)?.clone();
        match d.kind {
            VarKind::Scalar => {
                self.values[d.offset] = value;
                Ok(())
            }
            _ => Err(Error::Problem(format!("{} is not a scalar", d.name))),
        }
    }

    pub fn set_symmetric(&mut self, var: VarRef, value: &SymMatrix) -> Result<()> {
        let d = Self::decl(&self.vars, var)?.clone();
        match d.kind {
            VarKind::Symmetric(dim) if dim == value.dim() => {
                for i in 0..dim {
                    for j in 0..=i {
                        self.values[d.offset + i * (i + 1) / 2 + j] = value.get(i, j);
                    }
                }
                Ok(())
            }
            _ => Err(Error::Problem(format!(
                "{} is not symmetric of dim {}",
                d.name,
                value.dim()
            ))),
        }
    }

    pub fn set_rectangular(&mut self, var: VarRef, value: &DMatrix<f64>) -> Result<()> {
        let d = Self::decl(&self.vars, var)?.clone();
        match d.kind {
            VarKind::Rectangular(r, c) if r == value.nrows() && c == value.ncols() => {
                for i in 0..r {
                    for j in 0..c {
                        self.values[d.offset + i * c + j] = value[(i, j)];
                    }
                }
                Ok(())
            }
            _ => Err(Error::Problem(format!("{} shape mismatch", d.name))),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SdpProblem {
    vars: Vec<VarDecl>,
    unknowns: usize,
    objective: Vec<(usize, f64)>,
    blocks: Vec<Block>,
    equalities: Vec<Equality>,
}

impl SdpProblem {
    pub fn new() -> Self {
        SdpProblem::default()
    }

    fn declare(&mut self, name: &str, kind: VarKind) -> Result<VarRef> {
        if self.vars.iter().any(|v| v.name == name) {
            return Err(Error::Problem(format!("duplicate variable name {name:?}")));
        }
        if kind.unknown_count() == 0 {
            return Err(Error::Problem(format!("variable {name:?} has no entries")));
        }
        let offset = self.unknowns;
        self.unknowns += kind.unknown_count();
        self.vars.push(VarDecl {
            name: name.to_string(),
            kind,
            offset,
        });
        Ok(VarRef(self.vars.len() - 1))
    }

    pub fn scalar(&mut self, name: &str) -> Result<VarRef> {
        self.declare(name, VarKind::Scalar)
    }

    pub fn symmetric(&mut self, name: &str, dim: usize) -> Result<VarRef> {
        self.declare(name, VarKind::Symmetric(dim))
    }

    pub fn rectangular(&mut self, name: &str, rows: usize, cols: usize) -> Result<VarRef> {
        self.declare(name, VarKind::Rectangular(rows, cols))
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarRef> {
        self.vars.iter().position(|v| v.name == name).map(VarRef)
    }

    /// Scalarized unknown index for entry `(i, j)` of a variable (use
    /// `(0, 0)` for scalars). Symmetric entries are addressed by their
    /// lower-triangle position.
    pub fn unknown(&self, var: VarRef, i: usize, j: usize) -> Result<usize> {
        let d = self
            .vars
            .get(var.0)
            .ok_or_else(|| Error::Problem("unknown variable reference".into()))?;
        match d.kind {
            VarKind::Scalar => {
                if i == 0 && j == 0 {
                    Ok(d.offset)
                } else {
                    Err(Error::Problem(format!("{} is scalar", d.name)))
                }
            }
            VarKind::Symmetric(dim) => {
                if i < dim && j < dim {
                    let (r, c) = if i >= j { (i, j) } else { (j, i) };
                    Ok(d.offset + r * (r + 1) / 2 + c)
                } else {
                    Err(Error::Problem(format!("entry ({i},{j}) outside {}", d.name)))
                }
            }
            VarKind::Rectangular(r, c) => {
                if i < r && j < c {
                    Ok(d.offset + i * c + j)
                } else {
                    Err(Error::Problem(format!("entry ({i},{j}) outside {}", d.name)))
                }
            }
        }
    }

    /// Linear objective over scalarized unknowns, to be maximized.
    pub fn maximize(&mut self, terms: &[(usize, f64)]) {
        self.objective = terms.to_vec();
    }

    /// Maximize `coeff * trace(var)` (negative `coeff` minimizes).
    pub fn maximize_trace(&mut self, var: VarRef, coeff: f64) -> Result<()> {
        let d = self
            .vars
            .get(var.0)
            .ok_or_else(|| Error::Problem("unknown variable reference".into()))?
            .clone();
        let dim = match d.kind {
            VarKind::Symmetric(dim) => dim,
            _ => return Err(Error::Problem(format!("{} is not symmetric", d.name))),
        };
        let mut terms = Vec::with_capacity(dim);
        for i in 0..dim {
            terms.push((self.unknown(var, i, i)?, coeff));
        }
        self.objective = terms;
        Ok(())
    }

    /// Declare a new constraint block required positive semidefinite.
    pub fn psd_block(&mut self, name: &str, dim: usize) -> Result<BlockRef> {
        if dim == 0 {
            return Err(Error::Problem("constraint block must have dim >= 1".into()));
        }
        self.blocks.push(Block {
            name: name.to_string(),
            dim,
            f0: DMatrix::zeros(dim, dim),
            terms: Vec::new(),
        });
        Ok(BlockRef(self.blocks.len() - 1))
    }

    fn block_mut(&mut self, blk: BlockRef) -> Result<&mut Block> {
        self.blocks
            .get_mut(blk.0)
            .ok_or_else(|| Error::Problem("unknown block reference".into()))
    }

    pub fn block_dim(&self, blk: BlockRef) -> Result<usize> {
        self.blocks
            .get(blk.0)
            .map(|b| b.dim)
            .ok_or_else(|| Error::Problem("unknown block reference".into()))
    }

    /// Add a constant matrix spanning the whole block.
    pub fn block_constant(&mut self, blk: BlockRef, m: DMatrix<f64>) -> Result<()> {
        let b = self.block_mut(blk)?;
        if m.nrows() != b.dim || m.ncols() != b.dim {
            return Err(Error::Dimension(format!(
                "constant for block {} must be {d}x{d}, got {}x{}",
                b.name,
                m.nrows(),
                m.ncols(),
                d = b.dim
            )));
        }
        b.f0 += m;
        Ok(())
    }

    /// Place a constant submatrix at block offset `(row, col)`; off-diagonal
    /// placements are mirrored to keep the block symmetric.
    pub fn block_constant_at(
        &mut self,
        blk: BlockRef,
        row: usize,
        col: usize,
        m: &DMatrix<f64>,
    ) -> Result<()> {
        let b = self.block_mut(blk)?;
        if row + m.nrows() > b.dim || col + m.ncols() > b.dim {
            return Err(Error::Dimension("constant placement outside block".into()));
        }
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                b.f0[(row + i, col + j)] += m[(i, j)];
            }
        }
        if row != col {
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    b.f0[(col + j, row + i)] += m[(i, j)];
                }
            }
        }
        Ok(())
    }

    /// Add `coeff * x` for a scalar variable `x`, with `coeff` spanning the
    /// whole block (used for multiplier terms like `-alpha N`).
    pub fn block_scalar_term(
        &mut self,
        blk: BlockRef,
        var: VarRef,
        coeff: DMatrix<f64>,
    ) -> Result<()> {
        let decl = self
            .vars
            .get(var.0)
            .ok_or_else(|| Error::Problem("unknown variable reference".into()))?;
        if decl.kind != VarKind::Scalar {
            return Err(Error::Problem(format!("{} is not a scalar", decl.name)));
        }
        let b = self.block_mut(blk)?;
        if coeff.nrows() != b.dim || coeff.ncols() != b.dim {
            return Err(Error::Dimension(
                "scalar-term coefficient must span the block".into(),
            ));
        }
        b.terms.push(Term::ScalarFull { var: var.0, coeff });
        Ok(())
    }

    /// Place `scale * left * V^(t) * right` at block offset `(row, col)`.
    /// Off-diagonal placements are mirrored (transposed) automatically.
    /// `left`/`right` default to identities of the matching size.
    #[allow(clippy::too_many_arguments)]
    pub fn block_term(
        &mut self,
        blk: BlockRef,
        row: usize,
        col: usize,
        scale: f64,
        left: Option<&DMatrix<f64>>,
        var: VarRef,
        transpose: bool,
        right: Option<&DMatrix<f64>>,
    ) -> Result<()> {
        let d = self
            .vars
            .get(var.0)
            .ok_or_else(|| Error::Problem("unknown variable reference".into()))?;
        let (vr, vc) = match d.kind {
            VarKind::Scalar => (1, 1),
            VarKind::Symmetric(dim) => (dim, dim),
            VarKind::Rectangular(r, c) => (r, c),
        };
        let (vr, vc) = if transpose { (vc, vr) } else { (vr, vc) };
        let left = left
            .cloned()
            .unwrap_or_else(|| DMatrix::identity(vr, vr));
        let right = right
            .cloned()
            .unwrap_or_else(|| DMatrix::identity(vc, vc));
        if left.ncols() != vr || right.nrows() != vc {
            return Err(Error::Dimension(format!(
                "term shape mismatch for {}: left {}x{}, var' {}x{}, right {}x{}",
                d.name,
                left.nrows(),
                left.ncols(),
                vr,
                vc,
                right.nrows(),
                right.ncols()
            )));
        }
        let b = self.block_mut(blk)?;
        if row + left.nrows() > b.dim || col + right.ncols() > b.dim {
            return Err(Error::Dimension("term placement outside block".into()));
        }
        b.terms.push(Term::Placed {
            var: var.0,
            transpose,
            left,
            right,
            row_off: row,
            col_off: col,
            scale,
        });
        Ok(())
    }

    /// Add the scalar linear equation `sum coeffs[u] x_u = rhs`.
    pub fn equality(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) {
        self.equalities.push(Equality { coeffs, rhs });
    }

    pub fn zero_assignment(&self) -> Assignment {
        Assignment {
            vars: self.vars.clone(),
            values: vec![0.0; self.unknowns],
        }
    }

    /// Canonicalize a block to `F0 + sum_u x_u G_u`, with `F0` and every
    /// `G_u` symmetrized.
    fn canonical_block(&self, b: &Block) -> (DMatrix<f64>, Vec<(usize, DMatrix<f64>)>) {
        let dim = b.dim;
        let f0 = symmetrize(&b.f0);
        let mut coeffs: Vec<DMatrix<f64>> = Vec::new();
        let mut index: Vec<usize> = Vec::new();
        let mut slot_of: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
        for term in &b.terms {
            match term {
                Term::ScalarFull { var, coeff } => {
                    let u = self.vars[*var].offset;
                    let slot = *slot_of.entry(u).or_insert_with(|| {
                        coeffs.push(DMatrix::zeros(dim, dim));
                        index.push(u);
                        coeffs.len() - 1
                    });
                    coeffs[slot] += coeff;
                }
                Term::Placed {
                    var,
                    transpose,
                    left,
                    right,
                    row_off,
                    col_off,
                    scale,
                } => {
                    let d = &self.vars[*var];
                    let mirror = row_off != col_off;
                    let mut add_outer = |u: usize, li: usize, rj: usize| {
                        // contribution scale * left[:, li] * right[rj, :]
                        let slot = *slot_of.entry(u).or_insert_with(|| {
                            coeffs.push(DMatrix::zeros(dim, dim));
                            index.push(u);
                            coeffs.len() - 1
                        });
                        let g = &mut coeffs[slot];
                        for r in 0..left.nrows() {
                            let lv = left[(r, li)];
                            if lv == 0.0 {
                                continue;
                            }
                            for c in 0..right.ncols() {
                                let add = scale * lv * right[(rj, c)];
                                g[(row_off + r, col_off + c)] += add;
                                if mirror {
                                    g[(col_off + c, row_off + r)] += add;
                                }
                            }
                        }
                    };
                    match d.kind {
                        VarKind::Scalar => add_outer(d.offset, 0, 0),
                        VarKind::Rectangular(rr, cc) => {
                            for i in 0..rr {
                                for j in 0..cc {
                                    let u = d.offset + i * cc + j;
                                    // d/dV_ij of V is E_ij; of V^t is E_ji.
                                    let (li, rj) = if *transpose { (j, i) } else { (i, j) };
                                    add_outer(u, li, rj);
                                }
                            }
                        }
                        VarKind::Symmetric(dim_v) => {
                            for i in 0..dim_v {
                                for j in 0..=i {
                                    let u = d.offset + i * (i + 1) / 2 + j;
                                    add_outer(u, i, j);
                                    if i != j {
                                        add_outer(u, j, i);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        let out = index
            .into_iter()
            .zip(coeffs.into_iter().map(|g| symmetrize(&g)))
            .collect();
        (f0, out)
    }

    /// Evaluate every constraint block at an assignment.
    pub fn evaluate_blocks(&self, a: &Assignment) -> Result<Vec<(String, SymMatrix)>> {
        if a.values.len() != self.unknowns {
            return Err(Error::Problem("assignment does not cover all variables".into()));
        }
        let mut out = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (f0, coeffs) = self.canonical_block(b);
            let mut val = f0;
            for (u, g) in &coeffs {
                val += g * a.values[*u];
            }
            out.push((b.name.clone(), SymMatrix::new(val)?));
        }
        Ok(out)
    }

    /// Substitution check, independent of the solver: every block must be
    /// PSD within `feas_tol` (relative to its spectral scale) and every
    /// equality must hold within `feas_tol`.
    pub fn verify_assignment(&self, a: &Assignment, feas_tol: f64) -> Result<(bool, f64)> {
        let blocks = self.evaluate_blocks(a)?;
        let mut worst = f64::INFINITY;
        let mut feasible = true;
        for (_, val) in &blocks {
            let lam = val.eigenvalues()[0];
            worst = worst.min(lam);
            if lam < -feas_tol * val.spectral_scale() {
                feasible = false;
            }
        }
        for eq in &self.equalities {
            let mut v = -eq.rhs;
            let mut mag = eq.rhs.abs();
            for (u, c) in &eq.coeffs {
                v += c * a.values[*u];
                mag = mag.max((c * a.values[*u]).abs());
            }
            if v.abs() > feas_tol * mag.max(1.0) {
                feasible = false;
            }
        }
        if blocks.is_empty() {
            worst = 0.0;
        }
        Ok((feasible, worst))
    }

    /// Objective value (the maximized functional) at an assignment.
    pub fn objective_at(&self, a: &Assignment) -> f64 {
        self.objective.iter().map(|(u, c)| c * a.values[*u]).sum()
    }

    /// Solve with Clarabel and map the outcome onto the report statuses.
    ///
    /// `Infeasible` is only reported when the returned dual ray validates
    /// as a certificate; an unvalidated infeasibility claim degrades to
    /// `Inaccurate`.
    pub fn solve(&self, settings: &SolveSettings) -> Result<(Option<Assignment>, SolveReport)> {
        if self.unknowns == 0 {
            return Err(Error::Problem("problem has no variables".into()));
        }
        // Row layout: equalities first (zero cone), then svec'd blocks.
        let mut rows = self.equalities.len();
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
        if !self.equalities.is_empty() {
            cones.push(SupportedConeT::ZeroConeT(self.equalities.len()));
        }
        let canonical: Vec<(DMatrix<f64>, Vec<(usize, DMatrix<f64>)>)> =
            self.blocks.iter().map(|b| self.canonical_block(b)).collect();
        for b in &self.blocks {
            rows += b.dim * (b.dim + 1) / 2;
            cones.push(SupportedConeT::PSDTriangleConeT(b.dim));
        }
        if rows == 0 {
            return Err(Error::Problem("problem has no constraints".into()));
        }

        let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
        let mut bvec = vec![0.0_f64; rows];
        for (r, eq) in self.equalities.iter().enumerate() {
            bvec[r] = eq.rhs;
            for (u, c) in &eq.coeffs {
                triplets.push((r, *u, *c));
            }
        }
        let mut row_off = self.equalities.len();
        for (f0, coeffs) in &canonical {
            let dim = f0.nrows();
            let sv = svec(f0);
            bvec[row_off..row_off + sv.len()].copy_from_slice(&sv);
            for (u, g) in coeffs {
                let gs = svec(g);
                for (i, v) in gs.iter().enumerate() {
                    if *v != 0.0 {
                        triplets.push((row_off + i, *u, -v));
                    }
                }
            }
            row_off += dim * (dim + 1) / 2;
        }
        let a_mat = csc_from_triplets(rows, self.unknowns, &triplets);
        let p_mat = CscMatrix::<f64>::zeros((self.unknowns, self.unknowns));
        let mut q = vec![0.0_f64; self.unknowns];
        for (u, c) in &self.objective {
            q[*u] -= c; // maximize c'x == minimize -c'x
        }

        let clarabel_settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(settings.max_iter)
            .tol_feas(settings.feas_tol)
            .tol_gap_abs(settings.gap_tol)
            .tol_gap_rel(settings.gap_tol)
            .build()
            .map_err(|e| Error::Problem(format!("solver settings: {e}")))?;
        let mut solver = DefaultSolver::new(&p_mat, &q, &a_mat, &bvec, &cones, clarabel_settings)
            .map_err(|e| Error::Problem(format!("solver setup: {e:?}")))?;
        solver.solve();

        let iterations = solver.info.iterations as usize;
        let primal_residual = solver.info.res_primal;
        let dual_residual = solver.info.res_dual;
        let raw_status = solver.solution.status;

        let accept_solution = |status: SolveStatus,
                               solver: &DefaultSolver<f64>|
         -> Result<(Option<Assignment>, SolveReport)> {
            let assignment = Assignment {
                vars: self.vars.clone(),
                values: solver.solution.x.clone(),
            };
            let (_, worst) = self.verify_assignment(&assignment, settings.feas_tol)?;
            let report = SolveReport {
                status,
                objective_value: Some(self.objective_at(&assignment)),
                min_constraint_eig: Some(worst),
                iterations,
                primal_residual,
                dual_residual,
                certificate: None,
            };
            Ok((Some(assignment), report))
        };

        match raw_status {
            SolverStatus::Solved => accept_solution(SolveStatus::Optimal, &solver),
            SolverStatus::AlmostSolved => accept_solution(SolveStatus::Inaccurate, &solver),
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                let cert = self.validate_certificate(
                    &solver.solution.z,
                    &a_mat,
                    &bvec,
                    settings.feas_tol,
                );
                let status = if cert.validated {
                    SolveStatus::Infeasible
                } else {
                    SolveStatus::Inaccurate
                };
                Ok((
                    None,
                    SolveReport {
                        status,
                        objective_value: None,
                        min_constraint_eig: None,
                        iterations,
                        primal_residual,
                        dual_residual,
                        certificate: Some(cert),
                    },
                ))
            }
            SolverStatus::MaxIterations => {
                // Return the final iterate: callers may verify and accept
                // it as a feasible point even without optimality.
                let (assignment, report) =
                    accept_solution(SolveStatus::IterationLimit, &solver)?;
                Ok((assignment, report))
            }
            _ => {
                let (assignment, report) = accept_solution(SolveStatus::Inaccurate, &solver)?;
                Ok((assignment, report))
            }
        }
    }

    fn validate_certificate(
        &self,
        z: &[f64],
        a_mat: &CscMatrix<f64>,
        bvec: &[f64],
        feas_tol: f64,
    ) -> InfeasibilityCertificate {
        let z_inf = z.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
        // A^t z, column by column of the CSC matrix.
        let mut support = 0.0_f64;
        for col in 0..a_mat.n {
            let mut acc = 0.0;
            for idx in a_mat.colptr[col]..a_mat.colptr[col + 1] {
                acc += a_mat.nzval[idx] * z[a_mat.rowval[idx]];
            }
            support = support.max(acc.abs());
        }
        let support_residual = support / z_inf;
        let primal_bound = bvec.iter().zip(z.iter()).map(|(b, z)| b * z).sum::<f64>();
        // Dual-cone membership: zero-cone components are free; PSD
        // components must be PSD.
        let mut cone_violation = 0.0_f64;
        let mut off = self.equalities.len();
        for b in &self.blocks {
            let len = b.dim * (b.dim + 1) / 2;
            let zm = unsvec(&z[off..off + len], b.dim);
            if let Ok(sym) = SymMatrix::new(zm) {
                let lam = sym.eigenvalues()[0];
                let scale = sym.spectral_scale();
                cone_violation = cone_violation.max((-lam / scale).max(0.0));
            }
            off += len;
        }
        let validated = support_residual <= feas_tol.max(1e-8) * 10.0
            && primal_bound < 0.0
            && cone_violation <= feas_tol.max(1e-8) * 10.0;
        InfeasibilityCertificate {
            dual_ray: z.to_vec(),
            primal_bound,
            support_residual,
            cone_violation,
            validated,
        }
    }

    /// Write a manifest plus per-block coefficient CSVs for external
    /// cross-checking.
    pub fn dump(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let manifest = serde_json::json!({
            "variables": self.vars.iter().map(|v| {
                serde_json::json!({
                    "name": v.name,
                    "kind": match v.kind {
                        VarKind::Scalar => "scalar".to_string(),
                        VarKind::Symmetric(d) => format!("symmetric {d}x{d}"),
                        VarKind::Rectangular(r, c) => format!("matrix {r}x{c}"),
                    },
                    "offset": v.offset,
                    "unknowns": v.kind.unknown_count(),
                })
            }).collect::<Vec<_>>(),
            "blocks": self.blocks.iter().map(|b| {
                serde_json::json!({ "name": b.name, "dim": b.dim })
            }).collect::<Vec<_>>(),
            "equalities": self.equalities.len(),
            "objective": self.objective.iter()
                .map(|(u, c)| serde_json::json!({"unknown": u, "coeff": c}))
                .collect::<Vec<_>>(),
        });
        std::fs::write(
            dir.join("manifest.json"),
            serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
        )?;
        for (bi, b) in self.blocks.iter().enumerate() {
            let (f0, coeffs) = self.canonical_block(b);
            io::write_matrix(&dir.join(format!("block_{bi}_f0.csv")), &f0)?;
            for (u, g) in &coeffs {
                io::write_matrix(&dir.join(format!("block_{bi}_coeff_{u}.csv")), g)?;
            }
        }
        Ok(())
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (m + m.transpose())
}

/// Scaled upper-triangle column-major vectorization used by the PSD cone.
fn svec(m: &DMatrix<f64>) -> Vec<f64> {
    let d = m.nrows();
    let mut v = Vec::with_capacity(d * (d + 1) / 2);
    for j in 0..d {
        for i in 0..=j {
            v.push(if i == j { m[(i, j)] } else { SQRT2 * m[(i, j)] });
        }
    }
    v
}

fn unsvec(v: &[f64], d: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    let mut idx = 0;
    for j in 0..d {
        for i in 0..=j {
            let val = if i == j { v[idx] } else { v[idx] / SQRT2 };
            m[(i, j)] = val;
            m[(j, i)] = val;
            idx += 1;
        }
    }
    m
}

fn csc_from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> CscMatrix<f64> {
    let mut per_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); cols];
    for (r, c, v) in triplets {
        per_col[*c].push((*r, *v));
    }
    let mut colptr = Vec::with_capacity(cols + 1);
    let mut rowval = Vec::new();
    let mut nzval = Vec::new();
    colptr.push(0);
    for col in per_col.iter_mut() {
        col.sort_by_key(|(r, _)| *r);
        // merge duplicates
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(col.len());
        for (r, v) in col.iter() {
            if let Some(last) = merged.last_mut() {
                if last.0 == *r {
                    last.1 += v;
                    continue;
                }
            }
            merged.push((*r, *v));
        }
        for (r, v) in merged {
            rowval.push(r);
            nzval.push(v);
        }
        colptr.push(rowval.len());
    }
    CscMatrix::new(rows, cols, colptr, rowval, nzval)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_bound_solves_to_one() {
        // maximize -x subject to x - 1 >= 0.
        let mut pb = SdpProblem::new();
        let x = pb.scalar("x").unwrap();
        let u = pb.unknown(x, 0, 0).unwrap();
        pb.maximize(&[(u, -1.0)]);
        let blk = pb.psd_block("bound", 1).unwrap();
        pb.block_constant(blk, DMatrix::from_element(1, 1, -1.0)).unwrap();
        pb.block_scalar_term(blk, x, DMatrix::from_element(1, 1, 1.0)).unwrap();
        let (assignment, report) = pb.solve(&Default::default()).unwrap();
        assert_eq!(report.status, SolveStatus::Optimal);
        let a = assignment.unwrap();
        assert!((a.scalar(x).unwrap() - 1.0).abs() < 1e-6);
        assert!((report.objective_value.unwrap() + 1.0).abs() < 1e-6);
    }

    #[test]
    fn contradictory_bounds_are_infeasible_with_certificate() {
        // x - 1 >= 0 and -x >= 0.
        let mut pb = SdpProblem::new();
        let x = pb.scalar("x").unwrap();
        let u = pb.unknown(x, 0, 0).unwrap();
        pb.maximize(&[(u, -1.0)]);
        let b1 = pb.psd_block("lower", 1).unwrap();
        pb.block_constant(b1, DMatrix::from_element(1, 1, -1.0)).unwrap();
        pb.block_scalar_term(b1, x, DMatrix::from_element(1, 1, 1.0)).unwrap();
        let b2 = pb.psd_block("upper", 1).unwrap();
        pb.block_scalar_term(b2, x, DMatrix::from_element(1, 1, -1.0)).unwrap();
        let (assignment, report) = pb.solve(&Default::default()).unwrap();
        assert!(assignment.is_none());
        assert_eq!(report.status, SolveStatus::Infeasible);
        let cert = report.certificate.unwrap();
        assert!(cert.validated);
        assert!(cert.primal_bound < 0.0);
        assert!(cert.support_residual <= 1e-7);
    }

    #[test]
    fn matrix_variable_lmi() {
        // minimize trace(Y) s.t. Y >= [[1, 0.5], [0.5, 2]]: optimum is the
        // bound itself.
        let mut pb = SdpProblem::new();
        let y = pb.symmetric("Y", 2).unwrap();
        pb.maximize_trace(y, -1.0).unwrap();
        let blk = pb.psd_block("dominates", 2).unwrap();
        let bound = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 2.0]);
        pb.block_constant(blk, -bound.clone()).unwrap();
        pb.block_term(blk, 0, 0, 1.0, None, y, false, None).unwrap();
        let (assignment, report) = pb.solve(&Default::default()).unwrap();
        assert_eq!(report.status, SolveStatus::Optimal);
        let yv = assignment.unwrap().symmetric(y).unwrap();
        assert!((yv.as_matrix() - bound).norm() < 1e-5);
    }

    #[test]
    fn rectangular_terms_and_equalities() {
        // Variables L (1x2); constraint [L e1; (L e1)^t 1] >= 0 forces
        // |L e1| <= 1; equality L e2 = 0.3; maximize L e1.
        let mut pb = SdpProblem::new();
        let l = pb.rectangular("L", 1, 2).unwrap();
        let u00 = pb.unknown(l, 0, 0).unwrap();
        let u01 = pb.unknown(l, 0, 1).unwrap();
        pb.maximize(&[(u00, 1.0)]);
        pb.equality(vec![(u01, 1.0)], 0.3);
        let blk = pb.psd_block("ball", 2).unwrap();
        pb.block_constant_at(blk, 0, 0, &DMatrix::from_element(1, 1, 1.0)).unwrap();
        pb.block_constant_at(blk, 1, 1, &DMatrix::from_element(1, 1, 1.0)).unwrap();
        let e1 = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        pb.block_term(blk, 0, 1, 1.0, None, l, false, Some(&e1)).unwrap();
        let (assignment, report) = pb.solve(&Default::default()).unwrap();
        assert_eq!(report.status, SolveStatus::Optimal);
        let lv = assignment.unwrap().rectangular(l).unwrap();
        assert!((lv[(0, 0)] - 1.0).abs() < 1e-5);
        assert!((lv[(0, 1)] - 0.3).abs() < 1e-7);
    }

    #[test]
    fn optimal_solves_pass_verification() {
        let mut pb = SdpProblem::new();
        let x = pb.scalar("x").unwrap();
        let y = pb.symmetric("Y", 3).unwrap();
        let ux = pb.unknown(x, 0, 0).unwrap();
        pb.maximize(&[(ux, 1.0)]);
        // Y - x I >= 0, I - Y >= 0  =>  x <= lambda_min(Y) <= 1.
        let b1 = pb.psd_block("gap", 3).unwrap();
        pb.block_term(b1, 0, 0, 1.0, None, y, false, None).unwrap();
        pb.block_scalar_term(b1, x, -DMatrix::identity(3, 3)).unwrap();
        let b2 = pb.psd_block("cap", 3).unwrap();
        pb.block_constant(b2, DMatrix::identity(3, 3)).unwrap();
        pb.block_term(b2, 0, 0, -1.0, None, y, false, None).unwrap();
        let (assignment, report) = pb.solve(&Default::default()).unwrap();
        assert_eq!(report.status, SolveStatus::Optimal);
        let a = assignment.unwrap();
        assert!((a.scalar(x).unwrap() - 1.0).abs() < 1e-5);
        let (ok, worst) = pb.verify_assignment(&a, 1e-8).unwrap();
        assert!(ok, "worst = {worst}");
        assert!(report.min_constraint_eig.unwrap() >= -1e-8);
    }

    #[test]
    fn hand_built_assignment_verifies() {
        let mut pb = SdpProblem::new();
        let y = pb.symmetric("Y", 2).unwrap();
        let blk = pb.psd_block("psd", 2).unwrap();
        pb.block_term(blk, 0, 0, 1.0, None, y, false, None).unwrap();
        let mut a = pb.zero_assignment();
        a.set_symmetric(y, &SymMatrix::identity(2)).unwrap();
        let (ok, worst) = pb.verify_assignment(&a, 1e-8).unwrap();
        assert!(ok);
        assert!((worst - 1.0).abs() < 1e-12);

        a.set_symmetric(y, &SymMatrix::diagonal(&[1.0, -1.0]).unwrap()).unwrap();
        let (ok, worst) = pb.verify_assignment(&a, 1e-8).unwrap();
        assert!(!ok);
        assert!((worst + 1.0).abs() < 1e-12);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut pb = SdpProblem::new();
        pb.scalar("x").unwrap();
        assert!(pb.scalar("x").is_err());
    }

    #[test]
    fn determinism_same_problem_same_answer() {
        let build = || {
            let mut pb = SdpProblem::new();
            let y = pb.symmetric("Y", 3).unwrap();
            pb.maximize_trace(y, -1.0).unwrap();
            let blk = pb.psd_block("dominates", 3).unwrap();
            let bound = DMatrix::from_row_slice(
                3,
                3,
                &[2.0, 0.3, 0.1, 0.3, 1.5, -0.2, 0.1, -0.2, 1.0],
            );
            pb.block_constant(blk, -bound).unwrap();
            pb.block_term(blk, 0, 0, 1.0, None, y, false, None).unwrap();
            pb
        };
        let (_, r1) = build().solve(&Default::default()).unwrap();
        let (_, r2) = build().solve(&Default::default()).unwrap();
        assert_eq!(r1.status, r2.status);
        assert!((r1.objective_value.unwrap() - r2.objective_value.unwrap()).abs() <= 1e-9);
        assert_eq!(r1.iterations, r2.iterations);
    }

    #[test]
    fn svec_roundtrip() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0]);
        let v = svec(&m);
        assert_eq!(v.len(), 6);
        let back = unsvec(&v, 3);
        assert!((back - m).norm() < 1e-14);
    }

    #[test]
    fn dump_writes_manifest(){
        let dir = std::env::temp_dir().join("sdp-dump-test");
        let mut pb = SdpProblem::new();
        let x = pb.scalar("x").unwrap();
        let blk = pb.psd_block("b", 1).unwrap();
        pb.block_scalar_term(blk, x, DMatrix::from_element(1, 1, 1.0)).unwrap();
        pb.dump(&dir).unwrap();
        assert!(dir.join("manifest.json").exists());
        assert!(dir.join("block_0_f0.csv").exists());
        std::fs::remove_dir_all(&dir).ok();
    }
}
