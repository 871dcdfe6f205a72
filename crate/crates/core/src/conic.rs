//! Complex Hermitian semidefinite programs over a pluggable real conic solver.
//!
//! Problems are declared with complex Hermitian matrix variables and real
//! scalars, a real linear objective, linear (in)equalities, and PSD membership
//! of affine Hermitian matrix expressions. Compilation embeds every complex
//! matrix H into the real symmetric form [[Re H, -Im H], [Im H, Re H]], which
//! is PSD exactly when H is, and hands the result to the backend in standard
//! `A x + s = b, s ∈ K` form.

use crate::linalg::{c64, hermiticity_gap, hermitian_part, max_abs_entry, CMat, C64, RMat};
use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use thiserror::Error;

pub const SQRT_2: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Error)]
pub enum ConicError {
    #[error("matrix is not Hermitian (gap {gap:.3e} exceeds tolerance {tol:.3e})")]
    NonHermitian { gap: f64, tol: f64 },
    #[error("malformed problem: {0}")]
    InvalidProblem(String),
    #[error("solver setup failed: {0}")]
    Backend(String),
}

/// Identifies a declared variable within one problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(usize);

#[derive(Debug, Clone, PartialEq)]
pub enum VarShape {
    /// n x n complex Hermitian matrix.
    Hermitian(usize),
    /// Real scalar; `nonneg` adds x >= 0.
    Scalar { nonneg: bool },
}

impl VarShape {
    fn param_count(&self) -> usize {
        match self {
            VarShape::Hermitian(n) => n * n,
            VarShape::Scalar { .. } => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Real-valued affine functional: constant + Σ Re tr(Cᵥ Xᵥ) + Σ cᵤ tᵤ.
#[derive(Debug, Clone, Default)]
pub struct LinExpr {
    pub constant: f64,
    pub mat_terms: Vec<(VarId, CMat)>,
    pub scalar_terms: Vec<(VarId, f64)>,
}

impl LinExpr {
    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            ..Self::default()
        }
    }
    pub fn scalar(var: VarId, coeff: f64) -> Self {
        Self::default().with_scalar(var, coeff)
    }
    pub fn with_mat(mut self, var: VarId, coeff: CMat) -> Self {
        self.mat_terms.push((var, coeff));
        self
    }
    pub fn with_scalar(mut self, var: VarId, coeff: f64) -> Self {
        self.scalar_terms.push((var, coeff));
        self
    }
    pub fn with_constant(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }
}

/// Complex-valued affine functional: constant + Σ tr(Cᵥ Xᵥ) + Σ cᵤ tᵤ.
/// Used for the entries of affine matrix expressions.
#[derive(Debug, Clone, Default)]
pub struct CLinExpr {
    pub constant: C64,
    pub mat_terms: Vec<(VarId, CMat)>,
    pub scalar_terms: Vec<(VarId, C64)>,
}

impl CLinExpr {
    pub fn constant(c: C64) -> Self {
        Self {
            constant: c,
            ..Self::default()
        }
    }
    pub fn with_mat(mut self, var: VarId, coeff: CMat) -> Self {
        self.mat_terms.push((var, coeff));
        self
    }
    pub fn with_scalar(mut self, var: VarId, coeff: C64) -> Self {
        self.scalar_terms.push((var, coeff));
        self
    }
}

/// Affine Hermitian matrix expression. Entries are set on the upper triangle;
/// the strict lower triangle is the conjugate mirror by construction.
#[derive(Debug, Clone)]
pub struct MatExpr {
    dim: usize,
    /// Row-major upper triangle including the diagonal.
    upper: Vec<CLinExpr>,
}

impl MatExpr {
    pub fn zeros(dim: usize) -> Self {
        let count = dim * (dim + 1) / 2;
        Self {
            dim,
            upper: vec![CLinExpr::default(); count],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn upper_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= j && j < self.dim);
        i * self.dim - i * (i + 1) / 2 + j
    }

    /// Sets entry (i, j) with i <= j; (j, i) is implicitly the conjugate.
    pub fn set(&mut self, i: usize, j: usize, e: CLinExpr) {
        let idx = self.upper_index(i, j);
        self.upper[idx] = e;
    }

    pub fn get(&self, i: usize, j: usize) -> &CLinExpr {
        &self.upper[self.upper_index(i, j)]
    }
}

#[derive(Debug, Clone)]
enum Constraint {
    /// expr == 0
    Eq(LinExpr),
    /// expr >= 0
    Geq(LinExpr),
}

/// A complex SDP in variables-objective-constraints form.
pub struct SdpProblem {
    names: Vec<String>,
    shapes: Vec<VarShape>,
    sense: Sense,
    objective: LinExpr,
    lin: Vec<Constraint>,
    psd_vars: Vec<VarId>,
    psd_exprs: Vec<MatExpr>,
}

impl Default for SdpProblem {
    fn default() -> Self {
        Self::new()
    }
}

impl SdpProblem {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            shapes: Vec::new(),
            sense: Sense::Minimize,
            objective: LinExpr::default(),
            lin: Vec::new(),
            psd_vars: Vec::new(),
            psd_exprs: Vec::new(),
        }
    }

    pub fn hermitian_var(&mut self, name: &str, n: usize) -> VarId {
        self.names.push(name.to_string());
        self.shapes.push(VarShape::Hermitian(n));
        VarId(self.shapes.len() - 1)
    }

    pub fn scalar_var(&mut self, name: &str, nonneg: bool) -> VarId {
        self.names.push(name.to_string());
        self.shapes.push(VarShape::Scalar { nonneg });
        VarId(self.shapes.len() - 1)
    }

    pub fn minimize(&mut self, obj: LinExpr) {
        self.sense = Sense::Minimize;
        self.objective = obj;
    }

    pub fn maximize(&mut self, obj: LinExpr) {
        self.sense = Sense::Maximize;
        self.objective = obj;
    }

    pub fn add_eq(&mut self, expr: LinExpr) {
        self.lin.push(Constraint::Eq(expr));
    }

    /// Adds expr >= 0.
    pub fn add_geq(&mut self, expr: LinExpr) {
        self.lin.push(Constraint::Geq(expr));
    }

    pub fn require_psd(&mut self, var: VarId) {
        self.psd_vars.push(var);
    }

    pub fn add_psd_expr(&mut self, expr: MatExpr) {
        self.psd_exprs.push(expr);
    }

    pub fn var_shape(&self, var: VarId) -> &VarShape {
        &self.shapes[var.0]
    }

    /// Solves with the default backend.
    pub fn solve(&self, tol: &Tolerances) -> Result<SdpSolution, ConicError> {
        ClarabelBackend.solve(self, tol)
    }

    fn check_well_formed(&self) -> Result<(), ConicError> {
        let check_var = |v: VarId, matlike: bool, n: usize| -> Result<(), ConicError> {
            let shape = self.shapes.get(v.0).ok_or_else(|| {
                ConicError::InvalidProblem(format!("undeclared variable id {}", v.0))
            })?;
            match (matlike, shape) {
                (true, VarShape::Hermitian(m)) if *m == n => Ok(()),
                (true, _) => Err(ConicError::InvalidProblem(format!(
                    "variable {} used with a {n}x{n} coefficient but has shape {shape:?}",
                    self.names[v.0]
                ))),
                (false, VarShape::Scalar { .. }) => Ok(()),
                (false, _) => Err(ConicError::InvalidProblem(format!(
                    "variable {} used as a scalar but has shape {shape:?}",
                    self.names[v.0]
                ))),
            }
        };
        let check_lin = |e: &LinExpr| -> Result<(), ConicError> {
            for (v, c) in &e.mat_terms {
                if c.nrows() != c.ncols() {
                    return Err(ConicError::InvalidProblem("non-square coefficient".into()));
                }
                check_var(*v, true, c.nrows())?;
            }
            for (v, _) in &e.scalar_terms {
                check_var(*v, false, 0)?;
            }
            Ok(())
        };
        check_lin(&self.objective)?;
        for c in &self.lin {
            match c {
                Constraint::Eq(e) | Constraint::Geq(e) => check_lin(e)?,
            }
        }
        for v in &self.psd_vars {
            if !matches!(self.shapes.get(v.0), Some(VarShape::Hermitian(_))) {
                return Err(ConicError::InvalidProblem(
                    "PSD requirement on a non-matrix variable".into(),
                ));
            }
        }
        for m in &self.psd_exprs {
            for e in &m.upper {
                for (v, c) in &e.mat_terms {
                    check_var(*v, true, c.nrows())?;
                }
                for (v, _) in &e.scalar_terms {
                    check_var(*v, false, 0)?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct SolverStats {
    pub iterations: u32,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub dual_objective: f64,
}

#[derive(Debug, Clone)]
pub enum VarValue {
    Hermitian(CMat),
    Scalar(f64),
}

impl VarValue {
    pub fn as_mat(&self) -> &CMat {
        match self {
            VarValue::Hermitian(m) => m,
            VarValue::Scalar(_) => panic!("scalar variable used as matrix"),
        }
    }
    pub fn as_scalar(&self) -> f64 {
        match self {
            VarValue::Scalar(s) => *s,
            VarValue::Hermitian(_) => panic!("matrix variable used as scalar"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SolveStatus,
    /// Per-variable values in declaration order; empty unless Optimal.
    pub values: Vec<VarValue>,
    pub objective_value: f64,
    pub stats: SolverStats,
}

impl SdpSolution {
    pub fn value(&self, var: VarId) -> &VarValue {
        &self.values[var.0]
    }
}

#[derive(Debug, Clone)]
pub struct Tolerances {
    /// Feasibility tolerance passed to the backend.
    pub feasibility: f64,
    /// Relative duality-gap tolerance.
    pub gap_rel: f64,
    /// Floor on the minimum eigenvalue of returned PSD variables,
    /// relative to the matrix scale.
    pub psd_floor: f64,
    pub max_iter: u32,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            feasibility: 1e-8,
            gap_rel: 1e-8,
            psd_floor: 1e-8,
            max_iter: 200,
        }
    }
}

/// Real symmetric embedding [[Re H, -Im H], [Im H, Re H]] of a Hermitian H.
/// PSD iff H is PSD; each eigenvalue of H appears twice; the trace doubles.
pub fn embed_real(h: &CMat) -> Result<RMat, ConicError> {
    let gap = hermiticity_gap(h);
    let tol = 1e-10 * max_abs_entry(h).max(1.0);
    if gap > tol {
        return Err(ConicError::NonHermitian { gap, tol });
    }
    let h = hermitian_part(h);
    let n = h.nrows();
    let mut out = RMat::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = h[(i, j)];
            out[(i, j)] = z.re;
            out[(i + n, j + n)] = z.re;
            out[(i, j + n)] = -z.im;
            out[(i + n, j)] = z.im;
        }
    }
    Ok(out)
}

/// Extracts the Hermitian matrix back out of its real embedding.
pub fn extract_complex(e: &RMat) -> CMat {
    let n = e.nrows() / 2;
    CMat::from_fn(n, n, |i, j| {
        let re = 0.5 * (e[(i, j)] + e[(i + n, j + n)]);
        let im = 0.5 * (e[(i + n, j)] - e[(i, j + n)]);
        c64(re, im)
    })
}

// ---------------------------------------------------------------------------
// compilation to standard conic form

/// Hermitian parameterization: row-major upper triangle; diagonal entries are
/// one real parameter, off-diagonal entries a (re, im) pair.
fn hermitian_params(n: usize) -> Vec<(usize, usize, bool)> {
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        out.push((i, i, false));
        for j in (i + 1)..n {
            out.push((i, j, false));
            out.push((i, j, true));
        }
    }
    out
}

/// tr(C · H_p) for the basis matrix H_p of parameter p = (i, j, is_imag):
/// H = E_ii for the diagonal, E_ij + E_ji for re pairs, i(E_ij - E_ji) for im.
fn trace_coeff(c: &CMat, i: usize, j: usize, is_imag: bool) -> C64 {
    if i == j {
        c[(i, i)]
    } else if !is_imag {
        c[(j, i)] + c[(i, j)]
    } else {
        (c[(j, i)] - c[(i, j)]) * c64(0.0, 1.0)
    }
}

struct Layout {
    offsets: Vec<usize>,
    total: usize,
}

fn layout(shapes: &[VarShape]) -> Layout {
    let mut offsets = Vec::with_capacity(shapes.len());
    let mut total = 0;
    for s in shapes {
        offsets.push(total);
        total += s.param_count();
    }
    Layout { offsets, total }
}

fn mat_from_params(n: usize, params: &[f64]) -> CMat {
    let mut m = CMat::zeros(n, n);
    for (p, (i, j, is_imag)) in hermitian_params(n).iter().enumerate() {
        let x = params[p];
        if i == j {
            m[(*i, *j)] += c64(x, 0.0);
        } else if !is_imag {
            m[(*i, *j)] += c64(x, 0.0);
            m[(*j, *i)] += c64(x, 0.0);
        } else {
            m[(*i, *j)] += c64(0.0, x);
            m[(*j, *i)] += c64(0.0, -x);
        }
    }
    m
}

/// Coefficients of a real linear functional over all parameters.
fn lin_row(expr: &LinExpr, shapes: &[VarShape], lay: &Layout) -> Vec<(usize, f64)> {
    let mut row = Vec::new();
    for (v, c) in &expr.mat_terms {
        let n = match &shapes[v.0] {
            VarShape::Hermitian(n) => *n,
            VarShape::Scalar { .. } => unreachable!(),
        };
        let base = lay.offsets[v.0];
        for (p, (i, j, im)) in hermitian_params(n).iter().enumerate() {
            let coeff = trace_coeff(c, *i, *j, *im).re;
            if coeff != 0.0 {
                row.push((base + p, coeff));
            }
        }
    }
    for (v, c) in &expr.scalar_terms {
        if *c != 0.0 {
            row.push((lay.offsets[v.0], *c));
        }
    }
    row
}

/// Complex coefficient of entry-level functionals per parameter.
fn clin_coeffs(expr: &CLinExpr, shapes: &[VarShape], lay: &Layout) -> Vec<(usize, C64)> {
    let mut out = Vec::new();
    for (v, c) in &expr.mat_terms {
        let n = match &shapes[v.0] {
            VarShape::Hermitian(n) => *n,
            VarShape::Scalar { .. } => unreachable!(),
        };
        let base = lay.offsets[v.0];
        for (p, (i, j, im)) in hermitian_params(n).iter().enumerate() {
            let coeff = trace_coeff(c, *i, *j, *im);
            if coeff != c64(0.0, 0.0) {
                out.push((base + p, coeff));
            }
        }
    }
    for (v, c) in &expr.scalar_terms {
        if *c != c64(0.0, 0.0) {
            out.push((lay.offsets[v.0], *c));
        }
    }
    out
}

/// svec of a real symmetric matrix in the backend's PSD-triangle layout:
/// column-major upper triangle with off-diagonal entries scaled by √2.
fn svec(m: &RMat) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for j in 0..n {
        for i in 0..=j {
            let v = m[(i, j)];
            out.push(if i == j { v } else { v * SQRT_2 });
        }
    }
    out
}

pub struct Compiled {
    pub nparams: usize,
    pub q: Vec<f64>,
    pub b: Vec<f64>,
    pub triplets: Vec<(usize, usize, f64)>,
    pub cones: Vec<ConeSpec>,
    pub flip_sign: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConeSpec {
    Zero(usize),
    Nonneg(usize),
    PsdTriangle(usize),
}

pub fn compile(problem: &SdpProblem) -> Result<Compiled, ConicError> {
    problem.check_well_formed()?;
    let lay = layout(&problem.shapes);
    let flip_sign = problem.sense == Sense::Maximize;

    let mut q = vec![0.0; lay.total];
    for (p, coeff) in lin_row(&problem.objective, &problem.shapes, &lay) {
        q[p] += if flip_sign { -coeff } else { coeff };
    }

    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    let mut b: Vec<f64> = Vec::new();
    let mut cones: Vec<ConeSpec> = Vec::new();
    let mut row = 0usize;

    // equalities: a·x = -const  (s = 0)
    let mut eq_rows = 0;
    for c in &problem.lin {
        if let Constraint::Eq(e) = c {
            for (p, coeff) in lin_row(e, &problem.shapes, &lay) {
                triplets.push((row, p, coeff));
            }
            b.push(-e.constant);
            row += 1;
            eq_rows += 1;
        }
    }
    if eq_rows > 0 {
        cones.push(ConeSpec::Zero(eq_rows));
    }

    // inequalities expr >= 0: s = const + a·x  (A row is -a, b is const)
    let mut ineq_rows = 0;
    for (v, shape) in problem.shapes.iter().enumerate() {
        if let VarShape::Scalar { nonneg: true } = shape {
            triplets.push((row, lay.offsets[v], -1.0));
            b.push(0.0);
            row += 1;
            ineq_rows += 1;
        }
    }
    for c in &problem.lin {
        if let Constraint::Geq(e) = c {
            for (p, coeff) in lin_row(e, &problem.shapes, &lay) {
                triplets.push((row, p, -coeff));
            }
            b.push(e.constant);
            row += 1;
            ineq_rows += 1;
        }
    }
    if ineq_rows > 0 {
        cones.push(ConeSpec::Nonneg(ineq_rows));
    }

    // PSD variables: s = svec(embed(X))
    for v in &problem.psd_vars {
        let n = match &problem.shapes[v.0] {
            VarShape::Hermitian(n) => *n,
            VarShape::Scalar { .. } => unreachable!(),
        };
        let base = lay.offsets[v.0];
        let cone_dim = 2 * n;
        let rows_here = cone_dim * (cone_dim + 1) / 2;
        for (p, (i, j, im)) in hermitian_params(n).iter().enumerate() {
            let mut basis = CMat::zeros(n, n);
            if i == j {
                basis[(*i, *j)] = c64(1.0, 0.0);
            } else if !im {
                basis[(*i, *j)] = c64(1.0, 0.0);
                basis[(*j, *i)] = c64(1.0, 0.0);
            } else {
                basis[(*i, *j)] = c64(0.0, 1.0);
                basis[(*j, *i)] = c64(0.0, -1.0);
            }
            let emb = embed_real(&basis)?;
            for (r, val) in svec(&emb).into_iter().enumerate() {
                if val != 0.0 {
                    triplets.push((row + r, base + p, -val));
                }
            }
        }
        b.extend(std::iter::repeat(0.0).take(rows_here));
        row += rows_here;
        cones.push(ConeSpec::PsdTriangle(cone_dim));
    }

    // affine PSD expressions
    for mexpr in &problem.psd_exprs {
        let dim = mexpr.dim;
        let cone_dim = 2 * dim;
        let rows_here = cone_dim * (cone_dim + 1) / 2;

        // constant part
        let mut s0 = CMat::zeros(dim, dim);
        for i in 0..dim {
            for j in i..dim {
                let e = mexpr.get(i, j);
                s0[(i, j)] = e.constant;
                if i != j {
                    s0[(j, i)] = e.constant.conj();
                } else if e.constant.im.abs() > 1e-12 * e.constant.re.abs().max(1.0) {
                    return Err(ConicError::InvalidProblem(
                        "diagonal entry of a PSD expression has a complex constant".into(),
                    ));
                }
            }
        }
        let emb0 = embed_real(&s0)?;
        b.extend(svec(&emb0));

        // per-parameter coefficient matrices
        let mut per_param: std::collections::BTreeMap<usize, CMat> =
            std::collections::BTreeMap::new();
        for i in 0..dim {
            for j in i..dim {
                let e = mexpr.get(i, j);
                for (p, coeff) in clin_coeffs(e, &problem.shapes, &lay) {
                    let m = per_param.entry(p).or_insert_with(|| CMat::zeros(dim, dim));
                    m[(i, j)] += coeff;
                    if i != j {
                        m[(j, i)] += coeff.conj();
                    } else if coeff.im.abs() > 1e-12 * coeff.norm().max(1.0) {
                        return Err(ConicError::InvalidProblem(
                            "diagonal entry of a PSD expression is not real-valued".into(),
                        ));
                    }
                }
            }
        }
        for (p, mat) in per_param {
            let emb = embed_real(&mat)?;
            for (r, val) in svec(&emb).into_iter().enumerate() {
                if val != 0.0 {
                    triplets.push((row + r, p, -val));
                }
            }
        }
        row += rows_here;
        cones.push(ConeSpec::PsdTriangle(cone_dim));
    }

    Ok(Compiled {
        nparams: lay.total,
        q,
        b,
        triplets,
        cones,
        flip_sign,
    })
}

/// Text dump of the compiled standard form, for cross-checks with external
/// solvers.
pub fn dump_standard_form(c: &Compiled) -> String {
    use std::fmt::Write as _;
    let mut s = String::new();
    writeln!(s, "conic-program v1").unwrap();
    writeln!(s, "nvars {}", c.nparams).unwrap();
    writeln!(s, "nrows {}", c.b.len()).unwrap();
    for cone in &c.cones {
        match cone {
            ConeSpec::Zero(n) => writeln!(s, "cone zero {n}").unwrap(),
            ConeSpec::Nonneg(n) => writeln!(s, "cone nonneg {n}").unwrap(),
            ConeSpec::PsdTriangle(n) => writeln!(s, "cone psdtriangle {n}").unwrap(),
        }
    }
    for (i, v) in c.q.iter().enumerate() {
        if *v != 0.0 {
            writeln!(s, "q {i} {v:.17e}").unwrap();
        }
    }
    for (i, v) in c.b.iter().enumerate() {
        if *v != 0.0 {
            writeln!(s, "b {i} {v:.17e}").unwrap();
        }
    }
    for (r, cidx, v) in &c.triplets {
        writeln!(s, "A {r} {cidx} {v:.17e}").unwrap();
    }
    s
}

/// Backend interface: any conic solver supporting zero, nonnegative, and PSD
/// triangle cones can sit behind the problem layer.
pub trait SdpBackend {
    fn solve(&self, problem: &SdpProblem, tol: &Tolerances) -> Result<SdpSolution, ConicError>;
}

/// Default backend: Clarabel's interior-point method.
pub struct ClarabelBackend;

impl SdpBackend for ClarabelBackend {
    fn solve(&self, problem: &SdpProblem, tol: &Tolerances) -> Result<SdpSolution, ConicError> {
        let compiled = compile(problem)?;
        let nrows = compiled.b.len();
        let mut rows = Vec::with_capacity(compiled.triplets.len());
        let mut cols = Vec::with_capacity(compiled.triplets.len());
        let mut vals = Vec::with_capacity(compiled.triplets.len());
        for (ri, ci, vi) in &compiled.triplets {
            rows.push(*ri);
            cols.push(*ci);
            vals.push(*vi);
        }
        let a = CscMatrix::new_from_triplets(nrows, compiled.nparams, rows, cols, vals);
        let p = CscMatrix::<f64>::zeros((compiled.nparams, compiled.nparams));
        let cones: Vec<SupportedConeT<f64>> = compiled
            .cones
            .iter()
            .map(|c| match c {
                ConeSpec::Zero(n) => SupportedConeT::ZeroConeT(*n),
                ConeSpec::Nonneg(n) => SupportedConeT::NonnegativeConeT(*n),
                ConeSpec::PsdTriangle(n) => SupportedConeT::PSDTriangleConeT(*n),
            })
            .collect();
        let settings = DefaultSettingsBuilder::default()
            .verbose(std::env::var_os("ISAC_SOLVER_VERBOSE").is_some())
            .max_iter(tol.max_iter)
            .tol_feas(tol.feasibility)
            .tol_gap_rel(tol.gap_rel)
            .build()
            .map_err(|e| ConicError::Backend(format!("{e:?}")))?;
        let mut solver = DefaultSolver::new(&p, &compiled.q, &a, &compiled.b, &cones, settings)
            .map_err(|e| ConicError::Backend(format!("{e:?}")))?;
        solver.solve();
        let sol = &solver.solution;

        let status = match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::Optimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                SolveStatus::Infeasible
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                SolveStatus::Unbounded
            }
            _ => SolveStatus::NumericalFailure,
        };

        let mut values = Vec::new();
        if status == SolveStatus::Optimal {
            let lay = layout(&problem.shapes);
            for (v, shape) in problem.shapes.iter().enumerate() {
                let base = lay.offsets[v];
                match shape {
                    VarShape::Hermitian(n) => {
                        let params = &sol.x[base..base + n * n];
                        values.push(VarValue::Hermitian(mat_from_params(*n, params)));
                    }
                    VarShape::Scalar { .. } => values.push(VarValue::Scalar(sol.x[base])),
                }
            }
            for v in &problem.psd_vars {
                if let VarValue::Hermitian(m) = &values[v.0] {
                    let floor = -tol.psd_floor * max_abs_entry(m).max(1.0);
                    let min_eig = crate::linalg::min_eigenvalue(m);
                    if min_eig < floor {
                        return Ok(SdpSolution {
                            status: SolveStatus::NumericalFailure,
                            values: Vec::new(),
                            objective_value: f64::NAN,
                            stats: stats_from(sol, compiled.flip_sign),
                        });
                    }
                }
            }
        }

        let sign = if compiled.flip_sign { -1.0 } else { 1.0 };
        Ok(SdpSolution {
            status,
            values,
            objective_value: sign * sol.obj_val,
            stats: stats_from(sol, compiled.flip_sign),
        })
    }
}

fn stats_from(sol: &clarabel::solver::DefaultSolution<f64>, flip: bool) -> SolverStats {
    let sign = if flip { -1.0 } else { 1.0 };
    SolverStats {
        iterations: sol.iterations,
        primal_residual: sol.r_prim,
        dual_residual: sol.r_dual,
        dual_objective: sign * sol.obj_val_dual,
    }
}
