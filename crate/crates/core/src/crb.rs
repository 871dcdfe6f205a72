//! Fisher information and Cramér-Rao bounds for target estimation at each
//! IRS, in closed form and through independent numeric routes.
//!
//! Point targets: the unknowns are the direction θ and the complex reflection
//! coefficient β; the echo mean is β·ã(θ)aᵀ(θ)·Φ·G·X. The 3x3 Fisher matrix
//! has closed-form blocks, and the direction bound admits an explicit form in
//! the reflection phases. Extended targets: the unknown is the full Ns x N
//! response matrix and the bound reduces to a trace of an inverse that does
//! not depend on the phases at all.

use crate::linalg::{
    c64, herm_eigen, hermiticity_gap, index_diag, max_abs_entry, min_eigenvalue, CMat, CVec, C64,
    RMat,
};
use crate::rxbf::ReflectSolution;
use crate::scenario::{steering_vector, Scenario};
use crate::txbf::TransmitSolution;
use nalgebra::{Matrix3, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CrbError {
    #[error("index {index} out of range (have {count})")]
    BadIndex { index: usize, count: usize },
    #[error("covariance is not Hermitian PSD: {0}")]
    NonPsdCovariance(String),
    #[error("covariance has shape {got:?}, expected ({want}, {want})")]
    CovarianceShape { got: (usize, usize), want: usize },
    #[error("reflection vector is not unit-modulus (entry {index} has magnitude {magnitude})")]
    NonUnitModulus { index: usize, magnitude: f64 },
    #[error("closed-form routes disagree: schur {schur:.12e} vs phase form {phase_form:.12e}")]
    RouteMismatch { schur: f64, phase_form: f64 },
    #[error("finite-difference step {0} outside [1e-8, 1e-4]")]
    StepOutOfRange(f64),
    #[error("dwell {t} too short for deterministic snapshots of {m} antennas")]
    DwellTooShort { t: usize, m: usize },
}

/// A bound value: strictly positive and finite, or flagged infinite when the
/// information matrix is singular (point) / the response is not estimable
/// (extended).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CrbValue {
    Finite(f64),
    Infinite,
}

impl CrbValue {
    pub fn is_finite(&self) -> bool {
        matches!(self, CrbValue::Finite(_))
    }
    pub fn finite(&self) -> Option<f64> {
        match self {
            CrbValue::Finite(v) => Some(*v),
            CrbValue::Infinite => None,
        }
    }
    /// Finite value or +inf, for comparisons.
    pub fn as_f64(&self) -> f64 {
        match self {
            CrbValue::Finite(v) => *v,
            CrbValue::Infinite => f64::INFINITY,
        }
    }
}

impl std::fmt::Display for CrbValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CrbValue::Finite(v) => write!(f, "{v}"),
            CrbValue::Infinite => write!(f, "inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TargetModel {
    Point,
    Extended,
}

impl std::fmt::Display for TargetModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TargetModel::Point => write!(f, "point"),
            TargetModel::Extended => write!(f, "extended"),
        }
    }
}

/// 3x3 Fisher information for (θ, Re β, Im β) at one IRS.
#[derive(Debug, Clone, PartialEq)]
pub struct PointFim {
    pub matrix: Matrix3<f64>,
}

impl PointFim {
    pub fn theta_theta(&self) -> f64 {
        self.matrix[(0, 0)]
    }
    pub fn theta_beta(&self) -> Vector2<f64> {
        Vector2::new(self.matrix[(0, 1)], self.matrix[(0, 2)])
    }
    /// The β block is a nonnegative multiple of I₂; returns that multiple.
    pub fn beta_beta_scale(&self) -> f64 {
        self.matrix[(1, 1)]
    }
}

/// Geometry-derived quantities shared by the closed forms: the reflect-side
/// steering diagonal A = diag(a(θ)), B = A·G, U = B·Rx·Bᴴ, the index
/// diagonals, and the response derivative Ė(θ).
pub struct SensingDerived {
    pub steer_reflect: CVec,
    pub steer_sensor: CVec,
    pub a_diag: CMat,
    pub d_n: CMat,
    pub d_ns: CMat,
    pub b_mat: CMat,
    pub u_mat: CMat,
    pub e_mat: CMat,
    pub e_dot: CMat,
}

impl SensingDerived {
    pub fn new(scenario: &Scenario, l: usize, theta: f64, r_x: &CMat) -> Self {
        let cfg = &scenario.config;
        let n = cfg.num_irs_elements;
        let ns = cfg.num_irs_sensors;
        let g = &scenario.bs_irs_channels[l];
        let a = steering_vector(theta, n, cfg.reflect_spacing, cfg.wavelength);
        let a_s = steering_vector(theta, ns, cfg.sensor_spacing, cfg.wavelength);
        let a_diag = CMat::from_fn(n, n, |i, j| if i == j { a[i] } else { c64(0.0, 0.0) });
        let d_n = index_diag(n);
        let d_ns = index_diag(ns);
        let b_mat = &a_diag * g;
        let u_mat = &b_mat * r_x * b_mat.adjoint();
        let e_mat = &a_s * a.transpose();
        let e_dot = e_dot(cfg.wavelength, cfg.reflect_spacing, cfg.sensor_spacing, theta, &a, &a_s);
        Self {
            steer_reflect: a,
            steer_sensor: a_s,
            a_diag,
            d_n,
            d_ns,
            b_mat,
            u_mat,
            e_mat,
            e_dot,
        }
    }
}

/// Derivative of E(θ) = ã(θ)aᵀ(θ) with respect to θ:
/// j·(2π/λ)·cosθ·(d_s·D_Ns·ã aᵀ + d·ã aᵀ·D_N).
fn e_dot(wavelength: f64, d: f64, ds: f64, theta: f64, a: &CVec, a_s: &CVec) -> CMat {
    let ns = a_s.len();
    let n = a.len();
    let c = 2.0 * std::f64::consts::PI * theta.cos() / wavelength;
    let mut out = CMat::zeros(ns, n);
    for r in 0..ns {
        for col in 0..n {
            let scale = ds * r as f64 + d * col as f64;
            out[(r, col)] = c64(0.0, c * scale) * a_s[r] * a[col];
        }
    }
    out
}

fn check_cov(r_x: &CMat, m: usize) -> Result<(), CrbError> {
    if r_x.shape() != (m, m) {
        return Err(CrbError::CovarianceShape {
            got: r_x.shape(),
            want: m,
        });
    }
    let scale = max_abs_entry(r_x).max(1e-300);
    if hermiticity_gap(r_x) > 1e-9 * scale {
        return Err(CrbError::NonPsdCovariance("not Hermitian".into()));
    }
    let min_eig = min_eigenvalue(r_x);
    if min_eig < -1e-9 * scale {
        return Err(CrbError::NonPsdCovariance(format!(
            "minimum eigenvalue {min_eig:.3e} below tolerance"
        )));
    }
    Ok(())
}

fn check_phases(phi: &CVec, n: usize) -> Result<(), CrbError> {
    if phi.len() != n {
        return Err(CrbError::BadIndex {
            index: phi.len(),
            count: n,
        });
    }
    for (i, z) in phi.iter().enumerate() {
        if (z.norm() - 1.0).abs() > 1e-9 {
            return Err(CrbError::NonUnitModulus {
                index: i,
                magnitude: z.norm(),
            });
        }
    }
    Ok(())
}

fn check_irs_index(scenario: &Scenario, l: usize) -> Result<(), CrbError> {
    if l >= scenario.num_irs() {
        return Err(CrbError::BadIndex {
            index: l,
            count: scenario.num_irs(),
        });
    }
    Ok(())
}

fn phi_diag(phi: &CVec) -> CMat {
    let n = phi.len();
    CMat::from_fn(n, n, |i, j| if i == j { phi[i] } else { c64(0.0, 0.0) })
}

/// Fisher information for (θ, β) at IRS l, evaluated at the scenario's true
/// target parameters.
pub fn point_fim(
    scenario: &Scenario,
    l: usize,
    r_x: &CMat,
    phi: &CVec,
) -> Result<PointFim, CrbError> {
    check_irs_index(scenario, l)?;
    point_fim_at(
        scenario,
        l,
        r_x,
        phi,
        scenario.target_doa[l],
        scenario.target_coeff[l],
    )
}

/// Fisher information with explicit target parameters (used when the design
/// works from an assumed direction).
pub fn point_fim_at(
    scenario: &Scenario,
    l: usize,
    r_x: &CMat,
    phi: &CVec,
    theta: f64,
    beta: C64,
) -> Result<PointFim, CrbError> {
    check_irs_index(scenario, l)?;
    let cfg = &scenario.config;
    check_cov(r_x, cfg.num_bs_antennas)?;
    check_phases(phi, cfg.num_irs_elements)?;

    let derived = SensingDerived::new(scenario, l, theta, r_x);
    let g = &scenario.bs_irs_channels[l];
    let phi_m = phi_diag(phi);
    // Mid = Φ G Rx Gᴴ Φᴴ
    let pg = &phi_m * g;
    let mid = &pg * r_x * pg.adjoint();

    let coeff = 2.0 * cfg.dwell_symbols as f64 / cfg.sense_noise_power;
    let e = &derived.e_mat;
    let ed = &derived.e_dot;

    let j_tt = coeff * beta.norm_sqr() * trace_prod_re(ed, &mid, ed);
    let z = trace_prod(e, &mid, ed);
    let bz = beta.conj() * z;
    let j_tb1 = coeff * bz.re;
    let j_tb2 = coeff * (c64(0.0, 1.0) * bz).re;
    let j_bb = coeff * trace_prod_re(e, &mid, e);

    let matrix = Matrix3::new(
        j_tt, j_tb1, j_tb2, //
        j_tb1, j_bb, 0.0, //
        j_tb2, 0.0, j_bb,
    );
    Ok(PointFim { matrix })
}

/// tr(A · Mid · Bᴴ), complex.
fn trace_prod(a: &CMat, mid: &CMat, b: &CMat) -> C64 {
    // tr(A Mid Bᴴ) = sum_{i} (A Mid)_{i,:} · conj(B_{i,:})
    let am = a * mid;
    let mut acc = c64(0.0, 0.0);
    for i in 0..am.nrows() {
        for j in 0..am.ncols() {
            acc += am[(i, j)] * b[(i, j)].conj();
        }
    }
    acc
}

fn trace_prod_re(a: &CMat, mid: &CMat, b: &CMat) -> f64 {
    trace_prod(a, mid, b).re
}

/// The three phase-form scalars of the direction bound: s0 = φᵀUφ*,
/// s1 = φᵀUD_Nφ*, q = φᵀD_N U D_N φ*.
pub struct PhaseFormTerms {
    pub s0: f64,
    pub s1: C64,
    pub q: f64,
}

pub fn phase_form_terms(u: &CMat, phi: &CVec) -> PhaseFormTerms {
    let n = phi.len();
    let psi = CVec::from_fn(n, |i, _| phi[i].conj());
    let d = index_diag(n);
    let u_psi = u * &psi;
    let s0 = psi.dotc(&u_psi).re;
    let d_psi = &d * &psi;
    let s1 = psi.dotc(&(u * &d_psi));
    let q = d_psi.dotc(&(u * &d_psi)).re;
    PhaseFormTerms { s0, s1, q }
}

/// Numerator constant of the direction bound, σs²λ²/(8π²T|β|²cos²θ).
/// The element spacings live in the denominator terms, so the formula stays
/// exact when reflect and sensor spacings differ.
pub fn crb_kappa(scenario: &Scenario, theta: f64, beta_abs2: f64) -> f64 {
    let cfg = &scenario.config;
    let lam = cfg.wavelength;
    cfg.sense_noise_power * lam * lam
        / (8.0
            * std::f64::consts::PI.powi(2)
            * cfg.dwell_symbols as f64
            * beta_abs2
            * theta.cos().powi(2))
}

/// Denominator f1 - f2 of the phase-form bound:
/// f1 = d_s²·(Ns-1)Ns(Ns+1)/12·s0 + d²·Ns·q, f2 = d²·Ns·|s1|²/s0.
pub fn crb_denominator(scenario: &Scenario, terms: &PhaseFormTerms) -> Option<f64> {
    let cfg = &scenario.config;
    let ns = cfg.num_irs_sensors as f64;
    let d = cfg.reflect_spacing;
    let ds = cfg.sensor_spacing;
    let s3 = (ns - 1.0) * ns * (ns + 1.0) / 12.0;
    if terms.s0 <= 0.0 || terms.s0 < 1e-15 * terms.q.abs().max(1.0) {
        return None;
    }
    let f1 = ds * ds * s3 * terms.s0 + d * d * ns * terms.q;
    let f2 = d * d * ns * terms.s1.norm_sqr() / terms.s0;
    Some(f1 - f2)
}

/// Direction bound via the explicit phase form.
fn point_crb_phase_form(
    scenario: &Scenario,
    derived: &SensingDerived,
    phi: &CVec,
    theta: f64,
    beta_abs2: f64,
) -> CrbValue {
    let terms = phase_form_terms(&derived.u_mat, phi);
    let kappa = crb_kappa(scenario, theta, beta_abs2);
    match crb_denominator(scenario, &terms) {
        Some(denom) if denom > 1e-12 * terms.s0.max(1e-300) => CrbValue::Finite(kappa / denom),
        _ => CrbValue::Infinite,
    }
}

/// Direction bound via the Schur complement of the 3x3 Fisher matrix.
pub fn point_crb_schur(fim: &PointFim) -> CrbValue {
    let j_tt = fim.theta_theta();
    let j_bb = fim.beta_beta_scale();
    if j_bb <= 0.0 {
        return CrbValue::Infinite;
    }
    let tb = fim.theta_beta();
    let denom = j_tt - (tb[0] * tb[0] + tb[1] * tb[1]) / j_bb;
    if denom > 1e-12 * j_tt.abs().max(1e-300) {
        CrbValue::Finite(1.0 / denom)
    } else {
        CrbValue::Infinite
    }
}

/// Direction bound as [J⁻¹]₁₁ from a direct 3x3 inverse; an independent route
/// used by tests.
pub fn point_crb_inverse(fim: &PointFim) -> CrbValue {
    match fim.matrix.try_inverse() {
        Some(inv) if inv[(0, 0)].is_finite() && inv[(0, 0)] > 0.0 => CrbValue::Finite(inv[(0, 0)]),
        _ => CrbValue::Infinite,
    }
}

/// Direction CRB at IRS l for the given transmit covariance and phases,
/// evaluated at the scenario's true target parameters. Both closed forms are
/// evaluated; they must agree to 1e-8 relative and the phase form is returned.
pub fn point_crb(
    scenario: &Scenario,
    l: usize,
    r_x: &CMat,
    phi: &CVec,
) -> Result<CrbValue, CrbError> {
    check_irs_index(scenario, l)?;
    point_crb_at(
        scenario,
        l,
        r_x,
        phi,
        scenario.target_doa[l],
        scenario.target_coeff[l],
    )
}

/// Direction CRB with explicit target parameters.
pub fn point_crb_at(
    scenario: &Scenario,
    l: usize,
    r_x: &CMat,
    phi: &CVec,
    theta: f64,
    beta: C64,
) -> Result<CrbValue, CrbError> {
    let fim = point_fim_at(scenario, l, r_x, phi, theta, beta)?;
    let derived = SensingDerived::new(scenario, l, theta, r_x);
    let schur = point_crb_schur(&fim);
    let phase = point_crb_phase_form(scenario, &derived, phi, theta, beta.norm_sqr());
    match (schur, phase) {
        (CrbValue::Finite(a), CrbValue::Finite(b)) => {
            if (a - b).abs() > 1e-8 * a.abs().max(b.abs()) {
                Err(CrbError::RouteMismatch {
                    schur: a,
                    phase_form: b,
                })
            } else {
                Ok(CrbValue::Finite(b))
            }
        }
        // Singularity thresholds differ slightly between routes; infinite wins.
        _ => Ok(CrbValue::Infinite),
    }
}

/// Fast phase-form-only evaluation used inside candidate scoring loops.
/// `u` must be B·Rx·Bᴴ computed at `theta`.
pub fn point_crb_from_u(
    scenario: &Scenario,
    u: &CMat,
    phi: &CVec,
    theta: f64,
    beta_abs2: f64,
) -> CrbValue {
    let terms = phase_form_terms(u, phi);
    let kappa = crb_kappa(scenario, theta, beta_abs2);
    match crb_denominator(scenario, &terms) {
        Some(denom) if denom > 1e-12 * terms.s0.max(1e-300) => CrbValue::Finite(kappa / denom),
        _ => CrbValue::Infinite,
    }
}

/// Relative singular-value threshold below which the extended-target
/// information is treated as rank-deficient.
pub const EXTENDED_RANK_TOL: f64 = 1e-10;

/// Extended-target CRB at IRS l: (Ns σs²/T)·tr((G Rx Gᴴ)⁻¹). Independent of
/// the reflection phases. Returns the unbounded flag when G·Rx·Gᴴ is rank
/// deficient (in particular whenever M < N).
pub fn extended_crb(scenario: &Scenario, l: usize, r_x: &CMat) -> Result<CrbValue, CrbError> {
    check_irs_index(scenario, l)?;
    let cfg = &scenario.config;
    check_cov(r_x, cfg.num_bs_antennas)?;
    let g = &scenario.bs_irs_channels[l];
    let q = g * r_x * g.adjoint();
    let (vals, _) = herm_eigen(&q);
    let max = vals[vals.len() - 1].max(0.0);
    if max <= 0.0 || vals[0] <= EXTENDED_RANK_TOL * max {
        return Ok(CrbValue::Infinite);
    }
    let trace_inv: f64 = vals.iter().map(|v| 1.0 / v).sum();
    let ns = cfg.num_irs_sensors as f64;
    let t = cfg.dwell_symbols as f64;
    Ok(CrbValue::Finite(ns * cfg.sense_noise_power / t * trace_inv))
}

/// Deterministic transmit snapshots whose sample covariance equals `r_x`
/// exactly: X = √T · V Λ^{1/2} · F, with F rows drawn from the unitary DFT.
pub fn deterministic_snapshots(r_x: &CMat, t: usize) -> Result<CMat, CrbError> {
    let m = r_x.nrows();
    if t < m {
        return Err(CrbError::DwellTooShort { t, m });
    }
    let (vals, vecs) = herm_eigen(r_x);
    let mut root = CMat::zeros(m, m);
    for j in 0..m {
        let lam = vals[j].max(0.0).sqrt();
        for i in 0..m {
            root[(i, j)] = vecs[(i, j)] * lam;
        }
    }
    let scale = (t as f64).sqrt() * (1.0 / (t as f64).sqrt()); // = 1: √T · 1/√T
    let two_pi = 2.0 * std::f64::consts::PI;
    let dft = CMat::from_fn(m, t, |r, c| {
        C64::from_polar(scale, -two_pi * (r as f64) * (c as f64) / t as f64)
    });
    Ok(root * dft)
}

/// Central-difference Fisher matrix assembled from the mean-vector definition;
/// the numeric oracle for the closed-form blocks. Test support.
pub fn fim_finite_difference(
    scenario: &Scenario,
    l: usize,
    r_x: &CMat,
    phi: &CVec,
    step: f64,
) -> Result<PointFim, CrbError> {
    if !(1e-8..=1e-4).contains(&step) {
        return Err(CrbError::StepOutOfRange(step));
    }
    check_irs_index(scenario, l)?;
    let cfg = &scenario.config;
    check_cov(r_x, cfg.num_bs_antennas)?;
    check_phases(phi, cfg.num_irs_elements)?;

    let x = deterministic_snapshots(r_x, cfg.dwell_symbols)?;
    let g = &scenario.bs_irs_channels[l];
    let pgx = phi_diag(phi) * g * &x;
    let theta = scenario.target_doa[l];
    let beta = scenario.target_coeff[l];

    // mean matrix β·E(θ)·ΦGX as a function of (θ, Re β, Im β)
    let n = cfg.num_irs_elements;
    let ns = cfg.num_irs_sensors;
    let lam = cfg.wavelength;
    let mean = |th: f64, b: C64| -> CMat {
        let a = steering_vector(th, n, cfg.reflect_spacing, lam);
        let a_s = steering_vector(th, ns, cfg.sensor_spacing, lam);
        let e = &a_s * a.transpose();
        (e * &pgx).scale(1.0) * b
    };

    // central differences; β enters linearly so the same step is exact for it
    let d_theta = (mean(theta + step, beta) - mean(theta - step, beta)).unscale(2.0 * step);
    let d_re = (mean(theta, beta + c64(step, 0.0)) - mean(theta, beta - c64(step, 0.0)))
        .unscale(2.0 * step);
    let d_im = (mean(theta, beta + c64(0.0, step)) - mean(theta, beta - c64(0.0, step)))
        .unscale(2.0 * step);

    let dirs = [d_theta, d_re, d_im];
    let coeff = 2.0 / cfg.sense_noise_power;
    let mut matrix = Matrix3::zeros();
    for q1 in 0..3 {
        for q2 in 0..3 {
            let inner: C64 = dirs[q1]
                .iter()
                .zip(dirs[q2].iter())
                .map(|(a, b)| a.conj() * b)
                .sum();
            matrix[(q1, q2)] = coeff * inner.re;
        }
    }
    Ok(PointFim { matrix })
}

/// Per-IRS bounds plus their maximum, as minimized by the joint designs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrbReport {
    pub variant: TargetModel,
    pub per_irs_crb: Vec<CrbValue>,
    pub max_crb: CrbValue,
    /// Index of the IRS attaining the maximum (lowest index on ties).
    pub argmax: usize,
}

impl CrbReport {
    pub fn csv_header() -> &'static str {
        "variant,irs,crb,max_crb,iteration"
    }

    pub fn csv_rows(&self, iteration: usize) -> String {
        let mut out = String::new();
        for (l, v) in self.per_irs_crb.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                self.variant, l, v, self.max_crb, iteration
            ));
        }
        out
    }
}

/// Evaluates the per-IRS bound of the given model for a full solution pair,
/// at the scenario's true target parameters.
pub fn crb_report(
    scenario: &Scenario,
    tx: &TransmitSolution,
    reflect: &ReflectSolution,
    variant: TargetModel,
) -> Result<CrbReport, CrbError> {
    if reflect.phases.len() != scenario.num_irs() {
        return Err(CrbError::BadIndex {
            index: reflect.phases.len(),
            count: scenario.num_irs(),
        });
    }
    let r_x = &tx.total_covariance;
    let mut per = Vec::with_capacity(scenario.num_irs());
    for l in 0..scenario.num_irs() {
        let v = match variant {
            TargetModel::Point => point_crb(scenario, l, r_x, &reflect.phases[l])?,
            TargetModel::Extended => extended_crb(scenario, l, r_x)?,
        };
        per.push(v);
    }
    let mut argmax = 0;
    for (l, v) in per.iter().enumerate() {
        if v.as_f64() > per[argmax].as_f64() {
            argmax = l;
        }
    }
    Ok(CrbReport {
        variant,
        max_crb: per[argmax],
        per_irs_crb: per,
        argmax,
    })
}

/// Assembles the extended-target Fisher matrix blockwise from snapshots, the
/// brute-force oracle for the closed-form trace-inverse bound. Test support.
pub fn extended_fim_blocks(scenario: &Scenario, l: usize, x: &CMat, phi: &CVec) -> RMat {
    let cfg = &scenario.config;
    let ns = cfg.num_irs_sensors;
    let g = &scenario.bs_irs_channels[l];
    let pgx = phi_diag(phi) * g * x;
    // W = (ΦGX)* (ΦGX)ᵀ, K = W ⊗ I_Ns
    let w = pgx.conjugate() * pgx.transpose();
    let eye = CMat::identity(ns, ns);
    let k = w.kronecker(&eye);
    let coeff = 2.0 / cfg.sense_noise_power;
    let dim = k.nrows();
    let mut f = RMat::zeros(2 * dim, 2 * dim);
    for i in 0..dim {
        for j in 0..dim {
            let z = k[(i, j)];
            f[(i, j)] = coeff * z.re;
            f[(i + dim, j + dim)] = coeff * z.re;
            f[(i, j + dim)] = -coeff * z.im;
            f[(i + dim, j)] = coeff * z.im;
        }
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{identity_c, unit_phases};
    use crate::synth::{random_phases, random_psd, small_instance};

    #[test]
    fn singular_when_single_element_arrays() {
        let inst = small_instance(2, 1, 1, 77);
        let fim = point_fim(
            &inst.scenario,
            0,
            &inst.r_x,
            &inst.phi,
        )
        .unwrap();
        // D_1 = 0 forces a zero θ-derivative, hence a singular Fisher matrix
        assert!(fim.theta_theta().abs() < 1e-20);
        let crb = point_crb(&inst.scenario, 0, &inst.r_x, &inst.phi).unwrap();
        assert_eq!(crb, CrbValue::Infinite);
    }

    #[test]
    fn fim_scales_linearly_with_covariance() {
        let inst = small_instance(3, 4, 2, 11);
        let f1 = point_fim(&inst.scenario, 0, &inst.r_x, &inst.phi).unwrap();
        let f2 = point_fim(&inst.scenario, 0, &inst.r_x.scale(3.5), &inst.phi).unwrap();
        let diff = (f2.matrix - f1.matrix.scale(3.5)).abs().max();
        assert!(diff <= 1e-9 * f1.matrix.abs().max().max(1e-300) * 3.5);
    }

    #[test]
    fn closed_form_matches_finite_difference() {
        let inst = small_instance(2, 4, 2, 5);
        let fim = point_fim(&inst.scenario, 0, &inst.r_x, &inst.phi).unwrap();
        let fd = fim_finite_difference(&inst.scenario, 0, &inst.r_x, &inst.phi, 1e-6).unwrap();
        let floor = 1e-8 * fim.matrix.abs().max();
        for i in 0..3 {
            for j in 0..3 {
                let a = fim.matrix[(i, j)];
                let b = fd.matrix[(i, j)];
                // relative per entry, with an absolute floor at the central
                // difference noise level (machine epsilon over the step)
                assert!(
                    (a - b).abs() <= 1e-5 * a.abs().max(b.abs()) + floor,
                    "entry ({i},{j}): {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn e_dot_matches_finite_difference_of_e() {
        let inst = small_instance(2, 5, 3, 9);
        let s = &inst.scenario;
        let cfg = &s.config;
        let th = s.target_doa[0];
        let derived = SensingDerived::new(s, 0, th, &inst.r_x);
        let h = 1e-6;
        let e = |t: f64| {
            let a = steering_vector(t, cfg.num_irs_elements, cfg.reflect_spacing, cfg.wavelength);
            let a_s = steering_vector(t, cfg.num_irs_sensors, cfg.sensor_spacing, cfg.wavelength);
            &a_s * a.transpose()
        };
        let fd = (e(th + h) - e(th - h)).unscale(2.0 * h);
        let scale = max_abs_entry(&derived.e_dot);
        assert!(max_abs_entry(&(&fd - &derived.e_dot)) < 1e-6 * scale);
    }

    #[test]
    fn routes_agree_on_random_instances() {
        for seed in 0..20 {
            let inst = small_instance(3, 4, 3, 1000 + seed);
            let fim = point_fim(&inst.scenario, 0, &inst.r_x, &inst.phi).unwrap();
            let crb = point_crb(&inst.scenario, 0, &inst.r_x, &inst.phi)
                .unwrap()
                .finite()
                .unwrap();
            let inv = point_crb_inverse(&fim).finite().unwrap();
            assert!((crb - inv).abs() <= 1e-8 * crb.max(inv));
        }
    }

    #[test]
    fn extended_identity_closed_form() {
        // G = I (M = N), Rx = p·I: bound is Ns σs² N/(T p)
        let mut inst = small_instance(3, 3, 2, 21);
        let p = 2.5;
        inst.scenario.bs_irs_channels[0] = identity_c(3);
        let r = identity_c(3).scale(p);
        let got = extended_crb(&inst.scenario, 0, &r).unwrap().finite().unwrap();
        let cfg = &inst.scenario.config;
        let want = cfg.num_irs_sensors as f64 * cfg.sense_noise_power * 3.0
            / (cfg.dwell_symbols as f64 * p);
        assert!((got - want).abs() < 1e-12 * want);
    }

    #[test]
    fn extended_matches_block_fim_oracle() {
        let inst = small_instance(4, 3, 2, 31);
        let x = deterministic_snapshots(&inst.r_x, inst.scenario.config.dwell_symbols).unwrap();
        let f = extended_fim_blocks(&inst.scenario, 0, &x, &inst.phi);
        let finv = f.clone().try_inverse().expect("oracle FIM invertible");
        let got = extended_crb(&inst.scenario, 0, &inst.r_x).unwrap().finite().unwrap();
        assert!((got - finv.trace()).abs() <= 1e-8 * got);
    }

    #[test]
    fn extended_rank_deficient_is_unbounded() {
        let inst = small_instance(4, 3, 2, 41);
        // rank N-1 covariance
        let mut v = CVec::zeros(4);
        v[0] = c64(1.0, 0.0);
        let mut w = CVec::zeros(4);
        w[1] = c64(1.0, 0.0);
        let r = &v * v.adjoint() + &w * w.adjoint();
        assert_eq!(
            extended_crb(&inst.scenario, 0, &r).unwrap(),
            CrbValue::Infinite
        );
    }

    #[test]
    fn extended_is_phase_invariant() {
        let inst = small_instance(4, 3, 2, 51);
        let a = extended_crb(&inst.scenario, 0, &inst.r_x).unwrap().finite().unwrap();
        // the operation does not even take phases; verify the oracle route too
        let x = deterministic_snapshots(&inst.r_x, inst.scenario.config.dwell_symbols).unwrap();
        for seed in 0..3 {
            let phi = random_phases(3, 900 + seed);
            let f = extended_fim_blocks(&inst.scenario, 0, &x, &phi);
            let tr = f.try_inverse().unwrap().trace();
            assert!((tr - a).abs() <= 1e-9 * a);
        }
    }

    #[test]
    fn point_crb_monotone_in_covariance() {
        for seed in 0..10 {
            let inst = small_instance(3, 4, 3, 600 + seed);
            let delta = random_psd(3, 700 + seed).scale(0.3);
            let base = point_crb(&inst.scenario, 0, &inst.r_x, &inst.phi)
                .unwrap()
                .as_f64();
            let more = point_crb(&inst.scenario, 0, &(&inst.r_x + delta), &inst.phi)
                .unwrap()
                .as_f64();
            assert!(more <= base * (1.0 + 1e-9), "{more} > {base}");
        }
    }

    #[test]
    fn fim_is_psd() {
        for seed in 0..20 {
            let inst = small_instance(3, 4, 3, 800 + seed);
            let fim = point_fim(&inst.scenario, 0, &inst.r_x, &inst.phi).unwrap();
            let eigs = fim.matrix.symmetric_eigenvalues();
            let trace = fim.matrix.trace();
            for e in eigs.iter() {
                assert!(*e >= -1e-9 * trace, "eigenvalue {e} vs trace {trace}");
            }
        }
    }

    #[test]
    fn report_single_irs_max_is_entry() {
        let inst = small_instance(3, 4, 2, 61);
        let tx = TransmitSolution::uniform(&inst.scenario);
        let reflect = ReflectSolution {
            phases: vec![unit_phases(&inst.phi)],
            lifted: vec![None],
        };
        let rep = crb_report(&inst.scenario, &tx, &reflect, TargetModel::Point).unwrap();
        assert_eq!(rep.per_irs_crb.len(), 1);
        assert_eq!(rep.max_crb, rep.per_irs_crb[0]);
        assert!(rep.max_crb.as_f64() >= rep.per_irs_crb[0].as_f64());
        let rows = rep.csv_rows(3);
        assert!(rows.starts_with("point,0,"));
    }

    #[test]
    fn rejects_non_psd_covariance() {
        let inst = small_instance(3, 4, 2, 71);
        let mut bad = inst.r_x.clone();
        bad[(0, 0)] = c64(-1.0, 0.0);
        assert!(matches!(
            point_fim(&inst.scenario, 0, &bad, &inst.phi),
            Err(CrbError::NonPsdCovariance(_))
        ));
    }

    /// Regenerates the frozen oracle fixtures:
    /// `cargo test -p isac-core regen_fim_fixtures -- --ignored --nocapture`
    #[test]
    #[ignore]
    fn regen_fim_fixtures() {
        for (m, n, ns, seed) in [(2usize, 4usize, 2usize, 101u64), (3, 3, 3, 102), (4, 5, 2, 103)] {
            let inst = small_instance(m, n, ns, seed);
            let fd = fim_finite_difference(&inst.scenario, 0, &inst.r_x, &inst.phi, 1e-6).unwrap();
            let rows: Vec<Vec<f64>> = (0..3)
                .map(|i| (0..3).map(|j| fd.matrix[(i, j)]).collect())
                .collect();
            println!(
                "{{\"m\": {m}, \"n\": {n}, \"ns\": {ns}, \"seed\": {seed}, \"fim\": {}}},",
                serde_json::to_string(&rows).unwrap()
            );
        }
    }

    #[test]
    fn rejects_non_unit_phases() {
        let inst = small_instance(3, 4, 2, 81);
        let mut bad = inst.phi.clone();
        bad[0] = c64(0.5, 0.0);
        assert!(matches!(
            point_crb(&inst.scenario, 0, &inst.r_x, &bad),
            Err(CrbError::NonUnitModulus { .. })
        ));
    }
}
