//! Reflective beamforming at each IRS: a lifted semidefinite program drives
//! the direction bound down for point targets, and a bisection over the
//! worst-user SINR expands the feasible region for extended targets (whose
//! bound does not depend on the phases). Rank-one phase vectors are recovered
//! by Gaussian randomization over the lifted solution.

use crate::conic::{CLinExpr, LinExpr, MatExpr, SdpProblem, SolveStatus, Tolerances, VarId};
use crate::crb::{point_crb_from_u, CrbValue};
use crate::linalg::{
    c64, herm_eigen, herm_sqrt, identity_c, index_diag, unit_phases, CMat, CVec, C64,
};
use crate::rng::complex_gaussian;
use crate::scenario::{steering_vector, Scenario};
use crate::txbf::{ReceiverType, TransmitSolution};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RxError {
    #[error("reflect SDP infeasible at IRS {irs}: current transmit solution cannot meet the SINR targets")]
    SdpInfeasible { irs: usize },
    #[error("degenerate channel at IRS {irs}: no user carries signal power")]
    DegenerateChannel { irs: usize },
    #[error("no feasible rank-one candidate among randomizations")]
    NoFeasibleCandidate,
    #[error("solver failure: {0}")]
    SolverFailure(String),
    #[error(transparent)]
    Conic(#[from] crate::conic::ConicError),
}

/// Per-IRS unit-modulus phase vectors, plus the lifted solver matrices kept
/// for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectSolution {
    pub phases: Vec<CVec>,
    pub lifted: Vec<Option<CMat>>,
}

impl ReflectSolution {
    /// Seeded uniform random phases, the initialization of every scheme.
    pub fn random_init(scenario: &Scenario) -> Self {
        let n = scenario.num_irs_elements();
        let phases = (0..scenario.num_irs())
            .map(|l| {
                let mut rng =
                    crate::rng::stream(scenario.config.rng_seed, "reflect.init", l as u64, 0);
                CVec::from_fn(n, |_, _| {
                    C64::from_polar(1.0, crate::rng::uniform_phase(&mut rng))
                })
            })
            .collect();
        Self {
            phases,
            lifted: vec![None; scenario.num_irs()],
        }
    }

    pub fn validate(&self) -> bool {
        self.phases
            .iter()
            .all(|p| p.iter().all(|z| (z.norm() - 1.0).abs() <= 1e-12))
    }

    pub fn to_json(&self) -> Result<String, serde_json::Error> {
        serde_json::to_string_pretty(&ReflectFile::from(self))
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let f: ReflectFile = serde_json::from_str(text)?;
        Ok(f.into())
    }
}

/// Per-call diagnostics: never silent about fallbacks.
#[derive(Debug, Clone)]
pub struct ReflectDiag {
    pub sdp_status: SolveStatus,
    /// λ₂/λ₁ of the lifted solution; below `RANK_ONE_TOL` the lifting is
    /// exact and randomization is skipped.
    pub rank_ratio: f64,
    pub feasible_candidates: usize,
    pub chosen_score: f64,
    pub fallback_used: bool,
    pub bisection_iters: usize,
}

pub const RANK_ONE_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct RxOpts {
    /// Gaussian randomization draws.
    pub draws: usize,
    /// Absolute width tolerance of the SINR bisection.
    pub bisect_tol: f64,
    /// Slack allowed when checking SINR feasibility of candidates.
    pub sinr_slack: f64,
    pub tolerances: Tolerances,
}

impl Default for RxOpts {
    fn default() -> Self {
        Self {
            draws: 1000,
            bisect_tol: 1e-3,
            sinr_slack: 1e-6,
            tolerances: Tolerances::default(),
        }
    }
}

/// Lifted quadratic-form matrices of user (l, k) at IRS l: tr(M·Θ) equals
/// |hᴴΦ G w|² at Θ = φ*φᵀ. One matrix per transmit covariance.
fn lifted_user_matrices(
    scenario: &Scenario,
    l: usize,
    tx: &TransmitSolution,
) -> (Vec<Vec<Vec<CMat>>>, Vec<CMat>) {
    let n = scenario.num_irs_elements();
    let g = &scenario.bs_irs_channels[l];
    let nl = scenario.num_irs();
    let k = scenario.users_per_irs();
    let mut per_user = Vec::with_capacity(k);
    let mut r0_mats = Vec::with_capacity(k);
    for ki in 0..k {
        let h = &scenario.irs_cu_channels[l][ki];
        // H = diag(hᴴ); rows of H·G are conj(h_i)·G_i.
        let hg = CMat::from_fn(n, g.ncols(), |r, c| h[r].conj() * g[(r, c)]);
        let mut per_cov = Vec::with_capacity(nl);
        for li in 0..nl {
            let mut row = Vec::with_capacity(k);
            for kj in 0..k {
                let hgw = &hg * &tx.info_covariances[li][kj] * hg.adjoint();
                row.push(hgw);
            }
            per_cov.push(row);
        }
        per_user.push(per_cov);
        r0_mats.push(&hg * &tx.sense_covariance * hg.adjoint());
    }
    (per_user, r0_mats)
}

/// tr(M·Θ) at the rank-one point Θ = φ*φᵀ.
fn lifted_value(m: &CMat, phi: &CVec) -> f64 {
    let n = phi.len();
    let psi = CVec::from_fn(n, |i, _| phi[i].conj());
    psi.dotc(&(m * &psi)).re
}

/// SINR of user k at IRS l evaluated through the lifted matrices.
fn candidate_sinr(
    receiver: ReceiverType,
    scenario: &Scenario,
    user_mats: &[Vec<Vec<CMat>>],
    r0_mats: &[CMat],
    l: usize,
    k: usize,
    phi: &CVec,
) -> f64 {
    let own = lifted_value(&user_mats[k][l][k], phi);
    let mut denom = scenario.config.comm_noise_power;
    for (li, row) in user_mats[k].iter().enumerate() {
        for (kj, m) in row.iter().enumerate() {
            if li == l && kj == k {
                continue;
            }
            denom += lifted_value(m, phi);
        }
    }
    if receiver == ReceiverType::TypeI {
        denom += lifted_value(&r0_mats[k], phi);
    }
    own / denom
}

fn all_users_feasible(
    receiver: ReceiverType,
    scenario: &Scenario,
    user_mats: &[Vec<Vec<CMat>>],
    r0_mats: &[CMat],
    l: usize,
    phi: &CVec,
    slack: f64,
) -> bool {
    let gamma = scenario.config.sinr_threshold;
    if gamma == 0.0 {
        return true;
    }
    (0..scenario.users_per_irs()).all(|k| {
        candidate_sinr(receiver, scenario, user_mats, r0_mats, l, k, phi) >= gamma - slack
    })
}

/// Rank-one candidates from a lifted PSD solution: the deterministic
/// top-eigenvector candidate followed by `draws` Gaussian randomizations
/// φ = conj(e^{j·arg(Θ^{1/2} r)}). Returns the best-scoring feasible
/// candidate (higher score wins) or `NoFeasibleCandidate`.
pub fn gaussian_randomize<R: Rng + ?Sized>(
    theta_lifted: &CMat,
    draws: usize,
    score: impl Fn(&CVec) -> f64,
    feasible: impl Fn(&CVec) -> bool,
    rng: &mut R,
) -> Result<(CVec, f64, usize), RxError> {
    let n = theta_lifted.nrows();
    let root = herm_sqrt(theta_lifted);
    let (_, vecs) = herm_eigen(theta_lifted);
    let top = vecs.column(n - 1).clone_owned();

    let mut best: Option<(CVec, f64)> = None;
    let mut feasible_count = 0usize;
    let mut consider = |cand: CVec| {
        if !feasible(&cand) {
            return;
        }
        feasible_count += 1;
        let s = score(&cand);
        if best.as_ref().map(|(_, b)| s > *b).unwrap_or(true) {
            best = Some((cand, s));
        }
    };

    // Θ = ψψᴴ with ψ = φ*, so candidates conjugate the recovered phases
    let to_phi = |psi_phases: CVec| CVec::from_fn(n, |i, _| psi_phases[i].conj());
    consider(to_phi(unit_phases(&top)));
    for _ in 0..draws {
        let r = CVec::from_fn(n, |_, _| complex_gaussian(rng));
        let psi = unit_phases(&(&root * r));
        consider(to_phi(psi));
    }

    match best {
        Some((cand, s)) => Ok((cand, s, feasible_count)),
        None => Err(RxError::NoFeasibleCandidate),
    }
}

fn rank_ratio(theta_lifted: &CMat) -> f64 {
    let (vals, _) = herm_eigen(theta_lifted);
    let n = vals.len();
    if n < 2 || vals[n - 1] <= 0.0 {
        return 0.0;
    }
    (vals[n - 2].max(0.0)) / vals[n - 1]
}

/// Reflective beamforming for the point target at IRS l with the transmit
/// solution fixed: maximizes the direction-information objective subject to
/// the lifted SINR constraints, then recovers unit-modulus phases. Keeps the
/// incumbent whenever no candidate is feasible (flagged, never silent).
#[allow(clippy::too_many_arguments)]
pub fn solve_point_reflect<R: Rng + ?Sized>(
    scenario: &Scenario,
    l: usize,
    tx: &TransmitSolution,
    receiver: ReceiverType,
    assumed_theta: f64,
    incumbent: &CVec,
    opts: &RxOpts,
    rng: &mut R,
) -> Result<(CVec, Option<CMat>, ReflectDiag), RxError> {
    let cfg = &scenario.config;
    let n = cfg.num_irs_elements;
    let ns = cfg.num_irs_sensors as f64;
    let d = cfg.reflect_spacing;
    let ds = cfg.sensor_spacing;
    let gamma = cfg.sinr_threshold;
    let sigma2 = cfg.comm_noise_power;

    // U at the assumed direction
    let g = &scenario.bs_irs_channels[l];
    let a = steering_vector(assumed_theta, n, d, cfg.wavelength);
    let a_diag = CMat::from_fn(n, n, |i, j| if i == j { a[i] } else { c64(0.0, 0.0) });
    let b = &a_diag * g;
    let u = &b * &tx.total_covariance * b.adjoint();
    let d_n = index_diag(n);

    let (user_mats, r0_mats) = lifted_user_matrices(scenario, l, tx);

    let mut problem = SdpProblem::new();
    let theta_var = problem.hermitian_var("theta", n);
    problem.require_psd(theta_var);
    let tau = problem.scalar_var("tau", true);

    // objective: d_s²·S3·tr(UΘ) + d²·Ns·tr(D_N U D_N Θ) - τ
    let s3 = (ns - 1.0) * ns * (ns + 1.0) / 12.0;
    let obj_mat = u.scale(ds * ds * s3) + (&d_n * &u * &d_n).scale(d * d * ns);
    problem.maximize(
        LinExpr::default()
            .with_mat(theta_var, obj_mat)
            .with_scalar(tau, -1.0),
    );

    // Schur block: [[τ, d√Ns·tr(U D_N Θ)], [conj, tr(UΘ)]] >= 0
    let mut lmi = MatExpr::zeros(2);
    lmi.set(0, 0, CLinExpr::default().with_scalar(tau, c64(1.0, 0.0)));
    lmi.set(
        0,
        1,
        CLinExpr::default().with_mat(theta_var, (&u * &d_n).scale(d * ns.sqrt())),
    );
    lmi.set(1, 1, CLinExpr::default().with_mat(theta_var, u.clone()));
    problem.add_psd_expr(lmi);

    // unit diagonal
    for i in 0..n {
        let mut e = CMat::zeros(n, n);
        e[(i, i)] = c64(1.0, 0.0);
        problem.add_eq(LinExpr::constant(-1.0).with_mat(theta_var, e));
    }

    // lifted SINR constraints for the users of this IRS, in noise units
    if gamma > 0.0 {
        for k in 0..cfg.users_per_irs {
            let mut coeff = CMat::zeros(n, n);
            for (li, row) in user_mats[k].iter().enumerate() {
                for (kj, m) in row.iter().enumerate() {
                    if li == l && kj == k {
                        coeff += m.scale(1.0 / sigma2);
                    } else {
                        coeff += m.scale(-gamma / sigma2);
                    }
                }
            }
            if receiver == ReceiverType::TypeI {
                coeff += r0_mats[k].scale(-gamma / sigma2);
            }
            problem.add_geq(LinExpr::constant(-gamma).with_mat(theta_var, coeff));
        }
    }

    let sol = problem.solve(&opts.tolerances)?;
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => return Err(RxError::SdpInfeasible { irs: l }),
        other => return Err(RxError::SolverFailure(format!("{other:?}"))),
    }
    let theta_star = sol.value(theta_var).as_mat().clone();
    let ratio = rank_ratio(&theta_star);

    let beta_abs2 = scenario.target_coeff[l].norm_sqr();
    let crb_of = |phi: &CVec| point_crb_from_u(scenario, &u, phi, assumed_theta, beta_abs2);
    let score = |phi: &CVec| -crb_of(phi).as_f64();
    let feas = |phi: &CVec| {
        all_users_feasible(
            receiver,
            scenario,
            &user_mats,
            &r0_mats,
            l,
            phi,
            opts.sinr_slack,
        )
    };

    if ratio < RANK_ONE_TOL {
        // lifting is exact: take the top eigenvector's phases directly
        let (_, vecs) = herm_eigen(&theta_star);
        let psi = unit_phases(&vecs.column(n - 1).clone_owned());
        let phi = CVec::from_fn(n, |i, _| psi[i].conj());
        let diag = ReflectDiag {
            sdp_status: sol.status,
            rank_ratio: ratio,
            feasible_candidates: 1,
            chosen_score: score(&phi),
            fallback_used: false,
            bisection_iters: 0,
        };
        return Ok((phi, Some(theta_star), diag));
    }

    let draws = gaussian_randomize(&theta_star, opts.draws, &score, &feas, rng);
    let (phi, chosen_score, feasible_candidates, fallback_used) = match draws {
        Ok((mut cand, mut s, count)) => {
            // the incumbent is always part of the candidate pool
            if feas(incumbent) && score(incumbent) > s {
                cand = incumbent.clone();
                s = score(incumbent);
            }
            (cand, s, count, false)
        }
        Err(RxError::NoFeasibleCandidate) => {
            if feas(incumbent) {
                (incumbent.clone(), score(incumbent), 1, false)
            } else {
                (incumbent.clone(), score(incumbent), 0, true)
            }
        }
        Err(other) => return Err(other),
    };

    let diag = ReflectDiag {
        sdp_status: sol.status,
        rank_ratio: ratio,
        feasible_candidates,
        chosen_score,
        fallback_used,
        bisection_iters: 0,
    };
    Ok((phi, Some(theta_star), diag))
}

/// Reflective beamforming for the extended target at IRS l: the bound itself
/// ignores the phases, so the step maximizes the minimum user SINR to widen
/// the transmit problem's feasible region. Bisection over the worst-user
/// SINR with a feasibility SDP per step, then randomization.
#[allow(clippy::too_many_arguments)]
pub fn solve_extended_reflect<R: Rng + ?Sized>(
    scenario: &Scenario,
    l: usize,
    tx: &TransmitSolution,
    receiver: ReceiverType,
    incumbent: &CVec,
    opts: &RxOpts,
    rng: &mut R,
) -> Result<(CVec, Option<CMat>, ReflectDiag), RxError> {
    let cfg = &scenario.config;
    let n = cfg.num_irs_elements;
    let k_users = cfg.users_per_irs;
    let sigma2 = cfg.comm_noise_power;
    let (user_mats, r0_mats) = lifted_user_matrices(scenario, l, tx);

    // T1 = own-signal quadratic, T2 = interference (+ sensing for Type-I)
    let mut t1 = Vec::with_capacity(k_users);
    let mut t2 = Vec::with_capacity(k_users);
    for k in 0..k_users {
        t1.push(user_mats[k][l][k].clone());
        let mut acc = CMat::zeros(n, n);
        for (li, row) in user_mats[k].iter().enumerate() {
            for (kj, m) in row.iter().enumerate() {
                if li == l && kj == k {
                    continue;
                }
                acc += m;
            }
        }
        if receiver == ReceiverType::TypeI {
            acc += &r0_mats[k];
        }
        t2.push(acc);
    }
    if t1.iter().all(|m| m.trace().re <= 0.0) {
        return Err(RxError::DegenerateChannel { irs: l });
    }

    // valid bracket: |hᴴΦGw|² <= ||h||²·σ_max(G)²·P for any unit-modulus Φ
    let g = &scenario.bs_irs_channels[l];
    let g_op2 = {
        let (vals, _) = herm_eigen(&(g * g.adjoint()));
        vals[vals.len() - 1].max(0.0)
    };
    let p_budget = crate::linalg::trace_re(&tx.total_covariance);
    let mut w_max = 0.0f64;
    for k in 0..k_users {
        let h2 = scenario.irs_cu_channels[l][k].norm_squared();
        w_max = w_max.max(h2 * g_op2 * p_budget / sigma2);
    }
    let mut w_min = 0.0f64;

    let feasibility = |w: f64| -> Result<Option<CMat>, RxError> {
        let mut problem = SdpProblem::new();
        let theta_var = problem.hermitian_var("theta", n);
        problem.require_psd(theta_var);
        for i in 0..n {
            let mut e = CMat::zeros(n, n);
            e[(i, i)] = c64(1.0, 0.0);
            problem.add_eq(LinExpr::constant(-1.0).with_mat(theta_var, e));
        }
        for k in 0..k_users {
            // (1/w)·tr(T1Θ) - tr(T2Θ) - σ² >= 0, in noise units
            let coeff = t1[k].scale(1.0 / (w * sigma2)) - t2[k].scale(1.0 / sigma2);
            problem.add_geq(LinExpr::constant(-1.0).with_mat(theta_var, coeff));
        }
        let sol = problem.solve(&opts.tolerances)?;
        match sol.status {
            SolveStatus::Optimal => Ok(Some(sol.value(theta_var).as_mat().clone())),
            // marginally feasible midpoints can stall the interior point;
            // counting them as infeasible only shrinks the certified bracket
            _ => Ok(None),
        }
    };

    let mut theta_star: Option<CMat> = None;
    let mut iters = 0usize;
    while w_max - w_min > opts.bisect_tol {
        let mid = 0.5 * (w_min + w_max);
        iters += 1;
        match feasibility(mid)? {
            Some(theta) => {
                theta_star = Some(theta);
                w_min = mid;
            }
            None => {
                w_max = mid;
            }
        }
    }
    let theta_star = match theta_star {
        Some(t) => t,
        // even the first midpoint failed all the way down the bracket
        None => return Err(RxError::DegenerateChannel { irs: l }),
    };

    let min_sinr_of = |phi: &CVec| -> f64 {
        (0..k_users)
            .map(|k| candidate_sinr(receiver, scenario, &user_mats, &r0_mats, l, k, phi))
            .fold(f64::INFINITY, f64::min)
    };
    let score = |phi: &CVec| min_sinr_of(phi);
    // the extended subproblem has no side constraints beyond unit modulus
    let feas = |_phi: &CVec| true;

    let ratio = rank_ratio(&theta_star);
    let (mut phi, mut chosen, mut count) = gaussian_randomize(
        &theta_star,
        opts.draws,
        &score,
        &feas,
        rng,
    )?;
    // per-user co-phasing candidates: each aligns the IRS exactly to one
    // user's own-signal quadratic form, the max-min optimum when K = 1
    for k in 0..k_users {
        let (vals, vecs) = herm_eigen(&t1[k]);
        if vals[n - 1] <= 0.0 {
            continue;
        }
        let psi = unit_phases(&vecs.column(n - 1).clone_owned());
        let cand = CVec::from_fn(n, |i, _| psi[i].conj());
        count += 1;
        if score(&cand) > chosen {
            chosen = score(&cand);
            phi = cand;
        }
    }
    // incumbent completes the pool, guaranteeing monotone head-room
    if score(incumbent) > chosen {
        chosen = score(incumbent);
        phi = incumbent.clone();
    }

    let diag = ReflectDiag {
        sdp_status: SolveStatus::Optimal,
        rank_ratio: ratio,
        feasible_candidates: count,
        chosen_score: chosen,
        fallback_used: false,
        bisection_iters: iters,
    };
    Ok((phi, Some(theta_star), diag))
}

// ---------------------------------------------------------------------------
// replay files

#[derive(Serialize, Deserialize)]
struct ReflectFile {
    version: u32,
    phases: Vec<crate::scenario::MatRepr>,
}

impl From<&ReflectSolution> for ReflectFile {
    fn from(r: &ReflectSolution) -> Self {
        Self {
            version: 1,
            phases: r.phases.iter().map(crate::scenario::MatRepr::from_vec).collect(),
        }
    }
}

impl From<ReflectFile> for ReflectSolution {
    fn from(f: ReflectFile) -> Self {
        let phases: Vec<CVec> = f
            .phases
            .iter()
            .map(|m| m.to_cvec().expect("well-formed vector"))
            .collect();
        let n = phases.len();
        Self {
            phases,
            lifted: vec![None; n],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crb::point_crb;
    use crate::linalg::max_abs_entry;
    use crate::synth::{random_phases, random_psd, small_instance_users};
    use crate::txbf::{solve_point_tx, TxOpts};

    fn tx_for(scenario: &Scenario, reflect: &ReflectSolution, receiver: ReceiverType) -> TransmitSolution {
        let assumed = scenario.target_doa.clone();
        solve_point_tx(scenario, reflect, receiver, &assumed, &TxOpts::default()).unwrap()
    }

    #[test]
    fn single_element_is_trivial() {
        let mut inst = small_instance_users(3, 1, 2, 1, 3);
        inst.scenario.config.sinr_threshold = 0.5;
        let reflect = ReflectSolution {
            phases: vec![random_phases(1, 1)],
            lifted: vec![None],
        };
        let tx = tx_for(&inst.scenario, &reflect, ReceiverType::TypeI);
        let mut rng = crate::rng::stream(1, "rxtest", 0, 0);
        let (phi, _, _) = solve_point_reflect(
            &inst.scenario,
            0,
            &tx,
            ReceiverType::TypeI,
            inst.scenario.target_doa[0],
            &reflect.phases[0],
            &RxOpts { draws: 16, ..RxOpts::default() },
            &mut rng,
        )
        .unwrap();
        assert_eq!(phi.len(), 1);
        assert!((phi[0].norm() - 1.0).abs() < 1e-12);
        // with one element the bound cannot move: global phase is irrelevant
        let before = point_crb(&inst.scenario, 0, &tx.total_covariance, &reflect.phases[0])
            .unwrap()
            .as_f64();
        let after = point_crb(&inst.scenario, 0, &tx.total_covariance, &phi)
            .unwrap()
            .as_f64();
        assert!((before - after).abs() <= 1e-9 * before.max(after));
    }

    #[test]
    fn lifted_objective_matches_phase_form_denominator() {
        // at a rank-one Θ = φ*φᵀ, the lifted objective equals f1 - f2 of the
        // direction bound
        let inst = small_instance_users(3, 5, 3, 1, 7);
        let s = &inst.scenario;
        let cfg = &s.config;
        let theta = s.target_doa[0];
        let derived = crate::crb::SensingDerived::new(s, 0, theta, &inst.r_x);
        let phi = random_phases(5, 17);
        let terms = crate::crb::phase_form_terms(&derived.u_mat, &phi);
        let denom = crate::crb::crb_denominator(s, &terms).unwrap();

        let ns = cfg.num_irs_sensors as f64;
        let s3 = (ns - 1.0) * ns * (ns + 1.0) / 12.0;
        let d = cfg.reflect_spacing;
        let ds = cfg.sensor_spacing;
        let d_n = index_diag(5);
        let obj_mat =
            derived.u_mat.scale(ds * ds * s3) + (&d_n * &derived.u_mat * &d_n).scale(d * d * ns);
        let s1_mat = (&derived.u_mat * &d_n).scale(d * ns.sqrt());
        let lifted_f1 = lifted_value(&obj_mat, &phi);
        let s1 = {
            let psi = CVec::from_fn(5, |i, _| phi[i].conj());
            psi.dotc(&(&s1_mat * &psi))
        };
        let s0 = lifted_value(&derived.u_mat, &phi);
        let lifted_obj = lifted_f1 - s1.norm_sqr() / s0;
        assert!(
            (lifted_obj - denom).abs() <= 1e-9 * denom.abs().max(lifted_obj.abs()),
            "lifted {lifted_obj} vs denominator {denom}"
        );
    }

    #[test]
    fn randomize_rank_one_reproduces_phases() {
        let n = 5;
        let phi = random_phases(n, 23);
        let psi = CVec::from_fn(n, |i, _| phi[i].conj());
        let theta = &psi * psi.adjoint();
        let mut rng = crate::rng::stream(2, "rxtest", 0, 0);
        let score = |c: &CVec| {
            // alignment with the generating phases, global-phase invariant
            let overlap: C64 = c.iter().zip(phi.iter()).map(|(a, b)| a * b.conj()).sum();
            overlap.norm()
        };
        let (cand, s, count) =
            gaussian_randomize(&theta, 8, score, |_| true, &mut rng).unwrap();
        assert_eq!(count, 9);
        assert!((s - n as f64).abs() < 1e-9, "overlap {s}");
        // candidate equals phi up to a global phase (eigenvector precision)
        let rot = cand[0] / phi[0];
        let aligned = CVec::from_fn(n, |i, _| phi[i] * rot);
        assert!(max_abs_entry(&CMat::from_fn(n, 1, |i, _| aligned[i] - cand[i])) < 1e-6);
    }

    #[test]
    fn more_draws_never_score_worse() {
        let theta = {
            let a = random_psd(6, 31);
            // unit diagonal like a real lifted solution
            let mut t = a.clone();
            for i in 0..6 {
                let d = t[(i, i)].re.sqrt();
                for j in 0..6 {
                    t[(i, j)] /= c64(d, 0.0);
                    t[(j, i)] /= c64(d, 0.0);
                }
            }
            t
        };
        let score = |c: &CVec| lifted_value(&theta, c);
        let mut rng1 = crate::rng::stream(3, "rxtest.draws", 0, 0);
        let (_, s1, _) = gaussian_randomize(&theta, 1, score, |_| true, &mut rng1).unwrap();
        let mut rng2 = crate::rng::stream(3, "rxtest.draws", 0, 0);
        let (_, s1000, _) = gaussian_randomize(&theta, 200, score, |_| true, &mut rng2).unwrap();
        assert!(s1000 >= s1);
    }

    #[test]
    fn randomized_output_is_unit_modulus() {
        let theta = random_psd(4, 37);
        let mut rng = crate::rng::stream(4, "rxtest", 0, 0);
        let (cand, _, _) = gaussian_randomize(&theta, 32, |_| 0.0, |_| true, &mut rng).unwrap();
        for z in cand.iter() {
            assert!((z.norm() - 1.0).abs() <= 1e-15);
        }
    }

    #[test]
    fn scoring_is_global_phase_invariant() {
        let inst = small_instance_users(3, 4, 2, 2, 41);
        let reflect = ReflectSolution {
            phases: vec![random_phases(4, 5)],
            lifted: vec![None],
        };
        let tx = tx_for(&inst.scenario, &reflect, ReceiverType::TypeI);
        let (user_mats, r0_mats) = lifted_user_matrices(&inst.scenario, 0, &tx);
        let phi = random_phases(4, 47);
        let rot = C64::from_polar(1.0, 1.234);
        let phi_rot = CVec::from_fn(4, |i, _| phi[i] * rot);
        for k in 0..2 {
            let a = candidate_sinr(ReceiverType::TypeI, &inst.scenario, &user_mats, &r0_mats, 0, k, &phi);
            let b = candidate_sinr(ReceiverType::TypeI, &inst.scenario, &user_mats, &r0_mats, 0, k, &phi_rot);
            assert!((a - b).abs() <= 1e-10 * a.max(b));
        }
    }

    #[test]
    fn point_reflect_improves_or_keeps_crb_and_stays_feasible() {
        let mut inst = small_instance_users(4, 4, 3, 2, 53);
        inst.scenario.config.sinr_threshold = 1.5;
        let reflect = ReflectSolution {
            phases: vec![random_phases(4, 11)],
            lifted: vec![None],
        };
        let tx = tx_for(&inst.scenario, &reflect, ReceiverType::TypeI);
        let before = point_crb(&inst.scenario, 0, &tx.total_covariance, &reflect.phases[0])
            .unwrap()
            .as_f64();
        let mut rng = crate::rng::stream(5, "rxtest", 0, 0);
        let (phi, _, diag) = solve_point_reflect(
            &inst.scenario,
            0,
            &tx,
            ReceiverType::TypeI,
            inst.scenario.target_doa[0],
            &reflect.phases[0],
            &RxOpts { draws: 300, ..RxOpts::default() },
            &mut rng,
        )
        .unwrap();
        let after = point_crb(&inst.scenario, 0, &tx.total_covariance, &phi)
            .unwrap()
            .as_f64();
        assert!(
            after <= before * (1.0 + 1e-9) || diag.fallback_used,
            "bound went up: {before} -> {after}"
        );
        let gamma = inst.scenario.config.sinr_threshold;
        for k in 0..2 {
            let s = crate::txbf::sinr(ReceiverType::TypeI, &inst.scenario, 0, k, &tx, &phi);
            assert!(s >= gamma - 1e-6, "user {k} SINR {s}");
        }
    }

    #[test]
    fn extended_reflect_single_user_reaches_cophasing_bound() {
        let mut inst = small_instance_users(4, 4, 2, 1, 59);
        inst.scenario.config.sinr_threshold = 0.0;
        let n = 4;
        // single beam, no sensing power, no interference
        let mut rng0 = crate::rng::stream(61, "rxtest.w", 0, 0);
        let w_vec = CVec::from_fn(4, |_, _| crate::rng::complex_gaussian(&mut rng0));
        let tx = TransmitSolution {
            info_covariances: vec![vec![&w_vec * w_vec.adjoint()]],
            sense_covariance: CMat::zeros(4, 4),
            beamvectors: vec![vec![w_vec.clone()]],
            total_covariance: &w_vec * w_vec.adjoint(),
        };
        let incumbent = random_phases(n, 13);
        let mut rng = crate::rng::stream(6, "rxtest", 0, 0);
        let (phi, _, diag) = solve_extended_reflect(
            &inst.scenario,
            0,
            &tx,
            ReceiverType::TypeI,
            &incumbent,
            &RxOpts { draws: 200, ..RxOpts::default() },
            &mut rng,
        )
        .unwrap();
        // closed-form co-phasing optimum: (Σ_n |h_n|·|(Gw)_n|)²/σ²
        let g = &inst.scenario.bs_irs_channels[0];
        let h = &inst.scenario.irs_cu_channels[0][0];
        let gw = g * &w_vec;
        let amp: f64 = (0..n).map(|i| h[i].norm() * gw[i].norm()).sum();
        let want = amp * amp / inst.scenario.config.comm_noise_power;
        let got = candidate_sinr(
            ReceiverType::TypeI,
            &inst.scenario,
            &lifted_user_matrices(&inst.scenario, 0, &tx).0,
            &lifted_user_matrices(&inst.scenario, 0, &tx).1,
            0,
            0,
            &phi,
        );
        assert!(
            (got - want).abs() <= 1e-9 * want,
            "got {got}, closed form {want} (diag {diag:?})"
        );
        // and the returned value can never fall below the incumbent's
        let inc = candidate_sinr(
            ReceiverType::TypeI,
            &inst.scenario,
            &lifted_user_matrices(&inst.scenario, 0, &tx).0,
            &lifted_user_matrices(&inst.scenario, 0, &tx).1,
            0,
            0,
            &incumbent,
        );
        assert!(got >= inc - 1e-6);
    }

    #[test]
    fn extended_bisection_iteration_count() {
        let mut inst = small_instance_users(4, 3, 2, 2, 67);
        inst.scenario.config.sinr_threshold = 1.0;
        let reflect = ReflectSolution {
            phases: vec![random_phases(3, 19)],
            lifted: vec![None],
        };
        let tx = tx_for(&inst.scenario, &reflect, ReceiverType::TypeI);
        let opts = RxOpts {
            draws: 50,
            bisect_tol: 1e-2,
            ..RxOpts::default()
        };
        let mut rng = crate::rng::stream(7, "rxtest", 0, 0);
        let (_, _, diag) = solve_extended_reflect(
            &inst.scenario,
            0,
            &tx,
            ReceiverType::TypeI,
            &reflect.phases[0],
            &opts,
            &mut rng,
        )
        .unwrap();
        // interval halves every step: exactly ceil(log2(width/tol)) steps
        let g = &inst.scenario.bs_irs_channels[0];
        let (vals, _) = herm_eigen(&(g * g.adjoint()));
        let g_op2 = vals[vals.len() - 1];
        let p = crate::linalg::trace_re(&tx.total_covariance);
        let mut w_max = 0.0f64;
        for k in 0..2 {
            let h2 = inst.scenario.irs_cu_channels[0][k].norm_squared();
            w_max = w_max.max(h2 * g_op2 * p / inst.scenario.config.comm_noise_power);
        }
        let want = ((w_max / opts.bisect_tol).log2()).ceil() as usize;
        assert_eq!(diag.bisection_iters, want);
    }

    #[test]
    fn reflect_json_round_trip() {
        let r = ReflectSolution {
            phases: vec![random_phases(4, 3), random_phases(4, 4)],
            lifted: vec![None, None],
        };
        let text = r.to_json().unwrap();
        let back = ReflectSolution::from_json(&text).unwrap();
        assert_eq!(r.phases, back.phases);
    }
}
