//! Alternating optimization of transmit and reflective beamformers for the
//! four problem variants, plus benchmark schemes. Records per-iteration
//! convergence trajectories.

use crate::crb::{crb_report, CrbError, CrbReport, CrbValue, TargetModel};
use crate::linalg::{identity_c, CMat, CVec};
use crate::rxbf::{
    solve_extended_reflect, solve_point_reflect, ReflectSolution, RxError, RxOpts,
};
use crate::scenario::Scenario;
use crate::txbf::{
    min_sinr, solve_extended_tx, solve_point_tx, ReceiverType, TransmitSolution, TxError, TxOpts,
};
use crate::conic::{CLinExpr, LinExpr, MatExpr, SdpProblem, SolveStatus, VarId};
use crate::linalg::c64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("zero-forcing needs L·K <= M, got {lk} users and {m} antennas")]
    ZfTooManyUsers { lk: usize, m: usize },
    #[error("zero-forcing channel matrix is rank deficient (smallest singular value {0:.3e})")]
    ZfRankDeficient(f64),
    #[error(transparent)]
    Tx(#[from] TxError),
    #[error(transparent)]
    Rx(#[from] RxError),
    #[error(transparent)]
    Crb(#[from] CrbError),
    #[error(transparent)]
    Conic(#[from] crate::conic::ConicError),
}

/// Problem variant: point or extended target, Type-I or Type-II receivers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    P1I,
    P1II,
    P4I,
    P4II,
}

impl Variant {
    pub fn receiver(&self) -> ReceiverType {
        match self {
            Variant::P1I | Variant::P4I => ReceiverType::TypeI,
            Variant::P1II | Variant::P4II => ReceiverType::TypeII,
        }
    }
    pub fn target_model(&self) -> TargetModel {
        match self {
            Variant::P1I | Variant::P1II => TargetModel::Point,
            Variant::P4I | Variant::P4II => TargetModel::Extended,
        }
    }
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "P1-I" | "P1I" => Some(Variant::P1I),
            "P1-II" | "P1II" => Some(Variant::P1II),
            "P4-I" | "P4I" => Some(Variant::P4I),
            "P4-II" | "P4II" => Some(Variant::P4II),
            _ => None,
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Variant::P1I => "P1-I",
            Variant::P1II => "P1-II",
            Variant::P4I => "P4-I",
            Variant::P4II => "P4-II",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    Proposed,
    TxOnly,
    Zf,
    SensingOnly,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Scheme::Proposed => "proposed",
            Scheme::TxOnly => "tx_only",
            Scheme::Zf => "zf",
            Scheme::SensingOnly => "sensing_only",
        };
        write!(f, "{s}")
    }
}

impl Scheme {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "proposed" => Some(Scheme::Proposed),
            "tx_only" | "txonly" => Some(Scheme::TxOnly),
            "zf" | "zf_bf" => Some(Scheme::Zf),
            "sensing_only" | "sensingonly" => Some(Scheme::SensingOnly),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    Tolerance,
    MaxIters,
    Infeasible,
    SolverFailure,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub max_crb: CrbValue,
    pub per_irs_crb: Vec<CrbValue>,
    pub min_sinr: f64,
    pub power_used: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub variant: Variant,
    pub scheme: Scheme,
    pub iterations: Vec<IterationRecord>,
    pub final_solution: Option<(TransmitSolution, ReflectSolution)>,
    pub converged: bool,
    pub stop_reason: StopReason,
    /// Human-readable diagnosis when the run could not proceed.
    pub error: Option<String>,
}

impl Trajectory {
    pub fn final_max_crb(&self) -> CrbValue {
        self.iterations
            .last()
            .map(|r| r.max_crb)
            .unwrap_or(CrbValue::Infinite)
    }

    pub fn csv_header() -> &'static str {
        "schema,variant,scheme,iteration,irs,crb,max_crb,min_sinr,power_used"
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::csv_header());
        out.push('\n');
        for rec in &self.iterations {
            for (l, v) in rec.per_irs_crb.iter().enumerate() {
                out.push_str(&format!(
                    "traj-v1,{},{},{},{},{},{},{},{}\n",
                    self.variant,
                    self.scheme,
                    rec.iter,
                    l,
                    v,
                    rec.max_crb,
                    rec.min_sinr,
                    rec.power_used
                ));
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct OrchestratorOpts {
    /// Relative improvement of the max bound below which the loop stops.
    pub tol_conv: f64,
    pub max_iters: usize,
    /// Gaussian randomization draws per reflect solve.
    pub draws: usize,
    /// Bisection width tolerance for extended reflect steps.
    pub bisect_tol: f64,
    /// Seed override; defaults to the scenario's.
    pub seed: Option<u64>,
    /// Assumed target directions used by the design; defaults to the truth.
    pub assumed_theta: Option<Vec<f64>>,
}

impl Default for OrchestratorOpts {
    fn default() -> Self {
        Self {
            tol_conv: 1e-3,
            max_iters: 30,
            draws: 1000,
            bisect_tol: 1e-3,
            seed: None,
            assumed_theta: None,
        }
    }
}

impl OrchestratorOpts {
    fn rx_opts(&self) -> RxOpts {
        RxOpts {
            draws: self.draws,
            bisect_tol: self.bisect_tol,
            ..RxOpts::default()
        }
    }
}

fn infeasible_trajectory(variant: Variant, scheme: Scheme, err: String) -> Trajectory {
    Trajectory {
        variant,
        scheme,
        iterations: Vec::new(),
        final_solution: None,
        converged: false,
        stop_reason: StopReason::Infeasible,
        error: Some(err),
    }
}

struct LoopState {
    records: Vec<IterationRecord>,
    best: Option<(TransmitSolution, ReflectSolution)>,
}

impl LoopState {
    fn record(
        &mut self,
        scenario: &Scenario,
        variant: Variant,
        tx: &TransmitSolution,
        reflect: &ReflectSolution,
        iter: usize,
    ) -> Result<CrbReport, CrbError> {
        let report = crb_report(scenario, tx, reflect, variant.target_model())?;
        self.records.push(IterationRecord {
            iter,
            max_crb: report.max_crb,
            per_irs_crb: report.per_irs_crb.clone(),
            min_sinr: min_sinr(variant.receiver(), scenario, tx, reflect),
            power_used: tx.power_used(),
        });
        self.best = Some((tx.clone(), reflect.clone()));
        Ok(report)
    }
}

/// One transmit solve for the given variant.
fn tx_step(
    variant: Variant,
    scenario: &Scenario,
    reflect: &ReflectSolution,
    assumed: &[f64],
) -> Result<TransmitSolution, TxError> {
    let opts = TxOpts::default();
    match variant.target_model() {
        TargetModel::Point => {
            solve_point_tx(scenario, reflect, variant.receiver(), assumed, &opts)
        }
        TargetModel::Extended => solve_extended_tx(scenario, reflect, variant.receiver(), &opts),
    }
}

/// One reflect pass over all IRSs. Extended targets with no SINR requirement
/// skip the pass: the bound ignores the phases and there is nothing to widen.
fn reflect_pass(
    variant: Variant,
    scenario: &Scenario,
    tx: &TransmitSolution,
    reflect: &mut ReflectSolution,
    assumed: &[f64],
    opts: &OrchestratorOpts,
    seed: u64,
    iter: usize,
) -> Result<(), RxError> {
    let gamma = scenario.config.sinr_threshold;
    if variant.target_model() == TargetModel::Extended && gamma == 0.0 {
        return Ok(());
    }
    let rx_opts = opts.rx_opts();
    for l in 0..scenario.num_irs() {
        let mut rng = crate::rng::stream(seed, "reflect.randomize", l as u64, iter as u64);
        let incumbent = reflect.phases[l].clone();
        let (phi, lifted, _diag) = match variant.target_model() {
            TargetModel::Point => solve_point_reflect(
                scenario,
                l,
                tx,
                variant.receiver(),
                assumed[l],
                &incumbent,
                &rx_opts,
                &mut rng,
            )?,
            TargetModel::Extended => solve_extended_reflect(
                scenario,
                l,
                tx,
                variant.receiver(),
                &incumbent,
                &rx_opts,
                &mut rng,
            )?,
        };
        reflect.phases[l] = phi;
        reflect.lifted[l] = lifted;
    }
    Ok(())
}

/// Alternating optimization of the chosen variant: transmit solve, then a
/// per-IRS reflect pass, until the max bound stops improving.
pub fn optimize(variant: Variant, scenario: &Scenario, opts: &OrchestratorOpts) -> Trajectory {
    run_loop(variant, Scheme::Proposed, scenario, opts, TxMode::Full)
}

/// Benchmark: seeded random reflection coefficients, one transmit solve.
pub fn benchmark_tx_only(
    variant: Variant,
    scenario: &Scenario,
    opts: &OrchestratorOpts,
) -> Trajectory {
    let one_shot = OrchestratorOpts {
        tol_conv: f64::INFINITY,
        ..opts.clone()
    };
    run_loop(variant, Scheme::TxOnly, scenario, &one_shot, TxMode::Full)
}

/// Benchmark: the proposed pipeline with the SINR requirements cleared,
/// giving the bound's lower envelope.
pub fn benchmark_sensing_only(
    variant: Variant,
    scenario: &Scenario,
    opts: &OrchestratorOpts,
) -> Trajectory {
    let mut relaxed = scenario.clone();
    relaxed.config.sinr_threshold = 0.0;
    run_loop(variant, Scheme::SensingOnly, &relaxed, opts, TxMode::Full)
}

/// Benchmark: information beams pinned to the zero-forcing directions of the
/// current composite channels; powers and the sensing covariance stay free.
pub fn benchmark_zf(
    variant: Variant,
    scenario: &Scenario,
    opts: &OrchestratorOpts,
) -> Result<Trajectory, OrchestratorError> {
    let m = scenario.num_bs_antennas();
    let lk = scenario.num_irs() * scenario.users_per_irs();
    if lk > m {
        return Err(OrchestratorError::ZfTooManyUsers { lk, m });
    }
    Ok(run_loop(variant, Scheme::Zf, scenario, opts, TxMode::Zf))
}

pub fn run_scheme(
    scheme: Scheme,
    variant: Variant,
    scenario: &Scenario,
    opts: &OrchestratorOpts,
) -> Result<Trajectory, OrchestratorError> {
    match scheme {
        Scheme::Proposed => Ok(optimize(variant, scenario, opts)),
        Scheme::TxOnly => Ok(benchmark_tx_only(variant, scenario, opts)),
        Scheme::SensingOnly => Ok(benchmark_sensing_only(variant, scenario, opts)),
        Scheme::Zf => benchmark_zf(variant, scenario, opts),
    }
}

#[derive(Clone, Copy, PartialEq)]
enum TxMode {
    Full,
    Zf,
}

fn run_loop(
    variant: Variant,
    scheme: Scheme,
    scenario: &Scenario,
    opts: &OrchestratorOpts,
    mode: TxMode,
) -> Trajectory {
    let seed = opts.seed.unwrap_or(scenario.config.rng_seed);
    let assumed = opts
        .assumed_theta
        .clone()
        .unwrap_or_else(|| scenario.target_doa.clone());
    let mut reflect = ReflectSolution::random_init(scenario);
    let mut state = LoopState {
        records: Vec::new(),
        best: None,
    };
    let single_shot = opts.tol_conv.is_infinite();
    let mut prev = f64::INFINITY;
    let mut converged = false;
    let mut stop_reason = StopReason::MaxIters;

    for iter in 1..=opts.max_iters {
        let tx = match run_tx(mode, variant, scenario, &reflect, &assumed) {
            Ok(t) => t,
            Err(e) => {
                if iter == 1 {
                    return infeasible_trajectory(variant, scheme, e.to_string());
                }
                stop_reason = StopReason::SolverFailure;
                break;
            }
        };

        if let Err(e) = reflect_pass(
            variant, scenario, &tx, &mut reflect, &assumed, opts, seed, iter,
        ) {
            if iter == 1 {
                return infeasible_trajectory(variant, scheme, e.to_string());
            }
            stop_reason = StopReason::SolverFailure;
            break;
        }

        let report = match state.record(scenario, variant, &tx, &reflect, iter) {
            Ok(r) => r,
            Err(e) => {
                return infeasible_trajectory(variant, scheme, e.to_string());
            }
        };

        let current = report.max_crb.as_f64();
        if single_shot {
            converged = true;
            stop_reason = StopReason::Tolerance;
            break;
        }
        if prev.is_finite() && current.is_finite() {
            let improvement = (prev - current) / prev.abs().max(1e-300);
            if improvement < opts.tol_conv {
                converged = true;
                stop_reason = StopReason::Tolerance;
                break;
            }
        }
        prev = current;
    }

    Trajectory {
        variant,
        scheme,
        iterations: state.records,
        final_solution: state.best,
        converged,
        stop_reason,
        error: None,
    }
}

fn run_tx(
    mode: TxMode,
    variant: Variant,
    scenario: &Scenario,
    reflect: &ReflectSolution,
    assumed: &[f64],
) -> Result<TransmitSolution, OrchestratorError> {
    match mode {
        TxMode::Full => Ok(tx_step(variant, scenario, reflect, assumed)?),
        TxMode::Zf => zf_tx_step(variant, scenario, reflect, assumed),
    }
}

// ---------------------------------------------------------------------------
// zero-forcing benchmark internals

/// Zero-forcing directions at the current phases: columns of H̃(H̃ᴴH̃)⁻¹,
/// normalized. Cross-user terms h̃ᴴ_j u_i vanish by construction.
pub fn zf_directions(
    scenario: &Scenario,
    reflect: &ReflectSolution,
) -> Result<Vec<Vec<CVec>>, OrchestratorError> {
    let m = scenario.num_bs_antennas();
    let nl = scenario.num_irs();
    let k = scenario.users_per_irs();
    let mut h_tilde = CMat::zeros(m, nl * k);
    for l in 0..nl {
        for ki in 0..k {
            let ch = crate::txbf::effective_channel(scenario, l, ki, &reflect.phases[l]);
            for r in 0..m {
                h_tilde[(r, l * k + ki)] = ch[r];
            }
        }
    }
    let gram = h_tilde.adjoint() * &h_tilde;
    let (vals, _) = crate::linalg::herm_eigen(&gram);
    let smallest = vals[0].max(0.0).sqrt();
    let largest = vals[vals.len() - 1].max(0.0).sqrt();
    if smallest <= 1e-12 * largest.max(1e-300) {
        return Err(OrchestratorError::ZfRankDeficient(smallest));
    }
    let gram_inv = gram
        .try_inverse()
        .ok_or(OrchestratorError::ZfRankDeficient(smallest))?;
    let w_zf = &h_tilde * gram_inv;
    let mut out = Vec::with_capacity(nl);
    for l in 0..nl {
        let mut row = Vec::with_capacity(k);
        for ki in 0..k {
            let col = w_zf.column(l * k + ki);
            let norm = col.norm();
            row.push(CVec::from_fn(m, |r, _| col[r] / c64(norm, 0.0)));
        }
        out.push(row);
    }
    Ok(out)
}

/// Power allocation over fixed zero-forcing directions: scalars p_{l,k} and a
/// free sensing covariance, optimized for the variant's bound objective.
fn zf_tx_step(
    variant: Variant,
    scenario: &Scenario,
    reflect: &ReflectSolution,
    assumed: &[f64],
) -> Result<TransmitSolution, OrchestratorError> {
    let dirs = zf_directions(scenario, reflect)?;
    let m = scenario.num_bs_antennas();
    let nl = scenario.num_irs();
    let k = scenario.users_per_irs();
    let cfg = &scenario.config;
    let gamma = cfg.sinr_threshold;
    let sigma2 = cfg.comm_noise_power;
    let receiver = variant.receiver();

    if variant.target_model() == TargetModel::Extended && m < scenario.num_irs_elements() {
        return Err(OrchestratorError::Tx(TxError::Estimability {
            m,
            n: scenario.num_irs_elements(),
        }));
    }

    let mut problem = SdpProblem::new();
    let mut p_vars: Vec<Vec<VarId>> = Vec::with_capacity(nl);
    let mut dir_covs: Vec<Vec<CMat>> = Vec::with_capacity(nl);
    for l in 0..nl {
        let mut pr = Vec::with_capacity(k);
        let mut dr = Vec::with_capacity(k);
        for ki in 0..k {
            pr.push(problem.scalar_var(&format!("p_{l}_{ki}"), true));
            let u = &dirs[l][ki];
            dr.push(u * u.adjoint());
        }
        p_vars.push(pr);
        dir_covs.push(dr);
    }
    let r0 = problem.hermitian_var("r0", m);
    problem.require_psd(r0);

    // power
    let mut power = LinExpr::constant(cfg.max_power).with_mat(r0, identity_c(m).scale(-1.0));
    for row in &p_vars {
        for v in row {
            power = power.with_scalar(*v, -1.0);
        }
    }
    problem.add_geq(power);

    // composite channels and SINR rows
    let mut h_eff = Vec::with_capacity(nl);
    for l in 0..nl {
        let mut row = Vec::with_capacity(k);
        for ki in 0..k {
            row.push(crate::txbf::effective_channel(
                scenario,
                l,
                ki,
                &reflect.phases[l],
            ));
        }
        h_eff.push(row);
    }
    if gamma > 0.0 {
        for l in 0..nl {
            for ki in 0..k {
                let ch = &h_eff[l][ki];
                let mut expr = LinExpr::constant(-gamma);
                for li in 0..nl {
                    for kj in 0..k {
                        let gain = ch.dotc(&dirs[li][kj]).norm_sqr() / sigma2;
                        let coeff = if li == l && kj == ki {
                            gain
                        } else {
                            -gamma * gain
                        };
                        expr = expr.with_scalar(p_vars[li][kj], coeff);
                    }
                }
                if receiver == ReceiverType::TypeI {
                    let gt = (ch * ch.adjoint()).scale(1.0 / sigma2);
                    expr = expr.with_mat(r0, gt.scale(-gamma));
                }
                problem.add_geq(expr);
            }
        }
    }

    // variant objective over Rx = Σ p·uuᴴ + R0
    match variant.target_model() {
        TargetModel::Point => {
            let nu1 = problem.scalar_var("nu1", true);
            problem.maximize(LinExpr::scalar(nu1, 1.0));
            let terms: Vec<crate::txbf::PointIrsTerms> = (0..nl)
                .map(|l| {
                    let beta_abs2 = scenario.target_coeff[l].norm_sqr();
                    crate::txbf::point_irs_terms(
                        scenario,
                        l,
                        &reflect.phases[l],
                        assumed[l],
                        beta_abs2,
                    )
                })
                .collect();
            let nu_scale = terms
                .iter()
                .map(|t| t.nu_scale_hint)
                .fold(f64::INFINITY, f64::min);
            for t in &terms {
                let nu2 = problem.scalar_var("nu2", false);
                let c_f1 = t.c_f1_scaled(nu_scale);
                let c_s0 = t.c_s0_scaled();
                let c_s1 = t.c_s1_scaled(nu_scale);
                let mut epi = LinExpr::default()
                    .with_scalar(nu2, -1.0)
                    .with_scalar(nu1, -1.0);
                for (li, row) in p_vars.iter().enumerate() {
                    for (kj, v) in row.iter().enumerate() {
                        let f1 = (c_f1.clone() * &dir_covs[li][kj]).trace().re;
                        epi = epi.with_scalar(*v, f1);
                    }
                }
                epi = epi.with_mat(r0, c_f1.clone());
                problem.add_geq(epi);

                let mut lmi = MatExpr::zeros(2);
                let mut e00 = CLinExpr::default();
                let mut e01 = CLinExpr::default();
                for (li, row) in p_vars.iter().enumerate() {
                    for (kj, v) in row.iter().enumerate() {
                        let s0 = (c_s0.clone() * &dir_covs[li][kj]).trace();
                        let s1 = (c_s1.clone() * &dir_covs[li][kj]).trace();
                        e00 = e00.with_scalar(*v, s0);
                        e01 = e01.with_scalar(*v, s1);
                    }
                }
                e00 = e00.with_mat(r0, c_s0.clone());
                e01 = e01.with_mat(r0, c_s1.clone());
                lmi.set(0, 0, e00);
                lmi.set(0, 1, e01);
                lmi.set(1, 1, CLinExpr::default().with_scalar(nu2, c64(1.0, 0.0)));
                problem.add_psd_expr(lmi);
            }
        }
        TargetModel::Extended => {
            let n = scenario.num_irs_elements();
            let u_epi = problem.scalar_var("u", true);
            problem.minimize(LinExpr::scalar(u_epi, 1.0));
            let crb_scale =
                cfg.num_irs_sensors as f64 * cfg.sense_noise_power / cfg.dwell_symbols as f64;
            let q_typ: Vec<f64> = (0..nl)
                .map(|l| {
                    let g = &scenario.bs_irs_channels[l];
                    (crate::linalg::trace_re(&(g * g.adjoint())) * cfg.max_power
                        / (m as f64 * n as f64))
                        .max(1e-300)
                })
                .collect();
            let u_scale = (0..nl)
                .map(|l| crb_scale * n as f64 / q_typ[l])
                .fold(0.0f64, f64::max)
                .max(1e-300);
            for l in 0..nl {
                let g = &scenario.bs_irs_channels[l];
                let z = problem.hermitian_var(&format!("z_{l}"), n);
                problem.add_geq(LinExpr::scalar(u_epi, 1.0).with_mat(
                    z,
                    identity_c(n).scale(-crb_scale / (q_typ[l] * u_scale)),
                ));
                let mut schur = MatExpr::zeros(2 * n);
                for i in 0..n {
                    for j in i..n {
                        let mut e_ji = CMat::zeros(n, n);
                        e_ji[(j, i)] = c64(1.0, 0.0);
                        schur.set(i, j, CLinExpr::default().with_mat(z, e_ji));
                        let gi = g.row(i);
                        let gj = g.row(j);
                        let coeff = (gj.adjoint() * gi).scale(1.0 / q_typ[l]);
                        let mut entry = CLinExpr::default();
                        for (li, row) in p_vars.iter().enumerate() {
                            for (kj, v) in row.iter().enumerate() {
                                let c = (coeff.clone() * &dir_covs[li][kj]).trace();
                                entry = entry.with_scalar(*v, c);
                            }
                        }
                        entry = entry.with_mat(r0, coeff);
                        schur.set(n + i, n + j, entry);
                    }
                    schur.set(i, n + i, CLinExpr::constant(c64(1.0, 0.0)));
                }
                problem.add_psd_expr(schur);
            }
        }
    }

    let sol = problem.solve(&crate::conic::Tolerances::default())?;
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => {
            return Err(OrchestratorError::Tx(TxError::Infeasible {
                probes: Vec::new(),
            }))
        }
        other => {
            return Err(OrchestratorError::Tx(TxError::SolverFailure(format!(
                "{other:?}"
            ))))
        }
    }

    let mut covs = Vec::with_capacity(nl);
    let mut beams = Vec::with_capacity(nl);
    let mut total = crate::linalg::psd_project(sol.value(r0).as_mat());
    let r0_val = total.clone();
    for l in 0..nl {
        let mut crow = Vec::with_capacity(k);
        let mut brow = Vec::with_capacity(k);
        for ki in 0..k {
            let p = sol.value(p_vars[l][ki]).as_scalar().max(0.0);
            let w = dir_covs[l][ki].scale(p);
            let beam = dirs[l][ki].scale(p.sqrt());
            total += &w;
            crow.push(w);
            brow.push(beam);
        }
        covs.push(crow);
        beams.push(brow);
    }
    Ok(TransmitSolution {
        info_covariances: covs,
        sense_covariance: r0_val,
        beamvectors: beams,
        total_covariance: total,
    })
}
