//! Synthetic randomized instances for oracles, property tests, and
//! calibration runs. These bypass the geometric topology: channels are drawn
//! directly, so arbitrary (M, N, Ns) combinations can be exercised.

use crate::linalg::{hermitian_part, unit_phases, CMat, CVec, C64};
use crate::rng::{complex_gaussian, stream, uniform_phase};
use crate::scenario::{Scenario, SystemConfig, Topology};

/// Random Hermitian PSD matrix A·Aᴴ with unit-scale entries.
pub fn random_psd(n: usize, seed: u64) -> CMat {
    let mut rng = stream(seed, "synth.psd", 0, 0);
    let mut a = CMat::zeros(n, n);
    for c in 0..n {
        for r in 0..n {
            a[(r, c)] = complex_gaussian(&mut rng);
        }
    }
    hermitian_part(&(&a * a.adjoint()))
}

/// Random unit-modulus phase vector.
pub fn random_phases(n: usize, seed: u64) -> CVec {
    let mut rng = stream(seed, "synth.phases", 0, 0);
    let raw = CVec::from_fn(n, |_, _| {
        C64::from_polar(1.0, uniform_phase(&mut rng))
    });
    unit_phases(&raw)
}

/// A single-IRS instance with a random channel, covariance, and phases.
pub struct SynthInstance {
    pub scenario: Scenario,
    pub r_x: CMat,
    pub phi: CVec,
}

/// Builds a single-IRS scenario of the given dimensions with channels drawn
/// CN(0,1), a random PSD transmit covariance, random phases, a random target
/// direction within ±60°, and an O(1) reflection coefficient. Dwell time is
/// kept short so finite-difference oracles stay cheap.
pub fn small_instance(m: usize, n: usize, ns: usize, seed: u64) -> SynthInstance {
    small_instance_users(m, n, ns, 1, seed)
}

pub fn small_instance_users(m: usize, n: usize, ns: usize, k: usize, seed: u64) -> SynthInstance {
    let config = SystemConfig {
        num_bs_antennas: m,
        num_irs_elements: n,
        num_irs_sensors: ns,
        num_irs: 1,
        users_per_irs: k,
        dwell_symbols: 16.max(m),
        comm_noise_power: 1.0,
        sense_noise_power: 1.0,
        max_power: 10.0,
        sinr_threshold: 1.0,
        rng_seed: seed,
        ..SystemConfig::default()
    };
    let mut rng = stream(seed, "synth.instance", 0, 0);
    let g = CMat::from_fn(n, m, |_, _| complex_gaussian(&mut rng));
    let h: Vec<CVec> = (0..k)
        .map(|_| CVec::from_fn(n, |_, _| complex_gaussian(&mut rng)))
        .collect();
    let theta = (rng.random::<f64>() - 0.5) * 2.0 * 60f64.to_radians();
    let beta = C64::from_polar(0.5 + rng.random::<f64>(), uniform_phase(&mut rng));
    let mut ext = CMat::zeros(ns, n);
    for c in 0..n {
        for r in 0..ns {
            ext[(r, c)] = complex_gaussian(&mut rng);
        }
    }
    let scenario = Scenario {
        config,
        topology: Topology::single_irs(k),
        bs_irs_channels: vec![g],
        irs_cu_channels: vec![h],
        target_doa: vec![theta],
        target_coeff: vec![beta],
        extended_response: vec![ext],
    };
    let r_x = random_psd(m, seed ^ 0x5bd1e995);
    let phi = random_phases(n, seed ^ 0x9e3779b9);
    SynthInstance { scenario, r_x, phi }
}

use rand::Rng as _;

/// Multi-IRS random scenario for orchestrator stress tests. Channel scales
/// stay O(1) and noise O(1), so SINR targets around a few dB are feasible.
pub fn random_multi_irs_scenario(
    m: usize,
    n: usize,
    ns: usize,
    num_irs: usize,
    users: usize,
    gamma: f64,
    seed: u64,
) -> Scenario {
    let config = SystemConfig {
        num_bs_antennas: m,
        num_irs_elements: n,
        num_irs_sensors: ns,
        num_irs,
        users_per_irs: users,
        dwell_symbols: 16.max(m),
        comm_noise_power: 1.0,
        sense_noise_power: 1.0,
        max_power: 20.0,
        sinr_threshold: gamma,
        rng_seed: seed,
        ..SystemConfig::default()
    };
    let mut rng = stream(seed, "synth.multi", 0, 0);
    let mut gs = Vec::new();
    let mut hs = Vec::new();
    let mut thetas = Vec::new();
    let mut betas = Vec::new();
    let mut exts = Vec::new();
    let mut topo_irs = Vec::new();
    let mut topo_bro = Vec::new();
    let mut topo_cu = Vec::new();
    let mut topo_tg = Vec::new();
    for li in 0..num_irs {
        gs.push(CMat::from_fn(n, m, |_, _| complex_gaussian(&mut rng)));
        hs.push(
            (0..users)
                .map(|_| CVec::from_fn(n, |_, _| complex_gaussian(&mut rng)))
                .collect::<Vec<_>>(),
        );
        thetas.push((rng.random::<f64>() - 0.5) * 2.0 * 60f64.to_radians());
        betas.push(C64::from_polar(
            0.5 + rng.random::<f64>(),
            uniform_phase(&mut rng),
        ));
        let mut ext = CMat::zeros(ns, n);
        for c in 0..n {
            for r in 0..ns {
                ext[(r, c)] = complex_gaussian(&mut rng);
            }
        }
        exts.push(ext);
        let x = -30.0 + 60.0 * li as f64 / num_irs.max(1) as f64;
        topo_irs.push([x, 30.0]);
        topo_bro.push([0.0, -1.0]);
        topo_cu.push((0..users).map(|u| [x - 5.0 + 5.0 * u as f64, 25.0]).collect());
        topo_tg.push([x - 3.0, 22.0]);
    }
    Scenario {
        config,
        topology: Topology {
            bs_position: [0.0, 0.0],
            bs_broadside: [0.0, 1.0],
            irs_positions: topo_irs,
            irs_broadsides: topo_bro,
            cu_positions: topo_cu,
            target_positions: topo_tg,
        },
        bs_irs_channels: gs,
        irs_cu_channels: hs,
        target_doa: thetas,
        target_coeff: betas,
        extended_response: exts,
    }
}
