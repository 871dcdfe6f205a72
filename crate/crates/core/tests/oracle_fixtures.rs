//! Frozen oracle fixtures: finite-difference Fisher matrices computed once
//! and committed, pinning both the oracle and the closed form against drift.
//! Regenerate with `cargo test -p isac-core regen_fim_fixtures -- --ignored
//! --nocapture` and refresh tests/fixtures/point_fim.json.

use isac_core::crb::{fim_finite_difference, point_fim};
use isac_core::synth::small_instance;
use serde::Deserialize;

#[derive(Deserialize)]
struct Fixture {
    m: usize,
    n: usize,
    ns: usize,
    seed: u64,
    fim: Vec<Vec<f64>>,
}

#[test]
fn point_fim_regression_fixtures() {
    let text = include_str!("fixtures/point_fim.json");
    let fixtures: Vec<Fixture> = serde_json::from_str(text).unwrap();
    assert_eq!(fixtures.len(), 3);
    for fx in &fixtures {
        let inst = small_instance(fx.m, fx.n, fx.ns, fx.seed);
        let fd = fim_finite_difference(&inst.scenario, 0, &inst.r_x, &inst.phi, 1e-6).unwrap();
        let closed = point_fim(&inst.scenario, 0, &inst.r_x, &inst.phi).unwrap();
        let scale = fd.matrix.abs().max();
        for i in 0..3 {
            for j in 0..3 {
                let frozen = fx.fim[i][j];
                assert!(
                    (fd.matrix[(i, j)] - frozen).abs() <= 1e-9 * scale,
                    "oracle drifted at ({i},{j}) for seed {}: {} vs frozen {frozen}",
                    fx.seed,
                    fd.matrix[(i, j)]
                );
                assert!(
                    (closed.matrix[(i, j)] - frozen).abs() <= 1e-5 * scale.max(frozen.abs()),
                    "closed form departs from frozen oracle at ({i},{j}) for seed {}",
                    fx.seed
                );
            }
        }
    }
}
