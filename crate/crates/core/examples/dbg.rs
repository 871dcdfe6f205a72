use isac_core::orchestrator::{optimize, OrchestratorOpts, Variant};
use isac_core::*;

fn main() {
    let scenario = build_scenario(&SystemConfig::default(), &Topology::two_irs_default()).unwrap();
    let opts = OrchestratorOpts::default();
    for variant in [Variant::P1I, Variant::P1II, Variant::P4I, Variant::P4II] {
        let t0 = std::time::Instant::now();
        let t = optimize(variant, &scenario, &opts);
        let series: Vec<f64> = t.iterations.iter().map(|r| r.max_crb.as_f64()).collect();
        println!(
            "{variant}: {} iters, converged {}, reason {:?}, {:.1}s, series {:?}",
            t.iterations.len(),
            t.converged,
            t.stop_reason,
            t0.elapsed().as_secs_f64(),
            series
        );
        if let Some(last) = t.iterations.last() {
            println!("   min_sinr {}  power {}", last.min_sinr, last.power_used);
        }
        if let Some(e) = &t.error {
            println!("   error: {e}");
        }
    }
}
