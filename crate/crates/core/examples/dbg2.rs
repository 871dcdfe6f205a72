use isac_core::rxbf::ReflectSolution;
use isac_core::txbf::{solve_extended_tx, TxOpts};
use isac_core::*;

fn main() {
    let scenario = build_scenario(&SystemConfig::default(), &Topology::two_irs_default()).unwrap();
    let reflect = ReflectSolution::random_init(&scenario);
    match solve_extended_tx(&scenario, &reflect, ReceiverType::TypeII, &TxOpts::default()) {
        Ok(tx) => println!("OK power={}", tx.power_used()),
        Err(e) => println!("ERR: {e}"),
    }
}
