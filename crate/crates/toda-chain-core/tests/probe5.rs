use toda_chain_core::mintime::{solve_min_time, MinTimeOptions};
use toda_chain_core::{ChainState, PotentialModel};

#[test]
fn probe_oracle_instance() {
    let x0 = ChainState::new(vec![0.0, 2.0], vec![0.0, 0.0]).unwrap();
    let x1 = ChainState::new(vec![0.3, 2.2], vec![0.1, 0.0]).unwrap();
    let opts = MinTimeOptions { seed: 3, ..MinTimeOptions::default() };
    let sol = solve_min_time(&x0, &x1, 1.0, &PotentialModel::Toda, &opts).unwrap();
    println!("T={} err={:.2e} pass={} counts={:?}", sol.horizon, sol.endpoint_error, sol.certificate.pass, sol.certificate.switch_counts);
    println!("u init {} times {:?}", sol.schedule.u.initial, sol.schedule.u.switch_times);
    println!("v init {} times {:?}", sol.schedule.v.initial, sol.schedule.v.switch_times);
}
