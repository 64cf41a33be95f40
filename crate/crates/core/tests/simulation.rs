use dlsched::sim::Simulation;
use dlsched::{run, NrtTraffic, PolicyKind, SystemConfig};

#[test]
fn default_cell_constraints_at_short_horizon() {
    let mut cfg = SystemConfig::default_cell(10, 10);
    cfg.horizon_slots = 100_000;
    let r = run(&cfg, PolicyKind::Algorithm1).unwrap();
    assert!(r.avg_power <= 10.0 * 1.02, "avg power {}", r.avg_power);
    for (i, &dr) in r.rt_delivery_ratio.iter().enumerate() {
        assert!(dr >= 0.3 * 0.98, "RT user {i} delivered {dr}");
    }
}

#[test]
fn virtual_queues_shrink_relative_to_horizon() {
    let mut cfg = SystemConfig::default_cell(10, 10);
    let mut y_over_k = Vec::new();
    let mut x_over_k = Vec::new();
    for k in [10_000, 100_000, 1_000_000] {
        cfg.horizon_slots = k;
        let r = run(&cfg, PolicyKind::Algorithm1).unwrap();
        y_over_k.push(r.rt_queue_over_k.iter().cloned().fold(0.0, f64::max));
        x_over_k.push(r.power_queue_over_k);
    }
    // Noise allowance: one RT packet requirement per thousand slots.
    for w in y_over_k.windows(2).chain(x_over_k.windows(2)) {
        assert!(w[1] <= w[0] + 1e-3, "Y/K {y_over_k:?}, X/K {x_over_k:?}");
    }
}

#[test]
fn stepping_matches_run() {
    let mut cfg = SystemConfig::default_cell(4, 3);
    cfg.horizon_slots = 3_000;
    cfg.channel_on_prob.fill(0.6);
    for policy in PolicyKind::ALL {
        let mut sim = Simulation::new(cfg.clone(), policy).unwrap();
        for _ in 0..cfg.horizon_slots {
            let d = sim.step();
            assert!(d.total_duration() <= cfg.slot_seconds * (1.0 + 1e-12));
            assert!(d.power.iter().all(|&p| (0.0..=cfg.p_max).contains(&p)));
        }
        assert_eq!(sim.report(), run(&cfg, policy).unwrap());
    }
}

#[test]
fn bernoulli_light_load_is_fully_served() {
    let mut cfg = SystemConfig::default_cell(0, 2);
    cfg.nrt_traffic = NrtTraffic::Bernoulli;
    cfg.arrival_rate.fill(0.05);
    cfg.horizon_slots = 200_000;
    let r = run(&cfg, PolicyKind::Algorithm1).unwrap();
    for (served, admitted) in r.nrt_throughput.iter().zip(&r.admitted_rate) {
        assert!((admitted - 0.05).abs() < 0.01, "admitted {admitted}");
        assert!(
            (served - admitted).abs() < 0.01,
            "served {served} vs {admitted}"
        );
    }
}
