use super::*;

fn fixture(name: &str) -> ScenarioConfig {
    let text = match name {
        "honest" => include_str!("../../fixtures/scenario_honest.json"),
        "breach" => include_str!("../../fixtures/scenario_breach.json"),
        "collusion" => include_str!("../../fixtures/scenario_collusion.json"),
        "watchdog_dos" => include_str!("../../fixtures/scenario_watchdog_dos.json"),
        _ => unreachable!(),
    };
    serde_json::from_str(text).unwrap()
}

fn settled(config: &ScenarioConfig) -> (ScenarioTrace, BTreeMap<ActorRole, i64>) {
    let trace = run_scenario(config).unwrap();
    let p = config.channel.params;
    let s = settle(&trace, p.k1, p.k2).unwrap();
    (trace, s)
}

fn conserved(config: &ScenarioConfig, trace: &ScenarioTrace, s: &BTreeMap<ActorRole, i64>) {
    let total: i64 = s.values().sum();
    assert_eq!(total + trace.total_fees as i64, trace.seeded_value as i64);
    let p = config.channel.params;
    assert_eq!(trace.seeded_value, p.capacity() + config.miner_fee);
}

#[test]
fn honest_lifecycle_publishes_two_transactions() {
    let config = fixture("honest");
    let (trace, s) = settled(&config);
    let labels: Vec<TxLabel> = trace.channel_txs().map(|t| t.label).collect();
    assert_eq!(labels, vec![TxLabel::Funding, TxLabel::MutualClose]);
    assert_eq!(s[&ActorRole::Device], 80_000 - config.miner_fee as i64);
    assert_eq!(s[&ActorRole::Gateway], 20_000);
    assert_eq!(pool_total(&s, true) + pool_total(&s, false), 0);
    conserved(&config, &trace, &s);
    let updates = trace.events.iter().filter(|e| matches!(e.kind, EventKind::StateUpdated { .. })).count();
    assert_eq!(updates, 2);
}

#[test]
fn gateway_breach_is_recovered_within_window() {
    let config = fixture("breach");
    let (trace, s) = settled(&config);
    let breach = trace.confirmed(|l| l == TxLabel::CommitmentB(2)).unwrap();
    let recovery = trace.confirmed(|l| l == TxLabel::Recovery(2)).unwrap();
    assert_eq!(recovery.height, breach.height + 1);
    assert!(recovery.height < breach.height + config.channel.params.w as u64);
    let fee = config.miner_fee as i64;
    // tx_b pays 20,000 to the device; recovery sends V - gamma1 - sigma1 - fee back.
    let recovered = (80_000 - fee) - 24_000 - fee;
    assert_eq!(s[&ActorRole::Device], 20_000 + recovered);
    assert_eq!(s[&ActorRole::Gateway], 0);
    assert_eq!(s[&ActorRole::Watchdog(0)], 12_000);
    assert_eq!(s[&ActorRole::Publisher(0)], 12_000 - fee);
    conserved(&config, &trace, &s);
    assert!(trace.confirmed(|l| l == TxLabel::TimelockClaim).is_none());
}

#[test]
fn one_honest_watchdog_suffices() {
    let (_, breach) = settled(&fixture("breach"));
    let (trace, dos) = settled(&fixture("watchdog_dos"));
    assert_eq!(breach[&ActorRole::Device], dos[&ActorRole::Device]);
    assert_eq!(breach[&ActorRole::Gateway], dos[&ActorRole::Gateway]);
    assert_eq!(pool_total(&breach, false), pool_total(&dos, false));
    assert_eq!(dos[&ActorRole::Watchdog(4)], 12_000);
    let alert = trace
        .events
        .iter()
        .find(|e| matches!(e.kind, EventKind::Message { message: "alert", .. }))
        .unwrap();
    assert_eq!(alert.actor, Some(ActorRole::Watchdog(4)));
}

#[test]
fn colluding_publishers_let_the_stale_state_stand() {
    let config = fixture("collusion");
    let (trace, s) = settled(&config);
    assert!(trace.confirmed(|l| matches!(l, TxLabel::Recovery(_))).is_none());
    let breach = trace.confirmed(|l| l == TxLabel::CommitmentB(2)).unwrap();
    let claim = trace.confirmed(|l| l == TxLabel::TimelockClaim).unwrap();
    assert_eq!(claim.height, breach.height + config.channel.params.w as u64);
    let fee = config.miner_fee as i64;
    assert_eq!(s[&ActorRole::Gateway], 80_000 - 2 * fee - 50_000);
    assert_eq!(s[&ActorRole::Device], 20_000);
    assert_eq!(pool_total(&s, true), 50_000);
    assert!((0..5).all(|i| s[&ActorRole::Publisher(i)] == 10_000));
    conserved(&config, &trace, &s);
}

#[test]
fn dropping_publishers_cannot_stop_a_direct_close() {
    let mut config = fixture("honest");
    config.strategies.publisher = vec![Strategy::PublisherDrop; 5];
    let (trace, s) = settled(&config);
    assert_eq!(trace.channel_txs().count(), 2);
    assert_eq!(s[&ActorRole::Gateway], 20_000);
}

#[test]
fn cheating_device_is_punished_by_the_gateway() {
    let mut config = fixture("honest");
    config.strategies.device = Strategy::PublishRevoked(1);
    let (trace, s) = settled(&config);
    assert!(trace.confirmed(|l| l == TxLabel::CommitmentA(1)).is_some());
    assert!(trace.confirmed(|l| l == TxLabel::BreachRemedy(1)).is_some());
    let fee = config.miner_fee as i64;
    // state 1 pays the gateway 50,000 directly; the remedy sweeps the device's
    // 50,000 - sigma1 - fee output.
    assert_eq!(s[&ActorRole::Gateway], 50_000 + (50_000 - 12_000 - fee) - fee);
    assert_eq!(s[&ActorRole::Device], 0);
    conserved(&config, &trace, &s);
    device_interface_audit(&trace).unwrap();
}

#[test]
fn audit_passes_fixtures_and_catches_miswiring() {
    for name in ["honest", "breach", "collusion", "watchdog_dos"] {
        let trace = run_scenario(&fixture(name)).unwrap();
        device_interface_audit(&trace).unwrap();
    }
    let trace = Simulation::new(&fixture("honest")).unwrap().with_miswired_device().run().unwrap();
    let v = device_interface_audit(&trace).unwrap_err();
    assert_eq!(v.0.actor, Some(ActorRole::Device));
    assert!(matches!(v.0.kind, EventKind::ChainRead { .. }));
}

#[test]
fn audit_accepts_empty_device_log() {
    let trace = ScenarioTrace {
        horizon: 1,
        terminated: true,
        final_height: 0,
        events: vec![],
        on_chain: vec![],
        utxo: vec![],
        bribes: vec![],
        seeded_value: 0,
        total_fees: 0,
    };
    assert!(device_interface_audit(&trace).is_ok());
}

#[test]
fn traces_are_deterministic() {
    for name in ["honest", "breach"] {
        let a = run_scenario(&fixture(name)).unwrap();
        let b = run_scenario(&fixture(name)).unwrap();
        assert_eq!(a.to_json_lines(), b.to_json_lines());
        assert_eq!(a, b);
    }
}

#[test]
fn short_horizon_is_reported() {
    let mut config = fixture("honest");
    config.horizon = 5;
    match run_scenario(&config) {
        Err(ScenarioError::HorizonExceeded(trace)) => {
            assert!(!trace.terminated);
            assert_eq!(settle(&trace, 5, 5), Err(ScenarioError::Unsettled));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let base = fixture("breach");
    let mut c = base.clone();
    c.strategies.gateway = Strategy::PublishRevoked(4);
    assert!(matches!(Simulation::new(&c), Err(ScenarioError::ConfigInvalid(_))));
    let mut c = base.clone();
    c.strategies.publisher.pop();
    assert!(matches!(Simulation::new(&c), Err(ScenarioError::ConfigInvalid(_))));
    let mut c = base.clone();
    c.strategies.device = Strategy::PublishRevoked(1);
    assert!(matches!(Simulation::new(&c), Err(ScenarioError::ConfigInvalid(_))));
    let mut c = base.clone();
    c.updates.push(5_000);
    assert!(matches!(Simulation::new(&c), Err(ScenarioError::ConfigInvalid(_))));
    let mut c = base;
    c.strategies.watchdog[0] = Strategy::ColludePublisher(1);
    assert!(matches!(Simulation::new(&c), Err(ScenarioError::ConfigInvalid(_))));
}

#[test]
fn game_config_maps_orientation() {
    let g = game_config(&fixture("collusion"));
    assert_eq!((g.tx1.alpha, g.tx1.beta), (60_000, 40_000));
    assert_eq!((g.tx2.alpha, g.tx2.beta), (80_000, 20_000));
    assert_eq!((g.tx3.alpha, g.tx3.beta), (30_000, 70_000));
    assert_eq!(g.sigma2, Some(50_000));
    assert_eq!(g.gamma2, None);
}

#[test]
fn trace_serializes_as_json_lines() {
    let trace = run_scenario(&fixture("honest")).unwrap();
    let lines = trace.to_json_lines();
    for line in lines.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v.get("event").is_some() && v.get("actor").is_some() && v.get("tick").is_some());
    }
    assert!(lines.contains("\"actor\":\"ledger\""));
}
