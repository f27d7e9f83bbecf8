//! Engine behaviour on a small synthetic dataset: one bright pixel per
//! label on a 4x4 image with seeded background noise.

use rand::Rng;
use tokenfl_core::engine::{
    run_simulation, MechanismKind, PrivacySettings, RoundRecord, SimConfig, SimData,
};
use tokenfl_core::learning::{
    aggregate, batch_gradient, init_model, local_train, Architecture, Dataset, PartitionScheme,
    Split, TrainSpec,
};
use tokenfl_core::mechanisms::{cost, reward, value, MechanismParams};
use tokenfl_core::rng::{stream_rng, Stream};
use tokenfl_core::strategy::{simulate_client, Participation};

fn synthetic(n: usize, seed: u64, split: Split) -> Dataset {
    let mut rng = stream_rng(seed, Stream::Init, 0, 0);
    let mut pixels = Vec::with_capacity(n * 16);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = (i % 10) as u8;
        for j in 0..16 {
            pixels.push(if j == usize::from(label) {
                255
            } else {
                rng.random_range(0..60)
            });
        }
        labels.push(label);
    }
    Dataset::new(4, 4, pixels, labels, split).unwrap()
}

struct Fixture {
    train: Dataset,
    local: Dataset,
    global: Dataset,
}

impl Fixture {
    fn new() -> Self {
        Self {
            train: synthetic(600, 1, Split::Train),
            local: synthetic(100, 2, Split::LocalTest),
            global: synthetic(200, 3, Split::GlobalTest),
        }
    }

    fn data(&self) -> SimData<'_> {
        SimData {
            train: &self.train,
            local_test: &self.local,
            global_test: &self.global,
        }
    }
}

fn config(mechanism: MechanismKind, clients: u32, eps: Vec<f64>) -> SimConfig {
    SimConfig {
        mechanism,
        clients,
        eps,
        layers: vec![16, 8, 10],
        train: TrainSpec {
            batches: 3,
            batch_size: 16,
            lr: 0.1,
        },
        scheme: PartitionScheme::Intermediary,
        privacy: PrivacySettings {
            radius: 0.5,
            ..PrivacySettings::default()
        },
        horizon: 30,
        stop_accuracy: None,
        ..SimConfig::default()
    }
}

fn run(f: &Fixture, cfg: SimConfig) -> Vec<RoundRecord> {
    run_simulation(cfg, f.data()).unwrap()
}

#[test]
fn zero_horizon_is_empty() {
    let f = Fixture::new();
    let cfg = SimConfig {
        horizon: 0,
        ..config(MechanismKind::Strategic, 3, vec![])
    };
    assert!(run(&f, cfg).is_empty());
}

#[test]
fn identical_runs_are_identical() {
    let f = Fixture::new();
    let cfg = config(MechanismKind::Strategic, 3, vec![25.0, 15.0, 20.0]);
    assert_eq!(run(&f, cfg.clone()), run(&f, cfg.clone()));
    let other = SimConfig {
        seed: 2,
        ..cfg.clone()
    };
    assert_ne!(run(&f, cfg), run(&f, other));
}

#[test]
fn early_stop() {
    let f = Fixture::new();
    let cfg = SimConfig {
        stop_accuracy: Some(0.5),
        privacy: PrivacySettings {
            enabled: false,
            ..PrivacySettings::default()
        },
        ..config(MechanismKind::Strategic, 3, vec![])
    };
    let recs = run(&f, cfg);
    assert!(recs.len() < 30);
    assert!(recs.last().unwrap().global_accuracy >= 0.5);
    assert!(recs[..recs.len() - 1]
        .iter()
        .all(|r| r.global_accuracy < 0.5));
}

#[test]
fn tokens_are_conserved() {
    let f = Fixture::new();
    for (kind, eps) in [
        (MechanismKind::Strategic, vec![25.0, 15.0, 20.0, 5.0]),
        (MechanismKind::Baseline, vec![25.0, 15.0, 7.0, 1.0]),
    ] {
        let cfg = config(kind, 4, eps);
        let p = cfg.params.clone();
        let recs = run(&f, cfg);
        let mut balance = [0.0; 4];
        for r in &recs {
            let credited: f64 = r.clients.iter().map(|c| c.earned).sum();
            assert!((credited - r.tokens_credited).abs() < 1e-12);
            for c in &r.clients {
                let i = c.client as usize;
                if kind == MechanismKind::Strategic {
                    let want = if c.participated {
                        reward(c.eps, &p)
                    } else {
                        0.0
                    };
                    assert_eq!(c.earned, want);
                }
                assert_eq!(c.participated, r.participants.contains(&c.client));
                balance[i] += c.earned - c.spent - c.expired;
                assert!(
                    (balance[i] - c.balance).abs() < 1e-9,
                    "round {} client {i}",
                    r.round
                );
            }
        }
    }
}

#[test]
fn evicted_clients_stay_out() {
    let f = Fixture::new();
    let recs = run(
        &f,
        config(MechanismKind::Strategic, 3, vec![25.0, 5.0, 15.0]),
    );
    for c in 0..3u32 {
        let evicted = recs
            .iter()
            .find(|r| r.clients[c as usize].evicted)
            .map(|r| r.round);
        if let Some(at) = evicted {
            for r in recs.iter().filter(|r| r.round >= at) {
                assert!(!r.participants.contains(&c));
                assert!(r.clients[c as usize].evicted);
                assert!(!r.clients[c as usize].trained);
            }
        }
    }
    // eps 5 earns less than the price and is evicted right after round 1.
    assert!(recs[1].clients[1].evicted);
    assert!(!recs.last().unwrap().clients[2].evicted);
}

#[test]
fn engine_matches_the_analytic_client_model() {
    let f = Fixture::new();
    let eps = vec![25.0, 20.0, 17.0, 15.0, 10.0, 14.9];
    for (kind, groups, freshness, price) in [
        (MechanismKind::Strategic, 1, 1, 1),
        (MechanismKind::Strategic, 1, 2, 4),
        (MechanismKind::Strategic, 1, 3, 3),
        (MechanismKind::StrategicGrouped, 2, 1, 1),
        (MechanismKind::StrategicGrouped, 3, 2, 2),
    ] {
        let mut cfg = config(kind, 6, eps.clone());
        cfg.params.groups = groups;
        cfg.params.freshness = freshness;
        cfg.params.model_price = price;
        cfg.horizon = 45;
        let p = cfg.params.clone();
        let recs = run(&f, cfg);
        for (i, &e) in eps.iter().enumerate() {
            let want = simulate_client(i as u32, 6, e, 45, &p, Participation::Rational);
            let rounds: Vec<u32> = recs
                .iter()
                .filter(|r| r.clients[i].participated)
                .map(|r| r.round)
                .collect();
            let evicted_at = recs.iter().find(|r| r.clients[i].evicted).map(|r| r.round);
            let purchases = recs.iter().filter(|r| r.clients[i].bought).count() as u32;
            let payoff = recs.last().unwrap().clients[i].cumulative_payoff;
            let ctx = format!("G={groups} n={freshness} C={price} eps={e}");
            assert_eq!(rounds, want.participated, "{ctx}");
            assert_eq!(evicted_at, want.evicted_at, "{ctx}");
            assert_eq!(purchases, want.purchases, "{ctx}");
            assert!((payoff - want.payoff).abs() < 1e-9, "{ctx}");
        }
    }
}

#[test]
fn payoff_is_rederivable_from_records() {
    let f = Fixture::new();
    let cfg = config(MechanismKind::Strategic, 4, vec![25.0, 20.0, 15.0, 3.0]);
    let p: MechanismParams = cfg.params.clone();
    let recs = run(&f, cfg);
    for i in 0..4 {
        let mut owned = 0;
        let mut payoff = 0.0;
        for r in &recs {
            let c = &r.clients[i];
            if c.participated {
                payoff -= cost(c.eps, &p);
            }
            if c.bought {
                payoff += value(c.owned_model_round) - value(owned);
            }
            owned = c.owned_model_round;
            assert!((payoff - c.cumulative_payoff).abs() < 1e-9);
        }
    }
}

#[test]
fn grouped_participation_is_balanced() {
    let f = Fixture::new();
    let mut cfg = config(MechanismKind::StrategicGrouped, 6, vec![15.0]);
    cfg.params.groups = 2;
    cfg.horizon = 7;
    let recs = run(&f, cfg);
    for i in 0..6 {
        let n = recs.iter().filter(|r| r.clients[i].participated).count();
        assert!(n == 3 || n == 4, "client {i}: {n}");
        let scheduled: Vec<bool> = recs.iter().map(|r| r.clients[i].scheduled).collect();
        assert!(scheduled.windows(2).all(|w| w[0] != w[1]));
    }
    assert!(recs.iter().all(|r| r.participants.len() == 3));
}

#[test]
fn baseline_never_evicts_and_top_eps_always_buys() {
    let f = Fixture::new();
    let recs = run(
        &f,
        config(MechanismKind::Baseline, 3, vec![25.0, 15.0, 1.0]),
    );
    assert!(recs.iter().all(|r| r.clients.iter().all(|c| !c.evicted)));
    assert!(recs.iter().all(|r| r.clients[0].bought));
    let counts: Vec<usize> = (0..3)
        .map(|i| recs.iter().filter(|r| r.clients[i].bought).count())
        .collect();
    assert!(counts[0] > counts[1] && counts[1] > counts[2], "{counts:?}");
    assert_eq!(counts[2], 15);
}

#[test]
fn everyone_at_eps_a_holds_the_same_model() {
    let f = Fixture::new();
    let recs = run(&f, config(MechanismKind::Strategic, 5, vec![15.0]));
    for r in &recs {
        assert!(r.clients.iter().all(|c| c.bought));
        assert!(r
            .clients
            .iter()
            .all(|c| c.accuracy == r.clients[0].accuracy));
    }
}

#[test]
fn fedavg_equals_centralized_sgd() {
    // Two clients whose partitions are exactly one batch each: one round of
    // FedAvg is one SGD step on the union.
    let f = Fixture::new();
    let arch = Architecture::new(vec![16, 8, 10]).unwrap();
    let w = init_model(&arch, 9);
    let a: Vec<usize> = (0..20).collect();
    let b: Vec<usize> = (20..40).collect();
    let spec = TrainSpec {
        batches: 1,
        batch_size: 20,
        lr: 0.3,
    };
    let ga = local_train(&w, &f.train, &a, &spec, 1).unwrap().gradient;
    let gb = local_train(&w, &f.train, &b, &spec, 2).unwrap().gradient;
    let fed = aggregate(&w, &[ga, gb], &[20, 20], spec.lr).unwrap();
    let union: Vec<usize> = (0..40).collect();
    let mut g = vec![0.0; w.len()];
    batch_gradient(&w, &f.train, &union, &mut g).unwrap();
    for ((x, w0), gi) in fed.values.iter().zip(&w.values).zip(&g) {
        assert!((x - (w0 - spec.lr * gi)).abs() < 1e-12);
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let f = Fixture::new();
    let mut cfg = config(MechanismKind::StrategicGrouped, 5, vec![]);
    cfg.params.groups = 2;
    assert!(run_simulation(cfg, f.data()).is_err());
    let cfg = SimConfig {
        layers: vec![784, 128, 10],
        ..config(MechanismKind::Strategic, 3, vec![])
    };
    assert!(run_simulation(cfg, f.data()).is_err());
    let mut cfg = config(MechanismKind::Strategic, 11, vec![]);
    cfg.scheme = PartitionScheme::Disjoint;
    assert!(run_simulation(cfg, f.data()).is_err());
}
