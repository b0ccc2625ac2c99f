use std::process::Command;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vocplan::belief::{FrontierBelief, IndependentBelief, Kernel, NormalPrior};
use vocplan::graph::expand;
use vocplan::harness::{read_csv, write_csv, RegretRecord};
use vocplan::mdp::{bandit_tree_optimal, BanditTreeEnv, Mdp, PegBoard, PegSolitaire, TableMdp};
use vocplan::policies::{plan, MetaPolicyConfig, PolicyKind};
use vocplan::voc::phi_vocs;

#[test]
fn every_policy_plans_on_both_benchmarks() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let env = BanditTreeEnv::build(4, 0.9, &Kernel::white(0.1), 0.01, &mut rng).unwrap();
    let board: PegBoard = "###.\n.##.\n#..#\n.#..\n".parse().unwrap();
    for kind in PolicyKind::ALL {
        let mut cfg = MetaPolicyConfig::new(kind, 2, 30, NormalPrior::new(0.5, 0.1, 0.1).unwrap());
        cfg.m_final = 100;
        let out = plan(&env, &env.root(), &cfg, &mut rng).unwrap();
        assert_eq!(out.computations, 30);
        assert!(env.actions(&env.root()).contains(&out.action));
        let q = bandit_tree_optimal(&env);
        assert!(q[out.action_index] <= q[0].max(q[1]));

        cfg.prior = NormalPrior::new(3.0, 4.0, 4.0).unwrap();
        cfg.rollout_depth = Some(16);
        let out = plan(&PegSolitaire, &board, &cfg, &mut rng).unwrap();
        assert!(PegSolitaire.actions(&board).contains(&out.action), "{kind}");
    }
}

#[test]
fn terminal_state_is_rejected() {
    let board: PegBoard = "#...\n....\n....\n...#\n".parse().unwrap();
    let cfg = MetaPolicyConfig::new(PolicyKind::VocPhi, 2, 5, NormalPrior::new(0.0, 1.0, 1.0).unwrap());
    assert!(plan(&PegSolitaire, &board, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
}

fn record() -> impl Strategy<Value = RegretRecord> {
    (
        "[a-z_]{1,12}",
        "[a-z_,\" ]{1,12}",
        0u64..10_000,
        0u64..1_000,
        any::<u64>(),
        prop_oneof![Just("simple_regret"), Just("pegs_remaining")],
        prop_oneof![-1e6f64..1e6, Just(0.0), Just(1e-300), Just(f64::MAX)],
        any::<u64>(),
    )
        .prop_map(|(env, policy, budget, instance, seed, metric, value, wall_ns)| RegretRecord {
            env,
            policy,
            budget,
            instance,
            seed,
            metric: metric.into(),
            value,
            wall_ns,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip(records in proptest::collection::vec(record(), 0..20)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_csv(&records, &path).unwrap();
        let back = read_csv(&path).unwrap();
        prop_assert_eq!(back, vocplan::harness::canonical(records));
    }

    /// VOC is at least VOC′, and both are non-negative.
    #[test]
    fn voc_dominates_voc_prime(
        seed in any::<u64>(),
        depth in 1usize..=3,
        branching in 2usize..=3,
    ) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rewards: Vec<f64> = (0..64).map(|_| rng.random_range(-0.5..0.5)).collect();
        let m = TableMdp::complete_tree(branching, depth, |s, a| rewards[(s + 7 * a) % 64], 0.9);
        let g = expand(&m, &0, depth).unwrap();
        let priors = (0..g.frontier().len())
            .map(|_| NormalPrior::new(rng.random_range(-1.0..1.0), rng.random_range(0.0..1.0), 0.5).unwrap())
            .collect();
        let b = FrontierBelief::Independent(IndependentBelief::with_priors(priors).unwrap());
        for v in phi_vocs(&g, &b) {
            prop_assert!(v.voc_prime >= -1e-12);
            prop_assert!(v.voc + 1e-12 >= v.voc_prime, "{:?}", v);
        }
    }
}

#[test]
fn cli_bench_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("peg.csv");
    let status = Command::new(env!("CARGO_BIN_EXE_vocplan"))
        .args(["bench", "peg", "--budgets", "4,8", "--instances", "3", "--policies", "uct,voc_phi", "--seed", "3", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let records = read_csv(&out).unwrap();
    assert_eq!(records.len(), 2 * 2 * 3);
    assert!(records.iter().all(|r| r.env == "peg" && r.wall_ns == 0));
}

#[test]
fn cli_config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("b.conf");
    std::fs::write(&conf, "depth = 3\nhorizon = 2\nbudgets = 5\ninstances = 7\npolicies = uct\n").unwrap();
    let out = dir.path().join("b.csv");
    let status = Command::new(env!("CARGO_BIN_EXE_vocplan"))
        .args(["bench", "bandit-tree", "--config"])
        .arg(&conf)
        .args(["--instances", "2", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    assert_eq!(read_csv(&out).unwrap().len(), 2);
}

#[test]
fn cli_rejects_bad_config() {
    let status = Command::new(env!("CARGO_BIN_EXE_vocplan"))
        .args(["bench", "peg", "--budgets", "8,4"])
        .output()
        .unwrap();
    assert!(!status.status.success());
    assert!(String::from_utf8_lossy(&status.stderr).contains("strictly increasing"));
}
