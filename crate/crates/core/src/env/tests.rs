use super::*;
use crate::group::GroupElement as E;
use std::path::Path;

fn z() -> Arc<GroupModel> {
    Arc::new(GroupModel::integer_lattice(1))
}

fn zm(pairs: &[(i64, f64)]) -> SparseMeasure {
    SparseMeasure::new(z(), pairs.iter().map(|&(x, p)| (E::lattice([x]), p))).unwrap()
}

fn markov(m: [[f64; 2]; 2], pi: [f64; 2]) -> EnvironmentModel {
    EnvironmentModel::new(
        EnvironmentKind::MarkovBase {
            transition: m.iter().map(|r| r.to_vec()).collect(),
            stationary: pi.to_vec(),
        },
        vec![zm(&[(-1, 0.5), (1, 0.5)]), zm(&[(1, 1.0)])],
    )
    .unwrap()
}

fn asymmetric() -> EnvironmentModel {
    markov([[0.9, 0.1], [0.3, 0.7]], [0.75, 0.25])
}

fn iid() -> EnvironmentModel {
    EnvironmentModel::new(
        EnvironmentKind::Iid {
            probabilities: vec![0.3, 0.7],
        },
        vec![zm(&[(-1, 0.5), (1, 0.5)]), zm(&[(1, 1.0)])],
    )
    .unwrap()
}

fn periodic3() -> EnvironmentModel {
    EnvironmentModel::new(
        EnvironmentKind::PeriodicCycle,
        vec![zm(&[(0, 1.0)]), zm(&[(1, 1.0)]), zm(&[(-1, 0.5), (1, 0.5)])],
    )
    .unwrap()
}

fn frozen() -> EnvironmentModel {
    EnvironmentModel::frozen(zm(&[(-1, 0.5), (1, 0.5)]))
}

fn models() -> Vec<EnvironmentModel> {
    vec![
        frozen(),
        periodic3(),
        iid(),
        markov([[0.7, 0.3], [0.3, 0.7]], [0.5, 0.5]),
        asymmetric(),
    ]
}

fn empirical_law(env: &EnvironmentModel, k: i64, seeds: u64) -> Vec<f64> {
    let mut counts = vec![0.0; env.table().len()];
    for seed in 0..seeds {
        let s = env.advance(&env.sample_initial(seed), k);
        counts[env.symbol(&s)] += 1.0;
    }
    counts.iter().map(|c| c / seeds as f64).collect()
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

#[test]
fn frozen_has_a_single_state() {
    let env = frozen();
    assert_eq!(env.sample_initial(17), EnvState::Frozen);
    assert_eq!(env.step(&EnvState::Frozen), EnvState::Frozen);
    assert_eq!(env.measure_at(&EnvState::Frozen).atoms(), env.table()[0].atoms());
}

#[test]
fn markov_initial_law_is_stationary_vector() {
    let env = markov([[0.7, 0.3], [0.3, 0.7]], [0.5, 0.5]);
    let law = empirical_law(&env, 0, 100_000);
    assert!((law[0] - 0.5).abs() <= 0.01, "{law:?}");
}

#[test]
fn periodic_residues_are_equidistributed() {
    let law = empirical_law(&periodic3(), 0, 100_000);
    for p in law {
        assert!((p - 1.0 / 3.0).abs() <= 0.01);
    }
}

#[test]
fn periodic_step_wraps() {
    let env = periodic3();
    let s = EnvState::Periodic { residue: 2, period: 3 };
    assert_eq!(env.step(&s), EnvState::Periodic { residue: 0, period: 3 });
    let two = EnvironmentModel::new(EnvironmentKind::PeriodicCycle, vec![zm(&[(0, 1.0)]), zm(&[(1, 1.0)])]).unwrap();
    let s = EnvState::Periodic { residue: 1, period: 2 };
    assert_eq!(two.measure_at(&s).atoms(), zm(&[(1, 1.0)]).atoms());
}

#[test]
fn markov_one_step_law_is_stationary() {
    let env = asymmetric();
    let law = empirical_law(&env, 1, 100_000);
    assert!((law[0] - 0.75).abs() <= 0.01, "{law:?}");
}

#[test]
fn k_step_laws_match_lambda() {
    for env in models() {
        for k in -5..=5 {
            let law = empirical_law(&env, k, 100_000);
            assert!(
                l1(&law, &env.symbol_law()) <= 0.02,
                "{} k={k}: {law:?}",
                env.kind().label()
            );
        }
    }
}

#[test]
fn backward_realization_has_the_stationary_pair_law() {
    let env = asymmetric();
    let m = [[0.9, 0.1], [0.3, 0.7]];
    let pi = [0.75, 0.25];
    let mut counts = [[0.0; 2]; 2];
    let n = 100_000;
    for seed in 0..n {
        let s = env.advance(&env.sample_initial(seed), -3);
        let sym = env.symbols(&s, 2);
        counts[sym[0]][sym[1]] += 1.0 / n as f64;
    }
    for a in 0..2 {
        for b in 0..2 {
            assert!((counts[a][b] - pi[a] * m[a][b]).abs() <= 0.01, "{counts:?}");
        }
    }
}

#[test]
fn step_back_inverts_step() {
    for env in models() {
        for seed in 0..1000u64 {
            let s = env.advance(&env.sample_initial(seed), (seed % 13) as i64 - 6);
            assert_eq!(env.step_back(&env.step(&s)), s);
            assert_eq!(env.step(&env.step_back(&s)), s);
        }
    }
}

#[test]
fn realizations_are_consistent_under_shifts() {
    for env in models() {
        for seed in 0..50u64 {
            let base = env.advance(&env.sample_initial(seed), -20);
            let full = env.symbols(&base, 40);
            for k in 0..30 {
                let part = env.symbols(&env.advance(&base, k as i64), 10);
                assert_eq!(part, full[k..k + 10].to_vec(), "{}", env.kind().label());
            }
        }
    }
}

#[test]
fn iid_orbit_frequency_is_birkhoff_average() {
    let env = iid();
    let sym = env.symbols(&env.sample_initial(5), 100_000);
    let freq = sym.iter().filter(|&&s| s == 1).count() as f64 / sym.len() as f64;
    assert!((freq - 0.7).abs() <= 0.01);
}

#[test]
fn frozen_dirac_stream_is_powers() {
    let env = EnvironmentModel::frozen(zm(&[(2, 1.0)]));
    let terms = env.convolution_stream(&EnvState::Frozen, 6, 0.0).unwrap();
    for (k, t) in terms.iter().enumerate() {
        assert_eq!(t.atoms(), &[(E::lattice([2 * (k as i64 + 1)]), 1.0)]);
    }
}

/// Exact law of the sum of `n` uniform ±1 steps by enumerating all paths.
fn enumerate_paths(n: u32) -> Vec<(i64, f64)> {
    let mut counts = std::collections::BTreeMap::new();
    for bits in 0u32..(1 << n) {
        let x: i64 = (0..n).map(|i| if bits >> i & 1 == 1 { 1 } else { -1 }).sum();
        *counts.entry(x).or_insert(0.0) += 1.0;
    }
    counts.into_iter().map(|(x, c)| (x, c / f64::from(1u32 << n))).collect()
}

#[test]
fn single_measure_cycle_stream_matches_path_enumeration() {
    let env = EnvironmentModel::new(EnvironmentKind::PeriodicCycle, vec![zm(&[(-1, 0.5), (1, 0.5)])]).unwrap();
    let s = env.sample_initial(3);
    let terms = env.convolution_stream(&s, 8, 0.0).unwrap();
    for (k, t) in terms.iter().enumerate() {
        let oracle = enumerate_paths(k as u32 + 1);
        assert_eq!(t.support_len(), oracle.len());
        for ((g, p), (x, q)) in t.iter().zip(&oracle) {
            assert_eq!(g, &E::lattice([*x]));
            assert_eq!(p, *q);
        }
        assert!((t.total_mass() - 1.0).abs() < 1e-15);
    }
}

#[test]
fn stream_support_grows_by_next_step() {
    let env = asymmetric();
    let s = env.sample_initial(9);
    let terms = env.convolution_stream(&s, 12, 0.0).unwrap();
    let steps = env.measures_along(&s, 12);
    for n in 0..11 {
        for g in terms[n + 1].support() {
            let ok = terms[n]
                .support()
                .any(|x| steps[n + 1].support().any(|y| env.group().mul(x, y).unwrap() == *g));
            assert!(ok);
        }
    }
}

#[test]
fn frozen_stream_is_repeated_self_convolution() {
    let env = EnvironmentModel::frozen(zm(&[(-1, 0.25), (0, 0.5), (1, 0.25)]));
    let terms = env.convolution_stream(&EnvState::Frozen, 20, 0.0).unwrap();
    let mu = &env.table()[0];
    let mut power = mu.clone();
    for t in &terms[1..] {
        power = power.convolve(mu).unwrap();
        assert_eq!(t.atoms(), power.atoms());
    }
}

#[test]
fn stream_budget_reports_index() {
    let f2 = Arc::new(GroupModel::free_group(2));
    let env = EnvironmentModel::frozen(SparseMeasure::simple_random_walk(f2));
    let err = env
        .stream(&EnvState::Frozen, 0.0)
        .with_budget(1000)
        .take(10)
        .collect::<Result<Vec<_>>>()
        .unwrap_err();
    match err {
        Error::Budget { reached, .. } => assert_eq!(reached, 5),
        other => panic!("{other:?}"),
    }
}

#[test]
fn invalid_environments_are_rejected() {
    let t = || vec![zm(&[(0, 1.0)]), zm(&[(1, 1.0)])];
    let reducible = EnvironmentModel::new(
        EnvironmentKind::MarkovBase {
            transition: vec![vec![1.0, 0.0], vec![0.5, 0.5]],
            stationary: vec![1.0, 0.0],
        },
        t(),
    );
    assert!(matches!(reducible, Err(Error::Environment(_))));
    let not_stationary = EnvironmentModel::new(
        EnvironmentKind::MarkovBase {
            transition: vec![vec![0.9, 0.1], vec![0.3, 0.7]],
            stationary: vec![0.5, 0.5],
        },
        t(),
    );
    assert!(not_stationary.is_err());
    let bad_row = EnvironmentModel::new(
        EnvironmentKind::MarkovBase {
            transition: vec![vec![0.9, 0.2], vec![0.3, 0.7]],
            stationary: vec![0.75, 0.25],
        },
        t(),
    );
    assert!(bad_row.is_err());
    let bad_iid = EnvironmentModel::new(
        EnvironmentKind::Iid {
            probabilities: vec![0.3, 0.6],
        },
        t(),
    );
    assert!(bad_iid.is_err());
    assert!(EnvironmentModel::new(EnvironmentKind::Frozen, t()).is_err());
    let mixed = vec![
        zm(&[(0, 1.0)]),
        SparseMeasure::simple_random_walk(Arc::new(GroupModel::free_group(2))),
    ];
    assert!(EnvironmentModel::new(EnvironmentKind::PeriodicCycle, mixed).is_err());
}

#[test]
fn json_spec_builds_environment() {
    let text = r#"{
        "kind": "markov_base",
        "transition": [[0.7, 0.3], [0.3, 0.7]],
        "stationary": [0.5, 0.5],
        "measures": [
            {"atoms": [["a", 0.4], ["A", 0.4], ["b", 0.1], ["B", 0.1]]},
            {"csv": "element,mass\na,0.1\nA,0.1\nb,0.4\nB,0.4\n"}
        ]
    }"#;
    let spec: EnvironmentSpec = serde_json::from_str(text).unwrap();
    let f2 = Arc::new(GroupModel::free_group(2));
    let env = spec.build(&f2, Path::new(".")).unwrap();
    assert_eq!(env.table().len(), 2);
    assert_eq!(env.table()[1].mass(&f2.parse_element("b").unwrap()), 0.4);
    let back: EnvironmentSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
    assert_eq!(back, spec);

    let lazy: EnvironmentSpec =
        serde_json::from_str(r#"{"kind": "frozen", "measures": [{"preset": "lazy", "hold": 0.5}]}"#).unwrap();
    let env = lazy.build(&z(), Path::new(".")).unwrap();
    assert_eq!(env.table()[0].atoms(), zm(&[(-1, 0.25), (0, 0.5), (1, 0.25)]).atoms());
}
