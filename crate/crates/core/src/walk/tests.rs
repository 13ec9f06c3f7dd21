use super::*;
use crate::env::EnvironmentKind;
use crate::group::{GroupElement as E, Word};
use crate::measure::SparseMeasure;
use rustc_hash::FxHashMap;

fn z() -> Arc<GroupModel> {
    Arc::new(GroupModel::integer_lattice(1))
}

fn f2() -> Arc<GroupModel> {
    Arc::new(GroupModel::free_group(2))
}

fn zm(pairs: &[(i64, f64)]) -> SparseMeasure {
    SparseMeasure::new(z(), pairs.iter().map(|&(x, p)| (E::lattice([x]), p))).unwrap()
}

fn fm(g: &Arc<GroupModel>, pairs: &[(&str, f64)]) -> SparseMeasure {
    SparseMeasure::new(g.clone(), pairs.iter().map(|&(x, p)| (g.parse_element(x).unwrap(), p))).unwrap()
}

fn z_markov() -> EnvironmentModel {
    EnvironmentModel::new(
        EnvironmentKind::MarkovBase {
            transition: vec![vec![0.9, 0.1], vec![0.3, 0.7]],
            stationary: vec![0.75, 0.25],
        },
        vec![zm(&[(-1, 0.5), (1, 0.5)]), zm(&[(0, 0.5), (1, 0.5)])],
    )
    .unwrap()
}

fn f2_markov() -> EnvironmentModel {
    let g = f2();
    EnvironmentModel::new(
        EnvironmentKind::MarkovBase {
            transition: vec![vec![0.7, 0.3], vec![0.3, 0.7]],
            stationary: vec![0.5, 0.5],
        },
        vec![
            fm(&g, &[("a", 0.4), ("A", 0.4), ("b", 0.1), ("B", 0.1)]),
            fm(&g, &[("e", 0.2), ("a", 0.1), ("A", 0.1), ("b", 0.3), ("B", 0.3)]),
        ],
    )
    .unwrap()
}

fn f2_srw() -> EnvironmentModel {
    EnvironmentModel::frozen(SparseMeasure::simple_random_walk(f2()))
}

fn empirical<'a, I: Iterator<Item = &'a E>>(xs: I) -> FxHashMap<E, f64> {
    let mut counts: FxHashMap<E, f64> = FxHashMap::default();
    let mut total = 0.0;
    for x in xs {
        *counts.entry(x.clone()).or_default() += 1.0;
        total += 1.0;
    }
    counts.values_mut().for_each(|c| *c /= total);
    counts
}

fn tv_to_measure(emp: &FxHashMap<E, f64>, mu: &SparseMeasure) -> f64 {
    let mut tv: f64 = mu
        .iter()
        .map(|(g, p)| (p - emp.get(g).copied().unwrap_or(0.0)).abs())
        .sum();
    tv += emp.iter().filter(|(g, _)| !mu.contains(g)).map(|(_, p)| p).sum::<f64>();
    tv
}

#[test]
fn frozen_dirac_paths_are_powers() {
    let env = EnvironmentModel::frozen(zm(&[(3, 1.0)]));
    let ens = sample_paths(&env, 7, 20, 1, SamplingMode::Annealed).unwrap();
    for p in &ens.samples {
        assert_eq!(p.terminal(), &E::lattice([21]));
    }
}

#[test]
fn alternating_cycle_two_step_law() {
    let env = EnvironmentModel::new(
        EnvironmentKind::PeriodicCycle,
        vec![zm(&[(-1, 0.5), (1, 0.5)]), zm(&[(1, 1.0)])],
    )
    .unwrap();
    for mode in [SamplingMode::Quenched, SamplingMode::Annealed] {
        let ens = sample_paths(&env, 2, 10_000, 7, mode).unwrap();
        let emp = empirical(ens.terminals());
        assert_eq!(emp.len(), 2);
        assert!((emp[&E::lattice([0])] - 0.5).abs() <= 0.02);
        assert!((emp[&E::lattice([2])] - 0.5).abs() <= 0.02);
    }
}

#[test]
fn quenched_marginal_matches_stream() {
    let env = z_markov();
    let ens = sample_paths(&env, 6, 10_000, 3, SamplingMode::Quenched).unwrap();
    let state = ens.manifest.env_state.unwrap();
    let stream = env.convolution_stream(&state, 6, 0.0).unwrap();
    let exact = &stream[5];
    assert!(exact.support_len() <= 13);
    let emp = empirical(ens.terminals());
    assert!(tv_to_measure(&emp, exact) <= 0.05);
    for x in ens.terminals() {
        assert!(exact.mass(x) > 0.0);
    }
    // Attainability along the whole path.
    for p in &ens.samples {
        for (k, x) in p.positions.iter().enumerate().skip(1) {
            assert!(stream[k - 1].mass(x) > 0.0);
        }
    }
}

#[test]
fn path_invariants_hold() {
    let env = f2_markov();
    for mode in [SamplingMode::Quenched, SamplingMode::Annealed] {
        let ens = sample_paths(&env, 25, 200, 11, mode).unwrap();
        let g = env.group();
        for p in &ens.samples {
            assert_eq!(p.positions[0], g.identity());
            let measures = env.measures_along(&p.env_state, 25);
            let symbols = env.symbols(&p.env_state, 25);
            for (k, mu) in measures.iter().enumerate() {
                assert_eq!(p.positions[k + 1], g.mul(&p.positions[k], &p.increments[k]).unwrap());
                assert!(mu.contains(&p.increments[k]));
                assert_eq!(symbols[k], p.env_symbols[k]);
            }
        }
        let distinct: std::collections::HashSet<_> = ens.samples.iter().map(|p| p.env_state).collect();
        match mode {
            SamplingMode::Quenched => assert_eq!(distinct.len(), 1),
            SamplingMode::Annealed => assert!(distinct.len() > 150),
        }
    }
}

#[test]
fn ensembles_are_reproducible_across_worker_counts() {
    let env = f2_markov();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                let ens = sample_paths(&env, 30, 300, 5, SamplingMode::Annealed).unwrap();
                let mut buf = Vec::new();
                ens.write_csv(&mut buf).unwrap();
                buf
            })
    };
    let one = run(1);
    assert_eq!(one, run(3));
    let text = String::from_utf8(one).unwrap();
    assert!(text.starts_with("path_id,step,element,env_symbol\n0,0,"));
    assert_eq!(text.lines().count(), 1 + 300 * 30);
}

#[test]
fn skew_transform_rebases_positions() {
    let env = f2_markov();
    let ens = sample_paths(&env, 12, 50, 2, SamplingMode::Annealed).unwrap();
    let g = env.group();
    for p in &ens.samples {
        let mut q = p.clone();
        for m in 1..=5 {
            q = q.skew(&env).unwrap();
            assert_eq!(q.env_state, env.advance(&p.env_state, m as i64));
            assert_eq!(q.increments, p.increments[m..].to_vec());
            let base = g.inv(&p.positions[m]);
            for k in 0..q.positions.len() {
                assert_eq!(q.positions[k], g.mul(&base, &p.positions[k + m]).unwrap());
            }
        }
    }
    let frozen = f2_srw();
    let (s, h) = skew_transform(
        &frozen,
        &EnvState::Frozen,
        &[E::Free(Word::letter(0)), E::Free(Word::letter(2))],
    )
    .unwrap();
    assert_eq!(s, EnvState::Frozen);
    assert_eq!(h, vec![E::Free(Word::letter(2))]);
    assert!(skew_transform(&frozen, &EnvState::Frozen, &[]).is_err());
}

#[test]
fn skew_transform_preserves_the_annealed_law() {
    let env = z_markov();
    let key = |sym: usize, a: &E, b: &E| format!("{sym}|{a}|{b}");
    let mut before: FxHashMap<String, f64> = FxHashMap::default();
    let mut after: FxHashMap<String, f64> = FxHashMap::default();
    let count = 100_000;
    let rows = map_paths(&env, 3, count, 21, SamplingMode::Annealed, |_, p| {
        let q = p.skew(&env).unwrap();
        (
            key(p.env_symbols[0], &p.increments[0], &p.increments[1]),
            key(q.env_symbols[0], &q.increments[0], &q.increments[1]),
        )
    });
    for (b, a) in rows {
        *before.entry(b).or_default() += 1.0 / count as f64;
        *after.entry(a).or_default() += 1.0 / count as f64;
    }
    let keys: std::collections::BTreeSet<_> = before.keys().chain(after.keys()).cloned().collect();
    let tv: f64 = keys
        .iter()
        .map(|k| (before.get(k).unwrap_or(&0.0) - after.get(k).unwrap_or(&0.0)).abs())
        .sum();
    assert!(tv <= 0.02, "tv {tv}");
}

#[test]
fn translated_ensemble_matches_translated_stream() {
    let env = z_markov();
    let ens = sample_paths(&env, 5, 10_000, 4, SamplingMode::Quenched).unwrap();
    let state = ens.manifest.env_state.unwrap();
    let exact = env.convolution_stream(&state, 5, 0.0).unwrap().pop().unwrap();
    let g = E::lattice([7]);
    let moved: Vec<E> = ens.terminals().map(|x| z().mul(&g, x).unwrap()).collect();
    let emp = empirical(moved.iter());
    assert!(tv_to_measure(&emp, &exact.translate(&g).unwrap()) <= 0.05);
}

/// Conditioned densities of SRW on F₂ for the cylinder "a", from the
/// birth–death chain on (inside the cylinder?, word length).
fn lumped_srw_density(horizon: usize) -> Vec<FxHashMap<(bool, usize), f64>> {
    let rmax = 2 * horizon + 10;
    let mut levels = vec![FxHashMap::default(); horizon + 1];
    for r in 0..=rmax {
        levels[horizon].insert((true, r), if r >= 1 { 1.0 } else { 0.0 });
        levels[horizon].insert((false, r), 0.0);
    }
    for k in (0..horizon).rev() {
        let next = levels[k + 1].clone();
        let v = |s: (bool, usize)| next.get(&s).copied().unwrap_or(0.0);
        for r in 0..rmax {
            let inside = if r >= 2 {
                0.75 * v((true, r + 1)) + 0.25 * v((true, r - 1))
            } else if r == 1 {
                0.75 * v((true, 2)) + 0.25 * v((false, 0))
            } else {
                0.0
            };
            let outside = if r == 0 {
                0.25 * v((true, 1)) + 0.75 * v((false, 1))
            } else {
                0.75 * v((false, r + 1)) + 0.25 * v((false, r - 1))
            };
            levels[k].insert((true, r), inside);
            levels[k].insert((false, r), outside);
        }
    }
    levels
}

#[test]
fn tree_density_matches_lumped_chain_at_horizon_thirty() {
    let env = f2_srw();
    let c = Word::parse("a").unwrap();
    let d = TreeDensity::new(&env, &EnvState::Frozen, 30, c.clone()).unwrap();
    let oracle = lumped_srw_density(30);
    for w in ["e", "a", "A", "b", "aB", "ab", "Ba", "bab", "aaa", "BBA"] {
        let g = Word::parse(w).unwrap();
        let side = g.starts_with(&c);
        for k in [0, 1, 5, 17, 29, 30] {
            let want = oracle[k][&(side, g.len())];
            assert!((d.density(k, &g) - want).abs() < 1e-12, "{w} at {k}");
        }
    }
    let p1 = 0.25 * oracle[1][&(true, 1)] / oracle[0][&(false, 0)];
    assert!(p1 > 0.25);

    let ens = conditional_sampler(&env, &EnvState::Frozen, 30, c, 1, 10_000, 8).unwrap();
    assert_eq!(ens.horizon_hits, 10_000);
    let hits = ens
        .ensemble
        .samples
        .iter()
        .filter(|p| p.terminal().to_string() == "a")
        .count();
    assert!((hits as f64 / 10_000.0 - p1).abs() <= 0.02, "{hits} vs {p1}");
}

#[test]
fn tree_density_matches_exact_cone_recursion() {
    let env = f2_markov();
    let state = env.sample_initial(77);
    for c in ["", "b", "aB", "Bab", "abab"] {
        let c = Word::parse(c).unwrap();
        let horizon = 9;
        let tree = TreeDensity::new(&env, &state, horizon, c.clone()).unwrap();
        let exact = ExactConeDensity::new(&env, &state, horizon, c.clone(), 1_000_000).unwrap();
        for k in 0..=horizon {
            for (g, v) in exact.cone(k) {
                assert!((tree.density(k, g) - v).abs() < 1e-12, "{c} {g} {k}");
            }
        }
    }
}

#[test]
fn tree_density_is_space_time_harmonic() {
    let env = f2_markov();
    let state = env.sample_initial(3);
    let d = TreeDensity::new(&env, &state, 40, Word::parse("aB").unwrap()).unwrap();
    let steps = env.measures_along(&state, 40);
    for w in ["e", "a", "aB", "aBa", "b", "BBB", "aBBa", "abab"] {
        let g = Word::parse(w).unwrap();
        for (k, step) in steps.iter().enumerate() {
            let lhs = d.density(k, &g);
            let rhs: f64 = step
                .iter()
                .map(|(h, p)| p * d.density(k + 1, &g.mul(h.as_word().unwrap())))
                .sum();
            assert!((lhs - rhs).abs() < 1e-12);
            assert!((0.0..=1.0 + 1e-12).contains(&lhs));
        }
    }
}

#[test]
fn depth_zero_conditioning_changes_nothing() {
    let env = f2_srw();
    let cond = conditional_sampler(&env, &EnvState::Frozen, 20, Word::empty(), 3, 10_000, 6).unwrap();
    let plain = sample_paths(&env, 3, 10_000, 6, SamplingMode::Quenched).unwrap();
    let a = empirical(cond.ensemble.terminals());
    let b = empirical(plain.terminals());
    let tv: f64 = a
        .iter()
        .map(|(g, p)| (p - b.get(g).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
        + b.iter()
            .filter(|(g, _)| !a.contains_key(g))
            .map(|(_, p)| p)
            .sum::<f64>();
    assert!(tv <= 0.03);

    let big = conditional_sampler(&env, &EnvState::Frozen, 20, Word::empty(), 3, 100_000, 99).unwrap();
    let exact = env
        .convolution_stream(&EnvState::Frozen, 3, 0.0)
        .unwrap()
        .pop()
        .unwrap();
    assert!(tv_to_measure(&empirical(big.ensemble.terminals()), &exact) <= 0.03);
}

#[test]
fn conditioned_weights_telescope() {
    let env = f2_markov();
    let state = env.sample_initial(12);
    let c = Word::parse("Ab").unwrap();
    let d = TreeDensity::new(&env, &state, 35, c).unwrap();
    let ens = conditional_sampler_with(&env, &state, &d, 12, 500, 4).unwrap();
    assert_eq!(ens.horizon_hits, 500);
    for (p, w) in ens.ensemble.samples.iter().zip(&ens.log_weights) {
        let end = d.density(12, p.terminal().as_word().unwrap());
        let want = (end / ens.origin_density).ln();
        assert!((w - want).abs() <= 1e-9 * want.abs().max(1.0));
    }
}

#[test]
fn conditioned_chain_lands_in_cylinder() {
    let env = f2_markov();
    let state = env.sample_initial(1);
    for c in ["a", "Ba", "bbA", "AbaB"] {
        let word = Word::parse(c).unwrap();
        let h = 8 + 10 * word.len();
        let ens = conditional_sampler(&env, &state, h, word, 8, 300, 2).unwrap();
        assert_eq!(ens.horizon_hits, 300, "{c}");
        assert_eq!(ens.ensemble.manifest.horizon, Some(h));
    }
}

#[test]
fn conditioning_errors() {
    let g = f2();
    let stuck = EnvironmentModel::frozen(fm(&g, &[("a", 1.0)]));
    let err = conditional_sampler(&stuck, &EnvState::Frozen, 20, Word::parse("b").unwrap(), 5, 10, 0).unwrap_err();
    assert!(matches!(err, Error::UnattainableCylinder(_)));
    let err = conditional_sampler(&f2_srw(), &EnvState::Frozen, 15, Word::parse("a").unwrap(), 10, 10, 0).unwrap_err();
    assert!(matches!(err, Error::Precondition(_)));
    let err = conditional_sampler(
        &f2_srw(),
        &EnvState::Frozen,
        90,
        Word::parse("ababa").unwrap(),
        10,
        10,
        0,
    )
    .unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)));
    let zenv = EnvironmentModel::frozen(zm(&[(1, 1.0)]));
    assert!(conditional_sampler(&zenv, &EnvState::Frozen, 20, Word::empty(), 5, 10, 0).is_err());
}

#[test]
fn long_steps_fall_back_to_exact_densities() {
    let g = f2();
    let env = EnvironmentModel::frozen(fm(&g, &[("ab", 0.25), ("BA", 0.25), ("a", 0.25), ("B", 0.25)]));
    let ens = conditional_sampler(&env, &EnvState::Frozen, 11, Word::parse("a").unwrap(), 1, 2000, 3).unwrap();
    assert_eq!(ens.horizon_hits, 2000);
}

#[test]
fn conditioned_first_step_stabilizes_in_horizon() {
    let env = f2_srw();
    let c = Word::parse("a").unwrap();
    let first_step = |h: usize| {
        let d = TreeDensity::new(&env, &EnvState::Frozen, h, c.clone()).unwrap();
        0.25 * d.density(1, &c) / d.density(0, &Word::empty())
    };
    let (p20, p30, p40) = (first_step(20), first_step(30), first_step(40));
    assert!((p30 - p40).abs() <= (p20 - p30).abs());
    assert!((p30 - p40).abs() < 1e-3);
}
