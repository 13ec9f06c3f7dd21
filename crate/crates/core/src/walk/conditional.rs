//! Finite-horizon conditioned chains on free groups.
//!
//! For a cylinder `C` of ends (reduced words with a given prefix) and a
//! horizon `N`, the surrogate density `ε̂_{k,g}` is the probability that the
//! walk started at `g` at time `k` sits in `C` at time `N`. The conditioned
//! chain moves from `g` to `gh` with probability `μ_k(h) ε̂_{k+1,gh} / ε̂_{k,g}`.

use dashmap::DashMap;
use rand::RngCore;
use rayon::prelude::*;
use rustc_hash::FxHashMap;
use std::sync::Arc;

use super::{EnsembleManifest, PathEnsemble, PathSample, SamplingMode, STREAM_WALK};
use crate::env::{EnvState, EnvironmentModel};
use crate::error::{Error, Result};
use crate::group::{inverse_letter, GroupElement, GroupKind, Word};
use crate::rng::{derive_seed, stream_rng, unit_f64, RNG_ALGORITHM};

/// Deepest cylinder accepted by the sampler.
pub const MAX_CYLINDER_DEPTH: usize = 4;

/// `ε̂_{k,g}` for `0 ≤ k ≤ N`.
pub trait CylinderDensity: Sync {
    fn horizon(&self) -> usize;
    fn cylinder(&self) -> &Word;
    fn density(&self, k: usize, g: &Word) -> f64;
}

fn in_cylinder(g: &Word, c: &Word) -> bool {
    g.starts_with(c)
}

fn free_rank(env: &EnvironmentModel) -> Result<usize> {
    match env.group().kind() {
        GroupKind::FreeGroup { rank } => Ok(rank),
        other => Err(Error::Precondition(format!(
            "conditioned chains need a free group, got {other}"
        ))),
    }
}

fn check_cylinder(c: &Word, rank: usize) -> Result<()> {
    if !c.is_reduced() || c.max_letter().is_some_and(|l| usize::from(l) >= 2 * rank) {
        return Err(Error::InvalidArgument(format!(
            "{c} is not a reduced word of FreeGroup({rank})"
        )));
    }
    if c.len() > MAX_CYLINDER_DEPTH {
        return Err(Error::InvalidArgument(format!(
            "cylinder depth {} exceeds {MAX_CYLINDER_DEPTH}",
            c.len()
        )));
    }
    Ok(())
}

/// Densities from first-passage laws on the tree. Needs every step measure
/// to be supported on the identity and single letters.
pub struct TreeDensity {
    horizon: usize,
    cylinder: Word,
    /// `passage[s][t][t']`: probability that a walk at `v` at time `t` first
    /// reaches `v·s` at time `t'`.
    passage: Vec<Vec<Vec<f64>>>,
    /// `survival[s][t] = 1 − Σ_{t'} passage[s][t][t']`.
    survival: Vec<Vec<f64>>,
    cache: DashMap<Word, Arc<Vec<f64>>>,
}

impl TreeDensity {
    pub fn new(env: &EnvironmentModel, state: &EnvState, horizon: usize, cylinder: Word) -> Result<Self> {
        let rank = free_rank(env)?;
        check_cylinder(&cylinder, rank)?;
        let letters = 2 * rank;
        let n = horizon;
        let mut hold = vec![0.0; n];
        let mut step = vec![vec![0.0; letters]; n];
        for (t, mu) in env.measures_along(state, n).into_iter().enumerate() {
            let scale = 1.0 / mu.total_mass();
            for (g, p) in mu.iter() {
                let w = g.as_word().expect("free group element");
                match w.letters() {
                    [] => hold[t] = p * scale,
                    [l] => step[t][usize::from(*l)] = p * scale,
                    _ => {
                        return Err(Error::Precondition(format!(
                            "tree densities need nearest-neighbour steps; {w} has length {}",
                            w.len()
                        )))
                    }
                }
            }
        }

        let mut passage = vec![vec![vec![0.0; n + 1]; n + 1]; letters];
        for t in (0..n).rev() {
            for s in 0..letters {
                let mut row = vec![0.0; n + 1];
                row[t + 1] += step[t][s];
                for tp in t + 2..=n {
                    row[tp] += hold[t] * passage[s][t + 1][tp];
                }
                for u in (0..letters).filter(|&u| u != s) {
                    if step[t][u] == 0.0 {
                        continue;
                    }
                    let back = &passage[usize::from(inverse_letter(u as u8))][t + 1];
                    for tm in t + 2..n {
                        if back[tm] == 0.0 {
                            continue;
                        }
                        let w = step[t][u] * back[tm];
                        for tp in tm + 1..=n {
                            row[tp] += w * passage[s][tm][tp];
                        }
                    }
                }
                passage[s][t] = row;
            }
        }
        let survival = passage
            .iter()
            .map(|rows| rows.iter().map(|r| (1.0 - r.iter().sum::<f64>()).max(0.0)).collect())
            .collect();
        let density = TreeDensity {
            horizon,
            cylinder,
            passage,
            survival,
            cache: DashMap::new(),
        };
        density.seed_cylinder_pair();
        Ok(density)
    }

    /// Solves the coupled vectors at the cylinder root `c` and its parent.
    fn seed_cylinder_pair(&self) {
        let n = self.horizon;
        let c = &self.cylinder;
        let Some(last) = c.last() else {
            self.cache.insert(Word::empty(), Arc::new(vec![1.0; n + 1]));
            return;
        };
        let down = usize::from(last);
        let up = usize::from(inverse_letter(last));
        let mut vc = vec![0.0; n + 1];
        let mut vp = vec![0.0; n + 1];
        vc[n] = 1.0;
        for t in (0..n).rev() {
            vp[t] = (t + 1..=n).map(|tp| self.passage[down][t][tp] * vc[tp]).sum();
            vc[t] = self.survival[up][t] + (t + 1..=n).map(|tp| self.passage[up][t][tp] * vp[tp]).sum::<f64>();
        }
        self.cache.insert(c.clone(), Arc::new(vc));
        self.cache.insert(c.prefix(c.len() - 1), Arc::new(vp));
    }

    /// `t ↦ ε̂_{t,g}` for `t = 0..=N`.
    pub fn vector(&self, g: &Word) -> Arc<Vec<f64>> {
        if let Some(v) = self.cache.get(g) {
            return v.clone();
        }
        // Every vertex reduces to a neighbour one step closer to the
        // cylinder root; the chain ends at a cached vertex.
        let c = &self.cylinder;
        let (letter, next, inside) = if in_cylinder(g, c) {
            let last = g.last().expect("vertices other than the root are non-empty");
            (inverse_letter(last), g.parent(), true)
        } else if g.common_prefix_len(c) < g.len() {
            let last = g.last().expect("non-empty");
            (inverse_letter(last), g.parent(), false)
        } else {
            let l = c.letters()[g.len()];
            (l, g.mul(&Word::letter(l)), false)
        };
        let target = self.vector(&next);
        let n = self.horizon;
        let s = usize::from(letter);
        let mut v = vec![0.0; n + 1];
        v[n] = if inside { 1.0 } else { 0.0 };
        for (t, slot) in v.iter_mut().enumerate().take(n) {
            let base = if inside { self.survival[s][t] } else { 0.0 };
            *slot = base + (t + 1..=n).map(|tp| self.passage[s][t][tp] * target[tp]).sum::<f64>();
        }
        let v = Arc::new(v);
        self.cache.insert(g.clone(), v.clone());
        v
    }

    pub fn cached_vertices(&self) -> usize {
        self.cache.len()
    }
}

impl CylinderDensity for TreeDensity {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn cylinder(&self) -> &Word {
        &self.cylinder
    }

    fn density(&self, k: usize, g: &Word) -> f64 {
        self.vector(g)[k]
    }
}

/// Densities by backward recursion over the exact convolution stream,
/// restricted to the attainable space-time cone. Exponential in `N`; used as
/// the reference for [`TreeDensity`] and for steps that are not
/// nearest-neighbour.
pub struct ExactConeDensity {
    horizon: usize,
    cylinder: Word,
    levels: Vec<FxHashMap<Word, f64>>,
}

impl ExactConeDensity {
    pub fn new(
        env: &EnvironmentModel,
        state: &EnvState,
        horizon: usize,
        cylinder: Word,
        budget: usize,
    ) -> Result<Self> {
        let rank = free_rank(env)?;
        check_cylinder(&cylinder, rank)?;
        let steps = env.measures_along(state, horizon);
        // Attainable positions at each time.
        let mut cone: Vec<Vec<Word>> = vec![vec![Word::empty()]];
        for (k, mu) in steps.iter().enumerate() {
            let mut next: Vec<Word> = cone[k]
                .iter()
                .flat_map(|g| mu.support().map(move |h| g.mul(h.as_word().expect("free word"))))
                .collect();
            next.sort();
            next.dedup();
            if next.len() > budget {
                return Err(Error::Budget {
                    limit: budget,
                    reached: k,
                    context: "attainability cone".into(),
                });
            }
            cone.push(next);
        }
        let mut levels: Vec<FxHashMap<Word, f64>> = vec![FxHashMap::default(); horizon + 1];
        levels[horizon] = cone[horizon]
            .iter()
            .map(|g| (g.clone(), if in_cylinder(g, &cylinder) { 1.0 } else { 0.0 }))
            .collect();
        for k in (0..horizon).rev() {
            let mu = steps[k];
            let scale = 1.0 / mu.total_mass();
            let (lo, hi) = levels.split_at_mut(k + 1);
            let after = &hi[0];
            lo[k] = cone[k]
                .par_iter()
                .map(|g| {
                    let v: f64 = mu
                        .iter()
                        .map(|(h, p)| p * scale * after[&(g.mul(h.as_word().expect("free word")))])
                        .sum();
                    (g.clone(), v)
                })
                .collect();
        }
        Ok(ExactConeDensity {
            horizon,
            cylinder,
            levels,
        })
    }
}

impl ExactConeDensity {
    /// Attainable positions at time `k` with their densities.
    pub fn cone(&self, k: usize) -> impl Iterator<Item = (&Word, f64)> {
        self.levels[k].iter().map(|(g, v)| (g, *v))
    }
}

impl CylinderDensity for ExactConeDensity {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn cylinder(&self) -> &Word {
        &self.cylinder
    }

    fn density(&self, k: usize, g: &Word) -> f64 {
        self.levels[k].get(g).copied().unwrap_or(0.0)
    }
}

/// A conditioned ensemble with per-path diagnostics.
#[derive(Clone, Debug)]
pub struct ConditionalEnsemble {
    pub ensemble: PathEnsemble,
    /// `ε̂_{0,e}`, the surrogate probability of the cylinder.
    pub origin_density: f64,
    /// Per path, `Σ_{k<n} ln(P̂(x_k → x_{k+1}) / μ_k(h_k))`.
    pub log_weights: Vec<f64>,
    /// Paths whose position at the horizon lies in the cylinder.
    pub horizon_hits: usize,
}

/// Samples `count` paths of length `n` from the chain conditioned on
/// `x_N ∈ C`, with densities supplied by `density`.
pub fn conditional_sampler_with(
    env: &EnvironmentModel,
    state: &EnvState,
    density: &dyn CylinderDensity,
    n: usize,
    count: usize,
    seed: u64,
) -> Result<ConditionalEnsemble> {
    free_rank(env)?;
    let horizon = density.horizon();
    let c = density.cylinder();
    if n == 0 || count == 0 {
        return Err(Error::InvalidArgument("path length and count must be positive".into()));
    }
    if horizon < n + 10 * c.len() {
        return Err(Error::Precondition(format!(
            "horizon {horizon} is below n + 10·depth = {}",
            n + 10 * c.len()
        )));
    }
    let origin = density.density(0, &Word::empty());
    if origin <= 0.0 {
        return Err(Error::UnattainableCylinder(c.to_string()));
    }
    let symbols = env.symbols(state, horizon);
    let env_seed = match state {
        EnvState::Sequence { seed, .. } => *seed,
        _ => 0,
    };
    let group = env.group();
    let results: Vec<(PathSample, f64, bool)> = (0..count)
        .into_par_iter()
        .map(|i| {
            let walk_seed = derive_seed(seed, i as u64);
            let mut rng = stream_rng(walk_seed, STREAM_WALK);
            let mut x = Word::empty();
            let mut increments = Vec::with_capacity(n);
            let mut log_weight = 0.0;
            let mut candidates: Vec<(&GroupElement, f64, f64)> = Vec::new();
            for (k, &sym) in symbols.iter().enumerate() {
                let mu = &env.table()[sym];
                candidates.clear();
                let mut total = 0.0;
                for (h, p) in mu.iter() {
                    let next = x.mul(h.as_word().expect("free word"));
                    let w = p * density.density(k + 1, &next);
                    total += w;
                    candidates.push((h, w, p));
                }
                let mut target = unit_f64(rng.next_u64()) * total;
                let mut pick = candidates.len() - 1;
                for (j, (_, w, _)) in candidates.iter().enumerate() {
                    if target < *w {
                        pick = j;
                        break;
                    }
                    target -= w;
                }
                let (h, w, p) = candidates[pick];
                if k < n {
                    log_weight += (w / total / p).ln();
                    increments.push(h.clone());
                }
                x.mul_assign(h.as_word().expect("free word"));
            }
            let hit = in_cylinder(&x, c);
            let path =
                PathSample::from_increments(group, env_seed, walk_seed, *state, increments, symbols[..n].to_vec());
            (path, log_weight, hit)
        })
        .collect();

    let horizon_hits = results.iter().filter(|r| r.2).count();
    let mut samples = Vec::with_capacity(count);
    let mut log_weights = Vec::with_capacity(count);
    for (p, w, _) in results {
        samples.push(p);
        log_weights.push(w);
    }
    Ok(ConditionalEnsemble {
        ensemble: PathEnsemble {
            group: group.clone(),
            length: n,
            samples,
            manifest: EnsembleManifest {
                seed,
                rng_algorithm: RNG_ALGORITHM.to_string(),
                workers: rayon::current_num_threads(),
                mode: SamplingMode::Quenched,
                length: n,
                count,
                env_state: Some(*state),
                horizon: Some(horizon),
                cylinder: Some(c.to_string()),
            },
        },
        origin_density: origin,
        log_weights,
        horizon_hits,
    })
}

/// Conditioned sampler with tree densities, falling back to the exact cone
/// recursion when steps are not nearest-neighbour.
pub fn conditional_sampler(
    env: &EnvironmentModel,
    state: &EnvState,
    horizon: usize,
    cylinder: Word,
    n: usize,
    count: usize,
    seed: u64,
) -> Result<ConditionalEnsemble> {
    match TreeDensity::new(env, state, horizon, cylinder.clone()) {
        Ok(d) => conditional_sampler_with(env, state, &d, n, count, seed),
        Err(Error::Precondition(_)) if free_rank(env).is_ok() => {
            let d = ExactConeDensity::new(env, state, horizon, cylinder, crate::measure::DEFAULT_SUPPORT_BUDGET)?;
            conditional_sampler_with(env, state, &d, n, count, seed)
        }
        Err(e) => Err(e),
    }
}
