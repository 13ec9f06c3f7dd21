//! Trajectories of the walk `x_{k+1} = x_k h_k`, `h_k ~ μ^{T^k ω}`, under a
//! fixed environment (quenched) or with a fresh environment per path
//! (annealed), plus the skew transform and conditioned chains.

mod conditional;

pub use conditional::{
    conditional_sampler, conditional_sampler_with, ConditionalEnsemble, CylinderDensity, ExactConeDensity, TreeDensity,
    MAX_CYLINDER_DEPTH,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::sync::Arc;

use crate::env::{EnvState, EnvironmentModel};
use crate::error::{Error, Result};
use crate::group::{GroupElement, GroupModel};
use crate::rng::{derive_seed, stream_rng, unit_f64, RNG_ALGORITHM};
use rand::RngCore;

const LABEL_ENV: u64 = 0x0045_4e56;
const STREAM_WALK: u64 = 0x5741_4c4b;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// One ω shared by every path.
    Quenched,
    /// A fresh ω per path.
    Annealed,
}

/// One trajectory: `positions[0] = e`, `positions[k+1] = positions[k] · increments[k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PathSample {
    pub env_seed: u64,
    pub walk_seed: u64,
    pub env_state: EnvState,
    pub increments: Vec<GroupElement>,
    pub positions: Vec<GroupElement>,
    pub env_symbols: Vec<usize>,
}

impl PathSample {
    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    pub fn terminal(&self) -> &GroupElement {
        self.positions.last().expect("positions contain the origin")
    }

    /// Rebuilds positions from increments.
    pub fn from_increments(
        group: &GroupModel,
        env_seed: u64,
        walk_seed: u64,
        env_state: EnvState,
        increments: Vec<GroupElement>,
        env_symbols: Vec<usize>,
    ) -> Self {
        let mut positions = Vec::with_capacity(increments.len() + 1);
        let mut x = group.identity();
        positions.push(x.clone());
        for h in &increments {
            group.mul_assign(&mut x, h);
            positions.push(x.clone());
        }
        PathSample {
            env_seed,
            walk_seed,
            env_state,
            increments,
            positions,
            env_symbols,
        }
    }

    /// The path seen from `T̄(ω, h) = (Tω, Sh)`: first increment dropped and
    /// positions re-based at the new origin, `x'_k = x_1⁻¹ x_{k+1}`.
    pub fn skew(&self, env: &EnvironmentModel) -> Result<PathSample> {
        let (state, increments) = skew_transform(env, &self.env_state, &self.increments)?;
        Ok(PathSample::from_increments(
            env.group(),
            self.env_seed,
            self.walk_seed,
            state,
            increments,
            self.env_symbols[1..].to_vec(),
        ))
    }
}

/// `T̄(ω, h_0 h_1 …) = (Tω, h_1 h_2 …)`.
pub fn skew_transform(
    env: &EnvironmentModel,
    state: &EnvState,
    increments: &[GroupElement],
) -> Result<(EnvState, Vec<GroupElement>)> {
    if increments.is_empty() {
        return Err(Error::InvalidArgument(
            "skew transform needs at least one increment".into(),
        ));
    }
    Ok((env.step(state), increments[1..].to_vec()))
}

/// Provenance of an ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub seed: u64,
    pub rng_algorithm: String,
    pub workers: usize,
    pub mode: SamplingMode,
    pub length: usize,
    pub count: usize,
    /// The shared ω in quenched mode.
    pub env_state: Option<EnvState>,
    /// Conditioning horizon and cylinder, for conditioned ensembles.
    pub horizon: Option<usize>,
    pub cylinder: Option<String>,
}

#[derive(Clone, Debug)]
pub struct PathEnsemble {
    pub group: Arc<GroupModel>,
    pub length: usize,
    pub samples: Vec<PathSample>,
    pub manifest: EnsembleManifest,
}

impl PathEnsemble {
    pub fn mode(&self) -> SamplingMode {
        self.manifest.mode
    }

    pub fn terminals(&self) -> impl Iterator<Item = &GroupElement> {
        self.samples.iter().map(|p| p.terminal())
    }

    /// One row per step: `path_id, step, element, env_symbol`, with the
    /// increment `h_step` in the element column.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_paths_csv(self.samples.iter().enumerate(), w)
    }
}

/// Writes `(path_id, path)` pairs in the ensemble CSV layout.
pub fn write_paths_csv<'a, I, W>(paths: I, w: W) -> Result<()>
where
    I: IntoIterator<Item = (usize, &'a PathSample)>,
    W: Write,
{
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["path_id", "step", "element", "env_symbol"])?;
    for (id, p) in paths {
        for (k, h) in p.increments.iter().enumerate() {
            let sym = p.env_symbols.get(k).map_or(String::new(), |s| s.to_string());
            out.write_record([id.to_string(), k.to_string(), h.to_string(), sym])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Seeds of path `index` in an ensemble with master `seed`.
pub fn path_seeds(seed: u64, index: usize, mode: SamplingMode) -> (u64, u64) {
    let walk_seed = derive_seed(seed, index as u64);
    let env_seed = match mode {
        SamplingMode::Quenched => derive_seed(seed, LABEL_ENV),
        SamplingMode::Annealed => derive_seed(walk_seed, LABEL_ENV),
    };
    (env_seed, walk_seed)
}

/// The ω used by a quenched ensemble with master `seed`.
pub fn quenched_state(env: &EnvironmentModel, seed: u64) -> EnvState {
    env.sample_initial(path_seeds(seed, 0, SamplingMode::Quenched).0)
}

/// Samples one path of length `n` from `state`.
pub fn sample_path(env: &EnvironmentModel, state: &EnvState, n: usize, env_seed: u64, walk_seed: u64) -> PathSample {
    let symbols = env.symbols(state, n);
    sample_with_symbols(env, state, &symbols, env_seed, walk_seed)
}

fn sample_with_symbols(
    env: &EnvironmentModel,
    state: &EnvState,
    symbols: &[usize],
    env_seed: u64,
    walk_seed: u64,
) -> PathSample {
    let group = env.group();
    let mut rng = stream_rng(walk_seed, STREAM_WALK);
    let mut increments = Vec::with_capacity(symbols.len());
    let mut positions = Vec::with_capacity(symbols.len() + 1);
    let mut x = group.identity();
    positions.push(x.clone());
    for &s in symbols {
        let h = env.table()[s].sample_with(unit_f64(rng.next_u64())).clone();
        group.mul_assign(&mut x, &h);
        increments.push(h);
        positions.push(x.clone());
    }
    PathSample {
        env_seed,
        walk_seed,
        env_state: *state,
        increments,
        positions,
        env_symbols: symbols.to_vec(),
    }
}

/// Applies `f` to each sampled path without keeping the ensemble, in path
/// index order. Use for long paths where a full ensemble would not fit.
pub fn map_paths<T, F>(env: &EnvironmentModel, n: usize, count: usize, seed: u64, mode: SamplingMode, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &PathSample) -> T + Sync,
{
    let shared = match mode {
        SamplingMode::Quenched => {
            let state = quenched_state(env, seed);
            Some((state, env.symbols(&state, n)))
        }
        SamplingMode::Annealed => None,
    };
    (0..count)
        .into_par_iter()
        .map(|i| {
            let (env_seed, walk_seed) = path_seeds(seed, i, mode);
            let path = match &shared {
                Some((state, symbols)) => sample_with_symbols(env, state, symbols, env_seed, walk_seed),
                None => sample_path(env, &env.sample_initial(env_seed), n, env_seed, walk_seed),
            };
            f(i, &path)
        })
        .collect()
}

/// Like [`map_paths`] for a quenched ensemble at an explicit ω.
pub fn map_paths_at<T, F>(env: &EnvironmentModel, state: &EnvState, n: usize, count: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &PathSample) -> T + Sync,
{
    let symbols = env.symbols(state, n);
    let env_seed = match state {
        EnvState::Sequence { seed, .. } => *seed,
        _ => 0,
    };
    (0..count)
        .into_par_iter()
        .map(|i| {
            let walk_seed = derive_seed(seed, i as u64);
            f(i, &sample_with_symbols(env, state, &symbols, env_seed, walk_seed))
        })
        .collect()
}

fn manifest(seed: u64, mode: SamplingMode, n: usize, count: usize, env_state: Option<EnvState>) -> EnsembleManifest {
    EnsembleManifest {
        seed,
        rng_algorithm: RNG_ALGORITHM.to_string(),
        workers: rayon::current_num_threads(),
        mode,
        length: n,
        count,
        env_state,
        horizon: None,
        cylinder: None,
    }
}

fn check_sizes(n: usize, count: usize) -> Result<()> {
    if n == 0 || count == 0 {
        return Err(Error::InvalidArgument("path length and count must be positive".into()));
    }
    Ok(())
}

/// Samples `count` i.i.d. paths of length `n`.
pub fn sample_paths(
    env: &EnvironmentModel,
    n: usize,
    count: usize,
    seed: u64,
    mode: SamplingMode,
) -> Result<PathEnsemble> {
    check_sizes(n, count)?;
    let samples = map_paths(env, n, count, seed, mode, |_, p| p.clone());
    let state = (mode == SamplingMode::Quenched).then(|| quenched_state(env, seed));
    Ok(PathEnsemble {
        group: env.group().clone(),
        length: n,
        samples,
        manifest: manifest(seed, mode, n, count, state),
    })
}

/// Quenched ensemble at an explicit ω.
pub fn sample_paths_at(
    env: &EnvironmentModel,
    state: &EnvState,
    n: usize,
    count: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    check_sizes(n, count)?;
    let samples = map_paths_at(env, state, n, count, seed, |_, p| p.clone());
    Ok(PathEnsemble {
        group: env.group().clone(),
        length: n,
        samples,
        manifest: manifest(seed, SamplingMode::Quenched, n, count, Some(*state)),
    })
}

#[cfg(test)]
mod tests;
