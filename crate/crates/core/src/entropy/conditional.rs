//! Conditional entropies `−(1/n) ln μ^C_{0,n−1}(x_n)` for walks conditioned
//! to end in a cylinder of the free-group boundary.

use serde::{Deserialize, Serialize};

use crate::env::{EnvState, EnvironmentModel};
use crate::error::{Error, Result};
use crate::group::{inverse_letter, GroupKind, Letter, Word};
use crate::measure::{SparseMeasure, DEFAULT_SUPPORT_BUDGET};
use crate::rng::derive_seed;
use crate::stats::MeanEstimate;
use crate::walk::{conditional_sampler_with, CylinderDensity, ExactConeDensity, TreeDensity};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderEntropy {
    pub prefix: String,
    /// `ε̂_{0,e}` for this cylinder.
    pub weight: f64,
    pub estimate: MeanEstimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalEntropyReport {
    pub depth: usize,
    pub n: usize,
    pub horizon: usize,
    pub cylinders: Vec<CylinderEntropy>,
    /// Cylinder means weighted by their normalized `ε̂_{0,e}`.
    pub weighted_mean: f64,
    pub weighted_std_error: f64,
}

/// Reduced words of length `depth` over `rank` generators, in letter order.
pub fn reduced_words(rank: usize, depth: usize) -> Vec<Word> {
    let mut words = vec![Word::empty()];
    for _ in 0..depth {
        words = words
            .iter()
            .flat_map(|w| {
                (0..2 * rank as Letter)
                    .filter(move |&l| w.last() != Some(inverse_letter(l)))
                    .map(move |l| w.mul(&Word::letter(l)))
            })
            .collect();
    }
    words
}

fn density_for(env: &EnvironmentModel, state: &EnvState, horizon: usize, c: Word) -> Result<Box<dyn CylinderDensity>> {
    match TreeDensity::new(env, state, horizon, c.clone()) {
        Ok(d) => Ok(Box::new(d)),
        Err(Error::Precondition(_)) => Ok(Box::new(ExactConeDensity::new(
            env,
            state,
            horizon,
            c,
            DEFAULT_SUPPORT_BUDGET,
        )?)),
        Err(e) => Err(e),
    }
}

/// Conditional entropy at depth `depth` from `count` conditioned paths per
/// cylinder. `terms[m − 1]` must be `μ_{0,m−1}` of the orbit of `state`.
#[allow(clippy::too_many_arguments)]
pub fn conditional_entropy(
    env: &EnvironmentModel,
    state: &EnvState,
    terms: &[SparseMeasure],
    depth: usize,
    n: usize,
    horizon: usize,
    count: usize,
    seed: u64,
) -> Result<ConditionalEntropyReport> {
    let rank = match env.group().kind() {
        GroupKind::FreeGroup { rank } => rank,
        other => {
            return Err(Error::Precondition(format!(
                "conditional entropy needs a free group, got {other}"
            )))
        }
    };
    if n == 0 || n > terms.len() {
        return Err(Error::InvalidArgument(format!(
            "n = {n} outside a stream of {} terms",
            terms.len()
        )));
    }
    let mut cylinders = Vec::new();
    for (ci, c) in reduced_words(rank, depth).into_iter().enumerate() {
        let density = density_for(env, state, horizon, c.clone())?;
        let origin = density.density(0, &Word::empty());
        if origin <= 0.0 {
            continue;
        }
        let cond = conditional_sampler_with(env, state, density.as_ref(), n, count, derive_seed(seed, ci as u64))?;
        let values: Vec<f64> = cond
            .ensemble
            .samples
            .iter()
            .map(|p| {
                let x = p.terminal();
                let word = x.as_word().expect("free word");
                let p_n = terms[n - 1].mass(x);
                let ratio = density.density(n, word) / origin;
                -(p_n * ratio).ln() / n as f64
            })
            .collect();
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Integrity(format!(
                "non-finite conditional log-likelihood {v} in cylinder {c}"
            )));
        }
        cylinders.push(CylinderEntropy {
            prefix: c.to_string(),
            weight: origin,
            estimate: MeanEstimate::from_samples(&values),
        });
    }
    let total: f64 = cylinders.iter().map(|c| c.weight).sum();
    if total <= 0.0 {
        return Err(Error::UnattainableCylinder(format!("every cylinder of depth {depth}")));
    }
    let weighted_mean = cylinders.iter().map(|c| c.weight / total * c.estimate.mean).sum();
    let weighted_std_error = cylinders
        .iter()
        .map(|c| (c.weight / total * c.estimate.std_error).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(ConditionalEntropyReport {
        depth,
        n,
        horizon,
        cylinders,
        weighted_mean,
        weighted_std_error,
    })
}
