//! The base system driving the step measures: an invertible
//! measure-preserving map `T` on environment realizations together with the
//! assignment `ω ↦ μ^ω`.
//!
//! IID and Markov realizations are two-sided symbol sequences produced lazily
//! from counter-based streams: a forward stream for indices `≥ 0`, a backward
//! stream for indices `< 0` and an anchor draw for the symbol at index 0.
//! `T` shifts the index, so it is a bijection on realizations.

mod spec;

pub use spec::{EnvironmentSpec, MeasureSource};

use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::group::GroupModel;
use crate::measure::{SparseMeasure, DEFAULT_SUPPORT_BUDGET};
use crate::rng::{derive_seed, CounterUniform, STREAM_ENV_ANCHOR, STREAM_ENV_BACKWARD, STREAM_ENV_FORWARD};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvironmentKind {
    /// Symbols i.i.d. with the given law over the measure table.
    Iid { probabilities: Vec<f64> },
    /// Stationary Markov chain with transition matrix `transition` and
    /// stationary vector `stationary`; state `i` uses table measure `i`.
    MarkovBase {
        transition: Vec<Vec<f64>>,
        stationary: Vec<f64>,
    },
    /// Deterministic rotation through the table, uniform starting residue.
    PeriodicCycle,
    /// A single measure: the classical random walk.
    Frozen,
}

impl EnvironmentKind {
    pub fn label(&self) -> &'static str {
        match self {
            EnvironmentKind::Iid { .. } => "iid",
            EnvironmentKind::MarkovBase { .. } => "markov_base",
            EnvironmentKind::PeriodicCycle => "periodic_cycle",
            EnvironmentKind::Frozen => "frozen",
        }
    }
}

/// A point ω of the base space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvState {
    Frozen,
    Periodic {
        residue: usize,
        period: usize,
    },
    /// Realization identified by its seed, read at `index`.
    Sequence {
        seed: u64,
        index: i64,
    },
}

#[derive(Clone, Debug)]
pub struct EnvironmentModel {
    kind: EnvironmentKind,
    group: Arc<GroupModel>,
    table: Vec<SparseMeasure>,
    /// Cumulative rows of the forward kernel (or the IID law in row 0).
    forward_cdf: Vec<Vec<f64>>,
    /// Cumulative rows of the time-reversed kernel `π(b) M(b,a) / π(a)`.
    backward_cdf: Vec<Vec<f64>>,
    /// Cumulative stationary law.
    initial_cdf: Vec<f64>,
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    p.iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect()
}

fn draw(cdf: &[f64], u: f64) -> usize {
    let target = u * cdf.last().copied().unwrap_or(1.0);
    cdf.iter().position(|&c| target < c).unwrap_or(cdf.len() - 1)
}

fn check_law(p: &[f64], what: &str, tol: f64) -> Result<()> {
    if p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::Environment(format!("{what} has a negative or non-finite entry")));
    }
    let s: f64 = crate::stats::compensated_sum(p.iter().copied());
    if (s - 1.0).abs() > tol {
        return Err(Error::Environment(format!("{what} sums to {s}, expected 1")));
    }
    Ok(())
}

fn irreducible(m: &[Vec<f64>]) -> bool {
    let n = m.len();
    (0..n).all(|start| {
        let mut seen = vec![false; n];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if m[i][j] > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    })
}

impl EnvironmentModel {
    pub fn new(kind: EnvironmentKind, table: Vec<SparseMeasure>) -> Result<Self> {
        let Some(first) = table.first() else {
            return Err(Error::Environment("measure table is empty".into()));
        };
        let group = first.model().clone();
        for (i, mu) in table.iter().enumerate() {
            if **mu.model() != *group {
                return Err(Error::ModelMismatch(format!(
                    "table measure {i} lives on {}, expected {}",
                    mu.model().kind(),
                    group.kind()
                )));
            }
        }
        let k = table.len();
        let (forward_cdf, backward_cdf, initial_cdf) = match &kind {
            EnvironmentKind::Frozen => {
                if k != 1 {
                    return Err(Error::Environment(format!(
                        "frozen environment needs 1 measure, got {k}"
                    )));
                }
                (vec![], vec![], vec![1.0])
            }
            EnvironmentKind::PeriodicCycle => (vec![], vec![], vec![]),
            EnvironmentKind::Iid { probabilities } => {
                if probabilities.len() != k {
                    return Err(Error::Environment(format!(
                        "{} probabilities for {k} measures",
                        probabilities.len()
                    )));
                }
                check_law(probabilities, "iid probability vector", 1e-12)?;
                let cdf = cumulative(probabilities);
                (vec![cdf.clone()], vec![cdf.clone()], cdf)
            }
            EnvironmentKind::MarkovBase { transition, stationary } => {
                if transition.len() != k || transition.iter().any(|r| r.len() != k) || stationary.len() != k {
                    return Err(Error::Environment(format!(
                        "transition matrix and stationary vector must be {k}x{k} and {k}"
                    )));
                }
                for (i, row) in transition.iter().enumerate() {
                    check_law(row, &format!("transition row {i}"), 1e-12)?;
                }
                check_law(stationary, "stationary vector", 1e-10)?;
                if !irreducible(transition) {
                    return Err(Error::Environment("transition matrix is not irreducible".into()));
                }
                for j in 0..k {
                    let pm: f64 = (0..k).map(|i| stationary[i] * transition[i][j]).sum();
                    if (pm - stationary[j]).abs() > 1e-10 {
                        return Err(Error::Environment(format!(
                            "stationary vector is not invariant: (πM)_{j} = {pm}, π_{j} = {}",
                            stationary[j]
                        )));
                    }
                }
                let forward = transition.iter().map(|r| cumulative(r)).collect();
                let backward = (0..k)
                    .map(|a| {
                        let row: Vec<f64> = (0..k)
                            .map(|b| stationary[b] * transition[b][a] / stationary[a])
                            .collect();
                        cumulative(&row)
                    })
                    .collect();
                (forward, backward, cumulative(stationary))
            }
        };
        Ok(EnvironmentModel {
            kind,
            group,
            table,
            forward_cdf,
            backward_cdf,
            initial_cdf,
        })
    }

    pub fn frozen(mu: SparseMeasure) -> Self {
        Self::new(EnvironmentKind::Frozen, vec![mu]).expect("one measure")
    }

    pub fn kind(&self) -> &EnvironmentKind {
        &self.kind
    }

    pub fn group(&self) -> &Arc<GroupModel> {
        &self.group
    }

    pub fn table(&self) -> &[SparseMeasure] {
        &self.table
    }

    /// Rotation on finitely many points: ergodic only up to its period.
    pub fn is_periodic_base(&self) -> bool {
        matches!(self.kind, EnvironmentKind::PeriodicCycle) && self.table.len() > 1
    }

    /// Law of the symbol at a fixed index under λ.
    pub fn symbol_law(&self) -> Vec<f64> {
        let k = self.table.len();
        match &self.kind {
            EnvironmentKind::Frozen => vec![1.0],
            EnvironmentKind::PeriodicCycle => vec![1.0 / k as f64; k],
            EnvironmentKind::Iid { probabilities } => probabilities.clone(),
            EnvironmentKind::MarkovBase { stationary, .. } => stationary.clone(),
        }
    }

    /// Draws ω from λ. Deterministic in `seed`.
    pub fn sample_initial(&self, seed: u64) -> EnvState {
        match self.kind {
            EnvironmentKind::Frozen => EnvState::Frozen,
            EnvironmentKind::PeriodicCycle => {
                let period = self.table.len();
                let u = CounterUniform::new(derive_seed(seed, 0x5045_5249), STREAM_ENV_ANCHOR).at(0);
                EnvState::Periodic {
                    residue: ((u * period as f64) as usize).min(period - 1),
                    period,
                }
            }
            _ => EnvState::Sequence { seed, index: 0 },
        }
    }

    /// `Tω`.
    pub fn step(&self, state: &EnvState) -> EnvState {
        shift(state, 1)
    }

    /// `T⁻¹ω`.
    pub fn step_back(&self, state: &EnvState) -> EnvState {
        shift(state, -1)
    }

    /// `Tᵏω` for any integer `k`.
    pub fn advance(&self, state: &EnvState, k: i64) -> EnvState {
        shift(state, k)
    }

    /// Table index of the measure assigned to `state`.
    pub fn symbol(&self, state: &EnvState) -> usize {
        self.symbols(state, 1)[0]
    }

    /// Symbols of `ω, Tω, …, T^{len−1}ω`.
    pub fn symbols(&self, state: &EnvState, len: usize) -> Vec<usize> {
        match *state {
            EnvState::Frozen => vec![0; len],
            EnvState::Periodic { residue, period } => (0..len).map(|i| (residue + i) % period).collect(),
            EnvState::Sequence { seed, index } => self.sequence_symbols(seed, index, len),
        }
    }

    pub fn measure_at(&self, state: &EnvState) -> &SparseMeasure {
        &self.table[self.symbol(state)]
    }

    /// `μ^ω, μ^{Tω}, …, μ^{T^{len−1}ω}`.
    pub fn measures_along(&self, state: &EnvState, len: usize) -> Vec<&SparseMeasure> {
        self.symbols(state, len).into_iter().map(|s| &self.table[s]).collect()
    }

    fn sequence_symbols(&self, seed: u64, start: i64, len: usize) -> Vec<usize> {
        if len == 0 {
            return vec![];
        }
        let end = start + len as i64; // exclusive
        let markov = matches!(self.kind, EnvironmentKind::MarkovBase { .. });
        let x0 = draw(&self.initial_cdf, CounterUniform::new(seed, STREAM_ENV_ANCHOR).at(0));
        let mut out = Vec::with_capacity(len);

        if start < 0 {
            // Backward symbols at -1, -2, ..., start, then reversed.
            let mut back = CounterUniform::new(seed, STREAM_ENV_BACKWARD);
            back.seek(0);
            let mut prev = x0;
            let mut tmp = Vec::with_capacity((-start) as usize);
            for _ in 0..(-start) {
                let u = back.next_unit();
                prev = if markov {
                    draw(&self.backward_cdf[prev], u)
                } else {
                    draw(&self.backward_cdf[0], u)
                };
                tmp.push(prev);
            }
            // tmp[j] is the symbol at index -(j+1).
            let keep_from = (-end.min(0)) as usize;
            for j in (keep_from..tmp.len()).rev() {
                out.push(tmp[j]);
            }
        }
        if end > 0 {
            let mut fwd = CounterUniform::new(seed, STREAM_ENV_FORWARD);
            fwd.seek(0);
            let mut cur = x0;
            for i in 0..end {
                if i > 0 {
                    let u = fwd.next_unit();
                    cur = if markov {
                        draw(&self.forward_cdf[cur], u)
                    } else {
                        draw(&self.forward_cdf[0], u)
                    };
                }
                if i >= start {
                    out.push(cur);
                }
            }
        }
        debug_assert_eq!(out.len(), len);
        out
    }

    /// The exact stream `μ^ω_{0,0}, μ^ω_{0,1}, …` as a lazy iterator.
    pub fn stream(&self, state: &EnvState, prune_eps: f64) -> ConvolutionStream<'_> {
        ConvolutionStream {
            env: self,
            state: *state,
            current: None,
            index: 0,
            prune_eps,
            budget: DEFAULT_SUPPORT_BUDGET,
        }
    }

    /// Collects the first `n_max` terms `μ^ω_{0,0}, …, μ^ω_{0,n_max−1}`.
    pub fn convolution_stream(&self, state: &EnvState, n_max: usize, prune_eps: f64) -> Result<Vec<SparseMeasure>> {
        if n_max == 0 {
            return Err(Error::InvalidArgument("stream length must be at least 1".into()));
        }
        self.stream(state, prune_eps).take(n_max).collect()
    }
}

fn shift(state: &EnvState, k: i64) -> EnvState {
    match *state {
        EnvState::Frozen => EnvState::Frozen,
        EnvState::Periodic { residue, period } => EnvState::Periodic {
            residue: (residue as i64 + k).rem_euclid(period as i64) as usize,
            period,
        },
        EnvState::Sequence { seed, index } => EnvState::Sequence { seed, index: index + k },
    }
}

/// Incremental convolution along one orbit: term `n` is
/// `μ^ω μ^{Tω} ⋯ μ^{Tⁿω}`, optionally pruned after each step.
pub struct ConvolutionStream<'a> {
    env: &'a EnvironmentModel,
    state: EnvState,
    current: Option<SparseMeasure>,
    index: usize,
    prune_eps: f64,
    budget: usize,
}

impl ConvolutionStream<'_> {
    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    /// Index of the next term to be produced.
    pub fn position(&self) -> usize {
        self.index
    }
}

impl Iterator for ConvolutionStream<'_> {
    type Item = Result<SparseMeasure>;

    fn next(&mut self) -> Option<Self::Item> {
        let step = self.env.measure_at(&self.state);
        let next = match &self.current {
            None => Ok(step.clone()),
            Some(prev) => prev.convolve_with_budget(step, self.budget).map_err(|e| match e {
                Error::Budget { limit, context, .. } => Error::Budget {
                    limit,
                    reached: self.index,
                    context: format!("convolution stream ({context})"),
                },
                other => other,
            }),
        };
        let next = next.and_then(|m| m.prune(self.prune_eps));
        match next {
            Ok(m) => {
                self.current = Some(m.clone());
                self.state = self.env.step(&self.state);
                self.index += 1;
                Some(Ok(m))
            }
            Err(e) => Some(Err(e)),
        }
    }
}

#[cfg(test)]
mod tests;
