//! Rate of escape, growth of balls and the inequality `h̄ ≤ l·v`.

use serde::{Deserialize, Serialize};

use crate::env::{EnvState, EnvironmentModel};
use crate::error::{Error, Result};
use crate::group::GroupModel;
use crate::measure::DEFAULT_SUPPORT_BUDGET;
use crate::stats::{combined_se, linear_fit, log_corrected_slope, MeanEstimate};
use crate::walk::{map_paths, map_paths_at, PathEnsemble, PathSample, SamplingMode};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EscapeReport {
    pub n: usize,
    pub paths: usize,
    /// `|x_n| / n` over paths.
    pub rate: MeanEstimate,
    /// `(m, mean |x_m| / m)` at `n/4, n/2, 3n/4, n`.
    pub checkpoints: Vec<(usize, MeanEstimate)>,
    /// Some length came from a gauge rather than the exact metric.
    pub approximate: bool,
}

fn checkpoints(n: usize) -> Vec<usize> {
    let mut c: Vec<usize> = [n / 4, n / 2, 3 * n / 4, n].into_iter().filter(|&m| m > 0).collect();
    c.dedup();
    c
}

fn path_rates(group: &GroupModel, p: &PathSample, marks: &[usize]) -> Result<(Vec<f64>, bool)> {
    let mut approx = false;
    let mut out = Vec::with_capacity(marks.len());
    for &m in marks {
        let len = group.word_length(&p.positions[m])?;
        approx |= !len.exact;
        out.push(len.value as f64 / m as f64);
    }
    Ok((out, approx))
}

fn assemble(n: usize, marks: Vec<usize>, rows: Vec<Result<(Vec<f64>, bool)>>) -> Result<EscapeReport> {
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let approximate = rows.iter().any(|r| r.1);
    let checkpoints: Vec<(usize, MeanEstimate)> = marks
        .iter()
        .enumerate()
        .map(|(j, &m)| {
            let vals: Vec<f64> = rows.iter().map(|r| r.0[j]).collect();
            (m, MeanEstimate::from_samples(&vals))
        })
        .collect();
    let rate = checkpoints.last().map(|c| c.1).expect("n is a checkpoint");
    Ok(EscapeReport {
        n,
        paths: rows.len(),
        rate,
        checkpoints,
        approximate,
    })
}

/// Estimates `l` from `count` fresh paths of length `n`.
pub fn rate_of_escape(
    env: &EnvironmentModel,
    n: usize,
    count: usize,
    seed: u64,
    mode: SamplingMode,
) -> Result<EscapeReport> {
    if n == 0 || count == 0 {
        return Err(Error::InvalidArgument("path length and count must be positive".into()));
    }
    let marks = checkpoints(n);
    let group = env.group();
    let rows = map_paths(env, n, count, seed, mode, |_, p| path_rates(group, p, &marks));
    assemble(n, marks, rows)
}

/// As [`rate_of_escape`] for quenched paths at an explicit ω.
pub fn rate_of_escape_at(
    env: &EnvironmentModel,
    state: &EnvState,
    n: usize,
    count: usize,
    seed: u64,
) -> Result<EscapeReport> {
    if n == 0 || count == 0 {
        return Err(Error::InvalidArgument("path length and count must be positive".into()));
    }
    let marks = checkpoints(n);
    let group = env.group();
    let rows = map_paths_at(env, state, n, count, seed, |_, p| path_rates(group, p, &marks));
    assemble(n, marks, rows)
}

pub fn escape_from_ensemble(ensemble: &PathEnsemble) -> Result<EscapeReport> {
    let n = ensemble.length;
    let marks = checkpoints(n);
    let rows = ensemble
        .samples
        .iter()
        .map(|p| path_rates(&ensemble.group, p, &marks))
        .collect();
    assemble(n, marks, rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub t_max: u32,
    /// `(t, |B_t|)`.
    pub counts: Vec<(u32, usize)>,
    /// Slope of `ln |B_t|` over the last three radii.
    pub v_tail: f64,
    /// Coefficient of `t` in a fit `ln |B_t| = v t + k ln t + c` over the
    /// final half of the radii.
    pub v_log_corrected: f64,
    /// Slope of `ln |B_t|` against `ln t` over `t ∈ [4, t_max]`.
    pub degree: Option<f64>,
}

impl GrowthReport {
    /// The headline growth rate: the log-corrected fit, floored at 0.
    pub fn v(&self) -> f64 {
        self.v_log_corrected.max(0.0)
    }

    pub fn is_subexponential(&self) -> bool {
        self.v() < 0.05
    }
}

pub fn growth_rate(group: &GroupModel, t_max: u32) -> Result<GrowthReport> {
    growth_rate_with_budget(group, t_max, DEFAULT_SUPPORT_BUDGET)
}

/// As [`growth_rate`]; a ball larger than `budget` elements fails with the
/// last complete radius in the error.
pub fn growth_rate_with_budget(group: &GroupModel, t_max: u32, budget: usize) -> Result<GrowthReport> {
    if t_max < 4 {
        return Err(Error::InvalidArgument("growth fits need t_max ≥ 4".into()));
    }
    let ball = group.ball_with_budget(t_max, budget)?;
    let counts: Vec<(u32, usize)> = ball.counts.iter().enumerate().map(|(t, c)| (t as u32, *c)).collect();
    let ln = |t: u32| (ball.counts[t as usize] as f64).ln();
    let v_tail = (ln(t_max) - ln(t_max - 2)) / 2.0;
    let lo = (t_max / 2).max(1);
    let ts: Vec<f64> = (lo..=t_max).map(f64::from).collect();
    let ys: Vec<f64> = (lo..=t_max).map(ln).collect();
    let v_log_corrected = log_corrected_slope(&ts, &ys);
    let degree = (t_max >= 6).then(|| {
        let x: Vec<f64> = (4..=t_max).map(|t| f64::from(t).ln()).collect();
        let y: Vec<f64> = (4..=t_max).map(ln).collect();
        linear_fit(&x, &y).0
    });
    Ok(GrowthReport {
        t_max,
        counts,
        v_tail,
        v_log_corrected,
        degree,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityVerdict {
    pub h: f64,
    pub h_std_error: f64,
    pub l: f64,
    pub l_std_error: f64,
    pub v: f64,
    /// `l·v − h`.
    pub slack: f64,
    /// `slack / |l·v|`, NaN when `l·v = 0`.
    pub relative_slack: f64,
    pub combined_std_error: f64,
    /// `h ≤ l·v + 3·combined_std_error`.
    pub pass: bool,
}

pub fn fundamental_inequality(h: MeanEstimate, escape: &EscapeReport, growth: &GrowthReport) -> InequalityVerdict {
    let v = growth.v();
    let l = escape.rate.mean;
    let bound = l * v;
    let se = combined_se(h.std_error, v * escape.rate.std_error);
    let slack = bound - h.mean;
    InequalityVerdict {
        h: h.mean,
        h_std_error: h.std_error,
        l,
        l_std_error: escape.rate.std_error,
        v,
        slack,
        relative_slack: if bound != 0.0 { slack / bound.abs() } else { f64::NAN },
        combined_std_error: se,
        pass: h.mean <= bound + 3.0 * se,
    }
}
