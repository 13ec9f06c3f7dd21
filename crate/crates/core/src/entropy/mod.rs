//! Entropy-side functionals of an environment orbit: entropy profiles, the
//! limits `h_k`, asymptotic entropy by profile slope and by
//! Shannon–McMillan–Breiman averages, tail analysis, rate of escape, growth,
//! the fundamental inequality and conditional entropies over end cylinders.

mod conditional;
mod escape;
mod tail;

pub use conditional::{conditional_entropy, reduced_words, ConditionalEntropyReport, CylinderEntropy};
pub use escape::{
    escape_from_ensemble, fundamental_inequality, growth_rate, growth_rate_with_budget, rate_of_escape,
    rate_of_escape_at, EscapeReport, GrowthReport, InequalityVerdict,
};
pub use tail::{
    default_test_elements, detect_period, g_generators, tail_analysis, DeltaVerdict, PeriodReport, TailReport,
    TailThresholds,
};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;

use crate::env::{EnvState, EnvironmentModel};
use crate::error::{Error, Result};
use crate::measure::SparseMeasure;
use crate::stats::{log_corrected_slope_weights, median, MeanEstimate};
use crate::walk::{map_paths_at, PathEnsemble, PathSample};

/// Largest dropped mass per stream term accepted by the entropy estimators.
pub const MAX_PROFILE_DROPPED_MASS: f64 = 1e-6;

/// Largest fraction of paths an SMB estimate may exclude.
pub const MAX_SMB_EXCLUSION: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    /// Number of steps: the entry is `H(μ_{0,n−1})`.
    pub n: usize,
    pub entropy: f64,
    pub dropped_mass: f64,
}

/// `H(μ_{0,n}) − H(μ_{k,n})` along `n`, with its last value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HkEstimate {
    pub k: usize,
    /// `(n, H(μ_{0,n}) − H(μ_{k,n}))` for `k ≤ n < n_max`.
    pub sequence: Vec<(usize, f64)>,
    pub value: f64,
    pub n_used: usize,
    /// `max − min` over the final quarter of the sequence.
    pub tail_oscillation: f64,
}

/// Asymptotic entropy from the profile alone.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeEstimate {
    /// Median of `H/n` over the final third.
    pub cesaro: f64,
    /// Mean first difference over the final third.
    pub first_difference: f64,
    /// Coefficient of `n` in a fit `H = h n + k ln n + c` over the final half.
    pub log_corrected: f64,
    /// Steps covered by the final third, inclusive.
    pub window: (usize, usize),
    /// Steps covered by the log-corrected fit, inclusive.
    pub fit_window: (usize, usize),
}

impl SlopeEstimate {
    /// The headline estimate: the log-corrected fit.
    pub fn value(&self) -> f64 {
        self.log_corrected
    }
}

/// Monte Carlo estimates of `−(1/n) ln μ_{0,n−1}(x_n)` over quenched paths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmbEstimate {
    /// Plain average at the terminal `n`.
    pub raw: MeanEstimate,
    /// Per-path log-corrected slope of `−ln μ_{0,m−1}(x_m)` over the same
    /// window as [`SlopeEstimate::log_corrected`]; its mean is that fit
    /// applied to the expected profile.
    pub log_corrected: MeanEstimate,
    pub n: usize,
    pub paths: usize,
    pub excluded: usize,
    pub fit_window: (usize, usize),
}

impl SmbEstimate {
    pub fn value(&self) -> MeanEstimate {
        self.log_corrected
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub group: String,
    pub environment: String,
    pub profile: Vec<ProfilePoint>,
    pub h_k: BTreeMap<usize, HkEstimate>,
    pub slope: Option<SlopeEstimate>,
    pub smb: Option<SmbEstimate>,
    /// Largest dropped mass over the profile.
    pub dropped_mass: f64,
}

impl EntropyReport {
    pub fn entropies(&self) -> Vec<f64> {
        self.profile.iter().map(|p| p.entropy).collect()
    }

    /// `H(μ_{0,n+m−1}) ≤ H(μ_{0,n−1}) + H(μ_{n,n+m−1})` needs the shifted
    /// stream; along a single profile only monotonicity `H_{n+1} ≥ H_n` is
    /// checked, which holds for every convolution stream.
    pub fn profile_is_monotone(&self) -> bool {
        self.profile.windows(2).all(|w| w[1].entropy >= w[0].entropy - 1e-9)
    }

    pub fn write_profile_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["n", "value"])?;
        for p in &self.profile {
            out.write_record([p.n.to_string(), p.entropy.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Entropies `H(μ_{0,n−1})` for `n = 1..=n_max` from stream terms.
pub fn entropy_profile<I>(stream: I, n_max: usize) -> Result<EntropyReport>
where
    I: IntoIterator<Item = Result<SparseMeasure>>,
{
    let mut profile = Vec::with_capacity(n_max);
    let mut dropped: f64 = 0.0;
    for (i, term) in stream.into_iter().take(n_max).enumerate() {
        let term = term?;
        if term.dropped_mass() > MAX_PROFILE_DROPPED_MASS {
            return Err(Error::Precondition(format!(
                "term {i} dropped mass {} exceeds {MAX_PROFILE_DROPPED_MASS}",
                term.dropped_mass()
            )));
        }
        dropped = dropped.max(term.dropped_mass());
        profile.push(ProfilePoint {
            n: i + 1,
            entropy: term.entropy(),
            dropped_mass: term.dropped_mass(),
        });
    }
    Ok(EntropyReport {
        profile,
        dropped_mass: dropped,
        ..Default::default()
    })
}

/// The sequence `H(μ_{0,n}) − H(μ_{k,n})` for `k ≤ n < n_max`, from the
/// orbit of `state`.
pub fn h_k_estimate(
    env: &EnvironmentModel,
    state: &EnvState,
    k: usize,
    n_max: usize,
    prune_eps: f64,
) -> Result<HkEstimate> {
    if k >= n_max {
        return Err(Error::InvalidArgument(format!("k = {k} must be below n_max = {n_max}")));
    }
    let base = entropy_profile(env.stream(state, prune_eps), n_max)?.entropies();
    let shifted_state = env.advance(state, k as i64);
    let shifted = entropy_profile(env.stream(&shifted_state, prune_eps), n_max - k)?.entropies();
    h_k_from_profiles(k, &base, &shifted)
}

/// `base[n] = H(μ_{0,n})`, `shifted[j] = H(μ_{k,k+j})`.
pub fn h_k_from_profiles(k: usize, base: &[f64], shifted: &[f64]) -> Result<HkEstimate> {
    let sequence: Vec<(usize, f64)> = (k..base.len())
        .filter(|n| n - k < shifted.len())
        .map(|n| (n, if k == 0 { 0.0 } else { base[n] - shifted[n - k] }))
        .collect();
    if let Some((n, v)) = sequence.iter().find(|(_, v)| *v < -1e-9) {
        return Err(Error::Integrity(format!("H(μ_0,{n}) − H(μ_{k},{n}) = {v} is negative")));
    }
    let &(n_used, value) = sequence
        .last()
        .ok_or_else(|| Error::InvalidArgument("empty h_k sequence".into()))?;
    let tail = &sequence[sequence.len() - (sequence.len() / 4).max(1)..];
    let hi = tail.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let lo = tail.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    Ok(HkEstimate {
        k,
        sequence,
        value,
        n_used,
        tail_oscillation: hi - lo,
    })
}

/// Steps `n` (1-based) used by the log-corrected fit on a profile of length
/// `len`: the final half.
pub fn fit_window(len: usize) -> (usize, usize) {
    ((len / 2).max(1), len)
}

pub fn asymptotic_entropy_slope(report: &EntropyReport) -> Result<SlopeEstimate> {
    let h = report.entropies();
    let len = h.len();
    if len < 8 {
        return Err(Error::Precondition(format!(
            "profile has {len} points, need at least 8"
        )));
    }
    let start = len - len / 3;
    let ratios: Vec<f64> = (start..=len).map(|n| h[n - 1] / n as f64).collect();
    let diffs: Vec<f64> = (start..=len).map(|n| h[n - 1] - h[n - 2]).collect();
    let (lo, hi) = fit_window(len);
    let ts: Vec<f64> = (lo..=hi).map(|n| n as f64).collect();
    let ys: Vec<f64> = (lo..=hi).map(|n| h[n - 1]).collect();
    let log_corrected = log_corrected_slope_weights(&ts)
        .iter()
        .zip(&ys)
        .map(|(w, y)| w * y)
        .sum();
    Ok(SlopeEstimate {
        cesaro: median(&ratios),
        first_difference: diffs.iter().sum::<f64>() / diffs.len() as f64,
        log_corrected,
        window: (start, len),
        fit_window: (lo, hi),
    })
}

/// Per-path values `(raw, log-corrected)`; `None` if some `x_m` fell outside
/// a pruned support.
fn smb_path(terms: &[SparseMeasure], path: &PathSample, n: usize, lo: usize, weights: &[f64]) -> Option<(f64, f64)> {
    let neg_log = |m: usize| {
        let p = terms[m - 1].mass(&path.positions[m]);
        (p > 0.0).then(|| -p.ln())
    };
    let raw = neg_log(n)? / n as f64;
    let mut corrected = 0.0;
    for (j, w) in weights.iter().enumerate() {
        corrected += w * neg_log(lo + j)?;
    }
    Some((raw, corrected))
}

fn smb_collect(values: Vec<Option<(f64, f64)>>, n: usize, window: (usize, usize)) -> Result<SmbEstimate> {
    let paths = values.len();
    let kept: Vec<(f64, f64)> = values.into_iter().flatten().collect();
    let excluded = paths - kept.len();
    if excluded as f64 > MAX_SMB_EXCLUSION * paths as f64 {
        return Err(Error::Integrity(format!(
            "{excluded} of {paths} paths left the pruned support"
        )));
    }
    let raw: Vec<f64> = kept.iter().map(|v| v.0).collect();
    let corrected: Vec<f64> = kept.iter().map(|v| v.1).collect();
    Ok(SmbEstimate {
        raw: MeanEstimate::from_samples(&raw),
        log_corrected: MeanEstimate::from_samples(&corrected),
        n,
        paths,
        excluded,
        fit_window: window,
    })
}

fn smb_setup(terms: &[SparseMeasure], n: usize) -> Result<((usize, usize), Vec<f64>)> {
    if n == 0 || n > terms.len() {
        return Err(Error::InvalidArgument(format!(
            "n = {n} outside a stream of {} terms",
            terms.len()
        )));
    }
    let window = fit_window(n);
    let ts: Vec<f64> = (window.0..=window.1).map(|m| m as f64).collect();
    let weights = if ts.len() >= 3 {
        log_corrected_slope_weights(&ts)
    } else {
        return Err(Error::Precondition("SMB fit window needs n ≥ 6".into()));
    };
    Ok((window, weights))
}

/// SMB estimate from a quenched ensemble sharing the stream's ω.
pub fn smb_estimate(ensemble: &PathEnsemble, terms: &[SparseMeasure]) -> Result<SmbEstimate> {
    let n = ensemble.length.min(terms.len());
    let (window, weights) = smb_setup(terms, n)?;
    if ensemble.manifest.env_state.is_none() {
        return Err(Error::Precondition("SMB estimates need a quenched ensemble".into()));
    }
    let values = ensemble
        .samples
        .iter()
        .map(|p| smb_path(terms, p, n, window.0, &weights))
        .collect();
    smb_collect(values, n, window)
}

/// SMB estimate from `count` fresh quenched paths at `state`, without
/// keeping the ensemble.
pub fn smb_estimate_streaming(
    env: &EnvironmentModel,
    state: &EnvState,
    terms: &[SparseMeasure],
    n: usize,
    count: usize,
    seed: u64,
) -> Result<SmbEstimate> {
    let (window, weights) = smb_setup(terms, n)?;
    let values = map_paths_at(env, state, n, count, seed, |_, p| {
        smb_path(terms, p, n, window.0, &weights)
    });
    smb_collect(values, n, window)
}

/// Entropy estimates averaged over disjoint windows of one environment
/// orbit: window `j` is the stream and paths started at `T^{jn}ω`.
///
/// Standard errors come from the spread of the window means, so they cover
/// both Monte Carlo noise and the finite-`n` dependence on the window's
/// environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitEntropy {
    pub n: usize,
    pub windows: usize,
    /// Log-corrected profile slopes.
    pub slope: MeanEstimate,
    /// `H(μ_{0,n−1}) / n`.
    pub cesaro: MeanEstimate,
    /// SMB window means.
    pub smb: SmbEstimate,
}

pub fn orbit_entropy(
    env: &EnvironmentModel,
    state: &EnvState,
    n: usize,
    windows: usize,
    paths_per_window: usize,
    seed: u64,
) -> Result<OrbitEntropy> {
    if windows < 2 {
        return Err(Error::InvalidArgument("orbit averages need at least 2 windows".into()));
    }
    let mut slopes = Vec::with_capacity(windows);
    let mut cesaro = Vec::with_capacity(windows);
    let mut raw = Vec::with_capacity(windows);
    let mut corrected = Vec::with_capacity(windows);
    let (mut paths, mut excluded) = (0, 0);
    let mut fit = (0, 0);
    for j in 0..windows {
        let s = env.advance(state, (j * n) as i64);
        let terms = env.convolution_stream(&s, n, 0.0)?;
        let report = entropy_profile(terms.iter().cloned().map(Ok), n)?;
        slopes.push(asymptotic_entropy_slope(&report)?.log_corrected);
        cesaro.push(report.profile[n - 1].entropy / n as f64);
        let e = smb_estimate_streaming(
            env,
            &s,
            &terms,
            n,
            paths_per_window,
            crate::rng::derive_seed(seed, j as u64),
        )?;
        raw.push(e.raw.mean);
        corrected.push(e.log_corrected.mean);
        paths += e.paths;
        excluded += e.excluded;
        fit = e.fit_window;
    }
    Ok(OrbitEntropy {
        n,
        windows,
        slope: MeanEstimate::from_samples(&slopes),
        cesaro: MeanEstimate::from_samples(&cesaro),
        smb: SmbEstimate {
            raw: MeanEstimate::from_samples(&raw),
            log_corrected: MeanEstimate::from_samples(&corrected),
            n,
            paths,
            excluded,
            fit_window: fit,
        },
    })
}

/// Mass that `term` puts on the set selected by `keep`, and the set's size.
pub fn concentration(term: &SparseMeasure, keep: impl Fn(&crate::group::GroupElement) -> bool) -> (f64, usize) {
    let mut mass = 0.0;
    let mut size = 0;
    for (g, p) in term.iter() {
        if keep(g) {
            mass += p;
            size += 1;
        }
    }
    (mass, size)
}
