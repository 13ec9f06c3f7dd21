//! Boundary phenomenology on free groups: limit ends of sample paths,
//! deviation from the geodesic ray toward the end, hitting histograms over
//! end cylinders and their stationarity, and left-invariance decay on
//! nilpotent groups.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::entropy::{detect_period, reduced_words};
use crate::env::{EnvState, EnvironmentModel};
use crate::error::{Error, Result};
use crate::group::{GroupElement, GroupKind, Word};
use crate::measure::SparseMeasure;
use crate::stats::quantile;
use crate::walk::{map_paths_at, PathEnsemble, PathSample};

/// Smallest stabilized fraction accepted by hitting histograms.
pub const MIN_STABILIZED_FRACTION: f64 = 0.95;

/// A cylinder of ends: all reduced infinite words starting with `prefix`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EndCylinder {
    prefix: Word,
}

impl EndCylinder {
    pub fn new(prefix: Word) -> Result<Self> {
        if prefix.is_empty() || !prefix.is_reduced() {
            return Err(Error::InvalidArgument(format!(
                "{prefix} is not a reduced word of positive length"
            )));
        }
        Ok(Self { prefix })
    }

    pub fn prefix(&self) -> &Word {
        &self.prefix
    }

    pub fn depth(&self) -> usize {
        self.prefix.len()
    }

    pub fn contains(&self, end: &Word) -> bool {
        end.starts_with(&self.prefix)
    }
}

/// The end read off a finite path.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LimitEnd {
    /// Common prefix of the final-quarter positions, at most `depth` long.
    pub prefix: Word,
    /// `⌊n·l/2⌋`.
    pub depth: usize,
    pub stabilized: bool,
    /// Largest `m ≤ n` at which the depth-`depth` prefix of `x_m` changed.
    pub last_change: usize,
}

fn free_rank(kind: GroupKind) -> Result<usize> {
    match kind {
        GroupKind::FreeGroup { rank } => Ok(rank),
        other => Err(Error::Precondition(format!(
            "boundary analysis needs a free group, got {other}"
        ))),
    }
}

fn word(g: &GroupElement) -> &Word {
    g.as_word().expect("free-group position")
}

fn end_of(positions: &[GroupElement], l: f64) -> Result<LimitEnd> {
    if l.is_nan() || l <= 0.0 {
        return Err(Error::Precondition(format!(
            "rate of escape {l} is not positive; the walk has no boundary behaviour to read"
        )));
    }
    let n = positions.len() - 1;
    if (n as f64) < 20.0 / l {
        return Err(Error::Precondition(format!(
            "path length {n} is below 20/l = {:.1}",
            20.0 / l
        )));
    }
    let depth = (n as f64 * l / 2.0).floor() as usize;
    let start = n - n / 4;
    let last = word(&positions[n]);
    let common = positions[start..n]
        .iter()
        .fold(last.len(), |c, g| c.min(word(g).common_prefix_len(last)));
    let prefix = last.prefix(common.min(depth));
    let stabilized = common >= depth;
    let truncated = |m: usize| word(&positions[m]).prefix(depth);
    let last_change = (1..=n).rev().find(|&m| truncated(m) != truncated(m - 1)).unwrap_or(0);
    Ok(LimitEnd {
        prefix,
        depth,
        stabilized,
        last_change,
    })
}

/// Limit end of `path` at its full length.
pub fn limit_end(path: &PathSample, l: f64) -> Result<LimitEnd> {
    limit_end_at(path, path.len(), l)
}

/// Limit end of the first `n` steps of `path`.
pub fn limit_end_at(path: &PathSample, n: usize, l: f64) -> Result<LimitEnd> {
    if n > path.len() {
        return Err(Error::InvalidArgument(format!(
            "n = {n} exceeds path length {}",
            path.len()
        )));
    }
    if let Some(g) = path.positions.first() {
        if g.as_word().is_none() {
            return Err(Error::Precondition("boundary analysis needs a free group".into()));
        }
    }
    end_of(&path.positions[..=n], l)
}

/// `d(x, γ(m)) = |x| + m − 2·|lcp(x, γ[..m])|` on the tree.
pub fn tree_distance(x: &Word, ray: &Word, m: usize) -> usize {
    assert!(m <= ray.len(), "ray of length {} has no point at {m}", ray.len());
    let common = x.common_prefix_len(ray).min(m);
    x.len() + m - 2 * common
}

/// `d(x_m, γ(⌊m·l⌋)) / m` at dyadic checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RayDeviation {
    pub stabilized: bool,
    pub samples: Vec<(usize, f64)>,
}

/// Checkpoints `N/2, N/4, N/8, N/16` of a path of length `N`, ascending.
pub fn deviation_checkpoints(len: usize) -> Vec<usize> {
    let mut c: Vec<usize> = (1..=4).map(|j| len >> j).filter(|&m| m > 0).collect();
    c.reverse();
    c.dedup();
    c
}

/// Deviation of a path of length `N` from the ray toward its own limit end,
/// which is known to depth `⌊N·l/2⌋ ≥ ⌊m·l⌋` for every checkpoint `m ≤ N/2`.
pub fn ray_deviation(path: &PathSample, l: f64) -> Result<RayDeviation> {
    let end = limit_end(path, l)?;
    let samples = deviation_checkpoints(path.len())
        .into_iter()
        .map(|m| {
            let target = ((m as f64 * l).floor() as usize).min(end.prefix.len());
            (
                m,
                tree_distance(word(&path.positions[m]), &end.prefix, target) as f64 / m as f64,
            )
        })
        .collect();
    Ok(RayDeviation {
        stabilized: end.stabilized,
        samples,
    })
}

/// Empirical law of limit-end prefixes at `depth`, kept at `depth + refine`
/// so that translates by words of length `≤ refine` are exact.
#[derive(Clone, Debug, PartialEq)]
pub struct HittingHistogram {
    pub rank: usize,
    pub depth: usize,
    pub refine: usize,
    /// Every reduced word of length `depth + refine` with its count.
    pub refined: Vec<(Word, usize)>,
    pub paths: usize,
    pub excluded: usize,
}

impl HittingHistogram {
    pub fn from_ends(rank: usize, ends: &[LimitEnd], depth: usize, refine: usize) -> Result<Self> {
        let fine = depth + refine;
        let paths = ends.len();
        let kept: Vec<&LimitEnd> = ends.iter().filter(|e| e.stabilized).collect();
        let excluded = paths - kept.len();
        if paths == 0 || (kept.len() as f64) < MIN_STABILIZED_FRACTION * paths as f64 {
            return Err(Error::Integrity(format!(
                "only {} of {paths} paths stabilized (need {MIN_STABILIZED_FRACTION})",
                kept.len()
            )));
        }
        if let Some(e) = kept.iter().find(|e| e.prefix.len() < fine) {
            return Err(Error::Precondition(format!(
                "limit ends are known to depth {}, histogram needs {fine}",
                e.prefix.len()
            )));
        }
        let mut refined: Vec<(Word, usize)> = reduced_words(rank, fine).into_iter().map(|w| (w, 0)).collect();
        refined.sort();
        for e in kept {
            let key = e.prefix.prefix(fine);
            let i = refined.binary_search_by(|(w, _)| w.cmp(&key)).expect("reduced prefix");
            refined[i].1 += 1;
        }
        Ok(Self {
            rank,
            depth,
            refine,
            refined,
            paths,
            excluded,
        })
    }

    pub fn stabilized(&self) -> usize {
        self.paths - self.excluded
    }

    /// Counts at `depth`, sorted by cylinder.
    pub fn counts(&self) -> Vec<(Word, usize)> {
        let mut out: Vec<(Word, usize)> = Vec::new();
        for (w, c) in &self.refined {
            let p = w.prefix(self.depth);
            match out.last_mut() {
                Some((last, total)) if *last == p => *total += c,
                _ => out.push((p, *c)),
            }
        }
        out
    }

    pub fn masses(&self) -> Vec<(Word, f64)> {
        let total = self.stabilized() as f64;
        self.counts().into_iter().map(|(w, c)| (w, c as f64 / total)).collect()
    }

    pub fn mass(&self, prefix: &Word) -> f64 {
        let total = self.stabilized() as f64;
        self.refined
            .iter()
            .filter(|(w, _)| w.starts_with(prefix))
            .map(|(_, c)| *c as f64)
            .sum::<f64>()
            / total
    }

    /// Depth-`depth` masses of the translate `h·ν̂`.
    pub fn translate(&self, h: &Word) -> Result<Vec<(Word, f64)>> {
        if h.len() > self.refine {
            return Err(Error::Precondition(format!(
                "translating by {h} needs refinement {} (have {})",
                h.len(),
                self.refine
            )));
        }
        let total = self.stabilized() as f64;
        let mut out: Vec<(Word, f64)> = reduced_words(self.rank, self.depth)
            .into_iter()
            .map(|w| (w, 0.0))
            .collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        for (w, c) in &self.refined {
            let key = h.mul(w).prefix(self.depth);
            let i = out.binary_search_by(|(x, _)| x.cmp(&key)).expect("image keeps depth");
            out[i].1 += *c as f64 / total;
        }
        Ok(out)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["cylinder", "count", "mass"])?;
        let total = self.stabilized() as f64;
        for (c, n) in self.counts() {
            out.write_record([c.to_string(), n.to_string(), (n as f64 / total).to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Limit ends of every path in a free-group ensemble.
pub fn limit_ends(ensemble: &PathEnsemble, l: f64) -> Result<Vec<LimitEnd>> {
    free_rank(ensemble.group.kind())?;
    ensemble.samples.par_iter().map(|p| limit_end(p, l)).collect()
}

pub fn hitting_measure(ensemble: &PathEnsemble, l: f64, depth: usize, refine: usize) -> Result<HittingHistogram> {
    let rank = free_rank(ensemble.group.kind())?;
    HittingHistogram::from_ends(rank, &limit_ends(ensemble, l)?, depth, refine)
}

/// As [`hitting_measure`] for `count` fresh quenched paths at `state`,
/// without keeping them.
#[allow(clippy::too_many_arguments)]
pub fn hitting_measure_streaming(
    env: &EnvironmentModel,
    state: &EnvState,
    n: usize,
    count: usize,
    seed: u64,
    l: f64,
    depth: usize,
    refine: usize,
) -> Result<HittingHistogram> {
    let rank = free_rank(env.group().kind())?;
    let ends = map_paths_at(env, state, n, count, seed, |_, p| limit_end(p, l))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    HittingHistogram::from_ends(rank, &ends, depth, refine)
}

/// `‖ν̂_ω − Σ_h μ^ω(h)·h·ν̂_{Tω}‖`.
pub fn stationarity_residual(nu: &HittingHistogram, nu_next: &HittingHistogram, mu: &SparseMeasure) -> Result<f64> {
    if nu.depth != nu_next.depth || nu.rank != nu_next.rank {
        return Err(Error::InvalidArgument(format!(
            "histograms at depths {} and {} cannot be compared",
            nu.depth, nu_next.depth
        )));
    }
    free_rank(mu.model().kind())?;
    let target = nu.masses();
    let mut mixed = vec![0.0; target.len()];
    for (h, p) in mu.iter() {
        for (slot, (_, m)) in mixed.iter_mut().zip(nu_next.translate(word(h))?) {
            *slot += p * m;
        }
    }
    Ok(target.iter().zip(&mixed).map(|((_, a), b)| (a - b).abs()).sum())
}

/// Median and 10/90% quantiles of normalized ray deviations at one checkpoint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationSummary {
    pub n: usize,
    pub median: f64,
    pub q10: f64,
    pub q90: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    /// Horizon `n`; paths are simulated to `2n` to locate the ray.
    pub n: usize,
    pub l: f64,
    pub end_depth: usize,
    pub paths: usize,
    /// Paths whose end at `n` is stabilized.
    pub stabilized: usize,
    pub stabilized_fraction: f64,
    /// Median and maximum of the per-path last prefix change at `n`.
    pub last_change_median: f64,
    pub last_change_max: usize,
    /// Over paths stabilized at `2n`, at `n/8, n/4, n/2, n`.
    pub deviations: Vec<DeviationSummary>,
    pub deviation_excluded: usize,
}

impl BoundaryReport {
    pub fn write_deviation_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["n", "median", "q10", "q90"])?;
        for d in &self.deviations {
            out.write_record([
                d.n.to_string(),
                d.median.to_string(),
                d.q10.to_string(),
                d.q90.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Median deviation strictly decreases across the checkpoints.
    pub fn deviation_decreasing(&self) -> bool {
        self.deviations.windows(2).all(|w| w[1].median < w[0].median)
    }
}

struct PathBoundary {
    end: LimitEnd,
    deviation: RayDeviation,
}

fn assemble(n: usize, l: f64, rows: Vec<PathBoundary>) -> BoundaryReport {
    let paths = rows.len();
    let stabilized = rows.iter().filter(|r| r.end.stabilized).count();
    let changes: Vec<f64> = rows.iter().map(|r| r.end.last_change as f64).collect();
    let kept: Vec<&RayDeviation> = rows.iter().map(|r| &r.deviation).filter(|d| d.stabilized).collect();
    let marks: Vec<usize> = kept
        .first()
        .map(|d| d.samples.iter().map(|s| s.0).collect())
        .unwrap_or_default();
    let deviations = marks
        .iter()
        .enumerate()
        .map(|(j, &m)| {
            let v: Vec<f64> = kept.iter().map(|d| d.samples[j].1).collect();
            DeviationSummary {
                n: m,
                median: quantile(&v, 0.5),
                q10: quantile(&v, 0.1),
                q90: quantile(&v, 0.9),
                count: v.len(),
            }
        })
        .collect();
    BoundaryReport {
        n,
        l,
        end_depth: rows.first().map_or(0, |r| r.end.depth),
        paths,
        stabilized,
        stabilized_fraction: stabilized as f64 / paths as f64,
        last_change_median: quantile(&changes, 0.5),
        last_change_max: rows.iter().map(|r| r.end.last_change).max().unwrap_or(0),
        deviations,
        deviation_excluded: paths - kept.len(),
    }
}

fn path_boundary(p: &PathSample, n: usize, l: f64) -> Result<PathBoundary> {
    Ok(PathBoundary {
        end: limit_end_at(p, n, l)?,
        deviation: ray_deviation(p, l)?,
    })
}

/// Boundary statistics at horizon `ensemble.length / 2`.
pub fn boundary_report(ensemble: &PathEnsemble, l: f64) -> Result<BoundaryReport> {
    free_rank(ensemble.group.kind())?;
    let n = ensemble.length / 2;
    let rows = ensemble
        .samples
        .par_iter()
        .map(|p| path_boundary(p, n, l))
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(n, l, rows))
}

/// Boundary statistics at horizon `n` from `count` quenched paths of length
/// `2n`, without keeping them.
pub fn boundary_report_streaming(
    env: &EnvironmentModel,
    state: &EnvState,
    n: usize,
    count: usize,
    seed: u64,
    l: f64,
) -> Result<BoundaryReport> {
    free_rank(env.group().kind())?;
    let rows = map_paths_at(env, state, 2 * n, count, seed, |_, p| path_boundary(p, n, l))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(n, l, rows))
}

/// [`boundary_report_streaming`] together with the hitting histogram of the
/// limit ends at `n`.
#[allow(clippy::too_many_arguments)]
pub fn boundary_with_histogram_streaming(
    env: &EnvironmentModel,
    state: &EnvState,
    n: usize,
    count: usize,
    seed: u64,
    l: f64,
    depth: usize,
    refine: usize,
) -> Result<(BoundaryReport, HittingHistogram)> {
    let rank = free_rank(env.group().kind())?;
    let rows = map_paths_at(env, state, 2 * n, count, seed, |_, p| path_boundary(p, n, l))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let ends: Vec<LimitEnd> = rows.iter().map(|r| r.end.clone()).collect();
    let histogram = HittingHistogram::from_ends(rank, &ends, depth, refine)?;
    Ok((assemble(n, l, rows), histogram))
}

/// `‖g·μ_{0,n} − μ_{0,n}‖` at checkpoints, per element.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceDecay {
    pub rows: Vec<InvarianceRow>,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceRow {
    pub element: String,
    /// `(n, tv)` with `n` the stream index of `μ_{0,n}`.
    pub values: Vec<(usize, f64)>,
    pub decreasing: bool,
    /// First value over last value.
    pub factor: f64,
    pub pass: bool,
}

impl InvarianceDecay {
    pub fn pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

/// Requires a nilpotent model and period 1 along the steps up to the last
/// checkpoint.
pub fn invariance_decay(
    env: &EnvironmentModel,
    state: &EnvState,
    elements: &[GroupElement],
    checkpoints: &[usize],
    threshold: f64,
    prune_eps: f64,
) -> Result<InvarianceDecay> {
    let group = env.group();
    if !group.kind().is_nilpotent() {
        return Err(Error::Precondition(format!(
            "left-invariance decay is defined for nilpotent models, got {}",
            group.kind()
        )));
    }
    let n_max = checkpoints
        .iter()
        .copied()
        .max()
        .ok_or_else(|| Error::InvalidArgument("no checkpoints".into()))?;
    let steps = env.measures_along(state, n_max + 1);
    let period = detect_period(group, &steps);
    if period.period != 1 {
        return Err(Error::Precondition(format!(
            "steps have period {}; invariance decay needs an irreducible configuration (see the tail analysis)",
            period.period
        )));
    }
    let mut values: Vec<Vec<(usize, f64)>> = vec![Vec::new(); elements.len()];
    for (i, term) in env.stream(state, prune_eps).take(n_max + 1).enumerate() {
        let term = term?;
        if checkpoints.contains(&i) {
            for (g, v) in elements.iter().zip(&mut values) {
                v.push((i, term.translation_defect(g)?));
            }
        }
    }
    let rows = elements
        .iter()
        .zip(values)
        .map(|(g, values)| {
            let decreasing = values.windows(2).all(|w| w[1].1 < w[0].1);
            let first = values.first().map_or(f64::NAN, |v| v.1);
            let last = values.last().map_or(f64::NAN, |v| v.1);
            InvarianceRow {
                element: g.to_string(),
                decreasing,
                factor: first / last,
                pass: decreasing && last < threshold,
                values,
            }
        })
        .collect();
    Ok(InvarianceDecay { rows, threshold })
}
