//! Executes a validated configuration and writes its artifacts.

use serde::Serialize;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use groupwalk::boundary::{
    boundary_with_histogram_streaming, hitting_measure_streaming, invariance_decay, stationarity_residual,
};
use groupwalk::entropy::{
    asymptotic_entropy_slope, conditional_entropy, default_test_elements, entropy_profile, fundamental_inequality,
    growth_rate_with_budget, h_k_from_profiles, orbit_entropy, rate_of_escape, rate_of_escape_at,
    smb_estimate_streaming, tail_analysis, EntropyReport, EscapeReport, GrowthReport, OrbitEntropy, TailThresholds,
};
use groupwalk::measure::DEFAULT_SUPPORT_BUDGET;
use groupwalk::rng::{derive_seed, RNG_ALGORITHM};
use groupwalk::stats::{combined_se, MeanEstimate};
use groupwalk::walk::{map_paths, map_paths_at, quenched_state, write_paths_csv, PathSample};
use groupwalk::{EnvState, Error, GroupElement, SamplingMode, SparseMeasure};

use crate::config::{AnalysisSpec, ExperimentConfig, Prepared};
use crate::manifest::{sha256_file, sha256_hex, AnalysisOutcome, AnalysisStatus, ExperimentManifest};

/// Ensemble CSVs keep at most this many paths.
pub const PERSIST_CAP: usize = 1000;

/// Bytes charged per support atom when converting `--budget-mb`.
pub const BYTES_PER_ATOM: usize = 96;

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Worker threads; all available cores when absent.
    pub workers: Option<usize>,
    /// Support budget in atoms; see [`atoms_from_mb`].
    pub budget_atoms: Option<usize>,
    /// Replaces the configuration's master seed.
    pub seed: Option<u64>,
    /// Run only ensemble analyses.
    pub ensembles_only: bool,
}

pub fn atoms_from_mb(mb: usize) -> usize {
    (mb << 20) / BYTES_PER_ATOM
}

#[derive(Debug)]
pub enum RunError {
    Invalid(Vec<String>),
    Io(std::io::Error),
    Pool(String),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Invalid(errors) => {
                writeln!(f, "configuration has {} problem(s):", errors.len())?;
                for e in errors {
                    writeln!(f, "  - {e}")?;
                }
                Ok(())
            }
            RunError::Io(e) => write!(f, "{e}"),
            RunError::Pool(e) => write!(f, "cannot start worker pool: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// FNV-1a of the analysis name, used as its seed label.
fn label(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x100_0000_01b3)
    })
}

/// The ω shared by every quenched analysis of a run.
pub fn run_state(prep: &Prepared) -> EnvState {
    match prep.config.environment.seed {
        Some(s) => prep.env.sample_initial(s),
        None => quenched_state(&prep.env, prep.seed),
    }
}

struct Context<'a> {
    prep: &'a Prepared,
    state: EnvState,
    budget: usize,
    out: &'a Path,
    growth: Option<GrowthReport>,
    /// Headline `h̄` with its standard error.
    entropy: Option<MeanEstimate>,
    terms: Vec<SparseMeasure>,
    escape: Option<EscapeReport>,
}

struct Done {
    verdicts: BTreeMap<String, bool>,
    artifacts: Vec<String>,
    dropped_mass: f64,
}

impl Done {
    fn new() -> Self {
        Done {
            verdicts: BTreeMap::new(),
            artifacts: Vec::new(),
            dropped_mass: 0.0,
        }
    }

    fn check(&mut self, name: impl Into<String>, pass: bool) {
        self.verdicts.insert(name.into(), pass);
    }
}

type Step = Result<Done, Error>;

fn in_range(x: f64, range: &Option<[f64; 2]>) -> Option<bool> {
    range.map(|[lo, hi]| (lo..=hi).contains(&x))
}

impl Context<'_> {
    fn seed_for(&self, name: &str) -> u64 {
        derive_seed(self.prep.seed, label(name))
    }

    fn json<T: Serialize>(&self, done: &mut Done, name: &str, value: &T) -> Result<(), Error> {
        let mut w = BufWriter::new(File::create(self.out.join(name))?);
        serde_json::to_writer_pretty(&mut w, value)
            .map_err(|e| Error::Integrity(format!("serializing {name}: {e}")))?;
        writeln!(w)?;
        w.flush()?;
        done.artifacts.push(name.to_string());
        Ok(())
    }

    fn csv(&self, done: &mut Done, name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), Error> {
        let mut w = csv::Writer::from_path(self.out.join(name))?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        done.artifacts.push(name.to_string());
        Ok(())
    }

    fn create(&self, done: &mut Done, name: &str) -> Result<BufWriter<File>, Error> {
        done.artifacts.push(name.to_string());
        Ok(BufWriter::new(File::create(self.out.join(name))?))
    }

    fn elements(&self, list: &Option<Vec<String>>) -> Result<Vec<GroupElement>, Error> {
        match list {
            Some(list) => list.iter().map(|s| self.prep.group.parse_element(s)).collect(),
            None => Ok(default_test_elements(&self.prep.group)),
        }
    }

    /// Stream terms `μ_{0,0}, …, μ_{0,n−1}` at ω, reusing the entropy stream.
    fn terms(&self, n: usize) -> Result<Vec<SparseMeasure>, Error> {
        if self.terms.len() >= n {
            return Ok(self.terms[..n].to_vec());
        }
        self.prep
            .env
            .stream(&self.state, 0.0)
            .with_budget(self.budget)
            .take(n)
            .collect()
    }

    fn escape_rate(&self, l: Option<f64>) -> Result<f64, Error> {
        l.or_else(|| self.escape.as_ref().map(|e| e.rate.mean))
            .ok_or_else(|| Error::Precondition("no rate of escape: set l or run an escape analysis".into()))
    }

    fn run(&mut self, spec: &AnalysisSpec) -> Step {
        match spec {
            AnalysisSpec::Growth { .. } => self.growth(spec),
            AnalysisSpec::Entropy { .. } => self.entropy(spec),
            AnalysisSpec::Tail { .. } => self.tail(spec),
            AnalysisSpec::Invariance { .. } => self.invariance(spec),
            AnalysisSpec::Ensemble { .. } => self.ensemble(spec),
            AnalysisSpec::Escape { .. } => self.escape(spec),
            AnalysisSpec::Boundary { .. } => self.boundary(spec),
            AnalysisSpec::Inequality {} => self.inequality(),
            AnalysisSpec::Conditional { .. } => self.conditional(spec),
        }
    }

    fn growth(&mut self, spec: &AnalysisSpec) -> Step {
        let AnalysisSpec::Growth {
            t_max,
            expect_v,
            expect_degree,
        } = spec
        else {
            unreachable!()
        };
        let report = growth_rate_with_budget(&self.prep.group, *t_max, self.budget)?;
        let mut done = Done::new();
        if let Some(ok) = in_range(report.v(), expect_v) {
            done.check("v_in_range", ok);
        }
        if expect_degree.is_some() {
            done.check(
                "degree_in_range",
                report.degree.and_then(|d| in_range(d, expect_degree)).unwrap_or(false),
            );
        }
        self.json(&mut done, "growth.json", &report)?;
        let rows = report
            .counts
            .iter()
            .map(|(t, c)| vec![t.to_string(), c.to_string()])
            .collect();
        self.csv(&mut done, "growth.csv", &["t", "ball_size"], rows)?;
        self.growth = Some(report);
        Ok(done)
    }

    fn entropy(&mut self, spec: &AnalysisSpec) -> Step {
        let AnalysisSpec::Entropy {
            n_max,
            paths,
            prune_eps,
            h_k,
            windows,
            trivial_threshold,
            expect_trivial,
            h_k_max,
        } = spec
        else {
            unreachable!()
        };
        let env = &self.prep.env;
        let seed = self.seed_for("entropy");
        let terms: Vec<SparseMeasure> = env
            .stream(&self.state, *prune_eps)
            .with_budget(self.budget)
            .take(*n_max)
            .collect::<Result<_, _>>()?;
        let mut report = entropy_profile(terms.iter().cloned().map(Ok), *n_max)?;
        report.group = self.prep.group.kind().to_string();
        report.environment = env.kind().label().to_string();
        let base = report.entropies();
        for &k in h_k {
            let shifted_state = env.advance(&self.state, k as i64);
            let shifted = entropy_profile(
                env.stream(&shifted_state, *prune_eps).with_budget(self.budget),
                n_max - k,
            )?;
            report.h_k.insert(k, h_k_from_profiles(k, &base, &shifted.entropies())?);
        }
        let slope = asymptotic_entropy_slope(&report)?;
        report.slope = Some(slope);
        let smb = smb_estimate_streaming(env, &self.state, &terms, *n_max, *paths, seed)?;
        report.smb = Some(smb.clone());
        let orbit = if *windows > 1 {
            Some(orbit_entropy(
                env,
                &self.state,
                *n_max,
                *windows,
                (paths / windows).max(1),
                seed,
            )?)
        } else {
            None
        };
        let (slope_est, headline) = match &orbit {
            Some(o) => (o.slope, o.smb.log_corrected),
            None => (
                MeanEstimate {
                    mean: slope.log_corrected,
                    std_error: 0.0,
                    count: 1,
                },
                smb.log_corrected,
            ),
        };
        let trivial = headline.mean <= *trivial_threshold;

        let mut done = Done::new();
        done.check("profile_monotone", report.profile_is_monotone());
        let se = combined_se(slope_est.std_error, headline.std_error);
        done.check("slope_smb_agree", (slope_est.mean - headline.mean).abs() <= 3.0 * se);
        if let Some(expect) = expect_trivial {
            done.check("expected_triviality", trivial == *expect);
        }
        if let Some(m) = h_k_max {
            done.check("h_k_below_max", report.h_k.values().all(|e| e.value < *m));
        }
        done.dropped_mass = report.dropped_mass;
        self.json(
            &mut done,
            "entropy.json",
            &EntropyArtifact {
                report: &report,
                orbit: orbit.as_ref(),
                headline,
                slope: slope_est,
                trivial_threshold: *trivial_threshold,
                trivial,
            },
        )?;
        report.write_profile_csv(self.create(&mut done, "profile.csv")?)?;
        self.entropy = Some(headline);
        self.terms = terms;
        Ok(done)
    }

    fn tail(&mut self, spec: &AnalysisSpec) -> Step {
        let AnalysisSpec::Tail {
            n_max,
            radius_cap,
            vanish,
            singular,
            elements,
            expect,
            expect_period,
            expect_gcd,
        } = spec
        else {
            unreachable!()
        };
        let env = &self.prep.env;
        let elements = self.elements(elements)?;
        let steps = env.measures_along(&self.state, *n_max);
        let mut dropped: f64 = 0.0;
        let stream = env.stream(&self.state, 0.0).with_budget(self.budget).inspect(|t| {
            if let Ok(t) = t {
                dropped = dropped.max(t.dropped_mass());
            }
        });
        let thresholds = TailThresholds {
            vanish: *vanish,
            singular: *singular,
        };
        let report = tail_analysis(stream, &steps, &elements, *n_max, *radius_cap, thresholds)?;
        let mut done = Done::new();
        done.dropped_mass = dropped;
        done.check("delta_monotone", report.all_monotone());
        for (g, want) in expect {
            let key = self.prep.group.parse_element(g)?.to_string();
            done.check(format!("delta[{key}]"), report.verdicts.get(&key) == Some(want));
        }
        if let Some(p) = expect_period {
            done.check("period", report.period.period == *p);
        }
        if let Some(g) = expect_gcd {
            done.check("g_gcd", report.g_gcd == Some(*g));
        }
        self.json(&mut done, "tail.json", &report)?;
        let rows = report
            .delta_profiles
            .iter()
            .flat_map(|(g, prof)| {
                prof.iter()
                    .map(move |(n, d)| vec![g.clone(), n.to_string(), d.to_string()])
            })
            .collect();
        self.csv(&mut done, "delta.csv", &["element", "n", "delta"], rows)?;
        Ok(done)
    }

    fn invariance(&mut self, spec: &AnalysisSpec) -> Step {
        let AnalysisSpec::Invariance {
            checkpoints,
            threshold,
            elements,
            min_factor,
        } = spec
        else {
            unreachable!()
        };
        let elements = match elements {
            Some(_) => self.elements(elements)?,
            None => self.prep.group.generators().to_vec(),
        };
        let report = invariance_decay(&self.prep.env, &self.state, &elements, checkpoints, *threshold, 0.0)?;
        let mut done = Done::new();
        done.check("decay", report.pass());
        if let Some(f) = min_factor {
            done.check("factor", report.rows.iter().all(|r| r.factor >= *f));
        }
        self.json(&mut done, "invariance.json", &report)?;
        let rows = report
            .rows
            .iter()
            .flat_map(|r| {
                r.values
                    .iter()
                    .map(move |(n, v)| vec![r.element.clone(), n.to_string(), v.to_string()])
            })
            .collect();
        self.csv(&mut done, "invariance.csv", &["element", "n", "tv"], rows)?;
        Ok(done)
    }

    fn ensemble(&mut self, spec: &AnalysisSpec) -> Step {
        let AnalysisSpec::Ensemble { n, paths, mode } = spec else {
            unreachable!()
        };
        let env = &self.prep.env;
        let seed = self.seed_for("ensemble");
        let group = &self.prep.group;
        let keep = |i: usize, p: &PathSample| -> Result<(Option<PathSample>, f64), Error> {
            let len = group.word_length(p.terminal())?.value as f64;
            Ok(((i < PERSIST_CAP).then(|| p.clone()), len / *n as f64))
        };
        let rows = match mode {
            SamplingMode::Quenched => map_paths_at(env, &self.state, *n, *paths, seed, keep),
            SamplingMode::Annealed => map_paths(env, *n, *paths, seed, SamplingMode::Annealed, keep),
        }
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
        let rates: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let kept: Vec<PathSample> = rows.into_iter().filter_map(|r| r.0).collect();
        let mut done = Done::new();
        write_paths_csv(kept.iter().enumerate(), self.create(&mut done, "ensemble.csv")?)?;
        let summary = EnsembleArtifact {
            seed,
            mode: *mode,
            length: *n,
            paths: *paths,
            persisted: kept.len(),
            env_state: (*mode == SamplingMode::Quenched).then_some(self.state),
            terminal_rate: MeanEstimate::from_samples(&rates),
        };
        self.json(&mut done, "ensemble.json", &summary)?;
        Ok(done)
    }

    fn escape(&mut self, spec: &AnalysisSpec) -> Step {
        let AnalysisSpec::Escape {
            n,
            paths,
            mode,
            expect_l,
        } = spec
        else {
            unreachable!()
        };
        let seed = self.seed_for("escape");
        let report = match mode {
            SamplingMode::Quenched => rate_of_escape_at(&self.prep.env, &self.state, *n, *paths, seed)?,
            SamplingMode::Annealed => rate_of_escape(&self.prep.env, *n, *paths, seed, SamplingMode::Annealed)?,
        };
        let mut done = Done::new();
        if let Some(ok) = in_range(report.rate.mean, expect_l) {
            done.check("l_in_range", ok);
        }
        self.json(&mut done, "escape.json", &report)?;
        self.escape = Some(report);
        Ok(done)
    }

    fn boundary(&mut self, spec: &AnalysisSpec) -> Step {
        let AnalysisSpec::Boundary {
            n,
            paths,
            l,
            depth,
            min_stabilized,
            residual_paths,
            residual_n,
            max_residual,
        } = spec
        else {
            unreachable!()
        };
        let env = &self.prep.env;
        let l = self.escape_rate(*l)?;
        let seed = self.seed_for("boundary");
        let refine = self.step_radius()?;
        let (report, histogram) =
            boundary_with_histogram_streaming(env, &self.state, *n, *paths, seed, l, *depth, refine)?;
        let mut done = Done::new();
        done.check("stabilized", report.stabilized_fraction >= *min_stabilized);
        done.check("deviation_decreasing", report.deviation_decreasing());
        let residual = match residual_paths {
            Some(count) => {
                let seed = self.seed_for("residual");
                let next = env.step(&self.state);
                let nu = hitting_measure_streaming(
                    env,
                    &self.state,
                    *residual_n,
                    *count,
                    derive_seed(seed, 0),
                    l,
                    *depth,
                    refine,
                )?;
                let nu_next = hitting_measure_streaming(
                    env,
                    &next,
                    *residual_n,
                    *count,
                    derive_seed(seed, 1),
                    l,
                    *depth,
                    refine,
                )?;
                let r = stationarity_residual(&nu, &nu_next, env.measure_at(&self.state))?;
                done.check("stationarity_residual", r <= *max_residual);
                Some(r)
            }
            None => None,
        };
        self.json(
            &mut done,
            "boundary.json",
            &BoundaryArtifact {
                report: &report,
                hitting_depth: *depth,
                hitting_refine: refine,
                hitting_excluded: histogram.excluded,
                stationarity_residual: residual,
            },
        )?;
        report.write_deviation_csv(self.create(&mut done, "deviation.csv")?)?;
        histogram.write_csv(self.create(&mut done, "hitting.csv")?)?;
        Ok(done)
    }

    /// Largest word length among step supports.
    fn step_radius(&self) -> Result<usize, Error> {
        let group = &self.prep.group;
        let mut r = 0;
        for mu in self.prep.env.table() {
            for g in mu.support() {
                r = r.max(group.word_length(g)?.value as usize);
            }
        }
        Ok(r)
    }

    fn inequality(&mut self) -> Step {
        let missing = |what: &str| Error::Precondition(format!("the {what} analysis did not complete"));
        let h = self.entropy.ok_or_else(|| missing("entropy"))?;
        let escape = self.escape.as_ref().ok_or_else(|| missing("escape"))?;
        let growth = self.growth.as_ref().ok_or_else(|| missing("growth"))?;
        let verdict = fundamental_inequality(h, escape, growth);
        let mut done = Done::new();
        done.check("h_le_lv", verdict.pass);
        self.json(&mut done, "inequality.json", &verdict)?;
        Ok(done)
    }

    fn conditional(&mut self, spec: &AnalysisSpec) -> Step {
        let AnalysisSpec::Conditional {
            depths,
            n,
            horizon,
            paths,
            max_ratio,
        } = spec
        else {
            unreachable!()
        };
        let env = &self.prep.env;
        let seed = self.seed_for("conditional");
        let terms = self.terms(*n)?;
        let reports = depths
            .iter()
            .map(|&d| {
                conditional_entropy(
                    env,
                    &self.state,
                    &terms,
                    d,
                    *n,
                    *horizon,
                    *paths,
                    derive_seed(seed, d as u64),
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        let smb = smb_estimate_streaming(env, &self.state, &terms, *n, *paths, self.seed_for("conditional-smb"))?;
        let reference = self.entropy.unwrap_or(smb.log_corrected);

        let mut done = Done::new();
        done.dropped_mass = terms.iter().map(SparseMeasure::dropped_mass).fold(0.0, f64::max);
        let non_increasing = reports.windows(2).all(|w| {
            w[1].weighted_mean
                <= w[0].weighted_mean + 2.0 * combined_se(w[0].weighted_std_error, w[1].weighted_std_error)
        });
        done.check("non_increasing", non_increasing);
        if let Some(r0) = reports.iter().find(|r| r.depth == 0) {
            let se = combined_se(r0.weighted_std_error, smb.raw.std_error);
            done.check(
                "depth0_matches_smb",
                (r0.weighted_mean - smb.raw.mean).abs() <= 2.0 * se,
            );
        }
        if let (Some(ratio), Some(deepest)) = (max_ratio, reports.iter().max_by_key(|r| r.depth)) {
            done.check("deepest_ratio", deepest.weighted_mean <= ratio * reference.mean);
        }
        self.json(
            &mut done,
            "conditional.json",
            &ConditionalArtifact {
                reports: &reports,
                smb_raw: smb.raw,
                reference,
            },
        )?;
        let rows = reports
            .iter()
            .flat_map(|r| {
                r.cylinders.iter().map(move |c| {
                    vec![
                        r.depth.to_string(),
                        c.prefix.clone(),
                        c.weight.to_string(),
                        c.estimate.mean.to_string(),
                        c.estimate.std_error.to_string(),
                    ]
                })
            })
            .collect();
        self.csv(
            &mut done,
            "conditional.csv",
            &["depth", "cylinder", "weight", "mean", "std_error"],
            rows,
        )?;
        Ok(done)
    }
}

#[derive(Serialize)]
struct EntropyArtifact<'a> {
    report: &'a EntropyReport,
    orbit: Option<&'a OrbitEntropy>,
    /// SMB log-corrected estimate used downstream.
    headline: MeanEstimate,
    /// Profile slope compared against the headline.
    slope: MeanEstimate,
    trivial_threshold: f64,
    trivial: bool,
}

#[derive(Serialize)]
struct EnsembleArtifact {
    seed: u64,
    mode: SamplingMode,
    length: usize,
    paths: usize,
    persisted: usize,
    env_state: Option<EnvState>,
    /// `|x_n| / n` over all paths.
    terminal_rate: MeanEstimate,
}

#[derive(Serialize)]
struct BoundaryArtifact<'a> {
    report: &'a groupwalk::boundary::BoundaryReport,
    hitting_depth: usize,
    hitting_refine: usize,
    hitting_excluded: usize,
    stationarity_residual: Option<f64>,
}

#[derive(Serialize)]
struct ConditionalArtifact<'a> {
    reports: &'a [groupwalk::entropy::ConditionalEntropyReport],
    smb_raw: MeanEstimate,
    reference: MeanEstimate,
}

/// Validates `config`, runs its analyses into `opts.out_dir` and writes
/// `manifest.json` there.
pub fn run_experiment(
    config: &ExperimentConfig,
    base_dir: &Path,
    opts: &RunOptions,
) -> Result<ExperimentManifest, RunError> {
    let mut config = config.clone();
    if let Some(seed) = opts.seed {
        config.seed = Some(seed);
    }
    let prep = config.prepare(base_dir).map_err(RunError::Invalid)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = opts.workers {
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| RunError::Pool(e.to_string()))?;
    pool.install(|| execute(&prep, base_dir, opts))
}

fn execute(prep: &Prepared, base_dir: &Path, opts: &RunOptions) -> Result<ExperimentManifest, RunError> {
    std::fs::create_dir_all(&opts.out_dir)?;
    let started_at = now();
    let state = run_state(prep);
    let mut ctx = Context {
        prep,
        state,
        budget: opts.budget_atoms.unwrap_or(DEFAULT_SUPPORT_BUDGET),
        out: &opts.out_dir,
        growth: None,
        entropy: None,
        terms: Vec::new(),
        escape: None,
    };
    let mut order: Vec<&AnalysisSpec> = prep
        .config
        .analyses
        .iter()
        .filter(|a| !opts.ensembles_only || matches!(a, AnalysisSpec::Ensemble { .. }))
        .collect();
    order.sort_by_key(|a| a.stage());
    let mut analyses = Vec::with_capacity(order.len());
    for spec in order {
        let outcome = match ctx.run(spec) {
            Ok(done) => AnalysisOutcome {
                kind: spec.name().to_string(),
                status: AnalysisStatus::Completed,
                verdicts: done.verdicts,
                artifacts: done.artifacts,
                dropped_mass: done.dropped_mass,
                message: None,
            },
            Err(e) => AnalysisOutcome {
                kind: spec.name().to_string(),
                status: if e.is_budget() {
                    AnalysisStatus::BudgetAborted
                } else {
                    AnalysisStatus::Error
                },
                verdicts: BTreeMap::new(),
                artifacts: Vec::new(),
                dropped_mass: 0.0,
                message: Some(e.to_string()),
            },
        };
        analyses.push(outcome);
    }
    let mut artifacts = BTreeMap::new();
    for name in analyses.iter().flat_map(|a| &a.artifacts) {
        artifacts.insert(name.clone(), sha256_file(&opts.out_dir.join(name))?);
    }
    let config_json = prep.config.to_json();
    let manifest = ExperimentManifest {
        config_sha256: sha256_hex(config_json.as_bytes()),
        config: prep.config.clone(),
        config_dir: Some(base_dir.to_path_buf()),
        seed: prep.seed,
        rng_algorithm: RNG_ALGORITHM.to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        workers: rayon::current_num_threads(),
        budget_atoms: ctx.budget,
        environment_state: state,
        started_at,
        finished_at: now(),
        dropped_mass_total: analyses.iter().map(|a| a.dropped_mass).sum(),
        analyses,
        artifacts,
    };
    let mut w = BufWriter::new(File::create(opts.out_dir.join("manifest.json"))?);
    serde_json::to_writer_pretty(&mut w, &manifest).map_err(std::io::Error::from)?;
    writeln!(w)?;
    w.flush()?;
    Ok(manifest)
}

/// Artifact whose bytes differ between a manifest and its replay.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mismatch {
    pub artifact: String,
    pub expected: String,
    pub found: Option<String>,
}

#[derive(Debug)]
pub struct ReplayOutcome {
    pub manifest: ExperimentManifest,
    /// Artifacts compared against the original hashes.
    pub compared: Vec<String>,
    pub mismatches: Vec<Mismatch>,
}

impl ReplayOutcome {
    pub fn identical(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Re-runs a manifest's configuration with its seed and worker count into
/// `opts.out_dir` and compares artifact hashes. With `ensembles_only`, only
/// ensemble analyses are re-run and compared.
pub fn replay(original: &ExperimentManifest, opts: &RunOptions) -> Result<ReplayOutcome, RunError> {
    let opts = RunOptions {
        seed: Some(original.seed),
        workers: opts.workers.or(Some(original.workers)),
        budget_atoms: opts.budget_atoms.or(Some(original.budget_atoms)),
        ..opts.clone()
    };
    let base_dir = original.config_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    let manifest = run_experiment(&original.config, &base_dir, &opts)?;
    let compared: Vec<String> = if opts.ensembles_only {
        original.ensemble_artifacts().into_iter().map(String::from).collect()
    } else {
        original.artifacts.keys().cloned().collect()
    };
    let mismatches = compared
        .iter()
        .filter_map(|name| {
            let expected = original.artifacts.get(name)?;
            let found = manifest.artifacts.get(name);
            (found != Some(expected)).then(|| Mismatch {
                artifact: name.clone(),
                expected: expected.clone(),
                found: found.cloned(),
            })
        })
        .collect();
    Ok(ReplayOutcome {
        manifest,
        compared,
        mismatches,
    })
}
