//! Acceptance checks over the core kernels and the bundled configurations.
//! Prints one PASS/FAIL line per criterion and exits non-zero if any fails.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use groupwalk::measure::random_measure;
use groupwalk::stats::combined_se;
use groupwalk::{EnvironmentModel, GroupElement, GroupModel, SparseMeasure};
use groupwalk_harness::{bundled, replay, run_experiment, ExperimentManifest, RunOptions};

type Outcome = Result<String, String>;
type Check = Box<dyn FnOnce(&mut Runs) -> Outcome>;

struct Runs {
    root: PathBuf,
    done: BTreeMap<String, ExperimentManifest>,
}

impl Runs {
    fn dir(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Runs a bundled configuration once, optionally with another seed.
    fn get(&mut self, name: &str, seed: Option<u64>) -> Result<(ExperimentManifest, PathBuf, Duration), String> {
        let key = match seed {
            Some(s) => format!("{name}-seed{s}"),
            None => name.to_string(),
        };
        let out = self.dir(&key);
        if let Some(m) = self.done.get(&key) {
            return Ok((m.clone(), out, Duration::ZERO));
        }
        let config = bundled::load(name).ok_or_else(|| format!("no bundled config {name}"))?;
        let opts = RunOptions {
            out_dir: out.clone(),
            seed,
            ..RunOptions::default()
        };
        let start = Instant::now();
        let m = run_experiment(&config, Path::new("."), &opts).map_err(|e| format!("{name}: {e}"))?;
        let elapsed = start.elapsed();
        self.done.insert(key, m.clone());
        Ok((m, out, elapsed))
    }
}

fn read_json(path: &Path) -> Result<Value, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn num(v: &Value, path: &[&str]) -> Result<f64, String> {
    let mut cur = v;
    for key in path {
        cur = cur.get(key).ok_or_else(|| format!("missing {}", path.join(".")))?;
    }
    cur.as_f64()
        .ok_or_else(|| format!("{} is not a number", path.join(".")))
}

fn verdict(m: &ExperimentManifest, kind: &str, name: &str) -> Result<bool, String> {
    let a = m
        .analyses
        .iter()
        .find(|a| a.kind == kind)
        .ok_or_else(|| format!("no {kind} analysis"))?;
    if let Some(msg) = &a.message {
        return Err(format!("{kind}: {msg}"));
    }
    a.verdicts
        .get(name)
        .copied()
        .ok_or_else(|| format!("{kind} has no verdict {name}"))
}

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn brute_convolution(group: &GroupModel, a: &SparseMeasure, b: &SparseMeasure) -> HashMap<GroupElement, f64> {
    let mut out: HashMap<GroupElement, f64> = HashMap::new();
    for (g, p) in a.iter() {
        for (h, q) in b.iter() {
            *out.entry(group.mul_unchecked(g, h)).or_default() += p * q;
        }
    }
    out
}

fn convolution_oracle() -> Outcome {
    let start = Instant::now();
    let groups = [
        Arc::new(GroupModel::free_group(2)),
        Arc::new(GroupModel::integer_lattice(2)),
        Arc::new(GroupModel::heisenberg()),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0417);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let group = &groups[i % groups.len()];
        let a = random_measure(group, rng.gen_range(1..=50), rng.gen_range(0..=6), &mut rng);
        let b = random_measure(group, rng.gen_range(1..=50), rng.gen_range(0..=6), &mut rng);
        let fast = a.convolve(&b).map_err(|e| e.to_string())?;
        let slow = brute_convolution(group, &a, &b);
        if fast.support_len() != slow.len() {
            return Err(format!("pair {i}: support {} vs {}", fast.support_len(), slow.len()));
        }
        for (g, p) in fast.iter() {
            let q = slow.get(g).ok_or_else(|| format!("pair {i}: extra atom {g}"))?;
            worst = worst.max((p - q).abs());
        }
    }
    let elapsed = start.elapsed();
    ensure(
        worst <= 1e-12 && elapsed < Duration::from_secs(10),
        format!("1000 pairs, max atom error {worst:.1e}, {:.2} s", elapsed.as_secs_f64()),
    )
}

fn frozen_regression() -> Outcome {
    let group = Arc::new(GroupModel::integer_lattice(1));
    let one = group.parse_element("(1)").map_err(|e| e.to_string())?;
    let minus = group.parse_element("(-1)").map_err(|e| e.to_string())?;
    let mu =
        SparseMeasure::new(group.clone(), [(one.clone(), 0.5), (minus.clone(), 0.5)]).map_err(|e| e.to_string())?;
    let env = EnvironmentModel::frozen(mu);
    let terms = env
        .convolution_stream(&env.sample_initial(0), 10, 0.0)
        .map_err(|e| e.to_string())?;
    for n in 1..=10usize {
        let mut law: HashMap<GroupElement, f64> = HashMap::new();
        for bits in 0..1u32 << n {
            let mut x = group.identity();
            for k in 0..n {
                x = group.mul_unchecked(&x, if bits >> k & 1 == 1 { &one } else { &minus });
            }
            *law.entry(x).or_default() += 0.5f64.powi(n as i32);
        }
        let term = &terms[n - 1];
        if term.support_len() != law.len() || term.iter().any(|(g, p)| law.get(g) != Some(&p)) {
            return Err(format!("{n}-step law differs from path enumeration"));
        }
    }
    Ok("n = 1..10 atom-exact against 2^n path enumeration".into())
}

fn delta_rows(dir: &Path, element: &str) -> Result<Vec<f64>, String> {
    let mut r = csv_reader(&dir.join("delta.csv"))?;
    let mut out = Vec::new();
    for row in r.records() {
        let row = row.map_err(|e| e.to_string())?;
        if &row[0] == element {
            out.push(row[2].parse::<f64>().map_err(|e| e.to_string())?);
        }
    }
    Ok(out)
}

fn csv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>, String> {
    csv::Reader::from_path(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn delta_dichotomy(runs: &mut Runs) -> Outcome {
    let (_, parity_dir, t1) = runs.get("z-parity", None)?;
    let (_, lazy_dir, t2) = runs.get("z-lazy", None)?;
    let parity = delta_rows(&parity_dir, "(1)")?;
    let tail = read_json(&parity_dir.join("tail.json"))?;
    let period = num(&tail, &["period", "period"])?;
    let gcd = num(&tail, &["g_gcd"])?;
    let lazy = delta_rows(&lazy_dir, "(1)")?;
    let all_two = parity.len() == 201 && parity.iter().all(|d| (d - 2.0).abs() <= 1e-12);
    let lazy_ok = lazy.windows(2).all(|w| w[1] <= w[0] + 1e-12) && lazy.len() == 201 && lazy[200] < 0.1;
    let elapsed = t1 + t2;
    ensure(
        all_two && period == 2.0 && gcd == 2.0 && lazy_ok && elapsed < Duration::from_secs(60),
        format!(
            "parity Δ_n(1) = 2 for n ≤ 200: {all_two}, period {period}, G_n gcd {gcd}; lazy Δ_200(1) = {:.4}, non-increasing: {lazy_ok}; {:.1} s",
            lazy.last().copied().unwrap_or(f64::NAN),
            elapsed.as_secs_f64()
        ),
    )
}

fn entropy_consistency(runs: &mut Runs) -> Outcome {
    let (m, dir, _) = runs.get("z-lazy", None)?;
    let e = read_json(&dir.join("entropy.json"))?;
    let h1 = num(&e, &["report", "h_k", "1", "value"])?;
    let slope = num(&e, &["slope", "mean"])?;
    let trivial = e["trivial"].as_bool() == Some(true);
    let tail_zero = verdict(&m, "tail", "delta[(1)]")?;
    ensure(
        h1 < 0.01 && slope <= 0.05 && trivial && tail_zero,
        format!("h_1 = {h1:.5}, slope = {slope:.4}, entropy trivial {trivial}, Δ(1) → 0 {tail_zero}"),
    )
}

fn cross_estimator(runs: &mut Runs) -> Outcome {
    let start = Instant::now();
    let (srw, srw_dir, _) = runs.get("f2-srw", None)?;
    let (markov, markov_dir, _) = runs.get("f2-markov-env", None)?;
    let e = read_json(&srw_dir.join("entropy.json"))?;
    let slope = num(&e, &["slope", "mean"])?;
    let smb = num(&e, &["headline", "mean"])?;
    let in_band = (0.5..=0.6).contains(&slope) && (0.5..=0.6).contains(&smb);
    let agree_srw = verdict(&srw, "entropy", "slope_smb_agree")?;
    let agree_markov = verdict(&markov, "entropy", "slope_smb_agree")?;
    let m = read_json(&markov_dir.join("entropy.json"))?;
    ensure(
        in_band && agree_srw && agree_markov && start.elapsed() < Duration::from_secs(300),
        format!(
            "F2 SRW slope {slope:.4}, SMB {smb:.4} ± {:.4}; markov slope {:.4} ± {:.4}, SMB {:.4} ± {:.4}",
            num(&e, &["headline", "std_error"])?,
            num(&m, &["slope", "mean"])?,
            num(&m, &["slope", "std_error"])?,
            num(&m, &["headline", "mean"])?,
            num(&m, &["headline", "std_error"])?,
        ),
    )
}

fn constancy(runs: &mut Runs) -> Outcome {
    let (_, a, _) = runs.get("f2-markov-env", Some(101))?;
    let (_, b, _) = runs.get("f2-markov-env", Some(202))?;
    let a = read_json(&a.join("entropy.json"))?;
    let b = read_json(&b.join("entropy.json"))?;
    let (ha, sa) = (num(&a, &["headline", "mean"])?, num(&a, &["headline", "std_error"])?);
    let (hb, sb) = (num(&b, &["headline", "mean"])?, num(&b, &["headline", "std_error"])?);
    let se = combined_se(sa, sb);
    ensure(
        (ha - hb).abs() <= 3.0 * se,
        format!(
            "ω seeds 101/202: {ha:.4} vs {hb:.4}, |diff| = {:.4}, 3 SE = {:.4}",
            (ha - hb).abs(),
            3.0 * se
        ),
    )
}

fn fundamental_inequality(runs: &mut Runs) -> Outcome {
    let (_, dir, _) = runs.get("f2-srw", None)?;
    let escape = read_json(&dir.join("escape.json"))?;
    let growth = read_json(&dir.join("growth.json"))?;
    let ineq = read_json(&dir.join("inequality.json"))?;
    let l = num(&escape, &["rate", "mean"])?;
    let paths = num(&escape, &["paths"])?;
    let n = num(&escape, &["n"])?;
    let v = num(&growth, &["v_log_corrected"])?;
    let t_max = num(&growth, &["t_max"])?;
    let rel = num(&ineq, &["relative_slack"])?;
    let pass = ineq["pass"].as_bool() == Some(true);
    let ok = (l - 0.5).abs() <= 0.02
        && (v - 3f64.ln()).abs() <= 0.01
        && pass
        && rel < 0.1
        && paths == 1e4
        && n == 1000.0
        && t_max == 12.0;
    ensure(
        ok,
        format!("l = {l:.4} ({paths} paths, n = {n}), v = {v:.4} (t ≤ {t_max}), h ≤ lv + 3 SE: {pass}, relative slack {rel:.4}"),
    )
}

fn nilpotent(runs: &mut Runs) -> Outcome {
    let (m, dir, elapsed) = runs.get("heis-nilpotent", None)?;
    let growth = read_json(&dir.join("growth.json"))?;
    let degree = num(&growth, &["degree"])?;
    let e = read_json(&dir.join("entropy.json"))?;
    let profile: Vec<f64> = e["report"]["profile"]
        .as_array()
        .ok_or("missing profile")?
        .iter()
        .map(|p| p["entropy"].as_f64().unwrap_or(f64::NAN))
        .collect();
    let diffs: Vec<f64> = profile.windows(2).map(|w| w[1] - w[0]).collect();
    let last = *diffs.last().ok_or("empty profile")?;
    let decreasing = diffs.windows(2).all(|w| w[1] < w[0]);
    let inv = read_json(&dir.join("invariance.json"))?;
    let rows = inv["rows"].as_array().ok_or("missing rows")?;
    let factors: Vec<f64> = rows.iter().map(|r| r["factor"].as_f64().unwrap_or(0.0)).collect();
    let inv_ok = rows.len() == 2
        && rows.iter().all(|r| r["decreasing"].as_bool() == Some(true))
        && factors.iter().all(|f| *f >= 1.5);
    let budget_ok = m.budget_atoms <= 5_000_000 && m.analyses.iter().all(|a| a.message.is_none());
    ensure(
        (3.5..=4.5).contains(&degree) && last < 0.15 && decreasing && inv_ok && budget_ok && elapsed < Duration::from_secs(600),
        format!(
            "degree {degree:.3}, first difference at n = 30 {last:.4} (decreasing {decreasing}), tv factors 10→30 {factors:.3?}; {:.1} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn boundary_convergence(runs: &mut Runs) -> Outcome {
    let (_, dir, _) = runs.get("f2-srw", None)?;
    let b = read_json(&dir.join("boundary.json"))?;
    let frac = num(&b, &["report", "stabilized_fraction"])?;
    let paths = num(&b, &["report", "paths"])?;
    let n = num(&b, &["report", "n"])?;
    let mut medians = BTreeMap::new();
    for d in b["report"]["deviations"].as_array().ok_or("missing deviations")? {
        medians.insert(d["n"].as_u64().unwrap_or(0), d["median"].as_f64().unwrap_or(f64::NAN));
    }
    let picked: Vec<f64> = [250, 500, 1000]
        .iter()
        .filter_map(|k| medians.get(k).copied())
        .collect();
    let decreasing = picked.len() == 3 && picked.windows(2).all(|w| w[1] < w[0]);
    ensure(
        frac >= 0.99 && decreasing && paths == 1e4 && n == 1000.0,
        format!("stabilized {frac:.4} of {paths} paths, median deviation at 250/500/1000: {picked:.4?}"),
    )
}

fn hitting_stationarity(runs: &mut Runs) -> Outcome {
    let (_, srw_dir, _) = runs.get("f2-srw", None)?;
    let (_, per_dir, _) = runs.get("f2-periodic", None)?;
    let mut r = csv_reader(&srw_dir.join("hitting.csv"))?;
    let mut d1: BTreeMap<char, f64> = BTreeMap::new();
    let mut d2_err: f64 = 0.0;
    let mut cylinders = 0;
    for row in r.records() {
        let row = row.map_err(|e| e.to_string())?;
        let mass: f64 = row[2].parse().map_err(|e: std::num::ParseFloatError| e.to_string())?;
        let first = row[0].chars().next().ok_or("empty cylinder")?;
        *d1.entry(first).or_default() += mass;
        d2_err = d2_err.max((mass - 1.0 / 12.0).abs());
        cylinders += 1;
    }
    let d1_err = d1.values().map(|m| (m - 0.25).abs()).fold(0.0, f64::max);
    let b = read_json(&per_dir.join("boundary.json"))?;
    let residual = num(&b, &["stationarity_residual"])?;
    let config = bundled::load("f2-periodic").ok_or("missing f2-periodic")?;
    let residual_paths = config
        .analyses
        .iter()
        .find_map(|a| match a {
            groupwalk_harness::AnalysisSpec::Boundary { residual_paths, .. } => *residual_paths,
            _ => None,
        })
        .unwrap_or(0);
    ensure(
        d1.len() == 4 && cylinders == 12 && d1_err <= 0.02 && d2_err <= 0.02 && residual <= 0.03 && residual_paths >= 100_000,
        format!(
            "depth 1 max |m − 1/4| = {d1_err:.4}, depth 2 max |m − 1/12| = {d2_err:.4}, periodic residual {residual:.4} at {residual_paths} paths"
        ),
    )
}

fn conditional_ledger(runs: &mut Runs) -> Outcome {
    let (m, dir, _) = runs.get("f2-srw", None)?;
    let c = read_json(&dir.join("conditional.json"))?;
    let means: Vec<(u64, f64)> = c["reports"]
        .as_array()
        .ok_or("missing reports")?
        .iter()
        .map(|r| {
            (
                r["depth"].as_u64().unwrap_or(0),
                r["weighted_mean"].as_f64().unwrap_or(f64::NAN),
            )
        })
        .collect();
    let h = num(&c, &["reference", "mean"])?;
    let depth0 = verdict(&m, "conditional", "depth0_matches_smb")?;
    let non_increasing = verdict(&m, "conditional", "non_increasing")?;
    let depths: Vec<u64> = means.iter().map(|d| d.0).collect();
    let d3 = means.iter().find(|d| d.0 == 3).map_or(f64::NAN, |d| d.1);
    ensure(
        depths == [0, 1, 2, 3] && depth0 && non_increasing && d3 <= 0.5 * h,
        format!(
            "means by depth {:.4?}; depth 0 matches SMB: {depth0}; non-increasing: {non_increasing}; depth 3 {d3:.4} vs 0.5·h̄ = {:.4}",
            means.iter().map(|d| d.1).collect::<Vec<_>>(),
            0.5 * h
        ),
    )
}

fn determinism(runs: &mut Runs) -> Outcome {
    let mut compared = 0;
    for name in bundled::names() {
        let (m, _, _) = runs.get(name, None)?;
        let opts = RunOptions {
            out_dir: runs.dir(&format!("{name}-replay")),
            ensembles_only: true,
            ..RunOptions::default()
        };
        let r = replay(&m, &opts).map_err(|e| format!("{name}: {e}"))?;
        if r.compared.is_empty() {
            return Err(format!("{name} has no ensemble CSV"));
        }
        if !r.identical() {
            return Err(format!("{name}: {} differ", r.mismatches.len()));
        }
        compared += r.compared.len();
    }
    Ok(format!(
        "{compared} ensemble CSVs over {} bundled manifests byte-identical",
        bundled::BUNDLED.len()
    ))
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let mut runs = Runs {
        root: tmp.path().to_path_buf(),
        done: BTreeMap::new(),
    };
    let criteria: Vec<(&str, Check)> = vec![
        ("convolution oracle equivalence", Box::new(|_| convolution_oracle())),
        (
            "frozen regression to the classical walk",
            Box::new(|_| frozen_regression()),
        ),
        ("translate-defect dichotomy and period", Box::new(delta_dichotomy)),
        ("triviality verdicts agree", Box::new(entropy_consistency)),
        ("entropy cross-estimator", Box::new(cross_estimator)),
        ("constancy over environments", Box::new(constancy)),
        ("h ≤ l·v on the free group", Box::new(fundamental_inequality)),
        ("nilpotent triviality and invariance", Box::new(nilpotent)),
        ("boundary convergence", Box::new(boundary_convergence)),
        ("hitting measure and stationarity", Box::new(hitting_stationarity)),
        ("conditional entropy over cylinders", Box::new(conditional_ledger)),
        ("replay determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (i, (title, check)) in criteria.into_iter().enumerate() {
        match check(&mut runs) {
            Ok(detail) => println!("PASS {:>2} {title}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {title}: {detail}", i + 1);
            }
        }
    }
    println!("{} passed, {failed} failed", 12 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
