//! Tail-side analysis of a convolution stream: translation defects
//! `Δ_n(g) = ‖gμ_{0,n} − μ_{0,n}‖`, the overlap set `G_n`, and periods
//! through the abelianization.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::group::{GroupElement, GroupKind, GroupModel};
use crate::measure::SparseMeasure;

/// Largest modulus tried by period detection.
pub const MAX_PERIOD: u64 = 12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailThresholds {
    /// Final Δ below this is read as "→ 0".
    pub vanish: f64,
    /// Final Δ above this is read as "→ 2".
    pub singular: f64,
}

impl Default for TailThresholds {
    fn default() -> Self {
        TailThresholds {
            vanish: 0.1,
            singular: 1.9,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaVerdict {
    ToZero,
    ToTwo,
    Undecided,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodReport {
    /// Largest `d ≤ MAX_PERIOD` with a homomorphism to `ℤ_d` sending every
    /// step to 1; 1 when there is none.
    pub period: u64,
    /// Coefficients `c` of the homomorphism `x ↦ ⟨c, ab(x)⟩ mod d`.
    pub homomorphism: Vec<u64>,
    /// Every modulus up to `MAX_PERIOD` worked, so the true period may be
    /// larger (or the walk is deterministic in the abelianization).
    pub saturated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    /// Per test element, `(n, Δ_n)` with `n` the stream index.
    pub delta_profiles: BTreeMap<String, Vec<(usize, f64)>>,
    pub verdicts: BTreeMap<String, DeltaVerdict>,
    /// Whether each profile is non-increasing within 1e-12.
    pub monotone: BTreeMap<String, bool>,
    /// Elements `g ≠ e` within the radius cap with `supp(gμ) ∩ supp(μ) ≠ ∅`
    /// at the last stream term.
    pub g_elements: Vec<String>,
    pub g_radius_cap: u32,
    /// Gcd of the abelianized `G_n` elements when the abelianization has
    /// rank 1.
    pub g_gcd: Option<i64>,
    pub period: PeriodReport,
    pub thresholds: TailThresholds,
}

impl TailReport {
    pub fn all_monotone(&self) -> bool {
        self.monotone.values().all(|m| *m)
    }
}

/// Generators and their pairwise products, identity removed.
pub fn default_test_elements(group: &GroupModel) -> Vec<GroupElement> {
    let gens = group.generators();
    let mut out: Vec<GroupElement> = gens.to_vec();
    for a in gens {
        for b in gens {
            out.push(group.mul_unchecked(a, b));
        }
    }
    out.sort();
    out.dedup();
    out.retain(|g| *g != group.identity());
    out
}

/// Elements `g ≠ e` with `|g| ≤ cap` and `gμ` not singular to `μ`.
pub fn g_generators(mu: &SparseMeasure, cap: u32) -> Result<Vec<GroupElement>> {
    let group = mu.model();
    let ball = group.ball(cap)?;
    let identity = group.identity();
    Ok(ball
        .elements
        .into_iter()
        .map(|(g, _)| g)
        .filter(|g| *g != identity)
        .filter(|g| mu.support().any(|x| mu.contains(&group.mul_unchecked(g, x))))
        .collect())
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Period of the step sequence through homomorphisms `G → ℤ_d` that factor
/// through the abelianization.
pub fn detect_period(group: &GroupModel, steps: &[&SparseMeasure]) -> PeriodReport {
    let mut points: Vec<Vec<i64>> = steps
        .iter()
        .flat_map(|m| m.support().map(|g| group.abelianize(g)))
        .collect();
    points.sort();
    points.dedup();
    let rank = points.first().map_or(0, |p| p.len());
    let allowed = |d: u64| match group.kind() {
        GroupKind::CyclicQuotient { modulus } => modulus % d == 0,
        _ => true,
    };
    let works = |d: u64| -> Option<Vec<u64>> {
        let total = d.checked_pow(rank as u32)?;
        (0..total).find_map(|code| {
            let c: Vec<u64> = (0..rank).map(|i| code / d.pow(i as u32) % d).collect();
            points
                .iter()
                .all(|p| {
                    let v: i64 = p.iter().zip(&c).map(|(x, ci)| x * *ci as i64).sum();
                    v.rem_euclid(d as i64) == 1 % d as i64
                })
                .then_some(c)
        })
    };
    let largest = (2..=MAX_PERIOD).filter(|&d| allowed(d)).max();
    let found = (2..=MAX_PERIOD)
        .rev()
        .filter(|&d| allowed(d))
        .find_map(|d| works(d).map(|c| (d, c)));
    match found {
        Some((d, c)) => PeriodReport {
            period: d,
            homomorphism: c,
            saturated: Some(d) == largest,
        },
        None => PeriodReport {
            period: 1,
            homomorphism: vec![0; rank],
            saturated: false,
        },
    }
}

/// Δ-profiles for `test_elements`, the overlap set at the last term and the
/// period of `steps` (the step measures `μ_0, …, μ_{n_max−1}`).
pub fn tail_analysis<I>(
    stream: I,
    steps: &[&SparseMeasure],
    test_elements: &[GroupElement],
    n_max: usize,
    radius_cap: u32,
    thresholds: TailThresholds,
) -> Result<TailReport>
where
    I: IntoIterator<Item = Result<SparseMeasure>>,
{
    let mut profiles: Vec<Vec<(usize, f64)>> = vec![Vec::with_capacity(n_max); test_elements.len()];
    let mut last: Option<SparseMeasure> = None;
    for (n, term) in stream.into_iter().take(n_max).enumerate() {
        let term = term?;
        for (g, prof) in test_elements.iter().zip(&mut profiles) {
            prof.push((n, term.translation_defect(g)?));
        }
        last = Some(term);
    }
    let last = last.ok_or_else(|| Error::InvalidArgument("empty stream".into()))?;
    let group = last.model().clone();

    let mut delta_profiles = BTreeMap::new();
    let mut verdicts = BTreeMap::new();
    let mut monotone = BTreeMap::new();
    for (g, prof) in test_elements.iter().zip(profiles) {
        let key = g.to_string();
        let final_value = prof.last().map_or(f64::NAN, |p| p.1);
        let verdict = if final_value < thresholds.vanish {
            DeltaVerdict::ToZero
        } else if final_value > thresholds.singular {
            DeltaVerdict::ToTwo
        } else {
            DeltaVerdict::Undecided
        };
        monotone.insert(key.clone(), prof.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-12));
        verdicts.insert(key.clone(), verdict);
        delta_profiles.insert(key, prof);
    }

    let g_set = g_generators(&last, radius_cap)?;
    let g_gcd = (group.kind().abelian_rank() == 1 && !matches!(group.kind(), GroupKind::CyclicQuotient { .. }))
        .then(|| g_set.iter().map(|g| group.abelianize(g)[0]).fold(0, gcd));
    Ok(TailReport {
        delta_profiles,
        verdicts,
        monotone,
        g_elements: g_set.iter().map(|g| g.to_string()).collect(),
        g_radius_cap: radius_cap,
        g_gcd,
        period: detect_period(&group, steps),
        thresholds,
    })
}
