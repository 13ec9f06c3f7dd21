//! Finitely supported probability measures on a catalog group.

mod io;

use rand::Rng;
use rayon::prelude::*;
use rustc_hash::FxHashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::group::{GroupElement, GroupModel};
use crate::stats::CompensatedSum;

/// Default cap on the support size produced by a convolution.
pub const DEFAULT_SUPPORT_BUDGET: usize = 5_000_000;

/// Left-support chunk size for parallel convolution. Fixed so that the
/// summation order, and therefore every output bit, does not depend on the
/// number of workers.
const CONVOLVE_CHUNK: usize = 4096;

/// Tolerance on `Σ masses + dropped_mass = 1`.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// A probability measure with finite support, stored as atoms sorted by
/// element.
#[derive(Clone, Debug)]
pub struct SparseMeasure {
    model: Arc<GroupModel>,
    atoms: Vec<(GroupElement, f64)>,
    dropped_mass: f64,
}

/// First moment `Σ |g| μ(g)`; `approximate` is set when any length came from
/// a gauge instead of the exact word metric.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moment {
    pub value: f64,
    pub approximate: bool,
}

impl SparseMeasure {
    /// Builds a measure from (element, mass) pairs. Duplicate elements are
    /// merged; zero masses are discarded. The total must be 1 within 1e-9 and
    /// is renormalized to 1 exactly.
    pub fn new<I>(model: Arc<GroupModel>, atoms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (GroupElement, f64)>,
    {
        let mut merged: FxHashMap<GroupElement, CompensatedSum> = FxHashMap::default();
        for (g, p) in atoms {
            model.check(&g)?;
            if !(p.is_finite() && p >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "mass {p} at {g} is not a non-negative number"
                )));
            }
            if p > 0.0 {
                merged.entry(g).or_default().add(p);
            }
        }
        let mut atoms: Vec<(GroupElement, f64)> = merged.into_iter().map(|(g, s)| (g, s.value())).collect();
        atoms.sort_by(|a, b| a.0.cmp(&b.0));
        let total: f64 = atoms.iter().map(|a| a.1).sum::<CompensatedSum>().value();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("masses sum to {total}, expected 1")));
        }
        for a in &mut atoms {
            a.1 /= total;
        }
        Ok(SparseMeasure {
            model,
            atoms,
            dropped_mass: 0.0,
        })
    }

    pub fn dirac(model: Arc<GroupModel>, g: GroupElement) -> Result<Self> {
        Self::new(model, [(g, 1.0)])
    }

    /// Uniform measure on the given elements (duplicates collapse).
    pub fn uniform(model: Arc<GroupModel>, elements: &[GroupElement]) -> Result<Self> {
        let mut distinct = elements.to_vec();
        distinct.sort();
        distinct.dedup();
        if distinct.is_empty() {
            return Err(Error::InvalidArgument("uniform measure on an empty set".into()));
        }
        let p = 1.0 / distinct.len() as f64;
        Self::new(model, distinct.into_iter().map(|g| (g, p)))
    }

    /// Uniform measure on the model's generators.
    pub fn simple_random_walk(model: Arc<GroupModel>) -> Self {
        let gens = model.generators().to_vec();
        Self::uniform(model, &gens).expect("generator list is non-empty")
    }

    /// Trusted constructor: atoms already sorted, distinct, positive.
    fn from_sorted(model: Arc<GroupModel>, atoms: Vec<(GroupElement, f64)>, dropped_mass: f64) -> Self {
        debug_assert!(atoms.windows(2).all(|w| w[0].0 < w[1].0));
        SparseMeasure {
            model,
            atoms,
            dropped_mass,
        }
    }

    pub fn model(&self) -> &Arc<GroupModel> {
        &self.model
    }

    pub fn atoms(&self) -> &[(GroupElement, f64)] {
        &self.atoms
    }

    pub fn iter(&self) -> impl Iterator<Item = (&GroupElement, f64)> {
        self.atoms.iter().map(|(g, p)| (g, *p))
    }

    pub fn support_len(&self) -> usize {
        self.atoms.len()
    }

    pub fn support(&self) -> impl Iterator<Item = &GroupElement> {
        self.atoms.iter().map(|a| &a.0)
    }

    pub fn dropped_mass(&self) -> f64 {
        self.dropped_mass
    }

    pub fn is_exact(&self) -> bool {
        self.dropped_mass == 0.0
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum::<CompensatedSum>().value()
    }

    /// Mass at `g`, zero off the support.
    pub fn mass(&self, g: &GroupElement) -> f64 {
        self.atoms
            .binary_search_by(|a| a.0.cmp(g))
            .map_or(0.0, |i| self.atoms[i].1)
    }

    pub fn contains(&self, g: &GroupElement) -> bool {
        self.atoms.binary_search_by(|a| a.0.cmp(g)).is_ok()
    }

    /// Whether `Σ masses + dropped_mass` is 1 within [`MASS_TOLERANCE`].
    pub fn is_normalized(&self) -> bool {
        (self.total_mass() + self.dropped_mass - 1.0).abs() <= MASS_TOLERANCE
    }

    fn same_model(&self, other: &SparseMeasure) -> Result<()> {
        if Arc::ptr_eq(&self.model, &other.model) || *self.model == *other.model {
            Ok(())
        } else {
            Err(Error::ModelMismatch(format!(
                "measures live on {} and {}",
                self.model.kind(),
                other.model.kind()
            )))
        }
    }

    /// Draws an atom given a uniform variate in `[0, 1)`. Mass lost to
    /// pruning is spread proportionally.
    pub fn sample_with(&self, u: f64) -> &GroupElement {
        let mut target = u * self.total_mass();
        for (g, p) in &self.atoms {
            if target < *p {
                return g;
            }
            target -= p;
        }
        &self.atoms.last().expect("measure has non-empty support").0
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &GroupElement {
        self.sample_with(rng.gen::<f64>())
    }

    /// `μν` under the default support budget.
    pub fn convolve(&self, other: &SparseMeasure) -> Result<SparseMeasure> {
        self.convolve_with_budget(other, DEFAULT_SUPPORT_BUDGET)
    }

    /// `(μν)(g) = Σ_h μ(h) ν(h⁻¹g)`, i.e. the law of `x y` with `x ~ μ`,
    /// `y ~ ν` independent.
    pub fn convolve_with_budget(&self, other: &SparseMeasure, budget: usize) -> Result<SparseMeasure> {
        self.same_model(other)?;
        let model = &*self.model;
        let chunks: Vec<FxHashMap<GroupElement, CompensatedSum>> = self
            .atoms
            .par_chunks(CONVOLVE_CHUNK)
            .map(|chunk| {
                let mut acc: FxHashMap<GroupElement, CompensatedSum> = FxHashMap::default();
                acc.reserve(chunk.len() * other.atoms.len());
                for (x, p) in chunk {
                    for (y, q) in &other.atoms {
                        acc.entry(model.mul_unchecked(x, y)).or_default().add(p * q);
                    }
                }
                acc
            })
            .collect();

        let mut chunks = chunks.into_iter();
        let mut total = chunks.next().unwrap_or_default();
        for chunk in chunks {
            for (g, s) in chunk {
                total.entry(g).or_default().add(s.value());
            }
            if total.len() > budget {
                return Err(Error::Budget {
                    limit: budget,
                    reached: total.len(),
                    context: "convolution".into(),
                });
            }
        }
        if total.len() > budget {
            return Err(Error::Budget {
                limit: budget,
                reached: total.len(),
                context: "convolution".into(),
            });
        }
        let mut atoms: Vec<(GroupElement, f64)> = total
            .into_iter()
            .map(|(g, s)| (g, s.value()))
            .filter(|a| a.1 > 0.0)
            .collect();
        atoms.par_sort_unstable_by(|a, b| a.0.cmp(&b.0));
        // Dropped mass composes as 1 - (1 - a)(1 - b).
        let dropped = self.dropped_mass + other.dropped_mass - self.dropped_mass * other.dropped_mass;
        Ok(SparseMeasure::from_sorted(self.model.clone(), atoms, dropped))
    }

    /// Left translate: `(gμ)(x) = μ(g⁻¹x)`.
    pub fn translate(&self, g: &GroupElement) -> Result<SparseMeasure> {
        self.model.check(g)?;
        let mut atoms: Vec<(GroupElement, f64)> = self
            .atoms
            .iter()
            .map(|(x, p)| (self.model.mul_unchecked(g, x), *p))
            .collect();
        atoms.par_sort_unstable_by(|a, b| a.0.cmp(&b.0));
        Ok(SparseMeasure::from_sorted(self.model.clone(), atoms, self.dropped_mass))
    }

    /// Reflected measure `μ̌(g) = μ(g⁻¹)`.
    pub fn reflect(&self) -> SparseMeasure {
        let mut atoms: Vec<(GroupElement, f64)> = self.atoms.iter().map(|(x, p)| (self.model.inv(x), *p)).collect();
        atoms.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        SparseMeasure::from_sorted(self.model.clone(), atoms, self.dropped_mass)
    }

    /// `Σ_g |μ(g) − ν(g)|`, in `[0, 2]`.
    pub fn tv_distance(&self, other: &SparseMeasure) -> Result<f64> {
        self.same_model(other)?;
        Ok(tv_sorted(&self.atoms, &other.atoms))
    }

    /// `‖gμ − μ‖` without materializing the translate twice.
    pub fn translation_defect(&self, g: &GroupElement) -> Result<f64> {
        let moved = self.translate(g)?;
        Ok(tv_sorted(&moved.atoms, &self.atoms))
    }

    /// Shannon entropy in nats of the retained masses.
    pub fn entropy(&self) -> f64 {
        let h = self
            .atoms
            .iter()
            .map(|(_, p)| -p * p.ln())
            .sum::<CompensatedSum>()
            .value();
        h.max(0.0)
    }

    pub fn first_moment(&self) -> Result<Moment> {
        let mut sum = CompensatedSum::new();
        let mut approximate = false;
        for (g, p) in &self.atoms {
            let len = self.model.word_length(g)?;
            approximate |= !len.exact;
            sum.add(len.value as f64 * p);
        }
        Ok(Moment {
            value: sum.value(),
            approximate,
        })
    }

    /// `Σ_g μ(g) · abelianize(g)`.
    pub fn barycenter(&self) -> Vec<f64> {
        let dim = self.model.abelianize(&self.model.identity()).len();
        let mut sums = vec![CompensatedSum::new(); dim];
        for (g, p) in &self.atoms {
            for (s, c) in sums.iter_mut().zip(self.model.abelianize(g)) {
                s.add(c as f64 * p);
            }
        }
        sums.iter().map(|s| s.value()).collect()
    }

    /// Zero abelianized barycenter within 1e-12. Cyclic quotients have no
    /// free abelian part and count as centered.
    pub fn is_centered(&self) -> bool {
        if matches!(self.model.kind(), crate::group::GroupKind::CyclicQuotient { .. }) {
            return true;
        }
        self.barycenter().iter().all(|c| c.abs() <= 1e-12)
    }

    /// Removes the smallest atoms of total mass at most `eps` and rescales the
    /// rest so that retained plus dropped mass stays 1. Ties are broken by
    /// encoded key.
    pub fn prune(&self, eps: f64) -> Result<SparseMeasure> {
        if !(0.0..=0.01).contains(&eps) {
            return Err(Error::InvalidArgument(format!(
                "prune threshold {eps} outside [0, 0.01]"
            )));
        }
        if eps == 0.0 {
            return Ok(self.clone());
        }
        let mut order: Vec<(f64, Vec<u8>, usize)> = self
            .atoms
            .iter()
            .enumerate()
            .map(|(i, (g, p))| (*p, g.encode(), i))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        let mut removed = CompensatedSum::new();
        let mut drop = vec![false; self.atoms.len()];
        let mut kept_count = self.atoms.len();
        for (p, _, i) in &order {
            if removed.value() + p > eps || kept_count == 1 {
                break;
            }
            removed.add(*p);
            drop[*i] = true;
            kept_count -= 1;
        }
        let removed = removed.value();
        if removed == 0.0 {
            return Ok(self.clone());
        }
        let dropped = self.dropped_mass + removed;
        let kept: Vec<(GroupElement, f64)> = self
            .atoms
            .iter()
            .zip(&drop)
            .filter(|(_, d)| !**d)
            .map(|(a, _)| a.clone())
            .collect();
        let kept_mass: f64 = kept.iter().map(|a| a.1).sum::<CompensatedSum>().value();
        let scale = (1.0 - dropped) / kept_mass;
        let atoms = kept.into_iter().map(|(g, p)| (g, p * scale)).collect();
        Ok(SparseMeasure::from_sorted(self.model.clone(), atoms, dropped))
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        io::write_csv(self, w)
    }

    pub fn read_csv<R: std::io::Read>(model: Arc<GroupModel>, r: R) -> Result<SparseMeasure> {
        io::read_csv(model, r)
    }
}

fn tv_sorted(a: &[(GroupElement, f64)], b: &[(GroupElement, f64)]) -> f64 {
    use std::cmp::Ordering;
    let mut sum = CompensatedSum::new();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            Ordering::Less => {
                sum.add(a[i].1);
                i += 1;
            }
            Ordering::Greater => {
                sum.add(b[j].1);
                j += 1;
            }
            Ordering::Equal => {
                sum.add((a[i].1 - b[j].1).abs());
                i += 1;
                j += 1;
            }
        }
    }
    a[i..].iter().chain(&b[j..]).for_each(|x| sum.add(x.1));
    sum.value().clamp(0.0, 2.0)
}

/// Random measure with `atoms` points drawn as products of at most `max_len`
/// generators and masses from normalized exponential weights.
pub fn random_measure<R: Rng + ?Sized>(
    model: &Arc<GroupModel>,
    atoms: usize,
    max_len: usize,
    rng: &mut R,
) -> SparseMeasure {
    let gens = model.generators();
    let mut pts = Vec::with_capacity(atoms);
    for _ in 0..atoms.max(1) {
        let len = rng.gen_range(0..=max_len);
        let mut x = model.identity();
        for _ in 0..len {
            model.mul_assign(&mut x, &gens[rng.gen_range(0..gens.len())]);
        }
        let w = -(1.0 - rng.gen::<f64>()).ln();
        pts.push((x, w));
    }
    let total: f64 = pts.iter().map(|p| p.1).sum();
    SparseMeasure::new(model.clone(), pts.into_iter().map(|(g, w)| (g, w / total))).expect("random weights normalize")
}

/// Result of fitting `C` in `H(θ) ≤ C (|θ| + 1)`.
#[derive(Clone, Copy, Debug)]
pub struct EntropyMomentFit {
    /// Largest observed ratio `H / (|θ| + 1)`.
    pub max_ratio: f64,
    /// Fitted constant: `max_ratio` inflated by `margin`.
    pub constant: f64,
    pub margin: f64,
    pub samples: usize,
}

/// Fits the entropy–moment constant on `samples` random measures whose first
/// moment does not exceed `max_moment`.
pub fn fit_entropy_moment_constant<R: Rng + ?Sized>(
    model: &Arc<GroupModel>,
    samples: usize,
    max_moment: f64,
    margin: f64,
    rng: &mut R,
) -> Result<EntropyMomentFit> {
    let mut max_ratio: f64 = 0.0;
    let mut accepted = 0;
    while accepted < samples {
        let mu = random_measure(model, rng.gen_range(1..=40), rng.gen_range(0..=20), rng);
        let m = mu.first_moment()?.value;
        if m > max_moment {
            continue;
        }
        max_ratio = max_ratio.max(mu.entropy() / (m + 1.0));
        accepted += 1;
    }
    Ok(EntropyMomentFit {
        max_ratio,
        constant: max_ratio * (1.0 + margin),
        margin,
        samples,
    })
}
