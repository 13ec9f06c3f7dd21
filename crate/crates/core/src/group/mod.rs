//! Finitely generated groups from a small catalog: exact arithmetic on
//! canonical forms, word metric, balls and abelianization.

mod element;
mod word;

pub use element::GroupElement;
pub use word::{inverse_letter, letter_char, letter_generator, letter_sign, Letter, Word};

use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use std::fmt;

use crate::error::{Error, Result};

/// Default radius of the Heisenberg word-length table.
pub const DEFAULT_TABLE_RADIUS: u32 = 16;

/// Default element budget for ball enumeration.
pub const DEFAULT_BALL_BUDGET: usize = 20_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroupKind {
    IntegerLattice {
        dim: usize,
    },
    Heisenberg,
    FreeGroup {
        rank: usize,
    },
    CyclicQuotient {
        modulus: u64,
    },
    #[cfg(feature = "sol")]
    SolLattice,
}

impl fmt::Display for GroupKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupKind::IntegerLattice { dim } => write!(f, "IntegerLattice({dim})"),
            GroupKind::Heisenberg => f.write_str("Heisenberg"),
            GroupKind::FreeGroup { rank } => write!(f, "FreeGroup({rank})"),
            GroupKind::CyclicQuotient { modulus } => write!(f, "CyclicQuotient({modulus})"),
            #[cfg(feature = "sol")]
            GroupKind::SolLattice => f.write_str("SolLattice"),
        }
    }
}

impl GroupKind {
    pub fn parse_tag(s: &str) -> Result<GroupKind> {
        let s = s.trim();
        let (name, arg) = match s.find('(') {
            Some(i) => (&s[..i], s[i + 1..].strip_suffix(')')),
            None => (s, None),
        };
        let num = |a: Option<&str>| -> Result<u64> {
            a.and_then(|x| x.trim().parse().ok())
                .ok_or_else(|| Error::Parse(format!("bad group tag {s:?}")))
        };
        match name {
            "IntegerLattice" => Ok(GroupKind::IntegerLattice {
                dim: num(arg)? as usize,
            }),
            "Heisenberg" => Ok(GroupKind::Heisenberg),
            "FreeGroup" => Ok(GroupKind::FreeGroup {
                rank: num(arg)? as usize,
            }),
            "CyclicQuotient" => Ok(GroupKind::CyclicQuotient { modulus: num(arg)? }),
            #[cfg(feature = "sol")]
            "SolLattice" => Ok(GroupKind::SolLattice),
            _ => Err(Error::Parse(format!("unknown group tag {s:?}"))),
        }
    }

    /// Rank of the free part of the abelianization as returned by
    /// [`GroupModel::abelianize`].
    pub fn abelian_rank(&self) -> usize {
        match self {
            GroupKind::IntegerLattice { dim } => *dim,
            GroupKind::Heisenberg => 2,
            GroupKind::FreeGroup { rank } => *rank,
            GroupKind::CyclicQuotient { .. } => 1,
            #[cfg(feature = "sol")]
            GroupKind::SolLattice => 1,
        }
    }

    /// Nilpotent catalog members (lattices, Heisenberg, cyclic).
    pub fn is_nilpotent(&self) -> bool {
        matches!(
            self,
            GroupKind::IntegerLattice { .. } | GroupKind::Heisenberg | GroupKind::CyclicQuotient { .. }
        )
    }
}

/// Word length together with whether it is the exact graph distance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordLength {
    pub value: u64,
    pub exact: bool,
}

/// Elements of a ball with their word lengths and cumulative counts.
#[derive(Clone, Debug)]
pub struct Ball {
    pub elements: Vec<(GroupElement, u32)>,
    /// `counts[t] = |B_t|` for `t = 0..=radius`.
    pub counts: Vec<usize>,
}

/// A finitely generated group with a fixed symmetric generating set.
#[derive(Clone, Debug)]
pub struct GroupModel {
    kind: GroupKind,
    generators: Vec<GroupElement>,
    table: Option<FxHashMap<GroupElement, u32>>,
    table_radius: u32,
    gauge_fallback: bool,
}

impl PartialEq for GroupModel {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl GroupModel {
    pub fn new(kind: GroupKind) -> Result<Self> {
        Self::with_table_radius(kind, DEFAULT_TABLE_RADIUS)
    }

    pub fn integer_lattice(dim: usize) -> Self {
        Self::new(GroupKind::IntegerLattice { dim }).expect("lattice dimension must be positive")
    }

    pub fn heisenberg() -> Self {
        Self::new(GroupKind::Heisenberg).expect("heisenberg model")
    }

    pub fn free_group(rank: usize) -> Self {
        Self::new(GroupKind::FreeGroup { rank }).expect("free group rank must be in 1..=26")
    }

    pub fn cyclic(modulus: u64) -> Self {
        Self::new(GroupKind::CyclicQuotient { modulus }).expect("modulus must be at least 2")
    }

    /// Builds the model; the Heisenberg word-length table is built eagerly
    /// up to `table_radius` so the model can be shared read-only afterwards.
    pub fn with_table_radius(kind: GroupKind, table_radius: u32) -> Result<Self> {
        let generators = match kind {
            GroupKind::IntegerLattice { dim } => {
                if dim == 0 {
                    return Err(Error::InvalidArgument("lattice dimension must be positive".into()));
                }
                let mut g = Vec::with_capacity(2 * dim);
                for i in 0..dim {
                    for s in [1, -1] {
                        let mut v: SmallVec<[i64; 3]> = SmallVec::from_elem(0, dim);
                        v[i] = s;
                        g.push(GroupElement::Lattice(v));
                    }
                }
                g
            }
            GroupKind::Heisenberg => vec![
                GroupElement::heisenberg(1, 0, 0),
                GroupElement::heisenberg(-1, 0, 0),
                GroupElement::heisenberg(0, 1, 0),
                GroupElement::heisenberg(0, -1, 0),
            ],
            GroupKind::FreeGroup { rank } => {
                if rank == 0 || rank > 26 {
                    return Err(Error::InvalidArgument("free group rank must be in 1..=26".into()));
                }
                (0..2 * rank as u8)
                    .map(|l| GroupElement::Free(Word::letter(l)))
                    .collect()
            }
            GroupKind::CyclicQuotient { modulus } => {
                if modulus < 2 {
                    return Err(Error::InvalidArgument("modulus must be at least 2".into()));
                }
                if modulus == 2 {
                    vec![GroupElement::Cyclic(1)]
                } else {
                    vec![GroupElement::Cyclic(1), GroupElement::Cyclic(modulus - 1)]
                }
            }
            #[cfg(feature = "sol")]
            GroupKind::SolLattice => vec![
                GroupElement::Sol { t: 1, v: [0, 0] },
                GroupElement::Sol { t: -1, v: [0, 0] },
                GroupElement::Sol { t: 0, v: [1, 0] },
                GroupElement::Sol { t: 0, v: [-1, 0] },
                GroupElement::Sol { t: 0, v: [0, 1] },
                GroupElement::Sol { t: 0, v: [0, -1] },
            ],
        };
        let mut model = GroupModel {
            kind,
            generators,
            table: None,
            table_radius,
            gauge_fallback: true,
        };
        if kind == GroupKind::Heisenberg {
            let ball = model.bfs(table_radius, DEFAULT_BALL_BUDGET)?;
            model.table = Some(ball.elements.into_iter().collect());
        }
        Ok(model)
    }

    /// Disables the gauge fallback so out-of-table lengths become errors.
    pub fn without_gauge_fallback(mut self) -> Self {
        self.gauge_fallback = false;
        self
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    pub fn generators(&self) -> &[GroupElement] {
        &self.generators
    }

    pub fn table_radius(&self) -> Option<u32> {
        self.table.as_ref().map(|_| self.table_radius)
    }

    pub fn identity(&self) -> GroupElement {
        match self.kind {
            GroupKind::IntegerLattice { dim } => GroupElement::Lattice(SmallVec::from_elem(0, dim)),
            GroupKind::Heisenberg => GroupElement::Heisenberg([0; 3]),
            GroupKind::FreeGroup { .. } => GroupElement::Free(Word::empty()),
            GroupKind::CyclicQuotient { .. } => GroupElement::Cyclic(0),
            #[cfg(feature = "sol")]
            GroupKind::SolLattice => GroupElement::Sol { t: 0, v: [0, 0] },
        }
    }

    /// Whether `g` is a canonical-form element of this group.
    pub fn contains(&self, g: &GroupElement) -> bool {
        match (self.kind, g) {
            (GroupKind::IntegerLattice { dim }, GroupElement::Lattice(v)) => v.len() == dim,
            (GroupKind::Heisenberg, GroupElement::Heisenberg(_)) => true,
            (GroupKind::FreeGroup { rank }, GroupElement::Free(w)) => {
                w.max_letter().is_none_or(|l| usize::from(l) < 2 * rank) && w.is_reduced()
            }
            (GroupKind::CyclicQuotient { modulus }, GroupElement::Cyclic(r)) => *r < modulus,
            #[cfg(feature = "sol")]
            (GroupKind::SolLattice, GroupElement::Sol { .. }) => true,
            _ => false,
        }
    }

    pub fn check(&self, g: &GroupElement) -> Result<()> {
        if self.contains(g) {
            Ok(())
        } else {
            Err(Error::ModelMismatch(format!("{g} is not an element of {}", self.kind)))
        }
    }

    pub fn mul(&self, a: &GroupElement, b: &GroupElement) -> Result<GroupElement> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.mul_unchecked(a, b))
    }

    /// Product of two elements already known to belong to this model.
    pub fn mul_unchecked(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        match (a, b) {
            (GroupElement::Lattice(x), GroupElement::Lattice(y)) => {
                GroupElement::Lattice(x.iter().zip(y).map(|(p, q)| p + q).collect())
            }
            (GroupElement::Heisenberg(x), GroupElement::Heisenberg(y)) => {
                GroupElement::Heisenberg([x[0] + y[0], x[1] + y[1], x[2] + y[2] + x[0] * y[1]])
            }
            (GroupElement::Free(x), GroupElement::Free(y)) => GroupElement::Free(x.mul(y)),
            (GroupElement::Cyclic(x), GroupElement::Cyclic(y)) => match self.kind {
                GroupKind::CyclicQuotient { modulus } => GroupElement::Cyclic((x + y) % modulus),
                _ => unreachable!("cyclic element outside a cyclic model"),
            },
            #[cfg(feature = "sol")]
            (GroupElement::Sol { t: t1, v: v1 }, GroupElement::Sol { t: t2, v: v2 }) => {
                let w = sol_power_apply(*t1, *v2);
                GroupElement::Sol {
                    t: t1 + t2,
                    v: [v1[0] + w[0], v1[1] + w[1]],
                }
            }
            _ => unreachable!("mixed-model operands"),
        }
    }

    /// In-place right multiplication `a <- a b`.
    pub fn mul_assign(&self, a: &mut GroupElement, b: &GroupElement) {
        match (a, b) {
            (GroupElement::Free(x), GroupElement::Free(y)) => x.mul_assign(y),
            (GroupElement::Lattice(x), GroupElement::Lattice(y)) => x.iter_mut().zip(y).for_each(|(p, q)| *p += q),
            (a, b) => *a = self.mul_unchecked(a, b),
        }
    }

    pub fn inv(&self, a: &GroupElement) -> GroupElement {
        match a {
            GroupElement::Lattice(x) => GroupElement::Lattice(x.iter().map(|p| -p).collect()),
            GroupElement::Heisenberg([a, b, c]) => GroupElement::Heisenberg([-a, -b, -c + a * b]),
            GroupElement::Free(w) => GroupElement::Free(w.inverse()),
            GroupElement::Cyclic(r) => match self.kind {
                GroupKind::CyclicQuotient { modulus } => GroupElement::Cyclic((modulus - r) % modulus),
                _ => unreachable!("cyclic element outside a cyclic model"),
            },
            #[cfg(feature = "sol")]
            GroupElement::Sol { t, v } => {
                let w = sol_power_apply(-t, *v);
                GroupElement::Sol {
                    t: -t,
                    v: [-w[0], -w[1]],
                }
            }
        }
    }

    /// Word length in the Cayley graph of the fixed generators.
    pub fn word_length(&self, g: &GroupElement) -> Result<WordLength> {
        self.check(g)?;
        let exact = |value: u64| Ok(WordLength { value, exact: true });
        match g {
            GroupElement::Lattice(v) => exact(v.iter().map(|x| x.unsigned_abs()).sum()),
            GroupElement::Free(w) => exact(w.len() as u64),
            GroupElement::Cyclic(r) => match self.kind {
                GroupKind::CyclicQuotient { modulus } => exact((*r).min(modulus - r)),
                _ => unreachable!(),
            },
            GroupElement::Heisenberg([a, b, c]) => {
                if let Some(len) = self.table.as_ref().and_then(|t| t.get(g)) {
                    return exact(u64::from(*len));
                }
                if !self.gauge_fallback {
                    return Err(Error::RadiusExceeded {
                        element: g.to_string(),
                        radius: self.table_radius,
                    });
                }
                let gauge =
                    a.unsigned_abs() + b.unsigned_abs() + (2.0 * (c.unsigned_abs() as f64).sqrt()).ceil() as u64;
                Ok(WordLength {
                    value: gauge,
                    exact: false,
                })
            }
            #[cfg(feature = "sol")]
            GroupElement::Sol { t, v } => {
                let size = v[0].unsigned_abs().max(v[1].unsigned_abs()) as f64;
                let gauge = t.unsigned_abs() + (2.0 * (1.0 + size).ln()).ceil() as u64;
                Ok(WordLength {
                    value: gauge,
                    exact: false,
                })
            }
        }
    }

    /// Breadth-first enumeration of the ball of radius `r`.
    pub fn ball(&self, r: u32) -> Result<Ball> {
        self.ball_with_budget(r, DEFAULT_BALL_BUDGET)
    }

    pub fn ball_with_budget(&self, r: u32, budget: usize) -> Result<Ball> {
        if let Some(table) = &self.table {
            if r <= self.table_radius {
                let mut elements: Vec<(GroupElement, u32)> = table
                    .iter()
                    .filter(|(_, &l)| l <= r)
                    .map(|(g, &l)| (g.clone(), l))
                    .collect();
                elements.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
                return Ok(Ball {
                    counts: cumulative_counts(&elements, r),
                    elements,
                });
            }
        }
        self.bfs(r, budget)
    }

    fn bfs(&self, r: u32, budget: usize) -> Result<Ball> {
        let identity = self.identity();
        let mut seen: FxHashSet<GroupElement> = FxHashSet::default();
        seen.insert(identity.clone());
        let mut elements = vec![(identity.clone(), 0u32)];
        let mut frontier = vec![identity];
        for t in 1..=r {
            let mut next = Vec::new();
            for g in &frontier {
                for s in &self.generators {
                    let h = self.mul_unchecked(g, s);
                    if seen.insert(h.clone()) {
                        next.push(h);
                    }
                }
            }
            if seen.len() > budget {
                return Err(Error::Budget {
                    limit: budget,
                    reached: (t - 1) as usize,
                    context: format!("ball enumeration in {}", self.kind),
                });
            }
            next.sort();
            elements.extend(next.iter().map(|g| (g.clone(), t)));
            frontier = next;
        }
        Ok(Ball {
            counts: cumulative_counts(&elements, r),
            elements,
        })
    }

    /// Homomorphism onto the free part of the abelianization (and the residue
    /// for cyclic quotients).
    pub fn abelianize(&self, g: &GroupElement) -> Vec<i64> {
        match (self.kind, g) {
            (_, GroupElement::Lattice(v)) => v.to_vec(),
            (_, GroupElement::Heisenberg([a, b, _])) => vec![*a, *b],
            (GroupKind::FreeGroup { rank }, GroupElement::Free(w)) => {
                let mut counts = vec![0i64; rank];
                for &l in w.letters() {
                    counts[letter_generator(l)] += letter_sign(l);
                }
                counts
            }
            (_, GroupElement::Cyclic(r)) => vec![*r as i64],
            #[cfg(feature = "sol")]
            (_, GroupElement::Sol { t, .. }) => vec![*t],
            _ => unreachable!("element outside its model"),
        }
    }

    /// Parses the text rendering used in CSV and JSON files.
    pub fn parse_element(&self, s: &str) -> Result<GroupElement> {
        let s = s.trim();
        let bad = || Error::Parse(format!("cannot parse {s:?} as an element of {}", self.kind));
        if s == "e" {
            return Ok(self.identity());
        }
        let g = match self.kind {
            GroupKind::IntegerLattice { .. } => GroupElement::lattice(element::parse_tuple(s).ok_or_else(bad)?),
            GroupKind::Heisenberg => {
                let v = element::parse_tuple(s).ok_or_else(bad)?;
                if v.len() != 3 {
                    return Err(bad());
                }
                GroupElement::heisenberg(v[0], v[1], v[2])
            }
            GroupKind::FreeGroup { .. } => GroupElement::Free(Word::parse(s).ok_or_else(bad)?),
            GroupKind::CyclicQuotient { modulus } => {
                let r: i64 = s.parse().map_err(|_| bad())?;
                GroupElement::Cyclic(r.rem_euclid(modulus as i64) as u64)
            }
            #[cfg(feature = "sol")]
            GroupKind::SolLattice => {
                let inner = s.strip_prefix('(').and_then(|r| r.strip_suffix(')')).ok_or_else(bad)?;
                let (t, v) = inner.split_once(';').ok_or_else(bad)?;
                let v = element::parse_tuple(v).ok_or_else(bad)?;
                if v.len() != 2 {
                    return Err(bad());
                }
                GroupElement::Sol {
                    t: t.trim().parse().map_err(|_| bad())?,
                    v: [v[0], v[1]],
                }
            }
        };
        self.check(&g)?;
        Ok(g)
    }
}

fn cumulative_counts(elements: &[(GroupElement, u32)], r: u32) -> Vec<usize> {
    let mut counts = vec![0usize; r as usize + 1];
    for (_, l) in elements {
        counts[*l as usize] += 1;
    }
    for t in 1..counts.len() {
        counts[t] += counts[t - 1];
    }
    counts
}

/// `A^t v` with `A = [[2,1],[1,1]]`.
#[cfg(feature = "sol")]
fn sol_power_apply(t: i64, v: [i64; 2]) -> [i64; 2] {
    let m = if t >= 0 { [[2, 1], [1, 1]] } else { [[1, -1], [-1, 2]] };
    let mut out = v;
    for _ in 0..t.unsigned_abs() {
        out = [m[0][0] * out[0] + m[0][1] * out[1], m[1][0] * out[0] + m[1][1] * out[1]];
    }
    out
}
