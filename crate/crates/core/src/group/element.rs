use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use std::fmt;

use super::word::Word;

/// Canonical-form element of one of the catalog groups.
///
/// Equality of values is equality of group elements: lattice vectors and
/// Heisenberg triples are normal forms, free-group words are reduced, and
/// cyclic residues lie in `0..modulus`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GroupElement {
    Lattice(SmallVec<[i64; 3]>),
    /// Upper unitriangular matrix `[[1,a,c],[0,1,b],[0,0,1]]` stored as `(a, b, c)`.
    Heisenberg([i64; 3]),
    Free(Word),
    Cyclic(u64),
    /// `(t, v)` in `Z^2 ⋊ Z` where `t` acts on `v` by a hyperbolic matrix.
    #[cfg(feature = "sol")]
    Sol {
        t: i64,
        v: [i64; 2],
    },
}

impl GroupElement {
    pub fn lattice<I: IntoIterator<Item = i64>>(coords: I) -> Self {
        GroupElement::Lattice(coords.into_iter().collect())
    }

    pub fn heisenberg(a: i64, b: i64, c: i64) -> Self {
        GroupElement::Heisenberg([a, b, c])
    }

    pub fn as_word(&self) -> Option<&Word> {
        match self {
            GroupElement::Free(w) => Some(w),
            _ => None,
        }
    }

    fn tag(&self) -> u8 {
        match self {
            GroupElement::Lattice(_) => 1,
            GroupElement::Heisenberg(_) => 2,
            GroupElement::Free(_) => 3,
            GroupElement::Cyclic(_) => 4,
            #[cfg(feature = "sol")]
            GroupElement::Sol { .. } => 5,
        }
    }

    /// Length-prefixed little-endian byte encoding: a model tag byte, the
    /// payload length as `u32`, then the payload.
    pub fn encode(&self) -> Vec<u8> {
        let mut payload = Vec::new();
        match self {
            GroupElement::Lattice(v) => v.iter().for_each(|x| payload.extend(x.to_le_bytes())),
            GroupElement::Heisenberg(v) => v.iter().for_each(|x| payload.extend(x.to_le_bytes())),
            GroupElement::Free(w) => payload.extend_from_slice(w.letters()),
            GroupElement::Cyclic(r) => payload.extend(r.to_le_bytes()),
            #[cfg(feature = "sol")]
            GroupElement::Sol { t, v } => {
                payload.extend(t.to_le_bytes());
                v.iter().for_each(|x| payload.extend(x.to_le_bytes()));
            }
        }
        let mut out = Vec::with_capacity(payload.len() + 5);
        out.push(self.tag());
        out.extend((payload.len() as u32).to_le_bytes());
        out.extend(payload);
        out
    }
}

fn write_tuple(f: &mut fmt::Formatter<'_>, xs: &[i64]) -> fmt::Result {
    f.write_str("(")?;
    for (i, x) in xs.iter().enumerate() {
        if i > 0 {
            f.write_str(",")?;
        }
        write!(f, "{x}")?;
    }
    f.write_str(")")
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupElement::Lattice(v) => write_tuple(f, v),
            GroupElement::Heisenberg(v) => write_tuple(f, v),
            GroupElement::Free(w) => write!(f, "{w}"),
            GroupElement::Cyclic(r) => write!(f, "{r}"),
            #[cfg(feature = "sol")]
            GroupElement::Sol { t, v } => write!(f, "({t};{},{})", v[0], v[1]),
        }
    }
}

impl fmt::Debug for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// Parses a parenthesized integer tuple such as `(1,-2,0)`; a bare integer
/// is accepted as a one-tuple.
pub(crate) fn parse_tuple(s: &str) -> Option<Vec<i64>> {
    let s = s.trim();
    let inner = match s.strip_prefix('(').and_then(|r| r.strip_suffix(')')) {
        Some(inner) => inner,
        None => s,
    };
    if inner.trim().is_empty() {
        return Some(Vec::new());
    }
    inner.split(',').map(|p| p.trim().parse().ok()).collect()
}
