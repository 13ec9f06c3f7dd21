use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use std::fmt;

/// A letter of the free group alphabet: generator `i` is `2i`, its inverse
/// is `2i + 1`.
pub type Letter = u8;

#[inline]
pub fn inverse_letter(l: Letter) -> Letter {
    l ^ 1
}

#[inline]
pub fn letter_generator(l: Letter) -> usize {
    usize::from(l >> 1)
}

#[inline]
pub fn letter_sign(l: Letter) -> i64 {
    if l & 1 == 0 {
        1
    } else {
        -1
    }
}

pub fn letter_char(l: Letter) -> char {
    let base = (b'a' + (l >> 1)) as char;
    if l & 1 == 0 {
        base
    } else {
        base.to_ascii_uppercase()
    }
}

pub fn char_letter(c: char) -> Option<Letter> {
    if c.is_ascii_lowercase() {
        Some((c as u8 - b'a') << 1)
    } else if c.is_ascii_uppercase() {
        Some(((c as u8 - b'A') << 1) | 1)
    } else {
        None
    }
}

/// Freely reduced word. No letter is ever adjacent to its inverse.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Word(SmallVec<[Letter; 16]>);

impl Word {
    pub fn empty() -> Self {
        Self(SmallVec::new())
    }

    pub fn letter(l: Letter) -> Self {
        let mut w = Self::empty();
        w.0.push(l);
        w
    }

    /// Builds a word from arbitrary letters, reducing as it goes.
    pub fn from_letters<I: IntoIterator<Item = Letter>>(letters: I) -> Self {
        let mut w = Self::empty();
        for l in letters {
            w.push(l);
        }
        w
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn letters(&self) -> &[Letter] {
        &self.0
    }

    pub fn last(&self) -> Option<Letter> {
        self.0.last().copied()
    }

    /// Right-multiplies by a single letter.
    #[inline]
    pub fn push(&mut self, l: Letter) {
        if self.0.last() == Some(&inverse_letter(l)) {
            self.0.pop();
        } else {
            self.0.push(l);
        }
    }

    pub fn mul_assign(&mut self, rhs: &Word) {
        for &l in rhs.letters() {
            self.push(l);
        }
    }

    pub fn mul(&self, rhs: &Word) -> Word {
        let cancel = self
            .0
            .iter()
            .rev()
            .zip(rhs.0.iter())
            .take_while(|(a, b)| **a == inverse_letter(**b))
            .count();
        let mut out = SmallVec::with_capacity(self.len() + rhs.len() - 2 * cancel);
        out.extend_from_slice(&self.0[..self.len() - cancel]);
        out.extend_from_slice(&rhs.0[cancel..]);
        Word(out)
    }

    pub fn inverse(&self) -> Word {
        Word(self.0.iter().rev().map(|&l| inverse_letter(l)).collect())
    }

    pub fn is_reduced(&self) -> bool {
        self.0.windows(2).all(|p| p[1] != inverse_letter(p[0]))
    }

    pub fn common_prefix_len(&self, other: &Word) -> usize {
        self.0.iter().zip(other.0.iter()).take_while(|(a, b)| a == b).count()
    }

    pub fn prefix(&self, depth: usize) -> Word {
        Word(SmallVec::from_slice(&self.0[..depth.min(self.len())]))
    }

    pub fn starts_with(&self, prefix: &Word) -> bool {
        self.0.starts_with(&prefix.0)
    }

    /// The word with its last letter removed (the parent vertex in the tree).
    pub fn parent(&self) -> Word {
        let mut w = self.clone();
        w.0.pop();
        w
    }

    pub fn max_letter(&self) -> Option<Letter> {
        self.0.iter().copied().max()
    }

    /// Parses the text form: lowercase letters for generators, uppercase for
    /// inverses, `e` or the empty string for the identity.
    pub fn parse(s: &str) -> Option<Word> {
        let s = s.trim();
        if s.is_empty() || s == "e" {
            return Some(Word::empty());
        }
        let mut raw = Vec::with_capacity(s.len());
        for c in s.chars() {
            raw.push(char_letter(c)?);
        }
        Some(Word::from_letters(raw))
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("e");
        }
        for &l in self.letters() {
            write!(f, "{}", letter_char(l))?;
        }
        Ok(())
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Word({self})")
    }
}
