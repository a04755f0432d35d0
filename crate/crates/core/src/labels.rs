//! Atomic propositions and letters of the label alphabet `2^AP`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Upper bound on registry size. Automata store a dense transition table over
/// the full alphabet, so the alphabet has to stay enumerable.
pub const MAX_PROPOSITIONS: usize = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LabelError {
    #[error("duplicate proposition name `{0}`")]
    Duplicate(String),
    #[error("unknown proposition `{0}`")]
    UnknownAtom(String),
    #[error("too many propositions ({0}, at most {MAX_PROPOSITIONS} supported)")]
    TooMany(usize),
}

/// A set of atomic propositions encoded as a bitset over an [`ApRegistry`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Letter(pub u32);

impl Letter {
    pub const EMPTY: Letter = Letter(0);

    pub fn contains(self, prop: usize) -> bool {
        self.0 & (1 << prop) != 0
    }

    pub fn with(self, prop: usize) -> Letter {
        Letter(self.0 | (1 << prop))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Ordered, duplicate-free list of proposition names.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct ApRegistry {
    names: Vec<String>,
}

impl ApRegistry {
    pub fn new<I, S>(names: I) -> Result<Self, LabelError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut out: Vec<String> = Vec::new();
        for name in names {
            let name = name.into();
            if out.contains(&name) {
                return Err(LabelError::Duplicate(name));
            }
            out.push(name);
        }
        if out.len() > MAX_PROPOSITIONS {
            return Err(LabelError::TooMany(out.len()));
        }
        Ok(Self { names: out })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Number of letters in `2^AP`.
    pub fn alphabet_size(&self) -> usize {
        1 << self.names.len()
    }

    pub fn letters(&self) -> impl Iterator<Item = Letter> {
        (0..self.alphabet_size() as u32).map(Letter)
    }

    /// Mask selecting the bits that belong to this registry.
    pub fn mask(&self) -> u32 {
        (self.alphabet_size() - 1) as u32
    }

    pub fn letter<S: AsRef<str>>(&self, props: &[S]) -> Result<Letter, LabelError> {
        let mut letter = Letter::EMPTY;
        for p in props {
            let idx = self
                .index_of(p.as_ref())
                .ok_or_else(|| LabelError::UnknownAtom(p.as_ref().to_string()))?;
            letter = letter.with(idx);
        }
        Ok(letter)
    }

    pub fn letter_names(&self, letter: Letter) -> Vec<String> {
        self.names
            .iter()
            .enumerate()
            .filter(|(i, _)| letter.contains(*i))
            .map(|(_, n)| n.clone())
            .collect()
    }

    /// Re-encodes a letter of `self` into the registry `target`, dropping
    /// propositions `target` does not know.
    pub fn translate(&self, letter: Letter, target: &ApRegistry) -> Letter {
        let mut out = Letter::EMPTY;
        for (i, name) in self.names.iter().enumerate() {
            if letter.contains(i) {
                if let Some(j) = target.index_of(name) {
                    out = out.with(j);
                }
            }
        }
        out
    }
}

impl TryFrom<Vec<String>> for ApRegistry {
    type Error = LabelError;

    fn try_from(value: Vec<String>) -> Result<Self, Self::Error> {
        ApRegistry::new(value)
    }
}

impl From<ApRegistry> for Vec<String> {
    fn from(value: ApRegistry) -> Self {
        value.names
    }
}

impl fmt::Display for ApRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.names.join(", "))
    }
}
