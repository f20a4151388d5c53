//! Semantic label ids and the scene legend.

use std::collections::BTreeMap;
use std::fmt;

/// Semantic category id. `0` is reserved for "unexplored / no label" and
/// never appears in a legend; `-1` is only ever produced at matrix
/// serialization time for the trajectory layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct LabelId(pub u32);

impl LabelId {
    pub const NONE: LabelId = LabelId(0);

    pub fn is_none(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for LabelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Label id to category name. Ids are assigned at scene load and stay fixed
/// for the whole episode, so prompts built from the legend are reproducible.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Legend {
    entries: BTreeMap<LabelId, String>,
}

impl Legend {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the previous name if the id was already present.
    pub fn insert(&mut self, id: LabelId, name: impl Into<String>) -> Option<String> {
        self.entries.insert(id, name.into())
    }

    pub fn name(&self, id: LabelId) -> Option<&str> {
        self.entries.get(&id).map(String::as_str)
    }

    pub fn id_of(&self, name: &str) -> Option<LabelId> {
        self.entries
            .iter()
            .find(|(_, n)| n.eq_ignore_ascii_case(name))
            .map(|(id, _)| *id)
    }

    pub fn contains(&self, id: LabelId) -> bool {
        self.entries.contains_key(&id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (LabelId, &str)> {
        self.entries.iter().map(|(id, n)| (*id, n.as_str()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.values().map(String::as_str)
    }
}

impl FromIterator<(LabelId, String)> for Legend {
    fn from_iter<I: IntoIterator<Item = (LabelId, String)>>(iter: I) -> Self {
        Legend {
            entries: iter.into_iter().collect(),
        }
    }
}

impl<'a> FromIterator<(u32, &'a str)> for Legend {
    fn from_iter<I: IntoIterator<Item = (u32, &'a str)>>(iter: I) -> Self {
        Legend {
            entries: iter
                .into_iter()
                .map(|(id, n)| (LabelId(id), n.to_string()))
                .collect(),
        }
    }
}
