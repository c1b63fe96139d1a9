use std::collections::{BTreeMap, BTreeSet};

use crate::model::SeriesKey;
use crate::selector::{MatchOp, Selector};

/// Inverted index from metric names and label pairs to series keys.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SeriesIndex {
    by_name: BTreeMap<String, BTreeSet<SeriesKey>>,
    by_label: BTreeMap<(String, String), BTreeSet<SeriesKey>>,
}

impl SeriesIndex {
    pub fn build<'a>(keys: impl IntoIterator<Item = &'a SeriesKey>) -> Self {
        let mut idx = Self::default();
        for k in keys {
            idx.insert(k);
        }
        idx
    }

    pub fn insert(&mut self, key: &SeriesKey) {
        self.by_name
            .entry(key.name().to_string())
            .or_default()
            .insert(key.clone());
        for (k, v) in key.labels().iter() {
            self.by_label
                .entry((k.to_string(), v.to_string()))
                .or_default()
                .insert(key.clone());
        }
    }

    pub fn contains(&self, key: &SeriesKey) -> bool {
        self.by_name
            .get(key.name())
            .is_some_and(|s| s.contains(key))
    }

    pub fn len(&self) -> usize {
        self.by_name.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_name.is_empty()
    }

    /// Keys that may match the selector. Uses the exact name and equality
    /// matchers to narrow the set; callers still run the full match.
    pub fn candidates(&self, selector: &Selector) -> Vec<SeriesKey> {
        let mut sets: Vec<&BTreeSet<SeriesKey>> = Vec::new();
        let empty = BTreeSet::new();
        if let Some(name) = selector.exact_name() {
            sets.push(self.by_name.get(name).unwrap_or(&empty));
        }
        for m in selector.matchers().iter().filter(|m| m.op == MatchOp::Eq) {
            sets.push(
                self.by_label
                    .get(&(m.name.clone(), m.value.clone()))
                    .unwrap_or(&empty),
            );
        }
        match sets.iter().min_by_key(|s| s.len()) {
            Some(smallest) => smallest
                .iter()
                .filter(|k| sets.iter().all(|s| s.contains(*k)))
                .cloned()
                .collect(),
            None => self.by_name.values().flatten().cloned().collect(),
        }
    }
}
