//! Partition of the expanded spans into equivalence sets by lemma bag.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::expansion::AnnotatedSpan;
use crate::textnorm::{normalize, to_bag, LemmaBag, LemmaClassIndex, Lexicon};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EquivalenceSet {
    pub members: Vec<AnnotatedSpan>,
    pub bag: LemmaBag,
    pub is_input: bool,
    pub total_count: u64,
}

impl EquivalenceSet {
    /// Build a set from members sharing `bag`; members are deduplicated by
    /// normalized text and put in canonical order.
    pub fn new(mut members: Vec<AnnotatedSpan>, bag: LemmaBag) -> Self {
        members.sort_by(canonical_order);
        let mut seen = std::collections::HashSet::new();
        members.retain(|m| seen.insert(m.normalized()));
        EquivalenceSet {
            is_input: members.iter().any(|m| m.is_input),
            total_count: members.iter().map(|m| m.count).sum(),
            members,
            bag,
        }
    }
}

/// Inputs first, then descending count, then text.
pub fn canonical_order(a: &AnnotatedSpan, b: &AnnotatedSpan) -> Ordering {
    b.is_input
        .cmp(&a.is_input)
        .then(b.count.cmp(&a.count))
        .then_with(|| a.text.cmp(&b.text))
}

#[derive(PartialEq, Eq, PartialOrd, Ord)]
enum GroupKey {
    Bag(LemmaBag),
    /// Spans whose every token was filtered stay apart, keyed by text.
    Raw(String),
}

/// Group spans with identical lemma bags. The result is ordered by the
/// first canonical member's text.
pub fn group(
    spans: &[AnnotatedSpan],
    lexicon: &Lexicon,
    index: &LemmaClassIndex,
) -> Vec<EquivalenceSet> {
    let mut groups: BTreeMap<GroupKey, Vec<AnnotatedSpan>> = BTreeMap::new();
    for span in spans {
        let bag = to_bag(&span.text, lexicon, index);
        let key = if bag.is_empty() {
            GroupKey::Raw(normalize(&span.text))
        } else {
            GroupKey::Bag(bag)
        };
        groups.entry(key).or_default().push(span.clone());
    }
    let mut sets: Vec<EquivalenceSet> = groups
        .into_iter()
        .map(|(key, members)| {
            let bag = match key {
                GroupKey::Bag(bag) => bag,
                GroupKey::Raw(_) => LemmaBag::new(),
            };
            EquivalenceSet::new(members, bag)
        })
        .collect();
    sets.sort_by(|a, b| canonical_order(&a.members[0], &b.members[0]).then_with(|| a.bag.cmp(&b.bag)));
    sets
}
