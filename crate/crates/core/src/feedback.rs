//! Binary trainer feedback and the per-query feedback multiset.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Opaque trainer identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TrainerId(pub String);

impl TrainerId {
    pub fn new(id: impl Into<String>) -> Self {
        TrainerId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TrainerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for TrainerId {
    fn from(s: &str) -> Self {
        TrainerId(s.to_owned())
    }
}

impl From<String> for TrainerId {
    fn from(s: String) -> Self {
        TrainerId(s)
    }
}

/// A binary judgement: "this was the best action" or not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn flip(self) -> Self {
        match self {
            Polarity::Positive => Polarity::Negative,
            Polarity::Negative => Polarity::Positive,
        }
    }

    pub fn from_bool(positive: bool) -> Self {
        if positive {
            Polarity::Positive
        } else {
            Polarity::Negative
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub trainer_id: TrainerId,
    pub value: Polarity,
}

impl FeedbackEvent {
    pub fn new(trainer_id: impl Into<TrainerId>, value: Polarity) -> Self {
        FeedbackEvent {
            trainer_id: trainer_id.into(),
            value,
        }
    }

    pub fn positive(trainer_id: impl Into<TrainerId>) -> Self {
        Self::new(trainer_id, Polarity::Positive)
    }

    pub fn negative(trainer_id: impl Into<TrainerId>) -> Self {
        Self::new(trainer_id, Polarity::Negative)
    }
}

/// Multiset of feedback events gathered for one state-action query.
///
/// The same trainer may appear more than once once archived rounds are
/// merged with fresh ones; every event counts towards likelihoods and
/// weights, while the set of distinct responders drives the average
/// uncertainty.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeedbackSet {
    events: Vec<FeedbackEvent>,
}

impl FeedbackSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, event: FeedbackEvent) {
        self.events.push(event);
    }

    pub fn events(&self) -> &[FeedbackEvent] {
        &self.events
    }

    pub fn iter(&self) -> std::slice::Iter<'_, FeedbackEvent> {
        self.events.iter()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Events in `P_t`.
    pub fn positives(&self) -> impl Iterator<Item = &FeedbackEvent> {
        self.events.iter().filter(|e| e.value == Polarity::Positive)
    }

    /// Events in `N_t`.
    pub fn negatives(&self) -> impl Iterator<Item = &FeedbackEvent> {
        self.events.iter().filter(|e| e.value == Polarity::Negative)
    }

    pub fn count(&self, value: Polarity) -> usize {
        self.events.iter().filter(|e| e.value == value).count()
    }

    pub fn distinct_trainers(&self) -> BTreeSet<&TrainerId> {
        self.events.iter().map(|e| &e.trainer_id).collect()
    }

    /// Multiset union.
    pub fn merged(&self, other: &FeedbackSet) -> FeedbackSet {
        let mut events = Vec::with_capacity(self.len() + other.len());
        events.extend_from_slice(&self.events);
        events.extend_from_slice(&other.events);
        FeedbackSet { events }
    }

    pub fn extend(&mut self, other: &FeedbackSet) {
        self.events.extend_from_slice(&other.events);
    }

    /// Every event with its value flipped.
    pub fn flipped(&self) -> FeedbackSet {
        self.events
            .iter()
            .map(|e| FeedbackEvent::new(e.trainer_id.clone(), e.value.flip()))
            .collect()
    }

    /// Sorts events by (trainer, value) so that arrival order does not leak
    /// into floating-point summation order.
    pub fn canonicalize(&mut self) {
        self.events.sort_by(|a, b| {
            a.trainer_id
                .cmp(&b.trainer_id)
                .then(a.value.cmp(&b.value))
        });
    }
}

impl FromIterator<FeedbackEvent> for FeedbackSet {
    fn from_iter<I: IntoIterator<Item = FeedbackEvent>>(iter: I) -> Self {
        FeedbackSet {
            events: iter.into_iter().collect(),
        }
    }
}

impl IntoIterator for FeedbackSet {
    type Item = FeedbackEvent;
    type IntoIter = std::vec::IntoIter<FeedbackEvent>;

    fn into_iter(self) -> Self::IntoIter {
        self.events.into_iter()
    }
}

impl<'a> IntoIterator for &'a FeedbackSet {
    type Item = &'a FeedbackEvent;
    type IntoIter = std::slice::Iter<'a, FeedbackEvent>;

    fn into_iter(self) -> Self::IntoIter {
        self.events.iter()
    }
}
