//! Feedback review model.
//!
//! Feedback is archived per state-action pair. When a pair comes up again
//! the archived feedback is re-aggregated under the current trust records,
//! and trainers are asked again with probability `1 - confidence`. A
//! re-query merges the fresh answers with the archive before deciding.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::aggregate::{apply_evidence_updates, bwve_decide, Decision};
use crate::error::Result;
use crate::feedback::{FeedbackEvent, FeedbackSet};
use crate::gridworld::{Action, Pos};
use crate::trust::TrustStore;

pub type StateAction = (Pos, Action);

/// Historical feedback per state-action pair. Entries only grow.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeedbackArchive {
    entries: BTreeMap<StateAction, FeedbackSet>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ArchiveEntry {
    state: Pos,
    action: Action,
    feedback: Vec<FeedbackEvent>,
}

impl FeedbackArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &StateAction) -> Option<&FeedbackSet> {
        self.entries.get(key)
    }

    pub fn contains(&self, key: &StateAction) -> bool {
        self.entries.contains_key(key)
    }

    /// Appends events, creating the entry if this is the first query.
    pub fn record(&mut self, key: StateAction, fresh: &FeedbackSet) {
        self.entries.entry(key).or_default().extend(fresh);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&StateAction, &FeedbackSet)> {
        self.entries.iter()
    }

    pub fn write_json<W: io::Write>(&self, writer: W) -> Result<()> {
        let rows: Vec<ArchiveEntry> = self
            .entries
            .iter()
            .map(|(&(state, action), set)| ArchiveEntry {
                state,
                action,
                feedback: set.events().to_vec(),
            })
            .collect();
        serde_json::to_writer_pretty(writer, &rows)?;
        Ok(())
    }

    pub fn read_json<R: io::Read>(reader: R) -> Result<Self> {
        let rows: Vec<ArchiveEntry> = serde_json::from_reader(reader)?;
        let mut archive = FeedbackArchive::new();
        for row in rows {
            let set: FeedbackSet = row.feedback.into_iter().collect();
            archive.record((row.state, row.action), &set);
        }
        Ok(archive)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_json(std::fs::File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_json(std::fs::File::open(path)?)
    }
}

/// Probability of re-asking trainers about an archived pair.
pub fn review_probability(entry: &FeedbackSet, trust: &TrustStore) -> Result<f64> {
    if entry.is_empty() {
        return Ok(1.0);
    }
    let d = bwve_decide(entry, trust)?;
    Ok((1.0 - d.confidence).clamp(0.0, 1.0))
}

/// What to do with a previously answered pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewPolicy {
    /// Re-query with probability `1 - confidence`.
    Review,
    /// Ask once; always reuse the first decision afterwards.
    FirstDecision,
}

/// Result of looking up a pair before any trainer is contacted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lookup {
    /// Never asked: trainers must be queried.
    Unseen,
    /// Answered from memory; nobody is asked.
    Cached(Decision),
    /// Trainers must be asked again; `archived` is the recomputed decision.
    Review { archived: Decision },
}

impl Lookup {
    pub fn needs_query(&self) -> bool {
        !matches!(self, Lookup::Cached(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolution {
    pub decision: Decision,
    pub queried: bool,
}

/// Archive plus the per-pair first decisions, under one review policy.
#[derive(Debug, Clone, PartialEq)]
pub struct ReviewModel {
    policy: ReviewPolicy,
    archive: FeedbackArchive,
    first_decisions: BTreeMap<StateAction, Decision>,
}

impl ReviewModel {
    pub fn new(policy: ReviewPolicy) -> Self {
        ReviewModel {
            policy,
            archive: FeedbackArchive::new(),
            first_decisions: BTreeMap::new(),
        }
    }

    /// Resumes from a saved archive. First decisions are not persisted, so
    /// under [`ReviewPolicy::FirstDecision`] they are rebuilt from the
    /// archive with the given trust records.
    pub fn from_archive(
        policy: ReviewPolicy,
        archive: FeedbackArchive,
        trust: &TrustStore,
    ) -> Result<Self> {
        let mut first_decisions = BTreeMap::new();
        for (key, set) in archive.iter() {
            first_decisions.insert(*key, bwve_decide(set, trust)?);
        }
        Ok(ReviewModel {
            policy,
            archive,
            first_decisions,
        })
    }

    pub fn policy(&self) -> ReviewPolicy {
        self.policy
    }

    pub fn archive(&self) -> &FeedbackArchive {
        &self.archive
    }

    /// Decides whether `key` needs trainers. Draws from `rng` only for
    /// archived pairs under [`ReviewPolicy::Review`].
    pub fn lookup<R: Rng + ?Sized>(
        &self,
        key: StateAction,
        trust: &TrustStore,
        rng: &mut R,
    ) -> Result<Lookup> {
        let Some(entry) = self.archive.get(&key) else {
            return Ok(Lookup::Unseen);
        };
        match self.policy {
            ReviewPolicy::FirstDecision => {
                let d = self.first_decisions.get(&key).copied();
                Ok(Lookup::Cached(d.unwrap_or_else(Decision::empty)))
            }
            ReviewPolicy::Review => {
                let archived = bwve_decide(entry, trust)?;
                let p_review = (1.0 - archived.confidence).clamp(0.0, 1.0);
                if rng.random_bool(p_review) {
                    Ok(Lookup::Review { archived })
                } else {
                    Ok(Lookup::Cached(archived))
                }
            }
        }
    }

    /// Decides on the archived feedback merged with `fresh`, archives
    /// `fresh`, and pays evidence to the fresh responders only.
    pub fn commit(
        &mut self,
        key: StateAction,
        mut fresh: FeedbackSet,
        trust: &mut TrustStore,
    ) -> Result<Decision> {
        fresh.canonicalize();
        let merged = match self.archive.get(&key) {
            Some(old) => old.merged(&fresh),
            None => fresh.clone(),
        };
        let decision = bwve_decide(&merged, trust)?;
        apply_evidence_updates(&decision, &fresh, trust)?;
        self.archive.record(key, &fresh);
        self.first_decisions.entry(key).or_insert(decision);
        Ok(decision)
    }

    /// Full review flow: lookup, query if needed, commit.
    pub fn resolve<R, F>(
        &mut self,
        key: StateAction,
        trust: &mut TrustStore,
        query: F,
        rng: &mut R,
    ) -> Result<Resolution>
    where
        R: Rng + ?Sized,
        F: FnOnce(&mut R) -> Result<FeedbackSet>,
    {
        match self.lookup(key, trust, rng)? {
            Lookup::Cached(decision) => Ok(Resolution {
                decision,
                queried: false,
            }),
            Lookup::Unseen | Lookup::Review { .. } => {
                let fresh = query(rng)?;
                let decision = self.commit(key, fresh, trust)?;
                Ok(Resolution {
                    decision,
                    queried: true,
                })
            }
        }
    }
}
