//! Subjective-logic trust model.
//!
//! Every trainer carries positive evidence `alpha`, negative evidence `beta`
//! and a base rate. Evidence maps to belief, disbelief and uncertainty masses
//! with a fixed non-informative prior weight of 2, and the projected
//! probability `belief + base_rate * uncertainty` is the trainer's
//! trustworthiness.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedback::{Polarity, TrainerId};

/// Weight of the non-informative prior in the evidence-to-opinion mapping.
pub const PRIOR_WEIGHT: f64 = 2.0;

pub const DEFAULT_BASE_RATE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustRecord {
    alpha: f64,
    beta: f64,
    base_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeliefMass {
    pub belief: f64,
    pub disbelief: f64,
    pub uncertainty: f64,
}

impl Default for TrustRecord {
    fn default() -> Self {
        TrustRecord::fresh(DEFAULT_BASE_RATE)
    }
}

impl TrustRecord {
    /// A record with no evidence yet.
    pub fn fresh(base_rate: f64) -> Self {
        assert!(
            (0.0..=1.0).contains(&base_rate),
            "base rate must lie in [0, 1], got {base_rate}"
        );
        TrustRecord {
            alpha: 0.0,
            beta: 0.0,
            base_rate,
        }
    }

    pub fn with_evidence(alpha: f64, beta: f64, base_rate: f64) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("beta", beta)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        if !(0.0..=1.0).contains(&base_rate) {
            return Err(Error::InvalidArgument(format!(
                "base_rate must lie in [0, 1], got {base_rate}"
            )));
        }
        Ok(TrustRecord {
            alpha,
            beta,
            base_rate,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn base_rate(&self) -> f64 {
        self.base_rate
    }

    pub fn total_evidence(&self) -> f64 {
        self.alpha + self.beta
    }

    pub fn belief_mass(&self) -> BeliefMass {
        let denom = self.alpha + self.beta + PRIOR_WEIGHT;
        BeliefMass {
            belief: self.alpha / denom,
            disbelief: self.beta / denom,
            uncertainty: PRIOR_WEIGHT / denom,
        }
    }

    pub fn uncertainty(&self) -> f64 {
        PRIOR_WEIGHT / (self.alpha + self.beta + PRIOR_WEIGHT)
    }

    /// Projected probability `P(x) = b + a·u`, evaluated over the shared
    /// denominator so balanced evidence at `a = 0.5` gives exactly 0.5.
    pub fn trustworthiness(&self) -> f64 {
        let denom = self.alpha + self.beta + PRIOR_WEIGHT;
        ((self.alpha + self.base_rate * PRIOR_WEIGHT) / denom).clamp(0.0, 1.0)
    }

    /// Returns the record with `step` added to alpha (positive) or beta
    /// (negative).
    pub fn add_evidence(self, direction: Polarity, step: f64) -> Result<Self> {
        if !(step.is_finite() && step >= 0.0) {
            return Err(Error::NegativeStep(step));
        }
        let mut next = self;
        match direction {
            Polarity::Positive => next.alpha += step,
            Polarity::Negative => next.beta += step,
        }
        Ok(next)
    }
}

/// Trust records keyed by trainer, owned by one session or run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrustStore {
    records: BTreeMap<TrainerId, TrustRecord>,
    base_rate: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct TrustRow {
    trainer_id: String,
    alpha: f64,
    beta: f64,
    base_rate: f64,
}

impl TrustStore {
    pub fn new() -> Self {
        Self::with_base_rate(DEFAULT_BASE_RATE)
    }

    /// Store whose newly registered trainers start at `base_rate`.
    pub fn with_base_rate(base_rate: f64) -> Self {
        assert!((0.0..=1.0).contains(&base_rate));
        TrustStore {
            records: BTreeMap::new(),
            base_rate,
        }
    }

    pub fn base_rate(&self) -> f64 {
        self.base_rate
    }

    /// Registers a trainer with a fresh record; existing records are kept.
    pub fn register(&mut self, id: impl Into<TrainerId>) -> &TrustRecord {
        let base_rate = self.base_rate;
        self.records
            .entry(id.into())
            .or_insert_with(|| TrustRecord::fresh(base_rate))
    }

    pub fn insert(&mut self, id: impl Into<TrainerId>, record: TrustRecord) {
        self.records.insert(id.into(), record);
    }

    pub fn contains(&self, id: &TrainerId) -> bool {
        self.records.contains_key(id)
    }

    pub fn get(&self, id: &TrainerId) -> Result<&TrustRecord> {
        self.records
            .get(id)
            .ok_or_else(|| Error::UnknownTrainer(id.to_string()))
    }

    pub fn trustworthiness(&self, id: &TrainerId) -> Result<f64> {
        self.get(id).map(TrustRecord::trustworthiness)
    }

    pub fn add_evidence(&mut self, id: &TrainerId, direction: Polarity, step: f64) -> Result<()> {
        let rec = self
            .records
            .get_mut(id)
            .ok_or_else(|| Error::UnknownTrainer(id.to_string()))?;
        *rec = rec.add_evidence(direction, step)?;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TrainerId, &TrustRecord)> {
        self.records.iter()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for (id, rec) in &self.records {
            w.serialize(TrustRow {
                trainer_id: id.0.clone(),
                alpha: rec.alpha,
                beta: rec.beta,
                base_rate: rec.base_rate,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a store written by [`TrustStore::write_csv`]. Trainers added
    /// later start at `base_rate`.
    pub fn read_csv<R: io::Read>(reader: R, base_rate: f64) -> Result<Self> {
        let mut store = TrustStore::with_base_rate(base_rate);
        let mut r = csv::Reader::from_reader(reader);
        for row in r.deserialize() {
            let row: TrustRow = row?;
            let rec = TrustRecord::with_evidence(row.alpha, row.beta, row.base_rate)?;
            store.insert(row.trainer_id, rec);
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load(path: &Path, base_rate: f64) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?, base_rate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn rec(alpha: f64, beta: f64) -> TrustRecord {
        TrustRecord::with_evidence(alpha, beta, 0.5).unwrap()
    }

    #[test]
    fn belief_mass_examples() {
        let m = rec(0.0, 0.0).belief_mass();
        assert_eq!((m.belief, m.disbelief, m.uncertainty), (0.0, 0.0, 1.0));

        let m = rec(2.0, 0.0).belief_mass();
        assert_abs_diff_eq!(m.belief, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(m.disbelief, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.uncertainty, 0.5, epsilon = 1e-15);

        let m = rec(2.0, 2.0).belief_mass();
        for v in [m.belief, m.disbelief, m.uncertainty] {
            assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn trustworthiness_examples() {
        assert_eq!(rec(0.0, 0.0).trustworthiness(), 0.5);
        assert_abs_diff_eq!(rec(8.0, 0.0).trustworthiness(), 0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(rec(3.0, 3.0).trustworthiness(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn add_evidence_examples() {
        let r = rec(0.0, 0.0).add_evidence(Polarity::Positive, 0.4).unwrap();
        assert_eq!((r.alpha(), r.beta()), (0.4, 0.0));

        let r = rec(1.0, 2.0).add_evidence(Polarity::Negative, 0.25).unwrap();
        assert_eq!((r.alpha(), r.beta()), (1.0, 2.25));

        let r0 = rec(1.0, 2.0);
        assert_eq!(r0.add_evidence(Polarity::Positive, 0.0).unwrap(), r0);
    }

    #[test]
    fn negative_step_rejected() {
        let err = rec(1.0, 1.0)
            .add_evidence(Polarity::Positive, -0.1)
            .unwrap_err();
        assert!(matches!(err, Error::NegativeStep(_)));
        assert!(rec(1.0, 1.0)
            .add_evidence(Polarity::Negative, f64::NAN)
            .is_err());
    }

    #[test]
    fn store_rejects_unknown_trainer() {
        let mut store = TrustStore::new();
        store.register("a");
        let err = store
            .add_evidence(&"zed".into(), Polarity::Positive, 1.0)
            .unwrap_err();
        assert!(err.to_string().contains("zed"));
    }

    #[test]
    fn register_keeps_existing_record() {
        let mut store = TrustStore::new();
        store.insert("a", rec(4.0, 1.0));
        store.register("a");
        assert_eq!(store.get(&"a".into()).unwrap().alpha(), 4.0);
    }

    #[test]
    fn csv_round_trip() {
        let mut store = TrustStore::new();
        store.insert("t1", rec(0.1, 2.7));
        store.insert("t2", TrustRecord::with_evidence(3.0, 0.0, 0.6).unwrap());
        let mut buf = Vec::new();
        store.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("trainer_id,alpha,beta,base_rate\n"));
        let back = TrustStore::read_csv(buf.as_slice(), 0.5).unwrap();
        assert_eq!(back, store);
    }

    proptest! {
        #[test]
        fn masses_sum_to_one(alpha in 0.0..1e6f64, beta in 0.0..1e6f64) {
            let m = rec(alpha, beta).belief_mass();
            prop_assert!((m.belief + m.disbelief + m.uncertainty - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn uncertainty_strictly_decreasing(e1 in 0.0..1e4f64, delta in 1e-6..1e4f64) {
            let lo = rec(e1, 0.0).uncertainty();
            let hi = rec(e1 / 2.0, e1 / 2.0 + delta).uncertainty();
            prop_assert!(lo > hi);
        }

        #[test]
        fn trust_monotone(alpha in 0.0..1e3f64, beta in 0.0..1e3f64, d in 0.0..1e3f64) {
            let base = rec(alpha, beta).trustworthiness();
            prop_assert!(rec(alpha + d, beta).trustworthiness() >= base);
            prop_assert!(rec(alpha, beta + d).trustworthiness() <= base);
        }

        #[test]
        fn balanced_evidence_is_half(e in 0.0..1e6f64) {
            prop_assert_eq!(rec(e, e).trustworthiness(), 0.5);
        }
    }
}
