//! Feedback aggregation.
//!
//! [`bwve_decide`] blends a Bayesian posterior with a trust-weighted vote,
//! using the responders' average subjective-logic uncertainty as the blend
//! weight: fresh trainers (u = 1) reduce the decision to weighted voting and
//! the Bayesian term takes over as evidence accumulates. The confidence of a
//! decision is the gap between its two probabilities and doubles as the step
//! size for the evidence update ([`apply_evidence_updates`]).
//!
//! Pure Bayesian, weighted-voting and majority-voting baselines are exposed
//! for comparison via [`Method`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedback::{FeedbackSet, Polarity};
use crate::trust::TrustStore;

pub use crate::feedback::{FeedbackEvent, TrainerId};

/// Trust values are clamped into this band before entering log-likelihoods,
/// so a trainer at exactly 0 or 1 cannot zero out a hypothesis.
pub const TRUST_CLAMP: f64 = 1e-9;

pub const DEFAULT_PRIOR_POS: f64 = 0.5;

/// Probability pair for "positive is correct" / "negative is correct".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub pos: f64,
    pub neg: f64,
}

impl Posterior {
    pub const UNIFORM: Posterior = Posterior { pos: 0.5, neg: 0.5 };

    pub fn swapped(self) -> Posterior {
        Posterior {
            pos: self.neg,
            neg: self.pos,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reward {
    Positive,
    Negative,
    Tie,
}

impl Reward {
    pub fn polarity(self) -> Option<Polarity> {
        match self {
            Reward::Positive => Some(Polarity::Positive),
            Reward::Negative => Some(Polarity::Negative),
            Reward::Tie => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Reward::Positive => "positive",
            Reward::Negative => "negative",
            Reward::Tie => "tie",
        }
    }
}

impl From<Polarity> for Reward {
    fn from(p: Polarity) -> Self {
        match p {
            Polarity::Positive => Reward::Positive,
            Polarity::Negative => Reward::Negative,
        }
    }
}

impl fmt::Display for Reward {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of aggregating one feedback set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub reward: Reward,
    pub p_pos: f64,
    pub p_neg: f64,
    /// `|p_pos - p_neg|`.
    pub confidence: f64,
    /// Mean uncertainty of the distinct responders.
    pub avg_uncertainty: f64,
}

impl Decision {
    pub fn from_posterior(post: Posterior, avg_uncertainty: f64) -> Self {
        let reward = if post.pos > post.neg {
            Reward::Positive
        } else if post.neg > post.pos {
            Reward::Negative
        } else {
            Reward::Tie
        };
        Decision {
            reward,
            p_pos: post.pos,
            p_neg: post.neg,
            confidence: (post.pos - post.neg).abs(),
            avg_uncertainty,
        }
    }

    /// Decision for a query nobody answered.
    pub fn empty() -> Self {
        Decision {
            reward: Reward::Tie,
            p_pos: 0.5,
            p_neg: 0.5,
            confidence: 0.0,
            avg_uncertainty: 1.0,
        }
    }

    pub fn posterior(&self) -> Posterior {
        Posterior {
            pos: self.p_pos,
            neg: self.p_neg,
        }
    }
}

fn clamp_trust(p: f64) -> f64 {
    p.clamp(TRUST_CLAMP, 1.0 - TRUST_CLAMP)
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Bayesian posterior over the correct label given independent trainers.
///
/// `L_pos = Π_{i∈P} P(i) · Π_{j∈N} (1 − P(j))` and symmetrically for
/// `L_neg`, evaluated in log space.
pub fn bayes_posterior(pos_trusts: &[f64], neg_trusts: &[f64], prior_pos: f64) -> Posterior {
    let prior_pos = clamp_trust(prior_pos);
    let (mut ln_right_pos, mut ln_wrong_pos) = (0.0, 0.0);
    for &p in pos_trusts {
        let p = clamp_trust(p);
        ln_right_pos += p.ln();
        ln_wrong_pos += (1.0 - p).ln();
    }
    let (mut ln_right_neg, mut ln_wrong_neg) = (0.0, 0.0);
    for &p in neg_trusts {
        let p = clamp_trust(p);
        ln_right_neg += p.ln();
        ln_wrong_neg += (1.0 - p).ln();
    }
    let ln_pos = prior_pos.ln() + (ln_right_pos + ln_wrong_neg);
    let ln_neg = (1.0 - prior_pos).ln() + (ln_wrong_pos + ln_right_neg);
    let d = ln_pos - ln_neg;
    Posterior {
        pos: logistic(d),
        neg: logistic(-d),
    }
}

/// Trust-weighted vote share. Empty input or all-zero weights give (0.5, 0.5).
pub fn weighted_vote(pos_trusts: &[f64], neg_trusts: &[f64]) -> Posterior {
    let sum_pos: f64 = pos_trusts.iter().sum();
    let sum_neg: f64 = neg_trusts.iter().sum();
    let total = sum_pos + sum_neg;
    if total <= 0.0 {
        return Posterior::UNIFORM;
    }
    Posterior {
        pos: sum_pos / total,
        neg: sum_neg / total,
    }
}

/// Unweighted vote share; identical to [`weighted_vote`] with unit weights.
pub fn majority_vote(n_pos: usize, n_neg: usize) -> Posterior {
    let total = (n_pos + n_neg) as f64;
    if total == 0.0 {
        return Posterior::UNIFORM;
    }
    Posterior {
        pos: n_pos as f64 / total,
        neg: n_neg as f64 / total,
    }
}

/// Trust values of every positive and every negative event (with multiplicity).
fn split_trusts(feedback: &FeedbackSet, trust: &TrustStore) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut pos = Vec::with_capacity(feedback.len());
    let mut neg = Vec::with_capacity(feedback.len());
    for e in feedback {
        let p = trust.trustworthiness(&e.trainer_id)?;
        match e.value {
            Polarity::Positive => pos.push(p),
            Polarity::Negative => neg.push(p),
        }
    }
    Ok((pos, neg))
}

/// Mean uncertainty over the distinct trainers in the set; 1 when empty.
pub fn average_uncertainty(feedback: &FeedbackSet, trust: &TrustStore) -> Result<f64> {
    let trainers = feedback.distinct_trainers();
    if trainers.is_empty() {
        return Ok(1.0);
    }
    let mut sum = 0.0;
    for id in &trainers {
        sum += trust.get(id)?.uncertainty();
    }
    Ok(sum / trainers.len() as f64)
}

/// Uncertainty-weighted blend of the Bayesian and weighted-vote posteriors.
pub fn ensemble(bayes: Posterior, vote: Posterior, avg_uncertainty: f64) -> Posterior {
    let u = avg_uncertainty.clamp(0.0, 1.0);
    Posterior {
        pos: (1.0 - u) * bayes.pos + u * vote.pos,
        neg: (1.0 - u) * bayes.neg + u * vote.neg,
    }
}

/// Bayesian and weighted-voting ensemble decision.
pub fn bwve_decide(feedback: &FeedbackSet, trust: &TrustStore) -> Result<Decision> {
    if feedback.is_empty() {
        return Ok(Decision::empty());
    }
    let u = average_uncertainty(feedback, trust)?;
    bwve_decide_with_uncertainty(feedback, trust, u)
}

/// [`bwve_decide`] with the blend weight supplied by the caller.
pub fn bwve_decide_with_uncertainty(
    feedback: &FeedbackSet,
    trust: &TrustStore,
    avg_uncertainty: f64,
) -> Result<Decision> {
    if feedback.is_empty() {
        return Ok(Decision::empty());
    }
    let (pos, neg) = split_trusts(feedback, trust)?;
    let bayes = bayes_posterior(&pos, &neg, DEFAULT_PRIOR_POS);
    let vote = weighted_vote(&pos, &neg);
    Ok(Decision::from_posterior(
        ensemble(bayes, vote, avg_uncertainty),
        avg_uncertainty,
    ))
}

/// Adds `decision.confidence` of evidence to every event's trainer: alpha
/// for those who agreed with the decided reward, beta for those who did
/// not. Ties change nothing. A trainer with k events receives k increments.
///
/// The store is left untouched if any trainer is unknown.
pub fn apply_evidence_updates(
    decision: &Decision,
    feedback: &FeedbackSet,
    trust: &mut TrustStore,
) -> Result<()> {
    if let Some(missing) = feedback.iter().find(|e| !trust.contains(&e.trainer_id)) {
        return Err(Error::UnknownTrainer(missing.trainer_id.to_string()));
    }
    let Some(winner) = decision.reward.polarity() else {
        return Ok(());
    };
    let step = decision.confidence;
    for e in feedback {
        let direction = if e.value == winner {
            Polarity::Positive
        } else {
            Polarity::Negative
        };
        trust.add_evidence(&e.trainer_id, direction, step)?;
    }
    Ok(())
}

/// Aggregation method, the proposed ensemble plus three baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Bwve,
    Bayes,
    WeightedVote,
    Majority,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Bwve,
        Method::Bayes,
        Method::WeightedVote,
        Method::Majority,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Bwve => "bwve",
            Method::Bayes => "bayes",
            Method::WeightedVote => "weighted_vote",
            Method::Majority => "majority",
        }
    }

    /// Whether the method reads (and so needs to maintain) trust records.
    pub fn uses_trust(self) -> bool {
        !matches!(self, Method::Majority)
    }

    pub fn decide(self, feedback: &FeedbackSet, trust: &TrustStore) -> Result<Decision> {
        if feedback.is_empty() {
            return Ok(Decision::empty());
        }
        match self {
            Method::Bwve => bwve_decide(feedback, trust),
            Method::Bayes => {
                let (pos, neg) = split_trusts(feedback, trust)?;
                let u = average_uncertainty(feedback, trust)?;
                Ok(Decision::from_posterior(
                    bayes_posterior(&pos, &neg, DEFAULT_PRIOR_POS),
                    u,
                ))
            }
            Method::WeightedVote => {
                let (pos, neg) = split_trusts(feedback, trust)?;
                let u = average_uncertainty(feedback, trust)?;
                Ok(Decision::from_posterior(weighted_vote(&pos, &neg), u))
            }
            Method::Majority => Ok(Decision::from_posterior(
                majority_vote(
                    feedback.count(Polarity::Positive),
                    feedback.count(Polarity::Negative),
                ),
                1.0,
            )),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown aggregation method `{s}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trust::TrustRecord;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn set(events: &[(&str, Polarity)]) -> FeedbackSet {
        events
            .iter()
            .map(|(id, v)| FeedbackEvent::new(*id, *v))
            .collect()
    }

    fn store(records: &[(&str, f64, f64)]) -> TrustStore {
        let mut s = TrustStore::new();
        for (id, a, b) in records {
            s.insert(*id, TrustRecord::with_evidence(*a, *b, 0.5).unwrap());
        }
        s
    }

    use Polarity::{Negative as N, Positive as P};

    #[test]
    fn bayes_examples() {
        let p = bayes_posterior(&[0.8], &[], 0.5);
        assert_abs_diff_eq!(p.pos, 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(p.neg, 0.2, epsilon = 1e-12);

        // L_pos = 0.8 * 0.4 = 0.32, L_neg = 0.2 * 0.6 = 0.12
        let p = bayes_posterior(&[0.8], &[0.6], 0.5);
        assert_abs_diff_eq!(p.pos, 0.32 / 0.44, epsilon = 1e-12);
        assert_abs_diff_eq!(p.neg, 0.12 / 0.44, epsilon = 1e-12);
        assert_abs_diff_eq!(p.pos, 0.7273, epsilon = 1e-4);

        assert_eq!(bayes_posterior(&[], &[], 0.5), Posterior::UNIFORM);
    }

    #[test]
    fn bayes_survives_extreme_trust() {
        let p = bayes_posterior(&[1.0, 1.0], &[1.0], 0.5);
        assert!(p.pos.is_finite() && p.neg.is_finite());
        assert!(p.pos > p.neg);
        let p = bayes_posterior(&[0.0], &[], 0.5);
        assert!(p.neg > 0.999);
    }

    #[test]
    fn weighted_vote_examples() {
        let p = weighted_vote(&[0.8], &[0.6]);
        assert_abs_diff_eq!(p.pos, 0.8 / 1.4, epsilon = 1e-15);
        assert_abs_diff_eq!(p.neg, 0.6 / 1.4, epsilon = 1e-15);
        assert_abs_diff_eq!(p.pos, 0.5714, epsilon = 1e-4);

        let p = weighted_vote(&[1.0, 1.0], &[1.0]);
        assert_abs_diff_eq!(p.pos, 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.neg, 1.0 / 3.0, epsilon = 1e-15);

        assert_eq!(weighted_vote(&[], &[]), Posterior::UNIFORM);
        assert_eq!(weighted_vote(&[0.0], &[0.0]), Posterior::UNIFORM);
    }

    #[test]
    fn majority_examples() {
        assert_eq!(majority_vote(3, 1), Posterior { pos: 0.75, neg: 0.25 });
        assert_eq!(majority_vote(2, 2), Posterior::UNIFORM);
        assert_eq!(majority_vote(0, 5), Posterior { pos: 0.0, neg: 1.0 });
        assert_eq!(majority_vote(0, 0), Posterior::UNIFORM);
    }

    #[test]
    fn bwve_fresh_trainers_is_vote() {
        let s = store(&[("a", 0.0, 0.0), ("b", 0.0, 0.0), ("c", 0.0, 0.0)]);
        let d = bwve_decide(&set(&[("a", P), ("b", P), ("c", N)]), &s).unwrap();
        assert_eq!(d.avg_uncertainty, 1.0);
        assert_abs_diff_eq!(d.p_pos, 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.p_neg, 1.0 / 3.0, epsilon = 1e-12);
        assert_eq!(d.reward, Reward::Positive);
        assert_abs_diff_eq!(d.confidence, 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn bwve_two_trainer_example() {
        let s = store(&[("a", 8.0, 0.0), ("b", 3.0, 3.0)]);
        let d = bwve_decide(&set(&[("a", P), ("b", N)]), &s).unwrap();
        // u = (0.2 + 0.25) / 2, bayes = (0.9, 0.1), vote = (0.9/1.4, 0.5/1.4)
        let u = 0.225;
        let expect_pos = (1.0 - u) * 0.9 + u * (0.9 / 1.4);
        assert_abs_diff_eq!(d.avg_uncertainty, u, epsilon = 1e-12);
        assert_abs_diff_eq!(d.p_pos, expect_pos, epsilon = 1e-12);
        assert_abs_diff_eq!(d.p_pos, 0.8421, epsilon = 1e-4);
        assert_abs_diff_eq!(d.p_neg, 0.1579, epsilon = 1e-4);
        assert_abs_diff_eq!(d.confidence, 0.6843, epsilon = 1e-4);
        assert_eq!(d.reward, Reward::Positive);
    }

    #[test]
    fn bwve_symmetric_tie() {
        let s = store(&[("a", 2.0, 1.0), ("b", 2.0, 1.0)]);
        let d = bwve_decide(&set(&[("a", P), ("b", N)]), &s).unwrap();
        assert_eq!(d.reward, Reward::Tie);
        assert_eq!((d.p_pos, d.p_neg, d.confidence), (0.5, 0.5, 0.0));
    }

    #[test]
    fn bwve_empty() {
        let d = bwve_decide(&FeedbackSet::new(), &TrustStore::new()).unwrap();
        assert_eq!(d, Decision::empty());
    }

    #[test]
    fn bwve_unknown_trainer() {
        let err = bwve_decide(&set(&[("ghost", P)]), &TrustStore::new()).unwrap_err();
        assert!(err.to_string().contains("ghost"));
    }

    #[test]
    fn multiset_counts_distinct_for_uncertainty_only() {
        let s = store(&[("a", 2.0, 0.0), ("b", 0.0, 0.0)]);
        let fb = set(&[("a", P), ("a", P), ("b", N)]);
        // distinct: u_a = 0.5, u_b = 1 => 0.75; the duplicate does not count twice
        assert_abs_diff_eq!(average_uncertainty(&fb, &s).unwrap(), 0.75, epsilon = 1e-15);
        let d = bwve_decide(&fb, &s).unwrap();
        let vote = weighted_vote(&[0.75, 0.75], &[0.5]);
        let bayes = bayes_posterior(&[0.75, 0.75], &[0.5], 0.5);
        assert_abs_diff_eq!(
            d.p_pos,
            0.25 * bayes.pos + 0.75 * vote.pos,
            epsilon = 1e-12
        );
    }

    #[test]
    fn injected_uncertainty_extremes() {
        let s = store(&[("a", 3.0, 1.0), ("b", 0.5, 2.0), ("c", 1.0, 0.0)]);
        let fb = set(&[("a", P), ("b", N), ("c", P)]);
        let pos = [
            s.trustworthiness(&"a".into()).unwrap(),
            s.trustworthiness(&"c".into()).unwrap(),
        ];
        let neg = [s.trustworthiness(&"b".into()).unwrap()];
        let at_one = bwve_decide_with_uncertainty(&fb, &s, 1.0).unwrap();
        assert_eq!(at_one.posterior(), weighted_vote(&pos, &neg));
        let at_zero = bwve_decide_with_uncertainty(&fb, &s, 0.0).unwrap();
        assert_eq!(at_zero.posterior(), bayes_posterior(&pos, &neg, 0.5));
    }

    #[test]
    fn evidence_update_examples() {
        let mut s = store(&[("A", 0.0, 0.0), ("B", 0.0, 0.0)]);
        let d = Decision {
            reward: Reward::Positive,
            p_pos: 0.7,
            p_neg: 0.3,
            confidence: 0.4,
            avg_uncertainty: 1.0,
        };
        apply_evidence_updates(&d, &set(&[("A", P), ("B", N)]), &mut s).unwrap();
        assert_abs_diff_eq!(s.get(&"A".into()).unwrap().alpha(), 0.4);
        assert_abs_diff_eq!(s.get(&"B".into()).unwrap().beta(), 0.4);
        assert_eq!(s.get(&"A".into()).unwrap().beta(), 0.0);

        let before = s.clone();
        apply_evidence_updates(&Decision::empty(), &set(&[("A", P), ("B", N)]), &mut s).unwrap();
        assert_eq!(s, before);

        let neg = Decision {
            reward: Reward::Negative,
            p_pos: 0.375,
            p_neg: 0.625,
            confidence: 0.25,
            avg_uncertainty: 1.0,
        };
        apply_evidence_updates(&neg, &set(&[("A", P)]), &mut s).unwrap();
        assert_abs_diff_eq!(s.get(&"A".into()).unwrap().beta(), 0.25);
    }

    #[test]
    fn evidence_update_multiset_and_unknown() {
        let mut s = store(&[("A", 0.0, 0.0)]);
        let d = Decision::from_posterior(Posterior { pos: 0.8, neg: 0.2 }, 1.0);
        apply_evidence_updates(&d, &set(&[("A", P), ("A", P)]), &mut s).unwrap();
        assert_abs_diff_eq!(s.get(&"A".into()).unwrap().alpha(), 1.2, epsilon = 1e-12);

        let before = s.clone();
        let err = apply_evidence_updates(&d, &set(&[("A", P), ("Q", N)]), &mut s).unwrap_err();
        assert!(err.to_string().contains('Q'));
        assert_eq!(s, before);
    }

    #[test]
    fn method_parse_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("plurality".parse::<Method>().is_err());
    }

    fn trusts() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0..=1.0f64, 0..8)
    }

    proptest! {
        #[test]
        fn pairs_sum_to_one(pos in trusts(), neg in trusts(), u in 0.0..=1.0f64) {
            let b = bayes_posterior(&pos, &neg, 0.5);
            let v = weighted_vote(&pos, &neg);
            let e = ensemble(b, v, u);
            for p in [b, v, e, majority_vote(pos.len(), neg.len())] {
                prop_assert!((p.pos + p.neg - 1.0).abs() <= 1e-9);
            }
        }

        #[test]
        fn label_symmetry(pos in trusts(), neg in trusts()) {
            prop_assert_eq!(bayes_posterior(&neg, &pos, 0.5), bayes_posterior(&pos, &neg, 0.5).swapped());
            prop_assert_eq!(weighted_vote(&neg, &pos), weighted_vote(&pos, &neg).swapped());
            prop_assert_eq!(majority_vote(neg.len(), pos.len()), majority_vote(pos.len(), neg.len()).swapped());
        }

        #[test]
        fn majority_is_unit_weighted_vote(n in 0usize..40, m in 0usize..40) {
            prop_assert_eq!(majority_vote(n, m), weighted_vote(&vec![1.0; n], &vec![1.0; m]));
        }

        #[test]
        fn decision_invariants(
            evidence in prop::collection::vec((0.0..20.0f64, 0.0..20.0f64), 1..6),
            signs in prop::collection::vec(any::<bool>(), 1..10),
        ) {
            let mut s = TrustStore::new();
            for (i, (a, b)) in evidence.iter().enumerate() {
                s.insert(format!("t{i}"), TrustRecord::with_evidence(*a, *b, 0.5).unwrap());
            }
            let fb: FeedbackSet = signs
                .iter()
                .enumerate()
                .map(|(i, &pos)| FeedbackEvent::new(format!("t{}", i % evidence.len()), Polarity::from_bool(pos)))
                .collect();
            let d = bwve_decide(&fb, &s).unwrap();
            prop_assert!((d.p_pos + d.p_neg - 1.0).abs() <= 1e-9);
            prop_assert_eq!(d.confidence, (d.p_pos - d.p_neg).abs());

            let flipped = bwve_decide(&fb.flipped(), &s).unwrap();
            prop_assert!((flipped.p_pos - d.p_neg).abs() <= 1e-12);

            let mut reversed: FeedbackSet = fb.events().iter().rev().cloned().collect();
            let r = bwve_decide(&reversed, &s).unwrap();
            if d.confidence > 1e-12 {
                prop_assert_eq!(r.reward, d.reward);
            }
            reversed.canonicalize();
            let c = bwve_decide(&reversed, &s).unwrap();
            prop_assert!((c.p_pos - d.p_pos).abs() <= 1e-12);
        }
    }
}
