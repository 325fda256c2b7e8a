//! Domain types shared by every other module: bids, value distributions,
//! mechanism outcomes, and utility arithmetic.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by domain-type construction and utility arithmetic.
#[derive(Debug, Error, PartialEq)]
pub enum CoreError {
    #[error("bid amount must be a finite non-negative real, got {0}")]
    InvalidAmount(f64),
    #[error("duplicate bid identity {0:?}")]
    DuplicateIdentity(String),
    #[error("invalid value distribution: {0}")]
    InvalidDistribution(String),
    #[error("bid index {index} out of range for outcome of length {len}")]
    BadBidIndex { index: usize, len: usize },
    #[error("expected one true value per bid ({bids} bids, {values} values)")]
    ValueCountMismatch { bids: usize, values: usize },
}

/// The trust model a mechanism is defined in.
///
/// In the plain model the miner freely chooses which bids to include and the
/// blockchain enforces the remaining rules; in the MPC-assisted model an
/// ideal functionality run by the miners enforces the whole mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    Plain,
    MpcAssisted,
}

/// A single bid: an opaque identity plus a non-negative finite amount.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bid {
    pub identity: String,
    pub amount: f64,
}

impl Bid {
    pub fn new(identity: impl Into<String>, amount: f64) -> Result<Self, CoreError> {
        if !amount.is_finite() || amount < 0.0 {
            return Err(CoreError::InvalidAmount(amount));
        }
        Ok(Bid {
            identity: identity.into(),
            amount,
        })
    }
}

/// An ordered multiset of bids with pairwise-distinct identities.
///
/// The length may differ from the number of users: strategic players may
/// inject extra bids or drop out entirely. Empty vectors are legal and
/// evaluate to the zero outcome.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BidVector {
    bids: Vec<Bid>,
}

impl BidVector {
    pub fn new(bids: Vec<Bid>) -> Result<Self, CoreError> {
        let mut seen = std::collections::HashSet::new();
        for bid in &bids {
            if !bid.amount.is_finite() || bid.amount < 0.0 {
                return Err(CoreError::InvalidAmount(bid.amount));
            }
            if !seen.insert(bid.identity.as_str()) {
                return Err(CoreError::DuplicateIdentity(bid.identity.clone()));
            }
        }
        Ok(BidVector { bids })
    }

    /// Builds a vector from bare amounts, assigning identities `b0`, `b1`, ...
    pub fn from_amounts(amounts: &[f64]) -> Result<Self, CoreError> {
        let bids = amounts
            .iter()
            .enumerate()
            .map(|(i, &a)| Bid::new(format!("b{i}"), a))
            .collect::<Result<Vec<_>, _>>()?;
        BidVector::new(bids)
    }

    pub fn bids(&self) -> &[Bid] {
        &self.bids
    }

    pub fn amounts(&self) -> Vec<f64> {
        self.bids.iter().map(|b| b.amount).collect()
    }

    pub fn len(&self) -> usize {
        self.bids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bids.is_empty()
    }
}

/// A finite value distribution with pre-computed summary statistics.
///
/// `median` is the smallest support point whose CDF is at least 1/2,
/// `sqrt_moment` is `E[sqrt(X)]`, and `max` is the largest support point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueDistribution {
    support: Vec<f64>,
    probabilities: Vec<f64>,
    median: f64,
    sqrt_moment: f64,
    max: f64,
}

impl ValueDistribution {
    pub fn new(support: Vec<f64>, probabilities: Vec<f64>) -> Result<Self, CoreError> {
        if support.is_empty() || support.len() != probabilities.len() {
            return Err(CoreError::InvalidDistribution(
                "support and probabilities must be non-empty and of equal length".into(),
            ));
        }
        for w in support.windows(2) {
            // NaNs fall through here and are caught by the finiteness check.
            if w[0] >= w[1] || w[0].is_nan() || w[1].is_nan() {
                return Err(CoreError::InvalidDistribution(
                    "support must be strictly ascending".into(),
                ));
            }
        }
        if support[0] < 0.0 || !support.iter().all(|x| x.is_finite()) {
            return Err(CoreError::InvalidDistribution(
                "support values must be finite and non-negative".into(),
            ));
        }
        if probabilities.iter().any(|&p| p < 0.0) {
            return Err(CoreError::InvalidDistribution(
                "probabilities must be non-negative".into(),
            ));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(CoreError::InvalidDistribution(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        let mut cdf = 0.0;
        let mut median = support[support.len() - 1];
        for (x, p) in support.iter().zip(&probabilities) {
            cdf += p;
            if cdf >= 0.5 - 1e-12 {
                median = *x;
                break;
            }
        }
        let sqrt_moment = support
            .iter()
            .zip(&probabilities)
            .map(|(x, p)| x.sqrt() * p)
            .sum();
        let max = support[support.len() - 1];
        Ok(ValueDistribution {
            support,
            probabilities,
            median,
            sqrt_moment,
            max,
        })
    }

    /// A distribution placing all mass on a single value.
    pub fn point_mass(value: f64) -> Result<Self, CoreError> {
        ValueDistribution::new(vec![value], vec![1.0])
    }

    /// A uniform distribution over the given ascending support.
    pub fn uniform(support: Vec<f64>) -> Result<Self, CoreError> {
        let n = support.len();
        ValueDistribution::new(support, vec![1.0 / n as f64; n])
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn median(&self) -> f64 {
        self.median
    }

    /// `E[sqrt(X)]`, the scale term in the miner-revenue limit.
    pub fn sqrt_moment(&self) -> f64 {
        self.sqrt_moment
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    /// `Pr[X >= x]`.
    pub fn prob_at_least(&self, x: f64) -> f64 {
        self.support
            .iter()
            .zip(&self.probabilities)
            .filter(|(s, _)| **s >= x - 1e-12)
            .map(|(_, p)| p)
            .sum()
    }

    /// `E[f(X)]` for an arbitrary integrand.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.support
            .iter()
            .zip(&self.probabilities)
            .map(|(x, p)| f(*x) * p)
            .sum()
    }
}

/// The exact expectation output of a mechanism on one bid vector: per-bid
/// confirmation probabilities `x`, per-bid expected payments `p`, and the
/// expected total miner revenue `mu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    pub mu: f64,
}

impl Outcome {
    pub fn zero(n: usize) -> Self {
        Outcome {
            x: vec![0.0; n],
            p: vec![0.0; n],
            mu: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Payment conditioned on confirmation, `p_i / x_i` where `x_i > 0`.
    ///
    /// The mechanism definitions only constrain confirmed bids (unconfirmed
    /// bids pay 0), so the conditional value is undefined at `x_i = 0` and
    /// `None` is returned there.
    pub fn conditional_payment(&self, i: usize) -> Option<f64> {
        if self.x[i] > 0.0 {
            Some(self.p[i] / self.x[i])
        } else {
            None
        }
    }
}

/// One realized draw of a (possibly randomized) mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizedOutcome {
    pub confirmed: Vec<bool>,
    pub payments: Vec<f64>,
    pub miner_revenue: f64,
}

/// Expected utility of a single user: `v * x - p`.
pub fn user_utility(true_value: f64, x: f64, p: f64) -> f64 {
    debug_assert!((0.0..=1.0 + 1e-12).contains(&x));
    true_value * x - p
}

/// One coalition member's footprint inside an evaluated bid vector.
///
/// `bid_indices` lists every bid the member posted (empty means the member
/// dropped out). Exactly one of the member's bids can carry its real
/// transaction; the member routes its value through the bid with the highest
/// confirmation probability and pays for all of them, so the expected member
/// utility is `v * max(x) - sum(p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MemberBids {
    pub true_value: f64,
    pub bid_indices: Vec<usize>,
}

/// Joint expected utility of a miner-user coalition.
///
/// Sums each member's utility, subtracts the expected payments of injected
/// fake bids, and adds the coalition's share of the miner revenue
/// (`miner_share` is the controlled miner fraction in the MPC-assisted model
/// and 1 in the plain model; pass 0 for pure user coalitions).
pub fn coalition_utility(
    outcome: &Outcome,
    members: &[MemberBids],
    fake_bid_indices: &[usize],
    miner_share: f64,
) -> Result<f64, CoreError> {
    let len = outcome.len();
    let check = |index: usize| -> Result<usize, CoreError> {
        if index < len {
            Ok(index)
        } else {
            Err(CoreError::BadBidIndex { index, len })
        }
    };
    let mut total = miner_share * outcome.mu;
    for member in members {
        let mut best_x = 0.0f64;
        for &i in &member.bid_indices {
            let i = check(i)?;
            best_x = best_x.max(outcome.x[i]);
            total -= outcome.p[i];
        }
        if !member.bid_indices.is_empty() {
            total += member.true_value * best_x;
        }
    }
    for &i in fake_bid_indices {
        total -= outcome.p[check(i)?];
    }
    Ok(total)
}

/// Expected social welfare: the sum of all users' utilities plus the miner
/// revenue. Expects one true value per (real) bid.
pub fn social_welfare(outcome: &Outcome, true_values: &[f64]) -> Result<f64, CoreError> {
    if true_values.len() != outcome.len() {
        return Err(CoreError::ValueCountMismatch {
            bids: outcome.len(),
            values: true_values.len(),
        });
    }
    let users: f64 = outcome
        .x
        .iter()
        .zip(&outcome.p)
        .zip(true_values)
        .map(|((x, p), v)| v * x - p)
        .sum();
    Ok(users + outcome.mu)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bid_rejects_negative_and_nonfinite() {
        assert!(Bid::new("a", -1.0).is_err());
        assert!(Bid::new("a", f64::NAN).is_err());
        assert!(Bid::new("a", f64::INFINITY).is_err());
        assert!(Bid::new("a", 0.0).is_ok());
    }

    #[test]
    fn bid_vector_rejects_duplicate_identities() {
        let bids = vec![Bid::new("a", 1.0).unwrap(), Bid::new("a", 2.0).unwrap()];
        assert_eq!(
            BidVector::new(bids).unwrap_err(),
            CoreError::DuplicateIdentity("a".into())
        );
    }

    #[test]
    fn empty_bid_vector_is_legal() {
        let v = BidVector::from_amounts(&[]).unwrap();
        assert!(v.is_empty());
    }

    #[test]
    fn distribution_statistics() {
        let d = ValueDistribution::uniform(vec![0.5, 2.0]).unwrap();
        assert_eq!(d.median(), 0.5);
        assert!((d.sqrt_moment() - (0.5f64.sqrt() + 2.0f64.sqrt()) / 2.0).abs() < 1e-15);
        assert_eq!(d.max(), 2.0);
        assert_eq!(d.prob_at_least(0.5), 1.0);
        assert_eq!(d.prob_at_least(1.0), 0.5);
    }

    #[test]
    fn distribution_rejects_bad_probabilities() {
        assert!(ValueDistribution::new(vec![1.0, 2.0], vec![0.6, 0.6]).is_err());
        assert!(ValueDistribution::new(vec![2.0, 1.0], vec![0.5, 0.5]).is_err());
        assert!(ValueDistribution::new(vec![], vec![]).is_err());
    }

    #[test]
    fn median_is_smallest_point_with_cdf_half() {
        let d = ValueDistribution::new(vec![1.0, 4.0, 9.0], vec![0.25, 0.25, 0.5]).unwrap();
        assert_eq!(d.median(), 4.0);
    }

    // Appendix-style staircase numbers: v = 10, x = 1, p = 7 gives utility 3.
    #[test]
    fn user_utility_examples() {
        assert_eq!(user_utility(10.0, 1.0, 7.0), 3.0);
        assert!(user_utility(0.0, 0.7, 0.5) <= 0.0);
        assert!((user_utility(4.0, 0.5, 1.0) - 1.0).abs() < 1e-15);
    }

    // Proof-sketch construction: miner plus one confirmed user with value
    // 5.65 bidding v + sqrt(32)/2 in the proportional auction (r=8, eps=2)
    // pools 1.65 of user surplus with 2.828... of miner transfer.
    #[test]
    fn coalition_utility_proportional_construction() {
        let rule = crate::mechanisms::make_proportional(crate::mechanisms::ProportionalParams {
            r: 8.0,
            epsilon: 2.0,
            rho: 1.0,
            model: Model::Plain,
        })
        .unwrap();
        let bid = 5.65 + 32f64.sqrt() / 2.0;
        let outcome = rule.evaluate(&BidVector::from_amounts(&[bid]).unwrap());
        let members = [MemberBids {
            true_value: 5.65,
            bid_indices: vec![0],
        }];
        let utility = coalition_utility(&outcome, &members, &[], 1.0).unwrap();
        assert!((utility - (1.65 + 2.0 * 2f64.sqrt())).abs() < 1e-9);
    }

    #[test]
    fn coalition_utility_miner_share_only() {
        let outcome = Outcome {
            x: vec![0.0, 0.0],
            p: vec![0.0, 0.0],
            mu: 4.0,
        };
        let u = coalition_utility(&outcome, &[], &[], 0.5).unwrap();
        assert_eq!(u, 2.0);
    }

    #[test]
    fn coalition_utility_rejects_bad_index() {
        let outcome = Outcome::zero(1);
        let members = [MemberBids {
            true_value: 1.0,
            bid_indices: vec![3],
        }];
        assert_eq!(
            coalition_utility(&outcome, &members, &[], 1.0).unwrap_err(),
            CoreError::BadBidIndex { index: 3, len: 1 }
        );
    }

    #[test]
    fn social_welfare_empty_is_zero() {
        let outcome = Outcome::zero(0);
        assert_eq!(social_welfare(&outcome, &[]).unwrap(), 0.0);
    }

    #[test]
    fn social_welfare_requires_one_value_per_bid() {
        let outcome = Outcome::zero(2);
        assert!(social_welfare(&outcome, &[1.0]).is_err());
    }
}
