//! Strategic-deviation audits and checkers for the quantitative bounds the
//! mechanisms must honor.
//!
//! An audit measures the worst gain a strategic individual or coalition can
//! extract over the enumerated deviation space, relative to fully honest
//! play, with outcomes computed as exact expectations. The measured gain is
//! therefore a certified lower bound on the true supremum; a mechanism that
//! satisfies an epsilon-incentive-compatibility claim can never audit above
//! its epsilon.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::{
    coalition_utility, BidVector, CoreError, MemberBids, Model, ValueDistribution,
};
use crate::mechanisms::{Mechanism, MechanismRule};
use crate::strategy::{
    enumerate_strategies, BidGrid, CoalitionSpec, EnumerationContext, Inclusion, Limits, Strategy,
    StrategyError,
};
use crate::TOL;

#[derive(Debug, Error)]
pub enum AuditError {
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("property and coalition are inconsistent: {0}")]
    InconsistentCoalition(String),
    #[error(
        "exact Bayesian enumeration needs {profiles} joint profiles, cap is {cap}; \
         use the monte-carlo method"
    )]
    ExactCapExceeded { profiles: u128, cap: u128 },
    #[error("checker not applicable: {0}")]
    NotApplicable(String),
}

/// Which incentive-compatibility property an audit certifies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Property {
    #[serde(rename = "UIC")]
    Uic,
    #[serde(rename = "MIC")]
    Mic,
    #[serde(rename = "SCP")]
    Scp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setting {
    ExPost,
    Bayesian,
}

/// Honest-side world of an ex post audit: the bids posted by users outside
/// the coalition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub honest_bids: Vec<f64>,
}

/// How a Bayesian audit takes its expectation over honest bids.
#[derive(Debug, Clone, Copy)]
pub enum BayesianMethod {
    /// Full enumeration of `support^n_honest` joint profiles; errors above
    /// the cap.
    Exact { cap: u128 },
    /// Seeded sampling with common random numbers across strategies.
    MonteCarlo { samples: usize, seed: u64 },
}

impl Default for BayesianMethod {
    fn default() -> Self {
        BayesianMethod::Exact { cap: 1_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridStats {
    pub points: usize,
    pub max_cell_width: f64,
}

/// The deviation that attains the measured gain, plus the world it lives in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub honest_bids: Vec<f64>,
    pub member_true_values: Vec<f64>,
    pub strategy: Strategy,
}

/// Result of one audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub property: Property,
    pub setting: Setting,
    pub rho: f64,
    pub c: usize,
    #[serde(rename = "gain")]
    pub measured_gain: f64,
    #[serde(rename = "epsilon")]
    pub target_epsilon: f64,
    pub pass: bool,
    pub witness: Option<Witness>,
    pub grid_stats: GridStats,
    pub strategies: usize,
    pub mc_stderr: Option<f64>,
}

fn check_consistency(
    property: Property,
    coalition: &CoalitionSpec,
    model: Model,
) -> Result<(), AuditError> {
    let bad = |msg: &str| Err(AuditError::InconsistentCoalition(msg.into()));
    match property {
        Property::Uic => {
            if coalition.c() != 1 || coalition.rho != 0.0 {
                return bad("UIC audits take exactly one user and rho = 0");
            }
        }
        Property::Mic => {
            if coalition.c() != 0 || coalition.rho <= 0.0 {
                return bad("MIC audits take no users and rho > 0");
            }
        }
        Property::Scp => {
            if coalition.c() == 0 || coalition.rho <= 0.0 {
                return bad("SCP audits take at least one user and rho > 0");
            }
        }
    }
    if model == Model::Plain && coalition.rho != 0.0 && coalition.rho != 1.0 {
        return bad("the plain model fixes the miner fraction to 1");
    }
    Ok(())
}

/// The coalition's share of the miner revenue: the controlled fraction in
/// the MPC-assisted model, all of it in the plain model (when the coalition
/// includes the miner at all).
fn miner_share(coalition: &CoalitionSpec, model: Model) -> f64 {
    match model {
        Model::Plain => {
            if coalition.rho > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Model::MpcAssisted => coalition.rho,
    }
}

/// Expected coalition utility of one strategy against one fixed honest bid
/// profile.
fn strategy_utility(
    rule: &MechanismRule,
    honest_bids: &[f64],
    coalition: &CoalitionSpec,
    strategy: &Strategy,
    share: f64,
) -> Result<f64, AuditError> {
    let mut amounts = honest_bids.to_vec();
    let mut members = Vec::with_capacity(coalition.c());
    for (member, bids) in coalition.user_members.iter().zip(&strategy.member_bids) {
        let start = amounts.len();
        amounts.extend_from_slice(bids);
        members.push(MemberBids {
            true_value: member.1,
            bid_indices: (start..amounts.len()).collect(),
        });
    }
    let fake_start = amounts.len();
    amounts.extend_from_slice(&strategy.fake_bids);
    let fakes: Vec<usize> = (fake_start..amounts.len()).collect();

    let bids = BidVector::from_amounts(&amounts)?;
    let outcome = match &strategy.inclusion {
        Inclusion::Honest => rule.evaluate(&bids),
        Inclusion::Subset(sel) => rule.evaluate_block(&bids, sel),
    };
    Ok(coalition_utility(&outcome, &members, &fakes, share)?)
}

/// Measures the worst ex post gain of `coalition` over all enumerated
/// deviations, with the remaining users' bids fixed to `scenario`.
pub fn audit_ex_post(
    rule: &MechanismRule,
    property: Property,
    coalition: &CoalitionSpec,
    scenario: &Scenario,
    grid: &BidGrid,
    limits: &Limits,
    target_epsilon: f64,
) -> Result<AuditReport, AuditError> {
    check_consistency(property, coalition, rule.model())?;
    let ctx = EnumerationContext {
        model: rule.model(),
        honest_count: scenario.honest_bids.len(),
        block_size: rule.block_size(),
    };
    let strategies = enumerate_strategies(coalition, grid, limits, &ctx)?;
    let share = miner_share(coalition, rule.model());

    let honest_utility =
        strategy_utility(rule, &scenario.honest_bids, coalition, &strategies[0], share)?;
    let mut best_gain = 0.0f64;
    let mut best: &Strategy = &strategies[0];
    for strategy in &strategies[1..] {
        let gain =
            strategy_utility(rule, &scenario.honest_bids, coalition, strategy, share)?
                - honest_utility;
        if gain > best_gain {
            best_gain = gain;
            best = strategy;
        }
    }
    Ok(AuditReport {
        property,
        setting: Setting::ExPost,
        rho: coalition.rho,
        c: coalition.c(),
        measured_gain: best_gain,
        target_epsilon,
        pass: best_gain <= target_epsilon + TOL,
        witness: Some(Witness {
            honest_bids: scenario.honest_bids.clone(),
            member_true_values: coalition.true_values(),
            strategy: best.clone(),
        }),
        grid_stats: GridStats {
            points: grid.len(),
            max_cell_width: grid.max_cell_width(),
        },
        strategies: strategies.len(),
        mc_stderr: None,
    })
}

/// Measures the worst Bayesian gain of `coalition`, the expectation taken
/// over `n_honest` i.i.d. honest bids from `d`.
#[allow(clippy::too_many_arguments)]
pub fn audit_bayesian(
    rule: &MechanismRule,
    property: Property,
    coalition: &CoalitionSpec,
    d: &ValueDistribution,
    n_honest: usize,
    grid: &BidGrid,
    limits: &Limits,
    method: BayesianMethod,
    target_epsilon: f64,
) -> Result<AuditReport, AuditError> {
    check_consistency(property, coalition, rule.model())?;
    // Bayesian play happens before anyone sees the bids, so there is no
    // strategic inclusion to enumerate even for plain-model rules.
    let ctx = EnumerationContext {
        model: Model::MpcAssisted,
        honest_count: n_honest,
        block_size: rule.block_size(),
    };
    let strategies = enumerate_strategies(coalition, grid, limits, &ctx)?;
    let share = miner_share(coalition, rule.model());

    // Honest bid profiles and their weights (probability mass or 1/T).
    let profiles: Vec<(Vec<f64>, f64)> = match method {
        BayesianMethod::Exact { cap } => {
            let count = (d.support().len() as u128)
                .checked_pow(n_honest as u32)
                .unwrap_or(u128::MAX);
            if count > cap {
                return Err(AuditError::ExactCapExceeded {
                    profiles: count,
                    cap,
                });
            }
            enumerate_profiles(d, n_honest)
        }
        BayesianMethod::MonteCarlo { samples, seed } => {
            sample_profiles(d, n_honest, samples, seed)
        }
    };

    let honest_utilities: Vec<f64> = profiles
        .iter()
        .map(|(profile, _)| strategy_utility(rule, profile, coalition, &strategies[0], share))
        .collect::<Result<_, _>>()?;

    let mut best_gain = 0.0f64;
    let mut best: &Strategy = &strategies[0];
    let mut best_gains_per_profile: Option<Vec<f64>> = None;
    for strategy in &strategies[1..] {
        let mut mean = 0.0;
        let mut gains = Vec::with_capacity(profiles.len());
        for ((profile, weight), honest) in profiles.iter().zip(&honest_utilities) {
            let gain = strategy_utility(rule, profile, coalition, strategy, share)? - honest;
            mean += weight * gain;
            gains.push(gain);
        }
        if mean > best_gain {
            best_gain = mean;
            best = strategy;
            if matches!(method, BayesianMethod::MonteCarlo { .. }) {
                best_gains_per_profile = Some(gains);
            }
        }
    }

    let mc_stderr = best_gains_per_profile.map(|gains| {
        let t = gains.len() as f64;
        let mean: f64 = gains.iter().sum::<f64>() / t;
        let var: f64 = gains.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (t - 1.0).max(1.0);
        (var / t).sqrt()
    });

    Ok(AuditReport {
        property,
        setting: Setting::Bayesian,
        rho: coalition.rho,
        c: coalition.c(),
        measured_gain: best_gain,
        target_epsilon,
        pass: best_gain <= target_epsilon + TOL,
        witness: Some(Witness {
            honest_bids: Vec::new(),
            member_true_values: coalition.true_values(),
            strategy: best.clone(),
        }),
        grid_stats: GridStats {
            points: grid.len(),
            max_cell_width: grid.max_cell_width(),
        },
        strategies: strategies.len(),
        mc_stderr,
    })
}

fn enumerate_profiles(d: &ValueDistribution, n: usize) -> Vec<(Vec<f64>, f64)> {
    let support = d.support();
    let probs = d.probabilities();
    let mut out = Vec::new();
    let mut idx = vec![0usize; n];
    loop {
        let profile: Vec<f64> = idx.iter().map(|&i| support[i]).collect();
        let weight: f64 = idx.iter().map(|&i| probs[i]).product();
        out.push((profile, weight));
        let mut pos = 0;
        loop {
            if pos == n {
                return out;
            }
            idx[pos] += 1;
            if idx[pos] < support.len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

fn sample_profiles(
    d: &ValueDistribution,
    n: usize,
    samples: usize,
    seed: u64,
) -> Vec<(Vec<f64>, f64)> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let weight = 1.0 / samples as f64;
    (0..samples)
        .map(|_| {
            let profile = (0..n)
                .map(|_| {
                    let u: f64 = rng.gen();
                    let mut acc = 0.0;
                    for (x, p) in d.support().iter().zip(d.probabilities()) {
                        acc += p;
                        if u < acc {
                            return *x;
                        }
                    }
                    *d.support().last().unwrap()
                })
                .collect();
            (profile, weight)
        })
        .collect()
}

/// Bayesian per-user curves: `xbar(b)`, `pbar(b)`, `mubar(b)` with the probe
/// user's bid swept over `bids` and the other `n - 1` users drawn from `d`.
pub struct BayesianTables {
    pub bids: Vec<f64>,
    pub xbar: Vec<f64>,
    pub pbar: Vec<f64>,
    pub mubar: Vec<f64>,
}

pub fn bayesian_tables(
    rule: &MechanismRule,
    d: &ValueDistribution,
    n: usize,
    bids: &[f64],
    cap: u128,
) -> Result<BayesianTables, AuditError> {
    if n == 0 {
        return Err(AuditError::NotApplicable("need at least one user".into()));
    }
    let profiles_count = (d.support().len() as u128)
        .checked_pow((n - 1) as u32)
        .unwrap_or(u128::MAX);
    if profiles_count > cap {
        return Err(AuditError::ExactCapExceeded {
            profiles: profiles_count,
            cap,
        });
    }
    let profiles = enumerate_profiles(d, n - 1);
    let mut xbar = vec![0.0; bids.len()];
    let mut pbar = vec![0.0; bids.len()];
    let mut mubar = vec![0.0; bids.len()];
    for (profile, weight) in &profiles {
        let mut amounts = profile.clone();
        amounts.push(0.0);
        let probe = amounts.len() - 1;
        for (j, &b) in bids.iter().enumerate() {
            amounts[probe] = b;
            let v = BidVector::from_amounts(&amounts)?;
            let out = rule.evaluate(&v);
            xbar[j] += weight * out.x[probe];
            pbar[j] += weight * out.p[probe];
            mubar[j] += weight * out.mu;
        }
    }
    Ok(BayesianTables {
        bids: bids.to_vec(),
        xbar,
        pbar,
        mubar,
    })
}

/// Exact `E[mu]` over `n` i.i.d. bids from `d` (enumeration up to the cap,
/// seeded sampling beyond it).
pub fn expected_miner_revenue(
    rule: &MechanismRule,
    d: &ValueDistribution,
    n: usize,
    cap: u128,
    mc_samples: usize,
    seed: u64,
) -> Result<f64, AuditError> {
    let count = (d.support().len() as u128)
        .checked_pow(n as u32)
        .unwrap_or(u128::MAX);
    let profiles = if count <= cap {
        enumerate_profiles(d, n)
    } else {
        sample_profiles(d, n, mc_samples, seed)
    };
    let mut total = 0.0;
    for (profile, weight) in &profiles {
        let v = BidVector::from_amounts(profile)?;
        total += weight * rule.evaluate(&v).mu;
    }
    Ok(total)
}

/// One payment-sandwich check at a bid pair `y <= z`:
/// `z (xbar(z) - xbar(y)) + eps >= pbar(z) - pbar(y) >= y (xbar(z) - xbar(y)) - eps`.
/// Both residuals are the slack of their inequality; negative means violated.
#[derive(Debug, Clone, Serialize)]
pub struct SandwichCheck {
    pub y: f64,
    pub z: f64,
    pub upper_residual: f64,
    pub lower_residual: f64,
    pub pass: bool,
}

pub fn check_payment_sandwich(
    rule: &MechanismRule,
    d: &ValueDistribution,
    n: usize,
    epsilon: f64,
    pairs: &[(f64, f64)],
) -> Result<Vec<SandwichCheck>, AuditError> {
    let mut bids: Vec<f64> = pairs.iter().flat_map(|&(y, z)| [y, z]).collect();
    bids.sort_by(|a, b| a.partial_cmp(b).unwrap());
    bids.dedup();
    let tables = bayesian_tables(rule, d, n, &bids, 1_000_000)?;
    let lookup = |b: f64| {
        let i = tables
            .bids
            .iter()
            .position(|&x| (x - b).abs() < 1e-15)
            .expect("bid present");
        (tables.xbar[i], tables.pbar[i])
    };
    Ok(pairs
        .iter()
        .map(|&(y, z)| {
            let (xy, py) = lookup(y);
            let (xz, pz) = lookup(z);
            let dx = xz - xy;
            let dp = pz - py;
            let upper = z * dx + epsilon - dp;
            let lower = dp - (y * dx - epsilon);
            SandwichCheck {
                y,
                z,
                upper_residual: upper,
                lower_residual: lower,
                pass: upper >= -1e-6 && lower >= -1e-6,
            }
        })
        .collect())
}

/// One miner-revenue check at a bid pair: the single-step inequality
/// `mubar(z) - mubar(y) <= (eps_u + eps_s + S(y,z)) / rho` with
/// `S(y,z) = (z - y)(xbar(z) - xbar(y))`, and the two-case bound on
/// `mubar(z) - mubar(0)` (`2 eps'/rho` for `z <= eps'`, `2 sqrt(z eps')/rho`
/// otherwise, `eps' = eps_u + eps_s`).
#[derive(Debug, Clone, Serialize)]
pub struct MinerStepCheck {
    pub y: f64,
    pub z: f64,
    pub step_residual: f64,
    pub two_case_residual: f64,
    pub pass: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn check_miner_revenue_step(
    rule: &MechanismRule,
    d: &ValueDistribution,
    n: usize,
    rho: f64,
    eps_u: f64,
    eps_s: f64,
    pairs: &[(f64, f64)],
) -> Result<Vec<MinerStepCheck>, AuditError> {
    let mut bids: Vec<f64> = pairs.iter().flat_map(|&(y, z)| [y, z]).collect();
    bids.push(0.0);
    bids.sort_by(|a, b| a.partial_cmp(b).unwrap());
    bids.dedup();
    let tables = bayesian_tables(rule, d, n, &bids, 1_000_000)?;
    let lookup = |b: f64| {
        let i = tables
            .bids
            .iter()
            .position(|&x| (x - b).abs() < 1e-15)
            .expect("bid present");
        (tables.xbar[i], tables.mubar[i])
    };
    let eps_prime = eps_u + eps_s;
    let (_, mu0) = lookup(0.0);
    Ok(pairs
        .iter()
        .map(|&(y, z)| {
            let (xy, muy) = lookup(y);
            let (xz, muz) = lookup(z);
            let s = (z - y) * (xz - xy);
            let step_residual = (eps_u + eps_s + s) / rho - (muz - muy);
            let bound = if z <= eps_prime {
                2.0 * eps_prime / rho
            } else {
                2.0 * (z * eps_prime).sqrt() / rho
            };
            let two_case_residual = bound - (muz - mu0);
            MinerStepCheck {
                y,
                z,
                step_residual,
                two_case_residual,
                pass: step_residual >= -1e-6 && two_case_residual >= -1e-6,
            }
        })
        .collect())
}

/// The miner-revenue limit `E[mu] <= (2n/rho)(eps + C_D sqrt(eps))` with
/// `eps = eps_u + eps_m + eps_s` and `C_D = E[sqrt(X)]`.
#[derive(Debug, Clone, Serialize)]
pub struct RevenueLimitCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

pub fn check_revenue_limit(
    rule: &MechanismRule,
    d: &ValueDistribution,
    n: usize,
    rho: f64,
    eps_u: f64,
    eps_m: f64,
    eps_s: f64,
) -> Result<RevenueLimitCheck, AuditError> {
    let lhs = expected_miner_revenue(rule, d, n, 1_000_000, 100_000, 0)?;
    let eps = eps_u + eps_m + eps_s;
    let rhs = 2.0 * n as f64 / rho * (eps + d.sqrt_moment() * eps.sqrt());
    Ok(RevenueLimitCheck {
        lhs,
        rhs,
        pass: lhs <= rhs + 1e-6,
    })
}

/// Closed-form ceilings for plain-model finite-block mechanisms, evaluated
/// on truthful scenarios. Per scenario with top bid `M`: miner revenue at
/// most `12 k^2 eps ln(M/eps + 1) + 2k eps` (just `2k eps` when `M < 2 eps`),
/// any included user's conditional utility at most that plus `eps`, and
/// welfare at most `k` times the user ceiling plus the miner ceiling.
#[derive(Debug, Clone, Serialize)]
pub struct WelfareCeilingCheck {
    pub miner_bound: f64,
    pub per_user_bound: f64,
    pub welfare_bound: f64,
    pub worst_miner_ratio: f64,
    pub worst_user_ratio: f64,
    pub worst_welfare_ratio: f64,
    pub pass: bool,
}

pub fn check_welfare_ceiling(
    rule: &MechanismRule,
    scenarios: &[Vec<f64>],
    epsilon: f64,
) -> Result<WelfareCeilingCheck, AuditError> {
    if rule.model() != Model::Plain {
        return Err(AuditError::NotApplicable(
            "welfare ceiling applies to plain-model mechanisms".into(),
        ));
    }
    let k = rule.block_size().ok_or_else(|| {
        AuditError::NotApplicable("welfare ceiling applies to finite block sizes".into())
    })? as f64;

    let mut check = WelfareCeilingCheck {
        miner_bound: 0.0,
        per_user_bound: 0.0,
        welfare_bound: 0.0,
        worst_miner_ratio: 0.0,
        worst_user_ratio: 0.0,
        worst_welfare_ratio: 0.0,
        pass: true,
    };
    let ratio = |observed: f64, bound: f64| {
        if bound > 0.0 {
            observed / bound
        } else if observed.abs() <= 1e-12 {
            0.0
        } else {
            f64::INFINITY
        }
    };
    for values in scenarios {
        let m = values.iter().cloned().fold(0.0, f64::max);
        let miner_bound = if m < 2.0 * epsilon {
            2.0 * k * epsilon
        } else {
            12.0 * k * k * epsilon * (m / epsilon + 1.0).ln() + 2.0 * k * epsilon
        };
        let user_bound = miner_bound + epsilon;
        let welfare_bound = k * user_bound + miner_bound;
        check.miner_bound = check.miner_bound.max(miner_bound);
        check.per_user_bound = check.per_user_bound.max(user_bound);
        check.welfare_bound = check.welfare_bound.max(welfare_bound);

        let bids = BidVector::from_amounts(values)?;
        let out = rule.evaluate(&bids);
        check.worst_miner_ratio = check.worst_miner_ratio.max(ratio(out.mu, miner_bound));
        #[allow(clippy::needless_range_loop)] // i pairs outcome entries with values
        for i in 0..out.len() {
            // Conditional utility v - p/x where x > 0; undefined (skipped)
            // for unconfirmed bids.
            if out.x[i] > 0.0 {
                let conditional = values[i] - out.p[i] / out.x[i];
                check.worst_user_ratio = check.worst_user_ratio.max(ratio(conditional, user_bound));
                if conditional > user_bound + 1e-6 {
                    check.pass = false;
                }
            }
        }
        let welfare = crate::core::social_welfare(&out, values)?;
        check.worst_welfare_ratio = check.worst_welfare_ratio.max(ratio(welfare, welfare_bound));
        if out.mu > miner_bound + 1e-6 || welfare > welfare_bound + 1e-6 {
            check.pass = false;
        }
    }
    Ok(check)
}

/// Deviation of the Bayesian miner-revenue curve from its value at a zero
/// bid, swept over a grid. A rule certified strictly incentive compatible
/// must show a deviation within tolerance and zero expected revenue.
#[derive(Debug, Clone, Serialize)]
pub struct ConstantRevenueCheck {
    pub max_deviation: f64,
    pub expected_mu: f64,
}

pub fn check_constant_revenue(
    rule: &MechanismRule,
    d: &ValueDistribution,
    n: usize,
    grid: &BidGrid,
) -> Result<ConstantRevenueCheck, AuditError> {
    let mut bids = grid.points().to_vec();
    if !bids.contains(&0.0) {
        bids.insert(0, 0.0);
    }
    let tables = bayesian_tables(rule, d, n, &bids, 1_000_000)?;
    let mu0 = tables.mubar[bids.iter().position(|&b| b == 0.0).unwrap()];
    let max_deviation = tables
        .mubar
        .iter()
        .map(|mu| (mu - mu0).abs())
        .fold(0.0, f64::max);
    let expected_mu = expected_miner_revenue(rule, d, n, 1_000_000, 100_000, 0)?;
    Ok(ConstantRevenueCheck {
        max_deviation,
        expected_mu,
    })
}

/// The incentive-compatibility slacks `(eps_u, eps_m, eps_s)` each mechanism
/// is designed to satisfy against a coalition with `c` users, used to feed
/// theorem checkers. Infinity marks claims the mechanism does not make.
pub fn design_epsilons(rule: &MechanismRule, c: usize) -> (f64, f64, f64) {
    match rule.mechanism() {
        Mechanism::PostedPrice(p) => {
            if p.burn {
                if p.block_size.is_none() || c <= 1 {
                    (0.0, 0.0, 0.0)
                } else {
                    // Random selection breaks down for two colluding users.
                    (0.0, 0.0, f64::INFINITY)
                }
            } else {
                (0.0, 0.0, c as f64 * p.r)
            }
        }
        Mechanism::Proportional(p) => {
            let per_user = match p.model {
                Model::Plain => 1.25 * p.epsilon,
                Model::MpcAssisted => 2.25 * p.epsilon,
            };
            (0.0, 0.0, c as f64 * per_user)
        }
        Mechanism::Diluted(p) => {
            if c <= p.c {
                (0.0, 0.0, p.epsilon)
            } else {
                (0.0, 0.0, f64::INFINITY)
            }
        }
        Mechanism::Staircase(p) => {
            if c <= 1 {
                (p.epsilon, 0.0, p.epsilon)
            } else {
                (p.epsilon, 0.0, f64::INFINITY)
            }
        }
    }
}

/// Convenience: expected outcome curves are frequently compared against an
/// audited epsilon; this returns the sum of the design slacks.
pub fn design_epsilon_total(rule: &MechanismRule, c: usize) -> f64 {
    let (u, m, s) = design_epsilons(rule, c);
    u + m + s
}
