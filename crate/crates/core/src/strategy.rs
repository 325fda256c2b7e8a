//! Finite, breakpoint-aware enumeration of the deviation spaces of users,
//! miners, and miner-user coalitions.
//!
//! The real strategy spaces are continuous; the auditor searches a finite
//! grid instead. Correctness of the grid search rests on the grid containing
//! every point where a coalition's utility can attain a local extremum: the
//! rules' kinks and jumps (reserves, ladder prices, other bids' amounts)
//! plus, for the proportional auction whose expected payment is quadratic in
//! the bid, the interior stationary points of the coalition objective.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::{Model, ValueDistribution};
use crate::mechanisms::{Mechanism, MechanismRule};

#[derive(Debug, Error, PartialEq)]
pub enum StrategyError {
    #[error("enumeration budget exceeded: {needed} strategies, budget {budget}")]
    BudgetExceeded { needed: u128, budget: u128 },
    #[error(
        "plain-model inclusion enumeration needs a pool of at most {cap} bids, got {pool}; \
         use MPC-model audits for larger scenarios"
    )]
    PoolTooLarge { pool: usize, cap: usize },
    #[error("bid grid would need {needed} points, configured maximum is {max}")]
    GridTooLarge { needed: usize, max: usize },
    #[error("coalition spec invalid: {0}")]
    InvalidCoalition(String),
}

/// Who colludes: a miner fraction plus up to `c` users with their true
/// values. The plain model fixes the miner fraction to 1 (the block's miner)
/// or 0 (a lone user).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoalitionSpec {
    pub rho: f64,
    /// `(user index, true value)` per colluding user.
    pub user_members: Vec<(usize, f64)>,
}

impl CoalitionSpec {
    pub fn new(rho: f64, user_members: Vec<(usize, f64)>) -> Result<Self, StrategyError> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(StrategyError::InvalidCoalition(format!(
                "rho must lie in [0, 1], got {rho}"
            )));
        }
        Ok(CoalitionSpec { rho, user_members })
    }

    pub fn c(&self) -> usize {
        self.user_members.len()
    }

    pub fn true_values(&self) -> Vec<f64> {
        self.user_members.iter().map(|(_, v)| *v).collect()
    }
}

/// Plain-model inclusion choice: either run the prescribed inclusion rule or
/// stuff the block with an arbitrary subset of the available bids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Inclusion {
    Honest,
    /// Indices into the full bid pool (honest bids, then member bids in
    /// member order, then fake bids).
    Subset(Vec<usize>),
}

/// One concrete joint deviation of the coalition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    /// Bid multiset posted by each member, in member order. An empty
    /// multiset is a drop-out; more than one bid means extra identities.
    pub member_bids: Vec<Vec<f64>>,
    /// Fake bids injected by the coalition's miner side.
    pub fake_bids: Vec<f64>,
    pub inclusion: Inclusion,
}

impl Strategy {
    pub fn honest(coalition: &CoalitionSpec) -> Strategy {
        Strategy {
            member_bids: coalition.user_members.iter().map(|(_, v)| vec![*v]).collect(),
            fake_bids: Vec::new(),
            inclusion: Inclusion::Honest,
        }
    }

    pub fn is_honest(&self, coalition: &CoalitionSpec) -> bool {
        self == &Strategy::honest(coalition)
    }
}

/// Finite ascending set of candidate bid amounts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidGrid {
    points: Vec<f64>,
}

impl BidGrid {
    pub fn from_points(mut points: Vec<f64>) -> BidGrid {
        points.retain(|p| p.is_finite() && *p >= 0.0);
        points.sort_by(|a, b| a.partial_cmp(b).unwrap());
        points.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
        BidGrid { points }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn max_cell_width(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    pub fn contains(&self, value: f64, tol: f64) -> bool {
        self.points.iter().any(|p| (p - value).abs() <= tol)
    }
}

/// Grid construction knobs.
#[derive(Debug, Clone, Copy)]
pub struct GridConfig {
    pub max_points: usize,
    /// Offset placed on each side of a breakpoint.
    pub delta: f64,
    /// Bid cap as a multiple of the largest breakpoint.
    pub b_max_factor: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            max_points: 64,
            delta: 1e-6,
            b_max_factor: 2.0,
        }
    }
}

/// The scenario a grid is built for: honest bids, coalition true values, and
/// optionally the value distribution of Bayesian audits.
#[derive(Debug, Clone, Default)]
pub struct GridScenario<'a> {
    pub honest_bids: &'a [f64],
    pub true_values: &'a [f64],
    pub distribution: Option<&'a ValueDistribution>,
}

/// Builds the candidate-bid grid for a rule and scenario: 0, every rule
/// breakpoint with +-delta guards, every honest bid, true value, and
/// distribution support point (with guards, since sort ranks flip there),
/// the proportional auction's interior stationary points, and the cap
/// `B_max`.
pub fn build_grid(
    rule: &MechanismRule,
    scenario: &GridScenario,
    config: &GridConfig,
) -> Result<BidGrid, StrategyError> {
    let mut guarded: Vec<f64> = Vec::new();
    let mut bare: Vec<f64> = vec![0.0];

    match rule.mechanism() {
        Mechanism::PostedPrice(p) => guarded.push(p.r),
        Mechanism::Proportional(p) => {
            guarded.push(p.r);
            guarded.push(p.miner_threshold());
            if p.model == Model::MpcAssisted {
                guarded.push(p.miner_threshold() / p.rho);
            }
            // Stationary points of the coalition objective: the expected
            // payment is quadratic in the bid, so between breakpoints the
            // optimum can sit strictly inside a cell.
            for &v in scenario.true_values {
                bare.push(v + p.miner_threshold() / 2.0);
                if p.model == Model::MpcAssisted && p.rho < 1.0 {
                    bare.push(v / (1.0 - p.rho));
                }
            }
        }
        Mechanism::Diluted(p) => guarded.push(p.r),
        Mechanism::Staircase(p) => {
            for i in 1..=p.k {
                guarded.push(p.ladder_price(i));
            }
        }
    }
    guarded.extend_from_slice(scenario.honest_bids);
    guarded.extend_from_slice(scenario.true_values);
    if let Some(d) = scenario.distribution {
        guarded.extend_from_slice(d.support());
    }

    let mut points = bare;
    for &g in &guarded {
        points.push(g);
        points.push((g - config.delta).max(0.0));
        points.push(g + config.delta);
    }
    let top = points.iter().cloned().fold(0.0, f64::max);
    points.push(config.b_max_factor * top);

    let grid = BidGrid::from_points(points);
    if grid.len() > config.max_points {
        return Err(StrategyError::GridTooLarge {
            needed: grid.len(),
            max: config.max_points,
        });
    }
    Ok(grid)
}

/// Enumeration bounds. `budget` caps the total strategy count;
/// `inclusion_pool_cap` caps the pool size for plain-model inclusion
/// subsets.
#[derive(Debug, Clone, Copy)]
pub struct Limits {
    pub max_fake: usize,
    pub max_bids_per_member: usize,
    pub inclusion_pool_cap: usize,
    pub budget: u128,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_fake: 1,
            max_bids_per_member: 1,
            inclusion_pool_cap: 12,
            budget: 20_000_000,
        }
    }
}

/// Everything the enumerator must know about the world around the
/// coalition.
#[derive(Debug, Clone, Copy)]
pub struct EnumerationContext {
    pub model: Model,
    /// Number of bids posted by users outside the coalition.
    pub honest_count: usize,
    /// Block size for inclusion subsets (`None` = infinite block).
    pub block_size: Option<usize>,
}

/// Exhaustively enumerates the coalition's strategies over the grid. The
/// honest strategy is always element 0. Plain-model coalitions that include
/// the miner additionally enumerate every inclusion subset of size at most
/// `k` over the resulting bid pool.
pub fn enumerate_strategies(
    coalition: &CoalitionSpec,
    grid: &BidGrid,
    limits: &Limits,
    ctx: &EnumerationContext,
) -> Result<Vec<Strategy>, StrategyError> {
    let g = grid.len() as u128;
    let member_count = count_multisets(g, limits.max_bids_per_member);
    let fake_count = count_multisets(g, limits.max_fake);
    let includes_miner = ctx.model == Model::Plain && coalition.rho > 0.0;

    let worst_pool =
        ctx.honest_count + coalition.c() * limits.max_bids_per_member + limits.max_fake;
    let inclusion_worst: u128 = if includes_miner {
        if worst_pool > limits.inclusion_pool_cap {
            return Err(StrategyError::PoolTooLarge {
                pool: worst_pool,
                cap: limits.inclusion_pool_cap,
            });
        }
        count_subsets(worst_pool, ctx.block_size) + 1
    } else {
        1
    };
    let needed = member_count
        .checked_pow(coalition.c() as u32)
        .and_then(|m| m.checked_mul(fake_count))
        .and_then(|m| m.checked_mul(inclusion_worst))
        .unwrap_or(u128::MAX);
    if needed > limits.budget {
        return Err(StrategyError::BudgetExceeded {
            needed,
            budget: limits.budget,
        });
    }

    let member_multisets = multisets(grid.points(), limits.max_bids_per_member);
    let fake_multisets = multisets(grid.points(), limits.max_fake);

    let honest = Strategy::honest(coalition);
    let mut strategies = vec![honest.clone()];
    let mut member_choice = vec![0usize; coalition.c()];
    loop {
        let member_bids: Vec<Vec<f64>> = member_choice
            .iter()
            .map(|&i| member_multisets[i].clone())
            .collect();
        for fakes in &fake_multisets {
            let base = Strategy {
                member_bids: member_bids.clone(),
                fake_bids: fakes.clone(),
                inclusion: Inclusion::Honest,
            };
            if base != honest {
                strategies.push(base.clone());
            }
            if includes_miner {
                let pool =
                    ctx.honest_count + member_bids.iter().map(Vec::len).sum::<usize>() + fakes.len();
                for subset in subsets_up_to(pool, ctx.block_size) {
                    strategies.push(Strategy {
                        inclusion: Inclusion::Subset(subset),
                        ..base.clone()
                    });
                }
            }
        }
        // Advance the per-member odometer.
        let mut pos = 0;
        loop {
            if pos == member_choice.len() {
                return Ok(strategies);
            }
            member_choice[pos] += 1;
            if member_choice[pos] < member_multisets.len() {
                break;
            }
            member_choice[pos] = 0;
            pos += 1;
        }
    }
}

/// Number of multisets of size 0..=max over g points.
fn count_multisets(g: u128, max: usize) -> u128 {
    let mut total = 0u128;
    for s in 0..=max {
        // C(g + s - 1, s)
        let mut term = 1u128;
        for i in 0..s as u128 {
            term = term.saturating_mul(g + i) / (i + 1);
        }
        total = total.saturating_add(term);
    }
    total
}

fn count_subsets(pool: usize, block_size: Option<usize>) -> u128 {
    let k = block_size.unwrap_or(pool).min(pool);
    let mut total = 0u128;
    for s in 0..=k {
        let mut term = 1u128;
        for i in 0..s as u128 {
            term = term.saturating_mul(pool as u128 - i) / (i + 1);
        }
        total = total.saturating_add(term);
    }
    total
}

/// All multisets (as sorted vectors) of size 0..=max drawn from `points`.
fn multisets(points: &[f64], max: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    let mut current: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..max {
        let mut next = Vec::new();
        for combo in &current {
            let start = combo.last().map_or(0, |&i| i);
            for i in start..points.len() {
                let mut c = combo.clone();
                c.push(i);
                out.push(c.iter().map(|&j| points[j]).collect());
                next.push(c);
            }
        }
        current = next;
    }
    out
}

/// All subsets of `{0..pool}` of size 1..=k, smallest first.
fn subsets_up_to(pool: usize, block_size: Option<usize>) -> Vec<Vec<usize>> {
    let k = block_size.unwrap_or(pool).min(pool);
    let mut out = Vec::new();
    for mask in 1u64..(1u64 << pool) {
        if (mask.count_ones() as usize) <= k {
            out.push((0..pool).filter(|i| mask >> i & 1 == 1).collect());
        }
    }
    out
}
