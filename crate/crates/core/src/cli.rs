//! Experiment runner: JSON configs in, JSON/CSV reports out.
//!
//! Four commands share the `--config <path> --out <dir> --seed <u64>`
//! surface: `audit` runs incentive audits and writes one report per target
//! plus a summary CSV, `revenue-curve` sweeps the slack and tabulates exact
//! revenue against its ceiling, `welfare` evaluates the finite-block welfare
//! ceilings, and `mpc-sim` executes the simulated protocol and diffs it
//! against the ideal functionality. Outputs are byte-identical across runs
//! with the same config and seed.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audit::{
    audit_bayesian, audit_ex_post, check_constant_revenue, check_miner_revenue_step,
    check_payment_sandwich, check_revenue_limit, check_welfare_ceiling, design_epsilon_total,
    design_epsilons, expected_miner_revenue, AuditError, AuditReport, BayesianMethod, Property,
    Scenario, Setting,
};
use crate::core::ValueDistribution;
use crate::mechanisms::{make_hybrid, MechanismRule, MechanismSpec};
use crate::mpcsim::{
    ideal_f_mpc, run_efficient_instantiation, run_pi_mpc, run_pi_mpc_abort_mode, Corruption,
    IdentityConfig, Script, SharingMode, SimConfig, SimError, TraceFile,
};
use crate::strategy::{build_grid, CoalitionSpec, GridConfig, GridScenario, Limits, StrategyError};

/// Exit codes: 0 all pass, 1 some audit target failed, 2 config error,
/// 3 enumeration budget exceeded.
pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Deserialize)]
pub struct DistributionConfig {
    pub support: Vec<f64>,
    /// Omitted means uniform over the support.
    pub probabilities: Option<Vec<f64>>,
}

impl DistributionConfig {
    fn build(&self) -> Result<ValueDistribution, CliError> {
        let d = match &self.probabilities {
            Some(p) => ValueDistribution::new(self.support.clone(), p.clone()),
            None => ValueDistribution::uniform(self.support.clone()),
        };
        d.map_err(|e| CliError::Config(e.to_string()))
    }
}

/// Scenario source: explicit honest bids, or a value distribution with a
/// number of honest users.
#[derive(Debug, Clone, Deserialize, Default)]
pub struct ScenarioConfig {
    pub bids: Option<Vec<f64>>,
    pub distribution: Option<DistributionConfig>,
    pub n: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct MethodConfig {
    pub kind: String,
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct AuditTarget {
    pub property: Property,
    pub setting: Setting,
    #[serde(default)]
    pub rho: f64,
    #[serde(default)]
    pub true_values: Vec<f64>,
    pub epsilon: f64,
    /// Overrides the shared scenario bids for this target.
    pub honest_bids: Option<Vec<f64>>,
    pub method: Option<MethodConfig>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct LimitsConfig {
    pub max_fake: Option<usize>,
    pub max_bids_per_member: Option<usize>,
    pub inclusion_pool_cap: Option<usize>,
    pub budget: Option<u128>,
}

impl LimitsConfig {
    fn build(&self) -> Limits {
        let d = Limits::default();
        Limits {
            max_fake: self.max_fake.unwrap_or(d.max_fake),
            max_bids_per_member: self.max_bids_per_member.unwrap_or(d.max_bids_per_member),
            inclusion_pool_cap: self.inclusion_pool_cap.unwrap_or(d.inclusion_pool_cap),
            budget: self.budget.unwrap_or(d.budget),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
pub struct CheckerToggles {
    #[serde(default)]
    pub payment_sandwich: bool,
    #[serde(default)]
    pub miner_revenue_step: bool,
    #[serde(default)]
    pub revenue_limit: bool,
    #[serde(default)]
    pub constant_revenue: bool,
}

#[derive(Debug, Clone, Deserialize)]
pub struct RevenueCurveConfig {
    /// "hybrid" builds the revenue-maximizing hybrid per slack value;
    /// otherwise a mechanism spec template whose epsilon field is swept.
    pub mechanism: serde_json::Value,
    pub distribution: DistributionConfig,
    pub n: usize,
    #[serde(default = "one")]
    pub c: usize,
    #[serde(default = "one_f")]
    pub rho: f64,
    pub epsilons: Vec<f64>,
}

fn one() -> usize {
    1
}
fn one_f() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
pub struct WelfareConfig {
    pub scenarios: Vec<Vec<f64>>,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct MpcIdentityConfig {
    pub id: String,
    pub bid: f64,
    pub script: Option<Script>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct MpcConfig {
    pub miners: usize,
    #[serde(default)]
    pub miner_scripts: Vec<Option<Script>>,
    pub identities: Vec<MpcIdentityConfig>,
    /// "guaranteed", "abort", or "efficient".
    pub mode: String,
}

/// Top-level experiment file. Sections are optional; each command reads the
/// ones it needs.
#[derive(Debug, Clone, Deserialize)]
pub struct ExperimentConfig {
    pub mechanism: Option<MechanismSpec>,
    #[serde(default)]
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub targets: Vec<AuditTarget>,
    pub limits: Option<LimitsConfig>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub checkers: CheckerToggles,
    pub revenue_curve: Option<RevenueCurveConfig>,
    pub welfare: Option<WelfareConfig>,
    pub mpc: Option<MpcConfig>,
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn rule_from(config: &ExperimentConfig) -> Result<MechanismRule, CliError> {
    let spec = config
        .mechanism
        .as_ref()
        .ok_or_else(|| CliError::Config("missing \"mechanism\" section".into()))?;
    MechanismRule::from_spec(spec).map_err(|e| CliError::Config(e.to_string()))
}

fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

struct SummaryRow {
    mechanism: String,
    property: Property,
    setting: Setting,
    rho: f64,
    c: usize,
    epsilon_target: f64,
    gain: f64,
    pass: bool,
}

fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("mechanism,property,setting,rho,c,epsilon_target,gain,pass\n");
    for row in rows {
        let property = match row.property {
            Property::Uic => "UIC",
            Property::Mic => "MIC",
            Property::Scp => "SCP",
        };
        let setting = match row.setting {
            Setting::ExPost => "ex-post",
            Setting::Bayesian => "bayesian",
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            row.mechanism,
            property,
            setting,
            fmt_f64(row.rho),
            row.c,
            fmt_f64(row.epsilon_target),
            fmt_f64(row.gain),
            row.pass
        );
    }
    out
}

/// Runs every audit target, writes `audit_<i>.json` per target plus
/// `summary.csv`, and exits 0 iff every target passed.
pub fn cmd_audit(config: &ExperimentConfig, out_dir: &Path, seed: u64) -> Result<i32, CliError> {
    let rule = rule_from(config)?;
    let limits = config.limits.as_ref().map(LimitsConfig::build).unwrap_or_default();
    let mechanism_name = rule.to_spec().mechanism;

    let mut reports: Vec<AuditReport> = Vec::new();
    let mut rows: Vec<SummaryRow> = Vec::new();
    for (index, target) in config.targets.iter().enumerate() {
        let coalition = CoalitionSpec::new(target.rho, enumerate_members(&target.true_values))
            .map_err(|e| CliError::Config(e.to_string()))?;
        let report = run_target(&rule, config, target, &coalition, &limits, seed).map_err(
            |err| match err {
                CliError::Audit(AuditError::Strategy(
                    e @ (StrategyError::BudgetExceeded { .. } | StrategyError::PoolTooLarge { .. }),
                )) => CliError::Audit(AuditError::Strategy(annotate_budget(e, index))),
                other => other,
            },
        )?;
        rows.push(SummaryRow {
            mechanism: mechanism_name.clone(),
            property: report.property,
            setting: report.setting,
            rho: report.rho,
            c: report.c,
            epsilon_target: report.target_epsilon,
            gain: report.measured_gain,
            pass: report.pass,
        });
        reports.push(report);
    }

    let checker_report = run_checkers(&rule, config)?;

    std::fs::create_dir_all(out_dir)?;
    for (index, report) in reports.iter().enumerate() {
        let path = out_dir.join(format!("audit_{index}.json"));
        std::fs::write(path, serde_json::to_string_pretty(report).unwrap())?;
    }
    std::fs::write(out_dir.join("summary.csv"), summary_csv(&rows))?;
    if let Some(checkers) = checker_report {
        std::fs::write(out_dir.join("checkers.json"), checkers)?;
    }
    Ok(if rows.iter().all(|r| r.pass) {
        EXIT_OK
    } else {
        EXIT_FAIL
    })
}

fn enumerate_members(true_values: &[f64]) -> Vec<(usize, f64)> {
    true_values.iter().enumerate().map(|(i, &v)| (i, v)).collect()
}

fn annotate_budget(err: StrategyError, target: usize) -> StrategyError {
    eprintln!("audit target {target}: {err}");
    err
}

fn run_target(
    rule: &MechanismRule,
    config: &ExperimentConfig,
    target: &AuditTarget,
    coalition: &CoalitionSpec,
    limits: &Limits,
    seed: u64,
) -> Result<AuditReport, CliError> {
    match target.setting {
        Setting::ExPost => {
            let honest_bids = target
                .honest_bids
                .clone()
                .or_else(|| config.scenario.bids.clone())
                .ok_or_else(|| {
                    CliError::Config("ex post targets need scenario bids".into())
                })?;
            let grid = build_grid(
                rule,
                &GridScenario {
                    honest_bids: &honest_bids,
                    true_values: &target.true_values,
                    distribution: None,
                },
                &GridConfig::default(),
            )
            .map_err(AuditError::from)?;
            let scenario = Scenario { honest_bids };
            Ok(audit_ex_post(
                rule,
                target.property,
                coalition,
                &scenario,
                &grid,
                limits,
                target.epsilon,
            )?)
        }
        Setting::Bayesian => {
            let d = config
                .scenario
                .distribution
                .as_ref()
                .ok_or_else(|| {
                    CliError::Config("bayesian targets need a scenario distribution".into())
                })?
                .build()?;
            let n = config.scenario.n.ok_or_else(|| {
                CliError::Config("bayesian targets need scenario n".into())
            })?;
            let method = match &target.method {
                Some(m) if m.kind == "monte-carlo" => BayesianMethod::MonteCarlo {
                    samples: m.samples.unwrap_or(100_000),
                    seed,
                },
                Some(m) if m.kind == "exact" => BayesianMethod::default(),
                None => BayesianMethod::default(),
                Some(m) => {
                    return Err(CliError::Config(format!("unknown method {:?}", m.kind)))
                }
            };
            let grid = build_grid(
                rule,
                &GridScenario {
                    honest_bids: &[],
                    true_values: &target.true_values,
                    distribution: Some(&d),
                },
                &GridConfig::default(),
            )
            .map_err(AuditError::from)?;
            Ok(audit_bayesian(
                rule,
                target.property,
                coalition,
                &d,
                n,
                &grid,
                limits,
                method,
                target.epsilon,
            )?)
        }
    }
}

fn run_checkers(
    rule: &MechanismRule,
    config: &ExperimentConfig,
) -> Result<Option<String>, CliError> {
    let toggles = &config.checkers;
    if !(toggles.payment_sandwich
        || toggles.miner_revenue_step
        || toggles.revenue_limit
        || toggles.constant_revenue)
    {
        return Ok(None);
    }
    let d = config
        .scenario
        .distribution
        .as_ref()
        .ok_or_else(|| CliError::Config("checkers need a scenario distribution".into()))?
        .build()?;
    let n = config
        .scenario
        .n
        .ok_or_else(|| CliError::Config("checkers need scenario n".into()))?;
    let grid = build_grid(
        rule,
        &GridScenario {
            honest_bids: &[],
            true_values: &[],
            distribution: Some(&d),
        },
        &GridConfig::default(),
    )
    .map_err(AuditError::from)?;
    let mut pairs = Vec::new();
    for (i, &y) in grid.points().iter().enumerate() {
        for &z in &grid.points()[i..] {
            pairs.push((y, z));
        }
    }
    let (eps_u, eps_m, eps_s) = design_epsilons(rule, 1);
    let mut doc = serde_json::Map::new();
    if toggles.payment_sandwich {
        let checks = check_payment_sandwich(rule, &d, n, eps_u, &pairs)?;
        doc.insert("payment_sandwich".into(), serde_json::to_value(&checks).unwrap());
    }
    if toggles.miner_revenue_step {
        let checks = check_miner_revenue_step(rule, &d, n, 1.0, eps_u, eps_s, &pairs)?;
        doc.insert("miner_revenue_step".into(), serde_json::to_value(&checks).unwrap());
    }
    if toggles.revenue_limit {
        let check = check_revenue_limit(rule, &d, n, 1.0, eps_u, eps_m, eps_s)?;
        doc.insert("revenue_limit".into(), serde_json::to_value(&check).unwrap());
    }
    if toggles.constant_revenue {
        let check = check_constant_revenue(rule, &d, n, &grid)?;
        doc.insert("constant_revenue".into(), serde_json::to_value(&check).unwrap());
    }
    Ok(Some(
        serde_json::to_string_pretty(&serde_json::Value::Object(doc)).unwrap(),
    ))
}

/// Sweeps the slack and writes `revenue_curve.csv` with columns
/// epsilon, exact_E_mu, ceiling_rhs, ratio.
pub fn cmd_revenue_curve(
    config: &ExperimentConfig,
    out_dir: &Path,
    _seed: u64,
) -> Result<i32, CliError> {
    let curve = config
        .revenue_curve
        .as_ref()
        .ok_or_else(|| CliError::Config("missing \"revenue_curve\" section".into()))?;
    let d = curve.distribution.build()?;

    let mut csv = String::from("epsilon,exact_E_mu,ceiling_rhs,ratio\n");
    for &epsilon in &curve.epsilons {
        let rule = if curve.mechanism == serde_json::Value::String("hybrid".into()) {
            make_hybrid(&d, epsilon, curve.c, curve.n)
                .map_err(|e| CliError::Config(e.to_string()))?
        } else {
            let mut spec: MechanismSpec = serde_json::from_value(curve.mechanism.clone())
                .map_err(|e| CliError::Config(e.to_string()))?;
            if spec.epsilon.is_some() {
                spec.epsilon = Some(epsilon);
            }
            MechanismRule::from_spec(&spec).map_err(|e| CliError::Config(e.to_string()))?
        };
        let exact = expected_miner_revenue(&rule, &d, curve.n, 1_000_000, 100_000, 0)?;
        let eps_total = design_epsilon_total(&rule, curve.c);
        let rhs = 2.0 * curve.n as f64 / curve.rho * (eps_total + d.sqrt_moment() * eps_total.sqrt());
        let ratio = if rhs > 0.0 {
            exact / rhs
        } else if exact.abs() <= 1e-12 {
            0.0
        } else {
            f64::INFINITY
        };
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            fmt_f64(epsilon),
            fmt_f64(exact),
            fmt_f64(rhs),
            fmt_f64(ratio)
        );
    }
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("revenue_curve.csv"), csv)?;
    Ok(EXIT_OK)
}

/// Evaluates the finite-block welfare ceilings on the configured scenarios
/// and writes `welfare.json`.
pub fn cmd_welfare(config: &ExperimentConfig, out_dir: &Path, _seed: u64) -> Result<i32, CliError> {
    let rule = rule_from(config)?;
    let welfare = config
        .welfare
        .as_ref()
        .ok_or_else(|| CliError::Config("missing \"welfare\" section".into()))?;
    let check = check_welfare_ceiling(&rule, &welfare.scenarios, welfare.epsilon)?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(
        out_dir.join("welfare.json"),
        serde_json::to_string_pretty(&check).unwrap(),
    )?;
    Ok(if check.pass { EXIT_OK } else { EXIT_FAIL })
}

#[derive(Debug, Serialize)]
struct MpcOutcomeFile {
    outcome: crate::mpcsim::ProtocolOutcome,
    ideal_diff: Vec<String>,
}

/// Runs the simulated protocol, writes `trace.json` and `outcome.json`, the
/// latter carrying an `ideal_diff` field that is empty whenever the run
/// matches the ideal functionality.
pub fn cmd_mpc_sim(config: &ExperimentConfig, out_dir: &Path, seed: u64) -> Result<i32, CliError> {
    let rule = rule_from(config)?;
    let mpc = config
        .mpc
        .as_ref()
        .ok_or_else(|| CliError::Config("missing \"mpc\" section".into()))?;
    let mut miner_corruption = vec![Corruption::Honest; mpc.miners];
    for (j, script) in mpc.miner_scripts.iter().enumerate() {
        if let Some(script) = script {
            if j >= mpc.miners {
                return Err(CliError::Config(format!("miner script index {j} out of range")));
            }
            miner_corruption[j] = Corruption::Byzantine(*script);
        }
    }
    let sim = SimConfig {
        miners: mpc.miners,
        miner_corruption,
        identities: mpc
            .identities
            .iter()
            .map(|i| IdentityConfig {
                id: i.id.clone(),
                bid: i.bid,
                corruption: match i.script {
                    None => Corruption::Honest,
                    Some(s) => Corruption::Byzantine(s),
                },
            })
            .collect(),
        rule,
        seed,
    };

    let (mode, run) = match mpc.mode.as_str() {
        "guaranteed" => (SharingMode::Guaranteed, run_pi_mpc(&sim)),
        "abort" => (SharingMode::Abort, run_pi_mpc_abort_mode(&sim)),
        "efficient" => {
            let run = run_efficient_instantiation(&sim)?;
            std::fs::create_dir_all(out_dir)?;
            std::fs::write(out_dir.join("trace.json"), run.transcript.to_json())?;
            let doc = serde_json::json!({
                "coin_seed": run.coin_seed,
                "bids": run.bids,
                "outcome": run.outcome,
            });
            std::fs::write(
                out_dir.join("outcome.json"),
                serde_json::to_string_pretty(&doc).unwrap(),
            )?;
            return Ok(EXIT_OK);
        }
        other => return Err(CliError::Config(format!("unknown mpc mode {other:?}"))),
    };
    let run = match run {
        Ok(run) => run,
        Err(e @ SimError::TooManyCorrupt { .. }) => {
            eprintln!("{e}");
            return Ok(EXIT_CONFIG);
        }
        Err(e) => return Err(e.into()),
    };

    let ids: Vec<String> = sim.identities.iter().map(|i| i.id.clone()).collect();
    let bids: Vec<f64> = sim.identities.iter().map(|i| i.bid).collect();
    let ideal = ideal_f_mpc(&sim.rule, &ids, &bids, &run.outcome.misbehaving, seed)?;
    let mut ideal_diff = Vec::new();
    if run.outcome.aborted {
        ideal_diff.push("protocol aborted; the ideal functionality never aborts".to_string());
    } else {
        if run.outcome.effective_bids != ideal.effective_bids {
            ideal_diff.push(format!(
                "effective bids differ: protocol {:?} vs ideal {:?}",
                run.outcome.effective_bids, ideal.effective_bids
            ));
        }
        if run.outcome.realized != ideal.realized {
            ideal_diff.push("realized outcome differs from the ideal functionality".to_string());
        }
    }

    std::fs::create_dir_all(out_dir)?;
    let trace = TraceFile::from_run(&sim, mode, &run);
    std::fs::write(
        out_dir.join("trace.json"),
        serde_json::to_string_pretty(&trace).unwrap(),
    )?;
    std::fs::write(
        out_dir.join("outcome.json"),
        serde_json::to_string_pretty(&MpcOutcomeFile {
            outcome: run.outcome,
            ideal_diff: ideal_diff.clone(),
        })
        .unwrap(),
    )?;
    Ok(EXIT_OK)
}

/// Re-executes a recorded protocol trace and re-derives the outcome,
/// writing `replay.json` with the derived outcome and whether it matches
/// the recorded one. Exits 0 iff it matches.
pub fn cmd_mpc_replay(trace_path: &Path, out_dir: &Path) -> Result<i32, CliError> {
    let text = std::fs::read_to_string(trace_path)
        .map_err(|e| CliError::Config(format!("{}: {e}", trace_path.display())))?;
    let file: TraceFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", trace_path.display())))?;
    let replayed = crate::mpcsim::replay_trace(&file)?;
    let matches = replayed == file.outcome;
    std::fs::create_dir_all(out_dir)?;
    let doc = serde_json::json!({
        "replayed": replayed,
        "recorded": file.outcome,
        "matches": matches,
    });
    std::fs::write(
        out_dir.join("replay.json"),
        serde_json::to_string_pretty(&doc).unwrap(),
    )?;
    Ok(if matches { EXIT_OK } else { EXIT_FAIL })
}

/// Dispatches a parsed command line; returns the process exit code.
pub fn run(command: &str, config_path: &Path, out_dir: &Path, seed: u64) -> i32 {
    if command == "mpc-replay" {
        return match cmd_mpc_replay(config_path, out_dir) {
            Ok(code) => code,
            Err(e) => {
                eprintln!("{e}");
                EXIT_CONFIG
            }
        };
    }
    let config = match load_config(config_path) {
        Ok(config) => config,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_CONFIG;
        }
    };
    let result = match command {
        "audit" => cmd_audit(&config, out_dir, seed),
        "revenue-curve" => cmd_revenue_curve(&config, out_dir, seed),
        "welfare" => cmd_welfare(&config, out_dir, seed),
        "mpc-sim" => cmd_mpc_sim(&config, out_dir, seed),
        other => {
            eprintln!("unknown command {other:?}");
            return EXIT_CONFIG;
        }
    };
    match result {
        Ok(code) => code,
        Err(CliError::Audit(AuditError::Strategy(
            e @ (StrategyError::BudgetExceeded { .. } | StrategyError::PoolTooLarge { .. }),
        ))) => {
            eprintln!("{e}");
            EXIT_BUDGET
        }
        Err(e @ CliError::Config(_)) => {
            eprintln!("{e}");
            EXIT_CONFIG
        }
        Err(e) => {
            eprintln!("{e}");
            EXIT_CONFIG
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn tmp_dir(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("tfm-lab-cli-{name}-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    fn parse(json: &str) -> ExperimentConfig {
        serde_json::from_str(json).unwrap()
    }

    #[test]
    fn audit_proportional_targets_all_pass() {
        let config = parse(
            r#"{
            "mechanism": {"mechanism": "proportional", "r": 8.0, "epsilon": 2.0, "rho": 1.0, "model": "plain"},
            "scenario": {"bids": [2.0, 7.0]},
            "targets": [
                {"property": "UIC", "setting": "ex-post", "rho": 0.0, "true_values": [5.65], "epsilon": 0.0},
                {"property": "MIC", "setting": "ex-post", "rho": 1.0, "true_values": [], "epsilon": 0.0},
                {"property": "SCP", "setting": "ex-post", "rho": 1.0, "true_values": [5.65], "epsilon": 2.5}
            ]
        }"#,
        );
        let out = tmp_dir("audit-pass");
        let code = cmd_audit(&config, &out, 0).unwrap();
        assert_eq!(code, EXIT_OK);
        let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
        assert!(summary.starts_with("mechanism,property,setting,rho,c,epsilon_target,gain,pass\n"));
        assert_eq!(summary.lines().count(), 4);
        assert!(out.join("audit_0.json").exists());
        assert!(out.join("audit_2.json").exists());
    }

    #[test]
    fn audit_dropout_counterexample_fails_with_witness() {
        let config = parse(
            r#"{
            "mechanism": {"mechanism": "posted-price", "r": 5.0, "k": 2, "burn": true},
            "scenario": {"bids": [6.0]},
            "targets": [
                {"property": "SCP", "setting": "ex-post", "rho": 1.0, "true_values": [9.0, 5.0], "epsilon": 0.0}
            ],
            "limits": {"max_fake": 0}
        }"#,
        );
        let out = tmp_dir("audit-fail");
        let code = cmd_audit(&config, &out, 0).unwrap();
        assert_eq!(code, EXIT_FAIL);
        let report = std::fs::read_to_string(out.join("audit_0.json")).unwrap();
        assert!(report.contains("\"pass\": false"));
        assert!(report.contains("\"witness\""));
    }

    #[test]
    fn audit_empty_targets_yields_header_only_csv() {
        let config = parse(
            r#"{
            "mechanism": {"mechanism": "staircase", "M": 10.0, "k": 5, "epsilon": 1.0},
            "scenario": {"bids": [1.0]}
        }"#,
        );
        let out = tmp_dir("audit-empty");
        let code = cmd_audit(&config, &out, 0).unwrap();
        assert_eq!(code, EXIT_OK);
        let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
        assert_eq!(summary, "mechanism,property,setting,rho,c,epsilon_target,gain,pass\n");
    }

    #[test]
    fn revenue_curve_hybrid_stays_under_ceiling() {
        let config = parse(
            r#"{
            "revenue_curve": {
                "mechanism": "hybrid",
                "distribution": {"support": [1.0, 4.0]},
                "n": 10,
                "c": 1,
                "epsilons": [0.0, 0.01, 0.1, 0.5, 1.0]
            }
        }"#,
        );
        let out = tmp_dir("curve");
        assert_eq!(cmd_revenue_curve(&config, &out, 0).unwrap(), EXIT_OK);
        let csv = std::fs::read_to_string(out.join("revenue_curve.csv")).unwrap();
        let mut previous_ceiling = -1.0;
        for line in csv.lines().skip(1) {
            let cells: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
            assert!(cells[3] <= 1.0 + 1e-9, "ratio above 1 in {line}");
            assert!(cells[2] >= previous_ceiling, "ceiling not monotone");
            previous_ceiling = cells[2];
        }
        // The zero-slack row earns and allows exactly zero.
        let first: Vec<f64> = csv.lines().nth(1).unwrap().split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(first[1], 0.0);
        assert_eq!(first[2], 0.0);
    }

    #[test]
    fn revenue_curve_burning_mechanism_is_zero() {
        let config = parse(
            r#"{
            "revenue_curve": {
                "mechanism": {"mechanism": "posted-price", "r": 1.0, "k": 2, "burn": true},
                "distribution": {"support": [1.0, 4.0]},
                "n": 5,
                "epsilons": [0.1, 0.5]
            }
        }"#,
        );
        let out = tmp_dir("curve-burn");
        assert_eq!(cmd_revenue_curve(&config, &out, 0).unwrap(), EXIT_OK);
        let csv = std::fs::read_to_string(out.join("revenue_curve.csv")).unwrap();
        for line in csv.lines().skip(1) {
            let cells: Vec<&str> = line.split(',').collect();
            assert_eq!(cells[1], "0");
        }
    }

    #[test]
    fn welfare_command_reports_pass() {
        let config = parse(
            r#"{
            "mechanism": {"mechanism": "staircase", "M": 10.0, "k": 5, "epsilon": 1.0},
            "welfare": {"scenarios": [[10.0, 9.0, 5.0, 3.0, 1.0], [10.0, 10.0]], "epsilon": 1.0}
        }"#,
        );
        let out = tmp_dir("welfare");
        assert_eq!(cmd_welfare(&config, &out, 0).unwrap(), EXIT_OK);
        let report = std::fs::read_to_string(out.join("welfare.json")).unwrap();
        assert!(report.contains("\"pass\": true"));
    }

    #[test]
    fn mpc_sim_honest_run_has_empty_ideal_diff() {
        let config = parse(
            r#"{
            "mechanism": {"mechanism": "posted-price", "r": 5.0, "k": 2, "burn": true},
            "mpc": {
                "miners": 4,
                "mode": "guaranteed",
                "identities": [
                    {"id": "a", "bid": 7.0},
                    {"id": "b", "bid": 6.0}
                ]
            }
        }"#,
        );
        let out = tmp_dir("mpc-honest");
        assert_eq!(cmd_mpc_sim(&config, &out, 3).unwrap(), EXIT_OK);
        let outcome = std::fs::read_to_string(out.join("outcome.json")).unwrap();
        assert!(outcome.contains("\"ideal_diff\": []"));
        assert!(out.join("trace.json").exists());
    }

    #[test]
    fn mpc_sim_bad_opening_keeps_empty_diff_with_nonempty_c() {
        let config = parse(
            r#"{
            "mechanism": {"mechanism": "posted-price", "r": 5.0, "k": 2, "burn": true},
            "mpc": {
                "miners": 4,
                "mode": "guaranteed",
                "identities": [
                    {"id": "a", "bid": 7.0, "script": {"script": "withhold-complaint-response", "target": 1}},
                    {"id": "b", "bid": 6.0}
                ]
            }
        }"#,
        );
        let out = tmp_dir("mpc-bad");
        assert_eq!(cmd_mpc_sim(&config, &out, 3).unwrap(), EXIT_OK);
        let outcome = std::fs::read_to_string(out.join("outcome.json")).unwrap();
        assert!(outcome.contains("\"ideal_diff\": []"));
        assert!(outcome.contains("\"a\""));
    }

    #[test]
    fn mpc_sim_abort_mode_records_abort() {
        let config = parse(
            r#"{
            "mechanism": {"mechanism": "posted-price", "r": 5.0, "k": 2, "burn": true},
            "mpc": {
                "miners": 3,
                "mode": "abort",
                "miner_scripts": [null, {"script": "abort-in-reconstruction"}, null],
                "identities": [{"id": "a", "bid": 7.0}]
            }
        }"#,
        );
        let out = tmp_dir("mpc-abort");
        assert_eq!(cmd_mpc_sim(&config, &out, 3).unwrap(), EXIT_OK);
        let outcome = std::fs::read_to_string(out.join("outcome.json")).unwrap();
        assert!(outcome.contains("\"aborted\": true"));
    }

    #[test]
    fn mpc_sim_corrupt_majority_guaranteed_exits_2() {
        let config = parse(
            r#"{
            "mechanism": {"mechanism": "posted-price", "r": 5.0, "k": 2, "burn": true},
            "mpc": {
                "miners": 2,
                "mode": "guaranteed",
                "miner_scripts": [{"script": "abort-in-reconstruction"}, null],
                "identities": [{"id": "a", "bid": 7.0}]
            }
        }"#,
        );
        let out = tmp_dir("mpc-majority");
        assert_eq!(cmd_mpc_sim(&config, &out, 3).unwrap(), EXIT_CONFIG);
    }

    #[test]
    fn replay_round_trips_a_recorded_trace() {
        let config = parse(
            r#"{
            "mechanism": {"mechanism": "posted-price", "r": 5.0, "k": 2, "burn": true},
            "mpc": {
                "miners": 4,
                "mode": "guaranteed",
                "identities": [
                    {"id": "a", "bid": 7.0, "script": {"script": "bad-opening", "target": 1}},
                    {"id": "b", "bid": 6.0}
                ]
            }
        }"#,
        );
        let out = tmp_dir("mpc-replay");
        assert_eq!(cmd_mpc_sim(&config, &out, 5).unwrap(), EXIT_OK);
        let replay_out = tmp_dir("mpc-replay-out");
        let code = cmd_mpc_replay(&out.join("trace.json"), &replay_out).unwrap();
        assert_eq!(code, EXIT_OK);
        let report = std::fs::read_to_string(replay_out.join("replay.json")).unwrap();
        assert!(report.contains("\"matches\": true"));
    }

    #[test]
    fn checker_toggles_write_checkers_json() {
        let config = parse(
            r#"{
            "mechanism": {"mechanism": "posted-price", "r": 1.0, "burn": false},
            "scenario": {"distribution": {"support": [0.5, 2.0]}, "n": 3},
            "checkers": {"payment_sandwich": true, "revenue_limit": true, "constant_revenue": true}
        }"#,
        );
        let out = tmp_dir("checkers");
        assert_eq!(cmd_audit(&config, &out, 0).unwrap(), EXIT_OK);
        let doc = std::fs::read_to_string(out.join("checkers.json")).unwrap();
        assert!(doc.contains("payment_sandwich"));
        assert!(doc.contains("revenue_limit"));
        assert!(doc.contains("constant_revenue"));
    }

    #[test]
    fn budget_overrun_exits_3_naming_the_target() {
        let dir = tmp_dir("budget");
        let config_path = dir.join("config.json");
        std::fs::write(
            &config_path,
            r#"{
            "mechanism": {"mechanism": "proportional", "r": 8.0, "epsilon": 2.0, "rho": 1.0, "model": "plain"},
            "scenario": {"bids": [2.0]},
            "targets": [
                {"property": "SCP", "setting": "ex-post", "rho": 1.0,
                 "true_values": [5.0, 5.1, 5.2], "epsilon": 10.0}
            ],
            "limits": {"max_fake": 2, "max_bids_per_member": 3, "budget": 100}
        }"#,
        )
        .unwrap();
        let code = run("audit", &config_path, &dir.join("out"), 0);
        assert_eq!(code, EXIT_BUDGET);
    }

    #[test]
    fn identical_seeds_give_byte_identical_outputs() {
        let config = parse(
            r#"{
            "mechanism": {"mechanism": "posted-price", "r": 5.0, "k": 2, "burn": true},
            "scenario": {"bids": [6.0, 7.0]},
            "targets": [
                {"property": "UIC", "setting": "ex-post", "rho": 0.0, "true_values": [9.0], "epsilon": 0.0}
            ],
            "mpc": {
                "miners": 3,
                "mode": "guaranteed",
                "identities": [{"id": "a", "bid": 7.0}, {"id": "b", "bid": 6.0}]
            }
        }"#,
        );
        let out1 = tmp_dir("det-1");
        let out2 = tmp_dir("det-2");
        cmd_audit(&config, &out1, 9).unwrap();
        cmd_audit(&config, &out2, 9).unwrap();
        cmd_mpc_sim(&config, &out1, 9).unwrap();
        cmd_mpc_sim(&config, &out2, 9).unwrap();
        for file in ["summary.csv", "audit_0.json", "trace.json", "outcome.json"] {
            let a = std::fs::read(out1.join(file)).unwrap();
            let b = std::fs::read(out2.join(file)).unwrap();
            assert_eq!(a, b, "{file} differs between runs");
        }
    }
}
