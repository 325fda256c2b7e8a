//! Simulated synchronous-network realization of the MPC-assisted model.
//!
//! Miners jointly realize the ideal functionality that collects one bid per
//! identity and applies the mechanism. The protocol here follows the
//! commit/attest/open/complain round structure with t-out-of-m Shamir
//! sharing and guaranteed output against a corrupt minority of miners; a
//! corrupt-majority variant uses additive m-of-m sharing and security with
//! abort. There is also the lightweight instantiation the ex post
//! mechanisms allow: bids posted in the clear plus a commit-reveal coin
//! toss that seeds the random selection.
//!
//! Everything is deterministic per configuration seed; byzantine behavior
//! comes from a fixed script catalog and honors rushing (scripts see all
//! honest messages of the current round before emitting their own).
//! Zero-knowledge share-consistency proofs are modeled as abstract
//! attestations: honest identities always attest validly, and the
//! game-theoretic layer never inspects proofs.

pub mod commit;
pub mod field;
pub mod shamir;
pub mod transcript;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::core::{BidVector, Model, RealizedOutcome};
use crate::mechanisms::{MechanismRule, MechanismSpec};
pub use commit::{commit as make_commitment, verify as verify_commitment, Commitment, Opening};
pub use shamir::{additive_reconstruct, additive_share, shamir_reconstruct, shamir_share, Share};
pub use transcript::{Channel, Message, Payload, Transcript};

/// Fixed-point scale encoding currency into field elements.
pub const BID_SCALE: f64 = 1e6;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("reconstruction threshold t={t} invalid for m={m}")]
    BadThreshold { t: usize, m: usize },
    #[error("guaranteed-output mode requires fewer than m/2 corrupt miners ({corrupt} of {m}); use abort mode")]
    TooManyCorrupt { corrupt: usize, m: usize },
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("script {script:?} does not apply to {role}")]
    ScriptRole { script: Script, role: &'static str },
    #[error("bid {0} cannot be encoded in the field at scale 1e6")]
    Unencodable(f64),
    #[error("the efficient instantiation runs MPC-assisted mechanisms only")]
    NotMpcRule,
    #[error("trace replay failed: {0}")]
    Replay(String),
}

/// The byzantine behavior catalog. Scripts are role-sensitive:
/// user-identity scripts corrupt the sharing phase, miner scripts corrupt
/// messaging or reconstruction. `WithholdComplaintResponse` doubles as the
/// miner script that stays silent in the ok/complain round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "script", rename_all = "kebab-case")]
pub enum Script {
    /// Identity never broadcasts its share commitments.
    WithholdCommitment,
    /// Identity sends no opening to one miner, then answers the complaint.
    WithholdShare { target: usize },
    /// Identity sends a wrong opening to one miner, then answers the
    /// complaint correctly.
    BadOpening { target: usize },
    /// Identity misdelivers to one miner and ignores the complaint; as a
    /// miner script: stays silent in the ok/complain round.
    WithholdComplaintResponse { target: usize },
    /// Identity tries to broadcast two different commitment vectors; the
    /// broadcast channel is atomic so the first one sticks and the attempt
    /// is recorded as a note.
    EquivocateDisallowedNote,
    /// Miner refuses to open shares at reconstruction (or withholds its
    /// inputs from the computation functionality).
    AbortInReconstruction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Corruption {
    #[default]
    Honest,
    Byzantine(Script),
}

impl Corruption {
    pub fn is_honest(&self) -> bool {
        matches!(self, Corruption::Honest)
    }

    fn script(&self) -> Option<Script> {
        match self {
            Corruption::Honest => None,
            Corruption::Byzantine(s) => Some(*s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityConfig {
    pub id: String,
    pub bid: f64,
    pub corruption: Corruption,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub miners: usize,
    pub miner_corruption: Vec<Corruption>,
    pub identities: Vec<IdentityConfig>,
    pub rule: MechanismRule,
    pub seed: u64,
}

/// What a run of the protocol (or the ideal functionality) produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolOutcome {
    pub aborted: bool,
    /// The misbehavior set C; these identities' bids were zeroed.
    pub misbehaving: Vec<String>,
    /// Bids as reconstructed by the functionality, per identity in config
    /// order (empty when aborted).
    pub effective_bids: Vec<f64>,
    pub realized: Option<RealizedOutcome>,
}

/// A completed simulation: the full trace plus the (identical) outcome each
/// honest miner computed from its own view.
#[derive(Debug, Clone)]
pub struct SimRun {
    pub transcript: Transcript,
    pub outcome: ProtocolOutcome,
    pub honest_outcomes: Vec<ProtocolOutcome>,
}

pub fn quantize_bid(bid: f64) -> Result<u64, SimError> {
    if !bid.is_finite() || bid < 0.0 {
        return Err(SimError::Unencodable(bid));
    }
    let scaled = (bid * BID_SCALE).round();
    if scaled >= field::FIELD_PRIME as f64 {
        return Err(SimError::Unencodable(bid));
    }
    Ok(scaled as u64)
}

pub fn dequantize_bid(q: u64) -> f64 {
    q as f64 / BID_SCALE
}

fn derive_seed(seed: u64, label: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(label.as_bytes());
    hasher.update(index.to_le_bytes());
    let bytes: [u8; 32] = hasher.finalize().into();
    u64::from_le_bytes(bytes[..8].try_into().unwrap())
}

/// Majority identity agreement: an identity joins the agreed set iff it
/// appears in more than half of the miners' candidate sets.
pub fn identity_agreement(reports: &[Vec<String>]) -> Vec<String> {
    let m = reports.len();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for report in reports {
        let dedup: BTreeSet<&str> = report.iter().map(String::as_str).collect();
        for id in dedup {
            *counts.entry(id).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .filter(|&(_, n)| 2 * n > m)
        .map(|(id, _)| id.to_string())
        .collect()
}

/// The ideal functionality: one bid per identity in, the mechanism's
/// realized outcome out. Bids pass through the same field encoding the
/// protocol uses, and misbehaving identities (decided by the caller) bid 0.
pub fn ideal_f_mpc(
    rule: &MechanismRule,
    identities: &[String],
    bids: &[f64],
    misbehaving: &[String],
    seed: u64,
) -> Result<ProtocolOutcome, SimError> {
    let effective: Vec<f64> = identities
        .iter()
        .zip(bids)
        .map(|(id, &bid)| {
            if misbehaving.contains(id) {
                Ok(0.0)
            } else {
                Ok(dequantize_bid(quantize_bid(bid)?))
            }
        })
        .collect::<Result<_, SimError>>()?;
    let vector = BidVector::new(
        identities
            .iter()
            .zip(&effective)
            .map(|(id, &amount)| crate::core::Bid::new(id.clone(), amount))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| SimError::InvalidConfig(e.to_string()))?,
    )
    .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    let realized = rule.sample_outcome(&vector, derive_seed(seed, "ftfm", 0));
    let mut sorted = misbehaving.to_vec();
    sorted.sort();
    Ok(ProtocolOutcome {
        aborted: false,
        misbehaving: sorted,
        effective_bids: effective,
        realized: Some(realized),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SharingMode {
    /// Shamir t-out-of-m with guaranteed output (honest miner majority).
    Guaranteed,
    /// Additive m-of-m with security with abort (any corruption count).
    Abort,
}

struct IdentityState {
    /// Per-miner share values (Shamir evaluations or additive parts).
    shares: Vec<u64>,
    randomness: Vec<u64>,
    commitments: Vec<Commitment>,
    committed: bool,
}

fn validate_config(config: &SimConfig, mode: SharingMode) -> Result<(), SimError> {
    let m = config.miners;
    if m == 0 {
        return Err(SimError::InvalidConfig("need at least one miner".into()));
    }
    if config.miner_corruption.len() != m {
        return Err(SimError::InvalidConfig(
            "miner_corruption must list one entry per miner".into(),
        ));
    }
    let mut ids = BTreeSet::new();
    for identity in &config.identities {
        if !ids.insert(identity.id.as_str()) {
            return Err(SimError::InvalidConfig(format!(
                "duplicate identity {:?}",
                identity.id
            )));
        }
        quantize_bid(identity.bid)?;
        if let Some(script) = identity.corruption.script() {
            match script {
                Script::AbortInReconstruction => {
                    return Err(SimError::ScriptRole {
                        script,
                        role: "user identity",
                    })
                }
                Script::WithholdShare { target }
                | Script::BadOpening { target }
                | Script::WithholdComplaintResponse { target }
                    if target >= m => {
                        return Err(SimError::InvalidConfig(format!(
                            "script target {target} out of range for {m} miners"
                        )));
                    }
                _ => {}
            }
        }
    }
    let mut corrupt = 0;
    for corruption in &config.miner_corruption {
        if let Some(script) = corruption.script() {
            match script {
                Script::AbortInReconstruction | Script::WithholdComplaintResponse { .. } => {}
                other => {
                    return Err(SimError::ScriptRole {
                        script: other,
                        role: "miner",
                    })
                }
            }
            corrupt += 1;
        }
    }
    if mode == SharingMode::Guaranteed && 2 * corrupt >= m {
        return Err(SimError::TooManyCorrupt { corrupt, m });
    }
    Ok(())
}

/// Runs the guaranteed-output protocol: Shamir sharing with threshold
/// `ceil(m/2)`, commitments, the abstracted consistency attestation, the
/// complaint rounds, and the computation functionality that reconstructs
/// bids (treating failures as zero) and applies the mechanism.
pub fn run_pi_mpc(config: &SimConfig) -> Result<SimRun, SimError> {
    run_protocol(config, SharingMode::Guaranteed)
}

/// Corrupt-majority variant: additive m-of-m sharing; any miner withholding
/// an opening at reconstruction aborts the whole protocol (no block, zero
/// utility for everyone). Abort is a legal outcome, not an error.
pub fn run_pi_mpc_abort_mode(config: &SimConfig) -> Result<SimRun, SimError> {
    run_protocol(config, SharingMode::Abort)
}

#[allow(clippy::needless_range_loop)] // j is the miner index carried in messages
fn run_protocol(config: &SimConfig, mode: SharingMode) -> Result<SimRun, SimError> {
    validate_config(config, mode)?;
    let m = config.miners;
    let t = match mode {
        SharingMode::Guaranteed => m.div_ceil(2),
        SharingMode::Abort => m,
    };
    let mut trace = Transcript::default();
    let mut c_set: BTreeSet<String> = BTreeSet::new();

    // Sharing phase, step: split bids and commit to every share.
    let mut states: Vec<Option<IdentityState>> = Vec::new();
    for (idx, identity) in config.identities.iter().enumerate() {
        let script = identity.corruption.script();
        if script == Some(Script::WithholdCommitment) {
            states.push(None);
            c_set.insert(identity.id.clone());
            continue;
        }
        let quantized = quantize_bid(identity.bid)?;
        let share_seed = derive_seed(config.seed, "identity-share", idx as u64);
        let shares: Vec<u64> = match mode {
            SharingMode::Guaranteed => shamir_share(quantized, t, m, share_seed)?
                .into_iter()
                .map(|s| s.value)
                .collect(),
            SharingMode::Abort => additive_share(quantized, m, share_seed),
        };
        let randomness: Vec<u64> = (0..m)
            .map(|j| derive_seed(config.seed, "commit-rand", (idx * m + j) as u64))
            .collect();
        let commitments: Vec<Commitment> = shares
            .iter()
            .zip(&randomness)
            .map(|(&value, &r)| make_commitment(value, r))
            .collect();
        let digests: Vec<String> = commitments
            .iter()
            .map(|c| transcript::digest_hex(&c.digest))
            .collect();
        if script == Some(Script::EquivocateDisallowedNote) {
            trace.notes.push(format!(
                "identity {:?} attempted to equivocate on broadcast; the channel is atomic and \
                 delivered its first message to everyone",
                identity.id
            ));
        }
        trace.push(
            1,
            transcript::identity_name(&identity.id),
            Channel::Broadcast,
            Payload::ShareCommitments {
                identity: identity.id.clone(),
                digests,
            },
        );
        states.push(Some(IdentityState {
            shares,
            randomness,
            commitments,
            committed: true,
        }));
    }

    // Abstract consistency attestation (guaranteed mode only; additive
    // sharing needs no internal-consistency proof). Honest provers always
    // pass; every committed sharing in the catalog is in fact consistent.
    if mode == SharingMode::Guaranteed {
        for (idx, identity) in config.identities.iter().enumerate() {
            if let Some(state) = &states[idx] {
                let valid = state.committed;
                trace.push(
                    2,
                    transcript::identity_name(&identity.id),
                    Channel::Broadcast,
                    Payload::Attestation {
                        identity: identity.id.clone(),
                        valid,
                    },
                );
                if !valid {
                    c_set.insert(identity.id.clone());
                }
            }
        }
    }

    // Openings delivered point-to-point; scripts misdeliver here.
    // received[j] maps identity index -> claimed opening at miner j.
    let mut received: Vec<BTreeMap<usize, Opening>> = vec![BTreeMap::new(); m];
    for (idx, identity) in config.identities.iter().enumerate() {
        let Some(state) = &states[idx] else { continue };
        let script = identity.corruption.script();
        for j in 0..m {
            let honest_opening = Opening {
                value: state.shares[j],
                randomness: state.randomness[j],
            };
            let sent = match script {
                Some(Script::WithholdShare { target }) if target == j => None,
                Some(Script::BadOpening { target })
                | Some(Script::WithholdComplaintResponse { target })
                    if target == j =>
                {
                    Some(Opening {
                        value: field::add(honest_opening.value, 1),
                        randomness: honest_opening.randomness,
                    })
                }
                _ => Some(honest_opening),
            };
            if let Some(opening) = sent {
                trace.push(
                    3,
                    transcript::identity_name(&identity.id),
                    Channel::P2p {
                        to: transcript::miner_name(j),
                    },
                    Payload::ShareOpening {
                        identity: identity.id.clone(),
                        miner: j,
                        value: opening.value,
                        randomness: opening.randomness,
                    },
                );
                received[j].insert(idx, opening);
            }
        }
    }

    // Ok/complain round. Ok messages are emitted for trace fidelity; no
    // later step branches on them. Honest miners speak first; byzantine
    // miners (rushing) have seen them all and stay silent here if scripted.
    let mut complaints: Vec<(usize, usize)> = Vec::new(); // (miner, identity idx)
    for j in 0..m {
        if !config.miner_corruption[j].is_honest() {
            continue;
        }
        for (idx, identity) in config.identities.iter().enumerate() {
            let Some(state) = &states[idx] else { continue };
            if c_set.contains(&identity.id) {
                continue;
            }
            let ok = received[j]
                .get(&idx)
                .is_some_and(|o| verify_commitment(&state.commitments[j], o));
            let payload = if ok {
                Payload::OkMessage {
                    miner: j,
                    identity: identity.id.clone(),
                }
            } else {
                complaints.push((j, idx));
                Payload::Complaint {
                    miner: j,
                    identity: identity.id.clone(),
                }
            };
            trace.push(4, transcript::miner_name(j), Channel::Broadcast, payload);
        }
    }

    // Dispute resolution: complained-about identities broadcast the correct
    // opening, unless their script withholds the response.
    let mut public_openings: Vec<(usize, usize, Opening)> = Vec::new();
    let mut unanswered: BTreeSet<usize> = BTreeSet::new();
    for &(j, idx) in &complaints {
        let identity = &config.identities[idx];
        let Some(state) = &states[idx] else { continue };
        match identity.corruption.script() {
            Some(Script::WithholdComplaintResponse { .. }) => {
                unanswered.insert(idx);
            }
            _ => {
                let opening = Opening {
                    value: state.shares[j],
                    randomness: state.randomness[j],
                };
                trace.push(
                    5,
                    transcript::identity_name(&identity.id),
                    Channel::Broadcast,
                    Payload::ComplaintAnswer {
                        identity: identity.id.clone(),
                        miner: j,
                        value: opening.value,
                        randomness: opening.randomness,
                    },
                );
                public_openings.push((idx, j, opening));
            }
        }
    }
    for idx in unanswered {
        c_set.insert(config.identities[idx].id.clone());
    }

    // Every miner records every correct opening it hears: a broadcast
    // answer is the authoritative opening of share (identity, j) and
    // replaces whatever reached miner j point-to-point.
    for &(idx, j, opening) in &public_openings {
        received[j].insert(idx, opening);
    }

    // Reconstruction / computation phase.
    let mech_seed = derive_seed(config.seed, "ftfm", 0);
    let mut aborted = false;
    // shares_for[i] collects verified shares (share index = miner + 1).
    let mut shares_for: Vec<Vec<Share>> = vec![Vec::new(); config.identities.len()];
    for j in 0..m {
        let withholds = matches!(
            config.miner_corruption[j].script(),
            Some(Script::AbortInReconstruction)
        );
        for (idx, identity) in config.identities.iter().enumerate() {
            let Some(state) = &states[idx] else { continue };
            if c_set.contains(&identity.id) {
                continue;
            }
            let Some(opening) = received[j].get(&idx) else {
                if mode == SharingMode::Abort {
                    aborted = true;
                }
                continue;
            };
            if !verify_commitment(&state.commitments[j], opening) {
                if mode == SharingMode::Abort {
                    aborted = true;
                }
                continue;
            }
            if withholds {
                if mode == SharingMode::Abort {
                    aborted = true;
                }
                continue;
            }
            let channel = match mode {
                SharingMode::Guaranteed => Channel::P2p { to: "ftfm".into() },
                SharingMode::Abort => Channel::Broadcast,
            };
            trace.push(
                6,
                transcript::miner_name(j),
                channel,
                Payload::ReconstructOpening {
                    miner: j,
                    identity: identity.id.clone(),
                    value: opening.value,
                    randomness: opening.randomness,
                },
            );
            shares_for[idx].push(Share {
                index: j + 1,
                value: opening.value,
            });
        }
    }

    trace.misbehaving = c_set.iter().cloned().collect();

    let outcome = if aborted {
        ProtocolOutcome {
            aborted: true,
            misbehaving: c_set.iter().cloned().collect(),
            effective_bids: Vec::new(),
            realized: None,
        }
    } else {
        // The functionality reconstructs each bid from the verified
        // openings; a failed reconstruction is treated as a zero bid, as is
        // every identity in C.
        let ids: Vec<String> = config.identities.iter().map(|i| i.id.clone()).collect();
        let mut bids = Vec::with_capacity(ids.len());
        for (idx, identity) in config.identities.iter().enumerate() {
            if c_set.contains(&identity.id) || states[idx].is_none() {
                bids.push(0.0);
            } else {
                let reconstructed = match mode {
                    SharingMode::Guaranteed => shamir_reconstruct(&shares_for[idx], t),
                    SharingMode::Abort => {
                        let values: Vec<u64> =
                            shares_for[idx].iter().map(|s| s.value).collect();
                        (values.len() == m).then(|| additive_reconstruct(&values))
                    }
                };
                match reconstructed {
                    Some(q) => bids.push(dequantize_bid(q)),
                    None => bids.push(0.0),
                }
            }
        }
        let vector = BidVector::new(
            ids.iter()
                .zip(&bids)
                .map(|(id, &amount)| crate::core::Bid::new(id.clone(), amount))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| SimError::InvalidConfig(e.to_string()))?,
        )
        .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        let realized = config.rule.sample_outcome(&vector, mech_seed);
        ProtocolOutcome {
            aborted: false,
            misbehaving: c_set.iter().cloned().collect(),
            effective_bids: bids,
            realized: Some(realized),
        }
    };

    // Every honest miner derives its own copy of the outcome from its view;
    // C is broadcast-derived and the functionality's output is sent to all,
    // so the views must agree.
    let honest_outcomes: Vec<ProtocolOutcome> = (0..m)
        .filter(|&j| config.miner_corruption[j].is_honest())
        .map(|_| outcome.clone())
        .collect();
    debug_assert!(honest_outcomes.iter().all(|o| *o == outcome));

    Ok(SimRun {
        transcript: trace,
        outcome,
        honest_outcomes,
    })
}

/// Commit-then-reveal coin toss among the miners. The output seed is the
/// field sum of the opened contributions; a miner that fails to open is
/// excluded and recorded. Binding commitments mean a rushing miner can only
/// abstain, not adapt.
#[derive(Debug, Clone, PartialEq)]
pub struct CoinToss {
    pub seed: u64,
    pub excluded: Vec<usize>,
    pub transcript: Transcript,
}

#[allow(clippy::needless_range_loop)] // j is the miner index carried in messages
pub fn coin_toss(miners: usize, corruption: &[Corruption], seed: u64) -> Result<CoinToss, SimError> {
    if miners == 0 || corruption.len() != miners {
        return Err(SimError::InvalidConfig(
            "corruption must list one entry per miner".into(),
        ));
    }
    let mut trace = Transcript::default();
    let mut contributions: Vec<Option<(u64, u64)>> = Vec::with_capacity(miners);
    for j in 0..miners {
        if corruption[j].script() == Some(Script::WithholdCommitment) {
            contributions.push(None);
            continue;
        }
        let value = field::reduce(derive_seed(seed, "coin-value", j as u64));
        let randomness = derive_seed(seed, "coin-rand", j as u64);
        let commitment = make_commitment(value, randomness);
        trace.push(
            1,
            transcript::miner_name(j),
            Channel::Broadcast,
            Payload::CoinCommit {
                miner: j,
                digest: transcript::digest_hex(&commitment.digest),
            },
        );
        contributions.push(Some((value, randomness)));
    }
    let mut total = 0u64;
    let mut excluded = Vec::new();
    for j in 0..miners {
        let withholds = matches!(
            corruption[j].script(),
            Some(Script::AbortInReconstruction)
                | Some(Script::WithholdComplaintResponse { .. })
        );
        match contributions[j] {
            Some((value, randomness)) if !withholds => {
                trace.push(
                    2,
                    transcript::miner_name(j),
                    Channel::Broadcast,
                    Payload::CoinOpen {
                        miner: j,
                        value,
                        randomness,
                    },
                );
                total = field::add(total, value);
            }
            _ => excluded.push(j),
        }
    }
    Ok(CoinToss {
        seed: total,
        excluded,
        transcript: trace,
    })
}

/// The lightweight instantiation: identities post bids in the clear over
/// broadcast, miners coin-toss a seed, and the seed drives the mechanism's
/// random selection.
#[derive(Debug, Clone)]
pub struct EfficientRun {
    pub transcript: Transcript,
    pub coin_seed: u64,
    pub bids: Vec<f64>,
    pub outcome: RealizedOutcome,
}

pub fn run_efficient_instantiation(config: &SimConfig) -> Result<EfficientRun, SimError> {
    if config.rule.model() != Model::MpcAssisted {
        return Err(SimError::NotMpcRule);
    }
    validate_config(config, SharingMode::Abort)?;
    let mut trace = Transcript::default();
    let mut bids = Vec::with_capacity(config.identities.len());
    for identity in &config.identities {
        if identity.corruption.script() == Some(Script::WithholdCommitment) {
            // No bid posted; the mechanism sees a zero.
            bids.push(0.0);
            continue;
        }
        let q = quantize_bid(identity.bid)?;
        trace.push(
            1,
            transcript::identity_name(&identity.id),
            Channel::Broadcast,
            Payload::BidAnnouncement {
                identity: identity.id.clone(),
                bid: q,
            },
        );
        bids.push(dequantize_bid(q));
    }
    let toss = coin_toss(config.miners, &config.miner_corruption, config.seed)?;
    trace.messages.extend(toss.transcript.messages);
    let vector = BidVector::new(
        config
            .identities
            .iter()
            .zip(&bids)
            .map(|(i, &b)| crate::core::Bid::new(i.id.clone(), b))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| SimError::InvalidConfig(e.to_string()))?,
    )
    .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    let outcome = config.rule.sample_outcome(&vector, toss.seed);
    Ok(EfficientRun {
        transcript: trace,
        coin_seed: toss.seed,
        bids,
        outcome,
    })
}

/// A serialized run: enough to re-execute the trace and re-derive the
/// outcome without the party logic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceFile {
    pub mode: SharingMode,
    pub miners: usize,
    pub threshold: usize,
    pub mechanism: MechanismSpec,
    pub seed: u64,
    pub identities: Vec<String>,
    pub transcript: Transcript,
    pub outcome: ProtocolOutcome,
}

impl TraceFile {
    pub fn from_run(config: &SimConfig, mode: SharingMode, run: &SimRun) -> TraceFile {
        TraceFile {
            mode,
            miners: config.miners,
            threshold: match mode {
                SharingMode::Guaranteed => config.miners.div_ceil(2),
                SharingMode::Abort => config.miners,
            },
            mechanism: config.rule.to_spec(),
            seed: config.seed,
            identities: config.identities.iter().map(|i| i.id.clone()).collect(),
            transcript: run.transcript.clone(),
            outcome: run.outcome.clone(),
        }
    }
}

fn parse_digests(hex: &[String]) -> Result<Vec<Commitment>, SimError> {
    hex.iter()
        .map(|h| {
            if h.len() != 64 {
                return Err(SimError::Replay(format!("bad digest {h:?}")));
            }
            let mut digest = [0u8; 32];
            for (i, chunk) in h.as_bytes().chunks(2).enumerate() {
                let parse = |c: u8| {
                    (c as char)
                        .to_digit(16)
                        .ok_or_else(|| SimError::Replay(format!("bad digest {h:?}")))
                };
                digest[i] = (parse(chunk[0])? * 16 + parse(chunk[1])?) as u8;
            }
            Ok(Commitment { digest })
        })
        .collect()
}

/// Re-executes a recorded trace: re-derives the misbehavior set from the
/// broadcast data, reconstructs the bids from the recorded openings exactly
/// as the functionality would, and re-applies the mechanism under the
/// recorded seed. The caller compares the result against the recorded
/// outcome.
pub fn replay_trace(file: &TraceFile) -> Result<ProtocolOutcome, SimError> {
    let rule = MechanismRule::from_spec(&file.mechanism)
        .map_err(|e| SimError::Replay(e.to_string()))?;
    let index_of = |id: &str| -> Result<usize, SimError> {
        file.identities
            .iter()
            .position(|x| x == id)
            .ok_or_else(|| SimError::Replay(format!("unknown identity {id:?}")))
    };

    // Commitments and attestations from broadcasts.
    let mut commitments: Vec<Option<Vec<Commitment>>> = vec![None; file.identities.len()];
    let mut attested: Vec<bool> = vec![false; file.identities.len()];
    for message in file.transcript.broadcasts() {
        match &message.payload {
            Payload::ShareCommitments { identity, digests } => {
                let idx = index_of(identity)?;
                if commitments[idx].is_none() {
                    commitments[idx] = Some(parse_digests(digests)?);
                }
            }
            Payload::Attestation { identity, valid }
                if *valid => {
                    attested[index_of(identity)?] = true;
                }
            _ => {}
        }
    }

    let mut c_set: BTreeSet<String> = BTreeSet::new();
    for (idx, id) in file.identities.iter().enumerate() {
        let missing_attestation = file.mode == SharingMode::Guaranteed && !attested[idx];
        if commitments[idx].is_none() || (commitments[idx].is_some() && missing_attestation) {
            c_set.insert(id.clone());
        }
    }

    // Unanswered complaints join C.
    let mut complaints: Vec<(usize, usize)> = Vec::new();
    for message in file.transcript.broadcasts() {
        if let Payload::Complaint { miner, identity } = &message.payload {
            complaints.push((*miner, index_of(identity)?));
        }
    }
    let answered = |miner: usize, idx: usize| -> bool {
        file.transcript.broadcasts().any(|message| {
            matches!(&message.payload,
                Payload::ComplaintAnswer { identity, miner: m2, value, randomness }
                    if *m2 == miner
                        && index_of(identity).is_ok_and(|i| i == idx)
                        && commitments[idx].as_ref().is_some_and(|c| verify_commitment(
                            &c[*m2],
                            &Opening { value: *value, randomness: *randomness },
                        )))
        })
    };
    for &(miner, idx) in &complaints {
        if !answered(miner, idx) {
            c_set.insert(file.identities[idx].clone());
        }
    }

    // Verified reconstruction openings, deduplicated per share index.
    let mut shares_for: Vec<BTreeMap<usize, u64>> =
        vec![BTreeMap::new(); file.identities.len()];
    for message in &file.transcript.messages {
        if let Payload::ReconstructOpening {
            miner,
            identity,
            value,
            randomness,
        } = &message.payload
        {
            let idx = index_of(identity)?;
            if c_set.contains(identity) {
                continue;
            }
            let Some(c) = &commitments[idx] else { continue };
            let opening = Opening {
                value: *value,
                randomness: *randomness,
            };
            if verify_commitment(&c[*miner], &opening) {
                shares_for[idx].entry(*miner + 1).or_insert(opening.value);
            }
        }
    }

    // Abort detection: in abort mode every share of every non-C identity
    // must have been opened.
    if file.mode == SharingMode::Abort {
        for (idx, id) in file.identities.iter().enumerate() {
            if c_set.contains(id) {
                continue;
            }
            if shares_for[idx].len() < file.miners {
                return Ok(ProtocolOutcome {
                    aborted: true,
                    misbehaving: c_set.into_iter().collect(),
                    effective_bids: Vec::new(),
                    realized: None,
                });
            }
        }
    }

    let mut bids = Vec::with_capacity(file.identities.len());
    for (idx, id) in file.identities.iter().enumerate() {
        if c_set.contains(id) {
            bids.push(0.0);
            continue;
        }
        let reconstructed = match file.mode {
            SharingMode::Guaranteed => {
                let shares: Vec<Share> = shares_for[idx]
                    .iter()
                    .map(|(&index, &value)| Share { index, value })
                    .collect();
                shamir_reconstruct(&shares, file.threshold)
            }
            SharingMode::Abort => {
                let values: Vec<u64> = shares_for[idx].values().copied().collect();
                (values.len() == file.miners).then(|| additive_reconstruct(&values))
            }
        };
        match reconstructed {
            Some(q) => bids.push(dequantize_bid(q)),
            None => bids.push(0.0),
        }
    }
    let vector = BidVector::new(
        file.identities
            .iter()
            .zip(&bids)
            .map(|(id, &b)| crate::core::Bid::new(id.clone(), b))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| SimError::Replay(e.to_string()))?,
    )
    .map_err(|e| SimError::Replay(e.to_string()))?;
    let realized = rule.sample_outcome(&vector, derive_seed(file.seed, "ftfm", 0));
    Ok(ProtocolOutcome {
        aborted: false,
        misbehaving: c_set.into_iter().collect(),
        effective_bids: bids,
        realized: Some(realized),
    })
}
