//! Protocol traces: every broadcast and point-to-point message, round by
//! round, serializable to JSON and replayable.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Channel {
    Broadcast,
    P2p { to: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Payload {
    /// Sharing phase step 2: one digest per miner.
    ShareCommitments { identity: String, digests: Vec<String> },
    /// Abstracted consistency proof for the committed sharing.
    Attestation { identity: String, valid: bool },
    /// Opening of share (identity, miner) delivered point-to-point.
    ShareOpening {
        identity: String,
        miner: usize,
        value: u64,
        randomness: u64,
    },
    /// Emitted for trace fidelity; nothing branches on ok messages.
    OkMessage { miner: usize, identity: String },
    Complaint { miner: usize, identity: String },
    /// Public answer to a complaint.
    ComplaintAnswer {
        identity: String,
        miner: usize,
        value: u64,
        randomness: u64,
    },
    /// A miner opening its recorded share during abort-mode reconstruction
    /// or handing it to the computation functionality.
    ReconstructOpening {
        miner: usize,
        identity: String,
        value: u64,
        randomness: u64,
    },
    CoinCommit { miner: usize, digest: String },
    CoinOpen { miner: usize, value: u64, randomness: u64 },
    /// Efficient instantiation: bid posted in the clear.
    BidAnnouncement { identity: String, bid: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub round: u32,
    pub sender: String,
    pub channel: Channel,
    pub payload: Payload,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Transcript {
    pub messages: Vec<Message>,
    /// The misbehavior set C, derived from broadcast data only.
    pub misbehaving: Vec<String>,
    /// Free-form simulator notes, e.g. disallowed equivocation attempts.
    pub notes: Vec<String>,
}

impl Transcript {
    pub fn push(&mut self, round: u32, sender: String, channel: Channel, payload: Payload) {
        self.messages.push(Message {
            round,
            sender,
            channel,
            payload,
        });
    }

    pub fn broadcasts(&self) -> impl Iterator<Item = &Message> {
        self.messages
            .iter()
            .filter(|m| m.channel == Channel::Broadcast)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("transcript serializes")
    }
}

pub fn miner_name(j: usize) -> String {
    format!("miner:{j}")
}

pub fn identity_name(id: &str) -> String {
    format!("id:{id}")
}

pub fn digest_hex(digest: &[u8; 32]) -> String {
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
