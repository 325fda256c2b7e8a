//! Simulated hash-style commitments with stored openings.
//!
//! Binding within the simulation is enforced two ways: verification
//! recomputes the digest, and the registry keeps the digest-to-opening map
//! injective so any collision would be caught loudly. Hiding is modeled: no
//! honest party's logic reads anything out of a digest.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Commitment {
    #[serde(with = "hex_bytes")]
    pub digest: [u8; 32],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Opening {
    pub value: u64,
    pub randomness: u64,
}

pub fn commit(value: u64, randomness: u64) -> Commitment {
    let mut hasher = Sha256::new();
    hasher.update(b"tfm-lab-commit");
    hasher.update(value.to_le_bytes());
    hasher.update(randomness.to_le_bytes());
    Commitment {
        digest: hasher.finalize().into(),
    }
}

pub fn verify(commitment: &Commitment, opening: &Opening) -> bool {
    commit(opening.value, opening.randomness) == *commitment
}

/// Injective digest-to-opening store shared by the simulator.
#[derive(Debug, Default)]
pub struct CommitmentRegistry {
    map: HashMap<[u8; 32], Opening>,
}

impl CommitmentRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a commitment made by a committer. Panics on a binding
    /// violation (two distinct openings behind one digest), which would mean
    /// the hash collided.
    pub fn register(&mut self, value: u64, randomness: u64) -> Commitment {
        let commitment = commit(value, randomness);
        let opening = Opening { value, randomness };
        if let Some(existing) = self.map.insert(commitment.digest, opening) {
            assert_eq!(existing, opening, "commitment binding violated");
        }
        commitment
    }

    pub fn opening_of(&self, commitment: &Commitment) -> Option<Opening> {
        self.map.get(&commitment.digest).copied()
    }
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8; 32], ser: S) -> Result<S::Ok, S::Error> {
        let hex: String = bytes.iter().map(|b| format!("{b:02x}")).collect();
        ser.serialize_str(&hex)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(de)?;
        if s.len() != 64 {
            return Err(serde::de::Error::custom("expected 64 hex chars"));
        }
        let mut out = [0u8; 32];
        for (i, chunk) in s.as_bytes().chunks(2).enumerate() {
            let hi = (chunk[0] as char).to_digit(16).ok_or_else(|| {
                serde::de::Error::custom("bad hex")
            })?;
            let lo = (chunk[1] as char).to_digit(16).ok_or_else(|| {
                serde::de::Error::custom("bad hex")
            })?;
            out[i] = (hi * 16 + lo) as u8;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verify_accepts_only_the_committed_opening() {
        let c = commit(7, 99);
        assert!(verify(&c, &Opening { value: 7, randomness: 99 }));
        assert!(!verify(&c, &Opening { value: 8, randomness: 99 }));
        assert!(!verify(&c, &Opening { value: 7, randomness: 98 }));
    }

    #[test]
    fn binding_holds_after_seeing_other_openings() {
        // A rushing party that saw everyone's openings still cannot open its
        // earlier commitment to a different value.
        let mut registry = CommitmentRegistry::new();
        let c = registry.register(5, 1);
        assert!(!verify(&c, &Opening { value: 6, randomness: 1 }));
        assert_eq!(registry.opening_of(&c), Some(Opening { value: 5, randomness: 1 }));
    }

    #[test]
    fn digest_serializes_as_hex() {
        let c = commit(1, 2);
        let json = serde_json::to_string(&c).unwrap();
        let back: Commitment = serde_json::from_str(&json).unwrap();
        assert_eq!(c, back);
    }
}
