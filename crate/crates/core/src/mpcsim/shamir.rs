//! Shamir and additive secret sharing over the simulation field.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use super::field;
use super::SimError;

/// One share of a secret: the evaluation point index `1..=m` and the value.
/// Share structure is only checked at reconstruction time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Share {
    pub index: usize,
    pub value: u64,
}

fn random_element(rng: &mut ChaCha12Rng) -> u64 {
    // Rejection sampling keeps the draw uniform over the field.
    loop {
        let x: u64 = rng.gen();
        let x = x >> 3; // 61 bits
        if x < field::FIELD_PRIME {
            return x;
        }
    }
}

/// Splits `secret` into `m` shares with reconstruction threshold `t`: a
/// degree `t-1` polynomial with constant term `secret`, evaluated at
/// `1..=m`.
pub fn shamir_share(secret: u64, t: usize, m: usize, seed: u64) -> Result<Vec<Share>, SimError> {
    if t == 0 || t > m {
        return Err(SimError::BadThreshold { t, m });
    }
    let secret = field::reduce(secret);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let coeffs: Vec<u64> = std::iter::once(secret)
        .chain((1..t).map(|_| random_element(&mut rng)))
        .collect();
    Ok((1..=m)
        .map(|index| {
            let x = index as u64;
            // Horner evaluation.
            let mut value = 0u64;
            for &c in coeffs.iter().rev() {
                value = field::add(field::mul(value, x), c);
            }
            Share { index, value }
        })
        .collect())
}

/// Lagrange interpolation at zero. Returns `None` when fewer than `t`
/// distinct share indices are present. With enough shares the interpolation
/// always produces *a* value; if shares were tampered with it is simply the
/// wrong secret, so callers must filter shares by commitment verification
/// first.
pub fn shamir_reconstruct(shares: &[Share], t: usize) -> Option<u64> {
    let mut seen = std::collections::BTreeMap::new();
    for share in shares {
        seen.entry(share.index).or_insert(share.value);
    }
    if seen.len() < t {
        return None;
    }
    let points: Vec<(u64, u64)> = seen
        .into_iter()
        .take(t)
        .map(|(i, v)| (i as u64, v))
        .collect();
    let mut secret = 0u64;
    for (i, &(xi, yi)) in points.iter().enumerate() {
        let mut num = 1u64;
        let mut den = 1u64;
        for (j, &(xj, _)) in points.iter().enumerate() {
            if i != j {
                num = field::mul(num, field::sub(0, xj));
                den = field::mul(den, field::sub(xi, xj));
            }
        }
        let lagrange = field::mul(num, field::inv(den).expect("distinct points"));
        secret = field::add(secret, field::mul(yi, lagrange));
    }
    Some(secret)
}

/// Additive m-of-m sharing for the corrupt-majority protocol variant.
pub fn additive_share(secret: u64, m: usize, seed: u64) -> Vec<u64> {
    let secret = field::reduce(secret);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut shares: Vec<u64> = (0..m - 1).map(|_| random_element(&mut rng)).collect();
    let partial = shares.iter().fold(0u64, |acc, &s| field::add(acc, s));
    shares.push(field::sub(secret, partial));
    shares
}

pub fn additive_reconstruct(shares: &[u64]) -> u64 {
    shares.iter().fold(0u64, |acc, &s| field::add(acc, s))
}
