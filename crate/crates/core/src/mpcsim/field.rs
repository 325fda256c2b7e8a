//! Arithmetic in the prime field modulo 2^61 - 1.

/// The field modulus, a Mersenne prime. Bids are encoded as field elements
/// via a fixed-point scale before they enter the protocol.
pub const FIELD_PRIME: u64 = (1 << 61) - 1;

pub fn reduce(x: u64) -> u64 {
    x % FIELD_PRIME
}

pub fn add(a: u64, b: u64) -> u64 {
    ((a as u128 + b as u128) % FIELD_PRIME as u128) as u64
}

pub fn sub(a: u64, b: u64) -> u64 {
    add(a, FIELD_PRIME - reduce(b))
}

pub fn mul(a: u64, b: u64) -> u64 {
    ((a as u128 * b as u128) % FIELD_PRIME as u128) as u64
}

pub fn pow(mut base: u64, mut exp: u64) -> u64 {
    let mut acc = 1u64;
    base = reduce(base);
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul(acc, base);
        }
        base = mul(base, base);
        exp >>= 1;
    }
    acc
}

/// Multiplicative inverse by Fermat's little theorem; zero has none.
pub fn inv(a: u64) -> Option<u64> {
    let a = reduce(a);
    if a == 0 {
        None
    } else {
        Some(pow(a, FIELD_PRIME - 2))
    }
}
