//! Counter-based random draws keyed by `(seed, replicate, time, index, role)`.
//!
//! Every uniform the engine consumes is a pure function of its key, computed with
//! the Philox-4x32-10 bijection. Two runs that visit the same key get the same
//! draw, no matter which thread runs them or what was drawn before. This is what
//! lets the adaptive and reference particle systems share randomness exactly
//! until their resampling schedules part ways.

use serde::{Deserialize, Serialize};

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

#[inline(always)]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = u64::from(a) * u64::from(b);
    ((p >> 32) as u32, p as u32)
}

#[inline(always)]
fn philox_round(ctr: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let (hi0, lo0) = mulhilo(PHILOX_M0, ctr[0]);
    let (hi1, lo1) = mulhilo(PHILOX_M1, ctr[2]);
    [hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0]
}

/// The Philox-4x32 block function with 10 rounds.
#[inline]
pub fn philox4x32_10(mut ctr: [u32; 4], mut key: [u32; 2]) -> [u32; 4] {
    ctr = philox_round(ctr, key);
    for _ in 1..10 {
        key[0] = key[0].wrapping_add(PHILOX_W0);
        key[1] = key[1].wrapping_add(PHILOX_W1);
        ctr = philox_round(ctr, key);
    }
    ctr
}

/// What a draw is used for. Distinct roles never share a key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Init = 0,
    Mutation = 1,
    Keep = 2,
    Selection = 3,
    Threshold = 4,
}

/// Full address of one draw.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub replicate: u32,
    pub time: u32,
    pub index: u32,
    pub role: Role,
}

impl StreamKey {
    pub fn new(seed: u64, replicate: u32, time: usize, index: usize, role: Role) -> Self {
        Self {
            seed,
            replicate,
            time: time as u32,
            index: index as u32,
            role,
        }
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    #[inline]
    pub fn uniform(&self) -> f64 {
        self.sub_uniform(0)
    }

    /// The `sub`-th uniform of this key, for samplers that need several draws.
    #[inline]
    pub fn sub_uniform(&self, sub: u32) -> f64 {
        let key = [self.seed as u32, (self.seed >> 32) as u32];
        let ctr = [
            self.replicate,
            self.time,
            self.index,
            (self.role as u32) | (sub << 8),
        ];
        let out = philox4x32_10(ctr, key);
        let bits = ((u64::from(out[0]) << 32) | u64::from(out[1])) >> 11;
        bits as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn draws(self) -> Draws {
        Draws { key: self, next: 0 }
    }
}

/// Successive uniforms under one key.
#[derive(Clone, Debug)]
pub struct Draws {
    key: StreamKey,
    next: u32,
}

impl Draws {
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        let u = self.key.sub_uniform(self.next);
        self.next += 1;
        u
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Known-answer vectors published with the Random123 reference implementation.
    #[test]
    fn philox_known_answers() {
        assert_eq!(
            philox4x32_10([0, 0, 0, 0], [0, 0]),
            [0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8]
        );
        assert_eq!(
            philox4x32_10([u32::MAX; 4], [u32::MAX; 2]),
            [0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd]
        );
        assert_eq!(
            philox4x32_10(
                [0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344],
                [0xa4093822, 0x299f31d0]
            ),
            [0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1]
        );
    }

    #[test]
    fn keys_are_pure_and_distinct() {
        let k = StreamKey::new(7, 3, 5, 11, Role::Mutation);
        assert_eq!(k.uniform().to_bits(), k.uniform().to_bits());
        let other = StreamKey::new(7, 3, 5, 11, Role::Keep);
        assert_ne!(k.uniform().to_bits(), other.uniform().to_bits());
        let mut d = k.draws();
        let a = d.next_uniform();
        let b = d.next_uniform();
        assert_eq!(a.to_bits(), k.uniform().to_bits());
        assert_ne!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn uniform_moments() {
        let n = 200_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for i in 0..n {
            let u = StreamKey::new(1, 0, 0, i, Role::Init).uniform();
            assert!((0.0..1.0).contains(&u));
            s1 += u;
            s2 += u * u;
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        // 5 sigma on the mean, generous on the variance
        assert!((mean - 0.5).abs() < 5.0 * (1.0 / 12.0 / n as f64).sqrt());
        assert!((var - 1.0 / 12.0).abs() < 2e-3);
    }
}
