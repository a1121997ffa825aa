//! Seeded random streams.
//!
//! Every random decision in a run draws from a lane identified by
//! `(master_seed, purpose, client, round)`. Lanes are independent ChaCha
//! streams, so the order in which clients are trained never changes the
//! numbers any single client sees.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// What a lane is used for. The discriminant is part of the seed material.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Synthetic = 1,
    Split = 2,
    Partition = 3,
    Init = 4,
    Select = 5,
    Train = 6,
    Augment = 7,
    Centralized = 8,
    Preview = 9,
    Test = 10,
}

/// Identifies a lane. `client` and `round` are `u64::MAX` when unused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedMaterial {
    pub master_seed: u64,
    pub purpose: Purpose,
    pub client: u64,
    pub round: u64,
}

const UNUSED: u64 = u64::MAX;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeedMaterial {
    fn key(&self) -> [u8; 32] {
        let mut state = self.master_seed;
        for word in [self.purpose as u64, self.client, self.round] {
            let mut mixed = state ^ word.wrapping_mul(0xD6E8_FEB8_6659_FD93);
            state = splitmix64(&mut mixed);
        }
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        key
    }
}

/// A deterministic random stream bound to one lane.
#[derive(Debug, Clone)]
pub struct RngStream {
    material: SeedMaterial,
    inner: ChaCha20Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, purpose: Purpose) -> Self {
        Self::lane(master_seed, purpose, UNUSED, UNUSED)
    }

    pub fn lane(master_seed: u64, purpose: Purpose, client: u64, round: u64) -> Self {
        let material = SeedMaterial {
            master_seed,
            purpose,
            client,
            round,
        };
        let inner = ChaCha20Rng::from_seed(material.key());
        Self { material, inner }
    }

    /// A new stream for `(client, round)` under the same seed, with a
    /// different purpose.
    pub fn sibling(&self, purpose: Purpose, client: u64, round: u64) -> Self {
        Self::lane(self.material.master_seed, purpose, client, round)
    }

    pub fn material(&self) -> SeedMaterial {
        self.material
    }

    /// Fork a child stream from the current position, consuming one draw.
    pub fn fork(&mut self) -> Self {
        let mut key = [0u8; 32];
        self.inner.fill_bytes(&mut key);
        Self {
            material: self.material,
            inner: ChaCha20Rng::from_seed(key),
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_material_same_draws() {
        let mut a = RngStream::lane(7, Purpose::Train, 3, 11);
        let mut b = RngStream::lane(7, Purpose::Train, 3, 11);
        let xs: Vec<u64> = (0..16).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..16).map(|_| b.next_u64()).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn lanes_differ() {
        let base = RngStream::lane(7, Purpose::Train, 3, 11).next_u64();
        assert_ne!(base, RngStream::lane(8, Purpose::Train, 3, 11).next_u64());
        assert_ne!(base, RngStream::lane(7, Purpose::Augment, 3, 11).next_u64());
        assert_ne!(base, RngStream::lane(7, Purpose::Train, 4, 11).next_u64());
        assert_ne!(base, RngStream::lane(7, Purpose::Train, 3, 12).next_u64());
        assert_ne!(
            RngStream::lane(7, Purpose::Train, 3, 11).next_u64(),
            RngStream::lane(7, Purpose::Train, 11, 3).next_u64()
        );
    }

    #[test]
    fn adjacent_lanes_look_uncorrelated() {
        let n = 20_000;
        let mut a = RngStream::lane(1, Purpose::Train, 0, 0);
        let mut b = RngStream::lane(1, Purpose::Train, 1, 0);
        let mut sum = 0.0;
        for _ in 0..n {
            let x: f64 = a.gen::<f64>() - 0.5;
            let y: f64 = b.gen::<f64>() - 0.5;
            sum += x * y;
        }
        // correlation of two uniforms; std of the estimate is ~ 1/sqrt(n)
        let corr = sum / n as f64 * 12.0;
        assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "corr {corr}");
    }
}
