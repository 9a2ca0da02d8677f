//! Counter-based random numbers (Philox4x32-10).
//!
//! A generator is a pure function of `(seed, stream, counter)`, so a stream can
//! be split into child streams by index without any shared state. Every
//! parallel experiment derives one child per work chunk, which makes results
//! independent of the number of worker threads.

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

const MUL0: u32 = 0xD251_1F53;
const MUL1: u32 = 0xCD9E_8D57;
const WEYL0: u32 = 0x9E37_79B9;
const WEYL1: u32 = 0xBB67_AE85;

/// One Philox4x32 block with ten rounds.
pub fn philox4x32(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(WEYL0);
            k[1] = k[1].wrapping_add(WEYL1);
        }
        let p0 = MUL0 as u64 * c[0] as u64;
        let p1 = MUL1 as u64 * c[2] as u64;
        c = [
            (p1 >> 32) as u32 ^ c[1] ^ k[0],
            p1 as u32,
            (p0 >> 32) as u32 ^ c[3] ^ k[1],
            p0 as u32,
        ];
    }
    c
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Serializable generator position. Two states that compare equal produce
/// identical output.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    seed: u64,
    stream: u64,
    counter: u64,
    #[serde(skip)]
    buffer: [u32; 4],
    #[serde(skip, default = "empty_buffer")]
    used: usize,
}

fn empty_buffer() -> usize {
    4
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        RngState { seed, stream, counter: 0, buffer: [0; 4], used: 4 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Child generator number `index`; it does not depend on how much of the
    /// parent stream has been consumed.
    pub fn split(&self, index: u64) -> RngState {
        let child = splitmix64(self.stream ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)));
        RngState::with_stream(self.seed, child)
    }

    fn refill(&mut self) {
        let key = [self.seed as u32, (self.seed >> 32) as u32];
        let ctr = [
            self.counter as u32,
            (self.counter >> 32) as u32,
            self.stream as u32,
            (self.stream >> 32) as u32,
        ];
        self.buffer = philox4x32(ctr, key);
        self.counter = self.counter.wrapping_add(1);
        self.used = 0;
    }

    /// Uniform on [0, 1) with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on (0, 1].
    pub fn uniform_open0(&mut self) -> f64 {
        1.0 - self.uniform()
    }

    /// Uniform integer in `0..n` (Lemire's multiply-shift with rejection).
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = self.next_u64() as u128 * n as u128;
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }
}

impl RngCore for RngState {
    fn next_u32(&mut self) -> u32 {
        if self.used >= 4 {
            self.refill();
        }
        let v = self.buffer[self.used];
        self.used += 1;
        v
    }

    fn next_u64(&mut self) -> u64 {
        let lo = self.next_u32() as u64;
        let hi = self.next_u32() as u64;
        (hi << 32) | lo
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(4) {
            let v = self.next_u32().to_le_bytes();
            chunk.copy_from_slice(&v[..chunk.len()]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn philox_known_answers() {
        assert_eq!(philox4x32([0; 4], [0; 2]), [0x6627_e8d5, 0xe169_c58d, 0xbc57_ac4c, 0x9b00_dbd8]);
        assert_eq!(
            philox4x32([u32::MAX; 4], [u32::MAX; 2]),
            [0x408f_276d, 0x41c8_3b0e, 0xa20b_c7c6, 0x6d54_51fd]
        );
        assert_eq!(
            philox4x32([0x243f_6a88, 0x85a3_08d3, 0x1319_8a2e, 0x0370_7344], [0xa409_3822, 0x299f_31d0]),
            [0xd16c_fe09, 0x94fd_cceb, 0x5001_e420, 0x2412_6ea1]
        );
    }

    #[test]
    fn same_seed_same_stream() {
        let mut a = RngState::new(7);
        let mut b = RngState::new(7);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut c = RngState::new(8);
        assert_ne!(a.next_u64(), c.next_u64());
    }

    #[test]
    fn split_ignores_parent_position() {
        let a = RngState::new(3);
        let mut b = RngState::new(3);
        b.next_u64();
        assert_eq!(a.split(5), b.split(5));
        assert_ne!(a.split(5), a.split(6));
    }

    #[test]
    fn uniform_range_and_mean() {
        let mut r = RngState::new(1);
        let n = 200_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let u = r.uniform();
            assert!((0.0..1.0).contains(&u));
            sum += u;
        }
        assert!((sum / n as f64 - 0.5).abs() < 4.0 * (1.0 / 12.0f64 / n as f64).sqrt());
        for _ in 0..1000 {
            assert!(r.below(3) < 3);
        }
    }

    #[test]
    fn state_round_trips_through_json() {
        let mut r = RngState::with_stream(9, 4);
        r.next_u32();
        let json = serde_json::to_string(&r).unwrap();
        let back: RngState = serde_json::from_str(&json).unwrap();
        assert_eq!(back.seed(), 9);
        assert_eq!(back.stream(), 4);
    }
}
