//! Counter-based deterministic random streams.
//!
//! Every random draw in a run is addressed by `(seed, step, draw_index)`:
//! the delay at step t comes from the `Delay` domain stream for (seed, t),
//! and the attachment choices at step t consume the `Theta` domain stream
//! for (seed, t) one draw at a time. Streams never share state, so runs
//! are reproducible per step regardless of evaluation order or thread
//! count, and two runs on the same seed see identical randomness even if
//! they consume different numbers of draws per step.

/// 64-bit finalizer with full avalanche (the SplitMix64 mixer).
#[inline(always)]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Which family of draws a stream feeds. Keeps delay sampling and
/// attachment sampling on the same (seed, step) independent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    Delay,
    Theta,
}

impl Domain {
    fn tag(self) -> u64 {
        match self {
            Domain::Delay => 0x8E51_2E1E_0FC1_9CF5,
            Domain::Theta => 0x2545_F491_4F6C_DD1D,
        }
    }
}

/// One independent stream of uniform draws, keyed by (seed, step, domain).
#[derive(Clone, Debug)]
pub struct StreamRng {
    state: u64,
}

impl StreamRng {
    pub fn new(seed: u64, step: u64, domain: Domain) -> Self {
        let key = mix64(seed ^ domain.tag()).wrapping_add(mix64(step.wrapping_mul(GAMMA)));
        StreamRng { state: mix64(key) }
    }

    #[inline(always)]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        mix64(self.state)
    }

    /// Uniform in [0, 1) with 53 significant bits.
    #[inline(always)]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [0, n). Rejection keeps it exactly unbiased.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0) is meaningless");
        let threshold = n.wrapping_neg() % n; // (2^64 - n) mod n
        loop {
            let v = self.next_u64();
            if v >= threshold {
                return v % n;
            }
        }
    }
}
