//! Delay traces: the shared randomness behind a run.
//!
//! A trace fixes the delays xi_1..xi_T for one (seed, horizon) pair. Step t
//! of any process built on the trace looks at the graph as of time
//! (t - xi_t)_+, and draws any further selection randomness from the Theta
//! stream for (seed, t). Two processes driven by the same trace are coupled:
//! they see identical delays and identical selection draws, which is what
//! makes cross-construction comparisons meaningful.

use crate::delay::DelayModel;
use crate::rng::{Domain, StreamRng};

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    seed: u64,
    xi: Vec<u32>, // xi[t - 1] is the delay of step t
}

impl Trace {
    pub fn sample(model: &DelayModel, horizon: u32, seed: u64) -> Trace {
        let xi = (1..=horizon)
            .map(|t| {
                let mut rng = StreamRng::new(seed, t as u64, Domain::Delay);
                model.sample(&mut rng)
            })
            .collect();
        Trace { seed, xi }
    }

    /// Wrap explicit delays (hand-built fixtures); all entries must be >= 1.
    pub fn from_xi(seed: u64, xi: Vec<u32>) -> Trace {
        assert!(xi.iter().all(|&x| x >= 1), "delays are positive");
        Trace { seed, xi }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn horizon(&self) -> u32 {
        self.xi.len() as u32
    }

    /// Delay of step t, 1-based.
    #[inline]
    pub fn xi(&self, t: u32) -> u32 {
        self.xi[(t - 1) as usize]
    }

    pub fn xi_slice(&self) -> &[u32] {
        &self.xi
    }

    /// Snapshot time (t - xi_t)_+ seen by step t.
    #[inline]
    pub fn snapshot_time(&self, t: u32) -> u32 {
        t.saturating_sub(self.xi(t))
    }

    /// Selection randomness for step t.
    pub fn theta_stream(&self, t: u32) -> StreamRng {
        StreamRng::new(self.seed, t as u64, Domain::Theta)
    }

    /// First `horizon` steps as their own trace.
    pub fn prefix(&self, horizon: u32) -> Trace {
        assert!(horizon <= self.horizon());
        Trace {
            seed: self.seed,
            xi: self.xi[..horizon as usize].to_vec(),
        }
    }

    /// Edges t -> (t - xi_t)_+ of the time-delay graph, t = 1..=T.
    /// Every vertex points strictly backwards, so this is always a tree
    /// rooted at 0.
    pub fn time_delay_edges(&self) -> Vec<(u32, u32)> {
        (1..=self.horizon())
            .map(|t| (t, self.snapshot_time(t)))
            .collect()
    }
}
