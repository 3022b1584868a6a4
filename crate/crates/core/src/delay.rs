//! Attachment-delay laws on the positive integers.
//!
//! A delay law gives the lag xi_t >= 1 between the step at which a vertex
//! arrives and the snapshot of the graph it gets to see. Supported families:
//!
//! | family                  | support        | mean          |
//! |-------------------------|----------------|---------------|
//! | Deterministic(c)        | {c}            | c             |
//! | Geometric(p)            | {1, 2, ...}    | 1/p           |
//! | ShiftedGeometric(s, p)  | {s+1, s+2,...} | s + 1/p       |
//! | FiniteSupport(pairs)    | explicit       | sum v * p_v   |
//!
//! Geometric uses pmf p (1-p)^(k-1). Everything downstream only needs the
//! survival function P(xi >= k), the minimal support point r, and exact
//! tail sums, so those are provided in closed form per family.
//!
//! Two derived quantities drive the statistical checks:
//!
//! * the gap law `chi`: P(chi >= k) = prod_{i=1..k} P(xi >= i), whose mean
//!   inverts to the linear height growth rate `lambda`;
//! * the regeneration density q = prod_{s>=0} P(xi <= max(s, r)), the
//!   long-run fraction of steps at which the graph's past is sealed off.
//!
//! Both are infinite series/products truncated at an explicit eps with the
//! tail bounded by sum_{s>t} P(xi > s) <= mean - partial sums, which every
//! family can evaluate without cancellation.

use crate::rng::StreamRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Truncation threshold for the gap-law and density series.
pub const DEFAULT_TAIL_EPS: f64 = 1e-12;
/// Tail mass below which a time is treated as conclusively observable.
pub const DEFAULT_CENSOR_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum DelaySpec {
    Deterministic(u32),
    Geometric(f64),
    ShiftedGeometric { shift: u32, p: f64 },
    FiniteSupport(Vec<(u32, f64)>),
}

#[derive(Debug, Error, PartialEq)]
pub enum DelayError {
    #[error("malformed delay spec: {0}")]
    MalformedSpec(String),
    #[error("delay law has infinite mean")]
    InfiniteMean,
}

/// A validated delay law. `min_support` is the smallest attainable delay,
/// called r throughout; regeneration intervals have exactly this length.
#[derive(Clone, Debug)]
pub struct DelayModel {
    spec: DelaySpec,
    min_support: u32,
    mean: f64,
    second_moment: f64,
}

fn check_p(p: f64) -> Result<(), DelayError> {
    if p == 0.0 {
        return Err(DelayError::InfiniteMean);
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(DelayError::MalformedSpec(format!(
            "geometric parameter must lie in (0, 1], got {p}"
        )));
    }
    Ok(())
}

impl DelayModel {
    pub fn new(spec: DelaySpec) -> Result<Self, DelayError> {
        match spec {
            DelaySpec::Deterministic(c) => {
                if c == 0 {
                    return Err(DelayError::MalformedSpec(
                        "deterministic delay must be >= 1".into(),
                    ));
                }
                Ok(DelayModel {
                    spec: DelaySpec::Deterministic(c),
                    min_support: c,
                    mean: c as f64,
                    second_moment: (c as f64) * (c as f64),
                })
            }
            DelaySpec::Geometric(p) => {
                check_p(p)?;
                Ok(DelayModel {
                    spec: DelaySpec::Geometric(p),
                    min_support: 1,
                    mean: 1.0 / p,
                    second_moment: (2.0 - p) / (p * p),
                })
            }
            DelaySpec::ShiftedGeometric { shift, p } => {
                check_p(p)?;
                let s = shift as f64;
                Ok(DelayModel {
                    spec: DelaySpec::ShiftedGeometric { shift, p },
                    min_support: shift + 1,
                    mean: s + 1.0 / p,
                    // E (s + G)^2 with G geometric(p)
                    second_moment: s * s + 2.0 * s / p + (2.0 - p) / (p * p),
                })
            }
            DelaySpec::FiniteSupport(pairs) => {
                if pairs.is_empty() {
                    return Err(DelayError::MalformedSpec("empty support".into()));
                }
                let mut pairs = pairs;
                pairs.sort_by_key(|&(v, _)| v);
                let mut sum = 0.0;
                for w in pairs.windows(2) {
                    if w[0].0 == w[1].0 {
                        return Err(DelayError::MalformedSpec(format!(
                            "duplicate support point {}",
                            w[0].0
                        )));
                    }
                }
                for &(v, p) in &pairs {
                    if v == 0 {
                        return Err(DelayError::MalformedSpec(
                            "support points must be >= 1".into(),
                        ));
                    }
                    if !(p > 0.0 && p.is_finite()) {
                        return Err(DelayError::MalformedSpec(format!(
                            "probability of {v} must be positive and finite, got {p}"
                        )));
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(DelayError::MalformedSpec(format!(
                        "probabilities sum to {sum}, not 1"
                    )));
                }
                for pair in &mut pairs {
                    pair.1 /= sum;
                }
                let mean = pairs.iter().map(|&(v, p)| v as f64 * p).sum();
                let second_moment = pairs.iter().map(|&(v, p)| (v as f64).powi(2) * p).sum();
                Ok(DelayModel {
                    min_support: pairs[0].0,
                    spec: DelaySpec::FiniteSupport(pairs),
                    mean,
                    second_moment,
                })
            }
        }
    }

    pub fn spec(&self) -> &DelaySpec {
        &self.spec
    }

    /// Minimal support point r.
    pub fn min_support(&self) -> u32 {
        self.min_support
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn second_moment(&self) -> f64 {
        self.second_moment
    }

    /// Largest support point, if the law is bounded.
    pub fn bounded_support(&self) -> Option<u32> {
        match &self.spec {
            DelaySpec::Deterministic(c) => Some(*c),
            DelaySpec::FiniteSupport(pairs) => Some(pairs.last().unwrap().0),
            _ => None,
        }
    }

    /// gcd of the support points. Period 1 means aperiodic.
    pub fn support_period(&self) -> u32 {
        fn gcd(a: u32, b: u32) -> u32 {
            if b == 0 {
                a
            } else {
                gcd(b, a % b)
            }
        }
        match &self.spec {
            DelaySpec::Deterministic(c) => *c,
            // consecutive integers in the support force gcd 1
            DelaySpec::Geometric(_) | DelaySpec::ShiftedGeometric { .. } => 1,
            DelaySpec::FiniteSupport(pairs) => pairs.iter().fold(0, |acc, &(v, _)| gcd(v, acc)),
        }
    }

    pub fn pmf(&self, k: u32) -> f64 {
        match &self.spec {
            DelaySpec::Deterministic(c) => {
                if k == *c {
                    1.0
                } else {
                    0.0
                }
            }
            DelaySpec::Geometric(p) => {
                if k == 0 {
                    0.0
                } else {
                    p * (1.0 - p).powi(k as i32 - 1)
                }
            }
            DelaySpec::ShiftedGeometric { shift, p } => {
                if k <= *shift {
                    0.0
                } else {
                    p * (1.0 - p).powi((k - shift) as i32 - 1)
                }
            }
            DelaySpec::FiniteSupport(pairs) => pairs
                .iter()
                .find(|&&(v, _)| v == k)
                .map(|&(_, p)| p)
                .unwrap_or(0.0),
        }
    }

    /// P(xi >= k); survival(0) = survival(r) = 1.
    pub fn survival(&self, k: u32) -> f64 {
        if k <= self.min_support {
            return 1.0;
        }
        match &self.spec {
            DelaySpec::Deterministic(_) => 0.0,
            DelaySpec::Geometric(p) => (1.0 - p).powi(k as i32 - 1),
            DelaySpec::ShiftedGeometric { shift, p } => (1.0 - p).powi((k - shift) as i32 - 1),
            DelaySpec::FiniteSupport(pairs) => {
                pairs.iter().filter(|&&(v, _)| v >= k).map(|&(_, p)| p).sum()
            }
        }
    }

    /// P(xi <= k).
    pub fn cdf(&self, k: u32) -> f64 {
        1.0 - self.survival(k + 1)
    }

    /// Exact tail series sum_{s > t} P(xi > s); the truncation bound for
    /// the density product and the censoring rule.
    pub fn tail_mass_above(&self, t: u32) -> f64 {
        match &self.spec {
            DelaySpec::Deterministic(c) => {
                // P(xi > s) = 1 for s < c
                if t + 1 >= *c {
                    0.0
                } else {
                    (*c - 1 - t) as f64
                }
            }
            DelaySpec::Geometric(p) => (1.0 - p).powi(t as i32 + 1) / p,
            DelaySpec::ShiftedGeometric { shift, p } => {
                let flat = shift.saturating_sub(t) as f64;
                let geo_from = t.saturating_sub(*shift);
                flat + (1.0 - p).powi(geo_from as i32 + 1) / p
            }
            DelaySpec::FiniteSupport(pairs) => pairs
                .iter()
                .map(|&(v, p)| p * (v.saturating_sub(t + 1)) as f64)
                .sum(),
        }
    }

    /// Smallest W with sum_{s > W} P(xi > s) < eps. Times further than W
    /// from the horizon can be classified conclusively up to eps.
    pub fn censor_margin(&self, eps: f64) -> u32 {
        let mut w = 0;
        while self.tail_mass_above(w) >= eps {
            w += 1;
        }
        w
    }

    pub fn sample(&self, rng: &mut StreamRng) -> u32 {
        match &self.spec {
            DelaySpec::Deterministic(c) => *c,
            DelaySpec::Geometric(p) => sample_geometric(*p, rng),
            DelaySpec::ShiftedGeometric { shift, p } => shift + sample_geometric(*p, rng),
            DelaySpec::FiniteSupport(pairs) => {
                let u = rng.next_f64();
                let mut acc = 0.0;
                for &(v, p) in pairs {
                    acc += p;
                    if u < acc {
                        return v;
                    }
                }
                pairs.last().unwrap().0
            }
        }
    }
}

fn sample_geometric(p: f64, rng: &mut StreamRng) -> u32 {
    if p >= 1.0 {
        return 1;
    }
    let u = rng.next_f64();
    // inverse cdf: smallest k with 1 - (1-p)^k > u
    let k = ((1.0 - u).ln() / (1.0 - p).ln()).ceil();
    if k < 1.0 {
        1
    } else if k >= u32::MAX as f64 {
        u32::MAX
    } else {
        k as u32
    }
}

/// Law of the gap between consecutive height increments:
/// P(chi >= k) = prod_{i=1..k} P(xi >= i), truncated once below eps.
#[derive(Clone, Debug)]
pub struct ChiLaw {
    survival: Vec<f64>,
    mean: f64,
    second_moment: f64,
    truncation_eps: f64,
}

impl ChiLaw {
    /// P(chi >= k); zero past the stored truncation point.
    pub fn survival(&self, k: u32) -> f64 {
        self.survival.get(k as usize).copied().unwrap_or(0.0)
    }

    pub fn pmf(&self, k: u32) -> f64 {
        self.survival(k) - self.survival(k + 1)
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.second_moment - self.mean * self.mean
    }

    pub fn truncation_eps(&self) -> f64 {
        self.truncation_eps
    }

    /// Largest k with P(chi >= k) above the truncation threshold.
    pub fn max_k(&self) -> u32 {
        (self.survival.len() - 1) as u32
    }
}

pub fn chi_law(model: &DelayModel, eps: f64) -> ChiLaw {
    let mut survival = vec![1.0]; // k = 0
    let mut prod = 1.0;
    let mut mean = 0.0;
    let mut second = 0.0;
    let mut k = 1u32;
    loop {
        prod *= model.survival(k);
        if prod < eps {
            break;
        }
        survival.push(prod);
        mean += prod;
        second += (2 * k - 1) as f64 * prod;
        k += 1;
    }
    ChiLaw {
        survival,
        mean,
        second_moment: second,
        truncation_eps: eps,
    }
}

/// Linear growth rate of the height process: lambda = 1 / E chi.
pub fn lambda_closed_form(model: &DelayModel) -> f64 {
    1.0 / chi_law(model, DEFAULT_TAIL_EPS).mean()
}

/// Truncated evaluation of the regeneration density
/// q = prod_{s>=0} P(xi <= max(s, r)).
///
/// `value` is the partial product q_t, which overshoots: the true density
/// lies in [value - truncation_gap, value].
#[derive(Clone, Debug, Serialize)]
pub struct RegenDensity {
    pub value: f64,
    pub truncation_gap: f64,
    pub terms: u32,
}

pub fn regeneration_density(model: &DelayModel, eps: f64) -> RegenDensity {
    let r = model.min_support();
    let mut prod = 1.0;
    let mut s = 0u32;
    loop {
        prod *= model.cdf(s.max(r));
        let tail = model.tail_mass_above(s);
        if tail < eps || prod == 0.0 {
            return RegenDensity {
                value: prod,
                truncation_gap: tail,
                terms: s + 1,
            };
        }
        s += 1;
    }
}
