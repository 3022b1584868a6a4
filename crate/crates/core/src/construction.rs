//! Attachment rules: given a read-only view of a past snapshot and the
//! step's randomness stream, pick the set of vertices the new vertex
//! connects to.
//!
//! Draw order is part of the contract so that runs over a shared trace
//! stay coupled: composite kinds (Mixture, StateVarying) consume one
//! uniform to pick the component, then the component consumes its own
//! draws; a proper k-subset consumes exactly k uniforms; forced choices
//! (take-all, a single deepest vertex, the fixed-mark rule) consume none.

use crate::rng::StreamRng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Read-only view of a snapshot G_s. Leaf and deepest-vertex lists are
/// exposed positionally in mark order.
pub trait SnapshotAccess {
    /// Snapshot time s; equals the largest mark present.
    fn time(&self) -> u32;
    fn leaf_count(&self) -> u32;
    /// The j-th leaf (0-based, ascending marks).
    fn leaf_id(&self, j: u32) -> u32;
    fn deepest_count(&self) -> u32;
    /// The j-th vertex of maximal depth (0-based, ascending marks).
    fn deepest_id(&self, j: u32) -> u32;
    /// The vertex carrying a given mark; mark 0 is the root.
    fn id_with_mark(&self, mark: u32) -> u32;
}

/// Component of a mixture: the leaf-selecting kinds only.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum MixComponent {
    KLeaves(u32),
    AllLeaves,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ConstructionSpec {
    /// One uniform vertex among those furthest from the root.
    Nakamoto,
    /// Uniform k-subset of the leaves; all of them if fewer than k.
    KLeaves(u32),
    /// Every leaf.
    AllLeaves,
    /// Draw a component by weight, then delegate.
    Mixture(Vec<(MixComponent, f64)>),
    /// KLeaves(k) with probability min(alpha/sqrt(l), 1) at leaf count l,
    /// else a single uniform leaf.
    StateVarying { k: u32, alpha: f64 },
    /// The single vertex marked (m-1)_+ where m is the largest mark.
    TwoEndedExample,
}

#[derive(Debug, Error, PartialEq)]
pub enum ConstructionError {
    #[error("malformed construction: {0}")]
    Malformed(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum SelectError {
    #[error("snapshot has no vertices to select from")]
    EmptySnapshot,
    #[error("enumeration over {leaves} leaves exceeds the bound of {bound}")]
    TooLargeToEnumerate { leaves: u32, bound: u32 },
}

impl ConstructionSpec {
    /// Validate parameters; mixtures get their weights normalized.
    pub fn validated(mut self) -> Result<Self, ConstructionError> {
        match &mut self {
            ConstructionSpec::Nakamoto
            | ConstructionSpec::AllLeaves
            | ConstructionSpec::TwoEndedExample => {}
            ConstructionSpec::KLeaves(k) => {
                if *k < 1 {
                    return Err(ConstructionError::Malformed(
                        "k-leaf selection needs k >= 1".into(),
                    ));
                }
            }
            ConstructionSpec::Mixture(parts) => {
                if parts.is_empty() {
                    return Err(ConstructionError::Malformed("empty mixture".into()));
                }
                let mut total = 0.0;
                for (comp, w) in parts.iter() {
                    if let MixComponent::KLeaves(k) = comp {
                        if *k < 1 {
                            return Err(ConstructionError::Malformed(
                                "mixture component needs k >= 1".into(),
                            ));
                        }
                    }
                    if !w.is_finite() || *w < 0.0 {
                        return Err(ConstructionError::Malformed(format!(
                            "bad mixture weight {w}"
                        )));
                    }
                    total += *w;
                }
                if (total - 1.0).abs() > 1e-9 {
                    return Err(ConstructionError::Malformed(format!(
                        "mixture weights sum to {total}, not 1"
                    )));
                }
                for (_, w) in parts.iter_mut() {
                    *w /= total;
                }
            }
            ConstructionSpec::StateVarying { k, alpha } => {
                if *k < 2 {
                    return Err(ConstructionError::Malformed(
                        "state-varying selection needs k >= 2".into(),
                    ));
                }
                if !alpha.is_finite() || *alpha < 0.0 {
                    return Err(ConstructionError::Malformed(format!(
                        "bad state-varying alpha {alpha}"
                    )));
                }
            }
        }
        Ok(self)
    }

    /// True when the rule draws from the leaf set itself rather than a
    /// depth- or mark-distinguished subset. Deepest attachment also only
    /// returns leaves (a covered vertex always has a deeper child), but
    /// its law is defined through depths, not the leaf set.
    pub fn leaf_valued(&self) -> bool {
        !matches!(
            self,
            ConstructionSpec::Nakamoto | ConstructionSpec::TwoEndedExample
        )
    }
}

/// Uniform k-subset of 0..n without replacement (k < n), by Floyd's
/// sampling; consumes exactly k draws.
fn sample_k_of_n(k: u32, n: u32, rng: &mut StreamRng) -> Vec<u32> {
    let mut chosen: Vec<u32> = Vec::with_capacity(k as usize);
    for j in (n - k)..n {
        let t = rng.below(j as u64 + 1) as u32;
        if chosen.contains(&t) {
            chosen.push(j);
        } else {
            chosen.push(t);
        }
    }
    chosen
}

fn k_leaves(k: u32, snap: &dyn SnapshotAccess, rng: &mut StreamRng) -> Vec<u32> {
    let l = snap.leaf_count();
    if l <= k {
        return (0..l).map(|j| snap.leaf_id(j)).collect();
    }
    let mut ids: Vec<u32> = sample_k_of_n(k, l, rng)
        .into_iter()
        .map(|j| snap.leaf_id(j))
        .collect();
    ids.sort_unstable();
    ids
}

fn apply_component(
    comp: MixComponent,
    snap: &dyn SnapshotAccess,
    rng: &mut StreamRng,
) -> Vec<u32> {
    match comp {
        MixComponent::KLeaves(k) => k_leaves(k, snap, rng),
        MixComponent::AllLeaves => (0..snap.leaf_count()).map(|j| snap.leaf_id(j)).collect(),
    }
}

/// Apply the rule. Returns the selected vertex ids, ascending.
pub fn select(
    spec: &ConstructionSpec,
    snap: &dyn SnapshotAccess,
    rng: &mut StreamRng,
) -> Result<Vec<u32>, SelectError> {
    if snap.leaf_count() == 0 {
        return Err(SelectError::EmptySnapshot);
    }
    let ids = match spec {
        ConstructionSpec::Nakamoto => {
            let d = snap.deepest_count();
            let j = if d == 1 { 0 } else { rng.below(d as u64) as u32 };
            vec![snap.deepest_id(j)]
        }
        ConstructionSpec::KLeaves(k) => k_leaves(*k, snap, rng),
        ConstructionSpec::AllLeaves => {
            (0..snap.leaf_count()).map(|j| snap.leaf_id(j)).collect()
        }
        ConstructionSpec::Mixture(parts) => {
            let u = rng.next_f64();
            let mut acc = 0.0;
            let mut picked = parts[parts.len() - 1].0;
            for &(comp, w) in parts {
                acc += w;
                if u < acc {
                    picked = comp;
                    break;
                }
            }
            apply_component(picked, snap, rng)
        }
        ConstructionSpec::StateVarying { k, alpha } => {
            let l = snap.leaf_count();
            let p = (alpha / (l as f64).sqrt()).min(1.0);
            let take_k = rng.next_f64() < p;
            k_leaves(if take_k { *k } else { 1 }, snap, rng)
        }
        ConstructionSpec::TwoEndedExample => {
            vec![snap.id_with_mark(snap.time().saturating_sub(1))]
        }
    };
    debug_assert!(ids.windows(2).all(|w| w[0] < w[1]));
    Ok(ids)
}

const ENUMERATION_BOUND: u32 = 20;

fn singleton_map(id: u32) -> BTreeMap<Vec<u32>, f64> {
    BTreeMap::from([(vec![id], 1.0)])
}

fn k_subset_distribution(
    k: u32,
    snap: &dyn SnapshotAccess,
) -> Result<BTreeMap<Vec<u32>, f64>, SelectError> {
    let l = snap.leaf_count();
    let leaves: Vec<u32> = (0..l).map(|j| snap.leaf_id(j)).collect();
    if l <= k {
        return Ok(BTreeMap::from([(leaves, 1.0)]));
    }
    if l > ENUMERATION_BOUND {
        return Err(SelectError::TooLargeToEnumerate {
            leaves: l,
            bound: ENUMERATION_BOUND,
        });
    }
    let mut out = BTreeMap::new();
    let mut subset: Vec<u32> = (0..k).collect();
    let total = {
        // C(l, k) without overflow concerns at l <= 20
        let mut c = 1.0f64;
        for i in 0..k {
            c = c * (l - i) as f64 / (i + 1) as f64;
        }
        c
    };
    loop {
        let ids: Vec<u32> = subset.iter().map(|&j| leaves[j as usize]).collect();
        out.insert(ids, 1.0 / total);
        // next lexicographic k-combination of 0..l
        let mut i = k as i64 - 1;
        while i >= 0 && subset[i as usize] == l - k + i as u32 {
            i -= 1;
        }
        if i < 0 {
            break;
        }
        subset[i as usize] += 1;
        for j in (i as usize + 1)..k as usize {
            subset[j] = subset[j - 1] + 1;
        }
    }
    Ok(out)
}

fn add_weighted(
    into: &mut BTreeMap<Vec<u32>, f64>,
    from: BTreeMap<Vec<u32>, f64>,
    weight: f64,
) {
    if weight == 0.0 {
        return;
    }
    for (ids, p) in from {
        *into.entry(ids).or_insert(0.0) += weight * p;
    }
}

/// Exact law of `select` over subsets, by enumeration. The test-side
/// oracle for the sampler.
pub fn selection_distribution(
    spec: &ConstructionSpec,
    snap: &dyn SnapshotAccess,
) -> Result<BTreeMap<Vec<u32>, f64>, SelectError> {
    if snap.leaf_count() == 0 {
        return Err(SelectError::EmptySnapshot);
    }
    match spec {
        ConstructionSpec::Nakamoto => {
            let d = snap.deepest_count();
            let mut out = BTreeMap::new();
            for j in 0..d {
                out.insert(vec![snap.deepest_id(j)], 1.0 / d as f64);
            }
            Ok(out)
        }
        ConstructionSpec::KLeaves(k) => k_subset_distribution(*k, snap),
        ConstructionSpec::AllLeaves => {
            let l = snap.leaf_count();
            Ok(BTreeMap::from([(
                (0..l).map(|j| snap.leaf_id(j)).collect::<Vec<u32>>(),
                1.0,
            )]))
        }
        ConstructionSpec::Mixture(parts) => {
            let mut out = BTreeMap::new();
            for &(comp, w) in parts {
                if w == 0.0 {
                    continue;
                }
                let d = match comp {
                    MixComponent::KLeaves(k) => k_subset_distribution(k, snap)?,
                    MixComponent::AllLeaves => {
                        let l = snap.leaf_count();
                        BTreeMap::from([(
                            (0..l).map(|j| snap.leaf_id(j)).collect::<Vec<u32>>(),
                            1.0,
                        )])
                    }
                };
                add_weighted(&mut out, d, w);
            }
            Ok(out)
        }
        ConstructionSpec::StateVarying { k, alpha } => {
            let l = snap.leaf_count();
            let p = (alpha / (l as f64).sqrt()).min(1.0);
            let mut out = BTreeMap::new();
            if p > 0.0 {
                add_weighted(&mut out, k_subset_distribution(*k, snap)?, p);
            }
            if p < 1.0 {
                add_weighted(&mut out, k_subset_distribution(1, snap)?, 1.0 - p);
            }
            Ok(out)
        }
        ConstructionSpec::TwoEndedExample => {
            Ok(singleton_map(snap.id_with_mark(snap.time().saturating_sub(1))))
        }
    }
}
