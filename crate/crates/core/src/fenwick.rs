//! Fenwick tree over 0/1 presence bits, used to rank and select current
//! leaf ids without rescanning the vertex set.

#[derive(Clone, Debug, PartialEq)]
pub struct PresenceTree {
    tree: Vec<u32>,
    present: Vec<bool>,
    count: u32,
}

impl PresenceTree {
    pub fn new(capacity: usize) -> Self {
        PresenceTree {
            tree: vec![0; capacity + 1],
            present: vec![false; capacity],
            count: 0,
        }
    }

    pub fn len(&self) -> u32 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn contains(&self, id: u32) -> bool {
        self.present[id as usize]
    }

    pub fn insert(&mut self, id: u32) {
        if self.present[id as usize] {
            return;
        }
        self.present[id as usize] = true;
        self.count += 1;
        let mut i = id as usize + 1;
        while i < self.tree.len() {
            self.tree[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    pub fn remove(&mut self, id: u32) {
        if !self.present[id as usize] {
            return;
        }
        self.present[id as usize] = false;
        self.count -= 1;
        let mut i = id as usize + 1;
        while i < self.tree.len() {
            self.tree[i] -= 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Present ids strictly below `id`.
    pub fn rank(&self, id: u32) -> u32 {
        let mut i = id as usize;
        let mut acc = 0;
        while i > 0 {
            acc += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        acc
    }

    /// The j-th present id (0-based), or None if fewer than j+1 are present.
    pub fn select(&self, j: u32) -> Option<u32> {
        if j >= self.count {
            return None;
        }
        let mut remaining = j + 1;
        let mut pos = 0usize;
        let mut step = self.tree.len().next_power_of_two() >> 1;
        while step > 0 {
            let next = pos + step;
            if next < self.tree.len() && self.tree[next] < remaining {
                remaining -= self.tree[next];
                pos = next;
            }
            step >>= 1;
        }
        Some(pos as u32)
    }
}
