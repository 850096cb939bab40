//! Binary sum tree over a fixed number of leaves.

/// Array-backed sum tree: node `i` has children `2i+1` and `2i+2`. Leaves are
/// padded to a power of two so that they sit in index order. Internal nodes are always recomputed from their
/// children, so each equals the float sum of its two children exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SumTree {
    capacity: usize,
    width: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "sum tree capacity must be positive");
        let width = capacity.next_power_of_two();
        Self { capacity, width, nodes: vec![0.0; 2 * width - 1] }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    #[inline]
    fn leaf_node(&self, leaf: usize) -> usize {
        leaf + self.width - 1
    }

    pub fn total(&self) -> f64 {
        self.nodes[0]
    }

    pub fn get(&self, leaf: usize) -> f64 {
        self.nodes[self.leaf_node(leaf)]
    }

    pub fn leaves(&self) -> &[f64] {
        &self.nodes[self.width - 1..self.width - 1 + self.capacity]
    }

    /// Sets a leaf mass and restores the sums on its path to the root.
    pub fn set(&mut self, leaf: usize, mass: f64) {
        assert!(leaf < self.capacity, "leaf {leaf} out of range");
        assert!(mass >= 0.0 && mass.is_finite(), "leaf mass must be finite and non-negative, got {mass}");
        let mut i = self.leaf_node(leaf);
        self.nodes[i] = mass;
        while i > 0 {
            i = (i - 1) / 2;
            self.nodes[i] = self.nodes[2 * i + 1] + self.nodes[2 * i + 2];
        }
    }

    /// Recomputes every internal node bottom-up.
    pub fn rebuild(&mut self) {
        for i in (0..self.width - 1).rev() {
            self.nodes[i] = self.nodes[2 * i + 1] + self.nodes[2 * i + 2];
        }
    }

    /// Leaf whose cumulative mass interval contains `value`.
    ///
    /// Zero-mass subtrees are never entered, so the returned leaf always has
    /// positive mass when the total is positive.
    pub fn find(&self, value: f64) -> usize {
        let mut i = 0;
        let mut v = value.max(0.0);
        while i < self.width - 1 {
            let (l, r) = (2 * i + 1, 2 * i + 2);
            let (ls, rs) = (self.nodes[l], self.nodes[r]);
            if ls > 0.0 && (v < ls || rs <= 0.0) {
                i = l;
            } else {
                v = (v - ls).max(0.0);
                i = r;
            }
        }
        (i + 1 - self.width).min(self.capacity - 1)
    }

    /// Largest relative discrepancy between a node and the sum of its children.
    pub fn max_node_error(&self) -> f64 {
        (0..self.width - 1)
            .map(|i| {
                let s = self.nodes[2 * i + 1] + self.nodes[2 * i + 2];
                let scale = s.abs().max(self.nodes[i].abs()).max(f64::MIN_POSITIVE);
                (self.nodes[i] - s).abs() / scale
            })
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn find_walks_cumulative_mass() {
        let mut t = SumTree::new(5);
        for (i, m) in [1.0, 0.0, 2.0, 3.0, 4.0].into_iter().enumerate() {
            t.set(i, m);
        }
        assert_eq!(t.total(), 10.0);
        assert_eq!(t.find(0.0), 0);
        assert_eq!(t.find(0.999), 0);
        assert_eq!(t.find(1.0), 2);
        assert_eq!(t.find(2.999), 2);
        assert_eq!(t.find(3.0), 3);
        assert_eq!(t.find(6.0), 4);
        assert_eq!(t.find(10.0), 4);
        assert_eq!(t.find(1e9), 4);
    }

    #[test]
    fn zero_leaves_are_never_found() {
        let mut t = SumTree::new(8);
        t.set(3, 0.5);
        for k in 0..100 {
            assert_eq!(t.find(k as f64 * 0.01), 3);
        }
    }

    #[test]
    fn leaf_update_changes_root_by_delta() {
        let mut t = SumTree::new(7);
        for i in 0..7 {
            t.set(i, 0.25 * (i + 1) as f64);
        }
        let before = t.total();
        t.set(4, 3.0);
        assert_eq!(t.total() - before, 3.0 - 1.25);
    }

    #[test]
    fn rebuild_is_idempotent() {
        let mut t = SumTree::new(6);
        for i in 0..6 {
            t.set(i, 0.1 * (i as f64 + 0.3));
        }
        let snapshot = t.clone();
        t.rebuild();
        assert_eq!(t, snapshot);
        assert_eq!(t.max_node_error(), 0.0);
    }
}
