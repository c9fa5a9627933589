//! Append-friendly Fenwick tree over nonnegative `f64` weights.

#[derive(Debug, Clone, Default)]
pub(crate) struct WeightIndex {
    tree: Vec<f64>,
    weights: Vec<f64>,
}

impl WeightIndex {
    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn push(&mut self, w: f64) {
        let i = self.weights.len();
        self.weights.push(0.0);
        // Node i+1 covers (i+1 - lowbit(i+1), i+1]; rebuild its partial sum.
        let pos = i + 1;
        let low = pos & pos.wrapping_neg();
        let mut acc = 0.0;
        let mut j = pos - 1;
        let stop = pos - low;
        while j > stop {
            acc += self.tree[j - 1];
            j -= j & j.wrapping_neg();
        }
        self.tree.push(acc);
        self.set(i, w);
    }

    pub fn set(&mut self, i: usize, w: f64) {
        let delta = w - self.weights[i];
        if delta == 0.0 {
            return;
        }
        self.weights[i] = w;
        let mut pos = i + 1;
        while pos <= self.tree.len() {
            self.tree[pos - 1] += delta;
            pos += pos & pos.wrapping_neg();
        }
    }

    pub fn total(&self) -> f64 {
        let mut pos = self.tree.len();
        let mut acc = 0.0;
        while pos > 0 {
            acc += self.tree[pos - 1];
            pos -= pos & pos.wrapping_neg();
        }
        acc
    }

    /// Smallest index whose inclusive prefix sum exceeds `target`, restricted to
    /// positive-weight entries. Falls back to a linear scan when rounding lands
    /// on a zero-weight slot or past the end.
    pub fn find(&self, target: f64) -> Option<usize> {
        let n = self.tree.len();
        if n == 0 {
            return None;
        }
        let mut pos = 0usize;
        let mut rem = target;
        let mut step = n.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next - 1] <= rem {
                pos = next;
                rem -= self.tree[next - 1];
            }
            step >>= 1;
        }
        if pos < n && self.weights[pos] > 0.0 {
            return Some(pos);
        }
        self.scan(target)
    }

    fn scan(&self, target: f64) -> Option<usize> {
        let mut acc = 0.0;
        let mut last = None;
        for (i, &w) in self.weights.iter().enumerate() {
            if w > 0.0 {
                acc += w;
                last = Some(i);
                if acc > target {
                    return last;
                }
            }
        }
        last
    }
}
