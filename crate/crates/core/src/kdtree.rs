//! Exact kd-tree for fixed-radius queries over a row-major coordinate buffer.
//!
//! Every comparison goes through [`sq_dist`] against `r * r`, the same test the
//! naive scan uses, so counts agree bit for bit with a linear scan. Box bounds
//! are computed with the same monotone float operations, which keeps pruning
//! and whole-node acceptance exact.

const LEAF_SIZE: usize = 16;

/// Squared Euclidean distance, summed in coordinate order.
#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

#[derive(Debug, Clone)]
struct Node {
    lo: Vec<f64>,
    hi: Vec<f64>,
    start: usize,
    end: usize,
    children: Option<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct KdTree {
    dim: usize,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn build(coords: &[f64], dim: usize) -> Self {
        let n = coords.len() / dim;
        let mut tree = KdTree {
            dim,
            order: (0..n).collect(),
            nodes: Vec::new(),
        };
        if n > 0 {
            tree.build_node(coords, 0, n);
        }
        tree
    }

    fn build_node(&mut self, coords: &[f64], start: usize, end: usize) -> usize {
        let dim = self.dim;
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for &i in &self.order[start..end] {
            let p = &coords[i * dim..(i + 1) * dim];
            for d in 0..dim {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            lo: lo.clone(),
            hi: hi.clone(),
            start,
            end,
            children: None,
        });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let split = (0..dim)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap_or(0);
        if hi[split] - lo[split] <= 0.0 {
            // all points coincide
            return id;
        }
        let mid = start + (end - start) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            coords[a * dim + split]
                .total_cmp(&coords[b * dim + split])
                .then(a.cmp(&b))
        });
        let left = self.build_node(coords, start, mid);
        let right = self.build_node(coords, mid, end);
        self.nodes[id].children = Some((left, right));
        id
    }

    #[allow(clippy::needless_range_loop)]
    fn box_bounds(&self, node: &Node, q: &[f64]) -> (f64, f64) {
        let mut min_acc = 0.0;
        let mut max_acc = 0.0;
        for d in 0..self.dim {
            let a = (q[d] - node.lo[d]).abs();
            let b = (q[d] - node.hi[d]).abs();
            let far = a.max(b);
            let near = if q[d] < node.lo[d] {
                a
            } else if q[d] > node.hi[d] {
                b
            } else {
                0.0
            };
            min_acc += near * near;
            max_acc += far * far;
        }
        (min_acc, max_acc)
    }

    /// Number of points with `sq_dist(p, q) <= r2`.
    pub fn count_within(&self, coords: &[f64], q: &[f64], r2: f64) -> usize {
        if self.nodes.is_empty() {
            return 0;
        }
        let mut count = 0;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            let (near, far) = self.box_bounds(node, q);
            if near > r2 {
                continue;
            }
            if far <= r2 {
                count += node.end - node.start;
                continue;
            }
            match node.children {
                Some((l, r)) => {
                    stack.push(r);
                    stack.push(l);
                }
                None => {
                    count += self.order[node.start..node.end]
                        .iter()
                        .filter(|&&i| sq_dist(&coords[i * self.dim..(i + 1) * self.dim], q) <= r2)
                        .count();
                }
            }
        }
        count
    }

    /// `(index, squared distance)` of every point with `sq_dist <= r2`, sorted by index.
    pub fn within(&self, coords: &[f64], q: &[f64], r2: f64) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        if self.nodes.is_empty() {
            return out;
        }
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            let (near, _) = self.box_bounds(node, q);
            if near > r2 {
                continue;
            }
            match node.children {
                Some((l, r)) => {
                    stack.push(r);
                    stack.push(l);
                }
                None => {
                    for &i in &self.order[node.start..node.end] {
                        let d2 = sq_dist(&coords[i * self.dim..(i + 1) * self.dim], q);
                        if d2 <= r2 {
                            out.push((i, d2));
                        }
                    }
                }
            }
        }
        out.sort_unstable_by_key(|&(i, _)| i);
        out
    }

    /// The `k` smallest squared distances from `q` (ascending). Includes `q`
    /// itself when it is a cloud point.
    pub fn k_nearest_sq(&self, coords: &[f64], q: &[f64], k: usize) -> Vec<f64> {
        let mut best: Vec<f64> = Vec::with_capacity(k + 1);
        if self.nodes.is_empty() || k == 0 {
            return best;
        }
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            let (near, _) = self.box_bounds(node, q);
            if best.len() == k && near > best[k - 1] {
                continue;
            }
            match node.children {
                Some((l, r)) => {
                    stack.push(r);
                    stack.push(l);
                }
                None => {
                    for &i in &self.order[node.start..node.end] {
                        let d2 = sq_dist(&coords[i * self.dim..(i + 1) * self.dim], q);
                        if best.len() < k || d2 < best[k - 1] {
                            let pos = best.partition_point(|&b| b <= d2);
                            best.insert(pos, d2);
                            best.truncate(k);
                        }
                    }
                }
            }
        }
        best
    }
}
