//! Least-squares regression trees shared by boosting and forests.

use rand::seq::index::sample;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Number of features considered per split; `None` means all.
    pub mtry: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { leaf: usize },
}

/// A binary tree with axis-aligned splits `x[feature] <= threshold` going
/// left. Leaves are numbered densely and carry one value each.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
    leaf_values: Vec<f64>,
}

impl Tree {
    /// Grows a tree on `rows` (indices into `x`, duplicates allowed) that
    /// greedily minimizes the squared error of `target`. Leaf values are the
    /// mean target in each leaf. Returns the tree and, per leaf, the rows
    /// that landed there.
    pub fn grow<R: Rng + ?Sized>(
        x: &[Vec<f64>],
        target: &[f64],
        rows: &[usize],
        params: &TreeParams,
        rng: &mut R,
    ) -> (Tree, Vec<Vec<usize>>) {
        Self::grow_presorted(x, target, rows, &Presorted::new(x), params, rng)
    }

    /// As [`Tree::grow`], reusing feature orders computed once for `x`.
    pub fn grow_presorted<R: Rng + ?Sized>(
        x: &[Vec<f64>],
        target: &[f64],
        rows: &[usize],
        presorted: &Presorted,
        params: &TreeParams,
        rng: &mut R,
    ) -> (Tree, Vec<Vec<usize>>) {
        let mut builder = Builder {
            x,
            target,
            params,
            presorted,
            counts: vec![0; x.len()],
            nodes: Vec::new(),
            leaves: Vec::new(),
            values: Vec::new(),
        };
        builder.build(rows.to_vec(), 0, rng);
        (Tree { nodes: builder.nodes, leaf_values: builder.values }, builder.leaves)
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_values.len()
    }

    pub fn leaf_of(&self, row: &[f64]) -> usize {
        let mut node = 0;
        loop {
            match self.nodes[node] {
                Node::Leaf { leaf } => return leaf,
                Node::Split { feature, threshold, left, right } => {
                    node = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.leaf_values[self.leaf_of(row)]
    }

    pub fn set_leaf_value(&mut self, leaf: usize, value: f64) {
        self.leaf_values[leaf] = value;
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Row indices of a feature matrix sorted by each feature.
#[derive(Debug, Clone)]
pub struct Presorted {
    orders: Vec<Vec<usize>>,
}

impl Presorted {
    pub fn new(x: &[Vec<f64>]) -> Self {
        let p = x.first().map_or(0, Vec::len);
        let orders = (0..p)
            .map(|f| {
                let mut o: Vec<usize> = (0..x.len()).collect();
                o.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
                o
            })
            .collect();
        Self { orders }
    }
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    target: &'a [f64],
    params: &'a TreeParams,
    presorted: &'a Presorted,
    /// Scratch multiplicities of the node's rows.
    counts: Vec<u32>,
    nodes: Vec<Node>,
    leaves: Vec<Vec<usize>>,
    values: Vec<f64>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Builder<'_> {
    fn build<R: Rng + ?Sized>(&mut self, rows: Vec<usize>, depth: usize, rng: &mut R) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { leaf: usize::MAX });
        let can_split = self.params.max_depth.is_none_or(|d| depth < d) && rows.len() >= 2 * self.params.min_leaf.max(1);
        let split = if can_split { self.best_split(&rows, rng) } else { None };
        match split {
            Some(s) => {
                let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| self.x[i][s.feature] <= s.threshold);
                let left = self.build(l, depth + 1, rng);
                let right = self.build(r, depth + 1, rng);
                self.nodes[id] = Node::Split { feature: s.feature, threshold: s.threshold, left, right };
            }
            None => {
                let leaf = self.leaves.len();
                let mean = rows.iter().map(|&i| self.target[i]).sum::<f64>() / rows.len().max(1) as f64;
                self.values.push(mean);
                self.leaves.push(rows);
                self.nodes[id] = Node::Leaf { leaf };
            }
        }
        id
    }

    fn best_split<R: Rng + ?Sized>(&mut self, rows: &[usize], rng: &mut R) -> Option<BestSplit> {
        let n = rows.len();
        let p = self.x.first().map_or(0, Vec::len);
        if p == 0 {
            return None;
        }
        let total: f64 = rows.iter().map(|&i| self.target[i]).sum();
        let total_sq: f64 = rows.iter().map(|&i| self.target[i] * self.target[i]).sum();
        let sse = total_sq - total * total / n as f64;
        if sse <= 1e-12 * total_sq.max(1e-300) {
            return None;
        }
        let features: Vec<usize> = match self.params.mtry {
            Some(m) if m < p => {
                let mut f = sample(rng, p, m.max(1)).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..p).collect(),
        };
        let min_leaf = self.params.min_leaf.max(1);
        // Small nodes sort their own rows; large ones scan the global orders.
        let scan = n * 8 >= self.x.len();
        let mut order: Vec<usize> = Vec::new();
        if scan {
            for &i in rows {
                self.counts[i] += 1;
            }
        } else {
            order = rows.to_vec();
        }
        let mut best: Option<BestSplit> = None;
        for &f in &features {
            if scan {
                order.clear();
                for &i in &self.presorted.orders[f] {
                    for _ in 0..self.counts[i] {
                        order.push(i);
                    }
                }
            } else {
                order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]));
            }
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                left_sum += self.target[order[k]];
                let nl = k + 1;
                let nr = n - nl;
                if nl < min_leaf {
                    continue;
                }
                if nr < min_leaf {
                    break;
                }
                let a = self.x[order[k]][f];
                let b = self.x[order[k + 1]][f];
                if a == b {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / nl as f64 + right_sum * right_sum / nr as f64 - total * total / n as f64;
                if gain > 1e-12 * sse && best.as_ref().is_none_or(|bs| gain > bs.gain) {
                    best = Some(BestSplit { feature: f, threshold: a + (b - a) / 2.0, gain });
                }
            }
        }
        if scan {
            for &i in rows {
                self.counts[i] = 0;
            }
        }
        best
    }
}
