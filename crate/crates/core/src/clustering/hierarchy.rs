//! Single-linkage dendrogram, condensed cluster tree and excess-of-mass selection.

use super::mst::Edge;
use crate::error::{Error, Result};

/// Merge `i` creates dendrogram node `N + i`; nodes below `N` are points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub distance: f64,
    pub size: usize,
}

struct UnionFind {
    parent: Vec<usize>,
    /// Dendrogram node currently representing each root.
    node: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            node: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }
}

/// Merges in order of [`Edge::key_cmp`]; `edges` must span `n` points.
pub fn single_linkage(n: usize, edges: &[Edge]) -> Result<Vec<Merge>> {
    if n < 2 || edges.len() != n - 1 {
        return Err(Error::InvalidInput(format!(
            "spanning tree over {n} points needs {} edges, got {}",
            n.saturating_sub(1),
            edges.len()
        )));
    }
    let mut sorted = edges.to_vec();
    sorted.sort_by(Edge::key_cmp);
    let mut uf = UnionFind::new(n);
    let mut sizes = vec![1usize; 2 * n - 1];
    let mut merges = Vec::with_capacity(n - 1);
    for e in sorted {
        if e.a >= n || e.b >= n {
            return Err(Error::InvalidInput(format!("edge ({}, {}) outside {n} points", e.a, e.b)));
        }
        let (ra, rb) = (uf.find(e.a), uf.find(e.b));
        if ra == rb {
            return Err(Error::InvalidInput("edge list contains a cycle".into()));
        }
        let (left, right) = (uf.node[ra], uf.node[rb]);
        let id = n + merges.len();
        let size = sizes[left] + sizes[right];
        sizes[id] = size;
        merges.push(Merge {
            left,
            right,
            distance: e.weight,
            size,
        });
        uf.parent[ra] = rb;
        uf.node[rb] = id;
    }
    Ok(merges)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Member {
    Point(usize),
    Cluster(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CondensedRow {
    pub parent: usize,
    pub child: Member,
    /// Density level (inverse distance) at which the child leaves the parent.
    pub lambda: f64,
    pub size: usize,
}

/// Condensed tree; cluster 0 is the root and children carry larger ids than parents.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedTree {
    pub rows: Vec<CondensedRow>,
    pub parent: Vec<Option<usize>>,
    pub birth_lambda: Vec<f64>,
    pub stability: Vec<f64>,
    pub selected: Vec<bool>,
}

impl CondensedTree {
    pub fn n_clusters(&self) -> usize {
        self.parent.len()
    }

    pub fn children(&self, cluster: usize) -> Vec<usize> {
        (0..self.n_clusters())
            .filter(|&c| self.parent[c] == Some(cluster))
            .collect()
    }
}

#[inline]
fn lambda(distance: f64) -> f64 {
    1.0 / distance.max(1e-12)
}

fn leaves(n: usize, merges: &[Merge], node: usize, out: &mut Vec<usize>) {
    let mut stack = vec![node];
    while let Some(x) = stack.pop() {
        if x < n {
            out.push(x);
        } else {
            let m = merges[x - n];
            stack.push(m.right);
            stack.push(m.left);
        }
    }
}

/// Condenses the dendrogram and selects clusters by excess of mass.
///
/// Components smaller than `min_cluster_size` fall out of their parent as
/// points. A parent is kept over its descendants only when its stability is
/// strictly larger than theirs combined, so ties go to the deeper clusters.
/// The root itself may be selected.
pub fn condense(n: usize, merges: &[Merge], min_cluster_size: usize) -> CondensedTree {
    let size = |x: usize| if x < n { 1 } else { merges[x - n].size };
    let mut rows = Vec::new();
    let mut parent = vec![None];
    let mut birth_lambda = vec![0.0];
    let mut relabel = vec![usize::MAX; 2 * n - 1];
    let root = 2 * n - 2;
    relabel[root] = 0;
    let mut stack = vec![root];
    let mut pts = Vec::new();
    while let Some(node) = stack.pop() {
        if node < n {
            continue;
        }
        let m = merges[node - n];
        let lam = lambda(m.distance);
        let cluster = relabel[node];
        let (sl, sr) = (size(m.left), size(m.right));
        let big_l = sl >= min_cluster_size;
        let big_r = sr >= min_cluster_size;
        if big_l && big_r {
            for (child, s) in [(m.left, sl), (m.right, sr)] {
                let id = parent.len();
                parent.push(Some(cluster));
                birth_lambda.push(lam);
                relabel[child] = id;
                rows.push(CondensedRow {
                    parent: cluster,
                    child: Member::Cluster(id),
                    lambda: lam,
                    size: s,
                });
                stack.push(child);
            }
            continue;
        }
        for (child, big) in [(m.left, big_l), (m.right, big_r)] {
            if big {
                relabel[child] = cluster;
                stack.push(child);
            } else {
                pts.clear();
                leaves(n, merges, child, &mut pts);
                for &p in &pts {
                    rows.push(CondensedRow {
                        parent: cluster,
                        child: Member::Point(p),
                        lambda: lam,
                        size: 1,
                    });
                }
            }
        }
    }

    let nc = parent.len();
    let mut stability = vec![0.0; nc];
    for r in &rows {
        stability[r.parent] += (r.lambda - birth_lambda[r.parent]) * r.size as f64;
    }

    let mut children = vec![Vec::new(); nc];
    for c in 1..nc {
        children[parent[c].unwrap()].push(c);
    }
    let mut selected = vec![false; nc];
    let mut best = stability.clone();
    for c in (0..nc).rev() {
        if children[c].is_empty() {
            selected[c] = true;
            continue;
        }
        let below: f64 = children[c].iter().map(|&k| best[k]).sum();
        if stability[c] > below {
            selected[c] = true;
            let mut st = children[c].clone();
            while let Some(k) = st.pop() {
                selected[k] = false;
                st.extend(&children[k]);
            }
        } else {
            best[c] = below;
        }
    }

    CondensedTree {
        rows,
        parent,
        birth_lambda,
        stability,
        selected,
    }
}

/// Point labels: the selected cluster above each point, numbered by the
/// smallest point index they contain; -1 for points outside every selected cluster.
pub fn label_points(n: usize, tree: &CondensedTree) -> Vec<i32> {
    let mut home = vec![0usize; n];
    for r in &tree.rows {
        if let Member::Point(p) = r.child {
            home[p] = r.parent;
        }
    }
    let owner: Vec<Option<usize>> = (0..tree.n_clusters())
        .map(|c| {
            let mut x = Some(c);
            while let Some(k) = x {
                if tree.selected[k] {
                    return Some(k);
                }
                x = tree.parent[k];
            }
            None
        })
        .collect();
    let raw: Vec<Option<usize>> = home.iter().map(|&c| owner[c]).collect();
    let mut first = vec![usize::MAX; tree.n_clusters()];
    for (p, c) in raw.iter().enumerate() {
        if let Some(c) = *c {
            first[c] = first[c].min(p);
        }
    }
    let mut order: Vec<usize> = (0..tree.n_clusters()).filter(|&c| first[c] != usize::MAX).collect();
    order.sort_by_key(|&c| first[c]);
    let mut number = vec![-1i32; tree.n_clusters()];
    for (i, c) in order.into_iter().enumerate() {
        number[c] = i as i32;
    }
    raw.into_iter()
        .map(|c| c.map_or(-1, |c| number[c]))
        .collect()
}
