use std::cmp::Ordering;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    /// Lower point index.
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

impl Edge {
    fn new(i: usize, j: usize, weight: f64) -> Self {
        Edge {
            a: i.min(j),
            b: i.max(j),
            weight,
        }
    }

    /// Total order used for every tie: weight, then lower index, then higher index.
    pub fn key_cmp(&self, other: &Edge) -> Ordering {
        self.weight
            .total_cmp(&other.weight)
            .then(self.a.cmp(&other.a))
            .then(self.b.cmp(&other.b))
    }
}

#[inline]
pub fn euclidean(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

fn check_points<P: AsRef<[f64]>>(points: &[P]) -> Result<()> {
    if points.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 points, got {}",
            points.len()
        )));
    }
    let dim = points[0].as_ref().len();
    for (i, p) in points.iter().enumerate() {
        let p = p.as_ref();
        if p.len() != dim {
            return Err(Error::InvalidInput(format!("point {i} has dimension {}, expected {dim}", p.len())));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("point {i} has a non-finite coordinate")));
        }
    }
    Ok(())
}

/// Distance from each point to its `k`-th nearest other point, with `k` capped at `N - 1`.
pub fn core_distances<P: AsRef<[f64]>>(points: &[P], min_samples: usize) -> Result<Vec<f64>> {
    check_points(points)?;
    if min_samples == 0 {
        return Err(Error::InvalidInput("min_samples must be at least 1".into()));
    }
    let n = points.len();
    let k = min_samples.min(n - 1);
    let mut buf = Vec::with_capacity(n - 1);
    Ok((0..n)
        .map(|i| {
            buf.clear();
            let pi = points[i].as_ref();
            buf.extend(
                (0..n)
                    .filter(|&j| j != i)
                    .map(|j| euclidean(pi, points[j].as_ref())),
            );
            *buf.select_nth_unstable_by(k - 1, f64::total_cmp).1
        })
        .collect())
}

/// Minimum spanning tree under mutual reachability distance, edges sorted by [`Edge::key_cmp`].
///
/// Dense Prim in O(N^2) time and O(N) memory. Ties are broken by the edge key,
/// which makes the tree unique.
pub fn build_mutual_reachability_mst<P: AsRef<[f64]>>(points: &[P], min_samples: usize) -> Result<Vec<Edge>> {
    let core = core_distances(points, min_samples)?;
    let n = points.len();
    let mut in_tree = vec![false; n];
    let mut best: Vec<Option<Edge>> = vec![None; n];
    let mut edges = Vec::with_capacity(n - 1);
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let pc = points[current].as_ref();
        let mut next: Option<(usize, Edge)> = None;
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            let d = euclidean(pc, points[j].as_ref())
                .max(core[current])
                .max(core[j]);
            let cand = Edge::new(current, j, d);
            if best[j].is_none_or(|e| cand.key_cmp(&e).is_lt()) {
                best[j] = Some(cand);
            }
            let e = best[j].unwrap();
            if next.is_none_or(|(_, ne)| e.key_cmp(&ne).is_lt()) {
                next = Some((j, e));
            }
        }
        let (j, e) = next.expect("graph is complete");
        in_tree[j] = true;
        edges.push(e);
        current = j;
    }
    edges.sort_by(Edge::key_cmp);
    Ok(edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_points() {
        let pts = [[0.0, 0.0], [3.0, 4.0]];
        let e = build_mutual_reachability_mst(&pts, 5).unwrap();
        assert_eq!(e, [Edge { a: 0, b: 1, weight: 5.0 }]);
        assert!(build_mutual_reachability_mst(&pts[..1], 1).is_err());
        assert!(build_mutual_reachability_mst(&[[0.0], [f64::NAN]], 1).is_err());
    }

    #[test]
    fn duplicates_give_zero_edges() {
        let pts = [[1.0, 1.0], [1.0, 1.0], [5.0, 1.0], [5.0, 1.0]];
        let e = build_mutual_reachability_mst(&pts, 1).unwrap();
        assert_eq!(e.len(), 3);
        assert_eq!(e[0], Edge { a: 0, b: 1, weight: 0.0 });
        assert_eq!(e[1], Edge { a: 2, b: 3, weight: 0.0 });
        assert_eq!(e[2].weight, 4.0);
    }

    #[test]
    fn core_distance_excludes_self() {
        let pts = [[0.0], [1.0], [3.0], [7.0]];
        assert_eq!(core_distances(&pts, 1).unwrap(), [1.0, 1.0, 2.0, 4.0]);
        assert_eq!(core_distances(&pts, 2).unwrap(), [3.0, 2.0, 3.0, 6.0]);
        // capped at N - 1
        assert_eq!(core_distances(&pts, 10).unwrap(), [7.0, 6.0, 4.0, 7.0]);
    }

    fn find(p: &mut [usize], x: usize) -> usize {
        if p[x] != x {
            let r = find(p, p[x]);
            p[x] = r;
        }
        p[x]
    }

    #[test]
    fn six_point_brute_force() {
        let pts = [
            [0.0, 0.0],
            [1.0, 0.2],
            [2.1, 0.1],
            [0.3, 1.7],
            [4.0, 4.0],
            [3.2, 2.9],
        ];
        for ms in 1..=3 {
            let core = core_distances(&pts, ms).unwrap();
            let mut all = Vec::new();
            for i in 0..6 {
                for j in i + 1..6 {
                    all.push((i, j, euclidean(&pts[i], &pts[j]).max(core[i]).max(core[j])));
                }
            }
            // exhaustive minimum over all 5-edge subsets that span the graph
            let mut best = f64::INFINITY;
            for mask in 0u32..(1 << all.len()) {
                if mask.count_ones() != 5 {
                    continue;
                }
                let mut p: Vec<usize> = (0..6).collect();
                let mut w = 0.0;
                let mut ok = true;
                for (k, &(i, j, d)) in all.iter().enumerate() {
                    if mask & (1 << k) != 0 {
                        let (ri, rj) = (find(&mut p, i), find(&mut p, j));
                        if ri == rj {
                            ok = false;
                            break;
                        }
                        p[ri] = rj;
                        w += d;
                    }
                }
                if ok && w < best {
                    best = w;
                }
            }
            let mst = build_mutual_reachability_mst(&pts, ms).unwrap();
            let total: f64 = mst.iter().map(|e| e.weight).sum();
            assert!((total - best).abs() < 1e-12, "min_samples {ms}: {total} vs {best}");
        }
    }
}
