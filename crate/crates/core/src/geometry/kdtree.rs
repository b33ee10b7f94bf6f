use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{Point3, PointCloud};
use crate::error::{Error, Result};

const LEAF_SIZE: usize = 12;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Static k-d tree over a fixed point set.
///
/// Results are exact and ordered by `(distance, index)`, so equidistant
/// points always resolve toward the lower index.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<[f64; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl KdTree {
    pub fn new(points: &[Point3]) -> Self {
        let points: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::new();
        if !points.is_empty() {
            build(&points, &mut order, 0, points.len(), &mut nodes);
        }
        Self {
            points,
            order,
            nodes,
        }
    }

    pub fn from_cloud(cloud: &PointCloud) -> Self {
        Self::new(cloud.points())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The `k` nearest indices to `query`, nearest first. `exclude` removes one
    /// index from consideration (a query that is itself a member).
    pub fn knn(&self, query: &Point3, k: usize, exclude: Option<usize>) -> Result<Vec<usize>> {
        Ok(self
            .knn_with_distances(query, k, exclude)?
            .into_iter()
            .map(|(i, _)| i)
            .collect())
    }

    /// Like [`KdTree::knn`] but also returns squared distances.
    pub fn knn_with_distances(
        &self,
        query: &Point3,
        k: usize,
        exclude: Option<usize>,
    ) -> Result<Vec<(usize, f64)>> {
        let available = self.len() - usize::from(exclude.is_some_and(|e| e < self.len()));
        if k > available {
            return Err(Error::InsufficientPoints {
                requested: k,
                available,
            });
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        let q = [query.x, query.y, query.z];
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(0, &q, k, exclude, &mut heap);
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort();
        Ok(out.into_iter().map(|c| (c.index, c.dist2)).collect())
    }

    /// Index and squared distance of the nearest point.
    pub fn nearest(&self, query: &Point3) -> Option<(usize, f64)> {
        self.knn_with_distances(query, 1, None)
            .ok()
            .and_then(|v| v.into_iter().next())
    }

    fn search(
        &self,
        node: usize,
        q: &[f64; 3],
        k: usize,
        exclude: Option<usize>,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &index in &self.order[start..end] {
                    if Some(index) == exclude {
                        continue;
                    }
                    let p = &self.points[index];
                    let d = [p[0] - q[0], p[1] - q[1], p[2] - q[2]];
                    let cand = Candidate {
                        dist2: d[0] * d[0] + d[1] * d[1] + d[2] * d[2],
                        index,
                    };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, k, exclude, heap);
                // ties at the worst distance may still be won by a lower index
                if heap.len() < k || diff * diff <= heap.peek().expect("heap is full").dist2 {
                    self.search(far, q, k, exclude, heap);
                }
            }
        }
    }
}

fn build(
    points: &[[f64; 3]],
    order: &mut [usize],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let id = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { start, end });
        return id;
    }
    let slice = &mut order[start..end];
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in slice.iter() {
        for a in 0..3 {
            lo[a] = lo[a].min(points[i][a]);
            hi[a] = hi[a].max(points[i][a]);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap_or(0);
    if hi[axis] - lo[axis] == 0.0 {
        // all coincident
        nodes.push(Node::Leaf { start, end });
        return id;
    }
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
    let value = points[slice[mid]][axis];
    nodes.push(Node::Leaf { start, end });
    let left = build(points, order, start, start + mid, nodes);
    let right = build(points, order, start + mid, end, nodes);
    nodes[id] = Node::Split {
        axis,
        value,
        left,
        right,
    };
    id
}

/// The `k` nearest cloud indices to `query`, nearest first, ties toward the
/// lower index. If `query` coincides exactly with a cloud member, the
/// lowest-indexed such member is excluded from its own neighborhood.
pub fn knn(cloud: &PointCloud, query: &Point3, k: usize) -> Result<Vec<usize>> {
    let member = cloud.points().iter().position(|p| p == query);
    KdTree::from_cloud(cloud).knn(query, k, member)
}
