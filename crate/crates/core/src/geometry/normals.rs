use std::collections::VecDeque;

use rayon::prelude::*;

use super::pca::{covariance, sorted_eigen};
use super::{centroid, KdTree, Point3, PointCloud, Vector3};
use crate::error::{Error, Result};

/// Per-point normals from the PCA of each point together with its `k`
/// nearest neighbors, oriented consistently by [`orient_normals`].
pub fn estimate_normals(cloud: &PointCloud, k: usize) -> Result<PointCloud> {
    let n = cloud.len();
    if n <= k {
        return Err(Error::InsufficientPoints {
            requested: k,
            available: n.saturating_sub(1),
        });
    }
    let tree = KdTree::from_cloud(cloud);
    let pts = cloud.points();
    let neighborhoods: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| tree.knn(&pts[i], k, Some(i)))
        .collect::<Result<_>>()?;
    let mut normals: Vec<Vector3> = neighborhoods
        .par_iter()
        .enumerate()
        .map(|(i, nbrs)| {
            let mut local: Vec<Point3> = Vec::with_capacity(k + 1);
            local.push(pts[i]);
            local.extend(nbrs.iter().map(|&j| pts[j]));
            let mean = centroid(&local);
            let (_, vecs) = sorted_eigen(covariance(&local, &mean));
            let normal = vecs[2];
            if normal.norm() > 0.0 {
                normal.normalize()
            } else {
                Vector3::z()
            }
        })
        .collect();
    orient_normals(pts, &mut normals, &neighborhoods);
    let mut out = cloud.clone();
    out.set_normals(normals)?;
    Ok(out)
}

/// Flips normals to a consistent orientation by breadth-first propagation
/// over the symmetrized neighbor graph.
///
/// Each connected component starts at its highest-z point (lowest index on
/// ties), whose normal is turned toward +z. Every other normal is turned to
/// agree with its BFS parent. Returns the parent of each point (`None` for
/// component roots).
pub fn orient_normals(
    points: &[Point3],
    normals: &mut [Vector3],
    neighborhoods: &[Vec<usize>],
) -> Vec<Option<usize>> {
    let n = points.len();
    let mut adjacency: Vec<Vec<usize>> = neighborhoods.to_vec();
    for (i, nbrs) in neighborhoods.iter().enumerate() {
        for &j in nbrs {
            adjacency[j].push(i);
        }
    }
    for adj in &mut adjacency {
        adj.sort_unstable();
        adj.dedup();
    }

    let mut by_height: Vec<usize> = (0..n).collect();
    by_height.sort_by(|&a, &b| points[b].z.total_cmp(&points[a].z).then(a.cmp(&b)));

    let mut visited = vec![false; n];
    let mut parent = vec![None; n];
    let mut queue = VecDeque::new();
    for &root in &by_height {
        if visited[root] {
            continue;
        }
        if normals[root].z < 0.0 {
            normals[root] = -normals[root];
        }
        visited[root] = true;
        queue.push_back(root);
        while let Some(u) = queue.pop_front() {
            for &v in &adjacency[u] {
                if visited[v] {
                    continue;
                }
                if normals[v].dot(&normals[u]) < 0.0 {
                    normals[v] = -normals[v];
                }
                visited[v] = true;
                parent[v] = Some(u);
                queue.push_back(v);
            }
        }
    }
    parent
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn planar_normals_point_up() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<Point3> = (0..400)
            .map(|_| Point3::new(rng.random(), rng.random(), 0.0))
            .collect();
        let cloud = estimate_normals(&PointCloud::new(pts).unwrap(), 12).unwrap();
        for n in cloud.normals().unwrap() {
            assert!((n.z - 1.0).abs() < 1e-9, "{n:?}");
        }
    }

    fn radial_agreement(pts: Vec<Point3>) -> Vec<f64> {
        let cloud = estimate_normals(&PointCloud::new(pts).unwrap(), 12).unwrap();
        cloud
            .points()
            .iter()
            .zip(cloud.normals().unwrap())
            .map(|(p, n)| n.dot(&p.coords.normalize()))
            .collect()
    }

    #[test]
    fn sphere_normals_are_radial() {
        let limit = 5f64.to_radians().cos();
        // evenly spread samples: every normal within 5 degrees, pointing out
        let n = 2000;
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let even: Vec<Point3> = (0..n)
            .map(|i| {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                let r = (1.0 - z * z).sqrt();
                let phi = golden * i as f64;
                Point3::new(r * phi.cos(), r * phi.sin(), z)
            })
            .collect();
        assert!(radial_agreement(even).iter().all(|&d| d > limit));

        // random samples: clumping tilts a few neighborhoods slightly past it
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let random: Vec<Point3> = (0..n)
            .map(|_| {
                let z: f64 = rng.random_range(-1.0..1.0);
                let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let r = (1.0 - z * z).sqrt();
                Point3::new(r * phi.cos(), r * phi.sin(), z)
            })
            .collect();
        let dots = radial_agreement(random);
        assert!(dots.iter().all(|&d| d > 10f64.to_radians().cos()));
        assert!(dots.iter().filter(|&&d| d > limit).count() as f64 >= 0.99 * n as f64);
    }

    #[test]
    fn propagation_agrees_along_tree_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Point3> = (0..500)
            .map(|_| {
                let x: f64 = rng.random_range(-1.0..1.0);
                let y: f64 = rng.random_range(-1.0..1.0);
                Point3::new(x, y, 0.3 * (2.0 * x).sin() * y)
            })
            .collect();
        let tree = KdTree::new(&pts);
        let nbrs: Vec<Vec<usize>> = (0..pts.len())
            .map(|i| tree.knn(&pts[i], 8, Some(i)).unwrap())
            .collect();
        let mut normals: Vec<Vector3> = (0..pts.len())
            .map(|i| {
                let s = if i % 3 == 0 { -1.0 } else { 1.0 };
                Vector3::new(0.05 * rng.random::<f64>(), 0.0, s)
            })
            .collect();
        let parent = orient_normals(&pts, &mut normals, &nbrs);
        let roots = parent.iter().filter(|p| p.is_none()).count();
        assert_eq!(roots, 1);
        for (v, p) in parent.iter().enumerate() {
            if let Some(u) = p {
                assert!(normals[v].dot(&normals[*u]) >= 0.0);
            }
        }
        // a second pass flips nothing
        let before = normals.clone();
        orient_normals(&pts, &mut normals, &nbrs);
        assert_eq!(before, normals);
    }
}
