//! Slow reference implementations used only by unit tests. None of these
//! share code with the production paths they check.

use crate::geometry::Point3;

pub fn brute_knn(points: &[Point3], q: &Point3, k: usize, exclude: Option<usize>) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != exclude)
        .map(|(i, p)| ((p - q).norm_squared(), i))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|(_, i)| i).collect()
}

/// Cyclic Jacobi eigenvalue iteration for a symmetric 3×3 matrix.
/// Returns eigenvalues (descending) and matching column eigenvectors.
pub fn jacobi_eigen(m: [[f64; 3]; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let mut a = m;
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for _ in 0..100 {
        let off = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
        if off < 1e-30 {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if a[p][q].abs() < 1e-300 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let mut b = a;
            for r in 0..3 {
                b[r][p] = c * a[r][p] - s * a[r][q];
                b[r][q] = s * a[r][p] + c * a[r][q];
            }
            let mut d = b;
            for col in 0..3 {
                d[p][col] = c * b[p][col] - s * b[q][col];
                d[q][col] = s * b[p][col] + c * b[q][col];
            }
            a = d;
            for row in v.iter_mut() {
                let (vp, vq) = (row[p], row[q]);
                row[p] = c * vp - s * vq;
                row[q] = s * vp + c * vq;
            }
        }
    }
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]));
    let vals = [a[idx[0]][idx[0]], a[idx[1]][idx[1]], a[idx[2]][idx[2]]];
    let mut vecs = [[0.0; 3]; 3];
    for (c, &i) in idx.iter().enumerate() {
        for r in 0..3 {
            vecs[r][c] = v[r][i];
        }
    }
    (vals, vecs)
}

pub fn covariance(points: &[Point3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let n = points.len() as f64;
    let mut mean = [0.0; 3];
    for p in points {
        for a in 0..3 {
            mean[a] += p[a] / n;
        }
    }
    let mut cov = [[0.0; 3]; 3];
    for p in points {
        for r in 0..3 {
            for c in 0..3 {
                cov[r][c] += (p[r] - mean[r]) * (p[c] - mean[c]) / n;
            }
        }
    }
    (mean, cov)
}

/// Orthogonal distance from `p` to the total-least-squares plane of `nbrs`.
pub fn plane_fit_distance(p: &Point3, nbrs: &[Point3]) -> f64 {
    let (mean, cov) = covariance(nbrs);
    let (_, vecs) = jacobi_eigen(cov);
    let n = [vecs[0][2], vecs[1][2], vecs[2][2]];
    ((p[0] - mean[0]) * n[0] + (p[1] - mean[1]) * n[1] + (p[2] - mean[2]) * n[2]).abs()
}

/// Outliers by the mutual-neighbor rule, computed with an O(n²) scan.
pub fn brute_outliers(points: &[Point3], k: usize) -> Vec<usize> {
    let n = points.len();
    let d2 = |i: usize, j: usize| (points[i] - points[j]).norm_squared();
    let sorted: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut d: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| d2(i, j)).collect();
            d.sort_by(f64::total_cmp);
            d
        })
        .collect();
    let reach = |i: usize| sorted[i][k - 1];
    let overflow = |i: usize| sorted[i].len() > k && sorted[i][k] == reach(i);
    let neighbors = |i: usize| {
        (0..n).filter(move |&j| j != i && (d2(i, j) < reach(i) || (!overflow(i) && d2(i, j) == reach(i))))
    };
    (0..n)
        .filter(|&i| neighbors(i).any(|j| d2(i, j) > reach(j)))
        .collect()
}
