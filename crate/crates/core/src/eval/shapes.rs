//! Procedural surface samples for synthetic corpora.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{Point3, PointCloud, RotationMatrix, Vector3};

/// A primitive surface placed by a rotation and a center.
#[derive(Debug, Clone, Copy)]
enum Primitive {
    /// Half extents.
    Box(Vector3),
    /// Semi-axes.
    Ellipsoid(Vector3),
    /// Radius and half height along the local z axis, with caps.
    Cylinder(f64, f64),
}

#[derive(Debug, Clone, Copy)]
struct Part {
    shape: Primitive,
    rotation: RotationMatrix,
    center: Vector3,
}

impl Part {
    fn new(shape: Primitive, rotation: RotationMatrix, center: Vector3) -> Self {
        Self { shape, rotation, center }
    }

    fn area(&self) -> f64 {
        match self.shape {
            Primitive::Box(h) => 8.0 * (h.x * h.y + h.y * h.z + h.x * h.z),
            Primitive::Ellipsoid(a) => {
                // Knud Thomsen's approximation
                let p = 1.6075;
                let s = ((a.x * a.y).powf(p) + (a.y * a.z).powf(p) + (a.x * a.z).powf(p)) / 3.0;
                2.0 * TAU * s.powf(1.0 / p)
            }
            Primitive::Cylinder(r, h) => TAU * r * 2.0 * h + 2.0 * std::f64::consts::PI * r * r,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Point3 {
        let local = match self.shape {
            Primitive::Box(h) => {
                let faces = [h.y * h.z, h.x * h.z, h.x * h.y];
                let pick = rng.random::<f64>() * faces.iter().sum::<f64>();
                let axis = if pick < faces[0] {
                    0
                } else if pick < faces[0] + faces[1] {
                    1
                } else {
                    2
                };
                let mut v = Vector3::new(
                    rng.random_range(-h.x..h.x),
                    rng.random_range(-h.y..h.y),
                    rng.random_range(-h.z..h.z),
                );
                v[axis] = if rng.random::<bool>() { h[axis] } else { -h[axis] };
                v
            }
            Primitive::Ellipsoid(a) => {
                let z: f64 = rng.random_range(-1.0..1.0);
                let phi: f64 = rng.random_range(0.0..TAU);
                let r = (1.0 - z * z).sqrt();
                Vector3::new(a.x * r * phi.cos(), a.y * r * phi.sin(), a.z * z)
            }
            Primitive::Cylinder(r, h) => {
                let side = TAU * r * 2.0 * h;
                let cap = std::f64::consts::PI * r * r;
                let phi: f64 = rng.random_range(0.0..TAU);
                if rng.random::<f64>() * (side + 2.0 * cap) < side {
                    Vector3::new(r * phi.cos(), r * phi.sin(), rng.random_range(-h..h))
                } else {
                    let rho = r * rng.random::<f64>().sqrt();
                    let z = if rng.random::<bool>() { h } else { -h };
                    Vector3::new(rho * phi.cos(), rho * phi.sin(), z)
                }
            }
        };
        Point3::from(&self.rotation * local + self.center)
    }
}

fn sample_parts(parts: &[Part], n: usize, rng: &mut ChaCha8Rng) -> PointCloud {
    let areas: Vec<f64> = parts.iter().map(Part::area).collect();
    let total: f64 = areas.iter().sum();
    let points = (0..n)
        .map(|_| {
            let mut pick = rng.random::<f64>() * total;
            let mut idx = parts.len() - 1;
            for (i, a) in areas.iter().enumerate() {
                if pick < *a {
                    idx = i;
                    break;
                }
                pick -= a;
            }
            parts[idx].sample(rng)
        })
        .collect();
    PointCloud::new(points).expect("finite samples")
}

fn jitter(rng: &mut ChaCha8Rng, base: f64, spread: f64) -> f64 {
    base * (1.0 + rng.random_range(-spread..spread))
}

/// A composite of a box body, an ellipsoid, a cylinder arm and a small box,
/// placed so that the shape has no rotational symmetry.
pub fn asymmetric_shape(seed: u64, n: usize) -> PointCloud {
    asymmetric_shape_sampled(seed, seed, n)
}

/// [`asymmetric_shape`] with the surface sampled by a separate seed, giving
/// independent scans of one shape.
pub fn asymmetric_shape_sampled(shape_seed: u64, sample_seed: u64, n: usize) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(shape_seed);
    let tilt = |rng: &mut ChaCha8Rng| {
        RotationMatrix::from_euler_zyx(
            rng.random_range(-0.3..0.3),
            rng.random_range(-0.3..0.3),
            rng.random_range(-0.3..0.3),
        )
    };
    let body = Vector3::new(jitter(&mut rng, 1.0, 0.15), jitter(&mut rng, 0.55, 0.15), jitter(&mut rng, 0.3, 0.15));
    let parts = [
        Part::new(Primitive::Box(body), RotationMatrix::identity(), Vector3::zeros()),
        Part::new(
            Primitive::Ellipsoid(Vector3::new(jitter(&mut rng, 0.45, 0.2), jitter(&mut rng, 0.3, 0.2), jitter(&mut rng, 0.35, 0.2))),
            tilt(&mut rng),
            Vector3::new(0.7 * body.x, 0.3 * body.y, body.z + 0.2),
        ),
        Part::new(
            Primitive::Cylinder(jitter(&mut rng, 0.12, 0.2), jitter(&mut rng, 0.5, 0.2)),
            RotationMatrix::about_x(std::f64::consts::FRAC_PI_2) * tilt(&mut rng),
            Vector3::new(-0.5 * body.x, -body.y - 0.35, 0.0),
        ),
        Part::new(
            Primitive::Box(Vector3::new(jitter(&mut rng, 0.2, 0.2), jitter(&mut rng, 0.15, 0.2), jitter(&mut rng, 0.25, 0.2))),
            tilt(&mut rng),
            Vector3::new(-body.x - 0.1, 0.4 * body.y, -0.5 * body.z),
        ),
    ];
    sample_parts(&parts, n, &mut sampler(shape_seed, sample_seed, rng))
}

fn sampler(shape_seed: u64, sample_seed: u64, geometry_rng: ChaCha8Rng) -> ChaCha8Rng {
    if shape_seed == sample_seed {
        geometry_rng
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
        rng.set_stream(1);
        rng
    }
}

/// A prolate spheroid about z with three blocky fins inside. The outline is
/// a surface of revolution with no sharp edges, so only the fins fix the
/// orientation.
pub fn symmetric_contour_shape(seed: u64, n: usize) -> PointCloud {
    symmetric_contour_shape_sampled(seed, seed, n)
}

/// [`symmetric_contour_shape`] with the surface sampled by a separate seed.
pub fn symmetric_contour_shape_sampled(shape_seed: u64, sample_seed: u64, n: usize) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(shape_seed);
    let radius = 0.5;
    let half = jitter(&mut rng, 0.8, 0.1);
    let mut parts = vec![Part::new(
        Primitive::Ellipsoid(Vector3::new(radius, radius, half)),
        RotationMatrix::identity(),
        Vector3::zeros(),
    )];
    let fins: [(f64, f64, f64); 3] = [
        (0.0, 0.14, 0.35),
        (rng.random_range(1.7..2.3), 0.10, -0.1),
        (rng.random_range(3.7..4.4), 0.12, -0.45),
    ];
    for (angle, len, height) in fins {
        let center = Vector3::new(angle.cos(), angle.sin(), 0.0) * 0.18 + Vector3::new(0.0, 0.0, height * half);
        parts.push(Part::new(
            Primitive::Box(Vector3::new(len, 0.03, 0.15)),
            RotationMatrix::about_z(angle),
            center,
        ));
    }
    sample_parts(&parts, n, &mut sampler(shape_seed, sample_seed, rng))
}
