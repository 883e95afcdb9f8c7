//! Synthetic scene generators with analytic normals, plus noise injection.
//!
//! Every generator is deterministic: identical arguments produce bit-identical
//! clouds. Normals come from the surface parameterization, never from
//! neighbor estimation, and curve scenes carry exact curvilinear abscissae so
//! bound checks do not depend on numerical curve fitting.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{apply_small_motion, RigidTransform, SmallMotion};

/// An ordered point cloud in 2D or 3D.
///
/// `normals` (unit vectors), `abscissae` (arc-length parameters of 2D curve
/// scenes, strictly increasing) and `curvature_bound` (max curvature of the
/// scanned surface) are optional and carried through transformations.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    pub dim: usize,
    pub points: Vec<DVector<f64>>,
    pub normals: Option<Vec<DVector<f64>>>,
    pub abscissae: Option<Vec<f64>>,
    pub curvature_bound: Option<f64>,
}

impl PointCloud {
    /// Validating constructor used by generators and deserialization.
    pub fn new(
        dim: usize,
        points: Vec<DVector<f64>>,
        normals: Option<Vec<DVector<f64>>>,
        abscissae: Option<Vec<f64>>,
        curvature_bound: Option<f64>,
    ) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidArgument(format!(
                "dimension must be 2 or 3, got {dim}"
            )));
        }
        if points.is_empty() {
            return Err(Error::InvalidArgument("point list is empty".into()));
        }
        for p in &points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("non-finite point".into()));
            }
        }
        if let Some(ns) = &normals {
            if ns.len() != points.len() {
                return Err(Error::InvalidArgument(
                    "normals length differs from points".into(),
                ));
            }
            for n in ns {
                if n.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: n.len(),
                    });
                }
                if (n.norm() - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidArgument(format!(
                        "normal is not unit length (|n| = {})",
                        n.norm()
                    )));
                }
            }
        }
        if let Some(s) = &abscissae {
            if s.len() != points.len() {
                return Err(Error::InvalidArgument(
                    "abscissae length differs from points".into(),
                ));
            }
            if s.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidArgument(
                    "abscissae must be strictly increasing".into(),
                ));
            }
        }
        if let Some(k) = curvature_bound {
            if !(k >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "curvature bound must be >= 0, got {k}"
                )));
            }
        }
        Ok(Self {
            dim,
            points,
            normals,
            abscissae,
            curvature_bound,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Restriction to the given point indices, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        for &i in indices {
            if i >= self.len() {
                return Err(Error::InvalidArgument(format!(
                    "subset index {i} out of range ({} points)",
                    self.len()
                )));
            }
        }
        Ok(Self {
            dim: self.dim,
            points: indices.iter().map(|&i| self.points[i].clone()).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| indices.iter().map(|&i| ns[i].clone()).collect()),
            abscissae: self
                .abscissae
                .as_ref()
                .map(|s| indices.iter().map(|&i| s[i]).collect()),
            curvature_bound: self.curvature_bound,
        })
    }

    /// Rigidly transformed copy; normals are rotated, abscissae and curvature
    /// are invariant under rigid motion.
    pub fn transformed(&self, t: &RigidTransform) -> Self {
        Self {
            dim: self.dim,
            points: self.points.iter().map(|p| t.apply(p)).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(|n| &t.rotation * n).collect()),
            abscissae: self.abscissae.clone(),
            curvature_bound: self.curvature_bound,
        }
    }

    /// Copy displaced by the first-order motion `p + x_R x p + x_T`.
    /// Normals and abscissae are copied unchanged; intended for source clouds
    /// in cost evaluation.
    pub fn displaced_linear(&self, x: &SmallMotion) -> Self {
        Self {
            dim: self.dim,
            points: self
                .points
                .iter()
                .map(|p| apply_small_motion(x, p))
                .collect(),
            normals: self.normals.clone(),
            abscissae: self.abscissae.clone(),
            curvature_bound: self.curvature_bound,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    IsotropicGaussian,
}

/// Zero-mean isotropic Gaussian position noise with a fixed seed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma: f64,
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoiseModel {
    pub fn isotropic(sigma: f64, seed: u64) -> Self {
        Self {
            sigma,
            kind: NoiseKind::IsotropicGaussian,
            seed,
        }
    }
}

/// Perturb every point by an independent isotropic Gaussian of std `sigma`.
/// Normals and abscissae are copied unchanged. Deterministic for a fixed
/// seed: the stream is a `ChaCha8Rng` seeded with `noise.seed`, consumed in
/// point order, one draw per coordinate.
pub fn add_noise(cloud: &PointCloud, noise: &NoiseModel) -> PointCloud {
    if noise.sigma == 0.0 {
        return cloud.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let mut out = cloud.clone();
    for p in &mut out.points {
        for c in p.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *c += noise.sigma * z;
        }
    }
    out
}

/// `n` collinear points on the x-axis at spacing `spacing`, normals (0, 1),
/// abscissae `k * spacing`, zero curvature.
pub fn gen_wall_2d(n: usize, spacing: f64) -> Result<PointCloud> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("wall needs n >= 2, got {n}")));
    }
    if !(spacing > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "spacing must be > 0, got {spacing}"
        )));
    }
    let points: Vec<_> = (0..n)
        .map(|k| DVector::from_vec(vec![k as f64 * spacing, 0.0]))
        .collect();
    let normals = vec![DVector::from_vec(vec![0.0, 1.0]); n];
    let abscissae: Vec<_> = (0..n).map(|k| k as f64 * spacing).collect();
    PointCloud::new(2, points, Some(normals), Some(abscissae), Some(0.0))
}

/// `n` points equally spaced on a circular arc of the given radius centered
/// at the origin, spanning `arc_span` radians from angle zero. Normals point
/// toward the center; abscissae are `radius * angle`; the curvature bound is
/// `1 / radius`.
pub fn gen_arc_2d(radius: f64, n: usize, arc_span: f64) -> Result<PointCloud> {
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "radius must be > 0, got {radius}"
        )));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!("arc needs n >= 2, got {n}")));
    }
    if !(arc_span > 0.0 && arc_span <= 2.0 * std::f64::consts::PI) {
        return Err(Error::InvalidArgument(format!(
            "arc span must be in (0, 2*pi], got {arc_span}"
        )));
    }
    let step = arc_span / (n - 1) as f64;
    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    let mut abscissae = Vec::with_capacity(n);
    for k in 0..n {
        let angle = k as f64 * step;
        let (s, c) = angle.sin_cos();
        points.push(DVector::from_vec(vec![radius * c, radius * s]));
        normals.push(DVector::from_vec(vec![-c, -s]));
        abscissae.push(radius * angle);
    }
    PointCloud::new(2, points, Some(normals), Some(abscissae), Some(1.0 / radius))
}

/// Axis positions symmetric about zero spanning `width`: mirrored pairs are
/// exact negations so grid moment sums cancel.
fn symmetric_axis(n: usize, width: f64) -> Vec<f64> {
    let mut v = vec![0.0; n];
    let step = width / (n - 1) as f64;
    for i in 0..n / 2 {
        let a = width / 2.0 - i as f64 * step;
        v[i] = -a;
        v[n - 1 - i] = a;
    }
    v
}

/// Planar wall scanned from distance `depth`: an `n_h` x `n_v` grid
/// `(x_i, y_i, depth)` symmetric about the origin, all normals (0, 0, -1),
/// zero curvature.
pub fn gen_plane_wall_3d(
    n_h: usize,
    n_v: usize,
    width_h: f64,
    width_v: f64,
    depth: f64,
) -> Result<PointCloud> {
    if n_h < 2 || n_v < 2 {
        return Err(Error::InvalidArgument(format!(
            "grid needs n_h, n_v >= 2, got {n_h} x {n_v}"
        )));
    }
    if !(width_h > 0.0 && width_v > 0.0 && depth > 0.0) {
        return Err(Error::InvalidArgument(
            "widths and depth must be > 0".into(),
        ));
    }
    let xs = symmetric_axis(n_h, width_h);
    let ys = symmetric_axis(n_v, width_v);
    let mut points = Vec::with_capacity(n_h * n_v);
    for &y in &ys {
        for &x in &xs {
            points.push(DVector::from_vec(vec![x, y, depth]));
        }
    }
    let normals = vec![DVector::from_vec(vec![0.0, 0.0, -1.0]); points.len()];
    PointCloud::new(3, points, Some(normals), None, Some(0.0))
}

/// Inside corner of an axis-aligned box octant: grids on the three planes
/// `x = extent`, `y = extent`, `z = extent` with inward normals. All six
/// motion directions are observable to point-to-plane matching against this
/// scene.
pub fn gen_corner_3d(points_per_face: usize, extent: f64) -> Result<PointCloud> {
    if points_per_face < 4 {
        return Err(Error::InvalidArgument(format!(
            "corner needs points_per_face >= 4, got {points_per_face}"
        )));
    }
    if !(extent > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "extent must be > 0, got {extent}"
        )));
    }
    let m = (points_per_face as f64).sqrt().ceil() as usize;
    // in-face grid strictly inside (0, extent) so faces stay disjoint
    let coords: Vec<f64> = (0..m)
        .map(|j| extent * (j + 1) as f64 / (m + 1) as f64)
        .collect();
    let mut face_uv = Vec::with_capacity(points_per_face);
    'outer: for &u in &coords {
        for &v in &coords {
            face_uv.push((u, v));
            if face_uv.len() == points_per_face {
                break 'outer;
            }
        }
    }
    let mut points = Vec::with_capacity(3 * points_per_face);
    let mut normals = Vec::with_capacity(3 * points_per_face);
    for &(u, v) in &face_uv {
        points.push(DVector::from_vec(vec![extent, u, v]));
        normals.push(DVector::from_vec(vec![-1.0, 0.0, 0.0]));
    }
    for &(u, v) in &face_uv {
        points.push(DVector::from_vec(vec![u, extent, v]));
        normals.push(DVector::from_vec(vec![0.0, -1.0, 0.0]));
    }
    for &(u, v) in &face_uv {
        points.push(DVector::from_vec(vec![u, v, extent]));
        normals.push(DVector::from_vec(vec![0.0, 0.0, -1.0]));
    }
    PointCloud::new(3, points, Some(normals), None, Some(0.0))
}

/// Patch of a sphere of the given radius centered at the origin, sampled on
/// an `n_u` x `n_v` angular grid within `+/- angular_extent` of the +z pole.
/// Normals point toward the center; the curvature bound is `1 / radius`
/// (both principal curvatures of a sphere).
pub fn gen_sphere_patch_3d(
    radius: f64,
    n_u: usize,
    n_v: usize,
    angular_extent: f64,
) -> Result<PointCloud> {
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "radius must be > 0, got {radius}"
        )));
    }
    if n_u < 2 || n_v < 2 {
        return Err(Error::InvalidArgument(format!(
            "patch needs n_u, n_v >= 2, got {n_u} x {n_v}"
        )));
    }
    if !(angular_extent > 0.0 && angular_extent < std::f64::consts::FRAC_PI_2) {
        return Err(Error::InvalidArgument(format!(
            "angular extent must be in (0, pi/2), got {angular_extent}"
        )));
    }
    let us = symmetric_axis(n_u, 2.0 * angular_extent);
    let vs = symmetric_axis(n_v, 2.0 * angular_extent);
    let mut points = Vec::with_capacity(n_u * n_v);
    let mut normals = Vec::with_capacity(n_u * n_v);
    for &v in &vs {
        for &u in &us {
            let dir = DVector::from_vec(vec![u.sin(), u.cos() * v.sin(), u.cos() * v.cos()]);
            points.push(&dir * radius);
            normals.push(-dir);
        }
    }
    PointCloud::new(3, points, Some(normals), None, Some(1.0 / radius))
}

/// Scene recipe, used by the CLI and experiment configs so runs can echo the
/// exact generator arguments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SceneSpec {
    Wall2d {
        n: usize,
        spacing: f64,
    },
    Arc2d {
        radius: f64,
        n: usize,
        arc_span: f64,
    },
    PlaneWall3d {
        n_h: usize,
        n_v: usize,
        width_h: f64,
        width_v: f64,
        depth: f64,
    },
    Corner3d {
        points_per_face: usize,
        extent: f64,
    },
    SpherePatch3d {
        radius: f64,
        n_u: usize,
        n_v: usize,
        angular_extent: f64,
    },
}

impl SceneSpec {
    pub fn build(&self) -> Result<PointCloud> {
        match *self {
            SceneSpec::Wall2d { n, spacing } => gen_wall_2d(n, spacing),
            SceneSpec::Arc2d { radius, n, arc_span } => gen_arc_2d(radius, n, arc_span),
            SceneSpec::PlaneWall3d {
                n_h,
                n_v,
                width_h,
                width_v,
                depth,
            } => gen_plane_wall_3d(n_h, n_v, width_h, width_v, depth),
            SceneSpec::Corner3d {
                points_per_face,
                extent,
            } => gen_corner_3d(points_per_face, extent),
            SceneSpec::SpherePatch3d {
                radius,
                n_u,
                n_v,
                angular_extent,
            } => gen_sphere_patch_3d(radius, n_u, n_v, angular_extent),
        }
    }
}
