//! Closest-point correspondence and pair rejection.
//!
//! Matching is exact: for every selected source point the returned target
//! index minimizes the Euclidean distance to the displaced source point, with
//! ties broken by the smallest target index. The internal acceleration
//! structure reproduces the brute-force reference exactly.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::geometry::{apply_small_motion, RigidTransform, SmallMotion};
use crate::kdtree::{dist_sq, KdTree};
use crate::scenes::PointCloud;

/// One matched pair: source index, target index, squared distance at the
/// motion the matching was computed with.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pair {
    pub source: usize,
    pub target: usize,
    pub dist_sq: f64,
}

/// The motion the source cloud was displaced by when matching was computed.
#[derive(Clone, Debug, PartialEq)]
pub enum AppliedMotion {
    Rigid(RigidTransform),
    /// First-order displacement `p + x_R x p + x_T`.
    Linearized(SmallMotion),
}

impl AppliedMotion {
    pub fn displace(&self, p: &DVector<f64>) -> DVector<f64> {
        match self {
            AppliedMotion::Rigid(t) => t.apply(p),
            AppliedMotion::Linearized(x) => apply_small_motion(x, p),
        }
    }
}

/// Closest-point correspondences between a source and a target cloud.
#[derive(Clone, Debug, PartialEq)]
pub struct Correspondences {
    pub pairs: Vec<Pair>,
    pub transform_used: AppliedMotion,
}

fn check_clouds(source: &PointCloud, target: &PointCloud) -> Result<()> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::InvalidArgument("empty cloud".into()));
    }
    if source.dim != target.dim {
        return Err(Error::DimensionMismatch {
            expected: source.dim,
            got: target.dim,
        });
    }
    Ok(())
}

fn match_displaced(
    source: &PointCloud,
    target: &PointCloud,
    motion: AppliedMotion,
    subset: Option<&[usize]>,
) -> Result<Correspondences> {
    check_clouds(source, target)?;
    let indices: Vec<usize> = match subset {
        Some(s) => {
            for &i in s {
                if i >= source.len() {
                    return Err(Error::InvalidArgument(format!(
                        "source index {i} out of range ({} points)",
                        source.len()
                    )));
                }
            }
            s.to_vec()
        }
        None => (0..source.len()).collect(),
    };
    let tree = KdTree::build(&target.points);
    let pairs = indices
        .into_iter()
        .map(|k| {
            let moved = motion.displace(&source.points[k]);
            let (j, d2) = tree.nearest(&moved);
            Pair {
                source: k,
                target: j,
                dist_sq: d2,
            }
        })
        .collect();
    Ok(Correspondences {
        pairs,
        transform_used: motion,
    })
}

/// Match every source point against the target after applying `transform`.
pub fn nearest_neighbor_match(
    source: &PointCloud,
    target: &PointCloud,
    transform: &RigidTransform,
) -> Result<Correspondences> {
    match_displaced(source, target, AppliedMotion::Rigid(transform.clone()), None)
}

/// As [`nearest_neighbor_match`], restricted to the given source indices.
pub fn nearest_neighbor_match_subset(
    source: &PointCloud,
    target: &PointCloud,
    transform: &RigidTransform,
    subset: Option<&[usize]>,
) -> Result<Correspondences> {
    match_displaced(source, target, AppliedMotion::Rigid(transform.clone()), subset)
}

/// Match with the source displaced by the first-order motion instead of a
/// full rigid transform (the displacement used by landscape evaluation).
pub fn nearest_neighbor_match_linearized(
    source: &PointCloud,
    target: &PointCloud,
    x: &SmallMotion,
) -> Result<Correspondences> {
    match_displaced(source, target, AppliedMotion::Linearized(x.clone()), None)
}

/// O(N M) reference matcher; the accelerated path must agree with this
/// exactly, tie-breaks included.
pub fn brute_force_match(
    source: &PointCloud,
    target: &PointCloud,
    transform: &RigidTransform,
) -> Result<Correspondences> {
    check_clouds(source, target)?;
    let pairs = source
        .points
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let moved = transform.apply(p);
            let mut best = (usize::MAX, f64::INFINITY);
            for (j, q) in target.points.iter().enumerate() {
                let d2 = dist_sq(&moved, q);
                if d2 < best.1 || (d2 == best.1 && j < best.0) {
                    best = (j, d2);
                }
            }
            Pair {
                source: k,
                target: best.0,
                dist_sq: best.1,
            }
        })
        .collect();
    Ok(Correspondences {
        pairs,
        transform_used: AppliedMotion::Rigid(transform.clone()),
    })
}

/// Keep only pairs within `max_dist` (Euclidean), preserving order.
pub fn reject_pairs(c: &Correspondences, max_dist: f64) -> Result<Correspondences> {
    if !(max_dist > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "rejection distance must be > 0, got {max_dist}"
        )));
    }
    let limit = max_dist * max_dist;
    Ok(Correspondences {
        pairs: c
            .pairs
            .iter()
            .copied()
            .filter(|p| p.dist_sq <= limit)
            .collect(),
        transform_used: c.transform_used.clone(),
    })
}
