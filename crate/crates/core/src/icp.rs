//! The ICP loop: alternate closest-point matching with a per-variant motion
//! solve until the update stalls.
//!
//! The point-to-point step is the exact closed-form minimizer of the matched
//! cost (centroid alignment plus an SVD of the cross-covariance, reflection
//! corrected). The point-to-plane step solves the linearized normal
//! equations for a small update which is composed into the running transform
//! through the exact exponential; residuals are always recomputed from the
//! composed transform so no small-angle error accumulates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::covariance::{build_p2plane_system, solve_ls, Variant};
use crate::error::{Error, Result};
use crate::geometry::{exp_motion, small_motion_between, RigidTransform, SmallMotion};
use crate::matching::{nearest_neighbor_match_subset, reject_pairs, Correspondences, Pair};
use crate::scenes::PointCloud;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IcpConfig {
    pub variant: Variant,
    pub max_iterations: usize,
    /// Convergence threshold on the motion-update norm. Radians and length
    /// units mix with unit weights, so the value is unit dependent.
    pub transform_tolerance: f64,
    /// Optional pair rejection distance applied after each matching.
    pub rejection_distance: Option<f64>,
    /// Optional subset of source indices to match (default: all points).
    pub source_indices: Option<Vec<usize>>,
}

impl IcpConfig {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            max_iterations: 100,
            transform_tolerance: 1e-10,
            rejection_distance: None,
            source_indices: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::InvalidArgument("max_iterations must be >= 1".into()));
        }
        if !(self.transform_tolerance > 0.0) {
            return Err(Error::InvalidArgument(
                "transform_tolerance must be > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct IcpResult {
    /// Transform mapping the source cloud onto the target.
    pub estimate: RigidTransform,
    /// Matching recomputed at the final estimate.
    pub final_matching: Correspondences,
    /// Fixed-matching cost after each solve; one entry per iteration.
    pub cost_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Exact global minimizer of the matched point-to-point cost over rigid
/// transforms (Kabsch). Fails with [`Error::DegenerateConfiguration`] when
/// the minimizer is not unique (rank-deficient cross-covariance).
pub fn solve_point_to_point_step(
    c: &Correspondences,
    source: &PointCloud,
    target: &PointCloud,
) -> Result<RigidTransform> {
    let dim = source.dim;
    if c.pairs.is_empty() {
        return Err(Error::InsufficientData("no correspondences".into()));
    }
    let n = c.pairs.len() as f64;
    let mut p_bar = DVector::zeros(dim);
    let mut q_bar = DVector::zeros(dim);
    for pair in &c.pairs {
        p_bar += &source.points[pair.source];
        q_bar += &target.points[pair.target];
    }
    p_bar /= n;
    q_bar /= n;
    let mut h = DMatrix::zeros(dim, dim);
    for pair in &c.pairs {
        let p = &source.points[pair.source] - &p_bar;
        let q = &target.points[pair.target] - &q_bar;
        h += p * q.transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u.as_ref().expect("svd with u");
    let v_t = svd.v_t.as_ref().expect("svd with v_t");
    let s = &svd.singular_values;
    // uniqueness needs rank >= dim - 1
    let scale = s[0];
    if scale == 0.0 || (dim >= 2 && s[dim - 2] <= 1e-12 * scale) {
        return Err(Error::DegenerateConfiguration(
            "cross-covariance is rank deficient; rotation is not unique".into(),
        ));
    }
    let v = v_t.transpose();
    let det = (&v * u.transpose()).determinant();
    let mut d = DMatrix::identity(dim, dim);
    d[(dim - 1, dim - 1)] = det.signum();
    let rotation = v * d * u.transpose();
    let translation = &q_bar - &rotation * &p_bar;
    Ok(RigidTransform {
        rotation,
        translation,
    })
}

/// One linearized point-to-plane update at the matching's transform: the
/// returned motion is the increment to compose on top of that transform.
/// Rank-deficient systems fail with [`Error::SingularSystem`] carrying the
/// null-space basis.
pub fn solve_point_to_plane_step(
    c: &Correspondences,
    source: &PointCloud,
    target: &PointCloud,
) -> Result<SmallMotion> {
    let sys = build_p2plane_system(source, c, target)?;
    solve_ls(&sys)
}

fn matched_cost(
    source: &PointCloud,
    target: &PointCloud,
    pairs: &[Pair],
    x: &RigidTransform,
    variant: Variant,
) -> f64 {
    let normals = target.normals.as_ref();
    pairs
        .iter()
        .map(|pair| {
            let r = x.apply(&source.points[pair.source]) - &target.points[pair.target];
            match variant {
                Variant::PointToPoint => r.norm_squared(),
                Variant::PointToPlane => {
                    let d = normals.expect("normals checked upstream")[pair.target].dot(&r);
                    d * d
                }
            }
        })
        .sum()
}

/// Alternate matching and minimization from `initial` until the motion
/// update norm drops below the tolerance or the iteration budget runs out.
/// Non-convergence is reported through `converged = false`, not an error.
pub fn run_icp(
    source: &PointCloud,
    target: &PointCloud,
    config: &IcpConfig,
    initial: &RigidTransform,
) -> Result<IcpResult> {
    config.validate()?;
    if source.is_empty() || target.is_empty() {
        return Err(Error::InvalidArgument("empty cloud".into()));
    }
    if source.dim != target.dim {
        return Err(Error::DimensionMismatch {
            expected: source.dim,
            got: target.dim,
        });
    }
    if config.variant == Variant::PointToPlane && target.normals.is_none() {
        return Err(Error::MissingNormals);
    }

    let subset = config.source_indices.as_deref();
    let match_at = |x: &RigidTransform| -> Result<Correspondences> {
        let c = nearest_neighbor_match_subset(source, target, x, subset)?;
        match config.rejection_distance {
            Some(d) => {
                let kept = reject_pairs(&c, d)?;
                if kept.pairs.is_empty() {
                    Err(Error::InsufficientData(
                        "rejection removed every correspondence".into(),
                    ))
                } else {
                    Ok(kept)
                }
            }
            None => Ok(c),
        }
    };

    let mut x = initial.clone();
    let mut cost_trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..config.max_iterations {
        let c = match_at(&x)?;
        let x_new = match config.variant {
            Variant::PointToPoint => solve_point_to_point_step(&c, source, target)?,
            Variant::PointToPlane => {
                let step = solve_point_to_plane_step(&c, source, target)?;
                exp_motion(&step).compose(&x)
            }
        };
        cost_trace.push(matched_cost(source, target, &c.pairs, &x_new, config.variant));
        let update = small_motion_between(&x_new, &x);
        x = x_new;
        iterations += 1;
        if update.norm() < config.transform_tolerance {
            converged = true;
            break;
        }
    }
    let final_matching = match_at(&x)?;
    Ok(IcpResult {
        estimate: x,
        final_matching,
        cost_trace,
        iterations,
        converged,
    })
}
