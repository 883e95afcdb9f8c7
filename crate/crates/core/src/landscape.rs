//! Cost-landscape evaluation with and without closest-point rematching, and
//! numerical checks of the curvature-dependent validity bound for the
//! fixed-matching quadratic model.
//!
//! All motions here displace points to first order (`p + x_R x p + x_T`);
//! the fixed-matching cost is then exactly quadratic in the motion, so it
//! doubles as the second-order model around the anchor.

use crate::covariance::Variant;
use crate::error::{Error, Result};
use crate::geometry::SmallMotion;
use crate::matching::{nearest_neighbor_match_linearized, Correspondences};
use crate::scenes::PointCloud;

/// Costs of one sampled motion.
#[derive(Clone, Debug)]
pub struct LandscapeSample {
    pub motion: SmallMotion,
    /// Cost with closest-point rematching at the sampled motion.
    pub true_cost: f64,
    /// Cost with the matching frozen at the anchor.
    pub fixed_cost: f64,
    /// Second-order model value; identical to `fixed_cost` because the
    /// frozen-matching cost is already quadratic under linearization.
    pub quadratic_cost: f64,
}

fn residual_cost(
    displaced: &PointCloud,
    target: &PointCloud,
    pairs: impl Iterator<Item = (usize, usize)>,
    variant: Variant,
) -> Result<f64> {
    let normals = match variant {
        Variant::PointToPlane => Some(target.normals.as_ref().ok_or(Error::MissingNormals)?),
        Variant::PointToPoint => None,
    };
    let mut cost = 0.0;
    for (k, j) in pairs {
        let r = &displaced.points[k] - &target.points[j];
        cost += match variant {
            Variant::PointToPoint => r.norm_squared(),
            Variant::PointToPlane => {
                let d = normals.unwrap()[j].dot(&r);
                d * d
            }
        };
    }
    Ok(cost)
}

/// Cost with closest-point rematching at `x`: the source is displaced to
/// first order, matched exactly against the target, and the variant's cost
/// evaluated on that fresh matching.
pub fn true_icp_cost(
    source: &PointCloud,
    target: &PointCloud,
    x: &SmallMotion,
    variant: Variant,
) -> Result<f64> {
    let displaced = source.displaced_linear(x);
    let c = nearest_neighbor_match_linearized(source, target, x)?;
    residual_cost(
        &displaced,
        target,
        c.pairs.iter().map(|p| (p.source, p.target)),
        variant,
    )
}

/// Cost at `x` with the matching frozen at its anchor value.
pub fn fixed_matching_cost(
    source: &PointCloud,
    target: &PointCloud,
    x: &SmallMotion,
    matching: &Correspondences,
    variant: Variant,
) -> Result<f64> {
    let displaced = source.displaced_linear(x);
    residual_cost(
        &displaced,
        target,
        matching.pairs.iter().map(|p| (p.source, p.target)),
        variant,
    )
}

/// Sum of squared distances from the displaced source points to a 2D
/// polyline through the target points (closest point over all segments,
/// endpoint clamped).
pub fn polyline_cost(
    source: &PointCloud,
    target_polyline: &PointCloud,
    x: &SmallMotion,
) -> Result<f64> {
    if source.dim != 2 || target_polyline.dim != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: source.dim.max(target_polyline.dim),
        });
    }
    if target_polyline.len() < 2 {
        return Err(Error::InvalidArgument(
            "polyline needs at least 2 vertices".into(),
        ));
    }
    let displaced = source.displaced_linear(x);
    let verts = &target_polyline.points;
    let mut cost = 0.0;
    for p in &displaced.points {
        let mut best = f64::INFINITY;
        for w in verts.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let ab = b - a;
            let len_sq = ab.norm_squared();
            let t = if len_sq == 0.0 {
                0.0
            } else {
                ((p - a).dot(&ab) / len_sq).clamp(0.0, 1.0)
            };
            let closest = a + ab * t;
            best = best.min((p - closest).norm_squared());
        }
        cost += best;
    }
    Ok(cost)
}

/// Evaluate true / fixed / quadratic costs over a motion grid, with the
/// fixed matching anchored at `anchor`.
pub fn sample_landscape(
    source: &PointCloud,
    target: &PointCloud,
    grid: &[SmallMotion],
    variant: Variant,
    anchor: &SmallMotion,
) -> Result<Vec<LandscapeSample>> {
    let anchor_matching = nearest_neighbor_match_linearized(source, target, anchor)?;
    grid.iter()
        .map(|x| {
            let true_cost = true_icp_cost(source, target, x, variant)?;
            let fixed_cost = fixed_matching_cost(source, target, x, &anchor_matching, variant)?;
            Ok(LandscapeSample {
                motion: x.clone(),
                true_cost,
                fixed_cost,
                quadratic_cost: fixed_cost,
            })
        })
        .collect()
}

/// Per-point result of the fixed-matching discrepancy check.
#[derive(Clone, Debug)]
pub struct TaylorPointCheck {
    pub index: usize,
    pub matched: usize,
    /// Discrepancy `(a_i - a_j) . n_i` between the fixed-matching and
    /// rematched residuals.
    pub psi: f64,
    /// `8 k |x_R x a_i + x_T|^2`.
    pub psi_bound: f64,
    /// Arc-length separation of the point and its rematch partner.
    pub abscissa_gap: f64,
    /// `4 |x_R x a_i + x_T|`; bounds the gap whenever rematching occurred.
    pub lemma_bound: f64,
    /// Whether `k |s_i - s_j| <= 1`, the regime both bounds are stated in.
    pub condition_ok: bool,
    pub displacement_norm: f64,
}

/// Scene-wide summary of [`TaylorPointCheck`] rows.
#[derive(Clone, Debug)]
pub struct TaylorBoundReport {
    pub curvature: f64,
    pub points: Vec<TaylorPointCheck>,
    /// Largest `|psi| / bound` over condition-satisfying points (0 when the
    /// bound is 0, which forces `psi = 0` exactly).
    pub max_psi_ratio: f64,
    /// Largest `gap / lemma bound` over rematched condition-satisfying points.
    pub max_lemma_ratio: f64,
    pub condition_violations: usize,
    pub rematched: usize,
}

fn bound_report<G>(scene: &PointCloud, x: &SmallMotion, curvature: f64, gap: G) -> Result<TaylorBoundReport>
where
    G: Fn(usize, usize) -> f64,
{
    let normals = scene.normals.as_ref().ok_or(Error::MissingNormals)?;
    let c = nearest_neighbor_match_linearized(scene, scene, x)?;
    let mut points = Vec::with_capacity(scene.len());
    let mut max_psi_ratio: f64 = 0.0;
    let mut max_lemma_ratio: f64 = 0.0;
    let mut condition_violations = 0;
    let mut rematched = 0;
    for pair in &c.pairs {
        let (i, j) = (pair.source, pair.target);
        let disp = x.displacement(&scene.points[i]).norm();
        let psi = if i == j {
            0.0
        } else {
            (&scene.points[i] - &scene.points[j]).dot(&normals[i])
        };
        let abscissa_gap = if i == j { 0.0 } else { gap(i, j) };
        let condition_ok = curvature * abscissa_gap <= 1.0;
        let psi_bound = 8.0 * curvature * disp * disp;
        let lemma_bound = 4.0 * disp;
        if !condition_ok {
            condition_violations += 1;
        }
        if i != j {
            rematched += 1;
            if condition_ok && lemma_bound > 0.0 {
                max_lemma_ratio = max_lemma_ratio.max(abscissa_gap / lemma_bound);
            }
        }
        if condition_ok && psi_bound > 0.0 {
            max_psi_ratio = max_psi_ratio.max(psi.abs() / psi_bound);
        }
        points.push(TaylorPointCheck {
            index: i,
            matched: j,
            psi,
            psi_bound,
            abscissa_gap,
            lemma_bound,
            condition_ok,
            displacement_norm: disp,
        });
    }
    Ok(TaylorBoundReport {
        curvature,
        points,
        max_psi_ratio,
        max_lemma_ratio,
        condition_violations,
        rematched,
    })
}

/// Check the fixed-matching discrepancy bounds on a 2D curve scene: the
/// scene is displaced by `x`, rematched against itself, and per point the
/// discrepancy `psi_i` is compared against `8 k |x_R x a_i + x_T|^2` and the
/// rematch arc gap against `4 |x_R x a_i + x_T|`, both under the condition
/// `k |s_i - s_j| <= 1`.
pub fn verify_taylor_bound(scene: &PointCloud, x: &SmallMotion) -> Result<TaylorBoundReport> {
    let abscissae = scene.abscissae.as_ref().ok_or(Error::MissingAbscissae)?;
    let curvature = scene.curvature_bound.ok_or(Error::MissingCurvature)?;
    bound_report(scene, x, curvature, |i, j| {
        (abscissae[i] - abscissae[j]).abs()
    })
}

/// The 3D variant of [`verify_taylor_bound`] for sphere-patch scenes
/// centered at the origin: the arc gap is the great-circle distance computed
/// from the stored curvature (sphere radius `1 / k`; both principal
/// curvatures equal).
pub fn verify_taylor_bound_sphere(scene: &PointCloud, x: &SmallMotion) -> Result<TaylorBoundReport> {
    let curvature = scene.curvature_bound.ok_or(Error::MissingCurvature)?;
    if scene.dim != 3 {
        return Err(Error::DimensionMismatch {
            expected: 3,
            got: scene.dim,
        });
    }
    if !(curvature > 0.0) {
        return Err(Error::InvalidArgument(
            "sphere bound check needs a positive curvature".into(),
        ));
    }
    let radius = 1.0 / curvature;
    let points = scene.points.clone();
    bound_report(scene, x, curvature, move |i, j| {
        let cosang = (points[i].dot(&points[j]) / (radius * radius)).clamp(-1.0, 1.0);
        radius * cosang.acos()
    })
}

/// Gaps `|true - fixed|` of the point-to-plane cost for the scene displaced
/// by `direction * eps * 2^k`, k = 0..levels, with the matching anchored at
/// zero. Successive gap ratios measure the decay order of the quadratic
/// model error.
pub fn taylor_decay(
    scene: &PointCloud,
    direction: &SmallMotion,
    eps: f64,
    levels: usize,
) -> Result<Vec<(f64, f64)>> {
    if !(eps > 0.0) || levels == 0 {
        return Err(Error::InvalidArgument(
            "decay schedule needs eps > 0 and at least one level".into(),
        ));
    }
    let anchor = nearest_neighbor_match_linearized(scene, scene, &SmallMotion::zeros(scene.dim))?;
    let mut out = Vec::with_capacity(levels);
    for k in 0..levels {
        let scale = eps * (1 << k) as f64;
        let x = direction.scaled(scale);
        let true_cost = true_icp_cost(scene, scene, &x, Variant::PointToPlane)?;
        let fixed_cost = fixed_matching_cost(scene, scene, &x, &anchor, Variant::PointToPlane)?;
        out.push((scale, (true_cost - fixed_cost).abs()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenes::{gen_arc_2d, gen_corner_3d, gen_plane_wall_3d, gen_sphere_patch_3d, gen_wall_2d};
    use approx::assert_abs_diff_eq;
    use nalgebra::{DVector, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn interior_wall(n: usize, trim: usize) -> (PointCloud, PointCloud) {
        let wall = gen_wall_2d(n, 1.0).unwrap();
        let interior: Vec<usize> = (trim..n - trim).collect();
        (wall.subset(&interior).unwrap(), wall)
    }

    #[test]
    fn true_cost_zero_at_origin_on_identical_clouds() {
        let wall = gen_wall_2d(10, 1.0).unwrap();
        let x = SmallMotion::zeros(2);
        assert_eq!(
            true_icp_cost(&wall, &wall, &x, Variant::PointToPoint).unwrap(),
            0.0
        );
    }

    #[test]
    fn wall_true_cost_is_periodic_and_fixed_cost_parabolic() {
        let (interior, wall) = interior_wall(10, 2);
        let n = interior.len() as f64;
        // full-spacing translation rematches perfectly: true cost 0
        let t1 = SmallMotion::planar(0.0, 1.0, 0.0);
        assert!(true_icp_cost(&interior, &wall, &t1, Variant::PointToPoint).unwrap() <= 1e-20);
        // half-spacing translation: every interior point 0.5 from both sides
        let t05 = SmallMotion::planar(0.0, 0.5, 0.0);
        assert_abs_diff_eq!(
            true_icp_cost(&interior, &wall, &t05, Variant::PointToPoint).unwrap(),
            n * 0.25,
            epsilon = 1e-12
        );
        // frozen identity matching: exact parabola n t^2
        let anchor = SmallMotion::zeros(2);
        let matching =
            nearest_neighbor_match_linearized(&interior, &wall, &anchor).unwrap();
        let fixed = fixed_matching_cost(&interior, &wall, &t1, &matching, Variant::PointToPoint)
            .unwrap();
        assert_abs_diff_eq!(fixed, n, epsilon = 1e-12);
    }

    #[test]
    fn fixed_cost_equals_true_cost_at_anchor() {
        let arc = gen_arc_2d(1.0, 50, 1.0).unwrap();
        let anchor = SmallMotion::planar(0.01, 0.002, -0.001);
        let matching = nearest_neighbor_match_linearized(&arc, &arc, &anchor).unwrap();
        for variant in [Variant::PointToPoint, Variant::PointToPlane] {
            let t = true_icp_cost(&arc, &arc, &anchor, variant).unwrap();
            let f = fixed_matching_cost(&arc, &arc, &anchor, &matching, variant).unwrap();
            assert_abs_diff_eq!(t, f, epsilon = 1e-12 * t.max(1.0));
        }
    }

    #[test]
    fn true_cost_never_exceeds_fixed_cost_point_to_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let arc = gen_arc_2d(2.0, 60, 1.5).unwrap();
        let anchor = SmallMotion::zeros(2);
        let matching = nearest_neighbor_match_linearized(&arc, &arc, &anchor).unwrap();
        for _ in 0..30 {
            let x = SmallMotion::planar(
                rng.random::<f64>() * 0.2 - 0.1,
                rng.random::<f64>() * 0.4 - 0.2,
                rng.random::<f64>() * 0.4 - 0.2,
            );
            let t = true_icp_cost(&arc, &arc, &x, Variant::PointToPoint).unwrap();
            let f = fixed_matching_cost(&arc, &arc, &x, &matching, Variant::PointToPoint).unwrap();
            assert!(t <= f + 1e-12 * f.max(1.0));
        }
    }

    #[test]
    fn plane_scene_quadratic_model_is_exact() {
        // zero curvature: rematching never changes the projected residual
        let wall = gen_plane_wall_3d(9, 9, 2.0, 2.0, 1.0).unwrap();
        let anchor = SmallMotion::zeros(3);
        let matching = nearest_neighbor_match_linearized(&wall, &wall, &anchor).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..20 {
            let x = SmallMotion::spatial(
                Vector3::new(
                    rng.random::<f64>() * 0.2 - 0.1,
                    rng.random::<f64>() * 0.2 - 0.1,
                    rng.random::<f64>() * 0.2 - 0.1,
                ),
                Vector3::new(
                    rng.random::<f64>() * 0.3 - 0.15,
                    rng.random::<f64>() * 0.3 - 0.15,
                    rng.random::<f64>() * 0.3 - 0.15,
                ),
            );
            let t = true_icp_cost(&wall, &wall, &x, Variant::PointToPlane).unwrap();
            let f = fixed_matching_cost(&wall, &wall, &x, &matching, Variant::PointToPlane).unwrap();
            assert!(
                (t - f).abs() <= 1e-12 * f.max(1e-30),
                "plane scene gap {} at cost {}",
                (t - f).abs(),
                f
            );
        }
    }

    #[test]
    fn polyline_projection_cases() {
        let wall = gen_wall_2d(10, 1.0).unwrap();
        let on_line = PointCloud::new(
            2,
            vec![DVector::from_vec(vec![3.25, 0.0])],
            None,
            None,
            None,
        )
        .unwrap();
        assert_eq!(polyline_cost(&on_line, &wall, &SmallMotion::zeros(2)).unwrap(), 0.0);

        let above = PointCloud::new(
            2,
            vec![DVector::from_vec(vec![0.5, 0.3])],
            None,
            None,
            None,
        )
        .unwrap();
        assert_abs_diff_eq!(
            polyline_cost(&above, &wall, &SmallMotion::zeros(2)).unwrap(),
            0.09,
            epsilon = 1e-15
        );

        let beyond = PointCloud::new(
            2,
            vec![DVector::from_vec(vec![10.5, 0.0])],
            None,
            None,
            None,
        )
        .unwrap();
        // clamped to the last vertex (9, 0)
        assert_abs_diff_eq!(
            polyline_cost(&beyond, &wall, &SmallMotion::zeros(2)).unwrap(),
            2.25,
            epsilon = 1e-15
        );

        let corner = gen_corner_3d(9, 1.0).unwrap();
        assert!(polyline_cost(&corner, &wall, &SmallMotion::zeros(3)).is_err());
    }

    #[test]
    fn landscape_samples_coincide_at_anchor() {
        let arc = gen_arc_2d(1.0, 40, 1.2).unwrap();
        let anchor = SmallMotion::planar(0.0, 0.01, 0.0);
        let samples =
            sample_landscape(&arc, &arc, &[anchor.clone()], Variant::PointToPoint, &anchor)
                .unwrap();
        assert_eq!(samples.len(), 1);
        let s = &samples[0];
        assert_abs_diff_eq!(s.true_cost, s.fixed_cost, epsilon = 1e-12);
        assert_eq!(s.fixed_cost, s.quadratic_cost);
    }

    #[test]
    fn taylor_bound_zero_motion_matches_self() {
        let arc = gen_arc_2d(1.0, 100, 2.0).unwrap();
        let report = verify_taylor_bound(&arc, &SmallMotion::zeros(2)).unwrap();
        assert_eq!(report.rematched, 0);
        for p in &report.points {
            assert_eq!(p.index, p.matched);
            assert_eq!(p.psi, 0.0);
        }
    }

    #[test]
    fn unit_circle_translation_respects_proposition_bound() {
        // dense arc of the unit circle, pure translation of 0.1
        let n = (5.25 / 0.01) as usize + 1;
        let arc = gen_arc_2d(1.0, n, 5.25).unwrap();
        let x = SmallMotion::planar(0.0, 0.1, 0.0);
        let report = verify_taylor_bound(&arc, &x).unwrap();
        assert!(report.rematched > 0, "0.1 must exceed half the 0.01 spacing");
        assert_eq!(report.condition_violations, 0);
        for p in &report.points {
            assert!(
                p.psi.abs() <= p.psi_bound + 1e-15,
                "psi {} exceeds bound {}",
                p.psi,
                p.psi_bound
            );
            // global form: 8 k max-disp^2 = 0.08
            assert!(p.psi.abs() <= 0.08 + 1e-15);
            if p.index != p.matched {
                assert!(p.abscissa_gap <= p.lemma_bound + 1e-15);
            }
        }
    }

    #[test]
    fn flat_wall_discrepancy_is_identically_zero() {
        let wall = gen_wall_2d(30, 0.5).unwrap();
        let x = SmallMotion::planar(0.02, 1.3, 0.4);
        let report = verify_taylor_bound(&wall, &x).unwrap();
        for p in &report.points {
            assert_eq!(p.psi, 0.0);
        }
    }

    #[test]
    fn sphere_patch_respects_corollary_bound() {
        let patch = gen_sphere_patch_3d(1.0, 41, 41, 0.45).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..10 {
            let w = Vector3::new(
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
            ) * 0.05;
            let t = Vector3::new(
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
            ) * 0.08;
            let x = SmallMotion::spatial(w, t);
            let report = verify_taylor_bound_sphere(&patch, &x).unwrap();
            for p in &report.points {
                if p.condition_ok {
                    assert!(
                        p.psi.abs() <= p.psi_bound + 1e-15,
                        "psi {} bound {}",
                        p.psi,
                        p.psi_bound
                    );
                }
            }
        }
    }

    #[test]
    fn missing_metadata_is_reported() {
        let wall = gen_plane_wall_3d(3, 3, 1.0, 1.0, 1.0).unwrap();
        assert!(matches!(
            verify_taylor_bound(&wall, &SmallMotion::zeros(3)),
            Err(Error::MissingAbscissae)
        ));
    }

    #[test]
    fn decay_gaps_shrink_at_least_cubically() {
        let n = (5.25 / 0.01) as usize + 1;
        let arc = gen_arc_2d(1.0, n, 5.25).unwrap();
        let direction = SmallMotion::planar(0.0, 1.0, 0.0);
        let gaps = taylor_decay(&arc, &direction, 0.02, 3).unwrap();
        assert_eq!(gaps.len(), 3);
        // every level must actually rematch for the ratio test to bite
        for (scale, gap) in &gaps {
            assert!(*gap > 0.0, "no rematch at scale {scale}");
        }
        let r1 = gaps[1].1 / gaps[0].1;
        let r2 = gaps[2].1 / gaps[1].1;
        assert!(r1 >= 6.4, "first ratio {r1}");
        assert!(r2 >= 6.4, "second ratio {r2}");
    }
}
