//! Rigid transforms and small-motion algebra shared by every other module.
//!
//! A motion is parameterized rotation-first: `(x_R, x_T)` is a 6-vector in 3D
//! and `(theta, x_T)` a 3-vector in 2D. Near identity, a rigid transform acts
//! as `p + x_R x p + x_T`; finite displacements go through the exact
//! exponential so that simulated motions are exactly rigid.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{Error, Result};

/// Orthonormality/determinant tolerance for [`RigidTransform::new`].
pub const ROTATION_TOL: f64 = 1e-12;

/// Skew-symmetric matrix `S(a)` with `S(a) b = a x b`.
pub fn skew(a: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(
        0.0, -a.z, a.y, //
        a.z, 0.0, -a.x, //
        -a.y, a.x, 0.0,
    )
}

/// `J p = (-p_y, p_x)`, the 2D rotation generator applied to `p`.
fn rot90(p: &DVector<f64>) -> DVector<f64> {
    DVector::from_vec(vec![-p[1], p[0]])
}

/// A near-identity rigid motion: rotation vector first, then translation.
///
/// In 2D the rotation block is the single scalar `theta`; in 3D it is the
/// axis-angle vector `x_R`.
#[derive(Clone, Debug, PartialEq)]
pub struct SmallMotion {
    rot: DVector<f64>,
    trans: DVector<f64>,
}

impl SmallMotion {
    /// 2D motion `(theta, tx, ty)`.
    pub fn planar(theta: f64, tx: f64, ty: f64) -> Self {
        Self {
            rot: DVector::from_vec(vec![theta]),
            trans: DVector::from_vec(vec![tx, ty]),
        }
    }

    /// 3D motion `(x_R, x_T)`.
    pub fn spatial(rot: Vector3<f64>, trans: Vector3<f64>) -> Self {
        Self {
            rot: DVector::from_column_slice(rot.as_slice()),
            trans: DVector::from_column_slice(trans.as_slice()),
        }
    }

    /// The zero motion of the given ambient dimension (2 or 3).
    pub fn zeros(dim: usize) -> Self {
        assert!(dim == 2 || dim == 3, "ambient dimension must be 2 or 3");
        Self {
            rot: DVector::zeros(if dim == 2 { 1 } else { 3 }),
            trans: DVector::zeros(dim),
        }
    }

    /// Rebuild from the packed rotation-first coordinate vector.
    pub fn from_vector(dim: usize, v: &DVector<f64>) -> Result<Self> {
        let dof = if dim == 2 { 3 } else { 6 };
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidArgument(format!(
                "ambient dimension must be 2 or 3, got {dim}"
            )));
        }
        if v.len() != dof {
            return Err(Error::DimensionMismatch {
                expected: dof,
                got: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("non-finite motion entry".into()));
        }
        let rot_len = dof - dim;
        Ok(Self {
            rot: v.rows(0, rot_len).into_owned(),
            trans: v.rows(rot_len, dim).into_owned(),
        })
    }

    /// Packed coordinate vector, rotation block first.
    pub fn to_vector(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.dof());
        v.rows_mut(0, self.rot.len()).copy_from(&self.rot);
        v.rows_mut(self.rot.len(), self.trans.len())
            .copy_from(&self.trans);
        v
    }

    pub fn rot(&self) -> &DVector<f64> {
        &self.rot
    }

    pub fn trans(&self) -> &DVector<f64> {
        &self.trans
    }

    /// Ambient dimension (2 or 3).
    pub fn dim(&self) -> usize {
        self.trans.len()
    }

    /// Degrees of freedom (3 in 2D, 6 in 3D).
    pub fn dof(&self) -> usize {
        self.rot.len() + self.trans.len()
    }

    /// Euclidean norm of the packed coordinates. Radians and length units are
    /// mixed with unit weights, so the value is unit dependent.
    pub fn norm(&self) -> f64 {
        (self.rot.norm_squared() + self.trans.norm_squared()).sqrt()
    }

    /// Scale every coordinate by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            rot: &self.rot * s,
            trans: &self.trans * s,
        }
    }

    /// Componentwise difference `self - other`.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(Self {
            rot: &self.rot - &other.rot,
            trans: &self.trans - &other.trans,
        })
    }

    /// Displacement of the point `p`: `x_R x p + x_T` (2D: `theta J p + x_T`).
    pub fn displacement(&self, p: &DVector<f64>) -> DVector<f64> {
        match self.dim() {
            2 => rot90(p) * self.rot[0] + &self.trans,
            3 => {
                let w = Vector3::new(self.rot[0], self.rot[1], self.rot[2]);
                let q = Vector3::new(p[0], p[1], p[2]);
                let c = w.cross(&q);
                DVector::from_vec(vec![
                    c.x + self.trans[0],
                    c.y + self.trans[1],
                    c.z + self.trans[2],
                ])
            }
            d => panic!("unsupported dimension {d}"),
        }
    }
}

/// First-order action of a small motion: `p + x_R x p + x_T`.
pub fn apply_small_motion(x: &SmallMotion, p: &DVector<f64>) -> DVector<f64> {
    p + x.displacement(p)
}

/// A rigid transform `p -> R p + t` in 2D or 3D.
#[derive(Clone, Debug, PartialEq)]
pub struct RigidTransform {
    pub rotation: DMatrix<f64>,
    pub translation: DVector<f64>,
}

impl RigidTransform {
    /// Validating constructor: `rotation` must be orthonormal with
    /// determinant +1 within [`ROTATION_TOL`].
    pub fn new(rotation: DMatrix<f64>, translation: DVector<f64>) -> Result<Self> {
        let d = translation.len();
        if rotation.nrows() != d || rotation.ncols() != d || (d != 2 && d != 3) {
            return Err(Error::InvalidArgument(format!(
                "rotation must be {d}x{d} matching a 2D/3D translation"
            )));
        }
        let gram = rotation.transpose() * &rotation;
        let defect = (&gram - DMatrix::<f64>::identity(d, d)).abs().max();
        if defect > ROTATION_TOL {
            return Err(Error::InvalidArgument(format!(
                "rotation is not orthonormal (defect {defect:.3e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOL {
            return Err(Error::InvalidArgument(format!(
                "rotation determinant {det} is not +1"
            )));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            rotation: DMatrix::identity(dim, dim),
            translation: DVector::zeros(dim),
        }
    }

    /// Pure translation by `t`.
    pub fn translation_of(t: DVector<f64>) -> Self {
        let d = t.len();
        Self {
            rotation: DMatrix::identity(d, d),
            translation: t,
        }
    }

    pub fn dim(&self) -> usize {
        self.translation.len()
    }

    /// `X p = R p + t`.
    pub fn apply(&self, p: &DVector<f64>) -> DVector<f64> {
        &self.rotation * p + &self.translation
    }

    /// Composition `self . other`, i.e. `other` acts first.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: &self.rotation * &other.rotation,
            translation: &self.rotation * &other.translation + &self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        let t = -(&rt * &self.translation);
        Self {
            rotation: rt,
            translation: t,
        }
    }
}

/// Exact exponential of a small motion: closed-form axis-angle rotation and
/// the matching translation part, so finite displacements are exactly rigid.
pub fn exp_motion(x: &SmallMotion) -> RigidTransform {
    match x.dim() {
        2 => exp_planar(x.rot()[0], x.trans()),
        3 => exp_spatial(x.rot(), x.trans()),
        d => panic!("unsupported dimension {d}"),
    }
}

fn exp_planar(theta: f64, trans: &DVector<f64>) -> RigidTransform {
    let (s, c) = theta.sin_cos();
    let rotation = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
    // V(theta) maps the tangent translation to the group translation.
    let (a, b) = if theta.abs() < 1e-6 {
        // sin(t)/t and (1-cos(t))/t by series; avoids cancellation.
        (
            1.0 - theta * theta / 6.0,
            theta / 2.0 - theta * theta * theta / 24.0,
        )
    } else {
        (s / theta, (1.0 - c) / theta)
    };
    let translation = DVector::from_vec(vec![
        a * trans[0] - b * trans[1],
        b * trans[0] + a * trans[1],
    ]);
    RigidTransform {
        rotation,
        translation,
    }
}

fn exp_spatial(rot: &DVector<f64>, trans: &DVector<f64>) -> RigidTransform {
    let w = Vector3::new(rot[0], rot[1], rot[2]);
    let t = Vector3::new(trans[0], trans[1], trans[2]);
    let theta = w.norm();
    let s = skew(&w);
    let s2 = s * s;
    // Rodrigues coefficients with series fallbacks near zero.
    let (k1, k2, k3) = if theta < 1e-6 {
        let t2 = theta * theta;
        (
            1.0 - t2 / 6.0,
            0.5 - t2 / 24.0,
            1.0 / 6.0 - t2 / 120.0,
        )
    } else {
        let t2 = theta * theta;
        (
            theta.sin() / theta,
            (1.0 - theta.cos()) / t2,
            (theta - theta.sin()) / (t2 * theta),
        )
    };
    let r = Matrix3::identity() + s * k1 + s2 * k2;
    let v = Matrix3::identity() + s * k2 + s2 * k3;
    let tv = v * t;
    RigidTransform {
        rotation: DMatrix::from_column_slice(3, 3, r.as_slice()),
        translation: DVector::from_column_slice(tv.as_slice()),
    }
}

/// Rotation vector of `r` (scalar angle in 2D, axis-angle in 3D).
fn rotation_log(r: &DMatrix<f64>) -> DVector<f64> {
    match r.nrows() {
        2 => DVector::from_vec(vec![r[(1, 0)].atan2(r[(0, 0)])]),
        3 => {
            let cos_theta = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
            let theta = cos_theta.acos();
            let axis_sin = DVector::from_vec(vec![
                (r[(2, 1)] - r[(1, 2)]) / 2.0,
                (r[(0, 2)] - r[(2, 0)]) / 2.0,
                (r[(1, 0)] - r[(0, 1)]) / 2.0,
            ]);
            if theta < 1e-9 {
                axis_sin
            } else if std::f64::consts::PI - theta < 1e-6 {
                // Near a half turn the antisymmetric part degenerates; use
                // the dominant column of R + I.
                let b = r + DMatrix::<f64>::identity(3, 3);
                let col = (0..3).max_by(|&i, &j| b.column(i).norm().total_cmp(&b.column(j).norm()));
                let c = b.column(col.unwrap()).into_owned();
                let axis = &c / c.norm();
                // Fix the sign against the antisymmetric part when possible.
                let sign = if axis.dot(&axis_sin) < 0.0 { -1.0 } else { 1.0 };
                axis * (theta * sign)
            } else {
                axis_sin * (theta / theta.sin())
            }
        }
        d => panic!("unsupported dimension {d}"),
    }
}

/// First-order motion taking `b` to `a`: the rotation log and raw translation
/// of `a . b^-1`. Exact for the rotation block; the translation block agrees
/// with the group logarithm to first order, which is what convergence tests
/// and estimate-error statistics need.
pub fn small_motion_between(a: &RigidTransform, b: &RigidTransform) -> SmallMotion {
    let e = a.compose(&b.inverse());
    let rot = rotation_log(&e.rotation);
    SmallMotion {
        rot,
        trans: e.translation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    #[test]
    fn skew_cross_product_axis_case() {
        let s = skew(&Vector3::new(1.0, 0.0, 0.0));
        let b = Vector3::new(0.0, 1.0, 0.0);
        assert_eq!(s * b, Vector3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn skew_annihilates_its_axis() {
        let a = Vector3::new(2.0, 3.0, 4.0);
        assert_eq!(skew(&a) * a, Vector3::zeros());
    }

    #[test]
    fn skew_matches_cross_product() {
        let a = Vector3::new(1.0, 2.0, 3.0);
        let b = Vector3::new(4.0, 5.0, 6.0);
        assert_eq!(skew(&a) * b, Vector3::new(-3.0, 6.0, -3.0));
    }

    #[test]
    fn skew_antisymmetry_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let a = Vector3::new(rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>());
            let s = skew(&a);
            assert_eq!(s.transpose() + s, Matrix3::zeros());
        }
    }

    #[test]
    fn small_motion_identity_and_pure_translation() {
        let p = dv(&[1.5, -2.0]);
        let zero = SmallMotion::zeros(2);
        assert_eq!(apply_small_motion(&zero, &p), p);

        let shift = SmallMotion::planar(0.0, 0.25, -1.0);
        assert_eq!(apply_small_motion(&shift, &p), dv(&[1.75, -3.0]));
    }

    #[test]
    fn small_motion_cross_product_case() {
        let x = SmallMotion::spatial(Vector3::new(0.0, 0.0, 0.01), Vector3::zeros());
        let p = dv(&[1.0, 0.0, 0.0]);
        let moved = apply_small_motion(&x, &p);
        assert_abs_diff_eq!(moved[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(moved[1], 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(moved[2], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn exp_of_zero_is_identity() {
        for dim in [2, 3] {
            let t = exp_motion(&SmallMotion::zeros(dim));
            assert_eq!(t, RigidTransform::identity(dim));
        }
    }

    #[test]
    fn exp_quarter_turn_maps_e1_to_e2() {
        let x = SmallMotion::spatial(
            Vector3::new(0.0, 0.0, std::f64::consts::FRAC_PI_2),
            Vector3::zeros(),
        );
        let t = exp_motion(&x);
        let e1 = dv(&[1.0, 0.0, 0.0]);
        let moved = t.apply(&e1);
        assert_abs_diff_eq!(moved[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(moved[1], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(moved[2], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn exp_agrees_with_linearization_to_second_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for dim in [2usize, 3] {
            let dof = if dim == 2 { 3 } else { 6 };
            let dir = DVector::from_fn(dof, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let dir = &dir / dir.norm();
            let p = DVector::from_fn(dim, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let mut prev_err = f64::INFINITY;
            for scale in [1e-2, 1e-3, 1e-4] {
                let x = SmallMotion::from_vector(dim, &(&dir * scale)).unwrap();
                let exact = exp_motion(&x).apply(&p);
                let approx = apply_small_motion(&x, &p);
                let err = (exact - approx).norm();
                // error is O(|x|^2): bounded constant and ~100x decay per decade
                assert!(err / (scale * scale) < 2.0, "err {err} at scale {scale}");
                assert!(err < prev_err / 50.0 || err < 1e-15);
                prev_err = err;
            }
        }
    }

    #[test]
    fn exp_is_orthonormal_with_unit_det_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let w = Vector3::new(
                rng.random::<f64>() * 2.0 - 1.0,
                rng.random::<f64>() * 2.0 - 1.0,
                rng.random::<f64>() * 2.0 - 1.0,
            );
            let w = w / w.norm() * rng.random::<f64>() * std::f64::consts::PI;
            let t = Vector3::new(rng.random(), rng.random(), rng.random());
            let x = SmallMotion::spatial(w, t);
            let g = exp_motion(&x);
            assert!(RigidTransform::new(g.rotation.clone(), g.translation.clone()).is_ok());
        }
    }

    #[test]
    fn transform_group_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x1 = SmallMotion::spatial(
            Vector3::new(0.3, -0.1, 0.2),
            Vector3::new(1.0, 2.0, -0.5),
        );
        let x2 = SmallMotion::spatial(
            Vector3::new(-0.2, 0.4, 0.1),
            Vector3::new(0.0, -1.0, 0.25),
        );
        let (t1, t2) = (exp_motion(&x1), exp_motion(&x2));
        for _ in 0..10 {
            let p = DVector::from_fn(3, |_, _| rng.random::<f64>() * 4.0 - 2.0);
            let lhs = t1.apply(&t2.apply(&p));
            let rhs = t1.compose(&t2).apply(&p);
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn identity_and_translation_cases() {
        let p = dv(&[0.5, 0.25, -1.0]);
        assert_eq!(RigidTransform::identity(3).apply(&p), p);
        let shift = RigidTransform::translation_of(dv(&[1.0, 0.0, 2.0]));
        assert_eq!(shift.apply(&p), dv(&[1.5, 0.25, 1.0]));
    }

    #[test]
    fn motion_between_recovers_relative_motion() {
        let x = SmallMotion::spatial(
            Vector3::new(0.02, -0.01, 0.03),
            Vector3::new(0.5, -0.25, 0.1),
        );
        let a = exp_motion(&x);
        let b = RigidTransform::identity(3);
        let rel = small_motion_between(&a, &b);
        // rotation block is exact, translation to first order
        assert!((rel.rot() - x.rot()).norm() < 1e-12);
        assert!((rel.trans() - x.trans()).norm() < 2e-2 * x.trans().norm());
        // convergence-style usage: identical transforms give the zero motion
        assert_eq!(small_motion_between(&a, &a.clone()).norm(), 0.0);
    }

    #[test]
    fn rotation_log_near_half_turn() {
        let x = SmallMotion::spatial(
            Vector3::new(0.0, 0.0, std::f64::consts::PI - 1e-9),
            Vector3::zeros(),
        );
        let r = exp_motion(&x);
        let back = small_motion_between(&r, &RigidTransform::identity(3));
        assert!((back.rot() - x.rot()).norm() < 1e-6);
    }
}
