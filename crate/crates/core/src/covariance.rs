//! Linearized least-squares systems for both ICP variants, Hessian and
//! covariance computation, and observability analysis.
//!
//! Systems are stored so that the cost is literally
//! `J(x) = sum_i |d_i - B_i x|^2`: the residual of row `i` at motion `x` is
//! `d_i - B_i x`, which reproduces the linearized matched cost at the
//! matching the system was built from. The sign convention is pinned by the
//! finite-difference agreement tests.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{skew, SmallMotion};
use crate::matching::Correspondences;
use crate::scenes::PointCloud;

/// Which residual the system rows encode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    PointToPoint,
    PointToPlane,
}

/// One linearized residual row `(d_i, B_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LsRow {
    pub residual: DVector<f64>,
    pub jacobian: DMatrix<f64>,
}

/// The collection of linearized rows for a fixed matching.
#[derive(Clone, Debug, PartialEq)]
pub struct LsSystem {
    pub variant: Variant,
    /// Ambient dimension (2 or 3).
    pub dim: usize,
    pub rows: Vec<LsRow>,
}

impl LsSystem {
    /// Motion degrees of freedom: 3 in 2D, 6 in 3D.
    pub fn dof(&self) -> usize {
        if self.dim == 2 {
            3
        } else {
            6
        }
    }

    /// `J(x) = sum_i |d_i - B_i x|^2`.
    pub fn cost_at(&self, x: &DVector<f64>) -> f64 {
        self.rows
            .iter()
            .map(|r| (&r.residual - &r.jacobian * x).norm_squared())
            .sum()
    }

    /// `sum_i B_i^T d_i`, the right-hand side of the normal equations.
    pub fn rhs(&self) -> DVector<f64> {
        let mut b = DVector::zeros(self.dof());
        for r in &self.rows {
            b += r.jacobian.transpose() * &r.residual;
        }
        b
    }

    /// `A = sum_i B_i^T B_i`, the (half) Hessian of `J`.
    pub fn half_hessian(&self) -> DMatrix<f64> {
        let dof = self.dof();
        let mut a = DMatrix::zeros(dof, dof);
        for r in &self.rows {
            a += r.jacobian.transpose() * &r.jacobian;
        }
        a
    }
}

/// `p x n` collapsed to the scalar z-component in 2D.
fn cross_2d(p: &DVector<f64>, n: &DVector<f64>) -> f64 {
    p[0] * n[1] - p[1] * n[0]
}

/// Point-to-point rows at the given matching: `d_i = p_i - q_{pi(i)}` and
/// `B_i = [S(p_i)  -I]` (2D: the single rotation column is `(p_y, -p_x)`),
/// where `p_i` is the source point displaced by the matching's transform.
pub fn build_p2p_system(
    source: &PointCloud,
    c: &Correspondences,
    target: &PointCloud,
) -> Result<LsSystem> {
    let dim = source.dim;
    if target.dim != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: target.dim,
        });
    }
    let mut rows = Vec::with_capacity(c.pairs.len());
    for pair in &c.pairs {
        let p = c.transform_used.displace(&source.points[pair.source]);
        let q = &target.points[pair.target];
        let residual = &p - q;
        let jacobian = match dim {
            2 => DMatrix::from_row_slice(2, 3, &[p[1], -1.0, 0.0, -p[0], 0.0, -1.0]),
            3 => {
                let s = skew(&Vector3::new(p[0], p[1], p[2]));
                let mut b = DMatrix::zeros(3, 6);
                for i in 0..3 {
                    for j in 0..3 {
                        b[(i, j)] = s[(i, j)];
                    }
                    b[(i, i + 3)] = -1.0;
                }
                b
            }
            d => return Err(Error::InvalidArgument(format!("unsupported dimension {d}"))),
        };
        rows.push(LsRow { residual, jacobian });
    }
    Ok(LsSystem {
        variant: Variant::PointToPoint,
        dim,
        rows,
    })
}

/// Point-to-plane rows at the given matching:
/// `d_i = n^T (p_i - q_{pi(i)})` and `B_i = [-(p_i x n)^T  -n^T]` with `n`
/// the target normal of the matched point.
pub fn build_p2plane_system(
    source: &PointCloud,
    c: &Correspondences,
    target: &PointCloud,
) -> Result<LsSystem> {
    let dim = source.dim;
    if target.dim != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: target.dim,
        });
    }
    let normals = target.normals.as_ref().ok_or(Error::MissingNormals)?;
    let mut rows = Vec::with_capacity(c.pairs.len());
    for pair in &c.pairs {
        let p = c.transform_used.displace(&source.points[pair.source]);
        let q = &target.points[pair.target];
        let n = &normals[pair.target];
        let d = n.dot(&(&p - q));
        let jacobian = match dim {
            2 => DMatrix::from_row_slice(1, 3, &[-cross_2d(&p, n), -n[0], -n[1]]),
            3 => {
                let pxn = Vector3::new(p[0], p[1], p[2]).cross(&Vector3::new(n[0], n[1], n[2]));
                DMatrix::from_row_slice(1, 6, &[-pxn.x, -pxn.y, -pxn.z, -n[0], -n[1], -n[2]])
            }
            d => return Err(Error::InvalidArgument(format!("unsupported dimension {d}"))),
        };
        rows.push(LsRow {
            residual: DVector::from_vec(vec![d]),
            jacobian,
        });
    }
    Ok(LsSystem {
        variant: Variant::PointToPlane,
        dim,
        rows,
    })
}

/// Default relative eigenvalue threshold for the numerical rank.
pub const RANK_TOL: f64 = 1e-9;

/// Symmetric eigen-analysis of the half Hessian `A`.
#[derive(Clone, Debug, PartialEq)]
pub struct HessianReport {
    pub hessian: DMatrix<f64>,
    /// Eigenvalues in descending order.
    pub eigenvalues: Vec<f64>,
    pub numerical_rank: usize,
    /// Orthonormal columns spanning the numerical null space.
    pub null_basis: DMatrix<f64>,
    /// Orthonormal columns spanning the observable complement, ordered by
    /// descending eigenvalue.
    pub observable_basis: DMatrix<f64>,
    /// Relative threshold that produced `numerical_rank`.
    pub rank_tolerance: f64,
}

/// Eigen-decomposition, numerical rank and null/observable bases of
/// `A = sum_i B_i^T B_i` with the default rank threshold.
pub fn hessian(sys: &LsSystem) -> Result<HessianReport> {
    hessian_with_tol(sys, RANK_TOL)
}

/// As [`hessian`] with an explicit relative rank threshold
/// (eigenvalues `> tol * lambda_max` count toward the rank).
pub fn hessian_with_tol(sys: &LsSystem, tol: f64) -> Result<HessianReport> {
    if sys.rows.is_empty() {
        return Err(Error::InsufficientData("empty least-squares system".into()));
    }
    let a = sys.half_hessian();
    let dof = sys.dof();
    let eig = nalgebra::SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..dof).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let scale = eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let rank = eigenvalues.iter().filter(|&&l| l > tol * scale).count();
    let mut vectors = DMatrix::zeros(dof, dof);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }
    Ok(HessianReport {
        hessian: a,
        observable_basis: vectors.columns(0, rank).into_owned(),
        null_basis: vectors.columns(rank, dof - rank).into_owned(),
        eigenvalues,
        numerical_rank: rank,
        rank_tolerance: tol,
    })
}

/// Solve the normal equations `A x = sum_i B_i^T d_i` on the full motion
/// space. Rank-deficient systems return [`Error::SingularSystem`] carrying
/// the null-space basis; see [`solve_ls_observable`] for the reduced solve.
pub fn solve_ls(sys: &LsSystem) -> Result<SmallMotion> {
    let report = hessian(sys)?;
    if report.numerical_rank < sys.dof() {
        return Err(Error::SingularSystem {
            null_basis: report.null_basis,
        });
    }
    solve_on_observable(sys, &report)
}

/// Minimum-norm solution restricted to the observable subspace, together
/// with the Hessian report that defines that subspace.
pub fn solve_ls_observable(sys: &LsSystem) -> Result<(SmallMotion, HessianReport)> {
    let report = hessian(sys)?;
    let x = solve_on_observable(sys, &report)?;
    Ok((x, report))
}

fn solve_on_observable(sys: &LsSystem, report: &HessianReport) -> Result<SmallMotion> {
    let rhs = sys.rhs();
    let k = report.numerical_rank;
    let mut x = DVector::zeros(sys.dof());
    for j in 0..k {
        let v = report.observable_basis.column(j);
        x += v * (v.dot(&rhs) / report.eigenvalues[j]);
    }
    SmallMotion::from_vector(sys.dim, &x)
}

/// Noise model a covariance estimate was computed under.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseSpec {
    /// Independent identically distributed rows, `E(w_i w_j^T) = s^2 I d_ij`.
    Iid { sigma: f64 },
    /// Caller-supplied row covariance function.
    Custom,
}

/// Covariance of the least-squares estimate on the observable subspace.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceEstimate {
    /// Covariance in the coordinates of `observable_basis`.
    pub reduced_covariance: DMatrix<f64>,
    pub observable_basis: DMatrix<f64>,
    pub sigma_model: NoiseSpec,
}

impl CovarianceEstimate {
    /// Covariance mapped back to full motion coordinates,
    /// `V C V^T` (zero on the null space).
    pub fn full_space(&self) -> DMatrix<f64> {
        &self.observable_basis * &self.reduced_covariance * self.observable_basis.transpose()
    }
}

/// `cov(x) = s^2 A^-1` restricted to the observable subspace: in the
/// eigenvector coordinates this is `diag(s^2 / lambda_j)`.
pub fn covariance_iid(report: &HessianReport, sigma: f64) -> Result<CovarianceEstimate> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sigma must be > 0, got {sigma}"
        )));
    }
    let k = report.numerical_rank;
    let mut c = DMatrix::zeros(k, k);
    for j in 0..k {
        c[(j, j)] = sigma * sigma / report.eigenvalues[j];
    }
    Ok(CovarianceEstimate {
        reduced_covariance: c,
        observable_basis: report.observable_basis.clone(),
        sigma_model: NoiseSpec::Iid { sigma },
    })
}

/// General sandwich covariance
/// `A^-1 (sum_ij B_i^T E(w_i w_j^T) B_j) A^-1` evaluated on the observable
/// subspace. `noise_cov(i, j)` must return the residual-space block
/// `E(w_i w_j^T)` (1x1 for point-to-plane rows, dim x dim for
/// point-to-point).
pub fn covariance_general<F>(sys: &LsSystem, noise_cov: F) -> Result<CovarianceEstimate>
where
    F: Fn(usize, usize) -> DMatrix<f64>,
{
    let report = hessian(sys)?;
    let dof = sys.dof();
    let n = sys.rows.len();
    let mut m = DMatrix::zeros(dof, dof);
    for i in 0..n {
        for j in 0..n {
            let e = noise_cov(i, j);
            let rdim = sys.rows[i].residual.len();
            if e.nrows() != rdim || e.ncols() != sys.rows[j].residual.len() {
                return Err(Error::InvalidArgument(format!(
                    "noise covariance block ({i},{j}) has shape {}x{}, expected {}x{}",
                    e.nrows(),
                    e.ncols(),
                    rdim,
                    sys.rows[j].residual.len()
                )));
            }
            if e == DMatrix::zeros(e.nrows(), e.ncols()) {
                continue;
            }
            m += sys.rows[i].jacobian.transpose() * e * &sys.rows[j].jacobian;
        }
    }
    let k = report.numerical_rank;
    let m_obs = report.observable_basis.transpose() * m * &report.observable_basis;
    let mut c = DMatrix::zeros(k, k);
    for r in 0..k {
        for s in 0..k {
            c[(r, s)] = m_obs[(r, s)] / (report.eigenvalues[r] * report.eigenvalues[s]);
        }
    }
    Ok(CovarianceEstimate {
        reduced_covariance: c,
        observable_basis: report.observable_basis.clone(),
        sigma_model: NoiseSpec::Custom,
    })
}

/// Largest principal angle (radians) between the column spaces of two
/// matrices with orthonormal columns of equal count.
pub fn subspace_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() != b.nrows() || a.ncols() != b.ncols() {
        return Err(Error::BasisMismatch(format!(
            "{}x{} vs {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    if a.ncols() == 0 {
        return Ok(0.0);
    }
    let m = a.transpose() * b;
    let svd = m.svd(false, false);
    let smin = svd
        .singular_values
        .iter()
        .fold(f64::INFINITY, |m, &s| m.min(s));
    Ok(smin.clamp(-1.0, 1.0).acos())
}
