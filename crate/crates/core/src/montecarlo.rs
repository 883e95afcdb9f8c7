//! Monte Carlo validation of the closed-form covariances: repeated noisy
//! trials, empirical dispersion of the estimates, and comparison metrics.
//!
//! Trials are embarrassingly parallel. Each trial derives its own noise seed
//! from the master seed through SplitMix64, so results are bit-identical
//! regardless of worker count or scheduling.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::CovarianceEstimate;
use crate::error::{Error, Result};
use crate::geometry::{exp_motion, small_motion_between, RigidTransform, SmallMotion};
use crate::icp::{run_icp, solve_point_to_plane_step, IcpConfig};
use crate::matching::nearest_neighbor_match;
use crate::scenes::{add_noise, NoiseModel, PointCloud};

/// The estimator exercised per trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Estimator {
    /// Match at identity, solve the linearized point-to-plane system once.
    PointToPlaneSingleStep,
    /// Full ICP with the embedded configuration.
    Icp(IcpConfig),
}

/// One Monte Carlo experiment: a reference scene, a true motion, a noise
/// model whose seed acts as the master seed, and an estimator.
#[derive(Clone, Debug)]
pub struct TrialConfig {
    /// Reference cloud; the target is this cloud moved by `true_motion`.
    pub cloud: PointCloud,
    pub true_motion: SmallMotion,
    pub noise: NoiseModel,
    pub trials: usize,
    pub estimator: Estimator,
    /// Also perturb the target cloud (default: source only).
    pub noise_on_target: bool,
}

/// Estimate errors and bookkeeping from a batch of trials.
#[derive(Clone, Debug)]
pub struct TrialsOutcome {
    /// Per-trial estimate error `dx` in full motion coordinates.
    pub errors: Vec<SmallMotion>,
    pub failures: usize,
    /// Mean fraction of matched pairs whose target index differs from the
    /// source index (the aligned matching on these scenes is the identity).
    pub rematch_rate: f64,
}

/// SplitMix64 finalizer, the seed-derivation step.
fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Noise seed for trial `t` under a master seed: `splitmix64(master ^
/// splitmix64(t))`. Trials draw from disjoint streams in any execution
/// order.
pub fn trial_seed(master: u64, trial: usize) -> u64 {
    splitmix64(master ^ splitmix64(trial as u64))
}

struct TrialResult {
    error: SmallMotion,
    rematched: usize,
    pairs: usize,
}

/// Run the configured number of noisy trials and collect estimate errors.
/// Deterministic for a fixed master seed. Fails when more than 1% of trials
/// fail, otherwise failed trials are excluded and counted.
pub fn run_trials(cfg: &TrialConfig) -> Result<TrialsOutcome> {
    if cfg.trials < 2 {
        return Err(Error::InvalidArgument("need at least 2 trials".into()));
    }
    if cfg.cloud.dim != cfg.true_motion.dim() {
        return Err(Error::DimensionMismatch {
            expected: cfg.cloud.dim,
            got: cfg.true_motion.dim(),
        });
    }
    let truth = exp_motion(&cfg.true_motion);
    let target_clean = cfg.cloud.transformed(&truth);

    let results: Vec<std::result::Result<TrialResult, String>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let seed = trial_seed(cfg.noise.seed, t);
            let source = add_noise(&cfg.cloud, &NoiseModel { seed, ..cfg.noise });
            let target = if cfg.noise_on_target {
                add_noise(
                    &target_clean,
                    &NoiseModel {
                        seed: splitmix64(seed ^ 0xA5A5_A5A5_A5A5_A5A5),
                        ..cfg.noise
                    },
                )
            } else {
                target_clean.clone()
            };
            run_one_trial(cfg, &source, &target, &truth).map_err(|e| e.to_string())
        })
        .collect();

    let total = results.len();
    let mut errors = Vec::with_capacity(total);
    let mut failures = 0;
    let mut rematched = 0usize;
    let mut pairs = 0usize;
    for r in results {
        match r {
            Ok(tr) => {
                errors.push(tr.error);
                rematched += tr.rematched;
                pairs += tr.pairs;
            }
            Err(_) => failures += 1,
        }
    }
    if failures * 100 > total {
        return Err(Error::TrialFailures {
            failed: failures,
            total,
        });
    }
    Ok(TrialsOutcome {
        errors,
        failures,
        rematch_rate: if pairs == 0 {
            0.0
        } else {
            rematched as f64 / pairs as f64
        },
    })
}

fn run_one_trial(
    cfg: &TrialConfig,
    source: &PointCloud,
    target: &PointCloud,
    truth: &RigidTransform,
) -> Result<TrialResult> {
    match &cfg.estimator {
        Estimator::PointToPlaneSingleStep => {
            let c = nearest_neighbor_match(source, target, &RigidTransform::identity(source.dim))?;
            let rematched = c.pairs.iter().filter(|p| p.target != p.source).count();
            let pairs = c.pairs.len();
            let x_hat = solve_point_to_plane_step(&c, source, target)?;
            Ok(TrialResult {
                error: x_hat.sub(&cfg.true_motion)?,
                rematched,
                pairs,
            })
        }
        Estimator::Icp(icp_cfg) => {
            let result = run_icp(source, target, icp_cfg, &RigidTransform::identity(source.dim))?;
            let rematched = result
                .final_matching
                .pairs
                .iter()
                .filter(|p| p.target != p.source)
                .count();
            let pairs = result.final_matching.pairs.len();
            Ok(TrialResult {
                error: small_motion_between(&result.estimate, truth),
                rematched,
                pairs,
            })
        }
    }
}

/// Unbiased sample covariance of the errors projected onto `basis`
/// (columns = subspace directions; pass an identity-like basis for full
/// coordinates).
pub fn empirical_covariance(errors: &[SmallMotion], basis: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if errors.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 estimates, got {}",
            errors.len()
        )));
    }
    let dof = errors[0].dof();
    if basis.nrows() != dof {
        return Err(Error::BasisMismatch(format!(
            "basis has {} rows, motion has {} coordinates",
            basis.nrows(),
            dof
        )));
    }
    let k = basis.ncols();
    let projected: Vec<DVector<f64>> = errors
        .iter()
        .map(|e| basis.transpose() * e.to_vector())
        .collect();
    let mut mean = DVector::zeros(k);
    for y in &projected {
        mean += y;
    }
    mean /= projected.len() as f64;
    let mut cov = DMatrix::zeros(k, k);
    for y in &projected {
        let d = y - &mean;
        cov += &d * d.transpose();
    }
    cov /= (projected.len() - 1) as f64;
    Ok(cov)
}

/// Empirical vs closed-form covariance on a common observable subspace.
#[derive(Clone, Debug)]
pub struct CovComparison {
    pub empirical: DMatrix<f64>,
    pub closed_form: DMatrix<f64>,
    /// `|E - C|_F / |C|_F`.
    pub frobenius_rel_error: f64,
    /// Per closed-form eigendirection variance ratios `v^T E v / v^T C v`.
    pub eigenvalue_ratios: Vec<f64>,
}

/// Compare an empirical covariance (already projected to
/// `closed_form.observable_basis` coordinates) against the closed form.
pub fn compare_cov(
    empirical: &DMatrix<f64>,
    closed_form: &CovarianceEstimate,
) -> Result<CovComparison> {
    let c = &closed_form.reduced_covariance;
    if empirical.nrows() != c.nrows() || empirical.ncols() != c.ncols() {
        return Err(Error::BasisMismatch(format!(
            "empirical is {}x{}, closed form is {}x{}",
            empirical.nrows(),
            empirical.ncols(),
            c.nrows(),
            c.ncols()
        )));
    }
    let eig = nalgebra::SymmetricEigen::new(c.clone());
    let mut ratios = Vec::with_capacity(c.nrows());
    for j in 0..c.ncols() {
        let v = eig.eigenvectors.column(j);
        let denom = (v.transpose() * c * v)[(0, 0)];
        let numer = (v.transpose() * empirical * v)[(0, 0)];
        if denom != 0.0 {
            ratios.push(numer / denom);
        }
    }
    Ok(CovComparison {
        empirical: empirical.clone(),
        closed_form: c.clone(),
        frobenius_rel_error: (empirical - c).norm() / c.norm(),
        eigenvalue_ratios: ratios,
    })
}
