//! Interchange formats: cloud JSON/CSV and JSON report payloads.
//!
//! Cloud JSON is `{dim, points, normals|null, abscissae|null,
//! curvature_bound|null}`. JSON numbers use the shortest representation that
//! parses back to the identical f64, and CSV cells are printed with 17
//! significant digits, so both round trips are lossless. The CSV form is one
//! point per row with a header naming the columns; it carries points,
//! normals and abscissae but not the scalar curvature bound (use JSON for
//! full fidelity).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::covariance::{CovarianceEstimate, HessianReport, NoiseSpec};
use crate::error::{Error, Result};
use crate::geometry::RigidTransform;
use crate::icp::IcpResult;
use crate::landscape::{LandscapeSample, TaylorBoundReport};
use crate::scenes::PointCloud;

/// 17 significant digits: enough to reproduce any f64 exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Serialize, Deserialize)]
struct CloudJson {
    dim: usize,
    points: Vec<Vec<f64>>,
    normals: Option<Vec<Vec<f64>>>,
    abscissae: Option<Vec<f64>>,
    curvature_bound: Option<f64>,
}

fn vecs(rows: &[DVector<f64>]) -> Vec<Vec<f64>> {
    rows.iter().map(|r| r.as_slice().to_vec()).collect()
}

fn dvectors(rows: Vec<Vec<f64>>) -> Vec<DVector<f64>> {
    rows.into_iter().map(DVector::from_vec).collect()
}

pub fn cloud_to_json(cloud: &PointCloud) -> String {
    let doc = CloudJson {
        dim: cloud.dim,
        points: vecs(&cloud.points),
        normals: cloud.normals.as_ref().map(|ns| vecs(ns)),
        abscissae: cloud.abscissae.clone(),
        curvature_bound: cloud.curvature_bound,
    };
    serde_json::to_string_pretty(&doc).expect("cloud serialization cannot fail")
}

pub fn cloud_from_json(text: &str) -> Result<PointCloud> {
    let doc: CloudJson =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("cloud JSON: {e}")))?;
    PointCloud::new(
        doc.dim,
        dvectors(doc.points),
        doc.normals.map(dvectors),
        doc.abscissae,
        doc.curvature_bound,
    )
}

pub fn cloud_to_csv(cloud: &PointCloud) -> String {
    let dim = cloud.dim;
    let mut header: Vec<&str> = if dim == 2 {
        vec!["x", "y"]
    } else {
        vec!["x", "y", "z"]
    };
    if cloud.normals.is_some() {
        header.extend(if dim == 2 {
            vec!["nx", "ny"]
        } else {
            vec!["nx", "ny", "nz"]
        });
    }
    if cloud.abscissae.is_some() {
        header.push("s");
    }
    let mut out = header.join(",");
    out.push('\n');
    for (i, p) in cloud.points.iter().enumerate() {
        let mut cells: Vec<String> = p.iter().map(|&v| fmt_f64(v)).collect();
        if let Some(ns) = &cloud.normals {
            cells.extend(ns[i].iter().map(|&v| fmt_f64(v)));
        }
        if let Some(s) = &cloud.abscissae {
            cells.push(fmt_f64(s[i]));
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn cloud_from_csv(text: &str) -> Result<PointCloud> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty CSV".into()))?;
    let cols: Vec<&str> = header.split(',').map(|c| c.trim()).collect();
    let dim = if cols.contains(&"z") { 3 } else { 2 };
    let has_normals = cols.contains(&"nx");
    let has_abscissae = cols.contains(&"s");
    let expected = dim + if has_normals { dim } else { 0 } + usize::from(has_abscissae);
    if cols.len() != expected {
        return Err(Error::Parse(format!(
            "unexpected CSV header '{header}' ({} columns, expected {expected})",
            cols.len()
        )));
    }
    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut abscissae = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let cells: Vec<f64> = line
            .split(',')
            .map(|c| {
                c.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("row {}: {e}", lineno + 2)))
            })
            .collect::<Result<_>>()?;
        if cells.len() != expected {
            return Err(Error::Parse(format!(
                "row {} has {} cells, expected {expected}",
                lineno + 2,
                cells.len()
            )));
        }
        points.push(DVector::from_column_slice(&cells[..dim]));
        if has_normals {
            normals.push(DVector::from_column_slice(&cells[dim..2 * dim]));
        }
        if has_abscissae {
            abscissae.push(cells[expected - 1]);
        }
    }
    PointCloud::new(
        dim,
        points,
        has_normals.then_some(normals),
        has_abscissae.then_some(abscissae),
        None,
    )
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Row-major nested-array form of a transform.
#[derive(Serialize, Deserialize)]
pub struct TransformJson {
    pub rotation: Vec<Vec<f64>>,
    pub translation: Vec<f64>,
}

impl TransformJson {
    pub fn of(t: &RigidTransform) -> Self {
        Self {
            rotation: matrix_rows(&t.rotation),
            translation: t.translation.as_slice().to_vec(),
        }
    }

    pub fn to_transform(&self) -> Result<RigidTransform> {
        let d = self.translation.len();
        if self.rotation.len() != d || self.rotation.iter().any(|r| r.len() != d) {
            return Err(Error::Parse("rotation shape mismatch".into()));
        }
        let mut m = DMatrix::zeros(d, d);
        for (i, row) in self.rotation.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        RigidTransform::new(m, DVector::from_column_slice(&self.translation))
    }
}

#[derive(Serialize, Deserialize)]
pub struct HessianReportJson {
    pub hessian: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub numerical_rank: usize,
    pub null_basis: Vec<Vec<f64>>,
    pub observable_basis: Vec<Vec<f64>>,
    pub rank_tolerance: f64,
}

impl HessianReportJson {
    pub fn of(r: &HessianReport) -> Self {
        Self {
            hessian: matrix_rows(&r.hessian),
            eigenvalues: r.eigenvalues.clone(),
            numerical_rank: r.numerical_rank,
            null_basis: matrix_rows(&r.null_basis),
            observable_basis: matrix_rows(&r.observable_basis),
            rank_tolerance: r.rank_tolerance,
        }
    }
}

#[derive(Serialize, Deserialize)]
pub struct CovarianceJson {
    pub reduced_covariance: Vec<Vec<f64>>,
    pub observable_basis: Vec<Vec<f64>>,
    pub sigma_model: NoiseSpec,
}

impl CovarianceJson {
    pub fn of(c: &CovarianceEstimate) -> Self {
        Self {
            reduced_covariance: matrix_rows(&c.reduced_covariance),
            observable_basis: matrix_rows(&c.observable_basis),
            sigma_model: c.sigma_model,
        }
    }
}

#[derive(Serialize, Deserialize)]
pub struct IcpResultJson {
    pub estimate: TransformJson,
    pub iterations: usize,
    pub converged: bool,
    pub cost_trace: Vec<f64>,
    pub pairs: Vec<(usize, usize, f64)>,
}

impl IcpResultJson {
    pub fn of(r: &IcpResult) -> Self {
        Self {
            estimate: TransformJson::of(&r.estimate),
            iterations: r.iterations,
            converged: r.converged,
            cost_trace: r.cost_trace.clone(),
            pairs: r
                .final_matching
                .pairs
                .iter()
                .map(|p| (p.source, p.target, p.dist_sq))
                .collect(),
        }
    }
}

/// Landscape CSV: motion coordinates (rotation block first), then the three
/// costs. Header names the columns per dimension.
pub fn landscape_to_csv(samples: &[LandscapeSample]) -> String {
    let mut out = String::new();
    if samples.is_empty() {
        return out;
    }
    let header = if samples[0].motion.dim() == 2 {
        "theta,tx,ty,true_cost,fixed_cost,quadratic_cost"
    } else {
        "wx,wy,wz,tx,ty,tz,true_cost,fixed_cost,quadratic_cost"
    };
    out.push_str(header);
    out.push('\n');
    for s in samples {
        let mut cells: Vec<String> = s.motion.to_vector().iter().map(|&v| fmt_f64(v)).collect();
        cells.push(fmt_f64(s.true_cost));
        cells.push(fmt_f64(s.fixed_cost));
        cells.push(fmt_f64(s.quadratic_cost));
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Per-point bound-check CSV.
pub fn taylor_report_to_csv(report: &TaylorBoundReport) -> String {
    let mut out = String::from(
        "index,matched,psi,psi_bound,abscissa_gap,lemma_bound,displacement_norm,condition_ok\n",
    );
    for p in &report.points {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            p.index,
            p.matched,
            fmt_f64(p.psi),
            fmt_f64(p.psi_bound),
            fmt_f64(p.abscissa_gap),
            fmt_f64(p.lemma_bound),
            fmt_f64(p.displacement_norm),
            p.condition_ok
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenes::{gen_arc_2d, gen_corner_3d};

    #[test]
    fn cloud_json_round_trip_is_bit_exact() {
        let arc = gen_arc_2d(1.0, 25, 1.7).unwrap();
        let back = cloud_from_json(&cloud_to_json(&arc)).unwrap();
        assert_eq!(arc, back);
        let corner = gen_corner_3d(9, 0.7).unwrap();
        let back = cloud_from_json(&cloud_to_json(&corner)).unwrap();
        assert_eq!(corner, back);
    }

    #[test]
    fn cloud_csv_round_trip_is_bit_exact_modulo_curvature() {
        let arc = gen_arc_2d(3.0, 12, 0.9).unwrap();
        let back = cloud_from_csv(&cloud_to_csv(&arc)).unwrap();
        assert_eq!(arc.points, back.points);
        assert_eq!(arc.normals, back.normals);
        assert_eq!(arc.abscissae, back.abscissae);
        assert_eq!(back.curvature_bound, None);
    }

    #[test]
    fn csv_rejects_malformed_input() {
        assert!(cloud_from_csv("").is_err());
        assert!(cloud_from_csv("x,y\n1.0\n").is_err());
        assert!(cloud_from_csv("x,y\n1.0,oops\n").is_err());
    }

    #[test]
    fn json_rejects_invalid_clouds() {
        // a non-unit normal must fail validation on load
        let text = r#"{"dim":2,"points":[[0.0,0.0]],"normals":[[0.0,2.0]],"abscissae":null,"curvature_bound":null}"#;
        assert!(cloud_from_json(text).is_err());
    }

    #[test]
    fn transform_json_round_trip() {
        let x = crate::geometry::SmallMotion::planar(0.3, 1.0, -2.0);
        let t = crate::geometry::exp_motion(&x);
        let json = serde_json::to_string(&TransformJson::of(&t)).unwrap();
        let parsed: TransformJson = serde_json::from_str(&json).unwrap();
        let back = parsed.to_transform().unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn fmt_f64_round_trips_extremes() {
        for v in [
            std::f64::consts::PI,
            1.0 / 3.0,
            6.02214076e23,
            -2.2250738585072014e-308,
        ] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
    }
}
