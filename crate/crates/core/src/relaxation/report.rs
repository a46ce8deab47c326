//! CSV and JSON exports. JSON matrices are row-major nested arrays; an
//! infinite time is written as `null`.

use nalgebra::{Matrix3, Vector3};
use serde::{Serialize, Serializer};

use super::{
    principal_relaxation_axes, relaxation_times, Attribution, Convention, RelaxationTensor, RelaxationTimes,
    SweepRow, TensorMeta,
};
use crate::Result;

pub fn mat_rows(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [
        [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
        [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
        [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
    ]
}

pub(crate) fn ser_rows<S: Serializer>(m: &Matrix3<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    mat_rows(m).serialize(s)
}

const UPPER: [(usize, usize, &str); 6] = [(0, 0, "xx"), (0, 1, "xy"), (0, 2, "xz"), (1, 1, "yy"), (1, 2, "yz"), (2, 2, "zz")];

/// Column order of [`sweep_csv`].
pub const SWEEP_COLUMNS: &[&str] = &[
    "temperature_k",
    "field_mt",
    "omega_cm",
    "lambda_xx",
    "lambda_xy",
    "lambda_xz",
    "lambda_yy",
    "lambda_yz",
    "lambda_zz",
    "lambda1_xx",
    "lambda1_xy",
    "lambda1_xz",
    "lambda1_yy",
    "lambda1_yz",
    "lambda1_zz",
    "lambda2_xx",
    "lambda2_xy",
    "lambda2_xz",
    "lambda2_yy",
    "lambda2_yz",
    "lambda2_zz",
    "inv_t1_cm",
    "inv_t2_cm",
    "t1_us",
    "t2_us",
];

/// One row per grid point; tensors in cm⁻¹, times for `convention`.
pub fn sweep_csv(rows: &[SweepRow], convention: Convention) -> Result<String> {
    debug_assert_eq!(SWEEP_COLUMNS.len(), 3 + 3 * UPPER.len() + 4);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_COLUMNS)?;
    for r in rows {
        let t = r.times(convention);
        let mut rec = vec![r.temperature, r.field_mt, r.omega];
        for m in [r.total(), r.lambda1, r.lambda2] {
            rec.extend(UPPER.iter().map(|&(i, j, _)| m[(i, j)]));
        }
        rec.extend([t.rate1, t.rate2, t.t1_us, t.t2_us]);
        w.write_record(rec.iter().map(|v| v.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| crate::Error::Invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Debug, Serialize)]
pub struct PerModeEntry {
    pub label: usize,
    pub frequency_cm: f64,
    pub lambda1: [[f64; 3]; 3],
    pub lambda2_quartic: [[f64; 3]; 3],
    pub lambda2_g2: [[f64; 3]; 3],
}

#[derive(Debug, Serialize)]
pub struct Principal {
    pub values: [f64; 3],
    /// Row k is the k-th axis.
    pub axes: [[f64; 3]; 3],
}

#[derive(Debug, Serialize)]
pub struct TensorReport {
    pub meta: TensorMeta,
    pub units: &'static str,
    pub lambda: [[f64; 3]; 3],
    pub lambda1: [[f64; 3]; 3],
    pub lambda2: [[f64; 3]; 3],
    pub lambda2_quartic: [[f64; 3]; 3],
    pub lambda2_g2: [[f64; 3]; 3],
    pub lambda2_g2_minus_quartic: [[f64; 3]; 3],
    pub lambda2_g2_fraction: f64,
    pub elastic_diagnostic: [f64; 3],
    pub principal: Principal,
    pub paper: RelaxationTimes,
    pub dissipator: RelaxationTimes,
    pub attribution: Attribution,
    pub per_mode: Vec<PerModeEntry>,
}

pub fn tensor_report(
    t: &RelaxationTensor,
    axis: &Vector3<f64>,
    labels: &[usize],
    frequencies: &[f64],
    attribution: Attribution,
) -> Result<TensorReport> {
    let total = t.total();
    let p = principal_relaxation_axes(&total)?;
    let axes = p.axes.transpose();
    Ok(TensorReport {
        meta: t.meta.clone(),
        units: "cm^-1 for tensors and rates, us for times",
        lambda: mat_rows(&total),
        lambda1: mat_rows(&t.lambda1()),
        lambda2: mat_rows(&t.lambda2()),
        lambda2_quartic: mat_rows(&t.second.quartic),
        lambda2_g2: mat_rows(&t.second.g2),
        lambda2_g2_minus_quartic: mat_rows(&t.second.g2_excess()),
        lambda2_g2_fraction: t.second.g2_fraction(),
        elastic_diagnostic: [t.second.elastic.x, t.second.elastic.y, t.second.elastic.z],
        principal: Principal {
            values: p.values,
            axes: mat_rows(&axes),
        },
        paper: relaxation_times(&total, axis, Convention::Paper)?,
        dissipator: relaxation_times(&total, axis, Convention::Dissipator)?,
        attribution,
        per_mode: (0..labels.len())
            .map(|q| PerModeEntry {
                label: labels[q],
                frequency_cm: frequencies[q],
                lambda1: mat_rows(&t.first.per_mode[q]),
                lambda2_quartic: mat_rows(&t.second.per_mode_quartic[q]),
                lambda2_g2: mat_rows(&t.second.per_mode_g2[q]),
            })
            .collect(),
    })
}
