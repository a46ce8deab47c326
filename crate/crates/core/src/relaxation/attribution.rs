use nalgebra::Matrix3;
use serde::Serialize;

use super::RelaxationTensor;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeShare {
    /// 0-based position in the mode set.
    pub index: usize,
    pub label: usize,
    pub frequency: f64,
    /// Tr of this mode's part of the tensor, cm⁻¹.
    pub trace: f64,
    /// |Λ_q,αα′| / Σ_q |Λ_q,αα′| per component, 0 where the column is empty.
    #[serde(serialize_with = "super::report::ser_rows")]
    pub share: Matrix3<f64>,
    /// Share of Σ_q |Tr Λ_q|.
    pub trace_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Attribution {
    pub first: Vec<ModeShare>,
    pub second: Vec<ModeShare>,
}

fn table(parts: &[Matrix3<f64>], labels: &[usize], freqs: &[f64], top: Option<usize>) -> Vec<ModeShare> {
    let mut denom = Matrix3::zeros();
    let mut trace_denom = 0.0;
    for p in parts {
        denom += p.abs();
        trace_denom += p.trace().abs();
    }
    let mut rows: Vec<ModeShare> = parts
        .iter()
        .enumerate()
        .map(|(q, p)| ModeShare {
            index: q,
            label: labels[q],
            frequency: freqs[q],
            trace: p.trace(),
            share: p.abs().zip_map(&denom, |a, d| if d > 0.0 { a / d } else { 0.0 }),
            trace_share: if trace_denom > 0.0 { p.trace().abs() / trace_denom } else { 0.0 },
        })
        .collect();
    rows.sort_by(|a, b| b.trace.abs().total_cmp(&a.trace.abs()).then(a.index.cmp(&b.index)));
    if let Some(m) = top {
        rows.truncate(m);
    }
    rows
}

/// Rank modes by the trace of their contribution, separately for first and
/// second order. Shares are computed over all modes before truncating to
/// `top`.
pub fn mode_attribution(t: &RelaxationTensor, labels: &[usize], frequencies: &[f64], top: Option<usize>) -> Attribution {
    let second: Vec<Matrix3<f64>> = (0..t.second.per_mode_g2.len()).map(|q| t.second.per_mode(q)).collect();
    Attribution {
        first: table(&t.first.per_mode, labels, frequencies, top),
        second: table(&second, labels, frequencies, top),
    }
}
