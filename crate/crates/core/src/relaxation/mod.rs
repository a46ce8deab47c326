//! Relaxation tensors Λ = Λ⁽¹⁾ + Λ⁽²⁾ in the Pauli basis, with per-mode
//! parts, T1/T2 projections, mode attribution and grid sweeps.
//!
//! All couplings entering here are field-scaled: G = μB·|B|·d1 and
//! G2 = μB·|B|·d2, in cm⁻¹. Tensors are in cm⁻¹.

mod attribution;
mod report;
mod sweep;
mod times;

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;

use crate::couplings::CouplingTensors;
use crate::physics::{bose_occupation, BathSpec, RamanPairing, SpinSystem};
use crate::{Error, Result};

pub use attribution::{mode_attribution, Attribution, ModeShare};
pub use report::{mat_rows, sweep_csv, tensor_report, TensorReport, SWEEP_COLUMNS};
pub use sweep::{sweep, SweepGrid, SweepRow};
pub use times::{principal_relaxation_axes, relaxation_times, Convention, PrincipalAxes, RelaxationTimes};

/// Γ_q = 4γ/(γ² + 4ω²)·(n + ½), cm⁻¹.
pub fn direct_rate(gamma: f64, omega: f64, n: f64) -> Result<f64> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Domain(format!("gamma must be > 0, got {gamma}")));
    }
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::Domain(format!("mode frequency must be > 0, got {omega}")));
    }
    if !(n >= 0.0) || !n.is_finite() {
        return Err(Error::Domain(format!("occupation must be >= 0, got {n}")));
    }
    Ok(4.0 * gamma / (gamma * gamma + 4.0 * omega * omega) * (n + 0.5))
}

/// Normalized Lorentzian: δ(x) regularized with half-width `w`.
pub fn lorentzian(x: f64, w: f64) -> f64 {
    w / (PI * (x * x + w * w))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorMeta {
    /// K
    pub temperature: f64,
    pub field_mt: [f64; 3],
    /// Ω, cm⁻¹
    pub omega: f64,
    /// μB·|B|, cm⁻¹
    pub coupling_scale: f64,
    pub pairing: RamanPairing,
    pub gamma: Vec<f64>,
    pub linewidth: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrder {
    pub total: Matrix3<f64>,
    pub per_mode: Vec<Matrix3<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrder {
    /// (G/ω)²(G/ω)² part.
    pub quartic: Matrix3<f64>,
    /// G2·G2 part.
    pub g2: Matrix3<f64>,
    pub per_mode_quartic: Vec<Matrix3<f64>>,
    pub per_mode_g2: Vec<Matrix3<f64>>,
    /// Elastic Σ_q (G2_αqq)²(2n+1)²·λ/(Ω² + λ²) per component α. Diagnostic
    /// only, not part of Λ.
    pub elastic: Vector3<f64>,
}

impl SecondOrder {
    pub fn total(&self) -> Matrix3<f64> {
        self.quartic + self.g2
    }

    pub fn per_mode(&self, q: usize) -> Matrix3<f64> {
        self.per_mode_quartic[q] + self.per_mode_g2[q]
    }

    /// G2 part minus quartic part.
    pub fn g2_excess(&self) -> Matrix3<f64> {
        self.g2 - self.quartic
    }

    /// Tr(G2 part) / Tr(Λ⁽²⁾), 0 for an empty tensor.
    pub fn g2_fraction(&self) -> f64 {
        let t = self.total().trace();
        if t == 0.0 {
            0.0
        } else {
            self.g2.trace() / t
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationTensor {
    pub first: FirstOrder,
    pub second: SecondOrder,
    pub meta: TensorMeta,
}

impl RelaxationTensor {
    pub fn lambda1(&self) -> Matrix3<f64> {
        self.first.total
    }

    pub fn lambda2(&self) -> Matrix3<f64> {
        self.second.total()
    }

    pub fn total(&self) -> Matrix3<f64> {
        self.lambda1() + self.lambda2()
    }
}

/// Field scale for couplings assembled along `c.field_direction`.
fn coupling_scale(c: &CouplingTensors, spin: &SpinSystem) -> Result<f64> {
    spin.validate()?;
    if let Some(dir) = spin.field_direction() {
        if (dir - c.field_vector()).amax() > 1e-9 {
            return Err(Error::Invalid(format!(
                "couplings were assembled for field direction {:?}, spin field points along [{}, {}, {}]",
                c.field_direction, dir.x, dir.y, dir.z
            )));
        }
    }
    Ok(spin.coupling_scale())
}

fn occupations(c: &CouplingTensors, bath: &BathSpec) -> Result<Vec<f64>> {
    c.frequencies.iter().map(|&w| bose_occupation(w, bath.temperature)).collect()
}

fn sum(ms: &[Matrix3<f64>]) -> Matrix3<f64> {
    ms.iter().fold(Matrix3::zeros(), |acc, m| acc + m)
}

/// Λ⁽¹⁾ = Σ_q Γ_q G_q G_qᵀ.
pub fn lambda_first(c: &CouplingTensors, bath: &BathSpec, spin: &SpinSystem) -> Result<FirstOrder> {
    bath.validate()?;
    let scale = coupling_scale(c, spin)?;
    let n = occupations(c, bath)?;
    let per_mode = (0..c.len())
        .map(|q| {
            let gamma = direct_rate(bath.gamma.get(q), c.frequencies[q], n[q])?;
            let g: Vector3<f64> = c.d1.fixed_view::<3, 1>(0, q) * scale;
            Ok(g * g.transpose() * gamma)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FirstOrder {
        total: sum(&per_mode),
        per_mode,
    })
}

/// Two-phonon tensor. The quartic part always uses the single-mode resonance
/// (2n+1)²·L(Ω − 2ω_q). The G2 part uses the same single-mode form in
/// `diagonal_only` mode and, in `all_pairs` mode, the four combination
/// resonances over ordered mode pairs with width (λ_q + λ_q′)/2; each pair
/// term is credited half to each of its modes.
pub fn lambda_second(c: &CouplingTensors, bath: &BathSpec, spin: &SpinSystem) -> Result<SecondOrder> {
    bath.validate()?;
    let scale = coupling_scale(c, spin)?;
    let omega = spin.larmor();
    let n = occupations(c, bath)?;
    let nm = c.len();
    let g2 = |q: usize, q2: usize| Vector3::new(c.d2[0][(q, q2)], c.d2[1][(q, q2)], c.d2[2][(q, q2)]) * scale;

    let mut per_mode_quartic = Vec::with_capacity(nm);
    let mut per_mode_g2 = Vec::with_capacity(nm);
    let mut elastic = Vector3::zeros();
    for q in 0..nm {
        let w = c.frequencies[q];
        let lw = bath.linewidth.get(q);
        let thermal = (2.0 * n[q] + 1.0).powi(2);
        let weight = thermal * lorentzian(omega - 2.0 * w, lw);
        let g: Vector3<f64> = c.d1.fixed_view::<3, 1>(0, q) * scale;
        let u = g.map(|x| (x / w).powi(2));
        per_mode_quartic.push(u * u.transpose() * weight);

        let v = g2(q, q);
        elastic += v.map(|x| x * x) * (thermal * lw / (omega * omega + lw * lw));
        match bath.raman_pairing {
            RamanPairing::DiagonalOnly => per_mode_g2.push(v * v.transpose() * weight),
            RamanPairing::AllPairs => {
                let mut acc = Matrix3::zeros();
                for q2 in 0..nm {
                    if !c.mixed_computed(q, q2) {
                        continue;
                    }
                    let w2 = c.frequencies[q2];
                    let width = 0.5 * (lw + bath.linewidth.get(q2));
                    let (a, b) = (n[q], n[q2]);
                    let weight = lorentzian(omega - w - w2, width) * a * b
                        + lorentzian(omega + w + w2, width) * (a + 1.0) * (b + 1.0)
                        + lorentzian(omega + w - w2, width) * (a + 1.0) * b
                        + lorentzian(omega - w + w2, width) * a * (b + 1.0);
                    let v = g2(q, q2);
                    // ordered pairs (q, q2) and (q2, q) are equal; each mode takes half of both
                    acc += v * v.transpose() * (0.25 * weight);
                }
                per_mode_g2.push(acc);
            }
        }
    }
    Ok(SecondOrder {
        quartic: sum(&per_mode_quartic),
        g2: sum(&per_mode_g2),
        per_mode_quartic,
        per_mode_g2,
        elastic,
    })
}

pub fn relaxation_tensor(c: &CouplingTensors, bath: &BathSpec, spin: &SpinSystem) -> Result<RelaxationTensor> {
    let first = lambda_first(c, bath, spin)?;
    let second = lambda_second(c, bath, spin)?;
    Ok(RelaxationTensor {
        first,
        second,
        meta: TensorMeta {
            temperature: bath.temperature,
            field_mt: spin.field_mt,
            omega: spin.larmor(),
            coupling_scale: spin.coupling_scale(),
            pairing: bath.raman_pairing,
            gamma: (0..c.len()).map(|q| bath.gamma.get(q)).collect(),
            linewidth: (0..c.len()).map(|q| bath.linewidth.get(q)).collect(),
        },
    })
}

#[cfg(test)]
mod tests;
