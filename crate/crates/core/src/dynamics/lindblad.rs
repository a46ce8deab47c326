use nalgebra::{Matrix3, SymmetricEigen};

use super::propagate::{bloch_generator, propagate, IntegratorOptions};
use super::{pauli, DensityMatrix, Operator, SpinTrajectory, TimeGrid, C64};
use crate::{Error, Result};

/// Pauli-basis dissipator Σ Λ_αα′(σ_α ρ σ_α′ − ½{σ_α′σ_α, ρ}) with
/// precession at Ω.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpBasisDissipator {
    /// cm⁻¹
    pub lambda: Matrix3<f64>,
    /// cm⁻¹
    pub omega: f64,
}

impl JumpBasisDissipator {
    pub fn new(lambda: Matrix3<f64>, omega: f64) -> Result<Self> {
        let scale = lambda.amax().max(f64::MIN_POSITIVE);
        if (lambda - lambda.transpose()).amax() > 1e-10 * scale {
            return Err(Error::Invalid("dissipator tensor is not symmetric".into()));
        }
        if !omega.is_finite() {
            return Err(Error::Invalid("omega must be finite".into()));
        }
        let min = SymmetricEigen::new((lambda + lambda.transpose()) * 0.5).eigenvalues.min();
        if min < -1e-10 * scale {
            return Err(Error::Invalid(format!("dissipator tensor is not positive semi-definite ({min:e})")));
        }
        Ok(JumpBasisDissipator { lambda, omega })
    }
}

pub(crate) fn precession(omega: f64, rho: &Operator) -> Operator {
    let sz = pauli()[3];
    (sz * rho - rho * sz) * C64::new(0.0, -0.5 * omega)
}

/// Right-hand side dρ/dt in cm⁻¹.
pub fn lindblad_rhs(d: &JumpBasisDissipator, rho: &Operator) -> Operator {
    let p = pauli();
    let mut out = precession(d.omega, rho);
    for a in 0..3 {
        for b in 0..3 {
            let c = d.lambda[(a, b)];
            if c == 0.0 {
                continue;
            }
            let (sa, sb) = (p[a + 1], p[b + 1]);
            let anti = sb * sa;
            out += (sa * rho * sb - (anti * rho + rho * anti) * C64::from(0.5)) * C64::from(c);
        }
    }
    out
}

pub fn lindblad_evolve(
    rho0: &DensityMatrix,
    d: &JumpBasisDissipator,
    grid: &TimeGrid,
    opts: IntegratorOptions,
) -> Result<SpinTrajectory> {
    let l = bloch_generator(|r| lindblad_rhs(d, r))?;
    propagate(rho0, &l, grid, opts)
}
