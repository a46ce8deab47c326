use nalgebra::{Matrix3, Vector3};

use super::lindblad::precession;
use super::propagate::{bloch_generator, propagate, IntegratorOptions};
use super::{pauli, DensityMatrix, Operator, SpinTrajectory, TimeGrid, C64};
use crate::couplings::CouplingTensors;
use crate::physics::{bose_occupation, BathSpec, SpinSystem, KB_CM_PER_K};
use crate::relaxation::lorentzian;
use crate::{Error, Result};

/// Bath noise spectrum S_αβ(ω) for coupling operators σ_α, cm⁻¹. Positive ω
/// is energy handed from the spin to the bath.
pub trait SpectralDensity {
    fn at(&self, omega: f64) -> Matrix3<f64>;
}

/// Frequency-independent spectrum; the Redfield generator then reduces to
/// the Pauli-basis Lindblad dissipator with the same tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatSpectrum(pub Matrix3<f64>);

impl SpectralDensity for FlatSpectrum {
    fn at(&self, _omega: f64) -> Matrix3<f64> {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Mode {
    omega: f64,
    /// one-phonon half-width γ_q/2
    half_width: f64,
    linewidth: f64,
    coth: f64,
    g: Vector3<f64>,
    quartic: Vector3<f64>,
    g2: Vector3<f64>,
}

/// Phonon spectrum with a one-phonon Lorentzian around each ω_q and a
/// two-phonon Lorentzian around each 2ω_q, weighted by detailed balance
/// 2/(1 + e^(−ω/kT)).
///
/// The one-phonon line has half-width γ_q/2, so at ω = 0 its weight equals
/// the direct rate Γ_q. The two-phonon line carries the same couplings and
/// width as the diagonal Λ⁽²⁾, so at ω = Ω the symmetrized spectrum
/// reproduces it. Only diagonal second-order couplings enter.
#[derive(Debug, Clone, PartialEq)]
pub struct PhononSpectrum {
    modes: Vec<Mode>,
    kt: f64,
}

impl PhononSpectrum {
    pub fn new(c: &CouplingTensors, bath: &BathSpec, spin: &SpinSystem) -> Result<Self> {
        bath.validate()?;
        spin.validate()?;
        if let Some(dir) = spin.field_direction() {
            if (dir - c.field_vector()).amax() > 1e-9 {
                return Err(Error::Invalid("couplings were assembled for a different field direction".into()));
            }
        }
        let scale = spin.coupling_scale();
        let modes = (0..c.len())
            .map(|q| {
                let w = c.frequencies[q];
                let n = bose_occupation(w, bath.temperature)?;
                let g: Vector3<f64> = c.d1.fixed_view::<3, 1>(0, q) * scale;
                Ok(Mode {
                    omega: w,
                    half_width: 0.5 * bath.gamma.get(q),
                    linewidth: bath.linewidth.get(q),
                    coth: 2.0 * n + 1.0,
                    g,
                    quartic: g.map(|x| (x / w).powi(2)),
                    g2: Vector3::new(c.d2[0][(q, q)], c.d2[1][(q, q)], c.d2[2][(q, q)]) * scale,
                })
            })
            .collect::<Result<_>>()?;
        Ok(PhononSpectrum {
            modes,
            kt: KB_CM_PER_K * bath.temperature,
        })
    }

    fn balance(&self, omega: f64) -> f64 {
        if self.kt == 0.0 {
            return if omega > 0.0 {
                2.0
            } else if omega < 0.0 {
                0.0
            } else {
                1.0
            };
        }
        2.0 / (1.0 + (-omega / self.kt).exp())
    }
}

impl SpectralDensity for PhononSpectrum {
    fn at(&self, omega: f64) -> Matrix3<f64> {
        let w = omega.abs();
        let mut s = Matrix3::zeros();
        for m in &self.modes {
            let h = m.half_width;
            let one = m.coth * h / ((w - m.omega).powi(2) + h * h);
            s += m.g * m.g.transpose() * one;
            let two = m.coth * m.coth * lorentzian(w - 2.0 * m.omega, m.linewidth);
            s += (m.quartic * m.quartic.transpose() + m.g2 * m.g2.transpose()) * two;
        }
        s * self.balance(omega)
    }
}

/// Transition-resolved parts of σ_α for H = (Ω/2)σz: index 0 is the ω = +Ω
/// (lowering) part, 1 the ω = 0 part, 2 the ω = −Ω (raising) part.
fn resolved(sigma: &Operator) -> [Operator; 3] {
    let z = C64::new(0.0, 0.0);
    let mut lower = Operator::from_element(z);
    let mut diag = Operator::from_element(z);
    let mut raise = Operator::from_element(z);
    lower[(1, 0)] = sigma[(1, 0)];
    diag[(0, 0)] = sigma[(0, 0)];
    diag[(1, 1)] = sigma[(1, 1)];
    raise[(0, 1)] = sigma[(0, 1)];
    [lower, diag, raise]
}

/// Bloch-Redfield right-hand side in cm⁻¹ with coupling operators σ_α,
/// no Lamb shift.
pub fn redfield_rhs(spectra: &[Matrix3<f64>; 3], omega: f64, secular: bool, rho: &Operator) -> Operator {
    let p = pauli();
    let sig = [p[1], p[2], p[3]];
    let parts = [resolved(&sig[0]), resolved(&sig[1]), resolved(&sig[2])];
    let half = C64::from(0.5);
    let mut out = precession(omega, rho);
    // at Ω = 0 all transitions share one frequency and nothing is secular-dropped
    if secular && omega != 0.0 {
        for (w, s) in spectra.iter().enumerate() {
            for a in 0..3 {
                let aa = parts[a][w].adjoint();
                for b in 0..3 {
                    let c = C64::from(s[(a, b)]);
                    let ab = parts[b][w];
                    let anti = aa * ab;
                    out += (ab * rho * aa - (anti * rho + rho * anti) * half) * c;
                }
            }
        }
    } else {
        for a in 0..3 {
            let mut ba = Operator::from_element(C64::new(0.0, 0.0));
            for (w, s) in spectra.iter().enumerate() {
                for b in 0..3 {
                    ba += parts[b][w] * C64::from(s[(a, b)]);
                }
            }
            let sa = sig[a];
            let x = ba * rho;
            let y = rho * ba.adjoint();
            out += ((x * sa - sa * x) + (sa * y - y * sa)) * half;
        }
    }
    out
}

pub fn redfield_evolve_with(
    rho0: &DensityMatrix,
    spectrum: &dyn SpectralDensity,
    omega: f64,
    grid: &TimeGrid,
    secular: bool,
    opts: IntegratorOptions,
) -> Result<SpinTrajectory> {
    let spectra = [spectrum.at(omega), spectrum.at(0.0), spectrum.at(-omega)];
    for s in &spectra {
        if !s.iter().all(|v| v.is_finite()) {
            return Err(Error::Invalid("spectral density is not finite".into()));
        }
    }
    let l = bloch_generator(|r| redfield_rhs(&spectra, omega, secular, r))?;
    propagate(rho0, &l, grid, opts)
}

pub fn redfield_evolve(
    rho0: &DensityMatrix,
    c: &CouplingTensors,
    bath: &BathSpec,
    spin: &SpinSystem,
    grid: &TimeGrid,
    secular: bool,
    opts: IntegratorOptions,
) -> Result<SpinTrajectory> {
    let s = PhononSpectrum::new(c, bath, spin)?;
    redfield_evolve_with(rho0, &s, spin.larmor(), grid, secular, opts)
}
