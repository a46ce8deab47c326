//! Time-domain evolution of the two-level density matrix.
//!
//! Both generators are linear and trace preserving, so they are realized as a
//! real 4×4 affine map on (1, ⟨σx⟩, ⟨σy⟩, ⟨σz⟩). Each generator is built by
//! applying its operator form to the Pauli basis; the fixed-step RK4 map is
//! then raised to the number of substeps in each sample interval. Time is in
//! μs, frequencies and rates in cm⁻¹ as elsewhere.

mod fit;
mod lindblad;
mod propagate;
mod redfield;

use std::fmt::Write as _;

use nalgebra::{Complex, Matrix2, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use fit::{fit_decay_rate, fit_exponential, FitOptions, FitResult};
pub use lindblad::{lindblad_evolve, lindblad_rhs, JumpBasisDissipator};
pub use propagate::{bloch_generator, propagate, IntegratorOptions, Propagator};
pub use redfield::{
    redfield_evolve, redfield_evolve_with, redfield_rhs, FlatSpectrum, PhononSpectrum, SpectralDensity,
};

pub type C64 = Complex<f64>;
pub type Operator = Matrix2<C64>;

pub(crate) fn pauli() -> [Operator; 4] {
    let o = C64::new(0.0, 0.0);
    let l = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    [
        Matrix2::new(l, o, o, l),
        Matrix2::new(o, l, l, o),
        Matrix2::new(o, -i, i, o),
        Matrix2::new(l, o, o, -l),
    ]
}

/// 2×2 density matrix. Index 0 is the σz = +1 (upper Zeeman) state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix(pub Operator);

impl DensityMatrix {
    pub fn new(m: Operator) -> Result<Self> {
        let herm = (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if herm > 1e-12 {
            return Err(Error::Invalid(format!("density matrix not Hermitian (deviation {herm:e})")));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > 1e-12 || tr.im.abs() > 1e-12 {
            return Err(Error::Invalid(format!("density matrix trace is {tr}, expected 1")));
        }
        let d = DensityMatrix(m);
        let min = d.min_eigenvalue();
        if min < -1e-10 {
            return Err(Error::Invalid(format!("density matrix has negative eigenvalue {min:e}")));
        }
        Ok(d)
    }

    /// ρ = ½(I + r·σ).
    pub fn from_bloch(r: Vector3<f64>) -> Result<Self> {
        if r.norm() > 1.0 + 1e-10 {
            return Err(Error::Invalid(format!("Bloch vector length {} exceeds 1", r.norm())));
        }
        Ok(DensityMatrix(bloch_to_operator(&r)))
    }

    pub fn excited() -> Self {
        DensityMatrix(bloch_to_operator(&Vector3::z()))
    }

    pub fn ground() -> Self {
        DensityMatrix(bloch_to_operator(&-Vector3::z()))
    }

    /// Equal superposition with ⟨σx⟩ = 1.
    pub fn plus_x() -> Self {
        DensityMatrix(bloch_to_operator(&Vector3::x()))
    }

    pub fn bloch(&self) -> Vector3<f64> {
        let p = pauli();
        Vector3::new(
            (p[1] * self.0).trace().re,
            (p[2] * self.0).trace().re,
            (p[3] * self.0).trace().re,
        )
    }

    pub fn min_eigenvalue(&self) -> f64 {
        0.5 * (1.0 - self.bloch().norm())
    }
}

pub(crate) fn bloch_to_operator(r: &Vector3<f64>) -> Operator {
    let p = pauli();
    (p[0] + p[1] * C64::from(r.x) + p[2] * C64::from(r.y) + p[3] * C64::from(r.z)) * C64::from(0.5)
}

/// Uniform sample grid t_i = i·t_end/steps for i = 0..=steps, μs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_end: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, steps: usize) -> Result<Self> {
        if !(t_end > 0.0) || !t_end.is_finite() || steps == 0 {
            return Err(Error::Invalid(format!("time grid needs t_end > 0 and steps > 0, got {t_end}, {steps}")));
        }
        Ok(TimeGrid { t_end, steps })
    }

    /// Population-relaxation runs: 10000 steps over 10⁴ μs.
    pub fn t1_default() -> Self {
        TimeGrid { t_end: 1e4, steps: 10_000 }
    }

    /// Dephasing runs: 20000 steps over 10 μs.
    pub fn t2_default() -> Self {
        TimeGrid { t_end: 10.0, steps: 20_000 }
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.steps as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|i| i as f64 * self.dt()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    /// ⟨σz⟩ relative to its (fitted) equilibrium value.
    SzMinusEq,
    /// |ρ01|
    CoherenceAbs,
}

impl std::str::FromStr for Observable {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sz_minus_eq" => Ok(Observable::SzMinusEq),
            "coherence_abs" => Ok(Observable::CoherenceAbs),
            _ => Err(Error::Invalid(format!("unknown observable `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpinTrajectory {
    /// μs
    pub times: Vec<f64>,
    pub bloch: Vec<Vector3<f64>>,
}

impl SpinTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, i: usize) -> DensityMatrix {
        DensityMatrix(bloch_to_operator(&self.bloch[i]))
    }

    pub fn component(&self, axis: usize) -> Vec<f64> {
        self.bloch.iter().map(|r| r[axis]).collect()
    }

    pub fn sz(&self) -> Vec<f64> {
        self.component(2)
    }

    pub fn coherence_abs(&self) -> Vec<f64> {
        self.bloch.iter().map(|r| 0.5 * r.x.hypot(r.y)).collect()
    }

    pub fn observable(&self, o: Observable) -> Vec<f64> {
        match o {
            Observable::SzMinusEq => self.sz(),
            Observable::CoherenceAbs => self.coherence_abs(),
        }
    }

    /// Columns: t_us, Re/Im of ρ00, ρ01, ρ10, ρ11, then sx, sy, sz,
    /// coherence_abs.
    pub fn to_csv(&self, header_comment: Option<&str>) -> String {
        let mut s = String::new();
        if let Some(c) = header_comment {
            for line in c.lines() {
                writeln!(s, "# {line}").unwrap();
            }
        }
        s.push_str(
            "t_us,rho00_re,rho00_im,rho01_re,rho01_im,rho10_re,rho10_im,rho11_re,rho11_im,sx,sy,sz,coherence_abs\n",
        );
        for (t, r) in self.times.iter().zip(&self.bloch) {
            let m = bloch_to_operator(r);
            write!(s, "{t}").unwrap();
            for z in [m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]] {
                write!(s, ",{},{}", z.re, z.im).unwrap();
            }
            writeln!(s, ",{},{},{},{}", r.x, r.y, r.z, 0.5 * r.x.hypot(r.y)).unwrap();
        }
        s
    }
}
