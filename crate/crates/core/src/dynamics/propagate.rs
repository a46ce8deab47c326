use nalgebra::{Matrix4, Vector3, Vector4};

use super::{pauli, DensityMatrix, Operator, SpinTrajectory, TimeGrid};
use crate::physics::CM_TO_PER_MICROSECOND;
use crate::{Error, Result};

/// Largest tolerated trace drift per sample before the evolution aborts.
pub const TRACE_GUARD: f64 = 1e-12;
/// Largest tolerated Bloch-vector length excess.
pub const POSITIVITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    /// Step = 1 / (safety · ‖L‖∞).
    pub safety: f64,
    /// Upper bound on the RK4 step, μs.
    pub max_step: Option<f64>,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions {
            safety: 100.0,
            max_step: None,
        }
    }
}

/// Real generator of (1, r) for a linear operator right-hand side given in
/// cm⁻¹: L_ij = ½·Tr(σ_i · rhs(σ_j)), converted to μs⁻¹.
pub fn bloch_generator<F: Fn(&Operator) -> Operator>(rhs: F) -> Result<Matrix4<f64>> {
    let p = pauli();
    let mut l = Matrix4::zeros();
    let mut imag = 0.0f64;
    for j in 0..4 {
        let d = rhs(&p[j]);
        for i in 0..4 {
            let v = (p[i] * d).trace() * 0.5;
            l[(i, j)] = v.re;
            imag = imag.max(v.im.abs());
        }
    }
    let scale = l.amax().max(f64::MIN_POSITIVE);
    if imag > 1e-12 * scale {
        return Err(Error::Invalid(format!("generator does not preserve Hermiticity ({imag:e})")));
    }
    let drift = l.row(0).amax();
    if drift > TRACE_GUARD * scale {
        return Err(Error::Unstable(format!("generator does not preserve the trace (row drift {drift:e})")));
    }
    l.row_mut(0).fill(0.0);
    Ok(l * CM_TO_PER_MICROSECOND)
}

fn matrix_power(m: &Matrix4<f64>, mut e: u64) -> Matrix4<f64> {
    let mut base = *m;
    let mut acc = Matrix4::identity();
    while e > 0 {
        if e & 1 == 1 {
            acc *= base;
        }
        base *= base;
        e >>= 1;
    }
    acc
}

/// Fixed-step RK4 over one sample interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Propagator {
    pub generator: Matrix4<f64>,
    /// μs
    pub step: f64,
    pub substeps: u64,
    pub sample_map: Matrix4<f64>,
}

impl Propagator {
    pub fn new(generator: Matrix4<f64>, dt: f64, opts: IntegratorOptions) -> Result<Self> {
        let norm = (0..4).map(|i| generator.row(i).abs().sum()).fold(0.0, f64::max);
        let mut h = if norm > 0.0 { 1.0 / (opts.safety * norm) } else { dt };
        if let Some(m) = opts.max_step {
            if !(m > 0.0) {
                return Err(Error::Invalid(format!("max_step must be > 0, got {m}")));
            }
            h = h.min(m);
        }
        let substeps = (dt / h).ceil().max(1.0);
        if substeps > u64::MAX as f64 {
            return Err(Error::Invalid("step count overflows".into()));
        }
        let substeps = substeps as u64;
        let h = dt / substeps as f64;
        let a = generator * h;
        let a2 = a * a;
        let a3 = a2 * a;
        let a4 = a3 * a;
        let one_step = Matrix4::identity() + a + a2 / 2.0 + a3 / 6.0 + a4 / 24.0;
        Ok(Propagator {
            generator,
            step: h,
            substeps,
            sample_map: matrix_power(&one_step, substeps),
        })
    }
}

/// Integrate from `rho0` over `grid` under the real generator `l` (μs⁻¹).
pub fn propagate(rho0: &DensityMatrix, l: &Matrix4<f64>, grid: &TimeGrid, opts: IntegratorOptions) -> Result<SpinTrajectory> {
    let p = Propagator::new(*l, grid.dt(), opts)?;
    let times = grid.times();
    let r0 = rho0.bloch();
    let mut v = Vector4::new(1.0, r0.x, r0.y, r0.z);
    let mut bloch = Vec::with_capacity(times.len());
    bloch.push(r0);
    for &t in &times[1..] {
        v = p.sample_map * v;
        let drift = (v[0] - 1.0).abs();
        if drift > TRACE_GUARD {
            return Err(Error::Unstable(format!("trace drifted by {drift:e} at t = {t} us")));
        }
        v[0] = 1.0;
        let r = Vector3::new(v[1], v[2], v[3]);
        let n = r.norm();
        if !n.is_finite() || n > 1.0 + POSITIVITY_TOL {
            return Err(Error::Unstable(format!(
                "state left the physical region (|r| = {n}) at t = {t} us; use a smaller step (max_step, currently {} us)",
                p.step
            )));
        }
        bloch.push(r);
    }
    Ok(SpinTrajectory { times, bloch })
}
