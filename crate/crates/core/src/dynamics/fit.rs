use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::{storage::Owned, DMatrix, DVector, Dyn, Matrix2, Vector2};
use serde::Serialize;

use super::{Observable, SpinTrajectory};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Samples before this time (μs) are ignored.
    pub t_start: f64,
    pub t_end: Option<f64>,
    /// RMS residual relative to |A| above which the fit is flagged.
    pub residual_threshold: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            t_start: 0.0,
            t_end: None,
            residual_threshold: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitResult {
    /// μs⁻¹, ≥ 0
    pub rate: f64,
    pub amplitude: f64,
    /// Zero unless the model has an offset.
    pub offset: f64,
    /// RMS residual over |amplitude|.
    pub relative_residual: f64,
    pub samples: usize,
    /// Signal is constant or growing; `rate` is 0.
    pub non_decaying: bool,
    pub high_residual: bool,
}

/// A·e^(−r·τ) (+ c) in scaled time τ = (t − t0)/span.
struct ExpModel<'a> {
    tau: &'a [f64],
    y: &'a [f64],
    offset: bool,
    p: DVector<f64>,
}

impl ExpModel<'_> {
    fn value(&self, i: usize) -> f64 {
        let c = if self.offset { self.p[2] } else { 0.0 };
        self.p[0] * (-self.p[1] * self.tau[i]).exp() + c
    }
}

impl LeastSquaresProblem<f64, Dyn, Dyn> for ExpModel<'_> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, Dyn>;
    type ParameterStorage = Owned<f64, Dyn>;

    fn set_params(&mut self, x: &DVector<f64>) {
        self.p.copy_from(x);
    }

    fn params(&self) -> DVector<f64> {
        self.p.clone()
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        Some(DVector::from_fn(self.tau.len(), |i, _| self.value(i) - self.y[i]))
    }

    fn jacobian(&self) -> Option<DMatrix<f64>> {
        let np = self.p.len();
        Some(DMatrix::from_fn(self.tau.len(), np, |i, j| {
            let e = (-self.p[1] * self.tau[i]).exp();
            match j {
                0 => e,
                1 => -self.p[0] * self.tau[i] * e,
                _ => 1.0,
            }
        }))
    }
}

/// Best (A, c) for a fixed rate, and the residual sum of squares.
fn linear_part(tau: &[f64], y: &[f64], r: f64, offset: bool) -> (f64, f64, f64) {
    let e: Vec<f64> = tau.iter().map(|t| (-r * t).exp()).collect();
    let (a, c) = if offset {
        let n = tau.len() as f64;
        let (se, see) = (e.iter().sum::<f64>(), e.iter().map(|v| v * v).sum::<f64>());
        let sy: f64 = y.iter().sum();
        let sey: f64 = e.iter().zip(y).map(|(a, b)| a * b).sum();
        let m = Matrix2::new(see, se, se, n);
        match m.try_inverse() {
            Some(inv) => {
                let s = inv * Vector2::new(sey, sy);
                (s[0], s[1])
            }
            None => (0.0, sy / n),
        }
    } else {
        let see: f64 = e.iter().map(|v| v * v).sum();
        let sey: f64 = e.iter().zip(y).map(|(a, b)| a * b).sum();
        (if see > 0.0 { sey / see } else { 0.0 }, 0.0)
    };
    let ss = e.iter().zip(y).map(|(ei, yi)| (a * ei + c - yi).powi(2)).sum();
    (a, c, ss)
}

/// Least-squares fit of A·e^(−r·t) (+ c when `offset`) to samples inside the
/// window. The rate is seeded from a log-spaced scan with the linear
/// parameters solved exactly, then refined by Levenberg-Marquardt.
pub fn fit_exponential(times: &[f64], values: &[f64], offset: bool, opts: FitOptions) -> Result<FitResult> {
    if times.len() != values.len() {
        return Err(Error::Invalid("times and values differ in length".into()));
    }
    let t_end = opts.t_end.unwrap_or(f64::INFINITY);
    let (t, y): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= opts.t_start && **t <= t_end)
        .map(|(t, v)| (*t, *v))
        .unzip();
    if t.len() < 10 {
        return Err(Error::Invalid(format!("fit needs at least 10 samples in the window, got {}", t.len())));
    }
    if !y.iter().all(|v| v.is_finite()) {
        return Err(Error::Invalid("fit input contains non-finite values".into()));
    }
    let t0 = t[0];
    let span = t[t.len() - 1] - t0;
    if !(span > 0.0) {
        return Err(Error::Invalid("fit window has zero length".into()));
    }
    let tau: Vec<f64> = t.iter().map(|v| (v - t0) / span).collect();
    let n = t.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let spread = y.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    let flat = FitResult {
        rate: 0.0,
        amplitude: 0.0,
        offset: mean,
        relative_residual: 0.0,
        samples: n,
        non_decaying: true,
        high_residual: false,
    };
    let scale = y.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if spread <= 1e-12 * scale.max(f64::MIN_POSITIVE) || (!offset && scale == 0.0) {
        return Ok(flat);
    }

    let (lo, hi) = (1e-4f64, 2.0 * n as f64);
    let scan = 400;
    let mut best = (f64::INFINITY, lo);
    for i in 0..=scan {
        let r = lo * (hi / lo).powf(i as f64 / scan as f64);
        let (_, _, ss) = linear_part(&tau, &y, r, offset);
        if ss < best.0 {
            best = (ss, r);
        }
    }
    let (a0, c0, _) = linear_part(&tau, &y, best.1, offset);
    let p0 = if offset { DVector::from_vec(vec![a0, best.1, c0]) } else { DVector::from_vec(vec![a0, best.1]) };
    let model = ExpModel {
        tau: &tau,
        y: &y,
        offset,
        p: p0,
    };
    let (model, _report) = LevenbergMarquardt::new().with_tol(1e-14).minimize(model);
    let p = model.p.clone();
    let rss: f64 = (0..n).map(|i| (model.value(i) - y[i]).powi(2)).sum();
    let (amp, rate_scaled) = (p[0], p[1]);
    let off = if offset { p[2] } else { 0.0 };
    if !(rate_scaled > 0.0) || !rate_scaled.is_finite() || amp == 0.0 {
        return Ok(FitResult { amplitude: amp, offset: off, ..flat });
    }
    let relative_residual = (rss / n as f64).sqrt() / amp.abs();
    let high_residual = relative_residual > opts.residual_threshold;
    if high_residual {
        log::warn!("exponential fit residual {relative_residual:.3e} exceeds {:.1e}", opts.residual_threshold);
    }
    Ok(FitResult {
        rate: rate_scaled / span,
        // amplitude at the window start
        amplitude: amp,
        offset: off,
        relative_residual,
        samples: n,
        non_decaying: false,
        high_residual,
    })
}

/// Decay rate of ⟨σz⟩ (with free equilibrium offset) or of |ρ01|.
pub fn fit_decay_rate(traj: &SpinTrajectory, observable: Observable, opts: FitOptions) -> Result<FitResult> {
    let y = traj.observable(observable);
    fit_exponential(&traj.times, &y, observable == Observable::SzMinusEq, opts)
}
