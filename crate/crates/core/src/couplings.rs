//! g-tensor derivatives with respect to dimensionless normal coordinates.
//!
//! Couplings are stored per unit field direction b̂: `d1[(α, k)]` is
//! ∂(g·b̂)_α/∂x_k and `d2[α][(k, k′)]` is ∂²(g·b̂)_α/∂x_k∂x_k′. The Zeeman
//! prefactor μB·|B| is applied when relaxation tensors are built.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::exec::Execution;
use crate::ingest::{DisplacedGTensorSet, Sign};
use crate::physics::AXIS_TOL;
use crate::{Error, Result};

pub const COUPLINGS_SCHEMA: &str = "spinlat-couplings/1";

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingTensors {
    /// ω_k, cm⁻¹
    pub frequencies: Vec<f64>,
    pub labels: Vec<usize>,
    /// 3×N
    pub d1: DMatrix<f64>,
    /// One N×N symmetric matrix per component α.
    pub d2: Vec<DMatrix<f64>>,
    /// Pairs k < k′ whose mixed entries were computed; all other
    /// off-diagonal entries are zero.
    pub mixed_pairs: Vec<(usize, usize)>,
    pub field_direction: [f64; 3],
    /// Å
    pub delta: f64,
}

impl CouplingTensors {
    pub fn new(
        frequencies: Vec<f64>,
        labels: Vec<usize>,
        d1: DMatrix<f64>,
        d2: Vec<DMatrix<f64>>,
        mut mixed_pairs: Vec<(usize, usize)>,
        field_direction: [f64; 3],
        delta: f64,
    ) -> Result<Self> {
        let n = frequencies.len();
        if labels.len() != n {
            return Err(Error::Invalid("one label per mode required".into()));
        }
        if d1.nrows() != 3 || d1.ncols() != n {
            return Err(Error::Invalid(format!("d1 is {}x{}, expected 3x{n}", d1.nrows(), d1.ncols())));
        }
        if d2.len() != 3 || d2.iter().any(|m| m.nrows() != n || m.ncols() != n) {
            return Err(Error::Invalid(format!("d2 must be three {n}x{n} matrices")));
        }
        if let Some(w) = frequencies.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(Error::Invalid(format!("non-positive mode frequency {w}")));
        }
        if d1.iter().chain(d2.iter().flat_map(|m| m.iter())).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite coupling".into()));
        }
        for (a, m) in d2.iter().enumerate() {
            if m != &m.transpose() {
                return Err(Error::Invalid(format!("d2 component {a} is not symmetric")));
            }
        }
        for p in &mut mixed_pairs {
            if p.0 > p.1 {
                *p = (p.1, p.0);
            }
            if p.0 == p.1 || p.1 >= n {
                return Err(Error::Invalid(format!("invalid mixed pair ({}, {})", p.0, p.1)));
            }
        }
        mixed_pairs.sort_unstable();
        mixed_pairs.dedup();
        let b = Vector3::from(field_direction);
        if ((b.norm() - 1.0).abs()) > 1e-9 {
            return Err(Error::Invalid("field direction must be a unit vector".into()));
        }
        Ok(CouplingTensors {
            frequencies,
            labels,
            d1,
            d2,
            mixed_pairs,
            field_direction,
            delta,
        })
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    /// Whether entry (k, k′) carries data. Diagonal entries always do.
    pub fn mixed_computed(&self, k: usize, k2: usize) -> bool {
        k == k2 || self.mixed_pairs.binary_search(&(k.min(k2), k.max(k2))).is_ok()
    }

    pub fn field_vector(&self) -> Vector3<f64> {
        Vector3::from(self.field_direction)
    }

    pub fn to_json(&self) -> Result<String> {
        let n = self.len();
        let doc = CouplingsDoc {
            schema: COUPLINGS_SCHEMA.to_string(),
            units: Units::default(),
            delta_angstrom: self.delta,
            field_direction: self.field_direction,
            labels: self.labels.clone(),
            frequencies_cm: self.frequencies.clone(),
            d1: (0..3).map(|a| self.d1.row(a).iter().copied().collect()).collect(),
            d2: self
                .d2
                .iter()
                .map(|m| (0..n).map(|k| m.row(k).iter().copied().collect()).collect())
                .collect(),
            mixed_pairs: self.mixed_pairs.iter().map(|&(k, k2)| [k + 1, k2 + 1]).collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CouplingsDoc = serde_json::from_str(text)?;
        if doc.schema != COUPLINGS_SCHEMA {
            return Err(Error::Invalid(format!("unsupported couplings schema `{}`", doc.schema)));
        }
        let n = doc.frequencies_cm.len();
        if doc.d1.len() != 3 || doc.d1.iter().any(|r| r.len() != n) {
            return Err(Error::Invalid("`d1` must be 3 rows of one value per mode".into()));
        }
        if doc.d2.len() != 3 || doc.d2.iter().any(|m| m.len() != n || m.iter().any(|r| r.len() != n)) {
            return Err(Error::Invalid("`d2` must be 3 square matrices over modes".into()));
        }
        let d1 = DMatrix::from_fn(3, n, |a, k| doc.d1[a][k]);
        let d2 = doc.d2.iter().map(|m| DMatrix::from_fn(n, n, |k, k2| m[k][k2])).collect();
        let pairs = doc
            .mixed_pairs
            .iter()
            .map(|p| {
                if p[0] == 0 || p[1] == 0 {
                    Err(Error::Invalid("`mixed_pairs` are 1-based".into()))
                } else {
                    Ok((p[0] - 1, p[1] - 1))
                }
            })
            .collect::<Result<_>>()?;
        CouplingTensors::new(doc.frequencies_cm, doc.labels, d1, d2, pairs, doc.field_direction, doc.delta_angstrom)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Units {
    frequencies: String,
    delta: String,
    d1: String,
    d2: String,
}

impl Default for Units {
    fn default() -> Self {
        Units {
            frequencies: "cm^-1".into(),
            delta: "angstrom".into(),
            d1: "d(g.b)_alpha/dx_k, dimensionless per unit field direction".into(),
            d2: "d2(g.b)_alpha/dx_k dx_k', dimensionless per unit field direction".into(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CouplingsDoc {
    schema: String,
    #[serde(default)]
    units: Units,
    delta_angstrom: f64,
    field_direction: [f64; 3],
    labels: Vec<usize>,
    frequencies_cm: Vec<f64>,
    d1: Vec<Vec<f64>>,
    d2: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    mixed_pairs: Vec<[usize; 2]>,
}

fn unit_direction(b: &Vector3<f64>) -> Result<Vector3<f64>> {
    let n = b.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::Invalid("field direction must be nonzero".into()));
    }
    let u = b / n;
    debug_assert!((u.norm() - 1.0).abs() < 1e3 * AXIS_TOL);
    Ok(u)
}

fn gvec(set: &DisplacedGTensorSet, k: usize, s: Sign, b: &Vector3<f64>) -> Result<Vector3<f64>> {
    set.single(k, s)
        .map(|g| g.contract(b))
        .ok_or_else(|| Error::IncompleteRunSet {
            missing: vec![format!("mode {} sign {s}", k + 1)],
        })
}

fn steps(set: &DisplacedGTensorSet) -> Vec<f64> {
    (0..set.modeset.len()).map(|k| set.modeset.dimensionless_step(k, set.delta)).collect()
}

/// g_αk = [g_α(+δ_k) − g_α(−δ_k)] / (2Δx_k).
pub fn first_order_couplings(set: &DisplacedGTensorSet, field_direction: &Vector3<f64>) -> Result<DMatrix<f64>> {
    let b = unit_direction(field_direction)?;
    let dx = steps(set);
    let n = dx.len();
    let mut d1 = DMatrix::zeros(3, n);
    for k in 0..n {
        let col = (gvec(set, k, Sign::Plus, &b)? - gvec(set, k, Sign::Minus, &b)?) / (2.0 * dx[k]);
        d1.set_column(k, &col);
    }
    Ok(d1)
}

/// Diagonal entries from the three-point stencil, mixed entries from the
/// four-point stencil for every pair present in the set.
pub fn second_order_couplings(
    set: &DisplacedGTensorSet,
    field_direction: &Vector3<f64>,
    exec: Execution,
) -> Result<(Vec<DMatrix<f64>>, Vec<(usize, usize)>)> {
    let b = unit_direction(field_direction)?;
    let dx = steps(set);
    let n = dx.len();
    let g0 = set.baseline.contract(&b);
    let mut d2 = vec![DMatrix::zeros(n, n); 3];
    for k in 0..n {
        let v = (gvec(set, k, Sign::Plus, &b)? - 2.0 * g0 + gvec(set, k, Sign::Minus, &b)?) / (dx[k] * dx[k]);
        for a in 0..3 {
            d2[a][(k, k)] = v[a];
        }
    }

    let listed: BTreeSet<(usize, usize)> = set.pairs.keys().map(|p| (p.k, p.k2)).collect();
    let listed: Vec<(usize, usize)> = listed.into_iter().collect();
    let mixed = exec.try_map(&listed, |&(k, k2)| {
        let pt = |sk: Sign, sk2: Sign| {
            set.pair(k, sk, k2, sk2).map(|g| g.contract(&b)).ok_or_else(|| Error::IncompleteRunSet {
                missing: vec![format!("pair ({}, {}) signs ({sk}, {sk2})", k + 1, k2 + 1)],
            })
        };
        let pp = pt(Sign::Plus, Sign::Plus)?;
        let pm = pt(Sign::Plus, Sign::Minus)?;
        let mp = pt(Sign::Minus, Sign::Plus)?;
        let mm = pt(Sign::Minus, Sign::Minus)?;
        Ok::<_, Error>((pp - pm - mp + mm) / (4.0 * dx[k] * dx[k2]))
    })?;
    for (&(k, k2), v) in listed.iter().zip(&mixed) {
        for a in 0..3 {
            d2[a][(k, k2)] = v[a];
            d2[a][(k2, k)] = v[a];
        }
    }
    Ok((d2, listed))
}

/// First and second order couplings for field direction `field_direction`.
pub fn assemble(set: &DisplacedGTensorSet, field_direction: &Vector3<f64>, exec: Execution) -> Result<CouplingTensors> {
    let b = unit_direction(field_direction)?;
    let d1 = first_order_couplings(set, &b)?;
    let (d2, pairs) = second_order_couplings(set, &b, exec)?;
    CouplingTensors::new(
        set.modeset.frequencies.clone(),
        set.modeset.labels.clone(),
        d1,
        d2,
        pairs,
        [b.x, b.y, b.z],
        set.delta,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Order {
    First,
    Second,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceEntry {
    pub order: Order,
    /// 0 = x, 1 = y, 2 = z
    pub component: usize,
    pub k: usize,
    /// Equals `k` for first-order and diagonal second-order entries.
    pub k2: usize,
    pub coarse: f64,
    pub fine: f64,
    pub richardson: f64,
    pub deviation: f64,
    /// Worst-case amplification of a g-entry error into this entry at the
    /// fine step: 1/Δx, 4/Δx² or 1/(Δx_k Δx_k′).
    pub noise_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub delta_coarse: f64,
    pub delta_fine: f64,
    pub threshold: f64,
    pub entries: Vec<ConvergenceEntry>,
    /// Indices into `entries` with deviation above threshold.
    pub flagged: Vec<usize>,
}

impl ConvergenceReport {
    pub fn max_deviation(&self) -> f64 {
        self.entries.iter().map(|e| e.deviation).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConvergenceOptions {
    pub threshold: f64,
    /// Entries smaller than this fraction of the largest entry of the same
    /// order are compared against that floor instead of their own size.
    pub relative_floor: f64,
}

impl Default for ConvergenceOptions {
    fn default() -> Self {
        ConvergenceOptions {
            threshold: 0.05,
            relative_floor: 1e-8,
        }
    }
}

fn same_modes(a: &DisplacedGTensorSet, b: &DisplacedGTensorSet) -> bool {
    a.modeset.len() == b.modeset.len()
        && a.modeset.frequencies == b.modeset.frequencies
        && a.modeset.eigenvectors == b.modeset.eigenvectors
}

/// Compare couplings assembled at two step sizes and Richardson-extrapolate
/// under the assumption of O(δ²) truncation error.
pub fn convergence_check(
    coarse: &DisplacedGTensorSet,
    fine: &DisplacedGTensorSet,
    field_direction: &Vector3<f64>,
    options: ConvergenceOptions,
) -> Result<ConvergenceReport> {
    if !same_modes(coarse, fine) {
        return Err(Error::Invalid(format!(
            "convergence check needs the same mode set ({} vs {} modes)",
            coarse.modeset.len(),
            fine.modeset.len()
        )));
    }
    if coarse.delta == fine.delta {
        return Err(Error::Invalid("convergence check needs two different step sizes".into()));
    }
    let c = assemble(coarse, field_direction, Execution::Sequential)?;
    let f = assemble(fine, field_direction, Execution::Sequential)?;
    let r2 = (coarse.delta / fine.delta).powi(2);
    let dx = steps(fine);
    let n = dx.len();

    let mut entries = Vec::new();
    let mut push = |order, component, k, k2, dc: f64, df: f64, gain| {
        let rich = (r2 * df - dc) / (r2 - 1.0);
        entries.push(ConvergenceEntry {
            order,
            component,
            k,
            k2,
            coarse: dc,
            fine: df,
            richardson: rich,
            deviation: 0.0,
            noise_gain: gain,
        });
    };
    for a in 0..3 {
        for k in 0..n {
            push(Order::First, a, k, k, c.d1[(a, k)], f.d1[(a, k)], 1.0 / dx[k]);
        }
    }
    for a in 0..3 {
        for k in 0..n {
            push(Order::Second, a, k, k, c.d2[a][(k, k)], f.d2[a][(k, k)], 4.0 / (dx[k] * dx[k]));
            for k2 in k + 1..n {
                if c.mixed_computed(k, k2) && f.mixed_computed(k, k2) {
                    push(Order::Second, a, k, k2, c.d2[a][(k, k2)], f.d2[a][(k, k2)], 1.0 / (dx[k] * dx[k2]));
                }
            }
        }
    }
    let scale = |o: Order| {
        entries
            .iter()
            .filter(|e| e.order == o)
            .map(|e| e.richardson.abs())
            .fold(0.0, f64::max)
    };
    let floors = [scale(Order::First) * options.relative_floor, scale(Order::Second) * options.relative_floor];
    let mut flagged = Vec::new();
    for (i, e) in entries.iter_mut().enumerate() {
        let floor = floors[if e.order == Order::First { 0 } else { 1 }];
        let denom = e.richardson.abs().max(floor);
        e.deviation = if denom > 0.0 { (e.coarse - e.fine).abs() / denom } else { 0.0 };
        if e.deviation > options.threshold {
            flagged.push(i);
        }
    }
    Ok(ConvergenceReport {
        delta_coarse: coarse.delta,
        delta_fine: fine.delta,
        threshold: options.threshold,
        entries,
        flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{self, DimensionlessQuadratic};
    use crate::physics::{GTensor, RamanPairing};
    use nalgebra::Matrix3;
    use rand::Rng;

    fn zhat() -> Vector3<f64> {
        Vector3::z()
    }

    #[test]
    fn constant_surface_has_zero_couplings() {
        let m = fixtures::toy_modeset(3, 2);
        let g = GTensor(Matrix3::from_diagonal_element(2.0023));
        let set = DisplacedGTensorSet::from_cartesian_surface(&m, 0.01, RamanPairing::AllPairs, |_| g).unwrap();
        let c = assemble(&set, &zhat(), Execution::Sequential).unwrap();
        assert!(c.d1.iter().all(|v| *v == 0.0));
        assert!(c.d2.iter().flat_map(|m| m.iter()).all(|v| *v == 0.0));
    }

    #[test]
    fn slope_of_one_dimensional_quadratic() {
        let m = fixtures::toy_modeset(2, 8);
        let (a, b, c) = (2.0, 0.25, 0.125);
        let set = DisplacedGTensorSet::from_dimensionless_surface(&m, 0.05, RamanPairing::DiagonalOnly, |x| {
            GTensor(Matrix3::from_diagonal_element(a + b * x[0] + c * x[0] * x[0]))
        })
        .unwrap();
        let d1 = first_order_couplings(&set, &zhat()).unwrap();
        assert!((d1[(2, 0)] - b).abs() < 1e-12, "{}", d1[(2, 0)]);
        let (d2, _) = second_order_couplings(&set, &zhat(), Execution::Sequential).unwrap();
        assert!((d2[2][(0, 0)] - 2.0 * c).abs() < 1e-11, "{}", d2[2][(0, 0)]);
    }

    #[test]
    fn bilinear_mixed_entry() {
        let m = fixtures::toy_modeset(3, 8);
        let set = DisplacedGTensorSet::from_dimensionless_surface(&m, 0.05, RamanPairing::AllPairs, |x| {
            GTensor(Matrix3::from_diagonal_element(2.0 + x[0] * x[2]))
        })
        .unwrap();
        let (d2, pairs) = second_order_couplings(&set, &zhat(), Execution::Parallel).unwrap();
        assert_eq!(pairs, vec![(0, 1), (0, 2), (1, 2)]);
        assert!((d2[2][(0, 2)] - 1.0).abs() < 1e-12, "{}", d2[2][(0, 2)]);
        assert_eq!(d2[2][(0, 2)], d2[2][(2, 0)]);
        assert!(d2[2][(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn diagonal_only_marks_mixed_not_computed() {
        let m = fixtures::toy_modeset(3, 8);
        let g = GTensor::identity();
        let set = DisplacedGTensorSet::from_cartesian_surface(&m, 0.01, RamanPairing::DiagonalOnly, |_| g).unwrap();
        let c = assemble(&set, &zhat(), Execution::Sequential).unwrap();
        assert!(c.mixed_pairs.is_empty());
        assert!(!c.mixed_computed(0, 1));
        assert!(c.mixed_computed(1, 1));
        for a in 0..3 {
            for k in 0..3 {
                for k2 in 0..3 {
                    if k != k2 {
                        assert_eq!(c.d2[a][(k, k2)], 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn missing_sign_names_mode() {
        let m = fixtures::toy_modeset(3, 8);
        let mut set =
            DisplacedGTensorSet::from_cartesian_surface(&m, 0.01, RamanPairing::AllPairs, |_| GTensor::identity())
                .unwrap();
        set.singles.remove(&(1, Sign::Minus));
        let e = first_order_couplings(&set, &zhat()).unwrap_err();
        assert!(e.to_string().contains("mode 2 sign -"), "{e}");
        set.singles.insert((1, Sign::Minus), GTensor::identity());
        let key = *set.pairs.keys().find(|p| p.k == 0 && p.k2 == 2 && p.sk == Sign::Plus && p.sk2 == Sign::Minus).unwrap();
        set.pairs.remove(&key);
        let e = second_order_couplings(&set, &zhat(), Execution::Sequential).unwrap_err();
        assert!(e.to_string().contains("pair (1, 3) signs (+, -)"), "{e}");
    }

    #[test]
    fn field_contraction_picks_column() {
        let m = fixtures::toy_modeset(1, 8);
        let set = DisplacedGTensorSet::from_dimensionless_surface(&m, 0.05, RamanPairing::DiagonalOnly, |x| {
            let mut g = Matrix3::from_diagonal_element(2.0);
            g[(0, 1)] = 0.5 * x[0];
            GTensor(g)
        })
        .unwrap();
        let d1z = first_order_couplings(&set, &zhat()).unwrap();
        assert_eq!(d1z.column(0).amax(), 0.0);
        let d1y = first_order_couplings(&set, &Vector3::new(0.0, 3.0, 0.0)).unwrap();
        assert!((d1y[(0, 0)] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn sign_gauge_flips_columns() {
        let m = fixtures::toy_modeset(3, 21);
        let surf = fixtures::cartesian_surface(&m.geometry);
        let set = DisplacedGTensorSet::from_cartesian_surface(&m, 0.01, RamanPairing::AllPairs, &surf).unwrap();
        let flipped = set.with_flipped_mode(1);
        let b = zhat();
        let c = assemble(&set, &b, Execution::Sequential).unwrap();
        let f = assemble(&flipped, &b, Execution::Sequential).unwrap();
        for a in 0..3 {
            assert_eq!(f.d1[(a, 1)], -c.d1[(a, 1)]);
            assert_eq!(f.d1[(a, 0)], c.d1[(a, 0)]);
            assert_eq!(f.d2[a][(1, 1)], c.d2[a][(1, 1)]);
            assert_eq!(f.d2[a][(0, 1)], -c.d2[a][(0, 1)]);
            assert_eq!(f.d2[a][(0, 2)], c.d2[a][(0, 2)]);
        }
    }

    #[test]
    fn json_round_trip() {
        let c = fixtures::random_couplings(4, 3);
        let text = c.to_json().unwrap();
        assert!(text.contains("cm^-1"));
        assert_eq!(CouplingTensors::from_json(&text).unwrap(), c);
    }

    #[test]
    fn new_rejects_asymmetric_d2() {
        let mut c = fixtures::random_couplings(3, 3);
        c.d2[0][(0, 1)] += 1e-9;
        assert!(CouplingTensors::new(c.frequencies, c.labels, c.d1, c.d2, c.mixed_pairs, c.field_direction, 0.01).is_err());
    }

    #[test]
    fn convergence_exact_polynomial() {
        let m = fixtures::toy_modeset(3, 5);
        let s = DimensionlessQuadratic::random(3, 6);
        let eval = |x: &[f64]| s.eval(x);
        let coarse = DisplacedGTensorSet::from_dimensionless_surface(&m, 0.02, RamanPairing::AllPairs, eval).unwrap();
        let fine = DisplacedGTensorSet::from_dimensionless_surface(&m, 0.01, RamanPairing::AllPairs, eval).unwrap();
        let rep = convergence_check(&coarse, &fine, &zhat(), ConvergenceOptions::default()).unwrap();
        assert_eq!(rep.entries.len(), 3 * 3 + 3 * (3 + 3));
        assert!(rep.max_deviation() < 1e-6, "{}", rep.max_deviation());
        assert!(rep.flagged.is_empty());
    }

    #[test]
    fn convergence_reports_noise_amplification() {
        let m = fixtures::toy_modeset(2, 5);
        let delta = 0.002;
        let dx: Vec<f64> = (0..2).map(|k| m.dimensionless_step(k, delta)).collect();
        let s = DimensionlessQuadratic::random(2, 6);
        let sigma = 1e-6;
        // surfaces are Fn, so the noise source lives in a RefCell
        let r = std::cell::RefCell::new(fixtures::rng(1));
        let set = DisplacedGTensorSet::from_dimensionless_surface(&m, delta, RamanPairing::DiagonalOnly, |x| {
            let mut r = r.borrow_mut();
            GTensor(s.eval(x).0 + Matrix3::from_fn(|_, _| r.gen_range(-sigma..sigma)))
        })
        .unwrap();
        let clean = DisplacedGTensorSet::from_dimensionless_surface(&m, delta, RamanPairing::DiagonalOnly, |x| s.eval(x))
            .unwrap();
        let b = zhat();
        let (d2n, _) = second_order_couplings(&set, &b, Execution::Sequential).unwrap();
        let (d2c, _) = second_order_couplings(&clean, &b, Execution::Sequential).unwrap();
        for k in 0..2 {
            // injected entries are bounded by σ·|b| each, three stencil points
            let bound = 4.0 * sigma * 1.0 / (dx[k] * dx[k]);
            let err = (0..3).map(|a| (d2n[a][(k, k)] - d2c[a][(k, k)]).abs()).fold(0.0, f64::max);
            assert!(err <= bound, "{err} > {bound}");
            assert!(err > 1e-3 * bound, "noise not visible: {err}");
        }
        let coarse = DisplacedGTensorSet::from_dimensionless_surface(&m, 2.0 * delta, RamanPairing::DiagonalOnly, |x| s.eval(x))
            .unwrap();
        let rep = convergence_check(&coarse, &set, &b, ConvergenceOptions::default()).unwrap();
        let e = rep.entries.iter().find(|e| e.order == Order::Second && e.k == 0 && e.k2 == 0).unwrap();
        assert!((e.noise_gain - 4.0 / (dx[0] * dx[0])).abs() < 1e-9 * e.noise_gain);
        assert!(!rep.flagged.is_empty());
    }

    #[test]
    fn convergence_rejects_mismatched_modes() {
        let a = DisplacedGTensorSet::from_cartesian_surface(&fixtures::toy_modeset(3, 1), 0.02, RamanPairing::DiagonalOnly, |_| {
            GTensor::identity()
        })
        .unwrap();
        let b = DisplacedGTensorSet::from_cartesian_surface(&fixtures::toy_modeset(4, 1), 0.01, RamanPairing::DiagonalOnly, |_| {
            GTensor::identity()
        })
        .unwrap();
        assert!(convergence_check(&a, &b, &zhat(), ConvergenceOptions::default()).is_err());
    }
}
