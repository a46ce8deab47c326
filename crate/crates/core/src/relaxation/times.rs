use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::physics::{rate_cm_to_time_us, AXIS_TOL};
use crate::{Error, Result};

/// Projection of Λ onto T1/T2.
///
/// `Paper`: 1/T1 = 2·n̂ᵀΛn̂, 1/T2 = TrΛ − n̂ᵀΛn̂.
/// `Dissipator`: the decay rates the Pauli-basis dissipator gives ⟨σ_n⟩ and
/// the transverse coherence, 1/T1 = 2·(TrΛ − n̂ᵀΛn̂), 1/T2 = TrΛ + n̂ᵀΛn̂.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    #[default]
    Paper,
    Dissipator,
}

impl std::str::FromStr for Convention {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Convention::Paper),
            "dissipator" => Ok(Convention::Dissipator),
            _ => Err(Error::Invalid(format!("unknown convention `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RelaxationTimes {
    pub convention: Convention,
    /// 1/T1, cm⁻¹
    pub rate1: f64,
    /// 1/T2, cm⁻¹
    pub rate2: f64,
    /// μs, +∞ for a zero rate
    pub t1_us: f64,
    pub t2_us: f64,
    pub axis: [f64; 3],
}

fn symmetric_within(l: &Matrix3<f64>, tol: f64) -> bool {
    let scale = l.amax().max(f64::MIN_POSITIVE);
    (l - l.transpose()).amax() <= tol * scale
}

fn clean_rate(r: f64, scale: f64, what: &str) -> Result<f64> {
    if r >= 0.0 {
        Ok(r)
    } else if r >= -1e-12 * scale {
        Ok(0.0)
    } else {
        Err(Error::Domain(format!("{what} is negative ({r:e}); Λ is not positive semi-definite")))
    }
}

pub fn relaxation_times(lambda: &Matrix3<f64>, axis: &Vector3<f64>, convention: Convention) -> Result<RelaxationTimes> {
    if (axis.norm() - 1.0).abs() > AXIS_TOL {
        return Err(Error::Invalid(format!("quantization axis must be a unit vector, |n| = {}", axis.norm())));
    }
    if !symmetric_within(lambda, 1e-10) {
        return Err(Error::Invalid("relaxation tensor is not symmetric".into()));
    }
    let tr = lambda.trace();
    let nn = (axis.transpose() * lambda * axis)[(0, 0)];
    let (r1, r2) = match convention {
        Convention::Paper => (2.0 * nn, tr - nn),
        Convention::Dissipator => (2.0 * (tr - nn), tr + nn),
    };
    let scale = tr.abs().max(lambda.amax());
    let rate1 = clean_rate(r1, scale, "1/T1")?;
    let rate2 = clean_rate(r2, scale, "1/T2")?;
    Ok(RelaxationTimes {
        convention,
        rate1,
        rate2,
        t1_us: rate_cm_to_time_us(rate1),
        t2_us: rate_cm_to_time_us(rate2),
        axis: [axis.x, axis.y, axis.z],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrincipalAxes {
    /// Ascending.
    pub values: [f64; 3],
    /// Column k is the axis of `values[k]`.
    pub axes: Matrix3<f64>,
}

impl PrincipalAxes {
    pub fn reconstruct(&self) -> Matrix3<f64> {
        let d = Matrix3::from_diagonal(&Vector3::from(self.values));
        self.axes * d * self.axes.transpose()
    }
}

fn fix_sign(v: &mut Vector3<f64>) {
    let (i, _) = v.iter().enumerate().fold((0, 0.0f64), |(bi, bv), (i, x)| {
        if x.abs() > bv + 1e-12 {
            (i, x.abs())
        } else {
            (bi, bv)
        }
    });
    if v[i] < 0.0 {
        *v = -*v;
    }
}

/// Orthonormal basis of span(`basis`) aligned with coordinate axes: greedily
/// take the axis with the largest remaining projection, lowest index first.
fn aligned_basis(basis: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    let d = basis.len();
    let project = |v: &Vector3<f64>| basis.iter().fold(Vector3::zeros(), |acc, b| acc + b * b.dot(v));
    let mut chosen: Vec<Vector3<f64>> = Vec::with_capacity(d);
    while chosen.len() < d {
        let mut best: Option<(f64, Vector3<f64>)> = None;
        for i in 0..3 {
            let mut p = project(&Vector3::ith(i, 1.0));
            for c in &chosen {
                p -= c * c.dot(&p);
            }
            let n = p.norm();
            if best.as_ref().is_none_or(|(bn, _)| n > bn + 1e-12) {
                best = Some((n, p));
            }
        }
        let (n, p) = best.expect("three candidates");
        if n < 1e-8 {
            // degenerate projection; fall back to the eigen-solver's vector
            let mut v = basis[chosen.len()];
            for c in &chosen {
                v -= c * c.dot(&v);
            }
            chosen.push(v.normalize());
        } else {
            chosen.push(p / n);
        }
    }
    chosen
}

/// Spectral decomposition Λ = Σ λ_k v_k v_kᵀ, eigenvalues ascending. Axes of
/// degenerate eigenvalues are aligned to coordinate axes (ties to the lowest
/// index) and every axis has its largest component positive.
pub fn principal_relaxation_axes(lambda: &Matrix3<f64>) -> Result<PrincipalAxes> {
    if !symmetric_within(lambda, 1e-10) {
        return Err(Error::Invalid("relaxation tensor is not symmetric".into()));
    }
    let sym = (lambda + lambda.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs: Vec<Vector3<f64>> = order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();

    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-10 * scale;
    let mut values = [0.0; 3];
    let mut axes = Matrix3::zeros();
    let mut i = 0;
    while i < 3 {
        let mut j = i + 1;
        while j < 3 && vals[j] - vals[i] <= tol {
            j += 1;
        }
        let group: Vec<Vector3<f64>> = if j - i == 1 { vec![vecs[i]] } else { aligned_basis(&vecs[i..j]) };
        let mean = vals[i..j].iter().sum::<f64>() / (j - i) as f64;
        for (off, mut v) in group.into_iter().enumerate() {
            fix_sign(&mut v);
            let val = if j - i == 1 { vals[i] } else { mean };
            values[i + off] = if val < 0.0 && val > -1e-12 * scale { 0.0 } else { val };
            axes.set_column(i + off, &v);
        }
        i = j;
    }
    Ok(PrincipalAxes { values, axes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn diagonal_along_z() {
        let l = Matrix3::from_diagonal(&Vector3::new(0.1, 0.2, 0.3));
        let t = relaxation_times(&l, &Vector3::z(), Convention::Paper).unwrap();
        assert_eq!(t.rate1, 0.6);
        assert!((t.rate2 - 0.3).abs() < 1e-15);
        let d = relaxation_times(&l, &Vector3::z(), Convention::Dissipator).unwrap();
        assert!((d.rate1 - 0.6).abs() < 1e-15);
        assert!((d.rate2 - 0.9).abs() < 1e-15);
    }

    #[test]
    fn identity_any_axis() {
        let n = Vector3::new(1.0, 2.0, -2.0) / 3.0;
        let t = relaxation_times(&Matrix3::identity(), &n, Convention::Paper).unwrap();
        assert!((t.rate1 - 2.0).abs() < 1e-15);
        assert!((t.rate2 - 2.0).abs() < 1e-15);
        assert!((t.rate2 - (3.0 - t.rate1 / 2.0)).abs() < 1e-15);
    }

    #[test]
    fn x_axis_matches_rotated_frame() {
        let (a, b, c) = (0.7, 0.2, 0.05);
        let l = Matrix3::from_diagonal(&Vector3::new(a, b, c));
        let t = relaxation_times(&l, &Vector3::x(), Convention::Paper).unwrap();
        // rotation taking x̂ to ẑ, then the ẑ projection
        let r = Matrix3::new(0.0, 0.0, -1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0);
        let lr = r * l * r.transpose();
        assert!((t.rate1 - 2.0 * lr[(2, 2)]).abs() < 1e-15);
        assert_eq!(t.rate1, 2.0 * a);
    }

    #[test]
    fn zero_rate_is_infinite_time() {
        let t = relaxation_times(&Matrix3::zeros(), &Vector3::z(), Convention::Paper).unwrap();
        assert!(t.t1_us.is_infinite() && t.t2_us.is_infinite());
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(relaxation_times(&Matrix3::identity(), &Vector3::new(1.0, 1.0, 0.0), Convention::Paper).is_err());
        let mut l = Matrix3::identity();
        l[(0, 1)] = 0.5;
        assert!(relaxation_times(&l, &Vector3::z(), Convention::Paper).is_err());
        assert!(principal_relaxation_axes(&l).is_err());
    }

    #[test]
    fn axes_of_diagonal() {
        let p = principal_relaxation_axes(&Matrix3::from_diagonal(&Vector3::new(3.0, 1.0, 2.0))).unwrap();
        assert_eq!(p.values, [1.0, 2.0, 3.0]);
        assert_eq!(p.axes.column(0).into_owned(), Vector3::y());
        assert_eq!(p.axes.column(1).into_owned(), Vector3::z());
        assert_eq!(p.axes.column(2).into_owned(), Vector3::x());
    }

    #[test]
    fn rank_one() {
        let w = Vector3::new(0.3, -0.4, 1.2);
        let p = principal_relaxation_axes(&(w * w.transpose())).unwrap();
        assert!(p.values[0].abs() < 1e-15 && p.values[1].abs() < 1e-15);
        assert!((p.values[2] - w.norm_squared()).abs() < 1e-14);
        let v = p.axes.column(2).into_owned();
        assert!((v - w.normalize()).norm() < 1e-12);
    }

    #[test]
    fn degenerate_axes_are_deterministic() {
        let l = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 2.0));
        let p = principal_relaxation_axes(&l).unwrap();
        assert!((p.axes.column(0).into_owned() - Vector3::x()).norm() < 1e-12);
        assert!((p.axes.column(1).into_owned() - Vector3::y()).norm() < 1e-12);
        let p = principal_relaxation_axes(&Matrix3::identity()).unwrap();
        assert!((p.axes - Matrix3::identity()).norm() < 1e-12);
    }

    proptest! {
        #[test]
        fn reconstruction(seed in 0u64..10_000) {
            let mut r = fixtures::rng(seed);
            let l = fixtures::random_psd(&mut r, 1.0);
            let p = principal_relaxation_axes(&l).unwrap();
            prop_assert!((p.reconstruct() - l).amax() < 1e-10);
            prop_assert!(p.values[0] >= 0.0);
            prop_assert!((p.axes.transpose() * p.axes - Matrix3::identity()).amax() < 1e-12);
        }

        #[test]
        fn paper_identity(seed in 0u64..10_000) {
            let mut r = fixtures::rng(seed);
            let l = fixtures::random_psd(&mut r, 1e-6);
            let n = Vector3::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0f64)).normalize();
            let t = relaxation_times(&l, &n, Convention::Paper).unwrap();
            let lhs = t.rate2;
            let rhs = l.trace() - t.rate1 / 2.0;
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs());
        }
    }

}
