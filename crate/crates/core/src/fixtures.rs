//! Deterministic synthetic systems for tests, benches and `spinlat validate`.

use nalgebra::{DMatrix, Matrix3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::couplings::CouplingTensors;
use crate::physics::{Atom, GTensor, Geometry, ModeSet};

const ELEMENTS: [(&str, f64); 4] = [("C", 12.011), ("H", 1.008), ("O", 15.999), ("N", 14.007)];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random molecule with `n_modes` orthonormal modes and ascending
/// frequencies in [15, 600) cm⁻¹. Uses the fewest atoms (≥ 2) that fit.
pub fn toy_modeset(n_modes: usize, seed: u64) -> ModeSet {
    let mut r = rng(seed);
    let natoms = n_modes.div_ceil(3).max(2);
    let atoms = (0..natoms)
        .map(|i| {
            let (el, m) = ELEMENTS[i % ELEMENTS.len()];
            Atom {
                element: el.to_string(),
                mass: m,
                position: [r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0)],
            }
        })
        .collect();
    let geometry = Geometry::new(atoms).expect("toy geometry");
    let dim = 3 * natoms;
    let raw = DMatrix::from_fn(dim, dim, |_, _| r.gen_range(-1.0..1.0));
    let q = raw.qr().q();
    let l = q.columns(0, n_modes).into_owned();
    let mut freqs: Vec<f64> = (0..n_modes).map(|_| r.gen_range(15.0..600.0)).collect();
    freqs.sort_by(f64::total_cmp);
    ModeSet::new(freqs, l, geometry, (1..=n_modes).collect()).expect("toy modes")
}

fn random_matrix(r: &mut ChaCha8Rng, scale: f64) -> Matrix3<f64> {
    Matrix3::from_fn(|_, _| r.gen_range(-scale..scale))
}

fn near_free_electron(r: &mut ChaCha8Rng) -> Matrix3<f64> {
    Matrix3::from_diagonal_element(2.0) + random_matrix(r, 0.01)
}

/// g(R) = g0 + Σ_i a_i dR_i + Σ_ij b_ij dR_i dR_j with dR = R − R_ref.
#[derive(Debug, Clone)]
pub struct CartesianQuadratic {
    pub reference: Vec<f64>,
    pub g0: Matrix3<f64>,
    pub a: Vec<Matrix3<f64>>,
    /// Symmetric in (i, j); row-major `dim × dim`.
    pub b: Vec<Matrix3<f64>>,
}

impl CartesianQuadratic {
    pub fn random(reference: &Geometry, seed: u64) -> Self {
        let mut r = rng(seed);
        let reference: Vec<f64> = reference.coordinates().iter().copied().collect();
        let dim = reference.len();
        let g0 = near_free_electron(&mut r);
        let a = (0..dim).map(|_| random_matrix(&mut r, 0.05)).collect();
        let mut b = vec![Matrix3::zeros(); dim * dim];
        for i in 0..dim {
            for j in i..dim {
                let m = random_matrix(&mut r, 0.02);
                b[i * dim + j] = m;
                b[j * dim + i] = m;
            }
        }
        CartesianQuadratic { reference, g0, a, b }
    }

    pub fn dim(&self) -> usize {
        self.reference.len()
    }

    pub fn eval(&self, geom: &Geometry) -> GTensor {
        let dim = self.dim();
        let c = geom.coordinates();
        let d: Vec<f64> = (0..dim).map(|i| c[i] - self.reference[i]).collect();
        let mut g = self.g0;
        for i in 0..dim {
            g += self.a[i] * d[i];
        }
        for i in 0..dim {
            for j in 0..dim {
                g += self.b[i * dim + j] * (d[i] * d[j]);
            }
        }
        GTensor(g)
    }
}

/// Closure form of [`CartesianQuadratic::random`] around `reference`.
pub fn cartesian_surface(reference: &Geometry) -> impl Fn(&Geometry) -> GTensor {
    let s = CartesianQuadratic::random(reference, 17);
    move |g| s.eval(g)
}

/// g(x) = g0 + Σ_k a_k x_k + Σ_kk′ b_kk′ x_k x_k′ in dimensionless coordinates.
#[derive(Debug, Clone)]
pub struct DimensionlessQuadratic {
    pub g0: Matrix3<f64>,
    pub a: Vec<Matrix3<f64>>,
    /// Symmetric, row-major `n × n`.
    pub b: Vec<Matrix3<f64>>,
}

impl DimensionlessQuadratic {
    pub fn random(n: usize, seed: u64) -> Self {
        let mut r = rng(seed);
        let g0 = near_free_electron(&mut r);
        let a = (0..n).map(|_| random_matrix(&mut r, 1e-3)).collect();
        let mut b = vec![Matrix3::zeros(); n * n];
        for i in 0..n {
            for j in i..n {
                let m = random_matrix(&mut r, 1e-3);
                b[i * n + j] = m;
                b[j * n + i] = m;
            }
        }
        DimensionlessQuadratic { g0, a, b }
    }

    pub fn eval(&self, x: &[f64]) -> GTensor {
        let n = x.len();
        let mut g = self.g0;
        for k in 0..n {
            g += self.a[k] * x[k];
        }
        for k in 0..n {
            for k2 in 0..n {
                g += self.b[k * n + k2] * (x[k] * x[k2]);
            }
        }
        GTensor(g)
    }
}

/// Frequencies of the three-mode two-phonon test system, cm⁻¹.
pub const SYNTHETIC_FREQUENCIES: [f64; 3] = [12.6, 20.0, 31.0];

/// Three modes, no first-order coupling, nonzero diagonal second-order
/// couplings only. Coupling sizes put T1 in the ms range at 1266 mT and 100 K.
pub fn synthetic_g2_system() -> CouplingTensors {
    let n = SYNTHETIC_FREQUENCIES.len();
    let d1 = DMatrix::zeros(3, n);
    let diag = [[2.0e-4, 1.5e-4, 3.0e-4], [1.0e-4, 2.5e-4, 1.2e-4], [2.2e-4, 0.8e-4, 1.8e-4]];
    let d2 = (0..3)
        .map(|a| DMatrix::from_fn(n, n, |k, k2| if k == k2 { diag[k][a] } else { 0.0 }))
        .collect();
    CouplingTensors::new(
        SYNTHETIC_FREQUENCIES.to_vec(),
        (1..=n).collect(),
        d1,
        d2,
        Vec::new(),
        [0.0, 0.0, 1.0],
        0.01,
    )
    .expect("synthetic system")
}

/// One mode with only a diagonal second-order coupling along z.
pub fn single_mode_system(omega: f64, d2_z: f64) -> CouplingTensors {
    let d2 = vec![
        DMatrix::zeros(1, 1),
        DMatrix::zeros(1, 1),
        DMatrix::from_element(1, 1, d2_z),
    ];
    CouplingTensors::new(vec![omega], vec![1], DMatrix::zeros(3, 1), d2, Vec::new(), [0.0, 0.0, 1.0], 0.01)
        .expect("single-mode system")
}

/// Random couplings over `n` modes with all mixed pairs computed.
pub fn random_couplings(n: usize, seed: u64) -> CouplingTensors {
    let mut r = rng(seed);
    let mut freqs: Vec<f64> = (0..n).map(|_| r.gen_range(10.0..500.0)).collect();
    freqs.sort_by(f64::total_cmp);
    let d1 = DMatrix::from_fn(3, n, |_, _| r.gen_range(-1e-3..1e-3));
    let d2 = (0..3)
        .map(|_| {
            let m = DMatrix::from_fn(n, n, |_, _| r.gen_range(-1e-3..1e-3));
            (&m + m.transpose()) * 0.5
        })
        .collect();
    let pairs = (0..n).flat_map(|k| (k + 1..n).map(move |k2| (k, k2))).collect();
    CouplingTensors::new(freqs, (1..=n).collect(), d1, d2, pairs, [0.0, 0.0, 1.0], 0.01).expect("random couplings")
}

/// Random symmetric positive semi-definite 3×3 matrix with entries of order `scale`.
pub fn random_psd(r: &mut impl Rng, scale: f64) -> Matrix3<f64> {
    let a = Matrix3::from_fn(|_, _| r.gen_range(-1.0..1.0));
    let m = a * a.transpose() * scale;
    (m + m.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_modes_are_valid_and_sorted() {
        for n in [1, 3, 4, 7] {
            let m = toy_modeset(n, 9);
            assert_eq!(m.len(), n);
            assert!(m.frequencies.windows(2).all(|w| w[0] <= w[1]));
        }
        assert_eq!(toy_modeset(5, 2), toy_modeset(5, 2));
    }

    #[test]
    fn quadratic_surfaces_at_reference() {
        let m = toy_modeset(3, 1);
        let s = CartesianQuadratic::random(&m.geometry, 4);
        assert_eq!(s.eval(&m.geometry).0, s.g0);
        let d = DimensionlessQuadratic::random(3, 4);
        assert_eq!(d.eval(&[0.0; 3]).0, d.g0);
    }
}
