//! Physical constants, unit conversions and the domain types shared by the
//! rest of the crate.
//!
//! Internal unit system: frequencies, couplings and rates in cm⁻¹, temperature
//! in K, fields in mT at the interface (T internally), masses in amu, lengths
//! in Å, times in μs.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Boltzmann constant, cm⁻¹/K.
pub const KB_CM_PER_K: f64 = 0.695_034_80;
/// Bohr magneton over hc, cm⁻¹/T.
pub const MU_B_CM_PER_T: f64 = 0.466_864_477_8;
/// Speed of light, cm/s.
pub const SPEED_OF_LIGHT_CM_S: f64 = 2.997_924_58e10;
/// rate[s⁻¹] = 2πc · rate[cm⁻¹].
pub const CM_TO_PER_SECOND: f64 = 2.0 * PI * SPEED_OF_LIGHT_CM_S;
/// rate[μs⁻¹] = 2πc · 10⁻⁶ · rate[cm⁻¹].
pub const CM_TO_PER_MICROSECOND: f64 = CM_TO_PER_SECOND * 1e-6;

const PLANCK_J_S: f64 = 6.626_070_15e-34;
const AMU_KG: f64 = 1.660_539_066_60e-27;
const ANGSTROM2_M2: f64 = 1e-20;

/// ħ-like scale for converting mass-weighted normal coordinates (amu^½·Å) to
/// dimensionless ones: Q = √(HBAR / ω) · x with ω in cm⁻¹.
///
/// Evaluates to h/(8π²c) ≈ 16.8576 amu·Å²·cm⁻¹, which normalizes x so that the
/// thermal correlation of a mode is ⟨x(t)x(0)⟩ = (2n+1)·cos(ωt).
pub const HBAR_AMU_A2_CM: f64 =
    PLANCK_J_S / (8.0 * PI * PI * SPEED_OF_LIGHT_CM_S * AMU_KG * ANGSTROM2_M2);

/// Convert a rate in cm⁻¹ to a time in μs; a zero rate maps to +∞.
pub fn rate_cm_to_time_us(rate: f64) -> f64 {
    if rate == 0.0 {
        f64::INFINITY
    } else {
        1.0 / (rate * CM_TO_PER_MICROSECOND)
    }
}

/// Bose-Einstein occupation of a mode at `omega` cm⁻¹ and temperature `t` K.
/// Exactly zero at T = 0.
pub fn bose_occupation(omega: f64, t: f64) -> Result<f64> {
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::Domain(format!("mode frequency must be positive, got {omega}")));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("temperature must be non-negative, got {t}")));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    Ok(1.0 / (omega / (KB_CM_PER_K * t)).exp_m1())
}

/// Spin transition frequency Ω = μB·|g0·B| in cm⁻¹.
pub fn larmor_frequency(spin: &SpinSystem) -> f64 {
    spin.larmor()
}

/// Principal g-values: singular values of `g`, ascending.
pub fn principal_g_values(g: &GTensor) -> Result<[f64; 3]> {
    if !g.0.iter().all(|x| x.is_finite()) {
        return Err(Error::Domain("g-tensor has non-finite entries".into()));
    }
    let mut s: Vec<f64> = g.0.singular_values().iter().copied().collect();
    s.sort_by(f64::total_cmp);
    Ok([s[0], s[1], s[2]])
}

/// 3×3 g-tensor in file row order, dimensionless.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GTensor(pub Matrix3<f64>);

impl GTensor {
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        if !m.iter().all(|x| x.is_finite()) {
            return Err(Error::Domain("g-tensor has non-finite entries".into()));
        }
        for i in 0..3 {
            let d = m[(i, i)];
            if !(d > 1.5 && d < 2.5) {
                log::warn!("g-tensor diagonal entry {i} = {d} is far from the free-electron value");
            }
        }
        Ok(GTensor(m))
    }

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self> {
        Self::new(Matrix3::from_fn(|i, j| rows[i][j]))
    }

    pub fn identity() -> Self {
        GTensor(Matrix3::identity())
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        let m = &self.0;
        [0, 1, 2].map(|i| [m[(i, 0)], m[(i, 1)], m[(i, 2)]])
    }

    /// The field-contracted g-vector g·b̂.
    pub fn contract(&self, dir: &Vector3<f64>) -> Vector3<f64> {
        self.0 * dir
    }
}

impl Serialize for GTensor {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for GTensor {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = <[[f64; 3]; 3]>::deserialize(d)?;
        GTensor::from_rows(rows).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub element: String,
    /// amu
    pub mass: f64,
    /// Å
    pub position: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub atoms: Vec<Atom>,
}

impl Geometry {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.len() < 2 {
            return Err(Error::Invalid(format!(
                "geometry needs at least 2 atoms, got {}",
                atoms.len()
            )));
        }
        if let Some(a) = atoms.iter().find(|a| !(a.mass > 0.0) || !a.mass.is_finite()) {
            return Err(Error::Invalid(format!("atom {} has non-positive mass {}", a.element, a.mass)));
        }
        Ok(Geometry { atoms })
    }

    pub fn natoms(&self) -> usize {
        self.atoms.len()
    }

    /// Flat Cartesian coordinates (x1, y1, z1, x2, ...).
    pub fn coordinates(&self) -> DVector<f64> {
        DVector::from_iterator(
            3 * self.atoms.len(),
            self.atoms.iter().flat_map(|a| a.position),
        )
    }

    /// Same atoms displaced by a flat Cartesian vector.
    pub fn displaced(&self, disp: &DVector<f64>) -> Geometry {
        let atoms = self
            .atoms
            .iter()
            .enumerate()
            .map(|(i, a)| Atom {
                element: a.element.clone(),
                mass: a.mass,
                position: [0, 1, 2].map(|c| a.position[c] + disp[3 * i + c]),
            })
            .collect();
        Geometry { atoms }
    }
}

/// Normal modes at the reference geometry, sorted by ascending frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSet {
    /// ω_k, cm⁻¹
    pub frequencies: Vec<f64>,
    /// Mass-weighted eigenvectors L, (3·natoms)×N, orthonormal columns.
    pub eigenvectors: DMatrix<f64>,
    pub geometry: Geometry,
    /// Index of each mode as labelled in the source file.
    pub labels: Vec<usize>,
}

pub const ORTHONORMALITY_TOL: f64 = 1e-6;

impl ModeSet {
    pub fn new(
        frequencies: Vec<f64>,
        eigenvectors: DMatrix<f64>,
        geometry: Geometry,
        labels: Vec<usize>,
    ) -> Result<Self> {
        let n = frequencies.len();
        let dim = 3 * geometry.natoms();
        if eigenvectors.ncols() != n || eigenvectors.nrows() != dim {
            return Err(Error::Invalid(format!(
                "eigenvector matrix is {}x{}, expected {}x{}",
                eigenvectors.nrows(),
                eigenvectors.ncols(),
                dim,
                n
            )));
        }
        if n > dim {
            return Err(Error::Invalid(format!("{n} modes exceed 3*natoms = {dim}")));
        }
        if labels.len() != n {
            return Err(Error::Invalid("one label per mode required".into()));
        }
        if let Some(w) = frequencies.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(Error::Invalid(format!("non-positive mode frequency {w}")));
        }
        let dev = orthonormality_deviation(&eigenvectors);
        if dev > ORTHONORMALITY_TOL {
            return Err(Error::Invalid(format!(
                "eigenvector columns not orthonormal (max deviation {dev:e})"
            )));
        }
        Ok(ModeSet {
            frequencies,
            eigenvectors,
            geometry,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    /// Cartesian displacement per unit mass-weighted normal coordinate:
    /// component i of column k of L divided by √m_atom(i).
    pub fn cartesian_shape(&self, k: usize) -> DVector<f64> {
        let col = self.eigenvectors.column(k);
        DVector::from_fn(col.len(), |i, _| col[i] / self.geometry.atoms[i / 3].mass.sqrt())
    }

    /// Unit-length Cartesian mode direction u_k and its normalization s_k = |L_k/√m|.
    pub fn cartesian_direction(&self, k: usize) -> (DVector<f64>, f64) {
        let c = self.cartesian_shape(k);
        let s = c.norm();
        (c / s, s)
    }

    /// Dimensionless-coordinate step Δx_k produced by a geometric step of
    /// `delta` Å along u_k: Δx_k = δ / (s_k · √(ħ/ω_k)).
    pub fn dimensionless_step(&self, k: usize, delta: f64) -> f64 {
        let (_, s) = self.cartesian_direction(k);
        delta / (s * (HBAR_AMU_A2_CM / self.frequencies[k]).sqrt())
    }

    /// Copy with the sign of eigenvector column `k` flipped.
    pub fn with_flipped_column(&self, k: usize) -> ModeSet {
        let mut m = self.clone();
        m.eigenvectors.column_mut(k).neg_mut();
        m
    }
}

/// max |LᵀL − I|
pub fn orthonormality_deviation(l: &DMatrix<f64>) -> f64 {
    let gram = l.transpose() * l;
    let n = gram.nrows();
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((gram[(i, j)] - target).abs());
        }
    }
    dev
}

/// Two-level spin in a static field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinSystem {
    pub g0: GTensor,
    /// mT
    pub field_mt: [f64; 3],
    /// Quantization axis n̂ used for T1/T2 projection.
    pub axis: [f64; 3],
    /// Fixes Ω (cm⁻¹) instead of deriving it from g0 and B.
    #[serde(default)]
    pub omega_override: Option<f64>,
}

pub const AXIS_TOL: f64 = 1e-12;

impl SpinSystem {
    pub fn new(g0: GTensor, field_mt: [f64; 3]) -> Result<Self> {
        Self::with_axis(g0, field_mt, [0.0, 0.0, 1.0])
    }

    pub fn with_axis(g0: GTensor, field_mt: [f64; 3], axis: [f64; 3]) -> Result<Self> {
        let s = SpinSystem {
            g0,
            field_mt,
            axis,
            omega_override: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.field_mt.iter().all(|b| b.is_finite()) {
            return Err(Error::Invalid("field components must be finite".into()));
        }
        let n = Vector3::from(self.axis).norm();
        if (n - 1.0).abs() > AXIS_TOL {
            return Err(Error::Invalid(format!("quantization axis must be a unit vector, |n| = {n}")));
        }
        if let Some(w) = self.omega_override {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::Invalid(format!("omega override must be >= 0, got {w}")));
            }
        }
        Ok(())
    }

    pub fn field_tesla(&self) -> Vector3<f64> {
        Vector3::from(self.field_mt) * 1e-3
    }

    /// |B| in T.
    pub fn field_magnitude(&self) -> f64 {
        self.field_tesla().norm()
    }

    /// Unit field direction, `None` at zero field.
    pub fn field_direction(&self) -> Option<Vector3<f64>> {
        let b = self.field_tesla();
        let n = b.norm();
        (n > 0.0).then(|| b / n)
    }

    pub fn axis_vector(&self) -> Vector3<f64> {
        Vector3::from(self.axis)
    }

    /// Combined Zeeman vector (μB/hc)·(g0·B), cm⁻¹.
    pub fn zeeman_vector(&self) -> Vector3<f64> {
        self.g0.0 * self.field_tesla() * MU_B_CM_PER_T
    }

    /// Ω in cm⁻¹ (override if set).
    pub fn larmor(&self) -> f64 {
        self.omega_override
            .unwrap_or_else(|| (self.g0.0 * self.field_tesla()).norm() * MU_B_CM_PER_T)
    }

    /// Scale converting field-free couplings into cm⁻¹: μB·|B|/(hc).
    pub fn coupling_scale(&self) -> f64 {
        MU_B_CM_PER_T * self.field_magnitude()
    }
}

/// Value shared by all modes, with optional per-mode overrides keyed by
/// 1-based mode number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerMode {
    pub default: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub overrides: BTreeMap<usize, f64>,
}

impl PerMode {
    pub fn uniform(v: f64) -> Self {
        PerMode {
            default: v,
            overrides: BTreeMap::new(),
        }
    }

    /// Value for 0-based mode index `q`.
    pub fn get(&self, q: usize) -> f64 {
        self.overrides.get(&(q + 1)).copied().unwrap_or(self.default)
    }

    fn all_positive(&self) -> bool {
        self.default > 0.0 && self.overrides.values().all(|v| *v > 0.0 && v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RamanPairing {
    #[default]
    DiagonalOnly,
    AllPairs,
}

impl std::str::FromStr for RamanPairing {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diagonal_only" => Ok(RamanPairing::DiagonalOnly),
            "all_pairs" => Ok(RamanPairing::AllPairs),
            _ => Err(Error::Invalid(format!("unknown pairing `{s}`"))),
        }
    }
}

pub const DEFAULT_LINEWIDTH_CM: f64 = 2.0;
pub const DEFAULT_GAMMA_CM: f64 = 2.0;

/// Harmonic bath parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BathSpec {
    /// K
    pub temperature: f64,
    /// Mode damping γ_q, cm⁻¹.
    pub gamma: PerMode,
    /// Lorentzian width λ_q, cm⁻¹.
    pub linewidth: PerMode,
    pub raman_pairing: RamanPairing,
}

impl BathSpec {
    pub fn new(temperature: f64) -> Result<Self> {
        let b = BathSpec {
            temperature,
            gamma: PerMode::uniform(DEFAULT_GAMMA_CM),
            linewidth: PerMode::uniform(DEFAULT_LINEWIDTH_CM),
            raman_pairing: RamanPairing::DiagonalOnly,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn at_temperature(&self, t: f64) -> Self {
        BathSpec {
            temperature: t,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0) || !self.temperature.is_finite() {
            return Err(Error::Invalid(format!("temperature must be >= 0, got {}", self.temperature)));
        }
        if !self.gamma.all_positive() {
            return Err(Error::Invalid("gamma must be > 0 for every mode".into()));
        }
        if !self.linewidth.all_positive() {
            return Err(Error::Invalid("linewidth must be > 0 for every mode".into()));
        }
        Ok(())
    }
}
