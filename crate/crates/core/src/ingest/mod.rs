//! Input side of the pipeline: normal-mode files, g-tensor result files,
//! displacement plans and run manifests.

mod gtensor;
mod manifest;
mod nmodes;
mod plan;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::physics::{GTensor, ModeSet, RamanPairing};

pub use gtensor::parse_gtensor_block;
pub use manifest::{load_run_set, ManifestPair, ManifestRun, RunManifest, RunStatus, MANIFEST_SCHEMA};
pub use nmodes::{parse_mode_file, parse_mode_file_with, write_mode_file, ModeParseOptions};
pub use plan::{generate_displacements, run_count, write_plan, write_xyz, DisplacementPlan, PlanEntry};

/// Default geometric displacement amplitude, Å.
pub const DEFAULT_DELTA_ANGSTROM: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub const BOTH: [Sign; 2] = [Sign::Plus, Sign::Minus];

    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    fn tag(self) -> char {
        match self {
            Sign::Plus => 'p',
            Sign::Minus => 'm',
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Plus => "+",
            Sign::Minus => "-",
        })
    }
}

impl Serialize for Sign {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_i8(self.value() as i8)
    }
}

impl<'de> Deserialize<'de> for Sign {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match i8::deserialize(d)? {
            1 => Ok(Sign::Plus),
            -1 => Ok(Sign::Minus),
            v => Err(serde::de::Error::custom(format!("sign must be +1 or -1, got {v}"))),
        }
    }
}

/// Order of derivatives a plan is meant to support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DerivativeOrder {
    First = 1,
    Second = 2,
}

impl TryFrom<u8> for DerivativeOrder {
    type Error = crate::Error;
    fn try_from(v: u8) -> crate::Result<Self> {
        match v {
            1 => Ok(DerivativeOrder::First),
            2 => Ok(DerivativeOrder::Second),
            _ => Err(crate::Error::Invalid(format!("order must be 1 or 2, got {v}"))),
        }
    }
}

/// Four-point stencil key for a mode pair; always stored with `k < k2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PairKey {
    pub k: usize,
    pub k2: usize,
    pub sk: Sign,
    pub sk2: Sign,
}

impl PairKey {
    pub fn new(k: usize, sk: Sign, k2: usize, sk2: Sign) -> Self {
        if k <= k2 {
            PairKey { k, k2, sk, sk2 }
        } else {
            PairKey { k: k2, k2: k, sk: sk2, sk2: sk }
        }
    }
}

/// g-tensors computed at the baseline and at displaced geometries.
/// Mode indices are 0-based positions in the (sorted) mode set.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacedGTensorSet {
    pub baseline: GTensor,
    /// Å
    pub delta: f64,
    pub singles: BTreeMap<(usize, Sign), GTensor>,
    pub pairs: BTreeMap<PairKey, GTensor>,
    pub modeset: ModeSet,
}

impl DisplacedGTensorSet {
    pub fn single(&self, k: usize, s: Sign) -> Option<&GTensor> {
        self.singles.get(&(k, s))
    }

    pub fn pair(&self, k: usize, sk: Sign, k2: usize, sk2: Sign) -> Option<&GTensor> {
        self.pairs.get(&PairKey::new(k, sk, k2, sk2))
    }

    /// Pairs (k < k2) for which all four stencil points are present.
    pub fn complete_pairs(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = self
            .pairs
            .keys()
            .map(|p| (p.k, p.k2))
            .filter(|&(k, k2)| {
                Sign::BOTH.iter().all(|&a| Sign::BOTH.iter().all(|&b| self.pair(k, a, k2, b).is_some()))
            })
            .collect();
        out.dedup();
        out
    }

    /// Evaluate a g-surface given as a function of Cartesian geometry at
    /// every point of the displacement plan.
    pub fn from_cartesian_surface<F>(
        modeset: &ModeSet,
        delta: f64,
        pairing: RamanPairing,
        surface: F,
    ) -> crate::Result<Self>
    where
        F: Fn(&crate::physics::Geometry) -> GTensor,
    {
        let plan = generate_displacements(modeset, delta, DerivativeOrder::Second, pairing)?;
        Ok(Self::from_plan(&plan, modeset, |e| surface(&e.geometry)))
    }

    /// Evaluate a g-surface given as a function of dimensionless normal
    /// coordinates x. A plan entry with steps s·δ along modes maps to
    /// x_k = s·Δx_k.
    pub fn from_dimensionless_surface<F>(
        modeset: &ModeSet,
        delta: f64,
        pairing: RamanPairing,
        surface: F,
    ) -> crate::Result<Self>
    where
        F: Fn(&[f64]) -> GTensor,
    {
        let plan = generate_displacements(modeset, delta, DerivativeOrder::Second, pairing)?;
        let steps: Vec<f64> = (0..modeset.len()).map(|k| modeset.dimensionless_step(k, delta)).collect();
        Ok(Self::from_plan(&plan, modeset, |e| {
            let mut x = vec![0.0; modeset.len()];
            for (&k, s) in e.modes.iter().zip(&e.signs) {
                x[k] = s.value() * steps[k];
            }
            surface(&x)
        }))
    }

    fn from_plan<F>(plan: &DisplacementPlan, modeset: &ModeSet, eval: F) -> Self
    where
        F: Fn(&PlanEntry) -> GTensor,
    {
        let mut baseline = GTensor::identity();
        let mut singles = BTreeMap::new();
        let mut pairs = BTreeMap::new();
        for e in &plan.entries {
            let g = eval(e);
            match e.modes.as_slice() {
                [] => baseline = g,
                [k] => {
                    singles.insert((*k, e.signs[0]), g);
                }
                [k, k2] => {
                    pairs.insert(PairKey::new(*k, e.signs[0], *k2, e.signs[1]), g);
                }
                _ => unreachable!("plan entries displace at most two modes"),
            }
        }
        DisplacedGTensorSet {
            baseline,
            delta: plan.delta,
            singles,
            pairs,
            modeset: modeset.clone(),
        }
    }

    /// Relabel the set for a mode set whose column `k` has flipped sign:
    /// the + and − runs of that mode swap roles.
    pub fn with_flipped_mode(&self, k: usize) -> Self {
        let flip = |m: usize, s: Sign| if m == k { s.flip() } else { s };
        let singles = self.singles.iter().map(|(&(m, s), g)| ((m, flip(m, s)), *g)).collect();
        let pairs = self
            .pairs
            .iter()
            .map(|(p, g)| (PairKey::new(p.k, flip(p.k, p.sk), p.k2, flip(p.k2, p.sk2)), *g))
            .collect();
        DisplacedGTensorSet {
            baseline: self.baseline,
            delta: self.delta,
            singles,
            pairs,
            modeset: self.modeset.with_flipped_column(k),
        }
    }
}
