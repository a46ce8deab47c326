use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;
use serde::Serialize;

use super::manifest::{ManifestPair, ManifestRun, RunManifest, RunStatus, MANIFEST_SCHEMA};
use super::{DerivativeOrder, Sign};
use crate::physics::{Geometry, ModeSet, RamanPairing};
use crate::{Error, Result};

/// One electronic-structure run: baseline (no modes), a single-mode step, or
/// a two-mode step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanEntry {
    pub id: String,
    /// 0-based mode indices.
    pub modes: Vec<usize>,
    pub signs: Vec<Sign>,
    pub geometry: Geometry,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisplacementPlan {
    /// Å
    pub delta: f64,
    pub order: DerivativeOrder,
    pub pairing: RamanPairing,
    pub entries: Vec<PlanEntry>,
}

impl DisplacementPlan {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Number of runs `generate_displacements` emits for `n` modes.
pub fn run_count(n: usize, order: DerivativeOrder, pairing: RamanPairing) -> usize {
    let pairs = if order == DerivativeOrder::Second && pairing == RamanPairing::AllPairs {
        4 * (n * n.saturating_sub(1) / 2)
    } else {
        0
    };
    1 + 2 * n + pairs
}

fn run_id(modes: &[usize], signs: &[Sign]) -> String {
    if modes.is_empty() {
        return "base".to_string();
    }
    modes
        .iter()
        .zip(signs)
        .map(|(k, s)| format!("m{:04}{}", k + 1, s.tag()))
        .collect::<Vec<_>>()
        .join("_")
}

/// Baseline, ± steps of δ along every mode direction u_k, and for
/// `order = 2` with `all_pairs` the four-point stencil for every pair k < k′.
pub fn generate_displacements(
    modes: &ModeSet,
    delta: f64,
    order: DerivativeOrder,
    pairing: RamanPairing,
) -> Result<DisplacementPlan> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::Invalid(format!("displacement delta must be > 0, got {delta}")));
    }
    let geom = &modes.geometry;
    let n = modes.len();
    let dirs: Vec<DVector<f64>> = (0..n).map(|k| modes.cartesian_direction(k).0).collect();

    let mut entries = Vec::new();
    entries.push(PlanEntry {
        id: run_id(&[], &[]),
        modes: vec![],
        signs: vec![],
        geometry: geom.clone(),
    });
    for (k, u) in dirs.iter().enumerate() {
        for s in Sign::BOTH {
            entries.push(PlanEntry {
                id: run_id(&[k], &[s]),
                modes: vec![k],
                signs: vec![s],
                geometry: geom.displaced(&(u * (s.value() * delta))),
            });
        }
    }
    if order == DerivativeOrder::Second && pairing == RamanPairing::AllPairs {
        for k in 0..n {
            for k2 in k + 1..n {
                for s in Sign::BOTH {
                    for s2 in Sign::BOTH {
                        let disp = &dirs[k] * (s.value() * delta) + &dirs[k2] * (s2.value() * delta);
                        entries.push(PlanEntry {
                            id: run_id(&[k, k2], &[s, s2]),
                            modes: vec![k, k2],
                            signs: vec![s, s2],
                            geometry: geom.displaced(&disp),
                        });
                    }
                }
            }
        }
    }
    Ok(DisplacementPlan {
        delta,
        order,
        pairing,
        entries,
    })
}

pub fn write_xyz(geom: &Geometry, comment: &str) -> String {
    let mut s = String::new();
    writeln!(s, "{}", geom.natoms()).unwrap();
    writeln!(s, "{comment}").unwrap();
    for a in &geom.atoms {
        let [x, y, z] = a.position;
        writeln!(s, "{} {} {} {}", a.element, x, y, z).unwrap();
    }
    s
}

/// Write `geom/<id>.xyz` for every plan entry and return the manifest that
/// expects results at `results/<id>.out` (paths relative to `out_dir`).
/// `config` is recorded in the manifest and, compacted, in every xyz comment
/// line.
pub fn write_plan(
    plan: &DisplacementPlan,
    modes_file: Option<&str>,
    out_dir: &Path,
    config: Option<&serde_json::Value>,
) -> Result<RunManifest> {
    let geom_dir = out_dir.join("geom");
    std::fs::create_dir_all(&geom_dir).map_err(|e| Error::io(&geom_dir, e))?;

    let mut manifest = RunManifest {
        schema: Some(MANIFEST_SCHEMA.to_string()),
        delta_angstrom: Some(plan.delta),
        modes_file: modes_file.map(str::to_string),
        config: config.cloned(),
        ..Default::default()
    };
    let suffix = match config {
        Some(c) => format!(" config={}", serde_json::to_string(c)?),
        None => String::new(),
    };
    for e in &plan.entries {
        let rel_geom = format!("geom/{}.xyz", e.id);
        let path = out_dir.join(&rel_geom);
        let comment = format!("spinlat run {} delta_angstrom={}{suffix}", e.id, plan.delta);
        std::fs::write(&path, write_xyz(&e.geometry, &comment)).map_err(|err| Error::io(&path, err))?;
        let result = format!("results/{}.out", e.id);
        match e.modes.as_slice() {
            [] => {
                manifest.baseline = Some(result);
                manifest.baseline_geometry = Some(rel_geom);
            }
            [k] => manifest.runs.push(ManifestRun {
                mode: k + 1,
                sign: e.signs[0],
                path: result,
                geometry: Some(rel_geom),
                status: Some(RunStatus::Pending),
                checksum: None,
            }),
            [k, k2] => manifest.pairs.push(ManifestPair {
                modes: [k + 1, k2 + 1],
                signs: [e.signs[0], e.signs[1]],
                path: result,
                geometry: Some(rel_geom),
                status: Some(RunStatus::Pending),
                checksum: None,
            }),
            _ => unreachable!(),
        }
    }
    let path = out_dir.join("manifest.json");
    std::fs::write(&path, manifest.to_json()?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
