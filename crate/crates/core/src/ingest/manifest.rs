//! Run manifests: which result file belongs to which displaced geometry.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{parse_gtensor_block, parse_mode_file, DisplacedGTensorSet, PairKey, Sign};
use crate::exec::Execution;
use crate::physics::{GTensor, ModeSet};
use crate::{Error, Result};

pub const MANIFEST_SCHEMA: &str = "spinlat-manifest/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Pending,
    Complete,
    Missing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRun {
    /// 1-based mode number.
    pub mode: usize,
    pub sign: Sign,
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<RunStatus>,
    /// Lowercase hex SHA-256 of the result file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checksum: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestPair {
    pub modes: [usize; 2],
    pub signs: [Sign; 2],
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<RunStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checksum: Option<String>,
}

/// Paths are relative to the manifest's directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_angstrom: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_geometry: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_checksum: Option<String>,
    #[serde(default)]
    pub runs: Vec<ManifestRun>,
    #[serde(default)]
    pub pairs: Vec<ManifestPair>,
    /// Effective configuration of the run that wrote the manifest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunManifest {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

fn sign_label(s: Sign) -> &'static str {
    match s {
        Sign::Plus => "+",
        Sign::Minus => "-",
    }
}

/// What a manifest entry resolved to.
enum Resolved {
    Found(GTensor),
    Missing,
}

fn resolve(dir: &Path, rel: &str, status: Option<RunStatus>, checksum: Option<&str>) -> Result<Resolved> {
    if status == Some(RunStatus::Missing) {
        return Ok(Resolved::Missing);
    }
    let path: PathBuf = dir.join(rel);
    let bytes = match std::fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Resolved::Missing),
        Err(e) => return Err(Error::io(&path, e)),
    };
    if let Some(sum) = checksum {
        if !sum.eq_ignore_ascii_case(&sha256_hex(&bytes)) {
            return Err(Error::Checksum { path });
        }
    }
    let text = String::from_utf8_lossy(&bytes);
    let g = parse_gtensor_block(&text).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })?;
    Ok(Resolved::Found(g))
}

/// Load every result referenced by a manifest.
///
/// `modes` overrides the manifest's `modes_file`. Result files are parsed
/// concurrently under `exec`.
pub fn load_run_set(manifest_path: &Path, modes: Option<ModeSet>, exec: Execution) -> Result<DisplacedGTensorSet> {
    let manifest = RunManifest::read(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));

    let baseline_rel = manifest.baseline.as_deref().ok_or(Error::NoBaseline)?;
    let baseline = match resolve(dir, baseline_rel, None, manifest.baseline_checksum.as_deref())? {
        Resolved::Found(g) => g,
        Resolved::Missing => return Err(Error::NoBaseline),
    };

    let modeset = match modes {
        Some(m) => m,
        None => {
            let rel = manifest
                .modes_file
                .as_deref()
                .ok_or_else(|| Error::Invalid("manifest has no `modes_file` and no mode set was given".into()))?;
            let path = dir.join(rel);
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            parse_mode_file(&text)?
        }
    };
    let delta = manifest
        .delta_angstrom
        .ok_or_else(|| Error::Invalid("manifest is missing `delta_angstrom`".into()))?;
    if !(delta > 0.0) {
        return Err(Error::Invalid(format!("delta_angstrom must be > 0, got {delta}")));
    }
    let n = modeset.len();
    let check_mode = |m: usize| {
        if m == 0 || m > n {
            Err(Error::Invalid(format!("manifest references mode {m}, mode set has {n}")))
        } else {
            Ok(())
        }
    };
    for r in &manifest.runs {
        check_mode(r.mode)?;
    }
    for p in &manifest.pairs {
        check_mode(p.modes[0])?;
        check_mode(p.modes[1])?;
        if p.modes[0] == p.modes[1] {
            return Err(Error::Invalid(format!("pair entry repeats mode {}", p.modes[0])));
        }
    }

    let single_results = exec.try_map(&manifest.runs, |r| {
        resolve(dir, &r.path, r.status, r.checksum.as_deref())
    })?;
    let pair_results = exec.try_map(&manifest.pairs, |p| {
        resolve(dir, &p.path, p.status, p.checksum.as_deref())
    })?;

    let mut missing = Vec::new();
    let mut singles = BTreeMap::new();
    for (r, res) in manifest.runs.iter().zip(single_results) {
        let key = (r.mode - 1, r.sign);
        if singles.contains_key(&key) {
            return Err(Error::Invalid(format!("duplicate run for mode {} sign {}", r.mode, sign_label(r.sign))));
        }
        match res {
            Resolved::Found(g) => {
                singles.insert(key, g);
            }
            Resolved::Missing => missing.push(format!("mode {} sign {}", r.mode, sign_label(r.sign))),
        }
    }
    for k in 0..n {
        for s in Sign::BOTH {
            let listed = manifest.runs.iter().any(|r| r.mode == k + 1 && r.sign == s);
            if !listed {
                missing.push(format!("mode {} sign {}", k + 1, sign_label(s)));
            }
        }
    }

    let mut pairs = BTreeMap::new();
    let mut listed_pairs = std::collections::BTreeSet::new();
    for (p, res) in manifest.pairs.iter().zip(pair_results) {
        let key = PairKey::new(p.modes[0] - 1, p.signs[0], p.modes[1] - 1, p.signs[1]);
        listed_pairs.insert((key.k, key.k2));
        let label = format!(
            "pair ({}, {}) signs ({}, {})",
            key.k + 1,
            key.k2 + 1,
            sign_label(key.sk),
            sign_label(key.sk2)
        );
        if pairs.contains_key(&key) {
            return Err(Error::Invalid(format!("duplicate {label}")));
        }
        match res {
            Resolved::Found(g) => {
                pairs.insert(key, g);
            }
            Resolved::Missing => missing.push(label),
        }
    }
    for &(k, k2) in &listed_pairs {
        for a in Sign::BOTH {
            for b in Sign::BOTH {
                let listed = manifest.pairs.iter().any(|p| {
                    PairKey::new(p.modes[0] - 1, p.signs[0], p.modes[1] - 1, p.signs[1])
                        == PairKey { k, k2, sk: a, sk2: b }
                });
                if !listed {
                    missing.push(format!(
                        "pair ({}, {}) signs ({}, {})",
                        k + 1,
                        k2 + 1,
                        sign_label(a),
                        sign_label(b)
                    ));
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::IncompleteRunSet { missing });
    }
    Ok(DisplacedGTensorSet {
        baseline,
        delta,
        singles,
        pairs,
        modeset,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::ingest::{generate_displacements, write_mode_file, write_plan, DerivativeOrder};
    use crate::physics::RamanPairing;
    use proptest::prelude::*;

    fn gblock(g: &GTensor) -> String {
        let r = g.rows();
        format!(
            "ELECTRONIC G-MATRIX\n{} {} {}\n{} {} {}\n{} {} {}\n",
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2]
        )
    }

    /// Lay out a complete run directory for a synthetic surface.
    fn populate(dir: &Path, pairing: RamanPairing) -> (ModeSet, RunManifest) {
        let m = fixtures::toy_modeset(3, 5);
        std::fs::write(dir.join("modes.nmodes"), write_mode_file(&m)).unwrap();
        let plan = generate_displacements(&m, 0.02, DerivativeOrder::Second, pairing).unwrap();
        let manifest = write_plan(&plan, Some("modes.nmodes"), dir, None).unwrap();
        std::fs::create_dir_all(dir.join("results")).unwrap();
        for e in &plan.entries {
            let g = fixtures::cartesian_surface(&m.geometry)(&e.geometry);
            std::fs::write(dir.join("results").join(format!("{}.out", e.id)), gblock(&g)).unwrap();
        }
        (m, manifest)
    }

    #[test]
    fn loads_complete_set() {
        let tmp = tempfile::tempdir().unwrap();
        let (m, _) = populate(tmp.path(), RamanPairing::AllPairs);
        let set = load_run_set(&tmp.path().join("manifest.json"), None, Execution::Parallel).unwrap();
        assert_eq!(set.singles.len(), 2 * m.len());
        assert_eq!(set.pairs.len(), 4 * 3);
        assert_eq!(set.complete_pairs(), vec![(0, 1), (0, 2), (1, 2)]);
        assert_eq!(set.delta, 0.02);
    }

    #[test]
    fn missing_run_is_named() {
        let tmp = tempfile::tempdir().unwrap();
        populate(tmp.path(), RamanPairing::DiagonalOnly);
        std::fs::remove_file(tmp.path().join("results/m0002m.out")).unwrap();
        let err = load_run_set(&tmp.path().join("manifest.json"), None, Execution::Sequential).unwrap_err();
        match err {
            Error::IncompleteRunSet { missing } => assert_eq!(missing, vec!["mode 2 sign -".to_string()]),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn unlisted_mode_sign_is_a_gap() {
        let tmp = tempfile::tempdir().unwrap();
        let (m, mut manifest) = populate(tmp.path(), RamanPairing::DiagonalOnly);
        manifest.runs.retain(|r| !(r.mode == 3 && r.sign == Sign::Minus));
        let path = tmp.path().join("manifest.json");
        std::fs::write(&path, manifest.to_json().unwrap()).unwrap();
        let err = load_run_set(&path, Some(m), Execution::Sequential).unwrap_err();
        assert!(err.to_string().contains("mode 3 sign -"), "{err}");
    }

    #[test]
    fn empty_manifest_has_no_baseline() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("manifest.json");
        std::fs::write(&path, "{}").unwrap();
        let err = load_run_set(&path, None, Execution::Sequential).unwrap_err();
        assert!(matches!(err, Error::NoBaseline));
        assert_eq!(err.to_string(), "no baseline run in manifest");
    }

    #[test]
    fn checksum_verified() {
        let tmp = tempfile::tempdir().unwrap();
        let (_, mut manifest) = populate(tmp.path(), RamanPairing::DiagonalOnly);
        let good = sha256_hex(&std::fs::read(tmp.path().join("results/m0001p.out")).unwrap());
        manifest.runs[0].checksum = Some(good);
        manifest.runs[1].checksum = Some("00".repeat(32));
        let path = tmp.path().join("manifest.json");
        std::fs::write(&path, manifest.to_json().unwrap()).unwrap();
        let err = load_run_set(&path, None, Execution::Sequential).unwrap_err();
        match err {
            Error::Checksum { path } => assert!(path.ends_with("results/m0001m.out")),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn status_missing_marker_counts_as_gap() {
        let tmp = tempfile::tempdir().unwrap();
        let (_, mut manifest) = populate(tmp.path(), RamanPairing::DiagonalOnly);
        manifest.runs[4].status = Some(RunStatus::Missing);
        let path = tmp.path().join("manifest.json");
        std::fs::write(&path, manifest.to_json().unwrap()).unwrap();
        let err = load_run_set(&path, None, Execution::Sequential).unwrap_err();
        assert!(err.to_string().contains("mode 3 sign +"), "{err}");
    }

    fn arb_sign() -> impl Strategy<Value = Sign> {
        prop_oneof![Just(Sign::Plus), Just(Sign::Minus)]
    }

    proptest! {
        #[test]
        fn manifest_json_round_trip(
            delta in proptest::option::of(1e-4..1.0f64),
            runs in proptest::collection::vec((1usize..200, arb_sign(), "[a-z/]{1,12}", proptest::option::of("[0-9a-f]{64}")), 0..8),
            pairs in proptest::collection::vec((1usize..200, 1usize..200, arb_sign(), arb_sign(), "[a-z/]{1,12}"), 0..8),
        ) {
            let m = RunManifest {
                schema: Some(MANIFEST_SCHEMA.into()),
                delta_angstrom: delta,
                modes_file: None,
                baseline: Some("results/base.out".into()),
                baseline_geometry: None,
                baseline_checksum: None,
                runs: runs.into_iter().map(|(mode, sign, path, checksum)| ManifestRun {
                    mode, sign, path, geometry: None, status: Some(RunStatus::Complete), checksum,
                }).collect(),
                pairs: pairs.into_iter().map(|(a, b, sa, sb, path)| ManifestPair {
                    modes: [a, b], signs: [sa, sb], path, geometry: None, status: None, checksum: None,
                }).collect(),
                config: Some(serde_json::json!({"seed": 3})),
            };
            let back = RunManifest::from_json(&m.to_json().unwrap()).unwrap();
            prop_assert_eq!(m, back);
        }
    }
}
