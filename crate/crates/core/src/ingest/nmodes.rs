//! `NMODES v1` normal-mode text format.
//!
//! ```text
//! #NMODES 1
//! natoms 3
//! modes 3
//! atoms
//! O 15.999 0.0 0.0 0.117
//! ...
//! frequencies_cm
//! 1 1595.2
//! ...
//! normal_modes
//! <3·natoms rows of N whitespace-separated floats>
//! ```
//!
//! Anything after `#` on a line is a comment, except the leading magic line.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::physics::{orthonormality_deviation, Atom, Geometry, ModeSet, ORTHONORMALITY_TOL};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeParseOptions {
    /// Drop modes below `min_frequency` instead of rejecting the file.
    pub skip_low_frequencies: bool,
    /// cm⁻¹; modes below this are treated as translations/rotations or noise.
    pub min_frequency: f64,
}

impl Default for ModeParseOptions {
    fn default() -> Self {
        ModeParseOptions {
            skip_low_frequencies: false,
            min_frequency: 1.0,
        }
    }
}

pub fn parse_mode_file(text: &str) -> Result<ModeSet> {
    parse_mode_file_with(text, &ModeParseOptions::default())
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Atoms,
    Frequencies,
    Modes,
}

pub fn parse_mode_file_with(text: &str, opts: &ModeParseOptions) -> Result<ModeSet> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());

    match lines.next() {
        Some((n, l)) => {
            let mut t = l.split_whitespace();
            if t.next() != Some("#NMODES") {
                return Err(Error::parse(n, "expected `#NMODES 1` header"));
            }
            if t.next() != Some("1") {
                return Err(Error::parse(n, "unsupported NMODES version"));
            }
        }
        None => return Err(Error::parse(1, "empty mode file")),
    }

    let mut natoms: Option<(usize, usize)> = None;
    let mut nmodes: Option<(usize, usize)> = None;
    let mut atoms: Vec<Atom> = Vec::new();
    let mut freqs: Vec<(usize, usize, f64)> = Vec::new(); // (line, label, value)
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let (mut atoms_line, mut freq_line, mut modes_line) = (0, 0, 0);
    let mut section = Section::None;

    for (n, raw) in lines {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens[0] {
            "natoms" | "modes" => {
                if tokens.len() != 2 {
                    return Err(Error::parse(n, format!("`{}` takes one integer", tokens[0])));
                }
                let v: usize = tokens[1]
                    .parse()
                    .map_err(|_| Error::parse(n, format!("invalid count `{}`", tokens[1])))?;
                let slot = if tokens[0] == "natoms" { &mut natoms } else { &mut nmodes };
                if slot.is_some() {
                    return Err(Error::parse(n, format!("duplicate `{}`", tokens[0])));
                }
                *slot = Some((v, n));
                section = Section::None;
                continue;
            }
            "atoms" | "frequencies_cm" | "normal_modes" => {
                if tokens.len() != 1 {
                    return Err(Error::parse(n, format!("malformed section header `{line}`")));
                }
                let (sec, at) = match tokens[0] {
                    "atoms" => (Section::Atoms, &mut atoms_line),
                    "frequencies_cm" => (Section::Frequencies, &mut freq_line),
                    _ => (Section::Modes, &mut modes_line),
                };
                if *at != 0 {
                    return Err(Error::parse(n, format!("duplicate section `{}`", tokens[0])));
                }
                *at = n;
                section = sec;
                continue;
            }
            _ => {}
        }
        match section {
            Section::None => {
                return Err(Error::parse(n, format!("unexpected line `{line}` outside a section")))
            }
            Section::Atoms => {
                if tokens.len() != 5 {
                    return Err(Error::parse(n, "atom line needs: element mass x y z"));
                }
                let nums = parse_floats(&tokens[1..], n)?;
                atoms.push(Atom {
                    element: tokens[0].to_string(),
                    mass: nums[0],
                    position: [nums[1], nums[2], nums[3]],
                });
            }
            Section::Frequencies => {
                if tokens.len() != 2 {
                    return Err(Error::parse(n, "frequency line needs: index value"));
                }
                let label: usize = tokens[0]
                    .parse()
                    .map_err(|_| Error::parse(n, format!("invalid mode index `{}`", tokens[0])))?;
                let v = parse_floats(&tokens[1..], n)?[0];
                freqs.push((n, label, v));
            }
            Section::Modes => rows.push(parse_floats(&tokens, n)?),
        }
    }

    let (natoms, _) = natoms.ok_or_else(|| Error::parse(1, "missing `natoms`"))?;
    let (nmodes, nmodes_at) = nmodes.ok_or_else(|| Error::parse(1, "missing `modes`"))?;
    for (at, name) in [(atoms_line, "atoms"), (freq_line, "frequencies_cm"), (modes_line, "normal_modes")] {
        if at == 0 {
            return Err(Error::parse(1, format!("missing section `{name}`")));
        }
    }
    if atoms.len() != natoms {
        return Err(Error::parse(
            atoms_line,
            format!("natoms = {natoms} but {} atom lines", atoms.len()),
        ));
    }
    let geometry = Geometry::new(atoms).map_err(|e| Error::parse(atoms_line, e.to_string()))?;
    if nmodes > 3 * natoms {
        return Err(Error::parse(nmodes_at, format!("{nmodes} modes exceed 3*natoms = {}", 3 * natoms)));
    }
    if freqs.len() != nmodes {
        return Err(Error::parse(
            freq_line,
            format!("modes = {nmodes} but {} frequency lines", freqs.len()),
        ));
    }
    let mut seen = std::collections::BTreeSet::new();
    for &(n, label, _) in &freqs {
        if !seen.insert(label) {
            return Err(Error::parse(n, format!("duplicate mode index {label}")));
        }
    }
    if rows.len() != 3 * natoms {
        return Err(Error::parse(
            modes_line,
            format!("expected {} rows (3*natoms), found {}", 3 * natoms, rows.len()),
        ));
    }
    if let Some(r) = rows.iter().find(|r| r.len() != nmodes) {
        return Err(Error::parse(
            modes_line,
            format!("modes = {nmodes} but matrix has {} columns", r.len()),
        ));
    }

    let mut keep: Vec<usize> = Vec::with_capacity(nmodes);
    for (col, &(n, _, w)) in freqs.iter().enumerate() {
        if !w.is_finite() || w < opts.min_frequency {
            if opts.skip_low_frequencies {
                continue;
            }
            return Err(Error::parse(
                n,
                format!("frequency {w} cm^-1 below cutoff {} (use the skip option to drop it)", opts.min_frequency),
            ));
        }
        keep.push(col);
    }
    keep.sort_by(|&a, &b| freqs[a].2.total_cmp(&freqs[b].2));

    let dim = 3 * natoms;
    let l = DMatrix::from_fn(dim, keep.len(), |i, j| rows[i][keep[j]]);
    let dev = orthonormality_deviation(&l);
    if dev > ORTHONORMALITY_TOL {
        return Err(Error::parse(
            modes_line,
            format!("normal mode columns not orthonormal (max |LᵀL − I| = {dev:e})"),
        ));
    }
    let frequencies = keep.iter().map(|&c| freqs[c].2).collect();
    let labels = keep.iter().map(|&c| freqs[c].1).collect();
    ModeSet::new(frequencies, l, geometry, labels).map_err(|e| Error::parse(modes_line, e.to_string()))
}

fn parse_floats(tokens: &[&str], line: usize) -> Result<Vec<f64>> {
    tokens
        .iter()
        .map(|t| t.parse::<f64>().map_err(|_| Error::parse(line, format!("invalid number `{t}`"))))
        .collect()
}

/// Serialize a mode set; parsing the output reproduces it exactly.
pub fn write_mode_file(m: &ModeSet) -> String {
    let mut s = String::new();
    let natoms = m.geometry.natoms();
    writeln!(s, "#NMODES 1").unwrap();
    writeln!(s, "natoms {natoms}").unwrap();
    writeln!(s, "modes {}", m.len()).unwrap();
    writeln!(s, "atoms").unwrap();
    for a in &m.geometry.atoms {
        let [x, y, z] = a.position;
        writeln!(s, "{} {} {} {} {}", a.element, a.mass, x, y, z).unwrap();
    }
    writeln!(s, "frequencies_cm").unwrap();
    for (label, w) in m.labels.iter().zip(&m.frequencies) {
        writeln!(s, "{label} {w}").unwrap();
    }
    writeln!(s, "normal_modes").unwrap();
    for i in 0..3 * natoms {
        let row: Vec<String> = (0..m.len()).map(|j| m.eigenvectors[(i, j)].to_string()).collect();
        writeln!(s, "{}", row.join(" ")).unwrap();
    }
    s
}
