use crate::physics::GTensor;
use crate::{Error, Result};

const MARKER: &str = "ELECTRONIC G-MATRIX";

/// Extract the first `ELECTRONIC G-MATRIX` block from an output file.
///
/// Non-numeric lines between the marker and the matrix (rulers, captions) are
/// skipped; the matrix itself is three consecutive rows of three numbers.
pub fn parse_gtensor_block(text: &str) -> Result<GTensor> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let header = lines
        .by_ref()
        .find(|(_, l)| l.contains(MARKER))
        .map(|(n, _)| n)
        .ok_or_else(|| Error::parse(1, format!("no `{MARKER}` block found")))?;

    let mut rows: Vec<[f64; 3]> = Vec::with_capacity(3);
    for (n, line) in lines {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let nums: Option<Vec<f64>> = tokens.iter().map(|t| t.parse().ok()).collect();
        match nums {
            Some(v) if !v.is_empty() => {
                if v.len() != 3 {
                    return Err(Error::parse(n, format!("g-matrix row has {} numbers, expected 3", v.len())));
                }
                rows.push([v[0], v[1], v[2]]);
                if rows.len() == 3 {
                    break;
                }
            }
            _ if rows.is_empty() => continue,
            _ => break,
        }
    }
    if rows.len() < 3 {
        return Err(Error::parse(
            header,
            format!("g-matrix block has {} numbers, expected 9", 3 * rows.len()),
        ));
    }
    GTensor::from_rows([rows[0], rows[1], rows[2]]).map_err(|e| Error::parse(header, e.to_string()))
}
