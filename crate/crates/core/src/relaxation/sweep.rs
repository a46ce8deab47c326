use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{relaxation_tensor, relaxation_times, Convention, RelaxationTimes};
use crate::couplings::CouplingTensors;
use crate::exec::Execution;
use crate::physics::{BathSpec, SpinSystem};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    /// K
    pub temperatures: Vec<f64>,
    /// Field magnitudes in mT along the template's field direction.
    pub fields_mt: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub temperature: f64,
    pub field_mt: f64,
    pub omega: f64,
    pub lambda1: Matrix3<f64>,
    pub lambda2: Matrix3<f64>,
    pub quartic: Matrix3<f64>,
    pub g2: Matrix3<f64>,
    pub paper: RelaxationTimes,
    pub dissipator: RelaxationTimes,
}

impl SweepRow {
    pub fn total(&self) -> Matrix3<f64> {
        self.lambda1 + self.lambda2
    }

    pub fn times(&self, c: Convention) -> &RelaxationTimes {
        match c {
            Convention::Paper => &self.paper,
            Convention::Dissipator => &self.dissipator,
        }
    }
}

/// Evaluate the tensor on every (B, T) grid point, field-major. Each point is
/// independent; rows come back in grid order whatever the execution policy.
pub fn sweep(
    c: &CouplingTensors,
    template: &SpinSystem,
    bath: &BathSpec,
    grid: &SweepGrid,
    exec: Execution,
) -> Result<Vec<SweepRow>> {
    if grid.temperatures.is_empty() || grid.fields_mt.is_empty() {
        return Err(Error::Invalid("sweep grid needs at least one temperature and one field".into()));
    }
    let dir: Vector3<f64> = template.field_direction().unwrap_or_else(|| c.field_vector());
    let points: Vec<(f64, f64)> = grid
        .fields_mt
        .iter()
        .flat_map(|&b| grid.temperatures.iter().map(move |&t| (b, t)))
        .collect();
    let axis = template.axis_vector();
    exec.try_map(&points, |&(b, t)| {
        let spin = SpinSystem {
            field_mt: [dir.x * b, dir.y * b, dir.z * b],
            ..template.clone()
        };
        let tensor = relaxation_tensor(c, &bath.at_temperature(t), &spin)?;
        let total = tensor.total();
        Ok(SweepRow {
            temperature: t,
            field_mt: b,
            omega: tensor.meta.omega,
            lambda1: tensor.lambda1(),
            lambda2: tensor.lambda2(),
            quartic: tensor.second.quartic,
            g2: tensor.second.g2,
            paper: relaxation_times(&total, &axis, Convention::Paper)?,
            dissipator: relaxation_times(&total, &axis, Convention::Dissipator)?,
        })
    })
}
