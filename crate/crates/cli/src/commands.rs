use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;
use serde_json::Value;
use spinlat::couplings::{assemble, convergence_check, ConvergenceOptions, CouplingTensors};
use spinlat::dynamics::{
    fit_decay_rate, lindblad_evolve, redfield_evolve_with, DensityMatrix, FitOptions, FitResult,
    IntegratorOptions, JumpBasisDissipator, Observable, PhononSpectrum, SpectralDensity, SpinTrajectory, TimeGrid,
};
use spinlat::ingest::{generate_displacements, load_run_set, parse_mode_file, write_plan, DerivativeOrder};
use spinlat::relaxation::{
    mat_rows, mode_attribution, relaxation_tensor, sweep, sweep_csv, tensor_report, Attribution, Convention,
    ModeShare, RelaxationTimes, SweepGrid,
};
use spinlat::{BathSpec, Execution, GTensor, RamanPairing, SpinSystem};

use crate::config::{Model, RunConfig};
use crate::output::{dat_blocks, display, OutputDir};
use crate::{validate, CliError, Command, PhysicsArgs};

/// Free-electron g used when neither the config nor the couplings file
/// supplies an equilibrium g-tensor.
const FREE_ELECTRON_G: f64 = 2.002_319_304_36;

pub fn dispatch(cmd: Command, mut cfg: RunConfig, exec: Execution) -> Result<(), CliError> {
    match cmd {
        Command::Displace(a) => {
            set_some(&mut cfg.paths.modes, a.modes);
            set_opt(&mut cfg.numerics.delta_angstrom, a.delta);
            set_opt(&mut cfg.numerics.order, a.order);
            if let Some(p) = a.pairing {
                cfg.physics.pairing = parse_pairing(&p)?;
            }
            cfg.validate()?;
            displace(&cfg)
        }
        Command::Couplings(a) => {
            set_some(&mut cfg.paths.manifest, a.manifest);
            set_some(&mut cfg.paths.modes, a.modes);
            set_some(&mut cfg.paths.convergence_manifest, a.converge_with);
            if a.field_dir.is_some() {
                cfg.physics.field_direction = a.field_dir;
            }
            cfg.validate()?;
            couplings(&cfg, exec)
        }
        Command::Tensor(a) => {
            apply_physics(&mut cfg, &a.physics)?;
            if a.top.is_some() {
                cfg.numerics.top = a.top;
            }
            cfg.validate()?;
            tensor(&cfg, false)
        }
        Command::Attribute(a) => {
            apply_physics(&mut cfg, &a.physics)?;
            if a.top.is_some() {
                cfg.numerics.top = a.top;
            }
            cfg.validate()?;
            tensor(&cfg, true)
        }
        Command::Sweep(a) => {
            apply_physics(&mut cfg, &a.physics)?;
            cfg.validate()?;
            run_sweep(&cfg, exec)
        }
        Command::Dynamics(a) => {
            apply_physics(&mut cfg, &a.physics)?;
            let n = &mut cfg.numerics;
            if let Some(m) = a.model {
                n.model = m.parse().map_err(|e: String| CliError::validation(format!("--model: {e}")))?;
            }
            n.secular |= a.secular;
            if a.t1_end.is_some() {
                n.t1_end_us = a.t1_end;
            }
            set_opt(&mut n.t1_steps, a.t1_steps);
            if a.t2_end.is_some() {
                n.t2_end_us = a.t2_end;
            }
            set_opt(&mut n.t2_steps, a.t2_steps);
            set_opt(&mut n.fit_t_start_us, a.fit_start);
            if a.fit_end.is_some() {
                n.fit_t_end_us = a.fit_end;
            }
            set_opt(&mut n.safety, a.safety);
            if a.max_step.is_some() {
                n.max_step_us = a.max_step;
            }
            if a.no_trajectories {
                n.write_trajectories = false;
            }
            cfg.validate()?;
            dynamics(&cfg, exec)
        }
        Command::Validate(a) => {
            apply_physics(&mut cfg, &a.physics)?;
            set_some(&mut cfg.paths.manifest, a.manifest);
            set_some(&mut cfg.paths.convergence_manifest, a.converge_with);
            set_opt(&mut cfg.seed, a.seed);
            cfg.validate()?;
            validate::run(&cfg, exec)
        }
    }
}

fn set_opt<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn set_some<T>(slot: &mut Option<T>, v: Option<T>) {
    if v.is_some() {
        *slot = v;
    }
}

fn parse_pairing(s: &str) -> Result<RamanPairing, CliError> {
    s.parse().map_err(|e: spinlat::Error| CliError::validation(format!("--pairing: {e}")))
}

fn apply_physics(cfg: &mut RunConfig, a: &PhysicsArgs) -> Result<(), CliError> {
    set_some(&mut cfg.paths.couplings, a.couplings.clone());
    let p = &mut cfg.physics;
    set_opt(&mut p.temperatures_k, a.temperatures.clone().map(|g| g.0));
    set_opt(&mut p.fields_mt, a.fields.clone().map(|g| g.0));
    set_some(&mut p.field_direction, a.field_dir);
    set_some(&mut p.axis, a.axis);
    if let Some(l) = a.linewidth {
        p.linewidth.default = l;
    }
    if let Some(g) = a.gamma {
        p.gamma.default = g;
    }
    if let Some(s) = &a.pairing {
        p.pairing = parse_pairing(s)?;
    }
    if let Some(s) = &a.convention {
        p.convention = s
            .parse()
            .map_err(|e: spinlat::Error| CliError::validation(format!("--convention: {e}")))?;
    }
    set_some(&mut p.omega_override, a.omega);
    Ok(())
}

fn require<'a>(p: &'a Option<PathBuf>, key: &str, flag: &str) -> Result<&'a Path, CliError> {
    let p = p
        .as_deref()
        .ok_or_else(|| CliError::validation(format!("config key `{key}` is not set (or pass {flag})")))?;
    if !p.exists() {
        return Err(CliError::validation(format!("config key `{key}`: {} does not exist", p.display())));
    }
    Ok(p)
}

fn read_input(p: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(p).map_err(|e| CliError::validation(format!("cannot read {}: {e}", p.display())))
}

fn displace(cfg: &RunConfig) -> Result<(), CliError> {
    let modes_path = require(&cfg.paths.modes, "paths.modes", "--modes")?;
    let modes = parse_mode_file(&read_input(modes_path)?)?;
    let order = DerivativeOrder::try_from(cfg.numerics.order)?;
    let plan = generate_displacements(&modes, cfg.numerics.delta_angstrom, order, cfg.physics.pairing)?;
    let out = OutputDir::create(cfg)?;
    let abs = std::fs::canonicalize(modes_path).unwrap_or_else(|_| modes_path.to_path_buf());
    let manifest = write_plan(&plan, Some(&display(&abs)), &out.root, Some(out.config())).map_err(|e| match e {
        spinlat::Error::Io { .. } => CliError::runtime(e.to_string()),
        other => other.into(),
    })?;
    println!(
        "{} runs ({} modes, delta {} A) -> {}",
        plan.len(),
        modes.len(),
        plan.delta,
        display(&out.path("manifest.json"))
    );
    println!("  single-mode runs: {}, pair runs: {}", manifest.runs.len(), manifest.pairs.len());
    Ok(())
}

fn couplings(cfg: &RunConfig, exec: Execution) -> Result<(), CliError> {
    let manifest = require(&cfg.paths.manifest, "paths.manifest", "--manifest")?;
    let modes = match &cfg.paths.modes {
        Some(_) => {
            let p = require(&cfg.paths.modes, "paths.modes", "--modes")?;
            Some(parse_mode_file(&read_input(p)?)?)
        }
        None => None,
    };
    let dir = Vector3::from(cfg.physics.field_direction.unwrap_or([0.0, 0.0, 1.0]));
    let set = load_run_set(manifest, modes.clone(), exec)?;
    let c = assemble(&set, &dir, exec)?;
    let out = OutputDir::create(cfg)?;

    let mut doc: Value = serde_json::from_str(&c.to_json()?).map_err(|e| CliError::runtime(e.to_string()))?;
    doc["baseline_g"] = serde_json::to_value(set.baseline.rows()).expect("rows serialize");
    let path = out.json("couplings.json", &doc)?;
    println!("{} modes, {} mixed pairs -> {}", c.len(), c.mixed_pairs.len(), display(&path));

    if cfg.paths.convergence_manifest.is_some() {
        let other = require(&cfg.paths.convergence_manifest, "paths.convergence_manifest", "--converge-with")?;
        let set2 = load_run_set(other, modes, exec)?;
        let (coarse, fine) = if set.delta > set2.delta { (&set, &set2) } else { (&set2, &set) };
        let opts = ConvergenceOptions {
            threshold: cfg.numerics.convergence_threshold,
            ..ConvergenceOptions::default()
        };
        let report = convergence_check(coarse, fine, &dir, opts)?;
        let path = out.json("convergence.json", &report)?;
        println!(
            "convergence {} vs {} A: max deviation {:.3e}, {} of {} entries above {} -> {}",
            report.delta_coarse,
            report.delta_fine,
            report.max_deviation(),
            report.flagged.len(),
            report.entries.len(),
            report.threshold,
            display(&path)
        );
    }
    Ok(())
}

/// Couplings and the baseline g-tensor stored beside them.
pub(crate) struct Inputs {
    pub couplings: CouplingTensors,
    pub g0: GTensor,
}

pub(crate) fn load_couplings(cfg: &RunConfig) -> Result<Inputs, CliError> {
    let path = require(&cfg.paths.couplings, "paths.couplings", "--couplings")?;
    let text = read_input(path)?;
    let couplings = CouplingTensors::from_json(&text)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| CliError::validation(e.to_string()))?;
    let stored = match doc.get("baseline_g") {
        Some(v) => {
            let rows: [[f64; 3]; 3] = serde_json::from_value(v.clone())
                .map_err(|e| CliError::validation(format!("{}: `baseline_g`: {e}", path.display())))?;
            Some(GTensor::from_rows(rows)?)
        }
        None => None,
    };
    let g0 = cfg
        .g0()?
        .or(stored)
        .unwrap_or_else(|| GTensor(Matrix3::identity() * FREE_ELECTRON_G));
    Ok(Inputs { couplings, g0 })
}

pub(crate) fn field_direction(cfg: &RunConfig, c: &CouplingTensors) -> Vector3<f64> {
    let d = cfg.physics.field_direction.map(Vector3::from).unwrap_or_else(|| c.field_vector());
    d / d.norm()
}

pub(crate) fn spin_at(cfg: &RunConfig, inputs: &Inputs, field_mt: f64) -> Result<SpinSystem, CliError> {
    let dir = field_direction(cfg, &inputs.couplings);
    let axis = cfg.physics.axis.map(Vector3::from).unwrap_or(dir);
    let b = dir * field_mt;
    let mut s = SpinSystem::with_axis(inputs.g0, [b.x, b.y, b.z], [axis.x, axis.y, axis.z])?;
    s.omega_override = cfg.physics.omega_override;
    Ok(s)
}

pub(crate) fn bath_at(cfg: &RunConfig, t: f64) -> Result<BathSpec, CliError> {
    let b = BathSpec {
        temperature: t,
        gamma: cfg.physics.gamma.clone(),
        linewidth: cfg.physics.linewidth.clone(),
        raman_pairing: cfg.physics.pairing,
    };
    b.validate()?;
    Ok(b)
}

fn single(v: &[f64], key: &str) -> Result<f64, CliError> {
    match v {
        [x] => Ok(*x),
        _ => Err(CliError::validation(format!("config key `{key}`: this subcommand takes one value, got {}", v.len()))),
    }
}

fn tensor(cfg: &RunConfig, attribution_only: bool) -> Result<(), CliError> {
    let inputs = load_couplings(cfg)?;
    let t = single(&cfg.physics.temperatures_k, "physics.temperatures_k")?;
    let b = single(&cfg.physics.fields_mt, "physics.fields_mt")?;
    let spin = spin_at(cfg, &inputs, b)?;
    let bath = bath_at(cfg, t)?;
    let c = &inputs.couplings;
    let tensor = relaxation_tensor(c, &bath, &spin)?;
    let attr = mode_attribution(&tensor, &c.labels, &c.frequencies, cfg.numerics.top);
    let out = OutputDir::create(cfg)?;
    if attribution_only {
        let csv = attribution_csv(&attr)?;
        let p1 = out.text("attribution.csv", &csv)?;
        let p2 = out.json("attribution.json", &AttributionDoc { temperature_k: t, field_mt: b, omega_cm: tensor.meta.omega, attribution: &attr })?;
        print!("{}", attribution_table(&attr));
        println!("-> {}, {}", display(&p1), display(&p2));
        return Ok(());
    }
    let report = tensor_report(&tensor, &spin.axis_vector(), &c.labels, &c.frequencies, attr)?;
    let path = out.json("tensor.json", &report)?;
    let times = match cfg.physics.convention {
        Convention::Paper => &report.paper,
        Convention::Dissipator => &report.dissipator,
    };
    println!("T = {t} K, B = {b} mT, Omega = {:.6} cm^-1", tensor.meta.omega);
    println!(
        "Lambda (cm^-1): diag [{:.6e}, {:.6e}, {:.6e}], trace {:.6e}",
        report.lambda[0][0],
        report.lambda[1][1],
        report.lambda[2][2],
        tensor.total().trace()
    );
    print_times(times);
    let top: Vec<String> = report.attribution.second.iter().take(4).map(|m| m.label.to_string()).collect();
    println!("top second-order modes: {}", top.join(", "));
    println!("-> {}", display(&path));
    Ok(())
}

fn print_times(t: &RelaxationTimes) {
    println!(
        "{:?} convention: 1/T1 = {:.6e} cm^-1, 1/T2 = {:.6e} cm^-1, T1 = {:.6e} us, T2 = {:.6e} us",
        t.convention, t.rate1, t.rate2, t.t1_us, t.t2_us
    );
}

#[derive(Serialize)]
struct AttributionDoc<'a> {
    temperature_k: f64,
    field_mt: f64,
    omega_cm: f64,
    attribution: &'a Attribution,
}

fn attribution_csv(a: &Attribution) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["order", "rank", "label", "frequency_cm", "trace_cm", "trace_share"];
    let comps = ["share_xx", "share_xy", "share_xz", "share_yy", "share_yz", "share_zz"];
    header.extend(comps);
    w.write_record(&header).map_err(|e| CliError::runtime(e.to_string()))?;
    for (order, rows) in [("first", &a.first), ("second", &a.second)] {
        for (rank, m) in rows.iter().enumerate() {
            let s = &m.share;
            let mut rec = vec![
                order.to_string(),
                (rank + 1).to_string(),
                m.label.to_string(),
                m.frequency.to_string(),
                m.trace.to_string(),
                m.trace_share.to_string(),
            ];
            for (i, j) in [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)] {
                rec.push(s[(i, j)].to_string());
            }
            w.write_record(&rec).map_err(|e| CliError::runtime(e.to_string()))?;
        }
    }
    let bytes = w.into_inner().map_err(|e| CliError::runtime(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("utf-8"))
}

fn attribution_table(a: &Attribution) -> String {
    let mut s = String::new();
    let mut block = |title: &str, rows: &[ModeShare]| {
        writeln!(s, "{title}").unwrap();
        writeln!(s, "  {:>4} {:>6} {:>12} {:>13} {:>8}", "rank", "mode", "freq_cm", "trace_cm", "share").unwrap();
        for (i, m) in rows.iter().enumerate() {
            writeln!(s, "  {:>4} {:>6} {:>12.3} {:>13.5e} {:>8.4}", i + 1, m.label, m.frequency, m.trace, m.trace_share)
                .unwrap();
        }
    };
    block("first order", &a.first);
    block("second order", &a.second);
    s
}

#[derive(Serialize)]
struct SweepPoint {
    temperature_k: f64,
    field_mt: f64,
    omega_cm: f64,
    lambda: [[f64; 3]; 3],
    lambda1: [[f64; 3]; 3],
    lambda2: [[f64; 3]; 3],
    paper: RelaxationTimes,
    dissipator: RelaxationTimes,
}

#[derive(Serialize)]
struct SweepDoc {
    units: &'static str,
    convention: Convention,
    points: Vec<SweepPoint>,
}

fn per_us(t_us: f64) -> f64 {
    if t_us.is_infinite() {
        0.0
    } else {
        1.0 / t_us
    }
}

fn run_sweep(cfg: &RunConfig, exec: Execution) -> Result<(), CliError> {
    let inputs = load_couplings(cfg)?;
    let template = spin_at(cfg, &inputs, cfg.physics.fields_mt[0])?;
    let bath = bath_at(cfg, cfg.physics.temperatures_k[0])?;
    let grid = SweepGrid {
        temperatures: cfg.physics.temperatures_k.clone(),
        fields_mt: cfg.physics.fields_mt.clone(),
    };
    let rows = sweep(&inputs.couplings, &template, &bath, &grid, exec)?;
    let conv = cfg.physics.convention;
    let out = OutputDir::create(cfg)?;
    let csv_path = out.text("sweep.csv", &sweep_csv(&rows, conv)?)?;
    let doc = SweepDoc {
        units: "cm^-1 for tensors and rates, us for times",
        convention: conv,
        points: rows
            .iter()
            .map(|r| SweepPoint {
                temperature_k: r.temperature,
                field_mt: r.field_mt,
                omega_cm: r.omega,
                lambda: mat_rows(&r.total()),
                lambda1: mat_rows(&r.lambda1),
                lambda2: mat_rows(&r.lambda2),
                paper: r.paper,
                dissipator: r.dissipator,
            })
            .collect(),
    };
    let json_path = out.json("sweep.json", &doc)?;
    let mut t1_blocks = Vec::new();
    let mut t2_blocks = Vec::new();
    for (i, b) in grid.fields_mt.iter().enumerate() {
        let chunk = &rows[i * grid.temperatures.len()..(i + 1) * grid.temperatures.len()];
        let label = format!("field_mt = {b}");
        t1_blocks.push((label.clone(), chunk.iter().map(|r| (r.temperature, per_us(r.times(conv).t1_us))).collect()));
        t2_blocks.push((label, chunk.iter().map(|r| (r.temperature, per_us(r.times(conv).t2_us))).collect()));
    }
    let p1 = out.text("inv_t1.dat", &dat_blocks(["temperature_k", "inv_t1_per_us"], &t1_blocks))?;
    let p2 = out.text("inv_t2.dat", &dat_blocks(["temperature_k", "inv_t2_per_us"], &t2_blocks))?;
    println!(
        "{} points ({} temperatures x {} fields, {:?} convention)",
        rows.len(),
        grid.temperatures.len(),
        grid.fields_mt.len(),
        conv
    );
    println!("-> {}, {}, {}, {}", display(&csv_path), display(&json_path), display(&p1), display(&p2));
    Ok(())
}

/// Orthonormal frame whose third row is `axis`.
pub(crate) fn axis_frame(axis: &Vector3<f64>) -> Matrix3<f64> {
    let e3 = axis.normalize();
    if e3 == Vector3::z() {
        return Matrix3::identity();
    }
    let helper = if e3.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let e1 = (helper - e3 * e3.dot(&helper)).normalize();
    let e2 = e3.cross(&e1);
    Matrix3::from_rows(&[e1.transpose(), e2.transpose(), e3.transpose()])
}

struct Rotated<'a> {
    inner: &'a dyn SpectralDensity,
    frame: Matrix3<f64>,
}

impl SpectralDensity for Rotated<'_> {
    fn at(&self, omega: f64) -> Matrix3<f64> {
        self.frame * self.inner.at(omega) * self.frame.transpose()
    }
}

#[derive(Debug, Clone, Serialize)]
pub(crate) struct ModelRun {
    pub model: &'static str,
    pub t1_fit: FitResult,
    pub t2_fit: FitResult,
    /// μs⁻¹
    pub inv_t1_per_us: f64,
    pub inv_t2_per_us: f64,
    #[serde(skip)]
    pub trajectories: Option<(SpinTrajectory, SpinTrajectory)>,
}

#[derive(Debug, Clone, Serialize)]
pub(crate) struct DynamicsPoint {
    pub temperature_k: f64,
    pub field_mt: f64,
    pub omega_cm: f64,
    pub t1_grid: TimeGrid,
    pub t2_grid: TimeGrid,
    pub paper: RelaxationTimes,
    pub dissipator: RelaxationTimes,
    pub runs: Vec<ModelRun>,
}

fn auto_grid(end: Option<f64>, steps: usize, analytic_us: f64, key: &str) -> Result<TimeGrid, CliError> {
    let t_end = match end {
        Some(t) => t,
        None if analytic_us.is_finite() && analytic_us > 0.0 => 5.0 * analytic_us,
        None => {
            return Err(CliError::validation(format!(
                "analytic rate is zero; set config key `numerics.{key}`"
            )))
        }
    };
    Ok(TimeGrid::new(t_end, steps)?)
}

pub(crate) fn dynamics_point(
    cfg: &RunConfig,
    inputs: &Inputs,
    t: f64,
    b: f64,
    keep_trajectories: bool,
) -> Result<DynamicsPoint, CliError> {
    let c = &inputs.couplings;
    let spin = spin_at(cfg, inputs, b)?;
    let bath = bath_at(cfg, t)?;
    let tensor = relaxation_tensor(c, &bath, &spin)?;
    let total = tensor.total();
    let axis = spin.axis_vector();
    let paper = spinlat::relaxation::relaxation_times(&total, &axis, Convention::Paper)?;
    let dissipator = spinlat::relaxation::relaxation_times(&total, &axis, Convention::Dissipator)?;
    let n = &cfg.numerics;
    let t1_grid = auto_grid(n.t1_end_us, n.t1_steps, dissipator.t1_us, "t1_end_us")?;
    let t2_grid = auto_grid(n.t2_end_us, n.t2_steps, dissipator.t2_us, "t2_end_us")?;
    let opts = IntegratorOptions {
        safety: n.safety,
        max_step: n.max_step_us,
    };
    let fit = FitOptions {
        t_start: n.fit_t_start_us,
        t_end: n.fit_t_end_us,
        ..FitOptions::default()
    };
    let frame = axis_frame(&axis);
    let omega = tensor.meta.omega;

    let mut runs = Vec::new();
    let finish = |model, t1: SpinTrajectory, t2: SpinTrajectory| -> Result<ModelRun, CliError> {
        let t1_fit = fit_decay_rate(&t1, Observable::SzMinusEq, fit)?;
        let t2_fit = fit_decay_rate(&t2, Observable::CoherenceAbs, fit)?;
        Ok(ModelRun {
            model,
            inv_t1_per_us: t1_fit.rate,
            inv_t2_per_us: t2_fit.rate,
            t1_fit,
            t2_fit,
            trajectories: keep_trajectories.then_some((t1, t2)),
        })
    };
    if matches!(n.model, Model::Lindblad | Model::Both) {
        let lambda = frame * total * frame.transpose();
        let d = JumpBasisDissipator::new((lambda + lambda.transpose()) * 0.5, omega)?;
        let t1 = lindblad_evolve(&DensityMatrix::excited(), &d, &t1_grid, opts)?;
        let t2 = lindblad_evolve(&DensityMatrix::plus_x(), &d, &t2_grid, opts)?;
        runs.push(finish("lindblad", t1, t2)?);
    }
    if matches!(n.model, Model::Redfield | Model::Both) {
        let spec = PhononSpectrum::new(c, &bath, &spin)?;
        let rot = Rotated { inner: &spec, frame };
        let t1 = redfield_evolve_with(&DensityMatrix::excited(), &rot, omega, &t1_grid, n.secular, opts)?;
        let t2 = redfield_evolve_with(&DensityMatrix::plus_x(), &rot, omega, &t2_grid, n.secular, opts)?;
        runs.push(finish("redfield", t1, t2)?);
    }
    Ok(DynamicsPoint {
        temperature_k: t,
        field_mt: b,
        omega_cm: omega,
        t1_grid,
        t2_grid,
        paper,
        dissipator,
        runs,
    })
}

#[derive(Serialize)]
struct DynamicsDoc<'a> {
    units: &'static str,
    secular: bool,
    points: &'a [DynamicsPoint],
}

fn dynamics(cfg: &RunConfig, exec: Execution) -> Result<(), CliError> {
    let inputs = load_couplings(cfg)?;
    let points: Vec<(f64, f64)> = cfg
        .physics
        .fields_mt
        .iter()
        .flat_map(|&b| cfg.physics.temperatures_k.iter().map(move |&t| (b, t)))
        .collect();
    let keep = cfg.numerics.write_trajectories;
    let results = exec.try_map(&points, |&(b, t)| dynamics_point(cfg, &inputs, t, b, keep))?;
    let out = OutputDir::create(cfg)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let header = [
        "temperature_k",
        "field_mt",
        "omega_cm",
        "model",
        "inv_t1_fit_per_us",
        "inv_t2_fit_per_us",
        "inv_t1_dissipator_per_us",
        "inv_t2_dissipator_per_us",
        "inv_t1_paper_per_us",
        "inv_t2_paper_per_us",
        "t1_high_residual",
        "t2_high_residual",
    ];
    w.write_record(header).map_err(|e| CliError::runtime(e.to_string()))?;
    for (i, p) in results.iter().enumerate() {
        for r in &p.runs {
            w.write_record([
                p.temperature_k.to_string(),
                p.field_mt.to_string(),
                p.omega_cm.to_string(),
                r.model.to_string(),
                r.inv_t1_per_us.to_string(),
                r.inv_t2_per_us.to_string(),
                per_us(p.dissipator.t1_us).to_string(),
                per_us(p.dissipator.t2_us).to_string(),
                per_us(p.paper.t1_us).to_string(),
                per_us(p.paper.t2_us).to_string(),
                r.t1_fit.high_residual.to_string(),
                r.t2_fit.high_residual.to_string(),
            ])
            .map_err(|e| CliError::runtime(e.to_string()))?;
            if let Some((t1, t2)) = &r.trajectories {
                let note = format!("model = {}, temperature_k = {}, field_mt = {}", r.model, p.temperature_k, p.field_mt);
                out.text(&format!("trajectories/{}_t1_{i:03}.csv", r.model), &t1.to_csv(Some(&note)))?;
                out.text(&format!("trajectories/{}_t2_{i:03}.csv", r.model), &t2.to_csv(Some(&note)))?;
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| CliError::runtime(e.to_string()))?;
    let csv_path = out.text("dynamics.csv", &String::from_utf8(bytes).expect("utf-8"))?;
    let json_path = out.json(
        "dynamics.json",
        &DynamicsDoc {
            units: "cm^-1 for omega, us^-1 for fitted rates, us for times",
            secular: cfg.numerics.secular,
            points: &results,
        },
    )?;

    let nt = cfg.physics.temperatures_k.len();
    let mut t1_blocks = Vec::new();
    let mut t2_blocks = Vec::new();
    let models: Vec<&str> = results.first().map(|p| p.runs.iter().map(|r| r.model).collect()).unwrap_or_default();
    for (fi, b) in cfg.physics.fields_mt.iter().enumerate() {
        let chunk = &results[fi * nt..(fi + 1) * nt];
        for (mi, m) in models.iter().enumerate() {
            let label = format!("model = {m}, field_mt = {b}");
            t1_blocks.push((label.clone(), chunk.iter().map(|p| (p.temperature_k, p.runs[mi].inv_t1_per_us)).collect()));
            t2_blocks.push((label, chunk.iter().map(|p| (p.temperature_k, p.runs[mi].inv_t2_per_us)).collect()));
        }
    }
    let p1 = out.text("dynamics_inv_t1.dat", &dat_blocks(["temperature_k", "inv_t1_per_us"], &t1_blocks))?;
    let p2 = out.text("dynamics_inv_t2.dat", &dat_blocks(["temperature_k", "inv_t2_per_us"], &t2_blocks))?;

    for p in &results {
        for r in &p.runs {
            println!(
                "T = {} K, B = {} mT, {}: 1/T1 = {:.6e} us^-1 (analytic {:.6e}), 1/T2 = {:.6e} us^-1 (analytic {:.6e})",
                p.temperature_k,
                p.field_mt,
                r.model,
                r.inv_t1_per_us,
                per_us(p.dissipator.t1_us),
                r.inv_t2_per_us,
                per_us(p.dissipator.t2_us)
            );
        }
    }
    println!("-> {}, {}, {}, {}", display(&csv_path), display(&json_path), display(&p1), display(&p2));
    Ok(())
}
