//! Invariant checks against the supplied data.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::Rng;
use serde::Serialize;
use spinlat::couplings::{assemble, convergence_check, ConvergenceOptions};
use spinlat::dynamics::{fit_decay_rate, lindblad_evolve, DensityMatrix, FitOptions, IntegratorOptions, JumpBasisDissipator, Observable, TimeGrid};
use spinlat::fixtures::{random_psd, rng};
use spinlat::ingest::load_run_set;
use spinlat::physics::CM_TO_PER_MICROSECOND;
use spinlat::relaxation::{relaxation_tensor, relaxation_times, Convention};
use spinlat::Execution;

use crate::commands::{bath_at, field_direction, load_couplings, spin_at, Inputs};
use crate::config::RunConfig;
use crate::output::{display, OutputDir};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
enum Status {
    Pass,
    Fail,
    Skip,
}

#[derive(Debug, Serialize)]
struct Check {
    name: &'static str,
    status: Status,
    detail: String,
}

fn check(name: &'static str, ok: bool, detail: String) -> Check {
    Check {
        name,
        status: if ok { Status::Pass } else { Status::Fail },
        detail,
    }
}

fn skip(name: &'static str, why: &str) -> Check {
    Check {
        name,
        status: Status::Skip,
        detail: why.to_string(),
    }
}

fn rel(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let s = a.amax().max(b.amax());
    if s == 0.0 {
        0.0
    } else {
        (a - b).amax() / s
    }
}

fn load(cfg: &RunConfig, exec: Execution) -> Result<Inputs, CliError> {
    if cfg.paths.couplings.is_some() {
        return load_couplings(cfg);
    }
    let Some(m) = cfg.paths.manifest.as_deref() else {
        return Err(CliError::validation("validate needs `paths.couplings` or `paths.manifest`"));
    };
    let set = load_run_set(m, None, exec)?;
    let dir = Vector3::from(cfg.physics.field_direction.unwrap_or([0.0, 0.0, 1.0]));
    let couplings = assemble(&set, &dir, exec)?;
    let g0 = cfg.g0()?.unwrap_or(set.baseline);
    Ok(Inputs { couplings, g0 })
}

pub fn run(cfg: &RunConfig, exec: Execution) -> Result<(), CliError> {
    let inputs = load(cfg, exec)?;
    let c = &inputs.couplings;
    let mut checks = Vec::new();
    checks.push(check(
        "couplings_well_formed",
        true,
        format!("{} modes, {} mixed pairs, finite and symmetric", c.len(), c.mixed_pairs.len()),
    ));

    let points: Vec<(f64, f64)> = cfg
        .physics
        .fields_mt
        .iter()
        .flat_map(|&b| cfg.physics.temperatures_k.iter().map(move |&t| (b, t)))
        .collect();
    let tensors = exec.try_map(&points, |&(b, t)| -> Result<_, CliError> {
        Ok(relaxation_tensor(c, &bath_at(cfg, t)?, &spin_at(cfg, &inputs, b)?)?)
    })?;

    let mut worst = 0.0f64;
    for t in &tensors {
        for m in [t.lambda1(), t.lambda2(), t.total()] {
            let scale = m.amax();
            if scale > 0.0 {
                worst = worst.min(SymmetricEigen::new(m).eigenvalues.min() / scale);
            }
        }
    }
    checks.push(check(
        "tensor_psd",
        worst >= -1e-12,
        format!("{} grid points, min eigenvalue / max entry = {worst:.3e}", points.len()),
    ));

    let axis = spin_at(cfg, &inputs, cfg.physics.fields_mt[0])?.axis_vector();
    let mut dev = 0.0f64;
    for t in &tensors {
        let l = t.total();
        let r = relaxation_times(&l, &axis, Convention::Paper)?;
        let s = l.trace().abs().max(f64::MIN_POSITIVE);
        dev = dev.max((r.rate2 - (l.trace() - 0.5 * r.rate1)).abs() / s);
    }
    checks.push(check("t2_identity", dev < 1e-12, format!("max relative deviation {dev:.3e}")));

    let mut r = rng(cfg.seed);
    let mut dev = 0.0f64;
    for _ in 0..1000 {
        let scale = r.gen_range(1e-8..1.0);
        let l = random_psd(&mut r, scale);
        let n = Vector3::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)).normalize();
        let t = relaxation_times(&l, &n, Convention::Paper)?;
        dev = dev.max((t.rate2 - (l.trace() - 0.5 * t.rate1)).abs() / l.trace());
    }
    checks.push(check("t2_identity_random", dev < 1e-12, format!("1000 random tensors, max relative deviation {dev:.3e}")));

    let (b0, t0) = points[0];
    let spin = spin_at(cfg, &inputs, b0)?;
    let bath = bath_at(cfg, t0)?;
    let mut fixed = spin.clone();
    fixed.omega_override = Some(spin.larmor());
    let mut doubled = fixed.clone();
    doubled.field_mt = fixed.field_mt.map(|x| 2.0 * x);
    let a = relaxation_tensor(c, &bath, &fixed)?;
    let b = relaxation_tensor(c, &bath, &doubled)?;
    let e1 = rel(&(a.lambda1() * 4.0), &b.lambda1());
    let e2 = rel(&(a.second.g2 * 4.0), &b.second.g2);
    checks.push(check(
        "field_scaling",
        e1 < 1e-12 && e2 < 1e-12,
        format!("2B with fixed omega: lambda1 x4 error {e1:.3e}, g2 part x4 error {e2:.3e}"),
    ));

    if cfg.physics.temperatures_k.len() > 1 {
        let nt = cfg.physics.temperatures_k.len();
        let mut order: Vec<usize> = (0..nt).collect();
        order.sort_by(|&i, &j| cfg.physics.temperatures_k[i].total_cmp(&cfg.physics.temperatures_k[j]));
        let mut ok = true;
        for f in 0..cfg.physics.fields_mt.len() {
            for w in order.windows(2) {
                let (lo, hi) = (&tensors[f * nt + w[0]], &tensors[f * nt + w[1]]);
                let d = lo.total() - hi.total();
                ok &= SymmetricEigen::new(d).eigenvalues.max() <= 1e-12 * hi.total().amax();
            }
        }
        checks.push(check("temperature_monotone", ok, format!("Loewner order over {nt} temperatures")));
    } else {
        checks.push(skip("temperature_monotone", "one temperature"));
    }

    match cfg.paths.manifest.as_deref() {
        Some(m) => {
            let set = load_run_set(m, None, exec)?;
            let dir = field_direction(cfg, c);
            let base = relaxation_tensor(&assemble(&set, &dir, exec)?, &bath, &spin)?.total();
            let mut worst = 0.0f64;
            for _ in 0..50 {
                let mut g = set.clone();
                for k in 0..set.modeset.len() {
                    if r.gen_bool(0.5) {
                        g = g.with_flipped_mode(k);
                    }
                }
                let l = relaxation_tensor(&assemble(&g, &dir, exec)?, &bath, &spin)?.total();
                worst = worst.max(rel(&base, &l));
            }
            checks.push(check("sign_gauge", worst < 1e-12, format!("50 random gauges, max relative change {worst:.3e}")));
        }
        None => checks.push(skip("sign_gauge", "no manifest")),
    }

    let (ok, detail) = lindblad_oracle(&tensors[0].total(), tensors[0].meta.omega, &axis, &mut r)?;
    checks.push(check("lindblad_oracle", ok, detail));

    match cfg.paths.convergence_manifest.as_deref() {
        Some(m2) => match cfg.paths.manifest.as_deref() {
            Some(m1) => {
                let (s1, s2) = (load_run_set(m1, None, exec)?, load_run_set(m2, None, exec)?);
                let (coarse, fine) = if s1.delta > s2.delta { (&s1, &s2) } else { (&s2, &s1) };
                let opts = ConvergenceOptions {
                    threshold: cfg.numerics.convergence_threshold,
                    ..ConvergenceOptions::default()
                };
                let rep = convergence_check(coarse, fine, &field_direction(cfg, c), opts)?;
                checks.push(check(
                    "finite_difference_convergence",
                    rep.flagged.is_empty(),
                    format!("{} of {} entries above {}", rep.flagged.len(), rep.entries.len(), rep.threshold),
                ));
            }
            None => checks.push(skip("finite_difference_convergence", "no primary manifest")),
        },
        None => checks.push(skip("finite_difference_convergence", "no second manifest")),
    }

    println!("{:<32} {:<6} detail", "check", "status");
    for ch in &checks {
        let s = match ch.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        };
        println!("{:<32} {:<6} {}", ch.name, s, ch.detail);
    }
    let out = OutputDir::create(cfg)?;
    #[derive(Serialize)]
    struct Doc<'a> {
        checks: &'a [Check],
    }
    let path = out.json("validate.json", &Doc { checks: &checks })?;
    println!("-> {}", display(&path));
    let failed = checks.iter().filter(|c| c.status == Status::Fail).count();
    if failed > 0 {
        return Err(CliError::runtime(format!("{failed} check(s) failed")));
    }
    Ok(())
}

/// Dissipator-integrated decay rates against the closed-form Bloch rates,
/// for the supplied tensor (rotated so the axis is z) and for 20 random
/// diagonal tensors.
fn lindblad_oracle(
    lambda: &Matrix3<f64>,
    omega: f64,
    axis: &Vector3<f64>,
    r: &mut impl Rng,
) -> Result<(bool, String), CliError> {
    let frame = crate::commands::axis_frame(axis);
    let mut cases = vec![frame * lambda * frame.transpose()];
    for _ in 0..20 {
        cases.push(Matrix3::from_diagonal(&Vector3::new(
            r.gen_range(1e-7..1e-6),
            r.gen_range(1e-7..1e-6),
            r.gen_range(1e-7..1e-6),
        )));
    }
    let mut worst = 0.0f64;
    let mut tested = 0;
    for l in &cases {
        let l = (l + l.transpose()) * 0.5;
        if l.trace() <= 0.0 {
            continue;
        }
        let d = JumpBasisDissipator::new(l, omega)?;
        let w1 = 2.0 * (l[(0, 0)] + l[(1, 1)]) * CM_TO_PER_MICROSECOND;
        let w2 = (l[(0, 0)] + l[(1, 1)] + 2.0 * l[(2, 2)]) * CM_TO_PER_MICROSECOND;
        let opts = IntegratorOptions::default();
        if w1 > 0.0 {
            let tr = lindblad_evolve(&DensityMatrix::excited(), &d, &TimeGrid::new(5.0 / w1, 400)?, opts)?;
            let f = fit_decay_rate(&tr, Observable::SzMinusEq, FitOptions::default())?;
            worst = worst.max((f.rate / w1 - 1.0).abs());
        }
        if w2 > 0.0 {
            let tr = lindblad_evolve(&DensityMatrix::plus_x(), &d, &TimeGrid::new(5.0 / w2, 400)?, opts)?;
            let f = fit_decay_rate(&tr, Observable::CoherenceAbs, FitOptions::default())?;
            worst = worst.max((f.rate / w2 - 1.0).abs());
        }
        tested += 1;
    }
    Ok((worst < 0.01, format!("{tested} tensors, max relative rate error {worst:.3e}")))
}
