use super::*;
use crate::couplings::{assemble, CouplingTensors};
use crate::exec::Execution;
use crate::fixtures;
use crate::ingest::DisplacedGTensorSet;
use crate::physics::{GTensor, MU_B_CM_PER_T};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

fn spin_mt(b: f64) -> SpinSystem {
    SpinSystem::new(GTensor(Matrix3::from_diagonal_element(1.991)), [0.0, 0.0, b]).unwrap()
}

fn rel(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    (a - b).amax() / b.amax().max(f64::MIN_POSITIVE)
}

fn min_eig(m: &Matrix3<f64>) -> f64 {
    SymmetricEigen::new(*m).eigenvalues.min()
}

#[test]
fn direct_rate_examples() {
    let (g, w) = (2.0, 12.6);
    assert_eq!(direct_rate(g, w, 0.0).unwrap(), 2.0 * g / (g * g + 4.0 * w * w));
    let r = direct_rate(2.0, 12.6, 0.6778).unwrap();
    assert!((r - 0.014745).abs() < 5e-6, "{r}");
    let small = direct_rate(g, 1e-9, 0.3).unwrap();
    assert!((small - 4.0 / g * 0.8).abs() < 1e-12);
    assert!(direct_rate(0.0, 1.0, 0.0).is_err());
    assert!(direct_rate(1.0, -1.0, 0.0).is_err());
    assert!(direct_rate(1.0, 1.0, -0.1).is_err());
}

#[test]
fn zero_couplings_zero_tensors() {
    let mut c = fixtures::random_couplings(3, 1);
    c.d1.fill(0.0);
    c.d2.iter_mut().for_each(|m| m.fill(0.0));
    let bath = BathSpec::new(50.0).unwrap();
    let t = relaxation_tensor(&c, &bath, &spin_mt(1266.0)).unwrap();
    assert_eq!(t.total(), Matrix3::zeros());
}

#[test]
fn single_mode_first_order_is_rank_one_zz() {
    let g = 3e-3;
    let mut d1 = DMatrix::zeros(3, 1);
    d1[(2, 0)] = g;
    let c = CouplingTensors::new(vec![40.0], vec![1], d1, vec![DMatrix::zeros(1, 1); 3], vec![], [0.0, 0.0, 1.0], 0.01)
        .unwrap();
    let bath = BathSpec::new(20.0).unwrap();
    let spin = spin_mt(1266.0);
    let l1 = lambda_first(&c, &bath, &spin).unwrap().total;
    let n = crate::physics::bose_occupation(40.0, 20.0).unwrap();
    let gg = (spin.coupling_scale() * g).powi(2);
    let expect = direct_rate(2.0, 40.0, n).unwrap() * gg;
    assert!((l1[(2, 2)] - expect).abs() <= 1e-15 * expect);
    for i in 0..3 {
        for j in 0..3 {
            if (i, j) != (2, 2) {
                assert_eq!(l1[(i, j)], 0.0);
            }
        }
    }
}

#[test]
fn resonance_peak_at_zero_temperature() {
    let omega = 1.2;
    let g = 2e-4;
    let spin = SpinSystem {
        omega_override: Some(omega),
        ..SpinSystem::new(GTensor::identity(), [0.0, 0.0, 1000.0]).unwrap()
    };
    let c = fixtures::single_mode_system(omega / 2.0, g / spin.coupling_scale());
    let bath = BathSpec::new(0.0).unwrap();
    let l2 = lambda_second(&c, &bath, &spin).unwrap();
    let lw = bath.linewidth.get(0);
    let expect = g * g / (std::f64::consts::PI * lw);
    assert!((l2.total()[(2, 2)] - expect).abs() <= 1e-12 * expect);
    assert_eq!(l2.quartic, Matrix3::zeros());
}

#[test]
fn field_doubling_quadruples_exactly() {
    let c = fixtures::random_couplings(5, 2);
    let bath = BathSpec::new(80.0).unwrap();
    let pin = |b| SpinSystem { omega_override: Some(1.1), ..spin_mt(b) };
    for pairing in [RamanPairing::DiagonalOnly, RamanPairing::AllPairs] {
        let bath = BathSpec { raman_pairing: pairing, ..bath.clone() };
        let a = relaxation_tensor(&c, &bath, &pin(633.0)).unwrap();
        let b = relaxation_tensor(&c, &bath, &pin(1266.0)).unwrap();
        assert_eq!(b.lambda1(), a.lambda1() * 4.0);
        assert_eq!(b.second.g2, a.second.g2 * 4.0);
        assert_eq!(b.second.quartic, a.second.quartic * 16.0);
    }
}

#[test]
fn per_mode_parts_sum_to_totals() {
    let c = fixtures::random_couplings(6, 3);
    for pairing in [RamanPairing::DiagonalOnly, RamanPairing::AllPairs] {
        let bath = BathSpec { raman_pairing: pairing, ..BathSpec::new(120.0).unwrap() };
        let t = relaxation_tensor(&c, &bath, &spin_mt(1266.0)).unwrap();
        let s1 = t.first.per_mode.iter().fold(Matrix3::zeros(), |a, m| a + m);
        assert!(rel(&s1, &t.lambda1()) < 1e-10);
        let s2 = (0..c.len()).fold(Matrix3::zeros(), |a, q| a + t.second.per_mode(q));
        assert!(rel(&s2, &t.lambda2()) < 1e-10);
        assert_eq!(t.second.g2_excess(), t.second.g2 - t.second.quartic);
    }
}

#[test]
fn two_phonon_t_squared_slope() {
    let c = fixtures::single_mode_system(12.6, 1e-4);
    let spin = spin_mt(1266.0);
    let bath = BathSpec::new(100.0).unwrap();
    let grid = SweepGrid {
        temperatures: (0..21).map(|i| 100.0 + 10.0 * i as f64).collect(),
        fields_mt: vec![1266.0],
    };
    let rows = sweep(&c, &spin, &bath, &grid, Execution::Sequential).unwrap();
    let xs: Vec<f64> = rows.iter().map(|r| r.temperature.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.paper.rate1.ln()).collect();
    let slope = ls_slope(&xs, &ys);
    assert!((slope - 2.0).abs() < 0.05, "{slope}");
}

fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[test]
fn sweep_single_point_matches_single_shot() {
    let c = fixtures::random_couplings(4, 9);
    let spin = spin_mt(1266.0);
    let bath = BathSpec::new(20.0).unwrap();
    let grid = SweepGrid { temperatures: vec![20.0], fields_mt: vec![1266.0] };
    let rows = sweep(&c, &spin, &bath, &grid, Execution::Parallel).unwrap();
    let t = relaxation_tensor(&c, &bath, &spin).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].total(), t.total());
    assert_eq!(rows[0].paper, relaxation_times(&t.total(), &Vector3::z(), Convention::Paper).unwrap());
}

#[test]
fn sweep_is_identical_under_both_policies() {
    let c = fixtures::random_couplings(8, 4);
    let spin = spin_mt(1266.0);
    let bath = BathSpec { raman_pairing: RamanPairing::AllPairs, ..BathSpec::new(1.0).unwrap() };
    let grid = SweepGrid {
        temperatures: (1..40).map(|i| 7.5 * i as f64).collect(),
        fields_mt: vec![350.0, 1266.0],
    };
    let a = sweep(&c, &spin, &bath, &grid, Execution::Sequential).unwrap();
    let b = sweep(&c, &spin, &bath, &grid, Execution::Parallel).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 78);
    assert_eq!(a[39].field_mt, 1266.0);
    assert_eq!(sweep_csv(&a, Convention::Paper).unwrap(), sweep_csv(&b, Convention::Paper).unwrap());
}

#[test]
fn sweep_rejects_empty_grid() {
    let c = fixtures::random_couplings(2, 4);
    let grid = SweepGrid { temperatures: vec![], fields_mt: vec![1.0] };
    assert!(sweep(&c, &spin_mt(1.0), &BathSpec::new(1.0).unwrap(), &grid, Execution::Sequential).is_err());
}

#[test]
fn mismatched_field_direction_is_rejected() {
    let c = fixtures::random_couplings(2, 4);
    let spin = SpinSystem::new(GTensor::identity(), [1.0, 0.0, 0.0]).unwrap();
    assert!(relaxation_tensor(&c, &BathSpec::new(1.0).unwrap(), &spin).is_err());
}

#[test]
fn attribution_single_and_symmetric_modes() {
    let c = fixtures::random_couplings(1, 5);
    let bath = BathSpec::new(30.0).unwrap();
    let t = relaxation_tensor(&c, &bath, &spin_mt(1266.0)).unwrap();
    let a = mode_attribution(&t, &c.labels, &c.frequencies, None);
    assert_eq!(a.second.len(), 1);
    assert!(a.second[0].share.iter().all(|s| *s == 1.0));
    assert_eq!(a.first[0].trace_share, 1.0);

    let mut d1 = DMatrix::zeros(3, 2);
    d1.set_column(0, &Vector3::new(1e-3, 2e-3, -1e-3));
    d1.set_column(1, &Vector3::new(1e-3, 2e-3, -1e-3));
    let d2 = (0..3).map(|a| DMatrix::from_diagonal_element(2, 2, 1e-4 * (a + 1) as f64)).collect();
    let c = CouplingTensors::new(vec![50.0, 50.0], vec![1, 2], d1, d2, vec![], [0.0, 0.0, 1.0], 0.01).unwrap();
    let t = relaxation_tensor(&c, &bath, &spin_mt(1266.0)).unwrap();
    let a = mode_attribution(&t, &c.labels, &c.frequencies, Some(2));
    for table in [&a.first, &a.second] {
        for row in table.iter() {
            assert!(row.share.iter().all(|s| *s == 0.5), "{:?}", row.share);
        }
        assert_eq!(table[0].index, 0);
    }
}

#[test]
fn attribution_ranks_by_trace_and_truncates() {
    let c = fixtures::random_couplings(6, 11);
    let t = relaxation_tensor(&c, &BathSpec::new(50.0).unwrap(), &spin_mt(1266.0)).unwrap();
    let a = mode_attribution(&t, &c.labels, &c.frequencies, Some(3));
    assert_eq!(a.second.len(), 3);
    assert!(a.second.windows(2).all(|w| w[0].trace.abs() >= w[1].trace.abs()));
    let full = mode_attribution(&t, &c.labels, &c.frequencies, None);
    let total: f64 = full.second.iter().map(|r| r.share[(0, 1)]).sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn reports_serialize() {
    let c = fixtures::random_couplings(3, 2);
    let t = relaxation_tensor(&c, &BathSpec::new(10.0).unwrap(), &spin_mt(1266.0)).unwrap();
    let a = mode_attribution(&t, &c.labels, &c.frequencies, None);
    let r = tensor_report(&t, &Vector3::z(), &c.labels, &c.frequencies, a).unwrap();
    let v = serde_json::to_value(&r).unwrap();
    assert_eq!(v["per_mode"].as_array().unwrap().len(), 3);
    assert_eq!(v["paper"]["convention"], "paper");
    assert_eq!(v["lambda"][2][2].as_f64().unwrap(), t.total()[(2, 2)]);

    let grid = SweepGrid { temperatures: vec![5.0, 10.0], fields_mt: vec![1266.0] };
    let rows = sweep(&c, &spin_mt(1266.0), &BathSpec::new(1.0).unwrap(), &grid, Execution::Sequential).unwrap();
    let csv = sweep_csv(&rows, Convention::Paper).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0].split(',').count(), SWEEP_COLUMNS.len());
    assert!(lines[1].starts_with("5,1266,"));
}

#[test]
fn sign_gauge_leaves_tensors_invariant() {
    let m = fixtures::toy_modeset(4, 31);
    let surf = fixtures::cartesian_surface(&m.geometry);
    let set = DisplacedGTensorSet::from_cartesian_surface(&m, 0.01, RamanPairing::AllPairs, &surf).unwrap();
    let bath = BathSpec { raman_pairing: RamanPairing::AllPairs, ..BathSpec::new(60.0).unwrap() };
    let spin = spin_mt(1266.0);
    let base = relaxation_tensor(&assemble(&set, &Vector3::z(), Execution::Sequential).unwrap(), &bath, &spin).unwrap();
    for k in 0..4 {
        let f = set.with_flipped_mode(k);
        let t = relaxation_tensor(&assemble(&f, &Vector3::z(), Execution::Sequential).unwrap(), &bath, &spin).unwrap();
        assert!(rel(&t.lambda1(), &base.lambda1()) < 1e-12);
        assert!(rel(&t.lambda2(), &base.lambda2()) < 1e-12);
    }
}

proptest! {
    #[test]
    fn lambda1_is_symmetric_psd(seed in 0u64..5000, n in 1usize..8, temp in 0.0..400.0f64) {
        let c = fixtures::random_couplings(n, seed);
        let l1 = lambda_first(&c, &BathSpec::new(temp).unwrap(), &spin_mt(1266.0)).unwrap().total;
        prop_assert_eq!(l1, l1.transpose());
        prop_assert!(min_eig(&l1) >= -1e-12 * l1.trace());
    }

    #[test]
    fn lambda2_psd_with_nonnegative_quartic(seed in 0u64..5000, n in 1usize..8, temp in 0.0..400.0f64, pairs in any::<bool>()) {
        let c = fixtures::random_couplings(n, seed);
        let pairing = if pairs { RamanPairing::AllPairs } else { RamanPairing::DiagonalOnly };
        let bath = BathSpec { raman_pairing: pairing, ..BathSpec::new(temp).unwrap() };
        let l2 = lambda_second(&c, &bath, &spin_mt(1266.0)).unwrap();
        let tot = l2.total();
        prop_assert!(min_eig(&tot) >= -1e-12 * tot.trace());
        prop_assert!((0..3).all(|i| tot[(i, i)] >= 0.0));
        prop_assert!(l2.quartic.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn field_scaling_at_fixed_omega(seed in 0u64..5000, s in 0.1..10.0f64) {
        let c = fixtures::random_couplings(4, seed);
        let bath = BathSpec::new(50.0).unwrap();
        let pin = |b: f64| SpinSystem { omega_override: Some(0.9), ..spin_mt(b) };
        let a = relaxation_tensor(&c, &bath, &pin(1000.0)).unwrap();
        let b = relaxation_tensor(&c, &bath, &pin(1000.0 * s)).unwrap();
        prop_assert!(rel(&b.lambda1(), &(a.lambda1() * s * s)) < 1e-12);
        prop_assert!(rel(&b.second.g2, &(a.second.g2 * s * s)) < 1e-12);
        prop_assert!(rel(&b.second.quartic, &(a.second.quartic * s.powi(4))) < 1e-12);
    }

    #[test]
    fn lambda2_grows_with_temperature(seed in 0u64..5000, t1 in 0.0..300.0f64, dt in 0.0..300.0f64, pairs in any::<bool>()) {
        let c = fixtures::random_couplings(5, seed);
        let pairing = if pairs { RamanPairing::AllPairs } else { RamanPairing::DiagonalOnly };
        let bath = BathSpec { raman_pairing: pairing, ..BathSpec::new(t1).unwrap() };
        let spin = spin_mt(1266.0);
        let lo = lambda_second(&c, &bath, &spin).unwrap();
        let hi = lambda_second(&c, &bath.at_temperature(t1 + dt), &spin).unwrap();
        let diff = hi.total() - lo.total();
        prop_assert!(min_eig(&diff) >= -1e-12 * hi.total().trace());
        prop_assert!((0..3).all(|i| hi.total()[(i, i)] >= lo.total()[(i, i)]));
        prop_assert!(hi.quartic.iter().zip(lo.quartic.iter()).all(|(h, l)| h >= l));
    }
}

#[test]
fn coupling_scale_uses_bohr_magneton() {
    let s = spin_mt(1266.0);
    assert!((s.coupling_scale() - MU_B_CM_PER_T * 1.266).abs() < 1e-15);
}
