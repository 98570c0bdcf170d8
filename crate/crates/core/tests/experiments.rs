mod common;

use common::*;
use mantensor::experiments::*;
use mantensor::manifold::*;
use mantensor::*;
use nalgebra::DMatrix;

#[test]
fn sphere_generator_is_deterministic_and_on_manifold() {
    let a = gen_sphere_1d(30, 0.05, 9).unwrap();
    let b = gen_sphere_1d(30, 0.05, 9).unwrap();
    let c = gen_sphere_1d(30, 0.05, 10).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    for e in a.entries() {
        let n: f64 = e.coords().iter().map(|x| x * x).sum();
        assert!((n - 1.0).abs() < 1e-12);
    }
}

#[test]
fn sphere_noise_distance_matches_chi_moment() {
    // E d² = 6·0.05 for the per-coordinate noise model
    let n = 4000;
    let noisy = gen_sphere_1d(n, 0.05, 1).unwrap();
    let clean = gen_sphere_1d(n, 0.0, 1).unwrap();
    let mean_sq: f64 = (0..n)
        .map(|i| distance(&noisy.entries()[i], &clean.entries()[i]).unwrap().powi(2))
        .sum::<f64>()
        / n as f64;
    assert!((mean_sq - 0.3).abs() < 0.02, "{mean_sq}");
}

#[test]
fn spd_clean_signal_has_tangent_rank_one() {
    let t = gen_spd_1d(20, 2.0, 0.0, 4).unwrap();
    let p = ManifoldPoint::spd_identity(3);
    let (_, sigma, rank) = tangent_svd(&p, &t, 0).unwrap();
    assert_eq!(rank, 1);
    assert!(sigma[0] > 0.0);
    let m = t.entries()[0].as_matrix().unwrap();
    assert!(m[(1, 1)] > 0.0 && (m[(0, 0)] - 1.0).abs() == 0.0);
}

#[test]
fn spd_clean_entry_for_unit_tau() {
    let p = ManifoldPoint::spd_identity(3);
    let mut e22 = DMatrix::zeros(3, 3);
    e22[(1, 1)] = 1.0;
    let x = exp_map(&p, &TangentVector::new(p.clone(), e22.as_slice().to_vec()).unwrap()).unwrap();
    let m = x.as_matrix().unwrap();
    assert!((m[(1, 1)] - std::f64::consts::E).abs() < 1e-14);
    assert!((m[(0, 0)] - 1.0).abs() < 1e-14 && (m[(2, 2)] - 1.0).abs() < 1e-14);
}

#[test]
fn barycentre_of_two_euclidean_points_is_midpoint() {
    let t = MvTensor::new(
        vec![2],
        vec![ManifoldPoint::euclidean(vec![0.0, 2.0]), ManifoldPoint::euclidean(vec![4.0, -2.0])],
    )
    .unwrap();
    let p = barycentre(&t, 1e-12, 50).unwrap();
    assert!(max_abs_diff(p.coords(), &[2.0, 0.0]) < 1e-12);
}

#[test]
fn barycentre_of_two_spd_points_is_geodesic_midpoint() {
    let mut rng = rng(3);
    let a = random_spd(3, &mut rng);
    let b = random_spd(3, &mut rng);
    let t = MvTensor::new(vec![2], vec![a.clone(), b.clone()]).unwrap();
    let p = barycentre(&t, 1e-12, 200).unwrap();
    let (da, db) = (distance(&p, &a).unwrap(), distance(&p, &b).unwrap());
    assert!((da - db).abs() < 1e-9);
    assert!((da + db - distance(&a, &b).unwrap()).abs() < 1e-9);
}

#[test]
fn barycentre_gradient_certificate_on_sphere_cluster() {
    let mut rng = rng(5);
    let p0 = ManifoldPoint::north_pole(4);
    let t = scatter(&p0, &[30], 0.02, &mut rng);
    let p = barycentre(&t, 1e-9, 200).unwrap();
    let mut g = [0.0; 5];
    for e in t.entries() {
        let l = log_map(&p, e).unwrap();
        for (gi, li) in g.iter_mut().zip(l.coords()) {
            *gi += -2.0 * li;
        }
    }
    let scale: f64 = t.entries().iter().map(|e| distance(&p, e).unwrap()).sum();
    let gn = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!(gn <= 1e-7 * scale.max(1.0), "{gn}");
    assert!(distance(&p, &p0).unwrap() < 0.5);
}

#[test]
fn barycentre_reports_non_convergence() {
    let mut rng = rng(6);
    let p0 = random_spd(3, &mut rng);
    let t = scatter(&p0, &[10], 0.5, &mut rng);
    assert!(matches!(barycentre(&t, 1e-15, 1), Err(Error::NotConverged { .. })));
}

#[test]
fn nearest_data_barycentre_matches_exhaustive_scan() {
    let mut rng = rng(8);
    let p0 = random_spd(2, &mut rng);
    let t = scatter(&p0, &[4, 3], 0.3, &mut rng);
    let got = nearest_data_barycentre(&t).unwrap();
    let cost = |q: &ManifoldPoint| -> f64 { t.entries().iter().map(|x| distance(q, x).unwrap().powi(2)).sum() };
    let best = t.entries().iter().map(&cost).fold(f64::INFINITY, f64::min);
    assert_eq!(cost(&got), best);
}

#[test]
fn nearest_data_barycentre_edge_cases() {
    let a = ManifoldPoint::euclidean(vec![1.0]);
    let b = ManifoldPoint::euclidean(vec![-1.0]);
    let single = MvTensor::new(vec![1], vec![a.clone()]).unwrap();
    assert_eq!(nearest_data_barycentre(&single).unwrap(), a);
    let pair = MvTensor::new(vec![2], vec![a.clone(), b]).unwrap();
    assert_eq!(nearest_data_barycentre(&pair).unwrap(), a);
}

#[test]
fn relative_error_limits() {
    let mut rng = rng(10);
    let p = random_sphere(3, &mut rng);
    let t = scatter(&p, &[5, 2], 0.1, &mut rng);
    let log = log_tensor(&p, &t).unwrap();
    assert!(relative_error(&t, &p, &log).unwrap() < 1e-20);
    let zero = TangentTensor::zeros(p.clone(), vec![5, 2]).unwrap();
    assert!((relative_error(&t, &p, &zero).unwrap() - 1.0).abs() < 1e-14);
    let c = MvTensor::constant(&p, vec![3]).unwrap();
    let z = TangentTensor::zeros(p.clone(), vec![3]).unwrap();
    assert_eq!(relative_error(&c, &p, &z).unwrap(), 0.0);
}

#[test]
fn euclidean_rank_one_matches_dense_svd() {
    let mut rng = rng(12);
    let p = ManifoldPoint::euclidean(vec![0.0; 4]);
    let t = scatter(&p, &[9], 1.0, &mut rng);
    let a = DMatrix::from_fn(9, 4, |i, j| t.entries()[i].coords()[j]);
    let s = a.clone().svd(false, false).singular_values;
    let expected = s.iter().skip(1).map(|x| x * x).sum::<f64>() / a.norm_squared();
    let xi = reconstruct(&truncate(&thosvd(&p, &t).unwrap(), &[1]).unwrap());
    assert!((relative_error(&t, &p, &xi).unwrap() - expected).abs() < 1e-12);
}

fn ranks(v: &[usize]) -> Vec<Vec<usize>> {
    v.iter().map(|&r| vec![r]).collect()
}

#[test]
fn full_rank_thosvd_row_is_exact() {
    let mut rng = rng(14);
    let p = random_spd(2, &mut rng);
    let t = scatter(&p, &[4, 3], 0.2, &mut rng);
    let rep = run_rank_sweep(&t, &p, &SweepConfig::new(Method::Thosvd, vec![vec![4, 3]])).unwrap();
    assert!(rep.rows[0].eps_rel <= 1e-12);
}

#[test]
fn euclidean_cc_rows_equal_thosvd_rows() {
    let mut rng = rng(15);
    let p = ManifoldPoint::euclidean(vec![0.0; 3]);
    let t = scatter(&p, &[6], 1.0, &mut rng);
    let a = run_rank_sweep(&t, &p, &SweepConfig::new(Method::Thosvd, ranks(&[1, 2, 3]))).unwrap();
    let b = run_rank_sweep(&t, &p, &SweepConfig::new(Method::Cc, ranks(&[1, 2, 3]))).unwrap();
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert!((x.eps_rel - y.eps_rel).abs() < 1e-12);
        assert!(x.delta_rel.is_none() && y.delta_rel.is_some());
    }
}

#[test]
fn spd_sweep_cc_never_worse_and_thosvd_monotone() {
    let t = gen_spd_1d(50, 2.0, 0.05, 0).unwrap();
    let p = barycentre(&t, 1e-9, 200).unwrap();
    let rs = ranks(&[1, 2, 3, 4, 5]);
    let a = run_rank_sweep(&t, &p, &SweepConfig::new(Method::Thosvd, rs.clone())).unwrap();
    let b = run_rank_sweep(&t, &p, &SweepConfig::new(Method::Cc, rs)).unwrap();
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert!(y.eps_rel <= x.eps_rel, "{:?}: {} > {}", x.rank, y.eps_rel, x.eps_rel);
        assert!(y.delta_rel.unwrap().is_finite());
    }
    for w in a.rows.windows(2) {
        assert!(w[1].eps_rel <= w[0].eps_rel + 1e-10);
    }
}

#[test]
fn cc_loss_not_above_truncated_core_loss() {
    let mut rng = rng(16);
    let p = random_spd(3, &mut rng);
    let t = scatter(&p, &[5, 4], 0.3, &mut rng);
    let sys = build_curvature_system(&p, &t).unwrap();
    for r in [[1, 1], [2, 2], [3, 2]] {
        let naive = reconstruct(&truncate(&thosvd(&p, &t).unwrap(), &r).unwrap());
        let cc = reconstruct(&cc_thosvd(&p, &t, &r).unwrap());
        assert!(cc_loss(&cc, &sys).unwrap() <= cc_loss(&naive, &sys).unwrap() * (1.0 + 1e-12));
    }
}

#[test]
fn sweep_is_bitwise_deterministic() {
    let t = gen_sphere_1d(40, 0.05, 2).unwrap();
    let p = barycentre(&t, 1e-9, 200).unwrap();
    let cfg = SweepConfig::new(Method::Cc, ranks(&[1, 2, 3]));
    let a = run_rank_sweep(&t, &p, &cfg).unwrap();
    let b = run_rank_sweep(&t, &p, &cfg).unwrap();
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert_eq!(x.eps_rel.to_bits(), y.eps_rel.to_bits());
        assert_eq!(x.delta_rel.map(f64::to_bits), y.delta_rel.map(f64::to_bits));
        assert_eq!(x.lower_bound.to_bits(), y.lower_bound.to_bits());
    }
}

#[test]
fn failed_rank_becomes_nan_row() {
    let mut rng = rng(17);
    let p = random_spd(2, &mut rng);
    let t = scatter(&p, &[4], 0.2, &mut rng);
    let rs = vec![vec![1], vec![1, 1], vec![2]];
    let rep = run_rank_sweep(&t, &p, &SweepConfig::new(Method::Thosvd, rs)).unwrap();
    assert_eq!(rep.rows.len(), 3);
    assert!(rep.rows[0].eps_rel.is_finite());
    assert!(rep.rows[1].eps_rel.is_nan());
    assert!(rep.rows[2].eps_rel.is_finite());
}

#[test]
fn mc_sweep_rows_report_iterations() {
    let t = gen_spd_1d(20, 2.0, 0.05, 3).unwrap();
    let p = barycentre(&t, 1e-9, 200).unwrap();
    let mut cfg = SweepConfig::new(Method::Mc, ranks(&[1, 2]));
    cfg.mc.step = StepSize::Fixed(2f64.powi(-4));
    let rep = run_rank_sweep(&t, &p, &cfg).unwrap();
    for row in &rep.rows {
        assert!(row.iters.is_some() && row.eps_rel.is_finite());
        assert!(row.time_s.is_none());
    }
}

#[test]
fn sweep_timing_is_opt_in() {
    let t = gen_spd_1d(10, 2.0, 0.05, 3).unwrap();
    let p = barycentre(&t, 1e-9, 200).unwrap();
    let mut cfg = SweepConfig::new(Method::Thosvd, ranks(&[1]));
    cfg.timing = true;
    let rep = run_rank_sweep(&t, &p, &cfg).unwrap();
    assert!(rep.rows[0].time_s.unwrap() >= 0.0);
}

#[test]
fn benchmark_single_repeat() {
    let t = gen_spd_1d(10, 2.0, 0.05, 1).unwrap();
    let p = barycentre(&t, 1e-9, 200).unwrap();
    let s = benchmark(Method::Cc, &t, &p, &[1], 1, &McSettings::default()).unwrap();
    assert_eq!(s.samples.len(), 1);
    assert!(s.median.is_finite() && s.median == s.min);
    assert!(benchmark(Method::Cc, &t, &p, &[1], 0, &McSettings::default()).is_err());
}
