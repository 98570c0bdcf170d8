mod common;

use common::*;
use mantensor::manifold::*;
use mantensor::tensor::{fold, num_entries};
use mantensor::*;
use nalgebra::DMatrix;
use proptest::prelude::*;

#[test]
fn spd_log_exp_round_trip() {
    let mut r = rng(3);
    let p = random_spd(3, &mut r);
    let t = scatter(&p, &[3, 4], 0.5, &mut r);
    let l = log_tensor(&p, &t).unwrap();
    let back = exp_tensor(&p, &l).unwrap();
    for (a, b) in back.entries().iter().zip(t.entries()) {
        assert!(max_abs_diff(a.coords(), b.coords()) < 1e-9);
    }
    let cp = MvTensor::constant(&p, vec![3, 4]).unwrap();
    let d = tensor_distance(&cp, &t).unwrap();
    assert!((tangent_norm(&l) - d).abs() < 1e-9);
}

#[test]
fn constant_tensor_logs_to_zero() {
    let p = ManifoldPoint::north_pole(3);
    let t = MvTensor::constant(&p, vec![2, 2]).unwrap();
    let l = log_tensor(&p, &t).unwrap();
    assert!(l.data().iter().all(|&x| x == 0.0));
    let e = exp_tensor(&p, &l).unwrap();
    assert_eq!(e, t);
}

#[test]
fn cut_locus_reports_index() {
    let p = ManifoldPoint::north_pole(2);
    let s = ManifoldPoint::sphere(vec![0.0, 0.0, -1.0]).unwrap();
    let mut entries = vec![p.clone(); 6];
    entries[4] = s;
    let t = MvTensor::new(vec![2, 3], entries).unwrap();
    match log_tensor(&p, &t) {
        Err(Error::CutLocus(Some(idx))) => assert_eq!(idx, vec![1, 1]),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn order1_mode_product_matches_dense_coefficients() {
    let mut r = rng(11);
    let p = random_spd(2, &mut r);
    let t = scatter(&p, &[5], 0.3, &mut r);
    let x = log_tensor(&p, &t).unwrap();
    let m = DMatrix::from_fn(3, 5, |_, _| gauss(&mut r));
    let y = mode_k_product(&x, &m, 0).unwrap();
    let basis = orthonormal_basis(&p);
    let cx = coeff_matrix(&x, &basis);
    let cy = coeff_matrix(&y, &basis);
    assert!((m * cx - cy).norm() < 1e-10);
}

#[test]
fn gram_is_basis_independent() {
    let mut r = rng(5);
    let p = random_spd(3, &mut r);
    let t = scatter(&p, &[4, 3], 0.4, &mut r);
    let x = log_tensor(&p, &t).unwrap();
    let u = unfold(&x, 1).unwrap();
    let g = gram_matrix(&p, &u).unwrap();
    for basis in [orthonormal_basis(&p), rotated_basis(&p, &mut r)] {
        let c = coeff_matrix(&u, &basis);
        // rows of the unfolding are consecutive blocks of `cols` entries
        let cols = u.shape()[1];
        let d = basis.len();
        let flat = DMatrix::from_fn(u.shape()[0], cols * d, |a, j| c[(a * cols + j / d, j % d)]);
        assert!((&flat * flat.transpose() - &g).norm() < 1e-10);
    }
}

#[test]
fn euclidean_order1_matches_dense_svd() {
    let mut r = rng(9);
    let p = ManifoldPoint::euclidean(vec![0.5, -1.0, 2.0]);
    let pts: Vec<ManifoldPoint> = (0..6)
        .map(|_| ManifoldPoint::euclidean((0..3).map(|_| gauss(&mut r)).collect()))
        .collect();
    let t = MvTensor::new(vec![6], pts.clone()).unwrap();
    let (u, s, rank) = tangent_svd(&p, &t, 0).unwrap();
    let x = DMatrix::from_fn(6, 3, |i, j| pts[i].coords()[j] - p.coords()[j]);
    let svd = x.clone().svd(true, false);
    let mut want: Vec<f64> = svd.singular_values.iter().copied().collect();
    want.sort_by(|a, b| b.partial_cmp(a).unwrap());
    assert_eq!(rank, 3);
    for i in 0..3 {
        assert!((s[i] - want[i]).abs() < 1e-10);
        // left singular vectors agree up to sign
        let ui = u.column(i);
        let xi = &x * x.transpose() * ui;
        assert!((xi - ui * want[i] * want[i]).norm() < 1e-9);
    }
    assert!(s[3..].iter().all(|&v| v < 1e-6));
}

#[test]
fn sphere_full_reconstruction() {
    let mut r = rng(13);
    let p = random_sphere(4, &mut r);
    let t = scatter(&p, &[4, 3], 0.2, &mut r);
    let f = thosvd(&p, &t).unwrap();
    let l = log_tensor(&p, &t).unwrap();
    assert_eq!(f.ranks, vec![4, 3]);
    assert!(max_abs_diff(reconstruct(&f).data(), l.data()) < 1e-9);
    for u in &f.factors {
        let g = u.transpose() * u;
        assert!((g - DMatrix::identity(u.ncols(), u.ncols())).norm() < 1e-9);
    }
    assert_eq!(truncate(&f, &f.ranks).unwrap(), f);
}

#[test]
fn exact_rank_one_spd_tensor() {
    let mut r = rng(17);
    let p = random_spd(3, &mut r);
    let v = random_tangent(&p, 0.2, &mut r).unwrap();
    let a: Vec<f64> = (0..4).map(|_| gauss(&mut r)).collect();
    let b: Vec<f64> = (0..3).map(|_| gauss(&mut r)).collect();
    let mut entries = Vec::new();
    for ai in &a {
        for bj in &b {
            entries.push(exp_map(&p, &v.scaled(ai * bj)).unwrap());
        }
    }
    let t = MvTensor::new(vec![4, 3], entries).unwrap();
    let f = thosvd(&p, &t).unwrap();
    assert_eq!(f.ranks, vec![1, 1]);
}

#[test]
fn core_is_all_orthogonal() {
    let mut r = rng(19);
    let p = random_spd(2, &mut r);
    let t = scatter(&p, &[3, 4, 2], 0.3, &mut r);
    let f = thosvd(&p, &t).unwrap();
    for k in 0..3 {
        let u = unfold(&f.core, k).unwrap();
        let g = gram_matrix(&p, &u).unwrap();
        for a in 0..g.nrows() {
            for b in 0..g.ncols() {
                if a != b {
                    assert!(g[(a, b)].abs() < 1e-9);
                }
            }
            assert!((g[(a, a)].sqrt() - f.singular_values[k][a]).abs() < 1e-9);
        }
    }
}

#[test]
fn order1_truncation_is_eckart_young() {
    let mut r = rng(23);
    let p = random_sphere(3, &mut r);
    let t = scatter(&p, &[6], 0.3, &mut r);
    let l = log_tensor(&p, &t).unwrap();
    let f = thosvd(&p, &t).unwrap();
    let basis = orthonormal_basis(&p);
    let c = coeff_matrix(&l, &basis);
    let mut sv: Vec<f64> = c.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    for rank in 1..=3 {
        let tr = truncate(&f, &[rank]).unwrap();
        let err = tangent_norm(&reconstruct(&tr).sub(&l).unwrap());
        let want = sv[rank..].iter().map(|s| s * s).sum::<f64>().sqrt();
        assert!((err - want).abs() < 1e-9, "rank {rank}: {err} vs {want}");
        // brute force: no projection onto `rank` random orthonormal rows does better
        for _ in 0..50 {
            let q = DMatrix::from_fn(6, rank, |_, _| gauss(&mut r)).qr().q();
            let proj = &q * q.transpose() * &c;
            assert!((&c - proj).norm() >= err - 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn unfold_fold_identity(d0 in 1usize..4, d1 in 1usize..4, d2 in 1usize..4, k in 0usize..3, seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = ManifoldPoint::euclidean(vec![0.0, 0.0]);
        let shape = vec![d0, d1, d2];
        let data: Vec<f64> = (0..num_entries(&shape) * 2).map(|_| gauss(&mut r)).collect();
        let x = TangentTensor::from_coords(p, shape.clone(), data).unwrap();
        let u = unfold(&x, k).unwrap();
        prop_assert_eq!(u.shape(), &[shape[k], num_entries(&shape) / shape[k]][..]);
        prop_assert_eq!(fold(&u, k, &shape).unwrap(), x);
    }

    #[test]
    fn mode_products_compose_and_commute(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = random_spd(2, &mut r);
        let t = scatter(&p, &[3, 2, 2], 0.3, &mut r);
        let x = log_tensor(&p, &t).unwrap();
        let a = DMatrix::from_fn(4, 3, |_, _| gauss(&mut r));
        let b = DMatrix::from_fn(2, 4, |_, _| gauss(&mut r));
        let c = DMatrix::from_fn(3, 2, |_, _| gauss(&mut r));
        let two = mode_k_product(&mode_k_product(&x, &a, 0).unwrap(), &b, 0).unwrap();
        let one = mode_k_product(&x, &(&b * &a), 0).unwrap();
        prop_assert!(max_abs_diff(two.data(), one.data()) <= 1e-12 * (1.0 + two.data().iter().fold(0.0f64, |m, v| m.max(v.abs()))));
        let ac = multi_mode_product(&x, &[a.clone(), c.clone()], &[0, 1]).unwrap();
        let ca = multi_mode_product(&x, &[c, a], &[1, 0]).unwrap();
        prop_assert!(max_abs_diff(ac.data(), ca.data()) <= 1e-12);
    }

    #[test]
    fn distance_is_entrywise_sum(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = random_sphere(2, &mut r);
        let a = scatter(&p, &[2, 3], 0.2, &mut r);
        let b = scatter(&p, &[2, 3], 0.2, &mut r);
        let want: f64 = a.entries().iter().zip(b.entries()).map(|(x, y)| distance(x, y).unwrap().powi(2)).sum();
        prop_assert!((tensor_distance(&a, &b).unwrap().powi(2) - want).abs() <= 1e-12);
        prop_assert_eq!(tensor_distance(&a, &b).unwrap(), tensor_distance(&b, &a).unwrap());
    }
}
