use mantensor::manifold::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug)]
enum Space {
    Euc(usize),
    Sph(usize),
    Spd(usize),
}

fn space() -> impl Strategy<Value = Space> {
    prop_oneof![
        (1usize..5).prop_map(Space::Euc),
        (1usize..5).prop_map(Space::Sph),
        (1usize..4).prop_map(Space::Spd),
    ]
}

fn point(s: Space, rng: &mut ChaCha8Rng) -> ManifoldPoint {
    use rand_distr::{Distribution, StandardNormal};
    let mut g = || -> f64 { StandardNormal.sample(rng) };
    match s {
        Space::Euc(d) => ManifoldPoint::euclidean((0..d).map(|_| g()).collect()),
        Space::Sph(d) => {
            let v: Vec<f64> = (0..=d).map(|_| g()).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            ManifoldPoint::sphere(v.iter().map(|x| x / n).collect()).unwrap()
        }
        Space::Spd(n) => {
            let a = DMatrix::from_fn(n, n, |_, _| g());
            let m = &a * a.transpose() + DMatrix::identity(n, n) * 0.5;
            ManifoldPoint::spd(&((&m + m.transpose()) * 0.5)).unwrap()
        }
    }
}

/// Random tangent rescaled to norm `len`.
fn tangent(p: &ManifoldPoint, len: f64, rng: &mut ChaCha8Rng) -> TangentVector {
    let v = random_tangent(p, 1.0, rng).unwrap();
    let n = norm(&v);
    if n == 0.0 {
        return v;
    }
    v.scaled(len / n)
}

fn tnorm_diff(p: &ManifoldPoint, a: &TangentVector, b: &TangentVector) -> f64 {
    let d = a.add_scaled(-1.0, b).unwrap();
    inner(p, &d, &d).unwrap().max(0.0).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exp_log_round_trip(s in space(), seed in any::<u64>(), len in 0.0f64..2.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = point(s, &mut rng);
        let v = tangent(&p, len, &mut rng);
        let x = exp_map(&p, &v).unwrap();
        let l = log_map(&p, &x).unwrap();
        let back = exp_map(&p, &l).unwrap();
        let err = back.coords().iter().zip(x.coords()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-9, "round trip error {err}");
        let d = distance(&p, &x).unwrap();
        prop_assert!((norm(&l) - d).abs() <= 1e-9);
        prop_assert!((d - len).abs() <= 1e-9);
        prop_assert!((distance(&x, &p).unwrap() - d).abs() <= 1e-9);
    }

    #[test]
    fn transport_is_isometric(s in space(), seed in any::<u64>(), len in 0.0f64..2.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = point(s, &mut rng);
        let q = exp_map(&p, &tangent(&p, len, &mut rng)).unwrap();
        let u = tangent(&p, 1.3, &mut rng);
        let v = tangent(&p, 0.7, &mut rng);
        let pu = parallel_transport(&p, &q, &u).unwrap();
        let pv = parallel_transport(&p, &q, &v).unwrap();
        prop_assert!(TangentVector::new(q.clone(), pu.coords().to_vec()).is_ok());
        let before = inner(&p, &u, &v).unwrap();
        let after = inner(&q, &pu, &pv).unwrap();
        prop_assert!((before - after).abs() <= 1e-9, "{before} vs {after}");
        prop_assert!((inner(&q, &pu, &pu).unwrap() - inner(&p, &u, &u).unwrap()).abs() <= 1e-9);
    }

    #[test]
    fn basis_is_orthonormal(s in space(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = point(s, &mut rng);
        let b = orthonormal_basis(&p);
        prop_assert_eq!(b.len(), p.descriptor().intrinsic_dim());
        for i in 0..b.len() {
            for j in 0..b.len() {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((inner(&p, &b[i], &b[j]).unwrap() - want).abs() <= 1e-10);
            }
        }
        prop_assert_eq!(b, orthonormal_basis(&p));
    }

    #[test]
    fn eigenframe_diagonalises_curvature(s in space(), seed in any::<u64>(), len in 0.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = point(s, &mut rng);
        let v = tangent(&p, len, &mut rng);
        let (kappas, thetas) = curvature_eigenbasis(&p, &v).unwrap();
        let d = p.descriptor().intrinsic_dim();
        prop_assert_eq!(kappas.len(), d);
        prop_assert_eq!(thetas.len(), d);
        for i in 0..d {
            for j in 0..d {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((inner(&p, &thetas[i], &thetas[j]).unwrap() - want).abs() <= 1e-9);
            }
        }
        if len > 0.0 {
            prop_assert_eq!(kappas[0], 0.0);
            prop_assert!(tnorm_diff(&p, &thetas[0], &v.scaled(1.0 / norm(&v))) <= 1e-9);
        }
        for (k, th) in kappas.iter().zip(&thetas) {
            let r = curvature_operator(&p, th, &v, &v).unwrap();
            let err = tnorm_diff(&p, &r, &th.scaled(*k));
            prop_assert!(err <= 1e-8 * k.abs().max(1.0), "residual {err} for kappa {k}");
            match s {
                Space::Euc(_) => prop_assert_eq!(*k, 0.0),
                Space::Sph(_) => prop_assert!(*k >= 0.0),
                Space::Spd(_) => prop_assert!(*k <= 0.0),
            }
        }
        let (k2, t2) = curvature_eigenbasis(&p, &v).unwrap();
        prop_assert_eq!(k2, kappas);
        prop_assert_eq!(t2, thetas);
    }

    #[test]
    fn curvature_antisymmetric(s in space(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = point(s, &mut rng);
        let (u, v, w) = (tangent(&p, 1.0, &mut rng), tangent(&p, 1.0, &mut rng), tangent(&p, 1.0, &mut rng));
        let a = curvature_operator(&p, &u, &v, &w).unwrap();
        let b = curvature_operator(&p, &v, &u, &w).unwrap();
        let sum = a.add_scaled(1.0, &b).unwrap();
        prop_assert!(inner(&p, &sum, &sum).unwrap().sqrt() <= 1e-10);
    }
}
