use momentgmm::symtensor::{binomial, monomials, num_monomials, MultiIndex, SymmetricTensor, WaringDecomposition};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gauss(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn random_tensor(rng: &mut ChaCha8Rng, m: usize, d: usize) -> SymmetricTensor {
    SymmetricTensor::from_coeffs(m, d, gauss(rng, num_monomials(m, d))).unwrap()
}

// Brute force: expand the symmetric tensor into all m^d index tuples.
fn eval_by_tuples(t: &SymmetricTensor, x: &[f64]) -> f64 {
    let (m, d) = (t.dim(), t.order());
    let mut total = 0.0;
    let mut idx = vec![0usize; d];
    loop {
        let mut alpha = vec![0usize; m];
        let mut prod = 1.0;
        for &i in &idx {
            alpha[i] += 1;
            prod *= x[i];
        }
        total += t.get(&alpha) * prod;
        let mut pos = 0;
        loop {
            if pos == d {
                return total;
            }
            idx[pos] += 1;
            if idx[pos] < m {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

fn random_orthogonal(rng: &mut ChaCha8Rng, m: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(m, m, |_, _| rng.sample(StandardNormal));
    a.qr().q()
}

fn rel(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale.max(1e-300)
}

#[test]
fn coefficient_count_matches_binomial() {
    for m in 1..=10 {
        for d in 1..=6 {
            let expected = binomial(m + d - 1, d) as usize;
            assert_eq!(num_monomials(m, d), expected);
            assert_eq!(monomials(m, d).len(), expected);
            assert_eq!(SymmetricTensor::zeros(m, d).unwrap().len(), expected);
        }
    }
}

#[test]
fn graded_lex_order_is_strict() {
    for m in 1..=4 {
        for d in 1..=4 {
            let mons = monomials(m, d);
            assert!(mons.iter().all(|a| a.degree() == d));
            for w in mons.windows(2) {
                assert!(w[0].0 > w[1].0, "{} before {}", w[0], w[1]);
            }
            for (i, a) in mons.iter().enumerate() {
                assert_eq!(a.rank(), i);
            }
        }
    }
}

#[test]
fn spec_examples() {
    let mut t = SymmetricTensor::zeros(2, 3).unwrap();
    t.set(&[3, 0], 1.0);
    assert_eq!(t.eval(&[2.0, 0.0]).unwrap(), 8.0);
    t.set(&[0, 3], 1.0);
    assert_eq!(t.eval(&[1.0, 1.0]).unwrap(), 2.0);
    let p = SymmetricTensor::pow_linear(&[1.0, 1.0], 2).unwrap();
    assert_eq!(p.coeffs(), &[1.0, 1.0, 1.0]);
    let mut x1x2 = SymmetricTensor::zeros(2, 2).unwrap();
    // X1 X2 has polynomial coefficient 1 = (2 choose (1,1)) * T_(1,1)
    x1x2.set(&[1, 1], 0.5);
    assert_eq!(p.apolar(&x1x2).unwrap(), 1.0);
    let e1 = SymmetricTensor::pow_linear(&[1.0, 0.0, 0.0], 3).unwrap();
    assert_eq!(e1.apolar(&e1).unwrap(), 1.0);
    assert_eq!(e1.get(&[3, 0, 0]), 1.0);
    assert_eq!(e1.coeffs().iter().filter(|&&c| c != 0.0).count(), 1);
}

#[test]
fn reconstruct_canonical_form() {
    let w = WaringDecomposition::new(vec![1.0, 1.0], vec![vec![1.0, 0.0], vec![0.0, 1.0]], 3).unwrap();
    let t = w.reconstruct().unwrap();
    assert_eq!(t.coeffs(), &[1.0, 0.0, 0.0, 1.0]);
}

#[test]
fn multinomial_matches_factorials() {
    let a = MultiIndex(vec![2, 1, 3]);
    assert_eq!(a.multinomial(), 720 / (2 * 6));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eval_matches_tuple_expansion(seed in any::<u64>(), m in 1usize..4, d in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_tensor(&mut rng, m, d);
        let x = gauss(&mut rng, m);
        let a = t.eval(&x).unwrap();
        let b = eval_by_tuples(&t, &x);
        prop_assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
    }

    #[test]
    fn pow_linear_evaluates_power(seed in any::<u64>(), m in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = gauss(&mut rng, m);
        let t = SymmetricTensor::pow_linear(&v, 4).unwrap();
        for _ in 0..10 {
            let x = gauss(&mut rng, m);
            let dot: f64 = v.iter().zip(&x).map(|(a, b)| a * b).sum();
            let want = dot.powi(4);
            prop_assert!((t.eval(&x).unwrap() - want).abs() <= 1e-10 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn apolar_is_inner_product(seed in any::<u64>(), m in 1usize..5, d in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_tensor(&mut rng, m, d);
        let q = random_tensor(&mut rng, m, d);
        let s = random_tensor(&mut rng, m, d);
        let (a, b): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
        let scale = p.apolar_norm() * q.apolar_norm() + 1.0;
        prop_assert!(rel(p.apolar(&q).unwrap(), q.apolar(&p).unwrap(), scale) < 1e-12);
        let mut comb = p.scaled(a);
        comb.axpy(b, &s).unwrap();
        let lhs = comb.apolar(&q).unwrap();
        let rhs = a * p.apolar(&q).unwrap() + b * s.apolar(&q).unwrap();
        prop_assert!(rel(lhs, rhs, scale * (a.abs() + b.abs() + 1.0) * (1.0 + s.apolar_norm())) < 1e-12);
        prop_assert!(p.apolar(&p).unwrap() > 0.0);
    }

    #[test]
    fn apolar_duality(seed in any::<u64>(), m in 1usize..5, d in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = gauss(&mut rng, m);
        let p = random_tensor(&mut rng, m, d);
        let lhs = SymmetricTensor::pow_linear(&v, d).unwrap().apolar(&p).unwrap();
        let rhs = p.eval(&v).unwrap();
        let vn: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!(rel(lhs, rhs, p.apolar_norm() * vn.powi(d as i32)) < 1e-12);
    }

    #[test]
    fn apolar_derivative_rule(seed in any::<u64>(), m in 1usize..5, d in 2usize..5, i in 0usize..4) {
        let i = i % m;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_tensor(&mut rng, m, d);
        let q = random_tensor(&mut rng, m, d - 1);
        let lhs = p.apolar(&q.mul_var(i).unwrap()).unwrap();
        let rhs = p.derivative(i).unwrap().apolar(&q).unwrap() / d as f64;
        prop_assert!(rel(lhs, rhs, p.apolar_norm() * q.apolar_norm()) < 1e-12);
    }

    #[test]
    fn apolar_unitary_invariance(seed in any::<u64>(), m in 1usize..5, d in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_tensor(&mut rng, m, d);
        let q = random_tensor(&mut rng, m, d);
        let u = random_orthogonal(&mut rng, m);
        let pu = p.compose_linear(&u).unwrap();
        let qu = q.compose_linear(&u).unwrap();
        let scale = p.apolar_norm() * q.apolar_norm();
        prop_assert!((pu.apolar(&qu).unwrap() - p.apolar(&q).unwrap()).abs() <= 1e-10 * scale);
    }

    #[test]
    fn compose_linear_evaluates(seed in any::<u64>(), m in 1usize..4, d in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_tensor(&mut rng, m, d);
        let u = DMatrix::from_fn(m, m, |_, _| rng.sample(StandardNormal));
        let pu = p.compose_linear(&u).unwrap();
        let x = gauss(&mut rng, m);
        let ux: Vec<f64> = (&u * nalgebra::DVector::from_vec(x.clone())).iter().copied().collect();
        let want = p.eval(&ux).unwrap();
        prop_assert!((pu.eval(&x).unwrap() - want).abs() <= 1e-9 * (1.0 + want.abs()));
    }

    #[test]
    fn reconstruct_is_weighted_sum(seed in any::<u64>(), m in 1usize..5, r in 1usize..5, d in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = gauss(&mut rng, r);
        let points: Vec<Vec<f64>> = (0..r).map(|_| gauss(&mut rng, m)).collect();
        let w = WaringDecomposition::new(weights.clone(), points.clone(), d).unwrap();
        let mut direct = SymmetricTensor::zeros(m, d).unwrap();
        for (wi, p) in weights.iter().zip(&points) {
            direct.axpy(*wi, &SymmetricTensor::pow_linear(p, d).unwrap()).unwrap();
        }
        prop_assert!(w.reconstruct().unwrap().sub(&direct).unwrap().apolar_norm() <= 1e-14 * (1.0 + direct.apolar_norm()));
    }

    #[test]
    fn tensor_json_round_trip(seed in any::<u64>(), m in 1usize..5, d in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_tensor(&mut rng, m, d).scaled(1e-3 + rng.random::<f64>() * 1e6);
        let back = momentgmm::io::tensor_from_json(&momentgmm::io::tensor_to_json(&t)).unwrap();
        prop_assert_eq!(t.coeffs().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                        back.coeffs().iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    }
}
