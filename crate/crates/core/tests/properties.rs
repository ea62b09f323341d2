use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qlwe::fq::{self, centered, mat_inverse, solve_noiseless, FieldElement, FieldMatrix, FieldVector};
use qlwe::instance::{ErrorDistribution, LweInstance};
use qlwe::oracle::prob_iii_bound;
use qlwe::reduce::{reduce_to_coordinate, EliminationSource, InputSet};

const LARGE_PRIMES: [u64; 5] = [1009, 7919, 65_521, 1_000_003, 2_147_483_647];
const SMALL_PRIMES: [u64; 6] = [3, 5, 7, 31, 101, 401];

fn prime(list: &'static [u64]) -> impl Strategy<Value = u64> {
    prop::sample::select(list)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn inverse_large_moduli(q in prime(&LARGE_PRIMES), x in 1u64..u64::MAX) {
        let x = FieldElement::new(x % (q - 1) + 1, q).unwrap();
        prop_assert_eq!((x * x.inv().unwrap()).value(), 1);
    }

    #[test]
    fn centered_round_trips(q in prime(&LARGE_PRIMES), x in any::<u64>()) {
        let x = FieldElement::new(x % q, q).unwrap();
        let c = centered(x).value();
        prop_assert!(2 * c.unsigned_abs() < q);
        prop_assert_eq!(fq::reduce_signed(c, q), x.value());
    }

    #[test]
    fn accepted_inverses_are_two_sided(q in prime(&SMALL_PRIMES), n in 1usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<u64>> = (0..n).map(|_| (0..n).map(|_| rng.gen_range(0..q)).collect()).collect();
        let a = FieldMatrix::from_rows(&rows, q).unwrap();
        if let Ok(inv) = mat_inverse(&a) {
            let id = FieldMatrix::identity(n, q);
            prop_assert_eq!(inv.mul(&a).unwrap(), id.clone());
            prop_assert_eq!(a.mul(&inv).unwrap(), id);
        }
    }

    #[test]
    fn noiseless_solve_recovers_secret(q in prime(&SMALL_PRIMES[2..]), n in 1usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = LweInstance::generate(n, q, ErrorDistribution::uniform(0), &mut rng).unwrap();
        let pairs: Vec<(FieldVector, FieldElement)> = inst
            .gen_samples(n, &mut rng)
            .into_iter()
            .map(|s| (s.a().clone(), s.b()))
            .collect();
        match solve_noiseless(&pairs) {
            Ok(s) => {
                prop_assert_eq!(&s, inst.secret());
                for (a, b) in &pairs {
                    prop_assert_eq!(a.dot(&s).unwrap(), *b);
                }
            }
            Err(e) => prop_assert!(matches!(e, qlwe::LweError::SingularMatrix { .. }), "{e}"),
        }
    }

    #[test]
    fn elimination_pairs_respect_identity_and_triangle_bound(
        q in prime(&[101u64, 401, 1009]),
        n in 2usize..5,
        xi in 0u64..3,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = LweInstance::generate(n, q, ErrorDistribution::uniform(xi), &mut rng).unwrap();
        let mut src = EliminationSource::new(&inst, InputSet::Full, xi);
        let j = rng.gen_range(0..n);
        let a = FieldElement::new(rng.gen_range(1..q), q).unwrap();
        let pair = src.reduce_one(j, a, &mut rng).unwrap();
        let s_j = inst.secret().get(j);
        prop_assert!(pair.is_consistent_with(s_j));
        prop_assert_eq!(
            (pair.b_prime - pair.a_prime * s_j).value(),
            fq::reduce_signed(pair.eta_prime.value(), q)
        );
        prop_assert!(pair.eta_prime.abs() <= pair.coeff_l1 * xi);
    }

    #[test]
    fn noiseless_reduction_recovers_coordinate(q in prime(&SMALL_PRIMES[3..]), n in 1usize..5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = LweInstance::generate(n, q, ErrorDistribution::uniform(0), &mut rng).unwrap();
        let samples = inst.gen_samples(n, &mut rng);
        let j = rng.gen_range(0..n);
        let a = FieldElement::new(rng.gen_range(1..q), q).unwrap();
        if let Ok(pair) = reduce_to_coordinate(&samples, j, a) {
            prop_assert_eq!(pair.b_prime * pair.a_prime.inv().unwrap(), inst.secret().get(j));
        }
    }

    #[test]
    fn prob_iii_monotone(l in 1usize..500, m in 1u32..10, xi_prime in 1u64..20) {
        let q = 1009;
        let alpha = 1.0 / q as f64;
        let kappa = xi_prime as f64;
        let base = prob_iii_bound(l, kappa, alpha, m, q);
        let more_m = prob_iii_bound(l, kappa, alpha, m + 1, q);
        let more_l = prob_iii_bound(l + 1, kappa, alpha, m, q);
        prop_assert!(more_m.exact_form <= base.exact_form && more_m.paper_form <= base.paper_form);
        prop_assert!(more_l.exact_form >= base.exact_form && more_l.paper_form >= base.paper_form);
    }
}
