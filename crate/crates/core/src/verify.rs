//! The M-trial acceptance test on deterministic test pairs.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LweError, Result};
use crate::fq::{self, centered_raw, FieldElement};
use crate::reduce::{ReducedPair, TestSource};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestVerdict {
    pub accepted: bool,
    pub trials_used: usize,
    pub deltas: Vec<u64>,
}

/// `|centered(b' - t s~)|`, i.e. `|t (s_j - s~) + eta'|` on residues.
pub fn delta(test_pair: &ReducedPair, s_tilde: FieldElement) -> Result<u64> {
    if test_pair.a_prime.is_zero() {
        return Err(LweError::DegenerateTest);
    }
    let q = test_pair.a_prime.modulus();
    let predicted = fq::mul_mod(test_pair.a_prime.value(), s_tilde.value(), q);
    Ok(centered_raw(fq::sub_mod(test_pair.b_prime.value(), predicted, q), q).abs())
}

/// Accepts `s_tilde` iff `delta <= xi_prime` on `m` consecutive fresh test
/// pairs; stops at the first violation.
pub fn m_trial_test<S: TestSource + ?Sized, R: Rng + ?Sized>(
    s_tilde: FieldElement,
    m: usize,
    xi_prime: u64,
    j: usize,
    source: &mut S,
    rng: &mut R,
) -> Result<TestVerdict> {
    if m == 0 {
        return Err(LweError::param("M", "the test needs at least one trial"));
    }
    let mut deltas = Vec::with_capacity(m);
    for _ in 0..m {
        let pair = source.next_test_pair(j, rng)?;
        let d = delta(&pair, s_tilde)?;
        deltas.push(d);
        if d > xi_prime {
            return Ok(TestVerdict {
                accepted: false,
                trials_used: deltas.len(),
                deltas,
            });
        }
    }
    Ok(TestVerdict {
        accepted: true,
        trials_used: m,
        deltas,
    })
}

/// A finite, pre-built list of test pairs.
#[derive(Debug, Clone, Default)]
pub struct PairQueue {
    pairs: VecDeque<ReducedPair>,
    handed_out: usize,
}

impl PairQueue {
    pub fn new(pairs: impl IntoIterator<Item = ReducedPair>) -> Self {
        Self {
            pairs: pairs.into_iter().collect(),
            handed_out: 0,
        }
    }

    pub fn remaining(&self) -> usize {
        self.pairs.len()
    }
}

impl TestSource for PairQueue {
    fn next_test_pair<R: Rng + ?Sized>(&mut self, _j: usize, _rng: &mut R) -> Result<ReducedPair> {
        match self.pairs.pop_front() {
            Some(p) => {
                self.handed_out += 1;
                Ok(p)
            }
            None => Err(LweError::TestSourceExhausted {
                available: self.handed_out,
                needed: self.handed_out + 1,
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FalseAcceptProbability {
    /// `((2 xi' + 1) / q)^M`.
    pub exact: f64,
    /// `(2 kappa alpha)^M`.
    pub approx: f64,
    pub xi_prime: u64,
}

/// Probability that a wrong candidate survives `m` trials, with
/// `xi' = round(kappa * alpha * q)`.
pub fn false_accept_probability(kappa: f64, alpha: f64, q: u64, m: u32) -> Result<FalseAcceptProbability> {
    let ratio = 2.0 * kappa * alpha;
    if !(ratio >= 0.0 && ratio + 1.0 / q as f64 <= 1.0 + 1e-12) {
        return Err(LweError::param(
            "kappa*alpha",
            format!("2 kappa alpha + 1/q = {} exceeds 1", ratio + 1.0 / q as f64),
        ));
    }
    let xi_prime = (kappa * alpha * q as f64).round() as u64;
    Ok(FalseAcceptProbability {
        exact: per_trial_pass_bound(xi_prime, q).powi(m as i32),
        approx: ratio.powi(m as i32),
        xi_prime,
    })
}

/// `(2 xi' + 1) / q`, the per-trial pass bound for a wrong candidate.
pub fn per_trial_pass_bound(xi_prime: u64, q: u64) -> f64 {
    (2 * xi_prime + 1) as f64 / q as f64
}

/// Number of nonzero `t` for which `|centered(t (s_j - s~) + eta')| <= xi'`.
pub fn passing_test_count(q: u64, s_j: u64, s_tilde: u64, eta_prime: i64, xi_prime: u64) -> u64 {
    let diff = fq::sub_mod(s_j % q, s_tilde % q, q);
    let eta = fq::reduce_signed(eta_prime, q);
    (1..q)
        .filter(|&t| centered_raw(fq::add_mod(fq::mul_mod(t, diff, q), eta, q), q).abs() <= xi_prime)
        .count() as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fq::CenteredInt;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fe(v: u64, q: u64) -> FieldElement {
        FieldElement::new(v, q).unwrap()
    }

    fn pair(t: u64, s: u64, eta: i64, q: u64) -> ReducedPair {
        ReducedPair::synthesize(fe(t, q), fe(s, q), CenteredInt(eta), 1)
    }

    #[test]
    fn delta_examples() {
        assert_eq!(delta(&pair(5, 9, 0, 13), fe(9, 13)).unwrap(), 0);
        // q=17, t=4, s=3, eta'=2: b' = 14
        let p = pair(4, 3, 2, 17);
        assert_eq!(p.b_prime.value(), 14);
        assert_eq!(delta(&p, fe(3, 17)).unwrap(), 2);
        assert_eq!(delta(&p, fe(5, 17)).unwrap(), 6);
        assert!(matches!(delta(&pair(0, 3, 1, 17), fe(3, 17)), Err(LweError::DegenerateTest)));
    }

    #[test]
    fn delta_ignores_representative() {
        let q = 23;
        let p = pair(7, 11, -3, q);
        for s in 0..q {
            let shifted = FieldElement::new(s + q, q).unwrap();
            assert_eq!(delta(&p, fe(s, q)).unwrap(), delta(&p, shifted).unwrap());
        }
    }

    #[test]
    fn true_secret_always_accepted() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let q = 101;
        let xi = 4;
        for _ in 0..500 {
            let pairs: Vec<_> = (0..5)
                .map(|_| pair(rng.gen_range(1..q), 42, rng.gen_range(-(xi as i64)..=xi as i64), q))
                .collect();
            let mut src = PairQueue::new(pairs);
            let v = m_trial_test(fe(42, q), 5, xi, 0, &mut src, &mut rng).unwrap();
            assert!(v.accepted);
            assert_eq!(v.trials_used, 5);
            assert!(v.deltas.iter().all(|&d| d <= xi));
        }
    }

    #[test]
    fn rejection_stops_early() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let q = 17;
        let mut src = PairQueue::new(vec![pair(4, 3, 2, q), pair(1, 3, 0, q)]);
        let v = m_trial_test(fe(5, q), 2, 2, 0, &mut src, &mut rng).unwrap();
        assert!(!v.accepted);
        assert_eq!(v.trials_used, 1);
        assert_eq!(v.deltas, vec![6]);
        assert_eq!(src.remaining(), 1);
    }

    #[test]
    fn zero_trials_and_exhaustion() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let q = 17;
        let mut src = PairQueue::new(vec![pair(4, 3, 0, q)]);
        assert!(matches!(
            m_trial_test(fe(3, q), 0, 1, 0, &mut src, &mut rng),
            Err(LweError::InvalidParameter { .. })
        ));
        assert!(matches!(
            m_trial_test(fe(3, q), 2, 1, 0, &mut src, &mut rng),
            Err(LweError::TestSourceExhausted { available: 1, needed: 2 })
        ));
    }

    #[test]
    fn false_accept_examples() {
        // kappa * alpha * q = 1 with q = 7
        let p = false_accept_probability(1.0, 1.0 / 7.0, 7, 1).unwrap();
        assert_eq!(p.xi_prime, 1);
        assert!((p.exact - 3.0 / 7.0).abs() < 1e-15);

        for m in 1..5 {
            let p = false_accept_probability(0.0, 0.0, 11, m).unwrap();
            assert!((p.exact - (1.0f64 / 11.0).powi(m as i32)).abs() < 1e-15);
        }

        let p = false_accept_probability(1.0, 0.05, 1009, 3).unwrap();
        assert!((p.approx - 1e-3).abs() < 1e-15);

        assert!(false_accept_probability(10.0, 0.1, 101, 1).is_err());
    }

    #[test]
    fn passing_count_closed_form() {
        // For s~ != s_j, t (s_j - s~) sweeps all nonzero residues, so exactly
        // 2 xi' of them land in the window when |eta'| <= xi'.
        for q in [7u64, 31, 101] {
            for xi in 0..3u64 {
                for eta in -(xi as i64)..=xi as i64 {
                    for s_tilde in [0u64, 1, q - 1] {
                        if s_tilde == 2 {
                            continue;
                        }
                        assert_eq!(passing_test_count(q, 2, s_tilde, eta, xi), 2 * xi);
                    }
                }
                assert_eq!(passing_test_count(q, 2, 2, 0, xi), q - 1);
            }
        }
    }
}
