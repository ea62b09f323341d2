//! Closed-form and brute-force references: the exact per-shot success
//! probability, its cosine lower bound, the failure bounds, the classical
//! direct-candidate baseline and QRAM call costs.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LweError, Result};
use crate::fq::{self, FieldElement, FieldVector};
use crate::instance::{sample_error, ErrorDistribution, LweInstance};
use crate::reduce::{ReducedBatch, ReducedPair};
use crate::solver::{CoordinateReport, SolveOutcome};
use crate::verify::m_trial_test;

fn omega(exponent: i64, q: u64) -> Complex64 {
    let m = exponent.rem_euclid(q as i64) as f64;
    Complex64::from_polar(1.0, 2.0 * PI * m / q as f64)
}

/// Probability that one kernel shot lands on `k_d = -s_j k_star`:
/// `(1/(q^2 |v_j|)) sum_{k*} |sum_{a'} omega^{eta'(a') k*}|^2`, summed
/// directly from the batch's true errors. Includes the `k* = 0` term.
pub fn exact_success_probability(batch: &ReducedBatch) -> f64 {
    let q = batch.q;
    let v = batch.len() as f64;
    let total: f64 = (0..q)
        .map(|k| {
            batch
                .pairs
                .iter()
                .map(|p| omega(p.eta_prime.value() * k as i64, q))
                .sum::<Complex64>()
                .norm_sqr()
        })
        .sum();
    total / (q as f64 * q as f64 * v)
}

/// Same sum with `|z|^2` replaced by `Re(z)^2`.
pub fn real_part_sum(batch: &ReducedBatch) -> f64 {
    restricted_real_sum(batch, batch.q - 1)
}

/// `(1/(q^2 |v_j|)) sum_{k* = 0}^{k_max} (sum_{a'} Re omega^{eta' k*})^2`.
pub fn restricted_real_sum(batch: &ReducedBatch, k_max: u64) -> f64 {
    let q = batch.q;
    let v = batch.len() as f64;
    let total: f64 = (0..=k_max.min(q - 1))
        .map(|k| {
            let re: f64 = batch
                .pairs
                .iter()
                .map(|p| (2.0 * PI * (p.eta_prime.value() * k as i64) as f64 / q as f64).cos())
                .sum();
            re * re
        })
        .sum();
    total / (q as f64 * q as f64 * v)
}

/// Cut-off `floor(gamma q / xi')` of the restricted sum.
pub fn restricted_cutoff(gamma: f64, q: u64, xi_prime: u64) -> u64 {
    (gamma * q as f64 / xi_prime as f64).floor() as u64
}

/// `gamma |v_j| cos^2(2 pi gamma) / (xi' q)`.
pub fn lower_bound_p(gamma: f64, batch_size: usize, xi_prime: u64, q: u64) -> Result<f64> {
    if !(0.0..0.25).contains(&gamma) {
        return Err(LweError::param("gamma", format!("must lie in [0, 1/4), got {gamma}")));
    }
    if xi_prime == 0 {
        return Err(LweError::param("xi_prime", "the bound divides by xi', which must be at least 1"));
    }
    Ok(gamma * batch_size as f64 * (2.0 * PI * gamma).cos().powi(2) / (xi_prime as f64 * q as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub q: u64,
    pub xi_prime: u64,
    pub gamma_used: f64,
    pub batch_size: usize,
    pub exact_p: f64,
    pub real_part_p: f64,
    pub restricted_p: f64,
    pub lower_bound: f64,
    pub violated: bool,
}

/// Tolerance for declaring a bound violation.
pub const BOUND_SLACK: f64 = 1e-10;

/// Evaluates every link of the chain
/// `exact >= real-part form >= restricted sum >= lower bound` on one batch.
pub fn bound_report(batch: &ReducedBatch, gamma: f64) -> Result<BoundReport> {
    let exact_p = exact_success_probability(batch);
    let real_part_p = real_part_sum(batch);
    let restricted_p = restricted_real_sum(batch, restricted_cutoff(gamma, batch.q, batch.xi_prime.max(1)));
    let lower_bound = lower_bound_p(gamma, batch.len(), batch.xi_prime, batch.q)?;
    let violated = exact_p < lower_bound - BOUND_SLACK
        || exact_p < real_part_p - BOUND_SLACK
        || restricted_p < lower_bound - BOUND_SLACK;
    Ok(BoundReport {
        q: batch.q,
        xi_prime: batch.xi_prime,
        gamma_used: gamma,
        batch_size: batch.len(),
        exact_p,
        real_part_p,
        restricted_p,
        lower_bound,
        violated,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbIiiBound {
    /// `L (2 kappa alpha)^M`.
    pub paper_form: f64,
    /// `L ((2 xi' + 1)/q)^M` with `xi' = round(kappa alpha q)`.
    pub exact_form: f64,
}

/// Upper bounds on the probability of accepting a wrong secret.
pub fn prob_iii_bound(l: usize, kappa: f64, alpha: f64, m: u32, q: u64) -> ProbIiiBound {
    let xi_prime = (kappa * alpha * q as f64).round();
    ProbIiiBound {
        paper_form: l as f64 * (2.0 * kappa * alpha).powi(m as i32),
        exact_form: l as f64 * ((2.0 * xi_prime + 1.0) / q as f64).powi(m as i32),
    }
}

/// `(1 - delta/n)^n`.
pub fn prob_i_bound(delta: f64, n: usize) -> Result<f64> {
    if n == 0 || !(0.0..n as f64).contains(&delta) {
        return Err(LweError::param("delta", format!("need 0 <= delta < n, got {delta} with n = {n}")));
    }
    Ok((1.0 - delta / n as f64).powi(n as i32))
}

/// Exact per-coordinate success rate of the direct-candidate baseline with
/// a uniformly random nonzero `a'`: the fraction of `(a', eta')` for which
/// `b' / a' = s_j`, weighted by the error law.
pub fn baseline_coordinate_rate(chi_prime: &ErrorDistribution, q: u64) -> f64 {
    let bound = chi_prime.bound() as i64;
    let mut rate = 0.0;
    for eta in -bound..=bound {
        let p = chi_prime.pmf(eta);
        let hits = (1..q)
            .filter(|&a| {
                let shift = fq::mul_mod(fq::reduce_signed(eta, q), fq::inv_mod(a, q).expect("a != 0"), q);
                shift == 0
            })
            .count();
        rate += p * hits as f64 / (q - 1) as f64;
    }
    rate
}

/// Classical comparison: each candidate is `b' / a'` from one reduced pair,
/// tested with the same `M`-trial test. Controlled-mode pairs.
pub fn classical_baseline_solve<R: Rng + ?Sized>(
    instance: &LweInstance,
    xi_prime: u64,
    m: usize,
    trial_budget: usize,
    rng: &mut R,
) -> Result<SolveOutcome> {
    let q = instance.q();
    let chi_prime = instance.chi().with_bound(xi_prime);
    chi_prime.validate(q)?;
    let mut tests = crate::reduce::ControlledSource::new(instance, crate::reduce::InputSet::Full, xi_prime)?;
    let mut reports = Vec::with_capacity(instance.n());
    let mut recovered = Vec::with_capacity(instance.n());
    for j in 0..instance.n() {
        let s_j = instance.secret().get(j);
        let mut report = CoordinateReport::default();
        for _ in 0..trial_budget {
            let a = FieldElement::new_unchecked(rng.gen_range(1..q), q);
            let pair = ReducedPair::synthesize(a, s_j, sample_error(&chi_prime, rng), 1);
            let candidate = pair.b_prime * pair.a_prime.inv()?;
            report.shots += 1;
            report.candidates_tried += 1;
            let verdict = m_trial_test(candidate, m, xi_prime, j, &mut tests, rng)?;
            report.test_pairs_used += verdict.trials_used;
            if verdict.accepted {
                report.accepted = Some(candidate.value());
                break;
            }
            report.rejected.push(candidate.value());
        }
        let done = report.accepted;
        reports.push(report);
        match done {
            Some(v) => recovered.push(v),
            None => break,
        }
    }
    let returned = (recovered.len() == instance.n())
        .then(|| FieldVector::new(recovered, q))
        .transpose()?;
    Ok(SolveOutcome::classify(returned, reports, instance.secret()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QramScheme {
    Primitive,
    BucketBrigade,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleForm {
    /// Superposition over all of F_q^n.
    Full,
    /// One coordinate at a time, `|v_j| = O(q)`.
    Divided,
}

/// QRAM call cost with every big-O constant set to 1:
/// `q^{n/d}`, `n log2 q`, `q^{1/d}` and `log2 q`.
pub fn qram_cost(q: u64, n: usize, d: u32, scheme: QramScheme, form: SampleForm) -> Result<f64> {
    if d == 0 {
        return Err(LweError::param("d", "must be at least 1"));
    }
    let qf = q as f64;
    Ok(match (form, scheme) {
        (SampleForm::Full, QramScheme::Primitive) => qf.powf(n as f64 / d as f64),
        (SampleForm::Full, QramScheme::BucketBrigade) => n as f64 * qf.log2(),
        (SampleForm::Divided, QramScheme::Primitive) => qf.powf(1.0 / d as f64),
        (SampleForm::Divided, QramScheme::BucketBrigade) => qf.log2(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fq::CenteredInt;
    use crate::reduce::ReductionMode;
    use crate::seed::derive_rng;

    fn batch(q: u64, etas: &[i64], xi_prime: u64) -> ReducedBatch {
        let s = FieldElement::new(3 % q, q).unwrap();
        ReducedBatch {
            j: 0,
            q,
            mode: ReductionMode::Controlled,
            pairs: etas
                .iter()
                .enumerate()
                .map(|(a, &e)| ReducedPair::synthesize(FieldElement::new(a as u64, q).unwrap(), s, CenteredInt(e), 1))
                .collect(),
            xi_prime,
            kappa: 1.0,
        }
    }

    #[test]
    fn exact_probability_examples() {
        for q in [5u64, 7, 31] {
            let b = batch(q, &vec![0; q as usize], 1);
            assert!((exact_success_probability(&b) - 1.0).abs() < 1e-12);
            let single = batch(q, &[2], 2);
            assert!((exact_success_probability(&single) - 1.0 / q as f64).abs() < 1e-12);
        }
        let constant = batch(7, &[1; 7], 1);
        assert!((exact_success_probability(&constant) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lower_bound_examples() {
        assert_eq!(lower_bound_p(0.0, 101, 2, 101).unwrap(), 0.0);
        for xi in 1..5 {
            let b = lower_bound_p(0.125, 101, xi, 101).unwrap();
            assert!((b - 1.0 / (16.0 * xi as f64)).abs() < 1e-15);
        }
        assert!(lower_bound_p(0.1, 10, 0, 101).is_err());
        assert!(lower_bound_p(0.25, 10, 1, 101).is_err());
    }

    #[test]
    fn bound_chain_holds_on_random_batches() {
        let mut rng = derive_rng(41, 0, 0);
        for q in [7u64, 11, 31, 53, 101] {
            for xi in [1u64, 2, 4] {
                if 2 * xi >= q {
                    continue;
                }
                let chi = ErrorDistribution::uniform(xi);
                for gamma in [0.05, 0.1, 0.125, 0.2] {
                    for _ in 0..5 {
                        let etas: Vec<i64> = (0..q).map(|_| sample_error(&chi, &mut rng).value()).collect();
                        let report = bound_report(&batch(q, &etas, xi), gamma).unwrap();
                        assert!(!report.violated, "{report:?}");
                        assert!(report.exact_p <= 1.0 + 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn prob_iii_examples() {
        let b = prob_iii_bound(100, 1.0, 0.05, 3, 1009);
        assert!((b.paper_form - 0.1).abs() < 1e-12);
        let mut prev = f64::INFINITY;
        for m in 1..40 {
            let b = prob_iii_bound(50, 2.0, 0.01, m, 401);
            assert!(b.paper_form < prev);
            prev = b.paper_form;
        }
        assert!(prev < 1e-40);
        for l in 1..20 {
            assert!(prob_iii_bound(l + 1, 2.0, 0.01, 2, 401).exact_form > prob_iii_bound(l, 2.0, 0.01, 2, 401).exact_form);
        }
    }

    #[test]
    fn prob_i_examples() {
        assert_eq!(prob_i_bound(0.0, 5).unwrap(), 1.0);
        assert!((prob_i_bound(0.1, 10).unwrap() - 0.99f64.powi(10)).abs() < 1e-15);
        assert!((prob_i_bound(0.1, 10).unwrap() - 0.904_382).abs() < 1e-6);
        for n in 1..50 {
            for delta in [0.01, 0.1, 0.2, 0.5, 0.9] {
                assert!(prob_i_bound(delta, n).unwrap() >= 1.0 - delta - 1e-15);
            }
        }
        assert!(prob_i_bound(2.0, 2).is_err());
    }

    #[test]
    fn baseline_rate_is_zero_error_mass() {
        for q in [7u64, 31, 101] {
            for xi in 0..3u64 {
                let chi = ErrorDistribution::uniform(xi);
                assert!((baseline_coordinate_rate(&chi, q) - 1.0 / (2 * xi + 1) as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn baseline_noiseless_always_succeeds() {
        let mut rng = derive_rng(42, 0, 0);
        let inst = LweInstance::generate(6, 101, ErrorDistribution::uniform(0), &mut rng).unwrap();
        for _ in 0..20 {
            let out = classical_baseline_solve(&inst, 0, 1, 1, &mut rng).unwrap();
            assert_eq!(out.class, crate::solver::OutcomeClass::Success);
        }
    }

    #[test]
    fn qram_examples() {
        assert_eq!(qram_cost(2, 4, 2, QramScheme::Primitive, SampleForm::Full).unwrap(), 4.0);
        assert_eq!(qram_cost(1024, 7, 3, QramScheme::BucketBrigade, SampleForm::Divided).unwrap(), 10.0);
        assert_eq!(qram_cost(1024, 7, 3, QramScheme::BucketBrigade, SampleForm::Full).unwrap(), 70.0);
        for (q, n, d) in [(101u64, 4usize, 1u32), (401, 8, 2), (17, 16, 4)] {
            let full = qram_cost(q, n, d, QramScheme::Primitive, SampleForm::Full).unwrap();
            let div = qram_cost(q, n, d, QramScheme::Primitive, SampleForm::Divided).unwrap();
            let expected = (q as f64).powf((1.0 - n as f64) / d as f64);
            assert!((div / full - expected).abs() <= 1e-12 * expected.max(1e-300));
        }
        assert!(qram_cost(5, 2, 0, QramScheme::Primitive, SampleForm::Full).is_err());
    }
}
