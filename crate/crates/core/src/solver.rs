//! The full algorithm: per-coordinate kernel shots with a retry budget `L`,
//! the `M`-trial test on every candidate, and outcome classification.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LweError, Result};
use crate::fq::{FieldElement, FieldVector};
use crate::instance::LweInstance;
use crate::qsim::{self, extract_candidate, KernelSampler};
use crate::reduce::{BatchSource, ControlledSource, EliminationSource, InputSet, ReducedPair, ReductionMode, TestSource};
use crate::seed;
use crate::verify::{m_trial_test, per_trial_pass_bound};

/// Largest `M` `choose_parameters` will consider.
pub const MAX_TEST_TRIALS: usize = 64;

/// `C = gamma cos^2(2 pi gamma)`.
pub fn c_constant(gamma: f64) -> f64 {
    gamma * (2.0 * PI * gamma).cos().powi(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveParameters {
    pub gamma: f64,
    /// Retry budget per coordinate.
    pub l: usize,
    /// Test trials per candidate.
    pub m: usize,
    pub xi_prime: u64,
    pub c: f64,
}

impl SolveParameters {
    /// Hand-picked budget, bypassing `choose_parameters`. Still validated.
    pub fn manual(gamma: f64, l: usize, m: usize, xi_prime: u64, q: u64) -> Result<Self> {
        check_gamma(gamma)?;
        if m == 0 {
            return Err(LweError::param("M", "must be at least 1"));
        }
        if l as u64 > q {
            return Err(LweError::param("L", format!("{l} exceeds q = {q}")));
        }
        Ok(Self {
            gamma,
            l,
            m,
            xi_prime,
            c: c_constant(gamma),
        })
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 0.25) {
        return Err(LweError::param("gamma", format!("must lie in (0, 1/4), got {gamma}")));
    }
    Ok(())
}

/// Picks `(L, M)` for a target failure probability `delta`.
///
/// `L = ceil((xi'/C) ln(n/delta))` so that `(1 - C/xi')^L <= delta/n`, and
/// `M` is the smallest value with `L ((2 xi' + 1)/q)^M <= delta/n`. With
/// `xi' = 0` the per-shot failure is only the null outcome (probability
/// `1/q`), so `L = ceil(ln(n/delta) / ln q)`.
pub fn choose_parameters(n: usize, q: u64, xi: u64, kappa: f64, delta: f64, gamma: f64) -> Result<SolveParameters> {
    check_gamma(gamma)?;
    if n == 0 {
        return Err(LweError::param("n", "must be at least 1"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(LweError::param("delta", format!("must lie in (0, 1), got {delta}")));
    }
    if !(kappa.is_finite() && kappa >= 0.0) {
        return Err(LweError::param("kappa", format!("must be non-negative, got {kappa}")));
    }
    let xi_prime = (kappa * xi as f64).ceil() as u64;
    if 2 * xi_prime >= q {
        return Err(LweError::InfeasibleParameters(format!(
            "kappa * xi = {xi_prime} is not below q/2 = {}",
            q as f64 / 2.0
        )));
    }
    let c = c_constant(gamma);
    let log_term = (n as f64 / delta).ln();
    let raw_l = if xi_prime == 0 {
        log_term / (q as f64).ln()
    } else {
        xi_prime as f64 / c * log_term
    };
    let l = (raw_l.ceil() as usize).max(1);
    if l as u64 > q {
        return Err(LweError::InfeasibleParameters(format!(
            "retry budget L = {l} exceeds q = {q}"
        )));
    }
    let target = delta / n as f64;
    let m = test_trials_for(l, xi_prime, q, target).ok_or_else(|| {
            LweError::InfeasibleParameters(format!(
                "no M <= {MAX_TEST_TRIALS} brings L ((2 xi' + 1)/q)^M below {target}"
            ))
        })?;
    Ok(SolveParameters {
        gamma,
        l,
        m,
        xi_prime,
        c,
    })
}

/// Smallest `M <= 64` with `l ((2 xi' + 1)/q)^M <= target`.
pub fn test_trials_for(l: usize, xi_prime: u64, q: u64, target: f64) -> Option<usize> {
    let per_trial = per_trial_pass_bound(xi_prime, q);
    (1..=MAX_TEST_TRIALS).find(|&m| l as f64 * per_trial.powi(m as i32) <= target)
}

/// How each kernel shot is simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelPath {
    /// Exact conditional sampling, `O(q |v_j|)` per shot.
    Sampled,
    /// Full `q x q` state through both transforms, `O(q^3)` per shot.
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub mode: ReductionMode,
    pub inputs: InputSet,
    pub kernel: KernelPath,
    /// Skip re-testing candidates already rejected at this coordinate.
    pub dedup: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            mode: ReductionMode::Controlled,
            inputs: InputSet::Full,
            kernel: KernelPath::Sampled,
            dedup: false,
        }
    }
}

/// What happened at one coordinate.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CoordinateReport {
    /// Kernel shots, each consuming one fresh quantum sample.
    pub shots: usize,
    pub null_count: usize,
    /// Candidates that went through the test.
    pub candidates_tried: usize,
    pub rejected: Vec<u64>,
    pub accepted: Option<u64>,
    pub test_pairs_used: usize,
    /// Batch pairs whose true error exceeded the assumed bound.
    pub bound_violations: usize,
    /// Test pairs whose true error exceeded the assumed bound. The true
    /// coordinate can only be rejected on such a pair.
    pub test_bound_violations: usize,
}

/// Counts test pairs outside the assumed bound as they are handed out.
struct Audited<'a, T> {
    inner: &'a mut T,
    xi_prime: u64,
    violations: usize,
}

impl<T: TestSource> TestSource for Audited<'_, T> {
    fn next_test_pair<R: Rng + ?Sized>(&mut self, j: usize, rng: &mut R) -> Result<ReducedPair> {
        let pair = self.inner.next_test_pair(j, rng)?;
        if pair.eta_prime.abs() > self.xi_prime {
            self.violations += 1;
        }
        Ok(pair)
    }
}

fn shoot<B: BatchSource, R: Rng + ?Sized>(
    j: usize,
    batches: &mut B,
    kernel: KernelPath,
    sampler: &mut KernelSampler,
    rng: &mut R,
    report: &mut CoordinateReport,
) -> Result<Option<FieldElement>> {
    let batch = batches.next_batch(j, rng)?;
    report.bound_violations += batch.bound_violations();
    let outcome = match kernel {
        KernelPath::Sampled => sampler.sample(&batch, rng)?,
        KernelPath::Dense => {
            let state = qsim::bv_kernel(&qsim::prepare_sample_state(&batch)?);
            qsim::measure(&state, rng)?
        }
    };
    Ok(extract_candidate(&outcome))
}

/// Runs up to `L` kernel shots at coordinate `j`, testing each non-null
/// candidate, and returns at the first accepted one.
#[allow(clippy::too_many_arguments)]
pub fn solve_coordinate<B, T, R1, R2>(
    j: usize,
    batches: &mut B,
    tests: &mut T,
    params: &SolveParameters,
    options: &SolveOptions,
    sampler: &mut KernelSampler,
    kernel_rng: &mut R1,
    test_rng: &mut R2,
) -> Result<CoordinateReport>
where
    B: BatchSource,
    T: TestSource,
    R1: Rng + ?Sized,
    R2: Rng + ?Sized,
{
    let mut report = CoordinateReport::default();
    let mut tests = Audited {
        inner: tests,
        xi_prime: params.xi_prime,
        violations: 0,
    };
    for _ in 0..params.l {
        report.shots += 1;
        let Some(candidate) = shoot(j, batches, options.kernel, sampler, kernel_rng, &mut report)? else {
            report.null_count += 1;
            continue;
        };
        if options.dedup && report.rejected.contains(&candidate.value()) {
            continue;
        }
        report.candidates_tried += 1;
        let verdict = m_trial_test(candidate, params.m, params.xi_prime, j, &mut tests, test_rng)?;
        report.test_pairs_used += verdict.trials_used;
        report.test_bound_violations = tests.violations;
        if verdict.accepted {
            report.accepted = Some(candidate.value());
            return Ok(report);
        }
        report.rejected.push(candidate.value());
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeClass {
    /// Case (i): the returned secret is correct.
    Success,
    /// Case (ii): some coordinate produced no accepted candidate.
    Failure,
    /// Case (iii): a wrong secret was accepted.
    WrongAccept,
}

impl std::fmt::Display for OutcomeClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OutcomeClass::Success => "success",
            OutcomeClass::Failure => "failure",
            OutcomeClass::WrongAccept => "wrong_accept",
        })
    }
}

impl std::str::FromStr for OutcomeClass {
    type Err = LweError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "success" => Ok(OutcomeClass::Success),
            "failure" => Ok(OutcomeClass::Failure),
            "wrong_accept" => Ok(OutcomeClass::WrongAccept),
            other => Err(LweError::Parse(format!("unknown outcome `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub class: OutcomeClass,
    pub returned_s: Option<FieldVector>,
    pub per_coordinate: Vec<CoordinateReport>,
}

impl SolveOutcome {
    /// Sorts a solver result into case (i), (ii) or (iii) using the ground truth.
    pub fn classify(returned_s: Option<FieldVector>, per_coordinate: Vec<CoordinateReport>, truth: &FieldVector) -> Self {
        let class = match &returned_s {
            None => OutcomeClass::Failure,
            Some(s) if s == truth => OutcomeClass::Success,
            Some(_) => OutcomeClass::WrongAccept,
        };
        Self {
            class,
            returned_s,
            per_coordinate,
        }
    }

    pub fn quantum_samples(&self) -> usize {
        self.per_coordinate.iter().map(|c| c.shots).sum()
    }

    pub fn test_samples(&self) -> usize {
        self.per_coordinate.iter().map(|c| c.test_pairs_used).sum()
    }

    pub fn null_count(&self) -> usize {
        self.per_coordinate.iter().map(|c| c.null_count).sum()
    }

    pub fn candidates_tried(&self) -> usize {
        self.per_coordinate.iter().map(|c| c.candidates_tried).sum()
    }

    /// Coordinates at which the true value was tested and rejected. Must be
    /// zero whenever the true errors respect the assumed bound.
    pub fn true_rejections(&self, truth: &FieldVector) -> usize {
        self.per_coordinate
            .iter()
            .zip(truth.values())
            .map(|(c, s)| c.rejected.iter().filter(|&&r| r == *s).count())
            .sum()
    }
}

fn run_coordinates<B, T>(
    instance: &LweInstance,
    batches: &mut B,
    tests: &mut T,
    params: &SolveParameters,
    options: &SolveOptions,
    master_seed: u64,
    trial: u64,
) -> Result<(Option<FieldVector>, Vec<CoordinateReport>)>
where
    B: BatchSource,
    T: TestSource,
{
    let q = instance.q();
    let mut sampler = KernelSampler::new(q);
    let mut reports = Vec::with_capacity(instance.n());
    let mut recovered = Vec::with_capacity(instance.n());
    let mut failed = false;
    for j in 0..instance.n() {
        let mut kernel_rng = seed::coordinate_rng(master_seed, trial, j);
        let mut test_rng = seed::test_pair_rng(master_seed, trial, j);
        let report = solve_coordinate(
            j,
            batches,
            tests,
            params,
            options,
            &mut sampler,
            &mut kernel_rng,
            &mut test_rng,
        )?;
        match report.accepted {
            Some(v) => recovered.push(v),
            None => failed = true,
        }
        reports.push(report);
        if failed {
            break;
        }
    }
    let returned = (!failed).then(|| FieldVector::new(recovered, q)).transpose()?;
    Ok((returned, reports))
}

/// Solves `instance` coordinate by coordinate and classifies the result
/// against its secret. RNG streams are derived from `(master_seed, trial, j)`.
pub fn solve(
    instance: &LweInstance,
    params: &SolveParameters,
    options: &SolveOptions,
    master_seed: u64,
    trial: u64,
) -> Result<SolveOutcome> {
    let (returned, reports) = match options.mode {
        ReductionMode::Controlled => {
            let mut batches = ControlledSource::new(instance, options.inputs, params.xi_prime)?;
            let mut tests = batches.clone();
            run_coordinates(instance, &mut batches, &mut tests, params, options, master_seed, trial)?
        }
        ReductionMode::Elimination => {
            let mut batches = EliminationSource::new(instance, options.inputs, params.xi_prime);
            let mut tests = EliminationSource::new(instance, options.inputs, params.xi_prime);
            run_coordinates(instance, &mut batches, &mut tests, params, options, master_seed, trial)?
        }
    };
    Ok(SolveOutcome::classify(returned, reports, instance.secret()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::ErrorDistribution;
    use crate::reduce::ReducedPair;
    use crate::seed::derive_rng;

    #[test]
    fn c_examples() {
        assert!((c_constant(0.125) - 1.0 / 16.0).abs() < 1e-15);
        assert_eq!(c_constant(0.0), 0.0);
    }

    #[test]
    fn budget_example() {
        // (8 / (1/16)) ln(4 / 0.2) = 128 ln 20 = 383.45...
        let p = choose_parameters(4, 401, 8, 1.0, 0.2, 0.125).unwrap();
        assert_eq!(p.xi_prime, 8);
        assert_eq!(p.l, 384);
        let per = 17.0f64 / 401.0;
        assert!(p.l as f64 * per.powi(p.m as i32) <= 0.05);
        assert!(p.l as f64 * per.powi(p.m as i32 - 1) > 0.05);
    }

    #[test]
    fn criterion_parameters() {
        // 32 ln 40 = 118.04
        let p = choose_parameters(8, 401, 2, 1.0, 0.2, 0.125).unwrap();
        assert_eq!(p.l, 119);
        assert_eq!(p.m, 2);
    }

    #[test]
    fn budget_is_at_least_one() {
        let p = choose_parameters(1, 401, 0, 1.0, 0.99, 0.125).unwrap();
        assert_eq!(p.l, 1);
        assert!(p.m >= 1);
    }

    #[test]
    fn infeasible_budget_reported() {
        assert!(matches!(
            choose_parameters(8, 101, 4, 1.0, 0.2, 0.125),
            Err(LweError::InfeasibleParameters(_))
        ));
        assert!(matches!(
            choose_parameters(8, 101, 60, 1.0, 0.2, 0.125),
            Err(LweError::InfeasibleParameters(_))
        ));
        assert!(choose_parameters(8, 101, 1, 1.0, 0.2, 0.25).is_err());
        assert!(choose_parameters(8, 101, 1, 1.0, 0.0, 0.1).is_err());
    }

    fn noiseless(n: usize, q: u64, seed: u64) -> LweInstance {
        LweInstance::generate(n, q, ErrorDistribution::uniform(0), &mut derive_rng(seed, 0, 0)).unwrap()
    }

    #[test]
    fn noiseless_solve_succeeds() {
        for (n, q) in [(3usize, 7u64), (5, 31), (8, 101)] {
            let inst = noiseless(n, q, 1);
            let params = choose_parameters(n, q, 0, 1.0, 1e-4, 0.125).unwrap();
            for trial in 0..20 {
                let out = solve(&inst, &params, &SolveOptions::default(), 5, trial).unwrap();
                assert_eq!(out.class, OutcomeClass::Success);
                assert_eq!(out.returned_s.as_ref(), Some(inst.secret()));
                assert!(out.per_coordinate.iter().all(|c| c.rejected.is_empty()));
                assert!(out.quantum_samples() <= n * params.l);
            }
        }
    }

    #[test]
    fn dense_and_sampled_paths_agree_on_noiseless() {
        let inst = noiseless(2, 7, 2);
        let params = choose_parameters(2, 7, 0, 1.0, 1e-4, 0.125).unwrap();
        let dense = SolveOptions {
            kernel: KernelPath::Dense,
            ..SolveOptions::default()
        };
        let out = solve(&inst, &params, &dense, 9, 0).unwrap();
        assert_eq!(out.class, OutcomeClass::Success);
    }

    struct Unreachable;
    impl BatchSource for Unreachable {
        fn next_batch<R: Rng + ?Sized>(&mut self, _j: usize, _rng: &mut R) -> Result<crate::reduce::ReducedBatch> {
            unreachable!("L = 0 must not draw")
        }
    }
    impl TestSource for Unreachable {
        fn next_test_pair<R: Rng + ?Sized>(&mut self, _j: usize, _rng: &mut R) -> Result<ReducedPair> {
            unreachable!()
        }
    }

    #[test]
    fn empty_budget_is_null() {
        let params = SolveParameters {
            gamma: 0.125,
            l: 0,
            m: 1,
            xi_prime: 1,
            c: c_constant(0.125),
        };
        let mut rng = derive_rng(1, 1, 1);
        let mut rng2 = derive_rng(1, 1, 2);
        let report = solve_coordinate(
            0,
            &mut Unreachable,
            &mut Unreachable,
            &params,
            &SolveOptions::default(),
            &mut KernelSampler::new(7),
            &mut rng,
            &mut rng2,
        )
        .unwrap();
        assert_eq!(report.accepted, None);
        assert_eq!(report.shots, 0);
    }

    #[test]
    fn noisy_controlled_solve_is_sound() {
        let inst = LweInstance::generate(4, 101, ErrorDistribution::uniform(1), &mut derive_rng(3, 0, 0)).unwrap();
        let params = choose_parameters(4, 101, 1, 2.0, 0.2, 0.125).unwrap();
        let mut success = 0;
        for trial in 0..40 {
            let out = solve(&inst, &params, &SolveOptions::default(), 77, trial).unwrap();
            assert_eq!(out.true_rejections(inst.secret()), 0);
            assert!(out.quantum_samples() <= 4 * params.l);
            if out.class == OutcomeClass::Success {
                success += 1;
            }
        }
        assert!(success >= 30, "success {success}/40");
    }

    #[test]
    fn same_seed_same_outcome() {
        let inst = LweInstance::generate(3, 101, ErrorDistribution::uniform(2), &mut derive_rng(4, 0, 0)).unwrap();
        let params = choose_parameters(3, 101, 2, 1.0, 0.2, 0.125).unwrap();
        let a = solve(&inst, &params, &SolveOptions::default(), 11, 3).unwrap();
        let b = solve(&inst, &params, &SolveOptions::default(), 11, 3).unwrap();
        assert_eq!(a, b);
    }
}
