//! Divide-and-conquer preprocessing: turn `n`-dimensional samples into
//! single-coordinate pairs `(a', a' s_j + eta')`.
//!
//! Two ways to get a batch:
//!
//! * elimination mode combines `n` fresh samples through row `j` of the
//!   inverted sample matrix, so `eta'` and the amplification factor are
//!   whatever the integer combination produces;
//! * controlled mode synthesizes pairs whose `eta'` is drawn directly from a
//!   law bounded by `xi'`, which is the premise the probability bounds assume.

use std::collections::HashSet;
use std::io::Write;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LweError, Result};
use crate::fq::{self, centered_raw, CenteredInt, FieldElement, FieldMatrix};
use crate::instance::{sample_error, ErrorDistribution, LweInstance, Sample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReductionMode {
    Elimination,
    Controlled,
}

impl std::fmt::Display for ReductionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ReductionMode::Elimination => "elimination",
            ReductionMode::Controlled => "controlled",
        })
    }
}

impl std::str::FromStr for ReductionMode {
    type Err = LweError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "elimination" => Ok(ReductionMode::Elimination),
            "controlled" => Ok(ReductionMode::Controlled),
            other => Err(LweError::Parse(format!("unknown mode `{other}`"))),
        }
    }
}

/// A single-coordinate pair. `eta_prime` is ground truth for the harness;
/// the solver only reads `a_prime` and `b_prime`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReducedPair {
    pub a_prime: FieldElement,
    pub b_prime: FieldElement,
    pub eta_prime: CenteredInt,
    /// L1 norm of the centered integer combination that produced the pair.
    pub coeff_l1: u64,
}

impl ReducedPair {
    /// `(a', a' s + eta')` built directly.
    pub fn synthesize(a_prime: FieldElement, s_j: FieldElement, eta_prime: CenteredInt, coeff_l1: u64) -> Self {
        let q = a_prime.modulus();
        let b = fq::add_mod(
            fq::mul_mod(a_prime.value(), s_j.value(), q),
            eta_prime.to_residue(q),
            q,
        );
        ReducedPair {
            a_prime,
            b_prime: FieldElement::new_unchecked(b, q),
            eta_prime,
            coeff_l1,
        }
    }

    /// Checks `b' = a' s_j + eta' (mod q)` against a known secret coordinate.
    pub fn is_consistent_with(&self, s_j: FieldElement) -> bool {
        self.b_prime == self.a_prime * s_j + FieldElement::new_unchecked(self.eta_prime.to_residue(s_j.modulus()), s_j.modulus())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedBatch {
    pub j: usize,
    pub q: u64,
    pub mode: ReductionMode,
    pub pairs: Vec<ReducedPair>,
    /// Bound the solver assumes for `|eta'|`.
    pub xi_prime: u64,
    /// Amplification factor: `xi' / xi` in controlled mode, the largest
    /// combination norm in elimination mode.
    pub kappa: f64,
}

impl ReducedBatch {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Public `(a', b')` view.
    pub fn public_pairs(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.pairs.iter().map(|p| (p.a_prime.value(), p.b_prime.value()))
    }

    /// Fails with `DuplicateInput` if two pairs share `a'`.
    pub fn check_distinct(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.pairs.len());
        for p in &self.pairs {
            if !seen.insert(p.a_prime.value()) {
                return Err(LweError::DuplicateInput(p.a_prime.value()));
            }
        }
        Ok(())
    }

    /// Number of pairs whose true error exceeds the assumed bound.
    pub fn bound_violations(&self) -> usize {
        self.pairs
            .iter()
            .filter(|p| p.eta_prime.abs() > self.xi_prime)
            .count()
    }

    /// Debug dump: one `a_prime b_prime eta_prime coeff_l1` line per pair.
    pub fn dump<W: Write>(&self, out: &mut W) -> Result<()> {
        for p in &self.pairs {
            writeln!(out, "{} {} {} {}", p.a_prime, p.b_prime, p.eta_prime, p.coeff_l1)?;
        }
        Ok(())
    }
}

/// Row `j` of `A^{-1}` where the rows of `A` are the sample vectors.
pub fn elimination_row(samples: &[Sample], j: usize) -> Result<Vec<u64>> {
    let n = samples.len();
    if n == 0 {
        return Err(LweError::InvalidLength("no samples".into()));
    }
    if j >= n {
        return Err(LweError::param("j", format!("coordinate {j} out of range for n = {n}")));
    }
    let q = samples[0].a().modulus();
    let mut entries = Vec::with_capacity(n * n);
    for s in samples {
        if s.a().len() != n {
            return Err(LweError::DimensionMismatch {
                expected: n,
                got: s.a().len(),
            });
        }
        entries.extend_from_slice(s.a().values());
    }
    let inv = FieldMatrix::new(n, n, entries, q)?.inverse()?;
    Ok(inv.row(j).to_vec())
}

fn combine(samples: &[Sample], row: &[u64], target: FieldElement) -> ReducedPair {
    let q = target.modulus();
    let coeffs: Vec<u64> = row.iter().map(|&r| fq::mul_mod(target.value(), r, q)).collect();
    let mut b = 0u64;
    let mut eta = 0u64;
    for (c, s) in coeffs.iter().zip(samples) {
        b = fq::add_mod(b, fq::mul_mod(*c, s.b().value(), q), q);
        eta = fq::add_mod(eta, fq::mul_mod(*c, s.ground_truth_error().to_residue(q), q), q);
    }
    let coeff_l1 = coeffs.iter().map(|&c| centered_raw(c, q).abs()).sum();
    ReducedPair {
        a_prime: target,
        b_prime: FieldElement::new_unchecked(b, q),
        eta_prime: centered_raw(eta, q),
        coeff_l1,
    }
}

/// Combines `n` samples with `c = a_target * row_j(A^{-1})`, giving
/// `b' = c . b = a_target s_j + a_target (A^{-1} eta)_j`.
pub fn reduce_to_coordinate(samples: &[Sample], j: usize, a_target: FieldElement) -> Result<ReducedPair> {
    let row = elimination_row(samples, j)?;
    Ok(combine(samples, &row, a_target))
}

/// Deterministic test pair `(t, t s_j + eta')` from fresh samples. `t = 0`
/// is rejected since the resulting test cannot distinguish candidates.
pub fn make_test_sample(samples: &[Sample], j: usize, t_target: FieldElement) -> Result<ReducedPair> {
    if t_target.is_zero() {
        return Err(LweError::DegenerateTest);
    }
    reduce_to_coordinate(samples, j, t_target)
}

/// Largest combination norm in the batch; the empirical `kappa`.
pub fn kappa_observed(batch: &ReducedBatch) -> u64 {
    match batch.mode {
        ReductionMode::Elimination => batch.pairs.iter().map(|p| p.coeff_l1).max().unwrap_or(0),
        ReductionMode::Controlled => batch.kappa.ceil() as u64,
    }
}

/// Controlled mode: one pair per `a'` in `v_j` with an independent error
/// drawn from `chi_prime`, whose bound must equal `xi_prime`.
pub fn synth_reduced_batch<R: Rng + ?Sized>(
    j: usize,
    s_j: FieldElement,
    v_j: &[u64],
    xi: u64,
    chi_prime: &ErrorDistribution,
    rng: &mut R,
) -> Result<ReducedBatch> {
    let q = s_j.modulus();
    let xi_prime = chi_prime.bound();
    if 2 * xi_prime >= q {
        return Err(LweError::BoundTooLarge {
            bound: xi_prime,
            modulus: q,
        });
    }
    if v_j.is_empty() {
        return Err(LweError::InvalidLength("v_j must be nonempty".into()));
    }
    let kappa = if xi == 0 { 1.0 } else { xi_prime as f64 / xi as f64 };
    let coeff = kappa.ceil() as u64;
    let pairs = v_j
        .iter()
        .map(|&a| {
            let eta = sample_error(chi_prime, rng);
            ReducedPair::synthesize(FieldElement::new_unchecked(a % q, q), s_j, eta, coeff)
        })
        .collect();
    let batch = ReducedBatch {
        j,
        q,
        mode: ReductionMode::Controlled,
        pairs,
        xi_prime,
        kappa,
    };
    batch.check_distinct()?;
    Ok(batch)
}

/// Which `a'` values go into each batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputSet {
    /// All of F_q.
    Full,
    /// A fresh uniformly random subset of this size per batch.
    Random(usize),
}

impl InputSet {
    pub fn of_size(size: usize, q: u64) -> Self {
        if size as u64 >= q {
            InputSet::Full
        } else {
            InputSet::Random(size)
        }
    }

    pub fn size(&self, q: u64) -> usize {
        match *self {
            InputSet::Full => q as usize,
            InputSet::Random(k) => k.min(q as usize),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, q: u64, rng: &mut R) -> Vec<u64> {
        match *self {
            InputSet::Full => (0..q).collect(),
            InputSet::Random(k) => {
                let mut v: Vec<u64> = index::sample(rng, q as usize, k.min(q as usize))
                    .into_iter()
                    .map(|i| i as u64)
                    .collect();
                v.sort_unstable();
                v
            }
        }
    }
}

/// Supplies one fresh batch per kernel shot.
pub trait BatchSource {
    fn next_batch<R: Rng + ?Sized>(&mut self, j: usize, rng: &mut R) -> Result<ReducedBatch>;
}

/// Supplies fresh deterministic test pairs with nonzero `t`.
pub trait TestSource {
    fn next_test_pair<R: Rng + ?Sized>(&mut self, j: usize, rng: &mut R) -> Result<ReducedPair>;
}

/// Controlled-mode source for both batches and test pairs.
#[derive(Debug, Clone)]
pub struct ControlledSource<'a> {
    pub instance: &'a LweInstance,
    pub inputs: InputSet,
    pub chi_prime: ErrorDistribution,
}

impl<'a> ControlledSource<'a> {
    /// Errors follow the instance's law, rescaled to bound `xi_prime`.
    pub fn new(instance: &'a LweInstance, inputs: InputSet, xi_prime: u64) -> Result<Self> {
        let chi_prime = instance.chi().with_bound(xi_prime);
        chi_prime.validate(instance.q())?;
        Ok(Self {
            instance,
            inputs,
            chi_prime,
        })
    }
}

impl BatchSource for ControlledSource<'_> {
    fn next_batch<R: Rng + ?Sized>(&mut self, j: usize, rng: &mut R) -> Result<ReducedBatch> {
        let q = self.instance.q();
        let v_j = self.inputs.draw(q, rng);
        synth_reduced_batch(
            j,
            self.instance.secret().get(j),
            &v_j,
            self.instance.xi(),
            &self.chi_prime,
            rng,
        )
    }
}

impl TestSource for ControlledSource<'_> {
    fn next_test_pair<R: Rng + ?Sized>(&mut self, j: usize, rng: &mut R) -> Result<ReducedPair> {
        let q = self.instance.q();
        let t = FieldElement::new_unchecked(rng.gen_range(1..q), q);
        let eta = sample_error(&self.chi_prime, rng);
        let kappa = if self.instance.xi() == 0 {
            1
        } else {
            self.chi_prime.bound().div_ceil(self.instance.xi())
        };
        Ok(ReducedPair::synthesize(t, self.instance.secret().get(j), eta, kappa))
    }
}

/// Elimination-mode source: every pair uses its own `n` fresh samples, so
/// the errors of different `a'` are independent.
#[derive(Debug, Clone)]
pub struct EliminationSource<'a> {
    pub instance: &'a LweInstance,
    pub inputs: InputSet,
    /// Bound the solver is told to assume.
    pub xi_prime: u64,
    /// Singular draws skipped so far.
    pub singular_redraws: usize,
}

impl<'a> EliminationSource<'a> {
    pub fn new(instance: &'a LweInstance, inputs: InputSet, xi_prime: u64) -> Self {
        Self {
            instance,
            inputs,
            xi_prime,
            singular_redraws: 0,
        }
    }

    fn fresh_row<R: Rng + ?Sized>(&mut self, j: usize, rng: &mut R) -> Result<(Vec<Sample>, Vec<u64>)> {
        loop {
            let samples = self.instance.gen_samples(self.instance.n(), rng);
            match elimination_row(&samples, j) {
                Ok(row) => return Ok((samples, row)),
                Err(LweError::SingularMatrix { .. }) => self.singular_redraws += 1,
                Err(e) => return Err(e),
            }
        }
    }

    pub fn reduce_one<R: Rng + ?Sized>(&mut self, j: usize, target: FieldElement, rng: &mut R) -> Result<ReducedPair> {
        let (samples, row) = self.fresh_row(j, rng)?;
        Ok(combine(&samples, &row, target))
    }
}

impl BatchSource for EliminationSource<'_> {
    fn next_batch<R: Rng + ?Sized>(&mut self, j: usize, rng: &mut R) -> Result<ReducedBatch> {
        let q = self.instance.q();
        let v_j = self.inputs.draw(q, rng);
        let mut pairs = Vec::with_capacity(v_j.len());
        for a in v_j {
            pairs.push(self.reduce_one(j, FieldElement::new_unchecked(a, q), rng)?);
        }
        let kappa = pairs.iter().map(|p| p.coeff_l1).max().unwrap_or(0) as f64;
        Ok(ReducedBatch {
            j,
            q,
            mode: ReductionMode::Elimination,
            pairs,
            xi_prime: self.xi_prime,
            kappa,
        })
    }
}

impl TestSource for EliminationSource<'_> {
    fn next_test_pair<R: Rng + ?Sized>(&mut self, j: usize, rng: &mut R) -> Result<ReducedPair> {
        let q = self.instance.q();
        let t = FieldElement::new_unchecked(rng.gen_range(1..q), q);
        self.reduce_one(j, t, rng)
    }
}
