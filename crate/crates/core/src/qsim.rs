//! Exact statevector simulation of the two-register sample state, the
//! `QFT_q (x) QFT_q` kernel, measurement and candidate extraction.
//!
//! Register `D` holds `a'`, register `A` holds `b'`. Amplitudes are stored
//! row-major as `amps[d * q + a]`.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LweError, Result};
use crate::experiment::fmt12;
use crate::fq::{self, FieldElement};
use crate::reduce::ReducedBatch;

/// Normalization drift beyond this is treated as a simulator bug.
pub const NORM_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Register {
    D,
    A,
}

/// `omega^m` for `m in [0, q)`, with `omega = exp(2 pi i / q)`.
#[derive(Debug, Clone)]
pub struct PhaseTable {
    q: u64,
    table: Vec<Complex64>,
}

impl PhaseTable {
    pub fn new(q: u64) -> Self {
        let table = (0..q)
            .map(|m| Complex64::from_polar(1.0, 2.0 * PI * m as f64 / q as f64))
            .collect();
        Self { q, table }
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    #[inline]
    pub fn omega(&self, exponent: u64) -> Complex64 {
        self.table[(exponent % self.q) as usize]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoQuditState {
    q: u64,
    amps: Vec<Complex64>,
}

impl TwoQuditState {
    /// `|d>|a>`.
    pub fn basis(q: u64, d: u64, a: u64) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); (q * q) as usize];
        amps[((d % q) * q + a % q) as usize] = Complex64::new(1.0, 0.0);
        Self { q, amps }
    }

    /// Takes a raw amplitude grid; fails if it is not normalized.
    pub fn from_amplitudes(q: u64, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() as u64 != q * q {
            return Err(LweError::DimensionMismatch {
                expected: (q * q) as usize,
                got: amps.len(),
            });
        }
        let state = Self { q, amps };
        state.check_norm()?;
        Ok(state)
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    pub fn amplitude(&self, d: u64, a: u64) -> Complex64 {
        self.amps[(d * self.q + a) as usize]
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn probability(&self, d: u64, a: u64) -> f64 {
        self.amplitude(d, a).norm_sqr()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|c| c.norm_sqr()).collect()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn check_norm(&self) -> Result<()> {
        let drift = (self.norm_sqr() - 1.0).abs();
        if drift > NORM_TOLERANCE {
            return Err(LweError::InvariantViolation(format!(
                "state norm drifted by {drift:e}"
            )));
        }
        Ok(())
    }

    /// Debug dump: `k_d k_star re im prob` for every nonzero amplitude.
    pub fn dump<W: Write>(&self, out: &mut W) -> Result<()> {
        for d in 0..self.q {
            for a in 0..self.q {
                let c = self.amplitude(d, a);
                let p = c.norm_sqr();
                if p > 1e-24 {
                    writeln!(out, "{d} {a} {} {} {}", fmt12(c.re), fmt12(c.im), fmt12(p))?;
                }
            }
        }
        Ok(())
    }
}

/// `(1/sqrt|v_j|) sum_{a'} |a'>_D |b'(a')>_A`.
pub fn prepare_sample_state(batch: &ReducedBatch) -> Result<TwoQuditState> {
    if batch.is_empty() {
        return Err(LweError::InvalidLength("batch must contain at least one pair".into()));
    }
    batch.check_distinct()?;
    let q = batch.q;
    let amp = Complex64::new(1.0 / (batch.len() as f64).sqrt(), 0.0);
    let mut amps = vec![Complex64::new(0.0, 0.0); (q * q) as usize];
    for (a, b) in batch.public_pairs() {
        amps[(a * q + b) as usize] = amp;
    }
    TwoQuditState::from_amplitudes(q, amps)
}

fn dft_in_place(table: &PhaseTable, data: &mut [Complex64], scratch: &mut [Complex64], inverse: bool) {
    let q = table.q();
    let scale = 1.0 / (q as f64).sqrt();
    for (k, out) in scratch.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        let mut exponent = 0u64;
        let step = (if inverse { q - k as u64 } else { k as u64 }) % q;
        for x in data.iter() {
            if x.re != 0.0 || x.im != 0.0 {
                acc += x * table.table[exponent as usize];
            }
            exponent = fq::add_mod(exponent, step, q);
        }
        *out = acc * scale;
    }
    data.copy_from_slice(scratch);
}

fn transform_register(state: &TwoQuditState, register: Register, inverse: bool) -> TwoQuditState {
    let q = state.q as usize;
    let table = PhaseTable::new(state.q);
    let mut amps = state.amps.clone();
    let mut line = vec![Complex64::new(0.0, 0.0); q];
    let mut scratch = line.clone();
    match register {
        Register::A => {
            for row in amps.chunks_mut(q) {
                dft_in_place(&table, row, &mut scratch, inverse);
            }
        }
        Register::D => {
            for a in 0..q {
                for d in 0..q {
                    line[d] = amps[d * q + a];
                }
                dft_in_place(&table, &mut line, &mut scratch, inverse);
                for d in 0..q {
                    amps[d * q + a] = line[d];
                }
            }
        }
    }
    TwoQuditState { q: state.q, amps }
}

/// Unitary `q`-point DFT, `|j> -> (1/sqrt q) sum_k omega^{jk} |k>`, on one register.
pub fn qft_register(state: &TwoQuditState, register: Register) -> TwoQuditState {
    transform_register(state, register, false)
}

pub fn inverse_qft_register(state: &TwoQuditState, register: Register) -> TwoQuditState {
    transform_register(state, register, true)
}

/// Dense matrix of `QFT_q`, row `k`, column `j`.
pub fn qft_matrix(q: u64) -> Vec<Vec<Complex64>> {
    let table = PhaseTable::new(q);
    let scale = 1.0 / (q as f64).sqrt();
    (0..q)
        .map(|k| (0..q).map(|j| table.omega(j * k) * scale).collect())
        .collect()
}

/// The BV kernel `QFT_q (x) QFT_q`.
///
/// Panics if the result drifts from unit norm by more than [`NORM_TOLERANCE`].
pub fn bv_kernel(state: &TwoQuditState) -> TwoQuditState {
    let out = qft_register(&qft_register(state, Register::D), Register::A);
    if let Err(e) = out.check_norm() {
        panic!("bv_kernel: {e}");
    }
    out
}

/// Kernel output amplitude at `(k_d, k_star)` by direct summation over the
/// batch: `(1/(q sqrt|v|)) sum_{a'} omega^{a' k_d + b' k_star}`.
pub fn kernel_amplitude(batch: &ReducedBatch, table: &PhaseTable, k_d: u64, k_star: u64) -> Complex64 {
    let q = batch.q;
    let sum: Complex64 = batch
        .public_pairs()
        .map(|(a, b)| table.omega(fq::add_mod(fq::mul_mod(a, k_d, q), fq::mul_mod(b, k_star, q), q)))
        .sum();
    sum / (q as f64 * (batch.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MeasurementOutcome {
    pub k_d: FieldElement,
    pub k_star: FieldElement,
}

fn sample_index<R: Rng + ?Sized>(weights: impl Iterator<Item = f64>, total: f64, rng: &mut R) -> usize {
    let target = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last_nonzero = 0;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            last_nonzero = i;
        }
        acc += w;
        if target < acc {
            return i;
        }
    }
    // rounding left target just above the accumulated total
    last_nonzero
}

/// Measures both registers in the computational basis.
pub fn measure<R: Rng + ?Sized>(state: &TwoQuditState, rng: &mut R) -> Result<MeasurementOutcome> {
    state.check_norm()?;
    let q = state.q;
    let idx = sample_index(state.amps.iter().map(|c| c.norm_sqr()), state.norm_sqr(), rng) as u64;
    Ok(MeasurementOutcome {
        k_d: FieldElement::new_unchecked(idx / q, q),
        k_star: FieldElement::new_unchecked(idx % q, q),
    })
}

/// Candidate `-k_d / k_star`; `None` for the null outcome `k_star = 0`.
pub fn extract_candidate(outcome: &MeasurementOutcome) -> Option<FieldElement> {
    let inv = outcome.k_star.inv().ok()?;
    Some(-outcome.k_d * inv)
}

/// Samples one kernel outcome for `batch` without materializing the
/// `q x q` state.
///
/// For distinct `a'`, Parseval over `k_d` makes the `k_star` marginal exactly
/// uniform; given `k_star`, `P(k_d | k_star) = |sum_{a'} omega^{a' k_d + b' k_star}|^2 / (q |v_j|)`.
/// Cost is `O(q |v_j|)` per shot against `O(q^3)` for the dense path.
#[derive(Debug, Clone)]
pub struct KernelSampler {
    table: PhaseTable,
    row: Vec<f64>,
}

impl KernelSampler {
    pub fn new(q: u64) -> Self {
        Self {
            table: PhaseTable::new(q),
            row: vec![0.0; q as usize],
        }
    }

    pub fn q(&self) -> u64 {
        self.table.q()
    }

    /// `P(k_d | k_star)` for every `k_d`.
    pub fn conditional_row(&mut self, batch: &ReducedBatch, k_star: u64) -> &[f64] {
        let q = self.table.q();
        assert_eq!(batch.q, q, "sampler built for a different modulus");
        let q_us = q as usize;
        let mut acc = vec![Complex64::new(0.0, 0.0); q_us];
        for (a, b) in batch.public_pairs() {
            let mut exponent = fq::mul_mod(b, k_star, q);
            for slot in acc.iter_mut() {
                *slot += self.table.table[exponent as usize];
                exponent = fq::add_mod(exponent, a, q);
            }
        }
        let norm = q as f64 * batch.len() as f64;
        for (p, s) in self.row.iter_mut().zip(&acc) {
            *p = s.norm_sqr() / norm;
        }
        &self.row
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, batch: &ReducedBatch, rng: &mut R) -> Result<MeasurementOutcome> {
        if batch.is_empty() {
            return Err(LweError::InvalidLength("batch must contain at least one pair".into()));
        }
        batch.check_distinct()?;
        let q = self.table.q();
        let k_star = rng.gen_range(0..q);
        let row = self.conditional_row(batch, k_star);
        let total: f64 = row.iter().sum();
        if (total - 1.0).abs() > NORM_TOLERANCE {
            return Err(LweError::InvariantViolation(format!(
                "conditional row mass {total} for k_star = {k_star}"
            )));
        }
        let k_d = sample_index(row.iter().copied(), total, rng) as u64;
        Ok(MeasurementOutcome {
            k_d: FieldElement::new_unchecked(k_d, q),
            k_star: FieldElement::new_unchecked(k_star, q),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fq::CenteredInt;
    use crate::reduce::{ReducedPair, ReductionMode};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fe(v: u64, q: u64) -> FieldElement {
        FieldElement::new(v, q).unwrap()
    }

    fn batch_from(q: u64, s: u64, etas: &[(u64, i64)]) -> ReducedBatch {
        ReducedBatch {
            j: 0,
            q,
            mode: ReductionMode::Controlled,
            pairs: etas
                .iter()
                .map(|&(a, e)| ReducedPair::synthesize(fe(a, q), fe(s, q), CenteredInt(e), 1))
                .collect(),
            xi_prime: etas.iter().map(|e| e.1.unsigned_abs()).max().unwrap_or(0),
            kappa: 1.0,
        }
    }

    #[test]
    fn single_pair_prepares_basis_state() {
        let batch = batch_from(3, 0, &[(2, 0)]);
        let state = prepare_sample_state(&batch).unwrap();
        assert_eq!(state, TwoQuditState::basis(3, 2, 0));
    }

    #[test]
    fn zero_secret_state() {
        let q = 5;
        let batch = batch_from(q, 0, &(0..q).map(|a| (a, 0)).collect::<Vec<_>>());
        let state = prepare_sample_state(&batch).unwrap();
        for d in 0..q {
            for a in 0..q {
                let expected = if a == 0 { 0.2 } else { 0.0 };
                assert!((state.probability(d, a) - expected).abs() < 1e-12);
            }
        }
        assert!((state.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duplicate_inputs_rejected() {
        let q = 7;
        let mut batch = batch_from(q, 1, &[(1, 0), (2, 0)]);
        batch.pairs[1].a_prime = fe(1, q);
        assert!(matches!(prepare_sample_state(&batch), Err(LweError::DuplicateInput(1))));
    }

    #[test]
    fn qft_of_zero_is_flat() {
        let q = 7;
        let state = qft_register(&TwoQuditState::basis(q, 0, 0), Register::A);
        for a in 0..q {
            let c = state.amplitude(0, a);
            assert!((c.re - 1.0 / (q as f64).sqrt()).abs() < 1e-12);
            assert!(c.im.abs() < 1e-12);
        }
    }

    #[test]
    fn two_point_qft_is_hadamard() {
        let m = qft_matrix(2);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let expected = [[h, h], [h, -h]];
        for k in 0..2 {
            for j in 0..2 {
                assert!((m[k][j] - Complex64::new(expected[k][j], 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn qft_then_inverse_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let q = 11;
        let raw: Vec<Complex64> = (0..q * q)
            .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect();
        let norm: f64 = raw.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let state = TwoQuditState::from_amplitudes(q, raw.iter().map(|c| c / norm).collect()).unwrap();
        for reg in [Register::A, Register::D] {
            let back = inverse_qft_register(&qft_register(&state, reg), reg);
            for (x, y) in back.amplitudes().iter().zip(state.amplitudes()) {
                assert!((x - y).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn noiseless_full_batch_gives_perfect_correlation() {
        for (q, s) in [(5u64, 3u64), (7, 2), (13, 0), (31, 17)] {
            let batch = batch_from(q, s, &(0..q).map(|a| (a, 0)).collect::<Vec<_>>());
            let out = bv_kernel(&prepare_sample_state(&batch).unwrap());
            for k_d in 0..q {
                for k_star in 0..q {
                    let on_support = k_d == (q - s * k_star % q) % q;
                    let expected = if on_support { 1.0 / q as f64 } else { 0.0 };
                    assert!(
                        (out.probability(k_d, k_star) - expected).abs() < 1e-12,
                        "q={q} s={s} ({k_d},{k_star})"
                    );
                }
            }
        }
    }

    #[test]
    fn single_pair_kernel_is_flat() {
        let q = 7;
        let batch = batch_from(q, 4, &[(3, 1)]);
        let out = bv_kernel(&prepare_sample_state(&batch).unwrap());
        for p in out.probabilities() {
            assert!((p - 1.0 / 49.0).abs() < 1e-12);
        }
    }

    /// Direct summation of `omega^{a'(k_d + s k_star) + eta' k_star}` using the
    /// ground-truth secret and errors.
    fn error_form_amplitude(q: u64, s: u64, etas: &[(u64, i64)], k_d: u64, k_star: u64) -> Complex64 {
        let mut sum = Complex64::new(0.0, 0.0);
        for &(a, e) in etas {
            let phase = (a as f64) * ((k_d + s * k_star) as f64) + (e as f64) * (k_star as f64);
            sum += Complex64::from_polar(1.0, 2.0 * PI * phase / q as f64);
        }
        sum / (q as f64 * (etas.len() as f64).sqrt())
    }

    #[test]
    fn kernel_matches_error_form() {
        let q = 5;
        let s = 3;
        let etas: Vec<(u64, i64)> = (0..q).map(|a| (a, 1)).collect();
        let batch = batch_from(q, s, &etas);
        let out = bv_kernel(&prepare_sample_state(&batch).unwrap());
        let table = PhaseTable::new(q);
        for k_d in 0..q {
            for k_star in 0..q {
                let want = error_form_amplitude(q, s, &etas, k_d, k_star);
                assert!((out.amplitude(k_d, k_star) - want).norm() < 1e-12);
                assert!((kernel_amplitude(&batch, &table, k_d, k_star) - want).norm() < 1e-12);
            }
        }
        // constant eta' is a per-k_star phase: same distribution as noiseless
        let clean = batch_from(q, s, &(0..q).map(|a| (a, 0)).collect::<Vec<_>>());
        let clean_out = bv_kernel(&prepare_sample_state(&clean).unwrap());
        for (p, r) in out.probabilities().iter().zip(clean_out.probabilities()) {
            assert!((p - r).abs() < 1e-12);
        }
    }

    #[test]
    fn measure_basis_state_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let state = TwoQuditState::basis(5, 2, 4);
        for _ in 0..100 {
            let o = measure(&state, &mut rng).unwrap();
            assert_eq!((o.k_d.value(), o.k_star.value()), (2, 4));
        }
    }

    #[test]
    fn extraction_examples() {
        let q = 7;
        // k_d = -3 * 2 mod 7 = 1, k_star = 2  ->  s = 3
        let o = MeasurementOutcome { k_d: fe(1, q), k_star: fe(2, q) };
        assert_eq!(extract_candidate(&o), Some(fe(3, q)));
        let null = MeasurementOutcome { k_d: fe(4, q), k_star: fe(0, q) };
        assert_eq!(extract_candidate(&null), None);
    }

    #[test]
    fn sampler_rows_match_dense_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let q = 13;
        let etas: Vec<(u64, i64)> = (0..q).filter(|a| a % 3 != 1).map(|a| (a, rng.gen_range(-2..=2))).collect();
        let batch = batch_from(q, 6, &etas);
        let out = bv_kernel(&prepare_sample_state(&batch).unwrap());
        let mut sampler = KernelSampler::new(q);
        for k_star in 0..q {
            let marginal: f64 = (0..q).map(|k_d| out.probability(k_d, k_star)).sum();
            assert!((marginal - 1.0 / q as f64).abs() < 1e-12);
            let row = sampler.conditional_row(&batch, k_star).to_vec();
            for k_d in 0..q {
                assert!((row[k_d as usize] / q as f64 - out.probability(k_d, k_star)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dump_lists_support() {
        let mut out = Vec::new();
        TwoQuditState::basis(3, 1, 2).dump(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert_eq!(text, "1 2 1 0 1\n");
    }
}
