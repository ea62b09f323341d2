//! Arithmetic and dense linear algebra over the prime field F_q.
//!
//! Residues are stored as `u64`. Products are formed before reduction, so the
//! modulus is capped at [`MAX_MODULUS`] to keep `q * q` well inside `u64`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{LweError, Result};

/// Largest accepted modulus. `(2^31 - 1)^2 < 2^62`, so every product of two
/// residues and every sum of two products fits without overflow.
pub const MAX_MODULUS: u64 = (1 << 31) - 1;

/// Deterministic primality by trial division; adequate below [`MAX_MODULUS`].
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n.is_multiple_of(2) {
        return n == 2;
    }
    let mut d = 3u64;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

/// Checks that `q` is an odd prime no larger than [`MAX_MODULUS`].
pub fn check_modulus(q: u64) -> Result<u64> {
    if !(3..=MAX_MODULUS).contains(&q) || !is_prime(q) {
        return Err(LweError::InvalidModulus(q));
    }
    Ok(q)
}

#[inline]
pub(crate) fn mul_mod(a: u64, b: u64, q: u64) -> u64 {
    a * b % q
}

#[inline]
pub(crate) fn add_mod(a: u64, b: u64, q: u64) -> u64 {
    let s = a + b;
    if s >= q {
        s - q
    } else {
        s
    }
}

#[inline]
pub(crate) fn sub_mod(a: u64, b: u64, q: u64) -> u64 {
    if a >= b {
        a - b
    } else {
        a + q - b
    }
}

/// Reduces a signed integer into `[0, q)`.
#[inline]
pub fn reduce_signed(x: i64, q: u64) -> u64 {
    x.rem_euclid(q as i64) as u64
}

pub(crate) fn pow_mod(mut base: u64, mut exp: u64, q: u64) -> u64 {
    let mut acc = 1 % q;
    base %= q;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, q);
        }
        base = mul_mod(base, base, q);
        exp >>= 1;
    }
    acc
}

/// Inverse of a raw residue via Fermat's little theorem.
pub(crate) fn inv_mod(x: u64, q: u64) -> Result<u64> {
    let x = x % q;
    if x == 0 {
        return Err(LweError::ZeroInverse);
    }
    Ok(pow_mod(x, q - 2, q))
}

/// Signed representative of a residue, in `(-q/2, q/2]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CenteredInt(pub i64);

impl CenteredInt {
    pub fn value(self) -> i64 {
        self.0
    }

    pub fn abs(self) -> u64 {
        self.0.unsigned_abs()
    }

    /// Maps back to `[0, q)`.
    pub fn to_residue(self, q: u64) -> u64 {
        reduce_signed(self.0, q)
    }
}

impl fmt::Display for CenteredInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Centered representative of a raw residue `x mod q`.
#[inline]
pub fn centered_raw(x: u64, q: u64) -> CenteredInt {
    let x = x % q;
    // x > q/2  <=>  2x > q
    if 2 * x > q {
        CenteredInt(x as i64 - q as i64)
    } else {
        CenteredInt(x as i64)
    }
}

/// An element of F_q. The modulus travels with the value so mixed-field
/// arithmetic is caught instead of silently producing garbage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FieldElement {
    value: u64,
    modulus: u64,
}

impl FieldElement {
    pub fn new(value: u64, modulus: u64) -> Result<Self> {
        check_modulus(modulus)?;
        Ok(Self::new_unchecked(value % modulus, modulus))
    }

    /// Caller guarantees `modulus` is a valid prime and `value < modulus`.
    #[inline]
    pub(crate) fn new_unchecked(value: u64, modulus: u64) -> Self {
        debug_assert!(value < modulus);
        Self { value, modulus }
    }

    pub fn from_signed(value: i64, modulus: u64) -> Result<Self> {
        check_modulus(modulus)?;
        Ok(Self::new_unchecked(reduce_signed(value, modulus), modulus))
    }

    pub fn zero(modulus: u64) -> Self {
        Self::new_unchecked(0, modulus)
    }

    pub fn one(modulus: u64) -> Self {
        Self::new_unchecked(1, modulus)
    }

    #[inline]
    pub fn value(self) -> u64 {
        self.value
    }

    #[inline]
    pub fn modulus(self) -> u64 {
        self.modulus
    }

    pub fn is_zero(self) -> bool {
        self.value == 0
    }

    pub fn inv(self) -> Result<Self> {
        inv_mod(self.value, self.modulus).map(|v| Self::new_unchecked(v, self.modulus))
    }

    pub fn pow(self, exp: u64) -> Self {
        Self::new_unchecked(pow_mod(self.value, exp, self.modulus), self.modulus)
    }

    pub fn centered(self) -> CenteredInt {
        centered_raw(self.value, self.modulus)
    }

    #[inline]
    fn same_field(self, other: Self) {
        assert_eq!(
            self.modulus, other.modulus,
            "arithmetic between F_{} and F_{}",
            self.modulus, other.modulus
        );
    }
}

/// Multiplicative inverse.
pub fn inv(x: FieldElement) -> Result<FieldElement> {
    x.inv()
}

/// Centered representative in `(-q/2, q/2]`.
pub fn centered(x: FieldElement) -> CenteredInt {
    x.centered()
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

impl Add for FieldElement {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.same_field(rhs);
        Self::new_unchecked(add_mod(self.value, rhs.value, self.modulus), self.modulus)
    }
}

impl Sub for FieldElement {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.same_field(rhs);
        Self::new_unchecked(sub_mod(self.value, rhs.value, self.modulus), self.modulus)
    }
}

impl Mul for FieldElement {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        self.same_field(rhs);
        Self::new_unchecked(mul_mod(self.value, rhs.value, self.modulus), self.modulus)
    }
}

impl Neg for FieldElement {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new_unchecked(sub_mod(0, self.value, self.modulus), self.modulus)
    }
}

/// Dense vector over F_q.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FieldVector {
    modulus: u64,
    values: Vec<u64>,
}

impl FieldVector {
    /// Values are reduced mod `modulus`.
    pub fn new(values: Vec<u64>, modulus: u64) -> Result<Self> {
        check_modulus(modulus)?;
        let values = values.into_iter().map(|v| v % modulus).collect();
        Ok(Self { modulus, values })
    }

    pub(crate) fn from_raw(values: Vec<u64>, modulus: u64) -> Self {
        debug_assert!(values.iter().all(|&v| v < modulus));
        Self { modulus, values }
    }

    pub fn zeros(len: usize, modulus: u64) -> Self {
        Self {
            modulus,
            values: vec![0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn get(&self, i: usize) -> FieldElement {
        FieldElement::new_unchecked(self.values[i], self.modulus)
    }

    pub fn iter(&self) -> impl Iterator<Item = FieldElement> + '_ {
        self.values
            .iter()
            .map(move |&v| FieldElement::new_unchecked(v, self.modulus))
    }

    /// Inner product mod q.
    pub fn dot(&self, other: &FieldVector) -> Result<FieldElement> {
        if self.modulus != other.modulus {
            return Err(LweError::ModulusMismatch(self.modulus, other.modulus));
        }
        if self.len() != other.len() {
            return Err(LweError::DimensionMismatch {
                expected: self.len(),
                got: other.len(),
            });
        }
        Ok(FieldElement::new_unchecked(
            dot_raw(&self.values, &other.values, self.modulus),
            self.modulus,
        ))
    }
}

pub(crate) fn dot_raw(a: &[u64], b: &[u64], q: u64) -> u64 {
    a.iter()
        .zip(b)
        .fold(0u64, |acc, (&x, &y)| add_mod(acc, mul_mod(x, y, q), q))
}

/// Dense row-major matrix over F_q.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldMatrix {
    rows: usize,
    cols: usize,
    modulus: u64,
    entries: Vec<u64>,
}

impl FieldMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<u64>, modulus: u64) -> Result<Self> {
        check_modulus(modulus)?;
        if entries.len() != rows * cols {
            return Err(LweError::DimensionMismatch {
                expected: rows * cols,
                got: entries.len(),
            });
        }
        let entries = entries.into_iter().map(|v| v % modulus).collect();
        Ok(Self {
            rows,
            cols,
            modulus,
            entries,
        })
    }

    pub fn from_rows(rows: &[Vec<u64>], modulus: u64) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(LweError::DimensionMismatch {
                expected: cols,
                got: bad.len(),
            });
        }
        Self::new(rows.len(), cols, rows.concat(), modulus)
    }

    pub fn identity(n: usize, modulus: u64) -> Self {
        let mut entries = vec![0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1;
        }
        Self {
            rows: n,
            cols: n,
            modulus,
            entries,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn get(&self, r: usize, c: usize) -> FieldElement {
        FieldElement::new_unchecked(self.entries[r * self.cols + c], self.modulus)
    }

    pub fn row(&self, r: usize) -> &[u64] {
        &self.entries[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn mul(&self, rhs: &FieldMatrix) -> Result<FieldMatrix> {
        if self.modulus != rhs.modulus {
            return Err(LweError::ModulusMismatch(self.modulus, rhs.modulus));
        }
        if self.cols != rhs.rows {
            return Err(LweError::DimensionMismatch {
                expected: self.cols,
                got: rhs.rows,
            });
        }
        let q = self.modulus;
        let mut out = vec![0u64; self.rows * rhs.cols];
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.entries[i * self.cols + k];
                if a == 0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    let cell = &mut out[i * rhs.cols + j];
                    *cell = add_mod(*cell, mul_mod(a, rhs.entries[k * rhs.cols + j], q), q);
                }
            }
        }
        Ok(FieldMatrix {
            rows: self.rows,
            cols: rhs.cols,
            modulus: q,
            entries: out,
        })
    }

    pub fn mul_vec(&self, v: &FieldVector) -> Result<FieldVector> {
        if self.modulus != v.modulus {
            return Err(LweError::ModulusMismatch(self.modulus, v.modulus));
        }
        if self.cols != v.len() {
            return Err(LweError::DimensionMismatch {
                expected: self.cols,
                got: v.len(),
            });
        }
        let values = (0..self.rows)
            .map(|r| dot_raw(self.row(r), &v.values, self.modulus))
            .collect();
        Ok(FieldVector::from_raw(values, self.modulus))
    }

    /// Gauss–Jordan inverse. The pivot is the first nonzero entry scanning
    /// down from the diagonal; arithmetic is exact so no partial pivoting.
    pub fn inverse(&self) -> Result<FieldMatrix> {
        if !self.is_square() {
            return Err(LweError::DimensionMismatch {
                expected: self.rows,
                got: self.cols,
            });
        }
        let n = self.rows;
        let q = self.modulus;
        let mut work = self.entries.clone();
        let mut inv = FieldMatrix::identity(n, q).entries;

        for col in 0..n {
            let pivot = (col..n)
                .find(|&r| work[r * n + col] != 0)
                .ok_or(LweError::SingularMatrix { modulus: q, column: col })?;
            if pivot != col {
                for c in 0..n {
                    work.swap(pivot * n + c, col * n + c);
                    inv.swap(pivot * n + c, col * n + c);
                }
            }
            let scale = inv_mod(work[col * n + col], q)?;
            for c in 0..n {
                work[col * n + c] = mul_mod(work[col * n + c], scale, q);
                inv[col * n + c] = mul_mod(inv[col * n + c], scale, q);
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let factor = work[r * n + col];
                if factor == 0 {
                    continue;
                }
                for c in 0..n {
                    work[r * n + c] = sub_mod(work[r * n + c], mul_mod(factor, work[col * n + c], q), q);
                    inv[r * n + c] = sub_mod(inv[r * n + c], mul_mod(factor, inv[col * n + c], q), q);
                }
            }
        }
        Ok(FieldMatrix {
            rows: n,
            cols: n,
            modulus: q,
            entries: inv,
        })
    }
}

/// Inverse of a square matrix over F_q.
pub fn mat_inverse(a: &FieldMatrix) -> Result<FieldMatrix> {
    a.inverse()
}

/// Recovers `s` from `n` noiseless pairs `(a_i, a_i . s)` as `A^{-1} b`.
pub fn solve_noiseless(pairs: &[(FieldVector, FieldElement)]) -> Result<FieldVector> {
    let n = pairs.len();
    if n == 0 {
        return Err(LweError::InvalidLength("no samples".into()));
    }
    let q = pairs[0].0.modulus();
    let mut entries = Vec::with_capacity(n * n);
    let mut rhs = Vec::with_capacity(n);
    for (a, b) in pairs {
        if a.len() != n {
            return Err(LweError::DimensionMismatch {
                expected: n,
                got: a.len(),
            });
        }
        if a.modulus() != q || b.modulus() != q {
            return Err(LweError::ModulusMismatch(q, a.modulus().max(b.modulus())));
        }
        entries.extend_from_slice(a.values());
        rhs.push(b.value());
    }
    let a_hat = FieldMatrix::new(n, n, entries, q)?;
    a_hat.inverse()?.mul_vec(&FieldVector::from_raw(rhs, q))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fe(v: u64, q: u64) -> FieldElement {
        FieldElement::new(v, q).unwrap()
    }

    fn brute_inverse(x: u64, q: u64) -> Option<u64> {
        (1..q).find(|y| x * y % q == 1)
    }

    #[test]
    fn inverse_examples() {
        for q in [3, 7, 11, 101] {
            assert_eq!(inv(fe(1, q)).unwrap().value(), 1);
        }
        assert_eq!(brute_inverse(3, 7), Some(5));
        assert_eq!(inv(fe(3, 7)).unwrap().value(), 5);
        assert!(matches!(inv(fe(0, 11)), Err(LweError::ZeroInverse)));
    }

    #[test]
    fn inverse_exhaustive_small_primes() {
        for q in (3..=101).filter(|&q| is_prime(q)) {
            for x in 1..q {
                let y = inv(fe(x, q)).unwrap();
                assert_eq!(x * y.value() % q, 1, "q={q} x={x}");
                assert_eq!(Some(y.value()), brute_inverse(x, q));
            }
        }
    }

    #[test]
    fn rejects_bad_moduli() {
        for q in [0, 1, 2, 4, 9, 15, MAX_MODULUS + 2] {
            assert!(FieldElement::new(1, q).is_err(), "q={q}");
        }
        assert!(FieldElement::new(1, MAX_MODULUS).is_ok());
    }

    #[test]
    fn centered_examples() {
        assert_eq!(centered(fe(0, 7)), CenteredInt(0));
        assert_eq!(centered(fe(6, 7)), CenteredInt(-1));
        assert_eq!(centered(fe(3, 7)), CenteredInt(3));
        assert_eq!(centered(fe(4, 7)), CenteredInt(-3));
    }

    #[test]
    fn centered_is_bijection() {
        for q in [3u64, 7, 31, 101] {
            let mut seen = std::collections::HashSet::new();
            for x in 0..q {
                let c = centered_raw(x, q);
                assert!(2 * c.abs() <= q);
                assert!(2 * c.0 > -(q as i64));
                assert_eq!(c.to_residue(q), x);
                assert!(seen.insert(c.0));
            }
        }
    }

    #[test]
    fn matrix_inverse_examples() {
        for n in 1..5 {
            let id = FieldMatrix::identity(n, 13);
            assert_eq!(mat_inverse(&id).unwrap(), id);
        }
        let a = FieldMatrix::from_rows(&[vec![1, 1], vec![0, 1]], 5).unwrap();
        let expected = FieldMatrix::from_rows(&[vec![1, 4], vec![0, 1]], 5).unwrap();
        let got = mat_inverse(&a).unwrap();
        assert_eq!(got, expected);
        assert_eq!(a.mul(&got).unwrap(), FieldMatrix::identity(2, 5));

        let singular = FieldMatrix::from_rows(&[vec![1, 2], vec![2, 4]], 5).unwrap();
        assert!(matches!(
            mat_inverse(&singular),
            Err(LweError::SingularMatrix { column: 1, .. })
        ));
    }

    #[test]
    fn pivot_swap_needed() {
        let a = FieldMatrix::from_rows(&[vec![0, 1], vec![1, 0]], 7).unwrap();
        assert_eq!(mat_inverse(&a).unwrap(), a);
    }

    #[test]
    fn solve_noiseless_examples() {
        // 3 * 4 = 12 = 5 mod 7; inv(3) = 5; 5 * 5 = 25 = 4.
        let pairs = vec![(FieldVector::new(vec![3], 7).unwrap(), fe(5, 7))];
        assert_eq!(solve_noiseless(&pairs).unwrap().values(), &[4]);

        let pairs = vec![
            (FieldVector::new(vec![2, 3], 11).unwrap(), fe(0, 11)),
            (FieldVector::new(vec![1, 5], 11).unwrap(), fe(0, 11)),
        ];
        assert_eq!(solve_noiseless(&pairs).unwrap().values(), &[0, 0]);

        let dependent = vec![
            (FieldVector::new(vec![1, 2], 5).unwrap(), fe(1, 5)),
            (FieldVector::new(vec![2, 4], 5).unwrap(), fe(2, 5)),
        ];
        assert!(matches!(
            solve_noiseless(&dependent),
            Err(LweError::SingularMatrix { .. })
        ));
    }

    #[test]
    fn operator_arithmetic() {
        let q = 17;
        assert_eq!((fe(16, q) + fe(3, q)).value(), 2);
        assert_eq!((fe(2, q) - fe(5, q)).value(), 14);
        assert_eq!((fe(4, q) * fe(5, q)).value(), 3);
        assert_eq!((-fe(4, q)).value(), 13);
        assert_eq!((-fe(0, q)).value(), 0);
        assert_eq!(FieldElement::from_signed(-6, q).unwrap().value(), 11);
    }

    #[test]
    #[should_panic(expected = "arithmetic between")]
    fn mixed_field_panics() {
        let _ = fe(1, 7) + fe(1, 11);
    }
}
