//! LWE instance generation: secrets, bounded error draws and sample streams.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LweError, Result};
use crate::fq::{self, centered_raw, check_modulus, CenteredInt, FieldElement, FieldVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    UniformBounded,
    TruncatedGaussian,
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorKind::UniformBounded => "uniform",
            ErrorKind::TruncatedGaussian => "gaussian",
        })
    }
}

impl FromStr for ErrorKind {
    type Err = LweError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" | "uniform_bounded" => Ok(ErrorKind::UniformBounded),
            "gaussian" | "truncated_gaussian" => Ok(ErrorKind::TruncatedGaussian),
            other => Err(LweError::Parse(format!("unknown error kind `{other}`"))),
        }
    }
}

/// Bounded error law on `[-bound, bound]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ErrorDistribution {
    UniformBounded { bound: u64 },
    /// Weight proportional to `exp(-eta^2 / 2 sigma^2)`, restricted to the bound.
    TruncatedGaussian { bound: u64, sigma: f64 },
}

impl ErrorDistribution {
    pub fn uniform(bound: u64) -> Self {
        ErrorDistribution::UniformBounded { bound }
    }

    /// Gaussian with `sigma = bound / 3` (or 1 when `bound == 0`).
    pub fn gaussian(bound: u64) -> Self {
        let sigma = if bound == 0 { 1.0 } else { bound as f64 / 3.0 };
        ErrorDistribution::TruncatedGaussian { bound, sigma }
    }

    pub fn gaussian_with_sigma(bound: u64, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(LweError::param("sigma", format!("must be positive, got {sigma}")));
        }
        Ok(ErrorDistribution::TruncatedGaussian { bound, sigma })
    }

    pub fn of_kind(kind: ErrorKind, bound: u64, sigma: Option<f64>) -> Result<Self> {
        match (kind, sigma) {
            (ErrorKind::UniformBounded, _) => Ok(Self::uniform(bound)),
            (ErrorKind::TruncatedGaussian, None) => Ok(Self::gaussian(bound)),
            (ErrorKind::TruncatedGaussian, Some(s)) => Self::gaussian_with_sigma(bound, s),
        }
    }

    pub fn bound(&self) -> u64 {
        match *self {
            ErrorDistribution::UniformBounded { bound }
            | ErrorDistribution::TruncatedGaussian { bound, .. } => bound,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            ErrorDistribution::UniformBounded { .. } => ErrorKind::UniformBounded,
            ErrorDistribution::TruncatedGaussian { .. } => ErrorKind::TruncatedGaussian,
        }
    }

    pub fn sigma(&self) -> Option<f64> {
        match *self {
            ErrorDistribution::TruncatedGaussian { sigma, .. } => Some(sigma),
            _ => None,
        }
    }

    /// Same law with a different bound (sigma rescaled proportionally).
    pub fn with_bound(&self, bound: u64) -> Self {
        match *self {
            ErrorDistribution::UniformBounded { .. } => Self::uniform(bound),
            ErrorDistribution::TruncatedGaussian { bound: old, sigma } => {
                let sigma = if old == 0 { sigma } else { sigma * bound as f64 / old as f64 };
                ErrorDistribution::TruncatedGaussian {
                    bound,
                    sigma: if sigma > 0.0 { sigma } else { 1.0 },
                }
            }
        }
    }

    /// Requires `bound < q/2`.
    pub fn validate(&self, q: u64) -> Result<()> {
        let bound = self.bound();
        if 2 * bound >= q {
            return Err(LweError::BoundTooLarge { bound, modulus: q });
        }
        Ok(())
    }

    /// Exact probability mass of `eta` (used by oracles and tests).
    pub fn pmf(&self, eta: i64) -> f64 {
        let bound = self.bound() as i64;
        if eta.abs() > bound {
            return 0.0;
        }
        match *self {
            ErrorDistribution::UniformBounded { .. } => 1.0 / (2 * bound + 1) as f64,
            ErrorDistribution::TruncatedGaussian { sigma, .. } => {
                let w = |x: i64| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp();
                let z: f64 = (-bound..=bound).map(w).sum();
                w(eta) / z
            }
        }
    }
}

/// Draws one error value. Gaussian draws use rejection from the uniform
/// proposal on the bounded support, which is exact.
pub fn sample_error<R: Rng + ?Sized>(chi: &ErrorDistribution, rng: &mut R) -> CenteredInt {
    let bound = chi.bound() as i64;
    if bound == 0 {
        return CenteredInt(0);
    }
    match *chi {
        ErrorDistribution::UniformBounded { .. } => CenteredInt(rng.gen_range(-bound..=bound)),
        ErrorDistribution::TruncatedGaussian { sigma, .. } => loop {
            let eta = rng.gen_range(-bound..=bound);
            let accept = (-(eta * eta) as f64 / (2.0 * sigma * sigma)).exp();
            if rng.gen::<f64>() < accept {
                break CenteredInt(eta);
            }
        },
    }
}

/// `n` independent uniform draws from `[0, q)`.
pub fn gen_secret<R: Rng + ?Sized>(n: usize, q: u64, rng: &mut R) -> Result<FieldVector> {
    check_modulus(q)?;
    if n == 0 {
        return Err(LweError::InvalidLength("secret length must be at least 1".into()));
    }
    Ok(FieldVector::from_raw((0..n).map(|_| rng.gen_range(0..q)).collect(), q))
}

/// One LWE sample `(a, a.s + eta)`. The error is kept for harness checks
/// only; solver code goes through [`Sample::public`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    a: FieldVector,
    b: FieldElement,
    eta: CenteredInt,
}

impl Sample {
    /// What a solver is allowed to see.
    pub fn public(&self) -> (&FieldVector, FieldElement) {
        (&self.a, self.b)
    }

    pub fn a(&self) -> &FieldVector {
        &self.a
    }

    pub fn b(&self) -> FieldElement {
        self.b
    }

    /// Ground-truth error. Harness and oracle use only.
    pub fn ground_truth_error(&self) -> CenteredInt {
        self.eta
    }

    /// Builds a sample from public data, recovering the error from the
    /// secret. Used when reading serialized instances.
    pub fn from_public(a: FieldVector, b: FieldElement, secret: &FieldVector) -> Result<Self> {
        let dot = a.dot(secret)?;
        let eta = (b - dot).centered();
        Ok(Self { a, b, eta })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LweInstance {
    n: usize,
    q: u64,
    secret: FieldVector,
    chi: ErrorDistribution,
}

impl LweInstance {
    pub fn new(secret: FieldVector, chi: ErrorDistribution) -> Result<Self> {
        let q = check_modulus(secret.modulus())?;
        if secret.is_empty() {
            return Err(LweError::InvalidLength("secret length must be at least 1".into()));
        }
        chi.validate(q)?;
        Ok(Self {
            n: secret.len(),
            q,
            secret,
            chi,
        })
    }

    pub fn generate<R: Rng + ?Sized>(
        n: usize,
        q: u64,
        chi: ErrorDistribution,
        rng: &mut R,
    ) -> Result<Self> {
        let secret = gen_secret(n, q, rng)?;
        Self::new(secret, chi)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    pub fn xi(&self) -> u64 {
        self.chi.bound()
    }

    /// `alpha = xi / q`.
    pub fn alpha(&self) -> f64 {
        self.chi.bound() as f64 / self.q as f64
    }

    pub fn chi(&self) -> &ErrorDistribution {
        &self.chi
    }

    /// Ground truth; harness use only.
    pub fn secret(&self) -> &FieldVector {
        &self.secret
    }

    pub fn gen_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Sample {
        let q = self.q;
        let a: Vec<u64> = (0..self.n).map(|_| rng.gen_range(0..q)).collect();
        let eta = sample_error(&self.chi, rng);
        let clean = fq::dot_raw(&a, self.secret.values(), q);
        let b = fq::add_mod(clean, eta.to_residue(q), q);
        let sample = Sample {
            a: FieldVector::from_raw(a, q),
            b: FieldElement::new_unchecked(b, q),
            eta,
        };
        debug_assert!(sample.eta.abs() <= self.xi());
        debug_assert_eq!(centered_raw(fq::sub_mod(b, clean, q), q), eta);
        sample
    }

    pub fn gen_samples<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<Sample> {
        (0..count).map(|_| self.gen_sample(rng)).collect()
    }
}

/// Free-function form of [`LweInstance::gen_sample`].
pub fn gen_sample<R: Rng + ?Sized>(instance: &LweInstance, rng: &mut R) -> Sample {
    instance.gen_sample(rng)
}

fn kind_token(chi: &ErrorDistribution) -> String {
    match *chi {
        ErrorDistribution::UniformBounded { .. } => "uniform".into(),
        ErrorDistribution::TruncatedGaussian { sigma, .. } => format!("gaussian:{sigma}"),
    }
}

fn parse_kind_token(token: &str, bound: u64) -> Result<ErrorDistribution> {
    match token.split_once(':') {
        None => ErrorDistribution::of_kind(token.parse()?, bound, None),
        Some((kind, sigma)) => {
            let sigma: f64 = sigma
                .parse()
                .map_err(|_| LweError::Parse(format!("bad sigma `{sigma}`")))?;
            ErrorDistribution::of_kind(kind.parse()?, bound, Some(sigma))
        }
    }
}

/// Writes the public half of an instance: header `n q xi kind seed`, then one
/// sample per line `a_0 ... a_{n-1} b`.
pub fn write_samples<W: Write>(
    out: &mut W,
    instance: &LweInstance,
    seed: u64,
    samples: &[Sample],
) -> Result<()> {
    writeln!(
        out,
        "{} {} {} {} {}",
        instance.n,
        instance.q,
        instance.xi(),
        kind_token(&instance.chi),
        seed
    )?;
    for s in samples {
        let mut line = String::new();
        for v in s.a.values() {
            line.push_str(&v.to_string());
            line.push(' ');
        }
        line.push_str(&s.b.value().to_string());
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Sidecar file: the secret on one line.
pub fn write_secret<W: Write>(out: &mut W, secret: &FieldVector) -> Result<()> {
    let line: Vec<String> = secret.values().iter().map(u64::to_string).collect();
    writeln!(out, "{}", line.join(" "))?;
    Ok(())
}

pub fn read_secret<R: BufRead>(input: R, q: u64) -> Result<FieldVector> {
    let line = input
        .lines()
        .next()
        .ok_or_else(|| LweError::Parse("empty secret file".into()))??;
    let values = parse_u64s(&line)?;
    FieldVector::new(values, q)
}

/// Header of a serialized instance.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleFileHeader {
    pub n: usize,
    pub q: u64,
    pub chi: ErrorDistribution,
    pub seed: u64,
}

/// Reads a sample file back into its header and public `(a, b)` pairs.
pub fn read_samples<R: BufRead>(
    input: R,
) -> Result<(SampleFileHeader, Vec<(FieldVector, FieldElement)>)> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| LweError::Parse("missing header".into()))??;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() != 5 {
        return Err(LweError::Parse(format!("header needs 5 fields: `{header}`")));
    }
    let num = |t: &str| -> Result<u64> {
        t.parse()
            .map_err(|_| LweError::Parse(format!("bad header field `{t}`")))
    };
    let n = num(tokens[0])? as usize;
    let q = check_modulus(num(tokens[1])?)?;
    let xi = num(tokens[2])?;
    let chi = parse_kind_token(tokens[3], xi)?;
    let seed = num(tokens[4])?;

    let mut pairs = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut values = parse_u64s(&line)?;
        if values.len() != n + 1 {
            return Err(LweError::DimensionMismatch {
                expected: n + 1,
                got: values.len(),
            });
        }
        let b = values.pop().unwrap_or_default();
        pairs.push((FieldVector::new(values, q)?, FieldElement::new(b, q)?));
    }
    Ok((SampleFileHeader { n, q, chi, seed }, pairs))
}

fn parse_u64s(line: &str) -> Result<Vec<u64>> {
    line.split_whitespace()
        .map(|t| {
            t.parse::<u64>()
                .map_err(|_| LweError::Parse(format!("bad integer `{t}`")))
        })
        .collect()
}
