//! Dithered uniform quantized sensing `q = Q(Φx + ξ)`.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_config, invalid_input, QcsError, Result};
use crate::linalg::{norm_inf, DenseMatrix};
use crate::rng::{derive_seed, Stream};

/// Midrise quantizer `δ(⌊t/δ⌋ + 1/2)`.
pub fn quantize(t: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0) || !delta.is_finite() {
        return invalid_config(format!("quantizer bin width must be positive, got {delta}"));
    }
    if !t.is_finite() {
        return invalid_input("cannot quantize a non-finite value");
    }
    Ok(quantize_unchecked(t, delta))
}

#[inline]
pub(crate) fn quantize_unchecked(t: f64, delta: f64) -> f64 {
    delta * ((t / delta).floor() + 0.5)
}

/// Bin width `6 · 2^(1−B)` for a `B`-bit budget.
pub fn delta_from_bits(bits: u32) -> Result<f64> {
    if bits < 1 {
        return invalid_config("bit depth must be at least 1");
    }
    Ok(6.0 * 2f64.powi(1 - bits as i32))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizerConfig {
    pub delta: f64,
    pub bits: Option<u32>,
}

impl QuantizerConfig {
    pub fn from_delta(delta: f64) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return invalid_config(format!("bin width must be positive, got {delta}"));
        }
        Ok(Self { delta, bits: None })
    }

    pub fn from_bits(bits: u32) -> Result<Self> {
        Ok(Self {
            delta: delta_from_bits(bits)?,
            bits: Some(bits),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return invalid_config("bin width must be positive");
        }
        if let Some(b) = self.bits {
            let expected = delta_from_bits(b)?;
            if (expected - self.delta).abs() > 1e-12 * expected {
                return invalid_config(format!(
                    "bin width {} inconsistent with {} bits (expected {})",
                    self.delta, b, expected
                ));
            }
        }
        Ok(())
    }
}

/// Zero-mean, unit-variance entry law of the sensing matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Distribution {
    Gaussian,
    /// ±1 with probability 1/2.
    Bernoulli,
    /// Uniform on `[−√3, √3]`.
    UniformSym,
}

impl Distribution {
    pub fn tag(&self) -> &'static str {
        match self {
            Distribution::Gaussian => "gaussian",
            Distribution::Bernoulli => "bernoulli",
            Distribution::UniformSym => "uniform",
        }
    }

    fn sample(&self, rng: &mut Stream) -> f64 {
        match self {
            Distribution::Gaussian => rng.normal(),
            Distribution::Bernoulli => rng.sign(),
            Distribution::UniformSym => {
                let s = 3f64.sqrt();
                rng.uniform_in(-s, s)
            }
        }
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Distribution {
    type Err = QcsError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Distribution::Gaussian),
            "bernoulli" => Ok(Distribution::Bernoulli),
            "uniform" => Ok(Distribution::UniformSym),
            other => invalid_input(format!("unknown distribution tag '{other}'")),
        }
    }
}

/// Sensing matrix plus dither for one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingEnsemble {
    pub phi: DenseMatrix,
    pub dist: Distribution,
    pub dither: Vec<f64>,
    pub seed: u64,
}

impl SensingEnsemble {
    pub fn measurements(&self) -> usize {
        self.phi.rows()
    }

    pub fn dim(&self) -> usize {
        self.phi.cols()
    }
}

const PHI_STREAM: u64 = 1;
const DITHER_STREAM: u64 = 2;

/// Draws `Φ` (M×N, iid entries, row-major order) and the dither
/// `ξ ~ U([−δ/2, δ/2])^M` from independent sub-streams of `seed`.
pub fn draw_ensemble(
    m: usize,
    n: usize,
    dist: Distribution,
    delta: f64,
    seed: u64,
) -> Result<SensingEnsemble> {
    if m == 0 || n == 0 {
        return invalid_config("ensemble dimensions must be at least 1");
    }
    QuantizerConfig::from_delta(delta)?;
    let mut rng = Stream::new(derive_seed(&[seed, PHI_STREAM]));
    let data: Vec<f64> = (0..m * n).map(|_| dist.sample(&mut rng)).collect();
    let mut rng = Stream::new(derive_seed(&[seed, DITHER_STREAM]));
    let dither = (0..m)
        .map(|_| rng.uniform_in(-delta / 2.0, delta / 2.0))
        .collect();
    Ok(SensingEnsemble {
        phi: DenseMatrix::new(m, n, data)?,
        dist,
        dither,
        seed,
    })
}

/// Observed quantized data; entries lie on the lattice `δ(ℤ + 1/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedMeasurements {
    pub q: Vec<f64>,
    pub delta: f64,
}

impl QuantizedMeasurements {
    pub fn new(q: Vec<f64>, delta: f64) -> Result<Self> {
        QuantizerConfig::from_delta(delta)?;
        for (i, &v) in q.iter().enumerate() {
            let k = v / delta - 0.5;
            if !v.is_finite() || (k - k.round()).abs() > 1e-9 {
                return invalid_input(format!("q[{i}] = {v} is not on the quantizer lattice"));
            }
        }
        Ok(Self { q, delta })
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// `q − ξ`, the center of the consistency box in measurement space.
    pub fn centered(&self, ens: &SensingEnsemble) -> Vec<f64> {
        self.q.iter().zip(&ens.dither).map(|(q, x)| q - x).collect()
    }
}

fn check_dims(x: &[f64], ens: &SensingEnsemble) -> Result<()> {
    if x.len() != ens.dim() {
        return invalid_input(format!(
            "signal length {} does not match ensemble width {}",
            x.len(),
            ens.dim()
        ));
    }
    Ok(())
}

pub fn sense(x: &[f64], ens: &SensingEnsemble, cfg: &QuantizerConfig) -> Result<QuantizedMeasurements> {
    cfg.validate()?;
    check_dims(x, ens)?;
    if x.iter().any(|v| !v.is_finite()) {
        return invalid_input("signal has non-finite entries");
    }
    let mut y = ens.phi.matvec(x)?;
    for (yi, xi) in y.iter_mut().zip(&ens.dither) {
        *yi = quantize_unchecked(*yi + xi, cfg.delta);
    }
    Ok(QuantizedMeasurements {
        q: y,
        delta: cfg.delta,
    })
}

/// `‖Φu + ξ − q‖_∞`.
pub fn consistency_residual(u: &[f64], q: &QuantizedMeasurements, ens: &SensingEnsemble) -> Result<f64> {
    check_dims(u, ens)?;
    if q.len() != ens.measurements() {
        return invalid_input("measurement count does not match ensemble");
    }
    let mut r = ens.phi.matvec(u)?;
    for ((ri, xi), qi) in r.iter_mut().zip(&ens.dither).zip(&q.q) {
        *ri += xi - qi;
    }
    Ok(norm_inf(&r))
}

/// True iff `‖Φu + ξ − q‖_∞ ≤ δ/2 + tol`.
pub fn is_consistent(u: &[f64], q: &QuantizedMeasurements, ens: &SensingEnsemble, tol: f64) -> bool {
    match consistency_residual(u, q, ens) {
        Ok(r) => r <= q.delta / 2.0 + tol,
        Err(_) => false,
    }
}

/// Fraction of entries outside the two central bins `±δ/2`.
pub fn saturation_fraction(q: &QuantizedMeasurements) -> f64 {
    if q.is_empty() {
        return 0.0;
    }
    let half = q.delta / 2.0;
    let tol = 1e-9 * q.delta;
    let outside = q
        .q
        .iter()
        .filter(|&&v| (v.abs() - half).abs() > tol)
        .count();
    outside as f64 / q.len() as f64
}

/// A serialized sensing instance.
///
/// Text layout, one field group per line, floats in shortest round-trip
/// decimal form:
///
/// ```text
/// qcs-instance v1
/// <M> <N>
/// <dist tag>
/// <delta>
/// <seed>
/// <Φ row 1: N values>        (M lines, row-major)
/// <ξ: M values>
/// <q: M values>
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub ensemble: SensingEnsemble,
    pub measurements: QuantizedMeasurements,
}

const INSTANCE_MAGIC: &str = "qcs-instance v1";

impl Instance {
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let ens = &self.ensemble;
        let (m, n) = (ens.measurements(), ens.dim());
        writeln!(w, "{INSTANCE_MAGIC}")?;
        writeln!(w, "{m} {n}")?;
        writeln!(w, "{}", ens.dist.tag())?;
        writeln!(w, "{:?}", self.measurements.delta)?;
        writeln!(w, "{}", ens.seed)?;
        for i in 0..m {
            write_row(&mut w, ens.phi.row(i))?;
        }
        write_row(&mut w, &ens.dither)?;
        write_row(&mut w, &self.measurements.q)?;
        Ok(())
    }

    pub fn read_from(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines();
        let mut next = |what: &str| -> Result<String> {
            match lines.next() {
                Some(Ok(l)) => Ok(l),
                Some(Err(e)) => Err(e.into()),
                None => invalid_input(format!("instance truncated before {what}")),
            }
        };
        if next("header")?.trim() != INSTANCE_MAGIC {
            return invalid_input("not a qcs-instance v1 file");
        }
        let dims = parse_row::<usize>(&next("dimensions")?)?;
        if dims.len() != 2 {
            return invalid_input("dimension line must hold M and N");
        }
        let (m, n) = (dims[0], dims[1]);
        let dist: Distribution = next("distribution")?.trim().parse()?;
        let delta: f64 = parse_one(&next("delta")?)?;
        let seed: u64 = parse_one(&next("seed")?)?;
        let mut data = Vec::with_capacity(m * n);
        for i in 0..m {
            let row = parse_row::<f64>(&next("matrix row")?)?;
            if row.len() != n {
                return invalid_input(format!("matrix row {i} has {} entries, expected {n}", row.len()));
            }
            data.extend(row);
        }
        let dither = parse_row::<f64>(&next("dither")?)?;
        let q = parse_row::<f64>(&next("measurements")?)?;
        if dither.len() != m || q.len() != m {
            return invalid_input("dither/measurement length does not match M");
        }
        if dither.iter().any(|x| x.abs() > delta / 2.0) {
            return invalid_input("dither outside [-delta/2, delta/2]");
        }
        Ok(Self {
            ensemble: SensingEnsemble {
                phi: DenseMatrix::new(m, n, data)?,
                dist,
                dither,
                seed,
            },
            measurements: QuantizedMeasurements::new(q, delta)?,
        })
    }
}

fn write_row(w: &mut impl Write, row: &[f64]) -> Result<()> {
    let mut first = true;
    for v in row {
        if !first {
            w.write_all(b" ")?;
        }
        first = false;
        write!(w, "{v:?}")?;
    }
    writeln!(w)?;
    Ok(())
}

fn parse_one<T: FromStr>(line: &str) -> Result<T> {
    line.trim()
        .parse()
        .map_err(|_| QcsError::InvalidInput(format!("cannot parse '{}'", line.trim())))
}

fn parse_row<T: FromStr>(line: &str) -> Result<Vec<T>> {
    line.split_whitespace().map(parse_one).collect()
}
