//! Independent random vectors: marginals, seeded sampling and the
//! isoprobabilistic map to standard-normal space.
//!
//! Every consumer of randomness draws from its own [`Stream`] of a ChaCha8
//! generator keyed by the run seed, so adding draws in one place (say, a
//! bigger candidate pool) never shifts the numbers another consumer sees.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use self::normal::{norm_cdf, norm_pdf, norm_ppf};

/// Standard-normal density, CDF and quantile.
pub mod normal {
    use libm::erfc;
    use statrs::function::erf::erfc_inv;
    use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

    pub fn norm_pdf(x: f64) -> f64 {
        INV_SQRT_2PI * (-0.5 * x * x).exp()
    }

    /// Φ(x), accurate in the relative sense in both tails.
    pub fn norm_cdf(x: f64) -> f64 {
        0.5 * erfc(-x * FRAC_1_SQRT_2)
    }

    /// Φ⁻¹(p). Returns ∓∞ at p = 0 / 1 and NaN outside [0, 1].
    pub fn norm_ppf(p: f64) -> f64 {
        if !(0.0..=1.0).contains(&p) {
            return f64::NAN;
        }
        if p == 0.0 {
            return f64::NEG_INFINITY;
        }
        if p == 1.0 {
            return f64::INFINITY;
        }
        // Work on the smaller tail so the argument of erfc⁻¹ keeps full
        // relative precision.
        let (q, sign) = if p > 0.5 { (1.0 - p, 1.0) } else { (p, -1.0) };
        let mut x = SQRT_2 * erfc_inv(2.0 * q);
        // One Halley step on the lower-tail equation Φ(-x) = q.
        let err = norm_cdf(-x) - q;
        let pdf = norm_pdf(x);
        if pdf > 0.0 {
            let t = err / pdf;
            x += t / (1.0 + 0.5 * x * t);
        }
        sign * x
    }
}

/// Distribution family of one input variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginalKind {
    Gaussian,
    Lognormal,
    Uniform,
}

/// One marginal in natural units.
///
/// * Gaussian: `p1` mean, `p2` standard deviation.
/// * Lognormal: `p1`, `p2` location and scale of the underlying normal.
/// * Uniform: `p1` lower bound, `p2` upper bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalSpec {
    pub kind: MarginalKind,
    pub p1: f64,
    pub p2: f64,
}

impl MarginalSpec {
    pub fn gaussian(mean: f64, std: f64) -> Result<Self> {
        Self::new(MarginalKind::Gaussian, mean, std)
    }

    pub fn lognormal(mu_ln: f64, sigma_ln: f64) -> Result<Self> {
        Self::new(MarginalKind::Lognormal, mu_ln, sigma_ln)
    }

    pub fn uniform(lower: f64, upper: f64) -> Result<Self> {
        Self::new(MarginalKind::Uniform, lower, upper)
    }

    pub fn new(kind: MarginalKind, p1: f64, p2: f64) -> Result<Self> {
        let m = MarginalSpec { kind, p1, p2 };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.p1.is_finite() || !self.p2.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "non-finite marginal parameters {self:?}"
            )));
        }
        let ok = match self.kind {
            MarginalKind::Gaussian | MarginalKind::Lognormal => self.p2 > 0.0,
            MarginalKind::Uniform => self.p2 > self.p1,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(match self.kind {
                MarginalKind::Uniform => format!(
                    "uniform marginal needs upper > lower, got [{}, {}]",
                    self.p1, self.p2
                ),
                _ => format!("{:?} marginal needs scale > 0, got {}", self.kind, self.p2),
            }))
        }
    }

    pub fn mean(&self) -> f64 {
        match self.kind {
            MarginalKind::Gaussian => self.p1,
            MarginalKind::Lognormal => (self.p1 + 0.5 * self.p2 * self.p2).exp(),
            MarginalKind::Uniform => 0.5 * (self.p1 + self.p2),
        }
    }

    pub fn std(&self) -> f64 {
        match self.kind {
            MarginalKind::Gaussian => self.p2,
            MarginalKind::Lognormal => {
                let s2 = self.p2 * self.p2;
                self.mean() * s2.exp_m1().sqrt()
            }
            MarginalKind::Uniform => (self.p2 - self.p1) / 12f64.sqrt(),
        }
    }

    pub fn median(&self) -> f64 {
        match self.kind {
            MarginalKind::Gaussian => self.p1,
            MarginalKind::Lognormal => self.p1.exp(),
            MarginalKind::Uniform => 0.5 * (self.p1 + self.p2),
        }
    }

    pub fn in_support(&self, x: f64) -> bool {
        match self.kind {
            MarginalKind::Gaussian => x.is_finite(),
            MarginalKind::Lognormal => x.is_finite() && x > 0.0,
            MarginalKind::Uniform => x >= self.p1 && x <= self.p2,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self.kind {
            MarginalKind::Gaussian => norm_cdf((x - self.p1) / self.p2),
            MarginalKind::Lognormal => {
                if x <= 0.0 {
                    0.0
                } else {
                    norm_cdf((x.ln() - self.p1) / self.p2)
                }
            }
            MarginalKind::Uniform => ((x - self.p1) / (self.p2 - self.p1)).clamp(0.0, 1.0),
        }
    }

    /// Map a standard-normal draw to this marginal.
    #[inline]
    pub fn from_standard_scalar(&self, u: f64) -> f64 {
        match self.kind {
            MarginalKind::Gaussian => self.p1 + self.p2 * u,
            MarginalKind::Lognormal => (self.p1 + self.p2 * u).exp(),
            MarginalKind::Uniform => self.p1 + (self.p2 - self.p1) * norm_cdf(u),
        }
    }

    pub fn to_standard_scalar(&self, x: f64) -> Option<f64> {
        if !self.in_support(x) {
            return None;
        }
        Some(match self.kind {
            MarginalKind::Gaussian => (x - self.p1) / self.p2,
            MarginalKind::Lognormal => (x.ln() - self.p1) / self.p2,
            MarginalKind::Uniform => norm_ppf((x - self.p1) / (self.p2 - self.p1)),
        })
    }

    /// dx/du of the marginal transform at standard-normal coordinate `u`.
    pub fn jacobian_scalar(&self, u: f64) -> f64 {
        match self.kind {
            MarginalKind::Gaussian => self.p2,
            MarginalKind::Lognormal => self.p2 * (self.p1 + self.p2 * u).exp(),
            MarginalKind::Uniform => (self.p2 - self.p1) * norm_pdf(u),
        }
    }

    #[inline]
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            MarginalKind::Uniform => self.p1 + (self.p2 - self.p1) * rng.random::<f64>(),
            MarginalKind::Gaussian => {
                let z: f64 = rng.sample(StandardNormal);
                self.p1 + self.p2 * z
            }
            MarginalKind::Lognormal => {
                let z: f64 = rng.sample(StandardNormal);
                (self.p1 + self.p2 * z).exp()
            }
        }
    }
}

/// Lognormal marginal with the requested mean and coefficient of variation.
pub fn lognormal_from_mean_cov(mean: f64, cov: f64) -> Result<MarginalSpec> {
    if !(mean > 0.0 && mean.is_finite()) || !(cov > 0.0 && cov.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "lognormal needs mean > 0 and cov > 0, got mean={mean}, cov={cov}"
        )));
    }
    let s2 = (cov * cov).ln_1p();
    MarginalSpec::lognormal(mean.ln() - 0.5 * s2, s2.sqrt())
}

/// Joint distribution of independent inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomVectorSpec {
    marginals: Vec<MarginalSpec>,
}

impl RandomVectorSpec {
    pub fn new(marginals: Vec<MarginalSpec>) -> Result<Self> {
        if marginals.is_empty() {
            return Err(Error::InvalidParameter(
                "random vector needs at least one marginal".into(),
            ));
        }
        for m in &marginals {
            m.validate()?;
        }
        Ok(RandomVectorSpec { marginals })
    }

    pub fn iid(marginal: MarginalSpec, dim: usize) -> Result<Self> {
        Self::new(vec![marginal; dim])
    }

    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    pub fn marginals(&self) -> &[MarginalSpec] {
        &self.marginals
    }

    pub fn means(&self) -> Vec<f64> {
        self.marginals.iter().map(MarginalSpec::mean).collect()
    }

    pub fn stds(&self) -> Vec<f64> {
        self.marginals.iter().map(MarginalSpec::std).collect()
    }

    pub fn medians(&self) -> Vec<f64> {
        self.marginals.iter().map(MarginalSpec::median).collect()
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "random vector",
                expected: self.dim(),
                got: len,
            });
        }
        Ok(())
    }

    pub fn to_standard(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x.len())?;
        x.iter()
            .zip(&self.marginals)
            .enumerate()
            .map(|(index, (&v, m))| {
                m.to_standard_scalar(v)
                    .ok_or(Error::Domain { index, value: v })
            })
            .collect()
    }

    pub fn from_standard(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u.len())?;
        Ok(u.iter()
            .zip(&self.marginals)
            .map(|(&v, m)| m.from_standard_scalar(v))
            .collect())
    }

    /// Diagonal of dx/du at `u`.
    pub fn jacobian_diag(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u.len())?;
        Ok(u.iter()
            .zip(&self.marginals)
            .map(|(&v, m)| m.jacobian_scalar(v))
            .collect())
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, n: usize, out: &mut SampleMatrix) {
        out.reset(n, self.dim());
        for row in out.data.chunks_exact_mut(self.dim()) {
            for (v, m) in row.iter_mut().zip(&self.marginals) {
                *v = m.draw(rng);
            }
        }
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> SampleMatrix {
        let mut out = SampleMatrix::zeros(0, self.dim());
        self.sample_into(rng, n, &mut out);
        out
    }
}

/// Row-major `n × D` matrix of realizations in natural units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl SampleMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        SampleMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    context: "sample rows",
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(SampleMatrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    fn reset(&mut self, rows: usize, cols: usize) {
        self.rows = rows;
        self.cols = cols;
        self.data.resize(rows * cols, 0.0);
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if self.rows > 0 && row.len() != self.cols {
            return Err(Error::DimensionMismatch {
                context: "sample row",
                expected: self.cols,
                got: row.len(),
            });
        }
        self.cols = row.len();
        self.data.extend_from_slice(row);
        self.rows += 1;
        Ok(())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Independent random streams, one per purpose.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    /// Plain `sample` calls.
    Sample,
    /// Initial design of experiments.
    InitialDoe,
    /// Training candidates regenerated at a learning iteration.
    Candidates { iteration: u64 },
    /// Fixed-size block of the Monte Carlo population; shared by crude MCS
    /// and the surrogate estimator so both see the same points.
    Population { block: u64 },
}

impl Stream {
    fn id(self) -> u64 {
        const TAG: u32 = 56;
        match self {
            Stream::Sample => 1 << TAG,
            Stream::InitialDoe => 2 << TAG,
            Stream::Candidates { iteration } => (3 << TAG) | (iteration & ((1 << TAG) - 1)),
            Stream::Population { block } => (4 << TAG) | (block & ((1 << TAG) - 1)),
        }
    }
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}

/// `n` i.i.d. realizations of `spec`, bit-reproducible for a fixed seed.
pub fn sample(spec: &RandomVectorSpec, n: usize, seed: u64) -> Result<SampleMatrix> {
    if n == 0 {
        return Err(Error::InvalidParameter("sample size must be >= 1".into()));
    }
    Ok(spec.sample_with(&mut stream_rng(seed, Stream::Sample), n))
}

/// Rows per population block. The population of size N is the
/// concatenation of blocks `0..ceil(N / POPULATION_BLOCK)`, truncated.
pub const POPULATION_BLOCK: usize = 10_000;

/// Regenerates one block of the Monte Carlo population into `out`.
pub fn population_block(
    spec: &RandomVectorSpec,
    seed: u64,
    block: usize,
    total: usize,
    out: &mut SampleMatrix,
) -> usize {
    let start = block * POPULATION_BLOCK;
    let rows = POPULATION_BLOCK.min(total.saturating_sub(start));
    let mut rng = stream_rng(seed, Stream::Population { block: block as u64 });
    spec.sample_into(&mut rng, rows, out);
    rows
}

pub fn population_blocks(total: usize) -> usize {
    total.div_ceil(POPULATION_BLOCK)
}
