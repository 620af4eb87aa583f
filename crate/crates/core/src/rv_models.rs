//! Centered random sources: scalar laws with their Kramer windows, closed-form
//! moment generating functions where they exist, vector sources, and seeded
//! sharded sampling.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::log_sum_exp;

/// Draws per Monte Carlo shard. Shard `i` is seeded with `seed + i`, so a
/// sample depends only on `(source, n, seed)` and never on the thread count.
pub const SHARD_SIZE: usize = 1 << 16;

const CENTER_TOL: f64 = 1e-12;

/// The law of a scalar source.
#[derive(Debug, Clone, PartialEq)]
pub enum SourceKind {
    Gaussian { sigma: f64 },
    Rademacher,
    UniformCentered { halfwidth: f64 },
    /// Laplace law with density `rate/2 · exp(-rate |x|)`.
    TwoSidedExponential { rate: f64 },
    /// Symmetric law with `P(|X| > t) = exp(-c1 t^d)`, `d > 1`.
    WeibullSymmetric { d: f64, c1: f64 },
    FiniteAtoms { points: Vec<f64>, weights: Vec<f64> },
    Empirical { samples: Vec<f64> },
}

/// A centered real random variable satisfying the Kramer condition.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomSource {
    kind: SourceKind,
    shift: f64,
}

/// The open interval `(-lambda0, lambda0)` on which the MGF is finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KramerWindow {
    pub lambda0: f64,
    pub finite: bool,
    /// Set for empirical sources: a finite sample has an everywhere finite
    /// MGF, which says nothing about the law it was drawn from.
    pub formal: bool,
}

impl KramerWindow {
    pub fn infinite() -> Self {
        KramerWindow { lambda0: f64::INFINITY, finite: false, formal: false }
    }

    pub fn bounded(lambda0: f64) -> Result<Self> {
        if !(lambda0 > 0.0) {
            return Err(Error::Invalid(format!(
                "Kramer window half-width must be positive, got {lambda0}"
            )));
        }
        if lambda0.is_infinite() {
            return Ok(Self::infinite());
        }
        Ok(KramerWindow { lambda0, finite: true, formal: false })
    }

    pub fn contains(&self, lambda: f64) -> bool {
        lambda.abs() < self.lambda0
    }

    pub fn check(&self, lambda: f64) -> Result<()> {
        if self.contains(lambda) {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "lambda = {lambda} lies outside the Kramer window (-{0}, {0})",
                self.lambda0
            )))
        }
    }

    /// Intersection of two windows.
    pub fn meet(&self, other: &KramerWindow) -> KramerWindow {
        if self.lambda0 <= other.lambda0 {
            *self
        } else {
            *other
        }
    }
}

/// JSON form of a scalar source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceSpec {
    Gaussian {
        sigma: f64,
    },
    Rademacher,
    UniformCentered {
        halfwidth: f64,
    },
    TwoSidedExponential {
        rate: f64,
    },
    WeibullSymmetric {
        d: f64,
        c1: f64,
    },
    FiniteAtoms {
        points: Vec<f64>,
        weights: Vec<f64>,
    },
    Empirical {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        samples: Option<Vec<f64>>,
    },
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Invalid(format!("{name} must be a positive finite number, got {v}")))
    }
}

impl RandomSource {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        positive("sigma", sigma)?;
        Ok(Self::plain(SourceKind::Gaussian { sigma }))
    }

    pub fn rademacher() -> Self {
        Self::plain(SourceKind::Rademacher)
    }

    pub fn uniform_centered(halfwidth: f64) -> Result<Self> {
        positive("halfwidth", halfwidth)?;
        Ok(Self::plain(SourceKind::UniformCentered { halfwidth }))
    }

    pub fn two_sided_exponential(rate: f64) -> Result<Self> {
        positive("rate", rate)?;
        Ok(Self::plain(SourceKind::TwoSidedExponential { rate }))
    }

    pub fn weibull_symmetric(d: f64, c1: f64) -> Result<Self> {
        if !(d.is_finite() && d > 1.0) {
            return Err(Error::Invalid(format!(
                "weibull_symmetric needs d > 1 for a Kramer window, got d = {d}"
            )));
        }
        positive("c1", c1)?;
        Ok(Self::plain(SourceKind::WeibullSymmetric { d, c1 }))
    }

    /// Atoms with positive weights summing to one. A nonzero mean is removed and
    /// recorded as [`RandomSource::shift`].
    pub fn finite_atoms(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::Invalid(
                "finite_atoms needs equally many points and weights (at least one)".into(),
            ));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::Invalid("finite_atoms points must be finite".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Invalid("finite_atoms weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > CENTER_TOL {
            return Err(Error::Invalid(format!(
                "finite_atoms weights must sum to 1 within 1e-12, got {total}"
            )));
        }
        let mean: f64 = points.iter().zip(&weights).map(|(p, w)| p * w).sum();
        let (points, shift) = recenter(points, mean);
        Ok(RandomSource { kind: SourceKind::FiniteAtoms { points, weights }, shift })
    }

    /// The empirical law of `samples`, recentered to zero mean.
    pub fn empirical(samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Invalid("empirical source needs at least one sample".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::Invalid("empirical samples must be finite".into()));
        }
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let (samples, shift) = recenter(samples, mean);
        Ok(RandomSource { kind: SourceKind::Empirical { samples }, shift })
    }

    pub fn from_spec(spec: &SourceSpec, base_dir: Option<&Path>) -> Result<Self> {
        match spec {
            SourceSpec::Gaussian { sigma } => Self::gaussian(*sigma),
            SourceSpec::Rademacher => Ok(Self::rademacher()),
            SourceSpec::UniformCentered { halfwidth } => Self::uniform_centered(*halfwidth),
            SourceSpec::TwoSidedExponential { rate } => Self::two_sided_exponential(*rate),
            SourceSpec::WeibullSymmetric { d, c1 } => Self::weibull_symmetric(*d, *c1),
            SourceSpec::FiniteAtoms { points, weights } => {
                Self::finite_atoms(points.clone(), weights.clone())
            }
            SourceSpec::Empirical { path, samples } => match (path, samples) {
                (Some(path), None) => {
                    let path = match base_dir {
                        Some(dir) if path.is_relative() => dir.join(path),
                        _ => path.clone(),
                    };
                    Self::empirical(read_empirical_csv(&path)?)
                }
                (None, Some(samples)) => Self::empirical(samples.clone()),
                _ => Err(Error::Invalid(
                    "empirical source needs exactly one of \"path\" or \"samples\"".into(),
                )),
            },
        }
    }

    pub fn from_json(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let spec: SourceSpec = serde_json::from_str(text)?;
        Self::from_spec(&spec, base_dir)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text, path.parent())
    }

    /// JSON form; empirical data is inlined.
    pub fn to_spec(&self) -> SourceSpec {
        match &self.kind {
            SourceKind::Gaussian { sigma } => SourceSpec::Gaussian { sigma: *sigma },
            SourceKind::Rademacher => SourceSpec::Rademacher,
            SourceKind::UniformCentered { halfwidth } => {
                SourceSpec::UniformCentered { halfwidth: *halfwidth }
            }
            SourceKind::TwoSidedExponential { rate } => {
                SourceSpec::TwoSidedExponential { rate: *rate }
            }
            SourceKind::WeibullSymmetric { d, c1 } => {
                SourceSpec::WeibullSymmetric { d: *d, c1: *c1 }
            }
            SourceKind::FiniteAtoms { points, weights } => SourceSpec::FiniteAtoms {
                points: points.clone(),
                weights: weights.clone(),
            },
            SourceKind::Empirical { samples } => {
                SourceSpec::Empirical { path: None, samples: Some(samples.clone()) }
            }
        }
    }

    fn plain(kind: SourceKind) -> Self {
        RandomSource { kind, shift: 0.0 }
    }

    pub fn kind(&self) -> &SourceKind {
        &self.kind
    }

    /// Mean removed at construction (zero for the parametric kinds).
    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            SourceKind::Gaussian { .. } => "gaussian",
            SourceKind::Rademacher => "rademacher",
            SourceKind::UniformCentered { .. } => "uniform_centered",
            SourceKind::TwoSidedExponential { .. } => "two_sided_exponential",
            SourceKind::WeibullSymmetric { .. } => "weibull_symmetric",
            SourceKind::FiniteAtoms { .. } => "finite_atoms",
            SourceKind::Empirical { .. } => "empirical",
        }
    }

    pub fn kramer_window(&self) -> KramerWindow {
        match &self.kind {
            SourceKind::TwoSidedExponential { rate } => {
                KramerWindow { lambda0: *rate, finite: true, formal: false }
            }
            SourceKind::Empirical { .. } => {
                KramerWindow { lambda0: f64::INFINITY, finite: false, formal: true }
            }
            _ => KramerWindow::infinite(),
        }
    }

    pub fn has_closed_form_mgf(&self) -> bool {
        !matches!(
            self.kind,
            SourceKind::WeibullSymmetric { .. } | SourceKind::Empirical { .. }
        )
    }

    /// Whether the law is invariant under `x -> -x`.
    pub fn is_symmetric(&self) -> bool {
        match &self.kind {
            SourceKind::FiniteAtoms { points, weights } => mirrored(points, weights),
            SourceKind::Empirical { samples } => {
                let w = vec![1.0; samples.len()];
                mirrored(samples, &w)
            }
            _ => true,
        }
    }

    /// The law of `c·ξ` for `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        positive("scale factor", c)?;
        let kind = match &self.kind {
            SourceKind::Gaussian { sigma } => SourceKind::Gaussian { sigma: sigma * c },
            SourceKind::Rademacher => {
                return Self::finite_atoms(vec![-c, c], vec![0.5, 0.5]);
            }
            SourceKind::UniformCentered { halfwidth } => {
                SourceKind::UniformCentered { halfwidth: halfwidth * c }
            }
            SourceKind::TwoSidedExponential { rate } => {
                SourceKind::TwoSidedExponential { rate: rate / c }
            }
            SourceKind::WeibullSymmetric { d, c1 } => {
                SourceKind::WeibullSymmetric { d: *d, c1: c1 / c.powf(*d) }
            }
            SourceKind::FiniteAtoms { points, weights } => SourceKind::FiniteAtoms {
                points: points.iter().map(|p| p * c).collect(),
                weights: weights.clone(),
            },
            SourceKind::Empirical { samples } => SourceKind::Empirical {
                samples: samples.iter().map(|s| s * c).collect(),
            },
        };
        Ok(RandomSource { kind, shift: self.shift * c })
    }

    /// Closed-form `ln G(λ)`; `None` for kinds without one.
    pub fn exact_log_mgf(&self, lambda: f64) -> Result<Option<f64>> {
        self.kramer_window().check(lambda)?;
        if !self.has_closed_form_mgf() {
            return Ok(None);
        }
        if lambda == 0.0 {
            return Ok(Some(0.0));
        }
        let value = match &self.kind {
            SourceKind::Gaussian { sigma } => 0.5 * sigma * sigma * lambda * lambda,
            SourceKind::Rademacher => log_cosh(lambda),
            SourceKind::UniformCentered { halfwidth } => log_sinhc(halfwidth * lambda),
            SourceKind::TwoSidedExponential { rate } => {
                let r = lambda / rate;
                -(-r * r).ln_1p()
            }
            SourceKind::FiniteAtoms { points, weights } => {
                let terms: Vec<f64> = points
                    .iter()
                    .zip(weights)
                    .map(|(p, w)| w.ln() + lambda * p)
                    .collect();
                log_sum_exp(&terms)
            }
            SourceKind::WeibullSymmetric { .. } | SourceKind::Empirical { .. } => unreachable!(),
        };
        Ok(Some(value))
    }

    /// Closed-form MGF `G(λ) = E exp(λξ)`; `None` for weibull_symmetric and
    /// empirical sources.
    pub fn exact_mgf(&self, lambda: f64) -> Result<Option<f64>> {
        Ok(self.exact_log_mgf(lambda)?.map(f64::exp))
    }

    /// Log-density for the absolutely continuous kinds (`-inf` off the support).
    pub fn log_density(&self, x: f64) -> Option<f64> {
        let v = match &self.kind {
            SourceKind::Gaussian { sigma } => {
                let z = x / sigma;
                -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
            SourceKind::UniformCentered { halfwidth } => {
                if x.abs() <= *halfwidth {
                    -(2.0 * halfwidth).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            SourceKind::TwoSidedExponential { rate } => (0.5 * rate).ln() - rate * x.abs(),
            SourceKind::WeibullSymmetric { d, c1 } => {
                let t = x.abs();
                if t == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    (0.5 * c1 * d).ln() + (d - 1.0) * t.ln() - c1 * t.powf(*d)
                }
            }
            _ => return None,
        };
        Some(v)
    }

    /// Half-width of a bounded support, if any.
    pub fn support_bound(&self) -> Option<f64> {
        match &self.kind {
            SourceKind::UniformCentered { halfwidth } => Some(*halfwidth),
            SourceKind::Rademacher => Some(1.0),
            SourceKind::FiniteAtoms { points, .. } => {
                Some(points.iter().fold(0.0f64, |m, p| m.max(p.abs())))
            }
            SourceKind::Empirical { samples } => {
                Some(samples.iter().fold(0.0f64, |m, p| m.max(p.abs())))
            }
            _ => None,
        }
    }

    /// A length scale of the law (used to size quadrature brackets).
    pub fn natural_scale(&self) -> f64 {
        match &self.kind {
            SourceKind::Gaussian { sigma } => *sigma,
            SourceKind::Rademacher => 1.0,
            SourceKind::UniformCentered { halfwidth } => *halfwidth,
            SourceKind::TwoSidedExponential { rate } => 1.0 / rate,
            SourceKind::WeibullSymmetric { d, c1 } => c1.powf(-1.0 / d),
            SourceKind::FiniteAtoms { .. } | SourceKind::Empirical { .. } => {
                self.support_bound().unwrap_or(1.0).max(f64::MIN_POSITIVE)
            }
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng, cumulative: &[f64]) -> f64 {
        match &self.kind {
            SourceKind::Gaussian { sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                sigma * z
            }
            SourceKind::Rademacher => {
                if rng.gen::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            SourceKind::UniformCentered { halfwidth } => {
                halfwidth * (2.0 * rng.gen::<f64>() - 1.0)
            }
            SourceKind::TwoSidedExponential { rate } => {
                let u = 1.0 - rng.gen::<f64>();
                let t = -u.ln() / rate;
                if rng.gen::<bool>() {
                    t
                } else {
                    -t
                }
            }
            SourceKind::WeibullSymmetric { d, c1 } => {
                // inverse of P(|X| > t) = exp(-c1 t^d)
                let u = 1.0 - rng.gen::<f64>();
                let t = (-u.ln() / c1).powf(1.0 / d);
                if rng.gen::<bool>() {
                    t
                } else {
                    -t
                }
            }
            SourceKind::FiniteAtoms { points, .. } => {
                let u = rng.gen::<f64>();
                let idx = cumulative.partition_point(|c| *c <= u).min(points.len() - 1);
                points[idx]
            }
            SourceKind::Empirical { samples } => samples[rng.gen_range(0..samples.len())],
        }
    }

    fn cumulative_weights(&self) -> Vec<f64> {
        match &self.kind {
            SourceKind::FiniteAtoms { weights, .. } => weights
                .iter()
                .scan(0.0, |acc, w| {
                    *acc += w;
                    Some(*acc)
                })
                .collect(),
            _ => Vec::new(),
        }
    }

    /// `n` seeded draws. Empirical sources are resampled with replacement.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::Invalid("sample size must be at least 1".into()));
        }
        let cumulative = self.cumulative_weights();
        let shards = n.div_ceil(SHARD_SIZE);
        let chunks: Vec<Vec<f64>> = (0..shards)
            .into_par_iter()
            .map(|shard| {
                let len = SHARD_SIZE.min(n - shard * SHARD_SIZE);
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(shard as u64));
                (0..len).map(|_| self.draw(&mut rng, &cumulative)).collect()
            })
            .collect();
        Ok(chunks.concat())
    }
}

fn recenter(mut values: Vec<f64>, mean: f64) -> (Vec<f64>, f64) {
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if mean.abs() > CENTER_TOL * scale {
        for v in &mut values {
            *v -= mean;
        }
        (values, mean)
    } else {
        (values, 0.0)
    }
}

fn mirrored(points: &[f64], weights: &[f64]) -> bool {
    let mut pairs: Vec<(f64, f64)> = points.iter().copied().zip(weights.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let scale = pairs.iter().fold(0.0f64, |m, p| m.max(p.0.abs())).max(1.0);
    let n = pairs.len();
    (0..n).all(|i| {
        let (a, b) = (pairs[i], pairs[n - 1 - i]);
        (a.0 + b.0).abs() <= 1e-12 * scale && (a.1 - b.1).abs() <= 1e-12
    })
}

/// `ln cosh x` without overflow.
pub fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// `ln(sinh x / x)`, with the origin handled by its series.
pub fn log_sinhc(x: f64) -> f64 {
    let a = x.abs();
    if a < 1e-3 {
        let a2 = a * a;
        a2 / 6.0 - a2 * a2 / 180.0 + a2 * a2 * a2 / 2835.0
    } else {
        a + (-(-2.0 * a).exp()).ln_1p() - std::f64::consts::LN_2 - a.ln()
    }
}

/// Reads the empirical CSV format: UTF-8, one decimal literal per line, no
/// header. Blank lines are skipped.
pub fn read_empirical_csv(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    parse_empirical_csv(&text)
}

pub fn parse_empirical_csv(text: &str) -> Result<Vec<f64>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse::<f64>().map_err(|_| {
                Error::Parse(format!("line {}: {:?} is not a decimal number", i + 1, l.trim()))
            })
        })
        .collect()
}

/// A centered random vector of dimension `l >= 2`.
#[derive(Debug, Clone)]
pub struct VectorSource {
    kind: VectorKind,
}

#[derive(Debug, Clone)]
pub enum VectorKind {
    /// Gaussian with covariance `B`, so `ln E exp(λ·ξ) = ½(Bλ, λ)` exactly.
    SubgaussianMatrix { b: DMatrix<f64>, cholesky: DMatrix<f64> },
    /// Independent scalar components.
    ProductOf(Vec<RandomSource>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VectorSpec {
    SubgaussianMatrix { b: Vec<Vec<f64>> },
    ProductOf { components: Vec<SourceSpec> },
}

impl VectorSource {
    pub fn subgaussian_matrix(b: DMatrix<f64>) -> Result<Self> {
        let l = b.nrows();
        if l < 2 || b.ncols() != l {
            return Err(Error::Invalid(format!(
                "subgaussian matrix must be square of order >= 2, got {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("matrix entries must be finite".into()));
        }
        for i in 0..l {
            for j in 0..i {
                if (b[(i, j)] - b[(j, i)]).abs() > 1e-12 {
                    return Err(Error::Invalid(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let min_eig = b.clone().symmetric_eigen().eigenvalues.min();
        if !(min_eig > 0.0) {
            return Err(Error::Invalid(format!(
                "matrix is not positive definite (smallest eigenvalue {min_eig:e})"
            )));
        }
        let cholesky = b
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Invalid("Cholesky factorisation failed".into()))?
            .l();
        Ok(VectorSource { kind: VectorKind::SubgaussianMatrix { b, cholesky } })
    }

    pub fn product_of(components: Vec<RandomSource>) -> Result<Self> {
        if components.len() < 2 {
            return Err(Error::Invalid(
                "a vector source needs at least two components".into(),
            ));
        }
        Ok(VectorSource { kind: VectorKind::ProductOf(components) })
    }

    pub fn from_spec(spec: &VectorSpec, base_dir: Option<&Path>) -> Result<Self> {
        match spec {
            VectorSpec::SubgaussianMatrix { b } => {
                let l = b.len();
                if b.iter().any(|row| row.len() != l) {
                    return Err(Error::Invalid("matrix rows must all have length l".into()));
                }
                let flat: Vec<f64> = b.iter().flatten().copied().collect();
                Self::subgaussian_matrix(DMatrix::from_row_slice(l, l, &flat))
            }
            VectorSpec::ProductOf { components } => Self::product_of(
                components
                    .iter()
                    .map(|c| RandomSource::from_spec(c, base_dir))
                    .collect::<Result<_>>()?,
            ),
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let spec: VectorSpec = serde_json::from_str(&text)?;
        Self::from_spec(&spec, path.parent())
    }

    pub fn kind(&self) -> &VectorKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            VectorKind::SubgaussianMatrix { b, .. } => b.nrows(),
            VectorKind::ProductOf(c) => c.len(),
        }
    }

    /// Radius `δ0` of the ball on which the MGF is known finite.
    pub fn window_radius(&self) -> f64 {
        match &self.kind {
            VectorKind::SubgaussianMatrix { .. } => f64::INFINITY,
            VectorKind::ProductOf(c) => c
                .iter()
                .map(|s| s.kramer_window().lambda0)
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// `n` seeded draws, row-major (`n × dim`).
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::Invalid("sample size must be at least 1".into()));
        }
        let l = self.dim();
        let cumulative: Vec<Vec<f64>> = match &self.kind {
            VectorKind::ProductOf(c) => c.iter().map(|s| s.cumulative_weights()).collect(),
            VectorKind::SubgaussianMatrix { .. } => Vec::new(),
        };
        let shards = n.div_ceil(SHARD_SIZE);
        let chunks: Vec<Vec<f64>> = (0..shards)
            .into_par_iter()
            .map(|shard| {
                let len = SHARD_SIZE.min(n - shard * SHARD_SIZE);
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(shard as u64));
                let mut out = Vec::with_capacity(len * l);
                for _ in 0..len {
                    match &self.kind {
                        VectorKind::SubgaussianMatrix { cholesky, .. } => {
                            let z = DVector::from_fn(l, |_, _| rng.sample::<f64, _>(StandardNormal));
                            out.extend((cholesky * z).iter());
                        }
                        VectorKind::ProductOf(c) => {
                            for (s, cum) in c.iter().zip(&cumulative) {
                                out.push(s.draw(&mut rng, cum));
                            }
                        }
                    }
                }
                out
            })
            .collect();
        Ok(chunks.concat())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kramer_windows() {
        assert_eq!(RandomSource::gaussian(1.0).unwrap().kramer_window().lambda0, f64::INFINITY);
        let w = RandomSource::two_sided_exponential(1.0).unwrap().kramer_window();
        assert_eq!(w.lambda0, 1.0);
        assert!(w.finite);
        let wb = RandomSource::weibull_symmetric(2.0, 0.5).unwrap().kramer_window();
        assert!(wb.lambda0.is_infinite());
        let we = RandomSource::empirical(vec![1.0, -1.0]).unwrap().kramer_window();
        assert!(we.lambda0.is_infinite() && we.formal);
    }

    #[test]
    fn closed_form_mgfs() {
        let g = RandomSource::gaussian(1.0).unwrap();
        assert!((g.exact_mgf(1.0).unwrap().unwrap() - 1.648_721_270_7).abs() < 1e-10);
        let r = RandomSource::rademacher();
        assert!((r.exact_mgf(1.0).unwrap().unwrap() - 1.543_080_634_8).abs() < 1e-10);
        for s in [g, r, RandomSource::uniform_centered(2.0).unwrap()] {
            assert_eq!(s.exact_mgf(0.0).unwrap(), Some(1.0));
        }
        let w = RandomSource::weibull_symmetric(2.0, 0.5).unwrap();
        assert_eq!(w.exact_mgf(0.3).unwrap(), None);
        let e = RandomSource::empirical(vec![1.0, -1.0]).unwrap();
        assert_eq!(e.exact_mgf(0.3).unwrap(), None);
    }

    #[test]
    fn laplace_mgf_domain_error_at_window_edge() {
        let s = RandomSource::two_sided_exponential(1.0).unwrap();
        assert!(matches!(s.exact_mgf(1.0), Err(Error::Domain(_))));
        assert!(matches!(s.exact_mgf(-1.5), Err(Error::Domain(_))));
        let v = s.exact_mgf(0.5).unwrap().unwrap();
        assert!((v - 1.0 / (1.0 - 0.25)).abs() < 1e-14);
    }

    #[test]
    fn uniform_mgf_series_and_far_branch_agree() {
        // below the branch point, compare with a longer series
        for x in [1e-4f64, 5e-4, 9.99e-4] {
            let x2 = x * x;
            let series = x2 / 6.0 - x2 * x2 / 180.0 + x2 * x2 * x2 / 2835.0 - x2.powi(4) / 37800.0;
            assert!((log_sinhc(x) - series).abs() < 1e-15 * series, "{x}");
        }
        for x in [1.001e-3f64, 0.5, 3.0, 40.0] {
            let direct = (x.sinh() / x).ln();
            assert!((log_sinhc(x) - direct).abs() < 1e-8 * direct.abs(), "{x}");
        }
        assert!((log_cosh(800.0) - (800.0 - std::f64::consts::LN_2)).abs() < 1e-12);
    }

    #[test]
    fn construction_rejects_bad_parameters() {
        assert!(RandomSource::weibull_symmetric(1.0, 1.0).is_err());
        assert!(RandomSource::weibull_symmetric(0.5, 1.0).is_err());
        assert!(RandomSource::gaussian(0.0).is_err());
        assert!(RandomSource::finite_atoms(vec![1.0, 2.0], vec![0.5, 0.4]).is_err());
        assert!(RandomSource::finite_atoms(vec![1.0, 2.0], vec![1.0, 0.0]).is_err());
        assert!(RandomSource::finite_atoms(vec![1.0], vec![1.0, 0.0]).is_err());
        assert!(RandomSource::empirical(vec![]).is_err());
    }

    #[test]
    fn atoms_and_data_are_recentered() {
        let s = RandomSource::finite_atoms(vec![0.0, 3.0], vec![0.5, 0.5]).unwrap();
        assert_eq!(s.shift(), 1.5);
        match s.kind() {
            SourceKind::FiniteAtoms { points, .. } => assert_eq!(points, &vec![-1.5, 1.5]),
            _ => unreachable!(),
        }
        let centered =
            RandomSource::finite_atoms(vec![-1.0, 2.0], vec![2.0 / 3.0, 1.0 / 3.0]).unwrap();
        assert_eq!(centered.shift(), 0.0);
        let e = RandomSource::empirical(vec![1.0, 2.0, 6.0]).unwrap();
        assert_eq!(e.shift(), 3.0);
    }

    #[test]
    fn symmetry_detection() {
        assert!(RandomSource::rademacher().is_symmetric());
        assert!(RandomSource::finite_atoms(vec![-2.0, 0.0, 2.0], vec![0.25, 0.5, 0.25])
            .unwrap()
            .is_symmetric());
        assert!(!RandomSource::finite_atoms(vec![-1.0, 2.0], vec![2.0 / 3.0, 1.0 / 3.0])
            .unwrap()
            .is_symmetric());
    }

    #[test]
    fn rademacher_draws_are_signs() {
        let x = RandomSource::rademacher().sample(4, 7).unwrap();
        assert_eq!(x.len(), 4);
        assert!(x.iter().all(|v| *v == 1.0 || *v == -1.0));
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let s = RandomSource::weibull_symmetric(1.5, 1.0).unwrap();
        let a = s.sample(200_000, 11).unwrap();
        let b = s.sample(200_000, 11).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        let c = s.sample(200_000, 12).unwrap();
        assert_ne!(a, c);
        assert!(s.sample(0, 1).is_err());
    }

    #[test]
    fn source_json_forms() {
        let g = RandomSource::from_json(r#"{"kind": "gaussian", "sigma": 1.0}"#, None).unwrap();
        assert_eq!(g, RandomSource::gaussian(1.0).unwrap());
        let a = RandomSource::from_json(
            r#"{"kind": "finite_atoms", "points": [-1, 2], "weights": [0.6666666666666666, 0.3333333333333333]}"#,
            None,
        );
        assert!(a.is_ok());
        let r = RandomSource::from_json(r#"{"kind": "rademacher"}"#, None).unwrap();
        assert_eq!(r.name(), "rademacher");
        assert!(RandomSource::from_json(r#"{"kind": "cauchy"}"#, None).is_err());
        assert!(RandomSource::from_json(r#"{"kind": "empirical"}"#, None).is_err());
    }

    #[test]
    fn empirical_csv_parsing() {
        assert_eq!(parse_empirical_csv("1.5\n-2\n\n0.5\n").unwrap(), vec![1.5, -2.0, 0.5]);
        assert!(parse_empirical_csv("1.5\nabc\n").is_err());
    }

    #[test]
    fn vector_sources_validate_matrices() {
        let ok = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert!(VectorSource::subgaussian_matrix(ok).is_ok());
        let asym = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.5, 2.0]);
        assert!(VectorSource::subgaussian_matrix(asym).is_err());
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(VectorSource::subgaussian_matrix(indefinite).is_err());
        assert!(VectorSource::subgaussian_matrix(DMatrix::identity(1, 1)).is_err());
        assert!(VectorSource::product_of(vec![RandomSource::rademacher()]).is_err());
    }

    #[test]
    fn vector_sample_covariance_matches_matrix() {
        let b = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let v = VectorSource::subgaussian_matrix(b).unwrap();
        let x = v.sample(200_000, 3).unwrap();
        let n = (x.len() / 2) as f64;
        let c01 = x.chunks_exact(2).map(|r| r[0] * r[1]).sum::<f64>() / n;
        let c00 = x.chunks_exact(2).map(|r| r[0] * r[0]).sum::<f64>() / n;
        assert!((c01 - 1.0).abs() < 0.03, "{c01}");
        assert!((c00 - 2.0).abs() < 0.04, "{c00}");
    }
}
