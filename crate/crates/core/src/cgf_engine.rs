//! Evaluation of the MGF `G`, the cumulant generating function `Δ = ln G`, the
//! ratio `Φ(λ) = Δ(λ)/λ`, the exponentially tilted measure `dW ∝ e^{λξ} dP`
//! with its expectation `H` and variance `War`, and the multivariate
//! `Q(λ) = E exp(λ·ξ)` with `V(λ) = ln Q(λ)/|λ|`.
//!
//! The second derivative of `Δ` is computed as the tilted variance of `ξ`,
//! `Δ''(λ) = War(ξ)`, which is nonnegative by construction. Finite differences
//! of `Δ` are used only as an independent check.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{check_strictly_increasing, golden_section_max, integrate_with, log_sum_exp};
use crate::rv_models::{RandomSource, SourceKind, VectorKind, VectorSource};

/// Highest polynomial degree accepted for a tilted observable `τ`.
pub const MAX_TAU_DEGREE: usize = 8;
const MAX_MOMENT: usize = 2 * MAX_TAU_DEGREE;

/// How `G(λ)` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    /// Adaptive Gauss-Kronrod integration against the density.
    Quadrature,
    /// Log-mean-exp over `n` seeded draws.
    MonteCarlo { n: usize, seed: u64 },
    /// Log-mean-exp over the stored data of an empirical source.
    Empirical,
}

impl Method {
    /// Closed form when available, quadrature for weibull_symmetric, the data
    /// itself for empirical sources.
    pub fn auto(source: &RandomSource) -> Method {
        match source.kind() {
            SourceKind::WeibullSymmetric { .. } => Method::Quadrature,
            SourceKind::Empirical { .. } => Method::Empirical,
            _ => Method::ClosedForm,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Method::ClosedForm => "closed_form",
            Method::Quadrature => "quadrature",
            Method::MonteCarlo { .. } => "monte_carlo",
            Method::Empirical => "empirical",
        }
    }
}

/// A resolved `λ ↦ ln G(λ)` evaluator. Monte Carlo draws happen once, at
/// construction, so every grid point sees the same sample.
pub struct LogMgf<'a> {
    source: &'a RandomSource,
    method: Method,
    samples: Option<Vec<f64>>,
}

impl<'a> LogMgf<'a> {
    pub fn new(source: &'a RandomSource, method: Method) -> Result<Self> {
        let samples = match (method, source.kind()) {
            (Method::ClosedForm, _) if !source.has_closed_form_mgf() => {
                return Err(Error::Invalid(format!(
                    "no closed-form MGF for {} sources",
                    source.name()
                )))
            }
            (Method::Quadrature, _) if source.log_density(0.0).is_none() => {
                return Err(Error::Invalid(format!(
                    "quadrature needs a density; {} has none",
                    source.name()
                )))
            }
            (Method::MonteCarlo { n, seed }, _) => {
                if n < 1000 {
                    return Err(Error::Invalid(format!(
                        "Monte Carlo evaluation needs n >= 1000, got {n}"
                    )));
                }
                Some(source.sample(n, seed)?)
            }
            (Method::Empirical, SourceKind::Empirical { samples }) => Some(samples.clone()),
            (Method::Empirical, _) => {
                return Err(Error::Invalid("the empirical method needs an empirical source".into()))
            }
            _ => None,
        };
        Ok(LogMgf { source, method, samples })
    }

    pub fn auto(source: &'a RandomSource) -> Result<Self> {
        Self::new(source, Method::auto(source))
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn samples(&self) -> Option<&[f64]> {
        self.samples.as_deref()
    }

    /// `Δ(λ) = ln G(λ)`.
    pub fn eval(&self, lambda: f64) -> Result<f64> {
        self.source.kramer_window().check(lambda)?;
        if lambda == 0.0 {
            return Ok(0.0);
        }
        match self.method {
            Method::ClosedForm => Ok(self
                .source
                .exact_log_mgf(lambda)?
                .expect("closed form checked at construction")),
            Method::Quadrature => TiltedDensity::new(self.source, lambda).log_normalizer(),
            Method::MonteCarlo { .. } | Method::Empirical => {
                let samples = self.samples.as_ref().expect("samples drawn at construction");
                Ok(log_mean_exp(samples, lambda))
            }
        }
    }
}

/// `ln( (1/n) Σ exp(λ x_i) )`, shifted by the largest exponent.
pub fn log_mean_exp(samples: &[f64], lambda: f64) -> f64 {
    let max = samples
        .iter()
        .map(|x| lambda * x)
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = samples.iter().map(|x| (lambda * x - max).exp()).sum();
    max + sum.ln() - (samples.len() as f64).ln()
}

/// `Δ` and `Φ` tabulated on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CgfEvaluation {
    pub lambda_grid: Vec<f64>,
    pub log_mgf: Vec<f64>,
    pub phi_values: Vec<f64>,
    pub method: Method,
}

/// Evaluates `Δ` and `Φ` on `grid`. A grid straddling the origin without
/// containing it gets `0` inserted.
pub fn evaluate_cgf(source: &RandomSource, grid: &[f64], method: Method) -> Result<CgfEvaluation> {
    check_strictly_increasing(grid, "lambda grid")?;
    let window = source.kramer_window();
    if let Some(bad) = grid.iter().find(|l| !window.contains(**l)) {
        return Err(Error::Domain(format!(
            "grid point {bad} lies outside the Kramer window (-{0}, {0})",
            window.lambda0
        )));
    }
    let mut lambda_grid = grid.to_vec();
    let straddles = grid.first().is_some_and(|a| *a < 0.0) && grid.last().is_some_and(|b| *b > 0.0);
    if straddles && !grid.contains(&0.0) {
        let at = lambda_grid.partition_point(|l| *l < 0.0);
        lambda_grid.insert(at, 0.0);
    }
    let evaluator = LogMgf::new(source, method)?;
    let log_mgf: Vec<f64> = lambda_grid
        .par_iter()
        .map(|l| evaluator.eval(*l))
        .collect::<Result<_>>()?;
    let phi_values = lambda_grid
        .iter()
        .zip(&log_mgf)
        .map(|(l, d)| if *l == 0.0 { 0.0 } else { d / l })
        .collect();
    Ok(CgfEvaluation { lambda_grid, log_mgf, phi_values, method })
}

/// Restricts a finite window to `0.99·λ0` by dropping grid points beyond it.
pub fn clip_to_window(source: &RandomSource, grid: &[f64]) -> Vec<f64> {
    let w = source.kramer_window();
    if !w.finite {
        return grid.to_vec();
    }
    let limit = 0.99 * w.lambda0;
    grid.iter().copied().filter(|l| l.abs() <= limit).collect()
}

/// An observable `τ(ξ) = Σ c_k ξ^k` of degree at most [`MAX_TAU_DEGREE`].
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    /// Coefficients in increasing powers of ξ.
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        let mut coeffs = coeffs;
        while coeffs.len() > 1 && coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        if coeffs.len() > MAX_TAU_DEGREE + 1 {
            return Err(Error::Invalid(format!(
                "tilted observables are limited to polynomials of degree <= {MAX_TAU_DEGREE}, got degree {}",
                coeffs.len() - 1
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Invalid("polynomial coefficients must be finite".into()));
        }
        Ok(Polynomial { coeffs })
    }

    pub fn constant(c: f64) -> Self {
        Polynomial { coeffs: vec![c] }
    }

    /// `τ(ξ) = ξ`.
    pub fn identity() -> Self {
        Polynomial { coeffs: vec![0.0, 1.0] }
    }

    pub fn monomial(k: usize) -> Result<Self> {
        let mut c = vec![0.0; k + 1];
        c[k] = 1.0;
        Self::new(c)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    /// Coefficients of the same polynomial in powers of `(ξ - center)`.
    fn shifted(&self, center: f64) -> Vec<f64> {
        let n = self.coeffs.len();
        let mut d = vec![0.0; n];
        for (j, cj) in self.coeffs.iter().enumerate() {
            let mut binom = 1.0;
            let mut pow = 1.0;
            // c_j x^j = c_j Σ_k C(j,k) center^{j-k} (x - center)^k
            let mut powers = vec![1.0; j + 1];
            for slot in powers.iter_mut().skip(1) {
                pow *= center;
                *slot = pow;
            }
            for k in 0..=j {
                if k > 0 {
                    binom = binom * (j - k + 1) as f64 / k as f64;
                }
                d[k] += cj * binom * powers[j - k];
            }
        }
        d
    }
}

/// Which route produced the tilted moments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TiltMethod {
    ClosedForm,
    Quadrature,
    WeightedSample,
}

/// The auxiliary probability measure `dW = e^{λξ} dP / G(λ)`.
///
/// Moments are stored about the tilted mean (`central[k] = H((ξ - H ξ)^k)`)
/// so that variances are not formed by cancelling raw moments.
#[derive(Debug, Clone)]
pub struct TiltedMeasure {
    base: RandomSource,
    lambda: f64,
    log_normalizer: f64,
    mean: f64,
    central: Vec<f64>,
    method: TiltMethod,
}

/// Tilts `source` at `λ` using the default route for its kind.
pub fn tilt(source: &RandomSource, lambda: f64) -> Result<TiltedMeasure> {
    tilt_with(source, lambda, Method::auto(source))
}

/// Tilts `source` at `λ`; for [`Method::MonteCarlo`] the tilted measure is the
/// reweighted empirical law of the draws.
pub fn tilt_with(source: &RandomSource, lambda: f64, method: Method) -> Result<TiltedMeasure> {
    source.kramer_window().check(lambda)?;
    let (log_normalizer, mean, central, tilt_method) = match (source.kind(), method) {
        (_, Method::MonteCarlo { .. }) | (_, Method::Empirical) => {
            let evaluator = LogMgf::new(source, method)?;
            let samples = evaluator.samples().expect("sampled method");
            let w = vec![1.0 / samples.len() as f64; samples.len()];
            let (ln_g, mean, central) = weighted_tilt(samples, &w, lambda);
            (ln_g, mean, central, TiltMethod::WeightedSample)
        }
        (SourceKind::Gaussian { sigma }, Method::ClosedForm) => {
            // N(0, σ²) tilted by λ is N(λσ², σ²).
            let mut central = vec![0.0; MAX_MOMENT + 1];
            central[0] = 1.0;
            for k in (2..=MAX_MOMENT).step_by(2) {
                central[k] = central[k - 2] * (k - 1) as f64 * sigma * sigma;
            }
            (0.5 * sigma * sigma * lambda * lambda, lambda * sigma * sigma, central, TiltMethod::ClosedForm)
        }
        (SourceKind::Rademacher, Method::ClosedForm) => {
            let (ln_g, mean, central) = weighted_tilt(&[-1.0, 1.0], &[0.5, 0.5], lambda);
            (ln_g, mean, central, TiltMethod::ClosedForm)
        }
        (SourceKind::FiniteAtoms { points, weights }, Method::ClosedForm) => {
            let (ln_g, mean, central) = weighted_tilt(points, weights, lambda);
            (ln_g, mean, central, TiltMethod::ClosedForm)
        }
        (_, Method::ClosedForm) | (_, Method::Quadrature) => {
            if method == Method::ClosedForm && !source.has_closed_form_mgf() {
                return Err(Error::Invalid(format!(
                    "no closed-form MGF for {} sources",
                    source.name()
                )));
            }
            if source.log_density(0.0).is_none() {
                return Err(Error::Invalid(format!(
                    "quadrature needs a density; {} has none",
                    source.name()
                )));
            }
            let density = TiltedDensity::new(source, lambda);
            let (mean, central) = density.central_moments()?;
            let ln_g = match source.exact_log_mgf(lambda)? {
                Some(v) if method == Method::ClosedForm => v,
                _ => density.log_normalizer()?,
            };
            (ln_g, mean, central, TiltMethod::Quadrature)
        }
    };
    Ok(TiltedMeasure {
        base: source.clone(),
        lambda,
        log_normalizer,
        mean,
        central,
        method: tilt_method,
    })
}

fn weighted_tilt(points: &[f64], weights: &[f64], lambda: f64) -> (f64, f64, Vec<f64>) {
    let logs: Vec<f64> = points
        .iter()
        .zip(weights)
        .map(|(p, w)| w.ln() + lambda * p)
        .collect();
    let ln_g = if lambda == 0.0 { 0.0 } else { log_sum_exp(&logs) };
    let ln_z = log_sum_exp(&logs);
    let probs: Vec<f64> = logs.iter().map(|l| (l - ln_z).exp()).collect();
    let mean: f64 = points.iter().zip(&probs).map(|(p, q)| p * q).sum();
    let mut central = vec![0.0; MAX_MOMENT + 1];
    for (p, q) in points.iter().zip(&probs) {
        let dev = p - mean;
        let mut pow = 1.0;
        for c in central.iter_mut() {
            *c += q * pow;
            pow *= dev;
        }
    }
    central[0] = 1.0;
    central[1] = 0.0;
    (ln_g, mean, central)
}

impl TiltedMeasure {
    pub fn base(&self) -> &RandomSource {
        &self.base
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `G(λ)`.
    pub fn normalizer(&self) -> f64 {
        self.log_normalizer.exp()
    }

    pub fn log_normalizer(&self) -> f64 {
        self.log_normalizer
    }

    pub fn method(&self) -> TiltMethod {
        self.method
    }

    /// `H(ξ)`, the mean of ξ under the tilted measure.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// `H((ξ - Hξ)^k)` for `k <= 16`.
    pub fn central_moment(&self, k: usize) -> Option<f64> {
        self.central.get(k).copied()
    }

    /// `H(τ) = E[τ e^{λξ}] / E[e^{λξ}]`.
    pub fn tilted_mean(&self, tau: &Polynomial) -> f64 {
        let d = tau.shifted(self.mean);
        d.iter().zip(&self.central).map(|(a, m)| a * m).sum()
    }

    /// `War(τ) = H(τ²) - H(τ)²`, computed about the tilted mean. Round-off
    /// negatives down to `-1e-9` are clamped to zero.
    pub fn tilted_variance(&self, tau: &Polynomial) -> Result<f64> {
        let d = tau.shifted(self.mean);
        let mut second = 0.0;
        for (j, dj) in d.iter().enumerate().skip(1) {
            for (k, dk) in d.iter().enumerate().skip(1) {
                second += dj * dk * self.central[j + k];
            }
        }
        let first: f64 = d.iter().zip(&self.central).skip(1).map(|(a, m)| a * m).sum();
        let var = second - first * first;
        if var >= 0.0 {
            Ok(var)
        } else if var >= -1e-9 {
            Ok(0.0)
        } else {
            Err(Error::Numerical(format!("tilted variance came out negative ({var:e})")))
        }
    }
}

/// Free-function form of [`TiltedMeasure::tilted_mean`].
pub fn tilted_mean(t: &TiltedMeasure, tau: &Polynomial) -> f64 {
    t.tilted_mean(tau)
}

/// Free-function form of [`TiltedMeasure::tilted_variance`].
pub fn tilted_variance(t: &TiltedMeasure, tau: &Polynomial) -> Result<f64> {
    t.tilted_variance(tau)
}

/// `Δ''(λ)` as the tilted variance of ξ.
pub fn cgf_second_derivative(source: &RandomSource, lambda: f64) -> Result<f64> {
    tilt(source, lambda)?.tilted_variance(&Polynomial::identity())
}

/// Step used for finite-difference checks of `Δ''`.
pub fn fd_step(lambda: f64) -> f64 {
    (1e-4f64).max(1e-4 * lambda.abs())
}

/// `e^{h(x)}` with `h(x) = λx + ln f(x)` for an absolutely continuous base law.
///
/// `h` is concave on each half-line for every supported kind, so each side is
/// handled separately: locate the side's mode, truncate where the integrand
/// (with a polynomial allowance for moments) falls 60 nats below the global
/// maximum, and integrate the pieces adaptively.
struct TiltedDensity<'a> {
    source: &'a RandomSource,
    lambda: f64,
    scale: f64,
    support: f64,
    sides: Vec<Side>,
    peak_log: f64,
}

struct Side {
    sign: f64,
    mode: f64,
    top: f64,
}

const TRUNCATION_NATS: f64 = 60.0;
const QUAD_TOL: f64 = 1e-10;
const QUAD_REL_TOL: f64 = 1e-12;

impl<'a> TiltedDensity<'a> {
    fn new(source: &'a RandomSource, lambda: f64) -> Self {
        let scale = source.natural_scale();
        let support = source.support_bound().unwrap_or(f64::INFINITY);
        let mut out = TiltedDensity { source, lambda, scale, support, sides: Vec::new(), peak_log: 0.0 };
        let sides: Vec<Side> = [1.0, -1.0]
            .into_iter()
            .map(|sign| {
                let g = |t: f64| out.h(sign * t);
                let hi = if support.is_finite() {
                    support
                } else {
                    let mut s = scale;
                    while g(2.0 * s) > g(s) && s < 1e12 * scale {
                        s *= 2.0;
                    }
                    2.0 * s
                };
                let (mode, top) = golden_section_max(g, 0.0, hi);
                Side { sign, mode, top }
            })
            .collect();
        out.peak_log = sides.iter().map(|s| s.top).fold(f64::NEG_INFINITY, f64::max);
        out.sides = sides;
        out
    }

    fn h(&self, x: f64) -> f64 {
        self.lambda * x + self.source.log_density(x).unwrap_or(f64::NEG_INFINITY)
    }

    /// Integrates `p(x) e^{h(x) - peak}` over the line, where `p` grows at most
    /// like `|x|^power`.
    fn integrate_weighted(&self, p: impl Fn(f64) -> f64, power: u32, tol: f64) -> Result<f64> {
        let mut total = 0.0;
        for side in &self.sides {
            let g = |t: f64| self.h(side.sign * t) - self.peak_log;
            let allowance = |t: f64| power as f64 * (1.0 + (t - side.mode).abs() / self.scale).ln();
            let below = |t: f64| g(t) + allowance(t) < -TRUNCATION_NATS;
            let mut reach = self.scale;
            let end = loop {
                let t = side.mode + reach;
                if t >= self.support {
                    break self.support;
                }
                if below(t) {
                    break t;
                }
                reach *= 2.0;
                if reach > 1e15 * self.scale {
                    return Err(Error::Numerical("tilted integrand does not decay".into()));
                }
            };
            let mut reach = self.scale;
            let start = loop {
                let t = side.mode - reach;
                if t <= 0.0 {
                    break 0.0;
                }
                if below(t) {
                    break t;
                }
                reach *= 2.0;
            };
            let f = |t: f64| {
                let e = g(t);
                if e == f64::NEG_INFINITY {
                    0.0
                } else {
                    p(side.sign * t) * e.exp()
                }
            };
            total += integrate_with(f, start, side.mode, tol, QUAD_REL_TOL)?;
            total += integrate_with(f, side.mode, end, tol, QUAD_REL_TOL)?;
        }
        Ok(total)
    }

    fn log_normalizer(&self) -> Result<f64> {
        let z = self.integrate_weighted(|_| 1.0, 0, QUAD_TOL * self.scale)?;
        if !(z > 0.0) {
            return Err(Error::Numerical("tilted normalizer vanished".into()));
        }
        Ok(self.peak_log + z.ln())
    }

    fn central_moments(&self) -> Result<(f64, Vec<f64>)> {
        let tol = |k: u32| QUAD_TOL * self.scale.powi(k as i32 + 1);
        let z = self.integrate_weighted(|_| 1.0, 0, tol(0))?;
        let mean = self.integrate_weighted(|x| x, 1, tol(1))? / z;
        let mut central = vec![0.0; MAX_MOMENT + 1];
        central[0] = 1.0;
        for (k, slot) in central.iter_mut().enumerate().skip(2) {
            let k32 = k as u32;
            *slot = self.integrate_weighted(|x| (x - mean).powi(k as i32), k32, tol(k32))? / z;
        }
        Ok((mean, central))
    }
}

/// `ln Q(λ)` as a function on `R^l`.
pub trait LogMgfField: Sync {
    fn dim(&self) -> usize;
    fn log_q(&self, lambda: &[f64]) -> f64;
    fn method_label(&self) -> &'static str;
}

/// `ln Q(λ) = ½(Bλ, λ)`.
pub struct QuadraticField {
    b: DMatrix<f64>,
}

impl QuadraticField {
    pub fn new(b: DMatrix<f64>) -> Self {
        QuadraticField { b }
    }
}

impl LogMgfField for QuadraticField {
    fn dim(&self) -> usize {
        self.b.nrows()
    }

    fn log_q(&self, lambda: &[f64]) -> f64 {
        let l = self.dim();
        let mut acc = 0.0;
        for i in 0..l {
            for j in 0..l {
                acc += lambda[i] * self.b[(i, j)] * lambda[j];
            }
        }
        0.5 * acc
    }

    fn method_label(&self) -> &'static str {
        "closed_form"
    }
}

/// Log-mean-exp of `λ·x` over a fixed set of vector draws.
pub struct SampledField {
    dim: usize,
    data: Vec<f64>,
}

impl SampledField {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(Error::Invalid("sample matrix does not match the dimension".into()));
        }
        Ok(SampledField { dim, data })
    }
}

impl LogMgfField for SampledField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_q(&self, lambda: &[f64]) -> f64 {
        let dots: Vec<f64> = self
            .data
            .chunks_exact(self.dim)
            .map(|row| row.iter().zip(lambda).map(|(x, l)| x * l).sum())
            .collect();
        let max = dots.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = dots.iter().map(|d| (d - max).exp()).sum();
        max + sum.ln() - (dots.len() as f64).ln()
    }

    fn method_label(&self) -> &'static str {
        "monte_carlo"
    }
}

/// A user-supplied `ln Q`, e.g. a synthetic test surface.
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnField<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnField { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> LogMgfField for FnField<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_q(&self, lambda: &[f64]) -> f64 {
        (self.f)(lambda)
    }

    fn method_label(&self) -> &'static str {
        "synthetic"
    }
}

/// Monte Carlo settings for vector sources without a closed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonteCarlo {
    pub n: usize,
    pub seed: u64,
}

impl Default for MonteCarlo {
    fn default() -> Self {
        MonteCarlo { n: 1_000_000, seed: 42 }
    }
}

impl VectorSource {
    /// The `ln Q` evaluator: exact for subgaussian matrices, a fixed seeded
    /// sample for products.
    pub fn field(&self, mc: MonteCarlo) -> Result<Box<dyn LogMgfField>> {
        Ok(match self.kind() {
            VectorKind::SubgaussianMatrix { b, .. } => Box::new(QuadraticField::new(b.clone())),
            VectorKind::ProductOf(_) => {
                Box::new(SampledField::new(self.dim(), self.sample(mc.n, mc.seed)?)?)
            }
        })
    }

    /// Covariance of ξ under the tilted measure at `λ`: `B` for the Gaussian
    /// model (tilting only shifts the mean), the diagonal of componentwise
    /// tilted variances for products.
    pub fn tilted_covariance(&self, lambda: &[f64]) -> Result<DMatrix<f64>> {
        check_dim(self.dim(), lambda.len())?;
        match self.kind() {
            VectorKind::SubgaussianMatrix { b, .. } => Ok(b.clone()),
            VectorKind::ProductOf(components) => {
                let vars: Vec<f64> = components
                    .iter()
                    .zip(lambda)
                    .map(|(s, l)| cgf_second_derivative(s, *l))
                    .collect::<Result<_>>()?;
                Ok(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vars)))
            }
        }
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}

/// `Q̃ = ln Q` and `V = Q̃/|λ|` on a list of points.
#[derive(Debug, Clone, PartialEq)]
pub struct MultivariateMgf {
    pub dim: usize,
    pub points: Vec<Vec<f64>>,
    pub log_q: Vec<f64>,
    pub v: Vec<f64>,
    pub method: &'static str,
}

pub fn euclidean_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `V(λ) = ln Q(λ)/|λ|`, with `V(0) = 0`.
pub fn v_of(field: &dyn LogMgfField, lambda: &[f64]) -> f64 {
    let r = euclidean_norm(lambda);
    if r == 0.0 {
        0.0
    } else {
        field.log_q(lambda) / r
    }
}

pub fn evaluate_field(field: &dyn LogMgfField, points: &[Vec<f64>]) -> Result<MultivariateMgf> {
    for p in points {
        check_dim(field.dim(), p.len())?;
    }
    let log_q: Vec<f64> = points
        .par_iter()
        .map(|p| if euclidean_norm(p) == 0.0 { 0.0 } else { field.log_q(p) })
        .collect();
    let v = points
        .iter()
        .zip(&log_q)
        .map(|(p, q)| {
            let r = euclidean_norm(p);
            if r == 0.0 {
                0.0
            } else {
                q / r
            }
        })
        .collect();
    Ok(MultivariateMgf {
        dim: field.dim(),
        points: points.to_vec(),
        log_q,
        v,
        method: field.method_label(),
    })
}

/// Evaluates `Q̃` and `V` for a vector source. `mc` is used only by sources
/// without a closed form.
pub fn evaluate_multivariate(
    source: &VectorSource,
    points: &[Vec<f64>],
    mc: MonteCarlo,
) -> Result<MultivariateMgf> {
    let delta0 = source.window_radius();
    for p in points {
        check_dim(source.dim(), p.len())?;
        if euclidean_norm(p) >= delta0 {
            return Err(Error::Domain(format!(
                "|lambda| = {} is outside the window radius {delta0}",
                euclidean_norm(p)
            )));
        }
    }
    evaluate_field(source.field(mc)?.as_ref(), points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_degree_limit() {
        assert!(Polynomial::new(vec![0.0; 9]).is_ok());
        assert!(Polynomial::new(vec![1.0; 10]).is_err());
        // trailing zeros do not count toward the degree
        let mut c = vec![1.0, 2.0];
        c.extend([0.0; 10]);
        assert_eq!(Polynomial::new(c).unwrap().degree(), 1);
    }

    #[test]
    fn taylor_shift_preserves_values() {
        let p = Polynomial::new(vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let c = 0.7;
        let d = p.shifted(c);
        for x in [-2.0, 0.0, 1.3] {
            let y: f64 = d.iter().enumerate().map(|(k, dk)| dk * (x - c).powi(k as i32)).sum();
            assert!((y - p.eval(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn delta_examples() {
        let g = RandomSource::gaussian(1.0).unwrap();
        let ev = evaluate_cgf(&g, &[2.0], Method::ClosedForm).unwrap();
        assert!((ev.log_mgf[0] - 2.0).abs() < 1e-15);
        assert!((ev.phi_values[0] - 1.0).abs() < 1e-15);
        let r = RandomSource::rademacher();
        let ev = evaluate_cgf(&r, &[1.0], Method::ClosedForm).unwrap();
        assert!((ev.log_mgf[0] - 0.433_780_830_5).abs() < 1e-10);
    }

    #[test]
    fn zero_is_inserted_into_straddling_grids() {
        let g = RandomSource::gaussian(1.0).unwrap();
        let ev = evaluate_cgf(&g, &[-1.0, -0.5, 0.5, 1.0], Method::ClosedForm).unwrap();
        assert_eq!(ev.lambda_grid, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert_eq!(ev.log_mgf[2], 0.0);
        assert_eq!(ev.phi_values[2], 0.0);
    }

    #[test]
    fn grids_outside_the_window_are_domain_errors() {
        let s = RandomSource::two_sided_exponential(1.0).unwrap();
        let err = evaluate_cgf(&s, &[0.0, 0.5, 1.0], Method::ClosedForm).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
        assert!(matches!(tilt(&s, 1.2), Err(Error::Domain(_))));
        assert!(matches!(cgf_second_derivative(&s, -1.0), Err(Error::Domain(_))));
        assert_eq!(clip_to_window(&s, &[-1.0, -0.99, 0.0, 0.995]), vec![-0.99, 0.0]);
    }

    #[test]
    fn method_source_mismatches_are_rejected() {
        let w = RandomSource::weibull_symmetric(2.0, 0.5).unwrap();
        assert!(LogMgf::new(&w, Method::ClosedForm).is_err());
        let r = RandomSource::rademacher();
        assert!(LogMgf::new(&r, Method::Quadrature).is_err());
        assert!(LogMgf::new(&r, Method::Empirical).is_err());
        assert!(LogMgf::new(&r, Method::MonteCarlo { n: 10, seed: 1 }).is_err());
    }

    #[test]
    fn tilt_examples() {
        let g = RandomSource::gaussian(1.0).unwrap();
        let t = tilt(&g, 0.7).unwrap();
        assert!((t.tilted_mean(&Polynomial::identity()) - 0.7).abs() < 1e-15);
        let r = tilt(&RandomSource::rademacher(), 1.0).unwrap();
        assert!((r.tilted_mean(&Polynomial::identity()) - 0.761_594_156_0).abs() < 1e-10);
        let v = r.tilted_variance(&Polynomial::identity()).unwrap();
        assert!((v - 0.419_974_341_6).abs() < 1e-10);
        let a = RandomSource::finite_atoms(vec![-1.0, 2.0], vec![2.0 / 3.0, 1.0 / 3.0]).unwrap();
        let ta = tilt(&a, 0.0).unwrap();
        assert!(ta.tilted_mean(&Polynomial::identity()).abs() < 1e-15);
    }

    #[test]
    fn constants_have_unit_mean_and_zero_variance() {
        let sources = [
            RandomSource::gaussian(2.0).unwrap(),
            RandomSource::rademacher(),
            RandomSource::uniform_centered(1.0).unwrap(),
            RandomSource::two_sided_exponential(1.0).unwrap(),
            RandomSource::weibull_symmetric(1.5, 1.0).unwrap(),
        ];
        for s in &sources {
            let t = tilt(s, 0.4).unwrap();
            let one = Polynomial::constant(1.0);
            assert!((t.tilted_mean(&one) - 1.0).abs() < 1e-15, "{}", s.name());
            assert_eq!(t.tilted_variance(&one).unwrap(), 0.0);
        }
    }

    #[test]
    fn gaussian_tilted_second_moment() {
        let g = RandomSource::gaussian(1.0).unwrap();
        for l in [-1.5, 0.0, 0.3, 2.0] {
            let t = tilt(&g, l).unwrap();
            let m2 = t.tilted_mean(&Polynomial::monomial(2).unwrap());
            assert!((m2 - (1.0 + l * l)).abs() < 1e-12);
            assert!((t.tilted_variance(&Polynomial::identity()).unwrap() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn second_derivative_examples() {
        let g = RandomSource::gaussian(1.0).unwrap();
        assert!((cgf_second_derivative(&g, 1.3).unwrap() - 1.0).abs() < 1e-15);
        let r = RandomSource::rademacher();
        assert!((cgf_second_derivative(&r, 0.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn quadrature_agrees_with_closed_forms() {
        for (s, l) in [
            (RandomSource::gaussian(1.0).unwrap(), 2.5),
            (RandomSource::uniform_centered(1.0).unwrap(), -3.0),
            (RandomSource::two_sided_exponential(2.0).unwrap(), 1.5),
        ] {
            let closed = s.exact_log_mgf(l).unwrap().unwrap();
            let quad = LogMgf::new(&s, Method::Quadrature).unwrap().eval(l).unwrap();
            assert!((closed - quad).abs() < 1e-9, "{}: {closed} vs {quad}", s.name());
        }
    }

    #[test]
    fn multivariate_examples() {
        let id = VectorSource::subgaussian_matrix(DMatrix::identity(2, 2)).unwrap();
        let mv = evaluate_multivariate(&id, &[vec![1.0, 1.0], vec![0.0, 0.0]], MonteCarlo::default())
            .unwrap();
        assert!((mv.log_q[0] - 1.0).abs() < 1e-15);
        assert!((mv.v[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(mv.log_q[1], 0.0);
        assert_eq!(mv.v[1], 0.0);
        let b = VectorSource::subgaussian_matrix(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]))
            .unwrap();
        let mv = evaluate_multivariate(&b, &[vec![1.0, 0.0]], MonteCarlo::default()).unwrap();
        assert!((mv.log_q[0] - 1.0).abs() < 1e-15);
        let err = evaluate_multivariate(&b, &[vec![1.0, 0.0, 0.0]], MonteCarlo::default());
        assert!(matches!(err, Err(Error::Dimension { expected: 2, got: 3 })));
    }

    #[test]
    fn tilted_covariance_of_vector_sources() {
        let b = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let v = VectorSource::subgaussian_matrix(b.clone()).unwrap();
        assert_eq!(v.tilted_covariance(&[0.3, -0.2]).unwrap(), b);
        let p = VectorSource::product_of(vec![
            RandomSource::rademacher(),
            RandomSource::gaussian(2.0).unwrap(),
        ])
        .unwrap();
        let c = p.tilted_covariance(&[1.0, 0.5]).unwrap();
        assert!((c[(0, 0)] - 0.419_974_341_6).abs() < 1e-10);
        assert!((c[(1, 1)] - 4.0).abs() < 1e-12);
        assert_eq!(c[(0, 1)], 0.0);
    }
}
