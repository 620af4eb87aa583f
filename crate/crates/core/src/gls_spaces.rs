//! Grand Lebesgue spaces `B(φ)`: Young-Orlicz generating functions, the
//! `B(φ)` norm, natural generating functions, tail and MGF bounds, and the
//! tail / CGF / moment exponent estimators.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cgf_engine::{LogMgf, Method};
use crate::error::{Error, Result};
use crate::legendre::{conjugate, ConvexGridFunction, Extension};
use crate::numeric::{check_strictly_increasing, geomspace, golden_section_max, ls_slope};
use crate::rv_models::{KramerWindow, RandomSource, SourceKind};

/// Slowly varying correction `L`, evaluated at `ln|λ|`.
pub type SlowlyVarying = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Parameters of the stitched family
/// `φ(λ) = C0 λ²` for `|λ| ≤ Z`, `C1 |λ|^m ln^γ|λ| L(ln|λ|)` beyond.
#[derive(Clone)]
pub struct FamilyParams {
    pub m: f64,
    pub gamma: f64,
    pub z: f64,
    pub c1: f64,
    pub l: Option<SlowlyVarying>,
}

impl fmt::Debug for FamilyParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FamilyParams")
            .field("m", &self.m)
            .field("gamma", &self.gamma)
            .field("z", &self.z)
            .field("c1", &self.c1)
            .field("l", &self.l.as_ref().map(|_| "<hook>"))
            .finish()
    }
}

impl FamilyParams {
    pub fn new(m: f64, gamma: f64, z: f64, c1: f64) -> Result<Self> {
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::Invalid(format!("m must be positive, got {m}")));
        }
        if !gamma.is_finite() {
            return Err(Error::Invalid(format!("gamma must be finite, got {gamma}")));
        }
        if !(z > std::f64::consts::E && z.is_finite()) {
            return Err(Error::Invalid(format!("Z must exceed e, got {z}")));
        }
        if !(c1 > 0.0 && c1.is_finite()) {
            return Err(Error::Invalid(format!("C1 must be positive, got {c1}")));
        }
        Ok(FamilyParams { m, gamma, z, c1, l: None })
    }

    pub fn with_slowly_varying(mut self, l: SlowlyVarying) -> Self {
        self.l = Some(l);
        self
    }

    fn l_at(&self, log_lambda: f64) -> f64 {
        self.l.as_ref().map_or(1.0, |l| l(log_lambda))
    }

    fn tail_part(&self, a: f64) -> f64 {
        let ln = a.ln();
        self.c1 * a.powf(self.m) * ln.powf(self.gamma) * self.l_at(ln)
    }

    /// `C0 = C1 Z^{m-2} ln^γ Z L(ln Z)`, so the two pieces agree at `Z`.
    pub fn c0(&self) -> f64 {
        self.tail_part(self.z) / (self.z * self.z)
    }
}

#[derive(Debug, Clone)]
pub enum GeneratingFunction {
    /// `½λ²`.
    Phi2,
    Family(FamilyParams),
    /// A tabulated function. Grids starting at `x >= 0` are read at `|λ|`.
    Custom(ConvexGridFunction),
}

/// A Young-Orlicz function together with the window on which it is finite.
#[derive(Debug, Clone)]
pub struct GeneratingFunctionSpec {
    pub kind: GeneratingFunction,
    pub window: KramerWindow,
}

/// JSON form of a generating function. Custom functions are supplied inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratingFunctionConfig {
    Phi2,
    Family {
        m: f64,
        gamma: f64,
        #[serde(default = "default_z")]
        z: f64,
        #[serde(default = "default_c1")]
        c1: f64,
    },
    Custom {
        x: Vec<f64>,
        value: Vec<f64>,
    },
}

fn default_z() -> f64 {
    10.0
}

fn default_c1() -> f64 {
    1.0
}

impl GeneratingFunctionSpec {
    pub fn phi2() -> Self {
        GeneratingFunctionSpec { kind: GeneratingFunction::Phi2, window: KramerWindow::infinite() }
    }

    pub fn family(params: FamilyParams) -> Self {
        GeneratingFunctionSpec {
            kind: GeneratingFunction::Family(params),
            window: KramerWindow::infinite(),
        }
    }

    /// A tabulated φ. Its window is the grid's domain bound when one is set.
    pub fn custom(f: ConvexGridFunction) -> Self {
        let window = match f.domain_bound {
            Some(b) => KramerWindow { lambda0: b, finite: true, formal: false },
            None => KramerWindow::infinite(),
        };
        GeneratingFunctionSpec { kind: GeneratingFunction::Custom(f), window }
    }

    pub fn from_config(config: &GeneratingFunctionConfig) -> Result<Self> {
        Ok(match config {
            GeneratingFunctionConfig::Phi2 => Self::phi2(),
            GeneratingFunctionConfig::Family { m, gamma, z, c1 } => {
                Self::family(FamilyParams::new(*m, *gamma, *z, *c1)?)
            }
            GeneratingFunctionConfig::Custom { x, value } => {
                Self::custom(ConvexGridFunction::new(x.clone(), value.clone())?)
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            GeneratingFunction::Phi2 => "phi2",
            GeneratingFunction::Family(_) => "family",
            GeneratingFunction::Custom(_) => "custom",
        }
    }

    /// `φ(λ)`; a domain error outside the window.
    pub fn eval(&self, lambda: f64) -> Result<f64> {
        self.window.check(lambda)?;
        Ok(self.eval_unchecked(lambda))
    }

    fn eval_unchecked(&self, lambda: f64) -> f64 {
        let a = lambda.abs();
        match &self.kind {
            GeneratingFunction::Phi2 => 0.5 * a * a,
            GeneratingFunction::Family(p) => {
                if a <= p.z {
                    p.c0() * a * a
                } else {
                    p.tail_part(a)
                }
            }
            GeneratingFunction::Custom(f) => {
                if f.grid()[0] >= 0.0 {
                    f.eval(a)
                } else {
                    f.eval(lambda)
                }
            }
        }
    }

    /// Whether `φ` is nondecreasing on `[0, ∞)` (checked on a log
    /// grid for the family, on the nodes for tabulated functions).
    pub fn is_monotone(&self) -> bool {
        match &self.kind {
            GeneratingFunction::Phi2 => true,
            GeneratingFunction::Family(p) => {
                let probe = geomspace(p.z, p.z * 1e12, 12 * 64 + 1);
                probe.windows(2).all(|w| p.tail_part(w[1]) >= p.tail_part(w[0]))
            }
            GeneratingFunction::Custom(f) => {
                let pts: Vec<(f64, f64)> = f
                    .grid()
                    .iter()
                    .zip(f.values())
                    .filter(|(x, _)| **x >= 0.0)
                    .map(|(x, v)| (*x, *v))
                    .collect();
                pts.windows(2).all(|w| w[1].1 >= w[0].1)
            }
        }
    }

    /// Smallest `λ >= 0` with `φ(λ) >= y`, i.e. the inverse of the monotone
    /// hull `λ ↦ max_{s <= λ} φ(s)`. `None` when `y` exceeds φ on the window.
    pub fn inverse(&self, y: f64) -> Result<Option<f64>> {
        if !(y >= 0.0) {
            return Err(Error::Invalid(format!("cannot invert φ at {y}")));
        }
        if y == 0.0 {
            return Ok(Some(0.0));
        }
        let inside = |l: f64| self.window.contains(l);
        let answer = match &self.kind {
            GeneratingFunction::Phi2 => Some((2.0 * y).sqrt()),
            GeneratingFunction::Family(p) => {
                let at_z = p.c0() * p.z * p.z;
                if y <= at_z {
                    Some((y / p.c0()).sqrt())
                } else {
                    // scan upward from Z so the first crossing is found even
                    // where the tail piece dips
                    let ratio = 2f64.powf(1.0 / 16.0);
                    let mut lo = p.z;
                    let mut found = None;
                    while lo < 1e300 {
                        let hi = lo * ratio;
                        if p.tail_part(hi) >= y {
                            found = Some(bisect(|l| p.tail_part(l) >= y, lo, hi));
                            break;
                        }
                        lo = hi;
                    }
                    found
                }
            }
            GeneratingFunction::Custom(_) => {
                let mut lo = 0.0;
                let mut hi: f64 = 1.0;
                let bound = if self.window.finite { self.window.lambda0 } else { f64::INFINITY };
                loop {
                    let probe = hi.min(bound * (1.0 - 1e-12));
                    if self.eval_unchecked(probe) >= y {
                        break Some(bisect(|l| self.eval_unchecked(l) >= y, lo, probe));
                    }
                    if probe < hi || hi > 1e300 {
                        break None;
                    }
                    lo = hi;
                    hi *= 2.0;
                }
            }
        };
        Ok(answer.filter(|l| inside(*l) || *l == 0.0))
    }
}

/// Smallest point of `[lo, hi]` where the monotone predicate flips to true,
/// to relative precision `1e-12`.
fn bisect(pred: impl Fn(f64) -> bool, mut lo: f64, mut hi: f64) -> f64 {
    while hi - lo > 1e-12 * hi.max(1e-300) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

pub fn eval_phi(spec: &GeneratingFunctionSpec, lambda: f64) -> Result<f64> {
    spec.eval(lambda)
}

mod float_or_string {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => s.parse::<f64>().map_err(serde::de::Error::custom),
        }
    }
}

/// Estimate of `||ξ||_{B(φ)}` on a finite grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    /// `+inf` when no finite `ρ` works somewhere on the grid.
    #[serde(with = "float_or_string")]
    pub value: f64,
    pub argsup: Option<f64>,
    /// The supremum sits at the smallest or largest `|λ|` of the grid, so the
    /// true supremum may lie outside it.
    pub boundary_flag: bool,
    /// φ was not monotone and was inverted through its monotone hull.
    pub monotone_hull: bool,
    pub grid_points: usize,
    pub grid_min: f64,
    pub grid_max: f64,
}

/// `ν(λ) = ln max(E e^{λξ}, E e^{-λξ})` on `grid`.
pub fn natural_generating_function(source: &RandomSource, grid: &[f64]) -> Result<ConvexGridFunction> {
    natural_generating_function_with(source, grid, Method::auto(source))
}

pub fn natural_generating_function_with(
    source: &RandomSource,
    grid: &[f64],
    method: Method,
) -> Result<ConvexGridFunction> {
    check_strictly_increasing(grid, "lambda grid")?;
    let window = source.kramer_window();
    for l in grid {
        window.check(*l)?;
    }
    let eval = LogMgf::new(source, method)?;
    let values: Vec<f64> = grid
        .par_iter()
        .map(|l| Ok(eval.eval(*l)?.max(eval.eval(-*l)?)))
        .collect::<Result<_>>()?;
    let f = ConvexGridFunction::new(grid.to_vec(), values)?;
    if window.finite {
        f.with_domain_bound(window.lambda0)
    } else {
        Ok(f)
    }
}

/// `sup_λ φ^{-1}(ν(λ)) / |λ|` over the nonzero points of `grid`.
pub fn bphi_norm(source: &RandomSource, spec: &GeneratingFunctionSpec, grid: &[f64]) -> Result<NormEstimate> {
    bphi_norm_with(source, spec, grid, Method::auto(source))
}

pub fn bphi_norm_with(
    source: &RandomSource,
    spec: &GeneratingFunctionSpec,
    grid: &[f64],
    method: Method,
) -> Result<NormEstimate> {
    let lambdas: Vec<f64> = grid.iter().copied().filter(|l| *l != 0.0).collect();
    if lambdas.is_empty() {
        return Err(Error::Invalid("the norm grid needs a nonzero point".into()));
    }
    let source_window = source.kramer_window();
    for l in &lambdas {
        source_window.check(*l)?;
        spec.window.check(*l)?;
    }
    let eval = LogMgf::new(source, method)?;
    let ratios: Vec<f64> = lambdas
        .par_iter()
        .map(|l| {
            let nu = eval.eval(*l)?.max(eval.eval(-*l)?).max(0.0);
            Ok(match spec.inverse(nu)? {
                Some(r) => r / l.abs(),
                None => f64::INFINITY,
            })
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, r) in ratios.iter().enumerate() {
        if *r > ratios[best] {
            best = i;
        }
    }
    let abs_min = lambdas.iter().fold(f64::INFINITY, |m, l| m.min(l.abs()));
    let abs_max = lambdas.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let at = lambdas[best];
    let value = ratios[best];
    Ok(NormEstimate {
        value,
        argsup: Some(at),
        boundary_flag: value > 0.0 && (at.abs() == abs_min || at.abs() == abs_max),
        monotone_hull: !spec.is_monotone(),
        grid_points: lambdas.len(),
        grid_min: lambdas[0],
        grid_max: lambdas[lambdas.len() - 1],
    })
}

const CONJUGATE_POINTS: usize = 4097;

/// `φ*(u) = sup_{y >= 0} (u·y - φ(y))` for `u >= 0`, by grid conjugation on
/// `[0, Y]` with `Y` doubled until the maximizer is interior. Analytic specs
/// get a golden-section polish around the grid maximizer.
pub fn phi_conjugate(spec: &GeneratingFunctionSpec, u: f64) -> Result<f64> {
    if !(u >= 0.0) {
        return Err(Error::Invalid(format!("conjugate argument must be nonnegative, got {u}")));
    }
    if u == 0.0 {
        return Ok(0.0);
    }
    let limit = if spec.window.finite { spec.window.lambda0 * (1.0 - 1e-9) } else { f64::INFINITY };
    let mut reach: f64 = match &spec.kind {
        GeneratingFunction::Custom(f) => f.grid()[f.len() - 1].abs().max(1.0),
        GeneratingFunction::Family(p) => 2.0 * p.z,
        GeneratingFunction::Phi2 => (2.0 * u).max(1.0),
    };
    loop {
        let top = reach.min(limit);
        let grid: Vec<f64> = (0..CONJUGATE_POINTS)
            .map(|i| top * i as f64 / (CONJUGATE_POINTS - 1) as f64)
            .collect();
        let values: Vec<f64> = grid.iter().map(|y| spec.eval_unchecked(*y)).collect();
        let f = ConvexGridFunction::new(grid.clone(), values)?
            .with_extensions(Extension::PlusInfinityOutside, Extension::PlusInfinityOutside);
        let c = conjugate(&f, &[u])?;
        let i = c.argmax[0].unwrap_or(CONJUGATE_POINTS - 1);
        if i < CONJUGATE_POINTS - 1 || top >= limit || top > 1e300 {
            let mut best = c.values[0];
            if !matches!(spec.kind, GeneratingFunction::Custom(_)) {
                let lo = grid[i.saturating_sub(1)];
                let hi = grid[(i + 1).min(CONJUGATE_POINTS - 1)];
                let (_, polished) = golden_section_max(|y| u * y - spec.eval_unchecked(y), lo, hi);
                best = best.max(polished);
            }
            return Ok(best);
        }
        reach *= 2.0;
    }
}

/// `exp(-φ*(x/ρ))`, capped at 1.
pub fn tail_bound(spec: &GeneratingFunctionSpec, norm: &NormEstimate, x: f64) -> Result<f64> {
    let rho = norm.value;
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::Invalid(format!("tail bounds need a finite positive norm, got {rho}")));
    }
    if !(x >= 0.0) {
        return Err(Error::Invalid(format!("tail bound threshold must be nonnegative, got {x}")));
    }
    let conj = phi_conjugate(spec, x / rho)?;
    if conj <= 0.0 {
        return Ok(1.0);
    }
    Ok((-conj).exp().min(1.0))
}

/// Survival table of `|X|`: `P(|X| > thresholds[k]) = survival[k]`, with the
/// last entry 0. Mass between consecutive thresholds is placed at the right
/// edge, which overstates `E e^{λ|X|}` and so keeps MGF bounds conservative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailTable {
    pub thresholds: Vec<f64>,
    pub survival: Vec<f64>,
}

impl TailTable {
    pub fn new(thresholds: Vec<f64>, survival: Vec<f64>) -> Result<Self> {
        if thresholds.is_empty() || thresholds.len() != survival.len() {
            return Err(Error::Invalid("tail table needs matching, nonempty columns".into()));
        }
        if thresholds[0] < 0.0 {
            return Err(Error::Invalid("tail thresholds must be nonnegative".into()));
        }
        if thresholds.len() > 1 {
            check_strictly_increasing(&thresholds, "tail thresholds")?;
        }
        if survival.iter().any(|s| !(0.0..=1.0).contains(s))
            || survival.windows(2).any(|w| w[1] > w[0])
        {
            return Err(Error::Invalid("survival values must be nonincreasing in [0, 1]".into()));
        }
        if survival[survival.len() - 1] != 0.0 {
            return Err(Error::Invalid("the last survival value must be 0".into()));
        }
        Ok(TailTable { thresholds, survival })
    }

    /// Table on `bins` equal-width cells up to the sample maximum.
    pub fn from_samples(samples: &[f64], bins: usize) -> Result<Self> {
        if samples.is_empty() || bins == 0 {
            return Err(Error::Invalid("tail table needs samples and at least one bin".into()));
        }
        let mut abs: Vec<f64> = samples.iter().map(|x| x.abs()).collect();
        abs.sort_by(f64::total_cmp);
        let top = abs[abs.len() - 1];
        if top == 0.0 {
            return Self::new(vec![0.0], vec![0.0]);
        }
        let n = abs.len() as f64;
        let mut thresholds = Vec::with_capacity(bins + 1);
        let mut survival = Vec::with_capacity(bins + 1);
        for k in 0..=bins {
            let t = top * k as f64 / bins as f64;
            let above = abs.len() - abs.partition_point(|a| *a <= t);
            thresholds.push(t);
            survival.push(if k == bins { 0.0 } else { above as f64 / n });
        }
        Self::new(thresholds, survival)
    }

    /// `ln E e^{λX}` for the symmetric law with this table's `|X|`.
    pub fn log_mgf(&self, lambda: f64) -> f64 {
        let mut terms = Vec::with_capacity(self.thresholds.len());
        let mut prev = 1.0;
        for (t, s) in self.thresholds.iter().zip(&self.survival) {
            let w = prev - s;
            if w > 0.0 {
                terms.push(w.ln() + crate::rv_models::log_cosh(lambda * t));
            }
            prev = *s;
        }
        crate::numeric::log_sum_exp(&terms)
    }
}

/// Where the tail information for an MGF bound comes from.
#[derive(Debug, Clone)]
pub enum TailModel {
    /// The exact law (quadrature or closed-form MGF).
    Law(RandomSource),
    Table(TailTable),
}

impl TailModel {
    /// The exact weibull_symmetric law with `P(|X| > t) = exp(-c1 t^d)`.
    pub fn weibull(d: f64, c1: f64) -> Result<Self> {
        Ok(TailModel::Law(RandomSource::weibull_symmetric(d, c1)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MgfBound {
    /// Smallest working `C` from the search grid, `None` for "none found".
    pub c: Option<f64>,
    /// The bound holds on grid points `λ < prefix_end` (all points when
    /// `holds_on_grid`).
    #[serde(with = "float_or_string")]
    pub prefix_end: f64,
    pub holds_on_grid: bool,
}

/// The search grid `2^{k/8}`, `k = -32..=64`.
pub fn c_search_grid() -> Vec<f64> {
    (-32..=64).map(|k| 2f64.powf(k as f64 / 8.0)).collect()
}

/// Smallest `C` in [`c_search_grid`] with `ln E e^{±λX} <= φ(Cλ)` on the
/// longest achievable prefix of the nonnegative part of `lambda_grid`.
pub fn mgf_bound_from_tail(tail: &TailModel, spec: &GeneratingFunctionSpec, lambda_grid: &[f64]) -> Result<MgfBound> {
    check_strictly_increasing(lambda_grid, "lambda grid")?;
    let lambdas: Vec<f64> = lambda_grid.iter().copied().filter(|l| *l > 0.0).collect();
    if lambdas.is_empty() {
        return Err(Error::Invalid("the MGF bound needs positive grid points".into()));
    }
    let log_mgf: Vec<f64> = match tail {
        TailModel::Law(source) => {
            let w = source.kramer_window();
            for l in &lambdas {
                w.check(*l)?;
            }
            let eval = LogMgf::auto(source)?;
            lambdas
                .par_iter()
                .map(|l| Ok(eval.eval(*l)?.max(eval.eval(-*l)?)))
                .collect::<Result<_>>()?
        }
        TailModel::Table(t) => lambdas.iter().map(|l| t.log_mgf(*l)).collect(),
    };
    let holds = |c: f64, i: usize| {
        let cl = c * lambdas[i];
        if !spec.window.contains(cl) {
            return false;
        }
        let bound = spec.eval_unchecked(cl);
        log_mgf[i] <= bound + 1e-10 + 1e-9 * bound.abs()
    };
    let prefix_len = |c: f64| (0..lambdas.len()).take_while(|i| holds(c, *i)).count();
    let mut best: Option<(f64, usize)> = None;
    for c in c_search_grid() {
        let len = prefix_len(c);
        if len > best.map_or(0, |b| b.1) {
            best = Some((c, len));
        }
    }
    Ok(match best {
        None => MgfBound { c: None, prefix_end: 0.0, holds_on_grid: false },
        Some((c, len)) => MgfBound {
            c: Some(c),
            prefix_end: if len == lambdas.len() { f64::INFINITY } else { lambdas[len] },
            holds_on_grid: len == lambdas.len(),
        },
    })
}

/// `||ξ||_p = (E|ξ|^p)^{1/p}`: closed form for parametric laws, the data
/// itself for empirical sources.
pub fn pnorm(source: &RandomSource, p: f64) -> Result<f64> {
    Ok((log_abs_moment(source, p)? / p).exp())
}

/// `ln E|ξ|^p`.
fn log_abs_moment(source: &RandomSource, p: f64) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::Invalid(format!("p must be a finite number >= 1, got {p}")));
    }
    Ok(match source.kind() {
        SourceKind::Gaussian { sigma } => {
            p * sigma.ln() + 0.5 * p * std::f64::consts::LN_2 + libm::lgamma(0.5 * (p + 1.0))
                - 0.5 * std::f64::consts::PI.ln()
        }
        SourceKind::Rademacher => 0.0,
        SourceKind::UniformCentered { halfwidth } => p * halfwidth.ln() - (p + 1.0).ln(),
        SourceKind::TwoSidedExponential { rate } => libm::lgamma(p + 1.0) - p * rate.ln(),
        SourceKind::WeibullSymmetric { d, c1 } => libm::lgamma(1.0 + p / d) - p / d * c1.ln(),
        SourceKind::FiniteAtoms { points, weights } => {
            let terms: Vec<f64> = points
                .iter()
                .zip(weights)
                .filter(|(x, _)| **x != 0.0)
                .map(|(x, w)| w.ln() + p * x.abs().ln())
                .collect();
            crate::numeric::log_sum_exp(&terms)
        }
        SourceKind::Empirical { samples } => log_mean_abs_power(samples, p),
    })
}

fn log_mean_abs_power(samples: &[f64], p: f64) -> f64 {
    let terms: Vec<f64> = samples.iter().filter(|x| **x != 0.0).map(|x| p * x.abs().ln()).collect();
    crate::numeric::log_sum_exp(&terms) - (samples.len() as f64).ln()
}

/// Monte Carlo `||ξ||_p` from `n` seeded draws.
pub fn pnorm_monte_carlo(source: &RandomSource, p: f64, n: usize, seed: u64) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::Invalid(format!("p must be a finite number >= 1, got {p}")));
    }
    let samples = source.sample(n, seed)?;
    Ok((log_mean_abs_power(&samples, p) / p).exp())
}

/// Inputs of [`duality_exponents`]. Missing grids are chosen from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityConfig {
    #[serde(default)]
    pub x_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub lambda_grid: Option<Vec<f64>>,
    #[serde(default = "default_p_list")]
    pub p_list: Vec<f64>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_p_list() -> Vec<f64> {
    vec![2.0, 4.0, 8.0, 16.0, 32.0]
}

fn default_n() -> usize {
    1_000_000
}

fn default_seed() -> u64 {
    42
}

impl Default for DualityConfig {
    fn default() -> Self {
        DualityConfig {
            x_grid: None,
            lambda_grid: None,
            p_list: default_p_list(),
            n: default_n(),
            seed: default_seed(),
        }
    }
}

/// Minimum number of exceedances for a tail point to enter the regression.
pub const MIN_EXCEEDANCES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualitySlopes {
    pub tail: f64,
    pub cgf: f64,
    pub moment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    #[serde(with = "float_or_string")]
    pub d_tail: f64,
    #[serde(with = "float_or_string")]
    pub d_cgf: f64,
    #[serde(with = "float_or_string")]
    pub d_moment: f64,
    pub slopes: DualitySlopes,
    pub n: usize,
    pub seed: u64,
    pub x_used: Vec<f64>,
    pub lambda_used: Vec<f64>,
    pub p_list: Vec<f64>,
}

/// Default tail abscissae: 24 geometric points over the decade ending at the
/// level exceeded by 1000 draws (or by 1% of them for small samples).
fn default_x_grid(abs_sorted: &[f64]) -> Vec<f64> {
    let n = abs_sorted.len();
    let keep = 1000.min(n / 100).max(MIN_EXCEEDANCES);
    let top = abs_sorted[n.saturating_sub(keep + 1)];
    geomspace(top / 10.0, top, 24)
}

fn default_lambda_grid(source: &RandomSource) -> Vec<f64> {
    let w = source.kramer_window();
    if w.finite {
        geomspace(0.099 * w.lambda0, 0.99 * w.lambda0, 41)
    } else {
        geomspace(10.0 / source.natural_scale(), 100.0 / source.natural_scale(), 41)
    }
}

/// Estimates the tail exponent `d` three ways:
/// - `d_tail`: slope of `ln(-ln P̂(|ξ| > x))` against `ln x`;
/// - `d_cgf = s/(s-1)` from the slope `s` of `ln Δ(λ)` against `ln λ` on the
///   upper decade of the λ grid;
/// - `d_moment = 1/t` from the slope `t` of `ln ||ξ||_p` against `ln p`.
pub fn duality_exponents(source: &RandomSource, config: &DualityConfig) -> Result<DualityReport> {
    let samples = source.sample(config.n, config.seed)?;
    let mut abs: Vec<f64> = samples.iter().map(|x| x.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let n = abs.len() as f64;

    let x_grid = match &config.x_grid {
        Some(g) => {
            check_strictly_increasing(g, "x grid")?;
            g.clone()
        }
        None => default_x_grid(&abs),
    };
    let mut x_used = Vec::new();
    let mut tail_y = Vec::new();
    for &x in &x_grid {
        let above = abs.len() - abs.partition_point(|a| *a <= x);
        if above >= MIN_EXCEEDANCES && above < abs.len() && x > 0.0 {
            x_used.push(x);
            tail_y.push((-(above as f64 / n).ln()).ln());
        }
    }
    if x_used.len() < 2 {
        return Err(Error::Invalid(format!(
            "fewer than two x values have at least {MIN_EXCEEDANCES} exceedances"
        )));
    }
    let tail_slope = ls_slope(&x_used.iter().map(|x| x.ln()).collect::<Vec<_>>(), &tail_y)?;

    let lambda_grid = match &config.lambda_grid {
        Some(g) => {
            check_strictly_increasing(g, "lambda grid")?;
            g.clone()
        }
        None => default_lambda_grid(source),
    };
    let top = lambda_grid.iter().fold(0.0f64, |m, l| m.max(*l));
    let lambda_used: Vec<f64> =
        lambda_grid.iter().copied().filter(|l| *l >= top / 10.0 && *l > 0.0).collect();
    if lambda_used.len() < 2 {
        return Err(Error::Invalid("the upper decade of the lambda grid has fewer than two points".into()));
    }
    let eval = LogMgf::auto(source)?;
    let log_delta: Vec<f64> = lambda_used
        .par_iter()
        .map(|l| Ok(eval.eval(*l)?.ln()))
        .collect::<Result<_>>()?;
    let cgf_slope = ls_slope(&lambda_used.iter().map(|l| l.ln()).collect::<Vec<_>>(), &log_delta)?;

    if config.p_list.len() < 2 {
        return Err(Error::Invalid("p_list needs at least two values".into()));
    }
    let log_norms: Vec<f64> = config
        .p_list
        .iter()
        .map(|p| Ok(pnorm(source, *p)?.ln()))
        .collect::<Result<_>>()?;
    let moment_slope = ls_slope(&config.p_list.iter().map(|p| p.ln()).collect::<Vec<_>>(), &log_norms)?;

    Ok(DualityReport {
        d_tail: tail_slope,
        d_cgf: cgf_slope / (cgf_slope - 1.0),
        d_moment: 1.0 / moment_slope,
        slopes: DualitySlopes { tail: tail_slope, cgf: cgf_slope, moment: moment_slope },
        n: config.n,
        seed: config.seed,
        x_used,
        lambda_used,
        p_list: config.p_list.clone(),
    })
}
