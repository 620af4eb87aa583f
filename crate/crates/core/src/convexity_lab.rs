//! Numerical convexity certificates for `Δ` (OC), `Φ = Δ/λ` (LC) and the
//! multivariate `V(λ) = ln Q(λ)/|λ|` (LD), plus the closed-form rule for the
//! `φ[m, γ]` family.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cgf_engine::{euclidean_norm, v_of, LogMgf, LogMgfField, Method};
use crate::error::{Error, Result};
use crate::gls_spaces::GeneratingFunctionSpec;
use crate::legendre::ConvexGridFunction;
use crate::numeric::{check_strictly_increasing, second_difference};
use crate::rv_models::RandomSource;

/// Radius of the hole cut around `λ = 0` in `Φ` grids.
pub const DEFAULT_HOLE: f64 = 1e-3;
pub const DEFAULT_MIDPOINT_PAIRS: usize = 200;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    OC,
    LC,
    LD,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Convex,
    NotConvex,
    Inconclusive,
}

impl Verdict {
    /// Convex if every second difference is `>= -tol`, not convex if one is
    /// below `-10·tol`, inconclusive in between.
    pub fn from_min(min_second_difference: f64, tol: f64) -> Verdict {
        if min_second_difference >= -tol {
            Verdict::Convex
        } else if min_second_difference < -10.0 * tol {
            Verdict::NotConvex
        } else {
            Verdict::Inconclusive
        }
    }
}

/// Where the smallest second difference occurred.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Witness {
    Scalar(f64),
    Point(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityCertificate {
    pub target: Target,
    pub verdict: Verdict,
    pub min_second_difference: f64,
    pub witness: Witness,
    /// The abscissae of the witnessing triple (scalar certificates).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness_triple: Option<[f64; 3]>,
    pub tol: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub grid_points: usize,
    pub grid_min: f64,
    pub grid_max: f64,
}

/// `1e-8 · max|values|`, the tolerance for closed-form grids.
pub fn default_tolerance(values: &[f64]) -> f64 {
    1e-8 * values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Certifies convexity of a tabulated function from its normalized second
/// differences on consecutive triples.
pub fn certify(values: &ConvexGridFunction, target: Target, tol: f64) -> Result<ConvexityCertificate> {
    if values.len() < 5 {
        return Err(Error::Invalid(format!(
            "certification needs at least 5 grid points, got {}",
            values.len()
        )));
    }
    if !(tol >= 0.0) {
        return Err(Error::Invalid(format!("tolerance must be nonnegative, got {tol}")));
    }
    let x = values.grid();
    let f = values.values();
    let mut best = (f64::INFINITY, 1);
    for i in 1..x.len() - 1 {
        let d = second_difference([x[i - 1], x[i], x[i + 1]], [f[i - 1], f[i], f[i + 1]]);
        if d < best.0 {
            best = (d, i);
        }
    }
    let (min, i) = best;
    Ok(ConvexityCertificate {
        target,
        verdict: Verdict::from_min(min, tol),
        min_second_difference: min,
        witness: Witness::Scalar(x[i]),
        witness_triple: Some([x[i - 1], x[i], x[i + 1]]),
        tol,
        seed: None,
        grid_points: x.len(),
        grid_min: x[0],
        grid_max: x[x.len() - 1],
    })
}

/// Drops grid points with `0 < |λ| < hole` (and `0` itself), then inserts
/// `0` again when the grid straddles the origin.
pub fn phi_grid(grid: &[f64], hole: f64) -> Vec<f64> {
    let mut out: Vec<f64> = grid.iter().copied().filter(|l| l.abs() >= hole && *l != 0.0).collect();
    let straddles = out.first().is_some_and(|a| *a < 0.0) && out.last().is_some_and(|b| *b > 0.0);
    if straddles {
        let at = out.partition_point(|l| *l < 0.0);
        out.insert(at, 0.0);
    }
    out
}

/// Draws used to estimate the spread of the influence function in
/// [`monte_carlo_tolerance`].
const TOLERANCE_SUBSAMPLE: usize = 100_000;

/// `3 ·` the largest standard error of a normalized second difference of a
/// log-mean-exp `Δ` estimate over `grid`.
///
/// To first order `Δ̂(λ) - Δ(λ) ≈ mean_i(w_λ(x_i))/E w_λ - 1` with
/// `w_λ(x) = e^{λx}`, so a second difference `Σ a_k Δ̂(λ_k)` has influence
/// `ψ(x) = Σ a_k w_{λ_k}(x) / mean(w_{λ_k})` and standard error
/// `sd(ψ)/√n`. The three errors of a triple come from the same draws, so
/// they are strongly correlated and this is much tighter than summing them
/// as if independent.
pub fn monte_carlo_tolerance(samples: &[f64], grid: &[f64]) -> f64 {
    sampled_tolerance(samples, grid, |_| 1.0)
}

/// As [`monte_carlo_tolerance`] for `Φ = Δ/λ`, whose error at `λ` is that of
/// `Δ` divided by `λ` (and zero at the exact origin).
pub fn monte_carlo_tolerance_phi(samples: &[f64], grid: &[f64]) -> f64 {
    sampled_tolerance(samples, grid, |l| if l == 0.0 { 0.0 } else { 1.0 / l })
}

fn sampled_tolerance(samples: &[f64], grid: &[f64], factor: impl Fn(f64) -> f64 + Sync) -> f64 {
    if grid.len() < 3 || samples.len() < 2 {
        return 0.0;
    }
    let n = samples.len() as f64;
    let sub = &samples[..samples.len().min(TOLERANCE_SUBSAMPLE)];
    let m = sub.len() as f64;
    // per grid point: shift and normalized mean of the weights on the subsample
    let stats: Vec<(f64, f64)> = grid
        .par_iter()
        .map(|l| {
            let shift = sub.iter().map(|x| l * x).fold(f64::NEG_INFINITY, f64::max);
            let mean = sub.iter().map(|x| (l * x - shift).exp()).sum::<f64>() / m;
            (shift, mean)
        })
        .collect();
    let worst = (1..grid.len() - 1)
        .into_par_iter()
        .map(|i| {
            let h1 = grid[i] - grid[i - 1];
            let h2 = grid[i + 1] - grid[i];
            let coef = [2.0 / (h1 * (h1 + h2)), -2.0 / (h1 * h2), 2.0 / (h2 * (h1 + h2))];
            let (mut s1, mut s2) = (0.0, 0.0);
            for x in sub {
                let psi: f64 = (0..3)
                    .map(|k| {
                        let j = i + k - 1;
                        let (shift, mean) = stats[j];
                        coef[k] * factor(grid[j]) * (grid[j] * x - shift).exp() / mean
                    })
                    .sum();
                s1 += psi;
                s2 += psi * psi;
            }
            let mean = s1 / m;
            ((s2 / m - mean * mean).max(0.0) / n).sqrt()
        })
        .reduce(|| 0.0, f64::max);
    3.0 * worst
}

/// Certifies `Δ` (target OC) or `Φ` (target LC) of a source on `grid`. With
/// `tol = None` the tolerance is [`default_tolerance`] for exact methods and
/// [`monte_carlo_tolerance`] for sampled ones.
pub fn certify_cgf(
    source: &RandomSource,
    grid: &[f64],
    target: Target,
    method: Method,
    tol: Option<f64>,
) -> Result<ConvexityCertificate> {
    check_strictly_increasing(grid, "lambda grid")?;
    let eval = LogMgf::new(source, method)?;
    let (xs, values): (Vec<f64>, Vec<f64>) = match target {
        Target::OC => {
            let v = grid.par_iter().map(|l| eval.eval(*l)).collect::<Result<Vec<_>>>()?;
            (grid.to_vec(), v)
        }
        Target::LC => {
            let xs = phi_grid(grid, DEFAULT_HOLE);
            let v = xs
                .par_iter()
                .map(|l| if *l == 0.0 { Ok(0.0) } else { Ok(eval.eval(*l)? / l) })
                .collect::<Result<Vec<_>>>()?;
            (xs, v)
        }
        Target::LD => return Err(Error::Invalid("use certify_ld for the LD target".into())),
    };
    let tol = match (tol, eval.samples()) {
        (Some(t), _) => t,
        (None, Some(samples)) => match target {
            Target::OC => monte_carlo_tolerance(samples, &xs),
            _ => monte_carlo_tolerance_phi(samples, &xs),
        },
        (None, None) => default_tolerance(&values),
    };
    certify(&ConvexGridFunction::new(xs, values)?, target, tol)
}

/// Closed-form LC rule for `φ[m, γ]` with `L ≡ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LcClass {
    #[serde(rename = "LC")]
    Lc,
    #[serde(rename = "not_LC")]
    NotLc,
}

/// LC iff `m > 1`, or `m = 1` and `γ >= 0`.
pub fn classify_family_lc(m: f64, gamma: f64) -> LcClass {
    if m > 1.0 || (m == 1.0 && gamma >= 0.0) {
        LcClass::Lc
    } else {
        LcClass::NotLc
    }
}

fn positive_grid_values(spec: &GeneratingFunctionSpec, grid: &[f64], f: impl Fn(f64, f64) -> f64) -> Result<ConvexGridFunction> {
    check_strictly_increasing(grid, "lambda grid")?;
    if grid[0] <= 0.0 {
        return Err(Error::Invalid("this certificate needs a grid in (0, ∞)".into()));
    }
    let values = grid
        .iter()
        .map(|l| Ok(f(*l, spec.eval(*l)?)))
        .collect::<Result<Vec<_>>>()?;
    ConvexGridFunction::new(grid.to_vec(), values)
}

/// Certifies convexity of `φ(λ)/λ` on a positive grid (target LC).
pub fn lc_via_phi_over_lambda(spec: &GeneratingFunctionSpec, grid: &[f64]) -> Result<ConvexityCertificate> {
    let f = positive_grid_values(spec, grid, |l, phi| phi / l)?;
    let tol = default_tolerance(f.values());
    certify(&f, Target::LC, tol)
}

/// Certifies convexity of `φ` itself on a positive grid (target OC).
pub fn family_oc_certificate(spec: &GeneratingFunctionSpec, grid: &[f64]) -> Result<ConvexityCertificate> {
    let f = positive_grid_values(spec, grid, |_, phi| phi)?;
    let tol = default_tolerance(f.values());
    certify(&f, Target::OC, tol)
}

/// `count` unit vectors in `R^dim`: equally spaced angles in the plane,
/// seeded Gaussian directions otherwise.
pub fn default_rays(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    if dim == 2 {
        return (0..count)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
                vec![t.cos(), t.sin()]
            })
            .collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| loop {
            let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let n = euclidean_norm(&v);
            if n > 1e-12 {
                break v.iter().map(|x| x / n).collect();
            }
        })
        .collect()
}

/// Settings of [`certify_ld`].
#[derive(Debug, Clone, PartialEq)]
pub struct LdConfig {
    pub midpoint_pairs: usize,
    pub seed: u64,
    /// `None` selects [`default_tolerance`] over every evaluated `V`.
    pub tol: Option<f64>,
}

impl Default for LdConfig {
    fn default() -> Self {
        LdConfig { midpoint_pairs: DEFAULT_MIDPOINT_PAIRS, seed: DEFAULT_SEED, tol: None }
    }
}

/// Certifies convexity of `V(λ) = ln Q(λ)/|λ|`: second differences of
/// `r ↦ V(r·u)` along each ray, plus the midpoint second difference
/// `(V(a) - 2V(m) + V(b)) / (|a - b|/2)²` for seeded random pairs of points
/// on different rays.
pub fn certify_ld(
    field: &dyn LogMgfField,
    rays: &[Vec<f64>],
    radii: &[f64],
    config: &LdConfig,
) -> Result<ConvexityCertificate> {
    let dim = field.dim();
    if rays.is_empty() {
        return Err(Error::Invalid("certify_ld needs at least one ray".into()));
    }
    for u in rays {
        if u.len() != dim {
            return Err(Error::Dimension { expected: dim, got: u.len() });
        }
        if (euclidean_norm(u) - 1.0).abs() > 1e-9 {
            return Err(Error::Invalid(format!("ray {u:?} is not a unit vector")));
        }
    }
    if radii.len() < 5 {
        return Err(Error::Invalid(format!("certify_ld needs at least 5 radii, got {}", radii.len())));
    }
    check_strictly_increasing(radii, "radii")?;
    if radii[0] <= 0.0 {
        return Err(Error::Invalid("radii must be positive (V is undefined at 0)".into()));
    }
    let point = |u: &[f64], r: f64| -> Vec<f64> { u.iter().map(|c| c * r).collect() };

    // per ray: (min second difference, witness point, max |V|)
    let per_ray: Vec<(f64, Vec<f64>, f64)> = rays
        .par_iter()
        .map(|u| {
            let v: Vec<f64> = radii.iter().map(|r| v_of(field, &point(u, *r))).collect();
            let mut best = (f64::INFINITY, 1);
            for i in 1..radii.len() - 1 {
                let d = second_difference([radii[i - 1], radii[i], radii[i + 1]], [v[i - 1], v[i], v[i + 1]]);
                if d < best.0 {
                    best = (d, i);
                }
            }
            let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            (best.0, point(u, radii[best.1]), scale)
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut pairs = Vec::with_capacity(config.midpoint_pairs);
    while pairs.len() < config.midpoint_pairs {
        let a = point(&rays[rng.gen_range(0..rays.len())], radii[rng.gen_range(0..radii.len())]);
        let b = point(&rays[rng.gen_range(0..rays.len())], radii[rng.gen_range(0..radii.len())]);
        let m: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        let half: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x - y)).collect();
        let h = euclidean_norm(&half);
        // skip degenerate pairs: coincident points or a midpoint at the origin
        if h < 1e-12 * radii[radii.len() - 1] || euclidean_norm(&m) < 1e-12 * radii[0] {
            continue;
        }
        pairs.push((a, m, b, h));
    }
    let midpoint: Vec<(f64, Vec<f64>, f64)> = pairs
        .par_iter()
        .map(|(a, m, b, h)| {
            let (va, vm, vb) = (v_of(field, a), v_of(field, m), v_of(field, b));
            let scale = va.abs().max(vm.abs()).max(vb.abs());
            ((va - 2.0 * vm + vb) / (h * h), m.clone(), scale)
        })
        .collect();

    let scale = per_ray.iter().chain(&midpoint).fold(0.0f64, |s, r| s.max(r.2));
    let tol = config.tol.unwrap_or(1e-8 * scale);
    let (min, witness) = per_ray
        .into_iter()
        .chain(midpoint)
        .fold((f64::INFINITY, Vec::new()), |best, (d, w, _)| if d < best.0 { (d, w) } else { best });
    Ok(ConvexityCertificate {
        target: Target::LD,
        verdict: Verdict::from_min(min, tol),
        min_second_difference: min,
        witness: Witness::Point(witness),
        witness_triple: None,
        tol,
        seed: Some(config.seed),
        grid_points: rays.len() * radii.len(),
        grid_min: radii[0],
        grid_max: radii[radii.len() - 1],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cgf_engine::{FnField, QuadraticField};
    use crate::gls_spaces::FamilyParams;
    use crate::numeric::{geomspace, linspace};
    use nalgebra::DMatrix;

    #[test]
    fn verdict_thresholds() {
        assert_eq!(Verdict::from_min(-1e-9, 1e-8), Verdict::Convex);
        assert_eq!(Verdict::from_min(-5e-8, 1e-8), Verdict::Inconclusive);
        assert_eq!(Verdict::from_min(-2e-7, 1e-8), Verdict::NotConvex);
    }

    #[test]
    fn certify_needs_five_points() {
        let f = ConvexGridFunction::from_fn(linspace(0.0, 1.0, 4), |x| x * x).unwrap();
        assert!(certify(&f, Target::OC, 1e-8).is_err());
    }

    #[test]
    fn gaussian_delta_and_phi() {
        let g = RandomSource::gaussian(1.0).unwrap();
        let grid = linspace(-4.0, 4.0, 81);
        let oc = certify_cgf(&g, &grid, Target::OC, Method::ClosedForm, None).unwrap();
        assert_eq!(oc.verdict, Verdict::Convex);
        assert!((oc.min_second_difference - 1.0).abs() < 1e-9);
        let lc = certify_cgf(&g, &grid, Target::LC, Method::ClosedForm, None).unwrap();
        assert_eq!(lc.verdict, Verdict::Convex);
        assert!(lc.min_second_difference.abs() < 1e-10);
    }

    #[test]
    fn phi_grid_cuts_the_hole() {
        let g = phi_grid(&[-1.0, -5e-4, 0.0, 2e-4, 1.0], 1e-3);
        assert_eq!(g, vec![-1.0, 0.0, 1.0]);
        assert_eq!(phi_grid(&[0.5, 1.0], 1e-3), vec![0.5, 1.0]);
    }

    #[test]
    fn concave_witness_is_recorded() {
        let f = ConvexGridFunction::from_fn(linspace(0.1, 3.0, 30), |x| -x * x).unwrap();
        let c = certify(&f, Target::OC, 1e-8).unwrap();
        assert_eq!(c.verdict, Verdict::NotConvex);
        let [a, b, d] = c.witness_triple.unwrap();
        assert!(a < b && b < d);
    }

    #[test]
    fn classifier_rule() {
        assert_eq!(classify_family_lc(2.0, 0.0), LcClass::Lc);
        assert_eq!(classify_family_lc(1.0, -1.0), LcClass::NotLc);
        assert_eq!(classify_family_lc(1.0, 0.0), LcClass::Lc);
        assert_eq!(classify_family_lc(0.5, 3.0), LcClass::NotLc);
        assert_eq!(serde_json::to_string(&LcClass::NotLc).unwrap(), "\"not_LC\"");
    }

    #[test]
    fn family_ratio_for_m2_is_convex() {
        let spec = GeneratingFunctionSpec::family(FamilyParams::new(2.0, 0.0, 10.0, 1.0).unwrap());
        let c = lc_via_phi_over_lambda(&spec, &geomspace(20.0, 1e5, 200)).unwrap();
        assert_eq!(c.verdict, Verdict::Convex);
        assert!(lc_via_phi_over_lambda(&spec, &linspace(-1.0, 1.0, 9)).is_err());
    }

    #[test]
    fn identity_matrix_is_ld() {
        let f = QuadraticField::new(DMatrix::identity(2, 2));
        let c = certify_ld(&f, &default_rays(2, 16, 0), &linspace(0.0625, 4.0, 64), &LdConfig::default())
            .unwrap();
        assert_eq!(c.verdict, Verdict::Convex);
        assert_eq!(c.seed, Some(42));
    }

    #[test]
    fn fractional_power_fails_the_midpoint_check() {
        let f = FnField::new(2, |l: &[f64]| euclidean_norm(l).powf(0.8));
        let rays = default_rays(2, 16, 0);
        let radii = linspace(0.0625, 4.0, 64);
        // convex along each ray on its own
        let single = certify_ld(&f, &rays[..1], &radii, &LdConfig { midpoint_pairs: 0, ..Default::default() })
            .unwrap();
        assert_eq!(single.verdict, Verdict::Convex);
        let c = certify_ld(&f, &rays, &radii, &LdConfig::default()).unwrap();
        assert_eq!(c.verdict, Verdict::NotConvex);
    }

    #[test]
    fn ld_input_checks() {
        let f = QuadraticField::new(DMatrix::identity(2, 2));
        let radii = linspace(0.1, 1.0, 8);
        let cfg = LdConfig::default();
        assert!(matches!(certify_ld(&f, &[vec![1.0, 0.0, 0.0]], &radii, &cfg), Err(Error::Dimension { .. })));
        assert!(certify_ld(&f, &[vec![1.0, 1.0]], &radii, &cfg).is_err());
        assert!(certify_ld(&f, &[vec![1.0, 0.0]], &linspace(0.0, 1.0, 8), &cfg).is_err());
    }

    #[test]
    fn certificates_are_reproducible() {
        let f = QuadraticField::new(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]));
        let rays = default_rays(2, 16, 0);
        let radii = linspace(0.0625, 4.0, 64);
        let a = certify_ld(&f, &rays, &radii, &LdConfig::default()).unwrap();
        let b = certify_ld(&f, &rays, &radii, &LdConfig::default()).unwrap();
        assert_eq!(a, b);
    }
}
