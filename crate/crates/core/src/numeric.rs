//! Small numerical kernels shared by the modules: log-sum-exp, least squares
//! slopes, grids, golden-section search and adaptive Gauss-Kronrod quadrature.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// `ln Σ exp(v_i)` without overflow. Returns `-inf` for an empty input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// `ln(e^a + e^b)`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Ordinary least-squares slope of `ys` against `xs`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Invalid(
            "least squares needs at least two paired points".into(),
        ));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::Invalid("regression abscissae are all equal".into()));
    }
    Ok(sxy / sxx)
}

/// `n` equally spaced points from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![a],
        _ => {
            let step = (b - a) / (n - 1) as f64;
            let mut out: Vec<f64> = (0..n).map(|i| a + step * i as f64).collect();
            out[n - 1] = b;
            out
        }
    }
}

/// `n` points `10^e` with exponents equally spaced from `a` to `b`.
pub fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    linspace(a, b, n).into_iter().map(|e| 10f64.powf(e)).collect()
}

/// `n` points geometrically spaced from `lo` to `hi` (both positive).
pub fn geomspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let mut out: Vec<f64> = linspace(lo.ln(), hi.ln(), n)
        .into_iter()
        .map(f64::exp)
        .collect();
    if let Some(first) = out.first_mut() {
        *first = lo;
    }
    if let Some(last) = out.last_mut() {
        *last = hi;
    }
    out
}

pub fn check_strictly_increasing(grid: &[f64], what: &str) -> Result<()> {
    if grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::Invalid(format!("{what} contains non-finite values")));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Invalid(format!("{what} must be strictly increasing")));
    }
    Ok(())
}

/// Parses `a:b:n` (linear, inclusive) or `logspace:a:b:n` (exponents of ten).
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').map(str::trim).collect();
    let num = |s: &str| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|_| Error::Parse(format!("bad number {s:?} in grid {spec:?}")))
    };
    let count = |s: &str| -> Result<usize> {
        s.parse::<usize>()
            .map_err(|_| Error::Parse(format!("bad point count {s:?} in grid {spec:?}")))
    };
    let grid = match parts.as_slice() {
        ["logspace", a, b, n] => logspace(num(a)?, num(b)?, count(n)?),
        [a, b, n] => linspace(num(a)?, num(b)?, count(n)?),
        _ => {
            return Err(Error::Parse(format!(
                "grid {spec:?} is neither a:b:n nor logspace:a:b:n"
            )))
        }
    };
    if grid.is_empty() {
        return Err(Error::Parse(format!("grid {spec:?} has no points")));
    }
    check_strictly_increasing(&grid, "grid")?;
    Ok(grid)
}

/// Second derivative estimate on a (possibly nonuniform) triple.
#[inline]
pub fn second_difference(x: [f64; 3], f: [f64; 3]) -> f64 {
    let h1 = x[1] - x[0];
    let h2 = x[2] - x[1];
    2.0 * ((f[2] - f[1]) / h2 - (f[1] - f[0]) / h1) / (h1 + h2)
}

/// Maximiser of a unimodal function on `[lo, hi]`.
pub fn golden_section_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (hi - lo).abs() <= 1e-14 * (1.0 + lo.abs() + hi.abs()) {
            break;
        }
        if fc >= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - INV_PHI * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + INV_PHI * (hi - lo);
            fd = f(d);
        }
    }
    let mut best = (0.5 * (lo + hi), f(0.5 * (lo + hi)));
    for x in [lo, hi, c, d] {
        let fx = f(x);
        if fx > best.1 {
            best = (x, fx);
        }
    }
    best
}

// 15-point Kronrod nodes and weights, as tabulated in QUADPACK.
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

fn gauss_kronrod_15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive G7-K15 quadrature of `f` over the finite interval `[a, b]`,
/// bisecting the segment with the largest error estimate until the summed
/// estimate drops below `abs_tol`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64) -> Result<f64> {
    integrate_with(f, a, b, abs_tol, 0.0)
}

/// As [`integrate`], stopping once the error estimate is below
/// `max(abs_tol, rel_tol · |value|)`.
pub fn integrate_with(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Invalid("quadrature bounds must be finite".into()));
    }
    if a == b {
        return Ok(0.0);
    }
    const MAX_SEGMENTS: usize = 4000;
    let (value, error) = gauss_kronrod_15(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value, error });
    let mut total = value;
    let mut total_err = error;
    while total_err > abs_tol.max(rel_tol * total.abs()) {
        if heap.len() >= MAX_SEGMENTS {
            return Err(Error::Numerical(format!(
                "quadrature on [{a}, {b}] did not reach tolerance {abs_tol:e} (estimate {total_err:e})"
            )));
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval no longer splittable in floating point; accept it.
            total_err -= worst.error;
            heap.push(Segment { error: 0.0, ..worst });
            continue;
        }
        let (lv, le) = gauss_kronrod_15(&f, worst.a, mid);
        let (rv, re) = gauss_kronrod_15(&f, mid, worst.b);
        total += lv + rv - worst.value;
        total_err += le + re - worst.error;
        heap.push(Segment { a: worst.a, b: mid, value: lv, error: le });
        heap.push(Segment { a: mid, b: worst.b, value: rv, error: re });
    }
    Ok(heap.iter().map(|s| s.value).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_survives_huge_exponents() {
        let v = [1000.0, 1000.0];
        assert!((log_sum_exp(&v) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert!((log_add_exp(0.0, 0.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn gauss_kronrod_integrates_smooth_and_peaked_functions() {
        let v = integrate(|x| x.sin(), 0.0, std::f64::consts::PI, 1e-12).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
        let g = integrate(|x| (-x * x / 2.0).exp(), -40.0, 40.0, 1e-12).unwrap();
        assert!((g - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-11);
        // sqrt singularity at the endpoint
        let s = integrate(|x| x.sqrt(), 0.0, 1.0, 1e-10).unwrap();
        assert!((s - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn grid_syntax() {
        let g = parse_grid("-4:4:81").unwrap();
        assert_eq!(g.len(), 81);
        assert_eq!(g[0], -4.0);
        assert_eq!(g[80], 4.0);
        assert!(g.contains(&0.0));
        let l = parse_grid("logspace:0:2:3").unwrap();
        assert!((l[1] - 10.0).abs() < 1e-12 && (l[2] - 100.0).abs() < 1e-12);
        assert!(parse_grid("1:0:3").is_err());
        assert!(parse_grid("nonsense").is_err());
    }

    #[test]
    fn golden_section_finds_parabola_vertex() {
        let (x, fx) = golden_section_max(|x| -(x - 1.25) * (x - 1.25), 0.0, 10.0);
        assert!((x - 1.25).abs() < 1e-7);
        assert!(fx.abs() < 1e-12);
    }

    #[test]
    fn slope_of_exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x - 1.0).collect();
        assert!((ls_slope(&xs, &ys).unwrap() - 2.5).abs() < 1e-14);
    }
}
