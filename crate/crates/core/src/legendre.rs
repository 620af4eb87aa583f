//! Discrete Young-Fenchel conjugation, `f*(x) = sup_y (x·y - f(y))`, for
//! functions tabulated on a grid.
//!
//! The supremum over a tabulated function only depends on its lower convex
//! hull. The hull is built with a monotone stack and its vertices are swept
//! against the sorted output grid, so a conjugate costs `O(N + M)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{check_strictly_increasing, second_difference};

/// Behavior of a grid function beyond its first/last abscissa.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Extension {
    /// Continue with the slope of the boundary segment.
    #[default]
    AffineWithBoundarySlope,
    PlusInfinityOutside,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexGridFunction {
    grid: Vec<f64>,
    values: Vec<f64>,
    pub left_extension: Extension,
    pub right_extension: Extension,
    /// `+inf` beyond `±domain_bound` (a finite Kramer window).
    pub domain_bound: Option<f64>,
    /// When set, conjugation rejects inputs that fail the convexity check
    /// instead of silently hulling them.
    pub declared_convex: bool,
    /// Set on results computed from the convex hull of a non-convex input.
    pub hulled: bool,
}

/// Sidecar metadata written next to a grid-function CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSidecar {
    pub left_extension: Extension,
    pub right_extension: Extension,
    pub domain_bound: Option<f64>,
    pub hulled: bool,
}

impl ConvexGridFunction {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() < 3 {
            return Err(Error::Invalid(format!(
                "grid functions need at least 3 points, got {}",
                grid.len()
            )));
        }
        if grid.len() != values.len() {
            return Err(Error::Invalid("grid and values differ in length".into()));
        }
        check_strictly_increasing(&grid, "grid")?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("grid function values must be finite".into()));
        }
        Ok(ConvexGridFunction {
            grid,
            values,
            left_extension: Extension::default(),
            right_extension: Extension::default(),
            domain_bound: None,
            declared_convex: false,
            hulled: false,
        })
    }

    pub fn from_fn(grid: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.iter().map(|x| f(*x)).collect();
        Self::new(grid, values)
    }

    pub fn with_extensions(mut self, left: Extension, right: Extension) -> Self {
        self.left_extension = left;
        self.right_extension = right;
        self
    }

    pub fn with_domain_bound(mut self, bound: f64) -> Result<Self> {
        let lo = self.grid[0];
        let hi = self.grid[self.grid.len() - 1];
        if !(bound > 0.0) || lo < -bound || hi > bound {
            return Err(Error::Invalid(format!(
                "domain bound {bound} does not contain the grid [{lo}, {hi}]"
            )));
        }
        self.domain_bound = Some(bound);
        Ok(self)
    }

    pub fn declared_convex(mut self) -> Self {
        self.declared_convex = true;
        self
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn sidecar(&self) -> GridSidecar {
        GridSidecar {
            left_extension: self.left_extension,
            right_extension: self.right_extension,
            domain_bound: self.domain_bound,
            hulled: self.hulled,
        }
    }

    pub fn apply_sidecar(mut self, sidecar: &GridSidecar) -> Result<Self> {
        self.left_extension = sidecar.left_extension;
        self.right_extension = sidecar.right_extension;
        self.hulled = sidecar.hulled;
        match sidecar.domain_bound {
            Some(b) => self.with_domain_bound(b),
            None => Ok(self),
        }
    }

    /// `max |values|`, floored at 1.
    pub fn scale(&self) -> f64 {
        self.values.iter().fold(1.0f64, |m, v| m.max(v.abs()))
    }

    /// Linear interpolation inside the grid, the declared extension outside.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.grid.len();
        if let Some(b) = self.domain_bound {
            if x.abs() > b {
                return f64::INFINITY;
            }
        }
        if x < self.grid[0] {
            return match self.left_extension {
                Extension::PlusInfinityOutside => f64::INFINITY,
                Extension::AffineWithBoundarySlope => {
                    let s = (self.values[1] - self.values[0]) / (self.grid[1] - self.grid[0]);
                    self.values[0] + s * (x - self.grid[0])
                }
            };
        }
        if x > self.grid[n - 1] {
            return match self.right_extension {
                Extension::PlusInfinityOutside => f64::INFINITY,
                Extension::AffineWithBoundarySlope => {
                    let s = (self.values[n - 1] - self.values[n - 2])
                        / (self.grid[n - 1] - self.grid[n - 2]);
                    self.values[n - 1] + s * (x - self.grid[n - 1])
                }
            };
        }
        let i = self.grid.partition_point(|g| *g <= x).clamp(1, n - 1);
        let (x0, x1) = (self.grid[i - 1], self.grid[i]);
        let t = (x - x0) / (x1 - x0);
        self.values[i - 1] + t * (self.values[i] - self.values[i - 1])
    }

    /// Normalized second differences on consecutive triples, with the middle
    /// abscissa of each.
    pub fn second_differences(&self) -> Vec<(f64, f64)> {
        self.grid
            .windows(3)
            .zip(self.values.windows(3))
            .map(|(x, f)| (x[1], second_difference([x[0], x[1], x[2]], [f[0], f[1], f[2]])))
            .collect()
    }

    /// Smallest second difference and where it occurs.
    pub fn min_second_difference(&self) -> (f64, f64) {
        self.second_differences()
            .into_iter()
            .fold((f64::INFINITY, self.grid[1]), |best, (x, d)| if d < best.0 { (d, x) } else { best })
    }

    /// Default convexity tolerance `1e-9 · max|values|`.
    pub fn convexity_tolerance(&self) -> f64 {
        1e-9 * self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// A vertex of the lower hull: abscissa, value, originating grid index
/// (`None` for a virtual vertex added at a domain bound).
#[derive(Debug, Clone, Copy)]
struct Vertex {
    y: f64,
    v: f64,
    index: Option<usize>,
}

/// Indices of the lower convex hull of `(grid, values)`, left to right.
/// Collinear interior points are dropped.
pub fn lower_hull(grid: &[f64], values: &[f64]) -> Vec<usize> {
    let mut hull: Vec<usize> = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            // drop b when it is on or above the chord a -> i
            let cross = (grid[b] - grid[a]) * (values[i] - values[a])
                - (values[b] - values[a]) * (grid[i] - grid[a]);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    hull
}

/// Result of a conjugation.
#[derive(Debug, Clone, PartialEq)]
pub struct Conjugate {
    pub grid: Vec<f64>,
    /// `f*(x)`; `+inf` outside the finite domain.
    pub values: Vec<f64>,
    /// Grid index of the smallest maximizing `y` for each output point (`None`
    /// where the value is infinite or the maximizer is a domain-bound vertex).
    pub argmax: Vec<Option<usize>>,
    /// Interval of `x` on which `f*` is finite.
    pub finite_domain: (f64, f64),
    pub hulled: bool,
}

impl Conjugate {
    /// The finite part as a grid function with `+inf` outside.
    pub fn to_grid_function(&self) -> Result<ConvexGridFunction> {
        let (grid, values): (Vec<f64>, Vec<f64>) = self
            .grid
            .iter()
            .zip(&self.values)
            .filter(|(_, v)| v.is_finite())
            .map(|(x, v)| (*x, *v))
            .unzip();
        let mut f = ConvexGridFunction::new(grid, values)?.with_extensions(
            Extension::PlusInfinityOutside,
            Extension::PlusInfinityOutside,
        );
        f.hulled = self.hulled;
        Ok(f)
    }
}

struct HullModel {
    vertices: Vec<Vertex>,
    left_open: bool,
    right_open: bool,
    hulled: bool,
}

fn hull_model(f: &ConvexGridFunction) -> Result<HullModel> {
    let tol = f.convexity_tolerance();
    if f.declared_convex {
        let (min_sd, at) = f.min_second_difference();
        if min_sd < -tol {
            return Err(Error::NotConvex { min_second_difference: min_sd, at });
        }
    }
    let idx = lower_hull(&f.grid, &f.values);
    // hulled only when a dropped point sits measurably above the hull
    let hulled = {
        let mut dropped_above = false;
        for w in idx.windows(2) {
            let (a, b) = (w[0], w[1]);
            for i in a + 1..b {
                let t = (f.grid[i] - f.grid[a]) / (f.grid[b] - f.grid[a]);
                let chord = f.values[a] + t * (f.values[b] - f.values[a]);
                if f.values[i] - chord > tol.max(1e-12 * f.scale()) {
                    dropped_above = true;
                }
            }
        }
        dropped_above
    };
    let mut vertices: Vec<Vertex> = idx
        .iter()
        .map(|&i| Vertex { y: f.grid[i], v: f.values[i], index: Some(i) })
        .collect();
    let mut left_open = f.left_extension == Extension::AffineWithBoundarySlope;
    let mut right_open = f.right_extension == Extension::AffineWithBoundarySlope;
    if let Some(b) = f.domain_bound {
        if left_open {
            let first = vertices[0];
            if -b < first.y {
                let s = (vertices[1].v - first.v) / (vertices[1].y - first.y);
                vertices.insert(0, Vertex { y: -b, v: first.v + s * (-b - first.y), index: None });
            }
            left_open = false;
        }
        if right_open {
            let k = vertices.len();
            let last = vertices[k - 1];
            if b > last.y {
                let s = (last.v - vertices[k - 2].v) / (last.y - vertices[k - 2].y);
                vertices.push(Vertex { y: b, v: last.v + s * (b - last.y), index: None });
            }
            right_open = false;
        }
    }
    Ok(HullModel { vertices, left_open, right_open, hulled })
}

fn slopes(vertices: &[Vertex]) -> Vec<f64> {
    vertices
        .windows(2)
        .map(|w| (w[1].v - w[0].v) / (w[1].y - w[0].y))
        .collect()
}

/// Sweeps sorted `xs` against hull vertices with nondecreasing edge slopes.
fn sweep(model: &HullModel, xs: &[f64]) -> (Vec<f64>, Vec<Option<usize>>, (f64, f64)) {
    let s = slopes(&model.vertices);
    let lo = if model.left_open { s.first().copied().unwrap_or(f64::NEG_INFINITY) } else { f64::NEG_INFINITY };
    let hi = if model.right_open { s.last().copied().unwrap_or(f64::INFINITY) } else { f64::INFINITY };
    let mut values = Vec::with_capacity(xs.len());
    let mut argmax = Vec::with_capacity(xs.len());
    let mut j = 0;
    for &x in xs {
        if x < lo || x > hi {
            values.push(f64::INFINITY);
            argmax.push(None);
            continue;
        }
        // vertex j maximizes x·y - v exactly when s[j-1] <= x <= s[j]
        while j < s.len() && x > s[j] {
            j += 1;
        }
        let vx = model.vertices[j];
        values.push(x * vx.y - vx.v);
        argmax.push(vx.index);
    }
    (values, argmax, (lo, hi))
}

/// `f*(x) = sup_y (x·y - f(y))` on `out_grid` (strictly increasing).
///
/// With `plus_infinity_outside` the supremum runs over the grid hull only;
/// with an affine extension the conjugate is `+inf` past the boundary slope
/// and `finite_domain` reports where it is finite. Inputs flagged
/// `declared_convex` that fail the convexity check are rejected; other
/// non-convex inputs are replaced by their convex hull and the result is
/// flagged `hulled`.
pub fn conjugate(f: &ConvexGridFunction, out_grid: &[f64]) -> Result<Conjugate> {
    if out_grid.is_empty() {
        return Err(Error::Invalid("output grid is empty".into()));
    }
    check_strictly_increasing(out_grid, "output grid")?;
    let model = hull_model(f)?;
    let (values, argmax, finite_domain) = sweep(&model, out_grid);
    Ok(Conjugate { grid: out_grid.to_vec(), values, argmax, finite_domain, hulled: model.hulled })
}

/// `(f*)*` on the grid of `f`: the lower convex hull of `f` (with its
/// declared extensions), i.e. `f` itself when `f` is convex.
pub fn biconjugate(f: &ConvexGridFunction) -> Result<ConvexGridFunction> {
    let model = hull_model(f)?;
    // f* is piecewise linear with breakpoints at the hull slopes; tabulating it
    // there is exact.
    let mut dual_grid = slopes(&model.vertices);
    dual_grid.dedup();
    if dual_grid.is_empty() {
        return Err(Error::Invalid("degenerate hull".into()));
    }
    let (dual_values, _, _) = sweep(&model, &dual_grid);
    let dual_vertices: Vec<Vertex> = dual_grid
        .iter()
        .zip(&dual_values)
        .map(|(x, v)| Vertex { y: *x, v: *v, index: None })
        .collect();
    // f* beyond the extreme slopes is either +inf (open affine side) or affine
    // with slope equal to the extreme vertex; in both cases the sup over the
    // tabulated breakpoints is attained for every y inside the original grid.
    let dual = HullModel { vertices: dual_vertices, left_open: false, right_open: false, hulled: false };
    let (values, _, _) = sweep(&dual, &f.grid);
    let mut out = ConvexGridFunction::new(f.grid.clone(), values)?
        .with_extensions(f.left_extension, f.right_extension);
    out.domain_bound = f.domain_bound;
    out.hulled = model.hulled;
    Ok(out)
}

/// A function of `|x|` tabulated on `r >= 0` with `grid[0] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialFunction {
    profile: ConvexGridFunction,
}

impl RadialFunction {
    pub fn new(profile: ConvexGridFunction) -> Result<Self> {
        if profile.grid()[0] != 0.0 {
            return Err(Error::Invalid(
                "a radial profile must be tabulated on r >= 0 starting at r = 0".into(),
            ));
        }
        Ok(RadialFunction { profile })
    }

    pub fn profile(&self) -> &ConvexGridFunction {
        &self.profile
    }

    /// The even extension `r ↦ φ(|r|)` on the mirrored grid.
    pub fn even_extension(&self) -> Result<ConvexGridFunction> {
        let p = &self.profile;
        let mut grid: Vec<f64> = p.grid().iter().skip(1).rev().map(|r| -r).collect();
        grid.extend_from_slice(p.grid());
        let mut values: Vec<f64> = p.values().iter().skip(1).rev().copied().collect();
        values.extend_from_slice(p.values());
        let mut f = ConvexGridFunction::new(grid, values)?
            .with_extensions(p.right_extension, p.right_extension);
        f.domain_bound = p.domain_bound;
        f.declared_convex = p.declared_convex;
        Ok(f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialConjugate {
    pub direction: Vec<f64>,
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    pub hulled: bool,
}

/// Conjugate of a radial function on `R^n`: it is radial again and equals the
/// scalar conjugate of the even extension, evaluated at `|λ|`.
pub fn conjugate_radial(
    phi: &RadialFunction,
    directions: &[Vec<f64>],
    out_radii: &[f64],
) -> Result<Vec<RadialConjugate>> {
    if out_radii.iter().any(|r| *r < 0.0) {
        return Err(Error::Invalid("radii must be nonnegative".into()));
    }
    let dim = directions.first().map(Vec::len).unwrap_or(0);
    for d in directions {
        if d.len() != dim || dim == 0 {
            return Err(Error::Dimension { expected: dim, got: d.len() });
        }
        let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::Invalid(format!("direction {d:?} is not a unit vector")));
        }
    }
    let scalar = conjugate(&phi.even_extension()?, out_radii)?;
    Ok(directions
        .iter()
        .map(|d| RadialConjugate {
            direction: d.clone(),
            radii: out_radii.to_vec(),
            values: scalar.values.clone(),
            hulled: scalar.hulled,
        })
        .collect())
}

/// Conjugate of the anisotropic quadratic `½(Bλ, λ)` at the points `xs`,
/// reduced to the radial case by whitening: with `B = L Lᵀ`, substituting
/// `λ = L^{-T} μ` turns the quadratic into `½|μ|²` and the linear term into
/// `(L^{-1}x, μ)`, so the conjugate at `x` is the radial conjugate of the
/// tabulated profile `r²/2` at `|L^{-1}x|`.
pub fn conjugate_quadratic_form(
    b: &DMatrix<f64>,
    profile: &RadialFunction,
    xs: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let l = b
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Invalid("matrix is not positive definite".into()))?
        .l();
    let even = profile.even_extension()?;
    xs.iter()
        .map(|x| {
            if x.len() != b.nrows() {
                return Err(Error::Dimension { expected: b.nrows(), got: x.len() });
            }
            let z = l
                .solve_lower_triangular(&nalgebra::DVector::from_column_slice(x))
                .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
            Ok(conjugate(&even, &[z.norm()])?.values[0])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::linspace;

    #[test]
    fn constructor_validation() {
        assert!(ConvexGridFunction::new(vec![0.0, 1.0], vec![0.0, 1.0]).is_err());
        assert!(ConvexGridFunction::new(vec![0.0, 1.0, 1.0], vec![0.0; 3]).is_err());
        assert!(ConvexGridFunction::new(vec![0.0, 1.0, 2.0], vec![0.0, f64::NAN, 1.0]).is_err());
        let f = ConvexGridFunction::new(vec![0.0, 1.0, 2.0], vec![0.0; 3]).unwrap();
        assert!(f.clone().with_domain_bound(1.5).is_err());
        assert!(f.with_domain_bound(2.0).is_ok());
    }

    #[test]
    fn support_function_of_interval() {
        let f = ConvexGridFunction::new(linspace(-1.0, 1.0, 21), vec![0.0; 21])
            .unwrap()
            .with_extensions(Extension::PlusInfinityOutside, Extension::PlusInfinityOutside)
            .with_domain_bound(1.0)
            .unwrap();
        let xs = linspace(-3.0, 3.0, 13);
        let c = conjugate(&f, &xs).unwrap();
        for (x, v) in xs.iter().zip(&c.values) {
            assert!((v - x.abs()).abs() < 1e-15);
        }
    }

    #[test]
    fn affine_extension_limits_the_domain() {
        let f = ConvexGridFunction::from_fn(linspace(-2.0, 2.0, 41), |y| 0.5 * y * y).unwrap();
        let c = conjugate(&f, &[-3.0, -1.0, 0.0, 1.0, 3.0]).unwrap();
        assert!(c.values[0].is_infinite() && c.values[4].is_infinite());
        assert!((c.finite_domain.0 + 1.95).abs() < 1e-12);
        assert!((c.finite_domain.1 - 1.95).abs() < 1e-12);
        assert!((c.values[3] - 0.5).abs() < 1e-12);
        // a domain bound turns the open side into a finite sup
        let bounded = f.clone().with_domain_bound(2.5).unwrap();
        let cb = conjugate(&bounded, &[3.0]).unwrap();
        assert!(cb.values[0].is_finite());
        assert_eq!(cb.argmax[0], None);
    }

    #[test]
    fn declared_convex_rejection_and_hulling() {
        let grid = linspace(-1.5, 1.5, 61);
        let well = ConvexGridFunction::from_fn(grid, |y| y.powi(4) - y * y).unwrap();
        let c = conjugate(&well, &[0.0]).unwrap();
        assert!(c.hulled);
        assert!(matches!(
            conjugate(&well.clone().declared_convex(), &[0.0]),
            Err(Error::NotConvex { .. })
        ));
        let q = ConvexGridFunction::from_fn(linspace(-1.0, 1.0, 11), |y| y * y).unwrap();
        assert!(!conjugate(&q, &[0.0]).unwrap().hulled);
    }

    #[test]
    fn ties_pick_the_smallest_index() {
        // flat bottom: every y in [-1, 1] maximizes 0·y - f(y)
        let f = ConvexGridFunction::new(vec![-2.0, -1.0, 0.0, 1.0, 2.0], vec![1.0, 0.0, 0.0, 0.0, 1.0])
            .unwrap();
        let c = conjugate(&f, &[0.0]).unwrap();
        assert_eq!(c.argmax[0], Some(1));
        assert_eq!(c.values[0], 0.0);
    }

    #[test]
    fn affine_is_self_biconjugate() {
        let grid = linspace(-3.0, 3.0, 31);
        let f = ConvexGridFunction::from_fn(grid.clone(), |y| 2.0 * y).unwrap();
        let bb = biconjugate(&f).unwrap();
        for (y, v) in grid.iter().zip(bb.values()) {
            assert!((v - 2.0 * y).abs() < 1e-12);
        }
    }

    #[test]
    fn radial_input_checks() {
        let bad = ConvexGridFunction::from_fn(linspace(-1.0, 1.0, 5), |r| r * r).unwrap();
        assert!(RadialFunction::new(bad).is_err());
        let p = RadialFunction::new(
            ConvexGridFunction::from_fn(linspace(0.0, 5.0, 501), |r| 0.5 * r * r).unwrap(),
        )
        .unwrap();
        assert!(conjugate_radial(&p, &[vec![1.0, 1.0]], &[1.0]).is_err());
        assert!(conjugate_radial(&p, &[vec![1.0, 0.0], vec![0.0, 1.0, 0.0]], &[1.0]).is_err());
        assert!(conjugate_radial(&p, &[vec![1.0, 0.0]], &[-1.0]).is_err());
    }

    #[test]
    fn whitened_quadratic_conjugate() {
        let b = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let p = RadialFunction::new(
            ConvexGridFunction::from_fn(linspace(0.0, 10.0, 100_001), |r| 0.5 * r * r).unwrap(),
        )
        .unwrap();
        let x = vec![1.0, -0.5];
        let got = conjugate_quadratic_form(&b, &p, std::slice::from_ref(&x)).unwrap()[0];
        let inv = b.try_inverse().unwrap();
        let xv = nalgebra::DVector::from_column_slice(&x);
        let exact = 0.5 * xv.dot(&(inv * &xv));
        assert!((got - exact).abs() < 2e-9, "{got} vs {exact}");
    }
}
