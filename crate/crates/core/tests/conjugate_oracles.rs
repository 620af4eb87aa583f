//! Grid conjugation against direct maximization.

use proptest::prelude::*;
use tiltbound::legendre::{biconjugate, conjugate, ConvexGridFunction, Extension};
use tiltbound::numeric::linspace;

/// O(N·M) maximization over the vertices; affine extensions make the value
/// infinite outside the slope range.
fn brute_force(grid: &[f64], values: &[f64], ext: Extension, x: f64) -> f64 {
    let n = grid.len();
    if ext == Extension::AffineWithBoundarySlope {
        let s_lo = (values[1] - values[0]) / (grid[1] - grid[0]);
        let s_hi = (values[n - 1] - values[n - 2]) / (grid[n - 1] - grid[n - 2]);
        if x < s_lo || x > s_hi {
            return f64::INFINITY;
        }
    }
    grid.iter().zip(values).map(|(y, v)| x * y - v).fold(f64::NEG_INFINITY, f64::max)
}

fn convex_pl() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (3usize..=64).prop_flat_map(|n| {
        (
            prop::collection::vec(0.01f64..1.0, n - 1),
            prop::collection::vec(-5.0f64..5.0, n - 1),
            -10.0f64..10.0,
            -3.0f64..3.0,
        )
            .prop_map(|(gaps, mut slopes, y0, v0)| {
                slopes.sort_by(f64::total_cmp);
                let mut grid = vec![y0];
                let mut values = vec![v0];
                for (g, s) in gaps.iter().zip(&slopes) {
                    grid.push(grid.last().unwrap() + g);
                    values.push(values.last().unwrap() + s * g);
                }
                (grid, values)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 50, ..ProptestConfig::default() })]

    #[test]
    fn linear_time_matches_brute_force((grid, values) in convex_pl(), infinite in any::<bool>()) {
        let ext = if infinite { Extension::PlusInfinityOutside } else { Extension::AffineWithBoundarySlope };
        let f = ConvexGridFunction::new(grid.clone(), values.clone()).unwrap().with_extensions(ext, ext);
        let xs = linspace(-6.0, 6.0, 97);
        let c = conjugate(&f, &xs).unwrap();
        let scale = 1.0 + values.iter().chain(&grid).fold(0.0f64, |m, v| m.max(v.abs())) * 6.0;
        for (x, v) in xs.iter().zip(&c.values) {
            let want = brute_force(&grid, &values, ext, *x);
            if want.is_infinite() {
                prop_assert!(v.is_infinite(), "x={x}: got {v}, want inf");
            } else {
                prop_assert!((v - want).abs() <= 1e-10 * scale, "x={x}: got {v}, want {want}");
            }
        }
    }
}

#[test]
fn cubic_maps_to_three_halves_power() {
    let grid = linspace(-4.0, 4.0, 8001);
    let values: Vec<f64> = grid.iter().map(|y: &f64| y.abs().powi(3) / 3.0).collect();
    let f = ConvexGridFunction::new(grid.clone(), values.clone()).unwrap();
    let xs = [1.0, 2.0, 4.0];
    let c = conjugate(&f, &xs).unwrap();
    for (x, v) in xs.iter().zip(&c.values) {
        let exact = 2.0 / 3.0 * x.powf(1.5);
        let oracle = brute_force(&grid, &values, Extension::AffineWithBoundarySlope, *x);
        assert!((v - exact).abs() < 1e-4, "x={x}: {v} vs {exact}");
        assert!((v - oracle).abs() < 1e-12, "x={x}: {v} vs {oracle}");
    }
}

#[test]
fn young_inequality_on_a_product_grid() {
    let ys = linspace(-3.0, 3.0, 200);
    let xs = linspace(-2.5, 2.5, 200);
    let phi = |y: f64| y.abs().powi(3) / 3.0 + 0.5 * y * y;
    // y runs over the tabulation nodes, where the grid function equals φ
    let f = ConvexGridFunction::from_fn(ys.clone(), phi).unwrap();
    let c = conjugate(&f, &xs).unwrap();
    let scale = f.scale();
    for (x, cx) in xs.iter().zip(&c.values) {
        for y in &ys {
            assert!(x * y <= phi(*y) + cx + 1e-8 * scale, "x={x} y={y}");
        }
    }
}

#[test]
fn order_reversal_on_the_unit_interval() {
    // |y|³/3 <= y²/2 on [-1, 1]
    let grid = linspace(-1.0, 1.0, 401);
    let inf = Extension::PlusInfinityOutside;
    let quad = ConvexGridFunction::from_fn(grid.clone(), |y| 0.5 * y * y).unwrap().with_extensions(inf, inf);
    let cube = ConvexGridFunction::from_fn(grid, |y: f64| y.abs().powi(3) / 3.0).unwrap().with_extensions(inf, inf);
    let xs = linspace(-3.0, 3.0, 121);
    let cq = conjugate(&quad, &xs).unwrap();
    let cc = conjugate(&cube, &xs).unwrap();
    for ((x, c), q) in xs.iter().zip(&cc.values).zip(&cq.values) {
        assert!(c >= &(q - 1e-12), "x={x}");
    }
}

#[test]
fn scaling_law_for_the_quadratic() {
    // (φ(ρ·))*(x) = φ*(x/ρ) with φ = y²/2, φ*(x) = x²/2
    for rho in [0.5, 2.0] {
        let f = ConvexGridFunction::from_fn(linspace(-40.0, 40.0, 8001), |y| 0.5 * (rho * y).powi(2)).unwrap();
        let xs = linspace(-5.0, 5.0, 41);
        let c = conjugate(&f, &xs).unwrap();
        for (x, v) in xs.iter().zip(&c.values) {
            let want = 0.5 * (x / rho).powi(2);
            assert!((v - want).abs() < 1e-3 * (1.0 + want), "rho={rho} x={x}: {v} vs {want}");
        }
    }
}

#[test]
fn quadratic_is_self_dual_and_biconjugation_restores_it() {
    let grid = linspace(-8.0, 8.0, 3201);
    let f = ConvexGridFunction::from_fn(grid.clone(), |y| 0.5 * y * y).unwrap();
    let xs = linspace(-5.0, 5.0, 101);
    let c = conjugate(&f, &xs).unwrap();
    for (x, v) in xs.iter().zip(&c.values) {
        assert!((v - 0.5 * x * x).abs() < 1e-6, "x={x}");
    }
    let g = ConvexGridFunction::from_fn(linspace(-2.0, 2.0, 401), |y: f64| y.cosh()).unwrap();
    let gg = biconjugate(&g).unwrap();
    for y in linspace(-1.9, 1.9, 39) {
        assert!((gg.eval(y) - g.eval(y)).abs() < 1e-5, "y={y}");
    }
}

#[test]
fn nonconvex_input_is_hulled_or_rejected() {
    let grid = linspace(-1.0, 1.0, 5);
    let values = vec![1.0, 0.0, 0.5, 0.0, 1.0];
    let f = ConvexGridFunction::new(grid.clone(), values.clone()).unwrap();
    let c = conjugate(&f, &[0.0]).unwrap();
    assert!(c.hulled);
    assert_eq!(c.values[0], 0.0);
    let declared = ConvexGridFunction::new(grid, values).unwrap().declared_convex();
    assert!(matches!(conjugate(&declared, &[0.0]), Err(tiltbound::Error::NotConvex { .. })));
}
