//! Property and oracle tests for the grid layer: stencil exactness on
//! polynomials, symmetry of the difference operators, Richardson convergence
//! rates, discrete integration by parts, cone masking, deterministic
//! reductions, and snapshot round-trips.

use std::sync::atomic::{AtomicUsize, Ordering};

use proptest::prelude::*;

use hyperfoil::grid::{
    add_scaled, apply_cone_mask_with_margin, axpy, dx, dxx, laplacian, mask_outside_radius,
    pairwise_sum, quadrature, read_snapshot, write_snapshot, Axis, Field, Grid, Order,
};
use hyperfoil::Error;

/// Maximum |got - want(x, y)| over nodes whose full stencil footprint stays
/// inside the (non-periodic) sampled region.
fn max_interior_err(got: &Field, want: impl Fn(f64, f64) -> f64, pad: usize) -> f64 {
    let grid = got.grid();
    let mut worst = 0.0f64;
    for i in pad..grid.nx() - pad {
        for j in pad..grid.ny() - pad {
            let w = want(grid.x(i), grid.y(j));
            let err = (got.at(i, j) - w).abs() / (1.0 + w.abs());
            worst = worst.max(err);
        }
    }
    worst
}

fn test_grid() -> Grid {
    Grid::square(32, 0.25).unwrap()
}

// ---------------------------------------------------------------------------
// Stencil exactness on polynomials: a centered first difference of order p is
// exact on polynomials of degree <= p, a second difference on degree <= p + 1.
// ---------------------------------------------------------------------------

#[test]
fn order2_first_derivative_exact_on_quadratics() {
    let p = Field::from_fn(test_grid(), |x, y| 3.0 * x * x - 2.0 * x + 1.0 + x * y);
    let gx = dx(&p, Axis::X, Order::Two);
    let gy = dx(&p, Axis::Y, Order::Two);
    assert!(max_interior_err(&gx, |x, y| 6.0 * x - 2.0 + y, 2) < 1e-11);
    assert!(max_interior_err(&gy, |x, _| x, 2) < 1e-11);
}

#[test]
fn order2_second_derivative_exact_on_cubics() {
    let p = Field::from_fn(test_grid(), |x, y| {
        x * x * x + 2.0 * x * x * y - y * y * y + x * y * y
    });
    let gxx = dxx(&p, Axis::X, Order::Two);
    let gyy = dxx(&p, Axis::Y, Order::Two);
    assert!(max_interior_err(&gxx, |x, y| 6.0 * x + 4.0 * y, 2) < 1e-11);
    assert!(max_interior_err(&gyy, |x, y| -6.0 * y + 2.0 * x, 2) < 1e-11);
}

#[test]
fn order4_first_derivative_exact_on_quartics() {
    let p = Field::from_fn(test_grid(), |x, y| {
        x.powi(4) - 2.0 * x.powi(3) * y + y.powi(4) + x * x * y * y
    });
    let gx = dx(&p, Axis::X, Order::Four);
    let gy = dx(&p, Axis::Y, Order::Four);
    assert!(max_interior_err(
        &gx,
        |x, y| 4.0 * x.powi(3) - 6.0 * x * x * y + 2.0 * x * y * y,
        2
    ) < 1e-11);
    assert!(max_interior_err(
        &gy,
        |x, y| -2.0 * x.powi(3) + 4.0 * y.powi(3) + 2.0 * x * x * y,
        2
    ) < 1e-11);
}

#[test]
fn order4_second_derivative_exact_on_quintics() {
    let p = Field::from_fn(test_grid(), |x, y| {
        x.powi(5) + x.powi(4) * y - 3.0 * x * y.powi(4) + y.powi(5) + x.powi(3) * y * y
    });
    let pxx = |x: f64, y: f64| 20.0 * x.powi(3) + 12.0 * x * x * y + 6.0 * x * y * y;
    let pyy = |x: f64, y: f64| -36.0 * x * y * y + 20.0 * y.powi(3) + 2.0 * x.powi(3);
    let gxx = dxx(&p, Axis::X, Order::Four);
    let gyy = dxx(&p, Axis::Y, Order::Four);
    let lap = laplacian(&p, Order::Four);
    assert!(max_interior_err(&gxx, pxx, 2) < 1e-11);
    assert!(max_interior_err(&gyy, pyy, 2) < 1e-11);
    assert!(max_interior_err(&lap, |x, y| pxx(x, y) + pyy(x, y), 2) < 1e-11);
}

#[test]
fn laplacian_matches_axis_second_derivatives() {
    let f = Field::from_fn(test_grid(), |x, y| (0.7 * x).sin() * (0.4 * y).cos() + x * y);
    for order in [Order::Two, Order::Four] {
        let lap = laplacian(&f, order);
        let split = add_scaled(&dxx(&f, Axis::X, order), 1.0, &dxx(&f, Axis::Y, order));
        let scale = lap.max_abs() + 1.0;
        for (a, b) in lap.data().iter().zip(split.data()) {
            assert!((a - b).abs() <= 1e-12 * scale);
        }
    }
}

// ---------------------------------------------------------------------------
// Parity: a second difference must be an even operator (symmetric taps), a
// first difference an odd one (antisymmetric taps). On an odd node count the
// grid is mirror-symmetric around the origin, including the periodic wrap, so
// these hold node-for-node.
// ---------------------------------------------------------------------------

#[test]
fn second_derivative_of_even_profile_is_even() {
    let grid = Grid::square(25, 0.2).unwrap();
    let f = Field::from_fn(grid, |x, y| (x.cos() + 0.3 * x * x) * (1.0 + y * y).recip());
    for order in [Order::Two, Order::Four] {
        let g = dxx(&f, Axis::X, order);
        let scale = g.max_abs() + 1.0;
        for i in 0..grid.nx() {
            for j in 0..grid.ny() {
                let mirror = g.at(grid.nx() - 1 - i, j);
                assert!(
                    (g.at(i, j) - mirror).abs() <= 1e-13 * scale,
                    "order {order:?}: even symmetry broken at ({i}, {j})"
                );
            }
        }
    }
}

#[test]
fn first_derivative_of_even_profile_is_odd() {
    let grid = Grid::square(25, 0.2).unwrap();
    let f = Field::from_fn(grid, |x, y| (x.cos() + 0.3 * x * x) * (1.0 + y * y).recip());
    for order in [Order::Two, Order::Four] {
        let g = dx(&f, Axis::X, order);
        let scale = g.max_abs() + 1.0;
        for i in 0..grid.nx() {
            for j in 0..grid.ny() {
                let mirror = g.at(grid.nx() - 1 - i, j);
                assert!(
                    (g.at(i, j) + mirror).abs() <= 1e-13 * scale,
                    "order {order:?}: odd symmetry broken at ({i}, {j})"
                );
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Richardson convergence on an exactly periodic smooth field. The error of
// the Laplacian must shrink by ~2^order when h halves, measured over every
// node so the wrapped boundary segments are exercised too.
// ---------------------------------------------------------------------------

#[test]
fn laplacian_richardson_ratio_matches_order() {
    let extent = 32.0;
    let lap_err = |n: usize, order: Order| -> f64 {
        let h = extent / n as f64;
        let grid = Grid::square(n, h).unwrap();
        let (k1, k2) = (
            2.0 * std::f64::consts::PI * 3.0 / extent,
            2.0 * std::f64::consts::PI * 2.0 / extent,
        );
        let f = Field::from_fn(grid, |x, y| (k1 * x).sin() * (k2 * y).cos());
        let lap = laplacian(&f, order);
        let mut worst = 0.0f64;
        for i in 0..grid.nx() {
            for j in 0..grid.ny() {
                let exact = -(k1 * k1 + k2 * k2) * f.at(i, j);
                worst = worst.max((lap.at(i, j) - exact).abs());
            }
        }
        worst
    };

    let r2 = lap_err(64, Order::Two) / lap_err(128, Order::Two);
    assert!((3.3..=4.7).contains(&r2), "order-2 ratio {r2}");
    let r4 = lap_err(64, Order::Four) / lap_err(128, Order::Four);
    assert!((13.0..=19.0).contains(&r4), "order-4 ratio {r4}");
}

// ---------------------------------------------------------------------------
// Masking and small helpers
// ---------------------------------------------------------------------------

#[test]
fn negative_radius_clears_field() {
    let mut f = Field::from_fn(test_grid(), |x, y| x + y + 1.0);
    mask_outside_radius(&mut f, -0.5);
    assert!(f.data().iter().all(|&v| v == 0.0));
}

#[test]
fn cone_mask_margin_matches_radius_mask() {
    let (t, margin) = (5.0, 1.0);
    let mut a = Field::from_fn(test_grid(), |x, y| (x * y).sin() + 2.0);
    let mut b = a.clone();
    apply_cone_mask_with_margin(&mut a, t, margin);
    mask_outside_radius(&mut b, t - 1.0 + margin);
    assert_eq!(a.data(), b.data());
}

#[test]
fn pairwise_sum_is_accurate_on_long_input() {
    let n = 3 * (1 << 18);
    let xs = vec![1.0 / 3.0; n];
    let exact = (1 << 18) as f64;
    assert!((pairwise_sum(&xs) - exact).abs() < 1e-8);
}

#[test]
fn quadrature_of_ones_is_total_cell_area() {
    let grid = Grid::new(20, 24, 0.3).unwrap();
    let f = Field::from_fn(grid, |_, _| 1.0);
    let want = 20.0 * 24.0 * 0.09;
    assert!((quadrature(&f) - want).abs() < 1e-12 * want);
}

#[test]
fn grid_validation_rejects_bad_inputs() {
    assert!(matches!(Grid::new(8, 32, 0.1), Err(Error::InvalidGrid(_))));
    assert!(matches!(Grid::new(32, 8, 0.1), Err(Error::InvalidGrid(_))));
    for h in [0.0, -1.0, f64::NAN, f64::INFINITY] {
        assert!(matches!(Grid::square(32, h), Err(Error::InvalidGrid(_))));
    }
}

#[test]
fn cone_coverage_check_uses_half_extent() {
    // 64 nodes at h = 0.25 reach |x| <= 7.875.
    let grid = Grid::square(64, 0.25).unwrap();
    assert!(grid.check_covers_cone(6.8).is_ok());
    assert!(matches!(
        grid.check_covers_cone(7.0),
        Err(Error::DomainTooSmall { .. })
    ));
}

#[test]
fn axpy_and_add_scaled_match_elementwise_algebra() {
    let grid = Grid::square(16, 0.5).unwrap();
    let x = Field::from_fn(grid, |a, b| a + 2.0 * b);
    let y = Field::from_fn(grid, |a, b| 3.0 * a - b);
    let sum = add_scaled(&x, 0.5, &y);
    let mut acc = x.clone();
    axpy(&mut acc, 0.5, &y);
    for i in 0..grid.nx() {
        for j in 0..grid.ny() {
            let want = x.at(i, j) + 0.5 * y.at(i, j);
            assert_eq!(sum.at(i, j), want);
            assert_eq!(acc.at(i, j), want);
        }
    }
}

// ---------------------------------------------------------------------------
// Snapshot I/O
// ---------------------------------------------------------------------------

fn tmp_path(tag: &str) -> std::path::PathBuf {
    static COUNTER: AtomicUsize = AtomicUsize::new(0);
    let k = COUNTER.fetch_add(1, Ordering::Relaxed);
    std::env::temp_dir().join(format!(
        "hyperfoil_grid_props_{}_{tag}_{k}.snap",
        std::process::id()
    ))
}

#[test]
fn snapshot_rejects_corruption() {
    let path = tmp_path("corrupt");
    let f = Field::from_fn(test_grid(), |x, y| x * y);
    write_snapshot(&path, &f, 2.0).unwrap();
    let good = std::fs::read(&path).unwrap();

    // Bad magic.
    let mut bad = good.clone();
    bad[0] ^= 0xff;
    std::fs::write(&path, &bad).unwrap();
    assert!(matches!(read_snapshot(&path), Err(Error::Snapshot(_))));

    // Unsupported version.
    let mut bad = good.clone();
    bad[4] = 99;
    std::fs::write(&path, &bad).unwrap();
    assert!(matches!(read_snapshot(&path), Err(Error::Snapshot(_))));

    // Truncated payload.
    std::fs::write(&path, &good[..good.len() - 8]).unwrap();
    assert!(read_snapshot(&path).is_err());

    // Trailing garbage.
    let mut bad = good.clone();
    bad.extend_from_slice(&[0u8; 4]);
    std::fs::write(&path, &bad).unwrap();
    assert!(matches!(read_snapshot(&path), Err(Error::Snapshot(_))));

    let _ = std::fs::remove_file(&path);
}

// ---------------------------------------------------------------------------
// Property tests
// ---------------------------------------------------------------------------

fn field_pair() -> impl Strategy<Value = (Field, Field)> {
    (16usize..24, 0.1f64..0.5).prop_flat_map(|(n, h)| {
        let len = n * n;
        (
            proptest::collection::vec(-100.0f64..100.0, len),
            proptest::collection::vec(-100.0f64..100.0, len),
        )
            .prop_map(move |(a, b)| {
                let grid = Grid::square(n, h).unwrap();
                (Field::from_data(grid, a), Field::from_data(grid, b))
            })
    })
}

fn single_field() -> impl Strategy<Value = Field> {
    field_pair().prop_map(|(a, _)| a)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// sum f * (d g) = -sum (d f) * g on the periodic grid, for the
    /// antisymmetric first-difference taps of both orders.
    #[test]
    fn integration_by_parts_first_derivative((f, g) in field_pair()) {
        for order in [Order::Two, Order::Four] {
            for axis in [Axis::X, Axis::Y] {
                let dg = dx(&g, axis, order);
                let df = dx(&f, axis, order);
                let lhs: f64 = f.data().iter().zip(dg.data()).map(|(a, b)| a * b).sum();
                let rhs: f64 = df.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
                let mag: f64 = f
                    .data()
                    .iter()
                    .zip(dg.data())
                    .map(|(a, b)| (a * b).abs())
                    .sum();
                prop_assert!(
                    (lhs + rhs).abs() <= 1e-12 * (mag + 1.0),
                    "{order:?} {axis:?}: {lhs} vs {rhs}"
                );
            }
        }
    }

    /// sum f * (dd g) = sum (dd f) * g: the second difference is symmetric.
    #[test]
    fn integration_by_parts_second_derivative((f, g) in field_pair()) {
        for order in [Order::Two, Order::Four] {
            for axis in [Axis::X, Axis::Y] {
                let ddg = dxx(&g, axis, order);
                let ddf = dxx(&f, axis, order);
                let lhs: f64 = f.data().iter().zip(ddg.data()).map(|(a, b)| a * b).sum();
                let rhs: f64 = ddf.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
                let mag: f64 = f
                    .data()
                    .iter()
                    .zip(ddg.data())
                    .map(|(a, b)| (a * b).abs())
                    .sum();
                prop_assert!(
                    (lhs - rhs).abs() <= 1e-12 * (mag + 1.0),
                    "{order:?} {axis:?}: {lhs} vs {rhs}"
                );
            }
        }
    }

    /// Masking is idempotent, zeroes exactly the nodes beyond the radius, and
    /// leaves interior bits untouched.
    #[test]
    fn mask_is_idempotent_and_local(f in single_field(), radius in -1.0f64..6.0) {
        let original = f.clone();
        let mut once = f;
        mask_outside_radius(&mut once, radius);
        let mut twice = once.clone();
        mask_outside_radius(&mut twice, radius);
        prop_assert_eq!(once.data(), twice.data());

        let grid = once.grid();
        for i in 0..grid.nx() {
            for j in 0..grid.ny() {
                let r2 = grid.x(i) * grid.x(i) + grid.y(j) * grid.y(j);
                if radius < 0.0 || r2 > radius * radius {
                    prop_assert_eq!(once.at(i, j), 0.0);
                } else {
                    prop_assert_eq!(once.at(i, j).to_bits(), original.at(i, j).to_bits());
                }
            }
        }
    }

    /// Snapshots restore grid, payload bits, and time stamp exactly.
    #[test]
    fn snapshot_roundtrip_is_bit_exact(f in single_field(), t in -100.0f64..100.0) {
        let path = tmp_path("roundtrip");
        write_snapshot(&path, &f, t).unwrap();
        let (back, t_back) = read_snapshot(&path).unwrap();
        let _ = std::fs::remove_file(&path);
        prop_assert_eq!(back.grid(), f.grid());
        prop_assert_eq!(t_back.to_bits(), t.to_bits());
        for (a, b) in back.data().iter().zip(f.data()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
