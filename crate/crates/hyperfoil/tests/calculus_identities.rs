//! Identity tests for the boost calculus on time slabs.
//!
//! Polynomial inputs make every stencil step exact, so single boosts must
//! reproduce their closed forms to round-off. For iterated words the one
//! inexact step — the centered time difference of a cubic-in-`t` inner
//! result — contributes exactly `dt²` times a known factor, so even the
//! truncation term is pinned, not just bounded.

use hyperfoil::calculus::{
    check_exact_weight_identities, dt_field, iterated_vector_field, lorentz_boost, underdel,
    Letter, Slab,
};
use hyperfoil::grid::{Axis, Field, Grid, Order};
use hyperfoil::Error;

/// u(t, x, y) = t²x + x²y + t y², degree <= 2 in each variable separately.
fn poly(t: f64, x: f64, y: f64) -> f64 {
    t * t * x + x * x * y + t * y * y
}

fn poly_dt(t: f64, x: f64, y: f64) -> f64 {
    2.0 * t * x + y * y
}

fn test_slab(with_rates: bool) -> Slab {
    let grid = Grid::square(32, 0.25).unwrap();
    let rate: &dyn Fn(f64, f64, f64) -> f64 = &poly_dt;
    Slab::from_fn(grid, 0.1, 5.7, 7, poly, with_rates.then_some(rate)).unwrap()
}

/// Max |field - want(t, x, y)| over nodes at least `pad` cells from the wrap,
/// where the non-periodic polynomial samples are meaningful.
fn max_err(f: &Field, t: f64, want: impl Fn(f64, f64, f64) -> f64, pad: usize) -> f64 {
    let grid = f.grid();
    let mut worst = 0.0f64;
    for i in pad..grid.nx() - pad {
        for j in pad..grid.ny() - pad {
            worst = worst.max((f.at(i, j) - want(t, grid.x(i), grid.y(j))).abs());
        }
    }
    worst
}

#[test]
fn single_boosts_match_closed_forms_with_and_without_stored_rates() {
    // L1 u = 2tx² + xy² + t³ + 2txy, L2 u = 2txy + y³ + tx² + 2t²y.
    let l1 = |t: f64, x: f64, y: f64| 2.0 * t * x * x + x * y * y + t.powi(3) + 2.0 * t * x * y;
    let l2 = |t: f64, x: f64, y: f64| 2.0 * t * x * y + y.powi(3) + t * x * x + 2.0 * t * t * y;

    // u is quadratic in t, so the centered fallback difference is exact too.
    for with_rates in [true, false] {
        let slab = test_slab(with_rates);
        let level = 3;
        let t = slab.time(level);
        let bx = lorentz_boost(&slab, Axis::X, level, Order::Four).unwrap();
        let by = lorentz_boost(&slab, Axis::Y, level, Order::Four).unwrap();
        assert!(max_err(&bx, t, l1, 2) < 1e-10, "stored rates: {with_rates}");
        assert!(max_err(&by, t, l2, 2) < 1e-10, "stored rates: {with_rates}");
    }
}

#[test]
fn frame_derivative_is_boost_over_time() {
    let slab = test_slab(true);
    let level = 3;
    let t = slab.time(level);
    let boost = lorentz_boost(&slab, Axis::X, level, Order::Four).unwrap();
    let under = underdel(&slab, Axis::X, level, Order::Four).unwrap();
    let scale = boost.max_abs() + 1.0;
    for (u, b) in under.data().iter().zip(boost.data()) {
        assert!((u * t - b).abs() <= 1e-12 * scale);
    }
}

#[test]
fn double_boost_word_is_exact_including_its_truncation_term() {
    let slab = test_slab(false);
    let level = 3;
    let t = slab.time(level);
    let dt = slab.dt();

    // L2 L1 u = 3t²y + 2x²y + 2xy² + 2t²x + 2txy. The inner result is cubic
    // in t, and the derived slab carries no stored rates, so the outer time
    // difference adds exactly dt² * y.
    let w21 = iterated_vector_field(&slab, &[Letter::Boost(Axis::Y), Letter::Boost(Axis::X)], level, Order::Four)
        .unwrap();
    let want21 = |t: f64, x: f64, y: f64| {
        3.0 * t * t * y
            + 2.0 * x * x * y
            + 2.0 * x * y * y
            + 2.0 * t * t * x
            + 2.0 * t * x * y
            + dt * dt * y
    };
    assert!(max_err(&w21, t, want21, 4) < 1e-10);

    // L1 L2 u = x³ + 4txy + 2x²y + 2t²x + 2t²y: the inner result is only
    // quadratic in t, so this word is exact outright.
    let w12 = iterated_vector_field(&slab, &[Letter::Boost(Axis::X), Letter::Boost(Axis::Y)], level, Order::Four)
        .unwrap();
    let want12 = |t: f64, x: f64, y: f64| {
        x.powi(3) + 4.0 * t * x * y + 2.0 * x * x * y + 2.0 * t * t * x + 2.0 * t * t * y
    };
    assert!(max_err(&w12, t, want12, 4) < 1e-10);
}

#[test]
fn mixed_translation_boost_words_match_closed_forms() {
    let slab = test_slab(false);
    let level = 3;
    let t = slab.time(level);

    // ∂_t L1 u = 2x² + 3t² + 2xy (inner cubic in t: centered difference of
    // the derived slab adds dt² on the t³ term's derivative — but here the
    // outer letter itself is the time difference, applied to L1 u directly,
    // so the dt² correction lands on ∂_t(t³) = 3t²: exactly dt².
    let w = iterated_vector_field(&slab, &[Letter::Dt, Letter::Boost(Axis::X)], level, Order::Four)
        .unwrap();
    let dt = slab.dt();
    let want = |t: f64, x: f64, y: f64| 2.0 * x * x + 3.0 * t * t + 2.0 * x * y + dt * dt;
    assert!(max_err(&w, t, want, 4) < 1e-10);

    // L1 ∂_y u = x ∂_t∂_y u + t ∂_x∂_y u = x(2y) + t(2x): inner ∂_y u is
    // quadratic in t — exact.
    let w = iterated_vector_field(&slab, &[Letter::Boost(Axis::X), Letter::Dx(Axis::Y)], level, Order::Four)
        .unwrap();
    let want = |_t: f64, x: f64, y: f64| 2.0 * x * y + 2.0 * t * x;
    assert!(max_err(&w, t, want, 4) < 1e-10);
}

#[test]
fn time_difference_fallback_needs_interior_levels() {
    let slab = test_slab(false);
    assert!(matches!(
        lorentz_boost(&slab, Axis::X, 0, Order::Four),
        Err(Error::InvalidConfig(_))
    ));
    let last = slab.len() - 1;
    assert!(matches!(
        dt_field(&slab, last),
        Err(Error::InvalidConfig(_))
    ));
    // With stored rates the boundary works.
    let rated = test_slab(true);
    assert!(lorentz_boost(&rated, Axis::X, 0, Order::Four).is_ok());
}

#[test]
fn stored_rates_take_precedence_over_differences() {
    let grid = Grid::square(32, 0.25).unwrap();
    // Deliberately wrong stored rate: dt_field must return it verbatim.
    let wrong = |t: f64, x: f64, _y: f64| 7.0 + t + x;
    let slab = Slab::from_fn(grid, 0.1, 5.7, 5, poly, Some(&wrong)).unwrap();
    let got = dt_field(&slab, 2).unwrap();
    let t = slab.time(2);
    assert!(max_err(&got, t, |t, x, _| 7.0 + t + x, 0) == 0.0);
}

#[test]
fn slab_rejects_mistimed_levels() {
    let grid = Grid::square(32, 0.25).unwrap();
    let mut slab = Slab::new(grid, 0.1, 5.0).unwrap();
    slab.push_level(5.0, Field::zeros(grid), None).unwrap();
    assert!(slab.push_level(5.6, Field::zeros(grid), None).is_err());
    slab.push_level(5.1, Field::zeros(grid), None).unwrap();
    assert_eq!(slab.len(), 2);
    assert_eq!(slab.t_hi(), 5.1);
}

#[test]
fn weight_identities_converge_at_stencil_order() {
    let gamma = 0.125;
    let coarse = check_exact_weight_identities(0.2, gamma, Order::Four).unwrap();
    let fine = check_exact_weight_identities(0.1, gamma, Order::Four).unwrap();

    // The coordinate identities hold discretely at round-off.
    for r in [&coarse, &fine] {
        assert!(r.res_boost_t <= 1e-9, "L_a t residual {}", r.res_boost_t);
        assert!(r.res_boost_x <= 1e-9, "L_a x residual {}", r.res_boost_x);
        assert!(r.res_boost_weight.is_finite() && r.res_boost_weight > 0.0);
    }

    // Truncation-limited residuals shrink at roughly the stencil order
    // (the closed-form time input leaves only spatial error).
    for (c, f, label) in [
        (coarse.res_boost_weight, fine.res_boost_weight, "boost weight"),
        (coarse.res_double_boost_weight, fine.res_double_boost_weight, "double boost"),
        (coarse.res_boost_s, fine.res_boost_s, "boost of s"),
    ] {
        let ratio = c / f;
        assert!(
            (8.0..=32.0).contains(&ratio),
            "{label} residual ratio {ratio} (coarse {c}, fine {f})"
        );
    }
}
