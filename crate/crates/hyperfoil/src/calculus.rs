//! Discrete space-time calculus on stacks of time levels.
//!
//! A [`Slab`] is a short stack of field snapshots at uniformly spaced times.
//! On top of it this module provides time derivatives, the Lorentz boost
//! vector fields `L_a = x_a ∂_t + t ∂_a`, iterated boost/derivative words up
//! to length two, the semi-hyperboloidal frame `L_a / t`, and exact
//! closed-form identity checks for the weight functions used by the energy
//! machinery.

use crate::error::{Error, Result};
use crate::grid::{dx, Axis, Field, Grid, Order};

/// Minimum number of levels for a slab to support hyperboloid slicing.
pub const MIN_WINDOW: usize = 5;

/// A uniformly spaced stack of time levels of one scalar field.
///
/// Each level may carry a stored time derivative ("rate"). Stored rates are
/// preferred by [`dt_field`]; levels without one fall back to a centered
/// difference of the neighbouring values.
#[derive(Clone, Debug)]
pub struct Slab {
    grid: Grid,
    dt: f64,
    t_start: f64,
    values: Vec<Field>,
    rates: Vec<Option<Field>>,
}

impl Slab {
    pub fn new(grid: Grid, dt: f64, t_start: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidConfig(format!("slab dt must be positive, got {dt}")));
        }
        Ok(Slab { grid, dt, t_start, values: Vec::new(), rates: Vec::new() })
    }

    /// Append a level. `t` must equal `t_start + len * dt` up to rounding.
    pub fn push_level(&mut self, t: f64, value: Field, rate: Option<Field>) -> Result<()> {
        if value.grid() != self.grid {
            return Err(Error::GridMismatch("slab level on a different grid".into()));
        }
        if let Some(r) = &rate {
            if r.grid() != self.grid {
                return Err(Error::GridMismatch("slab rate on a different grid".into()));
            }
        }
        let expected = self.t_start + self.values.len() as f64 * self.dt;
        if (t - expected).abs() > 1e-9 * self.dt.max(1.0) {
            return Err(Error::InvalidConfig(format!(
                "non-uniform slab time: got {t}, expected {expected}"
            )));
        }
        self.values.push(value);
        self.rates.push(rate);
        Ok(())
    }

    /// Sample a closed-form function `u(t, x, y)` (and optionally its exact
    /// time derivative) on `n_levels` uniformly spaced levels.
    pub fn from_fn(
        grid: Grid,
        dt: f64,
        t_start: f64,
        n_levels: usize,
        value: impl Fn(f64, f64, f64) -> f64,
        rate: Option<&dyn Fn(f64, f64, f64) -> f64>,
    ) -> Result<Self> {
        let mut slab = Slab::new(grid, dt, t_start)?;
        for k in 0..n_levels {
            let t = t_start + k as f64 * dt;
            let v = Field::from_fn(grid, |x, y| value(t, x, y));
            let r = rate.map(|rf| Field::from_fn(grid, |x, y| rf(t, x, y)));
            slab.push_level(t, v, r)?;
        }
        Ok(slab)
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
    pub fn time(&self, level: usize) -> f64 {
        self.t_start + level as f64 * self.dt
    }
    pub fn t_lo(&self) -> f64 {
        self.t_start
    }
    pub fn t_hi(&self) -> f64 {
        self.time(self.len().saturating_sub(1))
    }
    pub fn value(&self, level: usize) -> &Field {
        &self.values[level]
    }
    pub fn rate(&self, level: usize) -> Option<&Field> {
        self.rates[level].as_ref()
    }

    /// True if the slab holds enough levels for hyperboloid slicing.
    pub fn has_min_window(&self) -> bool {
        self.len() >= MIN_WINDOW
    }
}

/// Time derivative at a level: the stored rate when available, otherwise the
/// centered O(dt²) difference of the neighbouring values.
pub fn dt_field(slab: &Slab, level: usize) -> Result<Field> {
    if level >= slab.len() {
        return Err(Error::InvalidConfig(format!(
            "level {level} out of range (slab has {})",
            slab.len()
        )));
    }
    if let Some(r) = slab.rate(level) {
        return Ok(r.clone());
    }
    if level == 0 || level + 1 >= slab.len() {
        return Err(Error::InvalidConfig(format!(
            "no stored rate at boundary level {level}; centered difference needs both neighbours"
        )));
    }
    let mut out = slab.value(level + 1).clone();
    let inv = 1.0 / (2.0 * slab.dt);
    for (o, m) in out.data_mut().iter_mut().zip(slab.value(level - 1).data()) {
        *o = (*o - m) * inv;
    }
    Ok(out)
}

/// Lorentz boost `L_a u = x_a ∂_t u + t ∂_a u` evaluated at one slab level.
pub fn lorentz_boost(slab: &Slab, a: Axis, level: usize, order: Order) -> Result<Field> {
    let ut = dt_field(slab, level)?;
    let ua = dx(slab.value(level), a, order);
    let t = slab.time(level);
    let grid = slab.grid();
    let mut out = Field::zeros(grid);
    for i in 0..grid.nx() {
        let x = grid.x(i);
        for j in 0..grid.ny() {
            let coord = match a {
                Axis::X => x,
                Axis::Y => grid.y(j),
            };
            out.set(i, j, coord * ut.at(i, j) + t * ua.at(i, j));
        }
    }
    Ok(out)
}

/// Semi-hyperboloidal frame derivative `L_a u / t`.
pub fn underdel(slab: &Slab, a: Axis, level: usize, order: Order) -> Result<Field> {
    let mut out = lorentz_boost(slab, a, level, order)?;
    let inv = 1.0 / slab.time(level);
    out.data_mut().iter_mut().for_each(|v| *v *= inv);
    Ok(out)
}

/// One letter of a derivative word: a translation `∂_α` or a boost `L_a`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Letter {
    Dt,
    Dx(Axis),
    Boost(Axis),
}

/// Apply a word of vector fields (left-to-right: the first letter acts last)
/// to the slab field at `level`. Words of length at most 2 are supported;
/// longer words return [`Error::WordTooLong`].
///
/// Boost letters consume one interior level on each side when the inner
/// result has to be differentiated in time again, so length-2 words need the
/// requested level to sit at least two levels away from the slab boundary
/// when no stored rates are available.
pub fn iterated_vector_field(
    slab: &Slab,
    word: &[Letter],
    level: usize,
    order: Order,
) -> Result<Field> {
    match word.len() {
        0 => Ok(slab.value(level).clone()),
        1 => apply_letter(slab, word[0], level, order),
        2 => {
            // Build a derived slab of the inner letter's result on every
            // level where it is defined, then apply the outer letter.
            let inner = word[1];
            let (lo, hi) = inner_range(slab, inner);
            if lo > hi {
                return Err(Error::InvalidConfig(
                    "slab too short for a length-2 word".into(),
                ));
            }
            let mut derived = Slab::new(slab.grid(), slab.dt(), slab.time(lo))?;
            for m in lo..=hi {
                let f = apply_letter(slab, inner, m, order)?;
                derived.push_level(slab.time(m), f, None)?;
            }
            if level < lo {
                return Err(Error::InvalidConfig(format!(
                    "level {level} not covered by the derived slab (starts at {lo})"
                )));
            }
            apply_letter(&derived, word[0], level - lo, order)
        }
        n => Err(Error::WordTooLong { len: n }),
    }
}

/// Levels on which a single letter can be evaluated.
fn inner_range(slab: &Slab, letter: Letter) -> (usize, usize) {
    let needs_dt = matches!(letter, Letter::Dt | Letter::Boost(_));
    let all_rates = (0..slab.len()).all(|k| slab.rate(k).is_some());
    if needs_dt && !all_rates {
        (1, slab.len().saturating_sub(2))
    } else {
        (0, slab.len().saturating_sub(1))
    }
}

fn apply_letter(slab: &Slab, letter: Letter, level: usize, order: Order) -> Result<Field> {
    match letter {
        Letter::Dt => dt_field(slab, level),
        Letter::Dx(a) => Ok(dx(slab.value(level), a, order)),
        Letter::Boost(a) => lorentz_boost(slab, a, level, order),
    }
}

// ---------------------------------------------------------------------------
// Exact weight identities
// ---------------------------------------------------------------------------

/// Residuals of the closed-form boost identities, evaluated on analytic
/// samples at a fixed time. All maxima are taken over the annulus
/// `r_min <= r <= t - pad` inside the light cone, where the weights are
/// smooth and the radial unit vector is well defined.
#[derive(Clone, Debug)]
pub struct WeightIdentityReport {
    pub h: f64,
    pub gamma: f64,
    pub t: f64,
    /// max |L_a (t-r)^{-γ} - γ (t-r)^{-γ} x_a / r|
    pub res_boost_weight: f64,
    /// max |L_b L_a (t-r)^{-γ} - closed form| (centered time differencing,
    /// so this converges at the truncation order rather than to 1e-6).
    pub res_double_boost_weight: f64,
    /// max |L_a s|, s = sqrt(t² - r²); exactly zero in the continuum.
    pub res_boost_s: f64,
    /// max |L_a t - x_a|; exact discretely.
    pub res_boost_t: f64,
    /// max |L_a x_b - t δ_ab|; exact discretely.
    pub res_boost_x: f64,
}

/// Evaluate the exact weight identities for one `(h, γ)` pair.
///
/// `L_a (t-r)^{-γ} = γ (t-r)^{-γ} x_a / r` holds identically in the
/// continuum for any `γ in (0, 1]`; discretely the residual is pure spatial
/// truncation error because the time derivative of the weight is supplied in
/// closed form.
pub fn check_exact_weight_identities(h: f64, gamma: f64, order: Order) -> Result<WeightIdentityReport> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidConfig(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    let t_eval = 6.0;
    let (r_min, pad) = (1.0, 2.0);
    // Domain only needs to cover r <= t - pad plus stencil reach.
    let half = t_eval - pad + 1.0 + 4.0 * h;
    let n = (2.0 * half / h).ceil() as usize + 1;
    let n = n.max(Grid::MIN_NODES) | 1; // odd so the origin is a node
    let grid = Grid::square(n, h)?;

    let weight = |t: f64, x: f64, y: f64| (t - (x * x + y * y).sqrt()).powf(-gamma);
    let weight_dt = |t: f64, x: f64, y: f64| -gamma * (t - (x * x + y * y).sqrt()).powf(-gamma - 1.0);

    // dt only matters for the double-boost residual (centered differencing of
    // the derived slab); keep it tied to h so the ladder converges.
    let dt = 0.5 * h;
    let slab = Slab::from_fn(grid, dt, t_eval - 2.0 * dt, 5, weight, Some(&weight_dt))?;
    let level = 2;

    let in_region = |x: f64, y: f64| {
        let r = (x * x + y * y).sqrt();
        r >= r_min && r <= t_eval - pad
    };

    let mut report = WeightIdentityReport {
        h,
        gamma,
        t: t_eval,
        res_boost_weight: 0.0,
        res_double_boost_weight: 0.0,
        res_boost_s: 0.0,
        res_boost_t: 0.0,
        res_boost_x: 0.0,
    };

    // --- L_a (t-r)^{-γ} ---
    for a in [Axis::X, Axis::Y] {
        let la = lorentz_boost(&slab, a, level, order)?;
        let mut worst = 0.0f64;
        for i in 0..grid.nx() {
            let x = grid.x(i);
            for j in 0..grid.ny() {
                let y = grid.y(j);
                if !in_region(x, y) {
                    continue;
                }
                let r = (x * x + y * y).sqrt();
                let coord = if a == Axis::X { x } else { y };
                let exact = gamma * weight(t_eval, x, y) * coord / r;
                worst = worst.max((la.at(i, j) - exact).abs());
            }
        }
        report.res_boost_weight = report.res_boost_weight.max(worst);
    }

    // --- L_b L_a (t-r)^{-γ} against the closed form
    //     γ² w x_a x_b / r² + γ w δ_ab t / r - γ w x_a x_b t / r³ ---
    for (b, a) in [(Axis::X, Axis::X), (Axis::X, Axis::Y), (Axis::Y, Axis::Y)] {
        let lla = iterated_vector_field(&slab, &[Letter::Boost(b), Letter::Boost(a)], level, order)?;
        let mut worst = 0.0f64;
        for i in 0..grid.nx() {
            let x = grid.x(i);
            for j in 0..grid.ny() {
                let y = grid.y(j);
                if !in_region(x, y) {
                    continue;
                }
                let r = (x * x + y * y).sqrt();
                let (xa, xb) = (
                    if a == Axis::X { x } else { y },
                    if b == Axis::X { x } else { y },
                );
                let delta = if a == b { 1.0 } else { 0.0 };
                let w = weight(t_eval, x, y);
                let exact = gamma * gamma * w * xa * xb / (r * r) + gamma * w * delta * t_eval / r
                    - gamma * w * xa * xb * t_eval / (r * r * r);
                worst = worst.max((lla.at(i, j) - exact).abs());
            }
        }
        report.res_double_boost_weight = report.res_double_boost_weight.max(worst);
    }

    // --- L_a s = 0, s = sqrt(t² - r²) ---
    let s_fn = |t: f64, x: f64, y: f64| (t * t - x * x - y * y).sqrt();
    let s_dt = |t: f64, x: f64, y: f64| t / (t * t - x * x - y * y).sqrt();
    let s_slab = Slab::from_fn(grid, dt, t_eval - 2.0 * dt, 5, s_fn, Some(&s_dt))?;
    for a in [Axis::X, Axis::Y] {
        let la = lorentz_boost(&s_slab, a, level, order)?;
        let mut worst = 0.0f64;
        for i in 0..grid.nx() {
            let x = grid.x(i);
            for j in 0..grid.ny() {
                if in_region(x, grid.y(j)) {
                    worst = worst.max(la.at(i, j).abs());
                }
            }
        }
        report.res_boost_s = report.res_boost_s.max(worst);
    }

    // --- L_a t = x_a and L_a x_b = t δ_ab (discretely exact) ---
    let t_slab = Slab::from_fn(grid, dt, t_eval - 2.0 * dt, 5, |t, _, _| t, Some(&|_, _, _| 1.0))?;
    for a in [Axis::X, Axis::Y] {
        let la = lorentz_boost(&t_slab, a, level, order)?;
        let mut worst = 0.0f64;
        for i in 0..grid.nx() {
            let x = grid.x(i);
            for j in 0..grid.ny() {
                if in_region(x, grid.y(j)) {
                    let coord = if a == Axis::X { x } else { grid.y(j) };
                    worst = worst.max((la.at(i, j) - coord).abs());
                }
            }
        }
        report.res_boost_t = report.res_boost_t.max(worst);
    }
    for b in [Axis::X, Axis::Y] {
        let xb_slab = Slab::from_fn(
            grid,
            dt,
            t_eval - 2.0 * dt,
            5,
            |_, x, y| if b == Axis::X { x } else { y },
            Some(&|_, _, _| 0.0),
        )?;
        for a in [Axis::X, Axis::Y] {
            let la = lorentz_boost(&xb_slab, a, level, order)?;
            let delta = if a == b { 1.0 } else { 0.0 };
            let mut worst = 0.0f64;
            for i in 0..grid.nx() {
                let x = grid.x(i);
                for j in 0..grid.ny() {
                    if in_region(x, grid.y(j)) {
                        worst = worst.max((la.at(i, j) - delta * t_eval).abs());
                    }
                }
            }
            report.res_boost_x = report.res_boost_x.max(worst);
        }
    }

    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_grid() -> Grid {
        Grid::square(33, 0.25).unwrap()
    }

    #[test]
    fn slab_rejects_non_uniform_times() {
        let grid = small_grid();
        let mut slab = Slab::new(grid, 0.1, 2.0).unwrap();
        slab.push_level(2.0, Field::zeros(grid), None).unwrap();
        slab.push_level(2.1, Field::zeros(grid), None).unwrap();
        assert!(slab.push_level(2.25, Field::zeros(grid), None).is_err());
    }

    #[test]
    fn dt_field_prefers_stored_rate() {
        let grid = small_grid();
        // value  = t * x, stored rate deliberately different from the
        // centered difference (rate = 2x) so preference is observable.
        let mut slab = Slab::new(grid, 0.1, 1.0).unwrap();
        for k in 0..3 {
            let t = 1.0 + 0.1 * k as f64;
            slab.push_level(
                t,
                Field::from_fn(grid, |x, _| t * x),
                Some(Field::from_fn(grid, |x, _| 2.0 * x)),
            )
            .unwrap();
        }
        let d = dt_field(&slab, 1).unwrap();
        let x0 = grid.x(20);
        assert!((d.at(20, 16) - 2.0 * x0).abs() < 1e-14);
    }

    #[test]
    fn dt_field_centered_fallback_is_second_order() {
        let grid = small_grid();
        let mut errs = Vec::new();
        for &dt in &[0.1, 0.05] {
            let slab = Slab::from_fn(grid, dt, 1.0, 3, |t, x, _| (t * (1.0 + 0.3 * x)).sin(), None).unwrap();
            let d = dt_field(&slab, 1).unwrap();
            let t = 1.0 + dt;
            let mut worst = 0.0f64;
            for i in 0..grid.nx() {
                let x = grid.x(i);
                let exact = (1.0 + 0.3 * x) * (t * (1.0 + 0.3 * x)).cos();
                worst = worst.max((d.at(i, 16) - exact).abs());
            }
            errs.push(worst);
        }
        let ratio = errs[0] / errs[1];
        assert!((ratio - 4.0).abs() < 0.5, "centered fallback not O(dt²): ratio {ratio}");
    }

    #[test]
    fn word_longer_than_two_is_rejected() {
        let grid = small_grid();
        let slab = Slab::from_fn(grid, 0.1, 1.0, 7, |t, x, y| t + x + y, Some(&|_, _, _| 1.0)).unwrap();
        let word = [Letter::Dt, Letter::Dt, Letter::Dt];
        match iterated_vector_field(&slab, &word, 3, Order::Four) {
            Err(Error::WordTooLong { len: 3 }) => {}
            other => panic!("expected WordTooLong, got {other:?}"),
        }
    }
}
