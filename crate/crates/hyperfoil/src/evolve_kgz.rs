//! Evolution of the reduced Klein-Gordon-Zakharov system
//!
//! ```text
//!   ∂_tt E  = ΔE - E + N·E        N = Δn
//!   ∂_tt n  = Δn + 2 E²
//! ```
//!
//! on a periodic grid large enough that the compactly supported data never
//! reach the boundary. The physical density is the diagnostic `N = Δn`.
//! Initial data are placed at `t0` as a smooth bump `ε·exp(1 - 1/(1 - r²))`
//! supported in the unit ball, scaled per component.
//!
//! The default integrator is velocity Verlet in kick-drift-kick form with
//! the acceleration cached across steps; classic RK4 is available for
//! comparison. After every full step the state is zeroed outside the guard
//! band `r <= t - 1 + margin` and the acceleration is recomputed from the
//! masked state, so round-off shed outside the light cone cannot feed back.

use crate::error::{Error, Result};
use crate::grid::{apply_cone_mask_with_margin, axpy, laplacian_into, Field, Grid, Order};
use crate::hyperboloid::{
    CompKind, CompLevel, CompSpec, SliceSet, StreamingSlicer, WordSet,
};

/// Component amplitudes of the initial bump.
#[derive(Clone, Copy, Debug)]
pub struct Seeds {
    pub e0: f64,
    pub e1: f64,
    pub n0: f64,
    pub n1: f64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds { e0: 1.0, e1: 0.3, n0: 0.8, n1: 0.25 }
    }
}

/// Slice extraction settings for a run.
#[derive(Clone, Debug)]
pub struct SliceConfig {
    pub s_values: Vec<f64>,
    /// Ghost-weight exponent γ.
    pub gamma: f64,
    /// Decay-weight exponent δ for the second-derivative sup.
    pub delta: f64,
    pub words_e: WordSet,
    pub words_n: WordSet,
    /// Keep full per-node slice fields in memory (desk scale only).
    pub store_fields: bool,
    /// Also slice the density diagnostic `N = Δn` (values only).
    pub with_density: bool,
}

/// Full configuration of one evolution.
#[derive(Clone, Debug)]
pub struct KgzConfig {
    pub grid: Grid,
    pub order: Order,
    pub dt: f64,
    pub t0: f64,
    pub t_final: f64,
    pub eps: f64,
    pub seeds: Seeds,
    pub integrator: Integrator,
    /// Zero the state outside `r <= t - 1 + mask_margin` after each step.
    pub mask: bool,
    pub mask_margin: f64,
    /// Turn off the `N·E` / `2E²` couplings (linear wave + Klein-Gordon).
    pub coupling: bool,
    pub series_every: usize,
    pub slices: Option<SliceConfig>,
}

impl KgzConfig {
    /// Sensible defaults for a cone-respecting run; callers override fields.
    pub fn new(grid: Grid, dt: f64, t_final: f64) -> Self {
        KgzConfig {
            grid,
            order: Order::Four,
            dt,
            t0: 2.0,
            t_final,
            eps: 0.01,
            seeds: Seeds::default(),
            integrator: Integrator::Verlet,
            mask: true,
            mask_margin: 1.0,
            coupling: true,
            series_every: 10,
            slices: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Integrator {
    Verlet,
    Rk4,
}

/// Fields and rates at one instant.
#[derive(Clone, Debug)]
pub struct KgzState {
    pub t: f64,
    pub e: Field,
    pub de: Field,
    pub n: Field,
    pub dn: Field,
}

/// One row of the run's time-series diagnostics.
#[derive(Clone, Copy, Debug)]
pub struct SeriesRow {
    pub t: f64,
    pub sup_e: f64,
    pub sup_n: f64,
    pub sup_density: f64,
    /// sup over `r <= t - 1.5` of `|N| · t^{1/2} (t - r)^{1/2}`.
    pub wsup_density: f64,
}

/// Result of a run: diagnostics, optional slices, final state.
pub struct KgzOutput {
    pub series: Vec<SeriesRow>,
    pub slices: Option<SliceSet>,
    pub final_state: KgzState,
    pub steps: usize,
}

/// The standard bump `exp(1 - 1/(1 - r²))` inside the unit ball, zero out.
pub fn bump(grid: Grid) -> Field {
    Field::from_fn(grid, |x, y| {
        let r2 = x * x + y * y;
        if r2 < 1.0 {
            (1.0 - 1.0 / (1.0 - r2)).exp()
        } else {
            0.0
        }
    })
}

/// Initial state at `t0`: seeds times the unit bump.
pub fn initial_state(cfg: &KgzConfig) -> KgzState {
    let b = bump(cfg.grid);
    let scale = |a: f64| {
        let mut f = b.clone();
        for v in f.data_mut() {
            *v *= cfg.eps * a;
        }
        f
    };
    KgzState {
        t: cfg.t0,
        e: scale(cfg.seeds.e0),
        de: scale(cfg.seeds.e1),
        n: scale(cfg.seeds.n0),
        dn: scale(cfg.seeds.n1),
    }
}

/// Reconstruct the density diagnostic `N = Δn`.
pub fn reconstruct_density(n: &Field, order: Order) -> Field {
    let mut out = Field::zeros(n.grid());
    laplacian_into(n, order, &mut out);
    out
}

/// Scratch buffers for the right-hand side.
pub struct RhsScratch {
    lap_e: Field,
    density: Field,
}

impl RhsScratch {
    pub fn new(grid: Grid) -> Self {
        RhsScratch { lap_e: Field::zeros(grid), density: Field::zeros(grid) }
    }
}

/// Accelerations of both components; `density` holds `Δn` as a by-product.
fn rhs(
    state: &KgzState,
    order: Order,
    coupling: bool,
    scratch: &mut RhsScratch,
    ae: &mut Field,
    an: &mut Field,
) {
    laplacian_into(&state.e, order, &mut scratch.lap_e);
    laplacian_into(&state.n, order, &mut scratch.density);
    let lap_e = scratch.lap_e.data();
    let density = scratch.density.data();
    let e = state.e.data();
    let ae = ae.data_mut();
    let an = an.data_mut();
    if coupling {
        for i in 0..e.len() {
            ae[i] = lap_e[i] - e[i] + density[i] * e[i];
            an[i] = density[i] + 2.0 * e[i] * e[i];
        }
    } else {
        for i in 0..e.len() {
            ae[i] = lap_e[i] - e[i];
            an[i] = density[i];
        }
    }
}

/// Time derivative of the accelerations, for slice-level jets:
/// `∂_t(∂_tt E) = Δ∂_tE - ∂_tE + (Δ∂_tn)E + (Δn)∂_tE`,
/// `∂_t(∂_tt n) = Δ∂_tn + 4 E ∂_tE`.
fn rhs_rate(
    state: &KgzState,
    order: Order,
    coupling: bool,
    density: &Field,
    accr_e: &mut Field,
    accr_n: &mut Field,
    scratch_lap: &mut Field,
    scratch_dd: &mut Field,
) {
    laplacian_into(&state.de, order, scratch_lap);
    laplacian_into(&state.dn, order, scratch_dd);
    let lap_de = scratch_lap.data();
    let d_density = scratch_dd.data();
    let density = density.data();
    let e = state.e.data();
    let de = state.de.data();
    let ae = accr_e.data_mut();
    let an = accr_n.data_mut();
    if coupling {
        for i in 0..e.len() {
            ae[i] = lap_de[i] - de[i] + d_density[i] * e[i] + density[i] * de[i];
            an[i] = d_density[i] + 4.0 * e[i] * de[i];
        }
    } else {
        for i in 0..e.len() {
            ae[i] = lap_de[i] - de[i];
            an[i] = d_density[i];
        }
    }
}

fn mask_state(state: &mut KgzState, margin: f64) {
    let t = state.t;
    apply_cone_mask_with_margin(&mut state.e, t, margin);
    apply_cone_mask_with_margin(&mut state.de, t, margin);
    apply_cone_mask_with_margin(&mut state.n, t, margin);
    apply_cone_mask_with_margin(&mut state.dn, t, margin);
}

/// One velocity-Verlet step (kick-drift-kick) with cached accelerations.
/// `ae`/`an` must hold the accelerations of the incoming state and are left
/// holding those of the outgoing state.
#[allow(clippy::too_many_arguments)]
pub fn step_verlet(
    state: &mut KgzState,
    ae: &mut Field,
    an: &mut Field,
    cfg: &KgzConfig,
    scratch: &mut RhsScratch,
) {
    let dt = cfg.dt;
    axpy(&mut state.de, 0.5 * dt, ae);
    axpy(&mut state.dn, 0.5 * dt, an);
    let de_now = state.de.clone();
    let dn_now = state.dn.clone();
    axpy(&mut state.e, dt, &de_now);
    axpy(&mut state.n, dt, &dn_now);
    state.t += dt;
    if cfg.mask {
        mask_state(state, cfg.mask_margin);
    }
    rhs(state, cfg.order, cfg.coupling, scratch, ae, an);
    if cfg.mask {
        apply_cone_mask_with_margin(ae, state.t, cfg.mask_margin);
        apply_cone_mask_with_margin(an, state.t, cfg.mask_margin);
    }
    axpy(&mut state.de, 0.5 * dt, ae);
    axpy(&mut state.dn, 0.5 * dt, an);
}

/// One classic RK4 step on the first-order system.
pub fn step_rk4(state: &mut KgzState, cfg: &KgzConfig, scratch: &mut RhsScratch) {
    let dt = cfg.dt;
    let grid = state.e.grid();
    let mut k = |s: &KgzState| -> (Field, Field, Field, Field) {
        let mut ae = Field::zeros(grid);
        let mut an = Field::zeros(grid);
        rhs(s, cfg.order, cfg.coupling, scratch, &mut ae, &mut an);
        (s.de.clone(), ae, s.dn.clone(), an)
    };
    let k1 = k(state);
    let mut s2 = state.clone();
    axpy(&mut s2.e, 0.5 * dt, &k1.0);
    axpy(&mut s2.de, 0.5 * dt, &k1.1);
    axpy(&mut s2.n, 0.5 * dt, &k1.2);
    axpy(&mut s2.dn, 0.5 * dt, &k1.3);
    let k2 = k(&s2);
    let mut s3 = state.clone();
    axpy(&mut s3.e, 0.5 * dt, &k2.0);
    axpy(&mut s3.de, 0.5 * dt, &k2.1);
    axpy(&mut s3.n, 0.5 * dt, &k2.2);
    axpy(&mut s3.dn, 0.5 * dt, &k2.3);
    let k3 = k(&s3);
    let mut s4 = state.clone();
    axpy(&mut s4.e, dt, &k3.0);
    axpy(&mut s4.de, dt, &k3.1);
    axpy(&mut s4.n, dt, &k3.2);
    axpy(&mut s4.dn, dt, &k3.3);
    let k4 = k(&s4);
    let c = dt / 6.0;
    for (dst, (a, b, cc, d)) in [
        (&mut state.e, (&k1.0, &k2.0, &k3.0, &k4.0)),
        (&mut state.de, (&k1.1, &k2.1, &k3.1, &k4.1)),
        (&mut state.n, (&k1.2, &k2.2, &k3.2, &k4.2)),
        (&mut state.dn, (&k1.3, &k2.3, &k3.3, &k4.3)),
    ] {
        let dd = dst.data_mut();
        let (a, b, cc, d) = (a.data(), b.data(), cc.data(), d.data());
        for i in 0..dd.len() {
            dd[i] += c * (a[i] + 2.0 * b[i] + 2.0 * cc[i] + d[i]);
        }
    }
    state.t += dt;
    if cfg.mask {
        mask_state(state, cfg.mask_margin);
    }
}

/// Interior sup of `|N| t^{1/2} (t-r)^{1/2}` over `r <= t - 1.5`.
fn weighted_sup_density(density: &Field, t: f64) -> f64 {
    let grid = density.grid();
    let ny = grid.ny();
    let mut m = 0.0f64;
    for i in 0..grid.nx() {
        let x = grid.x(i);
        for j in 0..ny {
            let y = grid.y(j);
            let r = (x * x + y * y).sqrt();
            if r <= t - 1.5 {
                let v = density.data()[i * ny + j].abs();
                m = m.max(v * t.sqrt() * (t - r).sqrt());
            }
        }
    }
    m
}

fn check_finite(state: &KgzState) -> Result<()> {
    for (name, f) in [("E", &state.e), ("n", &state.n)] {
        if let Some((i, j)) = f.first_non_finite() {
            return Err(Error::NonFinite { field: name, t: state.t, i, j });
        }
    }
    Ok(())
}

/// Run the system from explicit initial data.
///
/// The caller owns the initial state; [`run_kgz`] wraps this with the
/// standard bump data. Slices, when configured, are fed every step with the
/// post-step state, its rates, accelerations, acceleration rates (when the
/// word set needs them) and the nonlinear sources.
pub fn run_kgz_from(cfg: &KgzConfig, mut state: KgzState) -> Result<KgzOutput> {
    let grid = cfg.grid;
    if cfg.dt <= 0.0 || !cfg.dt.is_finite() {
        return Err(Error::InvalidConfig(format!("dt must be positive, got {}", cfg.dt)));
    }
    if cfg.dt > 0.5 * grid.h() + 1e-12 {
        return Err(Error::Cfl { dt: cfg.dt, h: grid.h(), max: 0.5 * grid.h() });
    }
    if cfg.mask {
        grid.check_covers_cone(cfg.t_final)?;
    }
    if cfg.t_final <= cfg.t0 {
        return Err(Error::InvalidConfig("t_final must exceed t0".into()));
    }
    let span = cfg.t_final - cfg.t0;
    let n_steps_f = span / cfg.dt;
    if (n_steps_f - n_steps_f.round()).abs() > 1e-6 {
        return Err(Error::InvalidConfig(format!(
            "t_final - t0 = {span} is not an integral number of steps at dt = {}",
            cfg.dt
        )));
    }
    // Two extra steps so every slice window through t_final closes.
    let n_steps = n_steps_f.round() as usize + 2;

    let mut slicer = match &cfg.slices {
        Some(sc) => {
            let mut comps = vec![
                CompSpec { name: "E", kind: CompKind::KleinGordon, words: sc.words_e },
                CompSpec { name: "n", kind: CompKind::Wave, words: sc.words_n },
            ];
            if sc.with_density {
                comps.push(CompSpec {
                    name: "density",
                    kind: CompKind::Diagnostic,
                    words: WordSet::None,
                });
            }
            Some(StreamingSlicer::new(
                grid,
                cfg.order,
                cfg.dt,
                cfg.t0,
                &sc.s_values,
                sc.gamma,
                sc.delta,
                comps,
                sc.store_fields,
                None,
            )?)
        }
        None => None,
    };
    let needs_accr = cfg
        .slices
        .as_ref()
        .map(|sc| sc.words_e == WordSet::Full || sc.words_n == WordSet::Full)
        .unwrap_or(false);

    if cfg.mask {
        mask_state(&mut state, cfg.mask_margin);
    }
    let mut scratch = RhsScratch::new(grid);
    let mut ae = Field::zeros(grid);
    let mut an = Field::zeros(grid);
    rhs(&state, cfg.order, cfg.coupling, &mut scratch, &mut ae, &mut an);
    if cfg.mask {
        apply_cone_mask_with_margin(&mut ae, state.t, cfg.mask_margin);
        apply_cone_mask_with_margin(&mut an, state.t, cfg.mask_margin);
    }

    let mut accr_e = Field::zeros(grid);
    let mut accr_n = Field::zeros(grid);
    let mut lap_scratch = Field::zeros(grid);
    let mut dd_scratch = Field::zeros(grid);

    let mut series = Vec::new();
    let feed = |state: &KgzState,
                    ae: &Field,
                    an: &Field,
                    slicer: &mut Option<StreamingSlicer>,
                    accr_e: &mut Field,
                    accr_n: &mut Field,
                    scratch_lap: &mut Field,
                    scratch_dd: &mut Field|
     -> Result<()> {
        let Some(sl) = slicer.as_mut() else { return Ok(()) };
        // Density and nonlinear sources from the current state; `Δn` is
        // recovered from the cached acceleration to avoid a third Laplacian.
        let e = state.e.data();
        let an_d = an.data();
        let density = Field::from_data(
            state.e.grid(),
            if cfg.coupling {
                an_d.iter().zip(e).map(|(a, ev)| a - 2.0 * ev * ev).collect()
            } else {
                an_d.to_vec()
            },
        );
        let src_e = Field::from_data(
            state.e.grid(),
            density.data().iter().zip(e).map(|(nv, ev)| nv * ev).collect(),
        );
        let src_n = Field::from_data(state.e.grid(), e.iter().map(|ev| 2.0 * ev * ev).collect());
        if needs_accr {
            rhs_rate(
                state,
                cfg.order,
                cfg.coupling,
                &density,
                accr_e,
                accr_n,
                scratch_lap,
                scratch_dd,
            );
            if cfg.mask {
                apply_cone_mask_with_margin(accr_e, state.t, cfg.mask_margin);
                apply_cone_mask_with_margin(accr_n, state.t, cfg.mask_margin);
            }
        }
        let mut levels = vec![
            CompLevel {
                value: state.e.clone(),
                rate: state.de.clone(),
                accel: Some(ae.clone()),
                accel_rate: if needs_accr { Some(accr_e.clone()) } else { None },
                source: Some(src_e),
            },
            CompLevel {
                value: state.n.clone(),
                rate: state.dn.clone(),
                accel: Some(an.clone()),
                accel_rate: if needs_accr { Some(accr_n.clone()) } else { None },
                source: Some(src_n),
            },
        ];
        if cfg.slices.as_ref().map(|s| s.with_density).unwrap_or(false) {
            // Density rate = Δ(∂_t n); the acceleration-rate pass already
            // left it in the scratch buffer.
            if !needs_accr {
                laplacian_into(&state.dn, cfg.order, scratch_dd);
            }
            levels.push(CompLevel {
                value: density,
                rate: scratch_dd.clone(),
                accel: None,
                accel_rate: None,
                source: None,
            });
        }
        sl.push_level(state.t, levels)
    };

    let sample = |state: &KgzState, series: &mut Vec<SeriesRow>| {
        let density = reconstruct_density(&state.n, cfg.order);
        series.push(SeriesRow {
            t: state.t,
            sup_e: state.e.max_abs(),
            sup_n: state.n.max_abs(),
            sup_density: density.max_abs(),
            wsup_density: weighted_sup_density(&density, state.t),
        });
    };

    sample(&state, &mut series);
    feed(
        &state,
        &ae,
        &an,
        &mut slicer,
        &mut accr_e,
        &mut accr_n,
        &mut lap_scratch,
        &mut dd_scratch,
    )?;

    for step in 1..=n_steps {
        match cfg.integrator {
            Integrator::Verlet => step_verlet(&mut state, &mut ae, &mut an, cfg, &mut scratch),
            Integrator::Rk4 => {
                step_rk4(&mut state, cfg, &mut scratch);
                rhs(&state, cfg.order, cfg.coupling, &mut scratch, &mut ae, &mut an);
                if cfg.mask {
                    apply_cone_mask_with_margin(&mut ae, state.t, cfg.mask_margin);
                    apply_cone_mask_with_margin(&mut an, state.t, cfg.mask_margin);
                }
            }
        }
        if step % cfg.series_every == 0 || step == n_steps {
            check_finite(&state)?;
            sample(&state, &mut series);
        }
        feed(
            &state,
            &ae,
            &an,
            &mut slicer,
            &mut accr_e,
            &mut accr_n,
            &mut lap_scratch,
            &mut dd_scratch,
        )?;
    }

    Ok(KgzOutput {
        series,
        slices: slicer.map(|s| s.finalize()),
        final_state: state,
        steps: n_steps,
    })
}

/// Run from the standard bump initial data.
pub fn run_kgz(cfg: &KgzConfig) -> Result<KgzOutput> {
    run_kgz_from(cfg, initial_state(cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_is_unit_height_and_compact() {
        let grid = Grid::square(65, 0.125).unwrap();
        let b = bump(grid);
        // center value exp(0) = 1
        let c = b.at(32, 32);
        assert!((c - 1.0).abs() < 1e-15);
        // zero outside the unit ball
        for i in 0..65 {
            for j in 0..65 {
                let (x, y) = (grid.x(i), grid.y(j));
                if x * x + y * y >= 1.0 {
                    assert_eq!(b.at(i, j), 0.0);
                }
            }
        }
    }

    #[test]
    fn zero_amplitude_run_stays_zero() {
        let grid = Grid::square(97, 0.25).unwrap();
        let mut cfg = KgzConfig::new(grid, 0.1, 4.0);
        cfg.eps = 0.0;
        let out = run_kgz(&cfg).unwrap();
        assert_eq!(out.final_state.e.max_abs(), 0.0);
        assert_eq!(out.final_state.n.max_abs(), 0.0);
        for row in &out.series {
            assert_eq!(row.sup_e, 0.0);
            assert_eq!(row.sup_density, 0.0);
        }
    }

    #[test]
    fn cfl_violation_is_rejected() {
        let grid = Grid::square(97, 0.25).unwrap();
        let cfg = KgzConfig::new(grid, 0.2, 4.0);
        match run_kgz(&cfg) {
            Err(Error::Cfl { .. }) => {}
            Err(other) => panic!("expected CFL rejection, got {other}"),
            Ok(_) => panic!("expected CFL rejection, run succeeded"),
        }
    }

    #[test]
    fn fractional_step_count_is_rejected() {
        let grid = Grid::square(97, 0.25).unwrap();
        let cfg = KgzConfig::new(grid, 0.1, 4.05);
        assert!(matches!(run_kgz(&cfg), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn small_domain_is_rejected_when_masking() {
        let grid = Grid::square(97, 0.25).unwrap(); // extent 12
        let cfg = KgzConfig::new(grid, 0.1, 20.0);
        assert!(matches!(run_kgz(&cfg), Err(Error::DomainTooSmall { .. })));
    }
}
