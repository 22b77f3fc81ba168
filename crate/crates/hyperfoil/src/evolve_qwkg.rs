//! Evolution of the coupled quasilinear wave / Klein-Gordon model
//!
//! ```text
//!   ∂_tt v = Δv - v - Q^{αβ}(v, ∂v) ∂_α∂_β w
//!   ∂_tt w = Δw     - Q^{αβ}(v, ∂v) ∂_α∂_β v
//! ```
//!
//! with `Q^{αβ} = P1^{αβ} v + P2^{αβγ} ∂_γ v`, both coefficient tensors
//! symmetric in `αβ` with entries of magnitude at most one. The `∂_tt`
//! entries of the Hessians on the right are taken from the previous step's
//! accelerations (a one-step lag), which keeps the update explicit; the
//! remaining Hessian entries are spatial stencils of the current state and
//! rates.
//!
//! Stepping, masking and diagnostics mirror `evolve_kgz`: velocity Verlet
//! with cached accelerations, and after every step both the state and the
//! fresh accelerations are zeroed outside the guard band.

use crate::error::{Error, Result};
use crate::evolve_kgz::{bump, Integrator};
use crate::grid::{
    apply_cone_mask_with_margin, axpy, dx, dxx, laplacian_into, Axis, Field, Grid, Order,
};
use crate::hyperboloid::{
    CompKind, CompLevel, CompSpec, QuasiCoeffs, SliceSet, StreamingSlicer, WordSet,
};

/// Component amplitudes of the initial bump for `(v, ∂_t v, w, ∂_t w)`.
#[derive(Clone, Copy, Debug)]
pub struct QwkgSeeds {
    pub v0: f64,
    pub v1: f64,
    pub w0: f64,
    pub w1: f64,
}

impl Default for QwkgSeeds {
    fn default() -> Self {
        QwkgSeeds { v0: 1.0, v1: 0.3, w0: 0.8, w1: 0.25 }
    }
}

/// Slice extraction settings for a quasilinear run.
#[derive(Clone, Debug)]
pub struct QwkgSliceConfig {
    pub s_values: Vec<f64>,
    pub gamma: f64,
    pub delta: f64,
    pub store_fields: bool,
}

#[derive(Clone, Debug)]
pub struct QwkgConfig {
    pub grid: Grid,
    pub order: Order,
    pub dt: f64,
    pub t0: f64,
    pub t_final: f64,
    pub eps: f64,
    pub seeds: QwkgSeeds,
    pub coeffs: QuasiCoeffs,
    pub integrator: Integrator,
    pub mask: bool,
    pub mask_margin: f64,
    pub series_every: usize,
    pub slices: Option<QwkgSliceConfig>,
}

impl QwkgConfig {
    pub fn new(grid: Grid, dt: f64, t_final: f64, coeffs: QuasiCoeffs) -> Self {
        QwkgConfig {
            grid,
            order: Order::Four,
            dt,
            t0: 2.0,
            t_final,
            eps: 0.01,
            seeds: QwkgSeeds::default(),
            coeffs,
            integrator: Integrator::Verlet,
            mask: true,
            mask_margin: 1.0,
            series_every: 10,
            slices: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct QwkgState {
    pub t: f64,
    pub v: Field,
    pub dv: Field,
    pub w: Field,
    pub dw: Field,
}

#[derive(Clone, Copy, Debug)]
pub struct QwkgSeriesRow {
    pub t: f64,
    pub sup_v: f64,
    pub sup_w: f64,
    /// sup over `r <= t - 1.5` of `max_{αβ} |∂_α∂_β w| · sqrt(t² - r²)`.
    pub wsup_ddw: f64,
}

pub struct QwkgOutput {
    pub series: Vec<QwkgSeriesRow>,
    pub slices: Option<SliceSet>,
    pub final_state: QwkgState,
    pub steps: usize,
}

pub fn initial_state(cfg: &QwkgConfig) -> QwkgState {
    let b = bump(cfg.grid);
    let scale = |a: f64| {
        let mut f = b.clone();
        for v in f.data_mut() {
            *v *= cfg.eps * a;
        }
        f
    };
    QwkgState {
        t: cfg.t0,
        v: scale(cfg.seeds.v0),
        dv: scale(cfg.seeds.v1),
        w: scale(cfg.seeds.w0),
        dw: scale(cfg.seeds.w1),
    }
}

/// Spatial Hessian pieces of one component: `(∂_t∂_1, ∂_t∂_2, ∂_11, ∂_12,
/// ∂_22)`; the `∂_tt` entry comes from the lagged acceleration.
struct HessFields {
    dtd1: Field,
    dtd2: Field,
    d11: Field,
    d12: Field,
    d22: Field,
}

fn hess_fields(value: &Field, rate: &Field, order: Order) -> HessFields {
    let d1 = dx(value, Axis::X, order);
    HessFields {
        dtd1: dx(rate, Axis::X, order),
        dtd2: dx(rate, Axis::Y, order),
        d11: dxx(value, Axis::X, order),
        d12: dx(&d1, Axis::Y, order),
        d22: dxx(value, Axis::Y, order),
    }
}

/// Accelerations of both components. `att_v` / `att_w` are the lagged
/// second time derivatives used inside the Hessian contractions.
fn rhs(
    state: &QwkgState,
    coeffs: &QuasiCoeffs,
    order: Order,
    att_v: &Field,
    att_w: &Field,
    av: &mut Field,
    aw: &mut Field,
) {
    let grid = state.v.grid();
    let mut lap_v = Field::zeros(grid);
    let mut lap_w = Field::zeros(grid);
    laplacian_into(&state.v, order, &mut lap_v);
    laplacian_into(&state.w, order, &mut lap_w);
    let d1v = dx(&state.v, Axis::X, order);
    let d2v = dx(&state.v, Axis::Y, order);
    let hv = hess_fields(&state.v, &state.dv, order);
    let hw = hess_fields(&state.w, &state.dw, order);

    let (v, dvr) = (state.v.data(), state.dv.data());
    let (d1v, d2v) = (d1v.data(), d2v.data());
    let (lap_v, lap_w) = (lap_v.data(), lap_w.data());
    let (att_v, att_w) = (att_v.data(), att_w.data());
    let av = av.data_mut();
    let aw = aw.data_mut();
    for i in 0..v.len() {
        let q = coeffs.q_at(v[i], [dvr[i], d1v[i], d2v[i]]);
        let qw = QuasiCoeffs::contract_hessian(
            &q,
            [
                att_w[i],
                hw.dtd1.data()[i],
                hw.dtd2.data()[i],
                hw.d11.data()[i],
                hw.d12.data()[i],
                hw.d22.data()[i],
            ],
        );
        let qv = QuasiCoeffs::contract_hessian(
            &q,
            [
                att_v[i],
                hv.dtd1.data()[i],
                hv.dtd2.data()[i],
                hv.d11.data()[i],
                hv.d12.data()[i],
                hv.d22.data()[i],
            ],
        );
        av[i] = lap_v[i] - v[i] - qw;
        aw[i] = lap_w[i] - qv;
    }
}

fn mask_state(state: &mut QwkgState, margin: f64) {
    let t = state.t;
    apply_cone_mask_with_margin(&mut state.v, t, margin);
    apply_cone_mask_with_margin(&mut state.dv, t, margin);
    apply_cone_mask_with_margin(&mut state.w, t, margin);
    apply_cone_mask_with_margin(&mut state.dw, t, margin);
}

fn check_finite(state: &QwkgState) -> Result<()> {
    for (name, f) in [("v", &state.v), ("w", &state.w)] {
        if let Some((i, j)) = f.first_non_finite() {
            return Err(Error::NonFinite { field: name, t: state.t, i, j });
        }
    }
    Ok(())
}

/// Interior sup of `max |∂∂w| · sqrt(t² - r²)` over `r <= t - 1.5`.
fn weighted_sup_ddw(state: &QwkgState, att_w: &Field, order: Order) -> f64 {
    let grid = state.w.grid();
    let hw = hess_fields(&state.w, &state.dw, order);
    let t = state.t;
    let ny = grid.ny();
    let mut m = 0.0f64;
    for i in 0..grid.nx() {
        let x = grid.x(i);
        for j in 0..ny {
            let y = grid.y(j);
            let r2 = x * x + y * y;
            if r2.sqrt() <= t - 1.5 {
                let idx = i * ny + j;
                let dd = [
                    att_w.data()[idx],
                    hw.dtd1.data()[idx],
                    hw.dtd2.data()[idx],
                    hw.d11.data()[idx],
                    hw.d12.data()[idx],
                    hw.d22.data()[idx],
                ]
                .iter()
                .fold(0.0f64, |acc, v| acc.max(v.abs()));
                m = m.max(dd * (t * t - r2).sqrt());
            }
        }
    }
    m
}

/// Run the quasilinear system from explicit initial data.
pub fn run_qwkg_from(cfg: &QwkgConfig, mut state: QwkgState) -> Result<QwkgOutput> {
    let grid = cfg.grid;
    cfg.coeffs.validate()?;
    if !matches!(cfg.integrator, Integrator::Verlet) {
        return Err(Error::InvalidConfig(
            "the quasilinear system supports only the verlet integrator: its Hessian \
             time entries are one-step lagged accelerations, which have no analogue \
             in the rk4 substages"
                .into(),
        ));
    }
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
    let n_steps = n_steps_f.round() as usize + 2;

    let mut slicer = match &cfg.slices {
        Some(sc) => Some(StreamingSlicer::new(
            grid,
            cfg.order,
            cfg.dt,
            cfg.t0,
            &sc.s_values,
            sc.gamma,
            sc.delta,
            vec![
                CompSpec { name: "v", kind: CompKind::KleinGordon, words: WordSet::None },
                CompSpec { name: "w", kind: CompKind::Wave, words: WordSet::None },
            ],
            sc.store_fields,
            Some(cfg.coeffs.clone()),
        )?),
        None => None,
    };

    if cfg.mask {
        mask_state(&mut state, cfg.mask_margin);
    }
    // Lagged second time derivatives start at zero, matching data whose
    // nonlinearity is quadratically small at t0.
    let mut av = Field::zeros(grid);
    let mut aw = Field::zeros(grid);
    let (att_v0, att_w0) = (Field::zeros(grid), Field::zeros(grid));
    rhs(&state, &cfg.coeffs, cfg.order, &att_v0, &att_w0, &mut av, &mut aw);
    if cfg.mask {
        apply_cone_mask_with_margin(&mut av, state.t, cfg.mask_margin);
        apply_cone_mask_with_margin(&mut aw, state.t, cfg.mask_margin);
    }

    let mut series = Vec::new();
    let sample = |state: &QwkgState, aw: &Field, series: &mut Vec<QwkgSeriesRow>| {
        series.push(QwkgSeriesRow {
            t: state.t,
            sup_v: state.v.max_abs(),
            sup_w: state.w.max_abs(),
            wsup_ddw: weighted_sup_ddw(state, aw, cfg.order),
        });
    };
    let feed = |state: &QwkgState,
                av: &Field,
                aw: &Field,
                slicer: &mut Option<StreamingSlicer>|
     -> Result<()> {
        let Some(sl) = slicer.as_mut() else { return Ok(()) };
        sl.push_level(
            state.t,
            vec![
                CompLevel {
                    value: state.v.clone(),
                    rate: state.dv.clone(),
                    accel: Some(av.clone()),
                    accel_rate: None,
                    source: None,
                },
                CompLevel {
                    value: state.w.clone(),
                    rate: state.dw.clone(),
                    accel: Some(aw.clone()),
                    accel_rate: None,
                    source: None,
                },
            ],
        )
    };

    sample(&state, &aw, &mut series);
    feed(&state, &av, &aw, &mut slicer)?;

    for step in 1..=n_steps {
        // Kick-drift with the cached accelerations.
        axpy(&mut state.dv, 0.5 * cfg.dt, &av);
        axpy(&mut state.dw, 0.5 * cfg.dt, &aw);
        let dv_now = state.dv.clone();
        let dw_now = state.dw.clone();
        axpy(&mut state.v, cfg.dt, &dv_now);
        axpy(&mut state.w, cfg.dt, &dw_now);
        state.t += cfg.dt;
        if cfg.mask {
            mask_state(&mut state, cfg.mask_margin);
        }
        // New accelerations, with the previous ones as the lagged ∂_tt.
        let (att_v, att_w) = (av.clone(), aw.clone());
        rhs(&state, &cfg.coeffs, cfg.order, &att_v, &att_w, &mut av, &mut aw);
        if cfg.mask {
            apply_cone_mask_with_margin(&mut av, state.t, cfg.mask_margin);
            apply_cone_mask_with_margin(&mut aw, state.t, cfg.mask_margin);
        }
        axpy(&mut state.dv, 0.5 * cfg.dt, &av);
        axpy(&mut state.dw, 0.5 * cfg.dt, &aw);

        if step % cfg.series_every == 0 || step == n_steps {
            check_finite(&state)?;
            sample(&state, &aw, &mut series);
        }
        feed(&state, &av, &aw, &mut slicer)?;
    }

    Ok(QwkgOutput {
        series,
        slices: slicer.map(|s| s.finalize()),
        final_state: state,
        steps: n_steps,
    })
}

/// Run from the standard bump initial data.
pub fn run_qwkg(cfg: &QwkgConfig) -> Result<QwkgOutput> {
    run_qwkg_from(cfg, initial_state(cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg(coeffs: QuasiCoeffs) -> QwkgConfig {
        let grid = Grid::square(97, 0.25).unwrap();
        let mut cfg = QwkgConfig::new(grid, 0.1, 5.0, coeffs);
        cfg.eps = 0.01;
        cfg
    }

    #[test]
    fn zero_coefficients_decouple_into_linear_fields() {
        // With Q ≡ 0 both equations are linear and w obeys the free wave
        // equation: evolving only w's data must leave v identically zero.
        let mut cfg = small_cfg(QuasiCoeffs::zeros());
        cfg.seeds = QwkgSeeds { v0: 0.0, v1: 0.0, w0: 0.8, w1: 0.25 };
        let out = run_qwkg(&cfg).unwrap();
        assert_eq!(out.final_state.v.max_abs(), 0.0);
        assert!(out.final_state.w.max_abs() > 0.0);
    }

    #[test]
    fn invalid_coefficients_are_rejected() {
        let mut coeffs = QuasiCoeffs::set_a();
        coeffs.p1[0][2] = 0.3; // breaks symmetry
        let cfg = small_cfg(coeffs);
        assert!(run_qwkg(&cfg).is_err());
    }

    #[test]
    fn runs_are_deterministic() {
        let cfg = small_cfg(QuasiCoeffs::set_c());
        let a = run_qwkg(&cfg).unwrap();
        let b = run_qwkg(&cfg).unwrap();
        assert_eq!(a.final_state.v.data(), b.final_state.v.data());
        assert_eq!(a.final_state.w.data(), b.final_state.w.data());
    }
}
