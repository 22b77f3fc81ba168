//! Hyperboloid slices and every energy functional defined on them.
//!
//! The surfaces `H_s = { t² = r² + s² }` foliate the interior of the light
//! cone. This module interpolates space-time data onto them and evaluates:
//!
//! * the natural energy `E_m(s, u)` through its three equivalent algebraic
//!   expressions, each fed by an *independently obtained* time-derivative
//!   sample so that their spread is a genuine cross-check of the
//!   interpolation and derivative pipeline;
//! * the ghost-weighted energy `∫ (t-r)^{-γ} (s/t)² |∂u|² dx`;
//! * flat `L^p` norms;
//! * energies of derivative words `∂^I L^J u` up to combined order two,
//!   assembled from closed-form jets of the boost fields at level time.
//!
//! Two entry points are provided: [`slice_onto_hyperboloid`] interpolates a
//! complete in-memory [`Slab`], and [`StreamingSlicer`] consumes levels one
//! at a time during evolution with a bounded six-level window, accumulating
//! energies without retaining the space-time history.

use crate::calculus::Slab;
use crate::error::{Error, Result};
use crate::grid::{dx, dxx, pairwise_sum, Axis, Field, Grid, Order};
use std::collections::VecDeque;
use std::io::Write as IoWrite;
use std::path::Path;

/// Number of time levels in the streaming interpolation window.
pub const WINDOW: usize = 6;

// ---------------------------------------------------------------------------
// Lagrange interpolation helpers
// ---------------------------------------------------------------------------

/// Barycentric-free Lagrange weights: `w[i] = Π_{j≠i} (tau - t_j)/(t_i - t_j)`.
fn lagrange_weights<const N: usize>(ts: &[f64; N], tau: f64) -> [f64; N] {
    let mut w = [1.0; N];
    for i in 0..N {
        for j in 0..N {
            if i != j {
                w[i] *= (tau - ts[j]) / (ts[i] - ts[j]);
            }
        }
    }
    w
}

// ---------------------------------------------------------------------------
// Slice data
// ---------------------------------------------------------------------------

/// One scalar component sampled on the hyperboloid `H_s`.
///
/// Per node the slice stores the value, the time derivative `p = ∂_t u`
/// obtained by the primary route (quartic interpolation of stored rates),
/// the spatial derivatives `q_a = ∂_a u`, and optionally two *alternative*
/// time-derivative samples:
///
/// * `p_center`: centered difference of the quintic value interpolant,
/// * `p_quintic`: quintic interpolation of the stored rates.
///
/// Masked-out nodes carry exact zeros.
#[derive(Clone, Debug)]
pub struct HyperboloidSlice {
    pub s: f64,
    grid: Grid,
    pub valid: Vec<bool>,
    pub val: Vec<f64>,
    pub p: Vec<f64>,
    pub p_center: Option<Vec<f64>>,
    pub p_quintic: Option<Vec<f64>>,
    pub q1: Vec<f64>,
    pub q2: Vec<f64>,
    pub acc: Option<Vec<f64>>,
}

impl HyperboloidSlice {
    fn empty(grid: Grid, s: f64, with_alt: bool, with_acc: bool) -> Self {
        let n = grid.len();
        HyperboloidSlice {
            s,
            grid,
            valid: vec![false; n],
            val: vec![0.0; n],
            p: vec![0.0; n],
            p_center: if with_alt { Some(vec![0.0; n]) } else { None },
            p_quintic: if with_alt { Some(vec![0.0; n]) } else { None },
            q1: vec![0.0; n],
            q2: vec![0.0; n],
            acc: if with_acc { Some(vec![0.0; n]) } else { None },
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Hyperboloid time `t(x) = sqrt(s² + r²)` of a node.
    pub fn t_of(&self, i: usize, j: usize) -> f64 {
        let (x, y) = (self.grid.x(i), self.grid.y(j));
        (self.s * self.s + x * x + y * y).sqrt()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Maximum hyperboloid time over valid nodes (the cone rim reaches
    /// `(s² + 1) / 2`).
    pub fn max_t(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.grid.nx() {
            for j in 0..self.grid.ny() {
                if self.valid[i * self.grid.ny() + j] {
                    m = m.max(self.t_of(i, j));
                }
            }
        }
        m
    }
}

/// Per-term breakdown of one energy expression.
#[derive(Clone, Debug)]
pub struct ExprBreakdown {
    pub terms: Vec<(&'static str, f64)>,
    pub total: f64,
}

/// The natural energy of a slice, through all three expressions.
#[derive(Clone, Debug)]
pub struct EnergyReport {
    pub s: f64,
    pub m: u8,
    pub expr: [ExprBreakdown; 3],
    /// Primary total (first expression).
    pub total: f64,
    /// Relative spread `(max - min) / max(|mid|, tiny)` among the three.
    pub spread_rel: f64,
}

impl EnergyReport {
    /// True when the three expressions disagree by more than `10 * tol`.
    pub fn flagged(&self, tol: f64) -> bool {
        self.spread_rel > 10.0 * tol
    }
}

// ---------------------------------------------------------------------------
// Static slicing of a complete slab
// ---------------------------------------------------------------------------

/// Interpolate a slab onto the hyperboloid `H_s`.
///
/// Every node inside the cone section `r <= (s² - 1)/2` must fall into a
/// six-level window of the slab such that its hyperboloid time lies between
/// the third and fourth level; otherwise the call is rejected with the
/// required coverage. Values and spatial derivatives use cubic (4-point)
/// interpolation; the three time-derivative routes use the 5- and 6-point
/// kernels described on [`HyperboloidSlice`].
pub fn slice_onto_hyperboloid(slab: &Slab, s: f64, order: Order) -> Result<HyperboloidSlice> {
    let grid = slab.grid();
    if slab.len() < WINDOW {
        return Err(Error::SlabCoverage {
            s,
            t_lo: s,
            t_hi: (s * s + 1.0) / 2.0,
            have_lo: slab.t_lo(),
            have_hi: slab.t_hi(),
        });
    }
    let all_rates = (0..slab.len()).all(|k| slab.rate(k).is_some());
    if !all_rates {
        return Err(Error::InvalidConfig(
            "slicing needs stored rates on every slab level".into(),
        ));
    }
    let dt = slab.dt();
    let t_needed_hi = (s * s + 1.0) / 2.0;
    // A node with hyperboloid time tau needs window start m with
    // T_{m+2} < tau <= T_{m+3}, 0 <= m, m + 5 <= len - 1.
    let t_ok_lo = slab.t_lo() + 2.0 * dt;
    let t_ok_hi = slab.time(slab.len() - 3);
    if s <= t_ok_lo || t_needed_hi > t_ok_hi {
        return Err(Error::SlabCoverage {
            s,
            t_lo: s - 3.0 * dt,
            t_hi: t_needed_hi + 3.0 * dt,
            have_lo: slab.t_lo(),
            have_hi: slab.t_hi(),
        });
    }

    // Spatial derivative fields per level, computed once.
    let d1: Vec<Field> = (0..slab.len()).map(|k| dx(slab.value(k), Axis::X, order)).collect();
    let d2: Vec<Field> = (0..slab.len()).map(|k| dx(slab.value(k), Axis::Y, order)).collect();

    let mut slice = HyperboloidSlice::empty(grid, s, true, false);
    let r_max = (s * s - 1.0) / 2.0;
    let ny = grid.ny();
    for i in 0..grid.nx() {
        let x = grid.x(i);
        for j in 0..ny {
            let y = grid.y(j);
            let r2 = x * x + y * y;
            if r2 > r_max * r_max {
                continue;
            }
            let tau = (s * s + r2).sqrt();
            // Window start: tau in (T_{m+2}, T_{m+3}].
            let mut m = ((tau - slab.t_lo()) / dt).ceil() as isize - 3;
            m = m.clamp(0, slab.len() as isize - WINDOW as isize);
            // Nudge so the half-open zone condition holds despite rounding.
            while m > 0 && tau <= slab.time(m as usize + 2) {
                m -= 1;
            }
            while (m as usize) + WINDOW < slab.len() && tau > slab.time(m as usize + 3) {
                m += 1;
            }
            let m = m as usize;
            let idx = i * ny + j;
            let t6: [f64; 6] = std::array::from_fn(|k| slab.time(m + k));
            let t4: [f64; 4] = std::array::from_fn(|k| t6[k + 1]);
            let t5: [f64; 5] = std::array::from_fn(|k| t6[k]);
            let w4 = lagrange_weights(&t4, tau);
            let w5 = lagrange_weights(&t5, tau);
            let w6 = lagrange_weights(&t6, tau);
            let w6p = lagrange_weights(&t6, tau + dt);
            let w6m = lagrange_weights(&t6, tau - dt);

            let mut val = 0.0;
            let mut q1v = 0.0;
            let mut q2v = 0.0;
            let mut pa = 0.0;
            let mut pc = 0.0;
            let mut vp = 0.0;
            let mut vm = 0.0;
            for k in 0..WINDOW {
                let u = slab.value(m + k).data()[idx];
                let r = slab.rate(m + k).unwrap().data()[idx];
                if k >= 1 && k <= 4 {
                    let w = w4[k - 1];
                    val += w * u;
                    q1v += w * d1[m + k].data()[idx];
                    q2v += w * d2[m + k].data()[idx];
                }
                if k <= 4 {
                    pa += w5[k] * r;
                }
                pc += w6[k] * r;
                vp += w6p[k] * u;
                vm += w6m[k] * u;
            }
            slice.valid[idx] = true;
            slice.val[idx] = val;
            slice.q1[idx] = q1v;
            slice.q2[idx] = q2v;
            slice.p[idx] = pa;
            slice.p_center.as_mut().unwrap()[idx] = (vp - vm) / (2.0 * dt);
            slice.p_quintic.as_mut().unwrap()[idx] = pc;
        }
    }
    Ok(slice)
}

// ---------------------------------------------------------------------------
// Energies on a slice
// ---------------------------------------------------------------------------

/// The natural energy `E_m(s, u)` via its three expressions.
///
/// Each expression is fed its own time-derivative route when the slice
/// carries the alternates, so the reported spread measures real pipeline
/// error rather than algebra:
///
/// 1. `(∂_t u)² + Σ (∂_a u)² + 2 (x^a/t) ∂_t u ∂_a u + m² u²`
/// 2. `((s/t) ∂_t u)² + Σ ((L_a u)/t)² + m² u²`
/// 3. `(∂_t u + (x^a/t) ∂_a u)² + Σ ((s/t) ∂_a u)² + (Ω u / t)² + m² u²`
///
/// with `Ω = x¹ ∂_2 - x² ∂_1` the rotation field.
pub fn energy_m(slice: &HyperboloidSlice, m: u8) -> EnergyReport {
    let grid = slice.grid;
    let n = grid.len();
    let h2 = grid.h() * grid.h();
    let m2 = (m as f64) * (m as f64);
    let s = slice.s;

    let p1 = &slice.p;
    let p2 = slice.p_center.as_deref().unwrap_or(&slice.p[..]);
    let p3 = slice.p_quintic.as_deref().unwrap_or(&slice.p[..]);

    let mut t_p = vec![0.0; n];
    let mut t_q = vec![0.0; n];
    let mut t_cross = vec![0.0; n];
    let mut t_mass = vec![0.0; n];
    let mut t_sp = vec![0.0; n];
    let mut t_under = vec![0.0; n];
    let mut t_perp = vec![0.0; n];
    let mut t_sq = vec![0.0; n];
    let mut t_rot = vec![0.0; n];

    let ny = grid.ny();
    for i in 0..grid.nx() {
        let x = grid.x(i);
        for j in 0..ny {
            let idx = i * ny + j;
            if !slice.valid[idx] {
                continue;
            }
            let y = grid.y(j);
            let t = (s * s + x * x + y * y).sqrt();
            let (xt, yt, st) = (x / t, y / t, s / t);
            let (v, q1, q2) = (slice.val[idx], slice.q1[idx], slice.q2[idx]);

            // expression 1
            let p = p1[idx];
            t_p[idx] = p * p;
            t_q[idx] = q1 * q1 + q2 * q2;
            t_cross[idx] = 2.0 * (xt * p * q1 + yt * p * q2);
            t_mass[idx] = m2 * v * v;

            // expression 2
            let p = p2[idx];
            let (u1, u2) = (q1 + xt * p, q2 + yt * p);
            t_sp[idx] = st * p * st * p;
            t_under[idx] = u1 * u1 + u2 * u2;

            // expression 3
            let p = p3[idx];
            let perp = p + xt * q1 + yt * q2;
            t_perp[idx] = perp * perp;
            t_sq[idx] = st * st * (q1 * q1 + q2 * q2);
            let rot = (x * q2 - y * q1) / t;
            t_rot[idx] = rot * rot;
        }
    }

    let q = |v: &[f64]| pairwise_sum(v) * h2;
    let (e_p, e_q, e_cross, e_mass) = (q(&t_p), q(&t_q), q(&t_cross), q(&t_mass));
    let (e_sp, e_under) = (q(&t_sp), q(&t_under));
    let (e_perp, e_sq, e_rot) = (q(&t_perp), q(&t_sq), q(&t_rot));

    let expr1 = ExprBreakdown {
        terms: vec![
            ("dt_sq", e_p),
            ("dx_sq", e_q),
            ("cross", e_cross),
            ("mass", e_mass),
        ],
        total: e_p + e_q + e_cross + e_mass,
    };
    let expr2 = ExprBreakdown {
        terms: vec![
            ("st_dt_sq", e_sp),
            ("underdel_sq", e_under),
            ("mass", e_mass),
        ],
        total: e_sp + e_under + e_mass,
    };
    let expr3 = ExprBreakdown {
        terms: vec![
            ("perp_sq", e_perp),
            ("st_dx_sq", e_sq),
            ("rot_sq", e_rot),
            ("mass", e_mass),
        ],
        total: e_perp + e_sq + e_rot + e_mass,
    };

    let totals = [expr1.total, expr2.total, expr3.total];
    let max = totals.iter().cloned().fold(f64::MIN, f64::max);
    let min = totals.iter().cloned().fold(f64::MAX, f64::min);
    let mid = totals.iter().map(|v| v.abs()).fold(0.0f64, f64::max).max(1e-300);
    EnergyReport {
        s: slice.s,
        m,
        total: expr1.total,
        expr: [expr1, expr2, expr3],
        spread_rel: (max - min) / mid,
    }
}

/// Ghost-weighted derivative energy `∫ (t-r)^{-γ} (s/t)² |∂u|² dx`.
pub fn ghost_energy(slice: &HyperboloidSlice, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidConfig(format!("ghost weight needs gamma > 0, got {gamma}")));
    }
    let grid = slice.grid;
    let s = slice.s;
    let ny = grid.ny();
    let mut terms = vec![0.0; grid.len()];
    for i in 0..grid.nx() {
        let x = grid.x(i);
        for j in 0..ny {
            let idx = i * ny + j;
            if !slice.valid[idx] {
                continue;
            }
            let y = grid.y(j);
            let r = (x * x + y * y).sqrt();
            let t = (s * s + x * x + y * y).sqrt();
            let w = (t - r).powf(-gamma);
            let st = s / t;
            let (p, q1, q2) = (slice.p[idx], slice.q1[idx], slice.q2[idx]);
            terms[idx] = w * st * st * (p * p + q1 * q1 + q2 * q2);
        }
    }
    Ok(pairwise_sum(&terms) * grid.h() * grid.h())
}

/// Flat `L^p` norm of the slice values; `p = f64::INFINITY` gives the sup.
pub fn lp_norm_f(slice: &HyperboloidSlice, p: f64) -> f64 {
    assert!(p >= 1.0, "lp_norm_f needs p >= 1");
    if p.is_infinite() {
        let mut m = 0.0f64;
        for (v, ok) in slice.val.iter().zip(&slice.valid) {
            if *ok {
                m = m.max(v.abs());
            }
        }
        return m;
    }
    let grid = slice.grid;
    let terms: Vec<f64> = slice
        .val
        .iter()
        .zip(&slice.valid)
        .map(|(v, ok)| if *ok { v.abs().powf(p) } else { 0.0 })
        .collect();
    (pairwise_sum(&terms) * grid.h() * grid.h()).powf(1.0 / p)
}

// ---------------------------------------------------------------------------
// Derivative words
// ---------------------------------------------------------------------------

/// A derivative word `∂^I L^J` with `|I| + |J| <= 2`, applied right-to-left
/// (boosts first). Spatial indices are 1-based axis labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Word {
    Id,
    Dt,
    D1,
    D2,
    DtDt,
    DtD1,
    DtD2,
    D11,
    D12,
    D22,
    L1,
    L2,
    DtL1,
    DtL2,
    D1L1,
    D1L2,
    D2L1,
    D2L2,
    L1L1,
    L1L2,
    L2L2,
}

impl Word {
    /// All words with `|I| + |J| <= 2`.
    pub fn all() -> &'static [Word] {
        use Word::*;
        &[
            Id, Dt, D1, D2, DtDt, DtD1, DtD2, D11, D12, D22, L1, L2, DtL1, DtL2, D1L1, D1L2,
            D2L1, D2L2, L1L1, L1L2, L2L2,
        ]
    }

    /// Pure boost words `L^J`, `|J| <= 2`, including the identity.
    pub fn boosts() -> &'static [Word] {
        use Word::*;
        &[Id, L1, L2, L1L1, L1L2, L2L2]
    }

    pub fn label(self) -> &'static str {
        use Word::*;
        match self {
            Id => "id",
            Dt => "dt",
            D1 => "d1",
            D2 => "d2",
            DtDt => "dtdt",
            DtD1 => "dtd1",
            DtD2 => "dtd2",
            D11 => "d11",
            D12 => "d12",
            D22 => "d22",
            L1 => "L1",
            L2 => "L2",
            DtL1 => "dtL1",
            DtL2 => "dtL2",
            D1L1 => "d1L1",
            D1L2 => "d1L2",
            D2L1 => "d2L1",
            D2L2 => "d2L2",
            L1L1 => "L1L1",
            L1L2 => "L1L2",
            L2L2 => "L2L2",
        }
    }

    pub fn contains_boost(self) -> bool {
        use Word::*;
        matches!(
            self,
            L1 | L2 | DtL1 | DtL2 | D1L1 | D1L2 | D2L1 | D2L2 | L1L1 | L1L2 | L2L2
        )
    }
}

/// Which word family a run computes on its slices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WordSet {
    /// Base fields only.
    None,
    /// Boost words `L^J`, values only (weighted L² norms).
    Boosts,
    /// Every word with `|I| + |J| <= 2`, full first-derivative jets.
    Full,
}

/// Per-level derivative stash of one component: the field, its first three
/// time derivatives where available, and the spatial derivatives the word
/// jets need. Built once per level as it enters the window.
struct LevelStash {
    t: f64,
    u: Field,
    du: Field,
    acc: Option<Field>,
    accr: Option<Field>,
    src: Option<Field>,
    d1u: Field,
    d2u: Field,
    d11u: Option<Field>,
    d12u: Option<Field>,
    d22u: Option<Field>,
    d1du: Option<Field>,
    d2du: Option<Field>,
    d111u: Option<Field>,
    d112u: Option<Field>,
    d122u: Option<Field>,
    d222u: Option<Field>,
    d11du: Option<Field>,
    d12du: Option<Field>,
    d22du: Option<Field>,
    d1acc: Option<Field>,
    d2acc: Option<Field>,
}

impl LevelStash {
    fn build(t: f64, level: CompLevel, words: WordSet, order: Order) -> LevelStash {
        let CompLevel { value: u, rate: du, accel: acc, accel_rate: accr, source: src } = level;
        let d1u = dx(&u, Axis::X, order);
        let d2u = dx(&u, Axis::Y, order);
        let needs_second = words != WordSet::None;
        let (mut d11u, mut d12u, mut d22u, mut d1du, mut d2du) = (None, None, None, None, None);
        if needs_second {
            d11u = Some(dxx(&u, Axis::X, order));
            d12u = Some(dx(&d1u, Axis::Y, order));
            d22u = Some(dxx(&u, Axis::Y, order));
            d1du = Some(dx(&du, Axis::X, order));
            d2du = Some(dx(&du, Axis::Y, order));
        }
        let full = words == WordSet::Full;
        let (mut d111u, mut d112u, mut d122u, mut d222u) = (None, None, None, None);
        let (mut d11du, mut d12du, mut d22du) = (None, None, None);
        let (mut d1acc, mut d2acc) = (None, None);
        if full {
            let d11 = d11u.as_ref().unwrap();
            let d22 = d22u.as_ref().unwrap();
            d111u = Some(dx(d11, Axis::X, order));
            d112u = Some(dx(d11, Axis::Y, order));
            d122u = Some(dx(d22, Axis::X, order));
            d222u = Some(dx(d22, Axis::Y, order));
            let d1d = d1du.as_ref().unwrap();
            d11du = Some(dx(d1d, Axis::X, order));
            d12du = Some(dx(d1d, Axis::Y, order));
            d22du = Some(dxx(&du, Axis::Y, order));
            let a = acc.as_ref().expect("full word set needs accelerations");
            d1acc = Some(dx(a, Axis::X, order));
            d2acc = Some(dx(a, Axis::Y, order));
        }
        LevelStash {
            t,
            u,
            du,
            acc,
            accr,
            src,
            d1u,
            d2u,
            d11u,
            d12u,
            d22u,
            d1du,
            d2du,
            d111u,
            d112u,
            d122u,
            d222u,
            d11du,
            d12du,
            d22du,
            d1acc,
            d2acc,
        }
    }
}

/// First-derivative jet `(value, ∂_t, ∂_1, ∂_2)` of a word at one node of one
/// level, assembled from the stash by the closed-form boost algebra.
#[derive(Clone, Copy, Default)]
struct Jet4 {
    v: f64,
    r: f64,
    g1: f64,
    g2: f64,
}

/// All per-node stash reads needed by the word jets, gathered once.
struct NodeStash {
    t: f64,
    u: f64,
    du: f64,
    acc: f64,
    accr: f64,
    d1u: f64,
    d2u: f64,
    d11u: f64,
    d12u: f64,
    d22u: f64,
    d1du: f64,
    d2du: f64,
    d111u: f64,
    d112u: f64,
    d122u: f64,
    d222u: f64,
    d11du: f64,
    d12du: f64,
    d22du: f64,
    d1acc: f64,
    d2acc: f64,
}

impl NodeStash {
    #[inline]
    fn gather(st: &LevelStash, idx: usize, full: bool) -> NodeStash {
        let g = |f: &Option<Field>| f.as_ref().map_or(0.0, |f| f.data()[idx]);
        NodeStash {
            t: st.t,
            u: st.u.data()[idx],
            du: st.du.data()[idx],
            acc: g(&st.acc),
            accr: if full { g(&st.accr) } else { 0.0 },
            d1u: st.d1u.data()[idx],
            d2u: st.d2u.data()[idx],
            d11u: g(&st.d11u),
            d12u: g(&st.d12u),
            d22u: g(&st.d22u),
            d1du: g(&st.d1du),
            d2du: g(&st.d2du),
            d111u: if full { g(&st.d111u) } else { 0.0 },
            d112u: if full { g(&st.d112u) } else { 0.0 },
            d122u: if full { g(&st.d122u) } else { 0.0 },
            d222u: if full { g(&st.d222u) } else { 0.0 },
            d11du: if full { g(&st.d11du) } else { 0.0 },
            d12du: if full { g(&st.d12du) } else { 0.0 },
            d22du: if full { g(&st.d22du) } else { 0.0 },
            d1acc: if full { g(&st.d1acc) } else { 0.0 },
            d2acc: if full { g(&st.d2acc) } else { 0.0 },
        }
    }

    /// Spatial derivative selectors (1-based axis pairs, symmetric).
    #[inline]
    fn dau(&self, a: usize) -> f64 {
        if a == 1 {
            self.d1u
        } else {
            self.d2u
        }
    }
    #[inline]
    fn dabu(&self, a: usize, b: usize) -> f64 {
        match (a.min(b), a.max(b)) {
            (1, 1) => self.d11u,
            (1, 2) => self.d12u,
            _ => self.d22u,
        }
    }
    #[inline]
    fn dabcu(&self, a: usize, b: usize, c: usize) -> f64 {
        let mut k = [a, b, c];
        k.sort_unstable();
        match (k[0], k[1], k[2]) {
            (1, 1, 1) => self.d111u,
            (1, 1, 2) => self.d112u,
            (1, 2, 2) => self.d122u,
            _ => self.d222u,
        }
    }
    #[inline]
    fn dadu(&self, a: usize) -> f64 {
        if a == 1 {
            self.d1du
        } else {
            self.d2du
        }
    }
    #[inline]
    fn dabdu(&self, a: usize, b: usize) -> f64 {
        match (a.min(b), a.max(b)) {
            (1, 1) => self.d11du,
            (1, 2) => self.d12du,
            _ => self.d22du,
        }
    }
    #[inline]
    fn daacc(&self, a: usize) -> f64 {
        if a == 1 {
            self.d1acc
        } else {
            self.d2acc
        }
    }
    #[inline]
    fn coord(&self, a: usize, x: f64, y: f64) -> f64 {
        if a == 1 {
            x
        } else {
            y
        }
    }
}

#[inline]
fn delta(a: usize, b: usize) -> f64 {
    if a == b {
        1.0
    } else {
        0.0
    }
}

/// Jet of `L_a u`.
#[inline]
fn jet_boost(ns: &NodeStash, a: usize, x: f64, y: f64) -> Jet4 {
    let xa = ns.coord(a, x, y);
    Jet4 {
        v: xa * ns.du + ns.t * ns.dau(a),
        r: xa * ns.acc + ns.dau(a) + ns.t * ns.dadu(a),
        g1: delta(a, 1) * ns.du + xa * ns.d1du + ns.t * ns.dabu(1, a),
        g2: delta(a, 2) * ns.du + xa * ns.d2du + ns.t * ns.dabu(2, a),
    }
}

/// `∂_tt L_a u`.
#[inline]
fn boost_tt(ns: &NodeStash, a: usize, x: f64, y: f64) -> f64 {
    let xa = ns.coord(a, x, y);
    xa * ns.accr + 2.0 * ns.dadu(a) + ns.t * ns.daacc(a)
}

/// Jet of `∂_b L_a u` (spatial b): `∂_b(x_a ∂_t u + t ∂_a u)`.
#[inline]
fn jet_db_boost(ns: &NodeStash, b: usize, a: usize, x: f64, y: f64) -> Jet4 {
    let xa = ns.coord(a, x, y);
    Jet4 {
        v: delta(a, b) * ns.du + xa * ns.dadu(b) + ns.t * ns.dabu(b, a),
        r: delta(a, b) * ns.acc + xa * ns.daacc(b) + ns.dabu(b, a) + ns.t * ns.dabdu(b, a),
        g1: delta(a, b) * ns.d1du + delta(a, 1) * ns.dadu(b) + xa * ns.dabdu(1, b) + ns.t * ns.dabcu(1, b, a),
        g2: delta(a, b) * ns.d2du + delta(a, 2) * ns.dadu(b) + xa * ns.dabdu(2, b) + ns.t * ns.dabcu(2, b, a),
    }
}

/// Jet of a word at one node of one level.
#[inline]
fn word_jet(ns: &NodeStash, w: Word, x: f64, y: f64) -> Jet4 {
    use Word::*;
    match w {
        Id => Jet4 { v: ns.u, r: ns.du, g1: ns.d1u, g2: ns.d2u },
        Dt => Jet4 { v: ns.du, r: ns.acc, g1: ns.d1du, g2: ns.d2du },
        D1 => Jet4 { v: ns.d1u, r: ns.d1du, g1: ns.d11u, g2: ns.d12u },
        D2 => Jet4 { v: ns.d2u, r: ns.d2du, g1: ns.d12u, g2: ns.d22u },
        DtDt => Jet4 { v: ns.acc, r: ns.accr, g1: ns.d1acc, g2: ns.d2acc },
        DtD1 => Jet4 { v: ns.d1du, r: ns.d1acc, g1: ns.d11du, g2: ns.d12du },
        DtD2 => Jet4 { v: ns.d2du, r: ns.d2acc, g1: ns.d12du, g2: ns.d22du },
        D11 => Jet4 { v: ns.d11u, r: ns.d11du, g1: ns.d111u, g2: ns.d112u },
        D12 => Jet4 { v: ns.d12u, r: ns.d12du, g1: ns.d112u, g2: ns.d122u },
        D22 => Jet4 { v: ns.d22u, r: ns.d22du, g1: ns.d122u, g2: ns.d222u },
        L1 => jet_boost(ns, 1, x, y),
        L2 => jet_boost(ns, 2, x, y),
        DtL1 | DtL2 => {
            let a = if w == DtL1 { 1 } else { 2 };
            let la = jet_boost(ns, a, x, y);
            let xa = ns.coord(a, x, y);
            Jet4 {
                v: la.r,
                r: boost_tt(ns, a, x, y),
                g1: delta(a, 1) * ns.acc + xa * ns.d1acc + ns.dabu(1, a) + ns.t * ns.dabdu(1, a),
                g2: delta(a, 2) * ns.acc + xa * ns.d2acc + ns.dabu(2, a) + ns.t * ns.dabdu(2, a),
            }
        }
        D1L1 => jet_db_boost(ns, 1, 1, x, y),
        D1L2 => jet_db_boost(ns, 1, 2, x, y),
        D2L1 => jet_db_boost(ns, 2, 1, x, y),
        D2L2 => jet_db_boost(ns, 2, 2, x, y),
        L1L1 | L1L2 | L2L2 => {
            // Outer boost b acting on inner boost a; the spatial jets of the
            // inner boost carry everything needed.
            let (b, a) = match w {
                L1L1 => (1, 1),
                L1L2 => (1, 2),
                _ => (2, 2),
            };
            let inner = jet_boost(ns, a, x, y);
            let d1_inner = jet_db_boost(ns, 1, a, x, y);
            let d2_inner = jet_db_boost(ns, 2, a, x, y);
            let db_inner = if b == 1 { &d1_inner } else { &d2_inner };
            let xb = ns.coord(b, x, y);
            Jet4 {
                v: xb * inner.r + ns.t * db_inner.v,
                r: xb * boost_tt(ns, a, x, y) + db_inner.v + ns.t * db_inner.r,
                g1: delta(b, 1) * inner.r + xb * d1_inner.r + ns.t * db_inner.g1,
                g2: delta(b, 2) * inner.r + xb * d2_inner.r + ns.t * db_inner.g2,
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Streaming slicer
// ---------------------------------------------------------------------------

/// Mass parameter of a sliced component.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CompKind {
    /// Klein-Gordon: energies carry the `m = 1` mass term.
    KleinGordon,
    /// Wave: `m = 0`.
    Wave,
    /// Value-only diagnostic; no derivative machinery.
    Diagnostic,
}

impl CompKind {
    pub fn mass(self) -> u8 {
        match self {
            CompKind::KleinGordon => 1,
            _ => 0,
        }
    }
}

/// Declaration of one sliced component.
#[derive(Clone, Debug)]
pub struct CompSpec {
    pub name: &'static str,
    pub kind: CompKind,
    /// Compute derivative-word energies for this component.
    pub words: WordSet,
}

/// One time level of one component handed to the slicer.
pub struct CompLevel {
    pub value: Field,
    pub rate: Field,
    pub accel: Option<Field>,
    pub accel_rate: Option<Field>,
    /// The component's wave/KG source `f` in `(∂_tt - Δ + m²) u = f`,
    /// used by the ghost inequality and the energy-inequality checks.
    pub source: Option<Field>,
}

/// Running reductions of one component on one slice.
#[derive(Clone, Debug)]
pub struct SliceReductions {
    pub s: f64,
    pub filled: usize,
    pub expected: usize,
    /// Three energy-expression totals (independent time-derivative routes).
    pub energy_expr: [f64; 3],
    /// `∫ u² dx` so both mass variants can be reported.
    pub mass_sq: f64,
    /// Ghost energy `∫ (t-r)^{-γ}(s/t)²|∂u|² dx`.
    pub ghost: f64,
    /// `∫ (s/t)(t-r)^{-γ} f ∂_t u dx` (ghost inequality flux).
    pub ghost_rhs: f64,
    /// `∫ f² dx` (L²-source norm for the first energy inequality).
    pub src_l2_sq: f64,
    /// `∫ (s/t) |∂_t u| |f| dx` (second energy inequality flux).
    pub src_wee2: f64,
    /// sup of `t |u|`, `s |u|`, `s (t-r)^{-γ} |u|` (Sobolev left sides).
    pub sup_t_u: f64,
    pub sup_s_u: f64,
    pub sup_sw_u: f64,
    /// sup of `|u| t^{1/2} (t-r)^{1/2}` (decay diagnostic).
    pub sup_w_val: f64,
    /// Word energies (first-expression form, component mass).
    pub word_energy: Vec<(Word, f64)>,
    /// Weighted value norms per boost word: `∫|Wu|²`, `∫((s/t)|Wu|)²`,
    /// `∫((s/t)(t-r)^{-γ}|Wu|)²`.
    pub word_l2: Vec<(Word, [f64; 3])>,
    /// Pointwise second-derivative bound: max over nodes of
    /// `|∂∂u| / ((t-r)^{-1}(|∂Lu| + |∂u|) + t/(t-r) |f|)`.
    pub ddu_max_ratio: f64,
    /// sup of `|∂∂u| s (t-r)^{-2δ}` with δ fixed by the slicer spec.
    pub sup_ddu_w: f64,
}

impl SliceReductions {
    fn new(s: f64, expected: usize, words: &[Word], boosts: &[Word]) -> Self {
        SliceReductions {
            s,
            filled: 0,
            expected,
            energy_expr: [0.0; 3],
            mass_sq: 0.0,
            ghost: 0.0,
            ghost_rhs: 0.0,
            src_l2_sq: 0.0,
            src_wee2: 0.0,
            sup_t_u: 0.0,
            sup_s_u: 0.0,
            sup_sw_u: 0.0,
            sup_w_val: 0.0,
            word_energy: words.iter().map(|w| (*w, 0.0)).collect(),
            word_l2: boosts.iter().map(|w| (*w, [0.0; 3])).collect(),
            ddu_max_ratio: 0.0,
            sup_ddu_w: 0.0,
        }
    }

    pub fn complete(&self) -> bool {
        self.filled == self.expected
    }

    /// Energy total with the component's mass term included.
    pub fn energy(&self, m: u8, route: usize) -> f64 {
        self.energy_expr[route] + (m as f64) * (m as f64) * self.mass_sq
    }

    pub fn word_energy_of(&self, w: Word) -> Option<f64> {
        self.word_energy.iter().find(|(x, _)| *x == w).map(|(_, e)| *e)
    }

    pub fn word_l2_of(&self, w: Word) -> Option<[f64; 3]> {
        self.word_l2.iter().find(|(x, _)| *x == w).map(|(_, n)| *n)
    }

    /// Relative spread of the three energy totals.
    pub fn spread(&self, m: u8) -> f64 {
        let e: Vec<f64> = (0..3).map(|k| self.energy(m, k)).collect();
        let max = e.iter().cloned().fold(f64::MIN, f64::max);
        let min = e.iter().cloned().fold(f64::MAX, f64::min);
        (max - min) / max.abs().max(1e-300)
    }
}

/// Extra per-slice quantities for the quasilinear system: the curved-energy
/// cross terms, the coefficient-smallness gate, and the equivalence ratio.
#[derive(Clone, Debug)]
pub struct QuasiSliceRow {
    pub s: f64,
    /// `E₁(s, v) + E(s, w)` (first-route flat energies).
    pub flat: f64,
    /// Integrated cross terms of the curved energy.
    pub cross: f64,
    /// max over nodes of `|Q^{αβ}| (t/s)²`; the gate holds when < 1/100.
    pub gate_max: f64,
    pub filled: usize,
}

impl QuasiSliceRow {
    pub fn gate_holds(&self) -> bool {
        self.gate_max < 0.01
    }
    /// Curved / flat energy ratio.
    pub fn ratio(&self) -> f64 {
        (self.flat + self.cross) / self.flat.max(1e-300)
    }
}

/// Coefficient tensors for the quasilinear coupling, shared with
/// `evolve_qwkg`.
#[derive(Clone, Debug)]
pub struct QuasiCoeffs {
    /// Symmetric 3x3, indices 0=t,1,2.
    pub p1: [[f64; 3]; 3],
    /// Symmetric in the first two indices; third index is the derivative
    /// direction of the factor `∂_γ v`.
    pub p2: [[[f64; 3]; 3]; 3],
}

impl QuasiCoeffs {
    pub fn zeros() -> Self {
        QuasiCoeffs { p1: [[0.0; 3]; 3], p2: [[[0.0; 3]; 3]; 3] }
    }

    /// All-ones P1, zero P2.
    pub fn set_a() -> Self {
        QuasiCoeffs { p1: [[1.0; 3]; 3], p2: [[[0.0; 3]; 3]; 3] }
    }

    /// Zero P1, all-ones P2.
    pub fn set_b() -> Self {
        QuasiCoeffs { p1: [[0.0; 3]; 3], p2: [[[1.0; 3]; 3]; 3] }
    }

    /// Both all-ones.
    pub fn set_c() -> Self {
        QuasiCoeffs { p1: [[1.0; 3]; 3], p2: [[[1.0; 3]; 3]; 3] }
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..3 {
            for j in 0..3 {
                if (self.p1[i][j] - self.p1[j][i]).abs() > 1e-12 {
                    return Err(Error::InvalidConfig("p1 must be symmetric".into()));
                }
                if self.p1[i][j].abs() > 1.0 {
                    return Err(Error::InvalidConfig("p1 entries must have magnitude <= 1".into()));
                }
                for g in 0..3 {
                    if (self.p2[i][j][g] - self.p2[j][i][g]).abs() > 1e-12 {
                        return Err(Error::InvalidConfig(
                            "p2 must be symmetric in its first two indices".into(),
                        ));
                    }
                    if self.p2[i][j][g].abs() > 1.0 {
                        return Err(Error::InvalidConfig(
                            "p2 entries must have magnitude <= 1".into(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// `Q^{αβ}(v, ∂v)` at a point, given `v` and its gradient `(∂_t, ∂_1, ∂_2)`.
    #[inline]
    pub fn q_at(&self, v: f64, dv: [f64; 3]) -> [[f64; 3]; 3] {
        let mut q = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let mut val = self.p1[i][j] * v;
                for g in 0..3 {
                    val += self.p2[i][j][g] * dv[g];
                }
                q[i][j] = val;
            }
        }
        q
    }

    /// Contraction `Q^{αβ} H_{αβ}` with a symmetric Hessian packed as
    /// `(∂_tt, ∂_t∂_1, ∂_t∂_2, ∂_11, ∂_12, ∂_22)`.
    #[inline]
    pub fn contract_hessian(q: &[[f64; 3]; 3], hess: [f64; 6]) -> f64 {
        let [htt, ht1, ht2, h11, h12, h22] = hess;
        q[0][0] * htt
            + 2.0 * (q[0][1] * ht1 + q[0][2] * ht2 + q[1][2] * h12)
            + q[1][1] * h11
            + q[2][2] * h22
    }

    /// Pointwise cross terms of the curved energy on a hyperboloid:
    /// `Q^{0β}(∂_β v ∂_t w + ∂_β w ∂_t v) - Q^{αβ} ∂_α v ∂_β w
    ///  - (x_a/t) Q^{aβ}(∂_β v ∂_t w + ∂_β w ∂_t v)`,
    /// with `(xt, yt) = (x/t, y/t)` and gradients `(∂_t, ∂_1, ∂_2)`.
    #[inline]
    pub fn cross_at(q: &[[f64; 3]; 3], dv: [f64; 3], dw: [f64; 3], xt: f64, yt: f64) -> f64 {
        let mut cross = 0.0;
        for b in 0..3 {
            cross += q[0][b] * (dv[b] * dw[0] + dw[b] * dv[0]);
        }
        for al in 0..3 {
            for b in 0..3 {
                cross -= q[al][b] * dv[al] * dw[b];
            }
        }
        for (a, unit) in [(1usize, xt), (2usize, yt)] {
            for b in 0..3 {
                cross -= unit * q[a][b] * (dv[b] * dw[0] + dw[b] * dv[0]);
            }
        }
        cross
    }
}

/// Streaming hyperboloid slicer: consumes uniformly spaced levels during a
/// run, holds a bounded six-level window, and fills each slice node exactly
/// once when its hyperboloid time crosses the window's central zone.
pub struct StreamingSlicer {
    grid: Grid,
    order: Order,
    dt: f64,
    s_values: Vec<f64>,
    gamma: f64,
    delta: f64,
    comps: Vec<CompSpec>,
    store_fields: bool,
    quasi: Option<QuasiCoeffs>,
    ring: VecDeque<(f64, Vec<LevelStash>)>,
    /// Node indices sorted by r², with the matching r² values.
    sorted_idx: Vec<u32>,
    sorted_r2: Vec<f64>,
    reductions: Vec<Vec<SliceReductions>>,
    stored: Vec<Vec<Option<HyperboloidSlice>>>,
    quasi_rows: Vec<QuasiSliceRow>,
    levels_seen: usize,
}

/// Finished slice data: reductions per component per slice, optional stored
/// slices, and quasilinear rows when configured.
pub struct SliceSet {
    pub s_values: Vec<f64>,
    pub comps: Vec<CompSpec>,
    pub gamma: f64,
    /// `[component][slice]`.
    pub reductions: Vec<Vec<SliceReductions>>,
    /// `[component][slice]`, populated when field storage was on.
    pub stored: Vec<Vec<Option<HyperboloidSlice>>>,
    pub quasi_rows: Vec<QuasiSliceRow>,
}

impl StreamingSlicer {
    pub fn new(
        grid: Grid,
        order: Order,
        dt: f64,
        t0: f64,
        s_values: &[f64],
        gamma: f64,
        delta: f64,
        comps: Vec<CompSpec>,
        store_fields: bool,
        quasi: Option<QuasiCoeffs>,
    ) -> Result<Self> {
        if s_values.is_empty() {
            return Err(Error::InvalidConfig("need at least one slice value".into()));
        }
        let mut sorted = s_values.to_vec();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("slice values must be strictly increasing".into()));
        }
        if sorted[0] <= t0 + 2.0 * dt {
            return Err(Error::InvalidConfig(format!(
                "smallest slice s = {} must exceed t0 + 2 dt = {}",
                sorted[0],
                t0 + 2.0 * dt
            )));
        }
        if !(gamma > 0.0) {
            return Err(Error::InvalidConfig("ghost gamma must be positive".into()));
        }
        if let Some(q) = &quasi {
            q.validate()?;
        }
        let mut order_r2: Vec<(f64, u32)> = Vec::with_capacity(grid.len());
        for i in 0..grid.nx() {
            let x = grid.x(i);
            for j in 0..grid.ny() {
                let y = grid.y(j);
                order_r2.push((x * x + y * y, (i * grid.ny() + j) as u32));
            }
        }
        order_r2.sort_by(|a, b| a.0.total_cmp(&b.0));
        let sorted_r2: Vec<f64> = order_r2.iter().map(|e| e.0).collect();
        let sorted_idx: Vec<u32> = order_r2.iter().map(|e| e.1).collect();

        let reductions = comps
            .iter()
            .map(|c| {
                sorted
                    .iter()
                    .map(|&s| {
                        let r_max = (s * s - 1.0) / 2.0;
                        let expected = sorted_r2.partition_point(|&r2| r2 <= r_max * r_max);
                        let words: &[Word] = match c.words {
                            WordSet::Full => Word::all(),
                            _ => &[],
                        };
                        let boosts: &[Word] = match c.words {
                            WordSet::None => &[],
                            _ => Word::boosts(),
                        };
                        SliceReductions::new(s, expected, words, boosts)
                    })
                    .collect()
            })
            .collect();
        let stored = comps
            .iter()
            .map(|_| {
                sorted
                    .iter()
                    .map(|&s| {
                        if store_fields {
                            Some(HyperboloidSlice::empty(grid, s, true, true))
                        } else {
                            None
                        }
                    })
                    .collect()
            })
            .collect();
        let quasi_rows = sorted
            .iter()
            .map(|&s| QuasiSliceRow { s, flat: 0.0, cross: 0.0, gate_max: 0.0, filled: 0 })
            .collect();
        Ok(StreamingSlicer {
            grid,
            order,
            dt,
            s_values: sorted,
            gamma,
            delta,
            comps,
            store_fields,
            quasi,
            ring: VecDeque::with_capacity(WINDOW),
            sorted_idx,
            sorted_r2,
            reductions,
            stored,
            quasi_rows,
            levels_seen: 0,
        })
    }

    /// Feed the next level (uniform spacing `dt`). Component order and count
    /// must match the construction-time specs.
    pub fn push_level(&mut self, t: f64, levels: Vec<CompLevel>) -> Result<()> {
        if levels.len() != self.comps.len() {
            return Err(Error::InvalidConfig(format!(
                "expected {} component levels, got {}",
                self.comps.len(),
                levels.len()
            )));
        }
        if let Some((t_last, _)) = self.ring.back() {
            if ((t - t_last) - self.dt).abs() > 1e-9 * self.dt.max(1.0) {
                return Err(Error::InvalidConfig(format!(
                    "non-uniform slicer feed: dt = {} expected {}",
                    t - t_last,
                    self.dt
                )));
            }
        }
        let stashes: Vec<LevelStash> = levels
            .into_iter()
            .zip(&self.comps)
            .map(|(lvl, spec)| LevelStash::build(t, lvl, spec.words, self.order))
            .collect();
        self.ring.push_back((t, stashes));
        self.levels_seen += 1;
        if self.ring.len() < WINDOW {
            return Ok(());
        }
        self.process_window();
        self.ring.pop_front();
        Ok(())
    }

    /// Fill every slice node whose hyperboloid time lies in the window's
    /// central zone `(T2, T3]`.
    fn process_window(&mut self) {
        let times: Vec<f64> = self.ring.iter().map(|(t, _)| *t).collect();
        let t6: [f64; 6] = std::array::from_fn(|k| times[k]);
        let (z_lo, z_hi) = (t6[2], t6[3]);
        let grid = self.grid;
        let h2 = grid.h() * grid.h();
        let ny = grid.ny();
        let gamma = self.gamma;
        let delta = self.delta;

        for (si, &s) in self.s_values.clone().iter().enumerate() {
            // Zone annulus in r²: tau = sqrt(s² + r²) in (z_lo, z_hi].
            let lo2 = z_lo * z_lo - s * s;
            let hi2 = z_hi * z_hi - s * s;
            if hi2 < 0.0 {
                continue;
            }
            let r_max = (s * s - 1.0) / 2.0;
            let hi2 = hi2.min(r_max * r_max);
            if lo2 > hi2 {
                continue;
            }
            let a = self.sorted_r2.partition_point(|&r2| r2 <= lo2);
            let b = self.sorted_r2.partition_point(|&r2| r2 <= hi2);
            if a >= b {
                continue;
            }

            for pos in a..b {
                let idx = self.sorted_idx[pos] as usize;
                let (i, j) = (idx / ny, idx % ny);
                let (x, y) = (grid.x(i), grid.y(j));
                let r2 = self.sorted_r2[pos];
                // The half-open r² ranges tile exactly across windows, so
                // each node is filled exactly once; tau may sit a rounding
                // error outside (z_lo, z_hi], which the interpolation
                // kernels tolerate.
                let tau = (s * s + r2).sqrt();
                let r = r2.sqrt();
                let t4: [f64; 4] = std::array::from_fn(|k| t6[k + 1]);
                let t5: [f64; 5] = std::array::from_fn(|k| t6[k]);
                let w4 = lagrange_weights(&t4, tau);
                let w5 = lagrange_weights(&t5, tau);
                let w6 = lagrange_weights(&t6, tau);
                let w6p = lagrange_weights(&t6, tau + self.dt);
                let w6m = lagrange_weights(&t6, tau - self.dt);

                let st = s / tau;
                let (xt, yt) = (x / tau, y / tau);
                let ghost_w = (tau - r).powf(-gamma);

                // Per-component interpolated jets at this node.
                let ncomp = self.comps.len();
                let mut jet_val = vec![0.0; ncomp];
                let mut jet_pa = vec![0.0; ncomp];
                let mut jet_pb = vec![0.0; ncomp];
                let mut jet_pc = vec![0.0; ncomp];
                let mut jet_q1 = vec![0.0; ncomp];
                let mut jet_q2 = vec![0.0; ncomp];
                let mut jet_acc = vec![0.0; ncomp];
                let mut jet_src = vec![0.0; ncomp];

                for (ci, _spec) in self.comps.iter().enumerate() {
                    let mut vp = 0.0;
                    let mut vm = 0.0;
                    for k in 0..WINDOW {
                        let stash = &self.ring[k].1[ci];
                        let u = stash.u.data()[idx];
                        let du = stash.du.data()[idx];
                        if (1..=4).contains(&k) {
                            let w = w4[k - 1];
                            jet_val[ci] += w * u;
                            jet_q1[ci] += w * stash.d1u.data()[idx];
                            jet_q2[ci] += w * stash.d2u.data()[idx];
                            if let Some(acc) = &stash.acc {
                                jet_acc[ci] += w * acc.data()[idx];
                            }
                            if let Some(src) = &stash.src {
                                jet_src[ci] += w * src.data()[idx];
                            }
                        }
                        if k <= 4 {
                            jet_pa[ci] += w5[k] * du;
                        }
                        jet_pc[ci] += w6[k] * du;
                        vp += w6p[k] * u;
                        vm += w6m[k] * u;
                    }
                    jet_pb[ci] = (vp - vm) / (2.0 * self.dt);
                }

                // Reductions per component.
                for (ci, spec) in self.comps.iter().enumerate() {
                    let red = &mut self.reductions[ci][si];
                    red.filled += 1;
                    let (v, pa, pb, pc) = (jet_val[ci], jet_pa[ci], jet_pb[ci], jet_pc[ci]);
                    let (q1, q2) = (jet_q1[ci], jet_q2[ci]);
                    red.mass_sq += v * v * h2;
                    if spec.kind != CompKind::Diagnostic {
                        // expression 1 with route a
                        red.energy_expr[0] +=
                            (pa * pa + q1 * q1 + q2 * q2 + 2.0 * (xt * pa * q1 + yt * pa * q2)) * h2;
                        // expression 2 with route b
                        let (u1, u2) = (q1 + xt * pb, q2 + yt * pb);
                        red.energy_expr[1] += (st * pb * st * pb + u1 * u1 + u2 * u2) * h2;
                        // expression 3 with route c
                        let perp = pc + xt * q1 + yt * q2;
                        let rot = (x * q2 - y * q1) / tau;
                        red.energy_expr[2] +=
                            (perp * perp + st * st * (q1 * q1 + q2 * q2) + rot * rot) * h2;
                        red.ghost += ghost_w * st * st * (pa * pa + q1 * q1 + q2 * q2) * h2;
                        let f = jet_src[ci];
                        red.ghost_rhs += st * ghost_w * f * pa * h2;
                        red.src_l2_sq += f * f * h2;
                        red.src_wee2 += st * pa.abs() * f.abs() * h2;
                    }
                    red.sup_t_u = red.sup_t_u.max((tau * v).abs());
                    red.sup_s_u = red.sup_s_u.max((s * v).abs());
                    red.sup_sw_u = red.sup_sw_u.max((s * ghost_w * v).abs());
                    red.sup_w_val = red.sup_w_val.max(v.abs() * tau.sqrt() * (tau - r).sqrt());

                    if spec.words == WordSet::None {
                        continue;
                    }
                    // Word jets: gather the four interior levels once.
                    let full = spec.words == WordSet::Full;
                    let nstash: [NodeStash; 4] = std::array::from_fn(|k| {
                        NodeStash::gather(&self.ring[k + 1].1[ci], idx, full)
                    });
                    let m2 = (spec.kind.mass() as f64).powi(2);
                    if full {
                        for (w, e) in red.word_energy.iter_mut() {
                            let mut jv = 0.0;
                            let mut jr = 0.0;
                            let mut j1 = 0.0;
                            let mut j2 = 0.0;
                            for k in 0..4 {
                                let jet = word_jet(&nstash[k], *w, x, y);
                                jv += w4[k] * jet.v;
                                jr += w4[k] * jet.r;
                                j1 += w4[k] * jet.g1;
                                j2 += w4[k] * jet.g2;
                            }
                            *e += (jr * jr
                                + j1 * j1
                                + j2 * j2
                                + 2.0 * (xt * jr * j1 + yt * jr * j2)
                                + m2 * jv * jv)
                                * h2;
                        }
                        // Second-derivative pointwise bound (wave components).
                        if spec.kind == CompKind::Wave {
                            let val_of = |w: Word| -> f64 {
                                let mut acc = 0.0;
                                for k in 0..4 {
                                    acc += w4[k] * word_jet(&nstash[k], w, x, y).v;
                                }
                                acc
                            };
                            let ddu = [
                                val_of(Word::DtDt),
                                val_of(Word::DtD1),
                                val_of(Word::DtD2),
                                val_of(Word::D11),
                                val_of(Word::D12),
                                val_of(Word::D22),
                            ]
                            .iter()
                            .fold(0.0f64, |m, v| m.max(v.abs()));
                            let dlu = [
                                Word::DtL1,
                                Word::DtL2,
                                Word::D1L1,
                                Word::D1L2,
                                Word::D2L1,
                                Word::D2L2,
                            ]
                            .iter()
                            .fold(0.0f64, |m, w| m.max(val_of(*w).abs()));
                            let du1 = pa.abs().max(q1.abs()).max(q2.abs());
                            let box_u = jet_src[ci].abs();
                            let rhs = (dlu + du1) / (tau - r) + tau / (tau - r) * box_u;
                            if rhs > 1e-14 {
                                red.ddu_max_ratio = red.ddu_max_ratio.max(ddu / rhs);
                            }
                            red.sup_ddu_w =
                                red.sup_ddu_w.max(ddu * s * (tau - r).powf(-2.0 * delta));
                        }
                    }
                    for (w, norms) in red.word_l2.iter_mut() {
                        let mut jv = 0.0;
                        for k in 0..4 {
                            jv += w4[k] * word_jet(&nstash[k], *w, x, y).v;
                        }
                        norms[0] += jv * jv * h2;
                        norms[1] += (st * jv) * (st * jv) * h2;
                        norms[2] += (st * ghost_w * jv) * (st * ghost_w * jv) * h2;
                    }
                }

                // Stored fields.
                if self.store_fields {
                    for ci in 0..self.comps.len() {
                        if let Some(slice) = self.stored[ci][si].as_mut() {
                            slice.valid[idx] = true;
                            slice.val[idx] = jet_val[ci];
                            slice.p[idx] = jet_pa[ci];
                            slice.p_center.as_mut().unwrap()[idx] = jet_pb[ci];
                            slice.p_quintic.as_mut().unwrap()[idx] = jet_pc[ci];
                            slice.q1[idx] = jet_q1[ci];
                            slice.q2[idx] = jet_q2[ci];
                            slice.acc.as_mut().unwrap()[idx] = jet_acc[ci];
                        }
                    }
                }

                // Quasilinear cross terms and gate.
                if let Some(coeffs) = &self.quasi {
                    let row = &mut self.quasi_rows[si];
                    row.filled += 1;
                    let dv = [jet_pa[0], jet_q1[0], jet_q2[0]];
                    let dw = [jet_pa[1], jet_q1[1], jet_q2[1]];
                    let q = coeffs.q_at(jet_val[0], dv);
                    let mut qmax = 0.0f64;
                    for row_q in &q {
                        for &val in row_q {
                            qmax = qmax.max(val.abs());
                        }
                    }
                    row.gate_max = row.gate_max.max(qmax / (st * st));
                    // flat part: E1(v) route a + E(w) route a
                    let e1v = dv[0] * dv[0]
                        + dv[1] * dv[1]
                        + dv[2] * dv[2]
                        + 2.0 * (xt * dv[0] * dv[1] + yt * dv[0] * dv[2])
                        + jet_val[0] * jet_val[0];
                    let ew = dw[0] * dw[0]
                        + dw[1] * dw[1]
                        + dw[2] * dw[2]
                        + 2.0 * (xt * dw[0] * dw[1] + yt * dw[0] * dw[2]);
                    row.flat += (e1v + ew) * h2;
                    row.cross += QuasiCoeffs::cross_at(&q, dv, dw, xt, yt) * h2;
                }
            }
        }
    }

    /// Number of levels consumed so far.
    pub fn levels_seen(&self) -> usize {
        self.levels_seen
    }

    pub fn finalize(self) -> SliceSet {
        SliceSet {
            s_values: self.s_values,
            comps: self.comps,
            gamma: self.gamma,
            reductions: self.reductions,
            stored: self.stored,
            quasi_rows: self.quasi_rows,
        }
    }
}

impl SliceSet {
    /// Index of a component by name.
    pub fn comp(&self, name: &str) -> Option<usize> {
        self.comps.iter().position(|c| c.name == name)
    }

    /// Slices (component `ci`) that were completely filled by the run.
    pub fn complete_slices(&self, ci: usize) -> Vec<&SliceReductions> {
        self.reductions[ci].iter().filter(|r| r.complete()).collect()
    }

    /// Write `energies.csv`: one row per (slice, component):
    /// `s, component, m, expr1, expr2, expr3, ghost_gamma, ghost_value`.
    pub fn write_energies_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "s,component,m,expr1,expr2,expr3,ghost_gamma,ghost_value")?;
        for (ci, comp) in self.comps.iter().enumerate() {
            if comp.kind == CompKind::Diagnostic {
                continue;
            }
            let m = comp.kind.mass();
            for red in &self.reductions[ci] {
                if !red.complete() {
                    continue;
                }
                writeln!(
                    f,
                    "{},{},{},{:.12e},{:.12e},{:.12e},{},{:.12e}",
                    red.s,
                    comp.name,
                    m,
                    red.energy(m, 0),
                    red.energy(m, 1),
                    red.energy(m, 2),
                    self.gamma,
                    red.ghost
                )?;
            }
        }
        Ok(())
    }
}
