//! Tests for the verification layer: decay fits, the inequality ledgers with
//! hand-built reduction rows (so the documented constants 2 and 4 and the
//! trapezoid flux accumulation are pinned exactly), the synthetic ghost
//! identity ladder, Sobolev constants, and the artifact writers.

use hyperfoil::evolve_kgz::{run_kgz, KgzConfig, SliceConfig};
use hyperfoil::grid::Grid;
use hyperfoil::hyperboloid::{SliceReductions, Word, WordSet};
use hyperfoil::verify::{
    check_energy_inequality_i, check_energy_inequality_ii, check_ghost_inequality,
    check_sobolev, check_theorem_energy_bounds, ddu_on_reductions, ddu_synthetic_ratio,
    fit_decay, ghost_identity_ladder, sobolev_on_reductions, write_fits_csv, write_ledger_json,
    CheckRow, InequalityCheck, LedgerEntry,
};

// ---------------------------------------------------------------------------
// Decay fits
// ---------------------------------------------------------------------------

#[test]
fn fit_uses_only_the_window_and_positive_values() {
    // A different (steeper) law before the window and junk inside it that the
    // positivity filter must drop; the fit over [5, 60] still recovers the
    // clean exponent.
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for k in 0..30 {
        let t = 2.0 + 0.1 * k as f64; // all below 5
        pts.push((t, 10.0 * t.powf(-2.5)));
    }
    for k in 0..200 {
        let t = 5.0 + 0.25 * k as f64;
        pts.push((t, 3.7 * t.powf(-1.25)));
    }
    pts.push((10.0, 0.0)); // dropped: not positive
    pts.push((12.0, -4.0)); // dropped: not positive
    let fit = fit_decay("windowed", &pts, (5.0, 60.0)).unwrap();
    assert!((fit.exponent + 1.25).abs() < 1e-10, "exponent {}", fit.exponent);
    assert!((fit.intercept - 3.7f64.ln()).abs() < 1e-10);
    assert_eq!(fit.window, (5.0, 60.0));
    // 5 <= t <= 60 from the clean law only: k in 0..=220 clipped to 200.
    assert_eq!(fit.n, 200);
    assert!(fit.band95 < 1e-9);
}

#[test]
fn fit_errors_are_informative() {
    // Too few usable points.
    let pts = vec![(6.0, 1.0), (7.0, 1.0)];
    let err = fit_decay("sparse", &pts, (5.0, 60.0)).unwrap_err();
    assert!(err.to_string().contains("sparse"));

    // A single repeated abscissa cannot anchor a slope.
    let pts = vec![(6.0, 1.0), (6.0, 2.0), (6.0, 3.0)];
    assert!(fit_decay("stacked", &pts, (5.0, 60.0)).is_err());
}

// ---------------------------------------------------------------------------
// Inequality checks on synthetic reductions (exact bookkeeping)
// ---------------------------------------------------------------------------

/// Baseline reduction row: complete, with every integral zero.
fn base_red(s: f64) -> SliceReductions {
    SliceReductions {
        s,
        filled: 10,
        expected: 10,
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
        word_energy: Vec::new(),
        word_l2: Vec::new(),
        ddu_max_ratio: 0.0,
        sup_ddu_w: 0.0,
    }
}

#[test]
fn first_energy_inequality_matches_hand_arithmetic() {
    // E(s) = (1+s)² and ‖f‖_{L²} = 1: the right side E(4)^{1/2} + (s-4)
    // equals the left side 1+s exactly (the trapezoid rule is exact on
    // constants), so every margin is zero.
    let s_values = [4.0, 5.0, 6.0, 7.0];
    let reds: Vec<SliceReductions> = s_values
        .iter()
        .map(|&s| {
            let mut r = base_red(s);
            r.energy_expr[0] = (1.0 + s) * (1.0 + s);
            r.src_l2_sq = 1.0;
            r
        })
        .collect();
    let refs: Vec<&SliceReductions> = reds.iter().collect();
    let check = check_energy_inequality_i(&refs, 0, "mk1").unwrap();
    assert!(check.pass);
    for row in &check.rows {
        assert!(row.margin().abs() < 1e-12, "margin {} at s = {}", row.margin(), row.s);
    }

    // Halving the recorded source makes the budget insufficient.
    let reds2: Vec<SliceReductions> = reds
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.src_l2_sq = 0.25;
            r
        })
        .collect();
    let refs2: Vec<&SliceReductions> = reds2.iter().collect();
    let check2 = check_energy_inequality_i(&refs2, 0, "mk1-short").unwrap();
    assert!(!check2.pass);
    assert!((check2.margin_min - (-1.5)).abs() < 1e-12, "margin {}", check2.margin_min);
}

#[test]
fn second_energy_and_ghost_inequalities_pin_their_constants() {
    // E(s) = s, flux ∫(s/t)|∂_t u||f| = 1: rhs = E(4) + (s-4) = s exactly.
    let s_values = [4.0, 5.0, 6.0];
    let mk = |f: &dyn Fn(f64, &mut SliceReductions)| -> Vec<SliceReductions> {
        s_values
            .iter()
            .map(|&s| {
                let mut r = base_red(s);
                f(s, &mut r);
                r
            })
            .collect()
    };

    let reds = mk(&|s, r| {
        r.energy_expr[0] = s;
        r.src_wee2 = 1.0;
    });
    let refs: Vec<&SliceReductions> = reds.iter().collect();
    let check = check_energy_inequality_ii(&refs, 0, "mk2").unwrap();
    assert!(check.pass);
    for row in &check.rows {
        assert!(row.margin().abs() < 1e-12);
    }

    // Ghost: lhs = s, rhs = 2·E(4) + 4·∫(1/4) = 8 + (s-4) with E(4) = 4:
    // margins are (8 + s - 4) - s = 4 > 0. Doubling the ghost reading to 2s
    // flips the final row: 2s > s + 4 at s = 6 fails by exactly 2·6-10 = 2.
    let reds = mk(&|s, r| {
        r.energy_expr[0] = 4.0;
        r.ghost = s;
        r.ghost_rhs = 0.25;
    });
    let refs: Vec<&SliceReductions> = reds.iter().collect();
    let check = check_ghost_inequality(&refs, "ghost").unwrap();
    assert!(check.pass);
    for row in &check.rows {
        assert!((row.margin() - 4.0).abs() < 1e-12);
    }

    let reds = mk(&|s, r| {
        r.energy_expr[0] = 4.0;
        r.ghost = 2.0 * s;
        r.ghost_rhs = 0.25;
    });
    let refs: Vec<&SliceReductions> = reds.iter().collect();
    let check = check_ghost_inequality(&refs, "ghost-fail").unwrap();
    assert!(!check.pass);
    assert!((check.margin_min - (-2.0)).abs() < 1e-12);
}

#[test]
fn incomplete_slices_are_excluded_from_inequalities() {
    // The middle slice is poisoned but incomplete; only the two complete
    // slices participate, and the check passes.
    let mut reds = vec![base_red(4.0), base_red(5.0), base_red(6.0)];
    for r in &mut reds {
        r.energy_expr[0] = 1.0;
        r.src_l2_sq = 1.0;
    }
    reds[1].filled = 3; // incomplete
    reds[1].energy_expr[0] = 1e12;
    let refs: Vec<&SliceReductions> = reds.iter().collect();
    let check = check_energy_inequality_i(&refs, 0, "skip").unwrap();
    assert!(check.pass);
    assert_eq!(check.rows.len(), 2);

    // Fewer than two complete slices is a configuration error.
    reds[2].filled = 0;
    let refs: Vec<&SliceReductions> = reds.iter().collect();
    assert!(check_energy_inequality_i(&refs, 0, "short").is_err());
}

#[test]
fn inequality_row_bookkeeping() {
    let rows = vec![
        CheckRow { s: 3.0, lhs: 1.0, rhs: 1.5 },
        CheckRow { s: 4.0, lhs: 2.0, rhs: 2.0 },
    ];
    let c = InequalityCheck::from_rows("ok", rows);
    assert!(c.pass);
    assert_eq!(c.margin_min, 0.0);

    let rows = vec![
        CheckRow { s: 3.0, lhs: 1.0, rhs: 1.5 },
        CheckRow { s: 4.0, lhs: 2.0, rhs: 1.9 },
    ];
    let c = InequalityCheck::from_rows("bad", rows);
    assert!(!c.pass);
    assert!((c.margin_min - (-0.1)).abs() < 1e-15);
}

#[test]
fn growth_caps_fit_exact_power_laws() {
    // E(s, Wu) = s^{2a} gives E^{1/2} = s^a; the cap is δ + 0.05.
    let delta = 1.0 / 32.0;
    let mk = |a: f64| -> Vec<SliceReductions> {
        [4.0, 5.0, 6.0, 7.0]
            .iter()
            .map(|&s| {
                let mut r = base_red(s);
                r.word_energy = vec![(Word::Dt, s.powf(2.0 * a)), (Word::L1, s.powf(-0.4))];
                r
            })
            .collect()
    };

    let reds = mk(delta); // exactly at δ < δ + 0.05
    let refs: Vec<&SliceReductions> = reds.iter().collect();
    let out = check_theorem_energy_bounds(&refs, "u", delta, (3.0, 8.0)).unwrap();
    assert_eq!(out.len(), 2);
    let dt = out.iter().find(|g| g.word == "dt").unwrap();
    assert!((dt.exponent - delta).abs() < 1e-10);
    assert!(dt.pass);
    let l1 = out.iter().find(|g| g.word == "L1").unwrap();
    assert!((l1.exponent + 0.2).abs() < 1e-10);
    assert!(l1.pass, "decaying word energies satisfy any positive cap");

    let reds = mk(0.2); // above the cap
    let refs: Vec<&SliceReductions> = reds.iter().collect();
    let out = check_theorem_energy_bounds(&refs, "u", delta, (3.0, 8.0)).unwrap();
    assert!(!out.iter().find(|g| g.word == "dt").unwrap().pass);
}

// ---------------------------------------------------------------------------
// Inequalities on a real forced run
// ---------------------------------------------------------------------------

#[test]
fn forced_linear_run_satisfies_the_energy_and_ghost_budgets() {
    let grid = Grid::square(97, 0.25).unwrap();
    let mut cfg = KgzConfig::new(grid, 0.1, 8.0);
    cfg.eps = 0.01;
    cfg.slices = Some(SliceConfig {
        s_values: vec![3.0, 3.3, 3.6],
        gamma: 0.125,
        delta: 1.0 / 32.0,
        words_e: WordSet::Boosts,
        words_n: WordSet::Full,
        store_fields: false,
        with_density: false,
    });
    let out = run_kgz(&cfg).unwrap();
    let set = out.slices.unwrap();

    let e_ci = set.comp("E").unwrap();
    let n_ci = set.comp("n").unwrap();
    let e_reds = set.complete_slices(e_ci);
    let n_reds = set.complete_slices(n_ci);
    assert_eq!(e_reds.len(), 3);
    assert_eq!(n_reds.len(), 3);

    // The Klein-Gordon field is forced by the density coupling, the wave
    // field by 2E²; all recorded budgets must close with margin.
    for (reds, m, tag) in [(&e_reds, 1u8, "E"), (&n_reds, 0u8, "n")] {
        let c1 = check_energy_inequality_i(reds, m, format!("{tag}-i")).unwrap();
        assert!(c1.pass, "{tag} first energy inequality margin {}", c1.margin_min);
        let c2 = check_energy_inequality_ii(reds, m, format!("{tag}-ii")).unwrap();
        assert!(c2.pass, "{tag} second energy inequality margin {}", c2.margin_min);
        let cg = check_ghost_inequality(reds, format!("{tag}-ghost")).unwrap();
        assert!(cg.pass, "{tag} ghost inequality margin {}", cg.margin_min);
    }

    // Boost-word value norms were recorded for E: the evolved Sobolev
    // constants exist and are order-one-or-smaller.
    let sob = sobolev_on_reductions(&e_reds).expect("boost norms recorded");
    for c in [sob.c1, sob.c2, sob.c3] {
        assert!(c > 0.0 && c < 10.0, "evolved Sobolev constant {c}");
    }

    // Full words on the wave channel populate the second-derivative bound.
    let ddu = ddu_on_reductions(&n_reds);
    assert!(ddu > 0.0 && ddu < 10.0, "second-derivative ratio {ddu}");

    // Word growth fits exist for every recorded word on the wave channel.
    let growth =
        check_theorem_energy_bounds(&n_reds, "n", 1.0 / 32.0, (2.9, 3.7)).unwrap();
    assert_eq!(growth.len(), Word::all().len());
    for g in &growth {
        assert!(g.exponent.is_finite(), "word {} produced a non-finite exponent", g.word);
    }
}

// ---------------------------------------------------------------------------
// Synthetic ladders and constants
// ---------------------------------------------------------------------------

#[test]
fn ghost_identity_residual_shrinks_at_second_order() {
    let rep = ghost_identity_ladder(0.125, &[0.2, 0.1]).unwrap();
    assert_eq!(rep.rungs.len(), 2);
    assert!(rep.rungs[0].1 > rep.rungs[1].1);
    assert!(
        rep.ratios[0] > 2.5 && rep.ratios[0] < 6.5,
        "residual ratio {} outside the second-order window",
        rep.ratios[0]
    );
    // The quadratic multiplier term is a sum of squares.
    assert!(rep.quad_term_min >= 0.0);
    assert!(rep.quad_term_min.is_finite());

    assert!(ghost_identity_ladder(0.0, &[0.2]).is_err());
    assert!(ghost_identity_ladder(-1.0, &[0.2]).is_err());
}

#[test]
fn sobolev_constants_are_deterministic_and_stable_under_refinement() {
    let coarse = check_sobolev(11, 25, 0.4, 0.125).unwrap();
    let again = check_sobolev(11, 25, 0.4, 0.125).unwrap();
    assert_eq!(coarse.c1, again.c1);
    assert_eq!(coarse.c2, again.c2);
    assert_eq!(coarse.c3, again.c3);

    let fine = check_sobolev(11, 25, 0.2, 0.125).unwrap();
    let drift = coarse.max_rel_change(&fine);
    assert!(drift < 0.20, "constants moved {drift} under one refinement");

    // Different seeds explore different bumps but stay the same order.
    let other = check_sobolev(99, 25, 0.4, 0.125).unwrap();
    let spread = coarse.max_rel_change(&other);
    assert!(spread < 1.0, "seed-to-seed spread {spread}");
}

#[test]
fn synthetic_second_derivative_bound_has_an_order_one_constant() {
    let c = ddu_synthetic_ratio();
    assert!(c > 0.05 && c < 4.0, "constant {c}");
}

// ---------------------------------------------------------------------------
// Artifact writers
// ---------------------------------------------------------------------------

#[test]
fn ledger_and_fit_files_round_trip() {
    let dir = std::env::temp_dir();
    let pid = std::process::id();

    let rows = vec![CheckRow { s: 3.0, lhs: 1.0, rhs: 2.0 }];
    let ineq = InequalityCheck::from_rows("demo", rows);
    let entries = vec![
        LedgerEntry::from_inequality(&ineq, "energy budget"),
        LedgerEntry {
            name: "decay".into(),
            reference: "pointwise fall-off".into(),
            constant: Some(1.5),
            margin_min: None,
            exponent: Some(-1.0),
            pass: true,
        },
    ];
    let ledger_path = dir.join(format!("hyperfoil_ledger_{pid}.json"));
    write_ledger_json(&ledger_path, &entries).unwrap();
    let parsed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&ledger_path).unwrap()).unwrap();
    let _ = std::fs::remove_file(&ledger_path);
    let arr = parsed.as_array().unwrap();
    assert_eq!(arr.len(), 2);
    assert_eq!(arr[0]["name"], "demo");
    assert_eq!(arr[0]["margin_min"], 1.0);
    assert_eq!(arr[0]["pass"], true);
    assert_eq!(arr[1]["exponent"], -1.0);
    assert!(arr[1]["margin_min"].is_null());

    let fits = vec![fit_decay(
        "law",
        &(1..50)
            .map(|k| {
                let t = 4.0 + 0.5 * k as f64;
                (t, t.powf(-1.0))
            })
            .collect::<Vec<_>>(),
        (5.0, 20.0),
    )
    .unwrap()];
    let fits_path = dir.join(format!("hyperfoil_fits_{pid}.csv"));
    write_fits_csv(&fits_path, &fits).unwrap();
    let text = std::fs::read_to_string(&fits_path).unwrap();
    let _ = std::fs::remove_file(&fits_path);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "series,window_lo,window_hi,exponent,band95,residual_rms,n"
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "law");
    assert!((row[3].parse::<f64>().unwrap() + 1.0).abs() < 1e-9);
}
