//! Run-directory artifacts: the manifest, CSV writers, and the parsers
//! `verify` uses to rebuild check inputs from an archived run.
//!
//! Every numeric cell is written with 17 significant digits, so a parsed
//! value is bit-identical to the one the run computed and `verify`
//! reproduces the run-time ledger exactly.

use hyperfoil::hyperboloid::{CompKind, QuasiSliceRow, SliceReductions, SliceSet, Word};
use hyperfoil::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::checks::{CompData, SeriesTable};

pub const SERIES_KGZ: &[&str] = &["t", "sup_e", "sup_n", "sup_density", "wsup_density"];
pub const SERIES_QWKG: &[&str] = &["t", "sup_v", "sup_w", "wsup_ddw"];

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

// ---------------------------------------------------------------------------
// Writers
// ---------------------------------------------------------------------------

pub fn write_series_csv(path: &Path, cols: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(f, "{}", cols.join(","))?;
    for row in rows {
        let cells: Vec<String> = row.iter().map(|&x| fmt(x)).collect();
        writeln!(f, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Full-precision per-slice reductions of every component, complete or not.
/// This is the machine-readable companion of `energies.csv`.
pub fn write_aux_csv(path: &Path, set: &SliceSet) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(
        f,
        "component,m,diag,s,filled,expected,expr1,expr2,expr3,mass_sq,ghost,ghost_rhs,\
         src_l2_sq,src_wee2,sup_t_u,sup_s_u,sup_sw_u,sup_w_val,ddu_max_ratio,sup_ddu_w"
    )?;
    for (ci, comp) in set.comps.iter().enumerate() {
        let diag = if comp.kind == CompKind::Diagnostic { 1 } else { 0 };
        for r in &set.reductions[ci] {
            writeln!(
                f,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                comp.name,
                comp.kind.mass(),
                diag,
                fmt(r.s),
                r.filled,
                r.expected,
                fmt(r.energy_expr[0]),
                fmt(r.energy_expr[1]),
                fmt(r.energy_expr[2]),
                fmt(r.mass_sq),
                fmt(r.ghost),
                fmt(r.ghost_rhs),
                fmt(r.src_l2_sq),
                fmt(r.src_wee2),
                fmt(r.sup_t_u),
                fmt(r.sup_s_u),
                fmt(r.sup_sw_u),
                fmt(r.sup_w_val),
                fmt(r.ddu_max_ratio),
                fmt(r.sup_ddu_w)
            )?;
        }
    }
    Ok(())
}

/// Per-word reductions. `energy` is empty for components that recorded
/// only boost-word value norms; the `l2*` columns are empty for words
/// outside the boost family.
pub fn write_words_csv(path: &Path, set: &SliceSet) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(f, "component,s,word,energy,l2,l2_st,l2_stw")?;
    for (ci, comp) in set.comps.iter().enumerate() {
        for r in &set.reductions[ci] {
            for &w in Word::all() {
                let e = r.word_energy_of(w);
                let l = r.word_l2_of(w);
                if e.is_none() && l.is_none() {
                    continue;
                }
                let ec = e.map_or(String::new(), fmt);
                let (a, b, c) = l.map_or((String::new(), String::new(), String::new()), |v| {
                    (fmt(v[0]), fmt(v[1]), fmt(v[2]))
                });
                writeln!(f, "{},{},{},{},{},{},{}", comp.name, fmt(r.s), w.label(), ec, a, b, c)?;
            }
        }
    }
    Ok(())
}

pub fn write_quasi_csv(path: &Path, rows: &[QuasiSliceRow]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(f, "s,flat,cross,gate_max,ratio,gate_holds,filled")?;
    for q in rows {
        writeln!(
            f,
            "{},{},{},{},{},{},{}",
            fmt(q.s),
            fmt(q.flat),
            fmt(q.cross),
            fmt(q.gate_max),
            fmt(q.ratio()),
            u8::from(q.gate_holds()),
            q.filled
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Readers
// ---------------------------------------------------------------------------

/// Read a CSV written by this module: a header line plus uniform rows.
fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::InvalidConfig(format!("{} is empty", path.display())))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
        if cells.len() != header.len() {
            return Err(Error::InvalidConfig(format!(
                "{} line {}: expected {} cells, got {}",
                path.display(),
                k + 2,
                header.len(),
                cells.len()
            )));
        }
        rows.push(cells);
    }
    Ok((header, rows))
}

fn parse_f(tok: &str, what: &str) -> Result<f64> {
    tok.parse::<f64>()
        .map_err(|_| Error::InvalidConfig(format!("{what}: expected a number, got '{tok}'")))
}

fn parse_u(tok: &str, what: &str) -> Result<usize> {
    tok.parse::<usize>()
        .map_err(|_| Error::InvalidConfig(format!("{what}: expected an integer, got '{tok}'")))
}

pub fn read_series_csv(path: &Path) -> Result<SeriesTable> {
    let (cols, raw) = read_table(path)?;
    let mut rows = Vec::with_capacity(raw.len());
    for cells in raw {
        let row: Result<Vec<f64>> =
            cells.iter().map(|c| parse_f(c, &format!("{}", path.display()))).collect();
        rows.push(row?);
    }
    Ok(SeriesTable { cols, rows })
}

fn word_from_label(label: &str) -> Option<Word> {
    Word::all().iter().copied().find(|w| w.label() == label)
}

/// Rebuild per-component slice reductions from `aux.csv` plus the word
/// columns of `words.csv`. Either file may be absent (no slices recorded),
/// yielding no components.
pub fn read_comps(aux: &Path, words: &Path) -> Result<Vec<CompData>> {
    if !aux.exists() {
        return Ok(Vec::new());
    }
    let (header, raw) = read_table(aux)?;
    let col = |name: &str| -> Result<usize> {
        header.iter().position(|c| c == name).ok_or_else(|| {
            Error::InvalidConfig(format!("{} lacks column '{name}'", aux.display()))
        })
    };
    let (c_comp, c_m, c_diag, c_s) = (col("component")?, col("m")?, col("diag")?, col("s")?);
    let (c_filled, c_expected) = (col("filled")?, col("expected")?);
    let idx: Vec<usize> = [
        "expr1",
        "expr2",
        "expr3",
        "mass_sq",
        "ghost",
        "ghost_rhs",
        "src_l2_sq",
        "src_wee2",
        "sup_t_u",
        "sup_s_u",
        "sup_sw_u",
        "sup_w_val",
        "ddu_max_ratio",
        "sup_ddu_w",
    ]
    .iter()
    .map(|n| col(n))
    .collect::<Result<_>>()?;

    let mut comps: Vec<CompData> = Vec::new();
    for cells in raw {
        let name = cells[c_comp].clone();
        let v: Vec<f64> = idx
            .iter()
            .map(|&k| parse_f(&cells[k], &format!("{} ({name})", aux.display())))
            .collect::<Result<_>>()?;
        let red = SliceReductions {
            s: parse_f(&cells[c_s], "aux s")?,
            filled: parse_u(&cells[c_filled], "aux filled")?,
            expected: parse_u(&cells[c_expected], "aux expected")?,
            energy_expr: [v[0], v[1], v[2]],
            mass_sq: v[3],
            ghost: v[4],
            ghost_rhs: v[5],
            src_l2_sq: v[6],
            src_wee2: v[7],
            sup_t_u: v[8],
            sup_s_u: v[9],
            sup_sw_u: v[10],
            sup_w_val: v[11],
            word_energy: Vec::new(),
            word_l2: Vec::new(),
            ddu_max_ratio: v[12],
            sup_ddu_w: v[13],
        };
        match comps.iter_mut().find(|c| c.name == name) {
            Some(c) => c.reds.push(red),
            None => comps.push(CompData {
                name,
                mass: parse_u(&cells[c_m], "aux m")? as u8,
                diagnostic: cells[c_diag] == "1",
                reds: vec![red],
            }),
        }
    }

    if words.exists() {
        let (wh, wraw) = read_table(words)?;
        let wcol = |name: &str| -> Result<usize> {
            wh.iter().position(|c| c == name).ok_or_else(|| {
                Error::InvalidConfig(format!("{} lacks column '{name}'", words.display()))
            })
        };
        let (k_comp, k_s, k_word) = (wcol("component")?, wcol("s")?, wcol("word")?);
        let (k_e, k_l2, k_st, k_stw) = (wcol("energy")?, wcol("l2")?, wcol("l2_st")?, wcol("l2_stw")?);
        for cells in wraw {
            let w = word_from_label(&cells[k_word]).ok_or_else(|| {
                Error::InvalidConfig(format!("unknown derivative word '{}'", cells[k_word]))
            })?;
            let s = parse_f(&cells[k_s], "words s")?;
            let comp = comps.iter_mut().find(|c| c.name == cells[k_comp]).ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "words.csv references component '{}' absent from aux.csv",
                    cells[k_comp]
                ))
            })?;
            let red = comp.reds.iter_mut().find(|r| (r.s - s).abs() < 1e-9).ok_or_else(|| {
                Error::InvalidConfig(format!("words.csv references unknown slice s = {s}"))
            })?;
            if !cells[k_e].is_empty() {
                red.word_energy.push((w, parse_f(&cells[k_e], "word energy")?));
            }
            if !cells[k_l2].is_empty() {
                red.word_l2.push((
                    w,
                    [
                        parse_f(&cells[k_l2], "word l2")?,
                        parse_f(&cells[k_st], "word l2_st")?,
                        parse_f(&cells[k_stw], "word l2_stw")?,
                    ],
                ));
            }
        }
    }
    Ok(comps)
}

pub fn read_quasi_csv(path: &Path) -> Result<Vec<QuasiSliceRow>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let (header, raw) = read_table(path)?;
    let col = |name: &str| -> Result<usize> {
        header.iter().position(|c| c == name).ok_or_else(|| {
            Error::InvalidConfig(format!("{} lacks column '{name}'", path.display()))
        })
    };
    let (c_s, c_flat, c_cross, c_gate, c_filled) =
        (col("s")?, col("flat")?, col("cross")?, col("gate_max")?, col("filled")?);
    raw.iter()
        .map(|cells| {
            Ok(QuasiSliceRow {
                s: parse_f(&cells[c_s], "quasi s")?,
                flat: parse_f(&cells[c_flat], "quasi flat")?,
                cross: parse_f(&cells[c_cross], "quasi cross")?,
                gate_max: parse_f(&cells[c_gate], "quasi gate_max")?,
                filled: parse_u(&cells[c_filled], "quasi filled")?,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

/// Reproducibility record of one run. Re-running the same binary on the
/// same config reproduces every CSV byte-for-byte at a fixed thread count.
#[derive(Serialize, Deserialize)]
pub struct Manifest {
    pub system: String,
    pub code_version: String,
    /// SHA-256 of the config text (empty text when defaults were used).
    pub config_hash: String,
    pub grid_nx: usize,
    pub grid_ny: usize,
    pub grid_h: f64,
    pub dt: f64,
    pub t0: f64,
    pub t_final: f64,
    pub eps: f64,
    /// Component amplitudes of the initial bump.
    pub seed: Vec<f64>,
    /// Ghost-weight exponent of the slicing stage, when slices were on.
    pub gamma: Option<f64>,
    /// Requested worker threads (the numerics are single-threaded; the
    /// value is recorded so manifests stay replayable if that changes).
    pub threads: usize,
    pub steps: usize,
    pub outputs: Vec<String>,
    pub wall_clock_s: f64,
    pub checks_passed: usize,
    pub checks_failed: usize,
    pub pass: bool,
}

pub fn config_hash(text: &str) -> String {
    let mut h = Sha256::new();
    h.update(text.as_bytes());
    format!("sha256:{:x}", h.finalize())
}

pub fn write_manifest(path: &Path, m: &Manifest) -> Result<()> {
    let f = fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(f), m)
        .map_err(|e| Error::InvalidConfig(format!("manifest serialization failed: {e}")))?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}
