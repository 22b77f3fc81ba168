//! Flat `key = value` run configuration.
//!
//! The format is deliberately primitive: one `section.key = value` pair per
//! line, `#` comments, blank lines ignored. Every error carries the line
//! number. Unknown keys are rejected so typos cannot silently fall back to
//! defaults.

use crate::error::{Error, Result};
use crate::evolve_kgz::{Integrator, KgzConfig, Seeds, SliceConfig};
use crate::evolve_qwkg::{QwkgConfig, QwkgSeeds, QwkgSliceConfig};
use crate::grid::{Grid, Order};
use crate::hyperboloid::{QuasiCoeffs, WordSet};
use std::path::Path;

/// Parsed key-value pairs with their source lines.
#[derive(Clone, Debug, Default)]
pub struct Config {
    pairs: Vec<(String, String, usize)>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let body = match raw.find('#') {
                Some(k) => &raw[..k],
                None => raw,
            }
            .trim();
            if body.is_empty() {
                continue;
            }
            let Some(eq) = body.find('=') else {
                return Err(Error::ConfigParse {
                    line,
                    msg: format!("expected 'key = value', got '{body}'"),
                });
            };
            let key = body[..eq].trim();
            let value = body[eq + 1..].trim();
            if key.is_empty() {
                return Err(Error::ConfigParse { line, msg: "empty key".into() });
            }
            if value.is_empty() {
                return Err(Error::ConfigParse { line, msg: format!("empty value for '{key}'") });
            }
            if let Some((_, _, first)) = pairs.iter().find(|(k, _, _)| k == key) {
                return Err(Error::ConfigParse {
                    line,
                    msg: format!("duplicate key '{key}' (first set on line {first})"),
                });
            }
            pairs.push((key.to_string(), value.to_string(), line));
        }
        Ok(Config { pairs })
    }

    pub fn from_file(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)?;
        Config::parse(&text)
    }

    fn lookup(&self, key: &str) -> Option<(&str, usize)> {
        self.pairs
            .iter()
            .find(|(k, _, _)| k == key)
            .map(|(_, v, l)| (v.as_str(), *l))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.pairs.iter().map(|(k, _, _)| k.as_str())
    }

    /// Reject keys outside the allowed set, pointing at the offending line.
    pub fn validate_keys(&self, allowed: &[&str]) -> Result<()> {
        for (k, _, line) in &self.pairs {
            if !allowed.contains(&k.as_str()) {
                return Err(Error::ConfigParse {
                    line: *line,
                    msg: format!("unknown key '{k}'"),
                });
            }
        }
        Ok(())
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        match self.lookup(key) {
            None => Ok(None),
            Some((v, line)) => v.parse::<f64>().map(Some).map_err(|_| Error::ConfigParse {
                line,
                msg: format!("'{key}' expects a number, got '{v}'"),
            }),
        }
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>> {
        match self.lookup(key) {
            None => Ok(None),
            Some((v, line)) => v.parse::<usize>().map(Some).map_err(|_| Error::ConfigParse {
                line,
                msg: format!("'{key}' expects a nonnegative integer, got '{v}'"),
            }),
        }
    }

    pub fn get_bool(&self, key: &str) -> Result<Option<bool>> {
        match self.lookup(key) {
            None => Ok(None),
            Some(("true", _)) => Ok(Some(true)),
            Some(("false", _)) => Ok(Some(false)),
            Some((v, line)) => Err(Error::ConfigParse {
                line,
                msg: format!("'{key}' expects true or false, got '{v}'"),
            }),
        }
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.lookup(key).map(|(v, _)| v)
    }

    pub fn get_f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.lookup(key) {
            None => Ok(None),
            Some((v, line)) => v
                .split(',')
                .map(|tok| {
                    tok.trim().parse::<f64>().map_err(|_| Error::ConfigParse {
                        line,
                        msg: format!("'{key}' expects comma-separated numbers, got '{tok}'"),
                    })
                })
                .collect::<Result<Vec<f64>>>()
                .map(Some),
        }
    }

    fn get_order(&self, key: &str) -> Result<Option<Order>> {
        match self.lookup(key) {
            None => Ok(None),
            Some(("2", _)) => Ok(Some(Order::Two)),
            Some(("4", _)) => Ok(Some(Order::Four)),
            Some((v, line)) => Err(Error::ConfigParse {
                line,
                msg: format!("'{key}' expects 2 or 4, got '{v}'"),
            }),
        }
    }

    fn get_word_set(&self, key: &str) -> Result<Option<WordSet>> {
        match self.lookup(key) {
            None => Ok(None),
            Some(("none", _)) => Ok(Some(WordSet::None)),
            Some(("boosts", _)) => Ok(Some(WordSet::Boosts)),
            Some(("full", _)) => Ok(Some(WordSet::Full)),
            Some((v, line)) => Err(Error::ConfigParse {
                line,
                msg: format!("'{key}' expects none|boosts|full, got '{v}'"),
            }),
        }
    }

    fn get_integrator(&self, key: &str) -> Result<Option<Integrator>> {
        match self.lookup(key) {
            None => Ok(None),
            Some(("verlet", _)) => Ok(Some(Integrator::Verlet)),
            Some(("rk4", _)) => Ok(Some(Integrator::Rk4)),
            Some((v, line)) => Err(Error::ConfigParse {
                line,
                msg: format!("'{key}' expects verlet or rk4, got '{v}'"),
            }),
        }
    }
}

const COMMON_KEYS: &[&str] = &[
    "grid.n",
    "grid.h",
    "time.dt",
    "time.t0",
    "time.t_final",
    "time.series_every",
    "ic.eps",
    "evolve.integrator",
    "evolve.order",
    "evolve.mask",
    "evolve.mask_margin",
    "slices.s",
    "slices.gamma",
    "slices.delta",
    "slices.store_fields",
    "verify.delta",
    "verify.fit_lo",
    "verify.fit_hi",
    "verify.s_fit_lo",
    "verify.s_fit_hi",
];

const KGZ_KEYS: &[&str] = &[
    "ic.e0",
    "ic.e1",
    "ic.n0",
    "ic.n1",
    "evolve.coupling",
    "slices.words_e",
    "slices.words_n",
    "slices.with_density",
];

const QWKG_KEYS: &[&str] = &["ic.v0", "ic.v1", "ic.w0", "ic.w1", "coeffs.set", "coeffs.p1", "coeffs.p2"];

/// Fit windows and growth cap used by the verification stage.
#[derive(Clone, Copy, Debug)]
pub struct VerifySettings {
    pub delta: f64,
    /// Fixed-t fit window.
    pub fit: (f64, f64),
    /// Hyperbolic-time fit window.
    pub s_fit: (f64, f64),
}

impl Default for VerifySettings {
    fn default() -> Self {
        VerifySettings { delta: 1.0 / 32.0, fit: (5.0, 60.0), s_fit: (6.0, 11.0) }
    }
}

pub fn verify_settings_from(cfg: &Config) -> Result<VerifySettings> {
    let mut v = VerifySettings::default();
    if let Some(d) = cfg.get_f64("verify.delta")? {
        v.delta = d;
    }
    if let Some(x) = cfg.get_f64("verify.fit_lo")? {
        v.fit.0 = x;
    }
    if let Some(x) = cfg.get_f64("verify.fit_hi")? {
        v.fit.1 = x;
    }
    if let Some(x) = cfg.get_f64("verify.s_fit_lo")? {
        v.s_fit.0 = x;
    }
    if let Some(x) = cfg.get_f64("verify.s_fit_hi")? {
        v.s_fit.1 = x;
    }
    Ok(v)
}

fn grid_from(cfg: &Config) -> Result<Grid> {
    let n = cfg.get_usize("grid.n")?.unwrap_or(513);
    let h = cfg.get_f64("grid.h")?.unwrap_or(0.25);
    Grid::square(n, h)
}

fn slice_common(cfg: &Config) -> Result<Option<(Vec<f64>, f64, f64, bool)>> {
    let Some(s) = cfg.get_f64_list("slices.s")? else { return Ok(None) };
    let gamma = cfg.get_f64("slices.gamma")?.unwrap_or(0.125);
    let delta = cfg.get_f64("slices.delta")?.unwrap_or(1.0 / 32.0);
    let store = cfg.get_bool("slices.store_fields")?.unwrap_or(false);
    Ok(Some((s, gamma, delta, store)))
}

/// Build a KGZ run configuration, validating every key.
pub fn kgz_config_from(cfg: &Config) -> Result<KgzConfig> {
    let allowed: Vec<&str> = COMMON_KEYS.iter().chain(KGZ_KEYS).copied().collect();
    cfg.validate_keys(&allowed)?;
    let grid = grid_from(cfg)?;
    let dt = cfg.get_f64("time.dt")?.unwrap_or(0.1);
    let t_final = cfg.get_f64("time.t_final")?.unwrap_or(60.0);
    let mut out = KgzConfig::new(grid, dt, t_final);
    if let Some(t0) = cfg.get_f64("time.t0")? {
        out.t0 = t0;
    }
    if let Some(se) = cfg.get_usize("time.series_every")? {
        out.series_every = se.max(1);
    }
    if let Some(eps) = cfg.get_f64("ic.eps")? {
        out.eps = eps;
    }
    let d = Seeds::default();
    out.seeds = Seeds {
        e0: cfg.get_f64("ic.e0")?.unwrap_or(d.e0),
        e1: cfg.get_f64("ic.e1")?.unwrap_or(d.e1),
        n0: cfg.get_f64("ic.n0")?.unwrap_or(d.n0),
        n1: cfg.get_f64("ic.n1")?.unwrap_or(d.n1),
    };
    if let Some(i) = cfg.get_integrator("evolve.integrator")? {
        out.integrator = i;
    }
    if let Some(o) = cfg.get_order("evolve.order")? {
        out.order = o;
    }
    if let Some(m) = cfg.get_bool("evolve.mask")? {
        out.mask = m;
    }
    if let Some(m) = cfg.get_f64("evolve.mask_margin")? {
        out.mask_margin = m;
    }
    if let Some(c) = cfg.get_bool("evolve.coupling")? {
        out.coupling = c;
    }
    if let Some((s_values, gamma, delta, store_fields)) = slice_common(cfg)? {
        out.slices = Some(SliceConfig {
            s_values,
            gamma,
            delta,
            words_e: cfg.get_word_set("slices.words_e")?.unwrap_or(WordSet::Full),
            words_n: cfg.get_word_set("slices.words_n")?.unwrap_or(WordSet::Full),
            store_fields,
            with_density: cfg.get_bool("slices.with_density")?.unwrap_or(true),
        });
    }
    Ok(out)
}

fn coeffs_from(cfg: &Config) -> Result<QuasiCoeffs> {
    let mut coeffs = match cfg.get_str("coeffs.set") {
        Some("a") => QuasiCoeffs::set_a(),
        Some("b") => QuasiCoeffs::set_b(),
        Some("c") => QuasiCoeffs::set_c(),
        Some("zero") | None => QuasiCoeffs::zeros(),
        Some(other) => {
            let line = cfg.lookup("coeffs.set").map(|(_, l)| l).unwrap_or(0);
            return Err(Error::ConfigParse {
                line,
                msg: format!("'coeffs.set' expects a|b|c|zero, got '{other}'"),
            });
        }
    };
    if let Some(p1) = cfg.get_f64_list("coeffs.p1")? {
        if p1.len() != 9 {
            let line = cfg.lookup("coeffs.p1").map(|(_, l)| l).unwrap_or(0);
            return Err(Error::ConfigParse {
                line,
                msg: format!("'coeffs.p1' expects 9 entries (row-major 3x3), got {}", p1.len()),
            });
        }
        for i in 0..3 {
            for j in 0..3 {
                coeffs.p1[i][j] = p1[3 * i + j];
            }
        }
    }
    if let Some(p2) = cfg.get_f64_list("coeffs.p2")? {
        if p2.len() != 27 {
            let line = cfg.lookup("coeffs.p2").map(|(_, l)| l).unwrap_or(0);
            return Err(Error::ConfigParse {
                line,
                msg: format!("'coeffs.p2' expects 27 entries (3x3x3), got {}", p2.len()),
            });
        }
        for i in 0..3 {
            for j in 0..3 {
                for g in 0..3 {
                    coeffs.p2[i][j][g] = p2[9 * i + 3 * j + g];
                }
            }
        }
    }
    coeffs.validate()?;
    Ok(coeffs)
}

/// Build a quasilinear run configuration, validating every key.
pub fn qwkg_config_from(cfg: &Config) -> Result<QwkgConfig> {
    let allowed: Vec<&str> = COMMON_KEYS.iter().chain(QWKG_KEYS).copied().collect();
    cfg.validate_keys(&allowed)?;
    let grid = grid_from(cfg)?;
    let dt = cfg.get_f64("time.dt")?.unwrap_or(0.1);
    let t_final = cfg.get_f64("time.t_final")?.unwrap_or(60.0);
    let coeffs = coeffs_from(cfg)?;
    let mut out = QwkgConfig::new(grid, dt, t_final, coeffs);
    if let Some(t0) = cfg.get_f64("time.t0")? {
        out.t0 = t0;
    }
    if let Some(se) = cfg.get_usize("time.series_every")? {
        out.series_every = se.max(1);
    }
    if let Some(eps) = cfg.get_f64("ic.eps")? {
        out.eps = eps;
    }
    let d = QwkgSeeds::default();
    out.seeds = QwkgSeeds {
        v0: cfg.get_f64("ic.v0")?.unwrap_or(d.v0),
        v1: cfg.get_f64("ic.v1")?.unwrap_or(d.v1),
        w0: cfg.get_f64("ic.w0")?.unwrap_or(d.w0),
        w1: cfg.get_f64("ic.w1")?.unwrap_or(d.w1),
    };
    if let Some(i) = cfg.get_integrator("evolve.integrator")? {
        out.integrator = i;
    }
    if let Some(o) = cfg.get_order("evolve.order")? {
        out.order = o;
    }
    if let Some(m) = cfg.get_bool("evolve.mask")? {
        out.mask = m;
    }
    if let Some(m) = cfg.get_f64("evolve.mask_margin")? {
        out.mask_margin = m;
    }
    if let Some((s_values, gamma, delta, store_fields)) = slice_common(cfg)? {
        out.slices = Some(QwkgSliceConfig { s_values, gamma, delta, store_fields });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_blanks_and_pairs() {
        let cfg = Config::parse(
            "# a comment\n\ngrid.n = 97\ngrid.h = 0.25 # trailing\ntime.dt = 0.1\n",
        )
        .unwrap();
        assert_eq!(cfg.get_usize("grid.n").unwrap(), Some(97));
        assert_eq!(cfg.get_f64("grid.h").unwrap(), Some(0.25));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = Config::parse("grid.n = 97\nnot a pair\n").unwrap_err();
        match err {
            Error::ConfigParse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let cfg = Config::parse("grid.n = banana\n").unwrap();
        match cfg.get_usize("grid.n").unwrap_err() {
            Error::ConfigParse { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_and_unknown_keys_are_rejected() {
        let err = Config::parse("time.dt = 0.1\ntime.dt = 0.2\n").unwrap_err();
        assert!(matches!(err, Error::ConfigParse { line: 2, .. }));
        let cfg = Config::parse("grid.nn = 5\n").unwrap();
        assert!(matches!(kgz_config_from(&cfg), Err(Error::ConfigParse { line: 1, .. })));
    }

    #[test]
    fn kgz_defaults_and_overrides() {
        let cfg = Config::parse("grid.n = 129\ngrid.h = 0.5\ntime.dt = 0.25\ntime.t_final = 10\nic.eps = 0.02\n").unwrap();
        let k = kgz_config_from(&cfg).unwrap();
        assert_eq!(k.grid.nx(), 129);
        assert_eq!(k.eps, 0.02);
        assert_eq!(k.t0, 2.0);
        assert!(k.mask);
        assert!(k.slices.is_none());
    }

    #[test]
    fn qwkg_coefficient_sets_parse() {
        let cfg = Config::parse("coeffs.set = b\ntime.t_final = 6\n").unwrap();
        let q = qwkg_config_from(&cfg).unwrap();
        assert_eq!(q.coeffs.p1[0][0], 0.0);
        assert_eq!(q.coeffs.p2[0][0][0], 1.0);
        let cfg = Config::parse("coeffs.p1 = 1,0,0,0,1,0,0,0,1\n").unwrap();
        let q = qwkg_config_from(&cfg).unwrap();
        assert_eq!(q.coeffs.p1[1][1], 1.0);
        assert_eq!(q.coeffs.p1[0][1], 0.0);
    }
}
