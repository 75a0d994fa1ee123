//! Sweep configuration files: `[section]` headers followed by `key = value`
//! lines. `#` and `;` start comments. Every key has a default except
//! `sweep.viscosities`; unknown sections and keys are errors.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use sha2::{Digest, Sha256};
use thiserror::Error;

/// A configuration problem, naming the offending key and the violated
/// constraint.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct ConfigError {
    /// `section.key`, or the section name for section-level problems.
    pub key: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(n) => write!(f, "config key `{}` (line {n}): {}", self.key, self.message),
            None => write!(f, "config key `{}`: {}", self.key, self.message),
        }
    }
}

fn err(key: &str, line: Option<usize>, message: impl Into<String>) -> ConfigError {
    ConfigError {
        key: key.into(),
        line,
        message: message.into(),
    }
}

pub const SECTIONS: [&str; 7] = ["sweep", "domain", "forcing", "initial", "diagnostics", "weak", "kato"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Geometry {
    /// Doubly periodic box, pseudospectral solver.
    Torus,
    /// Periodic in `x`, no-slip walls at `y = 0` and `y = ly`.
    Channel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForcingKindConfig {
    None,
    Kolmogorov,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialKind {
    Zero,
    /// Kolmogorov profile with amplitude `y0`.
    Kolmogorov,
    /// Kolmogorov profile plus two fixed oblique modes of size
    /// `perturbation` (torus only).
    Perturbed,
    /// Seeded random vorticity on `1 <= |m| <= kmax` (torus only).
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KatoReference {
    None,
    /// Closed-form inviscid Kolmogorov solution on the run's grid.
    Exact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub geometry: Geometry,
    /// Strictly decreasing, all positive.
    pub viscosities: Vec<f64>,
    /// Append an inviscid run after the viscous ones.
    pub euler: bool,
    pub t_end: f64,
    pub cadence: f64,
    /// Fixed step; `None` uses the CFL step.
    pub dt: Option<f64>,
    pub cfl: f64,
    pub dt_max: f64,
    pub seed: u64,
    pub n_min: usize,
    pub c_res: f64,
    /// Dissipation-rate guess for the resolution rule.
    pub eps_guess: f64,
    /// Memory cap for concurrently executing runs, in MiB.
    pub memory_mb: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainConfig {
    pub lx: f64,
    pub ly: f64,
    /// Fixed periodic grid size overriding the resolution rule.
    pub n: Option<usize>,
    /// Channel grid: Fourier modes in `x` and wall-normal intervals.
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForcingConfig {
    pub kind: ForcingKindConfig,
    pub k: u32,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialConfig {
    pub kind: InitialKind,
    pub y0: f64,
    pub perturbation: f64,
    pub amplitude: f64,
    pub kmax: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsConfig {
    /// Centred regions covering these fractions of each axis.
    pub regions: Vec<f64>,
    pub shells: usize,
    pub shell_min: Option<f64>,
    pub shell_max: Option<f64>,
    pub fit_min: Option<f64>,
    pub fit_max: Option<f64>,
    pub directions: usize,
    /// Cadence points entering the structure functions (evenly strided).
    pub structure_samples: usize,
    /// Relative band of the boundedness verdict.
    pub slack: f64,
    /// Mollifier radii of the commutator table; empty disables it.
    pub radii: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakConfig {
    pub enabled: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KatoConfig {
    pub strips: Vec<f64>,
    pub reference: KatoReference,
    /// Monotonicity is checked over runs with `nu` at or below this value.
    pub monotone_below: f64,
}

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub sweep: SweepConfig,
    pub domain: DomainConfig,
    pub forcing: ForcingConfig,
    pub initial: InitialConfig,
    pub diagnostics: DiagnosticsConfig,
    pub weak: WeakConfig,
    pub kato: KatoConfig,
}

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

/// Raw `section -> key -> value` map; keys are removed as they are consumed
/// so leftovers can be reported as unknown.
struct Raw {
    entries: BTreeMap<(String, String), Entry>,
}

fn parse_raw(text: &str) -> Result<Raw, ConfigError> {
    let mut entries = BTreeMap::new();
    let mut section: Option<String> = None;
    for (n, raw_line) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw_line.split(['#', ';']).next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err(line, Some(line_no), "unterminated section header"))?
                .trim();
            if !SECTIONS.contains(&name) {
                return Err(err(
                    name,
                    Some(line_no),
                    format!("unknown section; expected one of {}", SECTIONS.join(", ")),
                ));
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(line, Some(line_no), "expected `key = value`"))?;
        let key = key.trim();
        let sec = section
            .clone()
            .ok_or_else(|| err(key, Some(line_no), "key appears before any [section] header"))?;
        if key.is_empty() {
            return Err(err(&sec, Some(line_no), "empty key"));
        }
        let full = format!("{sec}.{key}");
        let entry = Entry {
            value: value.trim().to_string(),
            line: line_no,
        };
        if let Some(prev) = entries.insert((sec, key.to_string()), entry) {
            return Err(err(&full, Some(line_no), format!("duplicate key (first set on line {})", prev.line)));
        }
    }
    Ok(Raw { entries })
}

/// Parses a real number, also accepting multiples and fractions of `pi`
/// (`pi`, `2pi`, `2*pi`, `pi/2`).
pub fn parse_real(s: &str) -> Option<f64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<f64>() {
        return Some(v);
    }
    let (num, den) = match s.split_once('/') {
        Some((a, b)) => (a.trim(), Some(b.trim().parse::<f64>().ok()?)),
        None => (s, None),
    };
    let coef = num.strip_suffix("pi")?.trim_end().trim_end_matches('*').trim();
    let c = if coef.is_empty() { 1.0 } else { coef.parse::<f64>().ok()? };
    Some(c * PI / den.unwrap_or(1.0))
}

struct Section<'a> {
    raw: &'a mut Raw,
    name: &'static str,
}

impl Section<'_> {
    fn take(&mut self, key: &str) -> Option<Entry> {
        self.raw.entries.remove(&(self.name.to_string(), key.to_string()))
    }

    fn key(&self, key: &str) -> String {
        format!("{}.{key}", self.name)
    }

    fn parsed<T>(&mut self, key: &str, default: T, what: &str, f: impl Fn(&str) -> Option<T>) -> Result<T, ConfigError> {
        match self.take(key) {
            None => Ok(default),
            Some(e) => f(&e.value).ok_or_else(|| err(&self.key(key), Some(e.line), format!("expected {what}, got `{}`", e.value))),
        }
    }

    fn real(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        self.parsed(key, default, "a real number", |s| parse_real(s).filter(|v| v.is_finite()))
    }

    /// `auto` (or absent) maps to `None`.
    fn real_or_auto(&mut self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.parsed(key, None, "a real number or `auto`", |s| {
            if s == "auto" {
                Some(None)
            } else {
                parse_real(s).filter(|v| v.is_finite()).map(Some)
            }
        })
    }

    fn int<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T, ConfigError> {
        self.parsed(key, default, "a non-negative integer", |s| s.parse().ok())
    }

    fn int_or_auto(&mut self, key: &str) -> Result<Option<usize>, ConfigError> {
        self.parsed(key, None, "a non-negative integer or `auto`", |s| {
            if s == "auto" {
                Some(None)
            } else {
                s.parse().ok().map(Some)
            }
        })
    }

    fn boolean(&mut self, key: &str, default: bool) -> Result<bool, ConfigError> {
        self.parsed(key, default, "`true` or `false`", |s| match s {
            "true" | "yes" | "1" => Some(true),
            "false" | "no" | "0" => Some(false),
            _ => None,
        })
    }

    /// Comma-separated reals; `none` is the empty list.
    fn list(&mut self, key: &str, default: Vec<f64>) -> Result<Vec<f64>, ConfigError> {
        self.parsed(key, default, "a comma-separated list of real numbers or `none`", |s| {
            if s == "none" || s.is_empty() {
                return Some(Vec::new());
            }
            s.split(',').map(|p| parse_real(p).filter(|v| v.is_finite())).collect()
        })
    }

    fn choice<T: Copy>(&mut self, key: &str, default: T, options: &[(&str, T)]) -> Result<T, ConfigError> {
        let names: Vec<&str> = options.iter().map(|o| o.0).collect();
        let what = format!("one of {}", names.join(", "));
        self.parsed(key, default, &what, |s| options.iter().find(|o| o.0 == s).map(|o| o.1))
    }

    fn line_of(&self, key: &str) -> Option<usize> {
        self.raw.entries.get(&(self.name.to_string(), key.to_string())).map(|e| e.line)
    }
}

fn check(ok: bool, key: &str, message: impl Into<String>) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(err(key, None, message))
    }
}

impl Config {
    /// Parses and validates configuration text.
    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let mut raw = parse_raw(text)?;

        let mut s = Section { raw: &mut raw, name: "sweep" };
        let geometry = s.choice("geometry", Geometry::Torus, &[("torus", Geometry::Torus), ("channel", Geometry::Channel)])?;
        let visc_line = s.line_of("viscosities");
        let viscosities = s.list("viscosities", Vec::new())?;
        let sweep = SweepConfig {
            geometry,
            viscosities,
            euler: s.boolean("euler", false)?,
            t_end: s.real("t_end", 1.0)?,
            cadence: s.real("cadence", 0.01)?,
            dt: s.real_or_auto("dt")?,
            cfl: s.real("cfl", 0.5)?,
            dt_max: s.real("dt_max", 1e-2)?,
            seed: s.int("seed", 0u64)?,
            n_min: s.int("n_min", 64usize)?,
            c_res: s.real("c_res", 2.0)?,
            eps_guess: s.real("eps_guess", 1.0)?,
            memory_mb: s.int("memory_mb", 4096u64)?,
        };
        let channel = geometry == Geometry::Channel;

        let mut s = Section { raw: &mut raw, name: "domain" };
        let domain = DomainConfig {
            lx: s.real("lx", 2.0 * PI)?,
            ly: s.real("ly", if channel { PI } else { 2.0 * PI })?,
            n: s.int_or_auto("n")?,
            nx: s.int("nx", 16usize)?,
            ny: s.int("ny", 128usize)?,
        };

        let mut s = Section { raw: &mut raw, name: "forcing" };
        let forcing = ForcingConfig {
            kind: s.choice(
                "kind",
                ForcingKindConfig::Kolmogorov,
                &[("none", ForcingKindConfig::None), ("kolmogorov", ForcingKindConfig::Kolmogorov)],
            )?,
            k: s.int("k", if channel { 2u32 } else { 1u32 })?,
            amplitude: s.real("amplitude", 1.0)?,
        };

        let mut s = Section { raw: &mut raw, name: "initial" };
        let initial = InitialConfig {
            kind: s.choice(
                "kind",
                InitialKind::Kolmogorov,
                &[
                    ("zero", InitialKind::Zero),
                    ("kolmogorov", InitialKind::Kolmogorov),
                    ("perturbed", InitialKind::Perturbed),
                    ("random", InitialKind::Random),
                ],
            )?,
            y0: s.real("y0", 0.0)?,
            perturbation: s.real("perturbation", 0.2)?,
            amplitude: s.real("amplitude", 1.0)?,
            kmax: s.int("kmax", 4usize)?,
        };

        let mut s = Section { raw: &mut raw, name: "diagnostics" };
        let diagnostics = DiagnosticsConfig {
            regions: s.list("regions", vec![0.5, 0.75])?,
            shells: s.int("shells", 8usize)?,
            shell_min: s.real_or_auto("shell_min")?,
            shell_max: s.real_or_auto("shell_max")?,
            fit_min: s.real_or_auto("fit_min")?,
            fit_max: s.real_or_auto("fit_max")?,
            directions: s.int("directions", 8usize)?,
            structure_samples: s.int("structure_samples", 21usize)?,
            slack: s.real("slack", 0.1)?,
            radii: s.list("radii", vec![0.25, 0.5])?,
        };

        let mut s = Section { raw: &mut raw, name: "weak" };
        let weak = WeakConfig {
            enabled: s.boolean("enabled", true)?,
        };

        let mut s = Section { raw: &mut raw, name: "kato" };
        let kato = KatoConfig {
            strips: s.list("strips", vec![1.0, 4.0, 16.0])?,
            reference: s.choice(
                "reference",
                KatoReference::Exact,
                &[("none", KatoReference::None), ("exact", KatoReference::Exact)],
            )?,
            monotone_below: s.real("monotone_below", 1e-2)?,
        };

        if let Some(((sec, key), e)) = raw.entries.into_iter().next() {
            return Err(err(&format!("{sec}.{key}"), Some(e.line), "unknown key"));
        }
        let config = Config {
            sweep,
            domain,
            forcing,
            initial,
            diagnostics,
            weak,
            kato,
        };
        config.validate().map_err(|mut e| {
            if e.key == "sweep.viscosities" {
                e.line = e.line.or(visc_line);
            }
            e
        })?;
        Ok(config)
    }

    /// Checks every cross-key constraint.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.sweep;
        let v = &s.viscosities;
        check(!v.is_empty(), "sweep.viscosities", "at least one viscosity is required")?;
        for (i, nu) in v.iter().enumerate() {
            check(*nu > 0.0, "sweep.viscosities", format!("viscosity #{} = {nu} must be positive", i + 1))?;
        }
        for (i, w) in v.windows(2).enumerate() {
            check(
                w[1] < w[0],
                "sweep.viscosities",
                format!(
                    "viscosities must be strictly decreasing; #{} = {} does not follow #{} = {} (duplicate or increasing)",
                    i + 2,
                    w[1],
                    i + 1,
                    w[0]
                ),
            )?;
        }
        check(s.t_end > 0.0, "sweep.t_end", "must be positive")?;
        check(s.cadence > 0.0 && s.cadence <= s.t_end, "sweep.cadence", "must lie in (0, t_end]")?;
        let marks = s.t_end / s.cadence;
        check(
            (marks - marks.round()).abs() <= 1e-9 * marks.max(1.0),
            "sweep.cadence",
            format!("t_end = {} must be a whole multiple of the cadence", s.t_end),
        )?;
        if let Some(dt) = s.dt {
            check(dt > 0.0 && dt <= s.cadence, "sweep.dt", "must lie in (0, cadence] or be `auto`")?;
        }
        check(s.cfl > 0.0 && s.cfl <= 1.0, "sweep.cfl", "must lie in (0, 1]")?;
        check(s.dt_max > 0.0, "sweep.dt_max", "must be positive")?;
        check(s.n_min >= 8 && s.n_min.is_power_of_two(), "sweep.n_min", "must be a power of two >= 8")?;
        check(s.c_res > 0.0, "sweep.c_res", "must be positive")?;
        check(s.eps_guess > 0.0, "sweep.eps_guess", "must be positive")?;
        check(s.memory_mb > 0, "sweep.memory_mb", "must be positive")?;

        let d = &self.domain;
        check(d.lx > 0.0, "domain.lx", "must be positive")?;
        check(d.ly > 0.0, "domain.ly", "must be positive")?;
        let channel = s.geometry == Geometry::Channel;
        if channel {
            check(d.n.is_none(), "domain.n", "applies to the torus only; use domain.nx and domain.ny")?;
            check(d.nx >= 4 && d.nx.is_multiple_of(2), "domain.nx", "must be even and >= 4")?;
            check(d.ny >= 4 && d.ny.is_multiple_of(2), "domain.ny", "must be even and >= 4")?;
        } else if let Some(n) = d.n {
            check(n >= 8 && n % 2 == 0, "domain.n", "must be even and >= 8")?;
        }

        let f = &self.forcing;
        check(f.amplitude.is_finite(), "forcing.amplitude", "must be finite")?;
        if f.kind == ForcingKindConfig::Kolmogorov || matches!(self.initial.kind, InitialKind::Kolmogorov | InitialKind::Perturbed) {
            check(f.k >= 1, "forcing.k", "must be >= 1")?;
            if channel {
                check(f.k.is_multiple_of(2), "forcing.k", "channel Kolmogorov profiles need an even wavenumber")?;
            } else {
                let periods = f.k as f64 * d.ly / (2.0 * PI);
                check(
                    (periods - periods.round()).abs() <= 1e-9 && periods.round() >= 1.0,
                    "forcing.k",
                    format!("sin(k y) must be periodic on ly = {}", d.ly),
                )?;
            }
        }

        let i = &self.initial;
        if channel {
            check(
                matches!(i.kind, InitialKind::Zero | InitialKind::Kolmogorov),
                "initial.kind",
                "the channel supports `zero` and `kolmogorov` only",
            )?;
        }
        check(i.y0.is_finite(), "initial.y0", "must be finite")?;
        check(i.perturbation.is_finite(), "initial.perturbation", "must be finite")?;
        if i.kind == InitialKind::Random {
            check(i.kmax >= 1, "initial.kmax", "must be >= 1")?;
        }

        let g = &self.diagnostics;
        for r in &g.regions {
            let ok = if channel { *r > 0.0 && *r < 1.0 } else { *r > 0.0 && *r <= 1.0 };
            check(ok, "diagnostics.regions", format!("region fraction {r} must lie in (0, 1]"))?;
        }
        check(!g.regions.is_empty() || channel, "diagnostics.regions", "at least one region is required")?;
        check(g.shells >= 3, "diagnostics.shells", "at least three shells are needed for a fit")?;
        check(g.directions >= 1, "diagnostics.directions", "must be >= 1")?;
        check(g.structure_samples >= 2, "diagnostics.structure_samples", "must be >= 2")?;
        check(g.slack > 0.0, "diagnostics.slack", "must be positive")?;
        let half = d.lx.min(d.ly) / 2.0;
        for (key, val) in [("shell_min", g.shell_min), ("shell_max", g.shell_max), ("fit_min", g.fit_min), ("fit_max", g.fit_max)] {
            if let Some(v) = val {
                check(v > 0.0 && v <= half, &format!("diagnostics.{key}"), format!("must lie in (0, {half}]"))?;
            }
        }
        if let (Some(a), Some(b)) = (g.shell_min, g.shell_max) {
            check(a < b, "diagnostics.shell_max", "must exceed shell_min")?;
        }
        if let (Some(a), Some(b)) = (g.fit_min, g.fit_max) {
            check(a < b, "diagnostics.fit_max", "must exceed fit_min")?;
        }
        for r in &g.radii {
            check(
                *r > 0.0 && 2.0 * r < half,
                "diagnostics.radii",
                format!("mollifier radius {r} must satisfy 0 < 2r < min(lx, ly)/2 = {half}"),
            )?;
        }

        let k = &self.kato;
        for c in &k.strips {
            check(*c > 0.0, "kato.strips", format!("strip constant {c} must be positive"))?;
        }
        check(k.monotone_below > 0.0, "kato.monotone_below", "must be positive")?;
        Ok(())
    }

    /// Every key with its resolved value, as `section.key = value`, in
    /// section order.
    pub fn canonical_lines(&self) -> Vec<String> {
        fn list(v: &[f64]) -> String {
            if v.is_empty() {
                "none".into()
            } else {
                v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
            }
        }
        fn auto<T: ToString>(v: Option<T>) -> String {
            v.map_or_else(|| "auto".into(), |x| x.to_string())
        }
        let s = &self.sweep;
        let d = &self.domain;
        let f = &self.forcing;
        let i = &self.initial;
        let g = &self.diagnostics;
        let k = &self.kato;
        let geometry = match s.geometry {
            Geometry::Torus => "torus",
            Geometry::Channel => "channel",
        };
        let fkind = match f.kind {
            ForcingKindConfig::None => "none",
            ForcingKindConfig::Kolmogorov => "kolmogorov",
        };
        let ikind = match i.kind {
            InitialKind::Zero => "zero",
            InitialKind::Kolmogorov => "kolmogorov",
            InitialKind::Perturbed => "perturbed",
            InitialKind::Random => "random",
        };
        let reference = match k.reference {
            KatoReference::None => "none",
            KatoReference::Exact => "exact",
        };
        vec![
            format!("sweep.geometry = {geometry}"),
            format!("sweep.viscosities = {}", list(&s.viscosities)),
            format!("sweep.euler = {}", s.euler),
            format!("sweep.t_end = {}", s.t_end),
            format!("sweep.cadence = {}", s.cadence),
            format!("sweep.dt = {}", auto(s.dt)),
            format!("sweep.cfl = {}", s.cfl),
            format!("sweep.dt_max = {}", s.dt_max),
            format!("sweep.seed = {}", s.seed),
            format!("sweep.n_min = {}", s.n_min),
            format!("sweep.c_res = {}", s.c_res),
            format!("sweep.eps_guess = {}", s.eps_guess),
            format!("sweep.memory_mb = {}", s.memory_mb),
            format!("domain.lx = {}", d.lx),
            format!("domain.ly = {}", d.ly),
            format!("domain.n = {}", auto(d.n)),
            format!("domain.nx = {}", d.nx),
            format!("domain.ny = {}", d.ny),
            format!("forcing.kind = {fkind}"),
            format!("forcing.k = {}", f.k),
            format!("forcing.amplitude = {}", f.amplitude),
            format!("initial.kind = {ikind}"),
            format!("initial.y0 = {}", i.y0),
            format!("initial.perturbation = {}", i.perturbation),
            format!("initial.amplitude = {}", i.amplitude),
            format!("initial.kmax = {}", i.kmax),
            format!("diagnostics.regions = {}", list(&g.regions)),
            format!("diagnostics.shells = {}", g.shells),
            format!("diagnostics.shell_min = {}", auto(g.shell_min)),
            format!("diagnostics.shell_max = {}", auto(g.shell_max)),
            format!("diagnostics.fit_min = {}", auto(g.fit_min)),
            format!("diagnostics.fit_max = {}", auto(g.fit_max)),
            format!("diagnostics.directions = {}", g.directions),
            format!("diagnostics.structure_samples = {}", g.structure_samples),
            format!("diagnostics.slack = {}", g.slack),
            format!("diagnostics.radii = {}", list(&g.radii)),
            format!("weak.enabled = {}", self.weak.enabled),
            format!("kato.strips = {}", list(&k.strips)),
            format!("kato.reference = {reference}"),
            format!("kato.monotone_below = {}", k.monotone_below),
        ]
    }

    /// Hex SHA-256 of the sorted canonical lines: independent of key order,
    /// comments, spelling of numbers and keys left at their defaults.
    pub fn hash(&self) -> String {
        let mut lines = self.canonical_lines();
        lines.sort();
        let mut h = Sha256::new();
        for l in &lines {
            h.update(l.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    /// Resolved configuration as a file that parses back to `self`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut current = String::new();
        for line in self.canonical_lines() {
            let (full, value) = line.split_once(" = ").expect("canonical line");
            let (sec, key) = full.split_once('.').expect("section-qualified key");
            if sec != current {
                if !out.is_empty() {
                    out.push('\n');
                }
                out.push_str(&format!("[{sec}]\n"));
                current = sec.to_string();
            }
            out.push_str(&format!("{key} = {value}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = "[sweep]\nviscosities = 1e-2, 1e-3\n";

    #[test]
    fn defaults_fill_unset_keys() {
        let c = Config::parse(BASIC).unwrap();
        assert_eq!(c.sweep.viscosities, vec![1e-2, 1e-3]);
        assert_eq!(c.sweep.n_min, 64);
        assert_eq!(c.sweep.c_res, 2.0);
        assert_eq!(c.domain.lx, 2.0 * PI);
        assert_eq!(c.diagnostics.regions, vec![0.5, 0.75]);
        assert_eq!(c.sweep.dt, None);
    }

    #[test]
    fn pi_expressions() {
        assert_eq!(parse_real("pi"), Some(PI));
        assert_eq!(parse_real("2pi"), Some(2.0 * PI));
        assert_eq!(parse_real("2 * pi"), Some(2.0 * PI));
        assert_eq!(parse_real("pi/2"), Some(PI / 2.0));
        assert_eq!(parse_real("1e-3"), Some(1e-3));
        assert_eq!(parse_real("pie"), None);
    }

    #[test]
    fn unknown_key_is_named() {
        let e = Config::parse("[sweep]\nviscosities = 1e-2\nviscosity = 3\n").unwrap_err();
        assert_eq!(e.key, "sweep.viscosity");
        assert_eq!(e.line, Some(3));
        assert!(e.to_string().contains("unknown key"));
        let e = Config::parse("[sweeps]\n").unwrap_err();
        assert!(e.to_string().contains("unknown section"));
    }

    #[test]
    fn empty_viscosity_list_is_rejected() {
        let e = Config::parse("[sweep]\nt_end = 1\n").unwrap_err();
        assert_eq!(e.key, "sweep.viscosities");
        let e = Config::parse("[sweep]\nviscosities = none\n").unwrap_err();
        assert_eq!(e.key, "sweep.viscosities");
    }

    #[test]
    fn duplicate_viscosity_names_monotonicity() {
        let e = Config::parse("[sweep]\nviscosities = 1e-2, 1e-2\n").unwrap_err();
        assert_eq!(e.key, "sweep.viscosities");
        assert!(e.message.contains("strictly decreasing"), "{e}");
        assert_eq!(e.line, Some(2));
        let e = Config::parse("[sweep]\nviscosities = 1e-3, 1e-2\n").unwrap_err();
        assert!(e.message.contains("strictly decreasing"));
    }

    #[test]
    fn malformed_values_name_the_key() {
        let e = Config::parse("[sweep]\nviscosities = 1e-2\nt_end = soon\n").unwrap_err();
        assert_eq!(e.key, "sweep.t_end");
        assert!(e.message.contains("real number"));
        let e = Config::parse("[sweep]\nviscosities = 1e-2\ngeometry = sphere\n").unwrap_err();
        assert!(e.message.contains("torus, channel"));
        let e = Config::parse("[sweep]\nviscosities = 1e-2\nviscosities = 1e-3\n").unwrap_err();
        assert!(e.message.contains("duplicate key"));
        assert!(Config::parse("viscosities = 1\n").is_err());
    }

    #[test]
    fn channel_rejects_odd_wavenumber() {
        let e = Config::parse("[sweep]\ngeometry = channel\nviscosities = 1e-2\n[forcing]\nk = 1\n").unwrap_err();
        assert_eq!(e.key, "forcing.k");
        assert!(Config::parse("[sweep]\ngeometry = channel\nviscosities = 1e-2\n").is_ok());
    }

    #[test]
    fn cadence_must_divide_the_span() {
        let e = Config::parse("[sweep]\nviscosities = 1e-2\nt_end = 1\ncadence = 0.3\n").unwrap_err();
        assert_eq!(e.key, "sweep.cadence");
    }

    #[test]
    fn hash_ignores_order_comments_and_spelling() {
        let a = Config::parse("[sweep]\nviscosities = 1e-2, 1e-3\nt_end = 1\n[domain]\nn = 64\n").unwrap();
        let b = Config::parse("# reordered\n[domain]\nn = 64 ; fixed\n[sweep]\nt_end = 1.0\nviscosities = 0.01,0.001\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = Config::parse("[sweep]\nviscosities = 1e-2, 1e-3\nt_end = 2\n[domain]\nn = 64\n").unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn resolved_text_round_trips() {
        let a = Config::parse("[sweep]\nviscosities = 1e-2, 3e-3\ndt = 1e-3\n[diagnostics]\nradii = none\n").unwrap();
        let b = Config::parse(&a.to_text()).unwrap();
        assert_eq!(a, b);
    }
}
