//! Experiment configuration: a strict INI dialect.
//!
//! ```text
//! experiment = reconstruct
//! seed = 7
//!
//! [domain]
//! dim = 2
//! base = interval
//! lo = 0
//! hi = 1
//! bottom = 0
//! top = 1
//!
//! [data]
//! oracle = re_z2
//!
//! [params]
//! schedule = 1,2,4,8,16
//!
//! [run]
//! points = 0.5,0.5; 0.4,0.7
//! ```
//!
//! Blank lines and lines starting with `#` or `;` are ignored. Unknown
//! sections, unknown keys and repeated keys are errors. Lists are comma
//! separated; lists of points are separated by `;`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use laplace_cauchy::carleman::{CarlemanParams, Precision};
use laplace_cauchy::geometry::{BaseShape, CylinderDomain, Profile, TriangleGeometry};
use laplace_cauchy::oracles::library_solution;
use laplace_cauchy::quadrature::QuadratureSpec;
use laplace_cauchy::reconstruct::Path;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub struct ConfigError {
    /// 1-based line of the offending entry, when there is one.
    pub line: Option<usize>,
    /// `section.key`, or the section name for section-level problems.
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    TraceCheck,
    Carleman1d,
    Reconstruct,
    Convergence,
    NoiseSweep,
    Field,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::TraceCheck,
        Experiment::Carleman1d,
        Experiment::Reconstruct,
        Experiment::Convergence,
        Experiment::NoiseSweep,
        Experiment::Field,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::TraceCheck => "trace-check",
            Experiment::Carleman1d => "carleman-1d",
            Experiment::Reconstruct => "reconstruct",
            Experiment::Convergence => "convergence",
            Experiment::NoiseSweep => "noise-sweep",
            Experiment::Field => "field",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Experiment::ALL.iter().map(Experiment::name).collect();
                format!("unknown experiment {s:?}, expected one of {}", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BaseConfig {
    Interval { a: f64, b: f64 },
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

/// `offset + slope . x'`; a missing slope is a constant profile.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileConfig {
    pub offset: f64,
    pub slope: Option<Vec<f64>>,
}

impl ProfileConfig {
    fn build(&self) -> Profile {
        match &self.slope {
            None => Profile::Constant(self.offset),
            Some(s) => Profile::Affine { offset: self.offset, slope: s.clone() },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainConfig {
    pub dim: usize,
    pub base: BaseConfig,
    pub bottom: ProfileConfig,
    pub top: ProfileConfig,
}

impl DomainConfig {
    pub fn build(&self) -> laplace_cauchy::Result<CylinderDomain> {
        let base = match &self.base {
            BaseConfig::Interval { a, b } => BaseShape::Interval { a: *a, b: *b },
            BaseConfig::Ball { center, radius } => BaseShape::Ball { center: center.clone(), radius: *radius },
            BaseConfig::Box { lo, hi } => BaseShape::Box { lo: lo.clone(), hi: hi.clone() },
        };
        CylinderDomain::new(self.dim, base, self.bottom.build(), self.top.build())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Oracle(String),
    /// Relative paths are taken from the directory of the config file.
    Csv(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub source: DataSource,
    /// Uniform noise level added to sampled `u0` and `u1`.
    pub noise: f64,
    /// Samples per axis of the noisy data grid.
    pub noise_points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamsConfig {
    pub schedule: Vec<u32>,
    pub stop_threshold: f64,
    pub stop_window: usize,
    pub nodes_1d: usize,
    pub sphere_rule: (usize, usize),
    pub singular_substitution: bool,
    pub precision: Precision,
    pub accuracy: f64,
    pub max_bits: u32,
    pub path: Path,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        let p = CarlemanParams::default();
        ParamsConfig {
            schedule: p.schedule,
            stop_threshold: p.stop_threshold,
            stop_window: p.stop_window,
            nodes_1d: p.quad.nodes_1d,
            sphere_rule: p.quad.sphere_rule,
            singular_substitution: p.quad.singular_substitution,
            precision: p.precision,
            accuracy: p.accuracy,
            max_bits: p.max_bits,
            path: Path::Compositional,
        }
    }
}

impl ParamsConfig {
    pub fn carleman(&self) -> CarlemanParams {
        CarlemanParams {
            schedule: self.schedule.clone(),
            stop_threshold: self.stop_threshold,
            stop_window: self.stop_window,
            quad: QuadratureSpec {
                nodes_1d: self.nodes_1d,
                sphere_rule: self.sphere_rule,
                singular_substitution: self.singular_substitution,
            },
            precision: self.precision,
            accuracy: self.accuracy,
            max_bits: self.max_bits,
        }
    }
}

/// Holomorphic test functions for the one-dimensional continuation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeFunction {
    Exp,
    One,
    Z2,
}

impl EdgeFunction {
    const ALL: [EdgeFunction; 3] = [EdgeFunction::Exp, EdgeFunction::One, EdgeFunction::Z2];

    pub fn name(&self) -> &'static str {
        match self {
            EdgeFunction::Exp => "exp",
            EdgeFunction::One => "one",
            EdgeFunction::Z2 => "z2",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Interior points `x` (reconstruct, convergence, noise-sweep).
    pub points: Vec<Vec<f64>>,
    /// Base point `x'` (trace-check).
    pub trace_point: Vec<f64>,
    pub grid_size: usize,
    /// Pass mark on the oracle error (trace-check, convergence).
    pub threshold: Option<f64>,
    /// One axis per coordinate (field).
    pub axes: Vec<Vec<f64>>,
    /// Noise levels (noise-sweep).
    pub deltas: Vec<f64>,
    pub function: EdgeFunction,
    /// `(zeta0, top, epsilon)` (carleman-1d).
    pub triangle: (f64, f64, f64),
    /// Height at which the continuation is evaluated (carleman-1d).
    pub target: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            points: vec![],
            trace_point: vec![],
            grid_size: 33,
            threshold: None,
            axes: vec![],
            deltas: vec![],
            function: EdgeFunction::Exp,
            triangle: (0.0, 1.0, 0.5),
            target: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: None, formats: vec![Format::Csv, Format::Json] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub domain: Option<DomainConfig>,
    pub data: Option<DataConfig>,
    pub params: ParamsConfig,
    pub run: RunConfig,
    pub output: OutputConfig,
}

const KEYS: &[(&str, &[&str])] = &[
    ("", &["experiment", "seed"]),
    ("domain", &["dim", "base", "lo", "hi", "center", "radius", "bottom", "bottom_slope", "top", "top_slope"]),
    ("data", &["oracle", "csv", "noise", "noise_points"]),
    (
        "params",
        &[
            "schedule",
            "stop_threshold",
            "stop_window",
            "nodes_1d",
            "sphere_rule",
            "singular_substitution",
            "precision",
            "accuracy",
            "max_bits",
            "path",
        ],
    ),
    ("run", &["points", "trace_point", "grid_size", "threshold", "axes", "deltas", "function", "triangle", "target"]),
    ("output", &["dir", "formats"]),
];

/// Entries of one section with the lines they came from.
#[derive(Default)]
struct Section {
    line: usize,
    entries: BTreeMap<String, (String, usize)>,
}

struct Raw {
    sections: BTreeMap<String, Section>,
}

fn err(line: Option<usize>, field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError { line, field: field.into(), message: message.into() }
}

fn field_name(section: &str, key: &str) -> String {
    if section.is_empty() {
        key.to_string()
    } else {
        format!("{section}.{key}")
    }
}

fn tokenize(text: &str) -> Result<Raw, ConfigError> {
    let mut sections = BTreeMap::new();
    sections.insert(String::new(), Section::default());
    let mut current = String::new();
    for (i, raw_line) in text.lines().enumerate() {
        let line = i + 1;
        let s = raw_line.trim();
        if s.is_empty() || s.starts_with('#') || s.starts_with(';') {
            continue;
        }
        if let Some(rest) = s.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err(Some(line), s, "section header is missing `]`"))?
                .trim();
            if !KEYS.iter().any(|(sec, _)| !sec.is_empty() && *sec == name) {
                return Err(err(Some(line), name, "unknown section"));
            }
            if sections.contains_key(name) {
                return Err(err(Some(line), name, "section appears twice"));
            }
            sections.insert(name.to_string(), Section { line, entries: BTreeMap::new() });
            current = name.to_string();
            continue;
        }
        let (key, value) = s.split_once('=').ok_or_else(|| err(Some(line), s, "expected `key = value`"))?;
        let (key, value) = (key.trim(), value.trim());
        let field = field_name(&current, key);
        let allowed = KEYS.iter().find(|(sec, _)| *sec == current).map(|(_, k)| *k).unwrap_or(&[]);
        if !allowed.contains(&key) {
            return Err(err(Some(line), field, "unknown key"));
        }
        let sec = sections.get_mut(&current).expect("section registered on its header");
        if sec.entries.insert(key.to_string(), (value.to_string(), line)).is_some() {
            return Err(err(Some(line), field, "key appears twice"));
        }
    }
    Ok(Raw { sections })
}

/// Typed access to one section; records the line of each key read.
struct Reader<'a> {
    name: &'a str,
    section: Option<&'a Section>,
}

impl<'a> Reader<'a> {
    fn raw(&self, key: &str) -> Option<(&'a str, usize)> {
        self.section.and_then(|s| s.entries.get(key)).map(|(v, l)| (v.as_str(), *l))
    }

    fn has(&self, key: &str) -> bool {
        self.raw(key).is_some()
    }

    fn line(&self, key: &str) -> Option<usize> {
        self.raw(key).map(|(_, l)| l)
    }

    fn field(&self, key: &str) -> String {
        field_name(self.name, key)
    }

    fn get<T>(&self, key: &str, parse: impl Fn(&str) -> Result<T, String>) -> Result<Option<T>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some((v, line)) => parse(v).map(Some).map_err(|m| err(Some(line), self.field(key), m)),
        }
    }

    fn require<T>(&self, key: &str, parse: impl Fn(&str) -> Result<T, String>) -> Result<T, ConfigError> {
        let line = self.section.map(|s| s.line).filter(|l| *l > 0);
        self.get(key, parse)?.ok_or_else(|| err(line, self.field(key), "missing required key"))
    }
}

fn parse_num<T: FromStr>(s: &str) -> Result<T, String> {
    s.parse::<T>().map_err(|_| format!("cannot parse {s:?} as a number"))
}

fn parse_f64(s: &str) -> Result<f64, String> {
    let v: f64 = parse_num(s)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{s:?} is not finite"))
    }
}

fn parse_list<T>(s: &str, item: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    if s.trim().is_empty() {
        return Ok(vec![]);
    }
    s.split(',').map(|p| item(p.trim())).collect()
}

fn parse_f64_list(s: &str) -> Result<Vec<f64>, String> {
    parse_list(s, parse_f64)
}

fn parse_points(s: &str) -> Result<Vec<Vec<f64>>, String> {
    if s.trim().is_empty() {
        return Ok(vec![]);
    }
    s.split(';')
        .map(|p| {
            let v = parse_f64_list(p)?;
            if v.is_empty() {
                Err("empty entry in list of points".to_string())
            } else {
                Ok(v)
            }
        })
        .collect()
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got {s:?}")),
    }
}

fn parse_precision(s: &str) -> Result<Precision, String> {
    match s {
        "auto" => Ok(Precision::Auto),
        "double" => Ok(Precision::Double),
        _ => parse_num::<u32>(s)
            .map(Precision::Bits)
            .map_err(|_| format!("expected auto, double or a number of bits, got {s:?}")),
    }
}

fn parse_format(s: &str) -> Result<Format, String> {
    match s {
        "csv" => Ok(Format::Csv),
        "json" => Ok(Format::Json),
        _ => Err(format!("unknown output format {s:?}")),
    }
}

fn parse_function(s: &str) -> Result<EdgeFunction, String> {
    EdgeFunction::ALL.into_iter().find(|f| f.name() == s).ok_or_else(|| format!("unknown function {s:?}"))
}

fn scalar_or_list(v: &[f64], field: &str, line: Option<usize>) -> Result<f64, ConfigError> {
    match v {
        [x] => Ok(*x),
        _ => Err(err(line, field, "an interval takes a single value")),
    }
}

fn read_domain(r: &Reader<'_>) -> Result<DomainConfig, ConfigError> {
    let dim = r.require("dim", parse_num::<usize>)?;
    let kind = r.require("base", |s| Ok(s.to_string()))?;
    let base = match kind.as_str() {
        "interval" | "box" => {
            let lo = r.require("lo", parse_f64_list)?;
            let hi = r.require("hi", parse_f64_list)?;
            for key in ["center", "radius"] {
                if r.has(key) {
                    return Err(err(r.line(key), r.field(key), format!("not used by a {kind} base")));
                }
            }
            if kind == "interval" {
                BaseConfig::Interval {
                    a: scalar_or_list(&lo, &r.field("lo"), r.line("lo"))?,
                    b: scalar_or_list(&hi, &r.field("hi"), r.line("hi"))?,
                }
            } else {
                BaseConfig::Box { lo, hi }
            }
        }
        "ball" => {
            for key in ["lo", "hi"] {
                if r.has(key) {
                    return Err(err(r.line(key), r.field(key), "not used by a ball base"));
                }
            }
            BaseConfig::Ball { center: r.require("center", parse_f64_list)?, radius: r.require("radius", parse_f64)? }
        }
        other => {
            return Err(err(r.line("base"), r.field("base"), format!("expected interval, box or ball, got {other:?}")))
        }
    };
    Ok(DomainConfig {
        dim,
        base,
        bottom: ProfileConfig { offset: r.require("bottom", parse_f64)?, slope: r.get("bottom_slope", parse_f64_list)? },
        top: ProfileConfig { offset: r.require("top", parse_f64)?, slope: r.get("top_slope", parse_f64_list)? },
    })
}

fn read_data(r: &Reader<'_>) -> Result<DataConfig, ConfigError> {
    let source = match (r.get("oracle", |s| Ok(s.to_string()))?, r.get("csv", |s| Ok(PathBuf::from(s)))?) {
        (Some(name), None) => DataSource::Oracle(name),
        (None, Some(path)) => DataSource::Csv(path),
        (Some(_), Some(_)) => return Err(err(r.line("csv"), r.field("csv"), "give either oracle or csv, not both")),
        (None, None) => return Err(err(r.section.map(|s| s.line), "data", "needs an oracle or a csv key")),
    };
    Ok(DataConfig {
        source,
        noise: r.get("noise", parse_f64)?.unwrap_or(0.0),
        noise_points: r.get("noise_points", parse_num::<usize>)?.unwrap_or(65),
    })
}

fn read_params(r: &Reader<'_>) -> Result<ParamsConfig, ConfigError> {
    let d = ParamsConfig::default();
    Ok(ParamsConfig {
        schedule: r.get("schedule", |s| parse_list(s, parse_num::<u32>))?.unwrap_or(d.schedule),
        stop_threshold: r.get("stop_threshold", parse_f64)?.unwrap_or(d.stop_threshold),
        stop_window: r.get("stop_window", parse_num::<usize>)?.unwrap_or(d.stop_window),
        nodes_1d: r.get("nodes_1d", parse_num::<usize>)?.unwrap_or(d.nodes_1d),
        sphere_rule: r
            .get("sphere_rule", |s| match parse_list(s, parse_num::<usize>)?.as_slice() {
                [a, b] => Ok((*a, *b)),
                _ => Err("expected two sizes, polar then azimuthal".to_string()),
            })?
            .unwrap_or(d.sphere_rule),
        singular_substitution: r.get("singular_substitution", parse_bool)?.unwrap_or(d.singular_substitution),
        precision: r.get("precision", parse_precision)?.unwrap_or(d.precision),
        accuracy: r.get("accuracy", parse_f64)?.unwrap_or(d.accuracy),
        max_bits: r.get("max_bits", parse_num::<u32>)?.unwrap_or(d.max_bits),
        path: r.get("path", |s| Path::from_str(s).map_err(|e| e.to_string()))?.unwrap_or(d.path),
    })
}

fn read_run(r: &Reader<'_>) -> Result<RunConfig, ConfigError> {
    let d = RunConfig::default();
    Ok(RunConfig {
        points: r.get("points", parse_points)?.unwrap_or(d.points),
        trace_point: r.get("trace_point", parse_f64_list)?.unwrap_or(d.trace_point),
        grid_size: r.get("grid_size", parse_num::<usize>)?.unwrap_or(d.grid_size),
        threshold: r.get("threshold", parse_f64)?,
        axes: r.get("axes", parse_points)?.unwrap_or(d.axes),
        deltas: r.get("deltas", parse_f64_list)?.unwrap_or(d.deltas),
        function: r.get("function", parse_function)?.unwrap_or(d.function),
        triangle: r
            .get("triangle", |s| match parse_f64_list(s)?.as_slice() {
                [a, b, c] => Ok((*a, *b, *c)),
                _ => Err("expected zeta0, top, epsilon".to_string()),
            })?
            .unwrap_or(d.triangle),
        target: r.get("target", parse_f64)?.unwrap_or(d.target),
    })
}

/// Parses without the cross-field checks of [`validate`].
pub fn parse_unchecked(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let raw = tokenize(text)?;
    let reader = |name: &'static str| Reader { name, section: raw.sections.get(name) };
    let top = reader("");
    let experiment = top.require("experiment", |s| s.parse::<Experiment>())?;
    let seed = top.get("seed", parse_num::<u64>)?.unwrap_or(0);
    let domain = raw.sections.contains_key("domain").then(|| read_domain(&reader("domain"))).transpose()?;
    let data = raw.sections.contains_key("data").then(|| read_data(&reader("data"))).transpose()?;
    let out = reader("output");
    let output = OutputConfig {
        dir: out.get("dir", |s| Ok(PathBuf::from(s)))?,
        formats: out.get("formats", |s| parse_list(s, parse_format))?.unwrap_or(OutputConfig::default().formats),
    };
    Ok(ExperimentConfig {
        experiment,
        seed,
        domain,
        data,
        params: read_params(&reader("params"))?,
        run: read_run(&reader("run"))?,
        output,
    })
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    parse_config_with(text, |_| {})
}

/// Like [`parse_config`], applying `overrides` before validation.
pub fn parse_config_with(
    text: &str,
    overrides: impl FnOnce(&mut ExperimentConfig),
) -> Result<ExperimentConfig, ConfigError> {
    let raw = tokenize(text)?;
    let mut cfg = parse_unchecked(text)?;
    overrides(&mut cfg);
    // Validation errors point back at the lines the values came from.
    cfg.validate_with(|section, key| raw.sections.get(section).and_then(|s| s.entries.get(key)).map(|e| e.1))
}

impl ExperimentConfig {
    /// Cross-field checks, without line information.
    pub fn validate(self) -> Result<ExperimentConfig, ConfigError> {
        self.validate_with(|_, _| None)
    }

    fn validate_with(self, line: impl Fn(&str, &str) -> Option<usize>) -> Result<ExperimentConfig, ConfigError> {
        let fail = |section: &str, key: &str, msg: String| err(line(section, key), field_name(section, key), msg);
        let p = &self.params;
        if p.schedule.is_empty() {
            return Err(fail("params", "schedule", "schedule is empty".into()));
        }
        if p.schedule[0] < 1 || p.schedule.windows(2).any(|w| w[0] >= w[1]) {
            return Err(fail("params", "schedule", format!("must be strictly ascending from N >= 1, got {:?}", p.schedule)));
        }
        p.carleman().validate().map_err(|e| err(None, "params", e.to_string()))?;
        if self.output.formats.is_empty() {
            return Err(fail("output", "formats", "no output format".into()));
        }
        let r = &self.run;
        if self.experiment == Experiment::Carleman1d {
            let (z0, top, eps) = r.triangle;
            let tri = TriangleGeometry::new(z0, top, eps).map_err(|e| fail("run", "triangle", e.to_string()))?;
            tri.check_height(r.target).map_err(|e| fail("run", "target", e.to_string()))?;
            return Ok(self);
        }
        let domain_cfg = self.domain.as_ref().ok_or_else(|| err(None, "domain", "section is required"))?;
        let domain = domain_cfg.build().map_err(|e| fail("domain", "base", e.to_string()))?;
        let dim = domain.dim();
        let data = self.data.as_ref().ok_or_else(|| err(None, "data", "section is required"))?;
        match &data.source {
            DataSource::Oracle(name) => {
                library_solution(name, dim).map_err(|e| fail("data", "oracle", e.to_string()))?;
            }
            DataSource::Csv(_) => {
                if matches!(
                    self.experiment,
                    Experiment::TraceCheck | Experiment::Convergence | Experiment::NoiseSweep
                ) {
                    return Err(fail("data", "csv", format!("{} needs an oracle", self.experiment)));
                }
            }
        }
        if !(data.noise >= 0.0) {
            return Err(fail("data", "noise", "must be nonnegative".into()));
        }
        if data.noise_points < 2 {
            return Err(fail("data", "noise_points", "at least two samples per axis".into()));
        }
        let check_points = |pts: &[Vec<f64>]| -> Result<(), ConfigError> {
            if pts.is_empty() {
                return Err(fail("run", "points", format!("{} needs at least one point", self.experiment)));
            }
            match pts.iter().find(|p| p.len() != dim) {
                Some(p) => Err(fail("run", "points", format!("point {p:?} does not have {dim} coordinates"))),
                None => Ok(()),
            }
        };
        match self.experiment {
            Experiment::TraceCheck => {
                if r.trace_point.len() != dim - 1 {
                    return Err(fail("run", "trace_point", format!("needs {} coordinates", dim - 1)));
                }
                if r.grid_size < 2 {
                    return Err(fail("run", "grid_size", "at least two nodes".into()));
                }
                if r.threshold.is_none() {
                    return Err(err(None, "run.threshold", "trace-check needs a threshold"));
                }
            }
            Experiment::Reconstruct | Experiment::Convergence => check_points(&r.points)?,
            Experiment::NoiseSweep => {
                check_points(&r.points)?;
                if r.deltas.is_empty() || r.deltas.iter().any(|d| !(*d >= 0.0)) {
                    return Err(fail("run", "deltas", "needs nonnegative noise levels".into()));
                }
            }
            Experiment::Field => {
                if r.axes.len() != dim {
                    return Err(fail("run", "axes", format!("needs {dim} axes")));
                }
            }
            Experiment::Carleman1d => unreachable!(),
        }
        Ok(self)
    }

    /// Canonical text; [`parse_config`] reads it back to an equal value.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
        let points = |v: &[Vec<f64>]| v.iter().map(|p| list(p)).collect::<Vec<_>>().join("; ");
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        kv("experiment", self.experiment.to_string());
        kv("seed", self.seed.to_string());
        if let Some(d) = &self.domain {
            s.push_str("\n[domain]\n");
            let mut kv = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
            kv("dim", d.dim.to_string());
            match &d.base {
                BaseConfig::Interval { a, b } => {
                    kv("base", "interval".into());
                    kv("lo", format!("{a:?}"));
                    kv("hi", format!("{b:?}"));
                }
                BaseConfig::Box { lo, hi } => {
                    kv("base", "box".into());
                    kv("lo", list(lo));
                    kv("hi", list(hi));
                }
                BaseConfig::Ball { center, radius } => {
                    kv("base", "ball".into());
                    kv("center", list(center));
                    kv("radius", format!("{radius:?}"));
                }
            }
            kv("bottom", format!("{:?}", d.bottom.offset));
            if let Some(sl) = &d.bottom.slope {
                kv("bottom_slope", list(sl));
            }
            kv("top", format!("{:?}", d.top.offset));
            if let Some(sl) = &d.top.slope {
                kv("top_slope", list(sl));
            }
        }
        if let Some(d) = &self.data {
            s.push_str("\n[data]\n");
            let mut kv = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
            match &d.source {
                DataSource::Oracle(name) => kv("oracle", name.clone()),
                DataSource::Csv(p) => kv("csv", p.display().to_string()),
            }
            kv("noise", format!("{:?}", d.noise));
            kv("noise_points", d.noise_points.to_string());
        }
        let p = &self.params;
        s.push_str("\n[params]\n");
        let mut kv = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        kv("schedule", p.schedule.iter().map(u32::to_string).collect::<Vec<_>>().join(","));
        kv("stop_threshold", format!("{:?}", p.stop_threshold));
        kv("stop_window", p.stop_window.to_string());
        kv("nodes_1d", p.nodes_1d.to_string());
        kv("sphere_rule", format!("{},{}", p.sphere_rule.0, p.sphere_rule.1));
        kv("singular_substitution", p.singular_substitution.to_string());
        kv(
            "precision",
            match p.precision {
                Precision::Auto => "auto".into(),
                Precision::Double => "double".into(),
                Precision::Bits(b) => b.to_string(),
            },
        );
        kv("accuracy", format!("{:?}", p.accuracy));
        kv("max_bits", p.max_bits.to_string());
        kv("path", p.path.to_string());
        let r = &self.run;
        s.push_str("\n[run]\n");
        let mut kv = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        kv("points", points(&r.points));
        kv("trace_point", list(&r.trace_point));
        kv("grid_size", r.grid_size.to_string());
        if let Some(t) = r.threshold {
            kv("threshold", format!("{t:?}"));
        }
        kv("axes", points(&r.axes));
        kv("deltas", list(&r.deltas));
        kv("function", r.function.name().into());
        kv("triangle", list(&[r.triangle.0, r.triangle.1, r.triangle.2]));
        kv("target", format!("{:?}", r.target));
        s.push_str("\n[output]\n");
        let mut kv = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        if let Some(d) = &self.output.dir {
            kv("dir", d.display().to_string());
        }
        let formats: Vec<_> = self
            .output
            .formats
            .iter()
            .map(|f| match f {
                Format::Csv => "csv",
                Format::Json => "json",
            })
            .collect();
        kv("formats", formats.join(","));
        s
    }
}
