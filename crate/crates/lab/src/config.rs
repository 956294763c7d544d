//! Experiment configuration: a UTF-8 document of `section.key = value` lines.
//!
//! ```text
//! # comment
//! grid.dx = 0.05
//! grid.ratio = 0.25          # dt = ratio * dx^2 (or give grid.dt)
//! coefficient.family = power
//! coefficient.gamma = 0.9
//! decay.n = 2, 3, 4
//! ```
//!
//! Every subcommand starts from its own defaults; the file overrides them and
//! the command line overrides the file. Unknown keys are rejected, and every
//! precondition of the modules a subcommand touches is checked in
//! [`Config::load`], before any computation starts.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use shelab_core::coeff::{self, Coefficient};
use shelab_core::modulus::{beta_grid, BetaGrid, BinStatistic, ModulusOptions};
use shelab_core::yamada::{m_seq, max_level, Temporal, TestFunctions};
use shelab_core::{kernel, Boundary, GridSpec};

use crate::LabError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, clap::ValueEnum)]
pub enum Subcommand {
    KernelCheck,
    YwCheck,
    Simulate,
    Couple,
    ItoCheck,
    InDecay,
    Modulus,
    Separation,
}

impl Subcommand {
    pub fn name(&self) -> &'static str {
        match self {
            Subcommand::KernelCheck => "kernel-check",
            Subcommand::YwCheck => "yw-check",
            Subcommand::Simulate => "simulate",
            Subcommand::Couple => "couple",
            Subcommand::ItoCheck => "ito-check",
            Subcommand::InDecay => "in-decay",
            Subcommand::Modulus => "modulus",
            Subcommand::Separation => "separation",
        }
    }
}

impl fmt::Display for Subcommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Subcommand {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self, LabError> {
        <Subcommand as clap::ValueEnum>::from_str(s, false)
            .map_err(|_| LabError::Validation(format!("unknown subcommand `{s}`")))
    }
}

const COMMON: &[(&str, &str)] = &[
    ("grid.dx", "0.05"),
    ("grid.ratio", "0.25"),
    ("grid.half_width", "4"),
    ("grid.horizon", "0.25"),
    ("grid.boundary", "neumann"),
    ("coefficient.family", "lipschitz"),
    ("coefficient.gamma", "1"),
    ("coefficient.scale", "1"),
    ("coefficient.slope", "1"),
    ("coefficient.drift", "0"),
    ("coefficient.depth", "12"),
    ("coefficient.value", "1"),
    ("coefficient.truncate", "none"),
    ("initial.shape", "gaussian"),
    ("initial.amplitude", "1"),
    ("initial.offset", "0"),
    ("initial.width", "1"),
    ("initial.frequency", "0"),
    ("initial.time", "0.5"),
    ("perturbation.kind", "none"),
    ("perturbation.delta", "0"),
    ("perturbation.frequency", "1"),
    ("perturbation.width", "1"),
    ("ensemble.paths", "16"),
    ("ensemble.seed", "20240601"),
    ("ensemble.blowup_quota", "0.05"),
    ("output.dir", "out"),
    ("caps.l_max", "8"),
    ("caps.n_max", "6"),
    ("frames.stride", "1"),
    ("stopping.k", "10"),
];

fn subcommand_defaults(sub: Subcommand) -> &'static [(&'static str, &'static str)] {
    match sub {
        Subcommand::KernelCheck => &[
            ("kernel.n_t", "100"),
            ("kernel.n_x", "100"),
            ("kernel.tolerance", "1e-8"),
            ("kernel.j_draws", "10000"),
            ("kernel.j_seed", "1"),
            ("kernel.sup_points", "64"),
            ("kernel.sharp_tolerance", "1e-6"),
            ("kernel.envelope_points", "1000"),
            ("kernel.envelope_seeds", "11, 12"),
            ("kernel.stability", "0.01"),
        ],
        Subcommand::YwCheck => &[("yw.points", "2000")],
        Subcommand::Simulate => &[
            ("grid.dx", "0.046875"),
            ("grid.half_width", "6"),
            ("grid.horizon", "1"),
            ("coefficient.family", "constant"),
            ("initial.shape", "zero"),
            ("ensemble.paths", "1000"),
            ("simulate.probe_x", "0"),
            ("simulate.times", "0.25, 0.5, 1"),
            ("simulate.snapshot_stride", "200"),
            ("simulate.dump_noise", "false"),
            ("simulate.heat_tolerance", "1e-4"),
        ],
        Subcommand::Couple => &[
            ("couple.delta", "0.05"),
            ("couple.probes", "1000"),
            ("couple.snapshot_stride", "250"),
            ("couple.k_levels", "1, 2, 5, 10"),
            ("couple.condition_budget", "20000"),
        ],
        Subcommand::ItoCheck => &[
            ("initial.offset", "1"),
            ("initial.amplitude", "0.5"),
            ("perturbation.kind", "gauss-sine"),
            ("perturbation.delta", "-0.3"),
            ("perturbation.frequency", "2"),
            ("ensemble.paths", "200"),
            ("ito.levels", "0.1, 0.05, 0.025"),
            ("ito.n", "2"),
            ("ito.k1", "1.5"),
            ("ito.t0", "0.25"),
            ("ito.temporal", "decreasing"),
        ],
        Subcommand::InDecay => &[
            ("grid.dx", "1/300"),
            ("grid.half_width", "1.5"),
            ("grid.ratio", "0.45"),
            ("grid.horizon", "0.05"),
            ("coefficient.family", "power"),
            ("coefficient.gamma", "0.9"),
            ("initial.shape", "gauss-cos"),
            ("initial.frequency", "3"),
            ("perturbation.kind", "sine"),
            ("perturbation.delta", "1e-3"),
            ("perturbation.frequency", "3.141592653589793"),
            ("ensemble.paths", "200"),
            ("decay.n", "2, 3, 4"),
            ("decay.t0", "0.05"),
            ("decay.k1", "1"),
            ("decay.temporal", "constant"),
            ("decay.sub", "20"),
        ],
        Subcommand::Modulus => &[
            ("grid.dx", "0.004"),
            ("grid.half_width", "2"),
            ("grid.horizon", "0.1"),
            ("perturbation.kind", "sine"),
            ("perturbation.delta", "1"),
            ("perturbation.frequency", "3.141592653589793"),
            ("ensemble.paths", "4"),
            ("frames.stride", "50"),
            ("modulus.level", "6"),
            ("modulus.window", "0.25"),
            ("modulus.bins", "12"),
            ("modulus.statistic", "max"),
            ("modulus.max_anchors", "4000"),
            ("modulus.min_xi", "0.8"),
            ("modulus.n", "2"),
            ("modulus.eps1", "4e-4"),
            ("modulus.eps0", "3e-6"),
            ("modulus.k0", "1"),
        ],
        Subcommand::Separation => &[
            ("perturbation.kind", "sine"),
            ("perturbation.delta", "1e-2"),
            ("ensemble.paths", "32"),
            ("separation.gammas", "0.5, 0.6, 0.7, 0.75, 0.8, 0.9, 1"),
            ("separation.times", "0.05, 0.1, 0.15, 0.2, 0.25"),
        ],
    }
}

/// Parses `key = value` lines. `#` starts a comment; blank lines are skipped.
pub fn parse_document(text: &str) -> Result<BTreeMap<String, String>, LabError> {
    let mut out = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| LabError::Validation(format!("config line {}: expected `key = value`", no + 1)))?;
        let key = key.trim();
        let value = value.trim().trim_matches('"');
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.') {
            return Err(LabError::Validation(format!("config line {}: malformed key `{key}`", no + 1)));
        }
        if out.insert(key.to_string(), value.to_string()).is_some() {
            return Err(LabError::Validation(format!("config line {}: duplicate key `{key}`", no + 1)));
        }
    }
    Ok(out)
}

/// Numbers accept an optional `a/b` form (e.g. `1/300`).
fn parse_number(s: &str) -> Option<f64> {
    match s.split_once('/') {
        Some((a, b)) => Some(a.trim().parse::<f64>().ok()? / b.trim().parse::<f64>().ok()?),
        None => s.parse().ok(),
    }
}

struct Reader<'a> {
    map: &'a BTreeMap<String, String>,
}

fn invalid(key: &str, msg: impl fmt::Display) -> LabError {
    LabError::Validation(format!("{key}: {msg}"))
}

impl Reader<'_> {
    fn str(&self, key: &str) -> &str {
        self.map.get(key).map(String::as_str).unwrap_or_else(|| panic!("no default for {key}"))
    }

    fn f64(&self, key: &str) -> Result<f64, LabError> {
        let s = self.str(key);
        parse_number(s).filter(|v| v.is_finite()).ok_or_else(|| invalid(key, format!("`{s}` is not a finite number")))
    }

    fn positive(&self, key: &str) -> Result<f64, LabError> {
        let v = self.f64(key)?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(invalid(key, format!("must be positive, got {v}")))
        }
    }

    fn opt_f64(&self, key: &str) -> Result<Option<f64>, LabError> {
        match self.map.get(key).map(String::as_str) {
            None | Some("none") => Ok(None),
            Some(_) => self.f64(key).map(Some),
        }
    }

    fn int<T: FromStr>(&self, key: &str) -> Result<T, LabError> {
        let s = self.str(key);
        s.parse().map_err(|_| invalid(key, format!("`{s}` is not a non-negative integer")))
    }

    fn bool(&self, key: &str) -> Result<bool, LabError> {
        match self.str(key) {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            s => Err(invalid(key, format!("`{s}` is not a boolean"))),
        }
    }

    fn list_f64(&self, key: &str) -> Result<Vec<f64>, LabError> {
        let s = self.str(key);
        let v: Option<Vec<f64>> = s.split(',').map(|p| parse_number(p.trim()).filter(|v| v.is_finite())).collect();
        match v {
            Some(v) if !v.is_empty() => Ok(v),
            _ => Err(invalid(key, format!("`{s}` is not a comma-separated list of numbers"))),
        }
    }

    fn list_u32(&self, key: &str) -> Result<Vec<u32>, LabError> {
        let s = self.str(key);
        s.split(',')
            .map(|p| p.trim().parse::<u32>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| invalid(key, format!("`{s}` is not a comma-separated list of integers")))
    }

    fn temporal(&self, key: &str) -> Result<Temporal, LabError> {
        match self.str(key) {
            "constant" => Ok(Temporal::Constant),
            "decreasing" => Ok(Temporal::Decreasing),
            s => Err(invalid(key, format!("`{s}` is not one of constant, decreasing"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Zero,
    Constant,
    /// `offset + amplitude e^{-(x/width)²}`
    Gaussian,
    /// `amplitude e^{-(x/width)²} cos(frequency x)`
    GaussCos,
    /// `p_time(x)`
    Heat,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Initial {
    pub shape: Shape,
    pub amplitude: f64,
    pub offset: f64,
    pub width: f64,
    pub frequency: f64,
    pub time: f64,
}

impl Initial {
    pub fn eval(&self, x: f64) -> f64 {
        let g = (-(x / self.width).powi(2)).exp();
        match self.shape {
            Shape::Zero => 0.0,
            Shape::Constant => self.amplitude,
            Shape::Gaussian => self.offset + self.amplitude * g,
            Shape::GaussCos => self.amplitude * g * (self.frequency * x).cos(),
            Shape::Heat => kernel::heat_kernel(self.time, x).unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PerturbationKind {
    None,
    Constant,
    /// `sin(frequency x)`
    Sine,
    /// `sin(frequency x) e^{-x²/(2 width²)}`
    GaussSine,
}

/// `X0_2 = X0_1 + delta * shape(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    pub kind: PerturbationKind,
    pub delta: f64,
    pub frequency: f64,
    pub width: f64,
}

impl Perturbation {
    pub fn eval(&self, x: f64) -> f64 {
        let s = match self.kind {
            PerturbationKind::None => 0.0,
            PerturbationKind::Constant => 1.0,
            PerturbationKind::Sine => (self.frequency * x).sin(),
            PerturbationKind::GaussSine => (self.frequency * x).sin() * (-x * x / (2.0 * self.width * self.width)).exp(),
        };
        self.delta * s
    }

    /// True when the two initial profiles coincide.
    pub fn is_trivial(&self) -> bool {
        self.kind == PerturbationKind::None || self.delta == 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSpec {
    pub family: String,
    pub gamma: f64,
    pub scale: f64,
    pub slope: f64,
    pub drift: f64,
    pub depth: u32,
    pub value: f64,
    pub truncate: Option<f64>,
}

impl CoefficientSpec {
    /// Builds the coefficient, with `gamma` overriding the declared exponent of the power family.
    pub fn build_with_gamma(&self, gamma: f64) -> shelab_core::Result<Coefficient> {
        let mut c = match self.family.as_str() {
            "power" => coeff::make_power(gamma, self.scale)?,
            "lipschitz" => coeff::make_lipschitz(self.slope, 0.0),
            "weierstrass" => coeff::make_weierstrass(gamma, self.depth)?,
            "constant" => Coefficient::constant(self.value),
            _ => Coefficient::zero(),
        };
        if self.drift != 0.0 {
            c = c.with_linear_drift(self.drift);
        }
        match self.truncate {
            Some(k) => c.truncate(k),
            None => Ok(c),
        }
    }

    pub fn build(&self) -> shelab_core::Result<Coefficient> {
        self.build_with_gamma(self.gamma)
    }

    /// `σ ≡ c`, `b ≡ 0`.
    pub fn additive(&self) -> Option<f64> {
        match self.family.as_str() {
            "constant" if self.drift == 0.0 => Some(self.value),
            "zero" => Some(0.0),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSettings {
    pub n_t: usize,
    pub n_x: usize,
    pub tolerance: f64,
    pub j_draws: usize,
    pub j_seed: u64,
    pub sup_points: usize,
    pub sharp_tolerance: f64,
    pub envelope_points: usize,
    pub envelope_seeds: (u64, u64),
    pub stability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateSettings {
    pub probe_x: f64,
    pub times: Vec<f64>,
    pub snapshot_stride: usize,
    pub dump_noise: bool,
    pub heat_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupleSettings {
    pub delta: f64,
    pub probes: usize,
    pub snapshot_stride: usize,
    pub k_levels: Vec<f64>,
    pub condition_budget: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItoSettings {
    pub levels: Vec<GridSpec>,
    pub n: u32,
    pub test: TestFunctions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecaySettings {
    pub n: Vec<u32>,
    pub test: TestFunctions,
    pub sub: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModulusSettings {
    pub level: u32,
    pub options: ModulusOptions,
    pub min_xi: Option<f64>,
    pub n: u32,
    pub k0: f64,
    pub betas: Option<BetaGrid>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparationSettings {
    pub gammas: Vec<f64>,
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Settings {
    Kernel(KernelSettings),
    Yw { points: usize },
    Simulate(SimulateSettings),
    Couple(CoupleSettings),
    Ito(ItoSettings),
    Decay(DecaySettings),
    Modulus(ModulusSettings),
    Separation(SeparationSettings),
}

/// Command-line values that override the document.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub out: Option<PathBuf>,
}

/// A fully validated experiment configuration.
#[derive(Debug, Clone)]
pub struct Config {
    pub subcommand: Subcommand,
    pub grid: GridSpec,
    pub coefficient: CoefficientSpec,
    pub initial: Initial,
    pub perturbation: Perturbation,
    pub paths: usize,
    pub seed: u64,
    pub blowup_quota: f64,
    pub out_dir: PathBuf,
    pub l_max: usize,
    pub n_max: u32,
    pub frame_stride: usize,
    pub k_level: f64,
    pub settings: Settings,
    /// Every effective key with its textual value, as echoed in the summary.
    pub echo: BTreeMap<String, String>,
}

impl Config {
    pub fn defaults(sub: Subcommand) -> BTreeMap<String, String> {
        let mut m: BTreeMap<String, String> = COMMON.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        for (k, v) in subcommand_defaults(sub) {
            m.insert(k.to_string(), v.to_string());
        }
        m
    }

    /// Merges defaults, the document (if any) and the overrides, then validates.
    pub fn load(sub: Subcommand, document: Option<&str>, overrides: &Overrides) -> Result<Config, LabError> {
        let mut map = Config::defaults(sub);
        if let Some(text) = document {
            let file = parse_document(text)?;
            if file.contains_key("grid.dt") && file.contains_key("grid.ratio") {
                return Err(LabError::Validation("give either grid.dt or grid.ratio, not both".into()));
            }
            if file.contains_key("grid.dt") {
                map.remove("grid.ratio");
            }
            for (k, v) in file {
                if k == "subcommand" {
                    if v != sub.name() {
                        return Err(LabError::Validation(format!(
                            "config is for subcommand `{v}` but `{}` was requested",
                            sub.name()
                        )));
                    }
                    continue;
                }
                if !map.contains_key(&k) && k != "grid.dt" {
                    return Err(LabError::Validation(format!("unknown key `{k}` for subcommand {}", sub.name())));
                }
                map.insert(k, v);
            }
        }
        if let Some(seed) = overrides.seed {
            map.insert("ensemble.seed".into(), seed.to_string());
        }
        if let Some(paths) = overrides.paths {
            map.insert("ensemble.paths".into(), paths.to_string());
        }
        if let Some(out) = &overrides.out {
            map.insert("output.dir".into(), out.display().to_string());
        }
        Config::from_map(sub, map)
    }

    fn from_map(sub: Subcommand, map: BTreeMap<String, String>) -> Result<Config, LabError> {
        let r = Reader { map: &map };

        let dx = r.positive("grid.dx")?;
        let dt = match map.contains_key("grid.dt") {
            true => r.positive("grid.dt")?,
            false => r.positive("grid.ratio")? * dx * dx,
        };
        let boundary = Boundary::parse(r.str("grid.boundary"))
            .ok_or_else(|| invalid("grid.boundary", "expected neumann, dirichlet or periodic"))?;
        let half_width = r.positive("grid.half_width")?;
        let horizon = r.positive("grid.horizon")?;
        let grid = GridSpec::new(dx, dt, half_width, horizon, boundary).map_err(LabError::from_core)?;
        if half_width < 6.0 * horizon.sqrt() {
            log::warn!("grid.half_width {half_width} is below 6 sqrt(T) = {:.3}; boundary effects may exceed scheme error", 6.0 * horizon.sqrt());
        }

        let family = r.str("coefficient.family").to_string();
        if !["power", "lipschitz", "weierstrass", "constant", "zero"].contains(&family.as_str()) {
            return Err(invalid("coefficient.family", format!("unknown family `{family}`")));
        }
        let coefficient = CoefficientSpec {
            family,
            gamma: r.f64("coefficient.gamma")?,
            scale: r.f64("coefficient.scale")?,
            slope: r.f64("coefficient.slope")?,
            drift: r.f64("coefficient.drift")?,
            depth: r.int("coefficient.depth")?,
            value: r.f64("coefficient.value")?,
            truncate: r.opt_f64("coefficient.truncate")?,
        };
        coefficient.build().map_err(LabError::from_core)?;

        let shape = match r.str("initial.shape") {
            "zero" => Shape::Zero,
            "constant" => Shape::Constant,
            "gaussian" => Shape::Gaussian,
            "gauss-cos" => Shape::GaussCos,
            "heat" => Shape::Heat,
            s => return Err(invalid("initial.shape", format!("unknown shape `{s}`"))),
        };
        let initial = Initial {
            shape,
            amplitude: r.f64("initial.amplitude")?,
            offset: r.f64("initial.offset")?,
            width: r.positive("initial.width")?,
            frequency: r.f64("initial.frequency")?,
            time: r.positive("initial.time")?,
        };
        let kind = match r.str("perturbation.kind") {
            "none" => PerturbationKind::None,
            "constant" => PerturbationKind::Constant,
            "sine" => PerturbationKind::Sine,
            "gauss-sine" => PerturbationKind::GaussSine,
            s => return Err(invalid("perturbation.kind", format!("unknown kind `{s}`"))),
        };
        let perturbation = Perturbation {
            kind,
            delta: r.f64("perturbation.delta")?,
            frequency: r.f64("perturbation.frequency")?,
            width: r.positive("perturbation.width")?,
        };

        let paths: usize = r.int("ensemble.paths")?;
        if paths == 0 {
            return Err(invalid("ensemble.paths", "need at least one path"));
        }
        let seed: u64 = r.int("ensemble.seed")?;
        let blowup_quota = r.f64("ensemble.blowup_quota")?;
        if !(0.0..=1.0).contains(&blowup_quota) {
            return Err(invalid("ensemble.blowup_quota", "must lie in [0, 1]"));
        }
        let l_max: usize = r.int("caps.l_max")?;
        let n_max: u32 = r.int("caps.n_max")?;
        if l_max == 0 || n_max == 0 {
            return Err(LabError::Validation("caps.l_max and caps.n_max must be at least 1".into()));
        }
        let frame_stride: usize = r.int("frames.stride")?;
        if frame_stride == 0 {
            return Err(invalid("frames.stride", "must be at least 1"));
        }
        let k_level = r.positive("stopping.k")?;

        let settings = match sub {
            Subcommand::KernelCheck => {
                let seeds = r.list_u32("kernel.envelope_seeds")?;
                if seeds.len() != 2 || seeds[0] == seeds[1] {
                    return Err(invalid("kernel.envelope_seeds", "need two distinct seeds"));
                }
                let k = KernelSettings {
                    n_t: r.int("kernel.n_t")?,
                    n_x: r.int("kernel.n_x")?,
                    tolerance: r.positive("kernel.tolerance")?,
                    j_draws: r.int("kernel.j_draws")?,
                    j_seed: r.int("kernel.j_seed")?,
                    sup_points: r.int("kernel.sup_points")?,
                    sharp_tolerance: r.positive("kernel.sharp_tolerance")?,
                    envelope_points: r.int("kernel.envelope_points")?,
                    envelope_seeds: (seeds[0] as u64, seeds[1] as u64),
                    stability: r.positive("kernel.stability")?,
                };
                if k.n_t < 2 || k.n_x < 2 || k.sup_points < 2 || k.j_draws == 0 || k.envelope_points == 0 {
                    return Err(LabError::Validation("kernel sweeps need at least 2 points per axis".into()));
                }
                Settings::Kernel(k)
            }
            Subcommand::YwCheck => {
                if n_max > 30 {
                    return Err(invalid("caps.n_max", "yw-check supports n <= 30"));
                }
                let points: usize = r.int("yw.points")?;
                if points < 10 {
                    return Err(invalid("yw.points", "need at least 10 points"));
                }
                Settings::Yw { points }
            }
            Subcommand::Simulate => {
                let times = r.list_f64("simulate.times")?;
                check_times("simulate.times", &times, grid.final_time())?;
                let probe_x = r.f64("simulate.probe_x")?;
                if probe_x.abs() >= half_width {
                    return Err(invalid("simulate.probe_x", "outside the domain"));
                }
                Settings::Simulate(SimulateSettings {
                    probe_x,
                    times,
                    snapshot_stride: r.int::<usize>("simulate.snapshot_stride")?.max(1),
                    dump_noise: r.bool("simulate.dump_noise")?,
                    heat_tolerance: r.positive("simulate.heat_tolerance")?,
                })
            }
            Subcommand::Couple => {
                let delta = r.positive("couple.delta")?;
                if delta > 1.0 {
                    return Err(invalid("couple.delta", "smoothing window must lie in (0, 1]"));
                }
                Settings::Couple(CoupleSettings {
                    delta,
                    probes: r.int("couple.probes")?,
                    snapshot_stride: r.int::<usize>("couple.snapshot_stride")?.max(1),
                    k_levels: r.list_f64("couple.k_levels")?,
                    condition_budget: r.int::<usize>("couple.condition_budget")?.max(1),
                })
            }
            Subcommand::ItoCheck => {
                let n: u32 = r.int("ito.n")?;
                check_level("ito.n", n, n_max)?;
                let t0 = r.positive("ito.t0")?;
                if t0 > horizon + 1e-12 {
                    return Err(invalid("ito.t0", format!("exceeds the horizon {horizon}")));
                }
                let test = TestFunctions::new(r.positive("ito.k1")?, t0, r.temporal("ito.temporal")?)
                    .map_err(LabError::from_core)?;
                let mut levels = Vec::new();
                for dx in r.list_f64("ito.levels")? {
                    let g = GridSpec::new(dx, grid.ratio() * dx * dx, half_width, t0, boundary)
                        .map_err(|e| invalid("ito.levels", e))?;
                    check_resolution("ito.levels", n, dx)?;
                    if test.k1 >= half_width {
                        return Err(invalid("ito.k1", "test function support leaves the domain"));
                    }
                    levels.push(g);
                }
                if levels.len() < 2 || levels.windows(2).any(|w| w[1].dx >= w[0].dx) {
                    return Err(invalid("ito.levels", "need at least two strictly decreasing dx values"));
                }
                Settings::Ito(ItoSettings { levels, n, test })
            }
            Subcommand::InDecay => {
                let n = r.list_u32("decay.n")?;
                if n.len() < 2 || n.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(invalid("decay.n", "need at least two increasing levels"));
                }
                for &v in &n {
                    check_level("decay.n", v, n_max)?;
                    check_resolution("decay.n", v, dx)?;
                }
                let t0 = r.positive("decay.t0")?;
                if t0 > horizon + 1e-12 {
                    return Err(invalid("decay.t0", format!("exceeds the horizon {horizon}")));
                }
                let test = TestFunctions::new(r.positive("decay.k1")?, t0, r.temporal("decay.temporal")?)
                    .map_err(LabError::from_core)?;
                Settings::Decay(DecaySettings { n, test, sub: r.int::<usize>("decay.sub")?.max(1) })
            }
            Subcommand::Modulus => {
                let level: u32 = r.int("modulus.level")?;
                if 2f64.powi(-(level as i32)) < dx {
                    return Err(invalid("modulus.level", format!("2^-N is below dx = {dx}")));
                }
                let statistic = match r.str("modulus.statistic") {
                    "max" => BinStatistic::Max,
                    "mean" => BinStatistic::Mean,
                    s => match s.strip_prefix("quantile:").and_then(parse_number) {
                        Some(q) if q > 0.0 && q <= 1.0 => BinStatistic::Quantile(q),
                        _ => return Err(invalid("modulus.statistic", "expected max, mean or quantile:<q>")),
                    },
                };
                let options = ModulusOptions {
                    window: r.positive("modulus.window")?,
                    bins: r.int("modulus.bins")?,
                    max_anchors: r.int("modulus.max_anchors")?,
                    statistic,
                };
                if options.bins < 3 {
                    return Err(invalid("modulus.bins", "need at least 3 bins"));
                }
                let n: u32 = r.int("modulus.n")?;
                check_level("modulus.n", n, n_max)?;
                check_resolution("modulus.n", n, dx)?;
                let k0 = r.positive("modulus.k0")?;
                let w = shelab_core::yamada::a_seq(n).sqrt();
                if w < dx || k0 + w > half_width {
                    return Err(invalid("modulus.k0", "the x-hat window [x - sqrt(a_n), x + sqrt(a_n)] must fit the grid"));
                }
                // the β-bands only exist for γ > 3/4
                let gamma = coefficient.gamma;
                let betas = if gamma > 0.75 {
                    Some(
                        beta_grid(gamma, r.positive("modulus.eps0")?, r.positive("modulus.eps1")?, l_max)
                            .map_err(|e| invalid("modulus.eps0/eps1", e))?,
                    )
                } else {
                    None
                };
                Settings::Modulus(ModulusSettings {
                    level,
                    options,
                    min_xi: r.opt_f64("modulus.min_xi")?,
                    n,
                    k0,
                    betas,
                })
            }
            Subcommand::Separation => {
                if paths < 30 {
                    return Err(invalid("ensemble.paths", "separation statistics need at least 30 paths per γ"));
                }
                let gammas = r.list_f64("separation.gammas")?;
                for &g in &gammas {
                    if !(g > 0.0 && g <= 1.0) {
                        return Err(invalid("separation.gammas", format!("γ = {g} outside (0, 1]")));
                    }
                }
                let times = r.list_f64("separation.times")?;
                check_times("separation.times", &times, grid.final_time())?;
                Settings::Separation(SeparationSettings { gammas, times })
            }
        };

        Ok(Config {
            subcommand: sub,
            grid,
            coefficient,
            initial,
            perturbation,
            paths,
            seed,
            blowup_quota,
            out_dir: PathBuf::from(r.str("output.dir")),
            l_max,
            n_max,
            frame_stride,
            k_level,
            settings,
            echo: map.clone(),
        })
    }

    pub fn x0_pair(&self, grid: &GridSpec) -> (Vec<f64>, Vec<f64>) {
        let a: Vec<f64> = grid.cell_centres().map(|x| self.initial.eval(x)).collect();
        let b = grid.cell_centres().zip(&a).map(|(x, v)| v + self.perturbation.eval(x)).collect();
        (a, b)
    }
}

fn check_times(key: &str, times: &[f64], end: f64) -> Result<(), LabError> {
    if times.iter().any(|&t| !(t >= 0.0 && t <= end + 1e-12)) {
        return Err(invalid(key, format!("times must lie in [0, {end}]")));
    }
    Ok(())
}

fn check_level(key: &str, n: u32, n_max: u32) -> Result<(), LabError> {
    if n == 0 || n > n_max {
        return Err(invalid(key, format!("level {n} outside 1..={n_max} (caps.n_max)")));
    }
    Ok(())
}

/// The mollifier `Φ^{m_{n+1}}` must span two cells: `m_{n+1} dx <= 1/2`.
fn check_resolution(key: &str, n: u32, dx: f64) -> Result<(), LabError> {
    let m = m_seq(n + 1);
    if m * dx > 0.5 {
        let best = max_level(dx).map_or("none".to_string(), |l| l.to_string());
        return Err(invalid(
            key,
            format!("resolution guard m_{} dx = {:.3} > 1/2 at level {n}; largest admissible level is {best}", n + 1, m * dx),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn document_parsing() {
        let m = parse_document("# c\n grid.dx = 0.1 # tail\n\ncoefficient.family = \"power\"\n").unwrap();
        assert_eq!(m["grid.dx"], "0.1");
        assert_eq!(m["coefficient.family"], "power");
        assert!(parse_document("grid.dx 0.1").is_err());
        assert!(parse_document("a = 1\na = 2").is_err());
    }

    #[test]
    fn fractions() {
        assert_eq!(parse_number("1/4"), Some(0.25));
        assert_eq!(parse_number("2e-3"), Some(0.002));
        assert_eq!(parse_number("x"), None);
    }

    #[test]
    fn every_subcommand_default_is_valid() {
        for sub in <Subcommand as clap::ValueEnum>::value_variants() {
            Config::load(*sub, None, &Overrides::default()).unwrap_or_else(|e| panic!("{sub}: {e}"));
        }
    }

    #[test]
    fn unstable_ratio_names_the_invariant() {
        let err = Config::load(Subcommand::Simulate, Some("grid.ratio = 0.6"), &Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("stability invariant"), "{err}");
    }

    #[test]
    fn unknown_keys_and_guards() {
        let o = Overrides::default();
        assert!(Config::load(Subcommand::Couple, Some("decay.n = 2"), &o).is_err());
        assert!(Config::load(Subcommand::InDecay, Some("decay.n = 2, 5\ncaps.n_max = 6"), &o).is_err());
        assert!(Config::load(Subcommand::Separation, Some("ensemble.paths = 10"), &o).is_err());
        assert!(Config::load(Subcommand::Couple, Some("grid.dt = 1e-4\ngrid.ratio = 0.1"), &o).is_err());
        let c = Config::load(Subcommand::Couple, Some("grid.dt = 5e-4"), &o).unwrap();
        assert_eq!(c.grid.dt, 5e-4);
    }

    #[test]
    fn overrides_win() {
        let o = Overrides { seed: Some(7), paths: Some(3), out: Some("x".into()) };
        let c = Config::load(Subcommand::Couple, Some("ensemble.seed = 1"), &o).unwrap();
        assert_eq!((c.seed, c.paths), (7, 3));
        assert_eq!(c.echo["output.dir"], "x");
    }
}
