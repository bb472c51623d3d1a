//! Experiment configuration: problem presets, `key = value` files and flag overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::expr::Op;
use crate::gp::GpConfig;
use crate::numerics::BracketedRootConfig;
use crate::problems::{
    collision_benchmark_series, collision_dataset_on, collision_exact, kv_benchmark_series, kv_dataset_on,
    lamb_benchmark_series, lamb_dataset, lamb_solve_k, linspace, logspace, CollisionRegime, Dataset, InputStrategy,
    KvLimit, LambConfig, ProblemError, KV_LARGE_DELTA_TERMS,
};
use crate::series::Series;

/// Problem plus limiting regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selector {
    Collision(CollisionRegime),
    KelvinVoigt(KvLimit),
    RayleighLamb,
}

impl Selector {
    pub fn parse(problem: &str, regime: Option<&str>) -> Result<Self, CliError> {
        let bad = |r: &str| CliError::Config(format!("regime '{r}' is not valid for problem '{problem}'"));
        match problem {
            "collision" => match regime.unwrap_or("small_delta") {
                "small_delta" => Ok(Selector::Collision(CollisionRegime::SmallDelta)),
                "near_unit" => Ok(Selector::Collision(CollisionRegime::NearUnit)),
                "large_delta" => Ok(Selector::Collision(CollisionRegime::LargeDelta)),
                r => Err(bad(r)),
            },
            "kelvin_voigt" => match regime.unwrap_or("small_delta") {
                "small_delta" => Ok(Selector::KelvinVoigt(KvLimit::SmallDelta)),
                "large_delta" => Ok(Selector::KelvinVoigt(KvLimit::LargeDelta)),
                r => Err(bad(r)),
            },
            "rayleigh_lamb" => match regime.unwrap_or("bending") {
                "bending" => Ok(Selector::RayleighLamb),
                r => Err(bad(r)),
            },
            p => Err(CliError::Config(format!(
                "unknown problem '{p}' (expected collision, kelvin_voigt or rayleigh_lamb)"
            ))),
        }
    }

    pub fn problem_name(self) -> &'static str {
        match self {
            Selector::Collision(_) => "collision",
            Selector::KelvinVoigt(_) => "kelvin_voigt",
            Selector::RayleighLamb => "rayleigh_lamb",
        }
    }

    pub fn regime_name(self) -> &'static str {
        match self {
            Selector::Collision(CollisionRegime::SmallDelta) | Selector::KelvinVoigt(KvLimit::SmallDelta) => {
                "small_delta"
            }
            Selector::Collision(CollisionRegime::NearUnit) => "near_unit",
            Selector::Collision(CollisionRegime::LargeDelta) | Selector::KelvinVoigt(KvLimit::LargeDelta) => {
                "large_delta"
            }
            Selector::RayleighLamb => "bending",
        }
    }

    pub fn param_name(self) -> &'static str {
        match self {
            Selector::Collision(r) => r.param_name(),
            Selector::KelvinVoigt(l) => l.param_name(),
            Selector::RayleighLamb => "Omega",
        }
    }

    pub fn default_range(self) -> (f64, f64) {
        match self {
            Selector::Collision(r) => r.default_range(),
            Selector::KelvinVoigt(l) => l.default_range(),
            Selector::RayleighLamb => crate::problems::rayleigh_lamb::DEFAULT_OMEGA_RANGE,
        }
    }

    pub fn default_spacing(self) -> Spacing {
        match self {
            Selector::KelvinVoigt(KvLimit::LargeDelta) => Spacing::Log,
            _ => Spacing::Linear,
        }
    }

    /// Highest order used for comparisons and error surfaces.
    pub fn default_n_max(self) -> u32 {
        match self {
            Selector::Collision(_) => 5,
            Selector::KelvinVoigt(KvLimit::SmallDelta) => 8,
            Selector::KelvinVoigt(KvLimit::LargeDelta) => KV_LARGE_DELTA_TERMS,
            Selector::RayleighLamb => 5,
        }
    }

    /// GP settings tuned per problem; everything not listed keeps the engine defaults.
    pub fn default_gp(self) -> GpConfig {
        match self {
            Selector::KelvinVoigt(KvLimit::LargeDelta) => GpConfig {
                population_size: 20_000,
                generations: 60,
                erc_range: (-1.0, 1.0),
                function_set: vec![Op::Add, Op::Sub, Op::Mul],
                ..GpConfig::default()
            },
            _ => GpConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spacing {
    Linear,
    Log,
}

impl Spacing {
    fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "linear" => Ok(Spacing::Linear),
            "log" => Ok(Spacing::Log),
            _ => Err(CliError::Config(format!("spacing must be 'linear' or 'log', got '{s}'"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Spacing::Linear => "linear",
            Spacing::Log => "log",
        }
    }
}

/// How A₁, A₂ are normalized when read off a fitted K⁴ series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambNormalization {
    /// Divide by the fitted Ω² coefficient.
    Ratio,
    /// Divide by (3/2)(1−ν) for the configured ν.
    KnownNu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Txt,
}

/// Fully resolved experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub selector: Selector,
    pub n_points: usize,
    pub range: (f64, f64),
    pub spacing: Spacing,
    pub strategy: InputStrategy,
    pub with_log: bool,
    pub nu: f64,
    pub n_max: u32,
    pub lamb_normalization: LambNormalization,
    pub gp: GpConfig,
    pub out: PathBuf,
    pub dataset: Option<PathBuf>,
    pub series: Option<PathBuf>,
    pub formats: Vec<Format>,
}

/// Keys accepted in a config file. Every key is optional.
#[derive(Debug, Clone, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub problem: Option<String>,
    pub regime: Option<String>,
    pub n_points: Option<usize>,
    pub range: Option<[f64; 2]>,
    pub spacing: Option<String>,
    pub strategy: Option<String>,
    pub with_log: Option<bool>,
    pub nu: Option<f64>,
    pub n_max: Option<u32>,
    pub lamb_normalization: Option<String>,
    pub out: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub series: Option<PathBuf>,
    pub formats: Option<Vec<String>>,
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    pub workers: Option<usize>,
    pub population_size: Option<usize>,
    pub generations: Option<usize>,
    pub tournament_size: Option<usize>,
    pub crossover_p: Option<f64>,
    pub subtree_p: Option<f64>,
    pub point_p: Option<f64>,
    pub hoist_p: Option<f64>,
    pub reproduction_p: Option<f64>,
    pub parsimony_coefficient: Option<f64>,
    pub erc_range: Option<[f64; 2]>,
    pub init_depth: Option<[usize; 2]>,
    pub depth_cap: Option<usize>,
    pub fitness_stop: Option<f64>,
    pub point_replace_p: Option<f64>,
    pub function_set: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Fields set in `other` replace those in `self`.
    pub fn overlay(self, other: FileConfig) -> FileConfig {
        macro_rules! pick {
            ($($f:ident),*) => { FileConfig { $($f: other.$f.or(self.$f)),* } };
        }
        pick!(
            problem,
            regime,
            n_points,
            range,
            spacing,
            strategy,
            with_log,
            nu,
            n_max,
            lamb_normalization,
            out,
            dataset,
            series,
            formats,
            seed,
            runs,
            workers,
            population_size,
            generations,
            tournament_size,
            crossover_p,
            subtree_p,
            point_p,
            hoist_p,
            reproduction_p,
            parsimony_coefficient,
            erc_range,
            init_depth,
            depth_cap,
            fitness_stop,
            point_replace_p,
            function_set
        )
    }

    /// Applies presets for the selected problem, then every set key.
    pub fn resolve(&self, env_out: Option<PathBuf>) -> Result<ExperimentConfig, CliError> {
        let selector = Selector::parse(self.problem.as_deref().unwrap_or("collision"), self.regime.as_deref())?;
        let mut gp = selector.default_gp();
        macro_rules! set {
            ($($f:ident => $g:ident),*) => { $(if let Some(v) = self.$f { gp.$g = v; })* };
        }
        set!(
            seed => seed, runs => n_runs, population_size => population_size,
            generations => generations, tournament_size => tournament_size,
            crossover_p => crossover_p, subtree_p => subtree_p, point_p => point_p,
            hoist_p => hoist_p, reproduction_p => reproduction_p,
            parsimony_coefficient => parsimony_coefficient, depth_cap => depth_cap,
            fitness_stop => fitness_stop, point_replace_p => point_replace_p
        );
        if let Some(w) = self.workers {
            gp.workers = Some(w);
        }
        if let Some([lo, hi]) = self.erc_range {
            gp.erc_range = (lo, hi);
        }
        if let Some([lo, hi]) = self.init_depth {
            gp.init_depth = (lo, hi);
        }
        if let Some(fs) = &self.function_set {
            gp.function_set = parse_function_set(fs)?;
        }
        gp.validate()?;

        let strategy = match self.strategy.as_deref() {
            None | Some("single") => InputStrategy::Single,
            Some(s) => match s.strip_prefix("powers:").and_then(|k| k.parse::<u32>().ok()) {
                Some(k) if k >= 1 => InputStrategy::Powers(k),
                _ => {
                    return Err(CliError::Config(format!(
                        "strategy must be 'single' or 'powers:K' with K >= 1, got '{s}'"
                    )))
                }
            },
        };
        if strategy != InputStrategy::Single && !matches!(selector, Selector::Collision(_)) {
            return Err(CliError::Config("strategy applies to the collision problem only".into()));
        }
        let lamb_normalization = match self.lamb_normalization.as_deref() {
            None | Some("ratio") => LambNormalization::Ratio,
            Some("known_nu") => LambNormalization::KnownNu,
            Some(s) => {
                return Err(CliError::Config(format!("lamb_normalization must be 'ratio' or 'known_nu', got '{s}'")))
            }
        };
        let formats = match &self.formats {
            None => vec![Format::Csv, Format::Txt],
            Some(list) => list
                .iter()
                .map(|f| match f.as_str() {
                    "csv" => Ok(Format::Csv),
                    "txt" => Ok(Format::Txt),
                    _ => Err(CliError::Config(format!("unknown format '{f}' (expected csv or txt)"))),
                })
                .collect::<Result<_, _>>()?,
        };
        let cfg = ExperimentConfig {
            selector,
            n_points: self.n_points.unwrap_or(20),
            range: self.range.map(|[a, b]| (a, b)).unwrap_or_else(|| selector.default_range()),
            spacing: match &self.spacing {
                Some(s) => Spacing::parse(s)?,
                None => selector.default_spacing(),
            },
            strategy,
            with_log: self.with_log.unwrap_or(true),
            nu: self.nu.unwrap_or(crate::problems::rayleigh_lamb::DEFAULT_NU),
            n_max: self.n_max.unwrap_or_else(|| selector.default_n_max()),
            lamb_normalization,
            gp,
            out: self.out.clone().or(env_out).unwrap_or_else(|| PathBuf::from("out")),
            dataset: self.dataset.clone(),
            series: self.series.clone(),
            formats,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn parse_function_set(s: &str) -> Result<Vec<Op>, CliError> {
    let mut ops = Vec::new();
    for c in s.chars().filter(|c| !c.is_whitespace() && *c != ',') {
        let op =
            Op::from_symbol(c).ok_or_else(|| CliError::Config(format!("unknown operator '{c}' in function_set")))?;
        if !ops.contains(&op) {
            ops.push(op);
        }
    }
    Ok(ops)
}

impl ExperimentConfig {
    /// Defaults for a selector with no file or flags.
    pub fn preset(selector: Selector) -> Self {
        FileConfig {
            problem: Some(selector.problem_name().into()),
            regime: Some(selector.regime_name().into()),
            ..FileConfig::default()
        }
        .resolve(None)
        .expect("presets are valid")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let (lo, hi) = self.range;
        if self.n_points < 2 || !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(CliError::Config(format!(
                "need at least 2 points on a finite range with lo < hi, got {} on [{lo}, {hi}]",
                self.n_points
            )));
        }
        if self.spacing == Spacing::Log && lo <= 0.0 {
            return Err(CliError::Config("log spacing needs a positive range".into()));
        }
        if self.n_max > 25 {
            return Err(CliError::Config(format!("n_max = {} exceeds 25", self.n_max)));
        }
        if self.formats.is_empty() {
            return Err(CliError::Config("formats must not be empty".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        let (lo, hi) = self.range;
        match self.spacing {
            Spacing::Linear => linspace(lo, hi, self.n_points),
            Spacing::Log => logspace(lo, hi, self.n_points),
        }
    }

    pub fn writes(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    pub fn lamb_config(&self) -> LambConfig {
        LambConfig { nu: self.nu, omega_grid: self.grid(), root: BracketedRootConfig::default() }
    }

    pub fn build_dataset(&self) -> Result<Dataset, ProblemError> {
        match self.selector {
            Selector::Collision(r) => collision_dataset_on(r, self.grid(), self.strategy),
            Selector::KelvinVoigt(l) => kv_dataset_on(l, self.grid(), self.with_log),
            Selector::RayleighLamb => lamb_dataset(&self.lamb_config()),
        }
    }

    /// Exact target as a function of the small parameter.
    pub fn exact(&self, p: f64) -> Result<f64, ProblemError> {
        match self.selector {
            Selector::Collision(r) => collision_exact(r.to_delta(p)),
            Selector::KelvinVoigt(l) => l.exact(p),
            Selector::RayleighLamb => lamb_solve_k(p, self.nu, &BracketedRootConfig::default()).map(|k| k.powi(4)),
        }
    }

    /// Analytic expansion carried as far as `n_max` (or as far as it is known).
    pub fn benchmark(&self) -> Result<Series, ProblemError> {
        match self.selector {
            Selector::Collision(r) => Ok(collision_benchmark_series(r, self.n_max)),
            Selector::KelvinVoigt(l @ KvLimit::SmallDelta) => kv_benchmark_series(l, self.n_max),
            Selector::KelvinVoigt(l @ KvLimit::LargeDelta) => {
                kv_benchmark_series(l, self.n_max.min(KV_LARGE_DELTA_TERMS))
            }
            Selector::RayleighLamb => lamb_benchmark_series(self.nu, self.n_max.saturating_sub(2).min(3)),
        }
    }
}
