use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, Format, LambNormalization, Selector};
use super::CliError;
use crate::gp::{multi_run, MultiRun};
use crate::problems::{fmt_real, poisson_from_a1, poisson_from_a2, Dataset, ProblemError};
use crate::series::{
    compare_series, extract_series, lamb_a_from_fit, optimal_truncation, rrmse_surface, ExtractOptions, Extraction,
    ExtractionMethod, Series,
};

pub const DATASET_FILE: &str = "dataset.csv";
pub const PROVENANCE_FILE: &str = "dataset.provenance.toml";
pub const SERIES_BEST_FILE: &str = "series_best.csv";

fn write_file(path: &Path, content: &str) -> Result<PathBuf, CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, content).map_err(|e| CliError::io(path, e))?;
    Ok(path.to_path_buf())
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// `sha256:<hex>` of the git blob object for `content`.
pub fn content_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    format!("sha256:{}", hex::encode(h.finalize()))
}

#[derive(Debug, Serialize)]
struct Provenance {
    problem: String,
    regime: String,
    param: String,
    features: Vec<String>,
    n_rows: usize,
    range: [f64; 2],
    spacing: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    nu: Option<f64>,
    source: String,
    content_hash: String,
}

fn provenance(cfg: &ExperimentConfig, ds: &Dataset, csv: &str, source: String) -> Result<String, CliError> {
    let (lo, hi) = ds.param_range();
    let p = Provenance {
        problem: cfg.selector.problem_name().into(),
        regime: cfg.selector.regime_name().into(),
        param: ds.param_name.clone(),
        features: ds.feature_names(),
        n_rows: ds.n_rows(),
        range: [lo, hi],
        spacing: cfg.spacing.as_str().into(),
        nu: matches!(cfg.selector, Selector::RayleighLamb).then_some(cfg.nu),
        source,
        content_hash: content_hash(csv.as_bytes()),
    };
    toml::to_string(&p).map_err(|e| CliError::Config(e.to_string()))
}

/// The configured dataset: read from `cfg.dataset` or built from the problem.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<(Dataset, String), CliError> {
    match &cfg.dataset {
        Some(path) => {
            let ds = Dataset::from_csv(&read_file(path)?)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            if ds.param_name != cfg.selector.param_name() {
                return Err(CliError::Config(format!(
                    "{}: parameter '{}' does not match {} {} ('{}')",
                    path.display(),
                    ds.param_name,
                    cfg.selector.problem_name(),
                    cfg.selector.regime_name(),
                    cfg.selector.param_name()
                )));
            }
            Ok((ds, path.display().to_string()))
        }
        None => Ok((cfg.build_dataset()?, "generated".into())),
    }
}

fn write_dataset(cfg: &ExperimentConfig, ds: &Dataset, source: String) -> Result<Vec<PathBuf>, CliError> {
    let csv = ds.to_csv();
    let meta = provenance(cfg, ds, &csv, source)?;
    Ok(vec![write_file(&cfg.out.join(DATASET_FILE), &csv)?, write_file(&cfg.out.join(PROVENANCE_FILE), &meta)?])
}

/// Writes `dataset.csv` and its provenance sidecar.
pub fn cmd_generate(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let (ds, source) = load_dataset(cfg)?;
    let files = write_dataset(cfg, &ds, source)?;
    println!("wrote {} rows to {}", ds.n_rows(), files[0].display());
    Ok(files)
}

/// Bending-mode coefficients of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambRow {
    pub a1: f64,
    pub a2: f64,
    pub nu_a1: f64,
    pub nu_a2: f64,
}

fn lamb_row(a1: f64, a2: f64) -> LambRow {
    LambRow { a1, a2, nu_a1: poisson_from_a1(a1).unwrap_or(f64::NAN), nu_a2: poisson_from_a2(a2).unwrap_or(f64::NAN) }
}

/// Everything `fit` produces, for callers that want it in memory.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub dataset: Dataset,
    pub runs: MultiRun,
    pub extractions: Vec<Extraction>,
    pub benchmark: Series,
    /// Per run, then the mean row; only for the Lamb problem.
    pub lamb: Option<(Vec<LambRow>, LambRow)>,
    pub files: Vec<PathBuf>,
}

impl FitOutcome {
    pub fn best_series(&self) -> &Series {
        &self.extractions[self.runs.best_index].series
    }
}

fn method_label(m: &ExtractionMethod) -> String {
    match m {
        ExtractionMethod::Symbolic => "symbolic".into(),
        ExtractionMethod::Projection { degree, log_degree, relative_residual, .. } => {
            format!("projection(degree={degree};log_degree={log_degree};rel_residual={relative_residual:.3e})")
        }
    }
}

fn csv_safe(s: &str) -> String {
    s.replace([',', '\n'], ";")
}

/// Seeded regressions, series extraction and comparison with the benchmark.
pub fn cmd_fit(cfg: &ExperimentConfig) -> Result<FitOutcome, CliError> {
    let (ds, source) = load_dataset(cfg)?;
    let mut files = write_dataset(cfg, &ds, source)?;
    let runs = multi_run(&cfg.gp, &ds)?;
    let names = ds.feature_names();
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let opts = ExtractOptions::new(ds.param_range());
    let extractions = runs
        .runs
        .iter()
        .map(|r| extract_series(&r.best.tree, &ds.features, &ds.param_name, &opts))
        .collect::<Result<Vec<_>, _>>()?;
    let benchmark = cfg.benchmark()?;
    let out = &cfg.out;

    let mut summary = String::from(
        "run,seed,raw_fitness,penalized_fitness,length,generations_run,stop_reason,best,expression,method,warnings\n",
    );
    for (i, (r, ex)) in runs.runs.iter().zip(&extractions).enumerate() {
        let expr = r.best.tree.to_canonical_string(&name_refs);
        if cfg.writes(Format::Csv) {
            files.push(write_file(&out.join(format!("run_{}.csv", r.seed)), &r.history_csv())?);
        }
        if cfg.writes(Format::Txt) {
            files.push(write_file(&out.join(format!("best_{}.txt", r.seed)), &format!("{expr}\n"))?);
        }
        files.push(write_file(&out.join(format!("series_{}.csv", r.seed)), &ex.series.to_csv())?);
        let _ = writeln!(
            summary,
            "{i},{},{},{},{},{},{},{},{expr},{},{}",
            r.seed,
            fmt_real(r.best.raw_fitness),
            fmt_real(r.best.penalized_fitness),
            r.best.length(),
            r.generations_run,
            r.stop_reason.as_str(),
            i == runs.best_index,
            csv_safe(&method_label(&ex.method)),
            csv_safe(&ex.warnings.join(" | ")),
        );
    }
    let best_series = &extractions[runs.best_index].series;
    files.push(write_file(&out.join(SERIES_BEST_FILE), &best_series.to_csv())?);

    let up_to = cfg.n_max.max(benchmark.max_power().unwrap_or(0));
    let mut comparison = String::from("power,log_power,found,benchmark,abs_delta\n");
    for d in compare_series(best_series, &benchmark, up_to) {
        let _ = writeln!(
            comparison,
            "{},{},{},{},{}",
            d.power,
            d.log_power,
            fmt_real(d.found),
            fmt_real(d.benchmark),
            fmt_real(d.abs_delta)
        );
    }
    if cfg.writes(Format::Csv) {
        files.push(write_file(&out.join("fit_summary.csv"), &summary)?);
        files.push(write_file(&out.join("comparison.csv"), &comparison)?);
    }

    let lamb = if cfg.selector == Selector::RayleighLamb {
        let nu_known = (cfg.lamb_normalization == LambNormalization::KnownNu).then_some(cfg.nu);
        let rows: Vec<LambRow> = extractions
            .iter()
            .map(|ex| {
                lamb_a_from_fit(&ex.series, nu_known)
                    .map(|c| lamb_row(c.a1, c.a2))
                    .unwrap_or_else(|_| lamb_row(f64::NAN, f64::NAN))
            })
            .collect();
        let finite: Vec<&LambRow> = rows.iter().filter(|r| r.a1.is_finite() && r.a2.is_finite()).collect();
        let n = finite.len() as f64;
        let mean = lamb_row(finite.iter().map(|r| r.a1).sum::<f64>() / n, finite.iter().map(|r| r.a2).sum::<f64>() / n);
        let mut csv = String::from("run,A1,A2,nu_A1,nu_A2\n");
        let label = |i: usize| runs.runs[i].seed.to_string();
        for (i, r) in rows.iter().enumerate() {
            let _ = writeln!(
                csv,
                "{},{},{},{},{}",
                label(i),
                fmt_real(r.a1),
                fmt_real(r.a2),
                fmt_real(r.nu_a1),
                fmt_real(r.nu_a2)
            );
        }
        let _ = writeln!(
            csv,
            "mean,{},{},{},{}",
            fmt_real(mean.a1),
            fmt_real(mean.a2),
            fmt_real(mean.nu_a1),
            fmt_real(mean.nu_a2)
        );
        if cfg.writes(Format::Csv) {
            files.push(write_file(&out.join("lamb_coefficients.csv"), &csv)?);
        }
        Some((rows, mean))
    } else {
        None
    };

    let mut outcome = FitOutcome { dataset: ds, runs, extractions, benchmark, lamb, files };
    let report = fit_report(cfg, &outcome, &name_refs);
    if cfg.writes(Format::Txt) {
        outcome.files.push(write_file(&out.join("report.txt"), &report)?);
    }
    print!("{report}");
    Ok(outcome)
}

fn fit_report(cfg: &ExperimentConfig, o: &FitOutcome, names: &[&str]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{} {} with {} rows, {} runs from seed {}",
        cfg.selector.problem_name(),
        cfg.selector.regime_name(),
        o.dataset.n_rows(),
        o.runs.runs.len(),
        cfg.gp.seed
    );
    for (i, r) in o.runs.runs.iter().enumerate() {
        let mark = if i == o.runs.best_index { "*" } else { " " };
        let _ = writeln!(
            s,
            "{mark} seed {:>3}  raw {:.3e}  length {:>3}  {}",
            r.seed,
            r.best.raw_fitness,
            r.best.length(),
            r.best.tree.to_canonical_string(names)
        );
    }
    let _ = writeln!(s, "best series: {}", o.best_series());
    let _ = writeln!(s, "benchmark:   {}", o.benchmark);
    if let Some((rows, mean)) = &o.lamb {
        let _ = writeln!(s, "{:>6} {:>10} {:>10} {:>8} {:>8}", "run", "A1", "A2", "nu(A1)", "nu(A2)");
        for (r, run) in rows.iter().zip(&o.runs.runs) {
            let _ = writeln!(s, "{:>6} {:>10.5} {:>10.5} {:>8.4} {:>8.4}", run.seed, r.a1, r.a2, r.nu_a1, r.nu_a2);
        }
        let _ =
            writeln!(s, "{:>6} {:>10.5} {:>10.5} {:>8.4} {:>8.4}", "mean", mean.a1, mean.a2, mean.nu_a1, mean.nu_a2);
    }
    s
}

/// Paths written by [`cmd_analyze`], plus the per-parameter optimal orders.
#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub truncation: Vec<(f64, u32)>,
    pub files: Vec<PathBuf>,
}

fn load_series(cfg: &ExperimentConfig, path: &Path) -> Result<Series, CliError> {
    let text = read_file(path)?;
    let series = Series::from_csv(cfg.selector.param_name(), &text)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    if series.is_empty() {
        return Err(CliError::Usage(format!("{}: series has no terms", path.display())));
    }
    Ok(series)
}

/// Error surfaces of the benchmark (and the fitted series, when present) and
/// optimal truncation orders over the configured grid.
pub fn cmd_analyze(cfg: &ExperimentConfig) -> Result<Analysis, CliError> {
    let grid = match &cfg.dataset {
        Some(_) => load_dataset(cfg)?.0.parameter_grid,
        None => cfg.grid(),
    };
    let benchmark = cfg.benchmark()?;
    let n_bench = cfg.n_max.min(benchmark.max_power().unwrap_or(0));
    let exact = |p: f64| cfg.exact(p);
    let mut files = Vec::new();
    let surface = rrmse_surface(&benchmark, exact, &grid, n_bench)?;
    files.push(write_file(&cfg.out.join("surface_benchmark.csv"), &surface.to_csv())?);

    let mut truncation = Vec::with_capacity(grid.len());
    let mut csv = String::from("param,optimal_order\n");
    for &p in &grid {
        let n = optimal_truncation(&benchmark, exact, p, n_bench)?;
        truncation.push((p, n));
        let _ = writeln!(csv, "{},{n}", fmt_real(p));
    }
    files.push(write_file(&cfg.out.join("truncation.csv"), &csv)?);

    let sr_path = match &cfg.series {
        Some(p) => Some(p.clone()),
        None => Some(cfg.out.join(SERIES_BEST_FILE)).filter(|p| p.exists()),
    };
    if let Some(path) = sr_path {
        let sr = load_series(cfg, &path)?;
        let n_sr = sr.max_power().unwrap_or(0).min(25);
        let surface = rrmse_surface(&sr, exact, &grid, n_sr)?;
        files.push(write_file(&cfg.out.join("surface_sr.csv"), &surface.to_csv())?);
    } else {
        println!("no fitted series found; skipping surface_sr.csv");
    }
    println!("wrote {} files to {}", files.len(), cfg.out.display());
    Ok(Analysis { truncation, files })
}

/// Writes the benchmark coefficients and its partial sums on the grid.
pub fn cmd_benchmark(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let benchmark = cfg.benchmark()?;
    let n = benchmark.max_power().unwrap_or(0);
    let mut csv = String::from("param,exact");
    for k in 0..=n {
        let _ = write!(csv, ",s_{k}");
    }
    csv.push('\n');
    for p in cfg.grid() {
        csv.push_str(&fmt_real(p));
        csv.push(',');
        csv.push_str(&fmt_real(cfg.exact(p)?));
        for k in 0..=n {
            csv.push(',');
            csv.push_str(&fmt_real(benchmark.eval(p, k)?));
        }
        csv.push('\n');
    }
    let files = vec![
        write_file(&cfg.out.join("benchmark_series.csv"), &benchmark.to_csv())?,
        write_file(&cfg.out.join("benchmark.csv"), &csv)?,
    ];
    println!("benchmark: {benchmark}");
    Ok(files)
}

/// One input of the Poisson table.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonRow {
    pub coefficient: &'static str,
    pub value: f64,
    pub nu: Result<f64, ProblemError>,
}

/// ν from every A₁ and A₂ value; domain errors stay in their row.
pub fn cmd_poisson(a1: &[f64], a2: &[f64]) -> Vec<PoissonRow> {
    a1.iter()
        .map(|&v| PoissonRow { coefficient: "A1", value: v, nu: poisson_from_a1(v) })
        .chain(a2.iter().map(|&v| PoissonRow { coefficient: "A2", value: v, nu: poisson_from_a2(v) }))
        .collect()
}

/// Per-value ν plus the mean of each coefficient's valid estimates.
pub fn poisson_table(rows: &[PoissonRow]) -> String {
    let mut s = format!("{:<4} {:>10} {:>8}\n", "", "value", "nu");
    for r in rows {
        match &r.nu {
            Ok(nu) => {
                let _ = writeln!(s, "{:<4} {:>10.5} {:>8.4}", r.coefficient, r.value, nu);
            }
            Err(e) => {
                let _ = writeln!(s, "{:<4} {:>10.5} error: {e}", r.coefficient, r.value);
            }
        }
    }
    for c in ["A1", "A2"] {
        let ok: Vec<f64> = rows.iter().filter(|r| r.coefficient == c).filter_map(|r| r.nu.clone().ok()).collect();
        if !ok.is_empty() {
            let _ = writeln!(
                s,
                "mean nu({c}) = {:.4} over {} value(s)",
                ok.iter().sum::<f64>() / ok.len() as f64,
                ok.len()
            );
        }
    }
    s
}
