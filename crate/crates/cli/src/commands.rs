//! Command implementations: backtest, simulate, clean, kernels.

use crate::config::{self, RunConfig};
use anyhow::{bail, Context, Result};
use serde::Serialize;
use specbt_core::conditional::ConditionalConfig;
use specbt_core::error::Error as CoreError;
use specbt_core::ingestion::{self, Flag};
use specbt_core::kernels::{self, KernelMeasure};
use specbt_core::simulation::presets::{self, PaperTable};
use specbt_core::simulation::{self, PowerTable, SimulationSpec, TestDefinition};
use specbt_core::{PitSeries, TestResult};
use std::fs;
use std::path::{Path, PathBuf};

/// Fixed 17-significant-digit float formatting for CSV output.
fn fmt(x: f64) -> String {
    if x.is_nan() {
        "NA".into()
    } else {
        format!("{x:.16e}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
    Both,
}

impl std::str::FromStr for OutputFormat {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            "both" => Ok(OutputFormat::Both),
            other => bail!("unknown format {other:?} (use csv, json or both)"),
        }
    }
}

impl OutputFormat {
    fn csv(self) -> bool {
        matches!(self, OutputFormat::Csv | OutputFormat::Both)
    }
    fn json(self) -> bool {
        matches!(self, OutputFormat::Json | OutputFormat::Both)
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

// ---- backtest ----

/// One output row of the backtest command; `statistic`/`p_value` are null
/// when the test was not computable.
#[derive(Debug, Serialize)]
struct BacktestRow {
    portfolio: String,
    test_id: String,
    window: String,
    cvt: Option<String>,
    statistic: Option<f64>,
    df: Option<u32>,
    p_value: Option<f64>,
    n_used: Option<usize>,
    warnings: Vec<String>,
    /// Reason a cell is NA, e.g. a singular regressor matrix.
    na_reason: Option<String>,
}

impl BacktestRow {
    fn from_result(portfolio: &str, r: TestResult) -> Self {
        BacktestRow {
            portfolio: portfolio.into(),
            test_id: r.test_id,
            window: r.window,
            cvt: r.cvt,
            statistic: Some(r.statistic),
            df: Some(r.df),
            p_value: Some(r.p_value),
            n_used: Some(r.n_used),
            warnings: r.warnings.iter().map(|w| format!("{w:?}")).collect(),
            na_reason: None,
        }
    }

    fn not_computable(portfolio: &str, def: &TestDefinition, reason: String) -> Self {
        BacktestRow {
            portfolio: portfolio.into(),
            test_id: def.id.clone(),
            window: def.window.clone(),
            cvt: if def.cvt == "None" { None } else { Some(def.cvt.clone()) },
            statistic: None,
            df: None,
            p_value: None,
            n_used: None,
            warnings: vec![],
            na_reason: Some(reason),
        }
    }
}

pub struct BacktestArgs {
    pub inputs: Vec<PathBuf>,
    pub config: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub format: OutputFormat,
    pub level: f64,
    pub q: f64,
}

pub fn cmd_backtest(args: &BacktestArgs) -> Result<()> {
    if args.inputs.is_empty() {
        bail!("backtest needs at least one --input file");
    }
    let cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let q = cfg.q.unwrap_or(args.q);
    let tests: Vec<TestDefinition> = if cfg.tests.is_empty() {
        config::default_backtest_tests()?
    } else {
        cfg.tests.iter().map(|t| t.build()).collect::<Result<_>>()?
    };
    ensure_dir(&args.output_dir)?;

    let mut all_rows: Vec<BacktestRow> = Vec::new();
    for input in &args.inputs {
        let portfolio = input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "portfolio".into());
        let mut records = ingestion::load_csv(input)?;
        let (flags, report) = ingestion::detect_spurious(&records, q)?;
        ingestion::apply_flags(&mut records, &flags);
        let series = ingestion::impute(&records, report.theta_hat);

        for def in &tests {
            match simulation::run_definition(def, &series, ConditionalConfig::default()) {
                Ok(result) => all_rows.push(BacktestRow::from_result(&portfolio, result)),
                Err(
                    e @ (CoreError::SingularH(_)
                    | CoreError::SingularCovariance(_)
                    | CoreError::OptimizationFailure(_)
                    | CoreError::InsufficientData { .. }),
                ) => all_rows.push(BacktestRow::not_computable(&portfolio, def, e.to_string())),
                Err(e) => return Err(e.into()),
            }
        }
        write_edf_data(&args.output_dir, &portfolio, &series, &tests)?;
    }

    if args.format.csv() {
        let mut out = String::from(
            "portfolio,test_id,window,cvt,statistic,df,p_value,n_used,warnings,na_reason\n",
        );
        for r in &all_rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.portfolio,
                r.test_id,
                csv_quote(&r.window),
                r.cvt.clone().unwrap_or_default(),
                r.statistic.map_or("NA".into(), fmt),
                r.df.map_or("NA".into(), |d| d.to_string()),
                r.p_value.map_or("NA".into(), fmt),
                r.n_used.map_or("NA".into(), |n| n.to_string()),
                r.warnings.join(";"),
                csv_quote(r.na_reason.as_deref().unwrap_or("")),
            ));
        }
        fs::write(args.output_dir.join("backtest.csv"), out)?;
    }
    if args.format.json() {
        let json = serde_json::to_string_pretty(&all_rows)?;
        fs::write(args.output_dir.join("backtest.json"), json)?;
    }
    let na = all_rows.iter().filter(|r| r.na_reason.is_some()).count();
    let rejections = all_rows
        .iter()
        .filter(|r| r.p_value.is_some_and(|p| p < args.level))
        .count();
    println!(
        "backtest: {} rows ({} rejected at the {}% level, {} not computable) -> {}",
        all_rows.len(),
        rejections,
        100.0 * args.level,
        na,
        args.output_dir.display()
    );
    Ok(())
}

fn csv_quote(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Empirical distribution function points restricted to each test window:
/// the plotting data for comparing the sample against the uniform cdf.
fn write_edf_data(
    dir: &Path,
    portfolio: &str,
    series: &PitSeries,
    tests: &[TestDefinition],
) -> Result<()> {
    let mut values: Vec<f64> = series.present().collect();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len() as f64;
    if values.is_empty() {
        return Ok(());
    }
    let edf = |u: f64| values.partition_point(|&p| p <= u) as f64 / n;
    let mut windows: Vec<String> = tests.iter().map(|t| t.window.clone()).collect();
    windows.sort();
    windows.dedup();
    let mut out = String::from("window,u,edf\n");
    for wname in &windows {
        let (a1, a2) = match wname.as_str() {
            "narrow" => presets::NARROW,
            "wide" => presets::WIDE,
            _ => (0.0, 1.0),
        };
        out.push_str(&format!("{wname},{},{}\n", fmt(a1), fmt(edf(a1))));
        for &p in values.iter().filter(|&&p| p > a1 && p < a2) {
            out.push_str(&format!("{wname},{},{}\n", fmt(p), fmt(edf(p))));
        }
        out.push_str(&format!("{wname},{},{}\n", fmt(a2), fmt(edf(a2))));
    }
    fs::write(dir.join(format!("edf_{portfolio}.csv")), out)?;
    Ok(())
}

// ---- simulate ----

pub struct SimulateArgs {
    pub config: Option<PathBuf>,
    pub paper_table: Option<String>,
    pub reps: u64,
    pub seed: u64,
    pub n: Option<usize>,
    pub level: f64,
    pub workers: Option<usize>,
    pub output_dir: PathBuf,
    pub format: OutputFormat,
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let specs: Vec<SimulationSpec> = if let Some(table) = &args.paper_table {
        let table: PaperTable = table.parse()?;
        presets::build(table, args.reps, args.seed, args.n, args.workers)?
    } else {
        let path = args
            .config
            .as_ref()
            .context("simulate needs --config or --paper-table")?;
        let cfg = RunConfig::load(path)?;
        if cfg.dgps.is_empty() || cfg.tests.is_empty() {
            bail!("simulate config needs both dgps and tests");
        }
        let dgps = cfg.dgps.iter().map(|d| d.to_core()).collect::<Result<Vec<_>>>()?;
        let tests = cfg.tests.iter().map(|t| t.build()).collect::<Result<Vec<_>>>()?;
        vec![SimulationSpec {
            n: args.n.or(cfg.n).unwrap_or(presets::DEFAULT_N),
            reps: cfg.reps.unwrap_or(args.reps),
            seed: cfg.seed.unwrap_or(args.seed),
            level: cfg.level.unwrap_or(args.level),
            dgps,
            tests,
            workers: args.workers,
        }]
    };

    ensure_dir(&args.output_dir)?;
    let mut merged: Option<PowerTable> = None;
    for spec in &specs {
        let table = simulation::run_size_power(spec)?;
        match &mut merged {
            None => merged = Some(table),
            Some(m) => m.rows.extend(table.rows),
        }
    }
    let table = merged.expect("at least one spec");
    write_power_table(&args.output_dir, &table, args.format)?;
    print_power_table(&table);
    Ok(())
}

fn write_power_table(dir: &Path, table: &PowerTable, format: OutputFormat) -> Result<()> {
    if format.csv() {
        let mut out = String::from("dgp,test,window,cvt,n,reps,rejections,failures,estimate,se\n");
        for r in &table.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                csv_quote(&r.dgp),
                r.test,
                r.window,
                r.cvt,
                r.n,
                r.reps,
                r.rejections,
                r.failures,
                fmt(r.estimate),
                fmt(r.se),
            ));
        }
        fs::write(dir.join("power_table.csv"), out)?;
    }
    if format.json() {
        fs::write(dir.join("power_table.json"), serde_json::to_string_pretty(table)?)?;
    }
    Ok(())
}

fn print_power_table(table: &PowerTable) {
    println!(
        "size/power at the {}% level, {} replications, seed {}",
        100.0 * table.level,
        table.reps,
        table.seed
    );
    println!("{:<24} {:<6} {:<8} {:<8} {:>5} {:>9} {:>7}", "dgp", "test", "window", "cvt", "n", "estimate", "se");
    for r in &table.rows {
        println!(
            "{:<24} {:<6} {:<8} {:<8} {:>5} {:>8.2}% {:>6.2}",
            r.dgp, r.test, r.window, r.cvt, r.n, r.estimate, r.se
        );
    }
}

// ---- clean ----

pub struct CleanArgs {
    pub input: PathBuf,
    pub q: f64,
    pub output_dir: PathBuf,
}

pub fn cmd_clean(args: &CleanArgs) -> Result<()> {
    let mut records = ingestion::load_csv(&args.input)?;
    let (flags, report) = ingestion::detect_spurious(&records, args.q)?;
    ingestion::apply_flags(&mut records, &flags);
    ensure_dir(&args.output_dir)?;

    let mut out = String::from("date,pit,loss,var99,flag,imputed_pit\n");
    for r in &records {
        let imputed = report.theta_hat.and_then(|theta| ingestion::imputed_value(r, theta));
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.date.format("%Y-%m-%d"),
            r.pit.map_or(String::new(), fmt),
            r.loss.map_or(String::new(), fmt),
            r.var99.map_or(String::new(), fmt),
            match r.flag {
                Flag::Valid => "valid",
                Flag::Missing => "missing",
                Flag::Spurious => "spurious",
            },
            imputed.map_or(String::new(), fmt),
        ));
    }
    let stem = args
        .input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "input".into());
    fs::write(args.output_dir.join(format!("{stem}_clean.csv")), out)?;
    fs::write(
        args.output_dir.join(format!("{stem}_clean_report.json")),
        serde_json::to_string_pretty(&report)?,
    )?;
    println!(
        "clean: {} records, {} valid / {} missing / {} spurious (q = {:e})",
        report.n_records, report.n_valid, report.n_missing, report.n_spurious, report.tolerance
    );
    Ok(())
}

// ---- kernels ----

pub struct KernelsArgs {
    pub config: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

pub fn cmd_kernels(args: &KernelsArgs) -> Result<()> {
    let kernel_list: Vec<KernelMeasure> = match &args.config {
        Some(path) => {
            let cfg = RunConfig::load(path)?;
            if cfg.kernels.is_empty() {
                bail!("kernels config has no kernel entries");
            }
            let mut v = Vec::new();
            for k in &cfg.kernels {
                v.extend(k.build()?);
            }
            v
        }
        None => default_kernel_listing()?,
    };

    let mut moments = Vec::new();
    for k in &kernel_list {
        let mu = kernels::mean_w(k);
        let m2 = kernels::second_moment(k)?;
        moments.push((k.label().to_string(), k.support(), mu, m2 - mu * mu));
    }
    println!("{:<12} {:<22} {:>22} {:>22}", "kernel", "support", "mu_W", "sigma2_W");
    for (label, support, mu, var) in &moments {
        println!(
            "{:<12} [{:.6}, {:.6}] {:>22.16e} {:>22.16e}",
            label, support.0, support.1, mu, var
        );
    }
    // The joint covariance is only meaningful for an explicitly chosen set;
    // the default listing mixes windows and contains collinear families.
    if args.config.is_some() {
        let moment_set = kernels::cov_matrix(&kernel_list)?;
        if moment_set.singular() {
            eprintln!(
                "warning: covariance matrix of the kernel set is singular \
                 (condition number {:.2e}); joint tests with this set are undefined",
                moment_set.condition()
            );
        }
        println!("\ncovariance matrix:");
        for i in 0..kernel_list.len() {
            let row: Vec<String> = (0..kernel_list.len())
                .map(|j| format!("{:>12.5e}", moment_set.cov[(i, j)]))
                .collect();
            println!("  {}", row.join(" "));
        }
    }

    if let Some(dir) = &args.output_dir {
        ensure_dir(dir)?;
        let mut out = String::from("kernel,u,G\n");
        for k in &kernel_list {
            for i in 0..=100 {
                let u = i as f64 / 100.0;
                out.push_str(&format!("{},{},{}\n", k.label(), fmt(u), fmt(k.eval_g(u))));
            }
        }
        fs::write(dir.join("kernel_g_samples.csv"), out)?;
        #[derive(Serialize)]
        struct MomentOut {
            label: String,
            support: (f64, f64),
            mu: f64,
            sigma2: f64,
        }
        let json: Vec<MomentOut> = moments
            .iter()
            .map(|(label, support, mu, var)| MomentOut {
                label: label.clone(),
                support: *support,
                mu: *mu,
                sigma2: *var,
            })
            .collect();
        fs::write(dir.join("kernel_moments.json"), serde_json::to_string_pretty(&json)?)?;
    }
    Ok(())
}

fn default_kernel_listing() -> Result<Vec<KernelMeasure>> {
    let mut v = vec![KernelMeasure::dirac(0.99, 1.0)?];
    for window in [presets::NARROW, presets::WIDE] {
        v.push(KernelMeasure::zu3(window)?);
        v.push(KernelMeasure::zu(window, true)?);
        v.push(KernelMeasure::za(window, true)?);
        v.push(KernelMeasure::ze(window, true)?);
        v.push(KernelMeasure::zl_plus(window, true)?);
        v.push(KernelMeasure::zl_minus(window, true)?);
    }
    Ok(v)
}
