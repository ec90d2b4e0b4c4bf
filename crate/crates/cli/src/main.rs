//! `qedres`: batch runner for qED claim-distribution fits and reserving reports.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use qed_reserving::analytics::{
    ibnr_schedule, reserve_report, write_schedule_csv, ExposureProfile, QuantileMode, ReportOptions,
};
use qed_reserving::classical::{
    bornhuetter_ferguson, build_count_triangle, build_triangle, chain_ladder, frequency_severity,
    read_payments, reasonable_range, Period, Triangle,
};
use qed_reserving::data::{
    group_counted, parse_registers, read_sample_csv, validate, write_claims, write_counted_sample_csv,
    write_policies, Grid, SampleBuilder, SampleConfig, TimeUnit,
};
use qed_reserving::estimator::{fit_traced, DistributionEstimate, EstimateMetadata, FitConfig, Init};
use qed_reserving::numeric::format_significant;
use qed_reserving::simulation::{
    interval_calibration, run_accuracy_study, simulate_replication, write_replications_csv,
    SimulationConfig,
};

/// Samples up to this many rows are echoed to stdout by `estimate`.
const ECHO_LIMIT: usize = 50;

#[derive(Parser, Debug)]
#[command(name = "qedres", version, about = "Nonparametric claim-distribution fits and claims reserves")]
struct Cli {
    /// Worker threads for parallel sections (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the censored sample from the registers and fit the joint distribution
    Estimate(EstimateArgs),
    /// Premium, claims reserve, IBNR/OCR and IBNR schedule from a fitted estimate
    Reserves(ReservesArgs),
    /// Chain-ladder, Bornhuetter-Ferguson and frequency-severity reserves
    Triangle(TriangleArgs),
    /// Monte Carlo accuracy study of the IBNR estimate
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Unit {
    Day,
    Month,
}

impl From<Unit> for TimeUnit {
    fn from(u: Unit) -> Self {
        match u {
            Unit::Day => TimeUnit::Day,
            Unit::Month => TimeUnit::Month,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    /// z = Φ⁻¹((1 + p) / 2)
    TwoSided,
    /// z = Φ⁻¹(p)
    OneSided,
}

impl From<Mode> for QuantileMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::TwoSided => QuantileMode::TwoSided,
            Mode::OneSided => QuantileMode::OneSided,
        }
    }
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// Policy register CSV
    #[arg(long)]
    policies: PathBuf,
    /// Claims register CSV
    #[arg(long)]
    claims: PathBuf,
    /// Reporting date t (YYYY-MM-DD)
    #[arg(long)]
    reporting_date: NaiveDate,
    /// Exposure unit
    #[arg(long, value_enum, default_value = "day")]
    unit: Unit,
    /// Limitation period for policies without one, in days
    #[arg(long, default_value_t = 1095)]
    limitation_days: u32,
    /// Explicit claim-size edges, starting at 0 (comma separated)
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["size_min", "size_ratio"])]
    size_edges: Option<Vec<f64>>,
    /// First positive claim-size edge of the log-spaced grid
    #[arg(long, default_value_t = 5.0)]
    size_min: f64,
    /// Ratio between consecutive claim-size edges
    #[arg(long, default_value_t = 1.25)]
    size_ratio: f64,
    /// Explicit delay edges in units, starting at 0 (comma separated)
    #[arg(long, value_delimiter = ',', conflicts_with = "delay_step")]
    delay_edges: Option<Vec<u32>>,
    /// Width of the delay cells in units (default: 15 days or 1 month)
    #[arg(long)]
    delay_step: Option<u32>,
    /// Convergence tolerance on the sup-norm CDF change
    #[arg(long, default_value_t = 1e-9)]
    tolerance: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iterations: usize,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReservesArgs {
    /// Directory written by `estimate`
    #[arg(long)]
    estimate: PathBuf,
    /// Censored sample CSV (default: the one in the estimate directory)
    #[arg(long)]
    sample: Option<PathBuf>,
    /// Grid the sample was built for; must equal the estimate grid
    #[arg(long)]
    sample_grid: Option<PathBuf>,
    /// Tolerance level of the IBNR interval
    #[arg(long, default_value_t = 0.95)]
    p: f64,
    #[arg(long, value_enum, default_value = "two-sided")]
    quantile_mode: Mode,
    /// Exposure in units, overriding the count from the sample
    #[arg(long)]
    exposure: Option<u64>,
    /// Paid to date, overriding the total from the sample
    #[arg(long)]
    paid_total: Option<f64>,
    /// Schedule window edges in units, starting at 0 (comma separated)
    #[arg(long, value_delimiter = ',', conflicts_with = "schedule_step")]
    schedule_edges: Option<Vec<u32>>,
    /// Width of the schedule windows in units, up to the largest delay edge
    #[arg(long, default_value_t = 90)]
    schedule_step: u32,
    /// Output directory (default: the estimate directory)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TriangleArgs {
    /// Payments CSV (`claim_id,occurrence_date,payment_date,amount`)
    #[arg(long, conflicts_with = "triangle", required_unless_present = "triangle")]
    payments: Option<PathBuf>,
    /// Cumulative triangle CSV (origin column, then one column per age)
    #[arg(long)]
    triangle: Option<PathBuf>,
    /// Bucket length, `months:N` or `days:N`
    #[arg(long, default_value = "months:12", value_parser = parse_period)]
    period: Period,
    /// Reporting date; required with --payments
    #[arg(long, requires = "payments")]
    reporting_date: Option<NaiveDate>,
    /// A-priori ultimates per origin for Bornhuetter-Ferguson (comma separated)
    #[arg(long, value_delimiter = ',')]
    a_priori: Option<Vec<f64>>,
    /// Average claim severity for the frequency-severity method (needs --payments)
    #[arg(long, requires = "payments")]
    severity: Option<f64>,
    /// Further reserve estimates to include in the reasonable range (comma separated)
    #[arg(long, value_delimiter = ',')]
    compare: Vec<f64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// JSON configuration; missing keys take their defaults
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    n_policies: Option<usize>,
    /// Write the registers of the first N replications for inspection
    #[arg(long, default_value_t = 0)]
    emit_registers: usize,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

fn parse_period(s: &str) -> std::result::Result<Period, String> {
    let (kind, n) = s.split_once(':').ok_or_else(|| format!("expected months:N or days:N, got `{s}`"))?;
    let n: u32 = n.parse().map_err(|_| format!("invalid period length `{n}`"))?;
    if n == 0 {
        return Err("period length must be positive".into());
    }
    match kind {
        "months" => Ok(Period::Months(n)),
        "days" => Ok(Period::Days(n)),
        _ => Err(format!("unknown period kind `{kind}`")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match cli.command {
        Command::Estimate(a) => cmd_estimate(&a),
        Command::Reserves(a) => cmd_reserves(&a),
        Command::Triangle(a) => cmd_triangle(&a),
        Command::Simulate(a) => cmd_simulate(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn out_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("cannot create directory {}", path.display()))
}

/// Wall-clock facts kept apart from the primary outputs so reruns compare equal.
fn write_run_metadata(dir: &Path, command: &str) -> Result<()> {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    write_json(
        &dir.join("run_metadata.json"),
        &serde_json::json!({
            "command": command,
            "unix_time": secs,
            "version": env!("CARGO_PKG_VERSION"),
        }),
    )
}

fn money(x: f64) -> String {
    format!("{x:.2}")
}

fn prob(x: f64) -> String {
    format_significant(x, 6)
}

fn cmd_estimate(a: &EstimateArgs) -> Result<()> {
    let registers = parse_registers(&a.policies, &a.claims)?;
    let report = validate(&registers.policies, &registers.claims, a.reporting_date, a.limitation_days);
    if !report.is_valid() {
        for v in &report.violations {
            eprintln!("invalid: {v}");
        }
        bail!("{} register violation(s)", report.violations.len());
    }
    let unit = TimeUnit::from(a.unit);
    let config = SampleConfig {
        unit,
        default_limitation_days: a.limitation_days,
    };
    let builder = SampleBuilder::new(&registers.policies, &registers.claims, a.reporting_date, &config)?;
    let rows = builder.counted_observations();

    let max_amount = registers.claims.iter().map(|c| c.paid_to_date).fold(0.0, f64::max);
    let max_limit = registers
        .policies
        .iter()
        .map(|p| unit.limitation_units(p.limitation_days.unwrap_or(a.limitation_days)))
        .max()
        .unwrap_or_else(|| unit.limitation_units(a.limitation_days));
    let s_edges = match &a.size_edges {
        Some(e) => e.clone(),
        None => {
            if !(a.size_min > 0.0 && a.size_ratio > 1.0) {
                bail!("--size-min must be positive and --size-ratio above 1");
            }
            let mut e = vec![0.0, a.size_min];
            while *e.last().unwrap() <= max_amount {
                e.push(e.last().unwrap() * a.size_ratio);
            }
            e
        }
    };
    let tau_edges = match &a.delay_edges {
        Some(e) => e.clone(),
        None => {
            let step = a.delay_step.unwrap_or(match unit {
                TimeUnit::Day => 15,
                TimeUnit::Month => 1,
            });
            if step == 0 {
                bail!("--delay-step must be positive");
            }
            Grid::uniform_tau_edges(step, max_limit)
        }
    };
    let grid = Grid::new(s_edges, tau_edges)?;
    let grouped = group_counted(rows.iter().copied(), &grid)?;
    let fit_config = FitConfig {
        tolerance: a.tolerance,
        max_iterations: a.max_iterations,
        init: Init::Uniform,
    };
    let (estimate, trace) = fit_traced(&grouped, &fit_config)?;

    out_dir(&a.out)?;
    let mut w = create(&a.out.join("sample.csv"))?;
    let units = write_counted_sample_csv(&mut w, rows.iter().copied())?;
    w.flush()?;
    let mut w = create(&a.out.join("grouped.csv"))?;
    grouped.write_csv(&mut w)?;
    w.flush()?;
    write_json(&a.out.join("grid.json"), &grid)?;
    let mut w = create(&a.out.join("estimate.csv"))?;
    estimate.write_csv(&mut w)?;
    w.flush()?;
    write_json(&a.out.join("estimate.json"), &estimate.metadata())?;
    let mut w = create(&a.out.join("convergence.csv"))?;
    writeln!(w, "iteration,log_likelihood,delta,reseeded")?;
    for r in &trace {
        writeln!(w, "{},{},{},{}", r.iteration, r.log_likelihood, r.delta, r.reseeded)?;
    }
    w.flush()?;
    write_run_metadata(&a.out, "estimate")?;

    if units as usize <= ECHO_LIMIT {
        let mut stdout = std::io::stdout().lock();
        write_counted_sample_csv(&mut stdout, rows.iter().copied())?;
    }
    println!(
        "exposure units: {units}; patterns: {}; grid {}x{} + atom",
        grouped.patterns().len(),
        grid.n_s(),
        grid.n_tau()
    );
    println!(
        "iterations: {}; final delta: {:e}; converged: {}",
        estimate.iterations, estimate.final_delta, estimate.converged
    );
    if !estimate.converged {
        eprintln!(
            "warning: EM stopped after {} iterations without reaching tolerance {:e}",
            estimate.iterations, a.tolerance
        );
    }
    Ok(())
}

fn load_estimate(dir: &Path) -> Result<DistributionEstimate> {
    let meta_path = dir.join("estimate.json");
    let meta: EstimateMetadata = serde_json::from_reader(open(&meta_path)?)
        .with_context(|| format!("cannot parse {}", meta_path.display()))?;
    let csv_path = dir.join("estimate.csv");
    Ok(DistributionEstimate::read_csv(open(&csv_path)?, meta, &csv_path.display().to_string())?)
}

fn cmd_reserves(a: &ReservesArgs) -> Result<()> {
    let estimate = load_estimate(&a.estimate)?;
    let grid = estimate.grid();
    let sample_path = a.sample.clone().unwrap_or_else(|| a.estimate.join("sample.csv"));
    let sample_grid = match (&a.sample_grid, &a.sample) {
        (Some(p), _) => Some(p.clone()),
        (None, None) => Some(a.estimate.join("grid.json")).filter(|p| p.exists()),
        (None, Some(_)) => None,
    };
    if let Some(path) = sample_grid {
        let other: Grid = serde_json::from_reader(open(&path)?)
            .with_context(|| format!("cannot parse {}", path.display()))?;
        if &other != grid {
            bail!("grid of {} does not match the estimate grid", path.display());
        }
    }
    let rows = read_sample_csv(open(&sample_path)?, &sample_path.display().to_string())?;
    group_counted(rows.iter().copied(), grid)
        .with_context(|| format!("sample {} does not fit the estimate grid", sample_path.display()))?;
    let mut profile = ExposureProfile::new();
    for (obs, count) in &rows {
        profile.add(obs, *count);
    }

    let mode = QuantileMode::from(a.quantile_mode);
    let options = ReportOptions {
        p: a.p,
        quantile_mode: mode,
        exposure: a.exposure,
        paid_total: a.paid_total,
    };
    let report = reserve_report(&estimate, &profile, &options)?;
    let edges = match &a.schedule_edges {
        Some(e) => e.clone(),
        None => {
            if a.schedule_step == 0 {
                bail!("--schedule-step must be positive");
            }
            (0..=grid.max_delay()).step_by(a.schedule_step as usize).collect()
        }
    };
    let schedule = ibnr_schedule(&estimate, &profile, &edges, a.p, mode)?;

    let out = a.out.clone().unwrap_or_else(|| a.estimate.clone());
    out_dir(&out)?;
    write_json(&out.join("report.json"), &report)?;
    let mut w = create(&out.join("schedule.csv"))?;
    write_schedule_csv(&mut w, &schedule)?;
    w.flush()?;
    write_run_metadata(&out, "reserves")?;

    println!("net premium per unit     {}", money(report.net_premium_daily));
    println!("claim frequency per unit {}", prob(report.frequency_daily));
    if let Some(s) = report.average_severity {
        println!("average severity         {}", money(s));
    }
    println!("exposure                 {}", report.exposure);
    println!("paid to date             {}", money(report.paid_total));
    println!("claims reserve           {}", money(report.claims_reserve));
    println!(
        "IBNR                     {} (sd {}, {} claims)",
        money(report.ibnr_mean),
        money(report.ibnr_sd),
        format_significant(report.ibnr_expected_count, 6)
    );
    println!(
        "IBNR interval p={}       [{}, {}] z={}",
        prob(report.tolerance_p),
        money(report.ibnr_lower),
        money(report.ibnr_upper),
        prob(report.z)
    );
    println!("OCR by difference        {}", money(report.ocr_by_difference));
    println!("OCR by sum               {}", money(report.ocr_by_sum));
    println!();
    println!("{:>8} {:>8} {:>16} {:>16} {:>16} {:>12}", "t_lo", "t_hi", "lower", "mean", "upper", "claims");
    for r in &schedule {
        println!(
            "{:>8} {:>8} {:>16} {:>16} {:>16} {:>12}",
            r.window.start,
            r.window.end.map_or_else(|| "inf".to_string(), |e| e.to_string()),
            money(r.lower),
            money(r.mean),
            money(r.upper),
            format_significant(r.expected_count, 6)
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct TriangleReport {
    origins: Vec<String>,
    ages: Vec<String>,
    factors: Vec<f64>,
    tail: f64,
    latest: Vec<f64>,
    ultimates: Vec<f64>,
    chain_ladder_reserve: f64,
    bornhuetter_ferguson_reserve: Option<f64>,
    frequency_severity_reserve: Option<f64>,
    range_min: Option<f64>,
    range_max: Option<f64>,
}

fn cmd_triangle(a: &TriangleArgs) -> Result<()> {
    let mut payments = None;
    let triangle = match (&a.payments, &a.triangle) {
        (Some(path), _) => {
            let Some(t) = a.reporting_date else {
                bail!("--reporting-date is required with --payments");
            };
            let p = read_payments(open(path)?, &path.display().to_string())?;
            let tri = build_triangle(&p, a.period, t)?;
            payments = Some((p, t));
            tri
        }
        (None, Some(path)) => Triangle::read_csv(open(path)?, &path.display().to_string())?,
        (None, None) => bail!("one of --payments or --triangle is required"),
    };
    let cl = chain_ladder(&triangle)?;
    let bf = a
        .a_priori
        .as_ref()
        .map(|ap| bornhuetter_ferguson(&triangle, ap))
        .transpose()?;
    let fs = match (a.severity, &payments) {
        (Some(sev), Some((p, t))) => {
            let counts = build_count_triangle(p, a.period, *t)?;
            let paid: f64 = triangle.latest().iter().sum();
            Some(frequency_severity(&counts, sev, paid)?)
        }
        _ => None,
    };
    let mut reserves = vec![cl.reserve];
    reserves.extend(bf.as_ref().map(|b| b.reserve));
    reserves.extend(fs);
    reserves.extend(a.compare.iter().copied());
    let range = reasonable_range(&reserves);

    let report = TriangleReport {
        origins: triangle.origins().to_vec(),
        ages: triangle.ages().to_vec(),
        factors: cl.factors.clone(),
        tail: cl.tail,
        latest: cl.latest.clone(),
        ultimates: cl.ultimates.clone(),
        chain_ladder_reserve: cl.reserve,
        bornhuetter_ferguson_reserve: bf.as_ref().map(|b| b.reserve),
        frequency_severity_reserve: fs,
        range_min: range.map(|r| r.min),
        range_max: range.map(|r| r.max),
    };
    if let Some(out) = &a.out {
        out_dir(out)?;
        write_json(&out.join("report.json"), &report)?;
        let mut w = create(&out.join("triangle.csv"))?;
        triangle.write_csv(&mut w)?;
        w.flush()?;
        write_run_metadata(out, "triangle")?;
    }

    let factors: Vec<String> = cl.factor_row().iter().map(|f| format!("{f:.3}")).collect();
    println!("development factors      {}", factors.join(" "));
    println!("chain-ladder reserve     {}", money(cl.reserve));
    if let Some(b) = &bf {
        println!("Bornhuetter-Ferguson     {}", money(b.reserve));
    }
    if let Some(f) = fs {
        println!("frequency-severity       {}", money(f));
    }
    if let Some(r) = range {
        println!("reasonable range         [{}, {}]", money(r.min), money(r.max));
    }
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let mut config = match &a.config {
        Some(p) => SimulationConfig::from_json_file(p)?,
        None => SimulationConfig::default(),
    };
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if let Some(r) = a.replications {
        config.replications = r;
    }
    if let Some(n) = a.n_policies {
        config.n_policies = n;
    }
    config.validate()?;
    let result = run_accuracy_study(&config)?;
    let calibration = interval_calibration(&result, config.band_level)?;

    out_dir(&a.out)?;
    let mut w = create(&a.out.join("replications.csv"))?;
    write_replications_csv(&mut w, &result.outcomes)?;
    w.flush()?;
    write_json(
        &a.out.join("summary.json"),
        &serde_json::json!({
            "config": config,
            "ratio": result,
            "calibration": calibration,
        }),
    )?;
    for r in 0..a.emit_registers.min(config.replications) {
        let portfolio = simulate_replication(&config, r)?;
        let dir = a.out.join(format!("registers_{r:04}"));
        out_dir(&dir)?;
        let mut w = create(&dir.join("policies.csv"))?;
        write_policies(&mut w, &portfolio.policies)?;
        w.flush()?;
        let mut w = create(&dir.join("claims.csv"))?;
        write_claims(&mut w, &portfolio.claims)?;
        w.flush()?;
        write_json(
            &dir.join("truth.json"),
            &serde_json::json!({
                "reporting_date": portfolio.reporting_date,
                "unreported_total": portfolio.true_unreported_total,
                "unreported_count": portfolio.true_unreported_count,
            }),
        )?;
    }
    write_run_metadata(&a.out, "simulate")?;

    println!("policies                 {}", config.n_policies);
    println!(
        "replications             {} ({} without unreported claims, {} not converged)",
        result.replications, result.excluded, result.non_converged
    );
    println!("mean ratio               {}", prob(result.mean));
    println!("median ratio             {}", prob(result.median));
    println!("ratio variance           {}", prob(result.variance));
    println!("ratio skewness           {}", prob(result.skewness));
    println!(
        "{} ratio band          [{}, {}]",
        prob(result.band_level),
        prob(result.band_lower),
        prob(result.band_upper)
    );
    println!(
        "band widths              empirical {} analytic {} (excess {})",
        money(calibration.empirical_width),
        money(calibration.analytic_width),
        prob(calibration.excess)
    );
    println!(
        "ratio band widths        empirical {} analytic {} (excess {})",
        prob(calibration.ratio_empirical_width),
        prob(calibration.ratio_analytic_width),
        prob(calibration.ratio_excess)
    );
    Ok(())
}
