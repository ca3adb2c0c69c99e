//! Command implementations behind the `ampcap` binary: single solves with
//! JSON results, warm-started amplitude sweeps to CSV, bound-verification
//! reports, and plain-text plot data.
//!
//! Exit-code contract: 0 success/certified, 2 usage error, 3 uncertified
//! result, 4 failed bound check.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use ampcap_core::bounds::{self, LinkCheck};
use ampcap_core::divergence::{self, DensityPair};
use ampcap_core::mixture::{DiscreteInput, MixtureDensity};
use ampcap_core::solver::{self, SolverConfig, SolverResult, SolverResultJson};
use ampcap_core::wrapped::{self, WrapParameter, WrappedDensity};
use ampcap_core::QuadratureSpec;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_UNCERTIFIED: i32 = 3;
pub const EXIT_BOUND_FAILURE: i32 = 4;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "AMPCAP_OUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "ampcap",
    about = "Capacity-achieving input distributions for the amplitude-constrained AWGN channel",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one amplitude and write the result as JSON.
    Solve(SolveArgs),
    /// Warm-started sweep over amplitudes, written as CSV.
    Sweep(SweepArgs),
    /// Check every closed-form bound and the main inequality chain.
    Verify(VerifyArgs),
    /// Emit plain-text x/y columns for plotting.
    Plotdata(PlotdataArgs),
}

#[derive(Debug, Args)]
pub struct SolverOverrides {
    /// KKT certification tolerance in nats.
    #[arg(long = "kkt-tol")]
    pub kkt_tol: Option<f64>,
    /// Cap on the support size.
    #[arg(long = "max-support")]
    pub max_support: Option<usize>,
    /// Drop the symmetry constraint on the optimized input.
    #[arg(long = "no-symmetry", default_value_t = false)]
    pub no_symmetry: bool,
}

impl SolverOverrides {
    fn apply(&self, cfg: &mut SolverConfig) {
        if let Some(t) = self.kkt_tol {
            cfg.kkt_tol = t;
        }
        if let Some(m) = self.max_support {
            cfg.max_support = m;
        }
        if self.no_symmetry {
            cfg.enforce_symmetry = false;
        }
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Amplitude bound A.
    #[arg(long = "A", allow_hyphen_values = true)]
    pub amplitude: f64,
    #[command(flatten)]
    pub overrides: SolverOverrides,
    /// Warm-start from a previously written result file.
    #[arg(long = "warm-start")]
    pub warm_start: Option<PathBuf>,
    /// Output path for the result JSON.
    #[arg(long = "out")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long = "A-min")]
    pub a_min: Option<f64>,
    #[arg(long = "A-max")]
    pub a_max: Option<f64>,
    #[arg(long = "step")]
    pub step: Option<f64>,
    /// Comma-separated amplitudes (alternative to min/max/step).
    #[arg(long = "A-list", value_delimiter = ',')]
    pub a_list: Option<Vec<f64>>,
    #[command(flatten)]
    pub overrides: SolverOverrides,
    /// Solve rows concurrently (requires --no-warm-start).
    #[arg(long = "parallelism", default_value_t = 1)]
    pub parallelism: usize,
    /// Disable warm starting between rows.
    #[arg(long = "no-warm-start", default_value_t = false)]
    pub no_warm_start: bool,
    /// Output CSV path.
    #[arg(long = "out")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Amplitude to solve and verify.
    #[arg(long = "A", allow_hyphen_values = true)]
    pub amplitude: Option<f64>,
    /// Verify a previously written solver result instead of solving.
    #[arg(long = "from")]
    pub from: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: SolverOverrides,
    /// Output path for the report JSON.
    #[arg(long = "out")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PlotKind {
    Scaling,
    Capacity,
    Density,
}

#[derive(Debug, Args)]
pub struct PlotdataArgs {
    /// What to emit: scaling | capacity | density.
    #[arg(long = "what", value_enum)]
    pub what: PlotKind,
    /// Sweep CSV to read (scaling and capacity).
    #[arg(long = "from")]
    pub from: Option<PathBuf>,
    /// Amplitude for the density plot.
    #[arg(long = "A", allow_hyphen_values = true)]
    pub amplitude: Option<f64>,
    /// Output path (stdout when omitted).
    #[arg(long = "out")]
    pub out: Option<PathBuf>,
}

fn default_out_path(name: &str) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) => Path::new(&dir).join(name),
        None => PathBuf::from(name),
    }
}

/// Serialize through `serde_json::Value` so the object keys come out sorted;
/// repeated runs produce byte-identical files.
fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let value = serde_json::to_value(value)?;
    let mut text = serde_json::to_string_pretty(&value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn load_result(path: &Path) -> anyhow::Result<SolverResult> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let json: SolverResultJson = serde_json::from_str(&text)?;
    SolverResult::try_from(json).map_err(|e| anyhow!("invalid result file: {e}"))
}

fn human_summary(result: &SolverResult) {
    let nats = result.capacity;
    let bits = nats / std::f64::consts::LN_2;
    println!("A                 = {}", result.input.constraint().bound());
    println!("capacity          = {nats:.10} nats ({bits:.10} bits)");
    println!("support size      = {}", result.input.support_size());
    println!("kkt max violation = {:.3e}", result.kkt.max_violation);
    println!(
        "certified         = {}",
        if result.kkt.certified { "yes" } else { "no" }
    );
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

pub fn cmd_solve(args: &SolveArgs) -> anyhow::Result<i32> {
    if !(args.amplitude > 0.0) {
        eprintln!("error: A must be positive");
        return Ok(EXIT_USAGE);
    }
    let mut cfg = SolverConfig::new(args.amplitude)?;
    args.overrides.apply(&mut cfg);
    if let Some(path) = &args.warm_start {
        let seed = load_result(path)?;
        cfg.warm_start = Some(seed.input);
    }
    let result = solver::solve_capacity(&cfg)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| default_out_path(&format!("solve_A{}.json", args.amplitude)));
    write_json(&out, &SolverResultJson::from(&result))?;
    human_summary(&result);
    println!("result            -> {}", out.display());
    Ok(if result.kkt.certified {
        EXIT_OK
    } else {
        EXIT_UNCERTIFIED
    })
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

pub const SWEEP_CSV_HEADER: &str =
    "A,K,capacity_nats,capacity_lower,capacity_upper,kkt_max_violation,certified,theorem1_bound";

fn sweep_row(result: &SolverResult) -> String {
    let a = result.input.constraint().bound();
    let (lo, hi) = bounds::capacity_bounds(a);
    format!(
        "{},{},{},{},{},{},{},{}",
        a,
        result.input.support_size(),
        result.capacity,
        lo,
        hi,
        result.kkt.max_violation,
        result.kkt.certified,
        bounds::cardinality_lower_bound(a)
    )
}

fn sweep_amplitudes(args: &SweepArgs) -> anyhow::Result<Vec<f64>> {
    let values = if let Some(list) = &args.a_list {
        list.clone()
    } else {
        let (min, max, step) = match (args.a_min, args.a_max, args.step) {
            (Some(min), Some(max), Some(step)) if step > 0.0 => (min, max, step),
            _ => return Err(anyhow!("provide --A-list or --A-min/--A-max/--step")),
        };
        let mut values = Vec::new();
        let mut i = 0usize;
        loop {
            let a = min + step * i as f64;
            if a > max + 1e-12 {
                break;
            }
            values.push(a);
            i += 1;
        }
        values
    };
    if values.is_empty() {
        return Err(anyhow!("sweep amplitude list is empty"));
    }
    if values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(anyhow!("sweep amplitudes must be strictly increasing"));
    }
    if values.iter().any(|&a| a <= 0.0) {
        return Err(anyhow!("A must be positive"));
    }
    Ok(values)
}

pub fn cmd_sweep(args: &SweepArgs) -> anyhow::Result<i32> {
    let warm = !args.no_warm_start;
    if args.parallelism > 1 && warm {
        eprintln!("error: --parallelism > 1 requires --no-warm-start (warm starts are sequential)");
        return Ok(EXIT_USAGE);
    }
    let amplitudes = match sweep_amplitudes(args) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(EXIT_USAGE);
        }
    };
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| default_out_path("sweep.csv"));
    let mut file =
        fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
    writeln!(file, "{SWEEP_CSV_HEADER}")?;
    file.flush()?;

    let mut all_certified = true;
    if args.parallelism > 1 {
        let results = parallel_solves(&amplitudes, args)?;
        for result in &results {
            all_certified &= result.kkt.certified;
            writeln!(file, "{}", sweep_row(result))?;
        }
        file.flush()?;
    } else {
        let mut warm_input: Option<DiscreteInput> = None;
        for &a in &amplitudes {
            let mut cfg = SolverConfig::new(a)?;
            args.overrides.apply(&mut cfg);
            if warm {
                cfg.warm_start = warm_input.clone();
            }
            let result = solver::solve_capacity(&cfg)?;
            all_certified &= result.kkt.certified;
            // Partial results survive a later failure.
            writeln!(file, "{}", sweep_row(&result))?;
            file.flush()?;
            if warm {
                warm_input = Some(result.input.clone());
            }
        }
    }
    println!("sweep of {} amplitudes -> {}", amplitudes.len(), out.display());
    Ok(if all_certified {
        EXIT_OK
    } else {
        EXIT_UNCERTIFIED
    })
}

fn parallel_solves(amplitudes: &[f64], args: &SweepArgs) -> anyhow::Result<Vec<SolverResult>> {
    let slots: Vec<std::sync::Mutex<Option<SolverResult>>> =
        amplitudes.iter().map(|_| std::sync::Mutex::new(None)).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    let workers = args.parallelism.min(amplitudes.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= amplitudes.len() {
                    break;
                }
                let Ok(mut cfg) = SolverConfig::new(amplitudes[i]) else { break };
                args.overrides.apply(&mut cfg);
                if let Ok(result) = solver::solve_capacity(&cfg) {
                    *slots[i].lock().unwrap() = Some(result);
                }
            });
        }
    });
    slots
        .into_iter()
        .enumerate()
        .map(|(i, slot)| {
            slot.into_inner()
                .unwrap()
                .ok_or_else(|| anyhow!("solve failed at A = {}", amplitudes[i]))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

#[derive(Debug, serde::Serialize)]
pub struct VerifyReport {
    #[serde(rename = "A")]
    pub a: f64,
    pub certified: bool,
    pub bounds: bounds::BoundsReport,
    pub measured: bounds::MeasuredQuantities,
    pub chain: Option<bounds::ChainReport>,
    pub extra_checks: Vec<LinkCheck>,
    pub skipped: Vec<String>,
    pub all_pass: bool,
}

/// All bound checks for one solved instance.
pub fn verify_result(result: &SolverResult, spec: &QuadratureSpec) -> anyhow::Result<VerifyReport> {
    let a = result.input.constraint().bound();
    let k = result.input.support_size();
    let (bounds_report, measured) = bounds::bounds_report(result, spec)?;
    let mut skipped = bounds_report.skipped.clone();
    let mut extra = Vec::new();

    // Parseval consistency of the wrapped chi-squared distance.
    if k > 1 {
        let constraint = result.input.constraint();
        let order = wrapped::parseval_order(&constraint, k, 1e-12);
        let parseval = wrapped::chi2_wrapped_parseval(&result.input, &constraint, order)?;
        let wrap = WrapParameter::new(a)?;
        let wd = WrappedDensity::mixture(result.input.clone(), wrap);
        let p = |t: f64| wd.pdf(t);
        let q = |_t: f64| 1.0 / (2.0 * std::f64::consts::PI);
        let pair = DensityPair::circle(&p, &q);
        let quadrature = divergence::chi2(&pair, spec)?;
        let tol = 1e-8_f64.max(parseval.tail_bound);
        extra.push(LinkCheck {
            name: "parseval chi2 == quadrature chi2".into(),
            lhs: (parseval.value - quadrature).abs(),
            rhs: tol,
            margin: tol - (parseval.value - quadrature).abs(),
            pass: (parseval.value - quadrature).abs() <= tol,
        });
        let lower = wrapped::chi2_lower_bound(k, &constraint)?;
        let total = parseval.value + parseval.tail_bound;
        extra.push(LinkCheck {
            name: "wrapped chi2 >= mixture-approximation lower bound".into(),
            lhs: lower,
            rhs: total,
            margin: total - lower,
            pass: total >= lower,
        });
    } else {
        skipped.push("wrapped chi-squared checks require K > 1".to_string());
    }

    let chain = if k > 1 && a > 1.0 {
        Some(bounds::main_theorem_chain(result, spec)?)
    } else {
        skipped.push("main inequality chain requires A > 1 and K > 1".to_string());
        None
    };

    let all_pass = bounds_report.all_pass
        && extra.iter().all(|c| c.pass)
        && chain.as_ref().map_or(true, |c| c.all_pass);

    Ok(VerifyReport {
        a,
        certified: result.kkt.certified,
        bounds: bounds_report,
        measured,
        chain,
        extra_checks: extra,
        skipped,
        all_pass,
    })
}

fn print_check_table(report: &VerifyReport) {
    println!("{:<52} {:>14} {:>14} {:>8}", "check", "lhs", "rhs", "status");
    let mut rows: Vec<&LinkCheck> = report.bounds.checks.iter().collect();
    rows.extend(report.extra_checks.iter());
    if let Some(chain) = &report.chain {
        rows.extend(chain.links.iter());
    }
    for check in &rows {
        println!(
            "{:<52} {:>14.6e} {:>14.6e} {:>8}",
            check.name,
            check.lhs,
            check.rhs,
            if check.pass { "pass" } else { "FAIL" }
        );
    }
    for reason in &report.skipped {
        println!("{reason:<52} {:>38}", "skipped");
    }
}

fn first_failure(report: &VerifyReport) -> Option<&LinkCheck> {
    report
        .bounds
        .checks
        .iter()
        .chain(report.extra_checks.iter())
        .chain(report.chain.iter().flat_map(|c| c.links.iter()))
        .find(|c| !c.pass)
}

pub fn cmd_verify(args: &VerifyArgs) -> anyhow::Result<i32> {
    let result = match (&args.from, args.amplitude) {
        (Some(path), _) => match load_result(path) {
            Ok(r) => r,
            Err(e) => {
                // Tampered or inconsistent input counts as a failed check.
                eprintln!("error: {e}");
                return Ok(EXIT_BOUND_FAILURE);
            }
        },
        (None, Some(a)) => {
            if !(a > 0.0) {
                eprintln!("error: A must be positive");
                return Ok(EXIT_USAGE);
            }
            let mut cfg = SolverConfig::new(a)?;
            args.overrides.apply(&mut cfg);
            let result = solver::solve_capacity(&cfg)?;
            if !result.kkt.certified {
                eprintln!("error: solve at A = {a} did not certify");
                return Ok(EXIT_UNCERTIFIED);
            }
            result
        }
        (None, None) => {
            eprintln!("error: provide --A or --from");
            return Ok(EXIT_USAGE);
        }
    };

    let spec = QuadratureSpec::default();
    let report = verify_result(&result, &spec)?;
    print_check_table(&report);
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| default_out_path(&format!("verify_A{}.json", report.a)));
    write_json(&out, &report)?;
    println!("report -> {}", out.display());

    if let Some(fail) = first_failure(&report) {
        eprintln!(
            "error: bound check failed: {} (lhs = {:.9e}, rhs = {:.9e})",
            fail.name, fail.lhs, fail.rhs
        );
        return Ok(EXIT_BOUND_FAILURE);
    }
    Ok(EXIT_OK)
}

// ---------------------------------------------------------------------------
// plotdata
// ---------------------------------------------------------------------------

fn read_sweep_csv(path: &Path) -> anyhow::Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| anyhow!("empty sweep CSV"))?;
    if header != SWEEP_CSV_HEADER {
        return Err(anyhow!("unexpected sweep CSV header: {header}"));
    }
    Ok(lines
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect())
}

pub fn cmd_plotdata(args: &PlotdataArgs) -> anyhow::Result<i32> {
    let mut body = String::new();
    match args.what {
        PlotKind::Scaling | PlotKind::Capacity => {
            let Some(path) = &args.from else {
                eprintln!("error: --from <sweep.csv> is required for this plot");
                return Ok(EXIT_USAGE);
            };
            if !path.exists() {
                eprintln!("error: input file {} not found", path.display());
                return Ok(EXIT_USAGE);
            }
            for row in read_sweep_csv(path)? {
                match args.what {
                    // (A, K, theorem1_bound)
                    PlotKind::Scaling => {
                        body.push_str(&format!("{} {} {}\n", row[0], row[1], row[7]));
                    }
                    // (A, C, lower, upper)
                    PlotKind::Capacity => {
                        body.push_str(&format!("{} {} {} {}\n", row[0], row[2], row[3], row[4]));
                    }
                    PlotKind::Density => unreachable!(),
                }
            }
        }
        PlotKind::Density => {
            let Some(a) = args.amplitude else {
                eprintln!("error: --A is required for the density plot");
                return Ok(EXIT_USAGE);
            };
            if !(a > 0.0) {
                eprintln!("error: A must be positive");
                return Ok(EXIT_USAGE);
            }
            let cfg = SolverConfig::new(a)?;
            let result = solver::solve_capacity(&cfg)?;
            if !result.kkt.certified {
                eprintln!("error: solve at A = {a} did not certify");
                return Ok(EXIT_UNCERTIFIED);
            }
            let mix = MixtureDensity::new(result.input.clone());
            let n = 2001;
            let lo = -a - 4.0;
            let hi = a + 4.0;
            for i in 0..n {
                let y = lo + (hi - lo) * i as f64 / (n - 1) as f64;
                body.push_str(&format!("{} {}\n", y, mix.pdf(y)));
            }
        }
    }
    match &args.out {
        Some(path) => {
            fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
            println!("plot data -> {}", path.display());
        }
        None => print!("{body}"),
    }
    Ok(EXIT_OK)
}
