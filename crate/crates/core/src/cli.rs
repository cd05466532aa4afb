//! Command-line front end.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::analysis::{
    assemble_budget, fit_a_m1, fit_rb_decay, render_budget_table, table_one_rows, to_decibels, wilson_interval,
    BudgetRow, M1Fit, ScanPoint,
};
use crate::atomic::RepumpScheme;
use crate::config::RunConfig;
use crate::dynamics::{shelving_error_analytic, shelving_error_asymptote, shelving_error_transient};
use crate::error::{Error, Result};
use crate::io::{self, ArtifactSet, Manifest, ScanRow};
use crate::photon::{
    choose_detection_threshold, choose_doppler_threshold, write_histograms_csv, Histogram, Thresholds,
};
use crate::protocol::{
    freeze_thresholds, run_calibration, run_randomized_benchmarking, run_shelving_scan, run_spam_campaign,
    run_two_ion_discrimination, CampaignSummary,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;
pub const EXIT_SELFTEST: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "shelving", version, about = "Electron-shelving SPAM simulator for 171Yb+ qubits")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML run configuration; omitted keys take built-in defaults.
    #[arg(long, global = true, env = "SHELVING_CONFIG")]
    pub config: Option<PathBuf>,
    /// Base seed.
    #[arg(long, global = true, env = "SHELVING_SEED")]
    pub seed: Option<u64>,
    /// Sample size: shots per state (spam), shots per point (scan),
    /// sequences per length (rb) or detection bins (two-ion).
    #[arg(long, global = true, env = "SHELVING_N")]
    pub n: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "SHELVING_OUT")]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 or unset uses all cores. Does not affect results.
    #[arg(long, global = true, env = "SHELVING_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Blinded SPAM campaign: calibrate, freeze thresholds, run, report.
    Spam,
    /// Shelving error versus illumination time with the closed-form overlay.
    Scan,
    /// Fit A_M1 to a scan table.
    Fit {
        /// CSV with columns time,errors,trials (and optionally scheme).
        #[arg(long)]
        scan: PathBuf,
    },
    /// Randomized benchmarking and decay fit.
    Rb,
    /// Assemble an error budget.
    Budget {
        /// JSON array of budget rows; defaults to the config rows or the built-in table.
        #[arg(long)]
        components: Option<PathBuf>,
    },
    /// Two-ion S/F discrimination from binned count streams.
    TwoIon,
    /// Fast internal consistency checks.
    Selftest,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Spam => "spam",
            Command::Scan => "scan",
            Command::Fit { .. } => "fit",
            Command::Rb => "rb",
            Command::Budget { .. } => "budget",
            Command::TwoIon => "two-ion",
            Command::Selftest => "selftest",
        }
    }
}

/// Loads the config and applies command-line overrides.
pub fn resolve_config(global: &GlobalArgs, command: &Command) -> Result<RunConfig> {
    let mut cfg = match &global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = global.seed {
        cfg.seed = s;
    }
    if let Some(n) = global.n {
        match command {
            Command::Spam => cfg.n_per_state = n,
            Command::Scan => cfg.scan.n_per_point = n,
            Command::Rb => cfg.rb.n_seqs = n,
            Command::TwoIon => cfg.two_ion.detection_bins = n,
            _ => {}
        }
    }
    if global.out.is_some() {
        cfg.out = global.out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                EXIT_CONFIG
            } else {
                EXIT_RUNTIME
            }
        }
    }
}

pub fn run(cli: &Cli) -> Result<i32> {
    let cfg = resolve_config(&cli.global, &cli.command)?;
    let threads = cli.global.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        if let Command::Selftest = cli.command {
            let (ok, text) = selftest();
            print!("{text}");
            return Ok(if ok { EXIT_OK } else { EXIT_SELFTEST });
        }
        let (set, summary) = execute(&cli.command, &cfg)?;
        let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out").join(cli.command.name()));
        set.write_all(&dir)?;
        print!("{summary}");
        println!("artifacts written to {}", dir.display());
        Ok(EXIT_OK)
    })
}

fn json<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut b = serde_json::to_vec_pretty(v)?;
    b.push(b'\n');
    Ok(b)
}

/// Runs `command` and returns its artifacts plus a human-readable summary.
/// Nothing touches the filesystem except reading declared inputs.
pub fn execute(command: &Command, cfg: &RunConfig) -> Result<(ArtifactSet, String)> {
    let mut set = ArtifactSet::default();
    let mut inputs = Vec::new();
    let resolved = cfg.to_toml()?;
    set.add("resolved.toml", resolved.clone().into_bytes());
    let summary = match command {
        Command::Spam => cmd_spam(cfg, &mut set)?,
        Command::Scan => cmd_scan(cfg, &mut set)?,
        Command::Fit { scan } => {
            let bytes = std::fs::read(scan).map_err(|e| Error::Parse { path: scan.clone(), message: e.to_string() })?;
            inputs.push(io::digest("scan", &bytes));
            cmd_fit(cfg, &bytes, scan, &mut set)?
        }
        Command::Rb => cmd_rb(cfg, &mut set)?,
        Command::Budget { components } => {
            let rows = match components {
                Some(p) => {
                    let bytes =
                        std::fs::read(p).map_err(|e| Error::Parse { path: p.clone(), message: e.to_string() })?;
                    inputs.push(io::digest("components", &bytes));
                    serde_json::from_slice::<Vec<BudgetRow>>(&bytes)
                        .map_err(|e| Error::Parse { path: p.clone(), message: e.to_string() })?
                }
                None if !cfg.budget.rows.is_empty() => cfg.budget.rows.clone(),
                None => table_one_rows(),
            };
            cmd_budget(rows, &mut set)?
        }
        Command::TwoIon => cmd_two_ion(cfg, &mut set)?,
        Command::Selftest => selftest().1,
    };
    let manifest = Manifest {
        tool: "shelving".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.name().into(),
        seed: cfg.seed,
        config: resolved,
        inputs,
        artifacts: set.digests(),
    };
    set.add("manifest.json", json(&manifest)?);
    Ok((set, summary))
}

fn histograms_csv(h: &[Histogram]) -> Result<Vec<u8>> {
    let mut b = Vec::new();
    write_histograms_csv(&mut b, h)?;
    Ok(b)
}

fn fmt_estimate(label: &str, k: u64, n: u64, p: f64, lo: f64, hi: f64) -> String {
    format!("{label:<28} {k:>6} / {n:<8} = {:.3e}  [{:.3e}, {:.3e}]  ({:.1} dB)\n", p, lo, hi, to_decibels(p))
}

#[derive(Serialize)]
struct SpamReport<'a> {
    n_per_state: u64,
    seed: u64,
    calibration_seed: u64,
    thresholds: &'a crate::protocol::FrozenThresholds,
    summary: &'a CampaignSummary,
}

fn cmd_spam(cfg: &RunConfig, set: &mut ArtifactSet) -> Result<String> {
    let app = cfg.apparatus();
    let params = cfg.protocol;
    let cal_seed = cfg.calibration_seed();
    let cal = run_calibration(&app, &params, cfg.calibration.n_per_state, cal_seed)?;
    let frozen = freeze_thresholds(&cal, cfg.calibration.detect_bound, cfg.calibration.doppler_bound)?;
    let records = run_spam_campaign(&app, &params, &frozen, cfg.n_per_state, cfg.seed)?;
    let summary = CampaignSummary::from_records(&records, cfg.z)?;

    let mut zero = Histogram::new("detect_zero");
    let mut one = Histogram::new("detect_one");
    let mut pre = Histogram::new("pre_doppler");
    let mut post = Histogram::new("post_doppler");
    for r in &records {
        match r.prepared {
            crate::protocol::Qubit::Zero => zero.add(r.detect_counts, 1),
            crate::protocol::Qubit::One => one.add(r.detect_counts, 1),
        }
        pre.add(r.pre_doppler_counts, 1);
        post.add(r.post_doppler_counts, 1);
    }

    let mut rec_csv = Vec::new();
    io::write_records_csv(&mut rec_csv, &records)?;
    let mut rec_jsonl = Vec::new();
    io::write_records_jsonl(&mut rec_jsonl, &records)?;

    let th = frozen.thresholds;
    let mut text = String::new();
    let _ = writeln!(text, "SPAM campaign: {} shots per state, seed {}", cfg.n_per_state, cfg.seed);
    let _ = writeln!(
        text,
        "frozen thresholds: detect >= {} reads |0>, Doppler < {} flags storage (sha256 {})",
        th.detect_cutoff,
        th.doppler_cutoff,
        &frozen.sha256[..16]
    );
    let s = &summary;
    for (name, st) in [("|0>", &s.zero), ("|1>", &s.one)] {
        let i = &st.inaccuracy;
        text += &fmt_estimate(&format!("{name} inaccuracy"), i.k, i.n, i.p_hat, i.ci_low, i.ci_high);
        let _ = writeln!(text, "{:<28} flagged {} restarts {}", "", st.flagged, st.restarts);
    }
    let a = &s.avg_inaccuracy;
    text += &fmt_estimate("average inaccuracy", a.k, a.n, a.p_hat, a.ci_low, a.ci_high);
    let f = &s.avg_infidelity;
    text += &fmt_estimate("average infidelity", f.k, f.n, f.p_hat, f.ci_low, f.ci_high);

    let report = SpamReport {
        n_per_state: cfg.n_per_state,
        seed: cfg.seed,
        calibration_seed: cal_seed,
        thresholds: &frozen,
        summary: &summary,
    };
    set.add("thresholds.json", json(&frozen)?);
    set.add("calibration_histograms.csv", histograms_csv(&[cal.zero, cal.one, cal.doppler])?);
    set.add("histograms.csv", histograms_csv(&[zero, one, pre, post])?);
    set.add("records.csv", rec_csv);
    set.add("records.jsonl", rec_jsonl);
    set.add("report.json", json(&report)?);
    set.add("report.txt", text.clone().into_bytes());
    Ok(text)
}

/// Scan table rows for one scheme.
pub fn scan_rows(cfg: &RunConfig, scheme: RepumpScheme, seed: u64) -> Result<Vec<ScanRow>> {
    let app = cfg.apparatus();
    let th = Thresholds::from_model(&app.counts)?;
    let pts = run_shelving_scan(&app, scheme, &th, &cfg.scan.times, cfg.scan.n_per_point, seed)?;
    let c = app.constants;
    pts.iter()
        .map(|p| {
            let w = wilson_interval(p.errors, p.trials, cfg.z)?;
            let asym = match scheme {
                RepumpScheme::Nm935 => shelving_error_asymptote(&c),
                RepumpScheme::Nm861 => 0.0,
            };
            let tr = shelving_error_transient(p.time, &c);
            Ok(ScanRow {
                scheme,
                time: p.time,
                errors: p.errors,
                trials: p.trials,
                error_rate: w.p_hat,
                ci_low: w.ci_low,
                ci_high: w.ci_high,
                model: asym + tr,
                model_asymptote: asym,
                model_transient: tr,
            })
        })
        .collect()
}

fn cmd_scan(cfg: &RunConfig, set: &mut ArtifactSet) -> Result<String> {
    let stride = cfg.scan.times.len() as u64 * cfg.scan.n_per_point;
    let mut rows = Vec::new();
    for (k, &scheme) in cfg.scan.schemes.iter().enumerate() {
        rows.extend(scan_rows(cfg, scheme, cfg.seed.wrapping_add(k as u64 * stride))?);
    }
    let mut b = Vec::new();
    io::write_scan_csv(&mut b, &rows)?;
    set.add("scan.csv", b);
    let mut text = String::from("scheme  time_s   errors/trials        rate        model\n");
    for r in &rows {
        let _ = writeln!(
            text,
            "{:<7} {:<8.3} {:>8}/{:<10} {:>10.3e}  {:>10.3e}",
            r.scheme, r.time, r.errors, r.trials, r.error_rate, r.model
        );
    }
    Ok(text)
}

#[derive(Serialize)]
struct FitReport {
    scheme: RepumpScheme,
    points: Vec<ScanPoint>,
    z: f64,
    fit: M1Fit,
    a_m1_mhz: f64,
    low_mhz: f64,
    high_mhz: f64,
}

fn cmd_fit(cfg: &RunConfig, bytes: &[u8], path: &Path, set: &mut ArtifactSet) -> Result<String> {
    let rows =
        io::read_scan_csv(bytes).map_err(|e| Error::Parse { path: path.to_path_buf(), message: e.to_string() })?;
    let scheme = cfg.fit.scheme;
    let points: Vec<ScanPoint> = rows
        .iter()
        .filter(|r| r.scheme.is_none_or(|s| s == scheme))
        .map(|r| ScanPoint { time: r.time, errors: r.errors, trials: r.trials })
        .collect();
    let c = cfg.apparatus().constants;
    let z = cfg.fit.z;
    let fit = fit_a_m1(&points, &c, &cfg.constants.uncertainties(), z * z / 2.0)?;
    let report = FitReport {
        scheme,
        points,
        z,
        fit,
        a_m1_mhz: M1Fit::to_mhz(fit.a_m1),
        low_mhz: M1Fit::to_mhz(fit.low),
        high_mhz: M1Fit::to_mhz(fit.high),
    };
    let mut text = String::new();
    if fit.upper_limit_only {
        let _ = writeln!(text, "A_M1 < 2pi x {:.3} mHz ({z}-sigma upper limit)", report.high_mhz);
    } else {
        let _ = writeln!(
            text,
            "A_M1 = 2pi x {:.3} +{:.3}/-{:.3} mHz ({z}-sigma, statistics and constants combined)",
            report.a_m1_mhz,
            report.high_mhz - report.a_m1_mhz,
            report.a_m1_mhz - report.low_mhz
        );
    }
    let _ = writeln!(text, "implied asymptotic shelving error {:.3e}", c.tau_d * fit.a_m1 / (3.0 * c.zeta));
    set.add("fit.json", json(&report)?);
    set.add("fit.txt", text.clone().into_bytes());
    Ok(text)
}

fn cmd_rb(cfg: &RunConfig, set: &mut ArtifactSet) -> Result<String> {
    let res = run_randomized_benchmarking(&cfg.rb.params(), cfg.seed)?;
    let fit = fit_rb_decay(&res.points, cfg.rb.asymptote)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in &res.points {
        w.serialize(p)?;
    }
    let b = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    set.add("rb.csv", b);
    #[derive(Serialize)]
    struct Report<'a> {
        eps_injected: f64,
        asymptote: Option<f64>,
        points: &'a [crate::analysis::RbPoint],
        fit: crate::analysis::RbFit,
        eps_db: f64,
    }
    let report = Report {
        eps_injected: cfg.rb.eps_per_gate,
        asymptote: cfg.rb.asymptote,
        points: &res.points,
        fit,
        eps_db: to_decibels(fit.eps),
    };
    set.add("rb_fit.json", json(&report)?);
    let mut text = String::new();
    for p in &res.points {
        let _ = writeln!(text, "m = {:<5} survival {:.6}", p.length, p.survival);
    }
    let _ = writeln!(
        text,
        "eps per gate = {:.3e} [{:.3e}, {:.3e}] ({:.1} dB){}",
        fit.eps,
        fit.eps_low,
        fit.eps_high,
        to_decibels(fit.eps),
        if fit.degenerate { "  (degenerate fit)" } else { "" }
    );
    set.add("rb.txt", text.clone().into_bytes());
    Ok(text)
}

fn cmd_budget(rows: Vec<BudgetRow>, set: &mut ArtifactSet) -> Result<String> {
    let b = assemble_budget(rows)?;
    let text = render_budget_table(&b);
    set.add("budget.json", json(&b)?);
    set.add("budget.txt", text.clone().into_bytes());
    Ok(text)
}

fn cmd_two_ion(cfg: &RunConfig, set: &mut ArtifactSet) -> Result<String> {
    let r = run_two_ion_discrimination(&cfg.counts, &cfg.two_ion, cfg.seed)?;
    set.add("two_ion.json", json(&r)?);
    let mut text = String::new();
    let _ = writeln!(
        text,
        "levels {:.1} / {:.1} counts per bin, threshold {} (expected error {:.2e} per bin)",
        r.one_bright_mean, r.two_bright_mean, r.threshold, r.expected_error
    );
    let e = &r.error_rate;
    text += &fmt_estimate("S/F misclassification", e.k, e.n, e.p_hat, e.ci_low, e.ci_high);
    let _ = writeln!(
        text,
        "vetoed {} of {} detection bins; storage-corrupted {} (vetoed {}, misread {})",
        r.vetoed, r.detection_bins, r.corrupted, r.corrupted_vetoed, r.corrupted_misclassified
    );
    set.add("two_ion.txt", text.clone().into_bytes());
    Ok(text)
}

/// Instant checks of closed-form results. Returns (all passed, report).
pub fn selftest() -> (bool, String) {
    let c = crate::atomic::AtomicConstants::default();
    let mut checks: Vec<(&str, bool)> = Vec::new();
    let asym = shelving_error_analytic(10.0, &c).unwrap_or(f64::NAN);
    checks.push(("asymptotic shelving error 8.2e-5 within 2%", (asym / 8.2e-5 - 1.0).abs() < 0.02));
    let tr = shelving_error_transient(0.2, &c);
    checks.push(("finite-shelving term 6e-6 within 10% at 200 ms", (tr / 6e-6 - 1.0).abs() < 0.10));
    let b = assemble_budget(table_one_rows());
    checks.push((
        "budget average inaccuracy rounds to 0.9e-4",
        b.as_ref().map(|b| format!("{:.1}", b.predicted_avg_inaccuracy * 1e4) == "0.9").unwrap_or(false),
    ));
    checks.push(("detection threshold (0.1, 1e-7) = 5", choose_detection_threshold(0.1, 1e-7).ok() == Some(5)));
    checks.push(("detection threshold (0, 1e-7) = 1", choose_detection_threshold(0.0, 1e-7).ok() == Some(1)));
    checks.push(("Doppler threshold (100, 1e-6) = 56", choose_doppler_threshold(100.0, 1e-6).ok() == Some(56)));
    let w = wilson_interval(0, 100, 1.0);
    checks.push((
        "Wilson k=0 n=100 upper 0.0099",
        w.map(|w| w.ci_low == 0.0 && (w.ci_high - 0.0099).abs() < 1e-4).unwrap_or(false),
    ));
    let mut ok = true;
    let mut text = String::new();
    for (name, pass) in checks {
        ok &= pass;
        let _ = writeln!(text, "{} {name}", if pass { "PASS" } else { "FAIL" });
    }
    (ok, text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selftest_passes() {
        let (ok, text) = selftest();
        assert!(ok, "{text}");
    }

    #[test]
    fn n_override_targets_the_command() {
        let g = GlobalArgs { config: None, seed: Some(9), n: Some(77), out: None, threads: None };
        assert_eq!(resolve_config(&g, &Command::Spam).unwrap().n_per_state, 77);
        assert_eq!(resolve_config(&g, &Command::Scan).unwrap().scan.n_per_point, 77);
        assert_eq!(resolve_config(&g, &Command::TwoIon).unwrap().two_ion.detection_bins, 77);
        assert_eq!(resolve_config(&g, &Command::Rb).unwrap().seed, 9);
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(main_with_args(["shelving", "nonsense"]), EXIT_CONFIG);
        assert_eq!(main_with_args(["shelving", "spam", "--seed", "x"]), EXIT_CONFIG);
    }
}
