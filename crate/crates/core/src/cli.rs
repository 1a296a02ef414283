//! The `subdiv` command line.
//!
//! Exit codes: 0 success or certified, 2 I/O or parse failure, 3 failed
//! precondition, 4 inconclusive within the scanned window.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::catalog::{self, EpsSequence};
use crate::error::Error;
use crate::mask::DEFAULT_TOL;
use crate::operator::{condition_a_scan, SearchParams, Window};
use crate::refine::{decay_report, delta_padding, limit_sample, trace, DecayReport, RefinementState};
use crate::scheme::{
    boundedness_estimate, certify_stationary, certify_theorem4, load_scheme_file, similarity_report,
    CertifyOptions, ConvergenceCertificate, LevelRange, LoadError, SchemeSpec,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 2;
pub const EXIT_PRECONDITION: i32 = 3;
pub const EXIT_INCONCLUSIVE: i32 = 4;

/// Alpha values of the de Rham figure, top curve first.
pub const FIGURE1_ALPHAS: [f64; 5] = [2.5, 1.5, 0.5, -0.5, -1.5];
/// Iteration counts of the perturbed Chaikin figure.
pub const FIGURE2_ITERATIONS: [u32; 3] = [8, 12, 16];

#[derive(Debug, Parser)]
#[command(name = "subdiv", version, about = "Convergence analysis of binary non-stationary subdivision schemes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-level constant reproduction, difference masks, norms and the contraction search.
    Analyze(RunConfig),
    /// Asymptotic similarity and equivalence of two schemes.
    Compare(RunConfig),
    /// Convergence certificate (stationary scheme, or against a stationary comparator).
    Certify(RunConfig),
    /// Decay table of differences and Cauchy norms from initial data.
    Refine(RunConfig),
    /// Samples of the approximate limit function at a given level.
    Sample(RunConfig),
    /// Plot data for the de Rham (1) and perturbed Chaikin (2) experiments.
    Figure(FigureConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct RunConfig {
    /// Catalog name with optional parameters (`derham:gamma=2,alpha=1.5`) or a scheme JSON file.
    #[arg(long)]
    pub scheme: String,
    #[arg(long)]
    pub comparator: Option<String>,
    /// Inclusive level range `A:B`.
    #[arg(long = "k-range", value_parser = parse_range)]
    pub k_range: Option<(u32, u32)>,
    #[arg(long = "n-max", default_value_t = 8)]
    pub n_max: u32,
    #[arg(long = "K-max", default_value_t = 32)]
    pub k_max: u32,
    #[arg(long, default_value_t = 64)]
    pub window: u32,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long)]
    pub eta: Option<f64>,
    /// Override of the transferred contraction bound, in [mu*, 1).
    #[arg(long)]
    pub mu: Option<f64>,
    /// Number of refinement steps (refine) or target level (sample).
    #[arg(long, default_value_t = 12)]
    pub levels: u32,
    /// Initial data: `delta`, `ones`, or comma-separated values starting at index 0.
    #[arg(long, default_value = "delta")]
    pub data: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Debug, Clone, Args)]
pub struct FigureConfig {
    /// 1: de Rham limit functions; 2: perturbed Chaikin iterations.
    pub number: u32,
    #[arg(long, default_value_t = 2.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 12)]
    pub levels: u32,
    /// Output directory (one CSV per series); stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_range(s: &str) -> Result<(u32, u32), String> {
    let (a, b) = s.split_once(':').ok_or("expected A:B")?;
    let a: u32 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b: u32 = b.trim().parse().map_err(|e| format!("{e}"))?;
    if a > b {
        return Err(format!("empty range {a}:{b}"));
    }
    Ok((a, b))
}

/// Failure of a command, mapped to an exit code.
#[derive(Debug)]
enum Failure {
    Io(String),
    Analysis(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Analysis(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl Failure {
    fn exit_code(&self) -> i32 {
        match self {
            Failure::Io(_) => EXIT_IO,
            Failure::Analysis(e) if e.is_inconclusive() => EXIT_INCONCLUSIVE,
            Failure::Analysis(_) => EXIT_PRECONDITION,
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Failure::Io(msg) => json!({"status": "io_error", "reason": "Io", "detail": msg}),
            Failure::Analysis(e) => json!({
                "status": if e.is_inconclusive() { "inconclusive" } else { "precondition_failed" },
                "reason": e.reason(),
                "detail": e.to_string(),
            }),
        }
    }
}

/// Resolves `--scheme`/`--comparator`: an existing path or anything ending in
/// `.json` is read as a scheme file, otherwise `name[:key=value,...]` is
/// looked up in the catalog.
pub fn resolve_scheme(arg: &str) -> Result<SchemeSpec, String> {
    if arg.ends_with(".json") || Path::new(arg).is_file() {
        return load_scheme_file(Path::new(arg)).map_err(|e| match e {
            LoadError::Io(..) => format!("io: {e}"),
            LoadError::Scheme(e) => format!("scheme: {e}"),
        });
    }
    let (name, rest) = arg.split_once(':').unwrap_or((arg, ""));
    let mut params = BTreeMap::new();
    for kv in rest.split(',').filter(|s| !s.is_empty()) {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| format!("scheme: malformed parameter `{kv}`"))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| format!("scheme: parameter `{k}` is not a number"))?;
        params.insert(k.trim().to_string(), v);
    }
    catalog::lookup(name, &params)
        .map(|e| e.spec)
        .map_err(|e| format!("scheme: {e}"))
}

fn initial_data(cfg: &RunConfig, s: &SchemeSpec) -> Result<RefinementState, String> {
    let level = s.k0();
    match cfg.data.as_str() {
        "delta" => Ok(RefinementState::delta(level, delta_padding(s.locality()))),
        "ones" => Ok(RefinementState::new(level, Window::constant(-16, 33, 1.0))),
        list => {
            let values = list
                .split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|_| format!("data: `{v}` is not a number")))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(RefinementState::new(level, Window::new(0, values)))
        }
    }
}

impl RunConfig {
    fn search(&self) -> SearchParams {
        SearchParams {
            n_max: self.n_max,
            k_max: self.k_max,
            window: self.window,
            tol: self.tol,
        }
    }

    fn certify_options(&self) -> Result<CertifyOptions, Error> {
        Ok(CertifyOptions {
            search: self.search(),
            k_range: self.k_range.map(|(a, b)| LevelRange::new(a, b)).transpose()?,
            eta: self.eta,
            mu: self.mu,
        })
    }

    fn range_or(&self, s: &SchemeSpec, default_len: u32) -> Result<LevelRange, Error> {
        match self.k_range {
            Some((a, b)) => LevelRange::new(a, b),
            None => LevelRange::new(s.k0(), s.k0() + default_len - 1)?.clip_to(s),
        }
    }
}

fn write_output(out: &Option<PathBuf>, text: &str, stdout: &mut dyn Write) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display()))),
        None => stdout.write_all(text.as_bytes()).map_err(Failure::from),
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// Parses arguments and runs the command; returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_IO } else { EXIT_OK };
            let _ = write!(stderr, "{e}");
            return code;
        }
    };
    match dispatch(&cli.command, stdout, stderr) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(stderr, "{}", serde_json::to_string(&f.to_json()).unwrap());
            f.exit_code()
        }
    }
}

fn load(arg: &str) -> Result<SchemeSpec, Failure> {
    resolve_scheme(arg).map_err(Failure::Io)
}

fn dispatch(cmd: &Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, Failure> {
    match cmd {
        Command::Analyze(cfg) => cmd_analyze(cfg, stdout),
        Command::Compare(cfg) => cmd_compare(cfg, stdout),
        Command::Certify(cfg) => cmd_certify(cfg, stdout),
        Command::Refine(cfg) => cmd_refine(cfg, stdout, stderr),
        Command::Sample(cfg) => cmd_sample(cfg, stdout),
        Command::Figure(cfg) => cmd_figure(cfg, stdout),
    }
}

fn cmd_analyze(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<i32, Failure> {
    let s = load(&cfg.scheme)?;
    let range = if s.is_stationary() {
        LevelRange::new(s.k0(), s.k0()).unwrap()
    } else {
        cfg.range_or(&s, 8)?
    };
    let mut levels = Vec::new();
    let mut failure: Option<Error> = None;
    for k in range.iter() {
        let a = s.mask_at(k)?;
        let reproduces = a.reproduces_constants(cfg.tol);
        let q = match s.difference_mask_at(k, cfg.tol) {
            Ok(q) => Some(q),
            Err(e) => {
                failure.get_or_insert(e);
                None
            }
        };
        levels.push(json!({
            "k": k,
            "mask": a,
            "symbol_at_1": a.symbol(1.0),
            "symbol_at_minus_1": a.symbol(-1.0),
            "parity_sums": a.residue_sums(2),
            "reproduces_constants": reproduces,
            "operator_norm": a.sup_norm(),
            "difference_mask": q,
            "difference_norm": q.as_ref().map(|q| q.sup_norm()),
        }));
    }
    let bounds = boundedness_estimate(&s, range)?;
    let mut doc = json!({
        "scheme": s.name(),
        "kind": s.kind(),
        "k0": s.k0(),
        "N": s.locality(),
        "levels": levels,
        "boundedness": bounds,
        "product_order": "S_q[k+n-1] ... S_q[k+1] S_q[k] (level k acts first)",
    });
    let code = match failure {
        Some(e) => {
            doc["condition_a"] = Failure::Analysis(e.clone()).to_json();
            EXIT_PRECONDITION
        }
        None => match condition_a_scan(&s, &cfg.search()) {
            Ok(outcome) => {
                let code = match outcome.witness {
                    Some(w) => {
                        doc["condition_a"] = json!({"status": "found", "witness": w});
                        EXIT_OK
                    }
                    None => {
                        let e = Error::NotFound {
                            n_max: cfg.n_max,
                            k_max: cfg.k_max,
                        };
                        doc["condition_a"] = Failure::Analysis(e).to_json();
                        EXIT_INCONCLUSIVE
                    }
                };
                if cfg.verbose {
                    doc["scanned"] = serde_json::to_value(&outcome.scanned).unwrap();
                }
                code
            }
            Err(e) => {
                let f = Failure::Analysis(e);
                doc["condition_a"] = f.to_json();
                f.exit_code()
            }
        },
    };
    write_output(&cfg.out, &pretty(&doc), stdout)?;
    Ok(code)
}

fn cmd_compare(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<i32, Failure> {
    let a = load(&cfg.scheme)?;
    let comparator = cfg
        .comparator
        .as_deref()
        .ok_or_else(|| Failure::Io("compare needs --comparator".into()))?;
    let b = load(comparator)?;
    let range = cfg.range_or(&a, 64)?;
    let report = similarity_report(&a, &b, range, cfg.tol)?;
    let text = match cfg.format.unwrap_or(Format::Json) {
        Format::Json => pretty(&serde_json::to_value(&report).unwrap()),
        Format::Csv => {
            let mut s = String::from("k,diff,partial_sum\n");
            for ((k, d), p) in report.per_k_diff.iter().zip(&report.partial_sums) {
                let _ = writeln!(s, "{k},{d},{p}");
            }
            s
        }
    };
    write_output(&cfg.out, &text, stdout)?;
    Ok(EXIT_OK)
}

fn certificate_for(cfg: &RunConfig, s: &SchemeSpec) -> Result<ConvergenceCertificate, Failure> {
    let opts = cfg.certify_options()?;
    match &cfg.comparator {
        Some(c) => {
            let comparator = load(c)?;
            Ok(certify_theorem4(s, &comparator, &opts)?)
        }
        None if s.is_stationary() => Ok(certify_stationary(s, &opts)?),
        None => {
            let last = s.k0() + opts.search.window;
            let last = s.last_level().map_or(last, |l| l.min(last));
            for k in s.k0()..=last {
                s.difference_mask_at(k, opts.search.tol)?;
            }
            Err(Failure::Analysis(Error::InvalidParameter(
                "a non-stationary scheme needs a stationary --comparator".into(),
            )))
        }
    }
}

fn cmd_certify(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<i32, Failure> {
    let s = load(&cfg.scheme)?;
    match certificate_for(cfg, &s) {
        Ok(cert) => {
            let mut doc = serde_json::to_value(&cert).unwrap();
            doc["status"] = json!("certified");
            write_output(&cfg.out, &pretty(&doc), stdout)?;
            Ok(EXIT_OK)
        }
        Err(Failure::Analysis(e)) => {
            let f = Failure::Analysis(e);
            write_output(&cfg.out, &pretty(&f.to_json()), stdout)?;
            Ok(f.exit_code())
        }
        Err(f) => Err(f),
    }
}

fn decay_csv(report: &DecayReport) -> String {
    let mut s = String::from("k,delta_norm,cauchy_norm,bound\n");
    for r in &report.rows {
        let bound = r.cauchy_bound.map(|b| b.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{}", r.level, r.delta_norm, r.cauchy_norm, bound);
    }
    s
}

fn optional_certificate(cfg: &RunConfig, s: &SchemeSpec) -> Result<Option<ConvergenceCertificate>, Failure> {
    if cfg.comparator.is_none() && !s.is_stationary() {
        return Ok(None);
    }
    match certificate_for(cfg, s) {
        Ok(c) => Ok(Some(c)),
        Err(Failure::Analysis(_)) => Ok(None),
        Err(f) => Err(f),
    }
}

fn cmd_refine(cfg: &RunConfig, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, Failure> {
    let s = load(&cfg.scheme)?;
    let f0 = initial_data(cfg, &s).map_err(Failure::Io)?;
    let cert = optional_certificate(cfg, &s)?;
    let report = decay_report(&s, &f0, cfg.levels, cert.as_ref())?;
    let text = match cfg.format.unwrap_or(Format::Csv) {
        Format::Csv => decay_csv(&report),
        Format::Json => pretty(&json!({"report": report, "certificate": cert})),
    };
    write_output(&cfg.out, &text, stdout)?;
    if cfg.verbose {
        let _ = writeln!(
            stderr,
            "rho_emp = {}, rho_delta = {}, contractive = {}",
            report.rho_emp, report.rho_delta, report.contractive
        );
    }
    Ok(EXIT_OK)
}

fn cmd_sample(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<i32, Failure> {
    let s = load(&cfg.scheme)?;
    let f0 = initial_data(cfg, &s).map_err(Failure::Io)?;
    let cert = optional_certificate(cfg, &s)?;
    let samples = limit_sample(&s, &f0, cfg.levels, cert.as_ref())?;
    let text = match cfg.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut t = String::from("x,value\n");
            for (x, v) in &samples.points {
                let _ = writeln!(t, "{x},{v}");
            }
            t
        }
        Format::Json => pretty(&serde_json::to_value(&samples).unwrap()),
    };
    write_output(&cfg.out, &text, stdout)?;
    Ok(EXIT_OK)
}

/// `(alpha, (x, value) samples)` per figure alpha.
pub type Figure1Series = Vec<(f64, Vec<(f64, f64)>)>;

/// The de Rham traces: `(alpha, samples)` for each figure alpha, from
/// `f^{[1]} = δ` refined to `level`.
pub fn figure1_series(gamma: f64, level: u32) -> Result<Figure1Series, Error> {
    use rayon::prelude::*;
    FIGURE1_ALPHAS
        .par_iter()
        .map(|&alpha| {
            let s = catalog::derham_nonstationary(gamma, EpsSequence::AlphaOverK(alpha), 1)?;
            let f0 = RefinementState::delta(1, delta_padding(s.locality()));
            Ok((alpha, limit_sample(&s, &f0, level, None)?.points))
        })
        .collect()
}

/// Perturbed Chaikin from `f^{[1]} = δ`: the states after each figure
/// iteration count, plus the decay report over the longest run.
pub fn figure2_series() -> Result<(Vec<RefinementState>, DecayReport), Error> {
    let s = catalog::perturbed_chaikin();
    let f0 = RefinementState::delta(1, delta_padding(s.locality()));
    let max = *FIGURE2_ITERATIONS.iter().max().unwrap();
    let states = trace(&s, &f0, max)?;
    let picked = FIGURE2_ITERATIONS.iter().map(|&it| states[it as usize].clone()).collect();
    Ok((picked, decay_report(&s, &f0, max, None)?))
}

fn cmd_figure(cfg: &FigureConfig, stdout: &mut dyn Write) -> Result<i32, Failure> {
    if let Some(dir) = &cfg.out {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    }
    match cfg.number {
        1 => {
            let series = figure1_series(cfg.gamma, cfg.levels)?;
            match &cfg.out {
                Some(dir) => {
                    for (alpha, points) in &series {
                        let mut t = String::from("x,value\n");
                        for (x, v) in points {
                            let _ = writeln!(t, "{x},{v}");
                        }
                        let path = dir.join(format!("fig1_gamma{}_alpha{}.csv", cfg.gamma, alpha));
                        write_output(&Some(path), &t, stdout)?;
                    }
                }
                None => {
                    let mut t = String::from("alpha,x,value\n");
                    for (alpha, points) in &series {
                        for (x, v) in points {
                            let _ = writeln!(t, "{alpha},{x},{v}");
                        }
                    }
                    write_output(&None, &t, stdout)?;
                }
            }
            Ok(EXIT_OK)
        }
        2 => {
            let (states, report) = figure2_series()?;
            let mut t = String::from("k,x,value\n");
            for st in &states {
                for (x, v) in st.samples() {
                    let _ = writeln!(t, "{},{x},{v}", st.level());
                }
            }
            match &cfg.out {
                Some(dir) => {
                    write_output(&Some(dir.join("fig2_traces.csv")), &t, stdout)?;
                    write_output(&Some(dir.join("fig2_decay.csv")), &decay_csv(&report), stdout)?;
                }
                None => write_output(&None, &t, stdout)?,
            }
            Ok(EXIT_OK)
        }
        n => Err(Failure::Io(format!("unknown figure {n}; expected 1 or 2"))),
    }
}
