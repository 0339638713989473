//! Command-line front end: fitting, grid evaluation, prediction and simulation.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::data::LongitudinalSample;
use crate::error::{Error, Result};
use crate::func::{Curve, Surface};
use crate::io::{fmt_f64, load_model, read_dataset, save_model, write_dataset, ModelFile, Provenance};
use crate::kernel::{Domain, KernelForm};
use crate::model::{fit_model, FitConfig, FitReport, FixedLambdas, ModelBundle};
use crate::regression::Criterion;
use crate::sim::{format_stn, generate_dataset, run_experiment, SimCase, SimConfig};
use crate::tuning::log_grid;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "sparsefun", version, about = "Sparse functional linear regression")]
pub struct Cli {
    /// Worker threads (default: logical cores).
    #[arg(long, global = true, env = "SPARSEFUN_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model to a long-format CSV file.
    Fit(FitArgs),
    /// Evaluate model components on a regular grid.
    EvalGrid(EvalArgs),
    /// Predict response trajectories for new predictor observations.
    Predict(PredictArgs),
    /// Run the simulation study.
    Simulate(SimArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CriterionArg {
    Aic,
    Bic,
    Fve,
}

impl From<CriterionArg> for Criterion {
    fn from(c: CriterionArg) -> Self {
        match c {
            CriterionArg::Aic => Criterion::Aic,
            CriterionArg::Bic => Criterion::Bic,
            CriterionArg::Fve => Criterion::Fve,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormArg {
    Full,
    Reduced,
}

#[derive(Debug, Clone, Args)]
pub struct EstimatorArgs {
    /// Sobolev order of the predictor kernel.
    #[arg(long, default_value_t = 2)]
    pub order_x: u32,
    /// Sobolev order of the response kernel.
    #[arg(long, default_value_t = 2)]
    pub order_y: u32,
    #[arg(long, value_enum, default_value_t = FormArg::Full)]
    pub kernel_form: FormArg,
    #[arg(long, default_value_t = 41)]
    pub nodes: usize,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub lambda_min: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_max: f64,
    #[arg(long, default_value_t = 20)]
    pub lambda_count: usize,
    /// Use this penalty for every stage instead of cross-validation.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = 10)]
    pub j_max: usize,
    #[arg(long, value_enum, default_value_t = CriterionArg::Aic)]
    pub criterion: CriterionArg,
}

impl EstimatorArgs {
    fn config(&self, seed: u64) -> Result<FitConfig> {
        let fixed = match self.lambda {
            Some(l) => FixedLambdas {
                mean_x: Some(l),
                mean_y: Some(l),
                cov_x: Some(l),
                cov_y: Some(l),
                cross: Some(l),
            },
            None => FixedLambdas::default(),
        };
        Ok(FitConfig {
            order_x: self.order_x,
            order_y: self.order_y,
            kernel_form: match self.kernel_form {
                FormArg::Full => KernelForm::Full,
                FormArg::Reduced => KernelForm::Reduced,
            },
            quadrature_nodes: self.nodes,
            lambda_grid: log_grid(self.lambda_min, self.lambda_max, self.lambda_count)?,
            folds: self.folds,
            seed,
            fixed,
            j_max: self.j_max,
            criterion: self.criterion.into(),
            ..FitConfig::default()
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// Long-format CSV with columns subject_id,process,time,value.
    pub data: PathBuf,
    #[arg(long, short)]
    pub model: PathBuf,
    /// JSON fit report (defaults to the model path with `.report.json`).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Predictor domain `lo,hi`; inferred from the data when absent.
    #[arg(long, value_parser = parse_domain)]
    pub domain_x: Option<Domain>,
    /// Response domain `lo,hi`; inferred from the data when absent.
    #[arg(long, value_parser = parse_domain)]
    pub domain_y: Option<Domain>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum What {
    Beta,
    Crosscov,
    /// Cross-covariance with the response argument first.
    CrosscovYx,
    Singular,
    Eigen,
    Mean,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    pub model: PathBuf,
    #[arg(long, value_enum)]
    pub what: What,
    /// Points per axis.
    #[arg(long, short = 'g', default_value_t = 51)]
    pub size: usize,
    /// Output CSV (stdout when absent).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    pub model: PathBuf,
    /// Long-format CSV; only `X` rows are used.
    pub data: PathBuf,
    #[arg(long, short = 'g', default_value_t = 51)]
    pub size: usize,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub case: u8,
    #[arg(long)]
    pub n: usize,
    /// Signal-to-noise ratio, or `inf`.
    #[arg(long, value_parser = parse_stn)]
    pub stn: f64,
    #[arg(long, default_value_t = 1)]
    pub replicates: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sampling frequencies to draw from.
    #[arg(long, value_delimiter = ',', default_value = "2,3,4,5")]
    pub m_set: Vec<usize>,
    /// Replicate table (stdout when absent).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Write the first replicate's observations with their noise draws.
    #[arg(long)]
    pub dump: Option<PathBuf>,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
}

fn parse_domain(s: &str) -> std::result::Result<Domain, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err("expected lo,hi".into());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| "bad lower bound".to_string())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| "bad upper bound".to_string())?;
    Domain::new(lo, hi).map_err(|e| e.to_string())
}

fn parse_stn(s: &str) -> std::result::Result<f64, String> {
    let v = match s.to_ascii_lowercase().as_str() {
        "inf" | "infinity" => f64::INFINITY,
        other => other.parse().map_err(|_| format!("bad stn {s:?}"))?,
    };
    if v > 0.0 {
        Ok(v)
    } else {
        Err("stn must be positive".into())
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Numerical(_) | Error::Truncation { .. } => EXIT_NUMERICAL,
        _ => EXIT_INPUT,
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args: Vec<std::ffi::OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let command: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match run(&cli, &command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: &Cli, command: &[String]) -> Result<()> {
    let work = || match &cli.command {
        Command::Fit(a) => cmd_fit(a, command).map(|_| ()),
        Command::EvalGrid(a) => cmd_eval_grid(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Simulate(a) => cmd_simulate(a),
    };
    match cli.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::arg(format!("cannot start {t} threads: {e}")))?
            .install(work),
        None => work(),
    }
}

#[derive(Serialize)]
struct FitReportFile<'a> {
    provenance: &'a Provenance,
    report: &'a FitReport,
}

pub fn cmd_fit(a: &FitArgs, command: &[String]) -> Result<FitReport> {
    let data = read_dataset(&a.data)?;
    if data.x.is_empty() || data.y.is_empty() {
        return Err(Error::input("need both X and Y observations"));
    }
    let mut cfg = a.estimator.config(a.seed)?;
    cfg.domain_x = a.domain_x;
    cfg.domain_y = a.domain_y;
    let (model, report) = fit_model(&data.x, &data.y, &cfg)?;
    let provenance = Provenance {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: a.seed,
        folds: cfg.folds,
        lambda_grid: cfg.lambda_grid.clone(),
        command: command.to_vec(),
    };
    let report_path = a.report.clone().unwrap_or_else(|| a.model.with_extension("report.json"));
    let text = serde_json::to_string_pretty(&FitReportFile {
        provenance: &provenance,
        report: &report,
    })?;
    save_model(&a.model, &ModelFile::new(model, provenance))?;
    std::fs::write(report_path, text)?;
    Ok(report)
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(std::io::stdout())),
    })
}

fn write_rows(out: &Option<PathBuf>, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(output(out)?);
    w.write_record(header).map_err(crate::io::csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(crate::io::csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_eval_grid(a: &EvalArgs) -> Result<()> {
    if a.size == 0 {
        return Err(Error::arg("grid size must be positive"));
    }
    let m = load_model(&a.model)?.model;
    let (header, rows) = eval_rows(&m, a.what, a.size);
    write_rows(&a.out, &header, rows)
}

/// Header and rows of a grid evaluation.
pub fn eval_rows(m: &ModelBundle, what: What, g: usize) -> (Vec<&'static str>, Vec<Vec<String>>) {
    let s = m.spec_x.domain.grid(g);
    let t = m.spec_y.domain.grid(g);
    let surface_rows = |sa: &[f64], ta: &[f64], grid: faer::Mat<f64>| -> Vec<Vec<String>> {
        let mut rows = Vec::with_capacity(sa.len() * ta.len());
        for i in 0..sa.len() {
            for j in 0..ta.len() {
                rows.push(vec![fmt_f64(sa[i]), fmt_f64(ta[j]), fmt_f64(grid[(i, j)])]);
            }
        }
        rows
    };
    match what {
        What::Beta => (vec!["s", "t", "value"], surface_rows(&s, &t, m.beta.grid(&s, &t))),
        What::Crosscov => (vec!["s", "t", "value"], surface_rows(&s, &t, m.crosscov.grid(&s, &t))),
        What::CrosscovYx => (
            vec!["t", "s", "value"],
            surface_rows(&t, &s, m.crosscov.transposed().grid(&t, &s)),
        ),
        What::Singular => {
            let mut rows = Vec::new();
            for k in 0..m.singular.len() {
                let psi = m.singular.psi[k].values(&s);
                let phi = m.singular.phi[k].values(&t);
                for i in 0..g {
                    rows.push(vec![
                        (k + 1).to_string(),
                        fmt_f64(m.singular.sigma_sq[k]),
                        fmt_f64(s[i]),
                        fmt_f64(psi[i]),
                        fmt_f64(t[i]),
                        fmt_f64(phi[i]),
                    ]);
                }
            }
            (vec!["k", "sigma_sq", "s", "psi", "t", "phi"], rows)
        }
        What::Eigen => {
            let mut rows = Vec::new();
            for (name, sys, grid) in [("X", &m.eigen_x, &s), ("Y", &m.eigen_y, &t)] {
                for k in 0..sys.len() {
                    let v = sys.functions[k].values(grid);
                    for i in 0..g {
                        rows.push(vec![
                            name.to_string(),
                            (k + 1).to_string(),
                            fmt_f64(sys.values[k]),
                            fmt_f64(grid[i]),
                            fmt_f64(v[i]),
                        ]);
                    }
                }
            }
            (vec!["process", "k", "eigenvalue", "time", "value"], rows)
        }
        What::Mean => {
            let mut rows = Vec::new();
            for (name, f, grid) in [("X", &m.mu_x, &s), ("Y", &m.mu_y, &t)] {
                for (x, v) in grid.iter().zip(f.values(grid)) {
                    rows.push(vec![name.to_string(), fmt_f64(*x), fmt_f64(v)]);
                }
            }
            (vec!["process", "time", "value"], rows)
        }
    }
}

pub fn cmd_predict(a: &PredictArgs) -> Result<()> {
    if a.size == 0 {
        return Err(Error::arg("empty prediction grid"));
    }
    let m = load_model(&a.model)?.model;
    let data = read_dataset(&a.data)?;
    let t = m.spec_y.domain.grid(a.size);
    let mut rows = Vec::new();
    for id in data.subject_ids() {
        let sample = data.x.iter().find(|s| s.subject_id == id);
        match predict_subject(&m, sample, &t) {
            Ok(v) => {
                for (ti, vi) in t.iter().zip(v) {
                    rows.push(vec![id.clone(), fmt_f64(*ti), fmt_f64(vi), "ok".to_string()]);
                }
            }
            Err(e) => rows.push(vec![id.clone(), String::new(), String::new(), format!("error: {e}")]),
        }
    }
    write_rows(&a.out, &["subject_id", "time", "value", "status"], rows)
}

fn predict_subject(m: &ModelBundle, sample: Option<&LongitudinalSample>, t: &[f64]) -> Result<Vec<f64>> {
    let sample = sample.ok_or_else(|| Error::input("subject has no X observations"))?;
    m.predict(sample, t)
}

pub fn cmd_simulate(a: &SimArgs) -> Result<()> {
    let cfg = SimConfig {
        case: SimCase::from_number(a.case)?,
        n: a.n,
        stn: a.stn,
        m_set: a.m_set.clone(),
        replicates: a.replicates,
        seed: a.seed,
    };
    cfg.validate()?;
    if let Some(path) = &a.dump {
        let d = generate_dataset(&cfg, 0)?;
        let nx: Vec<Vec<f64>> = d.subjects.iter().map(|s| s.noise_x.clone()).collect();
        let ny: Vec<Vec<f64>> = d.subjects.iter().map(|s| s.noise_y.clone()).collect();
        write_dataset(BufWriter::new(File::create(path)?), &d.x, &d.y, Some((&nx, &ny)))?;
    }
    let fit = a.estimator.config(a.seed)?;
    let report = run_experiment(&cfg, &fit)?;
    let rows = report.rows.iter().map(|r| {
        vec![
            r.replicate.to_string(),
            r.case.to_string(),
            r.n.to_string(),
            format_stn(r.stn),
            fmt_f64(r.mise),
            fmt_f64(r.miae),
            r.status.clone(),
        ]
    });
    write_rows(&a.out, &["replicate", "case", "n", "stn", "mise", "miae", "status"], rows)?;
    if let Some(path) = &a.summary {
        std::fs::write(path, serde_json::to_string_pretty(&report.summary)?)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_stn_and_domain() {
        assert_eq!(parse_stn("inf").unwrap(), f64::INFINITY);
        assert_eq!(parse_stn("8").unwrap(), 8.0);
        assert!(parse_stn("0").is_err());
        assert_eq!(parse_domain("-1, 2").unwrap(), Domain::new(-1.0, 2.0).unwrap());
        assert!(parse_domain("2,1").is_err());
    }

    #[test]
    fn usage_errors_exit_with_input_code() {
        assert_eq!(main_with_args(["sparsefun", "eval-grid", "m.json", "--what", "nope"]), EXIT_INPUT);
        assert_eq!(main_with_args(["sparsefun", "simulate", "--case", "3", "--n", "5", "--stn", "2"]), EXIT_INPUT);
    }

    #[test]
    fn error_codes() {
        assert_eq!(exit_code(&Error::num("x")), EXIT_NUMERICAL);
        assert_eq!(exit_code(&Error::input("x")), EXIT_INPUT);
    }
}
