//! Run configuration, dataset ingestion, experiment drivers and
//! machine-readable reports.
//!
//! Reports are JSON with non-finite numbers written as the strings `"nan"`,
//! `"inf"` and `"-inf"`. Files are written to a temporary sibling and
//! renamed into place.

use crate::densities::{
    gaussian_1d, make_logistic_posterior, make_student_t, DensityRef, LogisticModel,
    StudentTParams,
};
use crate::error::{Error, Result};
use crate::parallel::stream;
use crate::paths::{AnnealingPath, GaussianMomentPath, MomentMatching, MomentPath, QPath};
use crate::deformed_math::OrderQ;
use crate::samplers::{
    ais_forward, ais_reverse, bdmc_gap, exact_target_samples, smc_run, HmcConfig, MoveKernel,
    ParticleSystem, ScheduleRule,
};
use crate::schedules::{
    default_q_grid, ess_heuristic_q, linear_schedule, log_importance_ratios, HeuristicConfig,
    HeuristicResult,
};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

pub const LIBRARY_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const PRIOR_SD: f64 = 5.0;

macro_rules! kebab_enum {
    ($(#[$m:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(format!(
                        "unknown value '{s}', expected one of: {}",
                        [$($text),+].join(", ")
                    )),
                }
            }
        }
    };
}

kebab_enum!(Command {
    AnnealToy => "anneal-toy",
    Smc => "smc",
    Ais => "ais",
    Bdmc => "bdmc",
    HeuristicQ => "heuristic-q",
    GridQ => "grid-q",
});

kebab_enum!(PathKind {
    Geometric => "geometric",
    Qpath => "qpath",
    Moment => "moment",
    Escort => "escort",
});

kebab_enum!(ScheduleKind {
    Linear => "linear",
    Adaptive => "adaptive",
});

kebab_enum!(
    /// Toy endpoint pairs: `N(-4, 3) -> N(4, 1)` (variances), the Student-t
    /// pair with the same locations and squared scales, or the base twice.
    Endpoints {
        Gaussian => "gaussian",
        Student => "student",
        Identical => "identical",
    }
);

/// Everything a run needs; field names double as kebab-case CLI flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub path_kind: PathKind,
    pub q: Option<f64>,
    /// Particles (SMC) or chains (AIS).
    pub particles: usize,
    pub k: usize,
    pub schedule: ScheduleKind,
    pub moves: usize,
    pub seed: u64,
    pub dataset: Option<PathBuf>,
    pub output: PathBuf,
    pub endpoints: Endpoints,
    pub nu: f64,
    pub step_size: f64,
    pub leapfrog: usize,
    pub warmup: usize,
    pub ground_truth: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: Command::AnnealToy,
            path_kind: PathKind::Geometric,
            q: None,
            particles: 1000,
            k: 32,
            schedule: ScheduleKind::Linear,
            moves: 1,
            seed: 0,
            dataset: None,
            output: PathBuf::from("report.json"),
            endpoints: Endpoints::Gaussian,
            nu: 3.0,
            step_size: 0.2,
            leapfrog: 10,
            warmup: 20,
            ground_truth: false,
        }
    }
}

pub const GROUND_TRUTH_PARTICLES: usize = 50_000;
pub const GROUND_TRUTH_MOVES: usize = 20;

impl RunConfig {
    /// Every violated constraint, in field order.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        let uses_smc = self.command == Command::Smc
            || (matches!(self.command, Command::HeuristicQ | Command::GridQ) && self.dataset.is_some());
        let chooses_q = matches!(self.command, Command::HeuristicQ | Command::GridQ);

        if self.path_kind == PathKind::Qpath && !chooses_q && self.q.is_none() {
            bad.push("q: required when path-kind is qpath".to_string());
        }
        if let Some(q) = self.q {
            if !q.is_finite() {
                bad.push(format!("q: must be finite, got {q}"));
            }
        }
        if self.dataset.is_some() && matches!(self.path_kind, PathKind::Moment | PathKind::Escort) {
            bad.push("path-kind: moment and escort paths need toy endpoints, not a dataset".to_string());
        }
        if self.path_kind == PathKind::Moment && self.endpoints == Endpoints::Student {
            bad.push("path-kind: moment paths need Gaussian endpoints".to_string());
        }
        if self.path_kind == PathKind::Escort && self.endpoints != Endpoints::Student {
            bad.push("path-kind: escort paths need student endpoints".to_string());
        }
        if self.particles < 2 {
            bad.push(format!("particles: need at least 2, got {}", self.particles));
        }
        if self.k == 0 {
            bad.push("k: must be at least 1".to_string());
        }
        if self.schedule == ScheduleKind::Adaptive && !uses_smc {
            bad.push(format!(
                "schedule: adaptive schedules are only available for SMC runs, not {}",
                self.command
            ));
        }
        match (&self.dataset, self.command) {
            (None, Command::Smc) => bad.push("dataset: required for smc".to_string()),
            (Some(_), Command::AnnealToy | Command::Bdmc) => bad.push(format!(
                "dataset: {} runs on toy endpoints and takes no dataset",
                self.command
            )),
            (Some(p), _) if !p.is_file() => {
                bad.push(format!("dataset: {} is not a readable file", p.display()))
            }
            _ => {}
        }
        if self.output.as_os_str().is_empty() {
            bad.push("output: must be a file path".to_string());
        }
        if self.endpoints == Endpoints::Student && !(self.nu > 0.0) {
            bad.push(format!("nu: must be positive, got {}", self.nu));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            bad.push(format!("step-size: must be positive, got {}", self.step_size));
        }
        if self.leapfrog == 0 {
            bad.push("leapfrog: must be at least 1".to_string());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad))
        }
    }

    fn effective(&self) -> RunConfig {
        let mut c = self.clone();
        if c.ground_truth {
            c.particles = c.particles.max(GROUND_TRUTH_PARTICLES);
            c.moves = GROUND_TRUTH_MOVES;
        }
        c
    }
}

/// `f64` that serializes non-finite values as `"nan"`, `"inf"`, `"-inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Real(pub f64);

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v = self.0;
        if v.is_finite() {
            s.serialize_f64(v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }
}

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(Real(v)),
            Repr::Text(t) => match t.as_str() {
                "nan" => Ok(Real(f64::NAN)),
                "inf" => Ok(Real(f64::INFINITY)),
                "-inf" => Ok(Real(f64::NEG_INFINITY)),
                other => Err(serde::de::Error::custom(format!("not a number: {other}"))),
            },
        }
    }
}

mod real {
    use super::Real;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        Real(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Real::deserialize(d).map(|r| r.0)
    }
}

mod real_vec {
    use super::Real;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|x| Real(*x)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<Real>::deserialize(d).map(|v| v.into_iter().map(|r| r.0).collect())
    }
}

mod real_opt {
    use super::Real;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.map(Real).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        Option::<Real>::deserialize(d).map(|v| v.map(|r| r.0))
    }
}

/// Outcome of one run. Traces are aligned with `beta_trace[1..]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    #[serde(rename = "log_Z", with = "real")]
    pub log_z: f64,
    #[serde(with = "real")]
    pub stderr_estimate: f64,
    #[serde(with = "real_vec")]
    pub ess_trace: Vec<f64>,
    #[serde(with = "real_vec")]
    pub beta_trace: Vec<f64>,
    #[serde(with = "real_vec")]
    pub acceptance_trace: Vec<f64>,
    #[serde(with = "real")]
    pub wallclock_s: f64,
    pub config_echo: RunConfig,
    pub library_version: String,
    /// Forward Jensen bound `mean(log w)` (bdmc runs).
    #[serde(default, with = "real_opt", skip_serializing_if = "Option::is_none")]
    pub lower_bound: Option<f64>,
    /// Reverse Jensen bound `-mean(log w)` (bdmc runs).
    #[serde(default, with = "real_opt", skip_serializing_if = "Option::is_none")]
    pub upper_bound: Option<f64>,
    /// Reverse log-mean-exp estimate (bdmc runs).
    #[serde(default, with = "real_opt", skip_serializing_if = "Option::is_none")]
    pub reverse_log_z: Option<f64>,
    #[serde(default, with = "real_opt", skip_serializing_if = "Option::is_none")]
    pub bdmc_gap: Option<f64>,
    #[serde(default, with = "real_opt", skip_serializing_if = "Option::is_none")]
    pub q_used: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heuristic: Option<HeuristicResult>,
    /// One report per grid point (grid-q runs).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub grid_reports: Vec<RunReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl RunReport {
    fn empty(config: RunConfig) -> Self {
        RunReport {
            log_z: f64::NAN,
            stderr_estimate: f64::NAN,
            ess_trace: vec![],
            beta_trace: vec![],
            acceptance_trace: vec![],
            wallclock_s: 0.0,
            config_echo: config,
            library_version: LIBRARY_VERSION.to_string(),
            lower_bound: None,
            upper_bound: None,
            reverse_log_z: None,
            bdmc_gap: None,
            q_used: None,
            heuristic: None,
            grid_reports: vec![],
            failure: None,
        }
    }

    /// Explicit failure record for a run that could not produce an estimate.
    pub fn failed(config: RunConfig, message: impl Into<String>, wallclock_s: f64) -> Self {
        RunReport {
            failure: Some(message.into()),
            wallclock_s,
            ..RunReport::empty(config)
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// One-line human summary.
    pub fn summary_line(&self) -> String {
        let c = &self.config_echo;
        let mut s = format!(
            "{} path={} log_Z={:.6} stderr={:.6}",
            c.command, c.path_kind, self.log_z, self.stderr_estimate
        );
        if let (Some(l), Some(u)) = (self.lower_bound, self.upper_bound) {
            s.push_str(&format!(" bounds=[{l:.6}, {u:.6}]"));
        }
        if let Some(g) = self.bdmc_gap {
            s.push_str(&format!(" gap={g:.6}"));
        }
        if let Some(q) = self.q_used {
            s.push_str(&format!(" q={q}"));
        }
        if let Some(f) = &self.failure {
            s.push_str(&format!(" failure=\"{f}\""));
        }
        s.push_str(&format!(" wallclock={:.3}s", self.wallclock_s));
        s
    }
}

/// Replace `path` with `bytes` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_report(report: &RunReport, path: &Path) -> Result<()> {
    let mut text = report.to_json()?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// `step,beta,ess,acceptance` rows for plotting.
pub fn trace_csv(report: &RunReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(["step", "beta", "ess", "acceptance"]).map_err(io)?;
    let fmt = |v: Option<&f64>| match v {
        Some(x) if x.is_nan() => "nan".to_string(),
        Some(x) if x.is_infinite() => if *x > 0.0 { "inf" } else { "-inf" }.to_string(),
        Some(x) => format!("{x}"),
        None => String::new(),
    };
    for (t, beta) in report.beta_trace.iter().enumerate() {
        let (ess, acc) = if t == 0 {
            (None, None)
        } else {
            (report.ess_trace.get(t - 1), report.acceptance_trace.get(t - 1))
        };
        w.write_record([t.to_string(), fmt(Some(beta)), fmt(ess), fmt(acc)])
            .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_trace_csv(report: &RunReport, path: &Path) -> Result<()> {
    write_atomic(path, trace_csv(report)?.as_bytes())
}

/// Binary-label CSV (label first) into a standardized logistic model with an
/// intercept column and prior sd 5.
///
/// A first row with any non-numeric cell is taken as a header. Labels
/// `{-1, +1}` are remapped to `{0, 1}` with a warning. Zero-variance feature
/// columns are centred but not scaled.
pub fn load_binary_regression_csv(path: &Path) -> Result<LogisticModel> {
    let file = std::fs::File::open(path)?;
    parse_binary_regression(file)
}

pub fn parse_binary_regression<R: std::io::Read>(reader: R) -> Result<LogisticModel> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut raw_labels = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 1;
        let rec = rec.map_err(|e| Error::Parse {
            row: line,
            message: e.to_string(),
        })?;
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        let parsed: Vec<Option<f64>> = rec.iter().map(|c| c.parse::<f64>().ok()).collect();
        if i == 0 && parsed.iter().any(|v| v.is_none()) {
            continue;
        }
        if rec.len() < 2 {
            return Err(Error::Parse {
                row: line,
                message: "need a label and at least one feature".into(),
            });
        }
        match width {
            None => width = Some(rec.len()),
            Some(w) if w != rec.len() => {
                return Err(Error::Parse {
                    row: line,
                    message: format!("expected {w} columns, found {}", rec.len()),
                })
            }
            _ => {}
        }
        let mut values = Vec::with_capacity(rec.len());
        for (j, v) in parsed.iter().enumerate() {
            match v {
                Some(x) if x.is_finite() => values.push(*x),
                _ => {
                    return Err(Error::Parse {
                        row: line,
                        message: format!("column {} is not a finite number: '{}'", j + 1, &rec[j]),
                    })
                }
            }
        }
        raw_labels.push((line, values[0]));
        rows.push(values[1..].to_vec());
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            row: 0,
            message: "no data rows".into(),
        });
    }

    let binary = raw_labels.iter().all(|(_, y)| *y == 0.0 || *y == 1.0);
    let signed = raw_labels.iter().all(|(_, y)| *y == -1.0 || *y == 1.0);
    let labels: Vec<u8> = if binary {
        raw_labels.iter().map(|(_, y)| *y as u8).collect()
    } else if signed {
        log::warn!("labels are -1/+1; remapping -1 to 0");
        raw_labels.iter().map(|(_, y)| u8::from(*y > 0.0)).collect()
    } else {
        let (row, y) = raw_labels
            .iter()
            .find(|(_, y)| *y != 0.0 && *y != 1.0)
            .copied()
            .unwrap_or((0, f64::NAN));
        return Err(Error::Parse {
            row,
            message: format!("label {y} is not binary"),
        });
    };

    let n = rows.len() as f64;
    let d = rows[0].len();
    for j in 0..d {
        let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        for r in rows.iter_mut() {
            r[j] -= mean;
            if sd > 0.0 {
                r[j] /= sd;
            }
        }
    }
    let design = rows
        .into_iter()
        .map(|r| std::iter::once(1.0).chain(r).collect())
        .collect();
    LogisticModel::new(design, labels, PRIOR_SD)
}

/// Synthetic logistic data: features iid `N(0, 1)`, labels drawn from
/// `sigmoid(w[0] + w[1..] . x)`. Returns `(features, labels)`.
pub fn generate_logistic_data(n: usize, weights: &[f64], seed: u64) -> (Vec<Vec<f64>>, Vec<u8>) {
    let mut rng = stream(seed, 0, 0);
    let d = weights.len().saturating_sub(1);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let eta = weights[0] + x.iter().zip(&weights[1..]).map(|(a, b)| a * b).sum::<f64>();
        let p = 1.0 / (1.0 + (-eta).exp());
        ys.push(u8::from(rng.random::<f64>() < p));
        xs.push(x);
    }
    (xs, ys)
}

/// Label-first CSV text, no header.
pub fn logistic_csv(features: &[Vec<f64>], labels: &[u8]) -> String {
    let mut out = String::new();
    for (x, y) in features.iter().zip(labels) {
        out.push_str(&y.to_string());
        for v in x {
            out.push(',');
            out.push_str(&format!("{v:?}"));
        }
        out.push('\n');
    }
    out
}

/// Base and target of the toy problem plus their moment-path description.
pub fn toy_endpoints(endpoints: Endpoints, nu: f64) -> Result<(DensityRef, DensityRef, GaussianMomentPath)> {
    let (mu0, var0, mu1, var1) = match endpoints {
        Endpoints::Identical => (-4.0, 3.0, -4.0, 3.0),
        _ => (-4.0, 3.0, 4.0, 1.0),
    };
    let ends = GaussianMomentPath {
        mu0: vec![mu0],
        mu1: vec![mu1],
        sigma0: vec![var0],
        sigma1: vec![var1],
        nu: (endpoints == Endpoints::Student).then_some(nu),
    };
    let (base, target): (DensityRef, DensityRef) = match endpoints {
        Endpoints::Student => (
            Arc::new(make_student_t(StudentTParams {
                mu: vec![mu0],
                sigma: vec![var0],
                nu,
            })?),
            Arc::new(make_student_t(StudentTParams {
                mu: vec![mu1],
                sigma: vec![var1],
                nu,
            })?),
        ),
        _ => (Arc::new(gaussian_1d(mu0, var0)?), Arc::new(gaussian_1d(mu1, var1)?)),
    };
    Ok((base, target, ends))
}

/// The path a config describes, with `q` overriding the configured order.
pub fn build_path(cfg: &RunConfig, q: Option<f64>) -> Result<Box<dyn AnnealingPath>> {
    let order = match (cfg.path_kind, q.or(cfg.q)) {
        (PathKind::Geometric, _) => OrderQ::GEOMETRIC,
        (_, Some(v)) => OrderQ::new(v)?,
        (PathKind::Qpath, None) => {
            return Err(Error::Config(vec!["q: required when path-kind is qpath".into()]))
        }
        _ => OrderQ::GEOMETRIC,
    };
    if let Some(ds) = &cfg.dataset {
        let model = load_binary_regression_csv(ds)?;
        let (prior, posterior) = make_logistic_posterior(model)?;
        return Ok(Box::new(QPath::new(Arc::new(prior), Arc::new(posterior), order)?));
    }
    let (base, target, ends) = toy_endpoints(cfg.endpoints, cfg.nu)?;
    Ok(match (cfg.path_kind, q) {
        (PathKind::Moment | PathKind::Escort, None) => {
            Box::new(MomentPath::new(ends, MomentMatching::SecondMoments)?)
        }
        _ => Box::new(QPath::new(base, target, order)?),
    })
}

fn kernel(cfg: &RunConfig, dim: usize) -> Result<MoveKernel> {
    Ok(MoveKernel::hmc(
        HmcConfig::isotropic(dim, cfg.step_size, cfg.leapfrog)?,
        cfg.warmup,
    ))
}

fn smc_report(cfg: &RunConfig, path: &dyn AnnealingPath) -> Result<RunReport> {
    let rule = match cfg.schedule {
        ScheduleKind::Linear => ScheduleRule::Fixed(linear_schedule(cfg.k)?),
        ScheduleKind::Adaptive => ScheduleRule::adaptive(0.5),
    };
    let out = smc_run(path, &rule, cfg.particles, &kernel(cfg, path.dim())?, cfg.moves, cfg.seed)?;
    let d = out.diagnostics;
    Ok(RunReport {
        log_z: out.log_z,
        stderr_estimate: out.stderr,
        ess_trace: d.ess,
        beta_trace: d.betas,
        acceptance_trace: d.acceptance,
        ..RunReport::empty(cfg.clone())
    })
}

fn ais_report(cfg: &RunConfig, path: &dyn AnnealingPath, reverse: bool) -> Result<RunReport> {
    let schedule = linear_schedule(cfg.k)?;
    let kern = kernel(cfg, path.dim())?;
    let fwd = ais_forward(path, &schedule, cfg.particles, &kern, cfg.moves, cfg.seed)?;
    let mut report = RunReport {
        log_z: fwd.log_z,
        stderr_estimate: fwd.stderr,
        ess_trace: fwd.ess_trace.clone(),
        beta_trace: schedule.betas().to_vec(),
        acceptance_trace: fwd.acceptance_trace.clone(),
        ..RunReport::empty(cfg.clone())
    };
    if reverse {
        let samples = exact_target_samples(path, cfg.particles, cfg.seed)?;
        let rev = ais_reverse(path, &schedule, samples, &kern, cfg.moves, cfg.seed)?;
        report.lower_bound = Some(fwd.bound);
        report.upper_bound = Some(rev.bound);
        report.reverse_log_z = Some(rev.log_z);
        report.bdmc_gap = Some(bdmc_gap(&fwd, &rev)?);
    }
    Ok(report)
}

/// The estimator a command runs once `q` is fixed.
fn estimate(cfg: &RunConfig, q: Option<f64>) -> Result<RunReport> {
    let path = build_path(cfg, q)?;
    let mut report = match (cfg.command, &cfg.dataset) {
        (Command::Smc, _) => smc_report(cfg, path.as_ref())?,
        (Command::Ais | Command::AnnealToy, _) => ais_report(cfg, path.as_ref(), false)?,
        (Command::Bdmc, _) => ais_report(cfg, path.as_ref(), true)?,
        (_, Some(_)) => smc_report(cfg, path.as_ref())?,
        (_, None) => ais_report(cfg, path.as_ref(), true)?,
    };
    report.q_used = q.or(match cfg.path_kind {
        PathKind::Geometric => Some(1.0),
        PathKind::Qpath => cfg.q,
        _ => None,
    });
    Ok(report)
}

/// Run a configuration end to end (without writing anything).
pub fn run(config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    let cfg = config.effective();
    let start = Instant::now();
    let mut report = match cfg.command {
        Command::HeuristicQ => {
            let geometric = RunConfig {
                path_kind: PathKind::Geometric,
                ..cfg.clone()
            };
            let path = build_path(&geometric, None)?;
            let sys = ParticleSystem::from_base(path.as_ref(), cfg.particles, cfg.seed)?;
            let log_ws = log_importance_ratios(path.as_ref(), &sys.positions);
            let h = ess_heuristic_q(&log_ws, &HeuristicConfig::default(), cfg.seed)?;
            let qcfg = RunConfig {
                path_kind: PathKind::Qpath,
                ..cfg.clone()
            };
            let mut r = estimate(&qcfg, Some(h.q))?;
            r.heuristic = Some(h);
            r.config_echo = cfg.clone();
            r
        }
        Command::GridQ => {
            let qcfg = RunConfig {
                path_kind: PathKind::Qpath,
                ..cfg.clone()
            };
            let mut reports = Vec::new();
            for q in default_q_grid() {
                let t = Instant::now();
                let mut r = estimate(&qcfg, Some(q))?;
                r.config_echo.q = Some(q);
                r.wallclock_s = t.elapsed().as_secs_f64();
                reports.push(r);
            }
            let key = |r: &RunReport| match cfg.dataset {
                Some(_) => -r.log_z,
                None => r.bdmc_gap.unwrap_or(f64::INFINITY),
            };
            let best = reports
                .iter()
                .enumerate()
                .filter(|(_, r)| !key(r).is_nan())
                .min_by(|a, b| key(a.1).total_cmp(&key(b.1)).then(a.0.cmp(&b.0)))
                .map(|(i, _)| i)
                .ok_or_else(|| Error::Degenerate("every grid point failed".into()))?;
            let mut r = reports[best].clone();
            r.config_echo = cfg.clone();
            r.grid_reports = reports;
            r
        }
        _ => estimate(&cfg, None)?,
    };
    report.wallclock_s = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Process exit code for an error: 2 for configuration problems, 3 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 2,
        _ => 3,
    }
}
