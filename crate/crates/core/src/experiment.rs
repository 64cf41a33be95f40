//! Experiment files, sweep expansion and CSV results.
//!
//! An experiment file is TOML with two optional tables. Every key is
//! optional; absent keys take the simulation defaults of
//! [`SystemConfig::default_cell`].
//!
//! ```toml
//! [system]
//! n_rt = 10
//! n_nrt = 10
//! packet_bits = 1.0          # L, nats
//! slot_seconds = 1.0         # Ts
//! p_max = 200.0
//! p_avg = 10.0
//! delivery_ratio = 0.3       # scalar, or one entry per RT user
//! rt_arrival_rate = 0.2      # scalar, or one entry per RT user
//! nrt_arrival_rate = 1.0     # scalar, or one entry per NRT user
//! admit_threshold = 1e4      # V
//! channel_on_prob = 1.0      # scalar, or one entry per user (RT first)
//! horizon_slots = 1000000
//! rng_seed = 1
//! nrt_traffic_mode = "saturated"   # or "bernoulli"
//!
//! [experiment]
//! policies = ["algorithm1", "fixedp"]
//! replications = 5           # replication r runs with seed rng_seed + r
//!
//! [experiment.sweep]
//! param = "p_avg"            # p_avg | q | v | horizon | channel_on_prob
//! values = [2, 4, 6, 8, 10]
//! ```

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ConfigError, NrtTraffic, SystemConfig};
use crate::sim::{MetricsReport, PolicyKind};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed experiment file: {0}")]
    Parse(String),
    #[error("invalid value for `{key}`: {reason}")]
    Validation { key: String, reason: String },
    #[error("run failed ({run}): {source}")]
    Run {
        run: String,
        #[source]
        source: ConfigError,
    },
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

impl ExperimentError {
    fn validation(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::Validation {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by the experiment file rather than by running it.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Self::Io { .. } | Self::Parse(_) | Self::Validation { .. }
        )
    }
}

impl From<ConfigError> for ExperimentError {
    fn from(e: ConfigError) -> Self {
        let ConfigError::Invalid { key, reason } = e;
        Self::validation(format!("system.{key}"), reason)
    }
}

/// Parameter varied across a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    PAvg,
    Q,
    V,
    Horizon,
    ChannelOnProb,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            Self::PAvg => "p_avg",
            Self::Q => "q",
            Self::V => "v",
            Self::Horizon => "horizon",
            Self::ChannelOnProb => "channel_on_prob",
        }
    }

    /// `base` with this parameter set to `value`.
    pub fn apply(self, base: &SystemConfig, value: f64) -> Result<SystemConfig, ExperimentError> {
        let mut cfg = base.clone();
        match self {
            Self::PAvg => cfg.p_avg = value,
            Self::Q => cfg.delivery_ratio.fill(value),
            Self::V => cfg.admit_threshold = value,
            Self::Horizon => {
                if !(value >= 1.0 && value.fract() == 0.0 && value <= u64::MAX as f64) {
                    return Err(ExperimentError::validation(
                        "experiment.sweep.values",
                        format!("horizon {value} is not a positive integer"),
                    ));
                }
                cfg.horizon_slots = value as u64;
            }
            Self::ChannelOnProb => cfg.channel_on_prob.fill(value),
        }
        cfg.validate().map_err(|e| {
            ExperimentError::validation(
                "experiment.sweep.values",
                format!("{} = {value}: {e}", self.name()),
            )
        })?;
        Ok(cfg)
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            Self::PAvg,
            Self::Q,
            Self::V,
            Self::Horizon,
            Self::ChannelOnProb,
        ]
        .into_iter()
        .find(|p| p.name() == s)
        .ok_or_else(|| format!("unknown sweep parameter `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub base: SystemConfig,
    pub sweep: Option<Sweep>,
    pub policies: Vec<PolicyKind>,
    pub replications: u32,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            base: SystemConfig::default_cell(10, 10),
            sweep: None,
            policies: vec![PolicyKind::Algorithm1],
            replications: 1,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.base.validate()?;
        if self.policies.is_empty() {
            return Err(ExperimentError::validation(
                "experiment.policies",
                "must not be empty",
            ));
        }
        if self.replications == 0 {
            return Err(ExperimentError::validation(
                "experiment.replications",
                "must be >= 1",
            ));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(ExperimentError::validation(
                    "experiment.sweep.values",
                    "must not be empty",
                ));
            }
            for &v in &sweep.values {
                sweep.param.apply(&self.base, v)?;
            }
        }
        Ok(())
    }

    /// Every run in output order: policy, then sweep value, then replication.
    pub fn runs(&self) -> Result<Vec<RunDescriptor>, ExperimentError> {
        let points: Vec<(Option<f64>, SystemConfig)> = match &self.sweep {
            None => vec![(None, self.base.clone())],
            Some(s) => s
                .values
                .iter()
                .map(|&v| Ok((Some(v), s.param.apply(&self.base, v)?)))
                .collect::<Result<_, ExperimentError>>()?,
        };
        let mut runs = Vec::new();
        for &policy in &self.policies {
            for (value, cfg) in &points {
                for r in 0..self.replications {
                    let mut config = cfg.clone();
                    config.rng_seed = self.base.rng_seed.wrapping_add(u64::from(r));
                    runs.push(RunDescriptor {
                        policy,
                        sweep_value: *value,
                        replication: r,
                        config,
                    });
                }
            }
        }
        Ok(runs)
    }

    /// TOML text that [`parse_config`] maps back to this spec.
    pub fn to_toml(&self) -> String {
        let b = &self.base;
        let file = FileSpec {
            system: Some(SystemSection {
                n_rt: Some(b.n_rt),
                n_nrt: Some(b.n_nrt),
                packet_bits: Some(b.packet_bits),
                slot_seconds: Some(b.slot_seconds),
                p_max: Some(b.p_max),
                p_avg: Some(b.p_avg),
                delivery_ratio: Some(PerUser::Each(b.delivery_ratio.clone())),
                rt_arrival_rate: Some(PerUser::Each(b.arrival_rate[..b.n_rt].to_vec())),
                nrt_arrival_rate: Some(PerUser::Each(b.arrival_rate[b.n_rt..].to_vec())),
                admit_threshold: Some(b.admit_threshold),
                channel_on_prob: Some(PerUser::Each(b.channel_on_prob.clone())),
                horizon_slots: Some(b.horizon_slots),
                rng_seed: Some(b.rng_seed),
                nrt_traffic_mode: Some(b.nrt_traffic),
            }),
            experiment: Some(ExperimentSection {
                policies: Some(self.policies.clone()),
                replications: Some(self.replications),
                sweep: self.sweep.as_ref().map(|s| SweepSection {
                    param: s.param,
                    values: s.values.clone(),
                }),
            }),
        };
        toml::to_string(&file).expect("experiment spec always serializes")
    }

    /// Column names, fixed by the user counts of the base config.
    pub fn csv_header(&self) -> String {
        let mut cols: Vec<String> = [
            "policy",
            "sweep_param",
            "sweep_value",
            "replication",
            "seed",
            "slots_run",
            "sum_nrt_throughput",
            "avg_power",
            "power_queue_over_k",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let (n_rt, n_nrt) = (self.base.n_rt, self.base.n_nrt);
        for prefix in ["rt_delivery_ratio", "rt_queue_over_k"] {
            cols.extend((0..n_rt).map(|i| format!("{prefix}_{i}")));
        }
        for prefix in ["nrt_throughput", "admitted_rate", "nrt_queue_over_k"] {
            cols.extend((0..n_nrt).map(|i| format!("{prefix}_{i}")));
        }
        cols.join(",")
    }
}

/// One simulation in an expanded experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunDescriptor {
    pub policy: PolicyKind,
    pub sweep_value: Option<f64>,
    pub replication: u32,
    pub config: SystemConfig,
}

impl fmt::Display for RunDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "policy {}", self.policy)?;
        if let Some(v) = self.sweep_value {
            write!(f, ", sweep value {v}")?;
        }
        write!(
            f,
            ", replication {}, seed {}",
            self.replication, self.config.rng_seed
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub run: RunDescriptor,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultsTable {
    pub sweep_param: Option<SweepParam>,
    pub header: String,
    pub rows: Vec<RunResult>,
}

impl ResultsTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.header);
        out.push('\n');
        for row in &self.rows {
            self.write_row(&mut out, row);
        }
        out
    }

    fn write_row(&self, out: &mut String, row: &RunResult) {
        let r = &row.report;
        let param = self.sweep_param.map_or("", SweepParam::name);
        let value = row.run.sweep_value.map_or(String::new(), |v| v.to_string());
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            row.run.policy,
            param,
            value,
            row.run.replication,
            row.run.config.rng_seed,
            r.slots_run,
            r.sum_nrt_throughput,
            r.avg_power,
            r.power_queue_over_k
        );
        for series in [
            &r.rt_delivery_ratio,
            &r.rt_queue_over_k,
            &r.nrt_throughput,
            &r.admitted_rate,
            &r.nrt_queue_over_k,
        ] {
            for v in series {
                let _ = write!(out, ",{v}");
            }
        }
        out.push('\n');
    }
}

/// Parses and validates experiment TOML.
pub fn parse_config(text: &str) -> Result<ExperimentSpec, ExperimentError> {
    let file: FileSpec = toml::from_str(text).map_err(|e| ExperimentError::Parse(e.to_string()))?;
    let spec = file.into_spec()?;
    spec.validate()?;
    Ok(spec)
}

/// Reads, parses and validates an experiment file.
pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentSpec, ExperimentError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

/// Runs every descriptor of `spec`, on `jobs` threads (0 = one per core).
/// Row order never depends on `jobs`.
pub fn run_experiment(spec: &ExperimentSpec, jobs: usize) -> Result<ResultsTable, ExperimentError> {
    spec.validate()?;
    let runs = spec.runs()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))?;
    let rows = pool.install(|| {
        runs.into_par_iter()
            .map(|run| match crate::sim::run(&run.config, run.policy) {
                Ok(report) => Ok(RunResult { run, report }),
                Err(source) => Err(ExperimentError::Run {
                    run: run.to_string(),
                    source,
                }),
            })
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(ResultsTable {
        sweep_param: spec.sweep.as_ref().map(|s| s.param),
        header: spec.csv_header(),
        rows,
    })
}

/// Mean and standard error of `values`; the error is 0 for a single value.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    system: Option<SystemSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    experiment: Option<ExperimentSection>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemSection {
    n_rt: Option<usize>,
    n_nrt: Option<usize>,
    packet_bits: Option<f64>,
    slot_seconds: Option<f64>,
    p_max: Option<f64>,
    p_avg: Option<f64>,
    delivery_ratio: Option<PerUser>,
    rt_arrival_rate: Option<PerUser>,
    nrt_arrival_rate: Option<PerUser>,
    admit_threshold: Option<f64>,
    channel_on_prob: Option<PerUser>,
    horizon_slots: Option<u64>,
    rng_seed: Option<u64>,
    nrt_traffic_mode: Option<NrtTraffic>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentSection {
    policies: Option<Vec<PolicyKind>>,
    replications: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep: Option<SweepSection>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSection {
    param: SweepParam,
    values: Vec<f64>,
}

/// A per-user quantity given once for everybody or once per user.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum PerUser {
    All(f64),
    Each(Vec<f64>),
}

impl PerUser {
    fn expand(self, key: &str, n: usize) -> Result<Vec<f64>, ExperimentError> {
        match self {
            Self::All(v) => Ok(vec![v; n]),
            Self::Each(v) if v.len() == n => Ok(v),
            Self::Each(v) => Err(ExperimentError::validation(
                format!("system.{key}"),
                format!("expected 1 or {n} entries, got {}", v.len()),
            )),
        }
    }
}

impl FileSpec {
    fn into_spec(self) -> Result<ExperimentSpec, ExperimentError> {
        let sys = self.system.unwrap_or_default();
        let n_rt = sys.n_rt.unwrap_or(10);
        let n_nrt = sys.n_nrt.unwrap_or(10);
        let mut base = SystemConfig::default_cell(n_rt, n_nrt);
        macro_rules! set {
            ($($field:ident => $target:ident),*) => {
                $(if let Some(v) = sys.$field { base.$target = v; })*
            };
        }
        set!(
            packet_bits => packet_bits,
            slot_seconds => slot_seconds,
            p_max => p_max,
            p_avg => p_avg,
            admit_threshold => admit_threshold,
            horizon_slots => horizon_slots,
            rng_seed => rng_seed,
            nrt_traffic_mode => nrt_traffic
        );
        if let Some(v) = sys.delivery_ratio {
            base.delivery_ratio = v.expand("delivery_ratio", n_rt)?;
        }
        if let Some(v) = sys.rt_arrival_rate {
            let rates = v.expand("rt_arrival_rate", n_rt)?;
            base.arrival_rate[..n_rt].copy_from_slice(&rates);
        }
        if let Some(v) = sys.nrt_arrival_rate {
            let rates = v.expand("nrt_arrival_rate", n_nrt)?;
            base.arrival_rate[n_rt..].copy_from_slice(&rates);
        }
        if let Some(v) = sys.channel_on_prob {
            base.channel_on_prob = v.expand("channel_on_prob", n_rt + n_nrt)?;
        }

        let exp = self.experiment.unwrap_or_default();
        Ok(ExperimentSpec {
            base,
            sweep: exp.sweep.map(|s| Sweep {
                param: s.param,
                values: s.values,
            }),
            policies: exp.policies.unwrap_or_else(|| vec![PolicyKind::Algorithm1]),
            replications: exp.replications.unwrap_or(1),
        })
    }
}
