//! Experiment configuration.
//!
//! A config is a single JSON document. Rationals are `"num/den"` strings and
//! JSON numbers are refused wherever an exact rational is expected.
//!
//! ```json
//! {
//!   "experiment": "montecarlo",
//!   "construction": { "stages": 13, "p": 4, "t": { "monomial": { "coeff": 1, "exp": 2 } }, "x_last": 0 },
//!   "eps": "1/50",
//!   "window": [5, 12],
//!   "trials": 200,
//!   "master_seed": 1
//! }
//! ```

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use stacklab_core::rational::parse_ratio;
use stacklab_core::{ConstructionSpec, ScreenSequence};

use crate::error::RunError;

/// The experiment to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Experiment {
    Build,
    Sample,
    Screen,
    Diagnose,
    MonteCarlo,
    ChaconScan,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::Build,
        Experiment::Sample,
        Experiment::Screen,
        Experiment::Diagnose,
        Experiment::MonteCarlo,
        Experiment::ChaconScan,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Build => "build",
            Experiment::Sample => "sample",
            Experiment::Screen => "screen",
            Experiment::Diagnose => "diagnose",
            Experiment::MonteCarlo => "montecarlo",
            Experiment::ChaconScan => "chacon-scan",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = RunError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| RunError::Config(format!("unknown experiment {s:?}")))
    }
}

/// A per-stage integer schedule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Schedule {
    Constant(u64),
    Explicit(Vec<u64>),
    Rule(ScheduleRule),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleRule {
    /// `coeff * k^exp`.
    Monomial { coeff: u64, exp: u32 },
    /// `base^k` for `k >= start`, else 0.
    Geometric {
        base: u64,
        #[serde(default)]
        start: usize,
    },
    /// `value` for `k >= start`, else 0.
    Constant {
        value: u64,
        #[serde(default)]
        start: usize,
    },
}

impl Schedule {
    /// Values for stages `0..stages`.
    pub fn expand(&self, name: &str, stages: usize) -> Result<Vec<u64>, RunError> {
        let overflow = |k: usize| RunError::Config(format!("{name}: value at stage {k} overflows u64"));
        match self {
            Schedule::Constant(v) => Ok(vec![*v; stages]),
            Schedule::Explicit(values) => {
                if values.len() < stages {
                    return Err(RunError::Config(format!(
                        "{name}: {} values given for {stages} stages",
                        values.len()
                    )));
                }
                Ok(values[..stages].to_vec())
            }
            Schedule::Rule(ScheduleRule::Monomial { coeff, exp }) => (0..stages)
                .map(|k| {
                    (k as u64)
                        .checked_pow(*exp)
                        .and_then(|v| v.checked_mul(*coeff))
                        .ok_or_else(|| overflow(k))
                })
                .collect(),
            Schedule::Rule(ScheduleRule::Geometric { base, start }) => (0..stages)
                .map(|k| {
                    if k < *start {
                        Ok(0)
                    } else {
                        u32::try_from(k)
                            .ok()
                            .and_then(|e| base.checked_pow(e))
                            .ok_or_else(|| overflow(k))
                    }
                })
                .collect(),
            Schedule::Rule(ScheduleRule::Constant { value, start }) => {
                Ok((0..stages).map(|k| if k < *start { 0 } else { *value }).collect())
            }
        }
    }
}

/// Construction parameters as written in the config.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConstruction {
    pub stages: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Schedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<Schedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_last: Option<Schedule>,
    /// Explicit spacer rows; repeated cyclically when fewer than `stages`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacers: Option<Vec<Vec<u64>>>,
}

impl RawConstruction {
    pub fn build(&self) -> Result<ConstructionSpec, RunError> {
        if self.stages == 0 {
            return Err(RunError::Config("construction.stages must be at least 1".into()));
        }
        if self.stages > 4096 {
            return Err(RunError::Config("construction.stages is limited to 4096".into()));
        }
        match &self.spacers {
            Some(rows) => {
                if self.t.is_some() || self.x_last.is_some() || self.p.is_some() {
                    return Err(RunError::Config(
                        "construction: give either spacers or p/t/x_last, not both".into(),
                    ));
                }
                if rows.is_empty() {
                    return Err(RunError::Config("construction.spacers is empty".into()));
                }
                let expanded: Vec<Vec<u64>> = rows.iter().cycle().take(self.stages).cloned().collect();
                Ok(ConstructionSpec::deterministic(expanded)?)
            }
            None => {
                let missing = |f: &str| RunError::Config(format!("construction.{f} is required in ornstein mode"));
                let p = self.p.as_ref().ok_or_else(|| missing("p"))?.expand("p", self.stages)?;
                let t = self.t.as_ref().ok_or_else(|| missing("t"))?.expand("t", self.stages)?;
                let x_last = self
                    .x_last
                    .as_ref()
                    .ok_or_else(|| missing("x_last"))?
                    .expand("x_last", self.stages)?;
                let p = p
                    .into_iter()
                    .map(|v| u32::try_from(v).map_err(|_| RunError::Config(format!("p value {v} too large"))))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(ConstructionSpec::ornstein(p, t, x_last)?)
            }
        }
    }
}

/// A set of levels as written in the config.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawLevelSet {
    pub stage: usize,
    /// `"all"` or a list of level indices.
    pub levels: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDiagnose {
    pub set_a: RawLevelSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub set_b: Option<RawLevelSet>,
    pub eval_stage: usize,
    /// A list of shifts, or `"heights"` for `h_1..h_{K-1}` below `h_K`.
    pub shifts: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cesaro_horizon: Option<u64>,
}

/// The config document as parsed, before validation. This is what the
/// manifest echoes, after command-line overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<String>,
    pub construction: RawConstruction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass_threshold: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnose: Option<RawDiagnose>,
}

/// Command-line values that take precedence over the document.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Overrides {
    pub experiment: Option<Experiment>,
    pub output_path: Option<PathBuf>,
    pub trials: Option<usize>,
    pub master_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Shifts {
    List(Vec<u64>),
    Heights,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Levels {
    All,
    List(Vec<u64>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelSetConfig {
    pub stage: usize,
    pub levels: Levels,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiagnoseConfig {
    pub set_a: LevelSetConfig,
    pub set_b: LevelSetConfig,
    pub eval_stage: usize,
    pub shifts: Shifts,
    pub threshold: BigRational,
    pub cesaro_horizon: Option<u64>,
}

/// A validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub spec: ConstructionSpec,
    pub eps: Option<BigRational>,
    pub window: Option<(usize, usize)>,
    pub sequence: ScreenSequence,
    pub trials: usize,
    pub master_seed: u64,
    pub output_path: PathBuf,
    pub mass_threshold: BigRational,
    pub diagnose: Option<DiagnoseConfig>,
    /// Effective document, echoed into the manifest.
    pub raw: RawConfig,
}

const EPS_MESSAGE: &str = "eps must be an exact rational num/den";

fn exact_rational(field: &str, value: &Value) -> Result<BigRational, RunError> {
    let text = value.as_str().ok_or_else(|| {
        if field == "eps" {
            RunError::Config(EPS_MESSAGE.into())
        } else {
            RunError::Config(format!("{field} must be an exact rational num/den"))
        }
    })?;
    parse_ratio(text).map_err(|_| {
        if field == "eps" {
            RunError::Config(EPS_MESSAGE.into())
        } else {
            RunError::Config(format!("{field} must be an exact rational num/den"))
        }
    })
}

fn parse_levels(field: &str, raw: &RawLevelSet) -> Result<LevelSetConfig, RunError> {
    let levels = match &raw.levels {
        Value::String(s) if s == "all" => Levels::All,
        Value::Array(items) => Levels::List(
            items
                .iter()
                .map(|v| {
                    v.as_u64()
                        .ok_or_else(|| RunError::Config(format!("{field}.levels must hold non-negative integers")))
                })
                .collect::<Result<_, _>>()?,
        ),
        _ => return Err(RunError::Config(format!("{field}.levels must be \"all\" or a list"))),
    };
    Ok(LevelSetConfig {
        stage: raw.stage,
        levels,
    })
}

impl ExperimentConfig {
    /// Parses and validates a JSON document, applying `overrides` first.
    pub fn from_json_str(text: &str, overrides: &Overrides) -> Result<Self, RunError> {
        let mut raw: RawConfig =
            serde_json::from_str(text).map_err(|e| RunError::Config(format!("invalid config: {e}")))?;
        if let Some(e) = overrides.experiment {
            raw.experiment = Some(e.name().to_string());
        }
        if let Some(p) = &overrides.output_path {
            raw.output_path = Some(p.display().to_string());
        }
        if let Some(n) = overrides.trials {
            raw.trials = Some(n);
        }
        if let Some(s) = overrides.master_seed {
            raw.master_seed = Some(s);
        }
        Self::validate(raw)
    }

    pub fn validate(raw: RawConfig) -> Result<Self, RunError> {
        let experiment: Experiment = raw
            .experiment
            .as_deref()
            .ok_or_else(|| RunError::Config("no experiment given".into()))?
            .parse()?;
        let spec = raw.construction.build()?;
        let eps = raw.eps.as_ref().map(|v| exact_rational("eps", v)).transpose()?;
        if let Some(eps) = &eps {
            if !(eps > &BigRational::zero()
                && eps * BigRational::from_integer(2.into()) < BigRational::from_integer(1.into()))
            {
                return Err(RunError::Config("eps must lie in (0, 1/2)".into()));
            }
        }
        let window = raw.window.map(|[a, b]| (a, b));
        if let Some((k1, k2)) = window {
            if k1 > k2 || k2 >= spec.stages() {
                return Err(RunError::Config(format!(
                    "window [{k1}, {k2}] must satisfy k1 <= k2 < stages = {}",
                    spec.stages()
                )));
            }
        }
        let sequence = match raw.sequence.as_deref() {
            None | Some("first-column") => ScreenSequence::FirstColumn,
            Some("omega") => ScreenSequence::Omega,
            Some(other) => {
                return Err(RunError::Config(format!(
                    "sequence must be \"first-column\" or \"omega\", got {other:?}"
                )))
            }
        };
        let trials = raw.trials.unwrap_or(1);
        if trials == 0 {
            return Err(RunError::Config("trials must be at least 1".into()));
        }
        let mass_threshold = match &raw.mass_threshold {
            Some(v) => exact_rational("mass_threshold", v)?,
            None => BigRational::new(1.into(), 4.into()),
        };
        let diagnose = raw
            .diagnose
            .as_ref()
            .map(|d| -> Result<DiagnoseConfig, RunError> {
                let set_a = parse_levels("diagnose.set_a", &d.set_a)?;
                let set_b = match &d.set_b {
                    Some(b) => parse_levels("diagnose.set_b", b)?,
                    None => set_a.clone(),
                };
                let shifts = match &d.shifts {
                    Value::String(s) if s == "heights" => Shifts::Heights,
                    Value::Array(items) => Shifts::List(
                        items
                            .iter()
                            .map(|v| {
                                v.as_u64().ok_or_else(|| {
                                    RunError::Config("diagnose.shifts must hold non-negative integers".into())
                                })
                            })
                            .collect::<Result<_, _>>()?,
                    ),
                    _ => return Err(RunError::Config("diagnose.shifts must be \"heights\" or a list".into())),
                };
                let threshold = match &d.threshold {
                    Some(v) => exact_rational("diagnose.threshold", v)?,
                    None => BigRational::new(1.into(), 2.into()),
                };
                if d.eval_stage > spec.stages() {
                    return Err(RunError::Config(format!(
                        "diagnose.eval_stage {} exceeds stages = {}",
                        d.eval_stage,
                        spec.stages()
                    )));
                }
                Ok(DiagnoseConfig {
                    set_a,
                    set_b,
                    eval_stage: d.eval_stage,
                    shifts,
                    threshold,
                    cesaro_horizon: d.cesaro_horizon,
                })
            })
            .transpose()?;

        let needs_ornstein = matches!(
            experiment,
            Experiment::Sample | Experiment::MonteCarlo | Experiment::ChaconScan
        );
        if needs_ornstein && !spec.is_ornstein() {
            return Err(RunError::Config(format!("{experiment} needs an ornstein construction")));
        }
        if matches!(experiment, Experiment::Screen | Experiment::MonteCarlo) {
            if eps.is_none() {
                return Err(RunError::Config(format!("{experiment} needs eps")));
            }
            if window.is_none() {
                return Err(RunError::Config(format!("{experiment} needs window")));
            }
        }
        if experiment == Experiment::Diagnose && diagnose.is_none() {
            return Err(RunError::Config("diagnose needs a diagnose section".into()));
        }
        if sequence == ScreenSequence::Omega && !spec.is_ornstein() {
            return Err(RunError::Config(
                "the omega sequence needs an ornstein construction".into(),
            ));
        }
        // Guard against absurd trial counts before allocating anything.
        if trials.checked_mul(spec.stages()).is_none_or(|cells| cells > 1 << 32) {
            return Err(RunError::Config("trials * stages is too large".into()));
        }

        Ok(Self {
            experiment,
            spec,
            eps,
            window,
            sequence,
            trials,
            master_seed: raw.master_seed.unwrap_or(0),
            output_path: PathBuf::from(raw.output_path.clone().unwrap_or_else(|| "out".into())),
            mass_threshold,
            diagnose,
            raw,
        })
    }
}
