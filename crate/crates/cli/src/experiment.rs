//! Experiment dispatch. Every experiment returns its artifacts in memory;
//! [`crate::output`] writes them and the manifest.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::One;
use serde_json::{json, Value};
use stacklab_core::diagnostics::{correlations_to_csv, LevelSet};
use stacklab_core::rational::{format_ratio, to_decimal};
use stacklab_core::spectral::survivors_to_csv;
use stacklab_core::{
    cardinality_bound_check, cesaro_score, chacon_pattern_scan, correlation, eigenvalue_screen, rigidity_scan,
    sample_omega, trial_seeds, BoundReport, MassReport, OmegaDraw, Tower,
};

use crate::config::{DiagnoseConfig, Experiment, ExperimentConfig, LevelSetConfig, Levels, Shifts};
use crate::error::RunError;

/// A file produced by an experiment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: &'static str,
    pub bytes: Vec<u8>,
}

impl Artifact {
    fn text(name: &'static str, text: String) -> Self {
        Self {
            name,
            bytes: text.into_bytes(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub artifacts: Vec<Artifact>,
    pub summary: Value,
}

impl RunOutput {
    pub fn artifact(&self, name: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.name == name)
    }
}

/// One Monte Carlo trial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialRow {
    pub trial: usize,
    pub seed: u64,
    /// `None` when the experiment does not screen.
    pub nontrivial_survivors: Option<usize>,
    pub pattern_stages: usize,
}

/// Number of empty trials when the screen window ends at `end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EndCount {
    pub end: usize,
    pub empty: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonteCarloSummary {
    pub trials: usize,
    pub rows: Vec<TrialRow>,
    /// Trials with no nontrivial survivor; `None` without a screen.
    pub empty: Option<usize>,
    pub with_pattern: usize,
    /// Empty counts for every window end `k1..=k2`, read off the same chains.
    pub by_end: Vec<EndCount>,
}

impl MonteCarloSummary {
    fn fraction(&self, count: usize) -> BigRational {
        BigRational::new(BigInt::from(count), BigInt::from(self.trials))
    }

    pub fn fraction_empty(&self) -> Option<BigRational> {
        self.empty.map(|c| self.fraction(c))
    }

    pub fn fraction_with_pattern(&self) -> BigRational {
        self.fraction(self.with_pattern)
    }

    pub fn fraction_empty_at(&self, end: usize) -> Option<BigRational> {
        self.by_end
            .iter()
            .find(|e| e.end == end)
            .map(|e| self.fraction(e.empty))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("trial,seed,nontrivial_survivors,pattern_stages\n");
        for r in &self.rows {
            let survivors = r.nontrivial_survivors.map(|c| c.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{}\n", r.trial, r.seed, survivors, r.pattern_stages));
        }
        out
    }

    fn to_json(&self) -> Value {
        let frac = |c: usize| format_ratio(&self.fraction(c));
        json!({
            "trials": self.trials,
            "empty_trials": self.empty,
            "fraction_empty": self.empty.map(frac),
            "trials_with_pattern": self.with_pattern,
            "fraction_with_pattern": frac(self.with_pattern),
            "fraction_empty_by_end": self.by_end.iter().map(|e| json!({
                "end": e.end,
                "empty_trials": e.empty,
                "fraction_empty": frac(e.empty),
            })).collect::<Vec<_>>(),
        })
    }
}

/// Runs the configured experiment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput, RunError> {
    match cfg.experiment {
        Experiment::Build => build(cfg),
        Experiment::Sample => sample(cfg),
        Experiment::Screen => screen(cfg),
        Experiment::Diagnose => diagnose(cfg),
        Experiment::MonteCarlo => {
            let mc = montecarlo_wmix(cfg)?;
            Ok(monte_carlo_output(&mc))
        }
        Experiment::ChaconScan => {
            let mc = montecarlo_chacon(cfg)?;
            Ok(monte_carlo_output(&mc))
        }
    }
}

fn monte_carlo_output(mc: &MonteCarloSummary) -> RunOutput {
    RunOutput {
        artifacts: vec![Artifact::text("montecarlo.csv", mc.to_csv())],
        summary: mc.to_json(),
    }
}

/// Builds the tower for single-draw experiments; Ornstein specs are sampled
/// with the master seed.
fn single_tower(cfg: &ExperimentConfig) -> Result<(Tower, Option<OmegaDraw>), RunError> {
    if cfg.spec.is_ornstein() {
        let draw = sample_omega(&cfg.spec, cfg.master_seed)?;
        let tower = draw.tower(&cfg.spec)?;
        Ok((tower, Some(draw)))
    } else {
        Ok((Tower::deterministic(&cfg.spec)?, None))
    }
}

pub fn heights_csv(tower: &Tower) -> String {
    let mut out = String::from("k,height,width_num,width_den,mass_num,mass_den\n");
    for stage in tower.stages() {
        let mass = stage.mass();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            stage.k,
            stage.height,
            stage.width.numer(),
            stage.width.denom(),
            mass.numer(),
            mass.denom()
        ));
    }
    out
}

fn mass_json(report: &MassReport) -> Value {
    json!({
        "partial_sum_spacers": report.partial_sum_spacers.as_ref().map(format_ratio),
        "partial_sum_last": report.partial_sum_last.as_ref().map(format_ratio),
        "total_mass": format_ratio(&report.total_mass_at_k),
        "added_spacer_mass": format_ratio(&report.added_spacer_mass),
        "diverging_risk": report.diverging_risk,
    })
}

fn tower_artifacts(tower: &Tower, draw: Option<&OmegaDraw>) -> Vec<Artifact> {
    let mut artifacts = vec![Artifact::text("heights.csv", heights_csv(tower))];
    if let Some(draw) = draw {
        artifacts.push(Artifact::text("omega.txt", draw.to_golden()));
    }
    artifacts
}

fn tower_json(cfg: &ExperimentConfig, tower: &Tower, draw: Option<&OmegaDraw>) -> Value {
    let top = &tower.stages()[tower.top()];
    json!({
        "stages": tower.top(),
        "draw_seed": draw.map(|d| d.seed),
        "top_height": top.height.to_string(),
        "mass": mass_json(&tower.mass_report(&cfg.mass_threshold)),
    })
}

fn build(cfg: &ExperimentConfig) -> Result<RunOutput, RunError> {
    let (tower, draw) = single_tower(cfg)?;
    Ok(RunOutput {
        artifacts: tower_artifacts(&tower, draw.as_ref()),
        summary: tower_json(cfg, &tower, draw.as_ref()),
    })
}

fn sample(cfg: &ExperimentConfig) -> Result<RunOutput, RunError> {
    // The config check guarantees Ornstein mode here.
    build(cfg)
}

fn screen(cfg: &ExperimentConfig) -> Result<RunOutput, RunError> {
    let (eps, window) = screen_params(cfg)?;
    let (tower, draw) = single_tower(cfg)?;
    let result = eigenvalue_screen(&tower, draw.as_ref(), cfg.sequence, eps, window)?;
    let ratio_bound = BigRational::from_integer(BigInt::from(cfg.spec.p_max()) + 1);
    let bound = match cardinality_bound_check(&result.chain, &ratio_bound) {
        BoundReport::Pass { survivors, bound } => json!({
            "status": "pass", "survivors": survivors, "bound": bound.to_string(),
        }),
        BoundReport::Fail { stage, reason } => json!({ "status": "fail", "stage": stage, "reason": reason }),
        BoundReport::NotApplicable { reason } => json!({ "status": "not_applicable", "reason": reason }),
    };
    let mut artifacts = tower_artifacts(&tower, draw.as_ref());
    artifacts.push(Artifact::text(
        "survivors.csv",
        survivors_to_csv(&result.chain.survivors),
    ));
    Ok(RunOutput {
        artifacts,
        summary: json!({
            "tower": tower_json(cfg, &tower, draw.as_ref()),
            "sequence": result.sequence.name(),
            "window": [window.0, window.1],
            "eps": format_ratio(eps),
            "n": result.chain.tail.values().iter().map(BigUint::to_string).collect::<Vec<_>>(),
            "survivors": result.chain.survivors.len(),
            "nontrivial_survivors": result.nontrivial.len(),
            "bound_check": bound,
        }),
    })
}

fn screen_params(cfg: &ExperimentConfig) -> Result<(&BigRational, (usize, usize)), RunError> {
    let eps = cfg
        .eps
        .as_ref()
        .ok_or_else(|| RunError::Config("eps is required".into()))?;
    let window = cfg
        .window
        .ok_or_else(|| RunError::Config("window is required".into()))?;
    Ok((eps, window))
}

fn level_set(tower: &Tower, set: &LevelSetConfig) -> Result<LevelSet, RunError> {
    match &set.levels {
        Levels::All => Ok(LevelSet::full(tower, set.stage)?),
        Levels::List(levels) => {
            let height = &tower.stage(set.stage)?.height;
            if let Some(bad) = levels.iter().find(|&&l| BigUint::from(l) >= *height) {
                return Err(RunError::Config(format!(
                    "level {bad} is outside stage {} of height {height}",
                    set.stage
                )));
            }
            Ok(LevelSet::new(set.stage, levels.clone()))
        }
    }
}

fn diagnose(cfg: &ExperimentConfig) -> Result<RunOutput, RunError> {
    let d: &DiagnoseConfig = cfg
        .diagnose
        .as_ref()
        .ok_or_else(|| RunError::Config("diagnose section is required".into()))?;
    let (tower, draw) = single_tower(cfg)?;
    let a = level_set(&tower, &d.set_a)?;
    let b = level_set(&tower, &d.set_b)?;
    for set in [&d.set_a, &d.set_b] {
        if set.stage > d.eval_stage {
            return Err(RunError::Config(format!(
                "level set stage {} is above eval_stage {}",
                set.stage, d.eval_stage
            )));
        }
    }
    let eval_height = tower.stage(d.eval_stage)?.height.clone();
    let shifts: Vec<u64> = match &d.shifts {
        Shifts::List(list) => list.clone(),
        Shifts::Heights => tower.stages()[1..]
            .iter()
            .filter(|s| s.height < eval_height)
            .filter_map(|s| u64::try_from(&s.height).ok())
            .collect(),
    };
    let reports = shifts
        .iter()
        .map(|&n| correlation(&tower, &a, &b, n, d.eval_stage))
        .collect::<Result<Vec<_>, _>>()?;
    let rigidity = if a.is_empty() {
        Vec::new()
    } else {
        rigidity_scan(&tower, &a, &shifts, d.eval_stage, &d.threshold)?
    };
    let cesaro = d
        .cesaro_horizon
        .map(|horizon| cesaro_score(&tower, &a, &b, horizon, d.eval_stage))
        .transpose()?;

    let mut artifacts = tower_artifacts(&tower, draw.as_ref());
    artifacts.push(Artifact::text("correlations.csv", correlations_to_csv(&reports)));
    Ok(RunOutput {
        artifacts,
        summary: json!({
            "tower": tower_json(cfg, &tower, draw.as_ref()),
            "eval_stage": d.eval_stage,
            "measure_a": format_ratio(&a.measure(&tower)?),
            "measure_b": format_ratio(&b.measure(&tower)?),
            "rigidity": rigidity.iter().map(|r| json!({
                "n": r.n,
                "overlap_ratio": format_ratio(&r.overlap_ratio),
                "certified_ratio": format_ratio(&r.certified_ratio),
                "certified_ratio_display": to_decimal(&r.certified_ratio, 6),
                "flagged": r.flagged,
            })).collect::<Vec<_>>(),
            "threshold": format_ratio(&d.threshold),
            "cesaro": cesaro.map(|c| json!({
                "horizon": c.horizon,
                "score": format_ratio(&c.score),
                "score_display": to_decimal(&c.score, 6),
                "error_bound": format_ratio(&c.error_bound),
            })),
        }),
    })
}

/// Per trial: sample a draw, screen the configured sequence over the window
/// and scan for Chacon patterns. A failing trial aborts the run.
pub fn montecarlo_wmix(cfg: &ExperimentConfig) -> Result<MonteCarloSummary, RunError> {
    let (eps, (k1, k2)) = screen_params(cfg)?;
    let mut rows = Vec::with_capacity(cfg.trials);
    let mut by_end: Vec<EndCount> = (k1..=k2).map(|end| EndCount { end, empty: 0 }).collect();
    for (trial, seed) in trial_seeds(cfg.master_seed, cfg.trials).into_iter().enumerate() {
        let draw = sample_omega(&cfg.spec, seed)?;
        let tower = draw.tower(&cfg.spec)?;
        let result = eigenvalue_screen(&tower, Some(&draw), cfg.sequence, eps, (k1, k2))?;
        // End k1 is the bare family B(n_k1): only arc 0 when n_k1 = 1.
        if result.chain.n_k0().is_one() {
            by_end[0].empty += 1;
        }
        for stage in &result.chain.stages {
            if stage.arcs.iter().all(|arc| arc.contains_zero()) {
                by_end[stage.index - k1].empty += 1;
            }
        }
        rows.push(TrialRow {
            trial,
            seed,
            nontrivial_survivors: Some(result.nontrivial.len()),
            pattern_stages: chacon_pattern_scan(tower.spacer_stages()).len(),
        });
    }
    Ok(summarize(cfg.trials, rows, by_end))
}

/// Per trial: sample a draw and count stages showing the Chacon pattern.
pub fn montecarlo_chacon(cfg: &ExperimentConfig) -> Result<MonteCarloSummary, RunError> {
    let mut rows = Vec::with_capacity(cfg.trials);
    for (trial, seed) in trial_seeds(cfg.master_seed, cfg.trials).into_iter().enumerate() {
        let draw = sample_omega(&cfg.spec, seed)?;
        let tower = draw.tower(&cfg.spec)?;
        rows.push(TrialRow {
            trial,
            seed,
            nontrivial_survivors: None,
            pattern_stages: chacon_pattern_scan(tower.spacer_stages()).len(),
        });
    }
    Ok(summarize(cfg.trials, rows, Vec::new()))
}

fn summarize(trials: usize, rows: Vec<TrialRow>, by_end: Vec<EndCount>) -> MonteCarloSummary {
    let screened = rows.iter().all(|r| r.nontrivial_survivors.is_some());
    let empty = screened.then(|| rows.iter().filter(|r| r.nontrivial_survivors == Some(0)).count());
    let with_pattern = rows.iter().filter(|r| r.pattern_stages > 0).count();
    debug_assert!(by_end.iter().all(|e| e.empty <= trials));
    MonteCarloSummary {
        trials,
        rows,
        empty,
        with_pattern,
        by_end,
    }
}
