//! Experiment configuration files.

use std::path::{Path, PathBuf};

use branchlab::cb::{CbRunOptions, CbiScheme, Mechanism, PathFunctional};
use branchlab::continuum::{BismutCase, BrownianModel, ExcursionFunctional, SurveyOptions};
use branchlab::discrete_lab::Mode;
use branchlab::exact::Condition;
use branchlab::offspring::{OffspringDist, OffspringSpec};
use branchlab::tree::Functional;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub experiment: Experiment,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    Exact {
        offspring: OffspringSpec,
        functional: Functional,
        n_max: u64,
        #[serde(default)]
        forest_sizes: Vec<u64>,
    },
    Sample {
        offspring: OffspringSpec,
        sampler: SamplerKind,
        count: u64,
        #[serde(default = "default_node_cap")]
        node_cap: usize,
        #[serde(default = "default_attempts")]
        max_attempts: u64,
    },
    ConvergeTail(Convergence),
    ConvergePoint(Convergence),
    Ratio {
        offspring: OffspringSpec,
        functional: Functional,
        forest_sizes: Vec<u64>,
        #[serde(default)]
        shifts: Vec<u64>,
        n_grid: Vec<u64>,
        mode: Mode,
    },
    CbVerify {
        mechanism: Mechanism,
        check: CbCheck,
    },
    Continuum {
        model: BrownianModel,
        task: ContinuumTask,
    },
    ProbeConjecture {
        offspring: OffspringSpec,
        functional: Functional,
        b: u32,
        n_grid: Vec<u64>,
        reps: u64,
    },
}

impl Experiment {
    /// The subcommand that runs this experiment.
    pub fn command(&self) -> &'static str {
        match self {
            Experiment::Exact { .. } => "exact",
            Experiment::Sample { .. } => "sample",
            Experiment::ConvergeTail(_) => "converge-tail",
            Experiment::ConvergePoint(_) => "converge-point",
            Experiment::Ratio { .. } => "ratio",
            Experiment::CbVerify { .. } => "cb-verify",
            Experiment::Continuum { .. } => "continuum",
            Experiment::ProbeConjecture { .. } => "probe-conjecture",
        }
    }
}

fn default_node_cap() -> usize {
    branchlab::samplers::DEFAULT_NODE_CAP
}

fn default_attempts() -> u64 {
    1_000_000_000
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Convergence {
    pub offspring: OffspringSpec,
    pub functional: Functional,
    pub b: u32,
    pub n_grid: Vec<u64>,
    pub mode: Mode,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplerKind {
    Gw,
    Forest { k: usize },
    ImmortalPrefix { b: u32 },
    CappedSpinePrefix { b: u32 },
    Conditioned { functional: Functional, condition: Condition },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CbCheck {
    Lccb {
        x: f64,
        b: f64,
        r_grid: Vec<f64>,
        functional: PathFunctional,
        lambdas: Vec<f64>,
        reps: u64,
        #[serde(default)]
        run: Option<CbRunOptions>,
    },
    ScaleRatio {
        x_grid: Vec<f64>,
        r_grid: Vec<f64>,
    },
    MassTail {
        x_grid: Vec<f64>,
        r_grid: Vec<f64>,
        shift: f64,
        #[serde(default)]
        lambdas: Vec<f64>,
        reps: u64,
    },
    Paths {
        x: f64,
        dt: f64,
        steps: usize,
        count: u64,
        #[serde(default)]
        immigration: Option<CbiScheme>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ContinuumTask {
    /// Summaries of all excursions completed within `total_time`.
    Excursions {
        total_time: f64,
        levels: Vec<f64>,
        bandwidth: f64,
        /// Also write every path as little-endian f32 heights.
        #[serde(default)]
        dump_paths: bool,
    },
    Spinal {
        horizon: f64,
        #[serde(default)]
        condensation: bool,
    },
    Bismut {
        level: f64,
        reference: f64,
        #[serde(default)]
        cases: Option<Vec<BismutCase>>,
        reps: u64,
        spinal_reps: u64,
        survey: SurveyOptions,
    },
    LocalTimeProfile {
        levels: Vec<f64>,
        reference: f64,
        reps: u64,
        survey: SurveyOptions,
    },
    ConditionedLimit {
        functional: ExcursionFunctional,
        level: f64,
        r_grid: Vec<f64>,
        reps: u64,
        reference_reps: u64,
        survey: SurveyOptions,
    },
    MaxIdentity {
        x: f64,
        r_grid: Vec<f64>,
        reps: u64,
        local_time: f64,
    },
    SupRatio {
        levels: Vec<f64>,
        factor: f64,
        reps: u64,
    },
    /// Measures step-size bands by rerunning at a quarter of the step.
    DeltaBand {
        bismut_dt: f64,
        max_dt: f64,
        reps: u64,
    },
}

pub fn offspring(spec: &OffspringSpec) -> branchlab::Result<OffspringDist> {
    OffspringDist::from_spec(spec)
}

/// Rebuilds the model through its checked constructor.
pub fn model(m: &BrownianModel) -> branchlab::Result<BrownianModel> {
    BrownianModel::new(m.alpha, m.beta, m.dt)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_fields_are_rejected() {
        let ok = r#"{"seed":1,"experiment":{"kind":"exact","offspring":{"family":"explicit","pmf":[0.5,0,0.5]},
            "functional":{"kind":"height"},"n_max":4}}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(ok).is_ok());
        let extra = ok.replacen("\"n_max\":4", "\"n_max\":4,\"colour\":1", 1);
        assert!(serde_json::from_str::<ExperimentConfig>(&extra).is_err());
        let no_seed = ok.replacen("\"seed\":1,", "", 1);
        assert!(serde_json::from_str::<ExperimentConfig>(&no_seed).is_err());
    }
}
