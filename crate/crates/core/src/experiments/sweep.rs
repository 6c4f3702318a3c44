//! Synthesize one network per target, simulate both scenarios on each, and
//! summarize the replicates as medians.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::median_sorted;
use crate::abm::{derive_seed, run_scenario, Engine, ParamError, Scenario, SimParams, DEFAULT_MAX_STEPS};
use crate::classic::ClassicMetrics;
use crate::eigen::EigenSummary;
use crate::network::WeightedNetwork;
use crate::synthesis::{synthesize, MetricTarget, Residuals, SynthConfig, SynthError};

/// Seed stream for synthesis, kept apart from replicate streams.
const SYNTH_STREAM: u64 = 0;
const SIM_STREAM: u64 = 1;

fn scenario_code(s: Scenario) -> u64 {
    match s {
        Scenario::Spread => 0,
        Scenario::Survival => 1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Replicates per scenario and network.
    pub reps: u32,
    pub master_seed: u64,
    pub max_steps: u64,
    pub engine: Engine,
    pub synth: SynthConfig,
}

impl SweepConfig {
    pub fn new(reps: u32, master_seed: u64) -> Self {
        SweepConfig {
            reps,
            master_seed,
            max_steps: DEFAULT_MAX_STEPS,
            engine: Engine::default(),
            synth: SynthConfig::default(),
        }
    }
}

/// A synthesized network with all its metrics.
#[derive(Debug, Clone)]
pub struct SweptNetwork {
    /// Position of the target in the sweep.
    pub index: usize,
    pub net_id: String,
    pub target: MetricTarget,
    pub network: WeightedNetwork,
    pub eigen: EigenSummary,
    pub classic: ClassicMetrics,
}

impl SweptNetwork {
    /// Measures an existing network; `target` records what it was built for.
    pub fn measure(index: usize, net_id: String, target: MetricTarget, network: WeightedNetwork) -> Result<Self, SynthError> {
        let eigen = EigenSummary::of(&network)?;
        let classic = ClassicMetrics::of(&network).map_err(|e| SynthError::InvalidTarget(e.to_string()))?;
        Ok(SweptNetwork {
            index,
            net_id,
            target,
            network,
            eigen,
            classic,
        })
    }
}

/// A target that could not be synthesized.
#[derive(Debug, Clone)]
pub struct SweepFailure {
    pub index: usize,
    pub target: MetricTarget,
    pub residuals: Option<Residuals>,
    pub message: String,
}

/// One row of the sweep output: a network's metrics and its median
/// outcome times. Censored replicates enter the medians at the step cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub net_id: String,
    pub lambda: f64,
    pub ec_var: f64,
    pub ec_skew: Option<f64>,
    pub mean_strength: f64,
    pub mean_clustering: f64,
    pub mean_shortest_path: f64,
    pub global_eff: f64,
    pub local_eff: f64,
    pub median_spread: f64,
    pub spread_censored: u32,
    pub median_survival: f64,
    pub survival_censored: u32,
    pub reps: u32,
}

impl ExperimentRecord {
    pub fn median(&self, scenario: Scenario) -> f64 {
        match scenario {
            Scenario::Spread => self.median_spread,
            Scenario::Survival => self.median_survival,
        }
    }

    pub fn censored(&self, scenario: Scenario) -> u32 {
        match scenario {
            Scenario::Spread => self.spread_censored,
            Scenario::Survival => self.survival_censored,
        }
    }

    /// More than half the replicates hit the step cap, so the median says
    /// nothing about the network and the cell is left out of regressions.
    pub fn is_na(&self, scenario: Scenario) -> bool {
        2 * self.censored(scenario) > self.reps
    }

    /// Mean EC score, recovered from the variance of a unit vector with
    /// positive mean: `avg = √(1/n − var)`.
    pub fn ec_mean(&self, n: usize) -> f64 {
        (1.0 / n as f64 - self.ec_var).max(0.0).sqrt()
    }
}

/// Everything a sweep produced, in target order.
#[derive(Debug, Clone, Default)]
pub struct SweepOutput {
    pub networks: Vec<SweptNetwork>,
    pub records: Vec<ExperimentRecord>,
    pub failures: Vec<SweepFailure>,
}

/// Synthesizes one network per target; targets that fail are reported and
/// skipped.
pub fn synthesize_targets(targets: &[MetricTarget], master_seed: u64, synth: SynthConfig) -> (Vec<SweptNetwork>, Vec<SweepFailure>) {
    let results: Vec<Result<SweptNetwork, Box<SweepFailure>>> = targets
        .par_iter()
        .enumerate()
        .map(|(index, target)| {
            let seed = derive_seed(master_seed, &[SYNTH_STREAM, index as u64]);
            let fail = |residuals, message: String| {
                Box::new(SweepFailure {
                    index,
                    target: *target,
                    residuals,
                    message,
                })
            };
            match synthesize(target, seed, synth) {
                Ok(s) => SweptNetwork::measure(index, target.file_stem(seed), *target, s.network)
                    .map_err(|e| fail(None, e.to_string())),
                Err(SynthError::Infeasible { residuals, iters, .. }) => Err(fail(
                    Some(residuals),
                    format!("infeasible after {iters} outer iterations"),
                )),
                Err(e) => Err(fail(None, e.to_string())),
            }
        })
        .collect();
    let mut networks = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(n) => networks.push(n),
            Err(f) => failures.push(*f),
        }
    }
    (networks, failures)
}

/// Median and censoring count of one scenario's replicates on one network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioSummary {
    pub median: f64,
    pub censored: u32,
}

/// Runs `config.reps` replicates of one scenario on each network. Replicate
/// seeds depend only on `(master_seed, network index, scenario, replicate)`,
/// so results do not depend on scheduling or on which networks are run
/// together.
pub fn simulate_scenario(
    networks: &[SweptNetwork],
    params: &SimParams,
    config: &SweepConfig,
    scenario: Scenario,
) -> Result<Vec<ScenarioSummary>, ParamError> {
    for net in networks {
        params.validate(net.network.n())?;
    }
    let reps = u64::from(config.reps);
    let jobs: Vec<(usize, u64)> = (0..networks.len()).flat_map(|k| (0..reps).map(move |r| (k, r))).collect();
    let outcomes: Vec<(u64, bool)> = jobs
        .par_iter()
        .map(|&(k, rep)| {
            let net = &networks[k];
            let seed = derive_seed(
                config.master_seed,
                &[SIM_STREAM, net.index as u64, scenario_code(scenario), rep],
            );
            let o = run_scenario(scenario, &net.network, params, seed, config.max_steps, config.engine);
            (o.steps, o.censored)
        })
        .collect();
    if reps == 0 {
        return Ok(vec![ScenarioSummary { median: f64::NAN, censored: 0 }; networks.len()]);
    }
    Ok(outcomes
        .chunks(reps as usize)
        .map(|runs| {
            let mut steps: Vec<f64> = runs.iter().map(|r| r.0 as f64).collect();
            steps.sort_by(f64::total_cmp);
            ScenarioSummary {
                median: median_sorted(&steps),
                censored: runs.iter().filter(|r| r.1).count() as u32,
            }
        })
        .collect())
}

/// Runs both scenarios on every network and assembles the records.
pub fn simulate_networks(
    networks: &[SweptNetwork],
    params: &SimParams,
    config: &SweepConfig,
) -> Result<Vec<ExperimentRecord>, ParamError> {
    let spread = simulate_scenario(networks, params, config, Scenario::Spread)?;
    let survival = simulate_scenario(networks, params, config, Scenario::Survival)?;
    Ok(networks
        .iter()
        .zip(spread.iter().zip(&survival))
        .map(|(net, (sp, su))| record_for(net, config.reps, *sp, *su))
        .collect())
}

/// Combines a network's metrics with its scenario summaries.
pub fn record_for(net: &SweptNetwork, reps: u32, spread: ScenarioSummary, survival: ScenarioSummary) -> ExperimentRecord {
    ExperimentRecord {
        net_id: net.net_id.clone(),
        lambda: net.eigen.lambda,
        ec_var: net.eigen.ec_var,
        ec_skew: net.eigen.ec_skew,
        mean_strength: net.classic.mean_strength,
        mean_clustering: net.classic.mean_clustering,
        mean_shortest_path: net.classic.mean_shortest_path,
        global_eff: net.classic.global_efficiency,
        local_eff: net.classic.local_efficiency,
        median_spread: spread.median,
        spread_censored: spread.censored,
        median_survival: survival.median,
        survival_censored: survival.censored,
        reps,
    }
}

/// Synthesizes every target and simulates both scenarios on the networks
/// that succeeded.
pub fn run_sweep(targets: &[MetricTarget], params: &SimParams, config: &SweepConfig) -> Result<SweepOutput, ParamError> {
    let (networks, failures) = synthesize_targets(targets, config.master_seed, config.synth);
    let records = simulate_networks(&networks, params, config)?;
    Ok(SweepOutput {
        networks,
        records,
        failures,
    })
}

pub const RECORDS_HEADER: &str = "net_id,lambda,ec_var,ec_skew,mean_strength,mean_clustering,mean_shortest_path,global_eff,local_eff,median_spread,spread_censored,median_survival,survival_censored,reps";

/// Writes records as CSV; undefined skewness is an empty field.
pub fn write_records_csv<W: std::io::Write>(out: W, records: &[ExperimentRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if records.is_empty() {
        w.write_record(RECORDS_HEADER.split(','))?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records_csv<R: std::io::Read>(input: R) -> csv::Result<Vec<ExperimentRecord>> {
    csv::Reader::from_reader(input).deserialize().collect()
}
