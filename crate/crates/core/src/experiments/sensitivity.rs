//! One-at-a-time parameter perturbation and its effect on the explanatory
//! power of the three-metric model.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::analysis::{fit_model, full_model};
use super::sweep::{record_for, simulate_scenario, ExperimentRecord, ScenarioSummary, SweepConfig, SweptNetwork};
use crate::abm::{ParamError, Scenario, SimParams};

/// A perturbable demographic or dispersal parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameter {
    Initial,
    GrowthRate,
    Litter,
    Mortality,
    DispersalThreshold,
    MeanDispersal,
    Capacity,
}

impl Parameter {
    pub const ALL: [Parameter; 7] = [
        Parameter::Initial,
        Parameter::GrowthRate,
        Parameter::Litter,
        Parameter::Mortality,
        Parameter::DispersalThreshold,
        Parameter::MeanDispersal,
        Parameter::Capacity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Parameter::Initial => "initial",
            Parameter::GrowthRate => "growth_rate",
            Parameter::Litter => "litter",
            Parameter::Mortality => "mortality",
            Parameter::DispersalThreshold => "dispersal_threshold",
            Parameter::MeanDispersal => "mean_dispersal",
            Parameter::Capacity => "capacity",
        }
    }

    fn is_integer(self) -> bool {
        matches!(self, Parameter::Initial | Parameter::Litter | Parameter::Capacity)
    }

    /// The parameter's value in `params`; capacity reports the first node's.
    pub fn get(self, params: &SimParams) -> f64 {
        match self {
            Parameter::Initial => f64::from(params.initial),
            Parameter::GrowthRate => params.growth_rate,
            Parameter::Litter => f64::from(params.litter),
            Parameter::Mortality => params.mortality,
            Parameter::DispersalThreshold => params.dispersal_threshold,
            Parameter::MeanDispersal => params.mean_dispersal,
            Parameter::Capacity => params.capacity.first().copied().map_or(0.0, f64::from),
        }
    }

    /// A copy of `params` with this parameter set to `value`. Integer
    /// parameters take `value` rounded to the nearest integer; capacity is
    /// set on every node.
    pub fn apply(self, params: &SimParams, value: f64) -> SimParams {
        let mut p = params.clone();
        let int = value.round().max(0.0) as u32;
        match self {
            Parameter::Initial => p.initial = int,
            Parameter::GrowthRate => p.growth_rate = value,
            Parameter::Litter => p.litter = int,
            Parameter::Mortality => p.mortality = value,
            Parameter::DispersalThreshold => p.dispersal_threshold = value,
            Parameter::MeanDispersal => p.mean_dispersal = value,
            Parameter::Capacity => p.capacity.iter_mut().for_each(|k| *k = int),
        }
        p
    }
}

impl fmt::Display for Parameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Parameter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Parameter::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown parameter `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shift {
    Down,
    Up,
}

impl Shift {
    pub fn as_str(self) -> &'static str {
        match self {
            Shift::Down => "down",
            Shift::Up => "up",
        }
    }

    pub fn factor(self) -> f64 {
        match self {
            Shift::Down => 0.9,
            Shift::Up => 1.1,
        }
    }
}

/// One perturbed parameter value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub parameter: Parameter,
    pub shift: Shift,
    pub value: f64,
}

impl Perturbation {
    /// The parameter moved by ±10%. Integer parameters round away from the
    /// base value, so a litter of 3 becomes 2 and 4 rather than staying 3.
    pub fn ten_percent(base: &SimParams, parameter: Parameter, shift: Shift) -> Self {
        let raw = parameter.get(base) * shift.factor();
        let value = if parameter.is_integer() {
            // The slack absorbs products such as 150 · 1.1 = 165.00000000000003.
            match shift {
                Shift::Down => (raw + 1e-9).floor(),
                Shift::Up => (raw - 1e-9).ceil(),
            }
        } else {
            raw
        };
        Perturbation { parameter, shift, value }
    }

    pub fn apply(&self, base: &SimParams) -> SimParams {
        self.parameter.apply(base, self.value)
    }
}

/// Both ±10% perturbations of every parameter.
pub fn ten_percent_perturbations(base: &SimParams) -> Vec<Perturbation> {
    Parameter::ALL
        .into_iter()
        .flat_map(|p| [Shift::Down, Shift::Up].map(|s| Perturbation::ten_percent(base, p, s)))
        .collect()
}

/// Effect of one perturbation on one scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SensitivityCell {
    pub perturbation: Perturbation,
    pub scenario: Scenario,
    /// `R²_perturbed − R²_base` of the three-metric model; `None` when the
    /// cell is NA or either fit failed.
    pub delta_r2: Option<f64>,
    /// More than half of the cell's replicates hit the step cap.
    pub na: bool,
}

/// Three-metric R² on the records, `None` when the fit fails.
pub fn full_model_r2(records: &[ExperimentRecord], scenario: Scenario) -> Option<f64> {
    fit_model(records, scenario, &full_model(), false).ok().map(|f| f.r2)
}

/// Runs one scenario on every network under `params`, or returns `None` as
/// soon as more than half of all replicates are certain to censor.
///
/// Networks are run in batches; stopping early never changes a reported
/// value because an NA cell reports no R².
pub fn simulate_cell(
    networks: &[SweptNetwork],
    params: &SimParams,
    config: &SweepConfig,
    scenario: Scenario,
    batch: usize,
) -> Result<Option<Vec<ScenarioSummary>>, ParamError> {
    let total = networks.len() as u64 * u64::from(config.reps);
    let mut censored = 0u64;
    let mut out = Vec::with_capacity(networks.len());
    for chunk in networks.chunks(batch.max(1)) {
        let part = simulate_scenario(chunk, params, config, scenario)?;
        censored += part.iter().map(|s| u64::from(s.censored)).sum::<u64>();
        if 2 * censored > total {
            return Ok(None);
        }
        out.extend(part);
    }
    Ok(Some(out))
}

/// Reruns the scenarios on the same networks and seeds for each
/// perturbation and reports the change in the three-metric model's R².
/// `base_records` must come from the unperturbed parameters.
pub fn sensitivity_sweep(
    networks: &[SweptNetwork],
    base_records: &[ExperimentRecord],
    base: &SimParams,
    perturbations: &[Perturbation],
    config: &SweepConfig,
) -> Result<Vec<SensitivityCell>, ParamError> {
    let batch = rayon::current_num_threads().max(1) * 4;
    let mut cells = Vec::new();
    for pert in perturbations {
        let params = pert.apply(base);
        for scenario in Scenario::ALL {
            let summaries = simulate_cell(networks, &params, config, scenario, batch)?;
            let cell = match summaries {
                None => SensitivityCell {
                    perturbation: *pert,
                    scenario,
                    delta_r2: None,
                    na: true,
                },
                Some(s) => {
                    // Only the scenario under test is read from these records.
                    let records: Vec<ExperimentRecord> = networks
                        .iter()
                        .zip(&s)
                        .map(|(net, sum)| record_for(net, config.reps, *sum, *sum))
                        .collect();
                    let delta = full_model_r2(&records, scenario)
                        .zip(full_model_r2(base_records, scenario))
                        .map(|(p, b)| p - b);
                    SensitivityCell {
                        perturbation: *pert,
                        scenario,
                        delta_r2: delta,
                        na: false,
                    }
                }
            };
            cells.push(cell);
        }
    }
    Ok(cells)
}

pub const SENSITIVITY_HEADER: &str = "parameter,direction,value,scenario,delta_r2,na_flag";

pub fn write_sensitivity_csv<W: std::io::Write>(out: W, cells: &[SensitivityCell]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SENSITIVITY_HEADER.split(','))?;
    for c in cells {
        w.write_record([
            c.perturbation.parameter.as_str(),
            c.perturbation.shift.as_str(),
            &c.perturbation.value.to_string(),
            c.scenario.as_str(),
            &c.delta_r2.map(|d| d.to_string()).unwrap_or_default(),
            if c.na { "NA" } else { "" },
        ])?;
    }
    w.flush()?;
    Ok(())
}
