//! Stochastic agent-based metapopulation model.
//!
//! Agents are interchangeable, so the state is a vector of per-node counts.
//! One step runs, in order:
//!
//! 1. freeze each node's density `D_i = x_i / K_i`;
//! 2. mortality, each agent independently with probability `q`;
//! 3. reproduction, each survivor producing `f` offspring with probability
//!    `max(0, 1 − exp(−r (1 − D_i)))`;
//! 4. dispersal of survivors (not newborns) with probability
//!    `min(1, D_i / D_U)`, to a uniformly chosen other node. The move
//!    succeeds according to an exponential dispersal draw against the edge
//!    weight; a failed mover dies, and a mover arriving at a node already at
//!    carrying capacity dies from competition.
//!
//! Two engines implement the same step: [`Engine::PerAgent`] draws one
//! Bernoulli per agent and event, [`Engine::Aggregated`] draws binomial and
//! multinomial totals per node. They agree in distribution.
//!
//! Arrivals are settled after every node has resolved its departures, so a
//! node's room for immigrants is its capacity minus its own post-departure
//! count.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::WeightedNetwork;

/// Default step cap for a single replicate.
pub const DEFAULT_MAX_STEPS: u64 = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("{name} = {value} is not a probability")]
    NotProbability { name: &'static str, value: f64 },
    #[error("{name} = {value} must be positive and finite")]
    NotPositive { name: &'static str, value: f64 },
    #[error("carrying capacity of node {0} must be at least 1")]
    ZeroCapacity(usize),
    #[error("{got} carrying capacities for a {n}-node network")]
    CapacityLength { got: usize, n: usize },
    #[error("unknown scenario `{0}` (expected spread or survival)")]
    UnknownScenario(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Time from one seeded node until every node has been occupied.
    Spread,
    /// Time until no agent is left anywhere.
    Survival,
}

impl Scenario {
    pub const ALL: [Scenario; 2] = [Scenario::Spread, Scenario::Survival];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Spread => "spread",
            Scenario::Survival => "survival",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = ParamError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "spread" => Ok(Scenario::Spread),
            "survival" => Ok(Scenario::Survival),
            _ => Err(ParamError::UnknownScenario(s.to_string())),
        }
    }
}

/// How the exponential dispersal draw is compared with the edge weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DispersalSuccess {
    /// The mover arrives when its dispersal distance covers the corridor,
    /// `Exp(M) ≥ W`, so success falls with distance: `P = e^{−W/M}`.
    #[default]
    DrawCoversWeight,
    /// The inequality read literally, `Exp(M) < W`: `P = 1 − e^{−W/M}`.
    DrawBelowWeight,
}

impl DispersalSuccess {
    pub fn probability(self, weight: f64, mean_distance: f64) -> f64 {
        let tail = (-weight / mean_distance).exp();
        match self {
            DispersalSuccess::DrawCoversWeight => tail,
            DispersalSuccess::DrawBelowWeight => 1.0 - tail,
        }
    }

    fn succeeds(self, draw: f64, weight: f64) -> bool {
        match self {
            DispersalSuccess::DrawCoversWeight => draw >= weight,
            DispersalSuccess::DrawBelowWeight => draw < weight,
        }
    }
}

/// Demographic and dispersal parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    /// Agents placed on each seeded node.
    pub initial: u32,
    /// Agents seeded for the spread scenario, when it differs from `initial`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spread_initial: Option<u32>,
    /// Intrinsic growth rate per step.
    pub growth_rate: f64,
    /// Offspring per successful birth event.
    pub litter: u32,
    /// Per-step death probability.
    pub mortality: f64,
    /// Density at and above which dispersal is certain.
    pub dispersal_threshold: f64,
    /// Mean of the exponential dispersal distance (km).
    pub mean_dispersal: f64,
    /// Carrying capacity of every node.
    pub capacity: Vec<u32>,
    #[serde(default)]
    pub success_rule: DispersalSuccess,
}

impl SimParams {
    /// Prairie-dog calibration: 150 initial agents, r = 0.74, litter 3,
    /// mortality 0.4, threshold 0.9, mean dispersal 2 km, capacity 150.
    pub fn prairie_dog(n: usize) -> Self {
        SimParams {
            initial: 150,
            spread_initial: None,
            growth_rate: 0.74,
            litter: 3,
            mortality: 0.4,
            dispersal_threshold: 0.9,
            mean_dispersal: 2.0,
            capacity: vec![150; n],
            success_rule: DispersalSuccess::default(),
        }
    }

    pub fn validate(&self, n: usize) -> Result<(), ParamError> {
        if !(0.0..=1.0).contains(&self.mortality) {
            return Err(ParamError::NotProbability {
                name: "mortality",
                value: self.mortality,
            });
        }
        if !(self.dispersal_threshold > 0.0 && self.dispersal_threshold <= 1.0) {
            return Err(ParamError::NotProbability {
                name: "dispersal_threshold",
                value: self.dispersal_threshold,
            });
        }
        if !(self.growth_rate.is_finite() && self.growth_rate >= 0.0) {
            return Err(ParamError::NotPositive {
                name: "growth_rate",
                value: self.growth_rate,
            });
        }
        if !(self.mean_dispersal.is_finite() && self.mean_dispersal > 0.0) {
            return Err(ParamError::NotPositive {
                name: "mean_dispersal",
                value: self.mean_dispersal,
            });
        }
        if self.capacity.len() != n {
            return Err(ParamError::CapacityLength {
                got: self.capacity.len(),
                n,
            });
        }
        if let Some(i) = self.capacity.iter().position(|&k| k == 0) {
            return Err(ParamError::ZeroCapacity(i));
        }
        Ok(())
    }

    /// Probability that one survivor reproduces at frozen density `d`.
    pub fn birth_probability(&self, d: f64) -> f64 {
        (1.0 - (-self.growth_rate * (1.0 - d)).exp()).max(0.0)
    }

    /// Probability that one survivor tries to disperse at frozen density `d`.
    pub fn dispersal_probability(&self, d: f64) -> f64 {
        if d >= self.dispersal_threshold {
            1.0
        } else {
            d / self.dispersal_threshold
        }
    }

    pub fn success_probability(&self, weight: f64) -> f64 {
        self.success_rule.probability(weight, self.mean_dispersal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    #[default]
    Aggregated,
    PerAgent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub scenario: Scenario,
    pub steps: u64,
    pub censored: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub counts: Vec<u64>,
    pub frozen_density: Vec<f64>,
    pub ever_occupied: Vec<bool>,
    pub t: u64,
}

impl SimState {
    /// Spread seeds `spread_initial` (default `initial`) agents on one
    /// uniformly chosen node; survival seeds `initial` on every node.
    pub fn initialize<R: Rng + ?Sized>(
        scenario: Scenario,
        net: &WeightedNetwork,
        params: &SimParams,
        rng: &mut R,
    ) -> Self {
        let n = net.n();
        let mut counts = vec![0u64; n];
        match scenario {
            Scenario::Spread => {
                counts[rng.random_range(0..n)] = u64::from(params.spread_initial.unwrap_or(params.initial))
            }
            Scenario::Survival => counts.iter_mut().for_each(|c| *c = u64::from(params.initial)),
        }
        let ever_occupied = counts.iter().map(|&c| c > 0).collect();
        let frozen_density = densities(&counts, &params.capacity);
        SimState {
            counts,
            frozen_density,
            ever_occupied,
            t: 0,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn fully_occupied(&self) -> bool {
        self.ever_occupied.iter().all(|&b| b)
    }

    pub fn is_finished(&self, scenario: Scenario) -> bool {
        match scenario {
            Scenario::Spread => self.fully_occupied(),
            Scenario::Survival => self.total() == 0,
        }
    }

    /// Advances the state by one step.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        net: &WeightedNetwork,
        params: &SimParams,
        engine: Engine,
        rng: &mut R,
    ) {
        let kernel = DispersalKernel::new(net, params);
        self.step_with(&kernel, net, params, engine, rng);
    }

    fn step_with<R: Rng + ?Sized>(
        &mut self,
        kernel: &DispersalKernel,
        net: &WeightedNetwork,
        params: &SimParams,
        engine: Engine,
        rng: &mut R,
    ) {
        self.frozen_density = densities(&self.counts, &params.capacity);
        match engine {
            Engine::Aggregated => self.step_aggregated(kernel, params, rng),
            Engine::PerAgent => self.step_per_agent(net, params, rng),
        }
        for (occ, &c) in self.ever_occupied.iter_mut().zip(&self.counts) {
            *occ |= c > 0;
        }
        self.t += 1;
    }

    fn step_aggregated<R: Rng + ?Sized>(&mut self, kernel: &DispersalKernel, params: &SimParams, rng: &mut R) {
        let n = self.counts.len();
        let mut arrivals = vec![0u64; n];
        for i in 0..n {
            if self.counts[i] == 0 {
                continue;
            }
            let d = self.frozen_density[i];
            let survivors = binomial(rng, self.counts[i], 1.0 - params.mortality);
            let births = u64::from(params.litter) * binomial(rng, survivors, params.birth_probability(d));
            let movers = binomial(rng, survivors, params.dispersal_probability(d));
            self.counts[i] = survivors - movers + births;

            // Uniform targets thinned by per-edge success: the number of
            // successful movers is binomial with the mean success
            // probability, and they split over targets in proportion to it.
            let mut left = binomial(rng, movers, kernel.mean_success[i]);
            for &(j, p) in &kernel.split[i] {
                if left == 0 {
                    break;
                }
                let to_j = binomial(rng, left, p);
                arrivals[j] += to_j;
                left -= to_j;
            }
        }
        for j in 0..n {
            let room = u64::from(params.capacity[j]).saturating_sub(self.counts[j]);
            self.counts[j] += arrivals[j].min(room);
        }
    }

    fn step_per_agent<R: Rng + ?Sized>(&mut self, net: &WeightedNetwork, params: &SimParams, rng: &mut R) {
        let n = net.n();
        let distance = Exp::new(1.0 / params.mean_dispersal).expect("mean dispersal is positive");
        // (target, origin) of every mover that reached its target alive
        let mut landed: Vec<usize> = Vec::new();
        for i in 0..n {
            let d = self.frozen_density[i];
            let p_birth = params.birth_probability(d);
            let p_move = params.dispersal_probability(d);
            let mut stay = 0u64;
            for _ in 0..self.counts[i] {
                if rng.random::<f64>() < params.mortality {
                    continue;
                }
                if rng.random::<f64>() < p_birth {
                    stay += u64::from(params.litter);
                }
                if rng.random::<f64>() < p_move {
                    let mut j = rng.random_range(0..n - 1);
                    if j >= i {
                        j += 1;
                    }
                    let draw: f64 = distance.sample(rng);
                    if params.success_rule.succeeds(draw, net.weight(i, j)) {
                        landed.push(j);
                    }
                } else {
                    stay += 1;
                }
            }
            self.counts[i] = stay;
        }
        for j in landed {
            if self.counts[j] < u64::from(params.capacity[j]) {
                self.counts[j] += 1;
            }
        }
    }
}

/// Per-source dispersal success, precomputed once per run.
struct DispersalKernel {
    /// Success probability averaged over the `n − 1` uniform targets.
    mean_success: Vec<f64>,
    /// `(target, p)` in order, `p` being the chance a still-unassigned
    /// successful mover goes to `target`; the last entry has `p = 1`.
    split: Vec<Vec<(usize, f64)>>,
}

impl DispersalKernel {
    fn new(net: &WeightedNetwork, params: &SimParams) -> Self {
        let n = net.n();
        let mut mean_success = Vec::with_capacity(n);
        let mut split = Vec::with_capacity(n);
        for i in 0..n {
            let probs: Vec<(usize, f64)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (j, params.success_probability(net.weight(i, j))))
                .collect();
            let total: f64 = probs.iter().map(|p| p.1).sum();
            mean_success.push(total / (n - 1) as f64);
            let mut remaining = total;
            let mut row = Vec::with_capacity(n - 1);
            for (k, &(j, p)) in probs.iter().enumerate() {
                let cond = if k + 1 == probs.len() || remaining <= 0.0 {
                    1.0
                } else {
                    (p / remaining).min(1.0)
                };
                row.push((j, cond));
                remaining -= p;
            }
            split.push(row);
        }
        DispersalKernel { mean_success, split }
    }
}

fn densities(counts: &[u64], capacity: &[u32]) -> Vec<f64> {
    counts
        .iter()
        .zip(capacity)
        .map(|(&x, &k)| x as f64 / f64::from(k))
        .collect()
}

fn binomial<R: Rng + ?Sized>(rng: &mut R, trials: u64, p: f64) -> u64 {
    if trials == 0 || p <= 0.0 {
        0
    } else if p >= 1.0 {
        trials
    } else {
        Binomial::new(trials, p).expect("p checked in (0, 1)").sample(rng)
    }
}

/// Runs one replicate until its stop condition or `max_steps`.
///
/// A spread run whose population dies out before full occupation can never
/// finish, so it is reported censored at `max_steps` right away.
pub fn run_scenario(
    scenario: Scenario,
    net: &WeightedNetwork,
    params: &SimParams,
    seed: u64,
    max_steps: u64,
    engine: Engine,
) -> SimOutcome {
    run_traced(scenario, net, params, seed, max_steps, engine, |_| {})
}

/// [`run_scenario`] with a callback on the initial state and after each step.
pub fn run_traced(
    scenario: Scenario,
    net: &WeightedNetwork,
    params: &SimParams,
    seed: u64,
    max_steps: u64,
    engine: Engine,
    mut observe: impl FnMut(&SimState),
) -> SimOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kernel = DispersalKernel::new(net, params);
    let mut state = SimState::initialize(scenario, net, params, &mut rng);
    observe(&state);
    let censored = |seed| SimOutcome {
        scenario,
        steps: max_steps,
        censored: true,
        seed,
    };
    while state.t < max_steps {
        state.step_with(&kernel, net, params, engine, &mut rng);
        observe(&state);
        if state.is_finished(scenario) {
            return SimOutcome {
                scenario,
                steps: state.t,
                censored: false,
                seed,
            };
        }
        if scenario == Scenario::Spread && state.total() == 0 {
            return censored(seed);
        }
    }
    censored(seed)
}

/// Writes outcomes as CSV with header `scenario,net_id,seed,steps,censored`.
pub fn write_outcomes_csv<W: std::io::Write>(out: W, net_id: &str, outcomes: &[SimOutcome]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scenario", "net_id", "seed", "steps", "censored"])?;
    for o in outcomes {
        w.write_record([
            o.scenario.as_str(),
            net_id,
            &o.seed.to_string(),
            &o.steps.to_string(),
            &o.censored.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Replicate trace as CSV rows `t,node,count`, one row per node and step.
pub struct TraceWriter<W: std::io::Write> {
    inner: csv::Writer<W>,
}

impl<W: std::io::Write> TraceWriter<W> {
    pub fn new(out: W) -> csv::Result<Self> {
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record(["t", "node", "count"])?;
        Ok(TraceWriter { inner })
    }

    pub fn record(&mut self, state: &SimState) -> csv::Result<()> {
        for (node, count) in state.counts.iter().enumerate() {
            self.inner
                .write_record([state.t.to_string(), node.to_string(), count.to_string()])?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> csv::Result<W> {
        self.inner.flush()?;
        self.inner.into_inner().map_err(|e| e.into_error().into())
    }
}

/// Mixes a master seed with stream coordinates into an independent seed.
pub fn derive_seed(master: u64, coords: &[u64]) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    coords.iter().fold(splitmix(master), |acc, &c| splitmix(acc ^ splitmix(c)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Bounds;

    fn net(n: usize, w: f64) -> WeightedNetwork {
        WeightedNetwork::uniform(n, w, Bounds::default()).unwrap()
    }

    #[test]
    fn survival_initialization() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = SimState::initialize(Scenario::Survival, &net(6, 4.0), &SimParams::prairie_dog(6), &mut rng);
        assert_eq!(s.counts, vec![150; 6]);
        assert!(s.fully_occupied());
        assert_eq!(s.t, 0);
    }

    #[test]
    fn spread_initialization_is_seeded() {
        let p = SimParams::prairie_dog(6);
        let g = net(6, 4.0);
        let mut seen = std::collections::BTreeSet::new();
        for seed in 0..40 {
            let a = SimState::initialize(Scenario::Spread, &g, &p, &mut ChaCha8Rng::seed_from_u64(seed));
            let b = SimState::initialize(Scenario::Spread, &g, &p, &mut ChaCha8Rng::seed_from_u64(seed));
            assert_eq!(a, b);
            assert_eq!(a.total(), 150);
            assert_eq!(a.counts.iter().filter(|&&c| c > 0).count(), 1);
            assert_eq!(a.ever_occupied.iter().filter(|&&o| o).count(), 1);
            seen.insert(a.counts.iter().position(|&c| c > 0).unwrap());
        }
        assert!(seen.len() > 1);
    }

    #[test]
    fn certain_death() {
        let mut p = SimParams::prairie_dog(6);
        p.mortality = 1.0;
        let g = net(6, 2.0);
        for engine in [Engine::Aggregated, Engine::PerAgent] {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let mut s = SimState::initialize(Scenario::Survival, &g, &p, &mut rng);
            s.step(&g, &p, engine, &mut rng);
            assert_eq!(s.total(), 0);
            let out = run_scenario(Scenario::Survival, &g, &p, 9, 100, engine);
            assert_eq!(out.steps, 1);
            assert!(!out.censored);
        }
    }

    #[test]
    fn event_probabilities() {
        let p = SimParams::prairie_dog(2);
        assert!((p.birth_probability(0.0) - (1.0 - (-0.74f64).exp())).abs() < 1e-15);
        assert!((p.birth_probability(0.0) - 0.5229).abs() < 1e-4);
        assert_eq!(p.birth_probability(1.2), 0.0);
        assert_eq!(p.dispersal_probability(0.9), 1.0);
        assert_eq!(p.dispersal_probability(1.5), 1.0);
        assert!((p.dispersal_probability(0.45) - 0.5).abs() < 1e-15);
        let below = DispersalSuccess::DrawBelowWeight.probability(4.0, 2.0);
        assert!((below - 0.8647).abs() < 1e-4);
        let covers = DispersalSuccess::DrawCoversWeight.probability(4.0, 2.0);
        assert!((covers + below - 1.0).abs() < 1e-15);
    }

    #[test]
    fn agents_only_come_from_births() {
        let p = SimParams::prairie_dog(4);
        let g = WeightedNetwork::from_upper(4, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], Bounds::default()).unwrap();
        for engine in [Engine::Aggregated, Engine::PerAgent] {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let mut s = SimState::initialize(Scenario::Survival, &g, &p, &mut rng);
            for _ in 0..200 {
                let before = s.counts.clone();
                let occ = s.ever_occupied.clone();
                s.step(&g, &p, engine, &mut rng);
                let old: u64 = before.iter().sum();
                assert!(s.total() <= (1 + u64::from(p.litter)) * old);
                for i in 0..4 {
                    assert!(!occ[i] || s.ever_occupied[i]);
                }
                for (i, &d) in s.frozen_density.iter().enumerate() {
                    assert_eq!(d, before[i] as f64 / 150.0);
                }
            }
        }
    }

    #[test]
    fn determinism() {
        let p = SimParams::prairie_dog(6);
        let g = net(6, 3.0);
        for scenario in Scenario::ALL {
            let a = run_scenario(scenario, &g, &p, 42, 5_000, Engine::Aggregated);
            let b = run_scenario(scenario, &g, &p, 42, 5_000, Engine::Aggregated);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn censored_runs_hit_the_cap() {
        let p = SimParams::prairie_dog(6);
        let g = net(6, 1.0);
        let out = run_scenario(Scenario::Survival, &g, &p, 1, 5, Engine::Aggregated);
        assert!(out.censored);
        assert_eq!(out.steps, 5);
    }

    #[test]
    fn extinct_spread_is_censored() {
        let mut p = SimParams::prairie_dog(3);
        p.initial = 0;
        let g = net(3, 5.0);
        let out = run_scenario(Scenario::Spread, &g, &p, 1, 50, Engine::Aggregated);
        assert!(out.censored);
        assert_eq!(out.steps, 50);
    }

    #[test]
    fn params_validation() {
        let mut p = SimParams::prairie_dog(3);
        assert!(p.validate(3).is_ok());
        assert!(matches!(p.validate(4), Err(ParamError::CapacityLength { .. })));
        p.mortality = 1.5;
        assert!(p.validate(3).is_err());
        let mut p = SimParams::prairie_dog(3);
        p.capacity[1] = 0;
        assert_eq!(p.validate(3), Err(ParamError::ZeroCapacity(1)));
        assert_eq!("Survival".parse::<Scenario>().unwrap(), Scenario::Survival);
        assert!("x".parse::<Scenario>().is_err());
    }

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(7, &[0, 1, 2]);
        assert_eq!(a, derive_seed(7, &[0, 1, 2]));
        assert_ne!(a, derive_seed(7, &[0, 1, 3]));
        assert_ne!(a, derive_seed(8, &[0, 1, 2]));
        assert_ne!(derive_seed(7, &[1, 0]), derive_seed(7, &[0, 1]));
    }

    fn population_after(engine: Engine, steps: u64, seed: u64) -> (f64, f64) {
        let g = WeightedNetwork::from_upper(2, &[3.0], Bounds::default()).unwrap();
        let p = SimParams::prairie_dog(2);
        let mut at = (0.0, 0.0);
        run_traced(Scenario::Survival, &g, &p, seed, steps, engine, |s| {
            at = (s.counts[0] as f64, s.total() as f64)
        });
        at
    }

    #[test]
    fn engines_agree_in_distribution() {
        use crate::experiments::stats::ks_two_sample;
        let reps = 2_000;
        let (mut a0, mut at, mut b0, mut bt) = (vec![], vec![], vec![], vec![]);
        for r in 0..reps {
            let (x, y) = population_after(Engine::Aggregated, 4, derive_seed(1, &[r]));
            a0.push(x);
            at.push(y);
            let (x, y) = population_after(Engine::PerAgent, 4, derive_seed(2, &[r]));
            b0.push(x);
            bt.push(y);
        }
        assert!(ks_two_sample(&a0, &b0).unwrap().p_value > 0.01);
        assert!(ks_two_sample(&at, &bt).unwrap().p_value > 0.01);
    }

    #[test]
    fn one_step_colonization_matches_closed_form() {
        // q = 0 and N = K: density 1, so all 150 agents leave at once and none
        // are born; the far node is reached iff one of them succeeds
        let w = 12.0;
        let g = WeightedNetwork::from_upper(2, &[w], Bounds::default()).unwrap();
        let mut p = SimParams::prairie_dog(2);
        p.mortality = 0.0;
        let per_agent = p.success_probability(w);
        let expect = 1.0 - (1.0 - per_agent).powi(150);
        for engine in [Engine::Aggregated, Engine::PerAgent] {
            let reps = 10_000;
            let hits = (0..reps)
                .filter(|&r| {
                    let o = run_scenario(Scenario::Spread, &g, &p, derive_seed(5, &[r]), 1, engine);
                    !o.censored && o.steps == 1
                })
                .count() as f64;
            let freq = hits / reps as f64;
            let sd = (expect * (1.0 - expect) / reps as f64).sqrt();
            assert!((freq - expect).abs() < 4.0 * sd, "{engine:?}: {freq} vs {expect}");
        }
    }

    #[test]
    fn higher_mortality_never_lengthens_survival() {
        let g = WeightedNetwork::from_upper(4, &[2.0, 5.0, 9.0, 3.0, 12.0, 7.0], Bounds::default()).unwrap();
        let median = |q: f64| {
            let mut p = SimParams::prairie_dog(4);
            p.mortality = q;
            let mut v: Vec<u64> = (0..200)
                .map(|r| run_scenario(Scenario::Survival, &g, &p, derive_seed(9, &[r]), 2_000, Engine::Aggregated).steps)
                .collect();
            v.sort_unstable();
            (v[99] + v[100]) as f64 / 2.0
        };
        assert!(median(0.9) <= median(0.4));
    }

    #[test]
    fn spread_can_seed_differently() {
        let mut p = SimParams::prairie_dog(6);
        p.spread_initial = Some(5);
        let g = net(6, 4.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(SimState::initialize(Scenario::Spread, &g, &p, &mut rng).total(), 5);
        assert_eq!(SimState::initialize(Scenario::Survival, &g, &p, &mut rng).total(), 900);
        let json = serde_json::to_string(&SimParams::prairie_dog(2)).unwrap();
        assert!(!json.contains("spread_initial"));
    }

    #[test]
    fn csv_outputs() {
        let g = net(3, 2.0);
        let p = SimParams::prairie_dog(3);
        let mut trace = TraceWriter::new(Vec::new()).unwrap();
        let mut err = None;
        let o = run_traced(Scenario::Survival, &g, &p, 4, 2, Engine::Aggregated, |s| {
            if let Err(e) = trace.record(s) {
                err = Some(e);
            }
        });
        assert!(err.is_none());
        let text = String::from_utf8(trace.finish().unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,node,count");
        assert_eq!(lines[1], "0,0,150");
        assert_eq!(lines.len(), 1 + 3 * 3);
        let mut buf = Vec::new();
        write_outcomes_csv(&mut buf, "net_a", &[o]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "scenario,net_id,seed,steps,censored\nsurvival,net_a,4,2,true\n");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn counts_stay_bounded(
                upper in proptest::collection::vec(1.0f64..20.0, 6),
                q in 0.0f64..1.0,
                litter in 0u32..5,
                seed in any::<u64>(),
                per_agent in any::<bool>(),
            ) {
                let g = WeightedNetwork::from_upper(4, &upper, Bounds::default()).unwrap();
                let mut p = SimParams::prairie_dog(4);
                p.mortality = q;
                p.litter = litter;
                let engine = if per_agent { Engine::PerAgent } else { Engine::Aggregated };
                let mut prev: Option<SimState> = None;
                run_traced(Scenario::Survival, &g, &p, seed, 30, engine, |s| {
                    if let Some(old) = &prev {
                        // each agent leaves at most itself plus one litter
                        assert!(s.total() <= old.total() * (1 + u64::from(litter)));
                        assert!(old.ever_occupied.iter().zip(&s.ever_occupied).all(|(a, b)| !a || *b));
                        assert_eq!(s.t, old.t + 1);
                    }
                    prev = Some(s.clone());
                });
            }
        }
    }
}
