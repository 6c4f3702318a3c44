//! Model selection, rank correlations and trends over sweep records.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::stats::{lowess, ols, spearman, Correlation, StatsError};
use super::sweep::ExperimentRecord;
use crate::abm::Scenario;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error("empty model term")]
    EmptyTerm,
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// The eigen-metrics used as regressors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Lambda,
    Var,
    Skew,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Lambda, Metric::Var, Metric::Skew];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Lambda => "lambda",
            Metric::Var => "var",
            Metric::Skew => "skew",
        }
    }

    pub fn value(self, r: &ExperimentRecord) -> Option<f64> {
        match self {
            Metric::Lambda => Some(r.lambda),
            Metric::Var => Some(r.ec_var),
            Metric::Skew => r.ec_skew,
        }
    }
}

impl FromStr for Metric {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| AnalysisError::UnknownMetric(s.to_string()))
    }
}

/// A regressor: the product of one or more metrics.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Term(Vec<Metric>);

impl Term {
    pub fn new(mut factors: Vec<Metric>) -> Result<Self, AnalysisError> {
        if factors.is_empty() {
            return Err(AnalysisError::EmptyTerm);
        }
        factors.sort();
        Ok(Term(factors))
    }

    pub fn single(m: Metric) -> Self {
        Term(vec![m])
    }

    pub fn product(a: Metric, b: Metric) -> Self {
        let mut v = vec![a, b];
        v.sort();
        Term(v)
    }

    pub fn factors(&self) -> &[Metric] {
        &self.0
    }

    pub fn uses(&self, m: Metric) -> bool {
        self.0.contains(&m)
    }

    pub fn value(&self, r: &ExperimentRecord) -> Option<f64> {
        self.0.iter().map(|m| m.value(r)).product()
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0.as_slice() {
            [a, b] if a == b => write!(f, "{}^2", a.as_str()),
            factors => {
                let names: Vec<&str> = factors.iter().map(|m| m.as_str()).collect();
                f.write_str(&names.join("*"))
            }
        }
    }
}

impl FromStr for Term {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some(base) = s.strip_suffix("^2") {
            let m: Metric = base.parse()?;
            return Ok(Term(vec![m, m]));
        }
        Term::new(s.split('*').map(|p| p.trim().parse()).collect::<Result<_, _>>()?)
    }
}

fn terms_label(terms: &[Term]) -> String {
    terms.iter().map(Term::to_string).collect::<Vec<_>>().join("+")
}

/// The seven non-empty subsets of {λ, var, skew}, in reporting order.
pub fn subset_models() -> Vec<Vec<Term>> {
    use Metric::*;
    let s = Term::single;
    vec![
        vec![s(Lambda)],
        vec![s(Var)],
        vec![s(Skew)],
        vec![s(Lambda), s(Var)],
        vec![s(Lambda), s(Skew)],
        vec![s(Var), s(Skew)],
        vec![s(Lambda), s(Var), s(Skew)],
    ]
}

/// The three-metric additive model.
pub fn full_model() -> Vec<Term> {
    Metric::ALL.into_iter().map(Term::single).collect()
}

/// Model with quadratic and interaction terms for each scenario.
pub fn extended_model(scenario: Scenario) -> Vec<Term> {
    use Metric::*;
    let s = Term::single;
    let p = Term::product;
    match scenario {
        Scenario::Spread => vec![s(Lambda), s(Var), s(Skew), p(Lambda, Lambda), p(Lambda, Var), p(Lambda, Skew)],
        Scenario::Survival => vec![
            s(Lambda),
            s(Skew),
            p(Lambda, Lambda),
            p(Var, Var),
            p(Skew, Skew),
            p(Lambda, Var),
            p(Var, Skew),
        ],
    }
}

/// Which family of models a fit belongs to; ranks and ΔAIC are relative
/// to the best subset model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelGroup {
    Subsets,
    Extended,
}

/// A fitted (or failed) OLS model of median outcome time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    pub scenario: Scenario,
    /// Response is `ln(median time)` instead of the median itself.
    pub log_response: bool,
    pub group: ModelGroup,
    #[serde(serialize_with = "serialize_terms")]
    pub terms: Vec<Term>,
    /// Intercept first, then one per term.
    pub coefficients: Vec<f64>,
    pub r2: f64,
    pub aic: f64,
    /// AIC minus the best subset model's AIC for the same response. Subset
    /// models are ≥ 0; an extended model below 0 beats every subset model.
    pub delta_aic: f64,
    /// 1 = lowest AIC within the group; failed fits rank last.
    pub rank: usize,
    /// Records used.
    pub m: usize,
    pub error: Option<String>,
}

fn serialize_terms<S: serde::Serializer>(terms: &[Term], s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&terms_label(terms))
}

impl FitSummary {
    pub fn terms_label(&self) -> String {
        terms_label(&self.terms)
    }

    /// Response label used in tables: `spread`, `spread_log`, `survival`, …
    pub fn response_label(&self) -> String {
        if self.log_response {
            format!("{}_log", self.scenario)
        } else {
            self.scenario.to_string()
        }
    }
}

/// Records usable for a model: not NA for the scenario, and with every
/// metric the terms use defined.
pub fn usable<'a>(records: &'a [ExperimentRecord], scenario: Scenario, terms: &'a [Term]) -> impl Iterator<Item = &'a ExperimentRecord> + 'a {
    records
        .iter()
        .filter(move |r| !r.is_na(scenario) && terms.iter().all(|t| t.value(r).is_some()))
}

/// Ordinary least squares of the scenario's median time on `terms`.
pub fn fit_model(
    records: &[ExperimentRecord],
    scenario: Scenario,
    terms: &[Term],
    log_response: bool,
) -> Result<FitSummary, AnalysisError> {
    let rows: Vec<&ExperimentRecord> = usable(records, scenario, terms).collect();
    let columns: Vec<Vec<f64>> = terms
        .iter()
        .map(|t| rows.iter().map(|r| t.value(r).expect("filtered")).collect())
        .collect();
    let y: Vec<f64> = rows
        .iter()
        .map(|r| {
            let t = r.median(scenario);
            if log_response {
                t.ln()
            } else {
                t
            }
        })
        .collect();
    let fit = ols(&columns, &y)?;
    Ok(FitSummary {
        scenario,
        log_response,
        group: ModelGroup::Subsets,
        terms: terms.to_vec(),
        coefficients: fit.coefficients,
        r2: fit.r2,
        aic: fit.aic,
        delta_aic: 0.0,
        rank: 0,
        m: fit.m,
        error: None,
    })
}

fn fit_or_fail(records: &[ExperimentRecord], scenario: Scenario, terms: &[Term], log_response: bool, group: ModelGroup) -> FitSummary {
    let mut fit = fit_model(records, scenario, terms, log_response).unwrap_or_else(|e| FitSummary {
        scenario,
        log_response,
        group,
        terms: terms.to_vec(),
        coefficients: Vec::new(),
        r2: f64::NAN,
        aic: f64::INFINITY,
        delta_aic: f64::INFINITY,
        rank: 0,
        m: usable(records, scenario, terms).count(),
        error: Some(e.to_string()),
    });
    fit.group = group;
    fit
}

/// Fits the seven subset models and the scenario's extended model, ranking
/// subset models by AIC. Records with undefined skewness drop out of models
/// that use it, so `m` can differ between models.
pub fn model_selection(records: &[ExperimentRecord], scenario: Scenario, log_response: bool) -> Vec<FitSummary> {
    let mut fits: Vec<FitSummary> = subset_models()
        .iter()
        .map(|terms| fit_or_fail(records, scenario, terms, log_response, ModelGroup::Subsets))
        .collect();
    let mut order: Vec<usize> = (0..fits.len()).collect();
    order.sort_by(|&a, &b| fits[a].aic.total_cmp(&fits[b].aic));
    let best = fits[order[0]].aic;
    for (rank, &i) in order.iter().enumerate() {
        fits[i].rank = rank + 1;
        if fits[i].error.is_none() {
            fits[i].delta_aic = fits[i].aic - best;
        }
    }
    let mut ext = fit_or_fail(records, scenario, &extended_model(scenario), log_response, ModelGroup::Extended);
    ext.rank = 1;
    if ext.error.is_none() {
        ext.delta_aic = ext.aic - best;
    }
    fits.push(ext);
    fits
}

/// Model selection for both scenarios, plus the log-time variant of spread.
pub fn full_model_selection(records: &[ExperimentRecord]) -> Vec<FitSummary> {
    let mut fits = model_selection(records, Scenario::Spread, false);
    fits.extend(model_selection(records, Scenario::Spread, true));
    fits.extend(model_selection(records, Scenario::Survival, false));
    fits
}

pub const FITS_HEADER: &str = "scenario,terms,r2,aic,delta_aic,rank";

pub fn write_fits_csv<W: std::io::Write>(out: W, fits: &[FitSummary]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FITS_HEADER.split(','))?;
    for f in fits {
        let num = |x: f64| if x.is_finite() { x.to_string() } else { String::new() };
        w.write_record([
            f.response_label(),
            f.terms_label(),
            num(f.r2),
            num(f.aic),
            num(f.delta_aic),
            f.rank.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Network-level quantities compared in the rank-correlation table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkQuantity {
    Lambda,
    EcMean,
    EcVar,
    EcSkew,
    MeanStrength,
    GlobalEff,
    MeanShortestPath,
    LocalEff,
    MeanClustering,
}

impl NetworkQuantity {
    pub fn as_str(self) -> &'static str {
        match self {
            NetworkQuantity::Lambda => "lambda",
            NetworkQuantity::EcMean => "ec_mean",
            NetworkQuantity::EcVar => "ec_var",
            NetworkQuantity::EcSkew => "ec_skew",
            NetworkQuantity::MeanStrength => "mean_strength",
            NetworkQuantity::GlobalEff => "global_eff",
            NetworkQuantity::MeanShortestPath => "mean_shortest_path",
            NetworkQuantity::LocalEff => "local_eff",
            NetworkQuantity::MeanClustering => "mean_clustering",
        }
    }

    /// `n` is the network size, needed to recover the mean EC score.
    pub fn value(self, r: &ExperimentRecord, n: usize) -> Option<f64> {
        Some(match self {
            NetworkQuantity::Lambda => r.lambda,
            NetworkQuantity::EcMean => r.ec_mean(n),
            NetworkQuantity::EcVar => r.ec_var,
            NetworkQuantity::EcSkew => return r.ec_skew,
            NetworkQuantity::MeanStrength => r.mean_strength,
            NetworkQuantity::GlobalEff => r.global_eff,
            NetworkQuantity::MeanShortestPath => r.mean_shortest_path,
            NetworkQuantity::LocalEff => r.local_eff,
            NetworkQuantity::MeanClustering => r.mean_clustering,
        })
    }
}

/// One pair of the correlation table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairCorrelation {
    pub a: NetworkQuantity,
    pub b: NetworkQuantity,
    pub correlation: Option<Correlation>,
}

/// Spearman correlation between two quantities over the records where both
/// are defined; `None` when they cannot be correlated.
pub fn correlate(records: &[ExperimentRecord], n: usize, a: NetworkQuantity, b: NetworkQuantity) -> Option<Correlation> {
    let (x, y): (Vec<f64>, Vec<f64>) = records
        .iter()
        .filter_map(|r| Some((a.value(r, n)?, b.value(r, n)?)))
        .unzip();
    spearman(&x, &y).ok()
}

/// Every pair of quantities, in declaration order, each pair once.
pub fn correlation_table(records: &[ExperimentRecord], n: usize) -> Vec<PairCorrelation> {
    use NetworkQuantity::*;
    let all = [Lambda, EcMean, EcVar, EcSkew, MeanStrength, GlobalEff, MeanShortestPath, LocalEff, MeanClustering];
    let mut out = Vec::new();
    for (i, &a) in all.iter().enumerate() {
        for &b in &all[i + 1..] {
            out.push(PairCorrelation {
                a,
                b,
                correlation: correlate(records, n, a, b),
            });
        }
    }
    out
}

pub fn write_correlations_csv<W: std::io::Write>(out: W, table: &[PairCorrelation]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["a", "b", "rho", "p_value", "n"])?;
    for p in table {
        let (rho, pv, m) = match &p.correlation {
            Some(c) => (c.rho.to_string(), c.p_value.to_string(), c.n.to_string()),
            None => (String::new(), String::new(), String::new()),
        };
        w.write_record([p.a.as_str(), p.b.as_str(), &rho, &pv, &m])?;
    }
    w.flush()?;
    Ok(())
}

/// Direction of a monotone trend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Increasing,
    Decreasing,
    Flat,
}

impl Direction {
    pub fn of_rho(rho: f64) -> Self {
        if rho > 0.0 {
            Direction::Increasing
        } else if rho < 0.0 {
            Direction::Decreasing
        } else {
            Direction::Flat
        }
    }
}

/// Trend of a scenario's median time along one metric.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trend {
    pub scenario: Scenario,
    pub metric: Metric,
    pub correlation: Option<Correlation>,
    pub direction: Option<Direction>,
    /// LOWESS smooth of median time against the metric, sorted by metric.
    pub curve: Vec<(f64, f64)>,
}

/// LOWESS span used for trend curves.
pub const TREND_FRAC: f64 = 2.0 / 3.0;

/// Trend of median time along `metric`, over records where the metric is
/// defined. Censored medians sit at the step cap, above every finished
/// median, so ranks stay meaningful. The direction is the sign of
/// Spearman's rho.
pub fn trend(records: &[ExperimentRecord], scenario: Scenario, metric: Metric) -> Trend {
    let points: Vec<(f64, f64)> = records
        .iter()
        .filter_map(|r| Some((metric.value(r)?, r.median(scenario))))
        .collect();
    let (x, y): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
    let correlation = spearman(&x, &y).ok();
    let curve = lowess(&points, TREND_FRAC, 3).unwrap_or_default();
    Trend {
        scenario,
        metric,
        direction: correlation.as_ref().map(|c| Direction::of_rho(c.rho)),
        correlation,
        curve,
    }
}

pub fn all_trends(records: &[ExperimentRecord]) -> Vec<Trend> {
    Scenario::ALL
        .into_iter()
        .flat_map(|s| Metric::ALL.into_iter().map(move |m| trend(records, s, m)))
        .collect()
}

pub fn write_trends_csv<W: std::io::Write>(out: W, trends: &[Trend]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scenario", "metric", "x", "smoothed"])?;
    for t in trends {
        for (x, y) in &t.curve {
            w.write_record([t.scenario.as_str(), t.metric.as_str(), &x.to_string(), &y.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
