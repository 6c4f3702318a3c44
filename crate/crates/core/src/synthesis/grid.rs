//! Target grids: explicit level lists and an empirically sized default grid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{MetricTarget, SynthError, Tolerances};
use crate::eigen::EigenSummary;
use crate::network::{Bounds, WeightedNetwork};
use crate::search::{coordinate_search, SearchOptions};

/// Skew levels shared by every `(λ, var)` cell or given per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SkewLevels {
    Shared(Vec<f64>),
    /// Indexed `[λ index][var index]`.
    PerCell(Vec<Vec<Vec<f64>>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    pub lambda_levels: Vec<f64>,
    pub var_levels_per_lambda: Vec<Vec<f64>>,
    pub skew_levels: SkewLevels,
    #[serde(with = "bounds_pair")]
    pub bounds: Bounds,
    #[serde(default)]
    pub tol: Tolerances,
}

mod bounds_pair {
    use super::Bounds;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(b: &Bounds, s: S) -> Result<S::Ok, S::Error> {
        [b.w_min, b.w_max].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Bounds, D::Error> {
        let [lo, hi] = <[f64; 2]>::deserialize(d)?;
        Bounds::new(lo, hi).map_err(serde::de::Error::custom)
    }
}

impl GridSpec {
    pub fn from_json(text: &str) -> Result<Self, SynthError> {
        serde_json::from_str(text).map_err(|e| SynthError::InvalidLevel(format!("grid spec: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("grid spec serializes")
    }

    fn skews(&self, li: usize, vi: usize) -> Result<&[f64], SynthError> {
        match &self.skew_levels {
            SkewLevels::Shared(s) => Ok(s),
            SkewLevels::PerCell(cells) => cells
                .get(li)
                .and_then(|row| row.get(vi))
                .map(Vec::as_slice)
                .ok_or_else(|| SynthError::InvalidLevel(format!("no skew levels for λ index {li}, var index {vi}"))),
        }
    }
}

/// Expands a grid λ-major, then variance, then skewness. A zero-variance
/// level yields exactly one skew-free target.
pub fn grid_targets(spec: &GridSpec) -> Result<Vec<MetricTarget>, SynthError> {
    if spec.var_levels_per_lambda.len() != spec.lambda_levels.len() {
        return Err(SynthError::InvalidLevel(format!(
            "{} λ-levels but {} variance rows",
            spec.lambda_levels.len(),
            spec.var_levels_per_lambda.len()
        )));
    }
    let make = |lambda, var, skew| {
        MetricTarget::new(spec.n, lambda, var, skew, spec.bounds, spec.tol).map_err(|e| match e {
            SynthError::InvalidTarget(m) => SynthError::InvalidLevel(m),
            other => other,
        })
    };
    let mut out = Vec::new();
    for (li, (&lambda, vars)) in spec.lambda_levels.iter().zip(&spec.var_levels_per_lambda).enumerate() {
        for (vi, &var) in vars.iter().enumerate() {
            if var == 0.0 {
                out.push(make(lambda, var, None)?);
                continue;
            }
            let skews = spec.skews(li, vi)?;
            if skews.is_empty() {
                out.push(make(lambda, var, None)?);
            }
            for &s in skews {
                out.push(make(lambda, var, Some(s))?);
            }
        }
    }
    Ok(out)
}

/// Settings for [`default_grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridOptions {
    pub n: usize,
    pub bounds: Bounds,
    pub tol: Tolerances,
    pub lambda_levels: Vec<f64>,
    /// Variance levels as fractions of the empirical maximum at each λ.
    pub var_fractions: Vec<f64>,
    /// Skew levels per cell, spaced evenly strictly inside the empirical range.
    pub skew_count: usize,
    /// Random restarts for each empirical extreme.
    pub restarts: usize,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions {
            n: 6,
            bounds: Bounds::default(),
            tol: Tolerances::default(),
            lambda_levels: vec![20.0, 35.0, 50.0, 65.0, 80.0],
            var_fractions: vec![0.0, 0.2, 0.4, 0.6, 0.8],
            skew_count: 5,
            restarts: 8,
        }
    }
}

/// Builds the default grid: for each λ-level, variance levels at the given
/// fractions of the largest attainable variance, and for each nonzero variance
/// `skew_count` skew levels strictly inside the attainable skew range.
pub fn default_grid(opts: &GridOptions, seed: u64) -> Result<GridSpec, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut var_rows = Vec::new();
    let mut skew_cells = Vec::new();
    for &lambda in &opts.lambda_levels {
        let vmax = variance_ceiling(opts.n, lambda, opts.bounds, opts.restarts, rng.random())?;
        let vars: Vec<f64> = opts.var_fractions.iter().map(|f| round_sig(f * vmax)).collect();
        let mut row = Vec::new();
        for &var in &vars {
            if var == 0.0 {
                row.push(Vec::new());
                continue;
            }
            let (lo, hi) = skew_range(opts.n, lambda, var, opts.bounds, opts.tol, opts.restarts, rng.random())?;
            let k = opts.skew_count;
            row.push(
                (1..=k)
                    .map(|i| round_sig(lo + (hi - lo) * i as f64 / (k + 1) as f64))
                    .collect(),
            );
        }
        var_rows.push(vars);
        skew_cells.push(row);
    }
    Ok(GridSpec {
        n: opts.n,
        lambda_levels: opts.lambda_levels.clone(),
        var_levels_per_lambda: var_rows,
        skew_levels: SkewLevels::PerCell(skew_cells),
        bounds: opts.bounds,
        tol: opts.tol,
    })
}

/// Four significant digits, so levels print compactly in file names.
fn round_sig(x: f64) -> f64 {
    if x.abs() < 1e-9 {
        return 0.0;
    }
    let mag = 10f64.powi(3 - x.abs().log10().floor() as i32);
    (x * mag).round() / mag
}

/// Scale factor taking the shape `x` to spectral radius `lambda`, and how far
/// the scaled weights fall outside the bounds.
fn scaled_violation(x: &[f64], lambda: f64, n: usize, bounds: Bounds) -> Option<(EigenSummary, f64)> {
    let net = WeightedNetwork::from_upper(n, x, bounds).ok()?;
    let s = EigenSummary::of(&net).ok()?;
    let c = lambda / s.lambda;
    let min = x.iter().copied().fold(f64::INFINITY, f64::min) * c;
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max) * c;
    let v = (bounds.w_min - min).max(0.0) + (max - bounds.w_max).max(0.0);
    Some((s, v))
}

const VIOLATION_WEIGHT: f64 = 1e3;

/// Largest EC variance found among networks with spectral radius `lambda`.
///
/// EC moments are invariant under scaling the weights, so the search runs
/// over shapes and penalizes shapes that cannot be scaled to `lambda` inside
/// the bounds.
pub fn variance_ceiling(n: usize, lambda: f64, bounds: Bounds, restarts: usize, seed: u64) -> Result<f64, SynthError> {
    MetricTarget::new(n, lambda, 0.0, None, bounds, Tolerances::default())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = n * (n - 1) / 2;
    let starts: Vec<Vec<f64>> = (0..restarts.max(1))
        .map(|_| (0..dim).map(|_| rng.random_range(bounds.w_min..=bounds.w_max)).collect())
        .collect();
    let neg_var = |s: &EigenSummary| -s.ec_var;
    let best = extreme(n, lambda, bounds, &starts, &[&|s: &EigenSummary| -s.ec_var], neg_var, |_| true);
    Ok(best.map_or(0.0, |s| s.ec_var.max(0.0)))
}

/// Smallest and largest EC skewness found among networks with spectral radius
/// `lambda` and EC variance within tolerance of `var`.
///
/// Each search starts from a synthesized network meeting `(lambda, var)` and
/// pushes skewness while a variance penalty, tightened in two stages, holds
/// the variance near its level.
pub fn skew_range(
    n: usize,
    lambda: f64,
    var: f64,
    bounds: Bounds,
    tol: Tolerances,
    restarts: usize,
    seed: u64,
) -> Result<(f64, f64), SynthError> {
    let target = MetricTarget::new(n, lambda, var, None, bounds, tol)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts = Vec::new();
    for _ in 0..restarts.max(1) {
        match super::synthesize(&target, rng.random(), super::SynthConfig::default()) {
            Ok(s) => starts.push(s.network.upper()),
            Err(SynthError::Infeasible { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    let skew = |s: &EigenSummary| s.ec_skew.unwrap_or(0.0);
    let pen = |s: &EigenSummary, scale: f64| ((s.ec_var - var) / (scale * tol.var)).powi(2);
    let ok = |s: &EigenSummary| (s.ec_var - var).abs() <= tol.var && s.ec_skew.is_some();
    let lo = extreme(
        n,
        lambda,
        bounds,
        &starts,
        &[&|s| skew(s) + pen(s, 10.0), &|s| skew(s) + pen(s, 1.0)],
        skew,
        ok,
    );
    let hi = extreme(
        n,
        lambda,
        bounds,
        &starts,
        &[&|s| -skew(s) + pen(s, 10.0), &|s| -skew(s) + pen(s, 1.0)],
        |s| -skew(s),
        ok,
    );
    match (lo, hi) {
        (Some(lo), Some(hi)) => Ok((skew(&lo), skew(&hi))),
        _ => Err(SynthError::InvalidLevel(format!(
            "no network found with λ = {lambda}, var = {var}"
        ))),
    }
}

type Score<'a> = &'a dyn Fn(&EigenSummary) -> f64;

/// Runs each start through the `stages` objectives in turn over shapes
/// scalable to `lambda`, and returns the evaluated point with the smallest
/// `metric` among those where `ok` holds and the scaled shape fits the bounds.
fn extreme(
    n: usize,
    lambda: f64,
    bounds: Bounds,
    starts: &[Vec<f64>],
    stages: &[Score],
    metric: impl Fn(&EigenSummary) -> f64,
    ok: impl Fn(&EigenSummary) -> bool,
) -> Option<EigenSummary> {
    let dim = n * (n - 1) / 2;
    let lo = vec![bounds.w_min; dim];
    let hi = vec![bounds.w_max; dim];
    let opts = SearchOptions {
        max_evals: 4000,
        ..Default::default()
    };
    let mut best: Option<(f64, EigenSummary)> = None;
    for start in starts {
        let mut x = start.clone();
        for score in stages {
            let mut f = |x: &[f64]| match scaled_violation(x, lambda, n, bounds) {
                Some((s, v)) => {
                    let value = score(&s) + VIOLATION_WEIGHT * v;
                    if v <= 1e-9 && ok(&s) {
                        let m = metric(&s);
                        if best.as_ref().is_none_or(|(b, _)| m < *b) {
                            best = Some((m, s));
                        }
                    }
                    value
                }
                None => f64::INFINITY,
            };
            // restart the step schedule a few times from the previous optimum
            for _ in 0..3 {
                x = coordinate_search(&mut f, &x, &lo, &hi, opts, |_, _| false).x;
            }
        }
    }
    best.map(|(_, s)| s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(lambdas: Vec<f64>, vars: Vec<Vec<f64>>, skews: SkewLevels) -> GridSpec {
        GridSpec {
            n: 6,
            lambda_levels: lambdas,
            var_levels_per_lambda: vars,
            skew_levels: skews,
            bounds: Bounds::default(),
            tol: Tolerances::default(),
        }
    }

    #[test]
    fn counts_with_collapse() {
        let s = spec(
            vec![20.0, 35.0, 50.0, 65.0, 80.0],
            vec![vec![0.0, 0.002, 0.004, 0.006, 0.008]; 5],
            SkewLevels::Shared(vec![-0.5, -0.25, 0.0, 0.25, 0.5]),
        );
        let t = grid_targets(&s).unwrap();
        assert_eq!(t.len(), 5 * (1 + 4 * 5));
        // λ-major, then var, then skew
        assert_eq!(t[0].lambda, 20.0);
        assert_eq!(t[0].skew, None);
        assert_eq!((t[1].var, t[1].skew), (0.002, Some(-0.5)));
        assert_eq!((t[2].var, t[2].skew), (0.002, Some(-0.25)));
        assert_eq!(t[21].lambda, 35.0);
        let single = spec(vec![50.0], vec![vec![0.0]], SkewLevels::Shared(vec![1.0, 2.0]));
        assert_eq!(grid_targets(&single).unwrap().len(), 1);
    }

    #[test]
    fn rejects_invalid_levels() {
        let s = spec(vec![50.0], vec![vec![0.2]], SkewLevels::Shared(vec![0.0]));
        assert!(matches!(grid_targets(&s), Err(SynthError::InvalidLevel(_))));
        let s = spec(vec![120.0], vec![vec![0.0]], SkewLevels::Shared(vec![]));
        assert!(matches!(grid_targets(&s), Err(SynthError::InvalidLevel(_))));
        let s = spec(vec![50.0, 60.0], vec![vec![0.0]], SkewLevels::Shared(vec![]));
        assert!(matches!(grid_targets(&s), Err(SynthError::InvalidLevel(_))));
    }

    #[test]
    fn json_formats() {
        let flat = r#"{"lambda_levels":[50],"var_levels_per_lambda":[[0,0.01]],"skew_levels":[0.1,0.2],"bounds":[1,20],"n":6}"#;
        let g = GridSpec::from_json(flat).unwrap();
        assert_eq!(grid_targets(&g).unwrap().len(), 3);
        let nested = r#"{"lambda_levels":[50],"var_levels_per_lambda":[[0,0.01]],"skew_levels":[[[],[0.3]]],"bounds":[1,20],"n":6}"#;
        let g = GridSpec::from_json(nested).unwrap();
        let t = grid_targets(&g).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[1].skew, Some(0.3));
        assert_eq!(GridSpec::from_json(&g.to_json()).unwrap(), g);
        assert!(GridSpec::from_json(r#"{"n":6}"#).is_err());
    }

    #[test]
    fn variance_ceiling_vanishes_at_the_frontier() {
        let b = Bounds::default();
        assert!(variance_ceiling(6, 100.0, b, 2, 1).unwrap() < 1e-9);
        let mid = variance_ceiling(6, 50.0, b, 2, 1).unwrap();
        assert!(mid > 0.01 && mid < 1.0 / 6.0, "{mid}");
    }

    #[test]
    fn skew_range_is_ordered_and_attainable() {
        let (lo, hi) = skew_range(6, 65.0, 0.0086, Bounds::default(), Tolerances::default(), 4, 4).unwrap();
        assert!(lo < -1.7 && hi > 0.3, "({lo}, {hi})");
        assert!(lo >= -4.0 / 5f64.sqrt() - 1e-9 && hi <= 4.0 / 5f64.sqrt() + 1e-9);
    }
}
