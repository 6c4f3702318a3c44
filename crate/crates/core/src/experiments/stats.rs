//! Rank correlation, least squares and LOWESS smoothing.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("need at least {need} observations, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// 1-based ranks with ties replaced by their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub rho: f64,
    /// Two-sided p-value from the t approximation on `n − 2` degrees of freedom.
    pub p_value: f64,
    pub n: usize,
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<Correlation, StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 3 {
        return Err(StatsError::TooFew { need: 3, got: xs.len() });
    }
    let constant = |v: &[f64]| v.iter().all(|&x| x == v[0]);
    if constant(xs) || constant(ys) {
        return Err(StatsError::Degenerate("constant input to spearman".into()));
    }
    let rho = pearson(&average_ranks(xs), &average_ranks(ys)).clamp(-1.0, 1.0);
    let n = xs.len();
    let df = (n - 2) as f64;
    let p_value = if rho.abs() >= 1.0 {
        0.0
    } else {
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("df is positive");
        2.0 * (1.0 - dist.cdf(t.abs()))
    };
    Ok(Correlation { rho, p_value, n })
}

/// Ordinary least squares with an intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    /// Intercept first, then one coefficient per predictor column.
    pub coefficients: Vec<f64>,
    pub rss: f64,
    pub tss: f64,
    pub r2: f64,
    /// `m·ln(RSS/m) + 2(k+1)`.
    pub aic: f64,
    pub m: usize,
    pub k: usize,
}

/// Relative size of an R diagonal entry below which columns count as
/// linearly dependent.
const RANK_TOL: f64 = 1e-10;

/// Fits `y ≈ b0 + Σ b_j x_j` where `columns[j]` holds predictor `j`.
pub fn ols(columns: &[Vec<f64>], y: &[f64]) -> Result<OlsFit, StatsError> {
    let m = y.len();
    let k = columns.len();
    if let Some(c) = columns.iter().find(|c| c.len() != m) {
        return Err(StatsError::LengthMismatch(c.len(), m));
    }
    if m < k + 2 {
        return Err(StatsError::TooFew { need: k + 2, got: m });
    }
    let x = DMatrix::from_fn(m, k + 1, |i, j| if j == 0 { 1.0 } else { columns[j - 1][i] });
    let qr = x.clone().qr();
    let r = qr.r();
    for j in 0..=k {
        let norm = x.column(j).norm();
        if norm == 0.0 || r[(j, j)].abs() <= RANK_TOL * norm {
            return Err(StatsError::RankDeficient);
        }
    }
    let yv = DVector::from_column_slice(y);
    let qty = qr.q().transpose() * &yv;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or(StatsError::RankDeficient)?;
    let resid = &yv - &x * &beta;
    let rss = resid.norm_squared();
    let mean = y.iter().sum::<f64>() / m as f64;
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let r2 = if tss > 0.0 { (1.0 - rss / tss).clamp(0.0, 1.0) } else { 0.0 };
    let aic = m as f64 * (rss / m as f64).ln() + 2.0 * (k + 1) as f64;
    Ok(OlsFit {
        coefficients: beta.iter().copied().collect(),
        rss,
        tss,
        r2,
        aic,
        m,
        k,
    })
}

/// `(1 − |u|³)³` for `|u| < 1`, else 0.
pub fn tricube(u: f64) -> f64 {
    let a = u.abs();
    if a < 1.0 {
        (1.0 - a * a * a).powi(3)
    } else {
        0.0
    }
}

fn bisquare(u: f64) -> f64 {
    if u.abs() < 1.0 {
        (1.0 - u * u).powi(2)
    } else {
        0.0
    }
}

/// Locally weighted linear regression evaluated at every input `x`.
///
/// The bandwidth at each point is the distance to its `floor(frac·n)`-th
/// nearest neighbour (counting itself). Each robustifying iteration
/// reweights points by the bisquare of their residual over six median
/// absolute residuals. Returns `(x, ŷ)` sorted by `x`.
pub fn lowess(points: &[(f64, f64)], frac: f64, robust_iters: usize) -> Result<Vec<(f64, f64)>, StatsError> {
    let n = points.len();
    if n < 3 {
        return Err(StatsError::TooFew { need: 3, got: n });
    }
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(StatsError::Degenerate(format!("frac = {frac} outside (0, 1]")));
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pts[0].0 == pts[n - 1].0 {
        return Err(StatsError::Degenerate("all x values are equal".into()));
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let r = ((frac * n as f64 + 1e-10).floor() as usize).clamp(2, n);

    let mut robust = vec![1.0; n];
    let mut fitted = vec![0.0; n];
    for iter in 0..=robust_iters {
        for i in 0..n {
            let mut dist: Vec<f64> = xs.iter().map(|x| (x - xs[i]).abs()).collect();
            let mut sorted = dist.clone();
            sorted.sort_by(f64::total_cmp);
            let h = sorted[r - 1];
            for d in dist.iter_mut() {
                *d = if h > 0.0 { tricube(*d / h) } else { f64::from(u8::from(*d == 0.0)) };
            }
            let w: Vec<f64> = dist.iter().zip(&robust).map(|(a, b)| a * b).collect();
            fitted[i] = local_linear(&xs, &ys, &w, xs[i]);
        }
        if iter == robust_iters {
            break;
        }
        let resid: Vec<f64> = ys.iter().zip(&fitted).map(|(y, f)| y - f).collect();
        let mut abs: Vec<f64> = resid.iter().map(|r| r.abs()).collect();
        abs.sort_by(f64::total_cmp);
        let mad = median_sorted(&abs);
        if mad == 0.0 {
            break;
        }
        for (w, e) in robust.iter_mut().zip(&resid) {
            *w = bisquare(e / (6.0 * mad));
        }
    }
    Ok(xs.into_iter().zip(fitted).collect())
}

fn local_linear(xs: &[f64], ys: &[f64], w: &[f64], at: f64) -> f64 {
    let sw: f64 = w.iter().sum();
    if sw == 0.0 {
        return f64::NAN;
    }
    let mx = w.iter().zip(xs).map(|(w, x)| w * x).sum::<f64>() / sw;
    let my = w.iter().zip(ys).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(xs).map(|(w, x)| w * (x - mx).powi(2)).sum();
    let sxy: f64 = w.iter().zip(xs.iter().zip(ys)).map(|(w, (x, y))| w * (x - mx) * (y - my)).sum();
    // a window with no spread in x has no slope to estimate
    if sxx <= 1e-12 * sw * (mx.abs() + 1.0).powi(2) {
        return my;
    }
    my + sxy / sxx * (at - mx)
}

/// Two-sample Kolmogorov–Smirnov test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsTest {
    /// Largest gap between the two empirical CDFs.
    pub statistic: f64,
    /// Two-sided p-value from the limiting Kolmogorov distribution at
    /// `√(mn/(m+n))·D`.
    pub p_value: f64,
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsTest, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::TooFew { need: 1, got: 0 });
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (m, n) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        // step past every copy of the smaller value in both samples
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / m - j as f64 / n).abs());
    }
    let lambda = (m * n / (m + n)).sqrt() * d;
    Ok(KsTest {
        statistic: d,
        p_value: kolmogorov_sf(lambda),
    })
}

/// `P(K > λ)` for the Kolmogorov distribution.
fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = f64::from(k);
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Median of an ascending slice; the mean of the middle two for even length.
pub fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn spearman_examples() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap().rho, 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap().rho, -1.0);
        let c = spearman(&[1.0, 2.0, 3.0, 4.0, 5.0], &[1.0, 3.0, 2.0, 5.0, 4.0]).unwrap();
        assert!((c.rho - 0.8).abs() < 1e-12);
        // scipy.stats.spearmanr gives p = 0.10408803866182788 for this pair
        assert!((c.p_value - 0.104_088_038_661_827_88).abs() < 1e-9, "{}", c.p_value);
        assert!(matches!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(StatsError::Degenerate(_))));
        assert!(spearman(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn ties_get_average_ranks() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
        let c = spearman(&[1.0, 2.0, 2.0, 3.0, 4.0, 4.0, 5.0], &[2.0, 1.0, 3.0, 3.0, 5.0, 4.0, 6.0]).unwrap();
        let xr = average_ranks(&[1.0, 2.0, 2.0, 3.0, 4.0, 4.0, 5.0]);
        let yr = average_ranks(&[2.0, 1.0, 3.0, 3.0, 5.0, 4.0, 6.0]);
        assert!((c.rho - pearson(&xr, &yr)).abs() < 1e-15);
    }

    #[test]
    fn ols_exact_line_and_constant() {
        let x = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 2.0 * v).collect();
        let f = ols(std::slice::from_ref(&x), &y).unwrap();
        assert!((f.r2 - 1.0).abs() < 1e-12);
        assert!((f.coefficients[0] - 3.0).abs() < 1e-12 && (f.coefficients[1] + 2.0).abs() < 1e-12);
        let f = ols(&[x], &[4.0; 5]).unwrap();
        assert_eq!(f.r2, 0.0);
    }

    #[test]
    fn ols_aic_by_hand() {
        // y = (1, 3, 2, 5, 4) on x = 1..5: slope 0.8, intercept 0.6,
        // residuals (−0.4, 0.8, −1.0, 1.2, −0.6), RSS = 3.6
        let f = ols(&[vec![1.0, 2.0, 3.0, 4.0, 5.0]], &[1.0, 3.0, 2.0, 5.0, 4.0]).unwrap();
        assert!((f.rss - 3.6).abs() < 1e-12);
        assert!((f.r2 - (1.0 - 3.6 / 10.0)).abs() < 1e-12);
        let aic = 5.0 * (3.6f64 / 5.0).ln() + 2.0 * 2.0;
        assert!((f.aic - aic).abs() < 1e-12);
    }

    #[test]
    fn ols_satisfies_normal_equations() {
        let x1 = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let x2 = vec![2.0, 1.0, 4.0, 3.0, 6.0, 5.0];
        let y = vec![1.0, 2.0, 2.0, 3.0, 2.5, 4.0];
        let f = ols(&[x1.clone(), x2.clone()], &y).unwrap();
        // normal-equation oracle
        let xtx = [
            [6.0, x1.iter().sum::<f64>(), x2.iter().sum::<f64>()],
            [
                x1.iter().sum::<f64>(),
                x1.iter().map(|v| v * v).sum::<f64>(),
                x1.iter().zip(&x2).map(|(a, b)| a * b).sum::<f64>(),
            ],
            [
                x2.iter().sum::<f64>(),
                x1.iter().zip(&x2).map(|(a, b)| a * b).sum::<f64>(),
                x2.iter().map(|v| v * v).sum::<f64>(),
            ],
        ];
        let xty = [
            y.iter().sum::<f64>(),
            x1.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>(),
            x2.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>(),
        ];
        for (row, rhs) in xtx.iter().zip(xty) {
            let lhs: f64 = row.iter().zip(&f.coefficients).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-9);
        }
    }

    #[test]
    fn ols_rejects_collinear_and_short() {
        let x = vec![1.0, 2.0, 3.0, 4.0];
        let twice: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        assert_eq!(ols(&[x.clone(), twice], &[1.0, 0.0, 2.0, 1.0]), Err(StatsError::RankDeficient));
        assert_eq!(ols(&[vec![5.0; 4]], &[1.0, 0.0, 2.0, 1.0]), Err(StatsError::RankDeficient));
        assert!(matches!(ols(&[x.clone(), x.clone()], &[1.0; 4][..3]), Err(StatsError::LengthMismatch(..))));
        assert!(matches!(ols(&[vec![1.0, 2.0]], &[1.0, 2.0]), Err(StatsError::TooFew { .. })));
    }

    #[test]
    fn tricube_kernel() {
        assert_eq!(tricube(0.0), 1.0);
        assert_eq!(tricube(1.0), 0.0);
        assert_eq!(tricube(-1.5), 0.0);
        assert!((tricube(0.5) - (1.0f64 - 0.125).powi(3)).abs() < 1e-15);
    }

    #[test]
    fn lowess_reproduces_lines() {
        let pts: Vec<(f64, f64)> = (0..20).map(|i| (i as f64 * 0.7, 2.0 * i as f64 * 0.7 + 1.0)).collect();
        for frac in [0.2, 0.5, 0.67, 1.0] {
            for it in [0, 3] {
                for (x, y) in lowess(&pts, frac, it).unwrap() {
                    assert!((y - (2.0 * x + 1.0)).abs() < 1e-9);
                }
            }
        }
        assert!(lowess(&[(1.0, 1.0), (1.0, 2.0), (1.0, 3.0)], 0.67, 0).is_err());
        assert!(lowess(&pts, 0.0, 0).is_err());
    }

    #[test]
    fn lowess_matches_statsmodels() {
        // statsmodels.nonparametric.lowess(y, x, frac=0.67, it=0, delta=0)
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        let y = [2.0, 4.0, 3.0, 6.0, 5.0, 8.0, 9.0, 7.0, 11.0, 10.0];
        let expected = [
            2.268_202_429_964_096,
            3.182_411_606_328_938_7,
            4.125_596_253_993_261,
            4.974_457_718_845_272,
            6.225_650_226_831_794,
            7.187_066_940_907_034,
            8.030_735_343_456_888,
            8.938_529_313_086_224,
            9.594_972_282_372_884,
            10.375_559_105_529_755,
        ];
        // same with it=3
        let robust = [
            2.263_583_710_142_245,
            3.186_081_695_363_929_7,
            4.135_697_838_625_144,
            4.992_757_003_496_209,
            6.242_377_010_836_225,
            7.249_797_862_970_737,
            8.130_157_269_949_098,
            9.033_115_594_416_703,
            9.643_919_083_011_584,
            10.359_535_731_728_199,
        ];
        let pts: Vec<(f64, f64)> = x.iter().copied().zip(y).collect();
        let got = lowess(&pts, 0.67, 0).unwrap();
        for ((_, g), e) in got.iter().zip(expected) {
            assert!((g - e).abs() < 1e-9, "{g} vs {e}");
        }
        let got = lowess(&pts, 0.67, 3).unwrap();
        for ((_, g), e) in got.iter().zip(robust) {
            assert!((g - e).abs() < 1e-9, "{g} vs {e}");
        }
    }

    #[test]
    fn ks_matches_scipy() {
        // scipy: ks_2samp statistic, kstwobign.sf(sqrt(en) * d)
        let a = [0.1, 0.5, 0.9, 1.3, 2.0, 2.2, 3.1, 4.0];
        let b = [0.3, 0.4, 1.0, 1.1, 1.2, 5.0, 6.0, 7.5, 8.0, 9.0];
        let t = ks_two_sample(&a, &b).unwrap();
        assert!((t.statistic - 0.5).abs() < 1e-15);
        assert!((t.p_value - 0.216_460_224_947_425_12).abs() < 1e-9, "{}", t.p_value);
        // ties across samples
        let a = [1.0, 1.0, 2.0, 2.0, 2.0, 3.0, 3.0, 4.0];
        let b = [1.0, 2.0, 3.0, 3.0, 3.0, 4.0, 4.0, 4.0, 5.0];
        let t = ks_two_sample(&a, &b).unwrap();
        assert!((t.statistic - 0.402_777_777_777_777_8).abs() < 1e-12);
        assert!((t.p_value - 0.497_900_706_987_562_45).abs() < 1e-9, "{}", t.p_value);
        let same = ks_two_sample(&a, &a).unwrap();
        assert_eq!((same.statistic, same.p_value), (0.0, 1.0));
    }

    #[test]
    fn medians() {
        assert_eq!(median_sorted(&[1.0, 2.0, 3.0]), 2.0);
        assert_eq!(median_sorted(&[1.0, 2.0, 3.0, 10.0]), 2.5);
    }

    proptest! {
        #[test]
        fn spearman_self_and_negation(xs in proptest::collection::vec(-1e3f64..1e3, 3..40)) {
            prop_assume!(xs.iter().any(|&x| x != xs[0]));
            let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
            prop_assert!((spearman(&xs, &xs).unwrap().rho - 1.0).abs() < 1e-12);
            prop_assert!((spearman(&xs, &neg).unwrap().rho + 1.0).abs() < 1e-12);
        }

        #[test]
        fn nested_models_never_lose_r2(
            rows in proptest::collection::vec((-5f64..5.0, -5f64..5.0, -5f64..5.0), 8..40),
        ) {
            let x1: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let x2: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let y: Vec<f64> = rows.iter().map(|r| r.2).collect();
            if let (Ok(small), Ok(big)) = (ols(std::slice::from_ref(&x1), &y), ols(&[x1, x2], &y)) {
                prop_assert!(big.r2 >= small.r2 - 1e-12);
                prop_assert!(big.rss <= small.rss * (1.0 + 1e-12) + 1e-12);
            }
        }
    }
}
