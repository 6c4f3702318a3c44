//! Spectral radius, eigenvector centrality and its moments.
//!
//! The weight matrix of a valid network is symmetric, nonnegative and
//! irreducible, so its dominant eigenvalue is simple and the associated
//! (Perron) eigenvector can be taken strictly positive. We find both with a
//! shifted power iteration started from the all-ones vector.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::WeightedNetwork;

/// Relative residual `‖Av − λv‖ / λ` at which the power iteration stops.
pub const RESIDUAL_TOL: f64 = 1e-12;
/// Iteration budget for the power method.
pub const MAX_ITERS: usize = 100_000;
/// Below this variance the EC skewness is undefined.
pub const ZERO_VARIANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EigenError {
    #[error("power iteration did not converge in {iters} iterations (residual {residual:e})")]
    ConvergenceFailure { iters: usize, residual: f64 },
    #[error("EC components sum to {0}, cannot form the Frobenius ratio")]
    ZeroDenominator(f64),
    #[error("EC vector has length {got}, network has {n} nodes")]
    LengthMismatch { got: usize, n: usize },
}

/// Dominant eigenpair of a network's weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Perron {
    pub lambda: f64,
    pub vector: Vec<f64>,
    pub iterations: usize,
}

/// Mean, variance and skewness of an EC vector treated as a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcMoments {
    pub mean: f64,
    pub var: f64,
    /// `None` when the variance is (numerically) zero.
    pub skew: Option<f64>,
}

/// The three tiers of the metric hierarchy for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSummary {
    pub lambda: f64,
    pub ec: Vec<f64>,
    pub ec_mean: f64,
    pub ec_var: f64,
    pub ec_skew: Option<f64>,
}

impl EigenSummary {
    pub fn of(net: &WeightedNetwork) -> Result<Self, EigenError> {
        let p = dominant_eigenpair(net)?;
        let m = ec_moments(&p.vector);
        Ok(EigenSummary {
            lambda: p.lambda,
            ec: p.vector,
            ec_mean: m.mean,
            ec_var: m.var,
            ec_skew: m.skew,
        })
    }

    pub fn moments(&self) -> EcMoments {
        EcMoments {
            mean: self.ec_mean,
            var: self.ec_var,
            skew: self.ec_skew,
        }
    }
}

/// Shifted power iteration on `A + sI`, with `s` the mean off-diagonal weight.
///
/// The shift moves the negative end of the spectrum toward zero, which keeps
/// the iteration fast on nearly bipartite weight patterns. Convergence is
/// declared on the Rayleigh-quotient residual.
pub fn dominant_eigenpair(net: &WeightedNetwork) -> Result<Perron, EigenError> {
    let n = net.n();
    let a = net.as_slice();
    let shift = a.iter().sum::<f64>() / (n * (n - 1)) as f64;

    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut y = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for iter in 1..=MAX_ITERS {
        for i in 0..n {
            let row = &a[i * n..(i + 1) * n];
            y[i] = row.iter().zip(&v).map(|(w, x)| w * x).sum();
        }
        let lambda: f64 = y.iter().zip(&v).map(|(a, b)| a * b).sum();
        residual = y
            .iter()
            .zip(&v)
            .map(|(yi, vi)| (yi - lambda * vi).powi(2))
            .sum::<f64>()
            .sqrt();
        if residual <= RESIDUAL_TOL * lambda.abs() {
            // Perron vector: fix the sign so components are positive.
            if v.iter().sum::<f64>() < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            return Ok(Perron {
                lambda,
                vector: v,
                iterations: iter,
            });
        }
        for (vi, yi) in v.iter_mut().zip(&y) {
            *vi = yi + shift * *vi;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
    }
    Err(EigenError::ConvergenceFailure {
        iters: MAX_ITERS,
        residual,
    })
}

/// Largest eigenvalue of the weight matrix (km).
pub fn spectral_radius(net: &WeightedNetwork) -> Result<f64, EigenError> {
    dominant_eigenpair(net).map(|p| p.lambda)
}

/// Unit-norm, positive dominant eigenvector.
pub fn eigenvector_centrality(net: &WeightedNetwork) -> Result<Vec<f64>, EigenError> {
    dominant_eigenpair(net).map(|p| p.vector)
}

/// Population moments of the EC components. Skewness is the standardized
/// third central moment `m3 / m2^{3/2}`.
pub fn ec_moments(ec: &[f64]) -> EcMoments {
    let n = ec.len() as f64;
    let mean = ec.iter().sum::<f64>() / n;
    let (m2, m3) = ec.iter().fold((0.0, 0.0), |(s2, s3), v| {
        let d = v - mean;
        (s2 + d * d, s3 + d * d * d)
    });
    let var = m2 / n;
    let skew = if var < ZERO_VARIANCE {
        None
    } else {
        Some((m3 / n) / var.powf(1.5))
    };
    EcMoments { mean, var, skew }
}

/// λ recovered as an EC-weighted mean strength:
/// `Σ_{i,j} w_ij v_j / Σ_i v_i`.
pub fn frobenius_radius(net: &WeightedNetwork, ec: &[f64]) -> Result<f64, EigenError> {
    let n = net.n();
    if ec.len() != n {
        return Err(EigenError::LengthMismatch { got: ec.len(), n });
    }
    let denom: f64 = ec.iter().sum();
    if denom <= 0.0 {
        return Err(EigenError::ZeroDenominator(denom));
    }
    let numer: f64 = (0..n)
        .map(|i| net.row(i).iter().zip(ec).map(|(w, v)| w * v).sum::<f64>())
        .sum();
    Ok(numer / denom)
}
