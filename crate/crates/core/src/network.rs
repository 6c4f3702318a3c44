//! Validated weighted complete networks.
//!
//! Edge weights are corridor distances in km, so a low weight means easy
//! movement between two nodes. Every network is complete, symmetric, has a
//! zero diagonal, and keeps its off-diagonal weights inside a box
//! `[w_min, w_max]`.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default lower bound on an edge weight (km).
pub const DEFAULT_W_MIN: f64 = 1.0;
/// Default upper bound on an edge weight (km).
pub const DEFAULT_W_MAX: f64 = 20.0;

/// Largest allowed gap between `w[i][j]` and `w[j][i]` in external data.
pub const SYMMETRY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("weight matrix is not square (row {row} has {len} entries, expected {n})")]
    NonSquare { row: usize, len: usize, n: usize },
    #[error("network needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("asymmetric entry at ({0}, {1})")]
    AsymmetricEntry(usize, usize),
    #[error("nonzero diagonal at node {0}")]
    NonzeroDiagonal(usize),
    #[error("weight at ({0}, {1}) is outside the bounds")]
    OutOfBounds(usize, usize),
    #[error("weight {w} outside bounds [{w_min}, {w_max}]")]
    BoundViolation { w: f64, w_min: f64, w_max: f64 },
    #[error("invalid bounds [{0}, {1}]: need 0 < w_min <= w_max")]
    InvalidBounds(f64, f64),
    #[error("free-variable vector has length {got}, expected {expected}")]
    WrongLength { got: usize, expected: usize },
}

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("malformed network JSON at line {line}, column {column}: {msg}")]
    Json {
        line: usize,
        column: usize,
        msg: String,
    },
    #[error("malformed network CSV at line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error("field `{field}` disagrees with the matrix: {msg}")]
    Field { field: &'static str, msg: String },
    #[error("invalid network: {0}")]
    Invalid(#[from] NetworkError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Box bounds on off-diagonal weights, in km.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub w_min: f64,
    pub w_max: f64,
}

impl Bounds {
    pub fn new(w_min: f64, w_max: f64) -> Result<Self, NetworkError> {
        if !(w_min > 0.0 && w_min <= w_max && w_max.is_finite()) {
            return Err(NetworkError::InvalidBounds(w_min, w_max));
        }
        Ok(Bounds { w_min, w_max })
    }

    pub fn contains(&self, w: f64) -> bool {
        w >= self.w_min && w <= self.w_max
    }

    pub fn clamp(&self, w: f64) -> f64 {
        w.clamp(self.w_min, self.w_max)
    }

    pub fn width(&self) -> f64 {
        self.w_max - self.w_min
    }
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            w_min: DEFAULT_W_MIN,
            w_max: DEFAULT_W_MAX,
        }
    }
}

/// A symmetric, zero-diagonal, box-bounded complete network.
///
/// Immutable once built; the matrix is stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedNetwork {
    n: usize,
    bounds: Bounds,
    weights: Vec<f64>,
}

impl WeightedNetwork {
    /// Validates an external matrix and copies it into a network.
    pub fn validate(raw: &[Vec<f64>], bounds: Bounds) -> Result<Self, NetworkError> {
        let n = raw.len();
        for (row, r) in raw.iter().enumerate() {
            if r.len() != n {
                return Err(NetworkError::NonSquare {
                    row,
                    len: r.len(),
                    n,
                });
            }
        }
        if n < 2 {
            return Err(NetworkError::TooFewNodes(n));
        }
        Bounds::new(bounds.w_min, bounds.w_max)?;
        for i in 0..n {
            if raw[i][i] != 0.0 {
                return Err(NetworkError::NonzeroDiagonal(i));
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (raw[i][j], raw[j][i]);
                if !(a - b).abs().le(&SYMMETRY_TOL) {
                    return Err(NetworkError::AsymmetricEntry(i, j));
                }
                if !bounds.contains(a) {
                    return Err(NetworkError::OutOfBounds(i, j));
                }
                if !bounds.contains(b) {
                    return Err(NetworkError::OutOfBounds(j, i));
                }
            }
        }
        let mut weights = Vec::with_capacity(n * n);
        for r in raw {
            weights.extend_from_slice(r);
        }
        Ok(WeightedNetwork { n, bounds, weights })
    }

    /// Every off-diagonal weight equal to `w`.
    pub fn uniform(n: usize, w: f64, bounds: Bounds) -> Result<Self, NetworkError> {
        if n < 2 {
            return Err(NetworkError::TooFewNodes(n));
        }
        Bounds::new(bounds.w_min, bounds.w_max)?;
        if !bounds.contains(w) {
            return Err(NetworkError::BoundViolation {
                w,
                w_min: bounds.w_min,
                w_max: bounds.w_max,
            });
        }
        let upper = vec![w; n * (n - 1) / 2];
        Self::from_upper(n, &upper, bounds)
    }

    /// Builds a network from its strict upper triangle, listed row by row
    /// (`(0,1), (0,2), …, (0,n-1), (1,2), …`). The lower triangle is mirrored,
    /// so symmetry is exact.
    pub fn from_upper(n: usize, upper: &[f64], bounds: Bounds) -> Result<Self, NetworkError> {
        if n < 2 {
            return Err(NetworkError::TooFewNodes(n));
        }
        Bounds::new(bounds.w_min, bounds.w_max)?;
        let expected = n * (n - 1) / 2;
        if upper.len() != expected {
            return Err(NetworkError::WrongLength {
                got: upper.len(),
                expected,
            });
        }
        let mut weights = vec![0.0; n * n];
        let mut k = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                let w = upper[k];
                if !bounds.contains(w) {
                    return Err(NetworkError::OutOfBounds(i, j));
                }
                weights[i * n + j] = w;
                weights[j * n + i] = w;
                k += 1;
            }
        }
        Ok(WeightedNetwork { n, bounds, weights })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    /// Row `i` of the weight matrix.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.n..(i + 1) * self.n]
    }

    /// Row-major weight matrix.
    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.weights.chunks(self.n).map(<[f64]>::to_vec).collect()
    }

    /// Strict upper triangle in the order used by [`WeightedNetwork::from_upper`].
    pub fn upper(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n * (self.n - 1) / 2);
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                out.push(self.weight(i, j));
            }
        }
        out
    }

    /// Largest off-diagonal weight.
    pub fn max_weight(&self) -> f64 {
        self.upper().into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Multiplies every weight by `c`, keeping the bounds; fails if a scaled
    /// weight leaves them.
    pub fn scaled(&self, c: f64) -> Result<Self, NetworkError> {
        let upper: Vec<f64> = self.upper().into_iter().map(|w| w * c).collect();
        Self::from_upper(self.n, &upper, self.bounds)
    }

    pub fn with_bounds(&self, bounds: Bounds) -> Result<Self, NetworkError> {
        Self::from_upper(self.n, &self.upper(), bounds)
    }

    pub fn to_json(&self) -> String {
        let doc = NetworkDoc {
            n: self.n,
            w_min: self.bounds.w_min,
            w_max: self.bounds.w_max,
            weights: self.to_rows(),
        };
        serde_json::to_string_pretty(&doc).expect("network JSON is always serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, DecodeError> {
        let doc: NetworkDoc = serde_json::from_str(text).map_err(|e| DecodeError::Json {
            line: e.line(),
            column: e.column(),
            msg: e.to_string(),
        })?;
        if doc.weights.len() != doc.n {
            return Err(DecodeError::Field {
                field: "n",
                msg: format!("n = {} but weights has {} rows", doc.n, doc.weights.len()),
            });
        }
        let bounds = Bounds::new(doc.w_min, doc.w_max)?;
        Ok(Self::validate(&doc.weights, bounds)?)
    }

    /// CSV form: a first line `n,w_min,w_max` followed by `n` matrix rows.
    /// A literal `n,w_min,w_max` header line before the values is accepted.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{},{},{}\n", self.n, self.bounds.w_min, self.bounds.w_max);
        for i in 0..self.n {
            let row: Vec<String> = self.row(i).iter().map(|w| w.to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, DecodeError> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .peekable();
        if let Some((_, l)) = lines.peek() {
            if l.trim().replace(' ', "") == "n,w_min,w_max" {
                lines.next();
            }
        }
        let (hline, header) = lines.next().ok_or(DecodeError::Csv {
            line: 1,
            msg: "empty input".into(),
        })?;
        let fields: Vec<&str> = header.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(DecodeError::Csv {
                line: hline + 1,
                msg: format!("expected `n,w_min,w_max`, got {} fields", fields.len()),
            });
        }
        let n: usize = fields[0].parse().map_err(|_| DecodeError::Csv {
            line: hline + 1,
            msg: format!("bad node count `{}`", fields[0]),
        })?;
        let parse_f = |s: &str, line: usize| -> Result<f64, DecodeError> {
            s.parse().map_err(|_| DecodeError::Csv {
                line,
                msg: format!("bad number `{s}`"),
            })
        };
        let bounds = Bounds::new(parse_f(fields[1], hline + 1)?, parse_f(fields[2], hline + 1)?)?;
        let mut rows = Vec::with_capacity(n);
        for (ln, l) in lines {
            let row = l
                .split(',')
                .map(|s| parse_f(s.trim(), ln + 1))
                .collect::<Result<Vec<f64>, _>>()?;
            rows.push(row);
        }
        if rows.len() != n {
            return Err(DecodeError::Field {
                field: "n",
                msg: format!("n = {} but found {} matrix rows", n, rows.len()),
            });
        }
        Ok(Self::validate(&rows, bounds)?)
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self, DecodeError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            Self::from_csv(&text)
        } else {
            Self::from_json(&text)
        }
    }
}

impl fmt::Display for WeightedNetwork {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.n {
            let row: Vec<String> = self.row(i).iter().map(|w| format!("{w:8.4}")).collect();
            writeln!(f, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkDoc {
    n: usize,
    w_min: f64,
    w_max: f64,
    weights: Vec<Vec<f64>>,
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// The 4-node example network with weights 3, 4, 6, 8, 9, 12.
    pub fn four_node() -> WeightedNetwork {
        let raw = vec![
            vec![0.0, 3.0, 4.0, 6.0],
            vec![3.0, 0.0, 8.0, 9.0],
            vec![4.0, 8.0, 0.0, 12.0],
            vec![6.0, 9.0, 12.0, 0.0],
        ];
        WeightedNetwork::validate(&raw, Bounds::default()).unwrap()
    }

    /// 3-node network with w12 = 1, w13 = 2, w23 = 3.
    pub fn tri123() -> WeightedNetwork {
        WeightedNetwork::from_upper(3, &[1.0, 2.0, 3.0], Bounds::default()).unwrap()
    }
}
