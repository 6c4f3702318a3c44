//! Comparison metrics: mean strength, clustering, shortest paths and
//! efficiencies.
//!
//! Weights are distances here, so strength and clustering grow as nodes get
//! *further apart*. That is why both correlate positively with the spectral
//! radius even though other literatures read them as cohesion measures.

use thiserror::Error;

use crate::network::WeightedNetwork;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("metric needs at least 3 nodes, network has {0}")]
    TooSmall(usize),
}

/// All-pairs shortest weighted path lengths (km).
#[derive(Debug, Clone, PartialEq)]
pub struct PathMatrix {
    n: usize,
    d: Vec<f64>,
}

impl PathMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.d.chunks(self.n).map(<[f64]>::to_vec).collect()
    }
}

/// `(Σ_{i,j} w_ij) / n` over ordered pairs.
pub fn mean_strength(net: &WeightedNetwork) -> f64 {
    net.as_slice().iter().sum::<f64>() / net.n() as f64
}

/// Dense Dijkstra from `src` over the nodes flagged in `alive`.
fn dijkstra_row(w: &[f64], n: usize, src: usize, alive: &[bool], out: &mut [f64]) {
    let mut done = vec![false; n];
    out.iter_mut().for_each(|x| *x = f64::INFINITY);
    out[src] = 0.0;
    for _ in 0..n {
        let mut u = usize::MAX;
        let mut best = f64::INFINITY;
        for v in 0..n {
            if alive[v] && !done[v] && out[v] < best {
                best = out[v];
                u = v;
            }
        }
        if u == usize::MAX {
            break;
        }
        done[u] = true;
        for v in 0..n {
            if alive[v] && !done[v] && v != u {
                let cand = best + w[u * n + v];
                if cand < out[v] {
                    out[v] = cand;
                }
            }
        }
    }
}

fn paths_over(net: &WeightedNetwork, alive: &[bool]) -> Vec<f64> {
    let n = net.n();
    let w = net.as_slice();
    let mut d = vec![f64::INFINITY; n * n];
    for s in 0..n {
        if alive[s] {
            dijkstra_row(w, n, s, alive, &mut d[s * n..(s + 1) * n]);
        }
    }
    // both directions find the same path; keep the smaller rounding
    for i in 0..n {
        for j in (i + 1)..n {
            let m = d[i * n + j].min(d[j * n + i]);
            d[i * n + j] = m;
            d[j * n + i] = m;
        }
    }
    d
}

/// All-pairs shortest paths, treating weights as distances. A multi-hop
/// route replaces the direct edge whenever it is shorter.
pub fn shortest_paths(net: &WeightedNetwork) -> PathMatrix {
    let n = net.n();
    let d = paths_over(net, &vec![true; n]);
    PathMatrix { n, d }
}

fn pair_mean(paths: &PathMatrix, f: impl Fn(f64) -> f64) -> f64 {
    let n = paths.n;
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                total += f(paths.get(i, j));
            }
        }
    }
    total / (n * (n - 1)) as f64
}

/// Mean of `d_ij` over ordered pairs `i ≠ j`.
pub fn mean_shortest_path(paths: &PathMatrix) -> f64 {
    pair_mean(paths, |d| d)
}

/// Mean of `1 / d_ij` over ordered pairs `i ≠ j`.
pub fn global_efficiency(paths: &PathMatrix) -> f64 {
    pair_mean(paths, |d| 1.0 / d)
}

/// Efficiency of the neighbour subnetwork of each node, averaged over nodes.
///
/// Node `k` and its edges are removed before recomputing shortest paths, so
/// `k` is never an intermediate hop inside its own subnetwork.
pub fn local_efficiency(net: &WeightedNetwork) -> Result<f64, MetricError> {
    let n = net.n();
    if n < 3 {
        return Err(MetricError::TooSmall(n));
    }
    let norm = ((n - 1) * (n - 2)) as f64;
    let mut total = 0.0;
    let mut alive = vec![true; n];
    for k in 0..n {
        alive[k] = false;
        let d = paths_over(net, &alive);
        let mut sum = 0.0;
        for i in (0..n).filter(|&i| i != k) {
            for j in (0..n).filter(|&j| j != k && j != i) {
                sum += 1.0 / d[i * n + j];
            }
        }
        total += sum / norm;
        alive[k] = true;
    }
    Ok(total / n as f64)
}

/// Mean weighted clustering coefficient with weights normalized by the
/// largest weight in the network:
/// `c_i = Σ_{j≠k} (ŵ_ij ŵ_jk ŵ_ki)^{1/3} / ((n−1)(n−2))`.
pub fn mean_clustering(net: &WeightedNetwork) -> Result<f64, MetricError> {
    let n = net.n();
    if n < 3 {
        return Err(MetricError::TooSmall(n));
    }
    let wmax = net.max_weight();
    let norm = ((n - 1) * (n - 2)) as f64;
    let mut total = 0.0;
    for i in 0..n {
        let mut ci = 0.0;
        for j in (0..n).filter(|&j| j != i) {
            for k in (0..n).filter(|&k| k != i && k != j) {
                let prod = net.weight(i, j) * net.weight(j, k) * net.weight(k, i) / wmax.powi(3);
                ci += prod.cbrt();
            }
        }
        total += ci / norm;
    }
    Ok(total / n as f64)
}

/// Every comparison metric for one network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicMetrics {
    pub mean_strength: f64,
    pub mean_clustering: f64,
    pub mean_shortest_path: f64,
    pub global_efficiency: f64,
    pub local_efficiency: f64,
}

impl ClassicMetrics {
    pub fn of(net: &WeightedNetwork) -> Result<Self, MetricError> {
        let paths = shortest_paths(net);
        Ok(ClassicMetrics {
            mean_strength: mean_strength(net),
            mean_clustering: mean_clustering(net)?,
            mean_shortest_path: mean_shortest_path(&paths),
            global_efficiency: global_efficiency(&paths),
            local_efficiency: local_efficiency(net)?,
        })
    }
}

/// Upper bound on mean clustering implied by mean strength:
/// `n·w̄ / ((n−1)(n−2)·max w)`.
pub fn clustering_upper_bound(net: &WeightedNetwork) -> f64 {
    let n = net.n() as f64;
    n * mean_strength(net) / ((n - 1.0) * (n - 2.0) * net.max_weight())
}

/// Lower bound on EC variance implied by mean shortest path:
/// `1/n − ((n−1)·l(G)/λ)²`.
pub fn ec_variance_lower_bound(n: usize, mean_path: f64, lambda: f64) -> f64 {
    let n = n as f64;
    1.0 / n - ((n - 1.0) * mean_path / lambda).powi(2)
}

/// Upper bound on local efficiency: `n/(n−2) · E_glob`.
pub fn local_efficiency_upper_bound(n: usize, global_eff: f64) -> f64 {
    n as f64 / (n as f64 - 2.0) * global_eff
}
