//! Derivative-free local search inside a box.
//!
//! Adaptive coordinate descent: each coordinate keeps its own step, which
//! doubles after an accepted move and halves after a rejected one. After
//! every full sweep a pattern move along the sweep's net displacement is
//! tried. Every trial point is projected back onto the box.

/// Outcome of one local search.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    /// True when `stop` accepted a point before the budget ran out.
    pub stopped: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct SearchOptions {
    pub max_evals: usize,
    /// Initial step as a fraction of each coordinate's box width.
    pub initial_step: f64,
    /// Search ends once every step is below this fraction of the width.
    pub min_step: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            max_evals: 2000,
            initial_step: 0.1,
            min_step: 1e-10,
        }
    }
}

/// Minimizes `f` over `[lo, hi]` starting at `x0` (projected onto the box).
/// `stop` is consulted after each improvement and ends the search early.
pub fn coordinate_search(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    opts: SearchOptions,
    mut stop: impl FnMut(&[f64], f64) -> bool,
) -> SearchResult {
    let dim = x0.len();
    let width: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| b - a).collect();
    let mut x: Vec<f64> = (0..dim).map(|k| x0[k].clamp(lo[k], hi[k])).collect();
    let mut fx = f(&x);
    let mut evals = 1;
    if stop(&x, fx) {
        return SearchResult {
            x,
            value: fx,
            evaluations: evals,
            stopped: true,
        };
    }
    let mut step: Vec<f64> = width.iter().map(|w| w * opts.initial_step).collect();
    let mut trial = x.clone();

    while evals < opts.max_evals {
        let sweep_start = x.clone();
        let mut improved = false;
        for k in 0..dim {
            if width[k] == 0.0 {
                continue;
            }
            let mut moved = false;
            for dir in [1.0, -1.0] {
                if evals >= opts.max_evals {
                    break;
                }
                let cand = (x[k] + dir * step[k]).clamp(lo[k], hi[k]);
                if cand == x[k] {
                    continue;
                }
                trial[k] = cand;
                let ft = f(&trial);
                evals += 1;
                if ft < fx {
                    x[k] = cand;
                    fx = ft;
                    moved = true;
                    break;
                }
                trial[k] = x[k];
            }
            if moved {
                step[k] = (step[k] * 2.0).min(width[k]);
                improved = true;
                if stop(&x, fx) {
                    return SearchResult {
                        x,
                        value: fx,
                        evaluations: evals,
                        stopped: true,
                    };
                }
            } else {
                step[k] *= 0.5;
            }
        }

        if improved && evals < opts.max_evals {
            for k in 0..dim {
                trial[k] = (2.0 * x[k] - sweep_start[k]).clamp(lo[k], hi[k]);
            }
            let ft = f(&trial);
            evals += 1;
            if ft < fx {
                x.copy_from_slice(&trial);
                fx = ft;
                if stop(&x, fx) {
                    return SearchResult {
                        x,
                        value: fx,
                        evaluations: evals,
                        stopped: true,
                    };
                }
            } else {
                trial.copy_from_slice(&x);
            }
        }

        if step
            .iter()
            .zip(&width)
            .all(|(s, w)| *w == 0.0 || *s < opts.min_step * w)
        {
            break;
        }
    }
    SearchResult {
        x,
        value: fx,
        evaluations: evals,
        stopped: false,
    }
}
