//! Exact t-SNE to two dimensions with periodic snapshots.
//!
//! Rows are processed in a canonical order (sorted by content) and each row's
//! starting point is drawn from a stream keyed by its content, so permuting
//! the input permutes the output bit for bit.

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::metrics::{normalize_metrics, MetricsTable};

const ENTROPY_TOLERANCE: f64 = 1e-5;
const BINARY_SEARCH_STEPS: usize = 200;
const INITIAL_STD: f64 = 1e-4;
const MIN_GAIN: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    /// Iterations run with exaggeration and the initial momentum.
    pub exaggeration_iterations: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub snapshot_stride: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iterations: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            snapshot_stride: 10,
            seed: 0,
        }
    }
}

impl TsneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.perplexity >= 2.0) || !self.perplexity.is_finite() {
            return Err(Error::invalid("perplexity must be at least 2"));
        }
        if self.iterations == 0 {
            return Err(Error::invalid("iterations must be at least 1"));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::invalid("snapshot_stride must be at least 1"));
        }
        if !(self.learning_rate > 0.0) || !(self.early_exaggeration >= 1.0) {
            return Err(Error::invalid("learning_rate must be positive and early_exaggeration >= 1"));
        }
        for m in [self.initial_momentum, self.final_momentum] {
            if !(0.0..1.0).contains(&m) {
                return Err(Error::invalid("momentum must lie in [0, 1)"));
            }
        }
        Ok(())
    }

    /// Perplexity actually used for `n` points: below `(n - 1) / 3`.
    pub fn effective_perplexity(&self, n: usize) -> f64 {
        let limit = (n as f64 - 1.0) / 3.0;
        if self.perplexity < limit {
            self.perplexity
        } else {
            ((n as f64 - 2.0) / 3.0).max(1.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection2D {
    /// n × 2.
    pub coords: Vec<[f64; 2]>,
    pub iteration: usize,
    pub kl: f64,
}

fn squared_distances(x: ArrayView2<f64>) -> Vec<f64> {
    let n = x.nrows();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = x
                .row(i)
                .iter()
                .zip(x.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

/// Conditional distribution for one point at precision `beta`, returning its
/// entropy in bits. Distances are shifted by their minimum for stability.
fn conditional_row(dist: &[f64], skip: usize, beta: f64, out: &mut [f64]) -> f64 {
    let min = dist
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != skip)
        .map(|(_, &d)| d)
        .fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    for (j, (&d, o)) in dist.iter().zip(out.iter_mut()).enumerate() {
        *o = if j == skip { 0.0 } else { (-(d - min) * beta).exp() };
        sum += *o;
    }
    let mut entropy = 0.0;
    for o in out.iter_mut() {
        *o /= sum;
        if *o > 0.0 {
            entropy -= *o * o.log2();
        }
    }
    entropy
}

/// Row-stochastic `p(j|i)` matched to `log2(perplexity)` bits of entropy.
pub fn conditional_affinities(x: ArrayView2<f64>, perplexity: f64) -> Array2<f64> {
    let n = x.nrows();
    let d = squared_distances(x);
    let target = perplexity.log2();
    let mut p = Array2::zeros((n, n));
    let mut row = vec![0.0; n];
    for i in 0..n {
        let dist = &d[i * n..(i + 1) * n];
        let (mut beta, mut lo, mut hi) = (1.0, 0.0, f64::INFINITY);
        for _ in 0..BINARY_SEARCH_STEPS {
            let h = conditional_row(dist, i, beta, &mut row);
            if (h - target).abs() < ENTROPY_TOLERANCE {
                break;
            }
            if h > target {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
        }
        conditional_row(dist, i, beta, &mut row);
        for j in 0..n {
            p[[i, j]] = row[j];
        }
    }
    p
}

/// Symmetrized joint affinities `(p(j|i) + p(i|j)) / 2n`.
pub fn joint_affinities(x: ArrayView2<f64>, perplexity: f64) -> Array2<f64> {
    let c = conditional_affinities(x, perplexity);
    let n = x.nrows() as f64;
    let mut p = &c + &c.t();
    p /= 2.0 * n;
    p
}

/// `sum p ln(p/q)` with `0 ln 0 = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            found: q.len(),
        });
    }
    let mut kl = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b <= 0.0 {
                return Err(Error::Numerical("q is zero where p is positive".into()));
            }
            kl += a * (a / b).ln();
        }
    }
    Ok(kl)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn row_seed(seed: u64, row: impl Iterator<Item = f64>) -> u64 {
    row.fold(splitmix(seed), |h, v| splitmix(h ^ v.to_bits()))
}

fn canonical_order(x: ArrayView2<f64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    order.sort_by(|&a, &b| {
        x.row(a)
            .iter()
            .zip(x.row(b))
            .map(|(u, v)| u.total_cmp(v))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order
}

struct Kernel {
    num: Vec<f64>,
    sum: f64,
}

fn student_kernel(y: &[[f64; 2]]) -> Kernel {
    let n = y.len();
    let mut num = vec![0.0; n * n];
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            let v = 1.0 / (1.0 + dx * dx + dy * dy);
            num[i * n + j] = v;
            num[j * n + i] = v;
            sum += 2.0 * v;
        }
    }
    Kernel { num, sum }
}

fn kl_of(p: &[f64], k: &Kernel) -> f64 {
    let mut kl = 0.0;
    for (&a, &v) in p.iter().zip(&k.num) {
        if a > 0.0 {
            kl += a * (a / (v / k.sum)).ln();
        }
    }
    kl
}

/// Runs exact t-SNE. `on_snapshot` sees the state every `snapshot_stride`
/// iterations and after the last one; returning `false` cancels the run.
pub fn tsne(
    x: ArrayView2<f64>,
    cfg: &TsneConfig,
    mut on_snapshot: impl FnMut(&Projection2D) -> bool,
) -> Result<Projection2D> {
    cfg.validate()?;
    let n = x.nrows();
    if n < 3 {
        return Err(Error::invalid(format!("t-SNE needs at least 3 rows, got {n}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite input row".into()));
    }
    let perplexity = cfg.effective_perplexity(n);
    if perplexity != cfg.perplexity {
        log::warn!(
            "perplexity {} infeasible for {n} points; using {perplexity}",
            cfg.perplexity
        );
    }
    let order = canonical_order(x);
    let xs = x.select(ndarray::Axis(0), &order);
    let p = joint_affinities(xs.view(), perplexity);
    let p = p.as_slice().expect("standard layout").to_vec();

    let normal = Normal::new(0.0, INITIAL_STD).expect("valid std");
    let mut y: Vec<[f64; 2]> = xs
        .rows()
        .into_iter()
        .map(|row| {
            let mut rng = ChaCha8Rng::seed_from_u64(row_seed(cfg.seed, row.iter().copied()));
            [normal.sample(&mut rng), normal.sample(&mut rng)]
        })
        .collect();
    let mut update = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut grad = vec![[0.0f64; 2]; n];

    let unpermute = |y: &[[f64; 2]]| -> Vec<[f64; 2]> {
        let mut out = vec![[0.0; 2]; n];
        for (k, &i) in order.iter().enumerate() {
            out[i] = y[k];
        }
        out
    };

    let mut last = None;
    for it in 1..=cfg.iterations {
        let early = it <= cfg.exaggeration_iterations;
        let exaggeration = if early { cfg.early_exaggeration } else { 1.0 };
        let momentum = if early { cfg.initial_momentum } else { cfg.final_momentum };
        let kernel = student_kernel(&y);
        for i in 0..n {
            let mut g = [0.0; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let v = kernel.num[i * n + j];
                let w = (exaggeration * p[i * n + j] - v / kernel.sum) * v;
                g[0] += w * (y[i][0] - y[j][0]);
                g[1] += w * (y[i][1] - y[j][1]);
            }
            grad[i] = [4.0 * g[0], 4.0 * g[1]];
        }
        for i in 0..n {
            for d in 0..2 {
                let same_sign = (grad[i][d] > 0.0) == (update[i][d] > 0.0);
                gains[i][d] = if same_sign { gains[i][d] * 0.8 } else { gains[i][d] + 0.2 };
                gains[i][d] = gains[i][d].max(MIN_GAIN);
                update[i][d] = momentum * update[i][d] - cfg.learning_rate * gains[i][d] * grad[i][d];
                y[i][d] += update[i][d];
            }
        }
        let mean = y.iter().fold([0.0, 0.0], |m, p| [m[0] + p[0], m[1] + p[1]]);
        for p in y.iter_mut() {
            p[0] -= mean[0] / n as f64;
            p[1] -= mean[1] / n as f64;
        }
        if y.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::Numerical(format!("t-SNE diverged at iteration {it}")));
        }
        if it % cfg.snapshot_stride == 0 || it == cfg.iterations {
            let snap = Projection2D {
                coords: unpermute(&y),
                iteration: it,
                kl: kl_of(&p, &student_kernel(&y)).max(0.0),
            };
            if !on_snapshot(&snap) {
                return Err(Error::Cancelled);
            }
            last = Some(snap);
        }
    }
    Ok(last.expect("the final iteration always snapshots"))
}

/// Projects the normalized metric signatures of every node.
pub fn project_metrics(
    t: &MetricsTable,
    cfg: &TsneConfig,
    on_snapshot: impl FnMut(&Projection2D) -> bool,
) -> Result<Projection2D> {
    tsne(normalize_metrics(t).view(), cfg, on_snapshot)
}

pub fn project_embedding(
    e: &EmbeddingMatrix,
    cfg: &TsneConfig,
    on_snapshot: impl FnMut(&Projection2D) -> bool,
) -> Result<Projection2D> {
    tsne(e.vectors.mapv(f64::from).view(), cfg, on_snapshot)
}

fn neighbor_ranks(points: &[Vec<f64>], i: usize) -> Vec<usize> {
    let d = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum() };
    let mut others: Vec<(f64, usize)> = (0..points.len())
        .filter(|&j| j != i)
        .map(|j| (d(&points[i], &points[j]), j))
        .collect();
    others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    others.into_iter().map(|(_, j)| j).collect()
}

/// Trustworthiness of a low-dimensional layout for `k` neighbors: 1 when every
/// layout neighbor is also an input-space neighbor. Needs `k < n / 2`.
pub fn trustworthiness(x: ArrayView2<f64>, y: &[[f64; 2]], k: usize) -> Result<f64> {
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: y.len(),
        });
    }
    if k == 0 || 2 * k >= n {
        return Err(Error::invalid(format!("trustworthiness needs 0 < k < n/2, got k={k}, n={n}")));
    }
    let xin: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
    let yout: Vec<Vec<f64>> = y.iter().map(|p| p.to_vec()).collect();
    let mut penalty = 0usize;
    for i in 0..n {
        let input = neighbor_ranks(&xin, i);
        let mut rank = vec![0usize; n];
        for (r, &j) in input.iter().enumerate() {
            rank[j] = r + 1;
        }
        for &j in neighbor_ranks(&yout, i).iter().take(k) {
            if rank[j] > k {
                penalty += rank[j] - k;
            }
        }
    }
    let (n, k) = (n as f64, k as f64);
    Ok(1.0 - 2.0 / (n * k * (2.0 * n - 3.0 * k - 1.0)) * penalty as f64)
}
