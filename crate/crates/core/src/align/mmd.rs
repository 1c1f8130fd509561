use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};
use crate::exec::{pairwise_sum, Exec};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bandwidth {
    /// Kernel `exp(-d² / (2h²))` with this `h`.
    Fixed(f64),
    /// `h²` = median squared distance over the pooled samples.
    MedianHeuristic,
}

/// RBF kernel settings. RBF is the only kernel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub bandwidth: Bandwidth,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidth::MedianHeuristic,
        }
    }
}

impl KernelConfig {
    pub fn fixed(h: f64) -> Self {
        Self {
            bandwidth: Bandwidth::Fixed(h),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.bandwidth {
            Bandwidth::Fixed(h) if !(h > 0.0 && h.is_finite()) => {
                Err(Error::Config(format!("kernel bandwidth {h} must be positive")))
            }
            _ => Ok(()),
        }
    }

    /// The `γ` in `exp(-γ d²)` for this pair of samples.
    pub fn gamma(&self, x: &Matrix, y: &Matrix) -> f64 {
        match self.bandwidth {
            Bandwidth::Fixed(h) => 1.0 / (2.0 * h * h),
            Bandwidth::MedianHeuristic => {
                let med = median_sq_distance(&[x, y]);
                if med > 0.0 {
                    1.0 / (2.0 * med)
                } else {
                    0.5
                }
            }
        }
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// Lower median of the squared distances between all distinct pooled rows.
pub fn median_sq_distance(parts: &[&Matrix]) -> f64 {
    let rows: Vec<&[f64]> = parts.iter().flat_map(|m| (0..m.rows).map(move |i| m.row(i))).collect();
    let mut d = Vec::with_capacity(rows.len() * rows.len().saturating_sub(1) / 2);
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            d.push(sq_dist(rows[i], rows[j]));
        }
    }
    if d.is_empty() {
        return 0.0;
    }
    let mid = (d.len() - 1) / 2;
    *d.select_nth_unstable_by(mid, f64::total_cmp).1
}

fn check(x: &Matrix, y: &Matrix) -> Result<()> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Shape("mmd needs two nonempty samples".into()));
    }
    if x.cols != y.cols {
        return Err(Error::Shape(format!("mmd between dims {} and {}", x.cols, y.cols)));
    }
    Ok(())
}

fn mean_kernel(a: &Matrix, b: &Matrix, gamma: f64) -> f64 {
    let rows: Vec<f64> = (0..a.rows)
        .map(|i| {
            let ai = a.row(i);
            (0..b.rows).map(|j| (-gamma * sq_dist(ai, b.row(j))).exp()).sum::<f64>()
        })
        .collect();
    pairwise_sum(&rows) / (a.rows * b.rows) as f64
}

fn canonical_first(x: &Matrix, y: &Matrix) -> bool {
    (x.rows, x.data.len()) < (y.rows, y.data.len())
        || ((x.rows, x.data.len()) == (y.rows, y.data.len())
            && x.data.iter().zip(&y.data).map(|(a, b)| a.total_cmp(b)).find(|o| o.is_ne()) != Some(std::cmp::Ordering::Greater))
}

/// Biased (V-statistic) squared MMD under an RBF kernel. Arguments are put
/// in a canonical order first, so the result is exactly symmetric.
pub fn mmd(x: &Matrix, y: &Matrix, k: &KernelConfig) -> Result<f64> {
    check(x, y)?;
    k.validate()?;
    let (x, y) = if canonical_first(x, y) { (x, y) } else { (y, x) };
    let gamma = k.gamma(x, y);
    Ok(mmd_with_gamma(x, y, gamma))
}

pub(crate) fn mmd_with_gamma(x: &Matrix, y: &Matrix, gamma: f64) -> f64 {
    let kxx = mean_kernel(x, x, gamma);
    let kyy = mean_kernel(y, y, gamma);
    let kxy = mean_kernel(x, y, gamma);
    kxx + kyy - 2.0 * kxy
}

/// Adds `scale · ∂k(a_i, b_j)/∂a_i` into `da` for every pair, and the
/// matching `∂/∂b_j` into `db` when given. `∂k/∂a = -2γ k (a - b)`.
fn accumulate_pull(a: &Matrix, b: &Matrix, gamma: f64, scale: f64, da: &mut Matrix, mut db: Option<&mut Matrix>) {
    let dim = a.cols;
    for i in 0..a.rows {
        let ai = a.row(i);
        for j in 0..b.rows {
            let bj = b.row(j);
            let c = -2.0 * gamma * (-gamma * sq_dist(ai, bj)).exp() * scale;
            for d in 0..dim {
                let g = c * (ai[d] - bj[d]);
                da.data[i * dim + d] += g;
                if let Some(db) = db.as_deref_mut() {
                    db.data[j * dim + d] -= g;
                }
            }
        }
    }
}

/// Squared MMD and its gradients with respect to every row of `x` and `y`,
/// holding `gamma` fixed.
pub fn mmd_grad(x: &Matrix, y: &Matrix, gamma: f64) -> Result<(f64, Matrix, Matrix)> {
    check(x, y)?;
    let (n, m) = (x.rows as f64, y.rows as f64);
    let mut dx = Matrix::zeros(x.rows, x.cols);
    let mut dy = Matrix::zeros(y.rows, y.cols);
    // each ordered pair (i, j) and (j, i) contributes, hence the factor 2
    accumulate_pull(x, x, gamma, 2.0 / (n * n), &mut dx, None);
    accumulate_pull(y, y, gamma, 2.0 / (m * m), &mut dy, None);
    accumulate_pull(x, y, gamma, -2.0 / (n * m), &mut dx, Some(&mut dy));
    Ok((mmd_with_gamma(x, y, gamma), dx, dy))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PermutationTest {
    pub statistic: f64,
    pub null: Vec<f64>,
    /// Nearest-rank quantile of the null at the requested level.
    pub threshold: f64,
    pub p_value: f64,
}

impl PermutationTest {
    pub fn rejects(&self) -> bool {
        self.statistic > self.threshold
    }
}

/// Two-sample permutation test. The pooled kernel matrix is computed once
/// (the bandwidth depends only on the pooled set, so it is shared by every
/// relabelling); each permutation re-evaluates the quadratic form.
pub fn permutation_test(
    x: &Matrix,
    y: &Matrix,
    k: &KernelConfig,
    permutations: usize,
    level: f64,
    seed: u64,
    exec: Exec,
) -> Result<PermutationTest> {
    check(x, y)?;
    k.validate()?;
    if permutations == 0 || !(0.0..1.0).contains(&level) {
        return Err(Error::Config("permutation test needs permutations > 0 and level in [0, 1)".into()));
    }
    let gamma = k.gamma(x, y);
    let pooled: Vec<&[f64]> = (0..x.rows).map(|i| x.row(i)).chain((0..y.rows).map(|j| y.row(j))).collect();
    let total = pooled.len();
    let kernel: Vec<Vec<f64>> = exec.map_range(total, |i| {
        (0..total).map(|j| (-gamma * sq_dist(pooled[i], pooled[j])).exp()).collect()
    });
    let (n, m) = (x.rows, y.rows);
    let stat = |in_x: &[bool]| {
        let w = |i: usize| if in_x[i] { 1.0 / n as f64 } else { -1.0 / m as f64 };
        let rows: Vec<f64> = (0..total)
            .map(|i| w(i) * kernel[i].iter().enumerate().map(|(j, kij)| w(j) * kij).sum::<f64>())
            .collect();
        pairwise_sum(&rows)
    };
    let labels: Vec<bool> = (0..total).map(|i| i < n).collect();
    let statistic = stat(&labels);
    let mut null = exec.map_range(permutations, |p| {
        let mut l = labels.clone();
        l.shuffle(&mut rng::stream(seed, "mmd-permutation", p as u64));
        stat(&l)
    });
    null.sort_by(f64::total_cmp);
    let rank = ((level * permutations as f64).ceil() as usize).clamp(1, permutations);
    let threshold = null[rank - 1];
    let p_value = (1 + null.iter().filter(|&&s| s >= statistic).count()) as f64 / (permutations + 1) as f64;
    Ok(PermutationTest {
        statistic,
        null,
        threshold,
        p_value,
    })
}
