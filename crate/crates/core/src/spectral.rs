//! Normalized-cuts spectral clustering and its k-means back end.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::prox::smallest_eigvecs;

/// Hard cluster assignments, one label in `0..k` per sample.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ClusterLabels {
    labels: Vec<usize>,
    k: usize,
}

impl ClusterLabels {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return invalid(format!("label {bad} outside 0..{k}"));
        }
        Ok(ClusterLabels { labels, k })
    }

    /// Wraps labels using `max + 1` as the cluster count.
    pub fn from_vec(labels: Vec<usize>) -> Self {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        ClusterLabels { labels, k }
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Lloyd's algorithm with k-means++ seeding and best-of-`restarts` selection.
#[derive(Debug, Clone, Copy)]
pub struct KMeans {
    pub k: usize,
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub labels: ClusterLabels,
    /// `k × dim` centroid matrix.
    pub centroids: DMatrix<f64>,
    /// Within-cluster sum of squared distances.
    pub inertia: f64,
    /// Inertia after every assignment step of the winning restart.
    pub inertia_trace: Vec<f64>,
}

impl KMeans {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeans {
            k,
            restarts: 20,
            max_iter: 300,
            seed,
        }
    }

    /// Clusters the rows of `points`.
    pub fn fit(&self, points: &DMatrix<f64>) -> Result<KMeansFit> {
        let n = points.nrows();
        if self.k == 0 || self.k > n {
            return invalid(format!("k-means needs 1 <= k <= n, got k={} for n={n}", self.k));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut best: Option<KMeansFit> = None;
        for _ in 0..self.restarts.max(1) {
            let fit = self.lloyd(points, &mut rng);
            // Strict comparison keeps the earliest restart on ties.
            if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
                best = Some(fit);
            }
        }
        Ok(best.expect("at least one restart"))
    }

    fn lloyd(&self, points: &DMatrix<f64>, rng: &mut ChaCha8Rng) -> KMeansFit {
        let n = points.nrows();
        let k = self.k;
        let mut centroids = seed_plus_plus(points, k, rng);
        let mut labels = vec![usize::MAX; n];
        let mut trace = Vec::new();
        for _ in 0..self.max_iter {
            let mut changed = false;
            let mut dists = vec![0.0; n];
            for i in 0..n {
                let (c, d) = nearest(points, i, &centroids);
                dists[i] = d;
                if labels[i] != c {
                    labels[i] = c;
                    changed = true;
                }
            }
            trace.push(dists.iter().sum());
            if !changed {
                break;
            }
            let mut counts = vec![0usize; k];
            let mut sums = DMatrix::zeros(k, points.ncols());
            for i in 0..n {
                counts[labels[i]] += 1;
                let mut row = sums.row_mut(labels[i]);
                row += points.row(i);
            }
            for (c, &count) in counts.iter().enumerate() {
                if count > 0 {
                    centroids.set_row(c, &(sums.row(c) / count as f64));
                } else {
                    // Empty cluster: reseed at the point farthest from its centroid.
                    let far = (0..n)
                        .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                        .expect("n > 0");
                    centroids.set_row(c, &points.row(far));
                    dists[far] = 0.0;
                }
            }
        }
        let inertia = (0..n).map(|i| sq_dist(points, i, &centroids, labels[i])).sum();
        KMeansFit {
            labels: ClusterLabels { labels, k },
            centroids,
            inertia,
            inertia_trace: trace,
        }
    }
}

fn sq_dist(points: &DMatrix<f64>, i: usize, centroids: &DMatrix<f64>, c: usize) -> f64 {
    (points.row(i) - centroids.row(c)).norm_squared()
}

fn nearest(points: &DMatrix<f64>, i: usize, centroids: &DMatrix<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centroids.nrows() {
        let d = sq_dist(points, i, centroids, c);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn seed_plus_plus(points: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let n = points.nrows();
    let mut centroids = DMatrix::zeros(k, points.ncols());
    centroids.set_row(0, &points.row(rng.random_range(0..n)));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points, i, &centroids, 0)).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.set_row(c, &points.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points, i, &centroids, c));
        }
    }
    centroids
}

/// Clusters the rows of `points` with the default restart and iteration budget.
pub fn kmeans(points: &DMatrix<f64>, k: usize, seed: u64) -> Result<ClusterLabels> {
    Ok(KMeans::new(k, seed).fit(points)?.labels)
}

/// Degrees below this are floored before taking `D^{-1/2}`.
pub const DEGREE_FLOOR: f64 = 1e-12;

/// Spectral embedding used by [`ncut`]: the `k` smallest eigenvectors of
/// `I − D^{-1/2} W D^{-1/2}`, with every row scaled to unit length.
pub fn ncut_embedding(w: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    let n = w.nrows();
    if !w.is_square() {
        return invalid(format!("graph must be square, got {}x{}", n, w.ncols()));
    }
    if k == 0 || k > n {
        return invalid(format!("ncut needs 1 <= k <= n, got k={k} for n={n}"));
    }
    if w.iter().any(|&v| !(v >= 0.0)) {
        return invalid("ncut graph has a negative or NaN entry");
    }
    let degree: Vec<f64> = w.row_iter().map(|r| r.sum()).collect();
    let isolated: Vec<bool> = degree.iter().map(|&d| d < DEGREE_FLOOR).collect();
    let inv_sqrt: Vec<f64> = degree.iter().map(|&d| 1.0 / d.max(DEGREE_FLOOR).sqrt()).collect();
    let mut l_sym = DMatrix::from_fn(n, n, |i, j| -inv_sqrt[i] * w[(i, j)] * inv_sqrt[j]);
    // Exact symmetry for the eigensolver, then the identity shift.
    l_sym = (&l_sym + l_sym.transpose()) * 0.5;
    for i in 0..n {
        l_sym[(i, i)] += 1.0;
    }
    let mut f = smallest_eigvecs(&l_sym, k)?;
    for (i, mut row) in f.row_iter_mut().enumerate() {
        let norm = row.norm();
        if isolated[i] || norm == 0.0 {
            row.fill(0.0);
        } else {
            row.unscale_mut(norm);
        }
    }
    Ok(f)
}

/// Normalized cuts on a symmetric nonnegative graph.
pub fn ncut(w: &DMatrix<f64>, k: usize, seed: u64) -> Result<ClusterLabels> {
    let embedding = ncut_embedding(w, k)?;
    kmeans(&embedding, k, seed)
}
