use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::seed;

pub const MAX_LLOYD_ITERATIONS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Euclidean distance of each point to its assigned centroid.
    pub distances: Vec<f64>,
    pub inertia: f64,
    /// Inertia after each assignment step.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k()];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] == cluster).collect()
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid with ties going to the lowest index.
fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = squared_distance(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>) {
    points.iter().map(|p| nearest(p, centroids)).unzip()
}

/// One D^2-weighted draw: index `i` with probability `d2[i] / sum(d2)`.
fn weighted_pick<R: Rng + ?Sized>(d2: &[f64], total: f64, rng: &mut R) -> usize {
    let mut target = rng.random::<f64>() * total;
    for (i, &d) in d2.iter().enumerate() {
        if d > 0.0 && target < d {
            return i;
        }
        target -= d;
    }
    d2.iter().rposition(|&d| d > 0.0).unwrap_or(0)
}

/// Greedy k-means++: each step draws `2 + ln k` D^2-weighted candidates and
/// keeps the one that lowers the total potential most (first on ties).
fn plus_plus_seeds<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let trials = 2 + (k as f64).ln().floor() as usize;
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| squared_distance(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        if total == 0.0 {
            centroids.push(points[rng.random_range(0..points.len())].clone());
            continue;
        }
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for _ in 0..trials {
            let c = weighted_pick(&d2, total, rng);
            let next: Vec<f64> = d2.iter().zip(points).map(|(&d, p)| d.min(squared_distance(p, &points[c]))).collect();
            let potential: f64 = next.iter().sum();
            if best.as_ref().is_none_or(|(b, _, _)| potential < *b) {
                best = Some((potential, c, next));
            }
        }
        let (_, c, next) = best.expect("at least two trials");
        centroids.push(points[c].clone());
        d2 = next;
    }
    centroids
}

fn update(points: &[Vec<f64>], assignments: &[usize], distances: &[f64], centroids: &mut [Vec<f64>]) {
    let dim = points[0].len();
    let k = centroids.len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignments) {
        counts[a] += 1;
        for (s, v) in sums[a].iter_mut().zip(p) {
            *s += v;
        }
    }
    let mut taken = vec![false; points.len()];
    for j in 0..k {
        if counts[j] > 0 {
            centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
        } else {
            // Reseed to the point farthest from its current centroid.
            let far = (0..points.len())
                .filter(|&i| !taken[i])
                .fold(None, |best: Option<usize>, i| match best {
                    Some(b) if distances[b] >= distances[i] => Some(b),
                    _ => Some(i),
                })
                .unwrap_or(0);
            taken[far] = true;
            centroids[j] = points[far].clone();
        }
    }
}

/// k-means++ seeding followed by Lloyd iterations.
pub fn kmeans_cluster(points: &[Vec<f64>], k: usize, seed: u64) -> Result<ClusterModel> {
    if k == 0 {
        return Err(invalid("k-means needs k >= 1"));
    }
    if points.len() < k {
        return Err(invalid(format!("k-means with k = {k} needs at least {k} points, got {}", points.len())));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim || p.iter().any(|v| !v.is_finite())) {
        return Err(invalid("k-means points must be finite and share one dimension"));
    }
    let mut rng = seed::rng(seed);
    let mut centroids = plus_plus_seeds(points, k, &mut rng);
    let (mut assignments, mut d2) = assign(points, &centroids);
    let mut history = vec![d2.iter().sum::<f64>()];
    let mut iterations = 0;
    while iterations < MAX_LLOYD_ITERATIONS {
        iterations += 1;
        let dist: Vec<f64> = d2.iter().map(|d| d.sqrt()).collect();
        update(points, &assignments, &dist, &mut centroids);
        let (next, next_d2) = assign(points, &centroids);
        history.push(next_d2.iter().sum());
        let converged = next == assignments;
        assignments = next;
        d2 = next_d2;
        if converged {
            break;
        }
    }
    Ok(ClusterModel {
        centroids,
        inertia: d2.iter().sum(),
        distances: d2.iter().map(|d| d.sqrt()).collect(),
        assignments,
        inertia_history: history,
        iterations,
    })
}

/// Largest cluster, then the smallest cluster other than it; ties go to the lower index.
pub fn select_cluster_pair(model: &ClusterModel) -> Result<(usize, usize)> {
    let sizes = model.sizes();
    if sizes.len() < 2 {
        return Err(invalid("cluster pair selection needs k >= 2"));
    }
    let a = (0..sizes.len()).fold(0, |best, j| if sizes[j] > sizes[best] { j } else { best });
    let b = (0..sizes.len())
        .filter(|&j| j != a)
        .fold(None, |best: Option<usize>, j| match best {
            Some(b) if sizes[b] <= sizes[j] => Some(b),
            _ => Some(j),
        })
        .expect("k >= 2");
    Ok((a, b))
}

/// Fraction of points whose label is the majority label of their cluster.
pub fn purity<L: PartialEq>(assignments: &[usize], labels: &[L]) -> f64 {
    if assignments.is_empty() {
        return 0.0;
    }
    let k = assignments.iter().max().map_or(0, |m| m + 1);
    let mut hits = 0;
    for c in 0..k {
        let members: Vec<&L> = assignments.iter().zip(labels).filter(|(a, _)| **a == c).map(|(_, l)| l).collect();
        hits += members.iter().map(|l| members.iter().filter(|m| **m == *l).count()).max().unwrap_or(0);
    }
    hits as f64 / assignments.len() as f64
}

pub fn l2_normalize(v: &[f32]) -> Vec<f64> {
    let norm = v.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    if norm == 0.0 {
        return v.iter().map(|x| f64::from(*x)).collect();
    }
    v.iter().map(|x| f64::from(*x) / norm).collect()
}
