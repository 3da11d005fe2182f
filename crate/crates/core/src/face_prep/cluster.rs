use rand::seq::IndexedRandom;
use rand::Rng;

use super::EmbeddingRecord;
use crate::error::{Error, Result};
use crate::util::{derive_seed, rng};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KMeansConfig {
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this.
    pub tol: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self { max_iter: 300, tol: 1e-4 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    pub centroids: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus_init<R: Rng>(points: &[Vec<f64>], k: usize, r: &mut R) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[r.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = r.random::<f64>() * total;
            let mut idx = points.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if *d > 0.0 && target < *d {
                    idx = i;
                    break;
                }
                target -= d;
            }
            idx
        } else {
            r.random_range(0..points.len())
        };
        centroids.push(points[pick].clone());
        let c = centroids.last().expect("just pushed");
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, c));
        }
    }
    centroids
}

/// Lloyd's algorithm with k-means++ seeding and Euclidean distance.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, cfg: &KMeansConfig) -> Result<KMeansResult> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k = {k} must lie in 1..={n}")));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim || p.iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidArgument("embeddings must share one dimension and be finite".into()));
    }
    let mut r = rng(seed);
    let mut centroids = plus_plus_init(points, k, &mut r);
    let mut assignment = vec![0; n];
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        for (a, p) in assignment.iter_mut().zip(points) {
            *a = nearest(p, &centroids).0;
        }
        reseed_empty(points, &centroids, &mut assignment, k);

        let mut next = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignment) {
            counts[a] += 1;
            for (s, v) in next[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for (c, &m) in next.iter_mut().zip(&counts) {
            for s in c.iter_mut() {
                *s /= m as f64;
            }
        }
        let shift = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        if shift <= cfg.tol {
            break;
        }
    }
    for (a, p) in assignment.iter_mut().zip(points) {
        *a = nearest(p, &centroids).0;
    }
    reseed_empty(points, &centroids, &mut assignment, k);
    Ok(KMeansResult {
        centroids,
        assignment,
        iterations,
    })
}

/// Gives every empty cluster the point farthest from its centroid among
/// clusters that still have more than one member.
fn reseed_empty(points: &[Vec<f64>], centroids: &[Vec<f64>], assignment: &mut [usize], k: usize) {
    loop {
        let mut counts = vec![0usize; k];
        for &a in assignment.iter() {
            counts[a] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let donor = (0..points.len())
            .filter(|&i| counts[assignment[i]] > 1)
            .max_by(|&i, &j| {
                let di = sq_dist(&points[i], &centroids[assignment[i]]);
                let dj = sq_dist(&points[j], &centroids[assignment[j]]);
                di.total_cmp(&dj).then(j.cmp(&i))
            })
            .expect("k <= n leaves a multi-member cluster");
        assignment[donor] = empty;
    }
}

/// Clusters the embeddings into `k` groups and picks one member of each group
/// uniformly at random. Ids are returned in cluster order.
pub fn select_representatives(embeddings: &[EmbeddingRecord], k: usize, seed: u64) -> Result<Vec<String>> {
    let n = embeddings.len();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k = {k} must lie in 1..={n}")));
    }
    if k == n {
        return Ok(embeddings.iter().map(|e| e.image_id.clone()).collect());
    }
    let points: Vec<Vec<f64>> = embeddings.iter().map(|e| e.vector.clone()).collect();
    let res = kmeans(&points, k, derive_seed(seed, 0), &KMeansConfig::default())?;
    let mut members = vec![Vec::new(); k];
    for (i, &a) in res.assignment.iter().enumerate() {
        members[a].push(i);
    }
    let mut r = rng(derive_seed(seed, 1));
    Ok(members
        .iter()
        .map(|m| embeddings[*m.choose(&mut r).expect("clusters are non-empty")].image_id.clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, v: Vec<f64>) -> EmbeddingRecord {
        EmbeddingRecord {
            image_id: id.into(),
            vector: v,
        }
    }

    #[test]
    fn k_equals_n() {
        let e = vec![rec("a", vec![0.0]), rec("b", vec![1.0]), rec("c", vec![2.0])];
        assert_eq!(select_representatives(&e, 3, 1).unwrap(), vec!["a", "b", "c"]);
    }

    #[test]
    fn two_groups() {
        let mut e = Vec::new();
        for i in 0..5 {
            e.push(rec(&format!("a{i}"), vec![0.0, 0.0]));
            e.push(rec(&format!("b{i}"), vec![100.0, 100.0]));
        }
        for seed in 0..20 {
            let ids = select_representatives(&e, 2, seed).unwrap();
            assert_eq!(ids.iter().filter(|s| s.starts_with('a')).count(), 1);
            assert_eq!(ids.iter().filter(|s| s.starts_with('b')).count(), 1);
        }
    }

    #[test]
    fn k_too_large() {
        let e = vec![rec("a", vec![0.0])];
        assert!(matches!(select_representatives(&e, 2, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn duplicates_never_leave_empty_clusters() {
        let e: Vec<EmbeddingRecord> = (0..6).map(|i| rec(&format!("x{i}"), vec![1.0, 1.0])).collect();
        let ids = select_representatives(&e, 4, 3).unwrap();
        assert_eq!(ids.len(), 4);
        let mut uniq = ids.clone();
        uniq.sort();
        uniq.dedup();
        assert_eq!(uniq.len(), 4);
    }
}
