use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Dataset, TrainError};
use crate::case::Partition;

/// Scenarios used as clustering features.
pub const FEATURE_SUBSET: usize = 512;
pub const KMEANS_RESTARTS: usize = 100;
const LLOYD_ITERATIONS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub partition: Partition,
    pub inertia: f64,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn lloyd(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, f64) {
    let n = points.len();
    // k-means++ seeding
    let mut centers = vec![points[rng.gen_range(0..n)].clone()];
    let mut best: Vec<f64> = points.iter().map(|p| dist2(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = best.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.gen_range(0.0..total);
            let mut pick = n - 1;
            for (i, w) in best.iter().enumerate() {
                if r < *w {
                    pick = i;
                    break;
                }
                r -= w;
            }
            pick
        } else {
            rng.gen_range(0..n)
        };
        centers.push(points[next].clone());
        for (b, p) in best.iter_mut().zip(points) {
            *b = b.min(dist2(p, centers.last().unwrap()));
        }
    }
    let mut assign = vec![usize::MAX; n];
    for _ in 0..LLOYD_ITERATIONS {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut arg = 0;
            let mut dmin = f64::INFINITY;
            for (c, ctr) in centers.iter().enumerate() {
                let dd = dist2(p, ctr);
                if dd < dmin {
                    dmin = dd;
                    arg = c;
                }
            }
            if assign[i] != arg {
                assign[i] = arg;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        for (c, ctr) in centers.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = points.iter().zip(&assign).filter(|(_, a)| **a == c).map(|(p, _)| p).collect();
            if members.is_empty() {
                continue;
            }
            for (j, v) in ctr.iter_mut().enumerate() {
                *v = members.iter().map(|m| m[j]).sum::<f64>() / members.len() as f64;
            }
        }
    }
    let inertia = points.iter().zip(&assign).map(|(p, &a)| dist2(p, &centers[a])).sum();
    (assign, inertia)
}

/// Relabels groups by first occurrence so equal partitions compare equal.
fn relabel(assign: &[usize]) -> (usize, Vec<usize>) {
    let mut map = std::collections::BTreeMap::new();
    let out = assign
        .iter()
        .map(|a| {
            let next = map.len();
            *map.entry(*a).or_insert(next)
        })
        .collect();
    (map.len(), out)
}

/// k-means++ with `restarts` seeded restarts; the lowest-inertia result is
/// kept, ties going to the earliest restart. Empty clusters can only occur
/// with fewer distinct points than `k`, in which case fewer groups are
/// returned.
pub fn kmeans(points: &[Vec<f64>], k: usize, restarts: usize, seed: u64) -> Result<KMeansResult, TrainError> {
    if points.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if k == 0 || k > points.len() {
        return Err(TrainError::TooManyClusters { k, loads: points.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<usize>, f64)> = None;
    for _ in 0..restarts.max(1) {
        let (assign, inertia) = lloyd(points, k, &mut rng);
        if best.as_ref().map_or(true, |(_, b)| inertia < *b - 1e-12 * b.abs().max(1.0)) {
            best = Some((assign, inertia));
        }
    }
    let (assign, inertia) = best.unwrap();
    let (count, assignment) = relabel(&assign);
    Ok(KMeansResult {
        partition: Partition { count, assignment },
        inertia,
    })
}

/// Per-load feature vectors: each load's LMCE over the first
/// [`FEATURE_SUBSET`] training scenarios.
pub fn lmce_features(dataset: &Dataset) -> Vec<Vec<f64>> {
    let idx: Vec<usize> = dataset.train.iter().copied().take(FEATURE_SUBSET).collect();
    (0..dataset.n_loads())
        .map(|i| idx.iter().map(|&s| dataset.scenarios[s].mu[i]).collect())
        .collect()
}

/// Groups loads with similar LMCE behaviour.
pub fn cluster_loads(dataset: &Dataset, k: usize, seed: u64) -> Result<Partition, TrainError> {
    if dataset.scenarios.is_empty() || dataset.train.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if k > dataset.n_loads() {
        return Err(TrainError::TooManyClusters {
            k,
            loads: dataset.n_loads(),
        });
    }
    Ok(kmeans(&lmce_features(dataset), k, KMEANS_RESTARTS, seed)?.partition)
}

/// Cosine similarity of two vectors; 1 when both are zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 && nb == 0.0 {
        return 1.0;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}

/// Smallest pairwise cosine similarity between members of the same group.
pub fn min_intra_cosine(columns: &[Vec<f64>], partition: &Partition) -> f64 {
    let mut worst: f64 = 1.0;
    for i in 0..columns.len() {
        for j in i + 1..columns.len() {
            if partition.same_group(i, j) {
                worst = worst.min(cosine(&columns[i], &columns[j]));
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_blobs_are_recovered() {
        let pts: Vec<Vec<f64>> = [0.0, 0.1, 5.0, 5.1, 9.0, 9.2]
            .iter()
            .map(|x| vec![*x, -x])
            .collect();
        let r = kmeans(&pts, 3, 10, 1).unwrap();
        assert_eq!(r.partition.canonical_groups(), vec![vec![0, 1], vec![2, 3], vec![4, 5]]);
        assert_eq!(kmeans(&pts, 1, 3, 1).unwrap().partition.count, 1);
        assert!(matches!(kmeans(&pts, 7, 3, 1), Err(TrainError::TooManyClusters { .. })));
    }

    #[test]
    fn duplicates_share_a_cluster() {
        let pts = vec![vec![1.0, 2.0], vec![3.0, 0.0], vec![1.0, 2.0], vec![-4.0, 1.0]];
        for seed in 0..20 {
            let r = kmeans(&pts, 3, 5, seed).unwrap();
            assert!(r.partition.same_group(0, 2));
        }
    }

    #[test]
    fn cosine_edge_cases() {
        assert_eq!(cosine(&[0.0], &[0.0]), 1.0);
        assert_eq!(cosine(&[1.0], &[0.0]), 0.0);
        assert!((cosine(&[1.0, 1.0], &[2.0, 2.0]) - 1.0).abs() < 1e-15);
    }
}
