use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SelectError;
use crate::attr::FeatureVector;

const MAX_ROUNDS: usize = 100;

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.iter().enumerate() {
        let d = dist2(point, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// k-means++ seeding. Once every point sits on a chosen centroid the
/// remaining seeds are drawn uniformly from the unchosen points.
fn seed_centroids(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut chosen = vec![false; points.len()];
    let first = rng.gen_range(0..points.len());
    chosen[first] = true;
    let mut centroids = vec![points[first].clone()];
    while centroids.len() < k {
        let weights: Vec<f64> = points.iter().map(|p| nearest(p, &centroids).1).collect();
        let total: f64 = weights.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = None;
            for (i, w) in weights.iter().enumerate() {
                if *w > 0.0 {
                    pick = Some(i);
                    if target < *w {
                        break;
                    }
                    target -= w;
                }
            }
            pick.expect("positive total weight")
        } else {
            let free: Vec<usize> = (0..points.len()).filter(|&i| !chosen[i]).collect();
            free[rng.gen_range(0..free.len())]
        };
        chosen[pick] = true;
        centroids.push(points[pick].clone());
    }
    centroids
}

fn mean(points: &[Vec<f64>], members: &[usize], dims: usize) -> Vec<f64> {
    let mut m = vec![0.0; dims];
    for &i in members {
        for (acc, x) in m.iter_mut().zip(&points[i]) {
            *acc += x;
        }
    }
    m.iter_mut().for_each(|x| *x /= members.len() as f64);
    m
}

/// Every cluster gets at least one point: an empty cluster takes the point
/// farthest from its centroid among clusters with more than one member.
fn fill_empty(points: &[Vec<f64>], centroids: &[Vec<f64>], assign: &mut [usize], k: usize) {
    loop {
        let mut sizes = vec![0usize; k];
        for &a in assign.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let donor = (0..points.len())
            .filter(|&i| sizes[assign[i]] > 1)
            .max_by(|&a, &b| {
                let da = dist2(&points[a], &centroids[assign[a]]);
                let db = dist2(&points[b], &centroids[assign[b]]);
                da.total_cmp(&db).then(a.cmp(&b))
            })
            .expect("more points than clusters");
        assign[donor] = empty;
    }
}

/// Clusters the direction-normalized vectors into `n` groups and returns the
/// index of each group's medoid, in cluster order.
pub fn diversity_pick(
    vectors: &[FeatureVector],
    n: usize,
    seed: u64,
) -> Result<Vec<usize>, SelectError> {
    if n == 0 || n > vectors.len() {
        return Err(SelectError::PoolTooSmall {
            needed: n,
            available: vectors.len(),
        });
    }
    if n == vectors.len() {
        return Ok((0..n).collect());
    }
    let points: Vec<Vec<f64>> = vectors.iter().map(FeatureVector::unit).collect();
    let dims = points[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_centroids(&points, n, &mut rng);
    let mut assign: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
    fill_empty(&points, &centroids, &mut assign, n);
    for _ in 0..MAX_ROUNDS {
        centroids = (0..n)
            .map(|k| {
                let members: Vec<usize> = (0..points.len()).filter(|&i| assign[i] == k).collect();
                mean(&points, &members, dims)
            })
            .collect();
        let mut next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
        fill_empty(&points, &centroids, &mut next, n);
        if next == assign {
            break;
        }
        assign = next;
    }
    let medoids = (0..n)
        .map(|k| {
            (0..points.len())
                .filter(|&i| assign[i] == k)
                .min_by(|&a, &b| {
                    dist2(&points[a], &centroids[k])
                        .total_cmp(&dist2(&points[b], &centroids[k]))
                        .then(a.cmp(&b))
                })
                .expect("no empty clusters")
        })
        .collect();
    Ok(medoids)
}
