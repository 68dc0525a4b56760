//! k-means, average-linkage agglomerative clustering and the adjusted Rand
//! index.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::matrix::{distance, squared_distance, Matrix};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAX_ITERATIONS: usize = 300;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KMeansResult<T> {
    pub k: usize,
    pub assignments: Vec<usize>,
    /// Row-major `k x cols`.
    pub centroids: Vec<Vec<T>>,
    pub inertia: T,
    pub iterations: usize,
    /// Inertia after every assignment step.
    pub inertia_trace: Vec<T>,
    pub converged: bool,
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::BadK { k, n });
    }
    Ok(())
}

fn nearest<T: Scalar>(point: &[T], centroids: &[Vec<T>]) -> (usize, T) {
    let mut best = (0, squared_distance(point, &centroids[0]));
    for (c, centroid) in centroids.iter().enumerate().skip(1) {
        let d = squared_distance(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn assign<T: Scalar>(data: &Matrix<T>, centroids: &[Vec<T>]) -> (Vec<usize>, T) {
    let mut inertia = T::zero();
    let labels = (0..data.rows())
        .map(|i| {
            let (c, d) = nearest(data.row(i), centroids);
            inertia += d;
            c
        })
        .collect();
    (labels, inertia)
}

fn plus_plus<T: Scalar>(data: &Matrix<T>, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<T>> {
    let n = data.rows();
    let mut centroids = vec![data.row(rng.random_range(0..n)).to_vec()];
    let mut d2: Vec<T> = (0..n).map(|i| squared_distance(data.row(i), &centroids[0])).collect();
    while centroids.len() < k {
        let total: T = d2.iter().copied().sum();
        let pick = if total > T::zero() {
            let target = T::of(rng.random::<f64>()) * total;
            let mut acc = T::zero();
            let mut chosen = n - 1;
            for (i, d) in d2.iter().enumerate() {
                acc += *d;
                if acc > target && *d > T::zero() {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = data.row(pick).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            let nd = squared_distance(data.row(i), &c);
            if nd < *d {
                *d = nd;
            }
        }
        centroids.push(c);
    }
    centroids
}

fn means<T: Scalar>(data: &Matrix<T>, labels: &[usize], previous: &[Vec<T>]) -> Vec<Vec<T>> {
    let k = previous.len();
    let mut sums = vec![vec![T::zero(); data.cols()]; k];
    let mut counts = vec![0usize; k];
    for (i, &c) in labels.iter().enumerate() {
        counts[c] += 1;
        for (s, x) in sums[c].iter_mut().zip(data.row(i)) {
            *s += *x;
        }
    }
    sums.into_iter()
        .zip(counts)
        .enumerate()
        .map(|(c, (s, n))| {
            if n == 0 {
                previous[c].clone()
            } else {
                s.into_iter().map(|x| x / T::of_usize(n)).collect()
            }
        })
        .collect()
}

/// Lloyd's algorithm from a k-means++ start drawn with ChaCha8 seeded by
/// `seed`. Stops when assignments repeat or after [`MAX_ITERATIONS`].
pub fn kmeans<T: Scalar>(data: &Matrix<T>, k: usize, seed: u64) -> Result<KMeansResult<T>> {
    check_k(k, data.rows())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus(data, k, &mut rng);
    let (mut labels, first) = assign(data, &centroids);
    let mut trace = vec![first];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        centroids = means(data, &labels, &centroids);
        let (next, inertia) = assign(data, &centroids);
        trace.push(inertia);
        if next == labels {
            converged = true;
            break;
        }
        labels = next;
    }
    Ok(KMeansResult {
        k,
        assignments: labels,
        centroids,
        inertia: *trace.last().expect("trace is non-empty"),
        iterations,
        inertia_trace: trace,
        converged,
    })
}

/// Average-linkage clustering on Euclidean distance, cut at `k` clusters.
/// The closest pair merges first; ties go to the smallest `(i, j)`.
/// Cluster labels follow the first row of each cluster.
pub fn agglomerative<T: Scalar>(data: &Matrix<T>, k: usize) -> Result<Vec<usize>> {
    let n = data.rows();
    check_k(k, n)?;
    let mut dist = Matrix::<T>::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let d = distance(data.row(i), data.row(j));
            dist.set(i, j, d);
            dist.set(j, i, d);
        }
    }
    let mut active = vec![true; n];
    let mut size = vec![1usize; n];
    let mut parent: Vec<usize> = (0..n).collect();
    // Closest partner `j > i` of each active row.
    let row_min = |dist: &Matrix<T>, active: &[bool], i: usize| -> Option<(T, usize)> {
        let mut best: Option<(T, usize)> = None;
        for j in i + 1..n {
            if active[j] && best.is_none_or(|(d, _)| dist.get(i, j) < d) {
                best = Some((dist.get(i, j), j));
            }
        }
        best
    };
    let mut cache: Vec<Option<(T, usize)>> = (0..n).map(|i| row_min(&dist, &active, i)).collect();
    for _ in 0..n - k {
        let mut pick: Option<(T, usize, usize)> = None;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            if let Some((d, j)) = cache[i] {
                if pick.is_none_or(|(pd, _, _)| d < pd) {
                    pick = Some((d, i, j));
                }
            }
        }
        let (_, a, b) = pick.expect("at least two active clusters");
        let (na, nb) = (T::of_usize(size[a]), T::of_usize(size[b]));
        active[b] = false;
        parent[b] = a;
        for m in 0..n {
            if active[m] && m != a {
                let d = (na * dist.get(a, m) + nb * dist.get(b, m)) / (na + nb);
                dist.set(a, m, d);
                dist.set(m, a, d);
            }
        }
        size[a] += size[b];
        cache[b] = None;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            let stale = matches!(cache[i], Some((_, j)) if j == a || j == b);
            if i == a || stale {
                cache[i] = row_min(&dist, &active, i);
            } else if i < a {
                let d = dist.get(i, a);
                match cache[i] {
                    Some((cd, cj)) if d < cd || (d == cd && a < cj) => cache[i] = Some((d, a)),
                    None => cache[i] = Some((d, a)),
                    _ => {}
                }
            }
        }
    }
    let root = |mut i: usize| {
        while parent[i] != i {
            i = parent[i];
        }
        i
    };
    let mut names: HashMap<usize, usize> = HashMap::new();
    Ok((0..n)
        .map(|i| {
            let r = root(i);
            let next = names.len();
            *names.entry(r).or_insert(next)
        })
        .collect())
}

/// Adjusted Rand index between two labelings; 1.0 when both are the same
/// trivial partition.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::Empty);
    }
    let pairs = |x: u64| (x * x.saturating_sub(1) / 2) as f64;
    let mut table: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| pairs(c)).sum();
    let sa: f64 = rows.values().map(|&c| pairs(c)).sum();
    let sb: f64 = cols.values().map(|&c| pairs(c)).sum();
    let expected = sa * sb / pairs(a.len() as u64).max(1.0);
    let max = (sa + sb) / 2.0;
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr_free::gaussian;

    /// Box-Muller so the tests need no extra distribution crate.
    mod rand_distr_free {
        use rand::Rng;

        pub fn gaussian(rng: &mut impl Rng) -> f64 {
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            let v: f64 = rng.random();
            (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
        }
    }

    fn blobs(per: usize) -> (Matrix<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut rows = Vec::new();
        let mut truth = Vec::new();
        for (label, (cx, cy)) in [(0.0, 0.0), (10.0, 10.0)].into_iter().enumerate() {
            for _ in 0..per {
                rows.push(vec![cx + 0.5 * gaussian(&mut rng), cy + 0.5 * gaussian(&mut rng)]);
                truth.push(label);
            }
        }
        (Matrix::from_rows(&rows).unwrap(), truth)
    }

    /// Brute-force check that two 2-cluster labelings agree up to a swap.
    fn same_partition(a: &[usize], b: &[usize]) -> bool {
        a == b || a.iter().zip(b).all(|(x, y)| *x == 1 - *y)
    }

    #[test]
    fn kmeans_recovers_blobs() {
        let (m, truth) = blobs(40);
        let r = kmeans(&m, 2, 42).unwrap();
        assert!(r.converged);
        assert!(same_partition(&r.assignments, &truth));
        assert_eq!(adjusted_rand_index(&r.assignments, &truth).unwrap(), 1.0);
        assert_eq!(kmeans(&m, 2, 42).unwrap(), r);
    }

    #[test]
    fn agglomerative_matches_kmeans() {
        let (m, truth) = blobs(40);
        let a = agglomerative(&m, 2).unwrap();
        let k = kmeans(&m, 2, 1).unwrap();
        assert!(same_partition(&a, &truth));
        assert!(same_partition(&a, &k.assignments));
    }

    #[test]
    fn kmeans_edge_cases() {
        let m = Matrix::from_rows(&[vec![0.0, 0.0], vec![2.0, 0.0], vec![4.0, 3.0]]).unwrap();
        let one = kmeans(&m, 1, 0).unwrap();
        assert_eq!(one.centroids[0], m.column_means());
        // total variance x n: sum of squared deviations from the mean
        let means = m.column_means();
        let ss: f64 = (0..3).map(|i| squared_distance(m.row(i), &means)).sum();
        assert!((one.inertia - ss).abs() < 1e-12);
        assert_eq!(kmeans(&m, 3, 5).unwrap().inertia, 0.0);
        assert!(matches!(kmeans(&m, 0, 0), Err(Error::BadK { k: 0, n: 3 })));
        assert!(matches!(kmeans(&m, 4, 0), Err(Error::BadK { .. })));
    }

    #[test]
    fn agglomerative_edge_cases() {
        let m = Matrix::from_rows(&[vec![0.0], vec![5.0], vec![5.0], vec![9.0]]).unwrap();
        assert_eq!(agglomerative(&m, 4).unwrap(), vec![0, 1, 2, 3]);
        // duplicates merge first
        assert_eq!(agglomerative(&m, 3).unwrap(), vec![0, 1, 1, 2]);
        assert!(matches!(agglomerative(&m, 5), Err(Error::BadK { .. })));
        // equidistant pairs: (0,1) wins over (1,2)
        let tie = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        assert_eq!(agglomerative(&tie, 2).unwrap(), vec![0, 0, 1]);
    }

    #[test]
    fn ari_values() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 1.0);
        // contingency [[1,1],[1,1]]: index 0, expected 2*2/6, max 2
        let r = adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap();
        assert!((r - (0.0 - 2.0 / 3.0) / (2.0 - 2.0 / 3.0)).abs() < 1e-12);
    }

    /// Naive O(n^3) average linkage used as an oracle.
    fn naive_average(m: &Matrix<f64>, k: usize) -> Vec<usize> {
        let n = m.rows();
        let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        while clusters.len() > k {
            let mut best = (f64::INFINITY, 0, 0);
            for i in 0..clusters.len() {
                for j in i + 1..clusters.len() {
                    let mut s = 0.0;
                    for &p in &clusters[i] {
                        for &q in &clusters[j] {
                            s += distance(m.row(p), m.row(q));
                        }
                    }
                    let d = s / (clusters[i].len() * clusters[j].len()) as f64;
                    if d < best.0 - 1e-12 {
                        best = (d, i, j);
                    }
                }
            }
            let merged = clusters.remove(best.2);
            clusters[best.1].extend(merged);
        }
        let mut labels = vec![0; n];
        let mut order: Vec<&Vec<usize>> = clusters.iter().collect();
        order.sort_by_key(|c| *c.iter().min().unwrap());
        for (l, c) in order.iter().enumerate() {
            for &p in c.iter() {
                labels[p] = l;
            }
        }
        labels
    }

    proptest::proptest! {
        #[test]
        fn inertia_never_increases(points in proptest::collection::vec((-50i32..50, -50i32..50), 3..40), seed in 0u64..1000) {
            let rows: Vec<Vec<f64>> = points.iter().map(|(x, y)| vec![*x as f64, *y as f64]).collect();
            let m = Matrix::from_rows(&rows).unwrap();
            let r = kmeans(&m, 3.min(rows.len()), seed).unwrap();
            for w in r.inertia_trace.windows(2) {
                proptest::prop_assert!(w[1] <= w[0] + 1e-9);
            }
            if r.converged {
                let (again, _) = assign(&m, &r.centroids);
                proptest::prop_assert_eq!(again, r.assignments.clone());
            }
        }

        #[test]
        fn agglomerative_matches_naive(points in proptest::collection::btree_set(-1000i32..1000, 2..25), k in 1usize..5) {
            let rows: Vec<Vec<f64>> = points.iter().map(|x| vec![*x as f64 * 0.37 + (*x as f64).sin()]).collect();
            let m = Matrix::from_rows(&rows).unwrap();
            let k = k.min(rows.len());
            let fast = agglomerative(&m, k).unwrap();
            let slow = naive_average(&m, k);
            proptest::prop_assert_eq!(adjusted_rand_index(&fast, &slow).unwrap(), 1.0);
        }
    }
}
