//! Small built-in base learners. Labels are 1-based, cluster ids 0-based.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Mean feature vector of every class present in `y`, `None` otherwise.
fn class_means(x: ArrayView2<f64>, y: &[usize], l: usize) -> Vec<Option<Vec<f64>>> {
    let d = x.ncols();
    let mut sums = vec![vec![0.0; d]; l];
    let mut counts = vec![0usize; l];
    for (row, &c) in x.rows().into_iter().zip(y) {
        counts[c - 1] += 1;
        for (s, v) in sums[c - 1].iter_mut().zip(row) {
            *s += v;
        }
    }
    sums.into_iter()
        .zip(counts)
        .map(|(s, n)| (n > 0).then(|| s.into_iter().map(|v| v / n as f64).collect()))
        .collect()
}

pub fn nearest_centroid(
    train_x: ArrayView2<f64>,
    train_y: &[usize],
    l: usize,
    test_x: ArrayView2<f64>,
) -> Vec<usize> {
    let means = class_means(train_x, train_y, l);
    test_x
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = (f64::INFINITY, 1);
            for (c, m) in means.iter().enumerate() {
                if let Some(m) = m {
                    let d = sq_dist(row, ArrayView1::from(m.as_slice()));
                    if d < best.0 {
                        best = (d, c + 1);
                    }
                }
            }
            best.1
        })
        .collect()
}

/// Majority vote of the `k` nearest training points; vote ties go to the
/// tied class with the closest neighbour.
pub fn knn(
    train_x: ArrayView2<f64>,
    train_y: &[usize],
    l: usize,
    test_x: ArrayView2<f64>,
    k: usize,
) -> Vec<usize> {
    let k = k.clamp(1, train_y.len().max(1));
    test_x
        .rows()
        .into_iter()
        .map(|row| {
            let mut d: Vec<(f64, usize)> = train_x
                .rows()
                .into_iter()
                .enumerate()
                .map(|(j, t)| (sq_dist(row, t), j))
                .collect();
            d.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut near = d[..k].to_vec();
            near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut votes = vec![0usize; l];
            for &(_, j) in &near {
                votes[train_y[j] - 1] += 1;
            }
            let top = *votes.iter().max().unwrap();
            near.iter()
                .map(|&(_, j)| train_y[j])
                .find(|&c| votes[c - 1] == top)
                .unwrap()
        })
        .collect()
}

/// Single-feature classifier: classes ordered by their mean on the feature,
/// cut at the midpoints between consecutive means.
#[derive(Debug, Clone, PartialEq)]
pub struct Stump {
    pub feature: usize,
    pub thresholds: Vec<f64>,
    pub classes: Vec<usize>,
}

impl Stump {
    pub fn fit_feature(x: ArrayView2<f64>, y: &[usize], l: usize, feature: usize) -> Stump {
        let col = x.column(feature).to_owned().insert_axis(Axis(1));
        let mut means: Vec<(f64, usize)> = class_means(col.view(), y, l)
            .into_iter()
            .enumerate()
            .filter_map(|(c, m)| m.map(|m| (m[0], c + 1)))
            .collect();
        means.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let thresholds = means.windows(2).map(|w| (w[0].0 + w[1].0) / 2.0).collect();
        Stump {
            feature,
            thresholds,
            classes: means.into_iter().map(|(_, c)| c).collect(),
        }
    }

    /// Picks the feature with the best accuracy on the validation split.
    pub fn fit(
        train_x: ArrayView2<f64>,
        train_y: &[usize],
        l: usize,
        val_x: ArrayView2<f64>,
        val_y: &[usize],
    ) -> Stump {
        let mut best: Option<(usize, Stump)> = None;
        for f in 0..train_x.ncols() {
            let s = Stump::fit_feature(train_x, train_y, l, f);
            let hits = s
                .predict(val_x)
                .iter()
                .zip(val_y)
                .filter(|(a, b)| a == b)
                .count();
            if best.as_ref().map_or(true, |(h, _)| hits > *h) {
                best = Some((hits, s));
            }
        }
        best.expect("at least one feature").1
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Vec<usize> {
        x.column(self.feature)
            .iter()
            .map(|&v| self.classes[self.thresholds.iter().filter(|&&t| v >= t).count()])
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct KMeans {
    pub assignment: Vec<usize>,
    pub centroids: Array2<f64>,
    pub inertia: f64,
}

fn plus_plus_init(x: ArrayView2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = x.nrows();
    let mut chosen = vec![rng.gen_range(0..n)];
    let mut d2: Vec<f64> = x.rows().into_iter().map(|r| sq_dist(r, x.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        if !(total > 0.0) {
            // Every point coincides with a chosen center.
            break;
        }
        let mut u = rng.gen::<f64>() * total;
        let mut pick = n - 1;
        for (i, &w) in d2.iter().enumerate() {
            if u < w {
                pick = i;
                break;
            }
            u -= w;
        }
        chosen.push(pick);
        for (i, r) in x.rows().into_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(r, x.row(pick)));
        }
    }
    chosen
}

fn relabel(assign: &mut [usize]) -> usize {
    let mut map = std::collections::HashMap::new();
    for a in assign.iter_mut() {
        let next = map.len();
        *a = *map.entry(*a).or_insert(next);
    }
    map.len()
}

/// Lloyd's algorithm from a k-means++ start. Clusters that end up empty
/// are removed, so the result may have fewer than `k` clusters.
pub fn kmeans(x: ArrayView2<f64>, k: usize, seed: u64, restarts: usize) -> KMeans {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeans> = None;
    for _ in 0..restarts.max(1) {
        let init = plus_plus_init(x, k.max(1), &mut rng);
        let mut centroids = x.select(Axis(0), &init);
        let mut assign = vec![usize::MAX; x.nrows()];
        for _ in 0..200 {
            let mut changed = false;
            for (i, r) in x.rows().into_iter().enumerate() {
                let mut b = (f64::INFINITY, 0);
                for (c, cr) in centroids.rows().into_iter().enumerate() {
                    let d = sq_dist(r, cr);
                    if d < b.0 {
                        b = (d, c);
                    }
                }
                if assign[i] != b.1 {
                    assign[i] = b.1;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
            let mut sums = Array2::<f64>::zeros(centroids.dim());
            let mut counts = vec![0usize; centroids.nrows()];
            for (i, r) in x.rows().into_iter().enumerate() {
                sums.row_mut(assign[i]).scaled_add(1.0, &r);
                counts[assign[i]] += 1;
            }
            for (c, &m) in counts.iter().enumerate() {
                if m > 0 {
                    centroids.row_mut(c).assign(&(&sums.row(c) / m as f64));
                }
            }
        }
        let inertia: f64 = x
            .rows()
            .into_iter()
            .zip(&assign)
            .map(|(r, &a)| sq_dist(r, centroids.row(a)))
            .sum();
        if best.as_ref().map_or(true, |b| inertia < b.inertia) {
            best = Some(KMeans {
                assignment: assign,
                centroids,
                inertia,
            });
        }
    }
    let mut km = best.unwrap();
    let used: Vec<usize> = {
        let mut u: Vec<usize> = km.assignment.clone();
        u.sort_unstable();
        u.dedup();
        u
    };
    if used.len() < km.centroids.nrows() {
        km.centroids = km.centroids.select(Axis(0), &used);
        for a in km.assignment.iter_mut() {
            *a = used.binary_search(a).unwrap();
        }
    }
    km
}

/// Mean over points of `(b - a) / max(a, b)`, with `a` the distance to the
/// own centroid and `b` to the nearest other one. Zero for one cluster.
pub fn simplified_silhouette(x: ArrayView2<f64>, km: &KMeans) -> f64 {
    if km.centroids.nrows() < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for (r, &own) in x.rows().into_iter().zip(&km.assignment) {
        let a = sq_dist(r, km.centroids.row(own)).sqrt();
        let b = km
            .centroids
            .rows()
            .into_iter()
            .enumerate()
            .filter(|&(c, _)| c != own)
            .map(|(_, c)| sq_dist(r, c).sqrt())
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    total / x.nrows() as f64
}

/// k-means with `k` chosen from `{l-1, l, l+1}` by simplified silhouette.
pub fn kmeans_select(x: ArrayView2<f64>, l: usize, seed: u64) -> KMeans {
    let mut best: Option<(f64, KMeans)> = None;
    for k in [l.saturating_sub(1).max(1), l, l + 1] {
        let km = kmeans(x, k, seed.wrapping_add(k as u64), 3);
        let s = simplified_silhouette(x, &km);
        if best.as_ref().map_or(true, |(b, _)| s > *b) {
            best = Some((s, km));
        }
    }
    best.unwrap().1
}

/// Single-linkage clustering: the minimum spanning tree with its
/// `clusters - 1` longest edges removed.
pub fn single_linkage(x: ArrayView2<f64>, clusters: usize) -> Vec<usize> {
    let n = x.nrows();
    if n == 0 {
        return Vec::new();
    }
    // Prim on the complete graph.
    let mut in_tree = vec![false; n];
    let mut best = vec![(f64::INFINITY, 0usize); n];
    let mut edges = Vec::with_capacity(n - 1);
    let mut cur = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let mut next = (f64::INFINITY, usize::MAX);
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            let d = sq_dist(x.row(cur), x.row(j));
            if d < best[j].0 {
                best[j] = (d, cur);
            }
            if best[j].0 < next.0 || next.1 == usize::MAX {
                next = (best[j].0, j);
            }
        }
        let j = next.1;
        in_tree[j] = true;
        edges.push((best[j].0, best[j].1, j));
        cur = j;
    }
    edges.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let cut = clusters.saturating_sub(1).min(edges.len());

    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for &(_, a, b) in &edges[cut..] {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut assign: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    relabel(&mut assign);
    assign
}
