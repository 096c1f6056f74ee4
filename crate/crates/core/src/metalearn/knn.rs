use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Rows evaluated by permutation importance; larger tables are strided down to this.
const MAX_IMPORTANCE_ROWS: usize = 256;

/// Mean target of the `k` nearest rows (Euclidean); equal distances keep the lower index.
pub(super) fn predict(k: usize, rows: &[Vec<f64>], targets: &[f64], z: &[f64]) -> f64 {
    let mut dist: Vec<(f64, usize)> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| (sq_dist(r, z), i))
        .collect();
    let k = k.min(dist.len());
    mean_nearest(k, &mut dist, targets)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Mean target of the `k` smallest entries of `dist`.
fn mean_nearest(k: usize, dist: &mut [(f64, usize)], targets: &[f64]) -> f64 {
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < dist.len() {
        dist.select_nth_unstable_by(k - 1, cmp);
    }
    dist[..k].iter().map(|&(_, i)| targets[i]).sum::<f64>() / k as f64
}

/// Mean MSE increase when one feature column of the evaluation rows is shuffled.
///
/// Distances for a permuted row differ from the unpermuted ones in a single
/// coordinate, so they are updated from a cached distance matrix.
pub(super) fn permutation_importance(
    k: usize,
    rows: &[Vec<f64>],
    targets: &[f64],
    shuffles: usize,
    seed: u64,
) -> Vec<f64> {
    let width = rows.first().map_or(0, Vec::len);
    let stride = rows.len().div_ceil(MAX_IMPORTANCE_ROWS).max(1);
    let picked: Vec<usize> = (0..rows.len()).step_by(stride).collect();
    let base_dist: Vec<Vec<f64>> = picked
        .iter()
        .map(|&e| rows.iter().map(|r| sq_dist(&rows[e], r)).collect())
        .collect();
    let mut scratch: Vec<(f64, usize)> = Vec::with_capacity(rows.len());
    let mut sq_error = |e: usize, dist: &mut dyn FnMut(usize) -> f64| {
        scratch.clear();
        scratch.extend((0..rows.len()).map(|i| (dist(i), i)));
        (mean_nearest(k, &mut scratch, targets) - targets[picked[e]]).powi(2)
    };
    let base: f64 = (0..picked.len())
        .map(|e| sq_error(e, &mut |i| base_dist[e][i]))
        .sum::<f64>()
        / picked.len() as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shuffles = shuffles.max(1);
    let mut out = vec![0.0; width];
    for (feature, slot) in out.iter_mut().enumerate() {
        let mut total = 0.0;
        for _ in 0..shuffles {
            let mut column: Vec<f64> = picked.iter().map(|&e| rows[e][feature]).collect();
            column.shuffle(&mut rng);
            let mut sum = 0.0;
            for (e, &v) in column.iter().enumerate() {
                let own = rows[picked[e]][feature];
                sum += sq_error(e, &mut |i| {
                    let x = rows[i][feature];
                    base_dist[e][i] - (own - x).powi(2) + (v - x).powi(2)
                });
            }
            total += sum / picked.len() as f64 - base;
        }
        *slot = (total / shuffles as f64).max(0.0);
    }
    out
}
