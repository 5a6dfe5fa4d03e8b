//! Average-kernel maximum mean discrepancy on flattened clips.
//!
//! The V-statistic (biased) estimator is used so that identical multisets
//! score exactly zero; it is the squared RKHS norm of the mean-embedding
//! difference, hence never negative. Bandwidths are multiples of the median
//! pairwise distance pooled over both sets.

use crate::metrics::GestureSet;
use crate::{Error, Result};

/// Multipliers applied to the median pairwise distance.
pub const MMD_BANDWIDTH_SCALES: [f64; 5] = [1.0, 2.0, 4.0, 8.0, 16.0];

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Median of the pairwise (i < j) distances over the pooled set; 1.0 when
/// every point coincides so the kernel stays defined.
fn median_pairwise_distance(points: &[Vec<f64>]) -> f64 {
    let mut d = Vec::new();
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            d.push(sq_dist(&points[i], &points[j]).sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = d.len() / 2;
    let median = if d.len() % 2 == 0 {
        0.5 * (d[mid - 1] + d[mid])
    } else {
        d[mid]
    };
    if median > 0.0 {
        median
    } else {
        1.0
    }
}

/// Squared-MMD V-statistic for one RBF bandwidth:
/// `mean_ij k(a_i,a_j) + mean_ij k(b_i,b_j) - 2 mean_ij k(a_i,b_j)` with
/// `k(x,y) = exp(-||x-y||^2 / (2 sigma^2))`, diagonals included.
fn mmd_sq(a: &[Vec<f64>], b: &[Vec<f64>], sigma: f64) -> f64 {
    let k = |x: &[f64], y: &[f64]| (-sq_dist(x, y) / (2.0 * sigma * sigma)).exp();
    let mean_kernel = |xs: &[Vec<f64>], ys: &[Vec<f64>]| {
        let mut s = 0.0;
        for x in xs {
            for y in ys {
                s += k(x, y);
            }
        }
        s / (xs.len() * ys.len()) as f64
    };
    mean_kernel(a, a) + mean_kernel(b, b) - 2.0 * mean_kernel(a, b)
}

/// Squared MMD averaged over the bandwidth ladder.
pub fn mmd_avg(a: &GestureSet, b: &GestureSet) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Metric(format!(
            "mmd needs at least 2 clips per set, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let fa = a.flattened();
    let fb = b.flattened();
    let pooled: Vec<Vec<f64>> = fa.iter().chain(fb.iter()).cloned().collect();
    let med = median_pairwise_distance(&pooled);
    let total: f64 = MMD_BANDWIDTH_SCALES
        .iter()
        .map(|s| mmd_sq(&fa, &fb, s * med))
        .sum();
    Ok(total / MMD_BANDWIDTH_SCALES.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::random_set;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn identical_multisets_score_zero() {
        let a = random_set(4, 21);
        let v = mmd_avg(&a, &a).unwrap();
        assert!(v.abs() < 1e-6, "{v}");
        assert!(v >= -1e-6);
    }

    #[test]
    fn matches_nested_loop_oracle_at_n5() {
        let a = random_set(5, 22);
        let b = random_set(5, 23);
        let got = mmd_avg(&a, &b).unwrap();

        // Fully spelled-out reference: pooled median, then the three double
        // sums per bandwidth.
        let fa = a.flattened();
        let fb = b.flattened();
        let pooled: Vec<Vec<f64>> = fa.iter().chain(fb.iter()).cloned().collect();
        let mut dists = Vec::new();
        for i in 0..pooled.len() {
            for j in (i + 1)..pooled.len() {
                let mut s = 0.0;
                for (x, y) in pooled[i].iter().zip(&pooled[j]) {
                    s += (x - y) * (x - y);
                }
                dists.push(s.sqrt());
            }
        }
        dists.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let m = dists.len() / 2;
        let med = if dists.len() % 2 == 0 {
            0.5 * (dists[m - 1] + dists[m])
        } else {
            dists[m]
        };

        let mut total = 0.0;
        for scale in MMD_BANDWIDTH_SCALES {
            let sigma = scale * med;
            let kf = |x: &Vec<f64>, y: &Vec<f64>| {
                let mut s = 0.0;
                for (p, q) in x.iter().zip(y) {
                    s += (p - q) * (p - q);
                }
                (-s / (2.0 * sigma * sigma)).exp()
            };
            let mut kaa = 0.0;
            let mut kbb = 0.0;
            let mut kab = 0.0;
            for i in 0..5 {
                for j in 0..5 {
                    kaa += kf(&fa[i], &fa[j]);
                    kbb += kf(&fb[i], &fb[j]);
                    kab += kf(&fa[i], &fb[j]);
                }
            }
            total += kaa / 25.0 + kbb / 25.0 - 2.0 * kab / 25.0;
        }
        let want = total / 5.0;
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }

    #[test]
    fn separates_shifted_gaussians() {
        // Low-dimensional surrogate via the same internals: draw N(0, I)
        // and N(2, I) at n=100, d=10.
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let mut draw = |shift: f64| -> Vec<Vec<f64>> {
            (0..100)
                .map(|_| {
                    (0..10)
                        .map(|_| rng.sample::<f64, _>(StandardNormal) + shift)
                        .collect()
                })
                .collect()
        };
        let a = draw(0.0);
        let a2 = draw(0.0);
        let b = draw(2.0);

        let pooled: Vec<Vec<f64>> = a.iter().chain(b.iter()).cloned().collect();
        let med = median_pairwise_distance(&pooled);
        let far: f64 = MMD_BANDWIDTH_SCALES
            .iter()
            .map(|s| mmd_sq(&a, &b, s * med))
            .sum::<f64>()
            / 5.0;
        let near: f64 = MMD_BANDWIDTH_SCALES
            .iter()
            .map(|s| mmd_sq(&a, &a2, s * med))
            .sum::<f64>()
            / 5.0;
        assert!(far > near, "far {far} should exceed near {near}");
        assert!(far > 10.0 * near);
    }

    #[test]
    fn symmetric_and_order_invariant() {
        let a = random_set(4, 25);
        let b = random_set(3, 26);
        let ab = mmd_avg(&a, &b).unwrap();
        let ba = mmd_avg(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-9);

        let mut shuffled = a.clips().to_vec();
        shuffled.reverse();
        let a_rev = GestureSet::new(shuffled).unwrap();
        assert!((mmd_avg(&a_rev, &b).unwrap() - ab).abs() < 1e-12);
    }

    #[test]
    fn rejects_tiny_sets() {
        let a = random_set(1, 27);
        let b = random_set(4, 28);
        assert!(mmd_avg(&a, &b).is_err());
    }
}
