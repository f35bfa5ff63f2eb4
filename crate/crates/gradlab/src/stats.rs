//! Monte-Carlo statistics plumbing: autocorrelation-aware error bars,
//! effective sample sizes, jackknife variance errors, two-sample tests,
//! density estimators and deterministic RNG substreams.

use crate::par;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 step; the workhorse for deriving deterministic substreams.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Deterministic substream: hash the master seed with a tag path.
/// Identical tags give identical streams on every platform and thread count.
pub fn substream(master: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut h = mix64(master ^ 0x6a09e667f3bcc908);
    for &t in tags {
        h = mix64(h ^ t);
    }
    ChaCha8Rng::seed_from_u64(h)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

#[derive(Debug, Clone, Copy)]
pub struct MeanEstimate {
    pub mean: f64,
    pub se: f64,
    /// Integrated autocorrelation time (≥ 1 by flooring).
    pub tau: f64,
    pub ess: f64,
}

/// Geyer initial-positive-sequence estimate of the integrated
/// autocorrelation time. Quadratic in the retained lag count, so only used
/// for short series; long series go through batch means.
fn tau_geyer(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 8 {
        return 1.0;
    }
    let m = mean(xs);
    let c = |lag: usize| -> f64 {
        let mut s = 0.0;
        for i in 0..n - lag {
            s += (xs[i] - m) * (xs[i + lag] - m);
        }
        s / n as f64
    };
    let c0 = c(0);
    if c0 <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut prev_gamma = f64::INFINITY;
    let max_pair = (n - 2) / 2;
    for k in 0..max_pair {
        let gamma = c(2 * k) + c(2 * k + 1);
        if gamma <= 0.0 {
            break;
        }
        // Initial monotone sequence: enforce non-increasing pair sums.
        let gamma = gamma.min(prev_gamma);
        prev_gamma = gamma;
        sum += gamma;
        if 2 * k + 1 > n / 3 {
            break;
        }
    }
    ((2.0 * sum / c0) - 1.0).max(1.0)
}

/// Batch-means integrated autocorrelation time.
fn tau_batch_means(xs: &[f64], n_batches: usize) -> f64 {
    let n = xs.len();
    let len = n / n_batches;
    if len < 2 {
        return 1.0;
    }
    let means: Vec<f64> = (0..n_batches)
        .map(|b| mean(&xs[b * len..(b + 1) * len]))
        .collect();
    let v = variance(xs);
    if v <= 0.0 {
        return 1.0;
    }
    (len as f64 * variance(&means) / v).clamp(1.0, len as f64)
}

pub fn tau_int(xs: &[f64]) -> f64 {
    if xs.len() <= 20_000 {
        tau_geyer(xs)
    } else {
        tau_batch_means(xs, 50)
    }
}

/// Mean with an autocorrelation-corrected standard error.
pub fn mean_estimate(xs: &[f64]) -> MeanEstimate {
    let n = xs.len();
    if n == 0 {
        return MeanEstimate {
            mean: f64::NAN,
            se: f64::NAN,
            tau: 1.0,
            ess: 0.0,
        };
    }
    let tau = tau_int(xs);
    let ess = (n as f64 / tau).min(n as f64);
    let v = variance(xs);
    MeanEstimate {
        mean: mean(xs),
        se: (v * tau / n as f64).sqrt(),
        tau,
        ess,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct VarianceEstimate {
    pub estimate: f64,
    pub se: f64,
    pub tau: f64,
    pub ess: f64,
}

/// Unbiased sample variance with a delete-one-block jackknife standard
/// error; the block length tracks the autocorrelation time so correlated
/// chains get honest error bars.
pub fn variance_estimate(xs: &[f64]) -> VarianceEstimate {
    let n = xs.len();
    if n < 4 {
        return VarianceEstimate {
            estimate: variance(xs),
            se: f64::INFINITY,
            tau: 1.0,
            ess: n as f64,
        };
    }
    let tau = tau_int(xs);
    let ess = (n as f64 / tau).min(n as f64);
    let block = (2.0 * tau).ceil() as usize;
    let block = block.clamp(1, n / 10);
    let nb = n / block;
    let used = nb * block;
    let s1: f64 = xs[..used].iter().sum();
    let s2: f64 = xs[..used].iter().map(|x| x * x).sum();
    let mut jk = Vec::with_capacity(nb);
    for b in 0..nb {
        let seg = &xs[b * block..(b + 1) * block];
        let b1: f64 = seg.iter().sum();
        let b2: f64 = seg.iter().map(|x| x * x).sum();
        let m = used - block;
        let mu = (s1 - b1) / m as f64;
        let var = ((s2 - b2) - m as f64 * mu * mu) / (m - 1) as f64;
        jk.push(var);
    }
    let jm = mean(&jk);
    let se = ((nb - 1) as f64 / nb as f64 * jk.iter().map(|v| (v - jm) * (v - jm)).sum::<f64>())
        .sqrt();
    VarianceEstimate {
        estimate: variance(&xs[..used]),
        se,
        tau,
        ess,
    }
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|x, y| x.partial_cmp(y).unwrap());
    sb.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < sa.len() && j < sb.len() {
        let x = sa[i].min(sb[j]);
        while i < sa.len() && sa[i] <= x {
            i += 1;
        }
        while j < sb.len() && sb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Permutation p-value for the two-sample KS statistic.
pub fn ks_permutation_pvalue(a: &[f64], b: &[f64], n_perm: usize, seed: u64) -> f64 {
    let observed = ks_statistic(a, b);
    let mut pooled: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    let na = a.len();
    let perms = par::par_map_range(n_perm, |p| {
        let mut rng = substream(seed, &[0x4b53, p as u64]);
        let mut pool = pooled.clone();
        // Fisher-Yates
        for i in (1..pool.len()).rev() {
            let j = rng.gen_range(0..=i);
            pool.swap(i, j);
        }
        ks_statistic(&pool[..na], &pool[na..]) >= observed
    });
    let _ = &mut pooled;
    let hits = perms.iter().filter(|&&h| h).count();
    (1 + hits) as f64 / (1 + n_perm) as f64
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let p = successes as f64 / n as f64;
    let nf = n as f64;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Type-7 quantile of a sorted slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n as f64 - 1.0) * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// A density estimate on a uniform grid.
#[derive(Debug, Clone)]
pub struct Density {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Bin width for histograms, kernel bandwidth for smoothed estimates.
    pub width: f64,
    pub n: usize,
}

impl Density {
    /// Trapezoid integral over the grid.
    pub fn integral(&self) -> f64 {
        if self.grid.len() < 2 {
            return 0.0;
        }
        let dx = self.grid[1] - self.grid[0];
        trapezoid_uniform(&self.values, dx)
    }
}

/// Freedman-Diaconis histogram density (bin width 2·IQR·n^(-1/3)).
pub fn histogram_fd(xs: &[f64]) -> Density {
    let n = xs.len();
    assert!(n >= 2, "histogram needs at least two samples");
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 {
        iqr
    } else {
        (sorted[n - 1] - sorted[0]).max(1e-12)
    };
    let width = 2.0 * spread / (n as f64).cbrt();
    let lo = sorted[0];
    let hi = sorted[n - 1];
    let bins = (((hi - lo) / width).ceil() as usize).max(1);
    let mut counts = vec![0usize; bins];
    for &x in xs {
        let b = (((x - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let grid: Vec<f64> = (0..bins).map(|b| lo + (b as f64 + 0.5) * width).collect();
    let values: Vec<f64> = counts
        .iter()
        .map(|&c| c as f64 / (n as f64 * width))
        .collect();
    Density {
        grid,
        values,
        width,
        n,
    }
}

/// Gaussian-kernel density on a fixed grid; default bandwidth
/// 1.06·σ̂·n^(-1/5). The grid extends 6 bandwidths past the data so the
/// estimate integrates to one up to negligible truncation.
pub fn kde_gaussian(xs: &[f64], bandwidth: Option<f64>, grid_points: usize) -> Density {
    let n = xs.len();
    assert!(n >= 2, "kde needs at least two samples");
    let sd = variance(xs).sqrt();
    let h = bandwidth.unwrap_or_else(|| 1.06 * sd.max(1e-12) * (n as f64).powf(-0.2));
    let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min) - 6.0 * h;
    let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 6.0 * h;
    let m = grid_points.max(16);
    let dx = (hi - lo) / (m - 1) as f64;
    let norm = 1.0 / (n as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let values = par::par_map_range(m, |i| {
        let g = lo + i as f64 * dx;
        let mut s = 0.0;
        for &x in xs {
            let u = (g - x) / h;
            s += (-0.5 * u * u).exp();
        }
        s * norm
    });
    let grid = (0..m).map(|i| lo + i as f64 * dx).collect();
    Density {
        grid,
        values,
        width: h,
        n,
    }
}

/// Sup over the estimator grid of |estimate - reference|.
pub fn sup_gap(density: &Density, reference: impl Fn(f64) -> f64) -> f64 {
    density
        .grid
        .iter()
        .zip(&density.values)
        .map(|(&x, &v)| (v - reference(x)).abs())
        .fold(0.0, f64::max)
}

/// Centered Gaussian density with the given variance.
pub fn normal_density(x: f64, var: f64) -> f64 {
    (-(x * x) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Resample a series in contiguous blocks (circular block bootstrap).
pub fn block_bootstrap_resample(xs: &[f64], block_len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = xs.len();
    let block = block_len.clamp(1, n);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let start = rng.gen_range(0..n);
        for k in 0..block {
            if out.len() == n {
                break;
            }
            out.push(xs[(start + k) % n]);
        }
    }
    out
}

/// Trapezoid rule on a uniform grid.
pub fn trapezoid_uniform(values: &[f64], dx: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let inner: f64 = values[1..values.len() - 1].iter().sum();
    dx * (0.5 * values[0] + inner + 0.5 * values[values.len() - 1])
}

#[derive(Debug, Clone, Copy)]
pub struct ComplexEstimate {
    pub re: f64,
    pub im: f64,
    pub se_re: f64,
    pub se_im: f64,
    pub ess: f64,
}

/// Monte-Carlo average of a complex observable with per-component
/// autocorrelation-corrected errors.
pub fn complex_mean_estimate(re: &[f64], im: &[f64]) -> ComplexEstimate {
    assert_eq!(re.len(), im.len());
    let er = mean_estimate(re);
    let ei = mean_estimate(im);
    ComplexEstimate {
        re: er.mean,
        im: ei.mean,
        se_re: er.se,
        se_im: ei.se,
        ess: er.ess.min(ei.ess),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn substreams_are_deterministic_and_distinct() {
        let mut a1 = substream(7, &[1, 2]);
        let mut a2 = substream(7, &[1, 2]);
        let mut b = substream(7, &[1, 3]);
        let x1: f64 = a1.gen();
        let x2: f64 = a2.gen();
        let y: f64 = b.gen();
        assert_eq!(x1, x2);
        assert_ne!(x1, y);
    }

    #[test]
    fn iid_tau_is_near_one() {
        let mut rng = substream(1, &[0]);
        let xs: Vec<f64> = (0..20000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let t = tau_int(&xs);
        assert!(t < 1.3, "tau={t}");
        let est = mean_estimate(&xs);
        assert!(est.mean.abs() < 4.0 * est.se);
    }

    #[test]
    fn ar1_tau_matches_theory() {
        // AR(1) with coefficient rho has tau = (1+rho)/(1-rho).
        let rho: f64 = 0.8;
        let mut rng = substream(2, &[0]);
        let mut x = 0.0;
        let xs: Vec<f64> = (0..60000)
            .map(|_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                x = rho * x + (1.0 - rho * rho).sqrt() * e;
                x
            })
            .collect();
        let t = tau_int(&xs);
        let expect = (1.0 + rho) / (1.0 - rho);
        assert!(
            (t - expect).abs() < 0.35 * expect,
            "tau={t} expected≈{expect}"
        );
    }

    #[test]
    fn variance_estimate_covers_truth() {
        let mut rng = substream(3, &[0]);
        let xs: Vec<f64> = (0..40000)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                2.0 * z
            })
            .collect();
        let est = variance_estimate(&xs);
        assert!((est.estimate - 4.0).abs() < 4.0 * est.se, "{est:?}");
        assert!(est.ess <= xs.len() as f64 + 1e-9);
    }

    #[test]
    fn ks_identical_samples_zero() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(ks_statistic(&a, &a), 0.0);
        let b = [10.0, 11.0, 12.0, 13.0];
        assert_eq!(ks_statistic(&a, &b), 1.0);
    }

    #[test]
    fn ks_pvalue_uniform_under_null() {
        let mut rng = substream(4, &[0]);
        let a: Vec<f64> = (0..300).map(|_| StandardNormal.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..300).map(|_| StandardNormal.sample(&mut rng)).collect();
        let p = ks_permutation_pvalue(&a, &b, 199, 99);
        assert!(p > 0.005, "null p-value suspiciously small: {p}");
    }

    #[test]
    fn wilson_basic() {
        let (lo, hi) = wilson_interval(0, 100, 1.96);
        assert_eq!(lo, 0.0);
        assert!(hi < 0.05 && hi > 0.0);
        let (lo, hi) = wilson_interval(50, 100, 1.96);
        assert!(lo < 0.5 && hi > 0.5);
    }

    #[test]
    fn histogram_integrates_to_one() {
        let mut rng = substream(5, &[0]);
        let xs: Vec<f64> = (0..5000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let d = histogram_fd(&xs);
        let total: f64 = d.values.iter().map(|v| v * d.width).sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!(d.values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn kde_integrates_to_one() {
        let mut rng = substream(6, &[0]);
        let xs: Vec<f64> = (0..2000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let d = kde_gaussian(&xs, None, 512);
        assert!((d.integral() - 1.0).abs() < 1e-6, "integral={}", d.integral());
    }

    #[test]
    fn kde_close_to_normal() {
        let mut rng = substream(7, &[0]);
        let xs: Vec<f64> = (0..20000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let d = kde_gaussian(&xs, None, 512);
        let gap = sup_gap(&d, |x| normal_density(x, 1.0));
        assert!(gap < 0.03, "gap={gap}");
    }

    #[test]
    fn trapezoid_linear_exact() {
        let values: Vec<f64> = (0..11).map(|i| i as f64).collect();
        assert!((trapezoid_uniform(&values, 0.1) - 5.0).abs() < 1e-12);
    }
}
