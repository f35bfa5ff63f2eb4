//! Local-CLT diagnostics: characteristic functions of φ(0) under both
//! scalings, empirical densities and their sup-norm gap to the Gaussian
//! reference, the three-regime integral split behind the density bound, the
//! scale-factorization check for the increment processes, the large-argument
//! characteristic-function decay fit, the exponential Brascamp-Lieb probe and
//! the good-event tail frequency.

use crate::elliptic::green_quadratic_form;
use crate::lattice::{Domain, Vertex};
use crate::multiscale::{rho_weights, window_weight_vector, CirclePack, ScaleLadder};
use crate::par;
use crate::potential::Potential;
use crate::sampler::{run_exact_gaussian, run_mcmc, BoundaryCondition, McmcParams};
use crate::stats::{self, ComplexEstimate, Density};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Characteristic functions
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scaling {
    /// ⟨e^{isφ(0)}⟩.
    Raw,
    /// Ψ_N(t) = ⟨e^{itφ(0)/√log N}⟩.
    SqrtLogN,
}

/// Monte-Carlo estimate of the characteristic function on a grid.
#[derive(Debug, Clone)]
pub struct CharFnEstimate {
    pub t_grid: Vec<f64>,
    pub values: Vec<ComplexEstimate>,
    pub scaling: Scaling,
    pub log_n: f64,
    pub n_samples: usize,
}

impl CharFnEstimate {
    pub fn modulus(&self, i: usize) -> f64 {
        let v = &self.values[i];
        (v.re * v.re + v.im * v.im).sqrt()
    }

    pub fn modulus_se(&self, i: usize) -> f64 {
        let v = &self.values[i];
        (v.se_re * v.se_re + v.se_im * v.se_im).sqrt()
    }
}

/// Estimate the characteristic function of a φ(0) sample series.
pub fn char_fn(series: &[f64], log_n: f64, t_grid: &[f64], scaling: Scaling) -> CharFnEstimate {
    let scale = match scaling {
        Scaling::Raw => 1.0,
        Scaling::SqrtLogN => 1.0 / log_n.sqrt(),
    };
    let values = par::par_map_slice(t_grid, |&t| {
        if t == 0.0 {
            // exp(0) ≡ 1 exactly.
            return ComplexEstimate {
                re: 1.0,
                im: 0.0,
                se_re: 0.0,
                se_im: 0.0,
                ess: series.len() as f64,
            };
        }
        let w = t * scale;
        let re: Vec<f64> = series.iter().map(|&x| (w * x).cos()).collect();
        let im: Vec<f64> = series.iter().map(|&x| (w * x).sin()).collect();
        stats::complex_mean_estimate(&re, &im)
    });
    CharFnEstimate {
        t_grid: t_grid.to_vec(),
        values,
        scaling,
        log_n,
        n_samples: series.len(),
    }
}

// ---------------------------------------------------------------------------
// Empirical densities and the sup-norm gap
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityEstimator {
    /// Freedman-Diaconis histogram.
    Histogram,
    /// Gaussian kernel, bandwidth 1.06·σ̂·n^{-1/5}.
    Smoothed,
}

pub fn empirical_density(values: &[f64], estimator: DensityEstimator) -> Density {
    match estimator {
        DensityEstimator::Histogram => stats::histogram_fd(values),
        DensityEstimator::Smoothed => stats::kde_gaussian(values, None, 481),
    }
}

/// Sup-norm gap between the empirical density of φ(0)/√log N and the
/// centered Gaussian of variance 𝐠̂, with a block-bootstrap error band.
#[derive(Debug, Clone)]
pub struct CltGapReport {
    pub gap: f64,
    pub g_ref: f64,
    pub estimator: DensityEstimator,
    pub bandwidth: f64,
    pub boot_mean: f64,
    pub boot_sd: f64,
    pub n: usize,
}

pub fn clt_gap(
    scaled_values: &[f64],
    g_ref: f64,
    estimator: DensityEstimator,
    n_boot: usize,
    seed: u64,
) -> CltGapReport {
    let dens = empirical_density(scaled_values, estimator);
    let gap = stats::sup_gap(&dens, |x| stats::normal_density(x, g_ref));
    let tau = stats::tau_int(scaled_values);
    let block = (2.0 * tau).ceil() as usize;
    let boots = par::par_map_range(n_boot, |b| {
        let mut rng = stats::substream(seed, &[0xb007, b as u64]);
        let resample = stats::block_bootstrap_resample(scaled_values, block, &mut rng);
        let d = empirical_density(&resample, estimator);
        stats::sup_gap(&d, |x| stats::normal_density(x, g_ref))
    });
    CltGapReport {
        gap,
        g_ref,
        estimator,
        bandwidth: dens.width,
        boot_mean: stats::mean(&boots),
        boot_sd: stats::variance(&boots).sqrt(),
        n: scaled_values.len(),
    }
}

// ---------------------------------------------------------------------------
// Regime split of the inversion integral
// ---------------------------------------------------------------------------

/// Numerical integrals of |Ψ_N(t) − e^{-𝐠t²/2}| over |t| ≤ a and
/// a ≤ |t| ≤ ε√log N, and of |Ψ_N| beyond, each with Monte-Carlo and
/// quadrature error estimates.
#[derive(Debug, Clone)]
pub struct RegimeSplit {
    pub i_small: f64,
    pub i_mid: f64,
    pub i_large: f64,
    pub mc_error: f64,
    pub quad_error: f64,
    pub a: f64,
    pub cutoff_mid: f64,
}

pub fn regime_split(charfn: &CharFnEstimate, g_ref: f64, a: f64, eps: f64) -> Result<RegimeSplit> {
    if charfn.scaling != Scaling::SqrtLogN {
        return Err(Error::InvalidParameter(
            "regime split expects the √log N scaling".into(),
        ));
    }
    let cutoff = eps * charfn.log_n.sqrt();
    let t = &charfn.t_grid;
    if t.len() < 3 {
        return Err(Error::InvalidParameter("t-grid too short".into()));
    }
    let h = t[1] - t[0];
    let gauss = |tt: f64| (-0.5 * g_ref * tt * tt).exp();
    let mut i_small = 0.0;
    let mut i_mid = 0.0;
    let mut i_large = 0.0;
    let mut mc_error = 0.0;
    for (i, &tt) in t.iter().enumerate() {
        let v = &charfn.values[i];
        let diff = ((v.re - gauss(tt)).powi(2) + v.im * v.im).sqrt();
        let modulus = (v.re * v.re + v.im * v.im).sqrt();
        let se = charfn.modulus_se(i);
        let w = if i == 0 || i == t.len() - 1 { 0.5 } else { 1.0 } * h;
        if tt.abs() <= a {
            i_small += w * diff;
            mc_error += w * se;
        } else if tt.abs() <= cutoff {
            i_mid += w * diff;
            mc_error += w * se;
        } else {
            i_large += w * modulus;
            mc_error += w * se;
        }
    }
    // Trapezoid error estimate: compare with the double-spacing rule.
    let coarse: f64 = t
        .iter()
        .enumerate()
        .step_by(2)
        .map(|(i, &tt)| {
            let v = &charfn.values[i];
            let diff = ((v.re - gauss(tt)).powi(2) + v.im * v.im).sqrt();
            2.0 * h * diff
        })
        .sum();
    let fine = i_small + i_mid;
    Ok(RegimeSplit {
        i_small,
        i_mid,
        i_large,
        mc_error,
        quad_error: (fine - coarse).abs(),
        a,
        cutoff_mid: cutoff,
    })
}

// ---------------------------------------------------------------------------
// Scale factorization of the characteristic function
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct FactorizationPoint {
    pub s: f64,
    pub lhs_re: f64,
    pub lhs_im: f64,
    pub rhs_re: f64,
    pub rhs_im: f64,
    /// |LHS − RHS|.
    pub discrepancy: f64,
    /// Combined standard error of the discrepancy.
    pub se: f64,
    /// Exactly computed |LHS − RHS| for the Gaussian potential at the same
    /// geometry (the non-independence correction).
    pub gauss_discrepancy: f64,
}

#[derive(Debug, Clone)]
pub struct FactorizationReport {
    pub n: i32,
    pub k: usize,
    pub points: Vec<FactorizationPoint>,
    pub ess_square: f64,
    pub ess_ball: f64,
}

/// Check ⟨e^{isX_{r_k}}⟩ ≈ ⟨e^{isX_{r_{k-1}}}⟩ · E^{r_{k-1},0}[e^{isA_{k-1}}]:
/// the outer factors come from the square-field ensemble, the inner factor
/// from an independent zero-boundary ball ensemble, and the Gaussian
/// discrepancy at the same geometry is computed exactly from Green forms.
#[allow(clippy::too_many_arguments)]
pub fn factorization_check(
    pot: &Potential,
    n: i32,
    k: usize,
    s_grid: &[f64],
    samples: usize,
    seed: u64,
    ladder: &ScaleLadder,
    mcmc: &McmcParams,
) -> Result<FactorizationReport> {
    if k == 0 {
        return Err(Error::InvalidParameter(
            "factorization needs k ≥ 1 (reads scale k-1)".into(),
        ));
    }
    for &s in s_grid {
        if s * s >= 0.5 {
            return Err(Error::InvalidParameter(format!(
                "|s|² must stay below 1/2, got s = {s}"
            )));
        }
    }
    let square = Domain::square(n)?;
    let mut radii = ladder.radii_for_increment(k - 1)?;
    radii.extend(ladder.radii_for_increment(k)?);
    radii.sort_unstable();
    radii.dedup();
    let pack = CirclePack::build(&radii)?;

    let w_k = ladder.window_at(k)?;
    let w_km1 = ladder.window_at(k - 1)?;
    let origin = Vertex::ORIGIN;

    // Square-field ensemble: record (X_{r_k}, X_{r_{k-1}}) per sample.
    let extract_sq = |f: &crate::lattice::FieldConfig| -> (f64, f64) {
        let xk = window_avg(f, origin, &w_k, &pack);
        let xkm1 = window_avg(f, origin, &w_km1, &pack);
        (xk, xkm1)
    };
    let bc_sq = BoundaryCondition::zero(&square);
    let (sq_pairs, ess_square) = if pot.is_quadratic() {
        let v = run_exact_gaussian(&square, &bc_sq, samples, seed, extract_sq)?;
        let n_s = v.len() as f64;
        (v, n_s)
    } else {
        let mut p = *mcmc;
        p.n_samples = samples;
        p.seed = seed;
        let run = run_mcmc(&square, &bc_sq, pot, &p, extract_sq)?;
        (run.samples, run.ess_center)
    };

    // Ball ensemble at radius r_{k-1} with zero boundary: A_{k-1}.
    let r_km1 = ladder.entries[k - 1].r;
    let ball = Domain::ball(origin, r_km1)?;
    let rho = rho_weights(origin, k - 1, ladder, &pack)?;
    rho.check_support(&ball)?;
    let bc_ball = BoundaryCondition::zero(&ball);
    let (a_series, ess_ball) = if pot.is_quadratic() {
        let v = run_exact_gaussian(&ball, &bc_ball, samples, seed ^ 0xba11, |f| {
            rho.apply(f).unwrap()
        })?;
        let n_b = v.len() as f64;
        (v, n_b)
    } else {
        let mut p = *mcmc;
        p.n_samples = samples;
        p.seed = seed ^ 0xba11;
        let run = run_mcmc(&ball, &bc_ball, pot, &p, |f| rho.apply(f).unwrap())?;
        (run.samples, run.ess_center)
    };

    // Gaussian oracle variances at the same geometry.
    let wv_k = window_weight_vector(&square, origin, &w_k, &pack)?;
    let wv_km1 = window_weight_vector(&square, origin, &w_km1, &pack)?;
    let var_xk = green_quadratic_form(&square, &wv_k)?;
    let var_xkm1 = green_quadratic_form(&square, &wv_km1)?;
    let var_a = green_quadratic_form(&ball, &rho.to_site_vector(&ball)?)?;

    let xk_series: Vec<f64> = sq_pairs.iter().map(|p| p.0).collect();
    let xkm1_series: Vec<f64> = sq_pairs.iter().map(|p| p.1).collect();

    let lhs_est = char_fn(&xk_series, 1.0, s_grid, Scaling::Raw);
    let out_est = char_fn(&xkm1_series, 1.0, s_grid, Scaling::Raw);
    let in_est = char_fn(&a_series, 1.0, s_grid, Scaling::Raw);

    let mut points = Vec::with_capacity(s_grid.len());
    for (i, &s) in s_grid.iter().enumerate() {
        let l = &lhs_est.values[i];
        let o = &out_est.values[i];
        let a = &in_est.values[i];
        // Complex product RHS = OUT · IN.
        let rhs_re = o.re * a.re - o.im * a.im;
        let rhs_im = o.re * a.im + o.im * a.re;
        let d_re = l.re - rhs_re;
        let d_im = l.im - rhs_im;
        let discrepancy = (d_re * d_re + d_im * d_im).sqrt();
        let o_mod = (o.re * o.re + o.im * o.im).sqrt();
        let a_mod = (a.re * a.re + a.im * a.im).sqrt();
        let se_l = lhs_est.modulus_se(i);
        let se_o = out_est.modulus_se(i);
        let se_a = in_est.modulus_se(i);
        let se = (se_l * se_l + (a_mod * se_o).powi(2) + (o_mod * se_a).powi(2)).sqrt();
        let s2 = s * s;
        let gauss_discrepancy = ((-0.5 * s2 * var_xk).exp()
            - (-0.5 * s2 * var_xkm1).exp() * (-0.5 * s2 * var_a).exp())
        .abs();
        points.push(FactorizationPoint {
            s,
            lhs_re: l.re,
            lhs_im: l.im,
            rhs_re,
            rhs_im,
            discrepancy,
            se,
            gauss_discrepancy,
        });
    }
    Ok(FactorizationReport {
        n,
        k,
        points,
        ess_square,
        ess_ball,
    })
}

fn window_avg(
    f: &crate::lattice::FieldConfig,
    v: Vertex,
    window: &crate::multiscale::Window,
    pack: &CirclePack,
) -> f64 {
    let mut acc = 0.0;
    for &r in &window.radii {
        acc += crate::multiscale::circle_average(f, v, r, pack).unwrap();
    }
    acc * window.actual_norm()
}

// ---------------------------------------------------------------------------
// Large-argument decay fit
// ---------------------------------------------------------------------------

/// Fit of |⟨e^{isφ(0)}⟩| ≤ min{1-ε₁, C/s²}^{log N}: the largest ε₁ and the
/// smallest C consistent with the estimates minus 3 standard errors.
#[derive(Debug, Clone)]
pub struct MwCharReport {
    pub eps1_fit: f64,
    pub c_fit: f64,
    pub points: Vec<(f64, f64, f64)>,
}

pub fn mw_char_probe(series: &[f64], log_n: f64, s_grid: &[f64]) -> MwCharReport {
    let est = char_fn(series, log_n, s_grid, Scaling::Raw);
    let mut eps1: f64 = 1.0;
    let mut c_fit: f64 = 0.0;
    let mut points = Vec::new();
    for (i, &s) in s_grid.iter().enumerate() {
        let m = est.modulus(i);
        let se = est.modulus_se(i);
        points.push((s, m, se));
        if s == 0.0 {
            continue;
        }
        // Per-point base bound that must dominate: ((|Ψ|-3se)₊)^{1/log N}.
        let base = (m - 3.0 * se).max(0.0).powf(1.0 / log_n);
        eps1 = eps1.min(1.0 - base);
        c_fit = c_fit.max(s * s * base);
    }
    MwCharReport {
        eps1_fit: eps1,
        c_fit,
        points,
    }
}

// ---------------------------------------------------------------------------
// Exponential Brascamp-Lieb probe
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct BlExpPoint {
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub se: f64,
    pub dropped: bool,
    pub violation: bool,
}

/// Compare log⟨exp(t Σφf)⟩ against (t²/2λ)·fᵀGf on a t-grid. Overflowing
/// points are dropped and flagged.
pub fn bl_exp_probe(
    linear_series: &[f64],
    green_form: f64,
    t_grid: &[f64],
    lambda: f64,
) -> Vec<BlExpPoint> {
    t_grid
        .iter()
        .map(|&t| {
            let rhs = t * t / (2.0 * lambda) * green_form;
            if t == 0.0 {
                return BlExpPoint {
                    t,
                    lhs: 0.0,
                    rhs,
                    se: 0.0,
                    dropped: false,
                    violation: false,
                };
            }
            let max_arg = linear_series
                .iter()
                .map(|&x| t * x)
                .fold(f64::NEG_INFINITY, f64::max);
            if max_arg > 700.0 {
                return BlExpPoint {
                    t,
                    lhs: f64::NAN,
                    rhs,
                    se: f64::NAN,
                    dropped: true,
                    violation: false,
                };
            }
            // Stable log-mean-exp with an autocorrelation-aware SE via the
            // delta method.
            let shifted: Vec<f64> = linear_series
                .iter()
                .map(|&x| (t * x - max_arg).exp())
                .collect();
            let est = stats::mean_estimate(&shifted);
            let lhs = max_arg + est.mean.ln();
            let se = est.se / est.mean.max(1e-300);
            BlExpPoint {
                t,
                lhs,
                rhs,
                se,
                dropped: false,
                violation: lhs > rhs + 3.0 * se,
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Good-event tail frequency
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct TailReport {
    pub exceedances: usize,
    pub n: usize,
    pub frequency: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub threshold: f64,
}

/// Frequency of the bad event max|φ| ≥ (log R)² with a 95% Wilson interval.
pub fn tail_event_probe(max_abs_series: &[f64], r: f64) -> TailReport {
    let threshold = r.ln().powi(2);
    let n = max_abs_series.len();
    let exceedances = max_abs_series.iter().filter(|&&m| m >= threshold).count();
    let (lo, hi) = stats::wilson_interval(exceedances, n, 1.96);
    TailReport {
        exceedances,
        n,
        frequency: exceedances as f64 / n.max(1) as f64,
        wilson_low: lo,
        wilson_high: hi,
        threshold,
    }
}
