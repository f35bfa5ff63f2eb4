//! Deformation bound machinery: the diamond ramp profile τ, the pointwise
//! density perturbation inequality g(φ+τ)g(φ-τ) ≥ e^{-Cb²} g(φ)² verified by
//! brute-force quadrature on tiny domains, and the circle-density argument —
//! a ratio condition on densities over the unit circle forcing a certified
//! bound on the first Fourier coefficient.

use crate::lattice::{Domain, Vertex};
use crate::potential::Potential;
use crate::{Error, Result};
use std::f64::consts::PI;
use std::sync::Arc;

// ---------------------------------------------------------------------------
// Deformation profile
// ---------------------------------------------------------------------------

/// The diamond ramp: τ = b inside ℓ¹ ≤ 2^{k-1}, linear down to 0 at
/// ℓ¹ = 2^k, zero outside. Constant on ℓ¹ level sets, so it never changes
/// the gradients recorded on diamond layers.
#[derive(Debug, Clone)]
pub struct DeformationProfile {
    pub level: u32,
    pub amplitude: f64,
    pub domain: Arc<Domain>,
    /// Per-site values.
    pub values: Vec<f64>,
    /// Σ_e (∇τ(e))² over the domain edges.
    pub gradient_energy: f64,
}

impl DeformationProfile {
    pub fn energy_ratio(&self) -> f64 {
        self.gradient_energy / (self.amplitude * self.amplitude)
    }
}

pub fn make_tau(k: u32, b: f64, domain: &Arc<Domain>) -> Result<DeformationProfile> {
    let reach = 2i64.pow(k);
    let n = (domain.diameter() / 2.0) as i64;
    if reach > n {
        return Err(Error::InvalidParameter(format!(
            "deformation diamond 2^{k} = {reach} escapes the domain (N = {n})"
        )));
    }
    let half = 2i64.pow(k - 1);
    let value_at = |v: Vertex| -> f64 {
        let l1 = v.l1();
        if l1 <= half {
            b
        } else if l1 <= reach {
            b * (1.0 - l1 as f64 / reach as f64)
        } else {
            0.0
        }
    };
    let values: Vec<f64> = (0..domain.n_sites())
        .map(|s| value_at(domain.site_vertex(s)))
        .collect();
    let mut energy = 0.0;
    for &(t, h) in domain.edge_sites() {
        let g = values[h as usize] - values[t as usize];
        energy += g * g;
    }
    Ok(DeformationProfile {
        level: k,
        amplitude: b,
        domain: Arc::clone(domain),
        values,
        gradient_energy: energy,
    })
}

// ---------------------------------------------------------------------------
// Density perturbation inequality by brute-force quadrature
// ---------------------------------------------------------------------------

/// Result of checking g(φ+τ)g(φ-τ) ≥ e^{-C b²} g(φ)² pointwise on a grid of
/// configurations, with C = Λ·Σ(∇τ)²/b² (the two-term Taylor constant; the
/// quadratic potential saturates it exactly).
#[derive(Debug, Clone)]
pub struct PerturbationReport {
    /// min over the grid of ratio / e^{-C b²}; ≥ 1 - 1e-12 passes.
    pub worst_ratio: f64,
    pub c_used: f64,
    pub grid_points: usize,
    /// For the quadratic potential, max |ratio·e^{Σ(∇τ)²} − 1|.
    pub identity_residual: Option<f64>,
}

impl PerturbationReport {
    pub fn pass(&self) -> bool {
        self.worst_ratio >= 1.0 - 1e-12
    }
}

/// Verify the perturbation inequality on every configuration of a tensor
/// grid covering ±8 standard deviations per free site. The domain must have
/// at most 6 free sites. `tau` must vanish on the pinned set.
pub fn density_perturbation_check(
    pot: &Potential,
    domain: &Arc<Domain>,
    tau: &[f64],
    n_quadrature: usize,
) -> Result<PerturbationReport> {
    let free: Vec<usize> = domain.free_sites().collect();
    let m = free.len();
    if m > 6 {
        return Err(Error::InvalidParameter(format!(
            "brute-force quadrature limited to 6 free sites, domain has {m}"
        )));
    }
    for s in domain.pinned_sites() {
        if tau[s] != 0.0 {
            return Err(Error::InvalidParameter(
                "deformation must vanish on the pinned set".into(),
            ));
        }
    }
    // Per-site grid ranges from the Gaussian variances scaled by 1/λ.
    let mut sd = Vec::with_capacity(m);
    for &s in &free {
        let g = crate::elliptic::green_column(domain, domain.site_vertex(s))?;
        sd.push((g[s] / pot.lambda).sqrt());
    }
    let per_site = (n_quadrature as f64).powf(1.0 / m as f64).floor().max(2.0) as usize;

    // Energy difference over the edges where ∇τ ≠ 0 or φ varies: all energy
    // edges (pinned-pinned edges are constant and cancel in the ratio).
    let edges: Vec<(u32, u32)> = domain.energy_edge_sites().to_vec();
    let mut tau_energy = 0.0;
    for &(t, h) in domain.edge_sites() {
        let g = tau[h as usize] - tau[t as usize];
        tau_energy += g * g;
    }
    let b = free
        .iter()
        .map(|&s| tau[s].abs())
        .fold(0.0f64, f64::max)
        .max(1e-300);
    let c_used = pot.big_lambda * tau_energy / (b * b);
    let bound = (-pot.big_lambda * tau_energy).exp(); // e^{-C b²}

    let mut phi = vec![0.0f64; domain.n_sites()];
    let mut idx = vec![0usize; m];
    let mut worst: f64 = f64::INFINITY;
    let mut identity_residual: f64 = 0.0;
    let total = per_site.pow(m as u32);
    for flat in 0..total {
        let mut rem = flat;
        for (j, &s) in free.iter().enumerate() {
            idx[j] = rem % per_site;
            rem /= per_site;
            let u = idx[j] as f64 / (per_site - 1) as f64;
            phi[s] = (2.0 * u - 1.0) * 8.0 * sd[j];
        }
        let mut diff = 0.0;
        for &(t, h) in &edges {
            let (t, h) = (t as usize, h as usize);
            let grad_phi = phi[h] - phi[t];
            let grad_tau = tau[h] - tau[t];
            if grad_tau == 0.0 {
                continue;
            }
            diff += pot.eval(grad_phi + grad_tau) + pot.eval(grad_phi - grad_tau)
                - 2.0 * pot.eval(grad_phi);
        }
        let ratio = (-diff).exp();
        worst = worst.min(ratio / bound);
        if pot.is_quadratic() {
            identity_residual = identity_residual.max((ratio * tau_energy.exp() - 1.0).abs());
        }
    }
    Ok(PerturbationReport {
        worst_ratio: worst,
        c_used,
        grid_points: total,
        identity_residual: pot.is_quadratic().then_some(identity_residual),
    })
}

// ---------------------------------------------------------------------------
// Circle densities
// ---------------------------------------------------------------------------

/// A probability density on the unit circle, tabulated on a uniform grid of
/// [0, 2π).
#[derive(Debug, Clone)]
pub struct CircleDensity {
    pub values: Vec<f64>,
}

impl CircleDensity {
    /// Grid step 2π/M.
    pub fn step(&self) -> f64 {
        2.0 * PI / self.values.len() as f64
    }

    pub fn theta(&self, i: usize) -> f64 {
        i as f64 * self.step()
    }

    /// Total mass by the periodic trapezoid rule (exact Riemann sum).
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.step()
    }

    /// Build from nonnegative values, normalizing the total mass to 1.
    pub fn normalized(values: Vec<f64>) -> Result<CircleDensity> {
        if values.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "circle density values must be finite and nonnegative".into(),
            ));
        }
        let step = 2.0 * PI / values.len() as f64;
        let mass: f64 = values.iter().sum::<f64>() * step;
        if mass <= 0.0 {
            return Err(Error::InvalidParameter("zero total mass".into()));
        }
        Ok(CircleDensity {
            values: values.into_iter().map(|v| v / mass).collect(),
        })
    }

    pub fn uniform(m: usize) -> CircleDensity {
        CircleDensity {
            values: vec![1.0 / (2.0 * PI); m],
        }
    }

    /// Wrapped Gaussian centered at π with concentration κ (variance 1/κ).
    pub fn wrapped_gaussian(kappa: f64, m: usize) -> Result<CircleDensity> {
        if kappa <= 0.0 {
            return Err(Error::InvalidParameter("kappa must be positive".into()));
        }
        let sigma2 = 1.0 / kappa;
        let wraps = (5.0 + 4.0 * sigma2.sqrt() / (2.0 * PI)).ceil() as i64;
        let norm = 1.0 / (2.0 * PI * sigma2).sqrt();
        let values: Vec<f64> = (0..m)
            .map(|i| {
                let theta = i as f64 * 2.0 * PI / m as f64 - PI;
                let mut s = 0.0;
                for j in -wraps..=wraps {
                    let d = theta + 2.0 * PI * j as f64;
                    s += (-0.5 * d * d / sigma2).exp();
                }
                norm * s
            })
            .collect();
        CircleDensity::normalized(values)
    }
}

/// Worst deficit in the circle ratio condition
/// f(a+b) f(a-b) ≥ e^{-C b²/t²} f(a)² over all grid pairs.
#[derive(Debug, Clone)]
pub struct RatioReport {
    pub worst_deficit: f64,
    pub pass: bool,
}

pub fn check_ratio_condition(f: &CircleDensity, t: f64, c: f64) -> Result<RatioReport> {
    let m = f.values.len();
    if f.step() > PI / 256.0 + 1e-15 {
        return Err(Error::InvalidParameter(format!(
            "grid resolution {} coarser than π/256",
            f.step()
        )));
    }
    if (f.mass() - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidParameter(format!(
            "density mass {} not normalized",
            f.mass()
        )));
    }
    let factors: Vec<f64> = (0..m)
        .map(|j| {
            let b = j as f64 * f.step();
            (-c * b * b / (t * t)).exp()
        })
        .collect();
    let mut worst: f64 = 0.0;
    for a in 0..m {
        let fa2 = f.values[a] * f.values[a];
        if fa2 == 0.0 {
            continue;
        }
        for bj in 0..m {
            let plus = f.values[(a + bj) % m];
            let minus = f.values[(a + m - bj % m) % m];
            let deficit = factors[bj] * fa2 - plus * minus;
            if deficit > worst {
                worst = deficit;
            }
        }
    }
    Ok(RatioReport {
        worst_deficit: worst,
        pass: worst <= 1e-9,
    })
}

/// First Fourier coefficient ∫ e^{iθ} f(θ) dθ by the periodic trapezoid
/// rule, with a Richardson error estimate.
pub fn char_integral(f: &CircleDensity) -> (f64, f64, f64) {
    let m = f.values.len();
    let step = f.step();
    let mut re = 0.0;
    let mut im = 0.0;
    for (i, &v) in f.values.iter().enumerate() {
        let theta = i as f64 * step;
        re += v * theta.cos();
        im += v * theta.sin();
    }
    re *= step;
    im *= step;
    // Half-resolution comparison for the quadrature error.
    let mut re2 = 0.0;
    let mut im2 = 0.0;
    for i in (0..m).step_by(2) {
        let theta = i as f64 * step;
        re2 += f.values[i] * theta.cos();
        im2 += f.values[i] * theta.sin();
    }
    re2 *= 2.0 * step;
    im2 *= 2.0 * step;
    let err = ((re - re2).powi(2) + (im - im2).powi(2)).sqrt() + 1e-14;
    (re, im, err)
}

/// Certified upper bound on |∫ e^{iθ} f| from the arc-partition argument:
/// split the circle into 2m arcs, pair opposite arcs, and bound the paired
/// contribution by the arc-mass imbalance plus the phase variation π/(2m).
#[derive(Debug, Clone)]
pub struct CertifiedBound {
    pub bound: f64,
    /// Σ_k |p_k − p_{k+m}| computed from f.
    pub mass_term_actual: f64,
    /// 1 − e^{-2C/t²}: the ratio-condition bound on the same sum.
    pub mass_term_theoretical: f64,
    /// π/(2m): phase variation within an arc.
    pub width_term: f64,
    pub arcs: usize,
}

pub fn certified_bound(
    f: &CircleDensity,
    t: f64,
    c: f64,
    m_arcs: usize,
) -> Result<CertifiedBound> {
    let ratio = check_ratio_condition(f, t, c)?;
    if !ratio.pass {
        return Err(Error::RatioConditionFailed {
            deficit: ratio.worst_deficit,
        });
    }
    let min_arcs = (t * t / c).ceil() as usize;
    if m_arcs < min_arcs.max(1) {
        return Err(Error::InvalidParameter(format!(
            "need at least {min_arcs} arcs for t={t}, C={c}"
        )));
    }
    // Arc masses over 2m arcs of width π/m (Riemann sum over grid cells).
    let grid = f.values.len();
    let step = f.step();
    let mut masses = vec![0.0f64; 2 * m_arcs];
    for (i, &v) in f.values.iter().enumerate() {
        let theta = i as f64 * step;
        let arc = ((theta / (PI / m_arcs as f64)) as usize).min(2 * m_arcs - 1);
        masses[arc] += v * step;
    }
    let _ = grid;
    let mass_term_actual: f64 = (0..m_arcs)
        .map(|k| (masses[k] - masses[k + m_arcs]).abs())
        .sum();
    let mass_term_theoretical = 1.0 - (-2.0 * c / (t * t)).exp();
    let width_term = PI / (2.0 * m_arcs as f64);
    Ok(CertifiedBound {
        bound: mass_term_actual.min(mass_term_theoretical) + width_term,
        mass_term_actual,
        mass_term_theoretical,
        width_term,
        arcs: m_arcs,
    })
}
