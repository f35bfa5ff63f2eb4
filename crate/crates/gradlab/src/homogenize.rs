//! Quenched homogenization toolkit: linear statistics of ∇φ and their
//! Monte-Carlo variances, the effective increment variance, and the
//! random-conductance machinery obtained by freezing a(e) = V''(∇φ(e)) from
//! one sampled configuration — subadditive energies ν(Q,p), effective
//! matrices ā(Q), correctors, flux averages and the two-scale expansion.
//!
//! Everything labelled "quenched" drops the configuration-space part of the
//! variance representation and works with the frozen coefficient field; the
//! Gaussian potential reduces every quantity here to the a ≡ 1 answer.

use crate::elliptic::{cg_free, green_quadratic_form, solve_dirichlet, CG_TOL};
use crate::lattice::{triadic_partition, Domain, DomainKind, FieldConfig, Vertex};
use crate::multiscale::{rho_weights, AnnulusWeights, CirclePack, ScaleLadder};
use crate::par;
use crate::potential::Potential;
use crate::sampler::{run_exact_gaussian, run_mcmc, BoundaryCondition, McmcParams};
use crate::stats::{self, VarianceEstimate};
use crate::{Error, Result};
use std::collections::HashMap;
use std::sync::Arc;

// ---------------------------------------------------------------------------
// Linear statistics Φ_R
// ---------------------------------------------------------------------------

/// A normalized linear statistic of the gradient field:
/// Φ(φ) = R^{-d/2} Σ_e ∇φ(e) f(e) with d = 2. Edge weights live on the
/// directed edges with at least one free endpoint, so gradients across the
/// pinned ring are included (they vanish for zero boundary data).
#[derive(Debug, Clone)]
pub struct LinearStatistic {
    pub domain: Arc<Domain>,
    /// Aligned with `domain.energy_edge_sites()`.
    pub edge_weights: Vec<f64>,
    pub scale: f64,
    /// ∇*·f per site (full length).
    pub divergence: Vec<f64>,
    pub div_inf_norm: f64,
}

impl LinearStatistic {
    pub fn new(domain: &Arc<Domain>, edge_weights: Vec<f64>, scale: f64) -> LinearStatistic {
        let edges = domain.energy_edge_sites();
        assert_eq!(edge_weights.len(), edges.len());
        let mut divergence = vec![0.0; domain.n_sites()];
        for (&(t, h), &w) in edges.iter().zip(&edge_weights) {
            divergence[h as usize] += w;
            divergence[t as usize] -= w;
        }
        let div_inf_norm = domain
            .free_sites()
            .map(|s| divergence[s].abs())
            .fold(0.0, f64::max);
        LinearStatistic {
            domain: Arc::clone(domain),
            edge_weights,
            scale,
            divergence,
            div_inf_norm,
        }
    }

    /// Build from a function of (tail vertex, direction index).
    pub fn from_fn(
        domain: &Arc<Domain>,
        scale: f64,
        f: impl Fn(Vertex, usize) -> f64,
    ) -> LinearStatistic {
        let weights = domain
            .energy_edge_sites()
            .iter()
            .map(|&(t, h)| {
                let tv = domain.site_vertex(t as usize);
                let hv = domain.site_vertex(h as usize);
                let dir = usize::from(hv.x == tv.x);
                f(tv, dir)
            })
            .collect();
        LinearStatistic::new(domain, weights, scale)
    }

    /// Evaluate Φ = scale^{-1} Σ_e ∇φ(e) f(e).
    pub fn phi(&self, config: &FieldConfig) -> f64 {
        debug_assert!(Arc::ptr_eq(&self.domain, &config.domain));
        let mut acc = 0.0;
        for (&(t, h), &w) in self
            .domain
            .energy_edge_sites()
            .iter()
            .zip(&self.edge_weights)
        {
            acc += (config.values[h as usize] - config.values[t as usize]) * w;
        }
        acc / self.scale
    }
}

/// The edge field representing an increment A_k: f(e) = r Σ_x ∇G(x,e) ρ(x),
/// i.e. f = r ∇u with ∇*∇u = ρ. Then ∇*·f = r·ρ and
/// Φ(φ) = r^{-1} Σ ∇φ·f = Σ ρ·φ = A_k exactly.
pub fn build_statistic_from_rho(
    ball: &Arc<Domain>,
    rho: &AnnulusWeights,
    scale: f64,
) -> Result<LinearStatistic> {
    let w = rho.to_site_vector(ball)?;
    let zero = vec![0.0; ball.n_sites()];
    let u = solve_dirichlet(ball, &zero, &w)?;
    let weights = ball
        .energy_edge_sites()
        .iter()
        .map(|&(t, h)| scale * (u[h as usize] - u[t as usize]))
        .collect();
    Ok(LinearStatistic::new(ball, weights, scale))
}

/// Max over free sites of |∇*·f − scale·ρ|: the divergence identity check.
pub fn divergence_identity_residual(stat: &LinearStatistic, rho: &AnnulusWeights) -> Result<f64> {
    let target = rho.to_site_vector(&stat.domain)?;
    Ok(stat
        .domain
        .free_sites()
        .map(|s| (stat.divergence[s] - stat.scale * target[s]).abs())
        .fold(0.0, f64::max))
}

/// Monte-Carlo variance of a statistic over a sequence of evaluations, with
/// a jackknife standard error; low effective sample sizes are flagged.
#[derive(Debug, Clone, Copy)]
pub struct McVariance {
    pub estimate: f64,
    pub standard_error: f64,
    pub ess: f64,
    pub low_ess: bool,
}

pub fn mc_variance(values: &[f64]) -> McVariance {
    let est: VarianceEstimate = stats::variance_estimate(values);
    McVariance {
        estimate: est.estimate,
        standard_error: est.se,
        ess: est.ess,
        low_ess: est.ess < 10.0,
    }
}

// ---------------------------------------------------------------------------
// Effective increment variance
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct GEntry {
    pub n: i32,
    pub r_k: f64,
    pub g_hat: f64,
    pub se: f64,
    pub ess: f64,
}

#[derive(Debug, Clone)]
pub struct GReport {
    pub k: usize,
    pub gamma: f64,
    pub entries: Vec<GEntry>,
    /// Largest-scale pair difference within 3 combined standard errors.
    pub stabilized: bool,
}

impl GReport {
    /// The stabilized estimate: the largest-scale value.
    pub fn g_hat(&self) -> f64 {
        self.entries.last().map(|e| e.g_hat).unwrap_or(f64::NAN)
    }
}

/// MC estimate of Var(A_k) under the zero-boundary measure on B_{r_k} for
/// each N in `n_list`, with a stabilization report across scales.
#[allow(clippy::too_many_arguments)]
pub fn estimate_g(
    pot: &Potential,
    n_list: &[i32],
    k: usize,
    gamma: f64,
    r_min: f64,
    samples: usize,
    seed: u64,
    mcmc: &McmcParams,
) -> Result<GReport> {
    let mut entries = Vec::new();
    for (i, &n) in n_list.iter().enumerate() {
        let ladder = ScaleLadder::new(n, gamma, r_min)?;
        let r_k = ladder.entries[k.min(ladder.k_max())].r;
        let ball = Domain::ball(Vertex::ORIGIN, r_k)?;
        let pack = CirclePack::build(&ladder.radii_for_increment(k)?)?;
        let rho = rho_weights(Vertex::ORIGIN, k, &ladder, &pack)?;
        rho.check_support(&ball)?;
        let bc = BoundaryCondition::zero(&ball);
        let values = if pot.is_quadratic() {
            run_exact_gaussian(&ball, &bc, samples, seed ^ (i as u64) << 8, |f| {
                rho.apply(f).unwrap()
            })?
        } else {
            let mut p = *mcmc;
            p.n_samples = samples;
            p.seed = seed ^ ((i as u64) << 8);
            run_mcmc(&ball, &bc, pot, &p, |f| rho.apply(f).unwrap())?.samples
        };
        let est = stats::variance_estimate(&values);
        entries.push(GEntry {
            n,
            r_k,
            g_hat: est.estimate,
            se: est.se,
            ess: est.ess,
        });
    }
    let stabilized = if entries.len() >= 2 {
        let a = &entries[entries.len() - 2];
        let b = &entries[entries.len() - 1];
        (a.g_hat - b.g_hat).abs() <= 3.0 * (a.se * a.se + b.se * b.se).sqrt()
    } else {
        true
    };
    Ok(GReport {
        k,
        gamma,
        entries,
        stabilized,
    })
}

// ---------------------------------------------------------------------------
// Quenched coefficient fields and energies
// ---------------------------------------------------------------------------

/// An edge conductance field a(e) ∈ [λ, Λ] on the directed edges 𝓔(Q) of a
/// rectangle, frozen from a sampled configuration.
#[derive(Debug, Clone)]
pub struct QuenchedCoefficient {
    pub domain: Arc<Domain>,
    /// Aligned with `domain.edges()` / `edge_sites()`.
    pub values: Vec<f64>,
    pub lambda: f64,
    pub big_lambda: f64,
}

impl QuenchedCoefficient {
    /// Freeze a(e) = V''(∇φ(e)) from a configuration.
    pub fn from_field(config: &FieldConfig, pot: &Potential) -> QuenchedCoefficient {
        let domain = Arc::clone(&config.domain);
        let values = domain
            .edge_sites()
            .iter()
            .map(|&(t, h)| pot.d2(config.values[h as usize] - config.values[t as usize]))
            .collect();
        QuenchedCoefficient {
            domain,
            values,
            lambda: pot.lambda,
            big_lambda: pot.big_lambda,
        }
    }

    pub fn constant(domain: &Arc<Domain>, c: f64) -> QuenchedCoefficient {
        QuenchedCoefficient {
            domain: Arc::clone(domain),
            values: vec![c; domain.edge_sites().len()],
            lambda: c,
            big_lambda: c,
        }
    }

    pub fn within_bounds(&self) -> bool {
        self.values
            .iter()
            .all(|&a| a >= self.lambda - 1e-12 && a <= self.big_lambda + 1e-12)
    }

    /// Restrict to a sub-rectangle (vertex ranges inclusive); edges of the
    /// child inherit the parent conductances.
    pub fn restrict(&self, x0: i32, y0: i32, x1: i32, y1: i32) -> Result<QuenchedCoefficient> {
        let child = Domain::rect(x0, y0, x1, y1)?;
        let mut parent_map: HashMap<(i32, i32, i32, i32), f64> = HashMap::new();
        for (&(t, h), &a) in self.domain.edge_sites().iter().zip(&self.values) {
            let tv = self.domain.site_vertex(t as usize);
            let hv = self.domain.site_vertex(h as usize);
            parent_map.insert((tv.x, tv.y, hv.x, hv.y), a);
        }
        let values = child
            .edge_sites()
            .iter()
            .map(|&(t, h)| {
                let tv = child.site_vertex(t as usize);
                let hv = child.site_vertex(h as usize);
                parent_map
                    .get(&(tv.x, tv.y, hv.x, hv.y))
                    .copied()
                    .ok_or(Error::OutsideDomain(tv))
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(QuenchedCoefficient {
            domain: child,
            values,
            lambda: self.lambda,
            big_lambda: self.big_lambda,
        })
    }
}

fn apply_conductance(domain: &Domain, a: &[f64], u: &[f64], out: &mut [f64]) {
    for s in domain.free_sites() {
        out[s] = 0.0;
    }
    for (&(t, h), &ae) in domain.edge_sites().iter().zip(a) {
        let (t, h) = (t as usize, h as usize);
        let g = ae * (u[h] - u[t]);
        if domain.is_free_site(h) {
            out[h] += g;
        }
        if domain.is_free_site(t) {
            out[t] -= g;
        }
    }
}

/// Solve ∇*·a∇v = rhs with v = boundary on the pinned ring.
fn solve_conductance(
    domain: &Domain,
    a: &[f64],
    boundary: &[f64],
    rhs: &[f64],
) -> Result<Vec<f64>> {
    let n = domain.n_sites();
    let mut ub = vec![0.0; n];
    for s in domain.pinned_sites() {
        ub[s] = boundary[s];
    }
    let mut lift = vec![0.0; n];
    apply_conductance(domain, a, &ub, &mut lift);
    let mut b = vec![0.0; n];
    for s in domain.free_sites() {
        b[s] = rhs[s] - lift[s];
    }
    let (mut v, _) = cg_free(
        domain,
        |p, out| {
            // Pinned entries of p stay zero inside CG, so reusing the full
            // apply gives exactly the free-free block.
            apply_conductance(domain, a, p, out)
        },
        &b,
        CG_TOL,
    )?;
    for s in domain.pinned_sites() {
        v[s] = boundary[s];
    }
    Ok(v)
}

fn affine(p: [f64; 2]) -> impl Fn(Vertex) -> f64 {
    move |v: Vertex| p[0] * v.x as f64 + p[1] * v.y as f64
}

/// Corrector solution for one slope: v minimizes the quenched Dirichlet
/// energy with v = ℓ_p on the ring.
#[derive(Debug, Clone)]
pub struct CorrectorSolution {
    pub p: [f64; 2],
    /// ν(Q,p) = |Q|^{-1} · ½ Σ_e a(e) (∇v(e))².
    pub nu: f64,
    pub values: Vec<f64>,
    /// Direction-wise flux averages (1/|𝓔_i|) Σ_{e∈𝓔_i} a ∇v = (ā(Q) p)_i.
    pub flux_avg: [f64; 2],
}

pub fn quenched_corrector(a: &QuenchedCoefficient, p: [f64; 2]) -> Result<CorrectorSolution> {
    if !a.within_bounds() {
        return Err(Error::InvalidParameter(
            "coefficient field violates its declared ellipticity bounds".into(),
        ));
    }
    let domain = &a.domain;
    let lp = affine(p);
    let mut boundary = vec![0.0; domain.n_sites()];
    for s in domain.pinned_sites() {
        boundary[s] = lp(domain.site_vertex(s));
    }
    let zero = vec![0.0; domain.n_sites()];
    let v = solve_conductance(domain, &a.values, &boundary, &zero)?;

    let vol = domain.vertices().len() as f64;
    let mut energy = 0.0;
    let mut flux = [0.0f64; 2];
    let mut counts = [0usize; 2];
    for (&(t, h), &ae) in domain.edge_sites().iter().zip(&a.values) {
        let (ti, hi) = (t as usize, h as usize);
        let g = v[hi] - v[ti];
        energy += ae * g * g;
        let dir = usize::from(domain.site_vertex(hi).x == domain.site_vertex(ti).x);
        flux[dir] += ae * g;
        counts[dir] += 1;
    }
    Ok(CorrectorSolution {
        p,
        nu: 0.5 * energy / vol,
        values: v,
        flux_avg: [flux[0] / counts[0] as f64, flux[1] / counts[1] as f64],
    })
}

/// The quadratic structure of ν(Q,·): the effective matrix assembled from
/// the coordinate-slope correctors, plus the residual against the second
/// differences of ν and an exact quadratic fit over a slope list.
#[derive(Debug, Clone)]
pub struct EnergyReport {
    pub ahom: [[f64; 2]; 2],
    /// ν evaluated at the fit slopes.
    pub nu_values: Vec<([f64; 2], f64)>,
    /// max |ā_from_ν·(|Q|/|𝓔_i|) − ā| entrywise.
    pub polarization_residual: f64,
    /// |𝓔_i|/|Q|: the edge-count factor relating ν's Hessian to ā(Q).
    pub edge_factor: f64,
    /// Quadratic-fit residual and the fitted (should-be-zero) affine part.
    pub fit_residual: f64,
    pub fit_linear: [f64; 2],
    pub fit_constant: f64,
}

pub fn quenched_energy_report(a: &QuenchedCoefficient) -> Result<EnergyReport> {
    let sols = par::par_map_slice(&[[1.0, 0.0], [0.0, 1.0]], |&p| quenched_corrector(a, p));
    let mut it = sols.into_iter();
    let v1 = it.next().unwrap()?;
    let v2 = it.next().unwrap()?;
    // ā columns are the flux averages of the coordinate correctors; the
    // matrix is symmetric up to solver tolerance.
    let raw = [
        [v1.flux_avg[0], v2.flux_avg[0]],
        [v1.flux_avg[1], v2.flux_avg[1]],
    ];
    let ahom = [
        [raw[0][0], 0.5 * (raw[0][1] + raw[1][0])],
        [0.5 * (raw[0][1] + raw[1][0]), raw[1][1]],
    ];

    let domain = &a.domain;
    let vol = domain.vertices().len() as f64;
    let n_edges_dir = domain.edge_sites().len() as f64 / 2.0;
    let edge_factor = n_edges_dir / vol;

    // Quadratic fit of ν over a redundant slope list.
    let slopes: Vec<[f64; 2]> = vec![
        [0.0, 0.0],
        [1.0, 0.0],
        [-1.0, 0.0],
        [0.0, 1.0],
        [0.0, -1.0],
        [1.0, 1.0],
        [1.0, -1.0],
    ];
    let nus = par::par_map_slice(&slopes, |&p| quenched_corrector(a, p).map(|s| s.nu));
    let mut nu_values = Vec::new();
    for (p, nu) in slopes.iter().zip(nus) {
        nu_values.push((*p, nu?));
    }
    // Least squares for ν(p) = ½ p·M p + b·p + c (6 unknowns).
    let (fit, fit_residual) = fit_quadratic(&nu_values);
    let (m11, m22, m12, b1, b2, c) = fit;

    // Second differences of ν give ā scaled by the edge factor.
    let from_nu = [
        [m11 / edge_factor, m12 / edge_factor],
        [m12 / edge_factor, m22 / edge_factor],
    ];
    let mut polarization_residual = 0.0f64;
    for i in 0..2 {
        for j in 0..2 {
            polarization_residual =
                polarization_residual.max((from_nu[i][j] - ahom[i][j]).abs());
        }
    }
    Ok(EnergyReport {
        ahom,
        nu_values,
        polarization_residual,
        edge_factor,
        fit_residual,
        fit_linear: [b1, b2],
        fit_constant: c,
    })
}

/// Least-squares fit of ν(p) = ½(m11 p1² + m22 p2²) + m12 p1 p2 + b·p + c.
fn fit_quadratic(points: &[([f64; 2], f64)]) -> ((f64, f64, f64, f64, f64, f64), f64) {
    let n = points.len();
    let mut at_a = [[0.0f64; 6]; 6];
    let mut at_y = [0.0f64; 6];
    let rows: Vec<[f64; 6]> = points
        .iter()
        .map(|&([p1, p2], _)| [0.5 * p1 * p1, 0.5 * p2 * p2, p1 * p2, p1, p2, 1.0])
        .collect();
    for (row, &(_, y)) in rows.iter().zip(points) {
        for i in 0..6 {
            at_y[i] += row[i] * y;
            for j in 0..6 {
                at_a[i][j] += row[i] * row[j];
            }
        }
    }
    // Solve the 6×6 normal equations by Gaussian elimination.
    let mut m = [[0.0f64; 7]; 6];
    for i in 0..6 {
        m[i][..6].copy_from_slice(&at_a[i]);
        m[i][6] = at_y[i];
    }
    for col in 0..6 {
        let piv = (col..6)
            .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())
            .unwrap();
        m.swap(col, piv);
        let d = m[col][col];
        for j in col..7 {
            m[col][j] /= d;
        }
        for i in 0..6 {
            if i != col {
                let f = m[i][col];
                for j in col..7 {
                    m[i][j] -= f * m[col][j];
                }
            }
        }
    }
    let x = [m[0][6], m[1][6], m[2][6], m[3][6], m[4][6], m[5][6]];
    let mut resid = 0.0f64;
    for (row, &(_, y)) in rows.iter().zip(points) {
        let pred: f64 = row.iter().zip(&x).map(|(r, c)| r * c).sum();
        resid = resid.max((pred - y).abs());
    }
    ((x[0], x[1], x[2], x[3], x[4], x[5]), resid)
}

/// Subadditivity check: gluing the child minimizers bounds the parent energy
/// from above, so the cell-averaged child energies dominate ν(parent) up to
/// the exactly computed seam term.
#[derive(Debug, Clone)]
pub struct SubadditivityReport {
    pub p: [f64; 2],
    pub nu_parent: f64,
    /// Vertex-weighted average of the child energies.
    pub nu_children_avg: f64,
    /// ½ Σ_{seam} a (∇ℓ_p)² / |Q_parent|: the glue cost.
    pub seam_term: f64,
    /// nu_children_avg·(9|child|/|parent|) + seam − nu_parent ≥ −tol.
    pub slack: f64,
}

pub fn subadditivity_check(
    a: &QuenchedCoefficient,
    n: u32,
    m: u32,
    p: [f64; 2],
) -> Result<SubadditivityReport> {
    let parent = quenched_corrector(a, p)?;
    let vol_parent = a.domain.vertices().len() as f64;
    let cells = triadic_partition(n, m)?;
    let lp = affine(p);

    let children = par::par_map_slice(&cells, |cell| -> Result<(f64, f64, usize)> {
        let child = a.restrict(cell.x0, cell.y0, cell.x1, cell.y1)?;
        let sol = quenched_corrector(&child, p)?;
        let vol = child.domain.vertices().len();
        let energy = sol.nu * vol as f64; // ½ Σ_{𝓔(child)} a (∇v)²
        Ok((sol.nu, energy, vol))
    });
    let mut child_energy = 0.0;
    let mut child_vol = 0usize;
    let mut nu_children_avg = 0.0;
    for c in children {
        let (nu, energy, vol) = c?;
        child_energy += energy;
        child_vol += vol;
        nu_children_avg += nu * vol as f64;
    }
    nu_children_avg /= child_vol as f64;

    // Seam edges: parent 𝓔 edges whose endpoints land in different cells.
    let mut seam = 0.0;
    for (&(t, h), &ae) in a.domain.edge_sites().iter().zip(&a.values) {
        let tv = a.domain.site_vertex(t as usize);
        let hv = a.domain.site_vertex(h as usize);
        let ct = cells.iter().position(|c| c.contains(tv));
        let ch = cells.iter().position(|c| c.contains(hv));
        if ct != ch {
            let g = lp(hv) - lp(tv);
            seam += ae * g * g;
        }
    }
    let seam_term = 0.5 * seam / vol_parent;

    // |parent|·ν_parent ≤ Σ_child energy + ½ seam.
    let slack = (child_energy + 0.5 * seam) / vol_parent - parent.nu;
    Ok(SubadditivityReport {
        p,
        nu_parent: parent.nu,
        nu_children_avg,
        seam_term,
        slack,
    })
}

// ---------------------------------------------------------------------------
// Ensembles: flux concentration and two-scale expansion
// ---------------------------------------------------------------------------

/// Draw an ensemble of quenched coefficient fields on the cube of level `m`
/// from independent zero-boundary samples.
pub fn coefficient_ensemble(
    pot: &Potential,
    m: u32,
    count: usize,
    seed: u64,
    mcmc: &McmcParams,
) -> Result<Vec<QuenchedCoefficient>> {
    let half = 3i32.pow(m);
    let domain = Domain::square(half)?;
    let bc = BoundaryCondition::zero(&domain);
    if pot.is_quadratic() {
        let coeffs = run_exact_gaussian(&domain, &bc, count, seed, |f| {
            QuenchedCoefficient::from_field(f, pot)
        })?;
        return Ok(coeffs);
    }
    let mut p = *mcmc;
    p.n_samples = count;
    p.seed = seed;
    Ok(run_mcmc(&domain, &bc, pot, &p, |f| {
        QuenchedCoefficient::from_field(f, pot)
    })?
    .samples)
}

/// Ensemble variance of the cube-averaged flux (per component and total).
#[derive(Debug, Clone)]
pub struct FluxConcentration {
    pub level: u32,
    pub mean_flux: [f64; 2],
    pub var_flux: [f64; 2],
    pub var_total: f64,
    pub count: usize,
}

pub fn flux_concentration(
    ensemble: &[QuenchedCoefficient],
    level: u32,
    p: [f64; 2],
) -> Result<FluxConcentration> {
    let fluxes = par::par_map_slice(ensemble, |a| quenched_corrector(a, p).map(|s| s.flux_avg));
    let mut f0 = Vec::with_capacity(ensemble.len());
    let mut f1 = Vec::with_capacity(ensemble.len());
    for f in fluxes {
        let f = f?;
        f0.push(f[0]);
        f1.push(f[1]);
    }
    let var0 = stats::variance(&f0);
    let var1 = stats::variance(&f1);
    Ok(FluxConcentration {
        level,
        mean_flux: [stats::mean(&f0), stats::mean(&f1)],
        var_flux: [var0, var1],
        var_total: var0 + var1,
        count: ensemble.len(),
    })
}

/// Residuals of the two-scale expansion w = u_hom + Σ_i ∂_i u_hom · χ_i
/// against the heterogeneous solution, in volume-normalized L² after
/// rescaling lengths by 1/R, plus the plain homogenization error.
#[derive(Debug, Clone)]
pub struct TwoScaleReport {
    pub level: u32,
    pub res_corrected: f64,
    pub res_plain: f64,
    pub rel_corrected: f64,
    pub rel_plain: f64,
}

/// Smooth source on the unit square used by the heterogeneous problem; the
/// edge field is f(e) = profile(x̂) in the e₁ direction.
pub fn sin_profile(x: f64, y: f64) -> [f64; 2] {
    [
        (std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y).sin(),
        0.0,
    ]
}

pub fn two_scale_residual(
    a: &QuenchedCoefficient,
    level: u32,
    profile: impl Fn(f64, f64) -> [f64; 2],
) -> Result<TwoScaleReport> {
    let domain = &a.domain;
    let half = 3i32.pow(level);
    let scale = 2.0 * half as f64;

    // Heterogeneous problem: ∇*·a∇u = ∇*·f^ε, zero boundary.
    let mut rhs = vec![0.0; domain.n_sites()];
    for &(t, h) in domain.energy_edge_sites() {
        let tv = domain.site_vertex(t as usize);
        let hv = domain.site_vertex(h as usize);
        let xh = (tv.x + half) as f64 / scale;
        let yh = (tv.y + half) as f64 / scale;
        let dir = usize::from(hv.x == tv.x);
        let fe = profile(xh, yh)[dir];
        rhs[h as usize] += fe;
        rhs[t as usize] -= fe;
    }
    let zero = vec![0.0; domain.n_sites()];
    let u_het = solve_conductance(domain, &a.values, &zero, &rhs)?;

    // Homogenized problem with the constant matrix ā(cube).
    let report = quenched_energy_report(a)?;
    let ahom = report.ahom;
    let u_hom = solve_anisotropic(domain, ahom, &rhs)?;

    // Correctors χ_i = v(·, e_i) − ℓ_{e_i}.
    let chi: Vec<Vec<f64>> = [[1.0, 0.0], [0.0, 1.0]]
        .iter()
        .map(|&p| -> Result<Vec<f64>> {
            let sol = quenched_corrector(a, p)?;
            let lp = affine(p);
            Ok((0..domain.n_sites())
                .map(|s| sol.values[s] - lp(domain.site_vertex(s)))
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;

    // w = u_hom + Σ_i ∂_i u_hom · χ_i with forward differences.
    let mut w = u_hom.clone();
    for s in 0..domain.n_sites() {
        let v = domain.site_vertex(s);
        for (i, chi_i) in chi.iter().enumerate() {
            let step = if i == 0 {
                Vertex::new(v.x + 1, v.y)
            } else {
                Vertex::new(v.x, v.y + 1)
            };
            let back = if i == 0 {
                Vertex::new(v.x - 1, v.y)
            } else {
                Vertex::new(v.x, v.y - 1)
            };
            let du = match (domain.site_index(step), domain.site_index(back)) {
                (Some(f), _) => u_hom[f] - u_hom[s],
                (None, Some(b)) => u_hom[s] - u_hom[b],
                (None, None) => 0.0,
            };
            w[s] += du * chi_i[s];
        }
    }

    let vol = domain.vertices().len() as f64;
    let norm = |v: &[f64]| -> f64 { (v.iter().map(|x| x * x).sum::<f64>() / vol).sqrt() };
    let diff_w: Vec<f64> = (0..domain.n_sites()).map(|s| u_het[s] - w[s]).collect();
    let diff_u: Vec<f64> = (0..domain.n_sites()).map(|s| u_het[s] - u_hom[s]).collect();
    let base = norm(&u_het).max(1e-300);
    Ok(TwoScaleReport {
        level,
        res_corrected: norm(&diff_w) / scale,
        res_plain: norm(&diff_u) / scale,
        rel_corrected: norm(&diff_w) / base,
        rel_plain: norm(&diff_u) / base,
    })
}

/// Solve the constant-coefficient anisotropic problem ∇*·ā∇u = rhs with zero
/// boundary data, using the symmetric vertex-pair discretization of the
/// energy ½ Σ_x (∇u(x))ᵀ ā ∇u(x).
fn solve_anisotropic(domain: &Domain, ahom: [[f64; 2]; 2], rhs: &[f64]) -> Result<Vec<f64>> {
    let (x0, y0, x1, y1) = match *domain.kind() {
        DomainKind::Rect { x0, y0, x1, y1 } => (x0, y0, x1, y1),
        _ => {
            return Err(Error::InvalidParameter(
                "anisotropic solve needs a rectangle".into(),
            ))
        }
    };
    // Precompute the vertex-pair stencil sites.
    let mut pairs = Vec::new();
    for x in x0..x1 {
        for y in y0..y1 {
            let s = domain.site_index(Vertex::new(x, y)).unwrap();
            let sx = domain.site_index(Vertex::new(x + 1, y)).unwrap();
            let sy = domain.site_index(Vertex::new(x, y + 1)).unwrap();
            pairs.push((s, sx, sy));
        }
    }
    let apply = |u: &[f64], out: &mut [f64]| {
        for s in domain.free_sites() {
            out[s] = 0.0;
        }
        for &(s, sx, sy) in &pairs {
            let g1 = u[sx] - u[s];
            let g2 = u[sy] - u[s];
            let q1 = ahom[0][0] * g1 + ahom[0][1] * g2;
            let q2 = ahom[1][0] * g1 + ahom[1][1] * g2;
            if domain.is_free_site(sx) {
                out[sx] += q1;
            }
            if domain.is_free_site(sy) {
                out[sy] += q2;
            }
            if domain.is_free_site(s) {
                out[s] -= q1 + q2;
            }
        }
    };
    let (u, _) = cg_free(domain, apply, rhs, CG_TOL)?;
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::exact_gaussian_sample;

    #[test]
    fn phi_of_zero_and_affine_fields() {
        let d = Domain::square(6).unwrap();
        let stat = LinearStatistic::from_fn(&d, 6.0, |_, dir| if dir == 0 { 1.0 } else { 0.0 });
        let zero = FieldConfig::zeros(&d);
        assert_eq!(stat.phi(&zero), 0.0);

        // φ = ℓ_p: every e₁ gradient is p₁, so Φ = W·p₁/R with W the total
        // e₁ weight over edges with a free endpoint.
        let p = [0.7, -0.3];
        let mut vals = vec![0.0; d.n_sites()];
        for s in 0..d.n_sites() {
            let v = d.site_vertex(s);
            vals[s] = p[0] * v.x as f64 + p[1] * v.y as f64;
        }
        let lp = FieldConfig::from_values(&d, vals);
        let w_total: f64 = d
            .energy_edge_sites()
            .iter()
            .zip(&stat.edge_weights)
            .filter(|(&(t, h), _)| {
                d.site_vertex(h as usize).y == d.site_vertex(t as usize).y
            })
            .map(|(_, &w)| w)
            .sum();
        let expect = w_total * p[0] / 6.0;
        assert!((stat.phi(&lp) - expect).abs() < 1e-10);
    }

    #[test]
    fn statistic_from_rho_reproduces_increment() {
        let ladder = ScaleLadder::new(32, 0.5, 4.0).unwrap();
        let radii = ladder.radii_for_increment(1).unwrap();
        let pack = CirclePack::build(&radii).unwrap();
        let r1 = ladder.entries[1].r;
        let ball = Domain::ball(Vertex::ORIGIN, r1).unwrap();
        let rho = rho_weights(Vertex::ORIGIN, 1, &ladder, &pack).unwrap();
        rho.check_support(&ball).unwrap();
        let stat = build_statistic_from_rho(&ball, &rho, r1).unwrap();

        // Divergence identity ∇*·f = r·ρ.
        let resid = divergence_identity_residual(&stat, &rho).unwrap();
        assert!(resid < 1e-8, "divergence residual {resid}");

        // Φ equals Σ ρ·φ on sampled configurations.
        let batch =
            exact_gaussian_sample(&ball, &BoundaryCondition::zero(&ball), 6, 123).unwrap();
        for f in &batch.configs {
            let via_phi = stat.phi(f);
            let via_rho = rho.apply(f).unwrap();
            assert!(
                (via_phi - via_rho).abs() < 1e-10,
                "{via_phi} vs {via_rho}"
            );
        }
    }

    #[test]
    fn phi_variance_matches_green_oracle() {
        let d = Domain::square(8).unwrap();
        let stat = LinearStatistic::from_fn(&d, 8.0, |v, dir| {
            if dir == 0 && v.x.abs() <= 3 && v.y.abs() <= 3 {
                1.0
            } else {
                0.0
            }
        });
        // Var(Σ∇φ·f) = (∇*f)ᵀ G (∇*f) for the zero-boundary Gaussian.
        let oracle = green_quadratic_form(&d, &stat.divergence).unwrap() / (8.0 * 8.0);
        let vals = run_exact_gaussian(&d, &BoundaryCondition::zero(&d), 20_000, 77, |f| {
            stat.phi(f)
        })
        .unwrap();
        let mc = mc_variance(&vals);
        assert!(!mc.low_ess);
        assert!(
            (mc.estimate - oracle).abs() < 3.0 * mc.standard_error,
            "{mc:?} vs {oracle}"
        );
    }

    #[test]
    fn estimate_g_quadratic_matches_oracle() {
        let mcmc = McmcParams {
            n_samples: 0,
            burn_in: 0,
            thinning: 0,
            seed: 0,
            chains: 1,
            overrelax: 0,
        };
        let rep = estimate_g(
            &Potential::quadratic(),
            &[24, 32],
            1,
            0.5,
            4.0,
            4000,
            99,
            &mcmc,
        )
        .unwrap();
        for e in &rep.entries {
            let ladder = ScaleLadder::new(e.n, 0.5, 4.0).unwrap();
            let pack = CirclePack::build(&ladder.radii_for_increment(1).unwrap()).unwrap();
            let rho = rho_weights(Vertex::ORIGIN, 1, &ladder, &pack).unwrap();
            let ball = Domain::ball(Vertex::ORIGIN, e.r_k).unwrap();
            let w = rho.to_site_vector(&ball).unwrap();
            let oracle = green_quadratic_form(&ball, &w).unwrap();
            assert!(
                (e.g_hat - oracle).abs() < 3.0 * e.se,
                "N={}: {e:?} vs {oracle}",
                e.n
            );
        }
    }

    #[test]
    fn constant_coefficient_reduces_exactly() {
        let d = Domain::square(9).unwrap();
        let a = QuenchedCoefficient::constant(&d, 1.3);
        let sol = quenched_corrector(&a, [0.5, -1.0]).unwrap();
        // v = ℓ_p exactly.
        for s in 0..d.n_sites() {
            let v = d.site_vertex(s);
            let lp = 0.5 * v.x as f64 - 1.0 * v.y as f64;
            assert!((sol.values[s] - lp).abs() < 1e-9);
        }
        // Flux average = ā p with ā = c·Id.
        assert!((sol.flux_avg[0] - 1.3 * 0.5).abs() < 1e-9);
        assert!((sol.flux_avg[1] - 1.3 * (-1.0)).abs() < 1e-9);
        // ν carries the edge-count factor.
        let rep = quenched_energy_report(&a).unwrap();
        let expect_nu = 0.5 * 1.3 * (0.5f64.powi(2) + 1.0) * rep.edge_factor;
        assert!((sol.nu - expect_nu).abs() < 1e-9, "{} vs {expect_nu}", sol.nu);
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.3 } else { 0.0 };
                assert!((rep.ahom[i][j] - want).abs() < 1e-9);
            }
        }
        assert!(rep.fit_residual < 1e-8);
        assert!(rep.polarization_residual < 1e-8);
    }

    #[test]
    fn quadratic_field_gives_identity_coefficients() {
        let d = Domain::square(9).unwrap();
        let batch = exact_gaussian_sample(&d, &BoundaryCondition::zero(&d), 1, 5).unwrap();
        let a = QuenchedCoefficient::from_field(&batch.configs[0], &Potential::quadratic());
        assert!(a.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn cos_sample_energy_structure() {
        // One cos-perturbed sample on □_2, checked for quadratic-in-p
        // structure, spectral bounds and polarization consistency.
        let pot = Potential::cos_perturbed(0.5).unwrap();
        let d = Domain::square(9).unwrap();
        let bc = BoundaryCondition::zero(&d);
        let params = McmcParams {
            n_samples: 1,
            burn_in: 120,
            thinning: 1,
            seed: 31,
            chains: 1,
            overrelax: 2,
        };
        let run = run_mcmc(&d, &bc, &pot, &params, |f| f.clone()).unwrap();
        let a = QuenchedCoefficient::from_field(&run.samples[0], &pot);
        assert!(a.within_bounds());
        let rep = quenched_energy_report(&a).unwrap();
        assert!(rep.fit_residual < 1e-8, "fit residual {}", rep.fit_residual);
        assert!(
            rep.polarization_residual < 1e-8,
            "polarization residual {}",
            rep.polarization_residual
        );
        assert!(rep.fit_linear[0].abs() < 1e-8 && rep.fit_linear[1].abs() < 1e-8);
        assert!(rep.fit_constant.abs() < 1e-8);
        // Eigenvalues of the symmetric 2×2 ā within [λ, Λ].
        let tr = rep.ahom[0][0] + rep.ahom[1][1];
        let det = rep.ahom[0][0] * rep.ahom[1][1] - rep.ahom[0][1] * rep.ahom[1][0];
        let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
        let (lo, hi) = (tr / 2.0 - disc, tr / 2.0 + disc);
        assert!(
            lo >= pot.lambda - 1e-9 && hi <= pot.big_lambda + 1e-9,
            "spectrum [{lo}, {hi}] outside [{}, {}]",
            pot.lambda,
            pot.big_lambda
        );
    }

    #[test]
    fn subadditivity_constant_and_sampled() {
        let d = Domain::square(9).unwrap();
        let a = QuenchedCoefficient::constant(&d, 1.0);
        let rep = subadditivity_check(&a, 2, 1, [1.0, 0.0]).unwrap();
        assert!(rep.slack >= -1e-9, "slack {}", rep.slack);
        // Constant coefficients: child energies equal the parent up to the
        // edge-count factor, so the averaged ν's are close.
        assert!((rep.nu_parent - rep.nu_children_avg).abs() < 0.05);

        let pot = Potential::cos_perturbed(0.5).unwrap();
        let bc = BoundaryCondition::zero(&d);
        let params = McmcParams {
            n_samples: 1,
            burn_in: 100,
            thinning: 1,
            seed: 77,
            chains: 1,
            overrelax: 2,
        };
        let run = run_mcmc(&d, &bc, &pot, &params, |f| f.clone()).unwrap();
        let a = QuenchedCoefficient::from_field(&run.samples[0], &pot);
        let rep = subadditivity_check(&a, 2, 1, [1.0, 0.0]).unwrap();
        assert!(rep.slack >= -1e-9, "slack {}", rep.slack);
    }

    #[test]
    fn two_scale_constant_coefficient_is_exact() {
        let d = Domain::square(9).unwrap();
        let a = QuenchedCoefficient::constant(&d, 0.8);
        let rep = two_scale_residual(&a, 2, sin_profile).unwrap();
        assert!(rep.rel_corrected < 1e-7, "{rep:?}");
        assert!(rep.rel_plain < 1e-7, "{rep:?}");

        // Zero source: all residuals vanish.
        let rep = two_scale_residual(&a, 2, |_, _| [0.0, 0.0]).unwrap();
        assert_eq!(rep.res_corrected, 0.0);
        assert_eq!(rep.res_plain, 0.0);
    }
}
