//! Samplers for the gradient-field Gibbs measure on a domain with Dirichlet
//! boundary data: checkerboard heat-bath MCMC for general uniformly convex
//! potentials, an optional reflective overrelaxation sweep that cuts critical
//! slowing down, and an exact Gaussian sampler for the quadratic potential
//! (sine-transform diagonalization on rectangles, gradient-noise plus a
//! Green solve on balls).
//!
//! Randomness is derived per (chain, sweep, site) from the master seed, so a
//! sweep is embarrassingly parallel over one parity class and every thread
//! count produces bit-identical chains.

use crate::elliptic::{cg_free, harmonic_extension};
use crate::lattice::{Domain, FieldConfig, Vertex, NO_SITE};
use crate::par;
use crate::potential::Potential;
use crate::stats::{self, mix64};
use crate::{Error, Result};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

/// Hard cap on rejection-sampling proposals per site update.
pub const MAX_PROPOSALS: u64 = 1_000_000;

// ---------------------------------------------------------------------------
// Per-site RNG: a splitmix64 stream keyed by (chain, sweep, site).
// ---------------------------------------------------------------------------

struct SiteRng {
    state: u64,
}

impl SiteRng {
    #[inline]
    fn new(seed: u64) -> SiteRng {
        SiteRng { state: seed }
    }
}

impl RngCore for SiteRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        let mut chunks = dest.chunks_exact_mut(8);
        for chunk in &mut chunks {
            chunk.copy_from_slice(&self.next_u64().to_le_bytes());
        }
        let rem = chunks.into_remainder();
        if !rem.is_empty() {
            let bytes = self.next_u64().to_le_bytes();
            rem.copy_from_slice(&bytes[..rem.len()]);
        }
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.fill_bytes(dest);
        Ok(())
    }
}

#[inline]
fn sweep_hash(chain_seed: u64, sweep_serial: u64) -> u64 {
    mix64(chain_seed ^ mix64(sweep_serial ^ 0x5357454550))
}

#[inline]
fn site_seed(sweep_hash: u64, site: u64) -> u64 {
    mix64(sweep_hash ^ site)
}

pub(crate) fn chain_seed(master: u64, chain_tag: u64) -> u64 {
    mix64(master ^ mix64(chain_tag ^ 0x434841494e))
}

// ---------------------------------------------------------------------------
// Boundary conditions
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcKind {
    Zero,
    Explicit,
}

/// Dirichlet data on the pinned set of a domain.
#[derive(Debug, Clone)]
pub struct BoundaryCondition {
    pub kind: BcKind,
    values: Vec<f64>,
}

impl BoundaryCondition {
    pub fn zero(domain: &Domain) -> BoundaryCondition {
        BoundaryCondition {
            kind: BcKind::Zero,
            values: vec![0.0; domain.n_sites()],
        }
    }

    pub fn from_fn(domain: &Domain, f: impl Fn(Vertex) -> f64) -> BoundaryCondition {
        let mut values = vec![0.0; domain.n_sites()];
        for s in domain.pinned_sites() {
            values[s] = f(domain.site_vertex(s));
        }
        BoundaryCondition {
            kind: BcKind::Explicit,
            values,
        }
    }

    /// Full-length site vector; only pinned entries are meaningful.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_abs(&self, domain: &Domain) -> f64 {
        domain
            .pinned_sites()
            .map(|s| self.values[s].abs())
            .fold(0.0, f64::max)
    }

    /// The harmonic-approximation hypothesis: max |f| ≤ 2 (log R)² with R
    /// the domain diameter.
    pub fn check_decoupling_hypothesis(&self, domain: &Domain) -> Result<()> {
        let limit = 2.0 * domain.diameter().ln().powi(2);
        let max_abs = self.max_abs(domain);
        if max_abs > limit {
            Err(Error::BoundaryTooLarge { max_abs, limit })
        } else {
            Ok(())
        }
    }
}

// ---------------------------------------------------------------------------
// Single-site conditional samplers
// ---------------------------------------------------------------------------

/// Potential dispatch resolved once per sweep.
enum SiteKind<'a> {
    Quadratic,
    Cos { eps: f64, lambda: f64 },
    Generic { pot: &'a Potential },
}

impl<'a> SiteKind<'a> {
    fn of(pot: &'a Potential) -> SiteKind<'a> {
        if pot.is_quadratic() {
            SiteKind::Quadratic
        } else if let Some(eps) = pot.cos_eps() {
            SiteKind::Cos {
                eps,
                lambda: pot.lambda,
            }
        } else {
            SiteKind::Generic { pot }
        }
    }
}

/// Mode of the single-site conditional for the cos-perturbed potential:
/// root of f(t) = 4t - s - eps·(a sin t - b cos t), which is strictly
/// increasing with slope in [4λ, 4Λ]. Newton with a bisection safeguard.
#[inline]
fn cos_mode(eps: f64, lambda: f64, s: f64, a: f64, b: f64) -> f64 {
    let f = |t: f64| 4.0 * t - s - eps * (a * t.sin() - b * t.cos());
    let fp = |t: f64| 4.0 - eps * (a * t.cos() + b * t.sin());
    let mut t = s / 4.0;
    let reach = eps / lambda + 1e-9;
    let mut lo = t - reach;
    let mut hi = t + reach;
    for _ in 0..60 {
        let ft = f(t);
        if ft.abs() < 1e-12 {
            break;
        }
        if ft > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        t -= ft / fp(t);
        if t <= lo || t >= hi {
            t = 0.5 * (lo + hi);
        }
        if hi - lo < 1e-15 * (1.0 + t.abs()) {
            break;
        }
    }
    t
}

/// Mode of the generic conditional: root of f(t) = Σ V'(t - n_i).
#[inline]
fn generic_mode(pot: &Potential, nb: &[f64; 4]) -> f64 {
    let f = |t: f64| nb.iter().map(|&n| pot.d1(t - n)).sum::<f64>();
    let fp = |t: f64| nb.iter().map(|&n| pot.d2(t - n)).sum::<f64>();
    let mut t = nb.iter().sum::<f64>() / 4.0;
    // f is strictly increasing with slope ≥ 4λ; bracket the root first.
    let mut step = 1.0 + f(t).abs() / (4.0 * pot.lambda);
    let (mut lo, mut hi);
    if f(t) > 0.0 {
        hi = t;
        lo = t - step;
        while f(lo) > 0.0 {
            step *= 2.0;
            lo -= step;
        }
    } else {
        lo = t;
        hi = t + step;
        while f(hi) < 0.0 {
            step *= 2.0;
            hi += step;
        }
    }
    for _ in 0..80 {
        let ft = f(t);
        if ft.abs() < 1e-12 {
            break;
        }
        if ft > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        t -= ft / fp(t);
        if t <= lo || t >= hi {
            t = 0.5 * (lo + hi);
        }
        if hi - lo < 1e-15 * (1.0 + t.abs()) {
            break;
        }
    }
    t
}

/// Exact heat-bath draw from the conditional density
/// ∝ exp(-Σ_y V(t - φ(y))) via rejection against the Gaussian envelope of
/// precision 4λ centered at the conditional mode (valid since V'' ≥ λ).
/// Returns the number of proposals consumed alongside the draw, or the total
/// consumed on failure.
#[inline]
fn heat_bath_draw(
    kind: &SiteKind,
    nb: &[f64; 4],
    rng: &mut SiteRng,
) -> std::result::Result<f64, u64> {
    match kind {
        SiteKind::Quadratic => {
            // Conditional is exactly N(mean(nb), 1/4).
            let mean = nb.iter().sum::<f64>() / 4.0;
            let z: f64 = rng.sample(StandardNormal);
            Ok(mean + 0.5 * z)
        }
        SiteKind::Cos { eps, lambda } => {
            let s: f64 = nb.iter().sum();
            let (mut a, mut b) = (0.0, 0.0);
            for &n in nb {
                a += n.cos();
                b += n.sin();
            }
            // Log-density up to constants: g(t) = -(2t² - st) - eps(a cos t + b sin t).
            let g = |t: f64| -(2.0 * t * t - s * t) - eps * (a * t.cos() + b * t.sin());
            let mode = cos_mode(*eps, *lambda, s, a, b);
            let g_mode = g(mode);
            let sd = 1.0 / (4.0 * lambda).sqrt();
            for trial in 0..MAX_PROPOSALS {
                let z: f64 = rng.sample(StandardNormal);
                let t = mode + sd * z;
                let d = t - mode;
                let delta = g(t) - g_mode + 2.0 * lambda * d * d;
                if delta >= 0.0 {
                    return Ok(t);
                }
                let u: f64 = rng.gen();
                if u <= delta.exp() {
                    return Ok(t);
                }
                let _ = trial;
            }
            Err(MAX_PROPOSALS)
        }
        SiteKind::Generic { pot } => {
            let g = |t: f64| -nb.iter().map(|&n| pot.eval(t - n)).sum::<f64>();
            let mode = generic_mode(pot, nb);
            let g_mode = g(mode);
            let sd = 1.0 / (4.0 * pot.lambda).sqrt();
            for _ in 0..MAX_PROPOSALS {
                let z: f64 = rng.sample(StandardNormal);
                let t = mode + sd * z;
                let d = t - mode;
                let delta = g(t) - g_mode + 2.0 * pot.lambda * d * d;
                if delta >= 0.0 {
                    return Ok(t);
                }
                let u: f64 = rng.gen();
                if u <= delta.exp() {
                    return Ok(t);
                }
            }
            Err(MAX_PROPOSALS)
        }
    }
}

/// Overrelaxed update: reflect through the conditional mode, with a
/// Metropolis correction for the (small) asymmetry of anharmonic
/// conditionals. Exact and rejection-free for the quadratic potential.
#[inline]
fn reflect_draw(kind: &SiteKind, nb: &[f64; 4], t_old: f64, rng: &mut SiteRng) -> f64 {
    match kind {
        SiteKind::Quadratic => {
            let mean = nb.iter().sum::<f64>() / 4.0;
            2.0 * mean - t_old
        }
        SiteKind::Cos { eps, lambda } => {
            let s: f64 = nb.iter().sum();
            let (mut a, mut b) = (0.0, 0.0);
            for &n in nb {
                a += n.cos();
                b += n.sin();
            }
            let g = |t: f64| -(2.0 * t * t - s * t) - eps * (a * t.cos() + b * t.sin());
            let mode = cos_mode(*eps, *lambda, s, a, b);
            let t_new = 2.0 * mode - t_old;
            let delta = g(t_new) - g(t_old);
            if delta >= 0.0 {
                return t_new;
            }
            let u: f64 = rng.gen();
            if u <= delta.exp() {
                t_new
            } else {
                t_old
            }
        }
        SiteKind::Generic { pot } => {
            let g = |t: f64| -nb.iter().map(|&n| pot.eval(t - n)).sum::<f64>();
            let mode = generic_mode(pot, nb);
            let t_new = 2.0 * mode - t_old;
            let delta = g(t_new) - g(t_old);
            if delta >= 0.0 {
                return t_new;
            }
            let u: f64 = rng.gen();
            if u <= delta.exp() {
                t_new
            } else {
                t_old
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    HeatBath,
    Reflect,
}

/// One Markov chain over a domain: the field, a sweep counter, and the seeds
/// that derive every per-site random stream.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub field: FieldConfig,
    pub sweep_count: u64,
    chain_seed: u64,
    bc: BoundaryCondition,
}

impl ChainState {
    /// Start at the discrete-harmonic extension of the boundary data (the
    /// zero field for zero boundary).
    pub fn new(
        domain: &Arc<Domain>,
        bc: &BoundaryCondition,
        master_seed: u64,
        chain_tag: u64,
    ) -> Result<ChainState> {
        let values = match bc.kind {
            BcKind::Zero => vec![0.0; domain.n_sites()],
            BcKind::Explicit => harmonic_extension(domain, bc.values())?,
        };
        Ok(ChainState {
            field: FieldConfig::from_values(domain, values),
            sweep_count: 0,
            chain_seed: chain_seed(master_seed, chain_tag),
            bc: bc.clone(),
        })
    }

    /// Start from an explicit configuration (boundary entries are reset to
    /// the boundary data).
    pub fn from_field(
        mut field: FieldConfig,
        bc: &BoundaryCondition,
        master_seed: u64,
        chain_tag: u64,
    ) -> ChainState {
        for s in field.domain.pinned_sites() {
            field.values[s] = bc.values()[s];
        }
        ChainState {
            field,
            sweep_count: 0,
            chain_seed: chain_seed(master_seed, chain_tag),
            bc: bc.clone(),
        }
    }

    pub fn boundary(&self) -> &BoundaryCondition {
        &self.bc
    }
}

fn sweep(state: &mut ChainState, pot: &Potential, kind: SweepKind) -> Result<()> {
    let domain = Arc::clone(&state.field.domain);
    let site_kind = SiteKind::of(pot);
    let serial = state.sweep_count;
    let h = sweep_hash(state.chain_seed, serial);
    let failures = AtomicU64::new(0);
    let failed_site = AtomicU64::new(u64::MAX);

    let ec = domain.even_count();
    let n_even_free = domain.even_free().len();
    let n_odd_free = domain.odd_free().len();

    // Even pass: write even-free sites, read odd sites only.
    {
        let (even, odd) = state.field.values.split_at_mut(ec);
        let dom = &domain;
        let sk = &site_kind;
        par::par_update(&mut even[..n_even_free], |i, t_old| {
            let s = i;
            let nbs = dom.neighbor_sites(s);
            let nb = [
                odd[nbs[0] as usize - ec],
                odd[nbs[1] as usize - ec],
                odd[nbs[2] as usize - ec],
                odd[nbs[3] as usize - ec],
            ];
            let mut rng = SiteRng::new(site_seed(h, s as u64));
            site_update(sk, &nb, t_old, kind, &mut rng, s as u64, &failures, &failed_site)
        });
    }
    // Odd pass: write odd-free sites, read even sites only.
    {
        let (even, odd) = state.field.values.split_at_mut(ec);
        let dom = &domain;
        let sk = &site_kind;
        par::par_update(&mut odd[..n_odd_free], |i, t_old| {
            let s = ec + i;
            let nbs = dom.neighbor_sites(s);
            let nb = [
                even[nbs[0] as usize],
                even[nbs[1] as usize],
                even[nbs[2] as usize],
                even[nbs[3] as usize],
            ];
            let mut rng = SiteRng::new(site_seed(h, s as u64));
            site_update(sk, &nb, t_old, kind, &mut rng, s as u64, &failures, &failed_site)
        });
    }
    state.sweep_count += 1;

    if failures.load(Ordering::Relaxed) > 0 {
        let s = failed_site.load(Ordering::Relaxed) as usize;
        return Err(Error::RejectionExhausted {
            site: domain.site_vertex(s.min(domain.n_sites() - 1)),
            proposals: MAX_PROPOSALS,
        });
    }
    Ok(())
}

#[inline]
#[allow(clippy::too_many_arguments)]
fn site_update(
    sk: &SiteKind,
    nb: &[f64; 4],
    t_old: f64,
    kind: SweepKind,
    rng: &mut SiteRng,
    site: u64,
    failures: &AtomicU64,
    failed_site: &AtomicU64,
) -> f64 {
    match kind {
        SweepKind::HeatBath => match heat_bath_draw(sk, nb, rng) {
            Ok(t) => t,
            Err(_) => {
                failures.fetch_add(1, Ordering::Relaxed);
                failed_site.fetch_min(site, Ordering::Relaxed);
                t_old
            }
        },
        SweepKind::Reflect => reflect_draw(sk, nb, t_old, rng),
    }
}

/// One full checkerboard heat-bath sweep: every even-parity free site is
/// resampled from its exact conditional, then every odd-parity site.
pub fn heat_bath_sweep(state: &mut ChainState, pot: &Potential) -> Result<()> {
    sweep(state, pot, SweepKind::HeatBath)
}

/// One overrelaxation sweep (reflection through the conditional mode with
/// Metropolis correction). Preserves the Gibbs measure; mix with heat-bath
/// sweeps for ergodicity.
pub fn reflect_sweep(state: &mut ChainState, pot: &Potential) -> Result<()> {
    sweep(state, pot, SweepKind::Reflect)
}

// ---------------------------------------------------------------------------
// Batch sampling
// ---------------------------------------------------------------------------

/// MCMC run parameters. `burn_in` and `thinning` count sweep units, where a
/// unit is one heat-bath sweep followed by `overrelax` reflection sweeps.
#[derive(Debug, Clone, Copy)]
pub struct McmcParams {
    pub n_samples: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub seed: u64,
    pub chains: usize,
    pub overrelax: usize,
}

impl McmcParams {
    /// Diffusive-relaxation defaults: burn-in 20·N², thinning N²/4 with N the
    /// linear scale of the domain. Heuristic; always audit the reported ESS.
    pub fn desk_defaults(domain: &Domain, n_samples: usize, seed: u64) -> McmcParams {
        let n = (domain.diameter() / 2.0).max(1.0);
        McmcParams {
            n_samples,
            burn_in: (20.0 * n * n) as usize,
            thinning: ((n * n / 4.0) as usize).max(1),
            seed,
            chains: 1,
            overrelax: 0,
        }
    }
}

/// Streaming MCMC driver: runs `chains` independent chains (concurrently),
/// burns in, then retains `n_samples` thinned configurations, reducing each
/// one to `T` through `extract`. Also records the φ(center) series of every
/// retained sample for the effective-sample-size estimate.
pub struct McmcRun<T> {
    pub samples: Vec<T>,
    pub center_series: Vec<f64>,
    /// ESS of φ(center) over retained samples, summed over chains.
    pub ess_center: f64,
    pub tau_center: f64,
}

pub fn run_mcmc<T: Send>(
    domain: &Arc<Domain>,
    bc: &BoundaryCondition,
    pot: &Potential,
    params: &McmcParams,
    extract: impl Fn(&FieldConfig) -> T + Sync,
) -> Result<McmcRun<T>> {
    if params.n_samples < 1 {
        return Err(Error::InvalidParameter(
            "n_samples must be at least 1".into(),
        ));
    }
    let chains = params.chains.max(1);
    let center = center_vertex(domain);
    let center_site = domain
        .site_index(center)
        .ok_or(Error::OutsideDomain(center))?;

    // Initial state shared across chains (harmonic extension solved once).
    let init = ChainState::new(domain, bc, params.seed, 0)?;
    let per_chain: Vec<usize> = (0..chains)
        .map(|c| params.n_samples / chains + usize::from(c < params.n_samples % chains))
        .collect();

    let runs = par::par_map_range(chains, |c| -> Result<(Vec<T>, Vec<f64>)> {
        let n_keep = per_chain[c];
        let mut state = init.clone();
        state.chain_seed = chain_seed(params.seed, c as u64);
        let mut kept = Vec::with_capacity(n_keep);
        let mut series = Vec::with_capacity(n_keep);
        let unit = |state: &mut ChainState| -> Result<()> {
            heat_bath_sweep(state, pot)?;
            for _ in 0..params.overrelax {
                reflect_sweep(state, pot)?;
            }
            Ok(())
        };
        for _ in 0..params.burn_in {
            unit(&mut state)?;
        }
        for k in 0..n_keep {
            if k > 0 {
                for _ in 0..params.thinning {
                    unit(&mut state)?;
                }
            }
            kept.push(extract(&state.field));
            series.push(state.field.values[center_site]);
        }
        Ok((kept, series))
    });

    let mut samples = Vec::with_capacity(params.n_samples);
    let mut center_series = Vec::with_capacity(params.n_samples);
    let mut ess = 0.0;
    let mut tau_max: f64 = 1.0;
    for run in runs {
        let (kept, series) = run?;
        if series.len() >= 8 {
            let tau = stats::tau_int(&series);
            ess += series.len() as f64 / tau;
            tau_max = tau_max.max(tau);
        } else {
            ess += series.len() as f64;
        }
        samples.extend(kept);
        center_series.extend(series);
    }
    Ok(McmcRun {
        samples,
        center_series,
        ess_center: ess.min(params.n_samples as f64),
        tau_center: tau_max,
    })
}

pub fn center_vertex(domain: &Domain) -> Vertex {
    match domain.kind() {
        crate::lattice::DomainKind::Rect { x0, y0, x1, y1 } => {
            Vertex::new((x0 + x1) / 2, (y0 + y1) / 2)
        }
        crate::lattice::DomainKind::Ball { center, .. } => *center,
    }
}

/// A batch of sampled configurations that all share a domain and boundary
/// condition. Holds full fields; use `run_mcmc` with a reducing `extract`
/// when configurations are large or numerous.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    pub domain: Arc<Domain>,
    pub bc: BoundaryCondition,
    pub configs: Vec<FieldConfig>,
    pub thinning: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub ess_center: f64,
}

/// Draw configurations from the Gibbs measure by heat-bath MCMC.
pub fn sample_batch(
    domain: &Arc<Domain>,
    bc: &BoundaryCondition,
    pot: &Potential,
    params: &McmcParams,
) -> Result<SampleBatch> {
    let run = run_mcmc(domain, bc, pot, params, |f| f.clone())?;
    Ok(SampleBatch {
        domain: Arc::clone(domain),
        bc: bc.clone(),
        configs: run.samples,
        thinning: params.thinning,
        burn_in: params.burn_in,
        seed: params.seed,
        ess_center: run.ess_center,
    })
}

// ---------------------------------------------------------------------------
// Exact Gaussian sampler (quadratic potential)
// ---------------------------------------------------------------------------

/// Sine-transform plan diagonalizing the Dirichlet Laplacian on the interior
/// grid of a rectangle.
struct DstPlan {
    nx: usize,
    ny: usize,
    sx: Vec<f64>,
    sy: Vec<f64>,
    inv_sqrt_lambda: Vec<f64>,
    site_map: Vec<usize>,
}

fn dst_matrix(n: usize) -> Vec<f64> {
    let norm = (2.0 / (n as f64 + 1.0)).sqrt();
    let mut s = vec![0.0; n * n];
    for p in 0..n {
        for i in 0..n {
            s[p * n + i] =
                norm * (((i + 1) * (p + 1)) as f64 * std::f64::consts::PI / (n as f64 + 1.0)).sin();
        }
    }
    s
}

/// C = A (m×k) · B (k×n), row-major.
fn matmul(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for kk in 0..k {
            let av = a[i * k + kk];
            if av == 0.0 {
                continue;
            }
            let brow = &b[kk * n..(kk + 1) * n];
            for j in 0..n {
                crow[j] += av * brow[j];
            }
        }
    }
    c
}

fn dst_plan(domain: &Domain) -> Option<DstPlan> {
    let (x0, y0, x1, y1) = match *domain.kind() {
        crate::lattice::DomainKind::Rect { x0, y0, x1, y1 } => (x0, y0, x1, y1),
        _ => return None,
    };
    let nx = (x1 - x0 - 1) as usize;
    let ny = (y1 - y0 - 1) as usize;
    let mut inv = vec![0.0; nx * ny];
    for p in 0..nx {
        let lx = 2.0 - 2.0 * ((p + 1) as f64 * std::f64::consts::PI / (nx as f64 + 1.0)).cos();
        for q in 0..ny {
            let ly = 2.0 - 2.0 * ((q + 1) as f64 * std::f64::consts::PI / (ny as f64 + 1.0)).cos();
            inv[p * ny + q] = 1.0 / (lx + ly).sqrt();
        }
    }
    let mut site_map = vec![0usize; nx * ny];
    for i in 0..nx {
        for j in 0..ny {
            let v = Vertex::new(x0 + 1 + i as i32, y0 + 1 + j as i32);
            site_map[i * ny + j] = domain.site_index(v).expect("interior vertex");
        }
    }
    Some(DstPlan {
        nx,
        ny,
        sx: dst_matrix(nx),
        sy: dst_matrix(ny),
        inv_sqrt_lambda: inv,
        site_map,
    })
}

const EXACT_TAG: u64 = 0x4753414d504c45; // per-sample stream tag

/// Streaming exact sampler for the finite-volume Gaussian measure (quadratic
/// potential) with arbitrary Dirichlet data: exact independent draws.
///
/// Rectangles go through the sine-transform diagonalization; balls draw
/// per-edge gradient noise ξ and solve ∇*∇z = ∇*ξ, which has exactly the
/// Green-function covariance.
pub fn run_exact_gaussian<T: Send>(
    domain: &Arc<Domain>,
    bc: &BoundaryCondition,
    n_samples: usize,
    seed: u64,
    extract: impl Fn(&FieldConfig) -> T + Sync,
) -> Result<Vec<T>> {
    if n_samples < 1 {
        return Err(Error::InvalidParameter(
            "n_samples must be at least 1".into(),
        ));
    }
    let mean: Vec<f64> = match bc.kind {
        BcKind::Zero => vec![0.0; domain.n_sites()],
        BcKind::Explicit => harmonic_extension(domain, bc.values())?,
    };
    let plan = dst_plan(domain);

    let make_sample = |idx: usize| -> Result<T> {
        let mut rng = stats::substream(seed, &[EXACT_TAG, idx as u64]);
        let mut values = mean.clone();
        match &plan {
            Some(p) => {
                let mut amp = vec![0.0; p.nx * p.ny];
                for (k, slot) in amp.iter_mut().enumerate() {
                    let z: f64 = rng.sample(StandardNormal);
                    *slot = z * p.inv_sqrt_lambda[k];
                }
                let tmp = matmul(&p.sx, p.nx, p.nx, &amp, p.ny);
                let field = matmul(&tmp, p.nx, p.ny, &p.sy, p.ny);
                for (k, &site) in p.site_map.iter().enumerate() {
                    values[site] += field[k];
                }
            }
            None => {
                // Gradient-noise route: y = ∇*ξ restricted to free sites.
                let mut y = vec![0.0; domain.n_sites()];
                for &(t, h) in domain.energy_edge_sites() {
                    let xi: f64 = rng.sample(StandardNormal);
                    let (t, h) = (t as usize, h as usize);
                    if domain.is_free_site(h) {
                        y[h] += xi;
                    }
                    if domain.is_free_site(t) {
                        y[t] -= xi;
                    }
                }
                let (z, _) = cg_free(
                    domain,
                    |p, out| {
                        for s in domain.free_sites() {
                            let nbs = domain.neighbor_sites(s);
                            let mut acc = 4.0 * p[s];
                            for &n in &nbs {
                                if n != NO_SITE && domain.is_free_site(n as usize) {
                                    acc -= p[n as usize];
                                }
                            }
                            out[s] = acc;
                        }
                    },
                    &y,
                    crate::elliptic::CG_TOL,
                )?;
                for s in domain.free_sites() {
                    values[s] += z[s];
                }
            }
        }
        let field = FieldConfig::from_values(domain, values);
        Ok(extract(&field))
    };

    let results = par::par_map_range(n_samples, make_sample);
    results.into_iter().collect()
}

/// Exact Gaussian draws packaged as a batch (ESS = sample count).
pub fn exact_gaussian_sample(
    domain: &Arc<Domain>,
    bc: &BoundaryCondition,
    n_samples: usize,
    seed: u64,
) -> Result<SampleBatch> {
    let configs = run_exact_gaussian(domain, bc, n_samples, seed, |f| f.clone())?;
    Ok(SampleBatch {
        domain: Arc::clone(domain),
        bc: bc.clone(),
        configs,
        thinning: 0,
        burn_in: 0,
        seed,
        ess_center: n_samples as f64,
    })
}

/// Max |φ| over the domain.
pub fn max_abs_field(config: &FieldConfig) -> f64 {
    config.max_abs()
}
