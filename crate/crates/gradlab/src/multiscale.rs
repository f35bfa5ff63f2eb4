//! Multiscale harmonic-average machinery: the geometric scale ladder
//! r_k = e^{-k} N with its thin windows r_{k,±}, circle averages weighted by
//! harmonic measure, the averaged processes X, increments A_k and
//! boundary-layer errors 𝓔_k, the signed annulus weights that represent A_k,
//! the harmonic-annihilation identity, and a distributional probe of the
//! boundary-decoupling property.

use crate::elliptic::harmonic_measure;
use crate::lattice::{Domain, DomainKind, FieldConfig, Vertex};
use crate::par;
use crate::potential::Potential;
use crate::sampler::{run_exact_gaussian, run_mcmc, BoundaryCondition, McmcParams};
use crate::stats;
use crate::{Error, Result};
use std::collections::HashMap;
use std::sync::Arc;

/// The radii r_k = e^{-k} N together with r_{k,±} = (1 ± r_k^{-γ}) r_k,
/// truncated at r_min.
#[derive(Debug, Clone)]
pub struct ScaleLadder {
    pub n: i32,
    pub gamma: f64,
    pub r_min: f64,
    pub entries: Vec<LadderEntry>,
}

#[derive(Debug, Clone, Copy)]
pub struct LadderEntry {
    pub k: usize,
    pub r: f64,
    pub r_plus: f64,
    pub r_minus: f64,
}

pub const DEFAULT_GAMMA: f64 = 0.5;
pub const DEFAULT_R_MIN: f64 = 8.0;

impl ScaleLadder {
    pub fn new(n: i32, gamma: f64, r_min: f64) -> Result<ScaleLadder> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma must lie in (0,1), got {gamma}"
            )));
        }
        if !(r_min >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "r_min must be at least 1, got {r_min}"
            )));
        }
        if n < 1 {
            return Err(Error::InvalidParameter(format!("scale N={n} too small")));
        }
        let mut entries = Vec::new();
        let mut k = 0usize;
        loop {
            let r = (-(k as f64)).exp() * n as f64;
            if r < r_min {
                break;
            }
            let shrink = r.powf(-gamma);
            entries.push(LadderEntry {
                k,
                r,
                r_plus: (1.0 + shrink) * r,
                r_minus: (1.0 - shrink) * r,
            });
            k += 1;
        }
        if entries.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "no ladder scales: N={n} below r_min={r_min}"
            )));
        }
        Ok(ScaleLadder {
            n,
            gamma,
            r_min,
            entries,
        })
    }

    /// Largest k with r_k ≥ r_min.
    pub fn k_max(&self) -> usize {
        self.entries.len() - 1
    }

    fn entry(&self, k: usize) -> Result<LadderEntry> {
        if k <= self.k_max() {
            Ok(self.entries[k])
        } else if k == self.k_max() + 1 {
            // The increment A_{k_max-?} window at scale k_max+1 is still
            // needed when k_max itself is the last retained index; compute
            // the would-be entry on the fly only if it stays ≥ 1.
            let r = (-(k as f64)).exp() * self.n as f64;
            if r >= 1.0 {
                let shrink = r.powf(-self.gamma);
                return Ok(LadderEntry {
                    k,
                    r,
                    r_plus: (1.0 + shrink) * r,
                    r_minus: (1.0 - shrink) * r,
                });
            }
            Err(Error::InvalidParameter(format!(
                "scale index {k} beyond the ladder (r < 1)"
            )))
        } else {
            Err(Error::InvalidParameter(format!(
                "scale index {k} beyond k_max={}",
                self.k_max()
            )))
        }
    }

    /// Window of integer radii around `center` with relative half-width
    /// ¼·base^{-γ} and the stated normalization (½·base^{1-γ})^{-1}.
    fn window(&self, center: f64, base: f64) -> Window {
        let rhw = 0.25 * base.powf(-self.gamma);
        let lo = center * (1.0 - rhw);
        let hi = center * (1.0 + rhw);
        let lo_i = lo.ceil().max(1.0) as u32;
        let hi_i = hi.floor().max(0.0) as u32;
        let mut radii: Vec<u32> = if hi_i >= lo_i {
            (lo_i..=hi_i).collect()
        } else {
            Vec::new()
        };
        let fallback = radii.is_empty();
        if fallback {
            radii.push(center.round().max(1.0) as u32);
        }
        Window {
            center,
            rel_half_width: rhw,
            paper_norm: 2.0 / base.powf(1.0 - self.gamma),
            radii,
            fallback,
        }
    }

    /// Window for X_{r_k}.
    pub fn window_at(&self, k: usize) -> Result<Window> {
        let e = self.entry(k)?;
        Ok(self.window(e.r, e.r))
    }

    /// Window for X_{r_{k,+}} (half-width still set by r_k).
    pub fn window_plus(&self, k: usize) -> Result<Window> {
        let e = self.entry(k)?;
        Ok(self.window(e.r_plus, e.r))
    }

    /// Window for X_{r_{k,-}} (half-width still set by r_k).
    pub fn window_minus(&self, k: usize) -> Result<Window> {
        let e = self.entry(k)?;
        Ok(self.window(e.r_minus, e.r))
    }

    /// All integer radii needed to evaluate the scale-k processes and the
    /// increment A_k (which reads the scale-(k+1) window).
    pub fn radii_for_increment(&self, k: usize) -> Result<Vec<u32>> {
        let mut radii: Vec<u32> = self
            .window_at(k)?
            .radii
            .into_iter()
            .chain(self.window_plus(k)?.radii)
            .chain(self.window_minus(k)?.radii)
            .chain(self.window_at(k + 1)?.radii)
            .collect();
        radii.sort_unstable();
        radii.dedup();
        Ok(radii)
    }
}

/// A window of integer circle radii with both the paper normalization and
/// the actual count used (empty windows fall back to the nearest radius and
/// are flagged).
#[derive(Debug, Clone)]
pub struct Window {
    pub center: f64,
    pub rel_half_width: f64,
    /// (½·base^{1-γ})^{-1}: the stated width normalization.
    pub paper_norm: f64,
    pub radii: Vec<u32>,
    pub fallback: bool,
}

impl Window {
    /// Weight per radius actually used: 1/count, so window averages of a
    /// constant are exact. The paper normalization is recorded alongside.
    pub fn actual_norm(&self) -> f64 {
        1.0 / self.radii.len() as f64
    }
}

/// Harmonic-measure weights of the circle of integer radius `radius` seen
/// from the center, stored as offsets from the center.
#[derive(Debug, Clone)]
pub struct CircleRow {
    pub radius: u32,
    pub entries: Vec<(i32, i32, f64)>,
}

/// Cache of circle rows; rows are translation-invariant so one solve per
/// radius serves every center.
#[derive(Debug, Clone, Default)]
pub struct CirclePack {
    rows: HashMap<u32, Arc<CircleRow>>,
}

impl CirclePack {
    /// Compute the harmonic-measure rows for the given radii (independent
    /// solves, run concurrently).
    pub fn build(radii: &[u32]) -> Result<CirclePack> {
        let mut unique: Vec<u32> = radii.to_vec();
        unique.sort_unstable();
        unique.dedup();
        let rows = par::par_map_slice(&unique, |&r| -> Result<(u32, Arc<CircleRow>)> {
            let ball = Domain::ball(Vertex::ORIGIN, r as f64)?;
            let hm = harmonic_measure(&ball, Vertex::ORIGIN)?;
            let entries = hm
                .weights
                .into_iter()
                .map(|(y, w)| (y.x, y.y, w))
                .collect();
            Ok((r, Arc::new(CircleRow { radius: r, entries })))
        });
        let mut map = HashMap::new();
        for row in rows {
            let (r, row) = row?;
            map.insert(r, row);
        }
        Ok(CirclePack { rows: map })
    }

    pub fn row(&self, radius: u32) -> Result<&Arc<CircleRow>> {
        self.rows
            .get(&radius)
            .ok_or_else(|| Error::InvalidParameter(format!("circle radius {radius} not in pack")))
    }

    pub fn ensure(&mut self, radii: &[u32]) -> Result<()> {
        let missing: Vec<u32> = radii
            .iter()
            .copied()
            .filter(|r| !self.rows.contains_key(r))
            .collect();
        if !missing.is_empty() {
            let built = CirclePack::build(&missing)?;
            self.rows.extend(built.rows);
        }
        Ok(())
    }
}

fn read_field(field: &FieldConfig, v: Vertex, radius: f64) -> Result<f64> {
    field
        .value_or_extension(v)
        .map_err(|_| Error::BallEscapesDomain { center: v, radius })
}

/// Circle average C_R(v, φ) = Σ_y a_{B_R(v)}(v,y) φ(y). Square-domain fields
/// use the zero-extension convention outside the square; ball-domain fields
/// must contain the circle.
pub fn circle_average(
    field: &FieldConfig,
    v: Vertex,
    radius: u32,
    pack: &CirclePack,
) -> Result<f64> {
    let row = pack.row(radius)?;
    let mut acc = 0.0;
    for &(dx, dy, w) in &row.entries {
        acc += w * read_field(field, v.offset(dx, dy), radius as f64)?;
    }
    Ok(acc)
}

fn window_average(
    field: &FieldConfig,
    v: Vertex,
    window: &Window,
    pack: &CirclePack,
) -> Result<f64> {
    let mut acc = 0.0;
    for &r in &window.radii {
        acc += circle_average(field, v, r, pack)?;
    }
    Ok(acc * window.actual_norm())
}

/// The harmonic-average processes at one scale: X_{r_k}, X_{r_{k,±}}, the
/// increment A_k = X_{r_{k+1}} - X_{r_{k,-}} and the boundary-layer error
/// 𝓔_k = X_{r_k} - X_{r_{k,-}}.
#[derive(Debug, Clone, Copy)]
pub struct HarmonicAverageSample {
    pub x: f64,
    pub x_plus: f64,
    pub x_minus: f64,
    pub x_next: f64,
    pub a: f64,
    pub e: f64,
}

pub fn x_process(
    field: &FieldConfig,
    v: Vertex,
    k: usize,
    ladder: &ScaleLadder,
    pack: &CirclePack,
) -> Result<HarmonicAverageSample> {
    let x = window_average(field, v, &ladder.window_at(k)?, pack)?;
    let x_plus = window_average(field, v, &ladder.window_plus(k)?, pack)?;
    let x_minus = window_average(field, v, &ladder.window_minus(k)?, pack)?;
    let x_next = window_average(field, v, &ladder.window_at(k + 1)?, pack)?;
    Ok(HarmonicAverageSample {
        x,
        x_plus,
        x_minus,
        x_next,
        a: x_next - x_minus,
        e: x - x_minus,
    })
}

/// Signed vertex weights representing A_k as Σ_y ρ(v,y) φ(y): the averaged
/// harmonic measures of the scale-(k+1) window minus those of the r_{k,-}
/// window. Total mass 0; each signed part has mass 1.
#[derive(Debug, Clone)]
pub struct AnnulusWeights {
    pub center: Vertex,
    pub k: usize,
    /// (vertex, weight), sorted by vertex for deterministic evaluation.
    pub entries: Vec<(Vertex, f64)>,
    pub fallback: bool,
}

impl AnnulusWeights {
    pub fn total(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w).sum()
    }

    pub fn positive_mass(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w.max(0.0)).sum()
    }

    pub fn negative_mass(&self) -> f64 {
        self.entries.iter().map(|(_, w)| (-w).max(0.0)).sum()
    }

    pub fn l1_norm(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w.abs()).sum()
    }

    /// Evaluate A_k = Σ ρ·φ on a configuration.
    pub fn apply(&self, field: &FieldConfig) -> Result<f64> {
        let mut acc = 0.0;
        for &(y, w) in &self.entries {
            acc += w * read_field(field, y, 0.0)?;
        }
        Ok(acc)
    }

    /// All weight vertices must be stored sites of the domain (needed when a
    /// non-zero boundary forbids the zero-extension convention).
    pub fn check_support(&self, domain: &Domain) -> Result<()> {
        for &(y, _) in &self.entries {
            if domain.site_index(y).is_none() {
                return Err(Error::OutsideDomain(y));
            }
        }
        Ok(())
    }

    /// Weight vector as a full-length site vector on a domain. Weights that
    /// fall outside a square domain multiply φ = 0 and drop out.
    pub fn to_site_vector(&self, domain: &Domain) -> Result<Vec<f64>> {
        let mut w = vec![0.0; domain.n_sites()];
        for &(y, weight) in &self.entries {
            match domain.site_index(y) {
                Some(s) => w[s] += weight,
                None => match domain.kind() {
                    DomainKind::Rect { .. } => {}
                    DomainKind::Ball { .. } => return Err(Error::OutsideDomain(y)),
                },
            }
        }
        Ok(w)
    }
}

/// The window-averaged harmonic-measure weights of X at one scale, as a
/// full-length site vector on `domain` (zero-extension truncation applies on
/// squares). Var(X) under the Gaussian is the Green quadratic form of this.
pub fn window_weight_vector(
    domain: &Domain,
    v: Vertex,
    window: &Window,
    pack: &CirclePack,
) -> Result<Vec<f64>> {
    let mut w = vec![0.0; domain.n_sites()];
    let norm = window.actual_norm();
    for &r in &window.radii {
        let row = pack.row(r)?;
        for &(dx, dy, weight) in &row.entries {
            let y = v.offset(dx, dy);
            match domain.site_index(y) {
                Some(s) => w[s] += norm * weight,
                None => match domain.kind() {
                    DomainKind::Rect { .. } => {}
                    DomainKind::Ball { .. } => return Err(Error::OutsideDomain(y)),
                },
            }
        }
    }
    Ok(w)
}

pub fn rho_weights(
    v: Vertex,
    k: usize,
    ladder: &ScaleLadder,
    pack: &CirclePack,
) -> Result<AnnulusWeights> {
    let plus_window = ladder.window_at(k + 1)?;
    let minus_window = ladder.window_minus(k)?;
    let mut map: HashMap<Vertex, f64> = HashMap::new();
    for (window, sign) in [(&plus_window, 1.0), (&minus_window, -1.0)] {
        let norm = window.actual_norm();
        for &r in &window.radii {
            let row = pack.row(r)?;
            for &(dx, dy, w) in &row.entries {
                *map.entry(v.offset(dx, dy)).or_insert(0.0) += sign * norm * w;
            }
        }
    }
    let mut entries: Vec<(Vertex, f64)> = map.into_iter().collect();
    entries.sort_by_key(|&(y, _)| (y.x, y.y));
    Ok(AnnulusWeights {
        center: v,
        k,
        entries,
        fallback: plus_window.fallback || minus_window.fallback,
    })
}

/// Max residual of |Σ ρ h| over random discrete-harmonic h, reported against
/// the tolerance 1e-8·‖ρ‖₁·‖h‖_∞.
#[derive(Debug, Clone)]
pub struct AnnihilationReport {
    /// max over trials of |Σρh| / ‖h‖_∞.
    pub max_residual: f64,
    /// 1e-8·‖ρ‖₁ (per unit ‖h‖_∞).
    pub max_allowed: f64,
    pub trials: usize,
}

pub fn check_harmonic_annihilation(
    weights: &AnnulusWeights,
    ladder: &ScaleLadder,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<AnnihilationReport> {
    let r_sup = ladder.radii_for_increment(k)?.into_iter().max().unwrap() as f64;
    let ball = Domain::ball(weights.center, r_sup + 1.5)?;
    let l1 = weights.l1_norm();
    let residuals = par::par_map_range(trials, |t| -> Result<f64> {
        let mut rng = stats::substream(seed, &[0x4841524d, t as u64]);
        let mut boundary = vec![0.0; ball.n_sites()];
        let mut hmax = 0.0f64;
        for s in ball.pinned_sites() {
            let x: f64 = rand::Rng::gen_range(&mut rng, -1.0..1.0);
            boundary[s] = x;
            hmax = hmax.max(x.abs());
        }
        let h = crate::elliptic::harmonic_extension(&ball, &boundary)?;
        let field = FieldConfig::from_values(&ball, h);
        let resid = weights.apply(&field)?.abs();
        Ok(resid / hmax.max(1e-300))
    });
    let mut max_res = 0.0f64;
    for r in residuals {
        max_res = max_res.max(r?);
    }
    Ok(AnnihilationReport {
        max_residual: max_res,
        max_allowed: 1e-8 * l1,
        trials,
    })
}

/// Two-sample distributional probe of boundary decoupling: the law of
/// A_k(0,·) under boundary data f versus zero boundary data, compared by a
/// Kolmogorov-Smirnov distance with a permutation p-value.
#[derive(Debug, Clone)]
pub struct CouplingReport {
    pub ks_distance: f64,
    pub p_value: f64,
    pub n_per_ensemble: usize,
    pub boundary_max: f64,
    pub hypothesis_limit: f64,
    pub samples_f: Vec<f64>,
    pub samples_zero: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn coupling_probe(
    domain: &Arc<Domain>,
    bc: &BoundaryCondition,
    pot: &Potential,
    k: usize,
    ladder: &ScaleLadder,
    pack: &CirclePack,
    n_samples: usize,
    params: &McmcParams,
) -> Result<CouplingReport> {
    bc.check_decoupling_hypothesis(domain)?;
    let center = crate::sampler::center_vertex(domain);
    let rho = rho_weights(center, k, ladder, pack)?;
    if bc.max_abs(domain) != 0.0 || matches!(domain.kind(), DomainKind::Ball { .. }) {
        rho.check_support(domain)?;
    }
    let zero = BoundaryCondition::zero(domain);
    let extract = |f: &FieldConfig| rho.apply(f).expect("rho support checked");
    let (a, b) = if pot.is_quadratic() {
        let a = run_exact_gaussian(domain, bc, n_samples, params.seed, extract)?;
        let b = run_exact_gaussian(domain, &zero, n_samples, params.seed ^ 0x5a5a, extract)?;
        (a, b)
    } else {
        let mut pa = *params;
        pa.n_samples = n_samples;
        let ra = run_mcmc(domain, bc, pot, &pa, extract)?;
        let mut pb = pa;
        pb.seed = pa.seed ^ 0x5a5a;
        let rb = run_mcmc(domain, &zero, pot, &pb, extract)?;
        (ra.samples, rb.samples)
    };
    let ks = stats::ks_statistic(&a, &b);
    let p = stats::ks_permutation_pvalue(&a, &b, 400, params.seed ^ 0xc0de);
    Ok(CouplingReport {
        ks_distance: ks,
        p_value: p,
        n_per_ensemble: n_samples,
        boundary_max: bc.max_abs(domain),
        hypothesis_limit: 2.0 * domain.diameter().ln().powi(2),
        samples_f: a,
        samples_zero: b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elliptic::green_quadratic_form;
    use crate::sampler::exact_gaussian_sample;

    fn small_pack(radii: &[u32]) -> CirclePack {
        CirclePack::build(radii).unwrap()
    }

    #[test]
    fn ladder_shape() {
        let l = ScaleLadder::new(64, 0.5, 8.0).unwrap();
        assert_eq!(l.entries[0].r, 64.0);
        assert!((l.entries[1].r - 64.0 / std::f64::consts::E).abs() < 1e-12);
        assert_eq!(l.k_max(), 2); // 64, 23.5, 8.66; 3.19 < 8
        for e in &l.entries {
            assert!(e.r_minus < e.r && e.r < e.r_plus);
            assert!(e.r >= 8.0);
        }
        assert!(ScaleLadder::new(64, 0.0, 8.0).is_err());
        assert!(ScaleLadder::new(64, 1.0, 8.0).is_err());
        assert!(ScaleLadder::new(4, 0.5, 8.0).is_err());
    }

    #[test]
    fn window_normalizations() {
        let l = ScaleLadder::new(64, 0.5, 8.0).unwrap();
        let w = l.window_at(1).unwrap();
        assert!(!w.radii.is_empty());
        assert!((w.actual_norm() * w.radii.len() as f64 - 1.0).abs() < 1e-15);
        // Paper normalization recorded: (½ r_1^{1-γ})^{-1}.
        let r1 = l.entries[1].r;
        assert!((w.paper_norm - 2.0 / r1.powf(0.5)).abs() < 1e-12);
    }

    #[test]
    fn circle_average_constant_and_linear() {
        let pack = small_pack(&[1, 2, 3, 5]);
        let d = Domain::square(8).unwrap();
        let c = FieldConfig::from_values(&d, vec![2.5; d.n_sites()]);
        for &r in &[1u32, 2, 3, 5] {
            let avg = circle_average(&c, Vertex::ORIGIN, r, &pack).unwrap();
            assert!((avg - 2.5).abs() < 1e-9, "r={r}: {avg}");
        }
        let mut vals = vec![0.0; d.n_sites()];
        for s in 0..d.n_sites() {
            vals[s] = d.site_vertex(s).x as f64;
        }
        let lin = FieldConfig::from_values(&d, vals);
        for &r in &[1u32, 2, 3, 5] {
            let avg = circle_average(&lin, Vertex::ORIGIN, r, &pack).unwrap();
            assert!(avg.abs() < 1e-9, "r={r}: {avg}");
        }
    }

    #[test]
    fn ball_field_escape_is_error() {
        let pack = small_pack(&[4]);
        let b = Domain::ball(Vertex::ORIGIN, 3.0).unwrap();
        let f = FieldConfig::zeros(&b);
        assert!(circle_average(&f, Vertex::ORIGIN, 4, &pack).is_err());
    }

    #[test]
    fn x_process_on_constant_field() {
        let l = ScaleLadder::new(32, 0.5, 4.0).unwrap();
        let radii = l.radii_for_increment(1).unwrap();
        let pack = small_pack(&radii);
        let d = Domain::square(32).unwrap();
        let c = FieldConfig::from_values(&d, vec![1.75; d.n_sites()]);
        let s = x_process(&c, Vertex::ORIGIN, 1, &l, &pack).unwrap();
        for v in [s.x, s.x_plus, s.x_minus, s.x_next] {
            assert!((v - 1.75).abs() < 1e-9);
        }
        assert!(s.a.abs() < 1e-9);
        assert!(s.e.abs() < 1e-9);
    }

    #[test]
    fn rho_reproduces_x_difference_exactly() {
        let l = ScaleLadder::new(32, 0.5, 4.0).unwrap();
        let radii = l.radii_for_increment(1).unwrap();
        let pack = small_pack(&radii);
        let d = Domain::square(32).unwrap();
        let rho = rho_weights(Vertex::ORIGIN, 1, &l, &pack).unwrap();
        assert!(rho.total().abs() < 1e-8);
        assert!((rho.positive_mass() - 1.0).abs() < 1e-8);
        assert!((rho.negative_mass() - 1.0).abs() < 1e-8);

        let batch = exact_gaussian_sample(&d, &BoundaryCondition::zero(&d), 8, 99).unwrap();
        for f in &batch.configs {
            let s = x_process(f, Vertex::ORIGIN, 1, &l, &pack).unwrap();
            let via_rho = rho.apply(f).unwrap();
            assert!(
                (via_rho - s.a).abs() <= 1e-12 * (1.0 + s.a.abs()),
                "{via_rho} vs {}",
                s.a
            );
        }
    }

    #[test]
    fn harmonic_annihilation_small_scale() {
        let l = ScaleLadder::new(32, 0.5, 4.0).unwrap();
        let radii = l.radii_for_increment(1).unwrap();
        let pack = small_pack(&radii);
        let rho = rho_weights(Vertex::ORIGIN, 1, &l, &pack).unwrap();

        // Constants and linear functions are annihilated essentially exactly.
        let big = Domain::ball(Vertex::ORIGIN, 16.0).unwrap();
        let konst = FieldConfig::from_values(&big, vec![3.0; big.n_sites()]);
        assert!(rho.apply(&konst).unwrap().abs() < 1e-10);
        let mut lin_vals = vec![0.0; big.n_sites()];
        for s in 0..big.n_sites() {
            lin_vals[s] = big.site_vertex(s).y as f64;
        }
        let lin = FieldConfig::from_values(&big, lin_vals);
        assert!(rho.apply(&lin).unwrap().abs() < 1e-10);

        let rep = check_harmonic_annihilation(&rho, &l, 1, 25, 7).unwrap();
        assert!(
            rep.max_residual <= rep.max_allowed,
            "residual {} vs allowed {}",
            rep.max_residual,
            rep.max_allowed
        );
    }

    #[test]
    fn gaussian_increment_variance_matches_quadratic_form() {
        let l = ScaleLadder::new(32, 0.5, 4.0).unwrap();
        let radii = l.radii_for_increment(1).unwrap();
        let pack = small_pack(&radii);
        let d = Domain::square(32).unwrap();
        let rho = rho_weights(Vertex::ORIGIN, 1, &l, &pack).unwrap();
        let w = rho.to_site_vector(&d).unwrap();
        let oracle = green_quadratic_form(&d, &w).unwrap();

        let vals = run_exact_gaussian(&d, &BoundaryCondition::zero(&d), 6_000, 3, |f| {
            rho.apply(f).unwrap()
        })
        .unwrap();
        let est = stats::variance_estimate(&vals);
        assert!(
            (est.estimate - oracle).abs() < 3.0 * est.se,
            "MC {est:?} vs oracle {oracle}"
        );
    }

    #[test]
    fn coupling_probe_null_and_harmonic_shift() {
        let l = ScaleLadder::new(32, 0.5, 4.0).unwrap();
        let radii = l.radii_for_increment(1).unwrap();
        let pack = small_pack(&radii);
        let d = Domain::ball(Vertex::ORIGIN, 32.0).unwrap();
        let pot = Potential::quadratic();
        let params = McmcParams {
            n_samples: 400,
            burn_in: 0,
            thinning: 0,
            seed: 5,
            chains: 1,
            overrelax: 0,
        };

        let zero = BoundaryCondition::zero(&d);
        let rep = coupling_probe(&d, &zero, &pot, 1, &l, &pack, 400, &params).unwrap();
        assert!(rep.p_value > 0.005, "null p = {}", rep.p_value);

        // Gaussian + harmonic boundary data: A_k annihilates the harmonic
        // mean shift, so the two laws agree exactly.
        let bc = BoundaryCondition::from_fn(&d, |v| 0.05 * (v.x - v.y) as f64);
        let rep = coupling_probe(&d, &bc, &pot, 1, &l, &pack, 400, &params).unwrap();
        assert!(rep.p_value > 0.005, "harmonic-shift p = {}", rep.p_value);
        assert!(rep.boundary_max <= rep.hypothesis_limit);

        let limit = 2.0 * d.diameter().ln().powi(2);
        let bad = BoundaryCondition::from_fn(&d, |_| limit + 1.0);
        assert!(coupling_probe(&d, &bad, &pot, 1, &l, &pack, 50, &params).is_err());
    }
}
