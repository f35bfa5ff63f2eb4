//! Lattice geometry: squares Q_N, lattice balls B_R(v), triadic cubes,
//! directed edges, and field configurations.
//!
//! Sites of a domain are stored parity-major (all even-parity sites, then all
//! odd), with free sites ahead of pinned ones inside each parity class. The
//! checkerboard heat-bath exploits this layout: a half-sweep writes one parity
//! class while reading only the other, so the two halves of the site array can
//! be split mutably without copies.

use crate::{Error, Result};
use std::sync::Arc;

/// A lattice vertex of ℤ².
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Vertex {
    pub x: i32,
    pub y: i32,
}

impl Vertex {
    pub const fn new(x: i32, y: i32) -> Self {
        Vertex { x, y }
    }

    pub const ORIGIN: Vertex = Vertex::new(0, 0);

    /// The four nearest neighbors, ordered +x, -x, +y, -y.
    pub fn neighbors(self) -> [Vertex; 4] {
        [
            Vertex::new(self.x + 1, self.y),
            Vertex::new(self.x - 1, self.y),
            Vertex::new(self.x, self.y + 1),
            Vertex::new(self.x, self.y - 1),
        ]
    }

    pub fn offset(self, dx: i32, dy: i32) -> Vertex {
        Vertex::new(self.x + dx, self.y + dy)
    }

    /// Squared Euclidean norm of the offset from `other`.
    pub fn dist2(self, other: Vertex) -> i64 {
        let dx = (self.x - other.x) as i64;
        let dy = (self.y - other.y) as i64;
        dx * dx + dy * dy
    }

    /// ℓ¹ norm (diamond radius).
    pub fn l1(self) -> i64 {
        self.x.unsigned_abs() as i64 + self.y.unsigned_abs() as i64
    }

    fn parity(self) -> usize {
        (self.x + self.y).rem_euclid(2) as usize
    }
}

/// A directed nearest-neighbor edge with `head - tail ∈ {e₁, e₂}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub tail: Vertex,
    pub head: Vertex,
}

impl Edge {
    /// Direction index: 0 for e₁ = (1,0), 1 for e₂ = (0,1).
    pub fn direction(&self) -> usize {
        if self.head.x == self.tail.x + 1 {
            0
        } else {
            1
        }
    }
}

/// Sentinel for "no neighbor site" (vertex outside the stored site set).
pub const NO_SITE: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq)]
pub enum DomainKind {
    /// All vertices of `[x0,x1] × [y0,y1]`; the outermost ring is pinned.
    Rect { x0: i32, y0: i32, x1: i32, y1: i32 },
    /// `B_R(v) = {y : |v-y|² < R²}`; every ball vertex is free and the outer
    /// vertex boundary (the exit set of simple random walk) is pinned.
    Ball { center: Vertex, radius: f64 },
}

/// A finite lattice domain with a fixed site ordering, neighbor table and
/// edge lists. Immutable after construction; shared across threads via `Arc`.
#[derive(Debug)]
pub struct Domain {
    kind: DomainKind,
    sites: Vec<Vertex>,
    /// site -> neighbor sites, NO_SITE where the neighbor is not stored.
    neighbors: Vec<[u32; 4]>,
    /// Directed axis-positive edges with both endpoints among `vertices()`.
    edges: Vec<(u32, u32)>,
    /// Directed edges with both endpoints among sites and at least one free
    /// endpoint; these carry the interaction energy that the sampler sees.
    energy_edges: Vec<(u32, u32)>,
    n_even_free: usize,
    n_even: usize,
    n_odd_free: usize,
    bbox: BBox,
    lookup: Vec<u32>,
}

#[derive(Debug, Clone, Copy)]
struct BBox {
    x0: i32,
    y0: i32,
    width: i32,
    height: i32,
}

impl BBox {
    fn index(&self, v: Vertex) -> Option<usize> {
        let dx = v.x - self.x0;
        let dy = v.y - self.y0;
        if dx < 0 || dy < 0 || dx >= self.width || dy >= self.height {
            None
        } else {
            Some((dx * self.height + dy) as usize)
        }
    }
}

impl Domain {
    /// The square Q_N = [-N,N]² with its outermost ring pinned.
    pub fn square(n: i32) -> Result<Arc<Domain>> {
        if n < 1 {
            return Err(Error::DegenerateDomain(format!(
                "square half-width {n} leaves no interior"
            )));
        }
        Domain::rect(-n, -n, n, n)
    }

    /// A general axis-aligned rectangle; must contain at least one interior
    /// vertex.
    pub fn rect(x0: i32, y0: i32, x1: i32, y1: i32) -> Result<Arc<Domain>> {
        if x1 - x0 < 2 || y1 - y0 < 2 {
            return Err(Error::DegenerateDomain(format!(
                "rectangle [{x0},{x1}]x[{y0},{y1}] has no interior"
            )));
        }
        let mut vertices = Vec::with_capacity(((x1 - x0 + 1) * (y1 - y0 + 1)) as usize);
        for x in x0..=x1 {
            for y in y0..=y1 {
                vertices.push(Vertex::new(x, y));
            }
        }
        let pinned = |v: Vertex| v.x == x0 || v.x == x1 || v.y == y0 || v.y == y1;
        let classified: Vec<(Vertex, bool)> = vertices.iter().map(|&v| (v, pinned(v))).collect();
        Ok(Arc::new(Self::build(
            DomainKind::Rect { x0, y0, x1, y1 },
            classified,
        )))
    }

    /// The lattice ball B_R(v) with strict-inequality membership. The pinned
    /// set is the outer vertex boundary: every vertex outside the ball at
    /// graph distance one from it.
    pub fn ball(center: Vertex, radius: f64) -> Result<Arc<Domain>> {
        if !(radius > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "ball radius must be positive, got {radius}"
            )));
        }
        let r2 = radius * radius;
        let reach = radius.ceil() as i32;
        let mut inside = Vec::new();
        for x in -reach..=reach {
            for y in -reach..=reach {
                let v = center.offset(x, y);
                if (v.dist2(center) as f64) < r2 {
                    inside.push(v);
                }
            }
        }
        debug_assert!(!inside.is_empty());
        let in_ball = |v: Vertex| (v.dist2(center) as f64) < r2;
        let mut ring = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for &v in &inside {
            for w in v.neighbors() {
                if !in_ball(w) && seen.insert(w) {
                    ring.push(w);
                }
            }
        }
        let mut classified: Vec<(Vertex, bool)> =
            inside.into_iter().map(|v| (v, false)).collect();
        classified.extend(ring.into_iter().map(|v| (v, true)));
        Ok(Arc::new(Self::build(
            DomainKind::Ball { center, radius },
            classified,
        )))
    }

    fn build(kind: DomainKind, mut classified: Vec<(Vertex, bool)>) -> Domain {
        // Parity-major, free before pinned, then row-major by (x, y).
        classified.sort_by_key(|&(v, pinned)| (v.parity(), pinned, v.x, v.y));
        let sites: Vec<Vertex> = classified.iter().map(|&(v, _)| v).collect();
        let n_even = classified.iter().filter(|&&(v, _)| v.parity() == 0).count();
        let n_even_free = classified
            .iter()
            .filter(|&&(v, p)| v.parity() == 0 && !p)
            .count();
        let n_odd_free = classified
            .iter()
            .filter(|&&(v, p)| v.parity() == 1 && !p)
            .count();

        let xs: Vec<i32> = sites.iter().map(|v| v.x).collect();
        let ys: Vec<i32> = sites.iter().map(|v| v.y).collect();
        let bbox = BBox {
            x0: *xs.iter().min().unwrap(),
            y0: *ys.iter().min().unwrap(),
            width: xs.iter().max().unwrap() - xs.iter().min().unwrap() + 1,
            height: ys.iter().max().unwrap() - ys.iter().min().unwrap() + 1,
        };
        let mut lookup = vec![NO_SITE; (bbox.width * bbox.height) as usize];
        for (i, &v) in sites.iter().enumerate() {
            lookup[bbox.index(v).unwrap()] = i as u32;
        }
        let site_of = |v: Vertex| -> u32 {
            bbox.index(v).map_or(NO_SITE, |i| lookup[i])
        };

        let neighbors: Vec<[u32; 4]> = sites
            .iter()
            .map(|&v| {
                let nb = v.neighbors();
                [
                    site_of(nb[0]),
                    site_of(nb[1]),
                    site_of(nb[2]),
                    site_of(nb[3]),
                ]
            })
            .collect();

        let is_free = |s: u32| -> bool {
            let s = s as usize;
            let parity = sites[s].parity();
            if parity == 0 {
                s < n_even_free
            } else {
                s >= n_even && s < n_even + n_odd_free
            }
        };
        let is_vertex = |s: u32| -> bool {
            match kind {
                DomainKind::Rect { .. } => true,
                DomainKind::Ball { .. } => is_free(s),
            }
        };

        let mut edges = Vec::new();
        let mut energy_edges = Vec::new();
        for (i, &v) in sites.iter().enumerate() {
            let i = i as u32;
            for head in [v.offset(1, 0), v.offset(0, 1)] {
                let j = site_of(head);
                if j == NO_SITE {
                    continue;
                }
                if is_vertex(i) && is_vertex(j) {
                    edges.push((i, j));
                }
                if is_free(i) || is_free(j) {
                    energy_edges.push((i, j));
                }
            }
        }

        Domain {
            kind,
            sites,
            neighbors,
            edges,
            energy_edges,
            n_even_free,
            n_even,
            n_odd_free,
            bbox,
            lookup,
        }
    }

    pub fn kind(&self) -> &DomainKind {
        &self.kind
    }

    /// Total number of stored sites (vertices plus, for balls, the exit ring).
    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn n_free(&self) -> usize {
        self.n_even_free + self.n_odd_free
    }

    pub fn site_vertex(&self, site: usize) -> Vertex {
        self.sites[site]
    }

    pub fn site_index(&self, v: Vertex) -> Option<usize> {
        let s = self.bbox.index(v).map(|i| self.lookup[i])?;
        if s == NO_SITE {
            None
        } else {
            Some(s as usize)
        }
    }

    pub fn is_free_site(&self, site: usize) -> bool {
        if site < self.n_even {
            site < self.n_even_free
        } else {
            site - self.n_even < self.n_odd_free
        }
    }

    pub fn neighbor_sites(&self, site: usize) -> [u32; 4] {
        self.neighbors[site]
    }

    /// Free sites of even parity occupy `0..n_even_free`.
    pub fn even_free(&self) -> std::ops::Range<usize> {
        0..self.n_even_free
    }

    /// Free sites of odd parity occupy `n_even..n_even + n_odd_free`.
    pub fn odd_free(&self) -> std::ops::Range<usize> {
        self.n_even..self.n_even + self.n_odd_free
    }

    /// Where the even/odd split sits in the site array.
    pub fn even_count(&self) -> usize {
        self.n_even
    }

    pub fn free_sites(&self) -> impl Iterator<Item = usize> + '_ {
        self.even_free().chain(self.odd_free())
    }

    pub fn pinned_sites(&self) -> impl Iterator<Item = usize> + '_ {
        (self.n_even_free..self.n_even).chain(self.n_even + self.n_odd_free..self.sites.len())
    }

    /// Domain vertices in the sense of the domain type: all rectangle
    /// vertices, or the ball vertices without the exit ring.
    pub fn vertices(&self) -> Vec<Vertex> {
        match self.kind {
            DomainKind::Rect { .. } => self.sites.clone(),
            DomainKind::Ball { .. } => self.free_sites().map(|s| self.sites[s]).collect(),
        }
    }

    /// The pinned vertex set: the outermost ring of a rectangle, or the exit
    /// ring of a ball.
    pub fn boundary_vertices(&self) -> Vec<Vertex> {
        self.pinned_sites().map(|s| self.sites[s]).collect()
    }

    pub fn interior_vertices(&self) -> Vec<Vertex> {
        self.free_sites().map(|s| self.sites[s]).collect()
    }

    /// Directed axis-positive edges with both endpoints among `vertices()`.
    pub fn edges(&self) -> Vec<Edge> {
        self.edges
            .iter()
            .map(|&(i, j)| Edge {
                tail: self.sites[i as usize],
                head: self.sites[j as usize],
            })
            .collect()
    }

    pub(crate) fn edge_sites(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub(crate) fn energy_edge_sites(&self) -> &[(u32, u32)] {
        &self.energy_edges
    }

    /// Graph diameter proxy used by the decoupling hypothesis check.
    pub fn diameter(&self) -> f64 {
        match self.kind {
            DomainKind::Rect { x0, y0, x1, y1 } => ((x1 - x0).max(y1 - y0)) as f64,
            DomainKind::Ball { radius, .. } => 2.0 * radius,
        }
    }

    /// JSON descriptor for provenance records.
    pub fn descriptor(&self) -> serde_json::Value {
        match self.kind {
            DomainKind::Rect { x0, y0, x1, y1 } => {
                if x0 == -x1 && y0 == -y1 && x1 == y1 {
                    serde_json::json!({"kind": "square", "n": x1})
                } else {
                    serde_json::json!({"kind": "rect", "x0": x0, "y0": y0, "x1": x1, "y1": y1})
                }
            }
            DomainKind::Ball { center, radius } => {
                serde_json::json!({"kind": "ball", "center": [center.x, center.y], "r": radius})
            }
        }
    }
}

/// Triadic cube □_m = [-3^m, 3^m]² shifted by `center`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TriadicCube {
    pub level: u32,
    pub center: Vertex,
}

impl TriadicCube {
    pub fn new(level: u32, center: Vertex) -> Self {
        TriadicCube { level, center }
    }

    pub fn half_width(&self) -> i32 {
        3i32.pow(self.level)
    }

    pub fn side(&self) -> usize {
        2 * self.half_width() as usize + 1
    }

    pub fn vertex_count(&self) -> usize {
        self.side() * self.side()
    }

    pub fn contains(&self, v: Vertex) -> bool {
        (v.x - self.center.x).abs() <= self.half_width()
            && (v.y - self.center.y).abs() <= self.half_width()
    }

    /// The cube as a solvable domain (pinned outer ring).
    pub fn domain(&self) -> Result<Arc<Domain>> {
        let h = self.half_width();
        Domain::rect(
            self.center.x - h,
            self.center.y - h,
            self.center.x + h,
            self.center.y + h,
        )
    }
}

/// One cell of a triadic partition: the inclusive vertex rectangle
/// `[x0,x1] × [y0,y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellRect {
    pub x0: i32,
    pub y0: i32,
    pub x1: i32,
    pub y1: i32,
}

impl CellRect {
    pub fn contains(&self, v: Vertex) -> bool {
        v.x >= self.x0 && v.x <= self.x1 && v.y >= self.y0 && v.y <= self.y1
    }

    pub fn vertex_count(&self) -> usize {
        ((self.x1 - self.x0 + 1) * (self.y1 - self.y0 + 1)) as usize
    }

    pub fn vertices(&self) -> impl Iterator<Item = Vertex> + '_ {
        let (x0, x1, y0, y1) = (self.x0, self.x1, self.y0, self.y1);
        (x0..=x1).flat_map(move |x| (y0..=y1).map(move |y| Vertex::new(x, y)))
    }
}

/// Split `[-3^n, 3^n]` into `3^(n-m)` contiguous runs of near-equal length.
fn triadic_axis_cuts(n: u32, m: u32) -> Vec<(i32, i32)> {
    let cells = 3i64.pow(n - m);
    let total = 2 * 3i64.pow(n) + 1;
    let base = total / cells;
    let extra = total - base * cells; // < cells, distributed to the last runs
    let mut cuts = Vec::with_capacity(cells as usize);
    let mut lo = -(3i64.pow(n));
    for i in 0..cells {
        let len = base + if i >= cells - extra { 1 } else { 0 };
        cuts.push((lo as i32, (lo + len - 1) as i32));
        lo += len;
    }
    cuts
}

/// Partition □_n into 3^{2(n-m)} rectangular cells of near-triadic side
/// (2·3^m, with one cell per axis one vertex wider since the closed cube has
/// odd side). The cells are pairwise disjoint and cover □_n exactly.
pub fn triadic_partition(n: u32, m: u32) -> Result<Vec<CellRect>> {
    if m > n {
        return Err(Error::InvalidParameter(format!(
            "partition level {m} exceeds parent level {n}"
        )));
    }
    let xs = triadic_axis_cuts(n, m);
    let ys = triadic_axis_cuts(n, m);
    let mut cells = Vec::with_capacity(xs.len() * ys.len());
    for &(x0, x1) in &xs {
        for &(y0, y1) in &ys {
            cells.push(CellRect { x0, y0, x1, y1 });
        }
    }
    Ok(cells)
}

/// A real-valued height function on a domain; `values` is indexed by site.
#[derive(Debug, Clone)]
pub struct FieldConfig {
    pub domain: Arc<Domain>,
    pub values: Vec<f64>,
}

impl FieldConfig {
    pub fn zeros(domain: &Arc<Domain>) -> FieldConfig {
        FieldConfig {
            domain: Arc::clone(domain),
            values: vec![0.0; domain.n_sites()],
        }
    }

    pub fn from_values(domain: &Arc<Domain>, values: Vec<f64>) -> FieldConfig {
        assert_eq!(values.len(), domain.n_sites());
        FieldConfig {
            domain: Arc::clone(domain),
            values,
        }
    }

    /// Value at a vertex that must be a stored site.
    pub fn try_value(&self, v: Vertex) -> Result<f64> {
        self.domain
            .site_index(v)
            .map(|s| self.values[s])
            .ok_or(Error::OutsideDomain(v))
    }

    /// Value with the zero-extension convention of the square-field Gibbs
    /// measure: vertices outside a rectangle domain read 0. Ball fields have
    /// no such convention, so escaping reads are an error.
    pub fn value_or_extension(&self, v: Vertex) -> Result<f64> {
        match self.domain.site_index(v) {
            Some(s) => Ok(self.values[s]),
            None => match self.domain.kind() {
                DomainKind::Rect { .. } => Ok(0.0),
                DomainKind::Ball { .. } => Err(Error::OutsideDomain(v)),
            },
        }
    }

    pub fn value_at_site(&self, site: usize) -> f64 {
        self.values[site]
    }

    /// Max of |φ| over all stored sites.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Gradient along a directed edge, head minus tail.
    pub fn gradient(&self, e: &Edge) -> Result<f64> {
        Ok(self.try_value(e.head)? - self.try_value(e.tail)?)
    }
}

/// Indicator of the good event: max_v |φ(v)| < (log R)².
pub fn event_m_indicator(config: &FieldConfig, r: f64) -> bool {
    config.max_abs() < r.ln().powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn square_counts() {
        let d = Domain::square(1).unwrap();
        assert_eq!(d.vertices().len(), 9);
        assert_eq!(d.boundary_vertices().len(), 8);
        assert_eq!(d.interior_vertices().len(), 1);
        assert_eq!(d.interior_vertices()[0], Vertex::ORIGIN);

        let d = Domain::square(2).unwrap();
        assert_eq!(d.vertices().len(), 25);
        assert_eq!(d.boundary_vertices().len(), 16);
        assert_eq!(d.interior_vertices().len(), 9);
    }

    #[test]
    fn degenerate_square_rejected() {
        assert!(matches!(Domain::square(0), Err(Error::DegenerateDomain(_))));
        assert!(matches!(Domain::square(-3), Err(Error::DegenerateDomain(_))));
    }

    #[test]
    fn ball_small_cases() {
        let b = Domain::ball(Vertex::ORIGIN, 1.0).unwrap();
        assert_eq!(b.vertices(), vec![Vertex::ORIGIN]);
        let mut ring = b.boundary_vertices();
        ring.sort();
        let mut expect = vec![
            Vertex::new(1, 0),
            Vertex::new(-1, 0),
            Vertex::new(0, 1),
            Vertex::new(0, -1),
        ];
        expect.sort();
        assert_eq!(ring, expect);
        assert_eq!(b.edges().len(), 0);

        let b = Domain::ball(Vertex::ORIGIN, 2.0).unwrap();
        assert_eq!(b.vertices().len(), 9);
        // |y|² ∈ {0,1,2} only.
        for v in b.vertices() {
            assert!(v.dist2(Vertex::ORIGIN) < 4);
        }
    }

    #[test]
    fn ball_translation_invariance() {
        let b0 = Domain::ball(Vertex::ORIGIN, 2.0).unwrap();
        let b5 = Domain::ball(Vertex::new(5, 5), 2.0).unwrap();
        let mut v0: Vec<Vertex> = b0.vertices().iter().map(|v| v.offset(5, 5)).collect();
        let mut v5 = b5.vertices();
        v0.sort();
        v5.sort();
        assert_eq!(v0, v5);
    }

    #[test]
    fn ball_radius_rejected() {
        assert!(Domain::ball(Vertex::ORIGIN, 0.0).is_err());
        assert!(Domain::ball(Vertex::ORIGIN, -1.5).is_err());
    }

    #[test]
    fn edge_counts() {
        // 2·(2N+1)·2N axis-positive edges inside Q_N.
        let d = Domain::square(1).unwrap();
        assert_eq!(d.edges().len(), 12);
        let d = Domain::square(2).unwrap();
        assert_eq!(d.edges().len(), 40);
        for e in d.edges() {
            let dx = e.head.x - e.tail.x;
            let dy = e.head.y - e.tail.y;
            assert!((dx, dy) == (1, 0) || (dx, dy) == (0, 1));
        }
    }

    #[test]
    fn boundary_is_adjacent_to_exterior() {
        for d in [Domain::square(3).unwrap(), Domain::ball(Vertex::ORIGIN, 3.2).unwrap()] {
            for v in d.boundary_vertices() {
                let outside = v
                    .neighbors()
                    .iter()
                    .any(|&w| d.site_index(w).is_none() || !d.is_free_site(d.site_index(w).unwrap()));
                assert!(outside, "pinned vertex {v:?} has no non-free neighbor");
            }
            for v in d.interior_vertices() {
                for w in v.neighbors() {
                    assert!(d.site_index(w).is_some(), "free vertex {v:?} misses neighbor {w:?}");
                }
            }
        }
    }

    #[test]
    fn square_boundary_ring_touches_exterior() {
        let d = Domain::square(4).unwrap();
        for v in d.boundary_vertices() {
            assert!(v.neighbors().iter().any(|&w| d.site_index(w).is_none()));
        }
        for v in d.interior_vertices() {
            assert!(v.neighbors().iter().all(|w| d.site_index(*w).is_some()));
        }
    }

    #[test]
    fn triadic_partition_counts() {
        assert_eq!(triadic_partition(2, 2).unwrap().len(), 1);
        assert_eq!(triadic_partition(1, 0).unwrap().len(), 9);
        assert_eq!(triadic_partition(2, 1).unwrap().len(), 9);
        assert!(triadic_partition(1, 2).is_err());
    }

    #[test]
    fn triadic_partition_tiles_parent() {
        for n in 0..=4u32 {
            for m in 0..=n {
                let cells = triadic_partition(n, m).unwrap();
                let cube = TriadicCube::new(n, Vertex::ORIGIN);
                let total: usize = cells.iter().map(|c| c.vertex_count()).sum();
                assert_eq!(total, cube.vertex_count(), "n={n} m={m}");
                // Disjointness via per-vertex membership count on a sample.
                for v in [
                    Vertex::ORIGIN,
                    Vertex::new(3i32.pow(n), 3i32.pow(n)),
                    Vertex::new(-(3i32.pow(n)), 1),
                    Vertex::new(1, -2),
                ] {
                    if cube.contains(v) {
                        let hits = cells.iter().filter(|c| c.contains(v)).count();
                        assert_eq!(hits, 1, "vertex {v:?} in {hits} cells at n={n} m={m}");
                    }
                }
            }
        }
    }

    #[test]
    fn parity_layout_is_consistent() {
        let d = Domain::square(3).unwrap();
        for s in d.even_free() {
            let v = d.site_vertex(s);
            assert_eq!((v.x + v.y).rem_euclid(2), 0);
            assert!(d.is_free_site(s));
        }
        for s in d.odd_free() {
            let v = d.site_vertex(s);
            assert_eq!((v.x + v.y).rem_euclid(2), 1);
            assert!(d.is_free_site(s));
        }
        // Neighbors of free sites always exist and have opposite parity.
        for s in d.free_sites() {
            for nb in d.neighbor_sites(s) {
                assert_ne!(nb, NO_SITE);
                let pv = d.site_vertex(s);
                let nv = d.site_vertex(nb as usize);
                assert_eq!((pv.x + pv.y + nv.x + nv.y).rem_euclid(2), 1);
            }
        }
    }

    #[test]
    fn zero_extension_convention() {
        let d = Domain::square(2).unwrap();
        let f = FieldConfig::zeros(&d);
        assert_eq!(f.value_or_extension(Vertex::new(7, 0)).unwrap(), 0.0);
        let b = Domain::ball(Vertex::ORIGIN, 2.0).unwrap();
        let g = FieldConfig::zeros(&b);
        assert!(g.value_or_extension(Vertex::new(7, 0)).is_err());
    }

    #[test]
    fn event_m_threshold() {
        let d = Domain::square(2).unwrap();
        let mut f = FieldConfig::zeros(&d);
        let r = 64.0;
        assert!(event_m_indicator(&f, r));
        let s = d.site_index(Vertex::ORIGIN).unwrap();
        f.values[s] = r.ln().powi(2) + 1.0;
        assert!(!event_m_indicator(&f, r));
    }

    proptest! {
        #[test]
        fn ball_monotone(r1 in 1.0f64..9.0, dr in 0.0f64..4.0) {
            let small = Domain::ball(Vertex::ORIGIN, r1).unwrap();
            let big = Domain::ball(Vertex::ORIGIN, r1 + dr).unwrap();
            for v in small.vertices() {
                prop_assert!(big.site_index(v).map(|s| big.is_free_site(s)).unwrap_or(false));
            }
        }

        #[test]
        fn square_site_roundtrip(n in 1i32..12, x in -12i32..12, y in -12i32..12) {
            let d = Domain::square(n).unwrap();
            let v = Vertex::new(x, y);
            match d.site_index(v) {
                Some(s) => prop_assert_eq!(d.site_vertex(s), v),
                None => prop_assert!(x.abs() > n || y.abs() > n),
            }
        }
    }
}
