//! Context support sets of the observed field.
//!
//! The context of a site `i` in an observed configuration `x` is the
//! intersection of all L1-connected sets `F` having `i` in their interior and
//! `x ≡ +1` on their boundary, with `i` removed. Since a -1 site in such an
//! `F` (other than `i`) can never lie on its boundary, every qualifying `F`
//! contains the closure of `{i} ∪ neighbors(i)` under "a -1 site brings in
//! all its neighbors", and that closure qualifies itself. [`compute_context`]
//! builds the closure directly; [`brute_force_context`] takes the literal
//! intersection and serves as its oracle.
//!
//! Spins outside the window are unobserved. When the closure needs a site
//! beyond the window the context is reported as truncated.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Configuration, Site, SiteSet, Window, MINUS, PLUS};
use crate::union_find::UnionFind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ContextStatus {
    ResolvedWithinWindow,
    TruncatedByWindow,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Context {
    center: Site,
    /// Empty when truncated.
    members: SiteSet,
    status: ContextStatus,
}

impl Context {
    fn truncated(center: Site) -> Self {
        Context { center, members: SiteSet::new(), status: ContextStatus::TruncatedByWindow }
    }

    pub fn center(&self) -> Site {
        self.center
    }

    pub fn members(&self) -> &SiteSet {
        &self.members
    }

    pub fn status(&self) -> ContextStatus {
        self.status
    }

    pub fn is_resolved(&self) -> bool {
        self.status == ContextStatus::ResolvedWithinWindow
    }

    /// `|C_i(x)|` when resolved.
    pub fn size(&self) -> Option<usize> {
        self.is_resolved().then_some(self.members.len())
    }

    /// The context together with its center.
    pub fn closure(&self) -> SiteSet {
        let mut f = self.members.clone();
        f.insert(self.center);
        f
    }
}

pub fn compute_context(x: &Configuration, i: Site) -> Result<Context> {
    let w = x.window();
    let center = w.index(i).ok_or(Error::SiteOutsideWindow(i))?;
    let spins = x.spins();
    let mut in_f = vec![false; w.len()];
    in_f[center] = true;
    // Sites whose neighbors must all be in F.
    let mut pending = vec![i];
    while let Some(s) = pending.pop() {
        for n in s.neighbor_array() {
            let Some(k) = w.index(n) else {
                return Ok(Context::truncated(i));
            };
            if !in_f[k] {
                in_f[k] = true;
                if spins[k] == MINUS {
                    pending.push(n);
                }
            }
        }
    }
    let members = (0..w.len()).filter(|&k| in_f[k] && k != center).map(|k| w.site(k)).collect();
    Ok(Context { center: i, members, status: ContextStatus::ResolvedWithinWindow })
}

/// Largest window the subset enumeration accepts.
pub const BRUTE_FORCE_CAP: usize = 25;

/// Literal intersection over every qualifying set inside the window.
///
/// Only supersets of `{i} ∪ neighbors(i)` can have `i` in their interior, so
/// the enumeration runs over those. Fails with
/// [`Error::IntersectionNotQualifying`] if the intersection is not itself a
/// qualifying set.
pub fn brute_force_context(x: &Configuration, i: Site) -> Result<Context> {
    let w = x.window();
    if w.len() > BRUTE_FORCE_CAP {
        return Err(Error::EnumerationCap { size: w.len(), cap: BRUTE_FORCE_CAP });
    }
    let center = w.index(i).ok_or(Error::SiteOutsideWindow(i))?;
    if w.is_edge(i) {
        return Ok(Context::truncated(i));
    }
    let geometry = MaskGeometry::new(w);
    let minus = x.spins().iter().enumerate().filter(|(_, s)| **s == MINUS).fold(0u64, |m, (k, _)| m | 1 << k);
    let base = (1u64 << center) | geometry.neighbors[center];
    let free: Vec<usize> = (0..w.len()).filter(|k| base >> k & 1 == 0).collect();

    let mut intersection: Option<u64> = None;
    for bits in 0..1u64 << free.len() {
        let f = free.iter().enumerate().fold(base, |m, (j, &k)| m | (bits >> j & 1) << k);
        if geometry.qualifies(f, center, minus) {
            intersection = Some(intersection.map_or(f, |acc| acc & f));
        }
    }
    let Some(f) = intersection else {
        return Ok(Context::truncated(i));
    };
    if !geometry.qualifies(f, center, minus) {
        return Err(Error::IntersectionNotQualifying(i));
    }
    let members = (0..w.len()).filter(|&k| f >> k & 1 == 1 && k != center).map(|k| w.site(k)).collect();
    Ok(Context { center: i, members, status: ContextStatus::ResolvedWithinWindow })
}

struct MaskGeometry {
    neighbors: Vec<u64>,
    edge: u64,
}

impl MaskGeometry {
    fn new(w: &Window) -> Self {
        let table = w.neighbor_table();
        let neighbors = table.iter().map(|nb| nb.iter().flatten().fold(0u64, |m, &k| m | 1 << k)).collect();
        let edge = table.iter().enumerate().filter(|(_, nb)| nb.iter().any(Option::is_none)).fold(0u64, |m, (k, _)| m | 1 << k);
        MaskGeometry { neighbors, edge }
    }

    fn interior(&self, f: u64) -> u64 {
        let mut inner = 0;
        let mut rest = f & !self.edge;
        while rest != 0 {
            let k = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            if self.neighbors[k] & !f == 0 {
                inner |= 1 << k;
            }
        }
        inner
    }

    fn connected(&self, f: u64) -> bool {
        let mut reached = f & f.wrapping_neg();
        let mut frontier = reached;
        while frontier != 0 {
            let mut next = 0;
            let mut rest = frontier;
            while rest != 0 {
                let k = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                next |= self.neighbors[k] & f;
            }
            frontier = next & !reached;
            reached |= next;
        }
        reached == f
    }

    fn qualifies(&self, f: u64, center: usize, minus: u64) -> bool {
        let inner = self.interior(f);
        let boundary = f & !inner;
        inner >> center & 1 == 1 && boundary & minus == 0 && self.connected(f)
    }
}

/// Context statistics of a whole configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextCensus {
    /// `|C_i(x)|` per window site, row-major; `None` when truncated.
    pub sizes: Vec<Option<usize>>,
    /// Number of sites that are not on the window edge.
    pub interior_sites: usize,
    /// Truncated contexts among the interior sites.
    pub truncated_interior: usize,
    pub max_minus_cluster: usize,
    /// Some -1 cluster touches two opposite window edges.
    pub spanning: bool,
}

impl ContextCensus {
    pub fn truncated_fraction(&self) -> Option<f64> {
        (self.interior_sites > 0).then(|| self.truncated_interior as f64 / self.interior_sites as f64)
    }

    pub fn resolved_sizes(&self) -> impl Iterator<Item = usize> + '_ {
        self.sizes.iter().flatten().copied()
    }
}

const TOP: u8 = 1;
const BOTTOM: u8 = 2;
const LEFT: u8 = 4;
const RIGHT: u8 = 8;

struct Cluster {
    size: usize,
    edges: u8,
    members: Vec<u32>,
    outer: Vec<u32>,
}

/// Labels -1 clusters once and reads every site's context off them.
///
/// A resolved context at `i` is `{i} ∪ neighbors(i)` plus the -1 clusters
/// containing a neighbor of `i` and their outer +1 boundaries, minus `i`; it
/// is truncated as soon as one of those clusters reaches the window edge.
pub fn context_census(x: &Configuration) -> ContextCensus {
    let w = x.window();
    let n = w.len();
    let spins = x.spins();
    let table = w.neighbor_table();
    let (height, width) = (w.height(), w.width());

    let mut uf = UnionFind::new(n);
    for k in 0..n {
        if spins[k] != MINUS {
            continue;
        }
        for &j in table[k].iter().flatten() {
            if spins[j as usize] == MINUS {
                uf.union(k as u32, j);
            }
        }
    }
    let mut root_slot = vec![u32::MAX; n];
    let mut label = vec![u32::MAX; n];
    let mut clusters: Vec<Cluster> = Vec::new();
    for k in 0..n {
        if spins[k] != MINUS {
            continue;
        }
        let root = uf.find(k as u32) as usize;
        if root_slot[root] == u32::MAX {
            root_slot[root] = clusters.len() as u32;
            clusters.push(Cluster { size: 0, edges: 0, members: Vec::new(), outer: Vec::new() });
        }
        label[k] = root_slot[root];
        let c = &mut clusters[root_slot[root] as usize];
        let (r, col) = (k / width, k % width);
        c.size += 1;
        c.members.push(k as u32);
        c.edges |= if r == 0 { TOP } else { 0 }
            | if r + 1 == height { BOTTOM } else { 0 }
            | if col == 0 { LEFT } else { 0 }
            | if col + 1 == width { RIGHT } else { 0 };
    }

    let mut stamp = vec![0u32; n];
    let mut generation = 0u32;
    for c in clusters.iter_mut().filter(|c| c.edges == 0) {
        generation += 1;
        for &m in &c.members {
            for &j in table[m as usize].iter().flatten() {
                if spins[j as usize] == PLUS && stamp[j as usize] != generation {
                    stamp[j as usize] = generation;
                    c.outer.push(j);
                }
            }
        }
    }

    let mut sizes = vec![None; n];
    let mut interior_sites = 0;
    let mut truncated_interior = 0;
    let mut touching: Vec<u32> = Vec::with_capacity(4);
    for k in 0..n {
        if table[k].iter().any(Option::is_none) {
            continue;
        }
        interior_sites += 1;
        touching.clear();
        for &j in table[k].iter().flatten() {
            let l = label[j as usize];
            if l != u32::MAX && !touching.contains(&l) {
                touching.push(l);
            }
        }
        if touching.iter().any(|&l| clusters[l as usize].edges != 0) {
            truncated_interior += 1;
            continue;
        }
        generation += 1;
        let mut count = 0usize;
        let mut add = |j: u32, stamp: &mut Vec<u32>| {
            if stamp[j as usize] != generation {
                stamp[j as usize] = generation;
                count += 1;
            }
        };
        add(k as u32, &mut stamp);
        for &j in table[k].iter().flatten() {
            add(j, &mut stamp);
        }
        for &l in &touching {
            let c = &clusters[l as usize];
            for &j in c.members.iter().chain(&c.outer) {
                add(j, &mut stamp);
            }
        }
        sizes[k] = Some(count - 1);
    }

    let spanning = clusters.iter().any(|c| c.edges & (TOP | BOTTOM) == TOP | BOTTOM || c.edges & (LEFT | RIGHT) == LEFT | RIGHT);
    ContextCensus {
        sizes,
        interior_sites,
        truncated_interior,
        max_minus_cluster: clusters.iter().map(|c| c.size).max().unwrap_or(0),
        spanning,
    }
}

/// Whether the -1 sites of `x` contain a cluster joining two opposite edges.
pub fn has_spanning_cluster(x: &Configuration) -> bool {
    let w = x.window();
    let (height, width) = (w.height(), w.width());
    let spins = x.spins();
    let mut seen = vec![false; w.len()];
    let table = w.neighbor_table();
    let mut queue = VecDeque::new();
    for start in 0..w.len() {
        if spins[start] != MINUS || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut edges = 0u8;
        while let Some(k) = queue.pop_front() {
            let (r, c) = (k / width, k % width);
            edges |= if r == 0 { TOP } else { 0 }
                | if r + 1 == height { BOTTOM } else { 0 }
                | if c == 0 { LEFT } else { 0 }
                | if c + 1 == width { RIGHT } else { 0 };
            for &j in table[k].iter().flatten() {
                if spins[j as usize] == MINUS && !seen[j as usize] {
                    seen[j as usize] = true;
                    queue.push_back(j as usize);
                }
            }
        }
        if edges & (TOP | BOTTOM) == TOP | BOTTOM || edges & (LEFT | RIGHT) == LEFT | RIGHT {
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{neighbors, BoundaryCondition};
    use crate::sampler::RngStream;

    fn set(sites: &[(i32, i32)]) -> SiteSet {
        sites.iter().map(|&p| Site::from(p)).collect()
    }

    fn random_config(w: Window, p_minus: f64, rng: &mut RngStream) -> Configuration {
        let spins = (0..w.len()).map(|_| if rng.uniform() < p_minus { MINUS } else { PLUS }).collect();
        Configuration::new(w, spins).unwrap()
    }

    #[test]
    fn all_plus_context_is_the_four_neighbors() {
        let w = Window::centered(3, BoundaryCondition::AllPlus).unwrap();
        let x = Configuration::filled(w, PLUS).unwrap();
        let o = Site::new(0, 0);
        let c = compute_context(&x, o).unwrap();
        assert!(c.is_resolved());
        assert_eq!(c.members(), &neighbors(o));
        let small = Window::centered(1, BoundaryCondition::AllPlus).unwrap();
        let y = Configuration::filled(small, PLUS).unwrap();
        assert_eq!(brute_force_context(&y, o).unwrap(), compute_context(&y, o).unwrap());
    }

    #[test]
    fn one_minus_neighbor_pulls_in_its_neighbors() {
        let w = Window::centered(3, BoundaryCondition::AllPlus).unwrap();
        let mut x = Configuration::filled(w, PLUS).unwrap();
        x.set(Site::new(1, 0), MINUS).unwrap();
        let c = compute_context(&x, Site::new(0, 0)).unwrap();
        let expected = set(&[(1, 0), (-1, 0), (0, 1), (0, -1), (2, 0), (1, 1), (1, -1)]);
        assert_eq!(c.members(), &expected);
        assert_eq!(c.size(), Some(7));
        // the literal intersection needs a smaller window to stay enumerable
        let small = Window::new(Site::new(-1, -2), 4, 5, BoundaryCondition::AllPlus).unwrap();
        let mut y = Configuration::filled(small, PLUS).unwrap();
        y.set(Site::new(1, 0), MINUS).unwrap();
        assert_eq!(brute_force_context(&y, Site::new(0, 0)).unwrap().members(), &expected);
    }

    #[test]
    fn all_minus_window_truncates() {
        let w = Window::centered(2, BoundaryCondition::AllPlus).unwrap();
        let x = Configuration::filled(w, MINUS).unwrap();
        assert_eq!(compute_context(&x, Site::new(0, 0)).unwrap().status(), ContextStatus::TruncatedByWindow);
        assert_eq!(brute_force_context(&x, Site::new(0, 0)).unwrap().status(), ContextStatus::TruncatedByWindow);
        assert!(matches!(compute_context(&x, Site::new(9, 9)), Err(Error::SiteOutsideWindow(_))));
    }

    #[test]
    fn brute_force_refuses_large_windows() {
        let w = Window::square(6, BoundaryCondition::AllPlus).unwrap();
        let x = Configuration::filled(w, PLUS).unwrap();
        assert!(matches!(brute_force_context(&x, Site::new(2, 2)), Err(Error::EnumerationCap { .. })));
    }

    #[test]
    fn closure_matches_brute_force_on_every_3x3() {
        let w = Window::square(3, BoundaryCondition::AllPlus).unwrap();
        for mask in 0..512 {
            let x = Configuration::from_mask(w, mask);
            let i = Site::new(1, 1);
            assert_eq!(compute_context(&x, i).unwrap(), brute_force_context(&x, i).unwrap(), "mask {mask:#b}");
        }
    }

    #[test]
    fn contexts_have_at_least_four_members_and_the_center_inside() {
        let w = Window::square(7, BoundaryCondition::AllPlus).unwrap();
        let mut rng = RngStream::new(21, 0);
        for _ in 0..300 {
            let x = random_config(w, 0.4, &mut rng);
            for i in w.sites() {
                let c = compute_context(&x, i).unwrap();
                if let Some(size) = c.size() {
                    assert!(size >= 4);
                    let f = c.closure();
                    assert!(crate::lattice::interior(&f).contains(i));
                    assert_eq!(crate::lattice::connected_components(&f).len(), 1);
                    assert!(crate::lattice::boundary(&f).iter().all(|s| x.spin(s) == Some(PLUS)));
                    assert!(!c.members().contains(i));
                }
            }
        }
    }

    #[test]
    fn truncation_iff_minus_path_from_a_neighbor_to_the_edge() {
        let w = Window::square(3, BoundaryCondition::AllPlus).unwrap();
        let i = Site::new(1, 1);
        for mask in 0..512 {
            let x = Configuration::from_mask(w, mask);
            let minus = x.minus_sites();
            let mut without_center = minus.clone();
            without_center.remove(i);
            let reaches_edge = crate::lattice::connected_components(&without_center)
                .iter()
                .any(|comp| comp.iter().any(|s| s.is_neighbor(i)) && comp.iter().any(|s| w.is_edge(s)));
            let truncated = !compute_context(&x, i).unwrap().is_resolved();
            assert_eq!(truncated, reaches_edge, "mask {mask:#b}");
        }
    }

    #[test]
    fn census_matches_per_site_contexts() {
        let w = Window::square(8, BoundaryCondition::AllPlus).unwrap();
        let mut rng = RngStream::new(17, 0);
        for round in 0..100 {
            let x = random_config(w, 0.2 + 0.005 * round as f64, &mut rng);
            let census = context_census(&x);
            for (k, site) in w.sites().enumerate() {
                if w.is_edge(site) {
                    assert_eq!(census.sizes[k], None);
                    continue;
                }
                assert_eq!(census.sizes[k], compute_context(&x, site).unwrap().size(), "site {site}");
            }
            assert_eq!(census.spanning, has_spanning_cluster(&x));
        }
    }

    #[test]
    fn census_examples() {
        let w = Window::square(6, BoundaryCondition::AllPlus).unwrap();
        let x = Configuration::filled(w, PLUS).unwrap();
        let census = context_census(&x);
        assert_eq!(census.interior_sites, 16);
        assert!(census.resolved_sizes().all(|s| s == 4));
        assert_eq!(census.resolved_sizes().count(), 16);
        assert!(!census.spanning);
        assert_eq!(census.max_minus_cluster, 0);

        let mut stripe = x.clone();
        for c in 0..6 {
            stripe.set(Site::new(2, c), MINUS).unwrap();
        }
        let census = context_census(&stripe);
        assert!(census.spanning);
        assert_eq!(census.max_minus_cluster, 6);
    }
}
