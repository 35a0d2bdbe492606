//! Square-lattice geometry: sites, finite windows with boundary conditions,
//! spin configurations, self-avoiding paths and Peierls contours on the dual.
//!
//! Sites are ordered row-major, `i1` being the row and `i2` the column. Every
//! collection returned from this module iterates in that order.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Spin = i8;
pub const PLUS: Spin = 1;
pub const MINUS: Spin = -1;

pub(crate) fn check_spin(s: i64) -> Result<Spin> {
    match s {
        1 => Ok(PLUS),
        -1 => Ok(MINUS),
        other => Err(Error::InvalidSpin(other)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Site {
    pub i1: i32,
    pub i2: i32,
}

impl Site {
    pub const fn new(i1: i32, i2: i32) -> Self {
        Site { i1, i2 }
    }

    pub fn l1_distance(self, other: Site) -> u32 {
        self.i1.abs_diff(other.i1) + self.i2.abs_diff(other.i2)
    }

    pub fn is_neighbor(self, other: Site) -> bool {
        self.l1_distance(other) == 1
    }

    /// The four L1-neighbors in the fixed order down, up, right, left.
    pub fn neighbor_array(self) -> [Site; 4] {
        [
            Site::new(self.i1 + 1, self.i2),
            Site::new(self.i1 - 1, self.i2),
            Site::new(self.i1, self.i2 + 1),
            Site::new(self.i1, self.i2 - 1),
        ]
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.i1, self.i2)
    }
}

impl From<(i32, i32)> for Site {
    fn from((i1, i2): (i32, i32)) -> Self {
        Site::new(i1, i2)
    }
}

/// Finite set of sites with row-major iteration.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SiteSet(BTreeSet<Site>);

impl SiteSet {
    pub fn new() -> Self {
        SiteSet(BTreeSet::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, site: Site) -> bool {
        self.0.contains(&site)
    }

    pub fn insert(&mut self, site: Site) -> bool {
        self.0.insert(site)
    }

    pub fn remove(&mut self, site: Site) -> bool {
        self.0.remove(&site)
    }

    pub fn iter(&self) -> impl Iterator<Item = Site> + '_ {
        self.0.iter().copied()
    }

    pub fn first(&self) -> Option<Site> {
        self.0.first().copied()
    }

    pub fn is_subset(&self, other: &SiteSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn union(&self, other: &SiteSet) -> SiteSet {
        SiteSet(self.0.union(&other.0).copied().collect())
    }

    pub fn difference(&self, other: &SiteSet) -> SiteSet {
        SiteSet(self.0.difference(&other.0).copied().collect())
    }

    pub fn intersection(&self, other: &SiteSet) -> SiteSet {
        SiteSet(self.0.intersection(&other.0).copied().collect())
    }

    /// Sites outside the set at L1-distance 1 from it.
    pub fn outer_boundary(&self) -> SiteSet {
        self.iter()
            .flat_map(|s| s.neighbor_array())
            .filter(|n| !self.contains(*n))
            .collect()
    }

    /// Every site of a `height` x `width` block whose top-left corner is `origin`.
    pub fn block(origin: Site, height: usize, width: usize) -> SiteSet {
        let mut set = SiteSet::new();
        for r in 0..height as i32 {
            for c in 0..width as i32 {
                set.insert(Site::new(origin.i1 + r, origin.i2 + c));
            }
        }
        set
    }
}

impl FromIterator<Site> for SiteSet {
    fn from_iter<T: IntoIterator<Item = Site>>(iter: T) -> Self {
        SiteSet(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a SiteSet {
    type Item = &'a Site;
    type IntoIter = std::collections::btree_set::Iter<'a, Site>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

pub fn neighbors(i: Site) -> SiteSet {
    i.neighbor_array().into_iter().collect()
}

/// Sites of `f` having at least one L1-neighbor outside `f`.
pub fn boundary(f: &SiteSet) -> SiteSet {
    f.iter()
        .filter(|s| s.neighbor_array().iter().any(|n| !f.contains(*n)))
        .collect()
}

pub fn interior(f: &SiteSet) -> SiteSet {
    f.iter()
        .filter(|s| s.neighbor_array().iter().all(|n| f.contains(*n)))
        .collect()
}

/// Maximal L1-connected pieces of `sites`, ordered by their smallest site.
pub fn connected_components(sites: &SiteSet) -> Vec<SiteSet> {
    let mut seen = BTreeSet::new();
    let mut components = Vec::new();
    for start in sites.iter() {
        if !seen.insert(start) {
            continue;
        }
        let mut component = SiteSet::new();
        let mut queue = VecDeque::from([start]);
        while let Some(s) = queue.pop_front() {
            component.insert(s);
            for n in s.neighbor_array() {
                if sites.contains(n) && seen.insert(n) {
                    queue.push_back(n);
                }
            }
        }
        components.push(component);
    }
    components
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryCondition {
    #[serde(rename = "plus")]
    AllPlus,
    #[serde(rename = "minus")]
    AllMinus,
    Free,
}

impl BoundaryCondition {
    /// Spin seen by window sites across the window edge; zero means no coupling.
    pub fn exterior_spin(self) -> Spin {
        match self {
            BoundaryCondition::AllPlus => PLUS,
            BoundaryCondition::AllMinus => MINUS,
            BoundaryCondition::Free => 0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BoundaryCondition::AllPlus => "plus",
            BoundaryCondition::AllMinus => "minus",
            BoundaryCondition::Free => "free",
        }
    }
}

impl fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BoundaryCondition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plus" | "+" => Ok(BoundaryCondition::AllPlus),
            "minus" | "-" => Ok(BoundaryCondition::AllMinus),
            "free" => Ok(BoundaryCondition::Free),
            other => Err(Error::InvalidArgument(format!("unknown boundary condition {other:?}"))),
        }
    }
}

/// Rectangular block of sites; everything outside it is the boundary condition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Window {
    origin: Site,
    height: usize,
    width: usize,
    boundary: BoundaryCondition,
}

impl Window {
    pub fn new(origin: Site, height: usize, width: usize, boundary: BoundaryCondition) -> Result<Self> {
        if height == 0 || width == 0 || height > i32::MAX as usize / 4 || width > i32::MAX as usize / 4 {
            return Err(Error::EmptyWindow { height, width });
        }
        Ok(Window { origin, height, width, boundary })
    }

    /// `n` x `n` window with its top-left site at the origin.
    pub fn square(n: usize, boundary: BoundaryCondition) -> Result<Self> {
        Window::new(Site::new(0, 0), n, n, boundary)
    }

    /// The block `[-n, n]^2`.
    pub fn centered(n: usize, boundary: BoundaryCondition) -> Result<Self> {
        let n_i = i32::try_from(n).map_err(|_| Error::EmptyWindow { height: n, width: n })?;
        Window::new(Site::new(-n_i, -n_i), 2 * n + 1, 2 * n + 1, boundary)
    }

    pub fn origin(&self) -> Site {
        self.origin
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn boundary(&self) -> BoundaryCondition {
        self.boundary
    }

    pub fn with_boundary(&self, boundary: BoundaryCondition) -> Window {
        Window { boundary, ..*self }
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, s: Site) -> bool {
        let r = s.i1 as i64 - self.origin.i1 as i64;
        let c = s.i2 as i64 - self.origin.i2 as i64;
        r >= 0 && c >= 0 && (r as usize) < self.height && (c as usize) < self.width
    }

    /// Row-major index of `s`, if it lies in the window.
    pub fn index(&self, s: Site) -> Option<usize> {
        self.contains(s).then(|| {
            (s.i1 - self.origin.i1) as usize * self.width + (s.i2 - self.origin.i2) as usize
        })
    }

    pub fn site(&self, index: usize) -> Site {
        Site::new(
            self.origin.i1 + (index / self.width) as i32,
            self.origin.i2 + (index % self.width) as i32,
        )
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.len()).map(move |k| self.site(k))
    }

    pub fn site_set(&self) -> SiteSet {
        SiteSet::block(self.origin, self.height, self.width)
    }

    /// Whether `s` is a window site with a neighbor outside the window.
    pub fn is_edge(&self, s: Site) -> bool {
        self.contains(s) && s.neighbor_array().iter().any(|n| !self.contains(*n))
    }

    pub fn center(&self) -> Site {
        Site::new(
            self.origin.i1 + (self.height / 2) as i32,
            self.origin.i2 + (self.width / 2) as i32,
        )
    }

    /// Row-major neighbor indices of every site; `None` marks the exterior.
    pub(crate) fn neighbor_table(&self) -> Vec<[Option<u32>; 4]> {
        (0..self.len())
            .map(|k| self.site(k).neighbor_array().map(|n| self.index(n).map(|i| i as u32)))
            .collect()
    }
}

/// Spins restricted to an arbitrary finite set of sites.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fragment(BTreeMap<Site, Spin>);

impl Fragment {
    pub fn new() -> Self {
        Fragment(BTreeMap::new())
    }

    /// Every site of `sites` set to `spin`.
    pub fn uniform(sites: &SiteSet, spin: Spin) -> Self {
        Fragment(sites.iter().map(|s| (s, spin)).collect())
    }

    pub fn get(&self, s: Site) -> Option<Spin> {
        self.0.get(&s).copied()
    }

    pub fn insert(&mut self, s: Site, spin: Spin) -> Result<()> {
        self.0.insert(s, check_spin(spin as i64)?);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Site, Spin)> + '_ {
        self.0.iter().map(|(s, v)| (*s, *v))
    }

    pub fn sites(&self) -> SiteSet {
        self.0.keys().copied().collect()
    }
}

impl FromIterator<(Site, Spin)> for Fragment {
    fn from_iter<T: IntoIterator<Item = (Site, Spin)>>(iter: T) -> Self {
        Fragment(iter.into_iter().collect())
    }
}

/// A spin in {-1, +1} on every site of a window.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Configuration {
    window: Window,
    spins: Vec<Spin>,
}

impl Configuration {
    pub fn new(window: Window, spins: Vec<Spin>) -> Result<Self> {
        if spins.len() != window.len() {
            return Err(Error::SpinCountMismatch { expected: window.len(), got: spins.len() });
        }
        for &s in &spins {
            check_spin(s as i64)?;
        }
        Ok(Configuration { window, spins })
    }

    pub fn filled(window: Window, spin: Spin) -> Result<Self> {
        check_spin(spin as i64)?;
        Ok(Configuration { window, spins: vec![spin; window.len()] })
    }

    /// Builds a configuration from rows of spins, top-left site at the origin.
    pub fn from_rows(rows: &[Vec<Spin>], boundary: BoundaryCondition) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        let window = Window::new(Site::new(0, 0), height, width, boundary)?;
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::InvalidArgument("ragged rows".into()));
        }
        Configuration::new(window, rows.concat())
    }

    /// Decodes bit `k` of `mask` as the spin of the `k`-th row-major site (set bit = +1).
    pub fn from_mask(window: Window, mask: u64) -> Self {
        let spins = (0..window.len())
            .map(|k| if mask >> k & 1 == 1 { PLUS } else { MINUS })
            .collect();
        Configuration { window, spins }
    }

    /// Inverse of [`Configuration::from_mask`]; only meaningful for windows of at most 64 sites.
    pub fn to_mask(&self) -> u64 {
        self.spins
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == PLUS)
            .fold(0u64, |m, (k, _)| m | 1 << k)
    }

    pub(crate) fn from_raw(window: Window, spins: Vec<Spin>) -> Self {
        debug_assert_eq!(spins.len(), window.len());
        Configuration { window, spins }
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn spins(&self) -> &[Spin] {
        &self.spins
    }

    pub fn spin(&self, s: Site) -> Option<Spin> {
        self.window.index(s).map(|k| self.spins[k])
    }

    /// Spin at `s`, with the boundary condition answering for exterior sites.
    pub fn spin_or_exterior(&self, s: Site) -> Spin {
        self.spin(s).unwrap_or_else(|| self.window.boundary.exterior_spin())
    }

    pub fn set(&mut self, s: Site, spin: Spin) -> Result<()> {
        let k = self.window.index(s).ok_or(Error::SiteOutsideWindow(s))?;
        self.spins[k] = check_spin(spin as i64)?;
        Ok(())
    }

    pub fn fragment(&self, sites: &SiteSet) -> Result<Fragment> {
        sites
            .iter()
            .map(|s| self.spin(s).map(|v| (s, v)).ok_or(Error::SiteOutsideWindow(s)))
            .collect()
    }

    pub fn minus_sites(&self) -> SiteSet {
        self.window.sites().zip(&self.spins).filter(|(_, v)| **v == MINUS).map(|(s, _)| s).collect()
    }

    /// Rows of spins, top to bottom.
    pub fn rows(&self) -> Vec<Vec<Spin>> {
        self.spins.chunks(self.window.width).map(<[Spin]>::to_vec).collect()
    }

    pub fn magnetization(&self) -> f64 {
        self.spins.iter().map(|&s| s as f64).sum::<f64>() / self.spins.len() as f64
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in self.spins.chunks(self.window.width) {
            let line: String = row.iter().map(|&s| if s == PLUS { '+' } else { '-' }).collect();
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

/// Self-avoiding path: consecutive sites are neighbors, no other pair is.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Path(Vec<Site>);

impl Path {
    pub fn new(sites: Vec<Site>) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::InvalidPath("empty".into()));
        }
        for (j, a) in sites.iter().enumerate() {
            for (k, b) in sites.iter().enumerate().skip(j + 1) {
                let adjacent = a.is_neighbor(*b);
                if k == j + 1 && !adjacent {
                    return Err(Error::InvalidPath(format!("{a} and {b} are consecutive but not neighbors")));
                }
                if k > j + 1 && (adjacent || a == b) {
                    return Err(Error::InvalidPath(format!("{a} and {b} touch out of sequence")));
                }
            }
        }
        Ok(Path(sites))
    }

    pub fn sites(&self) -> &[Site] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// All self-avoiding paths of exactly `length` sites that start in `start`,
/// stay in `window`, and never visit a site of `avoid`.
///
/// Paths from the four neighbors of a site `i` that avoid `i` itself are the
/// ones whose count is bounded by `4 * 3^(length - 1)`.
pub fn enumerate_self_avoiding_paths(
    start: &SiteSet,
    length: usize,
    window: &Window,
    avoid: &SiteSet,
) -> Result<Vec<Path>> {
    if length == 0 {
        return Err(Error::InvalidArgument("path length must be at least 1".into()));
    }
    if length > window.len() {
        return Err(Error::NoPathFits { length });
    }
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(length);
    for s in start.iter() {
        if window.contains(s) && !avoid.contains(s) {
            current.push(s);
            extend_paths(&mut current, length, window, avoid, &mut out);
            current.pop();
        }
    }
    if out.is_empty() {
        return Err(Error::NoPathFits { length });
    }
    Ok(out)
}

fn extend_paths(current: &mut Vec<Site>, length: usize, window: &Window, avoid: &SiteSet, out: &mut Vec<Path>) {
    if current.len() == length {
        out.push(Path(current.clone()));
        return;
    }
    let last = *current.last().expect("non-empty");
    let body_len = current.len() - 1;
    for next in last.neighbor_array() {
        if !window.contains(next)
            || avoid.contains(next)
            || current[..body_len].iter().any(|s| *s == next || s.is_neighbor(next))
        {
            continue;
        }
        current.push(next);
        extend_paths(current, length, window, avoid, out);
        current.pop();
    }
}

/// Point of the dual lattice in doubled coordinates: the dual point
/// `(r + 1/2, c + 1/2)` is stored as `(2r + 1, 2c + 1)`, so both
/// coordinates are always odd.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DualSite {
    pub r: i32,
    pub c: i32,
}

impl DualSite {
    pub fn new(r: i32, c: i32) -> Self {
        debug_assert!(r.rem_euclid(2) == 1 && c.rem_euclid(2) == 1);
        DualSite { r, c }
    }

    fn is_dual_neighbor(self, other: DualSite) -> bool {
        self.r.abs_diff(other.r) + self.c.abs_diff(other.c) == 2
    }
}

/// Closed curve on the dual lattice.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Contour(Vec<DualSite>);

impl Contour {
    pub fn new(points: Vec<DualSite>) -> Result<Self> {
        let n = points.len();
        if n < 4 || n % 2 == 1 {
            return Err(Error::InvalidArgument(format!("contour length {n} must be even and at least 4")));
        }
        for k in 0..n {
            if !points[k].is_dual_neighbor(points[(k + 1) % n]) {
                return Err(Error::InvalidArgument("consecutive dual sites are not neighbors".into()));
            }
        }
        Ok(Contour(points))
    }

    pub fn points(&self) -> &[DualSite] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Whether `site` lies inside the curve (even-odd rule; a site never
    /// sits on a dual edge, so there is no ambiguity for simple curves).
    pub fn encloses(&self, site: Site) -> bool {
        let (pr, pc) = (2 * site.i1, 2 * site.i2);
        let n = self.0.len();
        let mut crossings = 0;
        for k in 0..n {
            let (a, b) = (self.0[k], self.0[(k + 1) % n]);
            if a.c == b.c && a.c > pc && a.r.min(b.r) < pr && pr < a.r.max(b.r) {
                crossings += 1;
            }
        }
        crossings % 2 == 1
    }
}

/// Number of neighbor pairs with different spins, counting pairs that
/// straddle the window edge against the boundary condition.
pub fn disagreeing_bond_count(x: &Configuration) -> usize {
    let w = x.window();
    let ext = w.boundary().exterior_spin();
    let mut count = 0;
    for s in w.sites() {
        let v = x.spin_or_exterior(s);
        for n in [Site::new(s.i1 + 1, s.i2), Site::new(s.i1, s.i2 + 1)] {
            if x.spin_or_exterior(n) != v && (w.contains(n) || ext != 0) {
                count += 1;
            }
        }
        for n in [Site::new(s.i1 - 1, s.i2), Site::new(s.i1, s.i2 - 1)] {
            if !w.contains(n) && ext != 0 && ext != v {
                count += 1;
            }
        }
    }
    count
}

/// Dual edges are keyed by their midpoint in doubled coordinates: one
/// coordinate even, the other odd.
type DualEdge = (i32, i32);

/// Contours of a plus-boundary configuration: the closed dual curves
/// separating +1 from -1 regions.
///
/// Where four disagreement edges meet at a dual point (a checkerboard
/// 2x2 block) the curve turns so that the two diagonal -1 sites stay on
/// separate corners; the two resulting curves touch at that point.
pub fn extract_contours(x: &Configuration) -> Result<Vec<Contour>> {
    if x.window().boundary() != BoundaryCondition::AllPlus {
        return Err(Error::RequiresPlusBoundary);
    }
    let w = x.window();
    let mut edges: BTreeSet<DualEdge> = BTreeSet::new();
    // Every disagreeing bond touches a -1 window site.
    for s in w.sites().filter(|s| x.spin_or_exterior(*s) == MINUS) {
        for n in s.neighbor_array() {
            if x.spin_or_exterior(n) == PLUS {
                edges.insert((s.i1 + n.i1, s.i2 + n.i2));
            }
        }
    }
    let spin_at = |r2: i32, c2: i32| x.spin_or_exterior(Site::new(r2.div_euclid(2), c2.div_euclid(2)));

    let mut contours = Vec::new();
    let mut unvisited = edges.clone();
    while let Some(&start) = unvisited.first() {
        let (from, _) = edge_endpoints(start);
        let mut points = Vec::new();
        let mut vertex = from;
        let mut edge = start;
        loop {
            unvisited.remove(&edge);
            points.push(DualSite::new(vertex.0, vertex.1));
            let (a, b) = edge_endpoints(edge);
            let next_vertex = if a == vertex { b } else { a };
            let incident: Vec<DualEdge> = vertex_edges(next_vertex)
                .into_iter()
                .filter(|e| *e != edge && edges.contains(e))
                .collect();
            let next_edge = match incident.len() {
                1 => incident[0],
                3 => paired_edge(next_vertex, edge, &spin_at),
                k => unreachable!("dual vertex with {} disagreement edges", k + 1),
            };
            vertex = next_vertex;
            edge = next_edge;
            if edge == start {
                break;
            }
        }
        contours.push(Contour(points));
    }
    Ok(contours)
}

fn edge_endpoints((r, c): DualEdge) -> ((i32, i32), (i32, i32)) {
    if r.rem_euclid(2) == 0 {
        ((r - 1, c), (r + 1, c))
    } else {
        ((r, c - 1), (r, c + 1))
    }
}

/// Incident edge midpoints in the order up, down, left, right.
fn vertex_edges((r, c): (i32, i32)) -> [DualEdge; 4] {
    [(r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)]
}

fn paired_edge(vertex: (i32, i32), incoming: DualEdge, spin_at: &impl Fn(i32, i32) -> Spin) -> DualEdge {
    let (r, c) = vertex;
    let [up, down, left, right] = vertex_edges(vertex);
    // Up/left bound the upper-left site's corner, down/right the lower-right one.
    let upper_left_minus = spin_at(r - 1, c - 1) == MINUS;
    let pairs = if upper_left_minus {
        [(up, left), (down, right)]
    } else {
        [(up, right), (down, left)]
    };
    pairs
        .iter()
        .find_map(|&(a, b)| {
            if a == incoming {
                Some(b)
            } else if b == incoming {
                Some(a)
            } else {
                None
            }
        })
        .expect("incoming edge is incident")
}

/// Every simple closed dual curve of exactly `length` edges enclosing `site`.
pub fn enumerate_contours_around(site: Site, length: usize) -> Vec<Contour> {
    if length < 4 || length % 2 == 1 {
        return Vec::new();
    }
    let reach = length as i32;
    let (cr, cc) = (2 * site.i1, 2 * site.i2);
    let mut out = Vec::new();
    let mut r = cr - reach - 1;
    while r <= cr + reach + 1 {
        let mut c = cc - reach - 1;
        while c <= cc + reach + 1 {
            let start = DualSite::new(r, c);
            let mut walk = vec![start];
            closed_walks(&mut walk, length, &mut |w: &[DualSite]| {
                // Each polygon is met in both directions from its smallest vertex.
                if w[1] < w[w.len() - 1] {
                    let contour = Contour(w.to_vec());
                    if contour.encloses(site) {
                        out.push(contour);
                    }
                }
            });
            c += 2;
        }
        r += 2;
    }
    out
}

fn closed_walks(walk: &mut Vec<DualSite>, length: usize, emit: &mut impl FnMut(&[DualSite])) {
    let start = walk[0];
    let last = *walk.last().expect("non-empty");
    let remaining = length - walk.len();
    for (dr, dc) in [(-2, 0), (2, 0), (0, -2), (0, 2)] {
        let next = DualSite { r: last.r + dr, c: last.c + dc };
        if next == start && walk.len() == length {
            emit(walk);
            continue;
        }
        if walk.len() == length || next <= start || walk.contains(&next) {
            continue;
        }
        // Prune walks that can no longer close.
        let back = (next.r.abs_diff(start.r) + next.c.abs_diff(start.c)) as usize / 2;
        if back > remaining {
            continue;
        }
        walk.push(next);
        closed_walks(walk, length, emit);
        walk.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(sites: &[(i32, i32)]) -> SiteSet {
        sites.iter().map(|&p| Site::from(p)).collect()
    }

    #[test]
    fn neighbors_of_origin_and_translate() {
        assert_eq!(neighbors(Site::new(0, 0)), set(&[(1, 0), (-1, 0), (0, 1), (0, -1)]));
        assert_eq!(neighbors(Site::new(2, 3)), set(&[(3, 3), (1, 3), (2, 4), (2, 2)]));
        assert_eq!(Site::new(0, 0).l1_distance(Site::new(1, 1)), 2);
        assert!(!neighbors(Site::new(0, 0)).contains(Site::new(1, 1)));
    }

    #[test]
    fn boundary_examples() {
        let single = set(&[(0, 0)]);
        assert_eq!(boundary(&single), single);
        assert!(interior(&single).is_empty());

        let block = SiteSet::block(Site::new(-1, -1), 3, 3);
        assert_eq!(boundary(&block).len(), 8);
        assert_eq!(interior(&block), set(&[(0, 0)]));

        let domino = set(&[(0, 0), (1, 0)]);
        assert_eq!(boundary(&domino), domino);
    }

    #[test]
    fn components_examples() {
        let comps = connected_components(&set(&[(0, 0), (1, 0), (5, 5)]));
        assert_eq!(comps, vec![set(&[(0, 0), (1, 0)]), set(&[(5, 5)])]);
        assert!(connected_components(&SiteSet::new()).is_empty());
        assert_eq!(connected_components(&SiteSet::block(Site::new(0, 0), 3, 3)).len(), 1);
    }

    #[test]
    fn window_indexing_round_trips() {
        let w = Window::new(Site::new(-2, 3), 4, 5, BoundaryCondition::Free).unwrap();
        for k in 0..w.len() {
            assert_eq!(w.index(w.site(k)), Some(k));
        }
        assert!(!w.contains(Site::new(-3, 3)));
        assert!(w.is_edge(Site::new(-2, 4)));
        assert!(!w.is_edge(Site::new(-1, 4)));
        assert!(Window::new(Site::new(0, 0), 0, 3, BoundaryCondition::Free).is_err());
        let c = Window::centered(2, BoundaryCondition::AllPlus).unwrap();
        assert_eq!(c.len(), 25);
        assert_eq!(c.center(), Site::new(0, 0));
    }

    #[test]
    fn configuration_validates_spins() {
        let w = Window::square(2, BoundaryCondition::AllPlus).unwrap();
        assert!(Configuration::new(w, vec![1, -1, 1, 1]).is_ok());
        assert!(matches!(Configuration::new(w, vec![1, 0, 1, 1]), Err(Error::InvalidSpin(0))));
        assert!(matches!(Configuration::new(w, vec![1]), Err(Error::SpinCountMismatch { .. })));
        let x = Configuration::from_mask(w, 0b0101);
        assert_eq!(x.spins(), &[1, -1, 1, -1]);
        assert_eq!(x.to_mask(), 0b0101);
        assert_eq!(x.spin_or_exterior(Site::new(-1, 0)), PLUS);
    }

    #[test]
    fn path_validation() {
        assert!(Path::new(vec![Site::new(0, 0), Site::new(0, 1), Site::new(1, 1)]).is_ok());
        assert!(Path::new(vec![Site::new(0, 0), Site::new(1, 1)]).is_err());
        // closes a unit square: first and last are neighbors
        let square = vec![Site::new(0, 0), Site::new(0, 1), Site::new(1, 1), Site::new(1, 0)];
        assert!(Path::new(square).is_err());
    }

    #[test]
    fn paths_from_origin_neighbors() {
        let w = Window::centered(6, BoundaryCondition::Free).unwrap();
        let origin = Site::new(0, 0);
        let avoid = set(&[(0, 0)]);
        let start = neighbors(origin);
        assert_eq!(enumerate_self_avoiding_paths(&start, 1, &w, &avoid).unwrap().len(), 4);
        assert_eq!(enumerate_self_avoiding_paths(&start, 2, &w, &avoid).unwrap().len(), 12);
        for n in 1..=8u32 {
            let paths = enumerate_self_avoiding_paths(&start, n as usize, &w, &avoid).unwrap();
            assert!(paths.len() <= 4 * 3usize.pow(n - 1), "n = {n}");
            for p in &paths {
                assert!(Path::new(p.sites().to_vec()).is_ok());
                assert!(!p.sites().contains(&origin));
            }
        }
    }

    #[test]
    fn paths_error_when_window_too_small() {
        let w = Window::square(2, BoundaryCondition::Free).unwrap();
        let start = set(&[(0, 0)]);
        assert!(matches!(
            enumerate_self_avoiding_paths(&start, 5, &w, &SiteSet::new()),
            Err(Error::NoPathFits { length: 5 })
        ));
        // a 2x2 block holds no self-avoiding path of 4 sites: the ends touch
        assert!(enumerate_self_avoiding_paths(&start, 4, &w, &SiteSet::new()).is_err());
        assert_eq!(enumerate_self_avoiding_paths(&start, 3, &w, &SiteSet::new()).unwrap().len(), 2);
    }

    #[test]
    fn contour_examples() {
        let w = Window::centered(2, BoundaryCondition::AllPlus).unwrap();
        let mut x = Configuration::filled(w, PLUS).unwrap();
        assert!(extract_contours(&x).unwrap().is_empty());

        x.set(Site::new(0, 0), MINUS).unwrap();
        let cs = extract_contours(&x).unwrap();
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].len(), 4);
        assert!(cs[0].encloses(Site::new(0, 0)));
        assert!(!cs[0].encloses(Site::new(0, 1)));

        x.set(Site::new(0, 1), MINUS).unwrap();
        let cs = extract_contours(&x).unwrap();
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].len(), 6);

        let minus = w.with_boundary(BoundaryCondition::AllMinus);
        let y = Configuration::filled(minus, PLUS).unwrap();
        assert!(matches!(extract_contours(&y), Err(Error::RequiresPlusBoundary)));
    }

    #[test]
    fn checkerboard_corner_splits_into_touching_contours() {
        let x = Configuration::from_rows(&[vec![-1, 1], vec![1, -1]], BoundaryCondition::AllPlus).unwrap();
        let cs = extract_contours(&x).unwrap();
        assert_eq!(cs.len(), 2);
        assert!(cs.iter().all(|c| c.len() == 4));
        for c in &cs {
            assert!(Contour::new(c.points().to_vec()).is_ok());
        }
    }

    #[test]
    fn contour_lengths_match_bond_count_exhaustively() {
        let w = Window::square(3, BoundaryCondition::AllPlus).unwrap();
        for mask in 0..512u64 {
            let x = Configuration::from_mask(w, mask);
            let total: usize = extract_contours(&x).unwrap().iter().map(Contour::len).sum();
            assert_eq!(total, disagreeing_bond_count(&x), "mask {mask:#b}");
        }
    }

    #[test]
    fn small_contour_counts_around_origin() {
        let o = Site::new(0, 0);
        assert_eq!(enumerate_contours_around(o, 4).len(), 1);
        // the four dominoes containing the origin
        assert_eq!(enumerate_contours_around(o, 6).len(), 4);
        // I-trominoes (6), L-trominoes (12) and 2x2 squares (4)
        assert_eq!(enumerate_contours_around(o, 8).len(), 22);
        assert!(enumerate_contours_around(o, 5).is_empty());
    }
}
