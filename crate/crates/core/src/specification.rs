//! Finite-volume Gibbs kernels of nearest-neighbor specifications.
//!
//! Only the homogeneous ferromagnetic Ising model ships, but kernels are built
//! through [`NearestNeighborSpecification`], so any pair interaction on L1
//! bonds plugs into the same enumeration, consistency and extremal-rate code.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Fragment, Site, SiteSet, Spin, MINUS, PLUS};

/// Largest region enumerated exactly (2^20 configurations).
pub const ENUMERATION_CAP: usize = 20;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Model {
    #[default]
    HomogeneousIsing,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecificationParams {
    beta: f64,
    model: Model,
}

impl SpecificationParams {
    pub fn ising(beta: f64) -> Result<Self> {
        if !beta.is_finite() || beta < 0.0 {
            return Err(Error::InvalidBeta(beta));
        }
        Ok(SpecificationParams { beta, model: Model::HomogeneousIsing })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn model(&self) -> Model {
        self.model
    }
}

/// A specification whose finite-volume weights are products of pair factors
/// over L1 bonds.
pub trait NearestNeighborSpecification {
    /// Log-weight of a bond carrying spins `a` and `b`; symmetric in its
    /// arguments. A spin of 0 stands for a free boundary and must contribute
    /// nothing.
    fn bond_log_weight(&self, a: Spin, b: Spin) -> f64;

    /// One-point conditional `p_i(spin | neighbors)`.
    fn one_point(&self, spin: Spin, neighbors: [Spin; 4]) -> f64 {
        let same: f64 = neighbors.iter().map(|&n| self.bond_log_weight(spin, n)).sum();
        let flip: f64 = neighbors.iter().map(|&n| self.bond_log_weight(-spin, n)).sum();
        1.0 / (1.0 + (flip - same).exp())
    }
}

impl NearestNeighborSpecification for SpecificationParams {
    fn bond_log_weight(&self, a: Spin, b: Spin) -> f64 {
        self.beta * (a as f64) * (b as f64)
    }

    fn one_point(&self, spin: Spin, neighbors: [Spin; 4]) -> f64 {
        let s: i32 = neighbors.iter().map(|&n| n as i32).sum();
        heat_bath_plus(self.beta, spin as i32 * s)
    }
}

fn heat_bath_plus(beta: f64, field: i32) -> f64 {
    1.0 / (1.0 + (-2.0 * beta * field as f64).exp())
}

/// `p_i(+1 | neighbors)` for the Ising model given the sum of the four
/// neighbor spins: `e^{beta s} / (e^{beta s} + e^{-beta s})`.
pub fn ising_one_point(params: &SpecificationParams, neighbor_spin_sum: i32) -> Result<f64> {
    match neighbor_spin_sum {
        -4 | -2 | 0 | 2 | 4 => Ok(heat_bath_plus(params.beta, neighbor_spin_sum)),
        other => Err(Error::InvalidNeighborSum(other)),
    }
}

/// Heat-bath probabilities of +1 for neighbor sums -4..=4 (odd sums occur
/// next to a free boundary).
pub(crate) fn heat_bath_table(params: &SpecificationParams) -> [f64; 9] {
    std::array::from_fn(|k| heat_bath_plus(params.beta, k as i32 - 4))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtremalRates {
    pub lambda0_plus: f64,
    pub lambda0_minus: f64,
}

/// Infima of the one-point conditionals. For a nearest-neighbor
/// specification the infimum over all configurations is a minimum over the
/// 16 neighbor patterns.
pub fn extremal_rates<S: NearestNeighborSpecification + ?Sized>(spec: &S) -> ExtremalRates {
    let mut plus = f64::INFINITY;
    let mut minus = f64::INFINITY;
    for pattern in 0..16u32 {
        let neighbors: [Spin; 4] = std::array::from_fn(|k| if pattern >> k & 1 == 1 { PLUS } else { MINUS });
        plus = plus.min(spec.one_point(PLUS, neighbors));
        minus = minus.min(spec.one_point(MINUS, neighbors));
    }
    ExtremalRates { lambda0_plus: plus, lambda0_minus: minus }
}

/// Exact kernel `p_Λ(· | y)` over all configurations of a region.
///
/// Configurations are addressed by bitmask: bit `k` set means the `k`-th
/// region site (row-major) is +1.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelTable {
    region: SiteSet,
    sites: Vec<Site>,
    exterior: Fragment,
    weights: Vec<f64>,
}

impl KernelTable {
    pub fn region(&self) -> &SiteSet {
        &self.region
    }

    /// Region sites in bit order.
    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn exterior(&self) -> &Fragment {
        &self.exterior
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight_of_mask(&self, mask: u64) -> f64 {
        self.weights[mask as usize]
    }

    pub fn mask_of(&self, x: &Fragment) -> Result<u64> {
        self.sites.iter().enumerate().try_fold(0u64, |m, (k, s)| match x.get(*s) {
            Some(PLUS) => Ok(m | 1 << k),
            Some(_) => Ok(m),
            None => Err(Error::MissingExterior(*s)),
        })
    }

    /// Probability of the region configuration read off `x`.
    pub fn weight(&self, x: &Fragment) -> Result<f64> {
        Ok(self.weight_of_mask(self.mask_of(x)?))
    }
}

/// Exterior spins of `region` (its outer boundary) read from `exterior`.
fn exterior_spins(region: &SiteSet, exterior: &Fragment) -> Result<Fragment> {
    region
        .outer_boundary()
        .iter()
        .map(|s| exterior.get(s).map(|v| (s, v)).ok_or(Error::MissingExterior(s)))
        .collect()
}

/// Exact finite-volume kernel by enumeration of every configuration of
/// `region`. `exterior` must give a spin for every site at distance 1 from
/// the region; extra entries are ignored.
pub fn finite_volume_kernel<S: NearestNeighborSpecification + ?Sized>(
    spec: &S,
    region: &SiteSet,
    exterior: &Fragment,
) -> Result<KernelTable> {
    if region.is_empty() {
        return Err(Error::EmptyRegion);
    }
    if region.len() > ENUMERATION_CAP {
        return Err(Error::EnumerationCap { size: region.len(), cap: ENUMERATION_CAP });
    }
    let exterior = exterior_spins(region, exterior)?;
    let sites: Vec<Site> = region.iter().collect();
    let log_weights = region_log_weights(spec, &sites, |s| exterior.get(s).unwrap_or(0));
    Ok(KernelTable { region: region.clone(), sites, exterior, weights: normalize_log(log_weights) })
}

/// Unnormalized log-weights of every configuration of `sites`, the spin of
/// any other site being given by `outside`.
pub(crate) fn region_log_weights<S: NearestNeighborSpecification + ?Sized>(
    spec: &S,
    sites: &[Site],
    outside: impl Fn(Site) -> Spin,
) -> Vec<f64> {
    let index: HashMap<Site, usize> = sites.iter().enumerate().map(|(k, s)| (*s, k)).collect();
    let mut bonds = Vec::new();
    // field[k] = (log-weight with x_k = -1, with x_k = +1) from exterior bonds
    let mut field = vec![(0.0, 0.0); sites.len()];
    for (k, s) in sites.iter().enumerate() {
        for n in s.neighbor_array() {
            match index.get(&n) {
                Some(&l) if l > k => bonds.push((k, l)),
                Some(_) => {}
                None => {
                    let y = outside(n);
                    field[k].0 += spec.bond_log_weight(MINUS, y);
                    field[k].1 += spec.bond_log_weight(PLUS, y);
                }
            }
        }
    }
    let spin = |mask: u64, k: usize| if mask >> k & 1 == 1 { PLUS } else { MINUS };
    (0..1u64 << sites.len())
        .map(|mask| {
            let external: f64 = field
                .iter()
                .enumerate()
                .map(|(k, f)| if mask >> k & 1 == 1 { f.1 } else { f.0 })
                .sum();
            let internal: f64 = bonds.iter().map(|&(k, l)| spec.bond_log_weight(spin(mask, k), spin(mask, l))).sum();
            external + internal
        })
        .collect()
}

/// Exponentiates after subtracting the maximum, then normalizes.
pub(crate) fn normalize_log(mut log_weights: Vec<f64>) -> Vec<f64> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for w in &mut log_weights {
        *w = (*w - max).exp();
        total += *w;
    }
    for w in &mut log_weights {
        *w /= total;
    }
    log_weights
}

/// Compares `∫ P_Λ(· | z) P_Δ(dz | y)` with `P_Δ(· | y)` for `Λ ⊆ Δ`.
///
/// Returns the largest discrepancy over all events of the outer region,
/// i.e. the total-variation distance between the composed and direct laws on
/// `A^Δ`. Events of the inner region are a subfamily, so this bounds the
/// inner-event discrepancy as well.
pub fn check_consistency<S: NearestNeighborSpecification + ?Sized>(
    spec: &S,
    inner: &SiteSet,
    outer: &SiteSet,
    exterior: &Fragment,
) -> Result<f64> {
    if !inner.is_subset(outer) {
        return Err(Error::NotSubset);
    }
    if inner.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let direct = finite_volume_kernel(spec, outer, exterior)?;
    if inner == outer {
        return Ok(0.0);
    }
    let outer_sites = direct.sites();
    let position: HashMap<Site, usize> = outer_sites.iter().enumerate().map(|(k, s)| (*s, k)).collect();
    let inner_sites: Vec<Site> = inner.iter().collect();
    let inner_bits: Vec<usize> = inner_sites.iter().map(|s| position[s]).collect();
    let inner_clear: u64 = !inner_bits.iter().fold(0u64, |m, &b| m | 1 << b);
    let scatter: Vec<u64> = (0..1u64 << inner_sites.len())
        .map(|x| inner_bits.iter().enumerate().fold(0u64, |m, (k, &b)| m | (x >> k & 1) << b))
        .collect();

    // Exterior of the inner region: sites of the outer region (read from z)
    // and sites beyond it (read from y).
    let inner_ext: Vec<(Site, Option<usize>)> =
        inner.outer_boundary().iter().map(|s| (s, position.get(&s).copied())).collect();
    for (s, p) in &inner_ext {
        if p.is_none() && exterior.get(*s).is_none() {
            return Err(Error::MissingExterior(*s));
        }
    }

    let mut cache: HashMap<u64, Vec<f64>> = HashMap::new();
    let mut composed = vec![0.0; direct.weights().len()];
    for (z, &pz) in direct.weights().iter().enumerate() {
        let z = z as u64;
        let key = inner_ext
            .iter()
            .enumerate()
            .fold(0u64, |m, (k, (_, p))| match p {
                Some(b) => m | (z >> b & 1) << k,
                None => m,
            });
        let kernel = cache.entry(key).or_insert_with(|| {
            let outside = |s: Site| match position.get(&s) {
                Some(&b) => {
                    if z >> b & 1 == 1 {
                        PLUS
                    } else {
                        MINUS
                    }
                }
                None => exterior.get(s).unwrap_or(0),
            };
            normalize_log(region_log_weights(spec, &inner_sites, outside))
        });
        let base = z & inner_clear;
        for (x, &px) in kernel.iter().enumerate() {
            composed[(base | scatter[x]) as usize] += pz * px;
        }
    }
    let (mut pos, mut neg) = (0.0, 0.0);
    for (c, d) in composed.iter().zip(direct.weights()) {
        let diff = c - d;
        if diff > 0.0 {
            pos += diff;
        } else {
            neg -= diff;
        }
    }
    Ok(f64::max(pos, neg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::neighbors;

    fn ising(beta: f64) -> SpecificationParams {
        SpecificationParams::ising(beta).unwrap()
    }

    fn uniform_exterior(region: &SiteSet, spin: Spin) -> Fragment {
        Fragment::uniform(&region.outer_boundary(), spin)
    }

    #[test]
    fn one_point_examples() {
        for s in [-4, -2, 0, 2, 4] {
            assert_eq!(ising_one_point(&ising(0.0), s).unwrap(), 0.5);
        }
        for beta in [0.1, 0.5, 1.0, 3.0] {
            let p = ising_one_point(&ising(beta), -4).unwrap();
            assert!((p - 1.0 / (1.0 + (8.0 * beta).exp())).abs() < 1e-15);
        }
        let e = 1f64.exp();
        let p = ising_one_point(&ising(0.25), 4).unwrap();
        assert!((p - e / (e + 1.0 / e)).abs() < 1e-15);
        assert!((p - 0.880_797_1).abs() < 1e-7);
        assert!(matches!(ising_one_point(&ising(0.3), 3), Err(Error::InvalidNeighborSum(3))));
        assert!(SpecificationParams::ising(-0.1).is_err());
        assert!(SpecificationParams::ising(f64::NAN).is_err());
    }

    #[test]
    fn one_point_monotone_in_sum_and_beta() {
        let sums = [-4, -2, 0, 2, 4];
        for beta in [0.0, 0.3, 0.9, 2.0] {
            let p = ising(beta);
            for w in sums.windows(2) {
                assert!(ising_one_point(&p, w[0]).unwrap() <= ising_one_point(&p, w[1]).unwrap());
            }
        }
        for s in [2, 4] {
            let mut last = 0.0;
            for beta in [0.0, 0.1, 0.4, 1.0, 5.0] {
                let v = ising_one_point(&ising(beta), s).unwrap();
                assert!(v >= last);
                last = v;
            }
        }
    }

    #[test]
    fn extremal_rate_examples() {
        assert_eq!(extremal_rates(&ising(0.0)), ExtremalRates { lambda0_plus: 0.5, lambda0_minus: 0.5 });
        let r = extremal_rates(&ising(2f64.ln() / 8.0));
        assert!((r.lambda0_plus - 1.0 / 3.0).abs() < 1e-15);
        assert!((r.lambda0_minus - 1.0 / 3.0).abs() < 1e-15);
        let r = extremal_rates(&ising(1.0));
        assert!((r.lambda0_plus - 1.0 / (1.0 + 8f64.exp())).abs() < 1e-18);
        assert!((r.lambda0_plus - 3.3535e-4).abs() < 1e-8);
    }

    #[test]
    fn extremal_rates_match_minimum_over_neighbor_sums_exactly() {
        for beta in [0.0, 0.2, 0.44, 1.0, 7.5] {
            let p = ising(beta);
            let r = extremal_rates(&p);
            let min = [-4, -2, 0, 2, 4].iter().map(|&s| ising_one_point(&p, s).unwrap()).fold(1.0, f64::min);
            assert_eq!(r.lambda0_plus, min);
            assert_eq!(r.lambda0_plus, r.lambda0_minus);
        }
    }

    #[test]
    fn single_site_kernel() {
        let region: SiteSet = [Site::new(0, 0)].into_iter().collect();
        let plus = uniform_exterior(&region, PLUS);
        let k = finite_volume_kernel(&ising(0.0), &region, &plus).unwrap();
        assert_eq!(k.weights(), &[0.5, 0.5]);
        for beta in [0.3, 1.0, 4.0] {
            let k = finite_volume_kernel(&ising(beta), &region, &plus).unwrap();
            let (a, b) = ((4.0 * beta).exp(), (-4.0 * beta).exp());
            assert!((k.weight_of_mask(1) - a / (a + b)).abs() < 1e-14);
        }
    }

    #[test]
    fn two_site_kernel_matches_one_point_chain() {
        // Brook's identity: p(x)/p(x') is a product of one-point ratios along
        // a chain of single-site changes, the other site held fixed.
        let beta = 0.5;
        let spec = ising(beta);
        let (a, b) = (Site::new(0, 0), Site::new(0, 1));
        let region: SiteSet = [a, b].into_iter().collect();
        let ext = uniform_exterior(&region, PLUS);
        let k = finite_volume_kernel(&spec, &region, &ext).unwrap();

        let cond = |site: Site, spin: Spin, other: Spin| {
            let nbrs = site.neighbor_array().map(|n| if region.contains(n) { other } else { PLUS });
            spec.one_point(spin, nbrs)
        };
        // ratio of each configuration to (-,-)
        let ratio = |xa: Spin, xb: Spin| {
            let ra = cond(a, xa, MINUS) / cond(a, MINUS, MINUS);
            let rb = cond(b, xb, xa) / cond(b, MINUS, xa);
            ra * rb
        };
        let total: f64 = [(MINUS, MINUS), (PLUS, MINUS), (MINUS, PLUS), (PLUS, PLUS)]
            .iter()
            .map(|&(xa, xb)| ratio(xa, xb))
            .sum();
        let chained = ratio(PLUS, PLUS) / total;
        assert!((k.weight_of_mask(0b11) - chained).abs() < 1e-12);
    }

    #[test]
    fn kernel_weights_sum_to_one_and_flip_symmetric() {
        let region = SiteSet::block(Site::new(0, 0), 3, 3);
        for beta in [0.0, 0.4, 1.3, 50.0] {
            let spec = ising(beta);
            let kp = finite_volume_kernel(&spec, &region, &uniform_exterior(&region, PLUS)).unwrap();
            let km = finite_volume_kernel(&spec, &region, &uniform_exterior(&region, MINUS)).unwrap();
            let sum: f64 = kp.weights().iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            if beta < 10.0 {
                assert!(kp.weights().iter().all(|&w| w > 0.0));
            }
            let full = (1u64 << 9) - 1;
            for m in 0..=full {
                let (x, y) = (kp.weight_of_mask(m), km.weight_of_mask(full ^ m));
                // the two tables are normalized with sums taken in different orders
                assert!((x - y).abs() <= 1e-13 * x.max(y).max(1e-300), "beta {beta} mask {m}");
            }
        }
    }

    #[test]
    fn kernel_errors() {
        let spec = ising(0.5);
        let big = SiteSet::block(Site::new(0, 0), 3, 7);
        let ext = uniform_exterior(&big, PLUS);
        assert!(matches!(
            finite_volume_kernel(&spec, &big, &ext),
            Err(Error::EnumerationCap { size: 21, cap: 20 })
        ));
        let region: SiteSet = [Site::new(0, 0)].into_iter().collect();
        let partial = Fragment::uniform(&neighbors(Site::new(0, 0)).difference(&[Site::new(1, 0)].into_iter().collect()), PLUS);
        assert!(matches!(finite_volume_kernel(&spec, &region, &partial), Err(Error::MissingExterior(_))));
    }

    #[test]
    fn consistency_examples() {
        let outer = SiteSet::block(Site::new(-1, -1), 3, 3);
        let plus = uniform_exterior(&outer, PLUS);
        assert_eq!(check_consistency(&ising(0.7), &outer, &outer, &plus).unwrap(), 0.0);

        let center: SiteSet = [Site::new(0, 0)].into_iter().collect();
        assert!(check_consistency(&ising(0.0), &center, &outer, &plus).unwrap() <= 1e-15);
        assert!(check_consistency(&ising(1.0), &center, &outer, &plus).unwrap() <= 1e-12);

        let stray: SiteSet = [Site::new(5, 5)].into_iter().collect();
        assert!(matches!(check_consistency(&ising(1.0), &stray, &outer, &plus), Err(Error::NotSubset)));
    }

    #[test]
    fn generic_pair_specification_composes_consistently() {
        // Pair weights with a field-like bias: not Ising, still Gibbs.
        struct Biased;
        impl NearestNeighborSpecification for Biased {
            fn bond_log_weight(&self, a: Spin, b: Spin) -> f64 {
                0.8 * (a as f64) * (b as f64) + 0.1 * (a as f64 + b as f64)
            }
        }
        let outer = SiteSet::block(Site::new(0, 0), 2, 3);
        let ext = uniform_exterior(&outer, MINUS);
        for inner in [vec![Site::new(0, 0)], vec![Site::new(0, 1), Site::new(1, 1)]] {
            let inner: SiteSet = inner.into_iter().collect();
            assert!(check_consistency(&Biased, &inner, &outer, &ext).unwrap() < 1e-12);
        }
        let r = extremal_rates(&Biased);
        assert!(r.lambda0_plus > 0.0 && r.lambda0_plus != r.lambda0_minus);
    }
}
