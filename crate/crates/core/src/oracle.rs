//! Exact small-window computations for the observed field.
//!
//! [`exact_observed_measure`] enumerates the hidden Gibbs measure of a window
//! and pushes it through the masking channel. Conditionals read off that
//! table are the ground truth against which the context formula
//! ([`conditional_from_phi`]) and every Monte Carlo statistic are checked.

use std::collections::HashMap;

use crate::context::{compute_context, Context};
use crate::error::{Error, Result};
use crate::lattice::{interior, Configuration, Fragment, Site, SiteSet, Spin, Window, MINUS, PLUS};
use crate::sampler::{gibbs_weights, NoiseParams};
use crate::specification::{normalize_log, region_log_weights, SpecificationParams, ENUMERATION_CAP};

/// Largest window [`exact_observed_measure`] accepts.
pub const OBSERVED_CAP: usize = 16;

/// Law of the observed field on a window, indexed by
/// [`Configuration::to_mask`].
#[derive(Clone, Debug)]
pub struct ExactObservedMeasure {
    window: Window,
    epsilon: f64,
    params: SpecificationParams,
    table: Vec<f64>,
}

impl ExactObservedMeasure {
    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn params(&self) -> &SpecificationParams {
        &self.params
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn probability(&self, x: &Configuration) -> Result<f64> {
        if x.window() != &self.window {
            return Err(Error::WindowMismatch);
        }
        Ok(self.table[x.to_mask() as usize])
    }

    /// `P(X_i = +1)`.
    pub fn marginal_plus(&self, i: Site) -> Result<f64> {
        let k = self.window.index(i).ok_or(Error::SiteOutsideWindow(i))?;
        Ok(self.table.iter().enumerate().filter(|(m, _)| m >> k & 1 == 1).map(|(_, p)| p).sum())
    }

    /// `P(X_i = +1 | X = x off i)` within the window.
    pub fn conditional_plus(&self, x: &Configuration, i: Site) -> Result<f64> {
        if x.window() != &self.window {
            return Err(Error::WindowMismatch);
        }
        let k = self.window.index(i).ok_or(Error::SiteOutsideWindow(i))?;
        Ok(self.conditional_plus_mask(x.to_mask(), k))
    }

    fn conditional_plus_mask(&self, mask: u64, k: usize) -> f64 {
        let plus = self.table[(mask | 1 << k) as usize];
        let minus = self.table[(mask & !(1 << k)) as usize];
        plus / (plus + minus)
    }
}

/// Exact observed law: hidden Gibbs weights times the per-site channel
/// `q(-|-) = 1, q(-|+) = eps, q(+|+) = 1 - eps, q(+|-) = 0`.
pub fn exact_observed_measure(
    params: &SpecificationParams,
    noise: &NoiseParams,
    window: &Window,
) -> Result<ExactObservedMeasure> {
    if window.len() > OBSERVED_CAP {
        return Err(Error::EnumerationCap { size: window.len(), cap: OBSERVED_CAP });
    }
    let mut table = gibbs_weights(params, window)?;
    apply_channel(&mut table, window.len(), noise.epsilon());
    Ok(ExactObservedMeasure { window: *window, epsilon: noise.epsilon(), params: *params, table })
}

/// Applies the masking channel one site at a time, in place. Bit `k` set
/// means +1 at site `k`; the channel only ever moves mass from set to clear.
fn apply_channel(table: &mut [f64], sites: usize, eps: f64) {
    for k in 0..sites {
        let bit = 1usize << k;
        for m in 0..table.len() {
            if m & bit != 0 {
                table[m ^ bit] += eps * table[m];
                table[m] *= 1.0 - eps;
            }
        }
    }
}

fn channel(observed: Spin, hidden: Spin, eps: f64) -> f64 {
    match (observed, hidden) {
        (PLUS, PLUS) => 1.0 - eps,
        (PLUS, _) => 0.0,
        (_, PLUS) => eps,
        _ => 1.0,
    }
}

/// `φ(Λ, z) = Σ_{x²} p_Λ(x² | +) ∏_{j∈Λ} q(z_j | x²_j)`.
///
/// `z` must give a spin on `interior` and +1 on every site of its outer
/// boundary; the hidden field there is then +1 as well.
pub fn phi(params: &SpecificationParams, noise: &NoiseParams, interior: &SiteSet, z: &Fragment) -> Result<f64> {
    if interior.is_empty() {
        return Err(Error::EmptyRegion);
    }
    if interior.len() > ENUMERATION_CAP {
        return Err(Error::EnumerationCap { size: interior.len(), cap: ENUMERATION_CAP });
    }
    for s in interior.outer_boundary().iter() {
        match z.get(s) {
            Some(PLUS) => {}
            Some(_) => return Err(Error::BoundaryNotPlus(s)),
            None => return Err(Error::MissingExterior(s)),
        }
    }
    let sites: Vec<Site> = interior.iter().collect();
    let observed: Vec<Spin> =
        sites.iter().map(|&s| z.get(s).ok_or(Error::SiteOutsideWindow(s))).collect::<Result<_>>()?;
    let weights = normalize_log(region_log_weights(params, &sites, |_| PLUS));
    let eps = noise.epsilon();
    // Hidden -1 under an observed +1 contributes nothing.
    let forced_plus = observed.iter().enumerate().filter(|(_, &o)| o == PLUS).fold(0u64, |m, (k, _)| m | 1 << k);
    Ok(weights
        .iter()
        .enumerate()
        .filter(|(mask, _)| *mask as u64 & forced_plus == forced_plus)
        .map(|(mask, w)| {
            let q: f64 = observed
                .iter()
                .enumerate()
                .map(|(k, &o)| channel(o, if mask >> k & 1 == 1 { PLUS } else { MINUS }, eps))
                .product();
            w * q
        })
        .sum())
}

/// `φ(Λ, (+1, z)) / (φ(Λ, (+1, z)) + φ(Λ, (-1, z)))` with `F` the closure of
/// the context of `i` in `x` and `Λ` its interior.
pub fn conditional_from_phi(params: &SpecificationParams, noise: &NoiseParams, x: &Configuration, i: Site) -> Result<f64> {
    let context = compute_context(x, i)?;
    if !context.is_resolved() {
        return Err(Error::TruncatedContext(i));
    }
    let f = context.closure();
    let lambda = interior(&f);
    let mut z = x.fragment(&f)?;
    z.insert(i, PLUS)?;
    let plus = phi(params, noise, &lambda, &z)?;
    z.insert(i, MINUS)?;
    let minus = phi(params, noise, &lambda, &z)?;
    Ok(plus / (plus + minus))
}

/// Largest `|conditional_from_phi - exact conditional|` at `i` over every
/// window configuration whose context at `i` is resolved, and how many
/// configurations that was.
pub fn phi_discrepancy(measure: &ExactObservedMeasure, i: Site) -> Result<(usize, f64)> {
    let w = *measure.window();
    let k = w.index(i).ok_or(Error::SiteOutsideWindow(i))?;
    let noise = NoiseParams::new(measure.epsilon())?;
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for mask in 0..1u64 << w.len() {
        let x = Configuration::from_mask(w, mask);
        match conditional_from_phi(measure.params(), &noise, &x, i) {
            Ok(p) => {
                checked += 1;
                worst = worst.max((p - measure.conditional_plus_mask(mask, k)).abs());
            }
            Err(Error::TruncatedContext(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok((checked, worst))
}

/// A resolved context together with the observed spins on it.
type ContextKey = (Site, Vec<(Site, Spin)>);

fn context_key(x: &Configuration, context: &Context) -> ContextKey {
    let spins = context.members().iter().map(|s| (s, x.spin(s).expect("resolved context lies in the window"))).collect();
    (context.center(), spins)
}

/// Largest spread of the exact conditional at a site among configurations
/// that share a resolved context and its spins, over every site and every
/// window configuration.
pub fn verify_context_measurability(params: &SpecificationParams, noise: &NoiseParams, window: &Window) -> Result<f64> {
    let measure = exact_observed_measure(params, noise, window)?;
    let mut groups: HashMap<ContextKey, (f64, f64)> = HashMap::new();
    for mask in 0..1u64 << window.len() {
        let x = Configuration::from_mask(*window, mask);
        for (k, i) in window.sites().enumerate() {
            let context = compute_context(&x, i)?;
            if !context.is_resolved() {
                continue;
            }
            let p = measure.conditional_plus_mask(mask, k);
            let entry = groups.entry(context_key(&x, &context)).or_insert((p, p));
            entry.0 = entry.0.min(p);
            entry.1 = entry.1.max(p);
        }
    }
    Ok(groups.values().map(|(lo, hi)| hi - lo).fold(0.0, f64::max))
}

/// Two configurations that agree on a prescribed set of sites but have
/// different contexts at `i`, with their exact conditionals there.
#[derive(Clone, Debug, PartialEq)]
pub struct Witness {
    pub first: Configuration,
    pub second: Configuration,
    pub first_conditional: f64,
    pub second_conditional: f64,
}

impl Witness {
    pub fn discrepancy(&self) -> f64 {
        (self.first_conditional - self.second_conditional).abs()
    }
}

/// Negative control: among configurations that agree on `agree_on` but
/// have different contexts at `i` (a truncated context counting as its own
/// kind), the pair whose exact conditionals at `i` differ most.
pub fn negative_control_witness(measure: &ExactObservedMeasure, i: Site, agree_on: &SiteSet) -> Result<Option<Witness>> {
    let w = *measure.window();
    let k = w.index(i).ok_or(Error::SiteOutsideWindow(i))?;
    let fixed: Vec<usize> = agree_on.iter().filter_map(|s| w.index(s)).collect();
    // pattern on agree_on -> context members -> (min, argmin, max, argmax)
    let mut groups: HashMap<u64, HashMap<Option<SiteSet>, (f64, u64, f64, u64)>> = HashMap::new();
    for mask in 0..1u64 << w.len() {
        if mask >> k & 1 == 1 {
            continue;
        }
        let x = Configuration::from_mask(w, mask);
        let context = compute_context(&x, i)?;
        let key = context.is_resolved().then(|| context.members().clone());
        let pattern = fixed.iter().fold(0u64, |m, &j| m | (mask & 1 << j));
        let p = measure.conditional_plus_mask(mask, k);
        let e = groups.entry(pattern).or_default().entry(key).or_insert((p, mask, p, mask));
        if p < e.0 {
            (e.0, e.1) = (p, mask);
        }
        if p > e.2 {
            (e.2, e.3) = (p, mask);
        }
    }
    let mut best: Option<(f64, u64, u64)> = None;
    let mut patterns: Vec<_> = groups.into_iter().collect();
    patterns.sort_by_key(|(p, _)| *p);
    for (_, by_context) in patterns {
        let mut entries: Vec<_> = by_context.into_values().collect();
        entries.sort_by_key(|e| e.1);
        for a in &entries {
            for b in &entries {
                if a.1 == b.1 {
                    continue;
                }
                let d = b.2 - a.0;
                if best.is_none_or(|(bd, _, _)| d > bd) {
                    best = Some((d, a.1, b.3));
                }
            }
        }
    }
    Ok(best.map(|(_, lo, hi)| Witness {
        first: Configuration::from_mask(w, lo),
        second: Configuration::from_mask(w, hi),
        first_conditional: measure.conditional_plus_mask(lo, k),
        second_conditional: measure.conditional_plus_mask(hi, k),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{neighbors, BoundaryCondition, Window};
    use crate::specification::ising_one_point;

    fn ising(beta: f64) -> SpecificationParams {
        SpecificationParams::ising(beta).unwrap()
    }

    fn noise(eps: f64) -> NoiseParams {
        NoiseParams::new(eps).unwrap()
    }

    /// Sum over hidden and observed configurations with no shortcuts.
    fn naive_table(params: &SpecificationParams, eps: f64, window: &Window) -> Vec<f64> {
        let hidden = gibbs_weights(params, window).unwrap();
        let n = window.len();
        (0..1u64 << n)
            .map(|obs| {
                (0..1u64 << n)
                    .map(|h| {
                        let q: f64 = (0..n)
                            .map(|k| {
                                let o = if obs >> k & 1 == 1 { PLUS } else { MINUS };
                                let x = if h >> k & 1 == 1 { PLUS } else { MINUS };
                                channel(o, x, eps)
                            })
                            .product();
                        hidden[h as usize] * q
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn channel_transform_matches_double_enumeration() {
        for bc in [BoundaryCondition::AllPlus, BoundaryCondition::AllMinus, BoundaryCondition::Free] {
            let w = Window::new(Site::new(0, 0), 2, 3, bc).unwrap();
            for (beta, eps) in [(0.0, 0.3), (0.7, 0.1), (1.3, 0.9)] {
                let m = exact_observed_measure(&ising(beta), &noise(eps), &w).unwrap();
                let naive = naive_table(&ising(beta), eps, &w);
                for (a, b) in m.table().iter().zip(&naive) {
                    assert!((a - b).abs() < 1e-14);
                }
                assert!((m.table().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_site_plus_value() {
        let w = Window::square(1, BoundaryCondition::AllPlus).unwrap();
        let (beta, eps) = (0.6, 0.25);
        let m = exact_observed_measure(&ising(beta), &noise(eps), &w).unwrap();
        let e = (4.0 * beta).exp();
        let expected = (1.0 - eps) * e / (e + 1.0 / e);
        assert!((m.marginal_plus(Site::new(0, 0)).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn independent_sites_closed_form() {
        let w = Window::square(3, BoundaryCondition::AllPlus).unwrap();
        let eps = 0.35;
        let m = exact_observed_measure(&ising(0.0), &noise(eps), &w).unwrap();
        for (mask, p) in m.table().iter().enumerate() {
            let plus = (mask as u64).count_ones() as i32;
            let expected = ((1.0 - eps) / 2.0).powi(plus) * ((1.0 + eps) / 2.0).powi(9 - plus);
            assert!((p - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn small_noise_recovers_gibbs_table() {
        let w = Window::square(2, BoundaryCondition::AllPlus).unwrap();
        let gibbs = gibbs_weights(&ising(0.5), &w).unwrap();
        for eps in [1e-2, 1e-3, 1e-5] {
            let m = exact_observed_measure(&ising(0.5), &noise(eps), &w).unwrap();
            let tv: f64 = m.table().iter().zip(&gibbs).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0;
            assert!(tv < 10.0 * eps);
        }
    }

    #[test]
    fn observed_plus_needs_hidden_plus() {
        // P(all observed +1) = (1 - eps)^n P(all hidden +1)
        let w = Window::square(3, BoundaryCondition::AllMinus).unwrap();
        let eps = 0.2;
        let m = exact_observed_measure(&ising(0.4), &noise(eps), &w).unwrap();
        let gibbs = gibbs_weights(&ising(0.4), &w).unwrap();
        let all = (1u64 << 9) - 1;
        assert!((m.table()[all as usize] - (1.0 - eps).powi(9) * gibbs[all as usize]).abs() < 1e-16);
    }

    #[test]
    fn cap_is_enforced() {
        let w = Window::square(5, BoundaryCondition::AllPlus).unwrap();
        assert!(matches!(exact_observed_measure(&ising(0.1), &noise(0.1), &w), Err(Error::EnumerationCap { .. })));
    }

    fn single(i: Site, spin: Spin) -> Fragment {
        let mut z = Fragment::uniform(&crate::lattice::neighbors(i), PLUS);
        z.insert(i, spin).unwrap();
        z
    }

    #[test]
    fn phi_hand_expansions() {
        let i = Site::new(0, 0);
        let lambda: SiteSet = [i].into_iter().collect();
        for (beta, eps) in [(0.0, 0.5), (0.3, 0.1), (1.2, 0.7)] {
            let p = ising_one_point(&ising(beta), 4).unwrap();
            let plus = phi(&ising(beta), &noise(eps), &lambda, &single(i, PLUS)).unwrap();
            let minus = phi(&ising(beta), &noise(eps), &lambda, &single(i, MINUS)).unwrap();
            assert!((plus - (1.0 - eps) * p).abs() < 1e-15);
            assert!((minus - (eps + (1.0 - eps) * (1.0 - p))).abs() < 1e-15);
            assert!((plus + minus - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn phi_sums_to_one_over_region() {
        let lambda = SiteSet::block(Site::new(0, 0), 2, 2);
        let sites: Vec<Site> = lambda.iter().collect();
        let mut total = 0.0;
        for mask in 0..16u64 {
            let mut z = Fragment::uniform(&lambda.outer_boundary(), PLUS);
            for (k, &s) in sites.iter().enumerate() {
                z.insert(s, if mask >> k & 1 == 1 { PLUS } else { MINUS }).unwrap();
            }
            let v = phi(&ising(0.8), &noise(0.3), &lambda, &z).unwrap();
            assert!((0.0..=1.0).contains(&v));
            total += v;
        }
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn phi_rejects_minus_boundary() {
        let i = Site::new(0, 0);
        let lambda: SiteSet = [i].into_iter().collect();
        let mut z = single(i, PLUS);
        z.insert(Site::new(1, 0), MINUS).unwrap();
        assert!(matches!(phi(&ising(0.5), &noise(0.1), &lambda, &z), Err(Error::BoundaryNotPlus(_))));
    }

    #[test]
    fn four_plus_neighbors_closed_form() {
        let w = Window::centered(1, BoundaryCondition::AllPlus).unwrap();
        let x = Configuration::filled(w, PLUS).unwrap();
        let i = Site::new(0, 0);
        let p = conditional_from_phi(&ising(0.0), &noise(0.5), &x, i).unwrap();
        assert!((p - 0.25).abs() < 1e-15);
        for (beta, eps) in [(0.4f64, 0.2), (1.0, 0.05)] {
            let e = (4.0 * beta).exp();
            let p = conditional_from_phi(&ising(beta), &noise(eps), &x, i).unwrap();
            assert!((p - (1.0 - eps) * e / (e + 1.0 / e)).abs() < 1e-14);
        }
    }

    #[test]
    fn truncated_context_is_an_error() {
        let w = Window::centered(1, BoundaryCondition::AllPlus).unwrap();
        let mut x = Configuration::filled(w, PLUS).unwrap();
        x.set(Site::new(1, 0), MINUS).unwrap();
        assert!(matches!(
            conditional_from_phi(&ising(0.5), &noise(0.1), &x, Site::new(0, 0)),
            Err(Error::TruncatedContext(_))
        ));
    }

    #[test]
    fn phi_formula_matches_exact_conditionals_on_4x4() {
        let w = Window::square(4, BoundaryCondition::AllPlus).unwrap();
        for (beta, eps) in [(0.3, 0.2), (0.9, 0.4)] {
            let m = exact_observed_measure(&ising(beta), &noise(eps), &w).unwrap();
            for i in [Site::new(1, 1), Site::new(2, 1), Site::new(1, 2), Site::new(2, 2)] {
                let (checked, worst) = phi_discrepancy(&m, i).unwrap();
                assert!(checked > 16);
                assert!(worst < 1e-10, "beta {beta} eps {eps} site {i}: {worst}");
            }
        }
    }

    #[test]
    fn measurability_on_small_windows() {
        let w = Window::square(3, BoundaryCondition::AllPlus).unwrap();
        assert!(verify_context_measurability(&ising(0.0), &noise(0.3), &w).unwrap() < 1e-12);
        assert!(verify_context_measurability(&ising(0.8), &noise(0.2), &w).unwrap() < 1e-10);
    }

    #[test]
    fn negative_control_finds_a_witness() {
        let w = Window::square(3, BoundaryCondition::AllPlus).unwrap();
        let m = exact_observed_measure(&ising(0.8), &noise(0.2), &w).unwrap();
        let i = Site::new(1, 1);
        let witness = negative_control_witness(&m, i, &SiteSet::new()).unwrap().unwrap();
        assert!(witness.discrepancy() > 1e-3);
        assert_ne!(compute_context(&witness.first, i).unwrap(), compute_context(&witness.second, i).unwrap());
        // on 3x3 every configuration with a -1 neighbor is truncated, so
        // agreeing on the neighbors forces equal contexts
        assert!(negative_control_witness(&m, i, &neighbors(i)).unwrap().is_none());
    }

    #[test]
    fn neighbors_alone_do_not_determine_the_conditional() {
        let w = Window::new(Site::new(0, 0), 3, 5, BoundaryCondition::AllPlus).unwrap();
        let m = exact_observed_measure(&ising(0.8), &noise(0.2), &w).unwrap();
        let i = Site::new(1, 2);
        let witness = negative_control_witness(&m, i, &neighbors(i)).unwrap().unwrap();
        assert!(witness.discrepancy() > 1e-3);
        for n in i.neighbor_array() {
            assert_eq!(witness.first.spin(n), witness.second.spin(n));
        }
        assert_ne!(compute_context(&witness.first, i).unwrap(), compute_context(&witness.second, i).unwrap());
    }
}
