//! Closed-form finiteness thresholds and bounds. Pure arithmetic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// External constants the inequalities need.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Critical probability of site percolation on the square lattice.
    pub p_star: f64,
    /// Critical inverse temperature of the 2D Ising model.
    pub beta_c: f64,
}

/// Numerical estimate of the square-lattice site percolation threshold.
pub const DEFAULT_P_STAR: f64 = 0.592746;

/// Onsager's critical point, `ln(1 + sqrt 2) / 2`.
pub fn onsager_beta_c() -> f64 {
    (1.0 + 2f64.sqrt()).ln() / 2.0
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { p_star: DEFAULT_P_STAR, beta_c: onsager_beta_c() }
    }
}

impl Thresholds {
    pub fn new(p_star: f64, beta_c: f64) -> Result<Self> {
        if !(p_star > 0.0 && p_star < 1.0) {
            return Err(Error::InvalidArgument(format!("p_star must lie in (0, 1), got {p_star}")));
        }
        if !(beta_c > 0.0 && beta_c.is_finite()) {
            return Err(Error::InvalidArgument(format!("beta_c must be positive, got {beta_c}")));
        }
        Ok(Thresholds { p_star, beta_c })
    }
}

/// `(1 - eps) * lambda0_plus > 1 - p*`: every context is finite almost surely.
pub fn thm2_finite_condition(eps: f64, lambda0_plus: f64, thresholds: &Thresholds) -> bool {
    (1.0 - eps) * lambda0_plus > 1.0 - thresholds.p_star
}

/// `eps + (1 - eps) * lambda0_minus > p*`: infinite contexts occur with
/// positive probability.
pub fn thm2_infinite_condition(eps: f64, lambda0_minus: f64, thresholds: &Thresholds) -> bool {
    eps + (1.0 - eps) * lambda0_minus > thresholds.p_star
}

/// Supremum of the inverse temperatures at which the Ising model satisfies
/// the finite-context condition: `(1/8) ln((1 - eps)/(1 - p*) - 1)`.
///
/// The condition holds exactly for `beta` strictly below the returned value.
/// `None` when no `beta >= 0` can satisfy it.
pub fn remark_beta_bound(eps: f64, thresholds: &Thresholds) -> Option<f64> {
    let p = thresholds.p_star;
    if eps >= p {
        return None;
    }
    // (1 - eps)/(1 - p) - 1 = (p - eps)/(1 - p); this form is exact at eps = 2p - 1.
    let bound = ((p - eps).ln() - (1.0 - p).ln()) / 8.0;
    (bound >= 0.0).then_some(bound)
}

/// `1/3 - e^{-2 beta}`; admissible noise levels lie strictly below it.
pub fn thm3_epsilon_bound(beta: f64) -> f64 {
    1.0 / 3.0 - (-2.0 * beta).exp()
}

/// `beta > ln(3)/2` and `eps < 1/3 - e^{-2 beta}`.
pub fn thm3_region(beta: f64, eps: f64) -> bool {
    beta > 3f64.ln() / 2.0 && eps < thm3_epsilon_bound(beta)
}

/// `2 beta > ln 3 + e^{-beta}`, the temperature condition under which the
/// union bound over open paths goes to zero.
pub fn thm3_beta_admissible(beta: f64) -> bool {
    2.0 * beta > 3f64.ln() + (-beta).exp()
}

/// `(e^{-2 beta} + eps)^n`, the bound on the probability that every site of
/// a path of `n` sites reads -1 under the plus phase.
pub fn lemma1_bound(beta: f64, eps: f64, path_length: usize) -> f64 {
    ((-2.0 * beta).exp() + eps).powi(path_length as i32)
}

/// `4 * 3^(n-1)`, the number of self-avoiding paths of `n` sites starting at
/// a neighbor of a fixed site and avoiding it.
pub fn path_count_bound(n: usize) -> u128 {
    4 * 3u128.pow(n.saturating_sub(1) as u32)
}

/// `4 l 3^(l-2)`, bounding the contours of length `l` around a site.
pub fn contour_count_bound(length: usize) -> Result<u128> {
    if length < 4 || length % 2 == 1 {
        return Err(Error::InvalidArgument(format!("contour length {length} must be even and at least 4")));
    }
    Ok(4 * length as u128 * 3u128.pow(length as u32 - 2))
}

/// Noise level at which the infinite-context condition becomes an equality
/// for the Ising model at `beta`: `(p* - lambda)/(1 - lambda)`. `None` when
/// it falls outside `(0, 1)`.
pub fn thm2_infinite_epsilon_threshold(lambda0_minus: f64, thresholds: &Thresholds) -> Option<f64> {
    let e = (thresholds.p_star - lambda0_minus) / (1.0 - lambda0_minus);
    (e > 0.0 && e < 1.0).then_some(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specification::{extremal_rates, SpecificationParams};

    const P: f64 = 0.592746;

    fn th() -> Thresholds {
        Thresholds::default()
    }

    fn lambda(beta: f64) -> f64 {
        extremal_rates(&SpecificationParams::ising(beta).unwrap()).lambda0_plus
    }

    #[test]
    fn defaults() {
        assert_eq!(th().p_star, P);
        assert!((th().beta_c - 0.440_686_793_5).abs() < 1e-9);
        assert!(Thresholds::new(1.2, 0.4).is_err());
        assert!(Thresholds::new(0.5, 0.0).is_err());
    }

    #[test]
    fn finite_condition_examples() {
        assert!(thm2_finite_condition(1e-9, 0.5, &th()));
        assert!(!thm2_finite_condition(0.0, 1.0 - P, &th()));
        assert!(!thm2_finite_condition(0.2, 0.5, &th()));
    }

    #[test]
    fn infinite_condition_examples() {
        assert!(thm2_infinite_condition(0.99, 1e-6, &th()));
        assert!(!thm2_infinite_condition(0.0, 0.5, &th()));
        assert!(!thm2_infinite_condition(0.0, P, &th()));
    }

    #[test]
    fn finite_region_beta_bound_examples() {
        assert_eq!(remark_beta_bound(2.0 * P - 1.0, &th()), Some(0.0));
        let b = remark_beta_bound(0.0, &th()).unwrap();
        assert!((b - (P / (1.0 - P)).ln() / 8.0).abs() < 1e-15);
        assert!((b - 0.046_916).abs() < 1e-5);
        assert_eq!(remark_beta_bound(0.5, &th()), None);
        assert_eq!(remark_beta_bound(0.7, &th()), None);
    }

    #[test]
    fn beta_bound_round_trips_with_finite_condition() {
        for k in 0..100 {
            let eps = (k as f64 + 0.5) / 100.0;
            let bound = remark_beta_bound(eps, &th());
            for beta in [0.0, 0.005, 0.01, 0.02, 0.03, 0.04, 0.045, 0.05, 0.1] {
                let holds = thm2_finite_condition(eps, lambda(beta), &th());
                let predicted = bound.is_some_and(|b| beta < b);
                // skip points within rounding distance of the curve
                if bound.is_some_and(|b| (beta - b).abs() < 1e-12) {
                    continue;
                }
                assert_eq!(holds, predicted, "eps {eps} beta {beta}");
            }
            if let Some(b) = bound {
                assert!(thm2_finite_condition(eps, lambda(b * 0.999), &th()));
                assert!(!thm2_finite_condition(eps, lambda(b * 1.001 + 1e-12), &th()));
            }
        }
    }

    #[test]
    fn low_temperature_noise_bound_examples() {
        assert!(thm3_epsilon_bound(3f64.ln() / 2.0).abs() < 1e-16);
        assert!((thm3_epsilon_bound(2.0) - (1.0 / 3.0 - (-4f64).exp())).abs() < 1e-16);
        assert!((thm3_epsilon_bound(2.0) - 0.31502).abs() < 1e-5);
        assert!((thm3_epsilon_bound(400.0) - 1.0 / 3.0).abs() < 1e-16);
        assert!(thm3_region(2.0, 0.05));
        assert!(!thm3_region(0.5, 0.0));
    }

    #[test]
    fn path_bound_examples() {
        assert_eq!(lemma1_bound(0.0, 0.0, 1), 1.0);
        let b = lemma1_bound(1.0, 0.1, 2);
        assert!((b - ((-2f64).exp() + 0.1).powi(2)).abs() < 1e-16);
        assert!((b - 0.055_383).abs() < 1e-6);
        let b5 = lemma1_bound(1.5, 0.05, 5);
        assert!((b5 - 9.894e-6).abs() < 1e-9);
        for n in 1..20 {
            assert!(lemma1_bound(1.0, 0.1, n + 1) < lemma1_bound(1.0, 0.1, n));
            let base = (-2.0f64).exp() + 0.1;
            assert!((lemma1_bound(1.0, 0.1, n).ln() - n as f64 * base.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn contour_bound_examples() {
        assert_eq!(contour_count_bound(4).unwrap(), 144);
        assert_eq!(contour_count_bound(6).unwrap(), 1944);
        assert_eq!(contour_count_bound(8).unwrap(), 23328);
        assert!(contour_count_bound(5).is_err());
        assert!(contour_count_bound(2).is_err());
        assert_eq!(path_count_bound(1), 4);
        assert_eq!(path_count_bound(3), 36);
    }

    #[test]
    fn beta_admissibility_examples() {
        assert!(!thm3_beta_admissible(0.5));
        assert!(thm3_beta_admissible(1.0));
        assert!(thm3_beta_admissible(1e6));
    }

    #[test]
    fn infinite_threshold_curve() {
        let l = lambda(0.1);
        let e = thm2_infinite_epsilon_threshold(l, &th()).unwrap();
        assert!((e + (1.0 - e) * l - P).abs() < 1e-15);
    }
}
