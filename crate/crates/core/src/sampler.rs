//! Draws from finite-volume Ising measures and from their masked observations.
//!
//! Randomness comes from [`RngStream`], a ChaCha8 generator keyed by a 64-bit
//! seed and a 64-bit stream id. ChaCha is counter based: the `k`-th number of
//! a stream is a pure function of `(seed, stream, k)`, and every sampler here
//! consumes draws in a fixed order (sweep by sweep, sites row-major), so a
//! `(seed, stream, sweep, site)` tuple always sees the same number on every
//! platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{BoundaryCondition, Configuration, Spin, Window, MINUS, PLUS};
use crate::specification::{heat_bath_table, normalize_log, region_log_weights, SpecificationParams, ENUMERATION_CAP};

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RngStream { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.random()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    epsilon: f64,
}

impl NoiseParams {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidEpsilon(epsilon));
        }
        Ok(NoiseParams { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// Exact sampler for a window small enough to enumerate.
#[derive(Clone, Debug)]
pub struct ExactSampler {
    window: Window,
    cdf: Vec<f64>,
}

impl ExactSampler {
    pub fn new(params: &SpecificationParams, window: &Window) -> Result<Self> {
        Ok(ExactSampler { window: *window, cdf: cumulative(&gibbs_weights(params, window)?) })
    }

    pub fn sample(&self, rng: &mut RngStream) -> Configuration {
        let u = rng.uniform();
        let mask = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
        Configuration::from_mask(self.window, mask as u64)
    }
}

/// Finite-volume Gibbs weights of every window configuration, indexed by
/// [`Configuration::to_mask`].
pub fn gibbs_weights(params: &SpecificationParams, window: &Window) -> Result<Vec<f64>> {
    if window.len() > ENUMERATION_CAP {
        return Err(Error::EnumerationCap { size: window.len(), cap: ENUMERATION_CAP });
    }
    let sites: Vec<_> = window.sites().collect();
    let ext = window.boundary().exterior_spin();
    Ok(normalize_log(region_log_weights(params, &sites, |_| ext)))
}

fn cumulative(weights: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

pub fn sample_exact(params: &SpecificationParams, window: &Window, rng: &mut RngStream) -> Result<Configuration> {
    Ok(ExactSampler::new(params, window)?.sample(rng))
}

/// Systematic-scan heat-bath chain on a window.
#[derive(Clone, Debug)]
pub struct ChainState {
    window: Window,
    params: SpecificationParams,
    /// Window spins inside a one-site ring of exterior spins, row-major with
    /// row length `width + 2`.
    grid: Vec<Spin>,
    table: [f64; 9],
    sweeps: u64,
}

impl ChainState {
    pub fn new(params: SpecificationParams, start: Configuration) -> Self {
        let window = *start.window();
        let (h, w) = (window.height(), window.width());
        let mut grid = vec![window.boundary().exterior_spin(); (h + 2) * (w + 2)];
        for (r, row) in start.spins().chunks(w).enumerate() {
            grid[(r + 1) * (w + 2) + 1..][..w].copy_from_slice(row);
        }
        ChainState { window, params, grid, table: heat_bath_table(&params), sweeps: 0 }
    }

    /// Chain started from the configuration that agrees with the boundary
    /// (all plus for free boundaries).
    pub fn aligned(params: SpecificationParams, window: Window) -> Self {
        let spin = if window.boundary() == BoundaryCondition::AllMinus { MINUS } else { PLUS };
        ChainState::new(params, Configuration::from_raw(window, vec![spin; window.len()]))
    }

    pub fn sweeps(&self) -> u64 {
        self.sweeps
    }

    pub fn params(&self) -> &SpecificationParams {
        &self.params
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn configuration(&self) -> Configuration {
        let w = self.window.width();
        let spins = self.grid.chunks(w + 2).skip(1).take(self.window.height()).flat_map(|row| &row[1..=w]).copied();
        Configuration::from_raw(self.window, spins.collect())
    }

    /// Heat-bath probability of +1 at grid position `g`.
    #[inline]
    fn plus_probability(&self, g: usize) -> f64 {
        let stride = self.window.width() + 2;
        let s = self.grid[g - 1] as i32 + self.grid[g + 1] as i32 + self.grid[g - stride] as i32 + self.grid[g + stride] as i32;
        self.table[(s + 4) as usize]
    }

    /// Grid positions of the window sites in row-major order.
    fn positions(&self) -> impl Iterator<Item = usize> {
        let (h, w) = (self.window.height(), self.window.width());
        (1..=h).flat_map(move |r| (1..=w).map(move |c| r * (w + 2) + c))
    }

    /// One row-major pass resampling every site from its one-point conditional.
    pub fn sweep(&mut self, rng: &mut RngStream) {
        let (h, w) = (self.window.height(), self.window.width());
        let stride = w + 2;
        let grid = &mut self.grid[..];
        for r in 1..=h {
            let row = r * stride;
            for g in row + 1..=row + w {
                let s = grid[g - 1] as i32 + grid[g + 1] as i32 + grid[g - stride] as i32 + grid[g + stride] as i32;
                grid[g] = if rng.uniform() < self.table[(s + 4) as usize] { PLUS } else { MINUS };
            }
        }
        self.sweeps += 1;
    }

    pub fn run(&mut self, sweeps: u64, rng: &mut RngStream) {
        for _ in 0..sweeps {
            self.sweep(rng);
        }
    }
}

pub fn glauber_sweep(mut state: ChainState, rng: &mut RngStream) -> ChainState {
    state.sweep(rng);
    state
}

/// Advances two chains on the same window with one shared uniform per site
/// update. Heat-bath probabilities are monotone in the neighbor sum, so a
/// coordinatewise order between the chains is preserved.
pub fn coupled_sweep(lower: &mut ChainState, upper: &mut ChainState, rng: &mut RngStream) -> Result<()> {
    if lower.window != upper.window {
        return Err(Error::WindowMismatch);
    }
    for g in lower.positions() {
        let u = rng.uniform();
        let (pl, pu) = (lower.plus_probability(g), upper.plus_probability(g));
        lower.grid[g] = if u < pl { PLUS } else { MINUS };
        upper.grid[g] = if u < pu { PLUS } else { MINUS };
    }
    lower.sweeps += 1;
    upper.sweeps += 1;
    Ok(())
}

/// I.i.d. field with `P(-1) = epsilon`.
pub fn sample_noise_field(noise: &NoiseParams, window: &Window, rng: &mut RngStream) -> Configuration {
    let spins = (0..window.len()).map(|_| if rng.uniform() < noise.epsilon { MINUS } else { PLUS }).collect();
    Configuration::from_raw(*window, spins)
}

/// Pointwise minimum of two configurations on the same window.
pub fn mask(x1: &Configuration, x2: &Configuration) -> Result<Configuration> {
    if x1.window() != x2.window() {
        return Err(Error::WindowMismatch);
    }
    let spins = x1.spins().iter().zip(x2.spins()).map(|(a, b)| *a.min(b)).collect();
    Ok(Configuration::from_raw(*x1.window(), spins))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct McmcSettings {
    pub burn_in: u64,
    pub thin: u64,
}

impl McmcSettings {
    /// 200 sweeps per unit of window side for burn-in, one side's worth between draws.
    pub fn default_for(window: &Window) -> Self {
        let side = window.height().max(window.width()) as u64;
        McmcSettings { burn_in: 200 * side, thin: side }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SamplingMethod {
    Exact,
    Mcmc(McmcSettings),
}

enum HiddenSource {
    Exact(ExactSampler),
    Chain { state: Box<ChainState>, settings: McmcSettings },
}

/// Repeated draws of the observed field `hidden ∧ noise`.
///
/// With MCMC the first draw runs the burn-in and later draws advance the same
/// chain by `thin` sweeps; each draw takes a fresh noise field.
pub struct ObservedSampler {
    noise: NoiseParams,
    window: Window,
    hidden: HiddenSource,
}

impl ObservedSampler {
    pub fn new(params: &SpecificationParams, noise: &NoiseParams, window: &Window, method: SamplingMethod) -> Result<Self> {
        let hidden = match method {
            SamplingMethod::Exact => HiddenSource::Exact(ExactSampler::new(params, window)?),
            SamplingMethod::Mcmc(settings) => {
                HiddenSource::Chain { state: Box::new(ChainState::aligned(*params, *window)), settings }
            }
        };
        Ok(ObservedSampler { noise: *noise, window: *window, hidden })
    }

    pub fn draw_hidden(&mut self, rng: &mut RngStream) -> Configuration {
        match &mut self.hidden {
            HiddenSource::Exact(sampler) => sampler.sample(rng),
            HiddenSource::Chain { state, settings } => {
                let sweeps = if state.sweeps() == 0 { settings.burn_in.max(1) } else { settings.thin.max(1) };
                state.run(sweeps, rng);
                state.configuration()
            }
        }
    }

    pub fn draw(&mut self, rng: &mut RngStream) -> Configuration {
        let hidden = self.draw_hidden(rng);
        let noise = sample_noise_field(&self.noise, &self.window, rng);
        mask(&hidden, &noise).expect("same window")
    }
}

/// One draw from the finite-window surrogate of the observed field.
pub fn sample_observed(
    params: &SpecificationParams,
    noise: &NoiseParams,
    window: &Window,
    rng: &mut RngStream,
    method: SamplingMethod,
) -> Result<Configuration> {
    Ok(ObservedSampler::new(params, noise, window, method)?.draw(rng))
}
