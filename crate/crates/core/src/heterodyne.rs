//! Heterodyne baseline: Bob measures both quadratures, Eve keeps the
//! reflected coherent states.
//!
//! Quadratures are in shot-noise units with `σ0² = 1`. Integrals over the
//! outcome plane use 2D Simpson on a square grid centred at the origin. The
//! integrands are invariant under 90° rotations and under `y → -y`, so only
//! the wedge `0 <= y <= x` is evaluated and weighted by its orbit size.

use std::f64::consts::PI;

use nalgebra::{Matrix4, SymmetricEigen};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::constellation::{make_constellation, psk_gram};
use crate::error::{Error, Result};
use crate::infotheory::{
    check_rate_inputs, entropy_term, eve_entropy, KgrPoint, RateTerms, ReceiverKind,
    EIGENVALUE_CLIP,
};
use crate::optimizer::{maximize_energy, OptimizationBudget};

/// Shot-noise variance.
pub const SIGMA0_SQ: f64 = 1.0;

/// Largest marginal density tolerated on the grid boundary.
pub const BOUNDARY_LIMIT: f64 = 1e-12;

/// Extent of the default grid beyond the signal amplitude, in SNU.
pub const DEFAULT_MARGIN: f64 = 11.0;

pub const DEFAULT_NODES: usize = 201;

pub const MIN_NODES: usize = 41;

const SYMBOLS: usize = 4;

/// Square Simpson grid `[-w, w]²` with an odd number of nodes per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeterodyneGrid {
    half_width: f64,
    nodes: usize,
}

impl HeterodyneGrid {
    pub fn new(half_width: f64, nodes: usize) -> Result<Self> {
        if nodes < MIN_NODES || nodes.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "heterodyne grid needs an odd node count >= {MIN_NODES}, got {nodes}"
            )));
        }
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::invalid(format!(
                "grid half width must be positive, got {half_width}"
            )));
        }
        Ok(Self { half_width, nodes })
    }

    /// Default grid for received energy `T α²`.
    pub fn for_signal(alpha2: f64, transmissivity: f64) -> Self {
        Self {
            half_width: 2.0 * (transmissivity * alpha2).max(0.0).sqrt() + DEFAULT_MARGIN,
            nodes: DEFAULT_NODES,
        }
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn step(&self) -> f64 {
        2.0 * self.half_width / (self.nodes - 1) as f64
    }

    /// Same extent, half the step.
    pub fn refined(&self) -> Self {
        Self {
            half_width: self.half_width,
            nodes: 2 * self.nodes - 1,
        }
    }

    /// True when every signal mean sits at least six standard deviations
    /// inside the grid.
    pub fn covers(&self, alpha2: f64, transmissivity: f64) -> bool {
        let reach = 2.0 * (transmissivity * alpha2).sqrt() + 6.0 * (2.0 * SIGMA0_SQ).sqrt();
        self.half_width >= reach
    }

    /// Simpson weight of node offset `a` from the centre (without `h/3`).
    fn weight(&self, offset: usize) -> f64 {
        let centre = (self.nodes - 1) / 2;
        let i = centre + offset;
        if i == self.nodes - 1 {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        }
    }
}

/// Density of outcome `(x, y)` given that Alice sent `alpha_k`.
pub fn het_conditional_pdf(x: f64, y: f64, alpha_k: Complex<f64>, transmissivity: f64) -> f64 {
    let (mx, my) = signal_mean(alpha_k, transmissivity);
    let var = 2.0 * SIGMA0_SQ;
    (-((x - mx).powi(2) + (y - my).powi(2)) / (2.0 * var)).exp() / (2.0 * PI * var)
}

fn signal_mean(alpha_k: Complex<f64>, transmissivity: f64) -> (f64, f64) {
    let s = 2.0 * SIGMA0_SQ.sqrt() * transmissivity.sqrt();
    (s * alpha_k.re, s * alpha_k.im)
}

/// Differential entropy of one conditional density, `log2(4πe σ0²)`.
pub fn conditional_entropy_bits() -> f64 {
    (4.0 * PI * std::f64::consts::E * SIGMA0_SQ).log2()
}

/// Per-point quantities shared by the quadratures and the sampling oracle.
struct Model {
    means: [(f64, f64); SYMBOLS],
    eve: Matrix4<Complex<f64>>,
    eve_pure: bool,
}

impl Model {
    fn new(alpha2: f64, transmissivity: f64) -> Result<Self> {
        let c = make_constellation(SYMBOLS, alpha2)?;
        let mut means = [(0.0, 0.0); SYMBOLS];
        for (m, a) in means.iter_mut().zip(c.amplitudes()) {
            *m = signal_mean(*a, transmissivity);
        }
        let eve_photons = (1.0 - transmissivity) * alpha2;
        let g = psk_gram(SYMBOLS, eve_photons);
        let eve = Matrix4::from_fn(|i, j| g.entries()[(i, j)]);
        Ok(Self {
            means,
            eve,
            eve_pure: eve_photons == 0.0,
        })
    }

    /// `ln p(x|k)` for every `k`.
    fn log_conditionals(&self, x: f64, y: f64) -> [f64; SYMBOLS] {
        let var = 2.0 * SIGMA0_SQ;
        let norm = (2.0 * PI * var).ln();
        self.means
            .map(|(mx, my)| -((x - mx).powi(2) + (y - my).powi(2)) / (2.0 * var) - norm)
    }

    /// Marginal `p_B(x)` and posterior weights `c_k(x)`.
    fn marginal_and_weights(&self, x: f64, y: f64) -> (f64, [f64; SYMBOLS]) {
        let logs = self.log_conditionals(x, y);
        let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let rel = logs.map(|l| (l - top).exp());
        let sum: f64 = rel.iter().sum();
        let marginal = top.exp() * sum / SYMBOLS as f64;
        (marginal, rel.map(|r| r / sum))
    }

    /// `S[ρ_{E|x}]` for posterior weights `c`.
    fn eve_conditional_entropy(&self, c: &[f64; SYMBOLS]) -> f64 {
        if self.eve_pure {
            return 0.0;
        }
        let sq = c.map(f64::sqrt);
        let h = Matrix4::from_fn(|l, k| self.eve[(l, k)] * (sq[l] * sq[k]));
        SymmetricEigen::new(h)
            .eigenvalues
            .iter()
            .map(|&x| if x < EIGENVALUE_CLIP { 0.0 } else { x })
            .fold(0.0, |a, x| a + entropy_term(x))
    }
}

/// Information terms of the heterodyne protocol at one grid resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeterodyneTerms {
    pub mutual_information: f64,
    pub holevo: f64,
    /// Largest marginal density on the grid boundary.
    pub boundary_density: f64,
    /// Simpson integral of the marginal, ideally 1.
    pub normalization: f64,
}

fn integrate(
    alpha2: f64,
    transmissivity: f64,
    grid: &HeterodyneGrid,
    with_holevo: bool,
) -> Result<HeterodyneTerms> {
    if !(alpha2 >= 0.0) || !alpha2.is_finite() {
        return Err(Error::invalid(format!("alpha^2 must be nonnegative, got {alpha2}")));
    }
    if !(transmissivity > 0.0 && transmissivity <= 1.0) {
        return Err(Error::invalid(format!(
            "transmissivity must lie in (0, 1], got {transmissivity}"
        )));
    }
    let model = Model::new(alpha2, transmissivity)?;
    let h = grid.step();
    let half = (grid.nodes - 1) / 2;
    let mut norm = 0.0;
    let mut h_marginal = 0.0;
    let mut s_cond = 0.0;
    let mut boundary: f64 = 0.0;
    for a in 0..=half {
        let x = a as f64 * h;
        let wa = grid.weight(a);
        for b in 0..=a {
            let y = b as f64 * h;
            let orbit = match (a, b) {
                (0, 0) => 1.0,
                _ if b == 0 || b == a => 4.0,
                _ => 8.0,
            };
            let w = orbit * wa * grid.weight(b);
            let (p, c) = model.marginal_and_weights(x, y);
            if a == half {
                boundary = boundary.max(p);
            }
            norm += w * p;
            if p > 0.0 {
                h_marginal -= w * p * p.log2();
            }
            if with_holevo && p > 0.0 {
                s_cond += w * p * model.eve_conditional_entropy(&c);
            }
        }
    }
    let scale = h * h / 9.0;
    if boundary > BOUNDARY_LIMIT {
        return Err(Error::GridInadequate {
            boundary,
            limit: BOUNDARY_LIMIT,
        });
    }
    let holevo = if with_holevo {
        let s_eve = eve_entropy(&psk_gram(SYMBOLS, (1.0 - transmissivity) * alpha2));
        (s_eve - scale * s_cond).max(0.0)
    } else {
        0.0
    };
    Ok(HeterodyneTerms {
        mutual_information: (scale * h_marginal - conditional_entropy_bits()).clamp(0.0, 2.0),
        holevo,
        boundary_density: boundary,
        normalization: scale * norm,
    })
}

/// `I_AB` of heterodyne detection: Simpson for `H[p_B]`, closed form for the
/// conditional entropy.
pub fn het_mutual_information(alpha2: f64, transmissivity: f64, grid: &HeterodyneGrid) -> Result<f64> {
    Ok(integrate(alpha2, transmissivity, grid, false)?.mutual_information)
}

/// `χ_BE = S[ρ_E] − ∬ p_B(x) S[ρ_{E|x}] dx`.
pub fn het_holevo(alpha2: f64, transmissivity: f64, grid: &HeterodyneGrid) -> Result<f64> {
    Ok(integrate(alpha2, transmissivity, grid, true)?.holevo)
}

/// Both information terms in one pass.
pub fn het_terms(alpha2: f64, transmissivity: f64, grid: &HeterodyneGrid) -> Result<HeterodyneTerms> {
    integrate(alpha2, transmissivity, grid, true)
}

/// `K_het(α²)` on the default grid.
pub fn het_rate(alpha2: f64, transmissivity: f64, beta: f64) -> Result<RateTerms<f64>> {
    check_rate_inputs(alpha2, transmissivity, beta)?;
    let t = het_terms(alpha2, transmissivity, &HeterodyneGrid::for_signal(alpha2, transmissivity))?;
    Ok(RateTerms::new(t.mutual_information, t.holevo, beta))
}

/// Heterodyne key rate maximized over the modulation energy.
pub fn het_kgr(transmissivity: f64, beta: f64, budget: &OptimizationBudget) -> Result<KgrPoint> {
    let best = maximize_energy(|a2| het_rate(a2, transmissivity, beta), budget)?;
    let mut point = KgrPoint::from_terms(
        ReceiverKind::Heterodyne,
        crate::constellation::distance_for(transmissivity),
        transmissivity,
        beta,
        best.alpha2,
        Vec::new(),
        best.terms,
    );
    point.evaluations = best.evaluations;
    point.budget_exhausted = best.budget_exhausted;
    Ok(point)
}

/// Sample mean and standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl Estimate {
    fn from_samples(sum: f64, sum_sq: f64, n: usize) -> Self {
        let nf = n as f64;
        let mean = sum / nf;
        let var = (sum_sq / nf - mean * mean).max(0.0) * nf / (nf - 1.0);
        Self {
            mean,
            std_error: (var / nf).sqrt(),
        }
    }

    /// `|value - mean| <= k` standard errors.
    pub fn agrees(&self, value: f64, k: f64) -> bool {
        (value - self.mean).abs() <= k * self.std_error
    }
}

/// Monte Carlo estimates of `I_AB` and `χ_BE`, drawing `(k, x)` from the
/// joint distribution.
pub fn het_monte_carlo(
    alpha2: f64,
    transmissivity: f64,
    samples: usize,
    seed: u64,
) -> Result<(Estimate, Estimate)> {
    if samples < 2 {
        return Err(Error::invalid("need at least two samples"));
    }
    let model = Model::new(alpha2, transmissivity)?;
    let s_eve = eve_entropy(&psk_gram(SYMBOLS, (1.0 - transmissivity) * alpha2));
    let sd = (2.0 * SIGMA0_SQ).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut si, mut si2, mut sc, mut sc2) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..samples {
        let k = rng.random_range(0..SYMBOLS);
        let nx: f64 = rng.sample(StandardNormal);
        let ny: f64 = rng.sample(StandardNormal);
        let (x, y) = (model.means[k].0 + sd * nx, model.means[k].1 + sd * ny);
        let logs = model.log_conditionals(x, y);
        let (p, c) = model.marginal_and_weights(x, y);
        let info = (logs[k] - p.ln()) / std::f64::consts::LN_2;
        let chi = s_eve - model.eve_conditional_entropy(&c);
        si += info;
        si2 += info * info;
        sc += chi;
        sc2 += chi * chi;
    }
    Ok((
        Estimate::from_samples(si, si2, samples),
        Estimate::from_samples(sc, sc2, samples),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pdf_peak_and_origin() {
        let a = Complex::new(0.6, -0.3);
        let (mx, my) = signal_mean(a, 0.4);
        assert!((het_conditional_pdf(mx, my, a, 0.4) - 1.0 / (4.0 * PI)).abs() < 1e-15);
        let z = Complex::new(0.0, 0.0);
        assert!((het_conditional_pdf(0.0, 0.0, z, 0.7) - 1.0 / (4.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn grid_validation() {
        assert!(HeterodyneGrid::new(10.0, 40).is_err());
        assert!(HeterodyneGrid::new(10.0, 39).is_err());
        assert!(HeterodyneGrid::new(0.0, 41).is_err());
        let g = HeterodyneGrid::new(10.0, 41).unwrap();
        assert!((g.step() - 0.5).abs() < 1e-15);
        assert_eq!(g.refined().nodes(), 81);
        assert!(HeterodyneGrid::for_signal(2.0, 0.5).covers(2.0, 0.5));
    }

    #[test]
    fn marginal_integrates_to_one() {
        for (a2, t) in [(0.5, 0.1), (1.0, 0.5), (3.0, 1.0)] {
            let terms = het_terms(a2, t, &HeterodyneGrid::for_signal(a2, t)).unwrap();
            assert!((terms.normalization - 1.0).abs() < 1e-6);
            assert!(terms.boundary_density < BOUNDARY_LIMIT);
        }
    }

    #[test]
    fn narrow_grid_is_flagged() {
        let g = HeterodyneGrid::new(6.0, 61).unwrap();
        assert!(matches!(
            het_mutual_information(1.0, 0.5, &g),
            Err(Error::GridInadequate { .. })
        ));
    }

    #[test]
    fn limits() {
        let g = HeterodyneGrid::for_signal(0.0, 0.5);
        assert!(het_mutual_information(0.0, 0.5, &g).unwrap() < 1e-9);
        assert!(het_holevo(0.0, 0.5, &g).unwrap() < 1e-9);
        let g = HeterodyneGrid::for_signal(1.0, 1.0);
        assert_eq!(het_holevo(1.0, 1.0, &g).unwrap(), 0.0);
        let g = HeterodyneGrid::for_signal(60.0, 1.0);
        assert!((het_mutual_information(60.0, 1.0, &g).unwrap() - 2.0).abs() < 1e-6);
    }

    #[test]
    fn marginal_has_quarter_turn_symmetry() {
        let m = Model::new(0.8, 0.6).unwrap();
        for (x, y) in [(0.3, 1.7), (-2.2, 0.4), (1.1, -0.9)] {
            let p = m.marginal_and_weights(x, y).0;
            let q = m.marginal_and_weights(-y, x).0;
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn monte_carlo_agrees_with_quadrature() {
        let (a2, t) = (1.0, 0.5);
        let terms = het_terms(a2, t, &HeterodyneGrid::for_signal(a2, t)).unwrap();
        let (i, chi) = het_monte_carlo(a2, t, 100_000, 7).unwrap();
        assert!(i.agrees(terms.mutual_information, 4.0), "{i:?} {terms:?}");
        assert!(chi.agrees(terms.holevo, 4.0), "{chi:?} {terms:?}");
    }
}
