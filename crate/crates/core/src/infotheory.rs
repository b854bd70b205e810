//! Shannon and von Neumann entropies, Eve's states and the key generation
//! rate `K = β I_AB − χ_BE` under reverse reconciliation.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::constellation::{gram_matrix, psk_gram, Constellation, GramMatrix};
use crate::error::{Error, Result};
use crate::receivers::{kernel_for, ProbabilityKernel, ReceiverSpec};
use crate::scalar::Scalar;

/// Outcomes rarer than this are dropped from the Holevo sum.
pub const OUTCOME_FLOOR: f64 = 1e-15;

/// Eigenvalues below this are clipped to zero before taking entropies.
pub const EIGENVALUE_CLIP: f64 = 1e-12;

pub(crate) fn entropy_term<T: Scalar>(p: T) -> T {
    if p > T::zero() {
        -p * p.log2()
    } else {
        T::zero()
    }
}

/// `H[p] = -Σ p log2 p`, with `0 log 0 = 0`.
pub fn shannon_entropy<T: Scalar>(p: &[T]) -> Result<T> {
    if p.iter().any(|&x| !(x >= T::zero())) {
        return Err(Error::invalid("probabilities must be nonnegative"));
    }
    let total = p.iter().fold(T::zero(), |a, &b| a + b);
    let tol = T::lit(1e-9).max(T::lit(1e3) * T::eps());
    if (total - T::one()).abs() > tol {
        return Err(Error::invalid(format!("probabilities sum to {total}")));
    }
    Ok(p.iter().fold(T::zero(), |a, &x| a + entropy_term(x)))
}

/// `I_AB = H[p_B] − (1/M) Σ_k H[p(·|k)]` for uniform priors.
pub fn mutual_information<T: Scalar>(kernel: &ProbabilityKernel<T>) -> T {
    let m = kernel.dim();
    let h_marginal = kernel
        .marginal()
        .iter()
        .fold(T::zero(), |a, &x| a + entropy_term(x));
    let h_cond = (0..m).fold(T::zero(), |acc, k| {
        acc + (0..m).fold(T::zero(), |a, j| a + entropy_term(kernel.p(j, k)))
    }) / T::from_usize_lossy(m);
    (h_marginal - h_cond).max(T::zero())
}

/// `ρ = Σ_k c_k |β_k⟩⟨β_k|` over a fixed coherent constellation.
#[derive(Debug, Clone)]
pub struct CoherentMixture<'a, T: Scalar> {
    weights: Vec<T>,
    gram: &'a GramMatrix<T>,
}

impl<'a, T: Scalar> CoherentMixture<'a, T> {
    pub fn new(weights: Vec<T>, gram: &'a GramMatrix<T>) -> Result<Self> {
        if weights.len() != gram.dim() {
            return Err(Error::invalid(format!(
                "{} weights for {} states",
                weights.len(),
                gram.dim()
            )));
        }
        if weights.iter().any(|&w| !(w >= T::zero())) {
            return Err(Error::invalid("mixture weights must be nonnegative"));
        }
        let total = weights.iter().fold(T::zero(), |a, &b| a + b);
        let tol = T::lit(1e-9).max(T::lit(1e3) * T::eps());
        if (total - T::one()).abs() > tol {
            return Err(Error::invalid(format!("mixture weights sum to {total}")));
        }
        Ok(Self { weights, gram })
    }

    /// Equal weights `1/M`.
    pub fn uniform(gram: &'a GramMatrix<T>) -> Self {
        let w = T::one() / T::from_usize_lossy(gram.dim());
        Self {
            weights: vec![w; gram.dim()],
            gram,
        }
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }
}

/// Spectrum of `ρ`, from the Hermitian matrix `diag(√c) G diag(√c)`.
///
/// That matrix is similar to `diag(c) G`, whose eigenproblem is the one
/// solved by the coherent-state expansion of `ρ`'s eigenvectors.
pub fn mixture_eigenvalues<T: Scalar>(mix: &CoherentMixture<'_, T>) -> Vec<T> {
    let m = mix.weights.len();
    let sq: Vec<T> = mix.weights.iter().map(|w| w.sqrt()).collect();
    let g = mix.gram.entries();
    let h = DMatrix::from_fn(m, m, |l, k| g[(l, k)] * (sq[l] * sq[k]));
    let eig = SymmetricEigen::new(h);
    let clip = T::lit(EIGENVALUE_CLIP);
    let mut ev: Vec<T> = eig
        .eigenvalues
        .iter()
        .map(|&x| if x < clip { T::zero() } else { x })
        .collect();
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
    ev
}

/// `S[ρ] = -Σ λ log2 λ`.
pub fn von_neumann_entropy<T: Scalar>(mix: &CoherentMixture<'_, T>) -> T {
    mixture_eigenvalues(mix)
        .into_iter()
        .fold(T::zero(), |a, x| a + entropy_term(x))
}

/// Closed-form spectrum of the uniform QPSK mixture with `n̄` photons per state.
pub fn qpsk_uniform_spectrum<T: Scalar>(mean_photons: T) -> [T; 4] {
    let x = mean_photons;
    let half = (-x).exp() / T::lit(2.0);
    [
        half * (x.cosh() + x.cos()),
        half * (x.cosh() - x.cos()),
        half * (x.sinh() + x.sin().abs()),
        half * (x.sinh() - x.sin().abs()),
    ]
}

/// Entropy of Eve's average state, via the closed form for QPSK.
pub(crate) fn eve_entropy<T: Scalar>(eve: &GramMatrix<T>) -> T {
    if eve.dim() == 4 {
        let clip = T::lit(EIGENVALUE_CLIP);
        qpsk_uniform_spectrum(eve.mean_photons())
            .into_iter()
            .map(|x| if x < clip { T::zero() } else { x })
            .fold(T::zero(), |a, x| a + entropy_term(x))
    } else {
        von_neumann_entropy(&CoherentMixture::uniform(eve))
    }
}

/// Weights `c_k = p(j|k) / (M p_B(j))` of Eve's state conditioned on outcome `j`.
pub fn conditional_weights<T: Scalar>(kernel: &ProbabilityKernel<T>, j: usize) -> Vec<T> {
    let m = kernel.dim();
    let norm: T = (0..m).fold(T::zero(), |a, k| a + kernel.p(j, k));
    (0..m).map(|k| kernel.p(j, k) / norm).collect()
}

/// `χ_BE = S[ρ_E] − Σ_j p_B(j) S[ρ_{E|j}]` with Eve holding `|√(1−T) α_k⟩`.
pub fn holevo_information<T: Scalar>(
    kernel: &ProbabilityKernel<T>,
    constellation: &Constellation<T>,
    transmissivity: T,
) -> Result<T> {
    if !(transmissivity > T::zero() && transmissivity <= T::one()) {
        return Err(Error::invalid(format!(
            "transmissivity must lie in (0, 1], got {transmissivity}"
        )));
    }
    if kernel.dim() != constellation.len() {
        return Err(Error::invalid("kernel and constellation sizes differ"));
    }
    let eve = gram_matrix(constellation, T::one() - transmissivity)?;
    Ok(holevo_with_eve_gram(kernel, &eve))
}

pub(crate) fn holevo_with_eve_gram<T: Scalar>(
    kernel: &ProbabilityKernel<T>,
    eve: &GramMatrix<T>,
) -> T {
    let s_total = eve_entropy(eve);
    let floor = T::lit(OUTCOME_FLOOR);
    let mut s_cond = T::zero();
    for (j, &pb) in kernel.marginal().iter().enumerate() {
        if pb < floor {
            continue;
        }
        let mix = CoherentMixture {
            weights: conditional_weights(kernel, j),
            gram: eve,
        };
        s_cond += pb * von_neumann_entropy(&mix);
    }
    (s_total - s_cond).max(T::zero())
}

/// Information terms of a key rate evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateTerms<T> {
    pub mutual_information: T,
    pub holevo: T,
    pub rate: T,
}

impl<T: Scalar> RateTerms<T> {
    pub fn new(mutual_information: T, holevo: T, beta: T) -> Self {
        Self {
            mutual_information,
            holevo,
            rate: beta * mutual_information - holevo,
        }
    }
}

/// Key rate of an arbitrary discrete receiver described by its kernel.
pub fn rate_from_kernel<T: Scalar>(
    kernel: &ProbabilityKernel<T>,
    alpha2: T,
    transmissivity: T,
    beta: T,
) -> Result<RateTerms<T>> {
    check_rate_inputs(alpha2, transmissivity, beta)?;
    let eve = psk_gram(kernel.dim(), (T::one() - transmissivity) * alpha2);
    Ok(RateTerms::new(
        mutual_information(kernel),
        holevo_with_eve_gram(kernel, &eve),
        beta,
    ))
}

pub(crate) fn check_rate_inputs<T: Scalar>(alpha2: T, transmissivity: T, beta: T) -> Result<()> {
    if !(beta > T::zero() && beta <= T::one()) {
        return Err(Error::invalid(format!("beta must lie in (0, 1], got {beta}")));
    }
    if !(alpha2 > T::zero()) || !alpha2.is_finite() {
        return Err(Error::invalid(format!("alpha^2 must be positive, got {alpha2}")));
    }
    if !(transmissivity > T::zero() && transmissivity <= T::one()) {
        return Err(Error::invalid(format!(
            "transmissivity must lie in (0, 1], got {transmissivity}"
        )));
    }
    Ok(())
}

/// Key rate of the GUS receiver `spec` at modulation energy `alpha2`.
pub fn gus_rate<T: Scalar>(
    spec: &ReceiverSpec<T>,
    alpha2: T,
    transmissivity: T,
    beta: T,
) -> Result<RateTerms<T>> {
    check_rate_inputs(alpha2, transmissivity, beta)?;
    let bob = psk_gram(spec.len(), transmissivity * alpha2);
    bob.check_nonsingular()?;
    let kernel = kernel_for(spec, &bob)?;
    rate_from_kernel(&kernel, alpha2, transmissivity, beta)
}

/// Which receiver produced a key rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ReceiverKind {
    Pgm,
    Kor,
    Heterodyne,
    FeedForward(usize),
    /// GUS receiver at user-supplied phases.
    Fixed,
}

impl ReceiverKind {
    pub fn tag(&self) -> String {
        match self {
            ReceiverKind::Pgm => "pgm".into(),
            ReceiverKind::Kor => "kor".into(),
            ReceiverKind::Heterodyne => "het".into(),
            ReceiverKind::FeedForward(n) => format!("ff:{n}"),
            ReceiverKind::Fixed => "gus".into(),
        }
    }
}

impl std::fmt::Display for ReceiverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.tag())
    }
}

impl std::str::FromStr for ReceiverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "pgm" => Ok(ReceiverKind::Pgm),
            "kor" => Ok(ReceiverKind::Kor),
            "het" | "heterodyne" => Ok(ReceiverKind::Heterodyne),
            "gus" => Ok(ReceiverKind::Fixed),
            other => match other.strip_prefix("ff:") {
                Some(n) => {
                    let n: usize = n
                        .parse()
                        .map_err(|_| Error::invalid(format!("bad copy count in '{s}'")))?;
                    if n < 3 {
                        return Err(Error::invalid(format!("feed-forward needs N >= 3, got {n}")));
                    }
                    Ok(ReceiverKind::FeedForward(n))
                }
                None => Err(Error::invalid(format!("unknown receiver '{s}'"))),
            },
        }
    }
}

/// One (optionally optimized) key-rate evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KgrPoint {
    pub distance_km: f64,
    #[serde(rename = "T")]
    pub transmissivity: f64,
    pub beta: f64,
    pub alpha2: f64,
    pub phases: Vec<f64>,
    #[serde(rename = "I_AB")]
    pub mutual_information: f64,
    #[serde(rename = "chi_BE")]
    pub holevo: f64,
    #[serde(rename = "K")]
    pub rate: f64,
    pub receiver: String,
    /// Objective evaluations spent; zero for a plain evaluation.
    #[serde(default)]
    pub evaluations: usize,
    #[serde(default)]
    pub budget_exhausted: bool,
}

impl KgrPoint {
    pub fn from_terms(
        kind: ReceiverKind,
        distance_km: f64,
        transmissivity: f64,
        beta: f64,
        alpha2: f64,
        phases: Vec<f64>,
        terms: RateTerms<f64>,
    ) -> Self {
        Self {
            distance_km,
            transmissivity,
            beta,
            alpha2,
            phases,
            mutual_information: terms.mutual_information,
            holevo: terms.holevo,
            rate: terms.rate,
            receiver: kind.tag(),
            evaluations: 0,
            budget_exhausted: false,
        }
    }
}

/// `K(φ, α²) = β I_AB − χ_BE` for a GUS receiver, with the distance inferred
/// from `T` at the default fibre loss.
pub fn kgr(spec: &ReceiverSpec<f64>, alpha2: f64, transmissivity: f64, beta: f64) -> Result<KgrPoint> {
    let terms = gus_rate(spec, alpha2, transmissivity, beta)?;
    let kind = if spec.phases().iter().all(|&p| p == 0.0) {
        ReceiverKind::Pgm
    } else {
        ReceiverKind::Fixed
    };
    Ok(KgrPoint::from_terms(
        kind,
        crate::constellation::distance_for(transmissivity),
        transmissivity,
        beta,
        alpha2,
        spec.phases().to_vec(),
        terms,
    ))
}
