//! GUS state-discrimination receivers.
//!
//! A receiver on a geometrically uniform constellation is a circulant matrix
//! `A = U Λ_φ U†` with `λ_j = e^{iφ_j} g_j^{-1/2}`; the phases `φ` are its only
//! free parameters and `φ = 0` is the pretty good measurement.

use nalgebra::DMatrix;
use num_complex::Complex;

use crate::constellation::{gram_matrix, mode_matrix, Constellation, GramMatrix};
use crate::error::{Error, Result};
use crate::scalar::{cis, phase_difference, wrap_phase, Scalar};

/// Phase tuple of a GUS receiver, stored in `[0, 2π)` with `φ_0 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverSpec<T: Scalar> {
    phases: Vec<T>,
}

impl<T: Scalar> ReceiverSpec<T> {
    /// Rejects tuples whose first phase is not zero modulo `2π`.
    pub fn new(phases: Vec<T>) -> Result<Self> {
        if phases.len() < 2 {
            return Err(Error::invalid("a receiver needs at least two phases"));
        }
        if phases.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("receiver phases must be finite"));
        }
        if phase_difference(phases[0], T::zero()).abs() > T::lit(1e3) * T::eps() {
            return Err(Error::invalid(format!(
                "gauge requires phi_0 = 0, got {}",
                phases[0]
            )));
        }
        let mut phases: Vec<T> = phases.into_iter().map(wrap_phase).collect();
        phases[0] = T::zero();
        Ok(Self { phases })
    }

    /// Removes the global phase by subtracting `φ_0` from every entry.
    pub fn gauge_fixed(phases: &[T]) -> Result<Self> {
        let first = *phases
            .first()
            .ok_or_else(|| Error::invalid("empty phase tuple"))?;
        Self::new(phases.iter().map(|&p| p - first).collect())
    }

    /// Pretty good measurement: all phases zero.
    pub fn pgm(m: usize) -> Self {
        Self {
            phases: vec![T::zero(); m],
        }
    }

    /// QPSK tuple `(0, π/2, π, π/2)`.
    pub fn qpsk_plateau() -> Self {
        let h = T::frac_pi_2();
        Self {
            phases: vec![T::zero(), h, T::pi(), h],
        }
    }

    pub fn phases(&self) -> &[T] {
        &self.phases
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    /// `λ_j = e^{iφ_j} g_j^{-1/2}`.
    pub fn lambdas(&self, gram: &GramMatrix<T>) -> Vec<Complex<T>> {
        self.phases
            .iter()
            .zip(gram.fourier_eigenvalues())
            .map(|(&p, &g)| cis(p) / g.sqrt())
            .collect()
    }

    fn check_dim(&self, gram: &GramMatrix<T>) -> Result<()> {
        if self.len() != gram.dim() {
            return Err(Error::invalid(format!(
                "{} phases for a {}-state Gram matrix",
                self.len(),
                gram.dim()
            )));
        }
        Ok(())
    }
}

/// Every phase tuple related to `phases` by a receiver symmetry.
///
/// The key rate is unchanged by a cyclic relabeling of outcomes, which adds the
/// ramp `2π m j / M`, and by `φ → -φ`. Returned tuples are gauge fixed and
/// wrapped into `[0, 2π)`.
pub fn phase_orbit<T: Scalar>(phases: &[T]) -> Vec<Vec<T>> {
    let m = phases.len();
    let mf = T::from_usize_lossy(m);
    let mut out = Vec::with_capacity(2 * m);
    for sign in [T::one(), -T::one()] {
        for shift in 0..m {
            let v: Vec<T> = phases
                .iter()
                .enumerate()
                .map(|(j, &p)| {
                    let ramp = T::two_pi() * T::from_usize_lossy(shift * j % m) / mf;
                    sign * (p - phases[0]) + ramp
                })
                .map(wrap_phase)
                .collect();
            out.push(v);
        }
    }
    out
}

fn mirror_asymmetry<T: Scalar>(phases: &[T]) -> T {
    let m = phases.len();
    (1..m).fold(T::zero(), |acc, j| {
        acc + phase_difference(phases[j], phases[m - j]).abs()
    })
}

/// Canonical representative of the symmetry orbit of a phase tuple.
///
/// Picks the member closest to mirror symmetry `φ_j = φ_{M-j}`, breaking ties
/// (to 1e-9 rad) by the lexicographically smallest tuple.
pub fn canonicalize_phases<T: Scalar>(phases: &[T]) -> Vec<T> {
    let tol = T::lit(1e-9).max(T::lit(1e3) * T::eps());
    let mut best: Option<(T, Vec<T>)> = None;
    for cand in phase_orbit(phases) {
        let asym = mirror_asymmetry(&cand);
        best = match best {
            None => Some((asym, cand)),
            Some((ba, bv)) => {
                if asym < ba - tol {
                    Some((asym, cand))
                } else if asym <= ba + tol && lex_less(&cand, &bv, tol) {
                    Some((asym.min(ba), cand))
                } else {
                    Some((ba, bv))
                }
            }
        };
    }
    best.map(|(_, v)| v).unwrap_or_default()
}

fn lex_less<T: Scalar>(a: &[T], b: &[T], tol: T) -> bool {
    for (&x, &y) in a.iter().zip(b) {
        if x < y - tol {
            return true;
        }
        if x > y + tol {
            return false;
        }
    }
    false
}

/// Smallest max-abs wrapped difference between `a` and any orbit member of `b`.
pub fn phase_orbit_distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    phase_orbit(b)
        .iter()
        .map(|cand| {
            a.iter()
                .zip(cand)
                .fold(T::zero(), |acc, (&x, &y)| acc.max(phase_difference(x - a[0], y).abs()))
        })
        .fold(T::max_value().unwrap(), |acc, d| acc.min(d))
}

/// Measurement matrix `A` of a GUS receiver.
#[derive(Debug, Clone)]
pub struct ReceiverMatrix<T: Scalar> {
    a: DMatrix<Complex<T>>,
    spec: ReceiverSpec<T>,
    gram: GramMatrix<T>,
}

impl<T: Scalar> ReceiverMatrix<T> {
    pub fn matrix(&self) -> &DMatrix<Complex<T>> {
        &self.a
    }

    pub fn spec(&self) -> &ReceiverSpec<T> {
        &self.spec
    }

    pub fn gram(&self) -> &GramMatrix<T> {
        &self.gram
    }
}

/// `A_φ = U Λ_φ U†`.
pub fn build_receiver<T: Scalar>(
    spec: &ReceiverSpec<T>,
    gram: &GramMatrix<T>,
) -> Result<ReceiverMatrix<T>> {
    spec.check_dim(gram)?;
    gram.check_nonsingular()?;
    let u = mode_matrix::<T>(gram.dim());
    let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(spec.lambdas(gram)));
    let a = &u * lambda * u.adjoint();
    Ok(ReceiverMatrix {
        a,
        spec: spec.clone(),
        gram: gram.clone(),
    })
}

/// Overlap matrix `B_{jk} = ⟨μ_j|β_k⟩ = (A†G)_{jk}`.
///
/// Computed as `U diag(e^{-iφ_j} √g_j) U†`, which equals `A†G` but stays
/// bounded when some `g_j` is tiny.
pub fn measurement_overlaps<T: Scalar>(
    spec: &ReceiverSpec<T>,
    gram: &GramMatrix<T>,
) -> Result<DMatrix<Complex<T>>> {
    spec.check_dim(gram)?;
    let u = mode_matrix::<T>(gram.dim());
    let diag: Vec<Complex<T>> = spec
        .phases()
        .iter()
        .zip(gram.fourier_eigenvalues())
        .map(|(&p, &g)| cis(-p) * g.max(T::zero()).sqrt())
        .collect();
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag));
    Ok(&u * d * u.adjoint())
}

/// Bob's conditional outcome table and its marginal.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityKernel<T: Scalar> {
    cond: DMatrix<T>,
    marginal: Vec<T>,
}

impl<T: Scalar> ProbabilityKernel<T> {
    /// `cond[(k, j)] = p(j|k)`. Rows must be probability vectors.
    pub fn from_conditional(cond: DMatrix<T>) -> Result<Self> {
        let m = cond.nrows();
        if m == 0 || cond.ncols() != m {
            return Err(Error::invalid("kernel must be a nonempty square table"));
        }
        let tol = T::lit(1e-9).max(T::lit(1e3) * T::eps());
        for k in 0..m {
            let row = cond.row(k);
            if row.iter().any(|&p| !(p >= -tol) || p > T::one() + tol) {
                return Err(Error::invalid(format!("kernel row {k} has entries outside [0, 1]")));
            }
            let s = row.iter().fold(T::zero(), |a, &b| a + b);
            if (s - T::one()).abs() > tol {
                return Err(Error::invalid(format!("kernel row {k} sums to {s}")));
            }
        }
        let cond = cond.map(|p| p.max(T::zero()).min(T::one()));
        let mf = T::from_usize_lossy(m);
        let marginal = (0..m)
            .map(|j| cond.column(j).iter().fold(T::zero(), |a, &b| a + b) / mf)
            .collect();
        Ok(Self { cond, marginal })
    }

    pub fn uniform(m: usize) -> Self {
        let p = T::one() / T::from_usize_lossy(m);
        Self {
            cond: DMatrix::from_element(m, m, p),
            marginal: vec![p; m],
        }
    }

    pub fn identity(m: usize) -> Self {
        Self {
            cond: DMatrix::identity(m, m),
            marginal: vec![T::one() / T::from_usize_lossy(m); m],
        }
    }

    pub fn dim(&self) -> usize {
        self.marginal.len()
    }

    /// `p(j|k)`.
    pub fn p(&self, j: usize, k: usize) -> T {
        self.cond[(k, j)]
    }

    pub fn conditional(&self) -> &DMatrix<T> {
        &self.cond
    }

    pub fn row(&self, k: usize) -> Vec<T> {
        self.cond.row(k).iter().copied().collect()
    }

    pub fn marginal(&self) -> &[T] {
        &self.marginal
    }
}

pub fn conditional_probabilities<T: Scalar>(rx: &ReceiverMatrix<T>) -> ProbabilityKernel<T> {
    kernel_for(&rx.spec, &rx.gram).expect("receiver already validated")
}

/// Kernel of the receiver `spec` on `gram` without building `A`.
///
/// Valid even when the Gram matrix is below the singularity floor, since only
/// `A†G` enters.
pub fn kernel_for<T: Scalar>(
    spec: &ReceiverSpec<T>,
    gram: &GramMatrix<T>,
) -> Result<ProbabilityKernel<T>> {
    let b = measurement_overlaps(spec, gram)?;
    let m = gram.dim();
    let mut cond = DMatrix::from_fn(m, m, |k, j| b[(j, k)].norm_sqr());
    // rows sum to Σ_j |⟨μ_j|β_k⟩|² = 1 analytically; strip the rounding
    for k in 0..m {
        let s = cond.row(k).sum();
        if s > T::zero() {
            cond.row_mut(k).unscale_mut(s);
        }
    }
    ProbabilityKernel::from_conditional(cond)
}

/// `P_err = 1 - (1/M) Σ_k p(k|k)`.
pub fn error_probability<T: Scalar>(kernel: &ProbabilityKernel<T>) -> T {
    let m = kernel.dim();
    let hits = (0..m).fold(T::zero(), |a, k| a + kernel.p(k, k));
    (T::one() - hits / T::from_usize_lossy(m)).max(T::zero())
}

/// State vector in the photon-number basis, `|n⟩` for `n = 0..=n_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct FockVector<T: Scalar> {
    coefficients: Vec<Complex<T>>,
}

impl<T: Scalar> FockVector<T> {
    pub fn new(coefficients: Vec<Complex<T>>) -> Self {
        Self { coefficients }
    }

    pub fn vacuum() -> Self {
        Self::new(vec![Complex::new(T::one(), T::zero())])
    }

    /// Coherent state `|β⟩` truncated at `n_max`.
    pub fn coherent(beta: Complex<T>, n_max: usize) -> Self {
        let mut c = Vec::with_capacity(n_max + 1);
        let mut term = Complex::new((-beta.norm_sqr() / T::lit(2.0)).exp(), T::zero());
        c.push(term);
        for n in 1..=n_max {
            term = term * beta / T::from_usize_lossy(n).sqrt();
            c.push(term);
        }
        Self::new(c)
    }

    pub fn coefficients(&self) -> &[Complex<T>] {
        &self.coefficients
    }

    pub fn n_max(&self) -> usize {
        self.coefficients.len().saturating_sub(1)
    }

    pub fn norm_sqr(&self) -> T {
        self.coefficients
            .iter()
            .fold(T::zero(), |a, c| a + c.norm_sqr())
    }

    /// `⟨self|other⟩` over the common support.
    pub fn inner(&self, other: &Self) -> Complex<T> {
        self.coefficients
            .iter()
            .zip(&other.coefficients)
            .fold(Complex::new(T::zero(), T::zero()), |a, (x, y)| a + x.conj() * y)
    }

    /// Phase rotation `|n⟩ → e^{2πi n steps / M}|n⟩`, which maps `|β⟩` to
    /// `|β e^{2πi steps/M}⟩` and `|μ_0⟩` to `|μ_steps⟩`.
    pub fn rotated(&self, steps: usize, m: usize) -> Self {
        let mf = T::from_usize_lossy(m);
        Self::new(
            self.coefficients
                .iter()
                .enumerate()
                .map(|(n, c)| {
                    let idx = (n * steps) % m;
                    c * cis(T::two_pi() * T::from_usize_lossy(idx) / mf)
                })
                .collect(),
        )
    }
}

/// Smallest photon-number cutoff with Poisson tail below ~1e-12 for a coherent
/// state of `mean_photons`.
pub fn fock_truncation(mean_photons: f64) -> usize {
    let m = mean_photons.max(0.0);
    (m + 10.0 * m.max(1.0).sqrt() + 20.0).ceil() as usize
}

/// Fock expansion of the reference measurement vector `|μ_0⟩ = Σ_k A_{k0} |β_k⟩`:
/// coefficient `e^{-|β_0|²/2} β_0^n / √n! · λ_{(n-1) mod M}` on `|n⟩`.
pub fn reference_vector_fock<T: Scalar>(
    spec: &ReceiverSpec<T>,
    gram: &GramMatrix<T>,
    alpha_t: Complex<T>,
    n_max: usize,
) -> Result<FockVector<T>> {
    spec.check_dim(gram)?;
    gram.check_nonsingular()?;
    let s = alpha_t.norm_sqr();
    let tol = T::lit(1e-9).max(T::lit(1e3) * T::eps());
    if (s - gram.mean_photons()).abs() > tol * (T::one() + s) {
        return Err(Error::invalid(format!(
            "|alpha_t|^2 = {s} does not match the Gram mean photon number {}",
            gram.mean_photons()
        )));
    }
    let required = fock_truncation(s.as_f64());
    if n_max < required {
        return Err(Error::TruncationTooSmall { n_max, required });
    }
    let m = gram.dim();
    let lambda = spec.lambdas(gram);
    let coherent = FockVector::coherent(alpha_t, n_max);
    Ok(FockVector::new(
        coherent
            .coefficients()
            .iter()
            .enumerate()
            .map(|(n, c)| c * lambda[(n + m - 1) % m])
            .collect(),
    ))
}

/// Kernel `p(j|k) = |⟨μ_j|β_k⟩|²` evaluated by inner products in truncated
/// Fock space, with `|μ_j⟩` the rotated reference vector. Independent of the
/// matrix route used by [`kernel_for`].
pub fn fock_conditional_probabilities<T: Scalar>(
    spec: &ReceiverSpec<T>,
    constellation: &Constellation<T>,
    transmissivity: T,
) -> Result<DMatrix<T>> {
    let m = constellation.len();
    let gram = gram_matrix(constellation, transmissivity)?;
    spec.check_dim(&gram)?;
    let received = constellation.scaled_amplitudes(transmissivity);
    let n_max = fock_truncation(gram.mean_photons().as_f64());
    let mu0 = reference_vector_fock(spec, &gram, received[0], n_max)?;
    let mus: Vec<FockVector<T>> = (0..m).map(|j| mu0.rotated(j, m)).collect();
    let betas: Vec<FockVector<T>> = received
        .iter()
        .map(|&b| FockVector::coherent(b, n_max))
        .collect();
    Ok(DMatrix::from_fn(m, m, |k, j| mus[j].inner(&betas[k]).norm_sqr()))
}
