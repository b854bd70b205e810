//! PSK constellations, the pure-loss channel and Gram matrices of
//! coherent-state overlaps.
//!
//! The Gram matrix of a PSK constellation is circulant, so it is diagonalized
//! by a (column-permuted) DFT matrix. Mode `j` of this crate is the Fourier
//! eigenvector whose photon-number support is the residue class
//! `n ≡ j + 1 (mod M)`; equivalently its eigenvalue is the `(j + 1) mod M`
//! entry of the forward DFT of the first Gram row. This is the labeling under
//! which the reference measurement vector carries `λ_{(n-1) mod M}` on `|n⟩`.

use nalgebra::DMatrix;
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{cis, Scalar};

/// Fibre loss used throughout, dB/km.
pub const DEFAULT_KAPPA_DB_PER_KM: f64 = 0.2;

/// Fourier eigenvalues below this are treated as a singular Gram matrix.
pub const SINGULARITY_FLOOR: f64 = 1e-12;

/// Effective singularity floor for a scalar type.
pub fn singularity_floor<T: Scalar>() -> T {
    let rounding = T::lit(100.0) * T::eps();
    let floor = T::lit(SINGULARITY_FLOOR);
    if rounding > floor {
        rounding
    } else {
        floor
    }
}

/// `M` coherent-state amplitudes `α e^{iπ(2k+1)/M}` with uniform priors.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation<T: Scalar> {
    alpha: T,
    amplitudes: Vec<Complex<T>>,
}

impl<T: Scalar> Constellation<T> {
    pub fn new(m: usize, alpha2: T) -> Result<Self> {
        if m < 2 {
            return Err(Error::invalid(format!("constellation needs M >= 2, got {m}")));
        }
        if !(alpha2 >= T::zero()) {
            return Err(Error::invalid(format!(
                "modulation energy must be nonnegative, got {alpha2}"
            )));
        }
        let alpha = alpha2.sqrt();
        let mf = T::from_usize_lossy(m);
        let amplitudes = (0..m)
            .map(|k| {
                let phase = T::pi() * T::from_usize_lossy(2 * k + 1) / mf;
                cis(phase) * alpha
            })
            .collect();
        Ok(Self { alpha, amplitudes })
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn alpha2(&self) -> T {
        self.alpha * self.alpha
    }

    pub fn amplitudes(&self) -> &[Complex<T>] {
        &self.amplitudes
    }

    /// GUS rotation angle `2π/M`.
    pub fn theta(&self) -> T {
        T::two_pi() / T::from_usize_lossy(self.len())
    }

    pub fn prior(&self) -> T {
        T::one() / T::from_usize_lossy(self.len())
    }

    /// Amplitudes after a beam splitter of intensity transmissivity `scale`.
    pub fn scaled_amplitudes(&self, scale: T) -> Vec<Complex<T>> {
        let s = scale.sqrt();
        self.amplitudes.iter().map(|a| a * s).collect()
    }
}

pub fn make_constellation<T: Scalar>(m: usize, alpha2: T) -> Result<Constellation<T>> {
    Constellation::new(m, alpha2)
}

/// Pure-loss fibre link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Channel<T: Scalar> {
    pub kappa: T,
    pub distance_km: T,
    pub transmissivity: T,
}

impl<T: Scalar> Channel<T> {
    pub fn new(distance_km: T, kappa: T) -> Result<Self> {
        Ok(Self {
            kappa,
            distance_km,
            transmissivity: transmissivity(distance_km, kappa)?,
        })
    }

    pub fn fibre(distance_km: T) -> Result<Self> {
        Self::new(distance_km, T::lit(DEFAULT_KAPPA_DB_PER_KM))
    }
}

/// `T = 10^{-κ d / 10}`.
pub fn transmissivity<T: Scalar>(distance_km: T, kappa: T) -> Result<T> {
    if !(distance_km >= T::zero()) {
        return Err(Error::invalid(format!(
            "distance must be nonnegative, got {distance_km}"
        )));
    }
    if !(kappa > T::zero()) {
        return Err(Error::invalid(format!("loss rate must be positive, got {kappa}")));
    }
    let t = T::lit(10.0).powf(-kappa * distance_km / T::lit(10.0));
    if !(t > T::zero()) {
        return Err(Error::invalid(format!(
            "transmissivity underflows at d = {distance_km} km"
        )));
    }
    Ok(t)
}

/// Fibre length giving transmissivity `t` at the default loss rate.
pub fn distance_for(t: f64) -> f64 {
    (-10.0 * t.log10() / DEFAULT_KAPPA_DB_PER_KM).max(0.0)
}

/// Gram matrix `G_{lk} = ⟨β_l|β_k⟩` of a scaled constellation together with
/// its Fourier eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix<T: Scalar> {
    entries: DMatrix<Complex<T>>,
    fourier_eigenvalues: Vec<T>,
    mean_photons: T,
}

impl<T: Scalar> GramMatrix<T> {
    pub fn entries(&self) -> &DMatrix<Complex<T>> {
        &self.entries
    }

    /// Eigenvalue `g_j` paired with mode `j`, not sorted.
    pub fn fourier_eigenvalues(&self) -> &[T] {
        &self.fourier_eigenvalues
    }

    pub fn dim(&self) -> usize {
        self.fourier_eigenvalues.len()
    }

    /// Mean photon number `s α²` of each scaled state.
    pub fn mean_photons(&self) -> T {
        self.mean_photons
    }

    pub fn min_eigenvalue(&self) -> T {
        self.fourier_eigenvalues
            .iter()
            .copied()
            .fold(T::max_value().unwrap(), |a, b| a.min(b))
    }

    pub fn is_singular(&self) -> bool {
        self.min_eigenvalue() < singularity_floor::<T>()
    }

    pub fn check_nonsingular(&self) -> Result<()> {
        if self.is_singular() {
            Err(Error::SingularGram {
                min_eigenvalue: self.min_eigenvalue().as_f64(),
                floor: singularity_floor::<T>().as_f64(),
            })
        } else {
            Ok(())
        }
    }
}

/// Overlap `⟨β_l|β_k⟩` for PSK symbols separated by `k - l` steps.
fn psk_overlap<T: Scalar>(mean_photons: T, m: usize, steps: isize) -> Complex<T> {
    let angle = T::two_pi() * T::lit(steps as f64) / T::from_usize_lossy(m);
    let re = -mean_photons * (T::one() - angle.cos());
    let im = mean_photons * angle.sin();
    Complex::new(im.cos(), im.sin()) * re.exp()
}

/// Gram matrix of `|√scale · α_k⟩`.
///
/// `scale = T` gives Bob's received states, `scale = 1 - T` Eve's.
pub fn gram_matrix<T: Scalar>(c: &Constellation<T>, scale: T) -> Result<GramMatrix<T>> {
    if !(scale >= T::zero() && scale <= T::one()) {
        return Err(Error::invalid(format!("Gram scale must lie in [0, 1], got {scale}")));
    }
    Ok(psk_gram(c.len(), scale * c.alpha2()))
}

/// Gram matrix of an `M`-PSK constellation of mean photon number `mean_photons`.
pub fn psk_gram<T: Scalar>(m: usize, mean_photons: T) -> GramMatrix<T> {
    let row: Vec<Complex<T>> = (0..m)
        .map(|d| psk_overlap(mean_photons, m, d as isize))
        .collect();
    let entries = DMatrix::from_fn(m, m, |l, k| row[(k + m - l) % m]);
    GramMatrix {
        entries,
        fourier_eigenvalues: residue_eigenvalues(m, mean_photons),
        mean_photons,
    }
}

/// `g_j = M e^{-s} Σ_{n ≡ j+1 (mod M)} s^n / n!`.
///
/// Identical to the DFT of the first Gram row, but free of the cancellation
/// that the DFT suffers when `s` is small.
fn residue_eigenvalues<T: Scalar>(m: usize, s: T) -> Vec<T> {
    let mut mass = vec![T::zero(); m];
    let mut term = T::one();
    let mut n = 0usize;
    let tiny = T::eps() * T::eps();
    loop {
        mass[n % m] += term;
        n += 1;
        term = term * s / T::from_usize_lossy(n);
        if T::from_usize_lossy(n) > s && term <= tiny * mass.iter().copied().fold(T::zero(), |a, b| a + b)
        {
            break;
        }
        if n > 100_000 {
            break;
        }
    }
    let scale = T::from_usize_lossy(m) * (-s).exp();
    (0..m).map(|j| mass[(j + 1) % m] * scale).collect()
}

/// Mode vectors as columns: `U_{kj} = e^{-2πi (j+1) k / M} / √M`.
///
/// `U† G U = diag(g_0, …, g_{M-1})`.
pub fn mode_matrix<T: Scalar>(m: usize) -> DMatrix<Complex<T>> {
    let norm = T::one() / T::from_usize_lossy(m).sqrt();
    DMatrix::from_fn(m, m, |k, j| {
        let idx = ((j + 1) % m) * k % m;
        cis(-T::two_pi() * T::from_usize_lossy(idx) / T::from_usize_lossy(m)) * norm
    })
}

/// `F_{jk} = e^{-2πi jk/M} / √M`.
pub fn dft_matrix<T: Scalar>(m: usize) -> DMatrix<Complex<T>> {
    let norm = T::one() / T::from_usize_lossy(m).sqrt();
    DMatrix::from_fn(m, m, |j, k| {
        let idx = (j * k) % m;
        cis(-T::two_pi() * T::from_usize_lossy(idx) / T::from_usize_lossy(m)) * norm
    })
}

/// Forward DFT of the first Gram row; entry `(j+1) mod M` is `g_j`.
pub fn first_row_dft<T: Scalar>(g: &GramMatrix<T>) -> Vec<Complex<T>> {
    let m = g.dim();
    (0..m)
        .map(|f| {
            (0..m).fold(Complex::new(T::zero(), T::zero()), |acc, k| {
                let idx = (f * k) % m;
                acc + g.entries[(0, k)]
                    * cis(-T::two_pi() * T::from_usize_lossy(idx) / T::from_usize_lossy(m))
            })
        })
        .collect()
}
