//! Wigner functions of measurement vectors.
//!
//! Convention: `ζ = (x + iy)/2` in shot-noise units and
//! `W(x, y) = (2/π) ⟨ψ|D(2ζ) Π|ψ⟩` with `Π` the photon-number parity, so the
//! vacuum maps to `(2/π) e^{-(x²+y²)/2}` and `∬ W dx dy = 4 ⟨ψ|ψ⟩`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex;
use rayon::prelude::*;
use serde::Serialize;

use crate::constellation::{make_constellation, psk_gram};
use crate::error::{Error, Result};
use crate::receivers::{fock_truncation, reference_vector_fock, FockVector, ReceiverSpec};

/// `|W|` on the grid edge above this means the grid clips the state.
pub const BOUNDARY_LIMIT: f64 = 1e-8;

pub const DEFAULT_EXTENT: f64 = 8.0;
pub const DEFAULT_NODES: usize = 321;

/// Square lattice `[-extent, extent]²` with an odd node count per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WignerGrid {
    extent: f64,
    nodes: usize,
}

impl WignerGrid {
    pub fn new(extent: f64, nodes: usize) -> Result<Self> {
        if nodes < 3 || nodes.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "Wigner grid needs an odd node count >= 3, got {nodes}"
            )));
        }
        if !(extent > 0.0) || !extent.is_finite() {
            return Err(Error::invalid(format!("grid extent must be positive, got {extent}")));
        }
        Ok(Self { extent, nodes })
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn step(&self) -> f64 {
        2.0 * self.extent / (self.nodes - 1) as f64
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        // symmetric by construction: node c - k is exactly -(node c + k)
        let c = (self.nodes - 1) / 2;
        (i as f64 - c as f64) * self.step()
    }

    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.nodes).map(|i| self.coordinate(i)).collect()
    }

    fn simpson(&self, i: usize) -> f64 {
        if i == 0 || i == self.nodes - 1 {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        }
    }
}

impl Default for WignerGrid {
    fn default() -> Self {
        Self {
            extent: DEFAULT_EXTENT,
            nodes: DEFAULT_NODES,
        }
    }
}

/// `⟨n|D(β)|m⟩` for `n, m <= n_max`, filled column by column from
/// `D_{n,0} = e^{-|β|²/2} β^n/√n!` and
/// `√(m+1) D_{n,m+1} = √n D_{n-1,m} − β* D_{n,m}`.
pub fn displacement_elements(beta: Complex<f64>, n_max: usize) -> DMatrix<Complex<f64>> {
    let d = n_max + 1;
    let mut out = DMatrix::zeros(d, d);
    let mut term = Complex::new((-beta.norm_sqr() / 2.0).exp(), 0.0);
    out[(0, 0)] = term;
    for n in 1..d {
        term = term * beta / (n as f64).sqrt();
        out[(n, 0)] = term;
    }
    let bc = beta.conj();
    for m in 0..d - 1 {
        let s = ((m + 1) as f64).sqrt();
        for n in 0..d {
            let up = if n > 0 {
                out[(n - 1, m)] * (n as f64).sqrt()
            } else {
                Complex::new(0.0, 0.0)
            };
            out[(n, m + 1)] = (up - bc * out[(n, m)]) / s;
        }
    }
    out
}

/// Complex value of `(2/π) ⟨ψ|D(2ζ)Π|ψ⟩`; the imaginary part is round-off.
pub fn wigner_at(state: &FockVector<f64>, x: f64, y: f64) -> Complex<f64> {
    let c = state.coefficients();
    let d = displacement_elements(Complex::new(x, y), state.n_max());
    let mut acc = Complex::new(0.0, 0.0);
    for (m, cm) in c.iter().enumerate() {
        let mut row = Complex::new(0.0, 0.0);
        for (n, cn) in c.iter().enumerate() {
            let v = d[(m, n)] * cn;
            if n % 2 == 0 {
                row += v;
            } else {
                row -= v;
            }
        }
        acc += cm.conj() * row;
    }
    acc * (2.0 / PI)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WignerMap {
    pub grid: WignerGrid,
    /// `values[(i, j)] = W(x_i, y_j)`.
    pub values: DMatrix<f64>,
    pub min_value: f64,
    pub min_location: (f64, f64),
    pub max_value: f64,
    /// Simpson estimate of `∬ W dx dy`.
    pub normalization_integral: f64,
    /// Largest `|W|` on the grid edge.
    pub boundary_max: f64,
    pub boundary_warning: bool,
    pub imaginary_residue: f64,
    /// True when the state was scaled to unit norm first.
    pub normalized: bool,
}

impl WignerMap {
    fn from_values(grid: WignerGrid, values: DMatrix<f64>, residue: f64, normalized: bool) -> Self {
        let n = grid.nodes;
        let h = grid.step();
        let mut min_value = f64::INFINITY;
        let mut min_location = (0.0, 0.0);
        let mut max_value = f64::NEG_INFINITY;
        let mut integral = 0.0;
        let mut boundary: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let w = values[(i, j)];
                if w < min_value {
                    min_value = w;
                    min_location = (grid.coordinate(i), grid.coordinate(j));
                }
                max_value = max_value.max(w);
                integral += grid.simpson(i) * grid.simpson(j) * w;
                if i == 0 || j == 0 || i == n - 1 || j == n - 1 {
                    boundary = boundary.max(w.abs());
                }
            }
        }
        Self {
            grid,
            values,
            min_value,
            min_location,
            max_value,
            normalization_integral: integral * h * h / 9.0,
            boundary_max: boundary,
            boundary_warning: boundary > BOUNDARY_LIMIT,
            imaginary_residue: residue,
            normalized,
        }
    }

    pub fn has_negativity(&self) -> bool {
        self.min_value < 0.0
    }

    /// Value at the node nearest to `(x, y)`.
    pub fn nearest(&self, x: f64, y: f64) -> f64 {
        let idx = |v: f64| {
            let c = ((self.grid.nodes - 1) / 2) as f64;
            ((v / self.grid.step() + c).round().max(0.0) as usize).min(self.grid.nodes - 1)
        };
        self.values[(idx(x), idx(y))]
    }
}

/// Wigner function of `|ψ⟩⟨ψ|` on `grid`, optionally after scaling `ψ` to
/// unit norm. The state's own truncation is taken as exact.
pub fn wigner_map(state: &FockVector<f64>, grid: &WignerGrid, normalize: bool) -> Result<WignerMap> {
    let norm = state.norm_sqr();
    if !(norm > 0.0) {
        return Err(Error::invalid("state has zero norm"));
    }
    let scaled;
    let psi = if normalize {
        let s = 1.0 / norm.sqrt();
        scaled = FockVector::new(state.coefficients().iter().map(|c| c * s).collect());
        &scaled
    } else {
        state
    };
    let n = grid.nodes;
    let columns: Vec<(Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = grid.coordinate(i);
            let mut col = Vec::with_capacity(n);
            let mut residue: f64 = 0.0;
            for j in 0..n {
                let w = wigner_at(psi, x, grid.coordinate(j));
                residue = residue.max(w.im.abs());
                col.push(w.re);
            }
            (col, residue)
        })
        .collect();
    let residue = columns.iter().fold(0.0_f64, |a, c| a.max(c.1));
    let values = DMatrix::from_fn(n, n, |i, j| columns[i].0[j]);
    Ok(WignerMap::from_values(*grid, values, residue, normalize))
}

/// Closed-form vacuum map `(2/π) e^{-(x²+y²)/2}`.
pub fn vacuum_map(grid: &WignerGrid) -> WignerMap {
    let n = grid.nodes;
    let values = DMatrix::from_fn(n, n, |i, j| {
        let (x, y) = (grid.coordinate(i), grid.coordinate(j));
        2.0 / PI * (-(x * x + y * y) / 2.0).exp()
    });
    WignerMap::from_values(*grid, values, 0.0, true)
}

/// Reference measurement vector `|μ_0⟩` of a QPSK receiver for received
/// amplitude `√T α`, truncated by the Poisson-tail rule.
pub fn reference_state(spec: &ReceiverSpec<f64>, alpha2: f64, transmissivity: f64) -> Result<FockVector<f64>> {
    let c = make_constellation(spec.len(), alpha2)?;
    let gram = psk_gram(spec.len(), transmissivity * alpha2);
    let alpha_t = c.amplitudes()[0] * transmissivity.sqrt();
    reference_vector_fock(spec, &gram, alpha_t, fock_truncation(transmissivity * alpha2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Peak {
    pub x: f64,
    pub y: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymmetryReport {
    /// Strict local maxima above 1% of the global maximum, highest first.
    pub peaks: Vec<Peak>,
    pub min_value: f64,
    pub min_location: (f64, f64),
}

impl SymmetryReport {
    /// `(h_1 − h_k)/h_1` over the `k` highest peaks; small when the map is
    /// spread evenly over `k` lobes.
    pub fn height_spread(&self, k: usize) -> Option<f64> {
        if k == 0 || self.peaks.len() < k {
            return None;
        }
        let top = self.peaks[0].height;
        Some((top - self.peaks[k - 1].height) / top)
    }
}

pub fn symmetry_report(map: &WignerMap) -> SymmetryReport {
    let n = map.grid.nodes;
    let v = &map.values;
    let floor = 0.01 * map.max_value;
    let mut peaks = Vec::new();
    for i in 1..n - 1 {
        for j in 1..n - 1 {
            let w = v[(i, j)];
            if w <= floor {
                continue;
            }
            let mut is_max = true;
            for di in [-1i64, 0, 1] {
                for dj in [-1i64, 0, 1] {
                    if (di, dj) == (0, 0) {
                        continue;
                    }
                    let (a, b) = ((i as i64 + di) as usize, (j as i64 + dj) as usize);
                    if v[(a, b)] >= w {
                        is_max = false;
                    }
                }
            }
            if is_max {
                peaks.push(Peak {
                    x: map.grid.coordinate(i),
                    y: map.grid.coordinate(j),
                    height: w,
                });
            }
        }
    }
    peaks.sort_by(|a, b| b.height.total_cmp(&a.height));
    SymmetryReport {
        peaks,
        min_value: map.min_value,
        min_location: map.min_location,
    }
}

/// Largest pointwise difference between two maps on the same grid.
pub fn max_abs_difference(a: &WignerMap, b: &WignerMap) -> Result<f64> {
    if a.grid != b.grid {
        return Err(Error::invalid("maps are on different grids"));
    }
    Ok((&a.values - &b.values).amax())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_grid() -> WignerGrid {
        WignerGrid::new(7.0, 141).unwrap()
    }

    #[test]
    fn grid_is_symmetric() {
        let g = WignerGrid::default();
        let xs = g.coordinates();
        for i in 0..xs.len() {
            assert_eq!(xs[i], -xs[xs.len() - 1 - i]);
        }
        assert_eq!(xs[160], 0.0);
        assert!(WignerGrid::new(6.0, 240).is_err());
    }

    #[test]
    fn displacement_matches_coherent_state() {
        let beta = Complex::new(0.7, -1.1);
        let d = displacement_elements(beta, 30);
        let coh = FockVector::coherent(beta, 30);
        for n in 0..=30 {
            assert!((d[(n, 0)] - coh.coefficients()[n]).norm() < 1e-14);
        }
    }

    #[test]
    fn displacement_is_unitary_on_low_block() {
        let d = displacement_elements(Complex::new(0.4, 0.3), 60);
        let p = d.adjoint() * &d;
        for i in 0..20 {
            for j in 0..20 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((p[(i, j)] - Complex::new(e, 0.0)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn vacuum_convention() {
        let m = wigner_map(&FockVector::vacuum(), &small_grid(), false).unwrap();
        let a = vacuum_map(&small_grid());
        assert!((m.values.clone() - &a.values).amax() < 1e-14);
        assert!((m.values[(70, 70)] - 2.0 / PI).abs() < 1e-15);
        assert!((m.normalization_integral - 4.0).abs() < 1e-4);
        assert!(!m.has_negativity());
        let r = symmetry_report(&m);
        assert_eq!(r.peaks.len(), 1);
        assert_eq!((r.peaks[0].x, r.peaks[0].y), (0.0, 0.0));
    }

    #[test]
    fn coherent_state_peaks_at_twice_its_amplitude() {
        let beta = Complex::new(0.5, -0.25);
        let m = wigner_map(&FockVector::coherent(beta, 30), &small_grid(), false).unwrap();
        let r = symmetry_report(&m);
        assert_eq!(r.peaks.len(), 1);
        assert!((r.peaks[0].x - 1.0).abs() < 1e-12 && (r.peaks[0].y + 0.5).abs() < 1e-12);
        assert!((r.peaks[0].height - 2.0 / PI).abs() < 1e-12);
        assert_eq!(r.height_spread(1), Some(0.0));
        assert_eq!(r.height_spread(2), None);
    }

    #[test]
    fn single_photon_is_negative_at_origin() {
        let one = FockVector::new(vec![Complex::new(0.0, 0.0), Complex::new(1.0, 0.0)]);
        let w = wigner_at(&one, 0.0, 0.0);
        assert!((w.re + 2.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn normalization_flag_scales() {
        let s = FockVector::new(vec![Complex::new(0.5, 0.0), Complex::new(0.0, 0.5)]);
        let raw = wigner_map(&s, &small_grid(), false).unwrap();
        let unit = wigner_map(&s, &small_grid(), true).unwrap();
        assert!((raw.normalization_integral - 4.0 * 0.5).abs() < 1e-6);
        assert!((unit.normalization_integral - 4.0).abs() < 1e-6);
        assert!(unit.normalized && !raw.normalized);
    }
}
