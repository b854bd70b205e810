//! Displacement feed-forward receiver for QPSK.
//!
//! The received pulse is sliced into `N` equal copies. Copy `m` is displaced
//! by `-α_{j_m}/√N` and sent to an on/off detector; a click advances the
//! hypothesis pointer `j` and rules out every state at or below the old
//! pointer. After the last copy the pointer is the decision, except that a
//! click on the last copy triggers a uniform guess among the states still
//! allowed. Once the pointer reaches the last state it stays there.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::infotheory::{rate_from_kernel, KgrPoint, RateTerms, ReceiverKind};
use crate::optimizer::{maximize_energy, OptimizationBudget};
use crate::receivers::ProbabilityKernel;
use crate::scalar::Scalar;

/// The receiver is defined for QPSK only.
pub const SYMBOLS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CascadeSpec<T: Scalar> {
    copies: usize,
    effective_energy: T,
}

impl<T: Scalar> CascadeSpec<T> {
    /// `effective_energy` is the received photon number `T α²`.
    pub fn new(copies: usize, effective_energy: T) -> Result<Self> {
        if copies < SYMBOLS - 1 {
            return Err(Error::invalid(format!(
                "feed-forward receiver needs N >= {}, got {copies}",
                SYMBOLS - 1
            )));
        }
        if !(effective_energy >= T::zero()) || !effective_energy.is_finite() {
            return Err(Error::invalid(format!(
                "received energy must be nonnegative, got {effective_energy}"
            )));
        }
        Ok(Self {
            copies,
            effective_energy,
        })
    }

    pub fn copies(&self) -> usize {
        self.copies
    }

    pub fn effective_energy(&self) -> T {
        self.effective_energy
    }
}

/// No-click probability `p_d` when the pointer sits `d = (k - j) mod 4` steps
/// behind the true state: `(1, e^{-2n/N}, e^{-4n/N}, e^{-2n/N})`.
pub fn no_click_probs<T: Scalar>(spec: &CascadeSpec<T>) -> [T; SYMBOLS] {
    let per_copy = spec.effective_energy / T::from_usize_lossy(spec.copies);
    let near = (-T::lit(2.0) * per_copy).exp();
    let far = (-T::lit(4.0) * per_copy).exp();
    [T::one(), near, far, near]
}

fn powers<T: Scalar>(x: T, n: usize) -> Vec<T> {
    let mut v = Vec::with_capacity(n + 1);
    let mut acc = T::one();
    for _ in 0..=n {
        v.push(acc);
        acc *= x;
    }
    v
}

/// Closed-form decision probabilities `p(j|k)` of the cascade.
///
/// Sums run over the number of silent copies before each click: `t` at
/// pointer 0, `s` at pointer 1, `u` at pointer 2.
pub fn cascade_conditional_probs<T: Scalar>(spec: &CascadeSpec<T>) -> ProbabilityKernel<T> {
    let n = spec.copies;
    let p = no_click_probs(spec);
    let third = T::one() / T::lit(3.0);
    let half = T::one() / T::lit(2.0);
    let mut cond = DMatrix::zeros(SYMBOLS, SYMBOLS);
    for k in 0..SYMBOLS {
        let a = p[k];
        let b = p[(k + 3) % SYMBOLS];
        let c = p[(k + 2) % SYMBOLS];
        let (pa, pb, pc) = (powers(a, n), powers(b, n), powers(c, n));
        let (qa, qb, qc) = (T::one() - a, T::one() - b, T::one() - c);

        // first click on the last copy: guess among {1, 2, 3}
        let last_first = pa[n - 1] * qa * third;

        let mut stay1 = T::zero();
        for t in 0..=n - 2 {
            stay1 += pa[t] * qa * pb[n - 1 - t];
        }

        // second click on the last copy: guess between {2, 3}
        let mut last_second = T::zero();
        for t in 0..=n - 2 {
            last_second += pa[t] * qa * pb[n - 2 - t] * qb * half;
        }

        let mut stay2 = T::zero();
        let mut reach3 = T::zero();
        for t in 0..=n - 3 {
            for s in 0..=n - 3 - t {
                let head = pa[t] * qa * pb[s] * qb;
                stay2 += head * pc[n - 2 - t - s];
                let tail = pc[..=n - 3 - t - s].iter().fold(T::zero(), |a, &x| a + x);
                reach3 += head * tail * qc;
            }
        }

        cond[(k, 0)] = pa[n];
        cond[(k, 1)] = stay1 + last_first;
        cond[(k, 2)] = stay2 + last_second + last_first;
        cond[(k, 3)] = reach3 + last_second + last_first;
    }
    ProbabilityKernel::from_conditional(cond).expect("cascade kernel is row-stochastic")
}

/// Exact decision probabilities by propagating the pointer distribution copy
/// by copy, `O(N M²)`.
pub fn cascade_kernel_exact<T: Scalar>(spec: &CascadeSpec<T>) -> ProbabilityKernel<T> {
    let n = spec.copies;
    let p = no_click_probs(spec);
    let mut cond = DMatrix::zeros(SYMBOLS, SYMBOLS);
    for k in 0..SYMBOLS {
        let mut pointer = [T::zero(); SYMBOLS];
        pointer[0] = T::one();
        for _ in 0..n - 1 {
            let mut next = [T::zero(); SYMBOLS];
            for j in 0..SYMBOLS {
                let silent = p[(k + SYMBOLS - j) % SYMBOLS];
                next[j] += pointer[j] * silent;
                next[(j + 1).min(SYMBOLS - 1)] += pointer[j] * (T::one() - silent);
            }
            pointer = next;
        }
        for j in 0..SYMBOLS {
            let silent = p[(k + SYMBOLS - j) % SYMBOLS];
            cond[(k, j)] += pointer[j] * silent;
            let remaining = SYMBOLS - 1 - j;
            let clicked = pointer[j] * (T::one() - silent);
            if remaining == 0 {
                cond[(k, j)] += clicked;
            } else {
                let share = clicked / T::from_usize_lossy(remaining);
                for r in j + 1..SYMBOLS {
                    cond[(k, r)] += share;
                }
            }
        }
    }
    ProbabilityKernel::from_conditional(cond).expect("cascade kernel is row-stochastic")
}

/// Key rate of the `N`-copy cascade at modulation energy `alpha2`.
pub fn ff_rate(
    copies: usize,
    alpha2: f64,
    transmissivity: f64,
    beta: f64,
) -> Result<RateTerms<f64>> {
    let spec = CascadeSpec::new(copies, transmissivity * alpha2)?;
    let kernel = cascade_conditional_probs(&spec);
    rate_from_kernel(&kernel, alpha2, transmissivity, beta)
}

/// Feed-forward key rate maximized over `α²`.
pub fn ff_kgr(
    copies: usize,
    transmissivity: f64,
    beta: f64,
    budget: &OptimizationBudget,
) -> Result<KgrPoint> {
    CascadeSpec::new(copies, 0.0)?;
    let best = maximize_energy(|a2| ff_rate(copies, a2, transmissivity, beta), budget)?;
    let mut p = KgrPoint::from_terms(
        ReceiverKind::FeedForward(copies),
        crate::constellation::distance_for(transmissivity),
        transmissivity,
        beta,
        best.alpha2,
        Vec::new(),
        best.terms,
    );
    p.evaluations = best.evaluations;
    p.budget_exhausted = best.budget_exhausted;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::receivers::error_probability;

    #[test]
    fn no_click_values() {
        let p = no_click_probs(&CascadeSpec::new(6, 0.0_f64).unwrap());
        assert_eq!(p, [1.0; 4]);
        let p = no_click_probs(&CascadeSpec::new(8, 4.0_f64).unwrap());
        assert!((p[1] - (-1.0_f64).exp()).abs() < 1e-15);
        assert!((p[2] - (-2.0_f64).exp()).abs() < 1e-15);
        assert_eq!(p[1], p[3]);
    }

    #[test]
    fn rejects_too_few_copies() {
        assert!(CascadeSpec::new(2, 1.0_f64).is_err());
        assert!(CascadeSpec::new(3, -1.0_f64).is_err());
    }

    #[test]
    fn vacuum_always_decides_zero() {
        let k = cascade_conditional_probs(&CascadeSpec::new(5, 0.0_f64).unwrap());
        for row in 0..4 {
            assert_eq!(k.p(0, row), 1.0);
        }
    }

    #[test]
    fn closed_form_matches_exact_propagation() {
        for n in [3, 4, 5, 9, 17, 40] {
            for e in [0.1, 0.5, 1.0, 2.0, 5.0] {
                let spec = CascadeSpec::new(n, e).unwrap();
                let a = cascade_conditional_probs(&spec);
                let b = cascade_kernel_exact(&spec);
                assert!((a.conditional() - b.conditional()).amax() < 1e-12, "N={n} e={e}");
            }
        }
    }

    #[test]
    fn error_probability_falls_with_energy() {
        let lo = error_probability(&cascade_conditional_probs(&CascadeSpec::new(32, 0.5).unwrap()));
        let hi = error_probability(&cascade_conditional_probs(&CascadeSpec::new(32, 3.0).unwrap()));
        assert!(hi < lo);
    }

    #[test]
    fn rate_is_finite() {
        let r = ff_rate(16, 1.0, 0.5, 0.95).unwrap();
        assert!(r.rate.is_finite() && r.mutual_information > 0.0 && r.holevo > 0.0);
    }
}
