//! Fast invariant checks behind the `selftest` command.

use nalgebra::DMatrix;
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::constellation::{make_constellation, psk_gram, transmissivity};
use crate::feedforward::{cascade_conditional_probs, cascade_kernel_exact, CascadeSpec};
use crate::heterodyne::{het_monte_carlo, het_terms, HeterodyneGrid};
use crate::infotheory::{mixture_eigenvalues, qpsk_uniform_spectrum, CoherentMixture};
use crate::optimizer::{maximize_kor, maximize_pgm, OptimizationBudget};
use crate::phase_space::{wigner_map, WignerGrid};
use crate::receivers::{
    build_receiver, fock_conditional_probabilities, kernel_for, FockVector, ReceiverSpec,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn random_spec(rng: &mut ChaCha8Rng) -> ReceiverSpec<f64> {
    let mut p = vec![0.0];
    p.extend((0..3).map(|_| rng.random_range(0.0..std::f64::consts::TAU)));
    ReceiverSpec::new(p).expect("gauge-fixed phases")
}

fn povm_constraint(rng: &mut ChaCha8Rng) -> Check {
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let spec = random_spec(rng);
        let g = psk_gram(4, rng.random_range(0.05..3.0));
        let a = build_receiver(&spec, &g).expect("nonsingular");
        let a = a.matrix();
        let r = a * a.adjoint() * g.entries() - DMatrix::<Complex<f64>>::identity(4, 4);
        worst = worst.max(r.camax());
    }
    check("povm_constraint", worst < 1e-9, format!("max residual {worst:.3e}"))
}

fn eve_spectrum() -> Check {
    let mut worst: f64 = 0.0;
    for i in 0..=20 {
        let x = 0.25 * i as f64;
        let g = psk_gram(4, x);
        let num = mixture_eigenvalues(&CoherentMixture::uniform(&g));
        let mut ana = qpsk_uniform_spectrum(x).to_vec();
        ana.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in num.iter().zip(&ana) {
            worst = worst.max((a - b).abs());
        }
    }
    check("eve_spectrum", worst < 1e-10, format!("max deviation {worst:.3e}"))
}

fn fock_oracle(rng: &mut ChaCha8Rng) -> Check {
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let spec = random_spec(rng);
        let t = rng.random_range(0.05..1.0);
        let c = make_constellation(4, rng.random_range(0.2..2.0)).expect("valid");
        let g = psk_gram(4, t * c.alpha2());
        let k = kernel_for(&spec, &g).expect("valid");
        let f = fock_conditional_probabilities(&spec, &c, t).expect("valid");
        worst = worst.max((k.conditional() - f).amax());
    }
    check("fock_oracle", worst < 1e-8, format!("max deviation {worst:.3e}"))
}

fn cascade() -> Check {
    let mut worst: f64 = 0.0;
    for n in 3..=10 {
        for e in [0.3, 1.0, 2.5] {
            let s = CascadeSpec::new(n, e).expect("valid");
            let d = cascade_conditional_probs(&s).conditional() - cascade_kernel_exact(&s).conditional();
            worst = worst.max(d.amax());
        }
    }
    check("cascade_closed_form", worst < 1e-12, format!("max deviation {worst:.3e}"))
}

fn heterodyne(seed: u64) -> Check {
    let (a2, t) = (1.0, 0.5);
    let q = match het_terms(a2, t, &HeterodyneGrid::for_signal(a2, t)) {
        Ok(q) => q,
        Err(e) => return check("heterodyne_monte_carlo", false, e.to_string()),
    };
    let (i, chi) = het_monte_carlo(a2, t, 50_000, seed).expect("valid");
    let ok = i.agrees(q.mutual_information, 4.0) && chi.agrees(q.holevo, 4.0);
    check(
        "heterodyne_monte_carlo",
        ok && (q.normalization - 1.0).abs() < 1e-6,
        format!(
            "I {:.6} vs {:.6}±{:.1e}, chi {:.6} vs {:.6}±{:.1e}",
            q.mutual_information, i.mean, i.std_error, q.holevo, chi.mean, chi.std_error
        ),
    )
}

fn wigner_vacuum() -> Check {
    let m = wigner_map(&FockVector::vacuum(), &WignerGrid::new(7.0, 141).expect("valid"), false)
        .expect("valid");
    let dev = (m.normalization_integral - 4.0).abs();
    check("wigner_vacuum_integral", dev < 1e-4, format!("integral {:.8}", m.normalization_integral))
}

fn dominance(seed: u64) -> Check {
    let t = transmissivity(30.0, 0.2).expect("valid");
    let b = OptimizationBudget::quick().with_seed(seed);
    match (maximize_pgm(t, 0.95, &b), maximize_kor(t, 0.95, &b)) {
        (Ok(p), Ok(k)) => check(
            "kor_dominates_pgm",
            k.rate >= p.rate - 1e-9,
            format!("K_KOR {:.6e}, K_PGM {:.6e}", k.rate, p.rate),
        ),
        (Err(e), _) | (_, Err(e)) => check("kor_dominates_pgm", false, e.to_string()),
    }
}

/// Runs every check; all randomness derives from `seed`.
pub fn run(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vec![
        povm_constraint(&mut rng),
        eve_spectrum(),
        fock_oracle(&mut rng),
        cascade(),
        heterodyne(seed),
        wigner_vacuum(),
        dominance(seed),
    ]
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        for c in super::run(11) {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
