//! Maximization of the key rate over receiver phases and modulation energy,
//! and distance sweeps.
//!
//! Energy-only searches (PGM, heterodyne, feed-forward) scan a coarse grid and
//! polish the best bracket with Brent's method. The KOR search scans a coarse
//! phase × energy grid, then runs Nelder–Mead from the best distinct grid
//! points and from the PGM optimum.

use std::cell::Cell;
use std::f64::consts::PI;

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::brent::BrentOpt;
use argmin::solver::neldermead::NelderMead;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constellation::{distance_for, transmissivity, DEFAULT_KAPPA_DB_PER_KM};
use crate::error::{Error, Result};
use crate::feedforward::ff_kgr;
use crate::heterodyne::het_kgr;
use crate::infotheory::{gus_rate, KgrPoint, RateTerms, ReceiverKind};
use crate::receivers::{canonicalize_phases, ReceiverSpec};

/// Lower end (exclusive) of the modulation-energy search interval.
pub const ALPHA2_MIN: f64 = 0.01;
/// Upper end (inclusive) of the modulation-energy search interval.
pub const ALPHA2_MAX: f64 = 6.0;

/// Energy values beyond the fine coarse grid, up to the interval end.
const ENERGY_TAIL: [f64; 6] = [3.5, 4.0, 4.5, 5.0, 5.5, 6.0];

/// Two key rates closer than this are treated as equal when breaking ties.
const TIE_TOLERANCE: f64 = 1e-12;

/// Cost assigned to infeasible or failing points.
const INFEASIBLE: f64 = 1e10;

const QPSK: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationBudget {
    /// Phase grid `{0, 2π/P, …}` per free phase.
    pub phase_steps: usize,
    /// Coarse energy grid spacing on `(0, 3]`.
    pub energy_step: f64,
    /// Convergence tolerance of the local searches.
    pub tolerance: f64,
    /// Number of local refinements started from the coarse grid.
    pub multistart: usize,
    /// Hard cap on objective evaluations per optimization.
    pub max_evaluations: usize,
    pub seed: u64,
}

impl OptimizationBudget {
    pub fn quick() -> Self {
        Self {
            phase_steps: 4,
            energy_step: 0.2,
            tolerance: 1e-10,
            multistart: 4,
            max_evaluations: 6_000,
            seed: 0,
        }
    }

    pub fn standard() -> Self {
        Self {
            phase_steps: 8,
            energy_step: 0.1,
            tolerance: 1e-12,
            multistart: 4,
            max_evaluations: 40_000,
            seed: 0,
        }
    }

    pub fn thorough() -> Self {
        Self {
            phase_steps: 16,
            energy_step: 0.05,
            tolerance: 1e-13,
            multistart: 8,
            max_evaluations: 400_000,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("optimizer tolerance must be positive"));
        }
        if self.multistart < 4 {
            return Err(Error::invalid(format!(
                "multistart must be at least 4, got {}",
                self.multistart
            )));
        }
        if self.phase_steps == 0 {
            return Err(Error::invalid("phase grid needs at least one step"));
        }
        if !(self.energy_step > 0.0 && self.energy_step <= 3.0) {
            return Err(Error::invalid(format!(
                "energy step must lie in (0, 3], got {}",
                self.energy_step
            )));
        }
        if self.max_evaluations == 0 {
            return Err(Error::invalid("evaluation budget must be positive"));
        }
        Ok(())
    }

    /// Coarse energy grid: `step, 2 step, …, 3` followed by a sparse tail to 6.
    pub fn energy_grid(&self) -> Vec<f64> {
        let n = (3.0 / self.energy_step + 1e-9).floor() as usize;
        let mut g: Vec<f64> = (1..=n).map(|i| i as f64 * self.energy_step).collect();
        g.extend(ENERGY_TAIL);
        g
    }
}

impl Default for OptimizationBudget {
    fn default() -> Self {
        Self::standard()
    }
}

impl std::str::FromStr for OptimizationBudget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quick" => Ok(Self::quick()),
            "standard" => Ok(Self::standard()),
            "thorough" => Ok(Self::thorough()),
            _ => Err(Error::invalid(format!(
                "unknown budget '{s}' (expected quick, standard or thorough)"
            ))),
        }
    }
}

/// Objective bookkeeping: counts evaluations and maps failures to `-inf`.
struct Counted<'a, F> {
    f: &'a F,
    evaluations: &'a Cell<usize>,
}

impl<F: Fn(f64) -> Result<RateTerms<f64>>> Counted<'_, F> {
    fn rate(&self, x: f64) -> f64 {
        self.evaluations.set(self.evaluations.get() + 1);
        if !(x > ALPHA2_MIN && x <= ALPHA2_MAX) {
            return f64::NEG_INFINITY;
        }
        match (self.f)(x) {
            Ok(t) if t.rate.is_finite() => t.rate,
            _ => f64::NEG_INFINITY,
        }
    }
}

impl<F: Fn(f64) -> Result<RateTerms<f64>>> CostFunction for Counted<'_, F> {
    type Param = f64;
    type Output = f64;

    fn cost(&self, x: &f64) -> std::result::Result<f64, argmin::core::Error> {
        let k = self.rate(*x);
        Ok(if k.is_finite() { -k } else { INFEASIBLE })
    }
}

/// Result of a one-dimensional energy search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyOptimum {
    pub alpha2: f64,
    pub terms: RateTerms<f64>,
    pub evaluations: usize,
    pub budget_exhausted: bool,
}

/// Maximizes `objective(α²).rate` over `α² ∈ (0.01, 6]`.
pub fn maximize_energy<F>(objective: F, budget: &OptimizationBudget) -> Result<EnergyOptimum>
where
    F: Fn(f64) -> Result<RateTerms<f64>>,
{
    budget.validate()?;
    let evaluations = Cell::new(0);
    let counted = Counted {
        f: &objective,
        evaluations: &evaluations,
    };
    let grid = budget.energy_grid();
    let values: Vec<f64> = grid.iter().map(|&x| counted.rate(x)).collect();
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    if !values[best].is_finite() {
        let err = objective(grid[best]).err();
        return Err(err.unwrap_or_else(|| {
            Error::Optimization("objective is not finite anywhere on the energy grid".into())
        }));
    }
    let mut best_x = grid[best];
    let best_k = values[best];
    let lo = if best == 0 { ALPHA2_MIN } else { grid[best - 1] };
    let hi = if best + 1 == grid.len() { ALPHA2_MAX } else { grid[best + 1] };
    let remaining = budget.max_evaluations.saturating_sub(evaluations.get());
    let exhausted = remaining == 0;
    if !exhausted {
        let solver = BrentOpt::new(lo, hi).set_tolerance(f64::EPSILON.sqrt(), budget.tolerance.max(1e-14));
        let res = Executor::new(
            Counted {
                f: &objective,
                evaluations: &evaluations,
            },
            solver,
        )
        .configure(|s| s.max_iters(remaining as u64))
        .run()
        .map_err(|e| Error::Optimization(e.to_string()))?;
        let x = *res.state().get_best_param().unwrap_or(&best_x);
        let k = counted.rate(x);
        if k > best_k + TIE_TOLERANCE || (k >= best_k && x < best_x) {
            best_x = x;
        }
    }
    let terms = objective(best_x)?;
    Ok(EnergyOptimum {
        alpha2: best_x,
        terms,
        evaluations: evaluations.get(),
        budget_exhausted: exhausted || evaluations.get() > budget.max_evaluations,
    })
}

/// PGM key rate maximized over `α²`.
pub fn maximize_pgm(transmissivity: f64, beta: f64, budget: &OptimizationBudget) -> Result<KgrPoint> {
    let spec = ReceiverSpec::pgm(QPSK);
    let best = maximize_energy(|a2| gus_rate(&spec, a2, transmissivity, beta), budget)?;
    let mut p = KgrPoint::from_terms(
        ReceiverKind::Pgm,
        distance_for(transmissivity),
        transmissivity,
        beta,
        best.alpha2,
        vec![0.0; QPSK],
        best.terms,
    );
    p.evaluations = best.evaluations;
    p.budget_exhausted = best.budget_exhausted;
    Ok(p)
}

/// Key rate at free phases `(φ1, φ2, φ3)` and energy `α²`, or `-inf`.
struct KorObjective<'a> {
    transmissivity: f64,
    beta: f64,
    evaluations: &'a Cell<usize>,
}

impl KorObjective<'_> {
    fn rate(&self, x: &[f64]) -> f64 {
        self.evaluations.set(self.evaluations.get() + 1);
        let a2 = x[QPSK - 1];
        if !(a2 > ALPHA2_MIN && a2 <= ALPHA2_MAX) {
            return f64::NEG_INFINITY;
        }
        let mut phases = vec![0.0];
        phases.extend_from_slice(&x[..QPSK - 1]);
        let Ok(spec) = ReceiverSpec::new(phases) else {
            return f64::NEG_INFINITY;
        };
        match gus_rate(&spec, a2, self.transmissivity, self.beta) {
            Ok(t) if t.rate.is_finite() => t.rate,
            _ => f64::NEG_INFINITY,
        }
    }
}

impl CostFunction for KorObjective<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        let k = self.rate(x);
        Ok(if k.is_finite() { -k } else { INFEASIBLE })
    }
}

/// Symmetry-reduced phase grid in units of `2π/P`: one member per orbit of
/// the outcome relabeling and sign flip.
fn phase_grid(steps: usize) -> Vec<[usize; QPSK - 1]> {
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for a in 0..steps {
        for b in 0..steps {
            for c in 0..steps {
                let key = if steps.is_multiple_of(QPSK) {
                    let q = steps / QPSK;
                    let mut key = [usize::MAX; 3];
                    for sign in [false, true] {
                        for m in 0..QPSK {
                            let member = [a, b, c]
                                .iter()
                                .enumerate()
                                .map(|(i, &v)| {
                                    let v = if sign { (steps - v) % steps } else { v };
                                    (v + m * (i + 1) * q) % steps
                                })
                                .collect::<Vec<_>>();
                            let member = [member[0], member[1], member[2]];
                            key = key.min(member);
                        }
                    }
                    key
                } else {
                    [a, b, c]
                };
                if seen.insert(key) {
                    out.push([a, b, c]);
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
struct Candidate {
    x: Vec<f64>,
    rate: f64,
}

/// Orders candidates by rate, then smaller energy, then smaller canonical
/// phases.
fn better(a: &Candidate, b: &Candidate) -> bool {
    if a.rate > b.rate + TIE_TOLERANCE {
        return true;
    }
    if a.rate < b.rate - TIE_TOLERANCE {
        return false;
    }
    let (ea, eb) = (a.x[QPSK - 1], b.x[QPSK - 1]);
    if ea != eb {
        return ea < eb;
    }
    let pa = canonicalize_phases(&full_phases(&a.x));
    let pb = canonicalize_phases(&full_phases(&b.x));
    pa < pb
}

fn full_phases(x: &[f64]) -> Vec<f64> {
    let mut p = vec![0.0];
    p.extend_from_slice(&x[..QPSK - 1]);
    p
}

/// Per-call seed derived from the budget seed and the channel.
fn point_seed(seed: u64, transmissivity: f64) -> u64 {
    seed ^ transmissivity.to_bits().rotate_left(17)
}

/// KOR key rate maximized over `(φ, α²)` with `φ_0 = 0`.
pub fn maximize_kor(transmissivity: f64, beta: f64, budget: &OptimizationBudget) -> Result<KgrPoint> {
    budget.validate()?;
    let pgm = maximize_pgm(transmissivity, beta, budget)?;
    let evaluations = Cell::new(pgm.evaluations);
    let obj = KorObjective {
        transmissivity,
        beta,
        evaluations: &evaluations,
    };
    let unit = 2.0 * PI / budget.phase_steps as f64;
    let energies: Vec<f64> = budget.energy_grid().into_iter().filter(|&e| e <= 3.0).collect();

    // best energy for every grid phase triple
    let mut coarse: Vec<Candidate> = Vec::new();
    let mut exhausted = false;
    for idx in phase_grid(budget.phase_steps) {
        if evaluations.get() >= budget.max_evaluations {
            exhausted = true;
            break;
        }
        let mut best: Option<Candidate> = None;
        for &e in &energies {
            let x = vec![idx[0] as f64 * unit, idx[1] as f64 * unit, idx[2] as f64 * unit, e];
            let rate = obj.rate(&x);
            let cand = Candidate { x, rate };
            if best.as_ref().is_none_or(|b| better(&cand, b)) {
                best = Some(cand);
            }
        }
        if let Some(b) = best.filter(|b| b.rate.is_finite()) {
            coarse.push(b);
        }
    }
    coarse.sort_by(|a, b| {
        if better(a, b) {
            std::cmp::Ordering::Less
        } else if better(b, a) {
            std::cmp::Ordering::Greater
        } else {
            std::cmp::Ordering::Equal
        }
    });

    let mut starts: Vec<Vec<f64>> = vec![vec![0.0, 0.0, 0.0, pgm.alpha2]];
    starts.extend(coarse.iter().take(budget.multistart).map(|c| c.x.clone()));

    let mut best = Candidate {
        x: vec![0.0, 0.0, 0.0, pgm.alpha2],
        rate: pgm.rate,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(point_seed(budget.seed, transmissivity));
    for start in starts {
        // jitter the start, then refine twice with a shrinking simplex
        let mut x0: Vec<f64> = start
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let j: f64 = rng.random_range(-1.0..1.0);
                if i < QPSK - 1 {
                    v + 0.02 * j
                } else {
                    (v * (1.0 + 0.02 * j)).clamp(2.0 * ALPHA2_MIN, ALPHA2_MAX)
                }
            })
            .collect();
        for (phase_step, energy_step) in [(0.3, 0.15), (0.05, 0.03)] {
            let remaining = budget.max_evaluations.saturating_sub(evaluations.get());
            if remaining < 2 * QPSK {
                exhausted = true;
                break;
            }
            let x = nelder_mead(&obj, &x0, phase_step, energy_step, budget.tolerance, remaining)?;
            let cand = Candidate {
                rate: obj.rate(&x),
                x: x.clone(),
            };
            if better(&cand, &best) {
                best = cand;
            }
            x0 = x;
        }
    }

    let phases = canonicalize_phases(&full_phases(&best.x));
    let a2 = best.x[QPSK - 1];
    let spec = ReceiverSpec::new(phases.clone())?;
    let terms = gus_rate(&spec, a2, transmissivity, beta)?;
    let mut p = KgrPoint::from_terms(
        ReceiverKind::Kor,
        distance_for(transmissivity),
        transmissivity,
        beta,
        a2,
        phases,
        terms,
    );
    p.evaluations = evaluations.get();
    p.budget_exhausted = exhausted || evaluations.get() > budget.max_evaluations;
    Ok(p)
}

fn nelder_mead(
    obj: &KorObjective<'_>,
    x0: &[f64],
    phase_step: f64,
    energy_step: f64,
    tolerance: f64,
    max_evaluations: usize,
) -> Result<Vec<f64>> {
    let mut simplex = vec![x0.to_vec()];
    for i in 0..x0.len() {
        let mut v = x0.to_vec();
        if i < QPSK - 1 {
            v[i] += phase_step;
        } else {
            // step toward the interior
            v[i] += if v[i] + energy_step <= ALPHA2_MAX { energy_step } else { -energy_step };
        }
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(tolerance)
        .map_err(|e| Error::Optimization(e.to_string()))?;
    // roughly two evaluations per iteration
    let iters = (max_evaluations / 2).min(2_000) as u64;
    let res = Executor::new(
        KorObjective {
            transmissivity: obj.transmissivity,
            beta: obj.beta,
            evaluations: obj.evaluations,
        },
        solver,
    )
    .configure(|s| s.max_iters(iters))
    .run()
    .map_err(|e| Error::Optimization(e.to_string()))?;
    Ok(res
        .state()
        .get_best_param()
        .cloned()
        .unwrap_or_else(|| x0.to_vec()))
}

/// Optimized point for one receiver at one channel.
pub fn optimize_receiver(
    kind: ReceiverKind,
    transmissivity: f64,
    beta: f64,
    budget: &OptimizationBudget,
) -> Result<KgrPoint> {
    match kind {
        ReceiverKind::Pgm => maximize_pgm(transmissivity, beta, budget),
        ReceiverKind::Kor => maximize_kor(transmissivity, beta, budget),
        ReceiverKind::Heterodyne => het_kgr(transmissivity, beta, budget),
        ReceiverKind::FeedForward(n) => ff_kgr(n, transmissivity, beta, budget),
        ReceiverKind::Fixed => Err(Error::invalid(
            "a fixed-phase receiver cannot be optimized; use kgr with explicit phases",
        )),
    }
}

/// One (distance, receiver) entry of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub distance_km: f64,
    pub transmissivity: f64,
    pub receiver: ReceiverKind,
    pub point: std::result::Result<KgrPoint, Error>,
    /// `K / K_het` at the same distance, when `K_het > 0`.
    pub ratio_vs_het: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub beta: f64,
    pub kappa: f64,
    pub seed: u64,
    pub receivers: Vec<ReceiverKind>,
    /// Distance-major, receivers in request order.
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn distances(&self) -> Vec<f64> {
        let mut d: Vec<f64> = self.rows.iter().map(|r| r.distance_km).collect();
        d.dedup();
        d
    }

    pub fn rows_for(&self, kind: ReceiverKind) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(move |r| r.receiver == kind)
    }

    /// `(d, R(d))` for one receiver, skipping points without a ratio.
    pub fn ratio_curve(&self, kind: ReceiverKind) -> Vec<(f64, f64)> {
        self.rows_for(kind)
            .filter_map(|r| r.ratio_vs_het.map(|x| (r.distance_km, x)))
            .collect()
    }

    pub fn failures(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| r.point.is_err())
    }
}

/// Distances `d_min, d_min + step, …` up to `d_max` inclusive.
pub fn distance_range(d_min: f64, d_max: f64, step: f64) -> Result<Vec<f64>> {
    if !(d_min >= 0.0) || !(d_max >= d_min) || !d_max.is_finite() {
        return Err(Error::invalid(format!("bad distance range [{d_min}, {d_max}]")));
    }
    if d_max > d_min && !(step > 0.0) {
        return Err(Error::invalid(format!("distance step must be positive, got {step}")));
    }
    if d_max == d_min {
        return Ok(vec![d_min]);
    }
    let n = ((d_max - d_min) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| d_min + i as f64 * step).collect())
}

/// Optimizes every receiver at every distance. Heterodyne is always
/// evaluated so that ratios are available; it appears in the rows only if
/// requested. Failures are recorded per row.
pub fn sweep(
    distances: &[f64],
    receivers: &[ReceiverKind],
    beta: f64,
    kappa: f64,
    budget: &OptimizationBudget,
) -> Result<SweepResult> {
    if distances.is_empty() || receivers.is_empty() {
        return Err(Error::invalid("sweep needs at least one distance and one receiver"));
    }
    if distances.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("sweep distances must be strictly increasing"));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::invalid(format!("beta must lie in (0, 1], got {beta}")));
    }
    budget.validate()?;
    let channels = distances
        .iter()
        .map(|&d| transmissivity(d, kappa))
        .collect::<Result<Vec<f64>>>()?;

    let per_distance: Vec<Vec<SweepRow>> = distances
        .par_iter()
        .zip(channels.par_iter())
        .map(|(&d, &t)| {
            let relabel = |mut p: KgrPoint| {
                p.distance_km = d;
                p
            };
            let het = het_kgr(t, beta, budget).map(relabel);
            let k_het = het.as_ref().ok().map(|p| p.rate).filter(|&k| k > 0.0);
            receivers
                .iter()
                .map(|&kind| {
                    let point = if kind == ReceiverKind::Heterodyne {
                        het.clone()
                    } else {
                        optimize_receiver(kind, t, beta, budget).map(relabel)
                    };
                    let ratio = match (&point, k_het) {
                        (Ok(p), Some(kh)) => Some(p.rate / kh),
                        _ => None,
                    };
                    SweepRow {
                        distance_km: d,
                        transmissivity: t,
                        receiver: kind,
                        point,
                        ratio_vs_het: ratio,
                    }
                })
                .collect()
        })
        .collect();

    Ok(SweepResult {
        beta,
        kappa,
        seed: budget.seed,
        receivers: receivers.to_vec(),
        rows: per_distance.into_iter().flatten().collect(),
    })
}

/// Sweep at the default fibre loss.
pub fn sweep_fibre(
    distances: &[f64],
    receivers: &[ReceiverKind],
    beta: f64,
    budget: &OptimizationBudget,
) -> Result<SweepResult> {
    sweep(distances, receivers, beta, DEFAULT_KAPPA_DB_PER_KM, budget)
}
