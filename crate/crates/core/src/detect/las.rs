//! Likelihood ascent search with one-symbol updates.
//!
//! The search keeps `z = H^T (y - H d)` up to date incrementally: moving
//! symbol `p` by `lambda` changes the cost by `lambda^2 a_p - 2 lambda z_p`
//! and the correlation vector by `-lambda g_p`, where `a_p` and `g_p` are
//! the diagonal entry and column of `G = H^T H`.

use nalgebra::{DMatrix, DVector};

use super::filter::{initial_filter, Initializer};
use crate::error::{Error, Result};
use crate::model::{Constellation, RealModel, SymbolVector};

/// Relative tolerance for comparing incremental state with recomputation.
pub const CONSISTENCY_TOL: f64 = 1e-9;

/// `G = H^T H` with its diagonal cached.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    g: DMatrix<f64>,
    diag: Vec<f64>,
}

impl GramMatrix {
    pub fn new(h: &DMatrix<f64>) -> Self {
        let g = h.tr_mul(h);
        let diag = g.diagonal().iter().copied().collect();
        Self { g, diag }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.g
    }

    /// `a_p = G[p][p]`.
    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }
}

/// Optimal step length for one symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepLength {
    /// Even, non-negative magnitude of the symbol change after clipping.
    pub l: u32,
    /// `sgn(z_p)`; `+1` when `z_p = 0`.
    pub direction: i32,
    /// Whether the unconstrained optimum left the alphabet and was clipped.
    pub clipped: bool,
}

impl StepLength {
    /// Signed change `l * sgn(z_p)`.
    pub fn lambda(&self) -> i32 {
        self.l as i32 * self.direction
    }
}

/// `l_opt = 2 round(|z_p| / (2 a_p))`, halves rounded toward zero, then
/// clipped to the largest admissible step that keeps `d_p + l sgn(z_p)` in
/// the alphabet.
pub fn l_opt(z_p: f64, a_p: f64, d_p: i32, c: &Constellation) -> Result<StepLength> {
    if !(a_p > 0.0) || !a_p.is_finite() {
        return Err(Error::InvalidParameter(format!("a_p = {a_p} must be positive")));
    }
    if !z_p.is_finite() {
        return Err(Error::InvalidParameter(format!("z_p = {z_p} is not finite")));
    }
    let ratio = z_p.abs() / (2.0 * a_p);
    let half_steps = (ratio - 0.5).ceil().max(0.0);
    let direction = if z_p < 0.0 { -1 } else { 1 };
    let room = (c.max_level() - direction * d_p).max(0) as f64;
    let unclipped = 2.0 * half_steps;
    let (l, clipped) = if unclipped > room {
        (room, true)
    } else {
        (unclipped, false)
    };
    Ok(StepLength {
        l: l as u32,
        direction,
        clipped,
    })
}

/// `F(l) = l^2 a_p - 2 l |z_p|`, the cost change of a step of length `l`
/// in the direction of `z_p`.
pub fn cost_delta(l: u32, z_p: f64, a_p: f64) -> f64 {
    let l = f64::from(l);
    l * l * a_p - 2.0 * l * z_p.abs()
}

/// Fixed inputs of one detection problem.
#[derive(Debug, Clone)]
pub struct LasProblem<'a> {
    rm: &'a RealModel,
    y: &'a DVector<f64>,
    c: &'a Constellation,
    gram: GramMatrix,
    hty: DVector<f64>,
}

impl<'a> LasProblem<'a> {
    pub fn new(rm: &'a RealModel, y: &'a DVector<f64>, c: &'a Constellation) -> Result<Self> {
        if y.len() != rm.dim_rx() {
            return Err(Error::Dimension(format!(
                "received vector has {} entries, H has {} rows",
                y.len(),
                rm.dim_rx()
            )));
        }
        Ok(Self {
            rm,
            y,
            c,
            gram: GramMatrix::new(rm.h()),
            hty: rm.h().tr_mul(y),
        })
    }

    pub fn gram(&self) -> &GramMatrix {
        &self.gram
    }

    pub fn model(&self) -> &RealModel {
        self.rm
    }

    pub fn received(&self) -> &DVector<f64> {
        self.y
    }

    pub fn constellation(&self) -> &Constellation {
        self.c
    }

    /// `H^T y`.
    pub fn matched(&self) -> &DVector<f64> {
        &self.hty
    }

    /// `z = H^T (y - H d)` recomputed from scratch.
    pub fn correlation(&self, d: &SymbolVector) -> DVector<f64> {
        self.rm.h().tr_mul(&(self.y - self.rm.h() * d.to_dvector()))
    }

    /// `d^T G d - 2 y^T H d`.
    pub fn cost(&self, d: &SymbolVector) -> f64 {
        let dv = d.to_dvector();
        (self.gram.matrix() * &dv).dot(&dv) - 2.0 * self.hty.dot(&dv)
    }

    fn check_symbols(&self, d: &SymbolVector) -> Result<()> {
        if d.len() != self.rm.dim_tx() {
            return Err(Error::Dimension(format!(
                "symbol vector has {} entries, H has {} columns",
                d.len(),
                self.rm.dim_tx()
            )));
        }
        if let Some(v) = d.values().iter().find(|&&v| !self.c.contains(v)) {
            return Err(Error::NotInSignalSpace(format!("level {v}")));
        }
        Ok(())
    }
}

/// Search state after `iteration` accepted updates.
#[derive(Debug, Clone, PartialEq)]
pub struct LasState {
    d: SymbolVector,
    z: DVector<f64>,
    cost: f64,
    iteration: usize,
}

/// Result of one search step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    Updated {
        index: usize,
        lambda: i32,
        delta: f64,
        clipped: bool,
    },
    Terminated,
}

impl LasState {
    pub fn new(problem: &LasProblem<'_>, d: SymbolVector) -> Result<Self> {
        problem.check_symbols(&d)?;
        let z = problem.correlation(&d);
        let cost = problem.cost(&d);
        Ok(Self {
            d,
            z,
            cost,
            iteration: 0,
        })
    }

    /// Builds a state from externally supplied parts without recomputing
    /// them; [`las_step`] validates the parts before moving.
    pub fn from_parts(d: SymbolVector, z: DVector<f64>, cost: f64) -> Self {
        Self {
            d,
            z,
            cost,
            iteration: 0,
        }
    }

    pub fn d(&self) -> &SymbolVector {
        &self.d
    }

    pub fn z(&self) -> &DVector<f64> {
        &self.z
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Moves symbol `p` by `lambda`, updating `z` and the cost incrementally.
    /// The caller is responsible for keeping `d_p + lambda` in the alphabet.
    pub fn apply_move(&mut self, gram: &GramMatrix, p: usize, lambda: i32) {
        let lam = f64::from(lambda);
        self.cost += lam * lam * gram.diag[p] - 2.0 * lam * self.z[p];
        self.z.axpy(-lam, &gram.g.column(p), 1.0);
        self.d.values_mut()[p] += lambda;
        self.iteration += 1;
    }

    /// Largest relative deviation of the incremental `z` and cost from a
    /// fresh recomputation.
    pub fn consistency_error(&self, problem: &LasProblem<'_>) -> (f64, f64) {
        let z_ref = problem.correlation(&self.d);
        let scale = z_ref.amax().max(problem.matched().amax()).max(1.0);
        let z_err = (&self.z - &z_ref).amax() / scale;
        let cost_ref = problem.cost(&self.d);
        let cost_err = (self.cost - cost_ref).abs() / cost_ref.abs().max(problem.y.norm_squared()).max(1.0);
        (z_err, cost_err)
    }

    fn verify(&self, problem: &LasProblem<'_>) -> Result<()> {
        problem.check_symbols(&self.d)?;
        if self.z.len() != self.d.len() {
            return Err(Error::Inconsistent(format!(
                "z has {} entries for {} symbols",
                self.z.len(),
                self.d.len()
            )));
        }
        let (z_err, cost_err) = self.consistency_error(problem);
        if !(z_err <= CONSISTENCY_TOL) || !(cost_err <= CONSISTENCY_TOL) {
            return Err(Error::Inconsistent(format!(
                "relative drift z: {z_err:.3e}, cost: {cost_err:.3e}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    index: usize,
    step: StepLength,
    delta: f64,
}

/// `s = argmin_p F(l_p,opt)` with ties to the smallest index.
fn best_candidate(problem: &LasProblem<'_>, state: &LasState) -> Result<(Candidate, usize)> {
    let diag = problem.gram.diag();
    let mut best: Option<Candidate> = None;
    let mut clipped = 0;
    for (p, (&z_p, &d_p)) in state.z.iter().zip(state.d.values()).enumerate() {
        let step = l_opt(z_p, diag[p], d_p, problem.c)?;
        clipped += usize::from(step.clipped);
        let delta = cost_delta(step.l, z_p, diag[p]);
        if best.is_none_or(|b| delta < b.delta) {
            best = Some(Candidate { index: p, step, delta });
        }
    }
    let best = best.ok_or_else(|| Error::Dimension("empty symbol vector".into()))?;
    Ok((best, clipped))
}

fn step_unchecked(problem: &LasProblem<'_>, state: &mut LasState) -> Result<(StepOutcome, usize)> {
    let (best, clipped_evals) = best_candidate(problem, state)?;
    if best.delta < 0.0 {
        let lambda = best.step.lambda();
        state.apply_move(&problem.gram, best.index, lambda);
        Ok((
            StepOutcome::Updated {
                index: best.index,
                lambda,
                delta: best.delta,
                clipped: best.step.clipped,
            },
            clipped_evals,
        ))
    } else {
        Ok((StepOutcome::Terminated, clipped_evals))
    }
}

/// One LAS iteration on a state that is first checked against a fresh
/// recomputation of `z` and the cost.
pub fn las_step(problem: &LasProblem<'_>, state: &mut LasState) -> Result<StepOutcome> {
    state.verify(problem)?;
    step_unchecked(problem, state).map(|(outcome, _)| outcome)
}

/// Output of a complete search.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub d_hat: SymbolVector,
    /// Number of accepted updates.
    pub iterations: usize,
    /// `C^(0), C^(1), ...`, one entry per visited vector.
    pub cost_trajectory: Vec<f64>,
    pub initializer: Option<Initializer>,
    /// Accepted updates whose step was clipped to stay in the alphabet.
    pub clipped_updates: usize,
    /// Per-symbol step evaluations that hit the alphabet boundary.
    pub clipped_evaluations: usize,
    /// Final `z = H^T (y - H d_hat)`.
    pub final_z: DVector<f64>,
}

/// Default iteration cap, `10 * dim_tx`.
pub fn default_max_iters(dim_tx: usize) -> usize {
    10 * dim_tx
}

/// Runs LAS from `start` until no single-symbol update lowers the cost.
pub fn las_search(problem: &LasProblem<'_>, start: SymbolVector, max_iters: usize) -> Result<DetectionResult> {
    if max_iters == 0 {
        return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
    }
    let mut state = LasState::new(problem, start)?;
    let mut trajectory = vec![state.cost];
    let mut clipped_updates = 0;
    let mut clipped_evaluations = 0;
    loop {
        let (outcome, clipped) = step_unchecked(problem, &mut state)?;
        clipped_evaluations += clipped;
        match outcome {
            StepOutcome::Terminated => break,
            StepOutcome::Updated { clipped, .. } => {
                clipped_updates += usize::from(clipped);
                trajectory.push(state.cost);
                if state.iteration >= max_iters {
                    // A further descent step would exceed the cap.
                    let (next, _) = best_candidate(problem, &state)?;
                    if next.delta < 0.0 {
                        return Err(Error::MaxIterations(max_iters));
                    }
                    break;
                }
            }
        }
    }
    state.verify(problem)?;
    Ok(DetectionResult {
        iterations: state.iteration,
        cost_trajectory: trajectory,
        initializer: None,
        clipped_updates,
        clipped_evaluations,
        final_z: state.z,
        d_hat: state.d,
    })
}

/// Full detector: initial filter, then LAS to a fixed point.
///
/// `max_iters` defaults to [`default_max_iters`].
pub fn las_detect(
    rm: &RealModel,
    y: &DVector<f64>,
    sigma2: f64,
    init: Initializer,
    c: &Constellation,
    max_iters: Option<usize>,
) -> Result<DetectionResult> {
    let problem = LasProblem::new(rm, y, c)?;
    let start = initial_filter(init, rm, y, sigma2, c)?;
    let cap = max_iters.unwrap_or_else(|| default_max_iters(rm.dim_tx()));
    let mut result = las_search(&problem, start, cap)?;
    result.initializer = Some(init);
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{realify, sample_channel, sample_noise, transmit, NoiseVector};
    use crate::rng::seeded;

    #[test]
    fn l_opt_examples() {
        let q4 = Constellation::qam4();
        // |z| = 3, a = 1: the optimum 2*round(1.5) is a tie between 2 and 4
        // (both give F = -8); the smaller step is taken and already lands on +1.
        let s = l_opt(3.0, 1.0, -1, &q4).unwrap();
        assert_eq!((s.l, s.direction), (2, 1));
        // Unclipped 4 from |z| = 3.5: clipped back to 2.
        let s = l_opt(3.5, 1.0, -1, &q4).unwrap();
        assert_eq!((s.l, s.direction, s.clipped), (2, 1, true));
        assert_eq!(l_opt(0.5, 1.0, 1, &q4).unwrap().l, 0);
        assert_eq!(l_opt(-0.5, 1.0, 1, &q4).unwrap().l, 0);
        let q16 = Constellation::qam16();
        for z in [0.1, 2.0, 7.0, 100.0] {
            assert_eq!(l_opt(z, 1.0, 3, &q16).unwrap().l, 0);
        }
        assert_eq!(l_opt(-100.0, 1.0, 3, &q16).unwrap().lambda(), -6);
        assert_eq!(l_opt(-5.0, 1.0, 3, &q16).unwrap().lambda(), -4);
        assert!(l_opt(1.0, 0.0, 1, &q4).is_err());
        assert!(l_opt(f64::NAN, 1.0, 1, &q4).is_err());
    }

    #[test]
    fn l_opt_rounding_ties_toward_zero() {
        let q = Constellation::new(64).unwrap();
        // |z|/(2a) = 0.5, 1.5, 2.5 -> 0, 1, 2 half-steps.
        assert_eq!(l_opt(1.0, 1.0, -7, &q).unwrap().l, 0);
        assert_eq!(l_opt(3.0, 1.0, -7, &q).unwrap().l, 2);
        assert_eq!(l_opt(5.0, 1.0, -7, &q).unwrap().l, 4);
        assert_eq!(l_opt(5.0001, 1.0, -7, &q).unwrap().l, 6);
    }

    #[test]
    fn cost_delta_examples() {
        assert_eq!(cost_delta(0, 3.0, 1.0), 0.0);
        assert_eq!(cost_delta(2, 3.0, 1.0), -8.0);
        assert_eq!(cost_delta(2, -3.0, 1.0), -8.0);
    }

    #[test]
    fn l_opt_minimizes_cost_delta_over_admissible_steps() {
        let mut rng = seeded(31);
        use rand::Rng;
        for order in [4, 16, 64] {
            let c = Constellation::new(order).unwrap();
            for _ in 0..2000 {
                let z: f64 = rng.random_range(-30.0..30.0);
                let a: f64 = rng.random_range(0.05..5.0);
                let d = c.pam_points()[rng.random_range(0..c.levels() as usize)];
                let s = l_opt(z, a, d, &c).unwrap();
                assert!(c.contains(d + s.lambda()));
                let best = cost_delta(s.l, z, a);
                // Enumerate every admissible move of d, in either direction.
                for &target in c.pam_points() {
                    let lambda = target - d;
                    let lf = f64::from(lambda);
                    let f = lf * lf * a - 2.0 * lf * z;
                    assert!(best <= f + 1e-9 * f.abs().max(1.0), "z={z} a={a} d={d} target={target}");
                }
            }
        }
    }

    fn scalar_problem_parts() -> (RealModel, DVector<f64>) {
        // One real dimension with a_1 = 1 and z_1 = 3 at d = -1: y = 2.
        let rm = RealModel::from_real(DMatrix::from_element(1, 1, 1.0)).unwrap();
        (rm, DVector::from_element(1, 2.0))
    }

    #[test]
    fn las_step_single_dimension() {
        let (rm, y) = scalar_problem_parts();
        let c = Constellation::qam4();
        let problem = LasProblem::new(&rm, &y, &c).unwrap();
        let mut state = LasState::new(&problem, SymbolVector::from_levels(vec![-1], &c).unwrap()).unwrap();
        assert_eq!(state.z()[0], 3.0);
        let before = state.cost();
        let outcome = las_step(&problem, &mut state).unwrap();
        assert_eq!(
            outcome,
            StepOutcome::Updated {
                index: 0,
                lambda: 2,
                delta: -8.0,
                clipped: false
            }
        );
        assert_eq!(state.d().values(), &[1]);
        assert_eq!(state.cost() - before, -8.0);
        assert_eq!(las_step(&problem, &mut state).unwrap(), StepOutcome::Terminated);
    }

    #[test]
    fn las_step_terminates_at_noiseless_truth() {
        let mut rng = seeded(3);
        let c = Constellation::qam16();
        let rm = realify(&sample_channel(4, 4, &mut rng).unwrap());
        let x = SymbolVector::new(vec![3, -1, 1, -3, 1, 1, -1, 3], &c).unwrap();
        let y = transmit(&rm, &x, &NoiseVector::zeros(8)).unwrap();
        let problem = LasProblem::new(&rm, &y, &c).unwrap();
        let mut state = LasState::new(&problem, x.clone()).unwrap();
        assert_eq!(las_step(&problem, &mut state).unwrap(), StepOutcome::Terminated);
        assert_eq!(state.d(), &x);
    }

    #[test]
    fn las_step_ties_pick_smallest_index() {
        // Identity channel, y = (2, 2): both symbols at -1 offer F = -8.
        let rm = RealModel::from_real(DMatrix::identity(2, 2)).unwrap();
        let y = DVector::from_vec(vec![2.0, 2.0]);
        let c = Constellation::qam4();
        let problem = LasProblem::new(&rm, &y, &c).unwrap();
        let mut state = LasState::new(&problem, SymbolVector::new(vec![-1, -1], &c).unwrap()).unwrap();
        match las_step(&problem, &mut state).unwrap() {
            StepOutcome::Updated { index, .. } => assert_eq!(index, 0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn las_step_rejects_corrupted_state() {
        let (rm, y) = scalar_problem_parts();
        let c = Constellation::qam4();
        let problem = LasProblem::new(&rm, &y, &c).unwrap();
        let d = SymbolVector::from_levels(vec![-1], &c).unwrap();
        let mut bad = LasState::from_parts(d.clone(), DVector::from_element(1, 3.5), problem.cost(&d));
        assert!(matches!(las_step(&problem, &mut bad), Err(Error::Inconsistent(_))));
        let mut bad_cost = LasState::from_parts(d.clone(), problem.correlation(&d), 0.0);
        assert!(matches!(las_step(&problem, &mut bad_cost), Err(Error::Inconsistent(_))));
        let mut outside = LasState::from_parts(SymbolVector::from_raw(vec![0]), DVector::zeros(1), 0.0);
        assert!(las_step(&problem, &mut outside).is_err());
    }

    #[test]
    fn incremental_updates_match_recomputation() {
        let mut rng = seeded(17);
        let c = Constellation::qam16();
        let rm = realify(&sample_channel(8, 8, &mut rng).unwrap());
        let x = SymbolVector::constant(16, -3, &c).unwrap();
        let n = sample_noise(8, 2.0, &mut rng).unwrap();
        let y = transmit(&rm, &x, &n).unwrap();
        let problem = LasProblem::new(&rm, &y, &c).unwrap();
        let mut state = LasState::new(&problem, SymbolVector::constant(16, 3, &c).unwrap()).unwrap();
        while let StepOutcome::Updated { .. } = las_step(&problem, &mut state).unwrap() {
            let (z_err, cost_err) = state.consistency_error(&problem);
            assert!(z_err < 1e-9 && cost_err < 1e-9);
        }
        assert!(state.iteration() > 0);
    }

    #[test]
    fn noiseless_zero_forcing_needs_no_updates() {
        let mut rng = seeded(21);
        let c = Constellation::qam4();
        let rm = realify(&sample_channel(6, 6, &mut rng).unwrap());
        let x = SymbolVector::new(vec![1, -1, -1, 1, 1, 1, -1, -1, 1, -1, 1, 1], &c).unwrap();
        let y = transmit(&rm, &x, &NoiseVector::zeros(12)).unwrap();
        let r = las_detect(&rm, &y, 0.0, Initializer::Zf, &c, None).unwrap();
        assert_eq!(r.d_hat, x);
        assert_eq!(r.iterations, 0);
        assert_eq!(r.cost_trajectory.len(), 1);
        assert_eq!(r.initializer, Some(Initializer::Zf));
    }

    #[test]
    fn trajectories_descend_and_end_at_one_symbol_fixed_points() {
        let mut rng = seeded(99);
        for (order, nt, snr) in [(4, 8, 4.0), (16, 8, 12.0), (4, 16, 8.0)] {
            let c = Constellation::new(order).unwrap();
            for init in [Initializer::Mf, Initializer::Zf, Initializer::Mmse] {
                for _ in 0..20 {
                    let rm = realify(&sample_channel(nt, nt, &mut rng).unwrap());
                    let bits: Vec<u8> = (0..2 * nt * c.bits_per_real_dim())
                        .map(|_| rand::Rng::random_range(&mut rng, 0..2u8))
                        .collect();
                    let x = crate::model::modulate(&bits, &c, nt).unwrap();
                    let sigma2 = crate::model::sigma2_from_snr_db(snr, nt, &c);
                    let n = sample_noise(nt, sigma2, &mut rng).unwrap();
                    let y = transmit(&rm, &x, &n).unwrap();
                    let r = las_detect(&rm, &y, sigma2, init, &c, None).unwrap();
                    assert!(r.cost_trajectory.windows(2).all(|w| w[1] < w[0]));
                    let problem = LasProblem::new(&rm, &y, &c).unwrap();
                    let g = problem.gram();
                    for p in 0..2 * nt {
                        for &level in c.pam_points() {
                            let lam = f64::from(level - r.d_hat.values()[p]);
                            let f = lam * lam * g.diag()[p] - 2.0 * lam * r.final_z[p];
                            assert!(f >= -1e-9, "descent left at p={p}: {f}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn iteration_cap_is_reported() {
        let mut rng = seeded(5);
        let c = Constellation::qam16();
        let rm = realify(&sample_channel(8, 8, &mut rng).unwrap());
        let x = SymbolVector::constant(16, 3, &c).unwrap();
        let y = transmit(&rm, &x, &NoiseVector::zeros(16)).unwrap();
        let problem = LasProblem::new(&rm, &y, &c).unwrap();
        let start = SymbolVector::constant(16, -3, &c).unwrap();
        assert_eq!(las_search(&problem, start.clone(), 1), Err(Error::MaxIterations(1)));
        assert!(las_search(&problem, start, 0).is_err());
    }
}
