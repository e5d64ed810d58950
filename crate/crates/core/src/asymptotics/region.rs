//! Multi-symbol update inequalities and the ML noise regions they define.
//!
//! For 4-QAM an `n`-symbol update flips the signs of `d` at the indices of a
//! tuple `u`. `d` survives every `n`-update iff
//! `(y - H d + H delta/2)^T (H delta) >= 0` for all `u` of size `n`, and `d`
//! is the ML vector iff the noise satisfies the equivalent condition
//! `(n + H(x - d) + s)^T s >= 0`, `s = sum_j h_{i_j} d_{i_j}`, for every
//! tuple of every size.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Constellation, RealModel, SymbolVector};

/// Default number of tuples checked before switching to sampling.
pub const DEFAULT_TUPLE_BUDGET: u64 = 100_000;

/// Distinct, strictly increasing symbol indices (0-based).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct UpdateTuple {
    indices: Vec<usize>,
}

impl UpdateTuple {
    pub fn new(indices: Vec<usize>, dim: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidParameter("update tuple must not be empty".into()));
        }
        if !indices.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidParameter(format!(
                "tuple indices must be strictly increasing: {indices:?}"
            )));
        }
        if indices[indices.len() - 1] >= dim {
            return Err(Error::InvalidParameter(format!(
                "tuple {indices:?} out of range for dimension {dim}"
            )));
        }
        Ok(Self { indices })
    }

    /// All indices `0..dim`.
    pub fn full(dim: usize) -> Result<Self> {
        Self::new((0..dim).collect(), dim)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

fn check_tuple(d: &SymbolVector, u: &UpdateTuple) -> Result<()> {
    if u.indices.last().is_some_and(|&i| i >= d.len()) {
        return Err(Error::Dimension(format!(
            "tuple {:?} out of range for {} symbols",
            u.indices,
            d.len()
        )));
    }
    Ok(())
}

/// `delta = sum_k 2 d_{i_k} e_{i_k}`.
pub fn delta_d(d: &SymbolVector, u: &UpdateTuple) -> Result<Vec<i32>> {
    check_tuple(d, u)?;
    let mut delta = vec![0; d.len()];
    for &i in u.indices() {
        delta[i] = 2 * d.values()[i];
    }
    Ok(delta)
}

/// `d - delta`: the symbols at the tuple indices negated.
pub fn apply_update(d: &SymbolVector, u: &UpdateTuple) -> Result<SymbolVector> {
    let delta = delta_d(d, u)?;
    Ok(SymbolVector::from_raw(
        d.values().iter().zip(&delta).map(|(a, b)| a - b).collect(),
    ))
}

/// Outcome of one update inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LnCheck {
    pub satisfied: bool,
    /// `(y - H d + H delta / 2)^T (H delta)`.
    pub margin: f64,
}

fn h_times(rm: &RealModel, v: &[i32]) -> DVector<f64> {
    rm.h() * DVector::from_iterator(v.len(), v.iter().map(|&x| f64::from(x)))
}

/// Evaluates the `n`-update inequality for tuple `u`.
pub fn check_ln(y: &DVector<f64>, rm: &RealModel, d: &SymbolVector, u: &UpdateTuple) -> Result<LnCheck> {
    if d.len() != rm.dim_tx() || y.len() != rm.dim_rx() {
        return Err(Error::Dimension("d or y does not match H".into()));
    }
    let delta = delta_d(d, u)?;
    let h_delta = h_times(rm, &delta);
    let residual = y - h_times(rm, d.values());
    let margin = (residual + &h_delta * 0.5).dot(&h_delta);
    Ok(LnCheck {
        satisfied: margin >= 0.0,
        margin,
    })
}

/// `||y - H(d - delta)||^2 - ||y - H d||^2`, which equals twice the margin
/// of [`check_ln`].
pub fn update_cost_increase(y: &DVector<f64>, rm: &RealModel, d: &SymbolVector, u: &UpdateTuple) -> Result<f64> {
    let moved = apply_update(d, u)?;
    let before = (y - h_times(rm, d.values())).norm_squared();
    let after = (y - h_times(rm, moved.values())).norm_squared();
    Ok(after - before)
}

/// Whether `d` is a one-symbol fixed point (in `L_1`): every single-index
/// inequality holds. Returns the smallest margin.
pub fn check_l1(y: &DVector<f64>, rm: &RealModel, d: &SymbolVector) -> Result<LnCheck> {
    let mut worst = f64::INFINITY;
    for p in 0..d.len() {
        let m = check_ln(y, rm, d, &UpdateTuple::new(vec![p], d.len())?)?.margin;
        worst = worst.min(m);
    }
    Ok(LnCheck {
        satisfied: worst >= 0.0,
        margin: worst,
    })
}

/// Membership of a noise vector in the region of `d` up to depth `m`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionReport {
    pub m: usize,
    /// Worst violating tuple, present iff `margin < 0`.
    pub violated_tuple: Option<UpdateTuple>,
    /// Smallest left-hand side over the checked tuples.
    pub margin: f64,
    /// All tuples of size `1..=m` were checked.
    pub exhaustive: bool,
    pub tuples_checked: u64,
}

impl RegionReport {
    pub fn is_member(&self) -> bool {
        self.violated_tuple.is_none()
    }
}

/// `C(n, k)` as a float.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Precomputed pieces of the region inequality:
/// `LHS(u) = sum_{i in u} b_i + sum_{i,j in u} C_ij` with
/// `b_i = (n + H(x - d))^T h_i d_i` and `C_ij = d_i d_j h_i^T h_j`.
struct RegionTerms {
    b: Vec<f64>,
    c: DMatrix<f64>,
}

impl RegionTerms {
    fn new(noise: &DVector<f64>, rm: &RealModel, x: &SymbolVector, d: &SymbolVector) -> Self {
        let dim = rm.dim_tx();
        let diff: Vec<i32> = x.values().iter().zip(d.values()).map(|(a, b)| a - b).collect();
        let base = noise + h_times(rm, &diff);
        let mut scaled = rm.h().clone();
        for (j, &dj) in d.values().iter().enumerate() {
            scaled.column_mut(j).scale_mut(f64::from(dj));
        }
        let b = (0..dim).map(|i| base.dot(&scaled.column(i))).collect();
        let c = scaled.tr_mul(&scaled);
        Self { b, c }
    }

    fn lhs(&self, idx: &[usize]) -> f64 {
        let mut total = 0.0;
        for (a, &i) in idx.iter().enumerate() {
            total += self.b[i] + self.c[(i, i)];
            for &j in &idx[..a] {
                total += 2.0 * self.c[(i, j)];
            }
        }
        total
    }
}

#[derive(Default)]
struct Worst {
    margin: f64,
    tuple: Vec<usize>,
    checked: u64,
}

impl Worst {
    fn record(&mut self, lhs: f64, idx: &[usize]) {
        self.checked += 1;
        if lhs < self.margin {
            self.margin = lhs;
            self.tuple = idx.to_vec();
        }
    }
}

/// Depth-first enumeration of tuples with sizes in `lo..=hi`, updating the
/// left-hand side incrementally.
fn enumerate(terms: &RegionTerms, lo: usize, hi: usize, worst: &mut Worst) {
    let dim = terms.b.len();
    let mut stack: Vec<usize> = Vec::with_capacity(hi);
    // cross[k] = sum_{j in stack} C_jk
    let mut cross = vec![0.0; dim];
    #[allow(clippy::too_many_arguments)]
    fn rec(
        terms: &RegionTerms,
        lo: usize,
        hi: usize,
        start: usize,
        lhs: f64,
        stack: &mut Vec<usize>,
        cross: &mut [f64],
        worst: &mut Worst,
    ) {
        let dim = terms.b.len();
        // Stop once too few indices remain to reach size `lo`.
        let end = dim + 1 + stack.len() - lo.max(stack.len() + 1);
        for k in start..end {
            let next = lhs + terms.b[k] + terms.c[(k, k)] + 2.0 * cross[k];
            stack.push(k);
            if stack.len() >= lo {
                worst.record(next, stack);
            }
            if stack.len() < hi {
                for (j, cj) in cross.iter_mut().enumerate() {
                    *cj += terms.c[(k, j)];
                }
                rec(terms, lo, hi, k + 1, next, stack, cross, worst);
                for (j, cj) in cross.iter_mut().enumerate() {
                    *cj -= terms.c[(k, j)];
                }
            }
            stack.pop();
        }
    }
    rec(terms, lo, hi, 0, 0.0, &mut stack, &mut cross, worst);
}

/// Checks `(n + H(x - d) + s_u)^T s_u >= 0` for tuples of size `1..=m`.
///
/// When `sum_{k<=m} C(dim, k)` exceeds `tuple_budget`, each size level gets
/// a share of the budget proportional to its tuple count (at least
/// `min(C(dim, k), dim)`), drawn uniformly without replacement; levels whose
/// share covers them are enumerated completely.
pub fn check_region<R: Rng + ?Sized>(
    noise: &DVector<f64>,
    rm: &RealModel,
    x: &SymbolVector,
    d: &SymbolVector,
    m: usize,
    tuple_budget: u64,
    rng: &mut R,
) -> Result<RegionReport> {
    let dim = rm.dim_tx();
    if m == 0 || m > dim {
        return Err(Error::InvalidParameter(format!("depth m = {m} outside 1..={dim}")));
    }
    if x.len() != dim || d.len() != dim || noise.len() != rm.dim_rx() {
        return Err(Error::Dimension("x, d or noise does not match H".into()));
    }
    let terms = RegionTerms::new(noise, rm, x, d);
    let total: f64 = (1..=m).map(|k| binomial(dim, k)).sum();
    let mut worst = Worst {
        margin: f64::INFINITY,
        ..Default::default()
    };
    let exhaustive = total <= tuple_budget as f64;
    if exhaustive {
        enumerate(&terms, 1, m, &mut worst);
    } else {
        for k in 1..=m {
            let level = binomial(dim, k);
            let share = (tuple_budget as f64 * level / total).floor().max(level.min(dim as f64));
            if share >= level {
                enumerate(&terms, k, k, &mut worst);
                continue;
            }
            let want = share as usize;
            let mut seen: HashSet<Vec<usize>> = HashSet::with_capacity(want);
            while seen.len() < want {
                let mut idx = index::sample(rng, dim, k).into_vec();
                idx.sort_unstable();
                if seen.insert(idx.clone()) {
                    worst.record(terms.lhs(&idx), &idx);
                }
            }
        }
    }
    let violated_tuple = (worst.margin < 0.0).then(|| UpdateTuple {
        indices: worst.tuple.clone(),
    });
    Ok(RegionReport {
        m,
        violated_tuple,
        margin: worst.margin,
        exhaustive,
        tuples_checked: worst.checked,
    })
}

/// Every `d` in the signal space whose full-depth region contains `noise`,
/// found by exhaustive enumeration of candidates and tuples.
pub fn region_members(
    noise: &DVector<f64>,
    rm: &RealModel,
    x: &SymbolVector,
    c: &Constellation,
    cap: u64,
) -> Result<Vec<SymbolVector>> {
    let dim = rm.dim_tx();
    let candidates = crate::detect::signal_space_size(c, dim);
    let work = candidates * (2f64.powi(dim as i32) - 1.0);
    if work > cap as f64 {
        return Err(Error::SearchSpaceTooLarge { size: work, cap });
    }
    let pts = c.pam_points();
    let mut members = Vec::new();
    let mut idx = vec![0usize; dim];
    'outer: loop {
        let d = SymbolVector::from_raw(idx.iter().map(|&i| pts[i]).collect());
        let terms = RegionTerms::new(noise, rm, x, &d);
        let mut worst = Worst {
            margin: f64::INFINITY,
            ..Default::default()
        };
        enumerate(&terms, 1, dim, &mut worst);
        if worst.margin >= 0.0 {
            members.push(d);
        }
        for k in (0..dim).rev() {
            idx[k] += 1;
            if idx[k] < pts.len() {
                continue 'outer;
            }
            idx[k] = 0;
        }
        break;
    }
    Ok(members)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::{las_detect, ml_bruteforce, Initializer};
    use crate::model::{sample_system, sigma2_from_snr_db};
    use crate::rng::{seeded, trial_rng};

    fn q4() -> Constellation {
        Constellation::qam4()
    }

    #[test]
    fn tuple_validation() {
        assert!(UpdateTuple::new(vec![0, 2, 3], 4).is_ok());
        assert!(UpdateTuple::new(vec![], 4).is_err());
        assert!(UpdateTuple::new(vec![2, 1], 4).is_err());
        assert!(UpdateTuple::new(vec![1, 1], 4).is_err());
        assert!(UpdateTuple::new(vec![4], 4).is_err());
    }

    #[test]
    fn delta_d_examples() {
        let c = q4();
        let d = SymbolVector::new(vec![1, 1, 1, 1], &c).unwrap();
        let u = UpdateTuple::new(vec![0], 4).unwrap();
        assert_eq!(delta_d(&d, &u).unwrap(), vec![2, 0, 0, 0]);
        assert_eq!(apply_update(&d, &u).unwrap().values(), &[-1, 1, 1, 1]);
        let d = SymbolVector::new(vec![1, -1, -1, 1], &c).unwrap();
        let all = UpdateTuple::full(4).unwrap();
        let flipped = apply_update(&d, &all).unwrap();
        assert_eq!(flipped.values(), &[-1, 1, 1, -1]);
        let u = UpdateTuple::new(vec![1, 3], 4).unwrap();
        assert_eq!(apply_update(&apply_update(&d, &u).unwrap(), &u).unwrap(), d);
        assert!(delta_d(&d, &UpdateTuple::new(vec![5], 6).unwrap()).is_err());
    }

    #[test]
    fn zero_residual_satisfies_every_update() {
        let draw = sample_system(3, 3, &q4(), 0.0, &mut seeded(1)).unwrap();
        for k in 1..=6 {
            let u = UpdateTuple::new((0..k).collect(), 6).unwrap();
            let check = check_ln(&draw.y, &draw.rm, &draw.x, &u).unwrap();
            let delta = delta_d(&draw.x, &u).unwrap();
            let hd = h_times(&draw.rm, &delta);
            assert!(check.satisfied);
            assert!((check.margin - 0.5 * hd.norm_squared()).abs() < 1e-9 * check.margin);
        }
    }

    #[test]
    fn inequality_matches_cost_comparison() {
        let mut rng = seeded(2);
        for _ in 0..300 {
            let draw = sample_system(3, 3, &q4(), 3.0, &mut rng).unwrap();
            let k = rng.random_range(1..=6);
            let mut idx = index::sample(&mut rng, 6, k).into_vec();
            idx.sort_unstable();
            let u = UpdateTuple::new(idx, 6).unwrap();
            let d = SymbolVector::new((0..6).map(|_| if rng.random() { 1 } else { -1 }).collect(), &q4()).unwrap();
            let check = check_ln(&draw.y, &draw.rm, &d, &u).unwrap();
            let inc = update_cost_increase(&draw.y, &draw.rm, &d, &u).unwrap();
            assert!((2.0 * check.margin - inc).abs() <= 1e-9 * inc.abs().max(1.0));
            assert_eq!(check.satisfied, inc >= 0.0);
        }
    }

    #[test]
    fn ml_vector_satisfies_every_update() {
        let mut rng = seeded(3);
        for _ in 0..50 {
            let draw = sample_system(2, 2, &q4(), 2.0, &mut rng).unwrap();
            let ml = ml_bruteforce(&draw.rm, &draw.y, &q4()).unwrap();
            for mask in 1u32..16 {
                let u = UpdateTuple::new((0..4).filter(|i| mask >> i & 1 == 1).collect(), 4).unwrap();
                assert!(check_ln(&draw.y, &draw.rm, &ml, &u).unwrap().satisfied);
            }
        }
    }

    #[test]
    fn region_with_zero_noise_contains_truth() {
        let draw = sample_system(4, 4, &q4(), 0.0, &mut seeded(4)).unwrap();
        for m in 1..=8 {
            let r = check_region(draw.noise.values(), &draw.rm, &draw.x, &draw.x, m, DEFAULT_TUPLE_BUDGET, &mut seeded(0))
                .unwrap();
            assert!(r.is_member());
            assert!(r.exhaustive);
            assert!(r.margin > 0.0);
            let expected: f64 = (1..=m).map(|k| binomial(8, k)).sum();
            assert_eq!(r.tuples_checked as f64, expected);
        }
        assert!(check_region(draw.noise.values(), &draw.rm, &draw.x, &draw.x, 0, 10, &mut seeded(0)).is_err());
        assert!(check_region(draw.noise.values(), &draw.rm, &draw.x, &draw.x, 9, 10, &mut seeded(0)).is_err());
    }

    #[test]
    fn region_lhs_matches_direct_formula() {
        let mut rng = seeded(5);
        let draw = sample_system(3, 3, &q4(), 4.0, &mut rng).unwrap();
        let d = SymbolVector::new(vec![1, -1, 1, 1, -1, -1], &q4()).unwrap();
        let terms = RegionTerms::new(draw.noise.values(), &draw.rm, &draw.x, &d);
        let diff: Vec<i32> = draw.x.values().iter().zip(d.values()).map(|(a, b)| a - b).collect();
        let base = draw.noise.values() + h_times(&draw.rm, &diff);
        for mask in 1u32..64 {
            let idx: Vec<usize> = (0..6).filter(|i| mask >> i & 1 == 1).collect();
            let mut sel = vec![0; 6];
            for &i in &idx {
                sel[i] = d.values()[i];
            }
            let s = h_times(&draw.rm, &sel);
            let direct = (&base + &s).dot(&s);
            assert!((terms.lhs(&idx) - direct).abs() < 1e-9 * direct.abs().max(1.0));
        }
        // The enumerated minimum agrees with the brute-force minimum.
        let r = check_region(draw.noise.values(), &draw.rm, &draw.x, &d, 6, 1000, &mut rng).unwrap();
        let brute = (1u32..64)
            .map(|mask| terms.lhs(&(0..6).filter(|i| mask >> i & 1 == 1).collect::<Vec<_>>()))
            .fold(f64::INFINITY, f64::min);
        assert!((r.margin - brute).abs() < 1e-9 * brute.abs().max(1.0));
        assert_eq!(r.violated_tuple.is_some(), r.margin < 0.0);
    }

    #[test]
    fn exactly_one_region_member_and_it_is_ml() {
        let c = q4();
        for t in 0..200 {
            let draw = sample_system(2, 2, &c, 1.0, &mut trial_rng(6, t)).unwrap();
            let members = region_members(draw.noise.values(), &draw.rm, &draw.x, &c, 1 << 20).unwrap();
            assert_eq!(members.len(), 1, "trial {t}");
            assert_eq!(members[0], ml_bruteforce(&draw.rm, &draw.y, &c).unwrap());
        }
    }

    #[test]
    fn las_output_is_always_in_depth_one_region() {
        let c = q4();
        let sigma2 = sigma2_from_snr_db(6.0, 32, &c);
        for t in 0..20 {
            let draw = sample_system(32, 32, &c, sigma2, &mut trial_rng(7, t)).unwrap();
            let r = las_detect(&draw.rm, &draw.y, sigma2, Initializer::Mmse, &c, None).unwrap();
            let report = check_region(draw.noise.values(), &draw.rm, &draw.x, &r.d_hat, 1, DEFAULT_TUPLE_BUDGET, &mut seeded(0))
                .unwrap();
            assert!(report.is_member(), "margin {}", report.margin);
            assert!(check_l1(&draw.y, &draw.rm, &r.d_hat).unwrap().satisfied);
        }
    }

    #[test]
    fn sampled_checks_respect_budget_and_cover_singles() {
        let c = q4();
        let sigma2 = sigma2_from_snr_db(8.0, 16, &c);
        let draw = sample_system(16, 16, &c, sigma2, &mut seeded(8)).unwrap();
        let r = check_region(draw.noise.values(), &draw.rm, &draw.x, &draw.x, 32, 5000, &mut seeded(9)).unwrap();
        assert!(!r.exhaustive);
        // Level 1 is always fully covered, so at least 32 tuples; the budget
        // may be exceeded only by those per-level floors.
        assert!(r.tuples_checked >= 32 && r.tuples_checked <= 5000 + 32 * 32);
        let again = check_region(draw.noise.values(), &draw.rm, &draw.x, &draw.x, 32, 5000, &mut seeded(9)).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(4, 2), 6.0);
        assert_eq!(binomial(16, 0), 1.0);
        assert_eq!(binomial(3, 5), 0.0);
        let sum: f64 = (1..=4).map(|k| binomial(4, k)).sum();
        assert_eq!(sum, 15.0);
    }
}
