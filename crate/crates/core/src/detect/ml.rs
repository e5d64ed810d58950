//! Exhaustive maximum-likelihood search over the signal space.

use nalgebra::DVector;

use super::las::GramMatrix;
use crate::error::{Error, Result};
use crate::model::{Constellation, RealModel, SymbolVector};

/// Default cap on `|S|` for the exhaustive search.
pub const DEFAULT_ML_CAP: u64 = 1 << 20;

/// `||y - H d||^2`.
pub fn residual_norm_sq(rm: &RealModel, y: &DVector<f64>, d: &SymbolVector) -> f64 {
    (y - rm.h() * d.to_dvector()).norm_squared()
}

/// `d^T H^T H d - 2 y^T H d`, equal to `||y - H d||^2 - ||y||^2`.
pub fn quadratic_cost(rm: &RealModel, y: &DVector<f64>, d: &SymbolVector) -> f64 {
    let hd = rm.h() * d.to_dvector();
    hd.norm_squared() - 2.0 * y.dot(&hd)
}

/// Size of the signal space, `sqrt(M)^dim`, as a float so large systems do
/// not overflow.
pub fn signal_space_size(c: &Constellation, dim: usize) -> f64 {
    f64::from(c.levels()).powi(dim as i32)
}

/// ML vector with its metric.
#[derive(Debug, Clone, PartialEq)]
pub struct MlSolution {
    pub d: SymbolVector,
    /// `||y - H d||^2`.
    pub metric: f64,
}

/// ML detection with the default cap.
pub fn ml_bruteforce(rm: &RealModel, y: &DVector<f64>, c: &Constellation) -> Result<SymbolVector> {
    ml_search(rm, y, c, DEFAULT_ML_CAP).map(|s| s.d)
}

/// Global minimizer of `||y - H d||^2` over the signal space.
///
/// Candidates are visited in reflected Gray order so consecutive vectors
/// differ in one symbol by `+-2`, and the cost is tracked with the same
/// rank-one update the LAS search uses. Near-ties (relative `1e-12`) go to
/// the lexicographically smaller vector.
pub fn ml_search(rm: &RealModel, y: &DVector<f64>, c: &Constellation, cap: u64) -> Result<MlSolution> {
    let dim = rm.dim_tx();
    if y.len() != rm.dim_rx() {
        return Err(Error::Dimension(format!(
            "received vector has {} entries, H has {} rows",
            y.len(),
            rm.dim_rx()
        )));
    }
    let size = signal_space_size(c, dim);
    if size > cap as f64 {
        return Err(Error::SearchSpaceTooLarge { size, cap });
    }
    let total = size as u64;
    let levels = c.levels() as usize;
    let gram = GramMatrix::new(rm.h());
    let g = gram.matrix();
    let hty = rm.h().tr_mul(y);

    let mut digits = vec![0usize; dim];
    let mut up = vec![true; dim];
    let mut d: Vec<i32> = vec![-c.max_level(); dim];
    let start = SymbolVector::from_raw(d.clone());
    let dv = start.to_dvector();
    let mut z = &hty - g * &dv;
    let mut cost = (g * &dv).dot(&dv) - 2.0 * hty.dot(&dv);
    let scale = y.norm_squared().max(1.0);

    let mut best_cost = cost;
    let mut best = d.clone();
    for t in 1..total {
        // The digit that moves at step t is the L-adic valuation of t.
        let mut p = 0;
        let mut rest = t;
        while rest % levels as u64 == 0 {
            rest /= levels as u64;
            p += 1;
        }
        let lambda: i32 = if up[p] { 2 } else { -2 };
        if up[p] {
            digits[p] += 1;
            if digits[p] == levels - 1 {
                up[p] = false;
            }
        } else {
            digits[p] -= 1;
            if digits[p] == 0 {
                up[p] = true;
            }
        }
        let lam = f64::from(lambda);
        cost += lam * lam * gram.diag()[p] - 2.0 * lam * z[p];
        z.axpy(-lam, &g.column(p), 1.0);
        d[p] += lambda;

        if cost < best_cost - 1e-12 * scale {
            best_cost = cost;
            best.copy_from_slice(&d);
        } else if cost <= best_cost + 1e-12 * scale && d < best {
            best_cost = best_cost.min(cost);
            best.copy_from_slice(&d);
        }
    }
    let d = SymbolVector::from_raw(best);
    let metric = residual_norm_sq(rm, y, &d);
    Ok(MlSolution { d, metric })
}
