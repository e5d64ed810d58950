use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{Constellation, RealModel, SymbolVector};

/// Linear front end producing the LAS starting vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Initializer {
    /// Matched filter, `B = H^T`.
    Mf,
    /// Zero forcing, `B = (H^T H)^-1 H^T`.
    Zf,
    /// Linear MMSE, `B = (H^T H + (sigma2/2)/E_r I)^-1 H^T` with `E_r` the
    /// mean energy of one real PAM component.
    Mmse,
}

impl fmt::Display for Initializer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Initializer::Mf => "mf",
            Initializer::Zf => "zf",
            Initializer::Mmse => "mmse",
        })
    }
}

impl FromStr for Initializer {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mf" => Ok(Initializer::Mf),
            "zf" => Ok(Initializer::Zf),
            "mmse" => Ok(Initializer::Mmse),
            other => Err(Error::InvalidParameter(format!("unknown initializer '{other}'"))),
        }
    }
}

/// Unquantized filter output `B y`.
pub fn filter_output(
    kind: Initializer,
    rm: &RealModel,
    y: &DVector<f64>,
    sigma2: f64,
    c: &Constellation,
) -> Result<DVector<f64>> {
    if y.len() != rm.dim_rx() {
        return Err(Error::Dimension(format!(
            "received vector has {} entries, H has {} rows",
            y.len(),
            rm.dim_rx()
        )));
    }
    let h = rm.h();
    let hty = h.tr_mul(y);
    match kind {
        Initializer::Mf => Ok(hty),
        Initializer::Zf => solve_spd(h.tr_mul(h), &hty).ok_or(Error::Singular("H^T H (zero forcing)")),
        Initializer::Mmse => {
            if !(sigma2 >= 0.0) {
                return Err(Error::InvalidParameter(format!("noise variance {sigma2}")));
            }
            let reg = 0.5 * sigma2 / c.real_symbol_energy();
            let mut a = h.tr_mul(h);
            for i in 0..a.nrows() {
                a[(i, i)] += reg;
            }
            solve_spd(a, &hty).ok_or(Error::Singular("H^T H + regularizer (MMSE)"))
        }
    }
}

/// Cholesky solve; pivots below `1e-12` of the largest diagonal entry count
/// as singular.
fn solve_spd(a: DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let max_diag = a.diagonal().amax();
    let chol = a.cholesky()?;
    let l = chol.l_dirty();
    if (0..l.nrows()).any(|i| !(l[(i, i)] * l[(i, i)] > 1e-12 * max_diag)) {
        return None;
    }
    let x = chol.solve(b);
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Starting vector `d^(0)`: the filter output quantized to the nearest PAM
/// level per dimension (ties to the larger level).
pub fn initial_filter(
    kind: Initializer,
    rm: &RealModel,
    y: &DVector<f64>,
    sigma2: f64,
    c: &Constellation,
) -> Result<SymbolVector> {
    let soft = filter_output(kind, rm, y, sigma2, c)?;
    Ok(SymbolVector::from_raw(soft.iter().map(|&v| c.quantize(v)).collect()))
}
