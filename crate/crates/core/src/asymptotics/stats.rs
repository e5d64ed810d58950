//! Column-correlation statistics of the real channel and their Monte Carlo
//! distributions.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use super::region::{check_region, UpdateTuple};
use crate::detect::{las_detect, Initializer};
use crate::error::{Error, Result};
use crate::model::{realify, sample_channel, sample_system, sigma2_from_snr_db, Constellation, RealModel, SymbolVector};
use crate::rng::trial_rng;

/// One draw of the normalized cross-correlation statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZSample {
    /// Tuple size.
    pub n: usize,
    pub n_tx: usize,
    pub value: f64,
}

fn check_inputs(rm: &RealModel, d: &SymbolVector, u: &UpdateTuple) -> Result<()> {
    if d.len() != rm.dim_tx() {
        return Err(Error::Dimension(format!(
            "{} symbols for {} columns",
            d.len(),
            rm.dim_tx()
        )));
    }
    if u.indices().last().is_some_and(|&i| i >= d.len()) {
        return Err(Error::Dimension(format!("tuple {:?} out of range", u.indices())));
    }
    Ok(())
}

/// `s = sum_{i in u} h_i d_i` and `sum_{i in u} ||h_i||^2`.
fn signed_sum(rm: &RealModel, d: &SymbolVector, idx: &[usize]) -> (DVector<f64>, f64) {
    let mut s = DVector::zeros(rm.dim_rx());
    let mut energy = 0.0;
    for &i in idx {
        let col = rm.column(i);
        s.axpy(f64::from(d.values()[i]), &col, 1.0);
        energy += col.norm_squared();
    }
    (s, energy)
}

/// `z = sum_{k<j} h_{i_j}^T h_{i_k} d_{i_j} d_{i_k} / sum_j ||h_{i_j}||^2`,
/// evaluated as `(||s||^2 / sum ||h||^2 - 1) / 2`.
pub fn z_statistic(rm: &RealModel, d: &SymbolVector, u: &UpdateTuple) -> Result<ZSample> {
    check_inputs(rm, d, u)?;
    let (s, energy) = signed_sum(rm, d, u.indices());
    if !(energy > 0.0) {
        return Err(Error::InvalidParameter("selected columns have zero energy".into()));
    }
    Ok(ZSample {
        n: u.len(),
        n_tx: rm.n_tx(),
        value: 0.5 * (s.norm_squared() - energy) / energy,
    })
}

/// Ratios used to grow a region inequality by one index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VwSample {
    /// `2 s_{m-1}^T h_{i_m} d_{i_m} / (||s_{m-1}||^2 + ||h_{i_m}||^2)`.
    pub v: f64,
    /// `v + 1 = ||s_m||^2 / (||h_{i_m}||^2 + ||s_{m-1}||^2)`.
    pub w: f64,
}

/// `v_m` and `w_m` for the tuple `u` (its last index plays `i_m`).
pub fn vw_statistics(rm: &RealModel, d: &SymbolVector, u: &UpdateTuple) -> Result<VwSample> {
    check_inputs(rm, d, u)?;
    let (last, head) = u.indices().split_last().expect("tuples are non-empty");
    let (prefix, _) = signed_sum(rm, d, head);
    let tail = rm.column(*last) * f64::from(d.values()[*last]);
    let denom = prefix.norm_squared() + tail.norm_squared();
    if !(denom > 0.0) {
        return Err(Error::InvalidParameter("selected columns have zero energy".into()));
    }
    let v = 2.0 * prefix.dot(&tail) / denom;
    let w = (prefix + &tail).norm_squared() / denom;
    debug_assert!((w - (v + 1.0)).abs() <= 1e-9 * w.abs().max(1.0));
    Ok(VwSample { v, w: v + 1.0 })
}

/// Moments of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    /// Unbiased sample standard deviation.
    pub std: f64,
    pub mean_abs: f64,
}

pub fn summarize(xs: &[f64]) -> Summary {
    let n = xs.len();
    if n == 0 {
        return Summary {
            count: 0,
            mean: f64::NAN,
            std: f64::NAN,
            mean_abs: f64::NAN,
        };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    let std = if n > 1 { (ss / (n - 1) as f64).sqrt() } else { 0.0 };
    let mean_abs = xs.iter().map(|x| x.abs()).sum::<f64>() / n as f64;
    Summary {
        count: n,
        mean,
        std,
        mean_abs,
    }
}

/// Equal-width histogram over `[lo, hi)` with separate out-of-range counts.
///
/// Densities are normalized over the in-range samples, so
/// `sum(density) * width == 1` whenever any sample falls in range.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if bins == 0 || !(hi > lo) {
            return Err(Error::InvalidParameter(format!("histogram [{lo}, {hi}) with {bins} bins")));
        }
        Ok(Self {
            lo,
            hi,
            counts: vec![0; bins],
            underflow: 0,
            overflow: 0,
        })
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    pub fn add(&mut self, x: f64) {
        if x < self.lo {
            self.underflow += 1;
        } else if x >= self.hi || x.is_nan() {
            self.overflow += 1;
        } else {
            let last = self.counts.len() - 1;
            let bin = ((x - self.lo) / self.width()).floor() as usize;
            self.counts[bin.min(last)] += 1;
        }
    }

    /// Adds another histogram with identical binning.
    pub fn merge(&mut self, other: &Histogram) -> Result<()> {
        if other.lo != self.lo || other.hi != self.hi || other.counts.len() != self.counts.len() {
            return Err(Error::InvalidParameter("histogram binning differs".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.underflow += other.underflow;
        self.overflow += other.overflow;
        Ok(())
    }

    pub fn in_range(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.in_range() + self.underflow + self.overflow
    }

    pub fn densities(&self) -> Vec<f64> {
        let norm = self.in_range() as f64 * self.width();
        self.counts
            .iter()
            .map(|&c| if norm > 0.0 { c as f64 / norm } else { 0.0 })
            .collect()
    }

    pub fn bin_edges(&self, bin: usize) -> (f64, f64) {
        let w = self.width();
        (self.lo + bin as f64 * w, self.lo + (bin + 1) as f64 * w)
    }

    /// Index of the bin containing `x`, if in range.
    pub fn bin_of(&self, x: f64) -> Option<usize> {
        (x >= self.lo && x < self.hi).then(|| (((x - self.lo) / self.width()).floor() as usize).min(self.counts.len() - 1))
    }
}

/// Default histogram resolution: width 0.01 over `[-1, 1)`.
pub const DEFAULT_Z_BINS: usize = 200;

/// Width of the window counted by [`ZDistribution::frac_near_zero`].
pub const NEAR_ZERO: f64 = 0.05;

/// Empirical distribution of `z` at one system size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZDistribution {
    pub n_tx: usize,
    pub tuple_size: usize,
    pub trials: usize,
    pub summary: Summary,
    /// Fraction of samples with `|z| <` [`NEAR_ZERO`].
    pub frac_near_zero: f64,
    pub histogram: Histogram,
}

impl ZDistribution {
    /// Density of the bin containing zero.
    pub fn density_at_zero(&self) -> f64 {
        self.histogram
            .bin_of(0.0)
            .map(|b| self.histogram.densities()[b])
            .unwrap_or(0.0)
    }
}

/// Channel for trial `t` of a statistic experiment at `n_tx = n_rx`.
fn trial_channel(n_tx: usize, seed: u64, t: usize) -> RealModel {
    let mut rng = trial_rng(seed, t as u64);
    realify(&sample_channel(n_tx, n_tx, &mut rng).expect("n_tx validated"))
}

/// `z` at tuple size `tuple_size` (first `tuple_size` indices, all-ones
/// `d`) over `trials` independent `n_tx x n_tx` channels.
pub fn z_samples(n_tx: usize, tuple_size: usize, trials: usize, seed: u64) -> Result<Vec<f64>> {
    if n_tx == 0 || tuple_size < 2 || tuple_size > 2 * n_tx {
        return Err(Error::InvalidParameter(format!(
            "tuple size {tuple_size} invalid for n_tx = {n_tx}"
        )));
    }
    let c = Constellation::qam4();
    let d = SymbolVector::constant(2 * n_tx, 1, &c)?;
    let u = UpdateTuple::new((0..tuple_size).collect(), 2 * n_tx)?;
    (0..trials)
        .into_par_iter()
        .map(|t| z_statistic(&trial_channel(n_tx, seed, t), &d, &u).map(|z| z.value))
        .collect()
}

/// Distribution of `z` at `n = 2 n_tx` for each system size, binned over
/// `[-1, 1)` into `bins` bins.
pub fn z_pdf_experiment(n_tx_list: &[usize], trials: usize, bins: usize, seed: u64) -> Result<Vec<ZDistribution>> {
    if trials == 0 {
        return Err(Error::InvalidParameter("z pdf needs at least one trial".into()));
    }
    n_tx_list
        .iter()
        .map(|&n_tx| {
            let samples = z_samples(n_tx, 2 * n_tx, trials, seed)?;
            let mut histogram = Histogram::new(-1.0, 1.0, bins)?;
            samples.iter().for_each(|&z| histogram.add(z));
            let near = samples.iter().filter(|z| z.abs() < NEAR_ZERO).count();
            Ok(ZDistribution {
                n_tx,
                tuple_size: 2 * n_tx,
                trials,
                summary: summarize(&samples),
                frac_near_zero: near as f64 / trials as f64,
                histogram,
            })
        })
        .collect()
}

/// `(v_m, w_m)` at `m = 2 n_tx` over `trials` channels (all-ones `d`).
pub fn vw_samples(n_tx: usize, trials: usize, seed: u64) -> Result<Vec<VwSample>> {
    if n_tx == 0 {
        return Err(Error::InvalidParameter("n_tx must be positive".into()));
    }
    let c = Constellation::qam4();
    let d = SymbolVector::constant(2 * n_tx, 1, &c)?;
    let u = UpdateTuple::full(2 * n_tx)?;
    (0..trials)
        .into_par_iter()
        .map(|t| vw_statistics(&trial_channel(n_tx, seed, t), &d, &u))
        .collect()
}

/// How often a LAS fixed point also satisfies the deeper region conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DepthReport {
    pub n_tx: usize,
    pub depth: usize,
    pub trials: usize,
    /// LAS outputs in the depth-1 region (should equal `trials`).
    pub depth1_members: usize,
    /// Of those, outputs also in the depth-`depth` region.
    pub deep_members: usize,
    /// Whether every region check was exhaustive.
    pub exhaustive: bool,
}

impl DepthReport {
    pub fn fraction(&self) -> f64 {
        if self.depth1_members == 0 {
            return f64::NAN;
        }
        self.deep_members as f64 / self.depth1_members as f64
    }
}

/// For 4-QAM LAS outputs (MMSE start) at `snr_db`, the fraction whose noise
/// lies in the region of depth `depth` (default `2 n_tx`).
pub fn region_depth_experiment(
    n_tx: usize,
    snr_db: f64,
    trials: usize,
    depth: Option<usize>,
    tuple_budget: u64,
    seed: u64,
) -> Result<DepthReport> {
    let c = Constellation::qam4();
    let depth = depth.unwrap_or(2 * n_tx);
    let sigma2 = sigma2_from_snr_db(snr_db, n_tx, &c);
    let outcomes: Vec<(bool, bool, bool)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t as u64);
            let draw = sample_system(n_tx, n_tx, &c, sigma2, &mut rng)?;
            let las = las_detect(&draw.rm, &draw.y, sigma2, Initializer::Mmse, &c, None)?;
            let shallow = check_region(draw.noise.values(), &draw.rm, &draw.x, &las.d_hat, 1, tuple_budget, &mut rng)?;
            let deep = check_region(draw.noise.values(), &draw.rm, &draw.x, &las.d_hat, depth, tuple_budget, &mut rng)?;
            Ok((shallow.is_member(), shallow.is_member() && deep.is_member(), deep.exhaustive))
        })
        .collect::<Result<_>>()?;
    Ok(DepthReport {
        n_tx,
        depth,
        trials,
        depth1_members: outcomes.iter().filter(|o| o.0).count(),
        deep_members: outcomes.iter().filter(|o| o.1).count(),
        exhaustive: outcomes.iter().all(|o| o.2),
    })
}
