//! Seeded Monte Carlo experiments around the LAS detector.
//!
//! Trial `t` of every experiment draws bits, channel and unit noise from the
//! stream `trial_rng(master_seed, t)`, so results are identical for any
//! thread count and the same trial sees proportional noise at every SNR.
//! Parallel batches are scanned in trial order, which makes the stopping
//! point of a BER estimate exact rather than batch-dependent.

mod awgn;

pub use awgn::{q_function, siso_awgn_ber, siso_required_snr_per_bit_db, symbol_snr_db};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{check_l1, region_members, LnCheck};
use crate::detect::{las_detect, ml_search, DetectionResult, Initializer, LasProblem, DEFAULT_ML_CAP};
use crate::error::{Error, Result};
use crate::model::{demodulate, sample_system, sigma2_from_snr_db, Constellation, SymbolVector, SystemDraw};
use crate::rng::trial_rng;

/// Trials evaluated per parallel batch. Fixed so that work partitioning is
/// independent of the worker count.
const BATCH: u64 = 256;

/// Parameters of a BER experiment (`N_t = N_r`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n_tx: usize,
    pub qam_order: u32,
    pub snr_grid_db: Vec<f64>,
    pub init: Initializer,
    pub target_ber: Option<f64>,
    pub min_bit_errors: u64,
    pub max_trials: u64,
    pub master_seed: u64,
    /// LAS iteration cap; `None` uses `10 * 2 N_t`.
    #[serde(default)]
    pub max_iters: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_tx: 16,
            qam_order: 4,
            snr_grid_db: vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0],
            init: Initializer::Mmse,
            target_ber: None,
            min_bit_errors: 100,
            max_trials: 100_000,
            master_seed: 1,
            max_iters: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_tx == 0 {
            return Err(Error::InvalidParameter("n_tx must be positive".into()));
        }
        Constellation::new(self.qam_order)?;
        if self.snr_grid_db.iter().any(|s| s.is_nan()) || !self.snr_grid_db.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidParameter("SNR grid must be strictly increasing".into()));
        }
        if self.min_bit_errors == 0 || self.max_trials == 0 {
            return Err(Error::InvalidParameter("min_bit_errors and max_trials must be at least 1".into()));
        }
        if let Some(t) = self.target_ber {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::InvalidParameter(format!("target BER {t}")));
            }
        }
        Ok(())
    }

    pub fn constellation(&self) -> Result<Constellation> {
        Constellation::new(self.qam_order)
    }

    pub fn sigma2(&self, snr_db: f64) -> Result<f64> {
        Ok(sigma2_from_snr_db(snr_db, self.n_tx, &self.constellation()?))
    }

    /// Bits carried by one trial.
    pub fn bits_per_trial(&self) -> Result<u64> {
        Ok((2 * self.n_tx * self.constellation()?.bits_per_real_dim()) as u64)
    }
}

/// Outcome of one simulated vector transmission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TrialRecord {
    pub bit_errors: u64,
    pub bits: u64,
    pub las_iters: u64,
    pub vector_error: bool,
}

fn draw(n_tx: usize, c: &Constellation, sigma2: f64, seed: u64, index: u64) -> Result<SystemDraw> {
    sample_system(n_tx, n_tx, c, sigma2, &mut trial_rng(seed, index))
}

fn count_bit_errors(bits: &[u8], d: &SymbolVector, c: &Constellation) -> Result<u64> {
    let detected = demodulate(d, c)?;
    Ok(bits.iter().zip(&detected).filter(|(a, b)| a != b).count() as u64)
}

/// One transmission at `snr_db` detected by LAS.
pub fn run_trial(cfg: &ExperimentConfig, snr_db: f64, trial_index: u64) -> Result<TrialRecord> {
    let c = cfg.constellation()?;
    let sigma2 = sigma2_from_snr_db(snr_db, cfg.n_tx, &c);
    let sys = draw(cfg.n_tx, &c, sigma2, cfg.master_seed, trial_index)?;
    let det = las_detect(&sys.rm, &sys.y, sigma2, cfg.init, &c, cfg.max_iters)?;
    let bit_errors = count_bit_errors(&sys.bits, &det.d_hat, &c)?;
    Ok(TrialRecord {
        bit_errors,
        bits: sys.bits.len() as u64,
        las_iters: det.iterations as u64,
        vector_error: det.d_hat != sys.x,
    })
}

/// Aggregated BER estimate at one SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerPoint {
    pub snr_db: f64,
    pub ber: f64,
    pub bit_errors: u64,
    pub bits_simulated: u64,
    pub trials: u64,
    pub vector_errors: u64,
    pub mean_las_iters: f64,
    /// `bit_errors >= min_bit_errors`.
    pub resolved: bool,
}

/// Runs trials `0, 1, ...` until `min_bit_errors` accumulate or
/// `max_trials` is reached.
pub fn ber_point(cfg: &ExperimentConfig, snr_db: f64) -> Result<BerPoint> {
    let (mut bit_errors, mut bits, mut trials, mut vector_errors, mut iters) = (0u64, 0u64, 0u64, 0u64, 0u64);
    let mut next = 0u64;
    'batches: while next < cfg.max_trials {
        let end = (next + BATCH).min(cfg.max_trials);
        let records: Vec<TrialRecord> = (next..end)
            .into_par_iter()
            .map(|t| run_trial(cfg, snr_db, t))
            .collect::<Result<_>>()?;
        for r in records {
            bit_errors += r.bit_errors;
            bits += r.bits;
            trials += 1;
            vector_errors += u64::from(r.vector_error);
            iters += r.las_iters;
            if bit_errors >= cfg.min_bit_errors {
                break 'batches;
            }
        }
        next = end;
    }
    Ok(BerPoint {
        snr_db,
        ber: bit_errors as f64 / bits as f64,
        bit_errors,
        bits_simulated: bits,
        trials,
        vector_errors,
        mean_las_iters: iters as f64 / trials as f64,
        resolved: bit_errors >= cfg.min_bit_errors,
    })
}

/// BER at every point of the SNR grid.
pub fn ber_sweep(cfg: &ExperimentConfig) -> Result<Vec<BerPoint>> {
    cfg.validate()?;
    cfg.snr_grid_db.iter().map(|&s| ber_point(cfg, s)).collect()
}

/// Where the target BER falls relative to the search bracket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetStatus {
    Found,
    /// Already met at the lowest SNR of the bracket.
    BelowRange,
    /// Not met at the highest SNR of the bracket.
    AboveRange,
}

/// Average received SNR needed for a target BER at one system size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrTargetPoint {
    pub n_tx: usize,
    pub target_ber: f64,
    pub status: TargetStatus,
    /// Midpoint of the final bracket; `-inf`/`+inf` when out of range.
    pub snr_required_db: f64,
    /// Final bracket with `ber(lo) > target >= ber(hi)` when found.
    pub lo: BerPoint,
    pub hi: BerPoint,
    /// BER at the upper end of the bracket.
    pub achieved_ber: f64,
    /// SISO AWGN requirement on the same received-SNR axis.
    pub reference_siso_db: f64,
    pub gap_db: f64,
    pub evaluations: usize,
}

/// Bracket width at which the SNR bisection stops.
pub const SNR_TOLERANCE_DB: f64 = 0.1;

/// SISO AWGN `Es/N0` (dB) for a target BER.
///
/// With unit-power channel gains and `N_t = N_r`, one symbol collects
/// `N_r E_s` over the receive array, so the matched-filter bound at average
/// received SNR `gamma = N_t E_s / sigma2` is SISO AWGN at `Es/N0 = gamma`.
pub fn siso_reference_db(target_ber: f64, qam_order: u32) -> Result<f64> {
    symbol_snr_db(siso_required_snr_per_bit_db(target_ber, qam_order)?, qam_order)
}

/// Bisects the SNR between the first and last grid points until the bracket
/// is narrower than [`SNR_TOLERANCE_DB`].
pub fn snr_for_target_ber(cfg: &ExperimentConfig) -> Result<SnrTargetPoint> {
    cfg.validate()?;
    let target = cfg
        .target_ber
        .ok_or_else(|| Error::InvalidParameter("target_ber is required".into()))?;
    let (first, last) = match (cfg.snr_grid_db.first(), cfg.snr_grid_db.last()) {
        (Some(&a), Some(&b)) if b > a => (a, b),
        _ => return Err(Error::InvalidParameter("SNR grid needs two distinct bounds".into())),
    };
    let reference = siso_reference_db(target, cfg.qam_order).unwrap_or(f64::NEG_INFINITY);
    let mut lo = ber_point(cfg, first)?;
    let mut hi = ber_point(cfg, last)?;
    let mut evaluations = 2;
    let finish = |status, required: f64, lo: BerPoint, hi: BerPoint, evaluations| SnrTargetPoint {
        n_tx: cfg.n_tx,
        target_ber: target,
        status,
        snr_required_db: required,
        achieved_ber: hi.ber,
        lo,
        hi,
        reference_siso_db: reference,
        gap_db: required - reference,
        evaluations,
    };
    if lo.ber <= target {
        return Ok(finish(TargetStatus::BelowRange, f64::NEG_INFINITY, lo.clone(), lo, evaluations));
    }
    if hi.ber > target {
        return Ok(finish(TargetStatus::AboveRange, f64::INFINITY, hi.clone(), hi, evaluations));
    }
    while hi.snr_db - lo.snr_db > SNR_TOLERANCE_DB {
        let mid = ber_point(cfg, 0.5 * (lo.snr_db + hi.snr_db))?;
        evaluations += 1;
        if mid.ber > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let required = 0.5 * (lo.snr_db + hi.snr_db);
    Ok(finish(TargetStatus::Found, required, lo, hi, evaluations))
}

/// How often LAS returns the ML vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub n_tx: usize,
    pub qam_order: u32,
    pub snr_db: f64,
    pub trials: u64,
    /// Trials with `d_LAS == d_ML`.
    pub vector_matches: u64,
    pub vector_agreement: f64,
    /// Fraction of bits on which the two detectors agree.
    pub bit_agreement: f64,
    pub las_bit_errors: u64,
    pub ml_bit_errors: u64,
    pub bits: u64,
}

impl AgreementReport {
    /// Binomial standard error of `vector_agreement`.
    pub fn std_error(&self) -> f64 {
        let p = self.vector_agreement;
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }
}

/// Compares LAS and exhaustive ML on `trials` seeded draws at `N_t = N_r`.
pub fn las_vs_ml_agreement(
    n_tx: usize,
    qam_order: u32,
    snr_db: f64,
    init: Initializer,
    trials: u64,
    seed: u64,
) -> Result<AgreementReport> {
    let c = Constellation::new(qam_order)?;
    let sigma2 = sigma2_from_snr_db(snr_db, n_tx, &c);
    let rows: Vec<(bool, u64, u64, u64, u64)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let sys = draw(n_tx, &c, sigma2, seed, t)?;
            let las = las_detect(&sys.rm, &sys.y, sigma2, init, &c, None)?;
            let ml = ml_search(&sys.rm, &sys.y, &c, DEFAULT_ML_CAP)?;
            let las_bits = demodulate(&las.d_hat, &c)?;
            let ml_bits = demodulate(&ml.d, &c)?;
            let disagree = las_bits.iter().zip(&ml_bits).filter(|(a, b)| a != b).count() as u64;
            Ok((
                las.d_hat == ml.d,
                disagree,
                count_bit_errors(&sys.bits, &las.d_hat, &c)?,
                count_bit_errors(&sys.bits, &ml.d, &c)?,
                sys.bits.len() as u64,
            ))
        })
        .collect::<Result<_>>()?;
    let vector_matches = rows.iter().filter(|r| r.0).count() as u64;
    let disagreements: u64 = rows.iter().map(|r| r.1).sum();
    let bits: u64 = rows.iter().map(|r| r.4).sum();
    Ok(AgreementReport {
        n_tx,
        qam_order,
        snr_db,
        trials,
        vector_matches,
        vector_agreement: vector_matches as f64 / trials as f64,
        bit_agreement: 1.0 - disagreements as f64 / bits as f64,
        las_bit_errors: rows.iter().map(|r| r.2).sum(),
        ml_bit_errors: rows.iter().map(|r| r.3).sum(),
        bits,
    })
}

/// Monotonicity of agreement across increasing system sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendCheck {
    /// Adjacent pairs where agreement drops.
    pub inversions: usize,
    /// Drops larger than two standard errors of the difference.
    pub significant_inversions: usize,
    pub passed: bool,
}

/// Agreement must be non-decreasing along `reports`, allowing a single
/// drop of at most two standard errors of the difference.
pub fn agreement_trend(reports: &[AgreementReport]) -> TrendCheck {
    let mut inversions = 0;
    let mut significant_inversions = 0;
    for w in reports.windows(2) {
        let drop = w[0].vector_agreement - w[1].vector_agreement;
        if drop > 0.0 {
            inversions += 1;
            let se = w[0].std_error().hypot(w[1].std_error());
            if drop > 2.0 * se {
                significant_inversions += 1;
            }
        }
    }
    TrendCheck {
        inversions,
        significant_inversions,
        passed: inversions <= 1 && significant_inversions == 0,
    }
}

/// Smallest cost change over every admissible single-symbol move of `d`,
/// with `z` and `G` recomputed from scratch. Non-negative iff `d` is a
/// one-symbol fixed point.
pub fn one_symbol_margin(problem: &LasProblem<'_>, d: &SymbolVector) -> f64 {
    let z = problem.correlation(d);
    let diag = problem.gram().diag();
    let c = problem.constellation();
    let mut worst = f64::INFINITY;
    for (p, &dp) in d.values().iter().enumerate() {
        for &level in c.pam_points() {
            if level == dp {
                continue;
            }
            let lam = f64::from(level - dp);
            worst = worst.min(lam * lam * diag[p] - 2.0 * lam * z[p]);
        }
    }
    worst
}

/// Invariant checks over many LAS runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub n_tx: usize,
    pub qam_order: u32,
    pub snr_db: f64,
    pub runs: u64,
    /// Runs whose output admits a cost-lowering single-symbol move.
    pub fixed_point_violations: u64,
    /// Runs whose output violates a sign-flip (`n = 1`) update inequality.
    pub flip_violations: u64,
    /// Runs whose cost trajectory is not strictly decreasing.
    pub descent_violations: u64,
    pub min_margin: f64,
    pub total_updates: u64,
    pub max_updates: u64,
    /// Runs with at least one clipped accepted update.
    pub runs_with_clipped_updates: u64,
    pub clipped_updates: u64,
    pub clipped_evaluations: u64,
}

impl FixedPointReport {
    pub fn passed(&self) -> bool {
        self.fixed_point_violations == 0 && self.flip_violations == 0 && self.descent_violations == 0
    }
}

fn strictly_decreasing(r: &DetectionResult) -> bool {
    r.cost_trajectory.windows(2).all(|w| w[1] < w[0])
}

/// Runs LAS on `runs` seeded draws and checks the fixed-point and descent
/// invariants of every output.
pub fn fixed_point_suite(
    n_tx: usize,
    qam_order: u32,
    snr_db: f64,
    init: Initializer,
    runs: u64,
    seed: u64,
) -> Result<FixedPointReport> {
    let c = Constellation::new(qam_order)?;
    let sigma2 = sigma2_from_snr_db(snr_db, n_tx, &c);
    let rows: Vec<(f64, LnCheck, bool, DetectionResult)> = (0..runs)
        .into_par_iter()
        .map(|t| {
            let sys = draw(n_tx, &c, sigma2, seed, t)?;
            let det = las_detect(&sys.rm, &sys.y, sigma2, init, &c, None)?;
            let problem = LasProblem::new(&sys.rm, &sys.y, &c)?;
            let margin = one_symbol_margin(&problem, &det.d_hat);
            let flips = check_l1(&sys.y, &sys.rm, &det.d_hat)?;
            let descending = strictly_decreasing(&det);
            Ok((margin, flips, descending, det))
        })
        .collect::<Result<_>>()?;
    Ok(FixedPointReport {
        n_tx,
        qam_order,
        snr_db,
        runs,
        fixed_point_violations: rows.iter().filter(|r| !(r.0 >= 0.0)).count() as u64,
        flip_violations: rows.iter().filter(|r| !r.1.satisfied).count() as u64,
        descent_violations: rows.iter().filter(|r| !r.2).count() as u64,
        min_margin: rows.iter().map(|r| r.0.min(r.1.margin)).fold(f64::INFINITY, f64::min),
        total_updates: rows.iter().map(|r| r.3.iterations as u64).sum(),
        max_updates: rows.iter().map(|r| r.3.iterations as u64).max().unwrap_or(0),
        runs_with_clipped_updates: rows.iter().filter(|r| r.3.clipped_updates > 0).count() as u64,
        clipped_updates: rows.iter().map(|r| r.3.clipped_updates as u64).sum(),
        clipped_evaluations: rows.iter().map(|r| r.3.clipped_evaluations as u64).sum(),
    })
}

/// Region membership versus brute-force ML over seeded draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlRegionReport {
    pub n_tx: usize,
    pub qam_order: u32,
    pub snr_db: f64,
    pub trials: u64,
    /// Draws with exactly one region member, equal to the ML vector.
    pub consistent: u64,
    pub no_member: u64,
    pub multiple_members: u64,
    /// Draws with a single member that differs from the ML vector.
    pub ml_mismatch: u64,
    /// Draws where the ML vector differs from the transmitted one.
    pub ml_errors: u64,
}

impl MlRegionReport {
    pub fn violations(&self) -> u64 {
        self.trials - self.consistent
    }
}

/// For each draw, enumerates every candidate and every update tuple and
/// checks that the noise lies in exactly one region, that of the ML vector.
pub fn ml_region_suite(n_tx: usize, qam_order: u32, snr_db: f64, trials: u64, seed: u64) -> Result<MlRegionReport> {
    let c = Constellation::new(qam_order)?;
    let sigma2 = sigma2_from_snr_db(snr_db, n_tx, &c);
    // 0: consistent, 1: none, 2: several, 3: single but not ML.
    let rows: Vec<(u8, bool)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let sys = draw(n_tx, &c, sigma2, seed, t)?;
            let members = region_members(sys.noise.values(), &sys.rm, &sys.x, &c, DEFAULT_ML_CAP)?;
            let ml = ml_search(&sys.rm, &sys.y, &c, DEFAULT_ML_CAP)?.d;
            let kind = match members.as_slice() {
                [] => 1,
                [only] if *only == ml => 0,
                [_] => 3,
                _ => 2,
            };
            Ok((kind, ml != sys.x))
        })
        .collect::<Result<_>>()?;
    let count = |k: u8| rows.iter().filter(|r| r.0 == k).count() as u64;
    Ok(MlRegionReport {
        n_tx,
        qam_order,
        snr_db,
        trials,
        consistent: count(0),
        no_member: count(1),
        multiple_members: count(2),
        ml_mismatch: count(3),
        ml_errors: rows.iter().filter(|r| r.1).count() as u64,
    })
}
