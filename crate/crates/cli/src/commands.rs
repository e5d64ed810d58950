//! Command bodies: resolve defaults, run the experiment, render outputs.

use las_core::asymptotics::{z_pdf_experiment, DEFAULT_Z_BINS};
use las_core::harness::{
    agreement_trend, ber_sweep, fixed_point_suite, las_vs_ml_agreement, ml_region_suite, snr_for_target_ber,
    ExperimentConfig,
};
use las_core::Initializer;
use serde_json::{json, Value};

use crate::config::{Settings, Suite};
use crate::output::{float, Csv, Outputs};
use crate::CliError;

const DEFAULT_SEED: u64 = 1;
const DEFAULT_MIN_ERRORS: u64 = 100;

/// SNR (dB) for the LAS/ML agreement suite. At this point 4-QAM agreement
/// for `N_t = 2` sits inside [0.8, 0.99].
pub const AGREEMENT_SNR_DB: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Ber,
    SnrTarget,
    Zpdf,
    Verify,
}

impl Kind {
    pub fn label(self) -> &'static str {
        match self {
            Kind::Ber => "ber",
            Kind::SnrTarget => "snr-target",
            Kind::Zpdf => "zpdf",
            Kind::Verify => "verify",
        }
    }
}

pub struct Completed {
    pub name: String,
    pub outputs: Outputs,
    /// Every setting the run depended on, with defaults filled in.
    pub resolved: Settings,
    pub summary: String,
    pub passed: bool,
}

fn required<T>(v: Option<T>, what: &str, command: Kind) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Usage(format!("{} needs {what} (flag, LAS_* variable or config)", command.label())))
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialize")
}

pub fn execute(kind: Kind, s: Settings, name: Option<&str>) -> Result<Completed, CliError> {
    match kind {
        Kind::Ber => ber(s, name),
        Kind::SnrTarget => snr_target(s, name),
        Kind::Zpdf => zpdf(s, name),
        Kind::Verify => verify(s, name),
    }
}

fn ber(s: Settings, name: Option<&str>) -> Result<Completed, CliError> {
    let cfg = ExperimentConfig {
        n_tx: required(s.ntx, "--ntx", Kind::Ber)?,
        qam_order: s.qam.unwrap_or(4),
        snr_grid_db: required(s.snr_grid.clone(), "--snr-grid", Kind::Ber)?,
        init: s.init.unwrap_or(Initializer::Mmse),
        target_ber: None,
        min_bit_errors: s.min_errors.unwrap_or(DEFAULT_MIN_ERRORS),
        max_trials: s.trials.unwrap_or(100_000),
        master_seed: s.seed.unwrap_or(DEFAULT_SEED),
        max_iters: s.max_iters,
    };
    cfg.validate()?;
    let points = ber_sweep(&cfg)?;
    let name = name.unwrap_or("ber").to_string();
    let mut csv = Csv::new(&[
        "snr_db",
        "ber",
        "bit_errors",
        "bits",
        "trials",
        "vector_errors",
        "mean_las_iters",
        "resolved",
    ]);
    for p in &points {
        csv.row(&[
            float(p.snr_db),
            float(p.ber),
            p.bit_errors.to_string(),
            p.bits_simulated.to_string(),
            p.trials.to_string(),
            p.vector_errors.to_string(),
            float(p.mean_las_iters),
            p.resolved.to_string(),
        ]);
    }
    let mut outputs = Outputs::default();
    outputs.add(format!("{name}.csv"), csv.into_string());
    outputs.add_json(format!("{name}.json"), json!({ "config": to_value(&cfg), "points": to_value(&points) }));
    let unresolved = points.iter().filter(|p| !p.resolved).count();
    Ok(Completed {
        summary: format!("ber: {} points, {unresolved} under-resolved", points.len()),
        name,
        outputs,
        resolved: Settings {
            seed: Some(cfg.master_seed),
            qam: Some(cfg.qam_order),
            init: Some(cfg.init),
            ntx: Some(cfg.n_tx),
            snr_grid: Some(cfg.snr_grid_db.clone()),
            trials: Some(cfg.max_trials),
            min_errors: Some(cfg.min_bit_errors),
            max_iters: cfg.max_iters,
            ..Default::default()
        },
        passed: true,
    })
}

fn snr_target(s: Settings, name: Option<&str>) -> Result<Completed, CliError> {
    let ntx_list = required(s.ntx_list.clone(), "--ntx-list", Kind::SnrTarget)?;
    let qam = s.qam.unwrap_or(4);
    let target = s.target_ber.unwrap_or(if qam == 16 { 1e-4 } else { 1e-3 });
    let grid = s.snr_grid.clone().unwrap_or_else(|| vec![0.0, 30.0]);
    let base = ExperimentConfig {
        n_tx: 1,
        qam_order: qam,
        snr_grid_db: grid.clone(),
        init: s.init.unwrap_or(Initializer::Mmse),
        target_ber: Some(target),
        min_bit_errors: s.min_errors.unwrap_or(DEFAULT_MIN_ERRORS),
        max_trials: s.trials.unwrap_or(200_000),
        master_seed: s.seed.unwrap_or(DEFAULT_SEED),
        max_iters: s.max_iters,
    };
    let mut rows = Vec::with_capacity(ntx_list.len());
    for &n_tx in &ntx_list {
        let cfg = ExperimentConfig { n_tx, ..base.clone() };
        rows.push(snr_for_target_ber(&cfg)?);
    }
    let name = name.unwrap_or("snr_target").to_string();
    let mut csv = Csv::new(&[
        "n_tx",
        "target_ber",
        "status",
        "snr_required_db",
        "snr_lo_db",
        "snr_hi_db",
        "ber_lo",
        "ber_hi",
        "bit_errors_lo",
        "bit_errors_hi",
        "siso_reference_db",
        "gap_db",
    ]);
    for r in &rows {
        csv.row(&[
            r.n_tx.to_string(),
            float(r.target_ber),
            to_value(&r.status).as_str().unwrap_or_default().to_string(),
            float(r.snr_required_db),
            float(r.lo.snr_db),
            float(r.hi.snr_db),
            float(r.lo.ber),
            float(r.hi.ber),
            r.lo.bit_errors.to_string(),
            r.hi.bit_errors.to_string(),
            float(r.reference_siso_db),
            float(r.gap_db),
        ]);
    }
    let mut outputs = Outputs::default();
    outputs.add(format!("{name}.csv"), csv.into_string());
    outputs.add_json(format!("{name}.json"), json!({ "config": to_value(&base), "points": to_value(&rows) }));
    let summary = rows
        .iter()
        .map(|r| format!("N_t={}: {:.2} dB (gap {:.2} dB)", r.n_tx, r.snr_required_db, r.gap_db))
        .collect::<Vec<_>>()
        .join("; ");
    Ok(Completed {
        summary: format!("snr-target {target:e}: {summary}"),
        name,
        outputs,
        resolved: Settings {
            seed: Some(base.master_seed),
            qam: Some(qam),
            init: Some(base.init),
            ntx_list: Some(ntx_list),
            snr_grid: Some(grid),
            target_ber: Some(target),
            trials: Some(base.max_trials),
            min_errors: Some(base.min_bit_errors),
            max_iters: base.max_iters,
            ..Default::default()
        },
        passed: true,
    })
}

fn zpdf(s: Settings, name: Option<&str>) -> Result<Completed, CliError> {
    let ntx_list = s.ntx_list.clone().unwrap_or_else(|| vec![4, 16, 64]);
    let trials = s.trials.unwrap_or(2000);
    let bins = s.bins.unwrap_or(DEFAULT_Z_BINS);
    let seed = s.seed.unwrap_or(DEFAULT_SEED);
    let dists = z_pdf_experiment(&ntx_list, trials as usize, bins, seed)?;
    let name = name.unwrap_or("zpdf").to_string();
    let mut outputs = Outputs::default();
    let mut summary = Csv::new(&[
        "n_tx",
        "tuple_size",
        "trials",
        "mean",
        "std",
        "mean_abs",
        "frac_near_zero",
        "density_at_zero",
        "underflow",
        "overflow",
    ]);
    for d in &dists {
        summary.row(&[
            d.n_tx.to_string(),
            d.tuple_size.to_string(),
            d.trials.to_string(),
            float(d.summary.mean),
            float(d.summary.std),
            float(d.summary.mean_abs),
            float(d.frac_near_zero),
            float(d.density_at_zero()),
            d.histogram.underflow.to_string(),
            d.histogram.overflow.to_string(),
        ]);
        let mut hist = Csv::new(&["bin_lo", "bin_hi", "count", "density"]);
        for (b, (&count, density)) in d.histogram.counts.iter().zip(d.histogram.densities()).enumerate() {
            let (lo, hi) = d.histogram.bin_edges(b);
            hist.row(&[float(lo), float(hi), count.to_string(), float(density)]);
        }
        outputs.add(format!("{name}_ntx{}.csv", d.n_tx), hist.into_string());
    }
    outputs.add(format!("{name}.csv"), summary.into_string());
    outputs.add_json(format!("{name}.json"), json!({ "distributions": to_value(&dists) }));
    let stds = dists
        .iter()
        .map(|d| format!("N_t={}: std {:.4}", d.n_tx, d.summary.std))
        .collect::<Vec<_>>()
        .join("; ");
    Ok(Completed {
        summary: format!("zpdf: {stds}"),
        name,
        outputs,
        resolved: Settings {
            seed: Some(seed),
            ntx_list: Some(ntx_list),
            trials: Some(trials),
            bins: Some(bins),
            ..Default::default()
        },
        passed: true,
    })
}

fn verify(s: Settings, name: Option<&str>) -> Result<Completed, CliError> {
    let suite = required(s.suite, "--suite", Kind::Verify)?;
    let seed = s.seed.unwrap_or(DEFAULT_SEED);
    let qam = s.qam.unwrap_or(4);
    let trials = s.trials.unwrap_or(1000);
    let name = name.map(str::to_string).unwrap_or_else(|| format!("verify_{suite}"));
    let mut resolved = Settings {
        suite: Some(suite),
        seed: Some(seed),
        qam: Some(qam),
        trials: Some(trials),
        ..Default::default()
    };
    let mut outputs = Outputs::default();
    let (passed, summary) = match suite {
        Suite::Lemma2 => {
            let n_tx = s.ntx.unwrap_or(2);
            let snr_db = s.snr_db.unwrap_or(4.0);
            let r = ml_region_suite(n_tx, qam, snr_db, trials, seed)?;
            let passed = r.violations() == 0;
            let mut csv = Csv::new(&[
                "n_tx",
                "qam",
                "snr_db",
                "trials",
                "consistent",
                "no_member",
                "multiple_members",
                "ml_mismatch",
                "ml_errors",
                "passed",
            ]);
            csv.row(&[
                n_tx.to_string(),
                qam.to_string(),
                float(snr_db),
                trials.to_string(),
                r.consistent.to_string(),
                r.no_member.to_string(),
                r.multiple_members.to_string(),
                r.ml_mismatch.to_string(),
                r.ml_errors.to_string(),
                passed.to_string(),
            ]);
            outputs.add(format!("{name}.csv"), csv.into_string());
            outputs.add_json(
                format!("{name}.json"),
                json!({ "suite": suite.to_string(), "passed": passed, "report": to_value(&r) }),
            );
            resolved.ntx = Some(n_tx);
            resolved.snr_db = Some(snr_db);
            (passed, format!("lemma2: {} violations in {trials} draws", r.violations()))
        }
        Suite::Theorem2 => {
            let ntx_list = s.ntx_list.clone().unwrap_or_else(|| vec![2, 4, 6, 8]);
            let snr_db = s.snr_db.unwrap_or(AGREEMENT_SNR_DB);
            let init = s.init.unwrap_or(Initializer::Mmse);
            let reports = ntx_list
                .iter()
                .map(|&n| las_vs_ml_agreement(n, qam, snr_db, init, trials, seed))
                .collect::<las_core::Result<Vec<_>>>()?;
            let trend = agreement_trend(&reports);
            let mut csv = Csv::new(&[
                "n_tx",
                "snr_db",
                "trials",
                "vector_matches",
                "vector_agreement",
                "std_error",
                "bit_agreement",
            ]);
            for r in &reports {
                csv.row(&[
                    r.n_tx.to_string(),
                    float(r.snr_db),
                    r.trials.to_string(),
                    r.vector_matches.to_string(),
                    float(r.vector_agreement),
                    float(r.std_error()),
                    float(r.bit_agreement),
                ]);
            }
            outputs.add(format!("{name}.csv"), csv.into_string());
            outputs.add_json(
                format!("{name}.json"),
                json!({
                    "suite": suite.to_string(),
                    "passed": trend.passed,
                    "trend": to_value(&trend),
                    "reports": to_value(&reports),
                }),
            );
            resolved.ntx_list = Some(ntx_list);
            resolved.snr_db = Some(snr_db);
            resolved.init = Some(init);
            let agreement = reports
                .iter()
                .map(|r| format!("{:.3}", r.vector_agreement))
                .collect::<Vec<_>>()
                .join(", ");
            (trend.passed, format!("theorem2: agreement [{agreement}], {} inversions", trend.inversions))
        }
        Suite::FixedPoint => {
            let ntx_list = s.ntx_list.clone().unwrap_or_else(|| vec![4, 16, 64]);
            let snr_db = s.snr_db.unwrap_or(8.0);
            let init = s.init.unwrap_or(Initializer::Mmse);
            let reports = ntx_list
                .iter()
                .map(|&n| fixed_point_suite(n, qam, snr_db, init, trials, seed))
                .collect::<las_core::Result<Vec<_>>>()?;
            let passed = reports.iter().all(|r| r.passed());
            let mut csv = Csv::new(&[
                "n_tx",
                "qam",
                "snr_db",
                "runs",
                "fixed_point_violations",
                "flip_violations",
                "descent_violations",
                "min_margin",
                "total_updates",
                "max_updates",
                "runs_with_clipped_updates",
                "clipped_updates",
                "clipped_evaluations",
                "passed",
            ]);
            for r in &reports {
                csv.row(&[
                    r.n_tx.to_string(),
                    r.qam_order.to_string(),
                    float(r.snr_db),
                    r.runs.to_string(),
                    r.fixed_point_violations.to_string(),
                    r.flip_violations.to_string(),
                    r.descent_violations.to_string(),
                    float(r.min_margin),
                    r.total_updates.to_string(),
                    r.max_updates.to_string(),
                    r.runs_with_clipped_updates.to_string(),
                    r.clipped_updates.to_string(),
                    r.clipped_evaluations.to_string(),
                    r.passed().to_string(),
                ]);
            }
            outputs.add(format!("{name}.csv"), csv.into_string());
            outputs.add_json(
                format!("{name}.json"),
                json!({ "suite": suite.to_string(), "passed": passed, "reports": to_value(&reports) }),
            );
            resolved.ntx_list = Some(ntx_list);
            resolved.snr_db = Some(snr_db);
            resolved.init = Some(init);
            let bad: u64 = reports
                .iter()
                .map(|r| r.fixed_point_violations + r.flip_violations + r.descent_violations)
                .sum();
            (passed, format!("fixedpoint: {bad} violations over {} runs", trials * reports.len() as u64))
        }
    };
    Ok(Completed {
        name,
        outputs,
        resolved,
        summary: format!("{summary}: {}", if passed { "PASS" } else { "FAIL" }),
        passed,
    })
}
