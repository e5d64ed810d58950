//! Objects from the large-system analysis of LAS: multi-symbol update
//! inequalities, ML noise regions, and the channel-correlation statistics
//! `z`, `v_m` and `w_m`, together with Monte Carlo experiments that measure
//! their concentration.

mod region;
mod stats;

pub use region::{
    apply_update, binomial, check_l1, check_ln, check_region, delta_d, region_members, update_cost_increase, LnCheck,
    RegionReport, UpdateTuple, DEFAULT_TUPLE_BUDGET,
};
pub use stats::{
    region_depth_experiment, summarize, vw_samples, vw_statistics, z_pdf_experiment, z_samples, z_statistic,
    DepthReport, Histogram, Summary, VwSample, ZDistribution, ZSample, DEFAULT_Z_BINS, NEAR_ZERO,
};
