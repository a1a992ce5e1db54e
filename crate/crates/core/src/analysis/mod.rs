//! Post-processing of ensembles and particle clouds.

pub mod audit;
pub mod fourier;
pub mod stats;
pub mod tail;

pub use audit::{
    concentration_diagnostic, conservation_audit, contraction_audit, contraction_constant,
    decay_bound, dissipation_audit, ConservationAudit, ContractionAudit, DissipationAudit,
};
pub use fourier::{
    default_exponent, distance_from_cf, ds_distance, empirical_cf, market_scaled, recentered,
    FourierGrid, Frame, MetricReport, Planar,
};
pub use stats::{ks_statistic, ks_two_sample, linear_fit, mean_and_se, LinearFit};
pub use tail::{
    growth_report, hill, tail_index, GrowthReport, HillEstimate, TailReport, MIN_TAIL_SAMPLE,
};
