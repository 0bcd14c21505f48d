//! Agreement, classification and nonparametric test statistics.

mod agreement;
mod classification;
mod mann_whitney;
mod tables;

pub use agreement::{
    cohens_kappa, compare_tracks, krippendorff_alpha_nominal, percent_agreement, AnnotationMatrix,
};
pub use classification::{macro_prf, per_class, ClassScores, Prf};
pub use mann_whitney::{
    mann_whitney_u, mann_whitney_u_exact, mann_whitney_u_normal, rank_biserial_r, u_statistic,
    GroupComparison, MannWhitney, PValueMethod, EXACT_MAX_TOTAL,
};
pub use tables::{
    label_distribution, variability_table, LabelCounts, LabelDistribution, VariabilityRow,
    VariabilityTable,
};
