//! Filtered Entity Reconstruction and the type/token analyses.
//!
//! All functions fan out over rayon's current pool and collect results in
//! input order, so reports do not depend on the thread count.

mod neighbors;
mod ranking;
mod studies;

pub use neighbors::{
    default_candidates, embed, neighbors, token_embedding, type_embedding, Neighbor, NeighborhoodReport, Space,
};
pub use ranking::{
    evaluate_split, evaluate_split_detailed, rank_query, rank_query_with, Query, QueryRecord, RankingMetrics, Side,
    HITS_AT,
};
pub use studies::{
    average_ranks, neighborhood_density_study, optimization_effect_study, spearman, DensityRecord, DensityStudy,
    EffectRow, Label, LabelSummary, OptimizationEffect, labeled_from_split,
};
