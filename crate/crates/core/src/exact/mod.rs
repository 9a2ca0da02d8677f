//! Exact probabilities computed from the offspring law.

pub mod enumerate;
pub mod laws;
pub mod prefix;

pub use enumerate::{brute_force_tables, enumerate_trees, tree_probability, BruteForceTable};
pub use laws::{
    count_in_set_series, height_tail, least_fixed_point, max_convolution, max_degree_cdf, offspring_walk,
    progeny_pmf, tail_table, width_cdf, width_cdf_vector, EngineOptions, ForestLaw, TailColumn, TailTable,
};
pub use prefix::{
    capped_spine_prefix_prob, conditional_event_prob, conditioned_prefix_law, immortal_mass_within_cap,
    immortal_prefix_law, immortal_prefix_prob, prefix_prob, tv_distance, Condition, PrefixEnumeration, PrefixLaw,
    TvBound,
};
