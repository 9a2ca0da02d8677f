//! Brownian excursions of the height process and the spinal paths of the
//! immortal and condensation trees.

pub mod excursion;
pub mod spinal;
pub mod verify;

pub use excursion::{
    sample_height_excursions, summarize, write_path_f32, write_summaries, BrownianModel, Excursion, ExcursionStream,
    ExcursionSummary, RunToEnd, StopRule,
};
pub use spinal::{
    condensation_cap, condensation_heights, immortal_first_passage, immortal_heights, PassageStats, SidePath, SpinalHeights,
};
pub use verify::{
    conditioned_report, conditioned_survey, delta_band_study, immortal_passages, local_time_profile, standard_bismut_cases,
    sup_tail_rate, sup_tail_ratio, verify_bismut, verify_conditioned_limit, verify_max_identity, BandEntry, BismutCase,
    BismutReport, BismutRow, ConditionedReport, ConditionedRow, DeltaBand, ExcursionFunctional, MaxIdentityReport,
    MaxIdentityRow, PassageTest, PathSummary, SurveyOptions,
};
