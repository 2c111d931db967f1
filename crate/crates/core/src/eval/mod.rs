//! Retrieval and QA metrics, scenario grading, statistics, and the
//! ablation runner.

mod gold;
mod grading;
mod metrics;
mod report;
mod stats;
mod tallies;

pub use gold::{GoldQa, GoldRetrieval, GoldSet, GOLD_QA_FILE, GOLD_RETRIEVAL_FILE};
pub use grading::{
    accuracy_percent, compare_scenario, grade_response, hallucination_rate, Grade, ScenarioComparison,
    ScenarioTally, CORRECT_THRESHOLD,
};
pub use metrics::{
    answer_accuracy, average_precision, exact_match, mean_average_precision, normalize_answer, precision_at_k,
    recall, token_f1,
};
pub use report::{
    list_reports, read_report, run_ablation_matrix, timestamp_now, write_report, QaDetail, RetrievalDetail,
    RunMetrics, RunOptions, RunReport, RunSummary,
};
pub use stats::{chi_square_2x2, cohens_h};
pub use tallies::{ModelTallies, ReportedComparison, TalliesFile};
