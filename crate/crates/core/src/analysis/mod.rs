//! Statistical estimation and reporting.

mod budget;
mod interval;
mod m1;
mod rb;
mod significance;

pub use budget::{assemble_budget, render_budget_table, table_one_rows, Applies, BudgetRow, ErrorBudget, RowKind};
pub use interval::{from_decibels, to_decibels, wilson_interval, BinomialEstimate};
pub use m1::{fit_a_m1, invert_single_point, M1Fit, ScanPoint, ASYMPTOTIC_EXPONENT};
pub use rb::{fit_rb_decay, RbFit, RbPoint};
pub use significance::{binomial_two_sample_test, TestMethod, TwoSampleTest, EXACT_MAX_SUCCESSES};
