use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which prepared state a contribution applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Applies {
    Both,
    Zero,
    One,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    /// Misidentifies the qubit state without being flagged.
    #[default]
    Inaccuracy,
    /// Flagged storage failure: counts toward infidelity only.
    FlaggedStorage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetRow {
    pub name: String,
    pub applies: Applies,
    #[serde(default)]
    pub kind: RowKind,
    /// Probability.
    pub value: f64,
    #[serde(default)]
    pub minus: f64,
    #[serde(default)]
    pub plus: f64,
    /// Quoted as an upper bound only.
    #[serde(default)]
    pub upper_bound: bool,
}

impl BudgetRow {
    pub fn new(name: &str, applies: Applies, value: f64, minus: f64, plus: f64) -> Self {
        BudgetRow { name: name.into(), applies, kind: RowKind::Inaccuracy, value, minus, plus, upper_bound: false }
    }

    fn weight(&self) -> f64 {
        match self.applies {
            Applies::Both => 1.0,
            Applies::Zero | Applies::One => 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub rows: Vec<BudgetRow>,
    pub zero_state_inaccuracy: f64,
    pub one_state_inaccuracy: f64,
    pub predicted_avg_inaccuracy: f64,
    pub inaccuracy_minus: f64,
    pub inaccuracy_plus: f64,
    pub predicted_avg_infidelity: f64,
    pub infidelity_minus: f64,
    pub infidelity_plus: f64,
}

/// Averages the per-state sums: common rows count for both states.
///
/// Uncertainties combine in quadrature per side, each row weighted as in the
/// average.
pub fn assemble_budget(rows: Vec<BudgetRow>) -> Result<ErrorBudget> {
    for r in &rows {
        if !(r.value >= 0.0 && r.minus >= 0.0 && r.plus >= 0.0) {
            return Err(Error::InvalidParameter(format!("budget row '{}' has negative entries", r.name)));
        }
    }
    let state_sum = |want: Applies| -> f64 {
        rows.iter()
            .filter(|r| r.kind == RowKind::Inaccuracy && (r.applies == want || r.applies == Applies::Both))
            .map(|r| r.value)
            .sum()
    };
    let zero = state_sum(Applies::Zero);
    let one = state_sum(Applies::One);

    let avg = |kinds: &[RowKind]| -> (f64, f64, f64) {
        let mut v = 0.0;
        let mut lo = 0.0;
        let mut hi = 0.0;
        for r in rows.iter().filter(|r| kinds.contains(&r.kind)) {
            let w = r.weight();
            v += w * r.value;
            lo += (w * r.minus).powi(2);
            hi += (w * r.plus).powi(2);
        }
        (v, lo.sqrt(), hi.sqrt())
    };
    let (inacc, inacc_lo, inacc_hi) = avg(&[RowKind::Inaccuracy]);
    let (infid, infid_lo, infid_hi) = avg(&[RowKind::Inaccuracy, RowKind::FlaggedStorage]);

    Ok(ErrorBudget {
        rows,
        zero_state_inaccuracy: zero,
        one_state_inaccuracy: one,
        predicted_avg_inaccuracy: inacc,
        inaccuracy_minus: inacc_lo,
        inaccuracy_plus: inacc_hi,
        predicted_avg_infidelity: infid,
        infidelity_minus: infid_lo,
        infidelity_plus: infid_hi,
    })
}

/// Default budget rows (probabilities).
pub fn table_one_rows() -> Vec<BudgetRow> {
    let e = 1e-4;
    let mut prep = BudgetRow::new("|0> state preparation", Applies::Both, 0.02 * e, 0.0, 0.0);
    prep.upper_bound = true;
    let mut flagged = BudgetRow::new("Flagged storage error", Applies::Zero, 2.9 * e, 0.5 * e, 0.6 * e);
    flagged.kind = RowKind::FlaggedStorage;
    vec![
        prep,
        BudgetRow::new("Unflagged storage error", Applies::Zero, 0.1 * e, 0.06 * e, 0.2 * e),
        BudgetRow::new("|0> -> |1> transfer", Applies::One, 0.74 * e, 0.10 * e, 0.10 * e),
        BudgetRow::new("Finite shelving time", Applies::One, 0.06 * e, 0.03 * e, 0.03 * e),
        BudgetRow::new("M1 decay", Applies::One, 0.82 * e, 0.03 * e, 0.03 * e),
        flagged,
    ]
}

/// Plain-text table in units of 1e-4, one column per prepared state.
pub fn render_budget_table(b: &ErrorBudget) -> String {
    let scale = 1e4;
    let fmt_val = |r: &BudgetRow| -> String {
        let v = r.value * scale;
        if r.upper_bound {
            format!("<{v:.2}")
        } else if r.minus == 0.0 && r.plus == 0.0 {
            format!("{v:.2}")
        } else if (r.minus - r.plus).abs() < 1e-15 {
            format!("{v:.2}({:.2})", r.plus * scale)
        } else {
            format!("{v:.2} +{:.2}/-{:.2}", r.plus * scale, r.minus * scale)
        }
    };
    let width = b.rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(30);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$} | {:>18} | {:>18}", "Error source (x1e-4)", "|1> state", "|0> state");
    let _ = writeln!(out, "{}", "-".repeat(width + 42));
    let row_line = |out: &mut String, r: &BudgetRow| {
        let v = fmt_val(r);
        let (one, zero) = match r.applies {
            Applies::Both => (v.clone(), v),
            Applies::One => (v, "---".to_string()),
            Applies::Zero => ("---".to_string(), v),
        };
        let _ = writeln!(out, "{:<width$} | {:>18} | {:>18}", r.name, one, zero);
    };
    for r in b.rows.iter().filter(|r| r.kind == RowKind::Inaccuracy) {
        row_line(&mut out, r);
    }
    let _ = writeln!(
        out,
        "{:<width$} | {:>39}",
        "Predicted average inaccuracy",
        format!(
            "{:.2} +{:.2}/-{:.2}",
            b.predicted_avg_inaccuracy * scale,
            b.inaccuracy_plus * scale,
            b.inaccuracy_minus * scale
        )
    );
    for r in b.rows.iter().filter(|r| r.kind == RowKind::FlaggedStorage) {
        row_line(&mut out, r);
    }
    let _ = writeln!(
        out,
        "{:<width$} | {:>39}",
        "Predicted average infidelity",
        format!(
            "{:.2} +{:.2}/-{:.2}",
            b.predicted_avg_infidelity * scale,
            b.infidelity_plus * scale,
            b.infidelity_minus * scale
        )
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_one_inaccuracy() {
        let b = assemble_budget(table_one_rows()).unwrap();
        // (1.62 + 0.1 + 2 * 0.02) / 2 = 0.88
        assert!((b.predicted_avg_inaccuracy - 0.88e-4).abs() < 1e-15);
        assert_eq!(format!("{:.1}", b.predicted_avg_inaccuracy * 1e4), "0.9");
        assert!((b.one_state_inaccuracy - 1.64e-4).abs() < 1e-15);
        assert!((b.zero_state_inaccuracy - 0.12e-4).abs() < 1e-15);
    }

    #[test]
    fn infidelity_adds_half_the_flagged_row() {
        let b = assemble_budget(table_one_rows()).unwrap();
        assert!((b.predicted_avg_infidelity - (0.88e-4 + 1.45e-4)).abs() < 1e-15);
    }

    #[test]
    fn zero_rows_give_zero() {
        let rows: Vec<_> =
            table_one_rows().into_iter().map(|r| BudgetRow { value: 0.0, minus: 0.0, plus: 0.0, ..r }).collect();
        let b = assemble_budget(rows).unwrap();
        assert_eq!(b.predicted_avg_inaccuracy, 0.0);
        assert_eq!(b.predicted_avg_infidelity, 0.0);
    }

    #[test]
    fn linear_in_scale() {
        let base = assemble_budget(table_one_rows()).unwrap();
        for c in [0.5, 2.0, 10.0] {
            let rows = table_one_rows()
                .into_iter()
                .map(|r| BudgetRow { value: r.value * c, minus: r.minus * c, plus: r.plus * c, ..r })
                .collect();
            let b = assemble_budget(rows).unwrap();
            assert!((b.predicted_avg_inaccuracy - c * base.predicted_avg_inaccuracy).abs() < 1e-16);
            assert!((b.predicted_avg_infidelity - c * base.predicted_avg_infidelity).abs() < 1e-16);
        }
    }

    #[test]
    fn rejects_negative_rows() {
        let rows = vec![BudgetRow::new("x", Applies::One, -1.0, 0.0, 0.0)];
        assert!(assemble_budget(rows).is_err());
    }

    #[test]
    fn renders_every_row() {
        let b = assemble_budget(table_one_rows()).unwrap();
        let t = render_budget_table(&b);
        for r in &b.rows {
            assert!(t.contains(&r.name));
        }
        assert!(t.contains("Predicted average inaccuracy"));
        assert!(t.contains("0.88"));
    }

    #[test]
    fn json_rows_round_trip() {
        let rows = table_one_rows();
        let s = serde_json::to_string(&rows).unwrap();
        assert_eq!(serde_json::from_str::<Vec<BudgetRow>>(&s).unwrap(), rows);
        assert!(serde_json::from_str::<Vec<BudgetRow>>(r#"[{"name":"a","applies":"one","value":1,"typo":2}]"#).is_err());
    }
}
