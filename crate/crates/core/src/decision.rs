//! Decision-variable lifecycle: initialization from a probability vector,
//! availability masking, rounding the solved relaxation to one maneuver, and
//! compliance measurement against the near-binary / sum-to-one conditions.

use crate::residuals::{maneuver_slot, MANEUVERS};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DecisionError {
    #[error("no available maneuver (all masked)")]
    NoAvailableManeuver,
}

/// Relaxed decision matrix: one row per plan step, slot order left / keep /
/// right, plus the availability mask. Masked columns are identically zero.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionVars {
    pub rows: Vec<[f64; 3]>,
    pub mask: [bool; 3],
}

/// One lane-selection maneuver: -1 left change, 0 keep, +1 right change.
pub type Maneuver = i8;

/// Broadcasts a probability vector over the horizon, renormalizing over the
/// available maneuvers.
pub fn init_decisions(
    probabilities: [f64; 3],
    mask: [bool; 3],
    horizon: usize,
) -> Result<DecisionVars, DecisionError> {
    let mut p = [0.0; 3];
    let mut total = 0.0;
    for i in 0..3 {
        if mask[i] {
            p[i] = probabilities[i].max(0.0);
            total += p[i];
        }
    }
    if !mask.iter().any(|m| *m) {
        return Err(DecisionError::NoAvailableManeuver);
    }
    if total <= 0.0 {
        // degenerate input: fall back to uniform over available
        let count = mask.iter().filter(|m| **m).count() as f64;
        for i in 0..3 {
            p[i] = if mask[i] { 1.0 / count } else { 0.0 };
        }
    } else {
        for v in &mut p {
            *v /= total;
        }
    }
    Ok(DecisionVars {
        rows: vec![p; horizon],
        mask,
    })
}

/// Rounds a solved relaxation to one maneuver: argmax of the time-mean
/// selection, ties broken by preferring keep, then right.
pub fn round_decision(vars: &DecisionVars) -> Maneuver {
    let mut means = [0.0; 3];
    for row in &vars.rows {
        for i in 0..3 {
            means[i] += row[i];
        }
    }
    let n = vars.rows.len().max(1) as f64;
    for m in &mut means {
        *m /= n;
    }
    // preference order used on exact ties
    let order: [i8; 3] = [0, 1, -1];
    let mut best: Option<(f64, i8)> = None;
    for m in order {
        let slot = maneuver_slot(m);
        if !vars.mask[slot] {
            continue;
        }
        let v = means[slot];
        if best.map_or(true, |(bv, _)| v > bv) {
            best = Some((v, m));
        }
    }
    best.map(|(_, m)| m).unwrap_or(0)
}

/// Per-step compliance report.
#[derive(Clone, Debug)]
pub struct ComplianceReport {
    pub compliant: bool,
    /// Steps that violate any condition.
    pub violations: Vec<usize>,
}

/// A solution complies when at every step the available selections sum to one
/// within `tol`, some maneuver dominates (max entry at least `1 - tol`), and
/// every entry lies in `[-tol, 1 + tol]`.
pub fn compliance_check(vars: &DecisionVars, tol: f64) -> ComplianceReport {
    let mut violations = Vec::new();
    for (k, row) in vars.rows.iter().enumerate() {
        let sum: f64 = MANEUVERS
            .into_iter()
            .filter(|m| vars.mask[maneuver_slot(*m)])
            .map(|m| row[maneuver_slot(m)])
            .sum();
        let max = row
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let in_box = row.iter().all(|b| (-tol..=1.0 + tol).contains(b));
        if (sum - 1.0).abs() > tol || max < 1.0 - tol || !in_box {
            violations.push(k);
        }
    }
    ComplianceReport {
        compliant: violations.is_empty(),
        violations,
    }
}

pub const DEFAULT_COMPLIANCE_TOL: f64 = 0.05;

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: [bool; 3] = [true, true, true];

    #[test]
    fn init_broadcasts() {
        let d = init_decisions([0.2, 0.5, 0.3], FULL, 4).unwrap();
        assert_eq!(d.rows.len(), 4);
        for row in &d.rows {
            assert_eq!(*row, [0.2, 0.5, 0.3]);
        }
    }

    #[test]
    fn init_renormalizes_over_mask() {
        let d = init_decisions([0.2, 0.5, 0.3], [false, true, true], 2).unwrap();
        assert!((d.rows[0][0]).abs() < 1e-15);
        assert!((d.rows[0][1] - 0.625).abs() < 1e-12);
        assert!((d.rows[0][2] - 0.375).abs() < 1e-12);
    }

    #[test]
    fn init_single_available_is_forced() {
        let d = init_decisions([0.2, 0.5, 0.3], [false, true, false], 3).unwrap();
        assert_eq!(d.rows[1], [0.0, 1.0, 0.0]);
    }

    #[test]
    fn init_rejects_all_masked() {
        assert!(init_decisions([0.3, 0.3, 0.4], [false; 3], 2).is_err());
    }

    #[test]
    fn init_rows_sum_to_one() {
        let d = init_decisions([1.0, 3.0, 0.5], FULL, 5).unwrap();
        for row in &d.rows {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn round_clear_argmax() {
        let vars = DecisionVars {
            rows: vec![[0.1, 0.7, 0.2]; 5],
            mask: FULL,
        };
        assert_eq!(round_decision(&vars), 0);
    }

    #[test]
    fn round_tie_prefers_keep_then_right() {
        let vars = DecisionVars {
            rows: vec![[0.5, 0.5, 0.0]; 3],
            mask: FULL,
        };
        assert_eq!(round_decision(&vars), 0);
        let vars = DecisionVars {
            rows: vec![[0.5, 0.0, 0.5]; 3],
            mask: FULL,
        };
        assert_eq!(round_decision(&vars), 1);
    }

    #[test]
    fn round_is_scale_invariant() {
        let rows: Vec<[f64; 3]> = (0..6)
            .map(|k| {
                let a = 0.2 + 0.1 * (k as f64 * 0.9).sin();
                [a, 0.6 - a / 2.0, 0.4 - a / 2.0]
            })
            .collect();
        let base = DecisionVars {
            rows: rows.clone(),
            mask: FULL,
        };
        let scaled = DecisionVars {
            rows: rows.iter().map(|r| [r[0] * 7.0, r[1] * 7.0, r[2] * 7.0]).collect(),
            mask: FULL,
        };
        assert_eq!(round_decision(&base), round_decision(&scaled));
    }

    #[test]
    fn compliance_cases() {
        let one_hot = DecisionVars {
            rows: vec![[0.0, 1.0, 0.0]; 4],
            mask: FULL,
        };
        assert!(compliance_check(&one_hot, DEFAULT_COMPLIANCE_TOL).compliant);

        let spread = DecisionVars {
            rows: vec![[0.4, 0.4, 0.4]; 4],
            mask: FULL,
        };
        let report = compliance_check(&spread, DEFAULT_COMPLIANCE_TOL);
        assert!(!report.compliant);
        assert_eq!(report.violations.len(), 4);

        let boundary = DecisionVars {
            rows: vec![[0.0, 0.96, 0.04]; 4],
            mask: FULL,
        };
        assert!(compliance_check(&boundary, DEFAULT_COMPLIANCE_TOL).compliant);
    }

    #[test]
    fn compliance_of_one_hot_init_always_true() {
        let d = init_decisions([0.0, 0.0, 1.0], FULL, 6).unwrap();
        assert!(compliance_check(&d, DEFAULT_COMPLIANCE_TOL).compliant);
    }
}
