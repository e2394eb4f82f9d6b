//! Slice-budget arithmetic and annotation-effort accounting.
//!
//! One liver slice inside a fully annotated volume costs 1 effort unit; an
//! isolated liver slice costs 3 (contouring every third slice suffices when
//! a whole volume is annotated with interpolation tooling); liver-free
//! slices are free. The slice budget N_S divides the mean liver slices per
//! volume-strategy iteration by that same factor.

use super::LedgerDelta;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// How `mean / divisor` is rounded into a slice budget.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetRounding {
    /// Round half up to the nearest integer.
    #[default]
    HalfUp,
    /// Round to the nearest hundred slices, the convention behind the
    /// published "576/3 ≈ 200" budget arithmetic.
    NearestHundred,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetRule {
    pub volumes_per_iteration: usize,
    pub liver_slice_divisor: f64,
    #[serde(default)]
    pub rounding: BudgetRounding,
}

impl Default for BudgetRule {
    fn default() -> Self {
        BudgetRule {
            volumes_per_iteration: 5,
            liver_slice_divisor: 3.0,
            rounding: BudgetRounding::HalfUp,
        }
    }
}

impl BudgetRule {
    pub fn validate(&self) -> Result<()> {
        if self.volumes_per_iteration == 0 {
            return Err(Error::invalid("volumes_per_iteration must be positive".to_string()));
        }
        if !(self.liver_slice_divisor > 0.0 && self.liver_slice_divisor.is_finite()) {
            return Err(Error::invalid(format!(
                "liver_slice_divisor must be positive, got {}",
                self.liver_slice_divisor
            )));
        }
        Ok(())
    }
}

/// `N_S = round(mean(liver slices per past iteration) / divisor)`, at least 1.
pub fn compute_slice_budget(
    liver_slices_per_iteration: &[f64],
    divisor: f64,
    rounding: BudgetRounding,
) -> Result<usize> {
    if liver_slices_per_iteration.is_empty() {
        return Err(Error::invalid(
            "slice budget needs at least one past iteration".to_string(),
        ));
    }
    if !(divisor > 0.0 && divisor.is_finite()) {
        return Err(Error::invalid(format!("divisor must be positive, got {divisor}")));
    }
    let mean = liver_slices_per_iteration.iter().sum::<f64>() / liver_slices_per_iteration.len() as f64;
    let quotient = mean / divisor;
    let rounded = match rounding {
        BudgetRounding::HalfUp => (quotient + 0.5).floor(),
        BudgetRounding::NearestHundred => (quotient / 100.0 + 0.5).floor() * 100.0,
    };
    Ok((rounded as usize).max(1))
}

/// Normalized annotation cost of one iteration's ledger delta.
pub fn effort_units(delta: &LedgerDelta) -> u64 {
    delta.full_volume_liver_slices as u64 + 3 * delta.isolated_liver_slices as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_budget_instance_under_nearest_hundred() {
        // 576/3 = 192, reported as ≈ 200 under the nearest-hundred convention.
        assert_eq!(
            compute_slice_budget(&[576.0], 3.0, BudgetRounding::NearestHundred).unwrap(),
            200
        );
        // The default convention keeps strict division.
        assert_eq!(compute_slice_budget(&[576.0], 3.0, BudgetRounding::HalfUp).unwrap(), 192);
    }

    #[test]
    fn exact_divisor_and_mean_cases() {
        assert_eq!(compute_slice_budget(&[3.0], 3.0, BudgetRounding::HalfUp).unwrap(), 1);
        assert_eq!(
            compute_slice_budget(&[300.0, 600.0], 3.0, BudgetRounding::HalfUp).unwrap(),
            150
        );
    }

    #[test]
    fn budget_has_floor_of_one() {
        assert_eq!(compute_slice_budget(&[1.0], 3.0, BudgetRounding::HalfUp).unwrap(), 1);
        assert_eq!(
            compute_slice_budget(&[10.0], 3.0, BudgetRounding::NearestHundred).unwrap(),
            1
        );
    }

    #[test]
    fn empty_history_is_rejected() {
        assert!(compute_slice_budget(&[], 3.0, BudgetRounding::HalfUp).is_err());
    }

    #[test]
    fn effort_accounting() {
        // A full volume with 60 liver slices costs 60 units.
        let full = LedgerDelta {
            slices: 100,
            liver_slices: 60,
            full_volume_liver_slices: 60,
            isolated_liver_slices: 0,
            new_volumes: 1,
        };
        assert_eq!(effort_units(&full), 60);
        // 20 isolated liver slices cost the same 60 units.
        let slices = LedgerDelta {
            slices: 25,
            liver_slices: 20,
            full_volume_liver_slices: 0,
            isolated_liver_slices: 20,
            new_volumes: 10,
        };
        assert_eq!(effort_units(&slices), 60);
        // Liver-free slices are free.
        let empty = LedgerDelta {
            slices: 10,
            liver_slices: 0,
            full_volume_liver_slices: 0,
            isolated_liver_slices: 0,
            new_volumes: 2,
        };
        assert_eq!(effort_units(&empty), 0);
    }

    #[test]
    fn matched_budgets_differ_by_at_most_three_units() {
        // One volume iteration adding L liver slices vs a slice iteration
        // buying round(L/3) liver slices.
        for liver in 1usize..=200 {
            let volume_iter = LedgerDelta {
                slices: liver + 10,
                liver_slices: liver,
                full_volume_liver_slices: liver,
                isolated_liver_slices: 0,
                new_volumes: 5,
            };
            let n_s = compute_slice_budget(&[liver as f64], 3.0, BudgetRounding::HalfUp).unwrap();
            let slice_iter = LedgerDelta {
                slices: n_s,
                liver_slices: n_s,
                full_volume_liver_slices: 0,
                isolated_liver_slices: n_s,
                new_volumes: n_s,
            };
            let diff = effort_units(&volume_iter).abs_diff(effort_units(&slice_iter));
            assert!(diff <= 3, "liver {liver}: diff {diff}");
        }
    }
}
