//! Agreement between the extracted plan order and the gold plan order.

use serde::{Deserialize, Serialize};

use crate::corpus::GoldSlot;
use crate::notation::Plan;
use crate::scorer::assign;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderReport {
    pub common_actions: usize,
    pub exact_order_match: bool,
    /// Kendall tau over the common actions; `None` with fewer than two.
    pub kendall_tau: Option<f64>,
    pub discordant_pairs: usize,
}

/// Ranks matched slots by gold `order_rank` and by extraction position and
/// compares the two rankings pairwise. Only the extracted action that
/// consumed a slot takes part, so repeated extractions are ignored.
pub fn order_agreement(gold: &[GoldSlot], extracted: &Plan) -> OrderReport {
    let pairs: Vec<(usize, usize)> = assign(gold, extracted)
        .into_iter()
        .enumerate()
        .filter_map(|(pos, m)| m.map(|m| (gold[m.slot].order_rank, pos)))
        .collect();

    let n = pairs.len();
    let mut concordant = 0usize;
    let mut discordant = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            let gold_dir = pairs[i].0.cmp(&pairs[j].0);
            let plan_dir = pairs[i].1.cmp(&pairs[j].1);
            if gold_dir == plan_dir {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }

    let kendall_tau = (n >= 2).then(|| {
        let total = (n * (n - 1) / 2) as f64;
        (concordant as f64 - discordant as f64) / total
    });

    OrderReport {
        common_actions: n,
        exact_order_match: discordant == 0,
        kendall_tau,
        discordant_pairs: discordant,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ranked, ActionInstance};

    fn slots(names: &[&str]) -> Vec<GoldSlot> {
        ranked(
            names
                .iter()
                .map(|n| GoldSlot::essential(ActionInstance::new(*n, Vec::<String>::new())))
                .collect(),
        )
    }

    fn plan(names: &[&str]) -> Plan {
        Plan::new(
            names
                .iter()
                .map(|n| ActionInstance::new(*n, Vec::<String>::new()))
                .collect(),
        )
    }

    #[test]
    fn same_order_is_exact() {
        let report = order_agreement(&slots(&["x", "y"]), &plan(&["x", "y"]));
        assert_eq!(report.kendall_tau, Some(1.0));
        assert!(report.exact_order_match);
        assert_eq!(report.discordant_pairs, 0);
    }

    #[test]
    fn reversed_pair() {
        let report = order_agreement(&slots(&["x", "y"]), &plan(&["y", "x"]));
        assert_eq!(report.kendall_tau, Some(-1.0));
        assert_eq!(report.discordant_pairs, 1);
        assert!(!report.exact_order_match);
    }

    #[test]
    fn one_swap_of_three() {
        let report = order_agreement(&slots(&["a", "b", "c"]), &plan(&["a", "c", "b"]));
        assert!((report.kendall_tau.unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(report.discordant_pairs, 1);
    }

    #[test]
    fn unshared_and_duplicate_actions_are_ignored() {
        let report = order_agreement(&slots(&["a", "b", "c"]), &plan(&["z", "a", "a", "c", "q"]));
        assert_eq!(report.common_actions, 2);
        assert_eq!(report.kendall_tau, Some(1.0));
    }

    #[test]
    fn fewer_than_two_common() {
        let report = order_agreement(&slots(&["a", "b"]), &plan(&["b"]));
        assert_eq!(report.common_actions, 1);
        assert_eq!(report.kendall_tau, None);
        assert!(report.exact_order_match);
        let report = order_agreement(&slots(&["a"]), &Plan::default());
        assert_eq!(report.common_actions, 0);
        assert!(report.exact_order_match);
    }
}
