use serde::{Deserialize, Serialize};

use super::solve::Economy;
use crate::error::{Error, Result};
use crate::geo::World;

pub const DEFAULT_TOP_SHARE: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Baseline,
    ZeroVariableDistance,
    EqualNetworks,
    NetworkReallocation,
    DoubleTopWages,
    DoubleTopWagesAndNetworks,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::Baseline,
        Scenario::ZeroVariableDistance,
        Scenario::EqualNetworks,
        Scenario::NetworkReallocation,
        Scenario::DoubleTopWages,
        Scenario::DoubleTopWagesAndNetworks,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Scenario::Baseline => "baseline",
            Scenario::ZeroVariableDistance => "zero_variable_distance",
            Scenario::EqualNetworks => "equal_networks",
            Scenario::NetworkReallocation => "network_reallocation",
            Scenario::DoubleTopWages => "double_top_wages",
            Scenario::DoubleTopWagesAndNetworks => "double_top_wages_and_networks",
        }
    }
}

/// Indices of the highest-wage cities: `round(share * J)` of them, at least
/// one; ties go to the lower index. Sorted by index.
pub fn top_cities(world: &World, share: f64) -> Result<Vec<usize>> {
    if !(share > 0.0 && share <= 1.0) {
        return Err(Error::invalid(format!("top share must lie in (0, 1], got {share}")));
    }
    let n = ((share * world.len() as f64).round() as usize).clamp(1, world.len());
    let mut idx: Vec<usize> = (0..world.len()).collect();
    idx.sort_by(|&a, &b| world.city(b).avg_wage.total_cmp(&world.city(a).avg_wage).then(a.cmp(&b)));
    idx.truncate(n);
    idx.sort_unstable();
    Ok(idx)
}

/// Splits `total` over `k` slots as evenly as possible: every slot gets the
/// floor and the remainder goes to the first slots (all fractional parts
/// tie, so largest remainder falls back to order).
fn even_split(total: u64, k: usize) -> Vec<u32> {
    let k64 = k as u64;
    let (q, r) = (total / k64, total % k64);
    (0..k64).map(|i| (q + u64::from(i < r)) as u32).collect()
}

/// Returns a transformed copy of the economy; the input is untouched.
/// Top cities are chosen by the wages in `world` (the baseline).
pub fn apply_counterfactual(scenario: Scenario, economy: &Economy, world: &World, top_share: f64) -> Result<Economy> {
    let mut e = economy.clone();
    match scenario {
        Scenario::Baseline => {}
        Scenario::ZeroVariableDistance => {
            e.params.coef.delta_v = 0.0;
            e.params.coef.delta_vn = 0.0;
        }
        Scenario::EqualNetworks => {
            for a in &mut e.agents {
                let n = a.friends[a.origin];
                a.friends.fill(n);
            }
        }
        Scenario::NetworkReallocation => {
            let top = top_cities(world, top_share)?;
            for a in &mut e.agents {
                let split = even_split(a.network_size(), top.len());
                a.friends.fill(0);
                for (&c, n) in top.iter().zip(split) {
                    a.friends[c] = n;
                }
            }
        }
        Scenario::DoubleTopWages | Scenario::DoubleTopWagesAndNetworks => {
            let top = top_cities(world, top_share)?;
            for &c in &top {
                e.scales.productivity[c] *= 2.0;
            }
            if scenario == Scenario::DoubleTopWagesAndNetworks {
                for a in &mut e.agents {
                    for &c in &top {
                        a.friends[c] = a.friends[c].saturating_mul(2);
                    }
                }
            }
        }
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn even_split_conserves() {
        assert_eq!(even_split(10, 4), vec![3, 3, 2, 2]);
        assert_eq!(even_split(0, 3), vec![0, 0, 0]);
        for t in 0..50u64 {
            for k in 1..7 {
                let s = even_split(t, k);
                assert_eq!(s.iter().map(|&x| u64::from(x)).sum::<u64>(), t);
                assert!(s.iter().max().unwrap() - s.iter().min().unwrap() <= 1);
            }
        }
    }
}
