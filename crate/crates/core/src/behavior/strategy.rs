use serde::{Deserialize, Serialize};

use super::{Behavior, Scenario};
use crate::{Error, Result};

/// Default upper bound on `nA^nX * nB^nY`.
pub const DEFAULT_STRATEGY_CAP: u64 = 10_000_000;

/// Deterministic local response functions `a = fA(x)`, `b = fB(y)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DeterministicStrategy {
    #[serde(rename = "fA")]
    pub f_a: Vec<usize>,
    #[serde(rename = "fB")]
    pub f_b: Vec<usize>,
}

impl DeterministicStrategy {
    pub fn new(f_a: Vec<usize>, f_b: Vec<usize>) -> Self {
        DeterministicStrategy { f_a, f_b }
    }

    pub fn check(&self, scenario: &Scenario) -> Result<()> {
        if self.f_a.len() != scenario.n_x() || self.f_b.len() != scenario.n_y() {
            return Err(Error::DimensionMismatch(format!(
                "strategy covers {}x{} inputs, scenario has {}x{}",
                self.f_a.len(),
                self.f_b.len(),
                scenario.n_x(),
                scenario.n_y()
            )));
        }
        if self.f_a.iter().any(|&a| a >= scenario.n_a())
            || self.f_b.iter().any(|&b| b >= scenario.n_b())
        {
            return Err(Error::DimensionMismatch(
                "strategy outcome out of range".into(),
            ));
        }
        Ok(())
    }
}

/// `nA^nX * nB^nY`, or `None` on overflow.
pub fn strategy_count(scenario: &Scenario) -> Option<u128> {
    let alice = (scenario.n_a() as u128).checked_pow(scenario.n_x() as u32)?;
    let bob = (scenario.n_b() as u128).checked_pow(scenario.n_y() as u32)?;
    alice.checked_mul(bob)
}

pub(crate) fn check_cap(scenario: &Scenario, cap: u64) -> Result<u128> {
    match strategy_count(scenario) {
        Some(count) if count <= cap as u128 => Ok(count),
        Some(count) => Err(Error::CapExceeded { count, cap }),
        None => Err(Error::CapExceeded {
            count: u128::MAX,
            cap,
        }),
    }
}

/// All deterministic strategies with the default cap.
///
/// Order is lexicographic in `(fA(0), .., fA(nX-1), fB(0), .., fB(nY-1))` with
/// the last entry varying fastest.
pub fn enumerate_strategies(scenario: &Scenario) -> Result<Vec<DeterministicStrategy>> {
    enumerate_strategies_capped(scenario, DEFAULT_STRATEGY_CAP)
}

pub fn enumerate_strategies_capped(
    scenario: &Scenario,
    cap: u64,
) -> Result<Vec<DeterministicStrategy>> {
    let count = check_cap(scenario, cap)? as usize;
    let mut digits = vec![0usize; scenario.n_x() + scenario.n_y()];
    let radix: Vec<usize> = std::iter::repeat_n(scenario.n_a(), scenario.n_x())
        .chain(std::iter::repeat_n(scenario.n_b(), scenario.n_y()))
        .collect();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let (fa, fb) = digits.split_at(scenario.n_x());
        out.push(DeterministicStrategy::new(fa.to_vec(), fb.to_vec()));
        for k in (0..digits.len()).rev() {
            digits[k] += 1;
            if digits[k] < radix[k] {
                break;
            }
            digits[k] = 0;
        }
    }
    Ok(out)
}

/// `p(a,b|x,y) = [a = fA(x)] [b = fB(y)]`.
pub fn strategy_behavior(
    strategy: &DeterministicStrategy,
    scenario: &Scenario,
) -> Result<Behavior> {
    strategy.check(scenario)?;
    Behavior::from_fn(*scenario, |x, y, a, b| {
        if strategy.f_a[x] == a && strategy.f_b[y] == b {
            1.0
        } else {
            0.0
        }
    })
}
