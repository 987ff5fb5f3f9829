//! Scenarios, behaviors and the local polytope.
//!
//! A [`Behavior`] is stored flat in row-major `(x, y, a, b)` order and
//! serialised as the nested array `p[x][y][a][b]`.

mod expression;
mod membership;
mod simplex;
pub(crate) mod strategy;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use expression::{
    algebraic_argmax, algebraic_bound, chsh_expression, chsh_variants, evaluate, local_bound,
    BellExpression,
};
pub use membership::{is_local, is_local_with, LocalMembershipResult, MembershipOptions, Witness};
pub use strategy::{
    enumerate_strategies, enumerate_strategies_capped, strategy_behavior, strategy_count,
    DeterministicStrategy, DEFAULT_STRATEGY_CAP,
};

/// Slack for floating-point dust below zero; anything more negative is rejected.
pub const CLAMP_TOLERANCE: f64 = 1e-12;
/// Allowed deviation of `sum_{a,b} p(a,b|x,y)` from one.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

/// Input and outcome cardinalities of a two-party Bell scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "ScenarioRepr", into = "ScenarioRepr")]
pub struct Scenario {
    n_x: usize,
    n_y: usize,
    n_a: usize,
    n_b: usize,
}

#[derive(Serialize, Deserialize)]
struct ScenarioRepr {
    #[serde(rename = "nX")]
    n_x: usize,
    #[serde(rename = "nY")]
    n_y: usize,
    #[serde(rename = "nA")]
    n_a: usize,
    #[serde(rename = "nB")]
    n_b: usize,
}

impl TryFrom<ScenarioRepr> for Scenario {
    type Error = Error;

    fn try_from(r: ScenarioRepr) -> Result<Self> {
        Scenario::new(r.n_x, r.n_y, r.n_a, r.n_b)
    }
}

impl From<Scenario> for ScenarioRepr {
    fn from(s: Scenario) -> Self {
        ScenarioRepr {
            n_x: s.n_x,
            n_y: s.n_y,
            n_a: s.n_a,
            n_b: s.n_b,
        }
    }
}

impl Scenario {
    /// Alice has `n_x` inputs and `n_a` outcomes, Bob `n_y` and `n_b`.
    pub fn new(n_x: usize, n_y: usize, n_a: usize, n_b: usize) -> Result<Self> {
        if n_x < 1 || n_y < 1 {
            return Err(Error::InvalidInput(format!(
                "each party needs at least one input (got nX={n_x}, nY={n_y})"
            )));
        }
        if n_a < 2 || n_b < 2 {
            return Err(Error::InvalidInput(format!(
                "each party needs at least two outcomes (got nA={n_a}, nB={n_b})"
            )));
        }
        Ok(Scenario { n_x, n_y, n_a, n_b })
    }

    /// The two-input, two-outcome scenario of CHSH.
    pub fn chsh() -> Self {
        Scenario {
            n_x: 2,
            n_y: 2,
            n_a: 2,
            n_b: 2,
        }
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    pub fn n_a(&self) -> usize {
        self.n_a
    }

    pub fn n_b(&self) -> usize {
        self.n_b
    }

    /// Number of entries of a `(x, y, a, b)` table.
    pub fn table_len(&self) -> usize {
        self.n_x * self.n_y * self.n_a * self.n_b
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, a: usize, b: usize) -> usize {
        debug_assert!(x < self.n_x && y < self.n_y && a < self.n_a && b < self.n_b);
        ((x * self.n_y + y) * self.n_a + a) * self.n_b + b
    }

    pub(crate) fn check_same(&self, other: &Scenario) -> Result<()> {
        if self != other {
            return Err(Error::DimensionMismatch(format!(
                "scenario {} vs {}",
                self.label(),
                other.label()
            )));
        }
        Ok(())
    }

    pub(crate) fn label(&self) -> String {
        format!("({},{},{},{})", self.n_x, self.n_y, self.n_a, self.n_b)
    }

    pub(crate) fn nest(&self, flat: &[f64]) -> Vec<Vec<Vec<Vec<f64>>>> {
        (0..self.n_x)
            .map(|x| {
                (0..self.n_y)
                    .map(|y| {
                        (0..self.n_a)
                            .map(|a| {
                                (0..self.n_b)
                                    .map(|b| flat[self.index(x, y, a, b)])
                                    .collect()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }

    pub(crate) fn flatten(&self, nested: &[Vec<Vec<Vec<f64>>>]) -> Result<Vec<f64>> {
        let bad = || {
            Error::DimensionMismatch(format!(
                "table shape does not match scenario {}",
                self.label()
            ))
        };
        if nested.len() != self.n_x {
            return Err(bad());
        }
        let mut flat = Vec::with_capacity(self.table_len());
        for by_y in nested {
            if by_y.len() != self.n_y {
                return Err(bad());
            }
            for by_a in by_y {
                if by_a.len() != self.n_a {
                    return Err(bad());
                }
                for by_b in by_a {
                    if by_b.len() != self.n_b {
                        return Err(bad());
                    }
                    flat.extend_from_slice(by_b);
                }
            }
        }
        Ok(flat)
    }
}

/// Sign attached to an outcome index in correlators: index 0 is `+1`, index 1 is `-1`.
#[inline]
pub fn outcome_sign(index: usize) -> f64 {
    if index == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Conditional distribution `p(a,b|x,y)`.
///
/// Construction clamps entries in `[-1e-12, 0)` to zero, rejects anything more
/// negative and requires every `(x, y)` block to sum to one within `1e-12`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BehaviorRepr", into = "BehaviorRepr")]
pub struct Behavior {
    scenario: Scenario,
    p: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct BehaviorRepr {
    scenario: Scenario,
    p: Vec<Vec<Vec<Vec<f64>>>>,
}

impl TryFrom<BehaviorRepr> for Behavior {
    type Error = Error;

    fn try_from(r: BehaviorRepr) -> Result<Self> {
        let flat = r.scenario.flatten(&r.p)?;
        Behavior::new(r.scenario, flat)
    }
}

impl From<Behavior> for BehaviorRepr {
    fn from(b: Behavior) -> Self {
        BehaviorRepr {
            p: b.scenario.nest(&b.p),
            scenario: b.scenario,
        }
    }
}

impl Behavior {
    /// Builds a behavior from a flat `(x, y, a, b)` row-major table.
    pub fn new(scenario: Scenario, mut p: Vec<f64>) -> Result<Self> {
        if p.len() != scenario.table_len() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries for scenario {}, got {}",
                scenario.table_len(),
                scenario.label(),
                p.len()
            )));
        }
        for (i, v) in p.iter_mut().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidBehavior(format!("entry {i} is not finite")));
            }
            if *v < 0.0 {
                if *v >= -CLAMP_TOLERANCE {
                    *v = 0.0;
                } else {
                    return Err(Error::InvalidBehavior(format!(
                        "entry {i} is negative ({v})"
                    )));
                }
            }
        }
        let block = scenario.n_a * scenario.n_b;
        for (k, chunk) in p.chunks(block).enumerate() {
            let total: f64 = chunk.iter().sum();
            if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
                let (x, y) = (k / scenario.n_y, k % scenario.n_y);
                return Err(Error::InvalidBehavior(format!(
                    "p(.,.|{x},{y}) sums to {total}"
                )));
            }
        }
        Ok(Behavior { scenario, p })
    }

    pub fn from_fn(
        scenario: Scenario,
        mut f: impl FnMut(usize, usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut p = Vec::with_capacity(scenario.table_len());
        for x in 0..scenario.n_x {
            for y in 0..scenario.n_y {
                for a in 0..scenario.n_a {
                    for b in 0..scenario.n_b {
                        p.push(f(x, y, a, b));
                    }
                }
            }
        }
        Behavior::new(scenario, p)
    }

    /// `p = 1/(nA nB)` everywhere.
    pub fn uniform(scenario: Scenario) -> Self {
        let v = 1.0 / (scenario.n_a * scenario.n_b) as f64;
        Behavior {
            scenario,
            p: vec![v; scenario.table_len()],
        }
    }

    /// The Popescu-Rohrlich box: `a xor b = x y` with uniform marginals.
    pub fn pr_box() -> Self {
        Behavior::from_fn(
            Scenario::chsh(),
            |x, y, a, b| {
                if (a ^ b) == (x & y) {
                    0.5
                } else {
                    0.0
                }
            },
        )
        .expect("PR box is a valid behavior")
    }

    /// Convex combination `sum_i w_i B_i`; weights must be nonnegative and sum to one.
    pub fn mixture(parts: &[(f64, &Behavior)]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidInput("empty mixture".into()))?
            .1;
        let scenario = first.scenario;
        let mut p = vec![0.0; scenario.table_len()];
        for (w, b) in parts {
            scenario.check_same(&b.scenario)?;
            if *w < 0.0 {
                return Err(Error::InvalidInput(format!("negative mixture weight {w}")));
            }
            for (acc, v) in p.iter_mut().zip(&b.p) {
                *acc += w * v;
            }
        }
        Behavior::new(scenario, p)
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn get(&self, x: usize, y: usize, a: usize, b: usize) -> f64 {
        self.p[self.scenario.index(x, y, a, b)]
    }

    /// Flat `(x, y, a, b)` row-major view.
    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    /// `p(a|x,y)`.
    pub fn marginal_a(&self, x: usize, y: usize) -> Vec<f64> {
        (0..self.scenario.n_a)
            .map(|a| (0..self.scenario.n_b).map(|b| self.get(x, y, a, b)).sum())
            .collect()
    }

    /// `p(b|x,y)`.
    pub fn marginal_b(&self, x: usize, y: usize) -> Vec<f64> {
        (0..self.scenario.n_b)
            .map(|b| (0..self.scenario.n_a).map(|a| self.get(x, y, a, b)).sum())
            .collect()
    }

    /// Largest change of one party's marginal under a change of the other party's input.
    pub fn signaling_deviation(&self) -> f64 {
        let s = self.scenario;
        let mut worst: f64 = 0.0;
        for x in 0..s.n_x {
            let reference = self.marginal_a(x, 0);
            for y in 1..s.n_y {
                for (u, v) in reference.iter().zip(self.marginal_a(x, y)) {
                    worst = worst.max((u - v).abs());
                }
            }
        }
        for y in 0..s.n_y {
            let reference = self.marginal_b(0, y);
            for x in 1..s.n_x {
                for (u, v) in reference.iter().zip(self.marginal_b(x, y)) {
                    worst = worst.max((u - v).abs());
                }
            }
        }
        worst
    }

    pub fn is_no_signaling(&self, tol: f64) -> bool {
        self.signaling_deviation() <= tol
    }

    /// `E(x,y) = sum_{a,b} s(a) s(b) p(a,b|x,y)` for two-outcome parties.
    pub fn correlator(&self, x: usize, y: usize) -> Result<f64> {
        if self.scenario.n_a != 2 || self.scenario.n_b != 2 {
            return Err(Error::DimensionMismatch(
                "correlators need two outcomes per party".into(),
            ));
        }
        let mut e = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                e += outcome_sign(a) * outcome_sign(b) * self.get(x, y, a, b);
            }
        }
        Ok(e)
    }

    /// Largest per-entry absolute difference to another behavior of the same scenario.
    pub fn max_abs_diff(&self, other: &Behavior) -> Result<f64> {
        self.scenario.check_same(&other.scenario)?;
        Ok(self
            .p
            .iter()
            .zip(&other.p)
            .map(|(u, v)| (u - v).abs())
            .fold(0.0, f64::max))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_minima() {
        assert!(Scenario::new(0, 1, 2, 2).is_err());
        assert!(Scenario::new(1, 1, 1, 2).is_err());
        assert!(Scenario::new(1, 1, 2, 2).is_ok());
    }

    #[test]
    fn clamps_dust_and_rejects_negatives() {
        let s = Scenario::new(1, 1, 2, 2).unwrap();
        let b = Behavior::new(s, vec![0.5 + 5e-13, -5e-13, 0.25, 0.25]).unwrap();
        assert_eq!(b.get(0, 0, 0, 1), 0.0);
        assert!(matches!(
            Behavior::new(s, vec![0.6, -0.1, 0.25, 0.25]),
            Err(Error::InvalidBehavior(_))
        ));
    }

    #[test]
    fn rejects_unnormalized_blocks() {
        let s = Scenario::new(1, 1, 2, 2).unwrap();
        assert!(Behavior::new(s, vec![0.25, 0.25, 0.25, 0.2]).is_err());
        assert!(Behavior::new(s, vec![0.25; 3]).is_err());
    }

    #[test]
    fn pr_box_correlators() {
        let pr = Behavior::pr_box();
        assert_eq!(pr.correlator(0, 0).unwrap(), 1.0);
        assert_eq!(pr.correlator(1, 1).unwrap(), -1.0);
        assert!(pr.is_no_signaling(0.0));
    }

    #[test]
    fn json_layout_is_nested_x_y_a_b() {
        let s = Scenario::new(2, 1, 2, 2).unwrap();
        let b = Behavior::from_fn(s, |x, _, a, b| {
            if x == 0 {
                0.25
            } else if a == b {
                0.5
            } else {
                0.0
            }
        })
        .unwrap();
        let v = serde_json::to_value(&b).unwrap();
        assert_eq!(v["scenario"]["nX"], 2);
        assert_eq!(v["p"][1][0][1][1], 0.5);
        assert_eq!(v["p"][1][0][0][1], 0.0);
        let back: Behavior = serde_json::from_value(v).unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn json_rejects_bad_shapes() {
        let text = r#"{"scenario":{"nX":1,"nY":1,"nA":2,"nB":2},"p":[[[[0.5,0.5]]]]}"#;
        assert!(serde_json::from_str::<Behavior>(text).is_err());
    }
}
