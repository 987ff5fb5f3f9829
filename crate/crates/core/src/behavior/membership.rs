use serde::{Deserialize, Serialize};

use super::simplex::phase_one;
use super::strategy::{enumerate_strategies_capped, DeterministicStrategy, DEFAULT_STRATEGY_CAP};
use super::{chsh_variants, evaluate, local_bound, Behavior, BellExpression, Scenario};
use crate::{Error, Result};

/// Violations this small are round-off, whatever tolerance was asked for.
const WITNESS_RESOLUTION: f64 = 1e-12;

/// Knobs for [`is_local_with`].
#[derive(Debug, Clone, Copy)]
pub struct MembershipOptions {
    /// Decision tolerance on the phase-one objective and on reconstruction errors.
    pub tolerance: f64,
    pub strategy_cap: u64,
}

impl Default for MembershipOptions {
    fn default() -> Self {
        MembershipOptions {
            tolerance: 1e-9,
            strategy_cap: DEFAULT_STRATEGY_CAP,
        }
    }
}

/// A separating inequality: `value > expression.local_bound()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub expression: BellExpression,
    pub value: f64,
}

impl Witness {
    pub fn violation(&self) -> f64 {
        self.value - self.expression.local_bound().unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedStrategy {
    pub strategy: DeterministicStrategy,
    pub weight: f64,
}

/// Certificate for (non)membership in the local polytope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MembershipRepr", into = "MembershipRepr")]
pub enum LocalMembershipResult {
    /// Convex decomposition into deterministic strategies.
    Local { weights: Vec<WeightedStrategy> },
    /// Bell inequality violated by the behavior.
    Nonlocal { witness: Witness },
}

#[derive(Serialize, Deserialize)]
struct MembershipRepr {
    #[serde(rename = "isLocal")]
    is_local: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<WeightedStrategy>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    witness: Option<Witness>,
}

impl TryFrom<MembershipRepr> for LocalMembershipResult {
    type Error = Error;

    fn try_from(r: MembershipRepr) -> Result<Self> {
        match (r.is_local, r.weights, r.witness) {
            (true, Some(weights), None) => Ok(LocalMembershipResult::Local { weights }),
            (false, None, Some(witness)) => Ok(LocalMembershipResult::Nonlocal { witness }),
            _ => Err(Error::InvalidInput(
                "membership result needs weights when local and a witness otherwise".into(),
            )),
        }
    }
}

impl From<LocalMembershipResult> for MembershipRepr {
    fn from(r: LocalMembershipResult) -> Self {
        match r {
            LocalMembershipResult::Local { weights } => MembershipRepr {
                is_local: true,
                weights: Some(weights),
                witness: None,
            },
            LocalMembershipResult::Nonlocal { witness } => MembershipRepr {
                is_local: false,
                weights: None,
                witness: Some(witness),
            },
        }
    }
}

impl LocalMembershipResult {
    pub fn is_local(&self) -> bool {
        matches!(self, LocalMembershipResult::Local { .. })
    }

    pub fn weights(&self) -> Option<&[WeightedStrategy]> {
        match self {
            LocalMembershipResult::Local { weights } => Some(weights),
            LocalMembershipResult::Nonlocal { .. } => None,
        }
    }

    pub fn witness(&self) -> Option<&Witness> {
        match self {
            LocalMembershipResult::Local { .. } => None,
            LocalMembershipResult::Nonlocal { witness } => Some(witness),
        }
    }

    /// Mixes the strategy behaviors with the decomposition weights.
    pub fn recompose(&self, scenario: &Scenario) -> Option<Vec<f64>> {
        let weights = self.weights()?;
        let mut p = vec![0.0; scenario.table_len()];
        for ws in weights {
            for x in 0..scenario.n_x() {
                for y in 0..scenario.n_y() {
                    p[scenario.index(x, y, ws.strategy.f_a[x], ws.strategy.f_b[y])] += ws.weight;
                }
            }
        }
        Some(p)
    }
}

/// Membership test with tolerance `1e-9` and the default strategy cap.
pub fn is_local(behavior: &Behavior) -> Result<LocalMembershipResult> {
    is_local_with(behavior, MembershipOptions::default())
}

/// Solves `behavior = sum_s w_s D_s`, `w >= 0` over all deterministic strategies `s`.
///
/// Feasible: returns the weights. Infeasible: the phase-one dual is a Bell
/// expression whose local bound is at most zero while its value on the
/// behavior equals the residual; in the CHSH scenario a violated CHSH
/// relabeling is reported instead when one exists.
pub fn is_local_with(
    behavior: &Behavior,
    opts: MembershipOptions,
) -> Result<LocalMembershipResult> {
    if !(opts.tolerance >= 0.0 && opts.tolerance.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "tolerance {} must be finite and nonnegative",
            opts.tolerance
        )));
    }
    let scenario = behavior.scenario();
    let strategies = enumerate_strategies_capped(&scenario, opts.strategy_cap)?;
    let m = scenario.table_len();
    let columns: Vec<Vec<f64>> = strategies
        .iter()
        .map(|s| {
            let mut col = vec![0.0; m];
            for x in 0..scenario.n_x() {
                for y in 0..scenario.n_y() {
                    col[scenario.index(x, y, s.f_a[x], s.f_b[y])] = 1.0;
                }
            }
            col
        })
        .collect();
    let lp = phase_one(&columns, behavior.probabilities())?;

    if lp.objective <= opts.tolerance {
        let weights: Vec<WeightedStrategy> = strategies
            .into_iter()
            .zip(lp.primal)
            .filter(|(_, w)| *w > 0.0)
            .map(|(strategy, weight)| WeightedStrategy { strategy, weight })
            .collect();
        let result = LocalMembershipResult::Local { weights };
        let total: f64 = result.weights().unwrap().iter().map(|w| w.weight).sum();
        let rebuilt = result.recompose(&scenario).unwrap();
        let err = rebuilt
            .iter()
            .zip(behavior.probabilities())
            .map(|(u, v)| (u - v).abs())
            .fold(0.0, f64::max);
        if (total - 1.0).abs() > opts.tolerance || err > opts.tolerance {
            return Err(Error::NumericalFailure(format!(
                "decomposition off by {err:e} (weights sum to {total})"
            )));
        }
        return Ok(result);
    }

    if scenario == Scenario::chsh() {
        let mut best: Option<Witness> = None;
        for expr in chsh_variants() {
            let value = evaluate(&expr, behavior)?;
            if value - 2.0 > opts.tolerance && best.as_ref().is_none_or(|w| value > w.value) {
                best = Some(Witness {
                    expression: expr,
                    value,
                });
            }
        }
        if let Some(witness) = best {
            return Ok(LocalMembershipResult::Nonlocal { witness });
        }
    }

    let expr = BellExpression::new(scenario, lp.dual)?;
    let bound = local_bound(&expr)?;
    let value = evaluate(&expr, behavior)?;
    let expression = expr.with_bounds(Some(bound), None)?;
    let witness = Witness { expression, value };
    if witness.violation() <= opts.tolerance.max(WITNESS_RESOLUTION) {
        return Err(Error::NumericalFailure(format!(
            "phase-one residual {:e} but witness violation only {:e}",
            lp.objective,
            witness.violation()
        )));
    }
    Ok(LocalMembershipResult::Nonlocal { witness })
}
