use serde::{Deserialize, Serialize};

use super::strategy::check_cap;
use super::{outcome_sign, Behavior, Scenario, DEFAULT_STRATEGY_CAP};
use crate::{Error, Result};

/// Linear functional `sum c(x,y,a,b) p(a,b|x,y)` with optional attached bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ExpressionRepr", into = "ExpressionRepr")]
pub struct BellExpression {
    scenario: Scenario,
    coeffs: Vec<f64>,
    local_bound: Option<f64>,
    algebraic_bound: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct ExpressionRepr {
    scenario: Scenario,
    coeffs: Vec<Vec<Vec<Vec<f64>>>>,
    #[serde(
        rename = "localBound",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    local_bound: Option<f64>,
    #[serde(
        rename = "algebraicBound",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    algebraic_bound: Option<f64>,
}

impl TryFrom<ExpressionRepr> for BellExpression {
    type Error = Error;

    fn try_from(r: ExpressionRepr) -> Result<Self> {
        let coeffs = r.scenario.flatten(&r.coeffs)?;
        BellExpression::new(r.scenario, coeffs)?.with_bounds(r.local_bound, r.algebraic_bound)
    }
}

impl From<BellExpression> for ExpressionRepr {
    fn from(e: BellExpression) -> Self {
        ExpressionRepr {
            coeffs: e.scenario.nest(&e.coeffs),
            scenario: e.scenario,
            local_bound: e.local_bound,
            algebraic_bound: e.algebraic_bound,
        }
    }
}

impl BellExpression {
    /// Coefficients in flat `(x, y, a, b)` row-major order.
    pub fn new(scenario: Scenario, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != scenario.table_len() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} coefficients for scenario {}, got {}",
                scenario.table_len(),
                scenario.label(),
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("coefficients must be finite".into()));
        }
        Ok(BellExpression {
            scenario,
            coeffs,
            local_bound: None,
            algebraic_bound: None,
        })
    }

    pub fn from_fn(
        scenario: Scenario,
        mut f: impl FnMut(usize, usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut coeffs = Vec::with_capacity(scenario.table_len());
        for x in 0..scenario.n_x() {
            for y in 0..scenario.n_y() {
                for a in 0..scenario.n_a() {
                    for b in 0..scenario.n_b() {
                        coeffs.push(f(x, y, a, b));
                    }
                }
            }
        }
        BellExpression::new(scenario, coeffs)
    }

    /// Builds `sum_{x,y} w(x,y) E(x,y)` for a two-outcome scenario.
    pub fn from_correlator_weights(
        scenario: Scenario,
        weight: impl Fn(usize, usize) -> f64,
    ) -> Result<Self> {
        if scenario.n_a() != 2 || scenario.n_b() != 2 {
            return Err(Error::DimensionMismatch(
                "correlator expressions need two outcomes per party".into(),
            ));
        }
        BellExpression::from_fn(scenario, |x, y, a, b| {
            weight(x, y) * outcome_sign(a) * outcome_sign(b)
        })
    }

    /// Attaches bounds; rejects `local > algebraic`.
    pub fn with_bounds(mut self, local: Option<f64>, algebraic: Option<f64>) -> Result<Self> {
        if let (Some(l), Some(g)) = (local, algebraic) {
            if l > g {
                return Err(Error::InvalidInput(format!(
                    "local bound {l} exceeds algebraic bound {g}"
                )));
            }
        }
        self.local_bound = local;
        self.algebraic_bound = algebraic;
        Ok(self)
    }

    /// Returns a copy with both bounds computed by enumeration.
    pub fn with_computed_bounds(self) -> Result<Self> {
        let l = local_bound(&self)?;
        let g = algebraic_bound(&self);
        self.with_bounds(Some(l), Some(g))
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn coeff(&self, x: usize, y: usize, a: usize, b: usize) -> f64 {
        self.coeffs[self.scenario.index(x, y, a, b)]
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn local_bound(&self) -> Option<f64> {
        self.local_bound
    }

    pub fn algebraic_bound(&self) -> Option<f64> {
        self.algebraic_bound
    }

    /// Multiplies every coefficient (and attached bound) by a nonnegative factor.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if factor < 0.0 || !factor.is_finite() {
            return Err(Error::InvalidInput(format!(
                "scale factor {factor} must be finite and >= 0"
            )));
        }
        Ok(BellExpression {
            scenario: self.scenario,
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
            local_bound: self.local_bound.map(|b| b * factor),
            algebraic_bound: self.algebraic_bound.map(|b| b * factor),
        })
    }
}

/// `sum c p` over the whole table.
pub fn evaluate(expr: &BellExpression, behavior: &Behavior) -> Result<f64> {
    expr.scenario.check_same(&behavior.scenario())?;
    Ok(expr
        .coeffs
        .iter()
        .zip(behavior.probabilities())
        .map(|(c, p)| c * p)
        .sum())
}

/// Maximum over deterministic strategies, which is the maximum over the local polytope.
///
/// Alice's `nA^nX` response functions are enumerated explicitly; for each of
/// them Bob's best reply decouples across `y`, so his part is maximised input
/// by input. The result equals the maximum over all `nA^nX * nB^nY`
/// strategies, and the full count is still held to the enumeration cap.
pub fn local_bound(expr: &BellExpression) -> Result<f64> {
    let s = expr.scenario;
    check_cap(&s, DEFAULT_STRATEGY_CAP)?;
    let mut f_a = vec![0usize; s.n_x()];
    let mut best = f64::NEG_INFINITY;
    loop {
        let mut value = 0.0;
        for y in 0..s.n_y() {
            let mut best_b = f64::NEG_INFINITY;
            for b in 0..s.n_b() {
                let v: f64 = (0..s.n_x()).map(|x| expr.coeff(x, y, f_a[x], b)).sum();
                best_b = best_b.max(v);
            }
            value += best_b;
        }
        best = best.max(value);

        let mut k = s.n_x();
        loop {
            if k == 0 {
                return Ok(best);
            }
            k -= 1;
            f_a[k] += 1;
            if f_a[k] < s.n_a() {
                break;
            }
            f_a[k] = 0;
        }
    }
}

/// Per `(x, y)`, the first `(a, b)` (row-major) achieving the largest coefficient.
pub fn algebraic_argmax(expr: &BellExpression) -> Vec<Vec<(usize, usize)>> {
    let s = expr.scenario;
    (0..s.n_x())
        .map(|x| {
            (0..s.n_y())
                .map(|y| {
                    let mut best = (0, 0);
                    let mut best_value = expr.coeff(x, y, 0, 0);
                    for a in 0..s.n_a() {
                        for b in 0..s.n_b() {
                            let v = expr.coeff(x, y, a, b);
                            if v > best_value {
                                best_value = v;
                                best = (a, b);
                            }
                        }
                    }
                    best
                })
                .collect()
        })
        .collect()
}

/// Maximum over all (even signaling) behaviors: the sum of per-input-pair maxima.
pub fn algebraic_bound(expr: &BellExpression) -> f64 {
    let picks = algebraic_argmax(expr);
    let mut total = 0.0;
    for (x, row) in picks.iter().enumerate() {
        for (y, &(a, b)) in row.iter().enumerate() {
            total += expr.coeff(x, y, a, b);
        }
    }
    total
}

/// `E(0,0) + E(0,1) + E(1,0) - E(1,1)` with local bound 2 and algebraic bound 4.
pub fn chsh_expression() -> BellExpression {
    BellExpression::from_correlator_weights(Scenario::chsh(), |x, y| {
        if x == 1 && y == 1 {
            -1.0
        } else {
            1.0
        }
    })
    .and_then(|e| e.with_bounds(Some(2.0), Some(4.0)))
    .expect("CHSH is well formed")
}

/// The eight relabelings of CHSH: one negative correlator term, times an overall sign.
pub fn chsh_variants() -> Vec<BellExpression> {
    let mut out = Vec::with_capacity(8);
    for overall in [1.0, -1.0] {
        for minus in 0..4 {
            let expr = BellExpression::from_correlator_weights(Scenario::chsh(), |x, y| {
                let sign = if 2 * x + y == minus { -1.0 } else { 1.0 };
                overall * sign
            })
            .and_then(|e| e.with_bounds(Some(2.0), Some(4.0)))
            .expect("CHSH variant is well formed");
            out.push(expr);
        }
    }
    out
}
