//! Frame-indexed deterministic hidden-variable models.
//!
//! In the frame where Alice measures first her outcome is `F_AB(x, l)` and
//! Bob's is `S_AB(x, y, l)`; in the frame where Bob is first, his outcome is
//! `F_BA(y, l)` and Alice's `S_BA(x, y, l)`. The model is covariant when both
//! frames assign the same outcomes, i.e. `F_AB(x,l) = S_BA(x,y,l)` and
//! `F_BA(y,l) = S_AB(x,y,l)` for every `(x, y, l)`. Then `S_BA` cannot depend
//! on `y` nor `S_AB` on `x`, and the pair `(F_AB, F_BA)` is a local model.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::behavior::strategy::check_cap;
use crate::behavior::{
    chsh_expression, enumerate_strategies, evaluate, is_local, Behavior, DeterministicStrategy,
    Scenario, DEFAULT_STRATEGY_CAP,
};
use crate::sampling::{run_batches, BATCHES};
use crate::{Error, Result};

const PRIOR_TOLERANCE: f64 = 1e-12;
/// Total number of (tables, prior) pairs up to which the locality check is exhaustive.
pub const EXHAUSTIVE_MODEL_LIMIT: u128 = 100_000;
/// Priors in exhaustive mode are the grid `k / PRIOR_GRID` on the simplex.
pub const PRIOR_GRID: usize = 4;

/// Deterministic model over a finite hidden-variable alphabet with both frame orderings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRepr", into = "ModelRepr")]
pub struct CovariantModel {
    scenario: Scenario,
    prior: Vec<f64>,
    /// `[x][l]`
    f_ab: Vec<Vec<usize>>,
    /// `[x][y][l]`
    s_ab: Vec<Vec<Vec<usize>>>,
    /// `[y][l]`
    f_ba: Vec<Vec<usize>>,
    /// `[x][y][l]`
    s_ba: Vec<Vec<Vec<usize>>>,
}

#[derive(Serialize, Deserialize)]
struct ModelRepr {
    scenario: Scenario,
    #[serde(rename = "lambdaCount")]
    lambda_count: usize,
    prior: Vec<f64>,
    #[serde(rename = "fAB")]
    f_ab: Vec<Vec<usize>>,
    #[serde(rename = "sAB")]
    s_ab: Vec<Vec<Vec<usize>>>,
    #[serde(rename = "fBA")]
    f_ba: Vec<Vec<usize>>,
    #[serde(rename = "sBA")]
    s_ba: Vec<Vec<Vec<usize>>>,
}

impl TryFrom<ModelRepr> for CovariantModel {
    type Error = Error;

    fn try_from(r: ModelRepr) -> Result<Self> {
        if r.prior.len() != r.lambda_count {
            return Err(Error::DimensionMismatch(format!(
                "lambdaCount is {} but prior has {} entries",
                r.lambda_count,
                r.prior.len()
            )));
        }
        CovariantModel::new(r.scenario, r.prior, r.f_ab, r.s_ab, r.f_ba, r.s_ba)
    }
}

impl From<CovariantModel> for ModelRepr {
    fn from(m: CovariantModel) -> Self {
        ModelRepr {
            scenario: m.scenario,
            lambda_count: m.prior.len(),
            prior: m.prior,
            f_ab: m.f_ab,
            s_ab: m.s_ab,
            f_ba: m.f_ba,
            s_ba: m.s_ba,
        }
    }
}

fn check_table2(
    t: &[Vec<usize>],
    outer: usize,
    lambdas: usize,
    range: usize,
    name: &str,
) -> Result<()> {
    if t.len() != outer || t.iter().any(|r| r.len() != lambdas) {
        return Err(Error::DimensionMismatch(format!(
            "{name} has the wrong shape"
        )));
    }
    if t.iter().flatten().any(|&v| v >= range) {
        return Err(Error::InvalidInput(format!(
            "{name} has an outcome out of range"
        )));
    }
    Ok(())
}

fn check_table3(
    t: &[Vec<Vec<usize>>],
    n_x: usize,
    n_y: usize,
    lambdas: usize,
    range: usize,
    name: &str,
) -> Result<()> {
    if t.len() != n_x
        || t.iter()
            .any(|r| r.len() != n_y || r.iter().any(|c| c.len() != lambdas))
    {
        return Err(Error::DimensionMismatch(format!(
            "{name} has the wrong shape"
        )));
    }
    if t.iter().flatten().flatten().any(|&v| v >= range) {
        return Err(Error::InvalidInput(format!(
            "{name} has an outcome out of range"
        )));
    }
    Ok(())
}

fn check_prior(prior: &[f64]) -> Result<()> {
    if prior.is_empty() {
        return Err(Error::InvalidInput(
            "hidden-variable alphabet is empty".into(),
        ));
    }
    if prior.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidInput(
            "prior entries must be finite and nonnegative".into(),
        ));
    }
    let total: f64 = prior.iter().sum();
    if (total - 1.0).abs() > PRIOR_TOLERANCE {
        return Err(Error::InvalidInput(format!("prior sums to {total}")));
    }
    Ok(())
}

impl CovariantModel {
    pub fn new(
        scenario: Scenario,
        prior: Vec<f64>,
        f_ab: Vec<Vec<usize>>,
        s_ab: Vec<Vec<Vec<usize>>>,
        f_ba: Vec<Vec<usize>>,
        s_ba: Vec<Vec<Vec<usize>>>,
    ) -> Result<Self> {
        check_prior(&prior)?;
        let l = prior.len();
        let (nx, ny, na, nb) = (
            scenario.n_x(),
            scenario.n_y(),
            scenario.n_a(),
            scenario.n_b(),
        );
        check_table2(&f_ab, nx, l, na, "F_AB")?;
        check_table3(&s_ab, nx, ny, l, nb, "S_AB")?;
        check_table2(&f_ba, ny, l, nb, "F_BA")?;
        check_table3(&s_ba, nx, ny, l, na, "S_BA")?;
        Ok(CovariantModel {
            scenario,
            prior,
            f_ab,
            s_ab,
            f_ba,
            s_ba,
        })
    }

    /// Second-measurer tables copied from the first-measurer ones, which makes
    /// the model covariant by construction.
    pub fn covariant_completion(
        scenario: Scenario,
        prior: Vec<f64>,
        f_ab: Vec<Vec<usize>>,
        f_ba: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let s_ab = (0..f_ab.len()).map(|_| f_ba.clone()).collect();
        let s_ba = f_ab
            .iter()
            .map(|row| vec![row.clone(); f_ba.len()])
            .collect();
        CovariantModel::new(scenario, prior, f_ab, s_ab, f_ba, s_ba)
    }

    /// One hidden-variable value per weighted strategy.
    pub fn from_strategies(
        scenario: Scenario,
        parts: &[(f64, DeterministicStrategy)],
    ) -> Result<Self> {
        for (_, s) in parts {
            s.check(&scenario)?;
        }
        let prior: Vec<f64> = parts.iter().map(|(w, _)| *w).collect();
        let f_ab = (0..scenario.n_x())
            .map(|x| parts.iter().map(|(_, s)| s.f_a[x]).collect())
            .collect();
        let f_ba = (0..scenario.n_y())
            .map(|y| parts.iter().map(|(_, s)| s.f_b[y]).collect())
            .collect();
        CovariantModel::covariant_completion(scenario, prior, f_ab, f_ba)
    }

    /// Uniform response tables, covariant completion, prior uniform on the simplex.
    pub fn random_covariant<R: Rng + ?Sized>(
        scenario: Scenario,
        lambda_count: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let prior = random_prior(lambda_count, rng);
        let f_ab = random_table(scenario.n_x(), lambda_count, scenario.n_a(), rng);
        let f_ba = random_table(scenario.n_y(), lambda_count, scenario.n_b(), rng);
        CovariantModel::covariant_completion(scenario, prior, f_ab, f_ba)
    }

    /// All four tables drawn independently; covariant only by accident.
    pub fn random_arbitrary<R: Rng + ?Sized>(
        scenario: Scenario,
        lambda_count: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let (nx, ny, na, nb) = (
            scenario.n_x(),
            scenario.n_y(),
            scenario.n_a(),
            scenario.n_b(),
        );
        let prior = random_prior(lambda_count, rng);
        let f_ab = random_table(nx, lambda_count, na, rng);
        let f_ba = random_table(ny, lambda_count, nb, rng);
        let s_ab = (0..nx)
            .map(|_| random_table(ny, lambda_count, nb, rng))
            .collect();
        let s_ba = (0..nx)
            .map(|_| random_table(ny, lambda_count, na, rng))
            .collect();
        CovariantModel::new(scenario, prior, f_ab, s_ab, f_ba, s_ba)
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn lambda_count(&self) -> usize {
        self.prior.len()
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn f_ab(&self, x: usize, l: usize) -> usize {
        self.f_ab[x][l]
    }

    pub fn s_ab(&self, x: usize, y: usize, l: usize) -> usize {
        self.s_ab[x][y][l]
    }

    pub fn f_ba(&self, y: usize, l: usize) -> usize {
        self.f_ba[y][l]
    }

    pub fn s_ba(&self, x: usize, y: usize, l: usize) -> usize {
        self.s_ba[x][y][l]
    }

    /// Replaces `S_BA(x, y, l)`.
    pub fn set_s_ba(&mut self, x: usize, y: usize, l: usize, a: usize) -> Result<()> {
        if a >= self.scenario.n_a() {
            return Err(Error::InvalidInput(format!("outcome {a} out of range")));
        }
        self.s_ba[x][y][l] = a;
        Ok(())
    }
}

fn random_prior<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    // Normalized Exp(1) draws are uniform on the simplex.
    let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = raw.iter().sum();
    if total > 0.0 {
        raw.iter().map(|v| v / total).collect()
    } else {
        vec![1.0 / n as f64; n]
    }
}

fn random_table<R: Rng + ?Sized>(
    rows: usize,
    lambdas: usize,
    range: usize,
    rng: &mut R,
) -> Vec<Vec<usize>> {
    (0..rows)
        .map(|_| (0..lambdas).map(|_| rng.random_range(0..range)).collect())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Party {
    Alice,
    Bob,
}

/// A `(x, y, l)` at which the two frames disagree about one party's outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovarianceViolation {
    pub party: Party,
    pub x: usize,
    pub y: usize,
    pub lambda: usize,
    /// Outcome when this party measures first (`F_AB` or `F_BA`).
    pub first: usize,
    /// Outcome when this party measures second (`S_BA` or `S_AB`).
    pub second: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceCheck {
    pub covariant: bool,
    pub violations: Vec<CovarianceViolation>,
}

pub fn check_covariance(model: &CovariantModel) -> CovarianceCheck {
    let s = model.scenario;
    let mut violations = Vec::new();
    for x in 0..s.n_x() {
        for y in 0..s.n_y() {
            for l in 0..model.lambda_count() {
                let (fa, sa) = (model.f_ab[x][l], model.s_ba[x][y][l]);
                if fa != sa {
                    violations.push(CovarianceViolation {
                        party: Party::Alice,
                        x,
                        y,
                        lambda: l,
                        first: fa,
                        second: sa,
                    });
                }
                let (fb, sb) = (model.f_ba[y][l], model.s_ab[x][y][l]);
                if fb != sb {
                    violations.push(CovarianceViolation {
                        party: Party::Bob,
                        x,
                        y,
                        lambda: l,
                        first: fb,
                        second: sb,
                    });
                }
            }
        }
    }
    CovarianceCheck {
        covariant: violations.is_empty(),
        violations,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    /// Alice first: `(F_AB, S_AB)`.
    AliceFirst,
    /// Bob first: `(S_BA, F_BA)`.
    BobFirst,
}

/// Per hidden-variable value, the 0/1 indicator table `[a = A(x,y,l)] [b = B(x,y,l)]`
/// in that frame, flat in `(x, y, a, b)` order.
pub fn frame_indicators(model: &CovariantModel, frame: Frame) -> Vec<Vec<u8>> {
    let s = model.scenario;
    (0..model.lambda_count())
        .map(|l| {
            let mut t = vec![0u8; s.table_len()];
            for x in 0..s.n_x() {
                for y in 0..s.n_y() {
                    let (a, b) = match frame {
                        Frame::AliceFirst => (model.f_ab[x][l], model.s_ab[x][y][l]),
                        Frame::BobFirst => (model.s_ba[x][y][l], model.f_ba[y][l]),
                    };
                    t[s.index(x, y, a, b)] = 1;
                }
            }
            t
        })
        .collect()
}

/// `p(a,b|x,y) = sum_l prior(l) [a = F_AB(x,l)] [b = F_BA(y,l)]`.
///
/// Fails with [`Error::NotCovariant`] unless both frames agree; the agreement
/// of the two frames' indicator tables is also asserted exactly.
pub fn induced_behavior(model: &CovariantModel) -> Result<Behavior> {
    let check = check_covariance(model);
    if !check.covariant {
        return Err(Error::NotCovariant {
            violations: check.violations.len(),
        });
    }
    let ab = frame_indicators(model, Frame::AliceFirst);
    let ba = frame_indicators(model, Frame::BobFirst);
    assert_eq!(ab, ba, "covariant frames must agree exactly");
    let s = model.scenario;
    let mut p = vec![0.0; s.table_len()];
    for (l, table) in ab.iter().enumerate() {
        let w = model.prior[l];
        for (acc, &ind) in p.iter_mut().zip(table) {
            if ind == 1 {
                *acc += w;
            }
        }
    }
    Behavior::new(s, p)
}

/// A covariant deterministic model reproducing `behavior`, if one exists.
///
/// Such a model exists exactly when the behavior is local: a local
/// decomposition gives one hidden-variable value per strategy.
pub fn covariant_model_for(behavior: &Behavior) -> Result<Option<CovariantModel>> {
    let res = is_local(behavior)?;
    match res.weights() {
        None => Ok(None),
        Some(weights) => {
            let parts: Vec<(f64, DeterministicStrategy)> = weights
                .iter()
                .map(|w| (w.weight, w.strategy.clone()))
                .collect();
            let total: f64 = parts.iter().map(|p| p.0).sum();
            let parts: Vec<_> = parts.into_iter().map(|(w, s)| (w / total, s)).collect();
            CovariantModel::from_strategies(behavior.scenario(), &parts).map(Some)
        }
    }
}

/// Outcome of [`covariance_forces_locality`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LocalityReport {
    pub scenario: Scenario,
    pub lambda_count: usize,
    pub exhaustive: bool,
    pub models_checked: u64,
    /// Covariant models whose induced behavior failed the membership test.
    pub locality_failures: u64,
    /// Models whose CHSH value exceeds `2 + 1e-9` (CHSH scenario only).
    pub chsh_violations: u64,
    pub max_chsh: Option<f64>,
    pub min_chsh: Option<f64>,
}

#[derive(Default, Clone, Copy)]
struct Tally {
    models: u64,
    failures: u64,
    chsh_violations: u64,
    max_chsh: Option<f64>,
    min_chsh: Option<f64>,
}

impl Tally {
    fn merge(mut self, o: Tally) -> Tally {
        self.models += o.models;
        self.failures += o.failures;
        self.chsh_violations += o.chsh_violations;
        self.max_chsh = match (self.max_chsh, o.max_chsh) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
        self.min_chsh = match (self.min_chsh, o.min_chsh) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        self
    }

    fn record(&mut self, model: &CovariantModel) -> Result<()> {
        if !check_covariance(model).covariant {
            return Err(Error::NotCovariant { violations: 1 });
        }
        let behavior = induced_behavior(model)?;
        self.models += 1;
        if !is_local(&behavior)?.is_local() {
            self.failures += 1;
        }
        if behavior.scenario() == Scenario::chsh() {
            let v = evaluate(&chsh_expression(), &behavior)?;
            if v > 2.0 + 1e-9 {
                self.chsh_violations += 1;
            }
            self.max_chsh = Some(self.max_chsh.map_or(v, |m| m.max(v)));
            self.min_chsh = Some(self.min_chsh.map_or(v, |m| m.min(v)));
        }
        Ok(())
    }
}

/// Priors `k / PRIOR_GRID` summing to one, in lexicographic order.
fn prior_grid(lambda_count: usize) -> Vec<Vec<f64>> {
    fn rec(left: usize, slots: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if slots == 1 {
            cur.push(left);
            out.push(cur.iter().map(|&k| k as f64 / PRIOR_GRID as f64).collect());
            cur.pop();
            return;
        }
        for k in 0..=left {
            cur.push(k);
            rec(left - k, slots - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(PRIOR_GRID, lambda_count, &mut Vec::new(), &mut out);
    out
}

fn binomial(n: u128, k: u128) -> u128 {
    (0..k).fold(1u128, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Checks that covariant deterministic models only produce local behaviors.
///
/// A covariant model is fixed by one deterministic strategy per hidden-variable
/// value plus a prior. When the number of strategy assignments times the
/// number of grid priors is at most [`EXHAUSTIVE_MODEL_LIMIT`] every such
/// model is checked; otherwise `trials` random covariant models are drawn.
pub fn covariance_forces_locality(
    scenario: Scenario,
    lambda_count: usize,
    trials: u64,
    seed: u64,
) -> Result<LocalityReport> {
    if lambda_count == 0 {
        return Err(Error::InvalidInput("lambdaCount must be at least 1".into()));
    }
    let strategies_per_lambda = check_cap(&scenario, DEFAULT_STRATEGY_CAP)?;
    let assignments = strategies_per_lambda.checked_pow(lambda_count as u32);
    let priors = binomial(
        (PRIOR_GRID + lambda_count - 1) as u128,
        (lambda_count - 1) as u128,
    );
    let exhaustive =
        assignments.is_some_and(|a| a.saturating_mul(priors) <= EXHAUSTIVE_MODEL_LIMIT);

    let tally = if exhaustive {
        let strategies = enumerate_strategies(&scenario)?;
        let grid = prior_grid(lambda_count);
        let k = strategies.len();
        let total = assignments.expect("checked above") as usize;
        let tallies: Vec<Result<Tally>> = (0..total)
            .into_par_iter()
            .map(|mut code| {
                let mut chosen = Vec::with_capacity(lambda_count);
                for _ in 0..lambda_count {
                    chosen.push(&strategies[code % k]);
                    code /= k;
                }
                let mut t = Tally::default();
                for prior in &grid {
                    let parts: Vec<(f64, DeterministicStrategy)> = prior
                        .iter()
                        .zip(&chosen)
                        .map(|(w, s)| (*w, (*s).clone()))
                        .collect();
                    t.record(&CovariantModel::from_strategies(scenario, &parts)?)?;
                }
                Ok(t)
            })
            .collect();
        tallies
            .into_iter()
            .try_fold(Tally::default(), |acc, t| t.map(|t| acc.merge(t)))?
    } else {
        let tallies = run_batches(seed, trials, BATCHES, |_, n, rng| -> Result<Tally> {
            let mut t = Tally::default();
            for _ in 0..n {
                t.record(&CovariantModel::random_covariant(
                    scenario,
                    lambda_count,
                    rng,
                )?)?;
            }
            Ok(t)
        });
        tallies
            .into_iter()
            .try_fold(Tally::default(), |acc, t| t.map(|t| acc.merge(t)))?
    };

    Ok(LocalityReport {
        scenario,
        lambda_count,
        exhaustive,
        models_checked: tally.models,
        locality_failures: tally.failures,
        chsh_violations: tally.chsh_violations,
        max_chsh: tally.max_chsh,
        min_chsh: tally.min_chsh,
    })
}
