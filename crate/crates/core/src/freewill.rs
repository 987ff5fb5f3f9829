//! Measurement dependence and the free-will deficit.
//!
//! Three pieces live here:
//!
//! * the support measure `log2(N/M)` for a chooser who believes there are `N`
//!   options but can only pick among `M`, with a discrete restricted-choice
//!   model and the input-independence predicate `p(x,y|l) = p(x,y)`;
//! * the detection-loophole model: `l` uniform on the sphere, Alice answers
//!   `sign(x.l)` but only clicks with probability `|x.l|`, Bob always answers
//!   `-sign(y.l)`. Conditioned on Alice's click the correlator is `-x.y`;
//! * its measurement-dependent twin, where instead of discarding runs the
//!   hidden variable is drawn from `q(l|x) = 2|x.l|`. Every run is then
//!   answered by local deterministic functions of `(x, l)` and `(y, l)`,
//!   Bob's input stays independent of `l`, and the statistics are those of the
//!   singlet.
//!
//! For the continuous model the support measure is read through the mean
//! acceptance (`-log2` of the average `|x.l|`, which is one half), and an
//! entropy-based deficit is reported alongside it.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::behavior::{
    algebraic_argmax, chsh_expression, evaluate, Behavior, BellExpression, DeterministicStrategy,
    Scenario,
};
use crate::quantum::{BlochVector, LocalRotation, MeasurementSettings};
use crate::sampling::{batch_means, run_batches, uniform_unit_vector, Estimate, BATCHES};
use crate::{Error, Result};

/// Fewest samples accepted by the Monte Carlo engines.
pub const MIN_SAMPLES: u64 = 10_000;

/// `log2(N) - log2(M)` bits for a choice among `M` of `N` nominal options.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FreeWillDeficit {
    pub n_choices: u64,
    pub m_choices: u64,
    pub bits: f64,
}

pub fn deficit(n: u64, m: u64) -> Result<FreeWillDeficit> {
    if m < 1 || m > n {
        return Err(Error::OutOfRange(format!(
            "need 1 <= M <= N, got N={n}, M={m}"
        )));
    }
    Ok(FreeWillDeficit {
        n_choices: n,
        m_choices: m,
        bits: (n as f64).log2() - (m as f64).log2(),
    })
}

/// Joint distribution `p(l, x, y)` over a finite hidden-variable alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct InputDistribution {
    n_x: usize,
    n_y: usize,
    /// `[l][x * n_y + y]`
    joint: Vec<Vec<f64>>,
}

impl InputDistribution {
    pub fn new(n_x: usize, n_y: usize, joint: Vec<Vec<f64>>) -> Result<Self> {
        if joint.is_empty() || joint.iter().any(|row| row.len() != n_x * n_y) {
            return Err(Error::DimensionMismatch(
                "joint input table has the wrong shape".into(),
            ));
        }
        if joint.iter().flatten().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidInput(
                "joint probabilities must be nonnegative".into(),
            ));
        }
        let total: f64 = joint.iter().flatten().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "joint distribution sums to {total}"
            )));
        }
        Ok(InputDistribution { n_x, n_y, joint })
    }

    /// `p(x, y)`.
    pub fn input_marginal(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.n_x * self.n_y];
        for row in &self.joint {
            for (acc, p) in m.iter_mut().zip(row) {
                *acc += p;
            }
        }
        m
    }

    /// `max_{l: p(l) > 0} max_{x,y} |p(x,y|l) - p(x,y)|`.
    pub fn max_dependence(&self) -> f64 {
        let marginal = self.input_marginal();
        let mut worst: f64 = 0.0;
        for row in &self.joint {
            let pl: f64 = row.iter().sum();
            if pl <= 0.0 {
                continue;
            }
            for (p, m) in row.iter().zip(&marginal) {
                worst = worst.max((p / pl - m).abs());
            }
        }
        worst
    }

    /// `p(x,y|l) = p(x,y)` for every `l` in the support, within `tol`.
    pub fn is_input_independent(&self, tol: f64) -> bool {
        self.max_dependence() <= tol
    }
}

/// Alice is steered to a subset of her `N` inputs by the hidden variable; Bob chooses freely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RestrictedChoiceModel {
    pub n_inputs: usize,
    /// Inputs Alice can actually pick when the hidden variable is `l`.
    pub allowed: Vec<Vec<usize>>,
    pub prior: Vec<f64>,
}

impl RestrictedChoiceModel {
    pub fn new(n_inputs: usize, allowed: Vec<Vec<usize>>, prior: Vec<f64>) -> Result<Self> {
        if allowed.len() != prior.len() || allowed.is_empty() {
            return Err(Error::DimensionMismatch(
                "one allowed set per hidden-variable value".into(),
            ));
        }
        for set in &allowed {
            if set.is_empty() || set.iter().any(|&x| x >= n_inputs) {
                return Err(Error::InvalidInput(
                    "allowed sets must be nonempty subsets of the inputs".into(),
                ));
            }
            let mut sorted = set.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != set.len() {
                return Err(Error::InvalidInput(
                    "allowed sets must not repeat inputs".into(),
                ));
            }
        }
        let total: f64 = prior.iter().sum();
        if prior.iter().any(|p| *p < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(
                "prior must be a probability vector".into(),
            ));
        }
        Ok(RestrictedChoiceModel {
            n_inputs,
            allowed,
            prior,
        })
    }

    /// Every `m`-element subset equally likely; each input then occurs equally often.
    pub fn all_subsets(n_inputs: usize, m: usize) -> Result<Self> {
        if m == 0 || m > n_inputs {
            return Err(Error::OutOfRange(format!(
                "need 1 <= M <= N, got N={n_inputs}, M={m}"
            )));
        }
        fn rec(start: usize, n: usize, m: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == m {
                out.push(cur.clone());
                return;
            }
            for k in start..n {
                cur.push(k);
                rec(k + 1, n, m, cur, out);
                cur.pop();
            }
        }
        let mut sets = Vec::new();
        rec(0, n_inputs, m, &mut Vec::new(), &mut sets);
        let w = 1.0 / sets.len() as f64;
        let prior = vec![w; sets.len()];
        RestrictedChoiceModel::new(n_inputs, sets, prior)
    }

    /// Largest `log2(N / M(l))` over hidden-variable values in the support.
    pub fn deficit_bits(&self) -> f64 {
        self.allowed
            .iter()
            .zip(&self.prior)
            .filter(|(_, p)| **p > 0.0)
            .map(|(set, _)| {
                deficit(self.n_inputs as u64, set.len() as u64)
                    .expect("validated")
                    .bits
            })
            .fold(0.0, f64::max)
    }

    /// `p(l, x, y)` with Alice uniform on her allowed set and Bob uniform on `n_y` inputs.
    pub fn input_distribution(&self, n_y: usize) -> Result<InputDistribution> {
        let joint = self
            .allowed
            .iter()
            .zip(&self.prior)
            .map(|(set, pl)| {
                let mut row = vec![0.0; self.n_inputs * n_y];
                for &x in set {
                    for y in 0..n_y {
                        row[x * n_y + y] = pl / (set.len() * n_y) as f64;
                    }
                }
                row
            })
            .collect();
        InputDistribution::new(self.n_inputs, n_y, joint)
    }
}

/// Outcome index for `sign(v)`, with `sign(0) = +1`.
#[inline]
fn sign_index(v: f64) -> usize {
    if v >= 0.0 {
        0
    } else {
        1
    }
}

/// Response rules shared by the detection and measurement-dependent models.
pub mod responses {
    use super::sign_index;
    use crate::quantum::BlochVector;

    /// `a = sign(x.l)`.
    #[inline]
    pub fn alice(x: &BlochVector, lambda: &[f64; 3]) -> usize {
        sign_index(x.dot_array(lambda))
    }

    /// `b = -sign(y.l)`.
    #[inline]
    pub fn bob(y: &BlochVector, lambda: &[f64; 3]) -> usize {
        1 - sign_index(y.dot_array(lambda))
    }

    /// Probability that Alice's detector clicks: `|x.l|`.
    #[inline]
    pub fn detection_probability(x: &BlochVector, lambda: &[f64; 3]) -> f64 {
        x.dot_array(lambda).abs()
    }
}

/// Conditional statistics of the detection-loophole model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DetectionRun {
    /// `p(a,b|x,y, Alice clicked)`.
    pub behavior: Behavior,
    pub detection_rate: Estimate,
    /// `[x][y]`, conditioned on Alice's click.
    pub correlators: Vec<Vec<Estimate>>,
    /// `-log2(detection rate)`.
    pub deficit_bits: f64,
}

fn check_samples(samples: u64) -> Result<()> {
    if samples < MIN_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "at least {MIN_SAMPLES} samples are required, got {samples}"
        )));
    }
    Ok(())
}

#[derive(Clone)]
struct Counts {
    n_x: usize,
    n_y: usize,
    /// `[x][y][a][b]`
    outcome: Vec<u64>,
    /// Runs per `x` (detection model) or per `(x, y)` (measurement-dependent model).
    trials: Vec<u64>,
    clicks: Vec<u64>,
}

impl Counts {
    fn new(n_x: usize, n_y: usize) -> Self {
        Counts {
            n_x,
            n_y,
            outcome: vec![0; n_x * n_y * 4],
            trials: vec![0; n_x * n_y],
            clicks: vec![0; n_x * n_y],
        }
    }

    #[inline]
    fn add(&mut self, x: usize, y: usize, a: usize, b: usize) {
        self.outcome[((x * self.n_y + y) * 2 + a) * 2 + b] += 1;
    }

    fn merge(&mut self, o: &Counts) {
        for (a, b) in self.outcome.iter_mut().zip(&o.outcome) {
            *a += b;
        }
        for (a, b) in self.trials.iter_mut().zip(&o.trials) {
            *a += b;
        }
        for (a, b) in self.clicks.iter_mut().zip(&o.clicks) {
            *a += b;
        }
    }

    fn block_total(&self, x: usize, y: usize) -> u64 {
        let base = (x * self.n_y + y) * 4;
        self.outcome[base..base + 4].iter().sum()
    }

    fn behavior(&self) -> Result<Behavior> {
        let scenario = Scenario::new(self.n_x, self.n_y, 2, 2)?;
        let mut p = Vec::with_capacity(self.outcome.len());
        for x in 0..self.n_x {
            for y in 0..self.n_y {
                let n = self.block_total(x, y);
                if n == 0 {
                    return Err(Error::NumericalFailure(format!(
                        "no accepted runs for inputs ({x}, {y})"
                    )));
                }
                let base = (x * self.n_y + y) * 4;
                p.extend(
                    self.outcome[base..base + 4]
                        .iter()
                        .map(|&c| c as f64 / n as f64),
                );
            }
        }
        Behavior::new(scenario, p)
    }

    fn correlator(&self, x: usize, y: usize) -> f64 {
        let base = (x * self.n_y + y) * 4;
        let c = &self.outcome[base..base + 4];
        let n = (c[0] + c[1] + c[2] + c[3]) as f64;
        (c[0] as f64 - c[1] as f64 - c[2] as f64 + c[3] as f64) / n
    }
}

fn estimates(pooled: f64, per_batch: &[f64]) -> Estimate {
    Estimate {
        mean: pooled,
        stderr: batch_means(per_batch).stderr,
    }
}

/// Monte Carlo of the detection-loophole model.
///
/// Each sample draws one `l`; every Alice input gets its own click draw and
/// each click is paired with every Bob input.
pub fn simulate_detection_model(
    settings: &MeasurementSettings,
    samples: u64,
    seed: u64,
) -> Result<DetectionRun> {
    check_samples(samples)?;
    let alice = settings.alice();
    let bob = settings.bob();
    let (n_x, n_y) = (alice.len(), bob.len());
    let batches = run_batches(seed, samples, BATCHES, |_, n, rng: &mut ChaCha8Rng| {
        let mut c = Counts::new(n_x, n_y);
        let mut b_out = vec![0usize; n_y];
        for _ in 0..n {
            let lambda = uniform_unit_vector(rng);
            for (y, dir) in bob.iter().enumerate() {
                b_out[y] = responses::bob(dir, &lambda);
            }
            for (x, dir) in alice.iter().enumerate() {
                c.trials[x * n_y] += 1;
                if rng.random::<f64>() < responses::detection_probability(dir, &lambda) {
                    c.clicks[x * n_y] += 1;
                    let a = responses::alice(dir, &lambda);
                    for (y, &b) in b_out.iter().enumerate() {
                        c.add(x, y, a, b);
                    }
                }
            }
        }
        c
    });

    let mut pooled = Counts::new(n_x, n_y);
    for b in &batches {
        pooled.merge(b);
    }
    let rate =
        |c: &Counts| c.clicks.iter().sum::<u64>() as f64 / c.trials.iter().sum::<u64>() as f64;
    let detection_rate = estimates(rate(&pooled), &batches.iter().map(rate).collect::<Vec<_>>());
    let correlators = (0..n_x)
        .map(|x| {
            (0..n_y)
                .map(|y| {
                    let per: Vec<f64> = batches.iter().map(|b| b.correlator(x, y)).collect();
                    estimates(pooled.correlator(x, y), &per)
                })
                .collect()
        })
        .collect();
    Ok(DetectionRun {
        behavior: pooled.behavior()?,
        deficit_bits: -detection_rate.mean.log2(),
        detection_rate,
        correlators,
    })
}

/// Alice's inputs and the input-conditioned hidden-variable density `q(l|x) = 2|x.l|`
/// (with respect to the uniform measure on the sphere).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MeasurementDependentModel {
    pub alice_inputs: Vec<BlochVector>,
}

impl MeasurementDependentModel {
    pub fn new(alice_inputs: Vec<BlochVector>) -> Result<Self> {
        if alice_inputs.is_empty() {
            return Err(Error::InvalidInput("Alice needs at least one input".into()));
        }
        Ok(MeasurementDependentModel { alice_inputs })
    }

    pub fn n_inputs(&self) -> usize {
        self.alice_inputs.len()
    }

    /// `q(l|x) = 2|x.l|`.
    pub fn conditional_density(&self, x: usize, lambda: &[f64; 3]) -> f64 {
        2.0 * self.alice_inputs[x].dot_array(lambda).abs()
    }

    /// `p(x|l)` for uniformly chosen nominal inputs: proportional to `|x.l|`.
    /// `None` when `l` is orthogonal to every input.
    pub fn input_conditional(&self, lambda: &[f64; 3]) -> Option<Vec<f64>> {
        let w: Vec<f64> = self
            .alice_inputs
            .iter()
            .map(|x| x.dot_array(lambda).abs())
            .collect();
        let total: f64 = w.iter().sum();
        (total > 0.0).then(|| w.iter().map(|v| v / total).collect())
    }

    /// Draws `l ~ q(.|x)` by accepting uniform `l` with probability `|x.l|`.
    /// Returns the sample and the number of proposals used.
    pub fn sample_lambda<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> ([f64; 3], u64) {
        let dir = &self.alice_inputs[x];
        let mut proposals = 0;
        loop {
            proposals += 1;
            let lambda = uniform_unit_vector(rng);
            if rng.random::<f64>() < responses::detection_probability(dir, &lambda) {
                return (lambda, proposals);
            }
        }
    }

    /// The deterministic local strategy a single hidden-variable value induces.
    pub fn lambda_strategy(&self, lambda: &[f64; 3], bob: &[BlochVector]) -> DeterministicStrategy {
        DeterministicStrategy::new(
            self.alice_inputs
                .iter()
                .map(|x| responses::alice(x, lambda))
                .collect(),
            bob.iter().map(|y| responses::bob(y, lambda)).collect(),
        )
    }
}

/// Number of hidden-variable bins: dominant axis times sign.
pub const LAMBDA_BINS: usize = 6;

/// Bin of `l` by its largest-magnitude coordinate and that coordinate's sign.
pub fn lambda_bin(lambda: &[f64; 3]) -> usize {
    let mut axis = 0;
    for k in 1..3 {
        if lambda[k].abs() > lambda[axis].abs() {
            axis = k;
        }
    }
    2 * axis + usize::from(lambda[axis] < 0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MeasurementDependentRun {
    pub behavior: Behavior,
    /// `[x][y]`
    pub correlators: Vec<Vec<Estimate>>,
    /// CHSH value when both parties have exactly two inputs.
    pub chsh: Option<Estimate>,
    /// `p(a = 0|x)`, pooled over Bob's inputs.
    pub alice_marginals: Vec<Estimate>,
    /// Fraction of uniform proposals accepted by the rejection sampler.
    pub acceptance_rate: Estimate,
    /// `-log2(acceptance rate)`: the support measure read through the click rate.
    pub support_deficit_bits: f64,
    /// `[bin][y]` counts of Bob's input by hidden-variable bin.
    pub bob_input_by_bin: Vec<Vec<u64>>,
    /// `[bin][x]` counts of Alice's input by hidden-variable bin.
    pub alice_input_by_bin: Vec<Vec<u64>>,
}

struct MdBatch {
    counts: Counts,
    proposals: u64,
    accepted: u64,
    bob_bins: Vec<u64>,
    alice_bins: Vec<u64>,
}

/// Monte Carlo of the measurement-dependent model.
///
/// Each round draws `x` uniformly, `l ~ q(.|x)`, and `y` uniformly and
/// independently of `l`; the outcomes are `sign(x.l)` and `-sign(y.l)`.
pub fn simulate_measurement_dependent(
    model: &MeasurementDependentModel,
    bob: &[BlochVector],
    samples: u64,
    seed: u64,
) -> Result<MeasurementDependentRun> {
    check_samples(samples)?;
    if bob.is_empty() {
        return Err(Error::InvalidInput("Bob needs at least one input".into()));
    }
    let (n_x, n_y) = (model.n_inputs(), bob.len());
    let batches = run_batches(seed, samples, BATCHES, |_, n, rng: &mut ChaCha8Rng| {
        let mut b = MdBatch {
            counts: Counts::new(n_x, n_y),
            proposals: 0,
            accepted: 0,
            bob_bins: vec![0; LAMBDA_BINS * n_y],
            alice_bins: vec![0; LAMBDA_BINS * n_x],
        };
        for _ in 0..n {
            let x = rng.random_range(0..n_x);
            let (lambda, proposals) = model.sample_lambda(x, rng);
            let y = rng.random_range(0..n_y);
            b.proposals += proposals;
            b.accepted += 1;
            let a = responses::alice(&model.alice_inputs[x], &lambda);
            let bo = responses::bob(&bob[y], &lambda);
            b.counts.add(x, y, a, bo);
            let bin = lambda_bin(&lambda);
            b.bob_bins[bin * n_y + y] += 1;
            b.alice_bins[bin * n_x + x] += 1;
        }
        b
    });

    let mut pooled = Counts::new(n_x, n_y);
    let mut bob_bins = vec![0u64; LAMBDA_BINS * n_y];
    let mut alice_bins = vec![0u64; LAMBDA_BINS * n_x];
    let (mut proposals, mut accepted) = (0u64, 0u64);
    for b in &batches {
        pooled.merge(&b.counts);
        proposals += b.proposals;
        accepted += b.accepted;
        for (acc, v) in bob_bins.iter_mut().zip(&b.bob_bins) {
            *acc += v;
        }
        for (acc, v) in alice_bins.iter_mut().zip(&b.alice_bins) {
            *acc += v;
        }
    }
    let behavior = pooled.behavior()?;

    let correlators = (0..n_x)
        .map(|x| {
            (0..n_y)
                .map(|y| {
                    let per: Vec<f64> = batches.iter().map(|b| b.counts.correlator(x, y)).collect();
                    estimates(pooled.correlator(x, y), &per)
                })
                .collect()
        })
        .collect();

    let chsh = if n_x == 2 && n_y == 2 {
        let expr = chsh_expression();
        let per = batches
            .iter()
            .map(|b| b.counts.behavior().and_then(|beh| evaluate(&expr, &beh)))
            .collect::<Result<Vec<f64>>>()?;
        Some(estimates(evaluate(&expr, &behavior)?, &per))
    } else {
        None
    };

    let marginal = |c: &Counts, x: usize| {
        let mut plus = 0u64;
        let mut total = 0u64;
        for y in 0..n_y {
            let base = (x * n_y + y) * 4;
            plus += c.outcome[base] + c.outcome[base + 1];
            total += c.block_total(x, y);
        }
        plus as f64 / total as f64
    };
    let alice_marginals = (0..n_x)
        .map(|x| {
            let per: Vec<f64> = batches.iter().map(|b| marginal(&b.counts, x)).collect();
            estimates(marginal(&pooled, x), &per)
        })
        .collect();

    let per_accept: Vec<f64> = batches
        .iter()
        .map(|b| b.accepted as f64 / b.proposals as f64)
        .collect();
    let acceptance_rate = estimates(accepted as f64 / proposals as f64, &per_accept);

    Ok(MeasurementDependentRun {
        behavior,
        correlators,
        chsh,
        alice_marginals,
        support_deficit_bits: -acceptance_rate.mean.log2(),
        acceptance_rate,
        bob_input_by_bin: bob_bins.chunks(n_y).map(|c| c.to_vec()).collect(),
        alice_input_by_bin: alice_bins.chunks(n_x).map(|c| c.to_vec()).collect(),
    })
}

/// Same model for the maximally entangled state `(I (x) U)|singlet>`, where `U`
/// lifts `rotation`: Bob's directions are pulled back by the inverse rotation.
pub fn simulate_maximally_entangled(
    model: &MeasurementDependentModel,
    bob: &[BlochVector],
    rotation: &LocalRotation,
    samples: u64,
    seed: u64,
) -> Result<MeasurementDependentRun> {
    let settings = MeasurementSettings::new(model.alice_inputs.clone(), bob.to_vec())?
        .with_bob_rotated(rotation);
    simulate_measurement_dependent(model, settings.bob(), samples, seed)
}

/// One row of the predetermined-input table: hidden value `lambda` fixes inputs and outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredeterminedRun {
    pub lambda: usize,
    pub weight: f64,
    pub x: usize,
    pub y: usize,
    pub a: usize,
    pub b: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredeterminedModel {
    pub value: f64,
    pub runs: Vec<PredeterminedRun>,
    /// The conditional behavior an experimenter would record.
    pub observed: Behavior,
}

/// Hidden variables that fix the inputs as well as the outputs.
///
/// One hidden value per input pair, all equally likely; each picks the
/// best-scoring outcome pair for its inputs, so the recorded behavior reaches
/// the algebraic maximum of `expr`.
pub fn predetermined_inputs_value(expr: &BellExpression) -> Result<PredeterminedModel> {
    let s = expr.scenario();
    let picks = algebraic_argmax(expr);
    let weight = 1.0 / (s.n_x() * s.n_y()) as f64;
    let mut runs = Vec::with_capacity(s.n_x() * s.n_y());
    for (x, row) in picks.iter().enumerate() {
        for (y, &(a, b)) in row.iter().enumerate() {
            runs.push(PredeterminedRun {
                lambda: runs.len(),
                weight,
                x,
                y,
                a,
                b,
            });
        }
    }
    let observed = Behavior::from_fn(s, |x, y, a, b| {
        let run = &runs[x * s.n_y() + y];
        if run.a == a && run.b == b {
            1.0
        } else {
            0.0
        }
    })?;
    Ok(PredeterminedModel {
        value: evaluate(expr, &observed)?,
        runs,
        observed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EntropyDeficit {
    pub bits: f64,
    pub grid_points: usize,
    /// Grid direction at which `p(x|l)` has the least entropy.
    pub worst_lambda: Option<[f64; 3]>,
}

fn shannon_bits(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|v| **v > 0.0)
        .map(|v| v * v.log2())
        .sum::<f64>()
}

/// `log2 N - H(p(.|l))` at a single hidden-variable value.
pub fn entropy_deficit_at(model: &MeasurementDependentModel, lambda: &[f64; 3]) -> Option<f64> {
    let p = model.input_conditional(lambda)?;
    Some((model.n_inputs() as f64).log2() - shannon_bits(&p))
}

/// Fibonacci lattice of `n` nearly uniform directions.
pub fn fibonacci_sphere(n: usize) -> Vec<[f64; 3]> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let (s, c) = (golden * i as f64).sin_cos();
            [r * c, r * s, z]
        })
        .collect()
}

/// `log2 N - min_l H(p(x|l))` over a Fibonacci grid of `grid_points` directions.
pub fn entropy_deficit(model: &MeasurementDependentModel, grid_points: usize) -> EntropyDeficit {
    if model.n_inputs() == 1 {
        return EntropyDeficit {
            bits: 0.0,
            grid_points,
            worst_lambda: None,
        };
    }
    let mut best: Option<(f64, [f64; 3])> = None;
    for lambda in fibonacci_sphere(grid_points) {
        if let Some(d) = entropy_deficit_at(model, &lambda) {
            if best.is_none_or(|(b, _)| d > b) {
                best = Some((d, lambda));
            }
        }
    }
    EntropyDeficit {
        bits: best.map_or(0.0, |b| b.0),
        grid_points,
        worst_lambda: best.map(|b| b.1),
    }
}
