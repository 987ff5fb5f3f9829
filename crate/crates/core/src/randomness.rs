//! Randomness-expansion bookkeeping.
//!
//! A stage runs `rounds` Bell rounds and certifies `rounds * H(S)` bits, where
//! `H(S) = 1 - log2(1 + sqrt(2 - S^2/4))` is the analytic CHSH min-entropy
//! bound. Inputs cost `log2` of each party's alphabet per round.
//!
//! With uniformly random inputs in every round a binary-input stage spends
//! two bits to certify at most one, so it can never expand. Stages therefore
//! carry a test probability `g`: each round is a test round with probability
//! `g` (fresh random inputs) and otherwise uses fixed inputs. Choosing the
//! round type costs `h(g)` bits, the inputs `g * log2(|X| |Y|)`. At `g = 1`
//! the cost is exactly `rounds * log2(|X| |Y|)`.
//!
//! Serial composition is pure bit counting: it assumes certified output can
//! be reused as input randomness for the next stage.

use std::f64::consts::SQRT_2;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::behavior::outcome_sign;
use crate::quantum::{quantum_behavior, MeasurementSettings, TwoQubitState};
use crate::sampling::{stream_rng, Estimate};
use crate::{Error, Result};

/// Tsirelson's bound `2 sqrt 2`.
pub const TSIRELSON: f64 = 2.0 * SQRT_2;
/// Slack above Tsirelson's bound still accepted as quantum.
pub const TSIRELSON_SLACK: f64 = 1e-9;
/// Rounds per independently seeded chunk in the round simulator.
pub const QRNG_CHUNK: usize = 4096;

/// Certified min-entropy per round for CHSH value `s`; zero for `s <= 2`.
pub fn minentropy_bound(s: f64) -> Result<f64> {
    if !(0.0..=TSIRELSON + TSIRELSON_SLACK).contains(&s) {
        return Err(Error::OutOfRange(format!(
            "CHSH value {s} outside [0, 2 sqrt 2]"
        )));
    }
    if s <= 2.0 {
        return Ok(0.0);
    }
    let root = (2.0 - s * s / 4.0).max(0.0).sqrt();
    Ok((1.0 - (1.0 + root).log2()).max(0.0))
}

/// Binary entropy in bits.
pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StageRepr", into = "StageRepr")]
pub struct ExpansionStage {
    input_alphabet: [u64; 2],
    output_alphabet: [u64; 2],
    rounds: u64,
    chsh_value: f64,
    test_probability: f64,
    input_bits_consumed: f64,
    certified_bits_produced: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct StageRepr {
    input_alphabet: [u64; 2],
    output_alphabet: [u64; 2],
    rounds: u64,
    chsh_value: f64,
    #[serde(default = "one")]
    test_probability: f64,
    #[serde(default)]
    input_bits_consumed: Option<f64>,
    #[serde(default)]
    certified_bits_produced: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl TryFrom<StageRepr> for ExpansionStage {
    type Error = Error;

    fn try_from(r: StageRepr) -> Result<Self> {
        let stage =
            ExpansionStage::new(r.input_alphabet, r.output_alphabet, r.rounds, r.chsh_value)?
                .with_test_probability(r.test_probability)?;
        let close = |given: Option<f64>, computed: f64| {
            given.is_none_or(|g| (g - computed).abs() <= 1e-9 * computed.abs().max(1.0))
        };
        if !close(r.input_bits_consumed, stage.input_bits_consumed)
            || !close(r.certified_bits_produced, stage.certified_bits_produced)
        {
            return Err(Error::InvalidInput(
                "stated bit counts disagree with the stage parameters".into(),
            ));
        }
        Ok(stage)
    }
}

impl From<ExpansionStage> for StageRepr {
    fn from(s: ExpansionStage) -> Self {
        StageRepr {
            input_alphabet: s.input_alphabet,
            output_alphabet: s.output_alphabet,
            rounds: s.rounds,
            chsh_value: s.chsh_value,
            test_probability: s.test_probability,
            input_bits_consumed: Some(s.input_bits_consumed),
            certified_bits_produced: Some(s.certified_bits_produced),
        }
    }
}

impl ExpansionStage {
    /// A stage with random inputs in every round.
    pub fn new(
        input_alphabet: [u64; 2],
        output_alphabet: [u64; 2],
        rounds: u64,
        chsh_value: f64,
    ) -> Result<Self> {
        if input_alphabet.contains(&0) || output_alphabet.iter().any(|&o| o < 2) {
            return Err(Error::InvalidInput(
                "each party needs at least one input and two outputs".into(),
            ));
        }
        minentropy_bound(chsh_value)?;
        let mut stage = ExpansionStage {
            input_alphabet,
            output_alphabet,
            rounds,
            chsh_value,
            test_probability: 1.0,
            input_bits_consumed: 0.0,
            certified_bits_produced: 0.0,
        };
        stage.recompute();
        Ok(stage)
    }

    /// Binary inputs and outputs for both parties.
    pub fn binary(rounds: u64, chsh_value: f64) -> Result<Self> {
        ExpansionStage::new([2, 2], [2, 2], rounds, chsh_value)
    }

    /// Spot-checking: only a fraction `g` of rounds draws random inputs.
    pub fn with_test_probability(mut self, g: f64) -> Result<Self> {
        if !(g > 0.0 && g <= 1.0) {
            return Err(Error::OutOfRange(format!(
                "test probability {g} not in (0, 1]"
            )));
        }
        self.test_probability = g;
        self.recompute();
        Ok(self)
    }

    fn recompute(&mut self) {
        let n = self.rounds as f64;
        let input_entropy =
            (self.input_alphabet[0] as f64).log2() + (self.input_alphabet[1] as f64).log2();
        let output_entropy =
            (self.output_alphabet[0] as f64).log2() + (self.output_alphabet[1] as f64).log2();
        let g = self.test_probability;
        self.input_bits_consumed = n * (binary_entropy(g) + g * input_entropy);
        let per_round = minentropy_bound(self.chsh_value)
            .expect("validated")
            .min(output_entropy);
        self.certified_bits_produced = n * per_round;
    }

    pub fn input_alphabet(&self) -> [u64; 2] {
        self.input_alphabet
    }

    pub fn output_alphabet(&self) -> [u64; 2] {
        self.output_alphabet
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    pub fn chsh_value(&self) -> f64 {
        self.chsh_value
    }

    pub fn test_probability(&self) -> f64 {
        self.test_probability
    }

    pub fn input_bits_consumed(&self) -> f64 {
        self.input_bits_consumed
    }

    pub fn certified_bits_produced(&self) -> f64 {
        self.certified_bits_produced
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExpansionReport {
    pub input_bits_consumed: f64,
    pub certified_bits_produced: f64,
    pub net: f64,
    pub expanding: bool,
}

pub fn expansion_accounting(stage: &ExpansionStage) -> ExpansionReport {
    let net = stage.certified_bits_produced - stage.input_bits_consumed;
    ExpansionReport {
        input_bits_consumed: stage.input_bits_consumed,
        certified_bits_produced: stage.certified_bits_produced,
        net,
        expanding: net > 0.0,
    }
}

/// One stage of a serial chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LedgerEntry {
    /// 1-based position in the chain.
    pub stage: usize,
    pub consumed: f64,
    /// Drawn from the previous stage's certified output.
    pub from_previous: f64,
    pub from_seed: f64,
    pub certified: f64,
    /// Previous output not needed by this stage; it leaves the chain as output.
    pub previous_unused: f64,
    pub seed_remaining: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChainReport {
    pub stages: Vec<LedgerEntry>,
    /// Seed bits drawn.
    pub total_in: f64,
    /// Certified bits not spent inside the chain.
    pub total_out: f64,
    pub total_certified: f64,
    /// `total_out / total_in`; absent when no seed is drawn.
    pub factor: Option<f64>,
}

/// Runs stages in series: each draws first from its predecessor's certified
/// output and then from the remaining seed.
pub fn serial_composition(stages: &[ExpansionStage], seed_bits: f64) -> Result<ChainReport> {
    if stages.is_empty() {
        return Err(Error::InvalidInput("chain needs at least one stage".into()));
    }
    if !(seed_bits.is_finite() && seed_bits >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "seed bits {seed_bits} must be finite and nonnegative"
        )));
    }
    let mut seed = seed_bits;
    let mut previous = 0.0;
    let mut entries = Vec::with_capacity(stages.len());
    for (k, stage) in stages.iter().enumerate() {
        let need = stage.input_bits_consumed;
        let from_previous = need.min(previous);
        let from_seed = need - from_previous;
        // Relative slack so an exactly sized seed is not starved by round-off.
        if from_seed > seed * (1.0 + 1e-12) + 1e-12 {
            return Err(Error::SeedStarvation {
                stage: k + 1,
                needed: need,
                available: previous + seed,
            });
        }
        seed = (seed - from_seed).max(0.0);
        entries.push(LedgerEntry {
            stage: k + 1,
            consumed: need,
            from_previous,
            from_seed,
            certified: stage.certified_bits_produced,
            previous_unused: previous - from_previous,
            seed_remaining: seed,
        });
        previous = stage.certified_bits_produced;
    }
    let total_in: f64 = entries.iter().map(|e| e.from_seed).sum();
    let total_certified: f64 = entries.iter().map(|e| e.certified).sum();
    let total_out = total_certified - entries.iter().map(|e| e.from_previous).sum::<f64>();
    Ok(ChainReport {
        stages: entries,
        total_in,
        total_out,
        total_certified,
        factor: (total_in > 0.0).then(|| total_out / total_in),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct QrngRun {
    pub rounds: u64,
    pub inputs_alice: Vec<u8>,
    pub inputs_bob: Vec<u8>,
    pub outputs_alice: Vec<u8>,
    pub outputs_bob: Vec<u8>,
    /// Empirical CHSH for two inputs per party, with standard error.
    pub chsh: Option<Estimate>,
    /// Fraction of ones in the output bitstream.
    pub ones_fraction: Estimate,
}

impl QrngRun {
    /// Output bits, Alice's then Bob's outcome per round.
    pub fn bitstream(&self) -> Vec<u8> {
        self.outputs_alice
            .iter()
            .zip(&self.outputs_bob)
            .flat_map(|(&a, &b)| [a, b])
            .collect()
    }
}

/// Bits as a string of `0` and `1`.
pub fn bits_to_text(bits: &[u8]) -> String {
    bits.iter()
        .map(|&b| if b == 0 { '0' } else { '1' })
        .collect()
}

/// Bits packed eight per byte, most significant first; the last byte is zero padded.
pub fn pack_bits(bits: &[u8]) -> Vec<u8> {
    bits.chunks(8)
        .map(|chunk| {
            chunk
                .iter()
                .enumerate()
                .fold(0u8, |acc, (i, &b)| acc | ((b & 1) << (7 - i)))
        })
        .collect()
}

/// Samples rounds with uniformly random inputs from the Born-rule behavior.
///
/// Rounds are cut into chunks of [`QRNG_CHUNK`]; chunk `k` uses stream `k` of
/// `seed`, so output does not depend on thread count.
pub fn simulate_qrng_rounds(
    settings: &MeasurementSettings,
    state: &TwoQubitState,
    rounds: u64,
    seed: u64,
) -> Result<QrngRun> {
    if rounds == 0 {
        return Err(Error::InvalidInput("at least one round is required".into()));
    }
    let (n_x, n_y) = (settings.alice().len(), settings.bob().len());
    if n_x > 256 || n_y > 256 {
        return Err(Error::InvalidInput("at most 256 inputs per party".into()));
    }
    let behavior = quantum_behavior(state, settings);
    // Cumulative outcome table per input pair, ordered (a, b) = 00, 01, 10, 11.
    let cdf: Vec<[f64; 4]> = (0..n_x * n_y)
        .map(|k| {
            let (x, y) = (k / n_y, k % n_y);
            let mut acc = 0.0;
            let mut c = [0.0; 4];
            for (i, slot) in c.iter_mut().enumerate() {
                acc += behavior.get(x, y, i / 2, i % 2);
                *slot = acc;
            }
            c
        })
        .collect();

    let chunks = rounds.div_ceil(QRNG_CHUNK as u64);
    let parts: Vec<[Vec<u8>; 4]> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let len = (rounds - k * QRNG_CHUNK as u64).min(QRNG_CHUNK as u64) as usize;
            let mut rng = stream_rng(seed, k);
            let mut out = [
                Vec::with_capacity(len),
                Vec::with_capacity(len),
                Vec::with_capacity(len),
                Vec::with_capacity(len),
            ];
            for _ in 0..len {
                let x = rng.random_range(0..n_x);
                let y = rng.random_range(0..n_y);
                let u: f64 = rng.random();
                let c = &cdf[x * n_y + y];
                let ab = c.iter().position(|&t| u < t).unwrap_or(3);
                out[0].push(x as u8);
                out[1].push(y as u8);
                out[2].push((ab / 2) as u8);
                out[3].push((ab % 2) as u8);
            }
            out
        })
        .collect();

    let mut cols: [Vec<u8>; 4] = Default::default();
    for part in parts {
        for (col, p) in cols.iter_mut().zip(part) {
            col.extend(p);
        }
    }
    let [xs, ys, as_, bs] = cols;

    let mut sums = vec![0.0; n_x * n_y];
    let mut counts = vec![0u64; n_x * n_y];
    for i in 0..xs.len() {
        let k = xs[i] as usize * n_y + ys[i] as usize;
        sums[k] += outcome_sign(as_[i] as usize) * outcome_sign(bs[i] as usize);
        counts[k] += 1;
    }
    let chsh = if n_x == 2 && n_y == 2 && counts.iter().all(|&c| c > 0) {
        let mut value = 0.0;
        let mut var = 0.0;
        for x in 0..2 {
            for y in 0..2 {
                let k = x * 2 + y;
                let e = sums[k] / counts[k] as f64;
                let w = if x == 1 && y == 1 { -1.0 } else { 1.0 };
                value += w * e;
                var += (1.0 - e * e) / counts[k] as f64;
            }
        }
        Some(Estimate {
            mean: value,
            stderr: var.sqrt(),
        })
    } else {
        None
    };

    let n_bits = 2.0 * rounds as f64;
    let ones = as_.iter().chain(&bs).map(|&b| b as f64).sum::<f64>() / n_bits;
    Ok(QrngRun {
        rounds,
        chsh,
        ones_fraction: Estimate {
            mean: ones,
            stderr: (ones * (1.0 - ones) / n_bits).sqrt(),
        },
        inputs_alice: xs,
        inputs_bob: ys,
        outputs_alice: as_,
        outputs_bob: bs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::chsh_optimal_settings;

    #[test]
    fn bound_endpoints() {
        assert!((minentropy_bound(TSIRELSON).unwrap() - 1.0).abs() < 1e-9);
        assert!((minentropy_bound(TSIRELSON + 5e-10).unwrap() - 1.0).abs() < 1e-4);
        assert_eq!(minentropy_bound(2.0).unwrap(), 0.0);
        assert_eq!(minentropy_bound(0.0).unwrap(), 0.0);
        let mid = minentropy_bound(2.5).unwrap();
        assert!(mid > 0.0 && mid < 1.0);
        assert!(minentropy_bound(TSIRELSON + 1e-6).is_err());
        assert!(minentropy_bound(-0.1).is_err());
        assert!(minentropy_bound(f64::NAN).is_err());
    }

    #[test]
    fn accounting_examples() {
        let s = ExpansionStage::binary(1000, TSIRELSON).unwrap();
        let r = expansion_accounting(&s);
        assert_eq!(r.input_bits_consumed, 2000.0);
        assert!((r.certified_bits_produced - 1000.0).abs() < 1e-6);
        assert!(!r.expanding);

        let zero = expansion_accounting(&ExpansionStage::binary(0, 2.5).unwrap());
        assert_eq!(
            (
                zero.input_bits_consumed,
                zero.certified_bits_produced,
                zero.net
            ),
            (0.0, 0.0, 0.0)
        );

        let classical = expansion_accounting(&ExpansionStage::binary(500, 2.0).unwrap());
        assert_eq!(classical.certified_bits_produced, 0.0);
        assert!(!classical.expanding);

        let spot = ExpansionStage::binary(1000, TSIRELSON)
            .unwrap()
            .with_test_probability(0.01)
            .unwrap();
        assert!(expansion_accounting(&spot).expanding);
    }

    #[test]
    fn binary_input_ternary_output_stage() {
        let s = ExpansionStage::new([2, 2], [3, 3], 10, TSIRELSON).unwrap();
        assert_eq!(s.input_bits_consumed(), 20.0);
        assert!((s.certified_bits_produced() - 10.0).abs() < 1e-8);
        assert!(ExpansionStage::new([2, 0], [2, 2], 1, 2.0).is_err());
    }

    #[test]
    fn chain_of_expanding_stages_multiplies() {
        let stage = ExpansionStage::binary(1000, TSIRELSON)
            .unwrap()
            .with_test_probability(0.01)
            .unwrap();
        let need = stage.input_bits_consumed();
        let report = serial_composition(&[stage.clone(), stage.clone(), stage], need).unwrap();
        assert!(report.total_out > report.total_in);
        assert!(report.factor.unwrap() > 1.0);
        assert_eq!(report.stages[1].from_seed, 0.0);
        assert!((report.total_in - need).abs() < 1e-12);
    }

    #[test]
    fn chain_starvation_names_stage() {
        let small = ExpansionStage::binary(10, TSIRELSON).unwrap();
        let big = ExpansionStage::binary(1000, TSIRELSON).unwrap();
        let err = serial_composition(&[small, big], 25.0).unwrap_err();
        assert!(
            matches!(err, Error::SeedStarvation { stage: 2, .. }),
            "{err:?}"
        );
    }

    #[test]
    fn non_expanding_stage_factor() {
        let s = ExpansionStage::binary(100, 2.0).unwrap();
        let r = serial_composition(&[s], 500.0).unwrap();
        assert!(r.factor.unwrap() <= 1.0);
    }

    #[test]
    fn packing_is_msb_first() {
        assert_eq!(pack_bits(&[1, 0, 0, 0, 0, 0, 0, 1, 1]), vec![0x81, 0x80]);
        assert_eq!(bits_to_text(&[0, 1, 1]), "011");
    }

    #[test]
    fn stage_json_round_trip() {
        let s = ExpansionStage::binary(64, 2.6)
            .unwrap()
            .with_test_probability(0.25)
            .unwrap();
        let text = serde_json::to_string(&s).unwrap();
        let back: ExpansionStage = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        let minimal: ExpansionStage = serde_json::from_str(
            r#"{"inputAlphabet":[2,2],"outputAlphabet":[2,2],"rounds":3,"chshValue":2.0}"#,
        )
        .unwrap();
        assert_eq!(minimal.input_bits_consumed(), 6.0);
        let wrong = serde_json::from_str::<ExpansionStage>(
            r#"{"inputAlphabet":[2,2],"outputAlphabet":[2,2],"rounds":3,"chshValue":2.0,"inputBitsConsumed":5}"#,
        );
        assert!(wrong.is_err());
    }

    #[test]
    fn qrng_reproducible_and_sized() {
        let settings = chsh_optimal_settings();
        let state = TwoQubitState::singlet();
        let a = simulate_qrng_rounds(&settings, &state, 10_000, 3).unwrap();
        let b = simulate_qrng_rounds(&settings, &state, 10_000, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.bitstream().len(), 20_000);
        assert_ne!(
            a,
            simulate_qrng_rounds(&settings, &state, 10_000, 4).unwrap()
        );
        assert!(simulate_qrng_rounds(&settings, &state, 0, 3).is_err());
    }
}
