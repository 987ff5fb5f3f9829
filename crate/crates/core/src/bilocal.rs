//! Entanglement swapping with two independent sources.
//!
//! Source one sends a Werner pair to Alice and Charlie, source two to Charlie
//! and Bob. Charlie makes a complete Bell-state measurement on his two qubits
//! and reports two bits `c = 2 c0 + c1`:
//!
//! | c | state | `(-1)^c0` (XX) | `(-1)^(c0+c1)` (ZZ) |
//! |---|-------|----------------|---------------------|
//! | 0 | phi+  | +1             | +1                  |
//! | 1 | psi+  | +1             | -1                  |
//! | 2 | psi-  | -1             | -1                  |
//! | 3 | phi-  | -1             | +1                  |
//!
//! The bilocal quantity uses `B0 = (-1)^(c0+c1)` and `B1 = (-1)^c0`:
//! `I = 1/4 sum <A_x B0 C_y>`, `J = 1/4 sum (-1)^(x+y) <A_x B1 C_y>` and
//! `S = sqrt|I| + sqrt|J|`. Bilocal models satisfy `S <= 1`. With Werner
//! sources and the standard settings `S = sqrt(2 v1 v2)`, so the bound breaks
//! exactly when `v1 v2 > 1/2`, while CHSH on the swapped pair needs
//! `v1 v2 > 1/sqrt 2`.
//!
//! `B0`, `B1` belong to Charlie in the middle; `C_y` is the outer party on the
//! second source, called Bob in the API.

use std::f64::consts::FRAC_1_SQRT_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::behavior::{outcome_sign, Scenario};
use crate::linalg::{paulis, CMatrix, C64, ZERO};
use crate::quantum::{chsh_optimal_settings, chsh_value, werner_state, BlochVector, TwoQubitState};
use crate::{Error, Result};

/// Bilocal models satisfy `S <= BILOCAL_BOUND`.
pub const BILOCAL_BOUND: f64 = 1.0;
/// Margin above a bound before a value counts as a violation.
pub const VIOLATION_MARGIN: f64 = 1e-9;
/// Sums of correlators below this are treated as exact zeros.
const ROUND_OFF_FLOOR: f64 = 1e-14;
/// Charlie's outcomes.
pub const CHARLIE_OUTCOMES: usize = 4;

/// Two Werner sources and the edge parties' two directions each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SwappingScenario {
    pub v1: f64,
    pub v2: f64,
    pub alice_directions: [BlochVector; 2],
    pub bob_directions: [BlochVector; 2],
}

impl SwappingScenario {
    pub fn new(
        v1: f64,
        v2: f64,
        alice_directions: [BlochVector; 2],
        bob_directions: [BlochVector; 2],
    ) -> Result<Self> {
        for v in [v1, v2] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::OutOfRange(format!("visibility {v} not in [0, 1]")));
            }
        }
        Ok(SwappingScenario {
            v1,
            v2,
            alice_directions,
            bob_directions,
        })
    }

    /// Both edge parties measure `(z + x)/sqrt 2` and `(z - x)/sqrt 2`.
    pub fn standard(v1: f64, v2: f64) -> Result<Self> {
        let h = FRAC_1_SQRT_2;
        let dirs = [
            BlochVector::new(h, 0.0, h).expect("unit"),
            BlochVector::new(-h, 0.0, h).expect("unit"),
        ];
        SwappingScenario::new(v1, v2, dirs, dirs)
    }

    /// `rho_v1 (x) rho_v2` on qubits ordered A, C1, C2, B.
    pub fn density_matrix(&self) -> Result<CMatrix> {
        Ok(werner_state(self.v1)?
            .density_matrix()
            .kron(werner_state(self.v2)?.density_matrix()))
    }
}

/// `p(a, b, c | x, y)` for two edge parties and Charlie's fixed measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TripartiteRepr", into = "TripartiteRepr")]
pub struct TripartiteBehavior {
    n_x: usize,
    n_y: usize,
    /// `(((x * n_y + y) * 2 + a) * 2 + b) * 4 + c`
    p: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct TripartiteRepr {
    n_x: usize,
    n_y: usize,
    /// `[x][y][a][b][c]`
    p: Vec<Vec<Vec<Vec<Vec<f64>>>>>,
}

impl TryFrom<TripartiteRepr> for TripartiteBehavior {
    type Error = Error;

    fn try_from(r: TripartiteRepr) -> Result<Self> {
        let shape_ok = r.p.len() == r.n_x
            && r.p.iter().all(|px| {
                px.len() == r.n_y
                    && px.iter().all(|py| {
                        py.len() == 2
                            && py
                                .iter()
                                .all(|pa| pa.len() == 2 && pa.iter().all(|pb| pb.len() == 4))
                    })
            });
        if !shape_ok {
            return Err(Error::DimensionMismatch(
                "tripartite table has the wrong shape".into(),
            ));
        }
        let flat =
            r.p.into_iter()
                .flatten()
                .flatten()
                .flatten()
                .flatten()
                .collect();
        TripartiteBehavior::new(r.n_x, r.n_y, flat)
    }
}

impl From<TripartiteBehavior> for TripartiteRepr {
    fn from(t: TripartiteBehavior) -> Self {
        let p =
            t.p.chunks(t.n_y * 16)
                .map(|px| {
                    px.chunks(16)
                        .map(|py| {
                            py.chunks(8)
                                .map(|pa| pa.chunks(4).map(<[f64]>::to_vec).collect())
                                .collect()
                        })
                        .collect()
                })
                .collect();
        TripartiteRepr {
            n_x: t.n_x,
            n_y: t.n_y,
            p,
        }
    }
}

impl TripartiteBehavior {
    /// Validates nonnegativity and normalization per `(x, y)` within `1e-12`.
    pub fn new(n_x: usize, n_y: usize, p: Vec<f64>) -> Result<Self> {
        if n_x == 0 || n_y == 0 || p.len() != n_x * n_y * 16 {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries for {n_x} x {n_y} inputs, got {}",
                n_x * n_y * 16,
                p.len()
            )));
        }
        if let Some(v) = p.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidBehavior(format!(
                "entry {v} is not a probability"
            )));
        }
        for (k, block) in p.chunks(16).enumerate() {
            let total: f64 = block.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidBehavior(format!(
                    "inputs ({}, {}) sum to {total}",
                    k / n_y,
                    k % n_y
                )));
            }
        }
        Ok(TripartiteBehavior { n_x, n_y, p })
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    pub fn get(&self, x: usize, y: usize, a: usize, b: usize, c: usize) -> f64 {
        self.p[(((x * self.n_y + y) * 2 + a) * 2 + b) * 4 + c]
    }

    /// `p(c)` at inputs `(x, y)`.
    pub fn charlie_marginal(&self, x: usize, y: usize) -> [f64; 4] {
        let mut m = [0.0; 4];
        for a in 0..2 {
            for b in 0..2 {
                for (c, mc) in m.iter_mut().enumerate() {
                    *mc += self.get(x, y, a, b, c);
                }
            }
        }
        m
    }

    /// `<A_x f(c) C_y>` for a sign function of Charlie's outcome.
    pub fn correlator_with(&self, x: usize, y: usize, charlie_sign: impl Fn(usize) -> f64) -> f64 {
        let mut e = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..4 {
                    e += outcome_sign(a)
                        * outcome_sign(b)
                        * charlie_sign(c)
                        * self.get(x, y, a, b, c);
                }
            }
        }
        e
    }

    /// `p(a, b | x, y, c)` as a bipartite behavior; `None` if `p(c) = 0` somewhere.
    pub fn conditioned(&self, c: usize) -> Option<crate::Behavior> {
        let scenario = Scenario::new(self.n_x, self.n_y, 2, 2).ok()?;
        let mut table = Vec::with_capacity(self.n_x * self.n_y * 4);
        for x in 0..self.n_x {
            for y in 0..self.n_y {
                let pc = self.charlie_marginal(x, y)[c];
                if pc <= 0.0 {
                    return None;
                }
                for a in 0..2 {
                    for b in 0..2 {
                        table.push(self.get(x, y, a, b, c) / pc);
                    }
                }
            }
        }
        crate::Behavior::new(scenario, table).ok()
    }
}

/// `B0 = (-1)^(c0 + c1)`.
pub fn charlie_b0(c: usize) -> f64 {
    if ((c >> 1) + (c & 1)).is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// `B1 = (-1)^c0`.
pub fn charlie_b1(c: usize) -> f64 {
    if c >> 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Bell state for Charlie's outcome `c`, in the basis `|00>, |01>, |10>, |11>`.
pub fn bell_state(c: usize) -> [C64; 4] {
    let h = C64::new(FRAC_1_SQRT_2, 0.0);
    match c {
        0 => [h, ZERO, ZERO, h],
        1 => [ZERO, h, h, ZERO],
        2 => [ZERO, h, -h, ZERO],
        3 => [h, ZERO, ZERO, -h],
        _ => panic!("Charlie outcome {c} out of range"),
    }
}

/// Pauli on Bob's side mapping the swapped pair for outcome `c` back to the singlet.
pub fn correction(c: usize) -> CMatrix {
    let [sx, sy, sz] = paulis();
    match c {
        0 => sy,
        1 => sz,
        2 => CMatrix::identity(2),
        3 => sx,
        _ => panic!("Charlie outcome {c} out of range"),
    }
}

/// Born-rule tripartite behavior from the full 16-dimensional state.
pub fn swapping_behavior(scenario: &SwappingScenario) -> Result<TripartiteBehavior> {
    let rho = scenario.density_matrix()?;
    let charlie: Vec<CMatrix> = (0..CHARLIE_OUTCOMES)
        .map(|c| CMatrix::outer(&bell_state(c)))
        .collect();
    let mut p = Vec::with_capacity(64);
    for xd in &scenario.alice_directions {
        for yd in &scenario.bob_directions {
            for a in 0..2 {
                let pa = xd.projector(a);
                for b in 0..2 {
                    let pb = yd.projector(b);
                    for pc in &charlie {
                        let op = pa.kron(pc).kron(&pb);
                        // Round-off can leave tiny negatives on exact zeros.
                        p.push(rho.trace_product(&op).re.max(0.0));
                    }
                }
            }
        }
    }
    TripartiteBehavior::new(2, 2, p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BilocalValue {
    pub i: f64,
    pub j: f64,
    pub s_biloc: f64,
    pub bound: f64,
}

impl BilocalValue {
    pub fn violates(&self) -> bool {
        self.s_biloc > self.bound + VIOLATION_MARGIN
    }
}

pub fn bilocal_value(behavior: &TripartiteBehavior) -> Result<BilocalValue> {
    if behavior.n_x != 2 || behavior.n_y != 2 {
        return Err(Error::DimensionMismatch(format!(
            "bilocal quantity needs two inputs per edge party, got {} and {}",
            behavior.n_x, behavior.n_y
        )));
    }
    let mut i = 0.0;
    let mut j = 0.0;
    for x in 0..2 {
        for y in 0..2 {
            let parity = if (x + y) % 2 == 0 { 1.0 } else { -1.0 };
            i += behavior.correlator_with(x, y, charlie_b0);
            j += parity * behavior.correlator_with(x, y, charlie_b1);
        }
    }
    // Trace round-off leaves ~1e-17 where the exact value is zero, and the
    // square root would magnify that to ~1e-8.
    let snap = |v: f64| {
        if v.abs() < ROUND_OFF_FLOOR {
            0.0
        } else {
            v / 4.0
        }
    };
    i = snap(i);
    j = snap(j);
    Ok(BilocalValue {
        i,
        j,
        s_biloc: i.abs().sqrt() + j.abs().sqrt(),
        bound: BILOCAL_BOUND,
    })
}

/// Alice-Bob state after Charlie reports `c`, with Bob's Pauli correction applied.
/// Also returns `p(c)`.
pub fn conditioned_state(scenario: &SwappingScenario, c: usize) -> Result<(f64, TwoQubitState)> {
    let rho = scenario.density_matrix()?;
    let beta = bell_state(c);
    // Qubit order A, C1, C2, B: index = 8a + 2k + b with k the middle pair.
    let mut ab = CMatrix::zeros(4);
    for a in 0..2 {
        for b in 0..2 {
            for a2 in 0..2 {
                for b2 in 0..2 {
                    let mut acc = ZERO;
                    for k in 0..4 {
                        for l in 0..4 {
                            acc += beta[k].conj()
                                * rho.get(8 * a + 2 * k + b, 8 * a2 + 2 * l + b2)
                                * beta[l];
                        }
                    }
                    ab.set(2 * a + b, 2 * a2 + b2, acc);
                }
            }
        }
    }
    let pc = ab.trace().re;
    if pc <= 0.0 {
        return Err(Error::NumericalFailure(format!(
            "Charlie outcome {c} has probability {pc}"
        )));
    }
    let state =
        TwoQubitState::new(ab.scale(C64::new(1.0 / pc, 0.0)))?.with_bob_unitary(&correction(c))?;
    Ok((pc, state))
}

/// CHSH of the corrected Alice-Bob pair at optimal settings, averaged over Charlie's outcomes.
pub fn conditioned_chsh(scenario: &SwappingScenario) -> Result<f64> {
    let settings = chsh_optimal_settings();
    let mut total = 0.0;
    for c in 0..CHARLIE_OUTCOMES {
        let (pc, state) = conditioned_state(scenario, c)?;
        total += pc * chsh_value(&state, &settings)?;
    }
    Ok(total)
}

/// One sweep row; field names are the CSV headers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub v1: f64,
    pub v2: f64,
    pub product: f64,
    #[serde(rename = "S_biloc")]
    pub s_biloc: f64,
    pub chsh: f64,
    #[serde(rename = "violatesBilocal")]
    pub violates_bilocal: bool,
    #[serde(rename = "violatesCHSH")]
    pub violates_chsh: bool,
}

pub fn sweep_point(v1: f64, v2: f64) -> Result<SweepRow> {
    let scenario = SwappingScenario::standard(v1, v2)?;
    let s = bilocal_value(&swapping_behavior(&scenario)?)?;
    let chsh = conditioned_chsh(&scenario)?;
    Ok(SweepRow {
        v1,
        v2,
        product: v1 * v2,
        s_biloc: s.s_biloc,
        chsh,
        violates_bilocal: s.violates(),
        violates_chsh: chsh > 2.0 + VIOLATION_MARGIN,
    })
}

/// `n` evenly spaced visibilities from 0 to 1 inclusive.
pub fn visibility_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![1.0],
        _ => (0..n).map(|k| k as f64 / (n - 1) as f64).collect(),
    }
}

/// Every `(v1, v2)` pair of the two grids, `v1` outermost, in deterministic order.
pub fn bilocal_threshold_sweep(v1_grid: &[f64], v2_grid: &[f64]) -> Result<Vec<SweepRow>> {
    let points: Vec<(f64, f64)> = v1_grid
        .iter()
        .flat_map(|&v1| v2_grid.iter().map(move |&v2| (v1, v2)))
        .collect();
    points
        .into_par_iter()
        .map(|(v1, v2)| sweep_point(v1, v2))
        .collect()
}
