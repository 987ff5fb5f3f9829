//! Two-qubit states and projective qubit measurements.
//!
//! A setting is a Bloch direction `n`; its outcome projectors are
//! `(I + n.sigma)/2` for index 0 (value `+1`) and `(I - n.sigma)/2` for index 1.

use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};

use crate::behavior::{chsh_expression, evaluate, Behavior, Scenario};
use crate::linalg::{paulis, CMatrix, C64, ONE, ZERO};
use crate::{Error, Result};

const UNIT_TOLERANCE: f64 = 1e-12;
const STATE_TOLERANCE: f64 = 1e-12;
/// Eigenvalues down to this are accepted as nonnegative.
pub const EIGENVALUE_TOLERANCE: f64 = 1e-10;

/// Unit vector on the Bloch sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct BlochVector {
    x: f64,
    y: f64,
    z: f64,
}

impl TryFrom<[f64; 3]> for BlochVector {
    type Error = Error;

    fn try_from(v: [f64; 3]) -> Result<Self> {
        BlochVector::new(v[0], v[1], v[2])
    }
}

impl From<BlochVector> for [f64; 3] {
    fn from(v: BlochVector) -> Self {
        [v.x, v.y, v.z]
    }
}

impl BlochVector {
    pub const X: BlochVector = BlochVector {
        x: 1.0,
        y: 0.0,
        z: 0.0,
    };
    pub const Y: BlochVector = BlochVector {
        x: 0.0,
        y: 1.0,
        z: 0.0,
    };
    pub const Z: BlochVector = BlochVector {
        x: 0.0,
        y: 0.0,
        z: 1.0,
    };

    /// Requires unit norm within `1e-12`.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let norm = (x * x + y * y + z * z).sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::InvalidInput(format!(
                "Bloch direction ({x}, {y}, {z}) has norm {norm}"
            )));
        }
        Ok(BlochVector { x, y, z })
    }

    /// Rescales any nonzero vector to unit length.
    pub fn normalized(x: f64, y: f64, z: f64) -> Result<Self> {
        let norm = (x * x + y * y + z * z).sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::InvalidInput("cannot normalize a zero vector".into()));
        }
        Ok(BlochVector {
            x: x / norm,
            y: y / norm,
            z: z / norm,
        })
    }

    /// Direction at polar angle `theta` from `z` and azimuth `phi`.
    pub fn from_angles(theta: f64, phi: f64) -> Self {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        BlochVector {
            x: st * cp,
            y: st * sp,
            z: ct,
        }
    }

    pub(crate) fn from_unit_unchecked(v: [f64; 3]) -> Self {
        BlochVector {
            x: v[0],
            y: v[1],
            z: v[2],
        }
    }

    pub fn components(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(&self, other: &BlochVector) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    #[inline]
    pub fn dot_array(&self, v: &[f64; 3]) -> f64 {
        self.x * v[0] + self.y * v[1] + self.z * v[2]
    }

    pub fn negated(&self) -> Self {
        BlochVector {
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    /// `n.sigma`.
    pub fn observable(&self) -> CMatrix {
        let [sx, sy, sz] = paulis();
        sx.scale(C64::new(self.x, 0.0))
            .add(&sy.scale(C64::new(self.y, 0.0)))
            .add(&sz.scale(C64::new(self.z, 0.0)))
    }

    /// `(I + s n.sigma)/2` with `s = +1` for outcome 0 and `-1` for outcome 1.
    pub fn projector(&self, outcome: usize) -> CMatrix {
        let s = if outcome == 0 { 0.5 } else { -0.5 };
        CMatrix::identity(2)
            .scale(C64::new(0.5, 0.0))
            .add(&self.observable().scale(C64::new(s, 0.0)))
    }
}

/// Rotation of the Bloch sphere by `angle` about `axis`, with its SU(2) lift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalRotation {
    pub axis: BlochVector,
    pub angle: f64,
}

impl LocalRotation {
    pub fn new(axis: BlochVector, angle: f64) -> Self {
        LocalRotation { axis, angle }
    }

    pub fn inverse(&self) -> Self {
        LocalRotation {
            axis: self.axis,
            angle: -self.angle,
        }
    }

    /// Rodrigues' formula.
    pub fn rotate(&self, v: &BlochVector) -> BlochVector {
        let k = self.axis.components();
        let v3 = v.components();
        let (s, c) = self.angle.sin_cos();
        let kv = self.axis.dot(v);
        let cross = [
            k[1] * v3[2] - k[2] * v3[1],
            k[2] * v3[0] - k[0] * v3[2],
            k[0] * v3[1] - k[1] * v3[0],
        ];
        let r: Vec<f64> = (0..3)
            .map(|i| v3[i] * c + cross[i] * s + k[i] * kv * (1.0 - c))
            .collect();
        BlochVector::from_unit_unchecked([r[0], r[1], r[2]])
    }

    /// `U = cos(t/2) I - i sin(t/2) k.sigma`, so `U (n.sigma) U^dagger = (R n).sigma`.
    pub fn unitary(&self) -> CMatrix {
        let (s, c) = (0.5 * self.angle).sin_cos();
        CMatrix::identity(2)
            .scale(C64::new(c, 0.0))
            .add(&self.axis.observable().scale(C64::new(0.0, -s)))
    }
}

/// Density matrix of two qubits, Alice's qubit first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<[f64; 2]>>", into = "Vec<Vec<[f64; 2]>>")]
pub struct TwoQubitState {
    rho: CMatrix,
}

impl TryFrom<Vec<Vec<[f64; 2]>>> for TwoQubitState {
    type Error = Error;

    fn try_from(rows: Vec<Vec<[f64; 2]>>) -> Result<Self> {
        if rows.len() != 4 || rows.iter().any(|r| r.len() != 4) {
            return Err(Error::DimensionMismatch(
                "state must be a 4x4 matrix".into(),
            ));
        }
        TwoQubitState::new(CMatrix::from_fn(4, |i, j| {
            C64::new(rows[i][j][0], rows[i][j][1])
        }))
    }
}

impl From<TwoQubitState> for Vec<Vec<[f64; 2]>> {
    fn from(s: TwoQubitState) -> Self {
        (0..4)
            .map(|i| {
                (0..4)
                    .map(|j| [s.rho.get(i, j).re, s.rho.get(i, j).im])
                    .collect()
            })
            .collect()
    }
}

impl TwoQubitState {
    /// Validates Hermiticity and unit trace within `1e-12` and eigenvalues `>= -1e-10`.
    pub fn new(rho: CMatrix) -> Result<Self> {
        if rho.dim() != 4 {
            return Err(Error::DimensionMismatch(format!(
                "two-qubit state must be 4x4, got {}x{}",
                rho.dim(),
                rho.dim()
            )));
        }
        let herm = rho.hermiticity_error();
        if herm > STATE_TOLERANCE {
            return Err(Error::InvalidInput(format!(
                "state is not Hermitian (error {herm:e})"
            )));
        }
        let tr = rho.trace();
        if (tr - ONE).norm() > STATE_TOLERANCE {
            return Err(Error::InvalidInput(format!("state trace is {tr}")));
        }
        let min_eig = rho.hermitian_eigenvalues()[0];
        if min_eig < -EIGENVALUE_TOLERANCE {
            return Err(Error::InvalidInput(format!(
                "state has eigenvalue {min_eig}"
            )));
        }
        Ok(TwoQubitState { rho })
    }

    /// `(|01> - |10>)/sqrt(2)` as a projector.
    pub fn singlet() -> Self {
        TwoQubitState {
            rho: singlet_projector(),
        }
    }

    pub fn maximally_mixed() -> Self {
        TwoQubitState {
            rho: CMatrix::identity(4).scale(C64::new(0.25, 0.0)),
        }
    }

    /// `(I + a.sigma)/2 (x) (I + b.sigma)/2`; both Bloch vectors need norm at most one.
    pub fn product(alice: [f64; 3], bob: [f64; 3]) -> Result<Self> {
        let qubit = |r: [f64; 3]| -> Result<CMatrix> {
            let norm = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
            if norm > 1.0 + UNIT_TOLERANCE {
                return Err(Error::OutOfRange(format!(
                    "Bloch vector norm {norm} exceeds 1"
                )));
            }
            let [sx, sy, sz] = paulis();
            Ok(CMatrix::identity(2)
                .add(&sx.scale(C64::new(r[0], 0.0)))
                .add(&sy.scale(C64::new(r[1], 0.0)))
                .add(&sz.scale(C64::new(r[2], 0.0)))
                .scale(C64::new(0.5, 0.0)))
        };
        TwoQubitState::new(qubit(alice)?.kron(&qubit(bob)?))
    }

    pub fn density_matrix(&self) -> &CMatrix {
        &self.rho
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.rho.hermitian_eigenvalues()
    }

    /// `(I (x) U) rho (I (x) U)^dagger` for a single-qubit unitary on Bob's side.
    pub fn with_bob_unitary(&self, u: &CMatrix) -> Result<Self> {
        let full = CMatrix::identity(2).kron(u);
        TwoQubitState::new(self.rho.conjugate_by(&full))
    }

    /// `p(a,b)` for single directions on each side.
    pub fn joint_probability(
        &self,
        alice: &BlochVector,
        bob: &BlochVector,
        a: usize,
        b: usize,
    ) -> f64 {
        let op = alice.projector(a).kron(&bob.projector(b));
        self.rho.trace_product(&op).re
    }
}

pub(crate) fn singlet_projector() -> CMatrix {
    let h = C64::new(FRAC_1_SQRT_2, 0.0);
    CMatrix::outer(&[ZERO, h, -h, ZERO])
}

/// `v |singlet><singlet| + (1 - v) I/4` for `0 <= v <= 1`.
pub fn werner_state(v: f64) -> Result<TwoQubitState> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::OutOfRange(format!("visibility {v} not in [0, 1]")));
    }
    let rho = singlet_projector()
        .scale(C64::new(v, 0.0))
        .add(&CMatrix::identity(4).scale(C64::new((1.0 - v) / 4.0, 0.0)));
    TwoQubitState::new(rho)
}

/// Alice's and Bob's measurement directions; their counts fix `nX` and `nY`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SettingsRepr", into = "SettingsRepr")]
pub struct MeasurementSettings {
    alice: Vec<BlochVector>,
    bob: Vec<BlochVector>,
}

#[derive(Serialize, Deserialize)]
struct SettingsRepr {
    alice: Vec<BlochVector>,
    bob: Vec<BlochVector>,
}

impl TryFrom<SettingsRepr> for MeasurementSettings {
    type Error = Error;

    fn try_from(r: SettingsRepr) -> Result<Self> {
        MeasurementSettings::new(r.alice, r.bob)
    }
}

impl From<MeasurementSettings> for SettingsRepr {
    fn from(s: MeasurementSettings) -> Self {
        SettingsRepr {
            alice: s.alice,
            bob: s.bob,
        }
    }
}

impl MeasurementSettings {
    pub fn new(alice: Vec<BlochVector>, bob: Vec<BlochVector>) -> Result<Self> {
        if alice.is_empty() || bob.is_empty() {
            return Err(Error::InvalidInput(
                "each party needs at least one setting".into(),
            ));
        }
        Ok(MeasurementSettings { alice, bob })
    }

    pub fn alice(&self) -> &[BlochVector] {
        &self.alice
    }

    pub fn bob(&self) -> &[BlochVector] {
        &self.bob
    }

    pub fn scenario(&self) -> Scenario {
        Scenario::new(self.alice.len(), self.bob.len(), 2, 2).expect("nonempty settings")
    }

    /// Bob's directions replaced by `R^-1 y`: measuring `y` on `(I (x) U) rho (I (x) U)^dagger`
    /// is measuring `R^-1 y` on `rho`.
    pub fn with_bob_rotated(&self, rotation: &LocalRotation) -> Self {
        let inv = rotation.inverse();
        MeasurementSettings {
            alice: self.alice.clone(),
            bob: self.bob.iter().map(|y| inv.rotate(y)).collect(),
        }
    }
}

/// Born-rule behavior `p(a,b|x,y) = Tr[rho (P_a^x (x) P_b^y)]`.
pub fn quantum_behavior(state: &TwoQubitState, settings: &MeasurementSettings) -> Behavior {
    let scenario = settings.scenario();
    let alice: Vec<[CMatrix; 2]> = settings
        .alice
        .iter()
        .map(|d| [d.projector(0), d.projector(1)])
        .collect();
    let bob: Vec<[CMatrix; 2]> = settings
        .bob
        .iter()
        .map(|d| [d.projector(0), d.projector(1)])
        .collect();
    Behavior::from_fn(scenario, |x, y, a, b| {
        state.rho.trace_product(&alice[x][a].kron(&bob[y][b])).re
    })
    .expect("Born-rule probabilities of a valid state are normalized")
}

/// Alice measures `z` and `x`; Bob measures `-(z+x)/sqrt 2` and `(x-z)/sqrt 2`.
///
/// With the singlet these reach `CHSH = +2 sqrt 2` for
/// `E(0,0) + E(0,1) + E(1,0) - E(1,1)`.
pub fn chsh_optimal_settings() -> MeasurementSettings {
    let h = FRAC_1_SQRT_2;
    MeasurementSettings {
        alice: vec![BlochVector::Z, BlochVector::X],
        bob: vec![
            BlochVector::from_unit_unchecked([-h, 0.0, -h]),
            BlochVector::from_unit_unchecked([h, 0.0, -h]),
        ],
    }
}

/// CHSH value of a state at the given `2 x 2` settings.
pub fn chsh_value(state: &TwoQubitState, settings: &MeasurementSettings) -> Result<f64> {
    evaluate(&chsh_expression(), &quantum_behavior(state, settings))
}

/// Smallest Werner visibility whose CHSH value at optimal settings exceeds 2.
///
/// Found by bisection on `CHSH(werner(v)) > 2`; the bracket is narrowed to
/// below `1e-15`.
pub fn chsh_violation_threshold() -> f64 {
    let settings = chsh_optimal_settings();
    let violates = |v: f64| {
        let state = werner_state(v).expect("v in range");
        chsh_value(&state, &settings).expect("2x2 settings") > 2.0
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if violates(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::SQRT_2;

    #[test]
    fn werner_eigenvalues() {
        let e = werner_state(0.0).unwrap().eigenvalues();
        assert!(e.iter().all(|v| (v - 0.25).abs() < 1e-12));
        let e = werner_state(1.0).unwrap().eigenvalues();
        assert!((e[3] - 1.0).abs() < 1e-12 && e[..3].iter().all(|v| v.abs() < 1e-12));
        // Singlet weight v + (1-v)/4 and three times (1-v)/4.
        let e = werner_state(0.5).unwrap().eigenvalues();
        for (got, want) in e.iter().zip([0.125, 0.125, 0.125, 0.625]) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn werner_rejects_out_of_range() {
        assert!(matches!(werner_state(1.1), Err(Error::OutOfRange(_))));
        assert!(matches!(werner_state(-0.1), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn state_validation() {
        let mut rho = CMatrix::identity(4).scale(C64::new(0.25, 0.0));
        rho.set(0, 1, C64::new(0.0, 0.1));
        assert!(TwoQubitState::new(rho).is_err());
        assert!(TwoQubitState::new(CMatrix::identity(4)).is_err());
        // Trace one, Hermitian, but not positive.
        let bad = CMatrix::from_fn(4, |i, j| {
            if i == j {
                C64::new([0.7, 0.7, -0.2, -0.2][i], 0.0)
            } else {
                ZERO
            }
        });
        assert!(TwoQubitState::new(bad).is_err());
        assert!(TwoQubitState::new(CMatrix::identity(2)).is_err());
    }

    #[test]
    fn singlet_perfect_anticorrelation() {
        let s = TwoQubitState::singlet();
        for d in [
            BlochVector::X,
            BlochVector::Y,
            BlochVector::Z,
            BlochVector::from_angles(0.3, 1.9),
        ] {
            let settings = MeasurementSettings::new(vec![d], vec![d]).unwrap();
            let b = quantum_behavior(&s, &settings);
            assert!(b.get(0, 0, 0, 0).abs() < 1e-15 && b.get(0, 0, 1, 1).abs() < 1e-15);
            assert!((b.correlator(0, 0).unwrap() + 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn maximally_mixed_is_uniform() {
        let b = quantum_behavior(&TwoQubitState::maximally_mixed(), &chsh_optimal_settings());
        assert!(b.probabilities().iter().all(|p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn chsh_at_optimal_settings() {
        let settings = chsh_optimal_settings();
        let v = chsh_value(&TwoQubitState::singlet(), &settings).unwrap();
        assert!((v - 2.0 * SQRT_2).abs() < 1e-9);
        let v = chsh_value(&werner_state(FRAC_1_SQRT_2).unwrap(), &settings).unwrap();
        assert!((v - 2.0).abs() < 1e-9);
        assert!(
            chsh_value(&TwoQubitState::maximally_mixed(), &settings)
                .unwrap()
                .abs()
                < 1e-15
        );
    }

    #[test]
    fn threshold_is_inverse_sqrt_two() {
        let t = chsh_violation_threshold();
        assert!((t - FRAC_1_SQRT_2).abs() < 1e-6, "{t}");
    }

    #[test]
    fn rotation_lifts_consistently() {
        let rot = LocalRotation::new(BlochVector::normalized(1.0, 2.0, -0.5).unwrap(), 0.77);
        let n = BlochVector::from_angles(1.1, -0.4);
        let lhs = rot
            .unitary()
            .mul(&n.observable())
            .mul(&rot.unitary().adjoint());
        let rhs = rot.rotate(&n).observable();
        assert!(lhs.max_abs_diff(&rhs) < 1e-14);
        let back = rot.inverse().rotate(&rot.rotate(&n));
        assert!((back.dot(&n) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn product_state_rejects_long_vectors() {
        assert!(TwoQubitState::product([0.0, 0.0, 1.0], [0.6, 0.0, 0.8]).is_ok());
        assert!(TwoQubitState::product([0.0, 0.0, 1.1], [0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn json_formats() {
        let settings = chsh_optimal_settings();
        let text = serde_json::to_string(&settings).unwrap();
        assert!(text.starts_with("{\"alice\":[[0.0,0.0,1.0]"));
        assert_eq!(
            serde_json::from_str::<MeasurementSettings>(&text).unwrap(),
            settings
        );
        assert!(serde_json::from_str::<MeasurementSettings>(
            r#"{"alice":[[1,1,0]],"bob":[[1,0,0]]}"#
        )
        .is_err());

        let state = werner_state(0.3).unwrap();
        let text = serde_json::to_string(&state).unwrap();
        let back: TwoQubitState = serde_json::from_str(&text).unwrap();
        assert!(back.density_matrix().max_abs_diff(state.density_matrix()) == 0.0);
    }
}
