//! Acceptance gate: one PASS/FAIL line per criterion, with its time budget.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2, TAU};
use std::time::{Duration, Instant};

use bell_lab::bilocal::{bilocal_threshold_sweep, sweep_point, visibility_grid};
use bell_lab::covariance::covariance_forces_locality;
use bell_lab::freewill::{
    deficit, simulate_detection_model, simulate_measurement_dependent, MeasurementDependentModel,
};
use bell_lab::linalg::{paulis, CMatrix, C64};
use bell_lab::quantum::{
    chsh_optimal_settings, chsh_value, chsh_violation_threshold, quantum_behavior, werner_state,
    BlochVector, MeasurementSettings, TwoQubitState,
};
use bell_lab::randomness::{
    expansion_accounting, minentropy_bound, serial_composition, simulate_qrng_rounds,
    ExpansionStage, TSIRELSON,
};
use bell_lab::sampling::stream_rng;
use bell_lab::*;
use rand::Rng;

type Check = Result<String, String>;

/// Name, time budget in seconds, and the check itself.
type Criterion = (&'static str, u64, fn() -> Check);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn chsh_local_bound() -> Check {
    let chsh = chsh_expression();
    let strategies = enumerate_strategies(&Scenario::chsh()).map_err(|e| e.to_string())?;
    ensure(
        strategies.len() == 16,
        format!("{} strategies", strategies.len()),
    )?;
    let lb = local_bound(&chsh).map_err(|e| e.to_string())?;
    let ab = algebraic_bound(&chsh);
    ensure(
        lb == 2.0 && ab == 4.0,
        format!("local {lb}, algebraic {ab}"),
    )?;
    Ok(format!("local bound {lb}, algebraic bound {ab}"))
}

fn werner_threshold() -> Check {
    let v = chsh_violation_threshold();
    ensure((v - FRAC_1_SQRT_2).abs() <= 1e-6, format!("threshold {v}"))?;
    Ok(format!("threshold {v:.10}"))
}

/// `Tr[rho (a.sigma (x) b.sigma)]` built from Pauli matrices directly.
fn pauli_correlator(rho: &CMatrix, a: &BlochVector, b: &BlochVector) -> f64 {
    let s = paulis();
    let obs = |v: [f64; 3]| {
        s.iter().zip(v).fold(CMatrix::zeros(2), |acc, (m, c)| {
            acc.add(&m.scale(C64::new(c, 0.0)))
        })
    };
    rho.trace_product(&obs(a.components()).kron(&obs(b.components())))
        .re
}

fn tsirelson_point() -> Check {
    let settings = chsh_optimal_settings();
    let singlet = TwoQubitState::singlet();
    let s = chsh_value(&singlet, &settings).map_err(|e| e.to_string())?;
    let (a, b) = (settings.alice(), settings.bob());
    let e = |x: usize, y: usize| pauli_correlator(singlet.density_matrix(), &a[x], &b[y]);
    let oracle = e(0, 0) + e(0, 1) + e(1, 0) - e(1, 1);
    ensure((s - 2.0 * SQRT_2).abs() <= 1e-9, format!("CHSH {s}"))?;
    ensure(
        (oracle - s).abs() <= 1e-12,
        format!("trace oracle {oracle} vs {s}"),
    )?;
    Ok(format!("CHSH {s:.12}, trace oracle {oracle:.12}"))
}

fn bilocal_threshold() -> Check {
    let grid = visibility_grid(21);
    let rows = bilocal_threshold_sweep(&grid, &grid).map_err(|e| e.to_string())?;
    ensure(rows.len() == 441, "grid size")?;
    let mut strict = 0;
    for r in &rows {
        let gap = r.s_biloc - 1.0;
        let side = r.product - 0.5;
        if side.abs() < 1e-12 {
            ensure(
                gap.abs() <= 1e-6,
                format!("boundary ({}, {}) has S {}", r.v1, r.v2, r.s_biloc),
            )?;
        } else {
            ensure(
                gap.signum() == side.signum(),
                format!("sign mismatch at ({}, {})", r.v1, r.v2),
            )?;
            ensure(
                r.violates_bilocal == (side > 0.0),
                format!("flag mismatch at ({}, {})", r.v1, r.v2),
            )?;
        }
        if r.violates_chsh {
            ensure(
                r.violates_bilocal,
                format!("CHSH-only violation at ({}, {})", r.v1, r.v2),
            )?;
        } else if r.violates_bilocal {
            strict += 1;
        }
    }
    ensure(
        strict > 0,
        "bilocal region does not strictly contain the CHSH region",
    )?;

    // Locate the boundary in each row by bisection on S - 1.
    let mut worst: f64 = 0.0;
    for &v1 in grid.iter().filter(|v| **v >= 0.55) {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if sweep_point(v1, mid).map_err(|e| e.to_string())?.s_biloc > 1.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        worst = worst.max((0.5 * (lo + hi) - 0.5 / v1).abs());
    }
    ensure(worst <= 1e-6, format!("boundary off by {worst:e}"))?;
    Ok(format!(
        "441 points agree, {strict} bilocal-only points, boundary error {worst:.1e}"
    ))
}

fn covariance_locality() -> Check {
    let mut notes = Vec::new();
    for lambdas in 1..=2 {
        let r = covariance_forces_locality(Scenario::chsh(), lambdas, 0, 0)
            .map_err(|e| e.to_string())?;
        ensure(
            r.exhaustive,
            format!("lambdaCount {lambdas} not exhaustive"),
        )?;
        ensure(
            r.chsh_violations == 0 && r.locality_failures == 0,
            format!(
                "lambdaCount {lambdas}: {} CHSH violations",
                r.chsh_violations
            ),
        )?;
        notes.push(format!("{} models at {lambdas}", r.models_checked));
    }
    let r =
        covariance_forces_locality(Scenario::chsh(), 4, 100_000, 7).map_err(|e| e.to_string())?;
    ensure(
        !r.exhaustive && r.models_checked == 100_000,
        "random sweep size",
    )?;
    ensure(
        r.locality_failures == 0,
        format!("{} LP failures", r.locality_failures),
    )?;
    notes.push(format!("{} random models at 4 all local", r.models_checked));
    Ok(notes.join(", "))
}

fn detection_model() -> Check {
    let settings = chsh_optimal_settings();
    let run = simulate_detection_model(&settings, 1_000_000, 1).map_err(|e| e.to_string())?;
    ensure(
        run.detection_rate.within_sigma(0.5, 3.0),
        format!("rate {:?}", run.detection_rate),
    )?;
    for (x, a) in settings.alice().iter().enumerate() {
        for (y, b) in settings.bob().iter().enumerate() {
            let e = run.correlators[x][y];
            ensure(
                e.within_sigma(-a.dot(b), 3.0),
                format!("E({x},{y}) = {e:?}, want {}", -a.dot(b)),
            )?;
        }
    }
    Ok(format!(
        "rate {:.5} +- {:.5}, correlators within 3 sigma",
        run.detection_rate.mean, run.detection_rate.stderr
    ))
}

fn one_bit_dependence() -> Check {
    let settings = chsh_optimal_settings();
    let model =
        MeasurementDependentModel::new(settings.alice().to_vec()).map_err(|e| e.to_string())?;
    let run = simulate_measurement_dependent(&model, settings.bob(), 1_000_000, 2)
        .map_err(|e| e.to_string())?;
    for (x, a) in settings.alice().iter().enumerate() {
        for (y, b) in settings.bob().iter().enumerate() {
            let e = run.correlators[x][y];
            ensure(
                e.within_sigma(-a.dot(b), 3.0),
                format!("E({x},{y}) = {e:?}"),
            )?;
        }
    }
    let s = run.chsh.ok_or("no CHSH estimate")?;
    ensure(s.within_sigma(TSIRELSON, 3.0), format!("CHSH {s:?}"))?;

    // Each hidden value answers with a fixed local strategy: outcomes depend
    // only on (x, l) and (y, l).
    let mut rng = stream_rng(3, 0);
    for _ in 0..10_000 {
        let x = rng.random_range(0..2);
        let (lambda, _) = model.sample_lambda(x, &mut rng);
        let strat = model.lambda_strategy(&lambda, settings.bob());
        let b = strategy_behavior(&strat, &Scenario::chsh()).map_err(|e| e.to_string())?;
        ensure(
            is_local(&b).map_err(|e| e.to_string())?.is_local(),
            "non-local hidden value",
        )?;
    }
    let d = deficit(4, 2).map_err(|e| e.to_string())?;
    ensure(d.bits == 1.0, format!("deficit(4,2) = {}", d.bits))?;
    Ok(format!(
        "CHSH {:.4} +- {:.4}, acceptance {:.4}, deficit(4,2) = {}",
        s.mean, s.stderr, run.acceptance_rate.mean, d.bits
    ))
}

fn randomness_expansion() -> Check {
    let h = minentropy_bound(TSIRELSON).map_err(|e| e.to_string())?;
    ensure((h - 1.0).abs() <= 1e-9, format!("bound {h}"))?;
    let stage = ExpansionStage::binary(1000, TSIRELSON).map_err(|e| e.to_string())?;
    let r = expansion_accounting(&stage);
    ensure(
        r.input_bits_consumed == 2000.0,
        format!("consumed {}", r.input_bits_consumed),
    )?;
    ensure(
        r.certified_bits_produced == 1000.0 * h,
        format!("certified {}", r.certified_bits_produced),
    )?;
    ensure(
        r.net == r.certified_bits_produced - 2000.0 && !r.expanding,
        "net arithmetic",
    )?;

    let spot = ExpansionStage::binary(1000, TSIRELSON)
        .and_then(|s| s.with_test_probability(0.01))
        .map_err(|e| e.to_string())?;
    let chain = vec![spot.clone(), spot.clone(), spot.clone()];
    let report =
        serial_composition(&chain, spot.input_bits_consumed()).map_err(|e| e.to_string())?;
    let factor = report.factor.ok_or("no factor")?;
    ensure(factor > 1.0, format!("factor {factor}"))?;
    Ok(format!(
        "bound {h:.12}, consumed 2000, certified {:.6}, chain factor {factor:.3}",
        r.certified_bits_produced
    ))
}

fn fine_chsh_max(b: &Behavior) -> f64 {
    let e = |x, y| b.correlator(x, y).unwrap();
    let (e00, e01, e10, e11) = (e(0, 0), e(0, 1), e(1, 0), e(1, 1));
    [
        e00 + e01 + e10 - e11,
        e00 + e01 - e10 + e11,
        e00 - e01 + e10 + e11,
        -e00 + e01 + e10 + e11,
    ]
    .iter()
    .map(|v| v.abs())
    .fold(0.0, f64::max)
}

fn random_direction<R: Rng>(rng: &mut R) -> BlochVector {
    let z: f64 = rng.random_range(-1.0..=1.0);
    BlochVector::from_angles(z.acos(), rng.random_range(0.0..TAU))
}

fn property_suites() -> Check {
    let mut rng = stream_rng(9, 0);

    // Normalization and no-signaling on generated behaviors.
    let mut generated = 0;
    for (nx, ny, na, nb) in [(2, 2, 2, 2), (3, 2, 2, 3), (2, 3, 3, 2), (3, 3, 2, 2)] {
        let s = Scenario::new(nx, ny, na, nb).unwrap();
        let strategies = enumerate_strategies(&s).unwrap();
        for _ in 0..50 {
            let k = rng.random_range(1..=5);
            let parts: Vec<(f64, Behavior)> = (0..k)
                .map(|_| {
                    let st = &strategies[rng.random_range(0..strategies.len())];
                    (
                        rng.random_range(0.1..1.0),
                        strategy_behavior(st, &s).unwrap(),
                    )
                })
                .collect();
            let total: f64 = parts.iter().map(|p| p.0).sum();
            let refs: Vec<(f64, &Behavior)> = parts.iter().map(|(w, b)| (w / total, b)).collect();
            let b = Behavior::mixture(&refs).map_err(|e| e.to_string())?;
            ensure(b.is_no_signaling(1e-12), "mixture signals")?;
            let r = is_local(&b).map_err(|e| e.to_string())?;
            ensure(r.is_local(), "strategy mixture judged nonlocal")?;
            generated += 1;
        }
    }

    // LP membership against the CHSH facets of the (2,2,2,2) polytope.
    let mut agreements = 0;
    for _ in 0..400 {
        let v = rng.random_range(0.0..=1.0);
        let settings = MeasurementSettings::new(
            vec![random_direction(&mut rng), random_direction(&mut rng)],
            vec![random_direction(&mut rng), random_direction(&mut rng)],
        )
        .unwrap();
        let b = quantum_behavior(&werner_state(v).unwrap(), &settings);
        ensure(b.is_no_signaling(1e-12), "quantum behavior signals")?;
        let oracle = fine_chsh_max(&b);
        if (oracle - 2.0).abs() < 1e-7 {
            continue;
        }
        let lp = is_local(&b).map_err(|e| e.to_string())?.is_local();
        ensure(
            lp == (oracle <= 2.0),
            format!("LP {lp} vs facet value {oracle}"),
        )?;
        agreements += 1;
        generated += 1;
    }

    // Seed reproducibility across worker counts, compared as serialized bytes.
    let settings = chsh_optimal_settings();
    let bytes = |threads: usize| -> Result<Vec<u8>, String> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| e.to_string())?;
        pool.install(|| {
            let d = simulate_detection_model(&settings, 100_000, 42).map_err(|e| e.to_string())?;
            let q = simulate_qrng_rounds(&settings, &TwoQubitState::singlet(), 100_000, 42)
                .map_err(|e| e.to_string())?;
            let c = covariance_forces_locality(Scenario::chsh(), 3, 2_000, 42)
                .map_err(|e| e.to_string())?;
            let mut out = serde_json::to_vec(&d).map_err(|e| e.to_string())?;
            out.extend(q.bitstream());
            out.extend(serde_json::to_vec(&c).map_err(|e| e.to_string())?);
            Ok(out)
        })
    };
    let one = bytes(1)?;
    ensure(
        one == bytes(4)? && one == bytes(1)?,
        "output depends on worker count",
    )?;
    Ok(format!(
        "{generated} behaviors checked, {agreements} LP/facet agreements, byte-identical reruns"
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 CHSH local bound", 1, chsh_local_bound),
        ("2 Werner threshold", 5, werner_threshold),
        ("3 Tsirelson point", 1, tsirelson_point),
        ("4 Bilocality threshold", 30, bilocal_threshold),
        ("5 Covariance forces locality", 60, covariance_locality),
        ("6 Detection model", 30, detection_model),
        ("7 One-bit measurement dependence", 60, one_bit_dependence),
        ("8 Randomness expansion", 5, randomness_expansion),
        ("9 Property suites", 120, property_suites),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let within = elapsed <= Duration::from_secs(budget);
        let (status, detail) = match (&result, within) {
            (Ok(msg), true) => ("PASS", msg.clone()),
            (Ok(msg), false) => ("FAIL", format!("{msg}; over the {budget} s budget")),
            (Err(msg), _) => ("FAIL", msg.clone()),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!(
            "{status} criterion {name} [{:.2} s / {budget} s]: {detail}",
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 9 acceptance criteria passed");
}
