//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any of them fails.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};
use std::process::{Command, ExitCode};
use std::sync::Arc;

use nonlocal::causality::{jamming_allowed, SpacetimeRegion};
use nonlocal::dynamics::swap_unitary;
use nonlocal::hilbert::{apply_local, fidelity, CompositeSpace, Site, StateVector, SubsystemSpec};
use nonlocal::nosignal::{run_scenario, DriveConfig, Model, ScenarioConfig};
use nonlocal::protocol::{
    drive_rotation_fidelity, estimate_phase, outcome_distribution, prepare_superposition, sample_counts, wrap_phase,
    BlochAxis, MeasurementSetting,
};
use nonlocal::C64;
use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::TestRunner;

type Check = Result<String, String>;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn grid16() -> Vec<f64> {
    (-7..=8).map(|k| k as f64 * PI / 8.0).collect()
}

fn two_sites(d: usize) -> Arc<CompositeSpace> {
    Arc::new(
        CompositeSpace::new(vec![
            SubsystemSpec::mode("boson_A", d, Site::A),
            SubsystemSpec::two_level("atom_A", Site::A),
            SubsystemSpec::mode("boson_B", d, Site::B),
            SubsystemSpec::two_level("atom_B", Site::B),
        ])
        .unwrap(),
    )
}

fn swapped(phi: f64) -> StateVector {
    let space = two_sites(2);
    let psi = prepare_superposition(space.clone(), "boson_A", "boson_B", phi, &[]).unwrap();
    let psi = apply_local(&psi, &swap_unitary(&space, "boson_A", "atom_A").unwrap()).unwrap();
    apply_local(&psi, &swap_unitary(&space, "boson_B", "atom_B").unwrap()).unwrap()
}

fn atoms(a: BlochAxis, b: BlochAxis) -> Vec<MeasurementSetting> {
    vec![MeasurementSetting::new("atom_A", a), MeasurementSetting::new("atom_B", b)]
}

/// `(|↑↓⟩ + e^{iφ}|↓↑⟩)/√2` as four amplitudes indexed `2·a + b`, with the
/// upper level at index 1.
fn pair_oracle(phi: f64) -> [C64; 4] {
    let s = c(FRAC_1_SQRT_2, 0.0);
    [c(0.0, 0.0), C64::from_polar(FRAC_1_SQRT_2, phi), s, c(0.0, 0.0)]
}

/// Spin-½ eigenvector `[lower, upper]` of n̂·σ from the textbook formulas.
fn spin_half(theta: f64, phi: f64, plus: bool) -> [C64; 2] {
    let (s, co) = (theta / 2.0).sin_cos();
    if plus {
        [C64::from_polar(s, phi), c(co, 0.0)]
    } else {
        [-C64::from_polar(co, phi), c(s, 0.0)]
    }
}

/// Born probabilities over `(++, +-, -+, --)` from dense 4×4 projectors.
fn brute_force(psi: [C64; 4], a: (f64, f64), b: (f64, f64)) -> [f64; 4] {
    let mut out = [0.0; 4];
    let mut k = 0;
    for pa in [true, false] {
        for pb in [true, false] {
            let (u, v) = (spin_half(a.0, a.1, pa), spin_half(b.0, b.1, pb));
            let ket: Vec<C64> = (0..4).map(|i| u[i / 2] * v[i % 2]).collect();
            let mut p = [[c(0.0, 0.0); 4]; 4];
            for i in 0..4 {
                for j in 0..4 {
                    p[i][j] = ket[i] * ket[j].conj();
                }
            }
            let mut e = c(0.0, 0.0);
            for i in 0..4 {
                for j in 0..4 {
                    e += psi[i].conj() * p[i][j] * psi[j];
                }
            }
            out[k] = e.re;
            k += 1;
        }
    }
    out
}

fn swap_correctness() -> Check {
    let space = two_sites(3);
    let ua = swap_unitary(&space, "boson_A", "atom_A").map_err(|e| e.to_string())?;
    let ub = swap_unitary(&space, "boson_B", "atom_B").map_err(|e| e.to_string())?;
    let mut worst: f64 = 1.0;
    for k in 0..8 {
        let phi = k as f64 * PI / 4.0;
        let psi = prepare_superposition(space.clone(), "boson_A", "boson_B", phi, &[]).unwrap();
        let out = apply_local(&apply_local(&psi, &ua).unwrap(), &ub).unwrap();
        let pair = pair_oracle(phi);
        let mut amps = vec![c(0.0, 0.0); space.dim()];
        for qa in 0..2 {
            for qb in 0..2 {
                amps[space.encode(&[0, qa, 0, qb]).unwrap()] = pair[2 * qa + qb];
            }
        }
        let target = StateVector::from_amplitudes(space.clone(), amps).unwrap();
        worst = worst.min(fidelity(&out, &target).unwrap());
    }
    ensure(worst >= 1.0 - 1e-12, format!("min fidelity over kπ/4 = {worst:.16}"))
}

fn coincidence_law() -> Check {
    let x = (FRAC_PI_2, 0.0);
    let mut worst: f64 = 0.0;
    for phi in grid16().into_iter().chain((0..8).map(|k| k as f64 * PI / 4.0)) {
        let lib = outcome_distribution(&swapped(phi), &atoms(BlochAxis::X, BlochAxis::X)).unwrap();
        let oracle = brute_force(pair_oracle(phi), x, x);
        let (plus, minus) = ((1.0 + phi.cos()) / 4.0, (1.0 - phi.cos()) / 4.0);
        for (i, law) in [plus, minus, minus, plus].into_iter().enumerate() {
            worst = worst.max((lib.probabilities()[i] - law).abs());
            worst = worst.max((oracle[i] - law).abs());
        }
    }
    // The single-outcome form ¼|1 + e^{iφ}|² is twice the projector value.
    let squared_sum = 0.25 * (c(1.0, 0.0) + C64::from_polar(1.0, 0.0)).norm_sqr();
    let at_zero = outcome_distribution(&swapped(0.0), &atoms(BlochAxis::X, BlochAxis::X)).unwrap().probabilities()[0];
    ensure(
        worst <= 1e-12,
        format!("max deviation {worst:.2e}; P(++) at φ=0 is {at_zero} vs {squared_sum} from ¼|1+e^(iφ)|²"),
    )
}

fn phase_estimation() -> Check {
    let (mut exact, mut sampled): (f64, f64) = (0.0, 0.0);
    for (k, phi) in grid16().into_iter().enumerate() {
        let psi = swapped(phi);
        let xx = outcome_distribution(&psi, &atoms(BlochAxis::X, BlochAxis::X)).unwrap();
        let xy = outcome_distribution(&psi, &atoms(BlochAxis::X, BlochAxis::Y)).unwrap();
        exact = exact.max(wrap_phase(estimate_phase(&xx, &xy).unwrap() - phi).abs());
        let seed = 7_000 + k as u64;
        let cx = sample_counts(&xx, 100_000, seed).unwrap();
        let cy = sample_counts(&xy, 100_000, seed ^ 0x9e37_79b9).unwrap();
        sampled = sampled.max(wrap_phase(estimate_phase(&cx, &cy).unwrap() - phi).abs());
    }
    ensure(
        exact <= 1e-12 && sampled <= 0.05,
        format!("exact max error {exact:.2e}; sampled (1e5 shots) max error {sampled:.4}"),
    )
}

fn classical_drive_limit() -> Check {
    // Independent dense JC simulation, d = 128.
    let frozen = [0.8527676886752373, 0.9618802369699014, 0.9903887441647707];
    let mut f = Vec::new();
    for r in [2.0, 4.0, 8.0] {
        f.push(drive_rotation_fidelity(c(r, 0.0), 128, 1.0, FRAC_PI_2 / r).map_err(|e| e.to_string())?.fidelity);
    }
    let rising = f[0] < f[1] && f[1] < f[2];
    let agrees = f.iter().zip(frozen).all(|(a, b)| (a - b).abs() < 1e-9);
    ensure(
        f[2] >= 0.99 && rising && agrees,
        format!("fidelity at |α| = 2, 4, 8: {:.6}, {:.6}, {:.6}", f[0], f[1], f[2]),
    )
}

fn charged(chi: f64) -> ScenarioConfig {
    ScenarioConfig {
        drive: Some(DriveConfig { amplitude: [4.0; 2], truncation: 48, coupling: 1.0, phase: None, duration: None }),
        ..ScenarioConfig::new(Model::ChargedFull, 0.0, chi)
    }
}

fn gravitational(chi: f64, clock: Option<f64>) -> ScenarioConfig {
    ScenarioConfig {
        charge: 1.0,
        clock_shift_enabled: clock.is_some(),
        clock_frequency: clock,
        ..ScenarioConfig::new(Model::Gravitational, 0.0, chi)
    }
}

fn marginal_no_signaling() -> Check {
    let mut worst: f64 = 0.0;
    let mut runs = 0;
    for qchi in [0.0, FRAC_PI_2, PI] {
        // The default charge is -1, so χ = -qχ for the charged models.
        let base = [
            ScenarioConfig::new(Model::Naive, 0.0, -qchi),
            charged(-qchi),
            gravitational(qchi, None),
            gravitational(qchi, Some(1.0)),
        ];
        for cfg in base {
            for kick_after_swap in [false, true] {
                let r = run_scenario(&ScenarioConfig { kick_after_swap, ..cfg.clone() }).map_err(|e| e.to_string())?;
                worst = worst.max(r.tv_marginal_a).max(r.tv_marginal_b);
                runs += 1;
            }
        }
    }
    ensure(worst <= 1e-10, format!("max marginal TV {worst:.2e} over {runs} runs"))
}

fn apparent_signaling() -> Check {
    let r = run_scenario(&ScenarioConfig::new(Model::Naive, 0.0, -PI)).map_err(|e| e.to_string())?;
    ensure((r.tv_joint - 1.0).abs() <= 1e-10, format!("naive joint TV {}", r.tv_joint))
}

fn exact_compensation() -> Check {
    let pre = run_scenario(&charged(-PI)).map_err(|e| e.to_string())?.tv_joint;
    let post = run_scenario(&ScenarioConfig { kick_after_swap: true, ..charged(-PI) }).map_err(|e| e.to_string())?.tv_joint;
    ensure(pre <= 1e-10 && post <= 1e-10, format!("joint TV {pre:.2e} (kick before swap), {post:.2e} (after)"))
}

fn gravitational_compensation() -> Check {
    let tv = |cfg: ScenarioConfig| run_scenario(&cfg).map(|r| r.tv_joint).map_err(|e| e.to_string());
    let on = tv(gravitational(PI, Some(1.0)))?;
    let off = tv(gravitational(PI, None))?;
    let mut detuned = Vec::new();
    for eps in [0.1, 0.2, 0.4] {
        detuned.push(tv(gravitational(PI, Some(1.0 + eps)))?);
    }
    let rising = detuned[0] < detuned[1] && detuned[1] < detuned[2];
    ensure(
        on <= 1e-10 && (off - 1.0).abs() <= 1e-10 && rising,
        format!(
            "clock on {on:.2e}; clock off {off}; ε = 0.1, 0.2, 0.4 → {:.4}, {:.4}, {:.4}",
            detuned[0], detuned[1], detuned[2]
        ),
    )
}

fn region(x0: f64, x1: f64, t0: f64, t1: f64) -> SpacetimeRegion {
    SpacetimeRegion::new(x0, x1, t0, t1).unwrap()
}

fn floor(r: &SpacetimeRegion, x: f64) -> f64 {
    r.t_min + (r.x_min - x).max(x - r.x_max).max(0.0)
}

/// Containment checked on x ∈ [-50, 50] at step 0.001.
fn grid_allowed(a: &SpacetimeRegion, b: &SpacetimeRegion, o: &SpacetimeRegion) -> bool {
    (0..=100_000).all(|k| {
        let x = -50.0 + k as f64 * 1e-3;
        floor(a, x).max(floor(b, x)) >= floor(o, x) - 1e-12
    })
}

fn causality_criterion() -> Check {
    let a = region(-2.0, -1.0, 1.0, 1.5);
    let b = region(1.0, 2.0, 1.0, 1.5);
    let fig = jamming_allowed(&a, &b, &region(-0.2, 0.2, 0.0, 0.1)).allowed;

    let far = region(10.0, 10.2, 0.0, 0.1);
    let v = jamming_allowed(&a, &b, &far);
    let witness_ok = v.witness.is_some_and(|w| w.t >= floor(&a, w.x) && w.t >= floor(&b, w.x) && w.t < floor(&far, w.x));

    // Corners on the 0.25 lattice, so every breakpoint lies on the oracle grid.
    let lattice = (-40i32..40, 0i32..16, 0i32..40, 0i32..8)
        .prop_map(|(x, w, t, h)| region(x as f64 * 0.25, (x + w) as f64 * 0.25, t as f64 * 0.25, (t + h) as f64 * 0.25));
    let triples = (lattice.clone(), lattice.clone(), lattice);
    let mut runner = TestRunner::deterministic();
    let (mut agree, mut allowed) = (0, 0);
    for _ in 0..100 {
        let (a, b, o) = triples.new_tree(&mut runner).unwrap().current();
        let exact = jamming_allowed(&a, &b, &o).allowed;
        agree += usize::from(exact == grid_allowed(&a, &b, &o));
        allowed += usize::from(exact);
    }
    ensure(
        fig && !v.allowed && witness_ok && agree == 100,
        format!(
            "layout allowed: {fig}; displaced O allowed: {}, witness valid: {witness_ok}; grid agreement {agree}/100 ({allowed} allowed)",
            v.allowed
        ),
    )
}

fn reproducibility() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cases = [
        ("correlations", r#"{"phi": 0.7, "settings": ["x", "y"], "shots": 20000, "seed": 3}"#),
        ("estimate-phase", r#"{"phi": [0.3, -1.9, 2.8], "shots": 10000, "seed": 17}"#),
        (
            "nosignal",
            r#"{"scenarios": [{"model": "naive", "chi": -1.2, "seed": 5},
                              {"model": "charged_full", "chi": -3.141592653589793, "seed": 6,
                               "drive": {"amplitude": [4, 4], "truncation": 48}},
                              {"model": "gravitational", "charge": 1, "chi": 2.0, "clock_shift_enabled": true, "seed": 7}]}"#,
        ),
        (
            "causality",
            r#"{"A": {"x": [-2, -1], "t": [1, 1.5]}, "B": {"x": [1, 2], "t": [1, 1.5]}, "O": {"x": [10, 10.2], "t": [0, 0.1]}}"#,
        ),
        ("rotation-fidelity", r#"{"alphas": [2, 4, [0, 8]], "truncation": 128, "pulse_area": 1.5707963267948966}"#),
    ];
    let mut compared = 0;
    for (sub, body) in cases {
        let cfg = dir.path().join(format!("{sub}.json"));
        std::fs::write(&cfg, body).map_err(|e| e.to_string())?;
        for fmt in ["csv", "json"] {
            let mut outputs = Vec::new();
            for run in 0..2 {
                let out = dir.path().join(format!("{sub}-{fmt}-{run}"));
                let status = Command::new(env!("CARGO_BIN_EXE_nonlocal"))
                    .arg(sub)
                    .arg("--config")
                    .arg(&cfg)
                    .args(["--format", fmt, "--out"])
                    .arg(&out)
                    .status()
                    .map_err(|e| e.to_string())?;
                if !status.success() {
                    return Err(format!("{sub} --format {fmt} exited with {status}"));
                }
                outputs.push(std::fs::read(&out).map_err(|e| e.to_string())?);
            }
            if outputs[0].is_empty() || outputs[0] != outputs[1] {
                return Err(format!("{sub} --format {fmt}: outputs differ"));
            }
            compared += 1;
        }
    }
    Ok(format!("{compared} subcommand/format pairs byte-identical across reruns"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("swap correctness", swap_correctness),
        ("coincidence law", coincidence_law),
        ("phase estimation", phase_estimation),
        ("classical-drive limit", classical_drive_limit),
        ("marginal no-signaling", marginal_no_signaling),
        ("apparent signaling (naive)", apparent_signaling),
        ("exact compensation (charged_full)", exact_compensation),
        ("gravitational compensation", gravitational_compensation),
        ("causality criterion", causality_criterion),
        ("CLI reproducibility", reproducibility),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (tag, detail) = match check() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} [{tag}] {name}: {detail}", i + 1);
    }
    println!("{} of {} acceptance criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
