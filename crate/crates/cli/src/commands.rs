use std::sync::Arc;

use nonlocal::dynamics::swap_unitary;
use nonlocal::hilbert::{apply_local, CompositeSpace, Site, StateVector, SubsystemSpec};
use nonlocal::nosignal::{run_scenarios, write_sweep_csv, Model, ScenarioReport, SweepRow};
use nonlocal::protocol::{
    drive_rotation_fidelity, estimate_phase, outcome_distribution, prepare_superposition, sample_counts, wrap_phase,
    BlochAxis, MeasurementSetting, OutcomeDistribution,
};
use nonlocal::PROPAGATION_TOL;
use serde::Serialize;

use crate::config::{CausalityConfig, CorrelationsConfig, EstimateConfig, NosignalConfig, RotationConfig};
use crate::{CliError, Format};

/// Rendered output plus an optional invariant failure. The output is still
/// written when the check fails so the numbers can be inspected.
pub struct Outcome {
    pub text: String,
    pub violation: Option<String>,
}

impl Outcome {
    fn ok(text: String) -> Self {
        Outcome { text, violation: None }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(nonlocal::Error::from)?;
    s.push('\n');
    Ok(s)
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(nonlocal::Error::from)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Atoms after the boson has been swapped in at both sites.
fn swapped_state(phi: f64) -> nonlocal::Result<StateVector> {
    let space = Arc::new(CompositeSpace::new(vec![
        SubsystemSpec::mode("boson_A", 2, Site::A),
        SubsystemSpec::two_level("atom_A", Site::A),
        SubsystemSpec::mode("boson_B", 2, Site::B),
        SubsystemSpec::two_level("atom_B", Site::B),
    ])?);
    let psi = prepare_superposition(space.clone(), "boson_A", "boson_B", phi, &[])?;
    let psi = apply_local(&psi, &swap_unitary(&space, "boson_A", "atom_A")?)?;
    apply_local(&psi, &swap_unitary(&space, "boson_B", "atom_B")?)
}

fn pair_distribution(psi: &StateVector, a: BlochAxis, b: BlochAxis) -> nonlocal::Result<OutcomeDistribution> {
    outcome_distribution(psi, &[MeasurementSetting::new("atom_A", a), MeasurementSetting::new("atom_B", b)])
}

#[derive(Serialize)]
struct CorrelationRow {
    #[serde(rename = "setting_A")]
    setting_a: String,
    #[serde(rename = "setting_B")]
    setting_b: String,
    #[serde(rename = "outcome_A")]
    outcome_a: i8,
    #[serde(rename = "outcome_B")]
    outcome_b: i8,
    count: u64,
    frequency: f64,
    probability: f64,
}

#[derive(Serialize)]
struct CorrelationReport<'a> {
    phi: f64,
    shots: u64,
    seed: u64,
    rows: &'a [CorrelationRow],
}

pub fn correlations(cfg: &CorrelationsConfig, format: Format) -> Result<Outcome, CliError> {
    let psi = swapped_state(cfg.phi)?;
    let dist = pair_distribution(&psi, cfg.settings[0], cfg.settings[1])?;
    let counts = sample_counts(&dist, cfg.shots, cfg.seed)?;
    let freqs = counts.frequencies();
    let rows: Vec<CorrelationRow> = dist
        .iter()
        .zip(counts.iter())
        .zip(freqs)
        .map(|(((outcome, p), (_, n)), f)| CorrelationRow {
            setting_a: cfg.settings[0].to_string(),
            setting_b: cfg.settings[1].to_string(),
            outcome_a: outcome[0],
            outcome_b: outcome[1],
            count: n,
            frequency: f,
            probability: p,
        })
        .collect();

    let mut violation = None;
    for target in ["atom_A", "atom_B"] {
        let m = dist.marginal(target)?;
        let dev = (m.probabilities()[0] - 0.5).abs();
        if dev > PROPAGATION_TOL {
            violation = Some(format!("marginal at {target} deviates from 1/2 by {dev:e}"));
        }
    }
    let text = match format {
        Format::Csv => to_csv(&rows)?,
        Format::Json => to_json(&CorrelationReport { phi: cfg.phi, shots: cfg.shots, seed: cfg.seed, rows: &rows })?,
    };
    Ok(Outcome { text, violation })
}

#[derive(Serialize)]
struct EstimateRow {
    phi: f64,
    phi_hat: f64,
    error: f64,
    shots: Option<u64>,
    seed_xx: Option<u64>,
    seed_xy: Option<u64>,
}

/// Grid point `k` samples its x⊗x table with `seed + 2k` and its x⊗y table
/// with `seed + 2k + 1`.
pub fn estimate(cfg: &EstimateConfig, format: Format) -> Result<Outcome, CliError> {
    let mut rows = Vec::new();
    for (k, phi) in cfg.phi.values().into_iter().enumerate() {
        let psi = swapped_state(phi)?;
        let xx = pair_distribution(&psi, BlochAxis::X, BlochAxis::X)?;
        let xy = pair_distribution(&psi, BlochAxis::X, BlochAxis::Y)?;
        let (phi_hat, seeds) = match cfg.shots {
            None => (estimate_phase(&xx, &xy)?, None),
            Some(shots) => {
                let s_xx = cfg.seed.wrapping_add(2 * k as u64);
                let s_xy = s_xx.wrapping_add(1);
                let cx = sample_counts(&xx, shots, s_xx)?;
                let cy = sample_counts(&xy, shots, s_xy)?;
                (estimate_phase(&cx, &cy)?, Some((s_xx, s_xy)))
            }
        };
        rows.push(EstimateRow {
            phi,
            phi_hat,
            error: wrap_phase(phi_hat - phi).abs(),
            shots: cfg.shots,
            seed_xx: seeds.map(|s| s.0),
            seed_xy: seeds.map(|s| s.1),
        });
    }
    Ok(Outcome::ok(match format {
        Format::Csv => to_csv(&rows)?,
        Format::Json => to_json(&rows)?,
    }))
}

/// Kick-invariance claims that hold for every parameter choice.
fn nosignal_violations(reports: &[ScenarioReport]) -> Option<String> {
    let mut problems = Vec::new();
    for (i, r) in reports.iter().enumerate() {
        if r.tv_marginal_a > PROPAGATION_TOL || r.tv_marginal_b > PROPAGATION_TOL {
            problems.push(format!(
                "scenario {i}: marginal changed (A {:e}, B {:e})",
                r.tv_marginal_a, r.tv_marginal_b
            ));
        }
        let c = &r.config;
        let compensated = match c.model {
            Model::ChargedFull => true,
            Model::Gravitational => c.clock_shift_enabled && c.clock_frequency.is_none_or(|w| w == c.charge),
            Model::Naive => false,
        };
        if compensated && r.tv_joint > PROPAGATION_TOL {
            problems.push(format!("scenario {i}: compensated model moved the joint statistics by {:e}", r.tv_joint));
        }
    }
    (!problems.is_empty()).then(|| problems.join("; "))
}

pub fn nosignal(cfg: &NosignalConfig, format: Format) -> Result<Outcome, CliError> {
    let reports = run_scenarios(&cfg.scenarios)?;
    let violation = nosignal_violations(&reports);
    let text = match format {
        Format::Json => to_json(&reports)?,
        Format::Csv => {
            let rows: Vec<SweepRow> = reports.iter().map(SweepRow::from).collect();
            let mut buf = Vec::new();
            write_sweep_csv(&rows, &mut buf)?;
            String::from_utf8(buf).expect("csv output is utf-8")
        }
    };
    Ok(Outcome { text, violation })
}

#[derive(Serialize)]
struct VerdictRow {
    allowed: bool,
    margin: f64,
    witness_x: Option<f64>,
    witness_t: Option<f64>,
    #[serde(rename = "spacelike_AB")]
    spacelike_ab: bool,
    #[serde(rename = "spacelike_AO")]
    spacelike_ao: bool,
    #[serde(rename = "spacelike_BO")]
    spacelike_bo: bool,
}

pub fn causality(cfg: &CausalityConfig, format: Format) -> Result<Outcome, CliError> {
    let v = cfg.verdict();
    let text = match format {
        Format::Json => to_json(&v)?,
        Format::Csv => to_csv(&[VerdictRow {
            allowed: v.allowed,
            margin: v.margin,
            witness_x: v.witness.map(|w| w.x),
            witness_t: v.witness.map(|w| w.t),
            spacelike_ab: v.spacelike.a_b,
            spacelike_ao: v.spacelike.a_o,
            spacelike_bo: v.spacelike.b_o,
        }])?,
    };
    Ok(Outcome::ok(text))
}

#[derive(Serialize)]
struct FidelityRow {
    alpha_re: f64,
    alpha_im: f64,
    alpha_abs: f64,
    truncation: usize,
    coupling: f64,
    duration: f64,
    pulse_area: f64,
    fidelity: f64,
    deficit: f64,
    truncation_deficit: f64,
    truncation_warning: bool,
}

pub fn rotation_fidelity(cfg: &RotationConfig, format: Format) -> Result<Outcome, CliError> {
    let mut rows = Vec::new();
    for a in &cfg.alphas {
        let alpha = a.value();
        let t = cfg.duration(alpha);
        // Truncation warnings are logged by the library.
        let f = drive_rotation_fidelity(alpha, cfg.truncation, cfg.coupling, t)?;
        rows.push(FidelityRow {
            alpha_re: alpha.re,
            alpha_im: alpha.im,
            alpha_abs: alpha.norm(),
            truncation: cfg.truncation,
            coupling: cfg.coupling,
            duration: t,
            pulse_area: alpha.norm() * cfg.coupling * t,
            fidelity: f.fidelity,
            deficit: f.deficit(),
            truncation_deficit: f.truncation_deficit,
            truncation_warning: f.truncation_warning,
        });
    }
    Ok(Outcome::ok(match format {
        Format::Csv => to_csv(&rows)?,
        Format::Json => to_json(&rows)?,
    }))
}
