//! Kick vs no-kick experiments on the delocalized boson.
//!
//! Each scenario runs the same read-out pipeline twice, once with a phase
//! kick of strength `chi` on site `B` and once without, and reports how far
//! the joint and per-site outcome distributions moved. Three models:
//!
//! * `naive`: ideal rotations, no drive fields. The kick moves the relative
//!   phase of the boson and the joint statistics follow it.
//! * `charged_full`: the rotations are Jaynes–Cummings pulses from coherent
//!   drive cavities whose quanta carry the boson's charge, so the kick also
//!   rotates the drive at `B`. The joint statistics do not move.
//! * `gravitational`: the kick is a potential step acting on the boson's
//!   mass; with the clock shift enabled the local oscillator at `B` picks up
//!   the matching phase `ω₀ χ`.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use crate::dynamics::{phase_kick, swap_unitary, KickSpec};
use crate::hilbert::{apply_local, coherent_state, CompositeSpace, Factor, Site, StateVector, SubsystemSpec};
use crate::protocol::{
    coherent_drive_rotation, drive_truncation_ok, measurement_rotation, outcome_distribution, prepare_superposition,
    sample_counts, wrap_phase, BlochAxis, CountsTable, DrivePulse, MeasurementSetting, OutcomeDistribution,
};
use crate::{Error, Result, C64};

pub const BOSON_A: &str = "boson_A";
pub const BOSON_B: &str = "boson_B";
pub const ATOM_A: &str = "atom_A";
pub const ATOM_B: &str = "atom_B";
pub const DRIVE_A: &str = "drive_A";
pub const DRIVE_B: &str = "drive_B";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Naive,
    ChargedFull,
    Gravitational,
}

impl Model {
    pub fn name(&self) -> &'static str {
        match self {
            Model::Naive => "naive",
            Model::ChargedFull => "charged_full",
            Model::Gravitational => "gravitational",
        }
    }
}

/// Coherent drive cavities used by the `charged_full` model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveConfig {
    /// `|α|` at sites A and B.
    pub amplitude: [f64; 2],
    pub truncation: usize,
    #[serde(default = "default_coupling")]
    pub coupling: f64,
    /// `arg α` per site; derived from the measurement settings when absent.
    #[serde(default)]
    pub phase: Option<[f64; 2]>,
    /// Pulse duration per site; derived from the settings when absent.
    #[serde(default)]
    pub duration: Option<[f64; 2]>,
}

fn default_coupling() -> f64 {
    1.0
}

fn default_charge() -> f64 {
    -1.0
}

fn default_shots() -> u64 {
    10_000
}

fn default_settings() -> [BlochAxis; 2] {
    [BlochAxis::X, BlochAxis::X]
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AxisInput {
    Named(String),
    Angles {
        theta: f64,
        phi: f64,
    },
}

impl AxisInput {
    fn into_axis(self) -> std::result::Result<BlochAxis, String> {
        match self {
            AxisInput::Named(n) => match n.as_str() {
                "x" => Ok(BlochAxis::X),
                "y" => Ok(BlochAxis::Y),
                "z" => Ok(BlochAxis::Z),
                other => Err(format!("unknown axis name `{other}` (expected x, y or z)")),
            },
            AxisInput::Angles { theta, phi } => BlochAxis::new(theta, phi).map_err(|e| e.to_string()),
        }
    }
}

/// Reads a Bloch axis given either as `"x" | "y" | "z"` or `{theta, phi}`.
pub fn deserialize_axis<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BlochAxis, D::Error> {
    AxisInput::deserialize(d)?.into_axis().map_err(serde::de::Error::custom)
}

fn deserialize_axis_pair<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<[BlochAxis; 2], D::Error> {
    let [a, b] = <[AxisInput; 2]>::deserialize(d)?;
    Ok([
        a.into_axis().map_err(serde::de::Error::custom)?,
        b.into_axis().map_err(serde::de::Error::custom)?,
    ])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: Model,
    /// Initial relative phase of the boson.
    #[serde(default)]
    pub phi: f64,
    /// Kick strength: time-integrated potential per unit charge (or per unit
    /// mass in the gravitational model).
    pub chi: f64,
    /// Boson charge `q`, or its mass `m` in the gravitational model.
    #[serde(default = "default_charge")]
    pub charge: f64,
    #[serde(default)]
    pub drive: Option<DriveConfig>,
    /// Measurement axes at sites A and B.
    #[serde(default = "default_settings", deserialize_with = "deserialize_axis_pair")]
    pub settings: [BlochAxis; 2],
    #[serde(default = "default_shots")]
    pub shots: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub clock_shift_enabled: bool,
    /// Local-oscillator frequency `ω₀` at B; defaults to the boson mass.
    #[serde(default)]
    pub clock_frequency: Option<f64>,
    /// Apply the kick after the swap instead of before it.
    #[serde(default)]
    pub kick_after_swap: bool,
}

impl ScenarioConfig {
    /// Minimal config for `model` with x⊗x settings.
    pub fn new(model: Model, phi: f64, chi: f64) -> Self {
        ScenarioConfig {
            model,
            phi,
            chi,
            charge: default_charge(),
            drive: None,
            settings: default_settings(),
            shots: default_shots(),
            seed: 0,
            clock_shift_enabled: false,
            clock_frequency: None,
            kick_after_swap: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        for (name, v) in [("phi", self.phi), ("chi", self.chi), ("charge", self.charge)] {
            if !v.is_finite() {
                return bad(format!("`{name}` must be finite"));
            }
        }
        if self.shots == 0 {
            return bad("`shots` must be at least 1".into());
        }
        match (self.model, &self.drive) {
            (Model::ChargedFull, None) => return bad("charged_full needs a `drive` section".into()),
            (Model::ChargedFull, Some(d)) => {
                if d.truncation < 2 {
                    return bad("drive truncation must be >= 2".into());
                }
                if !(d.coupling > 0.0) || !d.coupling.is_finite() {
                    return bad("drive coupling must be positive".into());
                }
                for (site, &a) in ["A", "B"].iter().zip(&d.amplitude) {
                    if !(a > 0.0) || !a.is_finite() {
                        return bad(format!("drive amplitude at {site} must be positive"));
                    }
                    if !drive_truncation_ok(a, d.truncation) {
                        log::warn!("drive at {site}: |alpha| = {a} is close to truncation {}", d.truncation);
                    }
                }
            }
            (_, Some(_)) => return bad(format!("`drive` is only used by charged_full, not {}", self.model.name())),
            _ => {}
        }
        if self.model != Model::Gravitational && (self.clock_shift_enabled || self.clock_frequency.is_some()) {
            return bad("clock shift settings only apply to the gravitational model".into());
        }
        if let Some(w) = self.clock_frequency {
            if !w.is_finite() {
                return bad("`clock_frequency` must be finite".into());
            }
        }
        Ok(())
    }

    fn measurement_settings(&self) -> Vec<MeasurementSetting> {
        vec![
            MeasurementSetting::new(ATOM_A, self.settings[0]),
            MeasurementSetting::new(ATOM_B, self.settings[1]),
        ]
    }

    fn space(&self) -> Result<Arc<CompositeSpace>> {
        let q = self.charge;
        let mut subs = vec![
            SubsystemSpec::mode(BOSON_A, 2, Site::A).with_charge(q),
            SubsystemSpec::two_level(ATOM_A, Site::A).with_charge(q),
        ];
        if let (Model::ChargedFull, Some(d)) = (self.model, &self.drive) {
            subs.push(SubsystemSpec::mode(DRIVE_A, d.truncation, Site::A).with_charge(q));
        }
        subs.push(SubsystemSpec::mode(BOSON_B, 2, Site::B).with_charge(q));
        subs.push(SubsystemSpec::two_level(ATOM_B, Site::B).with_charge(q));
        if let (Model::ChargedFull, Some(d)) = (self.model, &self.drive) {
            subs.push(SubsystemSpec::mode(DRIVE_B, d.truncation, Site::B).with_charge(q));
        }
        Ok(Arc::new(CompositeSpace::new(subs)?))
    }

    fn pulses(&self) -> Result<Option<[DrivePulse; 2]>> {
        let Some(d) = &self.drive else { return Ok(None) };
        let mut out = [
            DrivePulse::for_axis(self.settings[0], d.amplitude[0], d.coupling)?,
            DrivePulse::for_axis(self.settings[1], d.amplitude[1], d.coupling)?,
        ];
        for (k, p) in out.iter_mut().enumerate() {
            if let Some(phase) = d.phase {
                p.alpha = C64::from_polar(d.amplitude[k], phase[k]);
            }
            if let Some(duration) = d.duration {
                p.duration = duration[k];
            }
        }
        Ok(Some(out))
    }
}

/// One pass of the pipeline for a given kick strength.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRecord {
    pub chi: f64,
    pub distribution: OutcomeDistribution,
    pub counts: CountsTable,
    #[serde(rename = "marginal_A")]
    pub marginal_a: OutcomeDistribution,
    #[serde(rename = "marginal_B")]
    pub marginal_b: OutcomeDistribution,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub config: ScenarioConfig,
    pub kicked: RunRecord,
    pub baseline: RunRecord,
    pub tv_joint: f64,
    #[serde(rename = "tv_marginal_A")]
    pub tv_marginal_a: f64,
    #[serde(rename = "tv_marginal_B")]
    pub tv_marginal_b: f64,
    /// TV distance between the two sampled frequency tables.
    pub tv_joint_sampled: f64,
    /// Largest coherent-state truncation deficit among the drive cavities.
    pub drive_truncation_deficit: Option<f64>,
}

/// `½ Σ |p_i - q_i|`.
pub fn tv_distance(p: &OutcomeDistribution, q: &OutcomeDistribution) -> Result<f64> {
    let same_targets = p.settings().len() == q.settings().len()
        && p.settings().iter().zip(q.settings()).all(|(a, b)| a.target == b.target);
    if !same_targets {
        return Err(Error::DimensionMismatch("distributions are over different outcome sets".into()));
    }
    let tv = 0.5 * p.probabilities().iter().zip(q.probabilities()).map(|(a, b)| (a - b).abs()).sum::<f64>();
    // Rounding can push disjoint supports a hair past 1.
    Ok(tv.min(1.0))
}

fn tv_counts(a: &CountsTable, b: &CountsTable) -> f64 {
    let (fa, fb) = (a.frequencies(), b.frequencies());
    0.5 * fa.iter().zip(&fb).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

struct Pipeline {
    config: ScenarioConfig,
    space: Arc<CompositeSpace>,
    pulses: Option<[DrivePulse; 2]>,
    background: Vec<Factor>,
    truncation_deficit: Option<f64>,
}

impl Pipeline {
    fn new(config: &ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let space = config.space()?;
        let pulses = config.pulses()?;
        let mut background = Vec::new();
        let mut truncation_deficit = None;
        if let (Some(p), Some(d)) = (&pulses, &config.drive) {
            let mut worst: f64 = 0.0;
            for (label, pulse) in [(DRIVE_A, p[0]), (DRIVE_B, p[1])] {
                let cs = coherent_state(pulse.alpha, d.truncation)?;
                worst = worst.max(cs.deficit);
                background.push(Factor::single(label, cs.amplitudes));
            }
            truncation_deficit = Some(worst);
        }
        Ok(Pipeline { config: config.clone(), space, pulses, background, truncation_deficit })
    }

    fn kick(&self, state: &StateVector, chi: f64) -> Result<StateVector> {
        apply_local(state, &phase_kick(&self.space, &KickSpec { chi, region: Site::B })?)
    }

    fn rotate(&self, state: StateVector, chi: f64) -> Result<StateVector> {
        let settings = self.config.measurement_settings();
        match self.config.model {
            Model::Naive => {
                let mut s = state;
                for setting in &settings {
                    s = apply_local(&s, &measurement_rotation(&self.space, setting)?)?;
                }
                Ok(s)
            }
            Model::Gravitational => {
                let mut s = apply_local(&state, &measurement_rotation(&self.space, &settings[0])?)?;
                // The local oscillator at B runs on B's shifted clock and
                // advances the drive phase arg α by ω₀·χ, which moves the
                // effective measurement azimuth by -ω₀·χ.
                let shift = if self.config.clock_shift_enabled {
                    self.config.clock_frequency.unwrap_or(self.config.charge) * chi
                } else {
                    0.0
                };
                let axis = settings[1].axis;
                let shifted = MeasurementSetting::new(
                    ATOM_B,
                    BlochAxis { theta: axis.theta, phi: wrap_phase(axis.phi - shift) },
                );
                s = apply_local(&s, &measurement_rotation(&self.space, &shifted)?)?;
                Ok(s)
            }
            Model::ChargedFull => {
                let pulses = self.pulses.as_ref().expect("validated: charged_full has drives");
                let g = self.config.drive.as_ref().map(|d| d.coupling).unwrap_or(1.0);
                let s = coherent_drive_rotation(&state, DRIVE_A, ATOM_A, g, pulses[0].duration)?;
                coherent_drive_rotation(&s, DRIVE_B, ATOM_B, g, pulses[1].duration)
            }
        }
    }

    fn run(&self, chi: f64) -> Result<OutcomeDistribution> {
        let mut state = prepare_superposition(self.space.clone(), BOSON_A, BOSON_B, self.config.phi, &self.background)?;
        if !self.config.kick_after_swap {
            state = self.kick(&state, chi)?;
        }
        state = apply_local(&state, &swap_unitary(&self.space, BOSON_A, ATOM_A)?)?;
        state = apply_local(&state, &swap_unitary(&self.space, BOSON_B, ATOM_B)?)?;
        if self.config.kick_after_swap {
            state = self.kick(&state, chi)?;
        }
        state = self.rotate(state, chi)?;
        let dist = outcome_distribution(&state, &[MeasurementSetting::z(ATOM_A), MeasurementSetting::z(ATOM_B)])?;
        Ok(dist.relabeled(self.config.measurement_settings()))
    }

    fn record(&self, chi: f64) -> Result<RunRecord> {
        let distribution = self.run(chi)?;
        let counts = sample_counts(&distribution, self.config.shots, self.config.seed)?;
        Ok(RunRecord {
            chi,
            marginal_a: distribution.marginal(ATOM_A)?,
            marginal_b: distribution.marginal(ATOM_B)?,
            distribution,
            counts,
        })
    }
}

/// Runs the pipeline with the configured kick and with no kick.
///
/// Both runs sample with the same seed, so identical distributions give
/// identical count tables.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioReport> {
    let pipeline = Pipeline::new(config)?;
    let kicked = pipeline.record(config.chi)?;
    let baseline = pipeline.record(0.0)?;
    Ok(ScenarioReport {
        config: config.clone(),
        tv_joint: tv_distance(&kicked.distribution, &baseline.distribution)?,
        tv_marginal_a: tv_distance(&kicked.marginal_a, &baseline.marginal_a)?,
        tv_marginal_b: tv_distance(&kicked.marginal_b, &baseline.marginal_b)?,
        tv_joint_sampled: tv_counts(&kicked.counts, &baseline.counts),
        drive_truncation_deficit: pipeline.truncation_deficit,
        kicked,
        baseline,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub model: Model,
    pub phi: f64,
    pub chi: f64,
    pub charge: f64,
    pub clock_shift_enabled: bool,
    pub clock_frequency: Option<f64>,
    pub kick_after_swap: bool,
    pub tv_joint: f64,
    #[serde(rename = "tv_marginal_A")]
    pub tv_marginal_a: f64,
    #[serde(rename = "tv_marginal_B")]
    pub tv_marginal_b: f64,
}

impl From<&ScenarioReport> for SweepRow {
    fn from(r: &ScenarioReport) -> Self {
        SweepRow {
            model: r.config.model,
            phi: r.config.phi,
            chi: r.config.chi,
            charge: r.config.charge,
            clock_shift_enabled: r.config.clock_shift_enabled,
            clock_frequency: r.config.clock_frequency,
            kick_after_swap: r.config.kick_after_swap,
            tv_joint: r.tv_joint,
            tv_marginal_a: r.tv_marginal_a,
            tv_marginal_b: r.tv_marginal_b,
        }
    }
}

/// Runs every config (in parallel) and returns the full reports in input
/// order.
pub fn run_scenarios(configs: &[ScenarioConfig]) -> Result<Vec<ScenarioReport>> {
    if configs.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one scenario".into()));
    }
    configs.par_iter().map(run_scenario).collect()
}

/// One `(model, χ, tv_joint)` row per config.
pub fn compensation_sweep(configs: &[ScenarioConfig]) -> Result<Vec<SweepRow>> {
    Ok(run_scenarios(configs)?.iter().map(SweepRow::from).collect())
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], writer: W) -> Result<()> {
    // Header written by hand so an empty table still has one.
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record([
        "model",
        "phi",
        "chi",
        "charge",
        "clock_shift_enabled",
        "clock_frequency",
        "kick_after_swap",
        "tv_joint",
        "tv_marginal_A",
        "tv_marginal_B",
    ])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;

    fn settings(a: &str, b: &str) -> Vec<MeasurementSetting> {
        vec![MeasurementSetting::x(a), MeasurementSetting::x(b)]
    }

    #[test]
    fn tv_distance_basics() {
        let p = OutcomeDistribution::new(vec![MeasurementSetting::x("a")], vec![0.5, 0.5]).unwrap();
        let q = OutcomeDistribution::new(vec![MeasurementSetting::x("a")], vec![0.75, 0.25]).unwrap();
        let r = OutcomeDistribution::new(vec![MeasurementSetting::x("a")], vec![0.0, 1.0]).unwrap();
        let s = OutcomeDistribution::new(vec![MeasurementSetting::x("a")], vec![1.0, 0.0]).unwrap();
        assert_eq!(tv_distance(&p, &p).unwrap(), 0.0);
        assert_eq!(tv_distance(&r, &s).unwrap(), 1.0);
        assert!((tv_distance(&p, &q).unwrap() - 0.25).abs() < 1e-15);
        let other = OutcomeDistribution::new(settings("a", "b"), vec![0.25; 4]).unwrap();
        assert!(tv_distance(&p, &other).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = ScenarioConfig::new(Model::ChargedFull, 0.0, PI);
        assert!(c.validate().is_err());
        c.drive = Some(DriveConfig { amplitude: [4.0, 4.0], truncation: 48, coupling: 1.0, phase: None, duration: None });
        assert!(c.validate().is_ok());
        let mut n = ScenarioConfig::new(Model::Naive, 0.0, PI);
        n.clock_shift_enabled = true;
        assert!(n.validate().is_err());
        n.clock_shift_enabled = false;
        n.shots = 0;
        assert!(n.validate().is_err());
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let ok: ScenarioConfig = serde_json::from_str(r#"{"model":"naive","chi":1.0,"settings":["x","y"]}"#).unwrap();
        assert_eq!(ok.settings, [BlochAxis::X, BlochAxis::Y]);
        assert!(serde_json::from_str::<ScenarioConfig>(r#"{"model":"naive","chi":1.0,"bogus":2}"#).is_err());
        assert!(serde_json::from_str::<ScenarioConfig>(r#"{"model":"naive","chi":1.0,"settings":["w","x"]}"#).is_err());
    }

    #[test]
    fn naive_x_measurement_distributions() {
        let r = run_scenario(&ScenarioConfig::new(Model::Naive, 0.0, PI)).unwrap();
        let base = r.baseline.distribution.probabilities();
        let kicked = r.kicked.distribution.probabilities();
        for (p, e) in base.iter().zip([0.5, 0.0, 0.0, 0.5]) {
            assert!((p - e).abs() < 1e-12);
        }
        for (p, e) in kicked.iter().zip([0.0, 0.5, 0.5, 0.0]) {
            assert!((p - e).abs() < 1e-12);
        }
    }

    #[test]
    fn sweep_csv_header() {
        let rows = compensation_sweep(&[ScenarioConfig::new(Model::Naive, 0.0, 0.0)]).unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("model,phi,chi,charge,clock_shift_enabled"));
        assert!(text.lines().nth(1).unwrap().starts_with("naive,0.0,0.0,-1.0,false,,false,0.0,"));
        assert!(compensation_sweep(&[]).is_err());
    }
}
