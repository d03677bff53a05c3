//! The single-boson experiments: preparation, swap read-out, rotations,
//! measurement statistics and phase estimation.
//!
//! Outcome convention: `+1` is the projector onto `|+n̂⟩`, the eigenvector of
//! `n̂·σ` whose Bloch vector is `n̂`. For the occupation (`z`) basis this is
//! the upper level. Joint outcomes are ordered with `+1` before `-1`, first
//! target most significant, so two sites give `(++, +-, -+, --)`.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{evolve, HamiltonianSpec};
use crate::hilbert::{
    apply_local, coherent_state, fidelity, partial_trace, CompositeSpace, Factor, LocalOperator, Site,
    StateVector, SubsystemSpec,
};
use crate::{Error, Result, C64, CONSTRUCTION_TOL, PROPAGATION_TOL};

/// Wraps an angle into `(-π, π]`.
pub fn wrap_phase(x: f64) -> f64 {
    let r = x - 2.0 * PI * ((x + PI) / (2.0 * PI)).floor();
    if r <= -PI {
        r + 2.0 * PI
    } else if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Direction on the Bloch sphere: polar angle from the upper level, azimuth
/// about it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlochAxis {
    pub theta: f64,
    pub phi: f64,
}

impl BlochAxis {
    pub const X: BlochAxis = BlochAxis { theta: FRAC_PI_2, phi: 0.0 };
    pub const Y: BlochAxis = BlochAxis { theta: FRAC_PI_2, phi: FRAC_PI_2 };
    pub const Z: BlochAxis = BlochAxis { theta: 0.0, phi: 0.0 };

    /// Validates `θ ∈ [0, π]` and wraps `φ` into `(-π, π]`.
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        if !(0.0..=PI).contains(&theta) || !phi.is_finite() {
            return Err(Error::InvalidArgument(format!("invalid Bloch axis (theta={theta}, phi={phi})")));
        }
        Ok(BlochAxis { theta, phi: wrap_phase(phi) })
    }

    pub fn unit_vector(&self) -> [f64; 3] {
        [self.theta.sin() * self.phi.cos(), self.theta.sin() * self.phi.sin(), self.theta.cos()]
    }

    /// `|+n̂⟩` in (lower, upper) order.
    pub fn plus_state(&self) -> [C64; 2] {
        let (s, c) = (self.theta / 2.0).sin_cos();
        [C64::from_polar(s, self.phi), C64::new(c, 0.0)]
    }

    /// `|-n̂⟩` in (lower, upper) order.
    pub fn minus_state(&self) -> [C64; 2] {
        let (s, c) = (self.theta / 2.0).sin_cos();
        [-C64::from_polar(c, self.phi), C64::new(s, 0.0)]
    }

    pub fn approx_eq(&self, other: &BlochAxis, tol: f64) -> bool {
        let (a, b) = (self.unit_vector(), other.unit_vector());
        a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= tol)
    }
}

impl fmt::Display for BlochAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, axis) in [("x", BlochAxis::X), ("y", BlochAxis::Y), ("z", BlochAxis::Z)] {
            if *self == axis {
                return f.write_str(name);
            }
        }
        write!(f, "theta={};phi={}", self.theta, self.phi)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSetting {
    pub target: String,
    pub axis: BlochAxis,
}

impl MeasurementSetting {
    pub fn new(target: impl Into<String>, axis: BlochAxis) -> Self {
        MeasurementSetting { target: target.into(), axis }
    }

    pub fn x(target: impl Into<String>) -> Self {
        Self::new(target, BlochAxis::X)
    }

    pub fn y(target: impl Into<String>) -> Self {
        Self::new(target, BlochAxis::Y)
    }

    pub fn z(target: impl Into<String>) -> Self {
        Self::new(target, BlochAxis::Z)
    }
}

fn outcome_tuple(index: usize, n: usize) -> Vec<i8> {
    (0..n).map(|k| if (index >> (n - 1 - k)) & 1 == 0 { 1 } else { -1 }).collect()
}

fn outcome_index(outcome: &[i8]) -> Result<usize> {
    outcome.iter().try_fold(0usize, |acc, &o| match o {
        1 => Ok(acc << 1),
        -1 => Ok((acc << 1) | 1),
        _ => Err(Error::InvalidArgument(format!("outcome {o} is not +1 or -1"))),
    })
}

/// Exact joint outcome probabilities for one setting per target.
#[derive(Clone, Debug, PartialEq)]
pub struct OutcomeDistribution {
    settings: Vec<MeasurementSetting>,
    probabilities: Vec<f64>,
}

#[derive(Serialize)]
struct OutcomeRow {
    outcome: Vec<i8>,
    probability: f64,
}

#[derive(Serialize)]
struct DistributionView<'a> {
    settings: &'a [MeasurementSetting],
    probabilities: Vec<OutcomeRow>,
}

impl Serialize for OutcomeDistribution {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        DistributionView {
            settings: &self.settings,
            probabilities: self
                .iter()
                .map(|(outcome, probability)| OutcomeRow { outcome, probability })
                .collect(),
        }
        .serialize(serializer)
    }
}

impl OutcomeDistribution {
    /// Wraps raw probabilities indexed in the joint-outcome order.
    pub fn new(settings: Vec<MeasurementSetting>, probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.len() != 1usize << settings.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} settings need {} probabilities, got {}",
                settings.len(),
                1usize << settings.len(),
                probabilities.len()
            )));
        }
        if probabilities.iter().any(|&p| !(p >= -CONSTRUCTION_TOL)) {
            return Err(Error::Invariant("negative probability".into()));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > PROPAGATION_TOL {
            return Err(Error::Invariant(format!("probabilities sum to {total}")));
        }
        Ok(OutcomeDistribution { settings, probabilities })
    }

    pub fn settings(&self) -> &[MeasurementSetting] {
        &self.settings
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    pub fn probability(&self, outcome: &[i8]) -> Result<f64> {
        if outcome.len() != self.settings.len() {
            return Err(Error::DimensionMismatch("outcome length differs from number of targets".into()));
        }
        Ok(self.probabilities[outcome_index(outcome)?])
    }

    pub fn iter(&self) -> impl Iterator<Item = (Vec<i8>, f64)> + '_ {
        let n = self.settings.len();
        self.probabilities.iter().enumerate().map(move |(i, &p)| (outcome_tuple(i, n), p))
    }

    /// Distribution of the outcome at a single target.
    pub fn marginal(&self, target: &str) -> Result<OutcomeDistribution> {
        let n = self.settings.len();
        let k = self
            .settings
            .iter()
            .position(|s| s.target == target)
            .ok_or_else(|| Error::UnknownLabel(target.to_string()))?;
        let mut p = vec![0.0; 2];
        for (i, &q) in self.probabilities.iter().enumerate() {
            p[(i >> (n - 1 - k)) & 1] += q;
        }
        Ok(OutcomeDistribution { settings: vec![self.settings[k].clone()], probabilities: p })
    }

    /// Same distribution reported under different settings labels.
    pub(crate) fn relabeled(mut self, settings: Vec<MeasurementSetting>) -> Self {
        debug_assert_eq!(settings.len(), self.settings.len());
        self.settings = settings;
        self
    }
}

/// Joint outcome counts from seeded sampling.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CountsTable {
    pub settings: Vec<MeasurementSetting>,
    pub shots: u64,
    pub counts: Vec<u64>,
    pub seed: u64,
}

impl CountsTable {
    pub fn count(&self, outcome: &[i8]) -> Result<u64> {
        Ok(self.counts[outcome_index(outcome)?])
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 / self.shots as f64).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Vec<i8>, u64)> + '_ {
        let n = self.settings.len();
        self.counts.iter().enumerate().map(move |(i, &c)| (outcome_tuple(i, n), c))
    }

    /// Writes `setting_A,setting_B,outcome_A,outcome_B,count` rows for a
    /// two-site table.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        if self.settings.len() != 2 {
            return Err(Error::InvalidArgument("CSV export needs exactly two sites".into()));
        }
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["setting_A", "setting_B", "outcome_A", "outcome_B", "count"])?;
        let (sa, sb) = (self.settings[0].axis.to_string(), self.settings[1].axis.to_string());
        for (outcome, count) in self.iter() {
            w.write_record([
                sa.clone(),
                sb.clone(),
                outcome[0].to_string(),
                outcome[1].to_string(),
                count.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Two-site statistics that can feed [`estimate_phase`].
pub trait JointStatistics {
    fn settings(&self) -> &[MeasurementSetting];
    /// `P(++) + P(--)`.
    fn same_outcome_fraction(&self) -> Result<f64>;
}

impl JointStatistics for OutcomeDistribution {
    fn settings(&self) -> &[MeasurementSetting] {
        &self.settings
    }

    fn same_outcome_fraction(&self) -> Result<f64> {
        if self.settings.len() != 2 {
            return Err(Error::InvalidArgument("need a two-site distribution".into()));
        }
        Ok(self.probabilities[0] + self.probabilities[3])
    }
}

impl JointStatistics for CountsTable {
    fn settings(&self) -> &[MeasurementSetting] {
        &self.settings
    }

    fn same_outcome_fraction(&self) -> Result<f64> {
        if self.settings.len() != 2 {
            return Err(Error::InvalidArgument("need a two-site table".into()));
        }
        if self.shots == 0 {
            return Err(Error::InvalidArgument("counts table has zero shots".into()));
        }
        Ok((self.counts[0] + self.counts[3]) as f64 / self.shots as f64)
    }
}

// ---------------------------------------------------------------------------
// State preparation

fn require_mode(space: &CompositeSpace, label: &str) -> Result<usize> {
    let s = space.subsystem(label)?;
    if !s.is_mode() {
        return Err(Error::KindMismatch { label: label.to_string(), expected: "a bosonic mode" });
    }
    Ok(s.dim())
}

fn require_two_level(space: &CompositeSpace, label: &str) -> Result<()> {
    if !space.subsystem(label)?.is_two_level() {
        return Err(Error::KindMismatch { label: label.to_string(), expected: "a two-level system" });
    }
    Ok(())
}

/// `(|1⟩_A|0⟩_B + e^{iφ}|0⟩_A|1⟩_B)/√2` as a factor over the two modes.
pub fn superposition_factor(space: &CompositeSpace, mode_a: &str, mode_b: &str, phi: f64) -> Result<Factor> {
    let da = require_mode(space, mode_a)?;
    let db = require_mode(space, mode_b)?;
    if mode_a == mode_b {
        return Err(Error::DuplicateLabel(mode_a.to_string()));
    }
    let mut amps = vec![C64::new(0.0, 0.0); da * db];
    amps[db] = C64::new(FRAC_1_SQRT_2, 0.0);
    amps[1] = C64::from_polar(FRAC_1_SQRT_2, phi);
    Ok(Factor::new([mode_a, mode_b], amps))
}

/// Fills every subsystem not covered by `factors` with its ground level.
fn complete_with_ground(space: &CompositeSpace, mut factors: Vec<Factor>) -> Vec<Factor> {
    for s in space.subsystems() {
        if !factors.iter().any(|f| f.labels.contains(&s.label)) {
            factors.push(Factor::basis(s.label.clone(), 0, s.dim()));
        }
    }
    factors
}

/// The delocalized single boson, tensored with `background` factors. Any
/// subsystem left uncovered starts in level 0.
pub fn prepare_superposition(
    space: Arc<CompositeSpace>,
    mode_a: &str,
    mode_b: &str,
    phi: f64,
    background: &[Factor],
) -> Result<StateVector> {
    let mut factors = vec![superposition_factor(&space, mode_a, mode_b, phi)?];
    factors.extend_from_slice(background);
    let factors = complete_with_ground(&space, factors);
    StateVector::from_factors(space, &factors)
}

/// `(|↑↓⟩ - |↓↑⟩)/√2` on two two-level systems; the rest in level 0.
pub fn epr_singlet(space: Arc<CompositeSpace>, spin_a: &str, spin_b: &str) -> Result<StateVector> {
    require_two_level(&space, spin_a)?;
    require_two_level(&space, spin_b)?;
    if spin_a == spin_b {
        return Err(Error::DuplicateLabel(spin_a.to_string()));
    }
    let z = C64::new(0.0, 0.0);
    // Local index 2·a + b with 1 = ↑.
    let amps = vec![z, C64::new(-FRAC_1_SQRT_2, 0.0), C64::new(FRAC_1_SQRT_2, 0.0), z];
    let factors = complete_with_ground(&space, vec![Factor::new([spin_a, spin_b], amps)]);
    StateVector::from_factors(space, &factors)
}

// ---------------------------------------------------------------------------
// Rotations and measurement

/// `exp(-i·angle·(n̂·σ)/2)` on a two-level system, in (lower, upper) order.
pub fn ideal_rotation(space: &CompositeSpace, target: &str, axis: BlochAxis, angle: f64) -> Result<LocalOperator> {
    require_two_level(space, target)?;
    let [nx, ny, nz] = axis.unit_vector();
    let (s, c) = (angle / 2.0).sin_cos();
    let i_s = C64::new(0.0, -s);
    // n̂·σ with σ_z = diag(-1, 1) in (lower, upper) order.
    let n_sigma = [
        [C64::new(-nz, 0.0), C64::new(nx, ny)],
        [C64::new(nx, -ny), C64::new(nz, 0.0)],
    ];
    let m = DMatrix::from_fn(2, 2, |i, j| {
        let id = if i == j { C64::new(c, 0.0) } else { C64::new(0.0, 0.0) };
        id + i_s * n_sigma[i][j]
    });
    LocalOperator::unitary(space, &[target], m)
}

/// Equatorial rotation taking `|+n̂⟩` to the upper level (up to phase).
///
/// The rotation axis is `ẑ × n̂`-aligned with azimuth `φ - π/2` and the angle
/// is `θ`, which is the form a resonant drive can produce.
pub fn measurement_rotation(space: &CompositeSpace, setting: &MeasurementSetting) -> Result<LocalOperator> {
    let axis = BlochAxis { theta: FRAC_PI_2, phi: wrap_phase(setting.axis.phi - FRAC_PI_2) };
    ideal_rotation(space, &setting.target, axis, setting.axis.theta)
}

/// `|upper⟩⟨+n̂| + |lower⟩⟨-n̂|`.
fn basis_change(space: &CompositeSpace, setting: &MeasurementSetting) -> Result<LocalOperator> {
    let plus = setting.axis.plus_state();
    let minus = setting.axis.minus_state();
    let m = DMatrix::from_fn(2, 2, |i, j| if i == 1 { plus[j].conj() } else { minus[j].conj() });
    LocalOperator::unitary(space, &[setting.target.as_str()], m)
}

/// Born-rule joint distribution of projective measurements along the given
/// axes, one per two-level target.
pub fn outcome_distribution(state: &StateVector, settings: &[MeasurementSetting]) -> Result<OutcomeDistribution> {
    let space = state.space();
    if settings.is_empty() {
        return Err(Error::InvalidArgument("need at least one measurement setting".into()));
    }
    for (i, s) in settings.iter().enumerate() {
        require_two_level(space, &s.target)?;
        if settings[..i].iter().any(|o| o.target == s.target) {
            return Err(Error::DuplicateLabel(s.target.clone()));
        }
    }
    let mut rotated = state.clone();
    for s in settings {
        rotated = apply_local(&rotated, &basis_change(space, s)?)?;
    }
    let positions: Vec<usize> = settings.iter().map(|s| space.position(&s.target)).collect::<Result<_>>()?;
    let n = settings.len();
    let mut probs = vec![0.0; 1 << n];
    for (i, a) in rotated.amplitudes().iter().enumerate() {
        let mut k = 0;
        for &p in &positions {
            k = (k << 1) | (1 - space.digit(i, p));
        }
        probs[k] += a.norm_sqr();
    }
    OutcomeDistribution::new(settings.to_vec(), probs)
}

// ---------------------------------------------------------------------------
// Sampling

/// Shots handled by one sampling shard.
pub const SHARD_SHOTS: u64 = 1 << 16;

/// Uniform draws for shots `start..start + len` of the stream keyed by
/// `seed`.
///
/// The stream is ChaCha20 keyed by `seed_from_u64(seed)`; shot `k` consumes
/// the 64-bit word at word position `2k`, and the top 53 bits become a
/// uniform in `[0, 1)`. Any shot is reachable without generating the ones
/// before it.
fn shot_uniforms(seed: u64, start: u64, len: u64) -> impl Iterator<Item = f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_word_pos(2 * start as u128);
    (0..len).map(move |_| (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64))
}

fn sample_range(cdf: &[(usize, f64)], n: usize, seed: u64, start: u64, len: u64) -> Vec<u64> {
    let mut counts = vec![0u64; n];
    let last = cdf.last().map(|&(i, _)| i).unwrap_or(0);
    for u in shot_uniforms(seed, start, len) {
        let idx = cdf.iter().find(|&&(_, c)| u < c).map(|&(i, _)| i).unwrap_or(last);
        counts[idx] += 1;
    }
    counts
}

/// Multinomial sample of `shots` joint outcomes.
pub fn sample_counts(dist: &OutcomeDistribution, shots: u64, seed: u64) -> Result<CountsTable> {
    sample_counts_sharded(dist, shots, seed, SHARD_SHOTS)
}

/// Same as [`sample_counts`] with an explicit shard size; the result does not
/// depend on `shard`.
pub fn sample_counts_sharded(dist: &OutcomeDistribution, shots: u64, seed: u64, shard: u64) -> Result<CountsTable> {
    if shots == 0 {
        return Err(Error::InvalidArgument("shots must be at least 1".into()));
    }
    if shard == 0 {
        return Err(Error::InvalidArgument("shard size must be at least 1".into()));
    }
    let mut cdf = Vec::new();
    let mut acc = 0.0;
    for (i, &p) in dist.probabilities().iter().enumerate() {
        if p > 0.0 {
            acc += p;
            cdf.push((i, acc));
        }
    }
    let n = dist.len();
    let shards: Vec<(u64, u64)> = (0..shots.div_ceil(shard))
        .map(|k| (k * shard, shard.min(shots - k * shard)))
        .collect();
    let partial: Vec<Vec<u64>> = shards
        .par_iter()
        .map(|&(start, len)| sample_range(&cdf, n, seed, start, len))
        .collect();
    let mut counts = vec![0u64; n];
    for p in partial {
        for (c, v) in counts.iter_mut().zip(p) {
            *c += v;
        }
    }
    Ok(CountsTable { settings: dist.settings().to_vec(), shots, counts, seed })
}

// ---------------------------------------------------------------------------
// Phase estimation

/// Coefficient linking the x⊗y same-outcome contrast to `sin φ`:
/// `sin φ = XY_SIN_COEFFICIENT · (2·P_same(x⊗y) - 1)`.
pub const XY_SIN_COEFFICIENT: f64 = -1.0;

const SETTING_TOL: f64 = 1e-9;

/// Estimates the relative phase of the swapped state from an x⊗x and an
/// x⊗y experiment: `atan2(ŝ, ĉ)` with `ĉ = 2 P_same(xx) - 1`.
pub fn estimate_phase<T: JointStatistics>(xx: &T, xy: &T) -> Result<f64> {
    let check = |stats: &T, b: BlochAxis, what: &str| -> Result<()> {
        let s = stats.settings();
        if s.len() != 2 || !s[0].axis.approx_eq(&BlochAxis::X, SETTING_TOL) || !s[1].axis.approx_eq(&b, SETTING_TOL) {
            return Err(Error::InvalidArgument(format!("{what} statistics must come from the {what} settings")));
        }
        Ok(())
    };
    check(xx, BlochAxis::X, "x⊗x")?;
    check(xy, BlochAxis::Y, "x⊗y")?;
    let c = 2.0 * xx.same_outcome_fraction()? - 1.0;
    let s = XY_SIN_COEFFICIENT * (2.0 * xy.same_outcome_fraction()? - 1.0);
    Ok(wrap_phase(s.atan2(c)))
}

// ---------------------------------------------------------------------------
// Coherent-drive rotations

/// Parameters of a resonant coherent-drive pulse.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DrivePulse {
    pub alpha: C64,
    pub coupling: f64,
    pub duration: f64,
}

impl DrivePulse {
    /// Pulse whose classical limit is [`measurement_rotation`] for `axis`:
    /// `arg α = π/2 - φ`, `2 g |α| t = θ`.
    pub fn for_axis(axis: BlochAxis, amplitude: f64, coupling: f64) -> Result<Self> {
        if !(amplitude > 0.0) || !(coupling > 0.0) || !amplitude.is_finite() || !coupling.is_finite() {
            return Err(Error::InvalidArgument("drive amplitude and coupling must be positive".into()));
        }
        Ok(DrivePulse {
            alpha: C64::from_polar(amplitude, FRAC_PI_2 - axis.phi),
            coupling,
            duration: axis.theta / (2.0 * coupling * amplitude),
        })
    }

    /// `|α| g t`.
    pub fn pulse_area(&self) -> f64 {
        self.alpha.norm() * self.coupling * self.duration
    }
}

/// Rule of thumb for an adequate truncation: `|α|² + 3|α| ≤ d`.
pub fn drive_truncation_ok(alpha_abs: f64, truncation: usize) -> bool {
    alpha_abs * alpha_abs + 3.0 * alpha_abs <= truncation as f64
}

/// Jaynes–Cummings evolution of `target` with the coherent drive held in
/// `drive_mode`, for a time `t`.
pub fn coherent_drive_rotation(
    state: &StateVector,
    drive_mode: &str,
    target: &str,
    coupling: f64,
    t: f64,
) -> Result<StateVector> {
    let space = state.space().clone();
    let d = require_mode(&space, drive_mode)?;
    require_two_level(&space, target)?;
    let n_hat = number_operator(&space, drive_mode)?;
    let mean = state.expectation(&n_hat)?;
    if !drive_truncation_ok(mean.sqrt(), d) {
        log::warn!("drive mode `{drive_mode}` with mean occupation {mean:.3} is close to truncation {d}");
    }
    let h = crate::dynamics::build_hamiltonian(
        &space,
        &HamiltonianSpec::JaynesCummings { mode: drive_mode.into(), two_level: target.into(), coupling },
    )?;
    evolve(state, &h, t)
}

/// `n̂` on a single mode.
pub fn number_operator(space: &CompositeSpace, mode: &str) -> Result<LocalOperator> {
    let d = require_mode(space, mode)?;
    let m = DMatrix::from_fn(d, d, |i, j| if i == j { C64::new(i as f64, 0.0) } else { C64::new(0.0, 0.0) });
    LocalOperator::hermitian(space, &[mode], m)
}

/// Classical-field limit of the drive acting on the lower level for time
/// `t`: `cos(|α|gt)|g⟩ + (α/(i|α|)) sin(|α|gt)|e⟩`, in (lower, upper) order.
pub fn classical_drive_target(alpha: C64, coupling: f64, t: f64) -> [C64; 2] {
    let r = alpha.norm();
    if r == 0.0 {
        return [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
    }
    let area = r * coupling * t;
    [C64::new(area.cos(), 0.0), alpha / (C64::i() * r) * area.sin()]
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DriveFidelity {
    pub alpha: C64,
    pub truncation: usize,
    pub coupling: f64,
    pub duration: f64,
    /// Reduced-state fidelity of the two-level system against
    /// [`classical_drive_target`].
    pub fidelity: f64,
    /// Coherent-state weight lost to truncation.
    pub truncation_deficit: f64,
    pub truncation_warning: bool,
}

impl DriveFidelity {
    pub fn deficit(&self) -> f64 {
        1.0 - self.fidelity
    }
}

/// Runs one drive mode and one two-level system starting in
/// `|α⟩|g⟩` and compares the reduced two-level state with the classical
/// limit.
pub fn drive_rotation_fidelity(alpha: C64, truncation: usize, coupling: f64, t: f64) -> Result<DriveFidelity> {
    let space = Arc::new(CompositeSpace::new(vec![
        SubsystemSpec::mode("drive", truncation, Site::Other),
        SubsystemSpec::two_level("atom", Site::Other),
    ])?);
    let cs = coherent_state(alpha, truncation)?;
    let warning = !drive_truncation_ok(alpha.norm(), truncation);
    if warning {
        log::warn!("|alpha| = {} needs more than {truncation} levels", alpha.norm());
    }
    let start = StateVector::from_factors(
        space.clone(),
        &[Factor::single("drive", cs.amplitudes.clone()), Factor::basis("atom", 0, 2)],
    )?;
    let out = coherent_drive_rotation(&start, "drive", "atom", coupling, t)?;
    let reduced = partial_trace(&out, &["atom"])?;
    let qubit = Arc::new(CompositeSpace::new(vec![SubsystemSpec::two_level("atom", Site::Other)])?);
    let target = StateVector::from_amplitudes(qubit, classical_drive_target(alpha, coupling, t).to_vec())?;
    Ok(DriveFidelity {
        alpha,
        truncation,
        coupling,
        duration: t,
        fidelity: fidelity(&target, &reduced)?,
        truncation_deficit: cs.deficit,
        truncation_warning: warning || cs.truncation_warning,
    })
}
