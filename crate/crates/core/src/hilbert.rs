//! Composite Hilbert spaces built from truncated bosonic modes and two-level
//! systems.
//!
//! Basis states are indexed in row-major mixed radix: the last listed
//! subsystem varies fastest. Two-level systems use level 0 for the lower
//! state (`|g⟩`, `|↓⟩`, `|p⟩`) and level 1 for the upper one (`|e⟩`, `|↑⟩`,
//! `|n⟩`).

use std::collections::HashSet;
use std::fmt;
use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::linalg::{hermiticity_defect, hermitian_map, unitarity_defect};
use crate::{Error, Result, C64, PROPAGATION_TOL};

/// Largest state-vector dimension accepted by [`CompositeSpace::new`].
pub const MAX_STATE_DIM: usize = 1 << 20;
/// Largest target-product dimension of a [`LocalOperator`].
pub const MAX_OPERATOR_DIM: usize = 4096;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsystemKind {
    /// Single bosonic mode keeping Fock levels `0..truncation`.
    BosonicMode { truncation: usize },
    TwoLevel,
}

impl SubsystemKind {
    pub fn dim(&self) -> usize {
        match *self {
            SubsystemKind::BosonicMode { truncation } => truncation,
            SubsystemKind::TwoLevel => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Site {
    A,
    B,
    Other,
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Site::A => f.write_str("A"),
            Site::B => f.write_str("B"),
            Site::Other => f.write_str("other"),
        }
    }
}

/// One tensor factor of a [`CompositeSpace`].
///
/// `charge` is the charge carried by one quantum of a bosonic mode, or the
/// charge of the upper level of a two-level system relative to the lower
/// one (which is charge 0).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsystemSpec {
    pub label: String,
    pub kind: SubsystemKind,
    pub site: Site,
    pub charge: f64,
}

impl SubsystemSpec {
    pub fn mode(label: impl Into<String>, truncation: usize, site: Site) -> Self {
        SubsystemSpec {
            label: label.into(),
            kind: SubsystemKind::BosonicMode { truncation },
            site,
            charge: 0.0,
        }
    }

    pub fn two_level(label: impl Into<String>, site: Site) -> Self {
        SubsystemSpec {
            label: label.into(),
            kind: SubsystemKind::TwoLevel,
            site,
            charge: 0.0,
        }
    }

    pub fn with_charge(mut self, charge: f64) -> Self {
        self.charge = charge;
        self
    }

    pub fn dim(&self) -> usize {
        self.kind.dim()
    }

    pub fn is_mode(&self) -> bool {
        matches!(self.kind, SubsystemKind::BosonicMode { .. })
    }

    pub fn is_two_level(&self) -> bool {
        matches!(self.kind, SubsystemKind::TwoLevel)
    }
}

/// Ordered tensor product of subsystems.
#[derive(Clone, Debug, PartialEq)]
pub struct CompositeSpace {
    subsystems: Vec<SubsystemSpec>,
    dims: Vec<usize>,
    strides: Vec<usize>,
    dim: usize,
}

impl CompositeSpace {
    pub fn new(subsystems: Vec<SubsystemSpec>) -> Result<Self> {
        if subsystems.is_empty() {
            return Err(Error::InvalidArgument("a space needs at least one subsystem".into()));
        }
        let mut seen = HashSet::new();
        for s in &subsystems {
            if !seen.insert(s.label.as_str()) {
                return Err(Error::DuplicateLabel(s.label.clone()));
            }
            if let SubsystemKind::BosonicMode { truncation } = s.kind {
                if truncation < 2 {
                    return Err(Error::InvalidArgument(format!(
                        "mode `{}` needs truncation >= 2, got {truncation}",
                        s.label
                    )));
                }
            }
            if !s.charge.is_finite() {
                return Err(Error::InvalidArgument(format!("charge of `{}` is not finite", s.label)));
            }
        }
        let dims: Vec<usize> = subsystems.iter().map(SubsystemSpec::dim).collect();
        let mut dim = 1usize;
        for &d in &dims {
            dim = dim.checked_mul(d).filter(|&v| v <= MAX_STATE_DIM).ok_or_else(|| {
                Error::InvalidArgument(format!("space dimension exceeds {MAX_STATE_DIM}"))
            })?;
        }
        let mut strides = vec![1usize; dims.len()];
        for i in (0..dims.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * dims[i + 1];
        }
        Ok(CompositeSpace { subsystems, dims, strides, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.subsystems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsystems.is_empty()
    }

    pub fn subsystems(&self) -> &[SubsystemSpec] {
        &self.subsystems
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn position(&self, label: &str) -> Result<usize> {
        self.subsystems
            .iter()
            .position(|s| s.label == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn subsystem(&self, label: &str) -> Result<&SubsystemSpec> {
        Ok(&self.subsystems[self.position(label)?])
    }

    pub fn positions<S: AsRef<str>>(&self, labels: &[S]) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(labels.len());
        for l in labels {
            let p = self.position(l.as_ref())?;
            if out.contains(&p) {
                return Err(Error::DuplicateLabel(l.as_ref().to_string()));
            }
            out.push(p);
        }
        Ok(out)
    }

    /// Labels of all subsystems located at `site`, in space order.
    pub fn labels_at(&self, site: Site) -> Vec<String> {
        self.subsystems
            .iter()
            .filter(|s| s.site == site)
            .map(|s| s.label.clone())
            .collect()
    }

    /// Mixed-radix index of a digit tuple.
    pub fn encode(&self, digits: &[usize]) -> Result<usize> {
        if digits.len() != self.dims.len() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} levels, got {}",
                self.dims.len(),
                digits.len()
            )));
        }
        let mut idx = 0;
        for (i, (&d, &n)) in digits.iter().zip(&self.dims).enumerate() {
            if d >= n {
                return Err(Error::LevelOutOfRange {
                    label: self.subsystems[i].label.clone(),
                    level: d,
                    dim: n,
                });
            }
            idx += d * self.strides[i];
        }
        Ok(idx)
    }

    pub fn decode(&self, index: usize) -> Vec<usize> {
        (0..self.dims.len()).map(|i| self.digit(index, i)).collect()
    }

    #[inline]
    pub fn digit(&self, index: usize, position: usize) -> usize {
        (index / self.strides[position]) % self.dims[position]
    }

    /// Offsets of every local basis state of `positions` (mixed radix in the
    /// order given) relative to a base index whose target digits are zero.
    pub(crate) fn local_offsets(&self, positions: &[usize]) -> Vec<usize> {
        let mut offsets = vec![0usize];
        for &p in positions {
            let mut next = Vec::with_capacity(offsets.len() * self.dims[p]);
            for &o in &offsets {
                for k in 0..self.dims[p] {
                    next.push(o + k * self.strides[p]);
                }
            }
            offsets = next;
        }
        offsets
    }

    /// All indices whose digits at `positions` are zero.
    pub(crate) fn base_indices(&self, positions: &[usize]) -> Vec<usize> {
        let others: Vec<usize> = (0..self.dims.len()).filter(|p| !positions.contains(p)).collect();
        self.local_offsets(&others)
    }

    pub(crate) fn local_dim(&self, positions: &[usize]) -> usize {
        positions.iter().map(|&p| self.dims[p]).product()
    }
}

/// Amplitudes over a group of subsystems, used to assemble product states.
#[derive(Clone, Debug)]
pub struct Factor {
    pub labels: Vec<String>,
    pub amplitudes: Vec<C64>,
}

impl Factor {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>, amplitudes: Vec<C64>) -> Self {
        Factor { labels: labels.into_iter().map(Into::into).collect(), amplitudes }
    }

    pub fn single(label: impl Into<String>, amplitudes: Vec<C64>) -> Self {
        Factor { labels: vec![label.into()], amplitudes }
    }

    /// Basis state `|level⟩` of a subsystem of dimension `dim`.
    pub fn basis(label: impl Into<String>, level: usize, dim: usize) -> Self {
        let mut amplitudes = vec![ZERO; dim];
        if level < dim {
            amplitudes[level] = ONE;
        }
        Factor::single(label, amplitudes)
    }
}

/// Normalized pure state on a [`CompositeSpace`].
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    space: Arc<CompositeSpace>,
    amplitudes: Vec<C64>,
}

impl StateVector {
    /// Wraps amplitudes that are already normalized within the propagation
    /// tolerance.
    pub fn from_amplitudes(space: Arc<CompositeSpace>, amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.len() != space.dim() {
            return Err(Error::DimensionMismatch(format!(
                "space has dimension {}, got {} amplitudes",
                space.dim(),
                amplitudes.len()
            )));
        }
        let norm = norm(&amplitudes);
        if (norm - 1.0).abs() > PROPAGATION_TOL {
            return Err(Error::Invariant(format!("state norm {norm} differs from 1")));
        }
        Ok(StateVector { space, amplitudes })
    }

    /// Rescales arbitrary non-zero amplitudes to unit norm.
    pub fn normalized(space: Arc<CompositeSpace>, mut amplitudes: Vec<C64>) -> Result<Self> {
        let n = norm(&amplitudes);
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidArgument("cannot normalize a zero vector".into()));
        }
        for a in &mut amplitudes {
            *a /= n;
        }
        Self::from_amplitudes(space, amplitudes)
    }

    /// Tensor product of factors; every subsystem must be covered by exactly
    /// one factor, and every factor must be normalized.
    pub fn from_factors(space: Arc<CompositeSpace>, factors: &[Factor]) -> Result<Self> {
        let mut owner = vec![usize::MAX; space.len()];
        let mut plan = Vec::with_capacity(factors.len());
        for (fi, f) in factors.iter().enumerate() {
            let positions = space.positions(&f.labels)?;
            let local = space.local_dim(&positions);
            if f.amplitudes.len() != local {
                return Err(Error::DimensionMismatch(format!(
                    "factor over {:?} needs {local} amplitudes, got {}",
                    f.labels,
                    f.amplitudes.len()
                )));
            }
            let n = norm(&f.amplitudes);
            if (n - 1.0).abs() > PROPAGATION_TOL {
                return Err(Error::InvalidArgument(format!(
                    "factor over {:?} has norm {n}",
                    f.labels
                )));
            }
            for &p in &positions {
                if owner[p] != usize::MAX {
                    return Err(Error::DuplicateLabel(space.subsystems()[p].label.clone()));
                }
                owner[p] = fi;
            }
            plan.push(positions);
        }
        if let Some(p) = owner.iter().position(|&o| o == usize::MAX) {
            return Err(Error::InvalidArgument(format!(
                "subsystem `{}` is not covered by any factor",
                space.subsystems()[p].label
            )));
        }
        let mut amplitudes = vec![ONE; space.dim()];
        for (f, positions) in factors.iter().zip(&plan) {
            for (i, a) in amplitudes.iter_mut().enumerate() {
                let mut local = 0;
                for &p in positions {
                    local = local * space.dims()[p] + space.digit(i, p);
                }
                *a *= f.amplitudes[local];
            }
        }
        Self::from_amplitudes(space, amplitudes)
    }

    pub fn space(&self) -> &Arc<CompositeSpace> {
        &self.space
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        norm(&self.amplitudes)
    }

    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        same_space(&self.space, &other.space)?;
        Ok(self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum())
    }

    /// `⟨ψ|O|ψ⟩` for a hermitian local operator.
    pub fn expectation(&self, op: &LocalOperator) -> Result<f64> {
        if !op.is_hermitian() {
            return Err(Error::NotHermitian(hermiticity_defect(op.matrix())));
        }
        let mut image = self.amplitudes.clone();
        contract(&self.space, &mut image, op)?;
        Ok(self.amplitudes.iter().zip(&image).map(|(a, b)| a.conj() * b).sum::<C64>().re)
    }

    /// Serializes the amplitudes as a JSON array of `[re, im]` pairs.
    pub fn to_json(&self) -> Result<String> {
        let pairs: Vec<[f64; 2]> = self.amplitudes.iter().map(|z| [z.re, z.im]).collect();
        Ok(serde_json::to_string(&pairs)?)
    }

    pub fn from_json(space: Arc<CompositeSpace>, json: &str) -> Result<Self> {
        let pairs: Vec<[f64; 2]> = serde_json::from_str(json)?;
        Self::from_amplitudes(space, pairs.into_iter().map(|[re, im]| C64::new(re, im)).collect())
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut Vec<C64> {
        &mut self.amplitudes
    }

    pub(crate) fn check_norm(&self) -> Result<()> {
        let n = self.norm();
        if (n - 1.0).abs() > PROPAGATION_TOL {
            return Err(Error::Invariant(format!("state norm drifted to {n}")));
        }
        Ok(())
    }
}

fn norm(amplitudes: &[C64]) -> f64 {
    amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn same_space(a: &CompositeSpace, b: &CompositeSpace) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::DimensionMismatch("states live on different spaces".into()))
    }
}

/// Dense matrix acting on an ordered list of subsystems.
#[derive(Clone, Debug)]
pub struct LocalOperator {
    targets: Vec<String>,
    dims: Vec<usize>,
    matrix: DMatrix<C64>,
    hermitian: bool,
    // Filled on first use: the dense check costs a matrix product.
    unitary: OnceLock<bool>,
}

impl PartialEq for LocalOperator {
    fn eq(&self, other: &Self) -> bool {
        self.targets == other.targets && self.dims == other.dims && self.matrix == other.matrix
    }
}

impl LocalOperator {
    /// Builds an operator without asserting any structure.
    pub fn new<S: AsRef<str>>(space: &CompositeSpace, targets: &[S], matrix: DMatrix<C64>) -> Result<Self> {
        let positions = space.positions(targets)?;
        let dims: Vec<usize> = positions.iter().map(|&p| space.dims()[p]).collect();
        let local: usize = dims.iter().product();
        if local > MAX_OPERATOR_DIM {
            return Err(Error::InvalidArgument(format!(
                "operator dimension {local} exceeds {MAX_OPERATOR_DIM}"
            )));
        }
        if matrix.nrows() != local || matrix.ncols() != local {
            return Err(Error::DimensionMismatch(format!(
                "targets span dimension {local}, matrix is {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(LocalOperator {
            targets: targets.iter().map(|s| s.as_ref().to_string()).collect(),
            dims,
            matrix,
            hermitian: false,
            unitary: OnceLock::new(),
        })
    }

    pub fn hermitian<S: AsRef<str>>(space: &CompositeSpace, targets: &[S], matrix: DMatrix<C64>) -> Result<Self> {
        let mut op = Self::new(space, targets, matrix)?;
        let defect = hermiticity_defect(&op.matrix);
        if defect > PROPAGATION_TOL {
            return Err(Error::NotHermitian(defect));
        }
        op.hermitian = true;
        Ok(op)
    }

    pub fn unitary<S: AsRef<str>>(space: &CompositeSpace, targets: &[S], matrix: DMatrix<C64>) -> Result<Self> {
        let mut op = Self::new(space, targets, matrix)?;
        let defect = unitarity_defect(&op.matrix);
        if defect > PROPAGATION_TOL {
            return Err(Error::NotUnitary(defect));
        }
        op.unitary = OnceLock::from(true);
        op.hermitian = hermiticity_defect(&op.matrix) <= PROPAGATION_TOL;
        Ok(op)
    }

    /// Identity on the given targets.
    pub fn identity<S: AsRef<str>>(space: &CompositeSpace, targets: &[S]) -> Result<Self> {
        let positions = space.positions(targets)?;
        let n = space.local_dim(&positions);
        Self::unitary(space, targets, DMatrix::identity(n, n))
    }

    pub fn targets(&self) -> &[String] {
        &self.targets
    }

    pub fn target_dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn is_unitary(&self) -> bool {
        *self.unitary.get_or_init(|| unitarity_defect(&self.matrix) <= PROPAGATION_TOL)
    }

    pub fn adjoint(&self) -> LocalOperator {
        LocalOperator { matrix: self.matrix.adjoint(), ..self.clone() }
    }

    /// Re-expresses the operator on a superset of its targets, in the order
    /// given, acting as identity on the extra subsystems.
    pub fn embed<S: AsRef<str>>(&self, space: &CompositeSpace, targets: &[S]) -> Result<LocalOperator> {
        let positions = space.positions(targets)?;
        let outer_dims: Vec<usize> = positions.iter().map(|&p| space.dims()[p]).collect();
        let inner_slots: Vec<usize> = self
            .targets
            .iter()
            .map(|t| {
                targets
                    .iter()
                    .position(|o| o.as_ref() == t)
                    .ok_or_else(|| Error::UnknownLabel(t.clone()))
            })
            .collect::<Result<_>>()?;
        let n: usize = outer_dims.iter().product();
        if n > MAX_OPERATOR_DIM {
            return Err(Error::InvalidArgument(format!(
                "operator dimension {n} exceeds {MAX_OPERATOR_DIM}"
            )));
        }
        let digits = |mut i: usize| {
            let mut d = vec![0; outer_dims.len()];
            for k in (0..outer_dims.len()).rev() {
                d[k] = i % outer_dims[k];
                i /= outer_dims[k];
            }
            d
        };
        let split = |d: &[usize]| {
            let mut inner = 0;
            for &s in &inner_slots {
                inner = inner * outer_dims[s] + d[s];
            }
            let rest: Vec<usize> = (0..d.len()).filter(|k| !inner_slots.contains(k)).map(|k| d[k]).collect();
            (inner, rest)
        };
        let parts: Vec<(usize, Vec<usize>)> = (0..n).map(|i| split(&digits(i))).collect();
        let mut m = DMatrix::<C64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if parts[i].1 == parts[j].1 {
                    m[(i, j)] = self.matrix[(parts[i].0, parts[j].0)];
                }
            }
        }
        let mut op = LocalOperator::new(space, targets, m)?;
        op.hermitian = self.hermitian;
        op.unitary = self.unitary.clone();
        Ok(op)
    }
}

/// Applies `op` to `amplitudes` in place by contracting over its targets.
/// The operator's structure flags are not checked here.
pub(crate) fn contract(space: &CompositeSpace, amplitudes: &mut [C64], op: &LocalOperator) -> Result<()> {
    let positions = space.positions(op.targets())?;
    if space.local_dim(&positions) != op.dim() {
        return Err(Error::DimensionMismatch(format!(
            "operator on {:?} does not match the space",
            op.targets()
        )));
    }
    let m = op.matrix();
    for_each_local_block(space, &positions, amplitudes, |local, scratch| {
        for (i, out) in scratch.iter_mut().enumerate() {
            *out = (0..local.len()).map(|j| m[(i, j)] * local[j]).sum();
        }
        local.copy_from_slice(scratch);
    });
    Ok(())
}

/// Gathers the sub-vector over `positions` for every assignment of the
/// remaining subsystems, hands it to `f` (with a scratch buffer of equal
/// length) and scatters the result back.
pub(crate) fn for_each_local_block(
    space: &CompositeSpace,
    positions: &[usize],
    amplitudes: &mut [C64],
    mut f: impl FnMut(&mut [C64], &mut [C64]),
) {
    let offsets = space.local_offsets(positions);
    let mut local = vec![ZERO; offsets.len()];
    let mut scratch = vec![ZERO; offsets.len()];
    for base in space.base_indices(positions) {
        for (l, &o) in local.iter_mut().zip(&offsets) {
            *l = amplitudes[base + o];
        }
        f(&mut local, &mut scratch);
        for (l, &o) in local.iter().zip(&offsets) {
            amplitudes[base + o] = *l;
        }
    }
}

/// `|levels⟩`, the basis state with the given occupation of each subsystem.
pub fn basis_state(space: Arc<CompositeSpace>, occupations: &[usize]) -> Result<StateVector> {
    let idx = space.encode(occupations)?;
    let mut amplitudes = vec![ZERO; space.dim()];
    amplitudes[idx] = ONE;
    StateVector::from_amplitudes(space, amplitudes)
}

/// Single-mode coherent state truncated to `truncation` Fock levels.
#[derive(Clone, Debug, PartialEq)]
pub struct CoherentState {
    pub alpha: C64,
    /// Renormalized amplitudes `c_0..c_{d-1}`.
    pub amplitudes: Vec<C64>,
    /// Probability weight lost to truncation, `1 - Σ_{n<d} |c_n|²`.
    pub deficit: f64,
    /// Set when `|α|² > d`.
    pub truncation_warning: bool,
}

/// Builds `|α⟩ = e^{-|α|²/2} Σ αⁿ/√(n!) |n⟩` on `truncation` levels.
///
/// Magnitudes are accumulated in log space so large `|α|` does not
/// underflow the vacuum coefficient.
pub fn coherent_state(alpha: C64, truncation: usize) -> Result<CoherentState> {
    if truncation < 2 {
        return Err(Error::InvalidArgument(format!("truncation must be >= 2, got {truncation}")));
    }
    if !alpha.re.is_finite() || !alpha.im.is_finite() {
        return Err(Error::InvalidArgument("alpha must be finite".into()));
    }
    let r = alpha.norm();
    let mut raw = vec![ZERO; truncation];
    if r == 0.0 {
        raw[0] = ONE;
    } else {
        let theta = alpha.arg();
        let ln_r = r.ln();
        let mut ln_mag = -0.5 * r * r;
        for (n, c) in raw.iter_mut().enumerate() {
            if n > 0 {
                ln_mag += ln_r - 0.5 * (n as f64).ln();
            }
            *c = C64::from_polar(ln_mag.exp(), n as f64 * theta);
        }
    }
    let kept: f64 = raw.iter().map(|c| c.norm_sqr()).sum();
    let deficit = (1.0 - kept).max(0.0);
    let truncation_warning = r * r > truncation as f64;
    if truncation_warning {
        log::warn!("coherent state |alpha|^2 = {:.3} exceeds truncation {truncation}", r * r);
    }
    let n = kept.sqrt();
    if !(n > 0.0) {
        return Err(Error::Invariant(format!(
            "coherent state with |alpha| = {r} has no weight below level {truncation}"
        )));
    }
    let amplitudes = raw.into_iter().map(|c| c / n).collect();
    Ok(CoherentState { alpha, amplitudes, deficit, truncation_warning })
}

/// Applies a unitary local operator; no global matrix is formed.
pub fn apply_local(state: &StateVector, op: &LocalOperator) -> Result<StateVector> {
    if !op.is_unitary() {
        return Err(Error::NotUnitary(unitarity_defect(op.matrix())));
    }
    let mut out = state.clone();
    contract(&state.space, out.amplitudes_mut(), op)?;
    out.check_norm()?;
    Ok(out)
}

/// Density matrix over a subset of subsystems.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    labels: Vec<String>,
    dims: Vec<usize>,
    matrix: DMatrix<C64>,
}

impl DensityMatrix {
    pub fn from_pure(state: &StateVector) -> Self {
        let v = nalgebra::DVector::from_column_slice(state.amplitudes());
        DensityMatrix {
            labels: state.space().subsystems().iter().map(|s| s.label.clone()).collect(),
            dims: state.space().dims().to_vec(),
            matrix: &v * v.adjoint(),
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut v = crate::linalg::hermitian_eigen(&self.matrix).0;
        v.sort_by(f64::total_cmp);
        v
    }
}

/// Reduces a pure state to the subsystems in `keep` (in that order).
pub fn partial_trace<S: AsRef<str>>(state: &StateVector, keep: &[S]) -> Result<DensityMatrix> {
    if keep.is_empty() {
        return Err(Error::InvalidArgument("partial trace needs at least one kept subsystem".into()));
    }
    let space = state.space();
    let positions = space.positions(keep)?;
    let offsets = space.local_offsets(&positions);
    let bases = space.base_indices(&positions);
    let amps = state.amplitudes();
    // Columns index the traced-out configurations.
    let psi = DMatrix::from_fn(offsets.len(), bases.len(), |k, r| amps[bases[r] + offsets[k]]);
    let rho = &psi * psi.adjoint();
    let dm = DensityMatrix {
        labels: keep.iter().map(|s| s.as_ref().to_string()).collect(),
        dims: positions.iter().map(|&p| space.dims()[p]).collect(),
        matrix: rho,
    };
    if (dm.trace() - 1.0).abs() > PROPAGATION_TOL {
        return Err(Error::Invariant(format!("reduced state has trace {}", dm.trace())));
    }
    Ok(dm)
}

/// Either kind of state accepted by [`fidelity`].
#[derive(Clone, Copy, Debug)]
pub enum QuantumState<'a> {
    Pure(&'a StateVector),
    Mixed(&'a DensityMatrix),
}

impl<'a> From<&'a StateVector> for QuantumState<'a> {
    fn from(s: &'a StateVector) -> Self {
        QuantumState::Pure(s)
    }
}

impl<'a> From<&'a DensityMatrix> for QuantumState<'a> {
    fn from(s: &'a DensityMatrix) -> Self {
        QuantumState::Mixed(s)
    }
}

/// `|⟨a|b⟩|²` for pure states, `⟨ψ|ρ|ψ⟩` for a pure/mixed pair and the
/// Uhlmann fidelity `(tr √(√ρ σ √ρ))²` for two mixed states.
pub fn fidelity<'a, 'b>(a: impl Into<QuantumState<'a>>, b: impl Into<QuantumState<'b>>) -> Result<f64> {
    let f = match (a.into(), b.into()) {
        (QuantumState::Pure(x), QuantumState::Pure(y)) => x.inner(y)?.norm_sqr(),
        (QuantumState::Pure(x), QuantumState::Mixed(r)) | (QuantumState::Mixed(r), QuantumState::Pure(x)) => {
            check_dims(r.dims(), x.space().dims())?;
            let v = nalgebra::DVector::from_column_slice(x.amplitudes());
            (v.adjoint() * r.matrix() * &v)[(0, 0)].re
        }
        (QuantumState::Mixed(r), QuantumState::Mixed(s)) => {
            check_dims(r.dims(), s.dims())?;
            let sqrt_r = hermitian_map(r.matrix(), |v| C64::new(v.max(0.0).sqrt(), 0.0));
            let inner = &sqrt_r * s.matrix() * &sqrt_r;
            let inner = (&inner + inner.adjoint()) * C64::new(0.5, 0.0);
            let tr: f64 = crate::linalg::hermitian_eigen(&inner).0.iter().map(|v| v.max(0.0).sqrt()).sum();
            tr * tr
        }
    };
    Ok(f.clamp(0.0, 1.0))
}

fn check_dims(a: &[usize], b: &[usize]) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!("{a:?} vs {b:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn qubit_space(labels: &[&str]) -> Arc<CompositeSpace> {
        Arc::new(CompositeSpace::new(labels.iter().map(|l| SubsystemSpec::two_level(*l, Site::Other)).collect()).unwrap())
    }

    #[test]
    fn vacuum_of_two_level_mode() {
        let space = Arc::new(CompositeSpace::new(vec![SubsystemSpec::mode("m", 2, Site::A)]).unwrap());
        let s = basis_state(space, &[0]).unwrap();
        assert_eq!(s.amplitudes(), &[c(1.0, 0.0), c(0.0, 0.0)]);
    }

    #[test]
    fn last_subsystem_varies_fastest() {
        let space = Arc::new(
            CompositeSpace::new(vec![SubsystemSpec::mode("m", 2, Site::A), SubsystemSpec::two_level("q", Site::A)])
                .unwrap(),
        );
        let s = basis_state(space, &[1, 1]).unwrap();
        let nz: Vec<usize> = (0..4).filter(|&i| s.amplitudes()[i] != c(0.0, 0.0)).collect();
        assert_eq!(nz, vec![3]);
        assert_eq!(s.amplitudes()[3], c(1.0, 0.0));
    }

    #[test]
    fn basis_state_rejects_out_of_range_level() {
        let space = Arc::new(CompositeSpace::new(vec![SubsystemSpec::mode("cav", 2, Site::A)]).unwrap());
        match basis_state(space, &[2]) {
            Err(Error::LevelOutOfRange { label, level: 2, dim: 2 }) => assert_eq!(label, "cav"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn space_validation() {
        assert!(matches!(
            CompositeSpace::new(vec![SubsystemSpec::two_level("x", Site::A), SubsystemSpec::two_level("x", Site::B)]),
            Err(Error::DuplicateLabel(_))
        ));
        assert!(CompositeSpace::new(vec![SubsystemSpec::mode("m", 1, Site::A)]).is_err());
        assert!(CompositeSpace::new(vec![SubsystemSpec::mode("m", 2048, Site::A), SubsystemSpec::mode("n", 1024, Site::B)]).is_err());
    }

    #[test]
    fn coherent_vacuum() {
        let cs = coherent_state(c(0.0, 0.0), 10).unwrap();
        assert_eq!(cs.amplitudes[0], c(1.0, 0.0));
        assert!(cs.amplitudes[1..].iter().all(|z| *z == c(0.0, 0.0)));
        assert_eq!(cs.deficit, 0.0);
    }

    #[test]
    fn coherent_state_deficit_for_alpha_two() {
        let cs = coherent_state(c(2.0, 0.0), 4).unwrap();
        let expected = 1.0 - (-4.0f64).exp() * (1.0 + 4.0 + 8.0 + 32.0 / 3.0);
        assert!((cs.deficit - expected).abs() < 1e-14);
        assert!(!cs.truncation_warning);
        assert!(coherent_state(c(3.0, 0.0), 4).unwrap().truncation_warning);
    }

    #[test]
    fn coherent_state_handles_large_amplitude() {
        let cs = coherent_state(c(40.0, 0.0), 2000).unwrap();
        assert!(cs.deficit < 1e-12);
        let n = norm(&cs.amplitudes);
        assert!((n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn apply_local_rejects_non_unitary() {
        let space = qubit_space(&["q"]);
        let op = LocalOperator::new(&space, &["q"], DMatrix::from_element(2, 2, c(1.0, 0.0))).unwrap();
        let s = basis_state(space.clone(), &[0]).unwrap();
        assert!(matches!(apply_local(&s, &op), Err(Error::NotUnitary(_))));
        assert!(LocalOperator::unitary(&space, &["q"], DMatrix::from_element(2, 2, c(1.0, 0.0))).is_err());
        assert!(matches!(LocalOperator::identity(&space, &["r"]), Err(Error::UnknownLabel(_))));
    }

    #[test]
    fn embed_matches_kron_order() {
        let space = qubit_space(&["a", "b"]);
        let x = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        let op = LocalOperator::unitary(&space, &["b"], x.clone()).unwrap();
        let big = op.embed(&space, &["a", "b"]).unwrap();
        let expected = DMatrix::<C64>::identity(2, 2).kronecker(&x);
        assert_eq!(big.matrix(), &expected);
        let big = op.embed(&space, &["b", "a"]).unwrap();
        assert_eq!(big.matrix(), &x.kronecker(&DMatrix::<C64>::identity(2, 2)));
    }

    #[test]
    fn partial_trace_rejects_empty_and_unknown() {
        let space = qubit_space(&["a", "b"]);
        let s = basis_state(space, &[0, 1]).unwrap();
        assert!(partial_trace::<&str>(&s, &[]).is_err());
        assert!(matches!(partial_trace(&s, &["z"]), Err(Error::UnknownLabel(_))));
    }

    #[test]
    fn fidelity_of_basic_pairs() {
        let space = qubit_space(&["q"]);
        let g = basis_state(space.clone(), &[0]).unwrap();
        let e = basis_state(space.clone(), &[1]).unwrap();
        let h = 1.0 / 2f64.sqrt();
        let plus = StateVector::from_amplitudes(space.clone(), vec![c(h, 0.0), c(h, 0.0)]).unwrap();
        assert!((fidelity(&g, &g).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(fidelity(&g, &e).unwrap(), 0.0);
        assert!((fidelity(&g, &plus).unwrap() - 0.5).abs() < 1e-15);
        let rho = DensityMatrix::from_pure(&plus);
        assert!((fidelity(&g, &rho).unwrap() - 0.5).abs() < 1e-15);
        let rho_g = DensityMatrix::from_pure(&g);
        assert!((fidelity(&rho_g, &rho).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip() {
        let space = qubit_space(&["q"]);
        let s = StateVector::from_amplitudes(space.clone(), vec![c(0.6, 0.0), c(0.0, -0.8)]).unwrap();
        assert_eq!(s.to_json().unwrap(), "[[0.6,0.0],[0.0,-0.8]]");
        assert_eq!(StateVector::from_json(space, &s.to_json().unwrap()).unwrap(), s);
    }
}
