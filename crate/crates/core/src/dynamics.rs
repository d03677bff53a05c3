//! Hamiltonians, unitary evolution, the excitation swap, charge operators
//! and phase kicks. Units: ħ = c = 1, Gaussian electromagnetic units.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::hilbert::{for_each_local_block, CompositeSpace, LocalOperator, Site, StateVector};
use crate::linalg::{connected_blocks, hermitian_eigen, unitarity_defect};
use crate::{Error, Result, C64, PROPAGATION_TOL};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HamiltonianSpec {
    /// `g (a† |g⟩⟨e| + a |e⟩⟨g|)` between a mode and a two-level system.
    JaynesCummings { mode: String, two_level: String, coupling: f64 },
    /// `ω₀ |e⟩⟨e|`.
    FreeTwoLevel { label: String, splitting: f64 },
}

/// Instantaneous phase kick `exp(i χ Q̂_region)`.
///
/// `chi` is the time-integrated potential per unit charge, `∫V dt`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KickSpec {
    pub chi: f64,
    pub region: Site,
}

fn mode_and_two_level(space: &CompositeSpace, mode: &str, two_level: &str) -> Result<(usize, usize)> {
    let m = space.subsystem(mode)?;
    if !m.is_mode() {
        return Err(Error::KindMismatch { label: mode.to_string(), expected: "a bosonic mode" });
    }
    let q = space.subsystem(two_level)?;
    if !q.is_two_level() {
        return Err(Error::KindMismatch { label: two_level.to_string(), expected: "a two-level system" });
    }
    Ok((m.dim(), q.dim()))
}

pub fn build_hamiltonian(space: &CompositeSpace, spec: &HamiltonianSpec) -> Result<LocalOperator> {
    match spec {
        HamiltonianSpec::JaynesCummings { mode, two_level, coupling } => {
            let (d, _) = mode_and_two_level(space, mode, two_level)?;
            // Local basis index: 2n + s with s = 0 (lower), 1 (upper).
            let mut h = DMatrix::<C64>::zeros(2 * d, 2 * d);
            for n in 0..d - 1 {
                let amp = C64::new(coupling * ((n + 1) as f64).sqrt(), 0.0);
                let up = 2 * (n + 1);
                let down = 2 * n + 1;
                h[(up, down)] = amp;
                h[(down, up)] = amp;
            }
            LocalOperator::hermitian(space, &[mode.as_str(), two_level.as_str()], h)
        }
        HamiltonianSpec::FreeTwoLevel { label, splitting } => {
            if !space.subsystem(label)?.is_two_level() {
                return Err(Error::KindMismatch { label: label.clone(), expected: "a two-level system" });
            }
            let h = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
                C64::new(0.0, 0.0),
                C64::new(*splitting, 0.0),
            ]));
            LocalOperator::hermitian(space, &[label.as_str()], h)
        }
    }
}

/// `exp(-iHt)` stored block by block.
///
/// The local Hamiltonian is split into the connected components of its
/// non-zero pattern and each block is diagonalized separately, so a
/// Jaynes–Cummings propagator on a large truncation costs a set of 2×2
/// diagonalizations.
#[derive(Clone, Debug)]
pub struct Propagator {
    targets: Vec<String>,
    dim: usize,
    blocks: Vec<(Vec<usize>, DMatrix<C64>)>,
}

impl Propagator {
    pub fn new(h: &LocalOperator, t: f64) -> Result<Self> {
        if !h.is_hermitian() {
            return Err(Error::NotHermitian(crate::linalg::hermiticity_defect(h.matrix())));
        }
        if !t.is_finite() {
            return Err(Error::InvalidArgument("evolution time must be finite".into()));
        }
        let m = h.matrix();
        let mut blocks = Vec::new();
        for idx in connected_blocks(m) {
            let sub = DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])]);
            let u = if t == 0.0 {
                DMatrix::identity(idx.len(), idx.len())
            } else {
                let (vals, vecs) = hermitian_eigen(&sub);
                let mut scaled = vecs.clone();
                for (j, &v) in vals.iter().enumerate() {
                    let phase = C64::from_polar(1.0, -v * t);
                    for i in 0..idx.len() {
                        scaled[(i, j)] *= phase;
                    }
                }
                scaled * vecs.adjoint()
            };
            let defect = unitarity_defect(&u);
            if defect > PROPAGATION_TOL {
                return Err(Error::Invariant(format!("propagator block deviates from unitary by {defect:e}")));
            }
            blocks.push((idx, u));
        }
        Ok(Propagator { targets: h.targets().to_vec(), dim: m.nrows(), blocks })
    }

    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        let space = state.space().clone();
        let positions = space.positions(&self.targets)?;
        let mut out = state.clone();
        for_each_local_block(&space, &positions, out.amplitudes_mut(), |local, scratch| {
            for (idx, u) in &self.blocks {
                for (i, s) in scratch.iter_mut().take(idx.len()).enumerate() {
                    *s = idx.iter().enumerate().map(|(j, &k)| u[(i, j)] * local[k]).sum();
                }
                for (i, &k) in idx.iter().enumerate() {
                    local[k] = scratch[i];
                }
            }
        });
        out.check_norm()?;
        Ok(out)
    }

    /// Dense unitary on the propagator's targets.
    pub fn to_operator(&self, space: &CompositeSpace) -> Result<LocalOperator> {
        let mut m = DMatrix::<C64>::zeros(self.dim, self.dim);
        for (idx, u) in &self.blocks {
            for (i, &a) in idx.iter().enumerate() {
                for (j, &b) in idx.iter().enumerate() {
                    m[(a, b)] = u[(i, j)];
                }
            }
        }
        LocalOperator::unitary(space, &self.targets, m)
    }
}

/// Applies `exp(-iHt)` to a state.
pub fn evolve(state: &StateVector, h: &LocalOperator, t: f64) -> Result<StateVector> {
    Propagator::new(h, t)?.apply(state)
}

/// Ideal excitation swap `|1⟩|↓⟩ ↔ |0⟩|↑⟩` between a mode and a two-level
/// system. `|0⟩|↓⟩`, `|1⟩|↑⟩` and every Fock level `n ≥ 2` are left alone.
pub fn swap_unitary(space: &CompositeSpace, mode: &str, two_level: &str) -> Result<LocalOperator> {
    let (d, _) = mode_and_two_level(space, mode, two_level)?;
    let n = 2 * d;
    let mut perm: Vec<usize> = (0..n).collect();
    // |1,↓⟩ = index 2, |0,↑⟩ = index 1.
    perm.swap(1, 2);
    let m = DMatrix::from_fn(n, n, |i, j| if perm[j] == i { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) });
    LocalOperator::unitary(space, &[mode, two_level], m)
}

/// The swap as realized physically: a Jaynes–Cummings pulse with
/// `g t = π/2`. On the single-excitation sector it equals
/// [`swap_unitary`] times a phase of `-i`.
pub fn jc_swap(space: &CompositeSpace, mode: &str, two_level: &str, coupling: f64) -> Result<LocalOperator> {
    if coupling == 0.0 || !coupling.is_finite() {
        return Err(Error::InvalidArgument("swap pulse needs a finite non-zero coupling".into()));
    }
    let h = build_hamiltonian(
        space,
        &HamiltonianSpec::JaynesCummings { mode: mode.into(), two_level: two_level.into(), coupling },
    )?;
    Propagator::new(&h, PI / (2.0 * coupling))?.to_operator(space)
}

fn charge_diagonal(space: &CompositeSpace, labels: &[String]) -> Result<Vec<f64>> {
    let positions = space.positions(labels)?;
    let mut diag = vec![0.0f64];
    for &p in &positions {
        let s = &space.subsystems()[p];
        let mut next = Vec::with_capacity(diag.len() * s.dim());
        for &q in &diag {
            for level in 0..s.dim() {
                // For a two-level system level 1 is the upper state.
                next.push(q + s.charge * level as f64);
            }
        }
        diag = next;
    }
    Ok(diag)
}

/// `Q̂_site = Σ charge(s) n̂(s)` over the subsystems located at `site`.
pub fn charge_operator(space: &CompositeSpace, site: Site) -> Result<LocalOperator> {
    let labels = space.labels_at(site);
    if labels.is_empty() {
        return Err(Error::InvalidArgument(format!("no subsystems at site {site}")));
    }
    let diag = charge_diagonal(space, &labels)?;
    let m = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        diag.len(),
        diag.iter().map(|&q| C64::new(q, 0.0)),
    ));
    LocalOperator::hermitian(space, &labels, m)
}

/// Diagonal unitary `exp(i χ Q̂_region)`. An empty region gives the identity
/// on no subsystems.
pub fn phase_kick(space: &CompositeSpace, kick: &KickSpec) -> Result<LocalOperator> {
    if !kick.chi.is_finite() {
        return Err(Error::InvalidArgument("kick strength must be finite".into()));
    }
    let labels = space.labels_at(kick.region);
    let diag = charge_diagonal(space, &labels)?;
    let m = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        diag.len(),
        diag.iter().map(|&q| C64::from_polar(1.0, kick.chi * q)),
    ));
    LocalOperator::unitary(space, &labels, m)
}

/// Scalar Aharonov–Bohm phase `4π σ d q t` picked up behind a parallel-plate
/// condenser of surface charge density `sigma` opened to separation
/// `d_plates` for a time `t`.
pub fn ab_phase(sigma: f64, d_plates: f64, q: f64, t: f64) -> f64 {
    4.0 * PI * sigma * d_plates * q * t
}

/// `max |AB - BA|` for two operators on the same targets.
pub fn commutator_norm(a: &LocalOperator, b: &LocalOperator) -> Result<f64> {
    if a.targets() != b.targets() {
        return Err(Error::DimensionMismatch(format!(
            "operators act on {:?} and {:?}",
            a.targets(),
            b.targets()
        )));
    }
    let c = a.matrix() * b.matrix() - b.matrix() * a.matrix();
    Ok(crate::linalg::max_abs(&c))
}
