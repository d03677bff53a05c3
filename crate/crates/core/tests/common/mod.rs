//! Brute-force oracles shared by the integration tests. Everything here
//! works on dense full-space matrices built with Kronecker products and
//! never calls the contraction code it is used to check.
#![allow(dead_code)]

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::{DMatrix, DVector};
use nonlocal::C64;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// `⊗_k factors[k]`, first factor most significant.
pub fn kron_all(factors: &[DMatrix<C64>]) -> DMatrix<C64> {
    let mut out = DMatrix::from_element(1, 1, c(1.0, 0.0));
    for f in factors {
        out = out.kronecker(f);
    }
    out
}

pub fn ket(dim: usize, level: usize) -> DVector<C64> {
    let mut v = DVector::zeros(dim);
    v[level] = c(1.0, 0.0);
    v
}

pub fn kron_vec(parts: &[DVector<C64>]) -> DVector<C64> {
    let mut out = DVector::from_element(1, c(1.0, 0.0));
    for p in parts {
        out = out.kronecker(p);
    }
    out
}

/// `|+n̂⟩` / `|-n̂⟩` written out from the textbook spin-½ formulas, with
/// `|↑⟩` the upper level (index 1).
pub fn spin_half_eigvec(theta: f64, phi: f64, plus: bool) -> DVector<C64> {
    let (s, co) = (theta / 2.0).sin_cos();
    let up = ket(2, 1);
    let down = ket(2, 0);
    if plus {
        up * c(co, 0.0) + down * C64::from_polar(s, phi)
    } else {
        up * c(s, 0.0) - down * C64::from_polar(co, phi)
    }
}

pub fn projector(v: &DVector<C64>) -> DMatrix<C64> {
    v * v.adjoint()
}

/// The state `(|↑↓⟩ + e^{iφ}|↓↑⟩)/√2` on two qubits.
pub fn swapped_pair(phi: f64) -> DVector<C64> {
    (kron_vec(&[ket(2, 1), ket(2, 0)]) + kron_vec(&[ket(2, 0), ket(2, 1)]) * C64::from_polar(1.0, phi))
        * c(FRAC_1_SQRT_2, 0.0)
}

/// Born probabilities over `(++, +-, -+, --)` for a two-qubit state.
pub fn brute_force_pair_distribution(psi: &DVector<C64>, a: (f64, f64), b: (f64, f64)) -> [f64; 4] {
    let mut out = [0.0; 4];
    let mut k = 0;
    for pa in [true, false] {
        for pb in [true, false] {
            let p = kron_all(&[
                projector(&spin_half_eigvec(a.0, a.1, pa)),
                projector(&spin_half_eigvec(b.0, b.1, pb)),
            ]);
            out[k] = (psi.adjoint() * p * psi)[(0, 0)].re;
            k += 1;
        }
    }
    out
}

pub fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
