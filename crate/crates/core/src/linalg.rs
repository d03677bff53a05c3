//! Small dense helpers on top of nalgebra.

use nalgebra::DMatrix;

use crate::C64;

pub(crate) fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `max |M - M†|`.
pub(crate) fn hermiticity_defect(m: &DMatrix<C64>) -> f64 {
    max_abs(&(m - m.adjoint()))
}

/// `max |M†M - I|`.
pub(crate) fn unitarity_defect(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    max_abs(&(m.adjoint() * m - DMatrix::<C64>::identity(n, n)))
}

/// Eigen-decomposition of a hermitian matrix. Eigenvalues are real; the
/// columns of the returned matrix are the orthonormal eigenvectors.
pub(crate) fn hermitian_eigen(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    if m.nrows() == 1 {
        return (vec![m[(0, 0)].re], DMatrix::from_element(1, 1, C64::new(1.0, 0.0)));
    }
    let eig = m.clone().symmetric_eigen();
    (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
}

/// Applies a real function to the spectrum of a hermitian matrix.
pub(crate) fn hermitian_map(m: &DMatrix<C64>, f: impl Fn(f64) -> C64) -> DMatrix<C64> {
    let (vals, vecs) = hermitian_eigen(m);
    let n = m.nrows();
    let mut scaled = vecs.clone();
    for (j, &v) in vals.iter().enumerate() {
        let fv = f(v);
        for i in 0..n {
            scaled[(i, j)] *= fv;
        }
    }
    scaled * vecs.adjoint()
}

/// Partitions `0..n` into the connected components of the non-zero pattern
/// of `m`. Components come out sorted by their smallest index.
pub(crate) fn connected_blocks(m: &DMatrix<C64>) -> Vec<Vec<usize>> {
    let n = m.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if m[(i, j)] != C64::new(0.0, 0.0) || m[(j, i)] != C64::new(0.0, 0.0) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let root = find(&mut parent, i);
        if slot[root] == usize::MAX {
            slot[root] = blocks.len();
            blocks.push(Vec::new());
        }
        blocks[slot[root]].push(i);
    }
    blocks
}
