use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::evd::{self, ComputeEigenvectors};
use faer::linalg::solvers::Solve;
use faer::{Mat, Par};

use super::graph::SimilarityGraph;
use crate::error::{Error, Result};

/// Residual bound every retained eigenpair must meet (unit eigenvectors).
pub const RESIDUAL_TOL: f64 = 1e-8;

/// `L = I - D^{-1/2} W D^{-1/2}`, stored dense row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    pub n: usize,
    pub values: Vec<f64>,
    /// Diagonal of `D^{1/2}`; `L · sqrt_degree = 0`.
    pub sqrt_degree: Vec<f64>,
}

impl Laplacian {
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.values
            .chunks_exact(self.n)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `‖L v - λ v‖₂`.
    pub fn residual(&self, lambda: f64, v: &[f64]) -> f64 {
        self.apply(v)
            .iter()
            .zip(v)
            .map(|(lv, x)| (lv - lambda * x).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

pub fn normalized_laplacian(g: &SimilarityGraph) -> Result<Laplacian> {
    let n = g.n;
    let degrees = g.degrees();
    if let Some(i) = degrees.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::Numeric(format!("node {i} has zero degree")));
    }
    let inv_sqrt: Vec<f64> = degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        values[i * n + i] = 1.0 - g.weight(i, i) * inv_sqrt[i] * inv_sqrt[i];
        for j in i + 1..n {
            let v = -g.weight(i, j) * inv_sqrt[i] * inv_sqrt[j];
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    Ok(Laplacian {
        n,
        values,
        sqrt_degree: degrees.iter().map(|d| d.sqrt()).collect(),
    })
}

/// The `eigenvalues.len()` smallest eigenpairs of a Laplacian, ascending,
/// with unit eigenvectors and their residual norms.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianSpectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
}

/// Full dense symmetric eigendecomposition; the `keep` smallest pairs are
/// retained and checked against [`RESIDUAL_TOL`]. Runs single-threaded so the
/// result does not depend on the worker pool.
pub fn laplacian_spectrum(lap: &Laplacian, keep: usize) -> Result<LaplacianSpectrum> {
    smallest_pairs(lap, |i, j| lap.at(i, j), keep)
}

/// Smallest `keep` eigenpairs of the symmetric matrix `entry`, with residuals
/// measured against `lap` itself.
fn smallest_pairs(lap: &Laplacian, entry: impl Fn(usize, usize) -> f64, keep: usize) -> Result<LaplacianSpectrum> {
    let n = lap.n;
    let keep = keep.min(n);
    let a = Mat::<f64>::from_fn(n, n, entry);
    let mut u = Mat::<f64>::zeros(n, n);
    let mut s = faer::diag::Diag::<f64>::zeros(n);
    let par = Par::Seq;
    evd::self_adjoint_evd(
        a.as_ref(),
        s.as_mut(),
        Some(u.as_mut()),
        par,
        MemStack::new(&mut MemBuffer::new(evd::self_adjoint_evd_scratch::<f64>(
            n,
            ComputeEigenvectors::Yes,
            par,
            Default::default(),
        ))),
        Default::default(),
    )
    .map_err(|e| Error::Numeric(format!("symmetric eigensolver failed on {n}x{n} Laplacian: {e:?}")))?;

    let mut eigenvalues = Vec::with_capacity(keep);
    let mut eigenvectors = Vec::with_capacity(keep);
    let mut residuals = Vec::with_capacity(keep);
    for k in 0..keep {
        let lambda = s[k];
        let mut v: Vec<f64> = (0..n).map(|i| u[(i, k)]).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        let r = lap.residual(lambda, &v);
        if !(r <= RESIDUAL_TOL) {
            return Err(Error::Numeric(format!(
                "eigenpair {k} of {n}x{n} Laplacian has residual {r:e} (λ = {lambda})"
            )));
        }
        eigenvalues.push(lambda);
        eigenvectors.push(v);
        residuals.push(r);
    }
    Ok(LaplacianSpectrum {
        eigenvalues,
        eigenvectors,
        residuals,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiedlerVector {
    pub eigenvalue: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
}

/// Unit eigenvector of the second-smallest eigenvalue, signed so that its
/// largest-magnitude entry (first one on ties) is positive.
///
/// The trivial eigenvector `D^{1/2} 1` is known exactly, so it is deflated
/// (shifted to eigenvalue 3, above the whole spectrum) and the smallest pair
/// of what remains is taken. A nearly disconnected graph has a repeated
/// eigenvalue near 0, and picking "the second column" of a solver would
/// return an arbitrary rotation of that eigenspace, often one that is
/// constant on one component and noise on the other.
pub fn fiedler_vector(lap: &Laplacian) -> Result<FiedlerVector> {
    let n = lap.n;
    if n < 2 {
        return Err(Error::Input("the Fiedler vector needs at least 2 nodes".into()));
    }
    let norm = lap.sqrt_degree.iter().map(|x| x * x).sum::<f64>().sqrt();
    let u0: Vec<f64> = lap.sqrt_degree.iter().map(|x| x / norm).collect();
    let deflated = Mat::<f64>::from_fn(n, n, |i, j| lap.at(i, j) + 3.0 * u0[i] * u0[j]);

    let (eigenvalue, mut vector, residual) = match inverse_iteration(lap, &deflated, &u0)? {
        Some(found) => found,
        None => {
            let mut spec = smallest_pairs(lap, |i, j| deflated[(i, j)], 1)?;
            (spec.eigenvalues[0], spec.eigenvectors.swap_remove(0), spec.residuals[0])
        }
    };
    let pivot = vector
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |best, (i, &x)| if x.abs() > best.1 { (i, x.abs()) } else { best })
        .0;
    if vector[pivot] < 0.0 {
        vector.iter_mut().for_each(|x| *x = -*x);
    }
    Ok(FiedlerVector {
        eigenvalue,
        vector,
        residual,
    })
}

const INVERSE_ITERATIONS: usize = 4;

/// Smallest eigenpair of `m` from its eigenvalues alone plus a few steps of
/// inverse iteration with a Cholesky factor of `m - μI`, `μ` just below the
/// smallest eigenvalue. About twice as fast as a full decomposition with
/// eigenvectors. `None` when the factorization or the residual check fails,
/// so the caller can fall back to the full decomposition.
fn inverse_iteration(lap: &Laplacian, m: &Mat<f64>, u0: &[f64]) -> Result<Option<(f64, Vec<f64>, f64)>> {
    let n = lap.n;
    let mut s = faer::diag::Diag::<f64>::zeros(n);
    let par = Par::Seq;
    evd::self_adjoint_evd(
        m.as_ref(),
        s.as_mut(),
        None,
        par,
        MemStack::new(&mut MemBuffer::new(evd::self_adjoint_evd_scratch::<f64>(
            n,
            ComputeEigenvectors::No,
            par,
            Default::default(),
        ))),
        Default::default(),
    )
    .map_err(|e| Error::Numeric(format!("symmetric eigensolver failed on {n}x{n} Laplacian: {e:?}")))?;
    let smallest = s[0];
    let shift = smallest - 1e-9 * (1.0 + smallest.abs());
    let shifted = Mat::<f64>::from_fn(n, n, |i, j| m[(i, j)] - if i == j { shift } else { 0.0 });
    let Ok(llt) = shifted.as_ref().llt(faer::Side::Lower) else {
        return Ok(None);
    };
    // fixed, non-symmetric start so repeated runs agree
    let mut x = Mat::<f64>::from_fn(n, 1, |i, _| 1.0 + (i % 7) as f64 / 7.0);
    for _ in 0..INVERSE_ITERATIONS {
        let along: f64 = (0..n).map(|i| x[(i, 0)] * u0[i]).sum();
        for i in 0..n {
            x[(i, 0)] -= along * u0[i];
        }
        llt.solve_in_place(x.as_mut());
        let norm = (0..n).map(|i| x[(i, 0)] * x[(i, 0)]).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Ok(None);
        }
        for i in 0..n {
            x[(i, 0)] /= norm;
        }
    }
    let v: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
    let lv = lap.apply(&v);
    let lambda: f64 = lv.iter().zip(&v).map(|(a, b)| a * b).sum();
    let r = lap.residual(lambda, &v);
    let along: f64 = v.iter().zip(u0).map(|(a, b)| a * b).sum();
    Ok((r <= RESIDUAL_TOL && along.abs() <= 1e-8).then_some((lambda, v, r)))
}
