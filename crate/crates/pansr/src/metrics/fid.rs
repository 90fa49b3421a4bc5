//! Frechet inception distance over feature sets.
//!
//! `fid = ||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2})`, with the matrix
//! square root evaluated through the symmetrized product
//! `S1^{1/2} S2 S1^{1/2}`: that matrix is symmetric positive semi-definite
//! whenever the covariances are, shares its square root's trace with
//! `(S1 S2)^{1/2}`, and keeps everything inside real symmetric
//! eigendecompositions. Eigenvalues below `-1e-6` indicate a genuinely
//! broken input and error out; round-off negatives are clamped to zero.

use nalgebra::{DMatrix, DVector};

use crate::error::{PanError, Result};
use crate::metrics::Features;

const EIG_TOL: f64 = 1e-6;

/// FID between two feature sets from the same embedder.
pub fn fid(real: &Features, fake: &Features) -> Result<f64> {
    if real.embedder_id != fake.embedder_id {
        return Err(PanError::Provenance(format!(
            "fid inputs come from different embedders: `{}` vs `{}`",
            real.embedder_id, fake.embedder_id
        )));
    }
    if real.dims != fake.dims {
        return Err(PanError::Dimension {
            op: "fid",
            detail: format!("feature dims {} vs {}", real.dims, fake.dims),
        });
    }
    for (name, f) in [("real", real), ("fake", fake)] {
        if f.count < 2 {
            return Err(PanError::Data(format!(
                "fid needs at least 2 {name} samples, got {}",
                f.count
            )));
        }
    }

    let (mu1, s1) = mean_cov(real);
    let (mu2, s2) = mean_cov(fake);
    let delta = &mu1 - &mu2;
    let mean_term = delta.dot(&delta);

    let root1 = sym_sqrt(&s1, "fid.cov_real")?;
    let prod = &root1 * &s2 * &root1;
    let sym = (&prod + prod.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(sym);
    let mut trace_root = 0.0;
    for &lambda in eig.eigenvalues.iter() {
        if lambda < -EIG_TOL {
            return Err(PanError::Domain {
                op: "fid.sqrtm",
                detail: format!("eigenvalue {lambda:.3e} of the covariance product is negative"),
            });
        }
        trace_root += lambda.max(0.0).sqrt();
    }
    let value = mean_term + s1.trace() + s2.trace() - 2.0 * trace_root;
    Ok(value.max(0.0))
}

/// Sample mean and unbiased covariance (denominator n-1) of a feature set.
fn mean_cov(f: &Features) -> (DVector<f64>, DMatrix<f64>) {
    let (n, d) = (f.count, f.dims);
    let mut mu = DVector::zeros(d);
    for i in 0..n {
        for (j, &v) in f.row(i).iter().enumerate() {
            mu[j] += v as f64;
        }
    }
    mu /= n as f64;
    let mut cov = DMatrix::zeros(d, d);
    for i in 0..n {
        let row = f.row(i);
        for a in 0..d {
            let da = row[a] as f64 - mu[a];
            for b in a..d {
                cov[(a, b)] += da * (row[b] as f64 - mu[b]);
            }
        }
    }
    cov /= (n - 1) as f64;
    for a in 0..d {
        for b in 0..a {
            cov[(a, b)] = cov[(b, a)];
        }
    }
    (mu, cov)
}

/// Square root of a symmetric PSD matrix via eigendecomposition.
fn sym_sqrt(m: &DMatrix<f64>, op: &'static str) -> Result<DMatrix<f64>> {
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    let mut roots = eig.eigenvalues.clone();
    for v in roots.iter_mut() {
        if *v < -EIG_TOL {
            return Err(PanError::Domain {
                op,
                detail: format!("eigenvalue {v:.3e} is negative"),
            });
        }
        *v = v.max(0.0).sqrt();
    }
    let basis = eig.eigenvectors;
    Ok(&basis * DMatrix::from_diagonal(&roots) * basis.transpose())
}
