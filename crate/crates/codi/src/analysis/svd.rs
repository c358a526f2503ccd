//! Singular spectra via one-sided Jacobi rotations.
//!
//! The one-sided method orthogonalizes the columns of the working matrix;
//! at convergence the column norms are the singular values. It computes small
//! singular values without forming the Gram matrix, so near-rank-deficient
//! encoders report their conditioning honestly. A plain symmetric Jacobi
//! eigensolver is also provided for the tiny per-pixel blocks of the
//! spectral-imaging spectrum (and it doubles as an independent oracle in the
//! tests).

use ndarray::Array2;

/// Singular values of `a`, descending. Deterministic, O(min^2 * max) per
/// sweep with a fixed sweep order.
pub fn singular_values(a: &Array2<f64>) -> Vec<f64> {
    // Work on the orientation with fewer columns.
    let mut b = if a.ncols() <= a.nrows() {
        a.clone()
    } else {
        a.t().to_owned()
    };
    let (rows, cols) = b.dim();
    if cols == 0 || rows == 0 {
        return Vec::new();
    }
    let tol = 1e-14;
    let max_sweeps = 60;
    for _ in 0..max_sweeps {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for r in 0..rows {
                    let bp = b[[r, p]];
                    let bq = b[[r, q]];
                    alpha += bp * bp;
                    beta += bq * bq;
                    gamma += bp * bq;
                }
                if gamma.abs() <= tol * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..rows {
                    let bp = b[[r, p]];
                    let bq = b[[r, q]];
                    b[[r, p]] = c * bp - s * bq;
                    b[[r, q]] = s * bp + c * bq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sigma: Vec<f64> = (0..cols)
        .map(|j| (0..rows).map(|r| b[[r, j]] * b[[r, j]]).sum::<f64>().sqrt())
        .collect();
    sigma.sort_by(|x, y| y.partial_cmp(x).unwrap());
    sigma
}

/// Eigenvalues of a symmetric matrix by classical Jacobi, descending.
pub fn sym_eigenvalues(m: &Array2<f64>) -> Vec<f64> {
    let n = m.nrows();
    assert_eq!(n, m.ncols());
    let mut a = m.clone();
    let max_sweeps = 60;
    for _ in 0..max_sweeps {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[[i, j]] * a[[i, j]];
            }
        }
        if off.sqrt() < 1e-14 * (1.0 + a.diag().iter().map(|d| d.abs()).fold(0.0, f64::max)) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let app = a[[p, p]];
                let aqq = a[[q, q]];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = a.diag().to_vec();
    eig.sort_by(|x, y| y.partial_cmp(x).unwrap());
    eig
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn diagonal_spectrum() {
        let mut a = Array2::zeros((2, 2));
        a[[0, 0]] = 3.0;
        a[[1, 1]] = 1.0;
        let s = singular_values(&a);
        assert!((s[0] - 3.0).abs() < 1e-12);
        assert!((s[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_gram_eigen_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Array2::from_shape_fn((8, 16), |_| rng.gen_range(-1.0..1.0));
        let s = singular_values(&a);
        // Oracle: sqrt of eigenvalues of A A^T via the symmetric solver.
        let gram = a.dot(&a.t());
        let eig = sym_eigenvalues(&gram);
        assert_eq!(s.len(), 8);
        for (sv, ev) in s.iter().zip(eig.iter()) {
            assert!((sv - ev.max(0.0).sqrt()).abs() < 1e-8, "{sv} vs {ev}");
        }
    }

    #[test]
    fn rank_deficiency_detected() {
        // Two identical rows: one singular value must be ~0.
        let mut a = Array2::zeros((2, 4));
        for j in 0..4 {
            a[[0, j]] = (j + 1) as f64;
            a[[1, j]] = (j + 1) as f64;
        }
        let s = singular_values(&a);
        assert!(s[1] < 1e-12 * s[0]);
    }
}
