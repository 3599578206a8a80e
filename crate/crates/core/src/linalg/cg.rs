use super::{dot, norm2, LinalgError, SparseMatrix};

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final relative residual `|b - A x| / |b|`.
    pub residual: f64,
}

/// Jacobi-preconditioned conjugate gradients from a zero initial guess.
pub fn conjugate_gradient(
    a: &SparseMatrix,
    b: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<CgOutcome, LinalgError> {
    let n = b.len();
    if a.n_rows() != n || a.n_cols() != n {
        return Err(LinalgError::Dimension { expected: a.n_rows(), found: n });
    }
    let nb = norm2(b);
    let mut x = vec![0.0; n];
    if nb == 0.0 {
        return Ok(CgOutcome { x, iterations: 0, residual: 0.0 });
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        let ap = a.mul_vec(&p)?;
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(LinalgError::NotConverged { iterations: it, residual: norm2(&r) / nb });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let res = norm2(&r) / nb;
        if res <= rel_tol {
            return Ok(CgOutcome { x, iterations: it, residual: res });
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(LinalgError::NotConverged { iterations: max_iter, residual: norm2(&r) / nb })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        SparseMatrix::from_triplets(n, n, &t).unwrap()
    }

    #[test]
    fn converges_on_spd_tridiagonal() {
        let a = laplace_1d(100);
        let b = vec![1.0; 100];
        let out = conjugate_gradient(&a, &b, 1e-12, 1000).unwrap();
        assert!(out.residual <= 1e-12);
        // exact solution of the discrete problem: x_i = (i+1)(n-i)/2
        for (i, xi) in out.x.iter().enumerate() {
            let exact = (i as f64 + 1.0) * (100.0 - i as f64) / 2.0;
            assert!((xi - exact).abs() < 1e-8 * exact);
        }
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let out = conjugate_gradient(&laplace_1d(5), &[0.0; 5], 1e-12, 10).unwrap();
        assert_eq!(out.x, vec![0.0; 5]);
    }

    #[test]
    fn indefinite_matrix_fails() {
        let a = SparseMatrix::from_dense(&[vec![1.0, 0.0], vec![0.0, -1.0]]);
        assert!(conjugate_gradient(&a, &[1.0, 1.0], 1e-12, 10).is_err());
    }
}
