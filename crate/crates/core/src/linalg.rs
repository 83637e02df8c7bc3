//! Small dense linear-algebra kernels used by the fitting engine.
//!
//! All systems solved here are symmetric positive definite and of modest
//! dimension (a few hundred), so an unblocked Cholesky is sufficient and
//! keeps results bitwise reproducible across runs.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Result, SopError};

#[inline]
fn dot_slices(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(&x, &y)| x * y).sum()
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
///
/// Row-oriented so the inner reductions run over contiguous memory.
pub fn cholesky(a: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(SopError::Config(format!(
            "cholesky requires a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    let mut l = a.to_owned();
    let data = l
        .as_slice_mut()
        .expect("owned matrix is contiguous row-major");
    for j in 0..n {
        let (head, row_j) = data.split_at_mut(j * n);
        let _ = head;
        let d = row_j[j] - dot_slices(&row_j[..j], &row_j[..j]);
        if !(d > 0.0) || !d.is_finite() {
            return Err(SopError::Numeric(format!(
                "cholesky breakdown at pivot {j} (value {d:.3e})"
            )));
        }
        let dj = d.sqrt();
        row_j[j] = dj;
        let (row_j, tail) = row_j.split_at_mut(n);
        for (off, row_i) in tail.chunks_exact_mut(n).enumerate() {
            let i = j + 1 + off;
            let _ = i;
            let s = row_i[j] - dot_slices(&row_i[..j], &row_j[..j]);
            row_i[j] = s / dj;
        }
    }
    // zero the strict upper triangle left over from the input copy
    for i in 0..n {
        for j in (i + 1)..n {
            data[i * n + j] = 0.0;
        }
    }
    Ok(l)
}

/// Solve `L L^T x = b` given the lower factor.
pub fn cholesky_solve_vec(l: &Array2<f64>, b: &ArrayView1<f64>) -> Array1<f64> {
    let n = l.nrows();
    debug_assert_eq!(b.len(), n);
    let ld = l.as_slice().expect("factor is contiguous row-major");
    let mut x = b.to_owned();
    let xs = x.as_slice_mut().expect("owned vector is contiguous");
    // forward: L y = b
    for i in 0..n {
        let row = &ld[i * n..i * n + i];
        let s = xs[i] - dot_slices(row, &xs[..i]);
        xs[i] = s / ld[i * n + i];
    }
    // backward: L^T x = y, accumulating down columns of L
    for i in (0..n).rev() {
        let mut s = xs[i];
        for k in (i + 1)..n {
            s -= ld[k * n + i] * xs[k];
        }
        xs[i] = s / ld[i * n + i];
    }
    x
}

/// Solve `L L^T X = B` column by column.
pub fn cholesky_solve_mat(l: &Array2<f64>, b: &ArrayView2<f64>) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros(b.raw_dim());
    for (j, col) in b.columns().into_iter().enumerate() {
        out.column_mut(j).assign(&cholesky_solve_vec(l, &col));
    }
    out
}

/// log det(A) from the lower Cholesky factor of A.
pub fn cholesky_logdet(l: &Array2<f64>) -> f64 {
    2.0 * (0..l.nrows()).map(|i| l[[i, i]].ln()).sum::<f64>()
}

/// Full inverse of a symmetric positive definite matrix via its factor.
pub fn cholesky_inverse(l: &Array2<f64>) -> Array2<f64> {
    let n = l.nrows();
    let ld = l.as_slice().expect("factor is contiguous row-major");
    // columns of L^{-1} by forward substitution into a contiguous buffer
    let mut m = Array2::<f64>::zeros((n, n));
    let md = m.as_slice_mut().expect("owned matrix is contiguous");
    let mut col = vec![0.0_f64; n];
    for j in 0..n {
        col[..n].fill(0.0);
        col[j] = 1.0 / ld[j * n + j];
        for i in (j + 1)..n {
            let row = &ld[i * n + j..i * n + i];
            let s = dot_slices(row, &col[j..i]);
            col[i] = -s / ld[i * n + i];
        }
        for i in j..n {
            md[i * n + j] = col[i];
        }
    }
    // A^{-1} = L^{-T} L^{-1} = M^T M
    let inv = m.t().dot(&m);
    // symmetrize away rounding
    let mut out = inv;
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (out[[i, j]] + out[[j, i]]);
            out[[i, j]] = v;
            out[[j, i]] = v;
        }
    }
    out
}

/// Invert a symmetric positive definite matrix.
///
/// The matrix is diagonally equilibrated before factorization; entries of
/// widely varying scale (collapsed variance components) would otherwise
/// poison the factor.
pub fn spd_inverse(a: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    let mut s = Vec::with_capacity(n);
    for i in 0..n {
        let d = a[[i, i]];
        if !(d > 0.0) || !d.is_finite() {
            return Err(SopError::Numeric(format!(
                "matrix diagonal entry {i} is not positive ({d:.3e})"
            )));
        }
        s.push(1.0 / d.sqrt());
    }
    let scaled = Array2::from_shape_fn((n, n), |(i, j)| a[[i, j]] * s[i] * s[j]);
    let l = cholesky(&scaled.view())?;
    let mut inv = cholesky_inverse(&l);
    for i in 0..n {
        for j in 0..n {
            inv[[i, j]] *= s[i] * s[j];
        }
    }
    Ok(inv)
}

/// Kronecker product, row/column index of `b` varying fastest.
pub fn kron(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Array2<f64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::<f64>::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let v = a[[i, j]];
            if v == 0.0 {
                continue;
            }
            for p in 0..br {
                for q in 0..bc {
                    out[[i * br + p, j * bc + q]] = v * b[[p, q]];
                }
            }
        }
    }
    out
}

/// Row-wise Kronecker product: row `i` of the result is
/// `slow.row(i) (x) fast.row(i)`, the fast factor's column index varying
/// fastest. This is the tensor-product design matrix of two marginal bases.
pub fn row_kron(slow: &ArrayView2<f64>, fast: &ArrayView2<f64>) -> Array2<f64> {
    let n = slow.nrows();
    debug_assert_eq!(fast.nrows(), n);
    let (cs, cf) = (slow.ncols(), fast.ncols());
    let mut out = Array2::<f64>::zeros((n, cs * cf));
    for i in 0..n {
        for s in 0..cs {
            let v = slow[[i, s]];
            if v == 0.0 {
                continue;
            }
            for f in 0..cf {
                out[[i, f + cf * s]] = v * fast[[i, f]];
            }
        }
    }
    out
}

/// Orthonormalize the columns of `a` with modified Gram-Schmidt.
///
/// Errors if a column is (numerically) dependent on the previous ones.
pub fn orthonormal_columns(a: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let (n, k) = a.dim();
    let mut q = a.to_owned();
    for j in 0..k {
        for pass in 0..2 {
            let _ = pass;
            for i in 0..j {
                let qi = q.column(i).to_owned();
                let r = qi.dot(&q.column(j));
                let mut col = q.column_mut(j);
                col.scaled_add(-r, &qi);
            }
        }
        let norm = q.column(j).dot(&q.column(j)).sqrt();
        if norm <= 1e-10 * (n as f64).sqrt() {
            return Err(SopError::Rank(format!(
                "column {j} is linearly dependent during orthonormalization"
            )));
        }
        q.column_mut(j).mapv_inplace(|v| v / norm);
    }
    Ok(q)
}
