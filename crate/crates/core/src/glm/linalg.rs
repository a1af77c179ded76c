//! Small dense symmetric solves for the IRLS normal equations.

/// Solves `A x = b` for a symmetric positive semi-definite `p × p` matrix
/// (row-major) by Cholesky with diagonal pivoting.
///
/// Pivots are chosen by the largest remaining diagonal relative to the
/// original diagonal, which makes the rank test invariant to column scaling.
/// When every remaining relative diagonal drops below `tol`, the matrix is
/// declared singular and the offending original column with the highest index
/// is returned as `Err`.
pub(crate) fn pivoted_cholesky_solve(a: &[f64], b: &[f64], p: usize, tol: f64) -> Result<Vec<f64>, usize> {
    debug_assert_eq!(a.len(), p * p);
    debug_assert_eq!(b.len(), p);
    let mut m = a.to_vec();
    let orig: Vec<f64> = (0..p).map(|j| a[j * p + j]).collect();
    let mut piv: Vec<usize> = (0..p).collect();

    for k in 0..p {
        let mut best = k;
        let mut best_ratio = f64::NEG_INFINITY;
        for j in k..p {
            let o = orig[piv[j]];
            let r = if o > 0.0 { m[j * p + j] / o } else { 0.0 };
            if r > best_ratio {
                best_ratio = r;
                best = j;
            }
        }
        if !(best_ratio >= tol) {
            return Err(*piv[k..].iter().max().expect("nonempty"));
        }
        if best != k {
            for c in 0..p {
                m.swap(k * p + c, best * p + c);
            }
            for r in 0..p {
                m.swap(r * p + k, r * p + best);
            }
            piv.swap(k, best);
        }
        let lkk = m[k * p + k].sqrt();
        m[k * p + k] = lkk;
        for i in k + 1..p {
            m[i * p + k] /= lkk;
            m[k * p + i] = m[i * p + k];
        }
        for j in k + 1..p {
            let ljk = m[j * p + k];
            for i in j..p {
                let v = m[i * p + j] - m[i * p + k] * ljk;
                m[i * p + j] = v;
                m[j * p + i] = v;
            }
        }
    }

    let mut y: Vec<f64> = piv.iter().map(|&i| b[i]).collect();
    for i in 0..p {
        let mut s = y[i];
        for c in 0..i {
            s -= m[i * p + c] * y[c];
        }
        y[i] = s / m[i * p + i];
    }
    for i in (0..p).rev() {
        let mut s = y[i];
        for r in i + 1..p {
            s -= m[r * p + i] * y[r];
        }
        y[i] = s / m[i * p + i];
    }
    let mut x = vec![0.0; p];
    for (k, &orig_idx) in piv.iter().enumerate() {
        x[orig_idx] = y[k];
    }
    Ok(x)
}
