//! Minimal dense linear algebra: Gaussian-elimination solve, Jacobi symmetric
//! eigendecomposition, and seeded random orthogonal matrices. All routines are
//! deterministic and sized for desk-scale dimensions (d <= a few hundred).

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Solves `a * x = b` by Gaussian elimination with partial pivoting.
pub fn solve(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::Shape(format!(
            "solve: expected square system, got {}x{} with rhs {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    let mut m = a.clone();
    let mut x = b.clone();
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if m[[row, col]].abs() > m[[pivot, col]].abs() {
                pivot = row;
            }
        }
        if m[[pivot, col]].abs() < 1e-14 {
            return Err(Error::Numeric("solve: singular matrix".into()));
        }
        if pivot != col {
            for j in 0..n {
                m.swap([col, j], [pivot, j]);
            }
            x.swap(col, pivot);
        }
        for row in col + 1..n {
            let f = m[[row, col]] / m[[col, col]];
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                m[[row, j]] -= f * m[[col, j]];
            }
            x[row] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        let mut s = x[col];
        for j in col + 1..n {
            s -= m[[col, j]] * x[j];
        }
        x[col] = s / m[[col, col]];
    }
    Ok(x)
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns `(eigenvalues, eigenvectors)` sorted by descending eigenvalue;
/// eigenvectors are the columns of the returned matrix.
pub fn eigh(a: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Shape("eigh: matrix not square".into()));
    }
    let mut m = a.clone();
    let mut v = Array2::<f64>::eye(n);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += m[[p, q]] * m[[p, q]];
            }
        }
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[[p, q]];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[j, j]].partial_cmp(&m[[i, i]]).unwrap());
    let mut vals = Array1::<f64>::zeros(n);
    let mut vecs = Array2::<f64>::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        vals[dst] = m[[src, src]];
        // Fix sign: largest-magnitude component positive.
        let col = v.column(src);
        let mut imax = 0;
        for k in 0..n {
            if col[k].abs() > col[imax].abs() {
                imax = k;
            }
        }
        let sign = if col[imax] < 0.0 { -1.0 } else { 1.0 };
        for k in 0..n {
            vecs[[k, dst]] = sign * col[k];
        }
    }
    Ok((vals, vecs))
}

/// Draws a random orthogonal matrix via Gram-Schmidt on a Gaussian matrix.
pub fn random_orthogonal(dim: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut q = Array2::<f64>::zeros((dim, dim));
    for j in 0..dim {
        let mut col: Array1<f64> = (0..dim).map(|_| gaussian(rng)).collect();
        loop {
            for k in 0..j {
                let proj: f64 = (0..dim).map(|i| q[[i, k]] * col[i]).sum();
                for i in 0..dim {
                    col[i] -= proj * q[[i, k]];
                }
            }
            let norm = col.dot(&col).sqrt();
            if norm > 1e-8 {
                col /= norm;
                break;
            }
            col = (0..dim).map(|_| gaussian(rng)).collect();
        }
        for i in 0..dim {
            q[[i, j]] = col[i];
        }
    }
    q
}

/// Standard normal draw (Box-Muller, deterministic per rng stream).
pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// L2-normalizes a vector in place; errors on (near-)zero norm.
pub fn l2_normalize(v: &mut Array1<f64>) -> Result<()> {
    let norm = v.dot(v).sqrt();
    if norm < 1e-12 {
        return Err(Error::Degenerate("cannot normalize zero-norm vector".into()));
    }
    *v /= norm;
    Ok(())
}

/// Returning variant of [`l2_normalize`].
pub fn l2_normalized(v: &Array1<f64>) -> Result<Array1<f64>> {
    let mut out = v.clone();
    l2_normalize(&mut out)?;
    Ok(out)
}
