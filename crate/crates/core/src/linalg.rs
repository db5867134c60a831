//! Dense and tridiagonal symmetric eigensolvers.
//!
//! The workhorse is an implicit-shift QL iteration on symmetric tridiagonal
//! matrices with three accumulation modes: none (values only), first row of
//! the rotation product (enough for quadrature weights and spectral masses),
//! and the full orthogonal factor. Dense symmetric matrices are reduced to
//! tridiagonal form by Householder reflections first. A Sturm-count bisection
//! plus inverse-iteration path backs the QL sweep up if an eigenvalue fails
//! to deflate within the iteration cap.

use crate::error::{Error, Result};

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Mat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    /// Column `j` as an owned vector.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// Matrix-vector product.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| {
                let row = &self.data[i * self.cols..(i + 1) * self.cols];
                row.iter().zip(x).map(|(a, b)| a * b).sum()
            })
            .collect()
    }
}

/// What to accumulate alongside the eigenvalues.
enum Accum {
    None,
    /// First row of the accumulated orthogonal factor (starts as e_1^T).
    FirstRow(Vec<f64>),
    /// Full orthogonal factor (starts as the supplied matrix).
    Full(Mat),
}

impl Accum {
    #[inline]
    fn rotate(&mut self, i: usize, c: f64, s: f64) {
        match self {
            Accum::None => {}
            Accum::FirstRow(z) => {
                let f = z[i + 1];
                z[i + 1] = s * z[i] + c * f;
                z[i] = c * z[i] - s * f;
            }
            Accum::Full(q) => {
                for k in 0..q.rows {
                    let f = q.get(k, i + 1);
                    q.set(k, i + 1, s * q.get(k, i) + c * f);
                    q.set(k, i, c * q.get(k, i) - s * f);
                }
            }
        }
    }

    fn permute(&mut self, perm: &[usize]) {
        match self {
            Accum::None => {}
            Accum::FirstRow(z) => {
                let old = z.clone();
                for (new, &pos) in perm.iter().enumerate() {
                    z[new] = old[pos];
                }
            }
            Accum::Full(q) => {
                let old = q.clone();
                for (new, &pos) in perm.iter().enumerate() {
                    for k in 0..q.rows {
                        q.set(k, new, old.get(k, pos));
                    }
                }
            }
        }
    }
}

const QL_MAX_ITER: usize = 30;

/// Implicit-shift QL sweeps. `d` holds the diagonal (length n), `e` the
/// subdiagonal (`e[i]` couples i and i+1; length n, last entry ignored).
/// Returns Err(l) when eigenvalue `l` fails to deflate in 30 iterations.
fn ql_implicit(d: &mut [f64], e: &mut [f64], acc: &mut Accum) -> std::result::Result<(), usize> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    e[n - 1] = 0.0;

    for l in 0..n {
        let mut iter = 0usize;
        loop {
            // Find the first negligible subdiagonal at or after l.
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > QL_MAX_ITER {
                return Err(l);
            }

            // Wilkinson-style shift from the top 2x2 of the active block.
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(if g == 0.0 { 1.0 } else { g }));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow = false;

            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    // Recover from underflow: deflate and restart the sweep.
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                acc.rotate(i, c, s);
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

fn sort_ascending(d: &mut [f64], acc: &mut Accum) {
    let n = d.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let old = d.to_vec();
    for (new, &pos) in idx.iter().enumerate() {
        d[new] = old[pos];
    }
    acc.permute(&idx);
}

/// Eigenvalues of a symmetric tridiagonal matrix, ascending.
pub fn tridiag_eigenvalues(diag: &[f64], offdiag: &[f64]) -> Result<Vec<f64>> {
    check_tridiag(diag, offdiag)?;
    let mut d = diag.to_vec();
    let mut e = padded(offdiag, diag.len());
    let mut acc = Accum::None;
    if ql_implicit(&mut d, &mut e, &mut acc).is_err() {
        // Bisection never fails to bracket; use it as the fallback.
        let mut vals = tridiag_eigenvalues_bisection(diag, offdiag);
        vals.sort_by(f64::total_cmp);
        return Ok(vals);
    }
    sort_ascending(&mut d, &mut acc);
    Ok(d)
}

/// Eigenvalues plus the first components of the orthonormal eigenvectors,
/// i.e. row one of the orthogonal factor. This is what Golub-Welsch weights
/// and spectral masses need, and it costs O(n^2) instead of O(n^3).
pub fn tridiag_eigen_first_components(
    diag: &[f64],
    offdiag: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_tridiag(diag, offdiag)?;
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = padded(offdiag, n);
    let mut z = vec![0.0; n];
    z[0] = 1.0;
    let mut acc = Accum::FirstRow(z);
    if ql_implicit(&mut d, &mut e, &mut acc).is_err() {
        let full = tridiag_eigen_fallback(diag, offdiag)?;
        let first = (0..n).map(|k| full.vectors.get(0, k)).collect();
        return Ok((full.values, first));
    }
    sort_ascending(&mut d, &mut acc);
    match acc {
        Accum::FirstRow(z) => Ok((d, z)),
        _ => unreachable!(),
    }
}

/// Full symmetric tridiagonal eigendecomposition.
pub fn tridiag_eigen(diag: &[f64], offdiag: &[f64]) -> Result<SymEigen> {
    check_tridiag(diag, offdiag)?;
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = padded(offdiag, n);
    let mut acc = Accum::Full(Mat::identity(n));
    if ql_implicit(&mut d, &mut e, &mut acc).is_err() {
        return tridiag_eigen_fallback(diag, offdiag);
    }
    sort_ascending(&mut d, &mut acc);
    match acc {
        Accum::Full(q) => Ok(SymEigen {
            values: d,
            vectors: q,
        }),
        _ => unreachable!(),
    }
}

/// Eigendecomposition of a symmetric matrix: `values` ascending, `vectors`
/// holding the orthonormal eigenvector for `values[k]` in column `k`.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Mat,
}

/// Full eigendecomposition of a dense symmetric matrix (upper part read).
pub fn sym_eigen(a: &Mat) -> Result<SymEigen> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "symmetric eigensolve needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    if n == 0 {
        return Ok(SymEigen {
            values: vec![],
            vectors: Mat::zeros(0, 0),
        });
    }
    let mut work = a.clone();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(&mut work, &mut d, &mut e);
    // tred2 yields e[i] coupling (i-1, i); the QL sweep wants (i, i+1).
    e.rotate_left(1);
    e[n - 1] = 0.0;
    let mut acc = Accum::Full(work);
    if ql_implicit(&mut d, &mut e, &mut acc).is_err() {
        // Redo from the tridiagonal form via bisection, then map the vectors
        // back through the accumulated Householder factor.
        let mut work2 = a.clone();
        let mut d2 = vec![0.0; n];
        let mut e2 = vec![0.0; n];
        tred2(&mut work2, &mut d2, &mut e2);
        let off: Vec<f64> = e2[1..].to_vec();
        let tri = tridiag_eigen_fallback(&d2, &off)?;
        let mut vectors = Mat::zeros(n, n);
        for k in 0..n {
            let v = tri.vectors.column(k);
            let mapped = work2.matvec(&v);
            for i in 0..n {
                vectors.set(i, k, mapped[i]);
            }
        }
        return Ok(SymEigen {
            values: tri.values,
            vectors,
        });
    }
    sort_ascending(&mut d, &mut acc);
    match acc {
        Accum::Full(q) => Ok(SymEigen {
            values: d,
            vectors: q,
        }),
        _ => unreachable!(),
    }
}

/// Householder reduction to tridiagonal form with accumulation of the
/// orthogonal transform in `a` (classic tred2). On exit `d` is the diagonal,
/// `e[1..]` the subdiagonal, and `a` the transformation matrix Q with
/// A = Q T Q^T.
fn tred2(a: &mut Mat, d: &mut [f64], e: &mut [f64]) {
    let n = a.nrows();
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        if l > 0 {
            let mut scale = 0.0;
            for k in 0..=l {
                scale += a.get(i, k).abs();
            }
            if scale == 0.0 {
                e[i] = a.get(i, l);
            } else {
                for k in 0..=l {
                    let v = a.get(i, k) / scale;
                    a.set(i, k, v);
                    h += v * v;
                }
                let mut f = a.get(i, l);
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                a.set(i, l, f - g);
                f = 0.0;
                for j in 0..=l {
                    a.set(j, i, a.get(i, j) / h);
                    let mut g = 0.0;
                    for k in 0..=j {
                        g += a.get(j, k) * a.get(i, k);
                    }
                    for k in (j + 1)..=l {
                        g += a.get(k, j) * a.get(i, k);
                    }
                    e[j] = g / h;
                    f += e[j] * a.get(i, j);
                }
                let hh = f / (h + h);
                for j in 0..=l {
                    let f = a.get(i, j);
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        let v = a.get(j, k) - (f * e[k] + g * a.get(i, k));
                        a.set(j, k, v);
                    }
                }
            }
        } else {
            e[i] = a.get(i, l);
        }
        d[i] = h;
    }
    d[0] = 0.0;
    e[0] = 0.0;
    for i in 0..n {
        if d[i] != 0.0 {
            for j in 0..i {
                let mut g = 0.0;
                for k in 0..i {
                    g += a.get(i, k) * a.get(k, j);
                }
                for k in 0..i {
                    let v = a.get(k, j) - g * a.get(k, i);
                    a.set(k, j, v);
                }
            }
        }
        d[i] = a.get(i, i);
        a.set(i, i, 1.0);
        for j in 0..i {
            a.set(j, i, 0.0);
            a.set(i, j, 0.0);
        }
    }
}

// ---------------------------------------------------------------------------
// Bisection + inverse iteration fallback
// ---------------------------------------------------------------------------

/// Number of eigenvalues of T strictly below `x` (Sturm count).
fn sturm_count(diag: &[f64], offdiag: &[f64], x: f64) -> usize {
    let n = diag.len();
    let mut count = 0;
    let mut q = 1.0f64;
    for i in 0..n {
        let esq = if i == 0 {
            0.0
        } else {
            offdiag[i - 1] * offdiag[i - 1]
        };
        let denom = if q == 0.0 { f64::MIN_POSITIVE } else { q };
        q = diag[i] - x - esq / denom;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// All eigenvalues by Sturm-count bisection inside Gershgorin bounds.
pub fn tridiag_eigenvalues_bisection(diag: &[f64], offdiag: &[f64]) -> Vec<f64> {
    let n = diag.len();
    if n == 0 {
        return vec![];
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { offdiag[i - 1].abs() } else { 0.0 }
            + if i + 1 < n { offdiag[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    let span = (hi - lo).max(1.0);
    let (lo, hi) = (lo - 1e-12 * span, hi + 1e-12 * span);
    (0..n)
        .map(|k| {
            let (mut a, mut b) = (lo, hi);
            for _ in 0..110 {
                let mid = 0.5 * (a + b);
                if sturm_count(diag, offdiag, mid) <= k {
                    a = mid;
                } else {
                    b = mid;
                }
                if b - a <= f64::EPSILON * (a.abs() + b.abs()).max(f64::MIN_POSITIVE) {
                    break;
                }
            }
            0.5 * (a + b)
        })
        .collect()
}

/// Eigenvector for an isolated eigenvalue by inverse iteration with a
/// partially pivoted tridiagonal solve.
fn inverse_iteration(diag: &[f64], offdiag: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let n = diag.len();
    let scale = diag
        .iter()
        .chain(offdiag.iter())
        .fold(0.0f64, |m, &v| m.max(v.abs()))
        .max(1.0);
    // Deterministic seed vector.
    let mut v: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.5 * ((i as f64 + 1.0) * 0.7391).sin())
        .collect();
    normalize(&mut v);
    let shift = lambda + scale * 1e-14;
    for _ in 0..4 {
        let mut w = solve_shifted_tridiag(diag, offdiag, shift, &v)?;
        normalize(&mut w);
        v = w;
    }
    Ok(v)
}

/// Solve (T - shift I) x = b by Gaussian elimination with partial pivoting.
/// Pivoting introduces one extra superdiagonal of fill-in.
fn solve_shifted_tridiag(diag: &[f64], offdiag: &[f64], shift: f64, b: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut main: Vec<f64> = diag.iter().map(|&d| d - shift).collect();
    let mut up1: Vec<f64> = offdiag.to_vec();
    let mut up2: Vec<f64> = vec![0.0; n.saturating_sub(2)];
    let mut rhs = b.to_vec();

    for i in 0..n.saturating_sub(1) {
        let low = offdiag[i]; // subdiagonal entry (i+1, i), untouched so far
        let next_up1 = if i + 2 < n { up1[i + 1] } else { 0.0 };
        if low.abs() > main[i].abs() {
            // Swap rows i and i+1, then eliminate with multiplier <= 1.
            let m = if low == 0.0 { 0.0 } else { main[i] / low };
            main[i] = low;
            let old_up1_i = up1[i];
            up1[i] = main[i + 1];
            if i + 2 < n {
                up2[i] = next_up1;
            }
            main[i + 1] = old_up1_i - m * up1[i];
            if i + 2 < n {
                up1[i + 1] = -m * next_up1;
            }
            rhs.swap(i, i + 1);
            rhs[i + 1] -= m * rhs[i];
        } else {
            let pivot = if main[i] == 0.0 {
                f64::MIN_POSITIVE
            } else {
                main[i]
            };
            main[i] = pivot;
            let m = low / pivot;
            main[i + 1] -= m * up1[i];
            // up2[i] stays zero: no fill-in without a swap.
            rhs[i + 1] -= m * rhs[i];
        }
    }
    if n > 0 && main[n - 1] == 0.0 {
        main[n - 1] = f64::MIN_POSITIVE;
    }

    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = rhs[i];
        if i + 1 < n {
            s -= up1[i] * x[i + 1];
        }
        if i + 2 < n {
            s -= up2[i] * x[i + 2];
        }
        x[i] = s / main[i];
        if !x[i].is_finite() {
            return Err(Error::NonConvergence {
                solver: "inverse iteration",
                iterations: 4,
                detail: "singular shifted tridiagonal solve".into(),
            });
        }
    }
    Ok(x)
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

/// Bisection eigenvalues plus inverse-iteration eigenvectors with Gram-Schmidt
/// reorthogonalization of vectors belonging to clustered eigenvalues.
fn tridiag_eigen_fallback(diag: &[f64], offdiag: &[f64]) -> Result<SymEigen> {
    let n = diag.len();
    let mut values = tridiag_eigenvalues_bisection(diag, offdiag);
    values.sort_by(f64::total_cmp);
    let mut vectors = Mat::zeros(n, n);
    let scale = diag
        .iter()
        .chain(offdiag.iter())
        .fold(0.0f64, |m, &v| m.max(v.abs()))
        .max(1.0);
    let mut cluster_start = 0usize;
    for k in 0..n {
        let mut v = inverse_iteration(diag, offdiag, values[k])?;
        if k > 0 && (values[k] - values[k - 1]).abs() > 1e-8 * scale {
            cluster_start = k;
        }
        // Orthogonalize within the current cluster.
        for j in cluster_start..k {
            let prev = vectors.column(j);
            let dot: f64 = v.iter().zip(&prev).map(|(a, b)| a * b).sum();
            for (vi, pi) in v.iter_mut().zip(&prev) {
                *vi -= dot * pi;
            }
        }
        normalize(&mut v);
        for i in 0..n {
            vectors.set(i, k, v[i]);
        }
    }
    Ok(SymEigen { values, vectors })
}

fn check_tridiag(diag: &[f64], offdiag: &[f64]) -> Result<()> {
    if !diag.is_empty() && offdiag.len() != diag.len() - 1 {
        return Err(Error::DimensionMismatch(format!(
            "tridiagonal matrix needs {} off-diagonal entries, got {}",
            diag.len() - 1,
            offdiag.len()
        )));
    }
    Ok(())
}

fn padded(offdiag: &[f64], n: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[..offdiag.len()].copy_from_slice(offdiag);
    e
}
