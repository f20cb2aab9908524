//! Dense linear-algebra kernels shared by every other module.
//!
//! Storage is row-major and sizes stay small (the design envelope is
//! dimension <= 128 and a few thousand objects), so decompositions use plain
//! Jacobi iterations instead of an external solver.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Kronecker products above this many output entries are refused.
pub const KRON_MAX_ENTRIES: usize = 1 << 26;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, S::one());
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::ShapeMismatch("ragged rows".into()));
            }
            data.extend_from_slice(row);
        }
        Matrix::from_vec(r, c, data)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// Entries drawn i.i.d. from `scale` times a standard normal.
    pub fn gaussian(rows: usize, cols: usize, scale: f64, rng: &mut crate::rng::Rng) -> Self {
        let data = (0..rows * cols)
            .map(|_| S::from_f64(scale * rng.next_gauss()))
            .collect();
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> S {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: S) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [S] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn column(&self, j: usize) -> Vec<S> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix<S>) -> Result<Matrix<S>> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == S::zero() {
                    continue;
                }
                let brow = other.row(k);
                let orow = out.row_mut(i);
                for j in 0..other.cols {
                    orow[j] += a * brow[j];
                }
            }
        }
        Ok(out)
    }

    /// Matrix-vector product.
    pub fn matvec(&self, x: &[S]) -> Result<Vec<S>> {
        if x.len() != self.cols {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} matrix times length-{} vector",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        Ok(self.data.chunks_exact(self.cols).map(|row| dot(row, x)).collect())
    }

    /// Matrix-vector product into a caller buffer.
    pub fn matvec_into(&self, x: &[S], out: &mut [S]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o = dot(row, x);
        }
    }

    /// Transposed matrix-vector product, A^T x, without forming A^T.
    pub fn tr_matvec(&self, x: &[S]) -> Result<Vec<S>> {
        if x.len() != self.rows {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} matrix transposed times length-{} vector",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        let mut out = vec![S::zero(); self.cols];
        self.tr_matvec_into(x, &mut out);
        Ok(out)
    }

    /// Transposed matrix-vector product into a caller buffer.
    pub fn tr_matvec_into(&self, x: &[S], out: &mut [S]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        out.fill(S::zero());
        for (&xi, row) in x.iter().zip(self.data.chunks_exact(self.cols)) {
            if xi == S::zero() {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(row) {
                *o += a * xi;
            }
        }
    }

    /// Rank-1 update: self += c * u v^T.
    pub fn rank_one_update(&mut self, c: S, u: &[S], v: &[S]) {
        debug_assert_eq!(u.len(), self.rows);
        debug_assert_eq!(v.len(), self.cols);
        for (&ui, row) in u.iter().zip(self.data.chunks_exact_mut(self.cols)) {
            let cu = c * ui;
            if cu == S::zero() {
                continue;
            }
            for (r, &vj) in row.iter_mut().zip(v) {
                *r += cu * vj;
            }
        }
    }

    /// out += c * (self x).
    pub fn matvec_axpy(&self, c: S, x: &[S], out: &mut [S]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o += c * dot(row, x);
        }
    }

    /// out += c * (self^T x).
    pub fn tr_matvec_axpy(&self, c: S, x: &[S], out: &mut [S]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (&xi, row) in x.iter().zip(self.data.chunks_exact(self.cols)) {
            let cxi = c * xi;
            if cxi == S::zero() {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(row) {
                *o += cxi * a;
            }
        }
    }

    pub fn add(&self, other: &Matrix<S>) -> Result<Matrix<S>> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix<S>) -> Result<Matrix<S>> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Matrix<S>, f: impl Fn(S, S) -> S) -> Result<Matrix<S>> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&self, c: S) -> Matrix<S> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * c).collect(),
        }
    }

    pub fn scale_in_place(&mut self, c: S) {
        for x in &mut self.data {
            *x *= c;
        }
    }

    pub fn add_in_place(&mut self, other: &Matrix<S>) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn frob_norm(&self) -> S {
        self.data.iter().map(|&x| x * x).sum::<S>().sqrt()
    }

    /// Frobenius norm of self - other; shapes must match.
    pub fn frob_dist(&self, other: &Matrix<S>) -> S {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<S>()
            .sqrt()
    }

    /// ||A^T A - I||_F, the deviation from column orthonormality.
    pub fn orthogonality_residual(&self) -> S {
        let gram = self.transpose().matmul(self).expect("square gram");
        gram.frob_dist(&Matrix::identity(self.cols))
    }
}

/// Dot product, four-way unrolled to break the serial dependency chain.
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [S::zero(); 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (xa, xb) in (&mut ca).zip(&mut cb) {
        acc[0] += xa[0] * xb[0];
        acc[1] += xa[1] * xb[1];
        acc[2] += xa[2] * xb[2];
        acc[3] += xa[3] * xb[3];
    }
    let mut tail = S::zero();
    for (&x, &y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    acc[0] + acc[1] + acc[2] + acc[3] + tail
}

/// Euclidean norm.
pub fn norm<S: Scalar>(v: &[S]) -> S {
    dot(v, v).sqrt()
}

/// Rank-1 outer product u v^T.
pub fn outer<S: Scalar>(u: &[S], v: &[S]) -> Matrix<S> {
    let mut m = Matrix::zeros(u.len(), v.len());
    for (i, &ui) in u.iter().enumerate() {
        for (j, &vj) in v.iter().enumerate() {
            m.set(i, j, ui * vj);
        }
    }
    m
}

/// Scales `v` to unit norm; no-op on the zero vector.
pub fn normalize<S: Scalar>(v: &mut [S]) -> S {
    let n = norm(v);
    if n > S::zero() {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
    n
}

/// log(sum(exp(x_i))) computed with a max shift so magnitudes up to 1e6 do
/// not overflow.
pub fn logsumexp<S: Scalar>(xs: &[S]) -> Result<S> {
    if xs.is_empty() {
        return Err(Error::InvalidArgument("logsumexp of empty input".into()));
    }
    let mut m = xs[0];
    for &x in &xs[1..] {
        if x > m {
            m = x;
        }
    }
    let sum: S = xs.iter().map(|&x| (x - m).exp()).sum();
    Ok(m + sum.ln())
}

/// Logistic function, evaluated branch-wise so neither tail overflows.
pub fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

/// log(1 + exp(x)) without overflow; -log(sigmoid(-x)).
pub fn softplus<S: Scalar>(x: S) -> S {
    if x > S::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Kronecker product. Vectors are the single-column case.
pub fn kron<S: Scalar>(a: &Matrix<S>, b: &Matrix<S>) -> Result<Matrix<S>> {
    let (p, q) = (a.rows(), a.cols());
    let (r, s) = (b.rows(), b.cols());
    let entries = p
        .checked_mul(r)
        .and_then(|x| x.checked_mul(q))
        .and_then(|x| x.checked_mul(s));
    match entries {
        Some(n) if n <= KRON_MAX_ENTRIES => {}
        _ => {
            return Err(Error::CapacityExceeded {
                rows: p * r,
                cols: q * s,
                cap: KRON_MAX_ENTRIES,
            })
        }
    }
    let mut out = Matrix::zeros(p * r, q * s);
    for i in 0..p {
        for j in 0..q {
            let aij = a.get(i, j);
            if aij == S::zero() {
                continue;
            }
            for k in 0..r {
                let orow = out.row_mut(i * r + k);
                let brow = b.row(k);
                for l in 0..s {
                    orow[j * s + l] = aij * brow[l];
                }
            }
        }
    }
    Ok(out)
}

/// Kronecker product of two vectors, (u kron v)[i*|v| + j] = u_i v_j.
pub fn kron_vec<S: Scalar>(u: &[S], v: &[S]) -> Vec<S> {
    let mut out = Vec::with_capacity(u.len() * v.len());
    for &ui in u {
        for &vj in v {
            out.push(ui * vj);
        }
    }
    out
}

/// Thin SVD A = U diag(sigma) V^T of a square matrix, by one-sided Jacobi
/// rotations on columns. Singular values are non-negative; order follows the
/// input columns after orthogonalization.
pub struct Svd<S> {
    pub u: Matrix<S>,
    pub sigma: Vec<S>,
    pub v: Matrix<S>,
}

pub fn svd_square<S: Scalar>(a: &Matrix<S>) -> Result<Svd<S>> {
    if !a.is_square() {
        return Err(Error::ShapeMismatch(format!(
            "svd_square needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let n = a.cols();
    let mut g = a.clone();
    let mut v = Matrix::identity(n);
    let eps = S::epsilon();
    let max_sweeps = 60;
    for _ in 0..max_sweeps {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (mut app, mut aqq, mut apq) = (S::zero(), S::zero(), S::zero());
                for i in 0..n {
                    let gp = g.get(i, p);
                    let gq = g.get(i, q);
                    app += gp * gp;
                    aqq += gq * gq;
                    apq += gp * gq;
                }
                if apq.abs() <= eps * (app * aqq).sqrt() || apq == S::zero() {
                    continue;
                }
                rotated = true;
                // Jacobi rotation that zeroes the (p,q) entry of G^T G.
                let tau = (aqq - app) / (S::from_f64(2.0) * apq);
                let t = if tau >= S::zero() {
                    S::one() / (tau + (S::one() + tau * tau).sqrt())
                } else {
                    -S::one() / (-tau + (S::one() + tau * tau).sqrt())
                };
                let c = S::one() / (S::one() + t * t).sqrt();
                let s = c * t;
                for i in 0..n {
                    let gp = g.get(i, p);
                    let gq = g.get(i, q);
                    g.set(i, p, c * gp - s * gq);
                    g.set(i, q, s * gp + c * gq);
                    let vp = v.get(i, p);
                    let vq = v.get(i, q);
                    v.set(i, p, c * vp - s * vq);
                    v.set(i, q, s * vp + c * vq);
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut u = Matrix::zeros(n, n);
    let mut sigma = vec![S::zero(); n];
    for j in 0..n {
        let col = g.column(j);
        let s = norm(&col);
        sigma[j] = s;
        if s > S::zero() {
            for i in 0..n {
                u.set(i, j, col[i] / s);
            }
        } else {
            // Zero column: leave U's column zero; callers treat this as rank
            // deficiency.
        }
    }
    Ok(Svd { u, sigma, v })
}

/// Nearest orthogonal matrix U W^T from the polar decomposition M = (UW^T)P.
pub fn polar_retract<S: Scalar>(m: &Matrix<S>) -> Result<Matrix<S>> {
    if !m.is_square() {
        return Err(Error::ShapeMismatch(format!(
            "polar retraction needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let n = m.cols();
    let svd = svd_square(m)?;
    let smax = svd
        .sigma
        .iter()
        .cloned()
        .fold(S::zero(), |a, b| if b > a { b } else { a });
    let tol = smax * S::epsilon() * S::from_usize(n.max(1)) * S::from_f64(16.0);
    if svd.sigma.iter().any(|&s| s <= tol) {
        return Err(Error::SingularInput);
    }
    svd.u.matmul(&svd.v.transpose())
}

/// Eigendecomposition A = V diag(lambda) V^T of a symmetric matrix by cyclic
/// Jacobi sweeps. Eigenpairs come back in the scan order of the final sweep;
/// callers impose their own ordering.
pub fn sym_eig<S: Scalar>(a: &Matrix<S>) -> Result<(Vec<S>, Matrix<S>)> {
    if !a.is_square() {
        return Err(Error::ShapeMismatch("sym_eig needs a square matrix".into()));
    }
    let n = a.rows();
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    let max_sweeps = 60;
    let scale = a.frob_norm() + S::one();
    let stop = scale * S::epsilon() * S::from_usize(n.max(1));
    for _ in 0..max_sweeps {
        let mut off = S::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                off += m.get(i, j) * m.get(i, j);
            }
        }
        if off.sqrt() <= stop {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq == S::zero() {
                    continue;
                }
                let theta = (m.get(q, q) - m.get(p, p)) / (S::from_f64(2.0) * apq);
                let t = if theta >= S::zero() {
                    S::one() / (theta + (S::one() + theta * theta).sqrt())
                } else {
                    -S::one() / (-theta + (S::one() + theta * theta).sqrt())
                };
                let c = S::one() / (S::one() + t * t).sqrt();
                let s = c * t;
                for i in 0..n {
                    let mip = m.get(i, p);
                    let miq = m.get(i, q);
                    m.set(i, p, c * mip - s * miq);
                    m.set(i, q, s * mip + c * miq);
                }
                for j in 0..n {
                    let mpj = m.get(p, j);
                    let mqj = m.get(q, j);
                    m.set(p, j, c * mpj - s * mqj);
                    m.set(q, j, s * mpj + c * mqj);
                }
                for i in 0..n {
                    let vip = v.get(i, p);
                    let viq = v.get(i, q);
                    v.set(i, p, c * vip - s * viq);
                    v.set(i, q, s * vip + c * viq);
                }
            }
        }
    }
    let lambda = (0..n).map(|i| m.get(i, i)).collect();
    Ok((lambda, v))
}

/// Row coordinates on the `k` leading principal directions of a symmetric
/// matrix. Directions are ordered by descending eigenvalue magnitude, with
/// the positive eigenvalue first when magnitudes tie and the scan index as
/// the final tie-break; each direction is signed so its largest-magnitude
/// entry is positive.
pub fn pca_project<S: Scalar>(m: &Matrix<S>, k: usize) -> Result<Matrix<S>> {
    if !m.is_square() {
        return Err(Error::ShapeMismatch("pca_project needs a square matrix".into()));
    }
    let n = m.rows();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "component count {k} out of range 1..={n}"
        )));
    }
    let sym_tol = S::from_f64(1e-9);
    let mut max_asym = S::zero();
    for i in 0..n {
        for j in (i + 1)..n {
            let d = (m.get(i, j) - m.get(j, i)).abs();
            if d > max_asym {
                max_asym = d;
            }
        }
    }
    if max_asym > sym_tol {
        return Err(Error::InvalidArgument(format!(
            "matrix is not symmetric: max |a_ij - a_ji| = {}",
            max_asym.as_f64()
        )));
    }
    // Work on the symmetrized matrix so tiny asymmetries cannot perturb Jacobi.
    let sym = m.add(&m.transpose())?.scale(S::from_f64(0.5));
    let (lambda, vecs) = sym_eig(&sym)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        lambda[j]
            .abs()
            .partial_cmp(&lambda[i].abs())
            .expect("finite eigenvalues")
            .then(lambda[j].partial_cmp(&lambda[i]).expect("finite eigenvalues"))
            .then(i.cmp(&j))
    });

    let mut out = Matrix::zeros(n, k);
    for (col, &idx) in order.iter().take(k).enumerate() {
        let mut dir = vecs.column(idx);
        // Sign convention: largest-magnitude entry positive, first index wins.
        let mut arg = 0;
        for (i, &x) in dir.iter().enumerate() {
            if x.abs() > dir[arg].abs() {
                arg = i;
            }
        }
        if dir[arg] < S::zero() {
            for x in &mut dir {
                *x = -*x;
            }
        }
        let coords = sym.matvec(&dir)?;
        for i in 0..n {
            out.set(i, col, coords[i]);
        }
    }
    Ok(out)
}
