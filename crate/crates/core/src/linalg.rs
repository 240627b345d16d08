//! Small dense matrices: exact integer cocycle matrices, exact rational
//! elimination for kernels/projections, and p-bit float factorizations
//! (QR, LU, Jacobi) for the spectrum estimators.
//!
//! Everything here is O(d³) on d ≤ 8; clarity over cleverness.

use crate::num::{Ctx, Real};
use rug::ops::CompleteRound;
use rug::Complete;
use rug::{Integer, Rational};

/// Dense integer matrix, row major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntMat {
    pub n: usize,
    data: Vec<Integer>,
}

impl IntMat {
    pub fn zeros(n: usize) -> Self {
        IntMat {
            n,
            data: vec![Integer::new(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = Integer::from(1);
        }
        m
    }

    /// Id + E_{rc}: the elementary Rauzy-Veech step matrix.
    pub fn elementary(n: usize, r: usize, c: usize) -> Self {
        let mut m = Self::identity(n);
        m[(r, c)] += 1;
        m
    }

    /// Id - E_{rc}: exact inverse of [`Self::elementary`].
    pub fn elementary_inv(n: usize, r: usize, c: usize) -> Self {
        let mut m = Self::identity(n);
        m[(r, c)] -= 1;
        m
    }

    pub fn from_rows(rows: &[Vec<i64>]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n);
            for (j, v) in row.iter().enumerate() {
                m[(i, j)] = Integer::from(*v);
            }
        }
        m
    }

    pub fn mul(&self, rhs: &IntMat) -> IntMat {
        assert_eq!(self.n, rhs.n);
        let n = self.n;
        let mut out = IntMat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                if self[(i, k)].is_zero() {
                    continue;
                }
                for j in 0..n {
                    let prod = (&self[(i, k)] * &rhs[(k, j)]).complete();
                    out[(i, j)] += prod;
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> IntMat {
        let n = self.n;
        let mut out = IntMat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out[(j, i)] = self[(i, j)].clone();
            }
        }
        out
    }

    pub fn mul_int_vec(&self, v: &[Integer]) -> Vec<Integer> {
        let n = self.n;
        assert_eq!(v.len(), n);
        (0..n)
            .map(|i| {
                let mut acc = Integer::new();
                for j in 0..n {
                    acc += (&self[(i, j)] * &v[j]).complete();
                }
                acc
            })
            .collect()
    }

    pub fn mul_real_vec(&self, ctx: Ctx, v: &[Real]) -> Vec<Real> {
        let n = self.n;
        assert_eq!(v.len(), n);
        (0..n)
            .map(|i| {
                let mut acc = ctx.zero();
                for j in 0..n {
                    if !self[(i, j)].is_zero() {
                        acc += (&v[j] * &self[(i, j)]).complete(ctx.prec);
                    }
                }
                acc
            })
            .collect()
    }

    /// Paper norm: max over rows of the sum of absolute values.
    pub fn norm(&self) -> Integer {
        let n = self.n;
        (0..n)
            .map(|i| {
                let mut acc = Integer::new();
                for j in 0..n {
                    acc += self[(i, j)].abs_ref().complete();
                }
                acc
            })
            .max()
            .unwrap_or_default()
    }

    pub fn norm_f64(&self) -> f64 {
        self.norm().to_f64()
    }

    /// Row sums: for a product matrix Q(k), row α is the return time Q_α(k).
    pub fn row_sums(&self) -> Vec<Integer> {
        (0..self.n)
            .map(|i| {
                let mut acc = Integer::new();
                for j in 0..self.n {
                    acc += &self[(i, j)];
                }
                acc
            })
            .collect()
    }

    pub fn to_rational(&self) -> RatMat {
        RatMat {
            n: self.n,
            data: self.data.iter().map(|x| Rational::from(x)).collect(),
        }
    }

    pub fn to_real(&self, ctx: Ctx) -> Vec<Vec<Real>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| ctx.real_from_int(&self[(i, j)])).collect())
            .collect()
    }

    /// Rank over the rationals.
    pub fn rank(&self) -> usize {
        self.to_rational().rank()
    }
}

impl std::ops::Index<(usize, usize)> for IntMat {
    type Output = Integer;
    fn index(&self, (i, j): (usize, usize)) -> &Integer {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for IntMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Integer {
        &mut self.data[i * self.n + j]
    }
}

/// Dense rational matrix for exact elimination.
#[derive(Debug, Clone)]
pub struct RatMat {
    pub n: usize,
    data: Vec<Rational>,
}

impl std::ops::Index<(usize, usize)> for RatMat {
    type Output = Rational;
    fn index(&self, (i, j): (usize, usize)) -> &Rational {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for RatMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Rational {
        &mut self.data[i * self.n + j]
    }
}

impl RatMat {
    pub fn rank(&self) -> usize {
        let mut m = self.data.clone();
        let n = self.n;
        let mut rank = 0;
        for col in 0..n {
            let pivot = (rank..n).find(|&r| m[r * n + col] != 0);
            let Some(p) = pivot else { continue };
            for j in 0..n {
                m.swap(rank * n + j, p * n + j);
            }
            let inv = m[rank * n + col].clone().recip();
            for j in 0..n {
                m[rank * n + j] *= &inv;
            }
            for r in 0..n {
                if r != rank && m[r * n + col] != 0 {
                    let factor = m[r * n + col].clone();
                    for j in 0..n {
                        let sub = (&m[rank * n + j] * &factor).complete();
                        m[r * n + j] -= sub;
                    }
                }
            }
            rank += 1;
            if rank == n {
                break;
            }
        }
        rank
    }

    /// Gauss-Jordan inverse; None when singular.
    pub fn inverse(&self) -> Option<RatMat> {
        let n = self.n;
        let mut a = self.data.clone();
        let mut inv: Vec<Rational> = IntMat::identity(n)
            .to_rational()
            .data;
        for col in 0..n {
            let p = (col..n).find(|&r| a[r * n + col] != 0)?;
            for j in 0..n {
                a.swap(col * n + j, p * n + j);
                inv.swap(col * n + j, p * n + j);
            }
            let scale = a[col * n + col].clone().recip();
            for j in 0..n {
                a[col * n + j] *= &scale;
                inv[col * n + j] *= &scale;
            }
            for r in 0..n {
                if r != col && a[r * n + col] != 0 {
                    let f = a[r * n + col].clone();
                    for j in 0..n {
                        let s1 = (&a[col * n + j] * &f).complete();
                        a[r * n + j] -= s1;
                        let s2 = (&inv[col * n + j] * &f).complete();
                        inv[r * n + j] -= s2;
                    }
                }
            }
        }
        Some(RatMat { n, data: inv })
    }

    pub fn mul_rat_vec(&self, v: &[Rational]) -> Vec<Rational> {
        let n = self.n;
        (0..n)
            .map(|i| {
                let mut acc = Rational::new();
                for j in 0..n {
                    acc += (&self[(i, j)] * &v[j]).complete();
                }
                acc
            })
            .collect()
    }
}

/// Exact orthogonal projection of `h` onto the orthogonal complement of
/// span(basis) — the workhorse behind `project_H` (basis = Veech b-vectors).
pub fn project_off_span(basis: &[Vec<Integer>], h: &[Rational]) -> Vec<Rational> {
    if basis.is_empty() {
        return h.to_vec();
    }
    let m = basis.len();
    // Gram matrix G_ij = <b_i, b_j>, rhs_i = <b_i, h>, both exact.
    let mut gram = RatMat {
        n: m,
        data: vec![Rational::new(); m * m],
    };
    for i in 0..m {
        for j in 0..m {
            let mut acc = Integer::new();
            for t in 0..h.len() {
                acc += (&basis[i][t] * &basis[j][t]).complete();
            }
            gram[(i, j)] = Rational::from(acc);
        }
    }
    let rhs: Vec<Rational> = (0..m)
        .map(|i| {
            let mut acc = Rational::new();
            for t in 0..h.len() {
                acc += (&h[t] * &basis[i][t]).complete();
            }
            acc
        })
        .collect();
    let coeffs = gram
        .inverse()
        .expect("independent basis has invertible Gram matrix")
        .mul_rat_vec(&rhs);
    let mut out = h.to_vec();
    for (i, c) in coeffs.iter().enumerate() {
        for t in 0..out.len() {
            let sub = (c * &basis[i][t]).complete();
            out[t] -= sub;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// p-bit float linear algebra
// ---------------------------------------------------------------------------

/// Column-major float matrix: `cols` is a list of column vectors.
#[derive(Debug, Clone)]
pub struct Frame {
    pub cols: Vec<Vec<Real>>,
}

impl Frame {
    pub fn dim(&self) -> usize {
        self.cols.first().map_or(0, Vec::len)
    }

    pub fn width(&self) -> usize {
        self.cols.len()
    }
}

pub fn dot(ctx: Ctx, a: &[Real], b: &[Real]) -> Real {
    let mut acc = ctx.zero();
    for (x, y) in a.iter().zip(b) {
        acc += (x * y).complete(ctx.prec);
    }
    acc
}

pub fn norm2(ctx: Ctx, a: &[Real]) -> Real {
    dot(ctx, a, a).sqrt()
}

pub fn norm1(ctx: Ctx, a: &[Real]) -> Real {
    let mut acc = ctx.zero();
    for x in a {
        acc += x.abs_ref().complete(ctx.prec);
    }
    acc
}

/// Modified Gram-Schmidt. Returns the orthonormal frame and the diagonal of
/// R (the column norms after deflation) — all the QR sweep for Lyapunov
/// exponents needs.
pub fn qr_mgs(ctx: Ctx, frame: &Frame) -> Option<(Frame, Vec<Real>)> {
    let mut cols = frame.cols.clone();
    let mut diag = Vec::with_capacity(cols.len());
    for j in 0..cols.len() {
        for i in 0..j {
            let proj = dot(ctx, &cols[i], &cols[j]);
            let coli = cols[i].clone();
            for (t, c) in cols[j].iter_mut().enumerate() {
                *c -= (&proj * &coli[t]).complete(ctx.prec);
            }
        }
        let n = norm2(ctx, &cols[j]);
        if n.is_zero() {
            return None;
        }
        for c in cols[j].iter_mut() {
            *c /= &n;
        }
        diag.push(n);
    }
    Some((Frame { cols }, diag))
}

/// Solve A x = b by float Gaussian elimination with partial pivoting.
pub fn lu_solve(ctx: Ctx, a_rows: &[Vec<Real>], b: &[Real]) -> Option<Vec<Real>> {
    let n = b.len();
    let mut a: Vec<Vec<Real>> = a_rows.to_vec();
    let mut x = b.to_vec();
    for col in 0..n {
        let p = (col..n).max_by(|&r1, &r2| {
            a[r1][col]
                .abs_ref()
                .complete(ctx.prec)
                .partial_cmp(&a[r2][col].abs_ref().complete(ctx.prec))
                .unwrap()
        })?;
        if a[p][col].is_zero() {
            return None;
        }
        a.swap(col, p);
        x.swap(col, p);
        for r in col + 1..n {
            if a[r][col].is_zero() {
                continue;
            }
            let f = (&a[r][col] / &a[col][col]).complete(ctx.prec);
            for j in col..n {
                let s = (&f * &a[col][j]).complete(ctx.prec);
                a[r][j] -= s;
            }
            let s = (&f * &x[col]).complete(ctx.prec);
            x[r] -= s;
        }
    }
    for col in (0..n).rev() {
        let mut acc = x[col].clone();
        for j in col + 1..n {
            acc -= (&a[col][j] * &x[j]).complete(ctx.prec);
        }
        x[col] = acc / &a[col][col];
    }
    Some(x)
}

/// Jacobi eigenvalue iteration for a symmetric matrix. Returns
/// (eigenvalues, eigenvectors as columns), eigenvalues descending.
pub fn sym_eigen(ctx: Ctx, sym: &[Vec<Real>]) -> (Vec<Real>, Frame) {
    let n = sym.len();
    let mut a: Vec<Vec<Real>> = sym.to_vec();
    let mut v: Vec<Vec<Real>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { ctx.one() } else { ctx.zero() })
                .collect()
        })
        .collect();
    let tol = ctx.eps(24);
    for _sweep in 0..200 {
        let mut off = ctx.zero();
        for i in 0..n {
            for j in i + 1..n {
                off += a[i][j].abs_ref().complete(ctx.prec);
            }
        }
        if off < tol {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].is_zero() {
                    continue;
                }
                let diff = (&a[q][q] - &a[p][p]).complete(ctx.prec);
                let theta = if diff.is_zero() {
                    ctx.real_from_f64(std::f64::consts::FRAC_PI_4)
                        * if a[p][q].is_sign_positive() { 1f64 } else { -1f64 }
                } else {
                    let two_apq = (&a[p][q] * &ctx.real_from_f64(2.0)).complete(ctx.prec);
                    let ratio = two_apq / &diff;
                    ratio.atan() / 2f64
                };
                let (s, c) = theta.sin_cos(ctx.zero());
                // rotate rows/cols p,q of a
                for k in 0..n {
                    let akp = a[k][p].clone();
                    let akq = a[k][q].clone();
                    a[k][p] = (&akp * &c).complete(ctx.prec) - (&akq * &s).complete(ctx.prec);
                    a[k][q] = (&akp * &s).complete(ctx.prec) + (&akq * &c).complete(ctx.prec);
                }
                for k in 0..n {
                    let apk = a[p][k].clone();
                    let aqk = a[q][k].clone();
                    a[p][k] = (&apk * &c).complete(ctx.prec) - (&aqk * &s).complete(ctx.prec);
                    a[q][k] = (&apk * &s).complete(ctx.prec) + (&aqk * &c).complete(ctx.prec);
                }
                for k in 0..n {
                    let vkp = v[k][p].clone();
                    let vkq = v[k][q].clone();
                    v[k][p] = (&vkp * &c).complete(ctx.prec) - (&vkq * &s).complete(ctx.prec);
                    v[k][q] = (&vkp * &s).complete(ctx.prec) + (&vkq * &c).complete(ctx.prec);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].partial_cmp(&a[i][i]).unwrap());
    let vals: Vec<Real> = order.iter().map(|&i| a[i][i].clone()).collect();
    let cols: Vec<Vec<Real>> = order
        .iter()
        .map(|&i| (0..n).map(|k| v[k][i].clone()).collect())
        .collect();
    (vals, Frame { cols })
}

/// Exact maximization of ‖M·V·c‖₁ / ‖V·c‖₁ over c ≠ 0, where V spans a
/// g-dimensional subspace. The maximum of the convex numerator over the
/// polytope {‖Vc‖₁ ≤ 1} sits at a vertex; vertices satisfy g−1 independent
/// face equations (V c)_α = 0, enumerated by brute force.
pub fn l1_subspace_op_norm(ctx: Ctx, map: impl Fn(&[Real]) -> Vec<Real>, basis: &Frame) -> Real {
    let g = basis.width();
    let d = basis.dim();
    assert!(g >= 1);
    let eval = |c: &[Real]| -> Option<Real> {
        let mut vc = vec![ctx.zero(); d];
        for (i, col) in basis.cols.iter().enumerate() {
            for t in 0..d {
                vc[t] += (&c[i] * &col[t]).complete(ctx.prec);
            }
        }
        let denom = norm1(ctx, &vc);
        if denom.is_zero() {
            return None;
        }
        let image = map(&vc);
        Some(norm1(ctx, &image) / denom)
    };
    let mut best = ctx.zero();
    if g == 1 {
        if let Some(r) = eval(&[ctx.one()]) {
            best = r;
        }
        return best;
    }
    // all (g-1)-subsets of the d face equations
    let mut subset: Vec<usize> = (0..g - 1).collect();
    loop {
        // nullspace of the (g-1) x g system rows_α = V[α], via float elimination
        let rows: Vec<Vec<Real>> = subset
            .iter()
            .map(|&alpha| basis.cols.iter().map(|col| col[alpha].clone()).collect())
            .collect();
        if let Some(c) = nullvector(ctx, &rows, g) {
            if let Some(r) = eval(&c) {
                if r > best {
                    best = r;
                }
            }
        }
        // next subset
        let mut i = g - 1;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if subset[i] + (g - 1 - i) < d {
                subset[i] += 1;
                for j in i + 1..g - 1 {
                    subset[j] = subset[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// A unit nullvector of a (g-1) x g float system; None if rank-deficient in
/// a way that leaves more than one direction (caller just skips the vertex).
fn nullvector(ctx: Ctx, rows: &[Vec<Real>], g: usize) -> Option<Vec<Real>> {
    let mut a: Vec<Vec<Real>> = rows.to_vec();
    let m = a.len();
    let mut pivot_cols = Vec::new();
    let mut r = 0;
    for col in 0..g {
        if r >= m {
            break;
        }
        let p = (r..m).max_by(|&r1, &r2| {
            a[r1][col]
                .abs_ref()
                .complete(ctx.prec)
                .partial_cmp(&a[r2][col].abs_ref().complete(ctx.prec))
                .unwrap()
        })?;
        if a[p][col].clone().abs() < ctx.eps(ctx.prec - 60) {
            continue;
        }
        a.swap(r, p);
        for rr in 0..m {
            if rr != r && !a[rr][col].is_zero() {
                let f = (&a[rr][col] / &a[r][col]).complete(ctx.prec);
                for j in 0..g {
                    let s = (&f * &a[r][j]).complete(ctx.prec);
                    a[rr][j] -= s;
                }
            }
        }
        pivot_cols.push(col);
        r += 1;
    }
    let free: Vec<usize> = (0..g).filter(|c| !pivot_cols.contains(c)).collect();
    if free.len() != 1 {
        return None;
    }
    let fc = free[0];
    let mut x = vec![ctx.zero(); g];
    x[fc] = ctx.one();
    for (ri, &pc) in pivot_cols.iter().enumerate() {
        x[pc] = -(&a[ri][fc] / &a[ri][pc]).complete(ctx.prec);
    }
    Some(x)
}
