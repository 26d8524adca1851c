//! Linear least squares with a deterministic minimum-norm fallback.
//!
//! The solver factors the design matrix by Householder QR, then takes a
//! one-sided Jacobi SVD of the small triangular factor. Singular values
//! below `1e-10` relative to the largest (or a few machine epsilons in
//! single precision) are dropped and the minimum-norm solution over the
//! kept directions is returned. Rank-deficient designs therefore yield
//! finite, reproducible coefficients; an all-zero target yields exactly
//! zero coefficients.
//!
//! One factorization serves any number of target vectors, which is how the
//! training loop amortises regressions that share a design across controls.

use crate::error::{Error, Result};
use crate::mat::ColMatrix;
use crate::scalar::{real, Scalar};

/// Relative singular-value threshold below which directions are dropped.
pub const RANK_RTOL: f64 = 1e-10;

/// Options for a least-squares solve.
#[derive(Debug, Clone)]
pub struct LsqOptions<T> {
    /// Ridge penalty on coefficients; zero (the default) disables it.
    pub ridge: T,
    /// Rescale each column to unit norm before factoring, for badly
    /// conditioned polynomial designs. Off by default.
    pub standardize: bool,
}

impl<T: Scalar> Default for LsqOptions<T> {
    fn default() -> Self {
        Self {
            ridge: T::zero(),
            standardize: false,
        }
    }
}

/// Result of one least-squares solve.
#[derive(Debug, Clone)]
pub struct LsqFit<T> {
    /// Coefficients in design-column order.
    pub coefficients: Vec<T>,
    /// Number of singular directions kept.
    pub rank: usize,
    /// Residual sum of squares (including the penalty rows when ridge is
    /// active).
    pub rss: T,
}

/// Factored design matrix, reusable across targets.
pub struct QrFactors<T> {
    /// Householder vectors below the diagonal, R on and above.
    work: ColMatrix<T>,
    taus: Vec<T>,
    /// Per-column scale divided out of the coefficients.
    col_scales: Vec<T>,
    /// Rows of the original (unpadded) design.
    data_rows: usize,
    /// Left singular vectors of R (columns with positive singular value).
    u: ColMatrix<T>,
    /// Right singular vectors of R.
    v: ColMatrix<T>,
    singulars: Vec<T>,
    kept: Vec<bool>,
    rank: usize,
}

impl<T: Scalar> QrFactors<T> {
    /// Factors the design. The matrix is copied; the original is untouched.
    pub fn new(design: &ColMatrix<T>, options: &LsqOptions<T>) -> Result<Self> {
        let data_rows = design.rows();
        let p = design.cols();
        if data_rows == 0 || p == 0 {
            return Err(Error::InvalidInput("empty design matrix".into()));
        }
        if options.ridge < T::zero() || !options.ridge.is_finite() {
            return Err(Error::InvalidInput("ridge must be nonnegative".into()));
        }
        if design.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("design matrix"));
        }

        let with_ridge = options.ridge > T::zero();
        let rows = if with_ridge { data_rows + p } else { data_rows };
        let sqrt_ridge = options.ridge.sqrt();

        // Copy into the working buffer, optionally scaling columns and
        // appending the ridge rows sqrt(ridge) * I.
        let mut work = ColMatrix::zeros(rows, p);
        let mut col_scales = vec![T::one(); p];
        for c in 0..p {
            let src = design.col(c);
            if options.standardize {
                let norm = l2_norm(src);
                if norm > T::zero() {
                    col_scales[c] = norm;
                }
            }
            let inv = T::one() / col_scales[c];
            let dst = work.col_mut(c);
            for (d, &s) in dst.iter_mut().zip(src.iter()) {
                *d = s * inv;
            }
            if with_ridge {
                dst[data_rows + c] = sqrt_ridge;
            }
        }

        let taus = householder_factor(&mut work);

        // SVD of the triangular factor; r_dim covers the underdetermined
        // case rows < cols.
        let r_dim = rows.min(p);
        let mut r = ColMatrix::zeros(r_dim, p);
        for c in 0..p {
            for rr in 0..=c.min(r_dim - 1) {
                r.set(rr, c, work.get(rr, c));
            }
        }
        let (u, v, singulars) = jacobi_svd(r);

        let mut s_max = T::zero();
        for &s in &singulars {
            if s > s_max {
                s_max = s;
            }
        }
        let rtol: T = real::<T>(RANK_RTOL).max(T::epsilon() * real::<T>(8.0));
        let kept: Vec<bool> = singulars.iter().map(|&s| s > rtol * s_max).collect();
        let rank = kept.iter().filter(|&&k| k).count();

        Ok(Self {
            work,
            taus,
            col_scales,
            data_rows,
            u,
            v,
            singulars,
            kept,
            rank,
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Solves for one target vector of length `data_rows`.
    pub fn solve(&self, targets: &[T]) -> Result<LsqFit<T>> {
        if targets.len() != self.data_rows {
            return Err(Error::DimensionMismatch {
                expected: self.data_rows,
                found: targets.len(),
            });
        }
        if targets.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("regression targets"));
        }
        let rows = self.work.rows();
        let p = self.work.cols();
        let r_dim = rows.min(p);

        let mut qtb = vec![T::zero(); rows];
        qtb[..self.data_rows].copy_from_slice(targets);
        let norm_b_sq: T = targets.iter().map(|&b| b * b).sum();
        apply_qt(&self.work, &self.taus, &mut qtb);

        // Project onto the kept singular directions and divide out the
        // singular values; dropped directions contribute zero (minimum
        // norm).
        let mut w_scaled = vec![T::zero(); p];
        let mut captured = T::zero();
        for c in 0..p {
            if !self.kept[c] {
                continue;
            }
            let u_col = self.u.col(c);
            let mut w = T::zero();
            for r in 0..r_dim {
                w += u_col[r] * qtb[r];
            }
            captured += w * w;
            w_scaled[c] = w / self.singulars[c];
        }

        let mut coefficients = vec![T::zero(); p];
        for c in 0..p {
            if self.kept[c] {
                let v_col = self.v.col(c);
                let w = w_scaled[c];
                for (coef, &vv) in coefficients.iter_mut().zip(v_col.iter()) {
                    *coef += vv * w;
                }
            }
        }
        for (coef, &s) in coefficients.iter_mut().zip(self.col_scales.iter()) {
            *coef = *coef / s;
        }

        let rss = (norm_b_sq - captured).max(T::zero());
        Ok(LsqFit {
            coefficients,
            rank: self.rank,
            rss,
        })
    }
}

/// Fits one target vector against a design matrix.
pub fn fit_least_squares<T: Scalar>(
    design: &ColMatrix<T>,
    targets: &[T],
    options: &LsqOptions<T>,
) -> Result<LsqFit<T>> {
    QrFactors::new(design, options)?.solve(targets)
}

/// Fits several target vectors against one design, factoring it once.
pub fn fit_least_squares_multi<T: Scalar>(
    design: &ColMatrix<T>,
    targets: &[&[T]],
    options: &LsqOptions<T>,
) -> Result<Vec<LsqFit<T>>> {
    let factors = QrFactors::new(design, options)?;
    targets.iter().map(|t| factors.solve(t)).collect()
}

/// Clamps a continuation value to `[-bound, bound]`. Non-finite values
/// pass through unchanged so they can be caught downstream.
pub fn truncate<T: Scalar>(value: T, bound: T) -> T {
    if value > bound {
        bound
    } else if value < -bound {
        -bound
    } else {
        value
    }
}

fn l2_norm<T: Scalar>(xs: &[T]) -> T {
    xs.iter().map(|&x| x * x).sum::<T>().sqrt()
}

/// In-place Householder QR: reflectors below the diagonal (implicit unit
/// head), R on and above. Returns the reflector coefficients.
fn householder_factor<T: Scalar>(a: &mut ColMatrix<T>) -> Vec<T> {
    let rows = a.rows();
    let cols = a.cols();
    let steps = rows.min(cols);
    let mut taus = vec![T::zero(); steps.min(cols)];
    for c in 0..steps {
        // Build the reflector from column c, rows c...
        let norm = {
            let col = a.col(c);
            l2_norm(&col[c..])
        };
        if norm == T::zero() {
            taus[c] = T::zero();
            continue;
        }
        let alpha = a.get(c, c);
        let beta = -norm.copysign(alpha);
        let tau = (beta - alpha) / beta;
        let inv = T::one() / (alpha - beta);
        {
            let col = a.col_mut(c);
            for slot in col[c + 1..].iter_mut() {
                *slot = *slot * inv;
            }
            col[c] = beta;
        }
        taus[c] = tau;
        // Apply (I - tau v v^T) to the remaining columns.
        for c2 in c + 1..cols {
            let mut dot = a.get(c, c2);
            {
                let (vcol, target) = a.col_pair_mut(c, c2);
                for (vr, tr) in vcol[c + 1..].iter().zip(target[c + 1..].iter()) {
                    dot += *vr * *tr;
                }
                let w = taus[c] * dot;
                target[c] -= w;
                for (vr, tr) in vcol[c + 1..].iter().zip(target[c + 1..].iter_mut()) {
                    *tr -= w * *vr;
                }
            }
        }
    }
    taus
}

/// Applies the transposed Q of a factored matrix to a vector in place.
fn apply_qt<T: Scalar>(a: &ColMatrix<T>, taus: &[T], b: &mut [T]) {
    for (c, &tau) in taus.iter().enumerate() {
        if tau == T::zero() {
            continue;
        }
        let vcol = a.col(c);
        let mut dot = b[c];
        for (vr, br) in vcol[c + 1..].iter().zip(b[c + 1..].iter()) {
            dot += *vr * *br;
        }
        let w = tau * dot;
        b[c] -= w;
        for (vr, br) in vcol[c + 1..].iter().zip(b[c + 1..].iter_mut()) {
            *br -= w * *vr;
        }
    }
}

/// One-sided Jacobi SVD. Returns `(U, V, singular values)` with `B = U S
/// V^T`; columns of `U` with zero singular value are left as zero.
fn jacobi_svd<T: Scalar>(mut b: ColMatrix<T>) -> (ColMatrix<T>, ColMatrix<T>, Vec<T>) {
    let p = b.cols();
    let mut v = ColMatrix::zeros(p, p);
    for c in 0..p {
        v.set(c, c, T::one());
    }
    let tol = T::epsilon() * real::<T>(8.0);
    for _sweep in 0..60 {
        let mut converged = true;
        for i in 0..p {
            for j in i + 1..p {
                let (mut aii, mut ajj, mut aij) = (T::zero(), T::zero(), T::zero());
                {
                    let ci = b.col(i);
                    let cj = b.col(j);
                    for (&x, &y) in ci.iter().zip(cj.iter()) {
                        aii += x * x;
                        ajj += y * y;
                        aij += x * y;
                    }
                }
                if aij.abs() <= tol * (aii * ajj).sqrt() {
                    continue;
                }
                converged = false;
                let zeta = (ajj - aii) / (aij + aij);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let cs = T::one() / (T::one() + t * t).sqrt();
                let sn = cs * t;
                rotate_cols(&mut b, i, j, cs, sn);
                rotate_cols(&mut v, i, j, cs, sn);
            }
        }
        if converged {
            break;
        }
    }
    let mut singulars = vec![T::zero(); p];
    let mut u = ColMatrix::zeros(b.rows(), p);
    for c in 0..p {
        let s = l2_norm(b.col(c));
        singulars[c] = s;
        if s > T::zero() {
            let inv = T::one() / s;
            let (src, dst) = (b.col(c), u.col_mut(c));
            for (d, &x) in dst.iter_mut().zip(src.iter()) {
                *d = x * inv;
            }
        }
    }
    (u, v, singulars)
}

fn rotate_cols<T: Scalar>(m: &mut ColMatrix<T>, i: usize, j: usize, cs: T, sn: T) {
    let (ci, cj) = m.col_pair_mut(i, j);
    for (x, y) in ci.iter_mut().zip(cj.iter_mut()) {
        let xi = *x;
        let yj = *y;
        *x = cs * xi - sn * yj;
        *y = sn * xi + cs * yj;
    }
}

// ============================================================================
// Tests
// ============================================================================
