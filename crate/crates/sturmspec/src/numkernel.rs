//! Scalar arithmetic at configurable precision, bracketed root finding and
//! the small exact/approximate eigenproblems used by the rest of the crate.

use rug::Float;

use crate::error::{Error, Result};

/// Working precision and stopping tolerances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionContext {
    pub mantissa_bits: u32,
    pub abs_tol: f64,
    pub rel_tol: f64,
}

impl PrecisionContext {
    pub fn new(mantissa_bits: u32, abs_tol: f64, rel_tol: f64) -> Result<Self> {
        if mantissa_bits < 53 {
            return Err(Error::Invalid(format!(
                "mantissa_bits must be at least 53, got {mantissa_bits}"
            )));
        }
        for (name, tol) in [("abs_tol", abs_tol), ("rel_tol", rel_tol)] {
            if tol.is_nan() || tol <= 0.0 || !tol.is_finite() {
                return Err(Error::Invalid(format!("{name} must be positive, got {tol}")));
            }
        }
        // A tolerance below one ulp can never be met; reject it up front.
        let ulp = 2f64.powi(1 - mantissa_bits.min(1000) as i32);
        if rel_tol < ulp && mantissa_bits <= 1000 {
            return Err(Error::Invalid(format!(
                "rel_tol {rel_tol} is below the precision floor {ulp:e} for {mantissa_bits} bits"
            )));
        }
        Ok(Self {
            mantissa_bits,
            abs_tol,
            rel_tol,
        })
    }

    pub fn double() -> Self {
        Self {
            mantissa_bits: 53,
            abs_tol: 1e-12,
            rel_tol: 1e-15,
        }
    }

    /// Extended mode with tolerances scaled to the mantissa.
    pub fn extended(mantissa_bits: u32) -> Self {
        let bits = mantissa_bits.max(64);
        let tol = 2f64.powi(-(bits as i32 - 16).min(1000));
        Self {
            mantissa_bits: bits,
            abs_tol: tol.max(1e-300),
            rel_tol: tol.max(1e-300),
        }
    }

    pub fn is_extended(&self) -> bool {
        self.mantissa_bits > 53
    }
}

impl Default for PrecisionContext {
    fn default() -> Self {
        Self::double()
    }
}

/// Minimal real-number interface shared by `f64` and MPFR floats.
pub trait Real: Clone + PartialOrd + std::fmt::Debug {
    fn from_f64_prec(v: f64, prec: u32) -> Self;
    fn precision(&self) -> u32;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    fn abs(&self) -> Self;
    fn mid(&self, o: &Self) -> Self;
    fn to_f64(&self) -> f64;
    fn is_finite(&self) -> bool;
    fn is_sign_negative(&self) -> bool;
    fn is_zero(&self) -> bool;

    fn splat(&self, v: f64) -> Self {
        Self::from_f64_prec(v, self.precision())
    }
}

impl Real for f64 {
    fn from_f64_prec(v: f64, _prec: u32) -> Self {
        v
    }
    fn precision(&self) -> u32 {
        53
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    fn mid(&self, o: &Self) -> Self {
        self + (o - self) * 0.5
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
    fn is_sign_negative(&self) -> bool {
        *self < 0.0
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
}

impl Real for Float {
    fn from_f64_prec(v: f64, prec: u32) -> Self {
        Float::with_val(prec, v)
    }
    fn precision(&self) -> u32 {
        self.prec()
    }
    fn add(&self, o: &Self) -> Self {
        Float::with_val(self.prec(), self + o)
    }
    fn sub(&self, o: &Self) -> Self {
        Float::with_val(self.prec(), self - o)
    }
    fn mul(&self, o: &Self) -> Self {
        Float::with_val(self.prec(), self * o)
    }
    fn neg(&self) -> Self {
        Float::with_val(self.prec(), -self)
    }
    fn abs(&self) -> Self {
        Float::with_val(self.prec(), self.abs_ref())
    }
    fn mid(&self, o: &Self) -> Self {
        let mut m = Float::with_val(self.prec(), self + o);
        m /= 2;
        m
    }
    fn to_f64(&self) -> f64 {
        Float::to_f64(self)
    }
    fn is_finite(&self) -> bool {
        Float::is_finite(self)
    }
    fn is_sign_negative(&self) -> bool {
        *self < 0
    }
    fn is_zero(&self) -> bool {
        Float::is_zero(self)
    }
}

fn sign_of<T: Real>(v: &T) -> i8 {
    if v.is_zero() {
        0
    } else if v.is_sign_negative() {
        -1
    } else {
        1
    }
}

/// Bisection for a monotone `f` with a sign change on `[lo, hi]`.
/// Stops when `|f(x)| <= abs_tol` or the bracket is narrower than
/// `rel_tol * max(|lo|, |hi|)`, or when the bracket cannot be split further.
pub fn bisect_root<T, F>(mut f: F, lo: T, hi: T, ctx: &PrecisionContext) -> Result<T>
where
    T: Real,
    F: FnMut(&T) -> T,
{
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let fa = f(&a);
    let fb = f(&b);
    for (x, fx) in [(&a, &fa), (&b, &fb)] {
        if !fx.is_finite() {
            return Err(Error::NonFinite { x: x.to_f64() });
        }
    }
    if fa.abs().to_f64() <= ctx.abs_tol {
        return Ok(a);
    }
    if fb.abs().to_f64() <= ctx.abs_tol {
        return Ok(b);
    }
    let sa = sign_of(&fa);
    if sa == sign_of(&fb) {
        return Err(Error::NoSignChange {
            lo: a.to_f64(),
            hi: b.to_f64(),
        });
    }
    let scale = a.abs().to_f64().max(b.abs().to_f64());
    let width_tol = ctx.rel_tol * if scale > 0.0 { scale } else { 1.0 };
    loop {
        let m = a.mid(&b);
        if m <= a || m >= b {
            return Ok(m);
        }
        let fm = f(&m);
        if !fm.is_finite() {
            return Err(Error::NonFinite { x: m.to_f64() });
        }
        if fm.abs().to_f64() <= ctx.abs_tol {
            return Ok(m);
        }
        if sign_of(&fm) == sa {
            a = m;
        } else {
            b = m;
        }
        if b.sub(&a).to_f64() <= width_tol {
            return Ok(a.mid(&b));
        }
    }
}

/// Chebyshev polynomials of the second kind in the trace normalisation:
/// S_0 = 0, S_1 = 1, S_{p+1} = x S_p - S_{p-1}, hence S_{-1} = -1.
pub fn chebyshev_s<T: Real>(p: i64, x: &T) -> T {
    assert!(p >= -1, "chebyshev_s needs p >= -1");
    if p == -1 {
        return x.splat(-1.0);
    }
    let mut prev = x.splat(0.0);
    let mut cur = x.splat(1.0);
    if p == 0 {
        return prev;
    }
    for _ in 1..p {
        let next = x.mul(&cur).sub(&prev);
        prev = cur;
        cur = next;
    }
    cur
}

/// 2x2 matrix `[[a, b], [c, d]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat2<T> {
    pub a: T,
    pub b: T,
    pub c: T,
    pub d: T,
}

impl<T: Real> Mat2<T> {
    pub fn new(a: T, b: T, c: T, d: T) -> Self {
        Self { a, b, c, d }
    }

    pub fn identity_like(x: &T) -> Self {
        Self::new(x.splat(1.0), x.splat(0.0), x.splat(0.0), x.splat(1.0))
    }

    pub fn mul(&self, o: &Self) -> Self {
        Self::new(
            self.a.mul(&o.a).add(&self.b.mul(&o.c)),
            self.a.mul(&o.b).add(&self.b.mul(&o.d)),
            self.c.mul(&o.a).add(&self.d.mul(&o.c)),
            self.c.mul(&o.b).add(&self.d.mul(&o.d)),
        )
    }

    pub fn trace(&self) -> T {
        self.a.add(&self.d)
    }

    pub fn det(&self) -> T {
        self.a.mul(&self.d).sub(&self.b.mul(&self.c))
    }

    /// Inverse of a unimodular matrix.
    pub fn adjugate(&self) -> Self {
        Self::new(self.d.clone(), self.b.neg(), self.c.neg(), self.a.clone())
    }

    /// `M^p` for a unimodular matrix via `M^p = S_p(tr M) M - S_{p-1}(tr M) I`.
    pub fn unimodular_pow(&self, p: i64) -> Self {
        if p == -1 {
            return self.adjugate();
        }
        let t = self.trace();
        let sp = chebyshev_s(p, &t);
        let sq = chebyshev_s(p - 1, &t);
        Self::new(
            sp.mul(&self.a).sub(&sq),
            sp.mul(&self.b),
            sp.mul(&self.c),
            sp.mul(&self.d).sub(&sq),
        )
    }

    pub fn max_abs(&self) -> f64 {
        [&self.a, &self.b, &self.c, &self.d]
            .iter()
            .map(|v| v.abs().to_f64())
            .fold(0.0, f64::max)
    }
}

/// Monic cubic `λ³ + c2 λ² + c1 λ + c0` with exact integer coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CharPoly3 {
    pub c2: i64,
    pub c1: i64,
    pub c0: i64,
}

impl CharPoly3 {
    /// det(λI - A) by cofactor expansion.
    pub fn of_matrix(m: &[[i64; 3]; 3]) -> Self {
        let trace = m[0][0] + m[1][1] + m[2][2];
        let minors = (m[0][0] * m[1][1] - m[0][1] * m[1][0])
            + (m[0][0] * m[2][2] - m[0][2] * m[2][0])
            + (m[1][1] * m[2][2] - m[1][2] * m[2][1]);
        let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        Self {
            c2: -trace,
            c1: minors,
            c0: -det,
        }
    }

    /// Coefficients in descending order, leading 1 included.
    pub fn coefficients(&self) -> [i64; 4] {
        [1, self.c2, self.c1, self.c0]
    }

    pub fn eval(&self, x: f64) -> f64 {
        ((x + self.c2 as f64) * x + self.c1 as f64) * x + self.c0 as f64
    }
}

/// Exact characteristic polynomial (descending coefficients, monic) of an
/// integer matrix by Faddeev-LeVerrier; every division is exact.
pub fn char_poly_exact(m: &[Vec<i64>]) -> Result<Vec<i128>> {
    let n = m.len();
    if m.iter().any(|row| row.len() != n) {
        return Err(Error::Invalid("char_poly_exact needs a square matrix".into()));
    }
    let a: Vec<Vec<i128>> = m
        .iter()
        .map(|r| r.iter().map(|&v| v as i128).collect())
        .collect();
    let mut coeffs = vec![0i128; n + 1];
    coeffs[0] = 1;
    let mut mk = vec![vec![0i128; n]; n];
    for k in 1..=n {
        // M_k = A M_{k-1} + c_{k-1} I
        let mut next = vec![vec![0i128; n]; n];
        for i in 0..n {
            for j in 0..n {
                let mut s = 0i128;
                for l in 0..n {
                    s = s
                        .checked_add(a[i][l].checked_mul(mk[l][j]).ok_or_else(overflow)?)
                        .ok_or_else(overflow)?;
                }
                next[i][j] = s;
            }
            next[i][i] += coeffs[k - 1];
        }
        let mut tr = 0i128;
        for i in 0..n {
            for l in 0..n {
                tr = tr
                    .checked_add(a[i][l].checked_mul(next[l][i]).ok_or_else(overflow)?)
                    .ok_or_else(overflow)?;
            }
        }
        debug_assert_eq!(tr % k as i128, 0);
        coeffs[k] = -tr / k as i128;
        mk = next;
    }
    Ok(coeffs)
}

fn overflow() -> Error {
    Error::Invalid("integer overflow in exact characteristic polynomial".into())
}

/// Smallest `k <= max_power` with `M^k` entrywise positive.
pub fn primitivity_exponent(m: &[Vec<f64>], max_power: usize) -> Option<usize> {
    let n = m.len();
    let base: Vec<Vec<bool>> = m.iter().map(|r| r.iter().map(|&v| v > 0.0).collect()).collect();
    let mut pow = base.clone();
    for k in 1..=max_power {
        if pow.iter().all(|r| r.iter().all(|&b| b)) {
            return Some(k);
        }
        let mut next = vec![vec![false; n]; n];
        for i in 0..n {
            for l in 0..n {
                if pow[i][l] {
                    for j in 0..n {
                        next[i][j] |= base[l][j];
                    }
                }
            }
        }
        pow = next;
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerronPair {
    pub value: f64,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

/// Perron eigenvalue with left and right eigenvectors (each summing to 1).
pub fn perron_eigen(m: &[Vec<f64>], ctx: &PrecisionContext) -> Result<PerronPair> {
    let n = m.len();
    if n == 0 || m.iter().any(|r| r.len() != n) {
        return Err(Error::Invalid("perron_eigen needs a non-empty square matrix".into()));
    }
    if m.iter().flatten().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::Invalid("perron_eigen needs a finite nonnegative matrix".into()));
    }
    let max_power = 2 * n * n;
    if primitivity_exponent(m, max_power).is_none() {
        return Err(Error::NotPrimitive { max_power });
    }
    let transpose: Vec<Vec<f64>> = (0..n).map(|j| (0..n).map(|i| m[i][j]).collect()).collect();
    let (value, right) = power_iterate(m, ctx.abs_tol)?;
    let (_, left) = power_iterate(&transpose, ctx.abs_tol)?;
    Ok(PerronPair { value, left, right })
}

/// Spectral radius of a primitive nonnegative matrix.
pub fn spectral_radius(m: &[Vec<f64>], ctx: &PrecisionContext) -> Result<f64> {
    Ok(perron_eigen(m, ctx)?.value)
}

// Power iteration on M + I: the shift keeps the Perron root dominant while
// pulling eigenvalues of modulus close to it (e.g. -1) away from the circle.
fn power_iterate(m: &[Vec<f64>], tol: f64) -> Result<(f64, Vec<f64>)> {
    let n = m.len();
    let mut v = vec![1.0 / n as f64; n];
    let mut value = 0.0;
    for _ in 0..200_000 {
        let mv: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| m[i][j] * v[j]).sum::<f64>())
            .collect();
        let shifted: Vec<f64> = mv.iter().zip(&v).map(|(a, b)| a + b).collect();
        let total: f64 = shifted.iter().sum();
        let next: Vec<f64> = shifted.iter().map(|x| x / total).collect();
        value = total - 1.0;
        let mv_next: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| m[i][j] * next[j]).sum::<f64>())
            .collect();
        let lambda: f64 = mv_next.iter().sum();
        let residual = mv_next
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - lambda * b).abs())
            .fold(0.0, f64::max);
        v = next;
        if residual <= tol {
            return Ok((lambda, v));
        }
    }
    // Tolerance below attainable rounding: accept the converged iterate.
    Ok((value, v))
}
