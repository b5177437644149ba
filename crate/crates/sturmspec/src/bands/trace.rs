use rug::{Assign, Float};

use super::frequency::{Coupling, FrequencySpec};
use crate::error::{Error, Result};
use crate::numkernel::{Mat2, PrecisionContext, Real};

/// Seed matrices `M_{-1} = [[1, -V], [0, 1]]` and `M_0 = [[x, -1], [1, 0]]`.
pub fn seed_matrices<T: Real>(v: f64, x: &T) -> (Mat2<T>, Mat2<T>) {
    let m_minus = Mat2::new(x.splat(1.0), x.splat(-v), x.splat(0.0), x.splat(1.0));
    let m_zero = Mat2::new(x.clone(), x.splat(-1.0), x.splat(1.0), x.splat(0.0));
    (m_minus, m_zero)
}

/// `M_{-1}, M_0, ..., M_m` from `M_{k+1} = M_{k-1} M_k^{a_{k+1}}`.
pub fn transfer_matrices<T: Real>(spec: &FrequencySpec, v: f64, m: usize, x: &T) -> Vec<Mat2<T>> {
    let (a, b) = seed_matrices(v, x);
    let mut out = vec![a, b];
    for k in 0..m {
        let next = out[k].mul(&out[k + 1].unimodular_pow(spec.digit(k + 1) as i64));
        out.push(next);
    }
    out
}

/// Product of site matrices `[[x - v_k, -1], [1, 0]]` over sites `q_n, ..., 1`.
pub fn direct_transfer_matrix<T: Real>(spec: &FrequencySpec, v: f64, n: usize, x: &T) -> Result<Mat2<T>> {
    let q = spec.q_sequence(n)?[n] as usize;
    let ind = spec.potential_indicator(q)?;
    let mut acc = Mat2::identity_like(x);
    for &b in &ind {
        let site = Mat2::new(
            x.sub(&x.splat(v * b as f64)),
            x.splat(-1.0),
            x.splat(1.0),
            x.splat(0.0),
        );
        acc = site.mul(&acc);
    }
    Ok(acc)
}

/// `t_(m,p)(x) = tr(M_{m-1}(x) M_m(x)^p)` through explicit matrices.
pub fn eval_trace(
    spec: &FrequencySpec,
    coupling: Coupling,
    m: usize,
    p: i64,
    x: &Float,
    ctx: &PrecisionContext,
) -> Result<Float> {
    if p < -1 {
        return Err(Error::Invalid(format!("trace exponent {p} below -1")));
    }
    let x = Float::with_val(ctx.mantissa_bits, x);
    let ms = transfer_matrices(spec, coupling.value(), m, &x);
    // ms[k] holds M_{k-1}
    let prod = ms[m].mul(&ms[m + 1].unimodular_pow(p));
    let t = prod.trace();
    if !t.is_finite() {
        return Err(Error::PrecisionExhausted(format!(
            "trace t_({m},{p}) overflowed at x = {}",
            x.to_f64()
        )));
    }
    Ok(t)
}

/// Trace-map evaluation of the generating polynomials, allocation free.
///
/// With `x_k = tr M_k` and `z_k = tr(M_{k-1} M_k)`, the sequence
/// `t_p = tr(M_{k-1} M_k^p)` obeys `t_p = x_k t_{p-1} - t_{p-2}` with
/// `t_0 = x_{k-1}`, `t_1 = z_k`, so `x_{k+1} = t_a` and `z_{k+1} = t_{a+1}`.
pub struct TraceEvaluator {
    digits: Vec<u32>,
    coupling: Float,
    prev: Float,
    cur: Float,
    z: Float,
    t0: Float,
    t1: Float,
    t2: Float,
    x_next: Float,
    evals: u64,
}

/// Traces at one level `k`: `x_{k-1}`, `x_k` and `z_k`.
#[derive(Debug, Clone)]
pub struct TraceState {
    pub prev: Float,
    pub cur: Float,
    pub z: Float,
}

impl TraceEvaluator {
    pub fn new(spec: &FrequencySpec, coupling: Coupling, max_level: usize, prec: u32) -> Self {
        let digits = (1..=max_level + 1).map(|k| spec.digit(k)).collect();
        let f = || Float::new(prec);
        Self {
            digits,
            coupling: Float::with_val(prec, coupling.value()),
            prev: f(),
            cur: f(),
            z: f(),
            t0: f(),
            t1: f(),
            t2: f(),
            x_next: f(),
            evals: 0,
        }
    }

    pub fn prec(&self) -> u32 {
        self.coupling.prec()
    }

    pub fn evaluations(&self) -> u64 {
        self.evals
    }

    /// Runs the trace map up to `level`; afterwards `prev`, `cur`, `z` hold
    /// `x_{level-1}`, `x_level`, `z_level`.
    pub fn run(&mut self, x: &Float, level: usize) {
        assert!(level <= self.digits.len(), "level beyond evaluator range");
        self.evals += 1;
        self.prev.assign(2);
        self.cur.assign(x);
        self.z.assign(x - &self.coupling);
        for k in 0..level {
            let a = self.digits[k];
            // t0 = x_{k-1}, t1 = z_k
            std::mem::swap(&mut self.t0, &mut self.prev);
            std::mem::swap(&mut self.t1, &mut self.z);
            for _ in 2..=a + 1 {
                self.t2.assign(&self.cur * &self.t1);
                self.t2 -= &self.t0;
                std::mem::swap(&mut self.t0, &mut self.t1);
                std::mem::swap(&mut self.t1, &mut self.t2);
            }
            // t1 = t_{a+1} = z_{k+1}, t0 = t_a = x_{k+1}
            std::mem::swap(&mut self.x_next, &mut self.t0);
            std::mem::swap(&mut self.prev, &mut self.cur);
            std::mem::swap(&mut self.cur, &mut self.x_next);
            std::mem::swap(&mut self.z, &mut self.t1);
        }
    }

    pub fn x_prev(&self) -> &Float {
        &self.prev
    }

    pub fn x_cur(&self) -> &Float {
        &self.cur
    }

    pub fn z_cur(&self) -> &Float {
        &self.z
    }

    pub fn state(&self) -> TraceState {
        TraceState {
            prev: self.prev.clone(),
            cur: self.cur.clone(),
            z: self.z.clone(),
        }
    }

    /// `t_(m,p)(x)` for `p >= -1` from the level-`m` state.
    pub fn trace(&mut self, m: usize, p: i64, x: &Float) -> Float {
        self.run(x, m);
        let prec = self.prec();
        match p {
            -1 => {
                // tr(A B^{-1}) = tr A tr B - tr(A B)
                let mut t = Float::with_val(prec, &self.prev * &self.cur);
                t -= &self.z;
                t
            }
            0 => self.prev.clone(),
            _ => {
                let mut t0 = self.prev.clone();
                let mut t1 = self.z.clone();
                for _ in 2..=p {
                    let mut t2 = Float::with_val(prec, &self.cur * &t1);
                    t2 -= &t0;
                    t0 = t1;
                    t1 = t2;
                }
                t1
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn specs() -> Vec<FrequencySpec> {
        vec![
            FrequencySpec::golden(),
            FrequencySpec::constant_type(2).unwrap(),
            FrequencySpec::constant_type(3).unwrap(),
            FrequencySpec::new(vec![0, 2, 1, 3], 1).unwrap(),
            FrequencySpec::new(vec![1, 1, 4], 2).unwrap(),
        ]
    }

    // Size of the terms that cancel in t_(m,p), read from the last evaluated state.
    fn cancellation_scale(ev: &TraceEvaluator, p: i64) -> f64 {
        let prev = ev.x_prev().to_f64().abs();
        let cur = ev.x_cur().to_f64().abs();
        let z = ev.z_cur().to_f64().abs();
        (1.0 + prev + z) * (1.0 + cur).powi(p.max(1) as i32)
    }

    #[test]
    fn recursion_matches_direct_site_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for spec in specs() {
            for _ in 0..20 {
                let v: f64 = rng.gen_range(5.0..40.0);
                let x = Float::with_val(256, rng.gen_range(-3.0..(v + 3.0)));
                let ms = transfer_matrices(&spec, v, 5, &x);
                for n in 1..=5 {
                    let direct = direct_transfer_matrix(&spec, v, n, &x).unwrap();
                    let rec = &ms[n + 1];
                    let scale = 1.0 + direct.max_abs();
                    for (a, b) in [
                        (&rec.a, &direct.a),
                        (&rec.b, &direct.b),
                        (&rec.c, &direct.c),
                        (&rec.d, &direct.d),
                    ] {
                        let diff = Float::with_val(256, a - b).abs().to_f64();
                        assert!(diff <= 1e-60 * scale, "{spec} n={n} diff={diff}");
                    }
                }
            }
        }
    }

    #[test]
    fn determinants_stay_unimodular() {
        let spec = FrequencySpec::golden();
        let x = Float::with_val(53, 0.37);
        let ms = transfer_matrices(&spec, 24.0, 12, &x);
        for (k, m) in ms.iter().enumerate() {
            let det = m.det().to_f64();
            let tol = 2f64.powi(8 - 53) * (k as f64 + 1.0) * m.max_abs().powi(2).max(1.0);
            assert!((det - 1.0).abs() <= tol, "level {k}: det {det}");
        }
    }

    #[test]
    fn named_traces() {
        let spec = FrequencySpec::golden();
        let ctx = PrecisionContext::double();
        let v = Coupling::new(24.0).unwrap();
        let at = |x: f64| Float::with_val(53, x);
        assert_eq!(eval_trace(&spec, v, 0, 1, &at(24.0), &ctx).unwrap(), 0);
        assert_eq!(eval_trace(&spec, v, 1, 0, &at(0.0), &ctx).unwrap(), 0);
        assert_eq!(eval_trace(&spec, v, 0, 0, &at(-7.5), &ctx).unwrap(), 2);
    }

    #[test]
    fn trace_map_agrees_with_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ctx = PrecisionContext::new(192, 1e-40, 1e-40).unwrap();
        for spec in specs() {
            let v = Coupling::new(rng.gen_range(6.0..30.0)).unwrap();
            let mut ev = TraceEvaluator::new(&spec, v, 8, 192);
            for _ in 0..10 {
                let x = Float::with_val(192, rng.gen_range(-2.5..(v.value() + 2.5)));
                for m in 0..7 {
                    for p in -1..4 {
                        let slow = eval_trace(&spec, v, m, p, &x, &ctx).unwrap();
                        let fast = ev.trace(m, p, &x);
                        let diff = Float::with_val(192, &slow - &fast).abs().to_f64();
                        let scale = cancellation_scale(&ev, p);
                        assert!(diff <= 1e-40 * scale, "{spec} m={m} p={p}");
                    }
                }
            }
        }
    }

    #[test]
    fn shift_identity_between_levels() {
        // t_(n+1,-1) = t_(n, a_{n+1} - 1)
        let spec = FrequencySpec::new(vec![0, 2, 3, 1], 2).unwrap();
        let v = Coupling::new(9.0).unwrap();
        let mut ev = TraceEvaluator::new(&spec, v, 8, 128);
        let x = Float::with_val(128, 1.234);
        for n in 0..6 {
            let lhs = ev.trace(n + 1, -1, &x);
            let scale = cancellation_scale(&ev, 1);
            let rhs = ev.trace(n, spec.digit(n + 1) as i64 - 1, &x);
            let scale = scale.max(cancellation_scale(&ev, spec.digit(n + 1) as i64));
            let diff = Float::with_val(128, &lhs - &rhs).abs().to_f64();
            assert!(diff <= 1e-25 * scale);
        }
    }
}
