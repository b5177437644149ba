//! Locating the children of a band.
//!
//! Inside a type II/III parent `P` with generating polynomial `h`, each child
//! `B` satisfies `h(B) ⊂ I_{p,l}` for a Chebyshev interval, and `h` maps `P`
//! monotonically onto `[-2, 2]`. Preimages of points between consecutive
//! Chebyshev intervals therefore separate the children. When that warm start
//! fails to verify (small couplings), an adaptive sign scan of `|t| - 2` is used.

use std::collections::HashMap;

use rug::Float;

use super::chebyshev::chebyshev_interval;
use super::trace::TraceEvaluator;
use crate::coding::BandType;
use crate::error::{Error, Result};
use crate::numkernel::PrecisionContext;

const GRID_CAP: usize = 1 << 20;

/// Endpoint with its final bracket: `outer` lies outside the band, `inner` inside.
#[derive(Debug, Clone, PartialEq)]
pub struct Endpoint {
    pub outer: Float,
    pub inner: Float,
}

impl Endpoint {
    pub fn exact(v: Float) -> Self {
        Self {
            outer: v.clone(),
            inner: v,
        }
    }

    pub fn mid(&self) -> Float {
        let mut m = Float::with_val(self.outer.prec(), &self.outer + &self.inner);
        m /= 2;
        m
    }

    pub fn width(&self) -> Float {
        Float::with_val(self.outer.prec(), &self.outer - &self.inner).abs()
    }
}

/// The two child polynomials sharing one trace-map pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    /// `tr(M_{n} M_{n+1})`: type I children.
    Z,
    /// `tr M_{n+1}`: type II and III children.
    X,
}

/// A Chebyshev hull `(family, low, high)` of one child.
type Hull = (Family, f64, f64);

#[derive(Debug, Clone)]
struct Sample {
    x: Float,
    z: Float,
    xs: Float,
    h: Float,
}

impl Sample {
    fn value(&self, f: Family) -> &Float {
        match f {
            Family::Z => &self.z,
            Family::X => &self.xs,
        }
    }
}

/// A located child, in increasing position.
#[derive(Debug, Clone)]
pub struct ChildSpan {
    pub band_type: BandType,
    pub lo: Endpoint,
    pub hi: Endpoint,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LocatorStats {
    pub parents: u64,
    pub warm_starts: u64,
    pub grid_fallbacks: u64,
}

pub struct Locator {
    ev: TraceEvaluator,
    ctx: PrecisionContext,
    stats: LocatorStats,
    /// Sorted child hulls per (parent type, digit); `None` when they overlap.
    hulls: HashMap<(usize, u32), Option<Vec<Hull>>>,
}

fn sign(v: &Float) -> i8 {
    if v.is_zero() {
        0
    } else if v.is_sign_negative() {
        -1
    } else {
        1
    }
}

fn abs_gt(v: &Float, bound: i32) -> bool {
    v.cmp_abs(&Float::with_val(53, bound)) == Some(std::cmp::Ordering::Greater)
}

fn abs_le(v: &Float, bound: f64) -> bool {
    v.cmp_abs(&Float::with_val(53, bound)) != Some(std::cmp::Ordering::Greater)
}

/// `(p, l)` Chebyshev indices of the child images, tagged by family.
fn chebyshev_layout(parent: BandType, a: u32) -> Vec<(Family, u32, u32)> {
    let mut out = Vec::new();
    let (pz, px) = match parent {
        BandType::II => (a + 1, a),
        BandType::III => (a, a - 1),
        BandType::I => return vec![(Family::X, 1, 1)],
    };
    for l in 1..=pz {
        out.push((Family::Z, pz, l));
    }
    for l in 1..=px {
        out.push((Family::X, px, l));
    }
    out
}

/// Expected `(type I count, type II/III count)` of children.
pub fn expected_children(parent: BandType, a: u32) -> (usize, usize) {
    let a = a as usize;
    match parent {
        BandType::I => (0, 1),
        BandType::II => (a + 1, a),
        BandType::III => (a, a - 1),
    }
}

impl Locator {
    pub fn new(ev: TraceEvaluator, ctx: PrecisionContext) -> Self {
        Self {
            ev,
            ctx,
            stats: LocatorStats::default(),
            hulls: HashMap::new(),
        }
    }

    pub fn stats(&self) -> LocatorStats {
        self.stats
    }

    pub fn evaluations(&self) -> u64 {
        self.ev.evaluations()
    }

    pub fn prec(&self) -> u32 {
        self.ev.prec()
    }

    pub fn evaluator_mut(&mut self) -> &mut TraceEvaluator {
        &mut self.ev
    }

    fn sample(&mut self, x: &Float, level: usize) -> Sample {
        self.ev.run(x, level);
        let s = Sample {
            x: x.clone(),
            z: self.ev.z_cur().clone(),
            xs: self.ev.x_cur().clone(),
            h: self.ev.x_prev().clone(),
        };
        if !s.z.is_finite() || !s.xs.is_finite() {
            // MPFR exponents are effectively unbounded; this flags NaN from bad input.
            return s;
        }
        s
    }

    fn value_at(&mut self, x: &Float, level: usize, f: Family) -> Float {
        self.ev.run(x, level);
        match f {
            Family::Z => self.ev.z_cur().clone(),
            Family::X => self.ev.x_cur().clone(),
        }
    }

    /// Children of the band `[lo, hi]` of order `order` and type `parent`,
    /// where `a = a_{order+1}`.
    pub fn children(
        &mut self,
        parent: BandType,
        order: usize,
        a: u32,
        lo_end: &Endpoint,
        hi_end: &Endpoint,
        label: &dyn Fn() -> String,
    ) -> Result<Vec<ChildSpan>> {
        self.stats.parents += 1;
        let (lo, hi) = (&lo_end.inner, &hi_end.inner);
        let level = order + 1;
        let s_lo = self.sample(lo, level);
        let s_hi = self.sample(hi, level);
        for s in [&s_lo, &s_hi] {
            if !s.z.is_finite() || !s.xs.is_finite() {
                return Err(Error::PrecisionExhausted(format!(
                    "non-finite trace at the boundary of band {}",
                    label()
                )));
            }
        }
        let (nz, nx) = expected_children(parent, a);
        if parent == BandType::I && a == 1 {
            // tr M_{n+1} = tr(M_{n-1} M_n) when a_{n+1} = 1: the child is the parent itself
            return Ok(vec![ChildSpan {
                band_type: BandType::II,
                lo: lo_end.clone(),
                hi: hi_end.clone(),
            }]);
        }
        let intervals = match self.warm_start(parent, a, level, &s_lo, &s_hi) {
            Some(iv) => {
                self.stats.warm_starts += 1;
                iv
            }
            None => {
                self.stats.grid_fallbacks += 1;
                return self.grid_children(parent, level, nz, nx, s_lo, s_hi, label);
            }
        };
        let mut spans = Vec::with_capacity(intervals.len());
        for (f, left, right) in intervals {
            spans.push(self.band_between(parent, f, level, &left, &right, label)?);
        }
        Ok(spans)
    }

    /// Separating samples from Chebyshev preimages; `None` if any check fails.
    fn warm_start(
        &mut self,
        parent: BandType,
        a: u32,
        level: usize,
        s_lo: &Sample,
        s_hi: &Sample,
    ) -> Option<Vec<(Family, Sample, Sample)>> {
        let layout = chebyshev_layout(parent, a);
        for s in [s_lo, s_hi] {
            if (!abs_gt(&s.z, 2) || !abs_gt(&s.xs, 2)) && !(parent == BandType::I && abs_gt(&s.xs, 2)) {
                return None;
            }
        }
        if layout.len() == 1 {
            let f = layout[0].0;
            if sign(s_lo.value(f)) * sign(s_hi.value(f)) >= 0 {
                return None;
            }
            return Some(vec![(f, s_lo.clone(), s_hi.clone())]);
        }
        let mut hulls = self
            .hulls
            .entry((parent.slot(), a))
            .or_insert_with(|| {
                let mut h: Vec<Hull> = layout
                    .iter()
                    .map(|&(f, p, l)| {
                        let (u, v) = chebyshev_interval(p, l);
                        (f, u, v)
                    })
                    .collect();
                h.sort_by(|x, y| x.1.partial_cmp(&y.1).unwrap());
                (!h.windows(2).any(|w| w[0].2 >= w[1].1)).then_some(h)
            })
            .clone()?;
        // The parent polynomial runs from h(lo) to h(hi) = -h(lo).
        let increasing = s_lo.h < s_hi.h;
        if !increasing {
            hulls.reverse();
        }
        let mut separators = vec![s_lo.clone()];
        for w in hulls.windows(2) {
            let (gap_lo, gap_hi) = if increasing {
                (w[0].2, w[1].1)
            } else {
                (w[1].2, w[0].1)
            };
            let target = 0.5 * (gap_lo + gap_hi);
            let slack = 0.45 * (gap_hi - gap_lo);
            let start = separators.last().unwrap().clone();
            let s = self.preimage(level, target, slack, &start, s_hi)?;
            separators.push(s);
        }
        separators.push(s_hi.clone());
        let mut out = Vec::with_capacity(hulls.len());
        for (j, &(f, _, _)) in hulls.iter().enumerate() {
            let (l, r) = (&separators[j], &separators[j + 1]);
            for s in [l, r] {
                if (!abs_gt(&s.z, 2) || !abs_gt(&s.xs, 2)) && !(parent == BandType::I && abs_gt(&s.xs, 2)) {
                    return None;
                }
            }
            if sign(l.value(f)) * sign(r.value(f)) >= 0 {
                return None;
            }
            let other = if f == Family::Z { Family::X } else { Family::Z };
            if parent != BandType::I && sign(l.value(other)) * sign(r.value(other)) <= 0 {
                return None;
            }
            out.push((f, l.clone(), r.clone()));
        }
        Some(out)
    }

    /// Point in `(start, end)` where the parent polynomial is within `slack` of `target`.
    fn preimage(
        &mut self,
        level: usize,
        target: f64,
        slack: f64,
        start: &Sample,
        end: &Sample,
    ) -> Option<Sample> {
        let tgt = Float::with_val(53, target);
        let g = |s: &Sample| Float::with_val(s.h.prec(), &s.h - &tgt);
        let (mut a, mut b) = (start.clone(), end.clone());
        let (mut ga, mut gb) = (g(&a), g(&b));
        if sign(&ga) * sign(&gb) >= 0 {
            return None;
        }
        let mut side = 0i8;
        let prec = self.prec();
        for iter in 0..200 {
            let r = regula_ratio(&ga, &gb, prec);
            let r = if iter % 4 == 3 || !(r > 1e-12 && r < 1.0 - 1e-12) { 0.5 } else { r };
            let x = Float::with_val(prec, &a.x + Float::with_val(prec, &b.x - &a.x) * r);
            let (lo_b, hi_b) = if a.x < b.x { (&a.x, &b.x) } else { (&b.x, &a.x) };
            if x <= *lo_b || x >= *hi_b {
                return None;
            }
            let s = self.sample(&x, level);
            let gs = g(&s);
            if abs_le(&gs, slack) {
                return Some(s);
            }
            if sign(&gs) == sign(&ga) {
                a = s;
                ga = gs;
                if side == -1 {
                    gb /= 2;
                }
                side = -1;
            } else {
                b = s;
                gb = gs;
                if side == 1 {
                    ga /= 2;
                }
                side = 1;
            }
        }
        None
    }

    /// The unique band of family `f` between two gap samples.
    fn band_between(
        &mut self,
        parent: BandType,
        f: Family,
        level: usize,
        left: &Sample,
        right: &Sample,
        label: &dyn Fn() -> String,
    ) -> Result<ChildSpan> {
        let prec = self.prec();
        let tl = left.value(f).clone();
        let tr = right.value(f).clone();
        // Illinois on t itself until a point with |t| <= 1/2 appears. Samples in
        // the gaps on either side (|t| > 2 with the sign of that side) tighten the
        // starting brackets of the two edge searches.
        let (mut a, mut b) = (left.x.clone(), right.x.clone());
        let (mut fa, mut fb) = (tl.clone(), tr.clone());
        let (mut gap_l, mut gap_r) = ((left.x.clone(), tl.clone()), (right.x.clone(), tr.clone()));
        let (sl, sr) = (sign(&tl), sign(&tr));
        let mut side = 0i8;
        let mut inside: Option<(Float, Float)> = None;
        let mut last_width = Float::with_val(prec, &b - &a);
        for iter in 0..400u32 {
            let r = regula_ratio(&fa, &fb, prec);
            let width = Float::with_val(prec, &b - &a);
            let stalled = iter > 0 && iter.is_multiple_of(3) && width > Float::with_val(prec, &last_width / 2u32);
            if iter.is_multiple_of(3) {
                last_width = width.clone();
            }
            let r = if stalled || !(r > 1e-15 && r < 1.0 - 1e-15) { 0.5 } else { r };
            let x = Float::with_val(prec, &a + Float::with_val(prec, &width * r));
            if x <= a || x >= b {
                break;
            }
            let fx = self.value_at(&x, level, f);
            if abs_le(&fx, 0.5) {
                inside = Some((x, fx));
                break;
            }
            if abs_gt(&fx, 2) {
                if sign(&fx) == sl && x > gap_l.0 {
                    gap_l = (x.clone(), fx.clone());
                } else if sign(&fx) == sr && x < gap_r.0 {
                    gap_r = (x.clone(), fx.clone());
                }
            }
            if sign(&fx) == sign(&fa) {
                a = x;
                fa = fx;
                if side == -1 {
                    fb /= 2;
                }
                side = -1;
            } else {
                b = x;
                fb = fx;
                if side == 1 {
                    fa /= 2;
                }
                side = 1;
            }
        }
        let (c, tc) = inside.ok_or_else(|| {
            Error::PrecisionExhausted(format!(
                "could not reach the interior of a child of {} at {prec} bits",
                label()
            ))
        })?;
        let lo = self.edge(f, level, &gap_l.0, &gap_l.1, &c, &tc, (&c, &left.x), label)?;
        let hi = self.edge(f, level, &gap_r.0, &gap_r.1, &c, &tc, (&c, &right.x), label)?;
        let band_type = match (f, parent) {
            (Family::Z, _) => BandType::I,
            (Family::X, BandType::I) => BandType::II,
            (Family::X, _) => BandType::III,
        };
        Ok(ChildSpan { band_type, lo, hi })
    }

    /// Edge between the gap point `g` and the interior point `c`: the crossing
    /// of `s t = 2` where `s` is the sign of `t(g)`, resolved relative to the
    /// distance between the band centre and a reference point in the gap.
    #[allow(clippy::too_many_arguments)]
    fn edge(
        &mut self,
        f: Family,
        level: usize,
        g: &Float,
        tg: &Float,
        c: &Float,
        tc: &Float,
        (centre, reference): (&Float, &Float),
        label: &dyn Fn() -> String,
    ) -> Result<Endpoint> {
        let prec = self.prec();
        let s = sign(tg);
        let shifted = |t: &Float| {
            let mut v = Float::with_val(prec, t * s as i32);
            v -= 2;
            v
        };
        // outer: F > 0, inner: F <= 0
        let (mut po, mut pi) = (g.clone(), c.clone());
        let (mut fo, mut fi) = (shifted(tg), shifted(tc));
        let scale = Float::with_val(prec, centre - reference).abs();
        let tol = Float::with_val(prec, &scale * (self.ctx.rel_tol * 0.25));
        let mut side = 0i8;
        let mut last_width = scale.clone();
        let mut iter = 0u32;
        loop {
            let width = Float::with_val(prec, &po - &pi).abs();
            if width <= tol {
                break;
            }
            let r = regula_ratio(&fo, &fi, prec);
            let stalled = iter > 0 && iter.is_multiple_of(3) && width > Float::with_val(prec, &last_width / 2u32);
            if iter.is_multiple_of(3) {
                last_width = width.clone();
            }
            let r = if stalled || !(r > 1e-15 && r < 1.0 - 1e-15) { 0.5 } else { r };
            let step = Float::with_val(prec, &pi - &po) * r;
            let x = Float::with_val(prec, &po + step);
            let (lo_b, hi_b) = if po < pi { (&po, &pi) } else { (&pi, &po) };
            if x <= *lo_b || x >= *hi_b {
                // Bracket at working resolution; accept only if it is already fine
                // relative to the distance from the interior point.
                let dist = Float::with_val(prec, &pi - centre).abs();
                if width <= Float::with_val(prec, &dist * 1e-6) || dist.is_zero() {
                    break;
                }
                return Err(Error::PrecisionExhausted(format!(
                    "endpoint of a child of {} unresolved at {prec} bits",
                    label()
                )));
            }
            let fx = shifted(&self.value_at(&x, level, f));
            if !fx.is_finite() {
                return Err(Error::PrecisionExhausted(format!(
                    "non-finite trace inside {}",
                    label()
                )));
            }
            // Anderson-Bjorck: when one end is retained, scale its value by
            // 1 - f_new / f_replaced (or 1/2 if that is not positive).
            if fx > 0 {
                if side == -1 {
                    let m = Float::with_val(prec, &fx / &fo);
                    let m = 1.0 - m.to_f64();
                    fi *= if m > 0.0 { m } else { 0.5 };
                }
                po = x;
                fo = fx;
                side = -1;
            } else {
                if side == 1 {
                    let m = Float::with_val(prec, &fx / &fi);
                    let m = 1.0 - m.to_f64();
                    fo *= if m > 0.0 { m } else { 0.5 };
                }
                pi = x;
                fi = fx;
                side = 1;
            }
            iter += 1;
            if iter > 2000 {
                return Err(Error::PrecisionExhausted(format!(
                    "endpoint iteration did not converge in {}",
                    label()
                )));
            }
        }
        Ok(Endpoint {
            outer: po,
            inner: pi,
        })
    }

    /// The adaptive sign scan: `|t| - 2` sampled on a uniform grid, doubled until
    /// each family shows exactly two crossings per expected child.
    #[allow(clippy::too_many_arguments)]
    fn grid_children(
        &mut self,
        parent: BandType,
        level: usize,
        nz: usize,
        nx: usize,
        s_lo: Sample,
        s_hi: Sample,
        label: &dyn Fn() -> String,
    ) -> Result<Vec<ChildSpan>> {
        let prec = self.prec();
        let total = nz + nx;
        let mut points = 16 * total.max(1);
        let width = Float::with_val(prec, &s_hi.x - &s_lo.x);
        let mut samples: Vec<Sample> = vec![s_lo.clone()];
        for j in 1..points {
            let x = Float::with_val(prec, &s_lo.x + Float::with_val(prec, &width * j as u32) / points as u32);
            samples.push(self.sample(&x, level));
        }
        samples.push(s_hi);
        loop {
            let crossings = |f: Family, samples: &[Sample]| -> Vec<usize> {
                samples
                    .windows(2)
                    .enumerate()
                    .filter(|(_, w)| abs_gt(w[0].value(f), 2) != abs_gt(w[1].value(f), 2))
                    .map(|(i, _)| i)
                    .collect()
            };
            let cz = crossings(Family::Z, &samples);
            let cx = crossings(Family::X, &samples);
            let boundary_ok = [Family::Z, Family::X].iter().all(|&f| {
                (f == Family::Z && nz == 0)
                    || (abs_gt(samples[0].value(f), 2) && abs_gt(samples.last().unwrap().value(f), 2))
            });
            if boundary_ok && cz.len() == 2 * nz && cx.len() == 2 * nx {
                let mut spans = Vec::with_capacity(total);
                for (f, cr) in [(Family::Z, &cz), (Family::X, &cx)] {
                    for pair in cr.chunks(2) {
                        let (enter, exit) = (pair[0], pair[1]);
                        let lo = self.grid_edge(f, level, &samples[enter], &samples[enter + 1], label)?;
                        let hi = self.grid_edge(f, level, &samples[exit + 1], &samples[exit], label)?;
                        let band_type = match (f, parent) {
                            (Family::Z, _) => BandType::I,
                            (Family::X, BandType::I) => BandType::II,
                            (Family::X, _) => BandType::III,
                        };
                        spans.push(ChildSpan { band_type, lo, hi });
                    }
                }
                spans.sort_by(|a, b| a.lo.inner.partial_cmp(&b.lo.inner).unwrap());
                return Ok(spans);
            }
            if points * 2 > GRID_CAP {
                return Err(Error::ChildCountMismatch {
                    word: label(),
                    expected: total,
                    found: (cz.len() + cx.len()) / 2,
                });
            }
            points *= 2;
            let mut refined = Vec::with_capacity(samples.len() * 2);
            for w in samples.windows(2) {
                refined.push(w[0].clone());
                let m = Float::with_val(prec, &w[0].x + &w[1].x) / 2u32;
                refined.push(self.sample(&m, level));
            }
            refined.push(samples.last().unwrap().clone());
            samples = refined;
        }
    }

    /// Crossing of `|t| = 2` between a gap sample and an interior sample.
    fn grid_edge(
        &mut self,
        f: Family,
        level: usize,
        gap: &Sample,
        interior: &Sample,
        label: &dyn Fn() -> String,
    ) -> Result<Endpoint> {
        let tg = gap.value(f).clone();
        let ti = interior.value(f).clone();
        if sign(&tg) == sign(&ti) || ti.is_zero() {
            return self.edge(f, level, &gap.x, &tg, &interior.x, &ti, (&interior.x, &gap.x), label);
        }
        // The interior sample sits past the centre of the band; find a point
        // on the near side with the sign of the gap value.
        let prec = self.prec();
        let mut x = Float::with_val(prec, &gap.x + &interior.x) / 2u32;
        let mut far = interior.x.clone();
        for _ in 0..prec {
            let t = self.value_at(&x, level, f);
            if !abs_gt(&t, 2) && sign(&t) == sign(&tg) {
                return self.edge(f, level, &gap.x, &tg, &x, &t, (&x, &gap.x), label);
            }
            if abs_gt(&t, 2) {
                // x is still in the gap: move towards the band
                let nx = Float::with_val(prec, &x + &far) / 2u32;
                x = nx;
            } else {
                far = x.clone();
                let nx = Float::with_val(prec, &gap.x + &x) / 2u32;
                x = nx;
            }
        }
        Err(Error::PrecisionExhausted(format!(
            "could not bracket an endpoint inside {}",
            label()
        )))
    }
}

/// `fa / (fa - fb)` as a double, for points with opposite signs.
fn regula_ratio(fa: &Float, fb: &Float, prec: u32) -> f64 {
    let denom = Float::with_val(prec, fa - fb);
    if denom.is_zero() {
        return 0.5;
    }
    Float::with_val(prec, fa / &denom).to_f64()
}
