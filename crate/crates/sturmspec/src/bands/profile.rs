//! Gaps and empirical constants of the band tree.

use std::collections::HashMap;

use rug::Float;

use super::{BandTree, Coupling, TraceEvaluator};
use crate::coding::{BandType, Letter};
use crate::error::{Error, Result};

/// Gap of order `n`: the open interval between two consecutive children of a band of order `n`.
#[derive(Debug, Clone)]
pub struct Gap {
    pub order: usize,
    /// Index of the containing band at level `order`.
    pub parent: usize,
    pub lo: Float,
    pub hi: Float,
}

impl Gap {
    pub fn length(&self) -> f64 {
        Float::with_val(self.hi.prec(), &self.hi - &self.lo).to_f64()
    }
}

#[derive(Debug, Clone)]
pub struct GapReport {
    pub gaps: Vec<Gap>,
    /// `min |G| / |B_G|`, infinite when the level has no gaps.
    pub min_ratio: f64,
}

/// Gaps of order `n`, measured between the outer brackets of neighbouring children.
pub fn gaps(tree: &BandTree, n: usize) -> Result<GapReport> {
    if n >= tree.depth() {
        return Err(Error::DepthMismatch(format!(
            "gaps of order {n} need a tree of depth {} or more, have {}",
            n + 1,
            tree.depth()
        )));
    }
    let mut out = Vec::new();
    let mut min_ratio = f64::INFINITY;
    for (i, parent) in tree.level(n).iter().enumerate() {
        let kids = tree.children_of(n, i);
        let len = parent.length();
        for w in kids.windows(2) {
            let g = Gap {
                order: n,
                parent: i,
                lo: w[0].hi.outer.clone(),
                hi: w[1].lo.outer.clone(),
            };
            let ratio = Float::with_val(len.prec(), &g.hi - &g.lo) / &len;
            min_ratio = min_ratio.min(ratio.to_f64());
            out.push(g);
        }
    }
    Ok(GapReport {
        gaps: out,
        min_ratio,
    })
}

/// Log-space bounds `(ln lower, ln upper)` on `|B_w|` for a word of order `n`
/// with `count` occurrences of `(II,1)` after the root, tail constant `kappa`.
pub fn sandwich_bounds(kappa: u32, coupling: Coupling, n: usize, count: usize) -> (f64, f64) {
    let v = coupling.value();
    let (t1, t2) = ((v - 8.0) / 3.0, 2.0 * (v + 5.0));
    let k = kappa as f64;
    let c = count as f64;
    let m = c - n as f64;
    let lower = (1.0 - k) * c * t2.ln() + m * (t2 * k.powi(3)).ln();
    let upper = 4f64.ln() + (1.0 - k) * c * t1.ln() + m * (t1 * k).ln();
    (lower, upper)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SandwichReport {
    pub checked: usize,
    /// Smallest `ln |B| - ln lower` over the checked bands.
    pub lower_margin: f64,
    /// Smallest `ln upper - ln |B|`.
    pub upper_margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsProfile {
    pub xi: f64,
    pub eta: f64,
    pub c3: f64,
    pub n0: usize,
    pub c1: f64,
    pub c2: f64,
    pub gap_constant: f64,
    pub t1: f64,
    pub t2: f64,
    /// Fitted constant of the length law `c^{±n} V^{-(κ-2)|w|_{II} - n}`; only for constant digits.
    pub c_kappa: Option<f64>,
    pub sandwich: Option<SandwichReport>,
}

const SANDWICH_SLACK: f64 = 1e-9;
const SAMPLES_PER_LEVEL: usize = 256;

/// Empirical constants of the tree. The length sandwich is checked on every band
/// when all digits after `a0` equal the tail constant and `V > 20`.
pub fn estimate_bounds_profile(tree: &BandTree, coupling: Coupling) -> Result<BoundsProfile> {
    if tree.depth() < 4 {
        return Err(Error::DepthMismatch(format!(
            "bounds profile needs depth 4, tree has {}",
            tree.depth()
        )));
    }
    let spec = &tree.spec;
    let kappa = spec.kappa();
    let v = coupling.value();
    let tail_only = spec.prefix().iter().skip(1).all(|&a| a == kappa);

    let xi = derivative_spread(tree, coupling);
    let eta = covariation(tree);

    let mut c3 = 1.0f64;
    for level in tree.levels.iter().skip(1) {
        for b in level {
            c3 = c3.min((b.ln_length() / b.order() as f64).exp());
        }
    }

    let (mut n0, mut c1, mut c2) = (0, 0.0, 1.0);
    for cand in 1..=4.min(tree.depth()) {
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for n in cand + 1..=tree.depth() {
            for b in tree.level(n) {
                let mut idx = b.parent.expect("deep bands have parents");
                for k in 1..cand {
                    idx = tree.level(n - k)[idx].parent.expect("deep bands have parents");
                }
                let anc = &tree.level(n - cand)[idx];
                let r = (b.ln_length() - anc.ln_length()).exp();
                lo = lo.min(r);
                hi = hi.max(r);
            }
        }
        if hi < 1.0 {
            (n0, c1, c2) = (cand, lo, hi);
            break;
        }
    }

    let mut gap_constant = f64::INFINITY;
    for n in 0..tree.depth() {
        gap_constant = gap_constant.min(gaps(tree, n)?.min_ratio);
    }

    let ii = Letter::new(BandType::II, 1, kappa)?;
    let c_kappa = tail_only.then(|| {
        let mut c = 1.0f64;
        for level in tree.levels.iter().skip(1) {
            for b in level {
                let n = b.order() as f64;
                let count = b.word.count_after_root(&ii) as f64;
                let predicted = -((kappa as f64 - 2.0) * count + n) * v.ln();
                c = c.max(((b.ln_length() - predicted).abs() / n).exp());
            }
        }
        c
    });

    let sandwich = if tail_only && coupling.in_estimator_range() {
        let mut rep = SandwichReport {
            checked: 0,
            lower_margin: f64::INFINITY,
            upper_margin: f64::INFINITY,
        };
        for level in &tree.levels {
            for b in level {
                let (lo, hi) = sandwich_bounds(kappa, coupling, b.order(), b.word.count_after_root(&ii));
                let len = b.ln_length();
                rep.checked += 1;
                rep.lower_margin = rep.lower_margin.min(len - lo);
                rep.upper_margin = rep.upper_margin.min(hi - len);
                if len - lo < -SANDWICH_SLACK || hi - len < -SANDWICH_SLACK {
                    return Err(Error::BoundViolation {
                        word: b.word.to_string(),
                        detail: format!("ln|B| = {len} outside [{lo}, {hi}]"),
                    });
                }
            }
        }
        Some(rep)
    } else {
        None
    };

    Ok(BoundsProfile {
        xi,
        eta,
        c3,
        n0,
        c1,
        c2,
        gap_constant,
        t1: (v - 8.0) / 3.0,
        t2: 2.0 * (v + 5.0),
        c_kappa,
        sandwich,
    })
}

/// Largest ratio of `|h'|` between sample points of one band.
fn derivative_spread(tree: &BandTree, coupling: Coupling) -> f64 {
    let prec = tree.mantissa_bits;
    let mut ev = TraceEvaluator::new(&tree.spec, coupling, tree.depth() + 1, prec);
    let mut xi = 1.0f64;
    for (n, level) in tree.levels.iter().enumerate() {
        let stride = (level.len() / SAMPLES_PER_LEVEL).max(1);
        for b in level.iter().step_by(stride) {
            let width = Float::with_val(prec, &b.hi.inner - &b.lo.inner);
            let delta = Float::with_val(prec, &width * 1e-7);
            let mut h = |x: &Float| {
                ev.run(x, n);
                match b.band_type() {
                    BandType::I => ev.z_cur().clone(),
                    _ => ev.x_cur().clone(),
                }
            };
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for k in 0..8 {
                let x = Float::with_val(prec, &b.lo.inner + Float::with_val(prec, &width * ((k as f64 + 0.5) / 8.0)));
                let up = h(&Float::with_val(prec, &x + &delta));
                let down = h(&Float::with_val(prec, &x - &delta));
                let d = Float::with_val(prec, &up - &down).abs().to_f64();
                lo = lo.min(d);
                hi = hi.max(d);
            }
            if lo > 0.0 {
                xi = xi.max(hi / lo);
            }
        }
    }
    xi
}

/// Largest spread of `|B_{wu}| / |B_w|` over words `w` of one order sharing
/// their last letter, for suffixes up to three letters.
fn covariation(tree: &BandTree) -> f64 {
    let mut eta = 1.0f64;
    for k in 1..=3usize {
        let mut spread: HashMap<(usize, Vec<Letter>), (f64, f64)> = HashMap::new();
        for n in 0..tree.depth().saturating_sub(k - 1) {
            if n + k > tree.depth() {
                break;
            }
            for b in tree.level(n + k) {
                let mut idx = b.parent.expect("deep bands have parents");
                for j in 1..k {
                    idx = tree.level(n + k - j)[idx].parent.expect("deep bands have parents");
                }
                let anc = &tree.level(n)[idx];
                let ratio = b.ln_length() - anc.ln_length();
                let key = (n, b.word.letters()[n..].to_vec());
                let e = spread.entry(key).or_insert((ratio, ratio));
                e.0 = e.0.min(ratio);
                e.1 = e.1.max(ratio);
            }
        }
        for (_, (lo, hi)) in spread {
            eta = eta.max((hi - lo).exp());
        }
    }
    eta
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bands::{build_band_tree, FrequencySpec};
    use crate::numkernel::PrecisionContext;

    #[test]
    fn gap_counts_by_parent_type() {
        let spec = FrequencySpec::golden();
        let v = Coupling::new(24.0).unwrap();
        let t = build_band_tree(&spec, v, 4, &PrecisionContext::double()).unwrap();
        for n in 0..4 {
            let rep = gaps(&t, n).unwrap();
            for (i, b) in t.level(n).iter().enumerate() {
                let count = rep.gaps.iter().filter(|g| g.parent == i).count();
                let want = match b.band_type() {
                    BandType::I => 0,
                    BandType::II => 2,
                    BandType::III => 0,
                };
                assert_eq!(count, want, "{}", b.word);
            }
            assert!(rep.min_ratio > 0.0);
        }
    }

    #[test]
    fn sandwich_at_order_zero_is_tight() {
        let v = Coupling::new(24.0).unwrap();
        let (lo, hi) = sandwich_bounds(1, v, 0, 0);
        assert_eq!(lo, 0.0);
        assert!((hi - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn profile_constants_are_positive() {
        let spec = FrequencySpec::golden();
        let v = Coupling::new(24.0).unwrap();
        let t = build_band_tree(&spec, v, 6, &PrecisionContext::double()).unwrap();
        let p = estimate_bounds_profile(&t, v).unwrap();
        assert!(p.xi >= 1.0 && p.eta >= 1.0);
        assert!(p.c3 > 0.0 && p.c3 < 1.0);
        assert!(p.gap_constant > 0.0);
        assert!(p.c1 > 0.0 && p.c2 < 1.0 && p.n0 >= 1);
        assert_eq!(p.t1, 16.0 / 3.0);
        assert_eq!(p.t2, 58.0);
        assert!(p.sandwich.unwrap().checked == t.band_count());
        for n in 0..6 {
            assert!(p.gap_constant <= gaps(&t, n).unwrap().min_ratio);
        }
    }
}
