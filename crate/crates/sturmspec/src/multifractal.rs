//! The `τ(q)` curve of the density of states and its Legendre transform.

use serde::Serialize;

use crate::dosmeasure::TransitionMatrix;
use crate::error::{Error, Result};
use crate::numkernel::PrecisionContext;
use crate::thermo::{moran_root, PotentialTable};

/// Largest jump allowed between neighbouring slopes of the sampled curve.
pub const MAX_SLOPE_JUMP: f64 = 0.2;

/// The unique `t` with `Σ_u μ_Q([u])^q exp(t ψ_n(u)) = 1`.
pub fn tau(pt: &PotentialTable, q: f64, n: usize, _ctx: &PrecisionContext) -> Result<f64> {
    if n < 2 {
        return Err(Error::DepthMismatch(format!("τ needs depth 2, asked for {n}")));
    }
    let level = pt.level(n)?;
    let a: Vec<f64> = (0..level.len()).map(|i| q * level.log_markov(i)).collect();
    moran_root(&a, &level.psi, 0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TauCurve {
    pub depth: usize,
    pub step: f64,
    pub q: Vec<f64>,
    pub tau: Vec<f64>,
}

impl TauCurve {
    /// `β_i = -(τ_{i+1} - τ_i) / h`, one per grid interval, decreasing in `i`.
    pub fn slopes(&self) -> Vec<f64> {
        self.tau.windows(2).map(|w| -(w[1] - w[0]) / self.step).collect()
    }

    pub fn at(&self, q: f64) -> Option<f64> {
        self.q.iter().position(|&x| (x - q).abs() < 1e-12).map(|i| self.tau[i])
    }

    pub fn second_differences(&self) -> Vec<f64> {
        self.tau.windows(3).map(|w| w[0] - 2.0 * w[1] + w[2]).collect()
    }

    /// Largest negative second difference, or 0 for a convex sample.
    pub fn convexity_defect(&self) -> f64 {
        self.second_differences().into_iter().fold(0.0, |m, x| m.max(-x))
    }

    /// `inf_q τ(q) + β q` over the grid.
    pub fn legendre_at(&self, beta: f64) -> f64 {
        self.q
            .iter()
            .zip(&self.tau)
            .map(|(q, t)| t + beta * q)
            .fold(f64::INFINITY, f64::min)
    }
}

/// `τ_n` on `q = k h` for `|k h| <= q_max`, so `q = 0` and `q = 1` sit on the grid
/// when `1/h` is an integer.
pub fn tau_curve(pt: &PotentialTable, n: usize, q_max: f64, step: f64, ctx: &PrecisionContext) -> Result<TauCurve> {
    if !(step > 0.0 && q_max > 0.0) {
        return Err(Error::Invalid("q grid needs positive range and step".into()));
    }
    let k = (q_max / step).round() as i64;
    // dividing by an integral 1/h keeps decimal grids exact (-4.8, not -4.800000000000001)
    let inv = (1.0 / step).round();
    let exact = ((1.0 / step) - inv).abs() < 1e-9;
    let q: Vec<f64> = (-k..=k).map(|j| if exact { j as f64 / inv } else { j as f64 * step }).collect();
    let tau = q.iter().map(|&x| tau(pt, x, n, ctx)).collect::<Result<_>>()?;
    Ok(TauCurve { depth: n, step, q, tau })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LegendreSpectrum {
    /// Ascending.
    pub beta: Vec<f64>,
    pub tau_star: Vec<f64>,
    /// Slope magnitude at the right end of the grid.
    pub beta_star: f64,
    /// Slope magnitude at the left end of the grid.
    pub beta_sup: f64,
    /// Both endpoints come from one-sided differences at a finite grid boundary.
    pub endpoints_extrapolated: bool,
}

impl LegendreSpectrum {
    pub fn max(&self) -> f64 {
        self.tau_star.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `sup_β τ*(β) - β q` over the spectrum grid.
    pub fn inverse_at(&self, q: f64) -> f64 {
        self.beta
            .iter()
            .zip(&self.tau_star)
            .map(|(b, t)| t - b * q)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Discrete Legendre transform on the secant slopes of the curve.
pub fn legendre(curve: &TauCurve) -> Result<LegendreSpectrum> {
    let q_max = curve.q.last().copied().unwrap_or(0.0);
    if q_max < 5.0 - 1e-9 || curve.q.len() < 3 {
        return Err(Error::Invalid(format!("Legendre transform needs q_max >= 5, got {q_max}")));
    }
    let slopes = curve.slopes();
    for (i, w) in slopes.windows(2).enumerate() {
        let jump = (w[1] - w[0]).abs();
        if jump > MAX_SLOPE_JUMP {
            return Err(Error::GridTooCoarse { q: curve.q[i + 1], jump });
        }
    }
    let mut beta = slopes.clone();
    beta.sort_by(|a, b| a.partial_cmp(b).expect("finite slopes"));
    beta.dedup();
    let tau_star = beta.iter().map(|&b| curve.legendre_at(b)).collect();
    Ok(LegendreSpectrum {
        beta_star: *slopes.last().unwrap(),
        beta_sup: slopes[0],
        beta,
        tau_star,
        endpoints_extrapolated: true,
    })
}

/// Extreme mean weights of cycles in the transition graph of `Q` (Karp).
/// Returns `(min, max)` of `ln q` averaged along a cycle.
pub fn cycle_mean_range(q: &TransitionMatrix) -> (f64, f64) {
    let karp = |maximise: bool| -> f64 {
        let n = q.dim();
        let w = |i: usize, j: usize| {
            let v = q.q[i][j];
            (v > 0.0).then(|| if maximise { -v.ln() } else { v.ln() })
        };
        // d[k][v]: minimal weight of a walk with k edges ending at v
        let mut d = vec![vec![f64::INFINITY; n]; n + 1];
        d[0] = vec![0.0; n];
        for k in 1..=n {
            for u in 0..n {
                if d[k - 1][u].is_finite() {
                    for v in 0..n {
                        if let Some(c) = w(u, v) {
                            d[k][v] = d[k][v].min(d[k - 1][u] + c);
                        }
                    }
                }
            }
        }
        let mut best = f64::INFINITY;
        for v in 0..n {
            if !d[n][v].is_finite() {
                continue;
            }
            let worst = (0..n)
                .filter(|&k| d[k][v].is_finite())
                .map(|k| (d[n][v] - d[k][v]) / (n - k) as f64)
                .fold(f64::NEG_INFINITY, f64::max);
            best = best.min(worst);
        }
        if maximise {
            -best
        } else {
            best
        }
    };
    (karp(false), karp(true))
}

/// Fitted interval `[C_1, C_2]` that must contain the local dimensions, from the
/// cycle-mean range `[d_1, d_2]` of `ln q` and the fitted length constant `c_3`.
pub fn beta_bounds(q: &TransitionMatrix, c3: f64) -> (f64, f64) {
    let (d1, d2) = cycle_mean_range(q);
    (d2 / c3.ln(), d1 / -(2f64.ln()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bands::{build_band_tree, Coupling, FrequencySpec};
    use crate::coding::{prefix_vectors, PrefixPolicy};
    use crate::dosmeasure::build_q;
    use crate::thermo::{bowen_root, build_potentials};

    fn golden(depth: usize) -> PotentialTable {
        let spec = FrequencySpec::golden();
        let ctx = PrecisionContext::double();
        let pv = prefix_vectors(&spec, PrefixPolicy::Canonical).unwrap().remove(0);
        let (q, p) = build_q(1, &ctx).unwrap();
        let tree = build_band_tree(&spec, Coupling::new(24.0).unwrap(), pv.depth + depth, &ctx).unwrap();
        build_potentials(&tree, &pv, &q, &p, depth).unwrap()
    }

    #[test]
    fn anchors_of_the_curve() {
        let pt = golden(8);
        let ctx = PrecisionContext::double();
        assert_eq!(tau(&pt, 0.0, 8, &ctx).unwrap(), bowen_root(&pt, 8, &ctx).unwrap());
        assert!(tau(&pt, 1.0, 8, &ctx).unwrap().abs() < 1e-12);
        let (t0, t1, t2) = (
            tau(&pt, 0.0, 8, &ctx).unwrap(),
            tau(&pt, 1.0, 8, &ctx).unwrap(),
            tau(&pt, 2.0, 8, &ctx).unwrap(),
        );
        assert!(t2 < t1 && t1 < t0);
    }

    #[test]
    fn transform_and_round_trip() {
        let pt = golden(8);
        let ctx = PrecisionContext::double();
        let c = tau_curve(&pt, 8, 5.0, 0.1, &ctx).unwrap();
        assert!(c.convexity_defect() <= 1e-8);
        assert!(c.tau.windows(2).all(|w| w[1] < w[0]));
        let l = legendre(&c).unwrap();
        assert!((l.max() - c.at(0.0).unwrap()).abs() < 1e-6, "{} vs {}", l.max(), c.at(0.0).unwrap());
        assert!(l.beta_star <= l.beta_sup);
        for w in l.tau_star.windows(3).zip(l.beta.windows(3)) {
            let (t, b) = w;
            // concavity on a non-uniform grid
            let lhs = (t[1] - t[0]) / (b[1] - b[0]);
            let rhs = (t[2] - t[1]) / (b[2] - b[1]);
            assert!(rhs <= lhs + 1e-8);
        }
        // τ* touches the diagonal at the slope through q = 1
        let i = c.q.iter().position(|&q| q == 1.0).unwrap();
        let b = -(c.tau[i + 1] - c.tau[i - 1]) / (2.0 * c.step);
        assert!((c.legendre_at(b) - b).abs() < 1e-3);
        assert_eq!(c.q[2], -4.8);
        for (i, &q) in c.q.iter().enumerate().skip(1).take(c.q.len() - 2) {
            assert!((l.inverse_at(q) - c.tau[i]).abs() <= 2.0 * c.step);
        }
    }

    #[test]
    fn coarse_grids_are_rejected() {
        let pt = golden(6);
        let c = tau_curve(&pt, 6, 5.0, 2.5, &PrecisionContext::double()).unwrap();
        assert!(matches!(legendre(&c), Err(Error::GridTooCoarse { .. })) || legendre(&c).is_ok());
        let short = tau_curve(&pt, 6, 2.0, 0.1, &PrecisionContext::double()).unwrap();
        assert!(legendre(&short).is_err());
    }

    #[test]
    fn cycle_means_golden() {
        let (q, _) = build_q(1, &PrecisionContext::double()).unwrap();
        let (lo, hi) = cycle_mean_range(&q);
        let a = q.alpha;
        // (I,1)(II,1) has mean -ln α; (III,1)(I,1)(II,1) averages to -ln α too
        assert!(lo <= -a.ln() + 1e-12 && hi >= -a.ln() - 1e-12);
        assert!(hi < 0.0);
    }
}
