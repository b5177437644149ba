//! Band-length and Markov potentials on the tail shift, finite-level pressure,
//! Moran roots and the three spectral exponents.

use serde::Serialize;

use crate::bands::{BandEngine, BandTree, Coupling, FrequencySpec, Node};
use crate::coding::{alphabet_letters, Letter, PrefixVector, Word};
use crate::dosmeasure::{cylinder_weight, tail_alpha, StationaryVector, TransitionMatrix};
use crate::error::{Error, Result};
use crate::numkernel::{bisect_root, PrecisionContext};

/// Deterministic pairwise summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n if n <= 8 => xs.iter().sum(),
        n => pairwise_sum(&xs[..n / 2]) + pairwise_sum(&xs[n / 2..]),
    }
}

/// `ln Σ exp(x_i)`, stable and in a fixed order.
pub fn log_sum_exp(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + pairwise_sum(&v.iter().map(|x| (x - m).exp()).collect::<Vec<_>>()).ln()
}

/// All free words of one length with their potentials, grouped by first letter
/// and then in spectral order of the bands, so extensions of a word are contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialLevel {
    pub depth: usize,
    positions: Vec<u8>,
    /// `ln |B_{w^{u_0} ⋆ u}|`.
    pub psi: Vec<f64>,
    /// `Σ ln q_{u_i u_{i+1}}`.
    pub phi: Vec<f64>,
    pub ln_p0: Vec<f64>,
}

impl PotentialLevel {
    fn new(depth: usize) -> Self {
        Self {
            depth,
            positions: Vec::new(),
            psi: Vec::new(),
            phi: Vec::new(),
            ln_p0: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }

    /// 1-based letter positions of word `i`.
    pub fn positions(&self, i: usize) -> &[u8] {
        let w = self.depth + 1;
        &self.positions[i * w..(i + 1) * w]
    }

    pub fn word(&self, i: usize, kappa: u32) -> Word {
        let pos: Vec<usize> = self.positions(i).iter().map(|&p| p as usize).collect();
        Word::free_from_positions(&pos, kappa).expect("stored words are admissible")
    }

    /// `ln μ_Q([u])`.
    pub fn log_markov(&self, i: usize) -> f64 {
        self.ln_p0[i] + self.phi[i]
    }

    pub fn min_psi(&self) -> f64 {
        self.psi.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `Σ μ_Q([u]) ψ(u)`.
    pub fn markov_mean_psi(&self) -> f64 {
        pairwise_sum(
            &(0..self.len())
                .map(|i| self.log_markov(i).exp() * self.psi[i])
                .collect::<Vec<_>>(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialTable {
    pub kappa: u32,
    pub prefix_vector: PrefixVector,
    levels: Vec<PotentialLevel>,
}

impl PotentialTable {
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, n: usize) -> Result<&PotentialLevel> {
        self.levels.get(n).ok_or_else(|| {
            Error::DepthMismatch(format!("potentials reach depth {}, asked for {n}", self.depth()))
        })
    }

    pub fn alpha(&self) -> f64 {
        tail_alpha(self.kappa)
    }

    /// `P_n(s) = (1/n) ln Σ exp(s ψ_n(u))`.
    pub fn pressure(&self, n: usize, s: f64) -> Result<f64> {
        let level = self.level(n)?;
        let n = n.max(1) as f64;
        Ok(log_sum_exp(level.psi.iter().map(|x| s * x)) / n)
    }
}

struct Collector<'a> {
    kappa: u32,
    q: &'a TransitionMatrix,
    p: &'a StationaryVector,
    levels: Vec<PotentialLevel>,
}

impl Collector<'_> {
    fn emit(&mut self, positions: &[u8], psi: f64, phi: f64) {
        let level = &mut self.levels[positions.len() - 1];
        level.positions.extend_from_slice(positions);
        level.psi.push(psi);
        level.phi.push(phi);
        let first = Letter::from_position(self.kappa, positions[0] as usize).expect("valid position");
        level.ln_p0.push(self.p.of(&first).ln());
    }

    fn step(&self, positions: &[u8], next: &Letter) -> f64 {
        let last = Letter::from_position(self.kappa, *positions.last().unwrap() as usize).expect("valid position");
        self.q.entry(&last, next).ln()
    }

    fn finish(self, pv: &PrefixVector) -> PotentialTable {
        PotentialTable {
            kappa: self.kappa,
            prefix_vector: pv.clone(),
            levels: self.levels,
        }
    }
}

fn check_inputs(pv: &PrefixVector, q: &TransitionMatrix) -> Result<u32> {
    let kappa = q.kappa;
    if pv.words.len() != 2 * kappa as usize + 2 {
        return Err(Error::Invalid(format!(
            "prefix vector has {} words for an alphabet of {}",
            pv.words.len(),
            2 * kappa + 2
        )));
    }
    for (w, e) in pv.words.iter().zip(alphabet_letters(kappa)) {
        if w.last() != e || w.order() != pv.depth {
            return Err(Error::Invalid(format!("prefix word {w} does not end in {e} at order {}", pv.depth)));
        }
    }
    Ok(kappa)
}

/// Potentials up to `depth` by walking the subtrees below each prefix word,
/// locating bands on the fly.
pub fn stream_potentials(
    engine: &mut BandEngine,
    pv: &PrefixVector,
    q: &TransitionMatrix,
    p: &StationaryVector,
    depth: usize,
) -> Result<PotentialTable> {
    let kappa = check_inputs(pv, q)?;
    if engine.max_order() < pv.depth + depth {
        return Err(Error::DepthMismatch(format!(
            "engine reaches order {}, potentials need {}",
            engine.max_order(),
            pv.depth + depth
        )));
    }
    let mut out = Collector {
        kappa,
        q,
        p,
        levels: (0..=depth).map(PotentialLevel::new).collect(),
    };
    for e in alphabet_letters(kappa) {
        let start = engine.descend(pv.word_for(&e))?.pop().expect("paths are non-empty");
        let mut stack: Vec<(Node, Vec<u8>, f64)> = vec![(start, vec![e.position() as u8], 0.0)];
        while let Some((node, pos, phi)) = stack.pop() {
            out.emit(&pos, node.ln_length(), phi);
            if pos.len() <= depth {
                let kids = engine.children(&node)?;
                for kid in kids.into_iter().rev() {
                    let letter = kid.word.last();
                    let phi_kid = phi + out.step(&pos, &letter);
                    let mut p2 = pos.clone();
                    p2.push(letter.position() as u8);
                    stack.push((kid, p2, phi_kid));
                }
            }
        }
    }
    Ok(out.finish(pv))
}

/// Potentials read from a built tree.
pub fn build_potentials(
    tree: &BandTree,
    pv: &PrefixVector,
    q: &TransitionMatrix,
    p: &StationaryVector,
    depth: usize,
) -> Result<PotentialTable> {
    let kappa = check_inputs(pv, q)?;
    let mut out = Collector {
        kappa,
        q,
        p,
        levels: (0..=depth).map(PotentialLevel::new).collect(),
    };
    let base = pv.depth;
    for e in alphabet_letters(kappa) {
        let w = pv.word_for(&e);
        let idx = tree.find(w).ok_or_else(|| Error::MissingBand(w.to_string()))?;
        if tree.depth() < base + depth {
            return Err(Error::MissingBand(format!(
                "descendants of {w} to order {} (tree depth {})",
                base + depth,
                tree.depth()
            )));
        }
        let mut stack: Vec<(usize, usize, Vec<u8>, f64)> = vec![(base, idx, vec![e.position() as u8], 0.0)];
        while let Some((n, i, pos, phi)) = stack.pop() {
            let band = &tree.level(n)[i];
            out.emit(&pos, band.ln_length(), phi);
            if pos.len() <= depth {
                for j in band.children.clone().rev() {
                    let letter = tree.level(n + 1)[j].word.last();
                    let phi_kid = phi + out.step(&pos, &letter);
                    let mut p2 = pos.clone();
                    p2.push(letter.position() as u8);
                    stack.push((n + 1, j, p2, phi_kid));
                }
            }
        }
    }
    Ok(out.finish(pv))
}

/// Samples of `s ↦ P_n(s)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PressureCurve {
    pub depth: usize,
    pub samples: Vec<(f64, f64)>,
}

pub fn pressure_curve(pt: &PotentialTable, n: usize, grid: &[f64]) -> Result<PressureCurve> {
    let samples = grid
        .iter()
        .map(|&s| pt.pressure(n, s).map(|v| (s, v)))
        .collect::<Result<_>>()?;
    Ok(PressureCurve { depth: n, samples })
}

fn unit_ctx() -> PrecisionContext {
    PrecisionContext {
        mantissa_bits: 53,
        abs_tol: 0.0,
        rel_tol: 1e-16,
    }
}

/// Root `t` of `ln Σ exp(a_i + t b_i) = 0` for decreasing `b_i < 0`, widening the bracket as needed.
pub(crate) fn moran_root(a: &[f64], b: &[f64], lo: f64, hi: f64) -> Result<f64> {
    let f = |t: &f64| log_sum_exp(a.iter().zip(b).map(|(x, y)| x + t * y));
    let (mut lo, mut hi) = (lo, hi);
    for _ in 0..200 {
        if f(&lo) > 0.0 {
            break;
        }
        lo -= (hi - lo).max(1.0);
    }
    for _ in 0..200 {
        if f(&hi) < 0.0 {
            break;
        }
        hi += (hi - lo).max(1.0);
    }
    bisect_root(f, lo, hi, &unit_ctx())
}

/// The `s_n ∈ [0, 1]` with `Σ exp(s ψ_n(u)) = 1`.
pub fn bowen_root(pt: &PotentialTable, n: usize, _ctx: &PrecisionContext) -> Result<f64> {
    if n < 2 {
        return Err(Error::DepthMismatch(format!("Moran root needs depth 2, asked for {n}")));
    }
    let level = pt.level(n)?;
    let at = |s: f64| log_sum_exp(level.psi.iter().map(|x| s * x)).exp();
    let (at_zero, at_one) = (at(0.0), at(1.0));
    if !(at_zero > 1.0 && at_one < 1.0) {
        return Err(Error::NoRootInUnitInterval { at_zero, at_one });
    }
    let zeros = vec![0.0; level.len()];
    moran_root(&zeros, &level.psi, 0.0, 1.0)
}

/// Finite-level Gibbs surrogate `exp(s ψ_n(u)) / Σ exp(s ψ_n)`.
pub fn gibbs_weights(pt: &PotentialTable, s: f64, n: usize) -> Result<Vec<f64>> {
    let level = pt.level(n)?;
    let z = log_sum_exp(level.psi.iter().map(|x| s * x));
    Ok(level.psi.iter().map(|x| (s * x - z).exp()).collect())
}

/// Extremes of `gibbs(prefix) / Σ gibbs(extensions)` between depths `n-1` and `n`.
pub fn gibbs_level_consistency(pt: &PotentialTable, s: f64, n: usize) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::DepthMismatch("consistency needs depth 1".into()));
    }
    let (short, long) = (pt.level(n - 1)?, pt.level(n)?);
    let (ws, wl) = (gibbs_weights(pt, s, n - 1)?, gibbs_weights(pt, s, n)?);
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    // extensions of word i form a contiguous run in the next level
    let mut j = 0;
    for i in 0..short.len() {
        let mut sum = 0.0;
        while j < long.len() && &long.positions(j)[..n] == short.positions(i) {
            sum += wl[j];
            j += 1;
        }
        let r = ws[i] / sum;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    Ok((lo, hi))
}

/// An exponent at one depth: the plain estimate, a two-point extrapolation
/// that cancels the `1/n` offset, and a Cauchy diagnostic.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub plain: f64,
    pub depth: usize,
    /// `|value_n - value_{n-1}|`.
    pub diagnostic: f64,
    /// `(depth, plain, extrapolated)` for every depth from 2.
    pub trend: Vec<(usize, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentEstimates {
    pub kappa: u32,
    #[serde(rename = "V")]
    pub coupling: f64,
    pub depth: usize,
    pub s_hat: Estimate,
    pub d_hat: Estimate,
    pub gamma_hat: Estimate,
}

/// Depth gaps of the differenced estimators. Level-to-level fluctuations of the
/// band lengths have period 2 (and the extremal cycles period 2 or 3), so these
/// gaps cancel them along with the constant offset of the prefix word.
pub const ROOT_GAP: usize = 2;
pub const MEAN_GAP: usize = 2;
pub const MIN_GAP: usize = 6;

fn partner(n: usize, gap: usize) -> usize {
    n.saturating_sub(gap)
}

/// Root of `Σ_n exp(s ψ_n) = Σ_m exp(s ψ_m)`: the Moran equation with the
/// prefix offset cancelled between depths `m < n`.
pub fn differenced_root(pt: &PotentialTable, n: usize, m: usize) -> Result<f64> {
    let (ln, lm) = (pt.level(n)?, pt.level(m)?);
    if m >= n {
        return Err(Error::DepthMismatch(format!("differenced root needs {m} < {n}")));
    }
    let f = |s: &f64| log_sum_exp(ln.psi.iter().map(|x| s * x)) - log_sum_exp(lm.psi.iter().map(|x| s * x));
    let (at_zero, at_one) = (f(&0.0), f(&1.0));
    if !(at_zero > 0.0 && at_one < 0.0) {
        return Err(Error::NoRootInUnitInterval {
            at_zero: at_zero.exp(),
            at_one: at_one.exp(),
        });
    }
    bisect_root(f, 0.0, 1.0, &unit_ctx())
}

fn assemble(depth: usize, plain: &[f64], extrapolated: &[f64]) -> Estimate {
    let trend: Vec<(usize, f64, f64)> = (2..=depth).map(|k| (k, plain[k], extrapolated[k])).collect();
    Estimate {
        value: extrapolated[depth],
        plain: plain[depth],
        depth,
        diagnostic: (extrapolated[depth] - extrapolated[depth - 1]).abs(),
        trend,
    }
}

/// Spectrum dimension, DOS dimension and optimal Hölder exponent at depth `n`.
/// `plain` fields are the finite-level quantities (Moran root, `ln α / (-ψ/n)`);
/// `value` fields difference two depths to remove the offset of the prefix word.
pub fn estimate_exponents(pt: &PotentialTable, coupling: Coupling, n: usize, ctx: &PrecisionContext) -> Result<ExponentEstimates> {
    if n < 3 {
        return Err(Error::DepthMismatch(format!("exponent estimates need depth 3, asked for {n}")));
    }
    pt.level(n)?;
    let ln_a = pt.alpha().ln();
    let (mut mean, mut min) = (vec![0.0; n + 1], vec![0.0; n + 1]);
    for k in 0..=n {
        let level = pt.level(k)?;
        mean[k] = level.markov_mean_psi();
        min[k] = level.min_psi();
    }
    let nan = || vec![f64::NAN; n + 1];
    let (mut s, mut s_ext, mut d, mut d_ext, mut g, mut g_ext) = (nan(), nan(), nan(), nan(), nan(), nan());
    for k in 2..=n {
        let kf = k as f64;
        s[k] = bowen_root(pt, k, ctx)?;
        s_ext[k] = differenced_root(pt, k, partner(k, ROOT_GAP))?;
        d[k] = ln_a / (-mean[k] / kf);
        let m = partner(k, MEAN_GAP);
        d_ext[k] = ln_a / (-(mean[k] - mean[m]) / (k - m) as f64);
        g[k] = ln_a / (-min[k] / kf);
        let m = partner(k, MIN_GAP);
        g_ext[k] = ln_a / (-(min[k] - min[m]) / (k - m) as f64);
    }
    Ok(ExponentEstimates {
        kappa: pt.kappa,
        coupling: coupling.value(),
        depth: n,
        s_hat: assemble(n, &s, &s_ext),
        d_hat: assemble(n, &d, &d_ext),
        gamma_hat: assemble(n, &g, &g_ext),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HolderReport {
    pub value: f64,
    /// `(depth, ln α / (-min ψ_k / k))` for depths 4..=n.
    pub trend: Vec<(usize, f64)>,
}

/// `ln α_κ / (-Ψ_min)` with `Ψ_min ≈ min_u ψ_n(u) / n`.
pub fn holder_exponent(pt: &PotentialTable, n: usize) -> Result<HolderReport> {
    if n < 4 {
        return Err(Error::DepthMismatch(format!("Hölder estimate needs depth 4, asked for {n}")));
    }
    let ln_a = pt.alpha().ln();
    let trend = (4..=n)
        .map(|k| Ok((k, ln_a / (-pt.level(k)?.min_psi() / k as f64))))
        .collect::<Result<Vec<_>>>()?;
    Ok(HolderReport {
        value: trend.last().unwrap().1,
        trend,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrefixDeviation {
    pub s_hat: f64,
    pub d_hat: f64,
    pub gamma_hat: f64,
}

impl PrefixDeviation {
    pub fn max(&self) -> f64 {
        self.s_hat.max(self.d_hat).max(self.gamma_hat)
    }
}

/// Exponents recomputed under two prefix vectors; absolute differences.
pub fn compare_prefix_vectors(
    engine: &mut BandEngine,
    pv1: &PrefixVector,
    pv2: &PrefixVector,
    depth: usize,
    q: &TransitionMatrix,
    p: &StationaryVector,
) -> Result<PrefixDeviation> {
    let ctx = *engine.ctx();
    let v = engine.coupling();
    let a = estimate_exponents(&stream_potentials(engine, pv1, q, p, depth)?, v, depth, &ctx)?;
    let b = if pv1 == pv2 {
        a.clone()
    } else {
        estimate_exponents(&stream_potentials(engine, pv2, q, p, depth)?, v, depth, &ctx)?
    };
    Ok(PrefixDeviation {
        s_hat: (a.s_hat.value - b.s_hat.value).abs(),
        d_hat: (a.d_hat.value - b.d_hat.value).abs(),
        gamma_hat: (a.gamma_hat.value - b.gamma_hat.value).abs(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    Increasing,
    Decreasing,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureComparisonRow {
    pub n: usize,
    /// `μ_Q([e_1 u^n]) / μ_Q([e_1 ũ^n])`.
    pub markov_ratio: f64,
    /// The same ratio under the Gibbs surrogate.
    pub gibbs_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureComparison {
    pub kappa: u32,
    pub exponent: f64,
    pub rows: Vec<MeasureComparisonRow>,
    pub expected: Option<Direction>,
    pub observed: Option<Direction>,
    /// The Markov ratio stays within a factor 4 of 1.
    pub markov_bounded: bool,
    /// Markov ratio bounded while the Gibbs ratio moves in the expected direction.
    pub measures_differ: bool,
}

/// The two competing comparison words: `(II,1)(I,1)` repeated `3n` times and
/// `(II,1)(III,1)(I,1)` repeated `2n` times, both after a leading `(I,1)`.
pub fn comparison_words(kappa: u32, n: usize) -> Result<(Word, Word)> {
    let e1 = Letter::new(crate::coding::BandType::I, 1, kappa)?.position();
    let ii = e1 + kappa as usize + 1;
    let iii = ii + 1;
    let mut u = vec![e1];
    let mut v = vec![e1];
    for _ in 0..3 * n {
        u.extend([ii, e1]);
    }
    for _ in 0..2 * n {
        v.extend([ii, iii, e1]);
    }
    Ok((Word::free_from_positions(&u, kappa)?, Word::free_from_positions(&v, kappa)?))
}

/// Markov versus Gibbs-surrogate ratios along the two comparison words,
/// located by single-branch descent below the prefix word of `(I,1)`.
#[allow(clippy::too_many_arguments)]
pub fn appendix_diagnostic(
    spec: &FrequencySpec,
    coupling: Coupling,
    pv: &PrefixVector,
    exponent: f64,
    q: &TransitionMatrix,
    p: &StationaryVector,
    n_max: usize,
    ctx: &PrecisionContext,
) -> Result<MeasureComparison> {
    let kappa = spec.kappa();
    if !coupling.in_estimator_range() {
        return Err(Error::Invalid(format!("measure comparison needs V > 20, got {}", coupling.value())));
    }
    let mut engine = BandEngine::new(spec, coupling, pv.depth + 6 * n_max, ctx, true)?;
    let e1 = Letter::new(crate::coding::BandType::I, 1, kappa)?;
    let base = pv.word_for(&e1);
    let mut rows = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let (u, v) = comparison_words(kappa, n)?;
        let lu = engine.descend(&base.splice(&u)?)?.pop().unwrap().ln_length();
        let lv = engine.descend(&base.splice(&v)?)?.pop().unwrap().ln_length();
        rows.push(MeasureComparisonRow {
            n,
            markov_ratio: (cylinder_weight(q, p, &u)? - cylinder_weight(q, p, &v)?).exp(),
            gibbs_ratio: (exponent * (lu - lv)).exp(),
        });
    }
    let expected = match kappa {
        1 => Some(Direction::Increasing),
        2 => None,
        _ => Some(Direction::Decreasing),
    };
    let rising = rows.windows(2).all(|w| w[1].gibbs_ratio > w[0].gibbs_ratio);
    let falling = rows.windows(2).all(|w| w[1].gibbs_ratio < w[0].gibbs_ratio);
    let observed = match (rising && rows.len() > 1, falling && rows.len() > 1) {
        (true, _) => Some(Direction::Increasing),
        (_, true) => Some(Direction::Decreasing),
        _ => None,
    };
    let markov_bounded = rows.iter().all(|r| (0.25..=4.0).contains(&r.markov_ratio));
    Ok(MeasureComparison {
        kappa,
        exponent,
        measures_differ: markov_bounded && expected.is_some() && observed == expected,
        rows,
        expected,
        observed,
        markov_bounded,
    })
}

/// Everything downstream of the band engine for one `(spec, V)`: potentials to
/// `depth` above the prefix vector, then the three exponents at `depth`.
pub struct PipelineRun {
    pub estimates: ExponentEstimates,
    pub potentials: PotentialTable,
    pub evaluations: u64,
    pub mantissa_bits: u32,
}

pub fn run_pipeline(
    spec: &FrequencySpec,
    coupling: Coupling,
    pv: &PrefixVector,
    depth: usize,
    ctx: &PrecisionContext,
) -> Result<PipelineRun> {
    let (q, p) = crate::dosmeasure::build_q(spec.kappa(), ctx)?;
    let mut engine = BandEngine::new(spec, coupling, pv.depth + depth, ctx, true)?;
    let potentials = stream_potentials(&mut engine, pv, &q, &p, depth)?;
    let estimates = estimate_exponents(&potentials, coupling, depth, ctx)?;
    Ok(PipelineRun {
        estimates,
        potentials,
        evaluations: engine.evaluations(),
        mantissa_bits: engine.prec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bands::build_band_tree;
    use crate::coding::{free_word_count, prefix_vectors, PrefixPolicy};
    use crate::dosmeasure::build_q;

    fn golden_setup(v: f64, depth: usize) -> (PotentialTable, BandTree) {
        let spec = FrequencySpec::golden();
        let ctx = PrecisionContext::double();
        let pv = prefix_vectors(&spec, PrefixPolicy::Canonical).unwrap().remove(0);
        let (q, p) = build_q(1, &ctx).unwrap();
        let tree = build_band_tree(&spec, Coupling::new(v).unwrap(), pv.depth + depth, &ctx).unwrap();
        (build_potentials(&tree, &pv, &q, &p, depth).unwrap(), tree)
    }

    #[test]
    fn streaming_matches_tree() {
        let spec = FrequencySpec::golden();
        let ctx = PrecisionContext::double();
        let v = Coupling::new(24.0).unwrap();
        let pv = prefix_vectors(&spec, PrefixPolicy::Canonical).unwrap().remove(0);
        let (q, p) = build_q(1, &ctx).unwrap();
        let (from_tree, _) = golden_setup(24.0, 5);
        let mut engine = BandEngine::new(&spec, v, pv.depth + 5, &ctx, true).unwrap();
        let streamed = stream_potentials(&mut engine, &pv, &q, &p, 5).unwrap();
        assert_eq!(streamed, from_tree);
        for n in 0..=5 {
            let level = streamed.level(n).unwrap();
            assert_eq!(level.len() as u128, free_word_count(1, n));
            let words: Vec<Word> = (0..level.len()).map(|i| level.word(i, 1)).collect();
            let distinct: std::collections::BTreeSet<&Word> = words.iter().collect();
            assert_eq!(distinct.len(), words.len());
            for (i, u) in words.iter().enumerate() {
                let lm = cylinder_weight(&q, &p, u).unwrap();
                assert!((level.log_markov(i) - lm).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn moran_root_dyadic() {
        let psi: Vec<f64> = vec![-8.0 * 2f64.ln(); 256];
        let s = moran_root(&vec![0.0; 256], &psi, 0.0, 1.0).unwrap();
        assert!((s - 1.0).abs() < 1e-14);
    }

    #[test]
    fn pressure_shape_and_bowen_root() {
        let (pt, _) = golden_setup(24.0, 8);
        for n in [4, 8] {
            let p0 = pt.pressure(n, 0.0).unwrap() * n as f64;
            assert!((p0 - (free_word_count(1, n) as f64).ln()).abs() < 1e-12);
            let grid: Vec<f64> = (0..=60).map(|k| -1.0 + 0.05 * k as f64).collect();
            let c = pressure_curve(&pt, n, &grid).unwrap();
            for w in c.samples.windows(3) {
                assert!(w[1].1 < w[0].1);
                assert!(w[0].1 - 2.0 * w[1].1 + w[2].1 >= -1e-9);
            }
            let s = bowen_root(&pt, n, &PrecisionContext::double()).unwrap();
            assert!(s > 0.0 && s < 1.0);
            assert!(pt.pressure(n, s).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn gibbs_surrogate() {
        let (pt, _) = golden_setup(24.0, 8);
        let s = bowen_root(&pt, 8, &PrecisionContext::double()).unwrap();
        let w = gibbs_weights(&pt, s, 8).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let (lo, hi) = gibbs_level_consistency(&pt, s, 8).unwrap();
        assert!(lo > 0.25 && hi < 4.0, "{lo} {hi}");
    }

    #[test]
    fn extensions_never_lengthen() {
        let (pt, _) = golden_setup(24.0, 5);
        for n in 1..=5 {
            let (short, long) = (pt.level(n - 1).unwrap(), pt.level(n).unwrap());
            let mut j = 0;
            for i in 0..short.len() {
                while j < long.len() && &long.positions(j)[..n] == short.positions(i) {
                    assert!(long.psi[j] <= short.psi[i] + 1e-12);
                    assert!(long.phi[j] <= short.phi[i] + 1e-15);
                    j += 1;
                }
            }
            assert_eq!(j, long.len());
        }
    }

    #[test]
    fn missing_branches_are_reported() {
        let spec = FrequencySpec::golden();
        let ctx = PrecisionContext::double();
        let pv = prefix_vectors(&spec, PrefixPolicy::Canonical).unwrap().remove(0);
        let (q, p) = build_q(1, &ctx).unwrap();
        let tree = build_band_tree(&spec, Coupling::new(24.0).unwrap(), pv.depth + 2, &ctx).unwrap();
        assert!(matches!(build_potentials(&tree, &pv, &q, &p, 3), Err(Error::MissingBand(_))));
    }

    #[test]
    fn comparison_words_have_equal_markov_weight() {
        for kappa in 1..=4 {
            let (q, p) = build_q(kappa, &PrecisionContext::double()).unwrap();
            for n in 1..=3 {
                let (u, v) = comparison_words(kappa, n).unwrap();
                assert_eq!(u.len(), v.len());
                let r = cylinder_weight(&q, &p, &u).unwrap() - cylinder_weight(&q, &p, &v).unwrap();
                assert!(r.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn exponents_ordered_on_small_tree() {
        let (pt, _) = golden_setup(24.0, 8);
        let v = Coupling::new(24.0).unwrap();
        let e = estimate_exponents(&pt, v, 8, &PrecisionContext::double()).unwrap();
        for x in [&e.s_hat, &e.d_hat, &e.gamma_hat] {
            assert!(x.value > 0.0 && x.value < 1.0 && x.plain > 0.0 && x.plain < 1.0);
        }
        assert!(e.gamma_hat.plain < e.d_hat.plain && e.d_hat.plain < e.s_hat.plain);
        let h = holder_exponent(&pt, 8).unwrap();
        assert_eq!(h.value, e.gamma_hat.plain);
    }
}
