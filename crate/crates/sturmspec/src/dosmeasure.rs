//! The density of states as a Markov measure on band words, and the
//! periodic-approximant eigenvalues it is anchored to.

use nalgebra::{DMatrix, DVector};

use crate::bands::{BandTree, Coupling, FrequencySpec};
use crate::coding::{
    admissible, alphabet_letters, incidence_matrix, rooted_counts_by_type, BandType, Letter, Origin, Word,
};
use crate::error::{Error, Result};
use crate::numkernel::{primitivity_exponent, PrecisionContext};
use crate::thermo::PotentialTable;

/// `α_κ = (κ + sqrt(κ² + 4)) / 2`.
pub fn tail_alpha(kappa: u32) -> f64 {
    let k = kappa as f64;
    (k + (k * k + 4.0).sqrt()) / 2.0
}

/// `(C_I, C_II, C_III)` for tail constant `α`.
pub fn type_constants(alpha: f64) -> [f64; 3] {
    let d = 1.0 + alpha * alpha;
    [alpha / d, alpha * alpha / d, alpha * (alpha - 1.0) / d]
}

/// Transition matrix of the density of states on the tail alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub kappa: u32,
    pub alpha: f64,
    /// Rows and columns in the letter order `e_1 < ... < e_{2κ+2}`.
    pub q: Vec<Vec<f64>>,
    pub type_constants: [f64; 3],
}

impl TransitionMatrix {
    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn constant(&self, t: BandType) -> f64 {
        self.type_constants[t.slot()]
    }

    pub fn entry(&self, from: &Letter, to: &Letter) -> f64 {
        self.q[from.position() - 1][to.position() - 1]
    }

    /// Smallest `k <= max_power` with `Q^k > 0`.
    pub fn primitivity(&self, max_power: usize) -> Option<usize> {
        primitivity_exponent(&self.q, max_power)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryVector(pub Vec<f64>);

impl StationaryVector {
    pub fn of(&self, letter: &Letter) -> f64 {
        self.0[letter.position() - 1]
    }
}

const CHECK_TOL: f64 = 1e-12;

/// `Q` from the type constants, its stationary vector by a direct linear solve,
/// with stochasticity, stationarity and the closed form for `p_{(II,1)}` verified.
pub fn build_q(kappa: u32, _ctx: &PrecisionContext) -> Result<(TransitionMatrix, StationaryVector)> {
    if kappa == 0 {
        return Err(Error::Invalid("tail constant must be positive".into()));
    }
    let alpha = tail_alpha(kappa);
    let c = type_constants(alpha);
    let letters = alphabet_letters(kappa);
    let d = letters.len();
    let mut q = vec![vec![0.0; d]; d];
    for (i, a) in letters.iter().enumerate() {
        for (j, b) in letters.iter().enumerate() {
            if admissible(a, b) {
                q[i][j] = c[b.band_type.slot()] / c[a.band_type.slot()] / alpha;
            }
        }
    }
    for (i, row) in q.iter().enumerate() {
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > CHECK_TOL {
            return Err(Error::Invalid(format!("row {} of Q sums to {s}", i + 1)));
        }
    }
    // p (Q - I) = 0 with the last equation replaced by sum(p) = 1.
    let mut m = DMatrix::<f64>::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            m[(j, i)] = q[i][j] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for i in 0..d {
        m[(d - 1, i)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(d);
    rhs[d - 1] = 1.0;
    let sol = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Invalid("stationary system is singular".into()))?;
    let p: Vec<f64> = sol.iter().copied().collect();
    for j in 0..d {
        let pq: f64 = (0..d).map(|i| p[i] * q[i][j]).sum();
        if (pq - p[j]).abs() > CHECK_TOL || p[j] <= 0.0 {
            return Err(Error::Invalid(format!("stationary entry {} failed: {} vs {}", j + 1, pq, p[j])));
        }
    }
    let closed = alpha / (kappa as f64 * alpha + 2.0);
    if (p[kappa as usize + 1] - closed).abs() > CHECK_TOL {
        return Err(Error::Invalid(format!(
            "p of (II,1) is {} but the closed form gives {closed}",
            p[kappa as usize + 1]
        )));
    }
    Ok((
        TransitionMatrix {
            kappa,
            alpha,
            q,
            type_constants: c,
        },
        StationaryVector(p),
    ))
}

/// `ln μ_Q([u]) = ln p_{u_0} + Σ ln q_{u_i u_{i+1}}` for a free word.
pub fn cylinder_weight(q: &TransitionMatrix, p: &StationaryVector, u: &Word) -> Result<f64> {
    if u.origin() != Origin::Free || u.first().alphabet != q.kappa {
        return Err(Error::InadmissibleWord(format!("{u} is not a word over the tail alphabet")));
    }
    let mut w = p.of(&u.first()).ln();
    for pair in u.letters().windows(2) {
        let t = q.entry(&pair[0], &pair[1]);
        if t <= 0.0 {
            return Err(Error::InadmissibleWord(format!("{} -> {} has no transition", pair[0], pair[1])));
        }
        w += t.ln();
    }
    Ok(w)
}

/// `ln C_α`, fixed so that the weights of each level beyond the prefix sum to one.
pub fn log_normalization(spec: &FrequencySpec) -> f64 {
    let alpha = tail_alpha(spec.kappa());
    let c = type_constants(alpha);
    let n = spec.n_hat() + 1;
    let counts = rooted_counts_by_type(spec, n);
    let total: f64 = counts.iter().zip(c.iter()).map(|(&k, &ct)| k as f64 * ct).sum();
    n as f64 * alpha.ln() - total.ln()
}

/// `ln(C_α C_{t_w} α_κ^{-n})` for a rooted word of order `n` beyond the prefix.
pub fn dos_log_weight(spec: &FrequencySpec, w: &Word) -> Result<f64> {
    let n = w.order();
    if n <= spec.n_hat() {
        return Err(Error::OrderTooSmall {
            order: n,
            prefix_len: spec.n_hat(),
        });
    }
    let alpha = tail_alpha(spec.kappa());
    let c = type_constants(alpha)[w.band_type().slot()];
    Ok(log_normalization(spec) + c.ln() - n as f64 * alpha.ln())
}

/// Density-of-states weight of the band `B_w`, which must be present in the tree.
pub fn dos_of_band(tree: &BandTree, w: &Word) -> Result<f64> {
    tree.get(w)
        .ok_or_else(|| Error::MissingBand(w.to_string()))?;
    Ok(dos_log_weight(&tree.spec, w)?.exp())
}

/// Weights of every band in the tree; levels inside the prefix are sums of
/// their descendants at the first level beyond it.
pub fn dos_weights(tree: &BandTree) -> Result<Vec<Vec<f64>>> {
    let first = tree.spec.n_hat() + 1;
    if tree.depth() < first {
        return Err(Error::OrderTooSmall {
            order: tree.depth(),
            prefix_len: tree.spec.n_hat(),
        });
    }
    let mut out: Vec<Vec<f64>> = tree
        .levels
        .iter()
        .enumerate()
        .map(|(n, level)| {
            if n >= first {
                level
                    .iter()
                    .map(|b| dos_log_weight(&tree.spec, &b.word).map(f64::exp))
                    .collect::<Result<Vec<_>>>()
            } else {
                Ok(vec![0.0; level.len()])
            }
        })
        .collect::<Result<_>>()?;
    for n in (0..first).rev() {
        for i in 0..tree.level(n).len() {
            let r = tree.level(n)[i].children.clone();
            out[n][i] = r.map(|j| out[n + 1][j]).sum();
        }
    }
    Ok(out)
}

/// Default bound on the approximant size.
pub const PERIODIC_CAP: usize = 1000;

/// Eigenvalues, ascending, of the operator restricted to `[1, q_k]` with
/// periodic boundary conditions.
pub fn periodic_eigenvalues(spec: &FrequencySpec, coupling: Coupling, k: usize, cap: usize) -> Result<Vec<f64>> {
    let q = spec.q(k as i64)?;
    if q > cap as i128 {
        return Err(Error::CapExceeded { size: q as u128, cap: cap as u128 });
    }
    let q = q as usize;
    let v = spec.potential_indicator(q)?;
    let mut h = DMatrix::<f64>::zeros(q, q);
    for i in 0..q {
        h[(i, i)] += coupling.value() * v[i] as f64;
        let j = (i + 1) % q;
        h[(i, j)] += 1.0;
        h[(j, i)] += 1.0;
    }
    let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).expect("eigenvalues are finite"));
    Ok(ev)
}

/// Padding for band membership of approximant eigenvalues: a generous multiple
/// of the symmetric solver's backward error, `ε‖H‖` with `‖H‖ <= 2 + V`.
/// Fixed paddings fail once gaps between bands shrink below them, which for
/// κ = 2 happens near 1e-11 at order 8.
pub fn eigen_tolerance(coupling: Coupling) -> f64 {
    64.0 * f64::EPSILON * (2.0 + coupling.value())
}

/// Outcome of matching eigenvalues against the type II/III bands of one order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EigenMatch {
    pub bands: usize,
    pub eigenvalues: usize,
    pub misses: usize,
    pub doubles: usize,
    pub strays: usize,
}

/// Counts eigenvalues per band of `{|tr M_k| <= 2}` (the type II and III bands of
/// order `k`), tolerating `tol` beyond the outer brackets.
pub fn match_eigenvalues(tree: &BandTree, k: usize, eigenvalues: &[f64], tol: f64) -> EigenMatch {
    let bands: Vec<(f64, f64)> = tree
        .level(k)
        .iter()
        .filter(|b| b.band_type() != BandType::I)
        .map(|b| (b.lo.outer.to_f64() - tol, b.hi.outer.to_f64() + tol))
        .collect();
    let mut hits = vec![0usize; bands.len()];
    let mut strays = 0;
    for &e in eigenvalues {
        let mut found = false;
        for (i, &(lo, hi)) in bands.iter().enumerate() {
            if lo <= e && e <= hi {
                hits[i] += 1;
                found = true;
            }
        }
        if !found {
            strays += 1;
        }
    }
    EigenMatch {
        bands: bands.len(),
        eigenvalues: eigenvalues.len(),
        misses: hits.iter().filter(|&&h| h == 0).count(),
        doubles: hits.iter().filter(|&&h| h > 1).count(),
        strays,
    }
}

/// Constants of `q_l = c α^l + d (-α)^{-l}` fitted from `l = nhat+1, nhat+2`.
pub fn denominator_law(spec: &FrequencySpec) -> Result<(f64, f64)> {
    let alpha = tail_alpha(spec.kappa());
    let l1 = spec.n_hat() as i64 + 1;
    let (q1, q2) = (spec.q(l1)? as f64, spec.q(l1 + 1)? as f64);
    // [α^l1, (-α)^-l1; α^l2, (-α)^-l2] (c, d) = (q1, q2)
    let (a11, a12) = (alpha.powi(l1 as i32), (-alpha).powi(-(l1 as i32)));
    let (a21, a22) = (alpha.powi(l1 as i32 + 1), (-alpha).powi(-(l1 as i32) - 1));
    let det = a11 * a22 - a12 * a21;
    Ok(((q1 * a22 - q2 * a12) / det, (a11 * q2 - a21 * q1) / det))
}

/// Log-weights `ln μ_Q([u])` aligned with the words of one potential level.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovWeights {
    pub depth: usize,
    pub log_weights: Vec<f64>,
}

impl MarkovWeights {
    pub fn from_potentials(pt: &PotentialTable, depth: usize) -> Result<Self> {
        let level = pt.level(depth)?;
        Ok(Self {
            depth,
            log_weights: (0..level.len()).map(|i| level.log_markov(i)).collect(),
        })
    }

    /// Equal weights on every word, for comparison.
    pub fn uniform(depth: usize, count: usize) -> Self {
        Self {
            depth,
            log_weights: vec![-(count as f64).ln(); count],
        }
    }
}

/// `ln α_κ / (-L_n)` with `L_n = (1/n) Σ_u μ_Q([u]) ψ_n(u)`, and `|L_n - L_{n-1}|`.
pub fn dos_dimension_estimate(weights: &MarkovWeights, pt: &PotentialTable, n: usize) -> Result<(f64, f64)> {
    if weights.depth != n || n == 0 {
        return Err(Error::DepthMismatch(format!(
            "weights at depth {} used for depth {n}",
            weights.depth
        )));
    }
    let level = pt.level(n)?;
    if level.len() != weights.log_weights.len() {
        return Err(Error::DepthMismatch(format!(
            "{} weights for {} words",
            weights.log_weights.len(),
            level.len()
        )));
    }
    let l_n = mean_log_length(&weights.log_weights, &level.psi) / n as f64;
    let diagnostic = if n >= 2 {
        let prev = MarkovWeights::from_potentials(pt, n - 1)?;
        let l_prev = mean_log_length(&prev.log_weights, &pt.level(n - 1)?.psi) / (n - 1) as f64;
        (l_n - l_prev).abs()
    } else {
        f64::INFINITY
    };
    Ok((tail_alpha(pt.kappa).ln() / -l_n, diagnostic))
}

/// `Σ exp(w_i) ψ_i` in a fixed summation order.
pub fn mean_log_length(log_weights: &[f64], psi: &[f64]) -> f64 {
    crate::thermo::pairwise_sum(&log_weights.iter().zip(psi).map(|(w, s)| w.exp() * s).collect::<Vec<_>>())
}

/// Tail letter of the free word at the selected position; kept for CSV export.
pub fn letter_type(kappa: u32, position: usize) -> Result<BandType> {
    Ok(Letter::from_position(kappa, position)?.band_type)
}

/// Zero pattern of `Q` equals the tail incidence matrix.
pub fn support_matches_incidence(q: &TransitionMatrix) -> bool {
    let a = incidence_matrix(q.kappa, q.kappa);
    a.entries
        .iter()
        .zip(&q.q)
        .all(|(ra, rq)| ra.iter().zip(rq).all(|(&x, &y)| (x == 1) == (y > 0.0)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencySample {
    pub steps: usize,
    pub frequency: Vec<f64>,
    /// Batch-means standard error per letter.
    pub std_error: Vec<f64>,
}

const BATCHES: usize = 100;

/// Runs the chain for `steps` transitions from a `p`-distributed start and
/// records the empirical letter frequencies.
pub fn sample_letter_frequencies(
    q: &TransitionMatrix,
    p: &StationaryVector,
    steps: usize,
    seed: u64,
) -> Result<FrequencySample> {
    use rand::distributions::{Distribution, WeightedIndex};
    use rand::SeedableRng;
    if steps < BATCHES {
        return Err(Error::Invalid(format!("need at least {BATCHES} steps, got {steps}")));
    }
    let bad = |e: rand::distributions::WeightedError| Error::Invalid(format!("transition row: {e}"));
    let rows: Vec<WeightedIndex<f64>> = q.q.iter().map(|r| WeightedIndex::new(r).map_err(bad)).collect::<Result<_>>()?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut state = WeightedIndex::new(&p.0).map_err(bad)?.sample(&mut rng);
    let n = q.dim();
    let per = steps / BATCHES;
    let mut batch = vec![vec![0usize; n]; BATCHES];
    for b in batch.iter_mut() {
        for _ in 0..per {
            state = rows[state].sample(&mut rng);
            b[state] += 1;
        }
    }
    let total = (per * BATCHES) as f64;
    let mut frequency = vec![0.0; n];
    let mut std_error = vec![0.0; n];
    for j in 0..n {
        let means: Vec<f64> = batch.iter().map(|b| b[j] as f64 / per as f64).collect();
        let m = batch.iter().map(|b| b[j]).sum::<usize>() as f64 / total;
        let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (BATCHES - 1) as f64;
        frequency[j] = m;
        std_error[j] = (var / BATCHES as f64).sqrt();
    }
    Ok(FrequencySample { steps: per * BATCHES, frequency, std_error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bands::build_band_tree;

    fn ctx() -> PrecisionContext {
        PrecisionContext::double()
    }

    #[test]
    fn sampled_frequencies_match_stationary_vector() {
        for kappa in [1, 3] {
            let (q, p) = build_q(kappa, &ctx()).unwrap();
            let s = sample_letter_frequencies(&q, &p, 100_000, 7).unwrap();
            let j = kappa as usize + 1;
            let z = (s.frequency[j] - p.0[j]).abs() / s.std_error[j];
            assert!(z < 3.0, "κ={kappa}: z = {z}");
        }
    }

    #[test]
    fn golden_rows_and_stationary_vector() {
        let (q, p) = build_q(1, &ctx()).unwrap();
        let a = tail_alpha(1);
        let row3 = [1.0 / (a * a), 1.0 / (a * a), 0.0, (a - 1.0) / (a * a)];
        for (x, y) in q.q[2].iter().zip(row3) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!((q.q[2][0] - 0.381966).abs() < 1e-6 && (q.q[2][3] - 0.236068).abs() < 1e-6);
        assert_eq!(q.q[3].iter().map(|x| (x * 1e12).round() / 1e12).collect::<Vec<_>>(), vec![1.0, 0.0, 0.0, 0.0]);
        let want = [0.276393, 0.170820, 0.447214, 0.105573];
        for (x, y) in p.0.iter().zip(want) {
            assert!((x - y).abs() < 1e-6);
        }
        assert!((p.0[2] - 1.0 / 5f64.sqrt()).abs() < 1e-14);
        assert!(support_matches_incidence(&q));
    }

    #[test]
    fn rows_follow_three_case_display() {
        for kappa in 1..=8u32 {
            let (q, _) = build_q(kappa, &ctx()).unwrap();
            let a = q.alpha;
            let k = kappa as usize;
            for i in 0..=k {
                for j in 0..2 * k + 2 {
                    let want = if j == k + 1 { 1.0 } else { 0.0 };
                    assert!((q.q[i][j] - want).abs() < 1e-14);
                }
            }
            for j in 0..2 * k + 2 {
                let want = if j <= k {
                    1.0 / (a * a)
                } else if j == k + 1 {
                    0.0
                } else {
                    (a - 1.0) / (a * a)
                };
                assert!((q.q[k + 1][j] - want).abs() < 1e-14);
            }
            for i in k + 2..2 * k + 2 {
                for j in 0..2 * k + 2 {
                    let want = if j < k {
                        1.0 / (a * (a - 1.0))
                    } else if j <= k + 1 || j == 2 * k + 1 {
                        0.0
                    } else {
                        1.0 / a
                    };
                    assert!((q.q[i][j] - want).abs() < 1e-14, "kappa {kappa} ({i},{j})");
                }
            }
            assert!(q.primitivity(10).is_some());
        }
    }

    #[test]
    fn single_letter_weight() {
        let (q, p) = build_q(2, &ctx()).unwrap();
        let u = Word::free_from_positions(&[4], 2).unwrap();
        let a = tail_alpha(2);
        assert!((cylinder_weight(&q, &p, &u).unwrap() - (a / (2.0 * a + 2.0)).ln()).abs() < 1e-14);
        let bad = Word::parse_rooted("I", &FrequencySpec::golden()).unwrap();
        assert!(cylinder_weight(&q, &p, &bad).is_err());
    }

    #[test]
    fn cylinder_weights_sum_to_one() {
        for kappa in 1..=3u32 {
            let (q, p) = build_q(kappa, &ctx()).unwrap();
            for n in 0..=6 {
                let spec = FrequencySpec::constant_type(kappa).unwrap();
                let total: f64 = crate::coding::enumerate_words(&spec, n, false)
                    .map(|u| cylinder_weight(&q, &p, &u).unwrap().exp())
                    .sum();
                assert!((total - 1.0).abs() < 1e-12, "kappa {kappa} n {n}: {total}");
            }
        }
    }

    #[test]
    fn tree_weights_are_markov() {
        let spec = FrequencySpec::new(vec![0, 2, 1], 1).unwrap();
        let v = Coupling::new(24.0).unwrap();
        let t = build_band_tree(&spec, v, 6, &ctx()).unwrap();
        let w = dos_weights(&t).unwrap();
        let (q, _) = build_q(1, &ctx()).unwrap();
        for (n, level) in w.iter().enumerate() {
            assert!((level.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            if n + 1 < w.len() {
                for (i, b) in t.level(n).iter().enumerate() {
                    let kids: f64 = b.children.clone().map(|j| w[n + 1][j]).sum();
                    assert!((kids - w[n][i]).abs() < 1e-12);
                    if n > spec.n_hat() {
                        for j in b.children.clone() {
                            let child = &t.level(n + 1)[j];
                            let ratio = w[n + 1][j] / w[n][i];
                            assert!((ratio - q.entry(&b.word.last(), &child.word.last())).abs() < 1e-12);
                        }
                    }
                }
            }
        }
        let shallow = Word::parse_rooted("I", &spec).unwrap();
        assert!(matches!(dos_of_band(&t, &shallow), Err(Error::OrderTooSmall { .. })));
    }

    #[test]
    fn small_approximants() {
        let spec = FrequencySpec::golden();
        let v = Coupling::new(24.0).unwrap();
        assert_eq!(periodic_eigenvalues(&spec, v, 0, 10).unwrap(), vec![26.0]);
        let e1 = periodic_eigenvalues(&spec, v, 2, 10).unwrap();
        assert_eq!(e1.len(), 2);
        assert!(matches!(periodic_eigenvalues(&spec, v, 20, 1000), Err(Error::CapExceeded { .. })));
    }

    #[test]
    fn denominators_follow_two_term_law() {
        for spec in [
            FrequencySpec::golden(),
            FrequencySpec::new(vec![0, 3, 1, 2], 2).unwrap(),
        ] {
            let (c, d) = denominator_law(&spec).unwrap();
            let a = tail_alpha(spec.kappa());
            for l in spec.n_hat() + 1..=spec.n_hat() + 12 {
                let fit = c * a.powi(l as i32) + d * (-a).powi(-(l as i32));
                assert_eq!(fit.round() as i128, spec.q(l as i64).unwrap(), "{spec} l={l}");
            }
        }
    }
}
