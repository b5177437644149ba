//! Trace polynomials and the tree of spectral generating bands.

mod chebyshev;
mod frequency;
mod io;
mod locate;
mod profile;
mod trace;

use std::ops::Range;

use rug::Float;

pub use chebyshev::chebyshev_interval;
pub use frequency::{Coupling, FrequencySpec};
pub use io::{tree_cache_key, TreeDocument, TREE_FORMAT_VERSION};
pub use locate::{expected_children, ChildSpan, Endpoint, Locator, LocatorStats};
pub use profile::{estimate_bounds_profile, gaps, BoundsProfile, Gap, GapReport, SandwichReport};
pub use trace::{direct_transfer_matrix, eval_trace, seed_matrices, transfer_matrices, TraceEvaluator, TraceState};

use crate::coding::{BandType, Letter, Word};
use crate::error::{Error, Result};
use crate::numkernel::PrecisionContext;

/// A band with its coding word and bracketed endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub word: Word,
    pub lo: Endpoint,
    pub hi: Endpoint,
}

impl Node {
    pub fn order(&self) -> usize {
        self.word.order()
    }

    pub fn band_type(&self) -> BandType {
        self.word.band_type()
    }

    /// `(m, p)` with generating polynomial `tr(M_{m-1} M_m^p)`.
    pub fn trace_index(&self) -> (usize, i64) {
        match self.band_type() {
            BandType::I => (self.order(), 1),
            _ => (self.order() + 1, 0),
        }
    }

    /// Length between endpoint midpoints.
    pub fn length(&self) -> Float {
        let hi = self.hi.mid();
        Float::with_val(hi.prec(), &hi - &self.lo.mid())
    }

    pub fn ln_length(&self) -> f64 {
        self.length().ln().to_f64()
    }

    pub fn lo_f64(&self) -> f64 {
        self.lo.mid().to_f64()
    }

    pub fn hi_f64(&self) -> f64 {
        self.hi.mid().to_f64()
    }
}

/// Working precision needed to resolve bands down to `max_order` with endpoints
/// at relative accuracy `rel_tol`.
pub fn required_bits(spec: &FrequencySpec, coupling: Coupling, max_order: usize, rel_tol: f64) -> u32 {
    let v = coupling.value();
    let t2 = (2.0 * (v + 5.0)).log2();
    let mut bits = 24.0 + (v + 2.0).log2() + (1.0 / rel_tol).log2().max(0.0);
    for k in 1..=max_order {
        let a = spec.digit(k) as f64;
        let per_level = (t2 + 3.0 * a.log2()).max((a - 1.0) * t2);
        bits += per_level + 2.0;
    }
    let bits = bits.ceil() as u32;
    bits.div_ceil(32) * 32
}

/// Child-finding machinery shared by tree building, single-branch descent and
/// streaming walks.
pub struct BandEngine {
    spec: FrequencySpec,
    coupling: Coupling,
    locator: Locator,
    max_order: usize,
    ctx: PrecisionContext,
}

impl BandEngine {
    /// Engine able to locate bands up to order `max_order`. With `auto_precision`
    /// the working precision is raised to [`required_bits`] when `ctx` is coarser.
    pub fn new(
        spec: &FrequencySpec,
        coupling: Coupling,
        max_order: usize,
        ctx: &PrecisionContext,
        auto_precision: bool,
    ) -> Result<Self> {
        let bits = if auto_precision {
            ctx.mantissa_bits
                .max(required_bits(spec, coupling, max_order, ctx.rel_tol))
        } else {
            if !ctx.is_extended() && coupling.value() > 50.0 && max_order > 14 {
                return Err(Error::Invalid(format!(
                    "depth {max_order} at V = {} needs extended precision",
                    coupling.value()
                )));
            }
            ctx.mantissa_bits
        };
        let ev = TraceEvaluator::new(spec, coupling, max_order + 1, bits);
        Ok(Self {
            spec: spec.clone(),
            coupling,
            locator: Locator::new(ev, *ctx),
            max_order,
            ctx: *ctx,
        })
    }

    pub fn spec(&self) -> &FrequencySpec {
        &self.spec
    }

    pub fn coupling(&self) -> Coupling {
        self.coupling
    }

    pub fn prec(&self) -> u32 {
        self.locator.prec()
    }

    pub fn ctx(&self) -> &PrecisionContext {
        &self.ctx
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn evaluations(&self) -> u64 {
        self.locator.evaluations()
    }

    pub fn stats(&self) -> LocatorStats {
        self.locator.stats()
    }

    /// The two bands of order 0: `[V-2, V+2]` of type I and `[-2, 2]` of type III.
    pub fn roots(&self) -> Result<[Node; 2]> {
        let prec = self.prec();
        let v = self.coupling.value();
        let f = |x: f64| Endpoint::exact(Float::with_val(prec, x));
        Ok([
            Node {
                word: Word::rooted(vec![Letter::root(BandType::I)?], &self.spec)?,
                lo: f(v - 2.0),
                hi: f(v + 2.0),
            },
            Node {
                word: Word::rooted(vec![Letter::root(BandType::III)?], &self.spec)?,
                lo: f(-2.0),
                hi: f(2.0),
            },
        ])
    }

    /// Root band whose word starts with `letter`.
    pub fn root(&self, letter: &Letter) -> Result<Node> {
        let [a, b] = self.roots()?;
        if a.word.first() == *letter {
            Ok(a)
        } else if b.word.first() == *letter {
            Ok(b)
        } else {
            Err(Error::InadmissibleWord(format!("{letter} is not an order-0 letter")))
        }
    }

    /// Children of `node`, in increasing position.
    pub fn children(&mut self, node: &Node) -> Result<Vec<Node>> {
        let n = node.order();
        if n >= self.max_order {
            return Err(Error::Invalid(format!(
                "order {} exceeds the engine range {}",
                n + 1,
                self.max_order
            )));
        }
        let a = self.spec.digit(n + 1);
        let word = &node.word;
        let spans = self.locator.children(
            node.band_type(),
            n,
            a,
            &node.lo,
            &node.hi,
            &|| word.to_string(),
        )?;
        let (nz, nx) = expected_children(node.band_type(), a);
        let mut counts = [0u32; 3];
        let mut out = Vec::with_capacity(spans.len());
        for span in spans {
            let slot = span.band_type.slot();
            counts[slot] += 1;
            let letter = Letter::new(span.band_type, counts[slot], a)?;
            out.push(Node {
                word: node.word.child(letter)?,
                lo: span.lo,
                hi: span.hi,
            });
        }
        let found_z = counts[0] as usize;
        let found_x = (counts[1] + counts[2]) as usize;
        if found_z != nz || found_x != nx {
            return Err(Error::ChildCountMismatch {
                word: node.word.to_string(),
                expected: nz + nx,
                found: found_z + found_x,
            });
        }
        check_children(node, &out)?;
        Ok(out)
    }

    /// Follows `word` from its root letter, locating every intermediate band.
    pub fn descend(&mut self, word: &Word) -> Result<Vec<Node>> {
        let mut path = vec![self.root(&word.first())?];
        for letter in &word.letters()[1..] {
            let kids = self.children(path.last().unwrap())?;
            let next = kids
                .into_iter()
                .find(|c| c.word.last() == *letter)
                .ok_or_else(|| Error::MissingBand(format!("no child {letter} on the path of {word}")))?;
            path.push(next);
        }
        Ok(path)
    }

    /// Value of the generating polynomial of a band of `band_type` and `order` at `x`.
    pub fn generating_value(&mut self, band_type: BandType, order: usize, x: &Float) -> Float {
        let ev = self.locator.evaluator_mut();
        ev.run(x, order);
        match band_type {
            BandType::I => ev.z_cur().clone(),
            _ => ev.x_cur().clone(),
        }
    }
}

/// Children sorted, pairwise separated and strictly inside the parent (except
/// the coincident type-II child of a type-I band).
fn check_children(parent: &Node, kids: &[Node]) -> Result<()> {
    let fail = |detail: String| Error::BoundViolation {
        word: parent.word.to_string(),
        detail,
    };
    for k in kids {
        if k.lo.inner >= k.hi.inner {
            return Err(fail(format!("child {} has empty inner hull", k.word)));
        }
        let coincident = k.lo == parent.lo && k.hi == parent.hi;
        if !coincident && (k.lo.outer <= parent.lo.outer || k.hi.outer >= parent.hi.outer) {
            return Err(fail(format!("child {} is not strictly inside", k.word)));
        }
    }
    for w in kids.windows(2) {
        if w[0].hi.outer >= w[1].lo.outer {
            return Err(fail(format!("children {} and {} overlap", w[0].word, w[1].word)));
        }
    }
    Ok(())
}

/// Band stored in a [`BandTree`] level.
#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    pub node: Node,
    pub parent: Option<usize>,
    pub children: Range<usize>,
}

impl std::ops::Deref for Band {
    type Target = Node;
    fn deref(&self) -> &Node {
        &self.node
    }
}

/// All bands of orders `0..=depth`; each level lists its bands in word order,
/// so siblings appear in increasing position.
#[derive(Debug, Clone, PartialEq)]
pub struct BandTree {
    pub spec: FrequencySpec,
    pub coupling: Coupling,
    pub mantissa_bits: u32,
    pub rel_tol: f64,
    pub levels: Vec<Vec<Band>>,
}

impl BandTree {
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, n: usize) -> &[Band] {
        &self.levels[n]
    }

    pub fn children_of(&self, n: usize, i: usize) -> &[Band] {
        let b = &self.levels[n][i];
        match self.levels.get(n + 1) {
            Some(next) => &next[b.children.clone()],
            None => &[],
        }
    }

    pub fn band_count(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    /// Index of the band with `word` at its level.
    pub fn find(&self, word: &Word) -> Option<usize> {
        let letters = word.letters();
        let mut idx = self.levels[0].iter().position(|b| b.word.first() == letters[0])?;
        for (n, letter) in letters.iter().enumerate().skip(1) {
            if n > self.depth() {
                return None;
            }
            let range = self.levels[n - 1][idx].children.clone();
            idx = range.clone().find(|&j| self.levels[n][j].word.last() == *letter)?;
        }
        Some(idx)
    }

    pub fn get(&self, word: &Word) -> Option<&Band> {
        self.find(word).map(|i| &self.levels[word.order()][i])
    }

    /// Copy restricted to levels `0..=depth`.
    pub fn truncated(&self, depth: usize) -> Self {
        let mut t = self.clone();
        t.levels.truncate(depth + 1);
        if let Some(last) = t.levels.last_mut() {
            for b in last.iter_mut() {
                b.children = 0..0;
            }
        }
        t
    }

    /// Rebuilds parent/child links from the words, which must be ordered by
    /// position within each level.
    pub(crate) fn link(levels: Vec<Vec<Node>>) -> Result<Vec<Vec<Band>>> {
        let mut out: Vec<Vec<Band>> = Vec::with_capacity(levels.len());
        for (n, level) in levels.into_iter().enumerate() {
            let mut bands: Vec<Band> = level
                .into_iter()
                .map(|node| Band {
                    node,
                    parent: None,
                    children: 0..0,
                })
                .collect();
            if n > 0 {
                let parents = &mut out[n - 1];
                let mut p = 0usize;
                for (i, b) in bands.iter_mut().enumerate() {
                    let want = b.word.prefix(n);
                    while p < parents.len() && parents[p].word != want {
                        p += 1;
                    }
                    if p == parents.len() {
                        return Err(Error::MissingBand(format!("parent of {} at level {n}", b.word)));
                    }
                    b.parent = Some(p);
                    let r = &mut parents[p].children;
                    if r.start == r.end {
                        *r = i..i + 1;
                    } else if r.end == i {
                        r.end = i + 1;
                    } else {
                        return Err(Error::Invalid(format!("children of {} are not contiguous", want)));
                    }
                }
            }
            out.push(bands);
        }
        Ok(out)
    }
}

/// Band tree to `depth` with endpoints at relative accuracy `ctx.rel_tol`.
pub fn build_band_tree(
    spec: &FrequencySpec,
    coupling: Coupling,
    depth: usize,
    ctx: &PrecisionContext,
) -> Result<BandTree> {
    let mut engine = BandEngine::new(spec, coupling, depth.max(1), ctx, true)?;
    build_with_engine(&mut engine, depth)
}

pub fn build_with_engine(engine: &mut BandEngine, depth: usize) -> Result<BandTree> {
    let mut levels: Vec<Vec<Node>> = vec![engine.roots()?.to_vec()];
    for n in 0..depth {
        let mut next = Vec::new();
        for parent in &levels[n] {
            next.extend(engine.children(parent)?);
        }
        levels.push(next);
    }
    Ok(BandTree {
        spec: engine.spec().clone(),
        coupling: engine.coupling(),
        mantissa_bits: engine.prec(),
        rel_tol: engine.ctx().rel_tol,
        levels: BandTree::link(levels)?,
    })
}

/// Independent re-check of a finished tree.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TreeAudit {
    pub bands: usize,
    /// Nodes whose child counts per type differ from the covering rule.
    pub count_failures: Vec<String>,
    /// `(k, bands of type II or III at order k, q_k)`.
    pub spectrum_counts: Vec<(usize, usize, i128)>,
    /// Nodes whose children escape the parent or overlap a sibling.
    pub nesting_failures: Vec<String>,
    /// Largest `outer - inner` bracket over all endpoints, relative to the band length.
    pub max_bracket: f64,
}

impl TreeAudit {
    pub fn passed(&self) -> bool {
        self.count_failures.is_empty()
            && self.nesting_failures.is_empty()
            && self.spectrum_counts.iter().all(|&(_, have, q)| have as i128 == q)
    }
}

pub fn audit_tree(tree: &BandTree) -> Result<TreeAudit> {
    let mut audit = TreeAudit {
        bands: tree.band_count(),
        count_failures: Vec::new(),
        spectrum_counts: Vec::new(),
        nesting_failures: Vec::new(),
        max_bracket: 0.0,
    };
    for n in 0..=tree.depth() {
        let level = tree.level(n);
        let x = level.iter().filter(|b| b.band_type() != BandType::I).count();
        audit.spectrum_counts.push((n, x, tree.spec.q(n as i64)?));
        for (i, b) in level.iter().enumerate() {
            let len = b.length();
            for e in [&b.lo, &b.hi] {
                let w = Float::with_val(len.prec(), e.width() / &len).to_f64();
                audit.max_bracket = audit.max_bracket.max(w);
            }
            if n == tree.depth() {
                continue;
            }
            let kids = tree.children_of(n, i);
            let (nz, nx) = expected_children(b.band_type(), tree.spec.digit(n + 1));
            let z = kids.iter().filter(|k| k.band_type() == BandType::I).count();
            if z != nz || kids.len() - z != nx {
                audit.count_failures.push(b.word.to_string());
            }
            let nodes: Vec<Node> = kids.iter().map(|k| k.node.clone()).collect();
            if check_children(b, &nodes).is_err() {
                audit.nesting_failures.push(b.word.to_string());
            }
        }
    }
    Ok(audit)
}

/// Result of a single-branch descent.
#[derive(Debug, Clone)]
pub struct SpectrumPoint {
    /// Bands from order 0 down to the returned one.
    pub path: Vec<Node>,
}

impl SpectrumPoint {
    pub fn band(&self) -> &Node {
        self.path.last().expect("paths start at a root band")
    }
}

/// Band containing the image of the cylinder of `prefix`, narrowed by extending
/// along the smallest admissible letters until its width is at most `target_width`.
pub fn spectrum_point(engine: &mut BandEngine, prefix: &Word, target_width: f64) -> Result<SpectrumPoint> {
    let mut path = engine.descend(prefix)?;
    while path.last().unwrap().length().to_f64() > target_width {
        let last = path.last().unwrap();
        if last.order() >= engine.max_order() {
            return Err(Error::PrecisionExhausted(format!(
                "width {} still above {target_width} at order {}",
                last.length().to_f64(),
                last.order()
            )));
        }
        let first = engine.children(last)?.into_iter().next().expect("bands have children");
        path.push(first);
    }
    Ok(SpectrumPoint { path })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coding::enumerate_words;

    fn golden_tree(depth: usize) -> BandTree {
        build_band_tree(
            &FrequencySpec::golden(),
            Coupling::new(24.0).unwrap(),
            depth,
            &PrecisionContext::double(),
        )
        .unwrap()
    }

    #[test]
    fn order_zero_bands() {
        let t = golden_tree(0);
        let l = t.level(0);
        assert_eq!(l.len(), 2);
        assert_eq!((l[0].lo_f64(), l[0].hi_f64()), (22.0, 26.0));
        assert_eq!((l[1].lo_f64(), l[1].hi_f64()), (-2.0, 2.0));
        assert_eq!(l[0].trace_index(), (0, 1));
        assert_eq!(l[1].trace_index(), (1, 0));
    }

    #[test]
    fn level_counts_match_enumeration() {
        let spec = FrequencySpec::golden();
        let t = golden_tree(7);
        for n in 0..=7 {
            let words: Vec<Word> = enumerate_words(&spec, n, true).collect();
            let mut have: Vec<Word> = t.level(n).iter().map(|b| b.word.clone()).collect();
            have.sort();
            assert_eq!(have, words, "level {n}");
        }
    }

    #[test]
    fn audit_of_golden_tree() {
        let a = audit_tree(&golden_tree(7)).unwrap();
        assert!(a.passed(), "{a:?}");
        assert_eq!(a.spectrum_counts[7], (7, 21, 21));
        assert!(a.max_bracket < 1e-12);
    }

    #[test]
    fn type_two_children_alternate() {
        let t = golden_tree(3);
        for (n, level) in t.levels.iter().enumerate().take(3) {
            for (i, b) in level.iter().enumerate() {
                if b.band_type() == BandType::II {
                    let kids: Vec<String> =
                        t.children_of(n, i).iter().map(|c| c.word.last().to_string()).collect();
                    assert_eq!(kids, ["(I,1)", "(III,1)", "(I,2)"]);
                }
            }
        }
    }

    #[test]
    fn endpoints_map_to_plus_minus_two() {
        let spec = FrequencySpec::new(vec![0, 2, 1], 2).unwrap();
        let v = Coupling::new(30.0).unwrap();
        let ctx = PrecisionContext::double();
        let t = build_band_tree(&spec, v, 5, &ctx).unwrap();
        let mut ev = TraceEvaluator::new(&spec, v, 7, t.mantissa_bits);
        for level in &t.levels {
            for b in level {
                let (m, p) = b.trace_index();
                let lo = ev.trace(m, p, &b.lo.inner).to_f64();
                let hi = ev.trace(m, p, &b.hi.inner).to_f64();
                assert!((lo.abs() - 2.0).abs() < 1e-6 && (hi.abs() - 2.0).abs() < 1e-6, "{}", b.word);
                assert!(lo * hi < 0.0, "{}", b.word);
                let lo_out = ev.trace(m, p, &b.lo.outer).to_f64().abs();
                assert!(lo_out >= 2.0 || b.order() == 0);
            }
        }
    }

    #[test]
    fn descent_matches_tree() {
        let spec = FrequencySpec::golden();
        let v = Coupling::new(24.0).unwrap();
        let t = golden_tree(6);
        let mut engine = BandEngine::new(&spec, v, 6, &PrecisionContext::double(), true).unwrap();
        for b in t.level(6).iter().step_by(5) {
            let path = engine.descend(&b.word).unwrap();
            assert_eq!(path.last().unwrap(), &b.node);
        }
    }

    #[test]
    fn spectrum_point_narrows() {
        let spec = FrequencySpec::golden();
        let v = Coupling::new(24.0).unwrap();
        let mut engine = BandEngine::new(&spec, v, 12, &PrecisionContext::double(), true).unwrap();
        let root = Word::parse_rooted("I", &spec).unwrap();
        let p = spectrum_point(&mut engine, &root, 4.0).unwrap();
        assert_eq!((p.band().lo_f64(), p.band().hi_f64()), (22.0, 26.0));
        let p = spectrum_point(&mut engine, &root, 1e-6).unwrap();
        let widths: Vec<f64> = p.path.iter().map(|n| n.length().to_f64()).collect();
        // An (n,I) band and its (n+1,II) child coincide when a_{n+1} = 1, so the
        // halving bound only holds after discounting those steps.
        let mut coincident = 0;
        for (n, w) in widths.iter().enumerate() {
            if n > 0 && widths[n - 1] == *w {
                coincident += 1;
            }
            assert!(*w <= 2f64.powi(2 - (n - coincident) as i32) * (1.0 + 1e-12));
        }
        assert!(coincident > 0);
        for w in widths.windows(3) {
            assert!(w[2] < w[0]);
        }
        assert!(*widths.last().unwrap() <= 1e-6);
    }

    #[test]
    fn widths_halve_without_unit_digits() {
        let spec = FrequencySpec::constant_type(2).unwrap();
        let v = Coupling::new(24.0).unwrap();
        let mut engine = BandEngine::new(&spec, v, 10, &PrecisionContext::double(), true).unwrap();
        for start in ["I", "III"] {
            let root = Word::parse_rooted(start, &spec).unwrap();
            let p = spectrum_point(&mut engine, &root, 1e-9).unwrap();
            for (n, node) in p.path.iter().enumerate() {
                assert!(node.length().to_f64() <= 2f64.powi(2 - n as i32));
            }
            for w in p.path.windows(2) {
                assert!(w[1].length() < w[0].length());
            }
        }
    }

    #[test]
    fn truncation_and_lookup() {
        let t = golden_tree(5);
        let s = t.truncated(3);
        assert_eq!(s.depth(), 3);
        assert!(s.level(3).iter().all(|b| b.children.is_empty()));
        for b in t.level(4) {
            let i = t.find(&b.word).unwrap();
            assert_eq!(t.level(4)[i].word, b.word);
        }
    }
}
