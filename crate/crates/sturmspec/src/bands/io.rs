//! Versioned JSON form of a band tree.

use rug::Float;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BandTree, Coupling, Endpoint, FrequencySpec, Node};
use crate::coding::{BandType, Word};
use crate::error::{Error, Result};
use crate::numkernel::PrecisionContext;

pub const TREE_FORMAT_VERSION: u32 = 1;
const FORMAT_NAME: &str = "sturmspec-bandtree";
const MAX_BITS: u32 = 1 << 16;
const MAX_LEVELS: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointDoc {
    pub outer: String,
    pub inner: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandDoc {
    pub word: String,
    #[serde(rename = "type")]
    pub band_type: String,
    pub lo: EndpointDoc,
    pub hi: EndpointDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeDocument {
    pub format: String,
    pub version: u32,
    pub prefix: Vec<u32>,
    pub kappa: u32,
    pub coupling: f64,
    pub depth: usize,
    pub mantissa_bits: u32,
    pub rel_tol: f64,
    pub levels: Vec<Vec<BandDoc>>,
}

fn decimal(x: &Float) -> String {
    x.to_string_radix(10, None)
}

impl TreeDocument {
    pub fn from_tree(tree: &BandTree) -> Self {
        let ep = |e: &Endpoint| EndpointDoc {
            outer: decimal(&e.outer),
            inner: decimal(&e.inner),
        };
        Self {
            format: FORMAT_NAME.into(),
            version: TREE_FORMAT_VERSION,
            prefix: tree.spec.prefix().to_vec(),
            kappa: tree.spec.kappa(),
            coupling: tree.coupling.value(),
            depth: tree.depth(),
            mantissa_bits: tree.mantissa_bits,
            rel_tol: tree.rel_tol,
            levels: tree
                .levels
                .iter()
                .map(|l| {
                    l.iter()
                        .map(|b| BandDoc {
                            word: b.word.to_string(),
                            band_type: b.band_type().as_str().into(),
                            lo: ep(&b.lo),
                            hi: ep(&b.hi),
                        })
                        .collect()
                })
                .collect(),
        }
    }

    /// Validates the document and rebuilds the tree with its links.
    pub fn into_tree(self) -> Result<BandTree> {
        if self.format != FORMAT_NAME {
            return Err(Error::Parse(format!("unknown document format {:?}", self.format)));
        }
        if self.version != TREE_FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "band tree version {} does not match {TREE_FORMAT_VERSION}",
                self.version
            )));
        }
        let spec = FrequencySpec::new(self.prefix, self.kappa)?;
        let coupling = Coupling::new(self.coupling)?;
        if !(53..=MAX_BITS).contains(&self.mantissa_bits) {
            return Err(Error::Parse(format!("mantissa bits {} out of range", self.mantissa_bits)));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) {
            return Err(Error::Parse("relative tolerance must be positive".into()));
        }
        if self.levels.is_empty() || self.levels.len() > MAX_LEVELS || self.levels.len() != self.depth + 1 {
            return Err(Error::Parse(format!(
                "{} levels for declared depth {}",
                self.levels.len(),
                self.depth
            )));
        }
        let prec = self.mantissa_bits;
        let num = |s: &str| -> Result<Float> {
            let parsed = Float::parse(s).map_err(|e| Error::Parse(format!("endpoint {s:?}: {e}")))?;
            let x = Float::with_val(prec, parsed);
            if !x.is_finite() {
                return Err(Error::Parse(format!("endpoint {s:?} is not finite")));
            }
            Ok(x)
        };
        let mut levels = Vec::with_capacity(self.levels.len());
        for (n, level) in self.levels.into_iter().enumerate() {
            let mut nodes: Vec<Node> = Vec::with_capacity(level.len());
            for b in level {
                let word = Word::parse_rooted(&b.word, &spec)?;
                if word.order() != n {
                    return Err(Error::Parse(format!("word {} listed at level {n}", b.word)));
                }
                if BandType::parse(&b.band_type)? != word.band_type() {
                    return Err(Error::Parse(format!("type {} does not match word {}", b.band_type, b.word)));
                }
                let node = Node {
                    word,
                    lo: Endpoint {
                        outer: num(&b.lo.outer)?,
                        inner: num(&b.lo.inner)?,
                    },
                    hi: Endpoint {
                        outer: num(&b.hi.outer)?,
                        inner: num(&b.hi.inner)?,
                    },
                };
                if !(node.lo.outer <= node.lo.inner && node.lo.inner < node.hi.inner && node.hi.inner <= node.hi.outer) {
                    return Err(Error::Parse(format!("endpoints of {} are out of order", node.word)));
                }
                let sibling = nodes.last().filter(|p| n > 0 && p.word.prefix(n) == node.word.prefix(n));
                if let Some(prev) = sibling {
                    if prev.hi.inner >= node.lo.inner {
                        return Err(Error::Parse(format!("{} does not lie right of {}", node.word, prev.word)));
                    }
                }
                nodes.push(node);
            }
            levels.push(nodes);
        }
        Ok(BandTree {
            spec,
            coupling,
            mantissa_bits: prec,
            rel_tol: self.rel_tol,
            levels: BandTree::link(levels)?,
        })
    }
}

impl BandTree {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&TreeDocument::from_tree(self)).expect("tree documents serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: TreeDocument =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("band tree JSON: {e}")))?;
        doc.into_tree()
    }
}

/// Hex content hash of the inputs that determine a tree (depth excluded: a deeper
/// tree serves shallower requests).
pub fn tree_cache_key(spec: &FrequencySpec, coupling: Coupling, ctx: &PrecisionContext) -> String {
    let mut h = Sha256::new();
    h.update(format!(
        "{FORMAT_NAME}/{TREE_FORMAT_VERSION};prefix={:?};kappa={};V={:016x};bits={};abs={:016x};rel={:016x}",
        spec.prefix(),
        spec.kappa(),
        coupling.value().to_bits(),
        ctx.mantissa_bits,
        ctx.abs_tol.to_bits(),
        ctx.rel_tol.to_bits()
    ));
    h.finalize()
        .iter()
        .take(16)
        .map(|b| format!("{b:02x}"))
        .collect()
}
