//! Alphabets of band labels, the admissibility relation, incidence matrices,
//! word enumeration and prefix vectors.

use std::cmp::Ordering;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bands::FrequencySpec;
use crate::error::{Error, Result};
use crate::numkernel::{primitivity_exponent, CharPoly3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BandType {
    I,
    II,
    III,
}

impl BandType {
    pub fn as_str(&self) -> &'static str {
        match self {
            BandType::I => "I",
            BandType::II => "II",
            BandType::III => "III",
        }
    }

    /// Row/column of the type in the 3x3 hat matrices.
    pub fn slot(&self) -> usize {
        match self {
            BandType::I => 0,
            BandType::II => 1,
            BandType::III => 2,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "I" => Ok(BandType::I),
            "II" => Ok(BandType::II),
            "III" => Ok(BandType::III),
            other => Err(Error::Parse(format!("unknown band type {other:?}"))),
        }
    }
}

impl fmt::Display for BandType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Letter `(type, index)` of the alphabet with parameter `alphabet`;
/// `alphabet == 0` is the order-0 alphabet `{I, III}` whose letters carry no index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Letter {
    pub band_type: BandType,
    pub index: u32,
    pub alphabet: u32,
}

impl Letter {
    pub fn new(band_type: BandType, index: u32, alphabet: u32) -> Result<Self> {
        let ok = if alphabet == 0 {
            index == 0 && band_type != BandType::II
        } else {
            match band_type {
                BandType::I => (1..=alphabet + 1).contains(&index),
                BandType::II => index == 1,
                BandType::III => (1..=alphabet).contains(&index),
            }
        };
        if !ok {
            return Err(Error::InadmissibleWord(format!(
                "letter ({band_type},{index}) does not exist in alphabet {alphabet}"
            )));
        }
        Ok(Self {
            band_type,
            index,
            alphabet,
        })
    }

    pub fn root(band_type: BandType) -> Result<Self> {
        Self::new(band_type, 0, 0)
    }

    /// 1-based position in the total order of the alphabet.
    pub fn position(&self) -> usize {
        if self.alphabet == 0 {
            return if self.band_type == BandType::I { 1 } else { 2 };
        }
        let n = self.alphabet as usize;
        match self.band_type {
            BandType::I => self.index as usize,
            BandType::II => n + 2,
            BandType::III => n + 2 + self.index as usize,
        }
    }

    pub fn from_position(alphabet: u32, pos: usize) -> Result<Self> {
        let letters = alphabet_letters(alphabet);
        pos.checked_sub(1)
            .and_then(|i| letters.get(i).copied())
            .ok_or_else(|| {
                Error::InadmissibleWord(format!("no letter {pos} in alphabet {alphabet}"))
            })
    }
}

impl PartialOrd for Letter {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Letter {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.alphabet, self.position()).cmp(&(other.alphabet, other.position()))
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.alphabet == 0 {
            f.write_str(self.band_type.as_str())
        } else {
            write!(f, "({},{})", self.band_type, self.index)
        }
    }
}

/// Letters of an alphabet in increasing order.
pub fn alphabet_letters(alphabet: u32) -> Vec<Letter> {
    if alphabet == 0 {
        return vec![
            Letter::root(BandType::I).unwrap(),
            Letter::root(BandType::III).unwrap(),
        ];
    }
    let mut out = Vec::with_capacity(2 * alphabet as usize + 2);
    for j in 1..=alphabet + 1 {
        out.push(Letter::new(BandType::I, j, alphabet).unwrap());
    }
    out.push(Letter::new(BandType::II, 1, alphabet).unwrap());
    for l in 1..=alphabet {
        out.push(Letter::new(BandType::III, l, alphabet).unwrap());
    }
    out
}

/// Whether `a` may be followed by `b` (`b` must not be an order-0 letter).
pub fn admissible(a: &Letter, b: &Letter) -> bool {
    if b.alphabet == 0 {
        return false;
    }
    let m = b.alphabet;
    match (a.band_type, b.band_type) {
        (BandType::I, BandType::II) => true,
        (BandType::II, BandType::I) => b.index <= m + 1,
        (BandType::II, BandType::III) => b.index <= m,
        (BandType::III, BandType::I) => b.index <= m,
        (BandType::III, BandType::III) => b.index < m,
        _ => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Origin {
    /// Starts in the order-0 alphabet; letter `i` lives in alphabet `a_i`.
    Rooted,
    /// All letters in the tail alphabet.
    Free,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Word {
    letters: Vec<Letter>,
    origin: Origin,
}

impl Word {
    fn check_chain(letters: &[Letter]) -> Result<()> {
        for pair in letters.windows(2) {
            if !admissible(&pair[0], &pair[1]) {
                return Err(Error::InadmissibleWord(format!(
                    "{} -> {} is not admissible",
                    pair[0], pair[1]
                )));
            }
        }
        Ok(())
    }

    pub fn rooted(letters: Vec<Letter>, spec: &FrequencySpec) -> Result<Self> {
        if letters.is_empty() {
            return Err(Error::InadmissibleWord("empty word".into()));
        }
        for (i, l) in letters.iter().enumerate() {
            let want = if i == 0 { 0 } else { spec.digit(i) };
            if l.alphabet != want {
                return Err(Error::InadmissibleWord(format!(
                    "letter {i} ({l}) must lie in alphabet {want}"
                )));
            }
        }
        Self::check_chain(&letters)?;
        Ok(Self {
            letters,
            origin: Origin::Rooted,
        })
    }

    pub fn free(letters: Vec<Letter>, kappa: u32) -> Result<Self> {
        if letters.is_empty() {
            return Err(Error::InadmissibleWord("empty word".into()));
        }
        if let Some(l) = letters.iter().find(|l| l.alphabet != kappa) {
            return Err(Error::InadmissibleWord(format!(
                "letter {l} is not in alphabet {kappa}"
            )));
        }
        Self::check_chain(&letters)?;
        Ok(Self {
            letters,
            origin: Origin::Free,
        })
    }

    /// Free word from 1-based letter positions in the alphabet `kappa`.
    pub fn free_from_positions(positions: &[usize], kappa: u32) -> Result<Self> {
        let letters = positions
            .iter()
            .map(|&p| Letter::from_position(kappa, p))
            .collect::<Result<Vec<_>>>()?;
        Self::free(letters, kappa)
    }

    pub fn parse_rooted(text: &str, spec: &FrequencySpec) -> Result<Self> {
        let tokens = tokenize(text)?;
        let letters = tokens
            .into_iter()
            .enumerate()
            .map(|(i, (t, idx))| {
                let alphabet = if i == 0 { 0 } else { spec.digit(i) };
                match (alphabet, idx) {
                    (0, None) => Letter::root(t),
                    (0, Some(_)) => Err(Error::Parse(
                        "the first letter of a rooted word carries no index".into(),
                    )),
                    (_, None) => Err(Error::Parse(format!("letter {i} needs an index"))),
                    (a, Some(j)) => Letter::new(t, j, a),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::rooted(letters, spec)
    }

    pub fn parse_free(text: &str, kappa: u32) -> Result<Self> {
        let letters = tokenize(text)?
            .into_iter()
            .map(|(t, idx)| match idx {
                Some(j) => Letter::new(t, j, kappa),
                None => Err(Error::Parse("free words need indexed letters".into())),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::free(letters, kappa)
    }

    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn origin(&self) -> Origin {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    /// Order of the coded band: letter count minus one.
    pub fn order(&self) -> usize {
        self.letters.len() - 1
    }

    pub fn first(&self) -> Letter {
        self.letters[0]
    }

    pub fn last(&self) -> Letter {
        *self.letters.last().expect("words are non-empty")
    }

    pub fn band_type(&self) -> BandType {
        self.last().band_type
    }

    /// Appends one letter, checking admissibility.
    pub fn child(&self, next: Letter) -> Result<Self> {
        if !admissible(&self.last(), &next) {
            return Err(Error::InadmissibleWord(format!(
                "{} -> {next} is not admissible",
                self.last()
            )));
        }
        let mut letters = self.letters.clone();
        letters.push(next);
        Ok(Self {
            letters,
            origin: self.origin,
        })
    }

    pub fn prefix(&self, len: usize) -> Self {
        Self {
            letters: self.letters[..len].to_vec(),
            origin: self.origin,
        }
    }

    /// `w ⋆ u`: `w` must end with the first letter of the free word `u`.
    pub fn splice(&self, u: &Word) -> Result<Self> {
        if self.last() != u.first() {
            return Err(Error::InadmissibleWord(format!(
                "cannot splice {u} onto {self}: last letter differs from first"
            )));
        }
        let mut letters = self.letters.clone();
        letters.extend_from_slice(&u.letters[1..]);
        Ok(Self {
            letters,
            origin: self.origin,
        })
    }

    /// Shift: drop the first `k` letters; the result is a free word.
    pub fn tail_from(&self, k: usize) -> Self {
        Self {
            letters: self.letters[k..].to_vec(),
            origin: Origin::Free,
        }
    }

    /// Number of positions `1..=n` carrying `letter`.
    pub fn count_after_root(&self, letter: &Letter) -> usize {
        self.letters.iter().skip(1).filter(|l| *l == letter).count()
    }
}

impl PartialOrd for Word {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Word {
    fn cmp(&self, other: &Self) -> Ordering {
        self.letters.cmp(&other.letters)
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, l) in self.letters.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

fn tokenize(text: &str) -> Result<Vec<(BandType, Option<u32>)>> {
    let text = text.trim();
    if text.is_empty() {
        return Err(Error::Parse("empty word string".into()));
    }
    text.split('.')
        .map(|tok| {
            let tok = tok.trim();
            if let Some(inner) = tok.strip_prefix('(').and_then(|t| t.strip_suffix(')')) {
                let (t, idx) = inner
                    .split_once(',')
                    .ok_or_else(|| Error::Parse(format!("letter {tok:?} lacks an index")))?;
                let idx = idx
                    .trim()
                    .parse::<u32>()
                    .map_err(|e| Error::Parse(format!("bad index in {tok:?}: {e}")))?;
                Ok((BandType::parse(t.trim())?, Some(idx)))
            } else {
                Ok((BandType::parse(tok)?, None))
            }
        })
        .collect()
}

/// 0/1 matrix of admissible transitions between two alphabets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IncidenceMatrix {
    pub rows: Vec<Letter>,
    pub cols: Vec<Letter>,
    pub entries: Vec<Vec<u8>>,
}

impl IncidenceMatrix {
    pub fn nonzero_count(&self) -> usize {
        self.entries.iter().flatten().filter(|&&v| v == 1).count()
    }

    pub fn row_sums(&self) -> Vec<usize> {
        self.entries
            .iter()
            .map(|r| r.iter().map(|&v| v as usize).sum())
            .collect()
    }

    pub fn to_f64(&self) -> Vec<Vec<f64>> {
        self.entries
            .iter()
            .map(|r| r.iter().map(|&v| v as f64).collect())
            .collect()
    }

    pub fn to_i64(&self) -> Vec<Vec<i64>> {
        self.entries
            .iter()
            .map(|r| r.iter().map(|&v| v as i64).collect())
            .collect()
    }
}

/// Incidence matrix from alphabet `n` (0 for the order-0 alphabet) to alphabet `m >= 1`.
pub fn incidence_matrix(n: u32, m: u32) -> IncidenceMatrix {
    let rows = alphabet_letters(n);
    let cols = alphabet_letters(m);
    let entries = rows
        .iter()
        .map(|a| cols.iter().map(|b| admissible(a, b) as u8).collect())
        .collect();
    IncidenceMatrix {
        rows,
        cols,
        entries,
    }
}

/// Type-aggregated transition counts: entry `[s][t]` is the number of letters
/// of type `t` in alphabet `N` that may follow a letter of type `s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HatMatrix(pub [[u64; 3]; 3]);

pub fn hat_matrix(n: u32) -> HatMatrix {
    let n = n as u64;
    HatMatrix([[0, 1, 0], [n + 1, 0, n], [n, 0, n - 1]])
}

impl HatMatrix {
    pub fn char_poly(&self) -> CharPoly3 {
        let mut m = [[0i64; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = self.0[i][j] as i64;
            }
        }
        CharPoly3::of_matrix(&m)
    }

    pub fn to_f64(&self) -> Vec<Vec<f64>> {
        self.0.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect()
    }

    pub fn row_sums(&self) -> [u64; 3] {
        [0, 1, 2].map(|i| self.0[i].iter().sum())
    }
}

/// Row vector `e_t · Â_{a_{m+1}} ⋯ Â_{a_{m+n}}`: counts of extensions of a word of
/// length `m+1` ending in type `t` by `n` letters, split by last-letter type.
pub fn extension_counts(spec: &FrequencySpec, m: usize, t: BandType, n: usize) -> [u128; 3] {
    let mut v = [0u128; 3];
    v[t.slot()] = 1;
    for k in 1..=n {
        let h = hat_matrix(spec.digit(m + k)).0;
        let mut next = [0u128; 3];
        for (i, vi) in v.iter().enumerate() {
            for j in 0..3 {
                next[j] += vi * h[i][j] as u128;
            }
        }
        v = next;
    }
    v
}

/// Number of rooted words of length `n+1`, split by last-letter type.
pub fn rooted_counts_by_type(spec: &FrequencySpec, n: usize) -> [u128; 3] {
    let a = extension_counts(spec, 0, BandType::I, n);
    let b = extension_counts(spec, 0, BandType::III, n);
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

/// Depth-first stream of words of length `n+1` in lexicographic order.
pub struct WordStream {
    spec: FrequencySpec,
    origin: Origin,
    target_len: usize,
    path: Vec<Letter>,
    cursors: Vec<usize>,
    candidates: Vec<Vec<Letter>>,
    done: bool,
}

impl WordStream {
    fn alphabet_at(&self, pos: usize) -> u32 {
        match self.origin {
            Origin::Rooted if pos == 0 => 0,
            Origin::Rooted => self.spec.digit(pos),
            Origin::Free => self.spec.kappa(),
        }
    }

    fn candidates_after(&self, pos: usize) -> Vec<Letter> {
        let letters = alphabet_letters(self.alphabet_at(pos));
        if pos == 0 {
            return letters;
        }
        let prev = self.path[pos - 1];
        letters.into_iter().filter(|b| admissible(&prev, b)).collect()
    }
}

impl Iterator for WordStream {
    type Item = Word;

    fn next(&mut self) -> Option<Word> {
        if self.done {
            return None;
        }
        loop {
            let depth = self.path.len();
            if depth == self.target_len {
                let word = Word {
                    letters: self.path.clone(),
                    origin: self.origin,
                };
                self.path.pop();
                return Some(word);
            }
            if self.candidates.len() <= depth {
                let c = self.candidates_after(depth);
                self.candidates.push(c);
                self.cursors.push(0);
            }
            let cursor = self.cursors[depth];
            if cursor < self.candidates[depth].len() {
                self.cursors[depth] += 1;
                self.path.push(self.candidates[depth][cursor]);
            } else {
                self.candidates.pop();
                self.cursors.pop();
                if self.path.pop().is_none() {
                    self.done = true;
                    return None;
                }
            }
        }
    }
}

/// Words with `n` transitions (length `n+1`): rooted words of the coding of the
/// frequency, or free words of the tail subshift.
pub fn enumerate_words(spec: &FrequencySpec, n: usize, rooted: bool) -> WordStream {
    WordStream {
        spec: spec.clone(),
        origin: if rooted { Origin::Rooted } else { Origin::Free },
        target_len: n + 1,
        path: Vec::with_capacity(n + 1),
        cursors: Vec::new(),
        candidates: Vec::new(),
        done: false,
    }
}

/// Number of free words of length `n+1` over the tail alphabet.
pub fn free_word_count(kappa: u32, n: usize) -> u128 {
    let a = incidence_matrix(kappa, kappa).entries;
    let d = a.len();
    let mut v = vec![1u128; d];
    for _ in 0..n {
        let mut next = vec![0u128; d];
        for i in 0..d {
            for j in 0..d {
                if a[i][j] == 1 {
                    next[i] += v[j];
                }
            }
        }
        v = next;
    }
    v.iter().sum()
}

/// One rooted word of length `depth+1` per letter of the tail alphabet, the
/// `i`-th ending in the `i`-th letter.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PrefixVector {
    pub depth: usize,
    pub words: Vec<Word>,
}

impl PrefixVector {
    /// The word ending in `letter`.
    pub fn word_for(&self, letter: &Letter) -> &Word {
        &self.words[letter.position() - 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrefixPolicy {
    /// Lexicographically smallest word per terminal letter.
    Canonical,
    /// Lexicographically largest word per terminal letter.
    Largest,
    All,
    Sample { count: usize, seed: u64 },
}

/// Default cap on `|Ω_N|` and on enumerated prefix-vector sets.
pub const PREFIX_CAP: u128 = 1 << 20;

/// Smallest `N >= 4 + nhat` with the tail incidence matrix power `A^{N - nhat}` positive.
pub fn minimal_coupling_depth(spec: &FrequencySpec) -> usize {
    let a = incidence_matrix(spec.kappa(), spec.kappa()).to_f64();
    let d = a.len();
    let e = primitivity_exponent(&a, 2 * d * d).expect("tail incidence matrices are primitive");
    spec.n_hat() + e.max(4)
}

/// Whether `A^{depth - nhat}` is positive and `depth >= 4 + nhat`.
pub fn coupling_depth_valid(spec: &FrequencySpec, depth: usize) -> bool {
    depth >= minimal_coupling_depth(spec)
}

fn rooted_words_by_last(spec: &FrequencySpec, depth: usize, cap: u128) -> Result<Vec<Vec<Word>>> {
    let counts = rooted_counts_by_type(spec, depth);
    let total: u128 = counts.iter().sum();
    if total > cap {
        return Err(Error::DepthOverflow { count: total, cap });
    }
    let mut by_last = vec![Vec::new(); 2 * spec.kappa() as usize + 2];
    for w in enumerate_words(spec, depth, true) {
        by_last[w.last().position() - 1].push(w);
    }
    Ok(by_last)
}

// Reachability-guided greedy choice of the smallest (or largest) word ending in `target`.
fn extreme_word(spec: &FrequencySpec, depth: usize, target: Letter, largest: bool) -> Word {
    let alphabet = |pos: usize| if pos == 0 { 0 } else { spec.digit(pos) };
    // reach[pos] = letters at position pos from which `target` at `depth` is reachable
    let mut reach: Vec<Vec<Letter>> = vec![Vec::new(); depth + 1];
    reach[depth] = vec![target];
    for pos in (0..depth).rev() {
        reach[pos] = alphabet_letters(alphabet(pos))
            .into_iter()
            .filter(|a| reach[pos + 1].iter().any(|b| admissible(a, b)))
            .collect();
    }
    let pick = |set: &mut dyn Iterator<Item = Letter>| {
        if largest {
            set.max()
        } else {
            set.min()
        }
    };
    let mut letters = vec![pick(&mut reach[0].iter().copied()).expect("target reachable")];
    for pos in 1..=depth {
        let prev = letters[pos - 1];
        let next = pick(&mut reach[pos].iter().copied().filter(|b| admissible(&prev, b)))
            .expect("reachability is consistent");
        letters.push(next);
    }
    Word {
        letters,
        origin: Origin::Rooted,
    }
}

/// Prefix vectors at the minimal coupling depth.
pub fn prefix_vectors(spec: &FrequencySpec, policy: PrefixPolicy) -> Result<Vec<PrefixVector>> {
    prefix_vectors_at(spec, minimal_coupling_depth(spec), policy, PREFIX_CAP)
}

/// Prefix vectors at a chosen coupling depth.
pub fn prefix_vectors_at(
    spec: &FrequencySpec,
    depth: usize,
    policy: PrefixPolicy,
    cap: u128,
) -> Result<Vec<PrefixVector>> {
    if !coupling_depth_valid(spec, depth) {
        return Err(Error::Invalid(format!(
            "coupling depth {depth} is below the admissible minimum {}",
            minimal_coupling_depth(spec)
        )));
    }
    let tail = alphabet_letters(spec.kappa());
    match policy {
        PrefixPolicy::Canonical | PrefixPolicy::Largest => {
            let largest = policy == PrefixPolicy::Largest;
            let words = tail
                .iter()
                .map(|&e| extreme_word(spec, depth, e, largest))
                .collect();
            Ok(vec![PrefixVector { depth, words }])
        }
        PrefixPolicy::All => {
            let by_last = rooted_words_by_last(spec, depth, cap)?;
            let product = by_last
                .iter()
                .try_fold(1u128, |acc, ws| acc.checked_mul(ws.len() as u128))
                .unwrap_or(u128::MAX);
            if product > cap {
                return Err(Error::DepthOverflow {
                    count: product,
                    cap,
                });
            }
            let mut out = Vec::with_capacity(product as usize);
            let mut idx = vec![0usize; by_last.len()];
            loop {
                out.push(PrefixVector {
                    depth,
                    words: idx.iter().zip(&by_last).map(|(&i, ws)| ws[i].clone()).collect(),
                });
                // odometer, last component fastest
                let mut k = idx.len();
                loop {
                    if k == 0 {
                        return Ok(out);
                    }
                    k -= 1;
                    idx[k] += 1;
                    if idx[k] < by_last[k].len() {
                        break;
                    }
                    idx[k] = 0;
                }
            }
        }
        PrefixPolicy::Sample { count, seed } => {
            let by_last = rooted_words_by_last(spec, depth, cap)?;
            let product = by_last
                .iter()
                .try_fold(1u128, |acc, ws| acc.checked_mul(ws.len() as u128))
                .unwrap_or(u128::MAX);
            if (count as u128) > product {
                return Err(Error::Invalid(format!(
                    "cannot sample {count} distinct prefix vectors out of {product}"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut out: Vec<PrefixVector> = Vec::with_capacity(count);
            while out.len() < count {
                let words = by_last
                    .iter()
                    .map(|ws| ws.choose(&mut rng).expect("non-empty").clone())
                    .collect();
                let pv = PrefixVector { depth, words };
                if !out.contains(&pv) {
                    out.push(pv);
                }
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn letter(t: BandType, i: u32, n: u32) -> Letter {
        Letter::new(t, i, n).unwrap()
    }

    #[test]
    fn admissibility_examples() {
        assert!(admissible(&letter(BandType::I, 1, 1), &letter(BandType::II, 1, 1)));
        assert!(!admissible(&letter(BandType::II, 1, 1), &letter(BandType::II, 1, 1)));
        assert!(!admissible(&letter(BandType::III, 1, 2), &letter(BandType::III, 2, 2)));
        assert!(admissible(&letter(BandType::III, 1, 2), &letter(BandType::III, 1, 2)));
        let root_iii = Letter::root(BandType::III).unwrap();
        assert!(admissible(&root_iii, &letter(BandType::I, 2, 2)));
        assert!(!admissible(&root_iii, &letter(BandType::I, 3, 2)));
    }

    #[test]
    fn incidence_counts() {
        assert_eq!(incidence_matrix(1, 1).nonzero_count(), 6);
        assert_eq!(incidence_matrix(2, 2).nonzero_count(), 14);
        for n in 1..6 {
            for m in 1..6 {
                let a = incidence_matrix(n, m);
                let expect = (n + 1) + (m + 1) + m + n * m + n * (m - 1);
                assert_eq!(a.nonzero_count() as u32, expect);
                for (row, s) in a.rows.iter().zip(a.row_sums()) {
                    let want = match row.band_type {
                        BandType::I => 1,
                        BandType::II => 2 * m + 1,
                        BandType::III => 2 * m - 1,
                    };
                    assert_eq!(s as u32, want);
                }
            }
        }
    }

    #[test]
    fn hat_matrices() {
        assert_eq!(hat_matrix(1).0, [[0, 1, 0], [2, 0, 1], [1, 0, 0]]);
        assert_eq!(hat_matrix(2).0, [[0, 1, 0], [3, 0, 2], [2, 0, 1]]);
        assert_eq!(hat_matrix(4).row_sums(), [1, 9, 7]);
    }

    #[test]
    fn word_string_round_trip() {
        let spec = FrequencySpec::new(vec![0, 2, 1], 1).unwrap();
        let w = Word::parse_rooted("III.(I,2).(II,1)", &spec).unwrap();
        assert_eq!(w.to_string(), "III.(I,2).(II,1)");
        assert_eq!(w.order(), 2);
        assert!(Word::parse_rooted("III.(I,3).(II,1)", &spec).is_err());
        assert!(Word::parse_rooted("(I,1)", &spec).is_err());
        assert!(Word::parse_rooted("II", &spec).is_err());
        let u = Word::parse_free("(II,1).(I,2)", 1).unwrap();
        assert_eq!(u.to_string(), "(II,1).(I,2)");
        assert!(Word::parse_free("(II,1).(II,1)", 1).is_err());
    }

    #[test]
    fn rooted_enumeration_small() {
        let spec = FrequencySpec::golden();
        let w0: Vec<String> = enumerate_words(&spec, 0, true).map(|w| w.to_string()).collect();
        assert_eq!(w0, vec!["I", "III"]);
        assert_eq!(enumerate_words(&spec, 1, false).count(), 6);
    }

    #[test]
    fn fibonacci_type_counts() {
        let spec = FrequencySpec::golden();
        let fib = [1u128, 1, 2, 3, 5, 8, 13, 21, 34];
        for (k, &f) in fib.iter().enumerate() {
            let words: Vec<Word> = enumerate_words(&spec, k, true).collect();
            let brute = words.iter().filter(|w| w.band_type() != BandType::I).count() as u128;
            let c = rooted_counts_by_type(&spec, k);
            assert_eq!(brute, f);
            assert_eq!(c[1] + c[2], f);
            assert_eq!(words.len() as u128, c.iter().sum::<u128>());
        }
    }

    #[test]
    fn coupling_depths() {
        let golden = FrequencySpec::golden();
        let n = minimal_coupling_depth(&golden);
        assert!(n >= 4);
        assert!(coupling_depth_valid(&golden, 5));
        let mixed = FrequencySpec::new(vec![0, 3, 2], 2).unwrap();
        assert!(minimal_coupling_depth(&mixed) >= 6);
    }

    #[test]
    fn canonical_prefix_vector_ends_correctly() {
        for spec in [
            FrequencySpec::golden(),
            FrequencySpec::constant_type(3).unwrap(),
            FrequencySpec::new(vec![0, 2, 5], 1).unwrap(),
        ] {
            let pv = &prefix_vectors(&spec, PrefixPolicy::Canonical).unwrap()[0];
            let tail = alphabet_letters(spec.kappa());
            for (w, e) in pv.words.iter().zip(&tail) {
                assert_eq!(w.last(), *e);
                assert_eq!(w.len(), pv.depth + 1);
                Word::rooted(w.letters().to_vec(), &spec).unwrap();
            }
            // brute-force minimality
            let by_last = rooted_words_by_last(&spec, pv.depth, PREFIX_CAP).unwrap();
            for (w, ws) in pv.words.iter().zip(&by_last) {
                assert_eq!(w, ws.iter().min().unwrap());
            }
            let large = &prefix_vectors(&spec, PrefixPolicy::Largest).unwrap()[0];
            for (w, ws) in large.words.iter().zip(&by_last) {
                assert_eq!(w, ws.iter().max().unwrap());
            }
        }
    }

    #[test]
    fn sampled_prefix_vectors_are_distinct() {
        let spec = FrequencySpec::golden();
        let pvs = prefix_vectors(&spec, PrefixPolicy::Sample { count: 2, seed: 7 }).unwrap();
        assert_eq!(pvs.len(), 2);
        assert_ne!(pvs[0], pvs[1]);
    }

    #[test]
    fn all_prefix_vectors_overflow_cap() {
        let spec = FrequencySpec::golden();
        let n = minimal_coupling_depth(&spec);
        let e = prefix_vectors_at(&spec, n, PrefixPolicy::All, 3).unwrap_err();
        assert!(matches!(e, Error::DepthOverflow { .. }));
    }
}
