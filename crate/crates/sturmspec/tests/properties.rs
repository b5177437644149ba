use std::sync::OnceLock;

use proptest::prelude::*;

use sturmspec::asymptotics::constants;
use sturmspec::bands::{build_band_tree, BandTree, Coupling, FrequencySpec};
use sturmspec::coding::{admissible, alphabet_letters, hat_matrix, prefix_vectors, Letter, PrefixPolicy, Word};
use sturmspec::dosmeasure::{build_q, dos_weights, tail_alpha};
use sturmspec::multifractal::tau;
use sturmspec::numkernel::PrecisionContext;
use sturmspec::thermo::{bowen_root, build_potentials, PotentialTable};

fn ctx() -> PrecisionContext {
    PrecisionContext::double()
}

/// An admissible free word driven by `choices`.
fn walk(kappa: u32, choices: &[usize]) -> Vec<Letter> {
    let letters = alphabet_letters(kappa);
    let mut out = vec![letters[choices[0] % letters.len()]];
    for &c in &choices[1..] {
        let last = *out.last().unwrap();
        let next: Vec<Letter> = letters.iter().copied().filter(|b| admissible(&last, b)).collect();
        out.push(next[c % next.len()]);
    }
    out
}

fn golden_tree() -> &'static BandTree {
    static TREE: OnceLock<BandTree> = OnceLock::new();
    TREE.get_or_init(|| build_band_tree(&FrequencySpec::golden(), Coupling::new(24.0).unwrap(), 8, &ctx()).unwrap())
}

fn golden_potentials() -> &'static PotentialTable {
    static PT: OnceLock<PotentialTable> = OnceLock::new();
    PT.get_or_init(|| {
        let spec = FrequencySpec::golden();
        let pv = prefix_vectors(&spec, PrefixPolicy::Canonical).unwrap().remove(0);
        let (q, p) = build_q(1, &ctx()).unwrap();
        let depth = golden_tree().depth() - pv.depth;
        build_potentials(golden_tree(), &pv, &q, &p, depth).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn free_words_print_and_parse_back(kappa in 1u32..5, choices in prop::collection::vec(0usize..64, 1..14)) {
        let w = Word::free(walk(kappa, &choices), kappa).unwrap();
        let text = w.to_string();
        prop_assert_eq!(Word::parse_free(&text, kappa).unwrap(), w);
    }

    #[test]
    fn prefixes_undo_children(kappa in 1u32..5, choices in prop::collection::vec(0usize..64, 2..10)) {
        let letters = walk(kappa, &choices);
        let w = Word::free(letters[..letters.len() - 1].to_vec(), kappa).unwrap();
        let c = w.child(*letters.last().unwrap()).unwrap();
        prop_assert_eq!(c.len(), w.len() + 1);
        prop_assert_eq!(c.prefix(w.len()), w);
    }

    #[test]
    fn prefix_digits_round_trip(digits in prop::collection::vec(1u32..9, 1..6), kappa in 1u32..6) {
        let text = digits.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",");
        let spec = FrequencySpec::parse_prefix(&text, kappa).unwrap();
        prop_assert_eq!(spec.prefix(), &digits[..]);
        for n in 1..12i64 {
            let next = spec.digit(n as usize + 1) as i128;
            prop_assert_eq!(spec.q(n + 1).unwrap(), next * spec.q(n).unwrap() + spec.q(n - 1).unwrap());
        }
    }

    #[test]
    fn hat_characteristic_polynomial(kappa in 1u32..60) {
        let cp = hat_matrix(kappa).char_poly();
        let k = kappa as i64;
        // (λ² − κλ − 1)(λ + 1)
        prop_assert_eq!((cp.c2, cp.c1, cp.c0), (1 - k, -(k + 1), -1));
    }

    #[test]
    fn q_is_stochastic_with_stationary_p(kappa in 1u32..12) {
        let (q, p) = build_q(kappa, &ctx()).unwrap();
        for row in &q.q {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&x| x >= 0.0));
        }
        for j in 0..q.dim() {
            let pq: f64 = (0..q.dim()).map(|i| p.0[i] * q.q[i][j]).sum();
            prop_assert!((pq - p.0[j]).abs() < 1e-12);
        }
        let a = tail_alpha(kappa);
        prop_assert!((p.0[kappa as usize + 1] - a / (kappa as f64 * a + 2.0)).abs() < 1e-12);
    }

    #[test]
    fn tau_is_decreasing_and_midpoint_convex(q in -5.0f64..5.0, h in 0.05f64..1.0) {
        let pt = golden_potentials();
        let n = pt.depth();
        let (lo, mid, hi) = (tau(pt, q - h, n, &ctx()).unwrap(), tau(pt, q, n, &ctx()).unwrap(), tau(pt, q + h, n, &ctx()).unwrap());
        prop_assert!(hi < mid && mid < lo);
        prop_assert!(mid <= 0.5 * (lo + hi) + 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn auxiliary_root_has_unit_radius(kappa in 1u32..13) {
        let c = constants(kappa, &ctx()).unwrap();
        prop_assert!((c.radius_at_root - 1.0).abs() < 1e-10);
        prop_assert!(c.rho_hat <= c.varrho + 1e-12 && c.varrho <= c.rho + 1e-12);
    }
}

#[test]
fn tau_at_zero_is_the_bowen_root() {
    let pt = golden_potentials();
    let n = pt.depth();
    assert_eq!(tau(pt, 0.0, n, &ctx()).unwrap(), bowen_root(pt, n, &ctx()).unwrap());
}

#[test]
fn tree_json_round_trip() {
    let tree = golden_tree().truncated(5);
    let back = BandTree::from_json(&tree.to_json()).unwrap();
    assert_eq!(back, tree);
    assert_eq!(back.to_json(), tree.to_json());
}

#[test]
fn dos_weights_are_additive() {
    let tree = golden_tree();
    let w = dos_weights(tree).unwrap();
    for n in 0..tree.depth() {
        assert!((w[n].iter().sum::<f64>() - 1.0).abs() < 1e-10);
        for (i, b) in tree.level(n).iter().enumerate() {
            let kids: f64 = b.children.clone().map(|j| w[n + 1][j]).sum();
            assert!((kids - w[n][i]).abs() < 1e-12, "order {n}, band {i}");
        }
    }
}

/// The fuzz seeds, run through the same round trips as the fuzz targets.
#[test]
fn fuzz_seeds_round_trip() {
    let corpus = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus");
    let read = |target: &str| -> Vec<Vec<u8>> {
        let mut seeds: Vec<Vec<u8>> = std::fs::read_dir(corpus.join(target))
            .unwrap()
            .map(|e| std::fs::read(e.unwrap().path()).unwrap())
            .collect();
        seeds.sort();
        seeds
    };
    let spec = FrequencySpec::new(vec![0, 2, 1], 1).unwrap();
    let mut parsed = 0;
    for seed in read("word_parse") {
        let text = std::str::from_utf8(&seed).unwrap();
        if let Ok(w) = Word::parse_rooted(text, &spec) {
            assert_eq!(Word::parse_rooted(&w.to_string(), &spec).unwrap(), w);
            parsed += 1;
        }
        if let Ok(w) = Word::parse_free(text, 2) {
            assert_eq!(Word::parse_free(&w.to_string(), 2).unwrap(), w);
            parsed += 1;
        }
    }
    assert!(parsed >= 2, "word seeds should include valid words");
    let mut parsed = 0;
    for seed in read("prefix_parse") {
        let kappa = u32::from(seed[0] % 12);
        if let Ok(s) = FrequencySpec::parse_prefix(std::str::from_utf8(&seed[1..]).unwrap(), kappa) {
            let joined: Vec<String> = s.prefix().iter().map(u32::to_string).collect();
            assert_eq!(FrequencySpec::parse_prefix(&joined.join(","), kappa).unwrap(), s);
            parsed += 1;
        }
    }
    assert!(parsed >= 3, "prefix seeds should include valid specs");
    let mut parsed = 0;
    for seed in read("bandtree_json") {
        if let Ok(t) = BandTree::from_json(std::str::from_utf8(&seed).unwrap()) {
            assert_eq!(BandTree::from_json(&t.to_json()).unwrap(), t);
            parsed += 1;
        }
    }
    assert!(parsed >= 1, "tree seeds should include a valid document");
}
