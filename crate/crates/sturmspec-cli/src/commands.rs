use serde_json::json;
use sturmspec::asymptotics::{constants, inequality_table};
use sturmspec::bands::{audit_tree, estimate_bounds_profile, gaps, BandEngine, BandTree, TreeDocument};
use sturmspec::coding::{hat_matrix, incidence_matrix, prefix_vectors, PrefixPolicy};
use sturmspec::dosmeasure::{
    build_q, dos_weights, eigen_tolerance, match_eigenvalues, periodic_eigenvalues, sample_letter_frequencies, support_matches_incidence,
    tail_alpha, PERIODIC_CAP,
};
use sturmspec::multifractal::{legendre, tau_curve, LegendreSpectrum};
use sturmspec::numkernel::{char_poly_exact, spectral_radius, PrecisionContext};
use sturmspec::thermo::{compare_prefix_vectors, run_pipeline, PipelineRun};
use sturmspec::Error;

use crate::cache;
use crate::config::RunConfig;
use crate::error::AppError;
use crate::output::{num, Report, Table};

pub const SILVER_NOTE: &str =
    "κ = 2 (silver type): the three large-coupling constants coincide, so the exponents cannot be separated asymptotically";
const SAMPLE_STEPS: usize = 100_000;
const Q_MAX: f64 = 5.0;
const Q_STEP: f64 = 0.1;

fn notes(cfg: &RunConfig) -> Vec<String> {
    let mut out = cfg.warnings.clone();
    if cfg.kappa() == 2 {
        out.push(SILVER_NOTE.into());
    }
    out
}

fn level_table(tree: &BandTree, weights: Option<&[Vec<f64>]>) -> Table {
    let mut cols = vec!["order", "word", "type", "lo", "hi"];
    if weights.is_some() {
        cols.push("weight");
    }
    let mut t = Table::new(if weights.is_some() { "dos_weights" } else { "bands" }, &cols);
    for (n, level) in tree.levels.iter().enumerate() {
        for (i, b) in level.iter().enumerate() {
            let mut row = vec![
                n.to_string(),
                b.word.to_string(),
                b.band_type().as_str().to_string(),
                num(b.lo_f64()),
                num(b.hi_f64()),
            ];
            if let Some(w) = weights {
                row.push(num(w[n][i]));
            }
            t.push(row);
        }
    }
    t
}

pub fn bands(cfg: &RunConfig) -> Result<Report, AppError> {
    let (tree, status) = cache::band_tree(cfg, cfg.depth)?;
    let audit = audit_tree(&tree)?;
    let mut gap_table = Table::new("gap_ratios", &["order", "gaps", "min_ratio"]);
    let mut gap_json = Vec::new();
    for n in 0..tree.depth() {
        let g = gaps(&tree, n)?;
        gap_table.push(vec![n.to_string(), g.gaps.len().to_string(), num(g.min_ratio)]);
        gap_json.push(json!({"order": n, "gaps": g.gaps.len(), "min_ratio": g.min_ratio}));
    }
    let counts: Vec<usize> = tree.levels.iter().map(Vec::len).collect();
    Ok(Report {
        json: json!({
            "cache": status.as_str(),
            "level_counts": counts,
            "audit": audit,
            "gap_ratios": gap_json,
            "tree": TreeDocument::from_tree(&tree),
        }),
        tables: vec![level_table(&tree, None), gap_table],
    })
}

fn canonical_run(cfg: &RunConfig) -> Result<PipelineRun, AppError> {
    let pv = prefix_vectors(&cfg.spec, PrefixPolicy::Canonical)?.remove(0);
    if cfg.depth < 3 {
        return Err(AppError::Validation(format!("exponents need --depth 3 or more, got {}", cfg.depth)));
    }
    Ok(run_pipeline(&cfg.spec, cfg.coupling, &pv, cfg.depth, &cfg.ctx)?)
}

pub fn dims(cfg: &RunConfig) -> Result<Report, AppError> {
    let run = canonical_run(cfg)?;
    let e = &run.estimates;
    let mut trend = Table::new(
        "trend",
        &["n", "s_plain", "s_value", "d_plain", "d_value", "gamma_plain", "gamma_value"],
    );
    for i in 0..e.s_hat.trend.len() {
        let (n, sp, sv) = e.s_hat.trend[i];
        let (_, dp, dv) = e.d_hat.trend[i];
        let (_, gp, gv) = e.gamma_hat.trend[i];
        trend.push([n as f64, sp, sv, dp, dv, gp, gv].iter().enumerate().map(|(k, x)| if k == 0 { n.to_string() } else { num(*x) }).collect());
    }
    let mut doc = json!({
        "estimates": e,
        "mantissa_bits": run.mantissa_bits,
        "trace_evaluations": run.evaluations,
        "words": run.potentials.level(cfg.depth)?.len(),
        "notes": notes(cfg),
    });
    if cfg.compare_prefix_vectors {
        let a = prefix_vectors(&cfg.spec, PrefixPolicy::Canonical)?.remove(0);
        let b = prefix_vectors(&cfg.spec, PrefixPolicy::Largest)?.remove(0);
        let (q, p) = build_q(cfg.kappa(), &cfg.ctx)?;
        let mut engine = BandEngine::new(&cfg.spec, cfg.coupling, a.depth.max(b.depth) + cfg.depth, &cfg.ctx, true)?;
        let dev = compare_prefix_vectors(&mut engine, &a, &b, cfg.depth, &q, &p)?;
        doc["prefix_deviation"] = json!({
            "first": a.words.iter().map(|w| w.to_string()).collect::<Vec<_>>(),
            "second": b.words.iter().map(|w| w.to_string()).collect::<Vec<_>>(),
            "deviation": dev,
            "max": dev.max(),
        });
    }
    Ok(Report {
        json: doc,
        tables: vec![trend],
    })
}

pub fn dos(cfg: &RunConfig) -> Result<Report, AppError> {
    let (tree, status) = cache::band_tree(cfg, cfg.depth)?;
    let (q, p) = build_q(cfg.kappa(), &cfg.ctx)?;
    let weights = dos_weights(&tree)?;
    let sums: Vec<f64> = weights.iter().map(|l| l.iter().sum()).collect();
    let sample = sample_letter_frequencies(&q, &p, SAMPLE_STEPS, cfg.seed)?;
    let mut qt = Table::new("transition", &["from", "to", "q"]);
    for (i, row) in q.q.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            qt.push(vec![(i + 1).to_string(), (j + 1).to_string(), num(v)]);
        }
    }
    Ok(Report {
        json: json!({
            "cache": status.as_str(),
            "alpha": q.alpha,
            "type_constants": q.type_constants,
            "transition_matrix": q.q,
            "stationary": p.0,
            "level_sums": sums,
            "letter_sample": {
                "steps": sample.steps,
                "seed": cfg.seed,
                "frequency": sample.frequency,
                "std_error": sample.std_error,
            },
            "notes": notes(cfg),
        }),
        tables: vec![level_table(&tree, Some(&weights)), qt],
    })
}

/// First grid crossing of `τ*(β) = β`, linearly interpolated.
pub fn tangency(spec: &LegendreSpectrum) -> Option<f64> {
    let g: Vec<f64> = spec.beta.iter().zip(&spec.tau_star).map(|(b, t)| t - b).collect();
    (1..g.len()).find(|&i| g[i - 1] >= 0.0 && g[i] <= 0.0 || g[i - 1] <= 0.0 && g[i] >= 0.0).map(|i| {
        let (b0, b1) = (spec.beta[i - 1], spec.beta[i]);
        if g[i] == g[i - 1] {
            b0
        } else {
            b0 + (b1 - b0) * g[i - 1] / (g[i - 1] - g[i])
        }
    })
}

pub fn multifractal(cfg: &RunConfig) -> Result<Report, AppError> {
    let run = canonical_run(cfg)?;
    let curve = tau_curve(&run.potentials, cfg.depth, Q_MAX, Q_STEP, &cfg.ctx)?;
    let spec = legendre(&curve)?;
    let mut tt = Table::new("tau", &["q", "tau"]);
    for (q, t) in curve.q.iter().zip(&curve.tau) {
        tt.push(vec![num(*q), num(*t)]);
    }
    let mut st = Table::new("tau_star", &["beta", "tau_star"]);
    for (b, t) in spec.beta.iter().zip(&spec.tau_star) {
        st.push(vec![num(*b), num(*t)]);
    }
    let e = &run.estimates;
    Ok(Report {
        json: json!({
            "depth": cfg.depth,
            "beta_star": spec.beta_star,
            "beta_sup": spec.beta_sup,
            "endpoints_extrapolated": spec.endpoints_extrapolated,
            "tangency_beta": tangency(&spec),
            "tau_at_zero": curve.at(0.0),
            "tau_at_one": curve.at(1.0),
            "s_hat_plain": e.s_hat.plain,
            "d_hat": e.d_hat.value,
            "tau_star_at_d_hat": curve.legendre_at(e.d_hat.value),
            "tau_star_max": spec.max(),
            "convexity_defect": curve.convexity_defect(),
            "notes": notes(cfg),
        }),
        tables: vec![tt, st],
    })
}

pub fn asymptotics(cfg: &RunConfig) -> Result<Report, AppError> {
    let c = constants(cfg.kappa(), &cfg.ctx)?;
    let rows = inequality_table(cfg.kappa_max, &cfg.ctx)?;
    let mut t = Table::new(
        "inequalities",
        &["kappa", "rho_hat", "varrho", "rho", "hat_below_varrho", "varrho_below_rho", "tied"],
    );
    for r in &rows {
        t.push(vec![
            r.kappa.to_string(),
            num(r.rho_hat),
            num(r.varrho),
            num(r.rho),
            r.hat_below_varrho.to_string(),
            r.varrho_below_rho.to_string(),
            r.tied.to_string(),
        ]);
    }
    Ok(Report {
        json: json!({ "constants": c, "inequalities": rows, "notes": notes(cfg) }),
        tables: vec![t],
    })
}

struct Checks(Vec<(String, bool, String)>);

impl Checks {
    fn add(&mut self, name: &str, ok: bool, detail: impl Into<String>) {
        self.0.push((name.into(), ok, detail.into()));
    }

    fn record<T>(&mut self, name: &str, r: Result<T, Error>, f: impl FnOnce(T) -> (bool, String)) {
        match r {
            Ok(v) => {
                let (ok, d) = f(v);
                self.add(name, ok, d)
            }
            Err(e) => self.add(name, false, e.to_string()),
        }
    }
}

/// Runs the invariant suite. The report lists every check; the error carries
/// the count of failures.
pub fn verify(cfg: &RunConfig) -> Result<(Report, usize), AppError> {
    let k = cfg.kappa();
    let mut c = Checks(Vec::new());
    let alpha = tail_alpha(k);

    let hat = hat_matrix(k);
    let cp = hat.char_poly();
    let ki = k as i64;
    c.add(
        "hat_char_poly",
        (cp.c2, cp.c1, cp.c0) == (1 - ki, -(ki + 1), -1),
        format!("λ³ + {}λ² + {}λ + {}", cp.c2, cp.c1, cp.c0),
    );
    let a = incidence_matrix(k, k);
    let mut want = vec![1i128, 1 - ki as i128, -(ki as i128 + 1), -1];
    want.resize(2 * k as usize + 3, 0);
    c.record("incidence_char_poly", char_poly_exact(&a.to_i64()), |got| {
        (got == want, format!("{got:?}"))
    });
    let tight = PrecisionContext::new(53, 1e-14, 1e-15)?;
    for (name, m) in [("hat_perron", hat.to_f64()), ("incidence_perron", a.to_f64())] {
        c.record(name, spectral_radius(&m, &tight), |r| ((r - alpha).abs() < 1e-12, format!("{r} vs {alpha}")));
    }

    match build_q(k, &cfg.ctx) {
        Ok((q, p)) => {
            let prim = q.primitivity(10);
            c.add("q_matrix", prim.is_some() && support_matches_incidence(&q), format!("primitive at power {prim:?}"));
            c.record("letter_sample", sample_letter_frequencies(&q, &p, SAMPLE_STEPS, cfg.seed), |s| {
                // the (II,1) letter
                let j = k as usize + 1;
                let z = (s.frequency[j] - p.0[j]).abs() / s.std_error[j];
                (z < 3.0, format!("|z| = {z:.3} over {} steps", s.steps))
            });
        }
        Err(e) => c.add("q_matrix", false, e.to_string()),
    }

    match cache::band_tree(cfg, cfg.depth) {
        Ok((tree, _)) => verify_tree(cfg, &tree, &mut c),
        Err(e) => c.add("band_tree", false, e.to_string()),
    }

    c.record("asymptotic_constants", constants(k, &cfg.ctx), |a| {
        let mut ok = a.residual < 1e-25 && (a.radius_at_root - 1.0).abs() < 1e-10;
        if k == 2 {
            ok &= (a.rho_hat - a.varrho).abs() < 1e-12 && (a.varrho - a.rho).abs() < 1e-12;
        } else {
            ok &= a.rho_hat < a.varrho && a.varrho < a.rho;
        }
        (ok, format!("rho_hat {} varrho {} rho {}", a.rho_hat, a.varrho, a.rho))
    });

    let mut t = Table::new("checks", &["check", "passed", "detail"]);
    for (n, ok, d) in &c.0 {
        t.push(vec![n.clone(), ok.to_string(), d.clone()]);
    }
    let failures = c.0.iter().filter(|x| !x.1).count();
    let items: Vec<_> = c.0.iter().map(|(n, ok, d)| json!({"check": n, "passed": ok, "detail": d})).collect();
    Ok((
        Report {
            json: json!({ "checks": items, "failures": failures, "notes": notes(cfg) }),
            tables: vec![t],
        },
        failures,
    ))
}

fn verify_tree(cfg: &RunConfig, tree: &BandTree, c: &mut Checks) {
    c.record("band_counting", audit_tree(tree), |a| {
        let ok = a.passed() && a.max_bracket <= 1e-12;
        (ok, format!("{} bands, largest relative bracket {:e}", a.bands, a.max_bracket))
    });
    let mut detail = Vec::new();
    let mut ok = true;
    for order in 1..=tree.depth().min(8) {
        match cfg.spec.q(order as i64) {
            Ok(q) if q as usize <= PERIODIC_CAP => {}
            _ => continue,
        }
        match periodic_eigenvalues(&cfg.spec, cfg.coupling, order, PERIODIC_CAP) {
            Ok(eigs) => {
                let m = match_eigenvalues(tree, order, &eigs, eigen_tolerance(cfg.coupling));
                ok &= m.misses == 0 && m.doubles == 0 && m.strays == 0 && m.bands == m.eigenvalues;
                detail.push(format!("k={order}: {} bands, {} misses, {} doubles, {} strays", m.bands, m.misses, m.doubles, m.strays));
            }
            Err(e) => {
                ok = false;
                detail.push(format!("k={order}: {e}"));
            }
        }
    }
    c.add("one_eigenvalue_per_band", ok, detail.join(", "));
    match estimate_bounds_profile(tree, cfg.coupling) {
        Ok(p) => match p.sandwich {
            Some(s) => c.add(
                "length_sandwich",
                true,
                format!("{} bands, margins {:.3} / {:.3}", s.checked, s.lower_margin, s.upper_margin),
            ),
            None => c.add("length_sandwich", true, "not applicable to this prefix or V"),
        },
        Err(e @ Error::DepthMismatch(_)) => c.add("length_sandwich", true, format!("skipped: {e}")),
        Err(e) => c.add("length_sandwich", false, e.to_string()),
    }
    let ratios: Vec<f64> = (1..tree.depth()).filter_map(|n| gaps(tree, n).ok()).map(|g| g.min_ratio).filter(|r| r.is_finite()).collect();
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    c.add("gap_ratios", ratios.is_empty() || min > 0.0, format!("smallest ratio {min:e}"));
}
