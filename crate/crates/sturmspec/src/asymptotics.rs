//! Large-coupling limits of the three exponents times `ln V`.

use rug::ops::Pow;
use rug::Float;
use serde::Serialize;

use crate::bands::{Coupling, FrequencySpec};
use crate::coding::PrefixVector;
use crate::error::{Error, Result};
use crate::numkernel::{bisect_root, spectral_radius, PrecisionContext};
use crate::thermo::run_pipeline;

const ROOT_BITS: u32 = 256;
/// Separation below which two constants count as tied.
pub const TIE_TOL: f64 = 1e-12;
/// Separation above which an inequality counts as strict.
pub const STRICT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticConstants {
    pub kappa: u32,
    pub alpha: f64,
    /// Limit for the optimal Hölder exponent.
    pub rho_hat: f64,
    /// Limit for the DOS dimension.
    pub varrho: f64,
    /// Limit for the spectral dimension, `ln y`.
    pub rho: f64,
    pub x: f64,
    pub y: f64,
    /// `|F(y)|` at the extended-precision root.
    pub residual: f64,
    /// Spectral radius of `R(x)` at the root; 1 in exact arithmetic.
    pub radius_at_root: f64,
}

/// `F(y) = y^{κ+1} - (κ-1) y^κ - (κ+1) y - 1`.
pub fn polynomial(kappa: u32, y: &Float) -> Float {
    let k = kappa as i64;
    let yk = Float::with_val(y.prec(), y.pow(kappa));
    let mut f = Float::with_val(y.prec(), &yk * y);
    f -= Float::with_val(y.prec(), &yk * (k - 1));
    f -= Float::with_val(y.prec(), y * (k + 1));
    f - 1u32
}

pub fn r_matrix(kappa: u32, x: f64) -> Vec<Vec<f64>> {
    let k = kappa as f64;
    vec![
        vec![0.0, x.powi(kappa as i32 - 1), 0.0],
        vec![(k + 1.0) * x, 0.0, k * x],
        vec![k * x, 0.0, (k - 1.0) * x],
    ]
}

/// Spectral radius of `R(x)` for `x` in `[0, 1]`.
pub fn r_radius(kappa: u32, x: f64, ctx: &PrecisionContext) -> Result<f64> {
    if x == 0.0 {
        return Ok(0.0);
    }
    let tight = PrecisionContext { abs_tol: ctx.abs_tol.min(1e-14), ..*ctx };
    spectral_radius(&r_matrix(kappa, x), &tight)
}

/// `(κα+2) / (2α(α-1))`, the factor in front of `ln α` in the DOS limit.
pub fn dos_factor(kappa: u32) -> f64 {
    let a = crate::dosmeasure::tail_alpha(kappa);
    (kappa as f64 * a + 2.0) / (2.0 * a * (a - 1.0))
}

pub fn constants(kappa: u32, ctx: &PrecisionContext) -> Result<AsymptoticConstants> {
    if kappa == 0 {
        return Err(Error::Invalid("κ must be positive".into()));
    }
    let alpha = crate::dosmeasure::tail_alpha(kappa);
    let k = kappa as f64;
    let rho_hat = if kappa == 1 { 1.5 * alpha.ln() } else { 2.0 / k * alpha.ln() };
    let varrho = dos_factor(kappa) * alpha.ln();

    let rctx = PrecisionContext::extended(ROOT_BITS);
    let lo = Float::with_val(ROOT_BITS, (kappa.max(2) - 1) as f64);
    let hi = Float::with_val(ROOT_BITS, (kappa + 2) as f64);
    let y = bisect_root(|y: &Float| polynomial(kappa, y), lo, hi, &rctx)?;
    let residual = polynomial(kappa, &y).abs().to_f64();
    let rho = Float::with_val(ROOT_BITS, y.ln_ref()).to_f64();
    let x = Float::with_val(ROOT_BITS, y.recip_ref()).to_f64();
    let radius_at_root = r_radius(kappa, x, ctx)?;
    Ok(AsymptoticConstants {
        kappa,
        alpha,
        rho_hat,
        varrho,
        rho,
        x,
        y: y.to_f64(),
        residual,
        radius_at_root,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityRow {
    pub kappa: u32,
    pub rho_hat: f64,
    pub varrho: f64,
    pub rho: f64,
    pub hat_below_varrho: bool,
    pub varrho_below_rho: bool,
    pub tied: bool,
}

pub fn inequality_table(kappa_max: u32, ctx: &PrecisionContext) -> Result<Vec<InequalityRow>> {
    if kappa_max < 2 {
        return Err(Error::Invalid(format!("κ_max must be at least 2, got {kappa_max}")));
    }
    (1..=kappa_max)
        .map(|kappa| {
            let c = constants(kappa, ctx)?;
            Ok(InequalityRow {
                kappa,
                rho_hat: c.rho_hat,
                varrho: c.varrho,
                rho: c.rho,
                hat_below_varrho: c.varrho - c.rho_hat > STRICT_TOL,
                varrho_below_rho: c.rho - c.varrho > STRICT_TOL,
                tied: (c.varrho - c.rho_hat).abs() < TIE_TOL && (c.rho - c.varrho).abs() < TIE_TOL,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    #[serde(rename = "V")]
    pub coupling: f64,
    pub s_scaled: f64,
    pub d_scaled: f64,
    pub gamma_scaled: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub constants: AsymptoticConstants,
    pub depth: usize,
    pub rows: Vec<ConvergenceRow>,
    /// Errors against `(ρ, ϱ, ϱ̂)` shrink from row to row.
    pub monotone: [bool; 3],
}

impl ConvergenceRow {
    pub fn errors(&self, c: &AsymptoticConstants) -> [f64; 3] {
        [
            (self.s_scaled - c.rho).abs(),
            (self.d_scaled - c.varrho).abs(),
            (self.gamma_scaled - c.rho_hat).abs(),
        ]
    }
}

pub fn asymptotic_convergence_report(
    spec: &FrequencySpec,
    pv: &PrefixVector,
    couplings: &[f64],
    depth: usize,
    ctx: &PrecisionContext,
) -> Result<ConvergenceReport> {
    let constants = constants(spec.kappa(), ctx)?;
    let mut rows = Vec::with_capacity(couplings.len());
    for &v in couplings {
        let coupling = Coupling::new(v)?;
        if !coupling.in_estimator_range() {
            return Err(Error::Invalid(format!("convergence rows need V > 20, got {v}")));
        }
        let e = run_pipeline(spec, coupling, pv, depth, ctx)?.estimates;
        let l = v.ln();
        rows.push(ConvergenceRow {
            coupling: v,
            s_scaled: e.s_hat.value * l,
            d_scaled: e.d_hat.value * l,
            gamma_scaled: e.gamma_hat.value * l,
        });
    }
    let mut monotone = [true; 3];
    for w in rows.windows(2) {
        let (a, b) = (w[0].errors(&constants), w[1].errors(&constants));
        for i in 0..3 {
            monotone[i] &= b[i] < a[i];
        }
    }
    Ok(ConvergenceReport {
        constants,
        depth,
        rows,
        monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> PrecisionContext {
        PrecisionContext::double()
    }

    #[test]
    fn silver_constants_coincide() {
        let c = constants(2, &ctx()).unwrap();
        let l = (1.0 + 2f64.sqrt()).ln();
        for v in [c.rho_hat, c.varrho, c.rho] {
            assert!((v - l).abs() < 1e-12, "{v}");
        }
        assert!((c.y - (1.0 + 2f64.sqrt())).abs() < 1e-12);
        let exact = Float::with_val(256, 2u32).sqrt() + 1u32;
        assert!(polynomial(2, &exact).abs().to_f64() < 1e-70);
    }

    #[test]
    fn golden_constants() {
        let c = constants(1, &ctx()).unwrap();
        let a = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((c.varrho - (5.0 + 5f64.sqrt()) / 4.0 * a.ln()).abs() < 1e-12);
        assert!((c.rho - (1.0 + 2f64.sqrt()).ln()).abs() < 1e-12);
        assert!((c.rho_hat - 0.721818).abs() < 1e-6);
    }

    #[test]
    fn roots_and_radii() {
        for kappa in 1..=10 {
            let c = constants(kappa, &ctx()).unwrap();
            assert!(c.residual < 1e-25, "κ={kappa}: {}", c.residual);
            assert!((c.radius_at_root - 1.0).abs() < 1e-10, "κ={kappa}: {}", c.radius_at_root);
            let k = kappa as f64;
            assert!(k < c.alpha && c.alpha < k + 1.0);
            if kappa >= 3 {
                assert!(k - 1.0 < c.y && c.y < k);
                let f = |y: f64| polynomial(kappa, &Float::with_val(128, y)).to_f64();
                assert_eq!(f(k - 1.0), -(k * k));
                assert!(f(k) > 0.0);
            }
            assert!((r_radius(kappa, 1.0, &ctx()).unwrap() - c.alpha).abs() < 1e-10);
        }
        let y3 = constants(3, &ctx()).unwrap().y;
        assert!((y3 - 2.63).abs() < 0.01);
    }

    #[test]
    fn radius_increases() {
        for kappa in [1, 2, 3, 6] {
            let r: Vec<f64> = (1..=100).map(|i| r_radius(kappa, i as f64 / 100.0, &ctx()).unwrap()).collect();
            assert!(r.windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn inequality_rows() {
        let t = inequality_table(8, &ctx()).unwrap();
        assert_eq!(t.len(), 8);
        for row in &t {
            if row.kappa == 2 {
                assert!(row.tied && !row.hat_below_varrho && !row.varrho_below_rho);
            } else {
                assert!(row.hat_below_varrho && row.varrho_below_rho, "{row:?}");
                assert!(row.varrho - row.rho_hat > 1e-6 && row.rho - row.varrho > 1e-6);
            }
        }
        let r8 = &t[7];
        assert!(r8.varrho.exp() <= 9f64.powf(2.0 / 3.0) && 9f64.powf(2.0 / 3.0) < 7.0 && 7.0 < r8.rho.exp());
        for kappa in 8..=30 {
            assert!(dos_factor(kappa) <= 2.0 / 3.0);
        }
        assert!(inequality_table(1, &ctx()).is_err());
    }
}
