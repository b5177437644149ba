use rug::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Frequency `[a0; a1, ..., a_nhat, kappa, kappa, ...]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrequencySpec {
    prefix: Vec<u32>,
    kappa: u32,
}

impl FrequencySpec {
    /// `prefix` holds `a0, ..., a_nhat`; later digits equal `kappa`.
    pub fn new(prefix: Vec<u32>, kappa: u32) -> Result<Self> {
        if kappa == 0 {
            return Err(Error::Invalid("tail constant kappa must be positive".into()));
        }
        if prefix.is_empty() {
            return Err(Error::Invalid("prefix must contain at least a0".into()));
        }
        if let Some(i) = prefix.iter().skip(1).position(|&a| a == 0) {
            return Err(Error::Invalid(format!(
                "continued fraction digit a{} must be positive",
                i + 1
            )));
        }
        Ok(Self { prefix, kappa })
    }

    /// `alpha_kappa = [kappa; kappa, kappa, ...]`.
    pub fn constant_type(kappa: u32) -> Result<Self> {
        Self::new(vec![kappa], kappa)
    }

    pub fn golden() -> Self {
        Self::constant_type(1).expect("kappa = 1 is valid")
    }

    /// Parses a comma separated digit list `"a0,a1,..."`.
    pub fn parse_prefix(text: &str, kappa: u32) -> Result<Self> {
        let digits = text
            .split(',')
            .map(|d| {
                let d = d.trim();
                d.parse::<u32>()
                    .map_err(|e| Error::Parse(format!("bad digit {d:?} in prefix: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(digits, kappa)
    }

    pub fn kappa(&self) -> u32 {
        self.kappa
    }

    pub fn prefix(&self) -> &[u32] {
        &self.prefix
    }

    /// Index of the last prefix digit; digits after it are `kappa`.
    pub fn n_hat(&self) -> usize {
        self.prefix.len() - 1
    }

    /// Continued fraction digit `a_i`.
    pub fn digit(&self, i: usize) -> u32 {
        self.prefix.get(i).copied().unwrap_or(self.kappa)
    }

    /// `(q_{-1}, ..., q_n)` shifted so that index `k` holds `q_{k-1}`.
    fn recurrence(&self, n: usize, init: (i128, i128)) -> Result<Vec<i128>> {
        let mut out = vec![init.0, init.1];
        for k in 1..=n {
            let a = self.digit(k) as i128;
            let next = a
                .checked_mul(out[k])
                .and_then(|v| v.checked_add(out[k - 1]))
                .ok_or_else(|| Error::Invalid(format!("convergent overflow at order {k}")))?;
            out.push(next);
        }
        Ok(out)
    }

    /// Denominator `q_n` for `n >= -1`.
    pub fn q(&self, n: i64) -> Result<i128> {
        assert!(n >= -1);
        let seq = self.recurrence(n.max(0) as usize, (0, 1))?;
        Ok(seq[(n + 1) as usize])
    }

    /// Numerator `p_n` of the convergent of the fractional part, `n >= -1`.
    pub fn p(&self, n: i64) -> Result<i128> {
        assert!(n >= -1);
        let seq = self.recurrence(n.max(0) as usize, (1, 0))?;
        Ok(seq[(n + 1) as usize])
    }

    /// `q_0, ..., q_n`.
    pub fn q_sequence(&self, n: usize) -> Result<Vec<i128>> {
        Ok(self.recurrence(n, (0, 1))?[1..].to_vec())
    }

    /// `p_0, ..., p_n`.
    pub fn p_sequence(&self, n: usize) -> Result<Vec<i128>> {
        Ok(self.recurrence(n, (1, 0))?[1..].to_vec())
    }

    /// Value of the continued fraction at `prec` bits.
    pub fn alpha(&self, prec: u32) -> Float {
        let k = self.kappa as f64;
        let mut tail = Float::with_val(prec, k * k + 4.0).sqrt();
        tail += k;
        tail /= 2;
        // tail = alpha_kappa = [kappa; kappa, ...]
        let mut x = tail;
        for &a in self.prefix.iter().skip(1).rev() {
            x = Float::with_val(prec, x.recip_ref()) + a;
        }
        Float::with_val(prec, x.recip_ref()) + self.prefix[0]
    }

    pub fn alpha_f64(&self) -> f64 {
        self.alpha(128).to_f64()
    }

    /// `alpha_kappa = (kappa + sqrt(kappa^2 + 4)) / 2`, the Perron value of the tail.
    pub fn tail_alpha(&self) -> f64 {
        let k = self.kappa as f64;
        (k + (k * k + 4.0).sqrt()) / 2.0
    }

    /// Exact `floor(k * {alpha})` for `k >= 0`, certified by two consecutive convergents
    /// which sit on opposite sides of `{alpha}`.
    pub fn floor_multiple(&self, k: u64) -> Result<i128> {
        if k == 0 {
            return Ok(0);
        }
        let mut n = 1usize;
        loop {
            let p = self.p_sequence(n + 1)?;
            let q = self.q_sequence(n + 1)?;
            let k = k as i128;
            let f1 = (k * p[n]).div_euclid(q[n]);
            let f2 = (k * p[n + 1]).div_euclid(q[n + 1]);
            if f1 == f2 && q[n] > k {
                return Ok(f1);
            }
            n += 1;
            if n > 200 {
                return Err(Error::PrecisionExhausted(
                    "convergents failed to certify a floor".into(),
                ));
            }
        }
    }

    /// Sturmian potential indicator `v_k / V` for `k = 1..=len`: 1 exactly when
    /// `k {alpha} mod 1` lies in `[1 - {alpha}, 1)`.
    pub fn potential_indicator(&self, len: usize) -> Result<Vec<u8>> {
        if len == 0 {
            return Ok(Vec::new());
        }
        // Choose convergents whose denominators exceed len + 1, then certify each floor.
        let mut n = 1usize;
        let (p, q) = loop {
            let q = self.q_sequence(n + 1)?;
            if q[n] > len as i128 + 1 {
                break (self.p_sequence(n + 1)?, q);
            }
            n += 1;
        };
        let floor_at = |k: i128| -> Result<i128> {
            let f1 = (k * p[n]).div_euclid(q[n]);
            let f2 = (k * p[n + 1]).div_euclid(q[n + 1]);
            if f1 == f2 {
                Ok(f1)
            } else {
                self.floor_multiple(k as u64)
            }
        };
        let mut out = Vec::with_capacity(len);
        let mut prev = floor_at(1)?;
        for k in 1..=len as i128 {
            let next = floor_at(k + 1)?;
            out.push((next - prev) as u8);
            prev = next;
        }
        Ok(out)
    }
}

impl std::fmt::Display for FrequencySpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let digits: Vec<String> = self.prefix.iter().map(|d| d.to_string()).collect();
        write!(f, "[{}; tail {}]", digits.join(","), self.kappa)
    }
}

/// Coupling constant of the potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coupling(f64);

impl Coupling {
    pub fn new(v: f64) -> Result<Self> {
        if v.is_nan() || v <= 4.0 || !v.is_finite() {
            return Err(Error::Invalid(format!("coupling must exceed 4, got {v}")));
        }
        Ok(Self(v))
    }

    pub fn value(&self) -> f64 {
        self.0
    }

    /// The estimators for dimensions and measures assume V > 20.
    pub fn in_estimator_range(&self) -> bool {
        self.0 > 20.0
    }
}
