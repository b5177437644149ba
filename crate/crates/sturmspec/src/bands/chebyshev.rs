use std::f64::consts::PI;

/// `|S_{p+1}(2 cos θ)| - 1/4` at `θ = (l + c)π/(p+1)`.
fn excess(p: u32, l: u32, c: f64) -> f64 {
    let theta = (l as f64 + c) * PI / (p as f64 + 1.0);
    (((p + 1) as f64 * theta).sin() / theta.sin()).abs() - 0.25
}

/// Largest `c` in `[0, 0.1]` (or smallest in `[-0.1, 0]` when `dir < 0`) keeping
/// every point between 0 and `c` inside the interval.
fn reach(p: u32, l: u32, dir: f64) -> f64 {
    const STEPS: usize = 1000;
    let mut last_ok = 0.0;
    for k in 1..=STEPS {
        let c = dir * 0.1 * k as f64 / STEPS as f64;
        if excess(p, l, c) > 0.0 {
            let (mut a, mut b) = (last_ok, c);
            for _ in 0..60 {
                let m = 0.5 * (a + b);
                if excess(p, l, m) > 0.0 {
                    b = m;
                } else {
                    a = m;
                }
            }
            return a;
        }
        last_ok = c;
    }
    dir * 0.1
}

/// Closed hull `[lo, hi]` of the Chebyshev interval
/// `{2cos((l+c)π/(p+1)) : |c| <= 1/10, |S_{p+1}| <= 1/4}`, for `1 <= l <= p`.
pub fn chebyshev_interval(p: u32, l: u32) -> (f64, f64) {
    assert!(l >= 1 && l <= p, "chebyshev interval index out of range");
    let up = reach(p, l, 1.0);
    let down = reach(p, l, -1.0);
    let at = |c: f64| 2.0 * ((l as f64 + c) * PI / (p as f64 + 1.0)).cos();
    (at(up), at(down))
}
