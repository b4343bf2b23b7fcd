//! The scalar functions `s(·|·)`, `𝒞` and `𝒞*`.

use crate::extreal::ExtReal;

/// `(1+x) log(1+x) − x`, accurate near `x = 0`.
fn entropy_kernel(x: f64) -> f64 {
    if x.abs() < 1e-2 {
        // Σ_{n≥2} (−1)ⁿ xⁿ / (n(n−1))
        let mut term = x * x;
        let mut sum = 0.0;
        for n in 2..16 {
            let nf = n as f64;
            sum += term / (nf * (nf - 1.0));
            term *= -x;
        }
        sum
    } else {
        (1.0 + x) * x.ln_1p() - x
    }
}

/// Relative entropy `s(a|b) = a log(a/b) − a + b` with `s(0|b) = b`,
/// `s(a|0) = ∞` for `a > 0`, and `∞` for any negative argument.
pub fn rel_entropy(a: f64, b: f64) -> ExtReal {
    if a.is_nan() || b.is_nan() || a < 0.0 || b < 0.0 {
        return ExtReal::PosInfinity;
    }
    if a == 0.0 {
        return ExtReal::Finite(b);
    }
    if b == 0.0 || a.is_infinite() {
        return ExtReal::PosInfinity;
    }
    let x = (a - b) / b;
    if x.is_finite() {
        ExtReal::Finite(b * entropy_kernel(x))
    } else {
        ExtReal::Finite(a * (a / b).ln() - a + b)
    }
}

/// `𝒞(a) = a asinh(a/2) − 2√(1+a²/4) + 2`.
pub fn big_c(a: f64) -> f64 {
    let q = a * a / 4.0;
    a * (a / 2.0).asinh() - 2.0 * q / ((1.0 + q).sqrt() + 1.0)
}

/// `𝒞*(p) = 2(cosh p − 1) = 4 sinh²(p/2)`.
pub fn big_c_star(p: f64) -> f64 {
    let s = (p / 2.0).sinh();
    4.0 * s * s
}
