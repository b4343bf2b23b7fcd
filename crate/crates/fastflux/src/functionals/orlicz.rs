use super::scalar::big_c;
use crate::linalg::trapezoid;

/// `Σ_r ∫ 𝒞(a j_r) dt` by trapezoid.
pub fn modular(grid: &[f64], series: &[Vec<f64>], a: f64) -> f64 {
    series
        .iter()
        .map(|j| {
            let v: Vec<f64> = j.iter().map(|x| big_c(a * x)).collect();
            trapezoid(grid, &v)
        })
        .sum()
}

/// Amemiya norm `inf_{a>0} (1 + Σ∫𝒞(a j))/a`, by golden-section search in
/// `ln a ∈ [−18, 18]`. `series[r]` holds the samples of edge `r` on `grid`.
pub fn orlicz_norm(grid: &[f64], series: &[Vec<f64>]) -> f64 {
    if series.iter().flatten().all(|v| *v == 0.0) {
        return 0.0;
    }
    let f = |la: f64| {
        let a = la.exp();
        (1.0 + modular(grid, series, a)) / a
    };
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (-18.0f64, 18.0f64);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > 1e-10 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = f(x2);
        }
    }
    f1.min(f2).min(f(lo)).min(f(hi))
}
