//! Correlation statistics used by the similarity evaluation.

use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

/// `u·v / (‖u‖‖v‖)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Shape(format!("cosine of lengths {} and {}", u.len(), v.len())));
    }
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 || !nu.is_finite() || !nv.is_finite() {
        return Err(Error::Stats("undefined cosine"));
    }
    Ok((crate::tensor::dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Sample Pearson correlation, computed on mean-centred data.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("pearson of lengths {} and {}", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::Stats("pearson correlation needs at least 3 points"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Stats("degenerate input"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// First-order partial correlation of x and y controlling for z.
pub fn partial_r(r_xy: f64, r_xz: f64, r_yz: f64) -> Result<f64> {
    if r_xz.abs() >= 1.0 || r_yz.abs() >= 1.0 {
        return Err(Error::Stats("control variable is perfectly correlated"));
    }
    let denom = ((1.0 - r_xz * r_xz) * (1.0 - r_yz * r_yz)).sqrt();
    Ok(((r_xy - r_xz * r_yz) / denom).clamp(-1.0, 1.0))
}

/// Two-sided p-value of a (partial) correlation over `n` observations, from
/// Student's t with `n - 2` (or `n - 3` for a first-order partial) degrees of
/// freedom. Uses `P(|T| ≥ t) = I_{df/(df+t²)}(df/2, 1/2)` with
/// `df/(df+t²) = 1 - r²`.
pub fn p_value(r: f64, n: usize, partial: bool) -> Result<f64> {
    let lost = if partial { 3 } else { 2 };
    if n <= lost {
        return Err(Error::Stats("too few observations for a p-value"));
    }
    if !r.is_finite() || r.abs() > 1.0 {
        return Err(Error::Stats("correlation outside [-1, 1]"));
    }
    // A correlation within a few ulps of ±1 is perfect as far as f64 can tell.
    if 1.0 - r.abs() <= 4.0 * f64::EPSILON {
        return Ok(0.0);
    }
    let df = (n - lost) as f64;
    Ok(beta_reg(df / 2.0, 0.5, 1.0 - r * r).clamp(0.0, 1.0))
}

/// The t statistic behind [`p_value`].
pub fn t_statistic(r: f64, n: usize, partial: bool) -> f64 {
    let df = (n - if partial { 3 } else { 2 }) as f64;
    r * (df / (1.0 - r * r)).sqrt()
}

/// Benjamini–Hochberg step-up adjusted p-values, returned in input order.
pub fn bh_adjust(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    let mut adjusted = vec![0.0; m];
    let mut running = f64::INFINITY;
    for (rank, &i) in order.iter().enumerate().rev() {
        let candidate = p[i] * m as f64 / (rank + 1) as f64;
        running = running.min(candidate);
        adjusted[i] = running.min(1.0);
    }
    adjusted
}

/// `*` below .05, `**` below .01.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}
