//! One-dimensional fast Gauss transform.
//!
//! Sources are grouped into boxes of unit width in the scaled coordinate
//! `t = x / (sqrt(2) s)`, and each box is summarized by the Hermite
//! expansion `exp(-(t - y)^2) = sum_k (y - c)^k / k! h_k(t - c)` about its
//! center `c`, with `h_k(u) = H_k(u) exp(-u^2)`. For `|y - c| <= 1/2` the
//! `k`-th term is below `1.09 (1/sqrt 2)^k / sqrt(k!)`, so 30 terms reach
//! double precision. Boxes farther than 8 units from a target contribute
//! less than `exp(-49)` per unit weight and are skipped.

use std::collections::BTreeMap;

use rayon::prelude::*;

const TERMS: usize = 30;
const REACH: i64 = 8;

/// `out_i = sum_j w_j exp(-(x_i - y_j)^2 / (2 s^2))`, accurate to about
/// `1e-15 * sum_j |w_j|`.
pub fn gauss_transform(sources: &[f64], weights: &[f64], targets: &[f64], bandwidth: f64) -> Vec<f64> {
    assert_eq!(sources.len(), weights.len(), "one weight per source");
    let scale = 1.0 / (std::f64::consts::SQRT_2 * bandwidth);
    let mut boxes: BTreeMap<i64, [f64; TERMS]> = BTreeMap::new();
    for (&y, &w) in sources.iter().zip(weights) {
        let t = y * scale;
        let key = t.floor() as i64;
        let delta = t - (key as f64 + 0.5);
        let moments = boxes.entry(key).or_insert([0.0; TERMS]);
        let mut term = w;
        for (k, m) in moments.iter_mut().enumerate() {
            *m += term;
            term *= delta / (k + 1) as f64;
        }
    }
    targets
        .par_iter()
        .map(|&x| {
            let u = x * scale;
            let key = u.floor() as i64;
            boxes
                .range(key - REACH..=key + REACH)
                .map(|(&b, moments)| expand(moments, u - (b as f64 + 0.5)))
                .sum()
        })
        .collect()
}

fn expand(moments: &[f64; TERMS], d: f64) -> f64 {
    let mut prev = (-d * d).exp();
    let mut cur = 2.0 * d * prev;
    let mut total = moments[0] * prev + moments[1] * cur;
    for (k, m) in moments.iter().enumerate().skip(2) {
        let next = 2.0 * d * cur - 2.0 * (k - 1) as f64 * prev;
        total += m * next;
        prev = cur;
        cur = next;
    }
    total
}

/// `sum_ij w_i w_j exp(-(y_i - y_j)^2 / (2 s^2))`.
pub fn gauss_quadratic_form(points: &[f64], weights: &[f64], bandwidth: f64) -> f64 {
    gauss_transform(points, weights, points, bandwidth)
        .iter()
        .zip(weights)
        .map(|(g, w)| g * w)
        .sum()
}
