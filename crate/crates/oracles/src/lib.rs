//! Slow, direct reference implementations for cross-checking the
//! production code. Nothing here shares code with `becaptcha`; each routine
//! is written from the textbook definition with explicit loops.

/// `|a - b| <= tol * max(1, |a|, |b|)`.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * 1f64.max(a.abs()).max(b.abs())
}

/// Touch features `[D, L, P, alpha, V, E]` of `(x, y, t)` points.
pub fn touch_features(points: &[(f64, f64, f64)]) -> [f64; 6] {
    let n = points.len();
    assert!(n >= 2);
    let (x0, y0, t0) = points[0];
    let (xn, yn, tn) = points[n - 1];
    let mut path = 0.0;
    let mut speeds = 0.0;
    let mut i = 1;
    while i < n {
        let (xa, ya, ta) = points[i - 1];
        let (xb, yb, tb) = points[i];
        let seg = ((xb - xa) * (xb - xa) + (yb - ya) * (yb - ya)).sqrt();
        path += seg;
        speeds += seg / (tb - ta);
        i += 1;
    }
    let chord = ((xn - x0) * (xn - x0) + (yn - y0) * (yn - y0)).sqrt();
    [
        tn - t0,
        chord,
        path,
        (yn - y0).atan2(xn - x0),
        speeds / (n - 1) as f64,
        path / chord,
    ]
}

/// `[mean, median, rms, std]` with population conventions. The median uses
/// an insertion sort and the variance Welford's recurrence.
pub fn axis_stats(values: &[f64]) -> [f64; 4] {
    let n = values.len();
    assert!(n >= 1);
    let mut sorted: Vec<f64> = Vec::with_capacity(n);
    for &v in values {
        let mut at = sorted.len();
        while at > 0 && sorted[at - 1] > v {
            at -= 1;
        }
        sorted.insert(at, v);
    }
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    let (mut mean, mut m2, mut sq) = (0.0, 0.0, 0.0);
    for (k, &v) in values.iter().enumerate() {
        let delta = v - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (v - mean);
        sq += v * v;
    }
    [mean, median, (sq / n as f64).sqrt(), (m2 / n as f64).sqrt()]
}

/// Area under the ROC curve by trapezoids over every distinct threshold,
/// in percent. Positives are `true`.
pub fn trapezoid_auc(scores: &[f64], positive: &[bool]) -> f64 {
    let p = positive.iter().filter(|&&b| b).count() as f64;
    let n = positive.len() as f64 - p;
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let (mut prev_fpr, mut prev_tpr, mut area) = (0.0, 0.0, 0.0);
    for th in thresholds {
        let mut tp = 0.0;
        let mut fp = 0.0;
        for (s, &pos) in scores.iter().zip(positive) {
            if *s >= th {
                if pos {
                    tp += 1.0;
                } else {
                    fp += 1.0;
                }
            }
        }
        let (fpr, tpr) = (fp / n, tp / p);
        area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        prev_fpr = fpr;
        prev_tpr = tpr;
    }
    100.0 * area
}

/// Fraction of positive/negative pairs ordered correctly (ties count half),
/// in percent.
pub fn pairwise_auc(scores: &[f64], positive: &[bool]) -> f64 {
    let (mut good, mut total) = (0.0, 0.0);
    for (i, &pi) in positive.iter().enumerate() {
        for (j, &pj) in positive.iter().enumerate() {
            if pi && !pj {
                total += 1.0;
                if scores[i] > scores[j] {
                    good += 1.0;
                } else if scores[i] == scores[j] {
                    good += 0.5;
                }
            }
        }
    }
    100.0 * good / total
}

/// Central difference of `f` along coordinate `i` of `x`.
pub fn central_difference(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut plus = x.to_vec();
    let mut minus = x.to_vec();
    plus[i] += h;
    minus[i] -= h;
    (f(&plus) - f(&minus)) / (2.0 * h)
}

/// Relative error `|a - n| / max(|a|, |n|, 1e-6)`. The floor keeps
/// gradients near zero, where central differences carry ~1e-11 of rounding
/// noise, from dominating the check.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// First Adam update from zero moments, expanded by hand:
/// `m = (1 - b1) g`, `v = (1 - b2) g^2`, bias correction divides both back
/// to `g` and `g^2`, so the step is `-lr g / (|g| + eps)`.
pub fn adam_first_update(g: f64, lr: f64, eps: f64) -> f64 {
    -lr * g / (g.abs() + eps)
}

/// Largest distance of any point from the line through the first and last.
pub fn max_perpendicular_deviation(points: &[(f64, f64)]) -> f64 {
    let (x0, y0) = points[0];
    let (x1, y1) = points[points.len() - 1];
    let len = ((x1 - x0) * (x1 - x0) + (y1 - y0) * (y1 - y0)).sqrt();
    let mut worst: f64 = 0.0;
    for &(x, y) in points {
        let cross = (x1 - x0) * (y - y0) - (y1 - y0) * (x - x0);
        worst = worst.max(cross.abs() / len);
    }
    worst
}
