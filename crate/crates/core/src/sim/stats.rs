//! Order statistics and component matching used when summarizing replicates.

/// Quantile by linear interpolation between order statistics (the
/// "type 7" definition). `sorted` must be ascending and nonempty.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(quantile_sorted(&v, 0.5))
}

/// Symmetric winsorization: values outside the [(1 − level)/2, 1 − (1 − level)/2]
/// quantile range are clamped to it. `level = 1` is the identity.
pub fn winsorize(values: &[f64], level: f64) -> Vec<f64> {
    if values.is_empty() || level >= 1.0 {
        return values.to_vec();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let lo = quantile_sorted(&sorted, tail);
    let hi = quantile_sorted(&sorted, 1.0 - tail);
    values.iter().map(|v| v.clamp(lo, hi)).collect()
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Unbiased sample variance; needs at least two values.
pub fn variance(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let m = mean(values)?;
    Some(values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64)
}

/// Largest K for which matching enumerates every permutation.
pub const EXHAUSTIVE_MATCH_MAX: usize = 5;

/// Assignment of fitted components to true components minimizing the total
/// absolute difference of component means. Entry k of the result is the
/// fitted index matched to true component k. Beyond
/// [`EXHAUSTIVE_MATCH_MAX`] components, both sides are matched in sorted order.
pub fn match_by_means(true_means: &[f64], fitted_means: &[f64]) -> Vec<usize> {
    let k = true_means.len();
    assert_eq!(
        k,
        fitted_means.len(),
        "matching needs equal component counts"
    );
    if k > EXHAUSTIVE_MATCH_MAX {
        let mut t: Vec<usize> = (0..k).collect();
        let mut f: Vec<usize> = (0..k).collect();
        t.sort_by(|&a, &b| true_means[a].total_cmp(&true_means[b]));
        f.sort_by(|&a, &b| fitted_means[a].total_cmp(&fitted_means[b]));
        let mut out = vec![0; k];
        for (ti, fi) in t.into_iter().zip(f) {
            out[ti] = fi;
        }
        return out;
    }
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = perm.clone();
    let mut best_cost = f64::INFINITY;
    let cost = |p: &[usize]| -> f64 {
        p.iter()
            .enumerate()
            .map(|(t, &f)| (true_means[t] - fitted_means[f]).abs())
            .sum()
    };
    // Heap's algorithm
    let mut c = vec![0usize; k];
    let c0 = cost(&perm);
    if c0 < best_cost {
        best_cost = c0;
        best.clone_from(&perm);
    }
    let mut i = 0;
    while i < k {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            let cst = cost(&perm);
            if cst < best_cost {
                best_cost = cst;
                best.clone_from(&perm);
            }
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}
