//! Small descriptive statistics used by the Monte-Carlo estimators and the
//! trend checks.

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (`n − 1` denominator); `0` for fewer than two values.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

pub fn std_error(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    std_dev(xs) / (xs.len() as f64).sqrt()
}

/// Population variance (`n` denominator).
pub fn variance(xs: &[f64]) -> f64 {
    covariance(xs, xs).0
}

/// Plug-in covariance `mean((a − ā)(b − b̄))` and the standard error of that
/// mean, treating the centered products as i.i.d.
pub fn covariance(a: &[f64], b: &[f64]) -> (f64, f64) {
    assert_eq!(a.len(), b.len());
    let ma = mean(a);
    let mb = mean(b);
    let prods: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).collect();
    (mean(&prods), std_error(&prods))
}

/// Ranks with ties resolved to their average rank (1-based).
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let mut out = vec![0.0; xs.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && xs[idx[end]] == xs[idx[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            out[i] = avg;
        }
        start = end;
    }
    out
}

/// Pearson correlation; `0` when either input is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (cov, _) = covariance(a, b);
    let va = variance(a);
    let vb = variance(b);
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

/// Spearman rank correlation.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    pearson(&ranks(a), &ranks(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_moments() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert!((std_dev(&xs) - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(variance(&xs), 1.25);
        assert_eq!(std_dev(&[3.0]), 0.0);
    }

    #[test]
    fn spearman_monotone_and_ties() {
        let n = [50.0, 100.0, 200.0, 400.0, 800.0];
        assert!((spearman(&n, &[0.1, 0.2, 0.3, 0.4, 0.5]) - 1.0).abs() < 1e-15);
        assert!((spearman(&n, &[5.0, 4.0, 3.0, 2.0, 1.0]) + 1.0).abs() < 1e-15);
        // One adjacent swap: 1 - 6*2/(5*24) = 0.9.
        assert!((spearman(&n, &[1.0, 2.0, 4.0, 3.0, 5.0]) - 0.9).abs() < 1e-12);
        assert_eq!(ranks(&[1.0, 1.0, 2.0]), vec![1.5, 1.5, 3.0]);
    }
}
