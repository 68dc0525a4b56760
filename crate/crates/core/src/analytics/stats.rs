//! Descriptive statistics, Pearson correlation and z-score anomalies.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Describe<T> {
    pub n: usize,
    pub mean: T,
    pub min: T,
    pub max: T,
    pub median: T,
    /// Sample (n - 1) standard deviation.
    pub stddev: T,
    pub population_stddev: T,
    /// Least-squares slope of the values against their position; with
    /// values bucketed by time this is the trend per bucket.
    pub trend: T,
}

fn need_two<T>(values: &[T]) -> Result<()> {
    match values.len() {
        0 => Err(Error::Empty),
        1 => Err(Error::TooFew { needed: 2, got: 1 }),
        _ => Ok(()),
    }
}

pub fn mean<T: Scalar>(values: &[T]) -> T {
    values.iter().copied().sum::<T>() / T::of_usize(values.len())
}

/// Sum of squared deviations from the mean.
fn sum_sq_dev<T: Scalar>(values: &[T], m: T) -> T {
    values.iter().map(|x| (*x - m) * (*x - m)).sum()
}

pub fn sample_stddev<T: Scalar>(values: &[T]) -> T {
    let m = mean(values);
    (sum_sq_dev(values, m) / T::of_usize(values.len() - 1)).sqrt()
}

pub fn describe<T: Scalar>(values: &[T]) -> Result<Describe<T>> {
    need_two(values)?;
    let n = values.len();
    let m = mean(values);
    let ss = sum_sq_dev(values, m);
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / T::of(2.0)
    };
    let positions: Vec<T> = (0..n).map(T::of_usize).collect();
    Ok(Describe {
        n,
        mean: m,
        min: sorted[0],
        max: sorted[n - 1],
        median,
        stddev: (ss / T::of_usize(n - 1)).sqrt(),
        population_stddev: (ss / T::of_usize(n)).sqrt(),
        trend: slope(&positions, values)?,
    })
}

/// Ordinary least-squares slope of `y` on `x`; zero when `x` is constant.
pub fn slope<T: Scalar>(x: &[T], y: &[T]) -> Result<T> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    need_two(x)?;
    let (mx, my) = (mean(x), mean(y));
    let sxy: T = x.iter().zip(y).map(|(a, b)| (*a - mx) * (*b - my)).sum();
    let sxx = sum_sq_dev(x, mx);
    Ok(if sxx == T::zero() { T::zero() } else { sxy / sxx })
}

/// Pearson r, or `None` when either input is constant.
pub fn correlate<T: Scalar>(x: &[T], y: &[T]) -> Result<Option<T>> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    need_two(x)?;
    let (mx, my) = (mean(x), mean(y));
    let sxy: T = x.iter().zip(y).map(|(a, b)| (*a - mx) * (*b - my)).sum();
    let sxx = sum_sq_dev(x, mx);
    let syy = sum_sq_dev(y, my);
    if sxx == T::zero() || syy == T::zero() {
        return Ok(None);
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    Ok(Some(r.max(-T::one()).min(T::one())))
}

/// Indices whose |z| strictly exceeds `threshold`, with z taken against
/// the sample standard deviation. A constant input has no anomalies.
pub fn zscore_anomalies<T: Scalar>(values: &[T], threshold: T) -> Result<Vec<usize>> {
    need_two(values)?;
    let m = mean(values);
    let sd = sample_stddev(values);
    if sd == T::zero() {
        return Ok(Vec::new());
    }
    Ok(values
        .iter()
        .enumerate()
        .filter(|(_, x)| ((**x - m) / sd).abs() > threshold)
        .map(|(i, _)| i)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn correlate_examples() {
        let v = [1.0f64, 2.0, 5.0, 3.0];
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        assert!((correlate(&v, &v).unwrap().unwrap() - 1.0).abs() < 1e-12);
        assert!((correlate(&v, &neg).unwrap().unwrap() + 1.0).abs() < 1e-12);
        // deviations: sxy = 5, sxx = 2, syy = 114/9
        let expected = 5.0 / (2.0f64 * 114.0 / 9.0).sqrt();
        let r = correlate(&[1.0, 2.0, 3.0], &[2.0, 4.0, 7.0]).unwrap().unwrap();
        assert!((r - expected).abs() < 1e-9);
        assert!((r - 0.993_399_267_798_782_8).abs() < 1e-9);
        assert_eq!(correlate(&[1.0, 1.0], &[2.0, 3.0]).unwrap(), None);
        assert!(matches!(correlate(&[1.0], &[1.0, 2.0]), Err(Error::LengthMismatch(1, 2))));
    }

    #[test]
    fn zscore_rules() {
        assert!(zscore_anomalies(&[3.0, 3.0, 3.0], 1.0).unwrap().is_empty());
        let v = [1.0, 1.0, 1.0, 1.0, 100.0];
        assert_eq!(zscore_anomalies(&v, 1.5).unwrap(), vec![4]);
        // sample z of the outlier is 79.2 / sqrt(1960.2) = 1.7888...
        let z = 79.2 / 1960.2f64.sqrt();
        assert!((z - 1.788_854_381_999_832).abs() < 1e-12);
        assert!(zscore_anomalies(&v, 2.0).unwrap().is_empty());
        // [0, 0, 0, 4]: mean 1, sample sd 2, so the last z is exactly 1.5
        assert!(zscore_anomalies(&[0.0, 0.0, 0.0, 4.0], 1.5).unwrap().is_empty());
        assert_eq!(zscore_anomalies(&[0.0, 0.0, 0.0, 4.0], 1.49).unwrap(), vec![3]);
        assert!(matches!(zscore_anomalies(&[1.0], 1.0), Err(Error::TooFew { .. })));
    }

    #[test]
    fn describe_basics() {
        let d = describe(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap();
        assert_eq!(d.population_stddev, 2.0);
        assert_eq!(d.mean, 5.0);
        assert_eq!(d.median, 4.5);
        let t = describe(&[1.0f32, 3.0, 5.0]).unwrap();
        assert_eq!(t.trend, 2.0);
        assert!(matches!(describe::<f64>(&[]), Err(Error::Empty)));
    }
}
