//! Confidence histograms over algorithmic tags.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metamodel::{Id, Tag, TagOrigin};
use crate::scalar::Scalar;

pub const DEFAULT_EDGES: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
/// Confidences strictly below this go to manual review.
pub const FLAG_BELOW: f64 = 0.6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HistogramCount<T> {
    pub lower: T,
    pub upper: T,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConfidenceHistogram<T> {
    pub bins: Vec<HistogramCount<T>>,
    pub total: u64,
    /// Confidences outside the outer edges.
    pub out_of_range: u64,
    /// Targets with a confidence below the flag threshold, first occurrence
    /// order, without duplicates.
    pub flagged: Vec<Id>,
}

impl<T: Scalar> ConfidenceHistogram<T> {
    /// Index of the most populated bin; the lowest index wins ties.
    pub fn mode_bin(&self) -> Option<usize> {
        let max = self.bins.iter().map(|b| b.count).max()?;
        self.bins.iter().position(|b| b.count == max)
    }
}

/// Bins are `[lower, upper)` except the last, which is closed.
pub fn confidence_histogram<T: Scalar>(scores: &[(Id, T)], edges: &[T]) -> Result<ConfidenceHistogram<T>> {
    if scores.is_empty() {
        return Err(Error::NoConfidences);
    }
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("histogram edges must be ascending with at least two entries".into()));
    }
    let mut bins: Vec<HistogramCount<T>> = edges
        .windows(2)
        .map(|w| HistogramCount {
            lower: w[0],
            upper: w[1],
            count: 0,
        })
        .collect();
    let last = bins.len() - 1;
    let flag = T::of(FLAG_BELOW);
    let mut out_of_range = 0;
    let mut flagged: Vec<Id> = Vec::new();
    for (target, c) in scores {
        let slot = if *c == edges[edges.len() - 1] {
            Some(last)
        } else {
            bins.iter().position(|b| *c >= b.lower && *c < b.upper)
        };
        match slot {
            Some(i) => bins[i].count += 1,
            None => out_of_range += 1,
        }
        if *c < flag && !flagged.contains(target) {
            flagged.push(target.clone());
        }
    }
    Ok(ConfidenceHistogram {
        bins,
        total: scores.len() as u64,
        out_of_range,
        flagged,
    })
}

/// Algorithmic tags carrying a confidence, as `(target, confidence)`.
pub fn tag_confidences(tags: &[&Tag]) -> Vec<(Id, f64)> {
    tags.iter()
        .filter(|t| t.origin == TagOrigin::Algorithmic)
        .filter_map(|t| t.confidence.map(|c| (t.target.clone(), c.get())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scores(values: &[f64]) -> Vec<(Id, f64)> {
        values.iter().enumerate().map(|(i, v)| (Id::new(format!("item-{i}")), *v)).collect()
    }

    #[test]
    fn edges_and_flags() {
        let h = confidence_histogram(&scores(&[0.0, 0.2, 0.59, 0.6, 0.99, 1.0]), &DEFAULT_EDGES).unwrap();
        let counts: Vec<u64> = h.bins.iter().map(|b| b.count).collect();
        assert_eq!(counts, vec![1, 1, 1, 1, 2]);
        assert_eq!(h.flagged.len(), 3);
        assert_eq!(h.mode_bin(), Some(4));
    }

    #[test]
    fn all_half() {
        let h = confidence_histogram(&scores(&[0.5; 4]), &DEFAULT_EDGES).unwrap();
        assert_eq!(h.bins.iter().filter(|b| b.count > 0).count(), 1);
        assert_eq!(h.bins[2].count, 4);
        assert_eq!(h.flagged.len(), 4);
    }

    #[test]
    fn errors() {
        assert!(matches!(confidence_histogram::<f64>(&[], &DEFAULT_EDGES), Err(Error::NoConfidences)));
        assert!(confidence_histogram(&scores(&[0.5]), &[0.5, 0.5]).is_err());
        let h = confidence_histogram(&scores(&[1.5]), &DEFAULT_EDGES).unwrap();
        assert_eq!(h.out_of_range, 1);
    }

    proptest::proptest! {
        #[test]
        fn counts_sum(values in proptest::collection::vec(0.0f64..=1.0, 1..60)) {
            let h = confidence_histogram(&scores(&values), &DEFAULT_EDGES).unwrap();
            let sum: u64 = h.bins.iter().map(|b| b.count).sum();
            proptest::prop_assert_eq!(sum + h.out_of_range, values.len() as u64);
            proptest::prop_assert_eq!(h.out_of_range, 0);
            let low = values.iter().filter(|v| **v < FLAG_BELOW).count();
            proptest::prop_assert_eq!(h.flagged.len(), low);
        }
    }
}
