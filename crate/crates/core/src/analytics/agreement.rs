//! Human-vs-machine label agreement.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metamodel::{Id, Tag, TagOrigin};
use crate::scalar::Scalar;
use crate::store::Index;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AgreementResult<T> {
    pub n: usize,
    pub percent_agreement: T,
    pub kappa: T,
    /// Row and column labels of `confusion`, sorted.
    pub labels: Vec<String>,
    /// `confusion[i][j]` counts positions labelled `labels[i]` by the first
    /// rater and `labels[j]` by the second.
    pub confusion: Vec<Vec<u64>>,
}

/// Cohen's kappa with `p_e = sum_k (a_k/n)(b_k/n)`. When `p_e = 1` kappa is
/// 1 for perfect agreement and 0 otherwise.
pub fn agreement<T: Scalar, S: AsRef<str>>(a: &[S], b: &[S]) -> Result<AgreementResult<T>> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::Empty);
    }
    let labels: Vec<String> = a
        .iter()
        .chain(b)
        .map(|s| s.as_ref().to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let pos = |s: &str| labels.binary_search_by(|l| l.as_str().cmp(s)).expect("label present");
    let k = labels.len();
    let mut confusion = vec![vec![0u64; k]; k];
    for (x, y) in a.iter().zip(b) {
        confusion[pos(x.as_ref())][pos(y.as_ref())] += 1;
    }
    let n = a.len();
    let nt = T::of_usize(n);
    let agree: u64 = (0..k).map(|i| confusion[i][i]).sum();
    let p_o = T::of(agree as f64) / nt;
    let mut p_e = T::zero();
    for i in 0..k {
        let row: u64 = confusion[i].iter().sum();
        let col: u64 = confusion.iter().map(|r| r[i]).sum();
        p_e += (T::of(row as f64) / nt) * (T::of(col as f64) / nt);
    }
    let kappa = if p_e >= T::one() {
        if p_o >= T::one() {
            T::one()
        } else {
            T::zero()
        }
    } else {
        (p_o - p_e) / (T::one() - p_e)
    };
    Ok(AgreementResult {
        n,
        percent_agreement: p_o,
        kappa,
        labels,
        confusion,
    })
}

/// Which tags count as one rater's labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TagSource {
    Origin(TagOrigin),
    Author(String),
}

impl TagSource {
    /// `user` and `algorithmic` select by origin; anything else is an author.
    pub fn parse(text: &str) -> Self {
        match text {
            "user" | "human" => TagSource::Origin(TagOrigin::User),
            "algorithmic" | "machine" => TagSource::Origin(TagOrigin::Algorithmic),
            other => TagSource::Author(other.to_string()),
        }
    }

    fn selects(&self, tag: &Tag) -> bool {
        match self {
            TagSource::Origin(o) => tag.origin == *o,
            TagSource::Author(a) => &tag.author == a,
        }
    }
}

/// Latest label from each source on every item of a release that both
/// sources labelled, in ordinal order.
pub fn paired_labels(index: &Index, release_id: &Id, a: &TagSource, b: &TagSource) -> (Vec<String>, Vec<String>) {
    let latest = |tags: &[&Tag], src: &TagSource| {
        tags.iter()
            .filter(|t| src.selects(t))
            .max_by_key(|t| t.created_at)
            .map(|t| t.label.clone())
    };
    let mut left = Vec::new();
    let mut right = Vec::new();
    for item in index.items_of(release_id) {
        let tags = index.tags_of(&item.id);
        if let (Some(x), Some(y)) = (latest(&tags, a), latest(&tags, b)) {
            left.push(x);
            right.push(y);
        }
    }
    (left, right)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_vectors() {
        let r: AgreementResult<f64> = agreement(&["x", "y", "x"], &["x", "y", "x"]).unwrap();
        assert_eq!(r.percent_agreement, 1.0);
        assert_eq!(r.kappa, 1.0);
    }

    #[test]
    fn chance_level() {
        let r: AgreementResult<f64> = agreement(&["x", "x", "y", "y"], &["x", "y", "x", "y"]).unwrap();
        assert_eq!(r.percent_agreement, 0.5);
        assert_eq!(r.kappa, 0.0);
        assert_eq!(r.confusion, vec![vec![1, 1], vec![1, 1]]);
    }

    #[test]
    fn degenerate_expected_agreement() {
        let same: AgreementResult<f64> = agreement(&["x", "x"], &["x", "x"]).unwrap();
        assert_eq!(same.kappa, 1.0);
        let r: AgreementResult<f32> = agreement(&["x"], &["x"]).unwrap();
        assert_eq!(r.kappa, 1.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(agreement::<f64, &str>(&[], &[]), Err(Error::Empty)));
        assert!(matches!(agreement::<f64, &str>(&["a"], &[]), Err(Error::LengthMismatch(1, 0))));
    }

    proptest::proptest! {
        #[test]
        fn invariants(pairs in proptest::collection::vec((0u8..3, 0u8..3), 1..40)) {
            let a: Vec<String> = pairs.iter().map(|p| p.0.to_string()).collect();
            let b: Vec<String> = pairs.iter().map(|p| p.1.to_string()).collect();
            let r: AgreementResult<f64> = agreement(&a, &b).unwrap();
            let total: u64 = r.confusion.iter().flatten().sum();
            proptest::prop_assert_eq!(total as usize, r.n);
            let trace: u64 = (0..r.labels.len()).map(|i| r.confusion[i][i]).sum();
            proptest::prop_assert!((r.percent_agreement - trace as f64 / r.n as f64).abs() < 1e-15);
            proptest::prop_assert!(r.kappa <= 1.0 + 1e-12 && r.kappa >= -1.0 - 1e-12);
            let identical = a == b;
            proptest::prop_assert_eq!((r.kappa - 1.0).abs() < 1e-12, identical);
        }
    }
}
