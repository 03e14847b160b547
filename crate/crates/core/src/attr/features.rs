use serde::{Deserialize, Serialize};

use super::record::AttributeRecord;

/// Object counts over a fixed, ordered list of sorts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub dims: Vec<String>,
    pub counts: Vec<u64>,
}

impl FeatureVector {
    pub fn is_zero(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }

    /// The vector scaled to unit length; all zeros stays all zeros.
    pub fn unit(&self) -> Vec<f64> {
        let norm = self
            .counts
            .iter()
            .map(|&c| (c as f64).powi(2))
            .sum::<f64>()
            .sqrt();
        if norm == 0.0 {
            return vec![0.0; self.counts.len()];
        }
        self.counts.iter().map(|&c| c as f64 / norm).collect()
    }
}

/// Count of each sort in `dims`: the explicit `num` value if given, else the
/// number of object instances, else 0.
pub fn featurize(record: &AttributeRecord, dims: &[String]) -> FeatureVector {
    let counts = dims
        .iter()
        .map(|sort| {
            match record
                .explicit_numeric()
                .get(&("num".to_string(), sort.clone()))
            {
                Some(v) => v.round().max(0.0) as u64,
                None => record.instance_count(sort) as u64,
            }
        })
        .collect();
    FeatureVector {
        dims: dims.to_vec(),
        counts,
    }
}

/// Cosine of the angle between two count vectors; 0 when either is zero.
pub fn cosine_similarity(a: &FeatureVector, b: &FeatureVector) -> f64 {
    debug_assert_eq!(a.dims, b.dims);
    let dot: f64 = a
        .counts
        .iter()
        .zip(&b.counts)
        .map(|(&x, &y)| x as f64 * y as f64)
        .sum();
    let na = a
        .counts
        .iter()
        .map(|&x| (x as f64).powi(2))
        .sum::<f64>()
        .sqrt();
    let nb = b
        .counts
        .iter()
        .map(|&x| (x as f64).powi(2))
        .sum::<f64>()
        .sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attr::Vocabulary;

    fn fv(counts: &[u64]) -> FeatureVector {
        FeatureVector {
            dims: (0..counts.len()).map(|i| format!("s{i}")).collect(),
            counts: counts.to_vec(),
        }
    }

    fn dims(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn counts_from_num_facts() {
        let r = AttributeRecord::builder("a")
            .object("truck")
            .numeric("num", "truck", 6.0)
            .build(&Vocabulary::standard())
            .unwrap();
        assert_eq!(
            featurize(&r, &dims(&["truck", "person"])).counts,
            vec![6, 0]
        );
    }

    #[test]
    fn empty_record_is_zero() {
        let r = AttributeRecord::builder("a")
            .build(&Vocabulary::standard())
            .unwrap();
        assert_eq!(featurize(&r, &dims(&["car"])).counts, vec![0]);
    }

    #[test]
    fn distinct_instances_counted() {
        let r = AttributeRecord::builder("a")
            .object_instance("car", "c1")
            .object_instance("car", "c2")
            .build(&Vocabulary::standard())
            .unwrap();
        let brute = r
            .instances()
            .iter()
            .filter(|(s, _)| *s == "car")
            .map(|(_, ids)| ids.len() as u64)
            .sum::<u64>();
        assert_eq!(featurize(&r, &dims(&["car"])).counts, vec![brute]);
        assert_eq!(brute, 2);
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&fv(&[1, 0]), &fv(&[1, 0])), 1.0);
        assert_eq!(cosine_similarity(&fv(&[1, 0]), &fv(&[0, 1])), 0.0);
        assert!((cosine_similarity(&fv(&[3, 4]), &fv(&[4, 3])) - 0.96).abs() < 1e-15);
        assert_eq!(cosine_similarity(&fv(&[0, 0]), &fv(&[4, 3])), 0.0);
    }
}
