//! Supervision signals built from annotations.
//!
//! Both targets average over the sampled responses only; the greedy
//! response is the consistency reference, not a member of either mean.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::records::{AnnotationRecord, TargetRecord};

fn flag_mean(flags: &[u8]) -> f64 {
    flags.iter().map(|&f| f as u64).sum::<u64>() as f64 / flags.len() as f64
}

/// Fraction of samples consistent with the greedy response.
pub fn self_consistency_confidence(annotation: &AnnotationRecord) -> Result<f64> {
    if annotation.consistency.is_empty() {
        return Err(Error::Precondition(format!(
            "question `{}` has no consistency flags",
            annotation.id
        )));
    }
    Ok(flag_mean(&annotation.consistency))
}

/// Fraction of samples judged correct.
pub fn accuracy_target(annotation: &AnnotationRecord) -> Result<f64> {
    match &annotation.sample_correct {
        Some(flags) if !flags.is_empty() => Ok(flag_mean(flags)),
        _ => Err(Error::Unlabeled(annotation.id.clone())),
    }
}

/// Targets for every annotation; unlabeled questions keep `accuracy = None`.
pub fn build_targets(annotations: &[AnnotationRecord]) -> Result<Vec<TargetRecord>> {
    annotations
        .iter()
        .map(|a| {
            Ok(TargetRecord {
                id: a.id.clone(),
                self_consistency_confidence: self_consistency_confidence(a)?,
                accuracy: match accuracy_target(a) {
                    Ok(v) => Some(v),
                    Err(Error::Unlabeled(_)) => None,
                    Err(e) => return Err(e),
                },
            })
        })
        .collect()
}

pub fn index_by_id<T>(items: Vec<T>, id: impl Fn(&T) -> &str) -> HashMap<String, T> {
    items.into_iter().map(|t| (id(&t).to_string(), t)).collect()
}
