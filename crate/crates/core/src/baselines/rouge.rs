//! ROUGE-L over token sequences.

use crate::judge::normalize_answer;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RougeL<T> {
    pub precision: T,
    pub recall: T,
    pub f1: T,
}

/// Length of the longest common subsequence, two-row dynamic program.
pub fn lcs_len<S: PartialEq>(a: &[S], b: &[S]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l<T: Scalar, S: PartialEq>(candidate: &[S], reference: &[S]) -> RougeL<T> {
    let lcs = lcs_len(candidate, reference);
    if lcs == 0 {
        return RougeL {
            precision: T::zero(),
            recall: T::zero(),
            f1: T::zero(),
        };
    }
    let lcs = T::of_usize(lcs);
    let precision = lcs / T::of_usize(candidate.len());
    let recall = lcs / T::of_usize(reference.len());
    let two = T::of(2.0);
    RougeL {
        precision,
        recall,
        f1: two * precision * recall / (precision + recall),
    }
}

/// Whitespace tokens of the normalized answer.
pub fn tokenize(text: &str) -> Vec<String> {
    normalize_answer(text)
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

pub fn rouge_l_text<T: Scalar>(candidate: &str, reference: &str) -> RougeL<T> {
    rouge_l(&tokenize(candidate), &tokenize(reference))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_and_disjoint() {
        let a = ["x", "y", "z"];
        assert_eq!(rouge_l::<f64, _>(&a, &a).f1, 1.0);
        assert_eq!(rouge_l::<f64, _>(&a, &["p", "q"]).f1, 0.0);
        assert_eq!(rouge_l::<f64, &str>(&[], &[]).f1, 0.0);
    }

    #[test]
    fn quick_fox() {
        let r = rouge_l::<f64, _>(&["the", "quick", "fox"], &["the", "fox"]);
        assert_eq!(lcs_len(&["the", "quick", "fox"], &["the", "fox"]), 2);
        assert!((r.precision - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.recall, 1.0);
        assert!((r.f1 - 0.8).abs() < 1e-15);
    }

    #[test]
    fn text_variant_normalizes() {
        assert_eq!(rouge_l_text::<f32>("The Eiffel Tower!", "eiffel tower").f1, 1.0);
    }
}
