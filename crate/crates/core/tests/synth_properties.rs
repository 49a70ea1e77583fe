use elical_core::synth::{generate, oracle_auroc, SynthConfig};
use elical_core::targets::{accuracy_target, self_consistency_confidence};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fixture(n: usize) -> elical_core::synth::SynthData {
    generate(&SynthConfig {
        n_questions: n,
        ..SynthConfig::default()
    })
    .unwrap()
}

#[test]
fn empirical_targets_track_exact_values() {
    let data = fixture(5000);
    let n = data.sidecars.len() as f64;
    let (mut dc, mut da) = (0.0, 0.0);
    for (a, s) in data.annotations.iter().zip(&data.sidecars) {
        dc += self_consistency_confidence(a).unwrap() - s.exact_greedy_match_prob;
        da += accuracy_target(a).unwrap() - s.p_q;
    }
    assert!((dc / n).abs() <= 0.01, "consistency bias {}", dc / n);
    assert!((da / n).abs() <= 0.01, "accuracy bias {}", da / n);
}

#[test]
fn oracle_is_chance_on_permuted_labels() {
    let data = fixture(2000);
    let mut labels: Vec<u8> = data.annotations.iter().map(|a| a.greedy_correct.unwrap()).collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
    let a = oracle_auroc(&data.sidecars, &labels).unwrap();
    assert!((a - 0.5).abs() <= 0.03, "{a}");
    let scores: Vec<f64> = data.sidecars.iter().map(|s| s.p_q).collect();
    let b = elical_core::metrics::auroc(&scores, &labels).unwrap();
    assert!((a - b).abs() <= 1e-12);
}

#[test]
fn single_distractor_fixture_is_overconfident() {
    let data = generate(&SynthConfig {
        n_questions: 4000,
        n_distractors: 1,
        ..SynthConfig::default()
    })
    .unwrap();
    let n = data.sidecars.len() as f64;
    let acc = data.annotations.iter().map(|a| a.greedy_correct.unwrap() as f64).sum::<f64>() / n;
    let conf = data.annotations.iter().map(|a| self_consistency_confidence(a).unwrap()).sum::<f64>() / n;
    assert!(acc <= conf, "accuracy {acc} > confidence {conf}");
}
