use elical_core::baselines::rouge::{lcs_len, rouge_l};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Full-table LCS.
fn lcs_table(a: &[u32], b: &[u32]) -> usize {
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            t[i][j] = if a[i - 1] == b[j - 1] {
                t[i - 1][j - 1] + 1
            } else {
                t[i - 1][j].max(t[i][j - 1])
            };
        }
    }
    t[a.len()][b.len()]
}

#[test]
fn lcs_and_f1_match_table_dp_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..1000 {
        let vocab = rng.random_range(1..6u32);
        let a: Vec<u32> = (0..rng.random_range(0..25)).map(|_| rng.random_range(0..vocab)).collect();
        let b: Vec<u32> = (0..rng.random_range(0..25)).map(|_| rng.random_range(0..vocab)).collect();
        let l = lcs_table(&a, &b);
        assert_eq!(lcs_len(&a, &b), l);
        let r = rouge_l::<f64, u32>(&a, &b);
        let expected = if l == 0 {
            0.0
        } else {
            let p = l as f64 / a.len() as f64;
            let q = l as f64 / b.len() as f64;
            2.0 * p * q / (p + q)
        };
        assert!((r.f1 - expected).abs() < 1e-12, "{a:?} {b:?}");
    }
}
