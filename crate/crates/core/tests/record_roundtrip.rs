use elical_core::records::{read_dataset, write_dataset, Extra, QuestionRecord, ResponseRecord};
use proptest::prelude::*;
use serde_json::Value;

fn response() -> impl Strategy<Value = ResponseRecord> {
    ("[a-zA-Z0-9 ,.?]{0,20}", proptest::option::of(proptest::collection::vec(-20.0f64..=0.0, 1..5)))
        .prop_map(|(text, lp)| ResponseRecord {
            text,
            token_logprobs: lp,
            extra: Extra::new(),
        })
}

fn dataset() -> impl Strategy<Value = Vec<QuestionRecord>> {
    (1usize..4, proptest::option::of(1usize..6), 1usize..8).prop_flat_map(|(k, d, n)| {
        proptest::collection::vec(
            (
                "[a-z ]{1,30}",
                proptest::collection::vec("[a-z]{1,8}", 0..3),
                response(),
                proptest::collection::vec(response(), k),
                match d {
                    Some(d) => proptest::collection::vec(-1e3f64..1e3, d).prop_map(Some).boxed(),
                    None => Just(None).boxed(),
                },
                proptest::option::of(-1e6f64..1e6),
            ),
            n,
        )
        .prop_map(|rows| {
            rows.into_iter()
                .enumerate()
                .map(|(i, (question, gold, greedy, samples, hidden, note))| {
                    let mut extra = Extra::new();
                    if let Some(x) = note {
                        extra.insert("source_score".into(), Value::from(x));
                    }
                    QuestionRecord {
                        id: format!("q{i}"),
                        dataset: "prop".into(),
                        model_id: "m".into(),
                        question,
                        gold_answers: gold,
                        greedy,
                        samples,
                        hidden_state: hidden,
                        extra,
                    }
                })
                .collect()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn write_then_read_is_identity(records in dataset()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        let written = write_dataset(&records, &path).unwrap();
        let (back, manifest) = read_dataset(&path).unwrap();
        prop_assert_eq!(&back, &records);
        prop_assert_eq!(manifest.record_count, records.len());
        prop_assert_eq!(manifest.k, records[0].k());
        prop_assert_eq!(written.k, manifest.k);
    }
}
