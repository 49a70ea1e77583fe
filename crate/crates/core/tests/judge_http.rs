mod common;

use elical_core::judge::remote::{ChatBackend, ChatEndpoint, HttpChat};
use elical_core::judge::{AnnotatePasses, Judge, JudgeConfig, JudgeStrategy};
use elical_core::records::{Extra, QuestionRecord, ResponseRecord};
use elical_core::Error;
use std::sync::atomic::Ordering;

fn endpoint(url: &str) -> ChatEndpoint {
    ChatEndpoint {
        endpoint_url: url.to_string(),
        model: "stub".into(),
        temperature: 0.0,
        max_retries: 2,
        backoff_ms: 1,
        timeout_secs: 5,
    }
}

#[test]
fn client_reads_content_and_retries_server_errors() {
    let server = common::spawn(|p| Some(format!("echo {}", p.len())));
    let chat = HttpChat::new(endpoint(&server.url));
    assert_eq!(chat.complete("abc").unwrap(), "echo 3");
    assert_eq!(server.requests.load(Ordering::SeqCst), 1);

    let failing = common::spawn(|_| None);
    let chat = HttpChat::new(endpoint(&failing.url));
    assert!(chat.complete("x").is_err());
    assert_eq!(failing.requests.load(Ordering::SeqCst), 3);
}

fn record(id: &str, greedy: &str, samples: &[&str]) -> QuestionRecord {
    QuestionRecord {
        id: id.into(),
        dataset: "t".into(),
        model_id: "m".into(),
        question: format!("question {id}"),
        gold_answers: vec!["Paris".into()],
        greedy: ResponseRecord::new(greedy),
        samples: samples.iter().map(|s| ResponseRecord::new(*s)).collect(),
        hidden_state: None,
        extra: Extra::new(),
    }
}

fn config(url: &str) -> JudgeConfig {
    let mut c: JudgeConfig = serde_json::from_str("{}").unwrap();
    c.endpoint_url = url.into();
    c.judge_model = "stub".into();
    c.backoff_ms = 1;
    c.max_retries = 1;
    c
}

#[test]
fn remote_judge_uses_endpoint_for_non_trivial_pairs() {
    let server = common::spawn(|p| Some(if p.contains("City of Paris") { "Yes." } else { "No" }.to_string()));
    let judge = Judge::new(JudgeStrategy::RemoteLlm, config(&server.url)).unwrap();
    let recs = vec![record("a", "Paris", &["paris", "City of Paris", "Lyon"])];
    let (ann, stats) = judge.annotate_dataset(&recs, AnnotatePasses::default()).unwrap();
    assert_eq!(ann[0].consistency, vec![1, 1, 0]);
    assert_eq!(ann[0].sample_correct, Some(vec![1, 1, 0]));
    assert_eq!(ann[0].greedy_correct, Some(1));
    assert_eq!(stats.remote_calls, server.requests.load(Ordering::SeqCst));
    assert_eq!(stats.remote_calls, 4);
}

#[test]
fn dead_endpoint_is_a_judge_class_error() {
    let server = common::spawn(|_| None);
    let judge = Judge::new(JudgeStrategy::RemoteLlm, config(&server.url)).unwrap();
    let recs = vec![record("a", "Paris", &["Lyon"])];
    let err = judge.annotate_dataset(&recs, AnnotatePasses::default()).unwrap_err();
    assert!(matches!(err, Error::Unreachable { .. }), "{err}");
    assert_eq!(err.class(), elical_core::ErrorClass::Judge);
}
