//! Retelling prompt construction and batch submission.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::{submit_with_retry, ChatClient, ClientError, PromptRequest, RetryPolicy};
use crate::corpus::Passage;

pub const SYSTEM_PROMPT: &str =
    "You are a helpful assistant; follow the instructions in the prompt.";
pub const RETELL_MAX_NEW_TOKENS: u32 = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetellVerb {
    Describe,
    Summarize,
    Paraphrase,
}

impl RetellVerb {
    pub fn as_str(&self) -> &'static str {
        match self {
            RetellVerb::Describe => "describe",
            RetellVerb::Summarize => "summarize",
            RetellVerb::Paraphrase => "paraphrase",
        }
    }

    pub fn parse(s: &str) -> Option<RetellVerb> {
        match s {
            "describe" => Some(RetellVerb::Describe),
            "summarize" => Some(RetellVerb::Summarize),
            "paraphrase" => Some(RetellVerb::Paraphrase),
            _ => None,
        }
    }
}

impl std::fmt::Display for RetellVerb {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum RetellError {
    #[error("passage {0} has empty text")]
    EmptyPassage(String),
    #[error(transparent)]
    Client(#[from] ClientError),
}

/// Build the retelling request for one passage. Both verb slots carry the
/// same lowercase verb and the passage text is embedded verbatim.
pub fn build_prompt(
    verb: RetellVerb,
    passage: &Passage,
    model_id: &str,
) -> Result<PromptRequest, RetellError> {
    if passage.text.is_empty() {
        return Err(RetellError::EmptyPassage(passage.passage_id.clone()));
    }
    let v = verb.as_str();
    let user_text = format!(
        "In one paragraph, {v} the following book excerpt for a literary scholar \
analyzing narrative content. Do not include the book title or author's name in \
your response; {v} only the passage.\n\nPassage:\n{}",
        passage.text
    );
    Ok(PromptRequest {
        system_text: SYSTEM_PROMPT.to_string(),
        user_text,
        max_new_tokens: RETELL_MAX_NEW_TOKENS,
        model_id: model_id.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetellStatus {
    Ok,
    Failed,
}

/// One output record per input passage; failures carry the error string and
/// an empty text.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetellRecord {
    pub passage_id: String,
    pub verb: RetellVerb,
    pub model_id: String,
    pub run_id: String,
    pub text: String,
    pub status: RetellStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub attempts: u32,
}

#[derive(Debug, Clone)]
pub struct RetellSettings {
    pub verb: RetellVerb,
    pub model_id: String,
    pub run_id: String,
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
}

/// Retell every passage with bounded concurrent in-flight requests. Output
/// order matches input order and includes one record per passage; transient
/// failures are retried per policy and then recorded as failed. A config
/// error aborts the whole batch.
pub fn retell_batch(
    passages: &[Passage],
    settings: &RetellSettings,
    client: &dyn ChatClient,
) -> Result<Vec<RetellRecord>, RetellError> {
    let results: Mutex<Vec<Option<RetellRecord>>> = Mutex::new(vec![None; passages.len()]);
    let next = AtomicUsize::new(0);
    let aborted = AtomicBool::new(false);
    let config_error: Mutex<Option<ClientError>> = Mutex::new(None);
    let workers = settings.max_in_flight.max(1).min(passages.len().max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if aborted.load(Ordering::SeqCst) {
                    return;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= passages.len() {
                    return;
                }
                let passage = &passages[i];
                let record = match build_prompt(settings.verb, passage, &settings.model_id) {
                    Ok(request) => {
                        let (result, attempts) = submit_with_retry(
                            client,
                            &request,
                            &passage.passage_id,
                            settings.retry,
                        );
                        match result {
                            Ok(text) => RetellRecord {
                                passage_id: passage.passage_id.clone(),
                                verb: settings.verb,
                                model_id: settings.model_id.clone(),
                                run_id: settings.run_id.clone(),
                                text,
                                status: RetellStatus::Ok,
                                error: None,
                                attempts,
                            },
                            Err(err @ ClientError::Config(_)) => {
                                aborted.store(true, Ordering::SeqCst);
                                *config_error.lock().unwrap() = Some(err);
                                return;
                            }
                            Err(ClientError::Transport(msg)) => RetellRecord {
                                passage_id: passage.passage_id.clone(),
                                verb: settings.verb,
                                model_id: settings.model_id.clone(),
                                run_id: settings.run_id.clone(),
                                text: String::new(),
                                status: RetellStatus::Failed,
                                error: Some(msg),
                                attempts,
                            },
                        }
                    }
                    Err(e) => RetellRecord {
                        passage_id: passage.passage_id.clone(),
                        verb: settings.verb,
                        model_id: settings.model_id.clone(),
                        run_id: settings.run_id.clone(),
                        text: String::new(),
                        status: RetellStatus::Failed,
                        error: Some(e.to_string()),
                        attempts: 0,
                    },
                };
                results.lock().unwrap()[i] = Some(record);
            });
        }
    });

    if let Some(err) = config_error.into_inner().unwrap() {
        return Err(RetellError::Client(err));
    }
    Ok(results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every index visited"))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::MockChatClient;
    use std::collections::BTreeMap;
    use std::time::Duration;

    fn passage(id: &str, text: &str) -> Passage {
        Passage {
            passage_id: id.into(),
            book_id: "b".into(),
            paragraph_range: (0, 1),
            text: text.into(),
            token_count: text.split_whitespace().count(),
        }
    }

    fn settings(verb: RetellVerb) -> RetellSettings {
        RetellSettings {
            verb,
            model_id: "test-model".into(),
            run_id: "run0".into(),
            max_in_flight: 4,
            retry: RetryPolicy {
                attempts: 3,
                base_delay: Duration::from_millis(1),
            },
        }
    }

    #[test]
    fn prompt_matches_template_for_summarize() {
        let p = passage("p1", "The sea was calm.");
        let req = build_prompt(RetellVerb::Summarize, &p, "m").unwrap();
        assert!(req.user_text.starts_with(
            "In one paragraph, summarize the following book excerpt for a literary scholar analyzing narrative content."
        ));
        assert!(req.user_text.contains("Passage:\nThe sea was calm."));
        assert_eq!(req.max_new_tokens, 1024);
        assert_eq!(req.system_text, SYSTEM_PROMPT);
    }

    #[test]
    fn prompt_second_sentence_for_describe() {
        let p = passage("p1", "text");
        let req = build_prompt(RetellVerb::Describe, &p, "m").unwrap();
        assert!(req.user_text.contains(
            "Do not include the book title or author's name in your response; describe only the passage."
        ));
    }

    #[test]
    fn prompt_empty_passage_is_error() {
        let p = passage("p1", "");
        assert!(build_prompt(RetellVerb::Paraphrase, &p, "m").is_err());
    }

    #[test]
    fn verb_appears_twice_with_same_form() {
        for verb in [
            RetellVerb::Describe,
            RetellVerb::Summarize,
            RetellVerb::Paraphrase,
        ] {
            let p = passage("p1", "text");
            let req = build_prompt(verb, &p, "m").unwrap();
            assert_eq!(req.user_text.matches(verb.as_str()).count(), 2);
        }
    }

    #[test]
    fn batch_uses_fixture_per_passage() {
        let passages = vec![passage("a", "one"), passage("b", "two"), passage("c", "three")];
        let fixtures: BTreeMap<String, String> = [
            ("a".to_string(), "retell a".to_string()),
            ("b".to_string(), "retell b".to_string()),
            ("c".to_string(), "retell c".to_string()),
        ]
        .into();
        let client = MockChatClient::new(fixtures);
        let out = retell_batch(&passages, &settings(RetellVerb::Describe), &client).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[0].text, "retell a");
        assert_eq!(out[1].text, "retell b");
        assert_eq!(out[2].text, "retell c");
        assert!(out.iter().all(|r| r.status == RetellStatus::Ok));
    }

    #[test]
    fn batch_records_failures_and_continues() {
        let passages = vec![passage("a", "one"), passage("b", "two")];
        // Only "b" has a fixture, so "a" exhausts its retries.
        let fixtures: BTreeMap<String, String> =
            [("b".to_string(), "retell b".to_string())].into();
        let client = MockChatClient::new(fixtures);
        let out = retell_batch(&passages, &settings(RetellVerb::Summarize), &client).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].status, RetellStatus::Failed);
        assert!(out[0].error.is_some());
        assert_eq!(out[0].attempts, 3);
        assert_eq!(out[1].status, RetellStatus::Ok);
    }
}
