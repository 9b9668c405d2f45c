//! One-shot readability scoring through a chat-completions HTTP endpoint.
//!
//! One shot is drawn from the training data per run (by `shot_seed`) and
//! reused for every target sentence. Replies are parsed for a rating 1-4,
//! which is mapped to [0, 1] by `(r - 1) / 3`. Replies without a usable
//! rating are logged as failures and left out of the predictions.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use thiserror::Error;

use crate::corpus::{normalize, LabeledRecord};
use crate::predictions::Prediction;

pub const MARKER: &str = "[Readability Score]";

pub const SYSTEM_PROMPT: &str = "You are a helpful assistant that rates the readability of German sentences.";

pub const INSTRUCTIONS: &str = "I will give you a sentence and I want you to rate it's readability. \
If the sentence has a low readability, choose 1. \
If the sentence has a low to medium readability, choose 2. \
If the sentence has a medium to high readability, choose 3. \
If the sentence has a high readability, choose 4. \
Please only answer with a single digit corresponding to the readability level.";

/// Environment variable holding the bearer token, if the endpoint needs one.
pub const API_KEY_ENV: &str = "ARA_LLM_API_KEY";

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("no rating 1-4 found in reply {raw:?}")]
    Parse { raw: String },
    #[error("cannot build a prompt: {0}")]
    Prompt(String),
    #[error("endpoint unreachable after {attempts} attempts: {msg}")]
    Unreachable { attempts: usize, msg: String },
    #[error("endpoint rejected the credentials (HTTP {status})")]
    Auth { status: u16 },
    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("invalid client configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    pub system: String,
    pub user: String,
    pub marker: &'static str,
    pub shot_id: String,
}

/// Rounds a (possibly half-step) majority vote to an integer rating, with
/// halves rounding up.
pub fn shot_rating(vote: f64) -> u8 {
    (vote + 0.5).floor().clamp(1.0, 4.0) as u8
}

/// The one-shot user prompt. The message ends with the marker so that the
/// expected reply is just the digit.
pub fn build_prompt(target: &str, shot: &LabeledRecord) -> Result<PromptBundle, LlmError> {
    let target = target.trim();
    if target.is_empty() {
        return Err(LlmError::Prompt("empty target sentence".into()));
    }
    let shot_sentence = shot.record.target.trim();
    let rating = shot_rating(shot.label.majority_vote);
    let user = format!(
        "{INSTRUCTIONS}\n\n[Sentence] {shot_sentence} {MARKER} {rating}\n\n[Sentence] {target} {MARKER}"
    );
    Ok(PromptBundle { system: SYSTEM_PROMPT.to_string(), user, marker: MARKER, shot_id: shot.record.id.clone() })
}

/// Picks the run's single shot.
pub fn select_shot(train: &[LabeledRecord], shot_seed: u64) -> Option<&LabeledRecord> {
    train.choose(&mut ChaCha8Rng::seed_from_u64(shot_seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParsedScore {
    pub rating: u8,
    /// The marker was missing and the first standalone digit was used.
    pub fallback: bool,
}

fn is_rating(c: char) -> bool {
    matches!(c, '1'..='4')
}

/// Finds the rating: the first digit 1-4 after the first marker, or, if the
/// reply has no marker, the first digit 1-4 not adjacent to another
/// alphanumeric character.
pub fn parse_score(text: &str) -> Result<ParsedScore, LlmError> {
    if let Some(pos) = text.find(MARKER) {
        return text[pos + MARKER.len()..]
            .chars()
            .find(|&c| is_rating(c))
            .map(|c| ParsedScore { rating: c as u8 - b'0', fallback: false })
            .ok_or_else(|| LlmError::Parse { raw: text.to_string() });
    }
    let chars: Vec<char> = text.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        let standalone = |j: Option<usize>| j.and_then(|j| chars.get(j)).is_none_or(|n| !n.is_alphanumeric());
        if is_rating(c) && standalone(i.checked_sub(1)) && standalone(Some(i + 1)) {
            return Ok(ParsedScore { rating: c as u8 - b'0', fallback: true });
        }
    }
    Err(LlmError::Parse { raw: text.to_string() })
}

#[derive(Debug, Clone)]
pub struct EndpointConfig {
    /// Either a base URL or the full `.../chat/completions` URL.
    pub endpoint: String,
    pub model_name: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_parallel: usize,
    /// Retries after the first attempt on transport errors and 429/5xx.
    pub max_retries: usize,
    pub backoff_base: Duration,
    /// Minimum gap between the starts of two requests.
    pub pacing: Duration,
}

impl EndpointConfig {
    pub fn new(endpoint: &str, model_name: &str) -> Self {
        EndpointConfig {
            endpoint: endpoint.to_string(),
            model_name: model_name.to_string(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            timeout: Duration::from_secs(60),
            max_parallel: 1,
            max_retries: 3,
            backoff_base: Duration::from_millis(500),
            pacing: Duration::ZERO,
        }
    }

    pub fn url(&self) -> String {
        let base = self.endpoint.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

/// Request body with sampling disabled.
pub fn request_body(model_name: &str, prompt: &PromptBundle) -> Value {
    json!({
        "model": model_name,
        "messages": [
            {"role": "system", "content": prompt.system},
            {"role": "user", "content": prompt.user},
        ],
        "temperature": 0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub id: String,
    pub raw_reply: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlmRun {
    pub shot_id: String,
    /// In input order.
    pub predictions: Vec<Prediction>,
    pub failures: Vec<Failure>,
    /// Ids whose rating came from the marker-less fallback.
    pub fallback_ids: Vec<String>,
}

fn escape(raw: &str) -> String {
    raw.replace('\\', "\\\\").replace('\t', "\\t").replace('\n', "\\n").replace('\r', "\\r")
}

/// `id<TAB>raw_reply` lines with backslash escapes for tabs and newlines.
pub fn render_failure_log(failures: &[Failure]) -> String {
    failures.iter().map(|f| format!("{}\t{}\n", f.id, escape(&f.raw_reply))).collect()
}

enum Outcome {
    Scored(ParsedScore),
    Failed(String),
}

struct Pacer {
    gap: Duration,
    next: Mutex<Instant>,
}

impl Pacer {
    fn wait(&self) {
        if self.gap.is_zero() {
            return;
        }
        let start = {
            let mut next = self.next.lock().expect("pacer lock");
            let start = (*next).max(Instant::now());
            *next = start + self.gap;
            start
        };
        thread::sleep(start.saturating_duration_since(Instant::now()));
    }
}

/// `Ok(Err(_))` is a retryable failure.
fn send_once(
    client: &reqwest::blocking::Client,
    config: &EndpointConfig,
    body: &Value,
) -> Result<Result<String, String>, LlmError> {
    let mut req = client.post(config.url()).json(body);
    if let Some(key) = &config.api_key {
        req = req.bearer_auth(key);
    }
    let resp = match req.send() {
        Ok(r) => r,
        Err(e) => return Ok(Err(e.to_string())),
    };
    let status = resp.status().as_u16();
    let text = match resp.text() {
        Ok(t) => t,
        Err(e) => return Ok(Err(e.to_string())),
    };
    match status {
        200..=299 => Ok(Ok(text)),
        401 | 403 => Err(LlmError::Auth { status }),
        429 | 500..=599 => Ok(Err(format!("HTTP {status}: {text}"))),
        _ => Err(LlmError::Http { status, body: text }),
    }
}

/// Sends one request, retrying transport errors with exponential backoff.
/// Returns the raw response body.
fn request(
    client: &reqwest::blocking::Client,
    config: &EndpointConfig,
    pacer: &Pacer,
    body: &Value,
) -> Result<String, LlmError> {
    let mut last = String::new();
    for attempt in 0..=config.max_retries {
        if attempt > 0 {
            let delay = config.backoff_base * 2u32.saturating_pow(attempt as u32 - 1);
            log::warn!("request failed ({last}); retry {attempt} in {delay:?}");
            thread::sleep(delay);
        }
        pacer.wait();
        match send_once(client, config, body)? {
            Ok(text) => return Ok(text),
            Err(msg) => last = msg,
        }
    }
    Err(LlmError::Unreachable { attempts: config.max_retries + 1, msg: last })
}

/// Extracts `choices[0].message.content`, or returns the whole body as the
/// raw reply if the shape is unexpected.
fn reply_content(body: &str) -> Result<String, String> {
    serde_json::from_str::<Value>(body)
        .ok()
        .and_then(|v| v.pointer("/choices/0/message/content").and_then(Value::as_str).map(str::to_string))
        .ok_or_else(|| body.to_string())
}

/// Scores `(id, target sentence)` pairs with up to `max_parallel` requests
/// in flight. Transport, authentication and HTTP errors abort the run;
/// unparseable replies are recorded per record.
pub fn score_remote(
    config: &EndpointConfig,
    records: &[(String, String)],
    shot: &LabeledRecord,
) -> Result<LlmRun, LlmError> {
    if config.max_parallel == 0 {
        return Err(LlmError::Config("max_parallel must be at least 1".into()));
    }
    let prompts: Vec<PromptBundle> =
        records.iter().map(|(_, target)| build_prompt(target, shot)).collect::<Result<_, _>>()?;
    let client = reqwest::blocking::Client::builder()
        .timeout(config.timeout)
        .build()
        .map_err(|e| LlmError::Config(e.to_string()))?;
    let pacer = Pacer { gap: config.pacing, next: Mutex::new(Instant::now()) };
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let outcomes: Mutex<Vec<Option<Outcome>>> = Mutex::new((0..records.len()).map(|_| None).collect());
    let fatal: Mutex<Option<LlmError>> = Mutex::new(None);

    thread::scope(|s| {
        for _ in 0..config.max_parallel.min(records.len()) {
            s.spawn(|| loop {
                if abort.load(Ordering::SeqCst) {
                    return;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= records.len() {
                    return;
                }
                let body = request_body(&config.model_name, &prompts[i]);
                let outcome = match request(&client, config, &pacer, &body) {
                    Ok(text) => match reply_content(&text) {
                        Ok(content) => match parse_score(&content) {
                            Ok(p) => Outcome::Scored(p),
                            Err(_) => Outcome::Failed(content),
                        },
                        Err(raw) => Outcome::Failed(raw),
                    },
                    Err(e) => {
                        abort.store(true, Ordering::SeqCst);
                        fatal.lock().expect("error lock").get_or_insert(e);
                        return;
                    }
                };
                outcomes.lock().expect("outcome lock")[i] = Some(outcome);
            });
        }
    });

    if let Some(e) = fatal.into_inner().expect("error lock") {
        return Err(e);
    }
    let mut run = LlmRun {
        shot_id: shot.record.id.clone(),
        predictions: Vec::new(),
        failures: Vec::new(),
        fallback_ids: Vec::new(),
    };
    for ((id, _), outcome) in records.iter().zip(outcomes.into_inner().expect("outcome lock")) {
        match outcome.expect("every record processed") {
            Outcome::Scored(p) => {
                if p.fallback {
                    log::info!("{id}: rating {} taken from a reply without the marker", p.rating);
                    run.fallback_ids.push(id.clone());
                }
                let score = normalize(p.rating as f64).expect("ratings are 1-4");
                run.predictions.push(Prediction::new(id.clone(), score));
            }
            Outcome::Failed(raw) => {
                log::warn!("{id}: no rating in reply");
                run.failures.push(Failure { id: id.clone(), raw_reply: raw });
            }
        }
    }
    Ok(run)
}
