#![allow(dead_code)]

use std::path::PathBuf;

use esg_readability::conllu::parse_validated;
use esg_readability::corpus::{read_corpus, Record, Split};
use esg_readability::pipeline::Dataset;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DATA_ENV: &str = "ESG_ARA_DATA";

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("data")
}

pub fn sample_corpus() -> PathBuf {
    data_dir().join("sample_corpus.jsonl")
}

pub fn sample_conllu() -> PathBuf {
    data_dir().join("sample.conllu")
}

pub fn sample_dataset() -> Dataset {
    Dataset::load(&sample_corpus(), Some(&sample_conllu())).unwrap()
}

/// A real corpus directory given through `ESG_ARA_DATA`, holding
/// `corpus.jsonl` and `corpus.conllu`.
pub fn real_data() -> Option<(PathBuf, PathBuf)> {
    let dir = PathBuf::from(std::env::var_os(DATA_ENV)?);
    let pair = (dir.join("corpus.jsonl"), dir.join("corpus.conllu"));
    (pair.0.is_file() && pair.1.is_file()).then_some(pair)
}

/// Split sizes of the surrogate corpus, matching the real one.
pub const SURROGATE_SIZES: [(Split, usize); 3] = [(Split::Train, 960), (Split::Dev, 267), (Split::Eval, 407)];

pub struct Surrogate {
    pub corpus: String,
    pub conllu: String,
}

impl Surrogate {
    pub fn records(&self) -> Vec<Record> {
        read_corpus(self.corpus.as_bytes()).unwrap()
    }

    pub fn dataset(&self) -> Dataset {
        Dataset::new(&self.records(), parse_validated(&self.conllu).unwrap()).unwrap()
    }

    pub fn write(&self, dir: &std::path::Path) -> (PathBuf, PathBuf) {
        let corpus = dir.join("corpus.jsonl");
        let conllu = dir.join("corpus.conllu");
        std::fs::write(&corpus, &self.corpus).unwrap();
        std::fs::write(&conllu, &self.conllu).unwrap();
        (corpus, conllu)
    }
}

struct Tok {
    form: &'static str,
    upos: &'static str,
    head: usize,
    deprel: &'static str,
}

#[derive(Default)]
struct Builder {
    toks: Vec<Tok>,
}

impl Builder {
    fn push(&mut self, form: &'static str, upos: &'static str, deprel: &'static str) -> usize {
        self.toks.push(Tok { form, upos, head: 0, deprel });
        self.toks.len()
    }

    fn attach(&mut self, dep: usize, head: usize) {
        self.toks[dep - 1].head = head;
    }
}

const SHORT_NOUNS: [&str; 10] = ["Firma", "Ziel", "Team", "Werk", "Plan", "Markt", "Wasser", "Strom", "Abfall", "Kunde"];
const LONG_NOUNS: [&str; 8] = [
    "Nachhaltigkeitsstrategie",
    "Treibhausgasemissionen",
    "Lieferkettenverantwortung",
    "Energieeffizienzmaßnahmen",
    "Umweltmanagementsystem",
    "Arbeitssicherheitsrichtlinien",
    "Wertschöpfungskette",
    "Berichterstattungspflichten",
];
const ADJS: [&str; 6] = ["neue", "gute", "große", "umweltbezogene", "gesellschaftliche", "regulatorische"];
const VERBS: [&str; 5] = ["senkt", "prüft", "stärkt", "plant", "fördert"];
const PARTICIPLES: [&str; 5] = ["geprüft", "gesenkt", "gestärkt", "umgesetzt", "veröffentlicht"];
const SCONJS: [&str; 4] = ["weil", "dass", "wenn", "obwohl"];
const ADPS: [&str; 4] = ["für", "mit", "bei", "nach"];

struct Shape {
    long_nouns: usize,
    genitives: usize,
    passive: bool,
    subclause: bool,
}

fn noun(b: &mut Builder, rng: &mut ChaCha8Rng, p_long: f64, shape: &mut Shape, deprel: &'static str) -> usize {
    let form = if rng.gen_bool(p_long) {
        shape.long_nouns += 1;
        *LONG_NOUNS.choose(rng).unwrap()
    } else {
        *SHORT_NOUNS.choose(rng).unwrap()
    };
    b.push(form, "NOUN", deprel)
}

/// DET ADJ* NOUN, optionally followed by a genitive DET NOUN chain.
fn noun_phrase(
    b: &mut Builder,
    rng: &mut ChaCha8Rng,
    level: usize,
    shape: &mut Shape,
    deprel: &'static str,
) -> usize {
    let p_long = 0.1 + 0.2 * level as f64;
    let det = b.push("die", "DET", "det");
    let n_adj = rng.gen_range(0..=level.min(2));
    let adjs: Vec<usize> = (0..n_adj).map(|_| b.push(ADJS.choose(rng).unwrap(), "ADJ", "amod")).collect();
    let head = noun(b, rng, p_long, shape, deprel);
    b.attach(det, head);
    for a in adjs {
        b.attach(a, head);
    }
    let mut governor = head;
    for _ in 0..level {
        if !rng.gen_bool(0.45) {
            continue;
        }
        shape.genitives += 1;
        let det = b.push("der", "DET", "det");
        let n = noun(b, rng, p_long + 0.2, shape, "nmod");
        b.attach(det, n);
        b.attach(n, governor);
        governor = n;
    }
    head
}

fn prep_phrase(b: &mut Builder, rng: &mut ChaCha8Rng, level: usize, shape: &mut Shape, head: usize) {
    let adp = b.push(ADPS.choose(rng).unwrap(), "ADP", "case");
    let n = noun_phrase(b, rng, level.saturating_sub(1), shape, "obl");
    b.attach(adp, n);
    b.attach(n, head);
}

fn sentence(rng: &mut ChaCha8Rng) -> (Builder, Shape) {
    let level = *[0usize, 0, 0, 0, 1, 1, 1, 2, 2, 3].choose(rng).unwrap();
    let mut shape = Shape { long_nouns: 0, genitives: 0, passive: false, subclause: false };
    let mut b = Builder::default();
    shape.passive = rng.gen_bool(0.1 + 0.2 * level as f64);
    shape.subclause = rng.gen_bool(0.05 + 0.25 * level as f64);
    // Prepositional phrases add length without adding difficulty.
    let n_pp = rng.gen_range(0..=3);
    let root;
    if shape.passive {
        let subj = noun_phrase(&mut b, rng, level, &mut shape, "nsubj:pass");
        let aux = b.push("wird", "AUX", "aux:pass");
        let pps_start = b.toks.len();
        for _ in 0..n_pp {
            prep_phrase(&mut b, rng, level, &mut shape, 0);
        }
        root = b.push(PARTICIPLES.choose(rng).unwrap(), "VERB", "root");
        b.attach(subj, root);
        b.attach(aux, root);
        for t in pps_start..root - 1 {
            if b.toks[t].head == 0 {
                b.toks[t].head = root;
            }
        }
    } else {
        let subj = noun_phrase(&mut b, rng, level, &mut shape, "nsubj");
        root = b.push(VERBS.choose(rng).unwrap(), "VERB", "root");
        b.attach(subj, root);
        let obj = noun_phrase(&mut b, rng, level, &mut shape, "obj");
        b.attach(obj, root);
        for _ in 0..n_pp {
            prep_phrase(&mut b, rng, level, &mut shape, root);
        }
    }
    if shape.subclause {
        let comma = b.push(",", "PUNCT", "punct");
        let mark = b.push(SCONJS.choose(rng).unwrap(), "SCONJ", "mark");
        let subj = noun_phrase(&mut b, rng, level.saturating_sub(1), &mut shape, "nsubj");
        let obj = noun_phrase(&mut b, rng, level.saturating_sub(1), &mut shape, "obj");
        let verb = b.push(VERBS.choose(rng).unwrap(), "VERB", "advcl");
        for d in [comma, mark, subj, obj] {
            b.attach(d, verb);
        }
        b.attach(verb, root);
    }
    let stop = b.push(".", "PUNCT", "punct");
    b.attach(stop, root);
    (b, shape)
}

fn detokenize(toks: &[Tok]) -> String {
    let mut out = String::new();
    for t in toks {
        if !out.is_empty() && t.form != "." && t.form != "," {
            out.push(' ');
        }
        out.push_str(t.form);
    }
    out
}

/// Synthetic corpus at the real corpus's split sizes. Difficulty grows with
/// genitive chains, subordinate clauses, passives and long nouns but not
/// with length;
/// each sentence gets 4-6 noisy annotator ratings around it.
pub fn surrogate(seed: u64) -> Surrogate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corpus = String::new();
    let mut conllu = String::new();
    let mut k = 0;
    for (split, size) in SURROGATE_SIZES {
        for _ in 0..size {
            k += 1;
            let id = format!("sur-{k:05}");
            let (b, shape) = sentence(&mut rng);
                        let difficulty = 0.55 * shape.genitives as f64
                + 0.7 * shape.subclause as u8 as f64
                + 0.5 * shape.passive as u8 as f64
                + 0.3 * shape.long_nouns as f64;
            let centre = 4.5 - 0.9 * difficulty;
            let n_ratings = rng.gen_range(4..=6);
            let ratings: Vec<u8> = (0..n_ratings)
                .map(|_| (centre + rng.gen_range(-0.9..0.9)).round().clamp(1.0, 4.0) as u8)
                .collect();
            let target = detokenize(&b.toks);
            let line = serde_json::json!({
                "id": id, "context": [], "target": target, "ratings": ratings, "split": split.as_str(),
            });
            corpus.push_str(&line.to_string());
            corpus.push('\n');
            conllu.push_str(&format!("# sent_id = {id}\n# text = {target}\n"));
            for (i, t) in b.toks.iter().enumerate() {
                conllu.push_str(&format!(
                    "{}\t{}\t{}\t{}\t_\t_\t{}\t{}\t_\t_\n",
                    i + 1,
                    t.form,
                    t.form.to_lowercase(),
                    t.upos,
                    t.head,
                    t.deprel
                ));
            }
            conllu.push('\n');
        }
    }
    Surrogate { corpus, conllu }
}

/// Minimal HTTP/1.1 server for the chat-completion client. Each connection
/// carries one request and is closed after the reply.
pub struct MockServer {
    pub url: String,
    pub hits: std::sync::Arc<std::sync::atomic::AtomicUsize>,
}

pub type Handler = fn(&serde_json::Value) -> (u16, String);

impl MockServer {
    pub fn start(handler: Handler) -> MockServer {
        use std::io::{BufRead, BufReader, Read, Write};
        use std::sync::atomic::Ordering;

        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1", listener.local_addr().unwrap());
        let hits = std::sync::Arc::new(std::sync::atomic::AtomicUsize::new(0));
        let counter = hits.clone();
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut length = 0;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 {
                        break;
                    }
                    let line = line.trim_end();
                    if line.is_empty() {
                        break;
                    }
                    if let Some((k, v)) = line.split_once(':') {
                        if k.eq_ignore_ascii_case("content-length") {
                            length = v.trim().parse().unwrap_or(0);
                        }
                    }
                }
                let mut body = vec![0; length];
                if reader.read_exact(&mut body).is_err() {
                    continue;
                }
                counter.fetch_add(1, Ordering::SeqCst);
                let request: serde_json::Value = serde_json::from_slice(&body).unwrap_or_default();
                let (status, reply) = handler(&request);
                let response = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                    reply.len()
                );
                let _ = stream.write_all(response.as_bytes());
            }
        });
        MockServer { url, hits }
    }
}

/// Wraps assistant text in a chat-completion response body.
pub fn completion(text: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
}

/// The sentence being rated: the text between the last `[Sentence]` tag and
/// the trailing marker of the user message.
pub fn target_of(request: &serde_json::Value) -> String {
    let user = request["messages"]
        .as_array()
        .and_then(|m| m.iter().rev().find(|m| m["role"] == "user"))
        .and_then(|m| m["content"].as_str())
        .unwrap_or_default();
    let tail = user.rsplit("[Sentence] ").next().unwrap_or_default();
    tail.trim_end().trim_end_matches("[Readability Score]").trim().to_string()
}

/// Deterministic replies keyed on the target sentence: most get a marked
/// rating, some a bare digit and some no rating at all.
pub fn scripted_reply(request: &serde_json::Value) -> (u16, String) {
    let target = target_of(request);
    let h = target.bytes().fold(0u32, |acc, b| acc.wrapping_mul(31).wrapping_add(b as u32));
    let text = match h % 6 {
        k @ 0..=3 => format!("[Readability Score] {}", k + 1),
        4 => "I would say 3.".to_string(),
        _ => "No rating possible.".to_string(),
    };
    (200, completion(&text))
}
