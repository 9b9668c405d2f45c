//! Reading, writing and validating dependency parses in CoNLL-U format.
//!
//! Only the basic tree is used. Multiword-token ranges (`3-4`) and empty
//! nodes (`5.1`) are skipped on input; comments other than `sent_id` are
//! ignored.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConlluError {
    #[error("line {line}: expected 10 tab-separated columns, found {found}")]
    ColumnCount { line: usize, found: usize },
    #[error("line {line}: {column} {value:?} is not a non-negative integer")]
    NotAnInteger { line: usize, column: &'static str, value: String },
    #[error("line {line}: malformed feature {feature:?}")]
    Feature { line: usize, feature: String },
    #[error("sentence ending at line {line} has no `# sent_id` comment")]
    MissingSentId { line: usize },
    #[error("line {line}: duplicate sent_id {id:?}")]
    DuplicateSentId { line: usize, id: String },
    #[error(transparent)]
    Invalid(#[from] ValidationError),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ValidationError {
    #[error("sentence {sent_id}: no tokens")]
    Empty { sent_id: String },
    #[error("sentence {sent_id}: token indices must run 1..=n, token {position} has index {index}")]
    NonSequentialIndex { sent_id: String, position: usize, index: usize },
    #[error("sentence {sent_id}: no root token")]
    NoRoot { sent_id: String },
    #[error("sentence {sent_id}: multiple roots at tokens {indices:?}")]
    MultipleRoots { sent_id: String, indices: Vec<usize> },
    #[error("sentence {sent_id}: token {token} has head {head} outside 0..={len}")]
    HeadOutOfRange { sent_id: String, token: usize, head: usize, len: usize },
    #[error("sentence {sent_id}: cycle through tokens {indices:?}")]
    Cycle { sent_id: String, indices: Vec<usize> },
}

/// One syntactic word of a sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    /// 1-based position in the sentence.
    pub index: usize,
    pub form: String,
    pub lemma: String,
    /// Universal POS tag; the tag used by every feature.
    pub upos: String,
    pub xpos: String,
    pub feats: BTreeMap<String, String>,
    /// Index of the head token, 0 for the root.
    pub head: usize,
    pub deprel: String,
    pub deps: String,
    pub misc: String,
}

impl Token {
    pub fn is_punct(&self) -> bool {
        self.upos == "PUNCT"
    }

    pub fn is_root(&self) -> bool {
        self.head == 0
    }

    pub fn feat(&self, key: &str) -> Option<&str> {
        self.feats.get(key).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedSentence {
    pub sent_id: String,
    pub tokens: Vec<Token>,
}

impl ParsedSentence {
    /// Token with the given 1-based index. Only meaningful on validated
    /// sentences, where indices run `1..=n`.
    pub fn token(&self, index: usize) -> Option<&Token> {
        index.checked_sub(1).and_then(|i| self.tokens.get(i))
    }

    pub fn root(&self) -> Option<&Token> {
        self.tokens.iter().find(|t| t.is_root())
    }

    /// Head token of `token`, `None` for the root.
    pub fn head_of(&self, token: &Token) -> Option<&Token> {
        if token.is_root() {
            None
        } else {
            self.token(token.head)
        }
    }

    pub fn non_punct(&self) -> impl Iterator<Item = &Token> {
        self.tokens.iter().filter(|t| !t.is_punct())
    }
}

fn parse_index(line: usize, column: &'static str, value: &str) -> Result<usize, ConlluError> {
    value.parse().map_err(|_| ConlluError::NotAnInteger {
        line,
        column,
        value: value.to_string(),
    })
}

fn parse_feats(line: usize, raw: &str) -> Result<BTreeMap<String, String>, ConlluError> {
    let mut feats = BTreeMap::new();
    if raw == "_" {
        return Ok(feats);
    }
    for pair in raw.split('|') {
        match pair.split_once('=') {
            Some((k, v)) if !k.is_empty() && !v.is_empty() => {
                feats.insert(k.to_string(), v.to_string());
            }
            _ => {
                return Err(ConlluError::Feature { line, feature: pair.to_string() });
            }
        }
    }
    Ok(feats)
}

fn parse_token(line_no: usize, line: &str) -> Result<Option<Token>, ConlluError> {
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() != 10 {
        return Err(ConlluError::ColumnCount { line: line_no, found: cols.len() });
    }
    if cols[0].contains('-') || cols[0].contains('.') {
        return Ok(None);
    }
    Ok(Some(Token {
        index: parse_index(line_no, "ID", cols[0])?,
        form: cols[1].to_string(),
        lemma: cols[2].to_string(),
        upos: cols[3].to_string(),
        xpos: cols[4].to_string(),
        feats: parse_feats(line_no, cols[5])?,
        head: parse_index(line_no, "HEAD", cols[6])?,
        deprel: cols[7].to_string(),
        deps: cols[8].to_string(),
        misc: cols[9].to_string(),
    }))
}

/// Parses a CoNLL-U document. Structural tree checks are left to
/// [`validate`].
pub fn parse_conllu(text: &str) -> Result<Vec<ParsedSentence>, ConlluError> {
    let mut sentences = Vec::new();
    let mut seen = HashSet::new();
    let mut sent_id: Option<(String, usize)> = None;
    let mut tokens = Vec::new();
    let mut in_sentence = false;

    let mut finish = |sent_id: &mut Option<(String, usize)>,
                      tokens: &mut Vec<Token>,
                      line: usize|
     -> Result<(), ConlluError> {
        let (id, id_line) = sent_id.take().ok_or(ConlluError::MissingSentId { line })?;
        if !seen.insert(id.clone()) {
            return Err(ConlluError::DuplicateSentId { line: id_line, id });
        }
        sentences.push(ParsedSentence { sent_id: id, tokens: std::mem::take(tokens) });
        Ok(())
    };

    let mut last_line = 0;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        last_line = line_no;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            if in_sentence {
                finish(&mut sent_id, &mut tokens, line_no)?;
                in_sentence = false;
            }
            continue;
        }
        in_sentence = true;
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once('=') {
                if key.trim() == "sent_id" {
                    sent_id = Some((value.trim().to_string(), line_no));
                }
            }
            continue;
        }
        if let Some(token) = parse_token(line_no, line)? {
            tokens.push(token);
        }
    }
    if in_sentence {
        finish(&mut sent_id, &mut tokens, last_line)?;
    }
    Ok(sentences)
}

fn feats_column(feats: &BTreeMap<String, String>) -> String {
    if feats.is_empty() {
        return "_".to_string();
    }
    feats.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join("|")
}

/// Writes sentences back to CoNLL-U, one blank line after each sentence.
pub fn to_conllu(sentences: &[ParsedSentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        writeln!(out, "# sent_id = {}", s.sent_id).unwrap();
        for t in &s.tokens {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                t.index,
                t.form,
                t.lemma,
                t.upos,
                t.xpos,
                feats_column(&t.feats),
                t.head,
                t.deprel,
                t.deps,
                t.misc
            )
            .unwrap();
        }
        out.push('\n');
    }
    out
}

/// Checks the tree invariants: sequential indices, exactly one root, heads in
/// range and no cycles.
pub fn validate(sentence: &ParsedSentence) -> Result<(), ValidationError> {
    let sent_id = sentence.sent_id.clone();
    let n = sentence.tokens.len();
    if n == 0 {
        return Err(ValidationError::Empty { sent_id });
    }
    for (pos, t) in sentence.tokens.iter().enumerate() {
        if t.index != pos + 1 {
            return Err(ValidationError::NonSequentialIndex { sent_id, position: pos + 1, index: t.index });
        }
    }
    for t in &sentence.tokens {
        if t.head > n {
            return Err(ValidationError::HeadOutOfRange { sent_id, token: t.index, head: t.head, len: n });
        }
    }
    let roots: Vec<usize> = sentence.tokens.iter().filter(|t| t.is_root()).map(|t| t.index).collect();
    match roots.len() {
        0 => {
            // With no root every head chain must loop; report that loop.
            let indices = find_cycle(sentence).unwrap_or_default();
            if indices.is_empty() {
                return Err(ValidationError::NoRoot { sent_id });
            }
            return Err(ValidationError::Cycle { sent_id, indices });
        }
        1 => {}
        _ => return Err(ValidationError::MultipleRoots { sent_id, indices: roots }),
    }
    if let Some(indices) = find_cycle(sentence) {
        return Err(ValidationError::Cycle { sent_id, indices });
    }
    Ok(())
}

/// Returns the sorted token indices of the first head cycle found, if any.
/// Assumes heads are in range.
fn find_cycle(sentence: &ParsedSentence) -> Option<Vec<usize>> {
    let n = sentence.tokens.len();
    // 0 = unvisited, 1 = on current path, 2 = reaches the root
    let mut state = vec![0u8; n + 1];
    for start in 1..=n {
        let mut path = Vec::new();
        let mut cur = start;
        while cur != 0 && state[cur] == 0 {
            state[cur] = 1;
            path.push(cur);
            cur = sentence.tokens[cur - 1].head;
        }
        if cur != 0 && state[cur] == 1 {
            let pos = path.iter().position(|&p| p == cur).expect("cycle start on path");
            let mut cycle = path[pos..].to_vec();
            cycle.sort_unstable();
            return Some(cycle);
        }
        for p in path {
            state[p] = 2;
        }
    }
    None
}

/// Parses and validates every sentence.
pub fn parse_validated(text: &str) -> Result<Vec<ParsedSentence>, ConlluError> {
    let sentences = parse_conllu(text)?;
    for s in &sentences {
        validate(s)?;
    }
    Ok(sentences)
}
