//! Tokenizer, vocabulary and the fixed 32-slot caption encoding.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UKN: usize = 3;
pub const RESERVED: usize = 4;
pub const RESERVED_TOKENS: [&str; RESERVED] = ["<PAD>", "<BOS>", "<EOS>", "UKN"];

pub const DEFAULT_VOCAB_CAP: usize = 15_000;
pub const MAX_CONTENT_TOKENS: usize = 30;
/// BOS + 30 content + EOS.
pub const ENCODED_LEN: usize = MAX_CONTENT_TOKENS + 2;

/// Rule-based tokenizer: lowercase, split on whitespace, detach leading and
/// trailing ASCII punctuation one character at a time, split a trailing `'s`.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.to_lowercase().split_whitespace() {
        let lead = word.len() - word.trim_start_matches(|c: char| c.is_ascii_punctuation()).len();
        let core_and_tail = &word[lead..];
        let core = core_and_tail.trim_end_matches(|c: char| c.is_ascii_punctuation());
        let tail = &core_and_tail[core.len()..];

        out.extend(word[..lead].chars().map(String::from));
        if let Some(stem) = core.strip_suffix("'s").filter(|s| !s.is_empty()) {
            out.push(stem.to_string());
            out.push("'s".to_string());
        } else if !core.is_empty() {
            out.push(core.to_string());
        }
        out.extend(tail.chars().map(String::from));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, usize>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    /// Builds a vocabulary from an ordered list of content tokens (ids 4..).
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut id_to_token: Vec<String> = RESERVED_TOKENS.iter().map(|s| s.to_string()).collect();
        let mut token_to_id: HashMap<String, usize> =
            id_to_token.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        for tok in tokens {
            let tok = tok.into();
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(Error::arg(format!("invalid vocabulary token {tok:?}")));
            }
            if token_to_id.contains_key(&tok) {
                return Err(Error::arg(format!("duplicate vocabulary token {tok:?}")));
            }
            token_to_id.insert(tok.clone(), id_to_token.len());
            id_to_token.push(tok);
        }
        Ok(Vocabulary {
            token_to_id,
            id_to_token,
        })
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(String::as_str)
    }

    /// Content tokens in id order, excluding the reserved entries.
    pub fn content_tokens(&self) -> &[String] {
        &self.id_to_token[RESERVED..]
    }

    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        for t in self.content_tokens() {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        Vocabulary::from_tokens(text.lines())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Vocabulary::parse(&text)
    }
}

/// Keeps the `cap` most frequent tokens; ties go to the lexicographically
/// smaller token.
pub fn build_vocab<C, S>(corpus: C, cap: usize) -> Result<Vocabulary>
where
    C: IntoIterator<Item = S>,
    S: AsRef<[String]>,
{
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let corpus: Vec<S> = corpus.into_iter().collect();
    if corpus.is_empty() {
        return Err(Error::arg("cannot build a vocabulary from an empty corpus"));
    }
    for sentence in &corpus {
        for tok in sentence.as_ref() {
            if RESERVED_TOKENS.contains(&tok.as_str()) {
                continue;
            }
            *counts.entry(tok.as_str()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    // stable sort over lexicographic order keeps the tie-break
    ranked.sort_by_key(|&(_, count)| std::cmp::Reverse(count));
    Vocabulary::from_tokens(ranked.into_iter().take(cap).map(|(t, _)| t.to_string()))
}

/// A caption as 32 ids: BOS, up to 30 content ids, EOS, then PAD.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenizedCaption {
    ids: Vec<usize>,
    content_length: usize,
}

impl TokenizedCaption {
    /// Validates an already-encoded id layout.
    pub fn from_ids(ids: Vec<usize>) -> Result<Self> {
        if ids.len() != ENCODED_LEN {
            return Err(Error::arg(format!(
                "encoded caption must have {ENCODED_LEN} ids, got {}",
                ids.len()
            )));
        }
        if ids[0] != BOS {
            return Err(Error::arg("encoded caption must start with BOS"));
        }
        let eos = ids
            .iter()
            .position(|&i| i == EOS)
            .ok_or_else(|| Error::arg("encoded caption has no EOS"))?;
        let content = &ids[1..eos];
        if content.iter().any(|&i| i == PAD || i == BOS) {
            return Err(Error::arg("PAD or BOS inside caption content"));
        }
        if ids[eos + 1..].iter().any(|&i| i != PAD) {
            return Err(Error::arg("non-PAD id after EOS"));
        }
        Ok(TokenizedCaption {
            content_length: eos - 1,
            ids,
        })
    }

    /// Encodes raw content ids (already mapped), truncating to 30.
    pub fn from_content(content: &[usize]) -> Self {
        let n = content.len().min(MAX_CONTENT_TOKENS);
        let mut ids = vec![PAD; ENCODED_LEN];
        ids[0] = BOS;
        ids[1..=n].copy_from_slice(&content[..n]);
        ids[n + 1] = EOS;
        TokenizedCaption {
            ids,
            content_length: n,
        }
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn content_length(&self) -> usize {
        self.content_length
    }

    pub fn content(&self) -> &[usize] {
        &self.ids[1..=self.content_length]
    }

    /// Position of EOS in `ids`.
    pub fn eos_position(&self) -> usize {
        self.content_length + 1
    }

    /// Teacher-forced decoder input: `ids[t]` for every step whose target
    /// `ids[t + 1]` is not PAD (BOS through the last content token).
    pub fn inputs(&self) -> &[usize] {
        &self.ids[..=self.content_length]
    }

    /// Next-token targets aligned with [`inputs`](Self::inputs), ending with EOS.
    pub fn targets(&self) -> &[usize] {
        &self.ids[1..=self.eos_position()]
    }
}

pub fn encode(tokens: &[String], vocab: &Vocabulary) -> TokenizedCaption {
    let content: Vec<usize> = tokens
        .iter()
        .take(MAX_CONTENT_TOKENS)
        .map(|t| vocab.id(t).filter(|&i| i >= RESERVED).unwrap_or(UKN))
        .collect();
    TokenizedCaption::from_content(&content)
}

/// Drops PAD/BOS/EOS and joins the remaining tokens with single spaces.
pub fn decode_ids(ids: &[usize], vocab: &Vocabulary) -> Result<String> {
    let mut words = Vec::new();
    for &id in ids {
        let tok = vocab
            .token(id)
            .ok_or_else(|| Error::arg(format!("id {id} outside vocabulary of {}", vocab.len())))?;
        if !matches!(id, PAD | BOS | EOS) {
            words.push(tok);
        }
    }
    Ok(words.join(" "))
}

/// One entry of the caption manifest (`[{"videoId": .., "enCap": [..]}]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionRecord {
    #[serde(rename = "videoId")]
    pub video_id: String,
    #[serde(rename = "enCap", default)]
    pub en_cap: Vec<String>,
}

pub fn parse_manifest(text: &str, context: &str) -> Result<Vec<CaptionRecord>> {
    serde_json::from_str(text).map_err(|e| Error::Json {
        context: context.to_string(),
        source: e,
    })
}

pub fn read_manifest(path: &Path) -> Result<Vec<CaptionRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, &path.display().to_string())
}
