use std::collections::HashMap;
use std::path::Path;

/// Greedy longest-match-first WordPiece tokenizer over a BERT `vocab.txt`.
///
/// Input arrives already split into words, so the basic pre-tokenization
/// step only lowercases (when configured) and splits off punctuation.
/// Accents are not stripped.
#[derive(Debug, Clone)]
pub struct WordPiece {
    vocab: HashMap<String, u32>,
    lowercase: bool,
    max_chars: usize,
    unk: u32,
    cls: u32,
    sep: u32,
}

impl WordPiece {
    pub fn from_tokens<I, S>(tokens: I, lowercase: bool) -> Result<Self, String>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let vocab: HashMap<String, u32> = tokens.into_iter().enumerate().map(|(i, t)| (t.into(), i as u32)).collect();
        let id = |t: &str| vocab.get(t).copied().ok_or_else(|| format!("vocabulary lacks {t}"));
        Ok(WordPiece { unk: id("[UNK]")?, cls: id("[CLS]")?, sep: id("[SEP]")?, vocab, lowercase, max_chars: 100 })
    }

    pub fn load(path: &Path, lowercase: bool) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_tokens(text.lines().map(|l| l.trim_end_matches('\r')), lowercase)
    }

    pub fn cls(&self) -> u32 {
        self.cls
    }

    pub fn sep(&self) -> u32 {
        self.sep
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// Piece ids for one word; never empty.
    pub fn word_ids(&self, word: &str) -> Vec<u32> {
        let word = if self.lowercase { word.to_lowercase() } else { word.to_string() };
        let mut ids = Vec::new();
        for chunk in split_punctuation(&word) {
            self.wordpiece(&chunk, &mut ids);
        }
        if ids.is_empty() {
            ids.push(self.unk);
        }
        ids
    }

    fn wordpiece(&self, chunk: &str, out: &mut Vec<u32>) {
        let chars: Vec<char> = chunk.chars().collect();
        if chars.len() > self.max_chars {
            out.push(self.unk);
            return;
        }
        let mut pieces = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut end = chars.len();
            let mut found = None;
            while start < end {
                let body: String = chars[start..end].iter().collect();
                let candidate = if start > 0 { format!("##{body}") } else { body };
                if let Some(&id) = self.vocab.get(&candidate) {
                    found = Some(id);
                    break;
                }
                end -= 1;
            }
            match found {
                Some(id) => pieces.push(id),
                None => {
                    out.push(self.unk);
                    return;
                }
            }
            start = end;
        }
        out.extend(pieces);
    }
}

fn is_punctuation(c: char) -> bool {
    if c.is_ascii() {
        c.is_ascii_punctuation()
    } else {
        !c.is_alphanumeric() && !c.is_whitespace()
    }
}

fn split_punctuation(word: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    for c in word.chars() {
        if c.is_whitespace() {
            if !current.is_empty() {
                out.push(std::mem::take(&mut current));
            }
        } else if is_punctuation(c) {
            if !current.is_empty() {
                out.push(std::mem::take(&mut current));
            }
            out.push(c.to_string());
        } else {
            current.push(c);
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}
