//! 2-D tokenization of plain-text messages and one-hot character coding.
//!
//! A document is a stack of lines; each line is split on whitespace runs into
//! tokens that remember their exact column span, so the spatial layout of the
//! original text stays available to the context windows.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::nn::Tensor;

/// A whitespace-delimited unit with its position in the document.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub line_idx: usize,
    /// Column (in characters) of the first character.
    pub start_col: usize,
    /// Column of the rightmost character.
    pub end_col: usize,
}

/// The document model: tokens organized per line, plus the raw lines.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenGrid {
    lines: Vec<Vec<Token>>,
    raw_lines: Vec<String>,
}

/// Split every line on whitespace runs, recording column spans. Empty lines
/// yield empty token lists; empty input yields a grid with zero lines.
///
/// Columns count characters, so tabs should be expanded first (see
/// [`expand_tabs`]).
pub fn tokenize_document(raw_text: &str) -> TokenGrid {
    let mut lines = Vec::new();
    let mut raw_lines = Vec::new();
    for (line_idx, raw) in raw_text.lines().enumerate() {
        let mut tokens = Vec::new();
        let mut start = None;
        let mut col = 0;
        let mut buf = String::new();
        for ch in raw.chars() {
            if ch.is_whitespace() {
                if let Some(s) = start.take() {
                    tokens.push(Token {
                        text: std::mem::take(&mut buf),
                        line_idx,
                        start_col: s,
                        end_col: col - 1,
                    });
                }
            } else {
                if start.is_none() {
                    start = Some(col);
                }
                buf.push(ch);
            }
            col += 1;
        }
        if let Some(s) = start {
            tokens.push(Token {
                text: buf,
                line_idx,
                start_col: s,
                end_col: col - 1,
            });
        }
        lines.push(tokens);
        raw_lines.push(raw.to_string());
    }
    TokenGrid { lines, raw_lines }
}

/// Replace tabs with spaces up to the next multiple-of-`tab_stop` column.
pub fn expand_tabs(text: &str, tab_stop: usize) -> String {
    let mut out = String::with_capacity(text.len());
    for line in text.split_inclusive('\n') {
        let (body, nl) = match line.strip_suffix('\n') {
            Some(b) => (b, "\n"),
            None => (line, ""),
        };
        let mut col = 0;
        for ch in body.chars() {
            if ch == '\t' {
                let pad = tab_stop - col % tab_stop;
                for _ in 0..pad {
                    out.push(' ');
                }
                col += pad;
            } else {
                out.push(ch);
                col += 1;
            }
        }
        out.push_str(nl);
    }
    out
}

impl TokenGrid {
    pub fn lines(&self) -> &[Vec<Token>] {
        &self.lines
    }

    pub fn raw_lines(&self) -> &[String] {
        &self.raw_lines
    }

    pub fn num_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn num_tokens(&self) -> usize {
        self.lines.iter().map(|l| l.len()).sum()
    }

    pub fn token(&self, line: usize, idx: usize) -> Result<&Token> {
        self.lines
            .get(line)
            .and_then(|l| l.get(idx))
            .ok_or(Error::Position { line, token: idx })
    }

    /// All `(line, token)` positions in document order.
    pub fn positions(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.lines
            .iter()
            .enumerate()
            .flat_map(|(li, l)| (0..l.len()).map(move |ti| (li, ti)))
    }

    /// Rebuild the text by placing token texts at their column spans and
    /// spaces elsewhere. Reproduces the source modulo trailing whitespace.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for line in &self.lines {
            let mut rendered = String::new();
            let mut col = 0;
            for tok in line {
                while col < tok.start_col {
                    rendered.push(' ');
                    col += 1;
                }
                rendered.push_str(&tok.text);
                col = tok.end_col + 1;
            }
            out.push_str(&rendered);
            out.push('\n');
        }
        out
    }
}

/// The default visible alphabet: space, digits, letters, and the punctuation
/// that occurs in retail invoice text. One extra slot is reserved for
/// out-of-alphabet characters, bringing the total dimensionality to 78.
pub const DEFAULT_ALPHABET: &str =
    " 0123456789abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ.,:;/-_()+#'\"&";

/// Character decoded from the reserved out-of-alphabet slot.
pub const OOV_CHAR: char = '\u{FFFD}';

/// Fixed character alphabet with one-hot encode/decode and left-padding.
#[derive(Clone, Debug)]
pub struct CharCodec {
    alphabet: Vec<char>,
    index: HashMap<char, usize>,
    oov_index: usize,
}

impl Default for CharCodec {
    fn default() -> Self {
        let mut chars: Vec<char> = DEFAULT_ALPHABET.chars().collect();
        chars.push(OOV_CHAR);
        CharCodec::new(chars, DEFAULT_ALPHABET.chars().count()).unwrap()
    }
}

impl CharCodec {
    /// Build a codec over `alphabet` where characters outside it map to
    /// `oov_index`. The blank space must be present (it is the pad symbol)
    /// and the alphabet must fit in a byte-indexed table.
    pub fn new(alphabet: Vec<char>, oov_index: usize) -> Result<CharCodec> {
        if alphabet.len() > 256 {
            return Err(Error::Argument(
                "alphabet larger than 256 characters".into(),
            ));
        }
        if oov_index >= alphabet.len() {
            return Err(Error::Argument("oov_index outside the alphabet".into()));
        }
        let mut index = HashMap::with_capacity(alphabet.len());
        for (i, &c) in alphabet.iter().enumerate() {
            if index.insert(c, i).is_some() {
                return Err(Error::Argument(format!("duplicate character {c:?}")));
            }
        }
        if !index.contains_key(&' ') {
            return Err(Error::Argument("alphabet must contain the blank space".into()));
        }
        Ok(CharCodec {
            alphabet,
            index,
            oov_index,
        })
    }

    /// Alphabet size `d`.
    pub fn d(&self) -> usize {
        self.alphabet.len()
    }

    pub fn oov_index(&self) -> usize {
        self.oov_index
    }

    pub fn space_index(&self) -> usize {
        self.index[&' ']
    }

    pub fn char_index(&self, c: char) -> usize {
        *self.index.get(&c).unwrap_or(&self.oov_index)
    }

    pub fn char_at(&self, idx: usize) -> Option<char> {
        self.alphabet.get(idx).copied()
    }

    /// Characters eligible as random replacements: everything except the pad
    /// space (which would split a token) and the reserved slot.
    pub fn replacement_chars(&self) -> Vec<char> {
        self.alphabet
            .iter()
            .enumerate()
            .filter(|(i, c)| **c != ' ' && *i != self.oov_index)
            .map(|(_, c)| *c)
            .collect()
    }

    /// Compact encoding: the `l_t` character indices of `text`, left-padded
    /// with spaces; over-long tokens keep their last `l_t` characters.
    pub fn encode_indices(&self, text: &str, l_t: usize) -> Vec<u8> {
        let chars: Vec<char> = text.chars().collect();
        let keep = chars.len().min(l_t);
        let mut out = vec![self.space_index() as u8; l_t];
        for (slot, ch) in out[l_t - keep..]
            .iter_mut()
            .zip(chars[chars.len() - keep..].iter())
        {
            *slot = self.char_index(*ch) as u8;
        }
        out
    }

    /// One-hot matrix of shape `(l_t, d)` for `text` under the padding and
    /// truncation rules of [`CharCodec::encode_indices`].
    pub fn encode_token(&self, text: &str, l_t: usize) -> Tensor {
        let idx = self.encode_indices(text, l_t);
        let d = self.d();
        let mut m = Tensor::zeros(&[l_t, d]);
        for (row, &i) in idx.iter().enumerate() {
            m.data_mut()[row * d + i as usize] = 1.0;
        }
        m
    }

    /// Arg-max each row back to a character (ties to the lowest index) and
    /// strip the leading pad spaces.
    pub fn decode_onehot(&self, matrix: &Tensor) -> Result<String> {
        let d = self.d();
        if matrix.cols() != d || matrix.shape().len() != 2 {
            return Err(Error::Shape(format!(
                "decode: matrix {:?} does not match alphabet size {}",
                matrix.shape(),
                d
            )));
        }
        let mut out = String::with_capacity(matrix.rows());
        for row in matrix.data().chunks(d) {
            let mut best = 0;
            for (i, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = i;
                }
            }
            out.push(self.alphabet[best]);
        }
        Ok(out.trim_start_matches(' ').to_string())
    }
}
