//! A forgiving SQL lexer.
//!
//! Never fails: unterminated strings and comments run to end of input. Each
//! token keeps its exact source text so callers can rebuild the statement.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Whitespace,
    LineComment,
    BlockComment,
    /// Single-quoted string literal.
    String,
    /// `"x"`, `` `x` `` or `[x]`.
    QuotedIdent,
    Number,
    Word,
    Symbol,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token<'a> {
    pub kind: TokenKind,
    pub text: &'a str,
}

impl<'a> Token<'a> {
    pub fn is_trivia(&self) -> bool {
        matches!(
            self.kind,
            TokenKind::Whitespace | TokenKind::LineComment | TokenKind::BlockComment
        )
    }

    pub fn is_word(&self, upper: &str) -> bool {
        self.kind == TokenKind::Word && self.text.eq_ignore_ascii_case(upper)
    }

    /// Identifier text with quoting removed, for words and quoted identifiers.
    pub fn ident(&self) -> Option<String> {
        match self.kind {
            TokenKind::Word => Some(self.text.to_string()),
            TokenKind::QuotedIdent => {
                let (open, close) = match self.text.as_bytes()[0] {
                    b'"' => ('"', '"'),
                    b'`' => ('`', '`'),
                    _ => ('[', ']'),
                };
                let inner = self.text.strip_prefix(open)?;
                let inner = inner.strip_suffix(close).unwrap_or(inner);
                Some(match open {
                    '"' => inner.replace("\"\"", "\""),
                    '`' => inner.replace("``", "`"),
                    _ => inner.to_string(),
                })
            }
            _ => None,
        }
    }

    /// Contents of a string literal with `''` unescaped.
    pub fn string_value(&self) -> Option<String> {
        (self.kind == TokenKind::String && self.text.len() >= 2 && self.text.ends_with('\''))
            .then(|| self.text[1..self.text.len() - 1].replace("''", "'"))
    }
}

pub fn lex(src: &str) -> Vec<Token<'_>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let start = i;
        let c = bytes[i];
        let kind = if c.is_ascii_whitespace() {
            while i < bytes.len() && bytes[i].is_ascii_whitespace() {
                i += 1;
            }
            TokenKind::Whitespace
        } else if c == b'-' && bytes.get(i + 1) == Some(&b'-') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            TokenKind::LineComment
        } else if c == b'/' && bytes.get(i + 1) == Some(&b'*') {
            i += 2;
            while i < bytes.len() && !(bytes[i] == b'*' && bytes.get(i + 1) == Some(&b'/')) {
                i += 1;
            }
            i = (i + 2).min(bytes.len());
            TokenKind::BlockComment
        } else if c == b'\'' {
            i = scan_quoted(bytes, i, b'\'');
            TokenKind::String
        } else if c == b'"' || c == b'`' {
            i = scan_quoted(bytes, i, c);
            TokenKind::QuotedIdent
        } else if c == b'[' {
            while i < bytes.len() && bytes[i] != b']' {
                i += 1;
            }
            i = (i + 1).min(bytes.len());
            TokenKind::QuotedIdent
        } else if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            TokenKind::Number
        } else if c == b'_' || c.is_ascii_alphabetic() || c >= 0x80 {
            while i < bytes.len()
                && (bytes[i] == b'_' || bytes[i] == b'$' || bytes[i].is_ascii_alphanumeric() || bytes[i] >= 0x80)
            {
                i += 1;
            }
            TokenKind::Word
        } else {
            let two = &bytes[i..(i + 2).min(bytes.len())];
            i += if matches!(two, b"<=" | b">=" | b"<>" | b"!=" | b"||" | b"==") { 2 } else { 1 };
            TokenKind::Symbol
        };
        // Multi-byte chars only enter via Word, which consumes whole code points.
        out.push(Token {
            kind,
            text: &src[start..i],
        });
    }
    out
}

fn scan_quoted(bytes: &[u8], mut i: usize, quote: u8) -> usize {
    i += 1;
    while i < bytes.len() {
        if bytes[i] == quote {
            if bytes.get(i + 1) == Some(&quote) {
                i += 2;
                continue;
            }
            return i + 1;
        }
        i += 1;
    }
    bytes.len()
}

/// Reserved words and common functions uppercased by de-formalization.
pub const KEYWORDS: &[&str] = &[
    "ABS", "ALL", "AND", "AS", "ASC", "AVG", "BETWEEN", "BY", "CASE", "CAST", "COALESCE", "COUNT",
    "CROSS", "CURRENT_DATE", "DESC", "DISTINCT", "ELSE", "END", "EXCEPT", "EXISTS", "FALSE", "FROM",
    "FULL", "GLOB", "GROUP", "HAVING", "IFNULL", "IIF", "IN", "INNER", "INSTR", "INTERSECT", "IS",
    "JOIN", "LEFT", "LENGTH", "LIKE", "LIMIT", "LOWER", "MAX", "MIN", "NATURAL", "NOT", "NULL",
    "NULLIF", "OFFSET", "ON", "OR", "ORDER", "OUTER", "OVER", "PARTITION", "REAL", "RECURSIVE",
    "REPLACE", "RIGHT", "ROUND", "SELECT", "STRFTIME", "SUBSTR", "SUM", "THEN", "TRUE", "UNION",
    "UPPER", "USING", "VALUES", "WHEN", "WHERE", "WITH", "INTEGER", "TEXT", "FLOAT",
];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.iter().any(|k| k.eq_ignore_ascii_case(word))
}

/// Non-trivia tokens only.
pub fn significant<'a>(tokens: &[Token<'a>]) -> Vec<Token<'a>> {
    tokens.iter().filter(|t| !t.is_trivia()).cloned().collect()
}
