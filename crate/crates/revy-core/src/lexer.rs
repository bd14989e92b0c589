//! Line-oriented lexer for the indentation-sensitive contract language.
//!
//! The source is cut into logical lines (bracket-continued physical lines are
//! joined), each carrying its indentation depth and token list. `#@` lines are
//! specification annotations; their kind is recognized here so the parser can
//! dispatch without re-scanning text.

use crate::diag::{Error, ErrorKind};
use crate::span::{FileId, Span};

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Int(i128),
    // punctuation / operators
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Comma,
    Colon,
    Dot,
    At,
    Assign,
    PlusAssign,
    MinusAssign,
    EqEq,
    NotEq,
    Le,
    Ge,
    Lt,
    Gt,
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    Implies,
    // `<->` in resource pairs
    Exchange,
    Arrow,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(n) => format!("`{n}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Dot => "`.`".into(),
            Tok::At => "`@`".into(),
            Tok::Assign => "`=`".into(),
            Tok::PlusAssign => "`+=`".into(),
            Tok::MinusAssign => "`-=`".into(),
            Tok::EqEq => "`==`".into(),
            Tok::NotEq => "`!=`".into(),
            Tok::Le => "`<=`".into(),
            Tok::Ge => "`>=`".into(),
            Tok::Lt => "`<`".into(),
            Tok::Gt => "`>`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Percent => "`%`".into(),
            Tok::Implies => "`==>`".into(),
            Tok::Exchange => "`<->`".into(),
            Tok::Arrow => "`->`".into(),
        }
    }
}

/// Kind of a `#@` annotation line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnnKind {
    Segment,
    Transitive,
    FunctionConstraint,
    Privacy,
    Ensures,
    Performs,
    Resource,
    StabilityHint,
    NoDerivedWei,
    /// A ghost command in a function body.
    Ghost,
}

#[derive(Debug, Clone)]
pub struct Line {
    pub indent: usize,
    pub toks: Vec<(Tok, Span)>,
    pub span: Span,
    pub ann: Option<AnnKind>,
}

const ANN_PREFIXES: &[(&str, AnnKind)] = &[
    ("segment:", AnnKind::Segment),
    ("transitive:", AnnKind::Transitive),
    ("function:", AnnKind::FunctionConstraint),
    ("privacy:", AnnKind::Privacy),
    ("ensures:", AnnKind::Ensures),
    ("performs:", AnnKind::Performs),
    ("resource:", AnnKind::Resource),
    ("stability-hint:", AnnKind::StabilityHint),
    ("no-derived-wei", AnnKind::NoDerivedWei),
];

struct RawLine {
    indent: usize,
    /// Content start offset and text with comments stripped.
    start: usize,
    text: String,
    is_ann: bool,
}

/// Lex one file into logical lines.
pub fn lex(file: FileId, text: &str) -> Result<Vec<Line>, Error> {
    let mut raw = Vec::new();
    let mut offset = 0usize;
    for line in text.split_inclusive('\n') {
        let content = line.strip_suffix('\n').unwrap_or(line);
        let line_start = offset;
        offset += line.len();

        let mut indent = 0usize;
        let bytes = content.as_bytes();
        while indent < bytes.len() && bytes[indent] == b' ' {
            indent += 1;
        }
        if indent < bytes.len() && bytes[indent] == b'\t' {
            return Err(Error::new(
                ErrorKind::Syntax,
                "tab characters are not allowed in indentation",
                Span::new(file, line_start + indent, line_start + indent + 1),
            ));
        }
        let rest = &content[indent..];
        if rest.is_empty() {
            continue;
        }
        if let Some(ann_rest) = rest.strip_prefix("#@") {
            let ann_body = ann_rest.trim_start();
            let skip = rest.len() - ann_body.len();
            raw.push(RawLine {
                indent,
                start: line_start + indent + skip,
                text: ann_body.trim_end().to_string(),
                is_ann: true,
            });
            continue;
        }
        if rest.starts_with('#') {
            continue; // ordinary comment line
        }
        // strip trailing comment (no string literals in the language)
        let code = match rest.find('#') {
            Some(i) => rest[..i].trim_end(),
            None => rest.trim_end(),
        };
        if code.is_empty() {
            continue;
        }
        raw.push(RawLine {
            indent,
            start: line_start + indent,
            text: code.to_string(),
            is_ann: false,
        });
    }

    // Join bracket-continued lines. An annotation continues onto following
    // annotation lines; a code line continues onto following code lines.
    let mut joined: Vec<RawLine> = Vec::new();
    for line in raw {
        let cont = match joined.last() {
            Some(prev) => prev.is_ann == line.is_ann && open_brackets(&prev.text) > 0,
            None => false,
        };
        if cont {
            let prev = joined.last_mut().unwrap();
            let mut extra = line.text.as_str();
            if line.is_ann {
                // allow continuation lines that repeat the annotation keyword? no —
                // raw text after `#@` is the continuation payload.
                extra = extra.trim_start();
            }
            prev.text.push(' ');
            prev.text.push_str(extra);
        } else {
            joined.push(line);
        }
    }

    let mut out = Vec::new();
    for line in joined {
        if open_brackets(&line.text) != 0 {
            return Err(Error::new(
                ErrorKind::Syntax,
                "unbalanced brackets",
                Span::new(file, line.start, line.start + line.text.len()),
            ));
        }
        let (ann, body, body_off) = if line.is_ann {
            classify_annotation(&line.text)
        } else {
            (None, line.text.as_str(), 0usize)
        };
        let ann = if line.is_ann {
            Some(ann.unwrap_or(AnnKind::Ghost))
        } else {
            None
        };
        let toks = lex_tokens(file, line.start + body_off, body)?;
        if toks.is_empty() && ann != Some(AnnKind::NoDerivedWei) {
            if line.is_ann {
                continue; // `#@` comment continuation noise
            }
            continue;
        }
        let span = Span::new(file, line.start, line.start + line.text.len());
        out.push(Line {
            indent: line.indent,
            toks,
            span,
            ann,
        });
    }
    Ok(out)
}

fn classify_annotation(text: &str) -> (Option<AnnKind>, &str, usize) {
    for (prefix, kind) in ANN_PREFIXES {
        if let Some(rest) = text.strip_prefix(prefix) {
            let trimmed = rest.trim_start();
            let off = text.len() - trimmed.len();
            return (Some(*kind), trimmed, off);
        }
    }
    (None, text, 0)
}

fn open_brackets(s: &str) -> i32 {
    let mut n = 0;
    for c in s.chars() {
        match c {
            '(' | '[' | '{' => n += 1,
            ')' | ']' | '}' => n -= 1,
            _ => {}
        }
    }
    n
}

fn lex_tokens(file: FileId, start: usize, text: &str) -> Result<Vec<(Tok, Span)>, Error> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0usize;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let at = |lo: usize, hi: usize| Span::new(file, start + lo, start + hi);
        if c == ' ' {
            i += 1;
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let s = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            toks.push((Tok::Ident(text[s..i].to_string()), at(s, i)));
            continue;
        }
        if c.is_ascii_digit() {
            let s = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'_') {
                i += 1;
            }
            let lit: String = text[s..i].chars().filter(|c| *c != '_').collect();
            let n = lit.parse::<i128>().map_err(|_| {
                Error::new(ErrorKind::Syntax, "integer literal out of range", at(s, i))
            })?;
            toks.push((Tok::Int(n), at(s, i)));
            continue;
        }
        let two = if i + 1 < bytes.len() {
            &text[i..i + 2]
        } else {
            ""
        };
        let three = if i + 2 < bytes.len() {
            &text[i..i + 3]
        } else {
            ""
        };
        let (tok, len) = match (three, two, c) {
            ("==>", _, _) => (Tok::Implies, 3),
            ("<->", _, _) => (Tok::Exchange, 3),
            (_, "==", _) => (Tok::EqEq, 2),
            (_, "!=", _) => (Tok::NotEq, 2),
            (_, "<=", _) => (Tok::Le, 2),
            (_, ">=", _) => (Tok::Ge, 2),
            (_, "+=", _) => (Tok::PlusAssign, 2),
            (_, "-=", _) => (Tok::MinusAssign, 2),
            (_, "->", _) => (Tok::Arrow, 2),
            (_, _, '(') => (Tok::LParen, 1),
            (_, _, ')') => (Tok::RParen, 1),
            (_, _, '[') => (Tok::LBracket, 1),
            (_, _, ']') => (Tok::RBracket, 1),
            (_, _, '{') => (Tok::LBrace, 1),
            (_, _, '}') => (Tok::RBrace, 1),
            (_, _, ',') => (Tok::Comma, 1),
            (_, _, ':') => (Tok::Colon, 1),
            (_, _, '.') => (Tok::Dot, 1),
            (_, _, '@') => (Tok::At, 1),
            (_, _, '=') => (Tok::Assign, 1),
            (_, _, '<') => (Tok::Lt, 1),
            (_, _, '>') => (Tok::Gt, 1),
            (_, _, '+') => (Tok::Plus, 1),
            (_, _, '-') => (Tok::Minus, 1),
            (_, _, '*') => (Tok::Star, 1),
            (_, _, '/') => (Tok::Slash, 1),
            (_, _, '%') => (Tok::Percent, 1),
            _ => {
                return Err(Error::new(
                    ErrorKind::Syntax,
                    format!("unexpected character `{c}`"),
                    at(i, i + 1),
                ))
            }
        };
        toks.push((tok, at(i, i + len)));
        i += len;
    }
    Ok(toks)
}
