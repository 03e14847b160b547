use std::fmt;

use thiserror::Error;

use super::{Clause, Rule, RuleError, RuleSet};
use crate::attr::{PredicateAtom, Term, Vocabulary};

#[derive(Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    Syntax(String),
    Rule(RuleError),
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::Syntax(m) => write!(f, "syntax error: {m}"),
            ParseErrorKind::Rule(e) => write!(f, "{e}"),
        }
    }
}

/// A rule text error at a 1-based line and column.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}, column {column}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Pos {
    line: usize,
    column: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Quoted(String),
    Number(f64),
    LParen,
    RParen,
    Comma,
    Semi,
    Dot,
    Neck,
    Bang,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Word(w) => write!(f, "{w:?}"),
            Tok::Quoted(q) => write!(f, "'{q}'"),
            Tok::Number(n) => write!(f, "{n}"),
            Tok::LParen => f.write_str("'('"),
            Tok::RParen => f.write_str("')'"),
            Tok::Comma => f.write_str("','"),
            Tok::Semi => f.write_str("';'"),
            Tok::Dot => f.write_str("'.'"),
            Tok::Neck => f.write_str("':-'"),
            Tok::Bang => f.write_str("'!'"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

fn syntax(pos: Pos, msg: impl Into<String>) -> ParseError {
    ParseError {
        line: pos.line,
        column: pos.column,
        kind: ParseErrorKind::Syntax(msg.into()),
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, Pos)>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let advance = |i: &mut usize, line: &mut usize, col: &mut usize, c: char| {
        *i += 1;
        if c == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
    };
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, column: col };
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, c);
            continue;
        }
        if c == '%' {
            while i < chars.len() && chars[i] != '\n' {
                let ch = chars[i];
                advance(&mut i, &mut line, &mut col, ch);
            }
            continue;
        }
        let single = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            ';' => Some(Tok::Semi),
            '.' => Some(Tok::Dot),
            '!' => Some(Tok::Bang),
            _ => None,
        };
        if let Some(tok) = single {
            out.push((tok, pos));
            advance(&mut i, &mut line, &mut col, c);
            continue;
        }
        if c == ':' {
            if chars.get(i + 1) == Some(&'-') {
                out.push((Tok::Neck, pos));
                col += 2;
                i += 2;
                continue;
            }
            return Err(syntax(pos, "expected ':-'"));
        }
        if c == '\'' {
            let start = i + 1;
            let mut j = start;
            while j < chars.len() && chars[j] != '\'' && chars[j] != '\n' {
                j += 1;
            }
            if j >= chars.len() || chars[j] != '\'' {
                return Err(syntax(pos, "unterminated quoted name"));
            }
            let s: String = chars[start..j].iter().collect();
            if s.is_empty() {
                return Err(syntax(pos, "empty quoted name"));
            }
            col += j + 1 - i;
            i = j + 1;
            out.push((Tok::Quoted(s), pos));
            continue;
        }
        if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()))
        {
            let start = i;
            let mut j = i + 1;
            while j < chars.len() && chars[j].is_ascii_digit() {
                j += 1;
            }
            if j + 1 < chars.len() && chars[j] == '.' && chars[j + 1].is_ascii_digit() {
                j += 1;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
            }
            if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
                let mut k = j + 1;
                if k < chars.len() && (chars[k] == '-' || chars[k] == '+') {
                    k += 1;
                }
                if k < chars.len() && chars[k].is_ascii_digit() {
                    j = k;
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                }
            }
            let s: String = chars[start..j].iter().collect();
            let n: f64 = s
                .parse()
                .map_err(|_| syntax(pos, format!("bad number {s}")))?;
            if !n.is_finite() {
                return Err(syntax(pos, format!("number out of range: {s}")));
            }
            col += j - i;
            i = j;
            out.push((Tok::Number(n), pos));
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            let mut j = i;
            while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                j += 1;
            }
            let s: String = chars[start..j].iter().collect();
            col += j - i;
            i = j;
            out.push((Tok::Word(s), pos));
            continue;
        }
        return Err(syntax(pos, format!("unexpected character {c:?}")));
    }
    out.push((Tok::Eof, Pos { line, column: col }));
    Ok(out)
}

fn is_var_name(s: &str) -> bool {
    s.starts_with(|c: char| c.is_ascii_uppercase()) && s.chars().all(|c| c.is_ascii_alphanumeric())
}

struct Parser<'a> {
    toks: Vec<(Tok, Pos)>,
    at: usize,
    vocab: &'a Vocabulary,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> (Tok, Pos) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok) -> Result<Pos, ParseError> {
        let (tok, pos) = self.bump();
        if tok == want {
            Ok(pos)
        } else {
            Err(syntax(pos, format!("expected {want}, found {tok}")))
        }
    }

    fn rule(&mut self) -> Result<Rule, ParseError> {
        let (tok, pos) = self.bump();
        let label = match tok {
            Tok::Word(w) if !is_var_name(&w) && !w.starts_with('_') => w,
            Tok::Quoted(q) => q,
            other => return Err(syntax(pos, format!("expected a rule label, found {other}"))),
        };
        self.expect(Tok::LParen)?;
        let (tok, pos) = self.bump();
        let head = match tok {
            Tok::Word(w) if is_var_name(&w) => w,
            other => {
                return Err(syntax(
                    pos,
                    format!("expected the head variable, found {other}"),
                ))
            }
        };
        self.expect(Tok::RParen)?;
        self.expect(Tok::Neck)?;
        let mut clauses = Vec::new();
        loop {
            clauses.push(self.clause(&head)?);
            let (tok, pos) = self.bump();
            match tok {
                Tok::Semi => continue,
                Tok::Dot => break,
                other => {
                    return Err(syntax(
                        pos,
                        format!("expected ',', ';' or '.', found {other}"),
                    ))
                }
            }
        }
        Ok(Rule::new(label, clauses))
    }

    fn clause(&mut self, head: &str) -> Result<Clause, ParseError> {
        let mut atoms = Vec::new();
        let mut positions = Vec::new();
        loop {
            positions.push(self.pos());
            atoms.push(self.atom()?);
            if *self.peek() == Tok::Comma {
                self.bump();
            } else {
                break;
            }
        }
        Clause::with_head(atoms, head, self.vocab).map_err(|(i, e)| {
            let p = positions[i.min(positions.len() - 1)];
            ParseError {
                line: p.line,
                column: p.column,
                kind: ParseErrorKind::Rule(e),
            }
        })
    }

    fn atom(&mut self) -> Result<PredicateAtom, ParseError> {
        let negated = if *self.peek() == Tok::Bang {
            self.bump();
            true
        } else {
            false
        };
        let (tok, pos) = self.bump();
        let name = match tok {
            Tok::Word(w) if !w.starts_with('_') => w,
            Tok::Dot | Tok::Semi => return Err(syntax(pos, "empty clause")),
            other => return Err(syntax(pos, format!("expected a predicate, found {other}"))),
        };
        self.expect(Tok::LParen)?;
        let mut args = Vec::new();
        loop {
            let (tok, pos) = self.bump();
            args.push(match tok {
                Tok::Word(w) if is_var_name(&w) => Term::Var(w),
                Tok::Word(w) if w.starts_with(|c: char| c.is_ascii_lowercase()) => Term::Sym(w),
                Tok::Quoted(q) => Term::Sym(q),
                Tok::Number(n) => Term::num(n),
                other => return Err(syntax(pos, format!("expected a term, found {other}"))),
            });
            let (tok, pos) = self.bump();
            match tok {
                Tok::Comma => continue,
                Tok::RParen => break,
                other => return Err(syntax(pos, format!("expected ',' or ')', found {other}"))),
            }
        }
        let mut atom = PredicateAtom::new(name, args);
        atom.negated = negated;
        Ok(atom)
    }
}

/// Parses exactly one rule.
pub fn parse_rule(text: &str, vocab: &Vocabulary) -> Result<Rule, ParseError> {
    let mut p = Parser {
        toks: lex(text)?,
        at: 0,
        vocab,
    };
    let rule = p.rule()?;
    let (tok, pos) = p.bump();
    if tok != Tok::Eof {
        return Err(syntax(pos, format!("unexpected {tok} after the rule")));
    }
    Ok(rule)
}

/// Parses any number of rules, one per label. `%` starts a line comment.
pub fn parse_ruleset(text: &str, vocab: &Vocabulary) -> Result<RuleSet, ParseError> {
    let mut p = Parser {
        toks: lex(text)?,
        at: 0,
        vocab,
    };
    let mut set = RuleSet::new();
    while *p.peek() != Tok::Eof {
        let pos = p.pos();
        let rule = p.rule()?;
        if set.get(&rule.label).is_some() {
            return Err(ParseError {
                line: pos.line,
                column: pos.column,
                kind: ParseErrorKind::Rule(RuleError::DuplicateRule(rule.label)),
            });
        }
        set.insert(rule);
    }
    Ok(set)
}
