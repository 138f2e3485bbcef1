//! Expression parser for Grassmann elements with complex coefficients:
//! `cos(e1 e2 + e3 e4)`, `2*ε[1]ε[3] - (1+2i) e2`, `exp(0.5 e1 e2)^2`.
//! Juxtaposition multiplies; elementary functions act on even arguments.

use num_complex::Complex64;

use super::{elementary_derivatives, GrassmannElement, MAX_GENERATORS};
use crate::error::{Error, Result};

type G = GrassmannElement<Complex64>;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Imag,
    Gen(usize),
    Func(String),
    Plus,
    Minus,
    Star,
    Caret,
    Open,
    Close,
}

fn tokenize(s: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = s.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' | '\n' => i += 1,
            '+' => {
                out.push(Tok::Plus);
                i += 1
            }
            '-' => {
                out.push(Tok::Minus);
                i += 1
            }
            '*' | '·' => {
                out.push(Tok::Star);
                i += 1
            }
            '^' => {
                out.push(Tok::Caret);
                i += 1
            }
            '(' => {
                out.push(Tok::Open);
                i += 1
            }
            ')' => {
                out.push(Tok::Close);
                i += 1
            }
            'ε' => {
                let close = chars[i..]
                    .iter()
                    .position(|&x| x == ']')
                    .ok_or_else(|| Error::Parse("missing `]` after ε".into()))?;
                let inner: String = chars[i + 1..i + close].iter().collect();
                let idx = inner
                    .strip_prefix('[')
                    .and_then(|t| t.parse::<usize>().ok())
                    .ok_or_else(|| Error::Parse(format!("bad generator `ε{inner}]`")))?;
                out.push(gen_token(idx)?);
                i += close + 1;
            }
            d if d.is_ascii_digit() || d == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                // exponent only when followed by a digit or a sign and digit
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let j = i + 1;
                    let signed = j < chars.len() && (chars[j] == '+' || chars[j] == '-');
                    let k = if signed { j + 1 } else { j };
                    if signed && k < chars.len() && chars[k].is_ascii_digit() {
                        i = k;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let v: f64 = text.parse().map_err(|_| Error::Parse(format!("bad number `{text}`")))?;
                out.push(Tok::Num(v));
            }
            a if a.is_ascii_alphabetic() => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                if word == "i" {
                    out.push(Tok::Imag);
                } else if let Some(idx) = word.strip_prefix('e').and_then(|t| t.parse::<usize>().ok()) {
                    out.push(gen_token(idx)?);
                } else if matches!(word.as_str(), "exp" | "cos" | "sin" | "cosh" | "sinh" | "log") {
                    out.push(Tok::Func(word));
                } else {
                    return Err(Error::Parse(format!("unknown identifier `{word}`")));
                }
            }
            other => return Err(Error::Parse(format!("unexpected character `{other}`"))),
        }
    }
    Ok(out)
}

fn gen_token(idx: usize) -> Result<Tok> {
    if idx == 0 || idx > MAX_GENERATORS {
        return Err(Error::Parse(format!("generator index {idx} out of range")));
    }
    Ok(Tok::Gen(idx - 1))
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
    n: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expr(&mut self) -> Result<G> {
        let mut acc = self.term()?;
        while let Some(t) = self.peek() {
            match t {
                Tok::Plus => {
                    self.pos += 1;
                    acc = acc.add(&self.term()?)?;
                }
                Tok::Minus => {
                    self.pos += 1;
                    acc = acc.sub(&self.term()?)?;
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<G> {
        let mut acc = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.pos += 1;
                    acc = acc.multiply(&self.unary()?)?;
                }
                Some(Tok::Num(_) | Tok::Imag | Tok::Gen(_) | Tok::Func(_) | Tok::Open) => {
                    acc = acc.multiply(&self.power()?)?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn unary(&mut self) -> Result<G> {
        match self.peek() {
            Some(Tok::Minus) => {
                self.pos += 1;
                Ok(self.unary()?.scale(&Complex64::new(-1.0, 0.0)))
            }
            Some(Tok::Plus) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<G> {
        let base = self.atom()?;
        if self.peek() == Some(&Tok::Caret) {
            self.pos += 1;
            match self.next() {
                Some(Tok::Num(v)) if v >= 0.0 && v.fract() == 0.0 && v <= 64.0 => base.power(v as u32),
                _ => Err(Error::Parse("exponent must be a small non-negative integer".into())),
            }
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<G> {
        match self.next() {
            Some(Tok::Num(v)) => G::scalar(self.n, Complex64::new(v, 0.0)),
            Some(Tok::Imag) => G::scalar(self.n, Complex64::new(0.0, 1.0)),
            Some(Tok::Gen(k)) => G::generator(self.n, k),
            Some(Tok::Open) => {
                let v = self.expr()?;
                self.expect_close()?;
                Ok(v)
            }
            Some(Tok::Func(name)) => {
                if self.next() != Some(Tok::Open) {
                    return Err(Error::Parse(format!("`{name}` needs parentheses")));
                }
                let arg = self.expr()?;
                self.expect_close()?;
                let derivs = elementary_derivatives(&name, arg.body(), self.n / 2 + 1)?;
                arg.compose_even(&derivs)
            }
            Some(t) => Err(Error::Parse(format!("unexpected token {t:?}"))),
            None => Err(Error::Parse("unexpected end of expression".into())),
        }
    }

    fn expect_close(&mut self) -> Result<()> {
        match self.next() {
            Some(Tok::Close) => Ok(()),
            _ => Err(Error::Parse("missing `)`".into())),
        }
    }
}

/// Parses in `Λ_n` with `n` the largest generator index that appears.
pub fn parse_expression(text: &str) -> Result<G> {
    let toks = tokenize(text)?;
    let n = toks
        .iter()
        .filter_map(|t| if let Tok::Gen(k) = t { Some(k + 1) } else { None })
        .max()
        .unwrap_or(0);
    run(toks, n)
}

pub fn parse_expression_with(n: usize, text: &str) -> Result<G> {
    let toks = tokenize(text)?;
    if let Some(k) = toks.iter().find_map(|t| if let Tok::Gen(k) = t { (*k >= n).then_some(*k) } else { None }) {
        return Err(Error::ModeOutOfRange { index: k, modes: n });
    }
    run(toks, n)
}

fn run(toks: Vec<Tok>, n: usize) -> Result<G> {
    if toks.is_empty() {
        return Err(Error::Parse("empty expression".into()));
    }
    let mut p = Parser { toks, pos: 0, n };
    let v = p.expr()?;
    if p.pos != p.toks.len() {
        return Err(Error::Parse(format!("trailing input at token {}", p.pos)));
    }
    Ok(v)
}
