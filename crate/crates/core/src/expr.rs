//! Polynomial initial data in the two spatial coordinates.
//!
//! Accepted grammar (degree at most two overall):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*      division by constants only
//! unary := ('+' | '-') unary | power
//! power := atom ('^' integer)?
//! atom  := number | x1 | x2 | x | y | '(' expr ')'
//! ```

use std::fmt;

use crate::mesh::Point;
use crate::{Error, Result};

const MAX_DEGREE: usize = 2;

/// Polynomial `sum c[i][j] x1^i x2^j` with `i + j <= 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    source: String,
    coeffs: [[f64; 3]; 3],
}

type Coeffs = [[f64; 3]; 3];

impl Polynomial {
    pub fn parse(text: &str) -> Result<Self> {
        let mut p = Parser {
            src: text,
            chars: text.char_indices().peekable(),
        };
        let coeffs = p.expr()?;
        p.skip_ws();
        if let Some(&(i, c)) = p.chars.peek() {
            return Err(p.err(format!("unexpected `{c}` at offset {i}")));
        }
        Ok(Polynomial {
            source: text.trim().to_string(),
            coeffs,
        })
    }

    pub fn constant(c: f64) -> Self {
        let mut coeffs = [[0.0; 3]; 3];
        coeffs[0][0] = c;
        Polynomial {
            source: format!("{c}"),
            coeffs,
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, p: Point) -> f64 {
        let mut s = 0.0;
        for i in 0..=MAX_DEGREE {
            for j in 0..=MAX_DEGREE - i {
                let c = self.coeffs[i][j];
                if c != 0.0 {
                    s += c * p[0].powi(i as i32) * p[1].powi(j as i32);
                }
            }
        }
        s
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

struct Parser<'a> {
    src: &'a str,
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
}

fn mul(a: &Coeffs, b: &Coeffs) -> Option<Coeffs> {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 - i {
            for k in 0..3 {
                for l in 0..3 - k {
                    let c = a[i][j] * b[k][l];
                    if c == 0.0 {
                        continue;
                    }
                    if i + j + k + l > MAX_DEGREE {
                        return None;
                    }
                    out[i + k][j + l] += c;
                }
            }
        }
    }
    Some(out)
}

fn is_constant(a: &Coeffs) -> bool {
    (0..3).all(|i| (0..3 - i).all(|j| (i, j) == (0, 0) || a[i][j] == 0.0))
}

impl Parser<'_> {
    fn err(&self, message: String) -> Error {
        Error::Expression {
            input: self.src.to_string(),
            message,
        }
    }

    fn skip_ws(&mut self) {
        while matches!(self.chars.peek(), Some((_, c)) if c.is_whitespace()) {
            self.chars.next();
        }
    }

    fn eat(&mut self, ch: char) -> bool {
        self.skip_ws();
        if matches!(self.chars.peek(), Some(&(_, c)) if c == ch) {
            self.chars.next();
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Coeffs> {
        let mut acc = self.term()?;
        loop {
            let sign = if self.eat('+') {
                1.0
            } else if self.eat('-') {
                -1.0
            } else {
                return Ok(acc);
            };
            let t = self.term()?;
            for i in 0..3 {
                for j in 0..3 {
                    acc[i][j] += sign * t[i][j];
                }
            }
        }
    }

    fn term(&mut self) -> Result<Coeffs> {
        let mut acc = self.unary()?;
        loop {
            if self.eat('*') {
                let r = self.unary()?;
                acc = mul(&acc, &r).ok_or_else(|| self.err("degree exceeds 2".into()))?;
            } else if self.eat('/') {
                let r = self.unary()?;
                if !is_constant(&r) || r[0][0] == 0.0 {
                    return Err(self.err("division only by non-zero constants".into()));
                }
                acc.iter_mut().flatten().for_each(|c| *c /= r[0][0]);
            } else {
                return Ok(acc);
            }
        }
    }

    fn unary(&mut self) -> Result<Coeffs> {
        if self.eat('-') {
            let mut v = self.unary()?;
            v.iter_mut().flatten().for_each(|c| *c = -*c);
            Ok(v)
        } else if self.eat('+') {
            self.unary()
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Coeffs> {
        let base = self.atom()?;
        if self.eat('^') {
            self.skip_ws();
            let mut digits = String::new();
            while let Some(&(_, c)) = self.chars.peek() {
                if c.is_ascii_digit() {
                    digits.push(c);
                    self.chars.next();
                } else {
                    break;
                }
            }
            let n: u32 = digits
                .parse()
                .map_err(|_| self.err("exponent must be a non-negative integer".into()))?;
            let mut acc = [[0.0; 3]; 3];
            acc[0][0] = 1.0;
            for _ in 0..n {
                acc = mul(&acc, &base).ok_or_else(|| self.err("degree exceeds 2".into()))?;
            }
            Ok(acc)
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Coeffs> {
        self.skip_ws();
        let mut out = [[0.0; 3]; 3];
        match self.chars.peek().copied() {
            Some((_, '(')) => {
                self.chars.next();
                let v = self.expr()?;
                if !self.eat(')') {
                    return Err(self.err("missing `)`".into()));
                }
                Ok(v)
            }
            Some((start, c)) if c.is_ascii_digit() || c == '.' => {
                let mut end = start;
                let mut prev = c;
                while let Some(&(i, c)) = self.chars.peek() {
                    let exp_sign = (c == '+' || c == '-') && (prev == 'e' || prev == 'E');
                    if c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' || exp_sign {
                        end = i + c.len_utf8();
                        prev = c;
                        self.chars.next();
                    } else {
                        break;
                    }
                }
                let s = &self.src[start..end];
                out[0][0] = s
                    .parse()
                    .map_err(|_| self.err(format!("bad number `{s}`")))?;
                Ok(out)
            }
            Some((start, c)) if c.is_ascii_alphabetic() => {
                let mut end = start;
                while let Some(&(i, c)) = self.chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        end = i + c.len_utf8();
                        self.chars.next();
                    } else {
                        break;
                    }
                }
                match &self.src[start..end] {
                    "x1" | "x" => out[1][0] = 1.0,
                    "x2" | "y" => out[0][1] = 1.0,
                    name => return Err(self.err(format!("unknown variable `{name}`"))),
                }
                Ok(out)
            }
            Some((i, c)) => Err(self.err(format!("unexpected `{c}` at offset {i}"))),
            None => Err(self.err("unexpected end of input".into())),
        }
    }
}

/// Initial data of the three unknowns.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialData {
    pub u: Polynomial,
    pub v: Polynomial,
    pub w: Polynomial,
}

impl Default for InitialData {
    fn default() -> Self {
        InitialData {
            u: Polynomial::parse("5*(x1 + x2)").expect("valid literal"),
            v: Polynomial::parse("8*x1 + 2*x2").expect("valid literal"),
            w: Polynomial::parse("3*x1 + x2").expect("valid literal"),
        }
    }
}

impl InitialData {
    pub fn constant(u: f64, v: f64, w: f64) -> Self {
        InitialData {
            u: Polynomial::constant(u),
            v: Polynomial::constant(v),
            w: Polynomial::constant(w),
        }
    }
}
