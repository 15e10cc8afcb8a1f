//! Parser for the canonical `name(key=value,...)` text forms shared by
//! Bernstein specs, lattice laws and rate bundles.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Value {
    Number(f64),
    List(Vec<f64>),
    Call(Call),
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Call {
    pub name: String,
    pub args: Vec<(String, Value)>,
}

impl Call {
    pub fn number(&self, key: &str) -> Result<f64> {
        match self.get(key) {
            Some(Value::Number(v)) => Ok(*v),
            Some(_) => Err(Error::Parse(format!("`{key}` in `{}` must be a number", self.name))),
            None => Err(Error::Parse(format!("`{}` is missing `{key}`", self.name))),
        }
    }

    pub fn number_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(_) => self.number(key),
        }
    }

    pub fn list(&self, key: &str) -> Result<Vec<f64>> {
        match self.get(key) {
            Some(Value::List(v)) => Ok(v.clone()),
            Some(Value::Number(v)) => Ok(vec![*v]),
            Some(_) => Err(Error::Parse(format!("`{key}` in `{}` must be a list", self.name))),
            None => Err(Error::Parse(format!("`{}` is missing `{key}`", self.name))),
        }
    }

    pub fn call(&self, key: &str) -> Result<&Call> {
        match self.get(key) {
            Some(Value::Call(c)) => Ok(c),
            Some(_) => Err(Error::Parse(format!("`{key}` in `{}` must be a call", self.name))),
            None => Err(Error::Parse(format!("`{}` is missing `{key}`", self.name))),
        }
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.args.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    /// Rejects keys outside `allowed`.
    pub fn expect_keys(&self, allowed: &[&str]) -> Result<()> {
        for (k, _) in &self.args {
            if !allowed.contains(&k.as_str()) {
                return Err(Error::Parse(format!("unknown key `{k}` in `{}`", self.name)));
            }
        }
        Ok(())
    }
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src.as_bytes()[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.as_bytes().get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(Error::Parse(format!(
                "expected `{}` at offset {} in `{}`",
                c as char, self.pos, self.src
            )))
        }
    }

    fn ident(&mut self) -> Result<String> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() {
            let b = self.src.as_bytes()[self.pos];
            if b.is_ascii_alphanumeric() || b == b'_' || b == b'-' {
                self.pos += 1;
            } else {
                break;
            }
        }
        if start == self.pos {
            return Err(Error::Parse(format!("expected a name at offset {start} in `{}`", self.src)));
        }
        Ok(self.src[start..self.pos].to_string())
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() {
            let b = self.src.as_bytes()[self.pos];
            if b.is_ascii_alphanumeric() || matches!(b, b'.' | b'-' | b'+') {
                self.pos += 1;
            } else {
                break;
            }
        }
        let text = &self.src[start..self.pos];
        text.parse::<f64>()
            .map_err(|_| Error::Parse(format!("invalid number `{text}` in `{}`", self.src)))
    }

    fn value(&mut self) -> Result<Value> {
        match self.peek() {
            Some(b'[') => {
                self.pos += 1;
                let mut items = Vec::new();
                if self.peek() == Some(b']') {
                    self.pos += 1;
                    return Ok(Value::List(items));
                }
                loop {
                    items.push(self.number()?);
                    match self.peek() {
                        Some(b',') => self.pos += 1,
                        Some(b']') => {
                            self.pos += 1;
                            return Ok(Value::List(items));
                        }
                        _ => return Err(Error::Parse(format!("unterminated list in `{}`", self.src))),
                    }
                }
            }
            Some(b) if b.is_ascii_alphabetic() => {
                // Either a nested call or a word like `inf`.
                let save = self.pos;
                let name = self.ident()?;
                if self.peek() == Some(b'(') {
                    self.pos = save;
                    Ok(Value::Call(self.call()?))
                } else {
                    name.parse::<f64>()
                        .map(Value::Number)
                        .map_err(|_| Error::Parse(format!("invalid value `{name}` in `{}`", self.src)))
                }
            }
            _ => Ok(Value::Number(self.number()?)),
        }
    }

    fn call(&mut self) -> Result<Call> {
        let name = self.ident()?;
        self.expect(b'(')?;
        let mut args = Vec::new();
        if self.peek() == Some(b')') {
            self.pos += 1;
            return Ok(Call { name, args });
        }
        loop {
            let key = self.ident()?;
            self.expect(b'=')?;
            let value = self.value()?;
            args.push((key, value));
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b')') => {
                    self.pos += 1;
                    return Ok(Call { name, args });
                }
                _ => return Err(Error::Parse(format!("expected `,` or `)` in `{}`", self.src))),
            }
        }
    }
}

/// Parses one or more calls joined by `@`, e.g. `stable(alpha=1.0)@scaling(...)`.
pub(crate) fn parse_calls(src: &str) -> Result<Vec<Call>> {
    let mut cursor = Cursor { src, pos: 0 };
    let mut calls = vec![cursor.call()?];
    while cursor.peek() == Some(b'@') {
        cursor.pos += 1;
        calls.push(cursor.call()?);
    }
    if cursor.peek().is_some() {
        return Err(Error::Parse(format!("trailing input at offset {} in `{src}`", cursor.pos)));
    }
    Ok(calls)
}

pub(crate) fn parse_call(src: &str) -> Result<Call> {
    let mut calls = parse_calls(src)?;
    if calls.len() != 1 {
        return Err(Error::Parse(format!("expected a single form, got `{src}`")));
    }
    Ok(calls.remove(0))
}

/// Shortest round-trip float text (`1.0`, `0.5`, `6.579736267392906`).
pub(crate) fn num(v: f64) -> String {
    format!("{v:?}")
}
