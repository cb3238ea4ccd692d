use super::ast::{Item, ItemKind, Macro, Phase, SequenceAst, Span};
use crate::error::{Error, Result};

/// Parse a pulse-sequence string.
///
/// ```text
/// seq   := item ('-' item)*
/// item  := atom ('^' INT)?
/// atom  := 'tau' | 'tau/2' | NUMBER UNIT | '(pi)_' PHASE
///        | 'CPMG(' INT (',' PHASE)? ')' | 'KDD(' PHASE ')' | 'KDDXY16' ('()')?
/// UNIT  := 'ns' | 'us' | 'µs' | 'ms'
/// PHASE := NUMBER ('rad')? | 'x' | 'y' | '-x' | '-y'
/// ```
///
/// Bare phase numbers are degrees. Whitespace between tokens is ignored.
pub fn parse(text: &str) -> Result<SequenceAst> {
    let mut p = Parser {
        chars: text.chars().collect(),
        pos: 0,
    };
    let mut items = Vec::new();
    p.skip_ws();
    if p.at_end() {
        return Err(p.error("empty sequence"));
    }
    loop {
        items.push(p.item()?);
        p.skip_ws();
        if p.at_end() {
            break;
        }
        p.expect('-')?;
        p.skip_ws();
    }
    Ok(SequenceAst { items })
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

impl Parser {
    fn at_end(&self) -> bool {
        self.pos >= self.chars.len()
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn column(&self) -> usize {
        self.pos + 1
    }

    fn error(&self, message: impl Into<String>) -> Error {
        self.error_at(self.column(), message)
    }

    fn error_at(&self, column: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            column,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            match self.peek() {
                Some(found) => Err(self.error(format!("expected '{c}', found '{found}'"))),
                None => Err(self.error(format!("expected '{c}', found end of input"))),
            }
        }
    }

    fn eat_str(&mut self, s: &str) -> bool {
        let n = s.chars().count();
        if self.pos + n <= self.chars.len() && self.chars[self.pos..self.pos + n].iter().copied().eq(s.chars()) {
            self.pos += n;
            true
        } else {
            false
        }
    }

    fn word(&mut self) -> String {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == '_') {
            self.pos += 1;
        }
        self.chars[start..self.pos].iter().collect()
    }

    fn number(&mut self) -> Result<f64> {
        let start = self.pos;
        self.eat('-');
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.eat('.') {
            while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                self.pos += 1;
            }
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            let save = self.pos;
            self.pos += 1;
            if !self.eat('+') {
                self.eat('-');
            }
            if self.peek().is_some_and(|c| c.is_ascii_digit()) {
                while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                    self.pos += 1;
                }
            } else {
                self.pos = save;
            }
        }
        let s: String = self.chars[start..self.pos].iter().collect();
        s.parse::<f64>().map_err(|_| {
            self.error_at(start + 1, if s.is_empty() { "expected a number".into() } else { format!("malformed number '{s}'") })
        })
    }

    fn integer(&mut self) -> Result<u32> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        let s: String = self.chars[start..self.pos].iter().collect();
        s.parse::<u32>()
            .map_err(|_| self.error_at(start + 1, "expected a non-negative integer"))
    }

    fn phase(&mut self) -> Result<Phase> {
        let start = self.pos;
        let negative = self.peek() == Some('-');
        let axis_at = if negative { self.pos + 1 } else { self.pos };
        match self.chars.get(axis_at) {
            Some('x') => {
                self.pos = axis_at + 1;
                return Ok(Phase::from_sixths(if negative { 6 } else { 0 }));
            }
            Some('y') => {
                self.pos = axis_at + 1;
                return Ok(Phase::from_sixths(if negative { 9 } else { 3 }));
            }
            Some(c) if c.is_ascii_digit() || *c == '.' => {}
            _ => {
                return Err(self.error_at(axis_at + 1, "malformed phase: expected degrees, radians with 'rad', or x/y/-x/-y"))
            }
        }
        let value = self.number()?;
        if !value.is_finite() {
            return Err(self.error_at(start + 1, "phase must be finite"));
        }
        if self.eat_str("rad") {
            Ok(Phase::from_radians(value))
        } else {
            Ok(Phase::from_degrees(value))
        }
    }

    fn item(&mut self) -> Result<Item> {
        let start = self.column();
        let kind = self.atom()?;
        let repeat = if self.eat('^') {
            let n = self.integer()?;
            if n == 0 {
                return Err(self.error_at(self.column() - 1, "repeat count must be at least 1"));
            }
            n
        } else {
            1
        };
        Ok(Item {
            kind,
            repeat,
            span: Span {
                start,
                end: self.column(),
            },
        })
    }

    fn atom(&mut self) -> Result<ItemKind> {
        let start = self.pos;
        match self.peek() {
            None => Err(self.error("expected an item, found end of input")),
            Some('(') => {
                if !self.eat_str("(pi)_") {
                    return Err(self.error("expected '(pi)_<phase>'"));
                }
                Ok(ItemKind::Pulse(self.phase()?))
            }
            Some(c) if c.is_ascii_digit() || c == '.' => {
                let value = self.number()?;
                let unit_col = self.column();
                let scale = if self.eat_str("ns") {
                    1e-3
                } else if self.eat_str("us") || self.eat_str("µs") || self.eat_str("μs") {
                    1.0
                } else if self.eat_str("ms") {
                    1e3
                } else {
                    return Err(self.error_at(unit_col, "expected a time unit (ns, us, µs, ms)"));
                };
                if !(value >= 0.0) || !value.is_finite() {
                    return Err(self.error_at(start + 1, "duration must be finite and non-negative"));
                }
                Ok(ItemKind::Duration(value * scale))
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let name = self.word();
                match name.to_ascii_uppercase().as_str() {
                    "TAU" => {
                        if self.eat_str("/2") {
                            Ok(ItemKind::HalfTau)
                        } else {
                            Ok(ItemKind::Tau)
                        }
                    }
                    "CPMG" => {
                        self.expect('(')?;
                        self.skip_ws();
                        let n = self.integer()?;
                        self.skip_ws();
                        let phase = if self.eat(',') {
                            self.skip_ws();
                            let p = self.phase()?;
                            self.skip_ws();
                            p
                        } else {
                            Phase::ZERO
                        };
                        self.expect(')')?;
                        Ok(ItemKind::Macro(Macro::Cpmg { n, phase }))
                    }
                    "KDD" => {
                        self.expect('(')?;
                        self.skip_ws();
                        let p = self.phase()?;
                        self.skip_ws();
                        self.expect(')')?;
                        Ok(ItemKind::Macro(Macro::Kdd(p)))
                    }
                    "KDDXY16" => {
                        if self.eat('(') {
                            self.skip_ws();
                            self.expect(')')?;
                        }
                        Ok(ItemKind::Macro(Macro::KddXy16))
                    }
                    _ => Err(self.error_at(start + 1, format!("unknown item or macro '{name}'"))),
                }
            }
            Some(c) => Err(self.error(format!("unexpected character '{c}'"))),
        }
    }
}
