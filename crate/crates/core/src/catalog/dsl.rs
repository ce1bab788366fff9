//! Scenario catalog text format.
//!
//! ```text
//! # comment
//! scenario s1: reach {car1@2, car2@2} then {car1@6, car2@4}
//! ```
//!
//! Whitespace (including newlines) is insignificant between tokens. Cell
//! numbers run from 1 to 8.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use super::{GridConfig, ScenarioCatalog, ScenarioSpec};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DslError {
    #[error("{line}:{col}: syntax error: {message}")]
    Syntax { line: usize, col: usize, message: String },
    #[error("{line}:{col}: duplicate scenario id `{id}`")]
    DuplicateId { line: usize, col: usize, id: String },
    #[error("{line}:{col}: cell {value} out of range 1..8")]
    CellOutOfRange { line: usize, col: usize, value: u64 },
    #[error("{line}:{col}: scenario `{id}` repeats the cells of `{existing}`")]
    DuplicateScenario { line: usize, col: usize, id: String, existing: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Number(u64),
    Colon,
    LBrace,
    RBrace,
    Comma,
    At,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Number(n) => format!("`{n}`"),
            Tok::Colon => "`:`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::Comma => "`,`".into(),
            Tok::At => "`@`".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Spanned>, DslError> {
    let mut out = Vec::new();
    for (li, raw_line) in text.lines().enumerate() {
        let line = li + 1;
        let content = raw_line.split('#').next().unwrap_or("");
        let chars: Vec<char> = content.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let col = i + 1;
            let single = match c {
                ':' => Some(Tok::Colon),
                '{' => Some(Tok::LBrace),
                '}' => Some(Tok::RBrace),
                ',' => Some(Tok::Comma),
                '@' => Some(Tok::At),
                _ => None,
            };
            if let Some(tok) = single {
                out.push(Spanned { tok, line, col });
                i += 1;
            } else if c.is_whitespace() {
                i += 1;
            } else if c.is_ascii_digit() {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let s: String = chars[start..i].iter().collect();
                let n = s.parse::<u64>().map_err(|_| DslError::Syntax {
                    line,
                    col,
                    message: format!("number `{s}` too large"),
                })?;
                out.push(Spanned { tok: Tok::Number(n), line, col });
            } else if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || matches!(chars[i], '_' | '-' | '.')) {
                    i += 1;
                }
                out.push(Spanned { tok: Tok::Ident(chars[start..i].iter().collect()), line, col });
            } else {
                return Err(DslError::Syntax { line, col, message: format!("unexpected character `{c}`") });
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    eof: (usize, usize),
}

impl Parser {
    fn peek(&self) -> Option<&Spanned> {
        self.toks.get(self.pos)
    }

    fn err_here(&self, message: String) -> DslError {
        let (line, col) = self.peek().map(|s| (s.line, s.col)).unwrap_or(self.eof);
        DslError::Syntax { line, col, message }
    }

    fn next(&mut self, what: &str) -> Result<Spanned, DslError> {
        match self.toks.get(self.pos) {
            Some(s) => {
                self.pos += 1;
                Ok(s.clone())
            }
            None => Err(self.err_here(format!("expected {what}, found end of input"))),
        }
    }

    fn expect(&mut self, want: Tok) -> Result<Spanned, DslError> {
        let what = want.describe();
        let s = self.next(&what)?;
        if s.tok == want {
            Ok(s)
        } else {
            Err(DslError::Syntax { line: s.line, col: s.col, message: format!("expected {what}, found {}", s.tok.describe()) })
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<Spanned, DslError> {
        self.expect(Tok::Ident(kw.to_string()))
    }

    fn ident(&mut self) -> Result<(String, usize, usize), DslError> {
        let s = self.next("scenario id")?;
        match s.tok {
            Tok::Ident(id) => Ok((id, s.line, s.col)),
            other => Err(DslError::Syntax { line: s.line, col: s.col, message: format!("expected scenario id, found {}", other.describe()) }),
        }
    }

    fn cell(&mut self) -> Result<u8, DslError> {
        let s = self.next("cell number")?;
        match s.tok {
            Tok::Number(n) if (1..=8).contains(&n) => Ok(n as u8),
            Tok::Number(n) => Err(DslError::CellOutOfRange { line: s.line, col: s.col, value: n }),
            other => Err(DslError::Syntax { line: s.line, col: s.col, message: format!("expected cell number, found {}", other.describe()) }),
        }
    }

    /// `{ car1@n, car2@n }` in either order.
    fn config(&mut self) -> Result<GridConfig, DslError> {
        self.expect(Tok::LBrace)?;
        let mut cells: [Option<u8>; 2] = [None, None];
        for k in 0..2 {
            if k == 1 {
                self.expect(Tok::Comma)?;
            }
            let s = self.next("`car1` or `car2`")?;
            let slot = match &s.tok {
                Tok::Ident(n) if n == "car1" => 0,
                Tok::Ident(n) if n == "car2" => 1,
                other => {
                    return Err(DslError::Syntax { line: s.line, col: s.col, message: format!("expected `car1` or `car2`, found {}", other.describe()) })
                }
            };
            if cells[slot].is_some() {
                return Err(DslError::Syntax { line: s.line, col: s.col, message: format!("car{} assigned twice", slot + 1) });
            }
            self.expect(Tok::At)?;
            cells[slot] = Some(self.cell()?);
        }
        self.expect(Tok::RBrace)?;
        let [a, b] = cells;
        Ok(GridConfig::from_numbers(a.expect("both set"), b.expect("both set")).expect("range checked"))
    }
}

pub fn parse_scenario_dsl(text: &str) -> Result<ScenarioCatalog, DslError> {
    let toks = lex(text)?;
    let eof_line = text.lines().count().max(1);
    let eof_col = text.lines().last().map(|l| l.chars().count() + 1).unwrap_or(1);
    let mut p = Parser { toks, pos: 0, eof: (eof_line, eof_col) };
    let mut specs = Vec::new();
    let mut ids: HashMap<String, ()> = HashMap::new();
    let mut pairs: HashMap<(GridConfig, GridConfig), String> = HashMap::new();
    while p.peek().is_some() {
        p.keyword("scenario")?;
        let (id, line, col) = p.ident()?;
        p.expect(Tok::Colon)?;
        p.keyword("reach")?;
        let first = p.config()?;
        p.keyword("then")?;
        let second = p.config()?;
        if ids.insert(id.clone(), ()).is_some() {
            return Err(DslError::DuplicateId { line, col, id });
        }
        if let Some(existing) = pairs.insert((first, second), id.clone()) {
            return Err(DslError::DuplicateScenario { line, col, id, existing });
        }
        specs.push(ScenarioSpec { id, first, second });
    }
    Ok(ScenarioCatalog::new(specs).expect("duplicates checked during parsing"))
}

/// Prints a catalog in the form accepted by [`parse_scenario_dsl`].
pub fn to_dsl(catalog: &ScenarioCatalog) -> String {
    let mut out = String::new();
    for s in catalog.specs() {
        let [a1, a2] = s.first.numbers();
        let [b1, b2] = s.second.numbers();
        writeln!(out, "scenario {}: reach {{car1@{a1}, car2@{a2}}} then {{car1@{b1}, car2@{b2}}}", s.id)
            .expect("write to string");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_single_scenario() {
        let c = parse_scenario_dsl("scenario s1: reach {car1@2, car2@2} then {car1@6, car2@4}").unwrap();
        assert_eq!(c.len(), 1);
        let s = &c.specs()[0];
        assert_eq!(s.id, "s1");
        assert_eq!(s.first, GridConfig::from_numbers(2, 2).unwrap());
        assert_eq!(s.second, GridConfig::from_numbers(6, 4).unwrap());
    }

    #[test]
    fn empty_and_comment_only() {
        assert!(parse_scenario_dsl("").unwrap().is_empty());
        assert!(parse_scenario_dsl("# nothing\n\n   # more\n").unwrap().is_empty());
    }

    #[test]
    fn cell_out_of_range_reports_position() {
        let err = parse_scenario_dsl("scenario s: reach {car1@9, car2@1} then {car1@1, car2@1}").unwrap_err();
        assert_eq!(err, DslError::CellOutOfRange { line: 1, col: 25, value: 9 });
    }

    #[test]
    fn duplicate_id() {
        let text = "scenario a: reach {car1@1, car2@1} then {car1@2, car2@2}\n\
                    scenario a: reach {car1@1, car2@1} then {car1@3, car2@2}\n";
        assert!(matches!(parse_scenario_dsl(text), Err(DslError::DuplicateId { line: 2, .. })));
    }

    #[test]
    fn syntax_errors_carry_location() {
        let err = parse_scenario_dsl("scenario s: reach {car1@1 car2@1} then {car1@1, car2@1}").unwrap_err();
        assert!(matches!(err, DslError::Syntax { line: 1, col: 27, .. }), "{err}");
        let err = parse_scenario_dsl("scenario s: reach {car1@1, car2@1}").unwrap_err();
        assert!(matches!(err, DslError::Syntax { .. }), "{err}");
        let err = parse_scenario_dsl("scenario s: reach {car1@1, car1@1} then {car1@1, car2@1}").unwrap_err();
        assert!(err.to_string().contains("twice"), "{err}");
        let err = parse_scenario_dsl("scenario s: reach {car1@1, car2@1} then {car1@1, car2@1} $").unwrap_err();
        assert!(matches!(err, DslError::Syntax { col: 58, .. }), "{err}");
    }

    #[test]
    fn accepts_free_layout_and_swapped_order() {
        let text = "scenario x :\n  reach { car2@5 , car1@4 }\n  then {car1@1,car2@3} # trailing\n";
        let c = parse_scenario_dsl(text).unwrap();
        assert_eq!(c.specs()[0].first, GridConfig::from_numbers(4, 5).unwrap());
    }
}
