//! Plain-text canonical form of a [`ConicProgram`].
//!
//! ```text
//! conic-program v1
//! vars <n>
//! v <lower> <upper> <objective> <c|b>      one line per variable
//! offset <value>
//! r <label> <le|ge|eq> <rhs> <k> <idx>:<coef> ...
//! s <head> <k> <idx> ...                    ‖tail‖ ≤ head
//! q <first> <second> <k> <idx> ...          2·first·second ≥ ‖tail‖²
//! end
//! ```
//!
//! Floats are written with Rust's shortest round-trip formatting, so
//! `load(&dump(p)) == p` bit for bit.

use std::fmt::Write as _;

use crate::{ConicError, ConicProgram, Sense, Var};

const HEADER: &str = "conic-program v1";

pub fn dump(p: &ConicProgram) -> String {
    let mut out = String::new();
    let n = p.num_vars();
    writeln!(out, "{HEADER}").unwrap();
    writeln!(out, "vars {n}").unwrap();
    for i in 0..n {
        let kind = if p.is_binary(Var(i)) { 'b' } else { 'c' };
        let (lo, hi) = p.bounds(Var(i));
        writeln!(out, "v {lo:?} {hi:?} {:?} {kind}", p.objective()[i]).unwrap();
    }
    writeln!(out, "offset {:?}", p.offset()).unwrap();
    for row in p.rows() {
        write!(out, "r {} {} {:?} {}", row.label, row.sense.as_str(), row.rhs, row.terms.len()).unwrap();
        for (v, a) in &row.terms {
            write!(out, " {}:{a:?}", v.0).unwrap();
        }
        out.push('\n');
    }
    for cone in p.socs() {
        write!(out, "s {} {}", cone.head.0, cone.tail.len()).unwrap();
        for v in &cone.tail {
            write!(out, " {}", v.0).unwrap();
        }
        out.push('\n');
    }
    for cone in p.rotated() {
        write!(out, "q {} {} {}", cone.first.0, cone.second.0, cone.tail.len()).unwrap();
        for v in &cone.tail {
            write!(out, " {}", v.0).unwrap();
        }
        out.push('\n');
    }
    out.push_str("end\n");
    out
}

struct Cursor<'a> {
    line: usize,
    tokens: std::str::SplitWhitespace<'a>,
}

impl<'a> Cursor<'a> {
    fn err(&self, message: impl Into<String>) -> ConicError {
        ConicError::Parse { line: self.line, message: message.into() }
    }

    fn next(&mut self, what: &str) -> Result<&'a str, ConicError> {
        self.tokens.next().ok_or_else(|| self.err(format!("missing {what}")))
    }

    fn float(&mut self, what: &str) -> Result<f64, ConicError> {
        let tok = self.next(what)?;
        tok.parse().map_err(|_| self.err(format!("bad {what} `{tok}`")))
    }

    fn index(&mut self, what: &str) -> Result<usize, ConicError> {
        let tok = self.next(what)?;
        tok.parse().map_err(|_| self.err(format!("bad {what} `{tok}`")))
    }

    fn vars(&mut self, what: &str) -> Result<Vec<Var>, ConicError> {
        let k = self.index("count")?;
        (0..k).map(|_| self.index(what).map(Var)).collect()
    }

    fn finish(&mut self) -> Result<(), ConicError> {
        match self.tokens.next() {
            Some(tok) => Err(self.err(format!("trailing token `{tok}`"))),
            None => Ok(()),
        }
    }
}

pub fn load(text: &str) -> Result<ConicProgram, ConicError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l)).filter(|(_, l)| !l.trim().is_empty());
    let (line, first) = lines.next().ok_or(ConicError::Parse { line: 0, message: "empty input".into() })?;
    if first.trim() != HEADER {
        return Err(ConicError::Parse { line, message: format!("expected `{HEADER}`") });
    }
    let mut p = ConicProgram::new();
    let mut declared: Option<usize> = None;
    let mut ended = false;
    for (line, text) in lines {
        if ended {
            return Err(ConicError::Parse { line, message: "content after `end`".into() });
        }
        let mut c = Cursor { line, tokens: text.split_whitespace() };
        match c.next("record tag")? {
            "vars" => declared = Some(c.index("variable count")?),
            "v" => {
                let lo = c.float("lower bound")?;
                let hi = c.float("upper bound")?;
                let obj = c.float("objective coefficient")?;
                let v = p.add_var(lo, hi);
                p.set_objective(v, obj);
                match c.next("kind")? {
                    "c" => {}
                    "b" => p.mark_binary(v),
                    other => return Err(c.err(format!("bad kind `{other}`"))),
                }
                // mark_binary clamps; restore the literal bounds for fidelity
                p.set_bounds(v, lo, hi);
            }
            "offset" => p.set_offset(c.float("offset")?),
            "r" => {
                let label = c.next("label")?;
                let sense = match c.next("sense")? {
                    "le" => Sense::Le,
                    "ge" => Sense::Ge,
                    "eq" => Sense::Eq,
                    other => return Err(c.err(format!("bad sense `{other}`"))),
                };
                let rhs = c.float("rhs")?;
                let k = c.index("term count")?;
                let mut terms = Vec::with_capacity(k);
                for _ in 0..k {
                    let tok = c.next("term")?;
                    let (idx, coef) = tok.split_once(':').ok_or_else(|| c.err(format!("bad term `{tok}`")))?;
                    let idx: usize = idx.parse().map_err(|_| c.err(format!("bad term index `{idx}`")))?;
                    let coef: f64 = coef.parse().map_err(|_| c.err(format!("bad coefficient `{coef}`")))?;
                    terms.push((Var(idx), coef));
                }
                p.push_row_raw(label, terms, sense, rhs);
            }
            "s" => {
                let head = Var(c.index("cone head")?);
                let tail = c.vars("cone member")?;
                p.add_soc(head, tail);
            }
            "q" => {
                let first = Var(c.index("cone first")?);
                let second = Var(c.index("cone second")?);
                let tail = c.vars("cone member")?;
                p.add_rotated(first, second, tail);
            }
            "end" => ended = true,
            other => return Err(c.err(format!("unknown record `{other}`"))),
        }
        c.finish()?;
    }
    if !ended {
        return Err(ConicError::Parse { line: text.lines().count(), message: "missing `end`".into() });
    }
    if let Some(n) = declared {
        if n != p.num_vars() {
            return Err(ConicError::Parse {
                line: 0,
                message: format!("declared {n} variables, found {}", p.num_vars()),
            });
        }
    }
    p.validate()?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_program_round_trips() {
        let mut p = ConicProgram::new();
        let x = p.add_var(-1.5, f64::INFINITY);
        let b = p.add_binary();
        let t = p.add_free_var();
        p.set_objective(x, 0.1);
        p.set_offset(-3.25);
        p.add_row("bal", vec![(x, 1.0), (b, -2.0)], Sense::Eq, 0.3);
        p.add_soc(t, vec![x]);
        p.add_rotated(x, t, vec![]);
        let text = dump(&p);
        assert_eq!(load(&text).unwrap(), p);
        assert_eq!(dump(&load(&text).unwrap()), text);
    }

    #[test]
    fn reports_line_of_bad_record() {
        let text = "conic-program v1\nvars 1\nv 0.0 1.0 0.0 c\nr x zz 1.0 0\nend\n";
        assert_eq!(load(text), Err(ConicError::Parse { line: 4, message: "bad sense `zz`".into() }));
    }

    #[test]
    fn rejects_out_of_range_terms() {
        let text = "conic-program v1\nv 0.0 1.0 0.0 c\nr x le 1.0 1 3:1.0\nend\n";
        assert!(matches!(load(text), Err(ConicError::VarOutOfRange { index: 3, .. })));
    }
}
