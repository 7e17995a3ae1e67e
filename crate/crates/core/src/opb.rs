//! OPB reading and writing, plus a DIMACS CNF reader.
//!
//! Accepted OPB constraint lines have the shape
//! `(<sign><int> x<int>)+ (>=|=|!=|<=|<|>) <int> ;`. The first line may carry the
//! header `* #variable= N #constraint= M`; other lines starting with `*` are
//! comments, except for the extensions `* aux: i j k` (auxiliary variables) and
//! `* ext: neq` (file contains `!=` constraints).

use std::fmt::Write as _;

use num_bigint::BigInt;
use num_rational::BigRational;
use thiserror::Error;

use crate::pb::{Lit, NormRelation, PbError, PbFormula, RawConstraint, Relation, Var};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OpbErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("variable index {index} out of range 1..={declared}")]
    VarIndex { index: u64, declared: u32 },
    #[error("unsupported relational operator `{0}`")]
    UnsupportedRelation(String),
    #[error("header declares {declared} constraints but the body has {found}")]
    ConstraintCount { declared: usize, found: usize },
    #[error(transparent)]
    Formula(#[from] PbError),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{line}:{col}: {kind}")]
pub struct OpbError {
    pub line: usize,
    pub col: usize,
    pub kind: OpbErrorKind,
}

/// A parsed OPB file before normalization.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OpbDocument {
    pub declared_vars: u32,
    pub declared_constraints: usize,
    pub body: Vec<RawConstraint>,
    pub comments: Vec<String>,
    pub aux: Vec<Var>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Int(BigInt),
    Var(u64),
    Rel(Relation),
    Semi,
}

fn lex_line(line: &str, lineno: usize, out: &mut Vec<(Tok, usize, usize)>) -> Result<(), OpbError> {
    let err = |col: usize, kind: OpbErrorKind| OpbError { line: lineno, col: col + 1, kind };
    let bytes = line.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c == b';' {
            out.push((Tok::Semi, lineno, start + 1));
            i += 1;
        } else if c == b'+' || c == b'-' || c.is_ascii_digit() {
            i += 1;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let text = &line[start..i];
            let text = text.strip_prefix('+').unwrap_or(text);
            let value: BigInt = text
                .parse()
                .map_err(|_| err(start, OpbErrorKind::Syntax(format!("malformed integer `{}`", &line[start..i]))))?;
            out.push((Tok::Int(value), lineno, start + 1));
        } else if c == b'x' {
            i += 1;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let index: u64 = line[start + 1..i]
                .parse()
                .map_err(|_| err(start, OpbErrorKind::Syntax("malformed variable".into())))?;
            out.push((Tok::Var(index), lineno, start + 1));
        } else if b"<>=!".contains(&c) {
            while i < bytes.len() && b"<>=!".contains(&bytes[i]) {
                i += 1;
            }
            let rel = match &line[start..i] {
                ">=" => Relation::Ge,
                "<=" => Relation::Le,
                ">" => Relation::Gt,
                "<" => Relation::Lt,
                "=" => Relation::Eq,
                "!=" => Relation::Ne,
                other => return Err(err(start, OpbErrorKind::UnsupportedRelation(other.into()))),
            };
            out.push((Tok::Rel(rel), lineno, start + 1));
        } else {
            let ch = line[start..].chars().next().unwrap_or('?');
            return Err(err(start, OpbErrorKind::Syntax(format!("unexpected character `{ch}`"))));
        }
    }
    Ok(())
}

fn parse_header(line: &str) -> Option<(u32, usize)> {
    let mut words = line.trim_start_matches('*').split_whitespace();
    let mut vars = None;
    let mut cons = None;
    while let Some(w) = words.next() {
        match w {
            "#variable=" => vars = words.next()?.parse().ok(),
            "#constraint=" => cons = words.next()?.parse().ok(),
            _ => {}
        }
    }
    Some((vars?, cons?))
}

pub fn parse_opb_document(text: &str) -> Result<OpbDocument, OpbError> {
    let mut header = None;
    let mut comments = Vec::new();
    let mut aux_raw: Vec<(u64, usize)> = Vec::new();
    let mut toks = Vec::new();
    let mut first_content = true;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('*') {
            if first_content {
                header = parse_header(trimmed);
            }
            let body = comment.trim();
            if let Some(list) = body.strip_prefix("aux:") {
                for w in list.split_whitespace() {
                    let v = w.trim_start_matches('x').parse::<u64>().map_err(|_| OpbError {
                        line: lineno,
                        col: 1,
                        kind: OpbErrorKind::Syntax(format!("bad aux variable `{w}`")),
                    })?;
                    aux_raw.push((v, lineno));
                }
            }
            comments.push(body.to_string());
        } else {
            lex_line(line, lineno, &mut toks)?;
        }
        first_content = false;
    }

    let mut body = Vec::new();
    let mut terms: Vec<(BigRational, Lit)> = Vec::new();
    let mut var_refs: Vec<(u64, usize, usize)> = Vec::new();
    let mut it = toks.into_iter().peekable();
    let syntax = |line, col, msg: &str| OpbError { line, col, kind: OpbErrorKind::Syntax(msg.into()) };
    let mut last_pos = (text.lines().count().max(1), 1);
    while let Some((tok, line, col)) = it.next() {
        last_pos = (line, col);
        match tok {
            Tok::Int(coef) => match it.next() {
                Some((Tok::Var(index), vl, vc)) => {
                    var_refs.push((index, vl, vc));
                    let var = Var::new(u32::try_from(index.max(1)).unwrap_or(u32::MAX));
                    terms.push((BigRational::from_integer(coef), var.pos()));
                }
                Some((_, l, c)) => return Err(syntax(l, c, "expected variable after coefficient")),
                None => return Err(syntax(line, col, "unexpected end of input")),
            },
            Tok::Rel(relation) => {
                let degree = match it.next() {
                    Some((Tok::Int(d), _, _)) => d,
                    Some((_, l, c)) => return Err(syntax(l, c, "expected integer degree")),
                    None => return Err(syntax(line, col, "unexpected end of input")),
                };
                match it.next() {
                    Some((Tok::Semi, _, _)) => {}
                    Some((_, l, c)) => return Err(syntax(l, c, "expected `;`")),
                    None => return Err(syntax(line, col, "missing `;`")),
                }
                body.push(RawConstraint::new(
                    std::mem::take(&mut terms),
                    relation,
                    BigRational::from_integer(degree),
                ));
            }
            Tok::Var(_) => return Err(syntax(line, col, "variable without coefficient")),
            Tok::Semi => return Err(syntax(line, col, "missing relational operator")),
        }
    }
    if !terms.is_empty() {
        return Err(syntax(last_pos.0, last_pos.1, "unterminated constraint"));
    }

    let max_index = var_refs.iter().map(|r| r.0).chain(aux_raw.iter().map(|a| a.0)).max().unwrap_or(0);
    let (declared_vars, declared_constraints) = match header {
        Some((v, c)) => (v, c),
        None => (u32::try_from(max_index).unwrap_or(u32::MAX), body.len()),
    };
    let aux_refs = aux_raw.iter().map(|&(v, l)| (v, l, 1));
    for (index, line, col) in var_refs.iter().copied().chain(aux_refs) {
        if index == 0 || index > u64::from(declared_vars) {
            return Err(OpbError { line, col, kind: OpbErrorKind::VarIndex { index, declared: declared_vars } });
        }
    }
    if declared_constraints != body.len() {
        return Err(OpbError {
            line: 1,
            col: 1,
            kind: OpbErrorKind::ConstraintCount { declared: declared_constraints, found: body.len() },
        });
    }
    Ok(OpbDocument {
        declared_vars,
        declared_constraints,
        body,
        comments,
        aux: aux_raw.into_iter().map(|(v, _)| Var::new(v as u32)).collect(),
    })
}

impl OpbDocument {
    pub fn to_formula(&self) -> Result<PbFormula, PbError> {
        let mut f = PbFormula::new(self.declared_vars);
        for v in 1..=self.declared_vars {
            f.set_name(Var::new(v), format!("x{v}"))?;
        }
        for raw in &self.body {
            f.add_raw(raw)?;
        }
        for &v in &self.aux {
            f.mark_aux(v)?;
        }
        Ok(f)
    }
}

pub fn parse_opb(text: &str) -> Result<PbFormula, OpbError> {
    let doc = parse_opb_document(text)?;
    doc.to_formula().map_err(|e| OpbError { line: 1, col: 1, kind: e.into() })
}

/// Writes `f` as OPB. Negative literals are rewritten over positive variables
/// (`k ~x` becomes `-k x` with the degree lowered by `k`), so the output uses
/// only `>=` and the `!=` extension.
pub fn write_opb(f: &PbFormula) -> String {
    let mut out = String::new();
    let count = if f.is_unsat() { 1 } else { f.constraints().len() };
    let _ = writeln!(out, "* #variable= {} #constraint= {}", f.num_vars(), count);
    if f.constraints().iter().any(|c| c.relation() == NormRelation::Ne) {
        out.push_str("* ext: neq\n");
    }
    if !f.aux_vars().is_empty() {
        out.push_str("* aux:");
        for v in f.aux_vars() {
            let _ = write!(out, " {}", v.index());
        }
        out.push('\n');
    }
    for (var, name) in f.names() {
        if *name != format!("x{}", var.index()) {
            let _ = writeln!(out, "* var {var} {name}");
        }
    }
    if f.is_unsat() {
        out.push_str(">= 1 ;\n");
        return out;
    }
    for c in f.constraints() {
        let mut degree = c.degree().clone();
        for (k, l) in c.terms() {
            if l.is_positive() {
                let _ = write!(out, "+{} {} ", k, l.var());
            } else {
                degree -= k;
                let _ = write!(out, "-{} {} ", k, l.var());
            }
        }
        let op = match c.relation() {
            NormRelation::Ge => ">=",
            NormRelation::Ne => "!=",
        };
        let _ = writeln!(out, "{op} {degree} ;");
    }
    out
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DimacsError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("missing `p cnf` header")]
    MissingHeader,
    #[error("line {line}: literal {lit} out of range for {num_vars} variables")]
    LiteralRange { line: usize, lit: i64, num_vars: u32 },
    #[error("header declares {declared} clauses but the body has {found}")]
    ClauseCount { declared: usize, found: usize },
}

/// Reads a DIMACS CNF; every clause becomes a `>= 1` constraint.
pub fn parse_dimacs(text: &str) -> Result<PbFormula, DimacsError> {
    let mut header: Option<(u32, usize)> = None;
    let mut clauses: Vec<Vec<Lit>> = Vec::new();
    let mut current: Vec<Lit> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('c') || line.starts_with('%') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('p') {
            let parts: Vec<&str> = rest.split_whitespace().collect();
            let bad = || DimacsError::Syntax { line: lineno, msg: "malformed header".into() };
            if header.is_some() || parts.len() != 3 || parts[0] != "cnf" {
                return Err(bad());
            }
            header = Some((parts[1].parse().map_err(|_| bad())?, parts[2].parse().map_err(|_| bad())?));
            continue;
        }
        let Some((num_vars, _)) = header else {
            return Err(DimacsError::MissingHeader);
        };
        for w in line.split_whitespace() {
            let v: i64 = w
                .parse()
                .map_err(|_| DimacsError::Syntax { line: lineno, msg: format!("bad literal `{w}`") })?;
            if v == 0 {
                clauses.push(std::mem::take(&mut current));
                continue;
            }
            if v.unsigned_abs() > u64::from(num_vars) {
                return Err(DimacsError::LiteralRange { line: lineno, lit: v, num_vars });
            }
            current.push(Lit::from_dimacs(v).expect("nonzero"));
        }
    }
    let (num_vars, declared) = header.ok_or(DimacsError::MissingHeader)?;
    if !current.is_empty() {
        clauses.push(current);
    }
    if clauses.len() != declared {
        return Err(DimacsError::ClauseCount { declared, found: clauses.len() });
    }
    let mut f = PbFormula::new(num_vars);
    for clause in &clauses {
        f.add_clause(clause).expect("literals range-checked");
    }
    Ok(f)
}

/// Writes a normalized formula's constraint terms as `k lit` pairs (debug aid).
pub fn describe(f: &PbFormula) -> String {
    let mut out = String::new();
    for c in f.constraints() {
        let _ = writeln!(out, "{c}");
    }
    if f.is_unsat() {
        out.push_str("false\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pb::Assignment;

    fn models(f: &PbFormula) -> Vec<u64> {
        (0..1u64 << f.num_vars())
            .filter(|&b| f.evaluate(&Assignment::from_bits(f.num_vars(), b)).unwrap())
            .collect()
    }

    const FIG3: &str = "* #variable= 3 #constraint= 2\n+2 x1 +1 x2 >= 2 ;\n+1 x2 +1 x3 >= 1 ;\n";

    #[test]
    fn parses_worked_example() {
        let f = parse_opb(FIG3).unwrap();
        assert_eq!(f.num_vars(), 3);
        assert_eq!(f.constraints().len(), 2);
        assert_eq!(models(&f).len(), 3);
        assert_eq!(f.name(Var::new(2)), Some("x2"));
    }

    #[test]
    fn header_is_optional() {
        let f = parse_opb("+1 x1 >= 1 ;").unwrap();
        assert_eq!(f.num_vars(), 1);
        assert_eq!(models(&f), vec![1]);
    }

    #[test]
    fn negative_coefficients_normalize() {
        let f = parse_opb("-1 x1 -1 x2 >= -1 ;").unwrap();
        assert_eq!(describe(&f), "1 ~x1 + 1 ~x2 >= 1\n");
    }

    #[test]
    fn writes_header_and_lines() {
        let f = parse_opb(FIG3).unwrap();
        let text = write_opb(&f);
        assert!(text.starts_with("* #variable= 3 #constraint= 2\n"));
        assert!(text.contains("+2 x1 +1 x2 >= 2 ;"));
        assert_eq!(write_opb(&PbFormula::new(2)), "* #variable= 2 #constraint= 0\n");
    }

    #[test]
    fn neq_extension() {
        let f = parse_opb("+1 x1 +1 x2 != 1 ;").unwrap();
        let text = write_opb(&f);
        assert!(text.contains("* ext: neq"));
        assert!(text.contains("+1 x1 +1 x2 != 1 ;"));
        assert_eq!(models(&parse_opb(&text).unwrap()), models(&f));
    }

    #[test]
    fn aux_annotation_round_trips() {
        let f = parse_opb("* #variable= 3 #constraint= 1\n* aux: 3\n+1 x1 +1 x3 >= 1 ;\n").unwrap();
        assert_eq!(f.aux_vars().iter().map(|v| v.index()).collect::<Vec<_>>(), vec![3]);
        let again = parse_opb(&write_opb(&f)).unwrap();
        assert_eq!(again.aux_vars(), f.aux_vars());
    }

    #[test]
    fn rejects_bad_input() {
        let e = parse_opb("* #variable= 2 #constraint= 1\n+1 x3 >= 1 ;\n").unwrap_err();
        assert!(matches!(e.kind, OpbErrorKind::VarIndex { index: 3, .. }));
        assert_eq!((e.line, e.col), (2, 4));
        let e = parse_opb("+1 x0 >= 1 ;").unwrap_err();
        assert!(matches!(e.kind, OpbErrorKind::VarIndex { index: 0, .. }));
        let e = parse_opb("+1 x1 => 1 ;").unwrap_err();
        assert_eq!(e.kind, OpbErrorKind::UnsupportedRelation("=>".into()));
        let e = parse_opb("+1 x1 >= 1").unwrap_err();
        assert!(matches!(e.kind, OpbErrorKind::Syntax(_)));
        let e = parse_opb("+1 y1 >= 1 ;").unwrap_err();
        assert_eq!((e.line, e.col), (1, 4));
        let e = parse_opb("* #variable= 1 #constraint= 2\n+1 x1 >= 1 ;\n").unwrap_err();
        assert!(matches!(e.kind, OpbErrorKind::ConstraintCount { declared: 2, found: 1 }));
    }

    #[test]
    fn accepts_extra_relations() {
        let f = parse_opb("+1 x1 +1 x2 <= 1 ;\n+1 x1 +1 x2 > 0 ;\n").unwrap();
        assert_eq!(models(&f), vec![1, 2]);
    }

    #[test]
    fn unsat_formula_round_trips() {
        let f = parse_opb("+1 x1 >= 2 ;").unwrap();
        assert!(f.is_unsat());
        assert!(parse_opb(&write_opb(&f)).unwrap().is_unsat());
    }

    #[test]
    fn dimacs() {
        let f = parse_dimacs("c test\np cnf 2 1\n1 -2 0\n").unwrap();
        assert_eq!(describe(&f), "1 x1 + 1 ~x2 >= 1\n");
        let empty = parse_dimacs("p cnf 1 0\n").unwrap();
        assert_eq!(models(&empty).len(), 2);
        assert!(matches!(
            parse_dimacs("p cnf 2 1\n1 3 0\n"),
            Err(DimacsError::LiteralRange { lit: 3, .. })
        ));
        assert!(matches!(
            parse_dimacs("p cnf 2 2\n1 2 0\n"),
            Err(DimacsError::ClauseCount { declared: 2, found: 1 })
        ));
        assert_eq!(parse_dimacs("1 2 0\n"), Err(DimacsError::MissingHeader));
    }
}
