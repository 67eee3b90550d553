//! Line-oriented text format for databases, rules and queries.
//!
//! ```text
//! % comment
//! R(c,d). P(d).                          % facts
//! R(X1,X2), T(X1) -> U(X2).              % full rule
//! R(X1,X2) -> exists Y. S(X1,Y).         % existential head
//! S(X1,X2), P(X3) -> T(X1) | T(X1), U(X1).
//! ? U(d).                                % query
//! ? M(c,c) | M(c,d).
//! ```
//!
//! In argument position an identifier starting with an uppercase letter is a
//! variable and anything else is a constant (or a function symbol when
//! followed by `(`, accepted only with [`ParseOptions::allow_skolem`]).
//! Predicate arity is fixed by its first use.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::model::{Atom, HeadConjunct, Instance, ModelError, Query, Rule, Schema, Sym, Term};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Program {
    pub database: Instance,
    pub rules: Vec<Rule>,
    pub queries: Vec<Query>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// Accept shallow function terms in rules.
    pub allow_skolem: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("unexpected character {0:?}")]
    Lexical(char),
    #[error("expected {expected}, found {found}")]
    Unexpected { expected: &'static str, found: String },
    #[error(transparent)]
    Arity(#[from] ModelError),
    #[error("variable {0} in a fact")]
    VariableInFact(Sym),
    #[error("function term in a fact or query")]
    FunctionInGround,
    #[error("existential variable {0} used in the rule body")]
    ExistentialInBody(Sym),
    #[error("duplicate existential binder {0}")]
    DuplicateBinder(Sym),
    #[error("existential binder {0} is not a variable")]
    BinderNotVariable(Sym),
    #[error("head variable {0} is neither a body variable nor bound by `exists`")]
    UnboundHeadVariable(Sym),
    #[error("rules need a non-empty body")]
    EmptyBody,
    #[error("constant {0} inside a rule")]
    ConstantInRule(Sym),
    #[error("function terms require --allow-skolem")]
    FunctionTerm,
    #[error("nested function term")]
    NestedFunction,
    #[error("expected exactly one {0}")]
    ExpectedSingle(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    LParen,
    RParen,
    Comma,
    Dot,
    Arrow,
    Bar,
    Question,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Dot => f.write_str("`.`"),
            Tok::Arrow => f.write_str("`->`"),
            Tok::Bar => f.write_str("`|`"),
            Tok::Question => f.write_str("`?`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Pos {
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<(Tok, Pos)>, ParseError> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    let (mut line, mut col) = (1usize, 1usize);
    while let Some(&c) = chars.peek() {
        let pos = Pos { line, col };
        let mut bump = |chars: &mut std::iter::Peekable<std::str::Chars>| {
            let c = chars.next().unwrap();
            if c == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
        };
        match c {
            c if c.is_whitespace() => bump(&mut chars),
            '%' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    bump(&mut chars);
                }
            }
            '(' | ')' | ',' | '.' | '|' | '?' => {
                bump(&mut chars);
                out.push((
                    match c {
                        '(' => Tok::LParen,
                        ')' => Tok::RParen,
                        ',' => Tok::Comma,
                        '.' => Tok::Dot,
                        '|' => Tok::Bar,
                        _ => Tok::Question,
                    },
                    pos,
                ));
            }
            '-' => {
                bump(&mut chars);
                if chars.peek() == Some(&'>') {
                    bump(&mut chars);
                    out.push((Tok::Arrow, pos));
                } else {
                    return Err(ParseError { line: pos.line, col: pos.col, kind: ParseErrorKind::Lexical('-') });
                }
            }
            c if c.is_ascii_alphanumeric() || c == '_' => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        s.push(c);
                        bump(&mut chars);
                    } else {
                        break;
                    }
                }
                out.push((Tok::Ident(s), pos));
            }
            other => {
                return Err(ParseError { line: pos.line, col: pos.col, kind: ParseErrorKind::Lexical(other) })
            }
        }
    }
    out.push((Tok::Eof, Pos { line, col }));
    Ok(out)
}

struct Parser<'o> {
    toks: Vec<(Tok, Pos)>,
    at: usize,
    opts: &'o ParseOptions,
    schema: Schema,
}

enum Statement {
    Fact(Atom),
    Rule(Rule),
    Query(Query),
}

impl<'o> Parser<'o> {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn peek2(&self) -> &Tok {
        &self.toks[(self.at + 1).min(self.toks.len() - 1)].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    fn err_at(&self, pos: Pos, kind: ParseErrorKind) -> ParseError {
        ParseError { line: pos.line, col: pos.col, kind }
    }

    fn next(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, expected: &'static str) -> Result<(), ParseError> {
        if *self.peek() == want {
            self.next();
            Ok(())
        } else {
            Err(self.err_at(self.pos(), ParseErrorKind::Unexpected { expected, found: self.peek().to_string() }))
        }
    }

    fn ident(&mut self, expected: &'static str) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.next();
                Ok(s)
            }
            other => Err(self.err_at(self.pos(), ParseErrorKind::Unexpected { expected, found: other.to_string() })),
        }
    }

    fn term(&mut self, nested: bool) -> Result<Term, ParseError> {
        let pos = self.pos();
        let name = self.ident("a term")?;
        if *self.peek() == Tok::LParen {
            if nested {
                return Err(self.err_at(pos, ParseErrorKind::NestedFunction));
            }
            if !self.opts.allow_skolem {
                return Err(self.err_at(pos, ParseErrorKind::FunctionTerm));
            }
            self.next();
            let mut args = Vec::new();
            if *self.peek() != Tok::RParen {
                loop {
                    args.push(self.term(true)?);
                    if *self.peek() == Tok::Comma {
                        self.next();
                    } else {
                        break;
                    }
                }
            }
            self.expect(Tok::RParen, "`)`")?;
            return Ok(Term::App(Sym::from(name), args));
        }
        let sym = Sym::from(name);
        Ok(if sym.is_var_name() { Term::Var(sym) } else { Term::Const(sym) })
    }

    fn atom(&mut self) -> Result<Atom, ParseError> {
        let pos = self.pos();
        let pred = self.ident("a predicate")?;
        let mut args = Vec::new();
        if *self.peek() == Tok::LParen {
            self.next();
            if *self.peek() != Tok::RParen {
                loop {
                    args.push(self.term(false)?);
                    if *self.peek() == Tok::Comma {
                        self.next();
                    } else {
                        break;
                    }
                }
            }
            self.expect(Tok::RParen, "`)` or `,`")?;
        }
        let atom = Atom::new(Sym::from(pred), args);
        self.schema.check(&atom).map_err(|e| self.err_at(pos, e.into()))?;
        Ok(atom)
    }

    fn atom_list(&mut self) -> Result<Vec<Atom>, ParseError> {
        let mut out = vec![self.atom()?];
        while *self.peek() == Tok::Comma {
            self.next();
            out.push(self.atom()?);
        }
        Ok(out)
    }

    fn head_conjunct(&mut self) -> Result<(Vec<Sym>, Vec<Atom>, Pos), ParseError> {
        let pos = self.pos();
        let mut binders = Vec::new();
        if *self.peek() == Tok::Ident("exists".into()) && matches!(self.peek2(), Tok::Ident(_)) {
            self.next();
            loop {
                let bpos = self.pos();
                let v = Sym::from(self.ident("a variable")?);
                if !v.is_var_name() {
                    return Err(self.err_at(bpos, ParseErrorKind::BinderNotVariable(v)));
                }
                if binders.contains(&v) {
                    return Err(self.err_at(bpos, ParseErrorKind::DuplicateBinder(v)));
                }
                binders.push(v);
                if *self.peek() == Tok::Comma {
                    self.next();
                } else {
                    break;
                }
            }
            self.expect(Tok::Dot, "`.` after the existential binders")?;
        }
        Ok((binders, self.atom_list()?, pos))
    }

    fn statement(&mut self) -> Result<Statement, ParseError> {
        let start = self.pos();
        if *self.peek() == Tok::Question {
            self.next();
            let mut disjuncts = vec![self.atom_list()?];
            while *self.peek() == Tok::Bar {
                self.next();
                disjuncts.push(self.atom_list()?);
            }
            self.expect(Tok::Dot, "`.` or `|`")?;
            if disjuncts.iter().flatten().any(Atom::is_functional) {
                return Err(self.err_at(start, ParseErrorKind::FunctionInGround));
            }
            return Ok(Statement::Query(Query::new(disjuncts)));
        }
        let body = self.atom_list()?;
        match self.peek() {
            Tok::Dot => {
                self.next();
                if body.len() != 1 {
                    return Err(self.err_at(start, ParseErrorKind::Unexpected {
                        expected: "`->` after a conjunction",
                        found: "`.`".into(),
                    }));
                }
                let fact = body.into_iter().next().unwrap();
                for t in &fact.args {
                    match t {
                        Term::Var(v) => return Err(self.err_at(start, ParseErrorKind::VariableInFact(v.clone()))),
                        Term::App(..) => return Err(self.err_at(start, ParseErrorKind::FunctionInGround)),
                        Term::Const(_) => {}
                    }
                }
                Ok(Statement::Fact(fact))
            }
            Tok::Arrow => {
                self.next();
                let mut head = Vec::new();
                if *self.peek() != Tok::Dot {
                    head.push(self.head_conjunct()?);
                    while *self.peek() == Tok::Bar {
                        self.next();
                        head.push(self.head_conjunct()?);
                    }
                }
                self.expect(Tok::Dot, "`.` or `|`")?;
                self.check_rule(start, &body, &head)?;
                Ok(Statement::Rule(Rule::new(
                    body,
                    head.into_iter().map(|(ex, atoms, _)| HeadConjunct::new(ex, atoms)).collect(),
                )))
            }
            other => Err(self.err_at(self.pos(), ParseErrorKind::Unexpected {
                expected: "`.` or `->`",
                found: other.to_string(),
            })),
        }
    }

    fn check_rule(&self, start: Pos, body: &[Atom], head: &[(Vec<Sym>, Vec<Atom>, Pos)]) -> Result<(), ParseError> {
        if body.is_empty() {
            return Err(self.err_at(start, ParseErrorKind::EmptyBody));
        }
        let body_vars: BTreeSet<Sym> = crate::model::vars_of(body).into_iter().collect();
        for (binders, atoms, pos) in head {
            for y in binders {
                if body_vars.contains(y) {
                    return Err(self.err_at(*pos, ParseErrorKind::ExistentialInBody(y.clone())));
                }
            }
            for v in crate::model::vars_of(atoms) {
                if !body_vars.contains(&v) && !binders.contains(&v) {
                    return Err(self.err_at(*pos, ParseErrorKind::UnboundHeadVariable(v)));
                }
            }
        }
        let all = body.iter().chain(head.iter().flat_map(|h| h.1.iter()));
        for a in all {
            for t in &a.args {
                let consts: Vec<&Sym> = match t {
                    Term::Const(c) => vec![c],
                    Term::App(_, args) => args
                        .iter()
                        .filter_map(|x| if let Term::Const(c) = x { Some(c) } else { None })
                        .collect(),
                    Term::Var(_) => vec![],
                };
                if let Some(c) = consts.first() {
                    return Err(self.err_at(start, ParseErrorKind::ConstantInRule((*c).clone())));
                }
            }
        }
        Ok(())
    }
}

pub fn parse(text: &str, opts: &ParseOptions) -> Result<Program, ParseError> {
    let mut p = Parser { toks: lex(text)?, at: 0, opts, schema: Schema::new() };
    let mut prog = Program::default();
    while *p.peek() != Tok::Eof {
        match p.statement()? {
            Statement::Fact(f) => {
                prog.database.insert(f);
            }
            Statement::Rule(r) => prog.rules.push(r),
            Statement::Query(q) => prog.queries.push(q),
        }
    }
    Ok(prog)
}

/// Parses text holding exactly one rule.
pub fn parse_rule(text: &str, opts: &ParseOptions) -> Result<Rule, ParseError> {
    let p = parse(text, opts)?;
    if p.rules.len() != 1 || !p.database.is_empty() || !p.queries.is_empty() {
        return Err(ParseError { line: 1, col: 1, kind: ParseErrorKind::ExpectedSingle("rule") });
    }
    Ok(p.rules.into_iter().next().unwrap())
}

/// Parses a sequence of rules sharing one schema.
pub fn parse_rules(text: &str, opts: &ParseOptions) -> Result<Vec<Rule>, ParseError> {
    Ok(parse(text, opts)?.rules)
}

pub fn parse_query(text: &str) -> Result<Query, ParseError> {
    let p = parse(text, &ParseOptions::default())?;
    if p.queries.len() != 1 || !p.database.is_empty() || !p.rules.is_empty() {
        return Err(ParseError { line: 1, col: 1, kind: ParseErrorKind::ExpectedSingle("query") });
    }
    Ok(p.queries.into_iter().next().unwrap())
}

pub fn parse_instance(text: &str) -> Result<Instance, ParseError> {
    let p = parse(text, &ParseOptions::default())?;
    if !p.rules.is_empty() || !p.queries.is_empty() {
        return Err(ParseError { line: 1, col: 1, kind: ParseErrorKind::ExpectedSingle("database") });
    }
    Ok(p.database)
}

fn join_atoms(atoms: &[Atom]) -> String {
    atoms.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(", ")
}

pub fn print_rule(rule: &Rule) -> String {
    let mut s = join_atoms(rule.body());
    s.push_str(" ->");
    for (i, c) in rule.head().iter().enumerate() {
        s.push_str(if i == 0 { " " } else { " | " });
        if !c.exists().is_empty() {
            s.push_str("exists ");
            s.push_str(&c.exists().iter().map(|y| y.as_str()).collect::<Vec<_>>().join(","));
            s.push_str(". ");
        }
        s.push_str(&join_atoms(c.atoms()));
    }
    s.push('.');
    s
}

pub fn print_query(q: &Query) -> String {
    let parts: Vec<String> = q.disjuncts.iter().map(|d| join_atoms(d)).collect();
    format!("? {}.", parts.join(" | "))
}

pub fn print_instance(db: &Instance) -> String {
    db.iter().map(|f| format!("{f}.\n")).collect()
}

pub fn print_rules<'a>(rules: impl IntoIterator<Item = &'a Rule>) -> String {
    rules.into_iter().map(|r| print_rule(r) + "\n").collect()
}

pub fn print_program(p: &Program) -> String {
    let mut out = print_instance(&p.database);
    out.push_str(&print_rules(&p.rules));
    for q in &p.queries {
        out.push_str(&print_query(q));
        out.push('\n');
    }
    out
}
