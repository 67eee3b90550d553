//! Terms, atoms, rules, instances and queries.
//!
//! A single [`Rule`] type covers tuple-generating dependencies (one head
//! conjunct), disjunctive TGDs (several head conjuncts) and Skolemized
//! "guarded simple" rules (shallow function terms, no existentials). Rules are
//! normalized on construction: the body and every head conjunct are
//! deduplicated, sorted sets, unused existential binders are dropped and
//! duplicate head conjuncts are removed while keeping the written order.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Serialize, Serializer};
use thiserror::Error;

/// An interned-by-value identifier.
///
/// Ordering is "natural": embedded digit runs compare numerically, so `X2`
/// sorts before `X10`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Sym(Arc<str>);

impl Sym {
    pub fn new(s: &str) -> Self {
        Sym(Arc::from(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Variables start with an uppercase ASCII letter.
    pub fn is_var_name(&self) -> bool {
        self.0.chars().next().is_some_and(|c| c.is_ascii_uppercase())
    }
}

impl From<&str> for Sym {
    fn from(s: &str) -> Self {
        Sym::new(s)
    }
}

impl From<String> for Sym {
    fn from(s: String) -> Self {
        Sym(Arc::from(s))
    }
}

impl fmt::Display for Sym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Sym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for Sym {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl Ord for Sym {
    fn cmp(&self, other: &Self) -> Ordering {
        natural_cmp(&self.0, &other.0)
    }
}

impl PartialOrd for Sym {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn natural_cmp(a: &str, b: &str) -> Ordering {
    let (mut a, mut b) = (a.as_bytes(), b.as_bytes());
    loop {
        match (a.first(), b.first()) {
            (None, None) => return Ordering::Equal,
            (None, Some(_)) => return Ordering::Less,
            (Some(_), None) => return Ordering::Greater,
            (Some(x), Some(y)) if x.is_ascii_digit() && y.is_ascii_digit() => {
                let la = a.iter().take_while(|c| c.is_ascii_digit()).count();
                let lb = b.iter().take_while(|c| c.is_ascii_digit()).count();
                let (da, db) = (&a[..la], &b[..lb]);
                let ta: &[u8] = {
                    let z = da.iter().take_while(|&&c| c == b'0').count();
                    &da[z.min(la.saturating_sub(1))..]
                };
                let tb: &[u8] = {
                    let z = db.iter().take_while(|&&c| c == b'0').count();
                    &db[z.min(lb.saturating_sub(1))..]
                };
                let ord = ta.len().cmp(&tb.len()).then_with(|| ta.cmp(tb)).then(la.cmp(&lb));
                if ord != Ordering::Equal {
                    return ord;
                }
                a = &a[la..];
                b = &b[lb..];
            }
            (Some(x), Some(y)) => {
                if x != y {
                    return x.cmp(y);
                }
                a = &a[1..];
                b = &b[1..];
            }
        }
    }
}

/// A term. Function applications are shallow: their arguments are variables
/// or constants.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(Sym),
    Const(Sym),
    App(Sym, Vec<Term>),
}

impl Term {
    pub fn var(name: &str) -> Self {
        Term::Var(Sym::new(name))
    }

    pub fn cst(name: &str) -> Self {
        Term::Const(Sym::new(name))
    }

    pub fn app(func: &str, args: Vec<Term>) -> Self {
        Term::App(Sym::new(func), args)
    }

    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(_))
    }

    pub fn as_var(&self) -> Option<&Sym> {
        match self {
            Term::Var(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_functional(&self) -> bool {
        matches!(self, Term::App(..))
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Term::Var(_) => false,
            Term::Const(_) => true,
            Term::App(_, args) => args.iter().all(Term::is_ground),
        }
    }

    /// No function application nested inside another.
    pub fn is_shallow(&self) -> bool {
        match self {
            Term::App(_, args) => args.iter().all(|a| !a.is_functional()),
            _ => true,
        }
    }

    pub fn collect_vars(&self, out: &mut Vec<Sym>) {
        match self {
            Term::Var(v) => {
                if !out.contains(v) {
                    out.push(v.clone());
                }
            }
            Term::Const(_) => {}
            Term::App(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
        }
    }

    pub fn contains_var(&self, v: &Sym) -> bool {
        match self {
            Term::Var(w) => w == v,
            Term::Const(_) => false,
            Term::App(_, args) => args.iter().any(|a| a.contains_var(v)),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(s) | Term::Const(s) => write!(f, "{s}"),
            Term::App(func, args) => {
                write!(f, "{func}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub pred: Sym,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(pred: impl Into<Sym>, args: Vec<Term>) -> Self {
        Atom { pred: pred.into(), args }
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }

    /// Variables in order of first occurrence.
    pub fn vars(&self) -> Vec<Sym> {
        let mut out = Vec::new();
        self.args.iter().for_each(|t| t.collect_vars(&mut out));
        out
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(Term::is_ground)
    }

    pub fn is_functional(&self) -> bool {
        self.args.iter().any(Term::is_functional)
    }

    pub fn is_fact(&self) -> bool {
        self.args.iter().all(|t| matches!(t, Term::Const(_)))
    }

    pub fn is_simple(&self) -> bool {
        self.args.iter().all(Term::is_shallow)
    }

    pub fn contains_var(&self, v: &Sym) -> bool {
        self.args.iter().any(|t| t.contains_var(v))
    }

    /// Constants occurring directly as arguments (facts only hold constants).
    pub fn consts(&self) -> impl Iterator<Item = &Sym> {
        self.args.iter().filter_map(|t| match t {
            Term::Const(c) => Some(c),
            _ => None,
        })
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.pred)?;
        if self.args.is_empty() {
            return Ok(());
        }
        f.write_str("(")?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

impl fmt::Debug for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

pub(crate) fn sorted_set(mut atoms: Vec<Atom>) -> Vec<Atom> {
    atoms.sort();
    atoms.dedup();
    atoms
}

pub(crate) fn vars_of<'a>(atoms: impl IntoIterator<Item = &'a Atom>) -> Vec<Sym> {
    let mut out = Vec::new();
    for a in atoms {
        a.args.iter().for_each(|t| t.collect_vars(&mut out));
    }
    out
}

/// One disjunct of a rule head: `exists Y1,... . A1, A2, ...`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HeadConjunct {
    exists: Vec<Sym>,
    atoms: Vec<Atom>,
}

impl HeadConjunct {
    pub fn new(exists: Vec<Sym>, atoms: Vec<Atom>) -> Self {
        let atoms = sorted_set(atoms);
        let used = vars_of(&atoms);
        let mut seen = BTreeSet::new();
        let exists = exists
            .into_iter()
            .filter(|y| used.contains(y) && seen.insert(y.clone()))
            .collect();
        HeadConjunct { exists, atoms }
    }

    pub fn full(atoms: Vec<Atom>) -> Self {
        HeadConjunct::new(Vec::new(), atoms)
    }

    pub fn exists(&self) -> &[Sym] {
        &self.exists
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn is_existential(&self, v: &Sym) -> bool {
        self.exists.contains(v)
    }

    pub fn vars(&self) -> Vec<Sym> {
        vars_of(&self.atoms)
    }
}

/// `body -> conj_1 | conj_2 | ...` with implicit universal closure.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Rule {
    body: Vec<Atom>,
    head: Vec<HeadConjunct>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("head conjunct index {index} out of range (rule has {len})")]
    ConjunctOutOfRange { index: usize, len: usize },
    #[error("predicate {pred} used with arity {found}, expected {expected}")]
    ArityMismatch { pred: Sym, expected: usize, found: usize },
}

impl Rule {
    pub fn new(body: Vec<Atom>, head: Vec<HeadConjunct>) -> Self {
        let body = sorted_set(body);
        let mut conjuncts: Vec<HeadConjunct> = Vec::with_capacity(head.len());
        for c in head {
            if !conjuncts.contains(&c) {
                conjuncts.push(c);
            }
        }
        Rule { body, head: conjuncts }
    }

    /// A rule with a single head conjunct.
    pub fn tgd(body: Vec<Atom>, exists: Vec<Sym>, head: Vec<Atom>) -> Self {
        Rule::new(body, vec![HeadConjunct::new(exists, head)])
    }

    pub fn body(&self) -> &[Atom] {
        &self.body
    }

    pub fn head(&self) -> &[HeadConjunct] {
        &self.head
    }

    pub fn is_tgd(&self) -> bool {
        self.head.len() == 1
    }

    pub fn is_disjunctive(&self) -> bool {
        self.head.len() > 1
    }

    pub fn body_vars(&self) -> Vec<Sym> {
        vars_of(&self.body)
    }

    /// Every variable of the rule, body variables first.
    pub fn vars(&self) -> Vec<Sym> {
        let mut out = self.body_vars();
        for c in &self.head {
            for a in &c.atoms {
                a.args.iter().for_each(|t| t.collect_vars(&mut out));
            }
        }
        out
    }

    pub fn existentials(&self) -> Vec<Sym> {
        let mut out: Vec<Sym> = Vec::new();
        for c in &self.head {
            for y in &c.exists {
                if !out.contains(y) {
                    out.push(y.clone());
                }
            }
        }
        out
    }

    pub fn atoms(&self) -> impl Iterator<Item = &Atom> {
        self.body.iter().chain(self.head.iter().flat_map(|c| c.atoms.iter()))
    }

    pub fn has_functions(&self) -> bool {
        self.atoms().any(Atom::is_functional)
    }

    pub fn has_functional_body(&self) -> bool {
        self.body.iter().any(Atom::is_functional)
    }

    pub fn has_functional_head(&self) -> bool {
        self.head.iter().flat_map(|c| c.atoms.iter()).any(Atom::is_functional)
    }

    pub fn has_constants(&self) -> bool {
        fn has(t: &Term) -> bool {
            match t {
                Term::Var(_) => false,
                Term::Const(_) => true,
                Term::App(_, a) => a.iter().any(has),
            }
        }
        self.atoms().any(|a| a.args.iter().any(has))
    }

    /// Every head conjunct holds exactly one atom.
    pub fn is_single_headed(&self) -> bool {
        self.head.iter().all(|c| c.atoms.len() == 1)
    }

    /// All head atoms, flattened (useful for single-headed rules).
    pub fn head_atoms(&self) -> impl Iterator<Item = &Atom> {
        self.head.iter().flat_map(|c| c.atoms.iter())
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::textio::print_rule(self))
    }
}

impl fmt::Debug for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Returns whether some body atom holds every body variable, together with
/// all such atoms. An empty body is vacuously guarded by nothing.
pub fn is_guarded(rule: &Rule) -> (bool, Vec<Atom>) {
    let guards = guards(rule);
    (rule.body.is_empty() || !guards.is_empty(), guards)
}

/// Function-free body atoms containing every body variable.
pub fn guards(rule: &Rule) -> Vec<Atom> {
    let bv = rule.body_vars();
    rule.body
        .iter()
        .filter(|a| !a.is_functional() && bv.iter().all(|v| a.contains_var(v)))
        .cloned()
        .collect()
}

/// No existential binders and no function terms anywhere.
pub fn is_full(rule: &Rule) -> bool {
    rule.head.iter().all(|c| c.exists.is_empty()) && !rule.has_functions()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Widths {
    pub bwidth: usize,
    pub hwidth: usize,
    pub width: usize,
}

pub fn widths(rule: &Rule) -> Widths {
    let bwidth = rule.body_vars().len();
    let hwidth = rule.head.iter().map(|c| c.vars().len()).max().unwrap_or(0);
    Widths { bwidth, hwidth, width: bwidth.max(hwidth) }
}

/// Maximum widths over a rule set.
pub fn set_widths<'a>(rules: impl IntoIterator<Item = &'a Rule>) -> Widths {
    rules.into_iter().map(widths).fold(Widths { bwidth: 0, hwidth: 0, width: 0 }, |acc, w| Widths {
        bwidth: acc.bwidth.max(w.bwidth),
        hwidth: acc.hwidth.max(w.hwidth),
        width: acc.width.max(w.width),
    })
}

/// Body variables occurring in the given head conjunct.
pub fn exported_vars(rule: &Rule, conjunct: usize) -> Result<BTreeSet<Sym>, ModelError> {
    let c = rule
        .head
        .get(conjunct)
        .ok_or(ModelError::ConjunctOutOfRange { index: conjunct, len: rule.head.len() })?;
    let hv = c.vars();
    Ok(rule.body_vars().into_iter().filter(|v| hv.contains(v)).collect())
}

/// Guarded simple rule: function-free guard, shallow terms, no existentials,
/// no constants, and every function term mentions every rule variable.
pub fn is_guarded_simple(rule: &Rule) -> bool {
    if rule.head.iter().any(|c| !c.exists.is_empty()) || rule.has_constants() {
        return false;
    }
    if !rule.atoms().all(Atom::is_simple) || guards(rule).is_empty() {
        return false;
    }
    let vars = rule.vars();
    rule.atoms().flat_map(|a| a.args.iter()).all(|t| match t {
        Term::App(_, args) => vars.iter().all(|v| args.iter().any(|a| a.contains_var(v))),
        _ => true,
    })
}

/// Records the arity of every predicate and rejects inconsistent uses.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Schema {
    arities: BTreeMap<Sym, usize>,
}

impl Schema {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn check(&mut self, atom: &Atom) -> Result<(), ModelError> {
        match self.arities.get(&atom.pred) {
            Some(&n) if n != atom.arity() => Err(ModelError::ArityMismatch {
                pred: atom.pred.clone(),
                expected: n,
                found: atom.arity(),
            }),
            Some(_) => Ok(()),
            None => {
                self.arities.insert(atom.pred.clone(), atom.arity());
                Ok(())
            }
        }
    }

    pub fn arity(&self, pred: &Sym) -> Option<usize> {
        self.arities.get(pred).copied()
    }

    pub fn predicates(&self) -> impl Iterator<Item = (&Sym, usize)> {
        self.arities.iter().map(|(p, n)| (p, *n))
    }

    pub fn from_rules<'a>(rules: impl IntoIterator<Item = &'a Rule>) -> Result<Self, ModelError> {
        let mut s = Schema::new();
        for r in rules {
            for a in r.atoms() {
                s.check(a)?;
            }
        }
        Ok(s)
    }
}

/// A set of ground facts.
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct Instance {
    facts: BTreeSet<Atom>,
}

impl Instance {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, fact: Atom) -> bool {
        debug_assert!(fact.is_ground(), "non-ground fact {fact}");
        self.facts.insert(fact)
    }

    pub fn contains(&self, fact: &Atom) -> bool {
        self.facts.contains(fact)
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Atom> {
        self.facts.iter()
    }

    pub fn facts(&self) -> &BTreeSet<Atom> {
        &self.facts
    }

    pub fn consts(&self) -> BTreeSet<Sym> {
        self.facts.iter().flat_map(|f| f.consts().cloned()).collect()
    }

    pub fn is_subset(&self, other: &Instance) -> bool {
        self.facts.is_subset(&other.facts)
    }
}

impl FromIterator<Atom> for Instance {
    fn from_iter<T: IntoIterator<Item = Atom>>(iter: T) -> Self {
        Instance { facts: iter.into_iter().collect() }
    }
}

impl Extend<Atom> for Instance {
    fn extend<T: IntoIterator<Item = Atom>>(&mut self, iter: T) {
        self.facts.extend(iter)
    }
}

impl fmt::Debug for Instance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.facts.iter()).finish()
    }
}

/// A union of conjunctive queries. Variables in query atoms are read as
/// existentially quantified; ground queries are the quantifier-free case.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Query {
    pub disjuncts: Vec<Vec<Atom>>,
}

impl Query {
    pub fn new(disjuncts: Vec<Vec<Atom>>) -> Self {
        Query { disjuncts: disjuncts.into_iter().map(sorted_set).collect() }
    }

    pub fn atom(a: Atom) -> Self {
        Query::new(vec![vec![a]])
    }

    pub fn is_ground(&self) -> bool {
        self.disjuncts.iter().flatten().all(Atom::is_ground)
    }

    pub fn atoms(&self) -> impl Iterator<Item = &Atom> {
        self.disjuncts.iter().flatten()
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::textio::print_query(self))
    }
}
