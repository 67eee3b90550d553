//! Normal forms: variable normal form, head normal form, single-head normal
//! form, Skolemization and immediate full consequences.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::model::{exported_vars, is_full, Atom, HeadConjunct, Rule, Sym, Term};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NormalError {
    #[error("head normal form is only defined for single-conjunct rules: {0}")]
    Disjunctive(Rule),
    #[error("rule has a functional body atom: {0}")]
    FunctionalBody(Rule),
}

/// Upper bound on explored tie-breaking branches per rule.
const BRANCH_CAP: usize = 4096;

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Key {
    Num(usize),
    Fresh(usize),
    Const(Sym),
    App(Sym, Vec<Key>),
}

fn term_key(t: &Term, fixed: &BTreeMap<Sym, usize>, local: &mut Vec<Sym>) -> Key {
    match t {
        Term::Var(v) => match fixed.get(v) {
            Some(&n) => Key::Num(n),
            None => {
                let i = local.iter().position(|w| w == v).unwrap_or_else(|| {
                    local.push(v.clone());
                    local.len() - 1
                });
                Key::Fresh(i)
            }
        },
        Term::Const(c) => Key::Const(c.clone()),
        Term::App(f, args) => Key::App(f.clone(), args.iter().map(|a| term_key(a, fixed, local)).collect()),
    }
}

/// Name-independent key of an atom, plus its not-yet-numbered variables in
/// order of first occurrence.
type Keyed = (usize, (Sym, Vec<Key>), Vec<Sym>);

fn atom_key(a: &Atom, fixed: &BTreeMap<Sym, usize>) -> ((Sym, Vec<Key>), Vec<Sym>) {
    let mut local = Vec::new();
    let args = a.args.iter().map(|t| term_key(t, fixed, &mut local)).collect();
    ((a.pred.clone(), args), local)
}

/// Enumerates the orders in which a canonical scan can number the variables
/// of `atoms` that are not in `fixed`. Atoms are consumed smallest key first;
/// ties branch.
fn scan_orders(atoms: &[Atom], fixed: &BTreeMap<Sym, usize>) -> Vec<Vec<Sym>> {
    let mut out = Vec::new();
    let remaining: Vec<usize> = (0..atoms.len()).collect();
    scan(atoms, fixed.clone(), remaining, Vec::new(), &mut out);
    out
}

fn scan(
    atoms: &[Atom],
    fixed: BTreeMap<Sym, usize>,
    remaining: Vec<usize>,
    order: Vec<Sym>,
    out: &mut Vec<Vec<Sym>>,
) {
    if remaining.is_empty() {
        out.push(order);
        return;
    }
    let keyed: Vec<Keyed> = remaining
        .iter()
        .map(|&i| {
            let (k, fresh) = atom_key(&atoms[i], &fixed);
            (i, k, fresh)
        })
        .collect();
    let min = keyed.iter().map(|e| &e.1).min().unwrap().clone();
    let tied: Vec<&Keyed> = keyed.iter().filter(|e| e.1 == min).collect();
    // Atoms whose key mentions no fresh variable cannot affect numbering.
    let limit = if tied[0].2.is_empty() || out.len() >= BRANCH_CAP { 1 } else { tied.len() };
    for (i, _, fresh) in tied.into_iter().take(limit) {
        let mut fixed = fixed.clone();
        let mut order = order.clone();
        for v in fresh {
            let n = fixed.len() + 1;
            fixed.insert(v.clone(), n);
            order.push(v.clone());
        }
        let rest = remaining.iter().copied().filter(|j| j != i).collect();
        scan(atoms, fixed, rest, order, out);
    }
}

fn canonical_conjunct(
    c: &HeadConjunct,
    fixed: &BTreeMap<Sym, usize>,
    body_ren: &BTreeMap<Sym, Sym>,
) -> HeadConjunct {
    let mut best: Option<HeadConjunct> = None;
    for order in scan_orders(c.atoms(), fixed) {
        let mut ren = body_ren.clone();
        let mut exists = Vec::new();
        for (j, v) in order.iter().enumerate() {
            let y = Sym::from(format!("Y{}", j + 1));
            ren.insert(v.clone(), y.clone());
            exists.push(y);
        }
        let atoms = c.atoms().iter().map(|a| rename_atom(a, &ren)).collect();
        let cand = HeadConjunct::new(exists, atoms);
        if best.as_ref().is_none_or(|b| cand < *b) {
            best = Some(cand);
        }
    }
    best.unwrap_or_else(|| c.clone())
}

fn rename_term(t: &Term, ren: &BTreeMap<Sym, Sym>) -> Term {
    match t {
        Term::Var(v) => Term::Var(ren.get(v).cloned().unwrap_or_else(|| v.clone())),
        Term::Const(_) => t.clone(),
        Term::App(f, args) => Term::App(f.clone(), args.iter().map(|a| rename_term(a, ren)).collect()),
    }
}

fn rename_atom(a: &Atom, ren: &BTreeMap<Sym, Sym>) -> Atom {
    Atom { pred: a.pred.clone(), args: a.args.iter().map(|t| rename_term(t, ren)).collect() }
}

/// Variable normal form: body variables become `X1..Xn` and the variables
/// local to each head conjunct become `Y1..Ym`, numbered by first occurrence
/// in a canonical scan. Head conjuncts are sorted. Variants of one rule have
/// the same normal form.
pub fn vnf(rule: &Rule) -> Rule {
    let mut best: Option<Rule> = None;
    for order in scan_orders(rule.body(), &BTreeMap::new()) {
        let ren: BTreeMap<Sym, Sym> =
            order.iter().enumerate().map(|(i, v)| (v.clone(), Sym::from(format!("X{}", i + 1)))).collect();
        let fixed: BTreeMap<Sym, usize> = order.iter().enumerate().map(|(i, v)| (v.clone(), i + 1)).collect();
        let body: Vec<Atom> = rule.body().iter().map(|a| rename_atom(a, &ren)).collect();
        let mut head: Vec<HeadConjunct> =
            rule.head().iter().map(|c| canonical_conjunct(c, &fixed, &ren)).collect();
        head.sort_by(|a, b| a.atoms().cmp(b.atoms()).then_with(|| a.exists().cmp(b.exists())));
        let cand = Rule::new(body, head);
        if best.as_ref().is_none_or(|b| cand < *b) {
            best = Some(cand);
        }
    }
    best.unwrap_or_else(|| rule.clone())
}

pub fn is_vnf(rule: &Rule) -> bool {
    vnf(rule) == *rule
}

/// Splits a non-full TGD into its existential part and its full part.
pub fn hnf_rule(rule: &Rule) -> Result<Vec<Rule>, NormalError> {
    if rule.head().len() > 1 {
        return Err(NormalError::Disjunctive(rule.clone()));
    }
    let Some(c) = rule.head().first() else {
        return Ok(vec![rule.clone()]);
    };
    if c.exists().is_empty() {
        return Ok(vec![rule.clone()]);
    }
    let (ex, full): (Vec<Atom>, Vec<Atom>) =
        c.atoms().iter().cloned().partition(|a| c.exists().iter().any(|y| a.contains_var(y)));
    if full.is_empty() {
        return Ok(vec![rule.clone()]);
    }
    Ok(vec![
        Rule::tgd(rule.body().to_vec(), c.exists().to_vec(), ex),
        Rule::tgd(rule.body().to_vec(), vec![], full),
    ])
}

pub fn hnf(rules: &[Rule]) -> Result<Vec<Rule>, NormalError> {
    let mut out = Vec::new();
    for r in rules {
        for s in hnf_rule(r)? {
            if !out.contains(&s) {
                out.push(s);
            }
        }
    }
    Ok(out)
}

/// Every head atom holds at least one existential variable of its conjunct.
pub fn is_hnf(rule: &Rule) -> bool {
    rule.head().iter().all(|c| {
        c.exists().is_empty() || c.atoms().iter().all(|a| c.exists().iter().any(|y| a.contains_var(y)))
    })
}

fn all_predicates<'a>(rules: impl IntoIterator<Item = &'a Rule>) -> BTreeSet<Sym> {
    rules.into_iter().flat_map(|r| r.atoms().map(|a| a.pred.clone()).collect::<Vec<_>>()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shnf {
    pub rules: Vec<Rule>,
    pub fresh: Vec<Sym>,
}

/// Single-head normal form. A rule with some multi-atom conjunct gets every
/// conjunct replaced by one fresh atom over its exported and existential
/// variables, plus one projection rule per original head atom.
pub fn shnf(rules: &[Rule]) -> Shnf {
    let taken = all_predicates(rules);
    let mut counter = 0usize;
    let mut fresh = Vec::new();
    let mut out = Vec::new();
    let push = |out: &mut Vec<Rule>, r: Rule| {
        if !out.contains(&r) {
            out.push(r);
        }
    };
    for r in rules {
        if r.is_single_headed() {
            push(&mut out, r.clone());
            continue;
        }
        let mut head = Vec::new();
        let mut projections = Vec::new();
        for (i, c) in r.head().iter().enumerate() {
            let name = loop {
                counter += 1;
                let cand = Sym::from(format!("_shnf{counter}"));
                if !taken.contains(&cand) {
                    break cand;
                }
            };
            fresh.push(name.clone());
            let exported = exported_vars(r, i).expect("conjunct index in range");
            let mut args: Vec<Term> =
                r.body_vars().into_iter().filter(|v| exported.contains(v)).map(Term::Var).collect();
            args.extend(c.exists().iter().cloned().map(Term::Var));
            let fresh_atom = Atom::new(name, args);
            head.push(HeadConjunct::new(c.exists().to_vec(), vec![fresh_atom.clone()]));
            for a in c.atoms() {
                projections.push(Rule::tgd(vec![fresh_atom.clone()], vec![], vec![a.clone()]));
            }
        }
        push(&mut out, Rule::new(r.body().to_vec(), head));
        for p in projections {
            push(&mut out, p);
        }
    }
    Shnf { rules: out, fresh }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkolemEntry {
    pub rule: usize,
    pub conjunct: usize,
    pub var: Sym,
    pub func: Sym,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SkolemTable {
    pub entries: Vec<SkolemEntry>,
}

impl SkolemTable {
    pub fn functions(&self) -> impl Iterator<Item = &Sym> {
        self.entries.iter().map(|e| &e.func)
    }
}

fn function_symbols(t: &Term, out: &mut BTreeSet<Sym>) {
    if let Term::App(f, args) = t {
        out.insert(f.clone());
        args.iter().for_each(|a| function_symbols(a, out));
    }
}

/// Replaces existential `Yj` of a conjunct by `f<n>_<j>(X1,...,Xk)` over all
/// body variables, where `n` counts conjuncts with existentials across the
/// whole input. Rules are brought into variable normal form first.
pub fn skolemize(rules: &[Rule]) -> (Vec<Rule>, SkolemTable) {
    let mut taken = BTreeSet::new();
    for r in rules {
        for a in r.atoms() {
            a.args.iter().for_each(|t| function_symbols(t, &mut taken));
        }
    }
    let mut table = SkolemTable::default();
    let mut counter = 0usize;
    let mut out = Vec::new();
    for (ri, r) in rules.iter().enumerate() {
        let r = vnf(r);
        let xs: Vec<Term> = r.body_vars().into_iter().map(Term::Var).collect();
        let mut head = Vec::new();
        for (ci, c) in r.head().iter().enumerate() {
            if c.exists().is_empty() {
                head.push(c.clone());
                continue;
            }
            let n = loop {
                counter += 1;
                let probe = Sym::from(format!("f{counter}_1"));
                if !taken.contains(&probe) {
                    break counter;
                }
            };
            let mut ren = BTreeMap::new();
            for (j, y) in c.exists().iter().enumerate() {
                let func = Sym::from(format!("f{n}_{}", j + 1));
                table.entries.push(SkolemEntry { rule: ri, conjunct: ci, var: y.clone(), func: func.clone() });
                ren.insert(y.clone(), Term::App(func, xs.clone()));
            }
            let subst = crate::unify::Subst::from_pairs(ren);
            head.push(HeadConjunct::full(subst.apply_atoms(c.atoms())));
        }
        out.push(Rule::new(r.body().to_vec(), head));
    }
    (out, table)
}

/// Inverse of Skolemization: every distinct functional term of a conjunct
/// becomes an existential variable of that conjunct.
pub fn deskolemize(rule: &Rule) -> Result<Rule, NormalError> {
    if rule.has_functional_body() {
        return Err(NormalError::FunctionalBody(rule.clone()));
    }
    let head = rule
        .head()
        .iter()
        .map(|c| {
            let mut terms: Vec<Term> = Vec::new();
            for a in c.atoms() {
                for t in &a.args {
                    if t.is_functional() && !terms.contains(t) {
                        terms.push(t.clone());
                    }
                }
            }
            let names: Vec<Sym> = (1..=terms.len()).map(|j| Sym::from(format!("Y_sk{j}"))).collect();
            let atoms = c
                .atoms()
                .iter()
                .map(|a| Atom {
                    pred: a.pred.clone(),
                    args: a
                        .args
                        .iter()
                        .map(|t| match terms.iter().position(|s| s == t) {
                            Some(k) => Term::Var(names[k].clone()),
                            None => t.clone(),
                        })
                        .collect(),
                })
                .collect();
            HeadConjunct::new(names, atoms)
        })
        .collect();
    Ok(vnf(&Rule::new(rule.body().to_vec(), head)))
}

/// Immediate full consequence: keeps, in each conjunct, the atoms free of
/// existential variables and function terms. `None` when some conjunct
/// would become empty or the body is functional.
pub fn ifc(rule: &Rule) -> Option<Rule> {
    if rule.has_functional_body() {
        return None;
    }
    if is_full(rule) {
        return Some(rule.clone());
    }
    let mut head = Vec::new();
    for c in rule.head() {
        let kept: Vec<Atom> = c
            .atoms()
            .iter()
            .filter(|a| !a.is_functional() && !c.exists().iter().any(|y| a.contains_var(y)))
            .cloned()
            .collect();
        if kept.is_empty() {
            return None;
        }
        head.push(HeadConjunct::full(kept));
    }
    Some(Rule::new(rule.body().to_vec(), head))
}
