//! Answering ground queries over full programs: a Datalog fixpoint for full
//! TGDs and grounding plus propositional unsatisfiability for full
//! disjunctive programs.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use thiserror::Error;

use crate::model::{is_full, Atom, Instance, Query, Rule, Sym, Term};
use crate::normal::shnf;
use crate::unify::Subst;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("rule is not full: {0}")]
    NotFull(Rule),
    #[error("rule is disjunctive; use disdatalog_entails: {0}")]
    Disjunctive(Rule),
    #[error("query is not ground: {0}")]
    NotGround(Query),
}

/// Facts grouped by predicate and by (predicate, position, term).
#[derive(Debug, Clone, Default)]
pub(crate) struct FactIndex {
    by_pred: HashMap<Sym, Vec<Atom>>,
    by_arg: HashMap<(Sym, usize, Term), Vec<Atom>>,
    all: HashSet<Atom>,
}

impl FactIndex {
    pub fn insert(&mut self, a: Atom) -> bool {
        if self.all.contains(&a) {
            return false;
        }
        self.all.insert(a.clone());
        for (i, t) in a.args.iter().enumerate() {
            self.by_arg.entry((a.pred.clone(), i, t.clone())).or_default().push(a.clone());
        }
        self.by_pred.entry(a.pred.clone()).or_default().push(a);
        true
    }

    pub fn contains(&self, a: &Atom) -> bool {
        self.all.contains(a)
    }

    pub fn with_pred(&self, p: &Sym) -> &[Atom] {
        self.by_pred.get(p).map(Vec::as_slice).unwrap_or(&[])
    }

    /// The smallest fact list that can contain a match of `pat` under `b`.
    fn candidates(&self, pat: &Atom, b: &Binding) -> &[Atom] {
        let mut best = self.with_pred(&pat.pred);
        for (i, t) in pat.args.iter().enumerate() {
            let key = match t {
                Term::Var(v) => match b.get(v) {
                    Some(u) => u.clone(),
                    None => continue,
                },
                _ => t.clone(),
            };
            let list = self.by_arg.get(&(pat.pred.clone(), i, key)).map(Vec::as_slice).unwrap_or(&[]);
            if list.len() < best.len() {
                best = list;
            }
            if best.is_empty() {
                break;
            }
        }
        best
    }
}

pub(crate) type Binding = BTreeMap<Sym, Term>;

fn match_atom(pattern: &Atom, fact: &Atom, b: &mut Binding, trail: &mut Vec<Sym>) -> bool {
    if pattern.arity() != fact.arity() {
        return false;
    }
    for (p, t) in pattern.args.iter().zip(&fact.args) {
        match p {
            Term::Var(v) => match b.get(v) {
                Some(u) if u != t => return false,
                Some(_) => {}
                None => {
                    b.insert(v.clone(), t.clone());
                    trail.push(v.clone());
                }
            },
            _ if p != t => return false,
            _ => {}
        }
    }
    true
}

/// Orders body atoms so that each atom shares as many variables as possible
/// with the atoms before it and with the initial binding.
fn join_order(body: &[Atom], init: &Binding) -> Vec<usize> {
    let mut left: Vec<usize> = (0..body.len()).collect();
    let mut bound: BTreeSet<Sym> = init.keys().cloned().collect();
    let mut order = Vec::new();
    while !left.is_empty() {
        let (k, _) = left
            .iter()
            .enumerate()
            .max_by_key(|(_, &i)| {
                let vs = body[i].vars();
                (vs.iter().filter(|v| bound.contains(*v)).count(), std::cmp::Reverse(vs.len()))
            })
            .expect("nonempty");
        let i = left.remove(k);
        bound.extend(body[i].vars());
        order.push(i);
    }
    order
}

/// Calls `f` once per homomorphism from `body` into `index` extending
/// `init`. Returns the number of candidate facts examined.
pub(crate) fn for_each_match(body: &[Atom], index: &FactIndex, init: Binding, f: &mut dyn FnMut(&Binding)) -> u64 {
    fn go(
        body: &[Atom],
        order: &[usize],
        depth: usize,
        index: &FactIndex,
        b: &mut Binding,
        work: &mut u64,
        f: &mut dyn FnMut(&Binding),
    ) {
        if depth == order.len() {
            f(b);
            return;
        }
        let pat = &body[order[depth]];
        for fact in index.candidates(pat, b) {
            *work += 1;
            let mut trail = Vec::new();
            if match_atom(pat, fact, b, &mut trail) {
                go(body, order, depth + 1, index, b, work, f);
            }
            for v in trail {
                b.remove(&v);
            }
        }
    }
    let order = join_order(body, &init);
    let mut b = init;
    let mut work = 0;
    go(body, &order, 0, index, &mut b, &mut work, f);
    work
}

/// Whether some homomorphism from `body` into `index` extends `init`.
pub(crate) fn exists_match(body: &[Atom], index: &FactIndex, init: &Binding) -> bool {
    fn go(body: &[Atom], order: &[usize], depth: usize, index: &FactIndex, b: &mut Binding) -> bool {
        if depth == order.len() {
            return true;
        }
        let pat = &body[order[depth]];
        for fact in index.candidates(pat, b) {
            let mut trail = Vec::new();
            let ok = match_atom(pat, fact, b, &mut trail) && go(body, order, depth + 1, index, b);
            for v in trail {
                b.remove(&v);
            }
            if ok {
                return true;
            }
        }
        false
    }
    let order = join_order(body, init);
    go(body, &order, 0, index, &mut init.clone())
}

pub(crate) fn match_fact(pattern: &Atom, fact: &Atom, b: &mut Binding) -> bool {
    pattern.pred == fact.pred && match_atom(pattern, fact, b, &mut Vec::new())
}

pub(crate) fn ground_atom(a: &Atom, b: &Binding) -> Atom {
    Subst::from_pairs(b.iter().map(|(k, v)| (k.clone(), v.clone()))).apply_atom(a)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Evaluation {
    pub instance: Instance,
    /// Rule instantiations that added at least one fact.
    pub firings: u64,
    /// Candidate facts examined while matching rule bodies.
    pub work: u64,
    pub rounds: u64,
}

fn check_full(rules: &[Rule]) -> Result<(), EvalError> {
    match rules.iter().find(|r| !is_full(r)) {
        Some(r) => Err(EvalError::NotFull(r.clone())),
        None => Ok(()),
    }
}

/// Least fixpoint of the full, non-disjunctive `rules` over `db`.
pub fn datalog_eval(db: &Instance, rules: &[Rule]) -> Result<Evaluation, EvalError> {
    check_full(rules)?;
    if let Some(r) = rules.iter().find(|r| r.is_disjunctive() || r.head().is_empty()) {
        return Err(EvalError::Disjunctive(r.clone()));
    }
    let mut index = FactIndex::default();
    db.iter().for_each(|a| {
        index.insert(a.clone());
    });
    let mut ev = Evaluation::default();
    loop {
        ev.rounds += 1;
        let mut new: Vec<Atom> = Vec::new();
        for r in rules {
            let head: Vec<&Atom> = r.head_atoms().collect();
            ev.work += for_each_match(r.body(), &index, Binding::new(), &mut |b| {
                let mut fired = false;
                for h in &head {
                    let g = ground_atom(h, b);
                    if !index.contains(&g) && !new.contains(&g) {
                        new.push(g);
                        fired = true;
                    }
                }
                if fired {
                    ev.firings += 1;
                }
            });
        }
        if new.is_empty() {
            break;
        }
        for a in new {
            index.insert(a);
        }
    }
    ev.instance = index.all.into_iter().collect();
    Ok(ev)
}

/// True when some disjunct of the ground query holds in `instance`.
pub fn answer_ucq(instance: &Instance, q: &Query) -> Result<bool, EvalError> {
    if !q.is_ground() {
        return Err(EvalError::NotGround(q.clone()));
    }
    Ok(q.disjuncts.iter().any(|d| d.iter().all(|a| instance.contains(a))))
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroundClause {
    pub negatives: BTreeSet<Atom>,
    pub positives: BTreeSet<Atom>,
}

#[derive(Debug, Clone, Default)]
pub struct GroundProgram {
    pub atoms: Vec<Atom>,
    pub clauses: Vec<GroundClause>,
}

impl GroundProgram {
    fn literal_clauses(&self) -> Vec<Vec<i32>> {
        let ids: HashMap<&Atom, i32> = self.atoms.iter().enumerate().map(|(i, a)| (a, i as i32 + 1)).collect();
        self.clauses
            .iter()
            .map(|c| {
                let mut lits: Vec<i32> = c.negatives.iter().map(|a| -ids[a]).collect();
                lits.extend(c.positives.iter().map(|a| ids[a]));
                lits.sort_unstable();
                lits.dedup();
                lits
            })
            .collect()
    }
}

/// Builds the ground clauses of `db`, `rules` and the negated `q`. Rule
/// instantiations are restricted to bodies inside the fixpoint obtained by
/// reading every disjunction as a conjunction; other instantiations have a
/// body atom that can be false in every model and do not affect
/// satisfiability.
pub fn ground(db: &Instance, rules: &[Rule], q: &Query) -> Result<GroundProgram, EvalError> {
    check_full(rules)?;
    if !q.is_ground() {
        return Err(EvalError::NotGround(q.clone()));
    }
    let rules: Vec<Rule> = if rules.iter().all(|r| r.head().iter().all(|c| c.atoms().len() <= 1)) {
        rules.to_vec()
    } else {
        shnf(rules).rules
    };
    let mut index = FactIndex::default();
    db.iter().for_each(|a| {
        index.insert(a.clone());
    });
    loop {
        let mut new = Vec::new();
        for r in &rules {
            for_each_match(r.body(), &index, Binding::new(), &mut |b| {
                for h in r.head_atoms() {
                    let g = ground_atom(h, b);
                    if !index.contains(&g) {
                        new.push(g);
                    }
                }
            });
        }
        if new.is_empty() {
            break;
        }
        for a in new {
            index.insert(a);
        }
    }
    let mut clauses: BTreeSet<GroundClause> = BTreeSet::new();
    for f in db.iter() {
        clauses.insert(GroundClause { negatives: BTreeSet::new(), positives: [f.clone()].into() });
    }
    for d in &q.disjuncts {
        clauses.insert(GroundClause { negatives: d.iter().cloned().collect(), positives: BTreeSet::new() });
    }
    for r in &rules {
        for_each_match(r.body(), &index, Binding::new(), &mut |b| {
            clauses.insert(GroundClause {
                negatives: r.body().iter().map(|a| ground_atom(a, b)).collect(),
                positives: r.head_atoms().map(|a| ground_atom(a, b)).collect(),
            });
        });
    }
    let mut atoms: BTreeSet<Atom> = BTreeSet::new();
    for c in &clauses {
        atoms.extend(c.negatives.iter().cloned());
        atoms.extend(c.positives.iter().cloned());
    }
    Ok(GroundProgram { atoms: atoms.into_iter().collect(), clauses: clauses.into_iter().collect() })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Solver {
    #[default]
    Dpll,
    Resolution,
}

/// Whether `db` and the full disjunctive `rules` entail the ground `q`.
pub fn disdatalog_entails(db: &Instance, rules: &[Rule], q: &Query) -> Result<bool, EvalError> {
    disdatalog_entails_with(db, rules, q, Solver::Dpll)
}

pub fn disdatalog_entails_with(db: &Instance, rules: &[Rule], q: &Query, solver: Solver) -> Result<bool, EvalError> {
    let g = ground(db, rules, q)?;
    let clauses = g.literal_clauses();
    Ok(match solver {
        Solver::Dpll => !dpll_sat(&clauses, g.atoms.len()),
        Solver::Resolution => resolution_unsat(&clauses),
    })
}

fn dpll_sat(clauses: &[Vec<i32>], nvars: usize) -> bool {
    fn value(assign: &[i8], lit: i32) -> i8 {
        let v = assign[lit.unsigned_abs() as usize];
        if lit > 0 { v } else { -v }
    }
    fn propagate(clauses: &[Vec<i32>], assign: &mut [i8], trail: &mut Vec<usize>) -> bool {
        loop {
            let mut changed = false;
            for c in clauses {
                let mut unassigned = None;
                let mut count = 0;
                let mut sat = false;
                for &l in c {
                    match value(assign, l) {
                        1 => {
                            sat = true;
                            break;
                        }
                        0 => {
                            count += 1;
                            unassigned = Some(l);
                        }
                        _ => {}
                    }
                }
                if sat {
                    continue;
                }
                match (count, unassigned) {
                    (0, _) => return false,
                    (1, Some(l)) => {
                        let v = l.unsigned_abs() as usize;
                        assign[v] = if l > 0 { 1 } else { -1 };
                        trail.push(v);
                        changed = true;
                    }
                    _ => {}
                }
            }
            if !changed {
                return true;
            }
        }
    }
    fn solve(clauses: &[Vec<i32>], assign: &mut Vec<i8>) -> bool {
        let mut trail = Vec::new();
        if !propagate(clauses, assign, &mut trail) {
            trail.iter().for_each(|&v| assign[v] = 0);
            return false;
        }
        let pick = clauses
            .iter()
            .filter(|c| !c.iter().any(|&l| value(assign, l) == 1))
            .flat_map(|c| c.iter())
            .find(|&&l| value(assign, l) == 0)
            .copied();
        let Some(l) = pick else { return true };
        let v = l.unsigned_abs() as usize;
        for val in [if l > 0 { 1 } else { -1 }, if l > 0 { -1 } else { 1 }] {
            assign[v] = val;
            if solve(clauses, assign) {
                return true;
            }
            assign[v] = 0;
        }
        trail.iter().for_each(|&v| assign[v] = 0);
        false
    }
    let mut assign = vec![0i8; nvars + 1];
    solve(clauses, &mut assign)
}

/// Propositional resolution closure with tautology deletion and forward
/// subsumption. True when the empty clause is derived.
fn resolution_unsat(clauses: &[Vec<i32>]) -> bool {
    fn subsumes(a: &[i32], b: &[i32]) -> bool {
        a.iter().all(|l| b.binary_search(l).is_ok())
    }
    let mut kept: Vec<Vec<i32>> = Vec::new();
    let mut queue: Vec<Vec<i32>> = clauses.to_vec();
    queue.sort_by_key(Vec::len);
    let mut queue: std::collections::VecDeque<Vec<i32>> = queue.into();
    while let Some(c) = queue.pop_front() {
        if c.is_empty() {
            return true;
        }
        if c.iter().any(|l| c.binary_search(&-l).is_ok()) || kept.iter().any(|k| subsumes(k, &c)) {
            continue;
        }
        kept.retain(|k| !subsumes(&c, k));
        for k in &kept {
            for &l in &c {
                if k.binary_search(&-l).is_ok() {
                    let mut r: Vec<i32> = c.iter().filter(|&&x| x != l).chain(k.iter().filter(|&&x| x != -l)).copied().collect();
                    r.sort_unstable();
                    r.dedup();
                    queue.push_back(r);
                }
            }
        }
        kept.push(c);
    }
    false
}
