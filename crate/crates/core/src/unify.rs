//! Substitutions, renamings and most general unifiers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::model::{Atom, HeadConjunct, Rule, Sym, Term};

/// A finite map from variables to terms, the identity elsewhere.
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct Subst {
    map: BTreeMap<Sym, Term>,
}

impl Subst {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn singleton(v: Sym, t: Term) -> Self {
        let mut s = Subst::new();
        s.bind(v, t);
        s
    }

    /// Builds a simultaneous substitution; identity bindings are dropped.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Sym, Term)>) -> Self {
        let mut s = Subst::new();
        for (v, t) in pairs {
            s.bind(v, t);
        }
        s
    }

    fn bind(&mut self, v: Sym, t: Term) {
        if t == Term::Var(v.clone()) {
            self.map.remove(&v);
        } else {
            self.map.insert(v, t);
        }
    }

    pub fn get(&self, v: &Sym) -> Option<&Term> {
        self.map.get(v)
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn domain(&self) -> impl Iterator<Item = &Sym> {
        self.map.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Sym, &Term)> {
        self.map.iter()
    }

    pub fn var_image(&self, v: &Sym) -> Term {
        self.map.get(v).cloned().unwrap_or_else(|| Term::Var(v.clone()))
    }

    pub fn apply_term(&self, t: &Term) -> Term {
        match t {
            Term::Var(v) => self.var_image(v),
            Term::Const(_) => t.clone(),
            Term::App(f, args) => Term::App(f.clone(), args.iter().map(|a| self.apply_term(a)).collect()),
        }
    }

    pub fn apply_atom(&self, a: &Atom) -> Atom {
        Atom { pred: a.pred.clone(), args: a.args.iter().map(|t| self.apply_term(t)).collect() }
    }

    pub fn apply_atoms<'a>(&self, atoms: impl IntoIterator<Item = &'a Atom>) -> Vec<Atom> {
        atoms.into_iter().map(|a| self.apply_atom(a)).collect()
    }

    /// Applies to the free variables of a rule. Existential binders are
    /// bound, so bindings for them are ignored inside their conjunct.
    pub fn apply_rule(&self, r: &Rule) -> Rule {
        let body = self.apply_atoms(r.body());
        let head = r
            .head()
            .iter()
            .map(|c| {
                let mut inner = self.clone();
                for y in c.exists() {
                    inner.map.remove(y);
                }
                HeadConjunct::new(c.exists().to_vec(), inner.apply_atoms(c.atoms()))
            })
            .collect();
        Rule::new(body, head)
    }

    /// `self` followed by `other`: applying the result equals applying
    /// `self` and then `other`.
    pub fn compose(&self, other: &Subst) -> Subst {
        let mut out = Subst::new();
        for (v, t) in &self.map {
            out.bind(v.clone(), other.apply_term(t));
        }
        for (v, t) in &other.map {
            if !self.map.contains_key(v) {
                out.bind(v.clone(), t.clone());
            }
        }
        out
    }

    /// Injective on its domain with variable images.
    pub fn is_renaming(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.map.values().all(|t| matches!(t, Term::Var(w) if seen.insert(w.clone())))
    }

    /// The inverse of a renaming that permutes variables. Returns `None` when
    /// `self` is not a renaming.
    pub fn inverse(&self) -> Option<Subst> {
        if !self.is_renaming() {
            return None;
        }
        Some(Subst::from_pairs(
            self.map.iter().map(|(v, t)| (t.as_var().unwrap().clone(), Term::Var(v.clone()))),
        ))
    }
}

impl fmt::Debug for Subst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, (v, t)) in self.map.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{t}/{v}")?;
        }
        f.write_str("]")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UnifyError {
    #[error("predicates {0} and {1} differ")]
    PredicateMismatch(Sym, Sym),
    #[error("arities of {0} differ")]
    ArityMismatch(Sym),
    #[error("occurs check failed for {0}")]
    Occurs(Sym),
    #[error("cannot unify {0} with {1}")]
    Clash(Term, Term),
    #[error("nested function term {0}")]
    Nested(Term),
}

fn occurs(v: &Sym, t: &Term) -> bool {
    t.contains_var(v)
}

/// Most general unifier of every pair. Variables in `frozen` behave like
/// constants and are never bound.
pub fn mgu(pairs: &[(Atom, Atom)], frozen: &BTreeSet<Sym>) -> Result<Subst, UnifyError> {
    let mut eqs = Vec::new();
    for (a, b) in pairs {
        if a.pred != b.pred {
            return Err(UnifyError::PredicateMismatch(a.pred.clone(), b.pred.clone()));
        }
        if a.arity() != b.arity() {
            return Err(UnifyError::ArityMismatch(a.pred.clone()));
        }
        for t in a.args.iter().chain(&b.args) {
            if !t.is_shallow() {
                return Err(UnifyError::Nested(t.clone()));
            }
        }
        eqs.extend(a.args.iter().cloned().zip(b.args.iter().cloned()));
    }
    eqs.reverse();
    unify_terms(eqs, Subst::new(), frozen)
}

/// Extends `base` (already idempotent) to a unifier of the given term
/// equations.
pub fn unify_terms(mut stack: Vec<(Term, Term)>, base: Subst, frozen: &BTreeSet<Sym>) -> Result<Subst, UnifyError> {
    let mut sigma = base;
    let bindable = |t: &Term| matches!(t, Term::Var(v) if !frozen.contains(v));
    while let Some((l, r)) = stack.pop() {
        let (l, r) = (sigma.apply_term(&l), sigma.apply_term(&r));
        if l == r {
            continue;
        }
        let (v, t) = if bindable(&r) {
            (r.as_var().unwrap().clone(), l)
        } else if bindable(&l) {
            (l.as_var().unwrap().clone(), r)
        } else {
            match (l, r) {
                (Term::App(f, fa), Term::App(g, ga)) if f == g && fa.len() == ga.len() => {
                    stack.extend(fa.into_iter().zip(ga).rev());
                    continue;
                }
                (l, r) => return Err(UnifyError::Clash(l, r)),
            }
        };
        if occurs(&v, &t) {
            return Err(UnifyError::Occurs(v));
        }
        let single = Subst::singleton(v, t);
        sigma = sigma.compose(&single);
    }
    Ok(sigma)
}

/// Renames every variable of a rule (binders included) through a
/// variable-to-variable map.
pub fn rename_rule(r: &Rule, ren: &Subst) -> Rule {
    let rn = |v: &Sym| match ren.get(v) {
        Some(Term::Var(w)) => w.clone(),
        _ => v.clone(),
    };
    let head = r
        .head()
        .iter()
        .map(|c| HeadConjunct::new(c.exists().iter().map(rn).collect(), ren.apply_atoms(c.atoms())))
        .collect();
    Rule::new(ren.apply_atoms(r.body()), head)
}

/// Returns `r1` unchanged and a variant of `r2` sharing no variable with it,
/// together with the renaming applied to `r2`.
pub fn rename_apart(r1: &Rule, r2: &Rule) -> (Rule, Rule, Subst) {
    let taken: BTreeSet<Sym> = r1.vars().into_iter().chain(r2.vars()).collect();
    let clash: BTreeSet<Sym> = r1.vars().into_iter().collect();
    let mut used = taken.clone();
    let mut ren = Subst::new();
    for v in r2.vars() {
        if clash.contains(&v) {
            let mut cand = Sym::from(format!("{v}_r"));
            let mut k = 1;
            while used.contains(&cand) {
                k += 1;
                cand = Sym::from(format!("{v}_r{k}"));
            }
            used.insert(cand.clone());
            ren.bind(v, Term::Var(cand));
        }
    }
    (r1.clone(), rename_rule(r2, &ren), ren)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textio::{parse_rule, ParseOptions};

    fn v(n: &str) -> Term {
        Term::var(n)
    }

    fn atom(p: &str, args: Vec<Term>) -> Atom {
        Atom::new(p, args)
    }

    #[test]
    fn application_is_simultaneous() {
        let r = atom("R", vec![v("X1"), v("X2")]);
        let s = Subst::from_pairs([(Sym::new("X1"), v("Y")), (Sym::new("X2"), Term::app("f", vec![Term::cst("c")]))]);
        assert_eq!(s.apply_atom(&r).to_string(), "R(Y,f(c))");

        let a = Subst::singleton(Sym::new("X1"), v("X2"));
        let b = Subst::singleton(Sym::new("X2"), v("X1"));
        assert_eq!(b.apply_atom(&a.apply_atom(&r)).to_string(), "R(X1,X1)");
        assert_eq!(a.compose(&b).apply_atom(&r).to_string(), "R(X1,X1)");

        let swap = Subst::from_pairs([(Sym::new("X1"), v("X2")), (Sym::new("X2"), v("X1"))]);
        assert_eq!(swap.apply_atom(&r).to_string(), "R(X2,X1)");
        assert!(swap.is_renaming());
        assert!(swap.compose(&swap.inverse().unwrap()).is_empty());
    }

    #[test]
    fn identity_laws() {
        let s = Subst::from_pairs([(Sym::new("X"), v("Y")), (Sym::new("Z"), Term::cst("c"))]);
        assert_eq!(Subst::new().compose(&s), s);
        assert_eq!(s.compose(&Subst::new()), s);
    }

    #[test]
    fn variable_matching() {
        let h = atom("S", vec![v("X1"), v("X2"), v("X3"), v("X4")]);
        let b = atom("S", vec![v("Z1"), v("Z2"), v("Z3"), v("Z4")]);
        let th = mgu(&[(h.clone(), b.clone())], &BTreeSet::new()).unwrap();
        assert_eq!(th.apply_atom(&h), th.apply_atom(&b));
        assert_eq!(th.apply_atom(&b), h);
    }

    #[test]
    fn frozen_variables_stay_put() {
        let h = atom("H", vec![v("Y2"), v("X1")]);
        let b = atom("H", vec![v("Z3"), v("Z1")]);
        let th = mgu(&[(h, b)], &BTreeSet::from([Sym::new("Y2")])).unwrap();
        assert_eq!(format!("{th:?}"), "[X1/Z1, Y2/Z3]");

        let frozen = BTreeSet::from([Sym::new("Y1"), Sym::new("Y2")]);
        let e = mgu(&[(atom("H", vec![v("Y1")]), atom("H", vec![v("Y2")]))], &frozen);
        assert!(matches!(e, Err(UnifyError::Clash(..))));
    }

    #[test]
    fn failures() {
        let e = mgu(&[(atom("R", vec![v("X1")]), atom("S", vec![v("X1")]))], &BTreeSet::new());
        assert!(matches!(e, Err(UnifyError::PredicateMismatch(..))));

        let p1 = atom("P", vec![v("X"), Term::app("f", vec![v("X")])]);
        let p2 = atom("P", vec![Term::app("f", vec![v("W")]), v("W")]);
        assert!(matches!(mgu(&[(p1, p2)], &BTreeSet::new()), Err(UnifyError::Occurs(_))));

        let nested = atom("P", vec![Term::app("f", vec![Term::app("g", vec![v("X")])])]);
        assert!(matches!(mgu(&[(nested.clone(), nested)], &BTreeSet::new()), Err(UnifyError::Nested(_))));
    }

    #[test]
    fn rename_apart_only_touches_second() {
        let o = ParseOptions::default();
        let r = parse_rule("R(X1) -> S(X1).", &o).unwrap();
        let (a, b, ren) = rename_apart(&r, &r);
        assert_eq!(a, r);
        assert_eq!(b.to_string(), "R(X1_r) -> S(X1_r).");
        assert!(ren.is_renaming());

        let other = parse_rule("T(Z1) -> exists Y. U(Z1,Y).", &o).unwrap();
        let (_, b, ren) = rename_apart(&r, &other);
        assert_eq!(b, other);
        assert!(ren.is_empty());

        let ex = parse_rule("R(X1) -> exists Y1. T(X1,Y1).", &o).unwrap();
        let (a, b, _) = rename_apart(&ex, &ex);
        assert_eq!(a, ex);
        assert_eq!(b.to_string(), "R(X1_r) -> exists Y1_r. T(X1_r,Y1_r).");
    }
}
