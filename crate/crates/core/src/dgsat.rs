//! Disjunctive guarded saturation: D-EVOLVE over Skolemized single-headed
//! guarded simple rules, followed by the immediate full consequence.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use thiserror::Error;

use crate::closure::Closure;
use crate::gsat::{check_input, SatConfig, SatError, SatStats, Saturation};
use crate::model::{guards, is_full, is_guarded_simple, set_widths, widths, Atom, HeadConjunct, Query, Rule, Sym};
use crate::normal::{ifc, is_vnf, shnf, skolemize, vnf};
use crate::unify::{mgu, rename_apart};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("query mentions auxiliary predicate {0}")]
pub struct AuxiliaryQuery(pub Sym);

/// Output of [`dgsat`] together with the auxiliary predicates introduced by
/// the single-head normal form.
#[derive(Debug, Clone)]
pub struct DisSaturation {
    pub saturation: Saturation,
    pub fresh: Vec<Sym>,
    /// Unified resolvent atoms that were not simple.
    pub non_simple: usize,
}

impl DisSaturation {
    pub fn check_query(&self, q: &Query) -> Result<(), AuxiliaryQuery> {
        match q.atoms().find(|a| self.fresh.contains(&a.pred)) {
            Some(a) => Err(AuxiliaryQuery(a.pred.clone())),
            None => Ok(()),
        }
    }
}

fn is_premise(r: &Rule) -> bool {
    !r.has_functional_body() && r.head_atoms().any(Atom::is_functional)
}

/// D-EVOLVE between `n`, which has a function-free body and a functional
/// head atom, and `other`.
pub fn devolve_step(n: &Rule, other: &Rule) -> Vec<Rule> {
    devolve_step_audited(n, other).0
}

fn devolve_step_audited(n: &Rule, other: &Rule) -> (Vec<Rule>, usize) {
    let mut out = Vec::new();
    let mut non_simple = 0;
    if !is_premise(n) {
        return (out, 0);
    }
    let (n, f, _) = rename_apart(n, other);
    let eta: Vec<Atom> = n.head_atoms().cloned().collect();
    let eta2: Vec<Atom> = f.head_atoms().cloned().collect();
    let gs = guards(&f);
    let full = is_full(&f);
    for h in eta.iter().filter(|a| a.is_functional()) {
        for b in f.body() {
            if !(b.is_functional() || (full && gs.contains(b))) {
                continue;
            }
            let Ok(theta) = mgu(&[(h.clone(), b.clone())], &BTreeSet::new()) else { continue };
            if !theta.apply_atom(h).is_simple() || !theta.apply_atom(b).is_simple() {
                non_simple += 1;
            }
            let mut body = n.body().to_vec();
            body.extend(f.body().iter().filter(|a| *a != b).cloned());
            let mut head: Vec<Atom> = eta.iter().filter(|a| *a != h).cloned().collect();
            head.extend(eta2.iter().cloned());
            let body = theta.apply_atoms(&body);
            let head = theta.apply_atoms(&head).into_iter().map(|a| HeadConjunct::full(vec![a])).collect();
            let r = vnf(&Rule::new(body, head));
            if !out.contains(&r) {
                out.push(r);
            }
        }
    }
    (out, non_simple)
}

/// Runs the pipeline SHNF, Skolemization, VNF, D-EVOLVE closure, IFC.
pub fn dgsat(rules: &[Rule], cfg: &SatConfig) -> Result<DisSaturation, SatError> {
    let t0 = Instant::now();
    check_input(rules)?;
    let sh = shnf(rules);
    let (sk, table) = skolemize(&sh.rules);
    let mut init: Vec<Rule> = Vec::new();
    for r in sk {
        let r = vnf(&r);
        if !init.contains(&r) {
            init.push(r);
        }
    }
    let w = set_widths(&sh.rules).bwidth;
    let mut preds = BTreeSet::new();
    let mut a = 0;
    for r in &sh.rules {
        for at in r.atoms() {
            preds.insert(at.pred.clone());
            a = a.max(at.arity());
        }
    }
    let (n, m) = (preds.len() as f64, table.entries.len() as f64);
    let (wf, af) = (w as f64, a as f64);
    let atoms_bound = 2.0 * n * wf.powf(af * wf) * af.powf(m).max(m.powf(af));

    let non_simple = AtomicUsize::new(0);
    let pair = |r: &Rule, p: &Rule| -> Vec<Rule> {
        let (out, bad) = devolve_step_audited(r, p);
        non_simple.fetch_add(bad, Ordering::Relaxed);
        out
    };
    let check = |r: &Rule| -> Option<String> {
        let ok = r.is_single_headed()
            && r.head().iter().all(|c| c.atoms().len() == 1)
            && is_guarded_simple(r)
            && is_vnf(r)
            && widths(r).width <= w
            && (r.atoms().count() as f64) <= atoms_bound;
        (!ok).then(|| format!("dgsat shape: {r}"))
    };
    let engine = Closure { exec: cfg.exec, pair: &pair, single: None, check: &check, subsumes: None };
    let initial = init.len();
    let (closure, cstats) = engine.run(init);

    let mut out: Vec<Rule> = Vec::new();
    for r in &closure {
        if let Some(f) = ifc(r) {
            let f = vnf(&f);
            if !out.contains(&f) {
                out.push(f);
            }
        }
    }
    out.sort();
    let size_log2 = (closure.len().max(1) as f64).log2();
    let stats = SatStats {
        input_rules: rules.len(),
        initial_rules: initial,
        closure_rules: closure.len(),
        output_rules: out.len(),
        size_bound_log2: atoms_bound,
        within_bound: size_log2 <= atoms_bound,
        closure: cstats,
        millis: t0.elapsed().as_millis(),
    };
    Ok(DisSaturation {
        saturation: Saturation { rules: out, closure, stats },
        fresh: sh.fresh,
        non_simple: non_simple.into_inner(),
    })
}
