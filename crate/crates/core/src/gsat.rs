//! Rewriting guarded TGDs into full TGDs: simple saturation (COMPOSITION and
//! ORIGINAL inferences) and guarded saturation (EVOLVE inferences).

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::closure::{Closure, ClosureStats};
use crate::model::{guards, is_full, is_guarded, set_widths, widths, Atom, Rule, Sym, Term};
use crate::normal::{hnf_rule, is_hnf, is_vnf, vnf};
use crate::par::Exec;
use crate::unify::{mgu, rename_apart, unify_terms, Subst};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SatError {
    #[error("rule is not guarded: {0}")]
    Unguarded(Rule),
    #[error("rule is disjunctive; use dgsat: {0}")]
    Disjunctive(Rule),
    #[error("rule contains function terms: {0}")]
    Functional(Rule),
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SatConfig {
    pub exec: Exec,
    /// Experimental forward subsumption between full rules.
    pub subsume: bool,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SatStats {
    pub input_rules: usize,
    pub initial_rules: usize,
    pub closure_rules: usize,
    pub output_rules: usize,
    /// log2 of the closure-size ceiling for this input.
    pub size_bound_log2: f64,
    pub within_bound: bool,
    pub closure: ClosureStats,
    #[serde(skip)]
    pub millis: u128,
}

#[derive(Debug, Clone)]
pub struct Saturation {
    /// The full rules of the closure, sorted.
    pub rules: Vec<Rule>,
    /// Every rule of the closure in derivation order.
    pub closure: Vec<Rule>,
    pub stats: SatStats,
}

pub(crate) fn check_input(rules: &[Rule]) -> Result<(), SatError> {
    for r in rules {
        if r.has_functions() {
            return Err(SatError::Functional(r.clone()));
        }
        if !is_guarded(r).0 {
            return Err(SatError::Unguarded(r.clone()));
        }
    }
    Ok(())
}

fn normalized_input(rules: &[Rule]) -> Result<Vec<Rule>, SatError> {
    check_input(rules)?;
    let mut out: Vec<Rule> = Vec::new();
    for r in rules {
        if r.is_disjunctive() {
            return Err(SatError::Disjunctive(r.clone()));
        }
        for s in hnf_rule(r).map_err(|_| SatError::Disjunctive(r.clone()))? {
            let s = vnf(&s);
            if !out.contains(&s) {
                out.push(s);
            }
        }
    }
    Ok(out)
}

fn predicate_stats(rules: &[Rule]) -> (usize, usize) {
    let mut preds: BTreeMap<Sym, usize> = BTreeMap::new();
    for r in rules {
        for a in r.atoms() {
            preds.insert(a.pred.clone(), a.arity());
        }
    }
    (preds.len(), preds.values().copied().max().unwrap_or(0))
}

/// All set partitions of `0..n` with at most `max_blocks` blocks, as
/// restricted growth strings.
pub(crate) fn partitions(n: usize, max_blocks: usize) -> Vec<Vec<usize>> {
    fn go(i: usize, n: usize, max: usize, blocks: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        for b in 0..=blocks.min(max.saturating_sub(1)) {
            if b == blocks && blocks >= max {
                break;
            }
            cur.push(b);
            go(i + 1, n, max, blocks.max(b + 1), cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        out.push(Vec::new());
    } else if max_blocks > 0 {
        go(0, n, max_blocks, 0, &mut Vec::new(), &mut out);
    }
    out
}

fn vars_of_atoms(atoms: &[Atom]) -> Vec<Sym> {
    let mut out = Vec::new();
    for a in atoms {
        a.args.iter().for_each(|t| t.collect_vars(&mut out));
    }
    out
}

fn push_unique(out: &mut Vec<Rule>, r: Rule) {
    if !out.contains(&r) {
        out.push(r);
    }
}

fn minus(a: &[Atom], b: &[Atom]) -> Vec<Atom> {
    a.iter().filter(|x| !b.contains(x)).cloned().collect()
}

/// COMPOSITION: resolves a head atom of the full `t1` with a body atom of the
/// full `t2` under every variable-to-variable unifier into at most `bound`
/// variables.
pub fn composition_step(t1: &Rule, t2: &Rule, bound: usize) -> Vec<Rule> {
    composition_with(t1, t2, bound, false)
}

/// With `maximal`, only unifiers with the largest possible number of
/// variables are tried; the others yield instances of those.
fn composition_with(t1: &Rule, t2: &Rule, bound: usize, maximal: bool) -> Vec<Rule> {
    let (t1, t2, _) = rename_apart(t1, t2);
    let head1: Vec<Atom> = t1.head_atoms().cloned().collect();
    let mut out = Vec::new();
    for h in &head1 {
        for b in t2.body() {
            let Ok(theta0) = mgu(&[(h.clone(), b.clone())], &BTreeSet::new()) else { continue };
            let mut all = theta0.apply_atoms(t1.body());
            all.extend(theta0.apply_atoms(t2.body()));
            let vars = vars_of_atoms(&all);
            let blocks = vars.len().min(bound);
            for p in partitions(vars.len(), bound) {
                if maximal && p.iter().max().map_or(0, |m| m + 1) < blocks {
                    continue;
                }
                let mut reps: Vec<Option<Sym>> = vec![None; vars.len()];
                let merge = Subst::from_pairs(vars.iter().zip(&p).map(|(v, &blk)| {
                    let rep = reps[blk].get_or_insert_with(|| v.clone()).clone();
                    (v.clone(), Term::Var(rep))
                }));
                let theta = theta0.compose(&merge);
                let eta = theta.apply_atoms(&head1);
                let mut body = theta.apply_atoms(t1.body());
                body.extend(minus(&theta.apply_atoms(t2.body()), &eta));
                let head = theta.apply_atoms(t2.head_atoms());
                push_unique(&mut out, vnf(&Rule::tgd(body, vec![], head)));
            }
        }
    }
    out
}

/// ORIGINAL: resolves the non-full `n` (head normal form) with the full `f`
/// under unifiers that fix the existential variables, map only to variables
/// and leave no undischarged body atom of `f` outside the frontier.
pub fn original_step(n: &Rule, f: &Rule) -> Vec<Rule> {
    let (n, f, _) = rename_apart(n, f);
    let ys: Vec<Sym> = n.existentials();
    let xs = n.body_vars();
    let zs = f.vars();
    let eta: Vec<Atom> = n.head_atoms().cloned().collect();
    let mut out = Vec::new();
    for p in partitions(xs.len(), xs.len()) {
        let mut reps: Vec<Option<Sym>> = vec![None; xs.len()];
        let xmap: Vec<(Sym, Term)> = xs
            .iter()
            .zip(&p)
            .map(|(v, &blk)| (v.clone(), Term::Var(reps[blk].get_or_insert_with(|| v.clone()).clone())))
            .collect();
        let mut targets: Vec<Sym> = reps.iter().flatten().cloned().collect();
        let frontier: BTreeSet<Sym> = targets.iter().cloned().collect();
        targets.extend(ys.iter().cloned());
        let mut choice = vec![0usize; zs.len()];
        loop {
            let mut pairs = xmap.clone();
            pairs.extend(zs.iter().zip(&choice).map(|(z, &c)| (z.clone(), Term::Var(targets[c].clone()))));
            let theta = Subst::from_pairs(pairs);
            let eta_t = theta.apply_atoms(&eta);
            let body_f = theta.apply_atoms(f.body());
            if body_f.iter().any(|a| eta_t.contains(a)) {
                let rest = minus(&body_f, &eta_t);
                if vars_of_atoms(&rest).iter().all(|v| frontier.contains(v)) {
                    let head: Vec<Atom> = theta
                        .apply_atoms(f.head_atoms())
                        .into_iter()
                        .filter(|a| !ys.iter().any(|y| a.contains_var(y)))
                        .collect();
                    if !head.is_empty() {
                        let mut body = theta.apply_atoms(n.body());
                        body.extend(rest);
                        push_unique(&mut out, vnf(&Rule::tgd(body, vec![], head)));
                    }
                }
            }
            let mut k = 0;
            while k < choice.len() {
                choice[k] += 1;
                if choice[k] < targets.len() {
                    break;
                }
                choice[k] = 0;
                k += 1;
            }
            if k == choice.len() {
                break;
            }
        }
    }
    out
}

/// Outcome of one EVOLVE attempt, for the guard-in-S′ assertion.
#[derive(Debug, Default, Clone, Copy)]
pub struct EvolveAudit {
    pub attempts: usize,
    pub guard_missing: usize,
}

/// EVOLVE: composes the non-full `n` (head and variable normal form) with
/// the full `f`.
pub fn evolve_step(n: &Rule, f: &Rule) -> Vec<Rule> {
    evolve_step_audited(n, f).0
}

pub fn evolve_step_audited(n: &Rule, f: &Rule) -> (Vec<Rule>, EvolveAudit) {
    let mut audit = EvolveAudit::default();
    let mut out = Vec::new();
    let (n, f, _) = rename_apart(n, f);
    let ys: Vec<Sym> = n.existentials();
    let frozen: BTreeSet<Sym> = ys.iter().cloned().collect();
    let xs = n.body_vars();
    let eta: Vec<Atom> = n.head_atoms().cloned().collect();
    let touches_y = |a: &Atom, th: &Subst| th.apply_atom(a).vars().iter().any(|v| frozen.contains(v));
    for g in guards(&f) {
        for h in &eta {
            let Ok(theta_star) = mgu(&[(g.clone(), h.clone())], &frozen) else { continue };
            audit.attempts += 1;
            if !touches_y(&g, &theta_star) {
                audit.guard_missing += 1;
            }
            let others: Vec<Atom> =
                f.body().iter().filter(|b| **b != g && touches_y(b, &theta_star)).cloned().collect();
            let mut s_prime = vec![g.clone()];
            s_prime.extend(others.iter().cloned());
            let mut choice = vec![0usize; others.len()];
            loop {
                let eqs: Vec<(Term, Term)> = others
                    .iter()
                    .zip(&choice)
                    .filter(|(b, &c)| b.pred == eta[c].pred && b.arity() == eta[c].arity())
                    .flat_map(|(b, &c)| b.args.iter().cloned().zip(eta[c].args.iter().cloned()))
                    .collect();
                let arity_ok = others.iter().zip(&choice).all(|(b, &c)| b.pred == eta[c].pred);
                if arity_ok {
                    if let Ok(theta) = unify_terms(eqs.into_iter().rev().collect(), theta_star.clone(), &frozen) {
                        let x_ok = xs.iter().all(|x| !matches!(theta.var_image(x), Term::Var(ref v) if frozen.contains(v)));
                        let evc = f.body().iter().all(|b| s_prime.contains(b) || !touches_y(b, &theta));
                        if x_ok && evc {
                            let mut body = n.body().to_vec();
                            body.extend(minus(f.body(), &s_prime));
                            let body = theta.apply_atoms(&body);
                            let mut head = eta.clone();
                            head.extend(f.head_atoms().cloned());
                            let head = theta.apply_atoms(&head);
                            let r = Rule::tgd(body, ys.clone(), head);
                            for s in hnf_rule(&r).expect("single conjunct") {
                                push_unique(&mut out, vnf(&s));
                            }
                        }
                    }
                }
                let mut k = 0;
                while k < choice.len() {
                    choice[k] += 1;
                    if choice[k] < eta.len() {
                        break;
                    }
                    choice[k] = 0;
                    k += 1;
                }
                if k == choice.len() {
                    break;
                }
            }
        }
    }
    (out, audit)
}

/// Forward subsumption between full single-conjunct rules: `s` subsumes `r`
/// when some substitution maps the body of `s` into the body of `r` and the
/// head of `s` onto a superset of the head of `r`.
pub fn subsumes(s: &Rule, r: &Rule) -> bool {
    if !is_full(s) || !is_full(r) || !s.is_tgd() || !r.is_tgd() {
        return false;
    }
    if !s.body().iter().all(|a| r.body().iter().any(|b| b.pred == a.pred))
        || !r.head_atoms().all(|h| s.head_atoms().any(|g| g.pred == h.pred))
    {
        return false;
    }
    fn bind<'a>(th: &mut Vec<(&'a Sym, &'a Term)>, a: &'a Atom, b: &'a Atom) -> bool {
        if a.pred != b.pred || a.arity() != b.arity() {
            return false;
        }
        for (x, t) in a.args.iter().zip(&b.args) {
            match x {
                Term::Var(v) => match th.iter().find(|(w, _)| *w == v) {
                    Some((_, u)) if *u != t => return false,
                    Some(_) => {}
                    None => th.push((v, t)),
                },
                _ if x != t => return false,
                _ => {}
            }
        }
        true
    }
    fn image_matches(th: &[(&Sym, &Term)], g: &Atom, h: &Atom) -> bool {
        g.pred == h.pred
            && g.arity() == h.arity()
            && g.args.iter().zip(&h.args).all(|(x, t)| match x {
                Term::Var(v) => th.iter().any(|(w, u)| *w == v && *u == t),
                _ => x == t,
            })
    }
    fn search<'a>(body: &[&'a Atom], s: &'a Rule, r: &'a Rule, th: &mut Vec<(&'a Sym, &'a Term)>) -> bool {
        let Some((first, rest)) = body.split_first() else {
            return r.head_atoms().all(|h| s.head_atoms().any(|g| image_matches(th, g, h)));
        };
        for b in r.body() {
            let mark = th.len();
            if bind(th, first, b) && search(rest, s, r, th) {
                return true;
            }
            th.truncate(mark);
        }
        false
    }
    let mut body: Vec<&Atom> = s.body().iter().collect();
    body.sort_by_key(|a| r.body().iter().filter(|b| b.pred == a.pred).count());
    search(&body, s, r, &mut Vec::new())
}

/// Drops the head atoms of a full rule that already occur in its body;
/// `None` when nothing is left.
fn trim_head(r: Rule) -> Option<Rule> {
    if !is_full(&r) || !r.is_tgd() || !r.head_atoms().any(|h| r.body().contains(h)) {
        return Some(r);
    }
    let head: Vec<Atom> = r.head_atoms().filter(|h| !r.body().contains(h)).cloned().collect();
    (!head.is_empty()).then(|| vnf(&Rule::tgd(r.body().to_vec(), vec![], head)))
}

fn trimmed(rules: Vec<Rule>, on: bool) -> Vec<Rule> {
    if on {
        rules.into_iter().filter_map(trim_head).collect()
    } else {
        rules
    }
}

fn finish(closure: Vec<Rule>, cstats: ClosureStats, input: usize, initial: usize, bound: f64, t0: Instant) -> Saturation {
    let mut rules: Vec<Rule> = closure.iter().filter(|r| is_full(r)).cloned().collect();
    rules.sort();
    let size_log2 = (closure.len().max(1) as f64).log2();
    Saturation {
        stats: SatStats {
            input_rules: input,
            initial_rules: initial,
            closure_rules: closure.len(),
            output_rules: rules.len(),
            size_bound_log2: bound,
            within_bound: size_log2 <= bound,
            closure: cstats,
            millis: t0.elapsed().as_millis(),
        },
        rules,
        closure,
    }
}

/// Guarded saturation: the full rules of the EVOLVE closure of
/// VNF(HNF(rules)).
pub fn gsat(rules: &[Rule], cfg: &SatConfig) -> Result<Saturation, SatError> {
    let t0 = Instant::now();
    let init = normalized_input(rules)?;
    let w = set_widths(&init);
    let (n, a) = predicate_stats(&init);
    let bound = n as f64 * ((w.bwidth as f64).powi(a as i32) + (w.hwidth as f64).powi(a as i32));
    let pair = |r: &Rule, p: &Rule| -> Vec<Rule> {
        if !is_full(r) && is_full(p) {
            trimmed(evolve_step(r, p), cfg.subsume)
        } else {
            Vec::new()
        }
    };
    let check = |r: &Rule| -> Option<String> {
        let wr = widths(r);
        let ok = is_guarded(r).0 && is_vnf(r) && is_hnf(r) && wr.bwidth <= w.bwidth && wr.hwidth <= w.hwidth;
        (!ok).then(|| format!("gsat shape: {r}"))
    };
    let sub = |s: &Rule, r: &Rule| subsumes(s, r);
    let engine = Closure {
        exec: cfg.exec,
        pair: &pair,
        single: None,
        check: &check,
        subsumes: if cfg.subsume { Some(&sub) } else { None },
    };
    let initial = init.len();
    let (closure, cstats) = engine.run(trimmed(init, cfg.subsume));
    Ok(finish(closure, cstats, rules.len(), initial, bound, t0))
}

/// Simple saturation: closure of the full rules of VNF(HNF(rules)) under
/// COMPOSITION and ORIGINAL.
pub fn ssat(rules: &[Rule], cfg: &SatConfig) -> Result<Saturation, SatError> {
    let t0 = Instant::now();
    let init = normalized_input(rules)?;
    let w = set_widths(&init);
    let (n, a) = predicate_stats(&init);
    let bound = 2.0 * n as f64 * (w.width as f64).powi(a as i32);
    let (full, nonfull): (Vec<Rule>, Vec<Rule>) = init.into_iter().partition(is_full);
    let k = w.hwidth;
    let pair = |r: &Rule, p: &Rule| trimmed(composition_with(r, p, k, cfg.subsume), cfg.subsume);
    let single = |r: &Rule| -> Vec<Rule> {
        let mut out = Vec::new();
        for nf in &nonfull {
            for s in trimmed(original_step(nf, r), cfg.subsume) {
                push_unique(&mut out, s);
            }
        }
        out
    };
    let check = |r: &Rule| -> Option<String> {
        let ok = is_full(r) && is_vnf(r) && widths(r).width <= w.width;
        (!ok).then(|| format!("ssat shape: {r}"))
    };
    let sub = |s: &Rule, r: &Rule| subsumes(s, r);
    let engine = Closure {
        exec: cfg.exec,
        pair: &pair,
        single: Some(&single),
        check: &check,
        subsumes: if cfg.subsume { Some(&sub) } else { None },
    };
    let initial = full.len();
    let (closure, cstats) = engine.run(trimmed(full, cfg.subsume));
    Ok(finish(closure, cstats, rules.len(), initial, bound, t0))
}
