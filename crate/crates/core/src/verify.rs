//! Cross-checks saturation results against the chase: per-rule soundness,
//! bounded completeness of answers, and agreement between the two
//! saturation procedures for non-disjunctive input.

use std::collections::BTreeSet;
use std::fmt;

use rand::{RngExt, SeedableRng};
use rand_pcg::Pcg64;
use serde::Serialize;

use crate::chase::{chase, chase_certain, disjunctive_chase, expand, Certainty, ChaseConfig, DisOutcome};
use crate::dgsat::dgsat;
use crate::eval::{datalog_eval, disdatalog_entails};
use crate::gsat::{gsat, ssat, SatConfig, SatError};
use crate::model::{Atom, HeadConjunct, Instance, Query, Rule, Sym, Term};
use crate::normal::shnf;
use crate::textio::print_rules;
use crate::unify::Subst;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Class {
    Gtgd,
    Disgtgd,
}

/// Limits for randomly generated programs.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GenParams {
    pub predicates: usize,
    pub max_arity: usize,
    pub max_rules: usize,
    pub max_width: usize,
    pub max_facts: usize,
}

impl GenParams {
    pub fn for_class(class: Class) -> Self {
        GenParams {
            predicates: 3,
            max_arity: 3,
            max_rules: if class == Class::Disgtgd { 3 } else { 4 },
            max_width: 3,
            max_facts: 4,
        }
    }
}

const CONSTANTS: [&str; 3] = ["a", "b", "c"];
const PREDICATES: [&str; 6] = ["P", "Q", "R", "S", "T", "U"];

fn var(i: usize) -> Sym {
    Sym::from(format!("X{}", i + 1))
}

fn exist(i: usize) -> Sym {
    Sym::from(format!("Y{}", i + 1))
}

fn random_atom(rng: &mut Pcg64, pred: &(Sym, usize), pool: &[Sym]) -> Atom {
    let args = (0..pred.1).map(|_| Term::Var(pool[rng.random_range(0..pool.len())].clone())).collect();
    Atom::new(pred.0.clone(), args)
}

fn random_conjunct(rng: &mut Pcg64, schema: &[(Sym, usize)], frontier: &[Sym], ys: usize) -> HeadConjunct {
    let exists: Vec<Sym> = (0..ys).map(exist).collect();
    let mut pool = frontier.to_vec();
    pool.extend(exists.iter().cloned());
    let n = rng.random_range(1..=2);
    let mut atoms = Vec::new();
    for i in 0..n {
        let pred = &schema[rng.random_range(0..schema.len())];
        let mut a = random_atom(rng, pred, &pool);
        if i == 0 && ys > 0 && pred.1 > 0 {
            a.args[rng.random_range(0..pred.1)] = Term::Var(exists[0].clone());
        }
        atoms.push(a);
    }
    HeadConjunct::new(exists, atoms)
}

/// Draws a program and a database. The guard atom is drawn first and every
/// other body atom uses only its variables.
pub fn random_program(rng: &mut Pcg64, p: &GenParams, class: Class) -> (Vec<Rule>, Instance) {
    let schema: Vec<(Sym, usize)> =
        (0..p.predicates).map(|i| (Sym::from(PREDICATES[i % PREDICATES.len()]), rng.random_range(1..=p.max_arity))).collect();
    let nrules = rng.random_range(1..=p.max_rules);
    let mut rules = Vec::new();
    for _ in 0..nrules {
        let gpred = &schema[rng.random_range(0..schema.len())];
        let nvars = rng.random_range(1..=gpred.1.min(p.max_width));
        let pool: Vec<Sym> = (0..nvars).map(var).collect();
        let mut guard = random_atom(rng, gpred, &pool);
        for (i, v) in pool.iter().enumerate() {
            guard.args[i] = Term::Var(v.clone());
        }
        let mut body = vec![guard];
        for _ in 0..rng.random_range(0..=1) {
            let pred = &schema[rng.random_range(0..schema.len())];
            body.push(random_atom(rng, pred, &pool));
        }
        let frontier: Vec<Sym> = crate::model::vars_of(body.iter());
        let spare = p.max_width.saturating_sub(frontier.len());
        let arms = if class == Class::Disgtgd { rng.random_range(1..=2) } else { 1 };
        let head = (0..arms)
            .map(|_| {
                let ys = rng.random_range(0..=spare.min(1));
                random_conjunct(rng, &schema, &frontier, ys)
            })
            .collect();
        rules.push(Rule::new(body, head));
    }
    let mut db = Instance::new();
    for _ in 0..rng.random_range(1..=p.max_facts) {
        let (pred, arity) = &schema[rng.random_range(0..schema.len())];
        let args = (0..*arity).map(|_| Term::cst(CONSTANTS[rng.random_range(0..CONSTANTS.len())])).collect();
        db.insert(Atom::new(pred.clone(), args));
    }
    (rules, db)
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyConfig {
    pub steps: usize,
    pub nodes: usize,
    pub inject_unsound: bool,
    pub sat: SatConfig,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { steps: 10_000, nodes: 5_000, inject_unsound: false, sat: SatConfig::default() }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct CheckCount {
    pub name: String,
    pub passed: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub class: Class,
    pub params: Option<GenParams>,
    pub seed: Option<u64>,
    pub programs: usize,
    pub checks: Vec<CheckCount>,
    pub failures: Vec<String>,
}

impl Report {
    fn new(class: Class) -> Self {
        Report { class, params: None, seed: None, programs: 0, checks: Vec::new(), failures: Vec::new() }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    fn record(&mut self, check: &str, ok: bool, detail: impl FnOnce() -> String) {
        let idx = match self.checks.iter().position(|c| c.name == check) {
            Some(i) => i,
            None => {
                self.checks.push(CheckCount { name: check.to_string(), ..CheckCount::default() });
                self.checks.len() - 1
            }
        };
        if ok {
            self.checks[idx].passed += 1;
        } else {
            self.checks[idx].failed += 1;
            self.failures.push(format!("{check}: {}", detail()));
        }
    }

    pub fn count(&self, check: &str) -> (usize, usize) {
        self.checks.iter().find(|c| c.name == check).map_or((0, 0), |c| (c.passed, c.failed))
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let class = match self.class {
            Class::Gtgd => "gtgd",
            Class::Disgtgd => "disgtgd",
        };
        write!(f, "verify class={class} programs={}", self.programs)?;
        if let Some(seed) = self.seed {
            write!(f, " seed={seed}")?;
        }
        if let Some(p) = &self.params {
            write!(
                f,
                " predicates<={} arity<={} rules<={} width<={} facts<={}",
                p.predicates, p.max_arity, p.max_rules, p.max_width, p.max_facts
            )?;
        }
        writeln!(f)?;
        for c in &self.checks {
            writeln!(f, "{:<14} pass {:>6}  fail {:>4}", c.name, c.passed, c.failed)?;
        }
        for msg in &self.failures {
            writeln!(f, "FAIL {msg}")?;
        }
        write!(f, "{}", if self.passed() { "result: pass" } else { "result: fail" })
    }
}

/// Replaces every variable of `r` by a fresh constant and returns the frozen
/// body together with the substitution.
fn freeze(r: &Rule) -> (Instance, Subst) {
    let s = Subst::from_pairs(r.vars().into_iter().map(|v| {
        let c = Term::cst(&format!("k_{}", v.as_str().to_lowercase()));
        (v, c)
    }));
    (s.apply_atoms(r.body()).into_iter().collect(), s)
}

fn unsound_rule(rules: &[Rule]) -> Option<Rule> {
    let r = rules.first()?;
    let args = r.body_vars().into_iter().take(1).map(Term::Var).collect();
    Some(Rule::tgd(r.body().to_vec(), vec![], vec![Atom::new("_unsound", args)]))
}

fn ground_atoms(preds: &BTreeSet<(Sym, usize)>, consts: &BTreeSet<Sym>) -> Vec<Atom> {
    let consts: Vec<Sym> = consts.iter().cloned().collect();
    let mut out = Vec::new();
    for (p, arity) in preds {
        let total = consts.len().pow(*arity as u32);
        for mut code in 0..total {
            let mut args = Vec::with_capacity(*arity);
            for _ in 0..*arity {
                args.push(Term::Const(consts[code % consts.len()].clone()));
                code /= consts.len();
            }
            out.push(Atom::new(p.clone(), args));
        }
    }
    out
}

fn schema_of(rules: &[Rule], db: &Instance) -> BTreeSet<(Sym, usize)> {
    let mut out: BTreeSet<(Sym, usize)> = rules.iter().flat_map(|r| r.atoms().map(|a| (a.pred.clone(), a.arity())).collect::<Vec<_>>()).collect();
    out.extend(db.iter().map(|a| (a.pred.clone(), a.arity())));
    out
}

fn restrict(inst: &Instance, consts: &BTreeSet<Sym>, preds: &BTreeSet<(Sym, usize)>) -> BTreeSet<Atom> {
    inst.iter()
        .filter(|a| a.consts().all(|c| consts.contains(c)) && preds.contains(&(a.pred.clone(), a.arity())))
        .cloned()
        .collect()
}

fn check_gtgd(rules: &[Rule], db: &Instance, cfg: &VerifyConfig, report: &mut Report) -> Result<(), SatError> {
    let g = gsat(rules, &cfg.sat)?;
    let s = ssat(rules, &SatConfig { subsume: true, ..cfg.sat })?;
    let ccfg = ChaseConfig { max_steps: cfg.steps, ..ChaseConfig::default() };
    for (name, sat) in [("gsat", &g), ("ssat", &s)] {
        let violations = &sat.stats.closure.violations;
        report.record("shape", violations.is_empty(), || format!("{name}: {}", violations.join("; ")));
        report.record("bound", sat.stats.within_bound, || format!("{name}: closure exceeds size ceiling"));
        let mut derived = sat.rules.clone();
        if cfg.inject_unsound {
            derived.extend(unsound_rule(rules));
        }
        for r in &derived {
            let (frozen, sub) = freeze(r);
            let q = Query::new(vec![sub.apply_atoms(r.head_atoms())]);
            let res = chase_certain(&frozen, rules, &q, ccfg).map(|c| matches!(c, Certainty::Yes { .. }));
            report.record("soundness", res == Ok(true), || format!("{name} rule not confirmed by the chase: {r}"));
        }
    }
    let consts = db.consts();
    let preds = schema_of(rules, db);
    let (run, inst) = chase(db, rules, ccfg).expect("positive budget");
    let proven = restrict(&inst, &consts, &preds);
    let mut answers = Vec::new();
    for (name, sat) in [("gsat", &g), ("ssat", &s)] {
        let ev = datalog_eval(db, &sat.rules).expect("full rules");
        let got = restrict(&ev.instance, &consts, &preds);
        for a in &proven {
            report.record("completeness", got.contains(a), || format!("{name} misses chase-proven {a}\n{}", print_rules(rules)));
        }
        if run.fixpoint {
            for a in got.difference(&proven) {
                report.record("answers", false, || format!("{name} answers {a} refuted by the chase fixpoint"));
            }
            report.record("answers", true, String::new);
        }
        answers.push(got);
    }
    report.record("agreement", answers[0] == answers[1], || {
        let diff: Vec<String> = answers[0].symmetric_difference(&answers[1]).map(ToString::to_string).collect();
        format!("gsat and ssat answers differ on {}", diff.join(", "))
    });
    Ok(())
}

fn check_disgtgd(rules: &[Rule], db: &Instance, cfg: &VerifyConfig, report: &mut Report) -> Result<(), SatError> {
    let d = dgsat(rules, &cfg.sat)?;
    let sat = &d.saturation;
    let violations = &sat.stats.closure.violations;
    report.record("shape", violations.is_empty() && d.non_simple == 0, || format!("dgsat: {}", violations.join("; ")));
    let sh = shnf(rules).rules;
    let mut derived = sat.rules.clone();
    if cfg.inject_unsound {
        derived.extend(unsound_rule(rules));
    }
    for r in &derived {
        let (frozen, sub) = freeze(r);
        let q = Query::new(sub.apply_atoms(r.head_atoms()).into_iter().map(|a| vec![a]).collect());
        let ok = matches!(disjunctive_chase(&frozen, &sh, &q, cfg.nodes), Ok((DisOutcome::Proven, _)));
        report.record("soundness", ok, || format!("dgsat rule not confirmed by the disjunctive chase: {r}"));
    }
    let consts = db.consts();
    let preds = schema_of(rules, db);
    let (tree, complete) = expand(db, rules, cfg.nodes).expect("positive budget");
    let proven = if tree.inconsistent() {
        ground_atoms(&preds, &consts).into_iter().collect()
    } else {
        let facts: Instance = tree.proven_facts(&consts).into_iter().collect();
        restrict(&facts, &consts, &preds)
    };
    for a in ground_atoms(&preds, &consts) {
        let yes = disdatalog_entails(db, &sat.rules, &Query::atom(a.clone())).expect("full rules and ground query");
        if proven.contains(&a) {
            report.record("completeness", yes, || format!("dgsat misses chase-proven {a}\n{}", print_rules(rules)));
        } else if complete {
            report.record("answers", !yes, || format!("dgsat answers {a} refuted by the complete chase tree"));
        }
    }
    Ok(())
}

/// Runs every check on one program and database.
pub fn verify_program(rules: &[Rule], db: &Instance, class: Class, cfg: &VerifyConfig) -> Result<Report, SatError> {
    let mut report = Report::new(class);
    report.programs = 1;
    match class {
        Class::Gtgd => check_gtgd(rules, db, cfg, &mut report)?,
        Class::Disgtgd => check_disgtgd(rules, db, cfg, &mut report)?,
    }
    Ok(report)
}

/// Generates `n` programs from `seed` and runs every check on each.
pub fn verify_random(n: usize, seed: u64, class: Class, params: GenParams, cfg: &VerifyConfig) -> Report {
    let mut rng = Pcg64::seed_from_u64(seed);
    let mut report = Report::new(class);
    report.seed = Some(seed);
    report.params = Some(params);
    for i in 0..n {
        let (rules, db) = random_program(&mut rng, &params, class);
        report.programs += 1;
        let res = match class {
            Class::Gtgd => check_gtgd(&rules, &db, cfg, &mut report),
            Class::Disgtgd => check_disgtgd(&rules, &db, cfg, &mut report),
        };
        if let Err(e) = res {
            report.record("generation", false, || format!("program {i}: {e}"));
        }
    }
    report
}
