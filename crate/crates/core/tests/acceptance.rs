use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use guarded_saturation::chase::{
    chase, chase_certain, check_one_pass, disjunctive_chase, Certainty, ChaseConfig, DisOutcome,
};
use guarded_saturation::dgsat::dgsat;
use guarded_saturation::eval::{datalog_eval, disdatalog_entails};
use guarded_saturation::gsat::{gsat, ssat, SatConfig};
use guarded_saturation::normal::{deskolemize, hnf, ifc, shnf, skolemize, vnf};
use guarded_saturation::textio::{parse_rule, parse_rules};
use guarded_saturation::verify::{random_program, verify_random, Class, GenParams, Report, VerifyConfig};
use guarded_saturation::{parse, Atom, Instance, ParseOptions, Program, Query, Rule, Sym, Term};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_pcg::Pcg64;

const SEED: u64 = 1;
const GTGD_PROGRAMS: usize = 200;
const DISGTGD_PROGRAMS: usize = 100;

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn program(name: &str) -> Program {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "programs", name].iter().collect();
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    parse(&text, &ParseOptions::default()).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn rule(s: &str) -> Rule {
    parse_rule(s, &ParseOptions::default()).unwrap()
}

fn skolem_rule(s: &str) -> Rule {
    parse_rule(s, &ParseOptions { allow_skolem: true }).unwrap()
}

fn shown(rules: &[Rule]) -> Vec<String> {
    rules.iter().map(ToString::to_string).collect()
}

fn timed(limit: Duration, what: &str, f: impl FnOnce() -> Result<(), String>) -> Result<(), String> {
    let t = Instant::now();
    f()?;
    ensure(t.elapsed() < limit, || format!("{what} took {:?}", t.elapsed()))
}

fn ground_atoms(schema: &BTreeSet<(Sym, usize)>, consts: &BTreeSet<Sym>) -> Vec<Atom> {
    let consts: Vec<&Sym> = consts.iter().collect();
    let mut out = Vec::new();
    for (p, arity) in schema {
        let mut idx = vec![0usize; *arity];
        loop {
            out.push(Atom::new(p.clone(), idx.iter().map(|&i| Term::Const(consts[i].clone())).collect()));
            let mut k = 0;
            while k < idx.len() {
                idx[k] += 1;
                if idx[k] < consts.len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == idx.len() {
                break;
            }
        }
    }
    out
}

fn schema(rules: &[Rule], db: &Instance) -> BTreeSet<(Sym, usize)> {
    let mut s: BTreeSet<(Sym, usize)> = rules.iter().flat_map(|r| r.atoms()).map(|a| (a.pred.clone(), a.arity())).collect();
    s.extend(db.iter().map(|a| (a.pred.clone(), a.arity())));
    s
}

fn answers(db: &Instance, rules: &[Rule], atoms: &[Atom]) -> BTreeSet<Atom> {
    let ev = datalog_eval(db, rules).expect("full rules");
    atoms.iter().filter(|a| ev.instance.contains(a)).cloned().collect()
}

fn worked_examples() -> Result<String, String> {
    let limit = Duration::from_secs(1);
    let cfg = SatConfig::default();
    let evolve = program("evolve.gtgd");
    let unifier = program("unifier.gtgd");
    timed(limit, "gsat on the EVOLVE example", || {
        let out = shown(&gsat(&evolve.rules, &cfg).map_err(|e| e.to_string())?.rules);
        for want in ["R(X1) -> P(X1).", "R(X1), S(X1) -> M(X1)."] {
            ensure(out.iter().any(|r| r == want), || format!("gsat misses {want}: {out:?}"))?;
        }
        Ok(())
    })?;
    timed(limit, "gsat on the unifier example", || {
        let out = shown(&gsat(&unifier.rules, &cfg).map_err(|e| e.to_string())?.rules);
        ensure(out.iter().any(|r| r == "R(X1,X2) -> P(X1)."), || format!("gsat misses R(X1,X2) -> P(X1).: {out:?}"))
    })?;
    let mut rng = Pcg64::seed_from_u64(SEED);
    let mut compared = 0;
    for p in [&evolve, &unifier] {
        timed(limit, "ssat query equivalence", || {
            let g = gsat(&p.rules, &cfg).map_err(|e| e.to_string())?;
            let s = ssat(&p.rules, &cfg).map_err(|e| e.to_string())?;
            let sch = schema(&p.rules, &p.database);
            let mut dbs = vec![p.database.clone()];
            let consts: BTreeSet<Sym> = ["c", "d"].into_iter().map(Sym::from).collect();
            let pool = ground_atoms(&sch, &consts);
            for _ in 0..20 {
                let mut pick = pool.clone();
                pick.shuffle(&mut rng);
                dbs.push(pick.into_iter().take(3).collect());
            }
            for db in &dbs {
                let atoms = ground_atoms(&sch, &db.consts());
                let (a, b) = (answers(db, &g.rules, &atoms), answers(db, &s.rules, &atoms));
                ensure(a == b, || format!("ssat and gsat differ on {db:?}: {a:?} vs {b:?}"))?;
                compared += 1;
            }
            Ok(())
        })?;
    }
    timed(limit, "dgsat on the running example", || {
        let d = dgsat(&program("skolem_running.gtgd").rules, &cfg).map_err(|e| e.to_string())?;
        let out = shown(&d.saturation.rules);
        ensure(out.iter().any(|r| r == "R(X1) -> T(X1)."), || format!("dgsat misses R(X1) -> T(X1).: {out:?}"))
    })?;
    timed(limit, "full disjunctive answers", || {
        let p = program("full_disjunctive.gtgd");
        let ask = |a: &str| disdatalog_entails(&p.database, &p.rules, &Query::atom(atom(a))).map_err(|e| e.to_string());
        ensure(ask("U(d)")?, || "U(d) should be entailed".into())?;
        ensure(!ask("U(c)")?, || "U(c) should not be entailed".into())
    })?;
    Ok(format!("5 examples, ssat matched gsat on {compared} databases"))
}

fn atom(s: &str) -> Atom {
    let inst = guarded_saturation::textio::parse_instance(&format!("{s}.")).unwrap();
    let a = inst.iter().next().unwrap().clone();
    a
}

fn normal_forms() -> Result<String, String> {
    let t = Instant::now();
    let mut n = 0;
    let mut eq = |got: String, want: &str| -> Result<(), String> {
        n += 1;
        ensure(got == want, || format!("expected {want}, got {got}"))
    };
    eq(
        vnf(&rule("B(V,X1,X3) -> exists Y1,Z1,Y2. H1(X1,Z1,Y1,Y2), H2(Y1,Y2).")).to_string(),
        "B(X1,X2,X3) -> exists Y1,Y2,Y3. H1(X2,Y1,Y2,Y3), H2(Y2,Y3).",
    )?;
    eq(
        vnf(&skolem_rule("B(Y2,X3) -> H1(f(X3,Y2),Y2,X3), H2(X3) | H3(Y2,g(X3,Y2)).")).to_string(),
        "B(X1,X2) -> H1(f(X2,X1),X1,X2), H2(X2) | H3(X1,g(X2,X1)).",
    )?;
    let h = hnf(&[rule("B(X1,X2) -> exists Y1. H1(X1,Y1), H2(X2).")]).map_err(|e| e.to_string())?;
    eq(shown(&h).join(" "), "B(X1,X2) -> exists Y1. H1(X1,Y1). B(X1,X2) -> H2(X2).")?;
    let dis = rule("B(X1,X2) -> exists Y1,Y2. H1(Y1,X1,Y2), H2(Y2) | exists Y1. H3(Y1,X2).");
    eq(
        shown(&shnf(std::slice::from_ref(&dis)).rules).join(" "),
        "B(X1,X2) -> exists Y1,Y2. _shnf1(X1,Y1,Y2) | exists Y1. _shnf2(X2,Y1). \
         _shnf1(X1,Y1,Y2) -> H1(Y1,X1,Y2). _shnf1(X1,Y1,Y2) -> H2(Y2). _shnf2(X2,Y1) -> H3(Y1,X2).",
    )?;
    eq(
        skolemize(&[dis]).0[0].to_string(),
        "B(X1,X2) -> H1(f1_1(X1,X2),X1,f1_2(X1,X2)), H2(f1_2(X1,X2)) | H3(f2_1(X1,X2),X2).",
    )?;
    eq(
        skolemize(&[rule("R(X1,X2) -> exists Y1,Y2. S(X1,X2,Y1,Y2), T(X1,X2,Y2).")]).0[0].to_string(),
        "R(X1,X2) -> S(X1,X2,f1_1(X1,X2),f1_2(X1,X2)), T(X1,X2,f1_2(X1,X2)).",
    )?;
    let sk = skolem_rule("R(X1,X2) -> U(f2(X1,X2)).");
    let de = deskolemize(&sk).map_err(|e| e.to_string())?;
    eq(de.to_string(), "R(X1,X2) -> exists Y1. U(Y1).")?;
    eq(deskolemize(&skolemize(std::slice::from_ref(&de)).0[0]).map_err(|e| e.to_string())?.to_string(), &de.to_string())?;
    eq(
        ifc(&rule("B(X) -> exists Y. H1(X,Y), H2(X), H3(X) | H4(X).")).map(|r| r.to_string()).unwrap_or_default(),
        "B(X) -> H2(X), H3(X) | H4(X).",
    )?;
    let sk = skolem_rule("B(X) -> H1(X,f(X)), H2(X), H3(X) | H4(X).");
    eq(ifc(&sk).map(|r| r.to_string()).unwrap_or_default(), "B(X) -> H2(X), H3(X) | H4(X).")?;
    ensure(t.elapsed() < Duration::from_secs(1), || format!("took {:?}", t.elapsed()))?;
    Ok(format!("{n} worked examples"))
}

fn chase_examples() -> Result<String, String> {
    let t = Instant::now();
    let cfg = ChaseConfig::default();
    let p = program("chase_proof.gtgd");
    let q = |i: usize| p.queries[i].clone();
    let proof = chase_certain(&p.database, &p.rules, &q(0), cfg).map_err(|e| e.to_string())?;
    ensure(matches!(proof, Certainty::Yes { .. }), || format!("P(d,Y): {proof:?}"))?;
    let refute = chase_certain(&p.database, &p.rules, &q(1), cfg).map_err(|e| e.to_string())?;
    ensure(refute == Certainty::RefutedAtFixpoint, || format!("U(d): {refute:?}"))?;

    let d = program("chase_tree.gtgd");
    let (o, tree) = disjunctive_chase(&d.database, &d.rules, &d.queries[0], 5000).map_err(|e| e.to_string())?;
    ensure(o == DisOutcome::Proven && tree.nodes.len() <= 16, || format!("M(c,Y): {o:?} with {} nodes", tree.nodes.len()))?;

    let tracked = ChaseConfig { track_tree: true, ..cfg };
    let tc = program("tree_chase.gtgd");
    let (run, _) = chase(&tc.database, &tc.rules, tracked).map_err(|e| e.to_string())?;
    let v = check_one_pass(&run).map_err(|e| e.to_string())?;
    ensure(v.is_some(), || "the tree-like run was reported one-pass".into())?;
    let mut single = 0;
    let mut named: Vec<(String, Vec<Rule>, Instance)> = ["tree_chase.gtgd", "evolve.gtgd", "unifier.gtgd", "skolem_running.gtgd"]
        .iter()
        .map(|n| {
            let p = program(n);
            (n.to_string(), p.rules, p.database)
        })
        .collect();
    let mut rng = Pcg64::seed_from_u64(SEED);
    for i in 0..GTGD_PROGRAMS {
        let (rules, db) = random_program(&mut rng, &GenParams::for_class(Class::Gtgd), Class::Gtgd);
        named.push((format!("random program {i}"), rules, db));
    }
    for (name, rules, db) in &named {
        let (run, _) = chase(db, rules, ChaseConfig { max_steps: 1, ..tracked }).map_err(|e| format!("{name}: {e}"))?;
        if run.steps.is_empty() {
            continue;
        }
        let v = check_one_pass(&run).map_err(|e| format!("{name}: {e}"))?;
        ensure(v.is_none(), || format!("{name}: single-step run reported {v:?}"))?;
        single += 1;
    }
    ensure(t.elapsed() < Duration::from_secs(1), || format!("took {:?}", t.elapsed()))?;
    Ok(format!("proof in {proof:?}, tree of {} nodes, {single} single-step runs one-pass", tree.nodes.len()))
}

struct Suites {
    gtgd: Report,
    disgtgd: Report,
    elapsed: Duration,
}

fn suites() -> &'static Suites {
    static S: OnceLock<Suites> = OnceLock::new();
    S.get_or_init(|| {
        let t = Instant::now();
        let cfg = VerifyConfig::default();
        let gtgd = verify_random(GTGD_PROGRAMS, SEED, Class::Gtgd, GenParams::for_class(Class::Gtgd), &cfg);
        let disgtgd = verify_random(DISGTGD_PROGRAMS, SEED, Class::Disgtgd, GenParams::for_class(Class::Disgtgd), &cfg);
        Suites { gtgd, disgtgd, elapsed: t.elapsed() }
    })
}

fn counted(names: &[&str]) -> Result<String, String> {
    let s = suites();
    let mut parts = Vec::new();
    for (label, r) in [("gtgd", &s.gtgd), ("disgtgd", &s.disgtgd)] {
        if let Some((_, failed)) = r.checks.iter().map(|c| (c.name.as_str(), c.failed)).find(|(n, f)| *f > 0 && (names.contains(n) || *n == "generation")) {
            let msgs: Vec<&String> = r.failures.iter().filter(|m| names.iter().any(|n| m.starts_with(n)) || m.starts_with("generation")).take(3).collect();
            return Err(format!("{label}: {failed} failures, e.g. {msgs:?}"));
        }
        let total: usize = names.iter().map(|n| r.count(n).0).sum();
        parts.push(format!("{label} {} programs, {total} checks", r.programs));
    }
    Ok(parts.join("; "))
}

fn soundness() -> Result<String, String> {
    let s = suites();
    ensure(s.gtgd.programs == GTGD_PROGRAMS && s.disgtgd.programs == DISGTGD_PROGRAMS, || "suite sizes".into())?;
    ensure(s.gtgd.count("soundness").0 > 0 && s.disgtgd.count("soundness").0 > 0, || "no rule was checked".into())?;
    let msg = counted(&["soundness", "agreement"])?;
    ensure(s.elapsed < Duration::from_secs(300), || format!("suites took {:?}", s.elapsed))?;
    Ok(format!("{msg}; {:.1} s", s.elapsed.as_secs_f64()))
}

fn completeness() -> Result<String, String> {
    let s = suites();
    ensure(s.gtgd.count("completeness").0 > 0 && s.disgtgd.count("completeness").0 > 0, || "no query was checked".into())?;
    counted(&["completeness", "answers"])
}

fn shape() -> Result<String, String> {
    counted(&["shape", "bound"])
}

/// Models of a full disjunctive program by brute force over the atoms that
/// a positive relaxation can reach.
struct Worlds {
    atoms: Vec<Atom>,
    models: Vec<u32>,
}

fn matches(body: &[Atom], facts: &BTreeSet<Atom>, b: &mut BTreeMap<Sym, Term>, out: &mut Vec<BTreeMap<Sym, Term>>) {
    let Some((first, rest)) = body.split_first() else {
        out.push(b.clone());
        return;
    };
    for f in facts.iter().filter(|f| f.pred == first.pred && f.arity() == first.arity()) {
        let saved = b.clone();
        let ok = first.args.iter().zip(&f.args).all(|(p, t)| match p {
            Term::Var(v) => match b.get(v) {
                Some(u) => u == t,
                None => {
                    b.insert(v.clone(), t.clone());
                    true
                }
            },
            _ => p == t,
        });
        if ok {
            matches(rest, facts, b, out);
        }
        *b = saved;
    }
}

fn instantiate(a: &Atom, b: &BTreeMap<Sym, Term>) -> Atom {
    let args = a.args.iter().map(|t| t.as_var().and_then(|v| b.get(v).cloned()).unwrap_or_else(|| t.clone())).collect();
    Atom::new(a.pred.clone(), args)
}

fn worlds(db: &Instance, rules: &[Rule], cap: usize) -> Option<Worlds> {
    let mut facts: BTreeSet<Atom> = db.facts().clone();
    let mut clauses: Vec<(Vec<Atom>, Vec<Vec<Atom>>)> = Vec::new();
    loop {
        let mut grew = false;
        clauses.clear();
        for r in rules {
            let mut found = Vec::new();
            matches(r.body(), &facts, &mut BTreeMap::new(), &mut found);
            for b in found {
                let body: Vec<Atom> = r.body().iter().map(|a| instantiate(a, &b)).collect();
                let head: Vec<Vec<Atom>> = r.head().iter().map(|c| c.atoms().iter().map(|a| instantiate(a, &b)).collect()).collect();
                clauses.push((body, head));
            }
        }
        for (_, head) in &clauses {
            for a in head.iter().flatten() {
                grew |= facts.insert(a.clone());
            }
        }
        if facts.len() > cap {
            return None;
        }
        if !grew {
            break;
        }
    }
    let atoms: Vec<Atom> = facts.into_iter().collect();
    let bit = |a: &Atom| 1u32 << atoms.iter().position(|x| x == a).expect("atom in relaxation");
    let mask = |xs: &[Atom]| xs.iter().fold(0u32, |m, a| m | bit(a));
    let base = mask(&db.iter().cloned().collect::<Vec<_>>());
    let ground: Vec<(u32, Vec<u32>)> = clauses.iter().map(|(b, h)| (mask(b), h.iter().map(|c| mask(c)).collect())).collect();
    let models = (0..1u32 << atoms.len())
        .filter(|w| w & base == base)
        .filter(|w| ground.iter().all(|(b, hs)| w & b != *b || hs.iter().any(|h| w & h == *h)))
        .collect();
    Some(Worlds { atoms, models })
}

fn eval_oracles() -> Result<String, String> {
    let cfg = SatConfig::default();
    let mut rng = Pcg64::seed_from_u64(SEED);
    let p = GenParams::for_class(Class::Disgtgd);
    let (mut instances, mut queries) = (0, 0);
    for _ in 0..DISGTGD_PROGRAMS {
        let (rules, db) = random_program(&mut rng, &p, Class::Disgtgd);
        let d = dgsat(&rules, &cfg).map_err(|e| e.to_string())?;
        let Some(w) = worlds(&db, &d.saturation.rules, 12) else { continue };
        instances += 1;
        for a in ground_atoms(&schema(&rules, &db), &db.consts()) {
            let oracle = match w.atoms.iter().position(|x| *x == a) {
                Some(i) => w.models.iter().all(|m| m & (1 << i) != 0),
                None => w.models.is_empty(),
            };
            let got = disdatalog_entails(&db, &d.saturation.rules, &Query::atom(a.clone())).map_err(|e| e.to_string())?;
            ensure(got == oracle, || format!("{a}: solver {got}, worlds {oracle}\n{}", shown(&d.saturation.rules).join("\n")))?;
            queries += 1;
        }
    }
    ensure(instances > 0, || "no instance within 12 ground atoms".into())?;

    let mut rng = Pcg64::seed_from_u64(SEED);
    let mut shuffle_rng = Pcg64::seed_from_u64(SEED + 1);
    let p = GenParams::for_class(Class::Gtgd);
    let mut shuffled = 0;
    for _ in 0..GTGD_PROGRAMS {
        let (rules, db) = random_program(&mut rng, &p, Class::Gtgd);
        let g = gsat(&rules, &cfg).map_err(|e| e.to_string())?;
        let reference = datalog_eval(&db, &g.rules).map_err(|e| e.to_string())?.instance;
        for _ in 0..3 {
            let mut perm = g.rules.clone();
            perm.shuffle(&mut shuffle_rng);
            let perm: Vec<Rule> = perm
                .into_iter()
                .map(|r| {
                    let mut body = r.body().to_vec();
                    body.shuffle(&mut shuffle_rng);
                    Rule::new(body, r.head().to_vec())
                })
                .collect();
            let got = datalog_eval(&db, &perm).map_err(|e| e.to_string())?.instance;
            ensure(got == reference, || format!("shuffled rules changed the fixpoint of {db:?}"))?;
            shuffled += 1;
        }
    }
    Ok(format!("{queries} queries on {instances} instances agree with world enumeration; {shuffled} shuffles invariant"))
}

fn scale() -> Result<String, String> {
    let sigma = parse_rules(
        "E(X1,X2) -> exists Y. F(X2,Y).
         F(X1,X2) -> G(X1).
         E(X1,X2), G(X2) -> H(X1).
         H(X1), E(X1,X2) -> G(X2).",
        &ParseOptions::default(),
    )
    .unwrap();
    let g = gsat(&sigma, &SatConfig::default()).map_err(|e| e.to_string())?;
    let w = guarded_saturation::model::set_widths(&sigma).width as f64;
    let mut points = Vec::new();
    for c in [4usize, 8, 16, 32] {
        let mut db = Instance::new();
        for i in 0..c {
            for j in 0..c {
                if (i + j) % 3 == 0 || j == i + 1 {
                    db.insert(Atom::new("E", vec![Term::cst(&format!("c{i}")), Term::cst(&format!("c{j}"))]));
                }
            }
        }
        let ev = datalog_eval(&db, &g.rules).map_err(|e| e.to_string())?;
        points.push(((c as f64).ln(), (ev.work.max(1) as f64).ln()));
    }
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / n, sy / n);
    let slope = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / points.iter().map(|(x, _)| (x - mx).powi(2)).sum::<f64>();
    ensure(slope <= w + 1.0, || format!("fit exponent {slope:.2} exceeds w + 1 = {}", w + 1.0))?;
    Ok(format!("fit exponent {slope:.2} <= w + 1 = {}", w + 1.0))
}

fn main() -> ExitCode {
    let criteria: [(&str, Check); 8] = [
        ("worked examples", worked_examples),
        ("normal forms", normal_forms),
        ("chase", chase_examples),
        ("soundness", soundness),
        ("completeness", completeness),
        ("shape invariants", shape),
        ("eval oracles", eval_oracles),
        ("scale", scale),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let res = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match res {
            Ok(detail) => println!("criterion {} {name}: pass ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({why})", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
