//! Bounded chase engines used as a reference prover: the restricted and
//! oblivious chase with optional tree-decomposition bookkeeping, and the
//! disjunctive chase building chase trees breadth-first.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::eval::{exists_match, for_each_match, ground_atom, match_fact, Binding, FactIndex};
use crate::model::{is_guarded, Atom, Instance, Query, Rule, Sym, Term};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChaseError {
    #[error("budget must be positive")]
    ZeroBudget,
    #[error("rule is not a TGD: {0}")]
    NotTgd(Rule),
    #[error("no rule with index {0}")]
    NoSuchRule(usize),
    #[error("binding is not a trigger for rule {0}")]
    NotATrigger(usize),
    #[error("run carries no tree provenance")]
    NoProvenance,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub enum Mode {
    #[default]
    Restricted,
    Oblivious,
}

/// Where facts derived by a step are copied in the tree decomposition.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub enum Propagation {
    /// Every node whose bag guards the fact receives it.
    #[default]
    Everywhere,
    /// Only the firing node and its ancestors receive new facts; a new child
    /// is completed from its parent's bag.
    AncestorsOnly,
}

#[derive(Debug, Clone, Copy)]
pub struct ChaseConfig {
    pub mode: Mode,
    pub max_steps: usize,
    pub track_tree: bool,
    pub propagation: Propagation,
}

impl Default for ChaseConfig {
    fn default() -> Self {
        ChaseConfig { mode: Mode::Restricted, max_steps: 10_000, track_tree: false, propagation: Propagation::Everywhere }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Trigger {
    rule: usize,
    image: Vec<Term>,
}

fn consts(a: &Atom) -> BTreeSet<Sym> {
    a.consts().cloned().collect()
}

fn guards_fact(g: &Atom, f: &Atom) -> bool {
    let gc = consts(g);
    f.consts().all(|c| gc.contains(c))
}

/// Trigger discovery shared by the linear and the disjunctive chase.
#[derive(Debug, Clone)]
struct State {
    index: FactIndex,
    facts: Vec<Atom>,
    queue: VecDeque<Trigger>,
    seen: HashSet<Trigger>,
    fresh: usize,
}

struct Program {
    rules: Vec<Rule>,
    body_vars: Vec<Vec<Sym>>,
    taken: BTreeSet<Sym>,
}

impl Program {
    fn new(rules: &[Rule], db: &Instance) -> Self {
        Program {
            rules: rules.to_vec(),
            body_vars: rules.iter().map(Rule::body_vars).collect(),
            taken: db.consts(),
        }
    }

    fn binding(&self, t: &Trigger) -> Binding {
        self.body_vars[t.rule].iter().cloned().zip(t.image.iter().cloned()).collect()
    }

    fn start(&self, db: &Instance) -> State {
        let mut st = State {
            index: FactIndex::default(),
            facts: Vec::new(),
            queue: VecDeque::new(),
            seen: HashSet::new(),
            fresh: 0,
        };
        for f in db.iter() {
            if st.index.insert(f.clone()) {
                st.facts.push(f.clone());
            }
        }
        self.discover(&mut st, 0);
        st
    }

    /// Queues the triggers that use at least one fact from `facts[from..]`.
    fn discover(&self, st: &mut State, from: usize) {
        for fi in from..st.facts.len() {
            let fact = st.facts[fi].clone();
            for (ri, r) in self.rules.iter().enumerate() {
                for (pos, pat) in r.body().iter().enumerate() {
                    let mut b = Binding::new();
                    if !match_fact(pat, &fact, &mut b) {
                        continue;
                    }
                    let rest: Vec<Atom> =
                        r.body().iter().enumerate().filter(|(i, _)| *i != pos).map(|(_, a)| a.clone()).collect();
                    let vars = &self.body_vars[ri];
                    let mut found = Vec::new();
                    for_each_match(&rest, &st.index, b, &mut |m| {
                        found.push(Trigger { rule: ri, image: vars.iter().map(|v| m[v].clone()).collect() });
                    });
                    for t in found {
                        if st.seen.insert(t.clone()) {
                            st.queue.push_back(t);
                        }
                    }
                }
            }
        }
    }

    /// Whether some head conjunct already has an extension of the trigger
    /// into the instance.
    fn satisfied(&self, st: &State, t: &Trigger) -> bool {
        let b = self.binding(t);
        self.rules[t.rule].head().iter().any(|c| exists_match(c.atoms(), &st.index, &b))
    }

    fn fresh_const(&self, st: &mut State) -> Term {
        loop {
            st.fresh += 1;
            let s = Sym::from(format!("_e{}", st.fresh));
            if !self.taken.contains(&s) {
                return Term::Const(s);
            }
        }
    }

    /// Applies conjunct `ci` of the trigger's rule; returns the instantiated
    /// conjunct and the facts that were new.
    fn apply(&self, st: &mut State, t: &Trigger, ci: usize) -> (Vec<Atom>, Vec<Atom>) {
        let mut b = self.binding(t);
        let c = &self.rules[t.rule].head()[ci];
        for y in c.exists() {
            let e = self.fresh_const(st);
            b.insert(y.clone(), e);
        }
        let from = st.facts.len();
        let atoms: Vec<Atom> = c.atoms().iter().map(|a| ground_atom(a, &b)).collect();
        let mut new = Vec::new();
        for a in &atoms {
            if st.index.insert(a.clone()) {
                st.facts.push(a.clone());
                new.push(a.clone());
            }
        }
        self.discover(st, from);
        (atoms, new)
    }
}

fn query_holds(index: &FactIndex, q: &Query) -> bool {
    q.disjuncts.iter().any(|d| exists_match(d, index, &Binding::new()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub rule: usize,
    pub trigger: Vec<(Sym, Term)>,
    pub new_facts: Vec<Atom>,
    /// Node in which the step was triggered.
    pub node: Option<usize>,
    /// Nodes created or whose bag grew during the step.
    pub touched: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeNode {
    pub id: usize,
    pub parent: Option<usize>,
    /// Step that created the node; 0 for the root.
    pub created_at: usize,
    pub birth: Vec<Atom>,
    pub bag: BTreeSet<Atom>,
    /// Constants of the creating trigger image, fresh values included.
    pub scope: BTreeSet<Sym>,
}

#[derive(Debug, Clone, Default)]
pub struct ChaseRun {
    pub rules: Vec<Rule>,
    pub steps: Vec<Step>,
    pub nodes: Option<Vec<TreeNode>>,
    pub fixpoint: bool,
    pub exhausted: bool,
}

/// A chase in progress. Steps are numbered from 1; stage `i` is the instance
/// after step `i`.
pub struct Chase {
    prog: Program,
    cfg: ChaseConfig,
    st: State,
    steps: Vec<Step>,
    nodes: Option<Vec<TreeNode>>,
    db_consts: BTreeSet<Sym>,
}

impl Chase {
    pub fn new(db: &Instance, rules: &[Rule], cfg: ChaseConfig) -> Result<Self, ChaseError> {
        if cfg.max_steps == 0 {
            return Err(ChaseError::ZeroBudget);
        }
        if let Some(r) = rules.iter().find(|r| !r.is_tgd()) {
            return Err(ChaseError::NotTgd(r.clone()));
        }
        let prog = Program::new(rules, db);
        let st = prog.start(db);
        let nodes = (cfg.track_tree && rules.iter().all(|r| is_guarded(r).0)).then(|| {
            vec![TreeNode {
                id: 0,
                parent: None,
                created_at: 0,
                birth: db.iter().cloned().collect(),
                bag: db.facts().clone(),
                scope: db.consts(),
            }]
        });
        Ok(Chase { db_consts: db.consts(), prog, cfg, st, steps: Vec::new(), nodes })
    }

    pub fn instance(&self) -> Instance {
        self.st.facts.iter().cloned().collect()
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn satisfies(&self, q: &Query) -> bool {
        query_holds(&self.st.index, q)
    }

    fn next_trigger(&mut self) -> Option<Trigger> {
        while let Some(t) = self.st.queue.pop_front() {
            if self.cfg.mode == Mode::Oblivious || !self.prog.satisfied(&self.st, &t) {
                return Some(t);
            }
        }
        None
    }

    /// Fires the next trigger in discovery order. `None` at a fixpoint.
    pub fn step(&mut self) -> Option<&Step> {
        let t = self.next_trigger()?;
        self.fire_trigger(t);
        self.steps.last()
    }

    /// Fires a chosen trigger regardless of queue order. Inactive triggers
    /// are rejected in restricted mode.
    pub fn fire(&mut self, rule: usize, trigger: &[(&str, &str)]) -> Result<&Step, ChaseError> {
        let vars = self.prog.body_vars.get(rule).ok_or(ChaseError::NoSuchRule(rule))?;
        let map: BTreeMap<&str, &str> = trigger.iter().copied().collect();
        let image: Option<Vec<Term>> = vars.iter().map(|v| map.get(v.as_str()).map(|c| Term::cst(c))).collect();
        let t = Trigger { rule, image: image.ok_or(ChaseError::NotATrigger(rule))? };
        let b = self.prog.binding(&t);
        let body_in = self.prog.rules[rule].body().iter().all(|a| self.st.index.contains(&ground_atom(a, &b)));
        if !body_in || (self.cfg.mode == Mode::Restricted && self.prog.satisfied(&self.st, &t)) {
            return Err(ChaseError::NotATrigger(rule));
        }
        self.st.seen.insert(t.clone());
        self.st.queue.retain(|q| *q != t);
        self.fire_trigger(t);
        Ok(self.steps.last().expect("step recorded"))
    }

    fn fire_trigger(&mut self, t: Trigger) {
        let b = self.prog.binding(&t);
        let image: Vec<Atom> = self.prog.rules[t.rule].body().iter().map(|a| ground_atom(a, &b)).collect();
        let (atoms, new) = self.prog.apply(&mut self.st, &t, 0);
        let step_no = self.steps.len() + 1;
        let (node, touched) = match self.nodes.as_mut() {
            Some(nodes) => {
                let full = self.prog.rules[t.rule].existentials().is_empty();
                update_tree(nodes, &self.st.facts, &image, &atoms, &new, full, step_no, &b, self.cfg.propagation)
            }
            None => (None, Vec::new()),
        };
        self.steps.push(Step {
            rule: t.rule,
            trigger: self.prog.body_vars[t.rule].iter().cloned().zip(t.image).collect(),
            new_facts: new,
            node,
            touched,
        });
    }

    /// Runs until a fixpoint or the step budget.
    pub fn run(&mut self) {
        while self.steps.len() < self.cfg.max_steps {
            if self.step().is_none() {
                break;
            }
        }
    }

    /// True when no active trigger remains.
    pub fn at_fixpoint(&mut self) -> bool {
        match self.next_trigger() {
            Some(t) => {
                self.st.queue.push_front(t);
                false
            }
            None => true,
        }
    }

    pub fn into_run(mut self) -> ChaseRun {
        let fixpoint = self.at_fixpoint();
        ChaseRun {
            rules: self.prog.rules,
            exhausted: !fixpoint && self.steps.len() >= self.cfg.max_steps,
            steps: self.steps,
            nodes: self.nodes,
            fixpoint,
        }
    }

    pub fn db_consts(&self) -> &BTreeSet<Sym> {
        &self.db_consts
    }
}

#[allow(clippy::too_many_arguments)]
fn update_tree(
    nodes: &mut Vec<TreeNode>,
    all: &[Atom],
    image: &[Atom],
    atoms: &[Atom],
    new: &[Atom],
    full: bool,
    step_no: usize,
    b: &Binding,
    prop: Propagation,
) -> (Option<usize>, Vec<usize>) {
    let Some(v) = nodes.iter().position(|n| image.iter().all(|a| n.bag.contains(a))) else {
        return (None, Vec::new());
    };
    let mut touched = BTreeSet::new();
    let target = if full {
        for a in atoms {
            if nodes[v].bag.insert(a.clone()) {
                touched.insert(v);
            }
        }
        v
    } else {
        let id = nodes.len();
        let mut scope: BTreeSet<Sym> = b.values().filter_map(|t| match t {
            Term::Const(c) => Some(c.clone()),
            _ => None,
        }).collect();
        atoms.iter().for_each(|a| scope.extend(consts(a)));
        nodes.push(TreeNode {
            id,
            parent: Some(v),
            created_at: step_no,
            birth: atoms.to_vec(),
            bag: atoms.iter().cloned().collect(),
            scope,
        });
        touched.insert(id);
        id
    };
    let mut add = |nodes: &mut Vec<TreeNode>, u: usize, f: &Atom| {
        if !nodes[u].bag.contains(f) && nodes[u].bag.iter().any(|g| guards_fact(g, f)) {
            nodes[u].bag.insert(f.clone());
            touched.insert(u);
        }
    };
    match prop {
        Propagation::Everywhere => {
            for u in 0..nodes.len() {
                let pool: &[Atom] = if u == target && !full { all } else { new };
                for f in pool {
                    add(nodes, u, f);
                }
            }
        }
        Propagation::AncestorsOnly => {
            if !full {
                let parent: Vec<Atom> = nodes[v].bag.iter().cloned().collect();
                for f in &parent {
                    add(nodes, target, f);
                }
            }
            let mut u = Some(v);
            while let Some(x) = u {
                for f in new {
                    add(nodes, x, f);
                }
                u = nodes[x].parent;
            }
        }
    }
    (Some(v), touched.into_iter().collect())
}

/// Runs the chase of `db` under `rules` and returns the run and the final
/// instance.
pub fn chase(db: &Instance, rules: &[Rule], cfg: ChaseConfig) -> Result<(ChaseRun, Instance), ChaseError> {
    let mut c = Chase::new(db, rules, cfg)?;
    c.run();
    let inst = c.instance();
    Ok((c.into_run(), inst))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Certainty {
    /// The query holds after this many steps.
    Yes { steps: usize },
    /// Budget exhausted without a proof.
    Unknown,
    /// The restricted chase reached a fixpoint that falsifies the query.
    RefutedAtFixpoint,
}

/// Looks for a chase proof of `q` within the step budget.
pub fn chase_certain(db: &Instance, rules: &[Rule], q: &Query, cfg: ChaseConfig) -> Result<Certainty, ChaseError> {
    let mut c = Chase::new(db, rules, cfg)?;
    if c.satisfies(q) {
        return Ok(Certainty::Yes { steps: 0 });
    }
    while c.steps.len() < cfg.max_steps {
        let Some(s) = c.step() else {
            return Ok(if cfg.mode == Mode::Restricted { Certainty::RefutedAtFixpoint } else { Certainty::Unknown });
        };
        let preds: BTreeSet<&Sym> = s.new_facts.iter().map(|a| &a.pred).collect();
        if q.atoms().any(|a| preds.contains(&a.pred)) && c.satisfies(q) {
            return Ok(Certainty::Yes { steps: c.steps.len() });
        }
    }
    Ok(Certainty::Unknown)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OnePassViolation {
    pub node: usize,
    pub outside_step: usize,
    pub modifying_step: usize,
}

fn in_subtree(nodes: &[TreeNode], mut u: usize, v: usize) -> bool {
    loop {
        if u == v {
            return true;
        }
        match nodes[u].parent {
            Some(p) => u = p,
            None => return false,
        }
    }
}

/// Checks the one-pass property and reports the first violation, ordered by
/// node, then by the outside step, then by the modifying step.
pub fn check_one_pass(run: &ChaseRun) -> Result<Option<OnePassViolation>, ChaseError> {
    let nodes = run.nodes.as_ref().ok_or(ChaseError::NoProvenance)?;
    let firing: Vec<usize> = run.steps.iter().map(|s| s.node.ok_or(ChaseError::NoProvenance)).collect::<Result<_, _>>()?;
    let n = run.steps.len();
    for v in nodes {
        for j in (v.created_at + 1)..=n {
            if in_subtree(nodes, firing[j - 1], v.id) {
                continue;
            }
            for k in j..=n {
                if run.steps[k - 1].touched.iter().any(|&u| in_subtree(nodes, u, v.id)) {
                    return Ok(Some(OnePassViolation { node: v.id, outside_step: j, modifying_step: k }));
                }
            }
        }
    }
    Ok(None)
}

/// Verifies the tree-decomposition invariants of a run: guardedly complete
/// bags (with respect to the facts seen so far), connected constants, root
/// constants equal to the database constants, and node constants within the
/// creating trigger.
pub fn check_tree_invariants(run: &ChaseRun, instance: &Instance, db: &Instance) -> Result<(), String> {
    let nodes = run.nodes.as_ref().ok_or("run carries no tree provenance")?;
    let root: BTreeSet<Sym> = nodes[0].bag.iter().flat_map(consts).collect();
    if root != db.consts() {
        return Err("root constants differ from the database constants".into());
    }
    for n in nodes {
        for f in instance.iter() {
            if !n.bag.contains(f) && n.bag.iter().any(|g| guards_fact(g, f)) {
                return Err(format!("bag of node {} is not guardedly complete: missing {f}", n.id));
            }
        }
        if n.parent.is_some() && !n.bag.iter().flat_map(consts).all(|c| n.scope.contains(&c)) {
            return Err(format!("node {} mentions a constant outside its trigger", n.id));
        }
    }
    let all: BTreeSet<Sym> = instance.consts();
    for c in all {
        let with: Vec<&TreeNode> = nodes.iter().filter(|n| n.bag.iter().any(|a| a.consts().any(|x| *x == c))).collect();
        let tops = with
            .iter()
            .filter(|n| n.parent.is_none_or(|p| !nodes[p].bag.iter().any(|a| a.consts().any(|x| *x == c))))
            .count();
        if tops > 1 {
            return Err(format!("nodes mentioning {c} are not connected"));
        }
    }
    Ok(())
}

impl ChaseRun {
    pub fn to_json(&self) -> Value {
        let steps: Vec<Value> = self
            .steps
            .iter()
            .enumerate()
            .map(|(i, s)| {
                json!({
                    "step": i + 1,
                    "rule": s.rule,
                    "rule_text": self.rules[s.rule].to_string(),
                    "trigger": s.trigger.iter().map(|(v, t)| (v.to_string(), Value::String(t.to_string()))).collect::<serde_json::Map<_, _>>(),
                    "new_facts": s.new_facts.iter().map(ToString::to_string).collect::<Vec<_>>(),
                    "node": s.node,
                    "touched": s.touched,
                })
            })
            .collect();
        let nodes: Option<Vec<Value>> = self.nodes.as_ref().map(|ns| {
            ns.iter()
                .map(|n| {
                    json!({
                        "id": n.id,
                        "parent": n.parent,
                        "created_at": n.created_at,
                        "birth": n.birth.iter().map(ToString::to_string).collect::<Vec<_>>(),
                        "bag": n.bag.iter().map(ToString::to_string).collect::<Vec<_>>(),
                    })
                })
                .collect()
        });
        json!({ "kind": "chase", "steps": steps, "nodes": nodes, "fixpoint": self.fixpoint, "exhausted": self.exhausted })
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph chase {\n  node [shape=box, fontname=\"monospace\"];\n");
        match &self.nodes {
            Some(nodes) => {
                for n in nodes {
                    let bag: Vec<String> = n.bag.iter().map(ToString::to_string).collect();
                    out.push_str(&format!("  n{} [label=\"{}\\n{}\"];\n", n.id, n.id, bag.join("\\n")));
                    if let Some(p) = n.parent {
                        out.push_str(&format!("  n{p} -> n{};\n", n.id));
                    }
                }
            }
            None => {
                out.push_str("  s0 [label=\"I0\"];\n");
                for (i, s) in self.steps.iter().enumerate() {
                    let facts: Vec<String> = s.new_facts.iter().map(ToString::to_string).collect();
                    out.push_str(&format!("  s{} [label=\"I{}\\n{}\"];\n  s{} -> s{};\n", i + 1, i + 1, facts.join("\\n"), i, i + 1));
                }
            }
        }
        out.push_str("}\n");
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NodeStatus {
    Open,
    Expanded,
    /// The node satisfies the query.
    Proved,
    /// No active trigger remains.
    Fixpoint,
    /// The applied disjunct was empty; the branch is inconsistent.
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChaseTreeNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    pub rule: Option<usize>,
    pub disjunct: Option<usize>,
    pub added: Vec<Atom>,
    pub status: NodeStatus,
    /// Final instance of a leaf.
    pub facts: Option<Vec<Atom>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DisOutcome {
    /// Every leaf of a finite chase tree satisfies the query.
    Proven,
    /// Some leaf reached a fixpoint that falsifies the query.
    Refuted,
    Unknown,
}

#[derive(Debug, Clone, Default)]
pub struct ChaseTree {
    pub rules: Vec<Rule>,
    pub nodes: Vec<ChaseTreeNode>,
}

struct Branch {
    node: usize,
    st: State,
}

fn grow(
    db: &Instance,
    rules: &[Rule],
    q: Option<&Query>,
    budget: usize,
) -> Result<(DisOutcome, ChaseTree, bool), ChaseError> {
    if budget == 0 {
        return Err(ChaseError::ZeroBudget);
    }
    let prog = Program::new(rules, db);
    let root = ChaseTreeNode {
        id: 0,
        parent: None,
        depth: 0,
        rule: None,
        disjunct: None,
        added: db.iter().cloned().collect(),
        status: NodeStatus::Open,
        facts: None,
    };
    let mut tree = ChaseTree { rules: rules.to_vec(), nodes: vec![root] };
    let mut open: VecDeque<Branch> = VecDeque::from([Branch { node: 0, st: prog.start(db) }]);
    let mut outcome = None;
    while let Some(mut br) = open.pop_front() {
        if q.is_some_and(|q| query_holds(&br.st.index, q)) {
            tree.nodes[br.node].status = NodeStatus::Proved;
            tree.nodes[br.node].facts = Some(br.st.facts);
            continue;
        }
        let trig = loop {
            match br.st.queue.pop_front() {
                Some(t) if prog.satisfied(&br.st, &t) => continue,
                other => break other,
            }
        };
        let Some(t) = trig else {
            tree.nodes[br.node].status = NodeStatus::Fixpoint;
            tree.nodes[br.node].facts = Some(br.st.facts);
            if q.is_some() {
                outcome = Some(DisOutcome::Refuted);
                break;
            }
            continue;
        };
        let arms = rules[t.rule].head().len();
        if tree.nodes.len() + arms > budget {
            br.st.queue.push_front(t);
            tree.nodes[br.node].facts = Some(br.st.facts.clone());
            open.push_front(br);
            break;
        }
        if arms == 0 {
            tree.nodes[br.node].status = NodeStatus::Closed;
            continue;
        }
        tree.nodes[br.node].status = NodeStatus::Expanded;
        let depth = tree.nodes[br.node].depth + 1;
        let mut last = Some(br.st);
        for ci in 0..arms {
            let mut st = if ci + 1 == arms { last.take().expect("state") } else { last.clone().expect("state") };
            let (atoms, _) = prog.apply(&mut st, &t, ci);
            let id = tree.nodes.len();
            tree.nodes.push(ChaseTreeNode {
                id,
                parent: Some(br.node),
                depth,
                rule: Some(t.rule),
                disjunct: Some(ci),
                added: atoms,
                status: NodeStatus::Open,
                facts: None,
            });
            open.push_back(Branch { node: id, st });
        }
    }
    let complete = open.is_empty() && outcome.is_none();
    for br in open {
        tree.nodes[br.node].facts.get_or_insert(br.st.facts);
    }
    let outcome = outcome.unwrap_or(if complete { DisOutcome::Proven } else { DisOutcome::Unknown });
    Ok((outcome, tree, complete))
}

/// Searches for a finite chase tree all of whose leaves satisfy `q`,
/// expanding the shallowest open leaf first and creating at most `budget`
/// tree nodes.
pub fn disjunctive_chase(db: &Instance, rules: &[Rule], q: &Query, budget: usize) -> Result<(DisOutcome, ChaseTree), ChaseError> {
    let (o, t, _) = grow(db, rules, Some(q), budget)?;
    Ok((o, t))
}

/// Expands the chase tree without a goal until every leaf is at a fixpoint
/// or the node budget is spent. The flag reports whether all leaves reached
/// a fixpoint.
pub fn expand(db: &Instance, rules: &[Rule], budget: usize) -> Result<(ChaseTree, bool), ChaseError> {
    let (_, t, complete) = grow(db, rules, None, budget)?;
    Ok((t, complete))
}

impl ChaseTree {
    pub fn leaves(&self) -> impl Iterator<Item = &ChaseTreeNode> {
        self.nodes.iter().filter(|n| n.status != NodeStatus::Expanded)
    }

    /// Facts over `domain` contained in every non-closed leaf. The current
    /// tree is a finite chase tree, so each of them is entailed.
    pub fn proven_facts(&self, domain: &BTreeSet<Sym>) -> BTreeSet<Atom> {
        let mut acc: Option<BTreeSet<Atom>> = None;
        for leaf in self.leaves().filter(|n| n.status != NodeStatus::Closed) {
            let facts: BTreeSet<Atom> = leaf
                .facts
                .iter()
                .flatten()
                .filter(|a| a.consts().all(|c| domain.contains(c)))
                .cloned()
                .collect();
            acc = Some(match acc {
                None => facts,
                Some(a) => a.intersection(&facts).cloned().collect(),
            });
        }
        acc.unwrap_or_default()
    }

    /// True when every leaf is closed: the database and rules are
    /// inconsistent.
    pub fn inconsistent(&self) -> bool {
        self.leaves().all(|n| n.status == NodeStatus::Closed)
    }

    pub fn to_json(&self) -> Value {
        let nodes: Vec<Value> = self
            .nodes
            .iter()
            .map(|n| {
                json!({
                    "id": n.id,
                    "parent": n.parent,
                    "depth": n.depth,
                    "rule": n.rule,
                    "rule_text": n.rule.map(|r| self.rules[r].to_string()),
                    "disjunct": n.disjunct,
                    "added": n.added.iter().map(ToString::to_string).collect::<Vec<_>>(),
                    "status": n.status,
                })
            })
            .collect();
        json!({ "kind": "chase_tree", "nodes": nodes })
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph chase_tree {\n  node [shape=box, fontname=\"monospace\"];\n");
        for n in &self.nodes {
            let added: Vec<String> = n.added.iter().map(ToString::to_string).collect();
            let style = match n.status {
                NodeStatus::Proved => ", color=darkgreen",
                NodeStatus::Fixpoint => ", color=red",
                NodeStatus::Open => ", style=dashed",
                _ => "",
            };
            out.push_str(&format!("  t{} [label=\"{}\\n{}\"{}];\n", n.id, n.id, added.join("\\n"), style));
            if let Some(p) = n.parent {
                out.push_str(&format!("  t{p} -> t{};\n", n.id));
            }
        }
        out.push_str("}\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textio::{parse_instance, parse_query, parse_rules, ParseOptions};

    fn rules(s: &str) -> Vec<Rule> {
        parse_rules(s, &ParseOptions::default()).unwrap()
    }

    fn db(s: &str) -> Instance {
        parse_instance(s).unwrap()
    }

    fn q(s: &str) -> Query {
        parse_query(s).unwrap()
    }

    const SIMPLE: &str = "R(X1,X2) -> exists Y. S(X1,Y).
        S(X1,X2) -> T(X1), U(X2).
        R(X1,X2), U(X3) -> P(X2,X3).";

    const TREE: &str = "R(X1,X2) -> exists Y. S(X1,Y).
        R(X1,X2) -> exists Y. T(X1,X2,Y).
        T(X1,X2,X3) -> exists Y. U(X1,X2,Y).
        U(X1,X2,X3) -> P(X2).
        T(X1,X2,X3), P(X2) -> M(X1).
        S(X1,X2), M(X1) -> exists Y. N(X1,Y).";

    const DISJ: &str = "R(X1,X2) -> exists Y. S(X1,Y) | exists Y. T(X1,X2,Y).
        T(X1,X2,X3) -> exists Y. U(X1,X2,Y).
        U(X1,X2,X3) -> M(X1,X2) | P(X2).
        T(X1,X2,X3), P(X2) -> M(X1,X1).
        S(X1,X2) -> M(X1,X1).";

    #[test]
    fn simple_chase_proof() {
        let (run, inst) = chase(&db("R(c,d)."), &rules(SIMPLE), ChaseConfig::default()).unwrap();
        assert_eq!(inst, db("R(c,d). S(c,_e1). T(c). U(_e1). P(d,_e1)."));
        assert!(run.fixpoint && !run.exhausted);
        assert_eq!(run.steps.len(), 3);
        let cfg = ChaseConfig::default();
        assert_eq!(chase_certain(&db("R(c,d)."), &rules(SIMPLE), &q("? P(d,Y)."), cfg).unwrap(), Certainty::Yes { steps: 3 });
        assert_eq!(chase_certain(&db("R(c,d)."), &rules(SIMPLE), &q("? U(d)."), cfg).unwrap(), Certainty::RefutedAtFixpoint);
        let obl = ChaseConfig { mode: Mode::Oblivious, ..cfg };
        assert_eq!(chase_certain(&db("R(c,d)."), &rules(SIMPLE), &q("? U(d)."), obl).unwrap(), Certainty::Unknown);
    }

    #[test]
    fn infinite_chase_stops_at_budget() {
        let r = rules("Q(X1,X1) -> P(X1), Q(X1,X1). P(X1) -> exists Y1. P(Y1), Q(Y1,X1).");
        let (run, inst) = chase(&db("P(a). Q(b,a)."), &r, ChaseConfig::default()).unwrap();
        assert!(run.exhausted && !run.fixpoint);
        assert_eq!(run.steps.len(), 10_000);
        assert_eq!(inst.len(), 2 + 2 * 10_000);
        let (o, tree) = disjunctive_chase(&db("P(a)."), &r, &q("? Q(a,a)."), 5000).unwrap();
        assert_eq!(o, DisOutcome::Unknown);
        assert_eq!(tree.nodes.len(), 5000);
    }

    #[test]
    fn trivial_chases() {
        let (run, inst) = chase(&db("R(c,d)."), &[], ChaseConfig::default()).unwrap();
        assert_eq!(inst, db("R(c,d)."));
        assert!(run.steps.is_empty());
        let cfg = ChaseConfig::default();
        assert_eq!(chase_certain(&db("R(c,d)."), &[], &q("? R(c,d)."), cfg).unwrap(), Certainty::Yes { steps: 0 });
        assert!(matches!(Chase::new(&db("R(c)."), &[], ChaseConfig { max_steps: 0, ..cfg }), Err(ChaseError::ZeroBudget)));
    }

    #[test]
    fn fresh_constants_avoid_database() {
        let (_, inst) = chase(&db("R(c,_e1)."), &rules("R(X1,X2) -> exists Y. S(X1,Y)."), ChaseConfig::default()).unwrap();
        assert!(inst.contains(&crate::textio::parse_instance("S(c,_e2).").unwrap().iter().next().unwrap().clone()));
    }

    #[test]
    fn tree_like_run_is_not_one_pass() {
        let cfg = ChaseConfig { track_tree: true, ..ChaseConfig::default() };
        let (run, inst) = chase(&db("R(c,d)."), &rules(TREE), cfg).unwrap();
        let added: Vec<String> = run.steps.iter().map(|s| s.new_facts[0].to_string()).collect();
        assert_eq!(added, ["S(c,_e1)", "T(c,d,_e2)", "U(c,d,_e3)", "P(d)", "M(c)", "N(c,_e4)"]);
        check_tree_invariants(&run, &inst, &db("R(c,d).")).unwrap();
        let v = check_one_pass(&run).unwrap().unwrap();
        assert_eq!((v.node, v.outside_step, v.modifying_step), (1, 2, 5));
    }

    #[test]
    fn ancestors_only_run_is_one_pass() {
        let cfg = ChaseConfig { track_tree: true, propagation: Propagation::AncestorsOnly, ..ChaseConfig::default() };
        let mut c = Chase::new(&db("R(c,d)."), &rules(TREE), cfg).unwrap();
        c.fire(1, &[("X1", "c"), ("X2", "d")]).unwrap();
        c.fire(2, &[("X1", "c"), ("X2", "d"), ("X3", "_e1")]).unwrap();
        c.fire(3, &[("X1", "c"), ("X2", "d"), ("X3", "_e2")]).unwrap();
        c.fire(4, &[("X1", "c"), ("X2", "d"), ("X3", "_e1")]).unwrap();
        c.fire(0, &[("X1", "c"), ("X2", "d")]).unwrap();
        let s = c.fire(5, &[("X1", "c"), ("X2", "_e3")]).unwrap();
        assert_eq!(s.node, Some(3));
        let run = c.into_run();
        assert_eq!(check_one_pass(&run).unwrap(), None);
    }

    #[test]
    fn single_step_runs_are_one_pass() {
        let cfg = ChaseConfig { track_tree: true, max_steps: 1, ..ChaseConfig::default() };
        let (run, _) = chase(&db("R(c,d)."), &rules(TREE), cfg).unwrap();
        assert_eq!(run.steps.len(), 1);
        assert!(run.exhausted);
        assert_eq!(check_one_pass(&run).unwrap(), None);
        let (plain, _) = chase(&db("R(c,d)."), &rules(TREE), ChaseConfig::default()).unwrap();
        assert_eq!(check_one_pass(&plain), Err(ChaseError::NoProvenance));
    }

    #[test]
    fn fire_rejects_non_triggers() {
        let mut c = Chase::new(&db("R(c,d)."), &rules(TREE), ChaseConfig::default()).unwrap();
        assert_eq!(c.fire(3, &[("X1", "c"), ("X2", "d"), ("X3", "e")]).unwrap_err(), ChaseError::NotATrigger(3));
        assert_eq!(c.fire(9, &[]).unwrap_err(), ChaseError::NoSuchRule(9));
    }

    #[test]
    fn disjunctive_example() {
        let (o, tree) = disjunctive_chase(&db("R(c,d)."), &rules(DISJ), &q("? M(c,Y)."), 5000).unwrap();
        assert_eq!(o, DisOutcome::Proven);
        assert!(tree.nodes.len() <= 16, "{}", tree.nodes.len());
        assert!(tree.leaves().all(|n| n.status == NodeStatus::Proved));
        let (o, _) = disjunctive_chase(&db("R(c,d)."), &rules(DISJ), &q("? M(c,c) | M(c,d)."), 5000).unwrap();
        assert_eq!(o, DisOutcome::Proven);
        let (o, _) = disjunctive_chase(&db("R(c,d)."), &rules(DISJ), &q("? M(c,d)."), 5000).unwrap();
        assert_eq!(o, DisOutcome::Refuted);
    }

    #[test]
    fn disjunctive_trivial() {
        let (o, tree) = disjunctive_chase(&db("R(c,d)."), &[], &q("? S(c)."), 10).unwrap();
        assert_eq!(o, DisOutcome::Refuted);
        assert_eq!(tree.nodes.len(), 1);
    }

    #[test]
    fn expansion_intersects_leaves() {
        let (tree, complete) = expand(&db("A(c)."), &rules("A(X) -> B(X) | C(X). B(X) -> D(X). C(X) -> D(X)."), 100).unwrap();
        assert!(complete);
        let dom: BTreeSet<Sym> = [Sym::from("c")].into();
        assert_eq!(tree.proven_facts(&dom), db("A(c). D(c).").facts().clone());
        let (tree, _) = expand(&db("A(c)."), &rules("A(X) -> ."), 100).unwrap();
        assert!(tree.inconsistent());
    }

    #[test]
    fn traces_export() {
        let cfg = ChaseConfig { track_tree: true, ..ChaseConfig::default() };
        let (run, _) = chase(&db("R(c,d)."), &rules(TREE), cfg).unwrap();
        let j = run.to_json();
        assert_eq!(j["steps"].as_array().unwrap().len(), 6);
        assert!(run.to_dot().contains("n0 -> n1"));
        let (_, tree) = disjunctive_chase(&db("R(c,d)."), &rules(DISJ), &q("? M(c,Y)."), 100).unwrap();
        assert_eq!(tree.to_json()["nodes"].as_array().unwrap().len(), tree.nodes.len());
        assert!(tree.to_dot().starts_with("digraph"));
    }
}
