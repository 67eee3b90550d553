//! Given-clause closure shared by the saturation procedures.
//!
//! Each popped rule is paired with every processed rule (itself included) in
//! both orders. Pair inferences may run in parallel; new rules are inserted
//! sequentially in a fixed order, so the result does not depend on the
//! execution mode.

use std::collections::{HashSet, VecDeque};

use serde::Serialize;

use crate::model::Rule;
use crate::par::Exec;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ClosureStats {
    /// Rules popped from the work queue.
    pub iterations: usize,
    /// Resolvents produced, duplicates included.
    pub inferences: usize,
    /// Rules discarded by forward or backward subsumption.
    pub subsumed: usize,
    /// Shape assertions evaluated.
    pub shape_checks: usize,
    /// Human-readable descriptions of failed shape assertions.
    pub violations: Vec<String>,
}

pub(crate) type PairFn<'a> = dyn Fn(&Rule, &Rule) -> Vec<Rule> + Sync + 'a;
pub(crate) type SingleFn<'a> = dyn Fn(&Rule) -> Vec<Rule> + Sync + 'a;
pub(crate) type CheckFn<'a> = dyn Fn(&Rule) -> Option<String> + Sync + 'a;
pub(crate) type SubsumeFn<'a> = dyn Fn(&Rule, &Rule) -> bool + Sync + 'a;

pub(crate) struct Closure<'a> {
    pub exec: Exec,
    pub pair: &'a PairFn<'a>,
    pub single: Option<&'a SingleFn<'a>>,
    pub check: &'a CheckFn<'a>,
    pub subsumes: Option<&'a SubsumeFn<'a>>,
}

impl Closure<'_> {
    /// Returns every rule of the closure in insertion order.
    pub fn run(&self, seed: Vec<Rule>) -> (Vec<Rule>, ClosureStats) {
        let mut stats = ClosureStats::default();
        let mut seen: HashSet<Rule> = HashSet::new();
        let mut all: Vec<Rule> = Vec::new();
        let mut queue: VecDeque<Rule> = VecDeque::new();
        let mut processed: Vec<Rule> = Vec::new();

        let admit = |r: Rule,
                     recent: Option<&mut Vec<Rule>>,
                     stats: &mut ClosureStats,
                     seen: &mut HashSet<Rule>,
                     all: &mut Vec<Rule>,
                     queue: &mut VecDeque<Rule>,
                     processed: &mut Vec<Rule>| {
            if seen.contains(&r) {
                return;
            }
            if let Some(sub) = self.subsumes {
                let earlier = recent.as_deref().map_or(all.as_slice(), Vec::as_slice);
                if earlier.iter().any(|s| sub(s, &r)) {
                    stats.subsumed += 1;
                    return;
                }
                let before = all.len();
                all.retain(|s| !sub(&r, s));
                stats.subsumed += before - all.len();
                queue.retain(|s| !sub(&r, s));
                processed.retain(|s| !sub(&r, s));
            }
            stats.shape_checks += 1;
            if let Some(msg) = (self.check)(&r) {
                stats.violations.push(msg);
            }
            if let Some(recent) = recent {
                recent.push(r.clone());
            }
            seen.insert(r.clone());
            all.push(r.clone());
            queue.push_back(r);
        };

        for r in seed {
            admit(r, None, &mut stats, &mut seen, &mut all, &mut queue, &mut processed);
        }
        while let Some(given) = queue.pop_front() {
            stats.iterations += 1;
            processed.push(given.clone());
            let results: Vec<Vec<Rule>> = self.exec.map(&processed, |other| {
                let mut out = (self.pair)(&given, other);
                if *other != given {
                    out.extend((self.pair)(other, &given));
                }
                out
            });
            let mut fresh: Vec<Rule> = results.into_iter().flatten().collect();
            if let Some(single) = self.single {
                fresh.extend(single(&given));
            }
            stats.inferences += fresh.len();
            let mut batch = HashSet::new();
            fresh.retain(|r| !seen.contains(r) && batch.insert(r.clone()));
            let mut recent = self.subsumes.map(|_| Vec::new());
            if let Some(sub) = self.subsumes {
                let old = &all;
                let covered = self.exec.map(&fresh, |r| old.iter().any(|s| sub(s, r)));
                stats.subsumed += covered.iter().filter(|&&c| c).count();
                let mut it = covered.into_iter();
                fresh.retain(|_| !it.next().unwrap_or(false));
            }
            for r in fresh {
                admit(r, recent.as_mut(), &mut stats, &mut seen, &mut all, &mut queue, &mut processed);
            }
        }
        (all, stats)
    }
}
