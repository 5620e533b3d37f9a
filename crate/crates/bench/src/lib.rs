//! Shared fixtures for the benchmarks.

use std::collections::BTreeMap;

use phaselat_core::bloch::{critical_branch_auto, BlochBranch};
use phaselat_core::normalform::{build_context_with, MollifierOptions, NormalFormContext};
use phaselat_core::pattern::{find_pattern, PatternOptions, PatternSolution};
use phaselat_core::{builtin, ReactionSystem};

pub fn brusselator() -> ReactionSystem {
    let p: BTreeMap<String, f64> = [("a".to_string(), 2.0), ("b".to_string(), 3.2)].into_iter().collect();
    builtin("brusselator", &p, &[1.0, 8.0]).expect("brusselator")
}

pub fn pattern() -> PatternSolution {
    find_pattern(&brusselator(), "b", [2.0, 4.0], 3.2, &PatternOptions::default()).expect("pattern").1
}

/// Pattern, critical branch at `m` and a normal-form context on 64 points.
pub fn fixture(m: usize) -> (PatternSolution, BlochBranch, NormalFormContext) {
    let p = pattern();
    let b = critical_branch_auto(&p, 33, m).expect("branch");
    let ctx = build_context_with(&p, &b.u_ad, 64, MollifierOptions::default()).expect("context");
    (p, b, ctx)
}
