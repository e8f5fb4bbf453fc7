//! Litmus cases, seeded experiments over broadcast stacks, and reports.
//!
//! ```text
//! name sb
//! model sc
//! vars x y
//! proc 0
//! W x 1
//! R y
//! proc 1
//! W y 1
//! R x
//! outcome forbidden 0:0=0 1:0=0
//! ```
//!
//! `p:k=v` constrains the k-th read (0-based) of process p to return v.
//! Expectations: `allowed`, `forbidden`, and `unreachable` (the model
//! admits the outcome but the stacks never produce it).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde_json::json;

use crate::checker::{check_nw, check_pc, check_pob, Verdict, VerdictState};
use crate::computation::{Computation, OpKind, ProcId, ThreadId, Value, Var};
use crate::error::{parse_err, Error, Result};
use crate::monitor::{monitor_trace, MonitorReport};
use crate::partition::{model_partition, ModelName, PartitionSpec};
use crate::sim::{extract_computation, format_trace, Level, Outcome, Trace};
use crate::transform::{interpret, parse_program, replica, simulate, SpecInstr, SpecProgram, Stack, TargetConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Expectation {
    Allowed,
    Forbidden,
    /// Admitted by the model, never produced by the implementations.
    Unreachable,
}

impl Expectation {
    /// Observing the outcome in a run is a failure.
    pub fn is_violation(self) -> bool {
        self != Expectation::Allowed
    }
}

impl fmt::Display for Expectation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Expectation::Allowed => "allowed",
            Expectation::Forbidden => "forbidden",
            Expectation::Unreachable => "unreachable",
        })
    }
}

impl FromStr for Expectation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "allowed" => Ok(Expectation::Allowed),
            "forbidden" => Ok(Expectation::Forbidden),
            "unreachable" | "spec-allowed-impl-unreachable" => Ok(Expectation::Unreachable),
            _ => Err(Error::Domain(format!("unknown expectation {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ReadCondition {
    pub proc: ProcId,
    /// Position among the process's reads.
    pub read: usize,
    pub value: Value,
}

impl fmt::Display for ReadCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}={}", self.proc.0, self.read, self.value)
    }
}

/// A conjunction of read conditions.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OutcomeExpr(pub Vec<ReadCondition>);

impl OutcomeExpr {
    pub fn matches(&self, o: &RunOutcome) -> bool {
        self.0.iter().all(|c| {
            o.0.get(c.proc.0 as usize)
                .and_then(|reads| reads.get(c.read))
                .is_some_and(|&v| v == c.value)
        })
    }
}

impl fmt::Display for OutcomeExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join(" "))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OutcomeSpec {
    pub expr: OutcomeExpr,
    pub expectation: Expectation,
}

/// Values returned by each process's reads, in program order.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RunOutcome(pub Vec<Vec<Value>>);

impl fmt::Display for RunOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .0
            .iter()
            .enumerate()
            .map(|(p, vs)| {
                let vs: Vec<String> = vs.iter().map(ToString::to_string).collect();
                format!("{p}:{}", vs.join(","))
            })
            .collect();
        f.write_str(&parts.join(" "))
    }
}

/// Reads of a specification computation grouped by process.
pub fn run_outcome(c: &Computation, nprocs: u32) -> RunOutcome {
    RunOutcome(
        (0..nprocs)
            .map(|p| {
                c.thread(ProcId(p), ThreadId(0))
                    .iter()
                    .filter_map(|op| match &op.kind {
                        OpKind::Read { value, .. } => Some(*value),
                        _ => None,
                    })
                    .collect()
            })
            .collect(),
    )
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LitmusCase {
    pub name: String,
    pub program: SpecProgram,
    pub model: ModelName,
    pub outcomes: Vec<OutcomeSpec>,
}

impl LitmusCase {
    pub fn partition(&self) -> PartitionSpec {
        model_partition(&self.model, &self.program.universe, self.program.write_sites())
    }

    fn reads_of(&self, p: ProcId) -> Option<usize> {
        self.program
            .procs
            .get(p.0 as usize)
            .map(|instrs| instrs.iter().filter(|i| matches!(i, SpecInstr::Read(_))).count())
    }

    fn check_expr(&self, expr: &OutcomeExpr, line: usize) -> Result<()> {
        for c in &expr.0 {
            match self.reads_of(c.proc) {
                None => return Err(parse_err(line, format!("no process {}", c.proc.0))),
                Some(n) if c.read >= n => {
                    return Err(parse_err(
                        line,
                        format!("process {} has {n} reads, no read #{}", c.proc.0, c.read),
                    ))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Validates an outcome expression against this case's program.
    pub fn parse_outcome(&self, text: &str) -> Result<OutcomeExpr> {
        let expr = parse_outcome_expr(text.split_whitespace(), 0)?;
        self.check_expr(&expr, 0)?;
        Ok(expr)
    }
}

fn parse_condition(tok: &str, line: usize) -> Result<ReadCondition> {
    let bad = || parse_err(line, format!("expected p:k=v, found {tok:?}"));
    let (p, rest) = tok.split_once(':').ok_or_else(bad)?;
    let (k, v) = rest.split_once('=').ok_or_else(bad)?;
    Ok(ReadCondition {
        proc: ProcId(p.parse().map_err(|_| bad())?),
        read: k.parse().map_err(|_| bad())?,
        value: v.parse().map_err(|_| bad())?,
    })
}

fn parse_outcome_expr<'a>(toks: impl Iterator<Item = &'a str>, line: usize) -> Result<OutcomeExpr> {
    let mut conds = toks.map(|t| parse_condition(t, line)).collect::<Result<Vec<_>>>()?;
    conds.sort();
    conds.dedup();
    Ok(OutcomeExpr(conds))
}

pub fn parse_litmus(text: &str) -> Result<LitmusCase> {
    let mut name = String::new();
    let mut model = ModelName::Sc;
    let mut declared: Option<BTreeSet<Var>> = None;
    let mut program_text = String::new();
    let mut outcome_lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let f: Vec<&str> = raw.split('#').next().unwrap_or("").split_whitespace().collect();
        let mut keep = true;
        match f.as_slice() {
            ["name", n] => {
                name = n.to_string();
                keep = false;
            }
            ["model", m] => {
                model = m.parse().map_err(|e: Error| parse_err(line, e.to_string()))?;
                keep = false;
            }
            ["outcome", exp, conds @ ..] => {
                let exp: Expectation = exp.parse().map_err(|e: Error| parse_err(line, e.to_string()))?;
                outcome_lines.push((line, exp, parse_outcome_expr(conds.iter().copied(), line)?));
                keep = false;
            }
            ["vars", vs @ ..] => declared
                .get_or_insert_with(BTreeSet::new)
                .extend(vs.iter().map(|v| Var::new(v))),
            ["W" | "R" | "init", x, ..] => {
                if let Some(d) = &declared {
                    if !d.contains(&Var::new(x)) {
                        return Err(parse_err(line, format!("undeclared variable {x}")));
                    }
                }
            }
            _ => {}
        }
        // blank lines keep the program parser's line numbers aligned
        if keep {
            program_text.push_str(raw);
        }
        program_text.push('\n');
    }
    let mut case = LitmusCase {
        name,
        program: parse_program(&program_text)?,
        model,
        outcomes: Vec::new(),
    };
    for (line, expectation, expr) in outcome_lines {
        case.check_expr(&expr, line)?;
        case.outcomes.push(OutcomeSpec { expr, expectation });
    }
    Ok(case)
}

pub fn format_litmus(case: &LitmusCase) -> String {
    let mut out = String::new();
    if !case.name.is_empty() {
        let _ = writeln!(out, "name {}", case.name);
    }
    let _ = writeln!(out, "model {}", case.model);
    out.push_str(&crate::transform::format_program(&case.program));
    for o in &case.outcomes {
        let _ = writeln!(out, "outcome {} {}", o.expectation, o.expr);
    }
    out
}

/// The specification computation in which every read returns the value the
/// expression assigns it. Absent unless every read is constrained.
pub fn outcome_computation(prog: &SpecProgram, expr: &OutcomeExpr) -> Option<Computation> {
    let values: BTreeMap<(ProcId, usize), Value> = expr.0.iter().map(|c| ((c.proc, c.read), c.value)).collect();
    let mut c = Computation::new();
    for (x, v) in &prog.initial {
        c.set_initial(x.clone(), *v);
    }
    for (p, instrs) in prog.procs.iter().enumerate() {
        let p = ProcId(p as u32);
        c.add_process(p);
        let mut reads = 0;
        for instr in instrs {
            let kind = match instr {
                SpecInstr::Write(x, v) => OpKind::Write {
                    var: x.clone(),
                    value: *v,
                },
                SpecInstr::Read(x) => {
                    let value = *values.get(&(p, reads))?;
                    reads += 1;
                    OpKind::Read { var: x.clone(), value }
                }
            };
            c.push(p, ThreadId(0), kind);
        }
    }
    Some(c)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CheckLevel {
    /// Interpreted specification computation against PC[K].
    Pc,
    /// Broadcast-level computation against POB[L(K)].
    Pob,
    /// Network-level computation against NW.
    Nw,
}

impl fmt::Display for CheckLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckLevel::Pc => "pc",
            CheckLevel::Pob => "pob",
            CheckLevel::Nw => "nw",
        })
    }
}

impl FromStr for CheckLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pc" => Ok(CheckLevel::Pc),
            "pob" => Ok(CheckLevel::Pob),
            "nw" => Ok(CheckLevel::Nw),
            _ => Err(Error::Domain(format!("unknown check level {s:?}"))),
        }
    }
}

/// The computation a trace exhibits at `level`, with the program's initial
/// values carried onto the replicas.
pub fn level_computation(t: &Trace, level: CheckLevel, prog: &SpecProgram) -> Result<Computation> {
    let mut c = match level {
        CheckLevel::Pc => return interpret(t, prog),
        CheckLevel::Pob => extract_computation(t, Level::Pob)?,
        CheckLevel::Nw => extract_computation(t, Level::Network)?,
    };
    for x in &prog.universe {
        c.set_initial(replica(x), prog.initial_value(x));
    }
    Ok(c)
}

pub fn check_trace(t: &Trace, level: CheckLevel, prog: &SpecProgram, k: &PartitionSpec) -> Result<Verdict> {
    let c = level_computation(t, level, prog)?;
    match level {
        CheckLevel::Pc => check_pc(&c, k),
        CheckLevel::Pob => check_pob(&c, &k.labels()),
        CheckLevel::Nw => check_nw(&c),
    }
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub checks: Vec<CheckLevel>,
    /// Persist every trace here. Traces of failing seeds are always
    /// persisted, under the system temp directory when this is unset.
    pub trace_dir: Option<PathBuf>,
    pub max_steps: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            checks: Vec::new(),
            trace_dir: None,
            max_steps: crate::sim::SimConfig::new(0).max_steps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeedResult {
    pub seed: u64,
    /// Absent when the simulation itself failed.
    pub outcome: Option<Outcome>,
    pub steps: u64,
    pub reads: Option<RunOutcome>,
    pub verdicts: Vec<(CheckLevel, VerdictState)>,
    pub monitors: MonitorReport,
    pub error: Option<String>,
    /// Expectations this seed's outcome contradicts.
    pub violations: Vec<OutcomeSpec>,
    pub trace_path: Option<PathBuf>,
}

impl SeedResult {
    pub fn failed(&self) -> bool {
        !self.violations.is_empty()
            || !self.monitors.passed()
            || self.error.is_some()
            || self.verdicts.iter().any(|(_, s)| *s == VerdictState::Unsatisfied)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunReport {
    pub case: String,
    pub model: ModelName,
    pub stack: Stack,
    pub seeds_requested: usize,
    /// Sorted by seed.
    pub seeds: Vec<SeedResult>,
}

impl RunReport {
    /// Outcome counts over seeds that reached quiescence.
    pub fn histogram(&self) -> BTreeMap<RunOutcome, usize> {
        let mut h = BTreeMap::new();
        for r in &self.seeds {
            if let Some(o) = &r.reads {
                *h.entry(o.clone()).or_insert(0) += 1;
            }
        }
        h
    }

    pub fn completed(&self) -> usize {
        self.seeds.iter().filter(|r| r.reads.is_some()).count()
    }

    pub fn non_quiescent(&self) -> impl Iterator<Item = &SeedResult> {
        self.seeds.iter().filter(|r| r.outcome != Some(Outcome::Quiescent))
    }

    pub fn verdict_counts(&self) -> BTreeMap<(CheckLevel, VerdictState), usize> {
        let mut m = BTreeMap::new();
        for r in &self.seeds {
            for v in &r.verdicts {
                *m.entry(*v).or_insert(0) += 1;
            }
        }
        m
    }

    pub fn failing(&self) -> impl Iterator<Item = &SeedResult> {
        self.seeds.iter().filter(|r| r.failed())
    }

    /// No forbidden or unreachable outcome, monitor failure, simulation
    /// error or unsatisfied check.
    pub fn passed(&self) -> bool {
        self.failing().next().is_none()
    }
}

fn trace_file(dir: &Path, case: &str, stack: Stack, seed: u64) -> PathBuf {
    let name = if case.is_empty() { "case" } else { case };
    dir.join(format!("{name}-{}-{}-{seed}.trace", stack.transform, stack.backend))
}

fn persist(dir: &Path, case: &str, stack: Stack, seed: u64, t: &Trace) -> Result<PathBuf> {
    let path = trace_file(dir, case, stack, seed);
    fs::create_dir_all(dir)
        .and_then(|()| fs::write(&path, format_trace(t)))
        .map_err(|e| Error::Sim(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn target_config(stack: Stack, seed: u64, opts: &RunOptions) -> TargetConfig {
    let mut cfg = TargetConfig::new(stack, seed);
    cfg.sim.max_steps = opts.max_steps;
    cfg
}

/// One seeded run: simulate, monitor, interpret, check.
pub fn run_seed(case: &LitmusCase, k: &PartitionSpec, stack: Stack, seed: u64, opts: &RunOptions) -> SeedResult {
    let mut r = SeedResult {
        seed,
        outcome: None,
        steps: 0,
        reads: None,
        verdicts: Vec::new(),
        monitors: MonitorReport::default(),
        error: None,
        violations: Vec::new(),
        trace_path: None,
    };
    let trace = match simulate(&case.program, k, &target_config(stack, seed, opts)) {
        Ok(t) => t,
        Err(e) => {
            r.error = Some(e.to_string());
            return r;
        }
    };
    r.outcome = trace.outcome;
    r.steps = trace.steps;
    r.monitors = monitor_trace(&trace, stack, k);
    if trace.quiescent() {
        match interpret(&trace, &case.program) {
            Ok(c) => {
                let o = run_outcome(&c, case.program.nprocs());
                r.violations = case
                    .outcomes
                    .iter()
                    .filter(|s| s.expectation.is_violation() && s.expr.matches(&o))
                    .cloned()
                    .collect();
                r.reads = Some(o);
            }
            Err(e) => r.error = Some(e.to_string()),
        }
        for &level in &opts.checks {
            match check_trace(&trace, level, &case.program, k) {
                Ok(v) => r.verdicts.push((level, v.state)),
                Err(e) => r.error = Some(format!("{level} check: {e}")),
            }
        }
    }
    let dir = match &opts.trace_dir {
        Some(d) => Some(d.clone()),
        None if r.failed() => Some(std::env::temp_dir().join("partcon-traces")),
        None => None,
    };
    if let Some(dir) = dir {
        match persist(&dir, &case.name, stack, seed, &trace) {
            Ok(p) => r.trace_path = Some(p),
            Err(e) => r.error = Some(e.to_string()),
        }
    }
    r
}

/// Runs `seeds` in parallel; the report is ordered by seed.
pub fn run_case(case: &LitmusCase, stack: Stack, seeds: &[u64], opts: &RunOptions) -> RunReport {
    let k = case.partition();
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let results = sorted
        .par_iter()
        .map(|&seed| run_seed(case, &k, stack, seed, opts))
        .collect();
    RunReport {
        case: case.name.clone(),
        model: case.model.clone(),
        stack,
        seeds_requested: seeds.len(),
        seeds: results,
    }
}

/// The least seed in `0..budget` whose quiescent run exhibits `expr`.
pub fn seed_search(case: &LitmusCase, stack: Stack, expr: &OutcomeExpr, budget: u64, opts: &RunOptions) -> Option<u64> {
    let k = case.partition();
    (0..budget).into_par_iter().find_first(|&seed| {
        simulate(&case.program, &k, &target_config(stack, seed, opts))
            .ok()
            .filter(Trace::quiescent)
            .and_then(|t| interpret(&t, &case.program).ok())
            .is_some_and(|c| expr.matches(&run_outcome(&c, case.program.nprocs())))
    })
}

/// `A..B` (exclusive), `A..=B`, or a single seed.
pub fn parse_seed_range(s: &str) -> Result<Vec<u64>> {
    let num = |t: &str| {
        t.trim()
            .parse::<u64>()
            .map_err(|_| Error::Domain(format!("bad seed range {s:?}")))
    };
    if let Some((a, b)) = s.split_once("..=") {
        Ok((num(a)?..=num(b)?).collect())
    } else if let Some((a, b)) = s.split_once("..") {
        Ok((num(a)?..num(b)?).collect())
    } else {
        Ok(vec![num(s)?])
    }
}

/// Checker verdict of each fully determined expected outcome under the
/// case's model.
pub fn expectation_verdicts(case: &LitmusCase) -> Vec<(OutcomeSpec, Option<VerdictState>)> {
    let k = case.partition();
    case.outcomes
        .iter()
        .map(|s| {
            let v = outcome_computation(&case.program, &s.expr)
                .and_then(|c| check_pc(&c, &k).ok())
                .map(|v| v.state);
            (s.clone(), v)
        })
        .collect()
}

fn seeds_line(r: &RunReport) -> String {
    let failed_sims = r.seeds.iter().filter(|s| s.outcome.is_none()).count();
    let nq = r.non_quiescent().count() - failed_sims;
    format!(
        "seeds {} completed {} non-quiescent {} errors {}",
        r.seeds_requested,
        r.completed(),
        nq,
        r.seeds.iter().filter(|s| s.error.is_some()).count()
    )
}

/// Stable text rendering; byte-identical for identical inputs.
pub fn report(reports: &[RunReport]) -> String {
    if reports.is_empty() {
        return "# no runs\n".to_string();
    }
    let mut out = String::new();
    for r in reports {
        let _ = writeln!(out, "case {} model {} stack {}", r.case, r.model, r.stack);
        let _ = writeln!(out, "{}", seeds_line(r));
        for (o, n) in r.histogram() {
            let _ = writeln!(out, "outcome {o} count {n}");
        }
        for ((level, state), n) in r.verdict_counts() {
            let _ = writeln!(out, "check {level} {state} {n}");
        }
        let mut monitor_failures: BTreeMap<&str, usize> = BTreeMap::new();
        for s in &r.seeds {
            for f in s.monitors.failures() {
                *monitor_failures.entry(f.name).or_insert(0) += 1;
            }
        }
        for (name, n) in &monitor_failures {
            let _ = writeln!(out, "monitor {name} failed {n}");
        }
        for s in r.non_quiescent() {
            let what = s.outcome.map_or("error".to_string(), |o| o.to_string());
            let _ = writeln!(out, "seed {} {what} steps {}", s.seed, s.steps);
        }
        for s in r.failing() {
            let path = s
                .trace_path
                .as_ref()
                .map_or("-".to_string(), |p| p.display().to_string());
            for v in &s.violations {
                let _ = writeln!(out, "violation seed {} {} {} trace {path}", s.seed, v.expectation, v.expr);
            }
            for f in s.monitors.failures() {
                let _ = writeln!(
                    out,
                    "violation seed {} monitor {} trace {path}: {}",
                    s.seed,
                    f.name,
                    f.violation.as_deref().unwrap_or("")
                );
            }
            for (level, state) in &s.verdicts {
                if *state == VerdictState::Unsatisfied {
                    let _ = writeln!(out, "violation seed {} check {level} unsatisfied trace {path}", s.seed);
                }
            }
            if let Some(e) = &s.error {
                let _ = writeln!(out, "error seed {} {e}", s.seed);
            }
        }
        let _ = writeln!(out, "result {}", if r.passed() { "pass" } else { "fail" });
        out.push('\n');
    }
    out
}

/// Structured sibling of [`report`].
pub fn report_json(reports: &[RunReport]) -> serde_json::Value {
    let runs: Vec<serde_json::Value> = reports
        .iter()
        .map(|r| {
            let histogram: Vec<_> = r
                .histogram()
                .into_iter()
                .map(|(o, n)| json!({ "reads": o.0, "count": n }))
                .collect();
            let seeds: Vec<_> = r
                .seeds
                .iter()
                .map(|s| {
                    json!({
                        "seed": s.seed,
                        "outcome": s.outcome.map(|o| o.to_string()),
                        "steps": s.steps,
                        "reads": s.reads.as_ref().map(|o| o.0.clone()),
                        "verdicts": s.verdicts.iter()
                            .map(|(l, v)| json!({ "level": l.to_string(), "state": v }))
                            .collect::<Vec<_>>(),
                        "monitor_failures": s.monitors.failures()
                            .map(|f| json!({ "name": f.name, "violation": f.violation }))
                            .collect::<Vec<_>>(),
                        "violations": s.violations.iter()
                            .map(|v| json!({ "expectation": v.expectation.to_string(), "outcome": v.expr.to_string() }))
                            .collect::<Vec<_>>(),
                        "error": s.error,
                        "trace": s.trace_path.as_ref().map(|p| p.display().to_string()),
                    })
                })
                .collect();
            json!({
                "case": r.case,
                "model": r.model.to_string(),
                "stack": r.stack.to_string(),
                "seeds_requested": r.seeds_requested,
                "completed": r.completed(),
                "histogram": histogram,
                "passed": r.passed(),
                "seeds": seeds,
            })
        })
        .collect();
    json!({ "runs": runs })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SB: &str = "name sb\nmodel sc\nvars x y\nproc 0\nW x 1\nR y\nproc 1\nW y 1\nR x\noutcome forbidden 0:0=0 1:0=0\n";

    const CYCLIC: &str = "name cyclic\nmodel pram\nproc 0\nR x\nW y 2\nproc 1\nR y\nW x 1\noutcome unreachable 0:0=1 1:0=2\n";

    #[test]
    fn parses_cyclic_case() {
        let c = parse_litmus(CYCLIC).unwrap();
        assert_eq!(c.name, "cyclic");
        assert_eq!(c.model, ModelName::Pram);
        assert_eq!(c.outcomes.len(), 1);
        assert_eq!(c.outcomes[0].expectation, Expectation::Unreachable);
        assert_eq!(parse_litmus(&format_litmus(&c)).unwrap(), c);
    }

    #[test]
    fn empty_text_is_an_empty_case() {
        let c = parse_litmus("").unwrap();
        assert!(c.program.procs.is_empty());
        assert!(c.outcomes.is_empty());
    }

    #[test]
    fn out_of_range_read_is_rejected() {
        let text = "proc 0\nR x\nR y\noutcome allowed 0:5=1\n";
        assert!(matches!(parse_litmus(text), Err(Error::Parse { line: 4, .. })));
        assert!(parse_litmus("proc 0\nR x\noutcome allowed 1:0=0\n").is_err());
    }

    #[test]
    fn undeclared_variable_is_rejected() {
        let e = parse_litmus("vars x\nproc 0\nW y 1\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }));
    }

    #[test]
    fn bad_syntax_reports_line() {
        assert!(matches!(parse_litmus("proc 0\nX y\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_litmus("outcome maybe 0:0=1\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn outcome_matching() {
        let o = RunOutcome(vec![vec![1, 3], vec![0]]);
        let c = parse_litmus(SB).unwrap();
        assert!(!c.outcomes[0].expr.matches(&o));
        assert!(OutcomeExpr(vec![]).matches(&o));
        let e = parse_outcome_expr(["0:1=3", "1:0=0"].into_iter(), 0).unwrap();
        assert!(e.matches(&o));
        assert_eq!(o.to_string(), "0:1,3 1:0");
    }

    #[test]
    fn expectation_verdicts_come_from_the_checker() {
        let sb = parse_litmus(SB).unwrap();
        assert_eq!(expectation_verdicts(&sb)[0].1, Some(VerdictState::Unsatisfied));
        let cyc = parse_litmus(CYCLIC).unwrap();
        assert_eq!(expectation_verdicts(&cyc)[0].1, Some(VerdictState::Satisfied));
    }

    #[test]
    fn seed_ranges() {
        assert_eq!(parse_seed_range("3..6").unwrap(), vec![3, 4, 5]);
        assert_eq!(parse_seed_range("3..=4").unwrap(), vec![3, 4]);
        assert_eq!(parse_seed_range("7").unwrap(), vec![7]);
        assert!(parse_seed_range("a..b").is_err());
    }

    #[test]
    fn sb_under_sc_never_shows_zero_zero() {
        let c = parse_litmus(SB).unwrap();
        let opts = RunOptions {
            checks: vec![CheckLevel::Pc, CheckLevel::Pob, CheckLevel::Nw],
            ..RunOptions::default()
        };
        for stack in Stack::ALL {
            let r = run_case(&c, stack, &(0..25).collect::<Vec<_>>(), &opts);
            assert!(r.passed(), "{}", report(std::slice::from_ref(&r)));
            assert_eq!(r.histogram().values().sum::<usize>(), r.completed());
            assert_eq!(r.completed(), 25);
        }
    }

    #[test]
    fn reports_are_deterministic() {
        let c = parse_litmus(SB).unwrap();
        let seeds: Vec<u64> = (0..10).collect();
        let run = || run_case(&c, Stack::ALL[2], &seeds, &RunOptions::default());
        let (a, b) = (run(), run());
        assert_eq!(report(std::slice::from_ref(&a)), report(std::slice::from_ref(&b)));
        assert_eq!(report_json(&[a]), report_json(&[b]));
    }

    #[test]
    fn report_formats() {
        assert_eq!(report(&[]), "# no runs\n");
        let c = parse_litmus(SB).unwrap();
        let a = run_case(&c, Stack::ALL[0], &[1, 2], &RunOptions::default());
        let b = run_case(&c, Stack::ALL[3], &[1, 2], &RunOptions::default());
        let one = report(std::slice::from_ref(&a));
        assert!(one.starts_with("case sb model sc stack swfr+token\nseeds 2 completed 2"));
        assert!(one.ends_with("result pass\n\n"));
        let two = report(&[a, b]);
        assert_eq!(two.matches("result pass").count(), 2);
        assert!(two.contains("stack fwsr+timestamp"));
    }

    #[test]
    fn search_budget_zero_finds_nothing() {
        let c = parse_litmus(SB).unwrap();
        let e = c.outcomes[0].expr.clone();
        assert_eq!(seed_search(&c, Stack::ALL[0], &e, 0, &RunOptions::default()), None);
    }

    #[test]
    fn forbidden_outcome_is_reported_with_trace() {
        // every run of this program reads 1, which the case forbids
        let c = parse_litmus("name own\nproc 0\nW x 1\nR x\noutcome forbidden 0:0=1\n").unwrap();
        let dir = std::env::temp_dir().join(format!("partcon-litmus-test-{}", std::process::id()));
        let opts = RunOptions {
            trace_dir: Some(dir.clone()),
            ..RunOptions::default()
        };
        let r = run_case(&c, Stack::ALL[1], &[4], &opts);
        assert!(!r.passed());
        let text = report(std::slice::from_ref(&r));
        let path = r.seeds[0].trace_path.clone().unwrap();
        assert!(text.contains(&format!("violation seed 4 forbidden 0:0=1 trace {}", path.display())));
        assert!(path.exists());
        let _ = fs::remove_dir_all(dir);
    }
}
