//! Decides partition consistency, partial-order broadcast, and the network
//! model on recorded computations by searching for witness sequences.

mod causality;
mod witness;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

pub use causality::{causality, del_order, CausalityRelations};
pub use witness::{witness_search, AgreementClass, Budget, SearchOutcome, ViewInput, WitnessSet};

use crate::computation::{
    agree, extends, program_order, project, valid_sequence, Computation, Label, OpKind, OperationId, ProcId,
    Selector, Update,
};
use crate::error::{Error, Result};
use crate::partition::PartitionSpec;

pub const DEFAULT_NODE_BUDGET: u64 = 20_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictState {
    Satisfied,
    Unsatisfied,
    /// The node budget ran out before the search finished.
    Undecided,
}

impl fmt::Display for VerdictState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VerdictState::Satisfied => "satisfied",
            VerdictState::Unsatisfied => "unsatisfied",
            VerdictState::Undecided => "undecided",
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub nodes: u64,
    /// Some process ran more than one thread.
    pub multithreaded: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Verdict {
    pub state: VerdictState,
    /// Present exactly when `state` is `Satisfied`.
    pub witnesses: Option<WitnessSet>,
    pub stats: SearchStats,
}

impl Verdict {
    pub fn satisfied(&self) -> bool {
        self.state == VerdictState::Satisfied
    }

    fn rejected(c: &Computation) -> Self {
        Verdict {
            state: VerdictState::Unsatisfied,
            witnesses: None,
            stats: SearchStats {
                nodes: 0,
                multithreaded: c.is_multithreaded(),
            },
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CheckOptions {
    pub node_budget: u64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            node_budget: DEFAULT_NODE_BUDGET,
        }
    }
}

fn run_search(
    c: &Computation,
    views: &[ViewInput<'_>],
    agreement: &[AgreementClass],
    opts: &CheckOptions,
) -> Verdict {
    let mut budget = Budget::new(opts.node_budget);
    let outcome = witness_search(c, views, agreement, &mut budget);
    let stats = SearchStats {
        nodes: budget.used.min(budget.limit),
        multithreaded: c.is_multithreaded(),
    };
    match outcome {
        SearchOutcome::Found(w) => Verdict {
            state: VerdictState::Satisfied,
            witnesses: Some(w),
            stats,
        },
        SearchOutcome::NotFound => Verdict {
            state: VerdictState::Unsatisfied,
            witnesses: None,
            stats,
        },
        SearchOutcome::Exhausted => Verdict {
            state: VerdictState::Undecided,
            witnesses: None,
            stats,
        },
    }
}

fn require_kinds(c: &Computation, what: &str, ok: impl Fn(&OpKind) -> bool) -> Result<()> {
    match c.operations().find(|o| !ok(&o.kind)) {
        Some(o) => Err(Error::Domain(format!("{what} cannot judge operation {o}"))),
        None => Ok(()),
    }
}

pub fn check_pc(c: &Computation, k: &PartitionSpec) -> Result<Verdict> {
    check_pc_with(c, k, &CheckOptions::default())
}

/// Partition consistency: every process has a valid total order of its own
/// operations plus all writes, extending program order, and all processes
/// agree on the writes to each class of `k`.
pub fn check_pc_with(c: &Computation, k: &PartitionSpec, opts: &CheckOptions) -> Result<Verdict> {
    require_kinds(c, "PC", OpKind::is_read_write)?;
    let all = c.ids();
    let writes = project(c, &all, &Selector::AllWrites)?;
    let po = program_order(c);
    let views = pc_domains(c, &all, &writes)?
        .into_iter()
        .map(|(owner, domain)| ViewInput {
            owner,
            domain,
            base: &po,
        })
        .collect::<Vec<_>>();
    let mut agreement = Vec::new();
    for i in 1..=k.len() as u32 {
        let class = project(c, &all, &Selector::WritesToClass(k, i))?;
        agreement.push(AgreementClass {
            items: class.into_iter().map(|w| vec![w]).collect(),
        });
    }
    Ok(run_search(c, &views, &agreement, opts))
}

fn pc_domains(
    c: &Computation,
    all: &[OperationId],
    writes: &[OperationId],
) -> Result<Vec<(ProcId, Vec<OperationId>)>> {
    c.processes()
        .map(|p| {
            let mut domain = project(c, all, &Selector::ByProcess(p))?;
            domain.extend(writes.iter().copied().filter(|w| w.proc != p));
            domain.sort();
            Ok((p, domain))
        })
        .collect()
}

pub fn check_pob(c: &Computation, labels: &[Label]) -> Result<Verdict> {
    check_pob_with(c, labels, &CheckOptions::default())
}

/// Partial-order broadcast over label set `labels`.
pub fn check_pob_with(c: &Computation, labels: &[Label], opts: &CheckOptions) -> Result<Verdict> {
    require_kinds(c, "POB", |k| {
        matches!(
            k,
            OpKind::Read { .. } | OpKind::Write { .. } | OpKind::Bcast { .. } | OpKind::Deliver { .. }
        )
    })?;
    if !bcast_deliver_match(c) {
        return Ok(Verdict::rejected(c));
    }
    let mut base = program_order(c);
    base.union_with(&del_order(c));
    let all = c.ids();
    let views = c
        .processes()
        .map(|p| {
            Ok(ViewInput {
                owner: p,
                domain: project(c, &all, &Selector::ByProcess(p))?,
                base: &base,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let agreement = pob_agreement(c, labels);
    Ok(run_search(c, &views, &agreement, opts))
}

/// Each labeled update is one item; its members are its delivers at every process.
fn pob_agreement(c: &Computation, labels: &[Label]) -> Vec<AgreementClass> {
    labels
        .iter()
        .filter(|l| !l.is_null())
        .map(|l| {
            let mut items: BTreeMap<&Update, Vec<OperationId>> = BTreeMap::new();
            for op in c.operations() {
                if let OpKind::Deliver { update, label } = &op.kind {
                    if label == l {
                        items.entry(update).or_default().push(op.id);
                    }
                }
            }
            AgreementClass {
                items: items.into_values().collect(),
            }
        })
        .collect()
}

/// Every process delivers exactly the multiset of broadcast updates, and
/// no update is broadcast twice.
fn bcast_deliver_match(c: &Computation) -> bool {
    let mut bcast = BTreeSet::new();
    for op in c.operations() {
        if let OpKind::Bcast { update, label } = &op.kind {
            if !bcast.insert((update, *label)) {
                return false;
            }
        }
    }
    c.processes().all(|p| {
        let mut delivered = BTreeSet::new();
        for op in c.operations().filter(|o| o.id.proc == p) {
            if let OpKind::Deliver { update, label } = &op.kind {
                if !delivered.insert((update, *label)) {
                    return false;
                }
            }
        }
        delivered == bcast
    })
}

pub fn check_nw(c: &Computation) -> Result<Verdict> {
    check_nw_with(c, &CheckOptions::default())
}

/// Network model: each process's view of its own operations extends
/// happens-before, and the received messages are exactly those sent.
pub fn check_nw_with(c: &Computation, opts: &CheckOptions) -> Result<Verdict> {
    require_kinds(c, "NW", |k| {
        matches!(
            k,
            OpKind::Read { .. } | OpKind::Write { .. } | OpKind::Send { .. } | OpKind::Recv { .. }
        )
    })?;
    let (sent, recv, unique) = causality::message_sets(c);
    if !unique || sent != recv {
        return Ok(Verdict::rejected(c));
    }
    let rel = causality(c)?;
    let all = c.ids();
    let views = c
        .processes()
        .map(|p| {
            Ok(ViewInput {
                owner: p,
                domain: project(c, &all, &Selector::ByProcess(p))?,
                base: &rel.happens_before,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(run_search(c, &views, &[], opts))
}

// Independent re-validation of returned witnesses. These work from the
// definitions directly and share nothing with the search beyond the
// relation builders.

fn check_view_shape(c: &Computation, w: &WitnessSet, p: ProcId, domain: &[OperationId]) -> Result<(), String> {
    let seq = w.views.get(&p).ok_or_else(|| format!("no view for process {p}"))?;
    let mut sorted = seq.clone();
    sorted.sort();
    if sorted != domain {
        return Err(format!("view of {p} does not cover its domain exactly"));
    }
    if !valid_sequence(seq.iter().map(|id| c.op(*id)), c.initial_values()) {
        return Err(format!("view of {p} is not a valid sequence"));
    }
    Ok(())
}

pub fn verify_pc(c: &Computation, k: &PartitionSpec, w: &WitnessSet) -> Result<(), String> {
    let all = c.ids();
    let writes = project(c, &all, &Selector::AllWrites).map_err(|e| e.to_string())?;
    let po = program_order(c);
    let mut orders = BTreeMap::new();
    for (p, domain) in pc_domains(c, &all, &writes).map_err(|e| e.to_string())? {
        check_view_shape(c, w, p, &domain)?;
        let lp = w.order(p).expect("view present");
        if !extends(&domain, &lp, &po) {
            return Err(format!("view of {p} does not extend program order"));
        }
        orders.insert(p, lp);
    }
    for i in 1..=k.len() as u32 {
        let class = project(c, &all, &Selector::WritesToClass(k, i)).map_err(|e| e.to_string())?;
        for (p, lp) in &orders {
            for (q, lq) in &orders {
                if !agree(&class, lp, lq) {
                    return Err(format!("views of {p} and {q} disagree on class {i}"));
                }
            }
        }
    }
    Ok(())
}

pub fn verify_pob(c: &Computation, labels: &[Label], w: &WitnessSet) -> Result<(), String> {
    if !bcast_deliver_match(c) {
        return Err("bcast/deliver sets do not match".into());
    }
    let all = c.ids();
    let mut base = program_order(c);
    base.union_with(&del_order(c));
    let mut position: BTreeMap<ProcId, BTreeMap<OperationId, usize>> = BTreeMap::new();
    for p in c.processes() {
        let domain = project(c, &all, &Selector::ByProcess(p)).map_err(|e| e.to_string())?;
        check_view_shape(c, w, p, &domain)?;
        let lp = w.order(p).expect("view present");
        if !extends(&domain, &lp, &base) {
            return Err(format!("view of {p} does not extend program and delivery order"));
        }
        position.insert(p, w.views[&p].iter().enumerate().map(|(i, id)| (*id, i)).collect());
    }
    // agreement is on the relative order of same-labeled updates
    for l in labels.iter().filter(|l| !l.is_null()) {
        let mut seqs: Vec<Vec<&Update>> = Vec::new();
        for p in c.processes() {
            let mut dels: Vec<(usize, &Update)> = c
                .operations()
                .filter(|o| o.id.proc == p)
                .filter_map(|o| match &o.kind {
                    OpKind::Deliver { update, label } if label == l => Some((position[&p][&o.id], update)),
                    _ => None,
                })
                .collect();
            dels.sort();
            seqs.push(dels.into_iter().map(|(_, u)| u).collect());
        }
        if seqs.windows(2).any(|pair| pair[0] != pair[1]) {
            return Err(format!("views disagree on label {l}"));
        }
    }
    Ok(())
}

pub fn verify_nw(c: &Computation, w: &WitnessSet) -> Result<(), String> {
    let (sent, recv, unique) = causality::message_sets(c);
    if !unique || sent != recv {
        return Err("sent and received messages differ".into());
    }
    let rel = causality(c).map_err(|e| e.to_string())?;
    let all = c.ids();
    for p in c.processes() {
        let domain = project(c, &all, &Selector::ByProcess(p)).map_err(|e| e.to_string())?;
        check_view_shape(c, w, p, &domain)?;
        let lp = w.order(p).expect("view present");
        if !extends(&domain, &lp, &rel.happens_before) {
            return Err(format!("view of {p} does not extend happens-before"));
        }
    }
    Ok(())
}

/// `verdict <state>` followed by each witness view in operation-record form.
pub fn format_verdict(c: &Computation, v: &Verdict) -> String {
    let mut out = format!("verdict {}\n", v.state);
    let _ = writeln!(out, "# nodes {}", v.stats.nodes);
    if v.stats.multithreaded {
        out.push_str("# multithreaded processes: definition applied literally\n");
    }
    if let Some(w) = &v.witnesses {
        for (p, seq) in &w.views {
            let _ = writeln!(out, "view {p}");
            for id in seq {
                let _ = writeln!(out, "{}", c.op(*id));
            }
        }
    }
    out
}
