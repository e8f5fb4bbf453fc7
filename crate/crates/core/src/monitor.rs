//! Trace-level invariant monitors for the network, both broadcast backends
//! and the transform.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::checker::causality;
use crate::computation::{Label, MsgId, ProcId, ThreadId, Update, Value, Var};
use crate::partition::PartitionSpec;
use crate::pob::{token, Backend, WireMessage};
use crate::sim::{extract_computation, Action, Level, Mark, Record, Trace};
use crate::transform::{replica, writes_processed, writes_requested, Stack, TransformVariant};

pub type Check = Result<(), String>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MonitorResult {
    pub name: &'static str,
    pub violation: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MonitorReport {
    pub results: Vec<MonitorResult>,
}

impl MonitorReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.violation.is_none())
    }

    pub fn failures(&self) -> impl Iterator<Item = &MonitorResult> {
        self.results.iter().filter(|r| r.violation.is_some())
    }

    fn push(&mut self, name: &'static str, check: Check) {
        self.results.push(MonitorResult {
            name,
            violation: check.err(),
        });
    }
}

impl fmt::Display for MonitorReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.results {
            match &r.violation {
                None => writeln!(f, "monitor {} ok", r.name)?,
                Some(v) => writeln!(f, "monitor {} FAIL {v}", r.name)?,
            }
        }
        Ok(())
    }
}

/// Runs every monitor that applies to `stack`. Monitors that only make
/// sense on completed runs are skipped for non-quiescent traces.
pub fn monitor_trace(t: &Trace, stack: Stack, k: &PartitionSpec) -> MonitorReport {
    let mut r = MonitorReport::default();
    r.push("fifo-uniqueness", fifo_and_uniqueness(t));
    r.push("hb-acyclic", happens_before_acyclic(t));
    r.push("labeled-delivery-agreement", labeled_delivery_agreement(t));
    r.push("counter-safety", counter_safety(t));
    match stack.backend {
        Backend::Token => {
            r.push("token-chain", token_chain(t));
            r.push("ack-bracket", acks_bracket(t));
        }
        Backend::Timestamp => {
            r.push("ts-monotone", timestamps_increasing(t));
            r.push("counter-consecutive", counters_consecutive(t));
            r.push("ts-label-agreement", ts_label_agreement(t));
        }
    }
    if stack.transform == TransformVariant::Swfr {
        r.push("swfr-bracket", swfr_bracketing(t));
    }
    if t.quiescent() {
        r.push("eventual-delivery", eventual_delivery(t));
        r.push("replica-convergence", replica_convergence(t, k));
    }
    r
}

fn wire(w: &str) -> Result<WireMessage, String> {
    w.parse().map_err(|e| format!("{e}"))
}

/// Per channel, received ids are a prefix of sent ids in send order, and no
/// message is received twice.
pub fn fifo_and_uniqueness(t: &Trace) -> Check {
    let mut sent: BTreeMap<(ProcId, ProcId), Vec<MsgId>> = BTreeMap::new();
    let mut recv: BTreeMap<(ProcId, ProcId), Vec<MsgId>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for r in &t.records {
        match &r.action {
            Action::Send { dst, msg, .. } => sent.entry((r.proc, *dst)).or_default().push(*msg),
            Action::Recv { src, msg, .. } => {
                if !seen.insert(*msg) {
                    return Err(format!("message {msg} received twice (record {})", r.n));
                }
                recv.entry((*src, r.proc)).or_default().push(*msg);
            }
            _ => {}
        }
    }
    for (ch, got) in &recv {
        let s = sent.get(ch).map(Vec::as_slice).unwrap_or(&[]);
        if !s.starts_with(got) {
            return Err(format!("channel {}->{} received out of send order", ch.0, ch.1));
        }
    }
    Ok(())
}

pub fn happens_before_acyclic(t: &Trace) -> Check {
    let c = extract_computation(t, Level::Network).map_err(|e| e.to_string())?;
    let rel = causality(&c).map_err(|e| e.to_string())?;
    if rel.happens_before.is_acyclic() {
        Ok(())
    } else {
        Err("happens-before has a cycle".into())
    }
}

fn delivered(t: &Trace) -> BTreeMap<ProcId, Vec<(Update, Label)>> {
    let mut out: BTreeMap<ProcId, Vec<(Update, Label)>> = BTreeMap::new();
    for (r, m) in t.marks() {
        if let Mark::Deliver { update, label } = m {
            out.entry(r.proc).or_default().push((update.clone(), *label));
        }
    }
    out
}

/// Any two processes deliver their common same-labeled updates in the same order.
pub fn labeled_delivery_agreement(t: &Trace) -> Check {
    let per_proc = delivered(t);
    let labels: BTreeSet<Label> = per_proc.values().flatten().map(|(_, l)| *l).filter(|l| !l.is_null()).collect();
    for l in labels {
        let seqs: Vec<(ProcId, Vec<&Update>)> = per_proc
            .iter()
            .map(|(p, ds)| (*p, ds.iter().filter(|(_, dl)| *dl == l).map(|(u, _)| u).collect()))
            .collect();
        for (i, (p, a)) in seqs.iter().enumerate() {
            for (q, b) in &seqs[i + 1..] {
                let in_b: BTreeSet<&Update> = b.iter().copied().collect();
                let in_a: BTreeSet<&Update> = a.iter().copied().collect();
                let ra: Vec<_> = a.iter().filter(|u| in_b.contains(*u)).collect();
                let rb: Vec<_> = b.iter().filter(|u| in_a.contains(*u)).collect();
                if ra != rb {
                    return Err(format!("processes {p} and {q} disagree on label {l}"));
                }
            }
        }
    }
    Ok(())
}

/// In quiescent runs every process delivers exactly the broadcast multiset.
pub fn eventual_delivery(t: &Trace) -> Check {
    let mut bcast: Vec<(Update, Label)> = t
        .marks()
        .filter_map(|(_, m)| match m {
            Mark::Bcast { update, label } => Some((update.clone(), *label)),
            _ => None,
        })
        .collect();
    bcast.sort();
    let per_proc = delivered(t);
    for p in 0..t.nprocs {
        let mut got = per_proc.get(&ProcId(p)).cloned().unwrap_or_default();
        got.sort();
        if got != bcast {
            return Err(format!(
                "process {p} delivered {} updates, {} were broadcast",
                got.len(),
                bcast.len()
            ));
        }
    }
    Ok(())
}

/// `wproc <= wreq` after every write to either; equal at the end of a quiescent run.
pub fn counter_safety(t: &Trace) -> Check {
    let (req, done) = (writes_requested(), writes_processed());
    let mut state: BTreeMap<ProcId, (Value, Value)> = BTreeMap::new();
    for r in &t.records {
        if let Action::Write { var, value } = &r.action {
            let s = state.entry(r.proc).or_default();
            if *var == req {
                s.0 = *value;
            } else if *var == done {
                s.1 = *value;
            } else {
                continue;
            }
            if s.1 > s.0 {
                return Err(format!("process {} processed {} of {} writes (record {})", r.proc, s.1, s.0, r.n));
            }
        }
    }
    if t.quiescent() {
        if let Some((p, s)) = state.iter().find(|(_, s)| s.0 != s.1) {
            return Err(format!("process {p} ended with {} of {} writes processed", s.1, s.0));
        }
    }
    Ok(())
}

/// At quiescence every replica of a partitioned variable holds the same value.
pub fn replica_convergence(t: &Trace, k: &PartitionSpec) -> Check {
    let mut last: BTreeMap<(Var, ProcId), Value> = BTreeMap::new();
    for r in &t.records {
        if let Action::Write { var, value } = &r.action {
            last.insert((var.clone(), r.proc), *value);
        }
    }
    for x in k.classes().iter().flatten() {
        let rx = replica(x);
        let finals: BTreeSet<Option<Value>> = (0..t.nprocs)
            .map(|p| last.get(&(rx.clone(), ProcId(p))).copied())
            .collect();
        if finals.len() > 1 {
            return Err(format!("replicas of {x} diverge: {finals:?}"));
        }
    }
    Ok(())
}

/// Under SWFR a write returns only after its own update was delivered locally.
pub fn swfr_bracketing(t: &Trace) -> Check {
    let mut pending: BTreeMap<(ProcId, ThreadId), Update> = BTreeMap::new();
    let mut own_delivered: BTreeSet<(ProcId, Update)> = BTreeSet::new();
    for (r, m) in t.marks() {
        match m {
            Mark::Bcast { update, .. } => {
                pending.insert((r.proc, r.thread), update.clone());
            }
            Mark::Deliver { update, .. } if update.source == r.proc => {
                own_delivered.insert((r.proc, update.clone()));
            }
            Mark::SpecWrite { .. } => {
                let u = pending
                    .remove(&(r.proc, r.thread))
                    .ok_or_else(|| format!("write ending at record {} has no bcast", r.n))?;
                if !own_delivered.contains(&(r.proc, u.clone())) {
                    return Err(format!("write of {u} returned before its local delivery (record {})", r.n));
                }
            }
            _ => {}
        }
    }
    Ok(())
}

fn token_events(t: &Trace) -> Result<BTreeMap<Label, Vec<&Record>>, String> {
    let mut out: BTreeMap<Label, Vec<&Record>> = BTreeMap::new();
    for r in &t.records {
        let w = match &r.action {
            Action::Send { wire: w, .. } | Action::Recv { wire: w, .. } if w.starts_with("[TOKEN") => w,
            _ => continue,
        };
        if let WireMessage::Token { label } = wire(w)? {
            out.entry(label).or_default().push(r);
        }
    }
    Ok(out)
}

/// Per label, TOKEN events form one alternating send/receive chain that
/// starts at process 0 and always moves to the ring successor.
pub fn token_chain(t: &Trace) -> Check {
    for (l, events) in token_events(t)? {
        let mut holder = ProcId(0);
        let mut in_flight: Option<(MsgId, ProcId)> = None;
        for r in events {
            match (&r.action, in_flight) {
                (Action::Send { dst, msg, .. }, None) => {
                    if r.proc != holder || *dst != token::next(holder, t.nprocs) {
                        return Err(format!("token {l} sent by {} to {dst} out of turn (record {})", r.proc, r.n));
                    }
                    in_flight = Some((*msg, *dst));
                }
                (Action::Recv { msg, .. }, Some((m, dst))) if *msg == m && r.proc == dst => {
                    holder = dst;
                    in_flight = None;
                }
                _ => return Err(format!("token {l} chain broken at record {}", r.n)),
            }
        }
    }
    Ok(())
}

/// Every receipt of a labeled MESSAGE falls between the broadcaster's first
/// send of it and its last ACK for it.
pub fn acks_bracket(t: &Trace) -> Check {
    let mut first_send: BTreeMap<Update, u64> = BTreeMap::new();
    let mut last_ack: BTreeMap<Update, u64> = BTreeMap::new();
    let mut current: BTreeMap<(ProcId, ThreadId), Update> = BTreeMap::new();
    let mut receipts: Vec<(Update, u64)> = Vec::new();
    for r in &t.records {
        match &r.action {
            Action::Send { wire: w, .. } if w.starts_with("[MESSAGE") => {
                if let WireMessage::Message { update, label } = wire(w)? {
                    if !label.is_null() {
                        first_send.entry(update.clone()).or_insert(r.n);
                        current.insert((r.proc, r.thread), update);
                    }
                }
            }
            Action::Recv { wire: w, .. } if w == "[ACK]" => {
                let u = current
                    .get(&(r.proc, r.thread))
                    .ok_or_else(|| format!("ACK at record {} outside a labeled broadcast", r.n))?;
                last_ack.insert(u.clone(), r.n);
            }
            Action::Recv { wire: w, .. } if w.starts_with("[MESSAGE") => {
                if let WireMessage::Message { update, label } = wire(w)? {
                    if !label.is_null() {
                        receipts.push((update, r.n));
                    }
                }
            }
            _ => {}
        }
    }
    for (u, n) in receipts {
        let lo = first_send[&u];
        match last_ack.get(&u) {
            Some(&hi) if lo < n && n < hi => {}
            Some(&hi) => return Err(format!("receipt of {u} at {n} outside [{lo}, {hi}]")),
            // broadcaster still collecting acks when the run stopped
            None if !t.quiescent() => {}
            None => return Err(format!("labeled broadcast of {u} never acknowledged")),
        }
    }
    Ok(())
}

fn aux<'a>(t: &'a Trace, tag: &'a str) -> impl Iterator<Item = (&'a Record, &'a [i64])> + 'a {
    t.marks().filter_map(move |(r, m)| match m {
        Mark::Aux { tag: g, values } if g == tag => Some((r, values.as_slice())),
        _ => None,
    })
}

/// Per process and source, successive values written to `T[source]` strictly increase.
pub fn timestamps_increasing(t: &Trace) -> Check {
    let mut last: BTreeMap<(ProcId, i64), i64> = BTreeMap::new();
    for (r, v) in aux(t, "T") {
        let (src, ts) = (v[0], v[1]);
        if let Some(prev) = last.insert((r.proc, src), ts) {
            if ts <= prev {
                return Err(format!("T[{src}] at {} went from {prev} to {ts} (record {})", r.proc, r.n));
            }
        }
    }
    Ok(())
}

/// Per process and source, delivered counters run 1, 2, 3, ...
pub fn counters_consecutive(t: &Trace) -> Check {
    let mut last: BTreeMap<(ProcId, i64), i64> = BTreeMap::new();
    for (r, v) in aux(t, "deq") {
        let (src, counter) = (v[2], v[3]);
        let prev = last.insert((r.proc, src), counter).unwrap_or(0);
        if counter != prev + 1 {
            return Err(format!("process {} delivered counter {counter} from {src} after {prev}", r.proc));
        }
    }
    Ok(())
}

/// Per label, the dequeued `(ts, src)` sequences increase and each process's
/// sequence is a prefix of every longer one (identical at quiescence).
pub fn ts_label_agreement(t: &Trace) -> Check {
    let mut seqs: BTreeMap<i64, BTreeMap<ProcId, Vec<(i64, i64)>>> = BTreeMap::new();
    for (r, v) in aux(t, "deq") {
        if v[0] != 0 {
            seqs.entry(v[0]).or_default().entry(r.proc).or_default().push((v[1], v[2]));
        }
    }
    for (l, per_proc) in seqs {
        let mut longest: &[(i64, i64)] = &[];
        for (p, s) in &per_proc {
            if s.windows(2).any(|w| w[0] >= w[1]) {
                return Err(format!("process {p} dequeued label {l} out of (ts, src) order"));
            }
            if s.len() > longest.len() {
                longest = s;
            }
        }
        for (p, s) in &per_proc {
            if !longest.starts_with(s) {
                return Err(format!("process {p} dequeued label {l} in a different order"));
            }
            if t.quiescent() && s.len() != longest.len() {
                return Err(format!("process {p} missed label {l} elements"));
            }
        }
    }
    Ok(())
}
