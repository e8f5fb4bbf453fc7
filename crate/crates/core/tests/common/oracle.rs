//! Exhaustive reference deciders. Every view is found by enumerating all
//! orderings of a process's domain; nothing here calls the checker.

use std::collections::{BTreeMap, BTreeSet};

use partcon::computation::{Computation, Label, MsgId, OpKind, OperationId, ProcId, Update, Value, Var};

type Pairs = BTreeSet<(OperationId, OperationId)>;

fn ops_of(c: &Computation, p: ProcId) -> Vec<OperationId> {
    c.operations().filter(|o| o.id.proc == p).map(|o| o.id).collect()
}

fn writes(c: &Computation) -> Vec<OperationId> {
    c.operations().filter(|o| matches!(o.kind, OpKind::Write { .. })).map(|o| o.id).collect()
}

fn program_pairs(c: &Computation) -> Pairs {
    let mut pairs = BTreeSet::new();
    for a in c.operations() {
        for b in c.operations() {
            if a.id.proc == b.id.proc && a.id.thread == b.id.thread && a.id.index < b.id.index {
                pairs.insert((a.id, b.id));
            }
        }
    }
    pairs
}

/// Calls `f` on every permutation of `domain` that places `a` before `b`
/// for each pair in `before` with both ends in the domain. Stops early when
/// `f` returns true, and reports whether it did.
fn permutations(domain: &[OperationId], before: &Pairs, f: &mut dyn FnMut(&[OperationId]) -> bool) -> bool {
    fn go(
        rest: &mut Vec<OperationId>,
        seq: &mut Vec<OperationId>,
        before: &Pairs,
        f: &mut dyn FnMut(&[OperationId]) -> bool,
    ) -> bool {
        if rest.is_empty() {
            return f(seq);
        }
        for i in 0..rest.len() {
            let x = rest[i];
            if rest.iter().any(|&y| y != x && before.contains(&(y, x))) {
                continue;
            }
            rest.remove(i);
            seq.push(x);
            let done = go(rest, seq, before, f);
            seq.pop();
            rest.insert(i, x);
            if done {
                return true;
            }
        }
        false
    }
    // a strict order cannot honour a reflexive pair
    if domain.iter().any(|&x| before.contains(&(x, x))) {
        return false;
    }
    go(&mut domain.to_vec(), &mut Vec::new(), before, f)
}

/// Per-object sequential specifications.
fn valid(c: &Computation, seq: &[OperationId]) -> bool {
    let mut mem: BTreeMap<Var, Value> = BTreeMap::new();
    let mut sent: BTreeSet<MsgId> = BTreeSet::new();
    let mut received: BTreeSet<MsgId> = BTreeSet::new();
    let mut bcast: BTreeSet<Update> = BTreeSet::new();
    let mut delivered: BTreeSet<Update> = BTreeSet::new();
    let all_bcasts: BTreeSet<OperationId> = seq
        .iter()
        .filter(|id| matches!(c.op(**id).kind, OpKind::Bcast { .. }))
        .copied()
        .collect();
    for id in seq {
        let ok = match &c.op(*id).kind {
            OpKind::Write { var, value } => {
                mem.insert(var.clone(), *value);
                true
            }
            OpKind::Read { var, value } => {
                let cur = mem.get(var).copied().unwrap_or_else(|| c.initial_value(var));
                cur == *value
            }
            OpKind::Send { msg, .. } => sent.insert(*msg),
            OpKind::Recv { msg, .. } => received.insert(*msg),
            OpKind::Bcast { update, .. } => bcast.insert(update.clone()),
            OpKind::Deliver { update, .. } => {
                // a deliver may not precede its bcast when the bcast is in the sequence
                let pending = all_bcasts
                    .iter()
                    .any(|b| matches!(&c.op(*b).kind, OpKind::Bcast { update: u, .. } if u == update))
                    && !bcast.contains(update);
                !pending && delivered.insert(update.clone())
            }
        };
        if !ok {
            return false;
        }
    }
    true
}

/// True iff one agreement key is realisable by a valid view at every process.
fn exists_agreeing_views<K: Ord + Clone>(
    c: &Computation,
    domain_of: impl Fn(ProcId) -> Vec<OperationId>,
    before: &Pairs,
    key: impl Fn(&[OperationId]) -> K,
) -> bool {
    let mut common: Option<BTreeSet<K>> = None;
    for p in c.processes() {
        let mut keys = BTreeSet::new();
        permutations(&domain_of(p), before, &mut |seq| {
            if valid(c, seq) {
                keys.insert(key(seq));
            }
            false
        });
        let next: BTreeSet<K> = match common {
            None => keys,
            Some(prev) => prev.intersection(&keys).cloned().collect(),
        };
        if next.is_empty() {
            return false;
        }
        common = Some(next);
    }
    true
}

pub fn pc(c: &Computation, classes: &[BTreeSet<Var>]) -> bool {
    let all_writes = writes(c);
    let prog = program_pairs(c);
    exists_agreeing_views(
        c,
        |p| {
            let mut d = ops_of(c, p);
            d.extend(all_writes.iter().filter(|w| w.proc != p));
            d
        },
        &prog,
        |seq| {
            classes
                .iter()
                .map(|cls| {
                    seq.iter()
                        .filter(|id| match &c.op(**id).kind {
                            OpKind::Write { var, .. } => cls.contains(var),
                            _ => false,
                        })
                        .copied()
                        .collect::<Vec<_>>()
                })
                .collect::<Vec<_>>()
        },
    )
}

pub fn pob(c: &Computation, labels: &[Label]) -> bool {
    let bcasts: Vec<(Update, Label)> = c
        .operations()
        .filter_map(|o| match &o.kind {
            OpKind::Bcast { update, label } => Some((update.clone(), *label)),
            _ => None,
        })
        .collect();
    let bcast_set: BTreeSet<(Update, Label)> = bcasts.iter().cloned().collect();
    if bcast_set.len() != bcasts.len() {
        return false;
    }
    for p in c.processes() {
        let delivered: Vec<(Update, Label)> = c
            .operations()
            .filter(|o| o.id.proc == p)
            .filter_map(|o| match &o.kind {
                OpKind::Deliver { update, label } => Some((update.clone(), *label)),
                _ => None,
            })
            .collect();
        let set: BTreeSet<_> = delivered.iter().cloned().collect();
        if set != bcast_set {
            return false;
        }
    }
    let mut before = program_pairs(c);
    let bcast_at: BTreeMap<(Update, Label), OperationId> = c
        .operations()
        .filter_map(|o| match &o.kind {
            OpKind::Bcast { update, label } => Some(((update.clone(), *label), o.id)),
            _ => None,
        })
        .collect();
    let prog = program_pairs(c);
    for a in c.operations() {
        for b in c.operations() {
            if let (OpKind::Deliver { update: u1, label: l1 }, OpKind::Deliver { update: u2, label: l2 }) =
                (&a.kind, &b.kind)
            {
                let (b1, b2) = (bcast_at[&(u1.clone(), *l1)], bcast_at[&(u2.clone(), *l2)]);
                if prog.contains(&(b1, b2)) {
                    before.insert((a.id, b.id));
                }
            }
        }
    }
    let agreed: Vec<Label> = labels.iter().copied().filter(|l| !l.is_null()).collect();
    exists_agreeing_views(
        c,
        |p| ops_of(c, p),
        &before,
        |seq| {
            agreed
                .iter()
                .map(|l| {
                    seq.iter()
                        .filter_map(|id| match &c.op(*id).kind {
                            OpKind::Deliver { update, label } if label == l => Some(update.clone()),
                            _ => None,
                        })
                        .collect::<Vec<_>>()
                })
                .collect::<Vec<_>>()
        },
    )
}

pub fn nw(c: &Computation) -> bool {
    let mut sent = BTreeSet::new();
    let mut recv = BTreeSet::new();
    for o in c.operations() {
        match &o.kind {
            OpKind::Send { src, dst, msg } if !sent.insert((*src, *dst, *msg)) => return false,
            OpKind::Recv { src, dst, msg } if !recv.insert((*src, *dst, *msg)) => return false,
            _ => {}
        }
    }
    if sent != recv {
        return false;
    }
    let ids: Vec<OperationId> = c.ids();
    let prog = program_pairs(c);
    let mut hb = prog.clone();
    for a in c.operations() {
        for b in c.operations() {
            match (&a.kind, &b.kind) {
                (OpKind::Send { src, dst, msg }, OpKind::Recv { src: s2, dst: d2, msg: m2 })
                    if (src, dst, msg) == (s2, d2, m2) =>
                {
                    hb.insert((a.id, b.id));
                }
                (OpKind::Recv { src, dst, msg }, OpKind::Recv { src: s2, dst: d2, msg: m2 })
                    if (src, dst) == (s2, d2) =>
                {
                    let send_of = |m: &MsgId| {
                        c.operations().find(|o| {
                            matches!(&o.kind, OpKind::Send { src: s, dst: d, msg: mm } if (s, d, mm) == (src, dst, m))
                        })
                    };
                    if let (Some(s1), Some(s2)) = (send_of(msg), send_of(m2)) {
                        if prog.contains(&(s1.id, s2.id)) {
                            hb.insert((a.id, b.id));
                        }
                    }
                }
                (OpKind::Write { var, value }, OpKind::Read { var: v2, value: x2 })
                    if a.id.proc == b.id.proc && (var, value) == (v2, x2) =>
                {
                    hb.insert((a.id, b.id));
                }
                _ => {}
            }
        }
    }
    // Floyd-Warshall closure
    for &k in &ids {
        for &i in &ids {
            if !hb.contains(&(i, k)) {
                continue;
            }
            for &j in &ids {
                if hb.contains(&(k, j)) {
                    hb.insert((i, j));
                }
            }
        }
    }
    c.processes().all(|p| permutations(&ops_of(c, p), &hb, &mut |seq| valid(c, seq)))
}
