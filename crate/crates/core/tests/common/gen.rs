//! Seeded random computations and programs.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use partcon::computation::{Computation, Label, MsgId, OpKind, ProcId, ThreadId, Update, Value, Var};
use partcon::transform::{SpecInstr, SpecProgram};

pub const VARS: [&str; 3] = ["x", "y", "z"];

fn var(rng: &mut impl Rng, nvars: usize) -> Var {
    Var::new(VARS[rng.gen_range(0..nvars)])
}

/// Places per-process event lists into threads 0 and, rarely, 1.
fn place(c: &mut Computation, rng: &mut impl Rng, per_proc: Vec<Vec<OpKind>>, multithread: f64) {
    for (p, events) in per_proc.into_iter().enumerate() {
        let p = ProcId(p as u32);
        c.add_process(p);
        let two = rng.gen_bool(multithread);
        for kind in events {
            let t = if two && rng.gen_bool(0.5) { 1 } else { 0 };
            c.push(p, ThreadId(t), kind);
        }
    }
}

/// Reads and writes only, at most `max_ops` operations. Half the time read
/// values come from a replicated execution with per-source FIFO update
/// delivery, the rest are drawn from the values written to the variable or
/// its initial value.
pub fn rw_computation(rng: &mut impl Rng, max_ops: usize) -> Computation {
    let nprocs = if rng.gen_bool(0.1) { 1 } else { rng.gen_range(2..=3) };
    let nvars = rng.gen_range(1..=3);
    let total = if rng.gen_bool(0.1) {
        rng.gen_range(0..=max_ops)
    } else {
        rng.gen_range(max_ops.min(4)..=max_ops)
    };
    let mut skeleton: Vec<Vec<(bool, Var, Value)>> = vec![Vec::new(); nprocs];
    let mut written: BTreeMap<Var, Vec<Value>> = BTreeMap::new();
    let distinct = rng.gen_bool(0.5);
    let mut emit = |rng: &mut _, skeleton: &mut Vec<Vec<_>>, p: usize, is_write: bool, x: Var| {
        let v = if distinct {
            written.get(&x).map_or(1, |vs| vs.len() as Value + 1)
        } else {
            Rng::gen_range(rng, 1..=2)
        };
        if is_write {
            written.entry(x.clone()).or_default().push(v);
        }
        skeleton[p].push((is_write, x, v));
    };
    let shape = rng.gen_range(0..3);
    if nprocs >= 2 && (shape == 1 && nvars >= 2 || shape == 2) {
        // each process writes its own variable (or all write x), then reads
        let mut left = total.max(4).min(max_ops);
        let shared = shape == 2;
        for p in 0..nprocs {
            let own = Var::new(VARS[if shared { 0 } else { p % nvars }]);
            for _ in 0..rng.gen_range(1..=2usize).min(left) {
                emit(rng, &mut skeleton, p, true, own.clone());
                left -= 1;
            }
        }
        while left > 0 {
            let p = rng.gen_range(0..nprocs);
            let x = if shared || nvars == 1 {
                if rng.gen_bool(0.7) {
                    Var::new(VARS[0])
                } else {
                    var(rng, nvars)
                }
            } else {
                Var::new(VARS[(p + rng.gen_range(1..nvars)) % nvars])
            };
            emit(rng, &mut skeleton, p, false, x);
            left -= 1;
        }
    } else {
        for _ in 0..total {
            let p = rng.gen_range(0..nprocs);
            let x = var(rng, nvars);
            let is_write = rng.gen_bool(0.5);
            emit(rng, &mut skeleton, p, is_write, x);
        }
    }
    if rng.gen_bool(0.5) {
        // writes first makes cross-process observations likelier
        for ops in &mut skeleton {
            ops.sort_by_key(|(w, _, _)| !w);
        }
    }
    let mut c = Computation::new();
    let init: Value = if rng.gen_bool(0.1) { 1 } else { 0 };
    if init != 0 {
        c.set_initial(Var::new("x"), init);
    }
    let initial = |x: &Var| if x.as_str() == "x" { init } else { 0 };
    let read_values = if rng.gen_bool(0.5) {
        replicated_reads(rng, &skeleton, &initial)
    } else {
        skeleton
            .iter()
            .map(|ops| {
                ops.iter()
                    .filter(|(w, _, _)| !w)
                    .map(|(_, x, _)| {
                        let mut choices = written.get(x).cloned().unwrap_or_default();
                        choices.push(initial(x));
                        *choices.choose(rng).expect("nonempty")
                    })
                    .collect()
            })
            .collect()
    };
    let per_proc = skeleton
        .into_iter()
        .zip(read_values)
        .map(|(ops, reads)| {
            let mut reads = reads.into_iter();
            ops.into_iter()
                .map(|(is_write, var, value)| {
                    if is_write {
                        OpKind::Write { var, value }
                    } else {
                        let value = reads.next().expect("one value per read");
                        OpKind::Read { var, value }
                    }
                })
                .collect()
        })
        .collect();
    place(&mut c, rng, per_proc, 0.1);
    c
}

/// Runs the skeleton on per-process replicas; writes apply locally at once
/// and reach other processes through per-source FIFO queues.
fn replicated_reads(
    rng: &mut impl Rng,
    skeleton: &[Vec<(bool, Var, Value)>],
    initial: &dyn Fn(&Var) -> Value,
) -> Vec<Vec<Value>> {
    let n = skeleton.len();
    let mut replica: Vec<BTreeMap<Var, Value>> = vec![BTreeMap::new(); n];
    let mut queues: Vec<Vec<std::collections::VecDeque<(Var, Value)>>> = vec![vec![Default::default(); n]; n];
    let mut pc = vec![0usize; n];
    let mut reads = vec![Vec::new(); n];
    let lag = rng.gen_range(0.2..0.9);
    loop {
        let mut moves = Vec::new();
        for p in 0..n {
            if pc[p] < skeleton[p].len() {
                moves.push((p, None));
            }
            for s in 0..n {
                if !queues[p][s].is_empty() {
                    moves.push((p, Some(s)));
                }
            }
        }
        if moves.is_empty() {
            break;
        }
        // `lag` sets how far deliveries trail program steps
        let steps: Vec<_> = moves.iter().filter(|m| m.1.is_none()).copied().collect();
        let pool = if !steps.is_empty() && rng.gen_bool(lag) { &steps } else { &moves };
        let &(p, from) = pool.choose(rng).expect("nonempty");
        match from {
            Some(s) => {
                let (x, v) = queues[p][s].pop_front().expect("nonempty");
                replica[p].insert(x, v);
            }
            None => {
                let (is_write, x, v) = skeleton[p][pc[p]].clone();
                pc[p] += 1;
                if is_write {
                    replica[p].insert(x.clone(), v);
                    for (q, qs) in queues.iter_mut().enumerate() {
                        if q != p {
                            qs[p].push_back((x.clone(), v));
                        }
                    }
                } else {
                    reads[p].push(replica[p].get(&x).copied().unwrap_or_else(|| initial(&x)));
                }
            }
        }
    }
    reads
}

pub const POB_LABELS: [Label; 2] = [Label::Class(1), Label::Class(2)];

/// Broadcasts, their deliveries at every process and a few local reads and
/// writes. Deliveries are occasionally dropped or duplicated.
pub fn pob_computation(rng: &mut impl Rng, max_ops: usize) -> Computation {
    let nprocs = rng.gen_range(1..=3usize);
    let max_updates = (max_ops / (nprocs + 1)).min(3);
    let nupdates = rng.gen_range(0..=max_updates);
    let mut per_proc: Vec<Vec<OpKind>> = vec![Vec::new(); nprocs];
    let mut seqs = vec![0u64; nprocs];
    let mut updates = Vec::new();
    for _ in 0..nupdates {
        let src = rng.gen_range(0..nprocs);
        seqs[src] += 1;
        let update = Update {
            var: var(rng, 2),
            value: rng.gen_range(1..=2),
            source: ProcId(src as u32),
            seq: seqs[src],
        };
        let label = *[Label::Null, Label::Class(1), Label::Class(2)].choose(rng).expect("nonempty");
        per_proc[src].push(OpKind::Bcast {
            update: update.clone(),
            label,
        });
        updates.push((update, label));
    }
    let mut used = nupdates * (nprocs + 1);
    for events in per_proc.iter_mut() {
        let mut delivers: Vec<OpKind> = updates
            .iter()
            .map(|(update, label)| OpKind::Deliver {
                update: update.clone(),
                label: *label,
            })
            .collect();
        if !delivers.is_empty() && rng.gen_bool(0.05) {
            delivers.pop();
            used -= 1;
        }
        delivers.shuffle(rng);
        // interleave deliveries with the process's own bcasts
        let mut merged = Vec::new();
        let mut own = std::mem::take(events).into_iter().peekable();
        for d in delivers {
            while own.peek().is_some() && rng.gen_bool(0.5) {
                merged.push(own.next().expect("peeked"));
            }
            merged.push(d);
        }
        merged.extend(own);
        *events = merged;
    }
    while used < max_ops && rng.gen_bool(0.4) {
        let p = rng.gen_range(0..nprocs);
        let x = Var::new(if rng.gen_bool(0.5) { "a" } else { "b" });
        let kind = if rng.gen_bool(0.5) {
            OpKind::Write {
                var: x,
                value: rng.gen_range(1..=2),
            }
        } else {
            OpKind::Read {
                var: x,
                value: rng.gen_range(0..=2),
            }
        };
        let at = rng.gen_range(0..=per_proc[p].len());
        per_proc[p].insert(at, kind);
        used += 1;
    }
    let mut c = Computation::new();
    place(&mut c, rng, per_proc, 0.2);
    c
}

/// Sends, receives and local reads and writes. Receives are occasionally
/// dropped; receive order at a destination is random.
pub fn nw_computation(rng: &mut impl Rng, max_ops: usize) -> Computation {
    let nprocs = rng.gen_range(1..=3usize);
    let nmsgs = rng.gen_range(0..=(max_ops / 2).min(3));
    let mut per_proc: Vec<Vec<OpKind>> = vec![Vec::new(); nprocs];
    let mut seqs = vec![0u64; nprocs];
    let mut recvs: Vec<Vec<OpKind>> = vec![Vec::new(); nprocs];
    let mut used = 0;
    for _ in 0..nmsgs {
        let src = rng.gen_range(0..nprocs);
        let dst = rng.gen_range(0..nprocs);
        seqs[src] += 1;
        let msg = MsgId {
            sender: ProcId(src as u32),
            seq: seqs[src],
        };
        let (s, d) = (ProcId(src as u32), ProcId(dst as u32));
        per_proc[src].push(OpKind::Send { src: s, dst: d, msg });
        used += 1;
        if !rng.gen_bool(0.05) {
            recvs[dst].push(OpKind::Recv { src: s, dst: d, msg });
            used += 1;
        }
    }
    for (events, mut rs) in per_proc.iter_mut().zip(recvs) {
        rs.shuffle(rng);
        for r in rs {
            let at = rng.gen_range(0..=events.len());
            events.insert(at, r);
        }
    }
    while used < max_ops && rng.gen_bool(0.5) {
        let p = rng.gen_range(0..nprocs);
        let x = Var::new(if rng.gen_bool(0.5) { "a" } else { "b" });
        let kind = if rng.gen_bool(0.5) {
            OpKind::Write {
                var: x,
                value: rng.gen_range(1..=2),
            }
        } else {
            OpKind::Read {
                var: x,
                value: rng.gen_range(0..=2),
            }
        };
        let at = rng.gen_range(0..=per_proc[p].len());
        per_proc[p].insert(at, kind);
        used += 1;
    }
    let mut c = Computation::new();
    place(&mut c, rng, per_proc, 0.3);
    c
}

/// At most 3 processes, 6 instructions each and 3 variables. Written values
/// are distinct per variable, so every read identifies its write.
pub fn spec_program(rng: &mut impl Rng) -> SpecProgram {
    let nprocs = rng.gen_range(1..=3);
    let nvars = rng.gen_range(1..=3);
    let mut next: BTreeMap<Var, Value> = BTreeMap::new();
    let procs = (0..nprocs)
        .map(|_| {
            (0..rng.gen_range(0..=6))
                .map(|_| {
                    let x = var(rng, nvars);
                    if rng.gen_bool(0.5) {
                        let v = next.entry(x.clone()).or_insert(0);
                        *v += 1;
                        SpecInstr::Write(x, *v)
                    } else {
                        SpecInstr::Read(x)
                    }
                })
                .collect()
        })
        .collect();
    SpecProgram::new(procs)
}
