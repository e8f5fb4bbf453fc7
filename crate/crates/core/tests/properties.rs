mod common;

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::rc::Rc;

use proptest::prelude::*;

use partcon::checker::{check_nw, check_pc, check_pob, verify_pc};
use partcon::computation::{
    agree, extends, program_order, valid_sequence, Computation, OpKind, Operation, ProcId, ThreadId, Var,
};
use partcon::litmus::{self, LitmusCase, RunOptions};
use partcon::monitor::monitor_trace;
use partcon::order::OrderRelation;
use partcon::partition::{model_partition, multi_writer_vars, ModelName, PartitionSpec};
use partcon::sim::{extract_computation, format_trace, Action, Level, Message, Role, Sim, SimConfig};
use partcon::text::{format_computation, parse_computation};
use partcon::transform::{interpret, simulate, Stack, TargetConfig};

use common::{gen, rng};

fn any_computation(seed: u64) -> Computation {
    let r = &mut rng(seed);
    match seed % 3 {
        0 => gen::rw_computation(r, 7),
        1 => gen::pob_computation(r, 7),
        _ => gen::nw_computation(r, 7),
    }
}

fn partition_of(c: &Computation, m: &ModelName) -> PartitionSpec {
    model_partition(m, &c.variables(), c.write_sites())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn computation_text_round_trips(seed in any::<u64>()) {
        let c = any_computation(seed);
        let back = parse_computation(&format_computation(&c)).unwrap();
        prop_assert_eq!(format_computation(&back), format_computation(&c));
        prop_assert_eq!(back.len(), c.len());
    }

    #[test]
    fn program_order_is_a_strict_partial_order(seed in any::<u64>()) {
        let c = any_computation(seed);
        let po = program_order(&c);
        prop_assert!(po.is_acyclic());
        let ids = c.ids();
        for &a in &ids {
            prop_assert!(!po.contains(a, a));
            for &b in &ids {
                let same_thread = a.proc == b.proc && a.thread == b.thread;
                prop_assert_eq!(po.contains(a, b), same_thread && a.index < b.index);
            }
        }
    }

    #[test]
    fn executed_sequences_are_valid(ops in prop::collection::vec((any::<bool>(), 0..3usize, 1..4i64), 0..12)) {
        let mut c = Computation::new();
        let mut mem: BTreeMap<Var, i64> = BTreeMap::new();
        for (is_write, x, v) in ops {
            let var = Var::new(gen::VARS[x]);
            let kind = if is_write {
                mem.insert(var.clone(), v);
                OpKind::Write { var, value: v }
            } else {
                let value = mem.get(&var).copied().unwrap_or(0);
                OpKind::Read { var, value }
            };
            c.push(ProcId(0), ThreadId(0), kind);
        }
        let seq: Vec<Operation> = c.operations().cloned().collect();
        prop_assert!(valid_sequence(&seq, c.initial_values()));
        // corrupting any read breaks validity
        for i in 0..seq.len() {
            if let OpKind::Read { var, value } = &seq[i].kind {
                let mut bad = seq.clone();
                bad[i].kind = OpKind::Read { var: var.clone(), value: value + 10 };
                prop_assert!(!valid_sequence(&bad, c.initial_values()));
            }
        }
    }

    #[test]
    fn extends_and_agree_laws(seed in any::<u64>(), perm_seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let c = any_computation(seed);
        let ids = c.ids();
        let mut shuffled = ids.clone();
        shuffled.shuffle(&mut rng(perm_seed));
        let r = OrderRelation::from_sequence(&ids);
        let t = OrderRelation::from_sequence(&shuffled);
        prop_assert!(extends(&ids, &r, &r));
        prop_assert_eq!(agree(&ids, &r, &t), agree(&ids, &t, &r));
        prop_assert_eq!(agree(&ids, &r, &t), ids == shuffled);
        // ids are listed by (proc, thread, index), which respects program order
        prop_assert!(extends(&ids, &r, &program_order(&c)));
    }

    #[test]
    fn model_lattice_and_singleton_removal(seed in any::<u64>()) {
        let c = gen::rw_computation(&mut rng(seed), 7);
        let v = |m: &ModelName| check_pc(&c, &partition_of(&c, m)).unwrap().satisfied();
        let (sc, weaksc, pcg, weakpcg, pram) = (
            v(&ModelName::Sc), v(&ModelName::WeakSc), v(&ModelName::PcG), v(&ModelName::WeakPcG), v(&ModelName::Pram),
        );
        prop_assert!(!sc || weaksc);
        prop_assert!(!weaksc || pcg);
        prop_assert!(!pcg || pram);
        prop_assert_eq!(pcg, weakpcg);
        let k = partition_of(&c, &ModelName::PcG);
        let multi = multi_writer_vars(c.write_sites());
        for (i, class) in k.classes().iter().enumerate() {
            let x = class.iter().next().unwrap();
            if !multi.contains(x) {
                let reduced = k.without_class(i as u32 + 1);
                prop_assert_eq!(check_pc(&c, &reduced).unwrap().satisfied(), pcg);
            }
        }
    }

    #[test]
    fn coarser_partitions_are_stronger(seed in any::<u64>()) {
        let c = gen::rw_computation(&mut rng(seed), 7);
        let vars: Vec<Var> = c.variables().into_iter().collect();
        prop_assume!(vars.len() >= 2);
        let fine = PartitionSpec::new(vars.iter().map(|x| BTreeSet::from([x.clone()])).collect()).unwrap();
        let coarse = PartitionSpec::new(vec![vars.iter().cloned().collect()]).unwrap();
        let merged = check_pc(&c, &coarse).unwrap().satisfied();
        prop_assert!(!merged || check_pc(&c, &fine).unwrap().satisfied());
    }

    #[test]
    fn satisfied_verdicts_carry_verifiable_witnesses(seed in any::<u64>()) {
        let c = gen::rw_computation(&mut rng(seed), 7);
        for m in ModelName::NAMED {
            let k = partition_of(&c, &m);
            let v = check_pc(&c, &k).unwrap();
            prop_assert_eq!(v.satisfied(), v.witnesses.is_some());
            if let Some(w) = &v.witnesses {
                prop_assert!(verify_pc(&c, &k, w).is_ok());
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Msg(u32, u32);

impl fmt::Display for Msg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[M {} {}]", self.0, self.1)
    }
}

impl Message for Msg {}

type Received = Rc<RefCell<Vec<(ProcId, ProcId, Msg)>>>;

/// Each process sends its planned messages from its main thread; a service
/// thread per process receives forever.
fn message_sim(seed: u64, plan: &[Vec<u32>]) -> (partcon::sim::Trace, Received) {
    let n = plan.len() as u32;
    let procs: Vec<ProcId> = (0..n).map(ProcId).collect();
    let mut sim: Sim<Msg> = Sim::new(SimConfig::new(seed), &procs).unwrap();
    let got: Received = Rc::new(RefCell::new(Vec::new()));
    for p in 0..n {
        let dsts = plan[p as usize].clone();
        sim.spawn(ProcId(p), Role::Main, move |ctx| async move {
            for (i, d) in dsts.into_iter().enumerate() {
                ctx.send(ProcId(d % n), Msg(p, i as u32)).await;
            }
            Ok(())
        })
        .unwrap();
        let g = got.clone();
        sim.spawn(ProcId(p), Role::Service, move |ctx| async move {
            loop {
                let (src, m) = ctx.recv_match(|_, _| true).await;
                g.borrow_mut().push((src, ctx.proc(), m));
            }
        })
        .unwrap();
    }
    sim.annotate("annotations", "");
    (sim.run().unwrap(), got)
}

fn plan_strategy() -> impl Strategy<Value = Vec<Vec<u32>>> {
    prop::collection::vec(prop::collection::vec(0..3u32, 0..5), 1..4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn network_channels_are_reliable_fifo(seed in any::<u64>(), plan in plan_strategy()) {
        let (t, got) = message_sim(seed, &plan);
        prop_assert!(t.quiescent());
        let got = got.borrow();
        let sent: usize = plan.iter().map(Vec::len).sum();
        prop_assert_eq!(got.len(), sent);
        let mut per_channel: BTreeMap<(ProcId, ProcId), Vec<u32>> = BTreeMap::new();
        for (s, d, m) in got.iter() {
            prop_assert_eq!(s.0, m.0);
            per_channel.entry((*s, *d)).or_default().push(m.1);
        }
        for seqs in per_channel.values() {
            prop_assert!(seqs.windows(2).all(|w| w[0] < w[1]));
        }
        let c = extract_computation(&t, Level::Network).unwrap();
        prop_assert!(check_nw(&c).unwrap().satisfied());
    }

    #[test]
    fn simulation_is_deterministic_per_seed(seed in any::<u64>(), plan in plan_strategy()) {
        let (a, _) = message_sim(seed, &plan);
        let (b, _) = message_sim(seed, &plan);
        prop_assert_eq!(format_trace(&a), format_trace(&b));
    }

    #[test]
    fn every_step_is_one_recorded_action(seed in any::<u64>(), plan in plan_strategy()) {
        let (t, _) = message_sim(seed, &plan);
        let sends = t.records.iter().filter(|r| matches!(r.action, Action::Send { .. })).count();
        let recvs = t.records.iter().filter(|r| matches!(r.action, Action::Recv { .. })).count();
        prop_assert_eq!(sends, recvs);
        prop_assert!(t.records.windows(2).all(|w| w[0].n < w[1].n));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn stacks_implement_their_models(seed in any::<u64>(), run_seed in 0..1000u64, stack in 0..4usize, model in 0..5usize) {
        let prog = gen::spec_program(&mut rng(seed));
        let m = &ModelName::NAMED[model];
        let k = model_partition(m, &prog.universe, prog.write_sites());
        let stack = Stack::ALL[stack];
        let t = simulate(&prog, &k, &TargetConfig::new(stack, run_seed)).unwrap();
        prop_assert!(t.quiescent());
        let report = monitor_trace(&t, stack, &k);
        prop_assert!(report.passed(), "{}", report);
        let c = interpret(&t, &prog).unwrap();
        prop_assert!(check_pc(&c, &k).unwrap().satisfied());
        let pob = litmus::level_computation(&t, litmus::CheckLevel::Pob, &prog).unwrap();
        prop_assert!(check_pob(&pob, &k.labels()).unwrap().satisfied());
    }

    #[test]
    fn histograms_conserve_completed_seeds(seed in any::<u64>(), stack in 0..4usize) {
        let case = LitmusCase {
            name: "random".into(),
            program: gen::spec_program(&mut rng(seed)),
            model: ModelName::WeakSc,
            outcomes: Vec::new(),
        };
        let seeds: Vec<u64> = (0..8).collect();
        let r = litmus::run_case(&case, Stack::ALL[stack], &seeds, &RunOptions::default());
        prop_assert_eq!(r.histogram().values().sum::<usize>(), r.completed());
        prop_assert_eq!(r.seeds.len(), seeds.len());
        let again = litmus::run_case(&case, Stack::ALL[stack], &seeds, &RunOptions::default());
        prop_assert_eq!(litmus::report(&[r]), litmus::report(&[again]));
    }
}
