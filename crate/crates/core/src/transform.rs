//! Runs single-threaded read/write programs on a broadcast stack.
//!
//! Every process keeps a full replica `mem.x` of the shared variables. A
//! write broadcasts `[x, v, p]` under the label of x's class; the delivery
//! thread applies updates to the replica. `WaitWritesComplete` spins until
//! all of the process's own writes have been applied locally: SWFR calls it
//! at the end of each write, FWSR at the start of each read.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::computation::{Computation, Label, OpKind, ProcId, ThreadId, Update, Value, Var};
use crate::error::{parse_err, Error, Result};
use crate::partition::PartitionSpec;
use crate::pob::{self, Backend, PobConfig, WireMessage};
use crate::sim::{Ctx, Mark, Role, Sim, SimConfig, Trace};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum SpecInstr {
    Read(Var),
    Write(Var, Value),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SpecProgram {
    /// Instructions of process `i` at index `i`.
    pub procs: Vec<Vec<SpecInstr>>,
    pub universe: BTreeSet<Var>,
    pub initial: BTreeMap<Var, Value>,
}

impl SpecProgram {
    /// Builds a program whose universe is every variable it mentions.
    pub fn new(procs: Vec<Vec<SpecInstr>>) -> Self {
        let universe = procs
            .iter()
            .flatten()
            .map(|i| match i {
                SpecInstr::Read(x) | SpecInstr::Write(x, _) => x.clone(),
            })
            .collect();
        SpecProgram {
            procs,
            universe,
            initial: BTreeMap::new(),
        }
    }

    pub fn nprocs(&self) -> u32 {
        self.procs.len() as u32
    }

    pub fn initial_value(&self, x: &Var) -> Value {
        self.initial.get(x).copied().unwrap_or(0)
    }

    pub fn write_sites(&self) -> Vec<(ProcId, Var)> {
        self.procs
            .iter()
            .enumerate()
            .flat_map(|(p, instrs)| {
                instrs.iter().filter_map(move |i| match i {
                    SpecInstr::Write(x, _) => Some((ProcId(p as u32), x.clone())),
                    SpecInstr::Read(_) => None,
                })
            })
            .collect()
    }
}

/// `proc N` opens process N; then `W var val` / `R var` lines. Optional
/// `vars a b c` widens the universe and `init var val` sets initial values.
pub fn parse_program(text: &str) -> Result<SpecProgram> {
    let mut procs: BTreeMap<u32, Vec<SpecInstr>> = BTreeMap::new();
    let mut current = None;
    let mut universe = BTreeSet::new();
    let mut initial = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let f: Vec<&str> = raw.split('#').next().unwrap_or("").split_whitespace().collect();
        let Some(&head) = f.first() else { continue };
        let num = |s: &str| -> Result<Value> {
            s.parse()
                .map_err(|_| parse_err(line, format!("expected a number, found {s:?}")))
        };
        match (head, f.len()) {
            ("proc", 2) => {
                let p = num(f[1])?;
                if p < 0 || procs.contains_key(&(p as u32)) {
                    return Err(parse_err(line, format!("bad or repeated process {p}")));
                }
                procs.insert(p as u32, Vec::new());
                current = Some(p as u32);
            }
            ("vars", _) => universe.extend(f[1..].iter().map(|v| Var::new(v))),
            ("init", 3) => {
                initial.insert(Var::new(f[1]), num(f[2])?);
            }
            ("W", 3) | ("R", 2) => {
                let p = current.ok_or_else(|| parse_err(line, "instruction before any `proc`"))?;
                let x = Var::new(f[1]);
                universe.insert(x.clone());
                let instr = if head == "W" {
                    SpecInstr::Write(x, num(f[2])?)
                } else {
                    SpecInstr::Read(x)
                };
                procs.get_mut(&p).expect("current process exists").push(instr);
            }
            _ => return Err(parse_err(line, format!("cannot parse {raw:?}"))),
        }
    }
    if procs.keys().enumerate().any(|(i, &p)| p != i as u32) {
        return Err(parse_err(0, "processes must be numbered 0..n"));
    }
    universe.extend(initial.keys().cloned());
    Ok(SpecProgram {
        procs: procs.into_values().collect(),
        universe,
        initial,
    })
}

pub fn format_program(prog: &SpecProgram) -> String {
    let mut out = String::from("vars");
    for v in &prog.universe {
        let _ = write!(out, " {v}");
    }
    out.push('\n');
    for (x, v) in &prog.initial {
        let _ = writeln!(out, "init {x} {v}");
    }
    for (p, instrs) in prog.procs.iter().enumerate() {
        let _ = writeln!(out, "proc {p}");
        for i in instrs {
            match i {
                SpecInstr::Read(x) => writeln!(out, "R {x}"),
                SpecInstr::Write(x, v) => writeln!(out, "W {x} {v}"),
            }
            .expect("writing to a String");
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TransformVariant {
    /// Slow write, fast read.
    Swfr,
    /// Fast write, slow read.
    Fwsr,
}

impl fmt::Display for TransformVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransformVariant::Swfr => "swfr",
            TransformVariant::Fwsr => "fwsr",
        })
    }
}

impl FromStr for TransformVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "swfr" => Ok(TransformVariant::Swfr),
            "fwsr" => Ok(TransformVariant::Fwsr),
            _ => Err(Error::Interpret(format!("unknown transform {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Stack {
    pub transform: TransformVariant,
    pub backend: Backend,
}

impl Stack {
    pub const ALL: [Stack; 4] = [
        Stack::new(TransformVariant::Swfr, Backend::Token),
        Stack::new(TransformVariant::Fwsr, Backend::Token),
        Stack::new(TransformVariant::Swfr, Backend::Timestamp),
        Stack::new(TransformVariant::Fwsr, Backend::Timestamp),
    ];

    pub const fn new(transform: TransformVariant, backend: Backend) -> Self {
        Stack { transform, backend }
    }
}

impl fmt::Display for Stack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}+{}", self.transform, self.backend)
    }
}

impl FromStr for Stack {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (t, b) = s
            .split_once('+')
            .ok_or_else(|| Error::Interpret(format!("stack {s:?} is not transform+backend")))?;
        Ok(Stack::new(t.parse()?, b.parse()?))
    }
}

pub fn label_of(x: &Var, k: &PartitionSpec) -> Label {
    k.label_of(x)
}

pub fn replica(x: &Var) -> Var {
    Var::new(&format!("mem.{x}"))
}

pub fn writes_requested() -> Var {
    Var::new("wreq")
}

pub fn writes_processed() -> Var {
    Var::new("wproc")
}

/// Main thread is thread 0 and the delivery thread is thread 1 of every
/// process; the broadcast runtime's service threads follow.
pub const MAIN_THREAD: ThreadId = ThreadId(0);
pub const DELIVERY_THREAD: ThreadId = ThreadId(1);

#[derive(Clone, Debug)]
pub struct TargetConfig {
    pub stack: Stack,
    pub sim: SimConfig,
    /// Timestamp backend: strict `<` extraction test.
    pub strict_extract: bool,
}

impl TargetConfig {
    pub fn new(stack: Stack, seed: u64) -> Self {
        TargetConfig {
            stack,
            sim: SimConfig::new(seed),
            strict_extract: false,
        }
    }
}

/// Builds the target multiprogram for `prog` under partition `k`.
pub fn build(prog: &SpecProgram, k: &PartitionSpec, cfg: &TargetConfig) -> Result<Sim<WireMessage>> {
    k.check_universe(&prog.universe)?;
    let procs: Vec<ProcId> = (0..prog.nprocs().max(1)).map(ProcId).collect();
    let mut sim = Sim::new(cfg.sim.clone(), &procs)?;
    sim.annotate("stack", cfg.stack);
    sim.annotate("partition", k);
    sim.annotate("annotations", "pob,spec");
    let mut pob_cfg = PobConfig::new(cfg.stack.backend, k.labels());
    pob_cfg.strict_extract = cfg.strict_extract;
    for (p, instrs) in prog.procs.iter().enumerate() {
        let p = ProcId(p as u32);
        for x in &prog.universe {
            sim.declare(p, replica(x), prog.initial_value(x));
        }
        sim.declare(p, writes_requested(), 0);
        sim.declare(p, writes_processed(), 0);
        let (bc, dl) = pob::endpoint(&pob_cfg, p, sim.nprocs());
        let variant = cfg.stack.transform;
        let body = instrs.clone();
        let k_main = k.clone();
        let main = sim.spawn(p, Role::Main, move |ctx| main_thread(ctx, body, k_main, variant, bc))?;
        let delivery = sim.spawn(p, Role::Service, move |ctx| delivery_thread(ctx, dl))?;
        debug_assert_eq!((main, delivery), (MAIN_THREAD, DELIVERY_THREAD));
        pob::check_wiring(main, delivery)?;
    }
    pob::install(&mut sim, &pob_cfg)?;
    Ok(sim)
}

pub fn simulate(prog: &SpecProgram, k: &PartitionSpec, cfg: &TargetConfig) -> Result<Trace> {
    build(prog, k, cfg)?.run()
}

async fn wait_writes_complete(ctx: &Ctx<WireMessage>, requested: Value) {
    // the main thread is the only writer of wreq, so its value is known here
    while ctx.read(&writes_processed()).await < requested {}
}

async fn main_thread(
    ctx: Ctx<WireMessage>,
    body: Vec<SpecInstr>,
    k: PartitionSpec,
    variant: TransformVariant,
    bc: pob::Broadcaster,
) -> Result<()> {
    let mut requested: Value = 0;
    for instr in body {
        match instr {
            SpecInstr::Write(x, v) => {
                requested += 1;
                ctx.write(&writes_requested(), requested).await;
                let update = Update {
                    var: x.clone(),
                    value: v,
                    source: ctx.proc(),
                    seq: requested as u64,
                };
                bc.bcast(&ctx, update, label_of(&x, &k)).await;
                if variant == TransformVariant::Swfr {
                    wait_writes_complete(&ctx, requested).await;
                }
                ctx.mark(Mark::SpecWrite { var: x, value: v });
            }
            SpecInstr::Read(x) => {
                if variant == TransformVariant::Fwsr {
                    wait_writes_complete(&ctx, requested).await;
                }
                let v = ctx.read(&replica(&x)).await;
                ctx.mark(Mark::SpecRead { var: x, value: v });
            }
        }
    }
    Ok(())
}

async fn delivery_thread(ctx: Ctx<WireMessage>, mut dl: pob::Deliverer) -> Result<()> {
    loop {
        apply_write(&ctx, &mut dl).await?;
    }
}

async fn apply_write(ctx: &Ctx<WireMessage>, dl: &mut pob::Deliverer) -> Result<()> {
    let (u, _) = dl.deliver(ctx).await?;
    ctx.write(&replica(&u.var), u.value).await;
    if u.source == ctx.proc() {
        let w = ctx.read(&writes_processed()).await;
        ctx.write(&writes_processed(), w + 1).await;
    }
    Ok(())
}

/// The specification computation a run implements: per process, the
/// program's writes and the values its reads returned, in program order.
/// Fails when the trace's marks do not line up with `prog`.
pub fn interpret(trace: &Trace, prog: &SpecProgram) -> Result<Computation> {
    if !trace.levels().contains(&crate::sim::Level::SpecTarget) {
        return Err(Error::Interpret("trace carries no specification marks".into()));
    }
    if trace.nprocs != prog.nprocs().max(1) {
        return Err(Error::Interpret(format!(
            "trace has {} processes, program has {}",
            trace.nprocs,
            prog.nprocs()
        )));
    }
    let mut c = Computation::new();
    for p in 0..prog.nprocs() {
        c.add_process(ProcId(p));
    }
    for (x, v) in &prog.initial {
        c.set_initial(x.clone(), *v);
    }
    let mut pos = vec![0usize; prog.procs.len()];
    for (r, m) in trace.marks() {
        let kind = match m {
            Mark::SpecRead { var, value } => OpKind::Read {
                var: var.clone(),
                value: *value,
            },
            Mark::SpecWrite { var, value } => OpKind::Write {
                var: var.clone(),
                value: *value,
            },
            _ => continue,
        };
        let p = r.proc.0 as usize;
        let expected = prog.procs.get(p).and_then(|instrs| instrs.get(pos[p]));
        let matches = match (expected, &kind) {
            (Some(SpecInstr::Read(x)), OpKind::Read { var, .. }) => x == var,
            (Some(SpecInstr::Write(x, v)), OpKind::Write { var, value }) => x == var && v == value,
            _ => false,
        };
        if !matches || r.thread != MAIN_THREAD {
            return Err(Error::Interpret(format!(
                "record {} ({m}) does not match instruction {} of process {p}",
                r.n, pos[p]
            )));
        }
        pos[p] += 1;
        c.push(r.proc, MAIN_THREAD, kind);
    }
    if trace.quiescent() {
        for (p, instrs) in prog.procs.iter().enumerate() {
            if pos[p] != instrs.len() {
                return Err(Error::Interpret(format!(
                    "quiescent run completed {} of {} instructions at process {p}",
                    pos[p],
                    instrs.len()
                )));
            }
        }
    }
    Ok(c)
}
