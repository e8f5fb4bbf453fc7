//! Partial-order broadcast on the simulated network.
//!
//! Two backends share one interface: a [`Broadcaster`] used by the thread
//! that issues broadcasts and a [`Deliverer`] owned by the single thread that
//! takes deliveries. Both emit `B`/`D` trace marks at the interface boundary
//! (bcast at invocation, deliver at return).

pub mod timestamp;
pub mod token;

use std::fmt;
use std::str::FromStr;

use crate::computation::{Label, ProcId, ThreadId, Update};
use crate::error::{Error, Result};
use crate::sim::{Ctx, Mark, Message, Sim};
use crate::text::{parse_label, parse_update};

pub use timestamp::{QueueElement, TsState};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WireMessage {
    Message { update: Update, label: Label },
    Ack,
    Token { label: Label },
    /// Local broadcast request (self-send).
    Lbr { update: Update, label: Label },
    Ord { label: Label, qe: QueueElement },
    /// Timestamp update.
    Tsu { ts: u64, proc: ProcId },
}

impl Message for WireMessage {
    fn circulating(&self) -> bool {
        matches!(self, WireMessage::Token { .. })
    }
}

impl fmt::Display for WireMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WireMessage::Message { update, label } => write!(f, "[MESSAGE {update} {label}]"),
            WireMessage::Ack => f.write_str("[ACK]"),
            WireMessage::Token { label } => write!(f, "[TOKEN {label}]"),
            WireMessage::Lbr { update, label } => write!(f, "[LBR {update} {label}]"),
            WireMessage::Ord { label, qe } => write!(
                f,
                "[ORD {label} {} {} {} {}]",
                qe.update, qe.ts, qe.counter, qe.src
            ),
            WireMessage::Tsu { ts, proc } => write!(f, "[TSU {ts} {proc}]"),
        }
    }
}

impl FromStr for WireMessage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Protocol(format!("malformed wire message {s:?}"));
        let inner = s.strip_prefix('[').and_then(|r| r.strip_suffix(']')).ok_or_else(bad)?;
        let f: Vec<&str> = inner.split(' ').collect();
        let upd = |i: usize| f.get(i).and_then(|x| parse_update(x)).ok_or_else(bad);
        let lab = |i: usize| f.get(i).and_then(|x| parse_label(x)).ok_or_else(bad);
        let int = |i: usize| f.get(i).and_then(|x| x.parse::<u64>().ok()).ok_or_else(bad);
        let arity = |n: usize| if f.len() == n { Ok(()) } else { Err(bad()) };
        match f[0] {
            "MESSAGE" => {
                arity(3)?;
                Ok(WireMessage::Message {
                    update: upd(1)?,
                    label: lab(2)?,
                })
            }
            "ACK" => arity(1).map(|_| WireMessage::Ack),
            "TOKEN" => {
                arity(2)?;
                Ok(WireMessage::Token { label: lab(1)? })
            }
            "LBR" => {
                arity(3)?;
                Ok(WireMessage::Lbr {
                    update: upd(1)?,
                    label: lab(2)?,
                })
            }
            "ORD" => {
                arity(6)?;
                Ok(WireMessage::Ord {
                    label: lab(1)?,
                    qe: QueueElement {
                        update: upd(2)?,
                        ts: int(3)?,
                        counter: int(4)?,
                        src: ProcId(int(5)? as u32),
                    },
                })
            }
            "TSU" => {
                arity(3)?;
                Ok(WireMessage::Tsu {
                    ts: int(1)?,
                    proc: ProcId(int(2)? as u32),
                })
            }
            _ => Err(bad()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Backend {
    Token,
    Timestamp,
}

impl Backend {
    pub const ALL: [Backend; 2] = [Backend::Token, Backend::Timestamp];
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Token => "token",
            Backend::Timestamp => "timestamp",
        })
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "token" => Ok(Backend::Token),
            "timestamp" | "ts" => Ok(Backend::Timestamp),
            _ => Err(Error::Protocol(format!("unknown broadcast backend {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PobConfig {
    pub backend: Backend,
    /// The non-null labels in use.
    pub labels: Vec<Label>,
    /// Timestamp backend: require `ts < T[q]` instead of `ts <= T[q]` when extracting.
    pub strict_extract: bool,
}

impl PobConfig {
    pub fn new(backend: Backend, labels: Vec<Label>) -> Self {
        PobConfig {
            backend,
            labels: labels.into_iter().filter(|l| !l.is_null()).collect(),
            strict_extract: false,
        }
    }
}

pub enum Broadcaster {
    Token,
    Timestamp,
}

pub enum Deliverer {
    Token,
    Timestamp(Box<TsState>),
}

impl Broadcaster {
    pub async fn bcast(&self, ctx: &Ctx<WireMessage>, update: Update, label: Label) {
        ctx.mark(Mark::Bcast {
            update: update.clone(),
            label,
        });
        match self {
            Broadcaster::Token => token::bcast(ctx, update, label).await,
            Broadcaster::Timestamp => timestamp::bcast(ctx, update, label).await,
        }
    }
}

impl Deliverer {
    pub async fn deliver(&mut self, ctx: &Ctx<WireMessage>) -> Result<(Update, Label)> {
        let (update, label) = match self {
            Deliverer::Token => token::deliver(ctx).await,
            Deliverer::Timestamp(state) => state.deliver(ctx).await?,
        };
        ctx.mark(Mark::Deliver {
            update: update.clone(),
            label,
        });
        Ok((update, label))
    }
}

/// Declares protocol state and spawns service threads for every process.
/// Call after the application threads are spawned.
pub fn install(sim: &mut Sim<WireMessage>, cfg: &PobConfig) -> Result<()> {
    match cfg.backend {
        Backend::Token => token::install(sim, &cfg.labels),
        Backend::Timestamp => Ok(()),
    }
}

pub fn endpoint(cfg: &PobConfig, proc: ProcId, nprocs: u32) -> (Broadcaster, Deliverer) {
    match cfg.backend {
        Backend::Token => (Broadcaster::Token, Deliverer::Token),
        Backend::Timestamp => (
            Broadcaster::Timestamp,
            Deliverer::Timestamp(Box::new(TsState::new(proc, nprocs, &cfg.labels, cfg.strict_extract))),
        ),
    }
}

/// bcast and deliver must run in different threads of a process.
pub fn check_wiring(bcast_thread: ThreadId, deliver_thread: ThreadId) -> Result<()> {
    if bcast_thread == deliver_thread {
        return Err(Error::Protocol(format!(
            "bcast and deliver both wired to thread {bcast_thread}"
        )));
    }
    Ok(())
}
