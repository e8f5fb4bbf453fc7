//! Line-oriented text format for computations.
//!
//! ```text
//! # comment
//! proc 2                  declares a process with no operations
//! init x 0                initial value (default 0)
//! 0 0 0 W x 1             proc thread index kind args
//! 1 0 0 R x 1 from 0.0.0  optional reads-from: an operation id or `init`
//! 0 0 1 B x:1:0:1 1       update = var:value:source:seq, label = int or `_`
//! 1 0 1 D x:1:0:1 1
//! 0 1 0 S 0 1 0.3         src dst msgid (sender.seq)
//! 1 1 0 V 0 1 0.3
//! ```

use std::fmt::Write as _;

use crate::computation::{
    Computation, Label, MsgId, OpKind, OperationId, ProcId, ThreadId, Update, Value, Var,
};
use crate::error::{parse_err, Error, Result};

pub fn parse_computation(text: &str) -> Result<Computation> {
    let mut c = Computation::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        match fields[0] {
            "proc" => {
                let p = field::<u32>(&fields, 1, line)?;
                c.add_process(ProcId(p));
            }
            "init" => {
                if fields.len() != 3 {
                    return Err(parse_err(line, "expected `init var value`"));
                }
                c.set_initial(Var::new(fields[1]), field::<Value>(&fields, 2, line)?);
            }
            _ => parse_record(&mut c, &fields, line)?,
        }
    }
    Ok(c)
}

fn parse_record(c: &mut Computation, fields: &[&str], line: usize) -> Result<()> {
    if fields.len() < 4 {
        return Err(parse_err(line, "expected `proc thread index kind args`"));
    }
    let proc = ProcId(field(fields, 0, line)?);
    let thread = ThreadId(field(fields, 1, line)?);
    let index: u32 = field(fields, 2, line)?;
    let expected = c.thread(proc, thread).len() as u32;
    if index != expected {
        return Err(parse_err(
            line,
            format!("operation index {index} out of sequence (expected {expected})"),
        ));
    }
    let args = &fields[4..];
    let need = |n: usize| -> Result<()> {
        if args.len() < n {
            Err(parse_err(line, format!("{} needs {n} arguments", fields[3])))
        } else {
            Ok(())
        }
    };
    let mut from = None;
    let kind = match fields[3] {
        "R" => {
            need(2)?;
            if args.len() >= 4 && args[2] == "from" {
                from = Some(if args[3] == "init" {
                    None
                } else {
                    Some(parse_op_id(args[3]).ok_or_else(|| parse_err(line, "bad reads-from id"))?)
                });
            } else if args.len() != 2 {
                return Err(parse_err(line, "trailing fields after read"));
            }
            OpKind::Read {
                var: Var::new(args[0]),
                value: parse_num(args[1], line)?,
            }
        }
        "W" => {
            need(2)?;
            OpKind::Write {
                var: Var::new(args[0]),
                value: parse_num(args[1], line)?,
            }
        }
        "B" | "D" => {
            need(2)?;
            let update = parse_update(args[0]).ok_or_else(|| parse_err(line, "bad update"))?;
            let label = parse_label(args[1]).ok_or_else(|| parse_err(line, "bad label"))?;
            if fields[3] == "B" {
                OpKind::Bcast { update, label }
            } else {
                OpKind::Deliver { update, label }
            }
        }
        "S" | "V" => {
            need(3)?;
            let src = ProcId(parse_num(args[0], line)?);
            let dst = ProcId(parse_num(args[1], line)?);
            let msg = parse_msg_id(args[2]).ok_or_else(|| parse_err(line, "bad message id"))?;
            if fields[3] == "S" {
                OpKind::Send { src, dst, msg }
            } else {
                OpKind::Recv { src, dst, msg }
            }
        }
        other => return Err(parse_err(line, format!("unknown operation kind {other:?}"))),
    };
    let id = c.push(proc, thread, kind);
    if let Some(from) = from {
        c.set_reads_from(id, from);
    }
    Ok(())
}

fn field<T: std::str::FromStr>(fields: &[&str], i: usize, line: usize) -> Result<T> {
    let s = fields
        .get(i)
        .ok_or_else(|| parse_err(line, format!("missing field {}", i + 1)))?;
    parse_num(s, line)
}

fn parse_num<T: std::str::FromStr>(s: &str, line: usize) -> Result<T> {
    s.parse()
        .map_err(|_| parse_err(line, format!("expected a number, found {s:?}")))
}

pub fn parse_label(s: &str) -> Option<Label> {
    if s == "_" {
        Some(Label::Null)
    } else {
        s.parse().ok().filter(|&i| i > 0).map(Label::Class)
    }
}

pub fn parse_update(s: &str) -> Option<Update> {
    let mut it = s.split(':');
    let var = it.next().filter(|v| !v.is_empty())?;
    let value = it.next()?.parse().ok()?;
    let source = it.next()?.parse().ok()?;
    let seq = it.next()?.parse().ok()?;
    if it.next().is_some() {
        return None;
    }
    Some(Update {
        var: Var::new(var),
        value,
        source: ProcId(source),
        seq,
    })
}

pub fn parse_msg_id(s: &str) -> Option<MsgId> {
    let (a, b) = s.split_once('.')?;
    Some(MsgId {
        sender: ProcId(a.parse().ok()?),
        seq: b.parse().ok()?,
    })
}

pub fn parse_op_id(s: &str) -> Option<OperationId> {
    let mut it = s.split('.');
    let id = OperationId::new(
        it.next()?.parse().ok()?,
        it.next()?.parse().ok()?,
        it.next()?.parse().ok()?,
    );
    it.next().is_none().then_some(id)
}

/// Renders a computation; parsing the output yields an equal computation.
pub fn format_computation(c: &Computation) -> String {
    let mut out = String::new();
    for p in c.processes() {
        let _ = writeln!(out, "proc {p}");
    }
    for (var, value) in c.initial_values() {
        let _ = writeln!(out, "init {var} {value}");
    }
    for op in c.operations() {
        let _ = write!(out, "{op}");
        if let Some(from) = c.reads_from(op.id) {
            match from {
                Some(w) => {
                    let _ = write!(out, " from {w}");
                }
                None => out.push_str(" from init"),
            }
        }
        out.push('\n');
    }
    out
}

/// Formats a single operation record, looked up in `c`.
pub fn format_op(c: &Computation, id: OperationId) -> Result<String> {
    c.get(id)
        .map(ToString::to_string)
        .ok_or_else(|| Error::Domain(format!("unknown operation {id}")))
}
