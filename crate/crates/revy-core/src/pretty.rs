//! Pretty-printer for source units. `parse(pretty(parse(x)))` is structurally
//! identical to `parse(x)`; used for diagnostics and the round-trip check.

use crate::ast::*;
use std::fmt::Write;

pub fn unit_to_string(u: &SourceUnit) -> String {
    let mut out = String::new();
    let kw = match u.kind {
        UnitKind::Contract => "contract",
        UnitKind::Interface => "interface",
    };
    write!(out, "{} {}", kw, u.name).unwrap();
    if !u.implements.is_empty() {
        let names: Vec<_> = u.implements.iter().map(|i| i.name.clone()).collect();
        write!(out, " implements {}", names.join(", ")).unwrap();
    }
    out.push_str(":\n");
    for f in &u.fields {
        writeln!(out, "    {}: {}", f.name, f.ty).unwrap();
    }
    if u.no_derived_wei {
        out.push_str("    #@ no-derived-wei\n");
    }
    for r in &u.resources {
        match &r.derived_from {
            Some(base) => {
                writeln!(out, "    #@ resource: {}() derived from {}", r.name, base).unwrap()
            }
            None => writeln!(out, "    #@ resource: {}()", r.name).unwrap(),
        }
    }
    for s in &u.specs.segment {
        writeln!(out, "    #@ segment: {}", expr(&s.expr)).unwrap();
    }
    for s in &u.specs.transitive {
        writeln!(out, "    #@ transitive: {}", expr(&s.expr)).unwrap();
    }
    for s in &u.specs.function_constraints {
        writeln!(out, "    #@ function: {}", expr(&s.expr)).unwrap();
    }
    for s in &u.specs.privacy {
        writeln!(out, "    #@ privacy: {}", expr(&s.expr)).unwrap();
    }
    for f in &u.functions {
        out.push('\n');
        for e in &f.ensures {
            writeln!(out, "    #@ ensures: {}", expr(&e.expr)).unwrap();
        }
        for p in &f.performs {
            writeln!(out, "    #@ performs: {}", ghost(p)).unwrap();
        }
        if f.payable {
            out.push_str("    @payable\n");
        }
        let params: Vec<_> = f
            .params
            .iter()
            .map(|p| format!("{}: {}", p.name, p.ty))
            .collect();
        write!(out, "    def {}({})", f.name, params.join(", ")).unwrap();
        if let Some(ret) = &f.ret {
            write!(out, " -> {}", ret).unwrap();
        }
        out.push_str(":\n");
        if f.body.is_empty() {
            out.push_str("        pass\n");
        }
        for s in &f.body {
            stmt(&mut out, s, 2);
        }
    }
    out
}

fn stmt(out: &mut String, s: &Stmt, depth: usize) {
    let pad = "    ".repeat(depth);
    match &s.kind {
        StmtKind::Pass => writeln!(out, "{pad}pass").unwrap(),
        StmtKind::LocalDecl { name, ty, value } => match ty {
            Some(ty) => writeln!(out, "{pad}{name}: {ty} = {}", expr(value)).unwrap(),
            None => writeln!(out, "{pad}{name} = {}", expr(value)).unwrap(),
        },
        StmtKind::Assign { target, op, value } => {
            let t = match target {
                LValue::Local(n) => n.name.clone(),
                LValue::SelfField { field, keys } => {
                    let mut t = format!("self.{field}");
                    for k in keys {
                        write!(t, "[{}]", expr(k)).unwrap();
                    }
                    t
                }
            };
            let op = match op {
                AssignOp::Set => "=",
                AssignOp::Add => "+=",
                AssignOp::Sub => "-=",
            };
            writeln!(out, "{pad}{t} {op} {}", expr(value)).unwrap();
        }
        StmtKind::Assert(e) => writeln!(out, "{pad}assert {}", expr(e)).unwrap(),
        StmtKind::Return(v) => match v {
            Some(v) => writeln!(out, "{pad}return {}", expr(v)).unwrap(),
            None => writeln!(out, "{pad}return").unwrap(),
        },
        StmtKind::Send { to, value } => {
            writeln!(out, "{pad}send({}, value={})", expr(to), expr(value)).unwrap()
        }
        StmtKind::Call {
            result,
            target,
            args,
            value,
        } => {
            let mut line = pad.clone();
            if let Some(r) = result {
                write!(line, "{r} = ").unwrap();
            }
            match target {
                CallTarget::SelfField { field, fun } => {
                    write!(line, "self.{field}.{fun}").unwrap()
                }
                CallTarget::Cast { iface, addr, fun } => {
                    write!(line, "{iface}({}).{fun}", expr(addr)).unwrap()
                }
            }
            let mut parts: Vec<String> = args.iter().map(expr).collect();
            if let Some(v) = value {
                parts.push(format!("value={}", expr(v)));
            }
            writeln!(out, "{line}({})", parts.join(", ")).unwrap();
        }
        StmtKind::PrivateCall { result, fun, args } => {
            let mut line = pad.clone();
            if let Some(r) = result {
                write!(line, "{r} = ").unwrap();
            }
            let parts: Vec<String> = args.iter().map(expr).collect();
            writeln!(out, "{line}self.{fun}({})", parts.join(", ")).unwrap();
        }
        StmtKind::Ghost(g) => writeln!(out, "{pad}#@ {}", ghost(g)).unwrap(),
        StmtKind::For { var, count, body } => {
            writeln!(out, "{pad}for {var} in range({count}):").unwrap();
            for s in body {
                stmt(out, s, depth + 1);
            }
        }
        StmtKind::StabilityHint(e) => {
            writeln!(out, "{pad}#@ stability-hint: {}", expr(e)).unwrap()
        }
    }
}

pub fn ghost(g: &GhostCmd) -> String {
    match g {
        GhostCmd::Create {
            res,
            amount,
            to,
            actor,
        } => {
            let mut args = vec![expr(amount)];
            if let Some(t) = to {
                args.push(format!("to={}", expr(t)));
            }
            if let Some(a) = actor {
                args.push(format!("actor={}", expr(a)));
            }
            format!("create[{res}]({})", args.join(", "))
        }
        GhostCmd::Destroy { res, amount, actor } => {
            let mut args = vec![expr(amount)];
            if let Some(a) = actor {
                args.push(format!("actor={}", expr(a)));
            }
            format!("destroy[{res}]({})", args.join(", "))
        }
        GhostCmd::Transfer {
            res,
            amount,
            to,
            from,
        } => {
            let mut args = vec![expr(amount), format!("to={}", expr(to))];
            if let Some(f) = from {
                args.push(format!("from={}", expr(f)));
            }
            format!("transfer[{res}]({})", args.join(", "))
        }
        GhostCmd::Offer {
            res1,
            res2,
            a1,
            a2,
            to,
            from,
            times,
        } => ghost_offerlike("offer", res1, res2, a1, a2, to, from, times),
        GhostCmd::Revoke {
            res1,
            res2,
            a1,
            a2,
            to,
            from,
            times,
        } => ghost_offerlike("revoke", res1, res2, a1, a2, to, from, times),
        GhostCmd::Exchange {
            res1,
            res2,
            a1,
            a2,
            from,
            to,
            times,
        } => format!(
            "exchange[{res1} <-> {res2}]({}, {}, {}, {}, times={})",
            expr(a1),
            expr(a2),
            expr(from),
            expr(to),
            expr(times)
        ),
        GhostCmd::Trust { who, value } => format!("trust({}, {})", expr(who), expr(value)),
    }
}

#[allow(clippy::too_many_arguments)]
fn ghost_offerlike(
    kw: &str,
    res1: &ResourceRef,
    res2: &ResourceRef,
    a1: &Expr,
    a2: &Expr,
    to: &Expr,
    from: &Option<Expr>,
    times: &Expr,
) -> String {
    let mut args = vec![expr(a1), expr(a2), format!("to={}", expr(to))];
    if let Some(f) = from {
        args.push(format!("from={}", expr(f)));
    }
    args.push(format!("times={}", expr(times)));
    format!("{kw}[{res1} <-> {res2}]({})", args.join(", "))
}

/// Render an expression with conservative parenthesization.
pub fn expr(e: &Expr) -> String {
    match &e.kind {
        ExprKind::IntLit(n) => n.to_string(),
        ExprKind::BoolLit(true) => "True".to_string(),
        ExprKind::BoolLit(false) => "False".to_string(),
        ExprKind::Local(n) => n.name.clone(),
        ExprKind::SelfAddr => "self".to_string(),
        ExprKind::SelfField { field, keys } => {
            let mut s = format!("self.{field}");
            for k in keys {
                s.push_str(&format!("[{}]", expr(k)));
            }
            s
        }
        ExprKind::ExtField {
            target,
            field,
            keys,
        } => {
            let mut s = format!("{}.{field}", atom(target));
            for k in keys {
                s.push_str(&format!("[{}]", expr(k)));
            }
            s
        }
        ExprKind::Balance(t) => format!("{}.balance", atom(t)),
        ExprKind::MsgSender => "msg.sender".to_string(),
        ExprKind::MsgValue => "msg.value".to_string(),
        ExprKind::BlockTimestamp => "block.timestamp".to_string(),
        ExprKind::Result => "result".to_string(),
        ExprKind::Sum(m) => format!("sum({})", expr(m)),
        ExprKind::Allocated { res, owner } => match owner {
            Some(o) => format!("allocated[{res}][{}]", expr(o)),
            None => format!("allocated[{res}]"),
        },
        ExprKind::Offered {
            res1,
            res2,
            a1,
            a2,
            from,
            to,
        } => format!(
            "offered[{res1} <-> {res2}]({}, {}, {}, {})",
            expr(a1),
            expr(a2),
            expr(from),
            expr(to)
        ),
        ExprKind::Trusted { who, by } => format!("trusted({}, {})", expr(who), expr(by)),
        ExprKind::Old { label, expr: e } => {
            let kw = match label {
                None => "old",
                Some(OldLabel::Pre) => "old_pre",
                Some(OldLabel::Last) => "old_last",
                Some(OldLabel::Call) => "old_call",
            };
            format!("{kw}({})", expr(e))
        }
        ExprKind::Unary { op, expr: inner } => match op {
            UnOp::Not => format!("not {}", atom(inner)),
            UnOp::Neg => format!("-{}", atom(inner)),
        },
        ExprKind::Binary { op, lhs, rhs } => {
            let ops = match op {
                BinOp::Add => "+",
                BinOp::Sub => "-",
                BinOp::Mul => "*",
                BinOp::Div => "/",
                BinOp::Mod => "%",
                BinOp::Eq => "==",
                BinOp::Ne => "!=",
                BinOp::Lt => "<",
                BinOp::Le => "<=",
                BinOp::Gt => ">",
                BinOp::Ge => ">=",
                BinOp::And => "and",
                BinOp::Or => "or",
                BinOp::Implies => "==>",
            };
            format!("{} {} {}", atom(lhs), ops, atom(rhs))
        }
        ExprKind::Cond { cond, then, els } => format!(
            "{} if {} else {}",
            atom(then),
            atom(cond),
            atom(els)
        ),
        ExprKind::Forall { vars, body } => {
            let vs: Vec<_> = vars
                .iter()
                .map(|(n, t)| format!("{}: {}", n.name, t))
                .collect::<Vec<_>>();
            format!("forall({{{}}}, {})", vs.join(", "), expr(body))
        }
        ExprKind::StateUnchanged { label } => {
            let kw = match label {
                None => "old",
                Some(OldLabel::Pre) => "old_pre",
                Some(OldLabel::Last) => "old_last",
                Some(OldLabel::Call) => "old_call",
            };
            format!("self == {kw}(self)")
        }
    }
}

/// Render a sub-expression, parenthesizing anything non-atomic.
fn atom(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Binary { .. } | ExprKind::Cond { .. } | ExprKind::Unary { .. } => {
            format!("({})", expr(e))
        }
        _ => expr(e),
    }
}
