//! AST lowering: statically unrolls `for i in range(k)` loops and inlines
//! private (`_`-prefixed) functions, so that downstream passes see flat,
//! call-explicit bodies.

use crate::ast::*;
use crate::diag::{Error, ErrorKind, Errors};

pub fn lower_program(mut program: Program) -> Result<Program, Errors> {
    let mut errors = Vec::new();
    for unit in &mut program.units {
        if unit.kind != UnitKind::Contract {
            continue;
        }
        if let Err(mut es) = lower_unit(unit) {
            errors.append(&mut es);
        }
    }
    if errors.is_empty() {
        Ok(program)
    } else {
        Err(errors)
    }
}

fn lower_unit(unit: &mut SourceUnit) -> Result<(), Errors> {
    let mut errors = Vec::new();
    let privates: Vec<FunctionDef> = unit
        .functions
        .iter()
        .filter(|f| f.is_private())
        .cloned()
        .collect();
    for f in &privates {
        if f.payable {
            errors.push(Error::new(
                ErrorKind::Structure,
                "private functions cannot be payable",
                f.span,
            ));
        }
        if !f.ensures.is_empty() || !f.performs.is_empty() {
            errors.push(Error::new(
                ErrorKind::Annotation,
                "private functions cannot carry specifications; they are inlined",
                f.span,
            ));
        }
    }

    let mut lowered = Vec::new();
    for f in &unit.functions {
        if f.is_private() {
            continue;
        }
        let mut f = f.clone();
        let mut counter = 0usize;
        let mut stack = vec![f.name.name.clone()];
        match lower_body(&f.body, &privates, &mut counter, &mut stack) {
            Ok(body) => f.body = body,
            Err(mut es) => errors.append(&mut es),
        }
        lowered.push(f);
    }
    unit.functions = lowered;
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

fn lower_body(
    body: &[Stmt],
    privates: &[FunctionDef],
    counter: &mut usize,
    stack: &mut Vec<String>,
) -> Result<Vec<Stmt>, Errors> {
    let mut out = Vec::new();
    for stmt in body {
        match &stmt.kind {
            StmtKind::For { var, count, body } => {
                let inner = lower_body(body, privates, counter, stack)?;
                for i in 0..*count {
                    *counter += 1;
                    let tag = format!("_it{}", *counter);
                    let idx = Expr::new(ExprKind::IntLit(i as i128), stmt.span);
                    let mut iter = rename_locals(&inner, &tag);
                    subst_local_in_stmts(&mut iter, &var.name, &idx);
                    out.extend(iter);
                }
            }
            StmtKind::PrivateCall { result, fun, args } => {
                let callee = privates
                    .iter()
                    .find(|p| p.name.name == fun.name)
                    .ok_or_else(|| {
                        vec![Error::new(
                            ErrorKind::Type,
                            format!("unknown private function `{}`", fun.name),
                            fun.span,
                        )]
                    })?;
                if stack.contains(&callee.name.name) {
                    return Err(vec![Error::new(
                        ErrorKind::Structure,
                        format!("recursive private function `{}`", callee.name.name),
                        fun.span,
                    )]);
                }
                if args.len() != callee.params.len() {
                    return Err(vec![Error::new(
                        ErrorKind::Type,
                        format!(
                            "`{}` expects {} arguments, got {}",
                            callee.name.name,
                            callee.params.len(),
                            args.len()
                        ),
                        fun.span,
                    )]);
                }
                *counter += 1;
                let tag = format!("_in{}", *counter);
                stack.push(callee.name.name.clone());
                let inlined = lower_body(&callee.body, privates, counter, stack)?;
                stack.pop();
                let mut inlined = rename_locals(&inlined, &tag);
                for param in &callee.params {
                    let renamed = format!("{}{}", param.name.name, tag);
                    for s in &mut inlined {
                        rename_local_in_stmt(s, &param.name.name, &renamed);
                    }
                }
                // Bind parameters as fresh locals.
                for (param, arg) in callee.params.iter().zip(args) {
                    out.push(Stmt {
                        kind: StmtKind::LocalDecl {
                            name: Ident::new(format!("{}{}", param.name.name, tag), param.name.span),
                            ty: Some(param.ty.clone()),
                            value: arg.clone(),
                        },
                        span: stmt.span,
                    });
                }
                // A trailing `return e` becomes the result binding.
                let returns = inlined
                    .iter()
                    .any(|s| matches!(s.kind, StmtKind::Return(_)));
                if returns
                    && !matches!(
                        inlined.last().map(|s| &s.kind),
                        Some(StmtKind::Return(_))
                    )
                {
                    return Err(vec![Error::new(
                        ErrorKind::Structure,
                        "`return` must be the last statement of a private function",
                        callee.span,
                    )]);
                }
                if let Some(last) = inlined.last() {
                    if let StmtKind::Return(value) = &last.kind {
                        let ret_stmt = match (result, value) {
                            (Some(res), Some(v)) => Some(Stmt {
                                kind: StmtKind::Assign {
                                    target: LValue::Local(res.clone()),
                                    op: AssignOp::Set,
                                    value: v.clone(),
                                },
                                span: stmt.span,
                            }),
                            (Some(_), None) => {
                                return Err(vec![Error::new(
                                    ErrorKind::Type,
                                    format!(
                                        "`{}` returns no value to bind",
                                        callee.name.name
                                    ),
                                    fun.span,
                                )])
                            }
                            (None, _) => None,
                        };
                        inlined.pop();
                        out.extend(inlined);
                        out.extend(ret_stmt);
                    } else {
                        if result.is_some() {
                            return Err(vec![Error::new(
                                ErrorKind::Type,
                                format!("`{}` returns no value to bind", callee.name.name),
                                fun.span,
                            )]);
                        }
                        out.extend(inlined);
                    }
                } else if result.is_some() {
                    return Err(vec![Error::new(
                        ErrorKind::Type,
                        format!("`{}` returns no value to bind", callee.name.name),
                        fun.span,
                    )]);
                }
            }
            _ => out.push(stmt.clone()),
        }
    }
    Ok(out)
}

/// Rename locals declared within `body` by appending `tag`, to keep unrolled
/// iterations and inlined bodies collision-free.
fn rename_locals(body: &[Stmt], tag: &str) -> Vec<Stmt> {
    let mut declared = Vec::new();
    for s in body {
        collect_decls(s, &mut declared);
    }
    let mut out = body.to_vec();
    for name in declared {
        let renamed = format!("{name}{tag}");
        for s in &mut out {
            rename_local_in_stmt(s, &name, &renamed);
        }
    }
    out
}

fn collect_decls(s: &Stmt, out: &mut Vec<String>) {
    match &s.kind {
        StmtKind::LocalDecl { name, .. } => out.push(name.name.clone()),
        StmtKind::Assign {
            target: LValue::Local(name),
            op: AssignOp::Set,
            ..
        } => {
            // Implicit first-binding declarations are resolved in typecheck;
            // conservatively rename these too.
            if !out.contains(&name.name) {
                out.push(name.name.clone());
            }
        }
        StmtKind::Call {
            result: Some(name), ..
        }
        | StmtKind::PrivateCall {
            result: Some(name), ..
        } => out.push(name.name.clone()),
        _ => {}
    }
}

fn rename_local_in_stmt(s: &mut Stmt, from: &str, to: &str) {
    let rename_ident = |id: &mut Ident| {
        if id.name == from {
            id.name = to.to_string();
        }
    };
    match &mut s.kind {
        StmtKind::LocalDecl { name, value, .. } => {
            rename_local_in_expr(value, from, to);
            rename_ident(name);
        }
        StmtKind::Assign { target, value, .. } => {
            rename_local_in_expr(value, from, to);
            match target {
                LValue::Local(name) => rename_ident(name),
                LValue::SelfField { keys, .. } => {
                    keys.iter_mut().for_each(|k| rename_local_in_expr(k, from, to))
                }
            }
        }
        StmtKind::Assert(e) | StmtKind::StabilityHint(e) => rename_local_in_expr(e, from, to),
        StmtKind::Return(v) => {
            if let Some(v) = v {
                rename_local_in_expr(v, from, to)
            }
        }
        StmtKind::Send { to: t, value } => {
            rename_local_in_expr(t, from, to);
            rename_local_in_expr(value, from, to);
        }
        StmtKind::Call {
            result,
            target,
            args,
            value,
        } => {
            if let Some(r) = result {
                rename_ident(r);
            }
            if let CallTarget::Cast { addr, .. } = target {
                rename_local_in_expr(addr, from, to);
            }
            args.iter_mut().for_each(|a| rename_local_in_expr(a, from, to));
            if let Some(v) = value {
                rename_local_in_expr(v, from, to);
            }
        }
        StmtKind::PrivateCall { result, args, .. } => {
            if let Some(r) = result {
                rename_ident(r);
            }
            args.iter_mut().for_each(|a| rename_local_in_expr(a, from, to));
        }
        StmtKind::Ghost(g) => ghost_exprs_mut(g, &mut |e| rename_local_in_expr(e, from, to)),
        StmtKind::For { var, count: _, body } => {
            rename_ident(var);
            body.iter_mut()
                .for_each(|s| rename_local_in_stmt(s, from, to));
        }
        StmtKind::Pass => {}
    }
}

fn rename_local_in_expr(e: &mut Expr, from: &str, to: &str) {
    let replacement = Expr::new(
        ExprKind::Local(Ident::new(to, e.span)),
        e.span,
    );
    subst_local(e, from, &replacement);
}

fn subst_local_in_stmts(stmts: &mut [Stmt], name: &str, value: &Expr) {
    for s in stmts {
        stmt_exprs_mut(s, &mut |e| subst_local(e, name, value));
    }
}

/// Replace every free occurrence of local `name` by `value`.
pub fn subst_local(e: &mut Expr, name: &str, value: &Expr) {
    if let ExprKind::Local(id) = &e.kind {
        if id.name == name {
            let mut v = value.clone();
            v.span = e.span;
            *e = v;
            return;
        }
    }
    if let ExprKind::Forall { vars, .. } = &e.kind {
        if vars.iter().any(|(v, _)| v.name == name) {
            return; // shadowed
        }
    }
    each_child_mut(e, &mut |c| subst_local(c, name, value));
}

pub fn each_child_mut(e: &mut Expr, f: &mut dyn FnMut(&mut Expr)) {
    match &mut e.kind {
        ExprKind::IntLit(_)
        | ExprKind::BoolLit(_)
        | ExprKind::Local(_)
        | ExprKind::SelfAddr
        | ExprKind::MsgSender
        | ExprKind::MsgValue
        | ExprKind::BlockTimestamp
        | ExprKind::Result
        | ExprKind::StateUnchanged { .. } => {}
        ExprKind::SelfField { keys, .. } => keys.iter_mut().for_each(f),
        ExprKind::ExtField { target, keys, .. } => {
            f(target);
            keys.iter_mut().for_each(f);
        }
        ExprKind::Balance(t) => f(t),
        ExprKind::Sum(m) => f(m),
        ExprKind::Allocated { owner, .. } => {
            if let Some(o) = owner {
                f(o)
            }
        }
        ExprKind::Offered {
            a1, a2, from, to, ..
        } => {
            f(a1);
            f(a2);
            f(from);
            f(to);
        }
        ExprKind::Trusted { who, by } => {
            f(who);
            f(by);
        }
        ExprKind::Old { expr, .. } => f(expr),
        ExprKind::Unary { expr, .. } => f(expr),
        ExprKind::Binary { lhs, rhs, .. } => {
            f(lhs);
            f(rhs);
        }
        ExprKind::Cond { cond, then, els } => {
            f(cond);
            f(then);
            f(els);
        }
        ExprKind::Forall { body, .. } => f(body),
    }
}

/// Visit every expression in a statement.
pub fn stmt_exprs_mut(s: &mut Stmt, f: &mut dyn FnMut(&mut Expr)) {
    match &mut s.kind {
        StmtKind::LocalDecl { value, .. } => f(value),
        StmtKind::Assign { target, value, .. } => {
            if let LValue::SelfField { keys, .. } = target {
                keys.iter_mut().for_each(&mut *f);
            }
            f(value);
        }
        StmtKind::Assert(e) | StmtKind::StabilityHint(e) => f(e),
        StmtKind::Return(v) => {
            if let Some(v) = v {
                f(v)
            }
        }
        StmtKind::Send { to, value } => {
            f(to);
            f(value);
        }
        StmtKind::Call {
            target, args, value, ..
        } => {
            if let CallTarget::Cast { addr, .. } = target {
                f(addr);
            }
            args.iter_mut().for_each(&mut *f);
            if let Some(v) = value {
                f(v);
            }
        }
        StmtKind::PrivateCall { args, .. } => args.iter_mut().for_each(&mut *f),
        StmtKind::Ghost(g) => ghost_exprs_mut(g, f),
        StmtKind::For { body, .. } => body.iter_mut().for_each(|s| stmt_exprs_mut(s, f)),
        StmtKind::Pass => {}
    }
}

pub fn ghost_exprs_mut(g: &mut GhostCmd, f: &mut dyn FnMut(&mut Expr)) {
    match g {
        GhostCmd::Create {
            amount, to, actor, ..
        } => {
            f(amount);
            if let Some(t) = to {
                f(t);
            }
            if let Some(a) = actor {
                f(a);
            }
        }
        GhostCmd::Destroy { amount, actor, .. } => {
            f(amount);
            if let Some(a) = actor {
                f(a);
            }
        }
        GhostCmd::Transfer {
            amount, to, from, ..
        } => {
            f(amount);
            f(to);
            if let Some(fr) = from {
                f(fr);
            }
        }
        GhostCmd::Offer {
            a1,
            a2,
            to,
            from,
            times,
            ..
        }
        | GhostCmd::Revoke {
            a1,
            a2,
            to,
            from,
            times,
            ..
        } => {
            f(a1);
            f(a2);
            f(to);
            if let Some(fr) = from {
                f(fr);
            }
            f(times);
        }
        GhostCmd::Exchange {
            a1,
            a2,
            from,
            to,
            times,
            ..
        } => {
            f(a1);
            f(a2);
            f(from);
            f(to);
            f(times);
        }
        GhostCmd::Trust { who, value } => {
            f(who);
            f(value);
        }
    }
}

/// Immutable visitor over a ghost command's expressions.
pub fn ghost_exprs<'a>(g: &'a GhostCmd, f: &mut dyn FnMut(&'a Expr)) {
    match g {
        GhostCmd::Create {
            amount, to, actor, ..
        } => {
            f(amount);
            if let Some(t) = to {
                f(t);
            }
            if let Some(a) = actor {
                f(a);
            }
        }
        GhostCmd::Destroy { amount, actor, .. } => {
            f(amount);
            if let Some(a) = actor {
                f(a);
            }
        }
        GhostCmd::Transfer {
            amount, to, from, ..
        } => {
            f(amount);
            f(to);
            if let Some(fr) = from {
                f(fr);
            }
        }
        GhostCmd::Offer {
            a1,
            a2,
            to,
            from,
            times,
            ..
        }
        | GhostCmd::Revoke {
            a1,
            a2,
            to,
            from,
            times,
            ..
        } => {
            f(a1);
            f(a2);
            f(to);
            if let Some(fr) = from {
                f(fr);
            }
            f(times);
        }
        GhostCmd::Exchange {
            a1,
            a2,
            from,
            to,
            times,
            ..
        } => {
            f(a1);
            f(a2);
            f(from);
            f(to);
            f(times);
        }
        GhostCmd::Trust { who, value } => {
            f(who);
            f(value);
        }
    }
}
