//! Name resolution, type annotation, specification shape checks, and
//! interface conformance. Deterministic: the same input set yields the same
//! diagnostics in the same order.

use crate::ast::*;
use crate::diag::{Error, ErrorKind, Errors};
use crate::lower::lower_program;
use crate::span::Span;
use std::collections::BTreeMap;

/// Reserved name of the implicit wei title resource declared per contract
/// (contains `#`, so it cannot collide with user identifiers).
pub const IMPLICIT_WEI_TITLE: &str = "wei#title";

/// A parsed `forall({a: address}, msg.sender != a ==> P)` privacy constraint.
#[derive(Debug, Clone)]
pub struct PrivacyForm {
    pub var: Ident,
    /// The guarded body `P` (without the `msg.sender != a` guard).
    pub body: Expr,
    /// The full constraint as written.
    pub full: Expr,
    pub span: Span,
}

#[derive(Debug, Clone, Default)]
pub struct UnitInfo {
    /// Declared resources, including interface-inherited ones and the
    /// implicit wei title for contracts.
    pub resources: Vec<ResourceDecl>,
    /// Name of the wei-derived resource, explicit or implicit, if any.
    pub wei_title: Option<String>,
    pub privacy_forms: Vec<PrivacyForm>,
    /// Local variable types per function (params included).
    pub fn_locals: BTreeMap<String, BTreeMap<String, Type>>,
}

impl UnitInfo {
    pub fn resource(&self, name: &str) -> Option<&ResourceDecl> {
        self.resources.iter().find(|r| r.name.name == name)
    }

    pub fn derived_of(&self, base: &ResourceRef) -> Option<&ResourceDecl> {
        self.resources
            .iter()
            .find(|r| r.derived_from.as_ref() == Some(base))
    }
}

#[derive(Debug, Clone)]
pub struct TypedProgram {
    pub program: Program,
    pub infos: BTreeMap<String, UnitInfo>,
}

impl TypedProgram {
    pub fn unit(&self, name: &str) -> &SourceUnit {
        self.program.unit(name).expect("unknown unit")
    }

    pub fn info(&self, name: &str) -> &UnitInfo {
        &self.infos[name]
    }

    /// Interfaces a contract implements, resolved.
    pub fn interfaces_of<'a>(&'a self, unit: &SourceUnit) -> Vec<&'a SourceUnit> {
        unit.implements
            .iter()
            .filter_map(|i| self.program.unit(&i.name))
            .collect()
    }
}

pub fn typecheck(program: Program) -> Result<TypedProgram, Errors> {
    let program = lower_program(program)?;
    let mut checker = Checker {
        program,
        infos: BTreeMap::new(),
        errors: Vec::new(),
    };
    checker.run();
    if checker.errors.is_empty() {
        Ok(TypedProgram {
            program: checker.program,
            infos: checker.infos,
        })
    } else {
        checker.errors.sort_by_key(|e| (e.span.file, e.span.lo));
        Err(checker.errors)
    }
}

struct Checker {
    program: Program,
    infos: BTreeMap<String, UnitInfo>,
    errors: Errors,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    /// Executable code: no `old`, no `result`, no `forall`.
    Code,
    /// Contract-level constraint: `old` and `forall` allowed.
    Spec,
    /// Function postcondition: additionally allows `result`.
    Ensures,
    /// `performs` template argument: evaluated in the pre-state; no `old`.
    Performs,
    /// Stability hint: current-state expression.
    Hint,
}

impl Mode {
    fn allows_old(self) -> bool {
        matches!(self, Mode::Spec | Mode::Ensures)
    }
    fn allows_forall(self) -> bool {
        matches!(self, Mode::Spec | Mode::Ensures)
    }
}

impl Checker {
    fn err(&mut self, kind: ErrorKind, msg: impl Into<String>, span: Span) {
        self.errors.push(Error::new(kind, msg, span));
    }

    fn run(&mut self) {
        self.check_unit_names();
        // Resolve resources and implements first; expression checking needs them.
        let names: Vec<String> = self.program.units.iter().map(|u| u.name.name.clone()).collect();
        for name in &names {
            self.resolve_unit_structure(name);
        }
        for name in &names {
            self.check_unit(name);
        }
        for name in &names {
            self.check_conformance(name);
        }
    }

    fn check_unit_names(&mut self) {
        let mut seen: BTreeMap<String, Span> = BTreeMap::new();
        for u in &self.program.units {
            if seen.contains_key(&u.name.name) {
                self.errors.push(Error::new(
                    ErrorKind::Structure,
                    format!("duplicate unit name `{}`", u.name.name),
                    u.name.span,
                ));
            } else {
                seen.insert(u.name.name.clone(), u.name.span);
            }
        }
    }

    fn resolve_unit_structure(&mut self, name: &str) {
        let unit = self.program.unit(name).unwrap().clone();
        let mut info = UnitInfo::default();

        // implements targets
        for i in &unit.implements {
            match self.program.unit(&i.name) {
                Some(target) if target.kind == UnitKind::Interface => {}
                Some(_) => self.err(
                    ErrorKind::Type,
                    format!("`{}` is not an interface", i.name),
                    i.span,
                ),
                None => self.err(
                    ErrorKind::Type,
                    format!("unknown interface `{}`", i.name),
                    i.span,
                ),
            }
            if unit.kind == UnitKind::Interface {
                self.err(
                    ErrorKind::Structure,
                    "interfaces cannot implement other interfaces",
                    i.span,
                );
            }
        }

        // Effective resource set: own + inherited from interfaces.
        let mut resources: Vec<ResourceDecl> = unit.resources.clone();
        for i in &unit.implements {
            let inherited: Vec<ResourceDecl> = self
                .program
                .unit(&i.name)
                .map(|t| t.resources.clone())
                .unwrap_or_default();
            for r in inherited {
                if resources.iter().any(|x| x.name.name == r.name.name) {
                    self.err(
                        ErrorKind::Structure,
                        format!(
                            "resource `{}` declared both locally and by interface `{}`",
                            r.name.name, i.name
                        ),
                        unit.span,
                    );
                } else {
                    resources.push(r);
                }
            }
        }
        // duplicates
        for (i, r) in resources.iter().enumerate() {
            if resources[..i].iter().any(|x| x.name.name == r.name.name) {
                self.err(
                    ErrorKind::Structure,
                    format!("duplicate resource `{}`", r.name.name),
                    r.span,
                );
            }
        }
        // derived: base must be wei or a declared non-derived resource; at
        // most one derivation per base; no chains.
        let mut wei_title = None;
        for r in resources.clone() {
            if let Some(base) = &r.derived_from {
                match base {
                    ResourceRef::Wei => {
                        if wei_title.is_some() {
                            self.err(
                                ErrorKind::Structure,
                                "at most one resource may be derived from wei",
                                r.span,
                            );
                        }
                        wei_title = Some(r.name.name.clone());
                    }
                    ResourceRef::Named(base_name) => {
                        match resources.iter().find(|x| x.name.name == *base_name) {
                            None => self.err(
                                ErrorKind::Type,
                                format!("unknown base resource `{base_name}`"),
                                r.span,
                            ),
                            Some(b) if b.derived_from.is_some() => self.err(
                                ErrorKind::Structure,
                                "derived resources cannot be derived from derived resources",
                                r.span,
                            ),
                            Some(_) => {}
                        }
                        let count = resources
                            .iter()
                            .filter(|x| x.derived_from.as_ref() == Some(base))
                            .count();
                        if count > 1 {
                            self.err(
                                ErrorKind::Structure,
                                format!("more than one resource derived from `{base_name}`"),
                                r.span,
                            );
                        }
                    }
                    ResourceRef::Creator(_) => self.err(
                        ErrorKind::Structure,
                        "resources cannot be derived from creator resources",
                        r.span,
                    ),
                }
            }
        }
        // Implicit wei title for contracts unless suppressed or explicit.
        if unit.kind == UnitKind::Contract && !unit.no_derived_wei && wei_title.is_none() {
            resources.push(ResourceDecl {
                name: Ident::new(IMPLICIT_WEI_TITLE, unit.span),
                derived_from: Some(ResourceRef::Wei),
                span: unit.span,
            });
            wei_title = Some(IMPLICIT_WEI_TITLE.to_string());
        }
        info.resources = resources;
        info.wei_title = wei_title;
        self.infos.insert(name.to_string(), info);
    }

    fn check_unit(&mut self, name: &str) {
        let mut unit = self.program.unit(name).unwrap().clone();

        // field name uniqueness; `balance` is reserved.
        let mut seen = Vec::new();
        for f in &unit.fields {
            if seen.contains(&f.name.name) {
                self.err(
                    ErrorKind::Structure,
                    format!("duplicate field `{}`", f.name.name),
                    f.name.span,
                );
            }
            if f.name.name == "balance" {
                self.err(
                    ErrorKind::Structure,
                    "`balance` is a built-in field",
                    f.name.span,
                );
            }
            seen.push(f.name.name.clone());
            self.check_field_type(&f.ty, f.span, &unit.name.name);
        }

        // function name uniqueness; constructor rules
        let mut fn_seen = Vec::new();
        for f in &unit.functions {
            if fn_seen.contains(&f.name.name) {
                self.err(
                    ErrorKind::Structure,
                    format!("duplicate function `{}`", f.name.name),
                    f.name.span,
                );
            }
            fn_seen.push(f.name.name.clone());
        }
        if unit.kind == UnitKind::Contract {
            if unit.constructor().is_none() {
                unit.functions.push(FunctionDef {
                    name: Ident::new("__init__", unit.span),
                    params: Vec::new(),
                    ret: None,
                    payable: false,
                    body: Vec::new(),
                    ensures: Vec::new(),
                    performs: Vec::new(),
                    span: unit.span,
                });
            }
            if let Some(ctor) = unit.constructor() {
                if ctor.ret.is_some() {
                    self.err(
                        ErrorKind::Structure,
                        "the constructor cannot return a value",
                        ctor.span,
                    );
                }
                let mut call_spans = Vec::new();
                walk_stmts(&ctor.body, &mut |s| {
                    if matches!(s.kind, StmtKind::Call { .. } | StmtKind::Send { .. }) {
                        call_spans.push(s.span);
                    }
                });
                for sp in call_spans {
                    self.err(
                        ErrorKind::Structure,
                        "the constructor body must not contain external calls",
                        sp,
                    );
                }
            }
        } else {
            if unit.constructor().is_some() {
                self.err(
                    ErrorKind::Structure,
                    "interfaces cannot declare a constructor",
                    unit.span,
                );
            }
            if !unit.specs.segment.is_empty() || !unit.specs.function_constraints.is_empty() {
                self.err(
                    ErrorKind::Structure,
                    "interfaces declare postconditions, transitive segment constraints and privacy constraints only",
                    unit.span,
                );
            }
            if !unit.resources.is_empty() {
                // allowed: interface-declared resources (e.g. a token resource)
            }
        }
        if unit.kind == UnitKind::Contract && !unit.specs.privacy.is_empty() {
            for p in &unit.specs.privacy {
                self.err(
                    ErrorKind::Structure,
                    "privacy constraints belong on interfaces",
                    p.span,
                );
            }
        }

        // Contract-level specs.
        let mut specs = unit.specs.clone();
        for s in &mut specs.segment {
            self.check_spec_expr(&unit, &mut s.expr, Mode::Spec, None);
            self.require_local_state(&unit, &s.expr, "segment constraints");
            self.forbid_resource_assertions(&s.expr, "segment constraints");
        }
        for s in &mut specs.transitive {
            self.check_spec_expr(&unit, &mut s.expr, Mode::Spec, None);
        }
        for s in &mut specs.function_constraints {
            self.check_spec_expr(&unit, &mut s.expr, Mode::Spec, None);
            self.require_local_state(&unit, &s.expr, "function constraints");
        }
        let mut privacy_forms = Vec::new();
        for s in &mut specs.privacy {
            self.check_spec_expr(&unit, &mut s.expr, Mode::Spec, None);
            match parse_privacy_shape(&s.expr) {
                Some(form) => privacy_forms.push(PrivacyForm {
                    var: form.0,
                    body: form.1,
                    full: s.expr.clone(),
                    span: s.span,
                }),
                None => self.err(
                    ErrorKind::Type,
                    "privacy constraints must have the shape \
                     `forall({a: address}, msg.sender != a ==> P)`",
                    s.span,
                ),
            }
        }
        unit.specs = specs;

        // Functions.
        let mut fn_locals = BTreeMap::new();
        let mut functions = unit.functions.clone();
        for f in &mut functions {
            let locals = self.check_function(&unit, f);
            fn_locals.insert(f.name.name.clone(), locals);
        }
        unit.functions = functions;

        // Store results.
        let info = self.infos.get_mut(name).unwrap();
        info.privacy_forms = privacy_forms;
        info.fn_locals = fn_locals;
        let idx = self
            .program
            .units
            .iter()
            .position(|u| u.name.name == name)
            .unwrap();
        self.program.units[idx] = unit;
    }

    fn check_field_type(&mut self, ty: &Type, span: Span, _unit: &str) {
        match ty {
            Type::Map(k, v) => {
                if !matches!(**k, Type::Address | Type::Int | Type::Uint) {
                    self.err(ErrorKind::Type, "unsupported map key type", span);
                }
                self.check_field_type(v, span, _unit);
            }
            Type::Interface(i) => {
                if self
                    .program
                    .unit(i)
                    .map(|u| u.kind != UnitKind::Interface)
                    .unwrap_or(true)
                {
                    self.err(
                        ErrorKind::Type,
                        format!("unknown type or interface `{i}`"),
                        span,
                    );
                }
            }
            _ => {}
        }
    }

    fn check_function(&mut self, unit: &SourceUnit, f: &mut FunctionDef) -> BTreeMap<String, Type> {
        let mut locals: BTreeMap<String, Type> = BTreeMap::new();
        for p in &f.params {
            if locals.contains_key(&p.name.name) {
                self.err(
                    ErrorKind::Structure,
                    format!("duplicate parameter `{}`", p.name.name),
                    p.name.span,
                );
            }
            self.check_field_type(&p.ty, p.name.span, &unit.name.name);
            locals.insert(p.name.name.clone(), p.ty.clone());
        }
        if f.is_constructor() && f.payable {
            // allowed; balance starts at msg.value
        }

        // Body (interfaces have `pass` bodies).
        let body = std::mem::take(&mut f.body);
        let mut new_body = Vec::new();
        let n = body.len();
        for (i, mut s) in body.into_iter().enumerate() {
            let is_last = i + 1 == n;
            self.check_stmt(unit, f, &mut locals, &mut s, is_last);
            new_body.push(s);
        }
        f.body = new_body;
        if unit.kind == UnitKind::Contract && f.ret.is_some() {
            let returns_value = matches!(
                f.body.last().map(|s| &s.kind),
                Some(StmtKind::Return(Some(_)))
            );
            if !returns_value {
                self.err(
                    ErrorKind::Structure,
                    format!("`{}` must end with `return <expr>`", f.name.name),
                    f.span,
                );
            }
        }

        // Specs attached to the function.
        let mut ensures = std::mem::take(&mut f.ensures);
        for e in &mut ensures {
            self.check_spec_expr_fn(unit, f, &locals, &mut e.expr, Mode::Ensures);
        }
        f.ensures = ensures;
        let mut performs = std::mem::take(&mut f.performs);
        for p in &mut performs {
            self.check_ghost(unit, f, &locals, p, Mode::Performs);
        }
        f.performs = performs;
        locals
    }

    fn check_stmt(
        &mut self,
        unit: &SourceUnit,
        f: &FunctionDef,
        locals: &mut BTreeMap<String, Type>,
        s: &mut Stmt,
        is_last: bool,
    ) {
        let span = s.span;
        match &mut s.kind {
            StmtKind::Pass => {}
            StmtKind::LocalDecl { name, ty, value } => {
                let vt = self.check_expr_fn(unit, f, locals, value, Mode::Code);
                let declared = match ty {
                    Some(t) => {
                        if let Some(vt) = &vt {
                            if !vt.assignable_to(t) {
                                self.err(
                                    ErrorKind::Type,
                                    format!("cannot assign `{vt}` to `{t}`"),
                                    span,
                                );
                            }
                        }
                        t.clone()
                    }
                    None => vt.clone().unwrap_or(Type::Int),
                };
                if locals.contains_key(&name.name) {
                    self.err(
                        ErrorKind::Structure,
                        format!("`{}` is already declared", name.name),
                        name.span,
                    );
                }
                locals.insert(name.name.clone(), declared);
            }
            StmtKind::Assign { target, op, value } => {
                let vt = self.check_expr_fn(unit, f, locals, value, Mode::Code);
                match target {
                    LValue::Local(name) => match locals.get(&name.name) {
                        Some(t) => {
                            let t = t.clone();
                            if *op != AssignOp::Set && !t.is_numeric() {
                                self.err(ErrorKind::Type, "`+=`/`-=` need a numeric target", span);
                            }
                            if let Some(vt) = &vt {
                                if !vt.assignable_to(&t) {
                                    self.err(
                                        ErrorKind::Type,
                                        format!("cannot assign `{vt}` to `{t}`"),
                                        span,
                                    );
                                }
                            }
                        }
                        None => {
                            // first binding declares the local
                            if *op != AssignOp::Set {
                                self.err(
                                    ErrorKind::Type,
                                    format!("unknown identifier `{}`", name.name),
                                    name.span,
                                );
                            }
                            locals.insert(name.name.clone(), vt.clone().unwrap_or(Type::Int));
                        }
                    },
                    LValue::SelfField { field, keys } => {
                        let mut slot = match unit.field(&field.name) {
                            Some(fd) => fd.ty.clone(),
                            None => {
                                self.err(
                                    ErrorKind::Type,
                                    format!(
                                        "contract `{}` has no field `{}` \
                                         (only self fields are assignable)",
                                        unit.name.name, field.name
                                    ),
                                    field.span,
                                );
                                return;
                            }
                        };
                        for k in keys.iter_mut() {
                            let kt = self.check_expr_fn(unit, f, locals, k, Mode::Code);
                            match slot {
                                Type::Map(kty, vty) => {
                                    if let Some(kt) = &kt {
                                        if !kt.assignable_to(&kty) {
                                            self.err(
                                                ErrorKind::Type,
                                                format!("map key has type `{kt}`, expected `{kty}`"),
                                                k.span,
                                            );
                                        }
                                    }
                                    slot = *vty;
                                }
                                _ => {
                                    self.err(ErrorKind::Type, "not a map", k.span);
                                    return;
                                }
                            }
                        }
                        if *op != AssignOp::Set && !slot.is_numeric() {
                            self.err(ErrorKind::Type, "`+=`/`-=` need a numeric target", span);
                        }
                        if let Some(vt) = &vt {
                            if !vt.assignable_to(&slot) {
                                self.err(
                                    ErrorKind::Type,
                                    format!("cannot assign `{vt}` to `{slot}`"),
                                    span,
                                );
                            }
                        }
                    }
                }
            }
            StmtKind::Assert(e) => {
                self.expect_bool(unit, f, locals, e, Mode::Code);
            }
            StmtKind::Return(v) => {
                if !is_last {
                    self.err(
                        ErrorKind::Structure,
                        "`return` must be the last statement",
                        span,
                    );
                }
                match (&f.ret, v) {
                    (Some(rt), Some(v)) => {
                        let rt = rt.clone();
                        if let Some(vt) = self.check_expr_fn(unit, f, locals, v, Mode::Code) {
                            if !vt.assignable_to(&rt) {
                                self.err(
                                    ErrorKind::Type,
                                    format!("returning `{vt}`, expected `{rt}`"),
                                    span,
                                );
                            }
                        }
                    }
                    (None, Some(_)) => {
                        self.err(ErrorKind::Type, "function returns no value", span)
                    }
                    (Some(_), None) => {
                        self.err(ErrorKind::Type, "missing return value", span)
                    }
                    (None, None) => {}
                }
            }
            StmtKind::Send { to, value } => {
                let tt = self.check_expr_fn(unit, f, locals, to, Mode::Code);
                if let Some(tt) = tt {
                    if !tt.is_address_like() {
                        self.err(ErrorKind::Type, "`send` target must be an address", to.span);
                    }
                }
                let vt = self.check_expr_fn(unit, f, locals, value, Mode::Code);
                if let Some(vt) = vt {
                    if !vt.is_numeric() {
                        self.err(ErrorKind::Type, "`send` value must be numeric", value.span);
                    }
                }
            }
            StmtKind::Call {
                result,
                target,
                args,
                value,
            } => {
                let iface_name = match target {
                    CallTarget::SelfField { field, .. } => match unit.field(&field.name) {
                        Some(FieldDecl {
                            ty: Type::Interface(i),
                            ..
                        }) => Some(i.clone()),
                        Some(_) => {
                            self.err(
                                ErrorKind::Type,
                                format!("field `{}` is not interface-typed", field.name),
                                field.span,
                            );
                            None
                        }
                        None => {
                            self.err(
                                ErrorKind::Type,
                                format!("unknown field `{}`", field.name),
                                field.span,
                            );
                            None
                        }
                    },
                    CallTarget::Cast { iface, addr, .. } => {
                        let at = self.check_expr_fn(unit, f, locals, addr, Mode::Code);
                        if let Some(at) = at {
                            if !at.is_address_like() {
                                self.err(
                                    ErrorKind::Type,
                                    "interface cast expects an address",
                                    addr.span,
                                );
                            }
                        }
                        Some(iface.name.clone())
                    }
                };
                let mut arg_tys = Vec::new();
                for a in args.iter_mut() {
                    arg_tys.push(self.check_expr_fn(unit, f, locals, a, Mode::Code));
                }
                if let Some(v) = value {
                    let vt = self.check_expr_fn(unit, f, locals, v, Mode::Code);
                    if let Some(vt) = vt {
                        if !vt.is_numeric() {
                            self.err(ErrorKind::Type, "call value must be numeric", v.span);
                        }
                    }
                }
                let Some(iface_name) = iface_name else { return };
                let iface = match self.program.unit(&iface_name) {
                    Some(u) if u.kind == UnitKind::Interface => u.clone(),
                    _ => {
                        self.err(
                            ErrorKind::Type,
                            format!("unknown interface `{iface_name}`"),
                            span,
                        );
                        return;
                    }
                };
                let fun = target.fun().clone();
                let Some(sig) = iface.function(&fun.name) else {
                    self.err(
                        ErrorKind::Type,
                        format!("interface `{iface_name}` has no function `{}`", fun.name),
                        fun.span,
                    );
                    return;
                };
                if sig.params.len() != args.len() {
                    self.err(
                        ErrorKind::Type,
                        format!(
                            "`{}` expects {} arguments, got {}",
                            fun.name,
                            sig.params.len(),
                            args.len()
                        ),
                        span,
                    );
                }
                for (p, at) in sig.params.iter().zip(arg_tys.iter()) {
                    if let Some(at) = at {
                        if !at.assignable_to(&p.ty) {
                            self.err(
                                ErrorKind::Type,
                                format!("argument has type `{at}`, expected `{}`", p.ty),
                                span,
                            );
                        }
                    }
                }
                if value.is_some() && !sig.payable {
                    self.err(
                        ErrorKind::Type,
                        format!("`{}` is not payable", fun.name),
                        span,
                    );
                }
                match (result, &sig.ret) {
                    (Some(name), Some(rt)) => {
                        if locals.contains_key(&name.name) {
                            self.err(
                                ErrorKind::Structure,
                                format!("`{}` is already declared", name.name),
                                name.span,
                            );
                        }
                        locals.insert(name.name.clone(), rt.clone());
                    }
                    (Some(_), None) => {
                        self.err(
                            ErrorKind::Type,
                            format!("`{}` returns no value to bind", fun.name),
                            span,
                        );
                    }
                    _ => {}
                }
            }
            StmtKind::PrivateCall { .. } | StmtKind::For { .. } => {
                self.err(
                    ErrorKind::Internal,
                    "lowering left a private call or loop behind",
                    span,
                );
            }
            StmtKind::Ghost(g) => {
                let locals_ro = locals.clone();
                self.check_ghost(unit, f, &locals_ro, g, Mode::Code);
            }
            StmtKind::StabilityHint(e) => {
                self.expect_bool(unit, f, locals, e, Mode::Hint);
            }
        }
    }

    fn check_ghost(
        &mut self,
        unit: &SourceUnit,
        f: &FunctionDef,
        locals: &BTreeMap<String, Type>,
        g: &mut GhostCmd,
        mode: Mode,
    ) {
        // Resolve resource references against the effective resource set.
        let resources: Vec<ResourceRef> = match g {
            GhostCmd::Create { res, .. } | GhostCmd::Destroy { res, .. } | GhostCmd::Transfer { res, .. } => {
                vec![res.clone()]
            }
            GhostCmd::Offer { res1, res2, .. }
            | GhostCmd::Revoke { res1, res2, .. }
            | GhostCmd::Exchange { res1, res2, .. } => vec![res1.clone(), res2.clone()],
            GhostCmd::Trust { .. } => vec![],
        };
        for r in &resources {
            self.check_resource_ref(unit, r, f.span);
            if matches!(r.base(), ResourceRef::Wei) && !matches!(r, ResourceRef::Wei) {
                // creator(wei) and deeper: wei has no creator resource
                self.err(
                    ErrorKind::Type,
                    "wei has no creator resource",
                    f.span,
                );
            }
        }
        // Direct ghost manipulation of raw wei is reserved to send/payable
        // flows; offers may name wei on the right-hand side only.
        match g {
            GhostCmd::Create { res, .. } | GhostCmd::Destroy { res, .. } | GhostCmd::Transfer { res, .. } => {
                if *res == ResourceRef::Wei {
                    self.err(
                        ErrorKind::Type,
                        "wei moves via `send` and payable calls, not ghost commands",
                        f.span,
                    );
                }
            }
            GhostCmd::Offer { res1, .. } | GhostCmd::Revoke { res1, .. } => {
                if *res1 == ResourceRef::Wei {
                    self.err(
                        ErrorKind::Type,
                        "cannot offer away wei directly",
                        f.span,
                    );
                }
            }
            GhostCmd::Exchange { res1, res2, .. } => {
                if *res1 == ResourceRef::Wei || *res2 == ResourceRef::Wei {
                    self.err(
                        ErrorKind::Type,
                        "wei cannot take part in ghost exchanges",
                        f.span,
                    );
                }
            }
            GhostCmd::Trust { .. } => {}
        }

        let mut numeric = Vec::new();
        let mut addresses = Vec::new();
        let mut bools = Vec::new();
        match g {
            GhostCmd::Create {
                amount, to, actor, ..
            } => {
                numeric.push(amount);
                if let Some(t) = to {
                    addresses.push(t);
                }
                if let Some(a) = actor {
                    addresses.push(a);
                }
            }
            GhostCmd::Destroy { amount, actor, .. } => {
                numeric.push(amount);
                if let Some(a) = actor {
                    addresses.push(a);
                }
            }
            GhostCmd::Transfer {
                amount, to, from, ..
            } => {
                numeric.push(amount);
                addresses.push(to);
                if let Some(fr) = from {
                    addresses.push(fr);
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
                numeric.push(a1);
                numeric.push(a2);
                numeric.push(times);
                addresses.push(to);
                if let Some(fr) = from {
                    addresses.push(fr);
                }
            }
            GhostCmd::Exchange {
                a1,
                a2,
                from,
                to,
                times,
                ..
            } => {
                numeric.push(a1);
                numeric.push(a2);
                numeric.push(times);
                addresses.push(from);
                addresses.push(to);
            }
            GhostCmd::Trust { who, value } => {
                addresses.push(who);
                bools.push(value);
            }
        }
        for e in numeric {
            if let Some(t) = self.check_expr_fn(unit, f, locals, e, mode) {
                if !t.is_numeric() {
                    self.err(ErrorKind::Type, "expected a numeric amount", e.span);
                }
            }
        }
        for e in addresses {
            if let Some(t) = self.check_expr_fn(unit, f, locals, e, mode) {
                if !t.is_address_like() {
                    self.err(ErrorKind::Type, "expected an address", e.span);
                }
            }
        }
        for e in bools {
            if let Some(t) = self.check_expr_fn(unit, f, locals, e, mode) {
                if t != Type::Bool {
                    self.err(ErrorKind::Type, "expected a boolean", e.span);
                }
            }
        }
    }

    fn check_resource_ref(&mut self, unit: &SourceUnit, r: &ResourceRef, span: Span) {
        match r.base() {
            ResourceRef::Wei => {}
            ResourceRef::Named(n) => {
                let declared = self.infos[&unit.name.name]
                    .resources
                    .iter()
                    .any(|d| d.name.name == *n);
                if !declared {
                    self.err(
                        ErrorKind::Type,
                        format!(
                            "resource `{n}` is not declared by `{}`; ghost commands touch \
                             only resources declared by the contract",
                            unit.name.name
                        ),
                        span,
                    );
                }
            }
            ResourceRef::Creator(_) => unreachable!("base() unwraps creators"),
        }
    }

    /// Typecheck a contract-level spec expression (no function context).
    fn check_spec_expr(
        &mut self,
        unit: &SourceUnit,
        e: &mut Expr,
        mode: Mode,
        _fn_ctx: Option<&FunctionDef>,
    ) {
        let locals = BTreeMap::new();
        let mut ctx = ExprCtx {
            checker: self,
            unit,
            fun: None,
            locals: &locals,
            quantified: Vec::new(),
            mode,
        };
        ctx.infer(e);
    }

    fn check_spec_expr_fn(
        &mut self,
        unit: &SourceUnit,
        f: &FunctionDef,
        locals: &BTreeMap<String, Type>,
        e: &mut Expr,
        mode: Mode,
    ) {
        let mut ctx = ExprCtx {
            checker: self,
            unit,
            fun: Some(f),
            locals,
            quantified: Vec::new(),
            mode,
        };
        ctx.infer(e);
    }

    fn check_expr_fn(
        &mut self,
        unit: &SourceUnit,
        f: &FunctionDef,
        locals: &BTreeMap<String, Type>,
        e: &mut Expr,
        mode: Mode,
    ) -> Option<Type> {
        let mut ctx = ExprCtx {
            checker: self,
            unit,
            fun: Some(f),
            locals,
            quantified: Vec::new(),
            mode,
        };
        ctx.infer(e)
    }

    fn expect_bool(
        &mut self,
        unit: &SourceUnit,
        f: &FunctionDef,
        locals: &BTreeMap<String, Type>,
        e: &mut Expr,
        mode: Mode,
    ) {
        if let Some(t) = self.check_expr_fn(unit, f, locals, e, mode) {
            if t != Type::Bool {
                self.err(ErrorKind::Type, format!("expected bool, found `{t}`"), e.span);
            }
        }
    }

    /// Segment and function constraints reference only the declaring
    /// contract's state.
    fn require_local_state(&mut self, _unit: &SourceUnit, e: &Expr, what: &str) {
        let mut bad = Vec::new();
        walk_expr(e, &mut |sub| match &sub.kind {
            ExprKind::ExtField { .. } => bad.push(sub.span),
            ExprKind::Balance(t) if !matches!(t.kind, ExprKind::SelfAddr) => bad.push(sub.span),
            _ => {}
        });
        for sp in bad {
            self.err(
                ErrorKind::Type,
                format!("{what} reference only the declaring contract's state"),
                sp,
            );
        }
    }

    fn forbid_resource_assertions(&mut self, _e: &Expr, _what: &str) {
        // Resource reads are allowed in all constraint kinds; kept as a hook
        // in case segment constraints need restriction later.
    }

    /// Signature and field conformance of `implements` declarations.
    fn check_conformance(&mut self, name: &str) {
        let unit = self.program.unit(name).unwrap().clone();
        if unit.kind != UnitKind::Contract {
            return;
        }
        for iname in &unit.implements {
            let Some(iface) = self.program.unit(&iname.name) else {
                continue;
            };
            if iface.kind != UnitKind::Interface {
                continue;
            }
            let iface = iface.clone();
            for ifield in &iface.fields {
                match unit.field(&ifield.name.name) {
                    Some(cf) if cf.ty == ifield.ty => {}
                    Some(cf) => self.err(
                        ErrorKind::Type,
                        format!(
                            "field `{}` has type `{}`, interface `{}` declares `{}`",
                            ifield.name.name, cf.ty, iname.name, ifield.ty
                        ),
                        cf.span,
                    ),
                    None => self.err(
                        ErrorKind::Type,
                        format!(
                            "missing field `{}` declared by interface `{}`",
                            ifield.name.name, iname.name
                        ),
                        unit.span,
                    ),
                }
            }
            for ifun in &iface.functions {
                match unit.function(&ifun.name.name) {
                    Some(cf) => {
                        let params_match = cf.params.len() == ifun.params.len()
                            && cf
                                .params
                                .iter()
                                .zip(&ifun.params)
                                .all(|(a, b)| a.ty == b.ty);
                        if !params_match || cf.ret != ifun.ret || cf.payable != ifun.payable {
                            self.err(
                                ErrorKind::Type,
                                format!(
                                    "signature of `{}` does not match interface `{}`",
                                    ifun.name.name, iname.name
                                ),
                                cf.span,
                            );
                        }
                    }
                    None => self.err(
                        ErrorKind::Type,
                        format!(
                            "missing function `{}` declared by interface `{}`",
                            ifun.name.name, iname.name
                        ),
                        unit.span,
                    ),
                }
            }
        }
    }
}

/// Extract `(var, P)` from `forall({a: address}, msg.sender != a ==> P)`.
fn parse_privacy_shape(e: &Expr) -> Option<(Ident, Expr)> {
    let ExprKind::Forall { vars, body } = &e.kind else {
        return None;
    };
    if vars.len() != 1 || vars[0].1 != Type::Address {
        return None;
    }
    let var = vars[0].0.clone();
    let ExprKind::Binary {
        op: BinOp::Implies,
        lhs,
        rhs,
    } = &body.kind
    else {
        return None;
    };
    let ExprKind::Binary {
        op: BinOp::Ne,
        lhs: a,
        rhs: b,
    } = &lhs.kind
    else {
        return None;
    };
    let guard_ok = matches!(
        (&a.kind, &b.kind),
        (ExprKind::MsgSender, ExprKind::Local(v)) if v.name == var.name
    ) || matches!(
        (&a.kind, &b.kind),
        (ExprKind::Local(v), ExprKind::MsgSender) if v.name == var.name
    );
    if !guard_ok {
        return None;
    }
    Some((var, (**rhs).clone()))
}

struct ExprCtx<'a> {
    checker: &'a mut Checker,
    unit: &'a SourceUnit,
    fun: Option<&'a FunctionDef>,
    locals: &'a BTreeMap<String, Type>,
    quantified: Vec<(String, Type)>,
    mode: Mode,
}

impl<'a> ExprCtx<'a> {
    fn err(&mut self, msg: impl Into<String>, span: Span) -> Option<Type> {
        self.checker.err(ErrorKind::Type, msg, span);
        None
    }

    fn set(&mut self, e: &mut Expr, ty: Type) -> Option<Type> {
        e.ty = Some(ty.clone());
        Some(ty)
    }

    fn infer(&mut self, e: &mut Expr) -> Option<Type> {
        // Desugar `self == old(self)` into a state-equality node.
        if let ExprKind::Binary {
            op: BinOp::Eq,
            lhs,
            rhs,
        } = &e.kind
        {
            let label = match (&lhs.kind, &rhs.kind) {
                (ExprKind::SelfAddr, ExprKind::Old { label, expr })
                | (ExprKind::Old { label, expr }, ExprKind::SelfAddr)
                    if matches!(expr.kind, ExprKind::SelfAddr) =>
                {
                    Some(*label)
                }
                _ => None,
            };
            if let Some(label) = label {
                if !self.mode.allows_old() {
                    return self.err("`old` is only allowed in specifications", e.span);
                }
                e.kind = ExprKind::StateUnchanged { label };
                return self.set(e, Type::Bool);
            }
        }

        let span = e.span;
        match &mut e.kind {
            ExprKind::IntLit(_) => self.set(e, Type::Int),
            ExprKind::BoolLit(_) => self.set(e, Type::Bool),
            ExprKind::SelfAddr => self.set(e, Type::Address),
            ExprKind::MsgSender => self.set(e, Type::Address),
            ExprKind::MsgValue => self.set(e, Type::Uint),
            ExprKind::BlockTimestamp => self.set(e, Type::Uint),
            ExprKind::Result => {
                if self.mode != Mode::Ensures {
                    return self.err("`result` is only allowed in `ensures`", span);
                }
                let ret = self.fun.and_then(|f| f.ret.clone());
                match ret {
                    Some(t) => self.set(e, t),
                    None => self.err("function has no return value", span),
                }
            }
            ExprKind::Local(id) => {
                let name = id.name.clone();
                if let Some((_, t)) = self.quantified.iter().rev().find(|(n, _)| *n == name) {
                    let t = t.clone();
                    return self.set(e, t);
                }
                if let Some(t) = self.locals.get(&name) {
                    let t = t.clone();
                    return self.set(e, t);
                }
                self.err(format!("unknown identifier `{name}`"), span)
            }
            ExprKind::SelfField { field, keys } => {
                let Some(fd) = self.unit.field(&field.name) else {
                    let field = field.clone();
                    return self.err(
                        format!("`{}` has no field `{}`", self.unit.name.name, field.name),
                        field.span,
                    );
                };
                let mut ty = fd.ty.clone();
                let mut keys = std::mem::take(keys);
                for k in keys.iter_mut() {
                    let kt = self.infer(k);
                    match ty {
                        Type::Map(kty, vty) => {
                            if let Some(kt) = kt {
                                if !kt.assignable_to(&kty) {
                                    self.err(
                                        format!("map key has type `{kt}`, expected `{kty}`"),
                                        k.span,
                                    );
                                }
                            }
                            ty = *vty;
                        }
                        _ => {
                            return self.err("not a map", k.span);
                        }
                    }
                }
                if let ExprKind::SelfField { keys: slot, .. } = &mut e.kind {
                    *slot = keys;
                }
                self.set(e, ty)
            }
            ExprKind::ExtField {
                target,
                field,
                keys,
            } => {
                let tt = self.infer(target)?;
                let Type::Interface(iname) = tt else {
                    return self.err(
                        "field access on a non-interface expression; type the target \
                         with an interface",
                        span,
                    );
                };
                let Some(iface) = self.checker.program.unit(&iname) else {
                    return self.err(format!("unknown interface `{iname}`"), span);
                };
                let Some(fd) = iface.field(&field.name) else {
                    let field = field.clone();
                    return self.err(
                        format!("interface `{iname}` has no field `{}`", field.name),
                        field.span,
                    );
                };
                let mut ty = fd.ty.clone();
                let mut keys = std::mem::take(keys);
                for k in keys.iter_mut() {
                    let kt = self.infer(k);
                    match ty {
                        Type::Map(kty, vty) => {
                            if let Some(kt) = kt {
                                if !kt.assignable_to(&kty) {
                                    self.err(
                                        format!("map key has type `{kt}`, expected `{kty}`"),
                                        k.span,
                                    );
                                }
                            }
                            ty = *vty;
                        }
                        _ => {
                            return self.err("not a map", k.span);
                        }
                    }
                }
                if let ExprKind::ExtField { keys: slot, .. } = &mut e.kind {
                    *slot = keys;
                }
                self.set(e, ty)
            }
            ExprKind::Balance(t) => {
                let tt = self.infer(t)?;
                if !tt.is_address_like() {
                    return self.err("`.balance` needs an address", span);
                }
                self.set(e, Type::Uint)
            }
            ExprKind::Sum(m) => {
                let mt = self.infer(m)?;
                match mt {
                    Type::Map(k, v) if *k == Type::Address && v.is_numeric() => {
                        let t = *v;
                        self.set(e, t)
                    }
                    _ => self.err("`sum` expects a map over address keys with numeric values", span),
                }
            }
            ExprKind::Allocated { res, owner } => {
                let res = res.clone();
                self.checker.check_resource_ref(self.unit, &res, span);
                let mut owner = std::mem::take(owner);
                if let Some(o) = owner.as_deref_mut() {
                    let ot = self.infer(o);
                    if let Some(ot) = ot {
                        if !ot.is_address_like() {
                            self.err("allocated[..][owner]: owner must be an address", o.span);
                        }
                    }
                }
                let has_owner = owner.is_some();
                if let ExprKind::Allocated { owner: slot, .. } = &mut e.kind {
                    *slot = owner;
                }
                if has_owner {
                    self.set(e, Type::Uint)
                } else {
                    self.set(e, Type::Map(Box::new(Type::Address), Box::new(Type::Uint)))
                }
            }
            ExprKind::Offered {
                res1,
                res2,
                a1,
                a2,
                from,
                to,
            } => {
                let (r1, r2) = (res1.clone(), res2.clone());
                self.checker.check_resource_ref(self.unit, &r1, span);
                self.checker.check_resource_ref(self.unit, &r2, span);
                let mut a1 = std::mem::replace(a1, Box::new(Expr::new(ExprKind::IntLit(0), span)));
                let mut a2 = std::mem::replace(a2, Box::new(Expr::new(ExprKind::IntLit(0), span)));
                let mut from =
                    std::mem::replace(from, Box::new(Expr::new(ExprKind::IntLit(0), span)));
                let mut to = std::mem::replace(to, Box::new(Expr::new(ExprKind::IntLit(0), span)));
                for n in [&mut a1, &mut a2] {
                    if let Some(t) = self.infer(n) {
                        if !t.is_numeric() {
                            self.err("offer amounts are numeric", n.span);
                        }
                    }
                }
                for a in [&mut from, &mut to] {
                    if let Some(t) = self.infer(a) {
                        if !t.is_address_like() {
                            self.err("offer parties are addresses", a.span);
                        }
                    }
                }
                if let ExprKind::Offered {
                    a1: s1,
                    a2: s2,
                    from: sf,
                    to: st,
                    ..
                } = &mut e.kind
                {
                    *s1 = a1;
                    *s2 = a2;
                    *sf = from;
                    *st = to;
                }
                self.set(e, Type::Uint)
            }
            ExprKind::Trusted { who, by } => {
                let mut who = std::mem::replace(who, Box::new(Expr::new(ExprKind::IntLit(0), span)));
                let mut by = std::mem::replace(by, Box::new(Expr::new(ExprKind::IntLit(0), span)));
                for a in [&mut who, &mut by] {
                    if let Some(t) = self.infer(a) {
                        if !t.is_address_like() {
                            self.err("`trusted` takes addresses", a.span);
                        }
                    }
                }
                if let ExprKind::Trusted { who: sw, by: sb } = &mut e.kind {
                    *sw = who;
                    *sb = by;
                }
                self.set(e, Type::Bool)
            }
            ExprKind::Old { expr, .. } => {
                if !self.mode.allows_old() {
                    return self.err(
                        "`old` is only allowed in specifications, never in executable code",
                        span,
                    );
                }
                let mut inner =
                    std::mem::replace(expr, Box::new(Expr::new(ExprKind::IntLit(0), span)));
                let t = self.infer(&mut inner);
                if let ExprKind::Old { expr: slot, .. } = &mut e.kind {
                    *slot = inner;
                }
                let t = t?;
                self.set(e, t)
            }
            ExprKind::Unary { op, expr } => {
                let op = *op;
                let mut inner =
                    std::mem::replace(expr, Box::new(Expr::new(ExprKind::IntLit(0), span)));
                let t = self.infer(&mut inner);
                if let ExprKind::Unary { expr: slot, .. } = &mut e.kind {
                    *slot = inner;
                }
                let t = t?;
                match op {
                    UnOp::Not => {
                        if t != Type::Bool {
                            return self.err("`not` needs a boolean", span);
                        }
                        self.set(e, Type::Bool)
                    }
                    UnOp::Neg => {
                        if !t.is_numeric() {
                            return self.err("negation needs a number", span);
                        }
                        self.set(e, Type::Int)
                    }
                }
            }
            ExprKind::Binary { op, lhs, rhs } => {
                let op = *op;
                let mut l = std::mem::replace(lhs, Box::new(Expr::new(ExprKind::IntLit(0), span)));
                let mut r = std::mem::replace(rhs, Box::new(Expr::new(ExprKind::IntLit(0), span)));
                let lt = self.infer(&mut l);
                let rt = self.infer(&mut r);
                if let ExprKind::Binary {
                    lhs: sl, rhs: sr, ..
                } = &mut e.kind
                {
                    *sl = l;
                    *sr = r;
                }
                let (lt, rt) = (lt?, rt?);
                if op.is_logical() {
                    if lt != Type::Bool || rt != Type::Bool {
                        return self.err("logical operators need booleans", span);
                    }
                    return self.set(e, Type::Bool);
                }
                if op.is_arith() {
                    if !lt.is_numeric() || !rt.is_numeric() {
                        return self.err("arithmetic needs numbers", span);
                    }
                    let t = match op {
                        BinOp::Sub => Type::Int,
                        _ => {
                            if lt == Type::Uint && rt == Type::Uint {
                                Type::Uint
                            } else {
                                Type::Int
                            }
                        }
                    };
                    return self.set(e, t);
                }
                // comparisons
                match op {
                    BinOp::Eq | BinOp::Ne => {
                        if unify(&lt, &rt).is_none() {
                            return self.err(
                                format!("cannot compare `{lt}` with `{rt}`"),
                                span,
                            );
                        }
                        self.set(e, Type::Bool)
                    }
                    _ => {
                        if !lt.is_numeric() || !rt.is_numeric() {
                            return self.err("ordering comparisons need numbers", span);
                        }
                        self.set(e, Type::Bool)
                    }
                }
            }
            ExprKind::Cond { cond, then, els } => {
                let mut c = std::mem::replace(cond, Box::new(Expr::new(ExprKind::IntLit(0), span)));
                let mut t = std::mem::replace(then, Box::new(Expr::new(ExprKind::IntLit(0), span)));
                let mut f = std::mem::replace(els, Box::new(Expr::new(ExprKind::IntLit(0), span)));
                let ct = self.infer(&mut c);
                let tt = self.infer(&mut t);
                let ft = self.infer(&mut f);
                if let ExprKind::Cond {
                    cond: sc,
                    then: st,
                    els: se,
                } = &mut e.kind
                {
                    *sc = c;
                    *st = t;
                    *se = f;
                }
                if let Some(ct) = ct {
                    if ct != Type::Bool {
                        self.err("ternary condition must be boolean", span);
                    }
                }
                let (tt, ft) = (tt?, ft?);
                match unify(&tt, &ft) {
                    Some(t) => self.set(e, t),
                    None => self.err(
                        format!("ternary branches have types `{tt}` and `{ft}`"),
                        span,
                    ),
                }
            }
            ExprKind::Forall { vars, body } => {
                if !self.mode.allows_forall() {
                    return self.err("`forall` is only allowed in specifications", span);
                }
                let vars = vars.clone();
                let mut inner =
                    std::mem::replace(body, Box::new(Expr::new(ExprKind::IntLit(0), span)));
                for (v, t) in &vars {
                    self.quantified.push((v.name.clone(), t.clone()));
                }
                let bt = self.infer(&mut inner);
                for _ in &vars {
                    self.quantified.pop();
                }
                if let ExprKind::Forall { body: slot, .. } = &mut e.kind {
                    *slot = inner;
                }
                if let Some(bt) = bt {
                    if bt != Type::Bool {
                        return self.err("`forall` body must be boolean", span);
                    }
                }
                self.set(e, Type::Bool)
            }
            ExprKind::StateUnchanged { .. } => self.set(e, Type::Bool),
        }
    }
}

/// Join of two types for `==`/ternary; `None` when incompatible.
fn unify(a: &Type, b: &Type) -> Option<Type> {
    if a == b {
        return Some(a.clone());
    }
    match (a, b) {
        (x, y) if x.is_numeric() && y.is_numeric() => Some(Type::Int),
        (x, y) if x.is_address_like() && y.is_address_like() => Some(Type::Address),
        (Type::Map(k1, v1), Type::Map(k2, v2)) if k1 == k2 => {
            let v = unify(v1, v2)?;
            Some(Type::Map(k1.clone(), Box::new(v)))
        }
        _ => None,
    }
}
