//! Typed program representation for the contract language, including
//! specification annotations and ghost commands.

use crate::span::Span;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Ident {
    pub name: String,
    pub span: Span,
}

impl Ident {
    pub fn new(name: impl Into<String>, span: Span) -> Self {
        Ident {
            name: name.into(),
            span,
        }
    }
}

impl fmt::Display for Ident {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Type {
    Bool,
    /// Mathematical (signed) integer.
    Int,
    /// Non-negative integer; writes of negative values revert at runtime.
    Uint,
    Address,
    Map(Box<Type>, Box<Type>),
    /// Address statically typed by an interface.
    Interface(String),
}

impl Type {
    pub fn is_numeric(&self) -> bool {
        matches!(self, Type::Int | Type::Uint)
    }

    pub fn is_address_like(&self) -> bool {
        matches!(self, Type::Address | Type::Interface(_))
    }

    /// Whether values of `self` can flow into a slot of type `other`.
    pub fn assignable_to(&self, other: &Type) -> bool {
        match (self, other) {
            (a, b) if a == b => true,
            (Type::Uint, Type::Int) => true,
            // int -> uint narrows; allowed, guarded by a runtime revert / obligation.
            (Type::Int, Type::Uint) => true,
            (Type::Interface(_), Type::Address) => true,
            (Type::Map(k1, v1), Type::Map(k2, v2)) => k1 == k2 && v1.assignable_to(v2),
            _ => false,
        }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Bool => write!(f, "bool"),
            Type::Int => write!(f, "int"),
            Type::Uint => write!(f, "uint"),
            Type::Address => write!(f, "address"),
            Type::Map(k, v) => write!(f, "map({k}, {v})"),
            Type::Interface(n) => write!(f, "{n}"),
        }
    }
}

/// Reference to a resource in source code and specs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ResourceRef {
    /// Built-in Ether resource.
    Wei,
    /// Resource declared by the contract (or an implemented interface).
    Named(String),
    /// `creator(R)`: holding one licenses minting R.
    Creator(Box<ResourceRef>),
}

impl ResourceRef {
    pub fn creator(self) -> ResourceRef {
        ResourceRef::Creator(Box::new(self))
    }

    /// The base named/wei resource under any creator() wrappers.
    pub fn base(&self) -> &ResourceRef {
        match self {
            ResourceRef::Creator(inner) => inner.base(),
            other => other,
        }
    }
}

impl fmt::Display for ResourceRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResourceRef::Wei => write!(f, "wei"),
            ResourceRef::Named(n) => write!(f, "{n}"),
            ResourceRef::Creator(r) => write!(f, "creator({r})"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ResourceDecl {
    pub name: Ident,
    /// `resource: d() derived from r`
    pub derived_from: Option<ResourceRef>,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitKind {
    Contract,
    Interface,
}

/// One `.vy` source unit: a contract or an interface.
#[derive(Debug, Clone)]
pub struct SourceUnit {
    pub kind: UnitKind,
    pub name: Ident,
    pub implements: Vec<Ident>,
    pub fields: Vec<FieldDecl>,
    pub resources: Vec<ResourceDecl>,
    pub specs: SpecSet,
    pub functions: Vec<FunctionDef>,
    /// `#@ no-derived-wei` disables the implicit wei title resource.
    pub no_derived_wei: bool,
    pub span: Span,
}

impl SourceUnit {
    pub fn field(&self, name: &str) -> Option<&FieldDecl> {
        self.fields.iter().find(|f| f.name.name == name)
    }

    pub fn function(&self, name: &str) -> Option<&FunctionDef> {
        self.functions.iter().find(|f| f.name.name == name)
    }

    pub fn constructor(&self) -> Option<&FunctionDef> {
        self.functions.iter().find(|f| f.is_constructor())
    }

    pub fn resource(&self, name: &str) -> Option<&ResourceDecl> {
        self.resources.iter().find(|r| r.name.name == name)
    }

    /// Declared resources derived from `base` (at most one per base).
    pub fn derived_of(&self, base: &ResourceRef) -> Option<&ResourceDecl> {
        self.resources
            .iter()
            .find(|r| r.derived_from.as_ref() == Some(base))
    }
}

#[derive(Debug, Clone)]
pub struct FieldDecl {
    pub name: Ident,
    pub ty: Type,
    pub span: Span,
}

/// Contract- or interface-level specification annotations.
#[derive(Debug, Clone, Default)]
pub struct SpecSet {
    /// `#@ segment:` two-state assertions; hold across every local segment.
    pub segment: Vec<Spec>,
    /// `#@ transitive:` reflexive+transitive; assumable across external calls.
    pub transitive: Vec<Spec>,
    /// `#@ function:` reflexive+transitive; hold between each function's pre/post.
    pub function_constraints: Vec<Spec>,
    /// `#@ privacy:` (interfaces only) `forall({a: address}, msg.sender != a ==> P)`.
    pub privacy: Vec<Spec>,
}

#[derive(Debug, Clone)]
pub struct Spec {
    pub expr: Expr,
    pub span: Span,
}

#[derive(Debug, Clone)]
pub struct FunctionDef {
    pub name: Ident,
    pub params: Vec<Param>,
    pub ret: Option<Type>,
    pub payable: bool,
    pub body: Vec<Stmt>,
    pub ensures: Vec<Spec>,
    /// Effects clause; expressions evaluate in the function's pre-state.
    pub performs: Vec<GhostCmd>,
    pub span: Span,
}

impl FunctionDef {
    pub fn is_constructor(&self) -> bool {
        self.name.name == "__init__"
    }

    pub fn is_private(&self) -> bool {
        !self.is_constructor() && self.name.name.starts_with('_')
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name.name == name)
    }
}

#[derive(Debug, Clone)]
pub struct Param {
    pub name: Ident,
    pub ty: Type,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssignOp {
    Set,
    Add,
    Sub,
}

#[derive(Debug, Clone)]
pub enum LValue {
    Local(Ident),
    /// `self.f`, `self.f[k]`, `self.f[k1][k2]`
    SelfField { field: Ident, keys: Vec<Expr> },
}

/// External call target; always typed by an interface (sends are separate).
#[derive(Debug, Clone)]
pub enum CallTarget {
    /// `self.f.fun(...)` where field `f` has interface type.
    SelfField { field: Ident, fun: Ident },
    /// `Iface(e).fun(...)` cast-call.
    Cast { iface: Ident, addr: Expr, fun: Ident },
}

impl CallTarget {
    pub fn fun(&self) -> &Ident {
        match self {
            CallTarget::SelfField { fun, .. } | CallTarget::Cast { fun, .. } => fun,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
}

#[derive(Debug, Clone)]
pub enum StmtKind {
    Pass,
    /// `x: T = e` or first-binding `x = e`.
    LocalDecl {
        name: Ident,
        ty: Option<Type>,
        value: Expr,
    },
    Assign {
        target: LValue,
        op: AssignOp,
        value: Expr,
    },
    Assert(Expr),
    Return(Option<Expr>),
    /// `send(to, value=v)` — built-in wei transfer via a call on the recipient.
    Send {
        to: Expr,
        value: Expr,
    },
    /// External call; an expression statement or with result binding.
    Call {
        result: Option<Ident>,
        target: CallTarget,
        args: Vec<Expr>,
        value: Option<Expr>,
    },
    /// `self._helper(...)`; inlined before segment splitting.
    PrivateCall {
        result: Option<Ident>,
        fun: Ident,
        args: Vec<Expr>,
    },
    Ghost(GhostCmd),
    /// `for i in range(k):` with literal k; statically unrolled.
    For {
        var: Ident,
        count: u64,
        body: Vec<Stmt>,
    },
    /// `#@ stability-hint: e` — strengthens the stability check of the next call.
    StabilityHint(Expr),
}

/// Ghost commands mutate the resource ledger; also used as effect templates
/// in `performs` clauses.
#[derive(Debug, Clone)]
pub enum GhostCmd {
    /// `create[R](a, to=t, actor=c)`; `to`/`actor` default to msg.sender.
    Create {
        res: ResourceRef,
        amount: Expr,
        to: Option<Expr>,
        actor: Option<Expr>,
    },
    /// `destroy[R](a, actor=f)`; destroys from the actor's balance.
    Destroy {
        res: ResourceRef,
        amount: Expr,
        actor: Option<Expr>,
    },
    /// `transfer[R](a, to=t, from=f)`; `from` defaults to msg.sender.
    Transfer {
        res: ResourceRef,
        amount: Expr,
        to: Expr,
        from: Option<Expr>,
    },
    /// `offer[R1 <-> R2](a1, a2, to=t, from=f, times=n)`
    Offer {
        res1: ResourceRef,
        res2: ResourceRef,
        a1: Expr,
        a2: Expr,
        to: Expr,
        from: Option<Expr>,
        times: Expr,
    },
    Revoke {
        res1: ResourceRef,
        res2: ResourceRef,
        a1: Expr,
        a2: Expr,
        to: Expr,
        from: Option<Expr>,
        times: Expr,
    },
    /// `exchange[R1 <-> R2](a1, a2, from, to, times=n)`
    Exchange {
        res1: ResourceRef,
        res2: ResourceRef,
        a1: Expr,
        a2: Expr,
        from: Expr,
        to: Expr,
        times: Expr,
    },
    /// `trust(c, v)` — sets the caller's trust toward `c`.
    Trust { who: Expr, value: Expr },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OldLabel {
    Pre,
    Last,
    Call,
}

impl fmt::Display for OldLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OldLabel::Pre => write!(f, "pre"),
            OldLabel::Last => write!(f, "last"),
            OldLabel::Call => write!(f, "call"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    Not,
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
    Implies,
}

impl BinOp {
    pub fn is_comparison(&self) -> bool {
        matches!(
            self,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge
        )
    }

    pub fn is_logical(&self) -> bool {
        matches!(self, BinOp::And | BinOp::Or | BinOp::Implies)
    }

    pub fn is_arith(&self) -> bool {
        matches!(
            self,
            BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Mod
        )
    }
}

#[derive(Debug, Clone)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
    /// Filled in by the typechecker.
    pub ty: Option<Type>,
}

impl Expr {
    pub fn new(kind: ExprKind, span: Span) -> Self {
        Expr {
            kind,
            span,
            ty: None,
        }
    }

    pub fn ty(&self) -> &Type {
        self.ty.as_ref().expect("expression not typechecked")
    }
}

#[derive(Debug, Clone)]
pub enum ExprKind {
    IntLit(i128),
    BoolLit(bool),
    /// Parameter, local variable, or quantified variable.
    Local(Ident),
    /// `self` as an address value.
    SelfAddr,
    /// `self.f` with zero or more map keys applied.
    SelfField { field: Ident, keys: Vec<Expr> },
    /// `e.f` — interface field of another contract.
    ExtField {
        target: Box<Expr>,
        field: Ident,
        keys: Vec<Expr>,
    },
    /// `self.balance` or `e.balance` — built-in wei amount.
    Balance(Box<Expr>),
    MsgSender,
    MsgValue,
    BlockTimestamp,
    /// Reserved `result` identifier; postconditions only.
    Result,
    /// `sum(m)` over an address-keyed map expression.
    Sum(Box<Expr>),
    /// `allocated[R]` (map-valued) or `allocated[R][e]`.
    Allocated {
        res: ResourceRef,
        owner: Option<Box<Expr>>,
    },
    /// `offered[R1 <-> R2](a1, a2, from, to)` — offer count.
    Offered {
        res1: ResourceRef,
        res2: ResourceRef,
        a1: Box<Expr>,
        a2: Box<Expr>,
        from: Box<Expr>,
        to: Box<Expr>,
    },
    /// `trusted(a, b)` — does `a` trust `b` here; absent entries read false.
    Trusted { who: Box<Expr>, by: Box<Expr> },
    /// `old(e)` (unlabeled, user specs) or `old_l(e)` (obligation contexts).
    Old {
        label: Option<OldLabel>,
        expr: Box<Expr>,
    },
    Unary {
        op: UnOp,
        expr: Box<Expr>,
    },
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    /// `a if c else b`
    Cond {
        cond: Box<Expr>,
        then: Box<Expr>,
        els: Box<Expr>,
    },
    /// `forall({x: T, ...}, body)`
    Forall {
        vars: Vec<(Ident, Type)>,
        body: Box<Expr>,
    },
    /// Desugared `self == old(self)`: all fields, balance and own resource
    /// state equal between the current and the labeled old state.
    StateUnchanged { label: Option<OldLabel> },
}

/// Walk all sub-expressions (including `self`), pre-order.
pub fn walk_expr<'a>(e: &'a Expr, visit: &mut dyn FnMut(&'a Expr)) {
    visit(e);
    match &e.kind {
        ExprKind::IntLit(_)
        | ExprKind::BoolLit(_)
        | ExprKind::Local(_)
        | ExprKind::SelfAddr
        | ExprKind::MsgSender
        | ExprKind::MsgValue
        | ExprKind::BlockTimestamp
        | ExprKind::Result
        | ExprKind::StateUnchanged { .. } => {}
        ExprKind::SelfField { keys, .. } => keys.iter().for_each(|k| walk_expr(k, visit)),
        ExprKind::ExtField { target, keys, .. } => {
            walk_expr(target, visit);
            keys.iter().for_each(|k| walk_expr(k, visit));
        }
        ExprKind::Balance(t) => walk_expr(t, visit),
        ExprKind::Sum(m) => walk_expr(m, visit),
        ExprKind::Allocated { owner, .. } => {
            if let Some(o) = owner {
                walk_expr(o, visit)
            }
        }
        ExprKind::Offered {
            a1, a2, from, to, ..
        } => {
            walk_expr(a1, visit);
            walk_expr(a2, visit);
            walk_expr(from, visit);
            walk_expr(to, visit);
        }
        ExprKind::Trusted { who, by } => {
            walk_expr(who, visit);
            walk_expr(by, visit);
        }
        ExprKind::Old { expr, .. } => walk_expr(expr, visit),
        ExprKind::Unary { expr, .. } => walk_expr(expr, visit),
        ExprKind::Binary { lhs, rhs, .. } => {
            walk_expr(lhs, visit);
            walk_expr(rhs, visit);
        }
        ExprKind::Cond { cond, then, els } => {
            walk_expr(cond, visit);
            walk_expr(then, visit);
            walk_expr(els, visit);
        }
        ExprKind::Forall { body, .. } => walk_expr(body, visit),
    }
}

/// All statements of a body, recursing into `for` bodies.
pub fn walk_stmts<'a>(stmts: &'a [Stmt], visit: &mut dyn FnMut(&'a Stmt)) {
    for s in stmts {
        visit(s);
        if let StmtKind::For { body, .. } = &s.kind {
            walk_stmts(body, visit);
        }
    }
}

/// A program is a set of parsed source units (contracts and interfaces).
#[derive(Debug, Clone, Default)]
pub struct Program {
    pub units: Vec<SourceUnit>,
}

impl Program {
    pub fn unit(&self, name: &str) -> Option<&SourceUnit> {
        self.units.iter().find(|u| u.name.name == name)
    }

    pub fn contracts(&self) -> impl Iterator<Item = &SourceUnit> {
        self.units.iter().filter(|u| u.kind == UnitKind::Contract)
    }

    pub fn interfaces(&self) -> impl Iterator<Item = &SourceUnit> {
        self.units.iter().filter(|u| u.kind == UnitKind::Interface)
    }
}
