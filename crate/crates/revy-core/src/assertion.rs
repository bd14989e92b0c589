//! Assertion grammar and concrete assertion truth.
//!
//! The separating conjunction splits the resource state and the effect
//! multiset (never the heap); resource singletons (`alloc`, `offers`,
//! `trusts`) and `perf` describe their component exactly; pure expressions
//! tolerate any resource component but demand an empty effect component.

use crate::ast::{BinOp, Expr, ExprKind, OldLabel, ResourceRef, UnOp};
use crate::resource::{Effect, EffectMultiset, OfferKey, ResourceState};
use crate::value::{Address, Amount, Value, ValueMap};
use std::collections::{BTreeMap, BTreeSet};

/// Effect template with expression arguments, used inside `perf(..)`.
#[derive(Debug, Clone)]
pub enum EffectExpr {
    Create {
        res: ResourceRef,
        to: Expr,
        amount: Expr,
    },
    Destroy {
        res: ResourceRef,
        from: Expr,
        amount: Expr,
    },
    Transfer {
        res: ResourceRef,
        from: Expr,
        to: Expr,
        amount: Expr,
    },
    Offer {
        res1: ResourceRef,
        res2: ResourceRef,
        from: Expr,
        to: Expr,
        a1: Expr,
        a2: Expr,
        times: Expr,
    },
    Revoke {
        res1: ResourceRef,
        res2: ResourceRef,
        from: Expr,
        to: Expr,
        a1: Expr,
        a2: Expr,
        times: Expr,
    },
    Exchange {
        res1: ResourceRef,
        res2: ResourceRef,
        from: Expr,
        to: Expr,
        a1: Expr,
        a2: Expr,
        times: Expr,
    },
    Trust {
        truster: Expr,
        trustee: Expr,
        value: Expr,
        scope: Expr,
    },
}

/// Separation-logic assertions over one contract's state.
#[derive(Debug, Clone)]
pub enum Assertion {
    Emp,
    Expr(Expr),
    Star(Box<Assertion>, Box<Assertion>),
    And(Box<Assertion>, Box<Assertion>),
    /// Restricted to the call-rule pattern: the left side must be a
    /// `*`-product of resource singletons with ghost-free arguments.
    Wand(Box<Assertion>, Box<Assertion>),
    Or(Box<Assertion>, Box<Assertion>),
    /// Exactly these effects were performed, and the resource component is
    /// empty.
    Perf(Vec<EffectExpr>),
    /// The resource component is empty except `owner` holding exactly
    /// `amount` of `res`; no effects.
    Alloc {
        res: ResourceRef,
        owner: Expr,
        amount: Expr,
    },
    Offers {
        res1: ResourceRef,
        res2: ResourceRef,
        from: Expr,
        to: Expr,
        a1: Expr,
        a2: Expr,
        times: Expr,
    },
    /// Singleton trust entry (present even when the value is false).
    Trusts { who: Expr, by: Expr, value: Expr },
}

impl Assertion {
    pub fn star(a: Assertion, b: Assertion) -> Assertion {
        Assertion::Star(Box::new(a), Box::new(b))
    }

    pub fn and(a: Assertion, b: Assertion) -> Assertion {
        Assertion::And(Box::new(a), Box::new(b))
    }
}

pub type Heap = BTreeMap<(Address, String), Value>;

/// Semantic state for assertion truth: heap, resource state, effects,
/// labeled old snapshots, and the variable store.
#[derive(Debug, Clone, Default)]
pub struct EvalState {
    pub self_addr: Address,
    pub heap: Heap,
    pub resources: ResourceState,
    pub effects: EffectMultiset,
    pub olds: BTreeMap<OldLabel, (Heap, ResourceState)>,
    pub locals: BTreeMap<String, Value>,
    pub msg_sender: Address,
    pub msg_value: Amount,
    pub block_timestamp: Amount,
    pub result: Option<Value>,
    /// Address universe for evaluating `forall` over addresses.
    pub universe: BTreeSet<Address>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("unresolved old label {0:?}")]
    UnresolvedLabel(Option<OldLabel>),
    #[error("division by zero")]
    DivisionByZero,
    #[error("missing heap entry {0}.{1}")]
    MissingHeapEntry(Address, String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("`result` is not bound")]
    NoResult,
    #[error("type confusion during evaluation")]
    TypeConfusion,
    #[error("sum over a map with non-zero default")]
    NonZeroMapDefault,
    #[error("only address quantification is supported concretely")]
    UnsupportedQuantifier,
    #[error("unsupported magic-wand shape")]
    UnsupportedWand,
    #[error("ghost-state reads are not allowed inside resource singleton arguments")]
    GhostReadInSingletonArg,
    #[error("amount overflow")]
    Overflow,
}

type EResult<T> = Result<T, EvalError>;

impl EvalState {
    fn with_snapshot(&self, heap: Heap, resources: ResourceState) -> EvalState {
        EvalState {
            heap,
            resources,
            ..self.clone()
        }
    }

    fn heap_get(&self, addr: Address, field: &str) -> EResult<Value> {
        self.heap
            .get(&(addr, field.to_string()))
            .cloned()
            .ok_or_else(|| EvalError::MissingHeapEntry(addr, field.to_string()))
    }

    /// Restriction of a heap to one contract's entries.
    fn own_heap<'a>(heap: &'a Heap, addr: Address) -> impl Iterator<Item = (&'a (Address, String), &'a Value)> {
        heap.range((addr, String::new())..=(addr, "\u{10FFFF}".to_string()))
    }
}

fn int_op(op: BinOp, l: i128, r: i128) -> EResult<Value> {
    let arith = |v: Option<i128>| v.map(Value::Int).ok_or(EvalError::Overflow);
    match op {
        BinOp::Add => arith(l.checked_add(r)),
        BinOp::Sub => arith(l.checked_sub(r)),
        BinOp::Mul => arith(l.checked_mul(r)),
        BinOp::Div => {
            if r == 0 {
                Err(EvalError::DivisionByZero)
            } else {
                arith(l.checked_div(r))
            }
        }
        BinOp::Mod => {
            if r == 0 {
                Err(EvalError::DivisionByZero)
            } else {
                arith(l.checked_rem(r))
            }
        }
        BinOp::Lt => Ok(Value::Bool(l < r)),
        BinOp::Le => Ok(Value::Bool(l <= r)),
        BinOp::Gt => Ok(Value::Bool(l > r)),
        BinOp::Ge => Ok(Value::Bool(l >= r)),
        _ => Err(EvalError::TypeConfusion),
    }
}

/// Deterministic expression evaluation; `old_l(e)` evaluates `e` in the
/// snapshot recorded for `l`.
pub fn eval(e: &Expr, state: &EvalState) -> EResult<Value> {
    match &e.kind {
        ExprKind::IntLit(n) => Ok(Value::Int(*n)),
        ExprKind::BoolLit(b) => Ok(Value::Bool(*b)),
        ExprKind::SelfAddr => Ok(Value::Addr(state.self_addr)),
        ExprKind::MsgSender => Ok(Value::Addr(state.msg_sender)),
        ExprKind::MsgValue => Ok(Value::Int(state.msg_value)),
        ExprKind::BlockTimestamp => Ok(Value::Int(state.block_timestamp)),
        ExprKind::Result => state.result.clone().ok_or(EvalError::NoResult),
        ExprKind::Local(id) => state
            .locals
            .get(&id.name)
            .cloned()
            .ok_or_else(|| EvalError::UnknownVariable(id.name.clone())),
        ExprKind::SelfField { field, keys } => {
            let base = state.heap_get(state.self_addr, &field.name)?;
            apply_keys(base, keys, state)
        }
        ExprKind::ExtField {
            target,
            field,
            keys,
        } => {
            let addr = eval(target, state)?.as_addr().ok_or(EvalError::TypeConfusion)?;
            let base = state.heap_get(addr, &field.name)?;
            apply_keys(base, keys, state)
        }
        ExprKind::Balance(t) => {
            let addr = eval(t, state)?.as_addr().ok_or(EvalError::TypeConfusion)?;
            state.heap_get(addr, "balance")
        }
        ExprKind::Sum(m) => {
            let v = eval(m, state)?;
            let Value::Map(map) = v else {
                return Err(EvalError::TypeConfusion);
            };
            if *map.default != Value::Int(0) {
                return Err(EvalError::NonZeroMapDefault);
            }
            let mut total: i128 = 0;
            for v in map.entries.values() {
                total = total
                    .checked_add(v.as_int().ok_or(EvalError::TypeConfusion)?)
                    .ok_or(EvalError::Overflow)?;
            }
            Ok(Value::Int(total))
        }
        ExprKind::Allocated { res, owner } => {
            let balances = state.resources.allocated.get(res);
            match owner {
                Some(o) => {
                    let addr = eval(o, state)?.as_addr().ok_or(EvalError::TypeConfusion)?;
                    Ok(Value::Int(
                        balances.and_then(|m| m.get(&addr)).copied().unwrap_or(0),
                    ))
                }
                None => {
                    let mut map = ValueMap::new(Value::Int(0));
                    if let Some(balances) = balances {
                        for (a, amt) in balances {
                            map.set(Value::Addr(*a), Value::Int(*amt));
                        }
                    }
                    Ok(Value::Map(map))
                }
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
            let key = OfferKey {
                from: eval(from, state)?.as_addr().ok_or(EvalError::TypeConfusion)?,
                to: eval(to, state)?.as_addr().ok_or(EvalError::TypeConfusion)?,
                a1: eval(a1, state)?.as_int().ok_or(EvalError::TypeConfusion)?,
                a2: eval(a2, state)?.as_int().ok_or(EvalError::TypeConfusion)?,
            };
            Ok(Value::Int(state.resources.offer_count(res1, res2, &key)))
        }
        ExprKind::Trusted { who, by } => {
            let owner = eval(who, state)?.as_addr().ok_or(EvalError::TypeConfusion)?;
            let actor = eval(by, state)?.as_addr().ok_or(EvalError::TypeConfusion)?;
            // absent entries read as false; self-trust is implicit
            Ok(Value::Bool(state.resources.is_trusted(owner, actor)))
        }
        ExprKind::Old { label, expr } => {
            let label = label.ok_or(EvalError::UnresolvedLabel(None))?;
            let (heap, res) = state
                .olds
                .get(&label)
                .cloned()
                .ok_or(EvalError::UnresolvedLabel(Some(label)))?;
            eval(expr, &state.with_snapshot(heap, res))
        }
        ExprKind::Unary { op, expr } => {
            let v = eval(expr, state)?;
            match (op, v) {
                (UnOp::Not, Value::Bool(b)) => Ok(Value::Bool(!b)),
                (UnOp::Neg, Value::Int(n)) => Ok(Value::Int(n.checked_neg().ok_or(EvalError::Overflow)?)),
                _ => Err(EvalError::TypeConfusion),
            }
        }
        ExprKind::Binary { op, lhs, rhs } => match op {
            BinOp::And => {
                if eval(lhs, state)?.as_bool().ok_or(EvalError::TypeConfusion)? {
                    eval(rhs, state)
                } else {
                    Ok(Value::Bool(false))
                }
            }
            BinOp::Or => {
                if eval(lhs, state)?.as_bool().ok_or(EvalError::TypeConfusion)? {
                    Ok(Value::Bool(true))
                } else {
                    eval(rhs, state)
                }
            }
            BinOp::Implies => {
                if eval(lhs, state)?.as_bool().ok_or(EvalError::TypeConfusion)? {
                    eval(rhs, state)
                } else {
                    Ok(Value::Bool(true))
                }
            }
            BinOp::Eq | BinOp::Ne => {
                let l = eval(lhs, state)?;
                let r = eval(rhs, state)?;
                let eq = values_equal(&l, &r)?;
                Ok(Value::Bool(if *op == BinOp::Eq { eq } else { !eq }))
            }
            _ => {
                let l = eval(lhs, state)?.as_int().ok_or(EvalError::TypeConfusion)?;
                let r = eval(rhs, state)?.as_int().ok_or(EvalError::TypeConfusion)?;
                int_op(*op, l, r)
            }
        },
        ExprKind::Cond { cond, then, els } => {
            if eval(cond, state)?.as_bool().ok_or(EvalError::TypeConfusion)? {
                eval(then, state)
            } else {
                eval(els, state)
            }
        }
        ExprKind::Forall { vars, body } => {
            eval_forall(vars, body, state, 0)
        }
        ExprKind::StateUnchanged { label } => {
            let label = label.ok_or(EvalError::UnresolvedLabel(None))?;
            let (old_heap, old_res) = state
                .olds
                .get(&label)
                .ok_or(EvalError::UnresolvedLabel(Some(label)))?;
            let now: Vec<_> = EvalState::own_heap(&state.heap, state.self_addr).collect();
            let then: Vec<_> = EvalState::own_heap(old_heap, state.self_addr).collect();
            Ok(Value::Bool(now == then && state.resources == *old_res))
        }
    }
}

fn eval_forall(
    vars: &[(crate::ast::Ident, crate::ast::Type)],
    body: &Expr,
    state: &EvalState,
    idx: usize,
) -> EResult<Value> {
    if idx == vars.len() {
        return eval(body, state);
    }
    let (name, ty) = &vars[idx];
    if !ty.is_address_like() {
        return Err(EvalError::UnsupportedQuantifier);
    }
    for addr in &state.universe {
        let mut inner = state.clone();
        inner.locals.insert(name.name.clone(), Value::Addr(*addr));
        if !eval_forall(vars, body, &inner, idx + 1)?
            .as_bool()
            .ok_or(EvalError::TypeConfusion)?
        {
            return Ok(Value::Bool(false));
        }
    }
    Ok(Value::Bool(true))
}

fn values_equal(l: &Value, r: &Value) -> EResult<bool> {
    match (l, r) {
        (Value::Map(_), Value::Map(_)) => Ok(l == r),
        (Value::Int(a), Value::Int(b)) => Ok(a == b),
        (Value::Bool(a), Value::Bool(b)) => Ok(a == b),
        (Value::Addr(a), Value::Addr(b)) => Ok(a == b),
        _ => Err(EvalError::TypeConfusion),
    }
}

fn apply_keys(base: Value, keys: &[Expr], state: &EvalState) -> EResult<Value> {
    let mut cur = base;
    for k in keys {
        let key = eval(k, state)?;
        let Value::Map(map) = cur else {
            return Err(EvalError::TypeConfusion);
        };
        cur = map.get(&key);
    }
    Ok(cur)
}

pub fn eval_effect(e: &EffectExpr, state: &EvalState) -> EResult<Effect> {
    let addr = |x: &Expr| -> EResult<Address> {
        eval(x, state)?.as_addr().ok_or(EvalError::TypeConfusion)
    };
    let int = |x: &Expr| -> EResult<Amount> {
        eval(x, state)?.as_int().ok_or(EvalError::TypeConfusion)
    };
    Ok(match e {
        EffectExpr::Create { res, to, amount } => Effect::Create {
            res: res.clone(),
            to: addr(to)?,
            amount: int(amount)?,
        },
        EffectExpr::Destroy { res, from, amount } => Effect::Destroy {
            res: res.clone(),
            from: addr(from)?,
            amount: int(amount)?,
        },
        EffectExpr::Transfer {
            res,
            from,
            to,
            amount,
        } => Effect::Transfer {
            res: res.clone(),
            from: addr(from)?,
            to: addr(to)?,
            amount: int(amount)?,
        },
        EffectExpr::Offer {
            res1,
            res2,
            from,
            to,
            a1,
            a2,
            times,
        } => Effect::Offer {
            res1: res1.clone(),
            res2: res2.clone(),
            from: addr(from)?,
            to: addr(to)?,
            a1: int(a1)?,
            a2: int(a2)?,
            times: int(times)?,
        },
        EffectExpr::Revoke {
            res1,
            res2,
            from,
            to,
            a1,
            a2,
            times,
        } => Effect::Revoke {
            res1: res1.clone(),
            res2: res2.clone(),
            from: addr(from)?,
            to: addr(to)?,
            a1: int(a1)?,
            a2: int(a2)?,
            times: int(times)?,
        },
        EffectExpr::Exchange {
            res1,
            res2,
            from,
            to,
            a1,
            a2,
            times,
        } => Effect::Exchange {
            res1: res1.clone(),
            res2: res2.clone(),
            from: addr(from)?,
            to: addr(to)?,
            a1: int(a1)?,
            a2: int(a2)?,
            times: int(times)?,
        },
        EffectExpr::Trust {
            truster,
            trustee,
            value,
            scope,
        } => Effect::Trust {
            truster: addr(truster)?,
            trustee: addr(trustee)?,
            value: eval(value, state)?.as_bool().ok_or(EvalError::TypeConfusion)?,
            scope: addr(scope)?,
        },
    })
}

/// The exact (resources, effects) component described by a singleton leaf.
fn singleton_component(
    a: &Assertion,
    state: &EvalState,
) -> EResult<Option<(ResourceState, EffectMultiset)>> {
    let check_args = |exprs: &[&Expr]| -> EResult<()> {
        for e in exprs {
            if reads_ghost_state(e) {
                return Err(EvalError::GhostReadInSingletonArg);
            }
        }
        Ok(())
    };
    match a {
        Assertion::Emp => Ok(Some((ResourceState::default(), EffectMultiset::new()))),
        Assertion::Alloc { res, owner, amount } => {
            check_args(&[owner, amount])?;
            let o = eval(owner, state)?.as_addr().ok_or(EvalError::TypeConfusion)?;
            let amt = eval(amount, state)?.as_int().ok_or(EvalError::TypeConfusion)?;
            let mut r = ResourceState::default();
            if amt != 0 {
                r.allocated.entry(res.clone()).or_default().insert(o, amt);
            }
            Ok(Some((r, EffectMultiset::new())))
        }
        Assertion::Offers {
            res1,
            res2,
            from,
            to,
            a1,
            a2,
            times,
        } => {
            check_args(&[from, to, a1, a2, times])?;
            let key = OfferKey {
                from: eval(from, state)?.as_addr().ok_or(EvalError::TypeConfusion)?,
                to: eval(to, state)?.as_addr().ok_or(EvalError::TypeConfusion)?,
                a1: eval(a1, state)?.as_int().ok_or(EvalError::TypeConfusion)?,
                a2: eval(a2, state)?.as_int().ok_or(EvalError::TypeConfusion)?,
            };
            let n = eval(times, state)?.as_int().ok_or(EvalError::TypeConfusion)?;
            let mut r = ResourceState::default();
            if n != 0 {
                r.offered
                    .entry((res1.clone(), res2.clone()))
                    .or_default()
                    .insert(key, n);
            }
            Ok(Some((r, EffectMultiset::new())))
        }
        Assertion::Trusts { who, by, value } => {
            check_args(&[who, by, value])?;
            let owner = eval(who, state)?.as_addr().ok_or(EvalError::TypeConfusion)?;
            let actor = eval(by, state)?.as_addr().ok_or(EvalError::TypeConfusion)?;
            let v = eval(value, state)?.as_bool().ok_or(EvalError::TypeConfusion)?;
            let mut r = ResourceState::default();
            r.trusted.insert((owner, actor), v);
            Ok(Some((r, EffectMultiset::new())))
        }
        Assertion::Perf(effects) => {
            let mut e = EffectMultiset::new();
            for ee in effects {
                e.add(eval_effect(ee, state)?);
            }
            Ok(Some((ResourceState::default(), e)))
        }
        _ => Ok(None),
    }
}

fn reads_ghost_state(e: &Expr) -> bool {
    let mut found = false;
    crate::ast::walk_expr(e, &mut |sub| {
        if matches!(
            sub.kind,
            ExprKind::Allocated { .. } | ExprKind::Offered { .. } | ExprKind::Trusted { .. }
        ) {
            found = true;
        }
    });
    found
}

/// Subtract an exact component from a state; None when it does not fit.
fn component_sub(
    res: &ResourceState,
    eff: &EffectMultiset,
    part_res: &ResourceState,
    part_eff: &EffectMultiset,
) -> Option<(ResourceState, EffectMultiset)> {
    let mut r = res.clone();
    for (rid, balances) in &part_res.allocated {
        for (owner, amt) in balances {
            let have = r.balance(rid, *owner);
            if have < *amt {
                return None;
            }
            let m = r.allocated.get_mut(rid).unwrap();
            if have - amt == 0 {
                m.remove(owner);
            } else {
                m.insert(*owner, have - amt);
            }
            if m.is_empty() {
                r.allocated.remove(rid);
            }
        }
    }
    for (pair, offers) in &part_res.offered {
        for (key, n) in offers {
            let have = r.offer_count(&pair.0, &pair.1, key);
            if have < *n {
                return None;
            }
            let m = r.offered.get_mut(pair).unwrap();
            if have - n == 0 {
                m.remove(key);
            } else {
                m.insert(key.clone(), have - n);
            }
            if m.is_empty() {
                r.offered.remove(pair);
            }
        }
    }
    // trust entries combine by disjoint union: the component's entries must
    // be present with the same value and are removed
    for (k, v) in &part_res.trusted {
        if r.trusted.get(k) != Some(v) {
            return None;
        }
        r.trusted.remove(k);
    }
    let e = eff.checked_sub(part_eff)?;
    Some((r, e))
}

/// Assertion truth in a state (the `models` judgement).
pub fn models(state: &EvalState, p: &Assertion) -> EResult<bool> {
    match p {
        Assertion::And(a, b) => Ok(models(state, a)? && models(state, b)?),
        Assertion::Or(a, b) => Ok(models(state, a)? || models(state, b)?),
        Assertion::Expr(e) => {
            let v = eval(e, state)?.as_bool().ok_or(EvalError::TypeConfusion)?;
            Ok(v && state.effects.is_empty())
        }
        Assertion::Wand(lhs, rhs) => {
            // Restricted shape: materialize the (unique) delta described by
            // the left side and evaluate the right side in the grown state.
            let leaves = flatten_star(lhs);
            let mut delta_res = ResourceState::default();
            let delta_eff = EffectMultiset::new();
            for leaf in leaves {
                match singleton_component(leaf, state)? {
                    Some((r, e)) if e.is_empty() => {
                        delta_res = crate::resource::combine(&delta_res, &r)
                            .map_err(|_| EvalError::UnsupportedWand)?;
                    }
                    _ => return Err(EvalError::UnsupportedWand),
                }
            }
            let mut grown = state.clone();
            grown.resources = crate::resource::combine(&grown.resources, &delta_res)
                .map_err(|_| EvalError::UnsupportedWand)?;
            grown.effects = grown.effects.union(&delta_eff);
            models(&grown, rhs)
        }
        Assertion::Star(..) => {
            let leaves = flatten_star(p);
            let mut rest_leaves = Vec::new();
            let mut res = state.resources.clone();
            let mut eff = state.effects.clone();
            for leaf in &leaves {
                match singleton_component(leaf, state)? {
                    Some((r, e)) => match component_sub(&res, &eff, &r, &e) {
                        Some((r2, e2)) => {
                            res = r2;
                            eff = e2;
                        }
                        None => return Ok(false),
                    },
                    None => rest_leaves.push(*leaf),
                }
            }
            match rest_leaves.len() {
                0 => Ok(res == ResourceState::default() && eff.is_empty()),
                1 => {
                    let mut rest_state = state.clone();
                    rest_state.resources = res;
                    rest_state.effects = eff;
                    models(&rest_state, rest_leaves[0])
                }
                _ => {
                    // General split search between compound leaves; only
                    // reachable for non-rule-generated assertions.
                    let mut rest_state = state.clone();
                    rest_state.resources = res;
                    rest_state.effects = eff;
                    models_by_enumeration(&rest_state, &rest_leaves)
                }
            }
        }
        singleton => match singleton_component(singleton, state)? {
            Some((r, e)) => Ok(state.resources == r && state.effects == e),
            None => unreachable!("non-singleton assertion not handled"),
        },
    }
}

fn flatten_star(p: &Assertion) -> Vec<&Assertion> {
    match p {
        Assertion::Star(a, b) => {
            let mut out = flatten_star(a);
            out.extend(flatten_star(b));
            out
        }
        other => vec![other],
    }
}

/// Exhaustive split search used when several compound leaves share a `*`.
fn models_by_enumeration(state: &EvalState, leaves: &[&Assertion]) -> EResult<bool> {
    if leaves.len() == 1 {
        return models(state, leaves[0]);
    }
    let splits = enumerate_splits(&state.resources, &state.effects);
    for (r1, e1, r2, e2) in splits {
        let mut s1 = state.clone();
        s1.resources = r1;
        s1.effects = e1;
        if models(&s1, leaves[0])? {
            let mut s2 = state.clone();
            s2.resources = r2;
            s2.effects = e2;
            if models_by_enumeration(&s2, &leaves[1..])? {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

/// All ways to split a resource state and effect multiset in two.
pub fn enumerate_splits(
    res: &ResourceState,
    eff: &EffectMultiset,
) -> Vec<(ResourceState, EffectMultiset, ResourceState, EffectMultiset)> {
    // every allocated entry, offer entry and trust entry splits independently
    let mut parts: Vec<(ResourceState, ResourceState)> = vec![(
        ResourceState::default(),
        ResourceState::default(),
    )];
    for (rid, balances) in &res.allocated {
        for (owner, amt) in balances {
            let mut next = Vec::new();
            for (left, right) in &parts {
                for k in 0..=*amt {
                    let mut l = left.clone();
                    let mut r = right.clone();
                    if k != 0 {
                        l.allocated.entry(rid.clone()).or_default().insert(*owner, k);
                    }
                    if amt - k != 0 {
                        r.allocated
                            .entry(rid.clone())
                            .or_default()
                            .insert(*owner, amt - k);
                    }
                    next.push((l, r));
                }
            }
            parts = next;
        }
    }
    for (pair, offers) in &res.offered {
        for (key, n) in offers {
            let mut next = Vec::new();
            for (left, right) in &parts {
                for k in 0..=*n {
                    let mut l = left.clone();
                    let mut r = right.clone();
                    if k != 0 {
                        l.offered.entry(pair.clone()).or_default().insert(key.clone(), k);
                    }
                    if n - k != 0 {
                        r.offered
                            .entry(pair.clone())
                            .or_default()
                            .insert(key.clone(), n - k);
                    }
                    next.push((l, r));
                }
            }
            parts = next;
        }
    }
    for (k, v) in &res.trusted {
        let mut next = Vec::new();
        for (left, right) in &parts {
            let mut l = left.clone();
            l.trusted.insert(*k, *v);
            next.push((l, right.clone()));
            let mut r = right.clone();
            r.trusted.insert(*k, *v);
            next.push((left.clone(), r));
        }
        parts = next;
    }

    let mut eff_parts: Vec<(EffectMultiset, EffectMultiset)> =
        vec![(EffectMultiset::new(), EffectMultiset::new())];
    for (e, n) in eff.iter() {
        let mut next = Vec::new();
        for (left, right) in &eff_parts {
            for k in 0..=n {
                let mut l = left.clone();
                let mut r = right.clone();
                for _ in 0..k {
                    l.add(e.clone());
                }
                for _ in 0..(n - k) {
                    r.add(e.clone());
                }
                next.push((l, r));
            }
        }
        eff_parts = next;
    }

    let mut out = Vec::new();
    for (rl, rr) in &parts {
        for (el, er) in &eff_parts {
            out.push((rl.clone(), el.clone(), rr.clone(), er.clone()));
        }
    }
    out
}

/// Two-state fulfilment: evaluates `P` with unlabeled `old(..)` bound to the
/// first state.
pub fn fulfils(old_state: &EvalState, new_state: &EvalState, p: &Assertion) -> EResult<bool> {
    let mut state = new_state.clone();
    state.olds.insert(
        OldLabel::Last,
        (old_state.heap.clone(), old_state.resources.clone()),
    );
    let relabeled = map_assertion_exprs(p, &|e| relabel_old(e, OldLabel::Last));
    models(&state, &relabeled)
}

/// Rewrites unlabeled `old(..)` (and `self == old(self)`) to a concrete label;
/// already-labeled occurrences are left intact.
pub fn relabel_old(e: &Expr, label: OldLabel) -> Expr {
    let mut out = e.clone();
    fn go(e: &mut Expr, label: OldLabel) {
        match &mut e.kind {
            ExprKind::Old { label: slot, .. } if slot.is_none() => {
                *slot = Some(label);
                // labeled subtree: nested unlabeled olds cannot occur (parser
                // rejects old(old(..)) meaningfully), but recurse anyway
                if let ExprKind::Old { expr, .. } = &mut e.kind {
                    go(expr, label);
                }
            }
            ExprKind::StateUnchanged { label: slot } if slot.is_none() => {
                *slot = Some(label);
            }
            _ => crate::lower::each_child_mut(e, &mut |c| go(c, label)),
        }
    }
    go(&mut out, label);
    out
}

/// Apply an expression transform to every expression inside an assertion.
pub fn map_assertion_exprs(p: &Assertion, f: &dyn Fn(&Expr) -> Expr) -> Assertion {
    let map_eff = |ee: &EffectExpr| -> EffectExpr {
        match ee {
            EffectExpr::Create { res, to, amount } => EffectExpr::Create {
                res: res.clone(),
                to: f(to),
                amount: f(amount),
            },
            EffectExpr::Destroy { res, from, amount } => EffectExpr::Destroy {
                res: res.clone(),
                from: f(from),
                amount: f(amount),
            },
            EffectExpr::Transfer {
                res,
                from,
                to,
                amount,
            } => EffectExpr::Transfer {
                res: res.clone(),
                from: f(from),
                to: f(to),
                amount: f(amount),
            },
            EffectExpr::Offer {
                res1,
                res2,
                from,
                to,
                a1,
                a2,
                times,
            } => EffectExpr::Offer {
                res1: res1.clone(),
                res2: res2.clone(),
                from: f(from),
                to: f(to),
                a1: f(a1),
                a2: f(a2),
                times: f(times),
            },
            EffectExpr::Revoke {
                res1,
                res2,
                from,
                to,
                a1,
                a2,
                times,
            } => EffectExpr::Revoke {
                res1: res1.clone(),
                res2: res2.clone(),
                from: f(from),
                to: f(to),
                a1: f(a1),
                a2: f(a2),
                times: f(times),
            },
            EffectExpr::Exchange {
                res1,
                res2,
                from,
                to,
                a1,
                a2,
                times,
            } => EffectExpr::Exchange {
                res1: res1.clone(),
                res2: res2.clone(),
                from: f(from),
                to: f(to),
                a1: f(a1),
                a2: f(a2),
                times: f(times),
            },
            EffectExpr::Trust {
                truster,
                trustee,
                value,
                scope,
            } => EffectExpr::Trust {
                truster: f(truster),
                trustee: f(trustee),
                value: f(value),
                scope: f(scope),
            },
        }
    };
    match p {
        Assertion::Emp => Assertion::Emp,
        Assertion::Expr(e) => Assertion::Expr(f(e)),
        Assertion::Star(a, b) => Assertion::star(map_assertion_exprs(a, f), map_assertion_exprs(b, f)),
        Assertion::And(a, b) => Assertion::and(map_assertion_exprs(a, f), map_assertion_exprs(b, f)),
        Assertion::Or(a, b) => Assertion::Or(
            Box::new(map_assertion_exprs(a, f)),
            Box::new(map_assertion_exprs(b, f)),
        ),
        Assertion::Wand(a, b) => Assertion::Wand(
            Box::new(map_assertion_exprs(a, f)),
            Box::new(map_assertion_exprs(b, f)),
        ),
        Assertion::Perf(es) => Assertion::Perf(es.iter().map(map_eff).collect()),
        Assertion::Alloc { res, owner, amount } => Assertion::Alloc {
            res: res.clone(),
            owner: f(owner),
            amount: f(amount),
        },
        Assertion::Offers {
            res1,
            res2,
            from,
            to,
            a1,
            a2,
            times,
        } => Assertion::Offers {
            res1: res1.clone(),
            res2: res2.clone(),
            from: f(from),
            to: f(to),
            a1: f(a1),
            a2: f(a2),
            times: f(times),
        },
        Assertion::Trusts { who, by, value } => Assertion::Trusts {
            who: f(who),
            by: f(by),
            value: f(value),
        },
    }
}

/// Bindings for rule substitutions: self, result, msg.sender, parameters.
#[derive(Debug, Clone, Default)]
pub struct Bindings {
    pub self_to: Option<Expr>,
    pub result_to: Option<Expr>,
    pub msg_sender_to: Option<Expr>,
    pub locals: BTreeMap<String, Expr>,
}

/// Capture-avoiding syntactic substitution. Quantified variables shadow
/// parameter bindings; bound variables are renamed when a substituted
/// expression would capture them.
pub fn substitute(e: &Expr, bindings: &Bindings) -> Expr {
    let mut counter = 0usize;
    subst_expr(e, bindings, &mut counter)
}

pub fn substitute_assertion(p: &Assertion, bindings: &Bindings) -> Assertion {
    map_assertion_exprs(p, &|e| substitute(e, bindings))
}

fn free_locals(e: &Expr, out: &mut BTreeSet<String>) {
    match &e.kind {
        ExprKind::Local(id) => {
            out.insert(id.name.clone());
        }
        ExprKind::Forall { vars, body } => {
            let mut inner = BTreeSet::new();
            free_locals(body, &mut inner);
            for (v, _) in vars {
                inner.remove(&v.name);
            }
            out.extend(inner);
        }
        _ => {
            let mut copy = e.clone();
            crate::lower::each_child_mut(&mut copy, &mut |c| free_locals(c, out));
        }
    }
}

fn subst_expr(e: &Expr, b: &Bindings, counter: &mut usize) -> Expr {
    let span = e.span;
    match &e.kind {
        ExprKind::SelfAddr => b.self_to.clone().unwrap_or_else(|| e.clone()),
        ExprKind::Result => b.result_to.clone().unwrap_or_else(|| e.clone()),
        ExprKind::MsgSender => b.msg_sender_to.clone().unwrap_or_else(|| e.clone()),
        ExprKind::Local(id) => b.locals.get(&id.name).cloned().unwrap_or_else(|| e.clone()),
        ExprKind::SelfField { field, keys } => {
            let keys: Vec<Expr> = keys.iter().map(|k| subst_expr(k, b, counter)).collect();
            match &b.self_to {
                Some(target) if !matches!(target.kind, ExprKind::SelfAddr) => {
                    let mut out = Expr::new(
                        ExprKind::ExtField {
                            target: Box::new(target.clone()),
                            field: field.clone(),
                            keys,
                        },
                        span,
                    );
                    out.ty = e.ty.clone();
                    out
                }
                _ => {
                    let mut out = Expr::new(
                        ExprKind::SelfField {
                            field: field.clone(),
                            keys,
                        },
                        span,
                    );
                    out.ty = e.ty.clone();
                    out
                }
            }
        }
        ExprKind::Forall { vars, body } => {
            // rename bound vars that any substituted value could capture
            let mut value_frees = BTreeSet::new();
            for v in b.locals.values() {
                free_locals(v, &mut value_frees);
            }
            for opt in [&b.self_to, &b.result_to, &b.msg_sender_to].into_iter().flatten() {
                free_locals(opt, &mut value_frees);
            }
            let mut vars = vars.clone();
            let mut body = (**body).clone();
            let mut inner_bindings = b.clone();
            for (v, _) in &mut vars {
                inner_bindings.locals.remove(&v.name);
                if value_frees.contains(&v.name) {
                    *counter += 1;
                    let fresh = format!("{}#{}", v.name, counter);
                    crate::lower::subst_local(
                        &mut body,
                        &v.name,
                        &Expr::new(ExprKind::Local(crate::ast::Ident::new(fresh.clone(), span)), span),
                    );
                    v.name = fresh;
                }
            }
            let new_body = subst_expr(&body, &inner_bindings, counter);
            let mut out = Expr::new(
                ExprKind::Forall {
                    vars,
                    body: Box::new(new_body),
                },
                span,
            );
            out.ty = e.ty.clone();
            out
        }
        _ => {
            let mut out = e.clone();
            crate::lower::each_child_mut(&mut out, &mut |c| *c = subst_expr(c, b, counter));
            out
        }
    }
}

/// A stateless expression reads no current heap or resource state and no old
/// label except `pre`; such facts survive havoc at external calls.
pub fn is_stateless_expr(e: &Expr) -> bool {
    match &e.kind {
        ExprKind::SelfField { .. }
        | ExprKind::ExtField { .. }
        | ExprKind::Balance(_)
        | ExprKind::Allocated { .. }
        | ExprKind::Offered { .. }
        | ExprKind::Trusted { .. }
        | ExprKind::Sum(_)
        | ExprKind::StateUnchanged { .. } => false,
        ExprKind::Old { label, expr } => match label {
            Some(OldLabel::Pre) => old_subtree_is_pre_resolvable(expr),
            _ => false,
        },
        ExprKind::IntLit(_)
        | ExprKind::BoolLit(_)
        | ExprKind::Local(_)
        | ExprKind::SelfAddr
        | ExprKind::MsgSender
        | ExprKind::MsgValue
        | ExprKind::BlockTimestamp
        | ExprKind::Result => true,
        ExprKind::Unary { expr, .. } => is_stateless_expr(expr),
        ExprKind::Binary { lhs, rhs, .. } => is_stateless_expr(lhs) && is_stateless_expr(rhs),
        ExprKind::Cond { cond, then, els } => {
            is_stateless_expr(cond) && is_stateless_expr(then) && is_stateless_expr(els)
        }
        ExprKind::Forall { body, .. } => is_stateless_expr(body),
    }
}

/// Inside `old_pre(..)` any state reads are fine (they refer to the pre
/// snapshot), as long as no other labels appear.
fn old_subtree_is_pre_resolvable(e: &Expr) -> bool {
    let mut ok = true;
    crate::ast::walk_expr(e, &mut |sub| {
        if let ExprKind::Old { label, .. } = &sub.kind {
            if !matches!(label, Some(OldLabel::Pre)) {
                ok = false;
            }
        }
        if matches!(sub.kind, ExprKind::StateUnchanged { label } if !matches!(label, Some(OldLabel::Pre)))
        {
            ok = false;
        }
    });
    ok
}

/// Statelessness lifted to assertions: resource singletons and `emp`
/// describe the current resource state and are not stateless; `perf` only
/// constrains the activation-local effect multiset and survives calls when
/// its arguments do.
pub fn is_stateless(p: &Assertion) -> bool {
    match p {
        Assertion::Emp
        | Assertion::Alloc { .. }
        | Assertion::Offers { .. }
        | Assertion::Trusts { .. } => false,
        Assertion::Expr(e) => is_stateless_expr(e),
        Assertion::Star(a, b) | Assertion::And(a, b) | Assertion::Or(a, b) | Assertion::Wand(a, b) => {
            is_stateless(a) && is_stateless(b)
        }
        Assertion::Perf(effects) => {
            let mut exprs = Vec::new();
            for ee in effects {
                collect_effect_exprs(ee, &mut exprs);
            }
            exprs.iter().all(|e| is_stateless_expr(e))
        }
    }
}

fn collect_effect_exprs<'a>(ee: &'a EffectExpr, out: &mut Vec<&'a Expr>) {
    match ee {
        EffectExpr::Create { to, amount, .. } => out.extend([to, amount]),
        EffectExpr::Destroy { from, amount, .. } => out.extend([from, amount]),
        EffectExpr::Transfer {
            from, to, amount, ..
        } => out.extend([from, to, amount]),
        EffectExpr::Offer {
            from,
            to,
            a1,
            a2,
            times,
            ..
        }
        | EffectExpr::Revoke {
            from,
            to,
            a1,
            a2,
            times,
            ..
        }
        | EffectExpr::Exchange {
            from,
            to,
            a1,
            a2,
            times,
            ..
        } => out.extend([from, to, a1, a2, times]),
        EffectExpr::Trust {
            truster,
            trustee,
            value,
            scope,
        } => out.extend([truster, trustee, value, scope]),
    }
}
