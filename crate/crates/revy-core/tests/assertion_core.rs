//! Assertion-truth semantics: worked examples and oracle equivalence against
//! a brute-force split-enumeration evaluator written independently here.

use proptest::prelude::*;
use revy_core::assertion::*;
use revy_core::ast::*;
use revy_core::resource::{Effect, EffectMultiset, OfferKey, ResourceState};
use revy_core::span::Span;
use revy_core::value::{Address, Value};
use std::collections::BTreeMap;

fn sp() -> Span {
    Span::dummy()
}

fn e_int(n: i128) -> Expr {
    Expr::new(ExprKind::IntLit(n), sp())
}

fn e_bool(b: bool) -> Expr {
    Expr::new(ExprKind::BoolLit(b), sp())
}

fn e_addr_local(name: &str) -> Expr {
    Expr::new(ExprKind::Local(Ident::new(name, sp())), sp())
}

fn e_alloc_read(res: &ResourceRef, owner: Expr) -> Expr {
    Expr::new(
        ExprKind::Allocated {
            res: res.clone(),
            owner: Some(Box::new(owner)),
        },
        sp(),
    )
}

fn e_eq(l: Expr, r: Expr) -> Expr {
    Expr::new(
        ExprKind::Binary {
            op: BinOp::Eq,
            lhs: Box::new(l),
            rhs: Box::new(r),
        },
        sp(),
    )
}

fn tok() -> ResourceRef {
    ResourceRef::Named("tok".into())
}

fn gem() -> ResourceRef {
    ResourceRef::Named("gem".into())
}

fn addr(n: u64) -> Address {
    Address(n)
}

fn base_state() -> EvalState {
    EvalState {
        self_addr: addr(1),
        universe: [addr(1), addr(2), addr(3)].into_iter().collect(),
        ..EvalState::default()
    }
}

// ---------------------------------------------------------------------------
// Independent brute-force evaluator (the oracle).
// ---------------------------------------------------------------------------

mod oracle {
    use super::*;

    /// Enumerate all (left, right) splits of a resource state and an effect
    /// multiset, sharing nothing with the implementation's splitter.
    fn splits(
        res: &ResourceState,
        eff: &EffectMultiset,
    ) -> Vec<(ResourceState, EffectMultiset, ResourceState, EffectMultiset)> {
        // Linearize the state into independent splittable units.
        enum Unit {
            Bal(ResourceRef, Address, i128),
            Off((ResourceRef, ResourceRef), OfferKey, i128),
            Trust((Address, Address), bool),
            Eff(Effect, u32),
        }
        let mut units = Vec::new();
        for (r, m) in &res.allocated {
            for (o, a) in m {
                units.push(Unit::Bal(r.clone(), *o, *a));
            }
        }
        for (p, m) in &res.offered {
            for (k, n) in m {
                units.push(Unit::Off(p.clone(), k.clone(), *n));
            }
        }
        for (k, v) in &res.trusted {
            units.push(Unit::Trust(*k, *v));
        }
        for (e, n) in eff.iter() {
            units.push(Unit::Eff(e.clone(), n));
        }

        let mut acc = vec![(
            ResourceState::default(),
            EffectMultiset::new(),
            ResourceState::default(),
            EffectMultiset::new(),
        )];
        for unit in &units {
            let mut next = Vec::new();
            for (lr, le, rr, re) in &acc {
                match unit {
                    Unit::Bal(r, o, a) => {
                        for k in 0..=*a {
                            let mut lr = lr.clone();
                            let mut rr = rr.clone();
                            if k > 0 {
                                lr.allocated.entry(r.clone()).or_default().insert(*o, k);
                            }
                            if a - k > 0 {
                                rr.allocated.entry(r.clone()).or_default().insert(*o, a - k);
                            }
                            next.push((lr, le.clone(), rr, re.clone()));
                        }
                    }
                    Unit::Off(p, key, n) => {
                        for k in 0..=*n {
                            let mut lr = lr.clone();
                            let mut rr = rr.clone();
                            if k > 0 {
                                lr.offered.entry(p.clone()).or_default().insert(key.clone(), k);
                            }
                            if n - k > 0 {
                                rr.offered
                                    .entry(p.clone())
                                    .or_default()
                                    .insert(key.clone(), n - k);
                            }
                            next.push((lr, le.clone(), rr, re.clone()));
                        }
                    }
                    Unit::Trust(k, v) => {
                        let mut lr2 = lr.clone();
                        lr2.trusted.insert(*k, *v);
                        next.push((lr2, le.clone(), rr.clone(), re.clone()));
                        let mut rr2 = rr.clone();
                        rr2.trusted.insert(*k, *v);
                        next.push((lr.clone(), le.clone(), rr2, re.clone()));
                    }
                    Unit::Eff(e, n) => {
                        for k in 0..=*n {
                            let mut le2 = le.clone();
                            let mut re2 = re.clone();
                            for _ in 0..k {
                                le2.add(e.clone());
                            }
                            for _ in 0..(n - k) {
                                re2.add(e.clone());
                            }
                            next.push((lr.clone(), le2, rr.clone(), re2));
                        }
                    }
                }
            }
            acc = next;
        }
        acc
    }

    pub fn models(state: &EvalState, p: &Assertion) -> Result<bool, EvalError> {
        match p {
            Assertion::Emp => {
                Ok(state.resources == ResourceState::default() && state.effects.is_empty())
            }
            Assertion::Expr(e) => {
                let v = eval(e, state)?;
                Ok(v == Value::Bool(true) && state.effects.is_empty())
            }
            Assertion::And(a, b) => Ok(models(state, a)? && models(state, b)?),
            Assertion::Or(a, b) => Ok(models(state, a)? || models(state, b)?),
            Assertion::Star(a, b) => {
                for (lr, le, rr, re) in splits(&state.resources, &state.effects) {
                    let mut ls = state.clone();
                    ls.resources = lr;
                    ls.effects = le;
                    let mut rs = state.clone();
                    rs.resources = rr;
                    rs.effects = re;
                    if models(&ls, a)? && models(&rs, b)? {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
            Assertion::Wand(..) => Err(EvalError::UnsupportedWand),
            Assertion::Perf(effects) => {
                let mut expected = EffectMultiset::new();
                for ee in effects {
                    expected.add(eval_effect(ee, state)?);
                }
                Ok(state.resources == ResourceState::default() && state.effects == expected)
            }
            Assertion::Alloc { res, owner, amount } => {
                let o = eval(owner, state)?.as_addr().unwrap();
                let a = eval(amount, state)?.as_int().unwrap();
                let mut expected = ResourceState::default();
                if a != 0 {
                    expected.allocated.entry(res.clone()).or_default().insert(o, a);
                }
                Ok(state.resources == expected && state.effects.is_empty())
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
                let key = OfferKey {
                    from: eval(from, state)?.as_addr().unwrap(),
                    to: eval(to, state)?.as_addr().unwrap(),
                    a1: eval(a1, state)?.as_int().unwrap(),
                    a2: eval(a2, state)?.as_int().unwrap(),
                };
                let n = eval(times, state)?.as_int().unwrap();
                let mut expected = ResourceState::default();
                if n != 0 {
                    expected
                        .offered
                        .entry((res1.clone(), res2.clone()))
                        .or_default()
                        .insert(key, n);
                }
                Ok(state.resources == expected && state.effects.is_empty())
            }
            Assertion::Trusts { who, by, value } => {
                let mut expected = ResourceState::default();
                expected.trusted.insert(
                    (
                        eval(who, state)?.as_addr().unwrap(),
                        eval(by, state)?.as_addr().unwrap(),
                    ),
                    eval(value, state)?.as_bool().unwrap(),
                );
                Ok(state.resources == expected && state.effects.is_empty())
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Worked examples.
// ---------------------------------------------------------------------------

#[test]
fn empty_state_models_emp() {
    let state = base_state();
    assert!(models(&state, &Assertion::Emp).unwrap());
}

#[test]
fn alloc_three_splits_into_one_plus_two() {
    let mut state = base_state();
    state
        .resources
        .allocated
        .entry(tok())
        .or_default()
        .insert(addr(2), 3);
    let one = Assertion::Alloc {
        res: tok(),
        owner: e_addr("A"),
        amount: e_int(1),
    };
    let two = Assertion::Alloc {
        res: tok(),
        owner: e_addr("A"),
        amount: e_int(2),
    };
    let mut st = state.clone();
    st.locals.insert("A".into(), Value::Addr(addr(2)));
    assert!(models(&st, &Assertion::star(one.clone(), two.clone())).unwrap());
    // but not into 1 + 1
    assert!(!models(&st, &Assertion::star(one.clone(), one)).unwrap());
}

fn e_addr(name: &str) -> Expr {
    e_addr_local(name)
}

#[test]
fn pure_expressions_demand_no_effects() {
    let mut state = base_state();
    assert!(models(&state, &Assertion::Expr(e_bool(true))).unwrap());
    state.effects.add(Effect::Create {
        res: tok(),
        to: addr(2),
        amount: 1,
    });
    assert!(!models(&state, &Assertion::Expr(e_bool(true))).unwrap());
}

#[test]
fn eval_reads_old_snapshots_and_resources() {
    let mut state = base_state();
    state.heap.insert((addr(1), "ended".into()), Value::Bool(true));
    let mut old_heap = state.heap.clone();
    old_heap.insert((addr(1), "ended".into()), Value::Bool(false));
    state
        .olds
        .insert(OldLabel::Last, (old_heap, ResourceState::default()));
    let ended = Expr::new(
        ExprKind::SelfField {
            field: Ident::new("ended", sp()),
            keys: vec![],
        },
        sp(),
    );
    let old_ended = Expr::new(
        ExprKind::Old {
            label: Some(OldLabel::Last),
            expr: Box::new(ended.clone()),
        },
        sp(),
    );
    assert_eq!(eval(&old_ended, &state).unwrap(), Value::Bool(false));
    assert_eq!(eval(&ended, &state).unwrap(), Value::Bool(true));

    // sum over an empty map is 0
    let empty_map = Expr::new(
        ExprKind::SelfField {
            field: Ident::new("m", sp()),
            keys: vec![],
        },
        sp(),
    );
    state.heap.insert(
        (addr(1), "m".into()),
        Value::Map(revy_core::value::ValueMap::new(Value::Int(0))),
    );
    let sum = Expr::new(ExprKind::Sum(Box::new(empty_map)), sp());
    assert_eq!(eval(&sum, &state).unwrap(), Value::Int(0));

    // allocated[tok][A] reads the resource state
    state
        .resources
        .allocated
        .entry(tok())
        .or_default()
        .insert(addr(2), 5);
    state.locals.insert("A".into(), Value::Addr(addr(2)));
    assert_eq!(
        eval(&e_alloc_read(&tok(), e_addr("A")), &state).unwrap(),
        Value::Int(5)
    );
}

#[test]
fn division_by_zero_is_an_error() {
    let state = base_state();
    let div = Expr::new(
        ExprKind::Binary {
            op: BinOp::Div,
            lhs: Box::new(e_int(4)),
            rhs: Box::new(e_int(0)),
        },
        sp(),
    );
    assert_eq!(eval(&div, &state), Err(EvalError::DivisionByZero));
}

fn ended_monotone() -> Assertion {
    // old(ended) ==> ended, over a pseudo-field bound as a local for brevity
    let ended = Expr::new(
        ExprKind::SelfField {
            field: Ident::new("ended", sp()),
            keys: vec![],
        },
        sp(),
    );
    let old_ended = Expr::new(
        ExprKind::Old {
            label: None,
            expr: Box::new(ended.clone()),
        },
        sp(),
    );
    Assertion::Expr(Expr::new(
        ExprKind::Binary {
            op: BinOp::Implies,
            lhs: Box::new(old_ended),
            rhs: Box::new(ended),
        },
        sp(),
    ))
}

#[test]
fn fulfils_binds_the_old_state() {
    let p = ended_monotone();
    let mk = |ended: bool| {
        let mut s = base_state();
        s.heap.insert((addr(1), "ended".into()), Value::Bool(ended));
        s
    };
    assert!(fulfils(&mk(true), &mk(true), &p).unwrap());
    assert!(fulfils(&mk(false), &mk(true), &p).unwrap());
    assert!(!fulfils(&mk(true), &mk(false), &p).unwrap());
    // reflexivity instance: identical states satisfy any reflexive P
    assert!(fulfils(&mk(false), &mk(false), &p).unwrap());
}

#[test]
fn substitute_matches_a_naive_tree_rewrite_and_keeps_labels() {
    // callee post `result == allocated[tok][msg.sender]` instantiated at a
    // call site: self -> t, result -> x, msg.sender -> self
    let post = e_eq(
        Expr::new(ExprKind::Result, sp()),
        Expr::new(
            ExprKind::Allocated {
                res: tok(),
                owner: Some(Box::new(Expr::new(ExprKind::MsgSender, sp()))),
            },
            sp(),
        ),
    );
    let bindings = Bindings {
        self_to: Some(e_addr_local("t")),
        result_to: Some(e_addr_local("x")),
        msg_sender_to: Some(Expr::new(ExprKind::SelfAddr, sp())),
        locals: BTreeMap::new(),
    };
    let got = substitute(&post, &bindings);
    let printed = revy_core::pretty::expr(&got);
    assert_eq!(printed, "x == allocated[tok][self]");

    // empty bindings are the identity (structurally, via the printer)
    let id = substitute(&post, &Bindings::default());
    assert_eq!(revy_core::pretty::expr(&id), revy_core::pretty::expr(&post));

    // nested old_call(..) stays labeled; unlabeled old is untouched by
    // substitution itself
    let nested = Expr::new(
        ExprKind::Old {
            label: Some(OldLabel::Call),
            expr: Box::new(post.clone()),
        },
        sp(),
    );
    let got = substitute(&nested, &bindings);
    assert!(revy_core::pretty::expr(&got).starts_with("old_call("));

    // naive independent rewrite for the plain cases: walk and replace
    fn naive(e: &Expr, b: &Bindings) -> Expr {
        let mut out = e.clone();
        fn go(e: &mut Expr, b: &Bindings) {
            match &e.kind {
                ExprKind::Result => {
                    if let Some(r) = &b.result_to {
                        *e = r.clone();
                    }
                }
                ExprKind::MsgSender => {
                    if let Some(r) = &b.msg_sender_to {
                        *e = r.clone();
                    }
                }
                ExprKind::SelfAddr => {
                    if let Some(r) = &b.self_to {
                        *e = r.clone();
                    }
                }
                _ => revy_core::lower::each_child_mut(e, &mut |c| go(c, b)),
            }
        }
        go(&mut out, b);
        out
    }
    let naive_got = naive(&post, &bindings);
    assert_eq!(
        revy_core::pretty::expr(&substitute(&post, &bindings)),
        revy_core::pretty::expr(&naive_got)
    );
}

#[test]
fn stateless_classification() {
    // logical variable equation: stateless
    let x_true = e_eq(e_addr_local("x1"), e_bool(true));
    assert!(is_stateless_expr(&x_true));
    // current heap read: not stateless
    let ended = Expr::new(
        ExprKind::SelfField {
            field: Ident::new("ended", sp()),
            keys: vec![],
        },
        sp(),
    );
    assert!(!is_stateless_expr(&ended));
    // pre-labeled old of a heap read: stateless
    let old_pre = Expr::new(
        ExprKind::Old {
            label: Some(OldLabel::Pre),
            expr: Box::new(ended.clone()),
        },
        sp(),
    );
    assert!(is_stateless_expr(&old_pre));
    // last-labeled: not
    let old_last = Expr::new(
        ExprKind::Old {
            label: Some(OldLabel::Last),
            expr: Box::new(ended),
        },
        sp(),
    );
    assert!(!is_stateless_expr(&old_last));
}

// ---------------------------------------------------------------------------
// Oracle equivalence and framing properties.
// ---------------------------------------------------------------------------

fn small_state_strategy() -> impl Strategy<Value = EvalState> {
    let bal = proptest::collection::vec(((0..2u8), (1..=3u64), (0..=3i128)), 0..3);
    let off = proptest::collection::vec(
        ((0..2u8), (1..=3u64), (1..=3u64), (0..=2i128), (0..=2i128), (1..=2i128)),
        0..2,
    );
    let trust = proptest::collection::vec(((1..=3u64), (1..=3u64), any::<bool>()), 0..2);
    let effs = proptest::collection::vec(((0..2u8), (1..=3u64), (0..=3i128)), 0..2);
    (bal, off, trust, effs).prop_map(|(bal, off, trust, effs)| {
        let mut state = base_state();
        for (r, o, a) in bal {
            if a > 0 {
                let res = if r == 0 { tok() } else { gem() };
                *state
                    .resources
                    .allocated
                    .entry(res)
                    .or_default()
                    .entry(addr(o))
                    .or_insert(0) += a;
            }
        }
        for (r, f, t, a1, a2, n) in off {
            let pair = if r == 0 { (tok(), gem()) } else { (gem(), tok()) };
            *state
                .resources
                .offered
                .entry(pair)
                .or_default()
                .entry(OfferKey {
                    from: addr(f),
                    to: addr(t),
                    a1,
                    a2,
                })
                .or_insert(0) += n;
        }
        for (a, b, v) in trust {
            state.resources.trusted.insert((addr(a), addr(b)), v);
        }
        for (r, o, a) in effs {
            let res = if r == 0 { tok() } else { gem() };
            state.effects.add(Effect::Create {
                res,
                to: addr(o),
                amount: a,
            });
        }
        state
    })
}

fn leaf_strategy() -> impl Strategy<Value = Assertion> {
    prop_oneof![
        Just(Assertion::Emp),
        ((0..2u8), (1..=3u64), (0..=3i128)).prop_map(|(r, o, a)| Assertion::Alloc {
            res: if r == 0 { tok() } else { gem() },
            owner: e_addr_lit(o),
            amount: e_int(a),
        }),
        ((0..2u8), (1..=3u64), (1..=3u64), (0..=2i128), (0..=2i128), (0..=2i128)).prop_map(
            |(r, f, t, a1, a2, n)| {
                let (r1, r2) = if r == 0 { (tok(), gem()) } else { (gem(), tok()) };
                Assertion::Offers {
                    res1: r1,
                    res2: r2,
                    from: e_addr_lit(f),
                    to: e_addr_lit(t),
                    a1: e_int(a1),
                    a2: e_int(a2),
                    times: e_int(n),
                }
            }
        ),
        ((1..=3u64), (1..=3u64), any::<bool>()).prop_map(|(a, b, v)| Assertion::Trusts {
            who: e_addr_lit(a),
            by: e_addr_lit(b),
            value: e_bool(v),
        }),
        ((0..2u8), (1..=3u64), (0..=3i128)).prop_map(|(r, o, a)| {
            Assertion::Perf(vec![EffectExpr::Create {
                res: if r == 0 { tok() } else { gem() },
                to: e_addr_lit(o),
                amount: e_int(a),
            }])
        }),
        ((0..2u8), (1..=3u64), (0..=3i128)).prop_map(|(r, o, a)| {
            // ghost-state reading pure expression
            Assertion::Expr(e_eq(
                e_alloc_read(&if r == 0 { tok() } else { gem() }, e_addr_lit(o)),
                e_int(a),
            ))
        }),
        any::<bool>().prop_map(|b| Assertion::Expr(e_bool(b))),
    ]
}

/// Address literal via a pre-bound local (the language has no address
/// literals; tests bind a0..a3 in the store).
fn e_addr_lit(n: u64) -> Expr {
    e_addr_local(&format!("a{n}"))
}

fn assertion_strategy() -> impl Strategy<Value = Assertion> {
    leaf_strategy().prop_recursive(2, 12, 3, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Assertion::star(a, b)),
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Assertion::and(a, b)),
            (inner.clone(), inner).prop_map(|(a, b)| Assertion::Or(Box::new(a), Box::new(b))),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 400, ..ProptestConfig::default() })]

    /// models agrees with the brute-force split enumeration on states with
    /// <= 3 addresses, <= 2 resources, amounts <= 3, assertion depth <= 3.
    #[test]
    fn models_matches_the_split_enumeration_oracle(
        mut state in small_state_strategy(),
        p in assertion_strategy(),
    ) {
        for n in 0..=3u64 {
            state.locals.insert(format!("a{n}"), Value::Addr(addr(n)));
        }
        let got = models(&state, &p);
        let want = oracle::models(&state, &p);
        prop_assert_eq!(got, want);
    }

    /// Framing with emp is the identity: models(s, P) <=> models(s, P * emp).
    #[test]
    fn star_emp_is_identity(
        mut state in small_state_strategy(),
        p in assertion_strategy(),
    ) {
        for n in 0..=3u64 {
            state.locals.insert(format!("a{n}"), Value::Addr(addr(n)));
        }
        let plain = models(&state, &p);
        let framed = models(&state, &Assertion::star(p.clone(), Assertion::Emp));
        prop_assert_eq!(plain, framed);
    }
}
