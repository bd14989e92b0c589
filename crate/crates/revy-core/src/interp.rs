//! Deterministic executable semantics with revert, plus a bounded
//! adversarial environment that exercises re-entrancy and dynamically checks
//! every declared constraint. This is the falsification oracle paired with
//! the static verifier.

use crate::assertion::{fulfils, Assertion, EvalState, Heap};
use crate::ast::*;
use crate::resource::{
    self, DerivedCtx, DerivedDestroyed, Effect, EffectMultiset, GhostContext, OfferKey,
    ResourceInfo, ResourceState,
};
use crate::span::Span;
use crate::typecheck::TypedProgram;
use crate::value::{Address, Amount, Value};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Instance {
    pub unit: String,
    pub fields: BTreeMap<String, Value>,
    pub balance: Amount,
    pub resources: ResourceState,
}

/// Contract instances plus opaque adversary-controlled identities. Only a
/// contract's own functions mutate its heap; adversaries hold unbounded wei.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct World {
    pub instances: BTreeMap<Address, Instance>,
    pub externals: Vec<Address>,
    pub block_timestamp: Amount,
}

impl World {
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.hash(&mut h);
        h.finish()
    }

    fn global_heap(&self) -> Heap {
        let mut heap = Heap::new();
        for (addr, inst) in &self.instances {
            for (f, v) in &inst.fields {
                heap.insert((*addr, f.clone()), v.clone());
            }
            heap.insert((*addr, "balance".into()), Value::Int(inst.balance));
        }
        heap
    }

    fn universe(&self) -> BTreeSet<Address> {
        let mut u: BTreeSet<Address> = self.instances.keys().copied().collect();
        u.extend(self.externals.iter().copied());
        u.insert(Address(0));
        u
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RevertReason {
    AssertFailed,
    GhostPrecondition(String),
    UintUnderflow,
    DivisionByZero,
    NotPayable,
    InsufficientWei,
    MissingFunction(String),
    CallDepthExceeded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    SegmentConstraint,
    TransitiveConstraint,
    FunctionConstraint,
    Postcondition,
    EffectsMismatch,
    ResourcePrecondition,
    PrivacyConstraint,
}

impl std::fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ViolationKind::SegmentConstraint => "segment-constraint",
            ViolationKind::TransitiveConstraint => "transitive-constraint",
            ViolationKind::FunctionConstraint => "function-constraint",
            ViolationKind::Postcondition => "postcondition",
            ViolationKind::EffectsMismatch => "effects-mismatch",
            ViolationKind::ResourcePrecondition => "resource-precondition",
            ViolationKind::PrivacyConstraint => "privacy-constraint",
        };
        f.write_str(s)
    }
}

/// One adversary-issued call.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Invocation {
    pub caller: Address,
    pub target: Address,
    pub function: String,
    pub args: Vec<Value>,
    pub value: Amount,
}

impl std::fmt::Display for Invocation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let args: Vec<String> = self.args.iter().map(|a| a.to_string()).collect();
        write!(
            f,
            "{} calls {}.{}({})",
            self.caller,
            self.target,
            self.function,
            args.join(", ")
        )?;
        if self.value != 0 {
            write!(f, " value={}", self.value)?;
        }
        Ok(())
    }
}

/// Ordered lists of re-entrant invocations, indexed by the order in which
/// control enters adversary-controlled code during one transaction.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AdversaryScript {
    pub entries: Vec<Vec<Invocation>>,
}

impl AdversaryScript {
    pub fn total(&self) -> usize {
        self.entries.iter().map(|l| l.len()).sum()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceStep {
    pub description: String,
    pub location: Option<String>,
}

/// A scenario that reproduces a violation: the recorded transactions with
/// their adversary scripts, starting from the deployed world.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trace {
    pub transactions: Vec<(Invocation, AdversaryScript)>,
    pub steps: Vec<TraceStep>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub contract: String,
    pub function: String,
    pub message: String,
    pub location: Option<String>,
    pub trace: Trace,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum InterpError {
    #[error("cannot wire constructor argument of `{0}`: {1}")]
    Setup(String, String),
    #[error("constructor of `{0}` reverted: {1:?}")]
    ConstructorReverted(String, RevertReason),
    #[error("evaluation failure: {0}")]
    Eval(#[from] crate::assertion::EvalError),
}

/// Enumeration bounds: re-entrancy depth, total invocation budget for one
/// scenario (top-level transactions plus scripted calls), and the finite
/// argument domains.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Bounds {
    pub depth: usize,
    pub budget: usize,
    pub amounts: Vec<Amount>,
    /// Extra amount candidates of the form field+1 resolved per target.
    pub field_plus_one: Vec<String>,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            depth: 2,
            budget: 6,
            amounts: vec![0, 1, 2],
            field_plus_one: vec!["highestBid".into()],
        }
    }
}

pub struct Interp<'a> {
    pub program: &'a TypedProgram,
    pub sources: &'a crate::span::SourceMap,
}

struct Activation {
    self_addr: Address,
    unit: String,
    msg_sender: Address,
    msg_value: Amount,
    locals: BTreeMap<String, Value>,
    effects: EffectMultiset,
    /// Declared `performs`, evaluated in the pre-state.
    declared: EffectMultiset,
    /// Union of the declared effects of directly called functions.
    callee_declared: EffectMultiset,
    seg_start: (Heap, ResourceState),
    fn_pre: (Heap, ResourceState),
}

struct Run<'a, 'b> {
    interp: &'a Interp<'b>,
    script: &'a AdversaryScript,
    /// Next adversary entry ordinal.
    cursor: usize,
    /// Current adversary nesting depth.
    adv_depth: usize,
    max_depth: usize,
    /// Ordinals actually reached during this run.
    reached_entries: usize,
    executed_invocations: usize,
    check: bool,
    violation: Option<Violation>,
    steps: Vec<TraceStep>,
    snapshots: Vec<BoundarySnapshot>,
    /// World fingerprint after each entry ordinal's scripted list finished.
    entry_post_fps: Vec<u64>,
    /// (entry-world fingerprint, invocation) pairs observed to revert without
    /// consuming nested entries; appending them at that state is a no-op.
    learned_useless: Vec<(u64, Invocation)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundarySnapshot {
    pub contract: String,
    pub function: String,
    pub boundary: String,
    pub heap: BTreeMap<String, Value>,
    pub resources: ResourceState,
}

enum Stop {
    Revert(RevertReason),
    /// First violation found; unwinds the whole scenario.
    Violated,
}

type StepResult<T> = Result<T, Stop>;

pub struct RunOutcome {
    pub world: World,
    pub reverted: Option<RevertReason>,
    pub violation: Option<Violation>,
    pub reached_entries: usize,
    pub snapshots: Vec<BoundarySnapshot>,
    pub steps: Vec<TraceStep>,
    pub entry_post_fps: Vec<u64>,
    pub learned_useless: Vec<(u64, Invocation)>,
}

impl<'b> Interp<'b> {
    pub fn new(program: &'b TypedProgram, sources: &'b crate::span::SourceMap) -> Interp<'b> {
        Interp { program, sources }
    }

    fn unit_resources(&self, unit: &str) -> Vec<ResourceInfo> {
        self.program
            .info(unit)
            .resources
            .iter()
            .map(|r| ResourceInfo {
                name: r.name.name.clone(),
                derived_from: r.derived_from.clone(),
            })
            .collect()
    }

    fn wei_title(&self, unit: &str) -> Option<ResourceRef> {
        self.program
            .info(unit)
            .wei_title
            .as_ref()
            .map(|n| ResourceRef::Named(n.clone()))
    }

    /// Deploy every contract of the program once: addresses 1..n in unit
    /// order, constructors run by the first external (the deployer).
    pub fn setup_world(&self) -> Result<World, InterpError> {
        let deployer = Address(100);
        let externals = vec![Address(100), Address(101)];
        let mut world = World {
            instances: BTreeMap::new(),
            externals: externals.clone(),
            block_timestamp: 1,
        };
        let contracts: Vec<&SourceUnit> = self.program.program.contracts().collect();
        // Pre-assign addresses so constructor args can reference them.
        let mut addr_of: BTreeMap<String, Address> = BTreeMap::new();
        for (i, c) in contracts.iter().enumerate() {
            addr_of.insert(c.name.name.clone(), Address(1 + i as u64));
        }
        for c in &contracts {
            let addr = addr_of[&c.name.name];
            let mut fields = BTreeMap::new();
            for f in &c.fields {
                fields.insert(f.name.name.clone(), Value::default_of(&f.ty));
            }
            let mut resources = ResourceState::default();
            // the constructor caller receives the right to mint creator
            // resources for every declared resource type
            for r in &self.program.info(&c.name.name).resources {
                let res = ResourceRef::Named(r.name.name.clone());
                resources
                    .allocated
                    .entry(res.creator().creator())
                    .or_default()
                    .insert(deployer, 1);
            }
            world.instances.insert(
                addr,
                Instance {
                    unit: c.name.name.clone(),
                    fields,
                    balance: 0,
                    resources,
                },
            );
        }
        // run constructors in order
        for c in &contracts {
            let addr = addr_of[&c.name.name];
            let ctor = c.constructor().expect("typecheck synthesizes __init__");
            let mut args = Vec::new();
            for p in &ctor.params {
                let v = match &p.ty {
                    Type::Interface(i) => {
                        let impls: Vec<Address> = contracts
                            .iter()
                            .filter(|cc| {
                                cc.implements.iter().any(|x| x.name == *i)
                                    || cc.name.name == *i
                            })
                            .map(|cc| addr_of[&cc.name.name])
                            .collect();
                        match impls.as_slice() {
                            [a] => Value::Addr(*a),
                            // with no deployed implementation the slot is
                            // wired to an adversary identity
                            [] => Value::Addr(externals[1]),
                            _ => {
                                return Err(InterpError::Setup(
                                    c.name.name.clone(),
                                    format!("several contracts implement `{i}`"),
                                ))
                            }
                        }
                    }
                    Type::Address => Value::Addr(deployer),
                    Type::Bool => Value::Bool(false),
                    Type::Int | Type::Uint => Value::Int(0),
                    Type::Map(..) => {
                        return Err(InterpError::Setup(
                            c.name.name.clone(),
                            "constructor takes a map argument".into(),
                        ))
                    }
                };
                args.push(v);
            }
            let inv = Invocation {
                caller: deployer,
                target: addr,
                function: "__init__".into(),
                args,
                value: 0,
            };
            let script = AdversaryScript::default();
            let outcome = self.run_invocation(&world, &inv, &script, usize::MAX, false);
            match outcome.reverted {
                None => world = outcome.world,
                Some(r) => return Err(InterpError::ConstructorReverted(c.name.name.clone(), r)),
            }
        }
        Ok(world)
    }

    /// Execute one transaction; reverts restore the input world exactly.
    pub fn exec_tx(&self, world: &World, inv: &Invocation) -> RunOutcome {
        self.run_invocation(world, inv, &AdversaryScript::default(), usize::MAX, false)
    }

    /// Execute one transaction under an adversary script, recording boundary
    /// snapshots; with `check` set, all declared constraints are evaluated at
    /// their boundaries and the first violation is reported.
    pub fn exec_with_adversary(
        &self,
        world: &World,
        inv: &Invocation,
        script: &AdversaryScript,
        depth: usize,
        check: bool,
    ) -> RunOutcome {
        self.run_invocation(world, inv, script, depth, check)
    }

    fn run_invocation(
        &self,
        world: &World,
        inv: &Invocation,
        script: &AdversaryScript,
        max_depth: usize,
        check: bool,
    ) -> RunOutcome {
        let mut run = Run {
            interp: self,
            script,
            cursor: 0,
            adv_depth: 0,
            max_depth,
            reached_entries: 0,
            executed_invocations: 0,
            check,
            violation: None,
            steps: Vec::new(),
            snapshots: Vec::new(),
            entry_post_fps: Vec::new(),
            learned_useless: Vec::new(),
        };
        let mut w = world.clone();
        let result = run.call(&mut w, inv.caller, inv.target, &inv.function, &inv.args, inv.value, true);
        let (world_out, reverted) = match result {
            Ok(_) => (w, None),
            Err(Stop::Revert(r)) => {
                run.snapshots.clear();
                (world.clone(), Some(r))
            }
            Err(Stop::Violated) => (world.clone(), None),
        };
        RunOutcome {
            world: world_out,
            reverted,
            violation: run.violation,
            reached_entries: run.reached_entries,
            snapshots: run.snapshots,
            steps: run.steps,
            entry_post_fps: run.entry_post_fps,
            learned_useless: run.learned_useless,
        }
    }
}

impl<'a, 'b> Run<'a, 'b> {
    fn step(&mut self, desc: String, span: Option<Span>) {
        if self.check {
            self.steps.push(TraceStep {
                description: desc,
                location: span.map(|s| self.interp.sources.describe(s)),
            });
        }
    }

    fn violate(
        &mut self,
        kind: ViolationKind,
        unit: &str,
        function: &str,
        message: String,
        span: Option<Span>,
    ) -> Stop {
        if self.violation.is_none() {
            self.violation = Some(Violation {
                kind,
                contract: unit.to_string(),
                function: function.to_string(),
                message,
                location: span.map(|s| self.interp.sources.describe(s)),
                trace: Trace {
                    transactions: Vec::new(),
                    steps: self.steps.clone(),
                },
            });
        }
        Stop::Violated
    }

    /// Entry into adversary-controlled code: run the next scripted list.
    fn adversary_entry(&mut self, world: &mut World, adversary: Address) -> StepResult<()> {
        let ordinal = self.cursor;
        self.cursor += 1;
        self.reached_entries = self.reached_entries.max(self.cursor);
        if self.adv_depth + 1 > self.max_depth {
            self.record_entry_post(ordinal, world);
            return Ok(());
        }
        let list: Vec<Invocation> = self
            .script
            .entries
            .get(ordinal)
            .cloned()
            .unwrap_or_default();
        self.adv_depth += 1;
        for inv in &list {
            self.executed_invocations += 1;
            let mut inv = inv.clone();
            inv.caller = adversary;
            self.step(format!("re-entrant: {inv}"), None);
            // a reverting scripted call is rolled back and the script goes on
            let snapshot = world.clone();
            let fp_before = world.fingerprint();
            let cursor_before = self.cursor;
            let snapshots_before = self.snapshots.len();
            let r = self.call(
                world,
                inv.caller,
                inv.target,
                &inv.function,
                &inv.args,
                inv.value,
                true,
            );
            match r {
                Ok(_) => {}
                Err(Stop::Revert(reason)) => {
                    if self.cursor == cursor_before {
                        let mut key = inv.clone();
                        key.caller = Address(0);
                        self.learned_useless.push((fp_before, key));
                    }
                    // the rolled-back execution leaves no observable states
                    self.snapshots.truncate(snapshots_before);
                    self.step(format!("re-entrant call reverted: {reason:?}"), None);
                    *world = snapshot;
                }
                Err(v @ Stop::Violated) => {
                    self.adv_depth -= 1;
                    return Err(v);
                }
            }
        }
        self.adv_depth -= 1;
        self.record_entry_post(ordinal, world);
        Ok(())
    }

    fn record_entry_post(&mut self, ordinal: usize, world: &World) {
        while self.entry_post_fps.len() <= ordinal {
            self.entry_post_fps.push(0);
        }
        self.entry_post_fps[ordinal] = world.fingerprint();
    }

    fn eval_state(
        &self,
        world: &World,
        act: &Activation,
        olds: BTreeMap<OldLabel, (Heap, ResourceState)>,
        result: Option<Value>,
    ) -> EvalState {
        EvalState {
            self_addr: act.self_addr,
            heap: world.global_heap(),
            resources: world.instances[&act.self_addr].resources.clone(),
            effects: EffectMultiset::new(),
            olds,
            locals: act.locals.clone(),
            msg_sender: act.msg_sender,
            msg_value: act.msg_value,
            block_timestamp: world.block_timestamp,
            result,
            universe: world.universe(),
        }
    }

    fn eval_expr(&mut self, world: &World, act: &Activation, e: &Expr) -> StepResult<Value> {
        let state = self.eval_state(world, act, BTreeMap::new(), None);
        crate::assertion::eval(e, &state).map_err(|err| match err {
            crate::assertion::EvalError::DivisionByZero => Stop::Revert(RevertReason::DivisionByZero),
            other => {
                // unreachable after typechecking; surface as an assert-style revert
                Stop::Revert(RevertReason::GhostPrecondition(other.to_string()))
            }
        })
    }

    fn coerce(&self, v: Value, ty: &Type) -> StepResult<Value> {
        if let (Type::Uint, Value::Int(n)) = (ty, &v) {
            if *n < 0 {
                return Err(Stop::Revert(RevertReason::UintUnderflow));
            }
        }
        Ok(v)
    }

    /// Check the constraints that must hold across the segment ending now.
    fn check_segment_end(
        &mut self,
        world: &World,
        act: &Activation,
        span: Option<Span>,
    ) -> StepResult<()> {
        if !self.check {
            return Ok(());
        }
        let unit = self.interp.program.unit(&act.unit).clone();
        let olds = BTreeMap::new();
        let mut old_state = self.eval_state(world, act, olds, None);
        old_state.heap = act.seg_start.0.clone();
        old_state.resources = act.seg_start.1.clone();
        let new_state = self.eval_state(world, act, BTreeMap::new(), None);
        let mut checks: Vec<(ViolationKind, &Spec)> = Vec::new();
        for s in &unit.specs.segment {
            checks.push((ViolationKind::SegmentConstraint, s));
        }
        for s in &unit.specs.transitive {
            checks.push((ViolationKind::TransitiveConstraint, s));
        }
        for (kind, spec) in checks {
            let p = Assertion::Expr(spec.expr.clone());
            match fulfils(&old_state, &new_state, &p) {
                Ok(true) => {}
                Ok(false) => {
                    let msg = format!(
                        "{} violated: {}",
                        kind,
                        crate::pretty::expr(&spec.expr)
                    );
                    return Err(self.violate(kind, &act.unit, "<segment>", msg, Some(spec.span)));
                }
                Err(e) => {
                    return Err(self.violate(
                        kind,
                        &act.unit,
                        "<segment>",
                        format!("constraint evaluation failed: {e}"),
                        Some(spec.span),
                    ))
                }
            }
        }
        // privacy constraints of every implemented interface apply to all
        // segments of the implementing contract
        for iface in self.interp.program.interfaces_of(&unit) {
            for spec in &iface.specs.privacy {
                let p = Assertion::Expr(spec.expr.clone());
                match fulfils(&old_state, &new_state, &p) {
                    Ok(true) => {}
                    Ok(false) => {
                        let msg = format!(
                            "privacy constraint of `{}` violated: {}",
                            iface.name.name,
                            crate::pretty::expr(&spec.expr)
                        );
                        return Err(self.violate(
                            ViolationKind::PrivacyConstraint,
                            &act.unit,
                            "<segment>",
                            msg,
                            Some(spec.span),
                        ));
                    }
                    Err(e) => {
                        return Err(self.violate(
                            ViolationKind::PrivacyConstraint,
                            &act.unit,
                            "<segment>",
                            format!("constraint evaluation failed: {e}"),
                            Some(spec.span),
                        ))
                    }
                }
            }
        }
        let _ = span;
        Ok(())
    }

    fn snapshot(&mut self, world: &World, act: &Activation, function: &str, boundary: &str) {
        if !self.check {
            return;
        }
        let inst = &world.instances[&act.self_addr];
        let mut heap = inst.fields.clone();
        heap.insert("balance".into(), Value::Int(inst.balance));
        self.snapshots.push(BoundarySnapshot {
            contract: act.unit.clone(),
            function: function.to_string(),
            boundary: boundary.to_string(),
            heap,
            resources: inst.resources.clone(),
        });
    }

    /// Full small-step execution of one call, including ghost commands, wei
    /// transfers, derived-resource consequences, and constraint checking.
    #[allow(clippy::too_many_arguments)]
    fn call(
        &mut self,
        world: &mut World,
        caller: Address,
        target: Address,
        function: &str,
        args: &[Value],
        value: Amount,
        deduct_from_caller: bool,
    ) -> StepResult<Option<Value>> {
        // calls to adversary-controlled identities: scripted re-entrancy
        if !world.instances.contains_key(&target) {
            self.move_wei(world, caller, target, value, deduct_from_caller)?;
            self.adversary_entry(world, target)?;
            return Ok(None);
        }

        let unit_name = world.instances[&target].unit.clone();
        let unit = self.interp.program.unit(&unit_name).clone();
        let Some(fndef) = unit.function(function).cloned() else {
            return Err(Stop::Revert(RevertReason::MissingFunction(format!(
                "{unit_name}.{function}"
            ))));
        };
        if fndef.is_private() {
            return Err(Stop::Revert(RevertReason::MissingFunction(format!(
                "{unit_name}.{function} is private"
            ))));
        }
        if value > 0 && !fndef.payable {
            return Err(Stop::Revert(RevertReason::NotPayable));
        }
        if args.len() != fndef.params.len() {
            return Err(Stop::Revert(RevertReason::MissingFunction(format!(
                "{unit_name}.{function} arity"
            ))));
        }

        // function pre-state snapshot, before the wei credit
        let pre_heap = world.global_heap();
        let pre_res = world.instances[&target].resources.clone();

        let mut locals = BTreeMap::new();
        for (p, a) in fndef.params.iter().zip(args) {
            locals.insert(p.name.name.clone(), self.coerce(a.clone(), &p.ty)?);
        }

        let mut act = Activation {
            self_addr: target,
            unit: unit_name.clone(),
            msg_sender: caller,
            msg_value: value,
            locals,
            effects: EffectMultiset::new(),
            declared: EffectMultiset::new(),
            callee_declared: EffectMultiset::new(),
            seg_start: (pre_heap.clone(), pre_res.clone()),
            fn_pre: (pre_heap.clone(), pre_res.clone()),
        };

        // declared effects clause, evaluated in the pre-state
        for tmpl in &fndef.performs {
            let eff = self.eval_ghost_effect(world, &act, tmpl)?;
            act.declared.add(eff);
        }

        self.snapshot(world, &act, function, "fn-pre");

        // move the wei and mint titles for the incoming amount
        self.move_wei(world, caller, target, value, deduct_from_caller)?;
        if fndef.payable {
            if let Some(title) = self.interp.wei_title(&unit_name) {
                let inst = world.instances.get_mut(&target).unwrap();
                *inst
                    .resources
                    .allocated
                    .entry(title.clone())
                    .or_default()
                    .entry(caller)
                    .or_insert(0) += value;
                normalize(&mut inst.resources);
                act.effects.add(Effect::Create {
                    res: title,
                    to: caller,
                    amount: value,
                });
            }
        }

        let result = self.exec_body(world, &mut act, &unit, &fndef)?;

        // function-end boundary: segment constraints for the final segment
        self.check_segment_end(world, &act, Some(fndef.span))?;
        self.snapshot(world, &act, function, "fn-post");

        if self.check && !fndef.is_constructor() {
            self.check_function_end(world, &act, &unit, &fndef, &result)?;
        }
        Ok(result)
    }

    fn move_wei(
        &mut self,
        world: &mut World,
        from: Address,
        to: Address,
        value: Amount,
        deduct_from_caller: bool,
    ) -> StepResult<()> {
        if value == 0 {
            return Ok(());
        }
        if deduct_from_caller {
            if let Some(inst) = world.instances.get_mut(&from) {
                if inst.balance < value {
                    return Err(Stop::Revert(RevertReason::InsufficientWei));
                }
                inst.balance -= value;
            }
            // adversaries hold unbounded wei
        }
        if let Some(inst) = world.instances.get_mut(&to) {
            inst.balance += value;
        }
        Ok(())
    }

    fn exec_body(
        &mut self,
        world: &mut World,
        act: &mut Activation,
        unit: &SourceUnit,
        fndef: &FunctionDef,
    ) -> StepResult<Option<Value>> {
        let mut result = None;
        for stmt in &fndef.body {
            result = self.exec_stmt(world, act, unit, fndef, stmt)?;
        }
        Ok(result)
    }

    fn exec_stmt(
        &mut self,
        world: &mut World,
        act: &mut Activation,
        unit: &SourceUnit,
        fndef: &FunctionDef,
        stmt: &Stmt,
    ) -> StepResult<Option<Value>> {
        match &stmt.kind {
            StmtKind::Pass | StmtKind::StabilityHint(_) => Ok(None),
            StmtKind::LocalDecl { name, ty, value } => {
                let v = self.eval_expr(world, act, value)?;
                let v = match ty {
                    Some(t) => self.coerce(v, t)?,
                    None => v,
                };
                act.locals.insert(name.name.clone(), v);
                Ok(None)
            }
            StmtKind::Assign { target, op, value } => {
                let rhs = self.eval_expr(world, act, value)?;
                match target {
                    LValue::Local(name) => {
                        let slot_ty = self
                            .interp
                            .program
                            .info(&act.unit)
                            .fn_locals
                            .get(&fndef.name.name)
                            .and_then(|m| m.get(&name.name))
                            .cloned();
                        let old = act.locals.get(&name.name).cloned();
                        let combined = apply_assign_op(*op, old, rhs)?;
                        let combined = match &slot_ty {
                            Some(t) => self.coerce(combined, t)?,
                            None => combined,
                        };
                        act.locals.insert(name.name.clone(), combined);
                    }
                    LValue::SelfField { field, keys } => {
                        let mut key_vals = Vec::new();
                        for k in keys {
                            key_vals.push(self.eval_expr(world, act, k)?);
                        }
                        let field_ty = unit.field(&field.name).map(|f| f.ty.clone());
                        // coerce uint keys
                        if let Some(mut ty) = field_ty.clone() {
                            for kv in key_vals.iter() {
                                if let Type::Map(kty, vty) = ty {
                                    self.coerce(kv.clone(), &kty)?;
                                    ty = *vty;
                                } else {
                                    break;
                                }
                            }
                        }
                        let slot_ty = field_ty.map(|mut t| {
                            for _ in keys {
                                if let Type::Map(_, v) = t {
                                    t = *v;
                                } else {
                                    break;
                                }
                            }
                            t
                        });
                        let inst = world.instances.get_mut(&act.self_addr).unwrap();
                        let base = inst
                            .fields
                            .get(&field.name)
                            .cloned()
                            .expect("declared field present");
                        let old = read_path(&base, &key_vals);
                        let combined = apply_assign_op(*op, Some(old), rhs)?;
                        let combined = match &slot_ty {
                            Some(t) => self.coerce(combined, t)?,
                            None => combined,
                        };
                        let updated = write_path(base, &key_vals, combined);
                        inst.fields.insert(field.name.clone(), updated);
                    }
                }
                Ok(None)
            }
            StmtKind::Assert(e) => {
                let v = self.eval_expr(world, act, e)?;
                if v == Value::Bool(true) {
                    Ok(None)
                } else {
                    Err(Stop::Revert(RevertReason::AssertFailed))
                }
            }
            StmtKind::Return(v) => match v {
                Some(v) => {
                    let val = self.eval_expr(world, act, v)?;
                    let val = match &fndef.ret {
                        Some(t) => self.coerce(val, t)?,
                        None => val,
                    };
                    Ok(Some(val))
                }
                None => Ok(None),
            },
            StmtKind::Send { to, value } => {
                let to_addr = self
                    .eval_expr(world, act, to)?
                    .as_addr()
                    .expect("typechecked");
                let v = self.eval_expr(world, act, value)?.as_int().expect("typechecked");
                if v < 0 {
                    return Err(Stop::Revert(RevertReason::UintUnderflow));
                }
                // a send is a call carrying wei and no declared effects
                let implicit = EffectMultiset::singleton(Effect::Transfer {
                    res: ResourceRef::Wei,
                    from: act.self_addr,
                    to: to_addr,
                    amount: v,
                });
                self.call_boundary(world, act, unit, fndef, stmt, to_addr, None, v, implicit)?;
                Ok(None)
            }
            StmtKind::Call {
                result,
                target,
                args,
                value,
            } => {
                let (iface_name, target_addr, fun) = match target {
                    CallTarget::SelfField { field, fun } => {
                        let Some(FieldDecl {
                            ty: Type::Interface(i),
                            ..
                        }) = unit.field(&field.name)
                        else {
                            unreachable!("typechecked interface field");
                        };
                        let addr = world.instances[&act.self_addr]
                            .fields
                            .get(&field.name)
                            .and_then(|v| v.as_addr())
                            .expect("interface field holds an address");
                        (i.clone(), addr, fun.clone())
                    }
                    CallTarget::Cast { iface, addr, fun } => {
                        let a = self
                            .eval_expr(world, act, addr)?
                            .as_addr()
                            .expect("typechecked");
                        (iface.name.clone(), a, fun.clone())
                    }
                };
                let mut arg_vals = Vec::new();
                for a in args {
                    arg_vals.push(self.eval_expr(world, act, a)?);
                }
                let v = match value {
                    Some(v) => {
                        let n = self.eval_expr(world, act, v)?.as_int().expect("typechecked");
                        if n < 0 {
                            return Err(Stop::Revert(RevertReason::UintUnderflow));
                        }
                        n
                    }
                    None => 0,
                };
                // instantiate the callee's declared effects for this site
                let iface = self.interp.program.unit(&iface_name).clone();
                let mut declared = EffectMultiset::new();
                if let Some(sig) = iface.function(&fun.name) {
                    let mut cee_state = self.eval_state(world, act, BTreeMap::new(), None);
                    cee_state.self_addr = target_addr;
                    cee_state.msg_sender = act.self_addr;
                    cee_state.msg_value = v;
                    for (p, a) in sig.params.iter().zip(&arg_vals) {
                        cee_state.locals.insert(p.name.name.clone(), a.clone());
                    }
                    for tmpl in &sig.performs {
                        let ee = ghost_to_effect_expr(tmpl, fun.span);
                        match crate::assertion::eval_effect(&ee, &cee_state) {
                            Ok(e) => declared.add(e),
                            Err(e) => {
                                return Err(Stop::Revert(RevertReason::GhostPrecondition(
                                    e.to_string(),
                                )))
                            }
                        }
                    }
                }
                if v > 0 {
                    declared.add(Effect::Transfer {
                        res: ResourceRef::Wei,
                        from: act.self_addr,
                        to: target_addr,
                        amount: v,
                    });
                }
                let ret = self.call_boundary(
                    world,
                    act,
                    unit,
                    fndef,
                    stmt,
                    target_addr,
                    Some((fun.name.clone(), arg_vals)),
                    v,
                    declared,
                )?;
                if let Some(name) = result {
                    let val = ret.unwrap_or(Value::Int(0));
                    act.locals.insert(name.name.clone(), val);
                }
                Ok(None)
            }
            StmtKind::Ghost(g) => {
                self.exec_ghost(world, act, g, stmt.span)?;
                Ok(None)
            }
            StmtKind::For { .. } | StmtKind::PrivateCall { .. } => {
                unreachable!("bodies are lowered before execution")
            }
        }
    }

    /// Everything that happens at an external call: derived-resource
    /// consequences, the segment boundary, the callee run, and bookkeeping.
    #[allow(clippy::too_many_arguments)]
    fn call_boundary(
        &mut self,
        world: &mut World,
        act: &mut Activation,
        unit: &SourceUnit,
        fndef: &FunctionDef,
        stmt: &Stmt,
        target: Address,
        callee: Option<(String, Vec<Value>)>,
        value: Amount,
        callee_effects: EffectMultiset,
    ) -> StepResult<Option<Value>> {
        self.step(
            match &callee {
                Some((f, _)) => format!("{} calls {}.{}", act.unit, target, f),
                None => format!("{} sends {} wei to {}", act.unit, value, target),
            },
            Some(stmt.span),
        );

        // implicit consequences on derived resources, before the boundary check
        let derived = self.apply_derived(world, act, unit, fndef, stmt, &callee_effects)?;

        // wei leaves self before the boundary state is observed
        if value > 0 {
            let inst = world.instances.get_mut(&act.self_addr).unwrap();
            if inst.balance < value {
                return Err(Stop::Revert(RevertReason::InsufficientWei));
            }
            inst.balance -= value;
        }

        self.snapshot(world, act, &fndef.name.name, "call-pre");
        self.check_segment_end(world, act, Some(stmt.span))?;
        for e in derived {
            act.effects.add(e);
        }
        act.callee_declared = act.callee_declared.union(&callee_effects);

        // run the callee (the wei was already deducted here)
        let ret = match callee {
            Some((fun, args)) => self.call(world, act.self_addr, target, &fun, &args, value, false)?,
            None => {
                // A plain send runs the recipient's default function; the
                // language has none, so sends to contract instances revert
                // and sends to adversaries hand over control.
                if world.instances.contains_key(&target) {
                    return Err(Stop::Revert(RevertReason::MissingFunction(
                        "default function".into(),
                    )));
                }
                self.adversary_entry(world, target)?;
                None
            }
        };

        self.snapshot(world, act, &fndef.name.name, "call-post");
        // a new local segment begins
        act.seg_start = (world.global_heap(), world.instances[&act.self_addr].resources.clone());
        Ok(ret)
    }

    /// Apply derived created/destroyed consequences of the callee's declared
    /// effects to our ghost state; returns the implicit effects to record.
    fn apply_derived(
        &mut self,
        world: &mut World,
        act: &Activation,
        unit: &SourceUnit,
        fndef: &FunctionDef,
        stmt: &Stmt,
        callee_effects: &EffectMultiset,
    ) -> StepResult<Vec<Effect>> {
        let mut out = Vec::new();
        let info = self.interp.program.info(&act.unit);
        let derived_decls: Vec<(ResourceRef, ResourceRef)> = info
            .resources
            .iter()
            .filter_map(|r| {
                r.derived_from
                    .as_ref()
                    .map(|base| (ResourceRef::Named(r.name.name.clone()), base.clone()))
            })
            .collect();
        let _ = unit;
        for (derived, underlying) in derived_decls {
            let declarer = match &underlying {
                ResourceRef::Wei => None,
                _ => Some(act.self_addr),
            };
            let dctx = DerivedCtx {
                self_addr: act.self_addr,
                msg_sender: act.msg_sender,
                derived: derived.clone(),
                underlying,
                underlying_declarer: declarer,
            };
            for (eff, n) in callee_effects.iter() {
                for _ in 0..n {
                    // created titles
                    for (owner, amount) in resource::derived_created(eff, &dctx) {
                        let inst = world.instances.get_mut(&act.self_addr).unwrap();
                        *inst
                            .resources
                            .allocated
                            .entry(derived.clone())
                            .or_default()
                            .entry(owner)
                            .or_insert(0) += amount;
                        normalize(&mut inst.resources);
                    }
                    // destroyed titles and consumed redemption offers
                    match resource::derived_destroyed(eff, &dctx) {
                        DerivedDestroyed::None => {}
                        DerivedDestroyed::Forbidden(why) => {
                            return Err(self.violate(
                                ViolationKind::ResourcePrecondition,
                                &act.unit,
                                &fndef.name.name,
                                why.to_string(),
                                Some(stmt.span),
                            ));
                        }
                        DerivedDestroyed::Consume(items) => {
                            for (owner, amount) in items {
                                let inst = world.instances.get_mut(&act.self_addr).unwrap();
                                let have = inst.resources.balance(&derived, owner);
                                let key = OfferKey {
                                    from: owner,
                                    to: act.self_addr,
                                    a1: 1,
                                    a2: 1,
                                };
                                let offers = inst.resources.offer_count(
                                    &derived,
                                    &dctx.underlying,
                                    &key,
                                );
                                if have < amount || offers < amount {
                                    return Err(self.violate(
                                        ViolationKind::ResourcePrecondition,
                                        &act.unit,
                                        &fndef.name.name,
                                        format!(
                                            "outgoing {} is not owed to {owner}: titles {have}, \
                                             redemption offers {offers}, need {amount}",
                                            dctx.underlying
                                        ),
                                        Some(stmt.span),
                                    ));
                                }
                                if amount > 0 {
                                    inst.resources
                                        .allocated
                                        .get_mut(&derived)
                                        .expect("non-zero balance implies the map entry")
                                        .insert(owner, have - amount);
                                    inst.resources
                                        .offered
                                        .get_mut(&(derived.clone(), dctx.underlying.clone()))
                                        .expect("non-zero offers imply the map entry")
                                        .insert(key, offers - amount);
                                    normalize(&mut inst.resources);
                                }
                            }
                        }
                    }
                    for (pe, pn) in resource::derived_performed(eff, &dctx).iter() {
                        for _ in 0..pn {
                            out.push(pe.clone());
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    fn eval_ghost_effect(
        &mut self,
        world: &World,
        act: &Activation,
        g: &GhostCmd,
    ) -> StepResult<Effect> {
        let ee = ghost_to_effect_expr(g, Span::dummy());
        let state = self.eval_state(world, act, BTreeMap::new(), None);
        crate::assertion::eval_effect(&ee, &state)
            .map_err(|e| Stop::Revert(RevertReason::GhostPrecondition(e.to_string())))
    }

    fn exec_ghost(
        &mut self,
        world: &mut World,
        act: &mut Activation,
        g: &GhostCmd,
        span: Span,
    ) -> StepResult<()> {
        let ctx = GhostContext {
            self_addr: act.self_addr,
            msg_sender: act.msg_sender,
            resources: self.interp.unit_resources(&act.unit),
        };
        let state = self.eval_state(world, act, BTreeMap::new(), None);
        let addr_of = |e: &Expr| -> StepResult<Address> {
            crate::assertion::eval(e, &state)
                .map_err(|e| Stop::Revert(RevertReason::GhostPrecondition(e.to_string())))?
                .as_addr()
                .ok_or(Stop::Revert(RevertReason::GhostPrecondition(
                    "address expected".into(),
                )))
        };
        let int_of = |e: &Expr| -> StepResult<Amount> {
            crate::assertion::eval(e, &state)
                .map_err(|e| Stop::Revert(RevertReason::GhostPrecondition(e.to_string())))?
                .as_int()
                .ok_or(Stop::Revert(RevertReason::GhostPrecondition(
                    "amount expected".into(),
                )))
        };
        let sender = act.msg_sender;
        let res_state = &world.instances[&act.self_addr].resources;
        let applied = match g {
            GhostCmd::Create {
                res,
                amount,
                to,
                actor,
            } => {
                let creator = match actor {
                    Some(a) => addr_of(a)?,
                    None => sender,
                };
                let to = match to {
                    Some(t) => addr_of(t)?,
                    None => sender,
                };
                resource::apply_create(res_state, &ctx, res, creator, to, int_of(amount)?)
            }
            GhostCmd::Destroy { res, amount, actor } => {
                let from = match actor {
                    Some(a) => addr_of(a)?,
                    None => sender,
                };
                resource::apply_destroy(res_state, &ctx, res, from, int_of(amount)?)
            }
            GhostCmd::Transfer {
                res,
                amount,
                to,
                from,
            } => {
                let from = match from {
                    Some(f) => addr_of(f)?,
                    None => sender,
                };
                resource::apply_transfer(res_state, &ctx, res, from, addr_of(to)?, int_of(amount)?)
            }
            GhostCmd::Offer {
                res1,
                res2,
                a1,
                a2,
                to,
                from,
                times,
            } => {
                let from = match from {
                    Some(f) => addr_of(f)?,
                    None => sender,
                };
                resource::apply_offer(
                    res_state,
                    &ctx,
                    res1,
                    res2,
                    from,
                    addr_of(to)?,
                    int_of(a1)?,
                    int_of(a2)?,
                    int_of(times)?,
                )
            }
            GhostCmd::Revoke {
                res1,
                res2,
                a1,
                a2,
                to,
                from,
                times,
            } => {
                let from = match from {
                    Some(f) => addr_of(f)?,
                    None => sender,
                };
                resource::apply_revoke(
                    res_state,
                    &ctx,
                    res1,
                    res2,
                    from,
                    addr_of(to)?,
                    int_of(a1)?,
                    int_of(a2)?,
                    int_of(times)?,
                )
            }
            GhostCmd::Exchange {
                res1,
                res2,
                a1,
                a2,
                from,
                to,
                times,
            } => resource::apply_exchange(
                res_state,
                &ctx,
                res1,
                res2,
                addr_of(from)?,
                addr_of(to)?,
                int_of(a1)?,
                int_of(a2)?,
                int_of(times)?,
            ),
            GhostCmd::Trust { who, value } => {
                let v = crate::assertion::eval(value, &state)
                    .map_err(|e| Stop::Revert(RevertReason::GhostPrecondition(e.to_string())))?
                    .as_bool()
                    .ok_or(Stop::Revert(RevertReason::GhostPrecondition(
                        "bool expected".into(),
                    )))?;
                Ok(resource::apply_trust(res_state, &ctx, addr_of(who)?, v))
            }
        };
        match applied {
            Ok((next, effect)) => {
                self.step(format!("ghost: {effect}"), Some(span));
                world.instances.get_mut(&act.self_addr).unwrap().resources = next;
                act.effects.add(effect);
                Ok(())
            }
            Err(e) => {
                if self.check {
                    Err(self.violate(
                        ViolationKind::ResourcePrecondition,
                        &act.unit,
                        "<ghost>",
                        format!("ghost command failed: {e}"),
                        Some(span),
                    ))
                } else {
                    Err(Stop::Revert(RevertReason::GhostPrecondition(e.to_string())))
                }
            }
        }
    }

    fn check_function_end(
        &mut self,
        world: &World,
        act: &Activation,
        unit: &SourceUnit,
        fndef: &FunctionDef,
        result: &Option<Value>,
    ) -> StepResult<()> {
        let mut old_state = self.eval_state(world, act, BTreeMap::new(), None);
        old_state.heap = act.fn_pre.0.clone();
        old_state.resources = act.fn_pre.1.clone();
        let new_state = self.eval_state(world, act, BTreeMap::new(), result.clone());

        for spec in &unit.specs.function_constraints {
            match fulfils(&old_state, &new_state, &Assertion::Expr(spec.expr.clone())) {
                Ok(true) => {}
                Ok(false) => {
                    return Err(self.violate(
                        ViolationKind::FunctionConstraint,
                        &act.unit,
                        &fndef.name.name,
                        format!("function constraint violated: {}", crate::pretty::expr(&spec.expr)),
                        Some(spec.span),
                    ))
                }
                Err(e) => {
                    return Err(self.violate(
                        ViolationKind::FunctionConstraint,
                        &act.unit,
                        &fndef.name.name,
                        format!("constraint evaluation failed: {e}"),
                        Some(spec.span),
                    ))
                }
            }
        }

        // own and interface-declared postconditions
        let mut posts: Vec<(String, Spec)> = fndef
            .ensures
            .iter()
            .map(|s| (act.unit.clone(), s.clone()))
            .collect();
        for iface in self.interp.program.interfaces_of(unit) {
            if let Some(sig) = iface.function(&fndef.name.name) {
                for s in &sig.ensures {
                    // positional parameter renaming interface -> contract
                    let mut bindings = crate::assertion::Bindings::default();
                    for (ip, cp) in sig.params.iter().zip(&fndef.params) {
                        bindings.locals.insert(
                            ip.name.name.clone(),
                            Expr::new(ExprKind::Local(cp.name.clone()), s.span),
                        );
                    }
                    let renamed = crate::assertion::substitute(&s.expr, &bindings);
                    posts.push((
                        iface.name.name.clone(),
                        Spec {
                            expr: renamed,
                            span: s.span,
                        },
                    ));
                }
            }
        }
        for (origin, spec) in posts {
            match fulfils(&old_state, &new_state, &Assertion::Expr(spec.expr.clone())) {
                Ok(true) => {}
                Ok(false) => {
                    return Err(self.violate(
                        ViolationKind::Postcondition,
                        &act.unit,
                        &fndef.name.name,
                        format!(
                            "postcondition of `{origin}` violated: {}",
                            crate::pretty::expr(&spec.expr)
                        ),
                        Some(spec.span),
                    ))
                }
                Err(e) => {
                    return Err(self.violate(
                        ViolationKind::Postcondition,
                        &act.unit,
                        &fndef.name.name,
                        format!("postcondition evaluation failed: {e}"),
                        Some(spec.span),
                    ))
                }
            }
        }

        // effects agreement: declared == direct ghosts + derived + a subset
        // of what called functions declared. Effects on the implicit wei
        // title are tool bookkeeping and not user-declarable.
        let strip = |m: &EffectMultiset| -> EffectMultiset {
            m.iter()
                .flat_map(|(e, n)| std::iter::repeat(e.clone()).take(n as usize))
                .filter(|e| !mentions_implicit_title(e))
                .collect()
        };
        let actual = strip(&act.effects);
        let declared = strip(&act.declared);
        let ok = match declared.checked_sub(&actual) {
            Some(extra) => extra.is_subset_of(&strip(&act.callee_declared)),
            None => false,
        };
        if !ok {
            let msg = format!(
                "effects mismatch: performed {:?}, declared {:?}",
                actual.iter().map(|(e, n)| format!("{n}x {e}")).collect::<Vec<_>>(),
                declared.iter().map(|(e, n)| format!("{n}x {e}")).collect::<Vec<_>>(),
            );
            return Err(self.violate(
                ViolationKind::EffectsMismatch,
                &act.unit,
                &fndef.name.name,
                msg,
                Some(fndef.span),
            ));
        }
        Ok(())
    }
}

fn mentions_implicit_title(e: &Effect) -> bool {
    let is_implicit = |r: &ResourceRef| {
        matches!(r.base(), ResourceRef::Named(n) if n == crate::typecheck::IMPLICIT_WEI_TITLE)
    };
    match e {
        Effect::Create { res, .. } | Effect::Destroy { res, .. } | Effect::Transfer { res, .. } => {
            is_implicit(res)
        }
        Effect::Offer { res1, res2, .. }
        | Effect::Revoke { res1, res2, .. }
        | Effect::Exchange { res1, res2, .. } => is_implicit(res1) || is_implicit(res2),
        Effect::Trust { .. } => false,
    }
}

fn normalize(r: &mut ResourceState) {
    r.allocated.retain(|_, m| {
        m.retain(|_, a| *a != 0);
        !m.is_empty()
    });
    r.offered.retain(|_, m| {
        m.retain(|_, n| *n != 0);
        !m.is_empty()
    });
}

fn apply_assign_op(op: AssignOp, old: Option<Value>, rhs: Value) -> StepResult<Value> {
    match op {
        AssignOp::Set => Ok(rhs),
        AssignOp::Add | AssignOp::Sub => {
            let old = old
                .and_then(|v| v.as_int())
                .ok_or(Stop::Revert(RevertReason::UintUnderflow))?;
            let rhs = rhs
                .as_int()
                .ok_or(Stop::Revert(RevertReason::UintUnderflow))?;
            let v = if op == AssignOp::Add {
                old.checked_add(rhs)
            } else {
                old.checked_sub(rhs)
            };
            v.map(Value::Int)
                .ok_or(Stop::Revert(RevertReason::UintUnderflow))
        }
    }
}

fn read_path(base: &Value, keys: &[Value]) -> Value {
    let mut cur = base.clone();
    for k in keys {
        let Value::Map(m) = cur else {
            return cur;
        };
        cur = m.get(k);
    }
    cur
}

fn write_path(base: Value, keys: &[Value], value: Value) -> Value {
    if keys.is_empty() {
        return value;
    }
    let Value::Map(mut m) = base else {
        return value;
    };
    let inner = m.get(&keys[0]);
    let updated = write_path(inner, &keys[1..], value);
    m.set(keys[0].clone(), updated);
    Value::Map(m)
}

fn ghost_to_effect_expr(g: &GhostCmd, span: Span) -> crate::assertion::EffectExpr {
    use crate::assertion::EffectExpr;
    let sender = || Expr::new(ExprKind::MsgSender, span);
    match g {
        GhostCmd::Create {
            res,
            amount,
            to,
            actor: _,
        } => EffectExpr::Create {
            res: res.clone(),
            to: to.clone().unwrap_or_else(sender),
            amount: amount.clone(),
        },
        GhostCmd::Destroy { res, amount, actor } => EffectExpr::Destroy {
            res: res.clone(),
            from: actor.clone().unwrap_or_else(sender),
            amount: amount.clone(),
        },
        GhostCmd::Transfer {
            res,
            amount,
            to,
            from,
        } => EffectExpr::Transfer {
            res: res.clone(),
            from: from.clone().unwrap_or_else(sender),
            to: to.clone(),
            amount: amount.clone(),
        },
        GhostCmd::Offer {
            res1,
            res2,
            a1,
            a2,
            to,
            from,
            times,
        } => EffectExpr::Offer {
            res1: res1.clone(),
            res2: res2.clone(),
            from: from.clone().unwrap_or_else(sender),
            to: to.clone(),
            a1: a1.clone(),
            a2: a2.clone(),
            times: times.clone(),
        },
        GhostCmd::Revoke {
            res1,
            res2,
            a1,
            a2,
            to,
            from,
            times,
        } => EffectExpr::Revoke {
            res1: res1.clone(),
            res2: res2.clone(),
            from: from.clone().unwrap_or_else(sender),
            to: to.clone(),
            a1: a1.clone(),
            a2: a2.clone(),
            times: times.clone(),
        },
        GhostCmd::Exchange {
            res1,
            res2,
            a1,
            a2,
            from,
            to,
            times,
        } => EffectExpr::Exchange {
            res1: res1.clone(),
            res2: res2.clone(),
            from: from.clone(),
            to: to.clone(),
            a1: a1.clone(),
            a2: a2.clone(),
            times: times.clone(),
        },
        GhostCmd::Trust { who, value } => EffectExpr::Trust {
            truster: Expr::new(ExprKind::MsgSender, span),
            trustee: who.clone(),
            value: value.clone(),
            scope: Expr::new(ExprKind::SelfAddr, span),
        },
    }
}

// ---------------------------------------------------------------------------
// Bounded adversarial enumeration.
// ---------------------------------------------------------------------------

/// Breadth-first enumeration over total invocation count; within one level
/// the order is lexicographic, so the first violation has a smallest trace.
pub fn check_dynamic(
    program: &TypedProgram,
    sources: &crate::span::SourceMap,
    bounds: &Bounds,
) -> Result<Option<Violation>, InterpError> {
    let interp = Interp::new(program, sources);
    let world0 = interp.setup_world()?;

    #[derive(Clone)]
    struct Node {
        world: World,
        history: Vec<(Invocation, AdversaryScript)>,
    }

    let mut visited: BTreeMap<u64, usize> = BTreeMap::new();
    visited.insert(world0.fingerprint(), 0);
    let mut levels: BTreeMap<usize, Vec<Node>> = BTreeMap::new();
    levels.entry(0).or_default().push(Node {
        world: world0,
        history: Vec::new(),
    });

    // useless script extensions: (world fingerprint, invocation) pairs that
    // revert without reaching any adversary entry
    let mut useless: BTreeSet<(u64, Invocation)> = BTreeSet::new();

    for total in 1..=bounds.budget {
        let mut discovered: Vec<Node> = Vec::new();
        for (used, nodes) in levels.clone() {
            if used >= total {
                continue;
            }
            let script_budget = total - used - 1;
            for node in nodes {
                for inv in top_invocations(program, &node.world, bounds) {
                    let outcomes = run_with_scripts(
                        &interp,
                        &node.world,
                        &inv,
                        script_budget,
                        bounds.depth,
                        &mut useless,
                    );
                    for (script, outcome) in outcomes {
                        if let Some(mut v) = outcome.violation {
                            let mut txs = node.history.clone();
                            txs.push((inv.clone(), script));
                            v.trace.transactions = txs;
                            return Ok(Some(v));
                        }
                        if outcome.reverted.is_none() {
                            let fp = outcome.world.fingerprint();
                            let used_now = total;
                            if visited.get(&fp).map(|u| *u <= used_now).unwrap_or(false) {
                                continue;
                            }
                            visited.insert(fp, used_now);
                            let mut history = node.history.clone();
                            history.push((inv.clone(), script.clone()));
                            discovered.push(Node {
                                world: outcome.world,
                                history,
                            });
                        }
                    }
                }
            }
        }
        levels.entry(total).or_default().extend(discovered);
    }
    Ok(None)
}

/// Enumerate adversary scripts for one transaction, lazily: start from the
/// empty script, then extend only at entry ordinals the parent run actually
/// reached, appending one invocation at a time (breadth-first by script
/// size). Extensions known to be no-ops at the append state are skipped.
/// Stops at the first violation.
fn run_with_scripts(
    interp: &Interp,
    world: &World,
    inv: &Invocation,
    script_budget: usize,
    depth: usize,
    useless: &mut BTreeSet<(u64, Invocation)>,
) -> Vec<(AdversaryScript, RunOutcome)> {
    let mut out = Vec::new();
    let empty = AdversaryScript::default();
    let base = interp.exec_with_adversary(world, inv, &empty, depth, true);
    useless.extend(base.learned_useless.iter().cloned());
    let violated = base.violation.is_some();
    let base_reached = base.reached_entries;
    let base_fps = base.entry_post_fps.clone();
    out.push((empty.clone(), base));
    if violated || base_reached == 0 || script_budget == 0 {
        return out;
    }

    let mut candidates = script_invocations(interp.program, world);
    candidates.sort();
    // frontier: (script, reached ordinals, world fp after each ordinal list)
    let mut frontier: Vec<(AdversaryScript, usize, Vec<u64>)> =
        vec![(empty, base_reached, base_fps)];
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for _size in 1..=script_budget {
        let mut next: Vec<(AdversaryScript, usize, Vec<u64>)> = Vec::new();
        for (script, reached, fps) in &frontier {
            for ordinal in 0..*reached {
                for cand in &candidates {
                    // the world at the append point equals the parent's
                    // post-list state of this ordinal
                    if let Some(fp) = fps.get(ordinal) {
                        if useless.contains(&(*fp, cand.clone())) {
                            continue;
                        }
                    }
                    let mut s = script.clone();
                    while s.entries.len() <= ordinal {
                        s.entries.push(Vec::new());
                    }
                    s.entries[ordinal].push(cand.clone());
                    let key = serde_json::to_string(&s).unwrap();
                    if !seen.insert(key) {
                        continue;
                    }
                    let outcome = interp.exec_with_adversary(world, inv, &s, depth, true);
                    useless.extend(outcome.learned_useless.iter().cloned());
                    let violated = outcome.violation.is_some();
                    let keep = (s.clone(), outcome.reached_entries, outcome.entry_post_fps.clone());
                    out.push((s, outcome));
                    if violated {
                        return out;
                    }
                    next.push(keep);
                }
            }
        }
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }
    out
}

/// Top-level transactions an external adversary can issue.
fn top_invocations(program: &TypedProgram, world: &World, bounds: &Bounds) -> Vec<Invocation> {
    let mut out = Vec::new();
    for caller in &world.externals {
        for (addr, inst) in &world.instances {
            let unit = program.unit(&inst.unit);
            for f in &unit.functions {
                if f.is_constructor() || f.is_private() {
                    continue;
                }
                let arg_choices: Vec<Vec<Value>> = f
                    .params
                    .iter()
                    .map(|p| domain_of(&p.ty, world, inst, bounds))
                    .collect();
                for args in cartesian(&arg_choices) {
                    let values: Vec<Amount> = if f.payable {
                        amount_domain(world, inst, bounds)
                    } else {
                        vec![0]
                    };
                    for v in values {
                        out.push(Invocation {
                            caller: *caller,
                            target: *addr,
                            function: f.name.name.clone(),
                            args: args.clone(),
                            value: v,
                        });
                    }
                }
            }
        }
    }
    out
}

/// Re-entrant invocations; the caller field is replaced by the entered
/// adversary at runtime.
fn script_invocations(program: &TypedProgram, world: &World) -> Vec<Invocation> {
    let bounds = Bounds::default();
    let mut out = Vec::new();
    for (addr, inst) in &world.instances {
        let unit = program.unit(&inst.unit);
        for f in &unit.functions {
            if f.is_constructor() || f.is_private() {
                continue;
            }
            let arg_choices: Vec<Vec<Value>> = f
                .params
                .iter()
                .map(|p| domain_of(&p.ty, world, inst, &bounds))
                .collect();
            for args in cartesian(&arg_choices) {
                let values: Vec<Amount> = if f.payable {
                    amount_domain(world, inst, &bounds)
                } else {
                    vec![0]
                };
                for v in values {
                    out.push(Invocation {
                        caller: Address(0), // patched at the entry
                        target: *addr,
                        function: f.name.name.clone(),
                        args: args.clone(),
                        value: v,
                    });
                }
            }
        }
    }
    out
}

fn amount_domain(world: &World, inst: &Instance, bounds: &Bounds) -> Vec<Amount> {
    let mut out = bounds.amounts.clone();
    for f in &bounds.field_plus_one {
        if let Some(Value::Int(n)) = inst.fields.get(f) {
            out.push(n + 1);
        }
    }
    let _ = world;
    out.sort();
    out.dedup();
    out
}

fn domain_of(ty: &Type, world: &World, inst: &Instance, bounds: &Bounds) -> Vec<Value> {
    match ty {
        Type::Bool => vec![Value::Bool(false), Value::Bool(true)],
        Type::Int | Type::Uint => amount_domain(world, inst, bounds)
            .into_iter()
            .map(Value::Int)
            .collect(),
        Type::Address | Type::Interface(_) => {
            let mut addrs: Vec<Address> = world.instances.keys().copied().collect();
            addrs.extend(world.externals.iter().copied());
            addrs.into_iter().map(Value::Addr).collect()
        }
        Type::Map(..) => vec![],
    }
}

fn cartesian(choices: &[Vec<Value>]) -> Vec<Vec<Value>> {
    let mut out = vec![Vec::new()];
    for c in choices {
        let mut next = Vec::new();
        for prefix in &out {
            for v in c {
                let mut p = prefix.clone();
                p.push(v.clone());
                next.push(p);
            }
        }
        out = next;
    }
    out
}

/// Re-execute a recorded trace; the replayed violation must match exactly.
pub fn replay(
    program: &TypedProgram,
    sources: &crate::span::SourceMap,
    trace: &Trace,
) -> Result<Option<Violation>, InterpError> {
    let interp = Interp::new(program, sources);
    let mut world = interp.setup_world()?;
    let n = trace.transactions.len();
    for (i, (inv, script)) in trace.transactions.iter().enumerate() {
        let outcome = interp.exec_with_adversary(&world, inv, script, usize::MAX, true);
        if let Some(mut v) = outcome.violation {
            v.trace.transactions = trace.transactions[..=i].to_vec();
            return Ok(Some(v));
        }
        if i + 1 == n {
            return Ok(None);
        }
        if outcome.reverted.is_none() {
            world = outcome.world;
        }
    }
    Ok(None)
}
