//! Executable semantics of the resource ghost state: balances, exchange
//! offers, and the local trust map, together with the ghost operations and
//! the implicit consequences of effects on derived resources.
//!
//! All `apply_*` operations are atomic: they either return the successor
//! state plus exactly one appended effect, or an error and the caller keeps
//! the unchanged input state.

use crate::ast::ResourceRef;
use crate::value::{Address, Amount};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OfferKey {
    pub from: Address,
    pub to: Address,
    pub a1: Amount,
    pub a2: Amount,
}

/// Ghost ledger of one contract: finitely supported maps, all amounts >= 0.
/// Zero entries are never stored, so equality is extensional.
#[derive(Debug, Clone, PartialEq, Eq, Default, Hash)]
pub struct ResourceState {
    pub allocated: BTreeMap<ResourceRef, BTreeMap<Address, Amount>>,
    pub offered: BTreeMap<(ResourceRef, ResourceRef), BTreeMap<OfferKey, Amount>>,
    /// Partial map: (owner, actor) -> does owner trust actor here.
    pub trusted: BTreeMap<(Address, Address), bool>,
}

// Entry-list serialization: JSON objects cannot key on structured values.
impl Serialize for ResourceState {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("ResourceState", 3)?;
        let allocated: Vec<(&ResourceRef, Vec<(&Address, &Amount)>)> = self
            .allocated
            .iter()
            .map(|(r, m)| (r, m.iter().collect()))
            .collect();
        st.serialize_field("allocated", &allocated)?;
        let offered: Vec<(&(ResourceRef, ResourceRef), Vec<(&OfferKey, &Amount)>)> = self
            .offered
            .iter()
            .map(|(p, m)| (p, m.iter().collect()))
            .collect();
        st.serialize_field("offered", &offered)?;
        let trusted: Vec<(&(Address, Address), &bool)> = self.trusted.iter().collect();
        st.serialize_field("trusted", &trusted)?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for ResourceState {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            allocated: Vec<(ResourceRef, Vec<(Address, Amount)>)>,
            offered: Vec<((ResourceRef, ResourceRef), Vec<(OfferKey, Amount)>)>,
            trusted: Vec<((Address, Address), bool)>,
        }
        let raw = Raw::deserialize(d)?;
        Ok(ResourceState {
            allocated: raw
                .allocated
                .into_iter()
                .map(|(r, m)| (r, m.into_iter().collect()))
                .collect(),
            offered: raw
                .offered
                .into_iter()
                .map(|(p, m)| (p, m.into_iter().collect()))
                .collect(),
            trusted: raw.trusted.into_iter().collect(),
        })
    }
}

impl ResourceState {
    pub fn balance(&self, res: &ResourceRef, owner: Address) -> Amount {
        self.allocated
            .get(res)
            .and_then(|m| m.get(&owner))
            .copied()
            .unwrap_or(0)
    }

    pub fn offer_count(&self, r1: &ResourceRef, r2: &ResourceRef, key: &OfferKey) -> Amount {
        self.offered
            .get(&(r1.clone(), r2.clone()))
            .and_then(|m| m.get(key))
            .copied()
            .unwrap_or(0)
    }

    /// Trust is local and implicit for oneself.
    pub fn is_trusted(&self, owner: Address, actor: Address) -> bool {
        owner == actor || self.trusted.get(&(owner, actor)).copied().unwrap_or(false)
    }

    pub fn total(&self, res: &ResourceRef) -> Amount {
        self.allocated
            .get(res)
            .map(|m| m.values().sum())
            .unwrap_or(0)
    }

    fn add_balance(&mut self, res: &ResourceRef, owner: Address, delta: Amount) -> Result<(), LedgerError> {
        let cur = self.balance(res, owner);
        let next = cur.checked_add(delta).ok_or(LedgerError::Overflow)?;
        if next < 0 {
            return Err(LedgerError::InsufficientBalance {
                res: res.clone(),
                owner,
                have: cur,
                need: -delta,
            });
        }
        let map = self.allocated.entry(res.clone()).or_default();
        if next == 0 {
            map.remove(&owner);
            if map.is_empty() {
                self.allocated.remove(res);
            }
        } else {
            map.insert(owner, next);
        }
        Ok(())
    }

    fn add_offers(
        &mut self,
        r1: &ResourceRef,
        r2: &ResourceRef,
        key: OfferKey,
        delta: Amount,
    ) -> Result<(), LedgerError> {
        let cur = self.offer_count(r1, r2, &key);
        let next = cur.checked_add(delta).ok_or(LedgerError::Overflow)?;
        if next < 0 {
            return Err(LedgerError::InsufficientOffer {
                r1: r1.clone(),
                r2: r2.clone(),
                have: cur,
                need: -delta,
            });
        }
        let map = self.offered.entry((r1.clone(), r2.clone())).or_default();
        if next == 0 {
            map.remove(&key);
            if map.is_empty() {
                self.offered.remove(&(r1.clone(), r2.clone()));
            }
        } else {
            map.insert(key, next);
        }
        Ok(())
    }
}

/// One ghost operation, as recorded in effect multisets.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Effect {
    Create {
        res: ResourceRef,
        to: Address,
        amount: Amount,
    },
    Destroy {
        res: ResourceRef,
        from: Address,
        amount: Amount,
    },
    Transfer {
        res: ResourceRef,
        from: Address,
        to: Address,
        amount: Amount,
    },
    Offer {
        res1: ResourceRef,
        res2: ResourceRef,
        from: Address,
        to: Address,
        a1: Amount,
        a2: Amount,
        times: Amount,
    },
    Revoke {
        res1: ResourceRef,
        res2: ResourceRef,
        from: Address,
        to: Address,
        a1: Amount,
        a2: Amount,
        times: Amount,
    },
    Exchange {
        res1: ResourceRef,
        res2: ResourceRef,
        from: Address,
        to: Address,
        a1: Amount,
        a2: Amount,
        times: Amount,
    },
    /// `truster` set their trust of `trustee` to `value`, local to the
    /// contract at `scope`.
    Trust {
        truster: Address,
        trustee: Address,
        value: bool,
        scope: Address,
    },
}

impl fmt::Display for Effect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Effect::Create { res, to, amount } => write!(f, "create[{res}]({amount}, to={to})"),
            Effect::Destroy { res, from, amount } => {
                write!(f, "destroy[{res}]({amount}, from={from})")
            }
            Effect::Transfer {
                res,
                from,
                to,
                amount,
            } => write!(f, "transfer[{res}]({amount}, {from} -> {to})"),
            Effect::Offer {
                res1,
                res2,
                from,
                to,
                a1,
                a2,
                times,
            } => write!(
                f,
                "offer[{res1} <-> {res2}]({a1}, {a2}, {from} -> {to}, times={times})"
            ),
            Effect::Revoke {
                res1,
                res2,
                from,
                to,
                a1,
                a2,
                times,
            } => write!(
                f,
                "revoke[{res1} <-> {res2}]({a1}, {a2}, {from} -> {to}, times={times})"
            ),
            Effect::Exchange {
                res1,
                res2,
                from,
                to,
                a1,
                a2,
                times,
            } => write!(
                f,
                "exchange[{res1} <-> {res2}]({a1}, {a2}, {from} <-> {to}, times={times})"
            ),
            Effect::Trust {
                truster,
                trustee,
                value,
                scope,
            } => write!(f, "trust({truster} -> {trustee}, {value}, at={scope})"),
        }
    }
}

/// Multiset of effects with non-negative multiplicities.
#[derive(Debug, Clone, PartialEq, Eq, Default, Hash, Serialize, Deserialize)]
pub struct EffectMultiset {
    counts: BTreeMap<Effect, u32>,
}

impl EffectMultiset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn singleton(e: Effect) -> Self {
        let mut s = Self::new();
        s.add(e);
        s
    }

    pub fn add(&mut self, e: Effect) {
        *self.counts.entry(e).or_insert(0) += 1;
    }

    pub fn union(&self, other: &EffectMultiset) -> EffectMultiset {
        let mut out = self.clone();
        for (e, n) in &other.counts {
            *out.counts.entry(e.clone()).or_insert(0) += n;
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn len(&self) -> usize {
        self.counts.values().map(|n| *n as usize).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Effect, u32)> {
        self.counts.iter().map(|(e, n)| (e, *n))
    }

    pub fn count(&self, e: &Effect) -> u32 {
        self.counts.get(e).copied().unwrap_or(0)
    }

    pub fn is_subset_of(&self, other: &EffectMultiset) -> bool {
        self.counts.iter().all(|(e, n)| other.count(e) >= *n)
    }

    /// `self - other`, or None if `other` is not a sub-multiset.
    pub fn checked_sub(&self, other: &EffectMultiset) -> Option<EffectMultiset> {
        let mut out = self.clone();
        for (e, n) in &other.counts {
            let have = out.counts.get_mut(e)?;
            if *have < *n {
                return None;
            }
            *have -= n;
            if *have == 0 {
                out.counts.remove(e);
            }
        }
        Some(out)
    }
}

impl FromIterator<Effect> for EffectMultiset {
    fn from_iter<T: IntoIterator<Item = Effect>>(iter: T) -> Self {
        let mut s = Self::new();
        for e in iter {
            s.add(e);
        }
        s
    }
}

/// Declared resource shape a ghost context knows about.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResourceInfo {
    pub name: String,
    pub derived_from: Option<ResourceRef>,
}

/// Context a ghost command executes in.
#[derive(Debug, Clone)]
pub struct GhostContext {
    pub self_addr: Address,
    pub msg_sender: Address,
    /// Resources declared by the contract at `self_addr`.
    pub resources: Vec<ResourceInfo>,
}

impl GhostContext {
    pub fn is_derived(&self, res: &ResourceRef) -> bool {
        match res {
            ResourceRef::Named(n) => self
                .resources
                .iter()
                .any(|r| r.name == *n && r.derived_from.is_some()),
            _ => false,
        }
    }

    pub fn derived_of(&self, base: &ResourceRef) -> Option<ResourceRef> {
        self.resources
            .iter()
            .find(|r| r.derived_from.as_ref() == Some(base))
            .map(|r| ResourceRef::Named(r.name.clone()))
    }

    fn declares_base(&self, res: &ResourceRef) -> bool {
        match res.base() {
            ResourceRef::Wei => true,
            ResourceRef::Named(n) => self.resources.iter().any(|r| r.name == *n),
            ResourceRef::Creator(_) => unreachable!(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LedgerError {
    #[error("negative amount")]
    NegativeAmount,
    #[error("insufficient {res} balance of {owner}: have {have}, need {need}")]
    InsufficientBalance {
        res: ResourceRef,
        owner: Address,
        have: Amount,
        need: Amount,
    },
    #[error("insufficient offers {r1} <-> {r2}: have {have}, need {need}")]
    InsufficientOffer {
        r1: ResourceRef,
        r2: ResourceRef,
        have: Amount,
        need: Amount,
    },
    #[error("{owner} does not trust {actor}")]
    Untrusted { owner: Address, actor: Address },
    #[error("{who} holds no {creator} resource")]
    MissingCreator { creator: ResourceRef, who: Address },
    #[error("wei cannot be minted inside a contract")]
    WeiNotMintable,
    #[error("cannot create instances of the derived resource {0} directly")]
    CreateDerived(ResourceRef),
    #[error("cannot offer away {0}: a declared resource is derived from it")]
    OfferUnderlyingOfDerived(ResourceRef),
    #[error("resource {0} is not declared by this contract")]
    UndeclaredResource(ResourceRef),
    #[error("trust maps overlap on {0:?}")]
    OverlappingTrust((Address, Address)),
    #[error("amount overflow")]
    Overflow,
}

type LedgerResult = Result<(ResourceState, Effect), LedgerError>;

fn require_nonneg(amounts: &[Amount]) -> Result<(), LedgerError> {
    if amounts.iter().any(|a| *a < 0) {
        Err(LedgerError::NegativeAmount)
    } else {
        Ok(())
    }
}

fn require_trust(
    s: &ResourceState,
    owner: Address,
    actor: Address,
    active: bool,
) -> Result<(), LedgerError> {
    if active && !s.is_trusted(owner, actor) {
        Err(LedgerError::Untrusted { owner, actor })
    } else {
        Ok(())
    }
}

fn require_declared(ctx: &GhostContext, res: &ResourceRef) -> Result<(), LedgerError> {
    if ctx.declares_base(res) {
        Ok(())
    } else {
        Err(LedgerError::UndeclaredResource(res.clone()))
    }
}

/// `creator` mints `amount` of `res` for `to`. Requires the creator resource
/// and (for non-zero amounts) the creator's trust of the acting sender.
pub fn apply_create(
    s: &ResourceState,
    ctx: &GhostContext,
    res: &ResourceRef,
    creator: Address,
    to: Address,
    amount: Amount,
) -> LedgerResult {
    require_nonneg(&[amount])?;
    require_declared(ctx, res)?;
    if *res == ResourceRef::Wei {
        return Err(LedgerError::WeiNotMintable);
    }
    if ctx.is_derived(res) {
        return Err(LedgerError::CreateDerived(res.clone()));
    }
    require_trust(s, creator, ctx.msg_sender, amount != 0)?;
    let creator_res = res.clone().creator();
    if s.balance(&creator_res, creator) < 1 {
        return Err(LedgerError::MissingCreator {
            creator: creator_res,
            who: creator,
        });
    }
    let mut next = s.clone();
    next.add_balance(res, to, amount)?;
    let effect = Effect::Create {
        res: res.clone(),
        to,
        amount,
    };
    Ok((next, effect))
}

/// `from` destroys `amount` of its reserves of `res`.
pub fn apply_destroy(
    s: &ResourceState,
    ctx: &GhostContext,
    res: &ResourceRef,
    from: Address,
    amount: Amount,
) -> LedgerResult {
    require_nonneg(&[amount])?;
    require_declared(ctx, res)?;
    require_trust(s, from, ctx.msg_sender, amount != 0)?;
    let mut next = s.clone();
    next.add_balance(res, from, -amount)?;
    let effect = Effect::Destroy {
        res: res.clone(),
        from,
        amount,
    };
    Ok((next, effect))
}

/// Moves `amount` of `res` from `from` to `to`; only the owner (or someone
/// it trusts) can move it.
pub fn apply_transfer(
    s: &ResourceState,
    ctx: &GhostContext,
    res: &ResourceRef,
    from: Address,
    to: Address,
    amount: Amount,
) -> LedgerResult {
    require_nonneg(&[amount])?;
    require_declared(ctx, res)?;
    require_trust(s, from, ctx.msg_sender, amount != 0)?;
    let mut next = s.clone();
    next.add_balance(res, from, -amount)?;
    next.add_balance(res, to, amount)?;
    let effect = Effect::Transfer {
        res: res.clone(),
        from,
        to,
        amount,
    };
    Ok((next, effect))
}

/// `from` offers `to` to exchange `a1` of `res1` against `a2` of `res2`,
/// `times` times. Offers need no present funds, but a contract cannot offer
/// away the underlying of a resource it derives, nor raw wei.
#[allow(clippy::too_many_arguments)]
pub fn apply_offer(
    s: &ResourceState,
    ctx: &GhostContext,
    res1: &ResourceRef,
    res2: &ResourceRef,
    from: Address,
    to: Address,
    a1: Amount,
    a2: Amount,
    times: Amount,
) -> LedgerResult {
    require_nonneg(&[a1, a2, times])?;
    require_declared(ctx, res1)?;
    require_declared(ctx, res2)?;
    if *res1 == ResourceRef::Wei || ctx.derived_of(res1).is_some() {
        return Err(LedgerError::OfferUnderlyingOfDerived(res1.clone()));
    }
    require_trust(s, from, ctx.msg_sender, times != 0)?;
    let mut next = s.clone();
    next.add_offers(res1, res2, OfferKey { from, to, a1, a2 }, times)?;
    let effect = Effect::Offer {
        res1: res1.clone(),
        res2: res2.clone(),
        from,
        to,
        a1,
        a2,
        times,
    };
    Ok((next, effect))
}

#[allow(clippy::too_many_arguments)]
pub fn apply_revoke(
    s: &ResourceState,
    ctx: &GhostContext,
    res1: &ResourceRef,
    res2: &ResourceRef,
    from: Address,
    to: Address,
    a1: Amount,
    a2: Amount,
    times: Amount,
) -> LedgerResult {
    require_nonneg(&[a1, a2, times])?;
    require_declared(ctx, res1)?;
    require_declared(ctx, res2)?;
    require_trust(s, from, ctx.msg_sender, times != 0)?;
    let mut next = s.clone();
    next.add_offers(res1, res2, OfferKey { from, to, a1, a2 }, -times)?;
    let effect = Effect::Revoke {
        res1: res1.clone(),
        res2: res2.clone(),
        from,
        to,
        a1,
        a2,
        times,
    };
    Ok((next, effect))
}

/// Performs `times` pre-agreed exchanges: `from` gives `a1` of `res1`, `to`
/// gives `a2` of `res2`. Anyone may trigger it; consent was given by the
/// offers, which are consumed. A zero side needs no offer (one-sided grant);
/// when both amounts are zero no offers are consumed.
#[allow(clippy::too_many_arguments)]
pub fn apply_exchange(
    s: &ResourceState,
    ctx: &GhostContext,
    res1: &ResourceRef,
    res2: &ResourceRef,
    from: Address,
    to: Address,
    a1: Amount,
    a2: Amount,
    times: Amount,
) -> LedgerResult {
    require_nonneg(&[a1, a2, times])?;
    require_declared(ctx, res1)?;
    require_declared(ctx, res2)?;
    let mut next = s.clone();
    let n1 = times.checked_mul(a1).ok_or(LedgerError::Overflow)?;
    let n2 = times.checked_mul(a2).ok_or(LedgerError::Overflow)?;
    if a1 > 0 {
        next.add_offers(res1, res2, OfferKey { from, to, a1, a2 }, -times)?;
    }
    if a2 > 0 {
        next.add_offers(
            res2,
            res1,
            OfferKey {
                from: to,
                to: from,
                a1: a2,
                a2: a1,
            },
            -times,
        )?;
    }
    next.add_balance(res1, from, -n1)?;
    next.add_balance(res1, to, n1)?;
    next.add_balance(res2, to, -n2)?;
    next.add_balance(res2, from, n2)?;
    let effect = Effect::Exchange {
        res1: res1.clone(),
        res2: res2.clone(),
        from,
        to,
        a1,
        a2,
        times,
    };
    Ok((next, effect))
}

/// Sets the current caller's trust toward `who`. Cannot fail and cannot be
/// delegated: it always acts for the msg.sender.
pub fn apply_trust(
    s: &ResourceState,
    ctx: &GhostContext,
    who: Address,
    value: bool,
) -> (ResourceState, Effect) {
    let mut next = s.clone();
    next.trusted.insert((ctx.msg_sender, who), value);
    let effect = Effect::Trust {
        truster: ctx.msg_sender,
        trustee: who,
        value,
        scope: ctx.self_addr,
    };
    (next, effect)
}

/// Pointwise addition of balances and offer counts; union of trust maps with
/// disjoint domains.
pub fn combine(s1: &ResourceState, s2: &ResourceState) -> Result<ResourceState, LedgerError> {
    for key in s2.trusted.keys() {
        if s1.trusted.contains_key(key) {
            return Err(LedgerError::OverlappingTrust(*key));
        }
    }
    let mut out = s1.clone();
    for (res, balances) in &s2.allocated {
        for (owner, amount) in balances {
            out.add_balance(res, *owner, *amount)?;
        }
    }
    for ((r1, r2), offers) in &s2.offered {
        for (key, n) in offers {
            out.add_offers(r1, r2, key.clone(), *n)?;
        }
    }
    out.trusted.extend(s2.trusted.iter().map(|(k, v)| (*k, *v)));
    Ok(out)
}

/// Context for computing derived-resource consequences: `d` is derived from
/// `underlying`; `underlying_declarer` is the contract declaring the
/// underlying, when there is one (wei has none).
#[derive(Debug, Clone)]
pub struct DerivedCtx {
    pub self_addr: Address,
    pub msg_sender: Address,
    pub derived: ResourceRef,
    pub underlying: ResourceRef,
    pub underlying_declarer: Option<Address>,
}

/// Title balances implicitly created by an effect of a called function.
pub fn derived_created(e: &Effect, d: &DerivedCtx) -> Vec<(Address, Amount)> {
    match e {
        Effect::Transfer {
            res, from, to, amount,
        } if *res == d.underlying && *to == d.self_addr => vec![(*from, *amount)],
        Effect::Exchange {
            res1,
            from,
            to,
            a1,
            times,
            ..
        } if *res1 == d.underlying && *to == d.self_addr => vec![(*from, times * a1)],
        Effect::Create { res, to, amount } if *res == d.underlying && *to == d.self_addr => {
            vec![(d.msg_sender, *amount)]
        }
        _ => Vec::new(),
    }
}

/// Consumption an effect forces on the derived resource, or a forbidden case.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DerivedDestroyed {
    /// Consume these title balances and the matching 1:1 redemption offers
    /// (keyed `offered[d <-> underlying](1, 1, holder, self)`).
    Consume(Vec<(Address, Amount)>),
    /// The effect may never be performed by a contract deriving from the
    /// underlying resource.
    Forbidden(&'static str),
    None,
}

pub fn derived_destroyed(e: &Effect, d: &DerivedCtx) -> DerivedDestroyed {
    match e {
        Effect::Transfer {
            res, from, to, amount,
        } if *res == d.underlying && *from == d.self_addr => {
            DerivedDestroyed::Consume(vec![(*to, *amount)])
        }
        Effect::Destroy { res, from, amount }
            if *res == d.underlying && *from == d.self_addr =>
        {
            DerivedDestroyed::Consume(vec![(d.msg_sender, *amount)])
        }
        Effect::Offer { res1, from, .. } if *res1 == d.underlying && *from == d.self_addr => {
            DerivedDestroyed::Forbidden("cannot offer away the underlying of a derived resource")
        }
        Effect::Trust { truster, scope, .. }
            if *truster == d.self_addr && Some(*scope) == d.underlying_declarer =>
        {
            DerivedDestroyed::Forbidden(
                "cannot extend trust at the contract declaring the underlying resource",
            )
        }
        _ => DerivedDestroyed::None,
    }
}

/// Implicit effects on the derived resource caused by an effect of a called
/// function; their amounts match `derived_created` / `derived_destroyed`.
pub fn derived_performed(e: &Effect, d: &DerivedCtx) -> EffectMultiset {
    let mut out = EffectMultiset::new();
    for (owner, amount) in derived_created(e, d) {
        out.add(Effect::Create {
            res: d.derived.clone(),
            to: owner,
            amount,
        });
    }
    if let DerivedDestroyed::Consume(items) = derived_destroyed(e, d) {
        for (owner, amount) in items {
            out.add(Effect::Destroy {
                res: d.derived.clone(),
                from: owner,
                amount,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn addr(n: u64) -> Address {
        Address(n)
    }

    fn token() -> ResourceRef {
        ResourceRef::Named("token".into())
    }

    fn ctx(sender: u64) -> GhostContext {
        GhostContext {
            self_addr: addr(1),
            msg_sender: addr(sender),
            resources: vec![
                ResourceInfo {
                    name: "token".into(),
                    derived_from: None,
                },
                ResourceInfo {
                    name: "title".into(),
                    derived_from: Some(ResourceRef::Wei),
                },
                ResourceInfo {
                    name: "good".into(),
                    derived_from: None,
                },
            ],
        }
    }

    fn with_creator(who: Address) -> ResourceState {
        let mut s = ResourceState::default();
        s.add_balance(&token().creator(), who, 1).unwrap();
        s
    }

    #[test]
    fn minter_creates_tokens() {
        let minter = addr(10);
        let s = with_creator(minter);
        let (s2, e) = apply_create(&s, &ctx(10), &token(), minter, addr(20), 7).unwrap();
        assert_eq!(s2.balance(&token(), addr(20)), 7);
        assert_eq!(s2.balance(&token().creator(), minter), 1);
        assert_eq!(
            e,
            Effect::Create {
                res: token(),
                to: addr(20),
                amount: 7
            }
        );
    }

    #[test]
    fn zero_create_needs_no_trust_but_still_the_creator_resource() {
        let minter = addr(10);
        let s = with_creator(minter);
        // sender 99 is not trusted by the minter, amount 0 passes
        let (s2, _) = apply_create(&s, &ctx(99), &token(), minter, addr(20), 0).unwrap();
        assert_eq!(s2.balance(&token(), addr(20)), 0);
        assert_eq!(s2, s);
    }

    #[test]
    fn create_without_creator_resource_fails() {
        let s = ResourceState::default();
        let err = apply_create(&s, &ctx(10), &token(), addr(10), addr(20), 1).unwrap_err();
        assert!(matches!(err, LedgerError::MissingCreator { .. }));
    }

    #[test]
    fn create_of_derived_resource_is_rejected() {
        let title = ResourceRef::Named("title".into());
        let mut s = ResourceState::default();
        s.add_balance(&title.clone().creator(), addr(10), 1).unwrap();
        let err = apply_create(&s, &ctx(10), &title, addr(10), addr(20), 1).unwrap_err();
        assert!(matches!(err, LedgerError::CreateDerived(_)));
    }

    #[test]
    fn destroy_full_balance_and_insufficient() {
        let mut s = ResourceState::default();
        s.add_balance(&token(), addr(5), 5).unwrap();
        let (s2, _) = apply_destroy(&s, &ctx(5), &token(), addr(5), 5).unwrap();
        assert_eq!(s2.balance(&token(), addr(5)), 0);
        let err = apply_destroy(&s, &ctx(5), &token(), addr(5), 6).unwrap_err();
        assert!(matches!(err, LedgerError::InsufficientBalance { .. }));
    }

    #[test]
    fn transfer_by_owner_and_by_stranger() {
        let mut s = ResourceState::default();
        s.add_balance(&token(), addr(5), 5).unwrap();
        let (s2, _) = apply_transfer(&s, &ctx(5), &token(), addr(5), addr(6), 3).unwrap();
        assert_eq!(s2.balance(&token(), addr(5)), 2);
        assert_eq!(s2.balance(&token(), addr(6)), 3);
        // zero amount needs no trust
        let (s3, _) = apply_transfer(&s, &ctx(7), &token(), addr(5), addr(6), 0).unwrap();
        assert_eq!(s3, s);
        // non-zero by an untrusted stranger fails
        let err = apply_transfer(&s, &ctx(7), &token(), addr(5), addr(6), 1).unwrap_err();
        assert!(matches!(err, LedgerError::Untrusted { .. }));
        // ... unless trusted
        let (s4, _) = apply_trust(&s, &ctx(5), addr(7), true);
        let (s5, _) = apply_transfer(&s4, &ctx(7), &token(), addr(5), addr(6), 1).unwrap();
        assert_eq!(s5.balance(&token(), addr(6)), 1);
    }

    #[test]
    fn offers_need_no_funds_but_wei_underlying_is_protected() {
        let good = ResourceRef::Named("good".into());
        let s = ResourceState::default();
        // no balance of token, offering is still fine
        let (s2, _) = apply_offer(&s, &ctx(5), &token(), &good, addr(5), addr(6), 2, 1, 1).unwrap();
        assert_eq!(
            s2.offer_count(
                &token(),
                &good,
                &OfferKey {
                    from: addr(5),
                    to: addr(6),
                    a1: 2,
                    a2: 1
                }
            ),
            1
        );
        // the contract declares `title` derived from wei: offering wei away fails
        let err =
            apply_offer(&s, &ctx(1), &ResourceRef::Wei, &good, addr(1), addr(6), 1, 1, 1).unwrap_err();
        assert!(matches!(err, LedgerError::OfferUnderlyingOfDerived(_)));
    }

    #[test]
    fn revoke_more_than_offered_fails() {
        let good = ResourceRef::Named("good".into());
        let s = ResourceState::default();
        let (s2, _) = apply_offer(&s, &ctx(5), &token(), &good, addr(5), addr(6), 2, 1, 3).unwrap();
        let err =
            apply_revoke(&s2, &ctx(5), &token(), &good, addr(5), addr(6), 2, 1, 4).unwrap_err();
        assert!(matches!(err, LedgerError::InsufficientOffer { .. }));
        let (s3, _) = apply_revoke(&s2, &ctx(5), &token(), &good, addr(5), addr(6), 2, 1, 3).unwrap();
        assert!(s3.offered.is_empty());
    }

    #[test]
    fn exchange_consumes_matching_offers_and_moves_funds() {
        let good = ResourceRef::Named("good".into());
        let (a, b) = (addr(5), addr(6));
        let mut s = ResourceState::default();
        s.add_balance(&token(), a, 4).unwrap();
        s.add_balance(&good, b, 1).unwrap();
        let (s, _) = apply_offer(&s, &ctx(5), &token(), &good, a, b, 4, 1, 1).unwrap();
        let (s, _) = apply_offer(&s, &ctx(6), &good, &token(), b, a, 1, 4, 1).unwrap();
        // anyone can trigger it
        let (s, e) = apply_exchange(&s, &ctx(99), &token(), &good, a, b, 4, 1, 1).unwrap();
        assert_eq!(s.balance(&token(), b), 4);
        assert_eq!(s.balance(&good, a), 1);
        assert!(s.offered.is_empty());
        assert!(matches!(e, Effect::Exchange { times: 1, .. }));
    }

    #[test]
    fn one_sided_exchange_needs_only_the_giving_offer() {
        let good = ResourceRef::Named("good".into());
        let (a, b) = (addr(5), addr(6));
        let mut s = ResourceState::default();
        s.add_balance(&token(), a, 2).unwrap();
        let (s, _) = apply_offer(&s, &ctx(5), &token(), &good, a, b, 2, 0, 1).unwrap();
        let (s, _) = apply_exchange(&s, &ctx(99), &token(), &good, a, b, 2, 0, 1).unwrap();
        assert_eq!(s.balance(&token(), b), 2);
    }

    #[test]
    fn exchange_with_offer_but_no_funds_fails_atomically() {
        let good = ResourceRef::Named("good".into());
        let (a, b) = (addr(5), addr(6));
        let s = ResourceState::default();
        let (s, _) = apply_offer(&s, &ctx(5), &token(), &good, a, b, 2, 0, 1).unwrap();
        let before = s.clone();
        let err = apply_exchange(&s, &ctx(99), &token(), &good, a, b, 2, 0, 1).unwrap_err();
        assert!(matches!(err, LedgerError::InsufficientBalance { .. }));
        assert_eq!(s, before);
    }

    #[test]
    fn trust_is_last_write_wins_and_local_to_sender() {
        let s = ResourceState::default();
        let (s, e) = apply_trust(&s, &ctx(5), addr(6), true);
        assert!(s.is_trusted(addr(5), addr(6)));
        assert!(!s.is_trusted(addr(6), addr(5)));
        assert!(matches!(e, Effect::Trust { value: true, .. }));
        let (s, _) = apply_trust(&s, &ctx(5), addr(6), false);
        assert!(!s.is_trusted(addr(5), addr(6)));
    }

    #[test]
    fn administrator_trust_enables_third_party_moves() {
        // the ICO pattern: holders trust an administrator who shuffles tokens
        let admin = addr(9);
        let mut s = ResourceState::default();
        s.add_balance(&token(), addr(5), 3).unwrap();
        let (s, _) = apply_trust(&s, &ctx(5), admin, true);
        let (s, _) = apply_transfer(&s, &ctx(9), &token(), addr(5), addr(6), 3).unwrap();
        assert_eq!(s.balance(&token(), addr(6)), 3);
    }

    #[test]
    fn combine_identity_and_pointwise_addition() {
        let mut s = ResourceState::default();
        s.add_balance(&token(), addr(5), 1).unwrap();
        assert_eq!(combine(&ResourceState::default(), &s).unwrap(), s);
        let mut t = ResourceState::default();
        t.add_balance(&token(), addr(5), 2).unwrap();
        let c = combine(&s, &t).unwrap();
        assert_eq!(c.balance(&token(), addr(5)), 3);
    }

    #[test]
    fn combine_rejects_overlapping_trust() {
        let s = apply_trust(&ResourceState::default(), &ctx(5), addr(6), true).0;
        let t = apply_trust(&ResourceState::default(), &ctx(5), addr(6), false).0;
        assert!(matches!(
            combine(&s, &t),
            Err(LedgerError::OverlappingTrust(_))
        ));
    }

    fn wei_title_ctx() -> DerivedCtx {
        DerivedCtx {
            self_addr: addr(1),
            msg_sender: addr(5),
            derived: ResourceRef::Named("title".into()),
            underlying: ResourceRef::Wei,
            underlying_declarer: None,
        }
    }

    #[test]
    fn incoming_wei_creates_titles_for_the_sender() {
        let d = wei_title_ctx();
        let e = Effect::Transfer {
            res: ResourceRef::Wei,
            from: addr(5),
            to: addr(1),
            amount: 4,
        };
        assert_eq!(derived_created(&e, &d), vec![(addr(5), 4)]);
        let performed = derived_performed(&e, &d);
        assert_eq!(
            performed.count(&Effect::Create {
                res: d.derived.clone(),
                to: addr(5),
                amount: 4
            }),
            1
        );
    }

    #[test]
    fn outgoing_wei_destroys_the_recipients_titles() {
        let d = wei_title_ctx();
        let e = Effect::Transfer {
            res: ResourceRef::Wei,
            from: addr(1),
            to: addr(7),
            amount: 3,
        };
        assert_eq!(
            derived_destroyed(&e, &d),
            DerivedDestroyed::Consume(vec![(addr(7), 3)])
        );
    }

    #[test]
    fn offering_the_underlying_is_forbidden_and_unrelated_effects_are_inert() {
        let d = wei_title_ctx();
        let offer = Effect::Offer {
            res1: ResourceRef::Wei,
            res2: token(),
            from: addr(1),
            to: addr(7),
            a1: 1,
            a2: 1,
            times: 1,
        };
        assert!(matches!(
            derived_destroyed(&offer, &d),
            DerivedDestroyed::Forbidden(_)
        ));
        let unrelated = Effect::Transfer {
            res: token(),
            from: addr(1),
            to: addr(7),
            amount: 3,
        };
        assert!(derived_created(&unrelated, &d).is_empty());
        assert_eq!(derived_destroyed(&unrelated, &d), DerivedDestroyed::None);
        assert!(derived_performed(&unrelated, &d).is_empty());
    }
}
