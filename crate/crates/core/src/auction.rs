//! The parallel auction: every unassigned application bids for its first
//! bottleneck resource, the auctioneer keeps the highest bidders up to each
//! resource's slot count, and the loop repeats until nobody is left bidding.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    AppIdx, Assignment, AuctionState, Bid, PriceRule, ResourceIdx, ResourceKind, ResourceVector,
    StandingBid, Time,
};
use crate::valuation::{differential_valuation, BeliefSource, ValuationError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AuctionError {
    #[error("scenario has no resources")]
    NoResources,
    #[error("epsilon must be positive and finite, got {0}")]
    BadEpsilon(f64),
    #[error("bid from {0} rejected: application has quit")]
    BidFromQuit(AppIdx),
    #[error("bid from {0} targets unknown resource {1}")]
    UnknownResource(AppIdx, ResourceIdx),
    #[error("{0} placed more than one bid in round {1}")]
    DuplicateBid(AppIdx, u32),
    #[error("bid {amount} from {app} is not a finite non-negative amount")]
    BadAmount { app: AppIdx, amount: f64 },
    #[error("auction did not terminate within {max_rounds} rounds")]
    NonTermination {
        max_rounds: u32,
        partial: Box<AuctionOutcome>,
    },
    #[error(transparent)]
    Valuation(#[from] ValuationError),
}

/// The best and second-best resources for one bidder, as `(resource,
/// surplus)` where surplus is differential valuation minus price.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bottlenecks {
    pub first: (ResourceIdx, f64),
    /// `None` when only one resource exists; its surplus counts as zero.
    pub second: Option<(ResourceIdx, f64)>,
}

impl Bottlenecks {
    pub fn second_surplus(&self) -> f64 {
        self.second.map_or(0.0, |s| s.1)
    }
}

/// Price a bidder sees for `resource` under `rule`.
pub fn ask_price(state: &AuctionState, resource: ResourceIdx, slots: u32, rule: PriceRule) -> f64 {
    match rule {
        PriceRule::Posted => state.prices[resource.0],
        PriceRule::Entry => entry_threshold(state, resource, slots),
    }
}

/// Amount a new bid must exceed to win a slot: the lowest standing bid when
/// the resource is full, zero otherwise.
pub fn entry_threshold(state: &AuctionState, resource: ResourceIdx, slots: u32) -> f64 {
    if state.is_full(resource, slots) {
        state.min_bids[resource.0]
    } else {
        0.0
    }
}

/// Ranks resources by surplus for `app`. Ties go to the lowest resource index.
pub fn find_bottlenecks<B: BeliefSource + ?Sized>(
    beliefs: &B,
    app: AppIdx,
    t: Time,
    current: &ResourceVector,
    state: &AuctionState,
    resources: &[ResourceKind],
    rule: PriceRule,
) -> Result<Bottlenecks, AuctionError> {
    if resources.is_empty() {
        return Err(AuctionError::NoResources);
    }
    let mut surplus = Vec::with_capacity(resources.len());
    for (j, r) in resources.iter().enumerate() {
        let idx = ResourceIdx(j);
        let dv = differential_valuation(beliefs, app, t, current, idx)?;
        surplus.push(dv - ask_price(state, idx, r.slots, rule));
    }
    let argmax = |skip: Option<usize>| {
        let mut best: Option<(usize, f64)> = None;
        for (j, &s) in surplus.iter().enumerate() {
            if Some(j) == skip {
                continue;
            }
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((j, s));
            }
        }
        best
    };
    let (j1, s1) = argmax(None).expect("at least one resource");
    let second = argmax(Some(j1)).map(|(j, s)| (ResourceIdx(j), s));
    Ok(Bottlenecks {
        first: (ResourceIdx(j1), s1),
        second,
    })
}

/// `V1 − V2 + p + ε`: the most a bidder offers for its first bottleneck before
/// the second one becomes as attractive.
pub fn partial_bid(first_surplus: f64, second_surplus: f64, price_first: f64, epsilon: f64) -> f64 {
    first_surplus - second_surplus + price_first + epsilon
}

/// Result of one settle step.
#[derive(Debug, Clone, PartialEq)]
pub struct Settled {
    pub state: AuctionState,
    /// Previous winners that lost their slot this round.
    pub displaced: Vec<AppIdx>,
}

/// Applies one round of bids.
///
/// For each resource the standing winners and the new bidders are ranked by
/// amount; the top `slots` keep or take a slot. Standing winners keep their
/// slot on equal amounts, so a new bid has to exceed the lowest standing bid to
/// displace it. Remaining ties go to the lower application index.
pub fn settle_round(
    state: &AuctionState,
    bids: &[Bid],
    resources: &[ResourceKind],
    quit: &[AppIdx],
) -> Result<Settled, AuctionError> {
    let mut seen = std::collections::BTreeSet::new();
    for b in bids {
        if quit.contains(&b.bidder) {
            return Err(AuctionError::BidFromQuit(b.bidder));
        }
        if b.resource.0 >= resources.len() {
            return Err(AuctionError::UnknownResource(b.bidder, b.resource));
        }
        if !(b.amount.is_finite() && b.amount >= 0.0) {
            return Err(AuctionError::BadAmount {
                app: b.bidder,
                amount: b.amount,
            });
        }
        if !seen.insert(b.bidder) {
            return Err(AuctionError::DuplicateBid(b.bidder, b.round));
        }
    }

    let mut next = state.clone();
    next.round += 1;
    let mut displaced = Vec::new();
    for (j, r) in resources.iter().enumerate() {
        let fresh: Vec<&Bid> = bids.iter().filter(|b| b.resource.0 == j).collect();
        if fresh.is_empty() {
            continue;
        }
        // (amount, standing?, app)
        let mut pool: Vec<(f64, bool, AppIdx)> = state.winners[j]
            .iter()
            .map(|w| (w.amount, true, w.app))
            .collect();
        pool.extend(fresh.iter().map(|b| (b.amount, false, b.bidder)));
        pool.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then_with(|| b.1.cmp(&a.1))
                .then_with(|| a.2.cmp(&b.2))
        });
        let keep = (r.slots as usize).min(pool.len());
        for &(_, standing, app) in &pool[keep..] {
            if standing {
                displaced.push(app);
            }
        }
        let winners: Vec<StandingBid> = pool[..keep]
            .iter()
            .map(|&(amount, _, app)| StandingBid { app, amount })
            .collect();
        if let (Some(hi), Some(lo)) = (winners.first(), winners.last()) {
            next.prices[j] = hi.amount;
            next.min_bids[j] = lo.amount;
        }
        next.winners[j] = winners;
    }
    displaced.sort();
    Ok(Settled {
        state: next,
        displaced,
    })
}

/// Everything a finished (or aborted) auction produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionOutcome {
    pub assignment: Assignment,
    pub state: AuctionState,
    pub rounds_used: u32,
    /// Every bid placed, in round then application order.
    pub bids: Vec<Bid>,
    /// Sum of partial bids per application.
    pub total_bids: Vec<f64>,
    /// Applications that declined to continue after budget planning.
    pub quit: Vec<AppIdx>,
    /// Applications left without any resource worth its price.
    pub priced_out: Vec<AppIdx>,
}

/// Decides whether an application may place a bid. Returning `false` makes
/// the application quit this auction.
pub trait ParticipationGate {
    fn admit(&mut self, bid: &Bid, state: &AuctionState) -> bool;
}

/// Admits every bid.
#[derive(Debug, Clone, Copy, Default)]
pub struct OpenGate;

impl ParticipationGate for OpenGate {
    fn admit(&mut self, _bid: &Bid, _state: &AuctionState) -> bool {
        true
    }
}

impl<F> ParticipationGate for F
where
    F: FnMut(&Bid, &AuctionState) -> bool,
{
    fn admit(&mut self, bid: &Bid, state: &AuctionState) -> bool {
        self(bid, state)
    }
}

/// Parameters of one auction at time `t`.
#[derive(Debug, Clone)]
pub struct AuctionSetup<'a> {
    pub resources: &'a [ResourceKind],
    /// Participating applications; all start unassigned.
    pub bidders: Vec<AppIdx>,
    /// Length of the application table, for sizing the assignment.
    pub num_apps: usize,
    pub t: Time,
    pub epsilon: f64,
    pub max_rounds: u32,
    pub price_rule: PriceRule,
    /// Multiplies one application's partial bids.
    pub bid_scale: Option<(AppIdx, f64)>,
}

impl<'a> AuctionSetup<'a> {
    pub fn new(resources: &'a [ResourceKind], num_apps: usize, epsilon: f64) -> Self {
        Self {
            resources,
            bidders: (0..num_apps).map(AppIdx).collect(),
            num_apps,
            t: 0,
            epsilon,
            max_rounds: 10_000,
            price_rule: PriceRule::default(),
            bid_scale: None,
        }
    }
}

fn outcome_from(
    setup: &AuctionSetup<'_>,
    state: AuctionState,
    rounds_used: u32,
    bids: Vec<Bid>,
    total_bids: Vec<f64>,
    quit: Vec<AppIdx>,
    priced_out: Vec<AppIdx>,
) -> AuctionOutcome {
    let mut holdings = vec![None; setup.num_apps];
    let mut payments = vec![0.0; setup.num_apps];
    for (j, ws) in state.winners.iter().enumerate() {
        for w in ws {
            holdings[w.app.0] = Some(ResourceVector::single(ResourceIdx(j)));
            payments[w.app.0] = w.amount;
        }
    }
    AuctionOutcome {
        assignment: Assignment::new(holdings, payments),
        state,
        rounds_used,
        bids,
        total_bids,
        quit,
        priced_out,
    }
}

/// Runs bid and settle rounds until every bidder holds a slot, has quit, or
/// has no resource left worth its price.
///
/// The second bottleneck's surplus is floored at zero: staying out of the
/// auction is always an alternative, which keeps every bid within its
/// bidder's valuation plus `ε`.
pub fn run_auction<B, G>(
    setup: &AuctionSetup<'_>,
    beliefs: &B,
    gate: &mut G,
) -> Result<AuctionOutcome, AuctionError>
where
    B: BeliefSource + ?Sized,
    G: ParticipationGate + ?Sized,
{
    if setup.resources.is_empty() {
        return Err(AuctionError::NoResources);
    }
    if !(setup.epsilon.is_finite() && setup.epsilon > 0.0) {
        return Err(AuctionError::BadEpsilon(setup.epsilon));
    }
    let mut state = AuctionState::new(setup.resources.len(), setup.epsilon);
    let mut rounds_used = 0u32;
    let mut bids_log = Vec::new();
    let mut total_bids = vec![0.0; setup.num_apps];
    let mut quit: Vec<AppIdx> = Vec::new();
    let mut priced_out: Vec<AppIdx> = Vec::new();
    let empty = ResourceVector::empty();

    loop {
        let mut round_bids = Vec::new();
        for &app in &setup.bidders {
            if quit.contains(&app) || priced_out.contains(&app) || state.holding_of(app).is_some() {
                continue;
            }
            let bn = find_bottlenecks(
                beliefs,
                app,
                setup.t,
                &empty,
                &state,
                setup.resources,
                setup.price_rule,
            )?;
            let (j1, s1) = bn.first;
            if s1 < 0.0 {
                priced_out.push(app);
                continue;
            }
            let slots = setup.resources[j1.0].slots;
            let ask = ask_price(&state, j1, slots, setup.price_rule);
            let mut amount = partial_bid(s1, bn.second_surplus().max(0.0), ask, setup.epsilon);
            if let Some((scaled, k)) = setup.bid_scale {
                if scaled == app {
                    amount *= k;
                }
            }
            if state.is_full(j1, slots) && amount <= state.min_bids[j1.0] {
                priced_out.push(app);
                continue;
            }
            let bid = Bid {
                bidder: app,
                resource: j1,
                amount,
                round: state.round + 1,
            };
            if !gate.admit(&bid, &state) {
                quit.push(app);
                continue;
            }
            total_bids[app.0] += amount;
            round_bids.push(bid);
        }
        if round_bids.is_empty() {
            break;
        }
        if rounds_used >= setup.max_rounds {
            let partial = outcome_from(
                setup,
                state,
                rounds_used,
                bids_log,
                total_bids,
                quit,
                priced_out,
            );
            return Err(AuctionError::NonTermination {
                max_rounds: setup.max_rounds,
                partial: Box::new(partial),
            });
        }
        state = settle_round(&state, &round_bids, setup.resources, &quit)?.state;
        rounds_used += 1;
        bids_log.extend(round_bids);
    }
    quit.sort();
    priced_out.sort();
    Ok(outcome_from(
        setup,
        state,
        rounds_used,
        bids_log,
        total_bids,
        quit,
        priced_out,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::valuation::ValuationMatrix;

    fn res(slots: &[u32]) -> Vec<ResourceKind> {
        slots
            .iter()
            .enumerate()
            .map(|(j, &s)| ResourceKind {
                id: format!("r{}", j + 1),
                label: format!("R{}", j + 1),
                slots: s,
            })
            .collect()
    }

    fn matrix_m() -> ValuationMatrix {
        ValuationMatrix::new(vec![
            vec![1.9, 1.7, 1.5, 1.0, 0.9],
            vec![1.6, 1.3, 1.1, 0.8, 0.7],
            vec![1.4, 1.0, 0.6, 0.5, 0.4],
            vec![0.3, 0.6, 0.9, 1.2, 1.4],
            vec![0.7, 0.8, 1.1, 1.4, 1.7],
        ])
    }

    const EPS: f64 = 1e-3;

    #[test]
    fn bottlenecks_on_matrix_m() {
        let m = matrix_m();
        let r = res(&[1, 2, 4, 8, 16]);
        let st = AuctionState::new(5, EPS);
        let e = ResourceVector::empty();
        let b = find_bottlenecks(&m, AppIdx(0), 0, &e, &st, &r, PriceRule::Posted).unwrap();
        assert_eq!(b.first, (ResourceIdx(0), 1.9));
        assert_eq!(b.second, Some((ResourceIdx(1), 1.7)));
        let b = find_bottlenecks(&m, AppIdx(4), 0, &e, &st, &r, PriceRule::Posted).unwrap();
        assert_eq!(b.first, (ResourceIdx(4), 1.7));
        assert_eq!(b.second, Some((ResourceIdx(3), 1.4)));
    }

    #[test]
    fn bottleneck_ties_take_lowest_index() {
        let m = ValuationMatrix::new(vec![vec![0.5; 4]]);
        let b = find_bottlenecks(
            &m,
            AppIdx(0),
            0,
            &ResourceVector::empty(),
            &AuctionState::new(4, EPS),
            &res(&[1, 1, 1, 1]),
            PriceRule::Entry,
        )
        .unwrap();
        assert_eq!(b.first.0, ResourceIdx(0));
        assert_eq!(b.second.unwrap().0, ResourceIdx(1));
    }

    #[test]
    fn single_resource_second_is_sentinel() {
        let m = ValuationMatrix::new(vec![vec![0.8]]);
        let b = find_bottlenecks(
            &m,
            AppIdx(0),
            0,
            &ResourceVector::empty(),
            &AuctionState::new(1, EPS),
            &res(&[1]),
            PriceRule::Entry,
        )
        .unwrap();
        assert_eq!(b.second, None);
        assert_eq!(b.second_surplus(), 0.0);
    }

    #[test]
    fn partial_bid_examples() {
        assert!((partial_bid(1.9, 1.7, 0.0, EPS) - (0.2 + EPS)).abs() < 1e-12);
        assert!((partial_bid(1.4, 1.0, 0.0, EPS) - (0.4 + EPS)).abs() < 1e-12);
        assert_eq!(partial_bid(0.7, 0.7, 0.0, EPS), EPS);
    }

    fn bid(app: usize, r: usize, amount: f64) -> Bid {
        Bid {
            bidder: AppIdx(app),
            resource: ResourceIdx(r),
            amount,
            round: 1,
        }
    }

    #[test]
    fn settle_single_slot_takes_highest() {
        let r = res(&[1, 2, 4, 8, 16]);
        let st = AuctionState::new(5, EPS);
        let bids = [
            bid(0, 0, 0.2 + EPS),
            bid(1, 0, 0.3 + EPS),
            bid(2, 0, 0.4 + EPS),
        ];
        let s = settle_round(&st, &bids, &r, &[]).unwrap().state;
        assert_eq!(
            s.winners[0],
            vec![StandingBid {
                app: AppIdx(2),
                amount: 0.4 + EPS
            }]
        );
        assert_eq!(s.prices[0], 0.4 + EPS);
        assert_eq!(s.min_bids[0], 0.4 + EPS);
    }

    #[test]
    fn settle_multi_slot_keeps_both() {
        let r = res(&[1, 2, 4, 8, 16]);
        let st = AuctionState::new(5, EPS);
        let bids = [bid(3, 4, 0.2 + EPS), bid(4, 4, 0.3 + EPS)];
        let s = settle_round(&st, &bids, &r, &[]).unwrap().state;
        assert_eq!(s.winners[4].len(), 2);
        let sum: f64 = s.winners[4].iter().map(|w| w.amount).sum();
        assert!((sum - (0.5 + 2.0 * EPS)).abs() < 1e-12);
        assert_eq!(s.prices[4], 0.3 + EPS);
        assert_eq!(s.min_bids[4], 0.2 + EPS);
    }

    #[test]
    fn settle_without_bids_changes_nothing_but_round() {
        let r = res(&[1, 2]);
        let st = settle_round(&AuctionState::new(2, EPS), &[bid(0, 1, 0.5)], &r, &[])
            .unwrap()
            .state;
        let s = settle_round(&st, &[], &r, &[]).unwrap().state;
        assert_eq!(s.winners, st.winners);
        assert_eq!(s.prices, st.prices);
        assert_eq!(s.min_bids, st.min_bids);
    }

    #[test]
    fn settle_displaces_lowest_and_keeps_ties() {
        let r = res(&[1]);
        let st = settle_round(&AuctionState::new(1, EPS), &[bid(1, 0, 0.5)], &r, &[])
            .unwrap()
            .state;
        // an equal bid from a lower index does not displace
        let s = settle_round(&st, &[bid(0, 0, 0.5)], &r, &[]).unwrap();
        assert_eq!(s.state.winners[0][0].app, AppIdx(1));
        assert!(s.displaced.is_empty());
        let s = settle_round(&st, &[bid(0, 0, 0.6)], &r, &[]).unwrap();
        assert_eq!(s.state.winners[0][0].app, AppIdx(0));
        assert_eq!(s.displaced, vec![AppIdx(1)]);
    }

    #[test]
    fn settle_rejects_quit_bidder() {
        let r = res(&[1]);
        assert_eq!(
            settle_round(
                &AuctionState::new(1, EPS),
                &[bid(0, 0, 0.5)],
                &r,
                &[AppIdx(0)]
            ),
            Err(AuctionError::BidFromQuit(AppIdx(0)))
        );
    }

    #[test]
    fn uncontested_auction_wins_at_epsilon() {
        let m = ValuationMatrix::new(vec![vec![0.8]]);
        let r = res(&[1]);
        // a lone resource: the whole surplus is bid (second counts as zero)
        let out = run_auction(&AuctionSetup::new(&r, 1, EPS), &m, &mut OpenGate).unwrap();
        assert_eq!(out.assignment.resource_of(AppIdx(0)), Some(ResourceIdx(0)));
        assert!((out.assignment.payments[0] - (0.8 + EPS)).abs() < 1e-12);

        // with a zero-valued alternative of equal worth the price is ε
        let m = ValuationMatrix::new(vec![vec![0.8, 0.8]]);
        let r = res(&[1, 1]);
        let out = run_auction(&AuctionSetup::new(&r, 1, EPS), &m, &mut OpenGate).unwrap();
        assert_eq!(out.assignment.payments[0], EPS);
        assert_eq!(out.rounds_used, 1);
    }

    #[test]
    fn non_termination_carries_partial_state() {
        let m = matrix_m();
        let r = res(&[1, 2, 4, 8, 16]);
        let mut setup = AuctionSetup::new(&r, 5, EPS);
        setup.max_rounds = 1;
        match run_auction(&setup, &m, &mut OpenGate) {
            Err(AuctionError::NonTermination {
                max_rounds,
                partial,
            }) => {
                assert_eq!(max_rounds, 1);
                assert_eq!(partial.rounds_used, 1);
            }
            other => panic!("expected non-termination, got {other:?}"),
        }
    }

    #[test]
    fn gate_refusal_quits() {
        let m = matrix_m();
        let r = res(&[1, 2, 4, 8, 16]);
        let mut gate = |b: &Bid, _: &AuctionState| b.bidder != AppIdx(2);
        let out = run_auction(&AuctionSetup::new(&r, 5, EPS), &m, &mut gate).unwrap();
        assert_eq!(out.quit, vec![AppIdx(2)]);
        assert_eq!(out.assignment.holdings[2], None);
        assert_eq!(out.assignment.payments[2], 0.0);
    }
}
