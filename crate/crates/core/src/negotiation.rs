//! The online board and the two negotiation mechanisms: three-offer
//! bargaining for a single interested gatherer and a second-price
//! sealed-bid auction for several.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::margins::{MarginParams, ProfitInterval, PROFIT_TOLERANCE};
use crate::world::{Cell, GathererId, HunterId, Shares, TaskId};

#[derive(Debug, Error, PartialEq)]
pub enum NegotiationError {
    #[error("cannot derive offers from an empty profit interval")]
    EmptyHunterInterval,
    #[error("gatherer {0} cannot bid with an empty profit interval")]
    EmptyBidderInterval(GathererId),
    #[error("an auction needs at least two bids, got {0}")]
    TooFewBids(usize),
    #[error("bids cover more than one task")]
    MixedTasks,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Announcement {
    pub hunter: HunterId,
    pub task: TaskId,
    pub location: Cell,
    pub announced_at: u32,
}

/// Shared registry of hunters waiting for a gathering partner.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Board {
    entries: Vec<Announcement>,
}

impl Board {
    pub fn new() -> Self {
        Self::default()
    }

    /// Posts `announcement`, replacing any live entry of the same hunter.
    pub fn announce(&mut self, announcement: Announcement) {
        self.withdraw(announcement.hunter);
        self.entries.push(announcement);
        self.entries.sort_by_key(|a| (a.announced_at, a.hunter));
    }

    pub fn withdraw(&mut self, hunter: HunterId) -> Option<Announcement> {
        let pos = self.entries.iter().position(|a| a.hunter == hunter)?;
        Some(self.entries.remove(pos))
    }

    pub fn get(&self, hunter: HunterId) -> Option<&Announcement> {
        self.entries.iter().find(|a| a.hunter == hunter)
    }

    /// Waiting hunters, oldest announcement first.
    pub fn waiting(&self) -> &[Announcement] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Offer {
    pub from: HunterId,
    pub to: GathererId,
    pub task: TaskId,
    pub gatherer_share: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bid {
    pub gatherer: GathererId,
    pub task: TaskId,
    pub hunter_share: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Response {
    Accept,
    Reject,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mechanism {
    Bargain,
    Auction,
}

impl Mechanism {
    pub fn as_str(self) -> &'static str {
        match self {
            Mechanism::Bargain => "bargain",
            Mechanism::Auction => "auction",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum TranscriptEntry {
    Offer { offer: Offer, response: Response },
    Bid(Bid),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegotiationOutcome {
    pub task: TaskId,
    pub hunter: HunterId,
    pub gatherer: GathererId,
    pub shares: Shares,
    pub mechanism: Mechanism,
    pub transcript: Vec<TranscriptEntry>,
}

impl NegotiationOutcome {
    /// The winner's submitted bid, for auction outcomes.
    pub fn winning_bid(&self) -> Option<f64> {
        self.transcript.iter().find_map(|e| match e {
            TranscriptEntry::Bid(b) if b.gatherer == self.gatherer => Some(b.hunter_share),
            _ => None,
        })
    }

    pub fn bids(&self) -> impl Iterator<Item = &Bid> {
        self.transcript.iter().filter_map(|e| match e {
            TranscriptEntry::Bid(b) => Some(b),
            TranscriptEntry::Offer { .. } => None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum NegotiationResult {
    Agreed(NegotiationOutcome),
    Failed {
        mechanism: Mechanism,
        transcript: Vec<TranscriptEntry>,
    },
}

impl NegotiationResult {
    pub fn agreement(&self) -> Option<&NegotiationOutcome> {
        match self {
            NegotiationResult::Agreed(o) => Some(o),
            NegotiationResult::Failed { .. } => None,
        }
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        match self {
            NegotiationResult::Agreed(o) => &o.transcript,
            NegotiationResult::Failed { transcript, .. } => transcript,
        }
    }
}

/// The hunter's three gatherer-share offers (from its upper bound, its
/// midpoint and its lower bound) shuffled into a random presentation order.
pub fn make_offers<R: Rng>(
    hunter_interval: &ProfitInterval,
    rng: &mut R,
) -> Result<[f64; 3], NegotiationError> {
    if hunter_interval.empty {
        return Err(NegotiationError::EmptyHunterInterval);
    }
    let mut offers = [
        1.0 - hunter_interval.upper,
        1.0 - hunter_interval.midpoint(),
        1.0 - hunter_interval.lower,
    ];
    offers.shuffle(rng);
    Ok(offers)
}

pub fn evaluate_offer(gatherer_interval: &ProfitInterval, gatherer_share: f64) -> Response {
    if gatherer_interval.contains(gatherer_share) {
        Response::Accept
    } else {
        Response::Reject
    }
}

/// Single-gatherer negotiation: offers are presented one at a time until
/// the gatherer accepts one or all three are rejected.
///
/// A hunter whose own interval is empty cannot make any offer it could
/// live with, so the negotiation fails without a transcript.
pub fn bargain<R: Rng>(
    task: TaskId,
    hunter: HunterId,
    hunter_interval: &ProfitInterval,
    gatherer: GathererId,
    gatherer_interval: &ProfitInterval,
    rng: &mut R,
) -> NegotiationResult {
    let mut transcript = Vec::with_capacity(3);
    let Ok(offers) = make_offers(hunter_interval, rng) else {
        return NegotiationResult::Failed {
            mechanism: Mechanism::Bargain,
            transcript,
        };
    };
    for gatherer_share in offers {
        let offer = Offer {
            from: hunter,
            to: gatherer,
            task,
            gatherer_share,
        };
        let response = evaluate_offer(gatherer_interval, gatherer_share);
        transcript.push(TranscriptEntry::Offer { offer, response });
        if response == Response::Accept {
            return NegotiationResult::Agreed(NegotiationOutcome {
                task,
                hunter,
                gatherer,
                shares: Shares::from_gatherer(gatherer_share),
                mechanism: Mechanism::Bargain,
                transcript,
            });
        }
    }
    NegotiationResult::Failed {
        mechanism: Mechanism::Bargain,
        transcript,
    }
}

/// Truthful bid: the largest hunter share the gatherer can concede.
pub fn place_bid(
    gatherer: GathererId,
    task: TaskId,
    gatherer_interval: &ProfitInterval,
) -> Result<Bid, NegotiationError> {
    if gatherer_interval.empty {
        return Err(NegotiationError::EmptyBidderInterval(gatherer));
    }
    Ok(Bid {
        gatherer,
        task,
        hunter_share: 1.0 - gatherer_interval.lower,
    })
}

/// Second-price sealed-bid auction. The highest bidder wins (ties broken
/// uniformly at random) and the hunter receives the second-highest bid,
/// provided it reaches the hunter's lower bound.
pub fn run_auction<R: Rng>(
    task: TaskId,
    hunter: HunterId,
    bids: &[Bid],
    hunter_interval: &ProfitInterval,
    rng: &mut R,
) -> Result<NegotiationResult, NegotiationError> {
    if bids.len() < 2 {
        return Err(NegotiationError::TooFewBids(bids.len()));
    }
    if bids.iter().any(|b| b.task != task) {
        return Err(NegotiationError::MixedTasks);
    }
    let transcript: Vec<TranscriptEntry> = bids.iter().copied().map(TranscriptEntry::Bid).collect();
    let top = bids
        .iter()
        .map(|b| b.hunter_share)
        .fold(f64::NEG_INFINITY, f64::max);
    let leaders: Vec<usize> = (0..bids.len())
        .filter(|&i| bids[i].hunter_share == top)
        .collect();
    let winner = *leaders.choose(rng).expect("at least one maximal bid");
    let second = bids
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != winner)
        .map(|(_, b)| b.hunter_share)
        .fold(f64::NEG_INFINITY, f64::max);
    if hunter_interval.empty || second < hunter_interval.lower {
        return Ok(NegotiationResult::Failed {
            mechanism: Mechanism::Auction,
            transcript,
        });
    }
    Ok(NegotiationResult::Agreed(NegotiationOutcome {
        task,
        hunter,
        gatherer: bids[winner].gatherer,
        shares: Shares::from_hunter(second),
        mechanism: Mechanism::Auction,
        transcript,
    }))
}

/// A participant's private information: its cost for the task and its
/// margin parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostProfile {
    pub cost: f64,
    pub params: MarginParams,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NashReport {
    /// No loser values the task above the winner's bid.
    pub winner_bid_high_enough: bool,
    /// The winner's utility at the share it pays is non-negative.
    pub winner_valuation_high_enough: bool,
    /// The hunter's utility at its received share is non-negative.
    pub hunter_nonnegative: bool,
}

impl NashReport {
    pub fn all(&self) -> bool {
        self.winner_bid_high_enough && self.winner_valuation_high_enough && self.hunter_nonnegative
    }
}

/// Checks the three equilibrium conditions of a second-price auction
/// outcome against the participants' true costs.
///
/// `bidders` pairs every gatherer that bid with its cost profile.
pub fn verify_nash(
    outcome: &NegotiationOutcome,
    bidders: &[(GathererId, CostProfile)],
    hunter: &CostProfile,
) -> NashReport {
    let winner_bid = outcome.winning_bid().unwrap_or(f64::NEG_INFINITY);
    let winner_bid_high_enough =
        bidders
            .iter()
            .filter(|(g, _)| *g != outcome.gatherer)
            .all(|(_, p)| {
                let pi = p.params.profit_interval(p.cost);
                pi.empty || 1.0 - pi.lower <= winner_bid
            });
    let winner_valuation_high_enough = bidders
        .iter()
        .find(|(g, _)| *g == outcome.gatherer)
        .is_some_and(|(_, p)| {
            p.params.utility(p.cost, outcome.shares.gatherer) >= -PROFIT_TOLERANCE
        });
    let hunter_nonnegative =
        hunter.params.utility(hunter.cost, outcome.shares.hunter) >= -PROFIT_TOLERANCE;
    NashReport {
        winner_bid_high_enough,
        winner_valuation_high_enough,
        hunter_nonnegative,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const T: TaskId = TaskId(0);
    const H: HunterId = HunterId(0);

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(42)
    }

    fn sorted(mut v: [f64; 3]) -> [f64; 3] {
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn offers_from_full_interval() {
        let offers = make_offers(&ProfitInterval::FULL, &mut rng()).unwrap();
        assert_eq!(sorted(offers), [0.0, 0.5, 1.0]);
    }

    #[test]
    fn offers_from_degenerate_interval() {
        let offers = make_offers(&ProfitInterval::from_lower(1.0), &mut rng()).unwrap();
        assert_eq!(offers, [0.0, 0.0, 0.0]);
    }

    #[test]
    fn offers_use_the_interval_midpoint() {
        let offers = make_offers(&ProfitInterval::from_lower(0.4), &mut rng()).unwrap();
        let s = sorted(offers);
        assert_eq!(s[0], 0.0);
        assert!((s[1] - 0.3).abs() < 1e-12);
        assert!((s[2] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn empty_interval_cannot_offer() {
        assert_eq!(
            make_offers(&ProfitInterval::EMPTY, &mut rng()),
            Err(NegotiationError::EmptyHunterInterval)
        );
    }

    #[test]
    fn offer_order_is_a_uniform_permutation() {
        let mut r = rng();
        let mut counts = std::collections::HashMap::new();
        for _ in 0..6000 {
            let o = make_offers(&ProfitInterval::FULL, &mut r).unwrap();
            *counts.entry(format!("{o:?}")).or_insert(0u32) += 1;
        }
        assert_eq!(counts.len(), 6);
        assert!(counts.values().all(|&c| (800..1200).contains(&c)));
    }

    #[test]
    fn offer_evaluation() {
        assert_eq!(evaluate_offer(&ProfitInterval::FULL, 0.0), Response::Accept);
        let pi = ProfitInterval::from_lower(1.0 / 9.0);
        assert_eq!(evaluate_offer(&pi, 0.0), Response::Reject);
        assert_eq!(evaluate_offer(&pi, 0.5), Response::Accept);
        assert_eq!(
            evaluate_offer(&ProfitInterval::EMPTY, 1.0),
            Response::Reject
        );
    }

    #[test]
    fn bargain_accepts_first_offer_with_full_intervals() {
        let mut r = rng();
        for _ in 0..20 {
            let res = bargain(
                T,
                H,
                &ProfitInterval::FULL,
                GathererId(1),
                &ProfitInterval::FULL,
                &mut r,
            );
            let out = res.agreement().unwrap();
            assert_eq!(out.transcript.len(), 1);
            assert_eq!(out.shares.hunter + out.shares.gatherer, 1.0);
        }
    }

    #[test]
    fn bargain_rejects_zero_offer_below_gatherer_floor() {
        // Every presentation order: the zero offer is refused, any offer of
        // at least 1/9 ends the bargain.
        let gpi = ProfitInterval::from_lower(1.0 / 9.0);
        for seed in 0..60 {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let res = bargain(T, H, &ProfitInterval::FULL, GathererId(1), &gpi, &mut r);
            let out = res.agreement().expect("0.5 or 1.0 is always acceptable");
            assert!(out.shares.gatherer >= 1.0 / 9.0);
            for e in &out.transcript[..out.transcript.len() - 1] {
                let TranscriptEntry::Offer { offer, response } = e else {
                    panic!()
                };
                assert_eq!(offer.gatherer_share, 0.0);
                assert_eq!(*response, Response::Reject);
            }
            assert!(out.transcript.len() <= 2);
        }
    }

    #[test]
    fn bargain_fails_for_unprofitable_gatherer() {
        let res = bargain(
            T,
            H,
            &ProfitInterval::FULL,
            GathererId(1),
            &ProfitInterval::EMPTY,
            &mut rng(),
        );
        assert!(matches!(res, NegotiationResult::Failed { .. }));
        assert_eq!(res.transcript().len(), 3);
    }

    #[test]
    fn bargain_with_empty_hunter_interval_fails_quietly() {
        let res = bargain(
            T,
            H,
            &ProfitInterval::EMPTY,
            GathererId(1),
            &ProfitInterval::FULL,
            &mut rng(),
        );
        assert!(res.agreement().is_none());
        assert!(res.transcript().is_empty());
    }

    #[test]
    fn bids_are_truthful() {
        let g = GathererId(2);
        assert_eq!(
            place_bid(g, T, &ProfitInterval::FULL).unwrap().hunter_share,
            1.0
        );
        let b = place_bid(g, T, &ProfitInterval::from_lower(1.0 / 9.0)).unwrap();
        assert!((b.hunter_share - 8.0 / 9.0).abs() < 1e-12);
        assert_eq!(
            place_bid(g, T, &ProfitInterval::from_lower(1.0))
                .unwrap()
                .hunter_share,
            0.0
        );
        assert_eq!(
            place_bid(g, T, &ProfitInterval::EMPTY),
            Err(NegotiationError::EmptyBidderInterval(g))
        );
    }

    fn bids(values: &[f64]) -> Vec<Bid> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| Bid {
                gatherer: GathererId(i),
                task: T,
                hunter_share: v,
            })
            .collect()
    }

    #[test]
    fn auction_pays_second_price() {
        let res = run_auction(
            T,
            H,
            &bids(&[0.3, 0.7, 0.5]),
            &ProfitInterval::from_lower(0.2),
            &mut rng(),
        )
        .unwrap();
        let out = res.agreement().unwrap();
        assert_eq!(out.gatherer, GathererId(1));
        assert_eq!(out.shares.hunter, 0.5);
        assert_eq!(out.shares.gatherer, 0.5);
        assert_eq!(out.winning_bid(), Some(0.7));
    }

    #[test]
    fn auction_fails_below_reserve() {
        let res = run_auction(
            T,
            H,
            &bids(&[0.3, 0.1]),
            &ProfitInterval::from_lower(0.2),
            &mut rng(),
        )
        .unwrap();
        assert!(res.agreement().is_none());
        let res =
            run_auction(T, H, &bids(&[0.3, 0.9]), &ProfitInterval::EMPTY, &mut rng()).unwrap();
        assert!(res.agreement().is_none());
    }

    #[test]
    fn auction_needs_two_bids() {
        assert_eq!(
            run_auction(T, H, &bids(&[0.3]), &ProfitInterval::FULL, &mut rng()),
            Err(NegotiationError::TooFewBids(1))
        );
    }

    #[test]
    fn auction_ties_are_split() {
        let mut r = rng();
        let mut wins = [0u32; 3];
        for _ in 0..3000 {
            let res =
                run_auction(T, H, &bids(&[0.8, 0.8, 0.2]), &ProfitInterval::FULL, &mut r).unwrap();
            let out = res.agreement().unwrap();
            assert_eq!(out.shares.hunter, 0.8);
            wins[out.gatherer.0] += 1;
        }
        assert_eq!(wins[2], 0);
        assert!((1300..1700).contains(&wins[0]));
    }

    #[test]
    fn board_orders_oldest_first() {
        let mut board = Board::new();
        let a = |h, t| Announcement {
            hunter: HunterId(h),
            task: TaskId(h as u32),
            location: Cell::new(0, h),
            announced_at: t,
        };
        board.announce(a(2, 5));
        board.announce(a(0, 7));
        board.announce(a(1, 5));
        let order: Vec<usize> = board.waiting().iter().map(|x| x.hunter.0).collect();
        assert_eq!(order, vec![1, 2, 0]);
        board.announce(a(1, 9));
        let order: Vec<usize> = board.waiting().iter().map(|x| x.hunter.0).collect();
        assert_eq!(order, vec![2, 0, 1]);
        assert_eq!(board.len(), 3);
        assert!(board.withdraw(HunterId(2)).is_some());
        assert!(board.withdraw(HunterId(2)).is_none());
    }

    fn gatherer_params(ab: f64) -> MarginParams {
        MarginParams::gatherer(ab, ab, 10.0, 10.0).unwrap()
    }

    #[test]
    fn nash_holds_for_truthful_auction() {
        let hunter = CostProfile {
            cost: 8.0,
            params: MarginParams::hunter(1.0, 1.0, 10.0, 10.0).unwrap(),
        };
        let profiles: Vec<(GathererId, CostProfile)> = [12.0, 15.0, 5.0]
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                (
                    GathererId(i),
                    CostProfile {
                        cost: c,
                        params: gatherer_params(1.0),
                    },
                )
            })
            .collect();
        let bids: Vec<Bid> = profiles
            .iter()
            .map(|(g, p)| place_bid(*g, T, &p.params.profit_interval(p.cost)).unwrap())
            .collect();
        let hpi = hunter.params.profit_interval(hunter.cost);
        let res = run_auction(T, H, &bids, &hpi, &mut rng()).unwrap();
        let out = res.agreement().unwrap();
        assert_eq!(out.gatherer, GathererId(2));
        assert!(verify_nash(out, &profiles, &hunter).all());
    }

    #[test]
    fn nash_detects_overpaying_winner() {
        let profiles = vec![
            (
                GathererId(0),
                CostProfile {
                    cost: 18.0,
                    params: gatherer_params(1.0),
                },
            ),
            (
                GathererId(1),
                CostProfile {
                    cost: 5.0,
                    params: gatherer_params(1.0),
                },
            ),
        ];
        let hunter = CostProfile {
            cost: 0.0,
            params: MarginParams::hunter(1.0, 1.0, 10.0, 10.0).unwrap(),
        };
        // Winner 0 values the task at a hunter share of 0.2 but pays 0.5.
        let out = NegotiationOutcome {
            task: T,
            hunter: H,
            gatherer: GathererId(0),
            shares: Shares::from_hunter(0.5),
            mechanism: Mechanism::Auction,
            transcript: bids(&[0.9, 0.5])
                .into_iter()
                .map(TranscriptEntry::Bid)
                .collect(),
        };
        let report = verify_nash(&out, &profiles, &hunter);
        assert!(!report.winner_valuation_high_enough);
        assert!(!report.winner_bid_high_enough);
        assert!(report.hunter_nonnegative);
    }

    #[test]
    fn nash_detects_underpaid_hunter() {
        let hunter = CostProfile {
            cost: 15.0,
            params: MarginParams::hunter(1.0, 1.0, 10.0, 10.0).unwrap(),
        };
        // Hunter lower bound is 0.5, but it receives 0.3.
        let profiles = vec![
            (
                GathererId(0),
                CostProfile {
                    cost: 0.0,
                    params: gatherer_params(1.0),
                },
            ),
            (
                GathererId(1),
                CostProfile {
                    cost: 17.0,
                    params: gatherer_params(1.0),
                },
            ),
        ];
        let out = NegotiationOutcome {
            task: T,
            hunter: H,
            gatherer: GathererId(0),
            shares: Shares::from_hunter(0.3),
            mechanism: Mechanism::Auction,
            transcript: bids(&[1.0, 0.3])
                .into_iter()
                .map(TranscriptEntry::Bid)
                .collect(),
        };
        let report = verify_nash(&out, &profiles, &hunter);
        assert!(!report.hunter_nonnegative);
        assert!(report.winner_bid_high_enough);
        assert!(report.winner_valuation_high_enough);
    }
}
