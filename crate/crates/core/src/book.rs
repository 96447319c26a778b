//! Per-venue limit order book with price-time priority.
//!
//! Prices are integer ticks and quantities integer shares. An incoming order
//! never trades against a resting order of the same trader: those orders are
//! skipped and deeper liquidity is matched instead. If the remainder of a
//! limit order would then rest crossed with the skipped orders, the older
//! same-trader orders are cancelled so the book never rests crossed.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::io::{self, Write};
use std::ops::Bound;

use thiserror::Error;

use crate::kernel::SimTime;

pub type OrderId = u64;
pub type TraderId = u32;
pub type VenueId = u16;

/// Depth levels reported per side in a snapshot.
pub const DEPTH_LEVELS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Buy => Side::Sell,
            Side::Sell => Side::Buy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Order {
    pub id: OrderId,
    pub trader: TraderId,
    pub venue: VenueId,
    pub side: Side,
    /// Limit price in ticks; `None` for a market order.
    pub price: Option<i64>,
    pub qty: u64,
    pub ts: SimTime,
}

impl Order {
    pub fn limit(id: OrderId, trader: TraderId, venue: VenueId, side: Side, price: i64, qty: u64) -> Self {
        Order { id, trader, venue, side, price: Some(price), qty, ts: SimTime::ZERO }
    }

    pub fn market(id: OrderId, trader: TraderId, venue: VenueId, side: Side, qty: u64) -> Self {
        Order { id, trader, venue, side, price: None, qty, ts: SimTime::ZERO }
    }

    pub fn at(mut self, ts: SimTime) -> Self {
        self.ts = ts;
        self
    }

    pub fn validate(&self) -> Result<(), BookError> {
        if self.qty == 0 {
            return Err(BookError::InvalidQty);
        }
        match self.price {
            Some(p) if p < 1 => Err(BookError::InvalidPrice(p)),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BookError {
    #[error("limit price must be at least one tick, got {0}")]
    InvalidPrice(i64),
    #[error("order quantity must be positive")]
    InvalidQty,
    #[error("order for venue {got} submitted to venue {venue}")]
    WrongVenue { venue: VenueId, got: VenueId },
    #[error("order id {0} is already resting")]
    DuplicateId(OrderId),
}

/// A trade. The price is always the maker's resting limit price.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fill {
    pub ts: SimTime,
    pub venue: VenueId,
    pub maker_id: OrderId,
    pub taker_id: OrderId,
    pub maker_trader: TraderId,
    pub taker_trader: TraderId,
    pub taker_side: Side,
    pub price: i64,
    pub qty: u64,
}

impl Fill {
    /// Side of `trader` in this fill, if it took part.
    pub fn side_of(&self, trader: TraderId) -> Option<Side> {
        if self.taker_trader == trader {
            Some(self.taker_side)
        } else if self.maker_trader == trader {
            Some(self.taker_side.opposite())
        } else {
            None
        }
    }

    pub fn csv_line(&self) -> String {
        format!("{},{},{},{},{},{}", self.ts.nanos(), self.venue, self.maker_id, self.taker_id, self.price, self.qty)
    }
}

pub const FILL_LOG_HEADER: &str = "ts,venue,maker_id,taker_id,price_ticks,qty";

pub fn write_fill_log<W: Write>(mut w: W, fills: &[Fill]) -> io::Result<()> {
    writeln!(w, "{FILL_LOG_HEADER}")?;
    for f in fills {
        writeln!(w, "{}", f.csv_line())?;
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SubmitOutcome {
    pub fills: Vec<Fill>,
    /// Quantity left resting on the book.
    pub rested: u64,
    /// Unfilled market-order quantity that was dropped.
    pub discarded: u64,
    /// Older same-trader orders cancelled to keep the book uncrossed.
    pub self_cancels: Vec<(OrderId, u64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Resting {
    id: OrderId,
    trader: TraderId,
    qty: u64,
}

#[derive(Debug, Clone, Default)]
pub struct OrderBook {
    bids: BTreeMap<i64, VecDeque<Resting>>,
    asks: BTreeMap<i64, VecDeque<Resting>>,
    index: HashMap<OrderId, (Side, i64)>,
}

fn crosses(taker_side: Side, limit: Option<i64>, level: i64) -> bool {
    match (taker_side, limit) {
        (_, None) => true,
        (Side::Buy, Some(l)) => level <= l,
        (Side::Sell, Some(l)) => level >= l,
    }
}

impl OrderBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn best_bid(&self) -> Option<i64> {
        self.bids.keys().next_back().copied()
    }

    pub fn best_ask(&self) -> Option<i64> {
        self.asks.keys().next().copied()
    }

    pub fn contains(&self, id: OrderId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn resting_count(&self) -> usize {
        self.index.len()
    }

    /// Resting quantity of an order, if present.
    pub fn resting_qty(&self, id: OrderId) -> Option<u64> {
        let (side, price) = self.index.get(&id)?;
        let book = match side {
            Side::Buy => &self.bids,
            Side::Sell => &self.asks,
        };
        book.get(price)?.iter().find(|r| r.id == id).map(|r| r.qty)
    }

    /// Aggregate quantity at the best `DEPTH_LEVELS` prices of a side.
    pub fn depth(&self, side: Side) -> [u64; DEPTH_LEVELS] {
        let mut out = [0u64; DEPTH_LEVELS];
        let levels: Box<dyn Iterator<Item = &VecDeque<Resting>>> = match side {
            Side::Buy => Box::new(self.bids.values().rev()),
            Side::Sell => Box::new(self.asks.values()),
        };
        for (slot, level) in out.iter_mut().zip(levels) {
            *slot = level.iter().map(|r| r.qty).sum();
        }
        out
    }

    /// Total resting quantity on a side.
    pub fn side_volume(&self, side: Side) -> u64 {
        let book = match side {
            Side::Buy => &self.bids,
            Side::Sell => &self.asks,
        };
        book.values().flat_map(|l| l.iter()).map(|r| r.qty).sum()
    }

    /// Resting orders of a trader as `(id, side, price, qty)`, in price-time order per side.
    pub fn orders_of(&self, trader: TraderId) -> Vec<(OrderId, Side, i64, u64)> {
        let mut out = Vec::new();
        for (p, level) in self.bids.iter().rev() {
            out.extend(level.iter().filter(|r| r.trader == trader).map(|r| (r.id, Side::Buy, *p, r.qty)));
        }
        for (p, level) in self.asks.iter() {
            out.extend(level.iter().filter(|r| r.trader == trader).map(|r| (r.id, Side::Sell, *p, r.qty)));
        }
        out
    }

    /// Matches an order and rests any limit remainder. `ts` stamps the fills.
    pub fn submit(&mut self, order: &Order, ts: SimTime) -> Result<SubmitOutcome, BookError> {
        order.validate()?;
        if self.index.contains_key(&order.id) {
            return Err(BookError::DuplicateId(order.id));
        }
        let mut out = SubmitOutcome::default();
        let mut remaining = order.qty;
        let OrderBook { bids, asks, index } = self;
        let (opposite, own) = match order.side {
            Side::Buy => (asks, bids),
            Side::Sell => (bids, asks),
        };

        let mut cursor: Option<i64> = None;
        while remaining > 0 {
            let next = match (order.side, cursor) {
                (Side::Sell, None) => opposite.keys().next_back(),
                (Side::Sell, Some(c)) => opposite.range(..c).next_back().map(|(k, _)| k),
                (Side::Buy, None) => opposite.keys().next(),
                (Side::Buy, Some(c)) => opposite.range((Bound::Excluded(c), Bound::Unbounded)).next().map(|(k, _)| k),
            };
            let Some(&price) = next else { break };
            if !crosses(order.side, order.price, price) {
                break;
            }
            cursor = Some(price);
            let level = opposite.get_mut(&price).expect("level exists");
            let mut i = 0;
            while i < level.len() && remaining > 0 {
                if level[i].trader == order.trader {
                    i += 1;
                    continue;
                }
                let qty = level[i].qty.min(remaining);
                out.fills.push(Fill {
                    ts,
                    venue: order.venue,
                    maker_id: level[i].id,
                    taker_id: order.id,
                    maker_trader: level[i].trader,
                    taker_trader: order.trader,
                    taker_side: order.side,
                    price,
                    qty,
                });
                remaining -= qty;
                level[i].qty -= qty;
                if level[i].qty == 0 {
                    let done = level.remove(i).expect("index in range");
                    index.remove(&done.id);
                } else {
                    i += 1;
                }
            }
            if level.is_empty() {
                opposite.remove(&price);
            }
        }

        match order.price {
            None => out.discarded = remaining,
            Some(limit) if remaining > 0 => {
                // Anything still crossing belongs to the same trader.
                let crossing: Vec<i64> = match order.side {
                    Side::Sell => opposite.range(limit..).map(|(k, _)| *k).collect(),
                    Side::Buy => opposite.range(..=limit).map(|(k, _)| *k).collect(),
                };
                for p in crossing {
                    let level = opposite.get_mut(&p).expect("level exists");
                    level.retain(|r| {
                        if r.trader == order.trader {
                            out.self_cancels.push((r.id, r.qty));
                            index.remove(&r.id);
                            false
                        } else {
                            true
                        }
                    });
                    debug_assert!(level.is_empty(), "foreign liquidity left crossing");
                    if level.is_empty() {
                        opposite.remove(&p);
                    }
                }
                own.entry(limit).or_default().push_back(Resting { id: order.id, trader: order.trader, qty: remaining });
                index.insert(order.id, (order.side, limit));
                out.rested = remaining;
            }
            Some(_) => {}
        }
        Ok(out)
    }

    /// Removes an order's residual quantity. Unknown ids return 0.
    pub fn cancel(&mut self, id: OrderId) -> u64 {
        let Some((side, price)) = self.index.remove(&id) else {
            return 0;
        };
        let book = match side {
            Side::Buy => &mut self.bids,
            Side::Sell => &mut self.asks,
        };
        let Some(level) = book.get_mut(&price) else {
            return 0;
        };
        let Some(pos) = level.iter().position(|r| r.id == id) else {
            return 0;
        };
        let r = level.remove(pos).expect("position valid");
        if level.is_empty() {
            book.remove(&price);
        }
        r.qty
    }
}

/// View of a venue at a point in time.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BookSnapshot {
    pub best_bid: Option<i64>,
    pub best_ask: Option<i64>,
    pub bid_depth: [u64; DEPTH_LEVELS],
    pub ask_depth: [u64; DEPTH_LEVELS],
    pub last_interval_volume: u64,
}

impl BookSnapshot {
    /// Midprice in ticks (may be a half tick).
    pub fn mid(&self) -> Option<f64> {
        match (self.best_bid, self.best_ask) {
            (Some(b), Some(a)) => Some((b + a) as f64 / 2.0),
            _ => None,
        }
    }

    pub fn spread(&self) -> Option<i64> {
        match (self.best_bid, self.best_ask) {
            (Some(b), Some(a)) => Some(a - b),
            _ => None,
        }
    }
}

/// Top-of-book change record used for latency-delayed market data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuoteUpdate {
    pub ts: SimTime,
    pub bid: Option<i64>,
    pub ask: Option<i64>,
}

/// An exchange venue: book plus trade tape and interval volume accounting.
#[derive(Debug, Clone)]
pub struct Venue {
    id: VenueId,
    book: OrderBook,
    interval_ns: u64,
    fills: Vec<Fill>,
    interval_volumes: Vec<u64>,
    quotes: Vec<QuoteUpdate>,
}

impl Venue {
    pub fn new(id: VenueId, interval: SimTime) -> Self {
        assert!(interval.nanos() > 0, "interval must be positive");
        Venue {
            id,
            book: OrderBook::new(),
            interval_ns: interval.nanos(),
            fills: Vec::new(),
            interval_volumes: Vec::new(),
            quotes: vec![QuoteUpdate { ts: SimTime::ZERO, bid: None, ask: None }],
        }
    }

    pub fn id(&self) -> VenueId {
        self.id
    }

    pub fn book(&self) -> &OrderBook {
        &self.book
    }

    pub fn fills(&self) -> &[Fill] {
        &self.fills
    }

    pub fn interval_index(&self, t: SimTime) -> usize {
        (t.nanos() / self.interval_ns) as usize
    }

    fn note_quote(&mut self, ts: SimTime) {
        let bid = self.book.best_bid();
        let ask = self.book.best_ask();
        let last = self.quotes.last().expect("seeded with an initial entry");
        if last.bid != bid || last.ask != ask {
            if last.ts == ts {
                self.quotes.pop();
            }
            self.quotes.push(QuoteUpdate { ts, bid, ask });
        }
    }

    pub fn submit(&mut self, order: &Order, now: SimTime) -> Result<SubmitOutcome, BookError> {
        if order.venue != self.id {
            return Err(BookError::WrongVenue { venue: self.id, got: order.venue });
        }
        let out = self.book.submit(order, now)?;
        if !out.fills.is_empty() {
            let idx = self.interval_index(now);
            if self.interval_volumes.len() <= idx {
                self.interval_volumes.resize(idx + 1, 0);
            }
            for f in &out.fills {
                self.interval_volumes[idx] += f.qty;
            }
            self.fills.extend_from_slice(&out.fills);
        }
        self.note_quote(now);
        Ok(out)
    }

    pub fn cancel(&mut self, id: OrderId, now: SimTime) -> u64 {
        let q = self.book.cancel(id);
        if q > 0 {
            self.note_quote(now);
        }
        q
    }

    /// Shares traded in interval `idx`; each trade counted once.
    pub fn interval_volume(&self, idx: usize) -> u64 {
        self.interval_volumes.get(idx).copied().unwrap_or(0)
    }

    /// Current book state. `last_interval` selects the interval whose traded
    /// volume is reported.
    pub fn snapshot(&self, last_interval: Option<usize>) -> BookSnapshot {
        BookSnapshot {
            best_bid: self.book.best_bid(),
            best_ask: self.book.best_ask(),
            bid_depth: self.book.depth(Side::Buy),
            ask_depth: self.book.depth(Side::Sell),
            last_interval_volume: last_interval.map(|i| self.interval_volume(i)).unwrap_or(0),
        }
    }

    /// Best bid and ask as they stood at time `t`.
    pub fn quote_as_of(&self, t: SimTime) -> (Option<i64>, Option<i64>) {
        let idx = self.quotes.partition_point(|q| q.ts <= t);
        match idx {
            0 => (None, None),
            i => (self.quotes[i - 1].bid, self.quotes[i - 1].ask),
        }
    }

    pub fn write_fill_log<W: Write>(&self, w: W) -> io::Result<()> {
        write_fill_log(w, &self.fills)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lim(id: u64, trader: u32, side: Side, p: i64, q: u64) -> Order {
        Order::limit(id, trader, 0, side, p, q)
    }

    #[test]
    fn market_into_empty_side_is_discarded() {
        let mut b = OrderBook::new();
        let out = b.submit(&Order::market(1, 1, 0, Side::Sell, 50), SimTime(1)).unwrap();
        assert!(out.fills.is_empty());
        assert_eq!(out.discarded, 50);
        assert_eq!(b.resting_count(), 0);
    }

    #[test]
    fn marketable_limit_fills_at_maker_price() {
        let mut b = OrderBook::new();
        b.submit(&lim(1, 1, Side::Buy, 10_000, 100), SimTime(0)).unwrap();
        let out = b.submit(&lim(2, 2, Side::Sell, 9_990, 60), SimTime(5)).unwrap();
        assert_eq!(out.fills.len(), 1);
        assert_eq!(out.fills[0].price, 10_000);
        assert_eq!(out.fills[0].qty, 60);
        assert_eq!(out.fills[0].maker_id, 1);
        assert_eq!(out.rested, 0);
        assert_eq!(b.resting_qty(1), Some(40));
    }

    #[test]
    fn price_then_time_priority() {
        let mut b = OrderBook::new();
        b.submit(&lim(1, 1, Side::Buy, 100, 10), SimTime(0)).unwrap();
        b.submit(&lim(2, 2, Side::Buy, 101, 10), SimTime(0)).unwrap();
        b.submit(&lim(3, 3, Side::Buy, 101, 10), SimTime(0)).unwrap();
        let out = b.submit(&Order::market(4, 9, 0, Side::Sell, 25), SimTime(1)).unwrap();
        let ids: Vec<_> = out.fills.iter().map(|f| (f.maker_id, f.price, f.qty)).collect();
        assert_eq!(ids, vec![(2, 101, 10), (3, 101, 10), (1, 100, 5)]);
    }

    #[test]
    fn same_trader_is_skipped_then_cancelled_if_crossed() {
        let mut b = OrderBook::new();
        b.submit(&lim(1, 7, Side::Buy, 101, 10), SimTime(0)).unwrap();
        b.submit(&lim(2, 8, Side::Buy, 100, 10), SimTime(0)).unwrap();
        let out = b.submit(&lim(3, 7, Side::Sell, 100, 15), SimTime(1)).unwrap();
        assert_eq!(out.fills.len(), 1);
        assert_eq!(out.fills[0].maker_id, 2);
        assert_eq!(out.rested, 5);
        assert_eq!(out.self_cancels, vec![(1, 10)]);
        assert_eq!(b.best_bid(), None);
        assert_eq!(b.best_ask(), Some(100));
    }

    #[test]
    fn skipped_order_survives_when_new_one_does_not_rest() {
        let mut b = OrderBook::new();
        b.submit(&lim(1, 7, Side::Buy, 101, 10), SimTime(0)).unwrap();
        b.submit(&lim(2, 8, Side::Buy, 100, 10), SimTime(0)).unwrap();
        let out = b.submit(&lim(3, 7, Side::Sell, 100, 10), SimTime(1)).unwrap();
        assert_eq!(out.fills.len(), 1);
        assert!(out.self_cancels.is_empty());
        assert_eq!(b.resting_qty(1), Some(10));
    }

    #[test]
    fn cancel_semantics() {
        let mut b = OrderBook::new();
        assert_eq!(b.cancel(42), 0);
        b.submit(&lim(1, 1, Side::Sell, 100, 100), SimTime(0)).unwrap();
        b.submit(&Order::market(2, 2, 0, Side::Buy, 40), SimTime(0)).unwrap();
        assert_eq!(b.cancel(1), 60);
        assert_eq!(b.cancel(1), 0);
        assert_eq!(b.best_ask(), None);
    }

    #[test]
    fn invalid_orders() {
        let mut b = OrderBook::new();
        assert_eq!(b.submit(&lim(1, 1, Side::Buy, 0, 1), SimTime(0)), Err(BookError::InvalidPrice(0)));
        assert_eq!(b.submit(&lim(1, 1, Side::Buy, 5, 0), SimTime(0)), Err(BookError::InvalidQty));
        b.submit(&lim(1, 1, Side::Buy, 5, 1), SimTime(0)).unwrap();
        assert_eq!(b.submit(&lim(1, 1, Side::Buy, 5, 1), SimTime(0)), Err(BookError::DuplicateId(1)));
    }

    #[test]
    fn snapshot_and_interval_volume() {
        let mut v = Venue::new(0, SimTime::from_secs(60));
        let s = v.snapshot(Some(0));
        assert_eq!(s.best_bid, None);
        assert_eq!(s.best_ask, None);

        v.submit(&lim(1, 1, Side::Buy, 10_000, 100), SimTime(0)).unwrap();
        let s = v.snapshot(Some(0));
        assert_eq!(s.best_bid, Some(10_000));
        assert_eq!(s.bid_depth[0], 100);

        v.submit(&lim(2, 2, Side::Sell, 9_990, 60), SimTime::from_secs(10)).unwrap();
        assert_eq!(v.snapshot(Some(0)).last_interval_volume, 60);
        v.submit(&Order::market(3, 3, 0, Side::Sell, 40), SimTime::from_secs(20)).unwrap();
        assert_eq!(v.interval_volume(0), 100);
        assert_eq!(v.interval_volume(1), 0);
    }

    #[test]
    fn quote_history_lookup() {
        let mut v = Venue::new(0, SimTime::from_secs(60));
        v.submit(&lim(1, 1, Side::Buy, 100, 1), SimTime(10)).unwrap();
        v.submit(&lim(2, 1, Side::Sell, 102, 1), SimTime(20)).unwrap();
        assert_eq!(v.quote_as_of(SimTime(5)), (None, None));
        assert_eq!(v.quote_as_of(SimTime(10)), (Some(100), None));
        assert_eq!(v.quote_as_of(SimTime(25)), (Some(100), Some(102)));
        v.cancel(1, SimTime(30));
        assert_eq!(v.quote_as_of(SimTime(30)), (None, Some(102)));
        assert_eq!(v.quote_as_of(SimTime(29)), (Some(100), Some(102)));
    }

    #[test]
    fn wrong_venue_rejected() {
        let mut v = Venue::new(1, SimTime::from_secs(60));
        let o = lim(1, 1, Side::Buy, 100, 1);
        assert_eq!(v.submit(&o, SimTime(0)), Err(BookError::WrongVenue { venue: 1, got: 0 }));
    }
}
