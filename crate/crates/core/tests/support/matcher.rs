//! A brute-force reference matcher and drivers comparing it to the order book.

use safe_exec::book::{Order, OrderBook, OrderId, Side, TraderId};
use safe_exec::kernel::{RngStream, SimTime};
use safe_exec::market::{MarketConfig, MarketSim};

#[derive(Debug, Clone, Copy)]
pub enum Op {
    Submit { trader: TraderId, side: Side, price: Option<i64>, qty: u64 },
    Cancel(usize),
}

#[derive(Debug, Clone, Copy)]
struct RefOrder {
    id: OrderId,
    trader: TraderId,
    side: Side,
    price: i64,
    qty: u64,
    seq: usize,
}

#[derive(Debug, Default)]
struct Reference {
    resting: Vec<RefOrder>,
    seq: usize,
}

/// (maker, taker, price, qty)
type SimpleFill = (OrderId, OrderId, i64, u64);

#[derive(Debug, PartialEq)]
struct Outcome {
    fills: Vec<SimpleFill>,
    rested: u64,
    discarded: u64,
    self_cancels: Vec<(OrderId, u64)>,
}

impl Reference {
    /// Scans every resting order for the best eligible counterparty each time.
    fn submit(&mut self, id: OrderId, trader: TraderId, side: Side, price: Option<i64>, qty: u64) -> Outcome {
        let mut remaining = qty;
        let mut fills = Vec::new();
        let crosses = |p: i64| match (side, price) {
            (_, None) => true,
            (Side::Buy, Some(l)) => p <= l,
            (Side::Sell, Some(l)) => p >= l,
        };
        while remaining > 0 {
            let best = self
                .resting
                .iter()
                .enumerate()
                .filter(|(_, r)| r.side != side && r.trader != trader && crosses(r.price))
                .min_by_key(|(_, r)| (if side == Side::Sell { -r.price } else { r.price }, r.seq))
                .map(|(i, _)| i);
            let Some(i) = best else { break };
            let take = self.resting[i].qty.min(remaining);
            fills.push((self.resting[i].id, id, self.resting[i].price, take));
            remaining -= take;
            self.resting[i].qty -= take;
            if self.resting[i].qty == 0 {
                self.resting.remove(i);
            }
        }
        let mut out = Outcome { fills, rested: 0, discarded: 0, self_cancels: Vec::new() };
        match price {
            None => out.discarded = remaining,
            Some(limit) if remaining > 0 => {
                let mut cancels: Vec<RefOrder> =
                    self.resting.iter().filter(|r| r.side != side && crosses(r.price)).copied().collect();
                assert!(cancels.iter().all(|r| r.trader == trader));
                cancels.sort_by_key(|r| (r.price, r.seq));
                out.self_cancels = cancels.iter().map(|r| (r.id, r.qty)).collect();
                self.resting.retain(|r| !(r.side != side && crosses(r.price)));
                self.resting.push(RefOrder { id, trader, side, price: limit, qty: remaining, seq: self.seq });
                self.seq += 1;
                out.rested = remaining;
            }
            Some(_) => {}
        }
        out
    }

    fn cancel(&mut self, id: OrderId) -> u64 {
        match self.resting.iter().position(|r| r.id == id) {
            Some(i) => self.resting.remove(i).qty,
            None => 0,
        }
    }

    /// Resting orders of a trader in price-time order per side.
    fn orders_of(&self, trader: TraderId) -> Vec<(OrderId, Side, i64, u64)> {
        let mut bids: Vec<RefOrder> =
            self.resting.iter().filter(|r| r.trader == trader && r.side == Side::Buy).copied().collect();
        bids.sort_by_key(|r| (-r.price, r.seq));
        let mut asks: Vec<RefOrder> =
            self.resting.iter().filter(|r| r.trader == trader && r.side == Side::Sell).copied().collect();
        asks.sort_by_key(|r| (r.price, r.seq));
        bids.iter().chain(&asks).map(|r| (r.id, r.side, r.price, r.qty)).collect()
    }
}

const TRADERS: [TraderId; 3] = [0, 1, 2];

pub fn run_both(ops: &[Op]) {
    let mut book = OrderBook::new();
    let mut reference = Reference::default();
    let mut ids = Vec::new();
    for (k, op) in ops.iter().enumerate() {
        match *op {
            Op::Submit { trader, side, price, qty } => {
                let id = k as OrderId + 1;
                ids.push(id);
                let order = match price {
                    Some(p) => Order::limit(id, trader, 0, side, p, qty),
                    None => Order::market(id, trader, 0, side, qty),
                };
                let got = book.submit(&order, SimTime(k as u64)).unwrap();
                let want = reference.submit(id, trader, side, price, qty);
                let mut cancels = got.self_cancels.clone();
                cancels.sort_by_key(|&(id, _)| id);
                let mut want_cancels = want.self_cancels.clone();
                want_cancels.sort_by_key(|&(id, _)| id);
                let simple: Vec<SimpleFill> =
                    got.fills.iter().map(|f| (f.maker_id, f.taker_id, f.price, f.qty)).collect();
                assert_eq!(simple, want.fills, "fills differ at op {k} in {ops:?}");
                assert_eq!((got.rested, got.discarded), (want.rested, want.discarded), "op {k} in {ops:?}");
                assert_eq!(cancels, want_cancels, "op {k} in {ops:?}");
                assert!(got.fills.iter().all(|f| f.maker_trader != f.taker_trader));
            }
            Op::Cancel(j) => {
                let id = ids.get(j % ids.len().max(1)).copied().unwrap_or(999);
                assert_eq!(book.cancel(id), reference.cancel(id), "cancel at op {k} in {ops:?}");
            }
        }
        for t in TRADERS {
            assert_eq!(book.orders_of(t), reference.orders_of(t), "book state after op {k} in {ops:?}");
        }
        if let (Some(b), Some(a)) = (book.best_bid(), book.best_ask()) {
            assert!(b < a, "crossed book after op {k} in {ops:?}");
        }
    }
}

/// Every sequence of up to three orders over a small alphabet; returns the
/// number of three-order sequences.
pub fn exhaustive_three_order_sequences() -> usize {
    let mut alphabet = Vec::new();
    for trader in [0, 1] {
        for side in [Side::Buy, Side::Sell] {
            for price in [None, Some(99), Some(100), Some(101)] {
                for qty in [1, 2] {
                    alphabet.push(Op::Submit { trader, side, price, qty });
                }
            }
        }
    }
    let n = alphabet.len();
    let mut count = 0;
    for a in 0..n {
        run_both(&[alphabet[a]]);
        for b in 0..n {
            run_both(&[alphabet[a], alphabet[b]]);
            for c in 0..n {
                run_both(&[alphabet[a], alphabet[b], alphabet[c]]);
                count += 1;
            }
        }
    }
    assert_eq!(count, 32 * 32 * 32);
    count
}

/// `cases` random sequences of 1 to 10 operations; returns the number of orders submitted.
pub fn random_sequences(cases: usize, seed: u64) -> usize {
    let mut rng = RngStream::new(seed);
    let mut orders = 0;
    for _ in 0..cases {
        let len = rng.int_inclusive(1, 10) as usize;
        let ops: Vec<Op> = (0..len)
            .map(|_| {
                if rng.uniform() < 1.0 / 9.0 {
                    Op::Cancel(rng.index(10))
                } else {
                    orders += 1;
                    Op::Submit {
                        trader: rng.int_inclusive(0, 2) as TraderId,
                        side: if rng.uniform() < 0.5 { Side::Buy } else { Side::Sell },
                        price: if rng.uniform() < 0.85 { Some(rng.int_inclusive(97, 103)) } else { None },
                        qty: rng.int_inclusive(1, 6) as u64,
                    }
                }
            })
            .collect();
        run_both(&ops);
    }
    orders
}

/// Full sessions on the default market; returns the number of fills checked.
pub fn full_days_never_self_match(seeds: &[u64]) -> usize {
    let cfg = MarketConfig::default();
    let mut fills = 0;
    for &seed in seeds {
        let mut sim = MarketSim::new(&cfg, seed);
        sim.run_until(cfg.session);
        assert_eq!(sim.self_match_fills(), 0);
        for v in sim.venues() {
            assert!(!v.fills().is_empty());
            assert!(v.fills().iter().all(|f| f.maker_trader != f.taker_trader));
            fills += v.fills().len();
        }
    }
    fills
}
