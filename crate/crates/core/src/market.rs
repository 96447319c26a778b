//! The simulated two-venue market: exchanges, background population and the
//! execution agent's order gateway, driven by the event kernel.
//!
//! Market data reaches agents through the venues' top-of-book history and a
//! once-per-second midprice tape, always read as of `now - latency`, so no
//! agent observes data before it could have arrived.

use sha2::{Digest, Sha256};

use crate::agents::{
    market_maker_act, momentum_act, noise_act, noise_next_wakeup, value_act, value_estimate, AgentPopulation,
    FundamentalOu, FundamentalPath, MarketMakerParams, MomentumParams, NoiseParams, OrderIntent, Touch, ValueParams,
};
use crate::book::{BookSnapshot, Fill, Order, OrderId, Side, TraderId, Venue, VenueId};
use crate::kernel::{AgentId, Event, Handler, Kernel, LatencyModel, RngStream, SimTime};

#[derive(Debug, Clone, PartialEq)]
pub struct MarketConfig {
    pub venues: usize,
    /// Length of one accounting interval (the execution decision interval).
    pub interval: SimTime,
    pub session: SimTime,
    pub latency_ns: u64,
    pub fundamental_step: SimTime,
    pub fundamental: FundamentalOu<f64>,
    pub population: AgentPopulation,
    pub market_maker: MarketMakerParams,
    pub noise: NoiseParams,
    pub momentum: MomentumParams,
    pub value: ValueParams,
}

impl Default for MarketConfig {
    fn default() -> Self {
        MarketConfig {
            venues: 2,
            interval: SimTime::from_secs(60),
            session: SimTime::from_minutes(390),
            latency_ns: LatencyModel::DEFAULT_NS,
            fundamental_step: SimTime::from_secs(1),
            fundamental: FundamentalOu::default(),
            population: AgentPopulation::default(),
            market_maker: MarketMakerParams::default(),
            noise: NoiseParams::default(),
            momentum: MomentumParams::default(),
            value: ValueParams::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Msg {
    Wake,
    Tick,
    Submit(Order),
    Cancel(OrderId),
    /// Atomic cancel-and-replace of a market maker's quotes.
    Replace {
        cancel: Vec<OrderId>,
        orders: Vec<Order>,
    },
}

/// Agent id ranges. Venue `i` is agent `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub venues: u32,
    pub exec: AgentId,
    pub clock: AgentId,
    pub makers: AgentId,
    pub noise: AgentId,
    pub momentum: AgentId,
    pub value: AgentId,
    pub end: AgentId,
}

impl Layout {
    fn new(venues: u32, pop: &AgentPopulation) -> Self {
        let exec = venues;
        let clock = exec + 1;
        let makers = clock + 1;
        let noise = makers + pop.n_market_makers;
        let momentum = noise + pop.n_noise;
        let value = momentum + pop.n_momentum;
        let end = value + pop.n_value;
        Layout { venues, exec, clock, makers, noise, momentum, value, end }
    }

    pub fn is_market_maker(&self, id: AgentId) -> bool {
        (self.makers..self.noise).contains(&id)
    }

    pub fn is_background(&self, id: AgentId) -> bool {
        id >= self.makers && id < self.end
    }
}

struct MakerState {
    venue: usize,
    inventory: i64,
    live: Vec<OrderId>,
    next_local: u64,
}

/// `rng` drives only the wake schedule and venue choice, so those stay the
/// same whatever the agent sees in the book; each wake's decisions draw from
/// a fresh stream seeded off it.
struct TraderState {
    venue: usize,
    rng: RngStream,
    next_local: u64,
}

impl TraderState {
    fn decision_stream(&mut self) -> RngStream {
        RngStream::new(self.rng.next_u64())
    }
}

fn order_id(agent: AgentId, local: &mut u64) -> OrderId {
    *local += 1;
    ((agent as u64) << 32) | *local
}

pub struct MarketWorld {
    cfg: MarketConfig,
    layout: Layout,
    venues: Vec<Venue>,
    fundamental: FundamentalPath,
    makers: Vec<MakerState>,
    noise: Vec<TraderState>,
    momentum: Vec<TraderState>,
    value: Vec<TraderState>,
    mid_tape: Vec<Vec<f64>>,
    tape_step_ns: u64,
    exec_fills: Vec<Fill>,
    exec_next_local: u64,
    exec_live: Vec<(usize, OrderId)>,
    background_digest: Sha256,
    self_match_fills: u64,
}

impl MarketWorld {
    fn latency(&self) -> u64 {
        self.cfg.latency_ns
    }

    fn touch_as_of(&self, venue: usize, t: SimTime) -> Touch {
        let (bid, ask) = self.venues[venue].quote_as_of(t);
        Touch { bid, ask }
    }

    fn note_wake(&mut self, agent: AgentId, now: SimTime, rng_pos: u64) {
        self.background_digest.update(agent.to_le_bytes());
        self.background_digest.update(now.nanos().to_le_bytes());
        self.background_digest.update(rng_pos.to_le_bytes());
    }

    fn deliver(&mut self, venue: usize, order: Order, now: SimTime) {
        let order = order.at(now);
        match self.venues[venue].submit(&order, now) {
            Ok(out) => {
                for f in &out.fills {
                    self.on_fill(f);
                }
            }
            Err(e) => debug_assert!(false, "rejected order {order:?}: {e}"),
        }
    }

    fn on_fill(&mut self, f: &Fill) {
        if f.maker_trader == f.taker_trader {
            self.self_match_fills += 1;
        }
        for trader in [f.maker_trader, f.taker_trader] {
            if trader == self.layout.exec {
                self.exec_fills.push(*f);
            } else if self.layout.is_market_maker(trader) {
                let m = &mut self.makers[(trader - self.layout.makers) as usize];
                match f.side_of(trader) {
                    Some(Side::Buy) => m.inventory += f.qty as i64,
                    Some(Side::Sell) => m.inventory -= f.qty as i64,
                    None => {}
                }
            }
        }
    }

    fn send_intent(
        kernel: &mut Kernel<Msg>,
        agent: AgentId,
        venue: usize,
        intent: OrderIntent,
        local: &mut u64,
        lifetime: Option<u64>,
    ) {
        let id = order_id(agent, local);
        let order = Order {
            id,
            trader: agent,
            venue: venue as VenueId,
            side: intent.side,
            price: intent.price,
            qty: intent.qty,
            ts: kernel.now(),
        };
        let h = kernel.send(agent, venue as AgentId, Msg::Submit(order));
        if let (Ok(_), Some(secs), Some(_)) = (h, lifetime, intent.price) {
            let at = kernel
                .now()
                .plus_nanos(kernel.latency().one_way_ns(agent, venue as AgentId) + secs * SimTime::NANOS_PER_SEC);
            let _ = kernel.schedule_from(agent, at, venue as AgentId, Msg::Cancel(id));
        }
    }

    fn on_maker_wake(&mut self, kernel: &mut Kernel<Msg>, agent: AgentId) {
        let now = kernel.now();
        self.note_wake(agent, now, 0);
        let idx = (agent - self.layout.makers) as usize;
        let fundamental = self.fundamental.value_at(now);
        let m = &mut self.makers[idx];
        let intents = market_maker_act(fundamental, m.inventory, &self.cfg.market_maker);
        let venue = m.venue;
        let orders: Vec<Order> = intents
            .iter()
            .map(|i| Order {
                id: order_id(agent, &mut m.next_local),
                trader: agent,
                venue: venue as VenueId,
                side: i.side,
                price: i.price,
                qty: i.qty,
                ts: now,
            })
            .collect();
        let cancel = std::mem::replace(&mut m.live, orders.iter().map(|o| o.id).collect());
        let _ = kernel.send(agent, venue as AgentId, Msg::Replace { cancel, orders });
        let next = now.plus_nanos(self.cfg.market_maker.requote_ms * 1_000_000);
        if next < self.cfg.session {
            let _ = kernel.schedule(next, agent, Msg::Wake);
        }
    }

    fn on_noise_wake(&mut self, kernel: &mut Kernel<Msg>, agent: AgentId) {
        let now = kernel.now();
        let seen = now.saturating_sub_nanos(self.latency());
        let idx = (agent - self.layout.noise) as usize;
        let n_venues = self.venues.len();
        let st = &mut self.noise[idx];
        let venue = st.rng.index(n_venues);
        st.venue = venue;
        let mut decide = st.decision_stream();
        let (bid, ask) = self.venues[venue].quote_as_of(seen);
        let intent = noise_act(Touch { bid, ask }, &self.cfg.noise, &mut decide);
        if let Some(intent) = intent {
            let life = Some(self.cfg.noise.order_lifetime_secs);
            Self::send_intent(kernel, agent, venue, intent, &mut st.next_local, life);
        }
        let next = noise_next_wakeup(now, self.cfg.session, &self.cfg.noise, self.cfg.population.n_noise, &mut st.rng);
        let pos = st.rng.next_u64();
        self.note_wake(agent, now, pos);
        if let Some(t) = next {
            let _ = kernel.schedule(t, agent, Msg::Wake);
        }
    }

    fn on_momentum_wake(&mut self, kernel: &mut Kernel<Msg>, agent: AgentId) {
        let now = kernel.now();
        let seen = now.saturating_sub_nanos(self.latency());
        let idx = (agent - self.layout.momentum) as usize;
        let st = &mut self.momentum[idx];
        let mut decide = st.decision_stream();
        let tape = &self.mid_tape[st.venue];
        let visible = ((seen.nanos() / self.tape_step_ns) as usize + 1).min(tape.len());
        let intent = momentum_act(&tape[..visible], &self.cfg.momentum, &mut decide);
        if let Some(intent) = intent {
            Self::send_intent(kernel, agent, st.venue, intent, &mut st.next_local, None);
        }
        let dt = st.rng.exponential(1.0 / self.cfg.momentum.mean_wake_secs);
        let pos = st.rng.next_u64();
        self.note_wake(agent, now, pos);
        let next = now.plus_nanos((dt * SimTime::NANOS_PER_SEC as f64) as u64 + 1);
        if next < self.cfg.session {
            let _ = kernel.schedule(next, agent, Msg::Wake);
        }
    }

    fn on_value_wake(&mut self, kernel: &mut Kernel<Msg>, agent: AgentId) {
        let now = kernel.now();
        let seen = now.saturating_sub_nanos(self.latency());
        let idx = (agent - self.layout.value) as usize;
        let fundamental = self.fundamental.value_at(now);
        let mid = self.touch_as_of(self.value[idx].venue, seen).mid();
        let st = &mut self.value[idx];
        let mut decide = st.decision_stream();
        let est = value_estimate(fundamental, &self.cfg.value, &mut decide);
        if let Some(intent) = value_act(est, mid, &self.cfg.value, &mut decide) {
            Self::send_intent(kernel, agent, st.venue, intent, &mut st.next_local, None);
        }
        let dt = st.rng.exponential(1.0 / self.cfg.value.mean_wake_secs);
        let pos = st.rng.next_u64();
        self.note_wake(agent, now, pos);
        let next = now.plus_nanos((dt * SimTime::NANOS_PER_SEC as f64) as u64 + 1);
        if next < self.cfg.session {
            let _ = kernel.schedule(next, agent, Msg::Wake);
        }
    }

    fn on_tick(&mut self, kernel: &mut Kernel<Msg>) {
        let now = kernel.now();
        for (v, tape) in self.venues.iter().zip(self.mid_tape.iter_mut()) {
            let s = v.book();
            let mid = match (s.best_bid(), s.best_ask()) {
                (Some(b), Some(a)) => (a + b) as f64 / 2.0,
                _ => *tape.last().unwrap_or(&self.cfg.fundamental.x0),
            };
            tape.push(mid);
        }
        let next = now.plus_nanos(self.tape_step_ns);
        if next <= self.cfg.session {
            let _ = kernel.schedule(next, self.layout.clock, Msg::Tick);
        }
    }
}

impl Handler<Msg> for MarketWorld {
    fn handle(&mut self, kernel: &mut Kernel<Msg>, ev: Event<Msg>) {
        let now = ev.deliver_at;
        let to = ev.recipient;
        if to < self.layout.venues {
            let v = to as usize;
            match ev.payload {
                Msg::Submit(order) => self.deliver(v, order, now),
                Msg::Cancel(id) => {
                    self.venues[v].cancel(id, now);
                }
                Msg::Replace { cancel, orders } => {
                    for id in cancel {
                        self.venues[v].cancel(id, now);
                    }
                    for o in orders {
                        self.deliver(v, o, now);
                    }
                }
                Msg::Wake | Msg::Tick => {}
            }
            return;
        }
        match ev.payload {
            Msg::Tick => self.on_tick(kernel),
            Msg::Wake => {
                let l = self.layout;
                if (l.makers..l.noise).contains(&to) {
                    self.on_maker_wake(kernel, to);
                } else if (l.noise..l.momentum).contains(&to) {
                    self.on_noise_wake(kernel, to);
                } else if (l.momentum..l.value).contains(&to) {
                    self.on_momentum_wake(kernel, to);
                } else if (l.value..l.end).contains(&to) {
                    self.on_value_wake(kernel, to);
                }
            }
            _ => {}
        }
    }
}

/// A live order of the execution agent as known to its gateway.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GatewayOrder {
    pub venue: usize,
    pub id: OrderId,
}

/// Kernel plus world for one trading day.
pub struct MarketSim {
    kernel: Kernel<Msg>,
    world: MarketWorld,
}

impl MarketSim {
    pub fn new(cfg: &MarketConfig, master_seed: u64) -> Self {
        assert!(cfg.venues >= 1 && cfg.venues <= u16::MAX as usize, "venue count out of range");
        let layout = Layout::new(cfg.venues as u32, &cfg.population);
        let mut kernel = Kernel::new(LatencyModel::constant(cfg.latency_ns));
        kernel.register_agents(layout.end);

        let mut fund_rng = RngStream::for_agent(master_seed, u64::MAX);
        let fundamental = FundamentalPath::generate(&cfg.fundamental, cfg.session, cfg.fundamental_step, &mut fund_rng);
        let venues: Vec<Venue> = (0..cfg.venues).map(|i| Venue::new(i as VenueId, cfg.interval)).collect();
        let pop = cfg.population;

        let makers = (0..pop.n_market_makers)
            .map(|i| MakerState { venue: i as usize % cfg.venues, inventory: 0, live: Vec::new(), next_local: 0 })
            .collect();
        let trader = |base: AgentId, i: u32| TraderState {
            venue: i as usize % cfg.venues,
            rng: RngStream::for_agent(master_seed, (base + i) as u64),
            next_local: 0,
        };
        let noise = (0..pop.n_noise).map(|i| trader(layout.noise, i)).collect();
        let momentum = (0..pop.n_momentum).map(|i| trader(layout.momentum, i)).collect();
        let value = (0..pop.n_value).map(|i| trader(layout.value, i)).collect();

        let mut world = MarketWorld {
            cfg: cfg.clone(),
            layout,
            venues,
            fundamental,
            makers,
            noise,
            momentum,
            value,
            mid_tape: vec![Vec::new(); cfg.venues],
            tape_step_ns: SimTime::NANOS_PER_SEC,
            exec_fills: Vec::new(),
            exec_next_local: 0,
            exec_live: Vec::new(),
            background_digest: Sha256::new(),
            self_match_fills: 0,
        };

        // Opening book: each maker's ladder is in place at the open.
        let x0 = cfg.fundamental.x0;
        for i in 0..pop.n_market_makers {
            let agent = layout.makers + i;
            let m = &mut world.makers[i as usize];
            let venue = m.venue;
            let mut ids = Vec::new();
            for intent in market_maker_act(x0, 0, &cfg.market_maker) {
                let id = order_id(agent, &mut m.next_local);
                ids.push(id);
                let o = Order {
                    id,
                    trader: agent,
                    venue: venue as VenueId,
                    side: intent.side,
                    price: intent.price,
                    qty: intent.qty,
                    ts: SimTime::ZERO,
                };
                world.venues[venue].submit(&o, SimTime::ZERO).expect("opening quotes are valid");
            }
            m.live = ids;
        }

        kernel.schedule(SimTime::ZERO, layout.clock, Msg::Tick).expect("clock registered");
        let requote_ns = cfg.market_maker.requote_ms * 1_000_000;
        for i in 0..pop.n_market_makers {
            let offset = requote_ns / (pop.n_market_makers as u64 + 1) * (i as u64 + 1);
            kernel.schedule(SimTime(offset), layout.makers + i, Msg::Wake).expect("maker registered");
        }
        for i in 0..pop.n_noise {
            let st = &mut world.noise[i as usize];
            if let Some(t) = noise_next_wakeup(SimTime::ZERO, cfg.session, &cfg.noise, pop.n_noise, &mut st.rng) {
                kernel.schedule(t, layout.noise + i, Msg::Wake).expect("noise registered");
            }
        }
        for i in 0..pop.n_momentum {
            let st = &mut world.momentum[i as usize];
            let dt = st.rng.exponential(1.0 / cfg.momentum.mean_wake_secs);
            kernel.schedule(SimTime((dt * 1e9) as u64 + 1), layout.momentum + i, Msg::Wake).expect("registered");
        }
        for i in 0..pop.n_value {
            let st = &mut world.value[i as usize];
            let dt = st.rng.exponential(1.0 / cfg.value.mean_wake_secs);
            kernel.schedule(SimTime((dt * 1e9) as u64 + 1), layout.value + i, Msg::Wake).expect("registered");
        }
        MarketSim { kernel, world }
    }

    pub fn config(&self) -> &MarketConfig {
        &self.world.cfg
    }

    pub fn layout(&self) -> Layout {
        self.world.layout
    }

    pub fn now(&self) -> SimTime {
        self.kernel.now()
    }

    pub fn events_processed(&self) -> u64 {
        self.kernel.processed()
    }

    pub fn run_until(&mut self, t: SimTime) -> usize {
        self.kernel.run_until(t, &mut self.world)
    }

    pub fn venue(&self, i: usize) -> &Venue {
        &self.world.venues[i]
    }

    pub fn venues(&self) -> &[Venue] {
        &self.world.venues
    }

    pub fn snapshot(&self, venue: usize, last_interval: Option<usize>) -> BookSnapshot {
        self.world.venues[venue].snapshot(last_interval)
    }

    pub fn fundamental(&self) -> &FundamentalPath {
        &self.world.fundamental
    }

    pub fn market_maker_inventory(&self, i: usize) -> i64 {
        self.world.makers[i].inventory
    }

    pub fn exec_trader(&self) -> TraderId {
        self.world.layout.exec
    }

    /// One-way latency between the execution agent and a venue.
    pub fn exec_latency_ns(&self, venue: usize) -> u64 {
        self.kernel.latency().one_way_ns(self.world.layout.exec, venue as AgentId)
    }

    /// Sends an order from the execution agent; it reaches the venue after
    /// the one-way latency. With `expire_at`, the venue cancels any
    /// remainder at that time.
    pub fn submit_exec(
        &mut self,
        venue: usize,
        side: Side,
        price: Option<i64>,
        qty: u64,
        expire_at: Option<SimTime>,
    ) -> OrderId {
        let exec = self.world.layout.exec;
        let id = order_id(exec, &mut self.world.exec_next_local);
        let order = Order { id, trader: exec, venue: venue as VenueId, side, price, qty, ts: self.kernel.now() };
        self.kernel.send(exec, venue as AgentId, Msg::Submit(order)).expect("venue registered");
        if let Some(at) = expire_at {
            self.kernel.schedule_from(exec, at, venue as AgentId, Msg::Cancel(id)).expect("expiry in the future");
        }
        self.world.exec_live.retain(|&(v, oid)| self.world.venues[v].book().contains(oid));
        self.world.exec_live.push((venue, id));
        id
    }

    /// Orders of the execution agent currently resting on any venue.
    pub fn exec_resting(&self) -> Vec<(usize, OrderId, Side, i64, u64)> {
        let exec = self.world.layout.exec;
        let mut out = Vec::new();
        for (i, v) in self.world.venues.iter().enumerate() {
            for (id, side, p, q) in v.book().orders_of(exec) {
                out.push((i, id, side, p, q));
            }
        }
        out
    }

    /// Sends cancels for every order the gateway has issued.
    pub fn cancel_all_exec(&mut self) -> usize {
        let exec = self.world.layout.exec;
        let live = std::mem::take(&mut self.world.exec_live);
        for &(venue, id) in &live {
            let _ = self.kernel.send(exec, venue as AgentId, Msg::Cancel(id));
        }
        live.len()
    }

    pub fn take_exec_fills(&mut self) -> Vec<Fill> {
        std::mem::take(&mut self.world.exec_fills)
    }

    /// Digest over background wake times and random-stream positions.
    pub fn background_digest(&self) -> [u8; 32] {
        self.world.background_digest.clone().finalize().into()
    }

    /// Count of fills where maker and taker are the same trader (must stay 0).
    pub fn self_match_fills(&self) -> u64 {
        self.world.self_match_fills
    }

    pub fn mid_tape(&self, venue: usize) -> &[f64] {
        &self.world.mid_tape[venue]
    }
}
