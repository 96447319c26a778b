//! Property suite for the constraint shield over randomized actions.

use safe_exec::book::Side;
use safe_exec::env::{ExecAction, VenueAction};
use safe_exec::kernel::RngStream;
use safe_exec::shield::{check, project, ConstraintSet, LiveOrder, ShieldInputs, ViolationKind};

const CASES: usize = 20_000;
const VENUES: usize = 2;

struct Case {
    action: ExecAction,
    v_hat: Vec<u64>,
    bids: Vec<Option<i64>>,
    live: Vec<LiveOrder>,
    constraints: ConstraintSet,
}

fn gen_case(rng: &mut RngStream) -> Case {
    let bids: Vec<Option<i64>> =
        (0..VENUES).map(|_| if rng.uniform() < 0.1 { None } else { Some(rng.int_inclusive(9_800, 10_200)) }).collect();
    let v_hat: Vec<u64> =
        (0..VENUES).map(|_| if rng.uniform() < 0.05 { 0 } else { rng.int_inclusive(0, 20_000) as u64 }).collect();
    let action = ExecAction {
        venues: (0..VENUES)
            .map(|i| VenueAction {
                volume: if rng.uniform() < 0.1 { 0 } else { rng.int_inclusive(0, 3_000) as u64 },
                price: bids[i].unwrap_or(10_000) + rng.int_inclusive(-300, 50),
            })
            .collect(),
    };
    let live = (0..rng.int_inclusive(0, 2))
        .map(|_| LiveOrder {
            venue: rng.int_inclusive(0, VENUES as i64 - 1) as usize,
            side: if rng.uniform() < 0.7 { Side::Buy } else { Side::Sell },
            price: rng.int_inclusive(9_600, 10_100),
            qty: rng.int_inclusive(0, 500) as u64,
        })
        .collect();
    let alpha_ppm = rng.int_inclusive(1, 1_000_000) as u32;
    let beta_ppm = rng.int_inclusive(0, 50_000) as u32;
    let constraints = ConstraintSet::from_ppm(alpha_ppm, beta_ppm, rng.uniform() < 0.8).unwrap();
    Case { action, v_hat, bids, live, constraints }
}

impl Case {
    fn inputs(&self) -> ShieldInputs<'_> {
        ShieldInputs { step: 7, v_hat: &self.v_hat, best_bids: &self.bids, live: &self.live }
    }
}

fn compliant(c: &ConstraintSet, inputs: &ShieldInputs<'_>, venue: usize, a: VenueAction) -> bool {
    let mut probe = ExecAction { venues: vec![VenueAction::default(); VENUES] };
    probe.venues[venue] = a;
    check(&probe, c, inputs).is_empty()
}

pub fn idempotent_and_sound() {
    let mut rng = RngStream::new(0x5eed_0001);
    for _ in 0..CASES {
        let case = gen_case(&mut rng);
        let inputs = case.inputs();
        let (safe, reports) = project(&case.action, &case.constraints, &inputs);
        assert_eq!(check(&case.action, &case.constraints, &inputs), reports);
        assert!(reports.iter().all(|r| r.magnitude > 0));
        assert!(check(&safe, &case.constraints, &inputs).is_empty(), "unsound on {:?}", case.action);
        let (again, more) = project(&safe, &case.constraints, &inputs);
        assert_eq!(again, safe);
        assert!(more.is_empty());
    }
}

pub fn minimal_boundary_projection() {
    let mut rng = RngStream::new(0x5eed_0002);
    for _ in 0..CASES {
        let case = gen_case(&mut rng);
        let c = case.constraints;
        let inputs = case.inputs();
        let (safe, reports) = project(&case.action, &c, &inputs);
        for i in 0..VENUES {
            let raw = case.action.venues[i];
            let got = safe.venues[i];
            let mine: Vec<_> = reports.iter().filter(|r| r.venue as usize == i).collect();
            if mine.is_empty() {
                assert_eq!(got, raw, "changed a compliant component");
                continue;
            }
            let blocked = mine.iter().any(|r| r.kind == ViolationKind::SelfTrade) || case.bids[i].is_none();
            if blocked {
                assert_eq!(got.volume, 0);
                continue;
            }
            let cap = c.volume_cap(case.v_hat[i]);
            let floor = c.price_floor(case.bids[i].unwrap());
            // Each component is raw when raw complies, else exactly on the boundary.
            assert_eq!(got.volume, raw.volume.min(cap));
            assert_eq!(got.price, raw.price.max(floor));
            // No compliant action is closer to the raw one.
            if got.volume < raw.volume && got.volume > 0 {
                assert!(!compliant(&c, &inputs, i, VenueAction { volume: got.volume + 1, price: got.price }));
            }
            if got.price > raw.price && got.volume > 0 {
                assert!(!compliant(&c, &inputs, i, VenueAction { volume: got.volume, price: got.price - 1 }));
            }
        }
    }
}

pub fn looser_constraints_never_tighten() {
    let mut rng = RngStream::new(0x5eed_0003);
    for _ in 0..CASES {
        let case = gen_case(&mut rng);
        let tight = case.constraints;
        let looser_alpha = ConstraintSet::from_ppm(
            (tight.alpha_ppm() + rng.int_inclusive(0, 500_000) as u32).min(1_000_000),
            tight.beta_ppm(),
            tight.self_trade_guard,
        )
        .unwrap();
        let looser_beta = ConstraintSet::from_ppm(
            tight.alpha_ppm(),
            tight.beta_ppm() + rng.int_inclusive(0, 50_000) as u32,
            tight.self_trade_guard,
        )
        .unwrap();
        let inputs = case.inputs();
        let (base, _) = project(&case.action, &tight, &inputs);
        let (by_alpha, _) = project(&case.action, &looser_alpha, &inputs);
        for i in 0..VENUES {
            assert!(by_alpha.venues[i].volume >= base.venues[i].volume);
            assert_eq!(by_alpha.venues[i].price, base.venues[i].price);
            if let Some(bid) = case.bids[i] {
                assert!(looser_beta.price_floor(bid) <= tight.price_floor(bid));
            }
            assert!(looser_alpha.volume_cap(case.v_hat[i]) >= tight.volume_cap(case.v_hat[i]));
        }
        // Everything admissible under the tight set stays admissible.
        if check(&case.action, &tight, &inputs).is_empty() {
            assert!(check(&case.action, &looser_alpha, &inputs).is_empty());
            assert!(check(&case.action, &looser_beta, &inputs).is_empty());
        }
        // Without a self-cross the projected volume is monotone in beta too.
        let (by_beta, beta_reports) = project(&case.action, &looser_beta, &inputs);
        if !beta_reports.iter().any(|r| r.kind == ViolationKind::SelfTrade) {
            for i in 0..VENUES {
                assert!(by_beta.venues[i].volume >= base.venues[i].volume);
                assert!(by_beta.venues[i].price <= base.venues[i].price);
            }
        }
    }
}

/// A wider collar can let the projected price reach a live own buy, which
/// the self-trade rule then blocks: volume is not monotone in beta when the
/// guard fires.
pub fn wider_collar_can_trigger_self_trade_block() {
    let bids = [Some(10_000), Some(10_000)];
    let v_hat = [10_000, 10_000];
    let live = [LiveOrder { venue: 1, side: Side::Buy, price: 9_960, qty: 100 }];
    let inputs = ShieldInputs { step: 0, v_hat: &v_hat, best_bids: &bids, live: &live };
    let a = ExecAction { venues: vec![VenueAction { volume: 100, price: 9_900 }, VenueAction::default()] };
    let narrow = ConstraintSet::from_ppm(100_000, 1_000, true).unwrap();
    let wide = ConstraintSet::from_ppm(100_000, 10_000, true).unwrap();
    assert_eq!(project(&a, &narrow, &inputs).0.venues[0], VenueAction { volume: 100, price: 9_990 });
    let (safe, reports) = project(&a, &wide, &inputs);
    assert_eq!(safe.venues[0].volume, 0);
    assert_eq!(reports.last().unwrap().kind, ViolationKind::SelfTrade);
}

pub fn documented_examples() {
    let bids = [Some(10_000), Some(10_000)];
    let v_hat = [10_000, 10_000];
    let inputs = ShieldInputs { step: 0, v_hat: &v_hat, best_bids: &bids, live: &[] };
    let c = ConstraintSet::default();
    let at_cap = ExecAction { venues: vec![VenueAction { volume: 1_000, price: 10_000 }, VenueAction::default()] };
    assert!(check(&at_cap, &c, &inputs).is_empty());
    let over = ExecAction { venues: vec![VenueAction { volume: 1_500, price: 10_000 }, VenueAction::default()] };
    let (safe, r) = project(&over, &c, &inputs);
    assert_eq!(safe.venues[0].volume, 1_000);
    assert_eq!((r.len(), r[0].kind, r[0].magnitude), (1, ViolationKind::Volume, 500));
    let deep = ExecAction { venues: vec![VenueAction { volume: 100, price: 9_800 }, VenueAction::default()] };
    assert_eq!(project(&deep, &c, &inputs).0.venues[0].price, 9_950);
}
