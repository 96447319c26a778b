//! Tamper detection for open audit artifacts.

use safe_exec::audit::{
    prove, verify, AuditArtifact, EpisodeHeader, FillSummary, ProofMode, RejectReason, Transcript, TranscriptRecord,
    Verdict,
};
use safe_exec::shield::{ConstraintSet, ViolationKind, ViolationReport};

const VENUES: u16 = 2;
const HORIZON: u32 = 6;

fn constraints() -> ConstraintSet {
    ConstraintSet::default()
}

fn header() -> EpisodeHeader {
    EpisodeHeader::new(11, 0xfeed, &constraints(), VENUES, HORIZON)
}

/// Compliant records, some of which carry raw-action reports from projection.
fn records() -> Vec<TranscriptRecord> {
    let mut out = Vec::new();
    for step in 0..4u32 {
        for venue in 0..VENUES {
            let v_hat = 2_000 + 100 * step as u64;
            let cap = constraints().volume_cap(v_hat);
            let mut r = TranscriptRecord {
                step,
                venue,
                raw_volume: 150,
                raw_price: 9_990,
                exec_volume: 150,
                exec_price: 9_990,
                v_hat,
                best_bid: Some(10_000 - step as i64),
                fill: FillSummary { qty: 100, notional: 100 * 9_995 },
                self_cross: false,
                violations: Vec::new(),
            };
            if (step + venue as u32).is_multiple_of(3) {
                r.raw_volume = cap + 40;
                r.exec_volume = cap;
                r.violations.push(ViolationReport {
                    step,
                    venue,
                    kind: ViolationKind::Volume,
                    raw: r.raw_volume as i64,
                    limit: cap as i64,
                    magnitude: 40,
                });
            }
            if step == 2 && venue == 1 {
                r.best_bid = None;
                r.exec_volume = 0;
                r.fill = FillSummary::default();
            }
            out.push(r);
        }
    }
    out
}

fn transcript() -> Transcript {
    let mut t = Transcript::new(header());
    for r in records() {
        t.append(r).unwrap();
    }
    t
}

/// Artifact bytes with the statement and bit of `base` but a replaced
/// transcript body, as a naive editor of the file would produce.
fn splice(base: &AuditArtifact, text: &str) -> Vec<u8> {
    let mut b = base.to_bytes();
    let head = b.len() - text_len(base) - 8;
    b.truncate(head);
    b.extend_from_slice(&(text.len() as u64).to_le_bytes());
    b.extend_from_slice(text.as_bytes());
    b
}

fn text_len(a: &AuditArtifact) -> usize {
    match &a.mode {
        safe_exec::audit::ArtifactMode::Open(t) => t.to_text().len(),
        safe_exec::audit::ArtifactMode::Mock => panic!("open artifact expected"),
    }
}

fn body(header_line: &str, records: &[TranscriptRecord]) -> String {
    let mut s = format!("{header_line}\n");
    for r in records {
        s.push_str(&hex::encode(r.canonical_bytes()));
        s.push('\n');
    }
    s
}

fn header_line(h: EpisodeHeader) -> String {
    Transcript::new(h).to_text().lines().next().unwrap().to_string()
}

fn accepted(bytes: &[u8]) -> bool {
    AuditArtifact::from_bytes(bytes).is_ok_and(|a| verify(&a, None).accepted())
}

fn record_mutations(r: &TranscriptRecord) -> Vec<(&'static str, TranscriptRecord)> {
    let mut out = Vec::new();
    let mut m = |name, f: &dyn Fn(&mut TranscriptRecord)| {
        let mut x = r.clone();
        f(&mut x);
        out.push((name, x));
    };
    m("step", &|x| x.step += 1);
    m("venue", &|x| x.venue ^= 1);
    m("raw_volume", &|x| x.raw_volume += 1);
    m("raw_price", &|x| x.raw_price -= 1);
    m("exec_volume+", &|x| x.exec_volume += 1);
    m("exec_volume-", &|x| x.exec_volume = x.exec_volume.saturating_sub(1) + u64::from(x.exec_volume == 0));
    m("exec_price", &|x| x.exec_price += 1);
    m("v_hat", &|x| x.v_hat += 1);
    m("best_bid", &|x| x.best_bid = Some(x.best_bid.unwrap_or(10_000) + 1));
    m("best_bid_none", &|x| x.best_bid = if x.best_bid.is_some() { None } else { Some(10_000) });
    m("fill_qty", &|x| x.fill.qty += 1);
    m("fill_notional", &|x| x.fill.notional -= 1);
    m("self_cross", &|x| x.self_cross = !x.self_cross);
    m("violation_added", &|x| {
        x.violations.push(ViolationReport {
            step: x.step,
            venue: x.venue,
            kind: ViolationKind::Price,
            raw: 1,
            limit: 2,
            magnitude: 1,
        })
    });
    if !r.violations.is_empty() {
        m("violation_removed", &|x| {
            x.violations.pop();
        });
        m("violation_kind", &|x| x.violations[0].kind = ViolationKind::SelfTrade);
        m("violation_raw", &|x| x.violations[0].raw += 1);
        m("violation_limit", &|x| x.violations[0].limit += 1);
        m("violation_magnitude", &|x| x.violations[0].magnitude += 1);
    }
    out
}

type StatementEdit = Box<dyn Fn(&mut AuditArtifact)>;

fn header_mutations(h: EpisodeHeader) -> Vec<(&'static str, EpisodeHeader)> {
    let mut out = Vec::new();
    let mut m = |name, f: &dyn Fn(&mut EpisodeHeader)| {
        let mut x = h;
        f(&mut x);
        out.push((name, x));
    };
    m("episode_id", &|x| x.episode_id += 1);
    m("seed", &|x| x.seed += 1);
    m("alpha_ppm", &|x| x.alpha_ppm += 1);
    m("beta_ppm", &|x| x.beta_ppm += 1);
    m("guard", &|x| x.self_trade_guard = !x.self_trade_guard);
    m("venues", &|x| x.venues += 1);
    m("horizon", &|x| x.horizon += 1);
    out
}

pub fn compliant_round_trip_accepts() {
    let t = transcript();
    let a = prove(&t, &constraints(), ProofMode::Open).unwrap();
    assert!(a.bit);
    let back = AuditArtifact::from_bytes(&a.to_bytes()).unwrap();
    assert_eq!(back, a);
    assert_eq!(verify(&back, None), Verdict::Accept);
    assert_eq!(verify(&back, Some(&t.public_inputs())), Verdict::Accept);
    // Re-encoding the unmodified body through the splice path is also accepted.
    assert!(accepted(&splice(&a, &body(&header_line(header()), &records()))));
}

pub fn every_single_field_mutation_is_rejected() {
    let t = transcript();
    let a = prove(&t, &constraints(), ProofMode::Open).unwrap();
    let recs = records();
    let line = header_line(header());
    let mut tried = 0;

    for i in 0..recs.len() {
        for (name, m) in record_mutations(&recs[i]) {
            let mut edited = recs.clone();
            edited[i] = m;
            assert!(!accepted(&splice(&a, &body(&line, &edited))), "record {i} field {name} accepted");
            tried += 1;
        }
    }
    for (name, h) in header_mutations(header()) {
        assert!(!accepted(&splice(&a, &body(&header_line(h), &recs))), "header field {name} accepted");
        tried += 1;
    }

    let statement_edits: Vec<(&str, StatementEdit)> = vec![
        ("episode_id", Box::new(|x| x.statement.episode_id += 1)),
        ("alpha_ppm", Box::new(|x| x.statement.alpha_ppm += 1)),
        ("beta_ppm", Box::new(|x| x.statement.beta_ppm += 1)),
        ("guard", Box::new(|x| x.statement.self_trade_guard = !x.statement.self_trade_guard)),
        ("venues", Box::new(|x| x.statement.venues += 1)),
        ("horizon", Box::new(|x| x.statement.horizon += 1)),
        ("records", Box::new(|x| x.statement.records -= VENUES as u64)),
        ("public_inputs", Box::new(|x| x.statement.public_inputs[5] ^= 1)),
        ("final_digest", Box::new(|x| x.statement.final_digest[31] ^= 0x80)),
        ("bit", Box::new(|x| x.bit = !x.bit)),
    ];
    for (name, f) in &statement_edits {
        let mut x = a.clone();
        f(&mut x);
        assert!(!accepted(&x.to_bytes()), "statement field {name} accepted");
        tried += 1;
    }
    println!("{tried} single-field mutations, all rejected");
    assert!(tried > 100);
}

pub fn every_single_byte_flip_is_rejected() {
    let a = prove(&transcript(), &constraints(), ProofMode::Open).unwrap();
    let bytes = a.to_bytes();
    for i in 0..bytes.len() {
        let mut b = bytes.clone();
        b[i] ^= 0x01;
        assert!(!accepted(&b), "flip at byte {i} of {} accepted", bytes.len());
    }
}

pub fn dishonest_bit_rejects() {
    let mut recs = records();
    recs[3].exec_volume = recs[3].v_hat;
    let mut t = Transcript::new(header());
    for r in recs {
        t.append(r).unwrap();
    }
    for mode in [ProofMode::Open, ProofMode::Mock] {
        let honest = prove(&t, &constraints(), mode).unwrap();
        assert!(!honest.bit);
        assert!(!verify(&honest, None).accepted());
        let mut lie = honest.clone();
        lie.bit = true;
        let v = verify(&lie, None);
        match mode {
            ProofMode::Open => {
                assert_eq!(v, Verdict::Reject(RejectReason::CircuitMismatch { claimed: true, recomputed: false }))
            }
            // A mock artifact has nothing to recompute from.
            ProofMode::Mock => assert!(v.accepted()),
        }
    }
}
