//! Compliance audit: a hash-chained transcript of every decision, the
//! compliance circuit evaluated over it, and artifacts a third party can
//! check.
//!
//! No zero-knowledge proof is produced. A `Mock` artifact carries only the
//! public statement and the prover's claimed bit; accepting it means trusting
//! the prover. An `Open` artifact embeds the full transcript, so the verifier
//! recomputes the hash chain and the circuit itself.
//!
//! Canonical record encoding (all integers 64-bit little-endian, booleans as
//! 0/1): step, venue, raw volume, raw price, executed volume, executed price,
//! volume estimate, bid present, bid (0 when absent), filled qty, filled
//! notional in ticks, self-cross flag, violation count, then per violation
//! kind code, raw, limit, magnitude.
//!
//! Artifact byte layout: magic `SXART001`, mode byte (0 mock, 1 open),
//! claimed bit byte, then the statement as seven u64 fields (episode id,
//! alpha ppm, beta ppm, guard, venues, horizon, record count) followed by the
//! 32-byte public-input digest and the 32-byte final chain digest. Open
//! artifacts append a u64 length and the transcript file text.

use std::fmt;
use std::io::{self, Write};
use std::path::Path;

use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::shield::{ConstraintSet, ViolationKind, ViolationReport};

pub type Digest = [u8; 32];

const TRANSCRIPT_TAG: &str = "safe-exec-transcript v1";
const ARTIFACT_MAGIC: &[u8; 8] = b"SXART001";
const HEADER_MAGIC: &[u8; 8] = b"SXHDR001";
const STATEMENT_LEN: usize = 7 * 8 + 32 + 32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AuditError {
    #[error("record ({step}, {venue}) does not follow ({prev_step}, {prev_venue})")]
    OutOfOrder { step: u32, venue: u16, prev_step: u32, prev_venue: u16 },
    #[error("malformed transcript: {0}")]
    Malformed(String),
    #[error("constraints differ from the transcript header")]
    ConstraintMismatch,
    #[error("io error: {0}")]
    Io(String),
}

impl From<io::Error> for AuditError {
    fn from(e: io::Error) -> Self {
        AuditError::Io(e.to_string())
    }
}

fn malformed(msg: impl Into<String>) -> AuditError {
    AuditError::Malformed(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeHeader {
    pub episode_id: u64,
    pub seed: u64,
    pub alpha_ppm: u32,
    pub beta_ppm: u32,
    pub self_trade_guard: bool,
    pub venues: u16,
    pub horizon: u32,
}

impl EpisodeHeader {
    pub fn new(episode_id: u64, seed: u64, c: &ConstraintSet, venues: u16, horizon: u32) -> Self {
        EpisodeHeader {
            episode_id,
            seed,
            alpha_ppm: c.alpha_ppm(),
            beta_ppm: c.beta_ppm(),
            self_trade_guard: c.self_trade_guard,
            venues,
            horizon,
        }
    }

    pub fn constraints(&self) -> Result<ConstraintSet, AuditError> {
        ConstraintSet::from_ppm(self.alpha_ppm, self.beta_ppm, self.self_trade_guard)
            .map_err(|e| malformed(e.to_string()))
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut b = HEADER_MAGIC.to_vec();
        for x in [
            self.episode_id,
            self.seed,
            self.alpha_ppm as u64,
            self.beta_ppm as u64,
            self.self_trade_guard as u64,
            self.venues as u64,
            self.horizon as u64,
        ] {
            b.extend_from_slice(&x.to_le_bytes());
        }
        b
    }

    fn line(&self) -> String {
        format!(
            "{TRANSCRIPT_TAG} episode={} seed={} alpha_ppm={} beta_ppm={} guard={} venues={} horizon={}",
            self.episode_id,
            self.seed,
            self.alpha_ppm,
            self.beta_ppm,
            self.self_trade_guard as u8,
            self.venues,
            self.horizon
        )
    }

    fn parse_line(line: &str) -> Result<Self, AuditError> {
        let rest = line.strip_prefix(TRANSCRIPT_TAG).ok_or_else(|| malformed("missing transcript tag"))?;
        let mut fields = std::collections::BTreeMap::new();
        for kv in rest.split_whitespace() {
            let (k, v) = kv.split_once('=').ok_or_else(|| malformed(format!("bad header field {kv:?}")))?;
            let v: u64 = v.parse().map_err(|_| malformed(format!("bad header value {kv:?}")))?;
            if fields.insert(k.to_string(), v).is_some() {
                return Err(malformed(format!("duplicate header field {k}")));
            }
        }
        let mut get = |k: &str, max: u64| -> Result<u64, AuditError> {
            let v = fields.remove(k).ok_or_else(|| malformed(format!("missing header field {k}")))?;
            if v > max {
                return Err(malformed(format!("header field {k} out of range")));
            }
            Ok(v)
        };
        let h = EpisodeHeader {
            episode_id: get("episode", u64::MAX)?,
            seed: get("seed", u64::MAX)?,
            alpha_ppm: get("alpha_ppm", u32::MAX as u64)? as u32,
            beta_ppm: get("beta_ppm", u32::MAX as u64)? as u32,
            self_trade_guard: get("guard", 1)? == 1,
            venues: get("venues", u16::MAX as u64)? as u16,
            horizon: get("horizon", u32::MAX as u64)? as u32,
        };
        if !fields.is_empty() {
            return Err(malformed("unknown header fields"));
        }
        Ok(h)
    }
}

/// Quantity and notional (ticks times shares) filled for one record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FillSummary {
    pub qty: u64,
    pub notional: i64,
}

impl FillSummary {
    pub fn avg_price_ticks(&self) -> Option<f64> {
        (self.qty > 0).then(|| self.notional as f64 / self.qty as f64)
    }
}

/// One venue's decision at one step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptRecord {
    pub step: u32,
    pub venue: u16,
    pub raw_volume: u64,
    pub raw_price: i64,
    pub exec_volume: u64,
    pub exec_price: i64,
    pub v_hat: u64,
    pub best_bid: Option<i64>,
    pub fill: FillSummary,
    pub self_cross: bool,
    pub violations: Vec<ViolationReport>,
}

/// Number of 64-bit fields before the violation section.
pub const RECORD_FIXED_FIELDS: usize = 13;

impl TranscriptRecord {
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(8 * (RECORD_FIXED_FIELDS + 4 * self.violations.len()));
        let mut put = |x: u64| b.extend_from_slice(&x.to_le_bytes());
        put(self.step as u64);
        put(self.venue as u64);
        put(self.raw_volume);
        put(self.raw_price as u64);
        put(self.exec_volume);
        put(self.exec_price as u64);
        put(self.v_hat);
        put(self.best_bid.is_some() as u64);
        put(self.best_bid.unwrap_or(0) as u64);
        put(self.fill.qty);
        put(self.fill.notional as u64);
        put(self.self_cross as u64);
        put(self.violations.len() as u64);
        for v in &self.violations {
            put(v.kind.code() as u64);
            put(v.raw as u64);
            put(v.limit as u64);
            put(v.magnitude);
        }
        b
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, AuditError> {
        if !bytes.len().is_multiple_of(8) || bytes.len() < 8 * RECORD_FIXED_FIELDS {
            return Err(malformed("record length"));
        }
        let w: Vec<u64> =
            bytes.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
        let flag = |x: u64| match x {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(malformed("boolean field not 0/1")),
        };
        let step = u32::try_from(w[0]).map_err(|_| malformed("step out of range"))?;
        let venue = u16::try_from(w[1]).map_err(|_| malformed("venue out of range"))?;
        let has_bid = flag(w[7])?;
        if !has_bid && w[8] != 0 {
            return Err(malformed("bid value without bid flag"));
        }
        let n = w[12] as usize;
        if w.len() != RECORD_FIXED_FIELDS + 4 * n {
            return Err(malformed("violation section length"));
        }
        let mut violations = Vec::with_capacity(n);
        for k in 0..n {
            let o = RECORD_FIXED_FIELDS + 4 * k;
            let kind = u8::try_from(w[o])
                .ok()
                .and_then(ViolationKind::from_code)
                .ok_or_else(|| malformed("violation kind"))?;
            violations.push(ViolationReport {
                step,
                venue,
                kind,
                raw: w[o + 1] as i64,
                limit: w[o + 2] as i64,
                magnitude: w[o + 3],
            });
        }
        Ok(TranscriptRecord {
            step,
            venue,
            raw_volume: w[2],
            raw_price: w[3] as i64,
            exec_volume: w[4],
            exec_price: w[5] as i64,
            v_hat: w[6],
            best_bid: has_bid.then_some(w[8] as i64),
            fill: FillSummary { qty: w[9], notional: w[10] as i64 },
            self_cross: flag(w[11])?,
            violations,
        })
    }
}

fn chain(prev: &Digest, bytes: &[u8]) -> Digest {
    let mut h = Sha256::new();
    h.update(prev);
    h.update(bytes);
    h.finalize().into()
}

/// Append-only episode transcript with its digest chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcript {
    header: EpisodeHeader,
    records: Vec<TranscriptRecord>,
    digests: Vec<Digest>,
}

impl Transcript {
    pub fn new(header: EpisodeHeader) -> Self {
        let h0 = Sha256::digest(header.canonical_bytes()).into();
        Transcript { header, records: Vec::new(), digests: vec![h0] }
    }

    pub fn header(&self) -> &EpisodeHeader {
        &self.header
    }

    pub fn records(&self) -> &[TranscriptRecord] {
        &self.records
    }

    /// `h_0 ..= h_n`, one more than the number of records.
    pub fn digests(&self) -> &[Digest] {
        &self.digests
    }

    pub fn final_digest(&self) -> Digest {
        *self.digests.last().expect("h0 always present")
    }

    /// Appends a record; `(step, venue)` must strictly increase.
    pub fn append(&mut self, rec: TranscriptRecord) -> Result<Digest, AuditError> {
        if let Some(prev) = self.records.last() {
            if (rec.step, rec.venue) <= (prev.step, prev.venue) {
                return Err(AuditError::OutOfOrder {
                    step: rec.step,
                    venue: rec.venue,
                    prev_step: prev.step,
                    prev_venue: prev.venue,
                });
            }
        }
        let h = chain(&self.final_digest(), &rec.canonical_bytes());
        self.records.push(rec);
        self.digests.push(h);
        Ok(h)
    }

    pub fn public_inputs(&self) -> PublicInputs {
        PublicInputs { entries: self.records.iter().map(|r| (r.step, r.venue, r.v_hat, r.best_bid)).collect() }
    }

    /// Header line, then one hex-encoded canonical record per line.
    pub fn to_text(&self) -> String {
        let mut s = self.header.line();
        s.push('\n');
        for r in &self.records {
            s.push_str(&hex::encode(r.canonical_bytes()));
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, AuditError> {
        let mut lines = text.lines();
        let header = EpisodeHeader::parse_line(lines.next().ok_or_else(|| malformed("empty transcript"))?)?;
        let mut t = Transcript::new(header);
        for line in lines {
            if line.is_empty() {
                continue;
            }
            let bytes = hex::decode(line).map_err(|e| malformed(format!("record hex: {e}")))?;
            t.append(TranscriptRecord::decode(&bytes)?)?;
        }
        Ok(t)
    }

    pub fn write_to(&self, path: &Path) -> Result<(), AuditError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<Self, AuditError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// Public market inputs of an episode: volume estimate and reference bid per
/// record, in transcript order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PublicInputs {
    pub entries: Vec<(u32, u16, u64, Option<i64>)>,
}

impl PublicInputs {
    pub fn digest(&self) -> Digest {
        let mut h = Sha256::new();
        h.update((self.entries.len() as u64).to_le_bytes());
        for &(step, venue, v_hat, bid) in &self.entries {
            h.update((step as u64).to_le_bytes());
            h.update((venue as u64).to_le_bytes());
            h.update(v_hat.to_le_bytes());
            h.update((bid.is_some() as u64).to_le_bytes());
            h.update(bid.unwrap_or(0).to_le_bytes());
        }
        h.finalize().into()
    }
}

/// Compliance predicate over the executed actions of a transcript: every
/// record has volume within the cap, a price at or above the collar whenever
/// volume is sent (no volume at all without a reference bid) and no
/// self-cross flag.
pub fn circuit_eval(t: &Transcript, c: &ConstraintSet) -> Result<bool, AuditError> {
    let h = t.header();
    for r in t.records() {
        if r.venue >= h.venues || r.step >= h.horizon {
            return Err(malformed(format!("record ({}, {}) outside episode bounds", r.step, r.venue)));
        }
    }
    Ok(t.records().iter().all(|r| record_compliant(r, c)))
}

/// The circuit's per-record clause.
pub fn record_compliant(r: &TranscriptRecord, c: &ConstraintSet) -> bool {
    let volume_ok = r.exec_volume <= c.volume_cap(r.v_hat);
    let price_ok = r.exec_volume == 0 || r.best_bid.is_some_and(|bid| r.exec_price >= c.price_floor(bid));
    volume_ok && price_ok && !r.self_cross
}

/// Public claim about an episode. Holds no action values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComplianceStatement {
    pub episode_id: u64,
    pub alpha_ppm: u32,
    pub beta_ppm: u32,
    pub self_trade_guard: bool,
    pub venues: u16,
    pub horizon: u32,
    pub records: u64,
    pub public_inputs: Digest,
    pub final_digest: Digest,
}

impl ComplianceStatement {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(STATEMENT_LEN);
        for x in [
            self.episode_id,
            self.alpha_ppm as u64,
            self.beta_ppm as u64,
            self.self_trade_guard as u64,
            self.venues as u64,
            self.horizon as u64,
            self.records,
        ] {
            b.extend_from_slice(&x.to_le_bytes());
        }
        b.extend_from_slice(&self.public_inputs);
        b.extend_from_slice(&self.final_digest);
        b
    }

    fn from_bytes(b: &[u8]) -> Result<Self, AuditError> {
        if b.len() != STATEMENT_LEN {
            return Err(malformed("statement length"));
        }
        let u = |i: usize| u64::from_le_bytes(b[8 * i..8 * i + 8].try_into().expect("8 bytes"));
        let narrow = |x: u64, max: u64, what: &str| {
            if x <= max {
                Ok(x)
            } else {
                Err(malformed(format!("{what} out of range")))
            }
        };
        Ok(ComplianceStatement {
            episode_id: u(0),
            alpha_ppm: narrow(u(1), u32::MAX as u64, "alpha")? as u32,
            beta_ppm: narrow(u(2), u32::MAX as u64, "beta")? as u32,
            self_trade_guard: narrow(u(3), 1, "guard")? == 1,
            venues: narrow(u(4), u16::MAX as u64, "venues")? as u16,
            horizon: narrow(u(5), u32::MAX as u64, "horizon")? as u32,
            records: u(6),
            public_inputs: b[56..88].try_into().expect("32 bytes"),
            final_digest: b[88..120].try_into().expect("32 bytes"),
        })
    }

    fn matches_header(&self, h: &EpisodeHeader) -> bool {
        self.episode_id == h.episode_id
            && self.alpha_ppm == h.alpha_ppm
            && self.beta_ppm == h.beta_ppm
            && self.self_trade_guard == h.self_trade_guard
            && self.venues == h.venues
            && self.horizon == h.horizon
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ArtifactMode {
    /// Statement and claimed bit only; the prover is trusted.
    Mock,
    /// Carries the full transcript for independent recomputation.
    Open(Transcript),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditArtifact {
    pub statement: ComplianceStatement,
    pub bit: bool,
    pub mode: ArtifactMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProofMode {
    Mock,
    Open,
}

/// Evaluates the circuit and packages the result.
pub fn prove(t: &Transcript, c: &ConstraintSet, mode: ProofMode) -> Result<AuditArtifact, AuditError> {
    if t.header().constraints()? != *c {
        return Err(AuditError::ConstraintMismatch);
    }
    let bit = circuit_eval(t, c)?;
    let h = t.header();
    let statement = ComplianceStatement {
        episode_id: h.episode_id,
        alpha_ppm: h.alpha_ppm,
        beta_ppm: h.beta_ppm,
        self_trade_guard: h.self_trade_guard,
        venues: h.venues,
        horizon: h.horizon,
        records: t.records().len() as u64,
        public_inputs: t.public_inputs().digest(),
        final_digest: t.final_digest(),
    };
    let mode = match mode {
        ProofMode::Mock => ArtifactMode::Mock,
        ProofMode::Open => ArtifactMode::Open(t.clone()),
    };
    Ok(AuditArtifact { statement, bit, mode })
}

impl AuditArtifact {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = ARTIFACT_MAGIC.to_vec();
        b.push(matches!(self.mode, ArtifactMode::Open(_)) as u8);
        b.push(self.bit as u8);
        b.extend_from_slice(&self.statement.to_bytes());
        if let ArtifactMode::Open(t) = &self.mode {
            let text = t.to_text();
            b.extend_from_slice(&(text.len() as u64).to_le_bytes());
            b.extend_from_slice(text.as_bytes());
        }
        b
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, AuditError> {
        let head = 8 + 2 + STATEMENT_LEN;
        if b.len() < head || &b[..8] != ARTIFACT_MAGIC {
            return Err(malformed("artifact header"));
        }
        let bit = match b[9] {
            0 => false,
            1 => true,
            _ => return Err(malformed("artifact bit")),
        };
        let statement = ComplianceStatement::from_bytes(&b[10..head])?;
        let mode = match b[8] {
            0 if b.len() == head => ArtifactMode::Mock,
            1 if b.len() >= head + 8 => {
                let len = u64::from_le_bytes(b[head..head + 8].try_into().expect("8 bytes"));
                let body = &b[head + 8..];
                if body.len() as u64 != len {
                    return Err(malformed("transcript length"));
                }
                let text = std::str::from_utf8(body).map_err(|_| malformed("transcript is not utf-8"))?;
                ArtifactMode::Open(Transcript::parse(text)?)
            }
            _ => return Err(malformed("artifact mode or length")),
        };
        Ok(AuditArtifact { statement, bit, mode })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(&self.to_bytes())
    }

    pub fn save(&self, path: &Path) -> Result<(), AuditError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, AuditError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RejectReason {
    /// Recomputed chain digest or record count differs from the statement.
    ChainMismatch,
    /// The circuit does not yield 1, or yields something other than claimed.
    CircuitMismatch {
        claimed: bool,
        recomputed: bool,
    },
    PublicInputMismatch,
    StatementMismatch,
    Malformed(String),
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::ChainMismatch => write!(f, "chain mismatch"),
            RejectReason::CircuitMismatch { claimed, recomputed } => {
                write!(f, "circuit mismatch (claimed {}, recomputed {})", *claimed as u8, *recomputed as u8)
            }
            RejectReason::PublicInputMismatch => write!(f, "public input mismatch"),
            RejectReason::StatementMismatch => {
                write!(f, "statement does not match transcript header")
            }
            RejectReason::Malformed(m) => write!(f, "malformed: {m}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject(RejectReason),
}

impl Verdict {
    pub fn accepted(&self) -> bool {
        matches!(self, Verdict::Accept)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Accept => write!(f, "accept"),
            Verdict::Reject(r) => write!(f, "reject: {r}"),
        }
    }
}

/// Checks an artifact. With `public` given, its digest must match the
/// statement. Mock artifacts are accepted on statement consistency and a
/// claimed bit of 1 alone.
pub fn verify(a: &AuditArtifact, public: Option<&PublicInputs>) -> Verdict {
    let s = &a.statement;
    let constraints = match ConstraintSet::from_ppm(s.alpha_ppm, s.beta_ppm, s.self_trade_guard) {
        Ok(c) => c,
        Err(e) => return Verdict::Reject(RejectReason::Malformed(e.to_string())),
    };
    if s.venues == 0 || !s.records.is_multiple_of(s.venues as u64) || s.records > s.venues as u64 * s.horizon as u64 {
        return Verdict::Reject(RejectReason::Malformed("record count inconsistent with venues and horizon".into()));
    }
    if public.is_some_and(|p| p.digest() != s.public_inputs) {
        return Verdict::Reject(RejectReason::PublicInputMismatch);
    }
    match &a.mode {
        ArtifactMode::Mock => {
            if !a.bit {
                return Verdict::Reject(RejectReason::CircuitMismatch { claimed: false, recomputed: false });
            }
            Verdict::Accept
        }
        ArtifactMode::Open(t) => {
            if !s.matches_header(t.header()) {
                return Verdict::Reject(RejectReason::StatementMismatch);
            }
            // Re-derive the chain from the records rather than trusting stored digests.
            let mut h: Digest = Sha256::digest(t.header().canonical_bytes()).into();
            for r in t.records() {
                h = chain(&h, &r.canonical_bytes());
            }
            if h != s.final_digest || t.records().len() as u64 != s.records {
                return Verdict::Reject(RejectReason::ChainMismatch);
            }
            if t.public_inputs().digest() != s.public_inputs {
                return Verdict::Reject(RejectReason::PublicInputMismatch);
            }
            let recomputed = match circuit_eval(t, &constraints) {
                Ok(b) => b,
                Err(e) => return Verdict::Reject(RejectReason::Malformed(e.to_string())),
            };
            if recomputed != a.bit || !recomputed {
                return Verdict::Reject(RejectReason::CircuitMismatch { claimed: a.bit, recomputed });
            }
            Verdict::Accept
        }
    }
}
