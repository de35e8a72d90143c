//! Lottery sampling of perturbation instances with a commit-reveal seed.
//!
//! Commitment scheme `sha256-v1`:
//!
//! ```text
//! digest = SHA-256( scheme_id || 0x00 || seed as u64 big-endian || salt[16] )
//! ```
//!
//! Draw algorithm (identical on every platform):
//!
//! 1. `key = seed XOR u64_be(SHA-256(family_name)[0..8])`
//! 2. the `c`-th stream output is SplitMix64 finalization of
//!    `key + (c + 1) * 0x9E3779B97F4A7C15` (wrapping)
//! 3. `below(m)` rejects outputs `>= floor(u64::MAX / m) * m`, else returns
//!    `output % m`
//! 4. a partial Fisher-Yates shuffle over instance indices `0..n`, swapping
//!    `i` with `i + below(n - i)` for `i < k`; the first `k` indices are
//!    returned in ascending (listing) order.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{PerturbationKind, Violation};

pub type Draws = BTreeMap<PerturbationKind, Vec<String>>;

/// A pre-registered perturbation family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationFamily {
    pub family: PerturbationKind,
    pub instances: Vec<String>,
    pub draws_per_family: usize,
}

impl PerturbationFamily {
    pub fn validate(&self) -> Result<()> {
        if self.instances.is_empty() {
            return Err(Error::InvalidFamily(format!("{}: no instances", self.family)));
        }
        let unique: BTreeSet<_> = self.instances.iter().collect();
        if unique.len() != self.instances.len() {
            return Err(Error::InvalidFamily(format!("{}: duplicate instances", self.family)));
        }
        if self.draws_per_family > self.instances.len() {
            return Err(Error::InvalidFamily(format!(
                "{}: draws_per_family {} exceeds {} instances",
                self.family,
                self.draws_per_family,
                self.instances.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedCommitment {
    /// Lowercase hex SHA-256 digest.
    pub commitment: String,
    pub committed_at: DateTime<Utc>,
    pub scheme_id: String,
}

impl SeedCommitment {
    pub const SCHEME_V1: &'static str = "sha256-v1";

    /// Single line: `<digest> <scheme_id> <RFC 3339 timestamp>\n`.
    pub fn to_file_string(&self) -> String {
        format!(
            "{} {} {}\n",
            self.commitment,
            self.scheme_id,
            self.committed_at.to_rfc3339_opts(SecondsFormat::AutoSi, true)
        )
    }

    pub fn parse_file(text: &str) -> Result<Self> {
        let line =
            text.strip_suffix('\n').ok_or_else(|| Error::Parse("commitment file must end with a newline".into()))?;
        let parts: Vec<&str> = line.split(' ').collect();
        let [digest, scheme, at] = parts[..] else {
            return Err(Error::Parse(format!("commitment file needs 3 space-separated fields, found {}", parts.len())));
        };
        if digest.len() != 64 || hex::decode(digest).is_err() || digest != digest.to_lowercase() {
            return Err(Error::Parse("commitment digest must be 64 lowercase hex characters".into()));
        }
        let committed_at = DateTime::parse_from_rfc3339(at)
            .map_err(|e| Error::Parse(format!("commitment timestamp: {e}")))?
            .with_timezone(&Utc);
        Ok(SeedCommitment { commitment: digest.to_string(), committed_at, scheme_id: scheme.to_string() })
    }
}

/// The revealed seed and salt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Reveal {
    pub seed: u64,
    pub salt: [u8; 16],
}

impl Reveal {
    /// Single line: `<seed decimal> <salt hex>\n`.
    pub fn to_file_string(&self) -> String {
        format!("{} {}\n", self.seed, hex::encode(self.salt))
    }

    pub fn parse_file(text: &str) -> Result<Self> {
        let line = text.strip_suffix('\n').ok_or_else(|| Error::Parse("reveal file must end with a newline".into()))?;
        let (seed, salt) =
            line.split_once(' ').ok_or_else(|| Error::Parse("reveal file needs `<seed> <salt-hex>`".into()))?;
        let seed = seed.parse::<u64>().map_err(|e| Error::Parse(format!("reveal seed: {e}")))?;
        Ok(Reveal { seed, salt: parse_salt(salt)? })
    }
}

pub fn parse_salt(text: &str) -> Result<[u8; 16]> {
    let bytes = hex::decode(text).map_err(|e| Error::Parse(format!("salt: {e}")))?;
    bytes.try_into().map_err(|_| Error::Parse("salt must be exactly 16 bytes (32 hex characters)".into()))
}

fn digest_v1(seed: u64, salt: &[u8; 16]) -> String {
    let mut h = Sha256::new();
    h.update(SeedCommitment::SCHEME_V1.as_bytes());
    h.update([0u8]);
    h.update(seed.to_be_bytes());
    h.update(salt);
    hex::encode(h.finalize())
}

pub fn commit_seed(seed: u64, salt: [u8; 16], committed_at: DateTime<Utc>) -> SeedCommitment {
    SeedCommitment {
        commitment: digest_v1(seed, &salt),
        committed_at,
        scheme_id: SeedCommitment::SCHEME_V1.to_string(),
    }
}

/// True iff `(seed, salt)` opens `commitment` under its declared scheme.
pub fn verify_reveal(commitment: &SeedCommitment, seed: u64, salt: [u8; 16]) -> bool {
    match commitment.scheme_id.as_str() {
        SeedCommitment::SCHEME_V1 => digest_v1(seed, &salt) == commitment.commitment,
        _ => false,
    }
}

/// Counter-based generator keyed by seed and family name.
pub(crate) struct FamilyStream {
    key: u64,
    counter: u64,
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub(crate) fn splitmix(key: u64, counter: u64) -> u64 {
    let mut z = key.wrapping_add(counter.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl FamilyStream {
    pub(crate) fn new(seed: u64, family: PerturbationKind) -> Self {
        let h = Sha256::digest(family.name().as_bytes());
        let mut first = [0u8; 8];
        first.copy_from_slice(&h[..8]);
        FamilyStream { key: seed ^ u64::from_be_bytes(first), counter: 0 }
    }

    fn next_u64(&mut self) -> u64 {
        let v = splitmix(self.key, self.counter);
        self.counter += 1;
        v
    }

    fn below(&mut self, m: u64) -> u64 {
        debug_assert!(m > 0);
        let zone = (u64::MAX / m) * m;
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % m;
            }
        }
    }
}

fn draw_one(family: &PerturbationFamily, seed: u64) -> Vec<String> {
    let mut stream = FamilyStream::new(seed, family.family);
    let n = family.instances.len();
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..family.draws_per_family {
        let j = i + stream.below((n - i) as u64) as usize;
        idx.swap(i, j);
    }
    let mut chosen = idx[..family.draws_per_family].to_vec();
    chosen.sort_unstable();
    chosen.into_iter().map(|i| family.instances[i].clone()).collect()
}

/// Uniform without-replacement sample of `draws_per_family` instances from
/// each family, reproducible from `seed` alone.
pub fn draw(families: &[PerturbationFamily], seed: u64) -> Result<Draws> {
    let mut out = Draws::new();
    for family in families {
        family.validate()?;
        if out.insert(family.family, draw_one(family, seed)).is_some() {
            return Err(Error::InvalidFamily(format!("{} registered twice", family.family)));
        }
    }
    Ok(out)
}

/// Published audit block: commitment, registry, and (after evaluation) the
/// revealed seed and salt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LotteryAudit {
    pub commitment: SeedCommitment,
    pub registry: Vec<PerturbationFamily>,
    #[serde(default)]
    pub revealed_seed: Option<u64>,
    /// 16 bytes, hex encoded.
    #[serde(default)]
    pub revealed_salt: Option<String>,
    pub draws: Draws,
}

impl LotteryAudit {
    /// `Some(true)` when revealed and consistent, `None` before reveal.
    pub fn verified(&self) -> Option<bool> {
        match (self.revealed_seed, &self.revealed_salt) {
            (None, None) => None,
            _ => Some(audit_violations(self).is_empty()),
        }
    }
}

pub(crate) fn audit_violations(audit: &LotteryAudit) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut registry_ok = true;
    let mut kinds = BTreeSet::new();
    for fam in &audit.registry {
        if let Err(e) = fam.validate() {
            registry_ok = false;
            out.push(Violation::InvalidRegistry { reason: e.to_string() });
        }
        if !kinds.insert(fam.family) {
            registry_ok = false;
            out.push(Violation::InvalidRegistry { reason: format!("{} registered twice", fam.family) });
        }
    }
    match (audit.revealed_seed, audit.revealed_salt.as_deref()) {
        (None, None) => {}
        (Some(seed), Some(salt)) => {
            match parse_salt(salt) {
                Ok(salt) if verify_reveal(&audit.commitment, seed, salt) => {}
                _ => out.push(Violation::RevealMismatch),
            }
            if registry_ok {
                let expected = draw(&audit.registry, seed).unwrap_or_default();
                let families: BTreeSet<_> = expected.keys().chain(audit.draws.keys()).copied().collect();
                for family in families {
                    if expected.get(&family) != audit.draws.get(&family) {
                        out.push(Violation::DrawMismatch { family });
                    }
                }
            }
        }
        _ => out.push(Violation::IncompleteReveal),
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SessionKind {
    /// Session 0: baseline battery plus teaching of the retest items.
    BaselineAndTeach,
    Retest {
        family: PerturbationKind,
        instance: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub index: usize,
    /// Hours after session 0.
    pub offset_hours: u32,
    #[serde(flatten)]
    pub kind: SessionKind,
    pub no_context_carryover: bool,
    pub no_scaffold_access: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSchedule {
    pub delays: Vec<u32>,
    pub draws: Draws,
    pub sessions: Vec<Session>,
}

impl SessionSchedule {
    /// Distinct retest delays that actually have sessions.
    pub fn waves(&self) -> Vec<u32> {
        let set: BTreeSet<u32> = self
            .sessions
            .iter()
            .filter(|s| matches!(s.kind, SessionKind::Retest { .. }))
            .map(|s| s.offset_hours)
            .collect();
        set.into_iter().collect()
    }

    /// Every drawn `(family, instance)` pair, in schedule order, once each.
    pub fn drawn_instances(&self) -> Vec<(PerturbationKind, String)> {
        self.draws.iter().flat_map(|(f, inst)| inst.iter().map(move |i| (*f, i.clone()))).collect()
    }
}

/// Session 0 followed by one clean retest session per `(delay, drawn
/// instance)`, ordered by delay.
pub fn build_schedule(draws: &Draws, delays: &[u32]) -> Result<SessionSchedule> {
    if delays.is_empty() {
        return Err(Error::InvalidSchedule("no delays given".into()));
    }
    if delays.contains(&0) {
        return Err(Error::InvalidSchedule("retest delays must be positive".into()));
    }
    let delays: Vec<u32> = delays.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let mut sessions = vec![Session {
        index: 0,
        offset_hours: 0,
        kind: SessionKind::BaselineAndTeach,
        no_context_carryover: false,
        no_scaffold_access: false,
    }];
    for &delay in &delays {
        for (family, instances) in draws {
            for instance in instances {
                sessions.push(Session {
                    index: sessions.len(),
                    offset_hours: delay,
                    kind: SessionKind::Retest { family: *family, instance: instance.clone() },
                    no_context_carryover: true,
                    no_scaffold_access: true,
                });
            }
        }
    }
    Ok(SessionSchedule { delays, draws: draws.clone(), sessions })
}

impl fmt::Display for SessionSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.sessions {
            match &s.kind {
                SessionKind::BaselineAndTeach => writeln!(f, "#{} t+0h baseline+teach", s.index)?,
                SessionKind::Retest { family, instance } => writeln!(
                    f,
                    "#{} t+{}h retest {family}:{instance} clean-session no-scaffolds",
                    s.index, s.offset_hours
                )?,
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at() -> DateTime<Utc> {
        "2026-03-01T09:30:00Z".parse().unwrap()
    }

    fn fam(kind: PerturbationKind, n: usize, k: usize) -> PerturbationFamily {
        PerturbationFamily {
            family: kind,
            instances: (0..n).map(|i| format!("inst-{i}")).collect(),
            draws_per_family: k,
        }
    }

    #[test]
    fn commit_then_verify() {
        let salt = [0xAB; 16];
        let c = commit_seed(42, salt, at());
        assert!(verify_reveal(&c, 42, salt));
        assert!(!verify_reveal(&c, 43, salt));
        let mut other = salt;
        other[0] ^= 1;
        assert!(!verify_reveal(&c, 42, other));
        assert_ne!(commit_seed(42, other, at()).commitment, c.commitment);
        let wrong_scheme = SeedCommitment { scheme_id: "sha256-v2".into(), ..c };
        assert!(!verify_reveal(&wrong_scheme, 42, salt));
    }

    #[test]
    fn commitment_digest_encoding() {
        // hashlib.sha256(b"sha256-v1\0" + (42).to_bytes(8, "big") + bytes(16))
        let c = commit_seed(42, [0; 16], at());
        assert_eq!(c.commitment, "22da0617714ee0277c6ad15be0f7c51c3127078c91894c1893877f4257c3fbb4");
    }

    #[test]
    fn files_round_trip() {
        let c = commit_seed(7, [1; 16], at());
        let text = c.to_file_string();
        assert!(text.ends_with("sha256-v1 2026-03-01T09:30:00Z\n"));
        assert_eq!(SeedCommitment::parse_file(&text).unwrap(), c);
        let r = Reveal { seed: u64::MAX, salt: [0xFE; 16] };
        assert_eq!(r.to_file_string(), format!("{} {}\n", u64::MAX, "fe".repeat(16)));
        assert_eq!(Reveal::parse_file(&r.to_file_string()).unwrap(), r);
        assert!(Reveal::parse_file("1 00\n").is_err());
        assert!(SeedCommitment::parse_file("abc sha256-v1 x").is_err());
    }

    #[test]
    fn exhaustive_draw_returns_listing_order() {
        let f = fam(PerturbationKind::ScaffoldRemoval, 4, 4);
        for seed in 0..20 {
            assert_eq!(draw(std::slice::from_ref(&f), seed).unwrap()[&f.family], f.instances);
        }
    }

    #[test]
    fn draw_is_deterministic_and_validated() {
        let fams = vec![fam(PerturbationKind::TemporalDelay, 5, 2), fam(PerturbationKind::DistributionShift, 6, 3)];
        assert_eq!(draw(&fams, 9).unwrap(), draw(&fams, 9).unwrap());
        assert!(draw(&[fam(PerturbationKind::TemporalDelay, 2, 3)], 0).is_err());
        assert!(draw(&[fam(PerturbationKind::TemporalDelay, 0, 0)], 0).is_err());
        let dup = vec![fam(PerturbationKind::TemporalDelay, 2, 1); 2];
        assert!(draw(&dup, 0).is_err());
        let mut f = fam(PerturbationKind::TemporalDelay, 3, 1);
        f.instances[2] = f.instances[0].clone();
        assert!(draw(&[f], 0).is_err());
    }

    #[test]
    fn draw_is_roughly_uniform() {
        let f = fam(PerturbationKind::DistributionShift, 5, 2);
        let trials = 2000u64;
        let mut counts = [0u32; 5];
        for seed in 0..trials {
            for inst in &draw(std::slice::from_ref(&f), seed).unwrap()[&f.family] {
                counts[inst[5..].parse::<usize>().unwrap()] += 1;
            }
        }
        let p = 2.0 / 5.0;
        let mean = trials as f64 * p;
        let sd = (trials as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() < 3.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn schedule_layout() {
        let draws: Draws = [(PerturbationKind::TemporalDelay, vec!["delay=24h".to_string()])].into();
        let s = build_schedule(&draws, &[168, 24, 72]).unwrap();
        assert_eq!(s.waves(), vec![24, 72, 168]);
        assert_eq!(s.sessions.len(), 4);
        assert_eq!(s.sessions[0].kind, SessionKind::BaselineAndTeach);
        assert!(s.sessions[1..].iter().all(|x| x.no_context_carryover && x.no_scaffold_access));
        for w in s.sessions.windows(2) {
            assert!(w[0].offset_hours <= w[1].offset_hours);
        }

        let empty = build_schedule(&Draws::new(), &[24]).unwrap();
        assert_eq!(empty.sessions.len(), 1);
        assert!(empty.waves().is_empty());

        let single = build_schedule(&draws, &[24]).unwrap();
        assert_eq!(single.waves(), vec![24]);
        assert_eq!(single.sessions.len(), 2);

        assert!(build_schedule(&draws, &[]).is_err());
        assert!(build_schedule(&draws, &[0, 24]).is_err());
    }

    #[test]
    fn audit_detects_tampered_draws() {
        let fams = vec![fam(PerturbationKind::TemporalDelay, 4, 2)];
        let salt = [9u8; 16];
        let mut audit = LotteryAudit {
            commitment: commit_seed(5, salt, at()),
            registry: fams.clone(),
            revealed_seed: None,
            revealed_salt: None,
            draws: draw(&fams, 5).unwrap(),
        };
        assert_eq!(audit.verified(), None);
        audit.revealed_seed = Some(5);
        assert_eq!(audit_violations(&audit), vec![Violation::IncompleteReveal]);
        audit.revealed_salt = Some(hex::encode(salt));
        assert_eq!(audit.verified(), Some(true));
        audit.draws.get_mut(&PerturbationKind::TemporalDelay).unwrap()[0] = "inst-99".into();
        assert_eq!(audit_violations(&audit), vec![Violation::DrawMismatch { family: PerturbationKind::TemporalDelay }]);
    }
}
