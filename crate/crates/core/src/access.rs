//! Access-log schema, per-content consumption profiles, a labeled synthetic
//! workload generator, and windowed per-token aggregation.
//!
//! The generator models two token populations: honest tokens are used by
//! their owner from one IP (two when the owner switches networks mid
//! session), while shared tokens are replayed by `b` pirate consumers, each
//! from its own IP, all watching the same content. Every token maps to
//! exactly one owner, and ground-truth labels are emitted next to the event
//! stream so detection quality can be scored.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::collections::HashSet;
use thiserror::Error;

pub const SECONDS_PER_DAY: u64 = 86_400;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AccessError {
    #[error("InvalidSpec: {0}")]
    InvalidSpec(String),
}

/// One chunk request in the access log.
///
/// Field order is the wire order of the CSV representation:
/// `ts,token,user,ip,content,chunk_seq`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessEvent {
    /// Seconds since epoch; files are sorted by this field.
    pub ts: u64,
    pub token: String,
    /// Token owner. Pirate requests on a shared token still carry the
    /// owner id, because that is all the delivery side knows.
    pub user: String,
    pub ip: String,
    pub content: String,
    pub chunk_seq: u64,
}

/// How one piece of content is consumed by an honest viewer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentProfile {
    pub content: String,
    /// Seconds of playback per chunk request, > 0.
    pub chunk_seconds: f64,
    /// Typical session length in seconds, > 0.
    pub session_seconds: f64,
    /// Multiplicative bounds on the per-session request count,
    /// `[lo, hi]` with `0 < lo <= hi`.
    pub request_jitter: [f64; 2],
}

impl ContentProfile {
    /// Expected requests per honest session before jitter.
    pub fn expected_requests(&self) -> f64 {
        self.session_seconds / self.chunk_seconds
    }

    fn validate(&self) -> Result<(), AccessError> {
        if self.content.is_empty() {
            return Err(AccessError::InvalidSpec("content id must not be empty".into()));
        }
        if !(self.chunk_seconds > 0.0) {
            return Err(AccessError::InvalidSpec(format!(
                "chunk_seconds must be > 0 for {}",
                self.content
            )));
        }
        if !(self.session_seconds > 0.0) {
            return Err(AccessError::InvalidSpec(format!(
                "session_seconds must be > 0 for {}",
                self.content
            )));
        }
        let [lo, hi] = self.request_jitter;
        if !(lo > 0.0 && hi >= lo) {
            return Err(AccessError::InvalidSpec(format!(
                "request_jitter must satisfy 0 < lo <= hi for {}",
                self.content
            )));
        }
        let max_requests = (self.expected_requests() * hi).round().max(1.0);
        let span = (max_requests - 1.0) * self.chunk_seconds + 1.0;
        if span >= SECONDS_PER_DAY as f64 {
            return Err(AccessError::InvalidSpec(format!(
                "sessions for {} cannot fit inside one day",
                self.content
            )));
        }
        Ok(())
    }
}

/// Parameters of one synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub seed: u64,
    pub n_users: u64,
    /// Fraction of users whose token is shared with pirates, in [0, 1].
    pub pirate_fraction: f64,
    /// Pirate consumers per shared token; >= 2 whenever pirates exist.
    pub b: u32,
    /// Probability an honest session switches to the owner's second IP.
    pub ip_switch_prob: f64,
    pub contents: Vec<ContentProfile>,
    pub days: u64,
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), AccessError> {
        if self.n_users == 0 {
            return Err(AccessError::InvalidSpec("n_users must be >= 1".into()));
        }
        if self.n_users > 8_000_000 {
            return Err(AccessError::InvalidSpec(
                "n_users above 8M exhausts the synthetic address plan".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.pirate_fraction) {
            return Err(AccessError::InvalidSpec(format!(
                "pirate_fraction must be in [0, 1], got {}",
                self.pirate_fraction
            )));
        }
        if self.pirate_fraction > 0.0 && self.b < 2 {
            return Err(AccessError::InvalidSpec(
                "b must be >= 2 when pirate_fraction > 0".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.ip_switch_prob) {
            return Err(AccessError::InvalidSpec(format!(
                "ip_switch_prob must be in [0, 1], got {}",
                self.ip_switch_prob
            )));
        }
        if self.contents.is_empty() {
            return Err(AccessError::InvalidSpec("at least one content profile required".into()));
        }
        let mut seen = HashSet::new();
        for c in &self.contents {
            c.validate()?;
            if !seen.insert(c.content.as_str()) {
                return Err(AccessError::InvalidSpec(format!(
                    "duplicate content id {}",
                    c.content
                )));
            }
        }
        if self.days == 0 {
            return Err(AccessError::InvalidSpec("days must be >= 1".into()));
        }
        Ok(())
    }
}

/// Ground-truth token label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenLabel {
    Honest,
    Shared,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledToken {
    pub token: String,
    pub label: TokenLabel,
}

/// Generator output: a time-ordered event stream plus the label table.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledWorkload {
    pub events: Vec<AccessEvent>,
    pub labels: Vec<LabeledToken>,
}

fn ipv4(x: u32) -> String {
    format!("{}.{}.{}.{}", x >> 24, (x >> 16) & 255, (x >> 8) & 255, x & 255)
}

/// Honest users live in 10.0.0.0/8: two addresses per user.
fn honest_ip(user_idx: u64, alt: bool) -> String {
    ipv4(0x0A00_0000 + (user_idx as u32) * 2 + alt as u32)
}

/// Pirate consumers live in 172.16.0.0/12: one address per pirate seat.
fn pirate_ip(sharer_idx: u64, seat: u32, b: u32) -> String {
    ipv4(0xAC10_0000 + (sharer_idx as u32) * b + seat)
}

struct SessionPlan<'a> {
    token: &'a str,
    user: &'a str,
    profile: &'a ContentProfile,
    day_start: u64,
    primary_ip: String,
    /// Alternate address the session may switch to partway through.
    switch_ip: Option<String>,
}

fn emit_session(rng: &mut ChaCha8Rng, plan: SessionPlan<'_>, out: &mut Vec<AccessEvent>) {
    let [lo, hi] = plan.profile.request_jitter;
    let jitter: f64 = if lo == hi { lo } else { rng.random_range(lo..=hi) };
    let n_req = (plan.profile.expected_requests() * jitter).round().max(1.0) as u64;
    let span = ((n_req - 1) as f64 * plan.profile.chunk_seconds).ceil() as u64 + 1;
    let latest_start = SECONDS_PER_DAY - span;
    let start = plan.day_start + rng.random_range(0..=latest_start);
    let switch_at = match &plan.switch_ip {
        Some(alt) if n_req >= 2 => Some((rng.random_range(1..n_req), alt.clone())),
        _ => None,
    };
    for i in 0..n_req {
        let ip = match &switch_at {
            Some((at, alt)) if i >= *at => alt.clone(),
            _ => plan.primary_ip.clone(),
        };
        out.push(AccessEvent {
            ts: start + (i as f64 * plan.profile.chunk_seconds).round() as u64,
            token: plan.token.to_string(),
            user: plan.user.to_string(),
            ip,
            content: plan.profile.content.clone(),
            chunk_seq: i,
        });
    }
}

/// Generates the labeled corpus described by `spec`. Identical specs yield
/// identical output, event order included.
pub fn generate(spec: &WorkloadSpec) -> Result<LabeledWorkload, AccessError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Label pass first so the traffic pass sees a fixed population.
    let shared: Vec<bool> = (0..spec.n_users)
        .map(|_| rng.random_bool(spec.pirate_fraction))
        .collect();
    let mut sharer_idx = vec![0u64; spec.n_users as usize];
    let mut next_sharer = 0u64;
    for (u, flag) in shared.iter().enumerate() {
        if *flag {
            sharer_idx[u] = next_sharer;
            next_sharer += 1;
        }
    }

    let tokens: Vec<String> = (0..spec.n_users).map(|u| format!("t{u:06}")).collect();
    let users: Vec<String> = (0..spec.n_users).map(|u| format!("u{u:06}")).collect();

    let mut events = Vec::new();
    for day in 0..spec.days {
        let day_start = day * SECONDS_PER_DAY;
        for u in 0..spec.n_users as usize {
            let profile = &spec.contents[rng.random_range(0..spec.contents.len())];
            if shared[u] {
                // The owner handed the token to b pirate consumers; each
                // replays an honest-looking session from its own address.
                for seat in 0..spec.b {
                    emit_session(
                        &mut rng,
                        SessionPlan {
                            token: &tokens[u],
                            user: &users[u],
                            profile,
                            day_start,
                            primary_ip: pirate_ip(sharer_idx[u], seat, spec.b),
                            switch_ip: None,
                        },
                        &mut events,
                    );
                }
            } else {
                let switch_ip = rng
                    .random_bool(spec.ip_switch_prob)
                    .then(|| honest_ip(u as u64, true));
                emit_session(
                    &mut rng,
                    SessionPlan {
                        token: &tokens[u],
                        user: &users[u],
                        profile,
                        day_start,
                        primary_ip: honest_ip(u as u64, false),
                        switch_ip,
                    },
                    &mut events,
                );
            }
        }
    }

    events.sort_unstable_by(|a, b| {
        a.ts.cmp(&b.ts)
            .then_with(|| a.token.cmp(&b.token))
            .then_with(|| a.ip.cmp(&b.ip))
            .then_with(|| a.chunk_seq.cmp(&b.chunk_seq))
    });

    let labels = (0..spec.n_users as usize)
        .map(|u| LabeledToken {
            token: tokens[u].clone(),
            label: if shared[u] {
                TokenLabel::Shared
            } else {
                TokenLabel::Honest
            },
        })
        .collect();

    Ok(LabeledWorkload { events, labels })
}

/// Per-token aggregates over one window. Field order is the CSV wire order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenStats {
    pub window_start: u64,
    pub window_end: u64,
    pub token: String,
    pub user: String,
    pub content: String,
    pub distinct_ips: u64,
    pub requests: u64,
}

/// A record that could not be turned into an [`AccessEvent`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MalformedEvent {
    /// Zero-based record index in the source stream.
    pub index: u64,
    pub reason: String,
}

/// Aggregation result plus the malformed records that were skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateOutput {
    pub stats: Vec<TokenStats>,
    pub skipped: Vec<MalformedEvent>,
}

/// Buckets events into `(token, content, window)` aggregates in one pass.
/// Malformed records are skipped and reported; distinct-IP counting is
/// exact. Output is sorted by `(window_start, token, content)`.
pub fn aggregate<I>(events: I, window_secs: u64) -> Result<AggregateOutput, AccessError>
where
    I: IntoIterator<Item = Result<AccessEvent, MalformedEvent>>,
{
    if window_secs == 0 {
        return Err(AccessError::InvalidSpec("window must be > 0 seconds".into()));
    }
    struct Acc {
        user: String,
        ips: HashSet<String>,
        requests: u64,
    }
    let mut buckets: HashMap<(u64, String, String), Acc> = HashMap::new();
    let mut skipped = Vec::new();
    for item in events {
        let ev = match item {
            Ok(ev) => ev,
            Err(bad) => {
                skipped.push(bad);
                continue;
            }
        };
        let window = ev.ts / window_secs;
        let acc = buckets
            .entry((window, ev.token, ev.content))
            .or_insert_with(|| Acc {
                user: ev.user,
                ips: HashSet::new(),
                requests: 0,
            });
        acc.ips.insert(ev.ip);
        acc.requests += 1;
    }
    let mut stats: Vec<TokenStats> = buckets
        .into_iter()
        .map(|((window, token, content), acc)| TokenStats {
            window_start: window * window_secs,
            window_end: (window + 1) * window_secs,
            token,
            user: acc.user,
            content,
            distinct_ips: acc.ips.len() as u64,
            requests: acc.requests,
        })
        .collect();
    stats.sort_unstable_by(|a, b| {
        a.window_start
            .cmp(&b.window_start)
            .then_with(|| a.token.cmp(&b.token))
            .then_with(|| a.content.cmp(&b.content))
    });
    Ok(AggregateOutput { stats, skipped })
}

/// FNV-1a 64-bit; pinned here so sampling is stable across builds.
pub fn fnv1a64(s: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in s.as_bytes() {
        hash ^= *byte as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Whether a user belongs to the 1-in-`rate` sampled population. All
/// events of a sampled user are kept together.
pub fn user_sampled(user: &str, rate: u64) -> bool {
    rate <= 1 || fnv1a64(user) % rate == 0
}

/// Deterministic user-keyed 1-in-`rate` subsample of the stream.
pub fn sample_population(events: &[AccessEvent], rate: u64) -> Vec<AccessEvent> {
    events
        .iter()
        .filter(|ev| user_sampled(&ev.user, rate))
        .cloned()
        .collect()
}

/// Two-content corpus used across the crate's tests.
#[cfg(test)]
pub(crate) fn two_content_spec(seed: u64, n_users: u64, pirate_fraction: f64) -> WorkloadSpec {
    WorkloadSpec {
        seed,
        n_users,
        pirate_fraction,
        b: 4,
        ip_switch_prob: 0.1,
        contents: vec![
            ContentProfile {
                content: "vod-a".into(),
                chunk_seconds: 4.0,
                session_seconds: 240.0,
                request_jitter: [0.8, 1.2],
            },
            ContentProfile {
                content: "vod-b".into(),
                chunk_seconds: 10.0,
                session_seconds: 240.0,
                request_jitter: [0.8, 1.2],
            },
        ],
        days: 2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ok_events(events: &[AccessEvent]) -> Vec<Result<AccessEvent, MalformedEvent>> {
        events.iter().cloned().map(Ok).collect()
    }

    #[test]
    fn generator_is_deterministic() {
        let spec = two_content_spec(7, 200, 0.1);
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
    }

    #[test]
    fn no_pirates_means_all_honest_and_at_most_two_ips() {
        let spec = two_content_spec(3, 300, 0.0);
        let wl = generate(&spec).unwrap();
        assert!(wl.labels.iter().all(|l| l.label == TokenLabel::Honest));
        let agg = aggregate(ok_events(&wl.events), SECONDS_PER_DAY).unwrap();
        assert!(agg.stats.iter().all(|s| s.distinct_ips <= 2));
    }

    #[test]
    fn shared_tokens_have_exactly_b_ips() {
        let spec = two_content_spec(7, 1000, 0.1);
        let wl = generate(&spec).unwrap();
        let shared: HashSet<&str> = wl
            .labels
            .iter()
            .filter(|l| l.label == TokenLabel::Shared)
            .map(|l| l.token.as_str())
            .collect();
        // Bernoulli sampling at 10% of 1000 users.
        assert!((60..140).contains(&shared.len()), "{}", shared.len());
        let agg = aggregate(ok_events(&wl.events), SECONDS_PER_DAY).unwrap();
        for s in &agg.stats {
            if shared.contains(s.token.as_str()) {
                assert_eq!(s.distinct_ips, 4, "token {}", s.token);
            } else {
                assert!(s.distinct_ips <= 2);
            }
        }
    }

    #[test]
    fn shared_volume_is_b_times_honest_volume() {
        let spec = two_content_spec(11, 2000, 0.1);
        let wl = generate(&spec).unwrap();
        let shared: HashSet<&str> = wl
            .labels
            .iter()
            .filter(|l| l.label == TokenLabel::Shared)
            .map(|l| l.token.as_str())
            .collect();
        let agg = aggregate(ok_events(&wl.events), SECONDS_PER_DAY).unwrap();
        for content in ["vod-a", "vod-b"] {
            let mean = |want_shared: bool| {
                let counts: Vec<u64> = agg
                    .stats
                    .iter()
                    .filter(|s| {
                        s.content == content && shared.contains(s.token.as_str()) == want_shared
                    })
                    .map(|s| s.requests)
                    .collect();
                counts.iter().sum::<u64>() as f64 / counts.len() as f64
            };
            let ratio = mean(true) / mean(false);
            assert!(
                (ratio - 4.0).abs() < 0.3,
                "content {content}: ratio {ratio}"
            );
        }
    }

    #[test]
    fn honest_request_modes_scale_with_chunk_size() {
        let spec = two_content_spec(13, 2000, 0.0);
        let wl = generate(&spec).unwrap();
        let agg = aggregate(ok_events(&wl.events), SECONDS_PER_DAY).unwrap();
        let mode = |content: &str| {
            let mut freq: HashMap<u64, u64> = HashMap::new();
            for s in agg.stats.iter().filter(|s| s.content == content) {
                *freq.entry(s.requests).or_insert(0) += 1;
            }
            freq.into_iter().max_by_key(|&(_, n)| n).unwrap().0 as f64
        };
        let ratio = mode("vod-a") / mode("vod-b");
        // 240/4 = 60 versus 240/10 = 24 requests per session.
        assert!((ratio - 2.5).abs() < 0.5, "mode ratio {ratio}");
    }

    #[test]
    fn aggregate_counts_directly() {
        let mk = |ts, ip: &str| AccessEvent {
            ts,
            token: "t0".into(),
            user: "u0".into(),
            ip: ip.into(),
            content: "c".into(),
            chunk_seq: 0,
        };
        let out = aggregate(
            vec![Ok(mk(10, "1.1.1.1")), Ok(mk(20, "1.1.1.1")), Ok(mk(30, "1.1.1.1"))],
            SECONDS_PER_DAY,
        )
        .unwrap();
        assert_eq!(out.stats.len(), 1);
        assert_eq!(out.stats[0].distinct_ips, 1);
        assert_eq!(out.stats[0].requests, 3);
        assert_eq!(out.stats[0].window_start, 0);
        assert_eq!(out.stats[0].window_end, SECONDS_PER_DAY);

        let empty = aggregate(Vec::new(), SECONDS_PER_DAY).unwrap();
        assert!(empty.stats.is_empty());
        assert!(empty.skipped.is_empty());
    }

    #[test]
    fn aggregate_skips_malformed_and_continues() {
        let good = AccessEvent {
            ts: 5,
            token: "t0".into(),
            user: "u0".into(),
            ip: "1.1.1.1".into(),
            content: "c".into(),
            chunk_seq: 0,
        };
        let out = aggregate(
            vec![
                Ok(good.clone()),
                Err(MalformedEvent {
                    index: 1,
                    reason: "bad ts".into(),
                }),
                Ok(good),
            ],
            60,
        )
        .unwrap();
        assert_eq!(out.stats[0].requests, 2);
        assert_eq!(out.skipped.len(), 1);
        assert_eq!(out.skipped[0].index, 1);
    }

    #[test]
    fn aggregate_order_insensitive_within_window() {
        let spec = two_content_spec(17, 100, 0.1);
        let mut events = generate(&spec).unwrap().events;
        let forward = aggregate(ok_events(&events), SECONDS_PER_DAY).unwrap();
        events.reverse();
        let backward = aggregate(ok_events(&events), SECONDS_PER_DAY).unwrap();
        assert_eq!(forward, backward);
    }

    #[test]
    fn sampling_is_identity_at_rate_one() {
        let spec = two_content_spec(19, 50, 0.0);
        let events = generate(&spec).unwrap().events;
        assert_eq!(sample_population(&events, 1), events);
    }

    #[test]
    fn sampling_keeps_whole_users_deterministically() {
        let spec = two_content_spec(23, 10_000, 0.0);
        let events = generate(&spec).unwrap().events;
        let sampled = sample_population(&events, 100);
        assert_eq!(sampled, sample_population(&events, 100));
        let users: HashSet<&str> = sampled.iter().map(|e| e.user.as_str()).collect();
        assert!((60..150).contains(&users.len()), "{}", users.len());
        // Every kept user keeps all of their events.
        let full_count = |u: &str| events.iter().filter(|e| e.user == u).count();
        let sample_count = |u: &str| sampled.iter().filter(|e| e.user == u).count();
        for u in users.iter().take(5) {
            assert_eq!(full_count(u), sample_count(u));
        }
    }

    #[test]
    fn sampled_honest_volumes_match_population() {
        let spec = two_content_spec(29, 10_000, 0.0);
        let events = generate(&spec).unwrap().events;
        let all = aggregate(ok_events(&events), SECONDS_PER_DAY).unwrap();
        let sampled = aggregate(
            sample_population(&events, 100).into_iter().map(Ok),
            SECONDS_PER_DAY,
        )
        .unwrap();
        let mean = |stats: &[TokenStats]| {
            let v: Vec<u64> = stats
                .iter()
                .filter(|s| s.content == "vod-a")
                .map(|s| s.requests)
                .collect();
            v.iter().sum::<u64>() as f64 / v.len() as f64
        };
        let full = mean(&all.stats);
        let sub = mean(&sampled.stats);
        assert!((sub - full).abs() / full < 0.1, "population {full} sample {sub}");
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = two_content_spec(1, 10, 0.5);
        spec.b = 1;
        assert!(generate(&spec).is_err());
        let mut spec = two_content_spec(1, 10, 0.0);
        spec.contents.clear();
        assert!(generate(&spec).is_err());
        let mut spec = two_content_spec(1, 0, 0.0);
        spec.n_users = 0;
        assert!(generate(&spec).is_err());
        let mut spec = two_content_spec(1, 10, 0.0);
        spec.contents[0].chunk_seconds = 0.0;
        assert!(generate(&spec).is_err());
    }
}
