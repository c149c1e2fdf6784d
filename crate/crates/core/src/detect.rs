//! Threshold-based token-abuse detection over windowed access aggregates.
//!
//! Two rules mirror the volumetric signals the delivery side can observe:
//!
//! * `IpVolumetry` — a token seen from more than `ip_threshold` distinct
//!   addresses inside one window is suspicious.
//! * `RequestVolumetry` — a token whose request count for a content exceeds
//!   that content's threshold is suspicious. Thresholds come either from a
//!   fixed per-content map or from a quantile of a 1-in-N user sample
//!   ([`estimate_baseline`]).
//!
//! Both rules flag strictly above the threshold, so a baseline quantile
//! never flags itself. Recurrence analysis then separates one-off flags
//! (false-positive candidates) from repeat offenders.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use thiserror::Error;

use crate::access::{
    aggregate, user_sampled, AccessError, AccessEvent, TokenLabel, TokenStats, SECONDS_PER_DAY,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectError {
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error("EmptySample: the sampled population contains no events")]
    EmptySample,
    #[error("EmptyFlags: no flags to analyze")]
    EmptyFlags,
    #[error("UnknownToken: {0} is not in the label table")]
    UnknownToken(String),
    #[error(transparent)]
    Access(#[from] AccessError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumetryMode {
    Absolute,
    Quantile,
}

/// Tunable thresholds for both rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    /// Flag a token seen from strictly more than this many IPs per window.
    pub ip_threshold: u64,
    pub volumetry_mode: VolumetryMode,
    /// Per-content request thresholds for `absolute` mode.
    pub absolute_request_threshold: BTreeMap<String, u64>,
    /// Baseline quantile for `quantile` mode, in (0, 1].
    pub quantile_level: f64,
    /// 1-in-N user sampling for baseline estimation.
    pub sample_rate: u64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            ip_threshold: 3,
            volumetry_mode: VolumetryMode::Quantile,
            absolute_request_threshold: BTreeMap::new(),
            quantile_level: 0.99,
            sample_rate: 100,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<(), DetectError> {
        if self.ip_threshold < 1 {
            return Err(DetectError::InvalidConfig("ip_threshold must be >= 1".into()));
        }
        if !(self.quantile_level > 0.0 && self.quantile_level <= 1.0) {
            return Err(DetectError::InvalidConfig(format!(
                "quantile_level must be in (0, 1], got {}",
                self.quantile_level
            )));
        }
        if self.sample_rate < 1 {
            return Err(DetectError::InvalidConfig("sample_rate must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Rule {
    IpVolumetry,
    RequestVolumetry,
}

impl std::fmt::Display for Rule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Rule::IpVolumetry => write!(f, "IpVolumetry"),
            Rule::RequestVolumetry => write!(f, "RequestVolumetry"),
        }
    }
}

/// One detection verdict. Field order is the CSV wire order:
/// `day,token,user,rule,observed,threshold`. `observed > threshold` holds
/// for every emitted record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagRecord {
    /// Day index of the window start (window_start / 86400).
    pub day: u64,
    pub token: String,
    pub user: String,
    pub rule: Rule,
    pub observed: u64,
    pub threshold: u64,
}

fn sort_flags(flags: &mut [FlagRecord]) {
    flags.sort_unstable_by(|a, b| {
        a.day
            .cmp(&b.day)
            .then_with(|| a.token.cmp(&b.token))
            .then_with(|| a.rule.cmp(&b.rule))
            .then_with(|| a.observed.cmp(&b.observed))
    });
}

/// Flags every `(token, window)` whose distinct-IP count exceeds
/// `cfg.ip_threshold`. When a token has several per-content rows in one
/// window, the largest row is taken; output is ordered by day, then token.
pub fn flag_by_ip(stats: &[TokenStats], cfg: &DetectionConfig) -> Vec<FlagRecord> {
    let mut per_window: BTreeMap<(u64, &str), (&str, u64)> = BTreeMap::new();
    for s in stats {
        let entry = per_window
            .entry((s.window_start, &s.token))
            .or_insert((&s.user, 0));
        entry.1 = entry.1.max(s.distinct_ips);
    }
    let mut flags: Vec<FlagRecord> = per_window
        .into_iter()
        .filter(|&(_, (_, ips))| ips > cfg.ip_threshold)
        .map(|((window_start, token), (user, ips))| FlagRecord {
            day: window_start / SECONDS_PER_DAY,
            token: token.to_string(),
            user: user.to_string(),
            rule: Rule::IpVolumetry,
            observed: ips,
            threshold: cfg.ip_threshold,
        })
        .collect();
    sort_flags(&mut flags);
    flags
}

/// Nearest-rank quantile: level `p` of `n` sorted values picks the element
/// at 1-indexed rank `ceil(p * n)`.
pub fn quantile_nearest_rank(sorted: &[u64], level: f64) -> u64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    let rank = (level * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Estimates per-content request thresholds from a 1-in-`sample_rate` user
/// sample: each content's threshold is the configured quantile of its
/// per-token-per-window request counts. Contents never seen in the sample
/// get no entry and are skipped by [`flag_by_volumetry`].
pub fn estimate_baseline(
    events: &[AccessEvent],
    window_secs: u64,
    cfg: &DetectionConfig,
) -> Result<BTreeMap<String, u64>, DetectError> {
    cfg.validate()?;
    let sampled: Vec<_> = events
        .iter()
        .filter(|ev| user_sampled(&ev.user, cfg.sample_rate))
        .cloned()
        .map(Ok)
        .collect();
    if sampled.is_empty() {
        return Err(DetectError::EmptySample);
    }
    let agg = aggregate(sampled, window_secs)?;
    let mut per_content: BTreeMap<String, Vec<u64>> = BTreeMap::new();
    for s in agg.stats {
        per_content.entry(s.content).or_default().push(s.requests);
    }
    Ok(per_content
        .into_iter()
        .map(|(content, mut counts)| {
            counts.sort_unstable();
            let threshold = quantile_nearest_rank(&counts, cfg.quantile_level);
            (content, threshold)
        })
        .collect())
}

/// Flags every `(token, content, window)` whose request count exceeds the
/// content's threshold. Contents without a threshold are skipped.
pub fn flag_by_volumetry(
    stats: &[TokenStats],
    thresholds: &BTreeMap<String, u64>,
    _cfg: &DetectionConfig,
) -> Vec<FlagRecord> {
    let mut flags: Vec<FlagRecord> = stats
        .iter()
        .filter_map(|s| {
            let threshold = *thresholds.get(&s.content)?;
            (s.requests > threshold).then(|| FlagRecord {
                day: s.window_start / SECONDS_PER_DAY,
                token: s.token.clone(),
                user: s.user.clone(),
                rule: Rule::RequestVolumetry,
                observed: s.requests,
                threshold,
            })
        })
        .collect();
    sort_flags(&mut flags);
    flags
}

/// Quantile levels reported by default.
pub const DEFAULT_QUANTILE_LEVELS: [f64; 7] = [0.25, 0.64, 0.66, 0.80, 0.95, 0.99, 1.0];

/// Per-user flag counts over a period, their quantiles, and the share of
/// flagged users never flagged twice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceReport {
    pub per_user_flag_counts: BTreeMap<String, u64>,
    /// Flag-count quantile per level; keys are the level's decimal form.
    pub quantiles: BTreeMap<String, u64>,
    pub non_recurring_fraction: f64,
}

/// Counts flags per user, optionally restricted to an inclusive day range,
/// and reports the count quantiles at [`DEFAULT_QUANTILE_LEVELS`] plus any
/// extra levels.
pub fn recurrence(
    flags: &[FlagRecord],
    period: Option<(u64, u64)>,
    extra_levels: &[f64],
) -> Result<RecurrenceReport, DetectError> {
    let mut per_user: BTreeMap<String, u64> = BTreeMap::new();
    for f in flags {
        if let Some((lo, hi)) = period {
            if f.day < lo || f.day > hi {
                continue;
            }
        }
        *per_user.entry(f.user.clone()).or_insert(0) += 1;
    }
    if per_user.is_empty() {
        return Err(DetectError::EmptyFlags);
    }

    let mut levels: Vec<f64> = DEFAULT_QUANTILE_LEVELS
        .iter()
        .chain(extra_levels)
        .copied()
        .collect();
    for level in &levels {
        if !(*level > 0.0 && *level <= 1.0) {
            return Err(DetectError::InvalidConfig(format!(
                "quantile level must be in (0, 1], got {level}"
            )));
        }
    }
    levels.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    levels.dedup();

    let mut counts: Vec<u64> = per_user.values().copied().collect();
    counts.sort_unstable();
    let quantiles = levels
        .into_iter()
        .map(|level| (format!("{level}"), quantile_nearest_rank(&counts, level)))
        .collect();

    let once = counts.iter().filter(|&&c| c == 1).count();
    Ok(RecurrenceReport {
        non_recurring_fraction: once as f64 / counts.len() as f64,
        per_user_flag_counts: per_user,
        quantiles,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayCount {
    pub day: u64,
    pub count: u64,
}

/// Distinct flagged tokens per day: every flag, and only flags belonging to
/// users flagged exactly once over the whole input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailySeries {
    pub all: Vec<DayCount>,
    pub non_recurring: Vec<DayCount>,
}

pub fn daily_series(flags: &[FlagRecord]) -> DailySeries {
    let mut user_totals: HashMap<&str, u64> = HashMap::new();
    for f in flags {
        *user_totals.entry(&f.user).or_insert(0) += 1;
    }
    let mut all: BTreeMap<u64, HashSet<&str>> = BTreeMap::new();
    let mut non_recurring: BTreeMap<u64, HashSet<&str>> = BTreeMap::new();
    for f in flags {
        all.entry(f.day).or_default().insert(&f.token);
        if user_totals[f.user.as_str()] == 1 {
            non_recurring.entry(f.day).or_default().insert(&f.token);
        }
    }
    let to_series = |m: BTreeMap<u64, HashSet<&str>>| {
        m.into_iter()
            .map(|(day, tokens)| DayCount {
                day,
                count: tokens.len() as u64,
            })
            .collect()
    };
    DailySeries {
        all: to_series(all),
        non_recurring: to_series(non_recurring),
    }
}

/// Confusion-matrix summary of one rule at token granularity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Scores each rule against ground truth: a token counts as
/// predicted-positive if the rule flagged it at least once. Empty
/// prediction or positive sets score as perfect on the undefined axis.
pub fn evaluate(
    flags: &[FlagRecord],
    labels: &HashMap<String, TokenLabel>,
) -> Result<BTreeMap<Rule, RuleMetrics>, DetectError> {
    let mut predicted: HashMap<Rule, HashSet<&str>> = HashMap::new();
    for f in flags {
        if !labels.contains_key(&f.token) {
            return Err(DetectError::UnknownToken(f.token.clone()));
        }
        predicted.entry(f.rule).or_default().insert(&f.token);
    }
    let shared: HashSet<&str> = labels
        .iter()
        .filter(|(_, l)| **l == TokenLabel::Shared)
        .map(|(t, _)| t.as_str())
        .collect();

    let mut out = BTreeMap::new();
    for rule in [Rule::IpVolumetry, Rule::RequestVolumetry] {
        let empty = HashSet::new();
        let pred = predicted.get(&rule).unwrap_or(&empty);
        let tp = pred.intersection(&shared).count() as f64;
        let fp = (pred.len() as f64) - tp;
        let fne = (shared.len() as f64) - tp;
        let precision = if pred.is_empty() { 1.0 } else { tp / (tp + fp) };
        let recall = if shared.is_empty() { 1.0 } else { tp / (tp + fne) };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        out.insert(
            rule,
            RuleMetrics {
                precision,
                recall,
                f1,
            },
        );
    }
    Ok(out)
}
