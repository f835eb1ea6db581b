//! Symbolic context controller.
//!
//! Tectum events are accumulated in exponentially decayed counters. A
//! declarative rule table maps `(context, event kind, threshold)` to a target
//! context, and a policy table maps each context to the tuning command sent
//! back to the sensors and maps when that context is entered.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::maps::Band;
use crate::tectum::EventKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PalliumError {
    #[error("no policy entry for context {0}")]
    MissingPolicy(Context),
    #[error("rule table has no rule for ({context}, {event})")]
    IncompleteRuleTable { context: Context, event: EventKind },
    #[error("invalid pallium parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Context {
    ActiveElectrolocation,
    PassiveElectrolocation,
    Communication,
}

impl Context {
    pub const ALL: [Context; 3] = [
        Context::ActiveElectrolocation,
        Context::PassiveElectrolocation,
        Context::Communication,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Context::ActiveElectrolocation => "active_electrolocation",
            Context::PassiveElectrolocation => "passive_electrolocation",
            Context::Communication => "communication",
        }
    }
}

impl fmt::Display for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Feedback command. Every `None` field means "no change". Names are
/// symbolic and resolved by the receiving layer.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningCommand {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wavelet_family: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitude_scheme: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transient_scheme: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transient_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cls_band: Option<Band>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub self_eod_on: Option<bool>,
}

impl TuningCommand {
    pub fn is_no_change(&self) -> bool {
        *self == TuningCommand::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub context: Context,
    pub event: EventKind,
    pub threshold: f64,
    pub target: Context,
}

/// Ordered rules; earlier rules take priority.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleTable {
    rules: Vec<Rule>,
}

impl RuleTable {
    /// Accepts the table only if every `(context, event kind)` pair has a rule.
    pub fn new(rules: Vec<Rule>) -> Result<Self, PalliumError> {
        for context in Context::ALL {
            for event in EventKind::ALL {
                if !rules
                    .iter()
                    .any(|r| r.context == context && r.event == event)
                {
                    return Err(PalliumError::IncompleteRuleTable { context, event });
                }
            }
        }
        if let Some(r) = rules.iter().find(|r| !(r.threshold > 0.0)) {
            return Err(PalliumError::InvalidParameter(format!(
                "rule ({}, {}) threshold must be > 0",
                r.context, r.event
            )));
        }
        Ok(Self { rules })
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    /// Highest-priority rule of `context` whose counter has reached its threshold.
    pub fn first_firing(&self, context: Context, counters: &EventCounters) -> Option<&Rule> {
        self.rules
            .iter()
            .filter(|r| r.context == context)
            .find(|r| counters.get(r.event) >= r.threshold)
    }

    /// Switching targets that need a policy entry.
    pub fn targets(&self) -> impl Iterator<Item = Context> + '_ {
        self.rules
            .iter()
            .filter(|r| r.target != r.context)
            .map(|r| r.target)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PolicyTable {
    entries: BTreeMap<Context, TuningCommand>,
}

impl PolicyTable {
    pub fn new(entries: BTreeMap<Context, TuningCommand>) -> Self {
        Self { entries }
    }

    pub fn get(&self, context: Context) -> Option<&TuningCommand> {
        self.entries.get(&context)
    }

    /// Fails unless every context the rule table can switch into has an entry.
    pub fn check_covers(&self, rules: &RuleTable) -> Result<(), PalliumError> {
        for target in rules.targets() {
            if !self.entries.contains_key(&target) {
                return Err(PalliumError::MissingPolicy(target));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct EventCounters([f64; 4]);

impl EventCounters {
    pub fn get(&self, kind: EventKind) -> f64 {
        self.0[kind.index()]
    }

    pub fn set(&mut self, kind: EventKind, value: f64) {
        self.0[kind.index()] = value;
    }

    pub fn iter(&self) -> impl Iterator<Item = (EventKind, f64)> + '_ {
        EventKind::ALL.into_iter().map(|k| (k, self.get(k)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ContextChange {
    pub from: Context,
    pub to: Context,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PalliumState {
    pub context: Context,
    pub counters: EventCounters,
    /// Ticks since the last transition.
    pub dwell: u64,
    pub min_dwell: u64,
    pub gamma: f64,
    rules: Arc<RuleTable>,
}

impl PalliumState {
    pub fn new(
        context: Context,
        rules: Arc<RuleTable>,
        gamma: f64,
        min_dwell: u64,
    ) -> Result<Self, PalliumError> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(PalliumError::InvalidParameter(format!(
                "decay factor must lie in (0, 1), got {gamma}"
            )));
        }
        Ok(Self {
            context,
            counters: EventCounters::default(),
            dwell: 0,
            min_dwell,
            gamma,
            rules,
        })
    }

    pub fn rules(&self) -> &RuleTable {
        &self.rules
    }

    /// Decays every counter by `gamma`, adds one per observed event, and ages
    /// the dwell time by one tick.
    pub fn observe(&self, events: &[EventKind]) -> PalliumState {
        let mut next = self.clone();
        next.counters.0.iter_mut().for_each(|c| *c *= self.gamma);
        for &e in events {
            next.counters.0[e.index()] += 1.0;
        }
        next.dwell += 1;
        next
    }

    pub fn transition(&self) -> (PalliumState, Option<ContextChange>) {
        if self.dwell < self.min_dwell {
            return (self.clone(), None);
        }
        match self.rules.first_firing(self.context, &self.counters) {
            Some(rule) if rule.target != self.context => {
                let mut next = self.clone();
                next.context = rule.target;
                next.dwell = 0;
                let change = ContextChange {
                    from: self.context,
                    to: rule.target,
                };
                (next, Some(change))
            }
            _ => (self.clone(), None),
        }
    }
}

/// Commands configured for entering `new`. No commands when the context does
/// not change, and all-no-change entries are suppressed.
pub fn issue_commands(
    old: Context,
    new: Context,
    policy: &PolicyTable,
) -> Result<Vec<TuningCommand>, PalliumError> {
    if old == new {
        return Ok(Vec::new());
    }
    let cmd = policy.get(new).ok_or(PalliumError::MissingPolicy(new))?;
    Ok(if cmd.is_no_change() {
        Vec::new()
    } else {
        vec![cmd.clone()]
    })
}

/// Quiet ticks needed for a counter starting at `peak` to decay below
/// `threshold`.
pub fn decay_bound(gamma: f64, threshold: f64, peak: f64) -> u64 {
    if peak < threshold {
        return 0;
    }
    ((threshold / peak).ln() / gamma.ln()).floor() as u64 + 1
}

/// Largest value a counter can reach with at most one event per tick.
pub fn counter_ceiling(gamma: f64) -> f64 {
    1.0 / (1.0 - gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rules(theta: f64) -> RuleTable {
        use Context::*;
        use EventKind::*;
        let r = |context, event, target| Rule {
            context,
            event,
            threshold: theta,
            target,
        };
        RuleTable::new(vec![
            r(ActiveElectrolocation, ConspecificChirp, Communication),
            r(
                ActiveElectrolocation,
                ExternalLowFreqField,
                PassiveElectrolocation,
            ),
            r(ActiveElectrolocation, ObjectEcho, ActiveElectrolocation),
            r(ActiveElectrolocation, Quiet, ActiveElectrolocation),
            r(PassiveElectrolocation, ConspecificChirp, Communication),
            r(
                PassiveElectrolocation,
                ExternalLowFreqField,
                PassiveElectrolocation,
            ),
            r(PassiveElectrolocation, ObjectEcho, ActiveElectrolocation),
            r(PassiveElectrolocation, Quiet, PassiveElectrolocation),
            r(Communication, ConspecificChirp, Communication),
            r(Communication, ObjectEcho, ActiveElectrolocation),
            r(Communication, ExternalLowFreqField, PassiveElectrolocation),
            r(Communication, Quiet, ActiveElectrolocation),
        ])
        .unwrap()
    }

    fn policy() -> PolicyTable {
        let mut m = BTreeMap::new();
        m.insert(
            Context::Communication,
            TuningCommand {
                wavelet_family: Some("haar".into()),
                transient_scheme: Some("transient_event".into()),
                cls_band: Some(Band::new(200.0, 400.0)),
                ..Default::default()
            },
        );
        m.insert(
            Context::ActiveElectrolocation,
            TuningCommand {
                wavelet_family: Some("db4".into()),
                amplitude_scheme: Some("envelope_rate".into()),
                cls_band: Some(Band::new(20.0, 80.0)),
                self_eod_on: Some(true),
                ..Default::default()
            },
        );
        m.insert(
            Context::PassiveElectrolocation,
            TuningCommand {
                amplitude_scheme: Some("envelope_rate".into()),
                self_eod_on: Some(false),
                ..Default::default()
            },
        );
        PolicyTable::new(m)
    }

    fn state() -> PalliumState {
        PalliumState::new(
            Context::ActiveElectrolocation,
            Arc::new(rules(2.0)),
            0.9,
            10,
        )
        .unwrap()
    }

    #[test]
    fn observe_examples() {
        let mut s = state();
        s.counters.set(EventKind::ObjectEcho, 1.0);
        let next = s.observe(&[]);
        assert!((next.counters.get(EventKind::ObjectEcho) - 0.9).abs() < 1e-15);
        assert_eq!(next.dwell, 1);
        let chirped = next.observe(&[EventKind::ConspecificChirp]);
        assert_eq!(chirped.counters.get(EventKind::ConspecificChirp), 1.0);
        assert!((chirped.counters.get(EventKind::ObjectEcho) - 0.81).abs() < 1e-15);
    }

    #[test]
    fn hysteresis_blocks_early_switch() {
        let mut s = state();
        s.counters.set(EventKind::ConspecificChirp, 5.0);
        s.dwell = 9;
        assert_eq!(s.transition().1, None);
        s.dwell = 10;
        let (next, change) = s.transition();
        assert_eq!(
            change,
            Some(ContextChange {
                from: Context::ActiveElectrolocation,
                to: Context::Communication
            })
        );
        assert_eq!(next.dwell, 0);
        assert_eq!(next.context, Context::Communication);
    }

    #[test]
    fn zero_counters_never_switch() {
        let mut s = state();
        for _ in 0..500 {
            s = s.observe(&[]);
            let (next, change) = s.transition();
            assert!(change.is_none());
            s = next;
        }
        assert_eq!(s.context, Context::ActiveElectrolocation);
    }

    #[test]
    fn incomplete_table_is_rejected() {
        let mut r = rules(2.0).rules().to_vec();
        r.retain(|r| !(r.context == Context::Communication && r.event == EventKind::Quiet));
        assert_eq!(
            RuleTable::new(r),
            Err(PalliumError::IncompleteRuleTable {
                context: Context::Communication,
                event: EventKind::Quiet
            })
        );
    }

    #[test]
    fn commands_follow_policy() {
        let p = policy();
        assert!(
            issue_commands(Context::Communication, Context::Communication, &p)
                .unwrap()
                .is_empty()
        );
        let cmds =
            issue_commands(Context::ActiveElectrolocation, Context::Communication, &p).unwrap();
        assert_eq!(cmds.len(), 1);
        assert_eq!(cmds[0].cls_band, Some(Band::new(200.0, 400.0)));

        let mut partial = BTreeMap::new();
        partial.insert(Context::Communication, TuningCommand::default());
        let partial = PolicyTable::new(partial);
        assert!(issue_commands(
            Context::ActiveElectrolocation,
            Context::Communication,
            &partial
        )
        .unwrap()
        .is_empty());
        assert_eq!(
            issue_commands(
                Context::Communication,
                Context::PassiveElectrolocation,
                &partial
            ),
            Err(PalliumError::MissingPolicy(Context::PassiveElectrolocation))
        );
        assert!(partial.check_covers(&rules(2.0)).is_err());
        assert!(policy().check_covers(&rules(2.0)).is_ok());
    }

    #[test]
    fn decay_bound_matches_iteration() {
        for (gamma, theta) in [(0.9, 2.0), (0.8, 1.5), (0.95, 3.0)] {
            let peak = counter_ceiling(gamma);
            let mut c = peak;
            let mut ticks = 0;
            while c >= theta {
                c *= gamma;
                ticks += 1;
            }
            assert_eq!(decay_bound(gamma, theta, peak), ticks);
        }
        assert_eq!(decay_bound(0.9, 2.0, 1.0), 0);
    }

    #[test]
    fn chirp_then_quiet_returns_to_active() {
        let mut s = state();
        let mut contexts = Vec::new();
        let stream = std::iter::repeat_n(EventKind::ObjectEcho, 20)
            .chain(std::iter::repeat_n(EventKind::ConspecificChirp, 30))
            .chain(std::iter::repeat_n(EventKind::Quiet, 40));
        for e in stream {
            s = s.observe(&[e]);
            s = s.transition().0;
            contexts.push(s.context);
        }
        assert!(contexts[20..50].contains(&Context::Communication));
        assert_eq!(*contexts.last().unwrap(), Context::ActiveElectrolocation);
    }

    #[test]
    fn fuzzed_streams_stay_well_formed() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut s = state();
        for _ in 0..100_000 {
            let n = rng.random_range(0..3);
            let events: Vec<EventKind> = (0..n)
                .map(|_| EventKind::ALL[rng.random_range(0..4)])
                .collect();
            s = s.observe(&events);
            assert!(s.counters.iter().all(|(_, c)| c >= 0.0 && c.is_finite()));
            let (next, change) = s.transition();
            if let Some(c) = change {
                assert_ne!(c.from, c.to);
                assert_eq!(next.dwell, 0);
            }
            s = next;
        }
    }

    #[test]
    fn constant_stimulus_switches_at_most_once() {
        for kind in EventKind::ALL {
            let mut s = state();
            let mut switches = 0;
            for _ in 0..300 {
                s = s.observe(&[kind]);
                let (next, change) = s.transition();
                switches += usize::from(change.is_some());
                s = next;
            }
            assert!(switches <= 1, "{kind}: {switches}");
        }
    }
}
