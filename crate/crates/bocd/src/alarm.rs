use crate::RunLengthPosterior;

/// MAP run length: argmax of the posterior, ties resolved toward the
/// smaller run length (the conservative choice — favors declaring change).
pub fn map_run_length(posterior: &RunLengthPosterior) -> usize {
    let mut best_r = 0;
    let mut best_p = f64::NEG_INFINITY;
    for (r, p) in posterior.iter() {
        if p > best_p {
            best_p = p;
            best_r = r;
        }
    }
    best_r
}

/// Turns run-length posteriors into a binary alarm stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlarmRule {
    /// Fires when the MAP run length falls below the previous MAP minus 1,
    /// i.e. the posterior mode stopped growing and collapsed.
    MapDrop,
    /// Fires when the posterior mass at run lengths `<= window` exceeds
    /// `threshold`.
    ProbMass { threshold: f64, window: usize },
}

impl Default for AlarmRule {
    fn default() -> Self {
        Self::ProbMass { threshold: 0.5, window: 2 }
    }
}

/// Stateful alarm detector; feed it each step's posterior in order.
///
/// Alarms are suppressed during the first `burn_in` steps: right after
/// start-up every run length is necessarily small, so low-run-length mass
/// carries no change evidence yet.
#[derive(Debug, Clone)]
pub struct AlarmDetector {
    rule: AlarmRule,
    prev_map: Option<usize>,
    step: usize,
    burn_in: usize,
}

impl AlarmDetector {
    pub const DEFAULT_BURN_IN: usize = 10;

    pub fn new(rule: AlarmRule) -> Self {
        Self::with_burn_in(rule, Self::DEFAULT_BURN_IN)
    }

    pub fn with_burn_in(rule: AlarmRule, burn_in: usize) -> Self {
        Self { rule, prev_map: None, step: 0, burn_in }
    }

    pub fn rule(&self) -> AlarmRule {
        self.rule
    }

    /// Returns true if this posterior triggers the alarm.
    pub fn observe(&mut self, posterior: &RunLengthPosterior) -> bool {
        self.step += 1;
        let map = map_run_length(posterior);
        let fired = match self.rule {
            AlarmRule::MapDrop => match self.prev_map {
                Some(prev) => (map as i64) < prev as i64 - 1,
                None => false,
            },
            AlarmRule::ProbMass { threshold, window } => {
                posterior.mass_at_most(window) > threshold
            }
        };
        self.prev_map = Some(map);
        fired && self.step > self.burn_in
    }
}
