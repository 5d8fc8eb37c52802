use crate::SimgenError;

/// Detection outcome of one monitored run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectionMetrics {
    /// Steps from the change point to the first alarm at or after it;
    /// `None` if the change was never flagged.
    pub detection_delay: Option<usize>,
    /// Any alarm strictly before the change point.
    pub false_alarm: bool,
    pub alarm_times: Vec<usize>,
}

/// Scores a run from its alarm times. Times are 1-based, must be sorted
/// and lie within `[1, t_len]`.
pub fn score_run(
    alarm_times: &[usize],
    t_star: usize,
    t_len: usize,
) -> Result<DetectionMetrics, SimgenError> {
    if alarm_times.windows(2).any(|w| w[0] > w[1]) {
        return Err(SimgenError::InvalidInput("alarm times must be sorted".into()));
    }
    if alarm_times.iter().any(|&t| t == 0 || t > t_len) {
        return Err(SimgenError::InvalidInput(format!(
            "alarm times must lie in [1, {t_len}]"
        )));
    }
    if t_star == 0 || t_star > t_len {
        return Err(SimgenError::InvalidInput(format!(
            "change time must lie in [1, {t_len}], got {t_star}"
        )));
    }
    let false_alarm = alarm_times.iter().any(|&t| t < t_star);
    let detection_delay = alarm_times.iter().find(|&&t| t >= t_star).map(|&t| t - t_star);
    Ok(DetectionMetrics { detection_delay, false_alarm, alarm_times: alarm_times.to_vec() })
}
