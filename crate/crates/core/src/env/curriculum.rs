//! Stage-wise success-threshold schedule driven by the trailing episode
//! success rate.

use std::collections::VecDeque;

/// Trailing-window length used for the advance decision.
pub const CURRICULUM_WINDOW: usize = 100;
/// Trailing success rate required to advance a stage.
pub const CURRICULUM_ADVANCE_RATE: f64 = 0.7;

/// The fixed schedule: success threshold in mm^2 per stage.
pub const DEFAULT_STAGES: [f64; 4] = [500.0, 300.0, 100.0, 10.0];

/// Curriculum state: the stage index never regresses and clamps at the
/// final stage. The episode window is cleared on advance so one stage's
/// successes cannot carry into the next stage's decision.
#[derive(Debug, Clone)]
pub struct Curriculum {
    stages: Vec<f64>,
    idx: usize,
    window: VecDeque<bool>,
}

impl Curriculum {
    pub fn new(stages: Vec<f64>) -> Self {
        assert!(!stages.is_empty(), "curriculum needs at least one stage");
        Curriculum { stages, idx: 0, window: VecDeque::with_capacity(CURRICULUM_WINDOW) }
    }

    pub fn m_succ(&self) -> f64 {
        self.stages[self.idx]
    }

    pub fn stage_index(&self) -> usize {
        self.idx
    }

    pub fn stages(&self) -> &[f64] {
        &self.stages
    }

    pub fn record_episode(&mut self, success: bool) {
        if self.window.len() == CURRICULUM_WINDOW {
            self.window.pop_front();
        }
        self.window.push_back(success);
    }

    /// Success rate over the trailing window (0 when empty).
    pub fn trailing_rate(&self) -> f64 {
        if self.window.is_empty() {
            0.0
        } else {
            self.window.iter().filter(|&&s| s).count() as f64 / self.window.len() as f64
        }
    }

    /// Advance to the next stage when the window is full and the trailing
    /// rate reaches the trigger; returns the (possibly new) threshold.
    pub fn next(&mut self) -> f64 {
        if self.idx + 1 < self.stages.len()
            && self.window.len() == CURRICULUM_WINDOW
            && self.trailing_rate() >= CURRICULUM_ADVANCE_RATE
        {
            self.idx += 1;
            self.window.clear();
        }
        self.m_succ()
    }
}

impl Default for Curriculum {
    fn default() -> Self {
        Curriculum::new(DEFAULT_STAGES.to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feed(c: &mut Curriculum, successes: usize, failures: usize) {
        for _ in 0..successes {
            c.record_episode(true);
        }
        for _ in 0..failures {
            c.record_episode(false);
        }
    }

    #[test]
    fn visits_exactly_the_schedule_in_order() {
        let mut c = Curriculum::default();
        let mut seen = vec![c.m_succ()];
        for _ in 0..4 {
            feed(&mut c, 100, 0);
            let m = c.next();
            if *seen.last().unwrap() != m {
                seen.push(m);
            }
        }
        assert_eq!(seen, vec![500.0, 300.0, 100.0, 10.0]);
    }

    #[test]
    fn low_success_rate_keeps_stage() {
        let mut c = Curriculum::default();
        feed(&mut c, 50, 50); // rate 0.5
        assert_eq!(c.next(), 500.0);
        assert_eq!(c.stage_index(), 0);
    }

    #[test]
    fn final_stage_clamps() {
        let mut c = Curriculum::default();
        for _ in 0..10 {
            feed(&mut c, 100, 0);
            c.next();
        }
        assert_eq!(c.m_succ(), 10.0);
        feed(&mut c, 100, 0);
        assert_eq!(c.next(), 10.0);
    }

    #[test]
    fn partial_window_never_advances() {
        let mut c = Curriculum::default();
        feed(&mut c, 99, 0); // rate 1.0 but window not full
        assert_eq!(c.next(), 500.0);
        c.record_episode(true);
        assert_eq!(c.next(), 300.0);
    }

    #[test]
    fn window_clears_on_advance() {
        let mut c = Curriculum::default();
        feed(&mut c, 100, 0);
        c.next();
        assert_eq!(c.trailing_rate(), 0.0);
    }
}
