use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Hidden system pattern of one period.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Pattern {
    Normal,
    Abnormal,
}

impl Pattern {
    pub fn code(self) -> u8 {
        match self {
            Pattern::Normal => 1,
            Pattern::Abnormal => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Pattern::Normal),
            2 => Some(Pattern::Abnormal),
            _ => None,
        }
    }

    pub fn is_abnormal(self) -> bool {
        self == Pattern::Abnormal
    }
}

impl From<Pattern> for u8 {
    fn from(p: Pattern) -> u8 {
        p.code()
    }
}

impl TryFrom<u8> for Pattern {
    type Error = String;

    fn try_from(code: u8) -> std::result::Result<Self, String> {
        Pattern::from_code(code).ok_or_else(|| format!("pattern label must be 1 or 2, got {code}"))
    }
}

/// Period grid with the abnormal segments to inject.
///
/// Periods are numbered from 1; segments are inclusive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultSchedule {
    pub total_periods: usize,
    /// Seconds per period.
    pub period_duration: f64,
    pub abnormal_segments: Vec<(usize, usize)>,
}

impl FaultSchedule {
    pub fn new(
        total_periods: usize,
        period_duration: f64,
        abnormal_segments: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let s = Self {
            total_periods,
            period_duration,
            abnormal_segments,
        };
        s.validate()?;
        Ok(s)
    }

    /// `total_periods` periods spanning `duration` seconds.
    pub fn over_span(total_periods: usize, duration: f64, abnormal_segments: Vec<(usize, usize)>) -> Result<Self> {
        Self::new(total_periods, duration / total_periods as f64, abnormal_segments)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SimError::InvalidSchedule(m));
        if self.total_periods == 0 {
            return bad("no periods".into());
        }
        if !(self.period_duration > 0.0 && self.period_duration.is_finite()) {
            return bad(format!("period duration must be positive, got {}", self.period_duration));
        }
        let mut prev_end = 1;
        for &(s, e) in &self.abnormal_segments {
            if s > e || e > self.total_periods {
                return bad(format!("segment ({s}, {e}) outside 1..={}", self.total_periods));
            }
            // S_0 is normal: period 1 never starts a fault, and segments may not touch
            if s <= prev_end {
                return bad(format!("segment ({s}, {e}) overlaps, touches its predecessor or starts at period 1"));
            }
            prev_end = e + 1;
        }
        Ok(())
    }

    pub fn pattern(&self, period: usize) -> Pattern {
        if self.abnormal_segments.iter().any(|&(s, e)| (s..=e).contains(&period)) {
            Pattern::Abnormal
        } else {
            Pattern::Normal
        }
    }

    pub fn labels(&self) -> Vec<Pattern> {
        (1..=self.total_periods).map(|p| self.pattern(p)).collect()
    }

    pub fn abnormal_count(&self) -> usize {
        self.abnormal_segments.iter().map(|(s, e)| e - s + 1).sum()
    }

    /// End time of `period`.
    pub fn period_end(&self, period: usize) -> f64 {
        period as f64 * self.period_duration
    }

    pub fn duration(&self) -> f64 {
        self.period_end(self.total_periods)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_follow_segments() {
        let s = FaultSchedule::over_span(630, 0.02, vec![(151, 160), (211, 220), (501, 510)]).unwrap();
        let labels = s.labels();
        assert_eq!(labels.len(), 630);
        assert_eq!(labels.iter().filter(|l| l.is_abnormal()).count(), 30);
        assert_eq!(s.abnormal_count(), 30);
        assert!(labels[149] == Pattern::Normal && labels[150] == Pattern::Abnormal);
        assert!(labels[159] == Pattern::Abnormal && labels[160] == Pattern::Normal);
        assert!((s.abnormal_count() as f64 / s.total_periods as f64 - 0.047_619).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_segments() {
        for segs in [vec![(1, 3)], vec![(5, 4)], vec![(5, 11)], vec![(3, 5), (5, 6)], vec![(3, 5), (6, 7)], vec![(6, 7), (2, 3)]] {
            assert!(FaultSchedule::new(10, 1.0, segs.clone()).is_err(), "{segs:?}");
        }
        assert!(FaultSchedule::new(0, 1.0, vec![]).is_err());
        assert!(FaultSchedule::new(10, 0.0, vec![]).is_err());
        assert!(FaultSchedule::new(10, 1.0, vec![(2, 2), (4, 10)]).is_ok());
    }

    #[test]
    fn pattern_codes() {
        assert_eq!(u8::from(Pattern::Abnormal), 2);
        assert_eq!(Pattern::from_code(1), Some(Pattern::Normal));
        assert_eq!(Pattern::from_code(0), None);
    }
}
