use super::message::StopReason;

pub const CSV_HEADER: &str = "iteration,loss,accuracy,clip_bound,epsilon";

/// One row per completed iteration. `loss` and `accuracy` come from the
/// updater's most recent test-set evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: u64,
    pub loss: f64,
    pub accuracy: f64,
    pub clip_bound: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    pub records: Vec<IterationRecord>,
    pub stop_reason: StopReason,
}

impl TrainingReport {
    pub fn final_epsilon(&self) -> Option<f64> {
        self.records.last().map(|r| r.epsilon)
    }

    pub fn final_accuracy(&self) -> Option<f64> {
        self.records.last().map(|r| r.accuracy)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.iteration, r.loss, r.accuracy, r.clip_bound, r.epsilon
            ));
        }
        out
    }
}
