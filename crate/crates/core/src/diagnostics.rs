use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

/// A non-fatal event recorded during an analysis: a skipped pair, an excluded
/// member, a window failing the stationarity check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub stage: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_date: Option<NaiveDate>,
    pub subject: String,
    pub message: String,
}

impl Diagnostic {
    pub fn new(stage: &str, subject: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            stage: stage.to_string(),
            window: None,
            window_date: None,
            subject: subject.into(),
            message: message.into(),
        }
    }

    pub fn in_window(mut self, index: usize, date: NaiveDate) -> Self {
        self.window = Some(index);
        self.window_date = Some(date);
        self
    }
}
