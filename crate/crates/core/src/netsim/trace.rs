use std::fmt;

/// One line of the event-trace dump: `time_ms,event_kind,subject,detail`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub time_ms: f64,
    pub kind: String,
    pub subject: String,
    pub detail: String,
}

impl TraceRecord {
    pub fn new(time_ms: f64, kind: &str, subject: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            time_ms,
            kind: kind.to_string(),
            subject: sanitize(subject.into()),
            detail: sanitize(detail.into()),
        }
    }
}

// Commas and newlines would break the record layout.
fn sanitize(s: String) -> String {
    if s.contains([',', '\n', '\r']) {
        s.replace([',', '\n', '\r'], ";")
    } else {
        s
    }
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3},{},{},{}", self.time_ms, self.kind, self.subject, self.detail)
    }
}

pub const TRACE_HEADER: &str = "time_ms,event_kind,subject,detail";

pub fn render(records: &[TraceRecord]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.to_string());
        out.push('\n');
    }
    out
}
