use std::fmt;
use std::str::FromStr;

use crate::time::SimDuration;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Hop,
    Location,
}

impl FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "hop" => Ok(Metric::Hop),
            "location" => Ok(Metric::Location),
            _ => Err(format!("unknown metric '{s}' (expected hop or location)")),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Hop => "hop",
            Metric::Location => "location",
        })
    }
}

/// Protocol timing and policy knobs shared by every node.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    /// How long a node waits for BACK after sending FORWARD. Also the
    /// reply-gathering window for REPLY and JOIN_INFO.
    pub timeout_ppt: SimDuration,
    pub probe_interval: SimDuration,
    pub request_resend_timeout: SimDuration,
    /// REQUEST after BACK_N{b} waits `b * backn_backoff_base`.
    pub backn_backoff_base: SimDuration,
    pub pending_forward_delay: SimDuration,
    pub max_hops: u32,
    pub metric: Metric,
    pub location_penalty: u32,
    /// Half-angle of the cone around the failed direction, degrees.
    pub location_cone_deg: f64,
    /// How long a detected neighbour failure counts as recent.
    pub failure_memory: SimDuration,
    pub data_buffer_capacity: usize,
    /// A child is forgotten after this many probe intervals without FORWARD.
    pub child_timeout_intervals: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            timeout_ppt: SimDuration::from_millis(250),
            probe_interval: SimDuration::from_secs(2),
            request_resend_timeout: SimDuration::from_secs(2),
            backn_backoff_base: SimDuration::from_secs(1),
            pending_forward_delay: SimDuration::from_millis(5),
            max_hops: 16,
            metric: Metric::Hop,
            location_penalty: 4,
            location_cone_deg: 60.0,
            failure_memory: SimDuration::from_secs(30),
            data_buffer_capacity: 16,
            child_timeout_intervals: 3,
        }
    }
}

impl ProtocolConfig {
    pub const KEYS: [&'static str; 12] = [
        "timeout_ppt",
        "probe_interval",
        "request_resend_timeout",
        "backn_backoff_base",
        "pending_forward_delay",
        "max_hops",
        "metric",
        "location_penalty",
        "location_cone_deg",
        "failure_memory",
        "data_buffer_capacity",
        "child_timeout_intervals",
    ];

    /// Applies one `key value` override. Durations are given in seconds.
    /// Returns `Ok(false)` when the key is not a protocol key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool, String> {
        let secs = |v: &str| -> Result<SimDuration, String> {
            let d = v
                .parse::<f64>()
                .ok()
                .and_then(SimDuration::from_secs_f64)
                .ok_or_else(|| format!("bad duration '{v}' for {key}"))?;
            if d == SimDuration::ZERO {
                return Err(format!("{key} must be positive"));
            }
            Ok(d)
        };
        let int = |v: &str| -> Result<u64, String> {
            v.parse::<u64>()
                .map_err(|_| format!("bad integer '{v}' for {key}"))
        };
        match key {
            "timeout_ppt" => self.timeout_ppt = secs(value)?,
            "probe_interval" => self.probe_interval = secs(value)?,
            "request_resend_timeout" => self.request_resend_timeout = secs(value)?,
            "backn_backoff_base" => self.backn_backoff_base = secs(value)?,
            "pending_forward_delay" => self.pending_forward_delay = secs(value)?,
            "failure_memory" => self.failure_memory = secs(value)?,
            "max_hops" => {
                let v = int(value)?;
                if v == 0 || v > u64::from(u32::MAX) {
                    return Err("max_hops must be at least 1".into());
                }
                self.max_hops = v as u32;
            }
            "metric" => self.metric = value.parse()?,
            "location_penalty" => self.location_penalty = int(value)? as u32,
            "location_cone_deg" => {
                let v: f64 = value.parse().map_err(|_| format!("bad angle '{value}'"))?;
                if !(0.0..=180.0).contains(&v) {
                    return Err("location_cone_deg must be within [0, 180]".into());
                }
                self.location_cone_deg = v;
            }
            "data_buffer_capacity" => self.data_buffer_capacity = int(value)? as usize,
            "child_timeout_intervals" => self.child_timeout_intervals = int(value)?.max(1),
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn child_timeout(&self) -> SimDuration {
        self.probe_interval * self.child_timeout_intervals
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides() {
        let mut c = ProtocolConfig::default();
        assert_eq!(c.set("timeout_ppt", "0.5"), Ok(true));
        assert_eq!(c.timeout_ppt, SimDuration::from_millis(500));
        assert_eq!(c.set("metric", "LOCATION"), Ok(true));
        assert_eq!(c.metric, Metric::Location);
        assert_eq!(c.set("seed", "1"), Ok(false));
        assert!(c.set("max_hops", "0").is_err());
        assert!(c.set("probe_interval", "0").is_err());
        assert!(c.set("probe_interval", "-1").is_err());
    }
}
