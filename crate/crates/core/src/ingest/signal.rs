//! XSAC text signal format.
//!
//! ```text
//! XSAC 1
//! station_id=ST01
//! channel_id=HHZ
//! axis=Z
//! sample_rate_hz=1.0000000000000000e2
//! start_time=2023-03-01T00:00:00Z
//! n_samples=3
//! DATA
//! 0.0000000000000000e0
//! ...
//! ```

use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metamodel::canonical::{decimal_f64, decimal_vec, format_decimal, parse_decimal};
use crate::metamodel::{canonical_encode, Axis, Timestamp};

const MAGIC: &str = "XSAC 1";
const KEYS: [&str; 6] = [
    "station_id",
    "channel_id",
    "axis",
    "sample_rate_hz",
    "start_time",
    "n_samples",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalTrace {
    pub station_id: String,
    pub channel_id: String,
    pub axis: Axis,
    #[serde(with = "decimal_f64")]
    pub sample_rate_hz: f64,
    pub start_time: Timestamp,
    #[serde(with = "decimal_vec")]
    pub samples: Vec<f64>,
}

impl SignalTrace {
    /// `station.channel.axis`, used as the profile column name.
    pub fn label(&self) -> String {
        format!("{}.{}.{}", self.station_id, self.channel_id, self.axis.as_str())
    }

    /// Time of sample `i`.
    pub fn time_at(&self, i: usize) -> Timestamp {
        let us = (i as f64 / self.sample_rate_hz * 1e6).round() as i64;
        self.start_time + chrono::Duration::microseconds(us)
    }
}

/// Traces loaded together form one signal release.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SignalBundle {
    pub traces: Vec<SignalTrace>,
}

impl SignalBundle {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        canonical_encode(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Ok(serde_json::from_slice(bytes)?)
    }

    pub fn find(&self, station: &str, axis: Axis) -> Option<&SignalTrace> {
        self.traces.iter().find(|t| t.station_id == station && t.axis == axis)
    }
}

pub fn parse_signal(text: &str) -> Result<SignalTrace> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(MAGIC) {
        return Err(Error::HeaderMalformed("first line must be `XSAC 1`".into()));
    }
    let mut fields: [Option<String>; 6] = Default::default();
    loop {
        let line = lines
            .next()
            .ok_or_else(|| Error::HeaderMalformed("missing DATA line".into()))?
            .trim();
        if line == "DATA" {
            break;
        }
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::HeaderMalformed(format!("expected key=value, got {line:?}")))?;
        let slot = KEYS
            .iter()
            .position(|k| *k == key.trim())
            .ok_or_else(|| Error::HeaderMalformed(format!("unknown key {key}")))?;
        fields[slot] = Some(value.trim().to_string());
    }
    let field = |i: usize| {
        fields[i]
            .clone()
            .ok_or_else(|| Error::HeaderMalformed(format!("missing {}", KEYS[i])))
    };
    let axis_text = field(2)?;
    let axis = Axis::parse(&axis_text).ok_or_else(|| Error::HeaderMalformed(format!("axis {axis_text}")))?;
    let rate_text = field(3)?;
    let sample_rate_hz = parse_decimal(&rate_text)
        .filter(|r| r.is_finite() && *r > 0.0)
        .ok_or_else(|| Error::HeaderMalformed(format!("sample_rate_hz {rate_text}")))?;
    let start_text = field(4)?;
    let start_time = DateTime::parse_from_rfc3339(&start_text)
        .map_err(|_| Error::HeaderMalformed(format!("start_time {start_text}")))?
        .with_timezone(&Utc);
    let n_text = field(5)?;
    let declared: usize = n_text
        .parse()
        .map_err(|_| Error::HeaderMalformed(format!("n_samples {n_text}")))?;

    let mut samples = Vec::with_capacity(declared);
    for token in lines.flat_map(str::split_whitespace) {
        let v = parse_decimal(token)
            .ok_or_else(|| Error::HeaderMalformed(format!("sample {token:?} is not a decimal")))?;
        samples.push(v);
    }
    if samples.len() != declared {
        return Err(Error::SampleCountMismatch {
            declared,
            found: samples.len(),
        });
    }
    Ok(SignalTrace {
        station_id: field(0)?,
        channel_id: field(1)?,
        axis,
        sample_rate_hz,
        start_time,
        samples,
    })
}

pub fn extract_signal(path: impl AsRef<Path>) -> Result<SignalTrace> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_signal(&text)
}

pub fn write_signal(trace: &SignalTrace) -> String {
    let mut out = String::with_capacity(32 * trace.samples.len() + 200);
    out.push_str(MAGIC);
    out.push('\n');
    out.push_str(&format!("station_id={}\n", trace.station_id));
    out.push_str(&format!("channel_id={}\n", trace.channel_id));
    out.push_str(&format!("axis={}\n", trace.axis.as_str()));
    out.push_str(&format!("sample_rate_hz={}\n", format_decimal(trace.sample_rate_hz)));
    out.push_str(&format!(
        "start_time={}\n",
        trace.start_time.to_rfc3339_opts(chrono::SecondsFormat::AutoSi, true)
    ));
    out.push_str(&format!("n_samples={}\n", trace.samples.len()));
    out.push_str("DATA\n");
    for s in &trace.samples {
        out.push_str(&format_decimal(*s));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn trace(n: usize) -> SignalTrace {
        SignalTrace {
            station_id: "ST01".into(),
            channel_id: "HHZ".into(),
            axis: Axis::Z,
            sample_rate_hz: 100.0,
            start_time: Utc.with_ymd_and_hms(2023, 3, 1, 0, 0, 0).unwrap(),
            samples: (0..n).map(|i| (i as f64 * 0.01).sin()).collect(),
        }
    }

    #[test]
    fn declared_count_matches() {
        let t = parse_signal(&write_signal(&trace(3000))).unwrap();
        assert_eq!(t.samples.len(), 3000);
        assert_eq!(t.station_id, "ST01");
        assert_eq!(t.channel_id, "HHZ");
    }

    #[test]
    fn short_data_is_mismatch() {
        let text = write_signal(&trace(3000)).replace("n_samples=3000", "n_samples=3001");
        assert!(matches!(
            parse_signal(&text),
            Err(Error::SampleCountMismatch { declared: 3001, found: 3000 })
        ));
        let mut text = write_signal(&trace(3000));
        let cut = text.trim_end().rfind('\n').unwrap();
        text.truncate(cut + 1);
        assert!(matches!(
            parse_signal(&text),
            Err(Error::SampleCountMismatch { declared: 3000, found: 2999 })
        ));
    }

    #[test]
    fn whitespace_separated_samples() {
        let text = "XSAC 1\nstation_id=A\nchannel_id=B\naxis=X\nsample_rate_hz=50\nstart_time=2023-01-01T00:00:00Z\nn_samples=4\nDATA\n1 2\n3\t4\n";
        assert_eq!(parse_signal(text).unwrap().samples, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn malformed_headers() {
        assert!(matches!(parse_signal("SAC\n"), Err(Error::HeaderMalformed(_))));
        let no_rate = "XSAC 1\nstation_id=A\nchannel_id=B\naxis=X\nstart_time=2023-01-01T00:00:00Z\nn_samples=0\nDATA\n";
        assert!(matches!(parse_signal(no_rate), Err(Error::HeaderMalformed(_))));
        let zero_rate = no_rate.replace("axis=X\n", "axis=X\nsample_rate_hz=0\n");
        assert!(matches!(parse_signal(&zero_rate), Err(Error::HeaderMalformed(_))));
        let bad_axis = zero_rate.replace("sample_rate_hz=0", "sample_rate_hz=1").replace("axis=X", "axis=W");
        assert!(matches!(parse_signal(&bad_axis), Err(Error::HeaderMalformed(_))));
    }

    proptest::proptest! {
        #[test]
        fn xsac_round_trip(
            samples in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::ZERO, 0..64),
            rate in 0.5f64..1000.0,
            secs in 0i64..2_000_000_000,
        ) {
            let t = SignalTrace {
                station_id: "S9".into(),
                channel_id: "HHN".into(),
                axis: Axis::Y,
                sample_rate_hz: rate,
                start_time: Utc.timestamp_opt(secs, 0).unwrap(),
                samples,
            };
            let back = parse_signal(&write_signal(&t)).unwrap();
            proptest::prop_assert_eq!(back, t);
        }
    }
}
