//! Unit-carrying scalar types used at configuration boundaries.
//!
//! Scenario files and CLI arguments spell physical quantities with an
//! explicit unit ("95 Mbps", "20 ms", "1.5 bdp"). Internally everything
//! is lowered to bits per second and seconds as plain `f64`; these
//! wrappers only exist to parse, validate, and canonically re-emit the
//! textual forms.

use std::fmt;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Error produced when a unit-carrying scalar fails to parse.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct UnitParseError(pub String);

/// Splits "12.5 Mbps" into the numeric value and the unit token.
fn split_number_unit(input: &str) -> Result<(f64, &str), UnitParseError> {
    let s = input.trim();
    if s.is_empty() {
        return Err(UnitParseError("empty quantity".into()));
    }
    let split = s
        .find(|c: char| !(c.is_ascii_digit() || matches!(c, '+' | '-' | '.' | 'e' | 'E')))
        .unwrap_or(s.len());
    let (num, unit) = s.split_at(split);
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| UnitParseError(format!("invalid number in {s:?}")))?;
    if !value.is_finite() {
        return Err(UnitParseError(format!("non-finite value in {s:?}")));
    }
    Ok((value, unit.trim()))
}

/// A bandwidth, canonically bits per second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bandwidth(pub f64);

impl Bandwidth {
    pub fn from_bps(bps: f64) -> Self {
        Bandwidth(bps)
    }

    pub fn bps(&self) -> f64 {
        self.0
    }
}

impl FromStr for Bandwidth {
    type Err = UnitParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (value, unit) = split_number_unit(s)?;
        let scale = match unit.to_ascii_lowercase().as_str() {
            "bps" => 1.0,
            "kbps" => 1e3,
            "mbps" => 1e6,
            "gbps" => 1e9,
            "" => return Err(UnitParseError(format!("missing bandwidth unit in {s:?}"))),
            other => return Err(UnitParseError(format!("unknown bandwidth unit {other:?}"))),
        };
        if value < 0.0 {
            return Err(UnitParseError(format!("negative bandwidth {s:?}")));
        }
        Ok(Bandwidth(value * scale))
    }
}

impl fmt::Display for Bandwidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} bps", self.0)
    }
}

/// A span of time, canonically seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeSpan(pub f64);

impl TimeSpan {
    pub fn from_secs(secs: f64) -> Self {
        TimeSpan(secs)
    }

    pub fn secs(&self) -> f64 {
        self.0
    }
}

impl FromStr for TimeSpan {
    type Err = UnitParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (value, unit) = split_number_unit(s)?;
        let scale = match unit.to_ascii_lowercase().as_str() {
            "s" => 1.0,
            "ms" => 1e-3,
            "us" => 1e-6,
            "min" => 60.0,
            "" => return Err(UnitParseError(format!("missing time unit in {s:?}"))),
            other => return Err(UnitParseError(format!("unknown time unit {other:?}"))),
        };
        if value < 0.0 {
            return Err(UnitParseError(format!("negative time span {s:?}")));
        }
        Ok(TimeSpan(value * scale))
    }
}

impl fmt::Display for TimeSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} s", self.0)
    }
}

/// A bottleneck buffer size: either absolute bits or a multiple of the
/// bandwidth-delay product (resolved against the first capacity segment
/// and the base RTT).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BufferSpec {
    Bits(f64),
    Bdp(f64),
}

impl BufferSpec {
    /// Resolves to bits against the given capacity and base RTT.
    pub fn resolve(&self, capacity_bps: f64, base_rtt_s: f64) -> f64 {
        match *self {
            BufferSpec::Bits(bits) => bits,
            BufferSpec::Bdp(mult) => mult * capacity_bps * base_rtt_s,
        }
    }

    pub fn raw_value(&self) -> f64 {
        match *self {
            BufferSpec::Bits(v) | BufferSpec::Bdp(v) => v,
        }
    }
}

impl FromStr for BufferSpec {
    type Err = UnitParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (value, unit) = split_number_unit(s)?;
        if value < 0.0 {
            return Err(UnitParseError(format!("negative buffer size {s:?}")));
        }
        match unit {
            "bit" | "bits" => Ok(BufferSpec::Bits(value)),
            "B" => Ok(BufferSpec::Bits(value * 8.0)),
            "KB" => Ok(BufferSpec::Bits(value * 8e3)),
            "MB" => Ok(BufferSpec::Bits(value * 8e6)),
            other if other.eq_ignore_ascii_case("bdp") => Ok(BufferSpec::Bdp(value)),
            "" => Err(UnitParseError(format!("missing buffer unit in {s:?}"))),
            other => Err(UnitParseError(format!("unknown buffer unit {other:?}"))),
        }
    }
}

impl fmt::Display for BufferSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            BufferSpec::Bits(v) => write!(f, "{v} bit"),
            BufferSpec::Bdp(v) => write!(f, "{v} bdp"),
        }
    }
}

macro_rules! string_serde {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let s = String::deserialize(deserializer)?;
                s.parse().map_err(|e: UnitParseError| D::Error::custom(e.0))
            }
        }
    };
}

string_serde!(Bandwidth);
string_serde!(TimeSpan);
string_serde!(BufferSpec);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bandwidth_units_scale() {
        assert_eq!("5 Kbps".parse::<Bandwidth>().unwrap().bps(), 5e3);
        assert_eq!("95 Mbps".parse::<Bandwidth>().unwrap().bps(), 95e6);
        assert_eq!("1.5 Gbps".parse::<Bandwidth>().unwrap().bps(), 1.5e9);
        assert_eq!("120bps".parse::<Bandwidth>().unwrap().bps(), 120.0);
    }

    #[test]
    fn bandwidth_rejects_junk() {
        assert!("".parse::<Bandwidth>().is_err());
        assert!("95".parse::<Bandwidth>().is_err());
        assert!("fast".parse::<Bandwidth>().is_err());
        assert!("-3 Mbps".parse::<Bandwidth>().is_err());
        assert!("1e1000 Mbps".parse::<Bandwidth>().is_err());
    }

    #[test]
    fn time_units_scale() {
        assert_eq!("20 ms".parse::<TimeSpan>().unwrap().secs(), 0.02);
        assert_eq!("30 s".parse::<TimeSpan>().unwrap().secs(), 30.0);
        assert_eq!("2 min".parse::<TimeSpan>().unwrap().secs(), 120.0);
    }

    #[test]
    fn buffer_forms_resolve() {
        let bdp = "2 bdp".parse::<BufferSpec>().unwrap();
        assert_eq!(bdp.resolve(95e6, 0.02), 2.0 * 95e6 * 0.02);
        let abs = "150 KB".parse::<BufferSpec>().unwrap();
        assert_eq!(abs.resolve(95e6, 0.02), 150.0 * 8e3);
    }

    #[test]
    fn display_round_trips() {
        for text in ["95 Mbps", "10 Kbps", "1 Gbps", "123.456 bps"] {
            let b: Bandwidth = text.parse().unwrap();
            let again: Bandwidth = b.to_string().parse().unwrap();
            assert_eq!(b, again);
        }
        let t: TimeSpan = "17.3 ms".parse().unwrap();
        assert_eq!(t, t.to_string().parse::<TimeSpan>().unwrap());
        let s: BufferSpec = "0.5 bdp".parse().unwrap();
        assert_eq!(s, s.to_string().parse::<BufferSpec>().unwrap());
    }
}
