//! Quantities with explicit unit suffixes, normalized to SI.

use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// Seconds.
    Time,
    /// Hz.
    Frequency,
    /// rad/s. Hz-family units are taken as cycles per second and multiplied
    /// by 2π.
    Angular,
    /// 1/s.
    Rate,
    /// Tesla.
    Field,
    /// Kelvin.
    Temperature,
    /// Radians.
    Angle,
    /// Hz per Tesla.
    GFactor,
}

impl Kind {
    pub fn example(self) -> &'static str {
        match self {
            Kind::Time => "\"2us\"",
            Kind::Frequency => "\"170kHz\"",
            Kind::Angular => "\"1MHz\" or \"6.28e6rad/s\"",
            Kind::Rate => "\"2000/s\"",
            Kind::Field => "\"50uT\"",
            Kind::Temperature => "\"6K\"",
            Kind::Angle => "\"90deg\", \"pi\" or \"1.57rad\"",
            Kind::GFactor => "\"12kHz/100uT\"",
        }
    }
}

fn time_unit(u: &str) -> Option<f64> {
    Some(match u {
        "s" => 1.0,
        "ms" => 1e-3,
        "us" | "µs" | "μs" => 1e-6,
        "ns" => 1e-9,
        "ps" => 1e-12,
        _ => return None,
    })
}

fn frequency_unit(u: &str) -> Option<f64> {
    Some(match u {
        "Hz" => 1.0,
        "kHz" => 1e3,
        "MHz" => 1e6,
        "GHz" => 1e9,
        _ => return None,
    })
}

fn field_unit(u: &str) -> Option<f64> {
    Some(match u {
        "T" => 1.0,
        "mT" => 1e-3,
        "uT" | "µT" | "μT" => 1e-6,
        "nT" => 1e-9,
        "G" => 1e-4,
        _ => return None,
    })
}

/// Splits `"12.5kHz"` into `(12.5, "kHz")` using the longest numeric prefix.
fn split_number(s: &str) -> Option<(f64, &str)> {
    let s = s.trim();
    let mut cut = None;
    for (i, _) in s
        .char_indices()
        .skip(1)
        .chain(std::iter::once((s.len(), ' ')))
    {
        if s[..i].parse::<f64>().is_ok() {
            cut = Some(i);
        }
    }
    cut.map(|i| (s[..i].parse().unwrap(), s[i..].trim()))
}

/// `"pi"`, `"2pi"`, `"0.5pi"`.
fn pi_multiple(s: &str) -> Option<f64> {
    let head = s.trim().strip_suffix("pi")?.trim_end_matches('*').trim();
    if head.is_empty() {
        Some(PI)
    } else {
        head.parse::<f64>().ok().map(|k| k * PI)
    }
}

pub fn parse_str(s: &str, kind: Kind) -> Result<f64, String> {
    if kind == Kind::Angle {
        if let Some(v) = pi_multiple(s) {
            return Ok(v);
        }
    }
    let (value, unit) = split_number(s).ok_or_else(|| {
        format!(
            "cannot read {s:?} as a quantity, expected e.g. {}",
            kind.example()
        )
    })?;
    if value.is_infinite() && unit.is_empty() {
        return Ok(value);
    }
    let factor = match kind {
        Kind::Time => time_unit(unit),
        Kind::Frequency => frequency_unit(unit),
        Kind::Angular => match unit {
            "rad/s" => Some(1.0),
            "krad/s" => Some(1e3),
            "Mrad/s" => Some(1e6),
            u => frequency_unit(u).map(|f| 2.0 * PI * f),
        },
        Kind::Rate => match unit {
            "/s" | "1/s" | "s^-1" => Some(1.0),
            u => u
                .strip_prefix("1/")
                .or_else(|| u.strip_prefix('/'))
                .and_then(time_unit)
                .map(|t| 1.0 / t),
        },
        Kind::Field => field_unit(unit),
        Kind::Temperature => match unit {
            "K" => Some(1.0),
            "mK" => Some(1e-3),
            _ => None,
        },
        Kind::Angle => match unit {
            "rad" => Some(1.0),
            "mrad" => Some(1e-3),
            "deg" | "°" => Some(PI / 180.0),
            _ => None,
        },
        Kind::GFactor => unit.split_once('/').and_then(|(num, den)| {
            let f = frequency_unit(num.trim())?;
            let den = den.trim();
            let b = field_unit(den).or_else(|| {
                let (k, u) = split_number(den)?;
                field_unit(u).map(|f| k * f)
            })?;
            Some(f / b)
        }),
    };
    match factor {
        Some(f) => Ok(value * f),
        None if unit.is_empty() => Err(format!("{s:?} needs a unit, e.g. {}", kind.example())),
        None => Err(format!(
            "unknown unit {unit:?} in {s:?}, expected e.g. {}",
            kind.example()
        )),
    }
}

pub fn parse(v: &toml::Value, kind: Kind) -> Result<f64, String> {
    match v {
        toml::Value::String(s) => parse_str(s, kind),
        toml::Value::Integer(0) => Ok(0.0),
        toml::Value::Float(f) if *f == 0.0 => Ok(0.0),
        _ => Err(format!(
            "expected a quantity string such as {}",
            kind.example()
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs().max(1e-30)
    }

    #[test]
    fn suffixes_normalize_to_si() {
        assert!(close(parse_str("2us", Kind::Time).unwrap(), 2e-6));
        assert!(close(parse_str("2 µs", Kind::Time).unwrap(), 2e-6));
        assert!(close(parse_str("1e-3s", Kind::Time).unwrap(), 1e-3));
        assert!(close(parse_str("170kHz", Kind::Frequency).unwrap(), 170e3));
        assert!(close(
            parse_str("10.2MHz", Kind::Frequency).unwrap(),
            10.2e6
        ));
        assert!(close(parse_str("50uT", Kind::Field).unwrap(), 50e-6));
        assert!(close(parse_str("-45uT", Kind::Field).unwrap(), -45e-6));
        assert!(close(parse_str("6K", Kind::Temperature).unwrap(), 6.0));
        assert!(close(
            parse_str("1MHz", Kind::Angular).unwrap(),
            2.0 * PI * 1e6
        ));
        assert!(close(parse_str("3rad/s", Kind::Angular).unwrap(), 3.0));
        assert!(close(parse_str("2000/s", Kind::Rate).unwrap(), 2000.0));
        assert!(close(parse_str("2/ms", Kind::Rate).unwrap(), 2000.0));
        assert!(close(parse_str("90deg", Kind::Angle).unwrap(), PI / 2.0));
        assert!(close(parse_str("2pi", Kind::Angle).unwrap(), 2.0 * PI));
        assert!(close(parse_str("pi", Kind::Angle).unwrap(), PI));
        assert!(close(
            parse_str("12kHz/100uT", Kind::GFactor).unwrap(),
            1.2e8
        ));
        assert!(close(parse_str("1.2e8Hz/T", Kind::GFactor).unwrap(), 1.2e8));
        assert_eq!(parse_str("inf", Kind::Time).unwrap(), f64::INFINITY);
    }

    #[test]
    fn missing_or_wrong_units_are_rejected() {
        assert!(parse_str("2", Kind::Time)
            .unwrap_err()
            .contains("needs a unit"));
        assert!(parse_str("2kHz", Kind::Time)
            .unwrap_err()
            .contains("unknown unit"));
        assert!(parse_str("fast", Kind::Time).is_err());
        assert!(parse(&toml::Value::Float(2.0), Kind::Time).is_err());
        assert_eq!(parse(&toml::Value::Integer(0), Kind::Field).unwrap(), 0.0);
    }
}
