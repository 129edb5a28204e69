use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Numerators and denominators behind every metric.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Tally {
    pub true_extractions: u64,
    pub total_potential_extractions: u64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub correctly_consolidated: u64,
    pub total_consolidated: u64,
    pub correct_connections: u64,
    pub total_connections: u64,
    /// Extracted values equal to the ground-truth string without normalization.
    pub exact_value_matches: u64,
    pub artifacts_matching_context: u64,
    pub artifacts_with_intact_custody: u64,
    pub total_artifacts: u64,
}

/// A percentage in hundredths (9524 is 95.24%), or undefined when the
/// denominator is empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Metric(pub Option<u64>);

impl Metric {
    pub const UNDEFINED: Metric = Metric(None);

    /// `num/den` as a percentage rounded half-up to two decimals.
    pub fn ratio(num: u64, den: u64) -> Metric {
        if den == 0 {
            return Metric::UNDEFINED;
        }
        let (num, den) = (num as u128, den as u128);
        Metric(Some(((2 * num * 10_000 + den) / (2 * den)) as u64))
    }

    pub fn hundredths(self) -> Option<u64> {
        self.0
    }

    pub fn percent(self) -> Option<f64> {
        self.0.map(|h| h as f64 / 100.0)
    }

    pub fn is_defined(self) -> bool {
        self.0.is_some()
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.0 {
            Some(h) => write!(f, "{}.{:02}", h / 100, h % 100),
            None => f.write_str("undefined"),
        }
    }
}

impl Serialize for Metric {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.percent() {
            Some(p) => s.serialize_f64(p),
            None => s.serialize_str("undefined"),
        }
    }
}

impl<'de> Deserialize<'de> for Metric {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::String(s) if s == "undefined" => Ok(Metric::UNDEFINED),
            serde_json::Value::Number(n) => n
                .as_f64()
                .map(|p| Metric(Some((p * 100.0).round() as u64)))
                .ok_or_else(|| serde::de::Error::custom("metric out of range")),
            other => Err(serde::de::Error::custom(format!("invalid metric {other}"))),
        }
    }
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Metrics {
    pub EEA: Metric,
    pub ECA: Metric,
    pub KGCA: Metric,
    pub FAP: Metric,
    pub FAR: Metric,
    pub FAF1: Metric,
    pub AIS: Metric,
    pub CCA: Metric,
    pub CCS: Metric,
}

impl Metrics {
    pub fn named(&self) -> [(&'static str, Metric); 9] {
        [
            ("EEA", self.EEA),
            ("ECA", self.ECA),
            ("KGCA", self.KGCA),
            ("FAP", self.FAP),
            ("FAR", self.FAR),
            ("FAF1", self.FAF1),
            ("AIS", self.AIS),
            ("CCA", self.CCA),
            ("CCS", self.CCS),
        ]
    }
}

/// Pure; any metric whose denominator is empty is undefined.
///
/// FAF1 is evaluated exactly as `2tp / (2tp + fp + fn)`, the harmonic mean
/// of the unrounded precision and recall, and is undefined when either of
/// them is or when both are zero.
pub fn compute_metrics(t: &Tally) -> Metrics {
    let precision_den = t.tp + t.fp;
    let recall_den = t.tp + t.fn_;
    let faf1 = if precision_den == 0 || recall_den == 0 || t.tp == 0 {
        Metric::UNDEFINED
    } else {
        Metric::ratio(2 * t.tp, 2 * t.tp + t.fp + t.fn_)
    };
    Metrics {
        EEA: Metric::ratio(t.true_extractions, t.total_potential_extractions),
        ECA: Metric::ratio(t.correctly_consolidated, t.total_consolidated),
        KGCA: Metric::ratio(t.correct_connections, t.total_connections),
        FAP: Metric::ratio(t.tp, precision_den),
        FAR: Metric::ratio(t.tp, recall_den),
        FAF1: faf1,
        AIS: Metric::ratio(t.exact_value_matches, t.total_potential_extractions),
        CCA: Metric::ratio(t.artifacts_with_intact_custody, t.total_artifacts),
        CCS: Metric::ratio(t.artifacts_matching_context, t.tp),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_up_rounding() {
        assert_eq!(Metric::ratio(1, 3).to_string(), "33.33");
        assert_eq!(Metric::ratio(2, 3).to_string(), "66.67");
        // 1/8 = 12.5% exactly, 1/16 = 6.25%, 1/32 = 3.125% rounds up
        assert_eq!(Metric::ratio(1, 32).to_string(), "3.13");
        assert_eq!(Metric::ratio(0, 5).to_string(), "0.00");
        assert_eq!(Metric::ratio(5, 5).to_string(), "100.00");
        assert_eq!(Metric::ratio(1, 0), Metric::UNDEFINED);
    }

    #[test]
    fn all_correct_tally() {
        let t = Tally {
            true_extractions: 7,
            total_potential_extractions: 7,
            tp: 7,
            fp: 0,
            fn_: 0,
            correctly_consolidated: 3,
            total_consolidated: 3,
            correct_connections: 4,
            total_connections: 4,
            exact_value_matches: 7,
            artifacts_matching_context: 7,
            artifacts_with_intact_custody: 7,
            total_artifacts: 7,
        };
        for (name, m) in compute_metrics(&t).named() {
            assert_eq!(m.hundredths(), Some(10_000), "{name}");
        }
    }

    #[test]
    fn empty_tally_is_undefined_not_zero() {
        for (name, m) in compute_metrics(&Tally::default()).named() {
            assert!(!m.is_defined(), "{name}");
        }
    }

    #[test]
    fn serialization() {
        let json = serde_json::to_string(&[Metric::ratio(40, 42), Metric::ratio(1, 1), Metric::UNDEFINED]).unwrap();
        assert_eq!(json, "[95.24,100.0,\"undefined\"]");
        let back: Vec<Metric> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, [Metric(Some(9524)), Metric(Some(10_000)), Metric::UNDEFINED]);
        let t = serde_json::to_value(Tally::default()).unwrap();
        assert!(t.get("fn").is_some());
    }
}
