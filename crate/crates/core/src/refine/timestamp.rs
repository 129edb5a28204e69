use chrono::{DateTime, TimeZone, Utc};
use chrono_tz::Tz;

use super::RefineError;

/// Zone used when none is configured (all reference renderings are EDT).
pub const DEFAULT_ZONE: &str = "America/New_York";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpochUnit {
    Millis,
    Seconds,
}

/// Renders an epoch as `DD Month YYYY HH:MM:SS` (24-hour, English months)
/// in `zone`. Sub-second precision is truncated.
pub fn normalize_timestamp(epoch: i64, unit: EpochUnit, zone: &str) -> Result<String, RefineError> {
    let tz: Tz = zone.parse().map_err(|_| RefineError::UnknownZone(zone.to_string()))?;
    let utc: DateTime<Utc> = match unit {
        EpochUnit::Millis => DateTime::from_timestamp_millis(epoch),
        EpochUnit::Seconds => DateTime::from_timestamp(epoch, 0),
    }
    .ok_or(RefineError::OutOfRangeEpoch(epoch))?;
    Ok(tz
        .from_utc_datetime(&utc.naive_utc())
        .format("%d %B %Y %H:%M:%S")
        .to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_one_timestamp() {
        assert_eq!(
            normalize_timestamp(1617477858090, EpochUnit::Millis, "America/New_York").unwrap(),
            "03 April 2021 15:24:18"
        );
    }

    #[test]
    fn epoch_origin() {
        assert_eq!(
            normalize_timestamp(0, EpochUnit::Millis, "UTC").unwrap(),
            "01 January 1970 00:00:00"
        );
    }

    #[test]
    fn seconds_unit_matches_external_converter() {
        // python3: datetime.fromtimestamp(1626000000, timezone.utc) -> 2021-07-11 10:40:00+00:00
        assert_eq!(
            normalize_timestamp(1626000000, EpochUnit::Seconds, "UTC").unwrap(),
            "11 July 2021 10:40:00"
        );
    }

    #[test]
    fn errors() {
        assert!(matches!(
            normalize_timestamp(i64::MAX, EpochUnit::Seconds, "UTC"),
            Err(RefineError::OutOfRangeEpoch(_))
        ));
        assert!(matches!(
            normalize_timestamp(0, EpochUnit::Seconds, "Mars/Olympus"),
            Err(RefineError::UnknownZone(_))
        ));
    }
}
