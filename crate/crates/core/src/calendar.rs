//! Local-time helpers. Timestamps are UTC seconds; days and clock times are
//! interpreted in the study timezone.

use chrono::{DateTime, Duration, LocalResult, NaiveDate, NaiveDateTime, NaiveTime, TimeZone};
use chrono_tz::Tz;

use crate::error::{Error, Result};

pub fn parse_timezone(name: &str) -> Result<Tz> {
    name.parse::<Tz>().map_err(|_| Error::Timezone(name.to_string()))
}

pub fn local_date(tz: Tz, ts: i64) -> NaiveDate {
    utc(ts).with_timezone(&tz).date_naive()
}

/// UTC timestamp of `offset_s` seconds after local midnight of `date`.
/// Offsets past 86 400 roll into following days. Nonexistent local times
/// (DST gaps) resolve to the first valid instant after the gap.
pub fn local_instant(tz: Tz, date: NaiveDate, offset_s: i64) -> i64 {
    let days = offset_s.div_euclid(86_400);
    let secs = offset_s.rem_euclid(86_400) as u32;
    let date = date + Duration::days(days);
    let naive = NaiveDateTime::new(
        date,
        NaiveTime::from_num_seconds_from_midnight_opt(secs, 0).expect("seconds in range"),
    );
    resolve(tz, naive)
}

pub fn day_start(tz: Tz, date: NaiveDate) -> i64 {
    local_instant(tz, date, 0)
}

fn resolve(tz: Tz, naive: NaiveDateTime) -> i64 {
    match tz.from_local_datetime(&naive) {
        LocalResult::Single(t) => t.timestamp(),
        LocalResult::Ambiguous(a, b) => a.timestamp().min(b.timestamp()),
        LocalResult::None => {
            let mut probe = naive;
            loop {
                probe += Duration::minutes(1);
                if let Some(t) = tz.from_local_datetime(&probe).earliest() {
                    return t.timestamp();
                }
            }
        }
    }
}

fn utc(ts: i64) -> DateTime<chrono::Utc> {
    DateTime::from_timestamp(ts, 0).unwrap_or(DateTime::<chrono::Utc>::MIN_UTC)
}

/// Parses `HH:MM` into seconds after midnight.
pub fn parse_clock(s: &str) -> Result<i64> {
    let t = NaiveTime::parse_from_str(s, "%H:%M")
        .map_err(|_| Error::Invalid(format!("bad clock time {s:?}, expected HH:MM")))?;
    Ok(i64::from(chrono::Timelike::num_seconds_from_midnight(&t)))
}
