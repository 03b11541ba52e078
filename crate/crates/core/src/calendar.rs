//! Trading-calendar helpers shared by the refit scheduler and the backtester.

use chrono::{Datelike, NaiveDate, Weekday};

/// True when `cur` opens a new calendar month relative to `prev`.
pub fn month_boundary(prev: NaiveDate, cur: NaiveDate) -> bool {
    prev.year() != cur.year() || prev.month() != cur.month()
}

/// True when `cur` opens a new calendar quarter relative to `prev`.
pub fn quarter_boundary(prev: NaiveDate, cur: NaiveDate) -> bool {
    let q = |d: NaiveDate| (d.month0()) / 3;
    prev.year() != cur.year() || q(prev) != q(cur)
}

/// Indices of the first trading day of each month within `dates`.
///
/// Index 0 is never included; the caller decides how to treat the start of
/// the span.
pub fn month_first_indices(dates: &[NaiveDate]) -> Vec<usize> {
    dates
        .windows(2)
        .enumerate()
        .filter(|(_, w)| month_boundary(w[0], w[1]))
        .map(|(i, _)| i + 1)
        .collect()
}

/// Generate a synthetic weekday calendar of `n` days starting at `start`.
pub fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("date overflow");
    }
    out
}

/// Walk `months` calendar months forward from `date` (clamping the day).
pub fn add_months(date: NaiveDate, months: u32) -> NaiveDate {
    let total = date.month0() + months;
    let year = date.year() + (total / 12) as i32;
    let month = total % 12 + 1;
    let mut day = date.day();
    loop {
        if let Some(d) = NaiveDate::from_ymd_opt(year, month, day) {
            return d;
        }
        day -= 1;
    }
}
