use std::sync::OnceLock;

use chrono::NaiveDate;
use regex::{Captures, Regex};

use crate::model::{Attribute, Entity, Segment};

use super::{leftmost_longest, sub_segment, CharOffsets, OpError};

const MONTHS: [&str; 12] = [
    "janvier", "fevrier", "mars", "avril", "mai", "juin", "juillet", "aout", "septembre", "octobre",
    "novembre", "decembre",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Layout {
    DayMonthYear,
    YearMonthDay,
    MonthName,
}

/// Bundled date patterns: `dd/mm/yyyy`, `dd-mm-yyyy`, `yyyy-mm-dd` and
/// French dates such as `12 mars 1980` or `1er août 2020`.
#[derive(Debug, Clone)]
pub struct DateMatcher {
    rules: Vec<(Regex, Layout)>,
}

impl Default for DateMatcher {
    fn default() -> Self {
        let month_alt = r"janvier|f[ée]vrier|mars|avril|mai|juin|juillet|ao[ûu]t|septembre|octobre|novembre|d[ée]cembre";
        let rules = [
            (r"\b(\d{1,2})/(\d{1,2})/(\d{4})\b".to_string(), Layout::DayMonthYear),
            (r"\b(\d{1,2})-(\d{1,2})-(\d{4})\b".to_string(), Layout::DayMonthYear),
            (r"\b(\d{4})-(\d{1,2})-(\d{1,2})\b".to_string(), Layout::YearMonthDay),
            (format!(r"(?i)\b(1er|\d{{1,2}})\s+({month_alt})\s+(\d{{4}})\b"), Layout::MonthName),
        ];
        Self {
            rules: rules
                .into_iter()
                .map(|(p, l)| (Regex::new(&p).expect("bundled date pattern"), l))
                .collect(),
        }
    }
}

fn month_number(name: &str) -> Option<u32> {
    let folded = super::fold::fold(name, true, true);
    MONTHS.iter().position(|m| *m == folded).map(|i| i as u32 + 1)
}

fn normalize(caps: &Captures, layout: Layout) -> Option<String> {
    let num = |i: usize| caps[i].parse::<u32>().ok();
    let (y, m, d) = match layout {
        Layout::DayMonthYear => (num(3)?, num(2)?, num(1)?),
        Layout::YearMonthDay => (num(1)?, num(2)?, num(3)?),
        Layout::MonthName => {
            let day = if caps[1].eq_ignore_ascii_case("1er") { 1 } else { num(1)? };
            (num(3)?, month_number(&caps[2])?, day)
        }
    };
    let date = NaiveDate::from_ymd_opt(i32::try_from(y).ok()?, m, d)?;
    Some(date.format("%Y-%m-%d").to_string())
}

impl DateMatcher {
    pub fn apply(&self, seg: &Segment) -> Result<Vec<Entity>, OpError> {
        let offsets = CharOffsets::new(&seg.text);
        let mut cands = Vec::new();
        let mut found = Vec::new();
        for (re, layout) in &self.rules {
            for caps in re.captures_iter(&seg.text) {
                let m = caps.get(0).expect("whole match");
                cands.push((offsets.range(m.range()), found.len()));
                found.push(normalize(&caps, *layout));
            }
        }
        leftmost_longest(cands)
            .into_iter()
            .map(|(r, i)| {
                let mut ent = sub_segment(seg, r, "date")?;
                if let Some(iso) = found[i].take() {
                    ent.add_attribute(Attribute::new("normalized", iso))?;
                }
                Ok(ent)
            })
            .collect()
    }
}

pub fn match_dates(seg: &Segment) -> Result<Vec<Entity>, OpError> {
    static MATCHER: OnceLock<DateMatcher> = OnceLock::new();
    MATCHER.get_or_init(DateMatcher::default).apply(seg)
}
