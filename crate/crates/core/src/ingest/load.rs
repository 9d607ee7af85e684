use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use csv::StringRecord;

use super::{
    CovariateValue, Cohort, EarlyWindowSummary, EnrollmentRecord, PersonPeriodPanel,
    WeeklyActivityRow, STATIC_CATEGORICAL, STATIC_NUMERIC,
};
use crate::error::{Error, Result};

/// Maps canonical column names onto the headers of a particular source file.
///
/// The enrollment key may span several source columns (raw OULAD identifies an
/// enrollment by module, presentation and student); their values are joined
/// with `|`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMap {
    pub enrollment_key: Vec<String>,
    pub renames: BTreeMap<String, String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            enrollment_key: vec!["enrollment_id".into()],
            renames: BTreeMap::new(),
        }
    }
}

impl ColumnMap {
    /// Column layout of the raw OULAD `studentVle` / `studentInfo` files.
    pub fn oulad() -> Self {
        let renames = [
            ("module_id", "code_module"),
            ("presentation_id", "code_presentation"),
        ]
        .into_iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
        Self {
            enrollment_key: vec![
                "code_module".into(),
                "code_presentation".into(),
                "id_student".into(),
            ],
            renames,
        }
    }

    fn source<'a>(&'a self, canonical: &'a str) -> &'a str {
        self.renames.get(canonical).map(String::as_str).unwrap_or(canonical)
    }
}

struct Header {
    table: String,
    index: HashMap<String, usize>,
}

impl Header {
    fn new(table: &str, record: &StringRecord) -> Self {
        let index = record
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim().trim_start_matches('\u{feff}').to_string(), i))
            .collect();
        Self {
            table: table.to_string(),
            index,
        }
    }

    fn has(&self, col: &str) -> bool {
        self.index.contains_key(col)
    }

    fn require(&self, col: &str) -> Result<usize> {
        self.index
            .get(col)
            .copied()
            .ok_or_else(|| Error::missing_column(&self.table, col))
    }

    fn key(&self, map: &ColumnMap) -> Result<Vec<usize>> {
        map.enrollment_key.iter().map(|c| self.require(c)).collect()
    }
}

fn key_of(record: &StringRecord, key: &[usize]) -> String {
    key.iter()
        .map(|&i| record.get(i).unwrap_or("").trim())
        .collect::<Vec<_>>()
        .join("|")
}

fn cell(record: &StringRecord, i: usize) -> &str {
    record.get(i).unwrap_or("").trim()
}

fn is_missing(raw: &str) -> bool {
    matches!(raw, "" | "?" | "NA" | "NaN" | "nan" | "null")
}

fn parse_int(raw: &str, row: usize, column: &str) -> Result<i64> {
    raw.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite() && x.fract() == 0.0)
        .map(|x| x as i64)
        .ok_or_else(|| Error::Data {
            row,
            message: format!("column `{column}` value `{raw}` is not an integer"),
        })
}

fn parse_count(raw: &str, row: usize, column: &str) -> Result<u64> {
    let v = parse_int(raw, row, column)?;
    if v < 0 {
        return Err(Error::Data {
            row,
            message: format!("negative count {v} in column `{column}`"),
        });
    }
    Ok(v as u64)
}

fn parse_event(raw: &str, row: usize) -> Result<bool> {
    match raw {
        "1" | "true" | "True" | "TRUE" => Ok(true),
        "0" | "false" | "False" | "FALSE" => Ok(false),
        other => Err(Error::Data {
            row,
            message: format!("event flag `{other}` is not binary"),
        }),
    }
}

/// Week index of a day offset: `floor(day / 7)`, with pre-start days clamped to week 0.
pub fn week_of_day(day: i64) -> u32 {
    if day < 0 {
        0
    } else {
        (day / 7) as u32
    }
}

fn static_covariates(
    record: &StringRecord,
    header: &Header,
    map: &ColumnMap,
    row: usize,
) -> Result<BTreeMap<String, CovariateValue>> {
    let mut out = BTreeMap::new();
    for name in STATIC_CATEGORICAL {
        let raw = cell(record, header.require(map.source(name))?);
        let v = if is_missing(raw) {
            CovariateValue::Missing
        } else {
            CovariateValue::Categorical(raw.to_string())
        };
        out.insert(name.to_string(), v);
    }
    for name in STATIC_NUMERIC {
        let raw = cell(record, header.require(map.source(name))?);
        let v = if is_missing(raw) {
            CovariateValue::Missing
        } else {
            let x: f64 = raw.parse().map_err(|_| Error::Data {
                row,
                message: format!("column `{name}` value `{raw}` is not numeric"),
            })?;
            CovariateValue::Numeric(x)
        };
        out.insert(name.to_string(), v);
    }
    Ok(out)
}

/// Reads the canonical enrollment table.
pub fn load_enrollments<R: Read>(reader: R, map: &ColumnMap) -> Result<Vec<EnrollmentRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = Header::new("enrollment table", rdr.headers()?);
    let key = header.key(map)?;
    let module = header.require(map.source("module_id"))?;
    let presentation = header.require(map.source("presentation_id"))?;
    let time = header.require(map.source("observed_time_weeks"))?;
    let event = header.require(map.source("event"))?;

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let id = key_of(&rec, &key);
        if !seen.insert(id.clone()) {
            return Err(Error::Data {
                row,
                message: format!("duplicate enrollment id `{id}`"),
            });
        }
        let t = parse_int(cell(&rec, time), row, "observed_time_weeks")?;
        if t < 0 {
            return Err(Error::Data {
                row,
                message: format!("negative observed time {t}"),
            });
        }
        out.push(EnrollmentRecord {
            enrollment_id: id,
            module_id: cell(&rec, module).to_string(),
            presentation_id: cell(&rec, presentation).to_string(),
            observed_time_weeks: t as u32,
            event: parse_event(cell(&rec, event), row)?,
            static_covariates: static_covariates(&rec, &header, map, row)?,
        });
    }
    Ok(out)
}

#[derive(Default)]
struct WeekAccumulator {
    clicks: u64,
    rows: u64,
    sites: BTreeSet<String>,
}

/// Reads weekly activity, either already aggregated (a `week` column) or as a
/// raw day-level log (`date`, `id_site`, `sum_click`) that is aggregated here.
pub fn load_activity<R: Read>(reader: R, map: &ColumnMap) -> Result<Vec<WeeklyActivityRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = Header::new("activity table", rdr.headers()?);
    let key = header.key(map)?;

    if header.has(map.source("week")) {
        let week = header.require(map.source("week"))?;
        let clicks = header.require(map.source("total_clicks_week"))?;
        let rows = header.require(map.source("n_vle_rows_week"))?;
        let sites = header.require(map.source("n_distinct_sites_week"))?;
        let mut seen = BTreeMap::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let id = key_of(&rec, &key);
            let w = parse_int(cell(&rec, week), row, "week")?;
            if w < 0 {
                return Err(Error::Data {
                    row,
                    message: format!("negative week {w}"),
                });
            }
            let r = WeeklyActivityRow::new(
                id,
                w as u32,
                parse_count(cell(&rec, clicks), row, "total_clicks_week")?,
                parse_count(cell(&rec, rows), row, "n_vle_rows_week")?,
                parse_count(cell(&rec, sites), row, "n_distinct_sites_week")?,
            );
            let k = (r.enrollment_id.clone(), r.week);
            if seen.insert(k.clone(), r).is_some() {
                return Err(Error::Internal(format!(
                    "duplicate (enrollment, week) = ({}, {}) after aggregation",
                    k.0, k.1
                )));
            }
        }
        return Ok(seen.into_values().collect());
    }

    let date = header.require(map.source("date"))?;
    let site = header.require(map.source("id_site"))?;
    let clicks = header.require(map.source("sum_click"))?;
    let mut acc: BTreeMap<(String, u32), WeekAccumulator> = BTreeMap::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let day = parse_int(cell(&rec, date), row, "date")?;
        let c = parse_count(cell(&rec, clicks), row, "sum_click")?;
        let e = acc.entry((key_of(&rec, &key), week_of_day(day))).or_default();
        e.clicks += c;
        e.rows += 1;
        e.sites.insert(cell(&rec, site).to_string());
    }
    Ok(acc
        .into_iter()
        .map(|((id, week), a)| WeeklyActivityRow::new(id, week, a.clicks, a.rows, a.sites.len() as u64))
        .collect())
}

/// Loads the canonical two-table layout from disk. Activity rows whose
/// enrollment is unknown are dropped with a logged count.
pub fn load_cohort(enrollment_table: &Path, activity_table: &Path, map: &ColumnMap) -> Result<Cohort> {
    let records = load_enrollments(open(enrollment_table)?, map)?;
    let activity = load_activity(open(activity_table)?, map)?;
    Ok(attach(records, activity))
}

fn attach(records: Vec<EnrollmentRecord>, activity: Vec<WeeklyActivityRow>) -> Cohort {
    let known: HashSet<&str> = records.iter().map(|r| r.enrollment_id.as_str()).collect();
    let before = activity.len();
    let activity: Vec<_> = activity
        .into_iter()
        .filter(|a| known.contains(a.enrollment_id.as_str()))
        .collect();
    if activity.len() < before {
        log::warn!(
            "dropped {} activity rows with no matching enrollment",
            before - activity.len()
        );
    }
    Cohort { records, activity }
}

/// Outcome of reading the raw OULAD files, with counts of enrollments whose
/// withdrawal could not be dated.
#[derive(Debug, Clone)]
pub struct OuladLoad {
    pub cohort: Cohort,
    pub undated_withdrawals: usize,
    pub missing_registration: usize,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())).into())
}

/// Builds the cohort from an OULAD directory (`studentInfo.csv`,
/// `studentRegistration.csv`, `studentVle.csv`, optional `courses.csv`).
///
/// An enrollment is an event when its final result is `Withdrawn` and its
/// unregistration day is present and non-negative; its time is the week of
/// unregistration. Everything else is censored at the last week of its
/// presentation (from `courses.csv`, or the last week with any VLE activity in
/// that presentation when the file is absent).
pub fn load_oulad(dir: &Path) -> Result<OuladLoad> {
    let map = ColumnMap::oulad();

    let mut reg = HashMap::new();
    let mut missing_registration = 0;
    {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(open(&dir.join("studentRegistration.csv"))?);
        let header = Header::new("studentRegistration", rdr.headers()?);
        let key = header.key(&map)?;
        let reg_col = header.require("date_registration")?;
        let unreg = header.require("date_unregistration")?;
        for rec in rdr.records() {
            let rec = rec?;
            if is_missing(cell(&rec, reg_col)) {
                missing_registration += 1;
            }
            let raw = cell(&rec, unreg);
            let day = if is_missing(raw) { None } else { raw.parse::<f64>().ok().map(|d| d as i64) };
            reg.insert(key_of(&rec, &key), day);
        }
    }

    let activity = load_activity(open(&dir.join("studentVle.csv"))?, &map)?;

    let mut length_weeks: HashMap<(String, String), u32> = HashMap::new();
    let courses = dir.join("courses.csv");
    if courses.exists() {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(&courses)?);
        let header = Header::new("courses", rdr.headers()?);
        let m = header.require("code_module")?;
        let p = header.require("code_presentation")?;
        let len = header.require("module_presentation_length")?;
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let days = parse_int(cell(&rec, len), row, "module_presentation_length")?;
            length_weeks.insert(
                (cell(&rec, m).to_string(), cell(&rec, p).to_string()),
                week_of_day(days),
            );
        }
    } else {
        log::warn!("courses.csv absent; censoring at last active week per presentation");
        for a in &activity {
            let mut parts = a.enrollment_id.splitn(3, '|');
            let m = parts.next().unwrap_or("").to_string();
            let p = parts.next().unwrap_or("").to_string();
            let e = length_weeks.entry((m, p)).or_insert(0);
            *e = (*e).max(a.week);
        }
    }

    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(open(&dir.join("studentInfo.csv"))?);
    let header = Header::new("studentInfo", rdr.headers()?);
    let key = header.key(&map)?;
    let module = header.require("code_module")?;
    let presentation = header.require("code_presentation")?;
    let result = header.require("final_result")?;

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    let mut undated_withdrawals = 0;
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let id = key_of(&rec, &key);
        if !seen.insert(id.clone()) {
            return Err(Error::Data {
                row,
                message: format!("duplicate enrollment `{id}`"),
            });
        }
        let m = cell(&rec, module).to_string();
        let p = cell(&rec, presentation).to_string();
        let end = length_weeks.get(&(m.clone(), p.clone())).copied().unwrap_or(0);
        let withdrawn = cell(&rec, result) == "Withdrawn";
        let unreg = reg.get(&id).copied().flatten();
        let (event, time) = match (withdrawn, unreg) {
            (true, Some(day)) if day >= 0 => (true, week_of_day(day)),
            (true, _) => {
                undated_withdrawals += 1;
                (false, end)
            }
            (false, _) => (false, end),
        };
        records.push(EnrollmentRecord {
            enrollment_id: id,
            module_id: m,
            presentation_id: p,
            observed_time_weeks: time,
            event,
            static_covariates: static_covariates(&rec, &header, &map, row)?,
        });
    }
    if undated_withdrawals > 0 {
        log::warn!("{undated_withdrawals} withdrawals without a valid unregistration day treated as censored");
    }
    Ok(OuladLoad {
        cohort: attach(records, activity),
        undated_withdrawals,
        missing_registration,
    })
}

pub fn write_enrollments<W: Write>(writer: W, records: &[EnrollmentRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![
        "enrollment_id",
        "module_id",
        "presentation_id",
        "observed_time_weeks",
        "event",
    ];
    header.extend(STATIC_CATEGORICAL);
    header.extend(STATIC_NUMERIC);
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.enrollment_id.clone(),
            r.module_id.clone(),
            r.presentation_id.clone(),
            r.observed_time_weeks.to_string(),
            u8::from(r.event).to_string(),
        ];
        for name in STATIC_CATEGORICAL.iter().chain(STATIC_NUMERIC.iter()) {
            row.push(
                r.static_covariates
                    .get(*name)
                    .map(CovariateValue::to_cell)
                    .unwrap_or_default(),
            );
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_activity<W: Write>(writer: W, activity: &[WeeklyActivityRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "enrollment_id",
        "week",
        "total_clicks_week",
        "n_vle_rows_week",
        "n_distinct_sites_week",
        "active_this_week",
    ])?;
    for a in activity {
        w.write_record([
            a.enrollment_id.clone(),
            a.week.to_string(),
            a.total_clicks_week.to_string(),
            a.n_vle_rows_week.to_string(),
            a.n_distinct_sites_week.to_string(),
            u8::from(a.active_this_week).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_panel<W: Write>(writer: W, panel: &PersonPeriodPanel) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "enrollment_id",
        "week",
        "total_clicks_week",
        "n_vle_rows_week",
        "n_distinct_sites_week",
        "active_this_week",
        "cum_clicks_until_t",
        "recency",
        "streak",
        "label",
    ])?;
    for r in &panel.rows {
        w.write_record([
            panel.enrollment_ids[r.enrollment].clone(),
            r.week.to_string(),
            r.total_clicks_week.to_string(),
            r.n_vle_rows_week.to_string(),
            r.n_distinct_sites_week.to_string(),
            u8::from(r.active_this_week).to_string(),
            r.cum_clicks_until_t.to_string(),
            r.recency.to_string(),
            r.streak.to_string(),
            u8::from(r.label).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_early_window<W: Write>(writer: W, summaries: &[EarlyWindowSummary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "enrollment_id",
        "window_weeks",
        "clicks_first_w",
        "active_weeks_first_w",
        "mean_clicks_first_w",
    ])?;
    for s in summaries {
        w.write_record([
            s.enrollment_id.clone(),
            s.window_weeks.to_string(),
            s.clicks_first_w.to_string(),
            s.active_weeks_first_w.to_string(),
            format!("{}", s.mean_clicks_first_w),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const ENROLL: &str = "\
enrollment_id,module_id,presentation_id,observed_time_weeks,event,gender,region,highest_education,imd_band,age_band,disability,num_of_prev_attempts,studied_credits
a,AAA,2013J,10,0,M,Scotland,HE Qualification,90-100%,55<=,N,0,240
b,AAA,2013J,3,1,F,Wales,A Level or Equivalent,,35-55,N,1,60
c,BBB,2014B,10,0,F,Wales,Lower Than A Level,20-30%,0-35,Y,0,
";

    #[test]
    fn three_enrollment_fixture_counts_events() {
        let recs = load_enrollments(ENROLL.as_bytes(), &ColumnMap::default()).unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!(recs.iter().filter(|r| r.event).count(), 1);
        assert_eq!(recs.iter().filter(|r| !r.event).count(), 2);
        assert_eq!(recs[1].static_covariates["imd_band"], CovariateValue::Missing);
        assert_eq!(recs[2].static_covariates["studied_credits"], CovariateValue::Missing);
        assert_eq!(
            recs[0].static_covariates["studied_credits"],
            CovariateValue::Numeric(240.0)
        );
    }

    #[test]
    fn missing_column_is_named() {
        let bad = ENROLL.replacen("observed_time_weeks", "t", 1);
        match load_enrollments(bad.as_bytes(), &ColumnMap::default()) {
            Err(Error::MissingColumn { column, .. }) => assert_eq!(column, "observed_time_weeks"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_activity_table_loads() {
        let act = "enrollment_id,week,total_clicks_week,n_vle_rows_week,n_distinct_sites_week\n";
        let rows = load_activity(act.as_bytes(), &ColumnMap::default()).unwrap();
        assert!(rows.is_empty());
    }

    #[test]
    fn negative_clicks_report_row() {
        let act = "enrollment_id,week,total_clicks_week,n_vle_rows_week,n_distinct_sites_week\na,0,3,1,1\na,1,-2,1,1\n";
        match load_activity(act.as_bytes(), &ColumnMap::default()) {
            Err(Error::Data { row, .. }) => assert_eq!(row, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_weekly_rows_are_internal_errors() {
        let act = "enrollment_id,week,total_clicks_week,n_vle_rows_week,n_distinct_sites_week\na,0,3,1,1\na,0,2,1,1\n";
        assert!(matches!(
            load_activity(act.as_bytes(), &ColumnMap::default()),
            Err(Error::Internal(_))
        ));
    }

    #[test]
    fn daily_log_aggregates_to_weeks() {
        let log = "\
code_module,code_presentation,id_student,id_site,date,sum_click
AAA,2013J,1,10,-5,2
AAA,2013J,1,11,3,4
AAA,2013J,1,10,6,1
AAA,2013J,1,10,7,5
";
        let rows = load_activity(log.as_bytes(), &ColumnMap::oulad()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].enrollment_id, "AAA|2013J|1");
        assert_eq!(rows[0].week, 0);
        assert_eq!(rows[0].total_clicks_week, 7);
        assert_eq!(rows[0].n_vle_rows_week, 3);
        assert_eq!(rows[0].n_distinct_sites_week, 2);
        assert_eq!(rows[1].week, 1);
        assert_eq!(rows[1].total_clicks_week, 5);
    }

    #[test]
    fn week_rule_floors_and_clamps() {
        assert_eq!(week_of_day(-20), 0);
        assert_eq!(week_of_day(0), 0);
        assert_eq!(week_of_day(6), 0);
        assert_eq!(week_of_day(7), 1);
        assert_eq!(week_of_day(69), 9);
    }

    #[test]
    fn written_tables_read_back() {
        let recs = load_enrollments(ENROLL.as_bytes(), &ColumnMap::default()).unwrap();
        let mut buf = Vec::new();
        write_enrollments(&mut buf, &recs).unwrap();
        let again = load_enrollments(buf.as_slice(), &ColumnMap::default()).unwrap();
        assert_eq!(recs, again);
    }
}
