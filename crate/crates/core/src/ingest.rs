//! CSV ingestion: loads case, mobility, vaccination, population and region
//! files and aligns them into [`RegionRecord`]s over a common date range.
//!
//! Missing interior case days become 0, missing mobility days are linearly
//! interpolated (nearest value at the ends), missing vaccination days carry
//! the previous cumulative value forward. Every fill is reported as a
//! warning. Negative daily counts are clamped to 0.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{Days, NaiveDate};
use log::warn;

use crate::data::{RegionId, RegionLevel, RegionRecord};
use crate::error::{Error, Result};

pub const CASES_FILE: &str = "cases.csv";
pub const MOBILITY_FILE: &str = "mobility.csv";
pub const VACCINATION_FILE: &str = "vaccination.csv";
pub const POPULATION_FILE: &str = "population.csv";
pub const REGIONS_FILE: &str = "regions.csv";

pub const CASES_HEADER: [&str; 3] = ["date", "region_id", "count"];
pub const MOBILITY_COLUMNS: [&str; 6] = [
    "retail_recreation",
    "grocery_pharmacy",
    "parks",
    "transit",
    "workplaces",
    "residential",
];
pub const VACCINATION_HEADER: [&str; 3] = ["date", "region_id", "cumulative_vaccinated"];
pub const POPULATION_HEADER: [&str; 2] = ["region_id", "population"];
pub const REGIONS_HEADER: [&str; 3] = ["region_id", "level", "parent_id"];

fn mobility_header() -> Vec<&'static str> {
    let mut h = vec!["date", "region_id"];
    h.extend(MOBILITY_COLUMNS);
    h
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataPaths {
    pub cases: PathBuf,
    pub mobility: PathBuf,
    pub vaccination: PathBuf,
    pub population: PathBuf,
    pub regions: PathBuf,
}

impl DataPaths {
    /// The five standard file names inside `dir`.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        DataPaths {
            cases: dir.join(CASES_FILE),
            mobility: dir.join(MOBILITY_FILE),
            vaccination: dir.join(VACCINATION_FILE),
            population: dir.join(POPULATION_FILE),
            regions: dir.join(REGIONS_FILE),
        }
    }

    pub fn all(&self) -> [&Path; 5] {
        [&self.cases, &self.mobility, &self.vaccination, &self.population, &self.regions]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    /// Full hierarchy from the regions file.
    pub regions: BTreeMap<String, RegionId>,
    /// Aligned records; regions without any data rows are absent until
    /// filled by [`aggregate_up`].
    pub records: BTreeMap<String, RegionRecord>,
    pub date_range: (NaiveDate, NaiveDate),
    pub warnings: Vec<String>,
}

impl DatasetBundle {
    pub fn record(&self, id: &str) -> Result<&RegionRecord> {
        self.records.get(id).ok_or_else(|| {
            if self.regions.contains_key(id) {
                Error::Argument(format!("region `{id}` has no data (and no children to aggregate)"))
            } else {
                Error::Argument(format!("unknown region `{id}`"))
            }
        })
    }

    pub fn records_at(&self, level: RegionLevel) -> Vec<&RegionRecord> {
        self.records.values().filter(|r| r.region().level == level).collect()
    }

    fn warn(&mut self, message: String) {
        warn!("{message}");
        self.warnings.push(message);
    }
}

struct CsvRows {
    path: PathBuf,
    reader: csv::Reader<File>,
}

impl CsvRows {
    fn open(path: &Path, header: &[&str]) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        let found: Vec<String> = reader
            .headers()
            .map_err(|e| parse_error(path, 1, e.to_string()))?
            .iter()
            .map(str::to_owned)
            .collect();
        if found != header {
            return Err(parse_error(
                path,
                1,
                format!("expected header `{}`, found `{}`", header.join(","), found.join(",")),
            ));
        }
        Ok(CsvRows {
            path: path.to_owned(),
            reader,
        })
    }

    /// Calls `f(line, fields)` for each data row.
    fn for_each(mut self, mut f: impl FnMut(&Path, u64, &csv::StringRecord) -> Result<()>) -> Result<()> {
        let mut row = csv::StringRecord::new();
        loop {
            match self.reader.read_record(&mut row) {
                Ok(false) => return Ok(()),
                Ok(true) => {
                    let line = row.position().map_or(0, |p| p.line());
                    f(&self.path, line, &row)?;
                }
                Err(e) => {
                    let line = e.position().map_or(0, |p| p.line());
                    return Err(parse_error(&self.path, line, e.to_string()));
                }
            }
        }
    }
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_owned(),
        line,
        message: message.into(),
    }
}

fn field<'r>(path: &Path, line: u64, row: &'r csv::StringRecord, idx: usize, name: &str) -> Result<&'r str> {
    row.get(idx)
        .ok_or_else(|| parse_error(path, line, format!("missing column `{name}`")))
}

fn parse_date(path: &Path, line: u64, text: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(text, "%Y-%m-%d")
        .map_err(|e| parse_error(path, line, format!("bad date `{text}`: {e}")))
}

fn parse_num<T: std::str::FromStr>(path: &Path, line: u64, text: &str, name: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    text.parse()
        .map_err(|e| parse_error(path, line, format!("bad {name} `{text}`: {e}")))
}

fn read_regions(path: &Path) -> Result<BTreeMap<String, RegionId>> {
    let mut regions = BTreeMap::new();
    CsvRows::open(path, &REGIONS_HEADER)?.for_each(|path, line, row| {
        let id = field(path, line, row, 0, "region_id")?.to_owned();
        let level: RegionLevel = field(path, line, row, 1, "level")?
            .parse()
            .map_err(|e: Error| parse_error(path, line, e.to_string()))?;
        let parent = field(path, line, row, 2, "parent_id")?;
        let parent = (!parent.is_empty()).then(|| parent.to_owned());
        if id.is_empty() {
            return Err(parse_error(path, line, "empty region_id"));
        }
        if regions.insert(id.clone(), RegionId { id: id.clone(), level, parent }).is_some() {
            return Err(parse_error(path, line, format!("duplicate region `{id}`")));
        }
        Ok(())
    })?;
    for region in regions.values() {
        match (region.level.parent_level(), &region.parent) {
            (None, None) => {}
            (None, Some(p)) => {
                return Err(Error::Hierarchy(format!("nation `{}` must not have a parent (found `{p}`)", region.id)))
            }
            (Some(want), None) => {
                return Err(Error::Hierarchy(format!("{} `{}` needs a {want} parent", region.level, region.id)))
            }
            (Some(want), Some(p)) => match regions.get(p) {
                Some(parent) if parent.level == want => {}
                Some(parent) => {
                    return Err(Error::Hierarchy(format!(
                        "parent `{p}` of {} `{}` is a {}, expected a {want}",
                        region.level, region.id, parent.level
                    )))
                }
                None => return Err(Error::Hierarchy(format!("parent `{p}` of `{}` is not listed", region.id))),
            },
        }
    }
    Ok(regions)
}

type Daily<T> = BTreeMap<String, BTreeMap<NaiveDate, T>>;

fn read_daily<T>(
    path: &Path,
    header: &[&str],
    regions: &BTreeMap<String, RegionId>,
    mut value: impl FnMut(&Path, u64, &csv::StringRecord) -> Result<T>,
) -> Result<Daily<T>> {
    let mut out: Daily<T> = BTreeMap::new();
    CsvRows::open(path, header)?.for_each(|path, line, row| {
        let date = parse_date(path, line, field(path, line, row, 0, "date")?)?;
        let region = field(path, line, row, 1, "region_id")?;
        if !regions.contains_key(region) {
            return Err(Error::UnknownRegion {
                path: path.to_owned(),
                region: region.to_owned(),
            });
        }
        let v = value(path, line, row)?;
        if out.entry(region.to_owned()).or_default().insert(date, v).is_some() {
            return Err(parse_error(path, line, format!("duplicate row for `{region}` on {date}")));
        }
        Ok(())
    })?;
    Ok(out)
}

fn read_population(path: &Path, regions: &BTreeMap<String, RegionId>) -> Result<BTreeMap<String, u64>> {
    let mut out = BTreeMap::new();
    CsvRows::open(path, &POPULATION_HEADER)?.for_each(|path, line, row| {
        let region = field(path, line, row, 0, "region_id")?;
        if !regions.contains_key(region) {
            return Err(Error::UnknownRegion {
                path: path.to_owned(),
                region: region.to_owned(),
            });
        }
        let pop: u64 = parse_num(path, line, field(path, line, row, 1, "population")?, "population")?;
        if pop == 0 {
            return Err(parse_error(path, line, "population must be positive"));
        }
        out.insert(region.to_owned(), pop);
        Ok(())
    })?;
    Ok(out)
}

/// Linear interpolation over observed points; nearest value beyond them.
fn interpolate(points: &BTreeMap<NaiveDate, Vec<f64>>, date: NaiveDate) -> Vec<f64> {
    let before = points.range(..=date).next_back();
    let after = points.range(date..).next();
    match (before, after) {
        (Some((d0, v0)), Some((d1, v1))) if d0 != d1 => {
            let x = (date - *d0).num_days() as f64 / (*d1 - *d0).num_days() as f64;
            v0.iter().zip(v1).map(|(a, b)| a + (b - a) * x).collect()
        }
        (Some((_, v)), _) | (None, Some((_, v))) => v.clone(),
        (None, None) => unreachable!("region has mobility rows"),
    }
}

pub fn load_bundle(paths: &DataPaths) -> Result<DatasetBundle> {
    let regions = read_regions(&paths.regions)?;
    let population = read_population(&paths.population, &regions)?;

    let mut negatives = Vec::new();
    let cases = read_daily(&paths.cases, &CASES_HEADER, &regions, |path, line, row| {
        let count: i64 = parse_num(path, line, field(path, line, row, 2, "count")?, "count")?;
        if count < 0 {
            negatives.push(format!(
                "{}:{line}: negative count {count} for `{}` clamped to 0",
                path.display(),
                &row[1]
            ));
        }
        Ok(count.max(0) as u64)
    })?;
    let mobility = read_daily(&paths.mobility, &mobility_header(), &regions, |path, line, row| {
        MOBILITY_COLUMNS
            .iter()
            .enumerate()
            .map(|(k, name)| {
                let v: f64 = parse_num(path, line, field(path, line, row, k + 2, name)?, name)?;
                if !v.is_finite() {
                    return Err(parse_error(path, line, format!("non-finite {name}")));
                }
                Ok(v)
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    let vaccination = read_daily(&paths.vaccination, &VACCINATION_HEADER, &regions, |path, line, row| {
        parse_num::<u64>(
            path,
            line,
            field(path, line, row, 2, "cumulative_vaccinated")?,
            "cumulative_vaccinated",
        )
    })?;

    // regions with data in any file must have data in all of them
    let mut with_data: Vec<&String> = cases.keys().chain(mobility.keys()).chain(vaccination.keys()).collect();
    with_data.sort();
    with_data.dedup();
    if with_data.is_empty() {
        return Err(Error::Argument("no data rows in the case, mobility and vaccination files".into()));
    }
    let mut first = NaiveDate::MIN;
    let mut last = NaiveDate::MAX;
    for id in &with_data {
        for (series, dates) in [
            ("cases", cases.get(*id).map(|m| (m.keys().next(), m.keys().next_back()))),
            ("mobility", mobility.get(*id).map(|m| (m.keys().next(), m.keys().next_back()))),
            ("vaccination", vaccination.get(*id).map(|m| (m.keys().next(), m.keys().next_back()))),
        ] {
            let Some((Some(lo), Some(hi))) = dates else {
                return Err(Error::MissingSeries {
                    region: (*id).clone(),
                    series,
                });
            };
            first = first.max(*lo);
            last = last.min(*hi);
        }
        if !population.contains_key(*id) {
            return Err(Error::MissingSeries {
                region: (*id).clone(),
                series: "population",
            });
        }
    }
    if first > last {
        return Err(Error::Argument(format!(
            "series share no common dates (latest start {first}, earliest end {last})"
        )));
    }

    let mut bundle = DatasetBundle {
        regions: regions.clone(),
        records: BTreeMap::new(),
        date_range: (first, last),
        warnings: Vec::new(),
    };
    for message in negatives {
        bundle.warn(message);
    }
    let days = (last - first).num_days() as usize + 1;
    for id in with_data {
        let case_rows = &cases[id];
        let mob_rows = &mobility[id];
        let vac_rows = &vaccination[id];
        let mut c = Vec::with_capacity(days);
        let mut m = Vec::with_capacity(days);
        let mut v = Vec::with_capacity(days);
        for k in 0..days {
            let date = first + Days::new(k as u64);
            c.push(match case_rows.get(&date) {
                Some(&n) => n,
                None => {
                    bundle.warn(format!("`{id}`: no case count on {date}, filled with 0"));
                    0
                }
            });
            m.push(match mob_rows.get(&date) {
                Some(row) => row.clone(),
                None => {
                    bundle.warn(format!("`{id}`: no mobility on {date}, interpolated"));
                    interpolate(mob_rows, date)
                }
            });
            v.push(match vac_rows.get(&date) {
                Some(&n) => n,
                None => {
                    bundle.warn(format!("`{id}`: no vaccination total on {date}, carried forward"));
                    match v.last() {
                        Some(&prev) => prev,
                        None => *vac_rows.range(date..).next().expect("range start is observed").1,
                    }
                }
            });
        }
        let record = RegionRecord::new(regions[id].clone(), c, m, v, population[id], first)?;
        bundle.records.insert(id.clone(), record);
    }
    Ok(bundle)
}

/// Builds records for every region at `level` from its children's records:
/// counts, vaccinations and populations summed, mobility averaged with
/// population weights.
pub fn aggregate_up(bundle: &DatasetBundle, level: RegionLevel) -> Result<DatasetBundle> {
    let child_level = level
        .child_level()
        .ok_or_else(|| Error::EmptyAggregation(level.to_string()))?;
    let mut out = bundle.clone();
    let mut built = 0;
    for region in bundle.regions.values().filter(|r| r.level == level) {
        let children: Vec<&RegionRecord> = bundle
            .records
            .values()
            .filter(|r| r.region().level == child_level && r.region().parent.as_deref() == Some(region.id.as_str()))
            .collect();
        if children.is_empty() {
            continue;
        }
        out.records.insert(region.id.clone(), combine(region.clone(), &children)?);
        built += 1;
    }
    if built == 0 {
        return Err(Error::EmptyAggregation(level.to_string()));
    }
    Ok(out)
}

fn combine(region: RegionId, children: &[&RegionRecord]) -> Result<RegionRecord> {
    let first = children[0];
    let days = first.len();
    let dim = first.mobility_dim();
    let population: u64 = children.iter().map(|c| c.population()).sum();
    let mut cases = vec![0u64; days];
    let mut vaccinated = vec![0u64; days];
    let mut mobility = vec![vec![0.0; dim]; days];
    for child in children {
        if child.len() != days || child.start_date() != first.start_date() {
            return Err(Error::Argument(format!(
                "child `{}` is not aligned with `{}`",
                child.region().id,
                first.region().id
            )));
        }
        let share = child.population() as f64 / population as f64;
        for t in 0..days {
            cases[t] += child.cases()[t];
            vaccinated[t] += child.vaccinated()[t];
            for (acc, x) in mobility[t].iter_mut().zip(&child.mobility()[t]) {
                *acc += share * x;
            }
        }
    }
    RegionRecord::new(region, cases, mobility, vaccinated, population, first.start_date())
}

/// Aggregates states, then the nation, for regions that have no records of
/// their own.
pub fn complete_hierarchy(bundle: DatasetBundle) -> Result<DatasetBundle> {
    let mut bundle = bundle;
    for level in [RegionLevel::State, RegionLevel::Nation] {
        let missing = bundle
            .regions
            .values()
            .any(|r| r.level == level && !bundle.records.contains_key(&r.id));
        if !missing {
            continue;
        }
        if let Ok(agg) = aggregate_up(&bundle, level) {
            for (id, record) in agg.records {
                bundle.records.entry(id).or_insert(record);
            }
        }
    }
    Ok(bundle)
}

fn create(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

/// Writes the five input files for `records` into `dir`.
pub fn write_bundle(dir: &Path, regions: &[RegionId], populations: &[(String, u64)], records: &[RegionRecord]) -> Result<DataPaths> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = DataPaths::in_dir(dir);

    let mut w = create(&paths.regions)?;
    w.write_record(REGIONS_HEADER)?;
    for r in regions {
        w.write_record([r.id.as_str(), r.level.as_str(), r.parent.as_deref().unwrap_or("")])?;
    }
    w.flush().map_err(|e| Error::io(&paths.regions, e))?;

    let mut w = create(&paths.population)?;
    w.write_record(POPULATION_HEADER)?;
    for (id, pop) in populations {
        w.write_record([id.clone(), pop.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(&paths.population, e))?;

    let mut cases = create(&paths.cases)?;
    let mut mobility = create(&paths.mobility)?;
    let mut vaccination = create(&paths.vaccination)?;
    cases.write_record(CASES_HEADER)?;
    mobility.write_record(mobility_header())?;
    vaccination.write_record(VACCINATION_HEADER)?;
    for record in records {
        let id = &record.region().id;
        for t in 1..=record.len() {
            let date = record.date_of(t).format("%Y-%m-%d").to_string();
            cases.write_record([date.clone(), id.clone(), record.cases()[t - 1].to_string()])?;
            let mut row = vec![date.clone(), id.clone()];
            row.extend(record.mobility()[t - 1].iter().map(|v| format!("{v:.6}")));
            mobility.write_record(&row)?;
            vaccination.write_record([date, id.clone(), record.vaccinated()[t - 1].to_string()])?;
        }
    }
    for (w, path) in [
        (&mut cases, &paths.cases),
        (&mut mobility, &paths.mobility),
        (&mut vaccination, &paths.vaccination),
    ] {
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    Ok(paths)
}

/// Writes a small text file, mapping IO failures to [`Error::Io`].
pub(crate) fn write_text(path: &Path, contents: &str) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fmt::Write as _;

    struct Fixture {
        dir: tempfile::TempDir,
    }

    impl Fixture {
        fn new() -> Self {
            let f = Fixture {
                dir: tempfile::tempdir().unwrap(),
            };
            f.put(REGIONS_FILE, "region_id,level,parent_id\nIN,nation,\nS1,state,IN\nD1,district,S1\nD2,district,S1\n");
            f.put(POPULATION_FILE, "region_id,population\nIN,400\nS1,400\nD1,100\nD2,300\n");
            f
        }

        fn put(&self, name: &str, contents: &str) {
            std::fs::write(self.dir.path().join(name), contents).unwrap();
        }

        fn paths(&self) -> DataPaths {
            DataPaths::in_dir(self.dir.path())
        }

        /// Writes daily files for `regions` over `days` days from 2021-01-01.
        fn daily(&self, regions: &[(&str, Vec<i64>, f64)], days: usize, skip_case: Option<(&str, usize)>) {
            let mut cases = String::from("date,region_id,count\n");
            let mut mob = format!("{}\n", mobility_header().join(","));
            let mut vac = String::from("date,region_id,cumulative_vaccinated\n");
            let start = NaiveDate::from_ymd_opt(2021, 1, 1).unwrap();
            for (id, counts, m) in regions {
                for k in 0..days {
                    let date = start + Days::new(k as u64);
                    if skip_case != Some((id, k)) {
                        writeln!(cases, "{date},{id},{}", counts[k]).unwrap();
                    }
                    writeln!(mob, "{date},{id},{m},{m},{m},{m},{m},{m}").unwrap();
                    writeln!(vac, "{date},{id},{}", k).unwrap();
                }
            }
            self.put(CASES_FILE, &cases);
            self.put(MOBILITY_FILE, &mob);
            self.put(VACCINATION_FILE, &vac);
        }
    }

    #[test]
    fn loads_complete_files() {
        let f = Fixture::new();
        f.daily(
            &[("IN", vec![1; 10], 0.0), ("D1", vec![1; 10], -10.0), ("D2", vec![2; 10], -20.0)],
            10,
            None,
        );
        let b = load_bundle(&f.paths()).unwrap();
        assert_eq!(b.records.len(), 3);
        assert!(b.records.values().all(|r| r.len() == 10));
        assert!(b.warnings.is_empty());
        assert_eq!(load_bundle(&f.paths()).unwrap(), b);
    }

    #[test]
    fn fills_missing_case_day_with_zero() {
        let f = Fixture::new();
        f.daily(&[("D1", vec![3; 6], 0.0)], 6, Some(("D1", 2)));
        let b = load_bundle(&f.paths()).unwrap();
        assert_eq!(b.records["D1"].cases(), &[3, 3, 0, 3, 3, 3]);
        assert_eq!(b.warnings.len(), 1);
        assert!(b.warnings[0].contains("2021-01-03"));
    }

    #[test]
    fn interpolates_missing_mobility() {
        let f = Fixture::new();
        f.daily(&[("D1", vec![0; 4], 0.0)], 4, None);
        let mob = "date,region_id,retail_recreation,grocery_pharmacy,parks,transit,workplaces,residential\n\
                   2021-01-01,D1,0,0,0,0,0,0\n2021-01-04,D1,-30,3,0,0,0,6\n";
        f.put(MOBILITY_FILE, mob);
        let b = load_bundle(&f.paths()).unwrap();
        let m = b.records["D1"].mobility();
        assert_eq!(m[1], vec![-10.0, 1.0, 0.0, 0.0, 0.0, 2.0]);
        assert_eq!(m[2], vec![-20.0, 2.0, 0.0, 0.0, 0.0, 4.0]);
    }

    #[test]
    fn clamps_negative_counts() {
        let f = Fixture::new();
        f.daily(&[("D1", vec![2, -3, 4], 0.0)], 3, None);
        let b = load_bundle(&f.paths()).unwrap();
        assert_eq!(b.records["D1"].cases(), &[2, 0, 4]);
        assert_eq!(b.warnings.len(), 1);
    }

    #[test]
    fn decreasing_vaccination_is_reported() {
        let f = Fixture::new();
        f.daily(&[("D1", vec![0; 8], 0.0)], 8, None);
        let vac: String = std::iter::once("date,region_id,cumulative_vaccinated".to_string())
            .chain((0..8).map(|k| format!("2021-01-{:02},D1,{}", k + 1, if k == 4 { 1 } else { 10 * k })))
            .collect::<Vec<_>>()
            .join("\n");
        f.put(VACCINATION_FILE, &vac);
        match load_bundle(&f.paths()).unwrap_err() {
            Error::DataConsistency { day, date, region, .. } => {
                assert_eq!(day, 5);
                assert_eq!(date, NaiveDate::from_ymd_opt(2021, 1, 5).unwrap());
                assert_eq!(region, "D1");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn over_population_is_reported() {
        let f = Fixture::new();
        f.daily(&[("D1", vec![40; 5], 0.0)], 5, None);
        let err = load_bundle(&f.paths()).unwrap_err();
        assert!(matches!(err, Error::DataConsistency { day: 3, .. }), "{err}");
    }

    #[test]
    fn malformed_row_has_line_number() {
        let f = Fixture::new();
        f.daily(&[("D1", vec![1; 3], 0.0)], 3, None);
        f.put(CASES_FILE, "date,region_id,count\n2021-01-01,D1,1\n2021-01-02,D1,abc\n");
        match load_bundle(&f.paths()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn unknown_region_is_rejected() {
        let f = Fixture::new();
        f.daily(&[("D9", vec![1; 3], 0.0)], 3, None);
        assert!(matches!(
            load_bundle(&f.paths()).unwrap_err(),
            Error::UnknownRegion { region, .. } if region == "D9"
        ));
    }

    #[test]
    fn bad_hierarchy_is_rejected() {
        let f = Fixture::new();
        f.put(REGIONS_FILE, "region_id,level,parent_id\nIN,nation,\nD1,district,IN\n");
        f.daily(&[("D1", vec![1; 3], 0.0)], 3, None);
        assert!(matches!(load_bundle(&f.paths()).unwrap_err(), Error::Hierarchy(_)));
    }

    #[test]
    fn aggregation_sums_and_weights() {
        let f = Fixture::new();
        f.daily(&[("D1", vec![1, 2], -10.0), ("D2", vec![3, 4], -20.0)], 2, None);
        let b = load_bundle(&f.paths()).unwrap();
        let state = aggregate_up(&b, RegionLevel::State).unwrap();
        let s1 = &state.records["S1"];
        assert_eq!(s1.cases(), &[4, 6]);
        assert_eq!(s1.population(), 400);
        assert_eq!(s1.vaccinated(), &[0, 2]);
        assert!((s1.mobility()[0][0] - (-17.5)).abs() < 1e-12);
        assert!(matches!(
            aggregate_up(&b, RegionLevel::Nation),
            Err(Error::EmptyAggregation(_))
        ));
        let full = complete_hierarchy(b).unwrap();
        assert_eq!(full.records["IN"].cases(), &[4, 6]);
    }

    #[test]
    fn single_child_aggregate_is_identity() {
        let f = Fixture::new();
        f.daily(&[("D2", vec![5, 0, 7], 12.5)], 3, None);
        let b = load_bundle(&f.paths()).unwrap();
        let s = aggregate_up(&b, RegionLevel::State).unwrap();
        let d2 = &b.records["D2"];
        assert_eq!(s.records["S1"].clone().with_region(d2.region().clone()), d2.clone());
    }

    #[test]
    fn writer_roundtrip() {
        let f = Fixture::new();
        f.daily(&[("D1", vec![1, 2, 3], -1.25), ("D2", vec![0, 5, 1], 3.5)], 3, None);
        let b = load_bundle(&f.paths()).unwrap();
        let out = tempfile::tempdir().unwrap();
        let regions: Vec<RegionId> = b.regions.values().cloned().collect();
        let pops = vec![("IN".into(), 400), ("S1".into(), 400), ("D1".into(), 100), ("D2".into(), 300)];
        let records: Vec<RegionRecord> = b.records.values().cloned().collect();
        let paths = write_bundle(out.path(), &regions, &pops, &records).unwrap();
        assert_eq!(load_bundle(&paths).unwrap().records, b.records);
    }
}
