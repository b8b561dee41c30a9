//! Period death-rate tables in the Human Mortality Database `Mx_1x1` text
//! layout, and synthetic tables generated from the mortality model.

use std::fmt::Write as _;
use std::io::{self, BufRead};

use serde::{Deserialize, Serialize};

use crate::error::{DataError, MortalityError};
use crate::fgn::HurstIndex;
use crate::fou::{simulate_fou, FouParams};
use crate::mortality::{path_seed, CohortSeries, Sex};

/// Open age group, written `110+`.
pub const OPEN_AGE: u32 = 110;
/// Oldest age modelled by default; older rates are stored but noisy.
pub const DEFAULT_MAX_MODEL_AGE: u32 = 90;

/// Rates on a rectangular year × age grid, one channel per sex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MortalityTable {
    pub country_label: String,
    pub years: Vec<i32>,
    pub ages: Vec<u32>,
    /// `rates[sex][year_index][age_index]`, sexes ordered as [`Sex::ALL`].
    rates: [Vec<Vec<Option<f64>>>; 3],
}

fn sex_index(sex: Sex) -> usize {
    match sex {
        Sex::Female => 0,
        Sex::Male => 1,
        Sex::Total => 2,
    }
}

impl MortalityTable {
    /// Table with every cell missing. `years` and `ages` are sorted and
    /// deduplicated.
    pub fn empty(
        country_label: impl Into<String>,
        mut years: Vec<i32>,
        mut ages: Vec<u32>,
    ) -> Self {
        years.sort_unstable();
        years.dedup();
        ages.sort_unstable();
        ages.dedup();
        let grid = vec![vec![None; ages.len()]; years.len()];
        MortalityTable {
            country_label: country_label.into(),
            years,
            ages,
            rates: [grid.clone(), grid.clone(), grid],
        }
    }

    fn index(&self, year: i32, age: u32) -> Option<(usize, usize)> {
        let y = self.years.binary_search(&year).ok()?;
        let a = self.ages.binary_search(&age).ok()?;
        Some((y, a))
    }

    pub fn get(&self, year: i32, age: u32, sex: Sex) -> Option<f64> {
        let (y, a) = self.index(year, age)?;
        self.rates[sex_index(sex)][y][a]
    }

    /// Store a rate. Only positive finite values are accepted; `None` marks
    /// the cell missing.
    pub fn set(
        &mut self,
        year: i32,
        age: u32,
        sex: Sex,
        rate: Option<f64>,
    ) -> Result<(), DataError> {
        if let Some(r) = rate {
            if !(r > 0.0 && r.is_finite()) {
                return Err(DataError::Parse(format!("rate must be positive, got {r}")));
            }
        }
        let (y, a) = self.index(year, age).ok_or_else(|| {
            DataError::NotFound(format!("cell ({year}, {age}) is outside the grid"))
        })?;
        self.rates[sex_index(sex)][y][a] = rate;
        Ok(())
    }

    /// Number of present cells across all sexes.
    pub fn present_count(&self) -> usize {
        self.rates
            .iter()
            .flatten()
            .flatten()
            .filter(|c| c.is_some())
            .count()
    }

    /// Rates for one age and sex over `year_start..=year_end`.
    pub fn extract_cohort(
        &self,
        age: u32,
        sex: Sex,
        year_start: i32,
        year_end: i32,
    ) -> Result<CohortSeries, DataError> {
        if year_end < year_start {
            return Err(MortalityError::InvalidArgument(format!(
                "empty window {year_start}:{year_end}"
            ))
            .into());
        }
        let a = self
            .ages
            .binary_search(&age)
            .map_err(|_| DataError::NotFound(format!("age {age} is not in the table")))?;
        let channel = &self.rates[sex_index(sex)];
        let mut rates = Vec::new();
        let mut missing = Vec::new();
        for year in year_start..=year_end {
            match self
                .years
                .binary_search(&year)
                .ok()
                .and_then(|y| channel[y][a])
            {
                Some(r) => rates.push(r),
                None => missing.push(year),
            }
        }
        if !missing.is_empty() {
            return Err(DataError::Gap { missing });
        }
        Ok(CohortSeries::from_rates(age, sex, year_start, rates)?)
    }

    /// HMD-style text that [`parse_hmd`] reads back to an equal table.
    pub fn to_hmd_string(&self) -> String {
        let mut out = format!("{}, Death rates (period 1x1)\n\n", self.country_label);
        let _ = writeln!(
            out,
            "{:>6}{:>8}{:>24}{:>24}{:>24}",
            "Year", "Age", "Female", "Male", "Total"
        );
        for (y, year) in self.years.iter().enumerate() {
            for (a, age) in self.ages.iter().enumerate() {
                let age = if *age == OPEN_AGE {
                    format!("{OPEN_AGE}+")
                } else {
                    age.to_string()
                };
                let cell = |s: usize| {
                    self.rates[s][y][a].map_or_else(|| ".".to_string(), |r| r.to_string())
                };
                let _ = writeln!(
                    out,
                    "{year:>6}{age:>8}{:>24}{:>24}{:>24}",
                    cell(0),
                    cell(1),
                    cell(2)
                );
            }
        }
        out
    }

    /// Long CSV `year,age,sex,rate`; missing rates are left empty.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("year,age,sex,rate\n");
        for (y, year) in self.years.iter().enumerate() {
            for (a, age) in self.ages.iter().enumerate() {
                for sex in Sex::ALL {
                    let rate = self.rates[sex_index(sex)][y][a]
                        .map_or_else(String::new, |r| r.to_string());
                    let _ = writeln!(out, "{year},{age},{sex},{rate}");
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("table serializes")
    }
}

/// A data row that was not ingested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowError {
    /// 1-based line number in the input.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParseReport {
    /// Non-blank lines after the column header.
    pub input_rows: usize,
    pub ingested: usize,
    pub skipped: usize,
    pub errors: Vec<RowError>,
    /// Cells reported as exactly zero, stored as missing.
    pub zero_rates: usize,
}

struct Row {
    year: i32,
    age: u32,
    cells: [Option<f64>; 3],
}

fn parse_cell(tok: &str, zeros: &mut usize) -> Result<Option<f64>, String> {
    if tok == "." {
        return Ok(None);
    }
    let v: f64 = tok.parse().map_err(|_| format!("malformed rate {tok:?}"))?;
    if v == 0.0 {
        *zeros += 1;
        Ok(None)
    } else if v > 0.0 && v.is_finite() {
        Ok(Some(v))
    } else {
        Err(format!("rate {tok:?} is not a positive number"))
    }
}

fn parse_row(line: &str, zeros: &mut usize) -> Result<Row, String> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    if toks.len() != 5 {
        return Err(format!("expected 5 columns, found {}", toks.len()));
    }
    let year: i32 = toks[0]
        .parse()
        .map_err(|_| format!("malformed year {:?}", toks[0]))?;
    let age_tok = toks[1].strip_suffix('+').unwrap_or(toks[1]);
    let age: u32 = age_tok
        .parse()
        .map_err(|_| format!("malformed age {:?}", toks[1]))?;
    let mut local = 0;
    let mut cells = [None; 3];
    for (c, tok) in cells.iter_mut().zip(&toks[2..]) {
        *c = parse_cell(tok, &mut local)?;
    }
    *zeros += local;
    Ok(Row { year, age, cells })
}

/// Read an HMD `Mx_1x1` table.
///
/// Lines before the `Year Age Female Male Total` header are preamble; the
/// country label is the first preamble line up to its first comma. Rows that
/// fail to parse are reported and skipped.
pub fn parse_hmd<R: BufRead>(reader: R) -> Result<(MortalityTable, ParseReport), DataError> {
    let mut label = None;
    let mut header_seen = false;
    let mut report = ParseReport::default();
    let mut rows = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if !header_seen {
            if trimmed.split_whitespace().next() == Some("Year") {
                header_seen = true;
            } else if label.is_none() && !trimmed.is_empty() {
                label = Some(trimmed.split(',').next().unwrap_or("").trim().to_string());
            }
            continue;
        }
        if trimmed.is_empty() {
            continue;
        }
        report.input_rows += 1;
        let parsed = parse_row(trimmed, &mut report.zero_rates).and_then(|row| {
            if seen.insert((row.year, row.age)) {
                Ok(row)
            } else {
                Err(format!(
                    "duplicate row for year {} age {}",
                    row.year, row.age
                ))
            }
        });
        match parsed {
            Ok(row) => {
                report.ingested += 1;
                rows.push(row);
            }
            Err(message) => {
                report.skipped += 1;
                report.errors.push(RowError {
                    line: i + 1,
                    message,
                });
            }
        }
    }
    if !header_seen {
        return Err(DataError::Parse(
            "no `Year Age Female Male Total` header found".into(),
        ));
    }
    if rows.is_empty() {
        return Err(DataError::Parse(format!(
            "no valid data rows ({} skipped)",
            report.skipped
        )));
    }
    let mut table = MortalityTable::empty(
        label.unwrap_or_default(),
        rows.iter().map(|r| r.year).collect(),
        rows.iter().map(|r| r.age).collect(),
    );
    for row in rows {
        let (y, a) = table
            .index(row.year, row.age)
            .expect("grid built from rows");
        for (s, cell) in row.cells.into_iter().enumerate() {
            table.rates[s][y][a] = cell;
        }
    }
    Ok((table, report))
}

/// [`parse_hmd`] on an in-memory string.
pub fn parse_hmd_str(text: &str) -> Result<(MortalityTable, ParseReport), DataError> {
    parse_hmd(io::Cursor::new(text))
}

/// Generating parameters for one age and sex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgeParams {
    pub age: u32,
    pub sex: Sex,
    pub h0: f64,
    pub alpha0: f64,
    pub hurst: f64,
    /// Zero gives an exactly log-linear series.
    pub sigma: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub country_label: String,
    pub years: (i32, i32),
    pub ages: Vec<AgeParams>,
    pub seed: u64,
}

/// Table with `ln h(t) = ln h₀ + α₀t + Y_t`, where `Y` is an fOU path on an
/// annual mesh started at zero in the first year. Cells not covered by
/// `spec.ages` stay missing.
pub fn synthesize_fixture(spec: &FixtureSpec) -> Result<MortalityTable, DataError> {
    let (first, last) = spec.years;
    if last <= first {
        return Err(
            MortalityError::InvalidArgument(format!("year range {first}:{last} is empty")).into(),
        );
    }
    let n_steps = (last - first) as usize;
    let mut table = MortalityTable::empty(
        spec.country_label.clone(),
        (first..=last).collect(),
        spec.ages.iter().map(|p| p.age).collect(),
    );
    for p in &spec.ages {
        let y = if p.sigma == 0.0 {
            vec![0.0; n_steps + 1]
        } else {
            let hurst = HurstIndex::new(p.hurst).map_err(MortalityError::from)?;
            let params =
                FouParams::new(p.lambda, p.sigma, hurst, 1.0).map_err(MortalityError::from)?;
            let stream = p.age as usize * 3 + sex_index(p.sex);
            simulate_fou(params, n_steps, path_seed(spec.seed, stream))
                .map_err(MortalityError::from)?
                .values
        };
        for (t, v) in y.iter().enumerate() {
            let rate = p.h0 * (p.alpha0 * t as f64 + v).exp();
            table.set(first + t as i32, p.age, p.sex, Some(rate))?;
        }
    }
    Ok(table)
}

const BUNDLED_HMD: &str = include_str!("../fixtures/synthetic_mx_1x1.txt");

/// The bundled synthetic table: ages 0 to 110+, 1950 to 2004, all sexes.
pub fn bundled_fixture() -> MortalityTable {
    parse_hmd_str(BUNDLED_HMD)
        .expect("bundled fixture parses")
        .0
}

/// Raw text of the bundled table.
pub fn bundled_fixture_text() -> &'static str {
    BUNDLED_HMD
}

/// The specification the bundled table was generated from.
pub fn bundled_fixture_spec() -> FixtureSpec {
    let mut ages = Vec::new();
    for sex in Sex::ALL {
        for age in 0..=OPEN_AGE {
            let x = f64::from(age);
            let frailty = match sex {
                Sex::Female => 1.0,
                Sex::Male => 1.6,
                Sex::Total => 1.3,
            };
            // infant mortality decaying over the first years, plus a Gompertz term
            let h0 = (0.055 * frailty * (-1.6 * x).exp()
                + 0.0004
                + 0.00004 * frailty * (0.092 * x).exp())
            .min(0.9);
            let stream = (u64::from(age) * 7 + sex_index(sex) as u64 * 3) % 19;
            ages.push(AgeParams {
                age,
                sex,
                h0,
                alpha0: -0.045 + 0.035 * x / 110.0,
                hurst: 0.6 + 0.18 * stream as f64 / 18.0,
                sigma: 0.04 + 0.06 * x / 110.0,
                lambda: 2.0 + f64::from(age % 5) / 4.0,
            });
        }
    }
    FixtureSpec {
        country_label: "Synthetic".into(),
        years: (1950, 2004),
        ages,
        seed: 20_040_101,
    }
}
