//! Reaction-time records and the filters that turn them into analysis
//! datasets.
//!
//! Raw records keep negative and disqualified reaction times; every filter
//! is applied explicitly by [`build_clustered_sample`] or
//! [`build_model_dataset`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub const CSV_HEADER: [&str; 9] = [
    "athlete_id",
    "gender",
    "event",
    "competition",
    "year",
    "round",
    "heat_id",
    "rt_seconds",
    "dq",
];

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("I/O error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("line {line}, column `{column}`: {message}")]
    BadField {
        line: u64,
        column: &'static str,
        message: String,
    },
    #[error("heat `{heat_id}` is inconsistent: line {line} disagrees with line {first_line} on {field}")]
    InconsistentHeat {
        heat_id: String,
        field: &'static str,
        line: u64,
        first_line: u64,
    },
    #[error("empty selection: {0}")]
    EmptySelection(String),
    #[error("insufficient clusters: {found} athletes appear in both groups, at least 2 required")]
    InsufficientClusters { found: usize },
    #[error("treatment and control selections overlap")]
    OverlappingGroups,
}

macro_rules! token_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $tok:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name { $($variant),+ }

        impl $name {
            pub fn as_str(&self) -> &'static str {
                match self { $($name::$variant => $tok),+ }
            }
        }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s.trim() {
                    $($tok => Ok($name::$variant),)+
                    other => Err(format!("unknown token `{other}`")),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

token_enum!(Gender { Men => "men", Women => "women" });
token_enum!(Event { Dash100 => "dash100", Hurdles100 => "hurdles100", Hurdles110 => "hurdles110" });
token_enum!(Round { Heat => "heat", Semifinal => "semifinal", Final => "final" });

/// Competition a reaction time was recorded at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Competition {
    National2022,
    World2019,
    World2022,
    World2023,
    /// Any other World Championships edition.
    WorldOther(u16),
}

impl Competition {
    pub fn world(year: u16) -> Self {
        match year {
            2019 => Competition::World2019,
            2022 => Competition::World2022,
            2023 => Competition::World2023,
            y => Competition::WorldOther(y),
        }
    }

    pub fn is_world(&self) -> bool {
        !matches!(self, Competition::National2022)
    }
}

impl fmt::Display for Competition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Competition::National2022 => f.write_str("national2022"),
            Competition::World2019 => f.write_str("world2019"),
            Competition::World2022 => f.write_str("world2022"),
            Competition::World2023 => f.write_str("world2023"),
            Competition::WorldOther(y) => write!(f, "world{y}"),
        }
    }
}

impl FromStr for Competition {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s == "national2022" {
            return Ok(Competition::National2022);
        }
        s.strip_prefix("world")
            .and_then(|y| y.parse::<u16>().ok())
            .filter(|y| (1983..=2100).contains(y))
            .map(Competition::world)
            .ok_or_else(|| format!("unknown competition `{s}`"))
    }
}

impl Serialize for Competition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Competition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One observed reaction time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RTRecord {
    pub athlete_id: String,
    pub gender: Gender,
    pub event: Event,
    pub competition: Competition,
    pub year: u16,
    pub round: Round,
    pub heat_id: String,
    pub rt_seconds: f64,
    pub dq: bool,
    /// 1-based line in the source file, 0 for records built in code.
    #[serde(default, skip_serializing)]
    pub line: u64,
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<RTRecord>, DataError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(file)
}

/// Parse records from any reader holding the CSV schema.
pub fn read_csv<R: Read>(reader: R) -> Result<Vec<RTRecord>, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut rows = rdr.records();
    let header = match rows.next() {
        None => return Ok(Vec::new()),
        Some(h) => h.map_err(|e| csv_error(e, 1))?,
    };
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != CSV_HEADER {
        return Err(DataError::Malformed {
            line: 1,
            message: format!("expected header `{}`, found `{}`", CSV_HEADER.join(","), got.join(",")),
        });
    }

    let mut records = Vec::new();
    for row in rows {
        let row = row.map_err(|e| csv_error(e, 0))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() == 1 && row[0].trim().is_empty() {
            continue;
        }
        if row.len() != CSV_HEADER.len() {
            return Err(DataError::Malformed {
                line,
                message: format!("expected {} fields, found {}", CSV_HEADER.len(), row.len()),
            });
        }
        records.push(parse_row(&row, line)?);
    }
    validate_heats(&records)?;
    Ok(records)
}

fn csv_error(err: csv::Error, fallback_line: u64) -> DataError {
    let line = err.position().map(|p| p.line()).unwrap_or(fallback_line);
    DataError::Malformed {
        line,
        message: err.to_string(),
    }
}

fn field<T: FromStr>(row: &csv::StringRecord, idx: usize, line: u64) -> Result<T, DataError>
where
    T::Err: fmt::Display,
{
    let raw = row[idx].trim();
    raw.parse().map_err(|e| DataError::BadField {
        line,
        column: CSV_HEADER[idx],
        message: format!("cannot parse `{raw}`: {e}"),
    })
}

fn parse_row(row: &csv::StringRecord, line: u64) -> Result<RTRecord, DataError> {
    let athlete_id = row[0].trim().to_string();
    if athlete_id.is_empty() {
        return Err(DataError::BadField {
            line,
            column: "athlete_id",
            message: "empty athlete id".into(),
        });
    }
    let heat_id = row[6].trim().to_string();
    if heat_id.is_empty() {
        return Err(DataError::BadField {
            line,
            column: "heat_id",
            message: "empty heat id".into(),
        });
    }
    let rt_seconds: f64 = field(row, 7, line)?;
    if !rt_seconds.is_finite() {
        return Err(DataError::BadField {
            line,
            column: "rt_seconds",
            message: "reaction time must be finite".into(),
        });
    }
    let dq = match row[8].trim() {
        "true" => true,
        "false" => false,
        other => {
            return Err(DataError::BadField {
                line,
                column: "dq",
                message: format!("expected `true` or `false`, found `{other}`"),
            })
        }
    };
    Ok(RTRecord {
        athlete_id,
        gender: field(row, 1, line)?,
        event: field(row, 2, line)?,
        competition: field(row, 3, line)?,
        year: field(row, 4, line)?,
        round: field(row, 5, line)?,
        heat_id,
        rt_seconds,
        dq,
        line,
    })
}

/// All records sharing a heat id must agree on year, round, event and gender.
pub fn validate_heats(records: &[RTRecord]) -> Result<(), DataError> {
    let mut first: HashMap<&str, &RTRecord> = HashMap::new();
    for r in records {
        let f = *first.entry(r.heat_id.as_str()).or_insert(r);
        let field = if f.year != r.year {
            Some("year")
        } else if f.round != r.round {
            Some("round")
        } else if f.event != r.event {
            Some("event")
        } else if f.gender != r.gender {
            Some("gender")
        } else {
            None
        };
        if let Some(field) = field {
            return Err(DataError::InconsistentHeat {
                heat_id: r.heat_id.clone(),
                field,
                line: r.line,
                first_line: f.line,
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GenderFilter {
    Men,
    Women,
    Pooled,
}

impl GenderFilter {
    pub fn accepts(&self, g: Gender) -> bool {
        match self {
            GenderFilter::Men => g == Gender::Men,
            GenderFilter::Women => g == Gender::Women,
            GenderFilter::Pooled => true,
        }
    }
}

impl FromStr for GenderFilter {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "men" => Ok(GenderFilter::Men),
            "women" => Ok(GenderFilter::Women),
            "pooled" => Ok(GenderFilter::Pooled),
            other => Err(format!("unknown gender filter `{other}`")),
        }
    }
}

impl fmt::Display for GenderFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GenderFilter::Men => "men",
            GenderFilter::Women => "women",
            GenderFilter::Pooled => "pooled",
        })
    }
}

/// The three within-athlete comparisons, each contrasting the 2022 World
/// Championships (treatment) with another competition (control).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Comparison {
    #[serde(rename = "2022nat-vs-2022world")]
    National2022VsWorld2022,
    #[serde(rename = "2019-vs-2022")]
    World2019VsWorld2022,
    #[serde(rename = "2022-vs-2023")]
    World2022VsWorld2023,
}

impl Comparison {
    pub const ALL: [Comparison; 3] = [
        Comparison::National2022VsWorld2022,
        Comparison::World2019VsWorld2022,
        Comparison::World2022VsWorld2023,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Comparison::National2022VsWorld2022 => "2022nat-vs-2022world",
            Comparison::World2019VsWorld2022 => "2019-vs-2022",
            Comparison::World2022VsWorld2023 => "2022-vs-2023",
        }
    }

    pub fn treatment(&self) -> Competition {
        Competition::World2022
    }

    pub fn control(&self) -> Competition {
        match self {
            Comparison::National2022VsWorld2022 => Competition::National2022,
            Comparison::World2019VsWorld2022 => Competition::World2019,
            Comparison::World2022VsWorld2023 => Competition::World2023,
        }
    }
}

impl FromStr for Comparison {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        Comparison::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Comparison::ALL.iter().map(|c| c.name()).collect();
                format!("unknown comparison `{s}` (expected one of {})", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Treatment,
    Control,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub athlete_id: String,
    pub values: Vec<f64>,
    pub groups: Vec<Group>,
}

impl Cluster {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn treatment_count(&self) -> usize {
        self.groups.iter().filter(|g| **g == Group::Treatment).count()
    }
}

/// Athlete-clustered observations with subunit-level group labels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusteredSample {
    clusters: Vec<Cluster>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SampleError {
    #[error("at least 2 clusters are required, found {0}")]
    TooFewClusters(usize),
    #[error("cluster `{0}` lacks a treatment or a control observation")]
    SingleGroupCluster(String),
    #[error("cluster `{0}` has mismatched value and label counts")]
    LengthMismatch(String),
    #[error("cluster `{athlete}` contains non-positive value {value}")]
    NonPositive { athlete: String, value: f64 },
}

impl ClusteredSample {
    pub fn new(clusters: Vec<Cluster>) -> Result<Self, SampleError> {
        if clusters.len() < 2 {
            return Err(SampleError::TooFewClusters(clusters.len()));
        }
        for c in &clusters {
            if c.values.len() != c.groups.len() {
                return Err(SampleError::LengthMismatch(c.athlete_id.clone()));
            }
            if let Some(&v) = c.values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
                return Err(SampleError::NonPositive {
                    athlete: c.athlete_id.clone(),
                    value: v,
                });
            }
            let t = c.treatment_count();
            if t == 0 || t == c.len() {
                return Err(SampleError::SingleGroupCluster(c.athlete_id.clone()));
            }
        }
        Ok(ClusteredSample { clusters })
    }

    /// Convenience constructor from `(value, is_treatment)` pairs per cluster.
    pub fn from_pairs(raw: &[Vec<(f64, bool)>]) -> Result<Self, SampleError> {
        let clusters = raw
            .iter()
            .enumerate()
            .map(|(i, obs)| Cluster {
                athlete_id: format!("c{i}"),
                values: obs.iter().map(|o| o.0).collect(),
                groups: obs
                    .iter()
                    .map(|o| if o.1 { Group::Treatment } else { Group::Control })
                    .collect(),
            })
            .collect();
        Self::new(clusters)
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(Cluster::len).collect()
    }

    pub fn n_observations(&self) -> usize {
        self.clusters.iter().map(Cluster::len).sum()
    }

    /// Same values with every group label flipped.
    pub fn with_swapped_labels(&self) -> Self {
        let clusters = self
            .clusters
            .iter()
            .map(|c| Cluster {
                athlete_id: c.athlete_id.clone(),
                values: c.values.clone(),
                groups: c
                    .groups
                    .iter()
                    .map(|g| match g {
                        Group::Treatment => Group::Control,
                        Group::Control => Group::Treatment,
                    })
                    .collect(),
            })
            .collect();
        ClusteredSample { clusters }
    }

    /// Same labels with every value mapped through `f`, which must keep
    /// values positive.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Result<Self, SampleError> {
        let clusters = self
            .clusters
            .iter()
            .map(|c| Cluster {
                athlete_id: c.athlete_id.clone(),
                values: c.values.iter().map(|&v| f(v)).collect(),
                groups: c.groups.clone(),
            })
            .collect();
        Self::new(clusters)
    }
}

/// Athletes competing at both the treatment and control competitions.
/// Non-positive reaction times are dropped. Positive disqualified times
/// and all rounds are kept.
pub fn build_clustered_sample(
    records: &[RTRecord],
    treatment: Competition,
    control: Competition,
    gender: GenderFilter,
) -> Result<ClusteredSample, DataError> {
    if treatment == control {
        return Err(DataError::OverlappingGroups);
    }
    let mut per_athlete: BTreeMap<&str, Vec<(f64, Group)>> = BTreeMap::new();
    let mut seen_treatment = 0usize;
    let mut seen_control = 0usize;
    for r in records.iter().filter(|r| gender.accepts(r.gender)) {
        let group = if r.competition == treatment {
            seen_treatment += 1;
            Group::Treatment
        } else if r.competition == control {
            seen_control += 1;
            Group::Control
        } else {
            continue;
        };
        if r.rt_seconds > 0.0 {
            per_athlete.entry(&r.athlete_id).or_default().push((r.rt_seconds, group));
        }
    }
    if seen_treatment == 0 {
        return Err(DataError::EmptySelection(format!("no {gender} records at {treatment}")));
    }
    if seen_control == 0 {
        return Err(DataError::EmptySelection(format!("no {gender} records at {control}")));
    }

    let clusters: Vec<Cluster> = per_athlete
        .into_iter()
        .filter(|(_, obs)| {
            obs.iter().any(|o| o.1 == Group::Treatment) && obs.iter().any(|o| o.1 == Group::Control)
        })
        .map(|(id, obs)| Cluster {
            athlete_id: id.to_string(),
            values: obs.iter().map(|o| o.0).collect(),
            groups: obs.iter().map(|o| o.1).collect(),
        })
        .collect();
    if clusters.len() < 2 {
        return Err(DataError::InsufficientClusters {
            found: clusters.len(),
        });
    }
    Ok(ClusteredSample::new(clusters).expect("filters guarantee sample invariants"))
}

/// A single record to drop, keyed by athlete and heat.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Exclusion {
    pub athlete_id: String,
    pub heat_id: String,
    #[serde(default)]
    pub reason: String,
}

/// Load an exclusion list with header `athlete_id,heat_id,reason`.
pub fn load_exclusions(path: impl AsRef<Path>) -> Result<Vec<Exclusion>, DataError> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| DataError::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e.to_string()),
        })?;
    let mut out = Vec::new();
    for row in rdr.deserialize::<Exclusion>() {
        out.push(row.map_err(|e| csv_error(e, 0))?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFilter {
    pub gender: Gender,
    pub include_2022: bool,
    pub include_positive_dq: bool,
    pub rounds: BTreeSet<Round>,
    #[serde(default)]
    pub exclusions: Vec<Exclusion>,
}

impl ModelFilter {
    /// Semifinals and finals, 2022 and positive DQ times included.
    pub fn new(gender: Gender) -> Self {
        ModelFilter {
            gender,
            include_2022: true,
            include_positive_dq: true,
            rounds: [Round::Semifinal, Round::Final].into_iter().collect(),
            exclusions: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub value: f64,
    /// Index into [`ModelDataset::venues`].
    pub venue: usize,
    /// Index into [`ModelDataset::heats`].
    pub heat: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeatKey {
    pub venue: usize,
    pub heat_id: String,
}

/// Observations indexed by venue (championship year) and heat nested in
/// venue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDataset {
    pub observations: Vec<Observation>,
    /// Championship year of each venue, ascending.
    pub venues: Vec<u16>,
    pub heats: Vec<HeatKey>,
}

impl ModelDataset {
    /// Assemble from `(value, year, heat_id)` triples. Venue and heat indices
    /// are assigned in sorted key order.
    pub fn from_triples<'a, I>(rows: I) -> Result<Self, DataError>
    where
        I: IntoIterator<Item = (f64, u16, &'a str)>,
    {
        let rows: Vec<(f64, u16, &str)> = rows.into_iter().collect();
        if rows.is_empty() {
            return Err(DataError::EmptySelection("no observations".into()));
        }
        let venues: Vec<u16> = rows.iter().map(|r| r.1).collect::<BTreeSet<_>>().into_iter().collect();
        let mut heat_set: BTreeMap<&str, u16> = BTreeMap::new();
        for &(_, year, heat) in &rows {
            if let Some(&prev) = heat_set.get(heat) {
                if prev != year {
                    return Err(DataError::InconsistentHeat {
                        heat_id: heat.to_string(),
                        field: "year",
                        line: 0,
                        first_line: 0,
                    });
                }
            }
            heat_set.insert(heat, year);
        }
        let venue_index: HashMap<u16, usize> = venues.iter().enumerate().map(|(i, &y)| (y, i)).collect();
        let mut keyed: Vec<(usize, &str)> = heat_set.iter().map(|(h, y)| (venue_index[y], *h)).collect();
        keyed.sort();
        let heat_index: HashMap<&str, usize> = keyed.iter().enumerate().map(|(i, k)| (k.1, i)).collect();
        let heats = keyed
            .iter()
            .map(|&(venue, id)| HeatKey {
                venue,
                heat_id: id.to_string(),
            })
            .collect();
        let observations = rows
            .iter()
            .map(|&(value, year, heat)| Observation {
                value,
                venue: venue_index[&year],
                heat: heat_index[heat],
            })
            .collect();
        Ok(ModelDataset {
            observations,
            venues,
            heats,
        })
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn venue_count(&self) -> usize {
        self.venues.len()
    }

    pub fn heat_count(&self) -> usize {
        self.heats.len()
    }

    pub fn heats_per_venue(&self) -> Vec<usize> {
        let mut counts = vec![0; self.venues.len()];
        for h in &self.heats {
            counts[h.venue] += 1;
        }
        counts
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.observations.iter().map(|o| o.value)
    }

    /// Copy of the index structure carrying new values, in observation order.
    pub fn with_values(&self, values: &[f64]) -> Self {
        assert_eq!(values.len(), self.observations.len());
        let observations = self
            .observations
            .iter()
            .zip(values)
            .map(|(o, &value)| Observation { value, ..*o })
            .collect();
        ModelDataset {
            observations,
            venues: self.venues.clone(),
            heats: self.heats.clone(),
        }
    }
}

/// World Championships records for the mixed-model fit.
pub fn build_model_dataset(records: &[RTRecord], filter: &ModelFilter) -> Result<ModelDataset, DataError> {
    let excluded: BTreeSet<(&str, &str)> = filter
        .exclusions
        .iter()
        .map(|e| (e.athlete_id.as_str(), e.heat_id.as_str()))
        .collect();
    let rows = records.iter().filter(|r| {
        r.competition.is_world()
            && r.gender == filter.gender
            && r.rt_seconds > 0.0
            && filter.rounds.contains(&r.round)
            && (filter.include_2022 || r.year != 2022)
            && (filter.include_positive_dq || !r.dq)
            && !excluded.contains(&(r.athlete_id.as_str(), r.heat_id.as_str()))
    });
    ModelDataset::from_triples(rows.map(|r| (r.rt_seconds, r.year, r.heat_id.as_str()))).map_err(|e| match e {
        DataError::EmptySelection(_) => {
            DataError::EmptySelection(format!("no {} World Championships records pass the model filter", filter.gender))
        }
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const ALLEN: &str = "athlete_id,gender,event,competition,year,round,heat_id,rt_seconds,dq\n\
        allen_d,men,hurdles110,world2022,2022,final,W22-110H-F,0.101,false\n";

    fn rec(athlete: &str, comp: Competition, year: u16, round: Round, heat: &str, rt: f64, dq: bool) -> RTRecord {
        RTRecord {
            athlete_id: athlete.into(),
            gender: Gender::Men,
            event: Event::Hurdles110,
            competition: comp,
            year,
            round,
            heat_id: heat.into(),
            rt_seconds: rt,
            dq,
            line: 0,
        }
    }

    #[test]
    fn parses_a_row() {
        let recs = read_csv(ALLEN.as_bytes()).unwrap();
        assert_eq!(recs.len(), 1);
        let r = &recs[0];
        assert_eq!(r.rt_seconds, 0.101);
        assert_eq!(r.competition, Competition::World2022);
        assert_eq!(r.round, Round::Final);
        assert_eq!(r.line, 2);
        assert!(!r.dq);
    }

    #[test]
    fn empty_input_is_empty_list() {
        assert!(read_csv("".as_bytes()).unwrap().is_empty());
        let header_only = format!("{}\n", CSV_HEADER.join(","));
        assert!(read_csv(header_only.as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn bad_rt_names_the_row() {
        let text = ALLEN.to_string() + "x,men,dash100,world2019,2019,heat,H1,abc,false\n";
        match read_csv(text.as_bytes()) {
            Err(DataError::BadField { line, column, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(column, "rt_seconds");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_tokens_and_short_rows() {
        let text = ALLEN.to_string() + "x,men,dash200,world2019,2019,heat,H1,0.14,false\n";
        assert!(matches!(read_csv(text.as_bytes()), Err(DataError::BadField { column: "event", .. })));
        let text = ALLEN.to_string() + "x,men,dash100,world2019\n";
        assert!(matches!(read_csv(text.as_bytes()), Err(DataError::Malformed { line: 3, .. })));
        let text = "a,b\n";
        assert!(matches!(read_csv(text.as_bytes()), Err(DataError::Malformed { line: 1, .. })));
    }

    #[test]
    fn competition_tokens_round_trip() {
        for tok in ["national2022", "world2019", "world2022", "world2023", "world1999", "world2011"] {
            let c: Competition = tok.parse().unwrap();
            assert_eq!(c.to_string(), tok);
        }
        assert_eq!("world2011".parse::<Competition>().unwrap(), Competition::WorldOther(2011));
        assert!("olympics2021".parse::<Competition>().is_err());
    }

    #[test]
    fn heat_consistency_is_checked() {
        let text = ALLEN.to_string() + "b,men,hurdles110,world2022,2022,semifinal,W22-110H-F,0.131,false\n";
        assert!(matches!(
            read_csv(text.as_bytes()),
            Err(DataError::InconsistentHeat { field: "round", line: 3, first_line: 2, .. })
        ));
    }

    #[test]
    fn athlete_without_both_groups_is_dropped() {
        let recs = vec![
            rec("a", Competition::World2022, 2022, Round::Heat, "h1", 0.12, false),
            rec("a", Competition::World2019, 2019, Round::Heat, "g1", 0.15, false),
            rec("b", Competition::World2022, 2022, Round::Heat, "h1", 0.13, false),
            rec("b", Competition::World2019, 2019, Round::Final, "g2", 0.14, true),
            rec("c", Competition::World2022, 2022, Round::Heat, "h1", 0.11, false),
            // negative control value leaves c with treatment only
            rec("c", Competition::World2019, 2019, Round::Heat, "g1", -0.02, true),
        ];
        let s = build_clustered_sample(&recs, Competition::World2022, Competition::World2019, GenderFilter::Men).unwrap();
        let ids: Vec<_> = s.clusters().iter().map(|c| c.athlete_id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
        assert_eq!(s.n_observations(), 4);
    }

    #[test]
    fn clustered_sample_errors() {
        let recs = vec![
            rec("a", Competition::World2022, 2022, Round::Heat, "h1", 0.12, false),
            rec("a", Competition::World2019, 2019, Round::Heat, "g1", 0.15, false),
        ];
        assert!(matches!(
            build_clustered_sample(&recs, Competition::World2022, Competition::World2019, GenderFilter::Men),
            Err(DataError::InsufficientClusters { found: 1 })
        ));
        assert!(matches!(
            build_clustered_sample(&recs, Competition::World2022, Competition::World2023, GenderFilter::Men),
            Err(DataError::EmptySelection(_))
        ));
        assert!(matches!(
            build_clustered_sample(&recs, Competition::World2022, Competition::World2019, GenderFilter::Women),
            Err(DataError::EmptySelection(_))
        ));
    }

    #[test]
    fn sample_constructor_rejects_single_group_clusters() {
        let err = ClusteredSample::from_pairs(&[vec![(1.0, true), (2.0, true)], vec![(1.5, true), (2.5, false)]]);
        assert!(matches!(err, Err(SampleError::SingleGroupCluster(_))));
        assert!(matches!(
            ClusteredSample::from_pairs(&[vec![(1.0, true), (2.0, false)]]),
            Err(SampleError::TooFewClusters(1))
        ));
    }

    #[test]
    fn model_filter_rules() {
        let recs = vec![
            rec("a", Competition::World2019, 2019, Round::Final, "f19", 0.15, false),
            rec("b", Competition::World2019, 2019, Round::Final, "f19", 0.09, true),
            rec("c", Competition::World2019, 2019, Round::Heat, "h19", 0.16, false),
            rec("d", Competition::World2022, 2022, Round::Semifinal, "s22", 0.12, false),
            rec("e", Competition::World2022, 2022, Round::Semifinal, "s22", -0.01, true),
            rec("f", Competition::National2022, 2022, Round::Final, "n22", 0.14, false),
        ];
        let mut filter = ModelFilter::new(Gender::Men);
        let all = build_model_dataset(&recs, &filter).unwrap();
        assert_eq!(all.len(), 3);
        assert_eq!(all.venues, vec![2019, 2022]);
        assert_eq!(all.heat_count(), 2);

        filter.include_positive_dq = false;
        assert_eq!(build_model_dataset(&recs, &filter).unwrap().len(), 2);

        filter.include_positive_dq = true;
        filter.include_2022 = false;
        let no22 = build_model_dataset(&recs, &filter).unwrap();
        assert_eq!(no22.len(), 2);
        assert_eq!(no22.venues, vec![2019]);

        filter.include_2022 = true;
        filter.exclusions.push(Exclusion {
            athlete_id: "b".into(),
            heat_id: "f19".into(),
            reason: "outlier".into(),
        });
        assert_eq!(build_model_dataset(&recs, &filter).unwrap().len(), 2);

        let women = ModelFilter::new(Gender::Women);
        assert!(matches!(build_model_dataset(&recs, &women), Err(DataError::EmptySelection(_))));
    }

    fn arb_records() -> impl Strategy<Value = Vec<RTRecord>> {
        let comp = prop_oneof![
            Just(Competition::World2022),
            Just(Competition::World2019),
            Just(Competition::World2023),
            Just(Competition::National2022),
        ];
        prop::collection::vec((0u8..8, comp, -50i32..300, any::<bool>(), 0u8..3), 0..80).prop_map(|rows| {
            rows.into_iter()
                .map(|(ath, comp, rt_ms, dq, round)| {
                    let year = match comp {
                        Competition::World2019 => 2019,
                        Competition::World2023 => 2023,
                        _ => 2022,
                    };
                    let round = [Round::Heat, Round::Semifinal, Round::Final][round as usize];
                    RTRecord {
                        athlete_id: format!("a{ath}"),
                        gender: Gender::Men,
                        event: Event::Dash100,
                        competition: comp,
                        year,
                        round,
                        heat_id: format!("{comp}-{round}"),
                        rt_seconds: rt_ms as f64 / 1000.0,
                        dq,
                        line: 0,
                    }
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn clustered_output_meets_invariants(recs in arb_records()) {
            if let Ok(s) = build_clustered_sample(&recs, Competition::World2022, Competition::World2019, GenderFilter::Pooled) {
                prop_assert!(s.n_clusters() >= 2);
                for c in s.clusters() {
                    let t = c.treatment_count();
                    prop_assert!(t >= 1 && t < c.len());
                    prop_assert!(c.values.iter().all(|v| *v > 0.0));
                }
                prop_assert_eq!(s.cluster_sizes().iter().sum::<usize>(), s.n_observations());
            }
        }

        #[test]
        fn model_filter_is_idempotent(recs in arb_records(), dq in any::<bool>(), with22 in any::<bool>()) {
            let mut filter = ModelFilter::new(Gender::Men);
            filter.include_positive_dq = dq;
            filter.include_2022 = with22;
            if let Ok(first) = build_model_dataset(&recs, &filter) {
                prop_assert!(first.values().all(|v| v > 0.0));
                let kept: Vec<RTRecord> = recs.iter().filter(|r| {
                    r.competition.is_world() && r.rt_seconds > 0.0 && filter.rounds.contains(&r.round)
                        && (with22 || r.year != 2022) && (dq || !r.dq)
                }).cloned().collect();
                let second = build_model_dataset(&kept, &filter).unwrap();
                prop_assert_eq!(first, second);
            }
        }
    }
}
