use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{self, BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::normalize::{compact_name, normalize_name};
use crate::ingest::GeoPoint;

const HEADER: [&str; 8] = [
    "id",
    "primary_name",
    "alternate_names",
    "latitude",
    "longitude",
    "country_code",
    "population",
    "kind",
];

const EARTH_RADIUS_KM: f64 = 6371.0088;

#[derive(thiserror::Error, Debug)]
pub enum GazetteerError {
    #[error("cannot read gazetteer {path}")]
    Unreadable {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("malformed gazetteer header: expected {expected:?}, found {found:?}")]
    BadHeader { expected: String, found: String },
    #[error("gazetteer is empty (no header)")]
    MissingHeader,
    #[error("invalid country code {0:?}")]
    InvalidCountryCode(String),
}

/// ISO-3166 alpha-2 country code, two uppercase ASCII letters.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CountryCode([u8; 2]);

impl CountryCode {
    pub fn as_str(&self) -> &str {
        std::str::from_utf8(&self.0).expect("country codes are ASCII")
    }
}

impl FromStr for CountryCode {
    type Err = GazetteerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.as_bytes() {
            [a, b] if a.is_ascii_uppercase() && b.is_ascii_uppercase() => Ok(CountryCode([*a, *b])),
            _ => Err(GazetteerError::InvalidCountryCode(s.to_string())),
        }
    }
}

impl fmt::Display for CountryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for CountryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_str())
    }
}

impl Serialize for CountryCode {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for CountryCode {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryKind {
    City,
    Country,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GazetteerEntry {
    pub id: String,
    pub primary_name: String,
    pub alternate_names: Vec<String>,
    pub country_code: CountryCode,
    pub latitude: f64,
    pub longitude: f64,
    pub population: u64,
    pub kind: EntryKind,
}

impl GazetteerEntry {
    pub fn city_id(&self) -> Option<&str> {
        (self.kind == EntryKind::City).then_some(self.id.as_str())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.primary_name.as_str()).chain(self.alternate_names.iter().map(String::as_str))
    }
}

/// Name dictionary backing all location resolution. Immutable after load.
#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    entries: Vec<GazetteerEntry>,
    name_index: HashMap<String, Vec<usize>>,
    country_name_index: HashMap<String, CountryCode>,
    compact_names: BTreeSet<String>,
    country_codes: BTreeSet<CountryCode>,
    by_id: HashMap<String, usize>,
    city_grid: HashMap<(i32, i32), Vec<usize>>,
    skipped_rows: usize,
}

static MINI_GAZETTEER: &str = include_str!("../../data/mini_gazetteer.tsv");

impl Gazetteer {
    /// The bundled mini-gazetteer: European and migration-route countries
    /// with their principal cities, plus a handful of well-known homonyms.
    pub fn mini() -> Self {
        Self::from_reader(MINI_GAZETTEER.as_bytes()).expect("bundled gazetteer is well-formed")
    }

    pub fn load(path: &Path) -> Result<Self, GazetteerError> {
        let unreadable = |source| GazetteerError::Unreadable {
            path: path.display().to_string(),
            source,
        };
        let file = std::fs::File::open(path).map_err(unreadable)?;
        Self::from_reader(BufReader::new(file)).map_err(|e| match e {
            GazetteerError::Unreadable { source, .. } => unreadable(source),
            other => other,
        })
    }

    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, GazetteerError> {
        let io_err = |source| GazetteerError::Unreadable {
            path: "<reader>".into(),
            source,
        };
        let mut lines = reader.lines();
        let header = lines.next().ok_or(GazetteerError::MissingHeader)?.map_err(io_err)?;
        let columns: Vec<&str> = header.trim_end_matches('\r').split('\t').map(str::trim).collect();
        if columns != HEADER {
            return Err(GazetteerError::BadHeader {
                expected: HEADER.join("\t"),
                found: header,
            });
        }
        let mut entries = Vec::new();
        let mut skipped = 0;
        for line in lines {
            let line = line.map_err(io_err)?;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            match parse_row(line) {
                Some(entry) => entries.push(entry),
                None => skipped += 1,
            }
        }
        let mut gz = Self::from_entries(entries);
        gz.skipped_rows = skipped;
        Ok(gz)
    }

    pub fn from_entries(entries: Vec<GazetteerEntry>) -> Self {
        let mut gz = Gazetteer {
            entries,
            ..Gazetteer::default()
        };
        for (idx, entry) in gz.entries.iter().enumerate() {
            gz.by_id.entry(entry.id.clone()).or_insert(idx);
            gz.country_codes.insert(entry.country_code);
            for name in entry.names() {
                let key = normalize_name(name);
                if key.is_empty() {
                    continue;
                }
                gz.compact_names.insert(compact_name(&key));
                let slot = gz.name_index.entry(key.clone()).or_default();
                if !slot.contains(&idx) {
                    slot.push(idx);
                }
                if entry.kind == EntryKind::Country {
                    gz.country_name_index.entry(key).or_insert(entry.country_code);
                }
            }
            if entry.kind == EntryKind::City {
                gz.city_grid.entry(grid_cell(entry.latitude, entry.longitude)).or_default().push(idx);
            }
        }
        gz
    }

    pub fn entries(&self) -> &[GazetteerEntry] {
        &self.entries
    }

    pub fn entry(&self, idx: usize) -> &GazetteerEntry {
        &self.entries[idx]
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Rows dropped during load because they could not be parsed.
    pub fn skipped_rows(&self) -> usize {
        self.skipped_rows
    }

    /// Candidate entries for a name, case- and accent-insensitive.
    pub fn lookup(&self, name: &str) -> &[usize] {
        self.lookup_normalized(&normalize_name(name))
    }

    pub(crate) fn lookup_normalized(&self, key: &str) -> &[usize] {
        self.name_index.get(key).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.name_index.keys().map(String::as_str)
    }

    pub fn country_by_name(&self, name: &str) -> Option<CountryCode> {
        self.country_name_index.get(&normalize_name(name)).copied()
    }

    pub fn has_country_code(&self, code: CountryCode) -> bool {
        self.country_codes.contains(&code)
    }

    pub fn country_codes(&self) -> impl Iterator<Item = CountryCode> + '_ {
        self.country_codes.iter().copied()
    }

    pub fn by_id(&self, id: &str) -> Option<&GazetteerEntry> {
        self.by_id.get(id).map(|&i| &self.entries[i])
    }

    /// Whether a hashtag names a place: its normalized form equals a
    /// gazetteer name (also in compact, separator-free form) or a country
    /// code.
    pub fn is_location_name(&self, tag: &str) -> bool {
        let key = normalize_name(tag);
        if self.name_index.contains_key(&key) || self.compact_names.contains(&key) {
            return true;
        }
        key.to_ascii_uppercase()
            .parse::<CountryCode>()
            .is_ok_and(|code| self.country_codes.contains(&code))
    }

    /// Nearest city within `max_km` of the point, ties broken by entry
    /// order.
    pub fn nearest_city(&self, point: GeoPoint, max_km: f64) -> Option<usize> {
        let (row, col) = grid_cell(point.lat, point.lon);
        let lat_span = (max_km / 111.0).ceil() as i32 + 1;
        // widest longitude span needed anywhere in the scanned latitude band
        let cos = (point.lat.abs() + lat_span as f64).min(90.0).to_radians().cos().max(0.01);
        let lon_span = ((max_km / (111.32 * cos)).ceil() as i32 + 1).min(180);
        let mut best: Option<(f64, usize)> = None;
        for dr in -lat_span..=lat_span {
            for dc in -lon_span..=lon_span {
                let cell = (row + dr, wrap_lon_cell(col + dc));
                let Some(candidates) = self.city_grid.get(&cell) else {
                    continue;
                };
                for &idx in candidates {
                    let e = &self.entries[idx];
                    let d = haversine_km(point.lat, point.lon, e.latitude, e.longitude);
                    if d > max_km {
                        continue;
                    }
                    let better = match best {
                        None => true,
                        Some((bd, bi)) => d < bd || (d == bd && idx < bi),
                    };
                    if better {
                        best = Some((d, idx));
                    }
                }
            }
        }
        best.map(|(_, idx)| idx)
    }
}

fn grid_cell(lat: f64, lon: f64) -> (i32, i32) {
    (lat.floor() as i32, wrap_lon_cell(lon.floor() as i32))
}

fn wrap_lon_cell(col: i32) -> i32 {
    (col + 180).rem_euclid(360) - 180
}

pub fn haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * a.sqrt().min(1.0).asin()
}

fn parse_row(line: &str) -> Option<GazetteerEntry> {
    let fields: Vec<&str> = line.split('\t').collect();
    let [id, name, alternates, lat, lon, cc, population, kind] = fields.as_slice() else {
        return None;
    };
    let id = id.trim();
    let primary_name = name.trim();
    if id.is_empty() || primary_name.is_empty() {
        return None;
    }
    let latitude: f64 = lat.trim().parse().ok()?;
    let longitude: f64 = lon.trim().parse().ok()?;
    GeoPoint::new(latitude, longitude)?;
    let kind = match kind.trim() {
        "city" => EntryKind::City,
        "country" => EntryKind::Country,
        _ => return None,
    };
    Some(GazetteerEntry {
        id: id.to_string(),
        primary_name: primary_name.to_string(),
        alternate_names: alternates
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect(),
        country_code: cc.trim().parse().ok()?,
        latitude,
        longitude,
        population: population.trim().parse().ok()?,
        kind,
    })
}
