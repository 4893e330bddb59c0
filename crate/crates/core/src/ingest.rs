//! Dataset loading and seeded train/test splitting.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::ratings::{Rating, RatingTriples};
use crate::rng::PortableRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    /// `user \t item \t rating \t timestamp`
    MovieLens100k,
    /// `user::item::rating::timestamp`
    MovieLens1m,
    /// `user,item,rating`, optionally preceded by a header line.
    Csv { header: bool },
}

impl DatasetFormat {
    pub fn as_str(&self) -> &'static str {
        match self {
            DatasetFormat::MovieLens100k => "movielens-100k",
            DatasetFormat::MovieLens1m => "movielens-1m",
            DatasetFormat::Csv { .. } => "csv",
        }
    }

    /// Native rating bounds of the format, if it has them.
    pub fn default_scale(&self) -> (f64, f64) {
        match self {
            DatasetFormat::MovieLens100k | DatasetFormat::MovieLens1m => (1.0, 5.0),
            DatasetFormat::Csv { .. } => (f64::MIN, f64::MAX),
        }
    }

    fn split_line<'a>(&self, line: &'a str) -> Vec<&'a str> {
        match self {
            DatasetFormat::MovieLens100k => line.split('\t').collect(),
            DatasetFormat::MovieLens1m => line.split("::").collect(),
            DatasetFormat::Csv { .. } => line.split(',').map(str::trim).collect(),
        }
    }
}

impl fmt::Display for DatasetFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetFormat {
    type Err = Error;

    /// `csv` parses without a header; set it afterwards if needed.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "movielens-100k" | "ml-100k" => Ok(DatasetFormat::MovieLens100k),
            "movielens-1m" | "ml-1m" => Ok(DatasetFormat::MovieLens1m),
            "csv" => Ok(DatasetFormat::Csv { header: false }),
            other => Err(Error::InvalidArgument(format!("unknown dataset format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub format: DatasetFormat,
    pub path: PathBuf,
    pub rating_scale: (f64, f64),
}

impl DatasetSpec {
    pub fn new(format: DatasetFormat, path: impl Into<PathBuf>) -> Self {
        Self {
            format,
            path: path.into(),
            rating_scale: format.default_scale(),
        }
    }
}

/// Raw identifier <-> dense index, in order of first appearance.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl IdMap {
    pub fn from_ids(ids: impl IntoIterator<Item = String>) -> Result<Self> {
        let mut map = Self::default();
        for id in ids {
            if map.index.contains_key(&id) {
                return Err(Error::InvalidArgument(format!("duplicate id {id:?} in id table")));
            }
            map.intern(&id);
        }
        Ok(map)
    }

    pub fn intern(&mut self, id: &str) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.ids.len();
        self.ids.push(id.to_owned());
        self.index.insert(id.to_owned(), i);
        i
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn raw(&self, index: usize) -> &str {
        &self.ids[index]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Ratings in dense index space plus the tables to get the raw ids back.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub ratings: RatingTriples,
    pub users: IdMap,
    pub items: IdMap,
}

pub fn load(spec: &DatasetSpec) -> Result<Dataset> {
    load_with(spec, IdMap::default(), IdMap::default())
}

/// Load against existing id tables; unseen ids are appended.
pub fn load_with(spec: &DatasetSpec, users: IdMap, items: IdMap) -> Result<Dataset> {
    let text = std::fs::read_to_string(&spec.path).map_err(|source| Error::Io {
        path: spec.path.clone(),
        source,
    })?;
    parse_with(&text, spec.format, spec.rating_scale, users, items).map_err(|e| match e {
        Error::EmptyInput(_) => Error::EmptyInput(spec.path.display().to_string()),
        other => other,
    })
}

pub fn parse(text: &str, format: DatasetFormat, scale: (f64, f64)) -> Result<Dataset> {
    parse_with(text, format, scale, IdMap::default(), IdMap::default())
}

pub fn parse_with(
    text: &str,
    format: DatasetFormat,
    scale: (f64, f64),
    mut users: IdMap,
    mut items: IdMap,
) -> Result<Dataset> {
    let (min, max) = scale;
    if min.partial_cmp(&max) != Some(std::cmp::Ordering::Less) {
        return Err(Error::InvalidArgument(format!("rating scale [{min}, {max}] is empty")));
    }
    let skip_header = matches!(format, DatasetFormat::Csv { header: true });
    let mut entries = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if (skip_header && idx == 0) || line.trim().is_empty() {
            continue;
        }
        let line = line.trim_end_matches('\r');
        let fields = format.split_line(line);
        if fields.len() < 3 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected user, item, rating; got {line:?}"),
            });
        }
        let (user, item) = (fields[0].trim(), fields[1].trim());
        if user.is_empty() || item.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: "empty user or item id".into(),
            });
        }
        let rating: f64 = fields[2].trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("rating {:?} is not a number", fields[2]),
        })?;
        if !rating.is_finite() || rating < min || rating > max {
            return Err(Error::RatingOutOfScale {
                line: line_no,
                rating,
                min,
                max,
            });
        }
        let u = users.intern(user);
        let i = items.intern(item);
        if !seen.insert((u, i)) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("duplicate rating for user {user:?}, item {item:?}"),
            });
        }
        entries.push(Rating::new(u, i, rating));
    }
    if entries.is_empty() {
        return Err(Error::EmptyInput("input".into()));
    }
    let ratings = RatingTriples::from_parts_unchecked(users.len(), items.len(), entries);
    Ok(Dataset { ratings, users, items })
}

/// Write `user,item,rating` rows with raw ids. Ratings use the shortest
/// representation that parses back to the same `f64`.
pub fn write_csv<W: Write>(
    out: &mut W,
    ratings: &RatingTriples,
    users: &IdMap,
    items: &IdMap,
    header: bool,
) -> std::io::Result<()> {
    if header {
        writeln!(out, "user,item,rating")?;
    }
    for r in ratings.entries() {
        writeln!(out, "{},{},{}", users.raw(r.user), items.raw(r.item), r.value)?;
    }
    Ok(())
}

pub fn write_csv_file(path: &Path, ratings: &RatingTriples, users: &IdMap, items: &IdMap) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_owned(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io)?;
    let mut out = std::io::BufWriter::new(file);
    write_csv(&mut out, ratings, users, items, true).map_err(io)?;
    out.flush().map_err(io)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: RatingTriples,
    pub test: RatingTriples,
    pub train_fraction: f64,
    pub seed: u64,
}

/// Seeded uniform permutation of the entries; the first `round(f * N)` go to
/// the training fold. Both folds keep the source dimensions.
pub fn split(data: &RatingTriples, train_fraction: f64, seed: u64) -> Result<Split> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n = data.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 ratings to split, got {n}"
        )));
    }
    let n_train = (train_fraction * n as f64).round() as usize;
    if n_train == 0 {
        return Err(Error::EmptyFold("train"));
    }
    if n_train >= n {
        return Err(Error::EmptyFold("test"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    PortableRng::new(seed).shuffle(&mut order);
    let entries = data.entries();
    let pick = |idx: &[usize]| idx.iter().map(|&i| entries[i]).collect::<Vec<_>>();
    Ok(Split {
        train: RatingTriples::from_parts_unchecked(data.n_users(), data.n_items(), pick(&order[..n_train])),
        test: RatingTriples::from_parts_unchecked(data.n_users(), data.n_items(), pick(&order[n_train..])),
        train_fraction,
        seed,
    })
}
