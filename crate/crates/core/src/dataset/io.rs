use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetError, InteractionRecord, ItemCatalog, UserCatalog};
use crate::matrix::DenseMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub r_min: f64,
    pub r_max: f64,
    pub name: String,
    #[serde(default)]
    pub seed: Option<u64>,
}

type Rows = Vec<Vec<String>>;

fn read_csv(dir: &Path, file: &str, required: bool) -> Result<Option<(Vec<String>, Rows)>, DatasetError> {
    let path = dir.join(file);
    if !path.exists() {
        return if required { Err(DatasetError::MissingFile(path.display().to_string())) } else { Ok(None) };
    }
    let csv_err = |e: csv::Error| DatasetError::Csv { file: file.to_string(), message: e.to_string() };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(&path).map_err(csv_err)?;
    let header: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in reader.records() {
        rows.push(rec.map_err(csv_err)?.iter().map(str::to_string).collect());
    }
    Ok(Some((header, rows)))
}

fn parse_int(file: &str, field: &str) -> Result<i64, DatasetError> {
    field.parse().map_err(|_| DatasetError::Csv { file: file.to_string(), message: format!("not an integer: {field:?}") })
}

fn parse_real(file: &str, field: &str) -> Result<f64, DatasetError> {
    field.parse().map_err(|_| DatasetError::Csv { file: file.to_string(), message: format!("not a number: {field:?}") })
}

fn expect_header(file: &str, header: &[String], leading: &[&str]) -> Result<(), DatasetError> {
    let ok = header.len() >= leading.len() && header.iter().zip(leading).all(|(h, l)| h == l);
    if ok {
        Ok(())
    } else {
        Err(DatasetError::Csv { file: file.to_string(), message: format!("header must start with {}", leading.join(",")) })
    }
}

/// Maps sorted distinct raw values onto `0..n`.
fn dense_index(values: impl IntoIterator<Item = i64>) -> BTreeMap<i64, usize> {
    values.into_iter().collect::<BTreeSet<_>>().into_iter().enumerate().map(|(i, v)| (v, i)).collect()
}

/// Re-indexes every feature column independently.
fn dense_features(file: &str, rows: &[Vec<String>], first_col: usize) -> Result<(Vec<Vec<usize>>, Vec<usize>), DatasetError> {
    let n_fields = rows.first().map_or(0, |r| r.len().saturating_sub(first_col));
    let mut raw = vec![Vec::with_capacity(rows.len()); n_fields];
    for row in rows {
        if row.len() != first_col + n_fields {
            return Err(DatasetError::Csv { file: file.to_string(), message: "ragged row".into() });
        }
        for f in 0..n_fields {
            raw[f].push(parse_int(file, &row[first_col + f])?);
        }
    }
    let maps: Vec<_> = raw.iter().map(|col| dense_index(col.iter().copied())).collect();
    let vocab = maps.iter().map(BTreeMap::len).collect();
    let features = (0..rows.len()).map(|r| (0..n_fields).map(|f| maps[f][&raw[f][r]]).collect()).collect();
    Ok((features, vocab))
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset, DatasetError> {
    let dir = dir.as_ref();
    let manifest_path = dir.join("manifest.json");
    let manifest_text = fs::read_to_string(&manifest_path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            DatasetError::MissingFile(manifest_path.display().to_string())
        } else {
            DatasetError::Io { path: manifest_path.display().to_string(), source: e }
        }
    })?;
    let manifest: Manifest = serde_json::from_str(&manifest_text).map_err(|e| DatasetError::Manifest(e.to_string()))?;
    if !(manifest.r_min < manifest.r_max) {
        return Err(DatasetError::Manifest("r_min must be below r_max".into()));
    }

    let (uh, urows) = read_csv(dir, "users.csv", true)?.expect("required");
    expect_header("users.csv", &uh, &["user_id"])?;
    let (ih, irows) = read_csv(dir, "items.csv", true)?.expect("required");
    expect_header("items.csv", &ih, &["item_id", "category"])?;
    let (xh, xrows) = read_csv(dir, "interactions.csv", true)?.expect("required");
    expect_header("interactions.csv", &xh, &["user_id", "item_id", "feedback", "step"])?;

    let user_ids: Vec<i64> = urows.iter().map(|r| parse_int("users.csv", &r[0])).collect::<Result<_, _>>()?;
    let user_index = dense_index(user_ids.iter().copied());
    if user_index.len() != user_ids.len() {
        return Err(DatasetError::Csv { file: "users.csv".into(), message: "duplicate user_id".into() });
    }
    let item_ids: Vec<i64> = irows.iter().map(|r| parse_int("items.csv", &r[0])).collect::<Result<_, _>>()?;
    let item_index = dense_index(item_ids.iter().copied());
    if item_index.len() != item_ids.len() {
        return Err(DatasetError::Csv { file: "items.csv".into(), message: "duplicate item_id".into() });
    }

    // Catalog rows are stored in dense-id order.
    let (ufeat, user_vocab) = dense_features("users.csv", &urows, 1)?;
    let mut user_features = vec![Vec::new(); user_ids.len()];
    for (row, raw) in user_ids.iter().enumerate() {
        user_features[user_index[raw]] = ufeat[row].clone();
    }
    let raw_cats: Vec<i64> = irows.iter().map(|r| parse_int("items.csv", &r[1])).collect::<Result<_, _>>()?;
    let cat_index = dense_index(raw_cats.iter().copied());
    let (ifeat, item_vocab) = dense_features("items.csv", &irows, 2)?;
    let mut primary_category = vec![0; item_ids.len()];
    let mut item_features = vec![Vec::new(); item_ids.len()];
    for (row, raw) in item_ids.iter().enumerate() {
        primary_category[item_index[raw]] = cat_index[&raw_cats[row]];
        item_features[item_index[raw]] = ifeat[row].clone();
    }

    if xrows.is_empty() {
        return Err(DatasetError::EmptyLog);
    }
    let lookup = |map: &BTreeMap<i64, usize>, kind: &'static str, file: &str, raw: i64| {
        map.get(&raw).copied().ok_or(DatasetError::IdOutOfRange { kind, id: raw, file: file.to_string() })
    };
    let mut seen = HashSet::new();
    let mut train_log = Vec::with_capacity(xrows.len());
    for row in &xrows {
        if row.len() != 4 {
            return Err(DatasetError::Csv { file: "interactions.csv".into(), message: "expected 4 columns".into() });
        }
        let user_id = lookup(&user_index, "user", "interactions.csv", parse_int("interactions.csv", &row[0])?)?;
        let item_id = lookup(&item_index, "item", "interactions.csv", parse_int("interactions.csv", &row[1])?)?;
        let feedback = parse_real("interactions.csv", &row[2])?;
        let step = usize::try_from(parse_int("interactions.csv", &row[3])?)
            .map_err(|_| DatasetError::Csv { file: "interactions.csv".into(), message: "negative step".into() })?;
        check_feedback(feedback, &manifest)?;
        if !seen.insert((user_id, item_id, step)) {
            return Err(DatasetError::Duplicate { user: user_id, item: item_id, step });
        }
        train_log.push(InteractionRecord { user_id, item_id, feedback, step });
    }

    let truth = match read_csv(dir, "truth.csv", false)? {
        None => None,
        Some((th, trows)) => {
            expect_header("truth.csv", &th, &["user_id", "item_id", "feedback"])?;
            let (nu, ni) = (user_ids.len(), item_ids.len());
            let mut m = DenseMatrix::filled(nu, ni, f64::NAN);
            for row in &trows {
                let u = lookup(&user_index, "user", "truth.csv", parse_int("truth.csv", &row[0])?)?;
                let i = lookup(&item_index, "item", "truth.csv", parse_int("truth.csv", &row[1])?)?;
                let v = parse_real("truth.csv", &row[2])?;
                check_feedback(v, &manifest)?;
                m.set(u, i, v);
            }
            let missing = m.data.iter().filter(|v| v.is_nan()).count();
            if missing > 0 {
                return Err(DatasetError::IncompleteTruth { missing, total: nu * ni });
            }
            Some(m)
        }
    };

    Ok(Dataset {
        name: manifest.name,
        seed: manifest.seed,
        train_log,
        users: UserCatalog { features: user_features, feature_vocab: user_vocab },
        items: ItemCatalog {
            primary_category,
            features: item_features,
            n_categories: cat_index.len(),
            feature_vocab: item_vocab,
        },
        truth,
        r_min: manifest.r_min,
        r_max: manifest.r_max,
    })
}

fn check_feedback(value: f64, m: &Manifest) -> Result<(), DatasetError> {
    if value.is_finite() && value >= m.r_min && value <= m.r_max {
        Ok(())
    } else {
        Err(DatasetError::FeedbackOutOfRange { value, r_min: m.r_min, r_max: m.r_max })
    }
}

/// Canonical file contents, in a fixed order.
pub(crate) fn render_files(d: &Dataset) -> Vec<(&'static str, String)> {
    let manifest = Manifest { r_min: d.r_min, r_max: d.r_max, name: d.name.clone(), seed: d.seed };
    let mut files = vec![("manifest.json", serde_json::to_string_pretty(&manifest).expect("manifest serialises") + "\n")];

    let mut users = String::from("user_id");
    for f in 0..d.users.feature_vocab.len() {
        let _ = write!(users, ",feat_{f}");
    }
    users.push('\n');
    for (u, feats) in d.users.features.iter().enumerate() {
        let _ = write!(users, "{u}");
        feats.iter().for_each(|v| {
            let _ = write!(users, ",{v}");
        });
        users.push('\n');
    }
    files.push(("users.csv", users));

    let mut items = String::from("item_id,category");
    for f in 0..d.items.feature_vocab.len() {
        let _ = write!(items, ",feat_{f}");
    }
    items.push('\n');
    for i in 0..d.n_items() {
        let _ = write!(items, "{i},{}", d.items.primary_category[i]);
        d.items.features[i].iter().for_each(|v| {
            let _ = write!(items, ",{v}");
        });
        items.push('\n');
    }
    files.push(("items.csv", items));

    let mut log = String::from("user_id,item_id,feedback,step\n");
    for r in &d.train_log {
        let _ = writeln!(log, "{},{},{},{}", r.user_id, r.item_id, r.feedback, r.step);
    }
    files.push(("interactions.csv", log));

    if let Some(t) = &d.truth {
        let mut body = String::from("user_id,item_id,feedback\n");
        for u in 0..t.rows {
            for i in 0..t.cols {
                let _ = writeln!(body, "{u},{i},{}", t.get(u, i));
            }
        }
        files.push(("truth.csv", body));
    }
    files
}

pub fn save_dataset(d: &Dataset, dir: impl AsRef<Path>) -> Result<(), DatasetError> {
    let dir = dir.as_ref();
    let io_err = |path: &Path, source| DatasetError::Io { path: path.display().to_string(), source };
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    for (name, body) in render_files(d) {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| io_err(&path, e))?;
    }
    Ok(())
}
