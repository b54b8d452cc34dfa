use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use nalgebra::DMatrix;

use super::partition::LabeledRows;
use super::{rows_to_matrix, Label, Task, TaskDataset};
use crate::error::{Error, Result};

/// Mapping from raw label cells to classes.
///
/// Without an explicit map only numeric `1` / `-1` (in any float spelling)
/// are accepted; anything else is an error rather than a guess.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabelMap {
    entries: HashMap<String, Label>,
}

impl LabelMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(mut self, raw: impl Into<String>, label: Label) -> Self {
        self.entries.insert(raw.into(), label);
        self
    }

    /// Parses `raw=+1,raw=-1` pairs, e.g. `yes=1,no=-1`.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut map = LabelMap::new();
        for pair in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (raw, target) = pair
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("label map entry `{pair}` is not raw=label")))?;
            let label = match target.trim() {
                "1" | "+1" => Label::Positive,
                "-1" => Label::Negative,
                other => {
                    return Err(Error::Config(format!(
                        "label map target `{other}` must be 1 or -1"
                    )))
                }
            };
            map = map.insert(raw.trim(), label);
        }
        if map.entries.is_empty() {
            return Err(Error::Config("label map is empty".into()));
        }
        Ok(map)
    }

    fn map(&self, raw: &str, row: usize) -> Result<Label> {
        let raw = raw.trim();
        if !self.entries.is_empty() {
            return self.entries.get(raw).copied().ok_or_else(|| Error::Parse {
                row,
                message: format!("label `{raw}` is not in the label map"),
            });
        }
        match raw.parse::<f64>() {
            Ok(v) if v == 1.0 => Ok(Label::Positive),
            Ok(v) if v == -1.0 => Ok(Label::Negative),
            _ => Err(Error::Parse {
                row,
                message: format!("label `{raw}` is not +1/-1; supply a label map"),
            }),
        }
    }
}

/// Column roles for [`load_csv`].
#[derive(Clone, Debug)]
pub struct CsvOptions {
    pub label_column: String,
    pub task_column: Option<String>,
    pub label_map: LabelMap,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            label_column: "label".into(),
            task_column: None,
            label_map: LabelMap::new(),
        }
    }
}

struct Table {
    headers: Vec<String>,
    records: Vec<Vec<String>>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)?;
        let headers = reader.headers()?.iter().map(str::to_string).collect();
        let mut records = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            records.push(rec.iter().map(str::to_string).collect());
        }
        Ok(Table { headers, records })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("column `{name}` not found in header")))
    }
}

fn parse_feature(cell: &str, row: usize, column: &str) -> Result<f64> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            row,
            message: format!("feature `{column}` value `{cell}` is not a finite number"),
        }),
    }
}

fn parse_task(cell: &str, row: usize) -> Result<u32> {
    cell.parse::<u32>()
        .ok()
        .or_else(|| {
            cell.parse::<f64>()
                .ok()
                .filter(|v| v.fract() == 0.0 && *v >= 0.0 && *v <= u32::MAX as f64)
                .map(|v| v as u32)
        })
        .ok_or_else(|| Error::Parse {
            row,
            message: format!("task id `{cell}` is not a non-negative integer"),
        })
}

struct Parsed {
    feature_names: Vec<String>,
    features: Vec<Vec<f64>>,
    labels: Vec<Label>,
    tasks: Option<Vec<u32>>,
}

fn parse_labeled(path: &Path, opts: &CsvOptions) -> Result<Parsed> {
    let table = Table::read(path)?;
    let label_idx = table.column(&opts.label_column)?;
    let task_idx = opts
        .task_column
        .as_deref()
        .map(|c| table.column(c))
        .transpose()?;
    let feature_cols: Vec<usize> = (0..table.headers.len())
        .filter(|&i| i != label_idx && Some(i) != task_idx)
        .collect();
    let feature_names = feature_cols
        .iter()
        .map(|&i| table.headers[i].clone())
        .collect();
    let mut features = Vec::with_capacity(table.records.len());
    let mut labels = Vec::with_capacity(table.records.len());
    let mut tasks = task_idx.map(|_| Vec::with_capacity(table.records.len()));
    for (r, rec) in table.records.iter().enumerate() {
        let row = r + 1;
        let x = feature_cols
            .iter()
            .map(|&i| parse_feature(&rec[i], row, &table.headers[i]))
            .collect::<Result<Vec<_>>>()?;
        features.push(x);
        labels.push(opts.label_map.map(&rec[label_idx], row)?);
        if let (Some(ti), Some(ts)) = (task_idx, tasks.as_mut()) {
            ts.push(parse_task(&rec[ti], row)?);
        }
    }
    Ok(Parsed {
        feature_names,
        features,
        labels,
        tasks,
    })
}

/// Loads a labeled CSV and groups its rows into tasks.
///
/// Tasks are ordered by ascending task id; without a task column all rows form
/// task 1. Within a task, rows keep their file order.
pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<TaskDataset> {
    let parsed = parse_labeled(path.as_ref(), opts)?;
    let d = parsed.feature_names.len();
    let mut groups: BTreeMap<u32, (Vec<Vec<f64>>, Vec<Vec<f64>>)> = BTreeMap::new();
    for (i, (x, y)) in parsed.features.into_iter().zip(parsed.labels).enumerate() {
        let id = parsed.tasks.as_ref().map_or(1, |t| t[i]);
        let entry = groups.entry(id).or_default();
        match y {
            Label::Positive => entry.0.push(x),
            Label::Negative => entry.1.push(x),
        }
    }
    if groups.is_empty() {
        return Err(Error::Validation("csv contains no data rows".into()));
    }
    let tasks = groups
        .into_iter()
        .map(|(id, (p, n))| Task::new(id, rows_to_matrix(&p, d), rows_to_matrix(&n, d)))
        .collect();
    TaskDataset::new(tasks, parsed.feature_names)
}

/// Loads labeled rows without grouping; input for [`super::partition_tasks`].
pub fn load_rows(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<LabeledRows> {
    let parsed = parse_labeled(path.as_ref(), opts)?;
    let d = parsed.feature_names.len();
    Ok(LabeledRows {
        features: rows_to_matrix(&parsed.features, d),
        labels: parsed.labels,
        feature_names: parsed.feature_names,
    })
}

/// Unlabeled (or optionally labeled) rows to score with a trained model.
#[derive(Clone, Debug)]
pub struct FeatureRows {
    pub features: DMatrix<f64>,
    pub task_ids: Vec<u32>,
    pub labels: Option<Vec<Label>>,
}

/// Reads the named feature columns plus a task column.
///
/// Without a task column in the header every row is assigned `default_task`,
/// or the missing column is reported when that is `None`. A label column is read when present in the header so that callers can
/// score predictions; it is not required.
pub fn load_feature_rows(
    path: impl AsRef<Path>,
    feature_names: &[String],
    task_column: &str,
    default_task: Option<u32>,
    label_column: &str,
    label_map: &LabelMap,
) -> Result<FeatureRows> {
    let table = Table::read(path.as_ref())?;
    let cols = feature_names
        .iter()
        .map(|n| table.column(n))
        .collect::<Result<Vec<_>>>()?;
    let task_idx = match (table.column(task_column), default_task) {
        (Ok(i), _) => Some(i),
        (Err(_), Some(_)) => None,
        (Err(e), None) => return Err(e),
    };
    let label_idx = table.column(label_column).ok();
    let mut feats = Vec::with_capacity(table.records.len());
    let mut task_ids = Vec::with_capacity(table.records.len());
    let mut labels = label_idx.map(|_| Vec::new());
    for (r, rec) in table.records.iter().enumerate() {
        let row = r + 1;
        feats.push(
            cols.iter()
                .map(|&i| parse_feature(&rec[i], row, &table.headers[i]))
                .collect::<Result<Vec<_>>>()?,
        );
        task_ids.push(match (task_idx, default_task) {
            (Some(i), _) => parse_task(&rec[i], row)?,
            (None, t) => t.expect("checked with the header"),
        });
        if let (Some(li), Some(ls)) = (label_idx, labels.as_mut()) {
            ls.push(label_map.map(&rec[li], row)?);
        }
    }
    Ok(FeatureRows {
        features: rows_to_matrix(&feats, feature_names.len()),
        task_ids,
        labels,
    })
}

/// Writes the labeled rows of `ds` with `label` and `task` columns appended.
///
/// Numbers use the shortest round-trip representation, so reading the file
/// back with [`load_csv`] reproduces the values bit for bit.
pub fn write_csv(ds: &TaskDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = ds.feature_names().to_vec();
    header.push("label".into());
    header.push("task".into());
    w.write_record(&header)?;
    for task in ds.tasks() {
        for (x, y) in task.labeled_rows() {
            let mut rec: Vec<String> = x.iter().map(|v| v.to_string()).collect();
            rec.push(y.as_i8().to_string());
            rec.push(task.task_id.to_string());
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes the Universum rows of `ds` (features plus `task`, no label).
pub fn write_universum_csv(ds: &TaskDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = ds.feature_names().to_vec();
    header.push("task".into());
    w.write_record(&header)?;
    for task in ds.tasks() {
        for r in task.universum.row_iter() {
            let mut rec: Vec<String> = r.iter().map(|v| v.to_string()).collect();
            rec.push(task.task_id.to_string());
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn single_task_without_task_column() {
        let f = file("a,b,label\n0,1,1\n1,1,1\n2,0,-1\n3,0,-1\n");
        let ds = load_csv(f.path(), &CsvOptions::default()).unwrap();
        assert_eq!(ds.n_tasks(), 1);
        assert_eq!(ds.tasks()[0].positives.nrows(), 2);
        assert_eq!(ds.tasks()[0].negatives.nrows(), 2);
        assert_eq!(ds.feature_names(), &["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn groups_by_task_column() {
        let f = file("x,y,t\n0,1,1\n1,-1,1\n2,1,2\n3,-1,2\n");
        let opts = CsvOptions {
            label_column: "y".into(),
            task_column: Some("t".into()),
            ..Default::default()
        };
        let ds = load_csv(f.path(), &opts).unwrap();
        assert_eq!(ds.task_ids(), vec![1, 2]);
        assert_eq!(ds.dimension(), 1);
    }

    #[test]
    fn missing_column_is_config_error() {
        let f = file("x,y\n0,1\n");
        let opts = CsvOptions {
            label_column: "class".into(),
            ..Default::default()
        };
        assert!(matches!(load_csv(f.path(), &opts), Err(Error::Config(_))));
    }

    #[test]
    fn non_numeric_cell_reports_row() {
        let f = file("x,label\n0,1\nabc,-1\n");
        match load_csv(f.path(), &CsvOptions::default()) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn one_class_task_names_the_task() {
        let f = file("x,label,task\n0,1,1\n1,-1,1\n2,1,7\n");
        let opts = CsvOptions {
            task_column: Some("task".into()),
            ..Default::default()
        };
        let err = load_csv(f.path(), &opts).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert!(err.to_string().contains("task 7"));
    }

    #[test]
    fn label_map_required_for_other_labels() {
        let f = file("x,label\n0,yes\n1,no\n");
        assert!(load_csv(f.path(), &CsvOptions::default()).is_err());
        let opts = CsvOptions {
            label_map: LabelMap::parse("yes=1,no=-1").unwrap(),
            ..Default::default()
        };
        let ds = load_csv(f.path(), &opts).unwrap();
        assert_eq!(ds.tasks()[0].positives[(0, 0)], 0.0);
    }

    #[test]
    fn label_map_rejects_bad_targets() {
        assert!(LabelMap::parse("yes=2").is_err());
        assert!(LabelMap::parse("yes").is_err());
    }

    #[test]
    fn feature_rows_by_name() {
        let f = file("task,b,a\n2,1.5,0.5\n");
        let names = vec!["a".to_string(), "b".to_string()];
        let rows = load_feature_rows(f.path(), &names, "task", None, "label", &LabelMap::new()).unwrap();
        assert_eq!(rows.features.row(0).iter().copied().collect::<Vec<_>>(), vec![0.5, 1.5]);
        assert_eq!(rows.task_ids, vec![2]);
        assert!(rows.labels.is_none());
    }

    #[test]
    fn feature_rows_fall_back_to_default_task() {
        let f = file("a\n1\n2\n");
        let names = vec!["a".to_string()];
        let rows = load_feature_rows(f.path(), &names, "task", Some(4), "label", &LabelMap::new()).unwrap();
        assert_eq!(rows.task_ids, vec![4, 4]);
        assert!(load_feature_rows(f.path(), &names, "task", None, "label", &LabelMap::new()).is_err());
    }
}
