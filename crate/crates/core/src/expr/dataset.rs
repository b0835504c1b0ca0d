use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::io::csv_io;
use super::{read_native, write_native, ExprError, ExpressionMatrix};
use crate::numkit::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "valid" | "validation" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(ExprError::Validation(format!("unknown split `{other}`"))),
        }
    }
}

/// Per-cell metadata, aligned with matrix rows.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CellAnnotations {
    pub cell_ids: Vec<String>,
    pub labels: Vec<String>,
    pub species: Vec<String>,
    pub tissue: Vec<String>,
    pub extra: Vec<BTreeMap<String, String>>,
}

impl CellAnnotations {
    /// Annotations where only the labels are known.
    pub fn from_labels(labels: Vec<String>) -> Self {
        let n = labels.len();
        CellAnnotations {
            cell_ids: (0..n).map(|i| format!("cell{i}")).collect(),
            labels,
            species: vec![String::new(); n],
            tissue: vec![String::new(); n],
            extra: vec![BTreeMap::new(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn check(&self) -> Result<(), ExprError> {
        let n = self.labels.len();
        if self.cell_ids.len() != n || self.species.len() != n || self.tissue.len() != n || self.extra.len() != n {
            return Err(ExprError::Validation("annotation columns differ in length".into()));
        }
        Ok(())
    }

    pub fn select(&self, cells: &[usize]) -> CellAnnotations {
        CellAnnotations {
            cell_ids: cells.iter().map(|&c| self.cell_ids[c].clone()).collect(),
            labels: cells.iter().map(|&c| self.labels[c].clone()).collect(),
            species: cells.iter().map(|&c| self.species[c].clone()).collect(),
            tissue: cells.iter().map(|&c| self.tissue[c].clone()).collect(),
            extra: cells.iter().map(|&c| self.extra[c].clone()).collect(),
        }
    }

    /// `(label, species, tissue)` of one cell.
    pub fn condition(&self, cell: usize) -> (String, String, String) {
        (
            self.labels[cell].clone(),
            self.species[cell].clone(),
            self.tissue[cell].clone(),
        )
    }
}

/// Matrix, annotations and per-cell split tags.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub matrix: ExpressionMatrix,
    pub annotations: CellAnnotations,
    pub split: Vec<Split>,
}

impl Dataset {
    pub fn new(
        matrix: ExpressionMatrix,
        annotations: CellAnnotations,
        split: Vec<Split>,
    ) -> Result<Self, ExprError> {
        annotations.check()?;
        if annotations.len() != matrix.n_cells() || split.len() != matrix.n_cells() {
            return Err(ExprError::Validation(format!(
                "{} cells, {} annotations, {} split tags",
                matrix.n_cells(),
                annotations.len(),
                split.len()
            )));
        }
        Ok(Dataset {
            matrix,
            annotations,
            split,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.matrix.n_cells()
    }

    pub fn indices_of(&self, split: Split) -> Vec<usize> {
        (0..self.n_cells()).filter(|&c| self.split[c] == split).collect()
    }

    pub fn select(&self, cells: &[usize]) -> Dataset {
        Dataset {
            matrix: self.matrix.select_cells(cells),
            annotations: self.annotations.select(cells),
            split: cells.iter().map(|&c| self.split[c]).collect(),
        }
    }

    pub fn subset(&self, split: Split) -> Dataset {
        self.select(&self.indices_of(split))
    }

    /// Writes `matrix.cfx` and `annotations.csv` (with a split column).
    pub fn write_dir(&self, dir: &Path) -> Result<(), ExprError> {
        fs::create_dir_all(dir)?;
        let f = fs::File::create(dir.join("matrix.cfx"))?;
        write_native(&self.matrix, std::io::BufWriter::new(f))?;
        let f = fs::File::create(dir.join("annotations.csv"))?;
        write_annotations(&self.annotations, Some(&self.split), f)
    }

    pub fn read_dir(dir: &Path) -> Result<Dataset, ExprError> {
        let matrix = read_native(fs::File::open(dir.join("matrix.cfx"))?)?;
        let (ann, split) = read_annotations(fs::File::open(dir.join("annotations.csv"))?)?;
        let split = split.ok_or_else(|| ExprError::Validation("annotations.csv has no split column".into()))?;
        Dataset::new(matrix, ann, split)
    }
}

/// Per-split cell counts: `floor(n * ratio)` for valid and test, the
/// remainder to train.
pub fn split_counts(n: usize, ratios: (f64, f64, f64)) -> Result<(usize, usize, usize), ExprError> {
    let (tr, va, te) = ratios;
    if !(tr > 0.0 && va > 0.0 && te > 0.0) {
        return Err(ExprError::Argument(format!("split ratios {ratios:?} must all be positive")));
    }
    if ((tr + va + te) - 1.0).abs() > 1e-9 {
        return Err(ExprError::Argument(format!("split ratios {ratios:?} must sum to 1")));
    }
    if n < 3 {
        return Err(ExprError::Argument(format!("cannot split {n} items three ways")));
    }
    // The small slack keeps e.g. 0.29 * 100 from flooring to 28.
    let nv = ((n as f64) * va + 1e-9).floor() as usize;
    let nt = ((n as f64) * te + 1e-9).floor() as usize;
    Ok((n - nv - nt, nv, nt))
}

/// Seeded uniform shuffle, then the first positions go to train, the next
/// to valid, the rest to test.
pub fn split_assignments(n: usize, ratios: (f64, f64, f64), seed: u64) -> Result<Vec<Split>, ExprError> {
    let (ntr, nv, _) = split_counts(n, ratios)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut RngStream::new(seed));
    let mut tags = vec![Split::Test; n];
    for (pos, &i) in order.iter().enumerate() {
        tags[i] = if pos < ntr {
            Split::Train
        } else if pos < ntr + nv {
            Split::Valid
        } else {
            Split::Test
        };
    }
    Ok(tags)
}

pub fn split_dataset(
    matrix: ExpressionMatrix,
    annotations: CellAnnotations,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<Dataset, ExprError> {
    let split = split_assignments(matrix.n_cells(), ratios, seed)?;
    Dataset::new(matrix, annotations, split)
}

/// Indices of cells whose label has at least `min_cells` members.
pub fn cells_with_common_labels(labels: &[String], min_cells: usize) -> Vec<usize> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for l in labels {
        *counts.entry(l.as_str()).or_default() += 1;
    }
    (0..labels.len()).filter(|&i| counts[labels[i].as_str()] >= min_cells).collect()
}

const FIXED_COLUMNS: [&str; 5] = ["cell_id", "label", "species", "tissue", "split"];

/// Reads `cell_id,label,species,tissue[,split][,...]`; other columns land
/// in `extra`.
pub fn read_annotations<R: Read>(reader: R) -> Result<(CellAnnotations, Option<Vec<Split>>), ExprError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers().map_err(csv_io)?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let id_col = col("cell_id").ok_or_else(|| ExprError::parse("annotations", 1, "missing cell_id column"))?;
    let label_col = col("label").ok_or_else(|| ExprError::parse("annotations", 1, "missing label column"))?;
    let species_col = col("species");
    let tissue_col = col("tissue");
    let split_col = col("split");
    let extra_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| !FIXED_COLUMNS.contains(&h.trim()))
        .map(|(i, h)| (i, h.trim().to_string()))
        .collect();

    let mut ann = CellAnnotations::default();
    let mut split = split_col.map(|_| Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| ExprError::parse("annotations", i + 2, e.to_string()))?;
        let get = |c: Option<usize>| c.and_then(|c| rec.get(c)).unwrap_or("").trim().to_string();
        ann.cell_ids.push(get(Some(id_col)));
        ann.labels.push(get(Some(label_col)));
        ann.species.push(get(species_col));
        ann.tissue.push(get(tissue_col));
        ann.extra.push(
            extra_cols
                .iter()
                .map(|(c, name)| (name.clone(), rec.get(*c).unwrap_or("").to_string()))
                .collect(),
        );
        if let Some(s) = split.as_mut() {
            s.push(get(split_col).parse()?);
        }
    }
    Ok((ann, split))
}

pub fn write_annotations<W: Write>(
    ann: &CellAnnotations,
    split: Option<&[Split]>,
    writer: W,
) -> Result<(), ExprError> {
    let extra_keys: Vec<String> = ann
        .extra
        .iter()
        .flat_map(|m| m.keys().cloned())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = vec!["cell_id", "label", "species", "tissue"];
    if split.is_some() {
        header.push("split");
    }
    header.extend(extra_keys.iter().map(String::as_str));
    w.write_record(&header).map_err(csv_io)?;
    for i in 0..ann.len() {
        let mut rec = vec![
            ann.cell_ids[i].as_str(),
            ann.labels[i].as_str(),
            ann.species[i].as_str(),
            ann.tissue[i].as_str(),
        ];
        if let Some(s) = split {
            rec.push(s[i].as_str());
        }
        for k in &extra_keys {
            rec.push(ann.extra[i].get(k).map_or("", String::as_str));
        }
        w.write_record(&rec).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_one_one_of_ten() {
        let tags = split_assignments(10, (0.8, 0.1, 0.1), 3).unwrap();
        let count = |s| tags.iter().filter(|&&t| t == s).count();
        assert_eq!((count(Split::Train), count(Split::Valid), count(Split::Test)), (8, 1, 1));
    }

    #[test]
    fn zero_ratio_and_tiny_inputs_rejected() {
        assert!(split_counts(10, (1.0, 0.0, 0.0)).is_err());
        assert!(split_counts(10, (0.5, 0.1, 0.1)).is_err());
        assert!(split_counts(2, (0.8, 0.1, 0.1)).is_err());
    }

    #[test]
    fn same_seed_same_tags() {
        let a = split_assignments(100, (0.8, 0.1, 0.1), 11).unwrap();
        let b = split_assignments(100, (0.8, 0.1, 0.1), 11).unwrap();
        let c = split_assignments(100, (0.8, 0.1, 0.1), 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn annotations_round_trip_with_extra_columns() {
        let csv = "cell_id,label,species,tissue,protocol\nc1,beta,human,pancreas,smart-seq2\nc2,alpha,human,pancreas,10x\n";
        let (ann, split) = read_annotations(csv.as_bytes()).unwrap();
        assert!(split.is_none());
        assert_eq!(ann.labels, vec!["beta", "alpha"]);
        assert_eq!(ann.extra[1]["protocol"], "10x");
        let mut out = Vec::new();
        write_annotations(&ann, Some(&[Split::Train, Split::Test]), &mut out).unwrap();
        let (back, split) = read_annotations(&out[..]).unwrap();
        assert_eq!(back, ann);
        assert_eq!(split.unwrap(), vec![Split::Train, Split::Test]);
    }

    #[test]
    fn rare_labels_filtered() {
        let labels: Vec<String> = ["a", "a", "b", "a", "c", "c"].iter().map(|s| s.to_string()).collect();
        assert_eq!(cells_with_common_labels(&labels, 2), vec![0, 1, 3, 4, 5]);
    }
}
