use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::CvaeError;
use crate::expr::CellAnnotations;
use crate::numkit::{Activation, MlpSpec, ParamStore, RngStream, Tape, Tensor, Var};

/// Discrete attributes a cell is generated for.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    /// Unconditional; encodes to the zero vector.
    Null,
    Attributes {
        cell_type: String,
        species: String,
        tissue: String,
    },
}

impl Condition {
    pub fn new(cell_type: impl Into<String>, species: impl Into<String>, tissue: impl Into<String>) -> Self {
        Condition::Attributes {
            cell_type: cell_type.into(),
            species: species.into(),
            tissue: tissue.into(),
        }
    }

    /// Condition of one annotated cell.
    pub fn of_cell(ann: &CellAnnotations, cell: usize) -> Self {
        let (label, species, tissue) = ann.condition(cell);
        Condition::new(label, species, tissue)
    }

    /// `cell_type` for attribute conditions, `"null"` otherwise.
    pub fn label(&self) -> &str {
        match self {
            Condition::Null => "null",
            Condition::Attributes { cell_type, .. } => cell_type,
        }
    }
}

/// Known values of each attribute, sorted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionCategories {
    pub cell_types: Vec<String>,
    pub species: Vec<String>,
    pub tissues: Vec<String>,
}

impl ConditionCategories {
    pub fn from_annotations(ann: &CellAnnotations) -> Self {
        let sorted = |v: &[String]| v.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
        ConditionCategories {
            cell_types: sorted(&ann.labels),
            species: sorted(&ann.species),
            tissues: sorted(&ann.tissue),
        }
    }

    /// Table rows of a condition; `None` for [`Condition::Null`].
    pub fn indices(&self, c: &Condition) -> Result<Option<[usize; 3]>, CvaeError> {
        let Condition::Attributes { cell_type, species, tissue } = c else {
            return Ok(None);
        };
        let find = |pool: &[String], v: &str, field: &'static str| {
            pool.binary_search_by(|p| p.as_str().cmp(v))
                .map_err(|_| CvaeError::UnknownCondition { field, value: v.to_string() })
        };
        Ok(Some([
            find(&self.cell_types, cell_type, "cell type")?,
            find(&self.species, species, "species")?,
            find(&self.tissues, tissue, "tissue")?,
        ]))
    }
}

/// Embedding tables for the three attributes followed by a linear
/// projection to `d_c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionEncoder {
    pub categories: ConditionCategories,
    pub embed_dim: usize,
    pub d_c: usize,
}

const TABLES: [&str; 3] = ["cond.type", "cond.species", "cond.tissue"];
const PROJ: &str = "cond.proj";

impl ConditionEncoder {
    pub fn new(categories: ConditionCategories, embed_dim: usize, d_c: usize) -> Result<Self, CvaeError> {
        if embed_dim == 0 || d_c == 0 {
            return Err(CvaeError::InvalidArgument("condition widths must be positive".into()));
        }
        if categories.cell_types.is_empty() || categories.species.is_empty() || categories.tissues.is_empty() {
            return Err(CvaeError::InvalidArgument("every condition attribute needs a category".into()));
        }
        Ok(ConditionEncoder { categories, embed_dim, d_c })
    }

    fn projection(&self) -> MlpSpec {
        MlpSpec::new(vec![3 * self.embed_dim, self.d_c], vec![Activation::Identity]).expect("positive widths")
    }

    fn table_sizes(&self) -> [usize; 3] {
        [
            self.categories.cell_types.len(),
            self.categories.species.len(),
            self.categories.tissues.len(),
        ]
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut RngStream) {
        let scale = 1.0 / (self.embed_dim as f64).sqrt();
        for (name, rows) in TABLES.iter().zip(self.table_sizes()) {
            let data = (0..rows * self.embed_dim).map(|_| rng.normal() * scale).collect();
            store.insert(*name, Tensor::matrix(rows, self.embed_dim, data).unwrap());
        }
        self.projection().init(store, PROJ, rng);
    }

    /// Records `[n, d_c]` condition vectors.
    pub fn encode(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        conditions: &[Condition],
    ) -> Result<Var, CvaeError> {
        let n = conditions.len();
        let idx = conditions
            .iter()
            .map(|c| self.categories.indices(c))
            .collect::<Result<Vec<_>, _>>()?;
        if idx.iter().all(Option::is_none) {
            return Ok(tape.constant(Tensor::zeros(&[n, self.d_c])));
        }
        let mut parts = Vec::with_capacity(3);
        for (t, name) in TABLES.iter().enumerate() {
            let rows: Vec<usize> = idx.iter().map(|i| i.map_or(0, |r| r[t])).collect();
            let table = tape.param(store, name)?;
            parts.push(tape.gather_rows(table, &rows)?);
        }
        let e = tape.concat_cols(parts[0], parts[1])?;
        let e = tape.concat_cols(e, parts[2])?;
        let c = self.projection().forward(tape, store, PROJ, e)?;
        if idx.iter().all(Option::is_some) {
            return Ok(c);
        }
        let mut mask = Vec::with_capacity(n * self.d_c);
        for i in &idx {
            mask.extend(std::iter::repeat_n(if i.is_some() { 1.0 } else { 0.0 }, self.d_c));
        }
        let mask = tape.constant(Tensor::matrix(n, self.d_c, mask)?);
        Ok(tape.mul(c, mask)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn encoder() -> (ConditionEncoder, ParamStore) {
        let cats = ConditionCategories {
            cell_types: vec!["alpha".into(), "beta".into()],
            species: vec!["human".into()],
            tissues: vec!["pancreas".into()],
        };
        let enc = ConditionEncoder::new(cats, 4, 6).unwrap();
        let mut store = ParamStore::new();
        enc.init(&mut store, &mut RngStream::new(3));
        (enc, store)
    }

    #[test]
    fn null_condition_is_zero() {
        let (enc, store) = encoder();
        let mut tape = Tape::new();
        let conds = [Condition::new("beta", "human", "pancreas"), Condition::Null];
        let c = enc.encode(&mut tape, &store, &conds).unwrap();
        let v = tape.value(c).unwrap();
        assert!(v.row(0).iter().any(|&x| x != 0.0));
        assert!(v.row(1).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn unknown_category_is_an_error() {
        let (enc, store) = encoder();
        let mut tape = Tape::new();
        let err = enc
            .encode(&mut tape, &store, &[Condition::new("gamma", "human", "pancreas")])
            .unwrap_err();
        assert!(matches!(err, CvaeError::UnknownCondition { field: "cell type", ref value } if value == "gamma"));
    }

    #[test]
    fn distinct_types_encode_differently() {
        let (enc, store) = encoder();
        let mut tape = Tape::new();
        let conds = [Condition::new("alpha", "human", "pancreas"), Condition::new("beta", "human", "pancreas")];
        let c = enc.encode(&mut tape, &store, &conds).unwrap();
        let v = tape.value(c).unwrap();
        assert_ne!(v.row(0), v.row(1));
    }
}
