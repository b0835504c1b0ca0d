use std::collections::HashMap;
use std::sync::Arc;

use ndarray::Array2;
use sha2::{Digest, Sha256};

use super::ExprError;

/// Ordered list of unique gene identifiers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneVocabulary {
    genes: Vec<String>,
    index: HashMap<String, usize>,
}

impl GeneVocabulary {
    pub fn new(genes: Vec<String>) -> Result<Self, ExprError> {
        let mut index = HashMap::with_capacity(genes.len());
        for (i, g) in genes.iter().enumerate() {
            if index.insert(g.clone(), i).is_some() {
                return Err(ExprError::Validation(format!("duplicate gene identifier `{g}`")));
            }
        }
        Ok(GeneVocabulary { genes, index })
    }

    pub fn genes(&self) -> &[String] {
        &self.genes
    }

    pub fn len(&self) -> usize {
        self.genes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genes.is_empty()
    }

    pub fn position(&self, gene: &str) -> Option<usize> {
        self.index.get(gene).copied()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.genes[i]
    }

    /// SHA-256 over the newline-joined identifiers, hex encoded.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for g in &self.genes {
            h.update(g.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

/// Sparse cell x gene matrix of non-negative integer counts (CSR).
///
/// Within a row, gene indices are strictly increasing and no stored
/// value is zero.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpressionMatrix {
    vocabulary: Arc<GeneVocabulary>,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<u32>,
    cell_ids: Option<Vec<String>>,
}

impl ExpressionMatrix {
    /// Builds a matrix from per-cell `(gene, count)` lists in any order.
    /// Zero counts are dropped; a repeated gene within a cell is an error.
    pub fn from_rows(
        vocabulary: Arc<GeneVocabulary>,
        rows: Vec<Vec<(u32, u32)>>,
    ) -> Result<Self, ExprError> {
        let n_genes = vocabulary.len();
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for (cell, mut row) in rows.into_iter().enumerate() {
            row.sort_unstable_by_key(|&(g, _)| g);
            for w in row.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(ExprError::Validation(format!(
                        "cell {cell} lists gene {} twice",
                        w[0].0
                    )));
                }
            }
            for (g, v) in row {
                if g as usize >= n_genes {
                    return Err(ExprError::Validation(format!(
                        "cell {cell}: gene index {g} out of range for {n_genes} genes"
                    )));
                }
                if v > 0 {
                    indices.push(g);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Ok(ExpressionMatrix {
            vocabulary,
            indptr,
            indices,
            values,
            cell_ids: None,
        })
    }

    pub fn from_dense(vocabulary: Arc<GeneVocabulary>, rows: &[Vec<u32>]) -> Result<Self, ExprError> {
        let n = vocabulary.len();
        let mut sparse = Vec::with_capacity(rows.len());
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(ExprError::Validation(format!(
                    "cell {i} has {} values for {n} genes",
                    r.len()
                )));
            }
            sparse.push(
                r.iter()
                    .enumerate()
                    .filter(|(_, &v)| v > 0)
                    .map(|(g, &v)| (g as u32, v))
                    .collect(),
            );
        }
        Self::from_rows(vocabulary, sparse)
    }

    /// Builds from raw CSR arrays, validating the canonical-form invariants.
    pub fn from_csr(
        vocabulary: Arc<GeneVocabulary>,
        indptr: Vec<usize>,
        indices: Vec<u32>,
        values: Vec<u32>,
    ) -> Result<Self, ExprError> {
        if indptr.first() != Some(&0)
            || *indptr.last().unwrap() != indices.len()
            || indices.len() != values.len()
        {
            return Err(ExprError::Validation("inconsistent CSR arrays".into()));
        }
        for (cell, w) in indptr.windows(2).enumerate() {
            if w[0] > w[1] {
                return Err(ExprError::Validation(format!("row offsets decrease at cell {cell}")));
            }
            let row = &indices[w[0]..w[1]];
            if row.windows(2).any(|p| p[0] >= p[1]) {
                return Err(ExprError::Validation(format!(
                    "cell {cell}: gene indices not strictly increasing"
                )));
            }
            if row.last().is_some_and(|&g| g as usize >= vocabulary.len()) {
                return Err(ExprError::Validation(format!("cell {cell}: gene index out of range")));
            }
            if values[w[0]..w[1]].contains(&0) {
                return Err(ExprError::Validation(format!("cell {cell}: stored zero")));
            }
        }
        Ok(ExpressionMatrix {
            vocabulary,
            indptr,
            indices,
            values,
            cell_ids: None,
        })
    }

    pub fn with_cell_ids(mut self, ids: Vec<String>) -> Result<Self, ExprError> {
        if ids.len() != self.n_cells() {
            return Err(ExprError::Validation(format!(
                "{} cell ids for {} cells",
                ids.len(),
                self.n_cells()
            )));
        }
        self.cell_ids = Some(ids);
        Ok(self)
    }

    pub fn cell_ids(&self) -> Option<&[String]> {
        self.cell_ids.as_deref()
    }

    pub fn vocabulary(&self) -> &Arc<GeneVocabulary> {
        &self.vocabulary
    }

    pub fn n_cells(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn n_genes(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    /// Stored `(gene indices, counts)` of one cell.
    pub fn row(&self, cell: usize) -> (&[u32], &[u32]) {
        let (a, b) = (self.indptr[cell], self.indptr[cell + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn get(&self, cell: usize, gene: usize) -> u32 {
        let (idx, val) = self.row(cell);
        idx.binary_search(&(gene as u32)).map_or(0, |p| val[p])
    }

    pub fn total(&self, cell: usize) -> u64 {
        self.row(cell).1.iter().map(|&v| v as u64).sum()
    }

    pub fn n_expressed(&self, cell: usize) -> usize {
        self.indptr[cell + 1] - self.indptr[cell]
    }

    pub fn dense_row(&self, cell: usize) -> Vec<u32> {
        let mut out = vec![0; self.n_genes()];
        let (idx, val) = self.row(cell);
        for (&g, &v) in idx.iter().zip(val) {
            out[g as usize] = v;
        }
        out
    }

    /// Counts as a dense `f64` matrix.
    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n_cells(), self.n_genes()));
        for c in 0..self.n_cells() {
            let (idx, val) = self.row(c);
            for (&g, &v) in idx.iter().zip(val) {
                out[[c, g as usize]] = v as f64;
            }
        }
        out
    }

    /// Number of cells expressing each gene.
    pub fn cells_per_gene(&self) -> Vec<usize> {
        let mut n = vec![0; self.n_genes()];
        for &g in &self.indices {
            n[g as usize] += 1;
        }
        n
    }

    /// Keeps the given cells, in the given order.
    pub fn select_cells(&self, cells: &[usize]) -> ExpressionMatrix {
        let mut indptr = Vec::with_capacity(cells.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for &c in cells {
            let (idx, val) = self.row(c);
            indices.extend_from_slice(idx);
            values.extend_from_slice(val);
            indptr.push(indices.len());
        }
        ExpressionMatrix {
            vocabulary: Arc::clone(&self.vocabulary),
            indptr,
            indices,
            values,
            cell_ids: self
                .cell_ids
                .as_ref()
                .map(|ids| cells.iter().map(|&c| ids[c].clone()).collect()),
        }
    }

    /// Keeps the given genes (strictly increasing indices), building a new
    /// vocabulary.
    pub fn select_genes(&self, genes: &[usize]) -> ExpressionMatrix {
        let mut remap = vec![u32::MAX; self.n_genes()];
        for (new, &old) in genes.iter().enumerate() {
            remap[old] = new as u32;
        }
        let vocab = GeneVocabulary::new(genes.iter().map(|&g| self.vocabulary.genes[g].clone()).collect())
            .expect("subset of unique identifiers");
        let mut indptr = Vec::with_capacity(self.indptr.len());
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for c in 0..self.n_cells() {
            let (idx, val) = self.row(c);
            let mut row: Vec<(u32, u32)> = idx
                .iter()
                .zip(val)
                .filter(|(&g, _)| remap[g as usize] != u32::MAX)
                .map(|(&g, &v)| (remap[g as usize], v))
                .collect();
            row.sort_unstable_by_key(|&(g, _)| g);
            for (g, v) in row {
                indices.push(g);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        ExpressionMatrix {
            vocabulary: Arc::new(vocab),
            indptr,
            indices,
            values,
            cell_ids: self.cell_ids.clone(),
        }
    }
}
