//! Expression data model, file formats, quality control, normalization,
//! variable-gene selection, vocabulary harmonization and splitting.

mod dataset;
mod error;
mod hvg;
mod io;
mod matrix;
mod normalize;
mod qc;
mod vocab;

pub use dataset::{
    cells_with_common_labels, read_annotations, split_assignments, split_counts, split_dataset,
    write_annotations, CellAnnotations, Dataset, Split,
};
pub use error::ExprError;
pub use hvg::{hvg_scores, select_hvg, HVG_BINS};
pub use io::{
    load_matrix, read_dense_csv, read_matrix_market, read_native, write_dense_csv, write_native,
    MatrixFormat,
};
pub use matrix::{ExpressionMatrix, GeneVocabulary};
pub use normalize::{normalize_counts_log1p, normalize_log1p, normalize_log1p_lenient, DEFAULT_TARGET_SUM};
pub use qc::{qc_filter, total_count_percentile, QcReport, QcThresholds};
pub use vocab::{apply_ortholog_map, build_vocabulary, read_ortholog_table, reindex_to_vocabulary};
