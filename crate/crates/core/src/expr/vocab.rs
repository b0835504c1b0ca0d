use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use super::{ExprError, ExpressionMatrix, GeneVocabulary};

/// Union of per-dataset gene sets, sorted lexicographically.
pub fn build_vocabulary<I, S>(sets: I) -> Result<GeneVocabulary, ExprError>
where
    I: IntoIterator<Item = S>,
    S: IntoIterator,
    S::Item: AsRef<str>,
{
    let mut union = BTreeSet::new();
    for set in sets {
        for g in set {
            union.insert(g.as_ref().to_string());
        }
    }
    if union.is_empty() {
        return Err(ExprError::Argument("no genes in any input set".into()));
    }
    GeneVocabulary::new(union.into_iter().collect())
}

/// Renames genes through `mapping`; unmapped genes keep their identifier.
///
/// Genes that end up with the same identifier are merged by summing their
/// counts. Merges involving a gene that was kept under its own name are
/// reported in the returned warning list. Output gene order follows the
/// first occurrence of each identifier.
pub fn apply_ortholog_map(
    m: &ExpressionMatrix,
    mapping: &BTreeMap<String, String>,
) -> Result<(ExpressionMatrix, Vec<String>), ExprError> {
    let mut names: Vec<String> = Vec::new();
    let mut position: HashMap<String, usize> = HashMap::new();
    let mut target = Vec::with_capacity(m.n_genes());
    // (has a retained source, has a mapped source, source names)
    let mut sources: Vec<(bool, bool, Vec<&str>)> = Vec::new();
    for g in m.vocabulary().genes() {
        let (name, mapped) = match mapping.get(g) {
            Some(t) => (t.clone(), true),
            None => (g.clone(), false),
        };
        let pos = *position.entry(name.clone()).or_insert_with(|| {
            names.push(name);
            sources.push((false, false, Vec::new()));
            names.len() - 1
        });
        let s = &mut sources[pos];
        if mapped {
            s.1 = true;
        } else {
            s.0 = true;
        }
        s.2.push(g);
        target.push(pos as u32);
    }
    let warnings = names
        .iter()
        .zip(&sources)
        .filter(|(_, s)| s.0 && s.1)
        .map(|(n, s)| format!("`{n}` merged from retained and mapped genes: {}", s.2.join(", ")))
        .collect();

    let vocab = Arc::new(GeneVocabulary::new(names)?);
    let mut rows = Vec::with_capacity(m.n_cells());
    for c in 0..m.n_cells() {
        let mut acc: BTreeMap<u32, u32> = BTreeMap::new();
        let (idx, val) = m.row(c);
        for (&g, &v) in idx.iter().zip(val) {
            let e = acc.entry(target[g as usize]).or_insert(0);
            *e = e.saturating_add(v);
        }
        rows.push(acc.into_iter().collect());
    }
    let mut out = ExpressionMatrix::from_rows(vocab, rows)?;
    if let Some(ids) = m.cell_ids() {
        out = out.with_cell_ids(ids.to_vec())?;
    }
    Ok((out, warnings))
}

/// Re-expresses `m` over `vocab`: genes missing from `m` become zero
/// columns, genes outside `vocab` are dropped. Returns the number of
/// dropped genes.
pub fn reindex_to_vocabulary(
    m: &ExpressionMatrix,
    vocab: &Arc<GeneVocabulary>,
) -> Result<(ExpressionMatrix, usize), ExprError> {
    let map: Vec<Option<u32>> = m
        .vocabulary()
        .genes()
        .iter()
        .map(|g| vocab.position(g).map(|p| p as u32))
        .collect();
    let dropped = map.iter().filter(|p| p.is_none()).count();
    let rows = (0..m.n_cells())
        .map(|c| {
            let (idx, val) = m.row(c);
            idx.iter()
                .zip(val)
                .filter_map(|(&g, &v)| map[g as usize].map(|p| (p, v)))
                .collect()
        })
        .collect();
    let mut out = ExpressionMatrix::from_rows(Arc::clone(vocab), rows)?;
    if let Some(ids) = m.cell_ids() {
        out = out.with_cell_ids(ids.to_vec())?;
    }
    Ok((out, dropped))
}

/// Reads a two-column (source, target) tab- or comma-separated table.
pub fn read_ortholog_table(text: &str) -> Result<BTreeMap<String, String>, ExprError> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = t.split(['\t', ',']).map(str::trim).collect();
        if parts.len() != 2 || parts[0].is_empty() || parts[1].is_empty() {
            return Err(ExprError::parse("ortholog table", i + 1, "expected `source<TAB>target`"));
        }
        if map.insert(parts[0].to_string(), parts[1].to_string()).is_some() {
            return Err(ExprError::parse(
                "ortholog table",
                i + 1,
                format!("`{}` mapped twice", parts[0]),
            ));
        }
    }
    Ok(map)
}
