use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use super::{ExprError, ExpressionMatrix, GeneVocabulary};

const NATIVE_MAGIC: &[u8; 4] = b"CFX1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixFormat {
    /// Coordinate Matrix Market, cells as rows.
    MatrixMarket,
    /// Header of gene identifiers, first column of cell identifiers.
    DenseCsv,
    /// `CFX1` binary CSR.
    Native,
}

impl FromStr for MatrixFormat {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mtx" | "matrix-market" | "mm" => Ok(MatrixFormat::MatrixMarket),
            "csv" | "dense-csv" => Ok(MatrixFormat::DenseCsv),
            "native" | "cfx" => Ok(MatrixFormat::Native),
            other => Err(ExprError::Argument(format!("unknown matrix format `{other}`"))),
        }
    }
}

impl MatrixFormat {
    /// Guesses the format from the file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "mtx" => Some(MatrixFormat::MatrixMarket),
            "csv" => Some(MatrixFormat::DenseCsv),
            "cfx" => Some(MatrixFormat::Native),
            _ => None,
        }
    }
}

pub fn load_matrix(path: &Path, format: MatrixFormat) -> Result<ExpressionMatrix, ExprError> {
    match format {
        MatrixFormat::MatrixMarket => {
            let genes = companion_genes(path)?;
            let file = fs::File::open(path)?;
            read_matrix_market(BufReader::new(file), &path.display().to_string(), genes)
        }
        MatrixFormat::DenseCsv => {
            let file = fs::File::open(path)?;
            read_dense_csv(file, &path.display().to_string())
        }
        MatrixFormat::Native => read_native(fs::File::open(path)?),
    }
}

fn companion_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".genes");
    PathBuf::from(s)
}

/// Gene identifiers for a Matrix Market file live in `<file>.genes`, one
/// per line.
fn companion_genes(path: &Path) -> Result<Option<Vec<String>>, ExprError> {
    let p = companion_path(path);
    if !p.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&p)?;
    Ok(Some(
        text.lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect(),
    ))
}

fn parse_count(raw: &str, what: impl Fn() -> String) -> Result<Option<u32>, String> {
    if let Ok(v) = raw.parse::<u32>() {
        return Ok(Some(v));
    }
    match raw.parse::<f64>() {
        Ok(v) if v < 0.0 => Err(format!("negative count {raw} at {}", what())),
        Ok(v) if v.fract() != 0.0 || !v.is_finite() => {
            Err(format!("non-integral count {raw} at {}", what()))
        }
        Ok(v) if v <= u32::MAX as f64 => Ok(Some(v as u32)),
        Ok(_) => Err(format!("count {raw} too large at {}", what())),
        Err(_) => Ok(None),
    }
}

/// Reads an integer (or integral real) coordinate Matrix Market stream.
/// Without gene identifiers, genes are named `gene1..geneN`.
pub fn read_matrix_market<R: BufRead>(
    reader: R,
    source_name: &str,
    genes: Option<Vec<String>>,
) -> Result<ExpressionMatrix, ExprError> {
    let mut lines = reader.lines().enumerate();
    let perr = |line: usize, msg: String| ExprError::parse(source_name, line, msg);

    let (_, header) = lines.next().ok_or_else(|| perr(1, "empty file".into()))?;
    let header = header?;
    let fields: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if fields.len() < 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" || fields[2] != "coordinate" {
        return Err(perr(1, "expected `%%MatrixMarket matrix coordinate` header".into()));
    }
    if fields[3] != "integer" && fields[3] != "real" {
        return Err(perr(1, format!("unsupported field `{}`", fields[3])));
    }
    if fields[4] != "general" {
        return Err(perr(1, format!("unsupported symmetry `{}`", fields[4])));
    }

    let mut size: Option<(usize, usize, usize)> = None;
    let mut rows: Vec<Vec<(u32, u32)>> = Vec::new();
    let mut seen = 0usize;
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let parts: Vec<&str> = t.split_whitespace().collect();
        match size {
            None => {
                if parts.len() != 3 {
                    return Err(perr(lineno, "expected `rows cols nnz`".into()));
                }
                let p = |s: &str| s.parse::<usize>().map_err(|e| perr(lineno, format!("{e}")));
                let (r, c, n) = (p(parts[0])?, p(parts[1])?, p(parts[2])?);
                size = Some((r, c, n));
                rows = vec![Vec::new(); r];
            }
            Some((r, c, _)) => {
                if parts.len() != 3 {
                    return Err(perr(lineno, "expected `row col value`".into()));
                }
                let p = |s: &str| s.parse::<usize>().map_err(|e| perr(lineno, format!("{e}")));
                let (i, j) = (p(parts[0])?, p(parts[1])?);
                if i == 0 || j == 0 || i > r || j > c {
                    return Err(perr(lineno, format!("entry ({i}, {j}) outside {r} x {c}")));
                }
                let v = parse_count(parts[2], || format!("cell {} gene {}", i - 1, j - 1))
                    .map_err(ExprError::Validation)?
                    .ok_or_else(|| perr(lineno, format!("bad value `{}`", parts[2])))?;
                rows[i - 1].push(((j - 1) as u32, v));
                seen += 1;
            }
        }
    }
    let (_, c, n) = size.ok_or_else(|| perr(1, "missing size line".into()))?;
    if seen != n {
        return Err(perr(0, format!("declared {n} entries, found {seen}")));
    }
    let genes = match genes {
        Some(g) if g.len() != c => {
            return Err(ExprError::Validation(format!(
                "{} gene identifiers for {c} columns",
                g.len()
            )))
        }
        Some(g) => g,
        None => (1..=c).map(|j| format!("gene{j}")).collect(),
    };
    let vocab = Arc::new(GeneVocabulary::new(genes)?);
    ExpressionMatrix::from_rows(vocab, rows)
}

pub fn read_dense_csv<R: Read>(reader: R, source_name: &str) -> Result<ExpressionMatrix, ExprError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
    let mut records = rdr.records();
    let header = records
        .next()
        .ok_or_else(|| ExprError::parse(source_name, 1, "empty file"))?
        .map_err(|e| ExprError::parse(source_name, 1, e.to_string()))?;
    if header.len() < 2 {
        return Err(ExprError::parse(source_name, 1, "header needs a cell column and at least one gene"));
    }
    let genes: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let vocab = Arc::new(GeneVocabulary::new(genes)?);
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for (i, rec) in records.enumerate() {
        let lineno = i + 2;
        let rec = rec.map_err(|e| ExprError::parse(source_name, lineno, e.to_string()))?;
        if rec.len() != vocab.len() + 1 {
            return Err(ExprError::parse(
                source_name,
                lineno,
                format!("expected {} fields, found {}", vocab.len() + 1, rec.len()),
            ));
        }
        let cell = rec[0].trim().to_string();
        let mut row = Vec::new();
        for (g, raw) in rec.iter().skip(1).enumerate() {
            let v = parse_count(raw.trim(), || format!("cell `{cell}` gene `{}`", vocab.name(g)))
                .map_err(ExprError::Validation)?
                .ok_or_else(|| ExprError::parse(source_name, lineno, format!("bad value `{raw}`")))?;
            if v > 0 {
                row.push((g as u32, v));
            }
        }
        ids.push(cell);
        rows.push(row);
    }
    ExpressionMatrix::from_rows(vocab, rows)?.with_cell_ids(ids)
}

pub fn write_dense_csv<W: Write>(m: &ExpressionMatrix, writer: W) -> Result<(), ExprError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["cell_id".to_string()];
    header.extend(m.vocabulary().genes().iter().cloned());
    w.write_record(&header).map_err(csv_io)?;
    for c in 0..m.n_cells() {
        let id = m
            .cell_ids()
            .map_or_else(|| format!("cell{c}"), |ids| ids[c].clone());
        let mut rec = vec![id];
        rec.extend(m.dense_row(c).iter().map(u32::to_string));
        w.write_record(&rec).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_io(e: csv::Error) -> ExprError {
    ExprError::Io(std::io::Error::other(e))
}

/// `CFX1` layout, little-endian: `n_cells u64, n_genes u64, nnz u64`,
/// row offsets (`n_cells + 1` x u64), gene indices (`nnz` x u32), counts
/// (`nnz` x u32), then `n_genes` identifiers as `u32` byte length + UTF-8.
pub fn write_native<W: Write>(m: &ExpressionMatrix, mut w: W) -> Result<(), ExprError> {
    w.write_all(NATIVE_MAGIC)?;
    for n in [m.n_cells(), m.n_genes(), m.nnz()] {
        w.write_all(&(n as u64).to_le_bytes())?;
    }
    for &o in m.indptr() {
        w.write_all(&(o as u64).to_le_bytes())?;
    }
    for &g in m.indices() {
        w.write_all(&g.to_le_bytes())?;
    }
    for &v in m.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    for g in m.vocabulary().genes() {
        w.write_all(&(g.len() as u32).to_le_bytes())?;
        w.write_all(g.as_bytes())?;
    }
    w.flush()?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ExprError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| ExprError::parse("native matrix", 0, format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64s(&mut self, n: usize) -> Result<Vec<u64>, ExprError> {
        let b = self.take(n.saturating_mul(8))?;
        Ok(b.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn u32s(&mut self, n: usize) -> Result<Vec<u32>, ExprError> {
        let b = self.take(n.saturating_mul(4))?;
        Ok(b.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn read_native<R: Read>(mut r: R) -> Result<ExpressionMatrix, ExprError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut cur = Cursor { buf: &buf, pos: 0 };
    if cur.take(4)? != NATIVE_MAGIC {
        return Err(ExprError::parse("native matrix", 0, "missing CFX1 magic"));
    }
    let head = cur.u64s(3)?;
    let (n_cells, n_genes, nnz) = (head[0] as usize, head[1] as usize, head[2] as usize);
    let indptr: Vec<usize> = cur.u64s(n_cells.saturating_add(1))?.into_iter().map(|v| v as usize).collect();
    let indices = cur.u32s(nnz)?;
    let values = cur.u32s(nnz)?;
    let mut genes = Vec::with_capacity(n_genes.min(1 << 20));
    for _ in 0..n_genes {
        let len = cur.u32s(1)?[0] as usize;
        let s = std::str::from_utf8(cur.take(len)?)
            .map_err(|e| ExprError::parse("native matrix", 0, format!("gene identifier: {e}")))?;
        genes.push(s.to_string());
    }
    if cur.pos != buf.len() {
        return Err(ExprError::parse("native matrix", 0, "trailing bytes"));
    }
    let vocab = Arc::new(GeneVocabulary::new(genes)?);
    ExpressionMatrix::from_csr(vocab, indptr, indices, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MTX: &str = "%%MatrixMarket matrix coordinate integer general\n% comment\n3 4 5\n1 1 2\n1 4 1\n2 2 7\n3 3 1\n3 4 9\n";

    #[test]
    fn matrix_market_read_back() {
        let m = read_matrix_market(MTX.as_bytes(), "t.mtx", None).unwrap();
        assert_eq!((m.n_cells(), m.n_genes(), m.nnz()), (3, 4, 5));
        assert_eq!(m.dense_row(0), vec![2, 0, 0, 1]);
        assert_eq!(m.dense_row(2), vec![0, 0, 1, 9]);
        assert_eq!(m.vocabulary().name(3), "gene4");
    }

    #[test]
    fn empty_file_is_parse_error() {
        let e = read_matrix_market("".as_bytes(), "e.mtx", None).unwrap_err();
        assert!(matches!(e, ExprError::Parse { line: 1, .. }));
        let e = read_dense_csv("".as_bytes(), "e.csv").unwrap_err();
        assert!(matches!(e, ExprError::Parse { .. }));
    }

    #[test]
    fn fractional_csv_value_names_cell() {
        let csv = "cell,A,B\nc1,1,2\nc2,2.5,0\n";
        match read_dense_csv(csv.as_bytes(), "x.csv").unwrap_err() {
            ExprError::Validation(msg) => assert!(msg.contains("c2") && msg.contains('A'), "{msg}"),
            e => panic!("unexpected {e:?}"),
        }
        let neg = "cell,A\nc1,-1\n";
        assert!(matches!(
            read_dense_csv(neg.as_bytes(), "x.csv").unwrap_err(),
            ExprError::Validation(_)
        ));
    }

    #[test]
    fn integral_reals_accepted() {
        let csv = "cell,A,B\nc1,3.0,0\n";
        let m = read_dense_csv(csv.as_bytes(), "x.csv").unwrap();
        assert_eq!(m.dense_row(0), vec![3, 0]);
        assert_eq!(m.cell_ids().unwrap(), &["c1"]);
    }

    #[test]
    fn malformed_mtx_reports_line() {
        let bad = "%%MatrixMarket matrix coordinate integer general\n2 2 1\n1 x 3\n";
        assert!(matches!(
            read_matrix_market(bad.as_bytes(), "b.mtx", None).unwrap_err(),
            ExprError::Parse { line: 3, .. }
        ));
        let out_of_range = "%%MatrixMarket matrix coordinate integer general\n2 2 1\n3 1 3\n";
        assert!(read_matrix_market(out_of_range.as_bytes(), "b.mtx", None).is_err());
        let short = "%%MatrixMarket matrix coordinate integer general\n2 2 2\n1 1 3\n";
        assert!(read_matrix_market(short.as_bytes(), "b.mtx", None).is_err());
    }

    #[test]
    fn native_round_trip() {
        let m = read_matrix_market(MTX.as_bytes(), "t.mtx", None).unwrap();
        let mut bytes = Vec::new();
        write_native(&m, &mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"CFX1");
        // header + offsets + indices + values + 4 names of 5 bytes each
        assert_eq!(bytes.len(), 4 + 24 + 4 * 8 + 5 * 4 + 5 * 4 + 4 * (4 + 5));
        assert_eq!(read_native(&bytes[..]).unwrap(), m);
        assert!(read_native(&bytes[..bytes.len() - 1]).is_err());
    }
}
