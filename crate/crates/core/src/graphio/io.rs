//! Plain-text dataset formats.
//!
//! * edge list: one `i j` pair per line, 0-based, whitespace separated
//! * matrices: headerless CSV, one row per node
//! * labels: one non-negative integer per line
//!
//! Blank lines and lines starting with `#` are skipped everywhere.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use super::Graph;
use crate::{Error, Result};

/// Lines dropped while building a graph.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub duplicates: usize,
    pub self_loops: usize,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Non-blank, non-comment lines with 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// Reads raw pairs. With `num_nodes`, endpoints at or above it are parse errors.
pub fn read_edge_pairs(path: &Path, num_nodes: Option<usize>) -> Result<Vec<(usize, usize)>> {
    let text = read(path)?;
    let mut pairs = Vec::new();
    for (no, line) in content_lines(&text) {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(parse_err(
                path,
                no,
                format!("expected 2 fields, found {}", fields.len()),
            ));
        }
        let mut ends = [0usize; 2];
        for (slot, f) in ends.iter_mut().zip(&fields) {
            *slot = f
                .parse()
                .map_err(|_| parse_err(path, no, format!("invalid node index {f:?}")))?;
            if let Some(n) = num_nodes {
                if *slot >= n {
                    return Err(parse_err(
                        path,
                        no,
                        format!("node index {slot} out of range for {n} nodes"),
                    ));
                }
            }
        }
        pairs.push((ends[0], ends[1]));
    }
    Ok(pairs)
}

fn build(pairs: &[(usize, usize)], n: usize, path: &Path) -> Result<(Graph, IngestReport)> {
    let (g, report) = Graph::from_pairs_lenient(n, pairs)?;
    if report.duplicates > 0 || report.self_loops > 0 {
        log::warn!(
            "{}: dropped {} duplicate and {} self-loop lines",
            path.display(),
            report.duplicates,
            report.self_loops
        );
    }
    Ok((g, report))
}

/// Loads an edge list; the node count is one past the largest index.
pub fn load_edge_list(path: &Path) -> Result<(Graph, IngestReport)> {
    let pairs = read_edge_pairs(path, None)?;
    let n = pairs.iter().map(|&(a, b)| a.max(b) + 1).max().unwrap_or(0);
    build(&pairs, n, path)
}

/// Loads an edge list over exactly `num_nodes` nodes (isolated nodes allowed).
pub fn load_edge_list_sized(path: &Path, num_nodes: usize) -> Result<(Graph, IngestReport)> {
    let pairs = read_edge_pairs(path, Some(num_nodes))?;
    build(&pairs, num_nodes, path)
}

/// Reads a headerless numeric CSV. Rows must all have the same width.
pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let text = read(path)?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (no, line) in content_lines(&text) {
        let before = data.len();
        for f in line.split(',') {
            let f = f.trim();
            let v: f64 = f
                .parse()
                .map_err(|_| parse_err(path, no, format!("invalid number {f:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(path, no, "non-finite value"));
            }
            data.push(v);
        }
        let width = data.len() - before;
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => {
                return Err(parse_err(
                    path,
                    no,
                    format!("expected {c} columns, found {width}"),
                ))
            }
            _ => {}
        }
        rows += 1;
    }
    Array2::from_shape_vec((rows, cols.unwrap_or(0)), data)
        .map_err(|e| Error::contract(e.to_string()))
}

/// Reads attributes and attaches them to `graph`; the row count must equal N.
pub fn load_attributes(path: &Path, graph: Graph) -> Result<Graph> {
    graph.with_attributes(read_matrix_csv(path)?)
}

/// Reads one label per line. With `num_nodes`, the count must match.
pub fn load_labels(path: &Path, num_nodes: Option<usize>) -> Result<Vec<usize>> {
    let text = read(path)?;
    let mut labels = Vec::new();
    for (no, line) in content_lines(&text) {
        labels.push(
            line.parse()
                .map_err(|_| parse_err(path, no, format!("invalid label {line:?}")))?,
        );
    }
    if let Some(n) = num_nodes {
        if labels.len() != n {
            return Err(Error::contract(format!(
                "{}: {} labels for {n} nodes",
                path.display(),
                labels.len()
            )));
        }
    }
    Ok(labels)
}

/// Scales every nonzero row to unit Euclidean norm; zero rows are left alone.
pub fn l2_normalize_rows(x: &mut Array2<f64>) {
    for mut row in x.rows_mut() {
        let n = row.dot(&row).sqrt();
        if n > 0.0 {
            row.mapv_inplace(|v| v / n);
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(BufWriter::new(
        fs::File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

pub fn write_edge_list(path: &Path, pairs: &[(usize, usize)]) -> Result<()> {
    let mut w = create(path)?;
    for (a, b) in pairs {
        writeln!(w, "{a} {b}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes a headerless CSV using shortest round-trip formatting.
pub fn write_matrix_csv(path: &Path, x: &Array2<f64>) -> Result<()> {
    let mut w = create(path)?;
    for row in x.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(",")).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn two_line_edge_list() {
        let f = file("0 1\n1 2");
        let (g, r) = load_edge_list(f.path()).unwrap();
        assert!(g.num_nodes() >= 3);
        assert_eq!(g.num_edges(), 2);
        assert_eq!(r, IngestReport::default());
    }

    #[test]
    fn duplicate_lines_collapse_with_warning_count() {
        let f = file("0 1\n# comment\n\n0 1\n1 0\n2 2\n");
        let (g, r) = load_edge_list(f.path()).unwrap();
        assert_eq!(g.num_edges(), 1);
        assert_eq!(r.duplicates, 2);
        assert_eq!(r.self_loops, 1);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let f = file("0 1\n1 x\n");
        match load_edge_list(f.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let f = file("0 1\n\n1 5\n");
        match load_edge_list_sized(f.path(), 3) {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("out of range"));
            }
            other => panic!("{other:?}"),
        }
        let f = file("0 1 2\n");
        assert!(matches!(
            load_edge_list(f.path()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn attributes_load_and_check_rows() {
        let g = Graph::new(3, &[(0, 1)]).unwrap();
        let f = file("1,2\n3,4\n5,6\n");
        let g2 = load_attributes(f.path(), g.clone()).unwrap();
        assert_eq!(g2.attributes().unwrap().dim(), (3, 2));
        assert_eq!(g2.attributes().unwrap()[[2, 0]], 5.0);
        let f = file("1,2\n3,4\n");
        assert!(matches!(
            load_attributes(f.path(), g.clone()),
            Err(Error::Contract(_))
        ));
        let f = file("1,2\n3\n");
        assert!(matches!(
            read_matrix_csv(f.path()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn labels_load() {
        let f = file("0\n2\n1\n");
        assert_eq!(load_labels(f.path(), Some(3)).unwrap(), vec![0, 2, 1]);
        assert!(load_labels(f.path(), Some(4)).is_err());
        let f = file("0\n-1\n");
        assert!(matches!(
            load_labels(f.path(), None),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn row_normalization() {
        let mut x = ndarray::array![[3.0, 4.0], [0.0, 0.0]];
        l2_normalize_rows(&mut x);
        assert_eq!(x, ndarray::array![[0.6, 0.8], [0.0, 0.0]]);
    }

    #[test]
    fn writers_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/e.txt");
        write_edge_list(&p, &[(0, 2), (1, 2)]).unwrap();
        assert_eq!(read_edge_pairs(&p, None).unwrap(), vec![(0, 2), (1, 2)]);
        let x = ndarray::array![[0.1, -2.5e-7], [1.0 / 3.0, 4.0]];
        let q = dir.path().join("x.csv");
        write_matrix_csv(&q, &x).unwrap();
        assert_eq!(read_matrix_csv(&q).unwrap(), x);
    }
}
