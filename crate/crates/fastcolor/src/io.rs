//! Graph and coloring files.
//!
//! Edge lists hold one `u v` pair per line with 0-based ids; `#` starts a
//! comment. A `# vertices N` comment fixes the vertex count so isolated
//! trailing vertices survive a round trip. Matrix Market files are read as
//! the pattern of a square coordinate matrix; values and the diagonal are
//! ignored.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use fastcolor_core::coloring::verify_coloring;
use fastcolor_core::graph::Graph;

use crate::error::{io_err, Error, Result};

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_id(tok: Option<&str>, path: &Path, line: usize, what: &str) -> Result<usize> {
    let tok = tok.ok_or_else(|| parse_err(path, line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| parse_err(path, line, format!("bad {what} {tok:?}")))
}

pub fn read_edge_list<R: BufRead>(reader: R, path: &Path) -> Result<Graph> {
    let mut edges = Vec::new();
    let mut declared: Option<usize> = None;
    let mut n = 0;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(io_err(path))?;
        let line = line.trim();
        if let Some(comment) = line.strip_prefix('#') {
            let mut toks = comment.split_whitespace();
            if toks.next() == Some("vertices") {
                declared = Some(parse_id(toks.next(), path, lineno, "vertex count")?);
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        let u = parse_id(toks.next(), path, lineno, "source vertex")?;
        let v = parse_id(toks.next(), path, lineno, "target vertex")?;
        if toks.next().is_some() {
            return Err(parse_err(path, lineno, "expected two vertex ids"));
        }
        n = n.max(u + 1).max(v + 1);
        edges.push((u, v));
    }
    if let Some(d) = declared {
        if d < n {
            return Err(parse_err(path, 0, format!("{d} vertices declared but id {} used", n - 1)));
        }
        n = d;
    }
    Ok(Graph::from_edges(n, edges)?.0)
}

pub fn write_edge_list<W: Write>(g: &Graph, mut w: W) -> std::io::Result<()> {
    writeln!(w, "# vertices {}", g.vertex_count())?;
    for (u, v) in g.edges() {
        writeln!(w, "{u} {v}")?;
    }
    w.flush()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Field {
    Pattern,
    Valued,
}

pub fn read_matrix_market<R: BufRead>(reader: R, path: &Path) -> Result<Graph> {
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let header = header.map_err(io_err(path))?.to_ascii_lowercase();
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() != 5 || toks[0] != "%%matrixmarket" || toks[1] != "matrix" {
        return Err(parse_err(path, 1, "not a Matrix Market header"));
    }
    if toks[2] != "coordinate" {
        return Err(parse_err(path, 1, format!("unsupported format {:?}", toks[2])));
    }
    let field = match toks[3] {
        "pattern" => Field::Pattern,
        "real" | "integer" | "double" => Field::Valued,
        other => return Err(parse_err(path, 1, format!("unsupported field {other:?}"))),
    };
    if !matches!(toks[4], "general" | "symmetric") {
        return Err(parse_err(path, 1, format!("unsupported symmetry {:?}", toks[4])));
    }

    let mut size: Option<(usize, usize)> = None;
    let mut edges = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line.map_err(io_err(path))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let mut it = line.split_whitespace();
        let Some((n, nnz)) = size else {
            let rows = parse_id(it.next(), path, lineno, "row count")?;
            let cols = parse_id(it.next(), path, lineno, "column count")?;
            let nnz = parse_id(it.next(), path, lineno, "entry count")?;
            if rows != cols {
                return Err(parse_err(path, lineno, format!("matrix is {rows}x{cols}, not square")));
            }
            size = Some((rows, nnz));
            edges.reserve(nnz);
            continue;
        };
        let r = parse_id(it.next(), path, lineno, "row")?;
        let c = parse_id(it.next(), path, lineno, "column")?;
        if r == 0 || c == 0 || r > n || c > n {
            return Err(parse_err(path, lineno, format!("entry ({r}, {c}) outside 1..={n}")));
        }
        if field == Field::Valued {
            let tok = it.next().ok_or_else(|| parse_err(path, lineno, "missing value"))?;
            tok.parse::<f64>()
                .map_err(|_| parse_err(path, lineno, format!("bad value {tok:?}")))?;
        }
        if edges.len() == nnz {
            return Err(parse_err(path, lineno, format!("more than {nnz} entries")));
        }
        edges.push((r - 1, c - 1));
    }
    let Some((n, nnz)) = size else {
        return Err(parse_err(path, 0, "missing size line"));
    };
    if edges.len() != nnz {
        return Err(parse_err(path, 0, format!("{} entries, header says {nnz}", edges.len())));
    }
    Ok(Graph::from_edges(n, edges)?.0)
}

/// Reads a graph file; `.mtx` is Matrix Market, anything else an edge list.
pub fn load_graph(path: &Path) -> Result<Graph> {
    let file = File::open(path).map_err(io_err(path))?;
    let reader = BufReader::new(file);
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("mtx")) {
        read_matrix_market(reader, path)
    } else {
        read_edge_list(reader, path)
    }
}

pub fn save_graph(g: &Graph, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    write_edge_list(g, BufWriter::new(file)).map_err(io_err(path))
}

/// `vertex color` per line.
pub fn write_coloring<W: Write>(colors: &[u32], mut w: W) -> std::io::Result<()> {
    for (v, c) in colors.iter().enumerate() {
        writeln!(w, "{v} {c}")?;
    }
    w.flush()
}

/// Reads a coloring and checks that it is complete and proper for `g`.
pub fn read_coloring<R: BufRead>(reader: R, path: &Path, g: &Graph) -> Result<Vec<u32>> {
    let n = g.vertex_count();
    let mut colors: Vec<Option<u32>> = vec![None; n];
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(io_err(path))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut toks = line.split_whitespace();
        let v = parse_id(toks.next(), path, lineno, "vertex")?;
        let c = parse_id(toks.next(), path, lineno, "color")?;
        if v >= n {
            return Err(parse_err(path, lineno, format!("vertex {v} outside the graph")));
        }
        if colors[v].replace(c as u32).is_some() {
            return Err(parse_err(path, lineno, format!("vertex {v} colored twice")));
        }
    }
    let colors: Vec<u32> = colors
        .into_iter()
        .enumerate()
        .map(|(v, c)| c.ok_or_else(|| parse_err(path, 0, format!("vertex {v} has no color"))))
        .collect::<Result<_>>()?;
    verify_coloring(g, &colors)?;
    Ok(colors)
}
