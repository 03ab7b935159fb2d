//! Dataset directory reader and writer.
//!
//! Layout:
//!
//! ```text
//! edges.csv        header `src,dst`, one undirected edge per row
//! features.csv     N rows x D reals, no header, row index = node id
//! node_labels.csv  optional, one 0/1 per row
//! edge_labels.csv  optional, one 0/1 per row in canonical edge order
//! meta.json        {"num_nodes", "num_edges", "feature_dim"}
//! ```
//!
//! Directed inputs are symmetrized on load. Edge labels refer to the canonical
//! edge ids, so they are only accepted when the edge file is already canonical
//! or when the count after canonicalization matches.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_graph, AttributedGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub num_nodes: usize,
    pub num_edges: usize,
    pub feature_dim: usize,
}

pub fn read_dataset(dir: &Path) -> Result<AttributedGraph> {
    let features = read_features(&dir.join("features.csv"))?;
    let pairs = read_edges(&dir.join("edges.csv"))?;
    let mut graph = build_graph(&pairs, features)?;

    let node_path = dir.join("node_labels.csv");
    if node_path.exists() {
        graph = graph.with_node_labels(read_labels(&node_path)?)?;
    }
    let edge_path = dir.join("edge_labels.csv");
    if edge_path.exists() {
        graph = graph.with_edge_labels(read_labels(&edge_path)?)?;
    }

    let meta_path = dir.join("meta.json");
    if meta_path.exists() {
        let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: Meta = serde_json::from_str(&text)
            .map_err(|e| Error::format(&meta_path, e.to_string()))?;
        let found = Meta {
            num_nodes: graph.num_nodes(),
            num_edges: graph.num_edges(),
            feature_dim: graph.feature_dim(),
        };
        if meta.num_nodes != found.num_nodes || meta.feature_dim != found.feature_dim {
            return Err(Error::format(
                &meta_path,
                format!("meta {meta:?} disagrees with loaded data {found:?}"),
            ));
        }
        if meta.num_edges != found.num_edges {
            log::warn!(
                "meta.json declares {} edges, {} remain after symmetrization",
                meta.num_edges,
                found.num_edges
            );
        }
    }
    Ok(graph)
}

pub fn write_dataset(dir: &Path, graph: &AttributedGraph) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let path = dir.join("edges.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    w.write_record(["src", "dst"]).map_err(|e| csv_err(&path, e))?;
    for &(i, j) in graph.edges() {
        w.write_record([i.to_string(), j.to_string()])
            .map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join("features.csv");
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(&path)
        .map_err(|e| csv_err(&path, e))?;
    for row in graph.features().rows() {
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    if let Some(labels) = graph.node_labels() {
        write_labels(&dir.join("node_labels.csv"), labels)?;
    }
    if let Some(labels) = graph.edge_labels() {
        write_labels(&dir.join("edge_labels.csv"), labels)?;
    }

    let meta = Meta {
        num_nodes: graph.num_nodes(),
        num_edges: graph.num_edges(),
        feature_dim: graph.feature_dim(),
    };
    write_json(&dir.join("meta.json"), &meta)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::format(path, e.to_string())
}

fn read_edges(path: &Path) -> Result<Vec<(usize, usize)>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let mut pairs = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.len() < 2 {
            return Err(Error::format(path, format!("row {} has fewer than 2 columns", line + 2)));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::format(path, format!("row {}: bad node id {s:?}", line + 2)))
        };
        pairs.push((parse(&rec[0])?, parse(&rec[1])?));
    }
    Ok(pairs)
}

fn read_features(path: &Path) -> Result<Array2<f32>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let mut values = Vec::new();
    let mut dim = None;
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        match dim {
            None => dim = Some(rec.len()),
            Some(d) if d != rec.len() => {
                return Err(Error::format(path, format!("row {} has {} columns, expected {d}", rows + 1, rec.len())));
            }
            _ => {}
        }
        for field in rec.iter() {
            let v: f32 = field
                .parse()
                .map_err(|_| Error::format(path, format!("row {}: bad value {field:?}", rows + 1)))?;
            values.push(v);
        }
        rows += 1;
    }
    let dim = dim.unwrap_or(0);
    Array2::from_shape_vec((rows, dim), values).map_err(|e| Error::format(path, e.to_string()))
}

fn read_labels(path: &Path) -> Result<Vec<u8>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let field = rec.get(0).unwrap_or("");
        match field {
            "0" => out.push(0),
            "1" => out.push(1),
            // Tolerate a single header line.
            _ if line == 0 && field.parse::<f64>().is_err() => {}
            _ => return Err(Error::format(path, format!("row {}: label {field:?} is not 0/1", line + 1))),
        }
    }
    Ok(out)
}

fn write_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for l in labels {
        writeln!(w, "{l}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn roundtrip_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let g = build_graph(&[(0, 1), (2, 1)], array![[0.5f32, -1.0], [2.0, 0.0], [1.25, 3.0]])
            .unwrap()
            .with_node_labels(vec![1, 0, 0])
            .unwrap()
            .with_edge_labels(vec![0, 1])
            .unwrap();
        write_dataset(dir.path(), &g).unwrap();
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn symmetrizes_directed_input() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("edges.csv"), "src,dst\n0,1\n1,0\n2,1\n").unwrap();
        std::fs::write(dir.path().join("features.csv"), "1\n2\n3\n").unwrap();
        let g = read_dataset(dir.path()).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
    }

    #[test]
    fn rejects_bad_meta_and_labels() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("edges.csv"), "src,dst\n0,1\n").unwrap();
        std::fs::write(dir.path().join("features.csv"), "1\n2\n").unwrap();
        std::fs::write(
            dir.path().join("meta.json"),
            r#"{"num_nodes": 3, "num_edges": 1, "feature_dim": 1}"#,
        )
        .unwrap();
        assert!(read_dataset(dir.path()).is_err());
        std::fs::remove_file(dir.path().join("meta.json")).unwrap();
        std::fs::write(dir.path().join("node_labels.csv"), "0\n2\n").unwrap();
        assert!(read_dataset(dir.path()).is_err());
    }
}
