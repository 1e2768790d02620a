//! CSV input and output.
//!
//! Edges: `group_id,src,dst,weight`. Nodes: `group_id,node_id`, then any number
//! of `x1*` and `x2*` columns and an optional `y` column. Groups and nodes are
//! ordered by id.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graphs::{row_normalize, GroupedNetwork};
use crate::linalg::BlockDiagonal;
use crate::transforms::PanelData;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub group: u64,
    pub src: u64,
    pub dst: u64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeTable {
    /// `(group, node)` in sorted order.
    pub keys: Vec<(u64, u64)>,
    pub x1_names: Vec<String>,
    pub x2_names: Vec<String>,
    pub x1: DMatrix<f64>,
    pub x2: DMatrix<f64>,
    pub y: Option<DVector<f64>>,
}

fn header_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Data(format!("missing column '{name}'")))
}

fn parse_id(s: &str, what: &str, line: u64) -> Result<u64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Data(format!("line {line}: {what} '{s}' is not a nonnegative integer")))
}

fn parse_f64(s: &str, what: &str, line: u64) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::Data(format!("line {line}: {what} '{s}' is not a number")))?;
    if !v.is_finite() {
        return Err(Error::Data(format!("line {line}: {what} is not finite")));
    }
    Ok(v)
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

pub fn read_edges<R: Read>(input: R) -> Result<Vec<Edge>> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    let g = header_index(&headers, "group_id")?;
    let s = header_index(&headers, "src")?;
    let d = header_index(&headers, "dst")?;
    let w = headers.iter().position(|h| h.trim() == "weight");
    let mut edges = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let weight = match w {
            Some(i) => parse_f64(&rec[i], "weight", line)?,
            None => 1.0,
        };
        edges.push(Edge {
            group: parse_id(&rec[g], "group_id", line)?,
            src: parse_id(&rec[s], "src", line)?,
            dst: parse_id(&rec[d], "dst", line)?,
            weight,
        });
    }
    Ok(edges)
}

type NodeRow = (Vec<f64>, Vec<f64>, Option<f64>);

pub fn read_nodes<R: Read>(input: R) -> Result<NodeTable> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    let g = header_index(&headers, "group_id")?;
    let id = header_index(&headers, "node_id")?;
    let named = |prefix: &str| -> Vec<(usize, String)> {
        headers
            .iter()
            .enumerate()
            .filter(|(_, h)| h.trim().starts_with(prefix))
            .map(|(i, h)| (i, h.trim().to_string()))
            .collect()
    };
    let x1_cols = named("x1");
    let x2_cols = named("x2");
    let y_col = headers.iter().position(|h| h.trim() == "y");
    let mut rows: BTreeMap<(u64, u64), NodeRow> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let key = (parse_id(&rec[g], "group_id", line)?, parse_id(&rec[id], "node_id", line)?);
        let x1 = x1_cols
            .iter()
            .map(|(i, name)| parse_f64(&rec[*i], name, line))
            .collect::<Result<Vec<_>>>()?;
        let x2 = x2_cols
            .iter()
            .map(|(i, name)| parse_f64(&rec[*i], name, line))
            .collect::<Result<Vec<_>>>()?;
        let y = y_col.map(|i| parse_f64(&rec[i], "y", line)).transpose()?;
        if rows.insert(key, (x1, x2, y)).is_some() {
            return Err(Error::Data(format!(
                "line {line}: duplicate node {} in group {}",
                key.1, key.0
            )));
        }
    }
    if rows.is_empty() {
        return Err(Error::Data("node table is empty".into()));
    }
    let n = rows.len();
    let keys: Vec<(u64, u64)> = rows.keys().copied().collect();
    let x1 = DMatrix::from_fn(n, x1_cols.len(), |i, c| rows[&keys[i]].0[c]);
    let x2 = DMatrix::from_fn(n, x2_cols.len(), |i, c| rows[&keys[i]].1[c]);
    let y = y_col.map(|_| DVector::from_iterator(n, keys.iter().map(|k| rows[k].2.unwrap_or(f64::NAN))));
    Ok(NodeTable {
        keys,
        x1_names: x1_cols.into_iter().map(|(_, s)| s).collect(),
        x2_names: x2_cols.into_iter().map(|(_, s)| s).collect(),
        x1,
        x2,
        y,
    })
}

pub fn read_edges_path(path: &Path) -> Result<Vec<Edge>> {
    read_edges(open(path)?)
}

pub fn read_nodes_path(path: &Path) -> Result<NodeTable> {
    read_nodes(open(path)?)
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))
}

/// Node keys implied by an edge list alone.
pub fn keys_from_edges(edges: &[Edge]) -> Vec<(u64, u64)> {
    let set: BTreeSet<(u64, u64)> = edges
        .iter()
        .flat_map(|e| [(e.group, e.src), (e.group, e.dst)])
        .collect();
    set.into_iter().collect()
}

/// Block-diagonal W over the groups of `keys`. Self-loops, unknown nodes and
/// repeated edges are data errors.
pub fn build_w(edges: &[Edge], keys: &[(u64, u64)], normalize: bool) -> Result<BlockDiagonal> {
    let mut groups: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    for &(g, i) in keys {
        groups.entry(g).or_default().push(i);
    }
    let index: BTreeMap<u64, (usize, BTreeMap<u64, usize>)> = groups
        .iter()
        .enumerate()
        .map(|(r, (g, ids))| (*g, (r, ids.iter().enumerate().map(|(k, i)| (*i, k)).collect())))
        .collect();
    let mut blocks: Vec<DMatrix<f64>> = groups.values().map(|ids| DMatrix::zeros(ids.len(), ids.len())).collect();
    let mut seen = BTreeSet::new();
    for e in edges {
        let (r, local) = index
            .get(&e.group)
            .ok_or_else(|| Error::Data(format!("edge refers to unknown group {}", e.group)))?;
        let lookup = |id: u64| {
            local
                .get(&id)
                .copied()
                .ok_or_else(|| Error::Data(format!("edge refers to unknown node {id} in group {}", e.group)))
        };
        let (s, d) = (lookup(e.src)?, lookup(e.dst)?);
        if s == d {
            return Err(Error::Data(format!("self-loop on node {} in group {}", e.src, e.group)));
        }
        if !seen.insert((e.group, e.src, e.dst)) {
            return Err(Error::Data(format!(
                "repeated edge {} -> {} in group {}",
                e.src, e.dst, e.group
            )));
        }
        blocks[*r][(s, d)] = e.weight;
    }
    if normalize {
        blocks = blocks.iter().map(row_normalize).collect::<Result<Vec<_>>>()?;
    }
    BlockDiagonal::new(blocks)
}

/// Network with `M` the row normalization of `W`, and the panel when `y` is
/// present.
pub fn load(
    edges: &[Edge],
    nodes: &NodeTable,
    normalize: bool,
) -> Result<(GroupedNetwork, Option<PanelData>)> {
    let w = build_w(edges, &nodes.keys, normalize)?;
    let network = GroupedNetwork::with_row_normalized_m(w)?;
    let data = match &nodes.y {
        Some(y) => {
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data("y has missing values".into()));
            }
            if nodes.x1.ncols() + nodes.x2.ncols() == 0 {
                return Err(Error::Data("node table has no x1 or x2 columns".into()));
            }
            Some(PanelData::new(y.clone(), nodes.x1.clone(), nodes.x2.clone(), &network)?)
        }
        None => None,
    };
    Ok((network, data))
}

/// Writes the nonzero entries of `W` with local node ids.
pub fn write_edges<W: Write>(out: W, w: &BlockDiagonal) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["group_id", "src", "dst", "weight"])?;
    for (r, b) in w.blocks().iter().enumerate() {
        for i in 0..b.nrows() {
            for j in 0..b.ncols() {
                if b[(i, j)] != 0.0 {
                    wtr.write_record([
                        r.to_string(),
                        i.to_string(),
                        j.to_string(),
                        format!("{}", b[(i, j)]),
                    ])?;
                }
            }
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Writes `group_id,node_id,x1..,x2..,y` with full float precision.
pub fn write_nodes<W: Write>(out: W, sizes: &[usize], data: &PanelData) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["group_id".to_string(), "node_id".to_string()];
    header.extend((1..=data.x1.ncols()).map(|c| format!("x1_{c}")));
    header.extend((1..=data.x2.ncols()).map(|c| format!("x2_{c}")));
    header.push("y".into());
    wtr.write_record(&header)?;
    let mut row = 0;
    for (r, &m) in sizes.iter().enumerate() {
        for i in 0..m {
            let mut rec = vec![r.to_string(), i.to_string()];
            rec.extend(data.x1.row(row).iter().map(|v| format!("{v:e}")));
            rec.extend(data.x2.row(row).iter().map(|v| format!("{v:e}")));
            rec.push(format!("{:e}", data.y[row]));
            wtr.write_record(&rec)?;
            row += 1;
        }
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const EDGES: &str = "group_id,src,dst,weight\n2,0,1,1\n2,1,0,1\n1,5,7,2\n1,7,5,1\n";
    const NODES: &str = "group_id,node_id,x1_a,x2_a,y\n2,1,0.5,1,3\n1,7,1.5,2,1\n1,5,2.5,3,2\n2,0,3.5,4,4\n";

    #[test]
    fn rows_sorted_by_group_then_node() {
        let nodes = read_nodes(NODES.as_bytes()).unwrap();
        assert_eq!(nodes.keys, vec![(1, 5), (1, 7), (2, 0), (2, 1)]);
        assert_eq!(nodes.x1.column(0).as_slice(), &[2.5, 1.5, 3.5, 0.5]);
        let edges = read_edges(EDGES.as_bytes()).unwrap();
        let w = build_w(&edges, &nodes.keys, false).unwrap();
        assert_eq!(w.sizes(), vec![2, 2]);
        assert_eq!(w.block(0)[(0, 1)], 2.0);
        let (net, data) = load(&edges, &nodes, true).unwrap();
        assert_eq!(net.w().block(0)[(0, 1)], 1.0);
        assert_eq!(data.unwrap().y.as_slice(), &[2.0, 1.0, 4.0, 3.0]);
    }

    #[test]
    fn bad_inputs_are_data_errors() {
        let nodes = read_nodes(NODES.as_bytes()).unwrap();
        for bad in [
            "group_id,src,dst,weight\n1,5,5,1\n",
            "group_id,src,dst,weight\n1,5,9,1\n",
            "group_id,src,dst,weight\n3,0,1,1\n",
            "group_id,src,dst,weight\n1,5,7,1\n1,5,7,1\n",
        ] {
            let edges = read_edges(bad.as_bytes()).unwrap();
            assert!(matches!(build_w(&edges, &nodes.keys, false), Err(Error::Data(_))));
        }
        assert!(matches!(read_edges("group_id,src\n1,2\n".as_bytes()), Err(Error::Data(_))));
        assert!(matches!(read_edges("group_id,src,dst\n1,x,2\n".as_bytes()), Err(Error::Data(_))));
        assert!(read_nodes("group_id,node_id,y\n1,1,2\n1,1,3\n".as_bytes()).is_err());
    }

    #[test]
    fn edge_list_alone_defines_nodes() {
        let edges = read_edges("group_id,src,dst\n0,0,1\n0,1,0\n".as_bytes()).unwrap();
        assert_eq!(keys_from_edges(&edges), vec![(0, 0), (0, 1)]);
    }

    #[test]
    fn write_read_roundtrip() {
        let net = crate::graphs::generate_mc_network(3, 5, 2, 1).unwrap();
        let n = net.n();
        let x = DMatrix::from_fn(n, 1, |i, _| i as f64 * 0.37 - 1.0);
        let y = DVector::from_fn(n, |i, _| (i as f64).sin());
        let data = PanelData::new(y, x.clone(), x, &net).unwrap();
        let mut e = Vec::new();
        write_edges(&mut e, net.w()).unwrap();
        let mut v = Vec::new();
        write_nodes(&mut v, &net.group_sizes(), &data).unwrap();
        let nodes = read_nodes(v.as_slice()).unwrap();
        let edges = read_edges(e.as_slice()).unwrap();
        let keys: Vec<(u64, u64)> = nodes.keys.clone();
        let w = build_w(&edges, &keys, false).unwrap();
        assert_eq!(w.to_dense(), net.w().to_dense());
        let (_, back) = load(&edges, &nodes, false).unwrap();
        assert_eq!(back.unwrap(), data);
    }
}
