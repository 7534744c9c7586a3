//! Text formats: point sets as CSV (`id,x0,…,weight`) or JSON (coordinates or
//! a dense distance matrix), net-trees and pipeline artifacts as JSON,
//! verdict tables as CSV and labeled trees as Newick.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{MeasuredMetric, MetricMeasureSpace};
use crate::net_tree::{NetTree, NetVertex};
use crate::pipeline::VerdictTable;
use crate::tree_measure::UltrametricTree;

/// On-disk point set. Exactly one of `coordinates` and `distances` is set;
/// `distances` are normalized to diameter 1 and `scale_factor` restores the
/// original units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceFile {
    pub name: String,
    pub ids: Vec<String>,
    pub weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coordinates: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distances: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale_factor: Option<f64>,
}

impl SpaceFile {
    pub fn from_space(space: &MetricMeasureSpace) -> Self {
        let (coordinates, distances, scale_factor) = match space.coordinates() {
            Some(c) => (Some(c.to_vec()), None, None),
            None => (None, Some(space.distance_rows()), Some(space.scale_factor())),
        };
        Self {
            name: space.name().to_string(),
            ids: space.ids().to_vec(),
            weights: space.weights().to_vec(),
            coordinates,
            distances,
            scale_factor,
        }
    }

    pub fn into_space(self) -> Result<MetricMeasureSpace> {
        match (self.coordinates, self.distances) {
            (Some(c), None) => MetricMeasureSpace::from_coordinates(self.name, self.ids, c, self.weights),
            (None, Some(d)) => MetricMeasureSpace::from_matrix_scaled(
                self.name,
                self.ids,
                d,
                self.weights,
                self.scale_factor.unwrap_or(1.0),
            ),
            _ => Err(Error::Format(
                "space file needs exactly one of \"coordinates\" and \"distances\"".into(),
            )),
        }
    }
}

pub fn space_to_json(space: &MetricMeasureSpace) -> Result<String> {
    Ok(serde_json::to_string_pretty(&SpaceFile::from_space(space))?)
}

pub fn space_from_json(text: &str) -> Result<MetricMeasureSpace> {
    serde_json::from_str::<SpaceFile>(text)?.into_space()
}

/// Writes `id,x0,…,x{k−1},weight`. Only coordinate spaces have a CSV form.
pub fn write_space_csv<W: Write>(space: &MetricMeasureSpace, out: W) -> Result<()> {
    let coords = space
        .coordinates()
        .ok_or_else(|| Error::Format("distance-matrix spaces can only be written as JSON".into()))?;
    let dim = coords.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["id".to_string()];
    header.extend((0..dim).map(|k| format!("x{k}")));
    header.push("weight".into());
    w.write_record(&header)?;
    for (p, row) in coords.iter().enumerate() {
        let mut rec = vec![space.id(p).to_string()];
        rec.extend(row.iter().map(f64::to_string));
        rec.push(space.weights()[p].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a CSV point set. A header row is optional; the first column is the
/// id, the last the weight, the rest coordinates. Blank lines and surrounding
/// whitespace are ignored.
pub fn read_space_csv<R: Read>(name: &str, input: R) -> Result<MetricMeasureSpace> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    let (mut ids, mut coords, mut weights) = (Vec::new(), Vec::new(), Vec::new());
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if rec.len() < 3 {
            return Err(Error::Format(format!(
                "row {}: need id, at least one coordinate and a weight",
                line + 1
            )));
        }
        let nums: std::result::Result<Vec<f64>, _> = rec.iter().skip(1).map(str::parse::<f64>).collect();
        let nums = match nums {
            Ok(v) => v,
            Err(_) if line == 0 => continue,
            Err(e) => return Err(Error::Format(format!("row {}: {e}", line + 1))),
        };
        ids.push(rec[0].to_string());
        weights.push(nums[nums.len() - 1]);
        coords.push(nums[..nums.len() - 1].to_vec());
    }
    MetricMeasureSpace::from_coordinates(name, ids, coords, weights)
}

/// Reads a space from a `.csv` or `.json` file.
pub fn read_space(path: &Path) -> Result<MetricMeasureSpace> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("space");
        read_space_csv(name, BufReader::new(File::open(path)?))
    } else {
        space_from_json(&std::fs::read_to_string(path)?)
    }
}

/// Writes a space as CSV or JSON depending on the extension.
pub fn write_space(space: &MetricMeasureSpace, path: &Path) -> Result<()> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        write_space_csv(space, BufWriter::new(File::create(path)?))
    } else {
        std::fs::write(path, space_to_json(space)? + "\n")?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetVertexRecord {
    pub level: usize,
    pub rep: String,
    pub label: f64,
    pub parent: Option<usize>,
    pub pboundary: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetTreeFile {
    pub n_points: usize,
    pub vertices: Vec<NetVertexRecord>,
}

pub fn net_tree_to_json(tree: &NetTree, space: &MetricMeasureSpace) -> Result<String> {
    let vertices = tree
        .vertices
        .iter()
        .map(|v| NetVertexRecord {
            level: v.level,
            rep: space.id(v.rep).to_string(),
            label: v.label,
            parent: v.parent,
            pboundary: v.pboundary.iter().map(|&p| space.id(p).to_string()).collect(),
        })
        .collect();
    Ok(serde_json::to_string_pretty(&NetTreeFile {
        n_points: tree.n_points(),
        vertices,
    })?)
}

/// Parses a net-tree written by [`net_tree_to_json`], resolving point ids in
/// `space`. The stored partial boundaries are kept as they are so that a
/// verifier sees exactly what was written.
pub fn net_tree_from_json(text: &str, space: &MetricMeasureSpace) -> Result<NetTree> {
    let file: NetTreeFile = serde_json::from_str(text)?;
    if file.n_points != space.len() {
        return Err(Error::Mismatch(format!(
            "net tree covers {} points, space has {}",
            file.n_points,
            space.len()
        )));
    }
    let vertices = file
        .vertices
        .into_iter()
        .map(|r| {
            Ok(NetVertex {
                level: r.level,
                rep: space.index_of(&r.rep)?,
                label: r.label,
                parent: r.parent,
                children: Vec::new(),
                pboundary: r.pboundary.iter().map(|id| space.index_of(id)).collect::<Result<_>>()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    NetTree::from_vertices(vertices, file.n_points)
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// One row per verdict: `inequality,center,radius,lhs,rhs,margin,witness`,
/// with points given by id. Uses the full rows when present, else failures.
pub fn write_verdicts_csv<W: Write>(tables: &[&VerdictTable], space: &MetricMeasureSpace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["inequality", "center", "radius", "lhs", "rhs", "margin", "witness"])?;
    for table in tables {
        let rows = table.rows.as_ref().unwrap_or(&table.failures);
        for v in rows {
            w.write_record([
                table.inequality.clone(),
                space.id(v.center).to_string(),
                v.radius.to_string(),
                v.lhs.to_string(),
                v.rhs.to_string(),
                v.margin.to_string(),
                v.witness.map(|p| space.id(p).to_string()).unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn newick_name(name: &str) -> String {
    if name.chars().any(|c| "()[]':;, \t\n".contains(c)) {
        format!("'{}'", name.replace('\'', "''"))
    } else {
        name.to_string()
    }
}

/// Newick rendering restricted to nodes with `keep[v]` (all when `None`).
/// Leaves are named by point id, internal nodes by their label, and each
/// branch is half the label drop, so leaf-to-leaf path length equals the
/// ultrametric.
pub fn to_newick(tree: &UltrametricTree, keep: Option<&[bool]>, ids: &[String]) -> String {
    let kept = |v: usize| keep.is_none_or(|k| k[v]);
    let mut out = String::new();
    // explicit stack: (node, children emitted so far)
    let mut stack: Vec<(usize, usize)> = vec![(tree.root, 0)];
    while let Some(&mut (v, ref mut next)) = stack.last_mut() {
        let children: Vec<usize> = tree.children[v].iter().copied().filter(|&c| kept(c)).collect();
        if children.is_empty() {
            match tree.leaf_point[v] {
                Some(p) => out.push_str(&newick_name(ids.get(p).map_or("?", String::as_str))),
                None => out.push_str(&format!("{}", tree.label[v])),
            }
        } else if *next < children.len() {
            out.push(if *next == 0 { '(' } else { ',' });
            let c = children[*next];
            *next += 1;
            stack.push((c, 0));
            continue;
        } else {
            out.push(')');
            out.push_str(&format!("{}", tree.label[v]));
        }
        stack.pop();
        if let Some(p) = tree.parent[v] {
            if stack.last().is_some() {
                out.push_str(&format!(":{}", (tree.label[p] - tree.label[v]) / 2.0));
            }
        }
    }
    out.push(';');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix_space() -> MetricMeasureSpace {
        let m = vec![vec![0.0, 3.0, 4.0], vec![3.0, 0.0, 5.0], vec![4.0, 5.0, 0.0]];
        MetricMeasureSpace::from_matrix("tri", vec!["a".into(), "b".into(), "c".into()], m, vec![1.0, 2.0, 3.0])
            .unwrap()
    }

    #[test]
    fn matrix_json_round_trip() {
        let s = matrix_space();
        let back = space_from_json(&space_to_json(&s).unwrap()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.scale_factor(), 5.0);
    }

    #[test]
    fn csv_with_and_without_header() {
        let with = "id,x0,weight\na, 0.0 ,1\n\nb,2.0,1\n";
        let without = "a,0.0,1\nb,2.0,1\n";
        let s1 = read_space_csv("s", with.as_bytes()).unwrap();
        let s2 = read_space_csv("s", without.as_bytes()).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(s1.scale_factor(), 2.0);
        assert!(read_space_csv("s", "a,0,1\nb,oops,1\n".as_bytes()).is_err());
    }

    #[test]
    fn csv_rejects_matrix_space() {
        let mut buf = Vec::new();
        assert!(write_space_csv(&matrix_space(), &mut buf).is_err());
    }

    #[test]
    fn newick_shape() {
        let tree = UltrametricTree::from_parents(
            vec![None, Some(0), Some(0)],
            vec![1.0, 0.0, 0.0],
            vec![None, Some(0), Some(1)],
            vec![0, 0, 1],
        )
        .unwrap();
        let ids = vec!["a".to_string(), "b c".to_string()];
        assert_eq!(to_newick(&tree, None, &ids), "(a:0.5,'b c':0.5)1;");
        assert_eq!(to_newick(&tree, Some(&[true, true, false]), &ids), "(a:0.5)1;");
    }
}
