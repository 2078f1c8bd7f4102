//! Delimited-text output. Floats are written with 17 significant digits so
//! every value parses back to the same `f64`.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use hyperdisc::surface::{to_ball_model, HalfSpacePoint};
use hyperdisc::SurfaceModel;

pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

/// Comma-separated table with a header line.
pub struct Table {
    text: String,
    columns: usize,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { text: header.join(",") + "\n", columns: header.len() }
    }

    pub fn row(&mut self, cells: &[String]) {
        assert_eq!(cells.len(), self.columns, "row width");
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn floats(&mut self, values: &[f64]) {
        let cells: Vec<String> = values.iter().map(|v| num(*v)).collect();
        self.row(&cells);
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, &self.text).with_context(|| format!("writing {}", path.display()))
    }
}

/// Parses a table written by [`Table`] whose cells are all numeric.
pub fn read_floats(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    let Some(header) = lines.next() else { bail!("empty table") };
    let header: Vec<String> = header.split(',').map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row: Vec<f64> =
            line.split(',').map(str::parse).collect::<Result<_, _>>().with_context(|| format!("row {}", i + 1))?;
        if row.len() != header.len() {
            bail!("row {} has {} cells, header has {}", i + 1, row.len(), header.len());
        }
        rows.push(row);
    }
    Ok((header, rows))
}

/// `key = value` lines.
#[derive(Default)]
pub struct KeyValues(String);

impl KeyValues {
    pub fn put(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        writeln!(self.0, "{key} = {value}").expect("string write");
        self
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum MeshModel {
    Halfspace,
    Ball,
}

/// Triangulated polar grid: a centre vertex, then `rings` circles of
/// `sectors` vertices each, the last on the unit circle.
pub struct Mesh {
    pub vertices: Vec<Vec<f64>>,
    pub faces: Vec<[usize; 3]>,
    /// Disc coordinates of each vertex.
    pub domain: Vec<[f64; 2]>,
}

pub fn polar_mesh(model: &SurfaceModel, params: &[f64], rings: usize, sectors: usize, kind: MeshModel) -> Result<Mesh> {
    if rings == 0 || sectors < 3 {
        bail!("mesh needs at least one ring and three sectors");
    }
    let mut domain = vec![[0.0, 0.0]];
    for i in 1..=rings {
        let r = i as f64 / rings as f64;
        for j in 0..sectors {
            let t = std::f64::consts::TAU * j as f64 / sectors as f64;
            domain.push([r * t.cos(), r * t.sin()]);
        }
    }
    let vertices = domain
        .iter()
        .map(|p| {
            let h: HalfSpacePoint = model.evaluate(params, p[0], p[1])?;
            Ok(match kind {
                MeshModel::Halfspace => std::iter::once(h.x).chain(h.y).collect(),
                MeshModel::Ball => to_ball_model(&h),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let idx = |ring: usize, j: usize| 1 + (ring - 1) * sectors + j % sectors;
    let mut faces = Vec::new();
    for j in 0..sectors {
        faces.push([0, idx(1, j), idx(1, j + 1)]);
    }
    for ring in 1..rings {
        for j in 0..sectors {
            let (a, b) = (idx(ring, j), idx(ring, j + 1));
            let (c, d) = (idx(ring + 1, j), idx(ring + 1, j + 1));
            faces.push([a, c, d]);
            faces.push([a, d, b]);
        }
    }
    Ok(Mesh { vertices, faces, domain })
}
