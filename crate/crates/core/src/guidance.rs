//! Guidance graphs: positive per-direction move weights and per-cell wait
//! weights that every distance computation is priced with.
//!
//! The weight file is JSON with one grid row per line:
//!
//! ```text
//! {
//!   "format": "wppl-guidance/1",
//!   "height": H,
//!   "width": W,
//!   "wait": [ H rows of W numbers, null on obstacles ],
//!   "moves": [ H rows of W [E, S, W, N] quadruples, null where unusable ]
//! }
//! ```
//!
//! A direction is usable exactly when it leads from a free cell to a free
//! cell. Usable entries must be finite and positive; all others must be null.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{GridMap, Orientation, VertexId};
use crate::error::ParseError;

pub const WEIGHT_FORMAT: &str = "wppl-guidance/1";

/// Crisscross defaults. Their mean is 1 so weighted distances stay close to
/// step counts.
pub const DEFAULT_PREFERRED: f64 = 0.5;
pub const DEFAULT_PENALIZED: f64 = 1.5;

#[derive(Debug, Error)]
pub enum GuidanceError {
    #[error("weight file {0}")]
    Parse(#[from] ParseError),
    #[error("non-positive weight {value} for {what} at ({row}, {col})")]
    NonPositiveWeight {
        row: usize,
        col: usize,
        what: String,
        value: f64,
    },
    #[error("invalid guidance: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceGraph {
    map: Arc<GridMap>,
    /// Indexed by cell; `INFINITY` marks an unusable direction.
    moves: Vec<[f64; 4]>,
    /// Indexed by cell; `INFINITY` on obstacles.
    wait: Vec<f64>,
}

fn weight_ok(w: f64) -> bool {
    w.is_finite() && w > 0.0
}

impl GuidanceGraph {
    /// Every usable move and every wait costs 1.
    pub fn uniform(map: Arc<GridMap>) -> Self {
        Self::from_fn(map, |_, _| 1.0, |_| 1.0)
    }

    /// Crisscross highways: even rows prefer East, odd rows West, even
    /// columns South, odd columns North. Waits cost 1.
    pub fn crisscross(map: Arc<GridMap>, preferred: f64, penalized: f64) -> Result<Self, GuidanceError> {
        if !(weight_ok(preferred) && weight_ok(penalized) && preferred <= penalized) {
            return Err(GuidanceError::Invalid(format!(
                "crisscross needs 0 < preferred <= penalized, got {preferred} / {penalized}"
            )));
        }
        let width = map.width();
        Ok(Self::from_fn(
            map,
            |v, dir| {
                let (row, col) = (v / width, v % width);
                let favored = match dir {
                    Orientation::East => row % 2 == 0,
                    Orientation::West => row % 2 == 1,
                    Orientation::South => col % 2 == 0,
                    Orientation::North => col % 2 == 1,
                };
                if favored {
                    preferred
                } else {
                    penalized
                }
            },
            |_| 1.0,
        ))
    }

    fn from_fn(
        map: Arc<GridMap>,
        mut move_weight: impl FnMut(VertexId, Orientation) -> f64,
        mut wait_weight: impl FnMut(VertexId) -> f64,
    ) -> Self {
        let n = map.num_cells();
        let mut moves = vec![[f64::INFINITY; 4]; n];
        let mut wait = vec![f64::INFINITY; n];
        for v in map.free_vertices() {
            wait[v] = wait_weight(v);
            for (d, _) in map.neighbors(v) {
                moves[v][d.index()] = move_weight(v, d);
            }
        }
        Self { map, moves, wait }
    }

    pub fn map(&self) -> &Arc<GridMap> {
        &self.map
    }

    /// Weight of leaving `v` in direction `dir`, `None` if unusable.
    #[inline]
    pub fn move_weight(&self, v: VertexId, dir: Orientation) -> Option<f64> {
        let w = self.moves[v][dir.index()];
        w.is_finite().then_some(w)
    }

    /// Like [`move_weight`](Self::move_weight) but infinite when unusable.
    #[inline]
    pub fn move_cost(&self, v: VertexId, dir: Orientation) -> f64 {
        self.moves[v][dir.index()]
    }

    /// Cost of staying at `v` for one step (waits and rotations).
    #[inline]
    pub fn wait_weight(&self, v: VertexId) -> f64 {
        self.wait[v]
    }

    pub fn set_move_weight(&mut self, v: VertexId, dir: Orientation, w: f64) -> Result<(), GuidanceError> {
        let (row, col) = self.map.coords(v);
        if !self.map.is_free(v) || self.map.neighbor(v, dir).is_none() {
            return Err(GuidanceError::Invalid(format!(
                "direction {dir} at ({row}, {col}) is not usable"
            )));
        }
        if !weight_ok(w) {
            return Err(GuidanceError::NonPositiveWeight {
                row,
                col,
                what: format!("move {dir}"),
                value: w,
            });
        }
        self.moves[v][dir.index()] = w;
        Ok(())
    }

    pub fn set_wait_weight(&mut self, v: VertexId, w: f64) -> Result<(), GuidanceError> {
        let (row, col) = self.map.coords(v);
        if !self.map.is_free(v) {
            return Err(GuidanceError::Invalid(format!("({row}, {col}) is an obstacle")));
        }
        if !weight_ok(w) {
            return Err(GuidanceError::NonPositiveWeight {
                row,
                col,
                what: "wait".into(),
                value: w,
            });
        }
        self.wait[v] = w;
        Ok(())
    }

    /// Multiplies every weight by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self, GuidanceError> {
        if !weight_ok(factor) {
            return Err(GuidanceError::Invalid(format!("scale factor {factor} must be positive")));
        }
        let mut out = self.clone();
        for v in self.map.free_vertices() {
            out.wait[v] *= factor;
            for w in out.moves[v].iter_mut().filter(|w| w.is_finite()) {
                *w *= factor;
            }
        }
        Ok(out)
    }

    pub fn to_file_data(&self) -> WeightFile {
        let (h, w) = (self.map.height(), self.map.width());
        let opt = |x: f64| x.is_finite().then_some(x);
        WeightFile {
            format: WEIGHT_FORMAT.to_string(),
            height: h,
            width: w,
            wait: (0..h)
                .map(|r| (0..w).map(|c| opt(self.wait[r * w + c])).collect())
                .collect(),
            moves: (0..h)
                .map(|r| (0..w).map(|c| self.moves[r * w + c].map(opt)).collect())
                .collect(),
        }
    }

    pub fn from_file_data(map: Arc<GridMap>, data: &WeightFile) -> Result<Self, GuidanceError> {
        if data.format != WEIGHT_FORMAT {
            return Err(ParseError::with_field(0, "format", format!("expected {WEIGHT_FORMAT:?}")).into());
        }
        if data.height != map.height() {
            return Err(ParseError::with_field(
                0,
                "height",
                format!("file has {} rows, map has {}", data.height, map.height()),
            )
            .into());
        }
        if data.width != map.width() {
            return Err(ParseError::with_field(
                0,
                "width",
                format!("file has {} columns, map has {}", data.width, map.width()),
            )
            .into());
        }
        let (h, w) = (data.height, data.width);
        let rows_ok = |len: usize, lens: &mut dyn Iterator<Item = usize>, field: &str| {
            if len != h {
                return Err(ParseError::with_field(0, field, format!("expected {h} rows, found {len}")));
            }
            for (r, l) in lens.enumerate() {
                if l != w {
                    return Err(ParseError::with_field(
                        0,
                        format!("{field}[{r}]"),
                        format!("expected {w} entries, found {l}"),
                    ));
                }
            }
            Ok(())
        };
        rows_ok(data.wait.len(), &mut data.wait.iter().map(Vec::len), "wait")?;
        rows_ok(data.moves.len(), &mut data.moves.iter().map(Vec::len), "moves")?;

        let mut g = Self::uniform(map.clone());
        for r in 0..h {
            for c in 0..w {
                let v = r * w + c;
                let free = map.is_free(v);
                match (free, data.wait[r][c]) {
                    (true, Some(x)) => {
                        if !weight_ok(x) {
                            return Err(GuidanceError::NonPositiveWeight {
                                row: r,
                                col: c,
                                what: "wait".into(),
                                value: x,
                            });
                        }
                        g.wait[v] = x;
                    }
                    (false, None) => {}
                    (true, None) => {
                        return Err(
                            ParseError::with_field(0, format!("wait[{r}][{c}]"), "free cell needs a weight").into(),
                        )
                    }
                    (false, Some(_)) => {
                        return Err(ParseError::with_field(0, format!("wait[{r}][{c}]"), "obstacle must be null").into())
                    }
                }
                for d in Orientation::ALL {
                    let usable = free && map.neighbor(v, d).is_some();
                    let field = || format!("moves[{r}][{c}][{}]", d.index());
                    match (usable, data.moves[r][c][d.index()]) {
                        (true, Some(x)) => {
                            if !weight_ok(x) {
                                return Err(GuidanceError::NonPositiveWeight {
                                    row: r,
                                    col: c,
                                    what: format!("move {d}"),
                                    value: x,
                                });
                            }
                            g.moves[v][d.index()] = x;
                        }
                        (false, None) => {}
                        (true, None) => {
                            return Err(ParseError::with_field(0, field(), "usable direction needs a weight").into())
                        }
                        (false, Some(_)) => {
                            return Err(ParseError::with_field(0, field(), "unusable direction must be null").into())
                        }
                    }
                }
            }
        }
        Ok(g)
    }

    /// Serializes to the weight-file text, one grid row per line.
    pub fn to_text(&self) -> String {
        let data = self.to_file_data();
        let rows = |items: Vec<String>| items.join(",\n    ");
        format!(
            "{{\n  \"format\": {},\n  \"height\": {},\n  \"width\": {},\n  \"wait\": [\n    {}\n  ],\n  \"moves\": [\n    {}\n  ]\n}}\n",
            json(&data.format),
            data.height,
            data.width,
            rows(data.wait.iter().map(json).collect()),
            rows(data.moves.iter().map(json).collect()),
        )
    }

    pub fn from_text(map: Arc<GridMap>, text: &str) -> Result<Self, GuidanceError> {
        let data: WeightFile = serde_json::from_str(text).map_err(|e| {
            let field = e.to_string().split('`').nth(1).map(str::to_string);
            ParseError {
                line: e.line(),
                field,
                message: e.to_string(),
            }
        })?;
        Self::from_file_data(map, &data)
    }
}

fn json<T: Serialize>(x: &T) -> String {
    serde_json::to_string(x).expect("weights serialize")
}

/// Serialized weight-file schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightFile {
    pub format: String,
    pub height: usize,
    pub width: usize,
    pub wait: Vec<Vec<Option<f64>>>,
    pub moves: Vec<Vec<[Option<f64>; 4]>>,
}

pub fn load_weights(map: Arc<GridMap>, path: impl AsRef<Path>) -> Result<GuidanceGraph, GuidanceError> {
    let text = std::fs::read_to_string(path)?;
    GuidanceGraph::from_text(map, &text)
}

pub fn save_weights(g: &GuidanceGraph, path: impl AsRef<Path>) -> Result<(), GuidanceError> {
    std::fs::write(path, g.to_text())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn open(h: usize, w: usize) -> Arc<GridMap> {
        Arc::new(GridMap::open(h, w))
    }

    #[test]
    fn uniform_open_3x3_counts() {
        let g = GuidanceGraph::uniform(open(3, 3));
        let mut edges = 0;
        for v in 0..9 {
            assert_eq!(g.wait_weight(v), 1.0);
            for d in Orientation::ALL {
                if let Some(w) = g.move_weight(v, d) {
                    assert_eq!(w, 1.0);
                    edges += 1;
                }
            }
        }
        assert_eq!(edges, 24);
    }

    #[test]
    fn uniform_has_no_edges_into_obstacles() {
        let map = Arc::new(GridMap::from_rows(&["...", ".@.", "..."]).unwrap());
        let g = GuidanceGraph::uniform(map.clone());
        assert_eq!(g.move_weight(map.vertex(0, 1), Orientation::South), None);
        assert_eq!(g.move_weight(map.vertex(1, 0), Orientation::East), None);
        assert_eq!(g.move_weight(map.vertex(1, 0), Orientation::North), Some(1.0));
    }

    #[test]
    fn crisscross_cells() {
        let map = open(6, 8);
        let g = GuidanceGraph::crisscross(map.clone(), DEFAULT_PREFERRED, DEFAULT_PENALIZED).unwrap();
        let v = map.vertex(0, 5);
        assert_eq!(g.move_weight(v, Orientation::East), Some(0.5));
        assert_eq!(g.move_weight(v, Orientation::West), Some(1.5));
        let v = map.vertex(3, 0);
        assert_eq!(g.move_weight(v, Orientation::South), Some(0.5));
        assert_eq!(g.move_weight(v, Orientation::North), Some(1.5));
        let v = map.vertex(1, 1);
        assert_eq!(g.move_weight(v, Orientation::West), Some(0.5));
        assert_eq!(g.move_weight(v, Orientation::North), Some(0.5));
        assert_eq!(g.wait_weight(v), 1.0);
    }

    #[test]
    fn crisscross_rejects_bad_weights() {
        assert!(GuidanceGraph::crisscross(open(2, 2), 1.5, 0.5).is_err());
        assert!(GuidanceGraph::crisscross(open(2, 2), 0.0, 1.0).is_err());
    }

    #[test]
    fn crisscross_with_unit_weights_is_uniform() {
        let map = Arc::new(GridMap::from_rows(&["..@.", "....", "@..."]).unwrap());
        assert_eq!(
            GuidanceGraph::crisscross(map.clone(), 1.0, 1.0).unwrap(),
            GuidanceGraph::uniform(map)
        );
    }

    #[test]
    fn preferred_rows_alternate() {
        let map = open(7, 5);
        let g = GuidanceGraph::crisscross(map.clone(), 0.5, 1.5).unwrap();
        let prefers_east = |r| g.move_weight(map.vertex(r, 2), Orientation::East) == Some(0.5);
        let prefers_west = |r| g.move_weight(map.vertex(r, 2), Orientation::West) == Some(0.5);
        for r in 0..6 {
            assert_eq!(prefers_east(r), prefers_west(r + 1));
            assert_ne!(prefers_east(r), prefers_west(r));
        }
    }

    #[test]
    fn save_then_load_round_trips() {
        let map = Arc::new(GridMap::from_rows(&["..@.", "....", "@..T"]).unwrap());
        let g = GuidanceGraph::crisscross(map.clone(), 0.5, 1.5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.json");
        save_weights(&g, &path).unwrap();
        assert_eq!(load_weights(map, &path).unwrap(), g);
    }

    #[test]
    fn zero_weight_is_rejected() {
        let map = open(2, 2);
        let text = GuidanceGraph::uniform(map.clone()).to_text().replacen("1.0", "0.0", 1);
        assert!(matches!(
            GuidanceGraph::from_text(map, &text),
            Err(GuidanceError::NonPositiveWeight { value, .. }) if value == 0.0
        ));
    }

    #[test]
    fn dimension_mismatch_is_a_parse_error() {
        let text = GuidanceGraph::uniform(open(2, 2)).to_text();
        match GuidanceGraph::from_text(open(3, 2), &text) {
            Err(GuidanceError::Parse(e)) => assert_eq!(e.field.as_deref(), Some("height")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_json_reports_line() {
        let map = open(2, 2);
        let text = GuidanceGraph::uniform(map.clone()).to_text().replace("\"moves\"", "\"moves");
        match GuidanceGraph::from_text(map, &text) {
            Err(GuidanceError::Parse(e)) => assert!(e.line > 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn text_round_trip_is_exact(
            free in proptest::collection::vec(prop::bool::weighted(0.8), 12),
            weights in proptest::collection::vec(1e-3f64..1e3, 60),
        ) {
            let cells = free.iter().map(|&f| if f { crate::domain::Cell::Free } else { crate::domain::Cell::Obstacle }).collect();
            let Ok(map) = GridMap::new(3, 4, cells) else { return Ok(()); };
            let map = Arc::new(map);
            let mut g = GuidanceGraph::uniform(map.clone());
            let mut it = weights.iter().cycle();
            for v in map.free_vertices().collect::<Vec<_>>() {
                g.set_wait_weight(v, *it.next().unwrap()).unwrap();
                for (d, _) in map.neighbors(v).collect::<Vec<_>>() {
                    g.set_move_weight(v, d, *it.next().unwrap()).unwrap();
                }
            }
            let back = GuidanceGraph::from_text(map, &g.to_text()).unwrap();
            prop_assert_eq!(back, g);
        }
    }
}
