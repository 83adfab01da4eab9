//! Map and agent text files.
//!
//! Map files follow the octile grid layout:
//!
//! ```text
//! type octile
//! height H
//! width W
//! map
//! <H rows of W characters: '.' free, '@' or 'T' obstacle>
//! ```
//!
//! Agent files hold one agent per line as `row col orientation` with the
//! orientation one of `E S W N`; four-way instances omit the orientation.

use super::{ActionModel, AgentState, Cell, GridMap, Orientation, FOUR_WAY_ORIENTATION};
use crate::error::ParseError;

fn header_value(line_no: usize, line: Option<&str>, key: &str) -> Result<usize, ParseError> {
    let line = line.ok_or_else(|| ParseError::new(line_no, format!("missing `{key}` line")))?;
    let mut parts = line.split_whitespace();
    if parts.next() != Some(key) {
        return Err(ParseError::with_field(line_no, key, format!("expected `{key} <n>`")));
    }
    let value = parts
        .next()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|v| *v > 0)
        .ok_or_else(|| ParseError::with_field(line_no, key, "expected a positive integer"))?;
    if parts.next().is_some() {
        return Err(ParseError::with_field(line_no, key, "trailing tokens"));
    }
    Ok(value)
}

pub fn parse_map(text: &str) -> Result<GridMap, ParseError> {
    let mut lines = text.lines().map(|l| l.trim_end_matches('\r'));
    match lines.next() {
        Some(l) if l.trim() == "type octile" => {}
        _ => return Err(ParseError::new(1, "expected `type octile`")),
    }
    let height = header_value(2, lines.next(), "height")?;
    let width = header_value(3, lines.next(), "width")?;
    match lines.next() {
        Some(l) if l.trim() == "map" => {}
        _ => return Err(ParseError::new(4, "expected `map`")),
    }
    let mut cells = Vec::with_capacity(height * width);
    for r in 0..height {
        let line_no = 5 + r;
        let row = lines
            .next()
            .ok_or_else(|| ParseError::new(line_no, format!("expected {height} map rows, found {r}")))?;
        if row.chars().count() != width {
            return Err(ParseError::new(
                line_no,
                format!("expected {width} characters, found {}", row.chars().count()),
            ));
        }
        for (c, ch) in row.chars().enumerate() {
            cells.push(match ch {
                '.' => Cell::Free,
                '@' | 'T' => Cell::Obstacle,
                other => {
                    return Err(ParseError::new(
                        line_no,
                        format!("unexpected character {other:?} at column {c}"),
                    ))
                }
            });
        }
    }
    if let Some((extra, _)) = lines.enumerate().find(|(_, l)| !l.trim().is_empty()) {
        return Err(ParseError::new(5 + height + extra, "unexpected content after the map rows"));
    }
    GridMap::new(height, width, cells).map_err(|e| ParseError::new(0, e.to_string()))
}

pub fn write_map(map: &GridMap) -> String {
    let mut out = format!(
        "type octile\nheight {}\nwidth {}\nmap\n",
        map.height(),
        map.width()
    );
    for r in 0..map.height() {
        for c in 0..map.width() {
            out.push(match map.cell(map.vertex(r, c)) {
                Cell::Free => '.',
                Cell::Obstacle => '@',
            });
        }
        out.push('\n');
    }
    out
}

/// Parses agent starts. Blank lines and `#` comments are skipped. Locations
/// must be free and pairwise distinct.
pub fn parse_agents(text: &str, map: &GridMap, model: ActionModel) -> Result<Vec<AgentState>, ParseError> {
    let mut agents = Vec::new();
    let mut seen = vec![false; map.num_cells()];
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let expected = match model {
            ActionModel::Rotation => 3,
            ActionModel::FourWay => 2,
        };
        if fields.len() != expected {
            return Err(ParseError::new(
                line_no,
                format!("expected {expected} fields, found {}", fields.len()),
            ));
        }
        let coord = |idx: usize, name: &str, bound: usize| {
            fields[idx]
                .parse::<usize>()
                .ok()
                .filter(|v| *v < bound)
                .ok_or_else(|| ParseError::with_field(line_no, name, format!("expected an integer below {bound}")))
        };
        let row = coord(0, "row", map.height())?;
        let col = coord(1, "col", map.width())?;
        let orientation = match model {
            ActionModel::Rotation => {
                let mut chars = fields[2].chars();
                match (chars.next().and_then(Orientation::from_char), chars.next()) {
                    (Some(o), None) => o,
                    _ => {
                        return Err(ParseError::with_field(
                            line_no,
                            "orientation",
                            "expected one of E, S, W, N",
                        ))
                    }
                }
            }
            ActionModel::FourWay => FOUR_WAY_ORIENTATION,
        };
        let v = map.vertex(row, col);
        if !map.is_free(v) {
            return Err(ParseError::new(line_no, format!("({row}, {col}) is an obstacle")));
        }
        if std::mem::replace(&mut seen[v], true) {
            return Err(ParseError::new(line_no, format!("({row}, {col}) is already occupied")));
        }
        agents.push(AgentState::new(v, orientation));
    }
    Ok(agents)
}

pub fn write_agents(agents: &[AgentState], map: &GridMap, model: ActionModel) -> String {
    let mut out = String::new();
    for s in agents {
        let (r, c) = map.coords(s.location);
        match model {
            ActionModel::Rotation => out.push_str(&format!("{r} {c} {}\n", s.orientation)),
            ActionModel::FourWay => out.push_str(&format!("{r} {c}\n")),
        }
    }
    out
}
