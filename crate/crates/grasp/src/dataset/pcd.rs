//! Depth images from Cornell ASCII point clouds.
//!
//! Each data line carries the fields named in the `FIELDS` header; the
//! `index` field is the row-major pixel index of the point. Depth is the
//! Euclidean range of `(x, y, z)` converted from millimetres to metres.
//! Pixels without a point are filled by [`inpaint`].

use std::path::Path;

use grasp_core::Grid;

use crate::{Error, Result};

pub const CGD_SHAPE: (usize, usize) = (480, 640);

pub fn pcd_to_depth(path: &Path, shape: (usize, usize)) -> Result<Grid<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pcd(&text, shape, path)
}

/// Raw depth (metres, 0 where no point landed), then inpainted.
pub fn parse_pcd(text: &str, shape: (usize, usize), path: &Path) -> Result<Grid<f64>> {
    let (rows, cols) = shape;
    let mut depth = Grid::filled(rows, cols, 0.0);
    let mut fields: Option<Vec<String>> = None;
    let mut in_data = false;
    let mut cols_of = (0, 0, 0, 0);
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !in_data {
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap_or_default().to_ascii_uppercase();
            match key.as_str() {
                "FIELDS" => {
                    let names: Vec<String> = parts.map(str::to_ascii_lowercase).collect();
                    let find = |n: &str| names.iter().position(|f| f == n);
                    let (Some(x), Some(y), Some(z), Some(idx)) = (find("x"), find("y"), find("z"), find("index"))
                    else {
                        return Err(Error::parse(path, line_no, "FIELDS must include x, y, z and index"));
                    };
                    cols_of = (x, y, z, idx);
                    fields = Some(names);
                }
                "DATA" => {
                    if fields.is_none() {
                        return Err(Error::parse(path, line_no, "DATA before FIELDS header"));
                    }
                    if parts.next() != Some("ascii") {
                        return Err(Error::parse(path, line_no, "only ascii point clouds are supported"));
                    }
                    in_data = true;
                }
                "VERSION" | "SIZE" | "TYPE" | "COUNT" | "WIDTH" | "HEIGHT" | "VIEWPOINT" | "POINTS" => {}
                _ => return Err(Error::parse(path, line_no, format!("unexpected header line `{line}`"))),
            }
            continue;
        }
        let n_fields = fields.as_ref().map_or(0, Vec::len);
        let values: Vec<&str> = line.split_whitespace().collect();
        if values.len() != n_fields {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected {n_fields} fields, found {}", values.len()),
            ));
        }
        let num = |k: usize| {
            values[k]
                .parse::<f64>()
                .map_err(|_| Error::parse(path, line_no, format!("`{}` is not a number", values[k])))
        };
        let (x, y, z) = (num(cols_of.0)?, num(cols_of.1)?, num(cols_of.2)?);
        let index = num(cols_of.3)?;
        if !(index >= 0.0 && index.fract() == 0.0) {
            return Err(Error::parse(
                path,
                line_no,
                "pixel index must be a non-negative integer",
            ));
        }
        let index = index as usize;
        let (r, c) = (index / cols, index % cols);
        if r >= rows {
            return Err(Error::parse(
                path,
                line_no,
                format!("pixel index {index} outside {rows}x{cols}"),
            ));
        }
        let range = (x * x + y * y + z * z).sqrt() / 1000.0;
        if range.is_finite() {
            depth[(r, c)] = range;
        }
    }
    if !in_data {
        return Err(Error::parse(
            path,
            text.lines().count().max(1),
            "missing point-cloud header",
        ));
    }
    inpaint(&mut depth);
    Ok(depth)
}

/// Fills non-positive or non-finite pixels in passes: each pass assigns
/// every missing pixel that touches a valid one (8-neighbourhood) the mean
/// of those valid neighbours. Returns the number of pixels filled; an image
/// with no valid pixel is left unchanged.
pub fn inpaint(depth: &mut Grid<f64>) -> usize {
    let (rows, cols) = depth.shape();
    let valid = |v: f64| v.is_finite() && v > 0.0;
    let mut missing: Vec<(usize, usize)> = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r, c)))
        .filter(|&(r, c)| !valid(depth[(r, c)]))
        .collect();
    let total = missing.len();
    if total == rows * cols {
        return 0;
    }
    while !missing.is_empty() {
        let mut fills = Vec::new();
        let mut still = Vec::new();
        for &(r, c) in &missing {
            let (mut sum, mut n) = (0.0, 0);
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                    if (dr, dc) == (0, 0) || rr < 0 || cc < 0 || rr >= rows as i64 || cc >= cols as i64 {
                        continue;
                    }
                    let v = depth[(rr as usize, cc as usize)];
                    if valid(v) {
                        sum += v;
                        n += 1;
                    }
                }
            }
            if n > 0 {
                fills.push(((r, c), sum / n as f64));
            } else {
                still.push((r, c));
            }
        }
        for ((r, c), v) in fills {
            depth[(r, c)] = v;
        }
        missing = still;
    }
    total
}

/// Writes a Cornell-style ASCII point cloud with points along the optical
/// axis, so the range equals the depth. Zero depths are omitted.
pub fn format_pcd(depth: &Grid<f64>) -> String {
    let (rows, cols) = depth.shape();
    let points: Vec<String> = (0..rows * cols)
        .filter_map(|i| {
            let d = depth[(i / cols, i % cols)];
            (d > 0.0).then(|| format!("0 0 {:.4} 0 {i}", d * 1000.0))
        })
        .collect();
    let mut s = String::from("# .PCD v.7 - Point Cloud Data file format\n");
    s.push_str("FIELDS x y z rgb index\nSIZE 4 4 4 4 4\nTYPE F F F F U\nCOUNT 1 1 1 1 1\n");
    s.push_str(&format!(
        "WIDTH {}\nHEIGHT 1\nPOINTS {}\nDATA ascii\n",
        points.len(),
        points.len()
    ));
    for p in points {
        s.push_str(&p);
        s.push('\n');
    }
    s
}
