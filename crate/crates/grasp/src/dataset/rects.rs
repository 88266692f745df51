//! Cornell rectangle files: four lines of `x y` (column, row) per rectangle.

use std::path::Path;

use grasp_core::{GraspRectangle, Point2};

use crate::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RectFile {
    pub rects: Vec<GraspRectangle>,
    /// Groups dropped because a coordinate was NaN.
    pub skipped_nan: usize,
    /// Kept rectangles whose sides deviate from parallel beyond tolerance.
    pub skewed: usize,
}

pub fn parse_rect_file(path: &Path) -> Result<RectFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_rects(&text, path)
}

/// Parses rectangle text; `path` is used only in error messages.
pub fn parse_rects(text: &str, path: &Path) -> Result<RectFile> {
    let mut out = RectFile::default();
    let mut group: Vec<(usize, f64, f64)> = Vec::with_capacity(4);
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let (Some(xs), Some(ys), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected two numbers, found `{line}`"),
            ));
        };
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::parse(path, line_no, format!("`{s}` is not a number")))
        };
        group.push((line_no, num(xs)?, num(ys)?));
        if group.len() == 4 {
            if group.iter().any(|&(_, x, y)| x.is_nan() || y.is_nan()) {
                out.skipped_nan += 1;
            } else {
                let v = [0, 1, 2, 3].map(|k| Point2::new(group[k].2, group[k].1));
                let rect = GraspRectangle::new(v).map_err(|e| Error::parse(path, group[0].0, e.to_string()))?;
                if !rect.is_well_formed() {
                    out.skewed += 1;
                }
                out.rects.push(rect);
            }
            group.clear();
        }
    }
    if let Some(&(line_no, _, _)) = group.first() {
        return Err(Error::parse(
            path,
            line_no,
            format!("incomplete rectangle: {} of 4 vertex lines", group.len()),
        ));
    }
    if out.skipped_nan > 0 {
        log::warn!(
            "{}: skipped {} rectangle(s) containing NaN",
            path.display(),
            out.skipped_nan
        );
    }
    Ok(out)
}

/// Writes rectangles in the same format (used for fixtures and synthetic
/// datasets).
pub fn format_rects(rects: &[GraspRectangle]) -> String {
    let mut s = String::new();
    for r in rects {
        for v in r.vertices() {
            s.push_str(&format!("{} {}\n", v.col, v.row));
        }
    }
    s
}
