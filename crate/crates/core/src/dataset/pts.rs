//! `.pts` landmark sidecars.

use crate::error::{Error, Result};
use crate::imaging::Point;

pub fn parse_pts(text: &str) -> Result<Vec<Point>> {
    let bad = |m: &str| Error::Manifest(format!("pts: {m}"));
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let mut n_points = None;
    for line in lines.by_ref() {
        if line == "{" {
            break;
        }
        if let Some(rest) = line.strip_prefix("n_points:") {
            n_points = Some(rest.trim().parse::<usize>().map_err(|_| bad("bad n_points"))?);
        } else if !line.starts_with("version:") {
            return Err(bad(&format!("unexpected header line `{line}`")));
        }
    }
    let n = n_points.ok_or_else(|| bad("missing n_points"))?;
    let mut points = Vec::with_capacity(n);
    let mut closed = false;
    for line in lines {
        if line == "}" {
            closed = true;
            break;
        }
        let mut it = line.split_whitespace().map(str::parse::<f64>);
        match (it.next(), it.next(), it.next()) {
            (Some(Ok(x)), Some(Ok(y)), None) => points.push([x, y]),
            _ => return Err(bad(&format!("bad point line `{line}`"))),
        }
    }
    if !closed {
        return Err(bad("missing closing brace"));
    }
    if points.len() != n {
        return Err(bad(&format!("n_points is {n} but {} points listed", points.len())));
    }
    Ok(points)
}

pub fn format_pts(points: &[Point]) -> String {
    let mut s = format!("version: 1\nn_points: {}\n{{\n", points.len());
    for p in points {
        s.push_str(&format!("{} {}\n", p[0], p[1]));
    }
    s.push_str("}\n");
    s
}
