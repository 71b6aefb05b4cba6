//! Contact sheet of synthetic faces: originals on the top row, then the
//! light, gray and sketch copies, with landmarks marked in red.
//!
//! `cargo run --example preview -- sheet.png`

use std::path::PathBuf;

use sanlite_core::dataset::{synth_faces, SynthParams};
use sanlite_core::imaging::{RgbImage, StyleFilter};

fn main() -> sanlite_core::Result<()> {
    let out = std::env::args().nth(1).map_or_else(|| PathBuf::from("sheet.png"), PathBuf::from);
    let params = SynthParams::default();
    let faces = synth_faces(&params, 8, 7);
    let tile = params.image_size;
    let rows: Vec<Vec<RgbImage>> = std::iter::once(faces.iter().map(|f| f.1.clone()).collect())
        .chain(StyleFilter::ALL.iter().map(|s| faces.iter().map(|f| s.apply(&f.1)).collect()))
        .collect();
    let sheet = RgbImage::from_fn(tile * faces.len(), tile * rows.len(), |x, y| {
        let (i, (px, py)) = (x / tile, (x % tile, y % tile));
        let near = |pt: &[f64; 2]| (pt[0] - px as f64 - 0.5).abs() < 1.0 && (pt[1] - py as f64 - 0.5).abs() < 1.0;
        if faces[i].0.annotation.points.iter().any(near) {
            [1.0, 0.0, 0.0]
        } else {
            rows[y / tile][i].pixel(px, py)
        }
    })?;
    sheet.save_png(&out)?;
    println!("wrote {}", out.display());
    Ok(())
}
