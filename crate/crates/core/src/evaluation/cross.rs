use serde::{Deserialize, Serialize};

use super::metrics::EvalResult;
use crate::dataset::StyleLabel;
use crate::error::Result;
use crate::seed;

/// Trains and evaluates detectors for the cross-style grid.
pub trait DetectorFactory {
    type Model;

    fn train(&self, variant: &str, train_style: StyleLabel, seed: u64) -> Result<Self::Model>;

    fn evaluate(&self, model: &Self::Model, variant: &str, test_style: StyleLabel) -> Result<EvalResult>;
}

/// Train style by test style mean NME for one detector variant; failed
/// cells are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StyleMatrix {
    pub variant: String,
    pub styles: Vec<StyleLabel>,
    /// `cells[train][test]`.
    pub cells: Vec<Vec<Option<f64>>>,
    pub failures: Vec<String>,
}

impl StyleMatrix {
    pub fn diagonal(&self) -> Vec<Option<f64>> {
        (0..self.styles.len()).map(|i| self.cells[i][i]).collect()
    }

    /// Mean of the finite off-diagonal cells of row `train`.
    pub fn off_diagonal_row_mean(&self, train: usize) -> Option<f64> {
        mean(self.cells[train].iter().enumerate().filter(|(j, _)| *j != train).filter_map(|(_, c)| *c))
    }

    pub fn off_diagonal_mean(&self) -> Option<f64> {
        let n = self.styles.len();
        mean((0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).filter_map(|(i, j)| self.cells[i][j]))
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Per-cell `(base - improved) / base`.
pub fn improvement_grid(base: &StyleMatrix, improved: &StyleMatrix) -> Vec<Vec<Option<f64>>> {
    base.cells
        .iter()
        .zip(&improved.cells)
        .map(|(rb, ri)| {
            rb.iter()
                .zip(ri)
                .map(|(b, i)| match (b, i) {
                    (Some(b), Some(i)) if *b > 0.0 => Some((b - i) / b),
                    _ => None,
                })
                .collect()
        })
        .collect()
}

/// The cell seed depends only on the training style, so variants trained on
/// one style share initialization and batch order.
pub fn cell_seed(master: u64, train_style: StyleLabel) -> u64 {
    seed::stage_seed(master, &format!("cross-style/{}", train_style.name()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossStyleResult {
    pub matrices: Vec<StyleMatrix>,
    pub evaluations: Vec<EvalResult>,
}

impl CrossStyleResult {
    pub fn matrix(&self, variant: &str) -> Option<&StyleMatrix> {
        self.matrices.iter().find(|m| m.variant == variant)
    }
}

/// One training per (variant, train style), each evaluated on every test style.
pub fn cross_style_matrix<F: DetectorFactory>(factory: &F, styles: &[StyleLabel], variants: &[&str], seed: u64) -> CrossStyleResult {
    let n = styles.len();
    let mut matrices = Vec::new();
    let mut evaluations = Vec::new();
    for &variant in variants {
        let mut cells = vec![vec![None; n]; n];
        let mut failures = Vec::new();
        for (i, &train_style) in styles.iter().enumerate() {
            let model = match factory.train(variant, train_style, cell_seed(seed, train_style)) {
                Ok(m) => m,
                Err(e) => {
                    log::warn!("{variant}: training on {train_style} failed: {e}");
                    failures.push(format!("train {train_style}: {e}"));
                    continue;
                }
            };
            for (j, &test_style) in styles.iter().enumerate() {
                match factory.evaluate(&model, variant, test_style) {
                    Ok(r) => {
                        cells[i][j] = Some(r.mean_nme());
                        evaluations.push(r);
                    }
                    Err(e) => failures.push(format!("train {train_style} test {test_style}: {e}")),
                }
            }
        }
        matrices.push(StyleMatrix { variant: variant.into(), styles: styles.to_vec(), cells, failures });
    }
    CrossStyleResult { matrices, evaluations }
}
