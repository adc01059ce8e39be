use serde::{Deserialize, Serialize};

/// Per-feature z-scoring fitted on one sample. Zero-spread features are only
/// centered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn fit(x: &[Vec<f64>]) -> Scaler {
        let d = x.first().map_or(0, |r| r.len());
        let n = x.len().max(1) as f64;
        let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let std = (0..d)
            .map(|j| {
                let var = x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Scaler { mean, std }
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(self.mean.iter().zip(&self.std)).map(|(v, (m, s))| (v - m) / s).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    pub k: usize,
    pub scaler: Scaler,
    points: Vec<Vec<f64>>,
    labels: Vec<f64>,
}

impl Knn {
    pub fn fit(x: &[Vec<f64>], y: &[f64], k: usize) -> Knn {
        let scaler = Scaler::fit(x);
        let points = x.iter().map(|r| scaler.transform(r)).collect();
        Knn { k: k.max(1), scaler, points, labels: y.to_vec() }
    }

    /// Fraction of Go among the `k` nearest training rows (Euclidean, after
    /// scaling); equal distances keep training order.
    pub fn vote_fraction(&self, row: &[f64]) -> f64 {
        let q = self.scaler.transform(row);
        let mut d: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (p.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
            .collect();
        let k = self.k.min(d.len());
        if k == 0 {
            return 0.0;
        }
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        d[..k].iter().map(|&(_, i)| self.labels[i]).sum::<f64>() / k as f64
    }
}
