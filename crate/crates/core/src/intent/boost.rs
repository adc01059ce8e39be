//! Gradient boosting of regression trees on the logistic loss, with
//! Newton-step leaf values.

use serde::{Deserialize, Serialize};

use super::tree::{Tree, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub rounds: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub shrinkage: f64,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self { rounds: 100, max_depth: 3, min_leaf: 2, shrinkage: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Booster {
    base: f64,
    /// Each tree with the step size it was added with.
    stages: Vec<(Tree, f64)>,
    /// Training log-loss before the first round and after every round.
    pub train_loss: Vec<f64>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean negative log-likelihood of 0/1 targets under raw scores `f`.
pub fn log_loss(y: &[f64], f: &[f64]) -> f64 {
    // log(1 + e^{-f}) for y = 1, log(1 + e^{f}) for y = 0
    let softplus = |z: f64| if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
    y.iter().zip(f).map(|(&y, &f)| if y > 0.5 { softplus(-f) } else { softplus(f) }).sum::<f64>() / y.len().max(1) as f64
}

impl Booster {
    pub fn fit(x: &[Vec<f64>], y: &[f64], params: BoostParams) -> Booster {
        let n = y.len();
        let p0 = (y.iter().sum::<f64>() / n.max(1) as f64).clamp(1e-6, 1.0 - 1e-6);
        let base = (p0 / (1.0 - p0)).ln();
        let mut f = vec![base; n];
        let mut train_loss = vec![log_loss(y, &f)];
        let mut stages = Vec::with_capacity(params.rounds);
        let tree_params = TreeParams { max_depth: params.max_depth, min_leaf: params.min_leaf };
        for _ in 0..params.rounds {
            let p: Vec<f64> = f.iter().map(|&z| sigmoid(z)).collect();
            let residual: Vec<f64> = y.iter().zip(&p).map(|(y, p)| y - p).collect();
            let hess: Vec<f64> = p.iter().map(|p| p * (1.0 - p)).collect();
            let leaf = |idx: &[usize]| {
                let g: f64 = idx.iter().map(|&i| residual[i]).sum();
                let h: f64 = idx.iter().map(|&i| hess[i]).sum();
                (g / (h + 1e-12)).clamp(-8.0, 8.0)
            };
            let tree = Tree::fit_regressor(x, &residual, tree_params, &leaf);
            let step: Vec<f64> = x.iter().map(|r| tree.predict(r)).collect();
            let prev = *train_loss.last().expect("seeded above");
            // backtrack when the Newton step overshoots
            let mut eta = params.shrinkage;
            let mut accepted = None;
            for _ in 0..30 {
                let trial: Vec<f64> = f.iter().zip(&step).map(|(f, s)| f + eta * s).collect();
                let loss = log_loss(y, &trial);
                if loss <= prev {
                    accepted = Some((trial, loss));
                    break;
                }
                eta *= 0.5;
            }
            match accepted {
                Some((trial, loss)) => {
                    f = trial;
                    train_loss.push(loss);
                    stages.push((tree, eta));
                }
                None => train_loss.push(prev),
            }
        }
        Booster { base, stages, train_loss }
    }

    pub fn raw_score(&self, row: &[f64]) -> f64 {
        self.base + self.stages.iter().map(|(t, eta)| eta * t.predict(row)).sum::<f64>()
    }

    /// Probability of Go.
    pub fn probability(&self, row: &[f64]) -> f64 {
        sigmoid(self.raw_score(row))
    }

    pub fn rounds(&self) -> usize {
        self.stages.len()
    }
}
