//! Running first/second moments with batched (parallel-merge) updates.

use serde::{Deserialize, Serialize};

/// Scalar running mean and population variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunningMoments {
    pub mean: f64,
    pub var: f64,
    pub count: f64,
}

impl Default for RunningMoments {
    fn default() -> Self {
        Self {
            mean: 0.0,
            var: 1.0,
            count: 0.0,
        }
    }
}

impl RunningMoments {
    /// Merges a batch into the running statistics (Chan et al. pairwise update).
    pub fn update(&mut self, batch: &[f64]) {
        if batch.is_empty() {
            return;
        }
        let n = batch.len() as f64;
        let mean = batch.iter().sum::<f64>() / n;
        let var = batch.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        self.merge(mean, var, n);
    }

    fn merge(&mut self, batch_mean: f64, batch_var: f64, batch_count: f64) {
        if self.count == 0.0 {
            self.mean = batch_mean;
            self.var = batch_var;
            self.count = batch_count;
            return;
        }
        let total = self.count + batch_count;
        let delta = batch_mean - self.mean;
        let m2 = self.var * self.count + batch_var * batch_count + delta * delta * self.count * batch_count / total;
        self.mean += delta * batch_count / total;
        self.var = (m2 / total).max(0.0);
        self.count = total;
    }

    pub fn std(&self) -> f64 {
        self.var.sqrt()
    }
}

/// Per-dimension running moments for vector inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunningMomentsVec {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: f64,
}

impl RunningMomentsVec {
    pub fn new(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
            count: 0.0,
        }
    }

    pub fn update<'a>(&mut self, rows: impl IntoIterator<Item = &'a [f64]>) {
        let dim = self.mean.len();
        let mut sum = vec![0.0; dim];
        let mut rows_vec: Vec<&[f64]> = Vec::new();
        for r in rows {
            for (s, x) in sum.iter_mut().zip(r) {
                *s += x;
            }
            rows_vec.push(r);
        }
        if rows_vec.is_empty() {
            return;
        }
        let n = rows_vec.len() as f64;
        let bmean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let mut bvar = vec![0.0; dim];
        for r in &rows_vec {
            for ((v, x), m) in bvar.iter_mut().zip(r.iter()).zip(&bmean) {
                *v += (x - m) * (x - m);
            }
        }
        bvar.iter_mut().for_each(|v| *v /= n);

        if self.count == 0.0 {
            self.mean = bmean;
            self.var = bvar;
            self.count = n;
            return;
        }
        let total = self.count + n;
        for d in 0..dim {
            let delta = bmean[d] - self.mean[d];
            let m2 = self.var[d] * self.count + bvar[d] * n + delta * delta * self.count * n / total;
            self.mean[d] += delta * n / total;
            self.var[d] = (m2 / total).max(0.0);
        }
        self.count = total;
    }

    /// `(x - mean) / sqrt(var + eps)`, clipped to `[-clip, clip]`.
    pub fn normalize(&self, x: &[f64], eps: f64, clip: f64) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.var)
            .map(|((x, m), v)| ((x - m) / (v + eps).sqrt()).clamp(-clip, clip))
            .collect()
    }
}
