/// Per-dimension affine standardisation `(x − mean) / std`.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Smallest standard deviation kept by [`Normalizer::fit`].
pub const STD_FLOOR: f64 = 1e-8;

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Fits to `n` row-major samples of width `dim`.
    pub fn fit(data: &[f64], dim: usize) -> Self {
        let n = data.len() / dim;
        if n == 0 {
            return Self::identity(dim);
        }
        let mut mean = vec![0.0; dim];
        for row in data.chunks_exact(dim) {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; dim];
        for row in data.chunks_exact(dim) {
            for k in 0..dim {
                let d = row[k] - mean[k];
                var[k] += d * d;
            }
        }
        let std = var.iter().map(|v| (v / n as f64).sqrt().max(STD_FLOOR)).collect();
        Self { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Normalises every row of `data` in place.
    pub fn normalize(&self, data: &mut [f64]) {
        for row in data.chunks_exact_mut(self.dim()) {
            for k in 0..row.len() {
                row[k] = (row[k] - self.mean[k]) / self.std[k];
            }
        }
    }

    pub fn denormalize(&self, data: &mut [f64]) {
        for row in data.chunks_exact_mut(self.dim()) {
            for k in 0..row.len() {
                row[k] = row[k] * self.std[k] + self.mean[k];
            }
        }
    }
}
