use std::collections::HashMap;

/// Feature string → row index, growing on demand during training.
#[derive(Clone, Debug, Default)]
pub(crate) struct FeatureIndex {
    pub names: Vec<String>,
    pub map: HashMap<String, usize>,
}

impl FeatureIndex {
    pub fn intern(&mut self, f: &str) -> usize {
        if let Some(&i) = self.map.get(f) {
            return i;
        }
        self.names.push(f.to_string());
        self.map.insert(f.to_string(), self.names.len() - 1);
        self.names.len() - 1
    }
}

/// Integer weight table with lazy averaging: `avg = w - u / c`.
#[derive(Clone, Debug)]
pub(crate) struct Averaged {
    pub w: Vec<i64>,
    u: Vec<i64>,
    c: i64,
}

impl Averaged {
    pub fn new(len: usize) -> Self {
        Averaged {
            w: vec![0; len],
            u: vec![0; len],
            c: 1,
        }
    }

    /// Extends the table with zero weights.
    pub fn grow(&mut self, len: usize) {
        if len > self.w.len() {
            self.w.resize(len, 0);
            self.u.resize(len, 0);
        }
    }

    pub fn update(&mut self, idx: usize, delta: i64) {
        self.w[idx] += delta;
        self.u[idx] += self.c * delta;
    }

    /// Marks the end of one training instance.
    pub fn tick(&mut self) {
        self.c += 1;
    }

    pub fn averaged(&self) -> Vec<f64> {
        let c = self.c as f64;
        self.w
            .iter()
            .zip(&self.u)
            .map(|(&w, &u)| w as f64 - u as f64 / c)
            .collect()
    }
}

/// Micro F1 from counts; no predictions and no gold counts as perfect.
pub(crate) fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp + fp + fn_ == 0 {
        1.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lazy_average_is_mean_over_states() {
        let mut a = Averaged::new(1);
        let mut states = vec![0.0];
        for step in 0..4 {
            match step {
                0 => a.update(0, 3),
                2 => a.update(0, -1),
                _ => {}
            }
            states.push(a.w[0] as f64);
            a.tick();
        }
        let mean = states.iter().sum::<f64>() / states.len() as f64;
        assert!((a.averaged()[0] - mean).abs() < 1e-12);
    }
}
