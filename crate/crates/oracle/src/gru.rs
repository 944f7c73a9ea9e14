//! GRU cell and dense layer written directly from the gate equations,
//! using nested `Vec`s and no loop fusion.

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn matvec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

#[derive(Debug, Clone)]
pub struct RefGru {
    /// Input weights, one row per hidden unit.
    pub wz: Vec<Vec<f64>>,
    pub wr: Vec<Vec<f64>>,
    pub wc: Vec<Vec<f64>>,
    /// Recurrent weights, hidden x hidden.
    pub uz: Vec<Vec<f64>>,
    pub ur: Vec<Vec<f64>>,
    pub uc: Vec<Vec<f64>>,
    pub bz: Vec<f64>,
    pub br: Vec<f64>,
    pub bc: Vec<f64>,
    pub dense_w: Vec<f64>,
    pub dense_b: f64,
}

impl RefGru {
    pub fn hidden(&self) -> usize {
        self.bz.len()
    }

    /// One step: returns the new hidden state.
    pub fn step(&self, x: f64, h: &[f64]) -> Vec<f64> {
        let xv = [x];
        let wzx = matvec(&self.wz, &xv);
        let wrx = matvec(&self.wr, &xv);
        let wcx = matvec(&self.wc, &xv);
        let uzh = matvec(&self.uz, h);
        let urh = matvec(&self.ur, h);
        let uch = matvec(&self.uc, h);
        let n = self.hidden();
        let mut out = vec![0.0; n];
        for i in 0..n {
            let z = sigmoid(wzx[i] + uzh[i] + self.bz[i]);
            let r = sigmoid(wrx[i] + urh[i] + self.br[i]);
            let c = (wcx[i] + r * uch[i] + self.bc[i]).tanh();
            out[i] = z * h[i] + (1.0 - z) * c;
        }
        out
    }

    pub fn output(&self, h: &[f64]) -> f64 {
        self.dense_w.iter().zip(h).map(|(w, v)| w * v).sum::<f64>() + self.dense_b
    }

    /// Run a whole signal from a zero state.
    pub fn run(&self, input: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; self.hidden()];
        input
            .iter()
            .map(|&x| {
                h = self.step(x, &h);
                self.output(&h)
            })
            .collect()
    }
}
