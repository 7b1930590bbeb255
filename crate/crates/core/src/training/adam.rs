/// Adam moment estimates over a flat parameter vector, updated in slices.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
    /// Bias corrections `1 − βᵗ` of the current step.
    c1: f64,
    c2: f64,
}

impl Adam {
    pub fn new(n: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            c1: 0.0,
            c2: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn steps(&self) -> u32 {
        self.t
    }

    /// Advances the step counter; call once before the slice updates of a step.
    pub fn begin_step(&mut self) {
        self.t += 1;
        self.c1 = 1.0 - self.beta1.powi(self.t as i32);
        self.c2 = 1.0 - self.beta2.powi(self.t as i32);
    }

    /// Bias-corrected update of `params`, which occupy `offset..offset + len`
    /// in the flat moment vectors.
    pub fn update(&mut self, offset: usize, params: &mut [f64], grad: &[f64], lr: f64) {
        assert!(self.t > 0, "begin_step must precede update");
        assert_eq!(params.len(), grad.len());
        let (c1, c2) = (self.c1, self.c2);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let m = &mut self.m[offset..offset + params.len()];
        let v = &mut self.v[offset..offset + params.len()];
        for i in 0..params.len() {
            let g = grad[i];
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            params[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
        }
    }

    /// A whole step over one flat vector.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        self.begin_step();
        self.update(0, params, grad, lr);
    }
}
