//! RMSprop with momentum.

/// `s <- rho s + (1 - rho) g^2`; `m <- mu m + g / sqrt(s + eps)`; `theta <- theta - lr m`.
#[derive(Clone, Debug, PartialEq)]
pub struct RmsProp {
    pub lr: f64,
    pub rho: f64,
    pub momentum: f64,
    pub eps: f64,
    s: Vec<f64>,
    m: Vec<f64>,
}

impl RmsProp {
    pub const RHO: f64 = 0.9;
    pub const EPS: f64 = 1e-8;

    pub fn new(n: usize, lr: f64, momentum: f64) -> Self {
        Self { lr, rho: Self::RHO, momentum, eps: Self::EPS, s: vec![0.0; n], m: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn step(&mut self, theta: &mut [f64], g: &[f64]) {
        assert!(theta.len() == self.s.len() && g.len() == self.s.len(), "optimizer dimension");
        for i in 0..theta.len() {
            self.s[i] = self.rho * self.s[i] + (1.0 - self.rho) * g[i] * g[i];
            self.m[i] = self.momentum * self.m[i] + g[i] / (self.s[i] + self.eps).sqrt();
            theta[i] -= self.lr * self.m[i];
        }
    }

    pub fn reset(&mut self) {
        self.s.iter_mut().for_each(|x| *x = 0.0);
        self.m.iter_mut().for_each(|x| *x = 0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_by_hand() {
        let mut o = RmsProp::new(1, 0.03, 0.6);
        let mut x = [1.0];
        o.step(&mut x, &[2.0]);
        // s = 0.1 * 4 = 0.4, m = 2 / sqrt(0.4 + 1e-8)
        let m = 2.0 / (0.4f64 + 1e-8).sqrt();
        assert!((x[0] - (1.0 - 0.03 * m)).abs() < 1e-15);
        o.step(&mut x, &[2.0]);
        let s2 = 0.9 * 0.4 + 0.1 * 4.0;
        let m2 = 0.6 * m + 2.0 / (s2 + 1e-8f64).sqrt();
        assert!((x[0] - (1.0 - 0.03 * m - 0.03 * m2)).abs() < 1e-15);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut o = RmsProp::new(2, 0.03, 0.6);
        let mut x = [1.5, -0.7];
        for _ in 0..400 {
            let g = [2.0 * (x[0] - 0.3), 8.0 * (x[1] + 0.1)];
            o.step(&mut x, &g);
        }
        assert!((x[0] - 0.3).abs() < 0.02 && (x[1] + 0.1).abs() < 0.02, "{x:?}");
    }
}
