use super::store::Parameters;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-5,
        }
    }
}

/// Adam with bias correction. Moment buffers mirror the parameters they
/// were created from.
#[derive(Debug, Clone)]
pub struct Adam<P> {
    pub config: AdamConfig,
    step: u64,
    m: P,
    v: P,
}

impl<P: Parameters> Adam<P> {
    pub fn new(params: &P, config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.config.learning_rate = lr;
    }

    pub fn first_moment(&self) -> &P {
        &self.m
    }

    pub fn second_moment(&self) -> &P {
        &self.v
    }

    pub fn step(&mut self, params: &mut P, grads: &P) {
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        let step_size = learning_rate / bc1;
        let bc2_sqrt = bc2.sqrt();

        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut().into_iter().zip(self.v.tensors_mut()));
        for ((p, g), (m, v)) in tensors {
            assert_eq!(p.len(), g.len(), "gradient shape does not match parameters");
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let denom = v[i].sqrt() / bc2_sqrt + eps;
                p[i] -= step_size * m[i] / denom;
            }
        }
    }
}
