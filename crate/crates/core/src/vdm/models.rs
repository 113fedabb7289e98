use serde::{Deserialize, Serialize};

/// The six vulnerability discovery models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VdmModel {
    /// Logistic: `B / (B C exp(-A B t) + 1)`, `A, B, C > 0`.
    #[serde(rename = "AML")]
    Aml,
    /// Thermodynamic: `(k / g) ln(g t)`, `k, g > 0`, clamped at zero.
    #[serde(rename = "AT")]
    At,
    /// Linear: `A t + B`, `A > 0`.
    #[serde(rename = "LN")]
    Ln,
    /// Logarithmic Poisson: `b0 ln(1 + b1 t)`, `b0, b1 > 0`.
    #[serde(rename = "LP")]
    Lp,
    /// Exponential: `N (1 - exp(-l t))`, `N, l > 0`.
    #[serde(rename = "RE")]
    Re,
    /// Quadratic: `A t^2 + B t`, `A > 0`.
    #[serde(rename = "RQ")]
    Rq,
}

/// All models, in report order.
pub fn model_registry() -> [VdmModel; 6] {
    [
        VdmModel::Aml,
        VdmModel::At,
        VdmModel::Ln,
        VdmModel::Lp,
        VdmModel::Re,
        VdmModel::Rq,
    ]
}

impl VdmModel {
    pub fn name(self) -> &'static str {
        match self {
            VdmModel::Aml => "AML",
            VdmModel::At => "AT",
            VdmModel::Ln => "LN",
            VdmModel::Lp => "LP",
            VdmModel::Re => "RE",
            VdmModel::Rq => "RQ",
        }
    }

    pub fn parse(name: &str) -> Option<VdmModel> {
        model_registry()
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(name))
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            VdmModel::Aml => &["A", "B", "C"],
            VdmModel::At => &["k", "gamma"],
            VdmModel::Ln => &["A", "B"],
            VdmModel::Lp => &["beta0", "beta1"],
            VdmModel::Re => &["N", "lambda"],
            VdmModel::Rq => &["A", "B"],
        }
    }

    pub fn param_count(self) -> usize {
        self.param_names().len()
    }

    /// Which parameters are constrained positive (searched on a log scale).
    pub fn positive(self) -> &'static [bool] {
        match self {
            VdmModel::Aml => &[true, true, true],
            VdmModel::Ln | VdmModel::Rq => &[true, false],
            _ => &[true, true],
        }
    }

    /// Cumulative discoveries at month `t`.
    pub fn eval(self, p: &[f64], t: f64) -> f64 {
        match self {
            VdmModel::Aml => {
                let (a, b, c) = (p[0], p[1], p[2]);
                b / (b * c * (-a * b * t).exp() + 1.0)
            }
            VdmModel::At => {
                if t <= 0.0 {
                    0.0
                } else {
                    ((p[0] / p[1]) * (p[1] * t).ln()).max(0.0)
                }
            }
            VdmModel::Ln => p[0] * t + p[1],
            VdmModel::Lp => p[0] * (p[1] * t).ln_1p(),
            VdmModel::Re => p[0] * -(-p[1] * t).exp_m1(),
            VdmModel::Rq => p[0] * t * t + p[1] * t,
        }
    }

    /// Deterministic starting points scaled to a series ending at `y_max` after `horizon` months.
    pub fn start_grid(self, y_max: f64, horizon: f64) -> Vec<Vec<f64>> {
        let y = y_max.max(1.0);
        let t = horizon.max(2.0);
        let mut out = Vec::new();
        match self {
            VdmModel::Aml => {
                for b in [1.0, 1.5, 3.0].map(|f| f * y) {
                    for rate in [0.05, 0.2, 0.5] {
                        for c0 in [5.0, 50.0] {
                            out.push(vec![rate / b, b, c0 / b]);
                        }
                    }
                }
            }
            VdmModel::At => {
                for g in [1.0, 2.0, 10.0] {
                    let k = y * g / (g * t).ln();
                    for f in [0.5, 1.0, 2.0] {
                        out.push(vec![k * f, g]);
                    }
                }
            }
            VdmModel::Ln => {
                for f in [0.5, 1.0, 2.0] {
                    for b in [-y / 4.0, 0.0, y / 4.0] {
                        out.push(vec![y / t * f, b]);
                    }
                }
            }
            VdmModel::Lp => {
                for b1 in [0.01, 0.1, 1.0, 10.0] {
                    let b0 = y / (b1 * t).ln_1p();
                    for f in [0.5, 1.0, 2.0] {
                        out.push(vec![b0 * f, b1]);
                    }
                }
            }
            VdmModel::Re => {
                for l in [0.01, 0.05, 0.2, 1.0] {
                    let n = y / -(-l * t).exp_m1();
                    for f in [0.7, 1.0, 1.5] {
                        out.push(vec![n * f, l]);
                    }
                }
            }
            VdmModel::Rq => {
                for fa in [0.1, 0.5, 1.0] {
                    for fb in [-0.5, 0.0, 0.5, 1.0] {
                        out.push(vec![y / (t * t) * fa, y / t * fb]);
                    }
                }
            }
        }
        out
    }

    pub(crate) fn to_search(self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .zip(self.positive())
            .map(|(&x, &pos)| if pos { x.ln() } else { x })
            .collect()
    }

    pub(crate) fn params_of(self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.positive())
            .map(|(&x, &pos)| if pos { x.exp() } else { x })
            .collect()
    }
}
