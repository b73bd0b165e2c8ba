use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// A smooth map from chart coordinates to symmetric 4x4 matrices.
///
/// Implementations are written once over [`Scalar`]; derivatives of any order
/// come from evaluating on nested dual numbers.
pub trait MetricProvider: Sync {
    fn eval<S: Scalar>(&self, x: [S; 4]) -> [[S; 4]; 4];

    /// True when all Christoffel symbols vanish identically.
    fn is_flat(&self) -> bool {
        false
    }
}

/// Gaussian slowness bump `n(y) = 1 + amplitude * exp(-|y - center|^2 / width^2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub amplitude: f64,
    pub width: f64,
    pub center: [f64; 3],
}

impl Bump {
    pub fn index<S: Scalar>(&self, y: [S; 3]) -> S {
        let mut r2 = S::zero();
        for (yi, ci) in y.iter().zip(self.center.iter()) {
            let d = *yi - S::from_f64(*ci);
            r2 += d * d;
        }
        S::one() + (-(r2.scale(1.0 / (self.width * self.width)))).exp().scale(self.amplitude)
    }
}

/// One smooth symmetric perturbation mode `P sin(k.x + phase)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub k: [f64; 4],
    pub phase: f64,
    pub p: [[f64; 4]; 4],
}

/// The bundled metric catalog.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Metric {
    Minkowski,
    /// `-dt^2 + e^{2t}(dx^2 + dy^2 + dz^2)`.
    DesitterLike,
    /// Static product `-dt^2 + n(y)^2 |dy|^2` with a mild bump.
    Product(Bump),
    /// Same form as [`Metric::Product`], tuned strong enough to focus light.
    Lens(Bump),
    Perturbed {
        base: Box<Metric>,
        amplitude: f64,
        seed: u64,
        modes: Vec<Mode>,
    },
}

impl Metric {
    pub fn product(amplitude: f64, width: f64) -> Metric {
        Metric::Product(Bump {
            amplitude,
            width,
            center: [0.0; 3],
        })
    }

    pub fn lens(amplitude: f64, width: f64) -> Metric {
        Metric::Lens(Bump {
            amplitude,
            width,
            center: [0.0; 3],
        })
    }

    pub fn perturbed(base: Metric, amplitude: f64, seed: u64) -> Metric {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let modes = (0..3)
            .map(|_| {
                let mut p = [[0.0; 4]; 4];
                for i in 0..4 {
                    for j in i..4 {
                        let v = rng.gen_range(-1.0..1.0);
                        p[i][j] = v;
                        p[j][i] = v;
                    }
                }
                Mode {
                    k: [
                        rng.gen_range(-1.5..1.5),
                        rng.gen_range(-1.5..1.5),
                        rng.gen_range(-1.5..1.5),
                        rng.gen_range(-1.5..1.5),
                    ],
                    phase: rng.gen_range(0.0..std::f64::consts::TAU),
                    p,
                }
            })
            .collect();
        Metric::Perturbed {
            base: Box::new(base),
            amplitude,
            seed,
            modes,
        }
    }

    /// Every analytic metric shipped with the crate, at default parameters.
    pub fn bundled() -> Vec<Metric> {
        vec![
            Metric::Minkowski,
            Metric::DesitterLike,
            Metric::product(0.1, 0.8),
            Metric::lens(0.6, 0.5),
            Metric::perturbed(Metric::Minkowski, 0.05, 7),
            Metric::perturbed(Metric::DesitterLike, 0.02, 11),
        ]
    }

    pub fn name(&self) -> String {
        self.to_string()
    }
}

impl MetricProvider for Metric {
    fn eval<S: Scalar>(&self, x: [S; 4]) -> [[S; 4]; 4] {
        let z = S::zero();
        match self {
            Metric::Minkowski => {
                let mut g = [[z; 4]; 4];
                g[0][0] = -S::one();
                for (i, row) in g.iter_mut().enumerate().skip(1) {
                    row[i] = S::one();
                }
                g
            }
            Metric::DesitterLike => {
                let a = (x[0].scale(2.0)).exp();
                let mut g = [[z; 4]; 4];
                g[0][0] = -S::one();
                for (i, row) in g.iter_mut().enumerate().skip(1) {
                    row[i] = a;
                }
                g
            }
            Metric::Product(b) | Metric::Lens(b) => {
                let n = b.index([x[1], x[2], x[3]]);
                let n2 = n * n;
                let mut g = [[z; 4]; 4];
                g[0][0] = -S::one();
                for (i, row) in g.iter_mut().enumerate().skip(1) {
                    row[i] = n2;
                }
                g
            }
            Metric::Perturbed {
                base,
                amplitude,
                modes,
                ..
            } => {
                let mut g = base.eval(x);
                for m in modes {
                    let mut arg = S::from_f64(m.phase);
                    for (xi, ki) in x.iter().zip(m.k.iter()) {
                        arg += xi.scale(*ki);
                    }
                    let s = arg.sin().scale(*amplitude);
                    for i in 0..4 {
                        for j in 0..4 {
                            g[i][j] += s.scale(m.p[i][j]);
                        }
                    }
                }
                g
            }
        }
    }

    fn is_flat(&self) -> bool {
        matches!(self, Metric::Minkowski)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Minkowski => write!(f, "minkowski"),
            Metric::DesitterLike => write!(f, "desitter_like"),
            Metric::Product(b) => write!(f, "product({}, {})", b.amplitude, b.width),
            Metric::Lens(b) => write!(f, "lens({}, {})", b.amplitude, b.width),
            Metric::Perturbed {
                base,
                amplitude,
                seed,
                ..
            } => write!(f, "perturbed({base}, {amplitude}, {seed})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CatalogError {
    #[error("unknown metric `{0}`")]
    Unknown(String),
    #[error("bad arguments for `{name}`: {reason}")]
    Arguments { name: String, reason: String },
}

fn split_args(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0;
    let mut cur = String::new();
    for c in s.chars() {
        match c {
            '(' => {
                depth += 1;
                cur.push(c);
            }
            ')' => {
                depth -= 1;
                cur.push(c);
            }
            ',' if depth == 0 => {
                out.push(cur.trim().to_string());
                cur.clear();
            }
            _ => cur.push(c),
        }
    }
    if !cur.trim().is_empty() {
        out.push(cur.trim().to_string());
    }
    out
}

impl FromStr for Metric {
    type Err = CatalogError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (name, args) = match s.find('(') {
            Some(i) if s.ends_with(')') => (s[..i].trim(), split_args(&s[i + 1..s.len() - 1])),
            Some(_) => return Err(CatalogError::Unknown(s.to_string())),
            None => (s, Vec::new()),
        };
        let bad = |reason: &str| CatalogError::Arguments {
            name: name.to_string(),
            reason: reason.to_string(),
        };
        let num = |a: &str| a.parse::<f64>().map_err(|_| bad(&format!("`{a}` is not a number")));
        match name {
            "minkowski" | "desitter_like" if !args.is_empty() => Err(bad("takes no arguments")),
            "minkowski" => Ok(Metric::Minkowski),
            "desitter_like" => Ok(Metric::DesitterLike),
            "product" | "lens" => {
                let (amp, width) = match args.len() {
                    0 if name == "product" => (0.1, 0.8),
                    0 => (0.6, 0.5),
                    2 => (num(&args[0])?, num(&args[1])?),
                    _ => return Err(bad("expected (amplitude, width)")),
                };
                if width <= 0.0 {
                    return Err(bad("width must be positive"));
                }
                Ok(if name == "product" {
                    Metric::product(amp, width)
                } else {
                    Metric::lens(amp, width)
                })
            }
            "perturbed" => {
                if args.len() != 3 {
                    return Err(bad("expected (base, amplitude, seed)"));
                }
                let base: Metric = args[0].parse()?;
                let amp = num(&args[1])?;
                let seed = args[2]
                    .parse::<u64>()
                    .map_err(|_| bad("seed must be an unsigned integer"))?;
                Ok(Metric::perturbed(base, amp, seed))
            }
            _ => Err(CatalogError::Unknown(s.to_string())),
        }
    }
}
