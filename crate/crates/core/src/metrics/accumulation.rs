use serde::Serialize;

use super::eps::cumsum;

/// `AccErr_≤(l) = R_≤l / ε_≤l`. `None` marks lengths where `ε_≤l = 0`.
///
/// Linear growth in `l` means no accumulation; super-linear growth means
/// errors compound on the model's own contexts.
pub fn acc_err(r_le_l: &[f64], eps_t: &[f64]) -> Vec<Option<f64>> {
    let cum = cumsum(eps_t);
    r_le_l
        .iter()
        .zip(&cum)
        .enumerate()
        .map(|(i, (&r, &c))| (c > 0.0).then(|| r / (c / (i + 1) as f64)))
        .collect()
}

/// `%ExAccErr_≤(l) = (R_≤l − l·ε_≤l) / (l·ε_≤l) × 100`. `None` where `ε_≤l = 0`.
pub fn excess_acc_err(r_le_l: &[f64], eps_t: &[f64]) -> Vec<Option<f64>> {
    let cum = cumsum(eps_t);
    r_le_l
        .iter()
        .zip(&cum)
        .map(|(&r, &c)| (c > 0.0).then(|| (r - c) / c * 100.0))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundPosition {
    BelowLower,
    AtLower,
    Inside,
    AtUpper,
    AboveUpper,
}

/// Where the regret at length `T` sits relative to `Tε ≤ R ≤ T²ε`.
///
/// The upper bound assumes a loss in `[0, 1]`, which an unbounded KL does
/// not satisfy, so falling outside is reported rather than treated as an error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundDiagnostic {
    pub horizon: usize,
    pub lower: f64,
    pub upper: f64,
    pub regret: f64,
    pub position: BoundPosition,
}

const BOUND_TOL: f64 = 1e-9;

pub fn bound_diagnostic(eps_t: &[f64], r_le_l: &[f64], horizon: usize) -> BoundDiagnostic {
    let horizon = horizon.min(eps_t.len()).min(r_le_l.len());
    let (lower, regret) = if horizon == 0 {
        (0.0, 0.0)
    } else {
        (eps_t[..horizon].iter().sum::<f64>(), r_le_l[horizon - 1])
    };
    let upper = horizon as f64 * lower;
    let near = |a: f64, b: f64| (a - b).abs() <= BOUND_TOL * a.abs().max(b.abs()).max(1.0);
    let position = if near(regret, lower) {
        BoundPosition::AtLower
    } else if near(regret, upper) {
        BoundPosition::AtUpper
    } else if regret < lower {
        BoundPosition::BelowLower
    } else if regret > upper {
        BoundPosition::AboveUpper
    } else {
        BoundPosition::Inside
    };
    BoundDiagnostic {
        horizon,
        lower,
        upper,
        regret,
        position,
    }
}
