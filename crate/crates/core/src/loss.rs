//! Position-conditioned token loss.
//!
//! For a target token `t` at caption position `j` (1-based, counted after
//! BOS) with predicted distribution `c`, the per-position loss is
//!
//! ```text
//! -ln c[t] - w(j) * sum_{z != t} ln(1 - c[z])
//! ```
//!
//! where `w` is a monotonically increasing position weight. Early tokens get
//! a weak penalty on non-target mass, later tokens a stronger one. With
//! `w = 0` this is plain negative log-likelihood.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array3, ArrayView1, ArrayViewMut1};

use crate::batch::TokenBatch;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelVariant {
    /// `gamma * j / M`
    Linear,
    /// `1 - exp(-(j / beta)^2)`
    Gaussian,
    /// `2 / (1 + exp(-j / alpha)) - 1`
    Sigmoid,
    /// `w = 0` everywhere: the plain NLL baseline.
    None,
}

/// A weight kernel and its positive hyperparameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    variant: KernelVariant,
    param: f64,
}

impl KernelSpec {
    pub fn new(variant: KernelVariant, param: f64) -> Result<Self> {
        if variant != KernelVariant::None && !(param > 0.0 && param.is_finite()) {
            return Err(Error::invalid(format!(
                "kernel parameter must be a positive finite number, got {param}"
            )));
        }
        Ok(Self { variant, param })
    }

    pub fn linear(gamma: f64) -> Result<Self> {
        Self::new(KernelVariant::Linear, gamma)
    }

    pub fn gaussian(beta: f64) -> Result<Self> {
        Self::new(KernelVariant::Gaussian, beta)
    }

    pub fn sigmoid(alpha: f64) -> Result<Self> {
        Self::new(KernelVariant::Sigmoid, alpha)
    }

    pub fn none() -> Self {
        Self {
            variant: KernelVariant::None,
            param: 0.0,
        }
    }

    pub fn variant(&self) -> KernelVariant {
        self.variant
    }

    pub fn param(&self) -> f64 {
        self.param
    }

    /// See [`weight`].
    pub fn weight(&self, j: usize, m: usize) -> Result<f64> {
        weight(self, j, m)
    }
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            variant: KernelVariant::Sigmoid,
            param: DEFAULT_ALPHA,
        }
    }
}

pub const DEFAULT_ALPHA: f64 = 6.0;
pub const DEFAULT_BETA: f64 = 6.0;
pub const DEFAULT_GAMMA: f64 = 1.0;
pub const DEFAULT_PROB_CLAMP: f64 = 1e-7;

/// Tolerance for probabilities slightly outside [0, 1] or rows not summing
/// exactly to one.
const PROB_TOLERANCE: f64 = 1e-6;

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.variant {
            KernelVariant::Linear => "linear",
            KernelVariant::Gaussian => "gaussian",
            KernelVariant::Sigmoid => "sigmoid",
            KernelVariant::None => return f.write_str("none"),
        };
        write!(f, "{name}:{:?}", self.param)
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    /// Parses `<variant>:<param>` (e.g. `sigmoid:6.0`) or `none`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("none") {
            return Ok(Self::none());
        }
        let (name, param) = s.split_once(':').ok_or_else(|| {
            Error::invalid(format!("kernel {s:?} is not <variant>:<param> or none"))
        })?;
        let variant = match name.to_ascii_lowercase().as_str() {
            "linear" => KernelVariant::Linear,
            "gaussian" => KernelVariant::Gaussian,
            "sigmoid" => KernelVariant::Sigmoid,
            other => return Err(Error::invalid(format!("unknown kernel variant {other:?}"))),
        };
        let param: f64 = param
            .parse()
            .map_err(|_| Error::invalid(format!("kernel parameter {param:?} is not a number")))?;
        Self::new(variant, param)
    }
}

/// False-positive weight at 1-based position `j` of a caption with `m`
/// target positions. Gaussian and sigmoid kernels ignore `m`.
pub fn weight(kernel: &KernelSpec, j: usize, m: usize) -> Result<f64> {
    if j < 1 || m < 1 {
        return Err(Error::invalid(format!(
            "position {j} and length {m} must both be >= 1"
        )));
    }
    let jf = j as f64;
    Ok(match kernel.variant {
        KernelVariant::Linear => {
            if j > m {
                return Err(Error::invalid(format!(
                    "linear kernel needs j <= M, got j={j}, M={m}"
                )));
            }
            kernel.param * jf / m as f64
        }
        KernelVariant::Gaussian => -(-(jf / kernel.param).powi(2)).exp_m1(),
        KernelVariant::Sigmoid => 2.0 / (1.0 + (-jf / kernel.param).exp()) - 1.0,
        KernelVariant::None => 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reduction {
    Sum,
    #[default]
    Mean,
}

/// How per-position losses are combined. Rows are always averaged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub kernel: KernelSpec,
    pub prob_clamp: f64,
    pub position_reduction: Reduction,
}

impl LossConfig {
    pub fn new(kernel: KernelSpec) -> Self {
        Self {
            kernel,
            prob_clamp: DEFAULT_PROB_CLAMP,
            position_reduction: Reduction::Mean,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.prob_clamp > 0.0 && self.prob_clamp < 0.5) {
            return Err(Error::invalid(format!(
                "probability clamp must lie in (0, 0.5), got {}",
                self.prob_clamp
            )));
        }
        Ok(())
    }
}

impl Default for LossConfig {
    fn default() -> Self {
        Self::new(KernelSpec::default())
    }
}

/// Loss of one predicted distribution against one target.
pub fn token_loss(probs: ArrayView1<f64>, target: usize, w: f64, eps: f64) -> f64 {
    let mut fp = 0.0;
    for (z, &c) in probs.iter().enumerate() {
        if z != target {
            fp += (1.0 - c).max(eps).ln();
        }
    }
    -probs[target].max(eps).ln() - w * fp
}

/// Gradient of [`token_loss`] with respect to the pre-softmax scores that
/// produced `probs`, scaled by `scale` and written into `out`.
pub fn token_loss_grad(
    probs: ArrayView1<f64>,
    target: usize,
    w: f64,
    eps: f64,
    scale: f64,
    mut out: ArrayViewMut1<f64>,
) {
    // dL/dc, then the softmax Jacobian-vector product c * (d - <d, c>).
    let d = |z: usize, c: f64| {
        if z == target {
            -1.0 / c.max(eps)
        } else {
            w / (1.0 - c).max(eps)
        }
    };
    let dot: f64 = probs.iter().enumerate().map(|(z, &c)| d(z, c) * c).sum();
    for (z, (&c, g)) in probs.iter().zip(out.iter_mut()).enumerate() {
        *g = scale * c * (d(z, c) - dot);
    }
}

/// Position-loss weights and scale factors for one row.
struct RowPlan {
    positions: usize,
    scale: f64,
}

fn plan_row(len: usize, rows: usize, reduction: Reduction) -> RowPlan {
    let positions = len.saturating_sub(1);
    let per_pos = match reduction {
        Reduction::Mean if positions > 0 => 1.0 / positions as f64,
        _ => 1.0,
    };
    RowPlan {
        positions,
        scale: per_pos / rows as f64,
    }
}

fn check_inputs(probs: &Array3<f64>, batch: &TokenBatch, config: &LossConfig) -> Result<()> {
    config.validate()?;
    let (b, t, k) = probs.dim();
    if b != batch.rows() || t != batch.cols() {
        return Err(Error::invalid(format!(
            "probabilities have shape {b}x{t}x{k}, batch is {}x{}",
            batch.rows(),
            batch.cols()
        )));
    }
    for i in 0..b {
        let len = batch.lengths()[i];
        for col in 1..len {
            let target = batch.get(i, col) as usize;
            if target >= k {
                return Err(Error::invalid(format!(
                    "target id {target} at ({i}, {col}) exceeds vocabulary size {k}"
                )));
            }
            let row = probs.slice(ndarray::s![i, col, ..]);
            let mut sum = 0.0;
            for &c in row.iter() {
                if !(-PROB_TOLERANCE..=1.0 + PROB_TOLERANCE).contains(&c) {
                    return Err(Error::invalid(format!(
                        "probability {c} at ({i}, {col}) is outside [0, 1]"
                    )));
                }
                sum += c;
            }
            if (sum - 1.0).abs() > PROB_TOLERANCE {
                return Err(Error::invalid(format!(
                    "probabilities at ({i}, {col}) sum to {sum}, expected 1"
                )));
            }
        }
    }
    Ok(())
}

/// Batch loss. `probs[i, j, ..]` is the predicted distribution for the token
/// at `batch[i, j]`; column 0 (BOS) and PAD columns are ignored.
pub fn position_loss(probs: &Array3<f64>, batch: &TokenBatch, config: &LossConfig) -> Result<f64> {
    check_inputs(probs, batch, config)?;
    let rows = batch.rows();
    let mut total = 0.0;
    for i in 0..rows {
        let plan = plan_row(batch.lengths()[i], rows, config.position_reduction);
        let mut row_loss = 0.0;
        for j in 1..=plan.positions {
            let w = config.kernel.weight(j, plan.positions)?;
            let target = batch.get(i, j) as usize;
            row_loss += token_loss(
                probs.slice(ndarray::s![i, j, ..]),
                target,
                w,
                config.prob_clamp,
            );
        }
        total += plan.scale * row_loss;
    }
    Ok(total)
}

/// Gradient of [`position_loss`] with respect to the pre-softmax scores.
/// Ignored positions get zero rows.
pub fn position_loss_grad(
    probs: &Array3<f64>,
    batch: &TokenBatch,
    config: &LossConfig,
) -> Result<Array3<f64>> {
    check_inputs(probs, batch, config)?;
    let rows = batch.rows();
    let mut grad = Array3::<f64>::zeros(probs.raw_dim());
    for i in 0..rows {
        let plan = plan_row(batch.lengths()[i], rows, config.position_reduction);
        for j in 1..=plan.positions {
            let w = config.kernel.weight(j, plan.positions)?;
            token_loss_grad(
                probs.slice(ndarray::s![i, j, ..]),
                batch.get(i, j) as usize,
                w,
                config.prob_clamp,
                plan.scale,
                grad.slice_mut(ndarray::s![i, j, ..]),
            );
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::batch::pad_batch;
    use approx::assert_abs_diff_eq;
    use ndarray::{arr1, Array1};
    use proptest::prelude::*;

    #[test]
    fn closed_form_weights() {
        let s = KernelSpec::sigmoid(6.0).unwrap();
        assert_abs_diff_eq!(s.weight(6, 10).unwrap(), 0.462117157260, epsilon = 1e-9);
        let g = KernelSpec::gaussian(4.0).unwrap();
        assert_abs_diff_eq!(g.weight(4, 10).unwrap(), 0.632120558829, epsilon = 1e-9);
        let l = KernelSpec::linear(2.0).unwrap();
        assert_abs_diff_eq!(l.weight(5, 10).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn weight_errors() {
        let l = KernelSpec::linear(1.0).unwrap();
        assert!(l.weight(0, 5).is_err());
        assert!(l.weight(1, 0).is_err());
        assert!(l.weight(6, 5).is_err());
        // Gaussian and sigmoid do not care about M.
        assert!(KernelSpec::sigmoid(2.0).unwrap().weight(9, 5).is_ok());
        assert!(KernelSpec::sigmoid(0.0).is_err());
        assert!(KernelSpec::gaussian(-1.0).is_err());
    }

    #[test]
    fn asymptote_is_one() {
        for k in [
            KernelSpec::sigmoid(6.0).unwrap(),
            KernelSpec::gaussian(6.0).unwrap(),
        ] {
            let mut prev = 0.0;
            for j in [1, 10, 100, 1000, 10_000] {
                let w = k.weight(j, 1).unwrap();
                assert!(w >= prev && w <= 1.0);
                prev = w;
            }
            assert!(1.0 - prev < 1e-9);
        }
    }

    #[test]
    fn kernel_string_roundtrip() {
        let k: KernelSpec = "sigmoid:6.0".parse().unwrap();
        assert_eq!(k, KernelSpec::sigmoid(6.0).unwrap());
        assert_eq!(k.to_string(), "sigmoid:6.0");
        assert_eq!(
            "none".parse::<KernelSpec>().unwrap().variant(),
            KernelVariant::None
        );
        assert_eq!(
            "Gaussian:2.5".parse::<KernelSpec>().unwrap().to_string(),
            "gaussian:2.5"
        );
        for bad in ["sigmoid", "cosine:1", "linear:-2", "sigmoid:abc", ""] {
            assert!(bad.parse::<KernelSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn single_position_values() {
        let c = arr1(&[0.7, 0.2, 0.1]);
        assert_abs_diff_eq!(
            token_loss(c.view(), 0, 0.0, 1e-7),
            0.356674943939,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(
            token_loss(c.view(), 0, 0.5, 1e-7),
            0.520926977425,
            epsilon = 1e-9
        );
        let one_hot = arr1(&[0.0, 1.0, 0.0]);
        assert_eq!(token_loss(one_hot.view(), 1, 5.0, 1e-7), 0.0);
    }

    #[test]
    fn batch_loss_matches_token_loss() {
        // One row [BOS, 0] → a single target position, j = M = 1.
        let batch = pad_batch(&[vec![1u32, 0]]).unwrap();
        let mut probs = Array3::<f64>::zeros((1, 2, 3));
        probs
            .slice_mut(ndarray::s![0, 1, ..])
            .assign(&arr1(&[0.7, 0.2, 0.1]));
        let cfg = LossConfig::new(KernelSpec::linear(0.5).unwrap());
        assert_abs_diff_eq!(
            position_loss(&probs, &batch, &cfg).unwrap(),
            0.520926977425,
            epsilon = 1e-9
        );
    }

    #[test]
    fn shape_and_range_errors() {
        let batch = pad_batch(&[vec![1u32, 0, 2]]).unwrap();
        let cfg = LossConfig::default();
        let probs = Array3::<f64>::from_elem((1, 2, 3), 1.0 / 3.0);
        assert!(position_loss(&probs, &batch, &cfg).is_err());
        let mut probs = Array3::<f64>::from_elem((1, 3, 3), 1.0 / 3.0);
        probs[[0, 1, 0]] = 1.5;
        probs[[0, 1, 1]] = -0.5 + 1.0 / 3.0;
        assert!(position_loss(&probs, &batch, &cfg).is_err());
        assert!(position_loss_grad(&probs, &batch, &cfg).is_err());
        // Vocabulary smaller than a target id.
        let probs = Array3::<f64>::from_elem((1, 3, 2), 0.5);
        assert!(position_loss(&probs, &pad_batch(&[vec![1u32, 5, 2]]).unwrap(), &cfg).is_err());
    }

    #[test]
    fn zero_weight_gradient_is_cross_entropy_gradient() {
        let c = arr1(&[0.1, 0.6, 0.05, 0.25]);
        let mut g = Array1::zeros(4);
        token_loss_grad(c.view(), 1, 0.0, 1e-7, 1.0, g.view_mut());
        let expected = arr1(&[0.1, -0.4, 0.05, 0.25]);
        for (a, b) in g.iter().zip(expected.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn padded_positions_get_zero_gradient() {
        let batch = pad_batch(&[vec![1u32, 4, 2], vec![1, 2]]).unwrap();
        let probs = Array3::<f64>::from_elem((2, 3, 5), 0.2);
        let g = position_loss_grad(&probs, &batch, &LossConfig::default()).unwrap();
        assert!(g.slice(ndarray::s![1, 2, ..]).iter().all(|&x| x == 0.0));
        assert!(g.slice(ndarray::s![.., 0, ..]).iter().all(|&x| x == 0.0));
        assert!(g.slice(ndarray::s![0, 2, ..]).iter().any(|&x| x != 0.0));
    }

    proptest! {
        #[test]
        fn weights_monotone_and_bounded(variant in 0..3usize, param in 0.01f64..50.0, m in 2usize..=64) {
            let v = [KernelVariant::Linear, KernelVariant::Gaussian, KernelVariant::Sigmoid][variant];
            let k = KernelSpec::new(v, param).unwrap();
            for j in 1..m {
                let (a, b) = (k.weight(j, m).unwrap(), k.weight(j + 1, m).unwrap());
                prop_assert!(b >= a);
                match v {
                    KernelVariant::Linear => prop_assert!(a > 0.0 && b <= param * (1.0 + 1e-12)),
                    // Mathematically below 1; saturates to 1.0 in f64 for tiny params.
                    _ => prop_assert!((0.0..=1.0).contains(&a)),
                }
            }
        }
    }
}
