//! Parameter counting and training-FLOPs accounting for dense and
//! fine-grained MoE Transformer stacks.
//!
//! Embedding and unembedding matrices are excluded from every count. A block
//! holds `4 d_model²` attention parameters and `8 E d_model²` feed-forward
//! parameters; a token activates `12 d_model²` of them regardless of `E` and
//! `G`. The router costs `d_model E G` parameters per block.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_at_least_one, ensure_nonnegative, ensure_positive, Error, Result};

/// Width, depth, expansion rate and granularity of one architecture point.
///
/// `n_blocks` is real-valued so that the budget optimizer can treat depth as
/// a continuous variable; see [`ModelShape::concretized`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelShape {
    d_model: f64,
    n_blocks: f64,
    expansion: f64,
    granularity: f64,
}

impl ModelShape {
    pub fn new(d_model: f64, n_blocks: f64, expansion: f64, granularity: f64) -> Result<Self> {
        ensure_positive("d_model", d_model)?;
        ensure_positive("n_blocks", n_blocks)?;
        ensure_at_least_one("expansion", expansion)?;
        ensure_at_least_one("granularity", granularity)?;
        Ok(Self {
            d_model,
            n_blocks,
            expansion,
            granularity,
        })
    }

    /// A standard Transformer: `E = 1`, `G = 1`, no router.
    pub fn dense(d_model: f64, n_blocks: f64) -> Result<Self> {
        Self::new(d_model, n_blocks, 1.0, 1.0)
    }

    pub fn d_model(&self) -> f64 {
        self.d_model
    }

    pub fn n_blocks(&self) -> f64 {
        self.n_blocks
    }

    pub fn expansion(&self) -> f64 {
        self.expansion
    }

    pub fn granularity(&self) -> f64 {
        self.granularity
    }

    /// Number of granular experts per MoE layer, `G · E`.
    pub fn n_experts(&self) -> f64 {
        self.granularity * self.expansion
    }

    /// Dense shapes carry no routing term in parameter or FLOPs accounting.
    pub fn is_dense(&self) -> bool {
        self.expansion == 1.0 && self.granularity == 1.0
    }

    pub fn with_granularity(&self, granularity: f64) -> Result<Self> {
        Self::new(self.d_model, self.n_blocks, self.expansion, granularity)
    }

    /// Integer depth (nearest, at least one) and width tied to depth by
    /// `width_depth_ratio`, rounded to an even number of dims.
    pub fn concretized(&self, constants: &FlopsConstants) -> Self {
        let n_blocks = self.n_blocks.round().max(1.0);
        let d_model = ((constants.width_depth_ratio * n_blocks) / 2.0).round().max(1.0) * 2.0;
        Self {
            d_model,
            n_blocks,
            ..*self
        }
    }
}

/// Cost-model constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlopsConstants {
    /// FLOPs per active non-routing parameter per training token.
    pub c_f: f64,
    /// FLOPs per routing parameter per training token.
    pub c_r: f64,
    /// `d_model / n_blocks` when shapes are derived from a parameter count.
    pub width_depth_ratio: f64,
}

impl Default for FlopsConstants {
    fn default() -> Self {
        Self {
            c_f: 6.0,
            c_r: 14.0,
            width_depth_ratio: 64.0,
        }
    }
}

impl FlopsConstants {
    pub fn new(c_f: f64, c_r: f64, width_depth_ratio: f64) -> Result<Self> {
        let constants = Self {
            c_f,
            c_r,
            width_depth_ratio,
        };
        constants.validate()?;
        Ok(constants)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("c_f", self.c_f)?;
        ensure_positive("c_r", self.c_r)?;
        ensure_positive("width_depth_ratio", self.width_depth_ratio)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamCounts {
    /// Parameters touched per token, excluding routing and embeddings.
    pub active: f64,
    /// All non-embedding, non-routing parameters.
    pub total: f64,
    /// Router projection parameters (zero for dense shapes).
    pub routing: f64,
}

pub fn active_params(shape: &ModelShape) -> f64 {
    12.0 * shape.d_model * shape.d_model * shape.n_blocks
}

pub fn total_params(shape: &ModelShape) -> f64 {
    shape.d_model * shape.d_model * (8.0 * shape.expansion + 4.0) * shape.n_blocks
}

pub fn routing_params(shape: &ModelShape) -> f64 {
    if shape.is_dense() {
        0.0
    } else {
        shape.d_model * shape.expansion * shape.granularity * shape.n_blocks
    }
}

pub fn param_counts(shape: &ModelShape) -> ParamCounts {
    ParamCounts {
        active: active_params(shape),
        total: total_params(shape),
        routing: routing_params(shape),
    }
}

/// Inverts [`active_params`] under the coupling `d_model = r · n_blocks`.
pub fn shape_from_active(
    n_active: f64,
    expansion: f64,
    granularity: f64,
    constants: &FlopsConstants,
) -> Result<ModelShape> {
    ensure_positive("n_active", n_active)?;
    constants.validate()?;
    let r = constants.width_depth_ratio;
    let n_blocks = (n_active / (12.0 * r * r)).cbrt();
    ModelShape::new(r * n_blocks, n_blocks, expansion, granularity)
}

/// Same inversion for the total parameter count `d_model²(8E + 4) n_blocks`.
pub fn shape_from_total(
    n_total: f64,
    expansion: f64,
    granularity: f64,
    constants: &FlopsConstants,
) -> Result<ModelShape> {
    ensure_positive("n_total", n_total)?;
    ensure_at_least_one("expansion", expansion)?;
    constants.validate()?;
    let r = constants.width_depth_ratio;
    let n_blocks = (n_total / ((8.0 * expansion + 4.0) * r * r)).cbrt();
    ModelShape::new(r * n_blocks, n_blocks, expansion, granularity)
}

/// Training FLOPs per token: `(12 d² c_f + d E G c_r) · n_blocks`.
pub fn flops_per_token(shape: &ModelShape, constants: &FlopsConstants) -> f64 {
    let d = shape.d_model;
    let dense_part = 12.0 * d * d * constants.c_f;
    let routing_part = if shape.is_dense() {
        0.0
    } else {
        d * shape.expansion * shape.granularity * constants.c_r
    };
    (dense_part + routing_part) * shape.n_blocks
}

pub fn training_flops(shape: &ModelShape, tokens: f64, constants: &FlopsConstants) -> Result<f64> {
    ensure_nonnegative("tokens", tokens)?;
    Ok(flops_per_token(shape, constants) * tokens)
}

/// Token count `D` with `training_flops(shape, D) == flops`.
pub fn tokens_for_budget(shape: &ModelShape, flops: f64, constants: &FlopsConstants) -> Result<f64> {
    ensure_nonnegative("flops", flops)?;
    let per_token = flops_per_token(shape, constants);
    if !(per_token.is_finite() && per_token > 0.0) {
        return Err(Error::domain("shape has zero training cost per token"));
    }
    Ok(flops / per_token)
}

/// Fraction of per-token training FLOPs spent in the router.
pub fn routing_share(shape: &ModelShape, constants: &FlopsConstants) -> f64 {
    if shape.is_dense() {
        return 0.0;
    }
    let d = shape.d_model;
    let routing = d * shape.expansion * shape.granularity * constants.c_r;
    routing / (12.0 * d * d * constants.c_f + routing)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn active_params_table_shapes() {
        let s = ModelShape::new(512.0, 8.0, 64.0, 1.0).unwrap();
        assert_eq!(active_params(&s), 25_165_824.0);
        let s = ModelShape::new(256.0, 4.0, 64.0, 1.0).unwrap();
        assert_eq!(active_params(&s), 3_145_728.0);
    }

    #[test]
    fn total_params_examples() {
        let s = ModelShape::new(512.0, 8.0, 64.0, 1.0).unwrap();
        assert_eq!(total_params(&s), 1_082_130_432.0);
        let s = ModelShape::new(256.0, 4.0, 64.0, 1.0).unwrap();
        assert_eq!(total_params(&s), 135_266_304.0);
        let dense = ModelShape::dense(640.0, 10.0).unwrap();
        assert_eq!(total_params(&dense), active_params(&dense));
    }

    #[test]
    fn param_counts_routing() {
        let s = ModelShape::new(512.0, 8.0, 64.0, 4.0).unwrap();
        let counts = param_counts(&s);
        assert_eq!(counts.routing, 512.0 * 64.0 * 4.0 * 8.0);
        assert!(counts.total >= counts.active);
        assert_eq!(s.n_experts(), 256.0);
        assert_eq!(param_counts(&ModelShape::dense(512.0, 8.0).unwrap()).routing, 0.0);
    }

    #[test]
    fn invalid_shapes_rejected() {
        assert!(ModelShape::new(0.0, 8.0, 64.0, 1.0).is_err());
        assert!(ModelShape::new(512.0, -1.0, 64.0, 1.0).is_err());
        assert!(ModelShape::new(512.0, 8.0, 0.5, 1.0).is_err());
        assert!(ModelShape::new(512.0, 8.0, 64.0, 0.9).is_err());
        assert!(ModelShape::new(f64::NAN, 8.0, 64.0, 1.0).is_err());
        assert!(FlopsConstants::new(6.0, 0.0, 64.0).is_err());
    }

    #[test]
    fn shape_from_active_examples() {
        let c = FlopsConstants::default();
        let s = shape_from_active(1e8, 64.0, 1.0, &c).unwrap();
        assert!((s.n_blocks() - 12.675).abs() < 5e-3, "{}", s.n_blocks());
        assert!((s.d_model() - 811.2).abs() < 0.5, "{}", s.d_model());
        // cube root of 1e8 / (12 * 64^2)
        assert!((s.n_blocks() - 12.671_254_157_444_58).abs() < 1e-9);

        let s = shape_from_active(49_152.0, 64.0, 1.0, &c).unwrap();
        assert!((s.n_blocks() - 1.0).abs() < 1e-14);
        assert!((s.d_model() - 64.0).abs() < 1e-12);

        let s = shape_from_active(25_165_824.0, 64.0, 1.0, &c).unwrap();
        assert!(rel(active_params(&s), 25_165_824.0) < 1e-12);
        assert!(shape_from_active(0.0, 64.0, 1.0, &c).is_err());
    }

    #[test]
    fn shape_from_total_round_trip() {
        let c = FlopsConstants::default();
        let s = shape_from_total(1_082_130_432.0, 64.0, 1.0, &c).unwrap();
        assert!(rel(total_params(&s), 1_082_130_432.0) < 1e-12);
        // 512 = 64 * 8, so the table shape 64x25M is recovered exactly.
        assert!((s.n_blocks() - 8.0).abs() < 1e-12);
        assert!((s.d_model() - 512.0).abs() < 1e-10);
    }

    #[test]
    fn training_flops_examples() {
        let c = FlopsConstants::default();
        let s = ModelShape::new(256.0, 4.0, 64.0, 1.0).unwrap();
        let f = training_flops(&s, 16e9, &c).unwrap();
        assert!(rel(f, (4_718_592.0 + 229_376.0) * 16e9 * 4.0) < 1e-15);
        assert!(rel(f, 3.167e17) < 1e-3);
        assert_eq!(training_flops(&s, 0.0, &c).unwrap(), 0.0);
        assert!(training_flops(&s, -1.0, &c).is_err());
    }

    #[test]
    fn compute_optimal_row_flops() {
        // "64 x 100M", D = 4.37B, G = 8 -> 2.95e18 FLOPs
        let c = FlopsConstants::default();
        let s = shape_from_active(1e8, 64.0, 8.0, &c).unwrap();
        let f = training_flops(&s, 4.37e9, &c).unwrap();
        assert!(rel(f, 2.95e18) < 0.01, "{f:e}");
        let d = tokens_for_budget(&s, 2.95e18, &c).unwrap();
        assert!(rel(d, 4.37e9) < 0.01, "{d:e}");
        assert_eq!(tokens_for_budget(&s, 0.0, &c).unwrap(), 0.0);
    }

    #[test]
    fn routing_share_examples() {
        let c = FlopsConstants::default();
        assert_eq!(routing_share(&ModelShape::dense(256.0, 4.0).unwrap(), &c), 0.0);
        let s = ModelShape::new(256.0, 4.0, 64.0, 64.0).unwrap();
        let expected = (256.0 * 64.0 * 64.0 * 14.0) / (12.0 * 256.0 * 256.0 * 6.0 + 256.0 * 64.0 * 64.0 * 14.0);
        assert!((routing_share(&s, &c) - expected).abs() < 1e-15);
        assert!((routing_share(&s, &c) - 0.757).abs() < 1e-3);
        let mut prev = 0.0;
        for g in [1.0, 2.0, 4.0, 8.0, 16.0, 32.0] {
            let share = routing_share(&s.with_granularity(g).unwrap(), &c);
            assert!(share > prev);
            prev = share;
        }
    }

    #[test]
    fn dense_flops_are_six_nd() {
        let c = FlopsConstants::default();
        let s = ModelShape::dense(768.0, 12.0).unwrap();
        let d = 33e9;
        assert_eq!(training_flops(&s, d, &c).unwrap(), 6.0 * active_params(&s) * d);
    }

    #[test]
    fn concretize_rounds_depth() {
        let c = FlopsConstants::default();
        let s = ModelShape::new(64.0 * 12.67, 12.67, 64.0, 8.0).unwrap();
        let k = s.concretized(&c);
        assert_eq!(k.n_blocks(), 13.0);
        assert_eq!(k.d_model(), 832.0);
        assert_eq!(k.granularity(), 8.0);
        assert_eq!(k.concretized(&c), k);
        let tiny = ModelShape::new(20.0, 0.3, 1.0, 1.0).unwrap().concretized(&c);
        assert_eq!(tiny.n_blocks(), 1.0);
    }

    proptest! {
        #[test]
        fn active_params_ignore_granularity_and_expansion(
            d in 16.0f64..8192.0, n in 1.0f64..128.0, e in 1.0f64..128.0,
        ) {
            let base = active_params(&ModelShape::new(d, n, 1.0, 1.0).unwrap());
            for g in [1.0, 2.0, 4.0, 8.0, 16.0] {
                prop_assert_eq!(active_params(&ModelShape::new(d, n, e, g).unwrap()), base);
            }
        }

        #[test]
        fn flops_monotone_in_each_argument(
            d in 16.0f64..8192.0, n in 1.0f64..128.0, e in 2.0f64..128.0,
            g in 1.0f64..64.0, tokens in 1e6f64..1e13,
        ) {
            let c = FlopsConstants::default();
            let s = ModelShape::new(d, n, e, g).unwrap();
            let f = training_flops(&s, tokens, &c).unwrap();
            let bump = 1.01;
            prop_assert!(training_flops(&ModelShape::new(d * bump, n, e, g).unwrap(), tokens, &c).unwrap() > f);
            prop_assert!(training_flops(&ModelShape::new(d, n * bump, e, g).unwrap(), tokens, &c).unwrap() > f);
            prop_assert!(training_flops(&ModelShape::new(d, n, e, g * bump).unwrap(), tokens, &c).unwrap() > f);
            prop_assert!(training_flops(&s, tokens * bump, &c).unwrap() > f);
        }

        #[test]
        fn tokens_for_budget_inverts_flops(
            d in 16.0f64..8192.0, n in 0.5f64..512.0, e in 1.0f64..128.0,
            g in 1.0f64..1024.0, tokens in 1.0f64..1e14,
        ) {
            let c = FlopsConstants::default();
            let s = ModelShape::new(d, n, e, g).unwrap();
            let f = training_flops(&s, tokens, &c).unwrap();
            prop_assert!(rel(tokens_for_budget(&s, f, &c).unwrap(), tokens) <= 1e-12);
        }

        #[test]
        fn shape_from_active_round_trips(log_n in 4.0f64..13.0, e in 1.0f64..128.0) {
            let c = FlopsConstants::default();
            let n_act = 10f64.powf(log_n);
            let s = shape_from_active(n_act, e, 1.0, &c).unwrap();
            prop_assert!(rel(active_params(&s), n_act) <= 1e-12);
        }
    }
}
