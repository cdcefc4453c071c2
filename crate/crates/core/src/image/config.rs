use crate::tensor::{conv_output_extent, pool_output_extent, Activation};

use super::ImageError;

/// Dimension of every drug embedding.
pub const EMBEDDING_DIM: usize = 100;

/// Layer recipe for one Siamese sub-network.
///
/// Each conv block is `conv(kernel, valid, stride 1) → activation →
/// maxpool(pool, stride pool) → batchnorm`; the flattened map then passes
/// through the fully connected stack, whose last layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct TowerConfig {
    pub input_size: (usize, usize),
    pub conv_filters: Vec<usize>,
    pub kernel: usize,
    pub pool: usize,
    pub fc_sizes: Vec<usize>,
    pub activation: Activation,
}

impl Default for TowerConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl TowerConfig {
    /// 500×500 grayscale input, four 9×9 conv layers (64/128/128/256 filters)
    /// with 3×3 pooling, then FC 256 → 128 → 100.
    pub fn paper() -> Self {
        Self {
            input_size: (500, 500),
            conv_filters: vec![64, 128, 128, 256],
            kernel: 9,
            pool: 3,
            fc_sizes: vec![256, 128, EMBEDDING_DIM],
            activation: Activation::Relu,
        }
    }

    /// 64×64 input with 3×3 kernels, 2×2 pooling and filters 8/16/16/32.
    pub fn desk() -> Self {
        Self {
            input_size: (64, 64),
            conv_filters: vec![8, 16, 16, 32],
            kernel: 3,
            pool: 2,
            fc_sizes: vec![256, 128, EMBEDDING_DIM],
            activation: Activation::Relu,
        }
    }

    /// Traces spatial extents through the conv stack; fails on the first
    /// layer whose window no longer fits.
    pub fn trace(&self) -> Result<ShapeTrace, ImageError> {
        if self.fc_sizes.last() != Some(&EMBEDDING_DIM) {
            return Err(ImageError::Config {
                layer: "fc".into(),
                detail: format!("last fully connected size must be {EMBEDDING_DIM}, got {:?}", self.fc_sizes),
            });
        }
        if self.conv_filters.is_empty() || self.kernel == 0 || self.pool == 0 {
            return Err(ImageError::Config {
                layer: "conv".into(),
                detail: "need at least one conv layer and nonzero kernel/pool".into(),
            });
        }
        let (mut h, mut w) = self.input_size;
        let mut channels = 1;
        let mut blocks = Vec::with_capacity(self.conv_filters.len());
        for (i, &f) in self.conv_filters.iter().enumerate() {
            let layer = i + 1;
            let (Some(ch), Some(cw)) =
                (conv_output_extent(h, self.kernel, 1, 0), conv_output_extent(w, self.kernel, 1, 0))
            else {
                return Err(ImageError::Config {
                    layer: format!("conv{layer}"),
                    detail: format!("kernel {0}×{0} does not fit a {h}×{w} map", self.kernel),
                });
            };
            let (Some(ph), Some(pw)) =
                (pool_output_extent(ch, self.pool, self.pool), pool_output_extent(cw, self.pool, self.pool))
            else {
                return Err(ImageError::Config {
                    layer: format!("pool{layer}"),
                    detail: format!("pool {0}×{0} does not fit a {ch}×{cw} map", self.pool),
                });
            };
            blocks.push(BlockShape { in_channels: channels, filters: f, conv: (ch, cw), pooled: (ph, pw) });
            h = ph;
            w = pw;
            channels = f;
        }
        Ok(ShapeTrace { blocks, flatten_dim: h * w * channels, embedding_dim: EMBEDDING_DIM })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockShape {
    pub in_channels: usize,
    pub filters: usize,
    pub conv: (usize, usize),
    pub pooled: (usize, usize),
}

/// Per-block spatial extents of a valid [`TowerConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeTrace {
    pub blocks: Vec<BlockShape>,
    pub flatten_dim: usize,
    pub embedding_dim: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_config_flattens_to_1024() {
        let trace = TowerConfig::paper().trace().unwrap();
        let pooled: Vec<_> = trace.blocks.iter().map(|b| b.pooled).collect();
        assert_eq!(pooled, vec![(164, 164), (52, 52), (14, 14), (2, 2)]);
        assert_eq!(trace.flatten_dim, 1024);
        assert_eq!(trace.embedding_dim, 100);
    }

    #[test]
    fn paper_kernels_on_small_input_fail_at_layer_three() {
        let cfg = TowerConfig { input_size: (64, 64), ..TowerConfig::paper() };
        match cfg.trace() {
            Err(ImageError::Config { layer, .. }) => assert_eq!(layer, "conv3"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn desk_preset_traces() {
        let trace = TowerConfig::desk().trace().unwrap();
        assert_eq!(trace.blocks.last().unwrap().pooled, (2, 2));
        assert_eq!(trace.flatten_dim, 2 * 2 * 32);
        assert_eq!(trace.embedding_dim, 100);
    }

    #[test]
    fn embedding_size_must_be_100() {
        let cfg = TowerConfig { fc_sizes: vec![64, 32], ..TowerConfig::desk() };
        assert!(matches!(cfg.trace(), Err(ImageError::Config { .. })));
    }
}
