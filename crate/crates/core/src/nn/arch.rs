use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Padding {
    /// Zero-pad so the output keeps the input's spatial size.
    Same,
    /// No padding; each spatial dim shrinks by `kernel - 1`.
    Valid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    Conv2D {
        in_channels: usize,
        out_channels: usize,
        kernel: [usize; 2],
        padding: Padding,
    },
    Dense {
        inputs: usize,
        outputs: usize,
    },
    ReLU,
    Dropout {
        rate: f64,
    },
    Flatten,
    /// Marks the logits as class scores. Must be last; `forward` still
    /// returns raw logits and softmax is applied by the loss and by
    /// probability queries.
    Softmax,
}

impl LayerSpec {
    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Conv2D { .. } | LayerSpec::Dense { .. })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv2D { .. } => "conv2d",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::ReLU => "relu",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Softmax => "softmax",
        }
    }
}

/// Channel and unit counts of the default classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArchWidths {
    pub conv1: usize,
    pub conv2: usize,
    pub dense: usize,
    pub dropout: f64,
}

impl Default for ArchWidths {
    fn default() -> Self {
        Self {
            conv1: 16,
            conv2: 32,
            dense: 128,
            dropout: 0.5,
        }
    }
}

/// Per-sample input shape plus the ordered layer list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    /// `[channels, height, width]`.
    pub input: [usize; 3],
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    /// Two-convolution AMC classifier for `1 x 2 x frame_len` inputs:
    /// conv(1x3, same) -> relu -> dropout -> conv(2x3, valid) -> relu ->
    /// dropout -> flatten -> dense -> relu -> dense(classes).
    pub fn amc(frame_len: usize, classes: usize, w: &ArchWidths) -> Self {
        let flat = w.conv2 * (frame_len - 2);
        Self {
            input: [1, 2, frame_len],
            layers: vec![
                LayerSpec::Conv2D {
                    in_channels: 1,
                    out_channels: w.conv1,
                    kernel: [1, 3],
                    padding: Padding::Same,
                },
                LayerSpec::ReLU,
                LayerSpec::Dropout { rate: w.dropout },
                LayerSpec::Conv2D {
                    in_channels: w.conv1,
                    out_channels: w.conv2,
                    kernel: [2, 3],
                    padding: Padding::Valid,
                },
                LayerSpec::ReLU,
                LayerSpec::Dropout { rate: w.dropout },
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    inputs: flat,
                    outputs: w.dense,
                },
                LayerSpec::ReLU,
                LayerSpec::Dense {
                    inputs: w.dense,
                    outputs: classes,
                },
            ],
        }
    }

    /// Per-sample output shape of every layer, or the first incompatibility.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut cur = self.input.to_vec();
        if cur.contains(&0) {
            return Err(Error::Spec {
                layer: 0,
                reason: format!("input shape {cur:?} has a zero dimension"),
            });
        }
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let bad = |reason: String| Error::Spec { layer: i, reason };
            cur = match layer {
                LayerSpec::Conv2D {
                    in_channels,
                    out_channels,
                    kernel,
                    padding,
                } => {
                    if cur.len() != 3 {
                        return Err(bad(format!("conv2d needs [c, h, w] input, got {cur:?}")));
                    }
                    if cur[0] != *in_channels {
                        return Err(bad(format!(
                            "conv2d expects {in_channels} input channels, got {}",
                            cur[0]
                        )));
                    }
                    if *out_channels == 0 || kernel[0] == 0 || kernel[1] == 0 {
                        return Err(bad("conv2d with zero channels or kernel".into()));
                    }
                    match padding {
                        Padding::Same => vec![*out_channels, cur[1], cur[2]],
                        Padding::Valid => {
                            if kernel[0] > cur[1] || kernel[1] > cur[2] {
                                return Err(bad(format!(
                                    "kernel {kernel:?} larger than input {:?}",
                                    &cur[1..]
                                )));
                            }
                            vec![*out_channels, cur[1] - kernel[0] + 1, cur[2] - kernel[1] + 1]
                        }
                    }
                }
                LayerSpec::Dense { inputs, outputs } => {
                    if cur.len() != 1 {
                        return Err(bad(format!("dense needs flat input, got {cur:?}")));
                    }
                    if cur[0] != *inputs {
                        return Err(bad(format!("dense expects {inputs} inputs, got {}", cur[0])));
                    }
                    if *outputs == 0 {
                        return Err(bad("dense with zero outputs".into()));
                    }
                    vec![*outputs]
                }
                LayerSpec::ReLU => cur,
                LayerSpec::Dropout { rate } => {
                    if !(0.0..1.0).contains(rate) {
                        return Err(bad(format!("dropout rate {rate} outside [0, 1)")));
                    }
                    cur
                }
                LayerSpec::Flatten => vec![cur.iter().product()],
                LayerSpec::Softmax => {
                    if i + 1 != self.layers.len() || cur.len() != 1 {
                        return Err(bad("softmax must be the final layer on flat logits".into()));
                    }
                    cur
                }
            };
            out.push(cur.clone());
        }
        if cur.len() != 1 {
            return Err(Error::Spec {
                layer: self.layers.len().saturating_sub(1),
                reason: format!("network must end in flat logits, got {cur:?}"),
            });
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        self.shapes().map(|_| ())
    }

    pub fn classes(&self) -> usize {
        self.shapes().ok().and_then(|s| s.last().map(|v| v[0])).unwrap_or(0)
    }

    pub fn input_len(&self) -> usize {
        self.input.iter().product()
    }

    /// Weight and bias shapes for each parameterized layer, in order.
    pub fn param_shapes(&self) -> Vec<(Vec<usize>, Vec<usize>)> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Conv2D {
                    in_channels,
                    out_channels,
                    kernel,
                    ..
                } => Some((
                    vec![*out_channels, *in_channels, kernel[0], kernel[1]],
                    vec![*out_channels],
                )),
                LayerSpec::Dense { inputs, outputs } => Some((vec![*inputs, *outputs], vec![*outputs])),
                _ => None,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_amc_shapes() {
        let a = Architecture::amc(128, 8, &ArchWidths::default());
        let s = a.shapes().unwrap();
        assert_eq!(s[0], vec![16, 2, 128], "same padding keeps 2x128");
        assert_eq!(s[3], vec![32, 1, 126], "valid 2x3 kernel trims (1, 2)");
        assert_eq!(s[6], vec![32 * 126]);
        assert_eq!(a.classes(), 8);
    }

    #[test]
    fn first_conv_same_second_valid() {
        let a = Architecture::amc(128, 4, &ArchWidths::default());
        let pads: Vec<Padding> = a
            .layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Conv2D { padding, .. } => Some(*padding),
                _ => None,
            })
            .collect();
        assert_eq!(pads, vec![Padding::Same, Padding::Valid]);
    }

    #[test]
    fn incompatible_layer_is_reported_with_index() {
        let mut a = Architecture::amc(128, 8, &ArchWidths::default());
        a.layers[7] = LayerSpec::Dense {
            inputs: 10,
            outputs: 4,
        };
        match a.validate() {
            Err(Error::Spec { layer, .. }) => assert_eq!(layer, 7),
            other => panic!("expected spec error, got {other:?}"),
        }
    }

    #[test]
    fn dense_param_shape() {
        let a = Architecture {
            input: [1, 1, 10],
            layers: vec![
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    inputs: 10,
                    outputs: 11,
                },
            ],
        };
        assert_eq!(a.param_shapes(), vec![(vec![10, 11], vec![11])]);
    }

    #[test]
    fn softmax_must_be_last() {
        let a = Architecture {
            input: [1, 1, 4],
            layers: vec![
                LayerSpec::Flatten,
                LayerSpec::Softmax,
                LayerSpec::Dense {
                    inputs: 4,
                    outputs: 2,
                },
            ],
        };
        assert!(matches!(a.validate(), Err(Error::Spec { layer: 1, .. })));
    }
}
