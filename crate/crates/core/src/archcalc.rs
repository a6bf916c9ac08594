//! Analytic shape, receptive-field and parameter accounting for the
//! encoder / pyramid pooling / upsampling-decoder segmentation network.
//!
//! Receptive fields follow the usual recurrence
//! `RF = 1 + Σ (k_i - 1) · d_i · Π_{j<i} s_j`, per axis. A factorized pair
//! (`k x 1` then `1 x k`) grows each axis once, exactly like a `k x k` kernel.
//! A large-kernel block runs `1 x k → k x 1` and `k x 1 → 1 x k` in parallel
//! and takes the larger branch. Bilinear upsampling by `f` contributes a
//! two-sample footprint and divides the jump by `f`; the running jump is kept
//! as an exact fraction and the final receptive field is rounded up.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    /// `k x 1` followed by `1 x k`, both with the layer's dilation.
    FactorizedPair,
    /// Two parallel branches `(1 x k → k x 1)` and `(k x 1 → 1 x k)`, summed.
    GcnetBlock,
    Pool,
    /// Bilinear upsampling; `stride` holds the scale factor.
    UpsampleBilinear,
    Pointwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub dilation: usize,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl LayerSpec {
    pub fn conv(k: usize, stride: usize, dilation: usize, in_channels: usize, out_channels: usize) -> Self {
        Self { kind: LayerKind::Conv, kernel: (k, k), stride, dilation, in_channels, out_channels }
    }

    pub fn pointwise(in_channels: usize, out_channels: usize) -> Self {
        Self { kind: LayerKind::Pointwise, kernel: (1, 1), stride: 1, dilation: 1, in_channels, out_channels }
    }

    pub fn strided_pointwise(stride: usize, in_channels: usize, out_channels: usize) -> Self {
        Self { stride, ..Self::pointwise(in_channels, out_channels) }
    }

    pub fn factorized(k: usize, dilation: usize, in_channels: usize, out_channels: usize) -> Self {
        Self { kind: LayerKind::FactorizedPair, kernel: (k, k), stride: 1, dilation, in_channels, out_channels }
    }

    pub fn gcnet(k: usize, channels: usize) -> Self {
        Self {
            kind: LayerKind::GcnetBlock,
            kernel: (k, k),
            stride: 1,
            dilation: 1,
            in_channels: channels,
            out_channels: channels,
        }
    }

    pub fn pool(k: usize, stride: usize, channels: usize) -> Self {
        Self {
            kind: LayerKind::Pool,
            kernel: (k, k),
            stride,
            dilation: 1,
            in_channels: channels,
            out_channels: channels,
        }
    }

    pub fn upsample(factor: usize, channels: usize) -> Self {
        Self {
            kind: LayerKind::UpsampleBilinear,
            kernel: (1, 1),
            stride: factor,
            dilation: 1,
            in_channels: channels,
            out_channels: channels,
        }
    }

    fn validate(&self, index: usize) -> Result<()> {
        if self.kernel.0 == 0 || self.kernel.1 == 0 || self.stride == 0 || self.dilation == 0 {
            return Err(Error::InvalidConfig(format!("layer {index}: kernel, stride and dilation must be positive")));
        }
        let square_only = matches!(self.kind, LayerKind::FactorizedPair | LayerKind::GcnetBlock);
        if square_only && self.kernel.0 != self.kernel.1 {
            return Err(Error::InvalidConfig(format!("layer {index}: block kernels must be square")));
        }
        Ok(())
    }

    /// Growth along one axis in units of the current grid, before striding.
    fn axis_extent(&self, k: usize) -> u64 {
        let d = self.dilation as u64;
        match self.kind {
            LayerKind::UpsampleBilinear => u64::from(self.stride > 1),
            _ => (k as u64 - 1) * d,
        }
    }
}

/// Non-negative exact fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Ratio {
    num: u64,
    den: u64,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Ratio {
    const ONE: Ratio = Ratio { num: 1, den: 1 };

    fn new(num: u64, den: u64) -> Self {
        let g = gcd(num, den).max(1);
        Self { num: num / g, den: den / g }
    }

    fn add(self, o: Ratio) -> Self {
        Self::new(self.num * o.den + o.num * self.den, self.den * o.den)
    }

    fn scale(self, num: u64, den: u64) -> Self {
        Self::new(self.num * num, self.den * den)
    }

    fn ceil(self) -> u64 {
        self.num.div_ceil(self.den)
    }
}

/// Receptive field `(height, width)` of a sequential chain, in pixels of the
/// chain's input grid.
pub fn receptive_field(chain: &[LayerSpec]) -> Result<(usize, usize)> {
    if chain.is_empty() {
        return Err(Error::EmptyChain);
    }
    let mut rf = [Ratio::ONE; 2];
    let mut jump = Ratio::ONE;
    for (i, layer) in chain.iter().enumerate() {
        layer.validate(i)?;
        for (axis, k) in [layer.kernel.0, layer.kernel.1].into_iter().enumerate() {
            let grow = jump.scale(layer.axis_extent(k), 1);
            rf[axis] = rf[axis].add(grow);
        }
        jump = match layer.kind {
            LayerKind::UpsampleBilinear => jump.scale(1, layer.stride as u64),
            _ => jump.scale(layer.stride as u64, 1),
        };
    }
    Ok((rf[0].ceil() as usize, rf[1].ceil() as usize))
}

fn layer_params(layer: &LayerSpec, index: usize, with_bias: bool) -> Result<u64> {
    layer.validate(index)?;
    let (kh, kw) = (layer.kernel.0 as u64, layer.kernel.1 as u64);
    let cin = layer.in_channels as u64;
    let cout = layer.out_channels as u64;
    let bias = |n: u64| if with_bias { n } else { 0 };
    let same_channels = || {
        if cin == cout {
            Ok(())
        } else {
            Err(Error::ChannelMismatch { layer: index, expected: layer.in_channels, found: layer.out_channels })
        }
    };
    Ok(match layer.kind {
        LayerKind::Conv | LayerKind::Pointwise => kh * kw * cin * cout + bias(cout),
        LayerKind::FactorizedPair => kh * cin * cout + kh * cout * cout + bias(2 * cout),
        LayerKind::GcnetBlock => {
            same_channels()?;
            4 * kh * cin * cin
        }
        LayerKind::Pool | LayerKind::UpsampleBilinear => {
            same_channels()?;
            0
        }
    })
}

/// Trainable weights of a sequential chain. Factorized pairs use the output
/// width for their intermediate activation; large-kernel blocks carry no bias.
pub fn param_count(chain: &[LayerSpec], with_bias: bool) -> Result<u64> {
    let mut total = 0;
    for (i, layer) in chain.iter().enumerate() {
        if i > 0 && chain[i - 1].out_channels != layer.in_channels {
            return Err(Error::ChannelMismatch {
                layer: i,
                expected: chain[i - 1].out_channels,
                found: layer.in_channels,
            });
        }
        total += layer_params(layer, i, with_bias)?;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UdbVariant {
    /// 1x1 lateral projection, upsample, sum, 3x3 blend.
    Basic,
    /// Merge as in `Basic`, then one factorized pair per dilation rate.
    Erf { dilations: Vec<usize> },
    /// Large-kernel block on the lateral features before merging.
    GcnetLate { k: usize },
    /// Merge first, then the large-kernel block.
    GcnetEarly { k: usize },
}

pub const ERF_DILATIONS_SMALL: [usize; 3] = [1, 2, 3];
pub const ERF_DILATIONS_LARGE: [usize; 3] = [2, 4, 8];
pub const DEFAULT_GCNET_KERNEL: usize = 7;
pub const DEFAULT_DECODER_WIDTH: usize = 128;

impl UdbVariant {
    pub fn name(&self) -> String {
        match self {
            UdbVariant::Basic => "basic".into(),
            UdbVariant::Erf { dilations } => {
                let d: Vec<String> = dilations.iter().map(|d| format!("{d}")).collect();
                format!("erf({})", d.join(","))
            }
            UdbVariant::GcnetLate { k } => format!("gcnet-late(k={k})"),
            UdbVariant::GcnetEarly { k } => format!("gcnet-early(k={k})"),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            UdbVariant::Erf { dilations } if dilations.is_empty() || dilations.contains(&0) => {
                Err(Error::InvalidConfig("erf dilations must be a non-empty list of positive integers".into()))
            }
            UdbVariant::GcnetLate { k } | UdbVariant::GcnetEarly { k } if *k == 0 => {
                Err(Error::InvalidConfig("gcnet kernel size must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    /// Layers that run at the block's output resolution after the lateral
    /// projection, in execution order.
    pub fn blend_layers(&self, width: usize) -> Vec<LayerSpec> {
        match self {
            UdbVariant::Basic => vec![LayerSpec::conv(3, 1, 1, width, width)],
            UdbVariant::Erf { dilations } => {
                dilations.iter().map(|&d| LayerSpec::factorized(3, d, width, width)).collect()
            }
            UdbVariant::GcnetLate { k } | UdbVariant::GcnetEarly { k } => vec![LayerSpec::gcnet(*k, width)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stage {
    pub name: String,
    pub output: Shape,
    /// Receptive field of the stage's own layers on the grid they run on;
    /// `None` for global pooling and pure resampling stages.
    pub receptive_field: Option<(usize, usize)>,
    pub params: u64,
    /// Operations in execution order.
    pub trace: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchReport {
    pub variant: UdbVariant,
    pub input: (usize, usize),
    pub width: usize,
    pub num_classes: usize,
    pub stages: Vec<Stage>,
    /// Receptive field of the whole encoder main path, in input pixels.
    pub encoder_receptive_field: (usize, usize),
    pub total_params: u64,
}

impl ArchReport {
    pub fn output(&self) -> Shape {
        self.stages.last().expect("report has stages").output
    }

    pub fn stage(&self, name: &str) -> Option<&Stage> {
        self.stages.iter().find(|s| s.name == name)
    }
}

pub const ENCODER_WIDTHS: [usize; 5] = [64, 64, 128, 256, 512];
pub const ENCODER_STRIDE: usize = 32;
pub const SPP_BINS: [usize; 4] = [1, 2, 4, 8];
const INPUT_CHANNELS: usize = 3;

/// Main path and shortcut of one residual stage (two basic blocks).
fn residual_stage(cin: usize, cout: usize, stride: usize) -> (Vec<LayerSpec>, Vec<LayerSpec>) {
    let main = vec![
        LayerSpec::conv(3, stride, 1, cin, cout),
        LayerSpec::conv(3, 1, 1, cout, cout),
        LayerSpec::conv(3, 1, 1, cout, cout),
        LayerSpec::conv(3, 1, 1, cout, cout),
    ];
    let shortcut =
        if stride != 1 || cin != cout { vec![LayerSpec::strided_pointwise(stride, cin, cout)] } else { Vec::new() };
    (main, shortcut)
}

fn ops(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| String::from(*s)).collect()
}

/// Shapes, receptive fields and parameter counts for every stage of the
/// network with the given decoder block. Convolutions carry no bias.
pub fn report_variant(
    variant: &UdbVariant,
    input: (usize, usize),
    width: usize,
    num_classes: usize,
) -> Result<ArchReport> {
    variant.validate()?;
    let (h, w) = input;
    if h == 0 || w == 0 || h % ENCODER_STRIDE != 0 || w % ENCODER_STRIDE != 0 {
        return Err(Error::IndivisibleInput { height: h, width: w, divisor: ENCODER_STRIDE });
    }
    if width == 0 || !width.is_multiple_of(SPP_BINS.len()) {
        return Err(Error::InvalidConfig(format!(
            "decoder width must be a positive multiple of {}, got {width}",
            SPP_BINS.len()
        )));
    }
    if num_classes == 0 {
        return Err(Error::InvalidConfig("num_classes must be positive".into()));
    }

    let mut stages = Vec::new();
    let mut encoder_chain = Vec::new();

    let stem =
        vec![LayerSpec::conv(7, 2, 1, INPUT_CHANNELS, ENCODER_WIDTHS[0]), LayerSpec::pool(3, 2, ENCODER_WIDTHS[0])];
    stages.push(Stage {
        name: "encoder.stem".into(),
        output: Shape { height: h / 4, width: w / 4, channels: ENCODER_WIDTHS[0] },
        receptive_field: Some(receptive_field(&stem)?),
        params: param_count(&stem, false)?,
        trace: ops(&["conv 7x7 /2", "maxpool 3x3 /2"]),
    });
    encoder_chain.extend_from_slice(&stem);

    let mut scale = 4;
    for i in 1..ENCODER_WIDTHS.len() {
        let stride = if i == 1 { 1 } else { 2 };
        scale *= stride;
        let (main, shortcut) = residual_stage(ENCODER_WIDTHS[i - 1], ENCODER_WIDTHS[i], stride);
        let mut trace = ops(&["basic block (2x conv 3x3)", "basic block (2x conv 3x3)"]);
        if !shortcut.is_empty() {
            trace.insert(0, format!("shortcut conv 1x1 /{stride}"));
        }
        stages.push(Stage {
            name: format!("encoder.layer{i}"),
            output: Shape { height: h / scale, width: w / scale, channels: ENCODER_WIDTHS[i] },
            receptive_field: Some(receptive_field(&main)?),
            params: param_count(&main, false)? + param_count(&shortcut, false)?,
            trace,
        });
        encoder_chain.extend_from_slice(&main);
    }
    let encoder_receptive_field = receptive_field(&encoder_chain)?;

    let deep = ENCODER_WIDTHS[ENCODER_WIDTHS.len() - 1];
    let (eh, ew) = (h / ENCODER_STRIDE, w / ENCODER_STRIDE);
    let branch = LayerSpec::pointwise(deep, width / SPP_BINS.len());
    let mut spp_trace: Vec<String> =
        SPP_BINS.iter().map(|b| format!("adaptive pool {b}x{b} → conv 1x1 → upsample")).collect();
    spp_trace.push("concat".into());
    stages.push(Stage {
        name: "spp".into(),
        output: Shape { height: eh, width: ew, channels: width },
        receptive_field: None,
        params: SPP_BINS.len() as u64 * param_count(&[branch], false)?,
        trace: spp_trace,
    });

    let laterals = [ENCODER_WIDTHS[3], ENCODER_WIDTHS[2], ENCODER_WIDTHS[1]];
    let (mut uh, mut uw) = (eh, ew);
    for (i, &skip) in laterals.iter().enumerate() {
        uh *= 2;
        uw *= 2;
        let lateral = LayerSpec::pointwise(skip, width);
        let blend = variant.blend_layers(width);
        let mut rf_chain = vec![lateral];
        rf_chain.extend_from_slice(&blend);
        let trace = match variant {
            UdbVariant::Basic => ops(&["conv 1x1 lateral", "upsample x2", "sum", "conv 3x3"]),
            UdbVariant::Erf { dilations } => {
                let mut t = ops(&["conv 1x1 lateral", "upsample x2", "sum"]);
                t.extend(dilations.iter().map(|d| format!("factorized 3x1+1x3 d={d}")));
                t
            }
            UdbVariant::GcnetLate { k } => {
                vec!["conv 1x1 lateral".into(), format!("gcnet block k={k}"), "upsample x2".into(), "sum".into()]
            }
            UdbVariant::GcnetEarly { k } => {
                vec!["conv 1x1 lateral".into(), "upsample x2".into(), "sum".into(), format!("gcnet block k={k}")]
            }
        };
        stages.push(Stage {
            name: format!("udb{}", i + 1),
            output: Shape { height: uh, width: uw, channels: width },
            receptive_field: Some(receptive_field(&rf_chain)?),
            params: param_count(&[lateral], false)? + param_count(&blend, false)?,
            trace,
        });
    }

    let logits = LayerSpec::pointwise(width, num_classes);
    stages.push(Stage {
        name: "classifier".into(),
        output: Shape { height: uh, width: uw, channels: num_classes },
        receptive_field: Some(receptive_field(&[logits])?),
        params: param_count(&[logits], false)?,
        trace: ops(&["conv 1x1"]),
    });
    let factor = h / uh;
    stages.push(Stage {
        name: "upsample".into(),
        output: Shape { height: uh * factor, width: uw * (w / uw), channels: num_classes },
        receptive_field: None,
        params: 0,
        trace: vec![format!("bilinear x{factor}")],
    });

    let total_params = stages.iter().map(|s| s.params).sum();
    Ok(ArchReport {
        variant: variant.clone(),
        input,
        width,
        num_classes,
        stages,
        encoder_receptive_field,
        total_params,
    })
}
