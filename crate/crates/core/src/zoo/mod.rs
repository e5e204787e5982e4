//! The six custom architectures, parameter accounting and model files.
//!
//! Every architecture is a stack of 3×3 blocks with a ReLU after each conv,
//! a 2× downsample after conv 2, 4 and 6, and a GAP + dense + softmax head.
//! Stage widths are 16, 32 and 64; the width of the final stage is solved
//! per architecture so the parameter count lands on its budget.

mod format;

use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::layers::{Layer, LayerKind, LayerSpec};
use crate::network::Network;
use crate::tensor::{Dims, Float, Rng};

pub use format::{load, read_model, save, write_model, MODEL_MAGIC, MODEL_VERSION};

/// Widths of the first three stages.
pub const STAGE_WIDTHS: [usize; 3] = [16, 32, 64];

/// Default reduction divisor for squeeze-and-excite blocks.
pub const DEFAULT_SE_REDUCTION: usize = 4;

/// Parameter counts of the pretrained reference models, for ratio reporting.
pub const REFERENCE_MODELS: [(&str, usize); 6] = [
    ("Inception", 23_000_000),
    ("Vision Transformer", 11_000_000),
    ("MobileNet", 3_500_000),
    ("Resnet-20", 850_000),
    ("Resnet-47", 1_300_000),
    ("ResNet65", 1_900_000),
];

/// Convolution type of a zoo architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConvType {
    Full3x3,
    DepthWise,
}

/// One of the six custom architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arch {
    Custom590x3,
    Custom590Dw,
    Custom340x3,
    Custom340Dw,
    Custom140x3,
    Custom140Dw,
}

impl Arch {
    pub const ALL: [Arch; 6] = [
        Arch::Custom590x3,
        Arch::Custom590Dw,
        Arch::Custom340x3,
        Arch::Custom340Dw,
        Arch::Custom140x3,
        Arch::Custom140Dw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Arch::Custom590x3 => "custom590_3x3",
            Arch::Custom590Dw => "custom590_dw",
            Arch::Custom340x3 => "custom340_3x3",
            Arch::Custom340Dw => "custom340_dw",
            Arch::Custom140x3 => "custom140_3x3",
            Arch::Custom140Dw => "custom140_dw",
        }
    }

    /// Target parameter count.
    pub fn budget(self) -> usize {
        match self {
            Arch::Custom590x3 | Arch::Custom590Dw => 590_000,
            Arch::Custom340x3 | Arch::Custom340Dw => 340_000,
            Arch::Custom140x3 | Arch::Custom140Dw => 140_000,
        }
    }

    pub fn conv_type(self) -> ConvType {
        match self {
            Arch::Custom590x3 | Arch::Custom340x3 | Arch::Custom140x3 => ConvType::Full3x3,
            _ => ConvType::DepthWise,
        }
    }

    /// Conv kinds in order.
    pub fn pattern(self) -> Vec<LayerKind> {
        use LayerKind::{Conv3 as C, ConvDW as D};
        let trailing_dw = match self {
            Arch::Custom590Dw => 6,
            Arch::Custom340Dw => 5,
            Arch::Custom140Dw => 3,
            Arch::Custom590x3 => return vec![C; 8],
            Arch::Custom340x3 | Arch::Custom140x3 => return vec![C; 7],
        };
        let mut p = vec![C, C, D, C, D, C];
        p.extend(std::iter::repeat_n(D, trailing_dw));
        p
    }

    /// Solved width of the final stage at the default 28×28, 10-class setting.
    pub fn final_width(self) -> usize {
        match self {
            Arch::Custom590x3 => 209,
            Arch::Custom590Dw => 315,
            Arch::Custom340x3 => 457,
            Arch::Custom340Dw => 254,
            Arch::Custom140x3 => 116,
            Arch::Custom140Dw => 186,
        }
    }

    /// The architecture with the same budget and the other conv type.
    pub fn counterpart(self) -> Arch {
        match self {
            Arch::Custom590x3 => Arch::Custom590Dw,
            Arch::Custom590Dw => Arch::Custom590x3,
            Arch::Custom340x3 => Arch::Custom340Dw,
            Arch::Custom340Dw => Arch::Custom340x3,
            Arch::Custom140x3 => Arch::Custom140Dw,
            Arch::Custom140Dw => Arch::Custom140x3,
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Arch::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::UnknownArch(s.to_string()))
    }
}

/// Options applied on top of an architecture recipe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildOptions {
    /// Use BlurPool2 instead of MaxPool2 at every downsample.
    pub blurpool: bool,
    /// Insert a squeeze-and-excite block after each ConvDW (Conv3 in 3×3 variants).
    pub squeeze_excite: bool,
    pub se_reduction: usize,
    /// Overrides every stage width, for tiny test networks.
    pub width: Option<usize>,
    /// Input height and width.
    pub input_size: usize,
    pub num_classes: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            blurpool: false,
            squeeze_excite: false,
            se_reduction: DEFAULT_SE_REDUCTION,
            width: None,
            input_size: 28,
            num_classes: 10,
        }
    }
}

impl BuildOptions {
    pub fn with_blurpool(mut self, on: bool) -> Self {
        self.blurpool = on;
        self
    }

    pub fn with_squeeze_excite(mut self, on: bool) -> Self {
        self.squeeze_excite = on;
        self
    }

    pub fn with_width(mut self, width: usize) -> Self {
        self.width = Some(width);
        self
    }

    pub fn with_input_size(mut self, size: usize) -> Self {
        self.input_size = size;
        self
    }

    pub fn with_classes(mut self, classes: usize) -> Self {
        self.num_classes = classes;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::InvalidSpec(format!("need at least 2 classes, got {}", self.num_classes)));
        }
        if self.input_size < 2 {
            return Err(Error::InvalidSpec(format!("input size must be >= 2, got {}", self.input_size)));
        }
        if self.se_reduction == 0 || self.width == Some(0) {
            return Err(Error::InvalidSpec("SE reduction and width must be >= 1".into()));
        }
        Ok(())
    }
}

/// Declarative description of a whole network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchSpec {
    /// Architecture name plus non-default option tags, e.g. `custom590_dw+bp+se4`.
    pub name: String,
    pub layers: Vec<LayerSpec>,
    /// Per-sample input (c, h, w).
    pub input: (usize, usize, usize),
    pub num_classes: usize,
}

impl ArchSpec {
    pub fn new(arch: Arch, options: &BuildOptions) -> Result<Self> {
        options.validate()?;
        let pattern = arch.pattern();
        let widths = match options.width {
            Some(w) => [w; 4],
            None => [STAGE_WIDTHS[0], STAGE_WIDTHS[1], STAGE_WIDTHS[2], arch.final_width()],
        };
        let mut layers = Vec::new();
        let mut cin = 1;
        for (i, &kind) in pattern.iter().enumerate() {
            let cout = widths[(i / 2).min(3)];
            layers.push(match kind {
                LayerKind::ConvDW => LayerSpec::conv_dw(cin, cout),
                _ => LayerSpec::conv3(cin, cout),
            });
            layers.push(LayerSpec::relu(cout));
            let se_here = match arch.conv_type() {
                ConvType::DepthWise => kind == LayerKind::ConvDW,
                ConvType::Full3x3 => true,
            };
            if options.squeeze_excite && se_here {
                layers.push(LayerSpec::squeeze_excite(cout, options.se_reduction));
            }
            if matches!(i, 1 | 3 | 5) {
                layers.push(if options.blurpool { LayerSpec::blur_pool2(cout) } else { LayerSpec::max_pool2(cout) });
            }
            cin = cout;
        }
        layers.push(LayerSpec::gap(cin));
        layers.push(LayerSpec::dense(cin, options.num_classes));
        layers.push(LayerSpec::softmax(options.num_classes));

        let spec = ArchSpec {
            name: tagged_name(arch, options),
            layers,
            input: (1, options.input_size, options.input_size),
            num_classes: options.num_classes,
        };
        spec.check()?;
        Ok(spec)
    }

    /// Parses a name produced by [`ArchSpec::new`] back into its recipe.
    pub fn from_name(name: &str) -> Result<Self> {
        let mut parts = name.split('+');
        let arch: Arch = parts.next().unwrap_or_default().parse()?;
        let mut options = BuildOptions::default();
        for tag in parts {
            let bad = || Error::UnknownArch(name.to_string());
            let number = |prefix: &str| tag.strip_prefix(prefix).and_then(|v| v.parse::<usize>().ok());
            if tag == "bp" {
                options.blurpool = true;
            } else if let Some(r) = number("se") {
                options.squeeze_excite = true;
                options.se_reduction = r;
            } else if let Some(w) = number("w") {
                options.width = Some(w);
            } else if let Some(k) = number("k") {
                options.num_classes = k;
            } else if let Some(s) = number("in") {
                options.input_size = s;
            } else {
                return Err(bad());
            }
        }
        let spec = ArchSpec::new(arch, &options)?;
        if spec.name != name {
            return Err(Error::UnknownArch(name.to_string()));
        }
        Ok(spec)
    }

    fn check(&self) -> Result<()> {
        let n = self.layers.len();
        let tail: Vec<LayerKind> = self.layers[n.saturating_sub(3)..].iter().map(|l| l.kind).collect();
        if tail != [LayerKind::GAP, LayerKind::Dense, LayerKind::Softmax] {
            return Err(Error::InvalidSpec(format!("`{}` must end with GAP, Dense, Softmax", self.name)));
        }
        let mut dims = self.input_dims();
        for (i, layer) in self.layers.iter().enumerate() {
            layer.validate()?;
            dims = layer
                .output_dims(dims)
                .map_err(|e| Error::InvalidSpec(format!("`{}` layer {i}: {e}", self.name)))?;
        }
        Ok(())
    }

    pub fn input_dims(&self) -> Dims {
        Dims::of(1, self.input.0, self.input.1, self.input.2)
    }

    pub fn conv_count(&self) -> usize {
        self.layers.iter().filter(|l| l.kind.is_conv()).count()
    }

    /// Closed-form trainable parameter count.
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    /// Instantiates the network with He-normal weights drawn from `rng`.
    pub fn build<T: Float>(&self, rng: &mut Rng) -> Result<Network<T>> {
        let layers = self
            .layers
            .iter()
            .map(|&spec| Layer::new(spec, rng))
            .collect::<Result<Vec<_>>>()?;
        let net = Network::new(self.name.clone(), self.input_dims(), layers)?;
        debug_assert_eq!(net.params().map(|p| p.len()).sum::<usize>(), self.param_count());
        Ok(net)
    }
}

fn tagged_name(arch: Arch, options: &BuildOptions) -> String {
    let mut name = arch.name().to_string();
    let d = BuildOptions::default();
    if options.blurpool {
        name.push_str("+bp");
    }
    if options.squeeze_excite {
        let _ = write!(name, "+se{}", options.se_reduction);
    }
    if let Some(w) = options.width {
        let _ = write!(name, "+w{w}");
    }
    if options.num_classes != d.num_classes {
        let _ = write!(name, "+k{}", options.num_classes);
    }
    if options.input_size != d.input_size {
        let _ = write!(name, "+in{}", options.input_size);
    }
    name
}

/// Builds a named architecture (`custom590_dw`, ...) with fresh weights.
pub fn build<T: Float>(name: &str, options: &BuildOptions, rng: &mut Rng) -> Result<Network<T>> {
    ArchSpec::new(name.parse()?, options)?.build(rng)
}

/// Smallest final-stage width whose closed-form count is closest to the
/// arch's budget, at the default input size and class count.
pub fn solve_final_width(arch: Arch) -> usize {
    let count = |w: usize| {
        let mut layers_cin = 1;
        let mut total = 0usize;
        for (i, kind) in arch.pattern().into_iter().enumerate() {
            let cout = if i < 6 { STAGE_WIDTHS[i / 2] } else { w };
            total += match kind {
                LayerKind::ConvDW => LayerSpec::conv_dw(layers_cin, cout).param_count(),
                _ => LayerSpec::conv3(layers_cin, cout).param_count(),
            };
            layers_cin = cout;
        }
        total + LayerSpec::dense(w, 10).param_count()
    };
    let budget = arch.budget() as i64;
    (1..4096).min_by_key(|&w| (count(w) as i64 - budget).abs()).expect("non-empty range")
}

/// Per-layer and total trainable parameter counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamCount {
    pub total: usize,
    pub per_layer: Vec<usize>,
}

/// Counts parameters by enumerating every weight and bias tensor.
pub fn count_params<T: Float>(net: &Network<T>) -> ParamCount {
    let per_layer: Vec<usize> = net.layers().iter().map(|l| l.params().iter().map(|p| p.len()).sum()).collect();
    ParamCount { total: per_layer.iter().sum(), per_layer }
}

/// Markdown summary: one row per layer with kind, channels, output size and
/// parameter count, then a total row.
pub fn describe<T: Float>(net: &Network<T>) -> String {
    let counts = count_params(net);
    let mut out = String::new();
    let _ = writeln!(out, "Model: {}\n", net.name());
    out.push_str("| # | layer | in | out | output | params |\n");
    out.push_str("|---|---|---|---|---|---|\n");
    for (i, ((layer, dims), params)) in
        net.layers().iter().zip(net.layer_output_dims()).zip(&counts.per_layer).enumerate()
    {
        let spec = layer.spec();
        let kind = if spec.stride == 2 { format!("{}/2", spec.kind) } else { spec.kind.to_string() };
        let _ = writeln!(
            out,
            "| {} | {kind} | {} | {} | {}x{}x{} | {params} |",
            i + 1,
            spec.in_channels,
            spec.out_channels,
            dims.c,
            dims.h,
            dims.w
        );
    }
    let convs = net.layers().iter().filter(|l| l.kind().is_conv()).count();
    let _ = writeln!(out, "| | total ({convs} conv) | | | | {} |", counts.total);
    out
}
