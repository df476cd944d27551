//! Materialization of sampled layer sequences: shortcut patterns, spatial
//! shape tracking with pooling replay, and parameter counting.
//!
//! Layer positions in shortcuts are 1-based and refer to layer *outputs*; the
//! raw network input (position 0) is never a shortcut start.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::library::{LayerKind, LayerLibrary};

/// Width of the fully connected layer between global pooling and the classifier.
pub const HIDDEN_UNITS: u64 = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl InputShape {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        InputShape {
            height,
            width,
            channels,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    #[default]
    None,
    Residual,
    SemiDense,
}

/// A fixed rule for adding skip connections, parameterized by span `d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShortcutPattern {
    pub kind: PatternKind,
    #[serde(default = "default_span")]
    pub d: usize,
}

fn default_span() -> usize {
    1
}

impl ShortcutPattern {
    pub const NONE: ShortcutPattern = ShortcutPattern {
        kind: PatternKind::None,
        d: 1,
    };

    pub fn residual(d: usize) -> Self {
        ShortcutPattern {
            kind: PatternKind::Residual,
            d,
        }
    }

    pub fn semi_dense(d: usize) -> Self {
        ShortcutPattern {
            kind: PatternKind::SemiDense,
            d,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind != PatternKind::None && self.d == 0 {
            return Err(Error::Config("shortcut span d must be at least 1".into()));
        }
        Ok(())
    }

    /// Shortcuts this pattern places on an `n`-layer network.
    pub fn generate(&self, n: usize) -> Vec<(usize, usize)> {
        match self.kind {
            PatternKind::None => Vec::new(),
            PatternKind::Residual => generate_residual(n, self.d),
            PatternKind::SemiDense => generate_semi_dense(n, self.d),
        }
    }
}

impl Default for ShortcutPattern {
    fn default() -> Self {
        Self::NONE
    }
}

/// What to do when a pooling layer would shrink a spatial dimension below 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfeasibilityPolicy {
    #[default]
    PoolAsIdentity,
    Reject,
}

/// Chained, non-overlapping residual shortcuts `(1, 1+d), (1+d, 1+2d), ...`.
pub fn generate_residual(n: usize, d: usize) -> Vec<(usize, usize)> {
    let mut shortcuts = Vec::new();
    if d == 0 {
        return shortcuts;
    }
    let mut start = 1;
    while start + d <= n {
        shortcuts.push((start, start + d));
        start += d;
    }
    shortcuts
}

/// Disjoint tiles of `d` layers, each connected to the output of the layer
/// right after the tile. Incomplete trailing tiles are dropped.
pub fn generate_semi_dense(n: usize, d: usize) -> Vec<(usize, usize)> {
    let mut shortcuts = Vec::new();
    if d == 0 {
        return shortcuts;
    }
    let mut tile_start = 1;
    while tile_start + d <= n {
        let end = tile_start + d;
        shortcuts.extend((tile_start..end).map(|s| (s, end)));
        tile_start = end + 1;
    }
    shortcuts
}

/// Number of non-identity layers in a sequence.
pub fn effective_depth(layers: &[usize], library: &LayerLibrary) -> usize {
    layers
        .iter()
        .filter(|&&j| library.get(j).is_some_and(|e| e.kind != LayerKind::Identity))
        .count()
}

/// A sampled layer sequence together with its skip connections.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CandidateArchitecture {
    pub layers: Vec<usize>,
    shortcuts: Vec<(usize, usize)>,
    pub channels: usize,
    pub input_shape: InputShape,
}

impl CandidateArchitecture {
    /// Validates shortcut endpoints (`1 <= start < end <= N`), then sorts and
    /// deduplicates them.
    pub fn new(
        layers: Vec<usize>,
        mut shortcuts: Vec<(usize, usize)>,
        channels: usize,
        input_shape: InputShape,
    ) -> Result<Self> {
        let n = layers.len();
        for &(start, end) in &shortcuts {
            if start < 1 || start >= end || end > n {
                return Err(Error::InvalidShortcut { start, end, layers: n });
            }
        }
        if channels == 0 {
            return Err(Error::Config("channel count must be at least 1".into()));
        }
        shortcuts.sort_unstable();
        shortcuts.dedup();
        Ok(CandidateArchitecture {
            layers,
            shortcuts,
            channels,
            input_shape,
        })
    }

    /// Attaches the shortcuts generated by `pattern`.
    pub fn with_pattern(
        layers: Vec<usize>,
        pattern: &ShortcutPattern,
        channels: usize,
        input_shape: InputShape,
    ) -> Result<Self> {
        let shortcuts = pattern.generate(layers.len());
        Self::new(layers, shortcuts, channels, input_shape)
    }

    pub fn shortcuts(&self) -> &[(usize, usize)] {
        &self.shortcuts
    }

    pub fn encode_layers(&self, library: &LayerLibrary) -> String {
        library.encode(&self.layers)
    }

    /// JSON array of `[start, end]` pairs.
    pub fn shortcuts_json(&self) -> String {
        let pairs: Vec<[usize; 2]> = self.shortcuts.iter().map(|&(s, e)| [s, e]).collect();
        serde_json::to_string(&pairs).expect("shortcut pairs serialize")
    }

    /// Two-line text form: hyphenated shorthand, then the shortcut JSON.
    pub fn to_text(&self, library: &LayerLibrary) -> String {
        format!("{}\n{}\n", self.encode_layers(library), self.shortcuts_json())
    }

    pub fn from_text(text: &str, library: &LayerLibrary, channels: usize, input_shape: InputShape) -> Result<Self> {
        let mut lines = text.lines();
        let layers = library.decode(lines.next().unwrap_or("").trim())?;
        let shortcuts = parse_shortcuts(lines.next().unwrap_or("[]").trim())?;
        Self::new(layers, shortcuts, channels, input_shape)
    }
}

pub fn parse_shortcuts(json: &str) -> Result<Vec<(usize, usize)>> {
    let pairs: Vec<[usize; 2]> = serde_json::from_str(json)?;
    Ok(pairs.into_iter().map(|[s, e]| (s, e)).collect())
}

/// Pooling operations a shortcut branch must replay to match the primary
/// path at its endpoint.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShortcutReplay {
    pub start: usize,
    pub end: usize,
    /// Library indices of the pooling layers at positions `start+1 ..= end`.
    pub pools: Vec<usize>,
}

/// Per-layer shapes of a materialized candidate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShapeTrace {
    /// Output `(height, width)` of each layer.
    pub shapes: Vec<(usize, usize)>,
    /// Output channel count of each layer.
    pub channels: Vec<usize>,
    /// Library indices of all pooling layers applied up to and including each layer.
    pub pools_applied: Vec<Vec<usize>>,
    pub replays: Vec<ShortcutReplay>,
    /// 1-based positions whose pooling layer was demoted to identity.
    pub substitutions: Vec<usize>,
    /// Layer sequence as it will be built, after demotions.
    pub materialized: Vec<usize>,
    /// Shortcuts whose start carries the raw input's channel count while the
    /// endpoint carries the network width; the branch is zero-padded.
    pub channel_mismatches: Vec<(usize, usize)>,
}

/// Applies pooling layers in sequence to a spatial shape.
pub fn replay_shape(shape: (usize, usize), pools: &[usize], library: &LayerLibrary) -> Option<(usize, usize)> {
    pools.iter().try_fold(shape, |(h, w), &j| {
        let layer = library.get(j)?;
        Some((layer.output_extent(h)?, layer.output_extent(w)?))
    })
}

pub fn trace_shapes(
    arch: &CandidateArchitecture,
    library: &LayerLibrary,
    policy: InfeasibilityPolicy,
) -> Result<ShapeTrace> {
    let input = arch.input_shape;
    if input.height == 0 || input.width == 0 {
        return Err(Error::InvalidDimensions(
            "input spatial dimensions must be at least 1".into(),
        ));
    }
    let n = arch.layers.len();
    let mut shapes = Vec::with_capacity(n);
    let mut channels = Vec::with_capacity(n);
    let mut pools_applied: Vec<Vec<usize>> = Vec::with_capacity(n);
    let mut substitutions = Vec::new();
    let mut materialized = Vec::with_capacity(n);
    let mut current = (input.height, input.width);
    let mut current_channels = input.channels;
    let mut applied: Vec<usize> = Vec::new();

    for (pos, &j) in arch.layers.iter().enumerate() {
        let layer = library.get(j).ok_or_else(|| Error::UnknownShorthand(format!("#{j}")))?;
        let mut effective = j;
        if layer.kind.is_pooling() {
            match (layer.output_extent(current.0), layer.output_extent(current.1)) {
                (Some(h), Some(w)) => {
                    current = (h, w);
                    applied.push(j);
                }
                _ => match (policy, library.identity_index()) {
                    (InfeasibilityPolicy::PoolAsIdentity, Some(id)) => {
                        effective = id;
                        substitutions.push(pos + 1);
                    }
                    _ => {
                        return Err(Error::InfeasibleArchitecture {
                            layer: pos + 1,
                            height: current.0,
                            width: current.1,
                        })
                    }
                },
            }
        } else if layer.kind.is_convolution() {
            current_channels = arch.channels;
        }
        materialized.push(effective);
        shapes.push(current);
        channels.push(current_channels);
        pools_applied.push(applied.clone());
    }

    let mut replays = Vec::with_capacity(arch.shortcuts.len());
    let mut channel_mismatches = Vec::new();
    for &(start, end) in &arch.shortcuts {
        let pools = materialized[start..end]
            .iter()
            .copied()
            .filter(|&j| library.get(j).is_some_and(|e| e.kind.is_pooling()))
            .collect();
        replays.push(ShortcutReplay { start, end, pools });
        if channels[start - 1] != channels[end - 1] {
            channel_mismatches.push((start, end));
        }
    }

    Ok(ShapeTrace {
        shapes,
        channels,
        pools_applied,
        replays,
        substitutions,
        materialized,
        channel_mismatches,
    })
}

/// Trainable parameters of the materialized network.
///
/// Each convolution contributes `k*k*C_in*C_out + C_out` weights plus one
/// shared PReLU slope. The head is global average pooling, a
/// [`HIDDEN_UNITS`]-wide dense layer with a PReLU slope, and the classifier.
/// Pooling and identity layers contribute nothing; neither do shortcuts.
pub fn parameter_count(arch: &CandidateArchitecture, library: &LayerLibrary, num_classes: usize) -> u64 {
    let width = arch.channels as u64;
    let mut c_in = arch.input_shape.channels as u64;
    let mut total = 0u64;
    for &j in &arch.layers {
        let Some(layer) = library.get(j) else { continue };
        if layer.kind.is_convolution() {
            let k = layer.kernel as u64;
            total += k * k * c_in * width + width + 1;
            c_in = width;
        }
    }
    let classes = num_classes as u64;
    total + c_in * HIDDEN_UNITS + HIDDEN_UNITS + 1 + HIDDEN_UNITS * classes + classes
}
