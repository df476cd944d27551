//! The layer library: the discrete alphabet each network position chooses from.
//!
//! Every layer type binds its kernel size, stride and dilation to a short
//! token (`c3`, `m2`, ...). Convolutions are zero-padded so they preserve the
//! spatial size of their input; only pooling layers downsample.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The operation performed by a layer type.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Identity,
    Convolution,
    DilatedConvolution,
    MaxPool,
    AvgPool,
}

impl LayerKind {
    pub fn is_pooling(self) -> bool {
        matches!(self, LayerKind::MaxPool | LayerKind::AvgPool)
    }

    pub fn is_convolution(self) -> bool {
        matches!(self, LayerKind::Convolution | LayerKind::DilatedConvolution)
    }
}

/// One entry of the layer library.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LayerType {
    pub shorthand: String,
    pub kind: LayerKind,
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
    /// Zero padding applied on each side (pooling only; convolutions always
    /// pad to preserve the input size).
    pub padding: usize,
    pub is_downsampling: bool,
}

impl LayerType {
    pub fn identity() -> Self {
        LayerType {
            shorthand: "id".to_string(),
            kind: LayerKind::Identity,
            kernel: 1,
            stride: 1,
            dilation: 1,
            padding: 0,
            is_downsampling: false,
        }
    }

    pub fn convolution(kernel: usize) -> Self {
        LayerType {
            shorthand: format!("c{kernel}"),
            kind: LayerKind::Convolution,
            kernel,
            stride: 1,
            dilation: 1,
            padding: 0,
            is_downsampling: false,
        }
    }

    /// Dilated convolution with dilation rate 2.
    pub fn dilated_convolution(kernel: usize) -> Self {
        LayerType {
            shorthand: format!("d{kernel}"),
            kind: LayerKind::DilatedConvolution,
            kernel,
            stride: 1,
            dilation: 2,
            padding: 0,
            is_downsampling: false,
        }
    }

    /// Stride-2 max pooling. Odd kernels are padded by `(k - 1) / 2` so the
    /// output is `ceil(input / 2)`; even kernels are unpadded and floor.
    pub fn max_pool(kernel: usize) -> Self {
        LayerType {
            shorthand: format!("m{kernel}"),
            kind: LayerKind::MaxPool,
            kernel,
            stride: 2,
            dilation: 1,
            padding: pool_padding(kernel),
            is_downsampling: true,
        }
    }

    /// Stride-2 average pooling, padded like [`LayerType::max_pool`].
    pub fn avg_pool(kernel: usize) -> Self {
        LayerType {
            shorthand: format!("a{kernel}"),
            kind: LayerKind::AvgPool,
            kernel,
            stride: 2,
            dilation: 1,
            padding: pool_padding(kernel),
            is_downsampling: true,
        }
    }

    /// Parses a shorthand token of the form `id`, `c<k>`, `d<k>`, `m<k>` or `a<k>`.
    pub fn from_shorthand(token: &str) -> Result<Self> {
        if token == "id" {
            return Ok(Self::identity());
        }
        let mut chars = token.chars();
        let prefix = chars.next().ok_or_else(|| Error::UnknownShorthand(token.to_string()))?;
        let digits = chars.as_str();
        if digits.is_empty() || !digits.chars().all(|c| c.is_ascii_digit()) {
            return Err(Error::UnknownShorthand(token.to_string()));
        }
        let kernel: usize = digits.parse().map_err(|_| Error::UnknownShorthand(token.to_string()))?;
        if kernel == 0 || digits.starts_with('0') {
            return Err(Error::UnknownShorthand(token.to_string()));
        }
        let layer = match prefix {
            'c' => Self::convolution(kernel),
            'd' => Self::dilated_convolution(kernel),
            'm' if kernel >= 2 => Self::max_pool(kernel),
            'a' if kernel >= 2 => Self::avg_pool(kernel),
            _ => return Err(Error::UnknownShorthand(token.to_string())),
        };
        Ok(layer)
    }

    /// Spatial output size along one axis, or `None` when the layer cannot be
    /// applied because the output would be smaller than 1.
    pub fn output_extent(&self, input: usize) -> Option<usize> {
        if !self.kind.is_pooling() {
            return Some(input);
        }
        let padded = input + 2 * self.padding;
        if padded < self.kernel {
            return None;
        }
        Some((padded - self.kernel) / self.stride + 1)
    }
}

fn pool_padding(kernel: usize) -> usize {
    if kernel % 2 == 1 {
        (kernel - 1) / 2
    } else {
        0
    }
}

impl fmt::Display for LayerType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.shorthand)
    }
}

/// Shorthand tokens of the default library, in index order.
pub const DEFAULT_TOKENS: [&str; 10] = ["id", "c1", "c3", "c5", "c7", "d3", "d5", "m2", "m3", "a3"];

/// Ordered set of layer types. Index `j` of a prototype row refers to entry `j`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LayerLibrary {
    entries: Vec<LayerType>,
}

impl LayerLibrary {
    pub fn new(entries: Vec<LayerType>) -> Result<Self> {
        if entries.len() < 2 {
            return Err(Error::InvalidDimensions(format!(
                "library needs at least 2 entries, got {}",
                entries.len()
            )));
        }
        let mut seen = HashSet::new();
        for entry in &entries {
            if !seen.insert(entry.shorthand.as_str()) {
                return Err(Error::DuplicateShorthand(entry.shorthand.clone()));
            }
            if entry.kernel == 0 || entry.stride == 0 || entry.dilation == 0 {
                return Err(Error::InvalidLayerType {
                    shorthand: entry.shorthand.clone(),
                    reason: "kernel, stride and dilation must be at least 1".to_string(),
                });
            }
        }
        Ok(LayerLibrary { entries })
    }

    pub fn from_tokens<S: AsRef<str>>(tokens: &[S]) -> Result<Self> {
        let entries = tokens
            .iter()
            .map(|t| LayerType::from_shorthand(t.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(entries)
    }

    pub fn entries(&self) -> &[LayerType] {
        &self.entries
    }

    pub fn size(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, index: usize) -> Option<&LayerType> {
        self.entries.get(index)
    }

    pub fn lookup(&self, shorthand: &str) -> Result<&LayerType> {
        self.entries
            .iter()
            .find(|e| e.shorthand == shorthand)
            .ok_or_else(|| Error::UnknownShorthand(shorthand.to_string()))
    }

    pub fn index_of(&self, shorthand: &str) -> Result<usize> {
        self.entries
            .iter()
            .position(|e| e.shorthand == shorthand)
            .ok_or_else(|| Error::UnknownShorthand(shorthand.to_string()))
    }

    /// Index of the first identity entry, if the library has one.
    pub fn identity_index(&self) -> Option<usize> {
        self.entries.iter().position(|e| e.kind == LayerKind::Identity)
    }

    pub fn tokens(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.shorthand.clone()).collect()
    }

    /// Renders a layer-index sequence as hyphen-joined shorthand (`c3-m2-c5`).
    ///
    /// Panics if an index is out of range.
    pub fn encode(&self, layers: &[usize]) -> String {
        layers
            .iter()
            .map(|&i| self.entries[i].shorthand.as_str())
            .collect::<Vec<_>>()
            .join("-")
    }

    /// Parses hyphen-joined shorthand back into layer indices. The empty
    /// string is the empty sequence.
    pub fn decode(&self, encoded: &str) -> Result<Vec<usize>> {
        if encoded.is_empty() {
            return Ok(Vec::new());
        }
        encoded.split('-').map(|t| self.index_of(t)).collect()
    }
}

impl Default for LayerLibrary {
    fn default() -> Self {
        default_library()
    }
}

impl TryFrom<Vec<String>> for LayerLibrary {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        Self::from_tokens(&tokens)
    }
}

impl From<LayerLibrary> for Vec<String> {
    fn from(library: LayerLibrary) -> Self {
        library.tokens()
    }
}

/// The ten-entry library: `id c1 c3 c5 c7 d3 d5 m2 m3 a3`.
pub fn default_library() -> LayerLibrary {
    LayerLibrary::from_tokens(&DEFAULT_TOKENS).expect("default library is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_library_layout() {
        let lib = default_library();
        assert_eq!(lib.size(), 10);
        assert_eq!(lib.tokens(), DEFAULT_TOKENS);
        assert_eq!(lib.entries()[0].kind, LayerKind::Identity);

        let d3 = &lib.entries()[5];
        assert_eq!(d3.kind, LayerKind::DilatedConvolution);
        assert_eq!((d3.kernel, d3.dilation), (3, 2));
        assert_eq!(lib.entries()[6].dilation, 2);

        for j in [8, 9] {
            assert_eq!(lib.entries()[j].stride, 2);
            assert_eq!(lib.entries()[j].kernel, 3);
        }
        let downsampling: Vec<usize> = lib
            .entries()
            .iter()
            .enumerate()
            .filter(|(_, e)| e.is_downsampling)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(downsampling, vec![7, 8, 9]);
    }

    #[test]
    fn layer_invariants_hold() {
        for e in default_library().entries() {
            match e.kind {
                LayerKind::Identity => {
                    assert_eq!((e.kernel, e.stride, e.dilation), (1, 1, 1));
                    assert!(!e.is_downsampling);
                }
                LayerKind::Convolution | LayerKind::DilatedConvolution => {
                    assert_eq!(e.stride, 1);
                    assert!(!e.is_downsampling);
                }
                LayerKind::MaxPool | LayerKind::AvgPool => assert!(e.is_downsampling),
            }
        }
    }

    #[test]
    fn lookup_entries() {
        let lib = default_library();
        let m2 = lib.lookup("m2").unwrap();
        assert_eq!(m2.kind, LayerKind::MaxPool);
        assert_eq!((m2.kernel, m2.stride, m2.padding), (2, 2, 0));
        assert_eq!(lib.lookup("id").unwrap().kind, LayerKind::Identity);
        assert!(matches!(lib.lookup("zz"), Err(Error::UnknownShorthand(t)) if t == "zz"));
        for e in lib.entries() {
            assert_eq!(lib.lookup(&e.shorthand).unwrap(), e);
        }
    }

    #[test]
    fn pooling_extents() {
        let lib = default_library();
        let m2 = lib.lookup("m2").unwrap();
        let m3 = lib.lookup("m3").unwrap();
        assert_eq!(m2.output_extent(16), Some(8));
        assert_eq!(m2.output_extent(5), Some(2));
        assert_eq!(m2.output_extent(1), None);
        assert_eq!(m3.output_extent(5), Some(3));
        assert_eq!(m3.output_extent(1), Some(1));
        assert_eq!(lib.lookup("c7").unwrap().output_extent(3), Some(3));
    }

    #[test]
    fn rejects_bad_libraries() {
        assert!(matches!(
            LayerLibrary::from_tokens(&["id", "c3", "id"]),
            Err(Error::DuplicateShorthand(_))
        ));
        assert!(LayerLibrary::from_tokens(&["id"]).is_err());
        for bad in ["", "x3", "c", "c0", "c03", "m1", "cc"] {
            assert!(LayerType::from_shorthand(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn encode_decode() {
        let lib = default_library();
        assert_eq!(lib.encode(&[2, 7, 3]), "c3-m2-c5");
        assert_eq!(lib.decode("c3-m2-c5").unwrap(), vec![2, 7, 3]);
        assert_eq!(lib.decode("").unwrap(), Vec::<usize>::new());
        assert!(lib.decode("c3--c5").is_err());
    }

    #[test]
    fn custom_library_serde() {
        let lib: LayerLibrary = serde_json::from_str(r#"["id","c3","m2","a2"]"#).unwrap();
        assert_eq!(lib.size(), 4);
        assert_eq!(serde_json::to_string(&lib).unwrap(), r#"["id","c3","m2","a2"]"#);
    }
}
