/// Attention weights of one sequence, laid out `[layer][head][source][target]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTensor {
    layers: usize,
    heads: usize,
    len: usize,
    data: Vec<f32>,
}

/// Location of a single attention row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowCoord {
    pub layer: usize,
    pub head: usize,
    pub token: usize,
}

/// A row that failed validation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RowFault {
    /// Worst row-sum deviation among all rows, when it exceeds the tolerance.
    RowSum { at: RowCoord, sum: f64 },
    /// First negative or non-finite weight.
    BadValue {
        at: RowCoord,
        target: usize,
        value: f32,
    },
}

impl AttentionTensor {
    /// Returns `None` when `data.len() != layers * heads * len * len`.
    pub fn new(layers: usize, heads: usize, len: usize, data: Vec<f32>) -> Option<Self> {
        (data.len() == Self::element_count(layers, heads, len)).then_some(AttentionTensor {
            layers,
            heads,
            len,
            data,
        })
    }

    pub fn element_count(layers: usize, heads: usize, len: usize) -> usize {
        layers * heads * len * len
    }

    pub fn from_le_bytes(layers: usize, heads: usize, len: usize, bytes: &[u8]) -> Option<Self> {
        if bytes.len() != 4 * Self::element_count(layers, heads, len) {
            return None;
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::new(layers, heads, len, data)
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    /// Sequence length T.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// The T×T matrix of one head, row-major.
    pub fn head(&self, layer: usize, head: usize) -> &[f32] {
        let block = self.len * self.len;
        let start = (layer * self.heads + head) * block;
        &self.data[start..start + block]
    }

    pub fn row(&self, layer: usize, head: usize, token: usize) -> &[f32] {
        &self.head(layer, head)[token * self.len..(token + 1) * self.len]
    }

    pub fn row_mut(&mut self, layer: usize, head: usize, token: usize) -> &mut [f32] {
        let t = self.len;
        let start = ((layer * self.heads + head) * t + token) * t;
        &mut self.data[start..start + t]
    }

    /// Checks every row: weights finite and non-negative, sums within `tol` of 1.
    pub fn check_rows(&self, tol: f64) -> Result<(), RowFault> {
        let mut worst: Option<(RowCoord, f64)> = None;
        for layer in 0..self.layers {
            for head in 0..self.heads {
                for token in 0..self.len {
                    let at = RowCoord { layer, head, token };
                    let row = self.row(layer, head, token);
                    if let Some((target, &value)) = row
                        .iter()
                        .enumerate()
                        .find(|(_, v)| !v.is_finite() || **v < 0.0)
                    {
                        return Err(RowFault::BadValue { at, target, value });
                    }
                    let sum: f64 = row.iter().map(|&v| f64::from(v)).sum();
                    let dev = (sum - 1.0).abs();
                    if worst.is_none_or(|(_, s)| dev > (s - 1.0).abs()) {
                        worst = Some((at, sum));
                    }
                }
            }
        }
        match worst {
            Some((at, sum)) if (sum - 1.0).abs() > tol => Err(RowFault::RowSum { at, sum }),
            _ => Ok(()),
        }
    }
}
