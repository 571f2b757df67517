use crate::model::{HiddenLayer, CONV1_KERNEL, CONV2_KERNEL, INPUT_FRAMES, INPUT_MELS, POOL};
use crate::{Error, Result};

/// A unit of a hidden layer: `(channel, row, col)`; dense units use row = col = 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Neuron {
    pub channel: usize,
    pub row: usize,
    pub col: usize,
}

impl Neuron {
    pub fn new(channel: usize, row: usize, col: usize) -> Self {
        Self { channel, row, col }
    }

    /// Flat index into the layer's `C×H×W` activation.
    pub fn flat_index(&self, layer: HiddenLayer) -> usize {
        let (_, h, w) = layer.output_shape();
        (self.channel * h + self.row) * w + self.col
    }
}

impl std::str::FromStr for Neuron {
    type Err = Error;

    /// Parses `"c,i,j"`.
    fn from_str(s: &str) -> Result<Self> {
        let parts = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Domain(format!("neuron {s:?}: {e}")))?;
        match parts[..] {
            [c, i, j] => Ok(Self::new(c, i, j)),
            _ => Err(Error::Domain(format!("neuron {s:?} must be written as channel,row,col"))),
        }
    }
}

impl std::fmt::Display for Neuron {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{},{}", self.channel, self.row, self.col)
    }
}

/// The input rectangle (mel rows × frame columns, half-open) a neuron depends on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReceptiveField {
    pub layer: HiddenLayer,
    pub neuron: Neuron,
    pub rows: (usize, usize),
    pub cols: (usize, usize),
}

impl ReceptiveField {
    pub fn height(&self) -> usize {
        self.rows.1 - self.rows.0
    }

    pub fn width(&self) -> usize {
        self.cols.1 - self.cols.0
    }

    pub fn area(&self) -> usize {
        self.height() * self.width()
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.rows.0..self.rows.1).contains(&row) && (self.cols.0..self.cols.1).contains(&col)
    }
}

#[derive(Clone, Copy)]
enum Stage {
    Conv(usize, usize),
    Pool(usize, usize),
}

fn stages_to(layer: HiddenLayer) -> &'static [Stage] {
    const STACK: [Stage; 4] = [
        Stage::Conv(CONV1_KERNEL.0, CONV1_KERNEL.1),
        Stage::Pool(POOL.0, POOL.1),
        Stage::Conv(CONV2_KERNEL.0, CONV2_KERNEL.1),
        Stage::Pool(POOL.0, POOL.1),
    ];
    match layer {
        HiddenLayer::Conv1 => &STACK[..1],
        HiddenLayer::Pool1 => &STACK[..2],
        HiddenLayer::Conv2 => &STACK[..3],
        HiddenLayer::Pool2 | HiddenLayer::Fc1 => &STACK[..4],
    }
}

/// Maps a neuron back through the valid convolutions (extent grows by
/// `k − 1`) and max pools (indices scale by the pool size) to its input patch.
/// Dense units see the whole `64 × 256` input.
pub fn receptive_field(layer: HiddenLayer, neuron: Neuron) -> Result<ReceptiveField> {
    let (c, h, w) = layer.output_shape();
    if neuron.channel >= c || neuron.row >= h || neuron.col >= w {
        return Err(Error::Domain(format!("neuron ({neuron}) is outside {layer}'s {c}x{h}x{w} output")));
    }
    if layer == HiddenLayer::Fc1 {
        return Ok(ReceptiveField { layer, neuron, rows: (0, INPUT_MELS), cols: (0, INPUT_FRAMES) });
    }
    let (mut rows, mut cols) = ((neuron.row, neuron.row + 1), (neuron.col, neuron.col + 1));
    for stage in stages_to(layer).iter().rev() {
        match *stage {
            Stage::Conv(kh, kw) => {
                rows.1 += kh - 1;
                cols.1 += kw - 1;
            }
            Stage::Pool(ph, pw) => {
                rows = (rows.0 * ph, rows.1 * ph);
                cols = (cols.0 * pw, cols.1 * pw);
            }
        }
    }
    Ok(ReceptiveField { layer, neuron, rows, cols })
}
