use super::{clarity_curve, peak_focus, FocusStack, RangingModel, Region};
use crate::exec::{self, Execution};

/// Outcome for one block of a depth map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DepthCell {
    /// Estimated object distance, cm.
    Depth(f64),
    /// Clarity barely changes through the sweep (textureless block).
    Flat,
    /// The block is too thin for a Sobel window, or its peak lies outside
    /// the ranging model's domain.
    Unresolved,
}

impl DepthCell {
    pub fn depth(self) -> Option<f64> {
        match self {
            DepthCell::Depth(u) => Some(u),
            _ => None,
        }
    }
}

/// Block-wise depth estimates, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub block: usize,
    pub cols: usize,
    pub rows: usize,
    pub cells: Vec<DepthCell>,
}

impl DepthMap {
    pub fn get(&self, col: usize, row: usize) -> DepthCell {
        self.cells[row * self.cols + col]
    }

    /// Pixel rectangle covered by a cell.
    pub fn region(&self, col: usize, row: usize, width: usize, height: usize) -> Region {
        block_region(self.block, col, row, width, height)
    }
}

const FLAT_FLOOR: f64 = 1e-6;

fn block_region(block: usize, col: usize, row: usize, width: usize, height: usize) -> Region {
    let x0 = col * block;
    let y0 = row * block;
    Region::new(x0, y0, block.min(width - x0), block.min(height - y0))
}

/// Tiles the stack into `block x block` cells (partial edge cells included)
/// and ranges each one from its clarity peak.
///
/// # Panics
/// If `block < 3`.
pub fn depth_map(stack: &FocusStack, model: &RangingModel, block: usize) -> DepthMap {
    depth_map_with(Execution::default(), stack, model, block)
}

pub fn depth_map_with(
    exec: Execution,
    stack: &FocusStack,
    model: &RangingModel,
    block: usize,
) -> DepthMap {
    assert!(block >= 3, "block size must be at least 3, got {block}");
    let (w, h) = (stack.width(), stack.height());
    let cols = w.div_ceil(block);
    let rows = h.div_ceil(block);
    let cells = exec::map_indexed(exec, cols * rows, |i| {
        let region = block_region(block, i % cols, i / cols, w, h);
        range_cell(stack, model, region)
    });
    DepthMap {
        block,
        cols,
        rows,
        cells,
    }
}

fn range_cell(stack: &FocusStack, model: &RangingModel, region: Region) -> DepthCell {
    let Ok(curve) = clarity_curve(stack, region) else {
        return DepthCell::Unresolved;
    };
    let (lo, hi) = curve
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, t)| (lo.min(t), hi.max(t)));
    if hi - lo < FLAT_FLOOR * hi.max(1.0) {
        return DepthCell::Flat;
    }
    match peak_focus(&curve).and_then(|rho| model.depth(rho)) {
        Ok(u) => DepthCell::Depth(u),
        Err(_) => DepthCell::Unresolved,
    }
}
