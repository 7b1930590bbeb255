use crate::error::{Error, Result};
use crate::geometry::BevGridSpec;

/// Dense `C × H × W` grid, channel-major, row index along ego y.
#[derive(Clone, Debug, PartialEq)]
pub struct BevFeatureMap {
    channels: usize,
    grid: BevGridSpec,
    data: Vec<f64>,
}

impl BevFeatureMap {
    pub fn zeros(channels: usize, grid: BevGridSpec) -> Self {
        Self {
            channels,
            grid,
            data: vec![0.0; channels * grid.cells()],
        }
    }

    pub fn from_data(channels: usize, grid: BevGridSpec, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * grid.cells() {
            return Err(Error::ShapeMismatch {
                context: "feature map data",
                expected: vec![channels, grid.height(), grid.width()],
                got: vec![data.len()],
            });
        }
        Ok(Self {
            channels,
            grid,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn grid(&self) -> &BevGridSpec {
        &self.grid
    }
    pub fn height(&self) -> usize {
        self.grid.height()
    }
    pub fn width(&self) -> usize {
        self.grid.width()
    }
    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.grid.height(), self.grid.width()]
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, c: usize, row: usize, col: usize) -> usize {
        (c * self.grid.height() + row) * self.grid.width() + col
    }
    pub fn get(&self, c: usize, row: usize, col: usize) -> f64 {
        self.data[self.index(c, row, col)]
    }
    pub fn set(&mut self, c: usize, row: usize, col: usize, v: f64) {
        let i = self.index(c, row, col);
        self.data[i] = v;
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.grid.cells();
        &self.data[c * n..(c + 1) * n]
    }
    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.grid.cells();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn ensure_same_shape(&self, other: &BevFeatureMap, context: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                context,
                expected: self.shape().to_vec(),
                got: other.shape().to_vec(),
            });
        }
        Ok(())
    }

    /// Stacks channels of several maps sharing a grid.
    pub fn concat(maps: &[&BevFeatureMap]) -> Result<Self> {
        let grid = *maps
            .first()
            .ok_or_else(|| Error::invalid("concat", "no maps"))?
            .grid();
        let mut data = Vec::new();
        let mut channels = 0;
        for m in maps {
            if *m.grid() != grid {
                return Err(Error::invalid("concat", "grids differ"));
            }
            data.extend_from_slice(&m.data);
            channels += m.channels;
        }
        Ok(Self {
            channels,
            grid,
            data,
        })
    }

    /// Per-cell L2 norm over channels, as an `H × W` row-major vector.
    pub fn channel_norm(&self) -> Vec<f64> {
        let n = self.grid.cells();
        let mut out = vec![0.0; n];
        for c in 0..self.channels {
            for (o, v) in out.iter_mut().zip(self.channel(c)) {
                *o += v * v;
            }
        }
        out.iter_mut().for_each(|v| *v = v.sqrt());
        out
    }
}
