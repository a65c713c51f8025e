//! Grid of ink cells on the table that the tool can wipe.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendingCell {
    pub ix: usize,
    pub iy: usize,
    pub center: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InkBoard {
    /// Corner of cell (0, 0) in world x-y.
    origin: [f64; 2],
    cell: f64,
    nx: usize,
    ny: usize,
    /// Height of the board surface.
    height: f64,
    wipe_radius: f64,
    ink: Vec<bool>,
    wiped: Vec<bool>,
}

impl InkBoard {
    /// An ink-free board covering `size` (m) from `origin` with square cells.
    pub fn new(
        origin: [f64; 2],
        size: [f64; 2],
        cell: f64,
        wipe_radius: f64,
        height: f64,
    ) -> Result<Self> {
        if !(cell > 0.0) || !(wipe_radius >= 0.0) || !(size[0] > 0.0) || !(size[1] > 0.0) {
            return Err(Error::InvalidScenario(
                "board size, cell and wipe radius must be positive".into(),
            ));
        }
        let nx = (size[0] / cell).round().max(1.0) as usize;
        let ny = (size[1] / cell).round().max(1.0) as usize;
        Ok(Self {
            origin,
            cell,
            nx,
            ny,
            height,
            wipe_radius,
            ink: vec![false; nx * ny],
            wiped: vec![false; nx * ny],
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn set_ink(&mut self, cells: &[(usize, usize)]) -> Result<()> {
        for &(ix, iy) in cells {
            if ix >= self.nx || iy >= self.ny {
                return Err(Error::InvalidScenario(format!(
                    "ink cell ({ix}, {iy}) outside {}x{} board",
                    self.nx, self.ny
                )));
            }
            self.ink[iy * self.nx + ix] = true;
        }
        Ok(())
    }

    /// Inks each cell independently with probability `density`.
    pub fn random_ink(&mut self, seed: u64, density: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for cell in &mut self.ink {
            *cell = rng.random_range(0.0..1.0) < density;
        }
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> Vector3<f64> {
        Vector3::new(
            self.origin[0] + (ix as f64 + 0.5) * self.cell,
            self.origin[1] + (iy as f64 + 0.5) * self.cell,
            self.height,
        )
    }

    fn centers(&self) -> impl Iterator<Item = (usize, Vector3<f64>)> + '_ {
        (0..self.ny).flat_map(move |iy| {
            (0..self.nx).map(move |ix| (iy * self.nx + ix, self.cell_center(ix, iy)))
        })
    }

    /// Wipes inked cells whose centre lies within the wipe radius of the
    /// tool in the x-y plane. Returns how many were newly wiped.
    pub fn wipe_at(&mut self, tool: &Vector3<f64>) -> usize {
        let r2 = self.wipe_radius * self.wipe_radius;
        let hits: Vec<usize> = self
            .centers()
            .filter(|&(i, c)| {
                self.ink[i] && !self.wiped[i] && {
                    let dx = c.x - tool.x;
                    let dy = c.y - tool.y;
                    dx * dx + dy * dy <= r2
                }
            })
            .map(|(i, _)| i)
            .collect();
        for &i in &hits {
            self.wiped[i] = true;
        }
        hits.len()
    }

    pub fn inked_count(&self) -> usize {
        self.ink.iter().filter(|&&b| b).count()
    }

    /// Fraction of inked cells wiped so far; 0 for a clean board.
    pub fn wiped_fraction(&self) -> f64 {
        let inked = self.inked_count();
        if inked == 0 {
            return 0.0;
        }
        self.wiped.iter().filter(|&&b| b).count() as f64 / inked as f64
    }

    /// Inked cells not yet wiped, in row-major order.
    pub fn pending(&self) -> Vec<PendingCell> {
        self.centers()
            .filter(|&(i, _)| self.ink[i] && !self.wiped[i])
            .map(|(i, center)| PendingCell {
                ix: i % self.nx,
                iy: i / self.nx,
                center,
            })
            .collect()
    }
}
