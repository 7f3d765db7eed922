use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

/// Axis-aligned deployment rectangle anchored at the origin, in meters.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Area {
    pub width: f64,
    pub height: f64,
}

/// Regular AP grid: AP `(i, j)` sits at `(offset_x + i * spacing, offset_y + j * spacing, height)`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ApGrid {
    pub columns: usize,
    pub rows: usize,
    pub spacing: f64,
    pub offset_x: f64,
    pub offset_y: f64,
    pub height: f64,
}

impl Default for ApGrid {
    fn default() -> Self {
        Self {
            columns: 4,
            rows: 4,
            spacing: 100.0,
            offset_x: 50.0,
            offset_y: 50.0,
            height: 10.0,
        }
    }
}

impl ApGrid {
    pub fn len(&self) -> usize {
        self.columns * self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct LayoutParams {
    pub area: Area,
    pub ap_grid: ApGrid,
}

impl Default for LayoutParams {
    fn default() -> Self {
        Self {
            area: Area { width: 400.0, height: 400.0 },
            ap_grid: ApGrid::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Geometry {
    /// AP antenna positions `(x, y, z)`.
    pub aps: Vec<[f64; 3]>,
    /// UE ground positions `(x, y)`.
    pub ues: Vec<[f64; 2]>,
    pub area: Area,
}

impl Geometry {
    /// Horizontal AP-UE distance.
    pub fn ground_distance(&self, l: usize, k: usize) -> f64 {
        let (a, u) = (self.aps[l], self.ues[k]);
        (a[0] - u[0]).hypot(a[1] - u[1])
    }

    pub fn ue_distance(&self, k: usize, j: usize) -> f64 {
        let (a, b) = (self.ues[k], self.ues[j]);
        (a[0] - b[0]).hypot(a[1] - b[1])
    }
}

/// AP positions, column-major over the grid (`l = i * rows + j`).
pub fn ap_positions(grid: &ApGrid) -> Vec<[f64; 3]> {
    let mut aps = Vec::with_capacity(grid.len());
    for i in 0..grid.columns {
        for j in 0..grid.rows {
            aps.push([
                grid.offset_x + i as f64 * grid.spacing,
                grid.offset_y + j as f64 * grid.spacing,
                grid.height,
            ]);
        }
    }
    aps
}

/// Deterministic AP grid plus `ues` i.i.d. uniform ground positions.
pub fn sample_geometry<R: Rng + ?Sized>(params: &LayoutParams, ues: usize, rng: &mut R) -> Geometry {
    let area = params.area;
    let ue_positions = (0..ues)
        .map(|_| {
            let u: f64 = rng.random();
            let v: f64 = rng.random();
            [u * area.width, v * area.height]
        })
        .collect();
    Geometry {
        aps: ap_positions(&params.ap_grid),
        ues: ue_positions,
        area,
    }
}
