//! Discrete fields over space x age and space x time.

use crate::grid::{Grid, Mask};

/// Densities on the `(na + 1) x nx` space-age grid, stored age-row major:
/// row `i` is the spatial profile at age `a_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    nx: usize,
    na: usize,
    data: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            nx: grid.nx,
            na: grid.na,
            data: vec![0.0; grid.field_len()],
        }
    }

    /// Samples `f(x, a)` at every node.
    pub fn from_fn(grid: &Grid, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut out = Self::zeros(grid);
        for i in 0..=grid.na {
            let a = grid.age(i);
            for j in 0..grid.nx {
                out.data[i * grid.nx + j] = f(grid.x(j), a);
            }
        }
        out
    }

    pub fn from_vec(grid: &Grid, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), grid.field_len(), "field length mismatch");
        Self {
            nx: grid.nx,
            na: grid.na,
            data,
        }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn na(&self) -> usize {
        self.na
    }

    pub fn rows(&self) -> usize {
        self.na + 1
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.nx..(i + 1) * self.nx]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.nx..(i + 1) * self.nx]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.nx + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.nx + j] = v;
    }

    pub fn same_shape(&self, other: &Field) -> bool {
        self.nx == other.nx && self.na == other.na
    }

    /// Unweighted sum of products.
    pub fn dot(&self, other: &Field) -> f64 {
        debug_assert!(self.same_shape(other));
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// `dx da`-weighted inner product.
    pub fn inner(&self, other: &Field, grid: &Grid) -> f64 {
        grid.dx() * grid.da() * self.dot(other)
    }

    pub fn norm(&self, grid: &Grid) -> f64 {
        self.inner(self, grid).sqrt()
    }

    /// Weighted norm over the cells selected by `mask`.
    pub fn masked_norm(&self, mask: &Mask, grid: &Grid) -> f64 {
        let s: f64 = self
            .data
            .iter()
            .zip(mask.cells())
            .filter(|(_, &m)| m)
            .map(|(v, _)| v * v)
            .sum();
        (grid.dx() * grid.da() * s).sqrt()
    }

    /// Weighted norm over age rows `i` with `pred(a_i)`.
    pub fn norm_over_ages(&self, grid: &Grid, pred: impl Fn(f64) -> bool) -> f64 {
        let mut s = 0.0;
        for i in 0..=self.na {
            if pred(grid.age(i)) {
                s += self.row(i).iter().map(|v| v * v).sum::<f64>();
            }
        }
        (grid.dx() * grid.da() * s).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.scale(s);
        out
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: f64, other: &Field) {
        debug_assert!(self.same_shape(other));
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += s * b);
    }

    /// Zeroes every cell outside `mask`.
    pub fn restrict(&mut self, mask: &Mask) {
        self.data.iter_mut().zip(mask.cells()).for_each(|(v, &m)| {
            if !m {
                *v = 0.0
            }
        });
    }

    pub fn restricted(&self, mask: &Mask) -> Self {
        let mut out = self.clone();
        out.restrict(mask);
        out
    }
}

/// Values on the `(nt + 1) x nx` space-time grid, stored time-level major.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTime {
    nx: usize,
    nt: usize,
    data: Vec<f64>,
}

impl SpaceTime {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            nx: grid.nx,
            nt: grid.nt,
            data: vec![0.0; grid.nx * (grid.nt + 1)],
        }
    }

    pub fn from_fn(grid: &Grid, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut out = Self::zeros(grid);
        for k in 0..=grid.nt {
            let t = grid.time(k);
            for j in 0..grid.nx {
                out.data[k * grid.nx + j] = f(grid.x(j), t);
            }
        }
        out
    }

    pub fn constant(grid: &Grid, v: f64) -> Self {
        let mut out = Self::zeros(grid);
        out.data.fill(v);
        out
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn at(&self, k: usize) -> &[f64] {
        &self.data[k * self.nx..(k + 1) * self.nx]
    }

    pub fn at_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.nx..(k + 1) * self.nx]
    }

    /// `dx dt`-weighted L2 norm over all time levels.
    pub fn norm(&self, grid: &Grid) -> f64 {
        let s: f64 = self.data.iter().map(|v| v * v).sum();
        (grid.dx() * grid.dt() * s).sqrt()
    }

    pub fn distance(&self, other: &SpaceTime, grid: &Grid) -> f64 {
        let s: f64 = self.data.iter().zip(&other.data).map(|(a, b)| (a - b) * (a - b)).sum();
        (grid.dx() * grid.dt() * s).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `(1 - w) * self + w * other`
    pub fn blend(&self, other: &SpaceTime, w: f64) -> Self {
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (1.0 - w) * a + w * b)
            .collect();
        Self {
            nx: self.nx,
            nt: self.nt,
            data,
        }
    }

    /// Shifts one level forward in time: `out[k] = self[k - 1]`, `out[0] = self[0]`.
    pub fn lagged(&self) -> Self {
        let mut out = self.clone();
        out.data[self.nx..].copy_from_slice(&self.data[..self.nt * self.nx]);
        out
    }
}

/// A sex's field at every time level, plus its age-zero trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub slices: Vec<Field>,
    pub renewal_trace: SpaceTime,
}

impl Trajectory {
    pub fn final_slice(&self) -> &Field {
        self.slices.last().expect("trajectory has at least one slice")
    }

    /// `dx da dt`-weighted L2(Q) norm over time levels `1..=nt`.
    pub fn l2_norm(&self, grid: &Grid) -> f64 {
        let s: f64 = self.slices[1..].iter().map(|f| f.dot(f)).sum();
        (grid.dx() * grid.da() * grid.dt() * s).sqrt()
    }

    /// Discrete `L2(0,A x 0,T; H1_0)` seminorm, Dirichlet ends included.
    pub fn h1_seminorm(&self, grid: &Grid) -> f64 {
        let dx = grid.dx();
        let mut s = 0.0;
        for slice in &self.slices[1..] {
            for i in 0..slice.rows() {
                let row = slice.row(i);
                let mut prev = 0.0;
                for &v in row {
                    s += (v - prev) * (v - prev);
                    prev = v;
                }
                s += prev * prev;
            }
        }
        (grid.da() * grid.dt() * s / dx).sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.slices.iter().all(Field::is_zero)
    }
}

/// A control (or source) density at time levels `0..=nt`. Level `k` acts on
/// the step that produces time level `k`; level 0 is never used.
#[derive(Debug, Clone, PartialEq)]
pub struct Control {
    pub slices: Vec<Field>,
}

impl Control {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            slices: vec![Field::zeros(grid); grid.nt + 1],
        }
    }

    pub fn from_fn(grid: &Grid, mut f: impl FnMut(f64, f64, f64) -> f64) -> Self {
        let mut slices = Vec::with_capacity(grid.nt + 1);
        slices.push(Field::zeros(grid));
        for k in 1..=grid.nt {
            let t = grid.time(k);
            slices.push(Field::from_fn(grid, |x, a| f(x, a, t)));
        }
        Self { slices }
    }

    /// `dx da dt`-weighted inner product over levels `1..=nt`.
    pub fn inner(&self, other: &Control, grid: &Grid) -> f64 {
        let s: f64 = self.slices[1..]
            .iter()
            .zip(&other.slices[1..])
            .map(|(a, b)| a.dot(b))
            .sum();
        grid.dx() * grid.da() * grid.dt() * s
    }

    pub fn energy(&self, grid: &Grid) -> f64 {
        self.inner(self, grid)
    }

    pub fn restrict(&mut self, mask: &Mask) {
        self.slices.iter_mut().for_each(|s| s.restrict(mask));
    }

    pub fn scale(&mut self, s: f64) {
        self.slices.iter_mut().for_each(|f| f.scale(s));
    }

    pub fn vanishes_outside(&self, mask: &Mask) -> bool {
        self.slices
            .iter()
            .all(|s| s.data().iter().zip(mask.cells()).all(|(&v, &m)| m || v == 0.0))
    }

    pub fn is_zero(&self) -> bool {
        self.slices.iter().all(Field::is_zero)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lagged_shifts_levels() {
        let g = Grid::new(2, 4, 1.0, 0.75).unwrap();
        let p = SpaceTime::from_fn(&g, |x, t| x + 10.0 * t);
        let q = p.lagged();
        assert_eq!(q.at(0), p.at(0));
        for k in 1..=g.nt {
            assert_eq!(q.at(k), p.at(k - 1));
        }
    }

    #[test]
    fn h1_seminorm_of_discrete_sine() {
        let g = Grid::new(63, 4, 1.0, 0.25).unwrap();
        let slice = Field::from_fn(&g, |x, _| (std::f64::consts::PI * x).sin());
        let traj = Trajectory {
            slices: vec![slice.clone(), slice],
            renewal_trace: SpaceTime::zeros(&g),
        };
        // int_0^1 (pi cos pi x)^2 dx = pi^2 / 2, integrated over 5 age rows * da * dt
        let expect = (std::f64::consts::PI.powi(2) / 2.0 * 5.0 * g.da() * g.dt()).sqrt();
        assert!((traj.h1_seminorm(&g) - expect).abs() / expect < 1e-3);
    }
}
