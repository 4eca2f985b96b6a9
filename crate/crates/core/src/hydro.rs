//! Deterministic transport model of the large reshuffling system.
//!
//! The density `ξ(x, t)` on `[0, 1]` moves right as a whole, with speed
//! `v(ξ(1/2, t))`. Arrivals make the profile left of `1/2` the image of
//! the profile half a unit further right under the backward map `M`, so the
//! initial density extends uniquely to the left and the solution at time
//! `t` is the extended initial density shifted by the total displacement
//! `y(t)`.

use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};

/// Grid cells per half unit; `1/2` is a cell boundary.
pub const CELLS_PER_HALF: usize = 1024;
/// Default grid spacing.
pub const GRID_SPACING: f64 = 0.5 / CELLS_PER_HALF as f64;
/// Initial extension depth, in half-unit strips.
pub const DEFAULT_DEPTH: usize = 40;
/// Largest depth tried by [`solve`].
pub const MAX_DEPTH: usize = DEFAULT_DEPTH << 8;
/// Required distance between the far-left extension and `ψ`.
pub const TAIL_TOLERANCE: f64 = 1e-6;

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(invalid("lambda", "must lie in [0, 1)"));
    }
    Ok(())
}

#[inline]
fn v(xi: f64) -> f64 {
    if xi == 0.0 {
        1.0
    } else if xi < 1e-8 {
        1.0 - 0.5 * xi
    } else {
        -libm::expm1(-xi) / xi
    }
}

/// Speed `v(ξ) = (1 - e^{-ξ})/ξ`, with `v(0) = 1`.
pub fn speed(xi: f64) -> Result<f64> {
    if !(xi >= 0.0) {
        return Err(invalid("xi", "must be nonnegative"));
    }
    Ok(v(xi))
}

#[inline]
fn m(u: f64, lambda: f64) -> f64 {
    lambda / v(u)
}

/// Backward map `M(u) = λu/(1 - e^{-u})`, i.e. `λ / v(u)`.
pub fn backward_map(u: f64, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if !(u >= 0.0) {
        return Err(invalid("u", "must be nonnegative"));
    }
    Ok(m(u, lambda))
}

/// `ψ = -ln(1 - λ)`, the fixed point of `M`.
pub fn fixed_point(lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    Ok(-libm::log1p(-lambda))
}

/// Piecewise-constant density on a uniform grid starting at `left`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    h: f64,
    left: f64,
    values: Vec<f64>,
    lambda: f64,
    inconsistency: f64,
}

impl DensityGrid {
    /// Density on `[0, 1]` with the default spacing; `values` has one entry
    /// per cell.
    pub fn unit(values: Vec<f64>, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        if values.len() != 2 * CELLS_PER_HALF {
            return Err(invalid("values", "need one value per grid cell on [0, 1]"));
        }
        if values.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(invalid("values", "density must be finite and nonnegative"));
        }
        Ok(Self {
            h: GRID_SPACING,
            left: 0.0,
            values,
            lambda,
            inconsistency: 0.0,
        })
    }

    /// Samples `f` at cell midpoints of `[0, 1]`.
    pub fn from_fn(f: impl Fn(f64) -> f64, lambda: f64) -> Result<Self> {
        let values = (0..2 * CELLS_PER_HALF)
            .map(|j| f((j as f64 + 0.5) * GRID_SPACING))
            .collect();
        Self::unit(values, lambda)
    }

    pub fn constant(value: f64, lambda: f64) -> Result<Self> {
        Self::from_fn(|_| value, lambda)
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn left(&self) -> f64 {
        self.left
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Largest gap on `[0, 1/2)` between the given data and the backward
    /// map of the data half a unit to the right. Zero for data consistent
    /// with some past history; nonzero values are reported, not corrected.
    pub fn inconsistency(&self) -> f64 {
        self.inconsistency
    }

    /// Cell midpoints.
    pub fn xs(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(|j| self.left + (j as f64 + 0.5) * self.h)
    }

    /// Values of the cells covering `[0, 1]`.
    pub fn unit_values(&self) -> &[f64] {
        let n = 2 * CELLS_PER_HALF;
        &self.values[self.values.len() - n..]
    }

    /// `sup |ξ - target|` over `[0, 1]`.
    pub fn sup_deviation(&self, target: f64) -> f64 {
        self.unit_values()
            .iter()
            .map(|x| (x - target).abs())
            .fold(0.0, f64::max)
    }

    /// Integral of the density over `[a, b]` (cell-aligned ends are exact).
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        let mut s = 0.0;
        for (j, &x) in self.values.iter().enumerate() {
            let lo = self.left + j as f64 * self.h;
            let hi = lo + self.h;
            let w = hi.min(b) - lo.max(a);
            if w > 0.0 {
                s += x * w;
            }
        }
        s
    }
}

/// Extends a density on `[0, 1]` to `[-depth/2, 1]` by `ξ(x) = M(ξ(x + 1/2))`
/// for `x < 0`. The given data on `[0, 1]` is kept as is.
pub fn extend_density(xi0: &DensityGrid, depth: usize) -> Result<DensityGrid> {
    if xi0.left != 0.0 || xi0.values.len() != 2 * CELLS_PER_HALF {
        return Err(invalid("xi0", "must be a density on [0, 1]"));
    }
    let c = CELLS_PER_HALF;
    let lambda = xi0.lambda;
    let mut values = alloc::vec![0.0; (depth + 2) * c];
    let base = depth * c;
    values[base..].copy_from_slice(&xi0.values);
    for j in (0..base).rev() {
        values[j] = m(values[j + c], lambda);
    }
    let inconsistency = (0..c)
        .map(|k| (xi0.values[k] - m(xi0.values[k + c], lambda)).abs())
        .fold(0.0, f64::max);
    Ok(DensityGrid {
        h: xi0.h,
        left: -(depth as f64) * 0.5,
        values,
        lambda,
        inconsistency,
    })
}

/// Time `τ(y)` needed for a total displacement `y`, tabulated at multiples
/// of the grid spacing, and its inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementMap {
    h: f64,
    tau: Vec<f64>,
}

impl DisplacementMap {
    /// The density entering the midpoint after displacement `y` is the
    /// extended initial density at `1/2 - y`, so
    /// `τ(y) = ∫_{1/2-y}^{1/2} dz / v(ξ(z))`. The integrand is constant on
    /// each cell, so the cumulative sums are exact.
    pub fn new(ext: &DensityGrid) -> Self {
        let mid = ext.values.len() - CELLS_PER_HALF;
        let mut tau = Vec::with_capacity(mid + 1);
        tau.push(0.0);
        let mut acc = 0.0;
        for j in (0..mid).rev() {
            acc += ext.h / v(ext.values[j]);
            tau.push(acc);
        }
        Self { h: ext.h, tau }
    }

    /// Largest tabulated time.
    pub fn horizon(&self) -> f64 {
        *self.tau.last().unwrap_or(&0.0)
    }

    /// Largest tabulated displacement.
    pub fn max_displacement(&self) -> f64 {
        (self.tau.len() - 1) as f64 * self.h
    }

    pub fn tau(&self, y: f64) -> Result<f64> {
        if !(y >= 0.0) || y > self.max_displacement() {
            return Err(Error::BeyondHorizon {
                requested: y,
                available: self.max_displacement(),
            });
        }
        let k = ((y / self.h) as usize).min(self.tau.len() - 2);
        let frac = (y - k as f64 * self.h) / self.h;
        Ok(self.tau[k] + frac * (self.tau[k + 1] - self.tau[k]))
    }

    /// Displacement `y(t)`, by binary search and exact linear inversion
    /// inside a cell.
    pub fn displacement(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) || t > self.horizon() {
            return Err(Error::BeyondHorizon {
                requested: t,
                available: self.horizon(),
            });
        }
        let k = self.tau.partition_point(|&s| s <= t).clamp(1, self.tau.len() - 1) - 1;
        let (a, b) = (self.tau[k], self.tau[k + 1]);
        Ok((k as f64 + (t - a) / (b - a)) * self.h)
    }
}

/// Extended initial density with its displacement map; evaluates the
/// solution at any tabulated time.
#[derive(Debug, Clone, PartialEq)]
pub struct Evolution {
    ext: DensityGrid,
    map: DisplacementMap,
}

impl Evolution {
    pub fn new(ext: DensityGrid) -> Result<Self> {
        if ext.left >= 0.0 {
            return Err(invalid("ext", "density has not been extended"));
        }
        let map = DisplacementMap::new(&ext);
        Ok(Self { ext, map })
    }

    pub fn extended(&self) -> &DensityGrid {
        &self.ext
    }

    pub fn map(&self) -> &DisplacementMap {
        &self.map
    }

    /// `ξ(·, t)` on `[0, 1]`: the extended density shifted right by `y(t)`,
    /// sampled at cell midpoints.
    pub fn at(&self, t: f64) -> Result<DensityGrid> {
        let y = self.map.displacement(t)?;
        let h = self.ext.h;
        let last = self.ext.values.len() - 1;
        let values = (0..2 * CELLS_PER_HALF)
            .map(|j| {
                let p = (j as f64 + 0.5) * h - y;
                let k = libm::floor((p - self.ext.left) / h);
                self.ext.values[(k.max(0.0) as usize).min(last)]
            })
            .collect();
        Ok(DensityGrid {
            h,
            left: 0.0,
            values,
            lambda: self.ext.lambda,
            inconsistency: self.ext.inconsistency,
        })
    }
}

/// `ξ(·, t)` from an already extended density.
pub fn evolve(ext: &DensityGrid, t: f64) -> Result<DensityGrid> {
    Evolution::new(ext.clone())?.at(t)
}

/// Extends `xi0` deep enough that time `t` is tabulated and the far-left
/// value is within [`TAIL_TOLERANCE`] of `ψ`, doubling the depth from
/// [`DEFAULT_DEPTH`] as needed.
pub fn solve(xi0: &DensityGrid, t: f64) -> Result<Evolution> {
    let psi = fixed_point(xi0.lambda)?;
    let mut depth = DEFAULT_DEPTH;
    loop {
        let ext = extend_density(xi0, depth)?;
        let ok_tail = (ext.values[0] - psi).abs() < TAIL_TOLERANCE;
        let evo = Evolution::new(ext)?;
        if ok_tail && evo.map.horizon() >= t {
            return Ok(evo);
        }
        if depth >= MAX_DEPTH {
            return Err(Error::BeyondHorizon {
                requested: t,
                available: evo.map.horizon(),
            });
        }
        depth *= 2;
    }
}

/// Limit of a box of mass `c` concentrated at the origin: it moves at unit
/// speed to `1/2`, stays there for time `c`, then moves on at unit speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpulseSolution {
    pub c: f64,
}

pub fn impulse_solution(c: f64) -> Result<ImpulseSolution> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(invalid("c", "must be positive and finite"));
    }
    Ok(ImpulseSolution { c })
}

impl ImpulseSolution {
    /// Time at which the mass reaches (or, at `1/2`, first arrives at) `x`.
    pub fn time_to(&self, x: f64) -> f64 {
        if x <= 0.5 {
            x
        } else {
            x + self.c
        }
    }

    /// Time to leave through `x = 1`.
    pub fn sojourn(&self) -> f64 {
        self.c + 1.0
    }
}
