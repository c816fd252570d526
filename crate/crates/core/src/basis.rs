//! Neumann-Laplacian eigenbasis on intervals and rectangles.
//!
//! Eigenfunctions are normalized cosines (`Δe = μe`, `∂e/∂n = 0`, `μ ≤ 0`).
//! A [`ModeSet`] keeps the `K` eigenvalues closest to zero, sorted by
//! decreasing `μ`; ties are broken lexicographically on the wavenumber index.
//!
//! The boundary part Γ₁ of an interval is a set of endpoints carrying counting
//! measure, so `⟨f, g⟩₀ = Σ f·g` over the selected endpoints.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance under which two Laplacian eigenvalues are considered equal.
pub const DEGENERACY_RTOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// `x = 0`
    Left,
    /// `x = L` (or `x = Lx`)
    Right,
    /// `y = 0`, rectangles only
    Bottom,
    /// `y = Ly`, rectangles only
    Top,
}

impl std::str::FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "left" => Ok(Side::Left),
            "right" => Ok(Side::Right),
            "bottom" => Ok(Side::Bottom),
            "top" => Ok(Side::Top),
            other => Err(Error::Config(format!("unknown boundary side '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shape {
    Interval { length: f64 },
    Rectangle { lx: f64, ly: f64 },
}

/// Spatial domain together with the actuated boundary part Γ₁.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    shape: Shape,
    gamma1: Vec<Side>,
}

fn check_length(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be a positive finite length, got {v}")))
    }
}

fn normalize_sides(sides: &[Side]) -> Result<Vec<Side>> {
    let mut out = sides.to_vec();
    out.sort();
    out.dedup();
    if out.is_empty() {
        return Err(Error::Config("gamma1 must select at least one boundary part".into()));
    }
    Ok(out)
}

impl Domain {
    pub fn interval(length: f64, gamma1: &[Side]) -> Result<Self> {
        check_length("length", length)?;
        let gamma1 = normalize_sides(gamma1)?;
        if gamma1.iter().any(|s| matches!(s, Side::Bottom | Side::Top)) {
            return Err(Error::Config(
                "an interval boundary consists of the left and right endpoints only".into(),
            ));
        }
        Ok(Self {
            shape: Shape::Interval { length },
            gamma1,
        })
    }

    pub fn rectangle(lx: f64, ly: f64, gamma1: &[Side]) -> Result<Self> {
        check_length("lx", lx)?;
        check_length("ly", ly)?;
        Ok(Self {
            shape: Shape::Rectangle { lx, ly },
            gamma1: normalize_sides(gamma1)?,
        })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn gamma1(&self) -> &[Side] {
        &self.gamma1
    }

    pub fn dim(&self) -> usize {
        match self.shape {
            Shape::Interval { .. } => 1,
            Shape::Rectangle { .. } => 2,
        }
    }

    /// Side lengths; one entry for an interval.
    pub fn lengths(&self) -> Vec<f64> {
        match self.shape {
            Shape::Interval { length } => vec![length],
            Shape::Rectangle { lx, ly } => vec![lx, ly],
        }
    }

    /// Lebesgue measure `m_Ω`.
    pub fn measure(&self) -> f64 {
        self.lengths().iter().product()
    }

    /// Measure of Γ₁: number of endpoints for an interval, total side length for a rectangle.
    pub fn gamma1_measure(&self) -> f64 {
        match self.shape {
            Shape::Interval { .. } => self.gamma1.len() as f64,
            Shape::Rectangle { lx, ly } => self
                .gamma1
                .iter()
                .map(|s| match s {
                    Side::Left | Side::Right => ly,
                    Side::Bottom | Side::Top => lx,
                })
                .sum(),
        }
    }

    /// Sample points on Γ₁: the endpoints of an interval, or `per_side`
    /// midpoint-rule nodes along each selected side of a rectangle.
    pub fn boundary_samples(&self, per_side: usize) -> Vec<(f64, f64)> {
        let mut pts = Vec::new();
        match self.shape {
            Shape::Interval { length } => {
                for s in &self.gamma1 {
                    pts.push((if *s == Side::Left { 0.0 } else { length }, 0.0));
                }
            }
            Shape::Rectangle { lx, ly } => {
                let n = per_side.max(1);
                for s in &self.gamma1 {
                    for i in 0..n {
                        let f = (i as f64 + 0.5) / n as f64;
                        pts.push(match s {
                            Side::Left => (0.0, f * ly),
                            Side::Right => (lx, f * ly),
                            Side::Bottom => (f * lx, 0.0),
                            Side::Top => (f * lx, ly),
                        });
                    }
                }
            }
        }
        pts
    }
}

/// Normalized 1D Neumann cosine `√(2/L)·cos(mπx/L)`, or `1/√L` for `m = 0`.
pub fn cosine(m: usize, length: f64, x: f64) -> f64 {
    if m == 0 {
        1.0 / length.sqrt()
    } else {
        (2.0 / length).sqrt() * (m as f64 * PI * x / length).cos()
    }
}

fn cosine_amplitude(m: usize, length: f64) -> f64 {
    if m == 0 {
        1.0 / length.sqrt()
    } else {
        (2.0 / length).sqrt()
    }
}

fn wave_eigenvalue(m: usize, length: f64) -> f64 {
    let k = m as f64 * PI / length;
    -k * k
}

/// Wavenumber index of a cosine mode. `Line(m)` is the 1-based mode `j = m + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModeIndex {
    Line(usize),
    Plane(usize, usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub index: ModeIndex,
    /// Laplacian eigenvalue, `≤ 0`.
    pub mu: f64,
    /// Amplitude of the normalized eigenfunction.
    pub norm_const: f64,
}

impl Mode {
    pub fn is_constant(&self) -> bool {
        matches!(self.index, ModeIndex::Line(0) | ModeIndex::Plane(0, 0))
    }

    pub fn value(&self, domain: &Domain, x: f64, y: f64) -> f64 {
        match (self.index, domain.shape()) {
            (ModeIndex::Line(m), Shape::Interval { length }) => cosine(m, *length, x),
            (ModeIndex::Plane(m, n), Shape::Rectangle { lx, ly }) => {
                cosine(m, *lx, x) * cosine(n, *ly, y)
            }
            _ => unreachable!("mode index does not match the domain dimension"),
        }
    }
}

/// The `K` Neumann modes closest to zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSet {
    domain: Domain,
    modes: Vec<Mode>,
    degenerate_groups: Vec<Vec<usize>>,
    split_degeneracy: bool,
}

impl ModeSet {
    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn mode(&self, i: usize) -> Result<&Mode> {
        self.modes
            .get(i)
            .ok_or_else(|| Error::Config(format!("mode index {i} out of range (K = {})", self.len())))
    }

    pub fn mus(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.mu).collect()
    }

    /// Index groups (positions in `modes`) sharing a numerically equal eigenvalue.
    pub fn degenerate_groups(&self) -> &[Vec<usize>] {
        &self.degenerate_groups
    }

    /// True when the truncation at `K` cuts through a degenerate eigenvalue.
    pub fn split_degeneracy(&self) -> bool {
        self.split_degeneracy
    }

    /// Largest wavenumber used along each axis.
    pub fn max_wavenumbers(&self) -> Vec<usize> {
        match self.domain.dim() {
            1 => vec![self
                .modes
                .iter()
                .map(|m| match m.index {
                    ModeIndex::Line(i) => i,
                    _ => 0,
                })
                .max()
                .unwrap_or(0)],
            _ => {
                let (mut mx, mut my) = (0, 0);
                for m in &self.modes {
                    if let ModeIndex::Plane(a, b) = m.index {
                        mx = mx.max(a);
                        my = my.max(b);
                    }
                }
                vec![mx, my]
            }
        }
    }
}

fn same_mu(a: f64, b: f64) -> bool {
    (a - b).abs() <= DEGENERACY_RTOL * a.abs().max(b.abs()).max(1.0)
}

/// The `k` largest Neumann eigenvalues with normalized eigenfunction descriptors.
pub fn neumann_modes(domain: &Domain, k: usize) -> Result<ModeSet> {
    if k < 2 {
        return Err(Error::Config(format!("K must be at least 2, got {k}")));
    }
    let mut all: Vec<Mode> = match *domain.shape() {
        Shape::Interval { length } => (0..k)
            .map(|m| Mode {
                index: ModeIndex::Line(m),
                mu: wave_eigenvalue(m, length),
                norm_const: cosine_amplitude(m, length),
            })
            .collect(),
        Shape::Rectangle { lx, ly } => {
            // The k largest eigenvalues use at most k wavenumbers per axis.
            let mut v = Vec::with_capacity(k * k);
            for m in 0..k {
                for n in 0..k {
                    v.push(Mode {
                        index: ModeIndex::Plane(m, n),
                        mu: wave_eigenvalue(m, lx) + wave_eigenvalue(n, ly),
                        norm_const: cosine_amplitude(m, lx) * cosine_amplitude(n, ly),
                    });
                }
            }
            v
        }
    };
    all.sort_by(|a, b| b.mu.total_cmp(&a.mu).then(a.index.cmp(&b.index)));

    // Floating-point ties: re-sort each near-equal run lexicographically.
    let mut start = 0;
    while start < all.len() {
        let mut end = start + 1;
        while end < all.len() && same_mu(all[start].mu, all[end].mu) {
            end += 1;
        }
        all[start..end].sort_by_key(|m| m.index);
        start = end;
    }

    let split_degeneracy = all.len() > k && same_mu(all[k - 1].mu, all[k].mu);
    all.truncate(k);

    let mut degenerate_groups = Vec::new();
    let mut start = 0;
    while start < all.len() {
        let mut end = start + 1;
        while end < all.len() && same_mu(all[start].mu, all[end].mu) {
            end += 1;
        }
        if end - start > 1 {
            degenerate_groups.push((start..end).collect());
        }
        start = end;
    }

    Ok(ModeSet {
        domain: domain.clone(),
        modes: all,
        degenerate_groups,
        split_degeneracy,
    })
}

/// `⟨e_i, e_j⟩` in `L²(Γ₁)` by closed form.
pub fn trace_pairing(modes: &ModeSet, i: usize, j: usize) -> Result<f64> {
    let (a, b) = (modes.mode(i)?, modes.mode(j)?);
    let domain = modes.domain();
    Ok(match (*domain.shape(), a.index, b.index) {
        (Shape::Interval { length }, ModeIndex::Line(p), ModeIndex::Line(q)) => domain
            .gamma1()
            .iter()
            .map(|s| {
                let x = if *s == Side::Left { 0.0 } else { length };
                cosine(p, length, x) * cosine(q, length, x)
            })
            .sum(),
        (Shape::Rectangle { lx, ly }, ModeIndex::Plane(pm, pn), ModeIndex::Plane(qm, qn)) => domain
            .gamma1()
            .iter()
            .map(|s| match s {
                Side::Left | Side::Right if pn == qn => {
                    let x = if *s == Side::Left { 0.0 } else { lx };
                    cosine(pm, lx, x) * cosine(qm, lx, x)
                }
                Side::Bottom | Side::Top if pm == qm => {
                    let y = if *s == Side::Bottom { 0.0 } else { ly };
                    cosine(pn, ly, y) * cosine(qn, ly, y)
                }
                _ => 0.0,
            })
            .sum(),
        _ => unreachable!("mode index does not match the domain dimension"),
    })
}

/// Full `K×K` matrix of [`trace_pairing`] values.
pub fn trace_pairing_matrix(modes: &ModeSet) -> DMatrix<f64> {
    let k = modes.len();
    DMatrix::from_fn(k, k, |i, j| trace_pairing(modes, i, j).expect("indices in range"))
}

fn midpoints(n: usize, length: f64) -> Vec<f64> {
    (0..n).map(|i| (i as f64 + 0.5) * length / n as f64).collect()
}

/// Cosine-collocation (midpoint) grid with the mode evaluation matrix.
///
/// Midpoint quadrature on `M` nodes integrates `cos(pπx/L)` exactly for
/// `0 < p < 2M`, so products of four retained modes are resolved whenever
/// `M > 2·max_wavenumber`; that is the dealiased size.
#[derive(Clone, Debug)]
pub struct CollocationGrid {
    modes: ModeSet,
    axes: Vec<Vec<f64>>,
    weight: f64,
    eval: DMatrix<f64>,
}

impl CollocationGrid {
    /// Grid with `points[d]` midpoint nodes along axis `d`.
    pub fn new(modes: &ModeSet, points: &[usize]) -> Result<Self> {
        let lengths = modes.domain().lengths();
        if points.len() != lengths.len() {
            return Err(Error::Config(format!(
                "grid needs {} axis sizes, got {}",
                lengths.len(),
                points.len()
            )));
        }
        for (axis, (&n, &maxw)) in points.iter().zip(modes.max_wavenumbers().iter()).enumerate() {
            if n <= maxw {
                return Err(Error::Config(format!(
                    "grid axis {axis} has {n} points but must exceed the largest wavenumber {maxw}"
                )));
            }
        }
        let axes: Vec<Vec<f64>> = points
            .iter()
            .zip(&lengths)
            .map(|(&n, &l)| midpoints(n, l))
            .collect();
        let weight = points
            .iter()
            .zip(&lengths)
            .map(|(&n, &l)| l / n as f64)
            .product();
        let coords = Self::coords_of(&axes);
        let domain = modes.domain();
        let eval = DMatrix::from_fn(coords.len(), modes.len(), |p, j| {
            let (x, y) = coords[p];
            modes.modes()[j].value(domain, x, y)
        });
        Ok(Self {
            modes: modes.clone(),
            axes,
            weight,
            eval,
        })
    }

    /// Dealiased grid for cubic nonlinearities: `2·(max wavenumber + 1)` nodes per axis.
    pub fn dealiased(modes: &ModeSet) -> Result<Self> {
        let pts: Vec<usize> = modes.max_wavenumbers().iter().map(|w| 2 * (w + 1)).collect();
        Self::new(modes, &pts)
    }

    fn coords_of(axes: &[Vec<f64>]) -> Vec<(f64, f64)> {
        match axes.len() {
            1 => axes[0].iter().map(|&x| (x, 0.0)).collect(),
            _ => {
                let mut v = Vec::with_capacity(axes[0].len() * axes[1].len());
                for &x in &axes[0] {
                    for &y in &axes[1] {
                        v.push((x, y));
                    }
                }
                v
            }
        }
    }

    pub fn modes(&self) -> &ModeSet {
        &self.modes
    }

    /// Node coordinates, x-major; `y = 0` on an interval.
    pub fn coords(&self) -> Vec<(f64, f64)> {
        Self::coords_of(&self.axes)
    }

    pub fn axis_sizes(&self) -> Vec<usize> {
        self.axes.iter().map(Vec::len).collect()
    }

    pub fn len(&self) -> usize {
        self.eval.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Quadrature weight shared by every node.
    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn integrate(&self, values: &DVector<f64>) -> f64 {
        self.weight * values.sum()
    }

    pub fn inner(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        self.weight * a.dot(b)
    }

    pub fn to_grid(&self, coeffs: &DVector<f64>) -> Result<DVector<f64>> {
        if coeffs.len() != self.modes.len() {
            return Err(Error::Config(format!(
                "coefficient vector has length {}, expected K = {}",
                coeffs.len(),
                self.modes.len()
            )));
        }
        Ok(&self.eval * coeffs)
    }

    pub fn to_coeff(&self, values: &DVector<f64>) -> Result<DVector<f64>> {
        if values.len() != self.len() {
            return Err(Error::Config(format!(
                "grid vector has length {}, expected {}",
                values.len(),
                self.len()
            )));
        }
        Ok(self.eval.tr_mul(values) * self.weight)
    }

    /// Evaluates mode `j` on the grid.
    pub fn mode_values(&self, j: usize) -> DVector<f64> {
        self.eval.column(j).into_owned()
    }

    /// Pseudospectral Laplacian of grid values through the full cosine
    /// interpolant on this grid (all `M` cosines per axis, not only the `K`
    /// retained modes).
    pub fn laplacian(&self, values: &DVector<f64>) -> Result<DVector<f64>> {
        if values.len() != self.len() {
            return Err(Error::Config("grid vector length mismatch".into()));
        }
        let lengths = self.modes.domain().lengths();
        let ops: Vec<DMatrix<f64>> = self
            .axes
            .iter()
            .zip(&lengths)
            .map(|(ax, &l)| second_derivative_matrix(ax.len(), l))
            .collect();
        match ops.len() {
            1 => Ok(&ops[0] * values),
            _ => {
                let (nx, ny) = (self.axes[0].len(), self.axes[1].len());
                // values are x-major: row ix, column iy
                let f = DMatrix::from_row_slice(nx, ny, values.as_slice());
                let lap = &ops[0] * &f + &f * ops[1].transpose();
                Ok(DVector::from_iterator(
                    nx * ny,
                    (0..nx).flat_map(|i| (0..ny).map(move |j| (i, j))).map(|(i, j)| lap[(i, j)]),
                ))
            }
        }
    }
}

/// Second-derivative operator of the cosine interpolant on `n` midpoints of `[0, L]`.
fn second_derivative_matrix(n: usize, length: f64) -> DMatrix<f64> {
    let nf = n as f64;
    let c = |m: usize, i: usize| (m as f64 * PI * (i as f64 + 0.5) / nf).cos();
    let analysis = DMatrix::from_fn(n, n, |m, i| if m == 0 { 1.0 / nf } else { 2.0 / nf } * c(m, i));
    let synthesis = DMatrix::from_fn(n, n, |i, m| {
        let k = m as f64 * PI / length;
        -k * k * c(m, i)
    });
    synthesis * analysis
}
