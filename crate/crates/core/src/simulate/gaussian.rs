//! Exact moments of affine functions of independent Gaussian blocks.
//!
//! Every random quantity of a closed loop with affine policies is an affine
//! function of the stacked primitives. Each primitive block is written as
//! `mean + factor * xi` with `xi` standard normal, so an [`Affine`] value is
//! `offset + coef * xi` over one global standard-normal vector and all first
//! and second moments are plain matrix products.

use std::ops::Range;

use crate::linalg::{self, Mat, Vector};

/// A Gaussian vector given by its mean and covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLaw {
    pub mean: Vector,
    pub cov: Mat,
}

impl GaussianLaw {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn degenerate(mean: Vector) -> Self {
        let d = mean.len();
        GaussianLaw { mean, cov: Mat::zeros(d, d) }
    }
}

/// Layout of the standard-normal coordinates behind a set of independent
/// Gaussian primitive blocks.
#[derive(Debug, Clone, Default)]
pub struct PrimitiveLayout {
    blocks: Vec<(String, Range<usize>, GaussianLaw, Mat)>,
    dim: usize,
}

impl PrimitiveLayout {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers an independent block and returns its index.
    pub fn push(&mut self, name: impl Into<String>, law: GaussianLaw) -> usize {
        let factor = linalg::psd_sqrt(&law.cov);
        let r = self.dim..self.dim + factor.ncols();
        self.dim += factor.ncols();
        self.blocks.push((name.into(), r, law, factor));
        self.blocks.len() - 1
    }

    /// Number of standard-normal coordinates.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_name(&self, idx: usize) -> &str {
        &self.blocks[idx].0
    }

    pub fn block_range(&self, idx: usize) -> Range<usize> {
        self.blocks[idx].1.clone()
    }

    pub fn block_law(&self, idx: usize) -> &GaussianLaw {
        &self.blocks[idx].2
    }

    /// The block as an affine function of the global coordinates.
    pub fn block(&self, idx: usize) -> Affine {
        let (_, r, law, factor) = &self.blocks[idx];
        let mut coef = Mat::zeros(law.dim(), self.dim);
        coef.view_mut((0, r.start), (law.dim(), r.len())).copy_from(factor);
        Affine { coef, offset: law.mean.clone() }
    }

    /// Draws a realization of block `idx` from the standard-normal coordinates.
    pub fn realize(&self, idx: usize, xi: &[f64]) -> Vector {
        let (_, r, law, factor) = &self.blocks[idx];
        &law.mean + factor * Vector::from_column_slice(&xi[r.clone()])
    }
}

/// `offset + coef * xi` for the global standard-normal vector `xi`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub coef: Mat,
    pub offset: Vector,
}

impl Affine {
    pub fn zeros(dim: usize, prim_dim: usize) -> Self {
        Affine { coef: Mat::zeros(dim, prim_dim), offset: Vector::zeros(dim) }
    }

    pub fn constant(v: Vector, prim_dim: usize) -> Self {
        Affine { coef: Mat::zeros(v.len(), prim_dim), offset: v }
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn prim_dim(&self) -> usize {
        self.coef.ncols()
    }

    pub fn mean(&self) -> &Vector {
        &self.offset
    }

    pub fn cov(&self) -> Mat {
        linalg::sym(&(&self.coef * self.coef.transpose()))
    }

    /// `cov(self, other)`.
    pub fn cross_cov(&self, other: &Affine) -> Mat {
        &self.coef * other.coef.transpose()
    }

    pub fn law(&self) -> GaussianLaw {
        GaussianLaw { mean: self.offset.clone(), cov: self.cov() }
    }

    /// `m * self`.
    pub fn map(&self, m: &Mat) -> Affine {
        Affine { coef: m * &self.coef, offset: m * &self.offset }
    }

    pub fn add(&self, other: &Affine) -> Affine {
        Affine { coef: &self.coef + &other.coef, offset: &self.offset + &other.offset }
    }

    pub fn sub(&self, other: &Affine) -> Affine {
        Affine { coef: &self.coef - &other.coef, offset: &self.offset - &other.offset }
    }

    pub fn add_const(&self, v: &Vector) -> Affine {
        Affine { coef: self.coef.clone(), offset: &self.offset + v }
    }

    /// `self += m * other` without materializing the product twice.
    pub fn add_mapped(&mut self, m: &Mat, other: &Affine) {
        self.coef.gemm(1.0, m, &other.coef, 1.0);
        self.offset.gemv(1.0, m, &other.offset, 1.0);
    }

    pub fn rows(&self, start: usize, len: usize) -> Affine {
        Affine { coef: self.coef.rows(start, len).into_owned(), offset: self.offset.rows(start, len).into_owned() }
    }

    pub fn stack(parts: &[&Affine]) -> Affine {
        let prim = parts.first().map_or(0, |p| p.prim_dim());
        let coefs: Vec<&Mat> = parts.iter().map(|p| &p.coef).collect();
        let offs: Vec<&Vector> = parts.iter().map(|p| &p.offset).collect();
        let coef = if coefs.is_empty() { Mat::zeros(0, prim) } else { linalg::vstack(&coefs) };
        Affine { coef, offset: linalg::vstack_vec(&offs) }
    }

    /// Widens the coefficient matrix to `prim_dim` columns (new coordinates
    /// do not enter).
    pub fn widen(&self, prim_dim: usize) -> Affine {
        let mut coef = Mat::zeros(self.dim(), prim_dim);
        coef.view_mut((0, 0), (self.dim(), self.prim_dim())).copy_from(&self.coef);
        Affine { coef, offset: self.offset.clone() }
    }

    /// Realization for a given standard-normal vector.
    pub fn eval(&self, xi: &Vector) -> Vector {
        &self.offset + &self.coef * xi
    }
}

/// `E[a' m b]`.
pub fn expect_bilinear(a: &Affine, m: &Mat, b: &Affine) -> f64 {
    let mb = m * &b.coef;
    a.offset.dot(&(m * &b.offset)) + a.coef.component_mul(&mb).sum()
}

/// `E[a' m a]`.
pub fn expect_quadratic(a: &Affine, m: &Mat) -> f64 {
    expect_bilinear(a, m, a)
}

/// Gain `k` of the conditional mean `E[a | b] = E[a] + k (b - E[b])`,
/// using the pseudo-inverse so degenerate observations are allowed.
pub fn conditioning_gain(cov_ab: &Mat, cov_b: &Mat) -> Mat {
    cov_ab * linalg::pinv(cov_b)
}

/// Conditional mean `E[a | b]` as an affine function of the primitives.
pub fn conditional_mean(a: &Affine, b: &Affine) -> Affine {
    let k = conditioning_gain(&a.cross_cov(b), &b.cov());
    let mut res = Affine::constant(a.offset.clone() - &k * &b.offset, a.prim_dim());
    res.add_mapped(&k, b);
    res
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn layout_2() -> (PrimitiveLayout, Affine, Affine) {
        let mut lay = PrimitiveLayout::new();
        let a = lay.push("a", GaussianLaw { mean: Vector::from_vec(vec![1.0, -1.0]), cov: Mat::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]) });
        let b = lay.push("b", GaussianLaw { mean: Vector::from_vec(vec![0.5]), cov: Mat::from_element(1, 1, 4.0) });
        (lay.clone(), lay.block(a), lay.block(b))
    }

    #[test]
    fn block_moments_reproduce_law() {
        let (_, a, b) = layout_2();
        assert!((a.cov() - Mat::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).amax() < 1e-14);
        assert_eq!(b.cov()[(0, 0)], 4.0);
        assert_eq!(a.cross_cov(&b).amax(), 0.0);
    }

    #[test]
    fn quadratic_expectation_matches_trace_formula() {
        let (_, a, _) = layout_2();
        let m = Mat::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 3.0]);
        // E[a'Ma] = tr(M cov) + mu'M mu
        let mu = a.mean();
        let want = (&m * a.cov()).trace() + mu.dot(&(&m * mu));
        assert!((expect_quadratic(&a, &m) - want).abs() < 1e-13);
    }

    #[test]
    fn conditional_mean_of_sum() {
        // a = x + y with independent x, y; E[a | x] = x + E[y].
        let mut lay = PrimitiveLayout::new();
        let x = lay.push("x", GaussianLaw { mean: Vector::from_element(1, 1.0), cov: Mat::from_element(1, 1, 2.0) });
        let y = lay.push("y", GaussianLaw { mean: Vector::from_element(1, 3.0), cov: Mat::from_element(1, 1, 5.0) });
        let (x, y) = (lay.block(x), lay.block(y));
        let a = x.add(&y);
        let cm = conditional_mean(&a, &x);
        let want = x.add_const(&Vector::from_element(1, 3.0));
        assert!((cm.coef - want.coef).amax() < 1e-14);
        assert!((cm.offset - want.offset).amax() < 1e-14);
    }

    #[test]
    fn degenerate_conditioning_uses_pseudo_inverse() {
        let mut lay = PrimitiveLayout::new();
        let x = lay.push("x", GaussianLaw::degenerate(Vector::from_element(1, 2.0)));
        let x = lay.block(x);
        let cm = conditional_mean(&x, &x);
        assert_eq!(cm.offset[0], 2.0);
    }

    #[test]
    fn monte_carlo_agrees_with_exact_moments() {
        let (lay, a, b) = layout_2();
        let m = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let z = a.add_const(&Vector::from_vec(vec![0.0, 0.0])).add(&Affine::stack(&[&b, &b]));
        let exact = expect_quadratic(&z, &m);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 40_000;
        let mut samples = Vec::with_capacity(n);
        for _ in 0..n {
            let xi: Vec<f64> = (0..lay.dim()).map(|_| StandardNormal.sample(&mut rng)).collect();
            let v = z.eval(&Vector::from_vec(xi));
            samples.push(v.dot(&(&m * &v)));
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - exact).abs() <= 4.0 * (var / n as f64).sqrt(), "{mean} vs {exact}");
    }
}
