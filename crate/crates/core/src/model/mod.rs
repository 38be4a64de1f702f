//! Game specifications: the linear-quadratic game and the finite single-stage
//! game, their JSON scenario schema, and structural validation.
//!
//! # Population groups
//!
//! An LQ spec lists decision makers as *groups*. A group with `count = c`
//! stands for `c` identical DMs playing identical strategies; every quantity
//! attached to it (state, control, noise) is the *average over its members*.
//! Because the environment only sees population averages, this aggregation
//! is exact and lets `N = 1000` games be solved at the cost of one block.
//! A group with `count = 1` is an ordinary individual DM.

mod finite;
mod schema;
mod validate;

pub use finite::{FiniteGameSpec, JointIndex};
pub use schema::{load_spec, parse_decimal, parse_rational, spec_to_json, spec_to_string, Spec};
pub use validate::{validate_lq_spec, Check, ValidationReport};

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horizon {
    Finite(usize),
    Infinite,
}

impl Horizon {
    pub fn finite(self) -> Option<usize> {
        match self {
            Horizon::Finite(t) => Some(t),
            Horizon::Infinite => None,
        }
    }
}

/// Per-stage dynamics and cost matrices of one DM group.
///
/// State `x' = A x + B u + C y + w`; stage cost
/// `x'Qx + u'Ru + 2 y'(K u + L x)` with `K: p x m` and `L: p x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DmStage {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub q: Mat,
    pub r: Mat,
    pub k: Mat,
    pub l: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DmGroup {
    pub count: usize,
    pub beta: f64,
    /// One entry (broadcast over time) or one per stage.
    pub stages: Vec<DmStage>,
    /// Terminal weight; present exactly when the horizon is finite.
    pub q_terminal: Option<Mat>,
}

impl DmGroup {
    pub fn stage(&self, t: usize) -> &DmStage {
        &self.stages[t.min(self.stages.len() - 1)]
    }
    pub fn n(&self) -> usize {
        self.stages[0].a.nrows()
    }
    pub fn m(&self) -> usize {
        self.stages[0].b.ncols()
    }
}

/// Environment equations at one stage:
/// `x0' = A0 x0 + sum_g (c_g/N)(B1_g u_g + B2_g x_g) + w0` and
/// `y = D x0 + sum_g (c_g/N)(E1_g u_g + E2_g x_g) + xi`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvStage {
    pub a0: Mat,
    pub d: Mat,
    pub b1: Vec<Mat>,
    pub b2: Vec<Mat>,
    pub e1: Vec<Mat>,
    pub e2: Vec<Mat>,
}

/// Gaussian primitives. Stacked vectors follow the state ordering
/// `X = (x0, x_1, ..., x_G)`; `W` stacks `(w0, w_1, ..., w_G)` the same way.
/// Noise laws are time-invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct Noise {
    pub x0_mean: Vector,
    pub x0_cov: Mat,
    pub y_prev_mean: Vector,
    pub y_prev_cov: Mat,
    /// `cov(y_{-1}, X_0)`, `p x dim(X)`.
    pub y_prev_x0_cov: Mat,
    pub w_mean: Vector,
    pub w_cov: Mat,
    pub xi_mean: Vector,
    pub xi_cov: Mat,
    pub iid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LqGameSpec {
    pub n_dm: usize,
    pub horizon: Horizon,
    pub env_dim: usize,
    pub env_state_dim: usize,
    pub groups: Vec<DmGroup>,
    /// One entry (broadcast) or one per stage.
    pub env: Vec<EnvStage>,
    pub noise: Noise,
}

impl LqGameSpec {
    pub fn env_stage(&self, t: usize) -> &EnvStage {
        &self.env[t.min(self.env.len() - 1)]
    }

    /// Dimension of the stacked state `X`.
    pub fn state_dim(&self) -> usize {
        self.env_state_dim + self.groups.iter().map(|g| g.n()).sum::<usize>()
    }

    /// Offset of group `g`'s block inside `X` (and `W`).
    pub fn group_offset(&self, g: usize) -> usize {
        self.env_state_dim + self.groups[..g].iter().map(|b| b.n()).sum::<usize>()
    }

    /// Population weight `c_g / N`.
    pub fn weight(&self, g: usize) -> f64 {
        self.groups[g].count as f64 / self.n_dm as f64
    }

    /// Number of stages the solvers iterate over; `None` when infinite.
    pub fn horizon_len(&self) -> Option<usize> {
        self.horizon.finite()
    }

    fn group_block_is_isolated(&self, g: usize) -> bool {
        let (off, n) = (self.group_offset(g), self.groups[g].n());
        let dim = self.state_dim();
        let isolated = |m: &Mat| {
            (0..dim).all(|i| {
                (off..off + n).all(|j| {
                    let inside = (off..off + n).contains(&i);
                    inside || (m[(i, j)] == 0.0 && m[(j, i)] == 0.0)
                })
            })
        };
        let yx = &self.noise.y_prev_x0_cov;
        let yx_zero = (0..yx.nrows()).all(|i| (off..off + n).all(|j| yx[(i, j)] == 0.0));
        isolated(&self.noise.x0_cov) && isolated(&self.noise.w_cov) && yx_zero
    }

    /// Splits one member out of group `g`: the result has group `g` replaced
    /// by a single DM (count 1) followed by the remaining `c - 1` members.
    ///
    /// Members are assumed i.i.d., so the individual covariance is
    /// `c * cov(average)` and the rest-average covariance is
    /// `c/(c-1) * cov(average)`. Requires the group's noise blocks to be
    /// uncorrelated with every other primitive.
    pub fn split_member(&self, g: usize) -> Result<LqGameSpec> {
        let c = self.groups[g].count;
        if c < 2 {
            return Err(Error::InvalidValue {
                field: format!("per_dm[{g}].count"),
                message: "a group needs at least two members to split".into(),
            });
        }
        if !self.group_block_is_isolated(g) {
            return Err(Error::Unsupported(format!(
                "group {g} has noise correlated with other primitives; members are not separable"
            )));
        }
        let cf = c as f64;
        self.regroup(g, &[(1, cf), (c - 1, cf / (c - 1) as f64)])
    }

    /// Replaces group `g` by a group of `count` i.i.d. members whose
    /// individual law equals that of the current group's members
    /// (covariances of the average are rescaled by `c_old / count`).
    pub fn with_group_count(&self, g: usize, count: usize) -> Result<LqGameSpec> {
        if count == 0 {
            return Err(Error::InvalidValue {
                field: "count".into(),
                message: "group count must be positive".into(),
            });
        }
        if !self.group_block_is_isolated(g) {
            return Err(Error::Unsupported(format!(
                "group {g} has noise correlated with other primitives; cannot rescale"
            )));
        }
        let c = self.groups[g].count as f64;
        self.regroup(g, &[(count, c / count as f64)])
    }

    /// Replaces group `g` by consecutive copies with the given
    /// `(count, covariance scale)` pairs; means are unchanged.
    fn regroup(&self, g: usize, parts: &[(usize, f64)]) -> Result<LqGameSpec> {
        let old_off = self.group_offset(g);
        let n = self.groups[g].n();
        let old_dim = self.state_dim();
        let new_dim = old_dim + n * (parts.len() - 1);
        // Maps each new coordinate to (old coordinate, part index if inside group g).
        let mut map: Vec<(usize, Option<usize>)> = Vec::with_capacity(new_dim);
        for i in 0..old_off {
            map.push((i, None));
        }
        for (pi, _) in parts.iter().enumerate() {
            for j in 0..n {
                map.push((old_off + j, Some(pi)));
            }
        }
        for i in old_off + n..old_dim {
            map.push((i, None));
        }
        let remap_vec = |v: &Vector| Vector::from_iterator(new_dim, map.iter().map(|&(i, _)| v[i]));
        let remap_cov = |m: &Mat| {
            Mat::from_fn(new_dim, new_dim, |r, c| match (map[r], map[c]) {
                ((i, Some(a)), (j, Some(b))) => {
                    if a == b {
                        m[(i, j)] * parts[a].1
                    } else {
                        0.0
                    }
                }
                ((i, _), (j, _)) => m[(i, j)],
            })
        };
        let remap_cols = |m: &Mat| Mat::from_fn(m.nrows(), new_dim, |r, c| m[(r, map[c].0)]);

        let mut out = self.clone();
        let mut groups = Vec::new();
        for (idx, grp) in self.groups.iter().enumerate() {
            if idx == g {
                for &(count, _) in parts {
                    let mut copy = grp.clone();
                    copy.count = count;
                    groups.push(copy);
                }
            } else {
                groups.push(grp.clone());
            }
        }
        out.groups = groups;
        out.n_dm = out.groups.iter().map(|b| b.count).sum();
        for st in out.env.iter_mut() {
            for list in [&mut st.b1, &mut st.b2, &mut st.e1, &mut st.e2] {
                let blk = list[g].clone();
                list.splice(g..=g, std::iter::repeat_n(blk, parts.len()));
            }
        }
        let nz = &self.noise;
        out.noise = Noise {
            x0_mean: remap_vec(&nz.x0_mean),
            x0_cov: remap_cov(&nz.x0_cov),
            y_prev_mean: nz.y_prev_mean.clone(),
            y_prev_cov: nz.y_prev_cov.clone(),
            y_prev_x0_cov: remap_cols(&nz.y_prev_x0_cov),
            w_mean: remap_vec(&nz.w_mean),
            w_cov: remap_cov(&nz.w_cov),
            xi_mean: nz.xi_mean.clone(),
            xi_cov: nz.xi_cov.clone(),
            iid: nz.iid,
        };
        Ok(out)
    }

    /// Sub-vector of a stacked `X`/`W` vector belonging to group `g`.
    pub fn group_slice(&self, v: &Vector, g: usize) -> Vector {
        v.rows(self.group_offset(g), self.groups[g].n()).into_owned()
    }
}

#[cfg(test)]
mod tests {
    use crate::scenarios;

    #[test]
    fn split_preserves_population_law() {
        let spec = scenarios::example2(&scenarios::Example2Params::unit(), 4);
        let split = spec.split_member(0).unwrap();
        assert_eq!(split.n_dm, 4);
        assert_eq!(split.groups.len(), 2);
        assert_eq!(split.groups[0].count, 1);
        assert_eq!(split.groups[1].count, 3);
        // The average of the four members has variance 1/4; the individual 1,
        // the rest-average 1/3: (1 + 3*3*(1/3)) / 16 = 1/4.
        let c = &split.noise.x0_cov;
        assert!((c[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((c[(1, 1)] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(c[(0, 1)], 0.0);
    }

    #[test]
    fn rescaling_count_scales_average_covariance() {
        let spec = scenarios::example2(&scenarios::Example2Params::unit(), 1);
        let big = spec.with_group_count(0, 10).unwrap();
        assert_eq!(big.n_dm, 10);
        assert!((big.noise.x0_cov[(0, 0)] - 0.1).abs() < 1e-16);
        assert!((big.noise.w_cov[(0, 0)] - 0.1).abs() < 1e-16);
    }
}
