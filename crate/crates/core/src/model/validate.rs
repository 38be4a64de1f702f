use super::{Horizon, LqGameSpec};
use crate::error::{Error, Result};
use crate::linalg;

/// Outcome of one named structural check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn find(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Converts the first failed check into an error naming it.
    pub fn into_result(self) -> Result<()> {
        match self.checks.into_iter().find(|c| !c.passed) {
            None => Ok(()),
            Some(c) => Err(Error::AssumptionViolated { assumption: c.name, detail: c.detail }),
        }
    }
}

/// Singular-value tolerance of the stabilizability rank test.
pub const PBH_TOL: f64 = 1e-9;

/// Reports, without failing, every structural condition the solvers rely on.
pub fn validate_lq_spec(spec: &LqGameSpec) -> ValidationReport {
    let mut checks = Vec::new();
    let mut push = |name: &str, passed: bool, detail: String| {
        checks.push(Check { name: name.to_string(), passed, detail })
    };

    let mut worst = (f64::INFINITY, String::new());
    for (gi, g) in spec.groups.iter().enumerate() {
        for (si, st) in g.stages.iter().enumerate() {
            for (name, m) in [("Q", &st.q), ("R", &st.r)] {
                let e = linalg::min_sym_eigenvalue(m);
                if e < worst.0 {
                    worst = (e, format!("per_dm[{gi}].stages[{si}].{name}"));
                }
            }
        }
        if let Some(qt) = &g.q_terminal {
            let e = linalg::min_sym_eigenvalue(qt);
            if e < worst.0 {
                worst = (e, format!("per_dm[{gi}].Q_T"));
            }
        }
    }
    push(
        "cost weights positive definite",
        worst.0 > 0.0,
        format!("smallest eigenvalue {:e} in {}", worst.0, worst.1),
    );

    let dims_ok = dimensions_consistent(spec);
    push("dimensions consistent", dims_ok.is_ok(), dims_ok.err().unwrap_or_else(|| "all blocks conform".into()));

    let beta_ok = spec.groups.iter().all(|g| match spec.horizon {
        Horizon::Finite(_) => (0.0..=1.0).contains(&g.beta),
        Horizon::Infinite => (0.0..1.0).contains(&g.beta),
    });
    push("discount in range", beta_ok, format!("betas {:?}", spec.groups.iter().map(|g| g.beta).collect::<Vec<_>>()));

    let nz = &spec.noise;
    let cov_min = [&nz.x0_cov, &nz.y_prev_cov, &nz.w_cov, &nz.xi_cov]
        .iter()
        .map(|m| linalg::min_sym_eigenvalue(m))
        .fold(f64::INFINITY, f64::min);
    push("covariances positive semidefinite", cov_min >= -1e-10, format!("smallest eigenvalue {cov_min:e}"));

    push(
        "primitive independence",
        true,
        "(y_prev, X0), each W_t and each xi_t are independent blocks by construction of the schema".into(),
    );

    if spec.horizon == Horizon::Infinite {
        let a0 = &spec.env_stage(0).a0;
        let rho = linalg::spectral_radius(a0);
        push("A0 stable", rho < 1.0, format!("spectral radius {rho}"));
        for (gi, g) in spec.groups.iter().enumerate() {
            let st = g.stage(0);
            let mode = linalg::uncontrollable_unstable_mode(&st.a, &st.b, PBH_TOL);
            push(
                &format!("stabilizable (group {gi})"),
                mode.is_none(),
                match mode {
                    None => "every eigenvalue with modulus >= 1 passes the PBH rank test".into(),
                    Some(z) => format!("uncontrollable mode {}{:+}i with modulus {}", z.re, z.im, z.norm()),
                },
            );
        }
        push("noise i.i.d.", nz.iid, "time-invariant noise laws".into());
    }
    ValidationReport { checks }
}

fn dimensions_consistent(spec: &LqGameSpec) -> std::result::Result<(), String> {
    let p = spec.env_dim;
    let n0 = spec.env_state_dim;
    for (gi, g) in spec.groups.iter().enumerate() {
        let (n, m) = (g.n(), g.m());
        for st in &g.stages {
            let shapes = [
                (st.a.shape(), (n, n), "A"),
                (st.b.shape(), (n, m), "B"),
                (st.c.shape(), (n, p), "C"),
                (st.q.shape(), (n, n), "Q"),
                (st.r.shape(), (m, m), "R"),
                (st.k.shape(), (p, m), "K"),
                (st.l.shape(), (p, n), "L"),
            ];
            for (got, want, name) in shapes {
                if got != want {
                    return Err(format!("per_dm[{gi}].{name}: expected {want:?}, found {got:?}"));
                }
            }
        }
        for e in &spec.env {
            if e.b1[gi].shape() != (n0, m) || e.b2[gi].shape() != (n0, n) || e.e1[gi].shape() != (p, m) || e.e2[gi].shape() != (p, n) {
                return Err(format!("env blocks of group {gi} do not conform"));
            }
        }
    }
    Ok(())
}
