use num_rational::BigRational;
use num_traits::{One, Signed};
use serde_json::{json, Value};

use super::schema::{array, count, field, rat, rational};
use crate::error::{Error, Result};

/// Single-stage game with finite action sets.
///
/// Costs and probabilities are exact rationals; the environment variable
/// `y = g(u, xi)` is stored as an index into `env_values`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteGameSpec {
    pub n_dm: usize,
    /// Action labels per DM.
    pub actions: Vec<Vec<String>>,
    pub env_values: Vec<BigRational>,
    pub disturbance_labels: Vec<String>,
    pub disturbance_pmf: Vec<BigRational>,
    /// `outcome[joint * n_xi + xi]` is the index of `y` in `env_values`.
    pub outcome: Vec<usize>,
    /// `cost[i][action][y]`.
    pub cost: Vec<Vec<Vec<BigRational>>>,
}

/// Mixed-radix indexing of joint action profiles, DM 0 most significant.
#[derive(Debug, Clone)]
pub struct JointIndex {
    sizes: Vec<usize>,
    strides: Vec<usize>,
    total: u128,
}

impl JointIndex {
    pub fn new(sizes: &[usize]) -> Self {
        let mut strides = vec![1usize; sizes.len()];
        let mut total: u128 = 1;
        for i in (0..sizes.len()).rev() {
            strides[i] = total.min(usize::MAX as u128) as usize;
            total = total.saturating_mul(sizes[i] as u128);
        }
        JointIndex { sizes: sizes.to_vec(), strides, total }
    }
    pub fn total(&self) -> u128 {
        self.total
    }
    pub fn encode(&self, profile: &[usize]) -> usize {
        profile.iter().zip(&self.strides).map(|(u, s)| u * s).sum()
    }
    pub fn decode(&self, mut idx: usize) -> Vec<usize> {
        self.strides
            .iter()
            .map(|&s| {
                let u = idx / s;
                idx %= s;
                u
            })
            .collect()
    }
    /// Index of the profile with DM `i`'s action replaced by `a`.
    pub fn with_action(&self, idx: usize, i: usize, a: usize) -> usize {
        let cur = (idx / self.strides[i]) % self.sizes[i];
        idx - cur * self.strides[i] + a * self.strides[i]
    }
    pub fn action_of(&self, idx: usize, i: usize) -> usize {
        (idx / self.strides[i]) % self.sizes[i]
    }
}

impl FiniteGameSpec {
    pub fn joint_index(&self) -> JointIndex {
        JointIndex::new(&self.actions.iter().map(|a| a.len()).collect::<Vec<_>>())
    }

    pub fn n_disturbances(&self) -> usize {
        self.disturbance_pmf.len()
    }

    /// Index of `y` for joint profile index `joint` and disturbance `xi`.
    pub fn outcome_of(&self, joint: usize, xi: usize) -> usize {
        self.outcome[joint * self.n_disturbances() + xi]
    }

    pub(crate) fn from_json(root: &Value) -> Result<Self> {
        let n_dm = count(field(root, "n_dm", "$")?, "$.n_dm")?;
        if n_dm == 0 {
            return Err(Error::parse("$.n_dm", "at least one DM is required"));
        }
        let acts = array(field(root, "actions", "$")?, "$.actions")?;
        if acts.len() != n_dm {
            return Err(Error::dim("$.actions", format!("{n_dm} action sets"), acts.len()));
        }
        let mut actions = Vec::new();
        for (i, a) in acts.iter().enumerate() {
            let loc = format!("$.actions[{i}]");
            let labels: Vec<String> = array(a, &loc)?
                .iter()
                .enumerate()
                .map(|(j, v)| match v {
                    Value::String(s) => Ok(s.clone()),
                    Value::Number(n) => Ok(n.to_string()),
                    _ => Err(Error::parse(format!("{loc}[{j}]"), "expected an action label")),
                })
                .collect::<Result<_>>()?;
            if labels.is_empty() {
                return Err(Error::parse(&loc, "action set must be non-empty"));
            }
            actions.push(labels);
        }
        let env_values: Vec<BigRational> = array(field(root, "env_values", "$")?, "$.env_values")?
            .iter()
            .enumerate()
            .map(|(j, v)| rational(v, &format!("$.env_values[{j}]")))
            .collect::<Result<_>>()?;
        for (a, x) in env_values.iter().enumerate() {
            if env_values[..a].contains(x) {
                return Err(Error::parse(format!("$.env_values[{a}]"), "duplicate environment value"));
            }
        }
        let dist = field(root, "disturbance", "$")?;
        let pmf: Vec<BigRational> = array(field(dist, "pmf", "$.disturbance")?, "$.disturbance.pmf")?
            .iter()
            .enumerate()
            .map(|(j, v)| rational(v, &format!("$.disturbance.pmf[{j}]")))
            .collect::<Result<_>>()?;
        let labels: Vec<String> = match dist.get("values") {
            Some(v) => array(v, "$.disturbance.values")?
                .iter()
                .map(|x| match x {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect(),
            None => (0..pmf.len()).map(|j| j.to_string()).collect(),
        };
        if labels.len() != pmf.len() || pmf.is_empty() {
            return Err(Error::dim("$.disturbance", format!("{} values", pmf.len()), labels.len()));
        }
        if pmf.iter().any(|p| p.is_negative()) {
            return Err(Error::InvalidValue { field: "$.disturbance.pmf".into(), message: "negative probability".into() });
        }
        let total: BigRational = pmf.iter().cloned().sum();
        if total != BigRational::one() {
            return Err(Error::InvalidValue {
                field: "$.disturbance.pmf".into(),
                message: format!("probabilities sum to {total}, not 1"),
            });
        }

        let idx = JointIndex::new(&actions.iter().map(|a| a.len()).collect::<Vec<_>>());
        let n_xi = pmf.len();
        let slots = idx.total().saturating_mul(n_xi as u128);
        if slots > 1u128 << 32 {
            return Err(Error::BudgetExceeded { size: slots, budget: 1u128 << 32 });
        }
        let mut outcome: Vec<Option<usize>> = vec![None; slots as usize];
        for (e, entry) in array(field(root, "outcome", "$")?, "$.outcome")?.iter().enumerate() {
            let loc = format!("$.outcome[{e}]");
            let u: Vec<usize> = array(field(entry, "u", &loc)?, &format!("{loc}.u"))?
                .iter()
                .enumerate()
                .map(|(j, v)| count(v, &format!("{loc}.u[{j}]")))
                .collect::<Result<_>>()?;
            if u.len() != n_dm || u.iter().zip(&actions).any(|(a, set)| *a >= set.len()) {
                return Err(Error::parse(format!("{loc}.u"), "action tuple out of range"));
            }
            let xi = match entry.get("xi") {
                Some(v) => count(v, &format!("{loc}.xi"))?,
                None => 0,
            };
            if xi >= n_xi {
                return Err(Error::parse(format!("{loc}.xi"), "disturbance index out of range"));
            }
            let y = rational(field(entry, "y", &loc)?, &format!("{loc}.y"))?;
            let yi = env_values
                .iter()
                .position(|v| *v == y)
                .ok_or_else(|| Error::parse(format!("{loc}.y"), format!("{y} is not a declared environment value")))?;
            let slot = &mut outcome[idx.encode(&u) * n_xi + xi];
            if slot.is_some() {
                return Err(Error::parse(&loc, "duplicate outcome entry"));
            }
            *slot = Some(yi);
        }
        let outcome = outcome
            .into_iter()
            .enumerate()
            .map(|(s, o)| {
                o.ok_or_else(|| {
                    Error::parse(
                        "$.outcome",
                        format!("no entry for profile {:?} with disturbance {}", idx.decode(s / n_xi), s % n_xi),
                    )
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let costs = array(field(root, "cost", "$")?, "$.cost")?;
        if costs.len() != n_dm {
            return Err(Error::dim("$.cost", format!("{n_dm} cost tables"), costs.len()));
        }
        let mut cost = Vec::new();
        for (i, table) in costs.iter().enumerate() {
            let loc = format!("$.cost[{i}]");
            let rows = array(table, &loc)?;
            if rows.len() != actions[i].len() {
                return Err(Error::dim(&loc, format!("{} action rows", actions[i].len()), rows.len()));
            }
            let mut t = Vec::new();
            for (a, row) in rows.iter().enumerate() {
                let rloc = format!("{loc}[{a}]");
                let vals = array(row, &rloc)?;
                if vals.len() != env_values.len() {
                    return Err(Error::dim(&rloc, format!("{} env columns", env_values.len()), vals.len()));
                }
                t.push(
                    vals.iter()
                        .enumerate()
                        .map(|(j, v)| rational(v, &format!("{rloc}[{j}]")))
                        .collect::<Result<Vec<_>>>()?,
                );
            }
            cost.push(t);
        }
        Ok(FiniteGameSpec {
            n_dm,
            actions,
            env_values,
            disturbance_labels: labels,
            disturbance_pmf: pmf,
            outcome,
            cost,
        })
    }

    pub(crate) fn to_json(&self) -> Value {
        let idx = self.joint_index();
        let n_xi = self.n_disturbances();
        let outcome: Vec<Value> = (0..self.outcome.len())
            .map(|s| {
                json!({
                    "u": idx.decode(s / n_xi).iter().map(|a| a.to_string()).collect::<Vec<_>>(),
                    "xi": (s % n_xi).to_string(),
                    "y": rat(&self.env_values[self.outcome[s]]),
                })
            })
            .collect();
        json!({
            "kind": "finite",
            "n_dm": self.n_dm.to_string(),
            "actions": self.actions,
            "env_values": self.env_values.iter().map(rat).collect::<Vec<_>>(),
            "disturbance": {
                "values": self.disturbance_labels,
                "pmf": self.disturbance_pmf.iter().map(rat).collect::<Vec<_>>(),
            },
            "outcome": outcome,
            "cost": self.cost.iter().map(|t| t.iter().map(|r| r.iter().map(rat).collect::<Vec<_>>()).collect::<Vec<_>>()).collect::<Vec<_>>(),
        })
    }

    /// True when all DMs share action sets and costs and the outcome map is
    /// invariant under permuting the DMs.
    pub fn is_symmetric(&self) -> bool {
        self.actions.windows(2).all(|w| w[0] == w[1]) && self.cost.windows(2).all(|w| w[0] == w[1]) && {
            let idx = self.joint_index();
            let n_xi = self.n_disturbances();
            (0..self.outcome.len()).all(|s| {
                let mut u = idx.decode(s / n_xi);
                u.sort_unstable();
                self.outcome[idx.encode(&u) * n_xi + s % n_xi] == self.outcome[s]
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{load_spec, spec_to_string, Spec};
    use crate::scenarios;

    #[test]
    fn joint_index_round_trip() {
        let idx = JointIndex::new(&[3, 2, 4]);
        assert_eq!(idx.total(), 24);
        for s in 0..24 {
            assert_eq!(idx.encode(&idx.decode(s)), s);
        }
        let s = idx.encode(&[2, 1, 3]);
        assert_eq!(idx.decode(idx.with_action(s, 1, 0)), vec![2, 0, 3]);
        assert_eq!(idx.action_of(s, 2), 3);
    }

    #[test]
    fn example1_loads_and_round_trips() {
        let spec = Spec::Finite(scenarios::example1(2));
        let text = spec_to_string(&spec);
        let back = load_spec(&text).unwrap();
        assert_eq!(back, spec);
        let Spec::Finite(f) = back else { unreachable!() };
        assert_eq!(f.env_values.len(), 5);
        assert!(f.is_symmetric());
    }

    #[test]
    fn missing_outcome_is_reported() {
        let spec = Spec::Finite(scenarios::example1(2));
        let mut v = crate::model::spec_to_json(&spec);
        v["outcome"].as_array_mut().unwrap().pop();
        match load_spec(&v.to_string()) {
            Err(Error::Parse { location, message }) => {
                assert_eq!(location, "$.outcome");
                assert!(message.contains("[2, 2]"), "{message}");
            }
            other => panic!("expected totality error, got {other:?}"),
        }
    }

    #[test]
    fn pmf_must_sum_to_one() {
        let spec = Spec::Finite(scenarios::example1(1));
        let mut v = crate::model::spec_to_json(&spec);
        v["disturbance"]["pmf"][0] = Value::String("0.9".into());
        assert!(matches!(load_spec(&v.to_string()), Err(Error::InvalidValue { .. })));
    }
}
