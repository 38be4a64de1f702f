//! JSON scenario documents.
//!
//! Every number is written as a decimal string. Matrices are row-major
//! arrays of rows. `"p/q"` fractions are accepted wherever a number is
//! expected, which keeps hand-written finite-game specs exact.

use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde_json::{json, Map, Value};

use super::finite::FiniteGameSpec;
use super::{DmGroup, DmStage, EnvStage, Horizon, LqGameSpec, Noise};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};

#[derive(Debug, Clone, PartialEq)]
pub enum Spec {
    Lq(LqGameSpec),
    Finite(FiniteGameSpec),
}

/// Parses and validates a scenario document.
pub fn load_spec(text: &str) -> Result<Spec> {
    let root: Value = serde_json::from_str(text).map_err(|e| {
        Error::parse(format!("line {} column {}", e.line(), e.column()), e.to_string())
    })?;
    let kind = field(&root, "kind", "$")?
        .as_str()
        .ok_or_else(|| Error::parse("$.kind", "expected a string"))?;
    match kind {
        "lq" => Ok(Spec::Lq(parse_lq(&root)?)),
        "finite" => Ok(Spec::Finite(FiniteGameSpec::from_json(&root)?)),
        other => Err(Error::parse("$.kind", format!("unknown kind {other:?}; expected \"lq\" or \"finite\""))),
    }
}

pub fn spec_to_json(spec: &Spec) -> Value {
    match spec {
        Spec::Lq(s) => lq_to_json(s),
        Spec::Finite(f) => f.to_json(),
    }
}

pub fn spec_to_string(spec: &Spec) -> String {
    serde_json::to_string_pretty(&spec_to_json(spec)).expect("spec serializes")
}

// ---------------------------------------------------------------------------
// scalar parsing

/// Exact rational from `"-1.25"`, `"3e-2"`, `"7"` or `"2/3"`.
pub fn parse_rational(s: &str) -> std::result::Result<BigRational, String> {
    let t = s.trim();
    if let Some((p, q)) = t.split_once('/') {
        let p = BigInt::from_str(p.trim()).map_err(|_| format!("bad numerator in {s:?}"))?;
        let q = BigInt::from_str(q.trim()).map_err(|_| format!("bad denominator in {s:?}"))?;
        if q.is_zero() {
            return Err(format!("zero denominator in {s:?}"));
        }
        return Ok(BigRational::new(p, q));
    }
    let (mantissa, exp) = match t.find(['e', 'E']) {
        Some(i) => (&t[..i], t[i + 1..].parse::<i32>().map_err(|_| format!("bad exponent in {s:?}"))?),
        None => (t, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty()
        || !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit())
    {
        return Err(format!("not a decimal number: {s:?}"));
    }
    let all: String = format!("{int_part}{frac_part}");
    let mut num = BigInt::from_str(if all.is_empty() { "0" } else { &all }).map_err(|e| e.to_string())?;
    if neg {
        num = -num;
    }
    let scale = exp - frac_part.len() as i32;
    let ten = BigInt::from(10u32);
    let r = if scale >= 0 {
        BigRational::from_integer(num * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(num, num_traits::pow(ten, (-scale) as usize))
    };
    Ok(r)
}

/// Finite `f64` from a decimal string or a `p/q` fraction.
pub fn parse_decimal(s: &str) -> std::result::Result<f64, String> {
    let t = s.trim();
    let v = if let Some((p, q)) = t.split_once('/') {
        let p: f64 = p.trim().parse().map_err(|_| format!("bad numerator in {s:?}"))?;
        let q: f64 = q.trim().parse().map_err(|_| format!("bad denominator in {s:?}"))?;
        p / q
    } else {
        // Reject the "inf"/"nan" spellings that Rust's parser accepts.
        if !t.chars().all(|c| c.is_ascii_digit() || "+-.eE".contains(c)) {
            return Err(format!("not a decimal number: {s:?}"));
        }
        t.parse::<f64>().map_err(|_| format!("not a decimal number: {s:?}"))?
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("non-finite value {s:?}"))
    }
}

// ---------------------------------------------------------------------------
// JSON walking helpers (shared with the finite-game parser)

pub(crate) fn field<'a>(v: &'a Value, key: &str, loc: &str) -> Result<&'a Value> {
    v.get(key).ok_or_else(|| Error::parse(loc, format!("missing key {key:?}")))
}

pub(crate) fn number_text(v: &Value, loc: &str) -> Result<String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        _ => Err(Error::parse(loc, "expected a decimal string")),
    }
}

pub(crate) fn scalar(v: &Value, loc: &str) -> Result<f64> {
    parse_decimal(&number_text(v, loc)?).map_err(|m| Error::parse(loc, m))
}

pub(crate) fn rational(v: &Value, loc: &str) -> Result<BigRational> {
    parse_rational(&number_text(v, loc)?).map_err(|m| Error::parse(loc, m))
}

pub(crate) fn count(v: &Value, loc: &str) -> Result<usize> {
    let r = rational(v, loc)?;
    if !r.is_integer() || r < BigRational::zero() {
        return Err(Error::parse(loc, "expected a non-negative integer"));
    }
    r.to_integer()
        .to_string()
        .parse()
        .map_err(|_| Error::parse(loc, "integer out of range"))
}

pub(crate) fn array<'a>(v: &'a Value, loc: &str) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| Error::parse(loc, "expected an array"))
}

/// Matrix whose shape is read from the document.
fn matrix_any(v: &Value, loc: &str) -> Result<Mat> {
    let rows = array(v, loc)?;
    let mut data = Vec::new();
    let mut cols = None;
    for (i, row) in rows.iter().enumerate() {
        let rloc = format!("{loc}[{i}]");
        let row = array(row, &rloc)?;
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(Error::dim(loc, format!("rows of length {c}"), format!("row {i} of length {}", row.len())))
            }
            _ => {}
        }
        for (j, x) in row.iter().enumerate() {
            data.push(scalar(x, &format!("{rloc}[{j}]"))?);
        }
    }
    let cols = cols.unwrap_or(0);
    Ok(Mat::from_row_slice(rows.len(), cols, &data))
}

/// Matrix with a known expected shape; `[]` stands for any zero-row matrix.
fn matrix(v: &Value, loc: &str, rows: usize, cols: usize) -> Result<Mat> {
    let m = matrix_any(v, loc)?;
    if m.nrows() == 0 && rows == 0 {
        return Ok(Mat::zeros(0, cols));
    }
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::dim(loc, format!("{rows}x{cols}"), format!("{}x{}", m.nrows(), m.ncols())));
    }
    Ok(m)
}

fn opt_matrix(obj: &Value, key: &str, loc: &str, rows: usize, cols: usize) -> Result<Mat> {
    match obj.get(key) {
        Some(v) => matrix(v, &format!("{loc}.{key}"), rows, cols),
        None => Ok(Mat::zeros(rows, cols)),
    }
}

fn opt_vector(obj: &Value, key: &str, loc: &str, len: usize) -> Result<Vector> {
    match obj.get(key) {
        Some(v) => {
            let loc = format!("{loc}.{key}");
            let items = array(v, &loc)?;
            if items.len() != len {
                return Err(Error::dim(&loc, len, items.len()));
            }
            let vals = items
                .iter()
                .enumerate()
                .map(|(i, x)| scalar(x, &format!("{loc}[{i}]")))
                .collect::<Result<Vec<_>>>()?;
            Ok(Vector::from_vec(vals))
        }
        None => Ok(Vector::zeros(len)),
    }
}

/// A single object or an array of objects.
fn one_or_many<'a>(v: &'a Value, loc: &str) -> Result<Vec<&'a Value>> {
    match v {
        Value::Array(items) => Ok(items.iter().collect()),
        Value::Object(_) => Ok(vec![v]),
        _ => Err(Error::parse(loc, "expected an object or an array of objects")),
    }
}

// ---------------------------------------------------------------------------
// LQ parsing

fn parse_lq(root: &Value) -> Result<LqGameSpec> {
    let n_dm = count(field(root, "n_dm", "$")?, "$.n_dm")?;
    let horizon = match field(root, "horizon", "$")? {
        Value::String(s) if s == "infinite" => Horizon::Infinite,
        v => {
            let t = count(v, "$.horizon")?;
            if t == 0 {
                return Err(Error::parse("$.horizon", "horizon must be positive"));
            }
            Horizon::Finite(t)
        }
    };
    let p = count(field(root, "env_dim", "$")?, "$.env_dim")?;
    if p == 0 {
        return Err(Error::parse("$.env_dim", "environment dimension must be positive"));
    }
    let n0 = match root.get("env_state_dim") {
        Some(v) => count(v, "$.env_state_dim")?,
        None => 0,
    };
    let stage_count_ok = |len: usize| match horizon {
        Horizon::Finite(t) => len == 1 || len == t,
        Horizon::Infinite => len == 1,
    };
    let expected_stages = match horizon {
        Horizon::Finite(t) => format!("1 or {t} stages"),
        Horizon::Infinite => "exactly 1 stage (time-invariant)".to_string(),
    };

    let per_dm = array(field(root, "per_dm", "$")?, "$.per_dm")?;
    if per_dm.is_empty() {
        return Err(Error::parse("$.per_dm", "at least one DM group is required"));
    }
    let mut groups = Vec::new();
    for (gi, g) in per_dm.iter().enumerate() {
        let loc = format!("$.per_dm[{gi}]");
        let cnt = match g.get("count") {
            Some(v) => count(v, &format!("{loc}.count"))?,
            None => 1,
        };
        if cnt == 0 {
            return Err(Error::InvalidValue { field: format!("{loc}.count"), message: "must be positive".into() });
        }
        let beta = scalar(field(g, "beta", &loc)?, &format!("{loc}.beta"))?;
        let beta_ok = match horizon {
            Horizon::Finite(_) => (0.0..=1.0).contains(&beta),
            Horizon::Infinite => (0.0..1.0).contains(&beta),
        };
        if !beta_ok {
            return Err(Error::InvalidValue {
                field: format!("{loc}.beta"),
                message: format!(
                    "{beta} outside {}",
                    if horizon == Horizon::Infinite { "[0,1)" } else { "[0,1]" }
                ),
            });
        }
        let stage_vals = one_or_many(field(g, "stages", &loc)?, &format!("{loc}.stages"))?;
        if !stage_count_ok(stage_vals.len()) {
            return Err(Error::dim(format!("{loc}.stages"), &expected_stages, stage_vals.len()));
        }
        let mut stages = Vec::new();
        let mut dims: Option<(usize, usize)> = None;
        for (si, sv) in stage_vals.iter().enumerate() {
            let sloc = format!("{loc}.stages[{si}]");
            let a = matrix_any(field(sv, "A", &sloc)?, &format!("{sloc}.A"))?;
            let n = a.nrows();
            linalg::require_square(&a, &format!("{sloc}.A"))?;
            if n == 0 {
                return Err(Error::dim(format!("{sloc}.A"), "at least 1x1", "0x0"));
            }
            let b = matrix_any(field(sv, "B", &sloc)?, &format!("{sloc}.B"))?;
            if b.nrows() != n {
                return Err(Error::dim(format!("{sloc}.B"), format!("{n} rows"), b.nrows()));
            }
            let m = b.ncols();
            if m == 0 {
                return Err(Error::dim(format!("{sloc}.B"), "at least one column", 0));
            }
            if let Some((n_prev, m_prev)) = dims {
                if (n, m) != (n_prev, m_prev) {
                    return Err(Error::dim(&sloc, format!("state {n_prev}, control {m_prev}"), format!("state {n}, control {m}")));
                }
            }
            dims = Some((n, m));
            let stage = DmStage {
                c: opt_matrix(sv, "C", &sloc, n, p)?,
                q: matrix(field(sv, "Q", &sloc)?, &format!("{sloc}.Q"), n, n)?,
                r: matrix(field(sv, "R", &sloc)?, &format!("{sloc}.R"), m, m)?,
                k: opt_matrix(sv, "K", &sloc, p, m)?,
                l: opt_matrix(sv, "L", &sloc, p, n)?,
                a,
                b,
            };
            linalg::require_pd(&stage.q, &format!("{sloc}.Q"))?;
            linalg::require_pd(&stage.r, &format!("{sloc}.R"))?;
            stages.push(stage);
        }
        let n = dims.expect("at least one stage").0;
        let q_terminal = match horizon {
            Horizon::Finite(_) => {
                let qt = matrix(field(g, "Q_T", &loc)?, &format!("{loc}.Q_T"), n, n)?;
                linalg::require_pd(&qt, &format!("{loc}.Q_T"))?;
                Some(qt)
            }
            Horizon::Infinite => None,
        };
        groups.push(DmGroup { count: cnt, beta, stages, q_terminal });
    }
    let total: usize = groups.iter().map(|g| g.count).sum();
    if total != n_dm {
        return Err(Error::dim("$.n_dm", format!("sum of group counts = {total}"), n_dm));
    }

    let env_val = field(root, "env", "$")?;
    let env_stages = match env_val.get("stages") {
        Some(s) => one_or_many(s, "$.env.stages")?,
        None => vec![env_val],
    };
    if !stage_count_ok(env_stages.len()) {
        return Err(Error::dim("$.env.stages", &expected_stages, env_stages.len()));
    }
    let mut env = Vec::new();
    for (si, ev) in env_stages.iter().enumerate() {
        let loc = format!("$.env.stages[{si}]");
        let per_group = |key: &str, rows: usize, cols: &dyn Fn(&DmGroup) -> usize| -> Result<Vec<Mat>> {
            match ev.get(key) {
                None => Ok(groups.iter().map(|g| Mat::zeros(rows, cols(g))).collect()),
                Some(v) => {
                    let kloc = format!("{loc}.{key}");
                    let items = array(v, &kloc)?;
                    if items.len() != groups.len() {
                        return Err(Error::dim(&kloc, format!("{} per-group blocks", groups.len()), items.len()));
                    }
                    items
                        .iter()
                        .zip(&groups)
                        .enumerate()
                        .map(|(gi, (it, g))| matrix(it, &format!("{kloc}[{gi}]"), rows, cols(g)))
                        .collect()
                }
            }
        };
        env.push(EnvStage {
            a0: opt_matrix(ev, "A0", &loc, n0, n0)?,
            d: opt_matrix(ev, "D", &loc, p, n0)?,
            b1: per_group("B1", n0, &|g| g.m())?,
            b2: per_group("B2", n0, &|g| g.n())?,
            e1: per_group("E1", p, &|g| g.m())?,
            e2: per_group("E2", p, &|g| g.n())?,
        });
    }

    let dim_x = n0 + groups.iter().map(|g| g.n()).sum::<usize>();
    let nz = field(root, "noise", "$")?;
    let loc = "$.noise";
    let noise = Noise {
        x0_mean: opt_vector(nz, "x0_mean", loc, dim_x)?,
        x0_cov: opt_matrix(nz, "x0_cov", loc, dim_x, dim_x)?,
        y_prev_mean: opt_vector(nz, "y_prev_mean", loc, p)?,
        y_prev_cov: opt_matrix(nz, "y_prev_cov", loc, p, p)?,
        y_prev_x0_cov: opt_matrix(nz, "y_prev_x0_cov", loc, p, dim_x)?,
        w_mean: opt_vector(nz, "w_mean", loc, dim_x)?,
        w_cov: opt_matrix(nz, "w_cov", loc, dim_x, dim_x)?,
        xi_mean: opt_vector(nz, "xi_mean", loc, p)?,
        xi_cov: opt_matrix(nz, "xi_cov", loc, p, p)?,
        iid: match nz.get("iid") {
            None => true,
            Some(Value::Bool(b)) => *b,
            Some(_) => return Err(Error::parse("$.noise.iid", "expected a boolean")),
        },
    };
    if horizon == Horizon::Infinite && !noise.iid {
        return Err(Error::Unsupported("infinite-horizon noise must be i.i.d.".into()));
    }
    linalg::require_psd(&noise.w_cov, "$.noise.w_cov")?;
    linalg::require_psd(&noise.xi_cov, "$.noise.xi_cov")?;
    let joint = linalg::vstack(&[
        &linalg::hstack(&[&noise.y_prev_cov, &noise.y_prev_x0_cov]),
        &linalg::hstack(&[&noise.y_prev_x0_cov.transpose(), &noise.x0_cov]),
    ]);
    linalg::require_psd(&noise.x0_cov, "$.noise.x0_cov")?;
    linalg::require_psd(&noise.y_prev_cov, "$.noise.y_prev_cov")?;
    linalg::require_psd(&joint, "$.noise joint covariance of (y_prev, x0)")?;

    Ok(LqGameSpec { n_dm, horizon, env_dim: p, env_state_dim: n0, groups, env, noise })
}

// ---------------------------------------------------------------------------
// serialization

pub(crate) fn num(x: f64) -> Value {
    Value::String(format!("{x}"))
}

pub(crate) fn rat(x: &BigRational) -> Value {
    if x.denom().is_one() {
        Value::String(x.numer().to_string())
    } else {
        Value::String(format!("{}/{}", x.numer(), x.denom()))
    }
}

fn mat(m: &Mat) -> Value {
    Value::Array((0..m.nrows()).map(|i| Value::Array((0..m.ncols()).map(|j| num(m[(i, j)])).collect())).collect())
}

fn vecv(v: &Vector) -> Value {
    Value::Array(v.iter().map(|&x| num(x)).collect())
}

fn lq_to_json(s: &LqGameSpec) -> Value {
    let per_dm: Vec<Value> = s
        .groups
        .iter()
        .map(|g| {
            let stages: Vec<Value> = g
                .stages
                .iter()
                .map(|st| {
                    json!({"A": mat(&st.a), "B": mat(&st.b), "C": mat(&st.c), "Q": mat(&st.q),
                           "R": mat(&st.r), "K": mat(&st.k), "L": mat(&st.l)})
                })
                .collect();
            let mut obj = Map::new();
            obj.insert("count".into(), Value::String(g.count.to_string()));
            obj.insert("beta".into(), num(g.beta));
            obj.insert("stages".into(), Value::Array(stages));
            if let Some(qt) = &g.q_terminal {
                obj.insert("Q_T".into(), mat(qt));
            }
            Value::Object(obj)
        })
        .collect();
    let env: Vec<Value> = s
        .env
        .iter()
        .map(|e| {
            let list = |v: &Vec<Mat>| Value::Array(v.iter().map(mat).collect());
            json!({"A0": mat(&e.a0), "D": mat(&e.d), "B1": list(&e.b1), "B2": list(&e.b2),
                   "E1": list(&e.e1), "E2": list(&e.e2)})
        })
        .collect();
    let nz = &s.noise;
    json!({
        "kind": "lq",
        "n_dm": s.n_dm.to_string(),
        "horizon": match s.horizon { Horizon::Finite(t) => t.to_string(), Horizon::Infinite => "infinite".into() },
        "env_dim": s.env_dim.to_string(),
        "env_state_dim": s.env_state_dim.to_string(),
        "per_dm": per_dm,
        "env": {"stages": env},
        "noise": {
            "x0_mean": vecv(&nz.x0_mean), "x0_cov": mat(&nz.x0_cov),
            "y_prev_mean": vecv(&nz.y_prev_mean), "y_prev_cov": mat(&nz.y_prev_cov),
            "y_prev_x0_cov": mat(&nz.y_prev_x0_cov),
            "w_mean": vecv(&nz.w_mean), "w_cov": mat(&nz.w_cov),
            "xi_mean": vecv(&nz.xi_mean), "xi_cov": mat(&nz.xi_cov),
            "iid": nz.iid,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE2: &str = r#"{
      "kind": "lq", "n_dm": "1", "horizon": "2", "env_dim": "1",
      "per_dm": [{"beta": "1", "stages": {"A": [["1"]], "B": [["1"]], "Q": [["1"]], "R": [["1"]], "K": [["1"]]},
                  "Q_T": [["1"]]}],
      "env": {"E1": [[["1"]]]},
      "noise": {"x0_cov": [["1"]], "w_cov": [["1"]], "xi_cov": [["1"]]}
    }"#;

    #[test]
    fn loads_hand_encoded_example2() {
        let Spec::Lq(s) = load_spec(EXAMPLE2).unwrap() else { panic!("expected LQ") };
        assert_eq!((s.n_dm, s.env_dim, s.env_state_dim), (1, 1, 0));
        assert_eq!(s.horizon, Horizon::Finite(2));
        let g = &s.groups[0];
        assert_eq!((g.n(), g.m()), (1, 1));
        assert_eq!(g.stage(1).k[(0, 0)], 1.0);
        assert_eq!(s.env_stage(0).e1[0][(0, 0)], 1.0);
        assert_eq!(s.env_stage(0).b1[0].shape(), (0, 1));
    }

    #[test]
    fn zero_r_is_a_definiteness_error() {
        let text = EXAMPLE2.replace(r#""R": [["1"]]"#, r#""R": [["0"]]"#);
        match load_spec(&text) {
            Err(Error::Definiteness { matrix, min_eigenvalue, .. }) => {
                assert!(matrix.ends_with(".R"), "{matrix}");
                assert_eq!(min_eigenvalue, 0.0);
            }
            other => panic!("expected definiteness error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_shape_names_block() {
        let text = EXAMPLE2.replace(r#""K": [["1"]]"#, r#""K": [["1", "2"]]"#);
        match load_spec(&text) {
            Err(Error::Dimension { block, .. }) => assert!(block.ends_with(".K"), "{block}"),
            other => panic!("expected dimension error, got {other:?}"),
        }
    }

    #[test]
    fn syntax_error_has_location() {
        match load_spec("{\"kind\": \"lq\",,}") {
            Err(Error::Parse { location, .. }) => assert!(location.contains("line 1")),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn rational_parsing_is_exact() {
        let r = parse_rational("-0.125").unwrap();
        assert_eq!(r, BigRational::new((-1).into(), 8.into()));
        assert_eq!(parse_rational("1.5e2").unwrap(), BigRational::from_integer(150.into()));
        assert_eq!(parse_rational("2/6").unwrap(), BigRational::new(1.into(), 3.into()));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
        assert!(parse_decimal("inf").is_err());
        assert!(parse_decimal("NaN").is_err());
        assert_eq!(parse_decimal("1/4").unwrap(), 0.25);
    }

    #[test]
    fn round_trip_example2() {
        let spec = load_spec(EXAMPLE2).unwrap();
        let again = load_spec(&spec_to_string(&spec)).unwrap();
        assert_eq!(spec, again);
    }
}
