//! Built-in instances and the JSON instance file format.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::mdp::{MdpInstance, Violation};
use crate::policy::StationaryPolicy;
use crate::robust::BaselineAmbiguity;

/// Marker used in instance files for transition rows that have to be filled in.
pub const REQUIRED_EXTERNAL: &str = "REQUIRED-EXTERNAL";

pub const SCHEMA_VERSION: &str = "1";

/// An instance together with named baselines and descriptive metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceBundle {
    pub name: String,
    pub description: String,
    pub provenance: String,
    pub state_names: Vec<String>,
    pub action_names: Vec<String>,
    pub instance: MdpInstance,
    pub baselines: BTreeMap<String, StationaryPolicy>,
    pub ambiguity: Option<BaselineAmbiguity>,
}

impl InstanceBundle {
    pub fn baseline(&self, name: &str) -> Result<&StationaryPolicy> {
        self.baselines.get(name).ok_or_else(|| {
            let known: Vec<&str> = self.baselines.keys().map(String::as_str).collect();
            Error::InvalidArgument(format!("unknown baseline '{name}' (available: {})", known.join(", ")))
        })
    }

    /// Violations other than placeholder rows make the bundle unusable; the
    /// placeholders are reported by [`MdpInstance::validate`].
    pub fn check_structure(&self) -> Result<()> {
        let (n, m) = (self.instance.n_states(), self.instance.n_actions());
        if self.state_names.len() != n || self.action_names.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "{} state names and {} action names for a {n}x{m} instance",
                self.state_names.len(),
                self.action_names.len()
            )));
        }
        for (name, pi) in &self.baselines {
            pi.ensure_compatible(&self.instance)
                .map_err(|e| Error::InvalidPolicy(format!("baseline '{name}': {e}")))?;
        }
        if let Some(amb) = &self.ambiguity {
            amb.validate(n, m)?;
        }
        Ok(())
    }
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

fn point_mass(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

/// The five-state counterexample: states 1..5 (indices 0..4), two actions.
///
/// | state | action 0 | action 1 | reward |
/// |-------|----------|----------|--------|
/// | 1     | → 3      | → 2      | 0      |
/// | 2     | → 4      | → 5      | 0.1    |
/// | 3     | → 4      | → 5      | 0      |
/// | 4     | stay     | stay     | 1      |
/// | 5     | stay     | stay     | 1 + ε  |
///
/// Rewards are collected in the state being left. Baselines: `base`
/// (1→3, 2→5, 3→4), `alg` (1→2, 2→4, 3→5) and `opt`, the nominal optimum
/// (1→2, 2→4, 3→4).
pub fn toy_counterexample(lambda: f64, epsilon: f64) -> Result<InstanceBundle> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::InvalidArgument(format!("discount {lambda} not in (0,1)")));
    }
    if !epsilon.is_finite() {
        return Err(Error::InvalidArgument("epsilon must be finite".into()));
    }
    let n = 5;
    let next = [[2, 1], [3, 4], [3, 4], [3, 3], [4, 4]];
    let reward = [0.0, 0.1, 0.0, 1.0, 1.0 + epsilon];
    let p: Vec<Vec<Vec<f64>>> = next
        .iter()
        .map(|row| row.iter().map(|&k| point_mass(n, k)).collect())
        .collect();
    let r: Vec<Vec<f64>> = reward.iter().map(|&x| vec![x, x]).collect();
    let instance = MdpInstance::with_state_action_rewards(&p, &r, point_mass(n, 0), lambda)?;
    let det = |a: &[usize]| StationaryPolicy::deterministic(a, 2).expect("valid actions");
    let mut baselines = BTreeMap::new();
    baselines.insert("base".to_string(), det(&[0, 1, 0, 0, 0]));
    baselines.insert("alg".to_string(), det(&[1, 0, 1, 0, 0]));
    baselines.insert("opt".to_string(), det(&[1, 0, 0, 0, 0]));
    Ok(InstanceBundle {
        name: "toy".into(),
        description: format!("five-state counterexample, discount {lambda}, epsilon {epsilon}"),
        provenance: "deterministic five-state chain with closed-form returns".into(),
        state_names: names("", n),
        action_names: vec!["a0".into(), "a1".into()],
        instance,
        baselines,
        ambiguity: None,
    })
}

/// `θ̃ = 1 − 0.1(1−λ)/(2λ)`: below it, the full recommendation `alg` does
/// worse than the baseline on the toy instance with `ε = −1`.
pub fn toy_theta_tilde(lambda: f64) -> f64 {
    1.0 - 0.1 * (1.0 - lambda) / (2.0 * lambda)
}

/// `θ̄ = 1 − 0.1(1−λ)/λ`: the adherence level where the optimal
/// recommendation on the toy instance switches.
pub fn toy_theta_bar(lambda: f64) -> f64 {
    1.0 - 0.1 * (1.0 - lambda) / lambda
}

/// Closed-form return of `θ alg + (1−θ) base` on the toy instance.
pub fn toy_alg_return(lambda: f64, epsilon: f64, theta: f64) -> f64 {
    let g = 1.0 / (1.0 - lambda);
    let v4 = g;
    let v5 = (1.0 + epsilon) * g;
    let v2 = 0.1 + lambda * (theta * v4 + (1.0 - theta) * v5);
    let v3 = lambda * (theta * v5 + (1.0 - theta) * v4);
    lambda * (theta * v2 + (1.0 - theta) * v3)
}

/// Single state, single action, reward 1.
pub fn single_state(lambda: f64) -> Result<InstanceBundle> {
    let instance = MdpInstance::with_state_action_rewards(&[vec![vec![1.0]]], &[vec![1.0]], vec![1.0], lambda)?;
    let mut baselines = BTreeMap::new();
    baselines.insert("base".to_string(), StationaryPolicy::deterministic(&[0], 1)?);
    Ok(InstanceBundle {
        name: "single".into(),
        description: "one state, one action, reward 1".into(),
        provenance: "geometric series sanity instance".into(),
        state_names: vec!["1".into()],
        action_names: vec!["stay".into()],
        instance,
        baselines,
        ambiguity: None,
    })
}

fn template(
    name: &str,
    description: &str,
    state_names: Vec<String>,
    action_names: Vec<String>,
    rewards_sa: Vec<Vec<f64>>,
    known_rows: &[(usize, usize, Vec<f64>)],
    baselines: Vec<(&str, Vec<usize>)>,
) -> InstanceBundle {
    let (n, m) = (state_names.len(), action_names.len());
    let mut transitions = vec![f64::NAN; n * m * n];
    for (s, a, row) in known_rows {
        let o = (s * m + a) * n;
        transitions[o..o + n].copy_from_slice(row);
    }
    let mut rewards = vec![0.0; n * m * n];
    for s in 0..n {
        for a in 0..m {
            let o = (s * m + a) * n;
            rewards[o..o + n].fill(rewards_sa[s][a]);
        }
    }
    let instance = MdpInstance::from_parts_unchecked(n, m, transitions, rewards, point_mass(n, 0), 0.99)
        .expect("template shapes are consistent");
    let baselines = baselines
        .into_iter()
        .map(|(k, a)| {
            (
                k.to_string(),
                StationaryPolicy::deterministic(&a, m).expect("valid actions"),
            )
        })
        .collect();
    InstanceBundle {
        name: name.into(),
        description: description.into(),
        provenance: "rewards, discount, start state and baselines are fixed; transition rows marked \
                     REQUIRED-EXTERNAL must be supplied from the original source"
            .into(),
        state_names,
        action_names,
        instance,
        baselines,
        ambiguity: None,
    }
}

/// Machine replacement: states 1..8, R1, R2; actions repair, wait.
pub fn machine_replacement_template() -> InstanceBundle {
    let mut states = names("", 8);
    states.push("R1".into());
    states.push("R2".into());
    let reward = [20.0, 20.0, 20.0, 20.0, 20.0, 20.0, 20.0, 0.0, 18.0, 10.0];
    let (repair, wait) = (0, 1);
    let mut selective = vec![wait; 10];
    selective[7] = repair;
    selective[8] = repair;
    template(
        "machine_replacement",
        "machine replacement with two repair states",
        states,
        vec!["repair".into(), "wait".into()],
        reward.iter().map(|&r| vec![r, r]).collect(),
        &[],
        vec![("always_wait", vec![wait; 10]), ("repair_8_r1", selective)],
    )
}

/// Healthcare: health states 1..5 and an absorbing mortality state m;
/// actions low, medium, high.
pub fn healthcare_template() -> InstanceBundle {
    let mut states = names("", 5);
    states.push("m".into());
    let mut rewards = vec![vec![20.0, 15.0, 10.0]; 5];
    rewards.push(vec![0.0; 3]);
    let absorbing: Vec<(usize, usize, Vec<f64>)> = (0..3).map(|a| (5, a, point_mass(6, 5))).collect();
    template(
        "healthcare",
        "treatment dosage with an absorbing mortality state",
        states,
        vec!["low".into(), "medium".into(), "high".into()],
        rewards,
        &absorbing,
        vec![
            ("always_low", vec![0; 6]),
            ("always_medium", vec![1; 6]),
            ("always_high", vec![2; 6]),
        ],
    )
}

/// Names accepted by [`builtin`].
pub const BUILTINS: &[&str] = &["toy", "single", "machine_replacement", "healthcare"];

/// Looks up a builtin bundle by name.
pub fn builtin(name: &str, lambda: Option<f64>, epsilon: Option<f64>) -> Result<InstanceBundle> {
    match name {
        "toy" => toy_counterexample(lambda.unwrap_or(0.5), epsilon.unwrap_or(-1.0)),
        "single" => single_state(lambda.unwrap_or(0.5)),
        "machine_replacement" => Ok(machine_replacement_template()),
        "healthcare" => Ok(healthcare_template()),
        other => Err(Error::InvalidArgument(format!(
            "unknown builtin '{other}' (available: {})",
            BUILTINS.join(", ")
        ))),
    }
}

// ---------------------------------------------------------------------------
// JSON format

fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

fn matrix(rows: Vec<Vec<f64>>) -> Value {
    Value::Array(
        rows.into_iter()
            .map(|r| Value::Array(r.into_iter().map(num).collect()))
            .collect(),
    )
}

/// Serializes a bundle to JSON text. Numbers use shortest round-trip form.
pub fn bundle_to_json(bundle: &InstanceBundle) -> Result<String> {
    let inst = &bundle.instance;
    let (n, m) = (inst.n_states(), inst.n_actions());
    if inst.rewards().iter().any(|r| !r.is_finite()) {
        return Err(Error::NonFinite("rewards must be finite to be saved".into()));
    }
    let mut transitions = Vec::with_capacity(n);
    let mut rewards = Vec::with_capacity(n);
    for s in 0..n {
        let mut tp = Vec::with_capacity(m);
        let mut tr = Vec::with_capacity(m);
        for a in 0..m {
            let row = inst.transition_row(s, a);
            if row.iter().all(|p| p.is_nan()) {
                tp.push(Value::String(REQUIRED_EXTERNAL.into()));
            } else if row.iter().any(|p| !p.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "transition row ({s},{a}) is partly non-finite"
                )));
            } else {
                tp.push(Value::Array(row.iter().copied().map(num).collect()));
            }
            tr.push(Value::Array(inst.reward_row(s, a).iter().copied().map(num).collect()));
        }
        transitions.push(Value::Array(tp));
        rewards.push(Value::Array(tr));
    }
    let baselines: Map<String, Value> = bundle
        .baselines
        .iter()
        .map(|(k, pi)| (k.clone(), matrix(pi.rows())))
        .collect();
    let mut root = json!({
        "schema_version": SCHEMA_VERSION,
        "metadata": {
            "name": bundle.name,
            "description": bundle.description,
            "provenance": bundle.provenance,
        },
        "n_states": n,
        "n_actions": m,
        "state_names": bundle.state_names,
        "action_names": bundle.action_names,
        "discount": num(inst.discount()),
        "initial_dist": inst.initial_dist().iter().copied().map(num).collect::<Vec<_>>(),
        "rewards": rewards,
        "transitions": transitions,
        "baselines": baselines,
    });
    if let Some(amb) = &bundle.ambiguity {
        root["baseline_ambiguity"] = Value::Array(amb.per_state_vertices.iter().map(|vs| matrix(vs.clone())).collect());
    }
    Ok(serde_json::to_string_pretty(&root).expect("json values serialize"))
}

pub fn save_bundle(bundle: &InstanceBundle, path: impl AsRef<Path>) -> Result<()> {
    let mut text = bundle_to_json(bundle)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn load_bundle(path: impl AsRef<Path>) -> Result<InstanceBundle> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    bundle_from_json(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

const KNOWN_KEYS: &[&str] = &[
    "schema_version",
    "metadata",
    "n_states",
    "n_actions",
    "state_names",
    "action_names",
    "discount",
    "initial_dist",
    "rewards",
    "transitions",
    "baselines",
    "baseline_ambiguity",
];

fn perr(field: &str, what: &str) -> Error {
    Error::Parse(format!("field '{field}': {what}"))
}

fn get<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a Value> {
    obj.get(key).ok_or_else(|| perr(key, "missing"))
}

fn as_usize(v: &Value, field: &str) -> Result<usize> {
    v.as_u64()
        .map(|x| x as usize)
        .ok_or_else(|| perr(field, "expected a non-negative integer"))
}

fn as_f64(v: &Value, field: &str) -> Result<f64> {
    v.as_f64().ok_or_else(|| perr(field, "expected a number"))
}

fn as_array<'a>(v: &'a Value, field: &str, len: Option<usize>) -> Result<&'a Vec<Value>> {
    let arr = v.as_array().ok_or_else(|| perr(field, "expected an array"))?;
    if let Some(n) = len {
        if arr.len() != n {
            return Err(perr(field, &format!("expected {n} entries, found {}", arr.len())));
        }
    }
    Ok(arr)
}

fn vector(v: &Value, field: &str, len: usize) -> Result<Vec<f64>> {
    as_array(v, field, Some(len))?
        .iter()
        .enumerate()
        .map(|(i, x)| as_f64(x, &format!("{field}[{i}]")))
        .collect()
}

fn string_list(v: &Value, field: &str, len: usize) -> Result<Vec<String>> {
    as_array(v, field, Some(len))?
        .iter()
        .enumerate()
        .map(|(i, x)| {
            x.as_str()
                .map(str::to_string)
                .ok_or_else(|| perr(&format!("{field}[{i}]"), "expected a string"))
        })
        .collect()
}

fn policy_matrix(v: &Value, field: &str, n: usize, m: usize) -> Result<StationaryPolicy> {
    let rows: Vec<Vec<f64>> = as_array(v, field, Some(n))?
        .iter()
        .enumerate()
        .map(|(s, row)| vector(row, &format!("{field}[{s}]"), m))
        .collect::<Result<_>>()?;
    StationaryPolicy::new(rows).map_err(|e| perr(field, &e.to_string()))
}

/// Parses a bundle and validates it. Placeholder transition rows are allowed;
/// every other invariant violation is an error.
pub fn bundle_from_json(text: &str) -> Result<InstanceBundle> {
    let root: Value = serde_json::from_str(text)
        .map_err(|e| Error::Parse(format!("line {}, column {}: {e}", e.line(), e.column())))?;
    let obj = root.as_object().ok_or_else(|| perr("<root>", "expected an object"))?;
    for key in obj.keys() {
        if !KNOWN_KEYS.contains(&key.as_str()) {
            log::warn!("ignoring unknown key '{key}' in instance file");
        }
    }
    if let Some(v) = obj.get("schema_version") {
        let ver = v.as_str().ok_or_else(|| perr("schema_version", "expected a string"))?;
        if ver != SCHEMA_VERSION {
            log::warn!("instance file schema_version {ver}, reader supports {SCHEMA_VERSION}");
        }
    }
    let n = as_usize(get(obj, "n_states")?, "n_states")?;
    let m = as_usize(get(obj, "n_actions")?, "n_actions")?;
    if n == 0 || m == 0 {
        return Err(perr("n_states", "instance needs at least one state and one action"));
    }
    let state_names = match obj.get("state_names") {
        Some(v) => string_list(v, "state_names", n)?,
        None => names("", n),
    };
    let action_names = match obj.get("action_names") {
        Some(v) => string_list(v, "action_names", m)?,
        None => names("a", m),
    };
    let discount = as_f64(get(obj, "discount")?, "discount")?;
    let initial_dist = vector(get(obj, "initial_dist")?, "initial_dist", n)?;

    let mut transitions = Vec::with_capacity(n * m * n);
    let mut rewards = Vec::with_capacity(n * m * n);
    let tp = as_array(get(obj, "transitions")?, "transitions", Some(n))?;
    let tr = as_array(get(obj, "rewards")?, "rewards", Some(n))?;
    for s in 0..n {
        let prow = as_array(&tp[s], &format!("transitions[{s}]"), Some(m))?;
        let rrow = as_array(&tr[s], &format!("rewards[{s}]"), Some(m))?;
        for a in 0..m {
            let field = format!("transitions[{s}][{a}]");
            match &prow[a] {
                Value::String(tag) if tag == REQUIRED_EXTERNAL => transitions.extend(std::iter::repeat_n(f64::NAN, n)),
                v => transitions.extend(vector(v, &field, n)?),
            }
            rewards.extend(vector(&rrow[a], &format!("rewards[{s}][{a}]"), n)?);
        }
    }
    let instance = MdpInstance::from_parts_unchecked(n, m, transitions, rewards, initial_dist, discount)?;
    let hard: Vec<Violation> = instance
        .validate()
        .into_iter()
        .filter(|v| !v.is_required_external())
        .collect();
    if !hard.is_empty() {
        return Err(Error::InvalidInstance(hard));
    }

    let mut baselines = BTreeMap::new();
    if let Some(b) = obj.get("baselines") {
        let bmap = b.as_object().ok_or_else(|| perr("baselines", "expected an object"))?;
        for (name, v) in bmap {
            baselines.insert(name.clone(), policy_matrix(v, &format!("baselines.{name}"), n, m)?);
        }
    }
    let ambiguity = match obj.get("baseline_ambiguity") {
        None | Some(Value::Null) => None,
        Some(v) => {
            let per_state = as_array(v, "baseline_ambiguity", Some(n))?
                .iter()
                .enumerate()
                .map(|(s, verts)| {
                    as_array(verts, &format!("baseline_ambiguity[{s}]"), None)?
                        .iter()
                        .enumerate()
                        .map(|(k, vx)| vector(vx, &format!("baseline_ambiguity[{s}][{k}]"), m))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            Some(BaselineAmbiguity::new(per_state)?)
        }
    };
    let meta = obj.get("metadata").and_then(Value::as_object);
    let text_field = |k: &str| {
        meta.and_then(|mm| mm.get(k))
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string()
    };
    let bundle = InstanceBundle {
        name: text_field("name"),
        description: text_field("description"),
        provenance: text_field("provenance"),
        state_names,
        action_names,
        instance,
        baselines,
        ambiguity,
    };
    bundle.check_structure()?;
    Ok(bundle)
}
