//! Structured-text (JSON) domain documents.
//!
//! Top-level keys: `name`, `states`, `actions_i`, `actions_j`,
//! `observations_i`, `observations_j`, `horizon`, `transition`, `obs_i`,
//! `obs_j`, `reward_i`, `reward_j`, plus the optional `initial_belief`
//! (uniform when absent) and `views`.
//!
//! Tables are nested arrays indexed in declaration order:
//!
//! | key          | shape                         |
//! |--------------|-------------------------------|
//! | `transition` | `[s][a_i][a_j][s']`           |
//! | `obs_i`      | `[s'][a_i][a_j][o_i]`         |
//! | `obs_j`      | `[s'][a_j][o_j]`              |
//! | `reward_i`   | `[s][a_i][a_j]`               |
//! | `reward_j`   | `[s][a_j][a_i]`               |
//!
//! Any nesting level may instead be an object keyed by identifier, in which
//! case every declared identifier must be present and no others.

use std::path::Path;

use serde::ser::{SerializeSeq, Serializer};
use serde::Serialize;
use serde_json::Value;

use super::{builtin, check_distribution, DomainError, DomainParts, PosgDomain, StateView};

/// Resolves a builtin name (`tiger`, `uav`) or a path to a domain document.
pub fn resolve_domain(reference: &str) -> Result<PosgDomain, DomainError> {
    if let Some(d) = builtin(reference) {
        return Ok(d);
    }
    let path = Path::new(reference);
    if path.is_file() {
        load_domain_file(path)
    } else {
        Err(DomainError::UnknownDomain(reference.to_string()))
    }
}

pub fn load_domain_file(path: &Path) -> Result<PosgDomain, DomainError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| DomainError::Parse(format!("{}: {e}", path.display())))?;
    load_domain(&text)
}

pub fn load_domain(document: &str) -> Result<PosgDomain, DomainError> {
    let root: Value =
        serde_json::from_str(document).map_err(|e| DomainError::Parse(e.to_string()))?;
    let obj = root
        .as_object()
        .ok_or_else(|| schema("$", "document must be an object"))?;

    let name = obj
        .get("name")
        .and_then(Value::as_str)
        .ok_or_else(|| schema("name", "missing string"))?
        .to_string();
    let list = |key: &str| -> Result<Vec<String>, DomainError> {
        let arr = obj
            .get(key)
            .and_then(Value::as_array)
            .ok_or_else(|| schema(key, "missing identifier list"))?;
        arr.iter()
            .enumerate()
            .map(|(k, v)| {
                v.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| schema(&format!("{key}[{k}]"), "identifier must be a string"))
            })
            .collect()
    };
    let states = list("states")?;
    let actions_i = list("actions_i")?;
    let actions_j = list("actions_j")?;
    let observations_i = list("observations_i")?;
    let observations_j = list("observations_j")?;
    let horizon = obj
        .get("horizon")
        .and_then(Value::as_u64)
        .ok_or_else(|| schema("horizon", "missing positive integer"))? as usize;

    let table = |key: &str, axes: &[&[String]]| -> Result<Vec<f64>, DomainError> {
        let value = obj
            .get(key)
            .ok_or_else(|| schema(key, "missing table"))?;
        let mut out = Vec::new();
        read_table(value, axes, key.to_string(), &mut out)?;
        Ok(out)
    };

    let dense = table("transition", &[&states, &actions_i, &actions_j, &states])?;
    let ns = states.len();
    let mut transition = Vec::with_capacity(dense.len() / ns.max(1));
    for (k, row) in dense.chunks(ns).enumerate() {
        let path = row_path(
            "transition",
            &[&states, &actions_i, &actions_j],
            k,
        );
        check_distribution(row, &path)?;
        transition.push(
            row.iter()
                .enumerate()
                .filter(|(_, &p)| p != 0.0)
                .map(|(t, &p)| (t, p))
                .collect(),
        );
    }
    let obs_i = table("obs_i", &[&states, &actions_i, &actions_j, &observations_i])?;
    for (k, row) in obs_i.chunks(observations_i.len()).enumerate() {
        check_distribution(row, &row_path("obs_i", &[&states, &actions_i, &actions_j], k))?;
    }
    let obs_j = table("obs_j", &[&states, &actions_j, &observations_j])?;
    for (k, row) in obs_j.chunks(observations_j.len()).enumerate() {
        check_distribution(row, &row_path("obs_j", &[&states, &actions_j], k))?;
    }
    let reward_i = table("reward_i", &[&states, &actions_i, &actions_j])?;
    let reward_j = table("reward_j", &[&states, &actions_j, &actions_i])?;
    let initial_belief = match obj.get("initial_belief") {
        Some(v) => {
            let mut out = Vec::new();
            read_table(v, &[&states], "initial_belief".into(), &mut out)?;
            out
        }
        None => vec![1.0 / ns as f64; ns],
    };

    let (mut view_i, mut view_j) = (None, None);
    if let Some(views) = obj.get("views") {
        let views = views
            .as_object()
            .ok_or_else(|| schema("views", "must be an object keyed by agent"))?;
        for (agent, v) in views {
            let view = read_view(v, &states, &format!("views.{agent}"))?;
            match agent.as_str() {
                "i" => view_i = Some(view),
                "j" => view_j = Some(view),
                other => {
                    return Err(DomainError::UnknownIdentifier {
                        path: "views".into(),
                        id: other.to_string(),
                    })
                }
            }
        }
    }

    PosgDomain::new(DomainParts {
        name,
        states,
        actions_i,
        actions_j,
        observations_i,
        observations_j,
        horizon,
        transition,
        obs_i,
        obs_j,
        reward_i,
        reward_j,
        initial_belief,
        view_i,
        view_j,
    })
}

fn schema(path: &str, detail: &str) -> DomainError {
    DomainError::Schema {
        path: path.to_string(),
        detail: detail.to_string(),
    }
}

fn row_path(key: &str, axes: &[&[String]], mut flat: usize) -> String {
    let mut idx = vec![0; axes.len()];
    for (k, axis) in axes.iter().enumerate().rev() {
        idx[k] = flat % axis.len();
        flat /= axis.len();
    }
    let mut path = key.to_string();
    for (k, axis) in axes.iter().enumerate() {
        path.push_str(&format!("[{}]", axis[idx[k]]));
    }
    path
}

fn read_table(
    value: &Value,
    axes: &[&[String]],
    path: String,
    out: &mut Vec<f64>,
) -> Result<(), DomainError> {
    let Some((labels, rest)) = axes.split_first() else {
        let x = value
            .as_f64()
            .ok_or_else(|| schema(&path, "expected a number"))?;
        out.push(x);
        return Ok(());
    };
    match value {
        Value::Array(items) => {
            if items.len() != labels.len() {
                return Err(schema(
                    &path,
                    &format!(
                        "expected {} entries, found {} (missing table entry)",
                        labels.len(),
                        items.len()
                    ),
                ));
            }
            for (label, item) in labels.iter().zip(items) {
                read_table(item, rest, format!("{path}[{label}]"), out)?;
            }
            Ok(())
        }
        Value::Object(map) => {
            if let Some(extra) = map.keys().find(|k| !labels.contains(k)) {
                return Err(DomainError::UnknownIdentifier {
                    path,
                    id: extra.clone(),
                });
            }
            for label in labels.iter() {
                let item = map.get(label).ok_or_else(|| {
                    schema(&format!("{path}[{label}]"), "missing table entry")
                })?;
                read_table(item, rest, format!("{path}[{label}]"), out)?;
            }
            Ok(())
        }
        _ => Err(schema(&path, "expected an array or an object")),
    }
}

fn read_view(value: &Value, states: &[String], path: &str) -> Result<StateView, DomainError> {
    let labels: Vec<String> = value
        .get("labels")
        .and_then(Value::as_array)
        .ok_or_else(|| schema(&format!("{path}.labels"), "missing label list"))?
        .iter()
        .map(|v| v.as_str().map(str::to_string))
        .collect::<Option<_>>()
        .ok_or_else(|| schema(&format!("{path}.labels"), "labels must be strings"))?;
    let assignment = value
        .get("assignment")
        .and_then(Value::as_array)
        .ok_or_else(|| schema(&format!("{path}.assignment"), "missing assignment list"))?;
    if assignment.len() != states.len() {
        return Err(schema(
            &format!("{path}.assignment"),
            &format!("expected {} entries, found {}", states.len(), assignment.len()),
        ));
    }
    let assignment = assignment
        .iter()
        .zip(states)
        .map(|(v, s)| {
            let p = format!("{path}.assignment[{s}]");
            let id = v.as_str().ok_or_else(|| schema(&p, "expected a label"))?;
            labels
                .iter()
                .position(|l| l == id)
                .ok_or_else(|| DomainError::UnknownIdentifier {
                    path: p,
                    id: id.to_string(),
                })
        })
        .collect::<Result<_, _>>()?;
    Ok(StateView { labels, assignment })
}

/// Lazily serialized dense table.
struct Table<'a> {
    dims: Vec<usize>,
    get: &'a dyn Fn(&[usize]) -> f64,
}

impl Table<'_> {
    fn serialize_level<S: Serializer>(&self, prefix: &mut Vec<usize>, s: S) -> Result<S::Ok, S::Error> {
        struct Level<'t, 'a> {
            table: &'t Table<'a>,
            prefix: Vec<usize>,
        }
        impl Serialize for Level<'_, '_> {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                let mut p = self.prefix.clone();
                self.table.serialize_level(&mut p, s)
            }
        }
        let depth = prefix.len();
        let mut seq = s.serialize_seq(Some(self.dims[depth]))?;
        for k in 0..self.dims[depth] {
            prefix.push(k);
            if depth + 1 == self.dims.len() {
                seq.serialize_element(&(self.get)(prefix))?;
            } else {
                seq.serialize_element(&Level {
                    table: self,
                    prefix: prefix.clone(),
                })?;
            }
            prefix.pop();
        }
        seq.end()
    }
}

impl Serialize for Table<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.serialize_level(&mut Vec::new(), s)
    }
}

#[derive(Serialize)]
struct ViewOut<'a> {
    labels: &'a [String],
    assignment: Vec<&'a str>,
}

#[derive(Serialize)]
struct ViewsOut<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    i: Option<ViewOut<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    j: Option<ViewOut<'a>>,
}

#[derive(Serialize)]
struct DocumentOut<'a> {
    name: &'a str,
    states: &'a [String],
    actions_i: &'a [String],
    actions_j: &'a [String],
    observations_i: &'a [String],
    observations_j: &'a [String],
    horizon: usize,
    transition: Table<'a>,
    obs_i: Table<'a>,
    obs_j: Table<'a>,
    reward_i: Table<'a>,
    reward_j: Table<'a>,
    initial_belief: &'a [f64],
    #[serde(skip_serializing_if = "Option::is_none")]
    views: Option<ViewsOut<'a>>,
}

/// Canonical document for `domain`: fixed key order, dense tables, one line.
pub fn serialize_domain(domain: &PosgDomain) -> String {
    use super::Agent;
    let ns = domain.num_states();
    let nai = domain.actions(Agent::I).len();
    let naj = domain.actions(Agent::J).len();
    let noi = domain.observations(Agent::I).len();
    let noj = domain.observations(Agent::J).len();

    let transition = |k: &[usize]| domain.transition_prob(k[0], k[1], k[2], k[3]);
    let obs_i = |k: &[usize]| domain.obs_i(k[0], k[1], k[2], k[3]);
    let obs_j = |k: &[usize]| domain.obs_j(k[0], k[1], k[2]);
    let reward_i = |k: &[usize]| domain.reward_i(k[0], k[1], k[2]);
    let reward_j = |k: &[usize]| domain.reward_j(k[0], k[1], k[2]);
    fn view(v: Option<&StateView>) -> Option<ViewOut<'_>> {
        v.map(|v| ViewOut {
            labels: &v.labels,
            assignment: v.assignment.iter().map(|&b| v.labels[b].as_str()).collect(),
        })
    }
    let views = match (domain.view(Agent::I), domain.view(Agent::J)) {
        (None, None) => None,
        (vi, vj) => Some(ViewsOut {
            i: view(vi),
            j: view(vj),
        }),
    };

    let doc = DocumentOut {
        name: domain.name(),
        states: domain.states(),
        actions_i: domain.actions(Agent::I),
        actions_j: domain.actions(Agent::J),
        observations_i: domain.observations(Agent::I),
        observations_j: domain.observations(Agent::J),
        horizon: domain.horizon(),
        transition: Table {
            dims: vec![ns, nai, naj, ns],
            get: &transition,
        },
        obs_i: Table {
            dims: vec![ns, nai, naj, noi],
            get: &obs_i,
        },
        obs_j: Table {
            dims: vec![ns, naj, noj],
            get: &obs_j,
        },
        reward_i: Table {
            dims: vec![ns, nai, naj],
            get: &reward_i,
        },
        reward_j: Table {
            dims: vec![ns, naj, nai],
            get: &reward_j,
        },
        initial_belief: domain.initial_belief(),
        views,
    };
    let mut text = serde_json::to_string(&doc).expect("domain tables serialize");
    text.push('\n');
    text
}
