//! The shipped example configs parse, and the published schema names every
//! field the config serializes.

use std::path::PathBuf;

use kslab_core::RunConfig;
use serde_json::Value;

fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn example_configs() -> Vec<PathBuf> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(repo_root().join("configs"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
}

/// Every key of `value` must be declared at the matching place in `schema`.
fn covered(value: &Value, schema: &Value, path: &str) -> Vec<String> {
    let mut missing = Vec::new();
    match value {
        Value::Object(map) => {
            let alternatives: Vec<&Value> = match schema.get("oneOf") {
                Some(Value::Array(alts)) => alts.iter().collect(),
                _ => vec![schema],
            };
            for (k, v) in map {
                let sub = alternatives.iter().find_map(|s| s.get("properties").and_then(|p| p.get(k)));
                match sub {
                    Some(sub) => missing.extend(covered(v, sub, &format!("{path}.{k}"))),
                    None => missing.push(format!("{path}.{k}")),
                }
            }
        }
        Value::Array(items) => {
            if let Some(item_schema) = schema.get("items") {
                for (i, v) in items.iter().enumerate() {
                    missing.extend(covered(v, item_schema, &format!("{path}[{i}]")));
                }
            }
        }
        _ => {}
    }
    missing
}

#[test]
fn example_configs_parse() {
    let paths = example_configs();
    assert!(paths.len() >= 3);
    for p in paths {
        RunConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
}

#[test]
fn schema_declares_every_serialized_field() {
    let schema: Value =
        serde_json::from_str(&std::fs::read_to_string(repo_root().join("docs/run_config.schema.json")).unwrap())
            .unwrap();
    let mut configs: Vec<RunConfig> = example_configs().iter().map(|p| RunConfig::load(p).unwrap()).collect();
    // fill in the optional fields the examples leave out
    let mut extra = configs[0].clone();
    extra.diagnostics.tolerances.concentration_floor = Some(1.0);
    configs.push(extra);
    for cfg in configs {
        let missing = covered(&serde_json::to_value(&cfg).unwrap(), &schema, "");
        assert!(missing.is_empty(), "schema lacks {missing:?}");
    }
}
