//! Two-column text rendering of JSON output: one `path value` line per
//! leaf, with short scalar arrays kept on one line.

use serde_json::Value;

const INLINE_ARRAY: usize = 12;

fn scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => "-".into(),
        other => other.to_string(),
    }
}

fn is_scalar(v: &Value) -> bool {
    !matches!(v, Value::Array(_) | Value::Object(_))
}

fn walk(path: &str, v: &Value, rows: &mut Vec<(String, String)>) {
    match v {
        Value::Object(map) => {
            if map.is_empty() {
                rows.push((path.into(), "{}".into()));
            }
            for (k, child) in map {
                let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                walk(&p, child, rows);
            }
        }
        Value::Array(items) if items.iter().all(is_scalar) && items.len() <= INLINE_ARRAY => {
            rows.push((path.into(), items.iter().map(scalar).collect::<Vec<_>>().join(", ")));
        }
        Value::Array(items) => {
            for (i, child) in items.iter().enumerate() {
                walk(&format!("{path}[{i}]"), child, rows);
            }
        }
        leaf => rows.push((path.into(), scalar(leaf))),
    }
}

pub fn render(value: &Value) -> String {
    if is_scalar(value) {
        return format!("{}\n", scalar(value));
    }
    let mut rows = Vec::new();
    walk("", value, &mut rows);
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    rows.iter().map(|(k, v)| format!("{k:<width$}  {v}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn flattens_nested_values() {
        let text = render(&json!({"a": {"b": 1, "c": [1, 2]}, "rows": [{"x": "p"}, {"x": null}]}));
        assert_eq!(text, "a.b        1\na.c        1, 2\nrows[0].x  p\nrows[1].x  -\n");
        assert_eq!(render(&json!("id")), "id\n");
    }
}
