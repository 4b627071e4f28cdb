//! Tolerant JSON extraction from model output: strips code fences and
//! falls back to the first balanced object or array when the reply wraps
//! the JSON in prose.

use serde_json::Value;

pub fn extract_json(raw: &str) -> Option<Value> {
    let stripped = strip_code_fences(raw.trim());
    if let Ok(v) = serde_json::from_str::<Value>(stripped) {
        return Some(v);
    }
    let balanced = first_balanced_json(stripped)?;
    serde_json::from_str(balanced).ok()
}

fn strip_code_fences(s: &str) -> &str {
    let s = s.strip_prefix("```json").unwrap_or(s);
    let s = s.strip_prefix("```").unwrap_or(s);
    let s = s.strip_suffix("```").unwrap_or(s);
    s.trim()
}

fn first_balanced_json(s: &str) -> Option<&str> {
    let mut in_str = false;
    let mut escaped = false;
    let mut depth = 0usize;
    let mut start = None;

    for (i, ch) in s.char_indices() {
        if in_str {
            if escaped {
                escaped = false;
            } else if ch == '\\' {
                escaped = true;
            } else if ch == '"' {
                in_str = false;
            }
            continue;
        }
        match ch {
            '"' => in_str = true,
            '{' | '[' => {
                if start.is_none() {
                    start = Some(i);
                }
                depth += 1;
            }
            '}' | ']' if depth > 0 => {
                depth -= 1;
                if depth == 0 {
                    return Some(&s[start?..=i]);
                }
            }
            _ => {}
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_plain_json() {
        let v = extract_json(r#"{"a": 1}"#).unwrap();
        assert_eq!(v["a"], 1);
    }

    #[test]
    fn strips_fences() {
        let v = extract_json("```json\n{\"a\": 2}\n```").unwrap();
        assert_eq!(v["a"], 2);
    }

    #[test]
    fn finds_object_inside_prose() {
        let v = extract_json("Sure! Here is the answer:\n{\"selected\": [1, 3]}\nHope that helps.")
            .unwrap();
        assert_eq!(v["selected"][1], 3);
    }

    #[test]
    fn handles_braces_inside_strings() {
        let v = extract_json(r#"prefix {"q": "a { tricky } quote"} suffix"#).unwrap();
        assert_eq!(v["q"], "a { tricky } quote");
    }

    #[test]
    fn garbage_yields_none() {
        assert!(extract_json("no json here").is_none());
        assert!(extract_json("{unclosed").is_none());
    }
}
