//! A small reader for the LP text dialect: checks section order, row labels,
//! senses and numeric tokens, and exposes rows for feasibility checks.

use std::collections::HashMap;

/// `(label, terms, sense, rhs)`.
pub type Row = (String, Vec<(String, f64)>, String, f64);

#[derive(Debug)]
pub struct Parsed {
    pub objective: Vec<(String, f64)>,
    pub constraints: Vec<Row>,
    pub free: Vec<String>,
    pub binary: Vec<String>,
}

pub fn parse_terms(text: &str) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    let mut sign = 1.0;
    let mut coef: Option<f64> = None;
    for tok in text.split_whitespace() {
        match tok {
            "+" => sign = 1.0,
            "-" => sign = -1.0,
            t => {
                if let Ok(x) = t.parse::<f64>() {
                    coef = Some(x);
                } else {
                    assert!(t.chars().next().unwrap().is_ascii_alphabetic(), "bad token {t}");
                    out.push((t.to_string(), sign * coef.unwrap_or(1.0)));
                    sign = 1.0;
                    coef = None;
                }
            }
        }
    }
    assert!(coef.is_none(), "dangling coefficient in '{text}'");
    out
}

/// Reads the LP dialect: sections in order, named rows, wrapped lines.
pub fn parse_lp(text: &str) -> Parsed {
    let mut section = "";
    let mut seen = Vec::new();
    let mut rows: Vec<String> = Vec::new();
    let mut free = Vec::new();
    let mut binary = Vec::new();
    let mut obj = String::new();
    for line in text.lines() {
        let trimmed = line.trim();
        if trimmed.starts_with('\\') || trimmed.is_empty() {
            continue;
        }
        match trimmed {
            "Minimize" | "Subject To" | "Bounds" | "Binary" | "End" => {
                section = match trimmed {
                    "Minimize" => "min",
                    "Subject To" => "st",
                    "Bounds" => "bounds",
                    "Binary" => "bin",
                    _ => "end",
                };
                seen.push(section);
                continue;
            }
            _ => {}
        }
        let continuation = line.starts_with("   ");
        match section {
            "min" => obj.push_str(&format!(" {trimmed}")),
            "st" => {
                if continuation {
                    rows.last_mut().unwrap().push_str(&format!(" {trimmed}"));
                } else {
                    rows.push(trimmed.to_string());
                }
            }
            "bounds" => {
                let parts: Vec<&str> = trimmed.split_whitespace().collect();
                assert_eq!(parts.len(), 2, "bound line '{trimmed}'");
                assert_eq!(parts[1], "free");
                free.push(parts[0].to_string());
            }
            "bin" => binary.push(trimmed.to_string()),
            other => panic!("content in section {other}: {trimmed}"),
        }
    }
    let expected: Vec<&str> = if binary.is_empty() {
        vec!["min", "st", "bounds", "end"]
    } else {
        vec!["min", "st", "bounds", "bin", "end"]
    };
    assert_eq!(seen, expected);
    let obj = obj.trim().strip_prefix("obj:").expect("objective label").to_string();
    let constraints = rows
        .iter()
        .map(|r| {
            let (name, rest) = r.split_once(':').expect("constraint name");
            let (sense, pos) = [">=", "<=", "="]
                .iter()
                .find_map(|s| rest.find(s).map(|p| (*s, p)))
                .expect("sense");
            let rhs: f64 = rest[pos + sense.len()..].trim().parse().expect("rhs");
            (
                name.trim().to_string(),
                parse_terms(&rest[..pos]),
                sense.to_string(),
                rhs,
            )
        })
        .collect();
    Parsed {
        objective: parse_terms(&obj),
        constraints,
        free,
        binary,
    }
}

pub fn lhs(terms: &[(String, f64)], x: &HashMap<String, f64>) -> f64 {
    terms.iter().map(|(v, c)| c * x.get(v).copied().unwrap_or(0.0)).sum()
}

pub fn satisfied(p: &Parsed, x: &HashMap<String, f64>, tol: f64) -> bool {
    p.constraints.iter().all(|(_, t, sense, rhs)| {
        let l = lhs(t, x);
        match sense.as_str() {
            ">=" => l >= rhs - tol,
            "<=" => l <= rhs + tol,
            _ => (l - rhs).abs() <= tol,
        }
    })
}
