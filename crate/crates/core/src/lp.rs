//! Minimal writer for the CPLEX LP text format.

use std::io::{self, Write};

/// Comparison sense of a linear constraint.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl Sense {
    fn as_str(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        }
    }
}

#[derive(Clone, Debug)]
pub struct LinearConstraint {
    pub name: String,
    pub terms: Vec<(String, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// A minimization model with free continuous variables and optional binaries.
#[derive(Clone, Debug, Default)]
pub struct LpModel {
    pub comments: Vec<String>,
    pub objective: Vec<(String, f64)>,
    pub constraints: Vec<LinearConstraint>,
    pub free_vars: Vec<String>,
    pub binary_vars: Vec<String>,
}

const MAX_LINE: usize = 200;

impl LpModel {
    pub fn add_constraint(&mut self, name: impl Into<String>, terms: Vec<(String, f64)>, sense: Sense, rhs: f64) {
        self.constraints.push(LinearConstraint {
            name: name.into(),
            terms,
            sense,
            rhs,
        });
    }

    pub fn n_variables(&self) -> usize {
        self.free_vars.len() + self.binary_vars.len()
    }

    pub fn write<W: Write>(&self, out: &mut W) -> io::Result<()> {
        for c in &self.comments {
            writeln!(out, "\\ {c}")?;
        }
        writeln!(out, "Minimize")?;
        let obj: Vec<(String, f64)> = self.objective.iter().filter(|(_, c)| *c != 0.0).cloned().collect();
        if obj.is_empty() {
            // keep the objective well-formed when every weight is zero
            let first = self
                .free_vars
                .first()
                .or(self.binary_vars.first())
                .cloned()
                .unwrap_or_default();
            write_expr(out, " obj:", &[(first, 0.0)], true)?;
        } else {
            write_expr(out, " obj:", &obj, false)?;
        }
        writeln!(out)?;
        writeln!(out, "Subject To")?;
        for c in &self.constraints {
            let terms: Vec<(String, f64)> = c.terms.iter().filter(|(_, x)| *x != 0.0).cloned().collect();
            write_expr(out, &format!(" {}:", c.name), &terms, false)?;
            writeln!(out, " {} {}", c.sense.as_str(), fmt_num(c.rhs))?;
        }
        writeln!(out, "Bounds")?;
        for v in &self.free_vars {
            writeln!(out, " {v} free")?;
        }
        if !self.binary_vars.is_empty() {
            writeln!(out, "Binary")?;
            for v in &self.binary_vars {
                writeln!(out, " {v}")?;
            }
        }
        writeln!(out, "End")?;
        Ok(())
    }

    pub fn to_string_lossy(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("LP output is ASCII")
    }
}

fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        "0".to_string()
    } else {
        format!("{x}")
    }
}

/// Writes `label t1 ± t2 ...`, wrapping long rows. No trailing newline.
fn write_expr<W: Write>(out: &mut W, label: &str, terms: &[(String, f64)], keep_zero: bool) -> io::Result<()> {
    let mut line = String::from(label);
    for (i, (name, coef)) in terms.iter().enumerate() {
        if *coef == 0.0 && !keep_zero {
            continue;
        }
        let sign = if *coef < 0.0 {
            "-"
        } else if i == 0 {
            ""
        } else {
            "+"
        };
        let mag = coef.abs();
        let piece = if mag == 1.0 {
            format!(" {sign} {name}")
        } else {
            format!(" {sign} {} {name}", fmt_num(mag))
        };
        let piece = piece.replace("  ", " ");
        if line.len() + piece.len() > MAX_LINE {
            writeln!(out, "{line}")?;
            line = String::from("   ");
        }
        line.push_str(&piece);
    }
    write!(out, "{line}")
}
