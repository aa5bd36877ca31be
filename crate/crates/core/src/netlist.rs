//! Combinational netlist format and a plain Boolean reference evaluator.
//!
//! ```text
//! # one-bit half adder
//! inputs a b;
//! s = XOR(a, b);
//! c = AND(a, b);
//! out s c;
//! ```
//!
//! Statements end with `;`. `#` starts a comment. Assignments may use
//! NOR, IMPLY, OR, NIMP, NOT, AND, NAND, XOR. Signals must be defined
//! before use, which keeps the netlist acyclic by construction.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// Gate vocabulary of the netlist language (native ops plus the derived
/// ones the compiler knows how to lower).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum NetOp {
    Nor,
    Imply,
    Or,
    Nimp,
    Not,
    And,
    Nand,
    Xor,
}

impl NetOp {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "NOR" => Some(NetOp::Nor),
            "IMPLY" => Some(NetOp::Imply),
            "OR" => Some(NetOp::Or),
            "NIMP" => Some(NetOp::Nimp),
            "NOT" => Some(NetOp::Not),
            "AND" => Some(NetOp::And),
            "NAND" => Some(NetOp::Nand),
            "XOR" => Some(NetOp::Xor),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            NetOp::Nor => "NOR",
            NetOp::Imply => "IMPLY",
            NetOp::Or => "OR",
            NetOp::Nimp => "NIMP",
            NetOp::Not => "NOT",
            NetOp::And => "AND",
            NetOp::Nand => "NAND",
            NetOp::Xor => "XOR",
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            NetOp::Not => 1,
            _ => 2,
        }
    }

    pub fn eval(&self, a: bool, b: bool) -> bool {
        match self {
            NetOp::Nor => !(a | b),
            NetOp::Imply => !a | b,
            NetOp::Or => a | b,
            NetOp::Nimp => a & !b,
            NetOp::Not => !a,
            NetOp::And => a & b,
            NetOp::Nand => !(a & b),
            NetOp::Xor => a ^ b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub target: String,
    pub op: NetOp,
    pub args: Vec<String>,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Netlist {
    pub inputs: Vec<String>,
    pub assignments: Vec<Assignment>,
    pub outputs: Vec<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NetlistError {
    #[error("line {line}, col {col}: syntax error: {msg}")]
    SyntaxError { line: usize, col: usize, msg: String },
    #[error("line {line}: undefined signal '{name}'")]
    UndefinedSignal { line: usize, name: String },
    #[error("line {line}: '{name}' depends on itself")]
    CyclicDefinition { line: usize, name: String },
    #[error("line {line}: duplicate name '{name}'")]
    DuplicateName { line: usize, name: String },
    #[error("netlist declares no inputs")]
    NoInputs,
    #[error("netlist declares no outputs")]
    NoOutputs,
}

fn is_ident(s: &str) -> bool {
    !s.is_empty()
        && s.chars().next().unwrap().is_ascii_alphabetic()
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Parse the netlist text. Statements are `;`-terminated; positions in
/// errors are 1-based.
pub fn parse_netlist(text: &str) -> Result<Netlist, NetlistError> {
    let mut inputs: Vec<String> = Vec::new();
    let mut assignments: Vec<Assignment> = Vec::new();
    let mut outputs: Vec<String> = Vec::new();
    let mut defined: BTreeMap<String, usize> = BTreeMap::new();

    for (line_idx, raw) in text.lines().enumerate() {
        let line_no = line_idx + 1;
        let code = raw.split('#').next().unwrap_or("");
        if code.trim().is_empty() {
            continue;
        }
        let col_of = |needle: &str| raw.find(needle).map_or(1, |p| p + 1);
        let syntax = |col: usize, msg: String| NetlistError::SyntaxError {
            line: line_no,
            col,
            msg,
        };
        for stmt in code.split(';') {
            let stmt = stmt.trim();
            if stmt.is_empty() {
                continue;
            }
            // statements must be ';'-terminated: the last split chunk before
            // end-of-line must be blank
            if !code.trim_end().ends_with(';') && stmt == code.split(';').last().unwrap().trim() {
                return Err(syntax(
                    raw.trim_end().len(),
                    "missing ';' at end of statement".to_string(),
                ));
            }
            if let Some(rest) = stmt.strip_prefix("inputs") {
                for name in rest.split_whitespace() {
                    if !is_ident(name) {
                        return Err(syntax(col_of(name), format!("bad identifier '{name}'")));
                    }
                    if defined.insert(name.to_string(), line_no).is_some() {
                        return Err(NetlistError::DuplicateName {
                            line: line_no,
                            name: name.to_string(),
                        });
                    }
                    inputs.push(name.to_string());
                }
            } else if let Some(rest) = stmt.strip_prefix("out ") {
                for name in rest.split_whitespace() {
                    if !defined.contains_key(name) {
                        return Err(NetlistError::UndefinedSignal {
                            line: line_no,
                            name: name.to_string(),
                        });
                    }
                    outputs.push(name.to_string());
                }
            } else {
                // target = OP(arg, arg)
                let (target, expr) = stmt.split_once('=').ok_or_else(|| {
                    syntax(col_of(stmt), format!("expected '=' in '{stmt}'"))
                })?;
                let target = target.trim();
                if !is_ident(target) {
                    return Err(syntax(col_of(target), format!("bad identifier '{target}'")));
                }
                let expr = expr.trim();
                let open = expr
                    .find('(')
                    .ok_or_else(|| syntax(col_of(expr), format!("expected '(' in '{expr}'")))?;
                if !expr.ends_with(')') {
                    return Err(syntax(col_of(expr), format!("expected ')' in '{expr}'")));
                }
                let op_name = expr[..open].trim();
                let op = NetOp::parse(op_name)
                    .ok_or_else(|| syntax(col_of(op_name), format!("unknown op '{op_name}'")))?;
                let args: Vec<String> = expr[open + 1..expr.len() - 1]
                    .split(',')
                    .map(|a| a.trim().to_string())
                    .filter(|a| !a.is_empty())
                    .collect();
                if args.len() != op.arity() {
                    return Err(syntax(
                        col_of(op_name),
                        format!("{} takes {} argument(s), got {}", op.name(), op.arity(), args.len()),
                    ));
                }
                for a in &args {
                    if a == target {
                        return Err(NetlistError::CyclicDefinition {
                            line: line_no,
                            name: target.to_string(),
                        });
                    }
                    if !defined.contains_key(a) {
                        return Err(NetlistError::UndefinedSignal {
                            line: line_no,
                            name: a.clone(),
                        });
                    }
                }
                if defined.insert(target.to_string(), line_no).is_some() {
                    return Err(NetlistError::DuplicateName {
                        line: line_no,
                        name: target.to_string(),
                    });
                }
                assignments.push(Assignment {
                    target: target.to_string(),
                    op,
                    args,
                    line: line_no,
                });
            }
        }
    }
    if inputs.is_empty() {
        return Err(NetlistError::NoInputs);
    }
    if outputs.is_empty() {
        return Err(NetlistError::NoOutputs);
    }
    Ok(Netlist {
        inputs,
        assignments,
        outputs,
    })
}

impl fmt::Display for Netlist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "inputs {};", self.inputs.join(" "))?;
        for a in &self.assignments {
            writeln!(f, "{} = {}({});", a.target, a.op.name(), a.args.join(", "))?;
        }
        writeln!(f, "out {};", self.outputs.join(" "))
    }
}

impl Netlist {
    /// Reference Boolean evaluation; `values` maps input bit positions to
    /// `self.inputs` order.
    pub fn evaluate(&self, values: &[bool]) -> Result<Vec<bool>, NetlistError> {
        assert_eq!(values.len(), self.inputs.len(), "one bit per input");
        let mut env: BTreeMap<&str, bool> = BTreeMap::new();
        for (name, &bit) in self.inputs.iter().zip(values) {
            env.insert(name, bit);
        }
        for a in &self.assignments {
            let x = env[a.args[0].as_str()];
            let y = if a.args.len() > 1 {
                env[a.args[1].as_str()]
            } else {
                false
            };
            env.insert(&a.target, a.op.eval(x, y));
        }
        Ok(self.outputs.iter().map(|o| env[o.as_str()]).collect())
    }
}
