//! Source-problem files fed to the reduction generators.
//!
//! ```text
//! muks            edp             cnf
//! k 2             right 3         variables 3
//! target 2 1      pair 0 4        clause 0 1 2
//! vector 1 0      pair 1 5        clause 0 1 2
//! vector 1 1                      clause 0 1 2
//! ```

use soac_core::generators::{CnfFormula, EdpInstance, MuksInstance};

use crate::format::{err, parse_index, ParseError};

/// Non-empty, comment-stripped lines as (line number, tokens), after
/// checking the leading `kind` line.
fn lines<'a>(text: &'a str, kind: &str) -> Result<Vec<(usize, Vec<&'a str>)>, ParseError> {
    let mut out = text
        .lines()
        .enumerate()
        .map(|(i, l)| {
            (
                i + 1,
                l.split('#').next().unwrap_or("").split_whitespace().collect::<Vec<_>>(),
            )
        })
        .filter(|(_, t)| !t.is_empty());
    match out.next() {
        Some((_, t)) if t == [kind] => Ok(out.collect()),
        Some((line, _)) => err(line, format!("expected `{kind}`")),
        None => err(0, format!("empty {kind} file")),
    }
}

fn numbers(line: usize, tokens: &[&str]) -> Result<Vec<usize>, ParseError> {
    tokens.iter().map(|t| parse_index(line, t, "number")).collect()
}

fn single(line: usize, tokens: &[&str], slot: &mut Option<usize>) -> Result<(), ParseError> {
    if tokens.len() != 2 {
        return err(line, format!("`{}` takes one argument", tokens[0]));
    }
    if slot.is_some() {
        return err(line, format!("duplicate `{}`", tokens[0]));
    }
    *slot = Some(parse_index(line, tokens[1], "number")?);
    Ok(())
}

pub fn parse_muks(text: &str) -> Result<MuksInstance, ParseError> {
    let (mut k, mut target, mut vectors) = (None, None, Vec::new());
    for (line, t) in lines(text, "muks")? {
        match t[0] {
            "k" => single(line, &t, &mut k)?,
            "target" if target.is_none() => target = Some(numbers(line, &t[1..])?),
            "vector" => vectors.push(numbers(line, &t[1..])?),
            other => return err(line, format!("unexpected `{other}`")),
        }
    }
    let to_u64 = |v: Vec<usize>| v.into_iter().map(|x| x as u64).collect();
    let (Some(k), Some(target)) = (k, target) else {
        return err(0, "muks file needs `k` and `target`");
    };
    MuksInstance::new(vectors.into_iter().map(to_u64).collect(), to_u64(target), k).or_else(|e| err(0, e.to_string()))
}

pub fn parse_edp(text: &str) -> Result<EdpInstance, ParseError> {
    let (mut right, mut pairs) = (None, Vec::new());
    for (line, t) in lines(text, "edp")? {
        match t[0] {
            "right" => single(line, &t, &mut right)?,
            "pair" if t.len() == 3 => {
                let p = numbers(line, &t[1..])?;
                pairs.push((p[0], p[1]));
            }
            other => return err(line, format!("unexpected `{other}`")),
        }
    }
    let Some(right) = right else {
        return err(0, "edp file needs `right`");
    };
    EdpInstance::new(right, pairs).or_else(|e| err(0, e.to_string()))
}

pub fn parse_cnf(text: &str) -> Result<CnfFormula, ParseError> {
    let (mut variables, mut clauses) = (None, Vec::new());
    for (line, t) in lines(text, "cnf")? {
        match t[0] {
            "variables" => single(line, &t, &mut variables)?,
            "clause" if t.len() == 4 => {
                let c = numbers(line, &t[1..])?;
                clauses.push([c[0], c[1], c[2]]);
            }
            other => return err(line, format!("unexpected `{other}`")),
        }
    }
    let Some(variables) = variables else {
        return err(0, "cnf file needs `variables`");
    };
    CnfFormula::new(variables, clauses).or_else(|e| err(0, e.to_string()))
}
