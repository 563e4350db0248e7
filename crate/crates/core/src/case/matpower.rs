//! Reader for the numeric subset of MATPOWER `.m` case files.

use super::{Bus, CaseError, Fuel, Generator, GridCase, Line, Load, Warning};

/// A numeric matrix together with the source line of each row.
struct Matrix {
    rows: Vec<(usize, Vec<f64>)>,
}

const KNOWN_IGNORED: &[&str] = &["version"];

/// Parses the `mpc.*` matrices of a MATPOWER case. The result is not yet
/// validated.
pub fn parse_matpower(text: &str) -> Result<(GridCase, Vec<Warning>), CaseError> {
    let mut warnings = Vec::new();
    let mut base_mva = None;
    let mut bus = None;
    let mut gen = None;
    let mut branch = None;
    let mut gencost = None;

    let lines: Vec<&str> = text.lines().map(strip_comment).collect();
    let mut i = 0;
    while i < lines.len() {
        let line = lines[i].trim();
        let lineno = i + 1;
        i += 1;
        if line.is_empty() || line.starts_with("function") {
            continue;
        }
        let Some(rest) = line.strip_prefix("mpc.") else {
            if line.chars().all(|c| c == ';' || c.is_whitespace()) {
                continue;
            }
            warnings.push(Warning {
                line: lineno,
                message: format!("ignored statement `{line}`"),
            });
            continue;
        };
        let Some(eq) = rest.find('=') else {
            return Err(CaseError::Syntax {
                line: lineno,
                column: 1,
                message: "expected `=` after field name".into(),
            });
        };
        let name = rest[..eq].trim();
        let rhs = rest[eq + 1..].trim();
        if let Some(after_bracket) = rhs.strip_prefix('[') {
            // Matrix: collect until the closing bracket.
            let column0 = line.len() - after_bracket.len() + 1;
            let mut body = vec![(lineno, column0, after_bracket.to_string())];
            let mut closed = after_bracket.contains(']');
            while !closed {
                if i >= lines.len() {
                    return Err(CaseError::Syntax {
                        line: lineno,
                        column: column0,
                        message: format!("unterminated matrix `mpc.{name}`"),
                    });
                }
                let l = lines[i];
                body.push((i + 1, 1, l.to_string()));
                closed = l.contains(']');
                i += 1;
            }
            let matrix = parse_matrix(&body)?;
            match name {
                "bus" => bus = Some(matrix),
                "gen" => gen = Some(matrix),
                "branch" => branch = Some(matrix),
                "gencost" => gencost = Some(matrix),
                _ => warnings.push(Warning {
                    line: lineno,
                    message: format!("unknown section `mpc.{name}` ignored"),
                }),
            }
        } else if name == "baseMVA" {
            let value = rhs.trim_end_matches(';').trim();
            base_mva = Some(value.parse::<f64>().map_err(|_| CaseError::Syntax {
                line: lineno,
                column: line.find(value).unwrap_or(0) + 1,
                message: format!("invalid number `{value}`"),
            })?);
        } else if KNOWN_IGNORED.contains(&name) {
            continue;
        } else {
            if rhs.starts_with('{') && !rhs.contains('}') {
                // Skip a cell array body.
                while i < lines.len() && !lines[i].contains('}') {
                    i += 1;
                }
                i += 1;
            }
            warnings.push(Warning {
                line: lineno,
                message: format!("unknown section `mpc.{name}` ignored"),
            });
        }
    }

    let missing = |what: &str| CaseError::semantic("case", format!("missing `mpc.{what}`"));
    let base_mva = base_mva.ok_or_else(|| missing("baseMVA"))?;
    let bus = bus.ok_or_else(|| missing("bus"))?;
    let branch = branch.ok_or_else(|| missing("branch"))?;
    let gen = gen.unwrap_or(Matrix { rows: Vec::new() });

    let mut buses = Vec::new();
    let mut loads = Vec::new();
    let mut slack = None;
    for (lineno, row) in &bus.rows {
        need_cols(row, 7, *lineno, "bus")?;
        let id = as_id(row[0], *lineno)?;
        if row[1] == 3.0 {
            slack = Some(id);
        }
        buses.push(Bus {
            id,
            zone_id: as_id(row[6], *lineno)?,
        });
        if row[2] > 0.0 {
            loads.push(Load {
                bus: id,
                nominal_mw: row[2],
            });
        }
    }
    loads.sort_by_key(|l| l.bus);
    let slack_bus = slack.ok_or_else(|| CaseError::semantic("bus", "no reference bus (type 3)"))?;

    let mut lines_out = Vec::new();
    for (lineno, row) in &branch.rows {
        need_cols(row, 6, *lineno, "branch")?;
        if row.len() > 10 && row[10] == 0.0 {
            continue;
        }
        let rate = row[5];
        lines_out.push(Line {
            from_bus: as_id(row[0], *lineno)?,
            to_bus: as_id(row[1], *lineno)?,
            reactance: row[3],
            flow_limit: if rate == 0.0 { f64::INFINITY } else { rate },
        });
    }

    let costs = match &gencost {
        Some(m) => Some(linear_costs(m)?),
        None => None,
    };
    let mut generators = Vec::new();
    for (k, (lineno, row)) in gen.rows.iter().enumerate() {
        need_cols(row, 10, *lineno, "gen")?;
        if row[7] <= 0.0 {
            continue;
        }
        let cost = match &costs {
            Some(c) => *c.get(k).ok_or_else(|| {
                CaseError::semantic(format!("generator {k}"), "missing gencost row")
            })?,
            None => 0.0,
        };
        generators.push(Generator {
            bus: as_id(row[0], *lineno)?,
            cost_linear: cost,
            g_min: row[9],
            g_max: row[8],
            fuel: Fuel::Other("unspecified".into()),
            emission_factor: 0.0,
        });
    }

    Ok((
        GridCase {
            base_mva,
            slack_bus,
            buses,
            lines: lines_out,
            generators,
            loads,
            zones: None,
            clusters: None,
        },
        warnings,
    ))
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(p) => &line[..p],
        None => line,
    }
}

fn parse_matrix(body: &[(usize, usize, String)]) -> Result<Matrix, CaseError> {
    let mut rows = Vec::new();
    for (lineno, col0, text) in body {
        let text = match text.find(']') {
            Some(p) => &text[..p],
            None => text.as_str(),
        };
        let mut offset = 0;
        for segment in text.split(';') {
            let mut row = Vec::new();
            let mut pos = 0;
            for tok in segment.split(|c: char| c.is_whitespace() || c == ',') {
                let at = segment[pos..].find(tok).map_or(pos, |p| pos + p);
                pos = at + tok.len();
                if tok.is_empty() {
                    continue;
                }
                let v = parse_number(tok).ok_or_else(|| CaseError::Syntax {
                    line: *lineno,
                    column: col0 + offset + at,
                    message: format!("invalid number `{tok}`"),
                })?;
                row.push(v);
            }
            offset += segment.len() + 1;
            if !row.is_empty() {
                rows.push((*lineno, row));
            }
        }
    }
    Ok(Matrix { rows })
}

fn parse_number(tok: &str) -> Option<f64> {
    match tok {
        "Inf" | "inf" => Some(f64::INFINITY),
        "-Inf" | "-inf" => Some(f64::NEG_INFINITY),
        _ => tok.parse().ok(),
    }
}

fn need_cols(row: &[f64], n: usize, line: usize, what: &str) -> Result<(), CaseError> {
    if row.len() < n {
        return Err(CaseError::Syntax {
            line,
            column: 1,
            message: format!("`{what}` row has {} columns, need at least {n}", row.len()),
        });
    }
    Ok(())
}

fn as_id(v: f64, line: usize) -> Result<usize, CaseError> {
    if v >= 0.0 && v.fract() == 0.0 {
        Ok(v as usize)
    } else {
        Err(CaseError::Syntax {
            line,
            column: 1,
            message: format!("expected a non-negative integer id, found {v}"),
        })
    }
}

/// Linear coefficient of each polynomial cost row.
fn linear_costs(m: &Matrix) -> Result<Vec<f64>, CaseError> {
    m.rows
        .iter()
        .enumerate()
        .map(|(k, (lineno, row))| {
            need_cols(row, 4, *lineno, "gencost")?;
            if row[0] != 2.0 {
                return Err(CaseError::semantic(
                    format!("gencost row {k}"),
                    "only polynomial (model 2) costs are supported",
                ));
            }
            let n = row[3] as usize;
            need_cols(row, 4 + n, *lineno, "gencost")?;
            // Coefficients run from highest order down to the constant.
            Ok(if n >= 2 { row[4 + n - 2] } else { 0.0 })
        })
        .collect()
}
