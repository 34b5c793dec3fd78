//! Reader for a small subset of the EPANET INP format.
//!
//! The grammar is documented in `docs/inp-format.md`. Lengths and heads are
//! in ft, diameters in inches, flows and demands in the `Units` option
//! (GPM unless set).

use std::collections::BTreeMap;

use log::warn;

use super::IoError;
use crate::hydraulics::ResistanceSpec;
use crate::network::{DemandPattern, Link, Node, NodeKind, PumpCurve, Tank};
use crate::units::FlowUnit;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Headloss {
    HazenWilliams,
    DarcyWeisbach,
    ChezyManning,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InpOptions {
    pub units: FlowUnit,
    pub headloss: Headloss,
    /// Symmetric flow bound for every link, in `units`.
    pub flow_bound: f64,
}

impl Default for InpOptions {
    fn default() -> Self {
        InpOptions {
            units: FlowUnit::Gpm,
            headloss: Headloss::HazenWilliams,
            flow_bound: f64::INFINITY,
        }
    }
}

/// Result of [`parse_network`]. Demands in `patterns` are in cfs.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedNetwork {
    pub nodes: Vec<Node>,
    pub links: Vec<Link>,
    pub patterns: DemandPattern,
    pub options: InpOptions,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Title,
    Options,
    Junctions,
    Reservoirs,
    Tanks,
    Pipes,
    Pumps,
    Patterns,
    Demands,
    End,
    Skipped,
}

/// Tokens of one line with their 1-based columns.
struct Line<'a> {
    number: usize,
    tokens: Vec<(usize, &'a str)>,
    /// Column just past the last token, for "missing field" errors.
    end: usize,
}

impl<'a> Line<'a> {
    fn new(number: usize, text: &'a str) -> Self {
        let text = text.split(';').next().unwrap_or("");
        let mut tokens = Vec::new();
        let mut start = None;
        for (i, c) in text.char_indices() {
            match (c.is_whitespace(), start) {
                (true, Some(s)) => {
                    tokens.push((s, &text[s..i]));
                    start = None;
                }
                (false, None) => start = Some(i),
                _ => {}
            }
        }
        if let Some(s) = start {
            tokens.push((s, &text[s..]));
        }
        let col = |byte: usize| text[..byte].chars().count() + 1;
        Line {
            number,
            end: col(text.trim_end().len()) + 1,
            tokens: tokens.into_iter().map(|(b, t)| (col(b), t)).collect(),
        }
    }

    fn err(&self, column: usize, expected: impl Into<String>) -> IoError {
        IoError::Syntax {
            line: self.number,
            column,
            expected: expected.into(),
        }
    }

    fn text(&self, i: usize, expected: &str) -> Result<&'a str, IoError> {
        self.tokens
            .get(i)
            .map(|t| t.1)
            .ok_or_else(|| self.err(self.end, expected))
    }

    fn number(&self, i: usize, expected: &str) -> Result<f64, IoError> {
        let (col, tok) = *self.tokens.get(i).ok_or_else(|| self.err(self.end, expected))?;
        tok.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| self.err(col, expected))
    }

    fn optional_number(&self, i: usize, expected: &str) -> Result<Option<f64>, IoError> {
        match self.tokens.get(i) {
            None => Ok(None),
            Some(_) => self.number(i, expected).map(Some),
        }
    }

    fn no_more(&self, n: usize) -> Result<(), IoError> {
        match self.tokens.get(n) {
            Some(&(col, _)) => Err(self.err(col, "end of line")),
            None => Ok(()),
        }
    }
}

struct JunctionDemand {
    base: f64,
    pattern: Option<String>,
}

/// Parse INP-subset text into network parts.
pub fn parse_network(text: &str) -> Result<ParsedNetwork, IoError> {
    let mut section = Section::Skipped;
    let mut seen_section = false;
    let mut options = InpOptions::default();
    let mut warnings = Vec::new();

    let mut nodes = Vec::new();
    let mut pipe_lines = Vec::new();
    let mut pump_lines = Vec::new();
    let mut junction_demand: BTreeMap<String, JunctionDemand> = BTreeMap::new();
    let mut demand_overrides: Vec<(String, JunctionDemand)> = Vec::new();
    let mut multipliers: BTreeMap<String, Vec<f64>> = BTreeMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = Line::new(idx + 1, raw);
        let Some(&(col, first)) = line.tokens.first() else {
            continue;
        };
        if first.starts_with('[') {
            let name = first.trim_start_matches('[').trim_end_matches(']').to_ascii_uppercase();
            if !first.ends_with(']') || line.tokens.len() > 1 {
                return Err(line.err(col, "section header like [PIPES]"));
            }
            seen_section = true;
            section = match name.as_str() {
                "TITLE" => Section::Title,
                "OPTIONS" => Section::Options,
                "JUNCTIONS" => Section::Junctions,
                "RESERVOIRS" => Section::Reservoirs,
                "TANKS" => Section::Tanks,
                "PIPES" => Section::Pipes,
                "PUMPS" => Section::Pumps,
                "PATTERNS" => Section::Patterns,
                "DEMANDS" => Section::Demands,
                "END" => Section::End,
                "VALVES" => return Err(IoError::Unsupported(name)),
                _ => {
                    let msg = format!(
                        "line {}: section [{name}] is not supported and was skipped",
                        line.number
                    );
                    warn!("{msg}");
                    warnings.push(msg);
                    Section::Skipped
                }
            };
            continue;
        }
        if !seen_section {
            return Err(line.err(col, "section header"));
        }
        match section {
            Section::Title | Section::Skipped => {}
            Section::End => {
                let msg = format!("line {}: content after [END] ignored", line.number);
                warnings.push(msg);
            }
            Section::Options => parse_option(&line, &mut options)?,
            Section::Junctions => {
                let id = line.text(0, "junction id")?;
                let elevation = line.number(1, "elevation")?;
                let base = line.optional_number(2, "base demand")?.unwrap_or(0.0);
                let pattern = line.tokens.get(3).map(|t| t.1.to_string());
                line.no_more(4)?;
                nodes.push(Node {
                    id: id.into(),
                    elevation,
                    kind: NodeKind::Junction {
                        demand_pattern_id: pattern.clone(),
                    },
                });
                junction_demand.insert(id.into(), JunctionDemand { base, pattern });
            }
            Section::Reservoirs => {
                let id = line.text(0, "reservoir id")?;
                let head = line.number(1, "head")?;
                line.no_more(2)?;
                nodes.push(Node::reservoir(id, head));
            }
            Section::Tanks => {
                let id = line.text(0, "tank id")?;
                let elevation = line.number(1, "elevation")?;
                let init = line.number(2, "initial level")?;
                let min = line.number(3, "minimum level")?;
                let max = line.number(4, "maximum level")?;
                let diameter = line.number(5, "diameter (ft)")?;
                let safety = line.optional_number(6, "safety level")?.unwrap_or(min);
                line.no_more(7)?;
                nodes.push(Node::tank(
                    id,
                    elevation,
                    Tank {
                        area: std::f64::consts::PI * diameter * diameter / 4.0,
                        initial_head: elevation + init,
                        head_min: elevation + min,
                        head_max: elevation + max,
                        safety_head: elevation + safety,
                    },
                ));
            }
            Section::Pipes => pipe_lines.push(line),
            Section::Pumps => pump_lines.push(line),
            Section::Patterns => {
                let id = line.text(0, "pattern id")?;
                let values = multipliers.entry(id.into()).or_default();
                for i in 1..line.tokens.len() {
                    values.push(line.number(i, "multiplier")?);
                }
            }
            Section::Demands => {
                let id = line.text(0, "junction id")?;
                let base = line.number(1, "demand")?;
                let pattern = line.tokens.get(2).map(|t| t.1.to_string());
                line.no_more(3)?;
                demand_overrides.push((id.into(), JunctionDemand { base, pattern }));
            }
        }
    }

    // pipes and pumps depend on options that may appear anywhere
    let kappa = options.units.cfs_per_unit();
    let bound = options.flow_bound * kappa;
    let mut links = Vec::new();
    for line in &pipe_lines {
        let id = line.text(0, "pipe id")?;
        let from = line.text(1, "start node")?;
        let to = line.text(2, "end node")?;
        let length = line.number(3, "length (ft)")?;
        let diameter = line.number(4, "diameter (in)")? / 12.0;
        let roughness = line.number(5, "roughness")?;
        let spec = match options.headloss {
            Headloss::HazenWilliams => {
                line.no_more(6)?;
                ResistanceSpec::hazen_williams(length, diameter, roughness)
            }
            Headloss::ChezyManning => {
                line.no_more(6)?;
                ResistanceSpec::chezy_manning(length, diameter, roughness)
            }
            Headloss::DarcyWeisbach => {
                let f = line.number(6, "friction factor")?;
                line.no_more(7)?;
                ResistanceSpec::darcy_weisbach(length, diameter, roughness, f)
            }
        };
        links.push(Link::pipe(id, from, to, spec, bound));
    }
    for line in &pump_lines {
        let id = line.text(0, "pump id")?;
        let from = line.text(1, "start node")?;
        let to = line.text(2, "end node")?;
        let keyword = line.text(3, "HEAD")?;
        if !keyword.eq_ignore_ascii_case("HEAD") {
            return Err(line.err(line.tokens[3].0, "HEAD"));
        }
        let curve = PumpCurve {
            shutoff_head: line.number(4, "shutoff head h0")?,
            coefficient: line.number(5, "curve coefficient r")?,
            exponent: line.number(6, "curve exponent")?,
            flow_unit: options.units,
        };
        line.no_more(7)?;
        links.push(Link::pump(id, from, to, curve, bound));
    }

    for (id, d) in demand_overrides {
        match junction_demand.get_mut(&id) {
            Some(slot) => *slot = d,
            None => return Err(IoError::Network(crate::network::NetworkError::UnknownDemandNode(id))),
        }
    }
    let mut patterns = DemandPattern::new();
    for (id, d) in junction_demand {
        let series = match &d.pattern {
            None => vec![d.base * kappa],
            Some(p) => match multipliers.get(p) {
                Some(m) if !m.is_empty() => m.iter().map(|f| f * d.base * kappa).collect(),
                _ => {
                    return Err(IoError::UnknownPattern {
                        junction: id,
                        pattern: p.clone(),
                    })
                }
            },
        };
        patterns.insert(id, series);
    }
    // series of length 1 are held; longer ones are padded to a common length
    let len = patterns.series.values().map(Vec::len).max().unwrap_or(0);
    for series in patterns.series.values_mut() {
        let last = *series.last().unwrap_or(&0.0);
        series.resize(len, last);
    }

    Ok(ParsedNetwork {
        nodes,
        links,
        patterns,
        options,
        warnings,
    })
}

fn parse_option(line: &Line<'_>, options: &mut InpOptions) -> Result<(), IoError> {
    let key = line.text(0, "option name")?;
    let value = line.text(1, "option value")?;
    let value_col = line.tokens[1].0;
    match key.to_ascii_uppercase().as_str() {
        "UNITS" => {
            options.units = value.parse().map_err(|_| line.err(value_col, "GPM or CFS"))?;
        }
        "HEADLOSS" => {
            options.headloss = match value.to_ascii_uppercase().as_str() {
                "H-W" => Headloss::HazenWilliams,
                "D-W" => Headloss::DarcyWeisbach,
                "C-M" => Headloss::ChezyManning,
                _ => return Err(line.err(value_col, "H-W, D-W or C-M")),
            };
        }
        "FLOWBOUND" => {
            let v = line.number(1, "positive flow bound")?;
            if v <= 0.0 {
                return Err(line.err(value_col, "positive flow bound"));
            }
            options.flow_bound = v;
        }
        _ => return Err(line.err(line.tokens[0].0, "UNITS, HEADLOSS or FLOWBOUND")),
    }
    line.no_more(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::build_network;

    #[test]
    fn minimal_file() {
        let text = "[RESERVOIRS]\nR 700\n[JUNCTIONS]\nJ 650 100\n[PIPES]\nP R J 1000 12 100\n";
        let p = parse_network(text).unwrap();
        let net = build_network(p.nodes.clone(), p.links.clone(), &p.patterns).unwrap();
        assert_eq!((net.n_junctions(), net.n_pipes(), net.n_tanks()), (1, 1, 0));
        assert!((net.demands_at(0)[0] - 100.0 / 448.831).abs() < 1e-12);
        assert!(p.links[0].flow_max.is_infinite());
    }

    #[test]
    fn valves_are_rejected() {
        let text = "[RESERVOIRS]\nR 700\n[VALVES]\nV 1 2 12 PRV 50\n";
        assert_eq!(parse_network(text).unwrap_err(), IoError::Unsupported("VALVES".into()));
    }

    #[test]
    fn unknown_section_warns() {
        let text = "[COORDINATES]\n1 2 3\n[RESERVOIRS]\nR 700\n";
        let p = parse_network(text).unwrap();
        assert_eq!(p.warnings.len(), 1);
        assert!(p.warnings[0].contains("COORDINATES"));
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse_network("[JUNCTIONS]\n  J1  abc\n").unwrap_err();
        assert_eq!(
            err,
            IoError::Syntax {
                line: 2,
                column: 7,
                expected: "elevation".into()
            }
        );
        let err = parse_network("[JUNCTIONS]\nJ1 ; no elevation\n").unwrap_err();
        assert!(matches!(err, IoError::Syntax { line: 2, column: 4, .. }), "{err:?}");
        let err = parse_network("R 700\n").unwrap_err();
        assert!(matches!(err, IoError::Syntax { line: 1, column: 1, .. }));
        let err = parse_network("[PUMPS]\n9 1 2 POWER 5\n").unwrap_err();
        assert!(matches!(err, IoError::Syntax { line: 2, column: 7, .. }), "{err:?}");
    }

    #[test]
    fn patterns_and_demands() {
        let text = "\
[OPTIONS]
Units CFS
[JUNCTIONS]
A 10 1.0 P1
B 10 2.0
[RESERVOIRS]
R 100
[PATTERNS]
P1 1.0 2.0
P1 3.0
[DEMANDS]
B 4.0 P1
";
        let p = parse_network(text).unwrap();
        assert_eq!(p.patterns.series["A"], vec![1.0, 2.0, 3.0]);
        assert_eq!(p.patterns.series["B"], vec![4.0, 8.0, 12.0]);
        let bad = text.replace("B 4.0 P1", "B 4.0 P2");
        assert!(matches!(parse_network(&bad), Err(IoError::UnknownPattern { .. })));
    }

    #[test]
    fn tanks_use_levels_above_elevation() {
        let text = "[TANKS]\nT 830 4 0 20 60 8\n";
        let p = parse_network(text).unwrap();
        let NodeKind::Tank(t) = &p.nodes[0].kind else { panic!() };
        assert_eq!(
            (t.initial_head, t.head_min, t.head_max, t.safety_head),
            (834.0, 830.0, 850.0, 838.0)
        );
        assert!((t.area - 900.0 * std::f64::consts::PI).abs() < 1e-9);
    }
}
