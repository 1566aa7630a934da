//! Scenario file format: flat key/value sections, one `[global]` section and
//! one `[agent k]` section per agent, diffable and trivially parseable.
//!
//! ```text
//! [global]
//! dt = 0.001
//! duration = 4
//! alpha_gain = 10
//! gamma = 20
//! nominal_gain = 1
//! seed = 1
//! phi_init = random            # scan | random | comma-separated values
//!
//! [agent 1]
//! q_major = 0.4
//! q_minor = 0.2
//! x = 0
//! y = 1
//! theta = -0.7853981633974483
//! # goal_x / goal_y: optional, default sends the agent across the center
//! # goal_theta: optional number or `free`, default holds the initial heading
//! ```
//!
//! [`write_resolved`] serializes a resolved scenario back into this format
//! with every default materialized; re-ingesting that file reproduces the
//! run bit for bit.

use std::fmt::Write as _;

use ellipse_cbf::geometry::{AgentState, EllipseShape};
use ellipse_cbf::safety::PhiInit;
use ellipse_cbf::sim::{AgentSpec, HeadingSpec, ResolvedScenario, ScenarioConfig};
use ellipse_cbf::Vec2;
use thiserror::Error;

use crate::csvfmt::fmt_float;

#[derive(Debug, Error)]
pub enum ScenarioParseError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Malformed { line: usize, text: String },
    #[error("line {line}: unknown section `{name}`")]
    UnknownSection { line: usize, name: String },
    #[error("line {line}: agent sections must appear in order; expected agent {expected}")]
    AgentOrder { line: usize, expected: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: key `{key}`: invalid number `{value}`")]
    BadNumber {
        line: usize,
        key: String,
        value: String,
    },
    #[error("line {line}: key `{key}` belongs in an agent section")]
    KeyOutsideAgent { line: usize, key: String },
    #[error("line {line}: key `{key}` belongs in the global section")]
    KeyOutsideGlobal { line: usize, key: String },
    #[error("agent {agent}: missing required key `{key}`")]
    MissingKey { agent: usize, key: String },
    #[error("agent {agent}: goal_x and goal_y must be given together")]
    HalfGoal { agent: usize },
    #[error("agent {agent}: invalid shape: {message}")]
    BadShape { agent: usize, message: String },
    #[error("phi_init needs one value per pair ({expected}), got {got}")]
    PhiInitLength { expected: usize, got: usize },
    #[error("scenario declares no agents")]
    NoAgents,
}

#[derive(Default)]
struct AgentDraft {
    q_major: Option<f64>,
    q_minor: Option<f64>,
    x: Option<f64>,
    y: Option<f64>,
    theta: Option<f64>,
    goal_x: Option<f64>,
    goal_y: Option<f64>,
    goal_theta: Option<HeadingSpec<f64>>,
}

enum Section {
    None,
    Global,
    Agent(usize),
}

/// Parses the scenario text into a configuration (not yet validated against
/// the simulator's semantic rules).
pub fn parse(text: &str) -> Result<ScenarioConfig<f64>, ScenarioParseError> {
    let mut section = Section::None;
    let mut agents: Vec<AgentDraft> = Vec::new();
    let mut global_seen: Vec<String> = Vec::new();

    let mut config = ScenarioConfig::defaults(Vec::new());
    let mut phi_init_raw: Option<String> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if let Some(name) = trimmed.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let name = name.trim();
            if name.eq_ignore_ascii_case("global") {
                section = Section::Global;
            } else if let Some(rest) = name.strip_prefix("agent") {
                let expected = agents.len() + 1;
                let rest = rest.trim();
                if !rest.is_empty() && rest.parse::<usize>() != Ok(expected) {
                    return Err(ScenarioParseError::AgentOrder { line, expected });
                }
                agents.push(AgentDraft::default());
                section = Section::Agent(agents.len() - 1);
            } else {
                return Err(ScenarioParseError::UnknownSection {
                    line,
                    name: name.to_string(),
                });
            }
            continue;
        }

        let Some((key, value)) = trimmed.split_once('=') else {
            return Err(ScenarioParseError::Malformed {
                line,
                text: trimmed.to_string(),
            });
        };
        let key = key.trim();
        let value = value.trim();
        let number = |v: &str| -> Result<f64, ScenarioParseError> {
            v.parse().map_err(|_| ScenarioParseError::BadNumber {
                line,
                key: key.to_string(),
                value: v.to_string(),
            })
        };

        match section {
            Section::Global | Section::None => {
                if matches!(
                    key,
                    "q_major"
                        | "q_minor"
                        | "x"
                        | "y"
                        | "theta"
                        | "goal_x"
                        | "goal_y"
                        | "goal_theta"
                ) {
                    return Err(ScenarioParseError::KeyOutsideAgent {
                        line,
                        key: key.to_string(),
                    });
                }
                if global_seen.iter().any(|k| k == key) {
                    return Err(ScenarioParseError::DuplicateKey {
                        line,
                        key: key.to_string(),
                    });
                }
                global_seen.push(key.to_string());
                match key {
                    "dt" => config.dt = number(value)?,
                    "duration" => config.duration = number(value)?,
                    "alpha_gain" => config.alpha_gain = number(value)?,
                    "gamma" => config.gamma = number(value)?,
                    "nominal_gain" => config.nominal_gain = number(value)?,
                    "seed" => {
                        config.seed = value.parse().map_err(|_| ScenarioParseError::BadNumber {
                            line,
                            key: key.to_string(),
                            value: value.to_string(),
                        })?
                    }
                    "phi_init" => phi_init_raw = Some(value.to_string()),
                    _ => {
                        return Err(ScenarioParseError::UnknownKey {
                            line,
                            key: key.to_string(),
                        })
                    }
                }
            }
            Section::Agent(a) => {
                let draft = &mut agents[a];
                let slot: &mut Option<f64> = match key {
                    "q_major" => &mut draft.q_major,
                    "q_minor" => &mut draft.q_minor,
                    "x" => &mut draft.x,
                    "y" => &mut draft.y,
                    "theta" => &mut draft.theta,
                    "goal_x" => &mut draft.goal_x,
                    "goal_y" => &mut draft.goal_y,
                    "goal_theta" => {
                        if draft.goal_theta.is_some() {
                            return Err(ScenarioParseError::DuplicateKey {
                                line,
                                key: key.to_string(),
                            });
                        }
                        draft.goal_theta = Some(if value.eq_ignore_ascii_case("free") {
                            HeadingSpec::Free
                        } else {
                            HeadingSpec::Fixed(number(value)?)
                        });
                        continue;
                    }
                    "dt" | "duration" | "alpha_gain" | "gamma" | "nominal_gain" | "seed"
                    | "phi_init" => {
                        return Err(ScenarioParseError::KeyOutsideGlobal {
                            line,
                            key: key.to_string(),
                        })
                    }
                    _ => {
                        return Err(ScenarioParseError::UnknownKey {
                            line,
                            key: key.to_string(),
                        })
                    }
                };
                if slot.is_some() {
                    return Err(ScenarioParseError::DuplicateKey {
                        line,
                        key: key.to_string(),
                    });
                }
                *slot = Some(number(value)?);
            }
        }
    }

    if agents.is_empty() {
        return Err(ScenarioParseError::NoAgents);
    }

    for (a, draft) in agents.iter().enumerate() {
        let agent = a + 1;
        let need = |name: &str, v: Option<f64>| {
            v.ok_or_else(|| ScenarioParseError::MissingKey {
                agent,
                key: name.to_string(),
            })
        };
        let q_major = need("q_major", draft.q_major)?;
        let q_minor = need("q_minor", draft.q_minor)?;
        let x = need("x", draft.x)?;
        let y = need("y", draft.y)?;
        let theta = need("theta", draft.theta)?;
        let goal = match (draft.goal_x, draft.goal_y) {
            (Some(gx), Some(gy)) => Some(Vec2::new(gx, gy)),
            (None, None) => None,
            _ => return Err(ScenarioParseError::HalfGoal { agent }),
        };
        let shape =
            EllipseShape::new(q_major, q_minor).map_err(|e| ScenarioParseError::BadShape {
                agent,
                message: e.to_string(),
            })?;
        config.agents.push(AgentSpec {
            shape,
            initial: AgentState::new(Vec2::new(x, y), theta),
            goal,
            goal_heading: draft.goal_theta.unwrap_or(HeadingSpec::Initial),
        });
    }

    if let Some(raw) = phi_init_raw {
        config.phi_init = parse_phi_init(&raw, config.agents.len())?;
    }
    Ok(config)
}

fn parse_phi_init(raw: &str, n: usize) -> Result<PhiInit<f64>, ScenarioParseError> {
    let pair_count = n * (n - 1) / 2;
    match raw {
        "scan" => Ok(PhiInit::ScanMax),
        "random" => Ok(PhiInit::Random { seed: 0 }),
        list => {
            let values: Result<Vec<f64>, _> = list.split(',').map(|v| v.trim().parse()).collect();
            let values = values.map_err(|_| ScenarioParseError::BadNumber {
                line: 0,
                key: "phi_init".to_string(),
                value: list.to_string(),
            })?;
            if values.len() == 1 && pair_count >= 1 {
                return Ok(PhiInit::Explicit(vec![values[0]; pair_count]));
            }
            if values.len() != pair_count {
                return Err(ScenarioParseError::PhiInitLength {
                    expected: pair_count,
                    got: values.len(),
                });
            }
            Ok(PhiInit::Explicit(values))
        }
    }
}

/// Serializes a resolved scenario (defaults materialized, goals and initial
/// line parameters explicit) back into the scenario format.
pub fn write_resolved(resolved: &ResolvedScenario<f64>) -> String {
    let mut out = String::new();
    out.push_str("[global]\n");
    let _ = writeln!(out, "dt = {}", fmt_float(resolved.dt));
    let _ = writeln!(out, "duration = {}", fmt_float(resolved.duration));
    let _ = writeln!(out, "alpha_gain = {}", fmt_float(resolved.alpha_gain));
    let _ = writeln!(out, "gamma = {}", fmt_float(resolved.gamma));
    let _ = writeln!(out, "nominal_gain = {}", fmt_float(resolved.nominal_gain));
    let _ = writeln!(out, "seed = {}", resolved.seed);
    let phis: Vec<String> = resolved.phi0.iter().map(|&p| fmt_float(p)).collect();
    let _ = writeln!(out, "phi_init = {}", phis.join(","));

    for (k, shape) in resolved.shapes.iter().enumerate() {
        let state = &resolved.initial_states[k];
        let goal = &resolved.goals[k];
        let _ = writeln!(out, "\n[agent {}]", k + 1);
        let _ = writeln!(out, "q_major = {}", fmt_float(shape.q_major()));
        let _ = writeln!(out, "q_minor = {}", fmt_float(shape.q_minor()));
        let _ = writeln!(out, "x = {}", fmt_float(state.p.x));
        let _ = writeln!(out, "y = {}", fmt_float(state.p.y));
        let _ = writeln!(out, "theta = {}", fmt_float(state.theta()));
        let _ = writeln!(out, "goal_x = {}", fmt_float(goal.position.x));
        let _ = writeln!(out, "goal_y = {}", fmt_float(goal.position.y));
        match goal.heading {
            Some(h) => {
                let _ = writeln!(out, "goal_theta = {}", fmt_float(h));
            }
            None => {
                let _ = writeln!(out, "goal_theta = free");
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
[global]
dt = 0.001
duration = 0.01

[agent 1]
q_major = 1
q_minor = 1
x = 0
y = 0
theta = 0

[agent 2]
q_major = 1
q_minor = 1
x = 4
y = 0
theta = 0
";

    #[test]
    fn parses_minimal_scenario() {
        let config = parse(MINIMAL).unwrap();
        assert_eq!(config.agents.len(), 2);
        assert_eq!(config.dt, 1e-3);
        assert_eq!(config.duration, 0.01);
        assert_eq!(config.seed, 0);
        assert_eq!(config.phi_init, PhiInit::ScanMax);
    }

    #[test]
    fn rejects_unknown_key_with_line() {
        let bad = MINIMAL.replace("duration = 0.01", "duraton = 0.01");
        match parse(&bad) {
            Err(ScenarioParseError::UnknownKey { line, key }) => {
                assert_eq!(line, 3);
                assert_eq!(key, "duraton");
            }
            other => panic!("expected unknown-key error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_number_with_key() {
        let bad = MINIMAL.replace("dt = 0.001", "dt = zero");
        match parse(&bad) {
            Err(ScenarioParseError::BadNumber { line, key, value }) => {
                assert_eq!(line, 2);
                assert_eq!(key, "dt");
                assert_eq!(value, "zero");
            }
            other => panic!("expected bad-number error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_out_of_order_agents() {
        let bad = MINIMAL.replace("[agent 2]", "[agent 3]");
        assert!(matches!(
            parse(&bad),
            Err(ScenarioParseError::AgentOrder { expected: 2, .. })
        ));
    }

    #[test]
    fn rejects_half_goal() {
        let bad = MINIMAL.replace(
            "theta = 0\n\n[agent 2]",
            "theta = 0\ngoal_x = 1\n\n[agent 2]",
        );
        assert!(matches!(
            parse(&bad),
            Err(ScenarioParseError::HalfGoal { agent: 1 })
        ));
    }

    #[test]
    fn resolved_roundtrip_is_exact() {
        let config = parse(MINIMAL).unwrap();
        let resolved = config.resolve().unwrap();
        let text = write_resolved(&resolved);
        let reparsed = parse(&text).unwrap().resolve().unwrap();
        assert_eq!(resolved.dt.to_bits(), reparsed.dt.to_bits());
        assert_eq!(resolved.phi0.len(), reparsed.phi0.len());
        for (a, b) in resolved.phi0.iter().zip(&reparsed.phi0) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in resolved.goals.iter().zip(&reparsed.goals) {
            assert_eq!(a.position.x.to_bits(), b.position.x.to_bits());
            assert_eq!(a.position.y.to_bits(), b.position.y.to_bits());
        }
    }
}
