//! Condition reports shared by the continuous (C1..C5) and discrete
//! (G1, G2, G1+, G2+, G3) checkers.
//!
//! Verdicts only describe the sampled grid. Limit conditions cannot be
//! certified from finitely many samples; they are reported as holding
//! asymptotically when the sampled quantity decays monotonically over the
//! final decade of the grid.

use serde::Serialize;

/// Outcome of one condition over a sample grid. Locations are times `t` for
/// continuous schedules and iteration indices `k` for discrete ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    /// Every grid point satisfies the condition.
    Holds,
    /// Violated on an initial segment only; satisfied at every point from `from` on.
    HoldsFrom { from: f64, first_violation: f64 },
    /// The limit quantity decays monotonically over the final decade of the grid,
    /// starting at `from`.
    HoldsAsymptotically { from: f64 },
    /// Violated at `at` (the first violation) and not recovered by the end of the grid.
    Fails { at: f64 },
}

impl Verdict {
    /// True for verdicts that involve no violation at all on the grid.
    pub fn holds_everywhere(&self) -> bool {
        matches!(self, Verdict::Holds | Verdict::HoldsAsymptotically { .. })
    }

    /// True unless the condition fails at the end of the grid.
    pub fn holds_eventually(&self) -> bool {
        !matches!(self, Verdict::Fails { .. })
    }

    pub fn first_violation(&self) -> Option<f64> {
        match *self {
            Verdict::Holds | Verdict::HoldsAsymptotically { .. } => None,
            Verdict::HoldsFrom { first_violation, .. } => Some(first_violation),
            Verdict::Fails { at } => Some(at),
        }
    }

    /// First grid location from which the condition holds on the rest of the grid.
    pub fn holds_from(&self, grid_start: f64) -> Option<f64> {
        match *self {
            Verdict::Holds => Some(grid_start),
            Verdict::HoldsAsymptotically { from } | Verdict::HoldsFrom { from, .. } => Some(from),
            Verdict::Fails { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionCheck {
    pub name: String,
    pub statement: String,
    #[serde(flatten)]
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub conditions: Vec<ConditionCheck>,
    pub epsilon_used: Option<f64>,
    pub grid: Vec<f64>,
    pub note: String,
}

impl ConditionReport {
    pub fn get(&self, name: &str) -> Option<&Verdict> {
        self.conditions
            .iter()
            .find(|c| c.name == name)
            .map(|c| &c.verdict)
    }

    /// True when no condition is violated anywhere on the grid.
    pub fn all_hold(&self) -> bool {
        self.conditions.iter().all(|c| c.verdict.holds_everywhere())
    }

    /// The condition with the earliest violation, if any.
    pub fn first_violation(&self) -> Option<(&str, f64)> {
        self.conditions
            .iter()
            .filter_map(|c| c.verdict.first_violation().map(|at| (c.name.as_str(), at)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// Largest grid location from which every named condition holds.
    pub fn joint_holds_from(&self, names: &[&str]) -> Option<f64> {
        let start = self.grid.first().copied()?;
        let mut from = start;
        for name in names {
            from = from.max(self.get(name)?.holds_from(start)?);
        }
        Some(from)
    }

    /// Plain-text table, one row per condition.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<6} {:<44} {}\n", "cond", "statement", "verdict");
        for c in &self.conditions {
            let verdict = match c.verdict {
                Verdict::Holds => "holds on grid".to_string(),
                Verdict::HoldsFrom { from, first_violation } => {
                    format!("FAILS at {first_violation}, holds from {from}")
                }
                Verdict::HoldsAsymptotically { from } => {
                    format!("holds asymptotically from {from} (sampled decay)")
                }
                Verdict::Fails { at } => format!("FAILS at {at}"),
            };
            out.push_str(&format!("{:<6} {:<44} {}\n", c.name, c.statement, verdict));
        }
        if let Some(eps) = self.epsilon_used {
            out.push_str(&format!("epsilon = {eps}\n"));
        }
        out.push_str(&self.note);
        out.push('\n');
        out
    }
}

/// Verdict for a pointwise condition given its truth value on each grid point.
pub(crate) fn pointwise_verdict(grid: &[f64], ok: &[bool]) -> Verdict {
    debug_assert_eq!(grid.len(), ok.len());
    let Some(first_bad) = ok.iter().position(|b| !b) else {
        return Verdict::Holds;
    };
    let last_bad = ok.iter().rposition(|b| !b).expect("a violation exists");
    if last_bad + 1 < grid.len() {
        Verdict::HoldsFrom {
            from: grid[last_bad + 1],
            first_violation: grid[first_bad],
        }
    } else {
        Verdict::Fails { at: grid[first_bad] }
    }
}

/// Verdict for `lim q = 0` from samples of `q` on an increasing grid: over the
/// final decade, `|q|` must be finite, non-increasing and either below 1e-12
/// or at most half its value at the start of that decade.
pub(crate) fn limit_zero_verdict(grid: &[f64], values: &[f64]) -> Verdict {
    debug_assert_eq!(grid.len(), values.len());
    let Some(&last) = grid.last() else {
        return Verdict::Holds;
    };
    let mut start = grid.iter().position(|&g| g >= last / 10.0).unwrap_or(0);
    if start + 1 >= grid.len() {
        start = grid.len() / 2;
    }
    let tail = &values[start..];
    for (i, w) in tail.windows(2).enumerate() {
        let (a, b) = (w[0].abs(), w[1].abs());
        if !a.is_finite() || !b.is_finite() || b > a * (1.0 + 1e-9) + 1e-15 {
            return Verdict::Fails {
                at: grid[start + i + 1],
            };
        }
    }
    let (first, fin) = (tail[0].abs(), tail[tail.len() - 1].abs());
    if fin <= 1e-12 || fin <= 0.5 * first {
        Verdict::HoldsAsymptotically { from: grid[start] }
    } else {
        Verdict::Fails { at: last }
    }
}
