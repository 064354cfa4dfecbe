//! Per-iteration arithmetic cost of the diffusion algorithms.
//!
//! [`op_counts`] returns the published closed forms for the four compared
//! algorithms. [`kernel_op_counts`] returns what this crate's kernels
//! actually execute, and is checked against an instrumented run.

use std::fmt;
use std::ops::{Add, AddAssign};
use std::str::FromStr;

use serde::Serialize;

use super::{normalize_name, Algorithm, Tally, VarianceSign};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct OpCount {
    pub multiplications: u64,
    pub additions: u64,
    pub absolutes: u64,
    pub signs: u64,
    /// Set when the multiplication count is only a lower bound.
    pub lower_bound: bool,
}

impl OpCount {
    pub const fn new(multiplications: u64, additions: u64, absolutes: u64, signs: u64) -> Self {
        Self {
            multiplications,
            additions,
            absolutes,
            signs,
            lower_bound: false,
        }
    }
}

impl Add for OpCount {
    type Output = OpCount;

    fn add(self, rhs: OpCount) -> OpCount {
        OpCount {
            multiplications: self.multiplications + rhs.multiplications,
            additions: self.additions + rhs.additions,
            absolutes: self.absolutes + rhs.absolutes,
            signs: self.signs + rhs.signs,
            lower_bound: self.lower_bound || rhs.lower_bound,
        }
    }
}

impl AddAssign for OpCount {
    fn add_assign(&mut self, rhs: OpCount) {
        *self = *self + rhs;
    }
}

impl Tally for OpCount {
    fn mul(&mut self, n: u64) {
        self.multiplications += n;
    }
    fn add(&mut self, n: u64) {
        self.additions += n;
    }
    fn abs(&mut self, n: u64) {
        self.absolutes += n;
    }
    fn sign(&mut self, n: u64) {
        self.signs += n;
    }
}

impl fmt::Display for OpCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let bound = if self.lower_bound { "> " } else { "" };
        write!(
            f,
            "multiplications {bound}{}, additions {}, absolutes {}, signs {}",
            self.multiplications, self.additions, self.absolutes, self.signs
        )
    }
}

/// Algorithms covered by the complexity table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComplexityAlgorithm {
    DseLms,
    Drvsslms,
    Dllad,
    Dplms,
}

impl ComplexityAlgorithm {
    pub const ALL: [ComplexityAlgorithm; 4] = [
        ComplexityAlgorithm::DseLms,
        ComplexityAlgorithm::Drvsslms,
        ComplexityAlgorithm::Dllad,
        ComplexityAlgorithm::Dplms,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ComplexityAlgorithm::DseLms => "DSE-LMS",
            ComplexityAlgorithm::Drvsslms => "DRVSSLMS",
            ComplexityAlgorithm::Dllad => "DLLAD",
            ComplexityAlgorithm::Dplms => "DPLMS",
        }
    }
}

impl FromStr for ComplexityAlgorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match normalize_name(s).as_str() {
            "DSELMS" => Ok(ComplexityAlgorithm::DseLms),
            "DRVSSLMS" => Ok(ComplexityAlgorithm::Drvsslms),
            "DLLAD" => Ok(ComplexityAlgorithm::Dllad),
            "DPLMS" => Ok(ComplexityAlgorithm::Dplms),
            _ => Err(Error::UnknownAlgorithm(s.to_string())),
        }
    }
}

/// The table rows `(recursion, cost)` for one algorithm, adaptation first.
pub fn complexity_rows(algorithm: ComplexityAlgorithm, m: u64, n: u64) -> Result<Vec<(&'static str, OpCount)>> {
    if m == 0 || n == 0 {
        return Err(Error::invalid("M, N", "must both be at least 1"));
    }
    let combination = OpCount::new(n * m, (n - 1) * m, 0, 0);
    let adapt_adds = (3 * m - 1) * n;
    let rows = match algorithm {
        ComplexityAlgorithm::DseLms => vec![
            ("adaptation", OpCount::new((2 * m + 1) * n + m, adapt_adds, 0, n)),
            ("combination", combination),
        ],
        ComplexityAlgorithm::Drvsslms => {
            let adapt = OpCount {
                lower_bound: true,
                ..OpCount::new((3 * m + 1) * n + m, adapt_adds, 0, 0)
            };
            vec![
                ("adaptation", adapt),
                ("adaptation (sign branch)", OpCount { signs: n, ..adapt }),
                ("combination", combination),
            ]
        }
        ComplexityAlgorithm::Dllad => vec![
            ("adaptation", OpCount::new(2 * m * n + m, adapt_adds, n, 0)),
            ("combination", combination),
        ],
        ComplexityAlgorithm::Dplms => vec![
            ("adaptation", OpCount::new(2 * m * n + m, adapt_adds, 0, 0)),
            ("combination", combination),
        ],
    };
    Ok(rows)
}

/// Total per-iteration cost (adaptation plus combination) for filter
/// length `m` and `n` nodes.
pub fn op_counts(algorithm: ComplexityAlgorithm, m: u64, n: u64) -> Result<OpCount> {
    Ok(complexity_rows(algorithm, m, n)?
        .into_iter()
        .fold(OpCount::default(), |acc, (_, c)| acc + c))
}

/// Exact arithmetic executed by one iteration of this crate's kernels,
/// given every node's neighborhood size (self included).
pub fn kernel_op_counts(
    algorithm: Algorithm,
    sign: VarianceSign,
    m: u64,
    neighborhood_sizes: &[usize],
) -> OpCount {
    let per_node = match algorithm {
        Algorithm::Dplms => {
            let extra = u64::from(sign == VarianceSign::Minus);
            OpCount::new(3 * m + 7, 3 * m + 2 + extra, 0, 0)
        }
        Algorithm::Dlms => OpCount::new(2 * m + 1, 2 * m, 0, 0),
        Algorithm::DseLms => OpCount::new(2 * m + 1, 2 * m, 0, 1),
    };
    neighborhood_sizes.iter().fold(OpCount::default(), |acc, &size| {
        let size = size as u64;
        acc + per_node + OpCount::new(size * m, (size - 1) * m, 0, 0)
    })
}
