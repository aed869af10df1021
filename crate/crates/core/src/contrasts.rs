//! Contrast functions scoring one outcome vector against another.
//!
//! A contrast `w(y_left, y_right)` is the basic building block of every
//! pairwise estimand in this crate. Built-in families cover the linear
//! difference, win indicators (with or without half credit for ties), a
//! prioritized lexicographic rule, and non-prioritized weighted aggregates of
//! per-component contrasts. Anything else can be plugged in through
//! [`Contrast`].

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the sum of aggregate weights.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// One unit's Q-dimensional outcome. Components are finite reals; ordinal
/// outcomes are integer-encoded so that ties compare exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeVector(Vec<f64>);

impl OutcomeVector {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Input("outcome vector must have at least one component".into()));
        }
        if let Some(q) = components.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("outcome component {q} is not finite")));
        }
        Ok(Self(components))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// User-supplied contrast. Implementations must be pure.
pub trait Contrast: Send + Sync {
    /// Required outcome dimension Q.
    fn dimension(&self) -> usize;
    fn eval(&self, left: &[f64], right: &[f64]) -> f64;
    /// `Some(C)` only if `w(a, b) = C - w(b, a)` holds for every input.
    fn antisymmetry_constant(&self) -> Option<f64>;
    fn name(&self) -> &str {
        "custom"
    }
}

/// Direction of preference for one lexicographic component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    HigherBetter,
    LowerBetter,
}

/// Score assigned by the lexicographic rule when two vectors are identical.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FullTie {
    /// Half credit: keeps `w(a,b) + w(b,a) = 1` on tie-free and tied pairs alike.
    #[default]
    Half,
    /// The weak-order indicator `1(a ⪰ b)`, which scores 1 in both directions.
    Indicator,
}

/// Declarative description of a contrast function.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContrastSpec {
    /// `w(y1, y2) = y1 - y2` (Q = 1).
    Difference,
    /// `1(y1 > y2) + ½·1(y1 = y2)` (Q = 1).
    WinHalfTie,
    /// `1(y1 > y2)` (Q = 1).
    WinStrict,
    /// The first component on which the vectors differ decides.
    Lexicographic {
        directions: Vec<Direction>,
        #[serde(default)]
        full_tie: FullTie,
    },
    /// `Σ_q ω_q · w_q(y1_q, y2_q)` with `ω ≥ 0`, `Σω = 1`.
    #[serde(alias = "weighted")]
    WeightedAggregate { weights: Vec<f64>, components: Vec<ContrastSpec> },
    #[serde(skip)]
    Custom(Arc<dyn Contrast>),
}

impl fmt::Debug for ContrastSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ContrastSpec::Difference => write!(f, "Difference"),
            ContrastSpec::WinHalfTie => write!(f, "WinHalfTie"),
            ContrastSpec::WinStrict => write!(f, "WinStrict"),
            ContrastSpec::Lexicographic { directions, full_tie } => {
                f.debug_struct("Lexicographic").field("directions", directions).field("full_tie", full_tie).finish()
            }
            ContrastSpec::WeightedAggregate { weights, components } => {
                f.debug_struct("WeightedAggregate").field("weights", weights).field("components", components).finish()
            }
            ContrastSpec::Custom(c) => write!(f, "Custom({})", c.name()),
        }
    }
}

#[inline]
fn win_half_tie(a: f64, b: f64) -> f64 {
    if a > b {
        1.0
    } else if a == b {
        0.5
    } else {
        0.0
    }
}

impl ContrastSpec {
    pub fn custom(contrast: impl Contrast + 'static) -> Self {
        ContrastSpec::Custom(Arc::new(contrast))
    }

    /// Outcome dimension Q this contrast consumes.
    pub fn dimension(&self) -> usize {
        match self {
            ContrastSpec::Difference | ContrastSpec::WinHalfTie | ContrastSpec::WinStrict => 1,
            ContrastSpec::Lexicographic { directions, .. } => directions.len(),
            ContrastSpec::WeightedAggregate { weights, .. } => weights.len(),
            ContrastSpec::Custom(c) => c.dimension(),
        }
    }

    /// Structural checks: weights, nested dimensions, non-empty rules.
    pub fn validate(&self) -> Result<()> {
        match self {
            ContrastSpec::Lexicographic { directions, .. } => {
                if directions.is_empty() {
                    return Err(Error::Input("lexicographic contrast needs at least one component".into()));
                }
            }
            ContrastSpec::WeightedAggregate { weights, components } => {
                if weights.is_empty() {
                    return Err(Error::Input("weighted aggregate needs at least one component".into()));
                }
                if weights.len() != components.len() {
                    return Err(Error::Input(format!(
                        "weighted aggregate has {} weights but {} components",
                        weights.len(),
                        components.len()
                    )));
                }
                if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                    return Err(Error::Input("aggregate weights must be finite and non-negative".into()));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > WEIGHT_SUM_TOL {
                    return Err(Error::Input(format!("aggregate weights sum to {total}, expected 1")));
                }
                for c in components {
                    if c.dimension() != 1 {
                        return Err(Error::Input("each aggregate component must be a univariate contrast".into()));
                    }
                    c.validate()?;
                }
            }
            ContrastSpec::Custom(c) if c.dimension() == 0 => {
                return Err(Error::Input("custom contrast must declare Q ≥ 1".into()));
            }
            _ => {}
        }
        Ok(())
    }

    /// Evaluates `w(left, right)` without dimension or finiteness checks.
    /// Callers validate inputs once up front; see [`eval_contrast`].
    #[inline]
    pub fn eval(&self, left: &[f64], right: &[f64]) -> f64 {
        match self {
            ContrastSpec::Difference => left[0] - right[0],
            ContrastSpec::WinHalfTie => win_half_tie(left[0], right[0]),
            ContrastSpec::WinStrict => {
                if left[0] > right[0] {
                    1.0
                } else {
                    0.0
                }
            }
            ContrastSpec::Lexicographic { directions, full_tie } => {
                for (q, dir) in directions.iter().enumerate() {
                    let (a, b) = (left[q], right[q]);
                    if a != b {
                        let left_wins = match dir {
                            Direction::HigherBetter => a > b,
                            Direction::LowerBetter => a < b,
                        };
                        return if left_wins { 1.0 } else { 0.0 };
                    }
                }
                match full_tie {
                    FullTie::Half => 0.5,
                    FullTie::Indicator => 1.0,
                }
            }
            ContrastSpec::WeightedAggregate { weights, components } => weights
                .iter()
                .zip(components)
                .enumerate()
                .map(|(q, (w, c))| w * c.eval(&left[q..q + 1], &right[q..q + 1]))
                .sum(),
            ContrastSpec::Custom(c) => c.eval(left, right),
        }
    }

    /// Constant `C` with `w(a,b) = C - w(b,a)` whenever the rule guarantees it.
    pub fn antisymmetry_constant(&self) -> Option<f64> {
        match self {
            ContrastSpec::Difference => Some(0.0),
            ContrastSpec::WinHalfTie => Some(1.0),
            ContrastSpec::WinStrict => None,
            // Like WinStrict, the lexicographic rule is only reported as
            // anti-symmetric when no ties can occur, which the spec cannot promise.
            ContrastSpec::Lexicographic { .. } => None,
            ContrastSpec::WeightedAggregate { weights, components } => {
                weights.iter().zip(components).map(|(w, c)| c.antisymmetry_constant().map(|k| w * k)).sum()
            }
            ContrastSpec::Custom(c) => c.antisymmetry_constant(),
        }
    }
}

/// Checked evaluation of `w(y_left, y_right)`.
pub fn eval_contrast(spec: &ContrastSpec, y_left: &OutcomeVector, y_right: &OutcomeVector) -> Result<f64> {
    spec.validate()?;
    let q = spec.dimension();
    if y_left.len() != q || y_right.len() != q {
        return Err(Error::Input(format!("contrast expects Q = {q}, got {} and {}", y_left.len(), y_right.len())));
    }
    Ok(spec.eval(y_left.as_slice(), y_right.as_slice()))
}

/// See [`ContrastSpec::antisymmetry_constant`].
pub fn antisymmetry_constant(spec: &ContrastSpec) -> Option<f64> {
    spec.antisymmetry_constant()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ov(v: &[f64]) -> OutcomeVector {
        OutcomeVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn difference_is_linear() {
        assert_eq!(eval_contrast(&ContrastSpec::Difference, &ov(&[3.0]), &ov(&[5.0])).unwrap(), -2.0);
    }

    #[test]
    fn tie_conventions() {
        assert_eq!(ContrastSpec::WinHalfTie.eval(&[4.0], &[4.0]), 0.5);
        assert_eq!(ContrastSpec::WinStrict.eval(&[4.0], &[4.0]), 0.0);
    }

    #[test]
    fn weighted_aggregate_mixes_components() {
        let spec = ContrastSpec::WeightedAggregate {
            weights: vec![0.5, 0.5],
            components: vec![ContrastSpec::WinHalfTie, ContrastSpec::WinStrict],
        };
        let w = eval_contrast(&spec, &ov(&[2.0, 1.0]), &ov(&[2.0, 0.0])).unwrap();
        assert_eq!(w, 0.75);
    }

    #[test]
    fn lexicographic_second_component_decides() {
        let spec =
            ContrastSpec::Lexicographic { directions: vec![Direction::HigherBetter; 2], full_tie: FullTie::Half };
        assert_eq!(spec.eval(&[2.0, 1.0], &[2.0, 3.0]), 0.0);
        assert_eq!(spec.eval(&[2.0, 3.0], &[2.0, 1.0]), 1.0);
        assert_eq!(spec.eval(&[2.0, 3.0], &[2.0, 3.0]), 0.5);
        let literal =
            ContrastSpec::Lexicographic { directions: vec![Direction::HigherBetter; 2], full_tie: FullTie::Indicator };
        assert_eq!(literal.eval(&[2.0, 3.0], &[2.0, 3.0]), 1.0);
    }

    #[test]
    fn lower_better_flips_order() {
        let spec = ContrastSpec::Lexicographic { directions: vec![Direction::LowerBetter], full_tie: FullTie::Half };
        assert_eq!(spec.eval(&[1.0], &[2.0]), 1.0);
    }

    #[test]
    fn antisymmetry_constants() {
        assert_eq!(antisymmetry_constant(&ContrastSpec::Difference), Some(0.0));
        assert_eq!(antisymmetry_constant(&ContrastSpec::WinHalfTie), Some(1.0));
        assert_eq!(antisymmetry_constant(&ContrastSpec::WinStrict), None);
        let lex = ContrastSpec::Lexicographic { directions: vec![Direction::HigherBetter], full_tie: FullTie::Half };
        assert_eq!(lex.antisymmetry_constant(), None);
        let mixed = ContrastSpec::WeightedAggregate {
            weights: vec![0.25, 0.75],
            components: vec![ContrastSpec::WinHalfTie, ContrastSpec::Difference],
        };
        assert_eq!(mixed.antisymmetry_constant(), Some(0.25));
        let broken = ContrastSpec::WeightedAggregate {
            weights: vec![0.5, 0.5],
            components: vec![ContrastSpec::WinHalfTie, ContrastSpec::WinStrict],
        };
        assert_eq!(broken.antisymmetry_constant(), None);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(OutcomeVector::new(vec![f64::NAN]).is_err());
        assert!(eval_contrast(&ContrastSpec::Difference, &ov(&[1.0, 2.0]), &ov(&[1.0, 2.0])).is_err());
        let bad = ContrastSpec::WeightedAggregate {
            weights: vec![0.6, 0.6],
            components: vec![ContrastSpec::WinStrict, ContrastSpec::WinStrict],
        };
        assert!(bad.validate().is_err());
        let negative = ContrastSpec::WeightedAggregate {
            weights: vec![1.5, -0.5],
            components: vec![ContrastSpec::WinStrict, ContrastSpec::WinStrict],
        };
        assert!(negative.validate().is_err());
    }

    #[test]
    fn config_tree_round_trips() {
        let json = r#"{"kind":"weighted_aggregate","weights":[0.5,0.5],
            "components":[{"kind":"win_half_tie"},{"kind":"win_strict"}]}"#;
        let spec: ContrastSpec = serde_json::from_str(json).unwrap();
        spec.validate().unwrap();
        assert_eq!(spec.dimension(), 2);
        let lex: ContrastSpec =
            serde_json::from_str(r#"{"kind":"lexicographic","directions":["lower_better","higher_better"]}"#).unwrap();
        assert_eq!(lex.eval(&[1.0, 0.0], &[2.0, 9.0]), 1.0);
    }

    struct Clipped;
    impl Contrast for Clipped {
        fn dimension(&self) -> usize {
            1
        }
        fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
            (a[0] - b[0]).clamp(-1.0, 1.0)
        }
        fn antisymmetry_constant(&self) -> Option<f64> {
            Some(0.0)
        }
    }

    #[test]
    fn custom_contrast_plugs_in() {
        let spec = ContrastSpec::custom(Clipped);
        assert_eq!(spec.eval(&[5.0], &[1.0]), 1.0);
        assert_eq!(spec.antisymmetry_constant(), Some(0.0));
    }

    fn antisymmetric_specs() -> Vec<ContrastSpec> {
        vec![
            ContrastSpec::Difference,
            ContrastSpec::WinHalfTie,
            ContrastSpec::WeightedAggregate {
                weights: vec![0.2, 0.3, 0.5],
                components: vec![ContrastSpec::WinHalfTie, ContrastSpec::Difference, ContrastSpec::WinHalfTie],
            },
        ]
    }

    proptest! {
        #[test]
        fn antisymmetry_holds_on_probes(
            a in prop::collection::vec(-3i32..3, 3),
            b in prop::collection::vec(-3i32..3, 3),
        ) {
            for spec in antisymmetric_specs() {
                let q = spec.dimension();
                let a: Vec<f64> = a[..q].iter().map(|&v| v as f64).collect();
                let b: Vec<f64> = b[..q].iter().map(|&v| v as f64).collect();
                let c = spec.antisymmetry_constant().unwrap();
                prop_assert!((spec.eval(&a, &b) + spec.eval(&b, &a) - c).abs() < 1e-12);
            }
        }

        #[test]
        fn half_tie_lexicographic_sums_to_one(
            a in prop::collection::vec(-2i32..2, 3),
            b in prop::collection::vec(-2i32..2, 3),
        ) {
            let spec = ContrastSpec::Lexicographic {
                directions: vec![Direction::HigherBetter, Direction::LowerBetter, Direction::HigherBetter],
                full_tie: FullTie::Half,
            };
            let a: Vec<f64> = a.iter().map(|&v| v as f64).collect();
            let b: Vec<f64> = b.iter().map(|&v| v as f64).collect();
            prop_assert_eq!(spec.eval(&a, &b) + spec.eval(&b, &a), 1.0);
        }

        #[test]
        fn aggregate_is_linear_in_weights(
            alpha in 0.0f64..=1.0,
            w0 in 0.0f64..=1.0,
            v0 in 0.0f64..=1.0,
            a in prop::collection::vec(-2i32..2, 2),
            b in prop::collection::vec(-2i32..2, 2),
        ) {
            let comps = vec![ContrastSpec::WinHalfTie, ContrastSpec::WinStrict];
            let mk = |w: f64| ContrastSpec::WeightedAggregate { weights: vec![w, 1.0 - w], components: comps.clone() };
            let a: Vec<f64> = a.iter().map(|&v| v as f64).collect();
            let b: Vec<f64> = b.iter().map(|&v| v as f64).collect();
            let blended = mk(alpha * w0 + (1.0 - alpha) * v0).eval(&a, &b);
            let mixed = alpha * mk(w0).eval(&a, &b) + (1.0 - alpha) * mk(v0).eval(&a, &b);
            prop_assert!((blended - mixed).abs() < 1e-12);
        }
    }
}
