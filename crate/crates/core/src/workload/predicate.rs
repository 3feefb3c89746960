use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompareOp {
    Eq,
    Lt,
    Le,
    Gt,
    Ge,
    In,
}

impl CompareOp {
    pub const NUMERIC: [CompareOp; 5] = [CompareOp::Eq, CompareOp::Lt, CompareOp::Le, CompareOp::Gt, CompareOp::Ge];

    pub fn sql(self) -> &'static str {
        match self {
            CompareOp::Eq => "=",
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Gt => ">",
            CompareOp::Ge => ">=",
            CompareOp::In => "IN",
        }
    }
}

/// `column op literal`. Literals live on the column's numeric axis
/// (dictionary codes for categoricals); `In` carries up to five literals,
/// every other operator exactly one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    pub column: String,
    pub op: CompareOp,
    pub values: Vec<f64>,
}

impl Leaf {
    /// Nulls fail every comparison.
    #[inline]
    pub fn matches(&self, value: Option<f64>) -> bool {
        let Some(v) = value else { return false };
        let lit = self.values[0];
        match self.op {
            CompareOp::Eq => v == lit,
            CompareOp::Lt => v < lit,
            CompareOp::Le => v <= lit,
            CompareOp::Gt => v > lit,
            CompareOp::Ge => v >= lit,
            CompareOp::In => self.values.contains(&v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PredicateTree {
    And { children: Vec<PredicateTree> },
    Or { children: Vec<PredicateTree> },
    Leaf(Leaf),
}

impl PredicateTree {
    pub fn leaf_count(&self) -> usize {
        match self {
            PredicateTree::Leaf(_) => 1,
            PredicateTree::And { children } | PredicateTree::Or { children } => {
                children.iter().map(PredicateTree::leaf_count).sum()
            }
        }
    }

    /// Number of levels; a single leaf has depth 1.
    pub fn depth(&self) -> usize {
        match self {
            PredicateTree::Leaf(_) => 1,
            PredicateTree::And { children } | PredicateTree::Or { children } => {
                1 + children.iter().map(PredicateTree::depth).max().unwrap_or(0)
            }
        }
    }

    pub fn children(&self) -> &[PredicateTree] {
        match self {
            PredicateTree::Leaf(_) => &[],
            PredicateTree::And { children } | PredicateTree::Or { children } => children,
        }
    }

    /// Nodes in preorder.
    pub fn preorder(&self) -> Vec<&PredicateTree> {
        let mut out = Vec::new();
        fn walk<'a>(n: &'a PredicateTree, out: &mut Vec<&'a PredicateTree>) {
            out.push(n);
            for c in n.children() {
                walk(c, out);
            }
        }
        walk(self, &mut out);
        out
    }

    pub fn leaves(&self) -> Vec<&Leaf> {
        self.preorder()
            .into_iter()
            .filter_map(|n| match n {
                PredicateTree::Leaf(l) => Some(l),
                _ => None,
            })
            .collect()
    }

    /// Top-level conjuncts: the children of a root `And`, or the tree itself.
    pub fn conjuncts(&self) -> Vec<&PredicateTree> {
        match self {
            PredicateTree::And { children } => children.iter().collect(),
            other => vec![other],
        }
    }

    /// Rebuilds a conjunction from the given conjuncts.
    pub fn conjunction(mut parts: Vec<PredicateTree>) -> Option<PredicateTree> {
        match parts.len() {
            0 => None,
            1 => parts.pop(),
            _ => Some(PredicateTree::And { children: parts }),
        }
    }

    /// Evaluates with short-circuiting, counting leaf evaluations.
    #[inline]
    pub fn eval_counted(&self, value_of: &impl Fn(&str) -> Option<f64>, leaf_evals: &mut u64) -> bool {
        match self {
            PredicateTree::Leaf(l) => {
                *leaf_evals += 1;
                l.matches(value_of(&l.column))
            }
            PredicateTree::And { children } => children.iter().all(|c| c.eval_counted(value_of, leaf_evals)),
            PredicateTree::Or { children } => children.iter().any(|c| c.eval_counted(value_of, leaf_evals)),
        }
    }

    pub fn eval(&self, value_of: &impl Fn(&str) -> Option<f64>) -> bool {
        let mut n = 0;
        self.eval_counted(value_of, &mut n)
    }

    pub fn rename_columns(&mut self, f: &impl Fn(&str) -> String) {
        match self {
            PredicateTree::Leaf(l) => l.column = f(&l.column),
            PredicateTree::And { children } | PredicateTree::Or { children } => {
                children.iter_mut().for_each(|c| c.rename_columns(f))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(column: &str, op: CompareOp, v: f64) -> PredicateTree {
        PredicateTree::Leaf(Leaf { column: column.into(), op, values: vec![v] })
    }

    #[test]
    fn null_fails_every_comparison() {
        for op in CompareOp::NUMERIC {
            assert!(!Leaf { column: "a".into(), op, values: vec![1.0] }.matches(None));
        }
        assert!(!Leaf { column: "a".into(), op: CompareOp::In, values: vec![1.0] }.matches(None));
    }

    #[test]
    fn short_circuit_counts_leaves() {
        let t = PredicateTree::And {
            children: vec![
                leaf("a", CompareOp::Lt, 0.0),
                PredicateTree::Or { children: vec![leaf("b", CompareOp::Eq, 1.0), leaf("b", CompareOp::Gt, 5.0)] },
            ],
        };
        let vals = |_: &str| Some(1.0);
        let mut n = 0;
        assert!(!t.eval_counted(&vals, &mut n));
        assert_eq!(n, 1);
        let vals = |c: &str| if c == "a" { Some(-1.0) } else { Some(1.0) };
        let mut n = 0;
        assert!(t.eval_counted(&vals, &mut n));
        assert_eq!(n, 2);
        assert_eq!(t.leaf_count(), 3);
        assert_eq!(t.depth(), 3);
        assert_eq!(t.preorder().len(), 5);
        assert_eq!(t.conjuncts().len(), 2);
    }
}
