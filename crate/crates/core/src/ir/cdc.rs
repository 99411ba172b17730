use super::{Instruction, Program, VecId};

/// Partition of a program's vectors into common dimension classes.
/// Blocks are sorted internally and ordered by their smallest member.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Partition {
    blocks: Vec<Vec<VecId>>,
    block_of: Vec<usize>,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn blocks(&self) -> &[Vec<VecId>] {
        &self.blocks
    }

    pub fn block_of(&self, v: VecId) -> usize {
        self.block_of[v.0]
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (a, b) = (self.find(a), self.find(b));
        if a != b {
            self.0[a.max(b)] = a.min(b);
        }
    }
}

/// Smallest equivalence relation on vectors containing the shape
/// constraints of every instruction and the user's class labels
/// (two vectors carrying the same label are declared equal in size).
pub fn compute_cdc(p: &Program) -> Partition {
    let nv = p.vectors().len();
    // Nodes: vectors, then one node per (matrix, side) for shared inputs and outputs.
    let nm = p.matrices().len();
    let side = |m: usize, out: bool| nv + 2 * m + out as usize;
    let label = |c: usize| nv + 2 * nm + c;
    let mut uf = UnionFind((0..nv + 2 * nm + p.classes().len()).collect());
    for (i, v) in p.vectors().iter().enumerate() {
        uf.union(i, label(v.class.0));
    }
    for ins in p.instructions() {
        match ins {
            Instruction::MatMul {
                matrix,
                transposed,
                input,
                output,
            } => {
                // Forward inputs share the column side; transposed inputs the row side.
                uf.union(input.0, side(matrix.0, *transposed));
                uf.union(output.0, side(matrix.0, !*transposed));
            }
            Instruction::Nonlin { inputs, output, .. } => {
                for x in inputs {
                    uf.union(x.0, output.0);
                }
            }
            Instruction::Moment { inputs, .. } => {
                for w in inputs.windows(2) {
                    uf.union(w[0].0, w[1].0);
                }
            }
        }
    }
    let mut root_block = std::collections::HashMap::new();
    let mut blocks: Vec<Vec<VecId>> = Vec::new();
    let mut block_of = vec![0; nv];
    for (v, slot) in block_of.iter_mut().enumerate() {
        let r = uf.find(v);
        let b = *root_block.entry(r).or_insert_with(|| {
            blocks.push(Vec::new());
            blocks.len() - 1
        });
        blocks[b].push(VecId(v));
        *slot = b;
    }
    Partition { blocks, block_of }
}

#[cfg(test)]
mod tests {
    use crate::ir::{build_program, Decl, NonlinExpr};

    fn mlp(l: usize, shared: bool) -> Vec<Decl> {
        let class = |i: usize| {
            if shared {
                "n".to_string()
            } else {
                format!("c{i}")
            }
        };
        let mut d = vec![Decl::Vector {
            name: "x1".into(),
            class: class(1),
            mean: 0.0,
            var: 1.0,
        }];
        for i in 2..=l {
            d.push(Decl::Matrix {
                name: format!("W{i}"),
                rows: class(i),
                cols: class(i - 1),
                sigma2: 1.0,
            });
            d.push(Decl::MatMul {
                output: format!("h{i}"),
                matrix: format!("W{i}"),
                transposed: false,
                input: format!("x{}", i - 1),
            });
            d.push(Decl::Nonlin {
                output: format!("x{i}"),
                expr: NonlinExpr::tanh(),
                inputs: vec![format!("h{i}")],
                params: vec![],
            });
        }
        d
    }

    #[test]
    fn mlp_classes() {
        assert_eq!(build_program(&mlp(4, false)).unwrap().cdc().len(), 4);
        assert_eq!(build_program(&mlp(4, true)).unwrap().cdc().len(), 1);
    }

    #[test]
    fn square_matrix_single_class() {
        let p = build_program(&[
            Decl::Matrix {
                name: "W".into(),
                rows: "n".into(),
                cols: "n".into(),
                sigma2: 1.0,
            },
            Decl::Vector {
                name: "v".into(),
                class: "n".into(),
                mean: 0.0,
                var: 1.0,
            },
            Decl::MatMul {
                output: "x".into(),
                matrix: "W".into(),
                transposed: false,
                input: "v".into(),
            },
            Decl::MatMul {
                output: "y".into(),
                matrix: "W".into(),
                transposed: true,
                input: "x".into(),
            },
        ])
        .unwrap();
        assert_eq!(p.cdc().len(), 1);
    }
}
