use std::cell::Cell;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::rc::Rc;

use crate::Tensor;

thread_local! {
    static NEXT_ID: Cell<u64> = const { Cell::new(0) };
}

fn next_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

/// Gradient propagation rule: given the gradient of the output and a flag per
/// parent telling whether that parent wants a gradient, return one optional
/// gradient per parent.
pub type BackwardFn = Box<dyn Fn(&Tensor, &[bool]) -> Vec<Option<Tensor>>>;

struct Node {
    id: u64,
    value: Tensor,
    requires_grad: bool,
    parents: Vec<Var>,
    backward: Option<BackwardFn>,
}

/// A node in the computation graph.
///
/// Ids grow monotonically with creation, so a reverse sort by id is a valid
/// topological order for the backward sweep.
#[derive(Clone)]
pub struct Var(Rc<Node>);

impl Var {
    /// A leaf. Leaves created with `requires_grad = true` receive gradients.
    pub fn leaf(value: Tensor, requires_grad: bool) -> Self {
        Var(Rc::new(Node {
            id: next_id(),
            value,
            requires_grad,
            parents: Vec::new(),
            backward: None,
        }))
    }

    pub fn constant(value: Tensor) -> Self {
        Self::leaf(value, false)
    }

    /// Record the result of a custom operation. When no parent requires a
    /// gradient the rule is dropped and the result is a constant.
    pub fn from_op(
        value: Tensor,
        parents: Vec<Var>,
        backward: impl Fn(&Tensor, &[bool]) -> Vec<Option<Tensor>> + 'static,
    ) -> Self {
        if !parents.iter().any(Var::requires_grad) {
            return Self::constant(value);
        }
        Var(Rc::new(Node {
            id: next_id(),
            value,
            requires_grad: true,
            parents,
            backward: Some(Box::new(backward)),
        }))
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn value(&self) -> &Tensor {
        &self.0.value
    }

    pub fn shape(&self) -> &[usize] {
        self.0.value.shape()
    }

    pub fn dims4(&self) -> (usize, usize, usize, usize) {
        self.0.value.dims4()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// Same value, cut from the graph.
    pub fn detach(&self) -> Var {
        Var::constant(self.0.value.clone())
    }

    /// Reverse sweep from a scalar output (seed gradient 1).
    pub fn backward(&self) -> Gradients {
        assert_eq!(self.value().numel(), 1, "backward() needs a scalar output");
        self.backward_with(Tensor::full(self.shape(), 1.0))
    }

    /// Reverse sweep seeded with an arbitrary output gradient.
    pub fn backward_with(&self, seed: Tensor) -> Gradients {
        assert_eq!(seed.shape(), self.shape(), "seed gradient shape mismatch");
        let mut grads = HashMap::new();
        if !self.requires_grad() {
            return Gradients { grads };
        }

        let mut order: Vec<Var> = Vec::new();
        let mut seen = HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(v) = stack.pop() {
            if !seen.insert(v.id()) {
                continue;
            }
            for p in &v.0.parents {
                if p.requires_grad() && !seen.contains(&p.id()) {
                    stack.push(p.clone());
                }
            }
            order.push(v);
        }
        order.sort_unstable_by_key(|v| std::cmp::Reverse(v.id()));

        grads.insert(self.id(), seed);
        for node in &order {
            let Some(rule) = node.0.backward.as_ref() else {
                continue;
            };
            // Intermediate gradients are released as soon as they are consumed.
            let Some(g) = grads.remove(&node.id()) else {
                continue;
            };
            let wanted: Vec<bool> = node.0.parents.iter().map(Var::requires_grad).collect();
            let parent_grads = rule(&g, &wanted);
            debug_assert_eq!(parent_grads.len(), node.0.parents.len());
            for (parent, pg) in node.0.parents.iter().zip(parent_grads) {
                let Some(pg) = pg else { continue };
                if !parent.requires_grad() {
                    continue;
                }
                debug_assert_eq!(pg.shape(), parent.shape(), "gradient shape mismatch");
                match grads.get_mut(&parent.id()) {
                    Some(acc) => acc.add_assign(&pg),
                    None => {
                        grads.insert(parent.id(), pg);
                    }
                }
            }
        }
        Gradients { grads }
    }
}

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id())
            .field("requires_grad", &self.requires_grad())
            .field("value", self.value())
            .finish()
    }
}

/// Gradients of leaves (and the output) produced by a backward sweep.
#[derive(Default)]
pub struct Gradients {
    grads: HashMap<u64, Tensor>,
}

impl Gradients {
    pub fn get(&self, var: &Var) -> Option<&Tensor> {
        self.grads.get(&var.id())
    }

    pub fn take(&mut self, var: &Var) -> Option<Tensor> {
        self.grads.remove(&var.id())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_do_not_record() {
        let a = Var::constant(Tensor::scalar(2.0));
        let b = Var::from_op(Tensor::scalar(4.0), vec![a.clone()], |_, _| vec![None]);
        assert!(!b.requires_grad());
    }

    #[test]
    fn diamond_accumulates() {
        // y = x*x + x  with hand-written rules; dy/dx = 2x + 1
        let x = Var::leaf(Tensor::scalar(3.0), true);
        let xv = x.value().data()[0];
        let sq = Var::from_op(Tensor::scalar(xv * xv), vec![x.clone()], move |g, _| {
            vec![Some(g.scale(2.0 * xv))]
        });
        let y = Var::from_op(
            Tensor::scalar(sq.value().data()[0] + xv),
            vec![sq.clone(), x.clone()],
            |g, _| vec![Some(g.clone()), Some(g.clone())],
        );
        let grads = y.backward();
        assert_eq!(grads.get(&x).unwrap().data()[0], 7.0);
    }
}
