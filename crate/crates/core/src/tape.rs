//! Reverse-mode autodiff tape.
//!
//! Operations append nodes in execution order, so the list is already a
//! topological order of the graph. Each node owns its output value and a
//! backward rule (a closure over whatever the rule needs, usually cheap
//! `Arc` clones of the inputs). `backward` seeds the scalar loss with 1
//! and sweeps the nodes in reverse, accumulating gradients per node.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

type BackFn<F> = Box<dyn Fn(&Tensor<F>, &mut GradSink<F>)>;

struct Node<F: Real> {
    value: Tensor<F>,
    back: Option<BackFn<F>>,
}

/// Gradient accumulator passed to backward rules.
pub struct GradSink<F: Real> {
    grads: Vec<Option<Tensor<F>>>,
}

impl<F: Real> GradSink<F> {
    /// Accumulate `grad` into the slot for `var`.
    pub fn add(&mut self, var: Var, grad: Tensor<F>) {
        let slot = &mut self.grads[var.0];
        match slot {
            Some(existing) => {
                let summed = existing
                    .add(&grad)
                    .expect("gradient shape mismatch during accumulation");
                *existing = summed;
            }
            None => *slot = Some(grad),
        }
    }
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients<F: Real> {
    grads: Vec<Option<Tensor<F>>>,
}

impl<F: Real> Gradients<F> {
    /// Gradient of the loss w.r.t. `var`, if any path reached it.
    pub fn get(&self, var: Var) -> Option<&Tensor<F>> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    /// Gradient for `var`, zeros of `shape` when nothing flowed to it.
    pub fn get_or_zeros(&self, var: Var, shape: &[usize]) -> Tensor<F> {
        match self.get(var) {
            Some(g) => g.clone(),
            None => Tensor::zeros(shape),
        }
    }
}

pub struct Tape<F: Real> {
    nodes: Vec<Node<F>>,
}

impl<F: Real> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> Tape<F> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Insert a leaf (input or parameter). Leaves have no backward rule.
    pub fn leaf(&mut self, value: Tensor<F>) -> Var {
        self.nodes.push(Node { value, back: None });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, var: Var) -> &Tensor<F> {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    /// Record an op output together with its backward rule.
    pub(crate) fn push(
        &mut self,
        value: Tensor<F>,
        back: impl Fn(&Tensor<F>, &mut GradSink<F>) + 'static,
    ) -> Var {
        self.nodes.push(Node {
            value,
            back: Some(Box::new(back)),
        });
        Var(self.nodes.len() - 1)
    }

    /// Record a unary op from explicit forward/backward closures.
    ///
    /// The backward closure receives (upstream gradient, saved input) and
    /// returns the input gradient. Used for one-off ops and for wiring
    /// deliberately wrong rules in gradient-checker tests.
    pub fn custom_unary(
        &mut self,
        x: Var,
        forward: impl Fn(&Tensor<F>) -> Tensor<F>,
        backward: impl Fn(&Tensor<F>, &Tensor<F>) -> Tensor<F> + 'static,
    ) -> Result<Var> {
        let x_val = self.value(x).clone();
        let out = forward(&x_val).check_finite("custom_unary")?;
        Ok(self.push(out, move |grad, sink| {
            sink.add(x, backward(grad, &x_val));
        }))
    }

    /// Reverse sweep from a scalar loss node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<F>> {
        let loss_val = self.value(loss);
        if !loss_val.is_scalar() {
            return Err(Error::NonScalarLoss {
                shape: loss_val.shape().to_vec(),
            });
        }
        let mut sink = GradSink {
            grads: vec![None; self.nodes.len()],
        };
        sink.grads[loss.0] = Some(Tensor::full(loss_val.shape(), F::one()));
        for i in (0..=loss.0).rev() {
            let Some(grad) = sink.grads[i].take() else {
                continue;
            };
            match &self.nodes[i].back {
                Some(back) => back(&grad, &mut sink),
                None => sink.grads[i] = Some(grad), // leaf: keep its gradient
            }
        }
        Ok(Gradients { grads: sink.grads })
    }
}
