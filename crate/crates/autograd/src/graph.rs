//! Define-by-run tape, tracked values, and trainable parameters.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use crate::error::{Result, TensorError};
use crate::{Float, Tensor};

/// Backward closure of one recorded op.
///
/// Receives the gradient of the op output and, per parent, whether that
/// parent needs a gradient; returns one optional gradient per parent.
pub type BackwardFn<S> = Box<dyn FnOnce(&Tensor<S>, &[bool]) -> Vec<Option<Tensor<S>>>>;

struct Node<S> {
    parents: Vec<Option<usize>>,
    backward: Option<BackwardFn<S>>,
    param: Option<Param<S>>,
}

struct GraphInner<S> {
    nodes: RefCell<Vec<Node<S>>>,
    recording: bool,
}

/// Append-only tape. Clones share the same tape.
pub struct Graph<S>(Rc<GraphInner<S>>);

impl<S> Clone for Graph<S> {
    fn clone(&self) -> Self {
        Self(Rc::clone(&self.0))
    }
}

impl<S: Float> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Float> Graph<S> {
    /// A tape that records ops for a later [`Graph::backward`].
    pub fn new() -> Self {
        Self(Rc::new(GraphInner {
            nodes: RefCell::new(Vec::new()),
            recording: true,
        }))
    }

    /// A tape that records nothing; intermediate values are freed eagerly.
    pub fn inference() -> Self {
        Self(Rc::new(GraphInner {
            nodes: RefCell::new(Vec::new()),
            recording: false,
        }))
    }

    pub fn is_recording(&self) -> bool {
        self.0.recording
    }

    pub fn len(&self) -> usize {
        self.0.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, node: Node<S>) -> usize {
        let mut nodes = self.0.nodes.borrow_mut();
        nodes.push(node);
        nodes.len() - 1
    }

    /// Untracked value; no gradient flows into it.
    pub fn constant(&self, value: Tensor<S>) -> Var<S> {
        Var {
            value: Rc::new(value),
            node: None,
            graph: self.clone(),
        }
    }

    /// Tracked leaf whose gradient can be read back from [`Gradients`].
    pub fn input(&self, value: Tensor<S>) -> Var<S> {
        let node = self.0.recording.then(|| {
            self.push(Node {
                parents: Vec::new(),
                backward: None,
                param: None,
            })
        });
        Var {
            value: Rc::new(value),
            node,
            graph: self.clone(),
        }
    }

    /// Leaf bound to a parameter; backward accumulates into the parameter.
    pub fn param(&self, param: &Param<S>) -> Var<S> {
        let node = (self.0.recording && param.trainable()).then(|| {
            self.push(Node {
                parents: Vec::new(),
                backward: None,
                param: Some(param.clone()),
            })
        });
        Var {
            value: param.value(),
            node,
            graph: self.clone(),
        }
    }

    /// Records an op result. The closure is dropped unless some parent is tracked.
    pub fn record(
        &self,
        value: Tensor<S>,
        parents: &[&Var<S>],
        backward: impl FnOnce(&Tensor<S>, &[bool]) -> Vec<Option<Tensor<S>>> + 'static,
    ) -> Var<S> {
        let tracked = self.0.recording && parents.iter().any(|p| p.node.is_some());
        let node = tracked.then(|| {
            self.push(Node {
                parents: parents.iter().map(|p| p.node).collect(),
                backward: Some(Box::new(backward)),
                param: None,
            })
        });
        Var {
            value: Rc::new(value),
            node,
            graph: self.clone(),
        }
    }

    /// Reverse sweep from a scalar output with seed gradient 1.
    pub fn backward(&self, output: &Var<S>) -> Result<Gradients<S>> {
        if output.value.len() != 1 {
            return Err(TensorError::Backward(format!(
                "output must be scalar, got shape {:?}",
                output.value.shape()
            )));
        }
        let seed = Tensor::full(output.value.shape().to_vec(), S::one());
        self.backward_with(output, seed)
    }

    /// Reverse sweep from `output` seeded with an explicit gradient.
    pub fn backward_with(&self, output: &Var<S>, seed: Tensor<S>) -> Result<Gradients<S>> {
        crate::error::ensure_same("backward", output.value.shape(), seed.shape())?;
        let Some(root) = output.node else {
            return Ok(Gradients {
                leaves: HashMap::new(),
            });
        };
        let mut grads: Vec<Option<Tensor<S>>> = Vec::new();
        grads.resize_with(root + 1, || None);
        grads[root] = Some(seed);
        let mut leaves = HashMap::new();
        for id in (0..=root).rev() {
            let Some(grad) = grads[id].take() else {
                continue;
            };
            let (parents, backward, param) = {
                let mut nodes = self.0.nodes.borrow_mut();
                let node = &mut nodes[id];
                (
                    std::mem::take(&mut node.parents),
                    node.backward.take(),
                    node.param.clone(),
                )
            };
            if let Some(p) = param {
                p.accumulate_grad(&grad);
            }
            match backward {
                Some(f) => {
                    let needs: Vec<bool> = parents.iter().map(Option::is_some).collect();
                    let parent_grads = f(&grad, &needs);
                    for (pid, pg) in parents.iter().zip(parent_grads) {
                        let (Some(pid), Some(pg)) = (pid, pg) else {
                            continue;
                        };
                        match &mut grads[*pid] {
                            Some(acc) => acc.add_assign(&pg),
                            slot @ None => *slot = Some(pg),
                        }
                    }
                }
                None => {
                    if parents.is_empty() {
                        leaves.insert(id, grad);
                    } else {
                        return Err(TensorError::Backward(format!(
                            "node {id} was already consumed by an earlier backward"
                        )));
                    }
                }
            }
        }
        Ok(Gradients { leaves })
    }
}

/// Gradients of tracked leaves after a backward sweep.
pub struct Gradients<S> {
    leaves: HashMap<usize, Tensor<S>>,
}

impl<S: Float> Gradients<S> {
    /// Gradient of a leaf created with [`Graph::input`] or [`Graph::param`].
    pub fn get(&self, var: &Var<S>) -> Option<&Tensor<S>> {
        var.node.and_then(|id| self.leaves.get(&id))
    }
}

/// A value flowing through the tape.
pub struct Var<S> {
    pub(crate) value: Rc<Tensor<S>>,
    pub(crate) node: Option<usize>,
    pub(crate) graph: Graph<S>,
}

impl<S> Clone for Var<S> {
    fn clone(&self) -> Self {
        Self {
            value: Rc::clone(&self.value),
            node: self.node,
            graph: self.graph.clone(),
        }
    }
}

impl<S: Float> Var<S> {
    pub fn value(&self) -> &Tensor<S> {
        &self.value
    }

    pub fn value_rc(&self) -> Rc<Tensor<S>> {
        Rc::clone(&self.value)
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn graph(&self) -> &Graph<S> {
        &self.graph
    }

    pub fn is_tracked(&self) -> bool {
        self.node.is_some()
    }

    /// Same value, cut from the tape.
    pub fn detach(&self) -> Var<S> {
        Var {
            value: Rc::clone(&self.value),
            node: None,
            graph: self.graph.clone(),
        }
    }
}

struct ParamInner<S> {
    value: RefCell<Rc<Tensor<S>>>,
    grad: RefCell<Option<Tensor<S>>>,
    trainable: std::cell::Cell<bool>,
}

/// A trainable tensor. Clones alias the same storage, which is how weight
/// sharing is expressed.
pub struct Param<S>(Rc<ParamInner<S>>);

impl<S> Clone for Param<S> {
    fn clone(&self) -> Self {
        Self(Rc::clone(&self.0))
    }
}

impl<S: Float> std::fmt::Debug for Param<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Param")
            .field("shape", &self.shape())
            .field("id", &self.id())
            .finish()
    }
}

impl<S: Float> Param<S> {
    pub fn new(value: Tensor<S>) -> Self {
        Self(Rc::new(ParamInner {
            value: RefCell::new(Rc::new(value)),
            grad: RefCell::new(None),
            trainable: std::cell::Cell::new(true),
        }))
    }

    pub fn value(&self) -> Rc<Tensor<S>> {
        Rc::clone(&self.0.value.borrow())
    }

    pub fn shape(&self) -> Vec<usize> {
        self.0.value.borrow().shape().to_vec()
    }

    pub fn numel(&self) -> usize {
        self.0.value.borrow().len()
    }

    pub fn set_value(&self, value: Tensor<S>) -> Result<()> {
        crate::error::ensure_same("Param::set_value", &self.shape(), value.shape())?;
        *self.0.value.borrow_mut() = Rc::new(value);
        Ok(())
    }

    /// In-place update; copies only if a live tape still holds the old value.
    pub fn update(&self, f: impl FnOnce(&mut Tensor<S>)) {
        let mut slot = self.0.value.borrow_mut();
        f(Rc::make_mut(&mut slot));
    }

    pub fn grad(&self) -> Option<Tensor<S>> {
        self.0.grad.borrow().clone()
    }

    pub fn with_grad<R>(&self, f: impl FnOnce(Option<&Tensor<S>>) -> R) -> R {
        f(self.0.grad.borrow().as_ref())
    }

    /// Replaces the accumulated gradient.
    pub fn set_grad(&self, grad: Tensor<S>) {
        *self.0.grad.borrow_mut() = Some(grad);
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    fn accumulate_grad(&self, g: &Tensor<S>) {
        let mut slot = self.0.grad.borrow_mut();
        match &mut *slot {
            Some(acc) => acc.add_assign(g),
            None => *slot = Some(g.clone()),
        }
    }

    /// Frozen parameters enter the tape as constants.
    pub fn set_trainable(&self, trainable: bool) {
        self.0.trainable.set(trainable);
    }

    pub fn trainable(&self) -> bool {
        self.0.trainable.get()
    }

    /// Identity of the underlying storage (stable across clones).
    pub fn id(&self) -> usize {
        Rc::as_ptr(&self.0) as usize
    }

    pub fn ptr_eq(&self, other: &Param<S>) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }
}
