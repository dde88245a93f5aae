//! Define-by-run reverse-mode differentiation graph.
//!
//! Each forward pass builds a fresh DAG of [`Node`]s; `backward` on a scalar
//! root walks it once in reverse topological order and accumulates
//! vector-Jacobian products. Values are held behind `Arc` so parameter
//! tensors are shared with the graph instead of copied per pass.

use std::collections::HashMap;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

/// Vector-Jacobian product: (output gradient, parent nodes, output value)
/// -> one gradient tensor per parent, in parent order.
pub(crate) type Vjp<F> = Box<dyn Fn(&Tensor<F>, &[Node<F>], &Tensor<F>) -> Vec<Tensor<F>>>;

pub(crate) struct NodeInner<F: Real> {
    id: u64,
    value: Arc<Tensor<F>>,
    parents: Vec<Node<F>>,
    vjp: Option<Vjp<F>>,
    param: Option<ParamId>,
}

/// Handle to one value in the computation graph.
pub struct Node<F: Real = f64>(Rc<NodeInner<F>>);

impl<F: Real> std::fmt::Debug for Node<F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Node")
            .field("id", &self.0.id)
            .field("shape", &self.0.value.shape())
            .field("param", &self.0.param)
            .finish()
    }
}

impl<F: Real> Clone for Node<F> {
    fn clone(&self) -> Self {
        Node(Rc::clone(&self.0))
    }
}

impl<F: Real> Node<F> {
    /// Leaf that does not require gradients.
    pub fn constant(value: Tensor<F>) -> Self {
        Self::from_arc(Arc::new(value))
    }

    pub fn scalar_const(v: F) -> Self {
        Self::constant(Tensor::scalar(v))
    }

    pub fn vector_const(v: Vec<F>) -> Self {
        Self::constant(Tensor::vector(v))
    }

    pub fn from_arc(value: Arc<Tensor<F>>) -> Self {
        Node(Rc::new(NodeInner {
            id: fresh_id(),
            value,
            parents: Vec::new(),
            vjp: None,
            param: None,
        }))
    }

    pub(crate) fn param_leaf(value: Arc<Tensor<F>>, param: ParamId) -> Self {
        Node(Rc::new(NodeInner {
            id: fresh_id(),
            value,
            parents: Vec::new(),
            vjp: None,
            param: Some(param),
        }))
    }

    pub(crate) fn from_op(value: Tensor<F>, parents: Vec<Node<F>>, vjp: Vjp<F>) -> Self {
        Node(Rc::new(NodeInner {
            id: fresh_id(),
            value: Arc::new(value),
            parents,
            vjp: Some(vjp),
            param: None,
        }))
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn value(&self) -> &Tensor<F> {
        &self.0.value
    }

    pub fn shape(&self) -> &[usize] {
        self.0.value.shape()
    }

    pub fn numel(&self) -> usize {
        self.0.value.numel()
    }

    pub fn scalar_value(&self) -> Result<F> {
        self.0.value.scalar_value()
    }

    pub fn param_id(&self) -> Option<ParamId> {
        self.0.param
    }

    fn parents(&self) -> &[Node<F>] {
        &self.0.parents
    }
}

/// Identifier of a parameter slot in a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) u32);

pub struct ParamEntry<F: Real> {
    pub name: String,
    pub value: Arc<Tensor<F>>,
    pub trainable: bool,
}

/// Named parameter tensors. The store owns the authoritative values; graphs
/// reference them without copying. Updates replace the `Arc`, so graphs in
/// flight keep the values they were built with.
pub struct ParamStore<F: Real = f64> {
    entries: Vec<ParamEntry<F>>,
}

impl<F: Real> Default for ParamStore<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> ParamStore<F> {
    pub fn new() -> Self {
        ParamStore { entries: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<F>, trainable: bool) -> Result<ParamId> {
        let name = name.into();
        if self.entries.iter().any(|e| e.name == name) {
            return Err(Error::Config(format!("duplicate parameter name `{name}`")));
        }
        let id = ParamId(self.entries.len() as u32);
        self.entries.push(ParamEntry {
            name,
            value: Arc::new(value),
            trainable,
        });
        Ok(id)
    }

    /// Graph leaf bound to this parameter; gradients land under its id.
    pub fn leaf(&self, id: ParamId) -> Node<F> {
        Node::param_leaf(Arc::clone(&self.entries[id.0 as usize].value), id)
    }

    pub fn value(&self, id: ParamId) -> &Tensor<F> {
        &self.entries[id.0 as usize].value
    }

    pub fn set_value(&mut self, id: ParamId, value: Tensor<F>) -> Result<()> {
        let entry = &mut self.entries[id.0 as usize];
        if entry.value.shape() != value.shape() {
            return Err(Error::Shape {
                op: "set_value",
                details: format!(
                    "parameter `{}` has shape {:?}, got {:?}",
                    entry.name,
                    entry.value.shape(),
                    value.shape()
                ),
            });
        }
        entry.value = Arc::new(value);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry<F> {
        &self.entries[id.0 as usize]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.entries.len()).map(|i| ParamId(i as u32))
    }

    pub fn trainable_ids(&self) -> Vec<ParamId> {
        self.ids().filter(|id| self.entry(*id).trainable).collect()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries
            .iter()
            .position(|e| e.name == name)
            .map(|i| ParamId(i as u32))
    }

    /// Deep copy of every value, for snapshots and best-model retention.
    pub fn snapshot(&self) -> Vec<Tensor<F>> {
        self.entries.iter().map(|e| (*e.value).clone()).collect()
    }

    pub fn restore(&mut self, snapshot: &[Tensor<F>]) -> Result<()> {
        if snapshot.len() != self.entries.len() {
            return Err(Error::Config(format!(
                "snapshot has {} tensors, store has {}",
                snapshot.len(),
                self.entries.len()
            )));
        }
        for (entry, tensor) in self.entries.iter_mut().zip(snapshot.iter()) {
            entry.value = Arc::new(tensor.clone());
        }
        Ok(())
    }
}

/// Gradients produced by one backward pass.
pub struct Gradients<F: Real = f64> {
    by_node: HashMap<u64, Tensor<F>>,
    by_param: HashMap<ParamId, Tensor<F>>,
}

impl<F: Real> Gradients<F> {
    pub fn param_grad(&self, id: ParamId) -> Option<&Tensor<F>> {
        self.by_param.get(&id)
    }

    /// Gradient for any node that participated in the graph.
    pub fn node_grad(&self, node: &Node<F>) -> Option<&Tensor<F>> {
        self.by_node.get(&node.id())
    }

    pub fn params(&self) -> &HashMap<ParamId, Tensor<F>> {
        &self.by_param
    }
}

/// Reverse-mode sweep from a scalar root. Every parameter leaf reachable from
/// `root` receives exactly one accumulated gradient entry.
pub fn backward<F: Real>(root: &Node<F>) -> Result<Gradients<F>> {
    if root.numel() != 1 {
        return Err(Error::Shape {
            op: "backward",
            details: format!("root must be scalar, got shape {:?}", root.shape()),
        });
    }

    // Iterative post-order DFS; recursion would overflow on long RNN unrolls.
    let mut topo: Vec<Node<F>> = Vec::new();
    let mut visited: std::collections::HashSet<u64> = std::collections::HashSet::new();
    enum Step<F: Real> {
        Enter(Node<F>),
        Exit(Node<F>),
    }
    let mut stack = vec![Step::Enter(root.clone())];
    while let Some(step) = stack.pop() {
        match step {
            Step::Enter(node) => {
                if visited.insert(node.id()) {
                    stack.push(Step::Exit(node.clone()));
                    for parent in node.parents() {
                        if !visited.contains(&parent.id()) {
                            stack.push(Step::Enter(parent.clone()));
                        }
                    }
                }
            }
            Step::Exit(node) => topo.push(node),
        }
    }

    let mut by_node: HashMap<u64, Tensor<F>> = HashMap::new();
    let mut by_param: HashMap<ParamId, Tensor<F>> = HashMap::new();
    by_node.insert(root.id(), Tensor::full(root.shape(), F::one()));

    for node in topo.iter().rev() {
        let grad = match by_node.get(&node.id()) {
            Some(g) => g.clone(),
            None => continue, // no path from root
        };
        if let Some(id) = node.param_id() {
            by_param
                .entry(id)
                .and_modify(|acc| acc.add_assign(&grad))
                .or_insert_with(|| grad.clone());
        }
        if let Some(vjp) = &node.0.vjp {
            let parent_grads = vjp(&grad, node.parents(), node.value());
            debug_assert_eq!(parent_grads.len(), node.parents().len());
            for (parent, pgrad) in node.parents().iter().zip(parent_grads.into_iter()) {
                debug_assert_eq!(parent.shape(), pgrad.shape());
                by_node
                    .entry(parent.id())
                    .and_modify(|acc| acc.add_assign(&pgrad))
                    .or_insert(pgrad);
            }
        }
    }

    Ok(Gradients { by_node, by_param })
}
