//! The in-memory chart model: hierarchy, transitions, variables, queries and
//! comments.

use std::collections::BTreeMap;
use std::fmt;

use crate::diag::SourceSpan;
use crate::expr::{Expr, Ty};
use crate::num::{Duration, Rational};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TransitionId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QueryId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Basic,
    Xor,
    And,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChartNode {
    pub name: String,
    pub kind: NodeKind,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    /// XOR only.
    pub initial: Option<NodeId>,
    /// Cost per step of residing in this state, by reward name.
    pub costs: BTreeMap<String, Rational>,
    pub invariant: Option<Expr>,
    pub queries: Vec<QueryId>,
    pub comments: Vec<String>,
}

impl ChartNode {
    pub fn new(name: impl Into<String>, kind: NodeKind, parent: Option<NodeId>) -> Self {
        ChartNode {
            name: name.into(),
            kind,
            parent,
            children: Vec::new(),
            initial: None,
            costs: BTreeMap::new(),
            invariant: None,
            queries: Vec::new(),
            comments: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Trigger {
    Event(String),
    After(Duration),
}

impl fmt::Display for Trigger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Trigger::Event(e) => f.write_str(e),
            Trigger::After(d) => write!(f, "after {d}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alternative {
    pub weight: Rational,
    pub target: NodeId,
    /// Executed as one simultaneous multiple assignment.
    pub assignments: Vec<(String, Expr)>,
    pub broadcasts: Vec<String>,
    pub costs: BTreeMap<String, Rational>,
}

impl Alternative {
    pub fn to(target: NodeId) -> Self {
        Alternative {
            weight: Rational::from_integer(1),
            target,
            assignments: Vec::new(),
            broadcasts: Vec::new(),
            costs: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub source: NodeId,
    pub trigger: Trigger,
    pub guard: Expr,
    pub alternatives: Vec<Alternative>,
    pub comments: Vec<String>,
}

impl Transition {
    pub fn is_probabilistic(&self) -> bool {
        self.alternatives.len() > 1
    }

    pub fn event_name(&self) -> Option<&str> {
        match &self.trigger {
            Trigger::Event(e) => Some(e),
            Trigger::After(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Int { lo: i64, hi: i64 },
    Bool,
}

impl Domain {
    pub fn bounds(&self) -> (i64, i64) {
        match *self {
            Domain::Int { lo, hi } => (lo, hi),
            Domain::Bool => (0, 1),
        }
    }

    pub fn ty(&self) -> Ty {
        match self {
            Domain::Int { .. } => Ty::Int,
            Domain::Bool => Ty::Bool,
        }
    }

    pub fn contains(&self, v: i64) -> bool {
        let (lo, hi) = self.bounds();
        lo <= v && v <= hi
    }
}

/// Range used when a declaration omits one.
pub const DEFAULT_RANGE: Domain = Domain::Int { lo: 0, hi: 255 };

#[derive(Debug, Clone, PartialEq)]
pub struct VariableDecl {
    pub name: String,
    pub domain: Domain,
    /// Booleans are stored as 0/1.
    pub initial: i64,
    pub scope: NodeId,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum QueryKind {
    Prob,
    Reward(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Relation {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Lt => "<",
            Relation::Le => "<=",
            Relation::Gt => ">",
            Relation::Ge => ">=",
            Relation::Eq => "=",
        }
    }

    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Relation::Lt => lhs < rhs,
            Relation::Le => lhs <= rhs,
            Relation::Gt => lhs > rhs,
            Relation::Ge => lhs >= rhs,
            Relation::Eq => lhs == rhs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Objective {
    Min,
    Max,
    Threshold(Relation, Rational),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Attachment {
    State(NodeId),
    Floating,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub kind: QueryKind,
    pub objective: Objective,
    pub time_bound: Option<Duration>,
    /// Goal condition over variables (floating formulas). Conjoined with the
    /// attached state when both are present.
    pub predicate: Option<Expr>,
    pub attachment: Attachment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommentAnchor {
    General,
    State(NodeId),
    Transition(TransitionId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Comment<'a> {
    pub text: &'a str,
    pub anchor: CommentAnchor,
}

/// Source positions of chart elements. Never takes part in AST equality.
#[derive(Debug, Clone, Default)]
pub struct SourceMap {
    pub nodes: BTreeMap<NodeId, SourceSpan>,
    pub transitions: BTreeMap<TransitionId, SourceSpan>,
    pub variables: BTreeMap<usize, SourceSpan>,
    pub queries: BTreeMap<QueryId, SourceSpan>,
}

impl PartialEq for SourceMap {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub name: String,
    /// Index 0 is the root.
    pub nodes: Vec<ChartNode>,
    pub transitions: Vec<Transition>,
    pub variables: Vec<VariableDecl>,
    /// Explicitly declared events.
    pub events: Vec<String>,
    pub queries: Vec<Query>,
    /// General comments, attached to the root.
    pub comments: Vec<String>,
    pub source: SourceMap,
}

pub const ROOT: NodeId = NodeId(0);

impl Chart {
    /// A chart with only a root XOR.
    pub fn new(name: impl Into<String>) -> Self {
        Chart {
            name: name.into(),
            nodes: vec![ChartNode::new("root", NodeKind::Xor, None)],
            transitions: Vec::new(),
            variables: Vec::new(),
            events: Vec::new(),
            queries: Vec::new(),
            comments: Vec::new(),
            source: SourceMap::default(),
        }
    }

    pub fn root(&self) -> NodeId {
        ROOT
    }

    pub fn node(&self, id: NodeId) -> &ChartNode {
        &self.nodes[id.0]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut ChartNode {
        &mut self.nodes[id.0]
    }

    pub fn transition(&self, id: TransitionId) -> &Transition {
        &self.transitions[id.0]
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn transition_ids(&self) -> impl Iterator<Item = TransitionId> {
        (0..self.transitions.len()).map(TransitionId)
    }

    /// Adds a child and makes the first XOR child the initial one.
    pub fn add_node(&mut self, parent: NodeId, name: impl Into<String>, kind: NodeKind) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(ChartNode::new(name, kind, Some(parent)));
        let p = &mut self.nodes[parent.0];
        p.children.push(id);
        if p.kind == NodeKind::Xor && p.initial.is_none() {
            p.initial = Some(id);
        }
        id
    }

    pub fn add_transition(&mut self, t: Transition) -> TransitionId {
        self.transitions.push(t);
        TransitionId(self.transitions.len() - 1)
    }

    pub fn add_query(&mut self, q: Query) -> QueryId {
        let id = QueryId(self.queries.len());
        if let Attachment::State(s) = q.attachment {
            self.nodes[s.0].queries.push(id);
        }
        self.queries.push(q);
        id
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.nodes[id.0].name
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id.0].parent
    }

    /// Proper ancestors, nearest first.
    pub fn ancestors(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut cur = self.parent(id);
        while let Some(p) = cur {
            if out.contains(&p) || out.len() > self.nodes.len() {
                break;
            }
            out.push(p);
            cur = self.parent(p);
        }
        out
    }

    /// True if `a` is `b` or a proper ancestor of `b`.
    pub fn contains(&self, a: NodeId, b: NodeId) -> bool {
        a == b || self.ancestors(b).contains(&a)
    }

    pub fn depth(&self, id: NodeId) -> usize {
        self.ancestors(id).len()
    }

    /// All nodes of the subtree rooted at `id`, preorder.
    pub fn subtree(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            if out.contains(&n) {
                continue;
            }
            out.push(n);
            for c in self.node(n).children.iter().rev() {
                stack.push(*c);
            }
        }
        out
    }

    /// Dotted path from the root, excluding the root itself.
    pub fn path(&self, id: NodeId) -> String {
        if id == ROOT {
            return "root".to_string();
        }
        let mut names: Vec<&str> = self.ancestors(id).iter().rev().skip(1).map(|a| self.name(*a)).collect();
        names.push(self.name(id));
        names.join(".")
    }

    /// The shortest dotted suffix of the path that names `id` uniquely.
    pub fn short_ref(&self, id: NodeId) -> String {
        if id == ROOT {
            return "root".to_string();
        }
        let full = self.path(id);
        let parts: Vec<&str> = full.split('.').collect();
        for k in 1..=parts.len() {
            let candidate = parts[parts.len() - k..].join(".");
            if self.resolve_state(&candidate) == Ok(id) {
                return candidate;
            }
        }
        full
    }

    /// Resolves `Name` or `A.B.Name` (a suffix of the dotted path).
    pub fn resolve_state(&self, reference: &str) -> Result<NodeId, String> {
        if reference == "root" {
            return Ok(ROOT);
        }
        let wanted: Vec<&str> = reference.split('.').collect();
        let matches: Vec<NodeId> = self
            .node_ids()
            .filter(|id| *id != ROOT && self.name(*id) == *wanted.last().unwrap())
            .filter(|id| {
                let path = self.path(*id);
                let parts: Vec<&str> = path.split('.').collect();
                parts.len() >= wanted.len() && parts[parts.len() - wanted.len()..] == wanted[..]
            })
            .collect();
        match matches.as_slice() {
            [one] => Ok(*one),
            [] => Err(format!("unknown state `{reference}`")),
            _ => Err(format!(
                "ambiguous state reference `{reference}` (could be {})",
                matches.iter().map(|m| self.path(*m)).collect::<Vec<_>>().join(", ")
            )),
        }
    }

    /// XOR ancestors with several children, nearest first, each paired with the
    /// child on the way to `id`. `in(id)` holds iff every such ancestor has
    /// that child active.
    pub fn selector_chain(&self, id: NodeId) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::new();
        let mut child = id;
        for a in self.ancestors(id) {
            let n = self.node(a);
            if n.kind == NodeKind::Xor && n.children.len() >= 2 {
                out.push((a, child));
            }
            child = a;
        }
        out
    }

    /// A state that is active in every configuration.
    pub fn always_active(&self, id: NodeId) -> bool {
        self.selector_chain(id).is_empty()
    }

    /// Declared events followed by events used but not declared, in order of
    /// first use.
    pub fn all_events(&self) -> Vec<String> {
        let mut out = self.events.clone();
        let mut push = |e: &str| {
            if !out.iter().any(|x| x == e) {
                out.push(e.to_string());
            }
        };
        for t in &self.transitions {
            if let Trigger::Event(e) = &t.trigger {
                push(e);
            }
            for a in &t.alternatives {
                for b in &a.broadcasts {
                    push(b);
                }
            }
        }
        out
    }

    /// Reward names in order of first use.
    pub fn reward_names(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let mut push = |r: &String| {
            if !out.contains(r) {
                out.push(r.clone());
            }
        };
        for n in &self.nodes {
            n.costs.keys().for_each(&mut push);
        }
        for t in &self.transitions {
            for a in &t.alternatives {
                a.costs.keys().for_each(&mut push);
            }
        }
        out
    }

    /// Resolves a variable name as seen from `scope`.
    pub fn resolve_var(&self, scope: NodeId, name: &str) -> Option<usize> {
        let mut chain = vec![scope];
        chain.extend(self.ancestors(scope));
        chain
            .iter()
            .find_map(|s| self.variables.iter().position(|v| v.name == name && v.scope == *s))
    }

    pub fn var_type(&self, scope: NodeId, name: &str) -> Option<Ty> {
        self.resolve_var(scope, name).map(|i| self.variables[i].domain.ty())
    }

    pub fn comments(&self) -> Vec<Comment<'_>> {
        let mut out: Vec<Comment<'_>> =
            self.comments.iter().map(|text| Comment { text, anchor: CommentAnchor::General }).collect();
        for id in self.node_ids() {
            for text in &self.node(id).comments {
                out.push(Comment { text, anchor: CommentAnchor::State(id) });
            }
        }
        for id in self.transition_ids() {
            for text in &self.transition(id).comments {
                out.push(Comment { text, anchor: CommentAnchor::Transition(id) });
            }
        }
        out
    }

    /// The state whose subtree is exited and re-entered by a transition from
    /// `source` to `target`: the nearest XOR that properly contains both.
    pub fn transition_scope(&self, source: NodeId, target: NodeId) -> NodeId {
        let src_anc = self.ancestors(source);
        for a in self.ancestors(target) {
            if src_anc.contains(&a) && self.node(a).kind == NodeKind::Xor {
                return a;
            }
        }
        ROOT
    }

    /// Active nodes below `scope` after entering `target` from `scope`:
    /// the path down to the target, every region of AND states on the way and
    /// initial descendants below the target.
    pub fn entered_states(&self, scope: NodeId, target: NodeId) -> Vec<NodeId> {
        let mut path: Vec<NodeId> = self.ancestors(target).into_iter().take_while(|a| *a != scope).collect();
        path.reverse();
        path.push(target);
        let mut out = Vec::new();
        for (i, n) in path.iter().enumerate() {
            out.push(*n);
            if self.node(*n).kind == NodeKind::And {
                let next = path.get(i + 1).copied();
                for r in &self.node(*n).children {
                    if Some(*r) != next {
                        self.default_entry(*r, &mut out);
                    }
                }
            }
        }
        let below: Vec<NodeId> = self.default_entry_below(target);
        out.extend(below);
        out
    }

    fn default_entry_below(&self, n: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let node = self.node(n);
        match node.kind {
            NodeKind::Basic => {}
            NodeKind::Xor => {
                if let Some(i) = node.initial {
                    self.default_entry(i, &mut out);
                }
            }
            NodeKind::And => {
                for r in &node.children {
                    self.default_entry(*r, &mut out);
                }
            }
        }
        out
    }

    fn default_entry(&self, n: NodeId, out: &mut Vec<NodeId>) {
        out.push(n);
        out.extend(self.default_entry_below(n));
    }

    /// The configuration entered at start-up.
    pub fn initial_configuration(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        self.default_entry(ROOT, &mut out);
        out
    }

    /// `inv(ancestors) ∧ inv(state) ∧ D(state)` where `D` combines descendant
    /// invariants: a disjunction over the children of an XOR state and a
    /// conjunction over the regions of an AND state.
    pub fn accumulated_invariant(&self, state: NodeId) -> Result<Expr, String> {
        if state.0 >= self.nodes.len() {
            return Err(format!("unknown state id {}", state.0));
        }
        let mut parts: Vec<Expr> = self
            .ancestors(state)
            .iter()
            .rev()
            .filter_map(|a| self.node(*a).invariant.clone())
            .collect();
        parts.push(self.own_and_below(state));
        Ok(Expr::conj(parts))
    }

    fn own_and_below(&self, state: NodeId) -> Expr {
        let node = self.node(state);
        let own = node.invariant.clone().unwrap_or(Expr::Bool(true));
        let below = match node.kind {
            NodeKind::Basic => Expr::Bool(true),
            NodeKind::Xor if node.children.is_empty() => Expr::Bool(true),
            NodeKind::Xor => Expr::disj(node.children.iter().map(|c| self.own_and_below(*c))),
            NodeKind::And => Expr::conj(node.children.iter().map(|c| self.own_and_below(*c))),
        };
        Expr::conj([own, below])
    }

    /// `∧ (in(s) ⇒ inv(s))` over states carrying an invariant; states that
    /// are always active contribute `inv(s)` directly.
    pub fn global_invariant(&self) -> Expr {
        Expr::conj(self.node_ids().filter_map(|id| {
            let inv = self.node(id).invariant.clone()?;
            Some(if self.always_active(id) { inv } else { Expr::implies(Expr::In(self.short_ref(id)), inv) })
        }))
    }

    pub fn has_probabilistic_transitions(&self) -> bool {
        self.transitions.iter().any(Transition::is_probabilistic)
    }

    pub fn is_timed(&self) -> bool {
        self.transitions.iter().any(|t| matches!(t.trigger, Trigger::After(_)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sender_receiver_shape() -> (Chart, [NodeId; 7]) {
        let mut c = Chart::new("sr");
        let system = c.add_node(ROOT, "System", NodeKind::And);
        let sender = c.add_node(system, "Sender", NodeKind::Xor);
        let receiver = c.add_node(system, "Receiver", NodeKind::Xor);
        let sleeping = c.add_node(sender, "Sleeping", NodeKind::Basic);
        let sending = c.add_node(sender, "Sending", NodeKind::Basic);
        let listening = c.add_node(receiver, "Listening", NodeKind::Basic);
        let off = c.add_node(receiver, "Off", NodeKind::Basic);
        c.node_mut(system).invariant = Some(Expr::implies(Expr::in_state("Sleeping"), Expr::not(Expr::in_state("Off"))));
        (c, [system, sender, receiver, sleeping, sending, listening, off])
    }

    #[test]
    fn accumulated_invariant_of_system_is_its_own() {
        let (c, [system, ..]) = sender_receiver_shape();
        let inv = c.accumulated_invariant(system).unwrap();
        assert_eq!(inv.to_string(), "in Sleeping => !in Off");
    }

    #[test]
    fn accumulated_invariant_without_invariants_is_true() {
        let c = Chart::new("x");
        assert_eq!(c.accumulated_invariant(ROOT).unwrap(), Expr::Bool(true));
        assert!(c.accumulated_invariant(NodeId(7)).is_err());
    }

    #[test]
    fn accumulated_invariant_conjoins_ancestors() {
        let mut c = Chart::new("x");
        let a = c.add_node(ROOT, "A", NodeKind::Xor);
        let leaf = c.add_node(a, "L", NodeKind::Basic);
        c.node_mut(a).invariant = Some(Expr::bin(crate::expr::BinOp::Lt, Expr::var("y"), Expr::Int(5)));
        c.node_mut(leaf).invariant = Some(Expr::bin(crate::expr::BinOp::Gt, Expr::var("x"), Expr::Int(0)));
        assert_eq!(c.accumulated_invariant(leaf).unwrap().to_string(), "y < 5 & x > 0");
    }

    #[test]
    fn global_invariant_drops_always_active_guard() {
        let (c, _) = sender_receiver_shape();
        assert_eq!(c.global_invariant().to_string(), "in Sleeping => !in Off");
    }

    #[test]
    fn resolve_and_scope() {
        let (c, [system, sender, _, sleeping, sending, listening, off]) = sender_receiver_shape();
        assert_eq!(c.resolve_state("Sender.Sleeping"), Ok(sleeping));
        assert_eq!(c.short_ref(off), "Off");
        assert_eq!(c.transition_scope(sleeping, sending), sender);
        assert_eq!(c.transition_scope(sending, sending), sender);
        assert_eq!(c.transition_scope(sleeping, listening), ROOT);
        assert_eq!(c.initial_configuration(), vec![ROOT, system, sender, sleeping, NodeId(3), listening]);
        assert_eq!(c.selector_chain(off), vec![(NodeId(3), off)]);
    }
}
