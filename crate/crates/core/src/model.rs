//! Hierarchical block diagrams with classified variables.
//!
//! A [`Diagram`] is a rooted tree of blocks. Every block exposes typed input
//! and output variables, each tagged cyber or physical. Wires connect an
//! output of one block to an input of a sibling block. On top of that
//! structure this module answers the connectivity questions (`connects`,
//! `has_path`) and computes the influence closure whose cyber members form
//! the software-physical variable set.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    /// A structural invariant does not hold; `path` points into the document.
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("unknown block `{0}`")]
    UnknownBlock(String),
    #[error("block `{block}` has no variable `{var}`")]
    UnknownVariable { block: String, var: String },
    #[error("block `{0}` declares no variables, so it has no class")]
    EmptyBlock(String),
    #[error("malformed diagram document: {0}")]
    Json(String),
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> ModelError {
    ModelError::Invalid {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarKind {
    Cyber,
    Physical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Input,
    Output,
}

/// Value type of a block variable. Serialized as `real`, `integer`,
/// `boolean` or `real[N]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ValueType {
    Real,
    Integer,
    Boolean,
    RealArray(usize),
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueType::Real => f.write_str("real"),
            ValueType::Integer => f.write_str("integer"),
            ValueType::Boolean => f.write_str("boolean"),
            ValueType::RealArray(n) => write!(f, "real[{n}]"),
        }
    }
}

impl FromStr for ValueType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "real" | "double" => Ok(ValueType::Real),
            "integer" | "int" => Ok(ValueType::Integer),
            "boolean" | "bool" => Ok(ValueType::Boolean),
            other => {
                let len = other
                    .strip_prefix("real[")
                    .and_then(|rest| rest.strip_suffix(']'))
                    .ok_or_else(|| format!("unknown value type `{other}`"))?;
                let len: usize = len
                    .trim()
                    .parse()
                    .map_err(|_| format!("bad array length in `{other}`"))?;
                if len == 0 {
                    return Err("array length must be at least 1".to_string());
                }
                Ok(ValueType::RealArray(len))
            }
        }
    }
}

impl TryFrom<String> for ValueType {
    type Error = String;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<ValueType> for String {
    fn from(value: ValueType) -> Self {
        value.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableDecl {
    pub name: String,
    pub kind: VarKind,
    pub direction: Direction,
    #[serde(rename = "type")]
    pub value_type: ValueType,
    #[serde(default)]
    pub unit: String,
}

impl VariableDecl {
    pub fn new(name: &str, kind: VarKind, direction: Direction, value_type: ValueType, unit: &str) -> Self {
        VariableDecl {
            name: name.to_string(),
            kind,
            direction,
            value_type,
            unit: unit.to_string(),
        }
    }
}

/// The four variable classes obtained from (kind, direction).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum VariableClass {
    InputCyber,
    OutputCyber,
    InputPhysical,
    OutputPhysical,
}

impl VariableClass {
    pub fn of(kind: VarKind, direction: Direction) -> Self {
        match (kind, direction) {
            (VarKind::Cyber, Direction::Input) => VariableClass::InputCyber,
            (VarKind::Cyber, Direction::Output) => VariableClass::OutputCyber,
            (VarKind::Physical, Direction::Input) => VariableClass::InputPhysical,
            (VarKind::Physical, Direction::Output) => VariableClass::OutputPhysical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum BlockClass {
    Cyber,
    Physical,
    CyberPhysical,
}

/// Reference to one variable of one block.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarRef {
    pub block: String,
    pub var: String,
}

impl VarRef {
    pub fn new(block: &str, var: &str) -> Self {
        VarRef {
            block: block.to_string(),
            var: var.to_string(),
        }
    }
}

impl fmt::Display for VarRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.block, self.var)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub id: String,
    pub parent: Option<String>,
    pub children: Vec<String>,
    pub variables: Vec<VariableDecl>,
    /// Explicit input -> outputs map. `None` means every input drives every output.
    pub direct_influence: Option<BTreeMap<String, Vec<String>>>,
}

impl Block {
    pub fn variable(&self, name: &str) -> Option<&VariableDecl> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn inputs(&self) -> impl Iterator<Item = &VariableDecl> {
        self.variables.iter().filter(|v| v.direction == Direction::Input)
    }

    pub fn outputs(&self) -> impl Iterator<Item = &VariableDecl> {
        self.variables.iter().filter(|v| v.direction == Direction::Output)
    }

    pub fn classify(&self) -> Result<BlockClass, ModelError> {
        let cyber = self.variables.iter().any(|v| v.kind == VarKind::Cyber);
        let physical = self.variables.iter().any(|v| v.kind == VarKind::Physical);
        match (cyber, physical) {
            (true, true) => Ok(BlockClass::CyberPhysical),
            (true, false) => Ok(BlockClass::Cyber),
            (false, true) => Ok(BlockClass::Physical),
            (false, false) => Err(ModelError::EmptyBlock(self.id.clone())),
        }
    }

    /// Pairs (input, output) such that the input directly influences the output.
    pub fn influence_pairs(&self) -> Vec<(String, String)> {
        match &self.direct_influence {
            Some(map) => map
                .iter()
                .flat_map(|(input, outs)| outs.iter().map(move |o| (input.clone(), o.clone())))
                .collect(),
            None => self
                .inputs()
                .flat_map(|i| self.outputs().map(move |o| (i.name.clone(), o.name.clone())))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Wire {
    pub from: VarRef,
    pub to: VarRef,
}

/// Serialized form of a block. Children are derived from the parent links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockDoc {
    pub id: String,
    #[serde(default)]
    pub parent: Option<String>,
    pub variables: Vec<VariableDecl>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direct_influence: Option<BTreeMap<String, Vec<String>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireDoc {
    pub from: (String, String),
    pub to: (String, String),
}

impl WireDoc {
    pub fn new(from: (&str, &str), to: (&str, &str)) -> Self {
        WireDoc {
            from: (from.0.to_string(), from.1.to_string()),
            to: (to.0.to_string(), to.1.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagramDoc {
    pub blocks: Vec<BlockDoc>,
    #[serde(default)]
    pub wires: Vec<WireDoc>,
}

/// A validated block diagram. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagram {
    blocks: BTreeMap<String, Block>,
    order: Vec<String>,
    root: String,
    wires: Vec<Wire>,
}

impl Diagram {
    pub fn from_json_str(src: &str) -> Result<Self, ModelError> {
        let doc: DiagramDoc = serde_json::from_str(src).map_err(|e| ModelError::Json(e.to_string()))?;
        Diagram::from_doc(doc)
    }

    /// Validates the document and reports the first violated invariant.
    pub fn from_doc(doc: DiagramDoc) -> Result<Self, ModelError> {
        let mut blocks: BTreeMap<String, Block> = BTreeMap::new();
        let mut order = Vec::with_capacity(doc.blocks.len());

        for (i, b) in doc.blocks.iter().enumerate() {
            let path = format!("blocks[{i}]");
            if b.id.trim().is_empty() {
                return Err(invalid(format!("{path}.id"), "block id is empty"));
            }
            if blocks.contains_key(&b.id) {
                return Err(invalid(format!("{path}.id"), format!("duplicate block id `{}`", b.id)));
            }
            if b.variables.is_empty() {
                return Err(invalid(
                    format!("{path}.variables"),
                    format!("block `{}` declares no variables", b.id),
                ));
            }
            let mut seen = BTreeSet::new();
            for (j, v) in b.variables.iter().enumerate() {
                let vpath = format!("{path}.variables[{j}]");
                if v.name.trim().is_empty() {
                    return Err(invalid(format!("{vpath}.name"), "variable name is empty"));
                }
                if !seen.insert(v.name.as_str()) {
                    return Err(invalid(
                        format!("{vpath}.name"),
                        format!("duplicate variable `{}` in block `{}`", v.name, b.id),
                    ));
                }
                if let ValueType::RealArray(0) = v.value_type {
                    return Err(invalid(format!("{vpath}.type"), "array length must be at least 1"));
                }
            }
            if let Some(map) = &b.direct_influence {
                for (input, outs) in map {
                    let ipath = format!("{path}.direct_influence.{input}");
                    match b.variables.iter().find(|v| &v.name == input) {
                        Some(v) if v.direction == Direction::Input => {}
                        Some(_) => return Err(invalid(ipath, format!("`{input}` is not an input"))),
                        None => return Err(invalid(ipath, format!("unknown variable `{input}`"))),
                    }
                    for out in outs {
                        match b.variables.iter().find(|v| &v.name == out) {
                            Some(v) if v.direction == Direction::Output => {}
                            Some(_) => return Err(invalid(ipath, format!("`{out}` is not an output"))),
                            None => return Err(invalid(ipath, format!("unknown variable `{out}`"))),
                        }
                    }
                }
            }
            order.push(b.id.clone());
            blocks.insert(
                b.id.clone(),
                Block {
                    id: b.id.clone(),
                    parent: b.parent.clone(),
                    children: Vec::new(),
                    variables: b.variables.clone(),
                    direct_influence: b.direct_influence.clone(),
                },
            );
        }

        // Parent links: every parent exists, exactly one root, no cycles.
        let mut roots = Vec::new();
        for (i, b) in doc.blocks.iter().enumerate() {
            match &b.parent {
                None => roots.push(b.id.clone()),
                Some(p) => {
                    if !blocks.contains_key(p) {
                        return Err(invalid(format!("blocks[{i}].parent"), format!("unknown parent `{p}`")));
                    }
                    if p == &b.id {
                        return Err(invalid(format!("blocks[{i}].parent"), "block is its own parent"));
                    }
                }
            }
        }
        let root = match roots.as_slice() {
            [r] => r.clone(),
            [] => return Err(invalid("blocks", "no root block (every block has a parent)")),
            many => {
                return Err(invalid(
                    "blocks",
                    format!("expected exactly one root block, found {}: {}", many.len(), many.join(", ")),
                ))
            }
        };
        for (i, b) in doc.blocks.iter().enumerate() {
            let mut cursor = b.parent.clone();
            let mut steps = 0;
            while let Some(p) = cursor {
                steps += 1;
                if steps > doc.blocks.len() {
                    return Err(invalid(
                        format!("blocks[{i}].parent"),
                        format!("parent chain of `{}` contains a cycle", b.id),
                    ));
                }
                cursor = blocks[&p].parent.clone();
            }
        }
        for id in &order {
            if let Some(p) = blocks[id].parent.clone() {
                blocks.get_mut(&p).expect("parent checked").children.push(id.clone());
            }
        }

        let mut wires = Vec::with_capacity(doc.wires.len());
        let mut driven: HashMap<VarRef, usize> = HashMap::new();
        for (k, w) in doc.wires.iter().enumerate() {
            let path = format!("wires[{k}]");
            let from = VarRef::new(&w.from.0, &w.from.1);
            let to = VarRef::new(&w.to.0, &w.to.1);
            let src_block = blocks
                .get(&from.block)
                .ok_or_else(|| invalid(format!("{path}.from"), format!("unknown block `{}`", from.block)))?;
            let dst_block = blocks
                .get(&to.block)
                .ok_or_else(|| invalid(format!("{path}.to"), format!("unknown block `{}`", to.block)))?;
            let src_var = src_block.variable(&from.var).ok_or_else(|| {
                invalid(format!("{path}.from"), format!("block `{}` has no variable `{}`", from.block, from.var))
            })?;
            let dst_var = dst_block.variable(&to.var).ok_or_else(|| {
                invalid(format!("{path}.to"), format!("block `{}` has no variable `{}`", to.block, to.var))
            })?;
            if src_var.direction != Direction::Output {
                return Err(invalid(format!("{path}.from"), format!("`{from}` is not an output variable")));
            }
            if dst_var.direction != Direction::Input {
                return Err(invalid(format!("{path}.to"), format!("`{to}` is not an input variable")));
            }
            if src_block.parent != dst_block.parent {
                return Err(invalid(
                    path,
                    format!("`{}` and `{}` do not share a parent", from.block, to.block),
                ));
            }
            if let Some(prev) = driven.insert(to.clone(), k) {
                return Err(invalid(
                    format!("{path}.to"),
                    format!("input `{to}` is already driven by wires[{prev}]"),
                ));
            }
            wires.push(Wire { from, to });
        }

        Ok(Diagram {
            blocks,
            order,
            root,
            wires,
        })
    }

    pub fn to_doc(&self) -> DiagramDoc {
        DiagramDoc {
            blocks: self
                .order
                .iter()
                .map(|id| {
                    let b = &self.blocks[id];
                    BlockDoc {
                        id: b.id.clone(),
                        parent: b.parent.clone(),
                        variables: b.variables.clone(),
                        direct_influence: b.direct_influence.clone(),
                    }
                })
                .collect(),
            wires: self
                .wires
                .iter()
                .map(|w| WireDoc {
                    from: (w.from.block.clone(), w.from.var.clone()),
                    to: (w.to.block.clone(), w.to.var.clone()),
                })
                .collect(),
        }
    }

    pub fn root(&self) -> &str {
        &self.root
    }

    pub fn block(&self, id: &str) -> Result<&Block, ModelError> {
        self.blocks.get(id).ok_or_else(|| ModelError::UnknownBlock(id.to_string()))
    }

    /// Block ids in declaration order.
    pub fn block_ids(&self) -> &[String] {
        &self.order
    }

    /// Blocks in depth-first pre-order starting at the root.
    pub fn walk(&self) -> Vec<&Block> {
        let mut out = Vec::with_capacity(self.blocks.len());
        let mut stack = vec![self.root.as_str()];
        while let Some(id) = stack.pop() {
            let b = &self.blocks[id];
            out.push(b);
            for child in b.children.iter().rev() {
                stack.push(child);
            }
        }
        out
    }

    pub fn wires(&self) -> &[Wire] {
        &self.wires
    }

    pub fn parent(&self, id: &str) -> Result<Option<&str>, ModelError> {
        Ok(self.block(id)?.parent.as_deref())
    }

    pub fn children(&self, id: &str) -> Result<&[String], ModelError> {
        Ok(&self.block(id)?.children)
    }

    /// Enclosing blocks of `id`, nearest first, ending at the root.
    pub fn ancestors(&self, id: &str) -> Result<Vec<String>, ModelError> {
        let mut out = Vec::new();
        let mut cursor = self.block(id)?.parent.clone();
        while let Some(p) = cursor {
            cursor = self.blocks[&p].parent.clone();
            out.push(p);
        }
        Ok(out)
    }

    /// Blocks with the same parent as `id` (including `id`).
    pub fn level(&self, id: &str) -> Result<Vec<String>, ModelError> {
        let parent = self.block(id)?.parent.clone();
        Ok(self
            .order
            .iter()
            .filter(|other| self.blocks[*other].parent == parent)
            .cloned()
            .collect())
    }

    pub fn variable(&self, block: &str, var: &str) -> Result<&VariableDecl, ModelError> {
        self.block(block)?.variable(var).ok_or_else(|| ModelError::UnknownVariable {
            block: block.to_string(),
            var: var.to_string(),
        })
    }

    pub fn classify_variable(&self, block: &str, var: &str) -> Result<VariableClass, ModelError> {
        let v = self.variable(block, var)?;
        Ok(VariableClass::of(v.kind, v.direction))
    }

    pub fn classify_block(&self, block: &str) -> Result<BlockClass, ModelError> {
        self.block(block)?.classify()
    }

    /// True iff a wire runs from an output of `v` to an input of `w`.
    pub fn connects(&self, v: &str, w: &str) -> Result<bool, ModelError> {
        self.block(v)?;
        self.block(w)?;
        Ok(self.wires.iter().any(|wire| wire.from.block == v && wire.to.block == w))
    }

    /// Non-reflexive transitive closure of [`Diagram::connects`].
    pub fn has_path(&self, v: &str, w: &str) -> Result<bool, ModelError> {
        self.block(v)?;
        self.block(w)?;
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<&str> = self.successors(v).collect();
        while let Some(b) = queue.pop_front() {
            if b == w {
                return Ok(true);
            }
            if seen.insert(b) {
                queue.extend(self.successors(b));
            }
        }
        Ok(false)
    }

    fn successors<'a>(&'a self, v: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.wires
            .iter()
            .filter(move |w| w.from.block == v)
            .map(|w| w.to.block.as_str())
    }

    /// All (block, variable) references in declaration order.
    pub fn variables(&self) -> Vec<VarRef> {
        self.order
            .iter()
            .flat_map(|id| self.blocks[id].variables.iter().map(move |v| VarRef::new(id, &v.name)))
            .collect()
    }

    /// Edges of the variable-level influence graph: wires plus intra-block
    /// direct influence.
    pub fn influence_edges(&self) -> Vec<(VarRef, VarRef)> {
        let mut edges: Vec<(VarRef, VarRef)> =
            self.wires.iter().map(|w| (w.from.clone(), w.to.clone())).collect();
        for id in &self.order {
            for (i, o) in self.blocks[id].influence_pairs() {
                edges.push((VarRef::new(id, &i), VarRef::new(id, &o)));
            }
        }
        edges
    }

    pub fn software_physical_vars(&self) -> InfluenceResult {
        let nodes = self.variables();
        let index: HashMap<&VarRef, usize> = nodes.iter().enumerate().map(|(i, n)| (n, i)).collect();
        let mut succ: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
        for (a, b) in self.influence_edges() {
            succ[index[&a]].push(index[&b]);
        }

        let mut influenced_by: BTreeMap<VarRef, BTreeSet<VarRef>> =
            nodes.iter().map(|n| (n.clone(), BTreeSet::new())).collect();
        for (src, _) in nodes.iter().enumerate() {
            let mut seen = vec![false; nodes.len()];
            let mut queue: VecDeque<usize> = succ[src].iter().copied().collect();
            while let Some(n) = queue.pop_front() {
                if seen[n] {
                    continue;
                }
                seen[n] = true;
                queue.extend(succ[n].iter().copied());
            }
            for (dst, hit) in seen.into_iter().enumerate() {
                if hit {
                    influenced_by
                        .get_mut(&nodes[dst])
                        .expect("node present")
                        .insert(nodes[src].clone());
                }
            }
        }

        let kind_of = |r: &VarRef| self.blocks[&r.block].variable(&r.var).map(|v| v.kind);
        let software_physical = influenced_by
            .iter()
            .filter(|(v, _)| kind_of(v) == Some(VarKind::Cyber))
            .filter(|(_, srcs)| srcs.iter().any(|s| kind_of(s) == Some(VarKind::Physical)))
            .map(|(v, _)| v.clone())
            .collect();

        InfluenceResult {
            influenced_by,
            software_physical,
        }
    }
}

/// Result of the influence closure.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceResult {
    /// For each variable, every variable with an influence path into it.
    pub influenced_by: BTreeMap<VarRef, BTreeSet<VarRef>>,
    /// Cyber variables influenced by at least one physical variable.
    pub software_physical: BTreeSet<VarRef>,
}

impl InfluenceResult {
    pub fn contains(&self, block: &str, var: &str) -> bool {
        self.software_physical.contains(&VarRef::new(block, var))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn var(name: &str, kind: VarKind, direction: Direction) -> VariableDecl {
        VariableDecl::new(name, kind, direction, ValueType::Real, "")
    }

    fn block(id: &str, parent: Option<&str>, vars: Vec<VariableDecl>) -> BlockDoc {
        BlockDoc {
            id: id.to_string(),
            parent: parent.map(str::to_string),
            variables: vars,
            direct_influence: None,
        }
    }

    fn feedback_loop() -> Diagram {
        use Direction::*;
        use VarKind::*;
        Diagram::from_doc(DiagramDoc {
            blocks: vec![
                block("top", None, vec![var("u", Cyber, Input)]),
                block("plant", Some("top"), vec![var("gate", Physical, Input), var("v", Physical, Output)]),
                block("sensor", Some("top"), vec![var("v", Physical, Input), var("vs", Cyber, Output)]),
                block("ctrl", Some("top"), vec![var("vs", Cyber, Input), var("mode", Cyber, Output)]),
                block("act", Some("top"), vec![var("mode", Cyber, Input), var("gate", Physical, Output)]),
                block("idle", Some("top"), vec![var("k", Cyber, Output)]),
            ],
            wires: vec![
                WireDoc::new(("plant", "v"), ("sensor", "v")),
                WireDoc::new(("sensor", "vs"), ("ctrl", "vs")),
                WireDoc::new(("ctrl", "mode"), ("act", "mode")),
                WireDoc::new(("act", "gate"), ("plant", "gate")),
            ],
        })
        .unwrap()
    }

    #[test]
    fn classification_table() {
        let d = feedback_loop();
        assert_eq!(d.classify_variable("sensor", "v").unwrap(), VariableClass::InputPhysical);
        assert_eq!(d.classify_variable("ctrl", "mode").unwrap(), VariableClass::OutputCyber);
        assert_eq!(d.classify_variable("ctrl", "vs").unwrap(), VariableClass::InputCyber);
        assert_eq!(d.classify_variable("plant", "v").unwrap(), VariableClass::OutputPhysical);
        assert!(matches!(
            d.classify_variable("ctrl", "nope"),
            Err(ModelError::UnknownVariable { .. })
        ));
        assert!(matches!(d.classify_variable("ghost", "v"), Err(ModelError::UnknownBlock(_))));

        assert_eq!(d.classify_block("plant").unwrap(), BlockClass::Physical);
        assert_eq!(d.classify_block("sensor").unwrap(), BlockClass::CyberPhysical);
        assert_eq!(d.classify_block("idle").unwrap(), BlockClass::Cyber);
    }

    #[test]
    fn empty_block_has_no_class() {
        let b = Block {
            id: "x".into(),
            parent: None,
            children: vec![],
            variables: vec![],
            direct_influence: None,
        };
        assert_eq!(b.classify(), Err(ModelError::EmptyBlock("x".into())));
    }

    #[test]
    fn connectivity_and_cycles() {
        let d = feedback_loop();
        assert!(d.connects("plant", "sensor").unwrap());
        assert!(!d.connects("sensor", "plant").unwrap());
        assert!(!d.connects("idle", "plant").unwrap());
        assert!(d.has_path("plant", "plant").unwrap());
        assert!(d.has_path("sensor", "act").unwrap());
        assert!(!d.has_path("idle", "idle").unwrap());
        assert!(!d.has_path("plant", "top").unwrap());
    }

    #[test]
    fn software_physical_in_feedback_loop() {
        let d = feedback_loop();
        let inf = d.software_physical_vars();
        let expected: BTreeSet<VarRef> = [("sensor", "vs"), ("ctrl", "vs"), ("ctrl", "mode"), ("act", "mode")]
            .iter()
            .map(|(b, v)| VarRef::new(b, v))
            .collect();
        assert_eq!(inf.software_physical, expected);
        // the loop closes on the plant's own output
        assert!(inf.influenced_by[&VarRef::new("plant", "v")].contains(&VarRef::new("plant", "v")));
    }

    #[test]
    fn no_physical_means_empty_var_sp() {
        use Direction::*;
        use VarKind::*;
        let d = Diagram::from_doc(DiagramDoc {
            blocks: vec![
                block("top", None, vec![var("a", Cyber, Input)]),
                block("x", Some("top"), vec![var("o", Cyber, Output)]),
                block("y", Some("top"), vec![var("i", Cyber, Input), var("o", Cyber, Output)]),
            ],
            wires: vec![WireDoc::new(("x", "o"), ("y", "i"))],
        })
        .unwrap();
        assert!(d.software_physical_vars().software_physical.is_empty());
    }

    #[test]
    fn three_block_chain() {
        use Direction::*;
        use VarKind::*;
        let d = Diagram::from_doc(DiagramDoc {
            blocks: vec![
                block("top", None, vec![var("a", Cyber, Input)]),
                block("p", Some("top"), vec![var("x", Physical, Output)]),
                block("c1", Some("top"), vec![var("i", Cyber, Input), var("o", Cyber, Output)]),
                block("c2", Some("top"), vec![var("i", Cyber, Input), var("o", Cyber, Output)]),
            ],
            wires: vec![
                WireDoc::new(("p", "x"), ("c1", "i")),
                WireDoc::new(("c1", "o"), ("c2", "i")),
            ],
        })
        .unwrap();
        let sp = d.software_physical_vars().software_physical;
        assert!(sp.contains(&VarRef::new("c1", "o")));
        assert!(sp.contains(&VarRef::new("c2", "o")));
        assert_eq!(sp.len(), 4);
    }

    #[test]
    fn explicit_direct_influence_cuts_paths() {
        use Direction::*;
        use VarKind::*;
        let mut ctrl = block(
            "c",
            Some("top"),
            vec![var("i", Cyber, Input), var("o1", Cyber, Output), var("o2", Cyber, Output)],
        );
        ctrl.direct_influence = Some(BTreeMap::from([("i".to_string(), vec!["o1".to_string()])]));
        let d = Diagram::from_doc(DiagramDoc {
            blocks: vec![
                block("top", None, vec![var("a", Cyber, Input)]),
                block("p", Some("top"), vec![var("x", Physical, Output)]),
                ctrl,
            ],
            wires: vec![WireDoc::new(("p", "x"), ("c", "i"))],
        })
        .unwrap();
        let inf = d.software_physical_vars();
        assert!(inf.contains("c", "o1"));
        assert!(!inf.contains("c", "o2"));
    }

    #[test]
    fn loader_reports_first_violation_with_path() {
        let src = r#"{
            "blocks": [
                {"id": "top", "variables": [{"name": "a", "kind": "cyber", "direction": "input", "type": "real"}]},
                {"id": "x", "parent": "top", "variables": [
                    {"name": "o", "kind": "cyber", "direction": "output", "type": "real"},
                    {"name": "o", "kind": "cyber", "direction": "output", "type": "real"}
                ]}
            ]
        }"#;
        let err = Diagram::from_json_str(src).unwrap_err();
        assert_eq!(
            err,
            ModelError::Invalid {
                path: "blocks[1].variables[1].name".into(),
                message: "duplicate variable `o` in block `x`".into()
            }
        );
    }

    #[test]
    fn loader_rejects_structural_errors() {
        use Direction::*;
        use VarKind::*;
        let base = || {
            vec![
                block("top", None, vec![var("a", Cyber, Input)]),
                block("x", Some("top"), vec![var("o", Cyber, Output), var("i", Cyber, Input)]),
                block("sub", Some("x"), vec![var("i", Cyber, Input)]),
            ]
        };

        let two_roots = DiagramDoc {
            blocks: vec![
                block("a", None, vec![var("o", Cyber, Output)]),
                block("b", None, vec![var("o", Cyber, Output)]),
            ],
            wires: vec![],
        };
        assert!(matches!(Diagram::from_doc(two_roots), Err(ModelError::Invalid { path, .. }) if path == "blocks"));

        let cross_level = DiagramDoc {
            blocks: base(),
            wires: vec![WireDoc::new(("x", "o"), ("sub", "i"))],
        };
        assert!(matches!(Diagram::from_doc(cross_level), Err(ModelError::Invalid { path, .. }) if path == "wires[0]"));

        let wrong_dir = DiagramDoc {
            blocks: base(),
            wires: vec![WireDoc::new(("x", "i"), ("x", "i"))],
        };
        assert!(matches!(Diagram::from_doc(wrong_dir), Err(ModelError::Invalid { path, .. }) if path == "wires[0].from"));

        let double_drive = DiagramDoc {
            blocks: base(),
            wires: vec![WireDoc::new(("x", "o"), ("x", "i")), WireDoc::new(("x", "o"), ("x", "i"))],
        };
        assert!(matches!(Diagram::from_doc(double_drive), Err(ModelError::Invalid { path, .. }) if path == "wires[1].to"));

        let empty = DiagramDoc {
            blocks: vec![block("a", None, vec![])],
            wires: vec![],
        };
        assert!(matches!(Diagram::from_doc(empty), Err(ModelError::Invalid { path, .. }) if path == "blocks[0].variables"));

        let cyclic = DiagramDoc {
            blocks: vec![
                block("r", None, vec![var("o", Cyber, Output)]),
                block("a", Some("b"), vec![var("o", Cyber, Output)]),
                block("b", Some("a"), vec![var("o", Cyber, Output)]),
            ],
            wires: vec![],
        };
        assert!(Diagram::from_doc(cyclic).is_err());

        assert!("real[0]".parse::<ValueType>().is_err());
        assert_eq!("real[16]".parse::<ValueType>().unwrap(), ValueType::RealArray(16));
    }

    #[test]
    fn tree_queries() {
        let d = feedback_loop();
        assert_eq!(d.root(), "top");
        assert_eq!(d.parent("ctrl").unwrap(), Some("top"));
        assert_eq!(d.children("top").unwrap().len(), 5);
        assert_eq!(d.ancestors("ctrl").unwrap(), vec!["top".to_string()]);
        assert_eq!(d.walk()[0].id, "top");
        assert_eq!(d.level("ctrl").unwrap().len(), 5);
        let again = Diagram::from_doc(d.to_doc()).unwrap();
        assert_eq!(again, d);
    }
}
