"""Fusion-tree representation and genetic operators.

A program is a typed tree: the root is one of Root1/2/3 (the
concatenation stage), every other internal node is one of the 11
inner operators, and leaves are the 16 feature-bank terminals.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import operators as ops
from .datamodel import ALL_FEATURE_IDS, FeatureId, FeatureMatrix
from .errors import ParseError

MAX_DEPTH = 8
INIT_DEPTHS = (2, 6)
MUTATION_SUBTREE_DEPTHS = (2, 4)
ERC_RESAMPLE_PROB = 0.1
SPLICE_RETRIES = 10


@dataclass
class Node:
    """Terminal (feature id) or function node with ERCs and children."""

    terminal: FeatureId | None = None
    op: str | None = None
    ercs: tuple[ops.ErcValue, ...] = ()
    children: list["Node"] = field(default_factory=list)

    @property
    def is_terminal(self) -> bool:
        return self.terminal is not None

    def copy(self) -> "Node":
        return Node(
            terminal=self.terminal,
            op=self.op,
            ercs=self.ercs,
            children=[c.copy() for c in self.children],
        )

    def depth(self) -> int:
        if self.is_terminal:
            return 1
        return 1 + max(c.depth() for c in self.children)

    def size(self) -> int:
        return 1 + sum(c.size() for c in self.children)

    def walk(self):
        yield self
        for child in self.children:
            yield from child.walk()


def function_node(tag: str, ercs, children) -> Node:
    return Node(op=tag, ercs=tuple(ercs), children=list(children))


def terminal_node(fid: FeatureId) -> Node:
    return Node(terminal=fid)


def validate_node(node: Node, at_root: bool = True) -> None:
    """Raise ValueError on any structural invariant violation."""
    if node.is_terminal:
        if node.op is not None or node.children or node.ercs:
            raise ValueError("terminal node with function payload")
        return
    kind = ops.OPERATORS.get(node.op)
    if kind is None:
        raise ValueError(f"unknown operator {node.op!r}")
    if node.op in ops.ROOT_TAGS and not at_root:
        raise ValueError(f"{node.op} below the root")
    if len(node.children) != kind.arity:
        raise ValueError(
            f"{node.op}: {len(node.children)} children, arity {kind.arity}"
        )
    if len(node.ercs) != len(kind.erc_slots):
        raise ValueError(f"{node.op}: wrong ERC count")
    for erc, slot in zip(node.ercs, kind.erc_slots):
        if erc.kind != slot:
            raise ValueError(f"{node.op}: ERC kind {erc.kind} != slot {slot}")
    for child in node.children:
        validate_node(child, at_root=False)


@dataclass(frozen=True)
class Program:
    """An immutable fusion tree with a stable content hash."""

    root: Node

    def __post_init__(self):
        if self.root.is_terminal or self.root.op not in ops.ROOT_TAGS:
            raise ValueError("program root must be Root1/2/3")
        validate_node(self.root)
        if self.depth > MAX_DEPTH:
            raise ValueError(f"depth {self.depth} exceeds {MAX_DEPTH}")

    @property
    def depth(self) -> int:
        return self.root.depth()

    @property
    def size(self) -> int:
        return self.root.size()

    @property
    def id(self) -> str:
        return hashlib.sha256(to_text(self).encode()).hexdigest()[:16]

    def __str__(self) -> str:
        return to_text(self)


@dataclass(frozen=True)
class ComplexityTerms:
    """The three ingredients of the complexity objective."""

    n_features: int  # distinct terminal feature ids
    n_views: int  # distinct views among them
    n_nodes: int  # total node count

    @property
    def q_c(self) -> float:
        return self.n_features + 10 * self.n_views + 0.1 * self.n_nodes


def complexity_terms(p: Program) -> ComplexityTerms:
    fids = {n.terminal for n in p.root.walk() if n.is_terminal}
    return ComplexityTerms(
        n_features=len(fids),
        n_views=len({f.view for f in fids}),
        n_nodes=p.size,
    )


# --------------------------------------------------------------------------
# Random generation


def _random_erc_tuple(tag: str, rng) -> tuple[ops.ErcValue, ...]:
    return tuple(ops.sample_erc(k, rng) for k in ops.OPERATORS[tag].erc_slots)


def _grow_or_full(method: str, depth_left: int, rng: np.random.Generator) -> Node:
    """Build a non-root subtree; depth_left counts remaining levels."""
    n_inner = len(ops.INNER_TAGS)
    n_term = len(ALL_FEATURE_IDS)
    if depth_left <= 1:
        pick_terminal = True
    elif method == "full":
        pick_terminal = False
    else:  # grow: uniform over functions + terminals
        pick_terminal = int(rng.integers(n_inner + n_term)) >= n_inner
    if pick_terminal:
        return terminal_node(ALL_FEATURE_IDS[int(rng.integers(n_term))])
    tag = ops.INNER_TAGS[int(rng.integers(n_inner))]
    ercs = _random_erc_tuple(tag, rng)
    children = [
        _grow_or_full(method, depth_left - 1, rng)
        for _ in range(ops.OPERATORS[tag].arity)
    ]
    return function_node(tag, ercs, children)


def random_tree(method: str, depth_limit: int, rng: np.random.Generator) -> Node:
    """Ramped half-and-half building block: one tree root-down.

    `full` places every terminal at exactly depth_limit; `grow` allows
    terminals anywhere from depth 2 on.
    """
    if not 2 <= depth_limit <= MAX_DEPTH:
        raise ValueError(f"depth_limit must be in [2, {MAX_DEPTH}]")
    root_tag = ops.ROOT_TAGS[int(rng.integers(len(ops.ROOT_TAGS)))]
    children = [
        _grow_or_full(method, depth_limit - 1, rng)
        for _ in range(ops.OPERATORS[root_tag].arity)
    ]
    return function_node(root_tag, (), children)


def init_population(n: int, rng: np.random.Generator) -> list[Program]:
    """Ramped half-and-half: depths cycle over [2,6], half grow half full."""
    lo, hi = INIT_DEPTHS
    depths = list(range(lo, hi + 1))
    seen: set[str] = set()
    population = []
    for i in range(n):
        depth = depths[(i // 2) % len(depths)]
        method = "grow" if i % 2 == 0 else "full"
        program = Program(random_tree(method, depth, rng))
        for _ in range(10):
            if to_text(program) not in seen:
                break
            program = Program(random_tree(method, depth, rng))
        seen.add(to_text(program))
        population.append(program)
    return population


# --------------------------------------------------------------------------
# Genetic operators


def _nodes_with_parents(root: Node) -> list[tuple[Node, int]]:
    """All (parent, child-index) pairs addressing the non-root nodes."""
    out = []

    def visit(node):
        for i, child in enumerate(node.children):
            out.append((node, i))
            visit(child)

    visit(root)
    return out


def subtree_crossover(
    p1: Program, p2: Program, rng: np.random.Generator
) -> Program:
    """Replace a random non-root node of p1 with a non-root subtree of p2."""
    donor_sites = _nodes_with_parents(p2.root)
    for _ in range(SPLICE_RETRIES):
        child_root = p1.root.copy()
        sites = _nodes_with_parents(child_root)
        parent, idx = sites[int(rng.integers(len(sites)))]
        d_parent, d_idx = donor_sites[int(rng.integers(len(donor_sites)))]
        parent.children[idx] = d_parent.children[d_idx].copy()
        if child_root.depth() <= MAX_DEPTH:
            return Program(child_root)
    return Program(p1.root.copy())


def _resample_ercs(root: Node, rng: np.random.Generator, prob: float) -> None:
    for node in root.walk():
        if node.is_terminal or not node.ercs:
            continue
        new = []
        changed = False
        for erc in node.ercs:
            if rng.random() < prob:
                new.append(ops.sample_erc(erc.kind, rng))
                changed = True
            else:
                new.append(erc)
        if changed:
            node.ercs = tuple(new)


def subtree_mutation(
    p: Program,
    rng: np.random.Generator,
    erc_resample_prob: float = ERC_RESAMPLE_PROB,
) -> Program:
    """Replace a random non-root node with a fresh grow subtree (depth 2-4),
    then resample each ERC with probability `erc_resample_prob`."""
    lo, hi = MUTATION_SUBTREE_DEPTHS
    result = None
    for _ in range(SPLICE_RETRIES):
        child_root = p.root.copy()
        sites = _nodes_with_parents(child_root)
        parent, idx = sites[int(rng.integers(len(sites)))]
        depth = int(rng.integers(lo, hi + 1))
        parent.children[idx] = _grow_or_full("grow", depth, rng)
        if child_root.depth() <= MAX_DEPTH:
            result = child_root
            break
    if result is None:
        result = p.root.copy()
    _resample_ercs(result, rng, erc_resample_prob)
    return Program(result)


# --------------------------------------------------------------------------
# Evaluation


def eval_node(node: Node, bank) -> np.ndarray:
    """Bottom-up evaluation of a (sub)tree against a feature bank.

    `bank` maps FeatureId to an (L, D) array, an (P, L, D) stack, or a
    FeatureMatrix.
    """
    if node.is_terminal:
        try:
            value = bank[node.terminal]
        except KeyError:
            raise KeyError(
                f"feature {node.terminal.name} missing from bank"
            ) from None
        if isinstance(value, FeatureMatrix):
            value = value.values
        return np.asarray(value, dtype=np.float64)
    children = [eval_node(c, bank) for c in node.children]
    return ops.apply_operator(node.op, children, node.ercs)


def eval_tree(p: Program, bank) -> np.ndarray:
    """Evaluate a program to one fused per-residue matrix."""
    return eval_node(p.root, bank)


# --------------------------------------------------------------------------
# Serialization


def to_text(p: Program) -> str:
    """Canonical s-expression, e.g. `(Root2 (W_Add 3 5 T5_CNN2 HMM_RNN1) ...)`."""

    def render(node: Node) -> str:
        if node.is_terminal:
            return node.terminal.name
        parts = [node.op]
        parts.extend(str(e.value) for e in node.ercs)
        parts.extend(render(c) for c in node.children)
        return "(" + " ".join(parts) + ")"

    return render(p.root)


def _tokenize(text: str):
    tokens = []
    i = 0
    while i < len(text):
        c = text[i]
        if c.isspace():
            i += 1
        elif c in "()":
            tokens.append((c, i))
            i += 1
        else:
            j = i
            while j < len(text) and not text[j].isspace() and text[j] not in "()":
                j += 1
            tokens.append((text[i:j], i))
            i = j
    return tokens


def from_text(text: str) -> Program:
    """Parse the canonical s-expression form back into a Program."""
    tokens = _tokenize(text)
    pos = 0

    def parse_node() -> Node:
        nonlocal pos
        if pos >= len(tokens):
            raise ParseError("unexpected end of input", len(text))
        token, at = tokens[pos]
        if token == ")":
            raise ParseError("unexpected ')'", at)
        if token != "(":
            pos += 1
            try:
                return terminal_node(FeatureId.parse(token))
            except ValueError:
                raise ParseError(f"unknown terminal {token!r}", at) from None
        pos += 1
        if pos >= len(tokens):
            raise ParseError("missing operator after '('", at)
        tag, tag_at = tokens[pos]
        kind = ops.OPERATORS.get(tag)
        if kind is None:
            raise ParseError(f"unknown operator {tag!r}", tag_at)
        pos += 1
        ercs = []
        for slot in kind.erc_slots:
            if pos >= len(tokens):
                raise ParseError(f"{tag}: missing constant", tag_at)
            value, v_at = tokens[pos]
            try:
                ercs.append(ops.ErcValue(slot, int(value)))
            except ValueError as exc:
                raise ParseError(f"{tag}: bad constant {value!r} ({exc})", v_at)
            pos += 1
        children = []
        for _ in range(kind.arity):
            if pos < len(tokens) and tokens[pos][0] == ")":
                raise ParseError(f"{tag}: too few children (arity {kind.arity})", tokens[pos][1])
            children.append(parse_node())
        if pos >= len(tokens) or tokens[pos][0] != ")":
            where = tokens[pos][1] if pos < len(tokens) else len(text)
            raise ParseError(f"{tag}: expected ')'", where)
        pos += 1
        return function_node(tag, ercs, children)

    node = parse_node()
    if pos != len(tokens):
        raise ParseError("trailing input", tokens[pos][1])
    try:
        return Program(node)
    except ValueError as exc:
        raise ParseError(str(exc), 0) from None
