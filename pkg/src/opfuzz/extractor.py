"""Kernel-side constraint extraction.

Pipeline: seed taint at parameter fetches, propagate to a fixpoint,
mark tainted conditional branches with a failure-block successor as
sinks, walk the structured regions to build a tree of raw IR
predicates, then lift those into frontend-parameter expressions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .constraints import (
    Arith,
    AttrRef,
    Cmp,
    Constraint,
    ConstraintTree,
    Dim,
    Forall,
    Lit,
    LogicalNode,
    NEGATE_CMP,
    Ndim,
    Size,
    Unliftable,
    Val,
    Var,
    _fold,
    normal_form,
)
from .kernel.ir import IfRegion, KernelIR, LoopRegion, RequireRegion
from .kernel.parser import def_map


class ExtractionError(Exception):
    pass


# -- taint analysis --


def seed_sources(kernel: KernelIR) -> dict:
    """Initial taint: each parameter-fetch result carries its param name."""
    attrs = {p.name for p in kernel.attrs}
    seeds: dict[int, frozenset] = {}
    for block in kernel.blocks:
        for inst in block.instrs:
            if inst.opcode == "get_input":
                seeds[inst.dst] = frozenset({kernel.inputs[inst.args[0]].name})
            elif inst.opcode == "get_attr":
                name = inst.args[0]
                if name not in attrs:
                    raise ExtractionError(f"{kernel.kernel_id}: get_attr names undeclared attr {name!r}")
                seeds[inst.dst] = frozenset({name})
    return seeds


def propagate_taint(kernel: KernelIR, seeds: dict | None = None) -> dict:
    """Flow-insensitive forward fixpoint over every instruction.

    tstore taints the stored-into tensor value, so stores feed back into
    later loads from the same value id; iteration continues until stable.
    """
    if seeds is None:
        seeds = seed_sources(kernel)
    taint: dict[int, set] = {vid: set(names) for vid, names in seeds.items()}

    def get(vid) -> set:
        return taint.get(vid, set())

    changed = True
    while changed:
        changed = False
        for block in kernel.blocks:
            for inst in block.instrs:
                op = inst.opcode
                if op in ("get_input", "get_attr", "const", "emit"):
                    continue
                if op == "tstore":
                    base, idxs, val = inst.args
                    flowed = get(val).union(*[get(i) for i in idxs]) if idxs else set(get(val))
                    cur = taint.setdefault(base, set())
                    if not flowed <= cur:
                        cur |= flowed
                        changed = True
                    continue
                if op in ("bin", "cmp", "logic"):
                    operands = [a for a in inst.args[1:] if a is not None]
                elif op == "tload":
                    operands = [inst.args[0], *inst.args[1]]
                elif op in ("rank", "size"):
                    operands = [inst.args[0]]
                elif op == "dim":
                    operands = list(inst.args)
                elif op == "res_call":
                    operands = list(inst.args[2])
                else:
                    raise ExtractionError(f"{kernel.kernel_id}: unknown opcode {op!r}")
                if inst.dst is None:
                    continue
                flowed = set()
                for a in operands:
                    flowed |= get(a)
                cur = taint.setdefault(inst.dst, set())
                if not flowed <= cur:
                    cur |= flowed
                    changed = True
    return {vid: frozenset(names) for vid, names in taint.items()}


@dataclass(frozen=True)
class SinkSite:
    block: int
    cond_id: int
    pass_on_true: bool
    params: frozenset
    tag: str


def _reaches_fail(kernel: KernelIR, bid: int) -> bool:
    """Failure reachability through straight-line jumps only."""
    blocks = {b.bid: b for b in kernel.blocks}
    seen = set()
    while bid not in seen:
        seen.add(bid)
        b = blocks[bid]
        if b.terminator[0] == "require_fail":
            return True
        if b.terminator[0] == "jmp" and not b.instrs:
            bid = b.terminator[1]
            continue
        return False
    return False


def find_sinks(kernel: KernelIR, taint: dict | None = None) -> list:
    """Tainted conditional branches with a failure-reaching successor."""
    if taint is None:
        taint = propagate_taint(kernel)
    sinks = []
    for block in kernel.blocks:
        term = block.terminator
        if term[0] != "br":
            continue
        _, cond, then_bid, else_bid, tag = term
        params = taint.get(cond, frozenset())
        if not params:
            continue
        then_fails = _reaches_fail(kernel, then_bid)
        else_fails = _reaches_fail(kernel, else_bid)
        if not (then_fails or else_fails):
            continue
        sinks.append(SinkSite(block.bid, cond, not then_fails, frozenset(params), tag))
    return sinks


# -- raw extraction over regions --


@dataclass
class RawConstraint:
    cond_id: int
    pass_on_true: bool
    block: int
    message: str
    quant: tuple | None = None  # (var_id, lo_id, hi_id)


@dataclass
class RawBranch:
    guard_id: int
    negate: bool
    block: int
    node: "RawNode"


@dataclass
class RawNode:
    constraints: list = field(default_factory=list)
    branches: list = field(default_factory=list)

    @property
    def is_empty(self) -> bool:
        return not self.constraints and not self.branches


@dataclass
class RawTree:
    kernel_id: str
    root: RawNode
    mixed_loops: int = 0
    untainted_requires: int = 0


def extract_raw(kernel: KernelIR, sinks: list | None = None) -> RawTree:
    """Region walk: requires become constraints, sink-bearing ifs become
    branches, all-require loop bodies become quantified constraints, and
    loops mixing requires with nested control flow are skipped whole."""
    if sinks is None:
        sinks = find_sinks(kernel)
    by_block = {s.block: s for s in sinks}
    tree = RawTree(kernel.kernel_id, RawNode())

    def require_constraint(region: RequireRegion, quant=None) -> RawConstraint | None:
        site = by_block.get(region.block)
        if site is None:
            tree.untainted_requires += 1
            return None
        return RawConstraint(region.cond_id, site.pass_on_true, region.block, region.message, quant)

    def walk(regions) -> RawNode:
        node = RawNode()
        for region in regions:
            if isinstance(region, RequireRegion):
                c = require_constraint(region)
                if c is not None:
                    node.constraints.append(c)
            elif isinstance(region, IfRegion):
                then_node = walk(region.then_regions)
                else_node = walk(region.else_regions)
                if not then_node.is_empty:
                    node.branches.append(RawBranch(region.guard_id, False, region.block, then_node))
                if not else_node.is_empty:
                    node.branches.append(RawBranch(region.guard_id, True, region.block, else_node))
            elif isinstance(region, LoopRegion):
                if all(isinstance(r, RequireRegion) for r in region.body_regions):
                    quant = (region.var_id, region.lo_id, region.hi_id)
                    for r in region.body_regions:
                        c = require_constraint(r, quant)
                        if c is not None:
                            node.constraints.append(c)
                else:
                    tree.mixed_loops += 1
            else:
                raise ExtractionError(f"unknown region type {type(region).__name__}")
        return node

    tree.root = walk(kernel.regions)
    return tree


# -- lifting --


class _Unliftable(Exception):
    def __init__(self, note: str):
        super().__init__(note)
        self.note = note


class _Lifter:
    def __init__(self, kernel: KernelIR):
        self.kernel = kernel
        self.defs = def_map(kernel)

    def param_of_tensor(self, vid: int) -> str:
        inst = self.defs.get(vid)
        if inst is not None and inst.opcode == "get_input":
            return self.kernel.inputs[inst.args[0]].name
        raise _Unliftable("shape query on a tensor temporary")

    def value(self, vid: int, qvars: dict):
        if vid in qvars:
            return qvars[vid]
        inst = self.defs.get(vid)
        if inst is None:
            raise _Unliftable(f"value {vid} has no definition")
        op = inst.opcode
        if op == "const":
            return Lit(inst.args[0])
        if op == "get_attr":
            return AttrRef(inst.args[0])
        if op == "get_input":
            raise _Unliftable("bare tensor value in a predicate")
        if op == "rank":
            return Ndim(self.param_of_tensor(inst.args[0]))
        if op == "size":
            return Size(self.param_of_tensor(inst.args[0]))
        if op == "dim":
            axis = _fold(self.value(inst.args[1], qvars))
            if not isinstance(axis, Lit) or not isinstance(axis.value, int):
                raise _Unliftable("non-constant dim axis")
            return Dim(self.param_of_tensor(inst.args[0]), axis.value)
        if op == "tload":
            base, idxs = inst.args
            return Val(self.param_of_tensor(base), tuple(self.value(i, qvars) for i in idxs))
        if op == "bin":
            if inst.meta.get("loop_var") or inst.meta.get("loop_latch"):
                raise _Unliftable("loop variable escapes its loop")
            bop, a, b = inst.args
            return Arith(bop, self.value(a, qvars), self.value(b, qvars))
        raise _Unliftable(f"opcode {op} outside the lifted grammar")

    def predicate(self, vid: int, qvars: dict) -> list:
        """Boolean value id -> conjunction of comparison expressions."""
        inst = self.defs.get(vid)
        if inst is None:
            raise _Unliftable(f"predicate {vid} has no definition")
        if inst.opcode == "cmp":
            cop, a, b = inst.args
            return [Cmp(cop, self.value(a, qvars), self.value(b, qvars))]
        if inst.opcode == "logic":
            lop, a, b = inst.args
            if lop == "and":
                return self.predicate(a, qvars) + self.predicate(b, qvars)
            if lop == "not":
                inner = self.predicate(a, qvars)
                if len(inner) == 1 and isinstance(inner[0], Cmp):
                    c = inner[0]
                    return [Cmp(NEGATE_CMP[c.op], c.left, c.right)]
                raise _Unliftable("negation of a non-comparison")
            raise _Unliftable("disjunction in a predicate")
        if inst.opcode == "const" and isinstance(inst.args[0], bool):
            return [Cmp("==", Lit(1), Lit(1 if inst.args[0] else 0))]
        raise _Unliftable(f"opcode {inst.opcode} is not a predicate")


def _finalize(expr):
    """Fold constants; None means the constraint folded to a tautology."""
    folded = _fold(expr)
    if isinstance(folded, Cmp) and isinstance(folded.left, Lit) and isinstance(folded.right, Lit):
        a, b = folded.left.value, folded.right.value
        try:
            truth = {"==": a == b, "!=": a != b, "<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b}[folded.op]
        except TypeError:
            return folded
        if truth:
            return None
    if isinstance(folded, Forall):
        body = _finalize(folded.body)
        if body is None:
            return None
        return Forall(folded.var, folded.lo, folded.hi, body)
    return folded


def lift_constraints(raw: RawTree, kernel: KernelIR) -> ConstraintTree:
    lifter = _Lifter(kernel)
    tree = ConstraintTree(
        raw.kernel_id,
        skipped_mixed_loops=raw.mixed_loops,
        skipped_untainted=raw.untainted_requires,
    )

    def lift_one(rc: RawConstraint) -> list:
        try:
            if rc.quant is None:
                exprs = lifter.predicate(rc.cond_id, {})
                if not rc.pass_on_true:
                    if len(exprs) != 1:
                        raise _Unliftable("negation of a conjunction")
                    exprs = [Cmp(NEGATE_CMP[exprs[0].op], exprs[0].left, exprs[0].right)]
            else:
                var_id, lo_id, hi_id = rc.quant
                lo = lifter.value(lo_id, {})
                hi = lifter.value(hi_id, {})
                qvars = {var_id: Var("i")}
                bodies = lifter.predicate(rc.cond_id, qvars)
                if not rc.pass_on_true:
                    if len(bodies) != 1:
                        raise _Unliftable("negation of a conjunction")
                    bodies = [Cmp(NEGATE_CMP[bodies[0].op], bodies[0].left, bodies[0].right)]
                exprs = [Forall("i", lo, hi, b) for b in bodies]
        except _Unliftable as e:
            return [Constraint(Unliftable(e.note), rc.block, rc.message)]
        out = []
        for e in exprs:
            final = _finalize(e)
            if final is not None:
                out.append(Constraint(final, rc.block, rc.message))
        return out

    def lift_guard(br: RawBranch) -> Constraint:
        try:
            exprs = lifter.predicate(br.guard_id, {})
            if br.negate:
                if len(exprs) != 1:
                    raise _Unliftable("negation of a conjunction")
                exprs = [Cmp(NEGATE_CMP[exprs[0].op], exprs[0].left, exprs[0].right)]
            if len(exprs) != 1:
                raise _Unliftable("conjunction guard")
            return Constraint(_fold(exprs[0]), br.block, "")
        except _Unliftable as e:
            return Constraint(Unliftable(e.note), br.block, "")

    def lift_node(raw_node: RawNode, constraints: list, branches: list):
        seen = set()
        for rc in raw_node.constraints:
            for c in lift_one(rc):
                key = normal_form(c.expr) if not c.is_unliftable else repr(c.expr)
                if key in seen:
                    continue
                seen.add(key)
                constraints.append(c)
        for rb in raw_node.branches:
            node = LogicalNode(lift_guard(rb))
            lift_node(rb.node, node.constraints, node.branches)
            branches.append(node)

    lift_node(raw.root, tree.constraints, tree.branches)
    return tree


def extract_constraints(kernel: KernelIR) -> ConstraintTree:
    """Full pipeline: taint, sinks, region walk, lift."""
    taint = propagate_taint(kernel)
    sinks = find_sinks(kernel, taint)
    raw = extract_raw(kernel, sinks)
    return lift_constraints(raw, kernel)
