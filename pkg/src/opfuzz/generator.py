"""Input generation: constraint-guided and random baseline.

The guided path walks parameters in dependency order, solving each
against the constraints that mention it (with earlier parameters
substituted in), then runs a bounded repair fixpoint.  Violation
probes flip exactly one active constraint to exercise rejection
handling.  The random baseline draws structure and values from wide
distributions with no knowledge of constraints.
"""

from __future__ import annotations

import itertools
import re
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
    NEGATE_CMP,
    Ndim,
    Size,
    Unliftable,
    Val,
    Var,
    _EvalFail,
    _eval_value,
    evaluate,
    params_of,
    render,
    toposort_params,
)
from .kernel.ir import DType, INT64_MAX, INT64_MIN, ResourceRef, TensorVal

# value pools; order is fixed so campaigns are reproducible
INT_SPECIALS = (0, 1, -1, 2, 7, 1048576, 2147483647, 2147483649, -2147483648)
EXTENT_SPECIALS = (0, 1, 2, 7, 1048576)
FLOAT_SPECIALS = (1.0, 0.0, -1.0, 0.5, 2.0, 1000000000.0)
STRING_DEFAULTS = ("", "a", "ab")
WINDOW = 8
DENSE_ELEMENT_LIMIT = 64
RANDOM_STRING_CHARS = "abcdefghijklmnopqrstuvwxyz0123456789_"

VERB_LEXICON = frozenset(
    {
        "Close",
        "Create",
        "Dequeue",
        "Enqueue",
        "Find",
        "Get",
        "Load",
        "New",
        "Open",
        "Pop",
        "Push",
        "Read",
        "Remove",
        "Reserve",
        "Restore",
        "Save",
        "Set",
        "Split",
        "Write",
    }
)

_CAMEL = re.compile(r"[A-Z]+(?![a-z])|[A-Z][a-z0-9]*|[a-z0-9]+")


def camel_tokens(name: str) -> list:
    return _CAMEL.findall(name)


def cluster_entities(names) -> dict:
    """Group operator names by shared entity noun.

    A token is a verb if it sits in the lexicon or appears in a
    non-leading position in at least two distinct names; the entity is
    the concatenation of the remaining tokens.
    """
    toks = {n: camel_tokens(n) for n in names}
    nonleading: dict[str, set] = {}
    for n, ts in toks.items():
        for t in ts[1:]:
            nonleading.setdefault(t, set()).add(n)
    verbs = set(VERB_LEXICON) | {t for t, owners in nonleading.items() if len(owners) >= 2}

    groups: dict[str, list] = {}
    for n in names:
        entity = "".join(t for t in toks[n] if t not in verbs) or n
        groups.setdefault(entity, []).append(n)
    return groups


# -- templates --


@dataclass
class ControlTemplate:
    op: str
    modes: tuple
    fixture: str | None = None
    sequence: tuple | None = None
    position: int = 0
    producers: dict = field(default_factory=dict)
    unfillable: tuple = ()

    def as_json(self) -> dict:
        return {
            "op": self.op,
            "modes": list(self.modes),
            "fixture": self.fixture,
            "sequence": list(self.sequence) if self.sequence else None,
            "position": self.position,
            "producers": dict(sorted(self.producers.items())),
            "unfillable": list(self.unfillable),
        }


@dataclass
class DataTemplate:
    op: str
    order: tuple
    constraints: list  # root Constraint objects in extraction order
    guards: list  # Constraint objects, depth-first
    vectors: tuple  # branch choice vectors

    def as_json(self) -> dict:
        return {
            "op": self.op,
            "order": list(self.order),
            "constraints": [render(c.expr) for c in self.constraints],
            "guards": [render(g.expr) for g in self.guards],
            "choice_vectors": [list(v) for v in self.vectors],
        }


def build_control_template(corpus, op: str) -> ControlTemplate:
    spec = corpus.spec_for(op)
    fixture = corpus.fixture_for(op)
    seq = corpus.sequence_for(op)
    producers = {}
    unfillable = []
    for p in spec.params:
        if p.container != "resource":
            continue
        producer = None
        if seq is not None:
            pos = seq.ops.index(op)
            for earlier in seq.ops[:pos]:
                other = corpus.spec_for(earlier)
                if any(o.entity == p.entity for o in other.outputs):
                    producer = earlier
                    break
        if producer is None:
            unfillable.append(p.name)
        else:
            producers[p.name] = producer
    return ControlTemplate(
        op=op,
        modes=tuple(corpus.modes),
        fixture=fixture.label if fixture else None,
        sequence=seq.ops if seq else None,
        position=seq.ops.index(op) if seq else 0,
        producers=producers,
        unfillable=tuple(unfillable),
    )


def _choice_vectors(n_guards: int, cap: int = 16) -> tuple:
    if n_guards == 0:
        return ((),)
    vectors = list(itertools.product((True, False), repeat=n_guards))
    return tuple(vectors[:cap])


def _guards_dfs(tree: ConstraintTree) -> list:
    out = []

    def walk(branches):
        for br in branches:
            out.append(br)
            walk(br.branches)

    walk(tree.branches)
    return out


def build_data_template(corpus, op: str) -> DataTemplate:
    spec = corpus.spec_for(op)
    tree = corpus.tree_for(op)
    return DataTemplate(
        op=op,
        order=tuple(toposort_params(tree, spec)),
        constraints=list(tree.constraints),
        guards=[br.guard for br in _guards_dfs(tree)],
        vectors=_choice_vectors(len(_guards_dfs(tree))),
    )


def describe_templates(corpus, op: str) -> dict:
    return {
        "control": build_control_template(corpus, op).as_json(),
        "data": build_data_template(corpus, op).as_json(),
    }


# -- residual substitution and hint extraction --


def _substitute_bound(expr, bound: dict, keep: str):
    """Replace atoms over already-bound params (except `keep`) with literals.

    Raises _EvalFail when a bound atom cannot evaluate (the constraint is
    already unsatisfiable regardless of `keep`).
    """

    def sub(e):
        if isinstance(e, (AttrRef, Ndim, Size, Dim)):
            if e.param == keep or e.param not in bound:
                return e
            return Lit(_eval_value(e, bound, {}))
        if isinstance(e, Val):
            idxs = tuple(sub(i) for i in e.idxs)
            if e.param == keep or e.param not in bound:
                return Val(e.param, idxs)
            if all(isinstance(i, Lit) for i in idxs):
                return Lit(_eval_value(Val(e.param, idxs), bound, {}))
            return Val(e.param, idxs)
        if isinstance(e, Arith):
            return Arith(e.op, sub(e.left), sub(e.right))
        if isinstance(e, Cmp):
            return Cmp(e.op, sub(e.left), sub(e.right))
        if isinstance(e, Forall):
            return Forall(e.var, sub(e.lo), sub(e.hi), sub(e.body))
        return e

    return sub(expr)


_INF = float("inf")


@dataclass
class _Range:
    lo: float = -_INF
    hi: float = _INF
    pins: list = field(default_factory=list)
    avoids: set = field(default_factory=set)
    moduli: list = field(default_factory=list)

    def bound(self, op: str, v):
        if op == "==":
            self.pins.append(v)
        elif op == "!=":
            self.avoids.add(v)
        elif op == ">=":
            self.lo = max(self.lo, v)
        elif op == ">":
            self.lo = max(self.lo, v + 1)
        elif op == "<=":
            self.hi = min(self.hi, v)
        elif op == "<":
            self.hi = min(self.hi, v - 1)

    def admits(self, v) -> bool:
        if v in self.avoids:
            return False
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            if not (self.lo <= v <= self.hi):
                return False
            if self.moduli and isinstance(v, int):
                return all(m != 0 and v % m == 0 for m in self.moduli)
        return True


@dataclass
class _TensorHints:
    rank: _Range = field(default_factory=_Range)
    size: _Range = field(default_factory=_Range)
    dims: dict = field(default_factory=dict)  # axis -> _Range
    elems: _Range = field(default_factory=_Range)  # all-element and rank-0 val bounds
    at_index: dict = field(default_factory=dict)  # const idx tuple -> _Range
    val_arities: set = field(default_factory=set)
    max_dim_axis: int | None = None  # highest axis any dim() atom touches
    ndim_referenced: bool = False

    def dim(self, axis: int) -> _Range:
        return self.dims.setdefault(axis, _Range())


def _hint_cmp(hints: _TensorHints, scalar: _Range, op: str, left, right, keep: str):
    # orient the keep-param atom to the left
    def is_keep_atom(e):
        return isinstance(e, (AttrRef, Ndim, Size, Dim, Val)) and e.param == keep

    if not is_keep_atom(left) and is_keep_atom(right):
        left, right = right, left
        op = {"<": ">", "<=": ">=", ">": "<", ">=": "<=", "==": "==", "!=": "!="}[op]
    if not isinstance(right, Lit):
        return _hint_modulo(hints, left, right, op, keep)
    v = right.value
    if isinstance(left, AttrRef) and left.param == keep:
        scalar.bound(op, v)
    elif isinstance(left, Ndim) and left.param == keep:
        hints.rank.bound(op, v)
    elif isinstance(left, Size) and left.param == keep:
        hints.size.bound(op, v)
    elif isinstance(left, Dim) and left.param == keep:
        hints.dim(left.axis).bound(op, v)
    elif isinstance(left, Val) and left.param == keep:
        if left.idxs and all(isinstance(i, Lit) for i in left.idxs):
            idx = tuple(i.value for i in left.idxs)
            hints.at_index.setdefault(idx, _Range()).bound(op, v)
        else:
            hints.elems.bound(op, v)
    else:
        _hint_modulo(hints, left, right, op, keep)


def _hint_modulo(hints: _TensorHints, left, right, op: str, keep: str):
    if (
        op == "=="
        and isinstance(left, Arith)
        and left.op == "%"
        and isinstance(left.right, Lit)
        and isinstance(right, Lit)
        and right.value == 0
    ):
        inner, m = left.left, left.right.value
        if isinstance(m, int) and m > 0:
            if isinstance(inner, Dim) and inner.param == keep:
                hints.dim(inner.axis).moduli.append(m)
            elif isinstance(inner, Size) and inner.param == keep:
                hints.size.moduli.append(m)
            elif isinstance(inner, AttrRef) and inner.param == keep:
                pass  # scalar moduli handled via candidate testing


def _collect_hints(exprs, keep: str) -> tuple:
    """(tensor hints, scalar range) read from resolved residual constraints."""
    hints = _TensorHints()
    scalar = _Range()
    for e in exprs:
        if isinstance(e, Cmp):
            _hint_cmp(hints, scalar, e.op, e.left, e.right, keep)
        elif isinstance(e, Forall) and isinstance(e.body, Cmp):
            body = e.body
            left, right, op = body.left, body.right, body.op

            def keep_val(x):
                return isinstance(x, Val) and x.param == keep and x.idxs == (Var(e.var),)

            if keep_val(left) and isinstance(right, Lit):
                hints.elems.bound(op, right.value)
                hints.val_arities.add(1)
            elif keep_val(right) and isinstance(left, Lit):
                flipped = {"<": ">", "<=": ">=", ">": "<", ">=": "<=", "==": "==", "!=": "!="}[op]
                hints.elems.bound(flipped, left.value)
                hints.val_arities.add(1)
        for atom in _walk_atoms(e):
            if isinstance(atom, Val) and atom.param == keep:
                hints.val_arities.add(len(atom.idxs))
            elif isinstance(atom, Dim) and atom.param == keep:
                if hints.max_dim_axis is None or atom.axis > hints.max_dim_axis:
                    hints.max_dim_axis = atom.axis
    return hints, scalar


def _walk_atoms(expr):
    stack = [expr]
    while stack:
        e = stack.pop()
        if isinstance(e, (AttrRef, Ndim, Size, Dim)):
            yield e
        elif isinstance(e, Val):
            yield e
            stack.extend(e.idxs)
        elif isinstance(e, (Arith, Cmp)):
            stack.append(e.left)
            stack.append(e.right)
        elif isinstance(e, Forall):
            stack.extend([e.lo, e.hi, e.body])


def _string_literals(tree: ConstraintTree) -> list:
    found = []

    def walk(e):
        if isinstance(e, Lit) and isinstance(e.value, str) and e.value not in found:
            found.append(e.value)
        elif isinstance(e, (Arith, Cmp)):
            walk(e.left)
            walk(e.right)
        elif isinstance(e, Forall):
            walk(e.lo)
            walk(e.hi)
            walk(e.body)
        elif isinstance(e, Val):
            for i in e.idxs:
                walk(i)

    for c in tree.all_constraints() + tree.all_guards():
        if not c.is_unliftable:
            walk(c.expr)
    return found


# -- candidate drawing --


def _int_candidates(rng, rng_range: _Range, specials) -> list:
    lo, hi = rng_range.lo, rng_range.hi
    pins = [p for p in rng_range.pins if rng_range.admits(p)]
    if pins:
        return pins
    pool = [s for s in specials if rng_range.admits(s)]
    for m in rng_range.moduli:
        for k in (1, 2, 4):
            c = m * k
            if rng_range.admits(c) and c not in pool:
                pool.append(c)
    if not pool:
        base = int(lo) if lo != -_INF else 0
        top = int(hi) if hi != _INF else base + WINDOW - 1
        window = [v for v in range(base, min(base + WINDOW, top + 1)) if rng_range.admits(v)]
        pool = window or ([int(lo)] if lo != -_INF else [0])
    return pool


def _draw(rng, pool):
    return pool[rng.randrange(len(pool))] if len(pool) > 1 else pool[0]


def _elem_pool(rng, dtype: DType, erange: _Range, string_pool) -> list:
    if dtype is DType.DT_INT64:
        return _int_candidates(rng, erange, INT_SPECIALS)
    if dtype is DType.DT_FLOAT:
        pins = [p for p in erange.pins if erange.admits(p)]
        if pins:
            return pins
        pool = [v for v in FLOAT_SPECIALS if erange.admits(v)]
        return pool or [float(erange.lo) if erange.lo != -_INF else 0.0]
    if dtype is DType.DT_STRING:
        pins = [p for p in erange.pins if p not in erange.avoids]
        if pins:
            return pins
        pool = [s for s in string_pool if s not in erange.avoids]
        return pool or ["x"]
    if dtype is DType.DT_BOOL:
        pins = [p for p in erange.pins if p not in erange.avoids]
        return pins or [True, False]
    raise ValueError(f"no element pool for {dtype}")


# -- the guided generator --


class GuidedGenerator:
    """Per-operator guided input factory; deterministic given an rng."""

    RETRIES = 6
    REPAIR_PASSES = 8

    def __init__(self, corpus, op: str):
        self.corpus = corpus
        self.op = op
        self.spec = corpus.spec_for(op)
        self.tree = corpus.tree_for(op)
        self.control = build_control_template(corpus, op)
        self.data = build_data_template(corpus, op)
        self.string_pool = tuple(_string_literals(self.tree)) + STRING_DEFAULTS
        self.param_names = {p.name for p in self.spec.params}

    @property
    def n_vectors(self) -> int:
        return len(self.data.vectors)

    def active_sets(self, vector) -> tuple:
        """(validation constraints, guard steering pins) for one choice vector."""
        validation = [c for c in self.tree.constraints if not c.is_unliftable]
        pins = []
        bit = 0

        def walk(branches, live: bool):
            nonlocal bit
            for br in branches:
                take = vector[bit] if bit < len(vector) else False
                bit += 1
                guard = br.guard
                if live and not guard.is_unliftable:
                    if take:
                        pins.append(guard.expr)
                    elif isinstance(guard.expr, Cmp):
                        pins.append(Cmp(NEGATE_CMP[guard.expr.op], guard.expr.left, guard.expr.right))
                if take and live:
                    validation.extend(c for c in br.constraints if not c.is_unliftable)
                walk(br.branches, live and take)

        walk(self.tree.branches, True)
        return validation, pins

    def generate(self, rng, iteration: int) -> tuple:
        """Returns (binding, vector index used)."""
        vec_index = (iteration - 1) % self.n_vectors
        vector = self.data.vectors[vec_index]
        validation, pins = self.active_sets(vector)
        exprs = [c.expr for c in validation] + pins
        binding = {}
        for name in self.data.order:
            binding[name] = self._solve_param(rng, name, exprs, binding)
        self.repair(rng, binding, exprs)
        return binding, vec_index

    # solving

    def _resolved_for(self, name: str, exprs, bound: dict) -> list:
        out = []
        for e in exprs:
            ps = params_of(e) & self.param_names
            if name not in ps:
                continue
            if not (ps - {name} <= set(bound)):
                continue
            out.append(e)
        return out

    def _residuals(self, name: str, resolved, bound: dict) -> list:
        residuals = []
        for e in resolved:
            try:
                residuals.append(_substitute_bound(e, bound, name))
            except _EvalFail:
                continue  # dead constraint: an already-bound atom cannot evaluate
        return residuals

    def _test(self, name: str, value, resolved, bound: dict) -> int:
        trial = dict(bound)
        trial[name] = value
        return sum(1 for e in resolved if evaluate(e, trial))

    def _solve_param(self, rng, name: str, exprs, bound: dict):
        p = self.spec.param(name)
        if p.container == "resource":
            return self._draw_resource(rng, p)
        resolved = self._resolved_for(name, exprs, bound)
        residuals = self._residuals(name, resolved, bound)
        ndim_referenced = any(
            isinstance(a, Ndim) and a.param == name for e in exprs for a in _walk_atoms(e)
        )
        best = None
        best_score = -1
        for _ in range(self.RETRIES):
            if p.role == "attr":
                value = self._draw_scalar(rng, p.dtype, residuals, name)
            else:
                value = self._draw_tensor(rng, p, residuals, name, ndim_referenced)
            score = self._test(name, value, resolved, bound)
            if score > best_score:
                best, best_score = value, score
            if score == len(resolved):
                break
        return best

    def _draw_resource(self, rng, p) -> ResourceRef:
        wired = p.name in self.control.producers
        if wired:
            # live-heavy mix keeps sequences mostly coherent while still
            # probing every broken-handle state
            roll = rng.randrange(9)
            state = "live" if roll < 5 else ("null", "fresh", "filled", "closed")[roll - 5]
        else:
            state = ("null", "fresh", "filled", "closed")[rng.randrange(4)]
        return ResourceRef(p.entity, state)

    def _draw_scalar(self, rng, dtype: DType, residuals, name: str):
        _, scalar = _collect_hints(residuals, name)
        if dtype is DType.INT:
            return _draw(rng, _int_candidates(rng, scalar, INT_SPECIALS))
        if dtype is DType.FLOAT:
            pins = [v for v in scalar.pins if scalar.admits(v)]
            pool = pins or [v for v in FLOAT_SPECIALS if scalar.admits(v)] or [0.0]
            return _draw(rng, pool)
        if dtype is DType.STRING:
            pins = [v for v in scalar.pins if v not in scalar.avoids]
            pool = pins or [s for s in self.string_pool if s not in scalar.avoids] or ["x"]
            return _draw(rng, pool)
        if dtype is DType.BOOL:
            pins = [v for v in scalar.pins if v not in scalar.avoids]
            return _draw(rng, pins or [True, False])
        raise ValueError(f"no scalar draw for {dtype}")

    def _draw_tensor(self, rng, p, residuals, name: str, ndim_referenced: bool):
        hints, _ = _collect_hints(residuals, name)
        rank = self._draw_rank(rng, hints, ndim_referenced)
        shape = self._draw_shape(rng, hints, rank)
        return self._fill_elements(rng, p, shape, hints)

    def _draw_rank(self, rng, hints: _TensorHints, ndim_referenced: bool) -> int:
        r = hints.rank
        # dim(p, k) references only evaluate when rank > k
        floor = 0 if hints.max_dim_axis is None else hints.max_dim_axis + 1
        pins = [v for v in r.pins if r.admits(v) and 0 <= v <= 6]
        if pins:
            return _draw(rng, pins)
        if len(hints.val_arities) == 1:
            arity = next(iter(hints.val_arities))
            if r.admits(arity) and arity >= floor:
                return arity
        base = (1, 2) if ndim_referenced else (0, 1, 2)
        pool = [v for v in base if r.admits(v) and v >= floor]
        if not pool:
            pool = [v for v in range(floor, 7) if r.admits(v)] or [max(floor, 1)]
        return _draw(rng, pool)

    def _draw_shape(self, rng, hints: _TensorHints, rank: int) -> tuple:
        if rank == 0:
            return ()
        size = hints.size
        size_pins = [v for v in size.pins if size.admits(v)]
        need_nonzero = size.lo >= 1 or size_pins or hints.elems.pins or hints.at_index
        for _ in range(8):
            shape = []
            for axis in range(rank):
                d = hints.dims.get(axis, _Range())
                pool = _int_candidates(rng, d, EXTENT_SPECIALS)
                pool = [v for v in pool if v >= 0] or [1]
                if need_nonzero:
                    nz = [v for v in pool if v > 0]
                    pool = nz or pool
                shape.append(_draw(rng, pool))
            if size_pins:
                shape = self._fit_size(shape, hints, size_pins[0])
                if shape is None:
                    continue
            product = 1
            for e in shape:
                product *= e
            if size.admits(product):
                return tuple(shape)
        # honest fallback: a shape meeting the size pin if one exists
        if size_pins:
            n = size_pins[0]
            fitted = self._fit_size([1] * rank, hints, n)
            if fitted:
                return tuple(fitted)
            return tuple([1] * (rank - 1) + [max(n, 0)])
        return tuple(shape)

    def _fit_size(self, shape, hints: _TensorHints, n: int):
        """Adjust free axes so the product equals n, keeping pinned axes."""
        pinned = {}
        for axis, r in hints.dims.items():
            if axis < len(shape) and r.pins:
                pinned[axis] = r.pins[0]
        fixed = 1
        for axis, v in pinned.items():
            fixed *= v
        free = [a for a in range(len(shape)) if a not in pinned]
        if not free:
            return list(shape) if fixed == n else None
        if fixed == 0 or n % fixed != 0:
            return None
        quota = n // fixed
        out = list(shape)
        for axis, v in pinned.items():
            out[axis] = v
        for a in free[:-1]:
            out[a] = 1
        out[free[-1]] = quota
        return out

    def _fill_elements(self, rng, p, shape: tuple, hints: _TensorHints) -> TensorVal:
        size = 1
        for e in shape:
            size *= e
        if p.is_file and self.control.fixture:
            label = self.control.fixture
            if 0 <= size <= DENSE_ELEMENT_LIMIT:
                return TensorVal(p.dtype, shape, data=[label] * size)
            return TensorVal(p.dtype, shape, fill=label)
        pool = _elem_pool(rng, p.dtype, hints.elems, self.string_pool)
        if 0 <= size <= DENSE_ELEMENT_LIMIT:
            data = [_draw(rng, pool) for _ in range(size)]
            t = TensorVal(p.dtype, shape, data=data)
        else:
            t = TensorVal(p.dtype, shape, fill=_draw(rng, pool))
        for idx, erange in hints.at_index.items():
            flat = _flat_of(shape, idx)
            if flat is None:
                continue
            sub = _elem_pool(rng, p.dtype, erange, self.string_pool)
            t.flat_set(flat, _draw(rng, sub))
        return t

    # repair

    def repair(self, rng, binding: dict, exprs) -> bool:
        """Bounded fixpoint: re-solve the latest-ordered param of each
        violated constraint.  True when everything holds at exit."""
        order_index = {n: i for i, n in enumerate(self.data.order)}
        for _ in range(self.REPAIR_PASSES):
            violated = [e for e in exprs if not evaluate(e, binding)]
            if not violated:
                return True
            e = violated[0]
            ps = sorted(params_of(e) & self.param_names, key=lambda n: order_index[n])
            if not ps:
                return False  # constant-false constraint; nothing to adjust
            target = ps[-1]
            others = {k: v for k, v in binding.items() if k != target}
            binding[target] = self._solve_param(rng, target, exprs, others)
        return not [e for e in exprs if not evaluate(e, binding)]

    # violation probes

    def make_violation(self, rng, binding: dict, vec_index: int, probe_counter: int):
        """Flip exactly one active validation constraint; None if impossible."""
        vector = self.data.vectors[vec_index % self.n_vectors]
        validation, pins = self.active_sets(vector)
        targets = [c for c in validation if not c.is_unliftable]
        if not targets:
            return None
        all_exprs = [c.expr for c in validation] + pins
        order_index = {n: i for i, n in enumerate(self.data.order)}
        for k in range(len(targets)):
            c = targets[(probe_counter + k) % len(targets)]
            mutated = self._violate_one(rng, binding, c, all_exprs, order_index)
            if mutated is None:
                continue
            others_hold = all(evaluate(e, mutated) for e in all_exprs if e is not c.expr)
            if others_hold and not evaluate(c.expr, mutated):
                return mutated, c
        return None

    def _violate_one(self, rng, binding: dict, c: Constraint, all_exprs, order_index):
        expr = c.expr
        ps = sorted(params_of(expr) & self.param_names, key=lambda n: order_index[n])
        if not ps:
            return None
        target = ps[-1]
        new = dict(binding)
        if isinstance(expr, Forall):
            return self._violate_forall(rng, new, expr)
        if not isinstance(expr, Cmp):
            return None
        negated = Cmp(NEGATE_CMP[expr.op], expr.left, expr.right)
        exprs = [e for e in all_exprs if e is not expr] + [negated]
        others = {k: v for k, v in new.items() if k != target}
        new[target] = self._solve_param(rng, target, exprs, others)
        return new

    def _violate_forall(self, rng, new: dict, expr: Forall):
        body = expr.body
        if not isinstance(body, Cmp):
            return None
        val_atom = None
        for side in (body.left, body.right):
            if isinstance(side, Val) and side.idxs == (Var(expr.var),):
                val_atom = side
        if val_atom is None:
            return None
        tensor = new.get(val_atom.param)
        if not isinstance(tensor, TensorVal) or tensor.size <= 0:
            return None
        # solve a single element against the negated body
        erange = _Range()
        other = body.right if val_atom is body.left else body.left
        if not isinstance(other, Lit):
            try:
                other = Lit(_eval_value(other, new, {}))
            except Exception:
                return None
        op = body.op if val_atom is body.left else {"<": ">", "<=": ">=", ">": "<", ">=": "<=", "==": "==", "!=": "!="}[body.op]
        erange.bound(NEGATE_CMP[op], other.value)
        pool = _elem_pool(rng, tensor.dtype, erange, self.string_pool)
        bad = _draw(rng, pool)
        clone = _clone_tensor(tensor)
        clone.flat_set(0, bad)
        new[val_atom.param] = clone
        return new


def _flat_of(shape: tuple, idx: tuple):
    if len(idx) != len(shape):
        return None
    flat = 0
    for i, extent in zip(idx, shape):
        if not (0 <= i < extent):
            return None
        flat = flat * extent + i
    return flat


def _clone_tensor(t: TensorVal) -> TensorVal:
    if t.data is not None:
        return TensorVal(t.dtype, t.shape, data=list(t.data))
    clone = TensorVal(t.dtype, t.shape, fill=t.fill)
    clone.overrides.update(t.overrides)
    return clone


# -- random baseline --


def _random_string(rng) -> str:
    n = rng.randrange(17)
    return "".join(RANDOM_STRING_CHARS[rng.randrange(len(RANDOM_STRING_CHARS))] for _ in range(n))


def _random_element(rng, dtype: DType):
    if dtype is DType.DT_INT64:
        return rng.randint(INT64_MIN, INT64_MAX)
    if dtype is DType.DT_FLOAT:
        return rng.uniform(-1e18, 1e18)
    if dtype is DType.DT_STRING:
        return _random_string(rng)
    if dtype is DType.DT_BOOL:
        return rng.randrange(2) == 1
    raise ValueError(f"no random element for {dtype}")


def generate_random(spec, rng) -> dict:
    """Structure-blind baseline draw; pure in (spec, rng state)."""
    binding = {}
    for p in spec.params:
        if p.container == "resource":
            binding[p.name] = ResourceRef(p.entity, ("null", "fresh", "filled", "closed")[rng.randrange(4)])
        elif p.role == "attr":
            if p.dtype is DType.INT:
                binding[p.name] = rng.randint(INT64_MIN, INT64_MAX)
            elif p.dtype is DType.FLOAT:
                binding[p.name] = rng.uniform(-1e18, 1e18)
            elif p.dtype is DType.STRING:
                binding[p.name] = _random_string(rng)
            else:
                binding[p.name] = rng.randrange(2) == 1
        else:
            rank = rng.randrange(5)
            shape = tuple(rng.randrange(9) for _ in range(rank))
            size = 1
            for e in shape:
                size *= e
            data = [_random_element(rng, p.dtype) for _ in range(size)]
            binding[p.name] = TensorVal(p.dtype, shape, data=data)
    return binding
