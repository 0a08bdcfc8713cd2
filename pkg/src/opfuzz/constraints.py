"""Lifted constraint language over frontend parameter names.

Expressions are trees over the atoms ndim(p), dim(p, k), size(p),
val(p, idx...), bare attr references, and literals, combined with
arithmetic and comparisons, optionally under a single forall quantifier
with half-open bounds.  Evaluation is total: an out-of-range atom or a
zero divisor makes the enclosing constraint false rather than raising,
because a check that would fail at runtime is a failed check.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .kernel.ir import INT64_MAX, INT64_MIN, TensorVal

CMP_OPS = ("==", "!=", "<", "<=", ">", ">=")
ARITH_OPS = ("+", "-", "*", "/", "%")

# Table-style attribute buckets, most-specific first for mixed-atom constraints
ATTR_PRECEDENCE = ("ndim", "shape", "size", "value", "dtype")


class ConstraintError(Exception):
    pass


@dataclass(frozen=True)
class Lit:
    value: object  # int | float | str | bool


@dataclass(frozen=True)
class AttrRef:
    param: str


@dataclass(frozen=True)
class Ndim:
    param: str


@dataclass(frozen=True)
class Dim:
    param: str
    axis: int


@dataclass(frozen=True)
class Size:
    param: str


@dataclass(frozen=True)
class Val:
    param: str
    idxs: tuple = ()


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Arith:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Cmp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Forall:
    var: str
    lo: object
    hi: object
    body: object


@dataclass(frozen=True)
class Unliftable:
    note: str


@dataclass
class Constraint:
    """One lifted predicate plus its kernel provenance."""

    expr: object
    block: int = -1
    message: str = ""

    @property
    def is_unliftable(self) -> bool:
        return isinstance(self.expr, Unliftable)


@dataclass
class LogicalNode:
    guard: Constraint
    constraints: list = field(default_factory=list)
    branches: list = field(default_factory=list)


@dataclass
class ConstraintTree:
    kernel_id: str
    constraints: list = field(default_factory=list)
    branches: list = field(default_factory=list)
    skipped_mixed_loops: int = 0
    skipped_untainted: int = 0

    def all_constraints(self):
        """Every validation constraint, root and branch-nested."""
        out = list(self.constraints)
        stack = list(self.branches)
        while stack:
            node = stack.pop()
            out.extend(node.constraints)
            stack.extend(node.branches)
        return out

    def all_guards(self):
        out = []
        stack = list(self.branches)
        while stack:
            node = stack.pop()
            out.append(node.guard)
            stack.extend(node.branches)
        return out


# -- evaluation --


class _EvalFail(Exception):
    """Internal: atom out of range or bad arithmetic; constraint is false."""


def _trunc_div(a: int, b: int) -> int:
    # C semantics: quotient truncated toward zero, remainder follows dividend
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


def _check64(v: int) -> int:
    if v < INT64_MIN or v > INT64_MAX:
        raise _EvalFail()
    return v


def _eval_value(expr, binding: dict, env: dict):
    if isinstance(expr, Lit):
        return expr.value
    if isinstance(expr, Var):
        try:
            return env[expr.name]
        except KeyError:
            raise ConstraintError(f"unbound quantifier variable {expr.name!r}")
    if isinstance(expr, AttrRef):
        return _param(binding, expr.param)
    if isinstance(expr, Ndim):
        return _tensor(binding, expr.param).rank
    if isinstance(expr, Size):
        return _tensor(binding, expr.param).size
    if isinstance(expr, Dim):
        t = _tensor(binding, expr.param)
        if expr.axis < 0 or expr.axis >= t.rank:
            raise _EvalFail()
        return t.shape[expr.axis]
    if isinstance(expr, Val):
        t = _tensor(binding, expr.param)
        idxs = [_eval_value(i, binding, env) for i in expr.idxs]
        if len(idxs) != t.rank or t.size <= 0:
            raise _EvalFail()
        flat = 0
        for idx, extent in zip(idxs, t.shape):
            if not isinstance(idx, int) or idx < 0 or idx >= extent:
                raise _EvalFail()
            flat = flat * extent + idx
        return t.flat_get(flat)
    if isinstance(expr, Arith):
        a = _eval_value(expr.left, binding, env)
        b = _eval_value(expr.right, binding, env)
        if isinstance(a, bool) or isinstance(b, bool):
            raise _EvalFail()
        if isinstance(a, int) and isinstance(b, int):
            if expr.op == "+":
                return _check64(a + b)
            if expr.op == "-":
                return _check64(a - b)
            if expr.op == "*":
                return _check64(a * b)
            if b == 0:
                raise _EvalFail()
            if expr.op == "/":
                return _check64(_trunc_div(a, b))
            return _check64(a - _trunc_div(a, b) * b)
        if isinstance(a, (int, float)) and isinstance(b, (int, float)):
            if expr.op == "+":
                return a + b
            if expr.op == "-":
                return a - b
            if expr.op == "*":
                return a * b
            if b == 0:
                raise _EvalFail()
            if expr.op == "/":
                return a / b
            import math

            return math.fmod(a, b)
        raise _EvalFail()
    raise ConstraintError(f"cannot evaluate {type(expr).__name__} as a value")


def _param(binding: dict, name: str):
    try:
        return binding[name]
    except KeyError:
        raise ConstraintError(f"binding missing param {name!r}")


def _tensor(binding: dict, name: str) -> TensorVal:
    v = _param(binding, name)
    if not isinstance(v, TensorVal):
        raise _EvalFail()
    return v


def _var_only_in_val_indices(expr, var: str) -> bool:
    """True when every Var(var) occurrence is a whole val() index."""
    if isinstance(expr, Var):
        return expr.name != var
    if isinstance(expr, Val):
        return all(isinstance(i, Var) or _var_only_in_val_indices(i, var) for i in expr.idxs)
    if isinstance(expr, (Arith, Cmp)):
        return _var_only_in_val_indices(expr.left, var) and _var_only_in_val_indices(expr.right, var)
    return True


def _val_atoms(expr):
    out = []
    stack = [expr]
    while stack:
        e = stack.pop()
        if isinstance(e, Val):
            out.append(e)
            stack.extend(e.idxs)
        elif isinstance(e, (Arith, Cmp)):
            stack.append(e.left)
            stack.append(e.right)
        elif isinstance(e, Forall):
            stack.extend([e.lo, e.hi, e.body])
    return out


def _substitute(expr, var: str, value: int):
    if isinstance(expr, Var) and expr.name == var:
        return Lit(value)
    if isinstance(expr, Val):
        return Val(expr.param, tuple(_substitute(i, var, value) for i in expr.idxs))
    if isinstance(expr, Arith):
        return Arith(expr.op, _substitute(expr.left, var, value), _substitute(expr.right, var, value))
    if isinstance(expr, Cmp):
        return Cmp(expr.op, _substitute(expr.left, var, value), _substitute(expr.right, var, value))
    return expr


def _eval_bool(expr, binding: dict, env: dict) -> bool:
    if isinstance(expr, Unliftable):
        return True  # opaque checks cannot guide anything; assume satisfiable
    if isinstance(expr, Lit) and isinstance(expr.value, bool):
        return expr.value
    if isinstance(expr, Cmp):
        a = _eval_value(expr.left, binding, env)
        b = _eval_value(expr.right, binding, env)
        if isinstance(a, str) != isinstance(b, str):
            raise _EvalFail()
        if isinstance(a, str) and expr.op not in ("==", "!="):
            raise _EvalFail()
        return {
            "==": a == b,
            "!=": a != b,
            "<": a < b,
            "<=": a <= b,
            ">": a > b,
            ">=": a >= b,
        }[expr.op]
    if isinstance(expr, Forall):
        lo = _eval_value(expr.lo, binding, env)
        hi = _eval_value(expr.hi, binding, env)
        if not isinstance(lo, int) or not isinstance(hi, int):
            raise _EvalFail()
        if hi - lo > 10_000 and _var_only_in_val_indices(expr.body, expr.var):
            return _forall_uniform(expr, lo, hi, binding, env)
        for v in range(lo, hi):
            env2 = dict(env)
            env2[expr.var] = v
            if not _eval_bool(expr.body, binding, env2):
                return False
        return True
    raise ConstraintError(f"cannot evaluate {type(expr).__name__} as a predicate")


def _forall_uniform(expr: Forall, lo: int, hi: int, binding: dict, env: dict) -> bool:
    """Large-range forall where the index only feeds val() atoms directly.

    The body's truth at index v depends only on the loaded element values, so
    it suffices to check one representative index per distinct element, which
    for fill-backed tensors is the fill value plus any point overrides.
    """
    atoms = [a for a in _val_atoms(expr.body) if a.idxs == (Var(expr.var),)]
    tensors = []
    for a in atoms:
        t = _tensor(binding, a.param)
        if t.rank != 1 or lo < 0 or hi > t.shape[0]:
            raise _EvalFail()
        tensors.append(t)
    probe = {lo} if lo < hi else set()
    for t in tensors:
        if t.data is not None:
            # dense data within a huge range cannot happen (size caps), but
            # stay honest and fall back to full iteration
            for v in range(lo, hi):
                env2 = dict(env)
                env2[expr.var] = v
                if not _eval_bool(expr.body, binding, env2):
                    return False
            return True
        for flat in t.overrides:
            if lo <= flat < hi:
                probe.add(flat)
    for v in sorted(probe):
        env2 = dict(env)
        env2[expr.var] = v
        if not _eval_bool(expr.body, binding, env2):
            return False
    return True


def evaluate(expr, binding: dict) -> bool:
    """Truth of one constraint expression under a concrete binding."""
    try:
        return _eval_bool(expr, binding, {})
    except _EvalFail:
        return False


def evaluate_tree(tree: ConstraintTree, binding: dict) -> bool:
    """Whole-tree truth: root conjunction, branch children gated by guards."""

    def node_ok(constraints, branches) -> bool:
        for c in constraints:
            if not evaluate(c.expr, binding):
                return False
        for br in branches:
            if evaluate(br.guard.expr, binding):
                if not node_ok(br.constraints, br.branches):
                    return False
        return True

    return node_ok(tree.constraints, tree.branches)


# -- rendering and normalization --


def render(expr) -> str:
    if isinstance(expr, Lit):
        if isinstance(expr.value, str):
            return '"' + expr.value + '"'
        if isinstance(expr.value, bool):
            return "true" if expr.value else "false"
        return repr(expr.value)
    if isinstance(expr, Var):
        return expr.name
    if isinstance(expr, AttrRef):
        return expr.param
    if isinstance(expr, Ndim):
        return f"ndim({expr.param})"
    if isinstance(expr, Size):
        return f"size({expr.param})"
    if isinstance(expr, Dim):
        return f"dim({expr.param}, {expr.axis})"
    if isinstance(expr, Val):
        if expr.idxs:
            return f"val({expr.param}, " + ", ".join(render(i) for i in expr.idxs) + ")"
        return f"val({expr.param})"
    if isinstance(expr, Arith):
        return f"{_render_operand(expr.left, expr.op)} {expr.op} {_render_operand(expr.right, expr.op)}"
    if isinstance(expr, Cmp):
        return f"{render(expr.left)} {expr.op} {render(expr.right)}"
    if isinstance(expr, Forall):
        return f"forall {expr.var} in [{render(expr.lo)}, {render(expr.hi)}): {render(expr.body)}"
    if isinstance(expr, Unliftable):
        return f"unliftable({expr.note})"
    raise ConstraintError(f"cannot render {expr!r}")


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "%": 2}


def _render_operand(child, parent_op: str) -> str:
    text = render(child)
    if isinstance(child, Arith) and _PREC[child.op] < _PREC[parent_op]:
        return f"({text})"
    return text


_FLIP = {"<": ">", "<=": ">=", ">": ">", ">=": ">=", "==": "==", "!=": "!="}
NEGATE_CMP = {"==": "!=", "!=": "==", "<": ">=", "<=": ">", ">": "<=", ">=": "<"}


def _fold(expr):
    if isinstance(expr, Arith):
        left = _fold(expr.left)
        right = _fold(expr.right)
        if isinstance(left, Lit) and isinstance(right, Lit):
            try:
                v = _eval_value(Arith(expr.op, left, right), {}, {})
                return Lit(v)
            except _EvalFail:
                pass
        return Arith(expr.op, left, right)
    if isinstance(expr, Cmp):
        return Cmp(expr.op, _fold(expr.left), _fold(expr.right))
    if isinstance(expr, Val):
        return Val(expr.param, tuple(_fold(i) for i in expr.idxs))
    if isinstance(expr, Forall):
        return Forall(expr.var, _fold(expr.lo), _fold(expr.hi), _fold(expr.body))
    return expr


def _rename_var(expr, old: str, new: str):
    if isinstance(expr, Var) and expr.name == old:
        return Var(new)
    if isinstance(expr, Val):
        return Val(expr.param, tuple(_rename_var(i, old, new) for i in expr.idxs))
    if isinstance(expr, Arith):
        return Arith(expr.op, _rename_var(expr.left, old, new), _rename_var(expr.right, old, new))
    if isinstance(expr, Cmp):
        return Cmp(expr.op, _rename_var(expr.left, old, new), _rename_var(expr.right, old, new))
    return expr


def normalize(expr):
    """Canonical form: folded, < and <= flipped, ==/!= lex-ordered, var -> i."""
    expr = _fold(expr)
    if isinstance(expr, Forall):
        body = expr.body
        if expr.var != "i":
            body = _rename_var(body, expr.var, "i")
        return Forall("i", normalize(expr.lo), normalize(expr.hi), normalize(body))
    if isinstance(expr, Cmp):
        left, right, op = expr.left, expr.right, expr.op
        if op in ("<", "<="):
            left, right = right, left
            op = _FLIP[expr.op]
        if op in ("==", "!=") and render(right) < render(left):
            left, right = right, left
        return Cmp(op, left, right)
    return expr


def normal_form(expr) -> str:
    return render(normalize(expr))


# -- tree serialization and parsing --


def serialize_tree(tree: ConstraintTree) -> str:
    lines = []

    def walk(constraints, branches, depth):
        pad = "  " * depth
        for c in constraints:
            lines.append(pad + render(c.expr))
        for br in branches:
            lines.append(pad + "branch: " + render(br.guard.expr))
            walk(br.constraints, br.branches, depth + 1)

    walk(tree.constraints, tree.branches, 0)
    return "\n".join(lines) + ("\n" if lines else "")


class _ExprParser:
    """Recursive-descent parser for the lifted grammar (golden-file syntax)."""

    ATOMS = ("ndim", "size", "dim", "val")

    def __init__(self, text: str, quant_vars=()):
        self.toks = self._tokenize(text)
        self.pos = 0
        self.quant_vars = set(quant_vars)

    @staticmethod
    def _tokenize(text: str):
        toks = []
        i, n = 0, len(text)
        while i < n:
            c = text[i]
            if c in " \t":
                i += 1
            elif c == '"':
                j = text.index('"', i + 1)
                toks.append(("str", text[i + 1 : j]))
                i = j + 1
            elif c.isdigit() or (c == "-" and i + 1 < n and text[i + 1].isdigit() and _prev_is_operand(toks) is False):
                j = i + 1
                while j < n and (text[j].isdigit() or text[j] == "."):
                    j += 1
                lit = text[i:j]
                toks.append(("num", float(lit) if "." in lit else int(lit)))
                i = j
            elif c.isalpha() or c == "_":
                j = i
                while j < n and (text[j].isalnum() or text[j] == "_"):
                    j += 1
                toks.append(("ident", text[i:j]))
                i = j
            elif text[i : i + 2] in ("==", "!=", "<=", ">="):
                toks.append(("op", text[i : i + 2]))
                i += 2
            elif c in "+-*/%<>()[],:":
                toks.append(("op", c))
                i += 1
            else:
                raise ConstraintError(f"unexpected character {c!r} in constraint text")
        toks.append(("eof", None))
        return toks

    def peek(self):
        return self.toks[self.pos]

    def next(self):
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def eat(self, kind, value=None):
        k, v = self.next()
        if k != kind or (value is not None and v != value):
            raise ConstraintError(f"expected {value or kind!r}, got {v!r}")
        return v

    def at_op(self, *ops):
        k, v = self.peek()
        return k == "op" and v in ops

    def parse_constraint(self):
        k, v = self.peek()
        if k == "ident" and v == "forall":
            return self.parse_forall()
        return self.parse_cmp()

    def parse_forall(self):
        self.eat("ident", "forall")
        var = self.eat("ident")
        self.eat("ident", "in")
        self.eat("op", "[")
        lo = self.parse_arith()
        self.eat("op", ",")
        hi = self.parse_arith()
        self.eat("op", ")")
        self.eat("op", ":")
        self.quant_vars.add(var)
        body = self.parse_cmp()
        self.quant_vars.discard(var)
        return Forall(var, lo, hi, body)

    def parse_cmp(self):
        left = self.parse_arith()
        k, v = self.peek()
        if k == "op" and v in CMP_OPS:
            self.next()
            right = self.parse_arith()
            return Cmp(v, left, right)
        raise ConstraintError("constraint must be a comparison")

    def parse_arith(self):
        left = self.parse_term()
        while self.at_op("+", "-"):
            op = self.next()[1]
            left = Arith(op, left, self.parse_term())
        return left

    def parse_term(self):
        left = self.parse_factor()
        while self.at_op("*", "/", "%"):
            op = self.next()[1]
            left = Arith(op, left, self.parse_factor())
        return left

    def parse_factor(self):
        k, v = self.peek()
        if k == "num":
            self.next()
            return Lit(v)
        if k == "str":
            self.next()
            return Lit(v)
        if k == "op" and v == "-":
            self.next()
            inner = self.parse_factor()
            return _fold(Arith("-", Lit(0), inner))
        if k == "op" and v == "(":
            self.next()
            e = self.parse_arith()
            self.eat("op", ")")
            return e
        if k == "ident":
            self.next()
            if v in self.ATOMS and self.at_op("("):
                return self.parse_atom(v)
            if v in ("true", "false"):
                return Lit(v == "true")
            if v in self.quant_vars:
                return Var(v)
            return AttrRef(v)
        raise ConstraintError(f"unexpected token {v!r} in constraint text")

    def parse_atom(self, kind):
        self.eat("op", "(")
        param = self.eat("ident")
        if kind in ("ndim", "size"):
            self.eat("op", ")")
            return Ndim(param) if kind == "ndim" else Size(param)
        if kind == "dim":
            self.eat("op", ",")
            axis = self.parse_arith()
            self.eat("op", ")")
            if not isinstance(axis, Lit) or not isinstance(axis.value, int):
                raise ConstraintError("dim() axis must be an integer literal")
            return Dim(param, axis.value)
        idxs = []
        while self.at_op(","):
            self.next()
            idxs.append(self.parse_arith())
        self.eat("op", ")")
        return Val(param, tuple(idxs))

    def finish(self, expr):
        if self.peek()[0] != "eof":
            raise ConstraintError(f"trailing tokens after constraint: {self.peek()[1]!r}")
        return expr


def _prev_is_operand(toks) -> bool:
    if not toks:
        return False
    k, v = toks[-1]
    return k in ("num", "ident", "str") or (k == "op" and v in (")", "]"))


def parse_constraint(text: str):
    p = _ExprParser(text)
    return p.finish(p.parse_constraint())


def parse_tree(text: str, kernel_id: str = "") -> ConstraintTree:
    """Parse the line-oriented golden format back into a tree."""
    tree = ConstraintTree(kernel_id)
    # stack of (depth, constraints_list, branches_list)
    stack = [(0, tree.constraints, tree.branches)]
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        indent = len(raw) - len(raw.lstrip(" "))
        if indent % 2 != 0:
            raise ConstraintError(f"line {lineno}: odd indentation")
        depth = indent // 2
        while stack and stack[-1][0] > depth:
            stack.pop()
        if not stack or stack[-1][0] != depth:
            raise ConstraintError(f"line {lineno}: indentation skips a level")
        _, constraints, branches = stack[-1]
        body = raw.strip()
        if body.startswith("branch:"):
            guard = parse_constraint(body[len("branch:") :].strip())
            node = LogicalNode(Constraint(guard))
            branches.append(node)
            stack.append((depth + 1, node.constraints, node.branches))
        else:
            constraints.append(Constraint(parse_constraint(body)))
    return tree


def tree_equal(a: ConstraintTree, b: ConstraintTree) -> bool:
    """Structural equality up to normalization and per-node ordering."""

    def node_key(constraints, branches):
        cset = frozenset(normal_form(c.expr) for c in constraints)
        bset = []
        for br in branches:
            bset.append((normal_form(br.guard.expr), node_key(br.constraints, br.branches)))
        return (cset, frozenset(bset))

    return node_key(a.constraints, a.branches) == node_key(b.constraints, b.branches)


# -- parameter dependency ordering --


def params_of(expr) -> set:
    out = set()
    stack = [expr]
    while stack:
        e = stack.pop()
        if isinstance(e, (AttrRef, Ndim, Size, Dim)):
            out.add(e.param)
        elif isinstance(e, Val):
            out.add(e.param)
            stack.extend(e.idxs)
        elif isinstance(e, (Arith, Cmp)):
            stack.append(e.left)
            stack.append(e.right)
        elif isinstance(e, Forall):
            stack.extend([e.lo, e.hi, e.body])
    return out


def _bare_source(expr):
    """A side usable as a generation source: attr-ref, size, or ndim atom."""
    if isinstance(expr, (AttrRef, Size, Ndim)):
        return expr.param
    return None


def toposort_params(tree: ConstraintTree, spec) -> list:
    """Order parameters so constraint sources are generated before targets.

    Two edge rules: an equality `f(p) == g(q)` with a bare attr/size/ndim
    side q makes every other referenced param depend on q; and any
    constraint mixing attrs with tensor params makes the tensors depend on
    the attrs (attr values parameterize tensor construction, never the
    reverse).  Ready ties resolve attrs first, then declaration order.
    """
    import logging

    names = [p.name for p in spec.params]
    decl_index = {n: i for i, n in enumerate(names)}
    is_attr = {p.name: p.role == "attr" for p in spec.params}
    deps: dict[str, set] = {n: set() for n in names}

    exprs = [c.expr for c in tree.all_constraints() if not isinstance(c.expr, Unliftable)]
    exprs += [g.expr for g in tree.all_guards() if not isinstance(g.expr, Unliftable)]
    for expr in exprs:
        referenced = {p for p in params_of(expr) if p in deps}
        if len(referenced) < 2:
            continue
        if isinstance(expr, Cmp) and expr.op == "==":
            sources = [s for s in (_bare_source(expr.left), _bare_source(expr.right)) if s in referenced]
            if len(sources) == 2 and sources[0] != sources[1]:
                # both sides bare: the attr side is the source (scalars
                # parameterize tensors), then earlier declaration wins
                src, dst = sorted(sources, key=lambda n: (0 if is_attr[n] else 1, decl_index[n]))
                deps[dst].add(src)
            elif len(sources) >= 1:
                src = sources[0]
                for p in referenced:
                    if p != src:
                        deps[p].add(src)
        attrs = {p for p in referenced if is_attr[p]}
        tensors = referenced - attrs
        for t in tensors:
            deps[t] |= attrs

    order = []
    placed = set()
    remaining = set(names)
    warned = False
    while remaining:
        ready = [n for n in remaining if deps[n] <= placed]
        if not ready:
            if not warned:
                logging.getLogger(__name__).warning(
                    "constraint dependency cycle among %s; falling back to declaration order", sorted(remaining)
                )
                warned = True
            ready = list(remaining)
        nxt = min(ready, key=lambda n: (0 if is_attr[n] else 1, decl_index[n]))
        order.append(nxt)
        placed.add(nxt)
        remaining.discard(nxt)
    return order


# -- taxonomy classification --


@dataclass
class ConstraintStats:
    by_category: dict
    single_param: dict
    param_pairs: dict

    def as_json(self) -> dict:
        return {
            "by_category": dict(sorted(self.by_category.items())),
            "single_param": dict(sorted(self.single_param.items())),
            "param_pairs": dict(sorted(self.param_pairs.items())),
        }


def _attr_of_atom(atom) -> str:
    if isinstance(atom, Ndim):
        return "ndim"
    if isinstance(atom, Dim):
        return "shape"
    if isinstance(atom, Size):
        return "size"
    return "value"  # Val and AttrRef


def _param_attrs(expr) -> dict:
    """param -> attribute bucket, most specific kept, quantifier bounds skipped."""
    out: dict[str, str] = {}

    def note(param, attr):
        old = out.get(param)
        if old is None or ATTR_PRECEDENCE.index(attr) < ATTR_PRECEDENCE.index(old):
            out[param] = attr

    def walk(e):
        if isinstance(e, (AttrRef, Ndim, Size, Dim)):
            note(e.param, _attr_of_atom(e))
        elif isinstance(e, Val):
            note(e.param, "value")
            for i in e.idxs:
                walk(i)
        elif isinstance(e, (Arith, Cmp)):
            walk(e.left)
            walk(e.right)
        elif isinstance(e, Forall):
            walk(e.body)  # bounds are loop machinery, not the checked predicate

    walk(expr)
    return out


def classify_constraints(trees: dict, kernels: dict, modes: list, dependency_count: int) -> ConstraintStats:
    """Bucket every constraint per the reporting taxonomy.

    Validation constraints come from the trees plus one dtype constraint per
    declared kernel parameter; logical counts the branch guards; environmental
    is the mode matrix; dependency is supplied by the caller (fixtures,
    sequences, wired resource params).
    """
    single = {"ndim": 0, "shape": 0, "size": 0, "value": 0, "dtype": 0}
    pairs: dict[str, int] = {}
    unliftable = 0
    logical = 0

    for tree in trees.values():
        logical += len(tree.all_guards())
        for c in tree.all_constraints():
            if c.is_unliftable:
                unliftable += 1
                continue
            attrs = _param_attrs(c.expr)
            if len(attrs) == 0:
                continue  # fully folded constant check constrains nothing
            if len(attrs) == 1:
                single[next(iter(attrs.values()))] += 1
            else:
                params = sorted(attrs)
                for i in range(len(params)):
                    for j in range(i + 1, len(params)):
                        key = ",".join(sorted((attrs[params[i]], attrs[params[j]])))
                        pairs[key] = pairs.get(key, 0) + 1

    for kernel in kernels.values():
        single["dtype"] += len(kernel.params)

    validation = sum(single.values()) + sum(pairs.values())
    by_category = {
        "validation": validation,
        "logical": logical,
        "environmental": len(modes),
        "dependency": dependency_count,
    }
    if unliftable:
        by_category["unliftable"] = unliftable
    return ConstraintStats(by_category, single, pairs)
