"""Operator descriptor registry.

Parses `.ops` descriptor files into OpSpec records, places every operator in
a module tree keeping the shortest declared call path, collapses operators
that share a (name, parameter signature, kernel) into one testable group,
and partitions operators by backend kernel for input reuse.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .kernel.ir import DType, ParamDecl

log = logging.getLogger(__name__)

# descriptor `type:` tags for input_arg / output_arg
TENSOR_TAGS = {
    "DT_INT64": DType.DT_INT64,
    "DT_FLOAT": DType.DT_FLOAT,
    "DT_STRING": DType.DT_STRING,
    "DT_BOOL": DType.DT_BOOL,
    "DT_RESOURCE": DType.DT_RESOURCE,
}

# quoted attr `type:` tags
ATTR_TAGS = {
    "int": DType.INT,
    "float": DType.FLOAT,
    "string": DType.STRING,
    "bool": DType.BOOL,
}


class DescriptorError(Exception):
    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        loc = f" at line {line}, col {col}" if line is not None else ""
        super().__init__(f"{message}{loc}")
        self.message = message
        self.line = line
        self.col = col


@dataclass(frozen=True)
class OutputDecl:
    name: str
    dtype: DType
    entity: str | None = None


@dataclass(frozen=True)
class OpSpec:
    """Frontend-visible operator signature from one descriptor block."""

    name: str
    module_path: tuple[str, ...]
    aliases: tuple[tuple[str, ...], ...]
    params: tuple[ParamDecl, ...]
    outputs: tuple[OutputDecl, ...]
    kernel_id: str | None
    skip: bool = False

    @property
    def dotted(self) -> str:
        return ".".join(self.module_path + (self.name,))

    @property
    def inputs(self) -> tuple[ParamDecl, ...]:
        return tuple(p for p in self.params if p.role == "input")

    @property
    def attrs(self) -> tuple[ParamDecl, ...]:
        return tuple(p for p in self.params if p.role == "attr")

    def param(self, name: str) -> ParamDecl:
        for p in self.params:
            if p.name == name:
                return p
        raise KeyError(name)

    def signature(self) -> tuple:
        return tuple((p.name, p.role, p.dtype, p.container, p.entity) for p in self.params)


def _tokenize(text: str):
    toks = []
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            line += 1
            col = 1
            i += 1
        elif c in " \t\r":
            i += 1
            col += 1
        elif c == "#":
            while i < n and text[i] != "\n":
                i += 1
        elif c == '"':
            start_l, start_c = line, col
            i += 1
            col += 1
            buf = []
            while i < n and text[i] != '"':
                if text[i] == "\n":
                    raise DescriptorError("unterminated string", start_l, start_c)
                buf.append(text[i])
                i += 1
                col += 1
            if i >= n:
                raise DescriptorError("unterminated string", start_l, start_c)
            i += 1
            col += 1
            toks.append(("str", "".join(buf), start_l, start_c))
        elif c.isalpha() or c == "_":
            start_l, start_c = line, col
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            toks.append(("ident", text[i:j], start_l, start_c))
            col += j - i
            i = j
        elif c in "{}:":
            toks.append(("punct", c, line, col))
            i += 1
            col += 1
        else:
            raise DescriptorError(f"unexpected character {c!r}", line, col)
    toks.append(("eof", "", line, col))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.toks[self.pos]

    def next(self):
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def error(self, message, tok=None):
        tok = tok or self.peek()
        raise DescriptorError(message, tok[2], tok[3])

    def expect_punct(self, p):
        t = self.next()
        if t[0] != "punct" or t[1] != p:
            self.error(f"expected {p!r}, got {t[1]!r}", t)
        return t

    def expect_ident(self):
        t = self.next()
        if t[0] != "ident":
            self.error(f"expected identifier, got {t[1]!r}", t)
        return t

    def expect_str(self):
        t = self.next()
        if t[0] != "str":
            self.error(f"expected quoted string, got {t[1]!r}", t)
        return t

    def field_str(self):
        self.expect_punct(":")
        return self.expect_str()[1]

    def field_bool(self):
        self.expect_punct(":")
        t = self.expect_ident()
        if t[1] not in ("true", "false"):
            self.error("expected true or false", t)
        return t[1] == "true"

    def parse(self) -> list[OpSpec]:
        specs = []
        while self.peek()[0] != "eof":
            t = self.expect_ident()
            if t[1] != "op":
                self.error(f"expected 'op', got {t[1]!r}", t)
            specs.append(self.parse_op(t))
        return specs

    def parse_op(self, op_tok) -> OpSpec:
        self.expect_punct("{")
        name = None
        module = None
        aliases = []
        kernel = None
        skip = False
        params: list[ParamDecl] = []
        outputs: list[OutputDecl] = []
        while True:
            t = self.peek()
            if t[0] == "punct" and t[1] == "}":
                self.next()
                break
            f = self.expect_ident()
            key = f[1]
            if key == "name":
                name = self.field_str()
            elif key == "module":
                module = tuple(self.field_str().split("."))
            elif key == "alias":
                aliases.append(tuple(self.field_str().split(".")))
            elif key == "kernel":
                kernel = self.field_str()
            elif key == "skip":
                skip = self.field_bool()
            elif key == "input_arg":
                params.append(self.parse_arg(f, role="input"))
            elif key == "attr":
                params.append(self.parse_arg(f, role="attr"))
            elif key == "output_arg":
                outputs.append(self.parse_output(f))
            else:
                self.error(f"unknown field {key!r}", f)
        if name is None:
            self.error("op block missing name", op_tok)
        if module is None:
            self.error(f"op {name!r} missing module", op_tok)
        seen = set()
        for p in params:
            if p.name in seen:
                self.error(f"op {name!r}: duplicate param name {p.name!r}", op_tok)
            seen.add(p.name)
        return OpSpec(name, module, tuple(aliases), tuple(params), tuple(outputs), kernel, skip)

    def parse_arg_fields(self, role: str):
        self.expect_punct("{")
        name = None
        dtype_tok = None
        entity = None
        is_file = False
        while True:
            t = self.peek()
            if t[0] == "punct" and t[1] == "}":
                self.next()
                break
            f = self.expect_ident()
            key = f[1]
            if key == "name":
                name = self.field_str()
            elif key == "type":
                self.expect_punct(":")
                if role == "attr":
                    dtype_tok = self.expect_str()
                else:
                    dtype_tok = self.expect_ident()
            elif key == "entity":
                entity = self.field_str()
            elif key == "file":
                is_file = self.field_bool()
            else:
                self.error(f"unknown arg field {key!r}", f)
        if name is None or dtype_tok is None:
            self.error("arg block needs name and type", t)
        return name, dtype_tok, entity, is_file

    def parse_arg(self, f, role: str) -> ParamDecl:
        name, dtype_tok, entity, is_file = self.parse_arg_fields(role)
        if role == "attr":
            if dtype_tok[1] not in ATTR_TAGS:
                self.error(f"unknown attr type {dtype_tok[1]!r}", dtype_tok)
            if entity is not None or is_file:
                self.error("attrs are plain scalars", dtype_tok)
            return ParamDecl(name, "attr", ATTR_TAGS[dtype_tok[1]], "scalar")
        if dtype_tok[1] not in TENSOR_TAGS:
            self.error(f"unknown dtype tag {dtype_tok[1]!r}", dtype_tok)
        dtype = TENSOR_TAGS[dtype_tok[1]]
        if dtype is DType.DT_RESOURCE:
            if entity is None:
                self.error(f"resource input {name!r} needs an entity kind", dtype_tok)
            return ParamDecl(name, "input", dtype, "resource", entity=entity)
        if entity is not None:
            self.error(f"entity is only valid on resource inputs, not {name!r}", dtype_tok)
        if is_file:
            if dtype is not DType.DT_STRING:
                self.error(f"file-path input {name!r} must be DT_STRING", dtype_tok)
            return ParamDecl(name, "input", dtype, "file-path", is_file=True)
        return ParamDecl(name, "input", dtype, "tensor")

    def parse_output(self, f) -> OutputDecl:
        name, dtype_tok, entity, is_file = self.parse_arg_fields("output")
        if dtype_tok[1] not in TENSOR_TAGS:
            self.error(f"unknown dtype tag {dtype_tok[1]!r}", dtype_tok)
        dtype = TENSOR_TAGS[dtype_tok[1]]
        if dtype is DType.DT_RESOURCE and entity is None:
            self.error(f"resource output {name!r} needs an entity kind", dtype_tok)
        if dtype is not DType.DT_RESOURCE and entity is not None:
            self.error(f"entity is only valid on resource outputs, not {name!r}", dtype_tok)
        return OutputDecl(name, dtype, entity)


def parse_opspecs(text: str) -> list[OpSpec]:
    """One OpSpec per `op { }` block, declaration order preserved."""
    return _Parser(text).parse()


@dataclass
class ModuleTree:
    """One node per module path prefix; each operator placed once."""

    nodes: set
    edges: set
    op_placement: dict

    def path(self, op_name: str) -> tuple[str, ...]:
        return self.op_placement[op_name]


def build_module_tree(specs: list[OpSpec]) -> ModuleTree:
    """Place each operator at its shortest declared path, ties lexicographic."""
    nodes = set()
    edges = set()
    candidates: dict[str, list] = {}
    for spec in specs:
        for path in (spec.module_path, *spec.aliases):
            for k in range(1, len(path) + 1):
                nodes.add(path[:k])
                if k > 1:
                    edges.add((path[: k - 1], path[:k]))
            candidates.setdefault(spec.name, []).append(path)
    placement = {name: min(paths, key=lambda p: (len(p), p)) for name, paths in candidates.items()}
    return ModuleTree(nodes, edges, placement)


@dataclass(frozen=True)
class OpGroup:
    """Operators indistinguishable at the call boundary, collapsed to one."""

    name: str
    members: tuple[str, ...]
    representative: OpSpec
    testable: bool

    @property
    def kernel_id(self) -> str | None:
        return self.representative.kernel_id


def dedup_operators(specs: list[OpSpec]) -> list[OpGroup]:
    """Collapse operators with identical (name, param signature, kernel)."""
    buckets: dict[tuple, list[OpSpec]] = {}
    order: list[tuple] = []
    for spec in specs:
        key = (spec.name, spec.signature(), spec.kernel_id)
        if key not in buckets:
            order.append(key)
        buckets.setdefault(key, []).append(spec)
    groups = []
    seen_names = {}
    for key in order:
        members = buckets[key]
        rep = min(members, key=lambda s: (len(s.module_path), s.module_path))
        name = rep.name
        if name in seen_names:
            raise DescriptorError(
                f"operator name {name!r} reused with a different signature or kernel"
            )
        seen_names[name] = True
        groups.append(
            OpGroup(
                name=name,
                members=tuple(s.dotted for s in members),
                representative=rep,
                testable=not rep.skip,
            )
        )
    return groups


def group_by_kernel(specs: list[OpSpec], known_kernels: set | None = None) -> dict[str, list[str]]:
    """Partition deduplicated operator names by backend kernel."""
    groups = dedup_operators([s for s in specs if s.kernel_id is not None])
    out: dict[str, list[str]] = {}
    for g in groups:
        if known_kernels is not None and g.kernel_id not in known_kernels:
            raise DescriptorError(f"operator {g.name!r} binds unknown kernel {g.kernel_id!r}")
        out.setdefault(g.kernel_id, []).append(g.name)
    for names in out.values():
        names.sort()
    return out


@dataclass
class Registry:
    """Loaded operator universe: tree, dedup groups, and kernel partition."""

    specs: list[OpSpec]
    tree: ModuleTree
    groups: list[OpGroup]
    kernel_groups: dict[str, list[str]]

    @property
    def by_name(self) -> dict[str, OpGroup]:
        return {g.name: g for g in self.groups}

    @property
    def testable(self) -> list[OpSpec]:
        reps = [g.representative for g in self.groups if g.testable]
        return sorted(reps, key=lambda s: s.name)


def build_registry(specs: list[OpSpec]) -> Registry:
    for spec in specs:
        if spec.kernel_id is None:
            log.warning("operator %s is frontend-only (no kernel); excluded from campaigns", spec.dotted)
    tree = build_module_tree(specs)
    bound = [s for s in specs if s.kernel_id is not None]
    groups = dedup_operators(bound)
    kernel_groups = group_by_kernel(bound)
    return Registry(specs, tree, groups, kernel_groups)
