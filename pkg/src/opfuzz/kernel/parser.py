"""Parser and lowering for the micro-kernel language.

Source form:

    kernel NameKernel {
      input x : tensor<f32>;
      attr n : int;
      output y : tensor<f32>;
      require rank(x) == 1, "x must be a vector";
      if n > 1 { require size(x) % n == 0, "divisible"; }
      for i in 0..size(x) { require x[i] >= 0, "non-negative"; }
      t = x[0];
      emit y = x;
      call Push(Stack, h, x);
    }

Lowering is mechanical: `require` becomes a conditional branch to a
require_fail block, `if` a diamond, `for` a counted loop whose latch
increments the counter slot in place.  Expressions are statically typed at
parse time (indexing a scalar or ordering strings is a parse error, not a
runtime surprise).
"""

from __future__ import annotations

from .ir import (
    Block,
    DType,
    IfRegion,
    Instruction,
    KernelIR,
    LoopRegion,
    ParamDecl,
    RequireRegion,
)


class KernelParseError(Exception):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col


_PUNCT2 = ("==", "!=", "<=", ">=", "..")
_PUNCT1 = "{}()[]<>,;:=+-*/%"

_TENSOR_ELEMS = {"i64": DType.DT_INT64, "f32": DType.DT_FLOAT, "str": DType.DT_STRING, "bool": DType.DT_BOOL}
_ATTR_TYPES = {"int": DType.INT, "float": DType.FLOAT, "string": DType.STRING, "bool": DType.BOOL}

RESOURCE_VERBS = ("New", "Push", "Pop", "Close", "Find", "Remove")


def tokenize(source: str):
    """Yield (kind, value, line, col); kind in {ident, int, float, str, punct}."""
    tokens = []
    i, line, col = 0, 1, 1
    n = len(source)
    while i < n:
        c = source[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if c == "#":
            while i < n and source[i] != "\n":
                i += 1
            continue
        start_col = col
        if c == '"':
            j = i + 1
            while j < n and source[j] != '"':
                if source[j] == "\n":
                    raise KernelParseError("unterminated string", line, start_col)
                j += 1
            if j >= n:
                raise KernelParseError("unterminated string", line, start_col)
            tokens.append(("str", source[i + 1 : j], line, start_col))
            col += j + 1 - i
            i = j + 1
            continue
        if c.isdigit():
            j = i
            while j < n and source[j].isdigit():
                j += 1
            if j < n and source[j] == "." and j + 1 < n and source[j + 1].isdigit():
                j += 1
                while j < n and source[j].isdigit():
                    j += 1
                tokens.append(("float", float(source[i:j]), line, start_col))
            else:
                tokens.append(("int", int(source[i:j]), line, start_col))
            col += j - i
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            tokens.append(("ident", source[i:j], line, start_col))
            col += j - i
            i = j
            continue
        two = source[i : i + 2]
        if two in _PUNCT2:
            tokens.append(("punct", two, line, start_col))
            i += 2
            col += 2
            continue
        if c in _PUNCT1:
            tokens.append(("punct", c, line, start_col))
            i += 1
            col += 1
            continue
        raise KernelParseError(f"unexpected character {c!r}", line, col)
    tokens.append(("eof", None, line, col))
    return tokens


class _Lowerer:
    """Single-pass parse + lowering.  Expressions evaluate into fresh value
    ids appended to the current block; statements shape the CFG."""

    def __init__(self, tokens):
        self.toks = tokens
        self.pos = 0
        self.blocks: list[Block] = []
        self.cur: Block | None = None
        self.next_val = 0
        self.params: list[ParamDecl] = []
        self.outputs: list[tuple[str, DType]] = []
        self.param_ids: dict[str, int] = {}
        self.param_types: dict[str, str] = {}
        # lexical scopes of locals: name -> (value_id, type)
        self.scopes: list[dict[str, tuple[int, str]]] = []
        self.input_count = 0

    # -- token plumbing --

    def peek(self):
        return self.toks[self.pos]

    def next(self):
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def error(self, msg: str, tok=None):
        tok = tok or self.peek()
        raise KernelParseError(msg, tok[2], tok[3])

    def expect_punct(self, p: str):
        k, v, *_ = self.peek()
        if k != "punct" or v != p:
            self.error(f"expected {p!r}")
        return self.next()

    def expect_ident(self, word: str | None = None) -> str:
        k, v, *_ = self.peek()
        if k != "ident" or (word is not None and v != word):
            self.error(f"expected {word or 'identifier'!r}")
        return self.next()[1]

    def at_punct(self, p: str) -> bool:
        k, v, *_ = self.peek()
        return k == "punct" and v == p

    def at_ident(self, word: str) -> bool:
        k, v, *_ = self.peek()
        return k == "ident" and v == word

    # -- value/block plumbing --

    def new_val(self) -> int:
        v = self.next_val
        self.next_val += 1
        return v

    def new_block(self) -> Block:
        b = Block(bid=len(self.blocks))
        self.blocks.append(b)
        return b

    def append(self, opcode: str, dst, args, **meta) -> int | None:
        self.cur.instrs.append(Instruction(opcode, dst, tuple(args), dict(meta)))
        return dst

    def emit_const(self, value) -> int:
        dst = self.new_val()
        self.append("const", dst, (value,))
        return dst

    # -- name resolution --

    def lookup(self, name: str, tok) -> tuple[int, str]:
        for scope in reversed(self.scopes):
            if name in scope:
                return scope[name]
        if name in self.param_ids:
            return self.param_ids[name], self.param_types[name]
        self.error(f"use of undefined name {name!r}", tok)

    def define_local(self, name: str, vid: int, type_: str, tok):
        if name in self.param_ids:
            self.error(f"cannot reassign parameter {name!r}", tok)
        for scope in self.scopes:
            if name in scope:
                self.error(f"{name!r} already assigned (locals are single-assignment)", tok)
        self.scopes[-1][name] = (vid, type_)

    # -- declarations --

    def parse_kernel(self) -> KernelIR:
        self.expect_ident("kernel")
        kernel_id = self.expect_ident()
        self.expect_punct("{")
        while self.peek()[0] == "ident" and self.peek()[1] in ("input", "attr", "output"):
            self.parse_decl()
        if not self.blocks:
            self.cur = self.new_block()
        self.prologue()
        self.scopes.append({})
        regions = self.parse_stmts(end="}")
        self.expect_punct("}")
        if self.peek()[0] != "eof":
            self.error("trailing content after kernel body")
        if self.cur.terminator is None:
            self.cur.terminator = ("ret",)
        self.check_terminators()
        return KernelIR(kernel_id, self.params, self.outputs, self.blocks, regions)

    def parse_decl(self):
        kind = self.next()[1]
        name_tok = self.peek()
        name = self.expect_ident()
        self.expect_punct(":")
        dtype, type_str, entity = self.parse_type()
        self.expect_punct(";")
        if kind == "output":
            if any(o[0] == name for o in self.outputs):
                self.error(f"duplicate output {name!r}", name_tok)
            self.outputs.append((name, dtype))
            return
        if name in self.param_ids:
            self.error(f"duplicate parameter {name!r}", name_tok)
        if kind == "attr":
            if dtype not in _ATTR_TYPES.values():
                self.error("attrs must have scalar type", name_tok)
            decl = ParamDecl(name, "attr", dtype, "scalar")
        else:
            if dtype is DType.DT_RESOURCE:
                decl = ParamDecl(name, "input", dtype, "resource", entity=entity)
            elif dtype.is_tensor:
                decl = ParamDecl(name, "input", dtype, "tensor")
            else:
                self.error("inputs must be tensor or resource typed", name_tok)
        self.params.append(decl)
        self.param_ids[name] = -1  # assigned in prologue
        self.param_types[name] = type_str

    def parse_type(self):
        tok = self.peek()
        word = self.expect_ident()
        if word == "tensor":
            self.expect_punct("<")
            elem = self.expect_ident()
            self.expect_punct(">")
            if elem not in _TENSOR_ELEMS:
                self.error(f"unknown tensor element type {elem!r}", tok)
            return _TENSOR_ELEMS[elem], f"tensor:{elem}", None
        if word == "resource":
            self.expect_punct("<")
            entity = self.expect_ident()
            self.expect_punct(">")
            return DType.DT_RESOURCE, f"resource:{entity}", entity
        if word in _ATTR_TYPES:
            return _ATTR_TYPES[word], {"int": "int", "float": "float", "string": "str", "bool": "bool"}[word], None
        self.error(f"unknown type {word!r}", tok)

    def prologue(self):
        """Fetch every declared parameter up front; these are the taint seeds."""
        idx = 0
        for p in self.params:
            vid = self.new_val()
            if p.role == "input":
                self.append("get_input", vid, (idx,), name=p.name)
                idx += 1
            else:
                self.append("get_attr", vid, (p.name,))
            self.param_ids[p.name] = vid
        self.input_count = idx

    # -- statements --

    def parse_stmts(self, end: str) -> list:
        regions = []
        while not self.at_punct(end):
            if self.peek()[0] == "eof":
                self.error(f"expected {end!r} before end of input")
            regions.extend(self.parse_stmt())
        return regions

    def parse_stmt(self) -> list:
        k, v, *_ = self.peek()
        if k == "ident" and v == "require":
            return [self.parse_require()]
        if k == "ident" and v == "if":
            return [self.parse_if()]
        if k == "ident" and v == "for":
            return [self.parse_for()]
        if k == "ident" and v == "emit":
            self.parse_emit()
            return []
        if k == "ident" and v == "call":
            self.parse_call_expr()
            self.expect_punct(";")
            return []
        if k == "ident":
            self.parse_assignment()
            return []
        self.error("expected a statement")

    def parse_require(self) -> RequireRegion:
        self.next()
        cond_tok = self.peek()
        conds = [(self.parse_expr(), cond_tok)]
        self.expect_punct(",")
        msg_tok = self.peek()
        if msg_tok[0] != "str":
            self.error("require needs a message string")
        msg = self.next()[1]
        self.expect_punct(";")
        cid, ctype = conds[0][0]
        if ctype != "bool":
            self.error("require condition must be boolean", conds[0][1])
        src = self.cur
        fail = self.new_block()
        fail.terminator = ("require_fail", msg)
        cont = self.new_block()
        src.terminator = ("br", cid, cont.bid, fail.bid, "require")
        region = RequireRegion(cid, src.bid, fail.bid, cont.bid, msg)
        self.cur = cont
        return region

    def parse_if(self) -> IfRegion:
        self.next()
        guard_tok = self.peek()
        gid, gtype = self.parse_expr()
        if gtype != "bool":
            self.error("if condition must be boolean", guard_tok)
        src = self.cur
        region = IfRegion(gid, src.bid)
        then_blk = self.new_block()
        region.then_block = then_blk.bid
        self.cur = then_blk
        self.expect_punct("{")
        self.scopes.append({})
        region.then_regions = self.parse_stmts(end="}")
        self.scopes.pop()
        self.expect_punct("}")
        then_end = self.cur
        else_end = None
        if self.at_ident("else"):
            self.next()
            else_blk = self.new_block()
            region.else_block = else_blk.bid
            self.cur = else_blk
            self.expect_punct("{")
            self.scopes.append({})
            region.else_regions = self.parse_stmts(end="}")
            self.scopes.pop()
            self.expect_punct("}")
            else_end = self.cur
        join = self.new_block()
        region.join_block = join.bid
        src.terminator = ("br", gid, region.then_block, region.else_block if region.else_block is not None else join.bid, "if")
        if then_end.terminator is None:
            then_end.terminator = ("jmp", join.bid)
        if else_end is not None and else_end.terminator is None:
            else_end.terminator = ("jmp", join.bid)
        self.cur = join
        return region

    def parse_for(self) -> LoopRegion:
        self.next()
        var_tok = self.peek()
        var = self.expect_ident()
        self.expect_ident("in")
        lo_tok = self.peek()
        lo_id, lo_t = self.parse_expr()
        self.expect_punct("..")
        hi_tok = self.peek()
        hi_id, hi_t = self.parse_expr()
        if lo_t != "int":
            self.error("loop lower bound must be int", lo_tok)
        if hi_t != "int":
            self.error("loop upper bound must be int", hi_tok)
        # counter slot: i = lo + 0; the latch re-binds the same id
        zero = self.emit_const(0)
        one = self.emit_const(1)
        var_id = self.new_val()
        self.append("bin", var_id, ("+", lo_id, zero), loop_var=True)
        src = self.cur
        header = self.new_block()
        src.terminator = ("jmp", header.bid)
        body = self.new_block()
        self.cur = body
        self.expect_punct("{")
        self.scopes.append({var: (var_id, "int")})
        body_regions = self.parse_stmts(end="}")
        self.scopes.pop()
        self.expect_punct("}")
        last_body = self.cur
        last_body.instrs.append(Instruction("bin", var_id, ("+", var_id, one), {"loop_latch": True}))
        last_body.terminator = ("jmp", header.bid)
        exit_blk = self.new_block()
        cond_id = self.new_val()
        header.instrs.append(Instruction("cmp", cond_id, ("<", var_id, hi_id), {}))
        header.terminator = ("br", cond_id, body.bid, exit_blk.bid, "loop")
        self.cur = exit_blk
        return LoopRegion(var_id, lo_id, hi_id, header.bid, body.bid, exit_blk.bid, body_regions)

    def parse_emit(self):
        self.next()
        name_tok = self.peek()
        name = self.expect_ident()
        if not any(o[0] == name for o in self.outputs):
            self.error(f"emit target {name!r} is not a declared output", name_tok)
        self.expect_punct("=")
        vid, _ = self.parse_expr()
        self.expect_punct(";")
        self.append("emit", None, (name, vid))

    def parse_assignment(self):
        name_tok = self.peek()
        name = self.expect_ident()
        if self.at_punct("["):
            # tensor store: name[indices] = expr;
            base_id, base_t = self.lookup(name, name_tok)
            if not base_t.startswith("tensor:"):
                self.error(f"cannot index non-tensor {name!r}", name_tok)
            idx_ids = self.parse_index_list()
            self.expect_punct("=")
            val_tok = self.peek()
            vid, vt = self.parse_expr()
            elem_t = {"i64": "int", "f32": "float", "str": "str", "bool": "bool"}[base_t.split(":")[1]]
            if vt != elem_t:
                self.error(f"stored value must be {elem_t}, got {vt}", val_tok)
            self.expect_punct(";")
            self.append("tstore", None, (base_id, tuple(idx_ids), vid))
            return
        self.expect_punct("=")
        vid, vt = self.parse_expr()
        self.expect_punct(";")
        self.define_local(name, vid, vt, name_tok)

    def parse_index_list(self) -> list[int]:
        self.expect_punct("[")
        ids = []
        if not self.at_punct("]"):
            while True:
                tok = self.peek()
                vid, vt = self.parse_expr()
                if vt != "int":
                    self.error("tensor indices must be int", tok)
                ids.append(vid)
                if self.at_punct(","):
                    self.next()
                    continue
                break
        self.expect_punct("]")
        return ids

    def parse_call_expr(self) -> tuple[int, str]:
        self.expect_ident("call")
        verb_tok = self.peek()
        verb = self.expect_ident()
        if verb not in RESOURCE_VERBS:
            self.error(f"unknown resource verb {verb!r}", verb_tok)
        self.expect_punct("(")
        entity = self.expect_ident()
        arg_ids = []
        first_is_handle = True
        while self.at_punct(","):
            self.next()
            tok = self.peek()
            vid, vt = self.parse_expr()
            if first_is_handle:
                if vt != f"resource:{entity}":
                    self.error(f"first argument of {verb} must be a resource<{entity}> handle", tok)
                first_is_handle = False
            arg_ids.append(vid)
        self.expect_punct(")")
        if verb == "New":
            if arg_ids:
                self.error("New takes no handle argument", verb_tok)
        elif not arg_ids:
            self.error(f"{verb} needs a handle argument", verb_tok)
        dst = self.new_val()
        self.append("res_call", dst, (verb, entity, tuple(arg_ids)))
        rtype = {"New": f"resource:{entity}", "Pop": "opaque"}.get(verb, "int")
        return dst, rtype

    # -- expressions (returns (value_id, type)) --

    def parse_expr(self):
        return self.parse_or()

    def parse_or(self):
        left = self.parse_and()
        while self.at_ident("or"):
            tok = self.next()
            right = self.parse_and()
            left = self._logic("or", left, right, tok)
        return left

    def parse_and(self):
        left = self.parse_not()
        while self.at_ident("and"):
            tok = self.next()
            right = self.parse_not()
            left = self._logic("and", left, right, tok)
        return left

    def _logic(self, op, left, right, tok):
        if left[1] != "bool" or right[1] != "bool":
            self.error(f"{op} needs boolean operands", tok)
        dst = self.new_val()
        self.append("logic", dst, (op, left[0], right[0]))
        return dst, "bool"

    def parse_not(self):
        if self.at_ident("not"):
            tok = self.next()
            inner = self.parse_not()
            if inner[1] != "bool":
                self.error("not needs a boolean operand", tok)
            dst = self.new_val()
            self.append("logic", dst, ("not", inner[0], None))
            return dst, "bool"
        return self.parse_cmp()

    def parse_cmp(self):
        left = self.parse_add()
        k, v, *_ = self.peek()
        if k == "punct" and v in ("==", "!=", "<", "<=", ">", ">="):
            tok = self.next()
            right = self.parse_add()
            lt, rt = left[1], right[1]
            if lt != rt:
                self.error(f"cannot compare {lt} with {rt}", tok)
            if lt not in ("int", "float", "str", "bool"):
                self.error(f"cannot compare values of type {lt}", tok)
            if v not in ("==", "!=") and lt in ("str", "bool"):
                self.error(f"ordering comparison not defined for {lt}", tok)
            dst = self.new_val()
            self.append("cmp", dst, (v, left[0], right[0]))
            return dst, "bool"
        return left

    def parse_add(self):
        left = self.parse_mul()
        while True:
            k, v, *_ = self.peek()
            if k == "punct" and v in ("+", "-"):
                tok = self.next()
                right = self.parse_mul()
                left = self._arith(v, left, right, tok)
                continue
            return left

    def parse_mul(self):
        left = self.parse_unary()
        while True:
            k, v, *_ = self.peek()
            if k == "punct" and v in ("*", "/", "%"):
                tok = self.next()
                right = self.parse_unary()
                left = self._arith(v, left, right, tok)
                continue
            return left

    def _arith(self, op, left, right, tok):
        lt, rt = left[1], right[1]
        if lt != rt or lt not in ("int", "float"):
            self.error(f"arithmetic needs matching numeric operands, got {lt} and {rt}", tok)
        dst = self.new_val()
        self.append("bin", dst, (op, left[0], right[0]))
        return dst, lt

    def parse_unary(self):
        if self.at_punct("-"):
            tok = self.next()
            inner = self.parse_unary()
            if inner[1] not in ("int", "float"):
                self.error("unary minus needs a numeric operand", tok)
            zero = self.emit_const(0 if inner[1] == "int" else 0.0)
            dst = self.new_val()
            self.append("bin", dst, ("-", zero, inner[0]))
            return dst, inner[1]
        return self.parse_primary()

    def parse_primary(self):
        k, v, line, col = self.peek()
        if k == "int":
            self.next()
            return self.emit_const(v), "int"
        if k == "float":
            self.next()
            return self.emit_const(v), "float"
        if k == "str":
            self.next()
            return self.emit_const(v), "str"
        if k == "punct" and v == "(":
            self.next()
            inner = self.parse_expr()
            self.expect_punct(")")
            return inner
        if k != "ident":
            self.error("expected an expression")
        if v in ("true", "false"):
            self.next()
            return self.emit_const(v == "true"), "bool"
        if v == "call":
            return self.parse_call_expr()
        if v in ("rank", "dim", "size"):
            return self.parse_shape_fn()
        tok = self.next()
        vid, vt = self.lookup(v, tok)
        if self.at_punct("["):
            if not vt.startswith("tensor:"):
                self.error(f"cannot index value of type {vt}", tok)
            idx_ids = self.parse_index_list()
            dst = self.new_val()
            self.append("tload", dst, (vid, tuple(idx_ids)))
            elem_t = {"i64": "int", "f32": "float", "str": "str", "bool": "bool"}[vt.split(":")[1]]
            return dst, elem_t
        return vid, vt

    def parse_shape_fn(self):
        fn_tok = self.peek()
        fn = self.next()[1]
        self.expect_punct("(")
        arg_tok = self.peek()
        vid, vt = self.parse_expr()
        if not vt.startswith("tensor:"):
            self.error(f"{fn}() needs a tensor argument", arg_tok)
        if fn == "dim":
            self.expect_punct(",")
            axis_tok = self.peek()
            axis_id, axis_t = self.parse_expr()
            if axis_t != "int":
                self.error("dim() axis must be int", axis_tok)
            self.expect_punct(")")
            dst = self.new_val()
            self.append("dim", dst, (vid, axis_id))
            return dst, "int"
        self.expect_punct(")")
        dst = self.new_val()
        self.append(fn, dst, (vid,))
        return dst, "int"

    def check_terminators(self):
        for b in self.blocks:
            if b.terminator is None:
                raise KernelParseError(f"block {b.bid} has no terminator", 0, 0)
            if b.terminator[0] == "require_fail" and b.instrs:
                raise KernelParseError(f"require_fail block {b.bid} must be empty", 0, 0)


def parse_kernel(source: str) -> KernelIR:
    lowerer = _Lowerer(tokenize(source))
    return lowerer.parse_kernel()


def def_map(kernel: KernelIR) -> dict[int, Instruction]:
    """value id -> defining instruction.  Loop latch re-definitions are skipped
    so the map reflects each value's originating definition."""
    defs: dict[int, Instruction] = {}
    for block in kernel.blocks:
        for instr in block.instrs:
            if instr.dst is None:
                continue
            if instr.meta.get("loop_latch"):
                continue
            if instr.dst not in defs:
                defs[instr.dst] = instr
    return defs
