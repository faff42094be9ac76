"""A small textual language for preparation/transformation/effect circuits.

Grammar (ASCII, one statement per line, '#' starts a comment):

    system NAME DIM
    state NAME : SYS[,SYS...] = maxmix | pure [re,im; ...] | file "path"
    channel NAME : SYS[,SYS...] -> SYS[,SYS...] = id | kraus file "path"
    effect NAME : SYS[,SYS...] = total | proj [re,im; ...] | file "path"
    instrument NAME : SYS[,SYS...] -> SYS[,SYS...] = file "path"
    run NAME = EXPR

    EXPR    := PAR { ';' PAR }          sequential, left box applied first
    PAR     := PRIMARY { '||' PRIMARY } parallel, top wire first
    PRIMARY := NAME | NAME '[' INT ']' | '(' EXPR ')'

Wires are ordered, matched by system name (hence dimension) at every
sequential junction. A run expression must consume no open input wires;
it evaluates to a probability when every wire ends in an effect, and to
a state otherwise.

File payloads are matrix JSON for states/effects, {"kraus": [matrix...]}
for channels, and {"outcomes": [{"label", "kraus": [...]}, ...]} for
instruments; dimensions always come from the declaration. Relative paths
resolve against the directory passed to the evaluator.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field

import numpy as np

from .linalg import LinalgError, as_matrix
from .ops import (
    Effect,
    Instrument,
    QuantumOperation,
    State,
    System,
    TRIVIAL,
    apply,
    born_probability,
    compose_par,
    compose_seq,
    effect_as_measurement,
    state_as_preparation,
    tensor_system,
    total_channel,
    validate_effect,
    validate_instrument,
    validate_operation,
    validate_state,
)
from . import serialize


class CircuitError(ValueError):
    pass


class CircuitSyntaxError(CircuitError):
    pass


class CircuitNameError(CircuitError):
    pass


class CircuitTypeError(CircuitError):
    pass


class CircuitEvalError(CircuitError):
    pass


KEYWORDS = {
    "system",
    "state",
    "channel",
    "effect",
    "instrument",
    "run",
    "maxmix",
    "pure",
    "file",
    "id",
    "kraus",
    "total",
    "proj",
}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t]+)
  | (?P<comment>\#[^\n]*)
  | (?P<arrow>->)
  | (?P<parpar>\|\|)
  | (?P<number>-?\d+(\.\d*)?([eE][+-]?\d+)?|-?\.\d+([eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>"[^"\n]*")
  | (?P<punct>[:,;=()\[\]])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    for lineno, line in enumerate(source.split("\n"), start=1):
        pos = 0
        while pos < len(line):
            m = _TOKEN_RE.match(line, pos)
            if m is None:
                raise CircuitSyntaxError(
                    f"line {lineno}, col {pos + 1}: unexpected character {line[pos]!r}"
                )
            kind = m.lastgroup
            text = m.group()
            if kind not in ("ws", "comment"):
                if kind == "ident" and text in KEYWORDS:
                    kind = "keyword"
                tokens.append(Token(kind, text, lineno, m.start() + 1))
            pos = m.end()
        tokens.append(Token("newline", "", lineno, len(line) + 1))
    tokens.append(Token("eof", "", source.count("\n") + 2, 1))
    return tokens


@dataclass(frozen=True)
class Span:
    line: int
    col: int

    def __str__(self):
        return f"line {self.line}, col {self.col}"


@dataclass(frozen=True)
class SystemDecl:
    name: str
    dim: int
    span: Span = field(compare=False)


@dataclass(frozen=True)
class StateDecl:
    name: str
    systems: tuple
    init: tuple  # ("maxmix",) | ("pure", values) | ("file", path)
    span: Span = field(compare=False)


@dataclass(frozen=True)
class ChannelDecl:
    name: str
    inputs: tuple
    outputs: tuple
    init: tuple  # ("id",) | ("kraus-file", path)
    span: Span = field(compare=False)


@dataclass(frozen=True)
class EffectDecl:
    name: str
    systems: tuple
    init: tuple  # ("total",) | ("proj", values) | ("file", path)
    span: Span = field(compare=False)


@dataclass(frozen=True)
class InstrumentDecl:
    name: str
    inputs: tuple
    outputs: tuple
    path: str
    span: Span = field(compare=False)


@dataclass(frozen=True)
class Ref:
    name: str
    outcome: int | None
    span: Span = field(compare=False)


@dataclass(frozen=True)
class Seq:
    left: object
    right: object
    span: Span = field(compare=False)


@dataclass(frozen=True)
class Par:
    top: object
    bottom: object
    span: Span = field(compare=False)


@dataclass(frozen=True)
class RunDecl:
    name: str
    expr: object
    span: Span = field(compare=False)


@dataclass(eq=False)
class CircuitProgram:
    statements: list
    systems: dict
    states: dict
    channels: dict
    effects: dict
    instruments: dict
    runs: dict

    def declaration(self, name: str):
        for table in (self.states, self.channels, self.effects, self.instruments):
            if name in table:
                return table[name]
        return None


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def fail(self, message: str, tok: Token | None = None):
        tok = tok or self.peek()
        raise CircuitSyntaxError(f"line {tok.line}, col {tok.col}: {message}")

    def expect(self, kind: str, text: str | None = None) -> Token:
        tok = self.peek()
        if tok.kind != kind or (text is not None and tok.text != text):
            want = text if text is not None else kind
            got = tok.text if tok.text else tok.kind
            self.fail(f"expected {want!r}, found {got!r}")
        return self.advance()

    def skip_newlines(self):
        while self.peek().kind == "newline":
            self.advance()

    def parse_program(self) -> CircuitProgram:
        statements = []
        self.skip_newlines()
        while self.peek().kind != "eof":
            statements.append(self.parse_statement())
            self.skip_newlines()
        return _resolve(statements)

    def parse_statement(self):
        tok = self.peek()
        if tok.kind != "keyword":
            self.fail(f"expected a declaration keyword, found {tok.text!r}")
        if tok.text == "system":
            return self.parse_system()
        if tok.text == "state":
            return self.parse_state()
        if tok.text == "channel":
            return self.parse_channel()
        if tok.text == "effect":
            return self.parse_effect()
        if tok.text == "instrument":
            return self.parse_instrument()
        if tok.text == "run":
            return self.parse_run()
        self.fail(f"unknown keyword {tok.text!r} at statement start")

    def parse_name(self) -> Token:
        tok = self.peek()
        if tok.kind != "ident":
            self.fail(f"expected an identifier, found {tok.text or tok.kind!r}")
        return self.advance()

    def parse_system(self):
        kw = self.expect("keyword", "system")
        name = self.parse_name()
        dim_tok = self.peek()
        if dim_tok.kind != "number" or not dim_tok.text.isdigit():
            self.fail("expected a positive integer dimension")
        self.advance()
        dim = int(dim_tok.text)
        if dim < 1:
            self.fail("system dimension must be >= 1", dim_tok)
        self.expect("newline")
        return SystemDecl(name.text, dim, Span(kw.line, kw.col))

    def parse_syslist(self) -> tuple:
        names = [self.parse_name().text]
        while self.peek().kind == "punct" and self.peek().text == ",":
            self.advance()
            names.append(self.parse_name().text)
        return tuple(names)

    def parse_vector(self) -> tuple:
        self.expect("punct", "[")
        values = []
        while True:
            re_tok = self.peek()
            if re_tok.kind != "number":
                self.fail("expected a number in vector literal")
            self.advance()
            self.expect("punct", ",")
            im_tok = self.peek()
            if im_tok.kind != "number":
                self.fail("expected an imaginary part in vector literal")
            self.advance()
            values.append((float(re_tok.text), float(im_tok.text)))
            tok = self.peek()
            if tok.kind == "punct" and tok.text == ";":
                self.advance()
                continue
            break
        self.expect("punct", "]")
        return tuple(values)

    def parse_state(self):
        kw = self.expect("keyword", "state")
        name = self.parse_name()
        self.expect("punct", ":")
        systems = self.parse_syslist()
        self.expect("punct", "=")
        tok = self.peek()
        if tok.kind == "keyword" and tok.text == "maxmix":
            self.advance()
            init = ("maxmix",)
        elif tok.kind == "keyword" and tok.text == "pure":
            self.advance()
            init = ("pure", self.parse_vector())
        elif tok.kind == "keyword" and tok.text == "file":
            self.advance()
            init = ("file", self.expect("string").text[1:-1])
        else:
            self.fail(f"unknown state initializer {tok.text!r}")
        self.expect("newline")
        return StateDecl(name.text, systems, init, Span(kw.line, kw.col))

    def parse_channel(self):
        kw = self.expect("keyword", "channel")
        name = self.parse_name()
        self.expect("punct", ":")
        ins = self.parse_syslist()
        self.expect("arrow")
        outs = self.parse_syslist()
        self.expect("punct", "=")
        tok = self.peek()
        if tok.kind == "keyword" and tok.text == "id":
            self.advance()
            init = ("id",)
        elif tok.kind == "keyword" and tok.text == "kraus":
            self.advance()
            self.expect("keyword", "file")
            init = ("kraus-file", self.expect("string").text[1:-1])
        else:
            self.fail(f"unknown channel initializer {tok.text!r}")
        self.expect("newline")
        return ChannelDecl(name.text, ins, outs, init, Span(kw.line, kw.col))

    def parse_effect(self):
        kw = self.expect("keyword", "effect")
        name = self.parse_name()
        self.expect("punct", ":")
        systems = self.parse_syslist()
        self.expect("punct", "=")
        tok = self.peek()
        if tok.kind == "keyword" and tok.text == "total":
            self.advance()
            init = ("total",)
        elif tok.kind == "keyword" and tok.text == "proj":
            self.advance()
            init = ("proj", self.parse_vector())
        elif tok.kind == "keyword" and tok.text == "file":
            self.advance()
            init = ("file", self.expect("string").text[1:-1])
        else:
            self.fail(f"unknown effect initializer {tok.text!r}")
        self.expect("newline")
        return EffectDecl(name.text, systems, init, Span(kw.line, kw.col))

    def parse_instrument(self):
        kw = self.expect("keyword", "instrument")
        name = self.parse_name()
        self.expect("punct", ":")
        ins = self.parse_syslist()
        self.expect("arrow")
        outs = self.parse_syslist()
        self.expect("punct", "=")
        self.expect("keyword", "file")
        path = self.expect("string").text[1:-1]
        self.expect("newline")
        return InstrumentDecl(name.text, ins, outs, path, Span(kw.line, kw.col))

    def parse_run(self):
        kw = self.expect("keyword", "run")
        name = self.parse_name()
        self.expect("punct", "=")
        expr = self.parse_expr()
        self.expect("newline")
        return RunDecl(name.text, expr, Span(kw.line, kw.col))

    def parse_expr(self):
        node = self.parse_par()
        while self.peek().kind == "punct" and self.peek().text == ";":
            tok = self.advance()
            right = self.parse_par()
            node = Seq(node, right, Span(tok.line, tok.col))
        return node

    def parse_par(self):
        node = self.parse_primary()
        while self.peek().kind == "parpar":
            tok = self.advance()
            bottom = self.parse_primary()
            node = Par(node, bottom, Span(tok.line, tok.col))
        return node

    def parse_primary(self):
        tok = self.peek()
        if tok.kind == "punct" and tok.text == "(":
            self.advance()
            node = self.parse_expr()
            self.expect("punct", ")")
            return node
        if tok.kind == "ident":
            self.advance()
            outcome = None
            nxt = self.peek()
            if nxt.kind == "punct" and nxt.text == "[":
                self.advance()
                idx_tok = self.peek()
                if idx_tok.kind != "number" or not idx_tok.text.isdigit():
                    self.fail("expected a nonnegative outcome index")
                self.advance()
                outcome = int(idx_tok.text)
                self.expect("punct", "]")
            return Ref(tok.text, outcome, Span(tok.line, tok.col))
        self.fail(f"expected an identifier or '(', found {tok.text or tok.kind!r}")


def _resolve(statements: list) -> CircuitProgram:
    """Build symbol tables, rejecting duplicates and use-before-declaration."""
    systems: dict = {}
    states: dict = {}
    channels: dict = {}
    effects: dict = {}
    instruments: dict = {}
    runs: dict = {}

    def check_fresh(name: str, span: Span):
        for table in (systems, states, channels, effects, instruments, runs):
            if name in table:
                raise CircuitNameError(f"{span}: duplicate identifier {name!r}")

    def check_systems(names: tuple, span: Span):
        for n in names:
            if n not in systems:
                raise CircuitNameError(f"{span}: unknown system {n!r}")

    def check_expr(expr):
        if isinstance(expr, Ref):
            decl = None
            for table in (states, channels, effects, instruments):
                if expr.name in table:
                    decl = table[expr.name]
            if decl is None:
                raise CircuitNameError(f"{expr.span}: unknown identifier {expr.name!r}")
            if expr.outcome is not None and not isinstance(decl, InstrumentDecl):
                raise CircuitNameError(
                    f"{expr.span}: outcome selector on non-instrument {expr.name!r}"
                )
        elif isinstance(expr, Seq):
            check_expr(expr.left)
            check_expr(expr.right)
        elif isinstance(expr, Par):
            check_expr(expr.top)
            check_expr(expr.bottom)

    for st in statements:
        if isinstance(st, SystemDecl):
            check_fresh(st.name, st.span)
            systems[st.name] = st
        elif isinstance(st, StateDecl):
            check_fresh(st.name, st.span)
            check_systems(st.systems, st.span)
            states[st.name] = st
        elif isinstance(st, ChannelDecl):
            check_fresh(st.name, st.span)
            check_systems(st.inputs + st.outputs, st.span)
            channels[st.name] = st
        elif isinstance(st, EffectDecl):
            check_fresh(st.name, st.span)
            check_systems(st.systems, st.span)
            effects[st.name] = st
        elif isinstance(st, InstrumentDecl):
            check_fresh(st.name, st.span)
            check_systems(st.inputs + st.outputs, st.span)
            instruments[st.name] = st
        elif isinstance(st, RunDecl):
            check_fresh(st.name, st.span)
            check_expr(st.expr)
            runs[st.name] = st
    return CircuitProgram(
        statements=statements,
        systems=systems,
        states=states,
        channels=channels,
        effects=effects,
        instruments=instruments,
        runs=runs,
    )


def parse(source: str) -> CircuitProgram:
    return _Parser(tokenize(source)).parse_program()


# ---------------------------------------------------------------------------
# typechecking


def _wires(program: CircuitProgram, expr) -> tuple:
    """(input wire names, output wire names) of an expression."""
    if isinstance(expr, Ref):
        decl = program.declaration(expr.name)
        if isinstance(decl, StateDecl):
            return (), decl.systems
        if isinstance(decl, ChannelDecl):
            return decl.inputs, decl.outputs
        if isinstance(decl, EffectDecl):
            return decl.systems, ()
        if isinstance(decl, InstrumentDecl):
            return decl.inputs, decl.outputs
        raise CircuitNameError(f"{expr.span}: unknown identifier {expr.name!r}")
    if isinstance(expr, Seq):
        l_in, l_out = _wires(program, expr.left)
        r_in, r_out = _wires(program, expr.right)
        if l_out != r_in:
            raise CircuitTypeError(
                f"{expr.span}: wire mismatch at ';': left yields "
                f"[{', '.join(l_out) or '-'}], right expects [{', '.join(r_in) or '-'}]"
            )
        return l_in, r_out
    if isinstance(expr, Par):
        t_in, t_out = _wires(program, expr.top)
        b_in, b_out = _wires(program, expr.bottom)
        return t_in + b_in, t_out + b_out
    raise CircuitError(f"unknown expression node {type(expr).__name__}")


def typecheck(program: CircuitProgram) -> list[CircuitTypeError]:
    """Collect wire errors for every run; an empty list means well-typed."""
    errors: list[CircuitTypeError] = []
    for run in program.runs.values():
        try:
            ins, _outs = _wires(program, run.expr)
            if ins:
                raise CircuitTypeError(
                    f"{run.span}: run {run.name!r} leaves input wires "
                    f"[{', '.join(ins)}] dangling (nothing prepares them)"
                )
        except CircuitTypeError as err:
            errors.append(err)
    return errors


# ---------------------------------------------------------------------------
# evaluation


@dataclass(eq=False)
class RunResult:
    kind: str  # "probability" | "state"
    probability: float | None = None
    state: State | None = None


class _Evaluator:
    def __init__(self, program: CircuitProgram, base_dir: str = ".", tol: float = 1e-9):
        self.program = program
        self.base_dir = base_dir
        self.tol = tol
        self._instrument_cache: dict = {}

    def system_of(self, name: str) -> System:
        decl = self.program.systems[name]
        return System(decl.name, decl.dim)

    def fold_systems(self, names: tuple) -> System:
        if not names:
            return TRIVIAL
        return tensor_system(*(self.system_of(n) for n in names))

    def dims_product(self, names: tuple) -> int:
        return int(np.prod([self.program.systems[n].dim for n in names])) if names else 1

    def _path(self, rel: str) -> str:
        return rel if os.path.isabs(rel) else os.path.join(self.base_dir, rel)

    def _load_matrix(self, rel: str, span: Span) -> np.ndarray:
        path = self._path(rel)
        try:
            return serialize.matrix_from_json(serialize.load(path))
        except (OSError, ValueError) as exc:
            raise CircuitEvalError(f"{span}: cannot load matrix file {rel!r}: {exc}")

    def _vector(self, values: tuple, dim: int, span: Span) -> np.ndarray:
        v = np.array([complex(re_, im_) for re_, im_ in values])
        if v.size != dim:
            raise CircuitEvalError(
                f"{span}: vector has {v.size} components, wires have total dim {dim}"
            )
        norm = np.linalg.norm(v)
        if abs(norm - 1.0) > 1e-9:
            raise CircuitEvalError(f"{span}: vector is not normalized (norm {norm:.12f})")
        return v

    def leaf_state(self, decl: StateDecl) -> QuantumOperation:
        sys = self.fold_systems(decl.systems)
        dim = sys.dim
        if decl.init[0] == "maxmix":
            m = np.eye(dim, dtype=complex) / dim
        elif decl.init[0] == "pure":
            v = self._vector(decl.init[1], dim, decl.span)
            m = np.outer(v, np.conj(v))
        else:
            m = self._load_matrix(decl.init[1], decl.span)
            if m.shape != (dim, dim):
                raise CircuitEvalError(
                    f"{decl.span}: state matrix is {m.shape}, declared dims give {dim}"
                )
        state = State(sys, m)
        try:
            validate_state(state, self.tol)
        except LinalgError as exc:
            raise CircuitEvalError(f"{decl.span}: invalid state {decl.name!r}: {exc}")
        return state_as_preparation(state)

    def leaf_channel(self, decl: ChannelDecl) -> QuantumOperation:
        sys_in = self.fold_systems(decl.inputs)
        sys_out = self.fold_systems(decl.outputs)
        if decl.init[0] == "id":
            if sys_in.dim != sys_out.dim:
                raise CircuitEvalError(
                    f"{decl.span}: identity channel needs equal dims, "
                    f"got {sys_in.dim} -> {sys_out.dim}"
                )
            return QuantumOperation(sys_in, sys_out, (np.eye(sys_in.dim, dtype=complex),))
        path = self._path(decl.init[1])
        try:
            ks = serialize.kraus_list_from_json(serialize.load(path))
        except (OSError, ValueError) as exc:
            raise CircuitEvalError(
                f"{decl.span}: cannot load kraus file {decl.init[1]!r}: {exc}"
            )
        op = QuantumOperation(sys_in, sys_out, tuple(as_matrix(k) for k in ks))
        try:
            validate_operation(op, self.tol)
        except LinalgError as exc:
            raise CircuitEvalError(f"{decl.span}: invalid channel {decl.name!r}: {exc}")
        return op

    def leaf_effect(self, decl: EffectDecl) -> QuantumOperation:
        sys = self.fold_systems(decl.systems)
        dim = sys.dim
        if decl.init[0] == "total":
            m = np.eye(dim, dtype=complex)
        elif decl.init[0] == "proj":
            v = self._vector(decl.init[1], dim, decl.span)
            m = np.outer(v, np.conj(v))
        else:
            m = self._load_matrix(decl.init[1], decl.span)
            if m.shape != (dim, dim):
                raise CircuitEvalError(
                    f"{decl.span}: effect matrix is {m.shape}, declared dims give {dim}"
                )
        eff = Effect(sys, m)
        try:
            validate_effect(eff, self.tol)
        except LinalgError as exc:
            raise CircuitEvalError(f"{decl.span}: invalid effect {decl.name!r}: {exc}")
        return effect_as_measurement(eff)

    def leaf_instrument(self, decl: InstrumentDecl) -> Instrument:
        if decl.name in self._instrument_cache:
            return self._instrument_cache[decl.name]
        sys_in = self.fold_systems(decl.inputs)
        sys_out = self.fold_systems(decl.outputs)
        path = self._path(decl.path)
        try:
            payload = serialize.load(path)
            outcomes = payload["outcomes"]
            ops, labels = [], []
            for i, entry in enumerate(outcomes):
                labels.append(str(entry.get("label", i)))
                ks = tuple(serialize.matrix_from_json(k) for k in entry["kraus"])
                ops.append(QuantumOperation(sys_in, sys_out, ks))
            inst = Instrument(sys_in, sys_out, tuple(ops), tuple(labels))
            validate_instrument(inst, self.tol)
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise CircuitEvalError(
                f"{decl.span}: cannot load instrument {decl.name!r}: {exc}"
            )
        self._instrument_cache[decl.name] = inst
        return inst

    def eval_expr(self, expr) -> QuantumOperation:
        if isinstance(expr, Ref):
            decl = self.program.declaration(expr.name)
            if isinstance(decl, StateDecl):
                return self.leaf_state(decl)
            if isinstance(decl, ChannelDecl):
                return self.leaf_channel(decl)
            if isinstance(decl, EffectDecl):
                return self.leaf_effect(decl)
            if isinstance(decl, InstrumentDecl):
                inst = self.leaf_instrument(decl)
                if expr.outcome is None:
                    return total_channel(inst)
                if expr.outcome >= len(inst.operations):
                    raise CircuitEvalError(
                        f"{expr.span}: instrument {expr.name!r} has "
                        f"{len(inst.operations)} outcomes, index {expr.outcome} invalid"
                    )
                return inst.operations[expr.outcome]
            raise CircuitNameError(f"{expr.span}: unknown identifier {expr.name!r}")
        if isinstance(expr, Seq):
            left = self.eval_expr(expr.left)
            right = self.eval_expr(expr.right)
            return compose_seq(right, left)
        if isinstance(expr, Par):
            return compose_par(self.eval_expr(expr.top), self.eval_expr(expr.bottom))
        raise CircuitError(f"unknown expression node {type(expr).__name__}")


def evaluate(
    program: CircuitProgram,
    run_name: str,
    base_dir: str = ".",
    tol: float = 1e-9,
) -> RunResult:
    """Fold one run into a preparation-valued operation and apply the
    Born rule; effect-terminated runs give probabilities, open runs give
    the output state."""
    issues = typecheck(program)
    if issues:
        raise issues[0]
    if run_name not in program.runs:
        raise CircuitNameError(f"no run named {run_name!r}")
    run = program.runs[run_name]
    ev = _Evaluator(program, base_dir=base_dir, tol=tol)
    op = ev.eval_expr(run.expr)
    out_state = apply(op, State(TRIVIAL, np.array([[1.0 + 0j]])))
    _ins, outs = _wires(program, run.expr)
    if not outs:
        return RunResult(kind="probability", probability=born_probability(out_state))
    return RunResult(kind="state", state=out_state)


# ---------------------------------------------------------------------------
# printing (parse . print . parse is the identity on the AST)


def _format_vector(values: tuple) -> str:
    return "[" + "; ".join(f"{re_!r},{im_!r}" for re_, im_ in values) + "]"


def _format_expr(expr, parent: str = "") -> str:
    if isinstance(expr, Ref):
        return expr.name if expr.outcome is None else f"{expr.name}[{expr.outcome}]"
    if isinstance(expr, Seq):
        left = _format_expr(expr.left, "seq-left")
        right = _format_expr(expr.right, "seq-right")
        if isinstance(expr.right, Seq):
            right = f"({right})"
        text = f"{left} ; {right}"
        return f"({text})" if parent in ("par-top", "par-bottom") else text
    if isinstance(expr, Par):
        top = _format_expr(expr.top, "par-top")
        bottom = _format_expr(expr.bottom, "par-bottom")
        if isinstance(expr.bottom, Par):
            bottom = f"({bottom})"
        return f"{top} || {bottom}"
    raise CircuitError(f"unknown expression node {type(expr).__name__}")


def format_program(program: CircuitProgram) -> str:
    lines = []
    for st in program.statements:
        if isinstance(st, SystemDecl):
            lines.append(f"system {st.name} {st.dim}")
        elif isinstance(st, StateDecl):
            kind = st.init[0]
            if kind == "maxmix":
                rhs = "maxmix"
            elif kind == "pure":
                rhs = f"pure {_format_vector(st.init[1])}"
            else:
                rhs = f'file "{st.init[1]}"'
            lines.append(f"state {st.name} : {','.join(st.systems)} = {rhs}")
        elif isinstance(st, ChannelDecl):
            rhs = "id" if st.init[0] == "id" else f'kraus file "{st.init[1]}"'
            lines.append(
                f"channel {st.name} : {','.join(st.inputs)} -> "
                f"{','.join(st.outputs)} = {rhs}"
            )
        elif isinstance(st, EffectDecl):
            kind = st.init[0]
            if kind == "total":
                rhs = "total"
            elif kind == "proj":
                rhs = f"proj {_format_vector(st.init[1])}"
            else:
                rhs = f'file "{st.init[1]}"'
            lines.append(f"effect {st.name} : {','.join(st.systems)} = {rhs}")
        elif isinstance(st, InstrumentDecl):
            lines.append(
                f"instrument {st.name} : {','.join(st.inputs)} -> "
                f"{','.join(st.outputs)} = file \"{st.path}\""
            )
        elif isinstance(st, RunDecl):
            lines.append(f"run {st.name} = {_format_expr(st.expr)}")
    return "\n".join(lines) + "\n"
