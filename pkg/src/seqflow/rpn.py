"""Stack evaluation of the three comma-separated RPN equation kinds.

Numeric equations hold only number literals and arithmetic/comparison
operators.  String equations hold string literals and ``+`` (concatenation).
Record equations additionally resolve the variable tokens ``value``,
``time`` and ``argK`` against the record being processed.
"""
from __future__ import annotations

import math
import re
from typing import Dict, List, Optional, Sequence, Tuple

from .errors import EquationTypeError, MathError, StackError, UnboundArgError

# operator token -> arity
NUMERIC_OPS = {
    "+": 2, "-": 2, "*": 2, "/": 2,
    "min": 2, "max": 2,
    "neg": 1, "abs": 1,
    "<": 2, "<=": 2, ">": 2, ">=": 2, "==": 2, "!=": 2,
}

_ARG_RE = re.compile(r"arg([1-9][0-9]*)$")

# token tags
_NUM, _OP, _VALUE, _TIME, _ARG, _STR = range(6)


def _div(a: float, b: float) -> float:
    if b == 0.0:
        raise MathError(f"division by zero ({a!r}/0)")
    return a / b


_APPLY = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "/": _div,
    "min": min,
    "max": max,
    "<": lambda a, b: 1.0 if a < b else 0.0,
    "<=": lambda a, b: 1.0 if a <= b else 0.0,
    ">": lambda a, b: 1.0 if a > b else 0.0,
    ">=": lambda a, b: 1.0 if a >= b else 0.0,
    "==": lambda a, b: 1.0 if a == b else 0.0,
    "!=": lambda a, b: 1.0 if a != b else 0.0,
}


class RpnProgram:
    """A validated RPN token sequence.

    ``kind`` is one of ``"numeric"``, ``"record"`` or ``"string"``.  The
    stack effect is checked at construction: a well-formed program never
    pops an empty stack and leaves exactly one item.
    """

    __slots__ = ("kind", "tokens", "text", "max_arg")

    def __init__(self, kind: str, tokens: Sequence[Tuple[int, object]], text: str):
        self.kind = kind
        self.tokens = tuple(tokens)
        self.text = text
        self.max_arg = max((tok[1] for tok in self.tokens if tok[0] == _ARG), default=0)
        self._check_stack_effect()

    def _check_stack_effect(self) -> None:
        depth = 0
        for tag, payload in self.tokens:
            if tag == _OP:
                arity = 2 if payload != "neg" and payload != "abs" else 1
                if depth < arity:
                    raise StackError(f"stack underflow at operator {payload!r} in {self.text!r}")
                depth -= arity - 1
            else:
                depth += 1
        if depth != 1:
            raise StackError(
                f"{self.text!r} leaves {depth} items on the stack (expected 1)")

    @property
    def is_constant(self) -> bool:
        return all(tag in (_NUM, _OP) for tag, _ in self.tokens)

    def __repr__(self) -> str:
        return f"RpnProgram({self.kind}, {self.text!r})"

    @classmethod
    def constant(cls, value: float) -> "RpnProgram":
        return cls("record", [(_NUM, float(value))], repr(value))


def _parse_number(tok: str) -> Optional[float]:
    try:
        v = float(tok)
    except ValueError:
        return None
    if not math.isfinite(v):
        return None
    return v


def parse_numeric(text: str) -> RpnProgram:
    if not text:
        raise StackError("empty numeric equation")
    tokens = []
    for tok in text.split(","):
        if tok in NUMERIC_OPS:
            tokens.append((_OP, tok))
            continue
        v = _parse_number(tok)
        if v is None:
            raise EquationTypeError(f"unknown numeric token {tok!r} in {text!r}")
        tokens.append((_NUM, v))
    if not tokens:
        raise StackError("empty numeric equation")
    return RpnProgram("numeric", tokens, text)


def parse_record(text: str) -> RpnProgram:
    if not text:
        raise StackError("empty record equation")
    tokens = []
    for tok in text.split(","):
        if tok in NUMERIC_OPS:
            tokens.append((_OP, tok))
            continue
        if tok == "value":
            tokens.append((_VALUE, None))
            continue
        if tok == "time":
            tokens.append((_TIME, None))
            continue
        m = _ARG_RE.match(tok)
        if m:
            tokens.append((_ARG, int(m.group(1))))
            continue
        v = _parse_number(tok)
        if v is None:
            raise EquationTypeError(f"unknown record-equation token {tok!r} in {text!r}")
        tokens.append((_NUM, v))
    if not tokens:
        raise StackError("empty record equation")
    return RpnProgram("record", tokens, text)


def parse_string(text: str) -> RpnProgram:
    # every token except '+' is a literal; literals may contain spaces
    if not text:
        raise StackError("empty string equation")
    tokens = []
    for tok in text.split(","):
        if tok == "+":
            tokens.append((_OP, "+"))
        else:
            tokens.append((_STR, tok))
    if not tokens:
        raise StackError("empty string equation")
    return RpnProgram("string", tokens, text)


def _run_numeric(prog: RpnProgram, env_value: Optional[float], env_time: Optional[float],
                 args: Optional[Dict[int, float]]) -> float:
    stack: List[float] = []
    for tag, payload in prog.tokens:
        if tag == _NUM:
            stack.append(payload)
        elif tag == _OP:
            if payload == "neg":
                stack.append(-stack.pop())
            elif payload == "abs":
                stack.append(abs(stack.pop()))
            else:
                b = stack.pop()
                a = stack.pop()
                stack.append(_APPLY[payload](a, b))
        elif tag == _VALUE:
            stack.append(env_value)
        elif tag == _TIME:
            stack.append(env_time)
        elif tag == _ARG:
            if args is None or payload not in args or args[payload] is None:
                raise UnboundArgError(f"arg{payload} has no sampled value yet")
            stack.append(args[payload])
        else:
            raise EquationTypeError(f"string literal in numeric context: {payload!r}")
    result = stack[0]
    if not math.isfinite(result):
        raise MathError(f"non-finite result from {prog.text!r}")
    return result


def eval_numeric(prog: RpnProgram) -> float:
    if prog.kind != "numeric":
        raise EquationTypeError(f"expected a numeric equation, got {prog.kind}")
    return _run_numeric(prog, None, None, None)


def eval_record(prog: RpnProgram, value: float, time: float,
                args: Optional[Dict[int, float]] = None) -> float:
    if prog.kind not in ("record", "numeric"):
        raise EquationTypeError(f"expected a record equation, got {prog.kind}")
    return _run_numeric(prog, value, time, args)


def eval_string(prog: RpnProgram, env: Optional[Dict[str, str]] = None) -> str:
    """Fold a string equation; tokens found in ``env`` resolve to its values
    (used by rename, where the token ``name`` is the input channel name)."""
    if prog.kind != "string":
        raise EquationTypeError(f"expected a string equation, got {prog.kind}")
    stack: List[str] = []
    for tag, payload in prog.tokens:
        if tag == _STR:
            stack.append(env[payload] if env and payload in env else payload)
        else:  # '+'
            if len(stack) < 2:
                raise StackError(f"stack underflow in {prog.text!r}")
            b = stack.pop()
            a = stack.pop()
            stack.append(a + b)
    if len(stack) != 1:
        raise StackError(f"{prog.text!r} leaves {len(stack)} items on the stack")
    return stack[0]
