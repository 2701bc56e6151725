"""Line-oriented parser: program text -> typed statements with locations.

The grammar is strictly one statement per physical line.  Blocks are opened
and closed by keyword lines (``function``/``endfunction``, ``if``/``else``/
``endif``, ``group``/``endgroup``); everything else is a single statement.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .errors import ProgramSyntaxError, SourceLoc

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*$")
_NAMED_RE = re.compile(r"([A-Za-z_][A-Za-z0-9_]*):(.*)$", re.S)
_REF_RE = re.compile(r"%([A-Za-z_][A-Za-z0-9_]*)%$")
_REF_ANY_RE = re.compile(r"%([A-Za-z_][A-Za-z0-9_]*)%")

_KEYWORDS = {
    "function", "endfunction", "return", "call", "include", "set",
    "if", "else", "endif", "group", "endgroup", "recursive", "global",
}

_MAX_NESTING = 200


# -------------------------------------------------------------- arguments

@dataclass
class ArgValue:
    """One classified operator argument.

    kind: 'var' | 'regex' | 'string' | 'number' | 'numeq' | 'streq' | 'ref'
    For 'number' the parsed float is in ``value``; ``text`` always holds the
    payload (variable name without sigil, regex body, string content,
    equation body, or the raw number text).
    """
    kind: str
    text: str
    quoted: bool = False
    value: Optional[float] = None
    raw: str = field(default="", compare=False)

    def render(self) -> str:
        if self.kind == "var":
            return f"${self.text}"
        if self.kind == "regex":
            return f"#{self.text}"
        if self.kind == "ref":
            return f"%{self.text}%"
        if self.kind == "numeq":
            return f"={self.text}"
        if self.kind == "streq":
            return f'"&{self.text}"' if self.quoted else f"&{self.text}"
        if self.kind == "number":
            from .evtio import format_number
            return format_number(self.value)
        # string
        return f'"{self.text}"' if self.quoted else self.text


def classify_argument(token: str, loc: Optional[SourceLoc] = None) -> ArgValue:
    """Classify one raw argument token by its sigil."""
    if token.startswith('"'):
        if len(token) < 2 or not token.endswith('"'):
            raise ProgramSyntaxError(f"unterminated string {token!r}", loc)
        content = token[1:-1]
        if '"' in content:
            raise ProgramSyntaxError(f"stray quote inside {token!r}", loc)
        if content.startswith("&"):
            return ArgValue("streq", content[1:], quoted=True, raw=token)
        return ArgValue("string", content, quoted=True, raw=token)
    if token.startswith("="):
        return ArgValue("numeq", token[1:], raw=token)
    if token.startswith("&"):
        return ArgValue("streq", token[1:], raw=token)
    if token.startswith("#"):
        return ArgValue("regex", token[1:], raw=token)
    if token.startswith("$"):
        name = token[1:]
        if not _IDENT_RE.match(name):
            raise ProgramSyntaxError(f"malformed channel variable {token!r}", loc)
        return ArgValue("var", name, raw=token)
    m = _REF_RE.match(token)
    if m:
        return ArgValue("ref", m.group(1), raw=token)
    if token.startswith("%") or token.endswith("%"):
        raise ProgramSyntaxError(f"malformed variable reference {token!r}", loc)
    try:
        v = float(token)
        if math.isfinite(v):
            return ArgValue("number", token, value=v, raw=token)
    except ValueError:
        pass
    if '"' in token:
        raise ProgramSyntaxError(f"stray quote inside {token!r}", loc)
    return ArgValue("string", token, quoted=False, raw=token)


# -------------------------------------------------------------- statements

@dataclass
class Statement:
    loc: SourceLoc = field(compare=False, kw_only=True, default=SourceLoc("<none>", 0))


@dataclass
class Comment(Statement):
    text: str = ""


@dataclass
class Config(Statement):
    name: str = ""
    named: Dict[str, ArgValue] = field(default_factory=dict)


@dataclass
class OperatorStmt(Statement):
    target: Optional[str] = None
    merge: bool = False
    op: str = ""
    args: List[ArgValue] = field(default_factory=list)
    named: Dict[str, ArgValue] = field(default_factory=dict)


@dataclass
class FunctionDef(Statement):
    name: str = ""
    params: List[str] = field(default_factory=list)   # "$x" or "%x%"
    body: List[Statement] = field(default_factory=list)


@dataclass
class Return(Statement):
    arg: ArgValue = None


@dataclass
class Call(Statement):
    target: Optional[str] = None
    merge: bool = False
    name: str = ""
    args: List[ArgValue] = field(default_factory=list)


@dataclass
class Include(Statement):
    path: str = ""


@dataclass
class SetVar(Statement):
    name: str = ""
    value: ArgValue = None


@dataclass
class If(Statement):
    cond: ArgValue = None
    then: List[Statement] = field(default_factory=list)
    orelse: List[Statement] = field(default_factory=list)


@dataclass
class Group(Statement):
    name: str = ""
    body: List[Statement] = field(default_factory=list)


@dataclass
class RecursiveDecl(Statement):
    var: str = ""


@dataclass
class GlobalDecl(Statement):
    var: str = ""


# block-structure markers used only during assembly
@dataclass
class _EndMarker(Statement):
    keyword: str = ""
    name: str = ""


# -------------------------------------------------------------- tokenizer

def tokenize(line: str, loc: SourceLoc) -> List[str]:
    """Split a statement line into raw tokens, keeping quoted runs intact."""
    tokens: List[str] = []
    i, n = 0, len(line)
    while i < n:
        c = line[i]
        if c.isspace():
            i += 1
            continue
        start = i
        in_quote = False
        while i < n:
            c = line[i]
            if c == '"':
                in_quote = not in_quote
            elif c.isspace() and not in_quote:
                break
            i += 1
        if in_quote:
            raise ProgramSyntaxError("unterminated string", loc)
        tokens.append(line[start:i])
    return tokens


def _split_args(tokens: List[str], loc: SourceLoc) -> Tuple[List[ArgValue], Dict[str, ArgValue]]:
    args: List[ArgValue] = []
    named: Dict[str, ArgValue] = {}
    for tok in tokens:
        m = _NAMED_RE.match(tok) if not tok.startswith('"') else None
        if m and not tok.startswith(("=", "&", "#", "$", "%")):
            name, value = m.group(1), m.group(2)
            if name in named:
                raise ProgramSyntaxError(f"duplicate named argument {name!r}", loc)
            named[name] = classify_argument(value, loc) if value else ArgValue(
                "string", "", quoted=False, raw="")
        else:
            if named:
                raise ProgramSyntaxError(
                    "positional argument after named arguments", loc)
            args.append(classify_argument(tok, loc))
    return args, named


def _require_var(token: str, loc: SourceLoc) -> str:
    arg = classify_argument(token, loc)
    if arg.kind != "var":
        raise ProgramSyntaxError(f"expected a channel variable, got {token!r}", loc)
    return arg.text


# -------------------------------------------------------------- statements

def parse_statement(line: str, filename: str = "<string>", lineno: int = 1) -> Statement:
    """Classify a single logical line.

    Block openers (``function``, ``if``, ``group``) come back with empty
    bodies; :func:`parse_program` assembles nesting.
    """
    loc = SourceLoc(filename, lineno)
    stripped = line.strip()
    if not stripped:
        raise ProgramSyntaxError("empty line is not a statement", loc)
    if stripped.startswith("#"):
        return Comment(text=stripped[1:], loc=loc)
    if stripped.startswith("@"):
        tokens = tokenize(stripped, loc)
        name = tokens[0][1:]
        if not _IDENT_RE.match(name):
            raise ProgramSyntaxError(f"malformed configuration statement {tokens[0]!r}", loc)
        args, named = _split_args(tokens[1:], loc)
        if args:
            raise ProgramSyntaxError("configuration statements take only named arguments", loc)
        return Config(name=name, named=named, loc=loc)

    tokens = tokenize(stripped, loc)
    head = tokens[0]

    if head in _KEYWORDS:
        return _parse_keyword_statement(head, tokens, loc)

    target: Optional[str] = None
    merge = False
    if head.startswith("$"):
        if len(tokens) < 3 or tokens[1] not in ("=", "+="):
            raise ProgramSyntaxError(
                f"expected '=' or '+=' after {head!r}", loc)
        target = _require_var(head, loc)
        merge = tokens[1] == "+="
        rest = tokens[2:]
        if rest[0] == "call":
            if len(rest) < 2:
                raise ProgramSyntaxError("call requires a function name", loc)
            args, named = _split_args(rest[2:], loc)
            if named:
                raise ProgramSyntaxError("call takes only positional arguments", loc)
            return Call(target=target, merge=merge, name=rest[1], args=args, loc=loc)
        if rest[0].startswith("$") and len(rest) == 1:
            # `$b += $a` is shorthand for `$b += echo $a`
            return OperatorStmt(target=target, merge=merge, op="echo",
                                args=[classify_argument(rest[0], loc)], loc=loc)
        op = rest[0]
        if not _IDENT_RE.match(op):
            raise ProgramSyntaxError(f"malformed operator name {op!r}", loc)
        args, named = _split_args(rest[1:], loc)
        return OperatorStmt(target=target, merge=merge, op=op, args=args,
                            named=named, loc=loc)

    if not _IDENT_RE.match(head):
        raise ProgramSyntaxError(f"malformed operator name {head!r}", loc)
    args, named = _split_args(tokens[1:], loc)
    return OperatorStmt(op=head, args=args, named=named, loc=loc)


def _parse_keyword_statement(head: str, tokens: List[str], loc: SourceLoc) -> Statement:
    rest = tokens[1:]
    if head == "function":
        if not rest:
            raise ProgramSyntaxError("function requires a name", loc)
        name = rest[0]
        if not _IDENT_RE.match(name):
            raise ProgramSyntaxError(f"malformed function name {name!r}", loc)
        params = []
        for tok in rest[1:]:
            arg = classify_argument(tok, loc)
            if arg.kind == "var":
                params.append(f"${arg.text}")
            elif arg.kind == "ref":
                params.append(f"%{arg.text}%")
            else:
                raise ProgramSyntaxError(
                    f"function parameters must be $name or %name%, got {tok!r}", loc)
        return FunctionDef(name=name, params=params, loc=loc)
    if head == "endfunction":
        if rest:
            raise ProgramSyntaxError("endfunction takes no arguments", loc)
        return _EndMarker(keyword="endfunction", loc=loc)
    if head == "return":
        if len(rest) != 1:
            raise ProgramSyntaxError("return takes exactly one argument", loc)
        return Return(arg=classify_argument(rest[0], loc), loc=loc)
    if head == "call":
        if not rest:
            raise ProgramSyntaxError("call requires a function name", loc)
        args, named = _split_args(rest[1:], loc)
        if named:
            raise ProgramSyntaxError("call takes only positional arguments", loc)
        return Call(name=rest[0], args=args, loc=loc)
    if head == "include":
        if len(rest) != 1:
            raise ProgramSyntaxError("include requires one quoted path", loc)
        arg = classify_argument(rest[0], loc)
        if arg.kind != "string" or not arg.quoted:
            raise ProgramSyntaxError("include path must be a quoted string", loc)
        return Include(path=arg.text, loc=loc)
    if head == "set":
        if len(rest) != 2:
            raise ProgramSyntaxError("set requires a %name% and a value", loc)
        m = _REF_RE.match(rest[0])
        if not m:
            raise ProgramSyntaxError(f"set target must be %name%, got {rest[0]!r}", loc)
        return SetVar(name=m.group(1), value=classify_argument(rest[1], loc), loc=loc)
    if head == "if":
        if len(rest) != 1:
            raise ProgramSyntaxError("if requires one numeric equation", loc)
        cond = classify_argument(rest[0], loc)
        if cond.kind != "numeq":
            raise ProgramSyntaxError(
                "if condition must be a numeric equation (starting with '=')", loc)
        return If(cond=cond, loc=loc)
    if head == "else":
        if rest:
            raise ProgramSyntaxError("else takes no arguments", loc)
        return _EndMarker(keyword="else", loc=loc)
    if head == "endif":
        if rest:
            raise ProgramSyntaxError("endif takes no arguments", loc)
        return _EndMarker(keyword="endif", loc=loc)
    if head == "group":
        if len(rest) != 1:
            raise ProgramSyntaxError("group requires one quoted name", loc)
        arg = classify_argument(rest[0], loc)
        if arg.kind != "string":
            raise ProgramSyntaxError("group name must be a string", loc)
        return Group(name=arg.text, loc=loc)
    if head == "endgroup":
        name = ""
        if rest:
            if len(rest) != 1:
                raise ProgramSyntaxError("endgroup takes at most one name", loc)
            arg = classify_argument(rest[0], loc)
            if arg.kind != "string":
                raise ProgramSyntaxError("endgroup name must be a string", loc)
            name = arg.text
        return _EndMarker(keyword="endgroup", name=name, loc=loc)
    if head == "recursive":
        if len(rest) != 1:
            raise ProgramSyntaxError("recursive requires one channel variable", loc)
        return RecursiveDecl(var=_require_var(rest[0], loc), loc=loc)
    if head == "global":
        if len(rest) != 1:
            raise ProgramSyntaxError("global requires one channel variable", loc)
        return GlobalDecl(var=_require_var(rest[0], loc), loc=loc)
    raise ProgramSyntaxError(f"unhandled keyword {head!r}", loc)


# -------------------------------------------------------------- programs

def parse_program(text: str, filename: str = "<string>") -> List[Statement]:
    """Parse full program text into a statement list with nested bodies."""
    top: List[Statement] = []
    # stack of (owner statement or None for top, active body list, kind)
    stack: List[Tuple[Optional[Statement], List[Statement], str]] = [(None, top, "top")]

    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        stmt = parse_statement(line, filename, lineno)
        owner, body, kind = stack[-1]

        if isinstance(stmt, _EndMarker):
            if stmt.keyword == "endfunction":
                if kind != "function":
                    raise ProgramSyntaxError("stray endfunction", stmt.loc)
                stack.pop()
            elif stmt.keyword == "endif":
                if kind not in ("if", "else"):
                    raise ProgramSyntaxError("stray endif", stmt.loc)
                stack.pop()
            elif stmt.keyword == "else":
                if kind != "if":
                    raise ProgramSyntaxError("stray else", stmt.loc)
                stack.pop()
                stack.append((owner, owner.orelse, "else"))
            elif stmt.keyword == "endgroup":
                if kind != "group":
                    raise ProgramSyntaxError("stray endgroup", stmt.loc)
                if stmt.name and stmt.name != owner.name:
                    raise ProgramSyntaxError(
                        f"endgroup name {stmt.name!r} does not match group "
                        f"{owner.name!r}", stmt.loc)
                stack.pop()
            continue

        if isinstance(stmt, FunctionDef):
            if any(k == "function" for _, _, k in stack):
                raise ProgramSyntaxError("nested function definitions are not allowed",
                                         stmt.loc)
            body.append(stmt)
            stack.append((stmt, stmt.body, "function"))
        elif isinstance(stmt, If):
            body.append(stmt)
            stack.append((stmt, stmt.then, "if"))
        elif isinstance(stmt, Group):
            body.append(stmt)
            stack.append((stmt, stmt.body, "group"))
        else:
            if isinstance(stmt, Return) and not any(k == "function" for _, _, k in stack):
                raise ProgramSyntaxError("return outside of a function", stmt.loc)
            body.append(stmt)
        if len(stack) > _MAX_NESTING:
            raise ProgramSyntaxError("nesting too deep", stmt.loc)

    if len(stack) != 1:
        owner, _, kind = stack[-1]
        raise ProgramSyntaxError(f"unclosed {kind} block", owner.loc)
    return top


# -------------------------------------------------------------- printer

def format_statement(stmt: Statement, indent: int = 0) -> List[str]:
    pad = "  " * indent
    if isinstance(stmt, Comment):
        return [f"{pad}#{stmt.text}"]
    if isinstance(stmt, Config):
        parts = [f"@{stmt.name}"] + [f"{k}:{v.render()}" for k, v in stmt.named.items()]
        return [pad + " ".join(parts)]
    if isinstance(stmt, OperatorStmt):
        parts = []
        if stmt.target is not None:
            parts.append(f"${stmt.target}")
            parts.append("+=" if stmt.merge else "=")
        parts.append(stmt.op)
        parts.extend(a.render() for a in stmt.args)
        parts.extend(f"{k}:{v.render()}" for k, v in stmt.named.items())
        return [pad + " ".join(parts)]
    if isinstance(stmt, FunctionDef):
        lines = [pad + " ".join(["function", stmt.name] + stmt.params)]
        for inner in stmt.body:
            lines.extend(format_statement(inner, indent + 1))
        lines.append(pad + "endfunction")
        return lines
    if isinstance(stmt, Return):
        return [f"{pad}return {stmt.arg.render()}"]
    if isinstance(stmt, Call):
        parts = []
        if stmt.target is not None:
            parts.append(f"${stmt.target}")
            parts.append("+=" if stmt.merge else "=")
        parts.extend(["call", stmt.name])
        parts.extend(a.render() for a in stmt.args)
        return [pad + " ".join(parts)]
    if isinstance(stmt, Include):
        return [f'{pad}include "{stmt.path}"']
    if isinstance(stmt, SetVar):
        return [f"{pad}set %{stmt.name}% {stmt.value.render()}"]
    if isinstance(stmt, If):
        lines = [f"{pad}if {stmt.cond.render()}"]
        for inner in stmt.then:
            lines.extend(format_statement(inner, indent + 1))
        if stmt.orelse:
            lines.append(f"{pad}else")
            for inner in stmt.orelse:
                lines.extend(format_statement(inner, indent + 1))
        lines.append(f"{pad}endif")
        return lines
    if isinstance(stmt, Group):
        lines = [f'{pad}group "{stmt.name}"']
        for inner in stmt.body:
            lines.extend(format_statement(inner, indent + 1))
        lines.append(f'{pad}endgroup "{stmt.name}"')
        return lines
    if isinstance(stmt, RecursiveDecl):
        return [f"{pad}recursive ${stmt.var}"]
    if isinstance(stmt, GlobalDecl):
        return [f"{pad}global ${stmt.var}"]
    raise TypeError(f"cannot format {type(stmt).__name__}")


def format_program(statements: List[Statement]) -> str:
    lines: List[str] = []
    for stmt in statements:
        lines.extend(format_statement(stmt))
    return "\n".join(lines) + "\n"


def substitute_refs(text: str, bindings) -> str:
    """Textual %name% substitution used before argument classification."""
    from .evtio import format_number

    def repl(m: re.Match) -> str:
        name = m.group(1)
        value = bindings(name)
        if isinstance(value, float):
            return format_number(value)
        return str(value)

    return _REF_ANY_RE.sub(repl, text)
