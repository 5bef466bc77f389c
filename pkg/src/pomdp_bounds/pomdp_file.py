"""Reader and writer for the Cassandra ``.pomdp`` text format."""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .core import Belief, ModelError, PomdpModel

ROW_TOL = 1e-6

PREAMBLE_KEYS = ("discount", "values", "states", "actions", "observations")
_NUMBER = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")


class PomdpParseError(ModelError):
    """Syntax or semantic error in a ``.pomdp`` document; ``line`` is 1-based or ``None``."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass
class _Tok:
    text: str
    line: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0]
        for word in body.replace(":", " : ").split():
            toks.append(_Tok(word, lineno))
    return toks


def _is_number(word: str) -> bool:
    return bool(_NUMBER.match(word))


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.pos = 0
        self.discount: Optional[float] = None
        self.cost = False
        self.names: dict[str, list[str]] = {}
        self.start: Optional[np.ndarray] = None
        self.T = self.O = None
        self.reward_rules: list = []

    # token helpers
    def peek(self, k: int = 0) -> Optional[_Tok]:
        i = self.pos + k
        return self.toks[i] if i < len(self.toks) else None

    def next(self, what: str = "token") -> _Tok:
        tok = self.peek()
        if tok is None:
            last = self.toks[-1].line if self.toks else None
            raise PomdpParseError(f"unexpected end of input, expected {what}", last)
        self.pos += 1
        return tok

    def expect_colon(self):
        tok = self.next("':'")
        if tok.text != ":":
            raise PomdpParseError(f"expected ':' but found {tok.text!r}", tok.line)

    def number(self) -> float:
        tok = self.next("number")
        if not _is_number(tok.text):
            raise PomdpParseError(f"expected a number but found {tok.text!r}", tok.line)
        return float(tok.text)

    def numbers(self, count: int) -> np.ndarray:
        return np.array([self.number() for _ in range(count)])

    # sizes and identifiers
    def size(self, kind: str) -> int:
        if kind not in self.names:
            tok = self.peek()
            raise PomdpParseError(f"{kind} must be declared before use", tok.line if tok else None)
        return len(self.names[kind])

    def index_set(self, kind: str) -> np.ndarray:
        tok = self.next(f"{kind[:-1]} identifier")
        n = self.size(kind)
        if tok.text == "*":
            return np.arange(n)
        if tok.text.isdigit():
            i = int(tok.text)
            if i >= n:
                raise PomdpParseError(f"{kind[:-1]} index {i} out of range", tok.line)
            return np.array([i])
        try:
            return np.array([self.names[kind].index(tok.text)])
        except ValueError:
            raise PomdpParseError(f"unknown {kind[:-1]} {tok.text!r}", tok.line) from None

    # preamble
    def declaration(self, key: str, tok: _Tok):
        if key == "discount":
            self.discount = self.number()
        elif key == "values":
            word = self.next("reward or cost")
            if word.text not in ("reward", "cost"):
                raise PomdpParseError(f"values must be 'reward' or 'cost', got {word.text!r}", word.line)
            self.cost = word.text == "cost"
        else:
            first = self.next(f"{key} count or names")
            if first.text.isdigit() and (self.peek() is None or self.peek(1) is None
                                         or self.peek(1).text == ":" or _is_keyword(self.peek().text)):
                names = [str(i) for i in range(int(first.text))]
            else:
                names = [first.text]
                while self.peek() is not None and not (self.peek(1) is not None and self.peek(1).text == ":") \
                        and not _is_keyword(self.peek().text):
                    names.append(self.next().text)
            if not names:
                raise PomdpParseError(f"{key} needs at least one entry", tok.line)
            self.names[key] = names

    def parse_start(self, tok: _Tok):
        n = self.size("states")
        nxt = self.peek()
        if nxt is not None and nxt.text in ("include", "exclude"):
            mode = self.next().text
            self.expect_colon()
            chosen = set()
            while self.peek() is not None and not _ends_entry(self):
                chosen.update(self.index_set("states").tolist())
            mask = np.zeros(n, bool)
            mask[list(chosen)] = True
            if mode == "exclude":
                mask = ~mask
            if not mask.any():
                raise PomdpParseError("start distribution is empty", tok.line)
            self.start = mask / mask.sum()
            return
        self.expect_colon()
        nxt = self.peek()
        if nxt is not None and nxt.text == "uniform":
            self.next()
            self.start = np.full(n, 1.0 / n)
        elif nxt is not None and _is_number(nxt.text) and not (n > 1 and nxt.text.isdigit() and _ends_after(self, 1)):
            self.start = self.numbers(n)
        else:
            s = self.index_set("states")
            self.start = np.zeros(n)
            self.start[s] = 1.0

    # body entries
    def matrix_or_keyword(self, rows: int, cols: int, square: bool) -> np.ndarray:
        tok = self.peek()
        if tok is not None and tok.text == "uniform":
            self.next()
            return np.full((rows, cols), 1.0 / cols)
        if tok is not None and tok.text == "identity":
            self.next()
            if not square:
                raise PomdpParseError("identity is only valid for transition matrices", tok.line)
            return np.eye(rows)
        return self.numbers(rows * cols).reshape(rows, cols)

    def row_or_keyword(self, cols: int) -> np.ndarray:
        tok = self.peek()
        if tok is not None and tok.text == "uniform":
            self.next()
            return np.full(cols, 1.0 / cols)
        return self.numbers(cols)

    def _more_indices(self) -> bool:
        tok = self.peek()
        return tok is not None and tok.text == ":"

    def parse_T(self):
        n_s = self.size("states")
        a = self.index_set("actions")
        if not self._more_indices():
            mat = self.matrix_or_keyword(n_s, n_s, square=True)
            for ai in a:
                self.T[ai] = mat.copy()
            return
        self.expect_colon()
        s = self.index_set("states")
        if not self._more_indices():
            row = self.row_or_keyword(n_s)
            for ai in a:
                self.T[ai][s] = row
            return
        self.expect_colon()
        s2 = self.index_set("states")
        p = self.number()
        for ai in a:
            self.T[ai][np.ix_(s, s2)] = p

    def parse_O(self):
        n_s, n_o = self.size("states"), self.size("observations")
        a = self.index_set("actions")
        if not self._more_indices():
            mat = self.matrix_or_keyword(n_s, n_o, square=False)
            for ai in a:
                self.O[ai] = mat.copy()
            return
        self.expect_colon()
        s2 = self.index_set("states")
        if not self._more_indices():
            row = self.row_or_keyword(n_o)
            for ai in a:
                self.O[ai][s2] = row
            return
        self.expect_colon()
        o = self.index_set("observations")
        p = self.number()
        for ai in a:
            self.O[ai][np.ix_(s2, o)] = p

    def parse_R(self, tok: _Tok):
        n_s, n_o = self.size("states"), self.size("observations")
        a = self.index_set("actions")
        self.expect_colon()
        s = self.index_set("states")
        if not self._more_indices():
            values = self.numbers(n_s * n_o).reshape(n_s, n_o)
            self.reward_rules.append((a, s, np.arange(n_s), np.arange(n_o), values))
            return
        self.expect_colon()
        s2 = self.index_set("states")
        if not self._more_indices():
            values = self.numbers(n_o)[None, :]
            self.reward_rules.append((a, s, s2, np.arange(n_o), values))
            return
        self.expect_colon()
        o = self.index_set("observations")
        r = self.number()
        self.reward_rules.append((a, s, s2, o, np.array([[r]])))

    def run(self) -> PomdpModel:
        while self.peek() is not None:
            tok = self.next()
            key = tok.text
            if key in PREAMBLE_KEYS:
                self.expect_colon()
                self.declaration(key, tok)
            elif key == "start":
                self.parse_start(tok)
            elif key in ("T", "O", "R"):
                self._ensure_kernels(tok)
                self.expect_colon()
                {"T": self.parse_T, "O": self.parse_O}.get(key, lambda: self.parse_R(tok))()
            else:
                raise PomdpParseError(f"unexpected token {key!r}", tok.line)
        return self.build()

    def _ensure_kernels(self, tok: _Tok):
        if self.T is not None:
            return
        for key in ("states", "actions", "observations"):
            if key not in self.names:
                raise PomdpParseError(f"{key} must be declared before {tok.text} entries", tok.line)
        n_s, n_a, n_o = (len(self.names[k]) for k in ("states", "actions", "observations"))
        self.T = [np.zeros((n_s, n_s)) for _ in range(n_a)]
        self.O = [np.zeros((n_s, n_o)) for _ in range(n_a)]

    def expected_reward(self) -> np.ndarray:
        n_s, n_a = len(self.names["states"]), len(self.names["actions"])
        R = np.zeros((n_s, n_a))
        if not self.reward_rules:
            return R
        for ai in range(n_a):
            # weight[s, s', o] = T(s'|s,a) O(o|s',a); later rules overwrite earlier cells
            weight = self.T[ai][:, :, None] * self.O[ai][None, :, :]
            cell = np.zeros_like(weight)
            for a_set, s, s2, o, values in self.reward_rules:
                if ai not in a_set:
                    continue
                block = np.broadcast_to(values, (len(s2), len(o)))
                cell[np.ix_(s, s2, o)] = block[None, :, :]
            R[:, ai] = (weight * cell).sum(axis=(1, 2))
        return R

    def build(self) -> PomdpModel:
        if self.discount is None:
            raise PomdpParseError("missing 'discount:' declaration")
        for key in ("states", "actions", "observations"):
            if key not in self.names:
                raise PomdpParseError(f"missing '{key}:' declaration")
        if self.T is None:
            self._ensure_kernels(_Tok("T", None))
        sn, an, on = self.names["states"], self.names["actions"], self.names["observations"]
        for kind, blocks, labels in (("transition", self.T, sn), ("observation", self.O, sn)):
            for ai, mat in enumerate(blocks):
                sums = mat.sum(axis=1)
                bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_TOL)
                if len(bad):
                    i = int(bad[0])
                    raise PomdpParseError(
                        f"{kind} row for action {an[ai]!r}, state {labels[i]!r} sums to {sums[i]:.6g}")
                if mat.min() < 0:
                    raise PomdpParseError(f"negative {kind} probability for action {an[ai]!r}")
                blocks[ai] = mat / sums[:, None]
        start = self.start if self.start is not None else np.full(len(sn), 1.0 / len(sn))
        if abs(start.sum() - 1.0) > ROW_TOL or start.min() < 0:
            raise PomdpParseError(f"start distribution sums to {start.sum():.6g}")
        R = self.expected_reward()
        if self.cost:
            R = -R
        try:
            return PomdpModel(
                self.T, self.O, R, self.discount, Belief.from_dense(start, renormalize=True),
                state_names=list(sn), action_names=list(an), observation_names=list(on), name="pomdp",
            )
        except ModelError as exc:
            raise PomdpParseError(str(exc)) from exc


def _is_keyword(word: str) -> bool:
    return word in PREAMBLE_KEYS or word in ("start", "T", "O", "R")


def _ends_entry(p: _Parser) -> bool:
    tok = p.peek()
    return tok is None or (_is_keyword(tok.text) and p.peek(1) is not None and p.peek(1).text in (":", "include", "exclude"))


def _ends_after(p: _Parser, k: int) -> bool:
    tok = p.peek(k)
    return tok is None or _is_keyword(tok.text)


def parse_pomdp(text: str) -> PomdpModel:
    """Parse a ``.pomdp`` document into a validated model.

    Unspecified transition and observation entries are zero, a missing start
    distribution is uniform, and ``values: cost`` negates rewards. Rows must
    sum to one within 1e-6 and are renormalized exactly.
    """
    return _Parser(text).run()


def load_pomdp(path: Union[str, Path]) -> PomdpModel:
    path = Path(path)
    model = parse_pomdp(path.read_text())
    model.name = path.stem
    return model


def _ident(names: Optional[list], count: int) -> list[str]:
    ok = names and len(names) == count and all(
        re.fullmatch(r"[A-Za-z_][\w\-.]*", str(n)) and not _is_keyword(str(n)) and str(n) not in ("uniform", "identity")
        for n in names
    ) and len(set(names)) == count
    return [str(n) for n in names] if ok else [str(i) for i in range(count)]


def _fmt(x: float) -> str:
    return repr(float(x))


def write_pomdp(model: PomdpModel) -> str:
    """Serialize a model; rewards are written as expected ``R(s, a)`` values."""
    n_s, n_a, n_o = model.num_states, model.num_actions, model.num_observations
    sn = _ident(model.state_names, n_s)
    an = _ident(model.action_names, n_a)
    on = _ident(model.observation_names, n_o)
    numeric = lambda names: all(n.isdigit() for n in names)
    lines = [
        f"discount: {_fmt(model.discount)}",
        "values: reward",
        f"states: {n_s if numeric(sn) else ' '.join(sn)}",
        f"actions: {n_a if numeric(an) else ' '.join(an)}",
        f"observations: {n_o if numeric(on) else ' '.join(on)}",
        "start: " + " ".join(_fmt(x) for x in model.initial_belief.to_dense(n_s)),
        "",
    ]
    for a in range(n_a):
        T = model.transition[a].tocoo()
        for s, s2, p in sorted(zip(T.row, T.col, T.data)):
            lines.append(f"T: {an[a]} : {sn[s]} : {sn[s2]} {_fmt(p)}")
    lines.append("")
    for a in range(n_a):
        O = model.observation[a].tocoo()
        for s2, o, p in sorted(zip(O.row, O.col, O.data)):
            lines.append(f"O: {an[a]} : {sn[s2]} : {on[o]} {_fmt(p)}")
    lines.append("")
    for a in range(n_a):
        for s in range(n_s):
            r = model.reward[s, a]
            if r != 0.0:
                lines.append(f"R: {an[a]} : {sn[s]} : * : * {_fmt(r)}")
    return "\n".join(lines) + "\n"


def save_pomdp(model: PomdpModel, path: Union[str, Path]) -> None:
    Path(path).write_text(write_pomdp(model))
