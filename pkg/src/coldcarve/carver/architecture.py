"""Locating and repairing the architecture XML inside a decayed image.

Decay only ever substitutes bits, so a corrupted document keeps the byte
layout of the original.  The decoder below walks the dialect's grammar and
aligns every expected literal against the bytes at hand, scoring alignments
by character mismatches.  Free-form slots (numbers, names, enumerated values)
take whatever span makes the following literal line up best.  Numbers that
are observed more than once (a shape appears on both sides of an edge, ids
appear in names and edges) are then settled by a maximum-likelihood vote
under the bit-flip channel.  The repaired document is rebuilt from the
original bytes plus the recorded repairs and must parse cleanly.
"""

from __future__ import annotations

import math
import re
import xml.etree.ElementTree as ET
from collections import Counter
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from ..errors import InvalidModel, MalformedXml, NoMatch, NotFound, SchemaViolation, Unrepairable
from ..ir import (
    INPUT_PORT, IR_VERSION, KINDS, OUTPUT_PORT, PRECISION, SHAPE_PRESERVING,
    SOURCE_OUTPUT_PORT, IRModel, default_layer_name, infer_out_shape, parse_xml,
)
from ..memory import MemoryImage, raw_bytes
from .report import CarveReport, XmlRepair
from .tokens import DEFAULT_DICTIONARY, TokenDictionary, edit_distance, repair_token

ANCHOR = '<net name="'
MAX_ANCHOR_DISTANCE = 3
MAX_CANDIDATES = 32
_BEAM = 4
_WS_JUNK = 4
# log-likelihood ratios of a matching / mismatching character, true alignment
# against chance agreement with text
_MATCH_GAIN = 2.25
_MISMATCH_COST = 2.9
_LOOKAHEAD = [("ws", False), ("lit", "<")]
_CANON_WS = " \t\n\r"
_WORD = re.compile(r"[A-Za-z0-9_\-]+")

# channel used to weigh numeric readings; the exact rates only matter for ties
_HINT_RHO0 = 1e-2
_HINT_RHO1 = 1e-3
_FLOOR = -40.0


def _channel_table(rho0: float, rho1: float) -> np.ndarray:
    o = np.arange(256)[:, None]
    c = np.arange(256)[None, :]
    table = np.zeros((256, 256))
    for bit in range(8):
        ob = (o >> bit) & 1
        cb = (c >> bit) & 1
        table += np.where(ob == 1,
                          np.where(cb == 1, math.log1p(-rho0), math.log(rho0)),
                          np.where(cb == 1, math.log(rho1), math.log1p(-rho1)))
    return table


_LL = _channel_table(_HINT_RHO0, _HINT_RHO1)


def _loglik(orig: str, seen: str) -> float:
    if len(orig) != len(seen):
        return _FLOOR
    # rounded so that equally likely readings tie exactly
    return round(max(_FLOOR, float(sum(_LL[ord(a), ord(b)] for a, b in zip(orig, seen)))), 9)


def _near_digits(ch: str) -> list[str]:
    if ch.isdigit() and ch.isascii():
        return [ch]
    return [d for d in "0123456789" if bin(ord(d) ^ ord(ch)).count("1") <= 2]


def _int_candidates(raw: str) -> set[int]:
    options = [_near_digits(ch) for ch in raw]
    if not all(options) or math.prod(len(o) for o in options) > 256:
        return set()
    out = set()
    for combo in product(*options):
        s = "".join(combo)
        if s == str(int(s)):
            out.add(int(s))
    return out


def _decide_int(readings: list[str], extra=(), prefer: int | None = None) -> int:
    cands = set(extra)
    for r in readings:
        cands |= _int_candidates(r)
    if not cands:
        raise Unrepairable(f"no numeric reading fits {readings!r}")

    def key(c):
        s = str(c)
        return (sum(_loglik(s, r) for r in readings), c == prefer, -c)

    return max(sorted(cands), key=key)


def _ws_like(ch: str) -> bool:
    return ch in _CANON_WS or ord(ch) < 0x20 or ch == "\x7f"


def _bad_num(ch):
    return not ("0" <= ch <= "9")


def _bad_name(ch):
    return ch in '"<>' or ord(ch) < 0x20 or ch == "\x7f"


def _bad_val(ch):
    return not (ch.isascii() and ch.isalnum())


def _bad_float(ch):
    return ch not in "0123456789.eE+-"


_SLOTS = {"num": (6, _bad_num), "name": (96, _bad_name), "val": (24, _bad_val),
          "float": (24, _bad_float)}


def L(s):
    return ("lit", s)


def WS(required=False):
    return ("ws", required)


def S(kind, key):
    return (kind, key)


def _attr(name, kind, key):
    return [WS(True), L(f'{name}="'), S(kind, key), L('"')]


def _pair(name, key):
    return [WS(True), L(f'{name}="'), S("num", key + "0"), L(","), S("num", key + "1"), L('"')]


_NET_OPEN = [L("<net"), *_attr("name", "name", "name"), *_attr("version", "num", "version"),
             WS(), L(">")]
_LAYER_OPEN = [L("<layer"), *_attr("id", "num", "id"), *_attr("name", "name", "name"),
               *_attr("type", "val", "type"), WS(), L(">")]
_PORT_OPEN = [L("<port"), *_attr("id", "num", "id"), *_attr("precision", "val", "precision"),
              WS(), L(">")]
_DIM = [L("<dim>"), S("num", "dim"), L("</dim>")]
_EDGE = [L("<edge"), *_attr("from-layer", "num", "from-layer"),
         *_attr("from-port", "num", "from-port"), *_attr("to-layer", "num", "to-layer"),
         *_attr("to-port", "num", "to-port"), WS(), L("/>")]
_DATA = {
    "Dense": [L("<data"), *_attr("out-size", "num", "out-size"), WS(), L("/>")],
    "Conv2D": [L("<data"), *_pair("kernel", "kernel"), *_pair("strides", "strides"),
               *_pair("pads", "pads"), *_attr("output", "num", "output"), WS(), L("/>")],
    "MaxPool2D": [L("<data"), *_pair("kernel", "kernel"), *_pair("strides", "strides"),
                  WS(), L("/>")],
    "Dropout": [L("<data"), *_attr("rate", "float", "rate"), WS(), L("/>")],
    "Softmax": [L("<data"), *_attr("axis", "num", "axis"), WS(), L("/>")],
}


class _Fail(Exception):
    pass


@dataclass
class _Slot:
    raw: str
    offset: int


@dataclass
class _Port:
    id: _Slot
    precision: _Slot
    dims: list[_Slot]


@dataclass
class _LayerObs:
    id: _Slot
    name: _Slot
    type: _Slot
    kind: str
    data: dict[str, _Slot] = field(default_factory=dict)
    inp: _Port | None = None
    out: _Port | None = None


class _Decoder:
    def __init__(self, text: str, start: int, budget: int, dictionary: TokenDictionary):
        self.t = text
        self.pos = start
        self.start = start
        self.budget = budget
        self.dictionary = dictionary
        self.repairs: list[XmlRepair] = []

    # alignment machinery

    def _moves(self, item, p):
        t, n = self.t, len(self.t)
        kind = item[0]
        if kind == "lit":
            s = item[1]
            seg = t[p:p + len(s)]
            yield p + len(s), sum(a != b for a, b in zip(seg, s)) + len(s) - len(seg)
            if len(s) == 1 and not s.isalnum():
                yield p, 2  # a dropped delimiter
            return
        if kind == "ws":
            # a run of blanks, possibly with a couple of blanks decayed into junk
            q, odd = p, 0
            for junk in range(_WS_JUNK + 1):
                while q < n and q - p < 64 and _ws_like(t[q]):
                    odd += t[q] not in _CANON_WS
                    q += 1
                cost = odd + junk
                yield q, cost + (1 if item[1] and q == p else 0)
                # a control byte inside the run may really be the next literal
                seen = 0
                for r in range(p, q):
                    if t[r] not in _CANON_WS:
                        yield r, seen + junk + (1 if item[1] and r == p else 0)
                        seen += 1
                if q >= n:
                    break
                q += 1
            return
        maxlen, bad = _SLOTS[kind]
        c = 0
        for k in range(1, maxlen + 1):
            if p + k > n:
                break
            c += bad(t[p + k - 1])
            yield p + k, c

    def _align(self, items):
        frontier = {self.pos: (0, None)}
        for idx, item in enumerate(items):
            nxt: dict[int, tuple] = {}
            for p, (c, trail) in frontier.items():
                for e, dc in self._moves(item, p):
                    nc = c + dc
                    if e not in nxt or nc < nxt[e][0]:
                        nxt[e] = (nc, (trail, idx, p, e))
            if not nxt:
                return None
            best = min(v[0] for v in nxt.values())
            frontier = {p: v for p, v in nxt.items() if v[0] <= best + _BEAM}
        end, (cost, trail) = min(frontier.items(), key=lambda kv: (kv[1][0], kv[0]))
        steps = []
        while trail is not None:
            trail, idx, p, e = trail
            steps.append((idx, p, e))
        steps.reverse()
        return cost, end, steps

    def _within_budget(self, items, steps) -> bool:
        for idx, p, e in steps:
            item = items[idx]
            if item[0] != "lit" or e == p:
                continue
            s, seg = item[1], self.t[p:e].lower()
            if len(seg) < len(s):
                return False
            words = _WORD.search(s) is not None
            if words and sum(a != b for a, b in zip(seg, s)) > max(1, 2 * len(s) // 3):
                return False
            for m in _WORD.finditer(s):
                word = m.group()
                if sum(a != b for a, b in zip(seg[m.start():m.end()], word)) > self.budget:
                    return False
        return True

    def choose(self, alternatives, lookahead=True):
        """Commit to the cheapest alternative.

        With ``lookahead`` the next tag's opening bracket is part of the
        score, which stops a group from ending one character early.
        """
        best = None
        for label, items, *own in alternatives:
            items = [WS(), *items]
            full = items + _LOOKAHEAD if (own[0] if own else lookahead) else items
            got = self._align(full)
            if got is None:
                continue
            steps = [st for st in got[2] if st[0] < len(items)]
            if not self._within_budget(items, steps):
                continue
            # a long alternative matching many characters beats a short one
            # that happens to line up with few mismatches
            agree = sum(
                sum(a == b for a, b in zip(self.t[p:e], full[idx][1]))
                for idx, p, e in got[2] if full[idx][0] == "lit"
            )
            score = _MATCH_GAIN * agree - _MISMATCH_COST * got[0]
            if best is None or score > best[0]:
                best = (score, label, steps, items)
        if best is None:
            raise _Fail(f"no expected element near offset {self.pos}")
        _, label, steps, items = best
        values = {}
        for idx, p, e in steps:
            item = items[idx]
            kind = item[0]
            seg = self.t[p:e]
            if kind == "lit":
                if seg != item[1]:
                    self.repairs.append(XmlRepair(p, seg, item[1]))
            elif kind == "ws":
                for k, ch in enumerate(seg):
                    if ch not in _CANON_WS:
                        self.repairs.append(XmlRepair(p + k, ch, " "))
            else:
                values[item[1]] = _Slot(seg, p)
        self.pos = steps[-1][2]
        return label, values

    def group(self, items, lookahead=True):
        return self.choose([(None, items)], lookahead)[1]

    # grammar

    def net(self):
        head = self.group(_NET_OPEN)
        self.group([L("<layers>")])
        layers = []
        while True:
            label, vals = self.choose([("layer", _LAYER_OPEN), ("end", [L("</layers>")])])
            if label == "end":
                break
            layers.append(self.layer(vals))
            if len(layers) > 4096:
                raise _Fail("runaway layer list")
        edges = []
        label, _ = self._tail([("edges", [L("<edges>")]), ("cli", [L("<cli_parameters>")])])
        if label == "edges":
            while True:
                lab, vals = self.choose([("edge", _EDGE), ("end", [L("</edges>")])])
                if lab == "end":
                    break
                edges.append(vals)
                if len(edges) > 4096:
                    raise _Fail("runaway edge list")
            label, _ = self._tail([("cli", [L("<cli_parameters>")])])
        cli = None
        if label == "cli":
            cli = self.opaque("</cli_parameters>")
            self.group([L("</net>")], lookahead=False)
        return head, layers, edges, cli

    def _tail(self, alternatives):
        # </net> is the one element not followed by another tag
        return self.choose(alternatives + [("end", [L("</net>")], False)])

    def layer(self, vals):
        kind = self._kind(vals["type"].raw, vals["name"].raw)
        obs = _LayerObs(vals["id"], vals["name"], vals["type"], kind)
        if kind in _DATA:
            obs.data = self.group(_DATA[kind])
        if kind != "Input":
            self.group([L("<input>")])
            obs.inp = self.port()
            self.group([L("</input>")])
        self.group([L("<output>")])
        obs.out = self.port()
        self.group([L("</output>")])
        self.group([L("</layer>")])
        return obs

    def _kind(self, raw: str, name: str) -> str:
        """Layer kind from the type attribute, with the default name as a second reading."""
        kinds = self.dictionary.layer_types
        try:
            repair_token(raw, kinds, self.budget)
        except NoMatch:
            raise _Fail(f"unreadable layer type {raw!r}") from None
        m = re.fullmatch(r"(.+)_[^_]{1,6}", name)
        prefix = m.group(1).lower() if m else None
        if prefix is not None and min(edit_distance(prefix, k.lower()) for k in kinds) > self.budget:
            prefix = None

        def cost(k):
            if len(k) == len(raw):
                c = sum(a != b for a, b in zip(raw, k))
            else:
                c = edit_distance(raw, k) + 1  # decay never changes lengths
            if prefix is not None:
                c += edit_distance(prefix, k.lower())
            return (c, -len(k), k)

        return min((k for k in kinds if edit_distance(raw, k) <= self.budget), key=cost)

    def port(self):
        vals = self.group(_PORT_OPEN)
        dims = []
        while True:
            label, d = self.choose([("dim", _DIM), ("end", [L("</port>")])])
            if label == "end":
                break
            dims.append(d["dim"])
            if len(dims) > 8:
                raise _Fail("too many dims")
        return _Port(vals["id"], vals["precision"], dims)

    def opaque(self, closer: str):
        """Skip an unparsed block; returns the (start, end) of its body."""
        body = self.pos
        t = self.t
        limit = min(len(t), body + 65536)
        for p in range(body, limit - len(closer) + 1):
            if t[p] != "<" and t[p + 1] != "/":
                continue
            seg = t[p:p + len(closer)]
            if sum(a != b for a, b in zip(seg, closer)) <= self.budget:
                if seg != closer:
                    self.repairs.append(XmlRepair(p, seg, closer))
                self.pos = p + len(closer)
                return body, p
        raise _Fail(f"unterminated {closer}")


# semantic repair


class _Edits:
    def __init__(self):
        self.items: list[XmlRepair] = []

    def put(self, slot: _Slot, value: str):
        if slot.raw != value:
            self.items.append(XmlRepair(slot.offset, slot.raw, value))


def _clean_text(s: str) -> str:
    s = "".join("_" if (ord(c) < 0x20 or c == "\x7f") else c for c in s)
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


def _canonical(slot: _Slot, allowed: tuple[str, ...], budget: int) -> str:
    if slot.raw in allowed:
        return slot.raw
    try:
        return repair_token(slot.raw, allowed, budget)
    except NoMatch:
        raise Unrepairable(f"cannot restore {slot.raw!r} at offset {slot.offset}") from None


def _rate(slot: _Slot) -> str:
    try:
        v = float(slot.raw)
        if 0.0 <= v < 1.0 and math.isfinite(v):
            return slot.raw
    except ValueError:
        pass
    options = [[ch] if not _bad_float(ch) else
               [d for d in "0123456789." if bin(ord(d) ^ ord(ch)).count("1") <= 2]
               for ch in slot.raw]
    best = None
    if all(options) and math.prod(len(o) for o in options) <= 4096:
        for combo in product(*options):
            s = "".join(combo)
            try:
                v = float(s)
            except ValueError:
                continue
            if 0.0 <= v < 1.0:
                key = (_loglik(s, slot.raw), s)
                if best is None or key > best:
                    best = key
    if best is None:
        raise Unrepairable(f"cannot restore dropout rate {slot.raw!r}")
    return best[1]


def _resolve(head, layers: list[_LayerObs], edges, budget: int) -> _Edits:
    ed = _Edits()
    n = len(layers)
    if n == 0:
        raise Unrepairable("no layers decoded")
    ed.put(head["version"], _canonical(head["version"], (IR_VERSION,), budget))
    ed.put(head["name"], _clean_text(head["name"].raw))

    # layer ids: id attribute, name suffix and edge endpoints all vote
    id_obs: list[list[str]] = [[lay.id.raw] for lay in layers]
    for k, lay in enumerate(layers):
        m = re.fullmatch(r"(.*)_([^_]{1,6})", lay.name.raw)
        if m and edit_distance(m.group(1), lay.kind.lower()) <= budget:
            id_obs[k].append(m.group(2))
    if len(edges) == n - 1:
        for j, e in enumerate(edges):
            id_obs[j].append(e["from-layer"].raw)
            id_obs[j + 1].append(e["to-layer"].raw)
    ids = [_decide_int(obs, extra=(k,), prefer=k) for k, obs in enumerate(id_obs)]
    if len(set(ids)) != n:
        ids = list(range(n))
    for lay, i in zip(layers, ids):
        ed.put(lay.id, str(i))
        default = default_layer_name(lay.kind, i)
        name = lay.name.raw
        ed.put(lay.name, default if edit_distance(name, default) <= budget else _clean_text(name))
        if lay.type.raw != lay.kind:
            ed.put(lay.type, lay.kind)

    for j, e in enumerate(edges):
        if len(edges) == n - 1:
            ed.put(e["from-layer"], str(ids[j]))
            ed.put(e["to-layer"], str(ids[j + 1]))
            src = SOURCE_OUTPUT_PORT if layers[j].kind == "Input" else OUTPUT_PORT
            ed.put(e["from-port"], str(src))
            ed.put(e["to-port"], str(INPUT_PORT))

    # ports: canonical ids and precision
    for lay in layers:
        if lay.out is None:
            raise Unrepairable("layer without output port")
        ed.put(lay.out.id, str(SOURCE_OUTPUT_PORT if lay.kind == "Input" else OUTPUT_PORT))
        ed.put(lay.out.precision, _canonical(lay.out.precision, (PRECISION,), budget))
        if lay.inp is not None:
            ed.put(lay.inp.id, str(INPUT_PORT))
            ed.put(lay.inp.precision, _canonical(lay.inp.precision, (PRECISION,), budget))

    for lay in layers:
        if lay.kind == "Dropout":
            ed.put(lay.data["rate"], _rate(lay.data["rate"]))
        if lay.kind == "Softmax":
            ed.put(lay.data["axis"], "1")
    _resolve_shapes(layers, ed)
    return ed


_TOP_DIM = 4
_TOP_SHAPE = 24
_TOP_HYPER = 5


def _scored(readings: list[str], top: int, zero: bool = False) -> list[tuple[float, int]]:
    """Best-scoring integer values behind a set of readings."""
    cands: set[int] = set()
    for r in readings:
        cands |= _int_candidates(r)
        for i, ch in enumerate(r):
            for d in _near_digits(ch) if not ch.isdigit() else "0123456789":
                if d != ch and bin(ord(d) ^ ord(ch)).count("1") == 1:
                    cands |= _int_candidates(r[:i] + d + r[i + 1:])
    if not zero:
        cands.discard(0)
    scored = [(sum(_loglik(str(c), r) for r in readings), c) for c in cands]
    scored.sort(key=lambda sc: (-sc[0], sc[1]))
    return scored[:top]


def _shape_options(per_dim: list[list[tuple[float, int]]]) -> list[tuple[float, tuple]]:
    opts = [(0.0, ())]
    for dim in per_dim:
        opts = [(s + ds, shape + (v,)) for s, shape in opts for ds, v in dim]
        opts.sort(key=lambda o: (-o[0], o[1]))
        opts = opts[:_TOP_SHAPE]
    return opts


def _window_fits(h, k_opts, s_opts, p_opts):
    """Best (score, k, s, p) per achievable output extent along one axis."""
    out: dict[int, tuple] = {}
    for ks, k in k_opts:
        for ss, st in s_opts:
            for ps, pd in p_opts:
                o = (h + 2 * pd - k) // st + 1
                if o <= 0 or k > h + 2 * pd:
                    continue
                sc = ks + ss + ps
                if o not in out or sc > out[o][0]:
                    out[o] = (sc, k, st, pd)
    return out


def _resolve_shapes(layers: list[_LayerObs], ed: _Edits) -> None:
    n = len(layers)
    starts = [k for k, lay in enumerate(layers) if k == 0 or lay.kind not in SHAPE_PRESERVING]
    owner = []
    for k in range(n):
        owner.append(k if k in starts else owner[k - 1])
    readings: dict[int, list[list[_Slot]]] = {c: [] for c in starts}
    for k, lay in enumerate(layers):
        readings[owner[k]].append(lay.out.dims)
        if k + 1 < n and layers[k + 1].inp is not None:
            readings[owner[k]].append(layers[k + 1].inp.dims)

    hyper: dict[int, dict[str, list[list[tuple[float, int]]]]] = {}
    for c in starts:
        lay = layers[c]
        if lay.kind in ("Conv2D", "MaxPool2D"):
            h = {key: [_scored([lay.data[key + part].raw], _TOP_HYPER) for part in "01"]
                 for key in ("kernel", "strides")}
            if lay.kind == "Conv2D":
                h["pads"] = [_scored([lay.data["pads" + part].raw], _TOP_HYPER, zero=True)
                             for part in "01"]
            else:
                h["pads"] = [[(0.0, 0)], [(0.0, 0)]]
            hyper[c] = h

    options: dict[int, list[tuple[float, tuple]]] = {}
    for c in starts:
        lay = layers[c]
        rs = readings[c]
        if lay.kind in ("Dense", "Flatten"):
            rank = 1
        elif lay.kind in ("Conv2D", "MaxPool2D"):
            rank = 3
        else:
            counts = Counter(len(r) - 1 for r in rs if len(r) >= 2)
            if not counts:
                raise Unrepairable(f"no usable shape for layer {c}")
            rank = max(sorted(counts), key=lambda r: counts[r])
        per_dim = []
        for i in range(rank):
            obs = [r[i + 1].raw for r in rs if len(r) == rank + 1]
            if i == 0 and lay.kind == "Dense":
                obs.append(lay.data["out-size"].raw)
            if i == 0 and lay.kind == "Conv2D":
                obs.append(lay.data["output"].raw)
            got = _scored(obs, _TOP_DIM) if obs else []
            if not got:
                raise Unrepairable(f"no reading for dim {i} of layer {c}")
            per_dim.append(got)
        options[c] = _shape_options(per_dim)

    def step(c, a, b):
        """Log-score of moving from shape ``a`` to ``b`` through layer ``c``."""
        kind = layers[c].kind
        if kind == "Flatten":
            return (0.0, None) if b == (math.prod(a),) else None
        if kind == "Dense":
            return (0.0, None) if len(a) == 1 else None
        if kind in ("Conv2D", "MaxPool2D"):
            if len(a) != 3 or (kind == "MaxPool2D" and a[0] != b[0]):
                return None
            h = hyper[c]
            total, picks = 0.0, []
            for axis in range(2):
                fits = _window_fits(a[axis + 1], h["kernel"][axis], h["strides"][axis],
                                    h["pads"][axis])
                if b[axis + 1] not in fits:
                    return None
                total += fits[b[axis + 1]][0]
                picks.append(fits[b[axis + 1]][1:])
            return total, picks
        return None

    # Viterbi over the shape chain
    best: dict[tuple, tuple] = {shape: (sc, None, None) for sc, shape in options[starts[0]]}
    trail = [best]
    for c in starts[1:]:
        nxt: dict[tuple, tuple] = {}
        for sc, shape in options[c]:
            for prev, (psc, _, _) in trail[-1].items():
                got = step(c, prev, shape)
                if got is None:
                    continue
                total = psc + sc + got[0]
                if shape not in nxt or total > nxt[shape][0]:
                    nxt[shape] = (total, prev, got[1])
        if not nxt:
            raise Unrepairable(f"no consistent shape for layer {c}")
        trail.append(nxt)
    shape = max(trail[-1], key=lambda s: (trail[-1][s][0], s))
    chosen: dict[int, tuple] = {}
    picks: dict[int, list] = {}
    for c, table in zip(reversed(starts), reversed(trail)):
        chosen[c] = shape
        _, prev, pk = table[shape]
        picks[c] = pk
        shape = prev

    for c in starts:
        shape = chosen[c]
        for r in readings[c]:
            if len(r) == len(shape) + 1:
                ed.put(r[0], "1")
                for i, v in enumerate(shape):
                    ed.put(r[i + 1], str(v))
        lay = layers[c]
        if lay.kind == "Dense":
            ed.put(lay.data["out-size"], str(shape[0]))
        if lay.kind == "Conv2D":
            ed.put(lay.data["output"], str(shape[0]))
        if lay.kind in ("Conv2D", "MaxPool2D"):
            (kh, sh, ph), (kw, sw, pw) = picks[c]
            vals = {"kernel": (kh, kw), "strides": (sh, sw), "pads": (ph, pw)}
            for key in ("kernel", "strides") + (("pads",) if lay.kind == "Conv2D" else ()):
                for axis in range(2):
                    ed.put(lay.data[key + str(axis)], str(vals[key][axis]))


def _apply(text: str, start: int, end: int, edits: list[XmlRepair]) -> str:
    out = []
    pos = start
    for r in sorted(edits, key=lambda r: (r.offset, len(r.original))):
        if r.offset < pos:
            raise Unrepairable("overlapping repairs")
        out.append(text[pos:r.offset])
        out.append(r.repaired)
        pos = r.offset + len(r.original)
    out.append(text[pos:end])
    return "".join(out)


def tags_balanced(text: str) -> bool:
    """True when every opened element is closed in order."""
    stack = []
    for m in re.finditer(r"<(/?)([A-Za-z_][\w\-.]*)[^<>]*?(/?)>", text):
        closing, name, selfclose = m.groups()
        if selfclose:
            continue
        if closing:
            if not stack or stack.pop() != name:
                return False
        else:
            stack.append(name)
    return not stack


@dataclass
class ArchitectureCarve:
    model: IRModel
    xml: str
    report: CarveReport


def find_anchors(data: np.ndarray, max_distance: int = MAX_ANCHOR_DISTANCE) -> list[int]:
    """Offsets whose bytes are within ``max_distance`` substitutions of the
    ``<net name="`` opener, closest first."""
    pat = np.frombuffer(ANCHOR.encode(), dtype=np.uint8)
    m = pat.size
    if data.size < m:
        return []
    span = data.size - m + 1
    mism = np.zeros(span, dtype=np.int16)
    for k in range(m):
        mism += data[k:k + span] != pat[k]
    hits = np.flatnonzero(mism <= max_distance)
    order = np.lexsort((hits, mism[hits]))
    return [int(h) for h in hits[order]]


def carve_architecture_xml(image: MemoryImage | bytes, *, max_distance: int = 2,
                           dictionary: TokenDictionary = DEFAULT_DICTIONARY) -> ArchitectureCarve:
    data = raw_bytes(image)
    anchors = find_anchors(data)
    if not anchors:
        raise NotFound("no <net> element found in the image")
    text = data.tobytes().decode("latin-1")
    problems = []
    for start in anchors[:MAX_CANDIDATES]:
        dec = _Decoder(text, start, max_distance, dictionary)
        try:
            head, layers, edges, cli = dec.net()
            ed = _resolve(head, layers, edges, max_distance)
            repairs = dec.repairs + ed.items
            if cli is not None:
                body = text[cli[0]:cli[1]]
                try:
                    ET.fromstring("<x>" + body + "</x>")
                except ET.ParseError:
                    repairs.append(XmlRepair(cli[0], body, "\n  "))
            repaired = _apply(text, start, dec.pos, repairs)
            if not tags_balanced(repaired):
                raise Unrepairable("tag structure could not be balanced")
            model = parse_xml(repaired)
        except (_Fail, Unrepairable, MalformedXml, SchemaViolation) as exc:
            problems.append(f"offset {start}: {exc}")
            continue
        repairs.sort(key=lambda r: r.offset)
        report = CarveReport(xml_found=True, xml_repairs=repairs, xml_offset=start)
        return ArchitectureCarve(model, repaired, report)
    raise Unrepairable("; ".join(problems[:4]))


def carve_architecture(image: MemoryImage | bytes, *, max_distance: int = 2,
                       dictionary: TokenDictionary = DEFAULT_DICTIONARY
                       ) -> tuple[IRModel, CarveReport]:
    """Find the ``<net>`` document in ``image``, repair it and parse it."""
    got = carve_architecture_xml(image, max_distance=max_distance, dictionary=dictionary)
    return got.model, got.report
