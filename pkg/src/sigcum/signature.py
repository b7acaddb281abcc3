"""Signatures of deterministic piecewise-linear + jump paths, and of sampled paths.

Jumps follow the Marcus (geometric) convention: a jump Δx multiplies the
signature on the right by exp(Δx).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, TextIO, Union

import numpy as np

from .tensor_core import (
    AlgebraShape,
    TruncatedTensor,
    concat_mul,
    exp_trunc,
    log_trunc,
    mpq,
    tensor_from_json,
    tensor_to_json,
)

_TIME_TOL = 1e-12


@dataclass(frozen=True)
class Linear:
    increment: TruncatedTensor
    duration: float

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError(f"linear segment needs positive duration, got {self.duration}")
        if self.increment.scalar != 0:
            raise ValueError("linear increment must lie in T_0")


@dataclass(frozen=True)
class Jump:
    dx: TruncatedTensor

    def __post_init__(self):
        if self.dx.scalar != 0:
            raise ValueError("jump increment must lie in T_0")


@dataclass(frozen=True)
class PathEvent:
    time: float
    kind: Union[Linear, Jump]

    @property
    def end(self) -> float:
        return self.time + self.kind.duration if isinstance(self.kind, Linear) else self.time


@dataclass(frozen=True)
class CadlagPath:
    """A deterministic driver given as an ordered list of events.

    Linear events carry a constant-rate increment over [time, time + duration];
    jumps sit at single time points. Stretches not covered by any event are
    constant. Events must not overlap and must be listed in time order.
    """

    shape: AlgebraShape
    events: tuple = ()
    t0: float = 0.0
    T: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        cursor = self.t0
        exact = None
        for i, ev in enumerate(self.events):
            inc = ev.kind.increment if isinstance(ev.kind, Linear) else ev.kind.dx
            if inc.shape != self.shape:
                raise ValueError(f"event {i}: tensor shape {inc.shape} != path shape {self.shape}")
            if exact is None:
                exact = inc.exact
            elif inc.exact != exact:
                raise ValueError(f"event {i}: mixed exact/float increments")
            if ev.time < cursor - _TIME_TOL:
                raise ValueError(f"event {i} at t={ev.time} overlaps or precedes t={cursor}")
            cursor = max(cursor, ev.end)
        if self.T is None:
            object.__setattr__(self, "T", cursor)
        elif self.T < cursor - _TIME_TOL:
            raise ValueError(f"terminal time {self.T} before last event end {cursor}")

    @property
    def exact(self) -> bool:
        for ev in self.events:
            return (ev.kind.increment if isinstance(ev.kind, Linear) else ev.kind.dx).exact
        return False

    @property
    def has_jumps(self) -> bool:
        return any(isinstance(ev.kind, Jump) for ev in self.events)

    def pieces(self, s: float, t: float) -> list[tuple[float, float, object]]:
        """Events restricted to (s, t], as (start, end, increment) with start == end for jumps."""
        out = []
        for ev in self.events:
            if isinstance(ev.kind, Jump):
                if s < ev.time <= t:
                    out.append((ev.time, ev.time, ev.kind.dx))
                continue
            a, b = max(ev.time, s), min(ev.end, t)
            if b - a <= _TIME_TOL:
                continue
            inc = ev.kind.increment
            if (a, b) != (ev.time, ev.end):
                if inc.exact:
                    inc = inc.scale((mpq(b) - mpq(a)) / mpq(ev.kind.duration))
                else:
                    inc = inc.scale((b - a) / ev.kind.duration)
            out.append((a, b, inc))
        return out

    def increment(self, s: float | None = None, t: float | None = None) -> TruncatedTensor:
        s = self.t0 if s is None else s
        t = self.T if t is None else t
        total = TruncatedTensor.zero(self.shape, self.exact)
        for _, _, inc in self.pieces(s, t):
            total = total + inc
        return total

    def breakpoints(self) -> list[float]:
        pts = {self.t0, self.T}
        for ev in self.events:
            pts.add(ev.time)
            pts.add(ev.end)
        return sorted(pts)


def sig_segment(x: TruncatedTensor) -> TruncatedTensor:
    """Signature of a constant-rate segment with increment x: exp(x)."""
    return exp_trunc(x)


def _check_interval(path: CadlagPath, s: float, t: float):
    if s > t:
        raise ValueError(f"empty or reversed interval ({s}, {t}]")
    if s < path.t0 - _TIME_TOL or t > path.T + _TIME_TOL:
        raise ValueError(f"interval ({s}, {t}] outside path domain [{path.t0}, {path.T}]")


def sig_path(path: CadlagPath, s: float | None = None, t: float | None = None) -> TruncatedTensor:
    """Ordered product of exp(increment) over the events in (s, t]."""
    s = path.t0 if s is None else s
    t = path.T if t is None else t
    _check_interval(path, s, t)
    g = TruncatedTensor.one(path.shape, path.exact)
    for _, _, inc in path.pieces(s, t):
        g = concat_mul(g, exp_trunc(inc))
    return g


def log_signature(path: CadlagPath, s: float | None = None, t: float | None = None) -> TruncatedTensor:
    return log_trunc(sig_path(path, s, t))


def sampled_brownian_signature(increments: np.ndarray, N: int) -> TruncatedTensor:
    """Signature of the piecewise-linear interpolation of a sampled path."""
    increments = np.atleast_2d(np.asarray(increments, dtype=np.float64))
    d = increments.shape[1]
    levels = batch_signature(increments[None, :, :], N)
    return TruncatedTensor(AlgebraShape(d, N), [lev[0] for lev in levels])


# ---------------------------------------------------------------------------
# batched kernels (leading axis = path)


def batch_identity(n_paths: int, d: int, N: int) -> list[np.ndarray]:
    levels = [np.ones((n_paths, 1))]
    levels += [np.zeros((n_paths, d**k)) for k in range(1, N + 1)]
    return levels


def batch_mul_exp(S: list[np.ndarray], v: np.ndarray) -> list[np.ndarray]:
    """S ⊗ exp(v) for a batch of level-1 vectors v (shape (P, d))."""
    N = len(S) - 1
    P = v.shape[0]
    powers = [np.ones((P, 1))]
    for k in range(1, N + 1):
        powers.append(np.einsum("pi,pj->pij", powers[-1], v).reshape(P, -1) / k)
    out = [S[0]]
    for n in range(1, N + 1):
        acc = S[n].copy()
        for k in range(1, n + 1):
            acc += np.einsum("pi,pj->pij", S[n - k], powers[k]).reshape(P, -1)
        out.append(acc)
    return out


def batch_signature(increments: np.ndarray, N: int) -> list[np.ndarray]:
    """Signatures of P piecewise-linear paths; increments has shape (P, steps, d)."""
    P, steps, d = increments.shape
    S = batch_identity(P, d, N)
    for j in range(steps):
        S = batch_mul_exp(S, increments[:, j, :])
    return S


# ---------------------------------------------------------------------------
# JSONL path format


def event_to_json(ev: PathEvent) -> dict:
    if isinstance(ev.kind, Linear):
        return {"t": ev.time, "kind": "linear", "dt": ev.kind.duration, "value": tensor_to_json(ev.kind.increment)}
    return {"t": ev.time, "kind": "jump", "value": tensor_to_json(ev.kind.dx)}


def read_path_jsonl(
    lines: Iterable[str],
    d: int | None = None,
    N: int | None = None,
    exact: bool | None = None,
    t0: float = 0.0,
) -> CadlagPath:
    """Parse one event per line. Tensors are re-embedded at level N when N is given."""
    from .tensor_core import extend, truncate

    events = []
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            rec = json.loads(line)
            kind = rec["kind"]
            t = float(rec["t"])
            value = tensor_from_json(rec["value"], exact)
        except (ValueError, KeyError, TypeError) as exc:
            raise ValueError(f"line {lineno}: malformed event ({exc})") from exc
        if d is not None and value.d != d:
            raise ValueError(f"line {lineno}: tensor has d={value.d}, expected {d}")
        if N is not None and value.N != N:
            value = truncate(value, N) if value.N > N else extend(value, N)
        if value.scalar != 0:
            raise ValueError(f"line {lineno}: increments must have zero scalar part")
        if kind == "linear":
            if "dt" not in rec:
                raise ValueError(f"line {lineno}: linear event without dt")
            events.append(PathEvent(t, Linear(value, float(rec["dt"]))))
        elif kind == "jump":
            events.append(PathEvent(t, Jump(value)))
        else:
            raise ValueError(f"line {lineno}: unknown kind {kind!r}")
    if not events:
        if d is None or N is None:
            raise ValueError("empty path file: pass d and N explicitly")
        return CadlagPath(AlgebraShape(d, N), (), t0)
    shapes = {(ev.kind.increment if isinstance(ev.kind, Linear) else ev.kind.dx).shape for ev in events}
    if len(shapes) != 1:
        raise ValueError(f"events use different shapes: {sorted((s.d, s.N) for s in shapes)}")
    return CadlagPath(shapes.pop(), tuple(events), t0)


def write_path_jsonl(path: CadlagPath, fh: TextIO):
    for ev in path.events:
        fh.write(json.dumps(event_to_json(ev)) + "\n")


def path_from_increments(increments: np.ndarray, dt: float, N: int, t0: float = 0.0) -> CadlagPath:
    """Piecewise-linear CadlagPath through sampled level-1 increments."""
    increments = np.atleast_2d(increments)
    shape = AlgebraShape(increments.shape[1], N)
    events = [
        PathEvent(t0 + j * dt, Linear(TruncatedTensor.from_vector(shape, v), dt)) for j, v in enumerate(increments)
    ]
    return CadlagPath(shape, tuple(events), t0)


def reversed_path(path: CadlagPath) -> CadlagPath:
    """Time reversal with negated increments; its signature inverts the original."""
    events = []
    for ev in reversed(path.events):
        start = path.T - ev.end + path.t0
        if isinstance(ev.kind, Linear):
            events.append(PathEvent(start, Linear(-ev.kind.increment, ev.kind.duration)))
        else:
            events.append(PathEvent(start, Jump(-ev.kind.dx)))
    return CadlagPath(path.shape, tuple(events), path.t0, path.T)
