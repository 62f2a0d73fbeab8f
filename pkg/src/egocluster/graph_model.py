"""Interaction-graph data model: alter -> ego edge snapshots.

A snapshot keeps one aggregated edge per (alter, ego) pair.  When the input
carried interaction kind and day offsets, the per-(alter, ego, kind, day)
event table is kept alongside so :func:`build_network` can re-slice it.

Members are encoded as indices into ``members``, the sorted array of unique
ids, so two snapshots built from the same rows are identical regardless of
row order.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import warnings
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import IO, Iterable

import numpy as np

from .errors import EgoClusterWarning, IngestError

KINDS = ("impression", "click", "like", "comment", "reshare", "viral_action")
_KIND_CODE = {k: i for i, k in enumerate(KINDS)}
_KIND_ALIASES = {
    "impressions": "impression",
    "clicks": "click",
    "likes": "like",
    "comments": "comment",
    "reshares": "reshare",
    "viral_actions": "viral_action",
    "viral": "viral_action",
}
_KIND_LABEL = {
    "impression": "impressions",
    "click": "clicks",
    "like": "likes",
    "comment": "comments",
    "reshare": "reshares",
    "viral_action": "viral actions",
}
NO_KIND = -1

DEFAULT_MIN_EGOS = 100_000


def normalize_kind(kind: str) -> str:
    k = kind.strip().lower().replace("-", "_").replace(" ", "_")
    k = _KIND_ALIASES.get(k, k)
    if k not in _KIND_CODE:
        raise ValueError(f"unknown interaction kind {kind!r}; expected one of {KINDS}")
    return k


@dataclass(frozen=True, order=True)
class NetworkType:
    kind: str
    window_days: int

    def __post_init__(self):
        object.__setattr__(self, "kind", normalize_kind(self.kind))
        if int(self.window_days) <= 0:
            raise ValueError(f"window_days must be positive, got {self.window_days}")
        object.__setattr__(self, "window_days", int(self.window_days))

    @classmethod
    def parse(cls, text: str) -> NetworkType:
        """Parse ``"viral_action:90"`` (also accepts ``/`` and a trailing ``d``)."""
        for sep in (":", "/", "@"):
            if sep in text:
                kind, window = text.split(sep, 1)
                break
        else:
            raise ValueError(f"network type {text!r} must look like 'kind:days'")
        return cls(kind, int(window.strip().rstrip("dD")))

    @property
    def sort_key(self) -> tuple[int, int]:
        return _KIND_CODE[self.kind], self.window_days

    @property
    def slug(self) -> str:
        return f"{self.kind}_{self.window_days}d"

    @property
    def label(self) -> str:
        return f"past {self.window_days} days {_KIND_LABEL[self.kind]}"

    def __str__(self) -> str:
        return f"{self.kind}:{self.window_days}"


@dataclass(frozen=True)
class Edge:
    alter: object
    ego: object
    weight: float
    day: int | None = None
    kind: str | None = None


@dataclass
class IngestReport:
    rows_read: int = 0
    rows_dropped: int = 0
    drop_reasons: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "rows_read": self.rows_read,
            "rows_dropped": self.rows_dropped,
            "drop_reasons": dict(sorted(self.drop_reasons.items())),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


@dataclass(frozen=True)
class EventTable:
    """Aggregated (alter, ego, kind, day) events sorted by that key."""

    alter: np.ndarray
    ego: np.ndarray
    kind: np.ndarray
    day: np.ndarray
    weight: np.ndarray

    def take(self, mask: np.ndarray) -> EventTable:
        return EventTable(self.alter[mask], self.ego[mask], self.kind[mask], self.day[mask], self.weight[mask])

    def recode(self, remap: np.ndarray) -> EventTable:
        return EventTable(remap[self.alter], remap[self.ego], self.kind, self.day, self.weight)


def _empty_ids(id_mode: str) -> np.ndarray:
    return np.empty(0, dtype=np.int64 if id_mode == "integer" else object)


def _group_starts(*keys: np.ndarray) -> np.ndarray:
    """Start offsets of runs of equal consecutive key tuples."""
    n = len(keys[0])
    if n == 0:
        return np.empty(0, dtype=np.int64)
    change = np.zeros(n, dtype=bool)
    change[0] = True
    for k in keys:
        change[1:] |= k[1:] != k[:-1]
    return np.flatnonzero(change)


@dataclass(frozen=True, eq=False)
class NetworkSnapshot:
    """Immutable weighted alter -> ego graph.

    ``alter``/``ego`` hold member codes (indices into ``members``); edges are
    sorted by (alter, ego) with exactly one row per pair.
    """

    members: np.ndarray
    alter: np.ndarray
    ego: np.ndarray
    weight: np.ndarray
    label: str = ""
    id_mode: str = "string"
    events: EventTable | None = None
    report: IngestReport | None = None
    dropped_self_weight: float = 0.0

    # -- construction -----------------------------------------------------

    @classmethod
    def from_arrays(
        cls,
        alters: Iterable,
        egos: Iterable,
        weights: Iterable[float],
        kinds: Iterable | None = None,
        days: Iterable[int] | None = None,
        *,
        label: str = "",
        id_mode: str | None = None,
        report: IngestReport | None = None,
    ) -> NetworkSnapshot:
        """Aggregate raw rows into a snapshot.

        ``kinds`` may be kind names or integer codes into :data:`KINDS`.
        Rows with alter == ego are dropped.  Negative weights raise.
        """
        alters = np.asarray(alters)
        egos = np.asarray(egos)
        weights = np.asarray(weights, dtype=np.float64)
        n = len(weights)
        if len(alters) != n or len(egos) != n:
            raise ValueError("alters, egos and weights must have equal length")
        if n and (not np.all(np.isfinite(weights)) or weights.min() < 0):
            raise ValueError("edge weights must be finite and non-negative")
        if id_mode is None:
            id_mode = "integer" if n and alters.dtype.kind in "iu" and egos.dtype.kind in "iu" else "string"
        if id_mode == "integer":
            alters = alters.astype(np.int64, copy=False)
            egos = egos.astype(np.int64, copy=False)
        else:
            alters = alters.astype(object, copy=False)
            egos = egos.astype(object, copy=False)

        has_events = kinds is not None or days is not None
        if has_events:
            kind_arr = _kind_codes(kinds, n)
            day_arr = np.zeros(n, dtype=np.int64) if days is None else np.asarray(days, dtype=np.int64)

        if n == 0:
            members = _empty_ids(id_mode)
            a = e = np.empty(0, dtype=np.int64)
        else:
            members, inverse = np.unique(np.concatenate([alters, egos]), return_inverse=True)
            inverse = inverse.astype(np.int64, copy=False).reshape(-1)
            a, e = inverse[:n], inverse[n:]

        loops = a == e
        dropped_self = float(weights[loops].sum()) if loops.any() else 0.0
        if loops.any():
            keep = ~loops
            a, e, weights = a[keep], e[keep], weights[keep]
            if has_events:
                kind_arr, day_arr = kind_arr[keep], day_arr[keep]
            if report is None:
                report = IngestReport(rows_read=n)
            report.rows_dropped += int(loops.sum())
            report.drop_reasons["self_interaction"] = report.drop_reasons.get("self_interaction", 0) + int(loops.sum())

        if has_events:
            # canonical order (weight last) makes the float sums order-independent
            order = np.lexsort((weights, day_arr, kind_arr, e, a))
            a, e, kind_arr, day_arr, weights = a[order], e[order], kind_arr[order], day_arr[order], weights[order]
            starts = _group_starts(a, e, kind_arr, day_arr)
            events = EventTable(
                a[starts], e[starts], kind_arr[starts], day_arr[starts],
                np.add.reduceat(weights, starts) if len(starts) else weights[:0],
            )
            snap = cls._from_events(members, events, label=label, id_mode=id_mode, report=report)
        else:
            order = np.lexsort((weights, e, a))
            a, e, weights = a[order], e[order], weights[order]
            starts = _group_starts(a, e)
            w = np.add.reduceat(weights, starts) if len(starts) else weights[:0]
            snap = cls(members, a[starts], e[starts], w, label=label, id_mode=id_mode, report=report)
            snap = snap._pruned()
        object.__setattr__(snap, "dropped_self_weight", dropped_self)
        return snap

    @classmethod
    def _from_events(cls, members, events: EventTable, **kwargs) -> NetworkSnapshot:
        starts = _group_starts(events.alter, events.ego)
        w = np.add.reduceat(events.weight, starts) if len(starts) else events.weight[:0]
        snap = cls(members, events.alter[starts], events.ego[starts], w, events=events, **kwargs)
        return snap._pruned()

    @classmethod
    def from_edges(cls, edges: Iterable[Edge | tuple], **kwargs) -> NetworkSnapshot:
        """Convenience constructor from ``Edge`` objects or (alter, ego, weight[, day, kind]) tuples."""
        rows = [e if isinstance(e, Edge) else Edge(*e) for e in edges]
        kinds = days = None
        if any(r.kind is not None for r in rows) or any(r.day is not None for r in rows):
            kinds = [r.kind if r.kind is not None else NO_KIND for r in rows]
            days = [r.day if r.day is not None else 0 for r in rows]
        return cls.from_arrays(
            [r.alter for r in rows], [r.ego for r in rows], [r.weight for r in rows],
            kinds, days, **kwargs,
        )

    def _pruned(self) -> NetworkSnapshot:
        """Drop members with no remaining edges and re-encode codes."""
        used = np.zeros(len(self.members), dtype=bool)
        used[self.alter] = True
        used[self.ego] = True
        if used.all():
            return self
        remap = np.cumsum(used) - 1
        events = self.events.recode(remap) if self.events is not None else None
        return NetworkSnapshot(
            self.members[used], remap[self.alter], remap[self.ego], self.weight,
            label=self.label, id_mode=self.id_mode, events=events, report=self.report,
        )

    def with_label(self, label: str) -> NetworkSnapshot:
        return NetworkSnapshot(
            self.members, self.alter, self.ego, self.weight, label=label,
            id_mode=self.id_mode, events=self.events, report=self.report,
        )

    # -- views ------------------------------------------------------------

    @property
    def n_edges(self) -> int:
        return len(self.weight)

    @property
    def n_members(self) -> int:
        return len(self.members)

    @property
    def total_weight(self) -> float:
        return float(self.weight.sum())

    @cached_property
    def ego_codes(self) -> np.ndarray:
        return np.unique(self.ego)

    @cached_property
    def alter_codes(self) -> np.ndarray:
        return np.unique(self.alter)

    @property
    def egos(self) -> np.ndarray:
        return self.members[self.ego_codes]

    @property
    def alters(self) -> np.ndarray:
        return self.members[self.alter_codes]

    @cached_property
    def alter_indptr(self) -> np.ndarray:
        """CSR row pointer over member codes for the by-alter adjacency."""
        return np.searchsorted(self.alter, np.arange(self.n_members + 1))

    @cached_property
    def ego_order(self) -> np.ndarray:
        """Edge permutation sorting edges by (ego, alter)."""
        return np.lexsort((self.alter, self.ego))

    @cached_property
    def ego_indptr(self) -> np.ndarray:
        return np.searchsorted(self.ego[self.ego_order], np.arange(self.n_members + 1))

    def codes_of(self, ids) -> np.ndarray:
        """Member codes for ``ids``; -1 where an id is not in the snapshot."""
        ids = np.asarray(ids, dtype=self.members.dtype)
        if len(self.members) == 0:
            return np.full(len(ids), -1, dtype=np.int64)
        pos = np.searchsorted(self.members, ids)
        pos_c = np.minimum(pos, len(self.members) - 1)
        found = self.members[pos_c] == ids
        return np.where(found, pos_c, -1).astype(np.int64)

    def edges_of_alter(self, alter_id) -> list[tuple[object, float]]:
        code = int(self.codes_of([alter_id])[0])
        if code < 0:
            return []
        lo, hi = self.alter_indptr[code], self.alter_indptr[code + 1]
        return [(self.members[e], float(w)) for e, w in zip(self.ego[lo:hi], self.weight[lo:hi])]

    def edges_of_ego(self, ego_id) -> list[tuple[object, float]]:
        code = int(self.codes_of([ego_id])[0])
        if code < 0:
            return []
        lo, hi = self.ego_indptr[code], self.ego_indptr[code + 1]
        idx = self.ego_order[lo:hi]
        return [(self.members[a], float(w)) for a, w in zip(self.alter[idx], self.weight[idx])]

    def edge_dict(self) -> dict[tuple[object, object], float]:
        m = self.members.tolist()
        return {(m[a], m[e]): w for a, e, w in zip(self.alter.tolist(), self.ego.tolist(), self.weight.tolist())}

    def equals(self, other: NetworkSnapshot) -> bool:
        same = (
            self.id_mode == other.id_mode
            and np.array_equal(self.members, other.members)
            and np.array_equal(self.alter, other.alter)
            and np.array_equal(self.ego, other.ego)
            and np.array_equal(self.weight, other.weight)
        )
        if not same or (self.events is None) != (other.events is None):
            return same and self.events is None and other.events is None
        if self.events is None:
            return True
        return all(
            np.array_equal(getattr(self.events, f), getattr(other.events, f))
            for f in ("alter", "ego", "kind", "day", "weight")
        )

    def take_edges(self, mask: np.ndarray, *, label: str | None = None) -> NetworkSnapshot:
        """Keep the edges selected by ``mask`` (aggregated-edge level, drops events)."""
        snap = NetworkSnapshot(
            self.members, self.alter[mask], self.ego[mask], self.weight[mask],
            label=self.label if label is None else label, id_mode=self.id_mode,
        )
        return snap._pruned()

    def __repr__(self) -> str:
        return (
            f"NetworkSnapshot(label={self.label!r}, members={self.n_members}, "
            f"edges={self.n_edges}, egos={len(self.ego_codes)}, alters={len(self.alter_codes)})"
        )


def _kind_codes(kinds, n: int) -> np.ndarray:
    if kinds is None:
        return np.full(n, NO_KIND, dtype=np.int64)
    arr = np.asarray(kinds)
    if arr.dtype.kind in "iu":
        return arr.astype(np.int64)
    out = np.empty(n, dtype=np.int64)
    cache: dict = {}
    for i, k in enumerate(arr.tolist()):
        if k not in cache:
            cache[k] = NO_KIND if k in (None, "", NO_KIND) else _KIND_CODE[normalize_kind(str(k))]
        out[i] = cache[k]
    return out


# -- ingestion ---------------------------------------------------------------


@dataclass
class EdgeSchema:
    """Column mapping for edge-list files.

    With ``header=True`` the mapping values are header names; otherwise they
    are zero-based column positions.  ``kind``/``day`` may be None when the
    file has no such columns; ``default_kind`` then tags every row.
    """

    alter: str | int = "alter_id"
    ego: str | int = "ego_id"
    weight: str | int = "weight"
    kind: str | int | None = "kind"
    day: str | int | None = "day"
    header: bool = True
    delimiter: str | None = None
    default_kind: str | None = None


def _sniff_delimiter(first_line: str) -> str:
    return "\t" if first_line.count("\t") > first_line.count(",") else ","


def _open_text(source) -> tuple[IO[str], bool]:
    if isinstance(source, (str, os.PathLike)):
        return open(source, "r", newline="", encoding="utf-8"), True
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8"), newline=""), True
    if isinstance(source, io.TextIOBase):
        return source, False
    return io.TextIOWrapper(source, encoding="utf-8", newline=""), False


def ingest_edges(
    source,
    schema: EdgeSchema | None = None,
    id_mode: str = "string",
    *,
    error_budget: int = 100,
    label: str = "",
) -> NetworkSnapshot:
    """Read a delimiter-separated edge list into a snapshot.

    Malformed rows are skipped and counted until ``error_budget`` is exceeded.
    A negative weight or an input without data rows raises :class:`IngestError`.
    The ingestion report is attached as ``snapshot.report``.
    """
    if id_mode not in ("string", "integer"):
        raise ValueError(f"id_mode must be 'string' or 'integer', got {id_mode!r}")
    schema = schema or EdgeSchema()
    fh, owned = _open_text(source)
    try:
        return _ingest(fh, schema, id_mode, error_budget, label)
    finally:
        if owned:
            fh.close()


def _ingest(fh: IO[str], schema: EdgeSchema, id_mode: str, error_budget: int, label: str) -> NetworkSnapshot:
    first = fh.readline()
    while first and not first.strip():
        first = fh.readline()
    if not first:
        raise IngestError("edge input is empty")
    delim = schema.delimiter or _sniff_delimiter(first)
    body = csv.reader(fh, delimiter=delim)

    if schema.header:
        header = [h.strip() for h in next(csv.reader([first], delimiter=delim))]
        cols = {}
        for role in ("alter", "ego", "weight", "kind", "day"):
            name = getattr(schema, role)
            if name is None:
                continue
            if name in header:
                cols[role] = header.index(name)
            elif role in ("kind", "day"):
                continue
            else:
                raise IngestError(f"header is missing column {name!r} (found {header})")
        rows = body
    else:
        cols = {r: int(getattr(schema, r)) for r in ("alter", "ego", "weight", "kind", "day") if getattr(schema, r) is not None}
        rows = _chain_first(csv.reader([first], delimiter=delim), body)

    want_events = "kind" in cols or "day" in cols or schema.default_kind is not None
    default_kind = _KIND_CODE[normalize_kind(schema.default_kind)] if schema.default_kind else NO_KIND
    width = max(cols.values()) + 1
    parse_id = _parse_int_id if id_mode == "integer" else _parse_str_id

    alters: list = []
    egos: list = []
    weights: list[float] = []
    kinds: list[int] = []
    days: list[int] = []
    reasons: Counter = Counter()
    rows_read = 0
    malformed = 0
    kind_cache: dict[str, int] = {}

    for lineno, row in enumerate(rows, start=2 if schema.header else 1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        rows_read += 1
        reason = None
        if len(row) < width:
            reason = "field_count"
        else:
            a = parse_id(row[cols["alter"]])
            e = parse_id(row[cols["ego"]])
            if a is None or e is None:
                reason = "bad_id"
            else:
                try:
                    w = float(row[cols["weight"]])
                except ValueError:
                    w = math.nan
                if not math.isfinite(w):
                    reason = "bad_weight"
                elif w < 0:
                    raise IngestError(f"line {lineno}: negative weight {w}")
            if reason is None and "kind" in cols:
                raw = row[cols["kind"]]
                k = kind_cache.get(raw)
                if k is None and not raw.strip():
                    k = kind_cache[raw] = default_kind
                if k is None:
                    try:
                        k = _KIND_CODE[normalize_kind(raw)]
                    except ValueError:
                        k = -2
                    kind_cache[raw] = k
                if k == -2:
                    reason = "bad_kind"
            else:
                k = default_kind
            if reason is None and "day" in cols:
                try:
                    d = int(row[cols["day"]])
                except ValueError:
                    reason = "bad_day"
            else:
                d = 0
        if reason is not None:
            malformed += 1
            reasons[reason] += 1
            if malformed > error_budget:
                raise IngestError(
                    f"line {lineno}: {reason}; malformed rows exceed error budget of {error_budget}"
                )
            continue
        alters.append(a)
        egos.append(e)
        weights.append(w)
        kinds.append(k)
        days.append(d)

    if not weights:
        raise IngestError("edge input contains no usable rows")

    report = IngestReport(rows_read=rows_read, rows_dropped=malformed, drop_reasons=dict(reasons))
    dtype = np.int64 if id_mode == "integer" else object
    return NetworkSnapshot.from_arrays(
        np.array(alters, dtype=dtype), np.array(egos, dtype=dtype), np.array(weights),
        np.array(kinds, dtype=np.int64) if want_events else None,
        np.array(days, dtype=np.int64) if want_events else None,
        label=label, id_mode=id_mode, report=report,
    )


def _chain_first(first_rows, rest):
    yield from first_rows
    yield from rest


def _parse_str_id(s: str):
    s = s.strip()
    return s or None


def _parse_int_id(s: str):
    try:
        v = int(s.strip())
    except ValueError:
        return None
    return v if -(1 << 63) <= v < (1 << 63) else None


# -- slicing -----------------------------------------------------------------


def build_network(snapshot: NetworkSnapshot, network_type: NetworkType) -> NetworkSnapshot:
    """Restrict to one interaction kind and lookback window, re-aggregated.

    ``day`` is the age of an interaction in days before the snapshot origin;
    an event is inside the window when ``0 <= day < window_days``.
    """
    ev = snapshot.events
    if ev is None:
        raise ValueError("snapshot carries no kind/day metadata; ingest with kind/day columns or a default_kind")
    code = _KIND_CODE[network_type.kind]
    mask = (ev.kind == code) & (ev.day >= 0) & (ev.day < network_type.window_days)
    if not np.any(ev.kind == code):
        warnings.warn(f"no {network_type.kind!r} interactions in snapshot; network is empty", EgoClusterWarning, stacklevel=2)
    label = snapshot.label or str(network_type)
    return NetworkSnapshot._from_events(
        snapshot.members, ev.take(mask), label=label, id_mode=snapshot.id_mode,
    )


def restrict_egos(snapshot: NetworkSnapshot, ego_list, *, min_egos: int = DEFAULT_MIN_EGOS) -> NetworkSnapshot:
    """Keep only edges whose ego is in ``ego_list``."""
    ego_list = list(ego_list)
    if not ego_list:
        raise ValueError("ego_list must be non-empty")
    codes = snapshot.codes_of(ego_list)
    codes = codes[codes >= 0]
    if snapshot.events is not None:
        ev = snapshot.events.take(np.isin(snapshot.events.ego, codes))
        out = NetworkSnapshot._from_events(snapshot.members, ev, label=snapshot.label, id_mode=snapshot.id_mode)
    else:
        out = snapshot.take_edges(np.isin(snapshot.ego, codes))
    if out.n_edges == 0:
        raise IngestError("restricting to the custom ego list left no edges")
    n_egos = len(out.ego_codes)
    if n_egos < min_egos:
        warnings.warn(
            f"only {n_egos} egos after restriction; at least {min_egos} recommended for adequate power",
            EgoClusterWarning, stacklevel=2,
        )
    return out


def write_edges(snapshot: NetworkSnapshot, dest, *, delimiter: str = ",") -> None:
    """Write the snapshot in the edge-list format read by :func:`ingest_edges`.

    Event-level rows (with kind and day) are written when available.
    """
    m = snapshot.members.tolist()
    buf = io.StringIO()
    w = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    if snapshot.events is not None:
        ev = snapshot.events
        w.writerow(["alter_id", "ego_id", "weight", "kind", "day"])
        for a, e, wt, k, d in zip(ev.alter.tolist(), ev.ego.tolist(), ev.weight.tolist(), ev.kind.tolist(), ev.day.tolist()):
            w.writerow([m[a], m[e], repr(wt), KINDS[k] if k >= 0 else "", d])
    else:
        w.writerow(["alter_id", "ego_id", "weight"])
        for a, e, wt in zip(snapshot.alter.tolist(), snapshot.ego.tolist(), snapshot.weight.tolist()):
            w.writerow([m[a], m[e], repr(wt)])
    text = buf.getvalue()
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        dest.write(text)
