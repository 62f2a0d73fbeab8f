"""Assignment files, audit manifests and atomic output writing."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
import time
from pathlib import Path

import numpy as np

from .clustering import ROLE_ALTER, ROLE_EGO, EgoClusterSolution, Variant
from .errors import SchemaError
from .graph_model import NetworkType

SOLUTION_COLUMNS = ("member_id", "role", "variant", "attached_ego")
_ROLE_NAMES = {ROLE_EGO: "ego", ROLE_ALTER: "alter"}


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def solution_to_bytes(solution: EgoClusterSolution, delimiter: str = ",") -> bytes:
    """One row per member, sorted by member id."""
    ids = [str(x) for x in solution.member_ids.tolist()]
    roles = solution.role.tolist()
    variants = solution.variant.tolist()
    attached = solution.attached.tolist()
    vnames = {int(v): str(v) for v in Variant}
    lines = [delimiter.join(SOLUTION_COLUMNS)]
    for i, r, v, a in zip(ids, roles, variants, attached):
        lines.append(delimiter.join((i, _ROLE_NAMES[r], vnames[v], ids[a] if a >= 0 else "")))
    return ("\n".join(lines) + "\n").encode("utf-8")


def solution_manifest(solution: EgoClusterSolution, file_name: str, data: bytes, config: dict | None = None) -> dict:
    nt = solution.network_type
    return {
        "file": file_name,
        "sha256": sha256_bytes(data),
        "seed": solution.seed,
        "treatment_fraction": solution.treatment_fraction,
        "network_type": str(nt) if nt else None,
        "id_mode": solution.id_mode,
        "n_egos": solution.n_egos,
        "n_alters": solution.n_alters,
        "n_excluded_alters": int(len(solution.excluded_alters)),
        "config": config or {},
    }


def read_solution(source, *, id_mode: str = "string", seed: int = 0,
                  network_type: NetworkType | None = None) -> EgoClusterSolution:
    """Parse an assignment file written by :func:`solution_to_bytes`.

    Raises :class:`SchemaError` with ``field`` set to the offending column.
    """
    if isinstance(source, (str, os.PathLike)):
        text = Path(source).read_text(encoding="utf-8")
    elif isinstance(source, bytes):
        text = source.decode("utf-8")
    else:
        text = source.read()
    lines = text.splitlines()
    if not lines:
        raise SchemaError("solution file is empty", field="header")
    delim = "\t" if lines[0].count("\t") > lines[0].count(",") else ","
    reader = csv.reader(io.StringIO(text), delimiter=delim)
    header = [h.strip() for h in next(reader)]
    for col in SOLUTION_COLUMNS:
        if col not in header:
            raise SchemaError(f"solution file lacks column {col!r}", field=col)
    idx = {c: header.index(c) for c in SOLUTION_COLUMNS}

    ids, roles, variants, att_ids = [], [], [], []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) < len(header):
            raise SchemaError(f"line {lineno}: expected {len(header)} fields, got {len(row)}", field="row")
        raw_id = row[idx["member_id"]].strip()
        if not raw_id:
            raise SchemaError(f"line {lineno}: empty member_id", field="member_id")
        role = row[idx["role"]].strip().lower()
        if role not in ("ego", "alter"):
            raise SchemaError(f"line {lineno}: role must be 'ego' or 'alter', got {role!r}", field="role")
        try:
            var = Variant.parse(row[idx["variant"]])
        except ValueError:
            raise SchemaError(f"line {lineno}: bad variant {row[idx['variant']]!r}", field="variant") from None
        att = row[idx["attached_ego"]].strip()
        if (role == "ego") == bool(att):
            raise SchemaError(
                f"line {lineno}: attached_ego must be empty for egos and set for alters", field="attached_ego"
            )
        ids.append(raw_id)
        roles.append(ROLE_EGO if role == "ego" else ROLE_ALTER)
        variants.append(int(var))
        att_ids.append(att)

    if id_mode == "integer":
        try:
            member_ids = np.array([int(x) for x in ids], dtype=np.int64)
            att_conv = [int(x) if x else None for x in att_ids]
        except ValueError:
            raise SchemaError("non-integer member id in integer id mode", field="member_id") from None
    else:
        member_ids = np.array(ids, dtype=object)
        att_conv = [x or None for x in att_ids]

    order = np.argsort(member_ids, kind="stable")
    member_ids = member_ids[order]
    if len(member_ids) > 1 and np.any(member_ids[1:] == member_ids[:-1]):
        raise SchemaError("duplicate member_id", field="member_id")
    role_arr = np.array(roles, dtype=np.int8)[order]
    var_arr = np.array(variants, dtype=np.int8)[order]
    attached = np.full(len(member_ids), -1, dtype=np.int64)
    pos = {m: i for i, m in enumerate(member_ids.tolist())}
    for new_i, old_i in enumerate(order.tolist()):
        a = att_conv[old_i]
        if a is None:
            continue
        j = pos.get(a)
        if j is None or role_arr[j] != ROLE_EGO:
            raise SchemaError(f"attached_ego {a!r} is not an ego in the file", field="attached_ego")
        if var_arr[j] != var_arr[new_i]:
            raise SchemaError(f"alter {member_ids[new_i]!r} variant differs from its ego", field="variant")
        attached[new_i] = j
    return EgoClusterSolution(
        member_ids=member_ids, role=role_arr, variant=var_arr, attached=attached,
        seed=seed, network_type=network_type, id_mode=id_mode,
    )


def canonical_json(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n").encode("utf-8")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def timestamp() -> str:
    """UTC ISO timestamp; honours SOURCE_DATE_EPOCH for reproducible builds."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = int(epoch) if epoch else time.time()
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


def commit_outputs(out_dir, files: dict[str, bytes]) -> dict[str, str]:
    """Write all files or none: stage every file in a temp file, then rename.

    Returns name -> sha256 digest.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    staged = []
    try:
        for name, data in files.items():
            fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=out)
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            staged.append((tmp, out / name))
    except BaseException:
        for tmp, _ in staged:
            os.unlink(tmp)
        raise
    for tmp, dest in staged:
        os.replace(tmp, dest)
    return {name: sha256_bytes(data) for name, data in files.items()}


def verify_manifest(out_dir, manifest: dict) -> bool:
    out = Path(out_dir)
    return all(sha256_file(out / name) == digest for name, digest in manifest["outputs"].items())
