"""Structured text documents (TOML) and atomic file output."""

from __future__ import annotations

import csv
import io
import os
import tempfile

import numpy as np
import tomli
import tomli_w


def read_toml(path) -> dict:
    with open(path, "rb") as fh:
        return tomli.load(fh)


def loads_toml(text: str) -> dict:
    return tomli.loads(text)


def _plain(obj):
    # tomli_w only knows builtin types
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items() if v is not None}
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps_toml(doc: dict) -> str:
    return tomli_w.dumps(_plain(doc))


def atomic_write(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_toml(path, doc: dict) -> None:
    atomic_write(path, dumps_toml(doc))


def csv_text(columns: list[str], rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(row.get(k, "")) for k in columns})
    return buf.getvalue()


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return value


def write_csv(path, columns: list[str], rows: list[dict]) -> None:
    atomic_write(path, csv_text(columns, rows))
