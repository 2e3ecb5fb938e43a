"""Serialization: binary field blobs, JSON reports, CSV tables, certificates.

Blob layout::

    16 bytes   magic  b"COULOMBLAB\\x00FLD1\\x00"
    4 bytes    little-endian uint32 header length n
    n bytes    UTF-8 JSON header (sorted keys)
    ...        body: zlib-compressed row-major (real, imag) float64 pairs
    32 bytes   sha256 of everything before it

A checksum mismatch raises :class:`IntegrityError`.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import struct
import zlib
from pathlib import Path

import numpy as np

from .forms import FormField
from .geometry import DomainGrid, build_grid, flat_metric, warped_metric
from .lie import su2

__all__ = [
    "MAGIC",
    "IntegrityError",
    "FormatError",
    "grid_meta",
    "grid_from_meta",
    "write_array",
    "read_array",
    "write_field",
    "read_field",
    "dumps_json",
    "write_json",
    "csv_table",
    "write_csv",
    "save_certificate",
    "load_certificate",
    "verify_certificate_file",
]

MAGIC = b"COULOMBLAB\x00FLD1\x00"
assert len(MAGIC) == 16


class IntegrityError(ValueError):
    pass


class FormatError(ValueError):
    pass


# --------------------------------------------------------------------------
# grids
# --------------------------------------------------------------------------


def grid_meta(grid: DomainGrid):
    return {
        "family": grid.spec.family,
        "params": {k: list(v) if isinstance(v, (list, tuple)) else v for k, v in grid.spec.params.items()},
        "n_lat": grid.n_lat,
        "n_norm": grid.n_norm,
    }


def grid_from_meta(meta) -> DomainGrid:
    fam = meta["family"]
    if fam == "flat":
        spec = flat_metric()
    elif fam == "warped":
        spec = warped_metric(meta["params"].get("phi", (0.0, 1.0)))
    else:
        raise FormatError(f"cannot rebuild a grid for metric family {fam!r}")
    return build_grid(spec, int(meta["n_lat"]), int(meta["n_norm"]))


# --------------------------------------------------------------------------
# blobs
# --------------------------------------------------------------------------


def _encode(array, meta):
    a = np.ascontiguousarray(np.asarray(array))
    pairs = np.empty(a.shape + (2,), dtype="<f8")
    pairs[..., 0] = a.real
    pairs[..., 1] = a.imag if np.iscomplexobj(a) else 0.0
    header = dict(meta)
    header["shape"] = list(a.shape)
    header["complex"] = bool(np.iscomplexobj(a))
    header["compression"] = "zlib"
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = zlib.compress(pairs.tobytes(order="C"), 6)
    payload = MAGIC + struct.pack("<I", len(hbytes)) + hbytes + body
    return payload + hashlib.sha256(payload).digest()


def _decode(data: bytes):
    if len(data) < 16 + 4 + 32 or data[:16] != MAGIC:
        raise FormatError("not a field blob (bad magic)")
    payload, digest = data[:-32], data[-32:]
    if hashlib.sha256(payload).digest() != digest:
        raise IntegrityError("checksum mismatch: blob is corrupted")
    (n,) = struct.unpack("<I", payload[16:20])
    header = json.loads(payload[20 : 20 + n].decode("utf-8"))
    raw = zlib.decompress(payload[20 + n :])
    pairs = np.frombuffer(raw, dtype="<f8").reshape(tuple(header["shape"]) + (2,))
    if header.get("complex"):
        arr = pairs[..., 0] + 1j * pairs[..., 1]
    else:
        arr = pairs[..., 0].copy()
    return arr, header


def write_array(path, array, meta=None):
    data = _encode(array, meta or {})
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def read_array(path):
    return _decode(Path(path).read_bytes())


def write_field(path, field: FormField):
    meta = {"kind": "form", "degree": field.degree, "algebra": field.algebra.name, "grid": grid_meta(field.grid)}
    return write_array(path, field.data, meta)


def read_field(path, grid: DomainGrid = None) -> FormField:
    arr, header = read_array(path)
    if header.get("kind") != "form":
        raise FormatError("blob does not hold a form field")
    if header.get("algebra", "su2") != su2.name:
        raise FormatError(f"unsupported algebra {header.get('algebra')!r}")
    if grid is None:
        grid = grid_from_meta(header["grid"])
    return FormField(int(header["degree"]), arr, grid, su2)


# --------------------------------------------------------------------------
# JSON and CSV
# --------------------------------------------------------------------------


def _clean(x):
    """Make a report JSON-safe with a fixed float format."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, float)):
        v = float(x)
        if math.isnan(v) or math.isinf(v):
            return str(v)
        return float(f"{v:.12e}")
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    return x


def dumps_json(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def write_json(path, obj):
    Path(path).write_text(dumps_json(obj), encoding="utf-8")


def csv_table(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([f"{v:.12e}" if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def write_csv(path, header, rows):
    Path(path).write_text(csv_table(header, rows), encoding="utf-8")


# --------------------------------------------------------------------------
# certificates
# --------------------------------------------------------------------------


def save_certificate(cert, directory):
    """Write a span certificate as manifest.json plus three blobs.

    The blobs hold the target, the stacked term sources psi_i and the
    recorded reconstruction sum; the manifest records each term's box and
    algebra elements and the sha256 of every blob.
    """
    from .spans import SpanCertificate

    if not isinstance(cert, SpanCertificate):
        raise TypeError("save_certificate takes a SpanCertificate")
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    grid = cert.grid
    sums = {}
    sums["target.clf"] = write_field(d / "target.clf", cert.target)
    psis = np.stack([t.psi for t in cert.terms]) if cert.terms else np.zeros((0,) + grid.shape)
    sums["psi.clf"] = write_array(d / "psi.clf", psis, {"kind": "psi", "grid": grid_meta(grid)})
    sums["reconstruction.clf"] = write_array(
        d / "reconstruction.clf", cert.reconstruction, {"kind": "reconstruction", "grid": grid_meta(grid)}
    )
    p = cert.profile
    manifest = {
        "format": "coulomb-lab-certificate/1",
        "grid": grid_meta(grid),
        "profile": {k: getattr(p, k) for k in ("j", "k", "i", "c", "d", "l", "ramp")},
        "error": cert.error,
        "div_residual": cert.div_residual,
        "cbc_trace": cert.cbc_trace,
        "terms": [
            {"cube": t.cube.as_dict(), "A": list(map(float, t.A)), "B": list(map(float, t.B)), "kind": t.kind}
            for t in cert.terms
        ],
        "blobs": sums,
    }
    (d / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return d


def load_certificate(directory):
    """Reload a certificate; every blob is checked against the manifest."""
    from .spans import BumpProfile, Cube, SpanCertificate, SpanTerm

    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text(encoding="utf-8"))
    for name, digest in manifest["blobs"].items():
        if hashlib.sha256((d / name).read_bytes()).hexdigest() != digest:
            raise IntegrityError(f"{name} does not match its manifest checksum")
    grid = grid_from_meta(manifest["grid"])
    target = read_field(d / "target.clf", grid)
    psis, _ = read_array(d / "psi.clf")
    rec, _ = read_array(d / "reconstruction.clf")
    terms = [
        SpanTerm(Cube.from_dict(t["cube"]), psis[i], np.array(t["A"]), np.array(t["B"]), t["kind"])
        for i, t in enumerate(manifest["terms"])
    ]
    profile = BumpProfile(**manifest["profile"])
    return SpanCertificate(
        target, terms, rec, manifest["error"], manifest["div_residual"], manifest["cbc_trace"], profile
    )


def verify_certificate_file(directory):
    """Recompute the sum from the stored recipes.

    Returns a dict with ``bit_exact`` (recomputed sum equals the stored one
    byte for byte) and the recomputed error next to the recorded one.
    """
    cert = load_certificate(directory)
    rec, err = cert.recheck()
    return {
        "bit_exact": bool(np.array_equal(rec, cert.reconstruction)),
        "recorded_error": cert.error,
        "recomputed_error": err,
        "error_agreement": abs(err - cert.error),
        "terms": len(cert.terms),
    }
