"""On-disk ground-state cache.

One file per state.  Layout: magic 'UMPS', format version, a JSON header
(key fields plus array shapes), then the arrays as little-endian complex128
pairs, and a sha256 checksum of the payload.  Reads verify the checksum and
never silently return corrupted data.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct

import numpy as np

from .errors import CacheError
from .models import ModelSpec
from .tebd import SCHEDULE_VERSION, UniformMPS

MAGIC = b"UMPS"
FORMAT_VERSION = 1


def cache_key(spec, chi, tol):
    """Content hash of everything that determines the stored state."""
    fields = spec.key_fields()
    fields.update({"chi": int(chi), "tol": float(tol),
                   "schedule_version": SCHEDULE_VERSION,
                   "format": FORMAT_VERSION})
    blob = json.dumps(fields, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:32]


def cache_path(cache_dir, spec, chi, tol):
    return os.path.join(cache_dir, f"umps-{cache_key(spec, chi, tol)}.bin")


def _pack_arrays(arrays):
    payload = b""
    shapes = []
    for a in arrays:
        a = np.ascontiguousarray(np.asarray(a, dtype=np.complex128))
        le = a.astype("<c16", copy=False)
        payload += le.tobytes()
        shapes.append(list(a.shape))
    return payload, shapes


def save_umps(path, mps, spec, chi, tol):
    groups = {
        "gammas": mps.gammas,
        "lams": mps.lams,
        "blocked_g": mps.blocked[0] if mps.blocked else [],
        "blocked_l": mps.blocked[1] if mps.blocked else [],
        "canon_g": mps.blocked_canonical[0] if mps.blocked_canonical else [],
        "canon_l": mps.blocked_canonical[1] if mps.blocked_canonical else [],
    }
    order = []
    arrays = []
    for name, arrs in groups.items():
        for a in arrs:
            order.append(name)
            arrays.append(a)
    payload, shapes = _pack_arrays(arrays)
    header = {
        "key": spec.key_fields(), "chi": int(chi), "tol": float(tol),
        "schedule_version": SCHEDULE_VERSION,
        "energy_per_site": mps.energy_per_site,
        "chi_actual": int(mps.chi),
        "sites_per_block": int(mps.sites_per_block),
        "order": order, "shapes": shapes,
    }
    hbytes = json.dumps(header, sort_keys=True).encode()
    checksum = hashlib.sha256(payload).hexdigest().encode()
    tmp = path + ".tmp"
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(hbytes)))
        fh.write(hbytes)
        fh.write(payload)
        fh.write(checksum)
    os.replace(tmp, path)


def load_umps(path):
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise CacheError(f"cannot read cache file {path}: {exc}") from exc
    if raw[:4] != MAGIC:
        raise CacheError(f"{path}: not a UMPS cache file")
    version, hlen = struct.unpack("<II", raw[4:12])
    if version != FORMAT_VERSION:
        raise CacheError(f"{path}: cache format {version} != {FORMAT_VERSION}")
    header = json.loads(raw[12:12 + hlen].decode())
    payload = raw[12 + hlen:-64]
    checksum = raw[-64:].decode()
    if hashlib.sha256(payload).hexdigest() != checksum:
        raise CacheError(f"{path}: checksum mismatch, refusing corrupted cache")
    arrays = []
    off = 0
    for shape in header["shapes"]:
        n = int(np.prod(shape)) if shape else 1
        a = np.frombuffer(payload, dtype="<c16", count=n, offset=off).reshape(shape)
        off += n * 16
        arrays.append(np.ascontiguousarray(a))
    groups = {k: [] for k in ("gammas", "lams", "blocked_g", "blocked_l",
                              "canon_g", "canon_l")}
    for name, a in zip(header["order"], arrays):
        groups[name].append(a)

    def _real(arrs):
        return [np.real(a).astype(float) for a in arrs]
    spec = ModelSpec(**header["key"])
    mps = UniformMPS(
        gammas=_real(groups["gammas"]),
        lams=_real(groups["lams"]),
        chi=header["chi_actual"],
        energy_per_site=header["energy_per_site"],
        model=spec,
        blocked=(_real(groups["blocked_g"]), _real(groups["blocked_l"]))
        if groups["blocked_g"] else None,
        blocked_canonical=(_real(groups["canon_g"]), _real(groups["canon_l"]))
        if groups["canon_g"] else None,
        sites_per_block=header.get("sites_per_block", 1),
    )
    return mps, header


def get_or_compute(cache_dir, spec, chi, tol, compute, log=None):
    """Cache wrapper: load on hit (checksum verified), else compute and save.

    A corrupted cache entry is reported and recomputed, never used.
    """
    path = cache_path(cache_dir, spec, chi, tol)
    if os.path.exists(path):
        try:
            mps, _ = load_umps(path)
            if log:
                log(f"cache hit: {path}")
            return mps, True
        except CacheError as exc:
            if log:
                log(f"cache invalid ({exc}); recomputing")
    mps = compute()
    save_umps(path, mps, spec, chi, tol)
    return mps, False
