"""JSON and CSV marshalling for systems, series, certificates and curves.

Complex scalars are encoded as two-element arrays [re, im]; complex matrices
as nested lists of such pairs.  All artifact writes go through a temp file
plus rename so consumers never observe a partial file.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .certify import StabilityCertificate, Verdict
from .errors import StructureError
from .focksim import FockTrajectory
from .model import LinearQuantumSystem
from .opa import RegionCurve
from .perturbation import PerturbationSeries, SectorBounds

__all__ = [
    "atomic_write_text",
    "complex_to_pair",
    "pair_to_complex",
    "matrix_to_json",
    "matrix_from_json",
    "system_to_json",
    "system_from_json",
    "series_to_json",
    "series_from_json",
    "bounds_from_json",
    "certificate_to_json",
    "certificate_from_json",
    "region_csv",
    "scan_csv",
    "trajectory_csv",
]


def atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def complex_to_pair(z: complex) -> list[float]:
    z = complex(z)
    return [z.real, z.imag]


def pair_to_complex(pair) -> complex:
    if not isinstance(pair, (list, tuple)) or len(pair) != 2:
        raise StructureError(f"complex entries must be [re, im] pairs, got {pair!r}")
    return complex(float(pair[0]), float(pair[1]))


def matrix_to_json(matrix: np.ndarray) -> list:
    matrix = np.asarray(matrix, dtype=complex)
    return [[complex_to_pair(entry) for entry in row] for row in matrix]


def matrix_from_json(data) -> np.ndarray:
    return np.array(
        [[pair_to_complex(entry) for entry in row] for row in data], dtype=complex
    )


_SYSTEM_BLOCKS = ("M1", "M2", "N1", "N2", "E1", "E2")


def system_to_json(sys: LinearQuantumSystem) -> dict:
    doc = {"n": sys.n, "m": sys.m, "p": sys.p}
    for name in _SYSTEM_BLOCKS:
        doc[name] = matrix_to_json(getattr(sys, name))
    return doc


def system_from_json(doc: dict) -> LinearQuantumSystem:
    missing = [name for name in _SYSTEM_BLOCKS if name not in doc]
    if missing:
        raise StructureError(f"system document missing blocks: {', '.join(missing)}")
    blocks = {name: matrix_from_json(doc[name]) for name in _SYSTEM_BLOCKS}
    return LinearQuantumSystem(**blocks)


def series_to_json(series: PerturbationSeries) -> dict:
    terms = [
        {"i": i, "j": j, "k": k, "l": l, "re": c.real, "im": c.imag}
        for (i, j, k, l), c in sorted(series.coeffs.items())
    ]
    return {"p": series.p, "terms": terms}


def series_from_json(doc: dict) -> PerturbationSeries:
    if "p" not in doc or "terms" not in doc:
        raise StructureError("series document needs 'p' and 'terms'")
    coeffs = {}
    for term in doc["terms"]:
        try:
            key = (int(term["i"]), int(term["j"]), int(term["k"]), int(term["l"]))
            value = complex(float(term["re"]), float(term.get("im", 0.0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise StructureError(f"malformed series term {term!r}") from exc
        coeffs[key] = coeffs.get(key, 0j) + value
    return PerturbationSeries(p=int(doc["p"]), coeffs=coeffs)


def bounds_from_json(doc: dict) -> SectorBounds:
    try:
        return SectorBounds(
            gamma=float(doc["gamma"]),
            delta1=float(doc.get("delta1", 0.0)),
            delta2=float(doc.get("delta2", 0.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise StructureError(f"malformed bounds document: {exc}") from exc


def _scalar(value):
    if value is None:
        return None
    value = float(value)
    return value if math.isfinite(value) else None


def certificate_to_json(cert: StabilityCertificate) -> dict:
    doc = {
        "verdict": cert.verdict.value,
        "gamma": cert.gamma,
        "abscissa": cert.abscissa,
        "hinf_primary": _scalar(cert.hinf_primary),
        "hinf_reduced": _scalar(cert.hinf_reduced),
        "F": matrix_to_json(cert.F),
        "P": matrix_to_json(cert.P) if cert.P is not None else None,
        "mu": [complex_to_pair(m) for m in cert.mu] if cert.mu is not None else None,
        "lambda_tilde": cert.lambda_tilde,
        "lambda": cert.lam,
        "c": cert.c,
        "c1": cert.c1,
        "c2": cert.c2,
        "c3": cert.c3,
        "eps": cert.eps,
    }
    if cert.invariant_level is not None:
        doc["invariant_level"] = cert.invariant_level
    return doc


def certificate_from_json(doc: dict) -> StabilityCertificate:
    hinf_primary = doc.get("hinf_primary")
    hinf_reduced = doc.get("hinf_reduced")
    return StabilityCertificate(
        verdict=Verdict(doc["verdict"]),
        gamma=float(doc["gamma"]),
        F=matrix_from_json(doc["F"]),
        abscissa=float(doc["abscissa"]),
        hinf_primary=math.inf if hinf_primary is None else float(hinf_primary),
        hinf_reduced=math.inf if hinf_reduced is None else float(hinf_reduced),
        P=matrix_from_json(doc["P"]) if doc.get("P") is not None else None,
        mu=(
            np.array([pair_to_complex(m) for m in doc["mu"]])
            if doc.get("mu") is not None
            else None
        ),
        lambda_tilde=doc.get("lambda_tilde"),
        lam=doc.get("lambda"),
        c=doc.get("c"),
        c1=doc.get("c1"),
        c2=doc.get("c2"),
        c3=doc.get("c3"),
        eps=doc.get("eps"),
        invariant_level=doc.get("invariant_level"),
    )


def region_csv(curve: RegionCurve) -> str:
    lines = ["z1sq,z2sq_cap,active_constraint"]
    for z1sq, cap, active in curve.samples:
        lines.append(f"{float(z1sq)!r},{float(cap)!r},{active}")
    return "\n".join(lines) + "\n"


def scan_csv(grids, mask, margin1, margin2) -> str:
    """Admissibility mask over a two-channel magnitude grid."""
    if len(grids) != 2:
        raise StructureError("scan CSV is defined for two channels")
    g1, g2 = (np.asarray(g, dtype=float) for g in grids)
    lines = ["|z1|^2,|z2|^2,admissible,margin1,margin2"]
    for i, a in enumerate(g1):
        for j, b in enumerate(g2):
            lines.append(
                f"{float(a)!r},{float(b)!r},{int(mask[i, j])},"
                f"{float(margin1[i, j])!r},{float(margin2[i, j])!r}"
            )
    return "\n".join(lines) + "\n"


def trajectory_csv(traj: FockTrajectory) -> str:
    if traj.bound is None or traj.slack is None:
        raise StructureError("trajectory must be bound-checked before serialization")
    lines = ["t,msq,bound,slack"]
    for t, m, b, s in zip(traj.times, traj.msq, traj.bound, traj.slack):
        lines.append(f"{float(t)!r},{float(m)!r},{float(b)!r},{float(s)!r}")
    return "\n".join(lines) + "\n"


def dump_json(doc: dict, path: str | Path) -> None:
    atomic_write_text(path, json.dumps(doc, indent=2) + "\n")
