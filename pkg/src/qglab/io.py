"""Serialisation of results: JSON documents and CSV tables.

JSON floats are written with ``repr`` (shortest round-trip form), CSV floats
with 17 significant digits, so both round-trip bit for bit.  The layout is
described in ``docs/schema.md``.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict
from typing import Any

from .floquet import BandStructure, FlatBand, Gap, GapReport, ThetaSample, find_gaps
from .manifold.study import ConvergenceReport, EpsRun
from .spectrum import Spectrum

SCHEMA = "qglab.result/1"
CSV_SCHEMA = {
    "spectrum": "qglab.spectrum.csv/1",
    "bands": "qglab.bands.csv/1",
    "gaps": "qglab.gaps.csv/1",
    "convergence": "qglab.convergence.csv/1",
}


class SchemaError(ValueError):
    pass


# ---------------------------------------------------------------------------
# payload <-> dict


def spectrum_to_dict(s: Spectrum) -> dict:
    return {"values": list(s.values), "multiplicities": list(s.multiplicities),
            "residuals": list(s.residuals), "cutoff": s.cutoff}


def spectrum_from_dict(d: dict) -> Spectrum:
    return Spectrum(tuple(float(x) for x in d["values"]), tuple(int(x) for x in d["multiplicities"]),
                    tuple(float(x) for x in d["residuals"]), float(d["cutoff"]))


def _gap_dict(g: Gap) -> dict:
    return asdict(g)


def gaps_to_dict(r: GapReport) -> dict:
    return {"band_gaps": [_gap_dict(g) for g in r.band_gaps],
            "spectral_gaps": [_gap_dict(g) for g in r.spectral_gaps],
            "touching": list(r.touching)}


def gaps_from_dict(d: dict) -> GapReport:
    return GapReport(tuple(Gap(**g) for g in d["band_gaps"]),
                     tuple(Gap(**g) for g in d["spectral_gaps"]),
                     tuple(float(x) for x in d["touching"]))


def bands_to_dict(b: BandStructure) -> dict:
    return {"group": b.group, "model": b.model, "c": b.c,
            "bands": [list(x) for x in b.bands],
            "flat_bands": [asdict(f) for f in b.flat_bands],
            "cutoff": b.cutoff, "gaps": gaps_to_dict(find_gaps(b))}


def bands_from_dict(d: dict) -> BandStructure:
    return BandStructure(d["group"], d["model"], d["c"],
                         tuple((float(a), float(b)) for a, b in d["bands"]),
                         tuple(FlatBand(**f) for f in d["flat_bands"]), float(d["cutoff"]))


def samples_to_dict(samples: list[ThetaSample]) -> list[dict]:
    return [{"theta": list(s.theta), "spectrum": spectrum_to_dict(s.spectrum)} for s in samples]


def report_to_dict(r: ConvergenceReport) -> dict:
    return {"regime": r.regime, "alpha": r.alpha, "eps": list(r.eps), "k": r.k,
            "runs": [{"eps": x.eps, "h": x.h, "n_nodes": x.n_nodes, "coarse": list(x.coarse),
                      "fine": list(x.fine), "self_convergence": list(x.self_convergence)}
                     for x in r.runs],
            "limit": spectrum_to_dict(r.limit),
            "deviation": [list(x) for x in r.deviation],
            "certified": [[bool(c) for c in x] for x in r.certified],
            "trend": list(r.trend), "notes": list(r.notes)}


def report_from_dict(d: dict) -> ConvergenceReport:
    runs = tuple(EpsRun(float(x["eps"]), float(x["h"]), int(x["n_nodes"]),
                        tuple(map(float, x["coarse"])), tuple(map(float, x["fine"])),
                        tuple(map(float, x["self_convergence"]))) for x in d["runs"])
    return ConvergenceReport(d["regime"], float(d["alpha"]), tuple(map(float, d["eps"])),
                             int(d["k"]), runs, spectrum_from_dict(d["limit"]),
                             tuple(tuple(map(float, x)) for x in d["deviation"]),
                             tuple(tuple(bool(c) for c in x) for x in d["certified"]),
                             tuple(d["trend"]), tuple(d["notes"]))


_ENCODERS = {
    "spectrum": spectrum_to_dict,
    "bands": bands_to_dict,
    "gaps": gaps_to_dict,
    "convergence": report_to_dict,
}
_DECODERS = {
    "spectrum": spectrum_from_dict,
    "bands": bands_from_dict,
    "gaps": gaps_from_dict,
    "convergence": report_from_dict,
}


def payload_type(obj) -> str:
    if isinstance(obj, Spectrum):
        return "spectrum"
    if isinstance(obj, BandStructure):
        return "bands"
    if isinstance(obj, GapReport):
        return "gaps"
    if isinstance(obj, ConvergenceReport):
        return "convergence"
    raise SchemaError(f"cannot serialise {type(obj).__name__}")


# ---------------------------------------------------------------------------
# documents


def make_document(payload, *, version: str, config: dict[str, Any],
                  wall_time: float | None = None, extra: dict | None = None) -> dict:
    kind = payload_type(payload)
    meta = {"tool": "qglab", "version": version, "config": config}
    if wall_time is not None:
        meta["wall_time"] = wall_time
    doc = {"schema": SCHEMA, "metadata": meta, "payload_type": kind,
           "payload": _ENCODERS[kind](payload)}
    if extra:
        doc["extra"] = extra
    return doc


def dumps_json(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def loads_document(text: str):
    """Parse a JSON document; returns ``(document, payload object)``."""
    doc = json.loads(text)
    if doc.get("schema") != SCHEMA:
        raise SchemaError(f"unsupported schema {doc.get('schema')!r}")
    kind = doc.get("payload_type")
    if kind not in _DECODERS:
        raise SchemaError(f"unknown payload type {kind!r}")
    return doc, _DECODERS[kind](doc["payload"])


# ---------------------------------------------------------------------------
# CSV


def _g(x) -> str:
    return "" if x is None else format(float(x), ".17g")


def to_csv(payload) -> str:
    kind = payload_type(payload)
    buf = io.StringIO()
    head = f"# {CSV_SCHEMA[kind]}"
    if kind == "spectrum":
        head += f" cutoff={_g(payload.cutoff)}"
    buf.write(head + "\n")
    w = csv.writer(buf, lineterminator="\n")
    if kind == "spectrum":
        w.writerow(["lambda", "multiplicity", "residual"])
        for v, m, r in zip(payload.values, payload.multiplicities, payload.residuals):
            w.writerow([_g(v), m, _g(r)])
    elif kind in ("bands", "gaps"):
        rep = find_gaps(payload) if kind == "bands" else payload
        w.writerow(["kind", "lo", "hi", "multiplicity", "flag"])
        if kind == "bands":
            for a, b in payload.bands:
                w.writerow(["band", _g(a), _g(b), "", ""])
            for f in payload.flat_bands:
                w.writerow(["flat", _g(f.lam), _g(f.lam), f.multiplicity,
                            "isolated" if f.isolated else ""])
        for g in rep.band_gaps:
            flag = ";".join(x for x, on in (("flat-inside", g.contains_flat_band),
                                            ("truncated", g.truncated)) if on)
            w.writerow(["gap", _g(g.lo), _g(g.hi), "", flag])
        for g in rep.spectral_gaps:
            w.writerow(["spectral_gap", _g(g.lo), _g(g.hi), "", "truncated" if g.truncated else ""])
        for t in rep.touching:
            w.writerow(["touch", _g(t), _g(t), "", ""])
    else:
        w.writerow(["eps", "index", "h", "value_coarse", "value_fine", "self_convergence",
                    "limit", "deviation", "certified"])
        lim = payload.limit.expanded()
        for run, dev, cert in zip(payload.runs, payload.deviation, payload.certified):
            for i in range(payload.k):
                w.writerow([_g(run.eps), i + 1, _g(run.h), _g(run.coarse[i]), _g(run.fine[i]),
                            _g(run.self_convergence[i]), _g(lim[i]), _g(dev[i]), int(cert[i])])
    return buf.getvalue()


def spectrum_from_csv(text: str) -> Spectrum:
    lines = text.splitlines()
    head = lines[0].split() if lines else []
    if head[:2] != ["#", CSV_SCHEMA["spectrum"]] or len(head) != 3 or not head[2].startswith("cutoff="):
        raise SchemaError("not a spectrum CSV")
    rows = list(csv.reader(lines[1:]))
    if rows[0] != ["lambda", "multiplicity", "residual"]:
        raise SchemaError("unexpected spectrum CSV header")
    vals = tuple(float(r[0]) for r in rows[1:])
    return Spectrum(vals, tuple(int(r[1]) for r in rows[1:]),
                    tuple(float(r[2]) for r in rows[1:]), float(head[2][len("cutoff="):]))
