"""Line-oriented text formats for models, scans, ground truth, scenes, densities and indexes.

Numbers are written as integers when integral and as shortest round-trip
floats otherwise, so writing what was read reproduces a file byte for byte.
"""
from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .errors import FormatError
from .geometry import Placement, Pose, RangeScan, TrueFeature
from .hashing import GeomHashIndex, HashEntry
from .mesh import TriMesh
from .models import ObjectModel
from .relation import DensityGrid, DensityModel, RelationConfig


def fmt(x) -> str:
    x = float(x)
    if x.is_integer() and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


def _row(tag, values):
    return " ".join([tag] + [fmt(v) for v in values])


def _lines(path):
    """``(line_no, tokens)`` for non-blank, non-comment lines."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FormatError(f"cannot read file ({exc.strerror})", path) from exc
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield no, line.split()


def _floats(tokens, n, path, no):
    if len(tokens) != n:
        raise FormatError(f"expected {n} values, got {len(tokens)}", path, no)
    try:
        return [float(t) for t in tokens]
    except ValueError as exc:
        raise FormatError(f"bad number ({exc})", path, no) from None


def _int(token, path, no):
    try:
        return int(token)
    except ValueError:
        raise FormatError(f"bad integer {token!r}", path, no) from None


def _kv(tokens, path, no):
    out = {}
    for t in tokens:
        if "=" not in t:
            raise FormatError(f"expected key=value, got {t!r}", path, no)
        k, v = t.split("=", 1)
        out[k] = v
    return out


def atomic_write(path, text: str):
    """Write via a temporary file so a failure leaves no partial output."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


# -- models ------------------------------------------------------------------

def format_model(model: ObjectModel) -> str:
    out = [f"model {model.class_id}"]
    out += [_row("v", v) for v in model.mesh.vertices]
    out += [" ".join(["t"] + [str(int(i)) for i in t]) for t in model.mesh.triangles]
    out += [_row("f", [s, *loc]) for s, loc in model.features]
    return "\n".join(out) + "\n"


def write_model(path, model: ObjectModel):
    atomic_write(path, format_model(model))


def read_model(path) -> ObjectModel:
    class_id, verts, tris, feats = None, [], [], []
    for no, tok in _lines(path):
        tag, rest = tok[0], tok[1:]
        if tag == "model":
            if class_id is not None or len(rest) != 1:
                raise FormatError("malformed or repeated model header", path, no)
            class_id = _int(rest[0], path, no)
        elif class_id is None:
            raise FormatError("file must start with 'model <class_id>'", path, no)
        elif tag == "v":
            verts.append(_floats(rest, 3, path, no))
        elif tag == "t":
            if len(rest) != 3:
                raise FormatError("triangle needs 3 indices", path, no)
            tris.append([_int(t, path, no) for t in rest])
        elif tag == "f":
            vals = _floats(rest, 4, path, no)
            if not vals[0].is_integer():
                raise FormatError("feature class must be an integer", path, no)
            feats.append((int(vals[0]), vals[1:]))
        else:
            raise FormatError(f"unknown record {tag!r}", path, no)
    if class_id is None:
        raise FormatError("missing model header", path)
    tris = np.array(tris, dtype=np.int64).reshape(-1, 3)
    if len(tris) and (tris.min() < 0 or tris.max() >= len(verts)):
        raise FormatError("triangle index out of range", path)
    try:
        return ObjectModel(class_id, TriMesh(np.array(verts).reshape(-1, 3), tris), tuple(feats), Path(path).stem)
    except ValueError as exc:
        raise FormatError(str(exc), path) from None


# -- scans and ground truth --------------------------------------------------

def format_scan(scan: RangeScan) -> str:
    out = [_row("gaze", scan.gaze)]
    out += [_row("p", p) for p in scan.points]
    return "\n".join(out) + "\n"


def write_scan(path, scan: RangeScan):
    atomic_write(path, format_scan(scan))


def read_scan(path, truth_path=None) -> RangeScan:
    gaze, pts = None, []
    for no, tok in _lines(path):
        if tok[0] == "gaze":
            if gaze is not None:
                raise FormatError("repeated gaze header", path, no)
            gaze = _floats(tok[1:], 3, path, no)
        elif tok[0] == "p":
            if gaze is None:
                raise FormatError("file must start with 'gaze gx gy gz'", path, no)
            pts.append(_floats(tok[1:], 3, path, no))
        else:
            raise FormatError(f"unknown record {tok[0]!r}", path, no)
    if gaze is None:
        raise FormatError("missing gaze header", path)
    placements, feats = ((), ())
    if truth_path is not None:
        placements, feats = read_truth(truth_path)
    try:
        return RangeScan(np.array(pts).reshape(-1, 3), np.array(gaze), placements, feats)
    except ValueError as exc:
        raise FormatError(str(exc), path) from None


def format_truth(scan: RangeScan) -> str:
    out = [_row("object", [p.class_id, *p.pose.quaternion(), *p.pose.translation]) for p in scan.placements]
    out += [_row("feature", [f.class_id, f.shape_class, *f.location, int(f.visible)]) for f in scan.features]
    return "\n".join(out) + "\n"


def write_truth(path, scan: RangeScan):
    atomic_write(path, format_truth(scan))


def read_truth(path):
    """``(placements, features)`` from a ground-truth file."""
    placements, feats = [], []
    for no, tok in _lines(path):
        if tok[0] == "object":
            v = _floats(tok[1:], 8, path, no)
            placements.append(Placement(int(v[0]), _pose(v[1:5], v[5:], path, no)))
        elif tok[0] == "feature":
            v = _floats(tok[1:], 6, path, no)
            feats.append(TrueFeature(int(v[1]), np.array(v[2:5]), bool(v[5]), int(v[0])))
        else:
            raise FormatError(f"unknown record {tok[0]!r}", path, no)
    return tuple(placements), tuple(feats)


def _pose(q, t, path, no):
    q = np.array(q)
    if abs(np.linalg.norm(q) - 1.0) > 1e-6:
        raise FormatError("quaternion must have unit norm", path, no)
    return Pose.from_quaternion(q / np.linalg.norm(q), t)


# -- scene descriptions ------------------------------------------------------

def read_scene(path):
    """``[(model_path, pose)]`` from ``place <model_file> qw qx qy qz tx ty tz`` lines.

    Relative model paths resolve against the scene file's directory.
    """
    base = Path(path).parent
    out = []
    for no, tok in _lines(path):
        if tok[0] != "place" or len(tok) != 9:
            raise FormatError("expected 'place <model_file> qw qx qy qz tx ty tz'", path, no)
        v = _floats(tok[2:], 7, path, no)
        mp = Path(tok[1])
        out.append((mp if mp.is_absolute() else base / mp, _pose(v[:4], v[4:], path, no)))
    if not out:
        raise FormatError("scene has no placements", path)
    return out


def format_scene(entries) -> str:
    return "\n".join(" ".join(["place", str(p)] + [fmt(x) for x in (*pose.quaternion(), *pose.translation)])
                     for p, pose in entries) + "\n"


# -- densities ---------------------------------------------------------------

def format_density(dm: DensityModel) -> str:
    c = dm.cfg
    n1, n2, n3 = c.bins
    out = [f"density m={dm.m} R={fmt(c.R)} eps={fmt(c.eps)} l={c.sample_len} bins={n1}x{n2}x{n3} alpha={fmt(dm.alpha)}"]
    for s, g in enumerate(dm.grids):
        out.append(f"class {s} count={g.count}")
        out.append(" ".join(fmt(x) for x in g.mass.ravel()))
    return "\n".join(out) + "\n"


def write_density(path, dm: DensityModel):
    atomic_write(path, format_density(dm))


def read_density(path) -> DensityModel:
    lines = list(_lines(path))
    if not lines or lines[0][1][0] != "density":
        raise FormatError("missing density header", path, lines[0][0] if lines else None)
    no, tok = lines[0]
    kv = _kv(tok[1:], path, no)
    try:
        m = int(kv["m"])
        bins = tuple(int(b) for b in kv["bins"].split("x"))
        cfg = RelationConfig(float(kv["R"]), float(kv["eps"]), int(kv["l"]), bins)
        alpha = float(kv["alpha"])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad density header ({exc})", path, no) from None
    size = int(np.prod(bins))
    grids, i = [], 1
    for s in range(m + 1):
        if i >= len(lines):
            raise FormatError(f"missing class {s}", path)
        no, tok = lines[i]
        if tok[0] != "class" or len(tok) != 3 or _int(tok[1], path, no) != s:
            raise FormatError(f"expected 'class {s} count=<N>'", path, no)
        count = _int(_kv(tok[2:], path, no).get("count", "x"), path, no)
        values = []
        i += 1
        while len(values) < size:
            if i >= len(lines):
                raise FormatError(f"class {s}: expected {size} masses", path)
            no, tok = lines[i]
            if tok[0] == "class":
                raise FormatError(f"class {s}: expected {size} masses, got {len(values)}", path, no)
            values += _floats(tok, len(tok), path, no)
            i += 1
        if len(values) != size:
            raise FormatError(f"class {s}: expected {size} masses, got {len(values)}", path, no)
        grids.append(DensityGrid(bins, np.array(values).reshape(bins), alpha, count))
    if i != len(lines):
        raise FormatError("trailing content", path, lines[i][0])
    return DensityModel(tuple(grids), cfg)


# -- hash index --------------------------------------------------------------

def format_index(index: GeomHashIndex) -> str:
    """Stores the raw learned weights; effective weights follow from the cap."""
    out = [f"ghash qd={fmt(index.q_d)}"]
    for key in sorted(index.table):
        out.append(" ".join(["key"] + [str(k) for k in key]))
        for e in index.table[key]:
            out.append(_row("entry", [e.class_id, e.gamma_raw, e.draws, e.successes, *e.model_pts.ravel()]))
    return "\n".join(out) + "\n"


def write_index(path, index: GeomHashIndex):
    atomic_write(path, format_index(index))


def read_index(path) -> GeomHashIndex:
    index, key = None, None
    for no, tok in _lines(path):
        if tok[0] == "ghash":
            if index is not None:
                raise FormatError("repeated header", path, no)
            try:
                index = GeomHashIndex(float(_kv(tok[1:], path, no)["qd"]))
            except (KeyError, ValueError) as exc:
                raise FormatError(f"bad index header ({exc})", path, no) from None
        elif index is None:
            raise FormatError("file must start with 'ghash qd=<mm>'", path, no)
        elif tok[0] == "key":
            if len(tok) != 7:
                raise FormatError("key needs 6 integers", path, no)
            key = tuple(_int(t, path, no) for t in tok[1:])
        elif tok[0] == "entry":
            if key is None:
                raise FormatError("entry before any key", path, no)
            v = _floats(tok[1:], 13, path, no)
            if not 0 < v[1] < 1:
                raise FormatError("weight must lie in (0, 1)", path, no)
            index.add(key, HashEntry(int(v[0]), np.array(v[4:]).reshape(3, 3), v[1], int(v[2]), int(v[3])))
        else:
            raise FormatError(f"unknown record {tok[0]!r}", path, no)
    if index is None:
        raise FormatError("missing index header", path)
    index.n_triples = None
    index.renormalize_all()
    return index
