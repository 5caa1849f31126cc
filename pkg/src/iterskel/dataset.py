"""Sample directories: ``NNNN_img.skt`` / ``NNNN_lbl.skt`` pairs plus ``manifest.json``."""

import hashlib
import json
from dataclasses import replace
from pathlib import Path

from iterskel.bezier import GenParams, Sample, generate, sample_seed
from iterskel.errors import FormatError, UsageError
from iterskel.fileio import decode_skt, load_grid, load_skt, save_skt, write_bytes

MANIFEST = "manifest.json"


def dumps(obj):
    """Canonical JSON text, so equal content gives equal bytes."""
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_json(path, obj, exclusive=True):
    return write_bytes(path, dumps(obj).encode(), exclusive)


def write_dataset(params, count, out):
    """Generate ``count`` samples into ``out``; returns the manifest dict."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(count):
        seed = sample_seed(params.seed, i)
        smp = generate(replace(params, seed=seed))
        sid = f"{i:04d}"
        entries.append({
            "id": sid,
            "seed": seed,
            "image": f"{sid}_img.skt",
            "label": f"{sid}_lbl.skt",
            "sha256": {
                "image": save_skt(out / f"{sid}_img.skt", smp.image, exclusive=True),
                "label": save_skt(out / f"{sid}_lbl.skt", smp.skeleton, exclusive=True),
            },
            "curves": [c.to_dict() for c in smp.curves],
        })
    manifest = {"format": "SKT1", "params": params.to_dict(), "count": count, "samples": entries}
    write_json(out / MANIFEST, manifest)
    return manifest


def _checked(path, digest):
    data = Path(path).read_bytes()
    if digest is not None and hashlib.sha256(data).hexdigest() != digest:
        raise FormatError(f"checksum mismatch for {path}")
    return data


def load_dataset(path):
    """Read a sample directory written by :func:`write_dataset`; checksums are verified."""
    path = Path(path)
    try:
        manifest = json.loads((path / MANIFEST).read_text())
    except FileNotFoundError as exc:
        raise UsageError(f"{path} has no {MANIFEST}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"malformed {path / MANIFEST}: {exc.msg}") from exc
    p = dict(manifest["params"])
    p["dims"] = tuple(p["dims"])
    p["n_trunks"] = tuple(p["n_trunks"])
    base = GenParams(**p)
    out = []
    for e in manifest["samples"]:
        sums = e.get("sha256", {})
        img = decode_skt(_checked(path / e["image"], sums.get("image")))
        lbl = decode_skt(_checked(path / e["label"], sums.get("label")))
        out.append(Sample(image=img, skeleton=lbl, params=replace(base, seed=e["seed"]), id=e["id"]))
    return out


def grid_files(path, pattern="*.skt"):
    """``{sample id: file}`` for every grid file under ``path`` (or ``path`` itself)."""
    path = Path(path)
    if path.is_file():
        return {path.stem.split("_")[0]: path}
    files = sorted(list(path.glob(pattern)) + (list(path.glob("*.pgm")) if pattern == "*.skt" else []))
    return {f.stem.split("_")[0]: f for f in files}


def load_images(path):
    """Images of a sample directory (``*_img``) or any grid files, keyed by id."""
    path = Path(path)
    if path.is_dir() and list(path.glob("*_img.skt")):
        return {k: load_skt(v) for k, v in grid_files(path, "*_img.skt").items()}
    return {k: load_grid(v) for k, v in grid_files(path).items()}
