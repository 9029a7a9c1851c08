"""Grid dump text format.

    # metagfn-grid 1
    kind torus
    dims 2
    shape 63 63
    spacing 0.0997331001 0.0997331001
    <extra key value lines: kernel, width, epsilon, beta, ...>
    [v_hat]
    <one value per line, row-major, %.17g>
    [v_bias]
    ...

``%.17g`` round-trips float64 bit-exactly.
"""
import math
from pathlib import Path
from typing import Dict, Mapping, Tuple

import numpy as np

from errors import ArtifactIOError, GridFormatError
from manifold import Lattice, Space, SpaceKind

MAGIC = "# metagfn-grid 1"
REQUIRED_KEYS = ("kind", "dims", "shape", "spacing")


def _fmt(values) -> str:
    return " ".join("%.17g" % v for v in np.atleast_1d(values))


def write_grids(
    path,
    lattice: Lattice,
    sections: Mapping[str, np.ndarray],
    meta: Mapping[str, object] = None,
) -> None:
    lines = [MAGIC, f"kind {lattice.space.kind.value}", f"dims {lattice.dim}"]
    if not lattice.space.is_torus:
        lines.append(f"lower {_fmt(lattice.space.lower)}")
        lines.append(f"upper {_fmt(lattice.space.upper)}")
    lines.append("shape " + " ".join(str(n) for n in lattice.shape))
    lines.append(f"spacing {_fmt(lattice.spacing)}")
    for key, value in (meta or {}).items():
        lines.append(f"{key} {_fmt(value) if not isinstance(value, str) else value}")

    for name, grid in sections.items():
        grid = np.asarray(grid, dtype=np.float64)
        if grid.shape != lattice.shape:
            raise ValueError(f"section {name} has shape {grid.shape}, lattice is {lattice.shape}")
        lines.append(f"[{name}]")
        lines.extend("%.17g" % v for v in grid.ravel(order="C"))

    try:
        Path(path).write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise ArtifactIOError(f"cannot write grid dump {path}: {exc}") from exc


def read_grids(path) -> Tuple[Lattice, Dict[str, np.ndarray], Dict[str, str]]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ArtifactIOError(f"cannot read grid dump {path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise GridFormatError(f"{path} is not a grid dump: {exc}") from exc

    lines = text.splitlines()
    if not lines or lines[0].strip() != MAGIC:
        raise GridFormatError(f"{path} is not a grid dump")

    header: Dict[str, str] = {}
    sections: Dict[str, list] = {}
    current = None
    for raw in lines[1:]:
        line = raw.strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            sections[current] = []
        elif current is None:
            key, _, value = line.partition(" ")
            header[key] = value.strip()
        else:
            try:
                sections[current].append(float(line))
            except ValueError as exc:
                raise GridFormatError(f"{path}: bad value in section [{current}]: {line!r}") from exc

    missing = [k for k in REQUIRED_KEYS if k not in header]
    if missing:
        raise GridFormatError(f"{path}: header is missing {', '.join(missing)}")
    try:
        kind = SpaceKind(header["kind"])
        dims = int(header["dims"])
        if kind == SpaceKind.TORUS:
            space = Space.torus(dims)
        else:
            space = Space.box(
                [float(v) for v in header["lower"].split()],
                [float(v) for v in header["upper"].split()],
            )
        shape = tuple(int(v) for v in header["shape"].split())
        spacing = tuple(float(v) for v in header["spacing"].split())
        lattice = Lattice(space, shape, spacing)
    except (KeyError, ValueError) as exc:
        raise GridFormatError(f"{path}: bad grid header: {exc}") from exc

    grids = {}
    for name, values in sections.items():
        if len(values) != math.prod(shape):
            raise GridFormatError(f"section {name} holds {len(values)} values, expected {math.prod(shape)}")
        grids[name] = np.asarray(values, dtype=np.float64).reshape(shape)

    meta = {k: v for k, v in header.items() if k not in {"kind", "dims", "lower", "upper", "shape", "spacing"}}
    return lattice, grids, meta
