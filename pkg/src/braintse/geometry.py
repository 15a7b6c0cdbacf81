"""Electrode layouts, headphone-shaped regions and the hard channel pre-selection.

Coordinates are 2-D scalp projections with the head circle normalised to
radius 1.0; positions below the ears may extend out to radius 1.2. All
operations here are pure geometry and never look at recorded data, so the
candidate set produced by :func:`hard_select` is reproducible by
construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .errors import DataError, LayoutError

MAX_COORD_RADIUS = 1.2

# Normalised ear positions; the default headphone area is one disc per ear.
LEFT_EAR = (-1.0, 0.0)
RIGHT_EAR = (1.0, 0.0)
DEFAULT_EAR_RADIUS = 0.35


@dataclass(frozen=True)
class ElectrodeLayout:
    """Named electrodes with 2-D scalp-projected coordinates."""

    names: tuple[str, ...]
    coords: np.ndarray  # (Q, 2) float array
    mastoid_indices: tuple[int, int] | None = None
    layout_id: str = "unnamed"

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "names", tuple(self.names))
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise LayoutError(f"coords must be (Q, 2), got {coords.shape}")
        if len(self.names) != coords.shape[0]:
            raise LayoutError(
                f"{len(self.names)} names but {coords.shape[0]} coordinates"
            )
        seen = set()
        for name in self.names:
            if name in seen:
                raise LayoutError(f"duplicate electrode name {name!r}")
            seen.add(name)
        if not np.all(np.isfinite(coords)):
            raise LayoutError("coordinates contain NaN or Inf")
        radii = np.hypot(coords[:, 0], coords[:, 1])
        if np.any(radii > MAX_COORD_RADIUS):
            worst = int(np.argmax(radii))
            raise LayoutError(
                f"electrode {self.names[worst]!r} at radius {radii[worst]:.3f} "
                f"exceeds the allowed {MAX_COORD_RADIUS}"
            )
        if self.mastoid_indices is not None:
            pair = tuple(int(i) for i in self.mastoid_indices)
            if len(pair) != 2 or not all(0 <= i < len(self.names) for i in pair):
                raise LayoutError(f"invalid mastoid indices {self.mastoid_indices!r}")
            object.__setattr__(self, "mastoid_indices", pair)

    @property
    def n_channels(self) -> int:
        return len(self.names)

    def index_of(self, label: str) -> int:
        try:
            return self.names.index(label)
        except ValueError:
            raise LayoutError(f"electrode {label!r} not in layout {self.layout_id!r}")


@dataclass(frozen=True)
class RegionSpec:
    """A user-defined electrode region: explicit labels or a union of discs."""

    kind: str  # "explicit-list" or "disc-union"
    discs: tuple[tuple[tuple[float, float], float], ...] = ()
    explicit: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in ("explicit-list", "disc-union"):
            raise DataError(f"unknown region kind {self.kind!r}")
        discs = tuple(((float(cx), float(cy)), float(r)) for (cx, cy), r in self.discs)
        object.__setattr__(self, "discs", discs)
        object.__setattr__(self, "explicit", tuple(self.explicit))
        if self.kind == "disc-union":
            if not discs:
                raise DataError("disc-union region needs at least one disc")
            for (_, _), r in discs:
                if r <= 0:
                    raise DataError(f"disc radius must be positive, got {r}")
        elif not self.explicit:
            raise DataError("explicit-list region needs at least one label")


@dataclass(frozen=True)
class CandidateSet:
    """Ordered subset of layout indices passing the hard geometric selector."""

    indices: tuple[int, ...]
    source_layout_id: str

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        object.__setattr__(self, "indices", idx)
        if not idx:
            raise DataError("candidate set must be non-empty")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise DataError("candidate indices must be strictly increasing")
        if idx[0] < 0:
            raise DataError("candidate indices must be non-negative")

    def __len__(self) -> int:
        return len(self.indices)

    def labels(self, layout: ElectrodeLayout) -> list[str]:
        self.check_against(layout)
        return [layout.names[i] for i in self.indices]

    def check_against(self, layout: ElectrodeLayout) -> None:
        if self.indices[-1] >= layout.n_channels:
            raise DataError(
                f"candidate index {self.indices[-1]} out of range for layout "
                f"with Q={layout.n_channels}"
            )


def headphone_region(radius: float = DEFAULT_EAR_RADIUS) -> RegionSpec:
    """Default headphone-shaped area: one disc of `radius` around each ear."""
    return RegionSpec(kind="disc-union", discs=((LEFT_EAR, radius), (RIGHT_EAR, radius)))


def load_layout(path) -> ElectrodeLayout:
    """Parse a layout file: one `label,x,y[,mastoid]` per line, `#` comments."""
    path = Path(path)
    if not path.exists():
        raise LayoutError(f"layout file not found: {path}")
    names: list[str] = []
    coords: list[tuple[float, float]] = []
    mastoids: list[int] = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) not in (3, 4):
            raise LayoutError(
                f"{path}:{lineno}: expected 'label,x,y[,mastoid]', got {raw!r}"
            )
        label = parts[0]
        if not label:
            raise LayoutError(f"{path}:{lineno}: empty electrode label")
        if label in names:
            raise LayoutError(f"{path}:{lineno}: duplicate electrode name {label!r}")
        try:
            x, y = float(parts[1]), float(parts[2])
        except ValueError:
            raise LayoutError(f"{path}:{lineno}: non-numeric coordinate in {raw!r}")
        if math.hypot(x, y) > MAX_COORD_RADIUS:
            raise LayoutError(
                f"{path}:{lineno}: coordinate ({x}, {y}) outside radius "
                f"{MAX_COORD_RADIUS}"
            )
        if len(parts) == 4:
            if parts[3] != "mastoid":
                raise LayoutError(
                    f"{path}:{lineno}: unknown flag {parts[3]!r} (only 'mastoid')"
                )
            mastoids.append(len(names))
        names.append(label)
        coords.append((x, y))
    if not names:
        raise LayoutError(f"{path}: no electrodes defined")
    if mastoids and len(mastoids) != 2:
        raise LayoutError(f"{path}: expected exactly 2 mastoid rows, got {len(mastoids)}")
    return ElectrodeLayout(
        names=tuple(names),
        coords=np.asarray(coords),
        mastoid_indices=tuple(mastoids) if mastoids else None,
        layout_id=path.stem,
    )


def default_layout() -> ElectrodeLayout:
    """The shipped 128-channel cap (126 scalp electrodes plus two mastoids)."""
    with resources.as_file(
        resources.files("braintse.resources").joinpath("layout128.txt")
    ) as path:
        layout = load_layout(path)
    return layout


def hard_select(layout: ElectrodeLayout, region: RegionSpec) -> CandidateSet:
    """Apply the geometric pre-selection; purely a function of the layout."""
    if region.kind == "explicit-list":
        chosen = sorted(layout.index_of(label) for label in region.explicit)
    else:
        chosen = []
        for i, (x, y) in enumerate(layout.coords):
            # Boundary points are included (closed-region convention).
            if any(
                math.hypot(x - cx, y - cy) <= r for (cx, cy), r in region.discs
            ):
                chosen.append(i)
    if not chosen:
        raise DataError("no electrode satisfies the region constraint")
    return CandidateSet(indices=tuple(chosen), source_layout_id=layout.layout_id)


def nearest_ear_labels(layout: ElectrodeLayout, n: int) -> list[str]:
    """The `n` electrodes closest to either ear, split evenly left/right.

    Useful to build an explicit-list region of a given size; the shipped
    30-label example region is produced this way.
    """
    if n < 2 or n > layout.n_channels:
        raise DataError(f"cannot pick {n} electrodes from Q={layout.n_channels}")
    d_left = np.hypot(layout.coords[:, 0] - LEFT_EAR[0], layout.coords[:, 1] - LEFT_EAR[1])
    d_right = np.hypot(
        layout.coords[:, 0] - RIGHT_EAR[0], layout.coords[:, 1] - RIGHT_EAR[1]
    )
    half = n // 2
    left = list(np.argsort(d_left, kind="stable")[:half])
    right_sorted = [i for i in np.argsort(d_right, kind="stable") if i not in set(left)]
    chosen = sorted(int(i) for i in left + right_sorted[: n - half])
    return [layout.names[i] for i in chosen]


def emit_topomap(
    layout: ElectrodeLayout,
    selected: CandidateSet,
    candidate: CandidateSet,
    path,
) -> Path:
    """Render the scalp map as SVG and write a sidecar list of selected labels.

    The head outline is a circle; every electrode is a small dot, candidate
    electrodes get an outline ring and selected electrodes are filled. The
    sidecar (same path with a ``.labels.txt`` suffix) lists the selected
    labels one per line and can be re-parsed with
    :func:`read_topomap_sidecar`.
    """
    candidate.check_against(layout)
    selected.check_against(layout)
    if not set(selected.indices) <= set(candidate.indices):
        raise DataError("selected electrodes must be a subset of the candidate set")

    path = Path(path)
    size, margin = 640, 60
    scale = (size / 2 - margin) / MAX_COORD_RADIUS

    def to_px(x: float, y: float) -> tuple[float, float]:
        # y grows upwards in layout space, downwards in SVG space
        return size / 2 + x * scale, size / 2 - y * scale

    cand = set(candidate.indices)
    sel = set(selected.indices)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<circle class="head" cx="{size/2}" cy="{size/2}" r="{scale:.2f}" '
        'fill="none" stroke="black" stroke-width="2"/>',
    ]
    for i, (x, y) in enumerate(layout.coords):
        px, py = to_px(x, y)
        if i in sel:
            parts.append(
                f'<circle class="electrode selected" cx="{px:.2f}" cy="{py:.2f}" '
                'r="7" fill="#1f4e9c" stroke="#1f4e9c" stroke-width="2"/>'
            )
        elif i in cand:
            parts.append(
                f'<circle class="electrode candidate" cx="{px:.2f}" cy="{py:.2f}" '
                'r="7" fill="none" stroke="#1f4e9c" stroke-width="2"/>'
            )
        else:
            parts.append(
                f'<circle class="electrode" cx="{px:.2f}" cy="{py:.2f}" '
                'r="3" fill="#999999"/>'
            )
        parts.append(
            f'<text x="{px + 8:.2f}" y="{py - 8:.2f}" font-size="9">'
            f"{escape(layout.names[i])}</text>"
        )
    parts.append("</svg>")
    try:
        path.write_text("\n".join(parts))
    except OSError as exc:
        raise DataError(f"cannot write topomap to {path}: {exc}")

    sidecar = path.with_suffix(path.suffix + ".labels.txt")
    lines = [f"# selected {len(sel)} of {len(cand)} candidate electrodes"]
    lines += [layout.names[i] for i in selected.indices]
    sidecar.write_text("\n".join(lines) + "\n")
    return path


def read_topomap_sidecar(svg_path) -> list[str]:
    """Parse the sidecar label list written by :func:`emit_topomap`."""
    svg_path = Path(svg_path)
    sidecar = svg_path.with_suffix(svg_path.suffix + ".labels.txt")
    labels = []
    for line in sidecar.read_text().splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            labels.append(line)
    return labels
