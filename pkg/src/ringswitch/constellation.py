"""
Six-bit four-dimensional constellations and their geometry metrics.

Four formats are provided, all carrying 6 bits per 4D symbol (one time slot,
two polarization tributaries):

    build_rs64          -- two-amplitude ring-switched QPSK/8-PSK format
    build_2a8psk        -- two-amplitude 8-PSK with complementary rings
    build_64prs         -- polarization ring switching, orthant-symmetric labels
    build_pdm8qamstar   -- Cartesian product of two 8QAM-star constellations

Every builder returns a :class:`Constellation4D` normalized to unit mean
energy per polarization (total mean 4D energy of 2).
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

N_POINTS = 64
N_BITS = 6

# quadrant index (0..3, counter-clockwise from the first) -> 2-bit Gray label
QUADRANT_GRAY = (0b00, 0b01, 0b11, 0b10)
GRAY3 = (0b000, 0b001, 0b011, 0b010, 0b110, 0b111, 0b101, 0b100)

# 8 dB-optimal parameters recovered with ringswitch.optimizer (see
# scripts in README); the paper uses them without printing them.
RS64_RING_RATIO = 0.5
RS64_ROTATION = np.pi / 8
A8PSK_RING_RATIO = 0.65
PRS64_RING_RATIO = 0.54
PRS64_ANGLE = np.deg2rad(25.5)

# distinct-SED merge width that reproduces the 2-decimal histogram bins
TABLE_MERGE_TOL = 0.02

_ANGLE_EPS = 1e-9


@dataclass(frozen=True)
class Point4D:
    """One 4D symbol: complex amplitudes on the X and Y polarizations."""

    x: complex
    y: complex

    def __post_init__(self):
        if not (np.isfinite(self.x) and np.isfinite(self.y)):
            raise ValueError("Point4D components must be finite")

    def as_real(self) -> np.ndarray:
        return np.array([self.x.real, self.x.imag, self.y.real, self.y.imag])


@dataclass(frozen=True, eq=False)
class Constellation4D:
    """
    A labeled 64-point 4D constellation.

    Parameters
    ----------
    x, y : ndarray of complex, shape (64,)
        Per-symbol amplitudes on polarization X and Y.
    labels : ndarray of int, shape (64,)
        Six-bit label of each point; b1 is the most significant bit.
    name : str
        Format identifier.
    ring_ratio : float
        Inner-to-outer radius ratio (1.0 for formats without rings).
    rotation : float
        Format-specific rotation parameter in radians.
    """

    x: np.ndarray
    y: np.ndarray
    labels: np.ndarray
    name: str
    ring_ratio: float = 1.0
    rotation: float = 0.0
    _order: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        x = np.array(self.x, dtype=complex)
        y = np.array(self.y, dtype=complex)
        labels = np.array(self.labels, dtype=np.int64)
        if x.shape != (N_POINTS,) or y.shape != (N_POINTS,) or labels.shape != (N_POINTS,):
            raise ValueError("a 6-bit constellation needs exactly 64 points and labels")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("constellation coordinates must be finite")
        if sorted(labels.tolist()) != list(range(N_POINTS)):
            raise ValueError("labels must be a bijection onto {0,1}^6")
        for arr in (x, y, labels):
            arr.setflags(write=False)
        order = np.argsort(labels)
        order.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "_order", order)
        object.__setattr__(self, "ring_ratio", float(self.ring_ratio))
        object.__setattr__(self, "rotation", float(self.rotation))

    def __len__(self):
        return N_POINTS

    @property
    def points(self) -> np.ndarray:
        """Real coordinates, shape (64, 4): Re x, Im x, Re y, Im y."""
        return np.stack([self.x.real, self.x.imag, self.y.real, self.y.imag], axis=1)

    @property
    def bits(self) -> np.ndarray:
        """Label bits, shape (64, 6), column 0 is b1."""
        return label_bits(self.labels)

    @property
    def energies(self) -> np.ndarray:
        return np.abs(self.x) ** 2 + np.abs(self.y) ** 2

    def index_of(self, label: int) -> int:
        """Position in the point arrays of the symbol carrying ``label``."""
        return int(self._order[label])

    def by_label(self) -> "Constellation4D":
        """Same constellation with points reordered so that index == label."""
        o = self._order
        return Constellation4D(self.x[o], self.y[o], self.labels[o], self.name,
                               self.ring_ratio, self.rotation)

    def with_points(self, x, y, name: str | None = None) -> "Constellation4D":
        return Constellation4D(x, y, self.labels, name or self.name,
                               self.ring_ratio, self.rotation)

    def scaled(self, s: float) -> "Constellation4D":
        return self.with_points(self.x * s, self.y * s)

    def rotated(self, phase: float) -> "Constellation4D":
        """Apply a common phase rotation to both polarizations."""
        r = np.exp(1j * phase)
        return self.with_points(self.x * r, self.y * r)


def label_bits(labels) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    shifts = np.arange(N_BITS - 1, -1, -1)
    return ((labels[..., None] >> shifts) & 1).astype(np.int8)


def bits_to_label(bits: Sequence[int]) -> int:
    bits = list(bits)
    if len(bits) != N_BITS or any(b not in (0, 1) for b in bits):
        raise ValueError("expected six bits")
    out = 0
    for b in bits:
        out = (out << 1) | int(b)
    return out


def normalize(x: np.ndarray, y: np.ndarray):
    """Scale each polarization to unit mean energy."""
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    return x / np.sqrt(np.mean(np.abs(x) ** 2)), y / np.sqrt(np.mean(np.abs(y) ** 2))


def normalized(c: Constellation4D) -> Constellation4D:
    return c.with_points(*normalize(c.x, c.y))


def _check_ratio(ring_ratio):
    if not (0.0 < ring_ratio <= 1.0):
        raise ValueError(f"ring_ratio must lie in (0, 1], got {ring_ratio!r}")


def _quadrant(angle):
    """Quadrant of an angle; points on an axis go to the clockwise neighbour.

    Quadrant k covers the half-open sector (k*pi/2, (k+1)*pi/2].
    """
    a = np.mod(angle, 2 * np.pi)
    k = int(np.ceil(a / (np.pi / 2) - _ANGLE_EPS)) - 1
    return k % 4


def _angle_in_quadrant(angle, k):
    rel = np.mod(angle - k * np.pi / 2, 2 * np.pi)
    if rel < _ANGLE_EPS:
        rel = 2 * np.pi
    return rel


def _first_in_quadrant(angles):
    """For each angle, whether it is the first (counter-clockwise) of the
    outer-ring points sharing its quadrant."""
    quads = [_quadrant(a) for a in angles]
    rel = [_angle_in_quadrant(a, k) for a, k in zip(angles, quads)]
    first = []
    for i, k in enumerate(quads):
        peers = [rel[j] for j in range(len(angles)) if quads[j] == k]
        if len(peers) != 2:
            raise ValueError("each quadrant must hold exactly two outer-ring points")
        first.append(rel[i] == min(peers))
    return quads, first


def _mirror_index(quad, first):
    # reflection-symmetric in-quadrant index: same value for mirror images
    return int(first) if quad % 2 == 0 else int(not first)


def build_rs64(ring_ratio: float = RS64_RING_RATIO,
               rotation: float = RS64_ROTATION) -> Constellation4D:
    """
    Two-amplitude ring-switched 64-point 4D format.

    Each symbol pairs a QPSK point of radius R1 on one polarization with an
    8-PSK point of radius R2 = R1 / ring_ratio on the other. QPSK sits at
    pi/4 + k pi/2 on both tributaries. The Pol-X 8-PSK is aligned with the
    QPSK grid (k pi/4); the Pol-Y 8-PSK is turned by ``rotation``.

    Labels: [b1 b2] Gray-code the X quadrant and [b3 b4] the Y quadrant,
    on-axis points belonging to the clockwise neighbouring quadrant.
    [b5 b6] select one of the four symbols of a quadrant pair: Pol-Y 8-PSK
    points take reflection-symmetric labels 00/01, Pol-X 8-PSK points take
    rotation-symmetric labels 11/10.

    Parameters
    ----------
    ring_ratio : float
        R1 / R2 in (0, 1].
    rotation : float
        Pol-Y 8-PSK rotation relative to the QPSK grid, radians.

    Returns
    -------
    Constellation4D
    """
    _check_ratio(ring_ratio)
    r1, r2 = ring_ratio, 1.0
    qpsk = np.pi / 4 + np.arange(4) * np.pi / 2
    psk_x = np.arange(8) * np.pi / 4
    psk_y = np.pi / 4 + rotation + np.arange(8) * np.pi / 4

    qy, first_y = _first_in_quadrant(psk_y)
    qx, first_x = _first_in_quadrant(psk_x)

    xs, ys, labels = [], [], []
    for a in qpsk:
        for b, kq, f in zip(psk_y, qy, first_y):
            xs.append(r1 * np.exp(1j * a))
            ys.append(r2 * np.exp(1j * b))
            low = 0b00 if _mirror_index(kq, f) else 0b01
            labels.append(QUADRANT_GRAY[_quadrant(a)] << 4 | QUADRANT_GRAY[kq] << 2 | low)
    for c, kq, f in zip(psk_x, qx, first_x):
        for d in qpsk:
            xs.append(r2 * np.exp(1j * c))
            ys.append(r1 * np.exp(1j * d))
            low = 0b11 if f else 0b10
            labels.append(QUADRANT_GRAY[kq] << 4 | QUADRANT_GRAY[_quadrant(d)] << 2 | low)
    x, y = normalize(np.array(xs), np.array(ys))
    return Constellation4D(x, y, np.array(labels), "4D-2A-RS64", ring_ratio, rotation)


def build_2a8psk(ring_ratio: float = A8PSK_RING_RATIO) -> Constellation4D:
    """
    Two-amplitude 8-PSK, 6 bit/4D.

    Points are indexed by phase indices (a, b) in Z8 x Z8. The parity
    (a + b) mod 2 picks which polarization uses the inner ring, so the 4D
    energy is constant. Labels are the 3-bit reflected Gray codes of a and
    b, which makes every MSED pair a Hamming-distance-1 pair.
    """
    _check_ratio(ring_ratio)
    radii = (ring_ratio, 1.0)
    a, b = np.meshgrid(np.arange(8), np.arange(8), indexing="ij")
    a, b = a.ravel(), b.ravel()
    inner_x = (a + b) % 2
    rx = np.where(inner_x == 0, radii[0], radii[1])
    ry = np.where(inner_x == 0, radii[1], radii[0])
    x = rx * np.exp(1j * np.pi * a / 4)
    y = ry * np.exp(1j * np.pi * b / 4)
    labels = np.array([GRAY3[i] << 3 | GRAY3[j] for i, j in zip(a, b)])
    x, y = normalize(x, y)
    return Constellation4D(x, y, labels, "4D-2A-8PSK", ring_ratio, 0.0)


def build_64prs(ring_ratio: float = PRS64_RING_RATIO,
                angle: float = PRS64_ANGLE) -> Constellation4D:
    """
    64-point polarization-ring-switched format with orthant-symmetric labels.

    Every quadrant of each polarization holds one inner-ring point on the
    diagonal and two outer-ring points at +-``angle`` around it. A symbol
    takes the inner point on one polarization and an outer point on the
    other. Labels are reflection-symmetric across the I and Q axes; the
    four in-orthant labels form a Gray square with the two outer-Y symbols
    at 00/11 and the two outer-X symbols at 01/10.
    """
    _check_ratio(ring_ratio)
    if not (0.0 < angle < np.pi / 4):
        raise ValueError("angle must lie in (0, pi/4)")
    r1, r2 = ring_ratio, 1.0
    inner = np.pi / 4 + np.arange(4) * np.pi / 2
    outer = np.concatenate([[c - angle, c + angle] for c in inner])
    qo, first_o = _first_in_quadrant(outer)

    xs, ys, labels = [], [], []
    for a in inner:
        for b, kq, f in zip(outer, qo, first_o):
            xs.append(r1 * np.exp(1j * a))
            ys.append(r2 * np.exp(1j * b))
            low = 0b00 if _mirror_index(kq, f) else 0b11
            labels.append(QUADRANT_GRAY[_quadrant(a)] << 4 | QUADRANT_GRAY[kq] << 2 | low)
    for c, kq, f in zip(outer, qo, first_o):
        for d in inner:
            xs.append(r2 * np.exp(1j * c))
            ys.append(r1 * np.exp(1j * d))
            low = 0b01 if _mirror_index(kq, f) else 0b10
            labels.append(QUADRANT_GRAY[kq] << 4 | QUADRANT_GRAY[_quadrant(d)] << 2 | low)
    x, y = normalize(np.array(xs), np.array(ys))
    return Constellation4D(x, y, np.array(labels), "4D-64PRS", ring_ratio, angle)


def star8qam() -> tuple[np.ndarray, np.ndarray]:
    """2D 8QAM-star points and 3-bit labels (unit mean energy).

    Four outer points on the axes, four inner points on the diagonals. The
    radius ratio (sqrt(2) + sqrt(6)) / 2 equalizes inner-inner and
    inner-outer nearest distances.
    """
    r_in = 1.0
    r_out = (np.sqrt(2) + np.sqrt(6)) / 2
    pts, labels = [], []
    for k in range(4):
        pts.append(r_out * np.exp(1j * np.pi / 2 * k))
        labels.append(QUADRANT_GRAY[k])
        pts.append(r_in * np.exp(1j * (np.pi / 4 + np.pi / 2 * k)))
        labels.append(0b100 | QUADRANT_GRAY[k])
    pts = np.array(pts)
    pts /= np.sqrt(np.mean(np.abs(pts) ** 2))
    return pts, np.array(labels)


def build_pdm8qamstar() -> Constellation4D:
    pts, lab = star8qam()
    i, j = np.meshgrid(np.arange(8), np.arange(8), indexing="ij")
    i, j = i.ravel(), j.ravel()
    x, y = normalize(pts[i], pts[j])
    labels = lab[i] << 3 | lab[j]
    return Constellation4D(x, y, labels, "PDM-8QAM-star", 1.0, 0.0)


BUILDERS = {
    "rs64": build_rs64,
    "2a8psk": build_2a8psk,
    "64prs": build_64prs,
    "8qamstar": build_pdm8qamstar,
}

FORMAT_NAMES = tuple(BUILDERS)


def build(name: str, **params) -> Constellation4D:
    """Build a format by short name ('rs64', '2a8psk', '64prs', '8qamstar')."""
    try:
        builder = BUILDERS[name]
    except KeyError:
        raise ValueError(f"unknown format {name!r}; expected one of {FORMAT_NAMES}") from None
    return builder(**params)


def map_bits(c: Constellation4D, bits) -> Point4D:
    """Map a 6-bit word (sequence of bits or integer) to its 4D point."""
    label = bits if isinstance(bits, (int, np.integer)) else bits_to_label(bits)
    if not 0 <= int(label) < N_POINTS:
        raise ValueError("label out of range")
    i = c.index_of(int(label))
    return Point4D(complex(c.x[i]), complex(c.y[i]))


def demap_hard(c: Constellation4D, received: np.ndarray) -> np.ndarray:
    """Minimum-Euclidean-distance labels for received 4D samples.

    ``received`` is either complex with shape (n, 2) (x, y) or real with
    shape (n, 4).
    """
    r = np.asarray(received)
    if np.iscomplexobj(r):
        r = np.stack([r[:, 0].real, r[:, 0].imag, r[:, 1].real, r[:, 1].imag], axis=1)
    p = c.points
    d = (r ** 2).sum(1)[:, None] - 2 * r @ p.T + (p ** 2).sum(1)[None, :]
    return c.labels[np.argmin(d, axis=1)]


# --------------------------------------------------------------------------
# geometry


@dataclass(frozen=True)
class GeometryMetrics:
    msed: float
    n_d: int
    papr: float
    constant_modulus: bool
    gray_at_msed: bool


@dataclass(frozen=True)
class SedHistogram:
    """Pairwise SED census: rows of (d2, count at D_H = 1, count at D_H > 1)."""

    entries: tuple[tuple[float, int, int], ...]

    @property
    def total(self) -> int:
        return sum(n1 + n2 for _, n1, n2 in self.entries)

    def hamming1(self) -> list[tuple[float, int]]:
        return [(d2, n1) for d2, n1, _ in self.entries if n1]

    def at(self, d2: float, tol: float = 5e-3) -> tuple[int, int]:
        """Counts of the entry nearest to ``d2`` (within ``tol``)."""
        for e, n1, n2 in self.entries:
            if abs(e - d2) <= tol:
                return n1, n2
        return 0, 0


def pairwise(c: Constellation4D):
    """Squared distances and Hamming distances over all 2016 pairs."""
    p = c.points
    i, j = np.triu_indices(N_POINTS, 1)
    d2 = ((p[i] - p[j]) ** 2).sum(1)
    h = np.array([bin(int(a) ^ int(b)).count("1") for a, b in zip(c.labels[i], c.labels[j])])
    return d2, h


def geometry_metrics(c: Constellation4D, rel_tol: float = 1e-9) -> GeometryMetrics:
    d2, h = pairwise(c)
    msed = float(d2.min())
    at_min = d2 <= msed * (1 + rel_tol)
    e = c.energies
    return GeometryMetrics(
        msed=msed,
        n_d=int(at_min.sum()),
        papr=float(e.max() / e.mean()),
        constant_modulus=bool(np.ptp(e) <= 1e-12 * e.mean()),
        gray_at_msed=bool(np.all(h[at_min] == 1)),
    )


def sed_histogram(c: Constellation4D, merge_tol: float = 1e-6) -> SedHistogram:
    """
    Census of pairwise squared Euclidean distances split by Hamming distance.

    Distinct SED values closer than ``merge_tol`` to their neighbour are
    merged into one bin, represented by the member holding the most
    Hamming-distance-1 pairs (then the most pairs overall). With the
    default tolerance only floating-point duplicates merge; use
    ``TABLE_MERGE_TOL`` for the coarser bins of a 2-decimal table.
    """
    d2, h = pairwise(c)
    order = np.argsort(d2, kind="stable")
    d2, h = d2[order], h[order]
    breaks = np.flatnonzero(np.diff(d2) > merge_tol) + 1
    entries = []
    for seg_d, seg_h in zip(np.split(d2, breaks), np.split(h, breaks)):
        vals, inv = np.unique(np.round(seg_d, 9), return_inverse=True)
        n_dh1 = np.bincount(inv, weights=(seg_h == 1), minlength=len(vals))
        n_all = np.bincount(inv, minlength=len(vals))
        # representative: member holding most D_H = 1 pairs, then most pairs
        best = max(range(len(vals)), key=lambda k: (n_dh1[k], n_all[k], vals[k]))
        rep = float(seg_d[inv == best][0])
        entries.append((rep, int((seg_h == 1).sum()), int((seg_h > 1).sum())))
    return SedHistogram(tuple(entries))


def projection_points(c: Constellation4D, pol: str = "x", decimals: int = 9) -> np.ndarray:
    """Distinct 2D points of one polarization."""
    z = c.x if pol == "x" else c.y
    return np.unique(np.round(z, decimals))


def table2_row(c: Constellation4D) -> dict:
    """Table-style summary of one format (values rounded to 2 decimals)."""
    g = geometry_metrics(c)
    hist = sed_histogram(c, TABLE_MERGE_TOL)
    return {
        "format": c.name,
        "msed": round(g.msed, 2),
        "n_d": g.n_d,
        "dh1": [(round(d, 2), n) for d, n in hist.hamming1()],
        "gray": g.gray_at_msed,
        "constant_modulus": g.constant_modulus,
        "papr": round(g.papr, 2),
    }


# --------------------------------------------------------------------------
# text table I/O


def to_table(c: Constellation4D) -> str:
    buf = io.StringIO()
    buf.write(f"# name={c.name} ring_ratio={c.ring_ratio!r} rotation={c.rotation!r}\n")
    buf.write("# label re_x im_x re_y im_y\n")
    cb = c.by_label()
    for lab, x, y in zip(cb.labels, cb.x, cb.y):
        buf.write(f"{lab:06b} {x.real: .11e} {x.imag: .11e} {y.real: .11e} {y.imag: .11e}\n")
    return buf.getvalue()


def from_table(text: str) -> Constellation4D:
    meta = {"name": "imported", "ring_ratio": "1.0", "rotation": "0.0"}
    labels, coords = [], []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            for tok in line[1:].split():
                if "=" in tok:
                    k, v = tok.split("=", 1)
                    meta[k] = v
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ValueError(f"malformed constellation row: {line!r}")
        labels.append(int(parts[0], 2))
        coords.append([float(v) for v in parts[1:]])
    arr = np.array(coords)
    return Constellation4D(arr[:, 0] + 1j * arr[:, 1], arr[:, 2] + 1j * arr[:, 3],
                           np.array(labels), meta["name"], float(meta["ring_ratio"]),
                           float(meta["rotation"]))


def save_table(c: Constellation4D, path) -> None:
    Path(path).write_text(to_table(c))


def load_table(path) -> Constellation4D:
    return from_table(Path(path).read_text())


def symbols_from_labels(c: Constellation4D, labels: Iterable[int]) -> np.ndarray:
    """Complex (n, 2) symbol stream for a sequence of labels."""
    idx = c._order[np.asarray(labels, dtype=np.int64)]
    return np.stack([c.x[idx], c.y[idx]], axis=1)
