"""Test-function corpus and space-filling designs for the benchmark datasets.

Branin, Borehole, Welded Beam Design, and g10 follow their published closed
forms (constraints of the constrained problems are not modeled; only the
objective values are interpolated).  The g10mod / g10modmod variants are
registered by name but their closed forms are still to be transcribed from
the defining thesis; the corpus runs the four available functions until then.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .errors import OutOfDomain, PendingClosedForm
from .kernels import Dataset

LHS_MDU = "lhs_mdu"
UNIFORM = "uniform"

#: Latin hypercube candidates scored by the maximin criterion per design draw.
MDU_CANDIDATES = 200


@dataclass(frozen=True)
class TestFunction:
    name: str
    dim: int
    domain: np.ndarray  # (d, 2) lower/upper bounds
    fn: object  # callable on a d-vector, or None while pending

    def __post_init__(self):
        dom = np.asarray(self.domain, dtype=float)
        dom.setflags(write=False)
        object.__setattr__(self, "domain", dom)


def _branin(x):
    a = 1.0
    b = 5.1 / (4.0 * math.pi**2)
    c = 5.0 / math.pi
    r = 6.0
    s = 10.0
    t = 1.0 / (8.0 * math.pi)
    return a * (x[1] - b * x[0] ** 2 + c * x[0] - r) ** 2 + s * (1.0 - t) * math.cos(x[0]) + s


def _borehole(x):
    rw, r, tu, hu, tl, hl, length, kw = x
    log_ratio = math.log(r / rw)
    return (
        2.0 * math.pi * tu * (hu - hl)
        / (log_ratio * (1.0 + 2.0 * length * tu / (log_ratio * rw**2 * kw) + tu / tl))
    )


def _welded_beam(x):
    # Fabrication-cost objective of the welded beam design problem.
    h, l, t, b = x
    return 1.10471 * h**2 * l + 0.04811 * t * b * (14.0 + l)


def _g10(x):
    return x[0] + x[1] + x[2]


_REGISTRY = {
    "branin": TestFunction(
        name="branin",
        dim=2,
        domain=[[-5.0, 10.0], [0.0, 15.0]],
        fn=_branin,
    ),
    "borehole": TestFunction(
        name="borehole",
        dim=8,
        domain=[
            [0.05, 0.15],
            [100.0, 50000.0],
            [63070.0, 115600.0],
            [990.0, 1110.0],
            [63.1, 116.0],
            [700.0, 820.0],
            [1120.0, 1680.0],
            [9855.0, 12045.0],
        ],
        fn=_borehole,
    ),
    "weldedbeam": TestFunction(
        name="weldedbeam",
        dim=4,
        domain=[[0.125, 5.0], [0.1, 10.0], [0.1, 10.0], [0.125, 5.0]],
        fn=_welded_beam,
    ),
    "g10": TestFunction(
        name="g10",
        dim=8,
        domain=[
            [100.0, 10000.0],
            [1000.0, 10000.0],
            [1000.0, 10000.0],
            [10.0, 1000.0],
            [10.0, 1000.0],
            [10.0, 1000.0],
            [10.0, 1000.0],
            [10.0, 1000.0],
        ],
        fn=_g10,
    ),
    "g10mod": TestFunction(name="g10mod", dim=8, domain=[[0.0, 1.0]] * 8, fn=None),
    "g10modmod": TestFunction(name="g10modmod", dim=8, domain=[[0.0, 1.0]] * 8, fn=None),
}


def get_function(name):
    try:
        return _REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown test function: {name!r}; known: {sorted(_REGISTRY)}") from None


def all_functions():
    return tuple(_REGISTRY.values())


def available_functions():
    """Functions whose closed form is implemented, in registry order."""
    return tuple(f for f in _REGISTRY.values() if f.fn is not None)


def evaluate(fn, x):
    """Evaluate a test function at a point inside its domain."""
    if fn.fn is None:
        raise PendingClosedForm(f"{fn.name}: closed form not transcribed yet")
    x = np.asarray(x, dtype=float)
    if x.shape != (fn.dim,):
        raise ValueError(f"{fn.name} expects a {fn.dim}-vector, got shape {x.shape}")
    if np.any(x < fn.domain[:, 0]) or np.any(x > fn.domain[:, 1]):
        raise OutOfDomain(f"{fn.name}: point {x} outside domain")
    return float(fn.fn(x))


@dataclass(frozen=True)
class DesignSpec:
    kind: str
    n: int
    seed: int = 0

    def __post_init__(self):
        if self.kind not in (LHS_MDU, UNIFORM):
            raise ValueError(f"unknown design kind: {self.kind!r}")
        if self.n < 1:
            raise ValueError("n must be >= 1")


def _latin_unit(rng, n, d):
    # One stratum per coordinate, uniform within each cell.
    cells = np.column_stack([rng.permutation(n) for _ in range(d)])
    return (cells + rng.uniform(size=(n, d))) / n


def _maximin_latin_unit(rng, n, d, candidates=MDU_CANDIDATES):
    best = None
    best_dist = -1.0
    for _ in range(candidates):
        design = _latin_unit(rng, n, d)
        dist = float(np.min(pdist(design))) if n > 1 else math.inf
        if dist > best_dist:
            best, best_dist = design, dist
    return best


def generate_design(spec, domain):
    """Generate an n x d design inside the domain, deterministic given seed.

    ``lhs_mdu`` approximates multi-dimensional-uniformity LHS by drawing
    MDU_CANDIDATES random Latin hypercubes and keeping the one with the
    largest minimum pairwise distance; ``uniform`` samples i.i.d. uniformly.
    """
    domain = np.asarray(domain, dtype=float)
    d = domain.shape[0]
    rng = np.random.default_rng(spec.seed)
    if spec.kind == LHS_MDU:
        unit = _maximin_latin_unit(rng, spec.n, d)
    else:
        unit = rng.uniform(size=(spec.n, d))
    return domain[:, 0] + unit * (domain[:, 1] - domain[:, 0])


def make_dataset(fn, design):
    """Evaluate a test function on a generated design."""
    X = generate_design(design, fn.domain)
    z = np.array([evaluate(fn, row) for row in X])
    meta = {"function": fn.name, "design": design.kind, "n": design.n, "seed": design.seed}
    return Dataset(X=X, z=z, meta=meta)


def corpus(multipliers=(3, 5, 10, 20), design_kind=LHS_MDU, base_seed=0):
    """The benchmark corpus: every available function at n = m * d points.

    Returns (dataset_id, Dataset) pairs; ids look like ``branin-n6``.
    Each dataset gets its own deterministic seed derived from base_seed.
    """
    out = []
    for fn_index, fn in enumerate(available_functions()):
        for m_index, mult in enumerate(multipliers):
            n = mult * fn.dim
            seed = base_seed * 131071 + fn_index * 101 + m_index
            ds = make_dataset(fn, DesignSpec(kind=design_kind, n=n, seed=seed))
            out.append((f"{fn.name}-n{n}", ds))
    return out


def dataset_to_csv(dataset, path):
    """Write a dataset as CSV with '#'-prefixed metadata comment lines."""
    meta = dataset.meta or {}
    lines = []
    for key in ("function", "design", "n", "seed"):
        if key in meta:
            lines.append(f"# {key}: {meta[key]}")
    header = ",".join([f"x_{k + 1}" for k in range(dataset.dim)] + ["z"])
    lines.append(header)
    for row, value in zip(dataset.X, dataset.z):
        lines.append(",".join(repr(float(v)) for v in row) + "," + repr(float(value)))
    with open(path, "w", newline="") as handle:
        handle.write("\n".join(lines) + "\n")


def dataset_from_csv(path):
    """Read a dataset written by :func:`dataset_to_csv`."""
    meta = {}
    rows = []
    header_seen = False
    with open(path) as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line.lstrip("# ").partition(":")
                meta[key.strip()] = value.strip()
                continue
            if not header_seen:
                header_seen = True  # column names are positional: x_1..x_d, z
                continue
            rows.append([float(v) for v in line.split(",")])
    if not rows:
        raise ValueError(f"{path}: no data rows")
    data = np.asarray(rows)
    for key in ("n", "seed"):
        if key in meta:
            meta[key] = int(meta[key])
    return Dataset(X=data[:, :-1], z=data[:, -1], meta=meta or None)
