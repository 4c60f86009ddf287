"""Small shared helpers: substream RNG construction, array shaping, CSV output.

Nothing here is part of the public API surface; modules import what they
need and the names stay underscore-private at package level.
"""

import csv
import os

import numpy as np

_UINT64_MASK = (1 << 64) - 1


def substream(master_seed, index):
    """Return a Generator for substream `index` of `master_seed`.

    Uses the counter-based Philox bit generator keyed by the pair
    (master_seed, index), so substreams are independent, cheap to create
    in any order, and reproducible across platforms.  This is the single
    splittable-seed scheme used everywhere in the package: task or path
    k of a run seeded with S draws from substream(S, k).
    """
    key = np.array([int(master_seed) & _UINT64_MASK, int(index) & _UINT64_MASK],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def as_points(x, dim):
    """Normalize `x` to a float array of shape (..., dim).

    Accepts scalars (dim 1 only), flat vectors of length dim, or arrays
    whose last axis already has length dim.  Returns a float64 array; a
    flag telling whether the input was a single point is returned too so
    callers can unwrap their output.
    """
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        if dim != 1:
            raise ValueError(f"scalar point given but dim={dim}")
        return a.reshape(1, 1), True
    if a.shape[-1] != dim:
        if dim == 1:
            # allow shape (...,) meaning a batch of scalar points
            return a[..., None], False
        raise ValueError(f"point array has last axis {a.shape[-1]}, expected {dim}")
    if a.ndim == 1:
        return a[None, :], True
    return a, False


def pairwise_sum(values, axis=None):
    """Deterministic fixed-order summation.

    np.sum on float64 already uses pairwise summation with a fixed
    traversal order for contiguous arrays; this wrapper just makes the
    contiguity explicit so that reductions are byte-stable regardless of
    how the caller sliced the input.
    """
    return np.sum(np.ascontiguousarray(values), axis=axis)


def format_value(v):
    """Render a cell for CSV output: shortest round-trip repr for floats."""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path, header, rows):
    """Write rows to a CSV file with a fixed column order and '\n' endings.

    Floats are formatted with repr (shortest round-trip), which is
    deterministic, so identical inputs give byte-identical files.
    """
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
