"""Volume generators and bundled fixtures.

``wedge_template(nu)`` builds nu hexahedral patches around a straight inner
edge (the z axis); ``generic_wedge`` perturbs every vertex by uniform noise
of relative size ``noise`` (times the local edge length) with rational
coordinates, retrying until all checks pass.
"""

import json
import os
from fractions import Fraction

import numpy as np

from .gluing import check_assumption1
from .topology import MultiPatchVolume, TopologyError

DATA = os.path.join(os.path.dirname(__file__), "data")

FIXTURES = {
    "threepatch": "threepatch.json",
    "fourpatch-nongeneric": "fourpatch_nongeneric.json",
    "twocube": "twocube.json",
    "twopatch": "twopatch.json",
}


def fixture_path(name):
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}; choose from {sorted(FIXTURES)}")
    return os.path.join(DATA, FIXTURES[name])


def load_fixture(name):
    return MultiPatchVolume.load(fixture_path(name))


def _rat(x, denom):
    return Fraction(int(round(float(x) * denom)), denom)


def wedge_template(nu, radius=1.0, height=1.0):
    """Float vertices and patches of nu sectors around the z axis.

    Patch m has corners (center, spoke m, spoke m+1, outer point m) at the
    bottom and the same at the top; xi1 runs along spoke m, xi2 along spoke
    m+1, xi3 upward, so every patch is positively oriented."""
    if nu < 3:
        raise ValueError("a wedge needs at least three sectors")
    th = 2 * np.pi * np.arange(nu) / nu
    spokes = np.column_stack([np.cos(th), np.sin(th)]) * radius
    mid = th + np.pi / nu
    outer = np.column_stack([np.cos(mid), np.sin(mid)]) * radius * 1.2
    verts2d = [np.zeros(2)] + list(spokes) + list(outer)
    V = [list(v) + [0.0] for v in verts2d] + [list(v) + [height] for v in verts2d]
    off = len(verts2d)
    patches = []
    for m in range(nu):
        a, b, c = 1 + m, 1 + (m + 1) % nu, 1 + nu + m
        bottom = [0, a, b, c]
        patches.append(bottom + [i + off for i in bottom])
    return np.array(V), patches


def _edge_lengths(V, patches):
    from .topology import LOCAL_EDGES, edge_corners
    L = np.full(len(V), np.inf)
    for p in patches:
        for le in LOCAL_EDGES:
            a, b = (p[c] for c in edge_corners(*le))
            d = np.linalg.norm(V[a] - V[b])
            L[a] = min(L[a], d)
            L[b] = min(L[b], d)
    return L


def perturbed_volume(V, patches, rng, noise=0.1, denom=1000):
    L = _edge_lengths(V, patches)
    W = V + rng.uniform(-1, 1, V.shape) * (noise * L)[:, None]
    verts = [[_rat(x, denom) for x in v] for v in W]
    return MultiPatchVolume(verts, patches)


def generic_wedge(nu, seed=0, noise=0.1, ks=(0,), denom=1000, retries=10):
    """A randomly perturbed nu-sector volume satisfying the gluing assumption for
    every k in ks.  Deterministic for a given seed."""
    V, patches = wedge_template(nu)
    rng = np.random.default_rng(seed)
    last = None
    for _ in range(retries):
        try:
            vol = perturbed_volume(V, patches, rng, noise, denom)
        except TopologyError as exc:
            last = exc
            continue
        if all(check_assumption1(vol, k).passed for k in ks):
            return vol
        last = "gluing assumption"
    raise RuntimeError(f"no admissible perturbation after {retries} attempts ({last})")


def two_patch_template():
    V = [[x, y, z] for z in (0.0, 1.0) for y in (0.0, 1.0) for x in (0.0, 1.0, 2.0)]
    # vertex (x, y, z) has index 6 z + 3 y + x
    idx = lambda x, y, z: 6 * z + 3 * y + x
    patches = []
    for x0 in (0, 1):
        patches.append([idx(x0 + bx, by, bz) for bz in (0, 1) for by in (0, 1) for bx in (0, 1)])
    return np.array(V), patches


def generic_two_patch(seed=0, noise=0.1, ks=(0,), denom=1000, retries=10):
    V, patches = two_patch_template()
    rng = np.random.default_rng(seed)
    for _ in range(retries):
        try:
            vol = perturbed_volume(V, patches, rng, noise, denom)
        except TopologyError:
            continue
        if all(check_assumption1(vol, k).passed for k in ks):
            return vol
    raise RuntimeError("no admissible two-patch perturbation")


def save(volume, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(volume.to_json())
        fh.write("\n")
