"""Published dimension tables used as reference values by the test suite.

Edge tables map (p, r) to the edge-space dimension for k = 0..4.
"""

EDGE_COLUMNS = [(3, 1), (4, 1), (4, 2), (5, 1), (5, 2), (5, 3),
                (6, 1), (6, 2), (6, 3), (7, 1), (7, 2), (7, 3)]


def _table(rows):
    """rows[k][c] -> {(p, r): [dim at k = 0..4]}"""
    return {col: [rows[k][c] for k in range(len(rows))] for c, col in enumerate(EDGE_COLUMNS)}


# generic edge dimensions of random volumes with inner-edge valency nu
GENERIC_EDGE_DIMS = {
    3: _table([
        [16, 22, 22, 28, 28, 28, 34, 34, 34, 40, 40, 40],
        [16, 25, 22, 37, 31, 28, 49, 43, 37, 61, 55, 49],
        [16, 28, 22, 46, 34, 28, 64, 52, 40, 82, 70, 58],
        [16, 31, 22, 55, 37, 28, 79, 61, 43, 103, 85, 67],
        [16, 34, 22, 64, 40, 28, 94, 70, 46, 124, 100, 76],
    ]),
    4: _table([
        [18, 25, 25, 32, 32, 32, 39, 39, 39, 46, 46, 46],
        [18, 28, 25, 42, 35, 32, 56, 49, 42, 70, 63, 56],
        [18, 31, 25, 52, 38, 32, 73, 59, 45, 94, 80, 66],
        [18, 34, 25, 62, 41, 32, 90, 69, 48, 118, 97, 76],
        [18, 37, 25, 72, 44, 32, 107, 79, 51, 142, 114, 86],
    ]),
    5: _table([
        [20, 28, 28, 36, 36, 36, 44, 44, 44, 52, 52, 52],
        [20, 31, 28, 47, 39, 36, 63, 55, 47, 79, 71, 63],
        [20, 34, 28, 58, 42, 36, 82, 66, 50, 106, 90, 74],
        [20, 37, 28, 69, 45, 36, 101, 77, 53, 133, 109, 85],
        [20, 40, 28, 80, 48, 36, 120, 88, 56, 160, 128, 96],
    ]),
}

# edge dimensions of the non-generic four-patch fixture
NONGENERIC_EDGE_DIMS = _table([
    [19, 26, 26, 33, 33, 33, 40, 40, 40, 47, 47, 47],
    [19, 30, 26, 44, 37, 33, 58, 51, 44, 72, 65, 58],
    [19, 34, 26, 55, 41, 33, 76, 62, 48, 97, 83, 69],
    [19, 38, 26, 66, 45, 33, 94, 73, 52, 122, 101, 80],
    [19, 42, 26, 77, 49, 33, 112, 84, 56, 147, 119, 91],
])

# three-patch fixture, r = 1, k = 2^L - 1:
# (p, L) -> (sum of patch dims, sum of face dims, edge dim, total)
THREEPATCH_DIMS = {
    (3, 0): (48, 12, 16, 76),
    (3, 1): (288, 30, 16, 334),
    (3, 2): (1920, 84, 16, 2020),
    (3, 3): (13824, 264, 16, 14104),
    (3, 4): (104448, 912, 16, 105376),
    (4, 0): (135, 39, 22, 196),
    (4, 1): (864, 108, 25, 997),
    (4, 2): (6048, 336, 31, 6415),
    (4, 3): (44928, 1152, 43, 46123),
    (4, 4): (345600, 4224, 67, 349891),
    (5, 0): (288, 78, 28, 394),
    (5, 1): (1920, 234, 37, 2191),
    (5, 2): (13824, 780, 55, 14659),
    (5, 3): (104448, 2808, 91, 107347),
    (6, 0): (525, 129, 34, 688),
    (6, 1): (3600, 408, 49, 4057),
    (6, 2): (26400, 1416, 79, 27895),
    (6, 3): (201600, 5232, 139, 206971),
}


def generic_formula(nu, p, r, k):
    """Conjectured generic edge dimension, written out independently of the
    package implementation."""
    return 3 * p + 1 + nu * (p - 1) + k * max(0, (nu + 3) * (p - r - 3) + 3)


def nongeneric_formula(nu, p, r, k):
    return 3 * p + 2 + nu * (p - 1) + k * max(0, (nu + 3) * (p - r - 3) + 4)
