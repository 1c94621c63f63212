import numpy as np
import pytest

# Worked example: 20 z-values at q = 0.3 with the printed bounds and p-values.
TABLE_X = [-2.59, -2.16, -2.14, -2.02, -1.88, -1.68, -1.1, -0.755, -0.158, -0.136,
           -0.0408, -0.0293, 0.167, 0.245, 0.499, 0.702, 0.755, 0.779, 1.01, 1.88]
# one row per rank: U at t = 1, 2, 3
TABLE_U = [
    (-2.07, -1.42, -1.25),
    (-1.63, -0.982, -0.816),
    (-1.62, -0.968, -0.803),
    (-1.49, -0.84, -0.674),
    (-1.35, -0.703, -0.537),
    (-1.15, -0.504, -0.339),
    (-0.575, 0.0754, 0.241),
    (-0.231, 0.42, 0.586),
    (0.366, 1.02, 1.18),
    (0.388, 1.04, 1.2),
    (0.484, 1.13, 1.3),
    (0.495, 1.15, 1.31),
    (0.692, 1.34, 1.51),
    (0.769, 1.42, 1.59),
    (1.02, 1.67, 1.84),
    (1.23, 1.88, 2.04),
    (1.28, 1.93, 2.1),
    (1.3, 1.95, 2.12),
    (1.53, 2.19, 2.35),
    (2.4, 3.05, 3.22),
]
TABLE_P = [0.00473, 0.0155, 0.016, 0.0219, 0.0302, 0.0465, 0.136, 0.225, 0.437, 0.446,
           0.484, 0.488, 0.566, 0.597, 0.691, 0.759, 0.775, 0.782, 0.844, 0.97]


@pytest.fixture
def table_x():
    return np.array(TABLE_X)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
