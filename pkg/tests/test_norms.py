import math

import numpy as np
import pytest

from fbpcontrol.mesh import build_bulk_mesh
from fbpcontrol.norms import (
    COLUMNS,
    ERROR_KEYS,
    RateTable,
    SolutionBundle,
    compute_slopes,
    error_vs_reference,
    fitted_slope,
    norm_bulk,
    norm_trace,
    slope,
)


def test_trace_norms_of_linear_and_hat():
    x = np.linspace(0, 1, 9)
    assert norm_trace(x, "L2") == pytest.approx(1 / math.sqrt(3))
    assert norm_trace(x, "W1inf") == pytest.approx(1.0)
    hat = 1 - np.abs(2 * x - 1)
    assert norm_trace(hat, "W11") == pytest.approx(2.0)
    assert norm_trace(hat, "W1inf") == pytest.approx(2.0)
    assert norm_trace(hat, "L1") == pytest.approx(0.5)


def test_l1_with_sign_change():
    # f = x - 1/2 on one interval: two triangles of area 1/8
    assert norm_trace(np.array([-0.5, 0.5]), "L1") == pytest.approx(0.25)
    assert norm_trace(np.zeros(5), "L1") == 0.0


def test_bulk_norms():
    m = build_bulk_mesh(2)
    x1, x2 = m.coords.T
    assert norm_bulk(x1, "W1p", 2.1, m) == pytest.approx(1.0)
    assert norm_bulk(x1 + x2, "W1p", 2.0, m) == pytest.approx(math.sqrt(2))
    assert norm_bulk(np.ones(m.n_nodes), "L2", mesh=m) == pytest.approx(1.0)
    # mesh inferred from the vector length
    assert norm_bulk(x1, "W1p", 3.0) == pytest.approx(1.0)


def test_bad_kinds():
    with pytest.raises(ValueError):
        norm_trace(np.zeros(3), "H1")
    with pytest.raises(ValueError):
        norm_bulk(np.zeros(9), "W1p", p=1.0)


def _bundle(level, f):
    n = 2 * 2**level
    m = build_bulk_mesh(level)
    z = np.linspace(0, 1, n + 1)
    x1, x2 = m.coords.T
    return SolutionBundle(level, n, f(z), f(z), f(x1) * x2, f(z), f(x1) * x2)


def test_errors_vanish_for_resolved_fields():
    lin = lambda z: 0.3 * z  # noqa: E731
    err = error_vs_reference(_bundle(1, lin), _bundle(3, lin))
    assert set(err) == set(ERROR_KEYS)
    assert max(err.values()) <= 1e-14


def test_errors_interpolation_rates():
    f = lambda z: np.sin(np.pi * z)  # noqa: E731
    ref = _bundle(7, f)
    e = [error_vs_reference(_bundle(lv, f), ref) for lv in (2, 3, 4)]
    h = [1 / 8, 1 / 16, 1 / 32]
    assert fitted_slope(h, [x["e_u_L2"] for x in e]) == pytest.approx(2.0, abs=0.1)
    assert fitted_slope(h, [x["e_gamma_W1inf"] for x in e]) == pytest.approx(1.0, abs=0.1)
    assert fitted_slope(h, [x["e_y_W1p"] for x in e]) == pytest.approx(1.0, abs=0.1)


def test_reference_must_be_finer():
    b = _bundle(2, np.sin)
    with pytest.raises(ValueError):
        error_vs_reference(b, b)


def test_slopes():
    assert slope(4.0, 1.0, 0.5, 0.25) == pytest.approx(2.0)
    assert math.isnan(slope(0.0, 1.0, 0.5, 0.25))
    assert fitted_slope([1, 0.5, 0.25], [3, 1.5, 0.75]) == pytest.approx(1.0)
    assert math.isnan(fitted_slope([1], [1]))


def test_table_round_trip_and_order():
    t = RateTable()
    for lv, e in ((2, 0.04), (1, 0.16)):
        t.add(lam=1e-3, radius=math.inf, level=lv, h=0.5**lv, dofs=10 * lv, **{k: e for k in ERROR_KEYS})
    t = compute_slopes(t)
    text = t.to_csv()
    assert text.splitlines()[0] == ",".join(COLUMNS)
    back = RateTable.from_csv(text)
    assert back.to_csv() == text
    rows = back.groups()[(1e-3, math.inf)]
    assert [r["level"] for r in rows] == [1, 2]
    assert rows[1]["slope_u_L2"] == pytest.approx(2.0)
    assert '"inf"' in t.to_json()
    with pytest.raises(ValueError):
        RateTable.from_csv("a,b\n1,2\n")
