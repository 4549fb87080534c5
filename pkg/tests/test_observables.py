import csv
import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from liouvtraj.errors import MissingDiagonal, NonGaussianWarning
from liouvtraj.model import GridSpec, InitialCondition, PhysicalParams, init_ensemble
from liouvtraj.observables import (
    TIMESERIES_HEADER,
    MomentRecord,
    crossing_violations,
    diagonal_rows,
    gaussian_widths,
    moment_record,
    purity,
    record_rows,
    trace,
    trajectories_by_id,
    write_csv,
)
from liouvtraj.simulate import half_time, relative_differences


def ensemble(sigma=1.0, xi0=2.0, economy=True, n=41):
    ic = InitialCondition(xi0=xi0, sigma_init=sigma)
    return init_ensemble(PhysicalParams(), ic, GridSpec(n, n, 5.0 * sigma, 5.0 * sigma), economy)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.5, 2.0), st.floats(-3.0, 3.0), st.floats(0.5, 2.0))
def test_gaussian_observables(sigma_xi, xi0, ratio):
    """exp(g) with independent widths: trace 1, purity = s_eta / s_xi."""
    ens = ensemble(sigma=sigma_xi, xi0=xi0)
    s_eta = sigma_xi / ratio
    eta_span = 5.0 * s_eta / (ens.eta.max())
    eta = ens.eta * eta_span
    g0 = -np.log(np.sqrt(np.pi) * sigma_xi)
    g = g0 - (ens.xi - xi0) ** 2 / (2 * sigma_xi**2) - eta**2 / (2 * s_eta**2)
    ens = dataclasses.replace(ens, eta=eta, g=g)
    assert trace(ens) == pytest.approx(1.0, abs=1e-6)
    assert purity(ens) == pytest.approx(s_eta / sigma_xi, rel=1e-5)
    wf = gaussian_widths(ens)
    assert tuple(wf) == pytest.approx((xi0, sigma_xi, s_eta), rel=1e-10, abs=1e-10)
    assert wf.residual < 1e-10


@pytest.mark.parametrize("economy", [True, False])
def test_initial_moment_record(economy):
    rec = moment_record(ensemble(economy=economy))
    assert rec.t == 0.0
    assert (rec.xi_peak, rec.sigma_xi, rec.sigma_eta) == pytest.approx((2.0, 1.0, 1.0), abs=1e-10)
    assert rec.trace == pytest.approx(1.0, abs=1e-6)
    assert rec.purity == pytest.approx(1.0, abs=1e-6)


def test_non_gaussian_warning():
    ens = ensemble()
    g = ens.g + 0.3 * np.cos(3 * ens.xi)
    with pytest.warns(NonGaussianWarning):
        gaussian_widths(dataclasses.replace(ens, g=g))


def test_dead_points_do_not_count():
    ens = ensemble()
    alive = ens.alive.copy()
    alive[-1] = False
    g = ens.g.copy()
    g[-1] = 800.0
    out = dataclasses.replace(ens, alive=alive, g=g)
    assert np.isfinite(purity(out))
    assert trace(out) == pytest.approx(trace(ens))


def test_missing_diagonal():
    ens = ensemble()
    eta = ens.eta.copy()
    eta[ens.diag_row, 3] = 0.1
    with pytest.raises(MissingDiagonal):
        trace(dataclasses.replace(ens, eta=eta))


def test_diagonal_rows_and_ids():
    ens = ensemble(n=5)
    rows = diagonal_rows(ens)
    assert [r[0] for r in rows] == [0, 1, 2, 3, 4]
    assert all(r[3] == 0.0 for r in rows)
    later = dataclasses.replace(ens, traj_epoch=2, t=0.5)
    assert [r[0] for r in diagonal_rows(later)] == [10, 11, 12, 13, 14]
    by_id = trajectories_by_id(rows + diagonal_rows(dataclasses.replace(ens, t=0.1)))
    assert by_id[3].shape == (2, 2)


def test_crossing_violations():
    ens = ensemble(n=5)
    rows = diagonal_rows(ens)
    assert crossing_violations(rows, 5) == 0
    xi = ens.xi.copy()
    xi[ens.diag_row, [1, 2]] = xi[ens.diag_row, [2, 1]]
    bad = diagonal_rows(dataclasses.replace(ens, xi=xi, t=1.0))
    assert crossing_violations(rows + bad, 5) == 1
    # rows of different epochs are never compared
    other = diagonal_rows(dataclasses.replace(ens, traj_epoch=1, t=0.0))
    assert crossing_violations(rows + other, 5) == 0


def test_write_csv_round_trip(tmp_path):
    recs = [MomentRecord(0.1, 2.0, 1.0, 1.0 / 3.0, 1.0, 0.5)]
    path = tmp_path / "ts.csv"
    write_csv(path, TIMESERIES_HEADER, record_rows(recs))
    with open(path) as fh:
        header, row = list(csv.reader(fh))
    assert header == TIMESERIES_HEADER
    assert float(row[3]) == 1.0 / 3.0


def test_relative_differences_floor():
    a = [MomentRecord(0.0, 0.01, 1.1, 0.9, 1.0, 1.0)]
    b = [MomentRecord(0.0, 0.0, 1.0, 1.0, 1.0, 1.0)]
    ((t, dpeak, dsx, dse),) = relative_differences(a, b, 1.0)
    assert (t, dpeak, dsx, dse) == pytest.approx((0.0, 0.01, 0.1, 0.1))


@pytest.mark.parametrize(
    "values, target, expected",
    [
        ([1.0, 2.0, 3.0], 3.0, 1.0),
        ([4.0, 2.0, 1.0], 0.0, 1.0),
        ([1.0, 1.5, 2.5, 2.9], 3.0, 1.5),
        ([1.0, 1.1], 3.0, np.inf),
    ],
)
def test_half_time(values, target, expected):
    ts = np.arange(len(values), dtype=float)
    assert half_time(ts, values, target) == pytest.approx(expected)
