import io
import math

import numpy as np
import pytest

from ringsht.cli import random_alm
from ringsht.grid import build_healpix_grid
from ringsht.perfmodel import (
    CSV_FIELDS,
    FLOP_CONSTANTS,
    CostParams,
    comm_time,
    flops_estimate,
    message_size,
    predict,
    profile,
    runtime_curves,
    write_curves_csv,
)


def test_params_defaults_and_validation():
    p = CostParams()
    assert (p.alpha, p.beta_inv_bw, p.gamma, p.n_C, p.switch_bytes) == (1e-5, 1e-9, 1e-10, 16, 262144)
    with pytest.raises(ValueError):
        CostParams(alpha=0)


def test_flops_scaling():
    a = flops_estimate(100, 50, 50, 1)
    b = flops_estimate(200, 100, 100, 1)
    assert b["recurrence"] == pytest.approx(8 * a["recurrence"])
    assert flops_estimate(100, 50, 50, 2)["recurrence"] == pytest.approx(0.5 * a["recurrence"])
    assert flops_estimate(15, 8, 8, 1)["recurrence"] == FLOP_CONSTANTS["c2"] * 960
    with pytest.raises(ValueError):
        flops_estimate(15, 8, 8, 0)


def test_message_size():
    assert message_size(15, 8, 4, 16) == 480
    assert message_size(15, 8, 1) == 15 * 8 * 16
    assert message_size(16383, 8192, 128) == 16_776_192
    with pytest.raises(ValueError):
        message_size(15, 8, 0)


def test_comm_time():
    assert comm_time(480, 1) == 0.0
    assert comm_time(1 << 20, 1) == 0.0
    assert comm_time(480, 4) == pytest.approx(2.192e-5, rel=1e-12)
    assert comm_time(1_048_576, 4) == pytest.approx(3.175728e-3, rel=1e-12)
    with pytest.raises(ValueError):
        comm_time(480, 0)


def test_comm_branch_switch_is_discontinuous():
    p = CostParams()
    below = comm_time(p.switch_bytes, 8, p)
    above = comm_time(p.switch_bytes + 1, 8, p)
    assert below != pytest.approx(above)


def test_runtime_curves_structure():
    rows = runtime_curves([1024], [2, 4, 8, 16])
    comp = [r["compute_s"] for r in rows]
    for a, b in zip(comp, comp[1:]):
        assert b == pytest.approx(a / 2, rel=1e-15)
    long_rows = [r for r in rows if r["message_bytes"] > CostParams().switch_bytes]
    assert len(long_rows) >= 2
    # long branch: bandwidth term is beta * R * L * n_C * (n - 1) / n, so it saturates
    p = CostParams()
    for r in long_rows:
        n = r["n_workers"]
        bw = (r["comm_s"] - p.alpha * (n - 1)) * n / (n - 1)
        assert bw == pytest.approx(p.beta_inv_bw * r["n_rings"] * r["mmax"] * p.n_C, rel=1e-12)


def test_ratio_crossing_grows_with_nside():
    workers = [2**k for k in range(1, 14)]
    crossings = []
    for nside in (256, 512, 1024, 2048, 4096):
        rows = runtime_curves([nside], workers)
        crossings.append(next(r["n_workers"] for r in rows if r["ratio"] < 1))
    assert crossings == sorted(crossings) and crossings[0] < crossings[-1]


def test_curves_csv():
    buf = io.StringIO()
    write_curves_csv(runtime_curves([64], [1, 2]), buf)
    lines = buf.getvalue().splitlines()
    assert lines[0].startswith("nside,n_rings,lmax,mmax,n_workers")
    assert len(lines) == 3


def test_predict_report_csv():
    rep = predict(127, 64, 64, 2)
    text = rep.to_csv()
    lines = text.splitlines()
    assert lines[0] == ",".join(CSV_FIELDS)
    assert [l.split(",")[0] for l in lines[1:]] == ["precompute", "recurrence", "exchange", "fft"]
    assert all(l.split(",")[2] == "" for l in lines[1:])
    assert rep.stages["recurrence"].predicted_s == pytest.approx(1e-10 * 4 * 127 * 64 * 64 / 2)


def test_profile_counts_steps_exactly():
    lmax = mmax = 8
    g = build_healpix_grid(2)
    rep = profile(random_alm(lmax, mmax, 0), g)
    R = g.n_rings
    assert rep.recurrence_steps == sum((lmax - m - 1) * R for m in range(mmax + 1)) + 2 * R * (mmax + 1)
    assert all(rep.stages[s].measured_s is not None for s in ("precompute", "recurrence", "exchange", "fft"))
    assert rep.stages["recurrence"].flops == FLOP_CONSTANTS["c2"] * rep.recurrence_steps


def test_profile_analysis_and_errors():
    from ringsht.transforms import synthesis

    g = build_healpix_grid(4)
    a = random_alm(8, 8, 1)
    rep = profile(a, g, direction="analysis", skymap=synthesis(a, g), n_workers=2)
    assert rep.exchange_bytes > 0
    with pytest.raises(ValueError):
        profile(a, g, direction="analysis")
    with pytest.raises(ValueError):
        profile(a, g, direction="sideways")


def test_counted_recurrence_slope():
    lmaxes = [64, 128, 256, 512]
    counts = [profile(random_alm(L, L, 0), build_healpix_grid(L // 2)).stages["recurrence"].flops for L in lmaxes]
    slope = np.polyfit(np.log(lmaxes), np.log(counts), 1)[0]
    assert abs(slope - 3.0) <= 0.1
