import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from halfform import asymptotics as asy

KS = [8, 12, 16, 24, 32, 48, 64]
SHORT = (8, 12, 16, 24)


# --- fit_rate ------------------------------------------------------------------

def test_fit_exact_inverse_power():
    fit = asy.fit_rate(KS, [3 / k for k in KS])
    assert abs(fit.slope + 1) <= 1e-10
    assert fit.intercept == pytest.approx(math.log(3), abs=1e-10)
    assert fit.residual_rms <= 1e-12 and fit.slope_ci_halfwidth <= 1e-10


def test_fit_exact_inverse_square():
    assert abs(asy.fit_rate(KS, [5 / k**2 for k in KS]).slope + 2) <= 1e-10


def test_fit_detects_non_decay():
    slopes = []
    for top in (64, 512, 4096):
        ks = np.geomspace(top / 8, top, 6)
        ds = 2 + 1 / ks
        slope = asy.fit_rate(ks, ds).slope
        assert slope == pytest.approx(np.polyfit(np.log(ks), np.log(ds), 1)[0], abs=1e-12)
        # local slope -1/(2k + 1) brackets the fit over [top/8, top]
        assert -1 / (2 * top / 8 + 1) <= slope <= -1 / (2 * top + 1)
        slopes.append(slope)
    assert slopes[0] < slopes[1] < slopes[2] < 0


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 1), st.floats(-5, 5))
def test_fit_recovers_power_laws(p, logc):
    fit = asy.fit_rate(KS, [math.exp(logc) * k**p for k in KS])
    assert fit.slope == pytest.approx(p, abs=1e-9)
    assert fit.intercept == pytest.approx(logc, abs=1e-8)


def test_fit_accepts_table_rows():
    rows = [{"k": k, "defect": 1 / k} for k in KS]
    assert asy.fit_rate(rows).slope == pytest.approx(-1, abs=1e-12)


def test_fit_ci_matches_scipy_linregress():
    from scipy import stats
    rng = np.random.default_rng(1)
    ds = [k**-1.2 * math.exp(rng.normal(0, 0.1)) for k in KS]
    fit = asy.fit_rate(KS, ds)
    ref = stats.linregress(np.log(KS), np.log(ds))
    assert fit.slope == pytest.approx(ref.slope, abs=1e-12)
    assert fit.slope_ci_halfwidth == pytest.approx(stats.t.ppf(0.975, len(KS) - 2) * ref.stderr, rel=1e-10)


def test_zero_defects_are_excluded_with_warning():
    ds = [1 / k for k in KS]
    ds[0] = 0.0
    with pytest.warns(UserWarning, match="excluded"):
        fit = asy.fit_rate(KS, ds)
    assert fit.excluded == 1 and fit.n_points == 6
    assert fit.slope == pytest.approx(-1, abs=1e-10)


def test_all_zero_is_exact_sentinel():
    fit = asy.fit_rate(KS, [0.0] * 4 + [1e-15] * 3)
    assert fit.exact and fit.slope == -math.inf


def test_insufficient_data():
    with pytest.raises(asy.InsufficientData):
        asy.fit_rate([8, 16, 32], [1, 2, 3])
    with pytest.warns(UserWarning), pytest.raises(asy.InsufficientData):
        asy.fit_rate([8, 16, 32, 64], [1, 2, 3, 0])
    with pytest.raises(ValueError):
        asy.fit_rate(KS, [1.0] * 6 + [float("nan")])


# --- verdicts -----------------------------------------------------------------------

def _fit(slope, rms=0.0):
    return asy.RateFit(slope, 0.0, rms, 0.01, 7)


def test_verdict_examples():
    assert asy.verdict(_fit(-1.05), (-1.4, -0.6))["pass"]
    assert not asy.verdict(_fit(-0.2), (-1.4, -0.6))["pass"]
    assert not asy.verdict(_fit(-1.0, rms=0.5), (-1.4, -0.6))["pass"]
    exact = asy.RateFit(-math.inf, -math.inf, 0.0, 0.0, 0, 7, exact=True)
    rec = asy.verdict(exact, (-math.inf, -0.6))
    assert rec["pass"] and rec["exact"]
    assert not asy.verdict(exact, (-1.4, -0.6))["pass"]


def test_verdict_record_is_complete():
    rec = asy.verdict(_fit(-1.0), (-1.4, -0.6))
    for key in ("slope", "intercept", "residual_rms", "slope_ci_halfwidth", "window", "max_rms", "reason"):
        assert key in rec


# --- experiments --------------------------------------------------------------------

def test_experiment_validation():
    with pytest.raises(ValueError):
        asy.Experiment("x", "nope")
    with pytest.raises(ValueError):
        asy.Experiment("x", "commutator_decay", k_list=(8, 16, 32))
    with pytest.raises(ValueError):
        asy.Experiment("x", "commutator_decay", k_list=(8, 16, 16, 32))
    with pytest.raises(ValueError):
        asy.Experiment("x", "commutator_decay", params={"colour": 1})
    with pytest.raises(ValueError):
        asy.Experiment("x", "commutator_decay", tolerances={"slack": 1})
    e = asy.Experiment("x", "schrodinger")
    assert e.k_list == asy.BARGMANN_K and e.params["cutoff"] == 48
    assert asy.Experiment("y", "functoriality").k_list == asy.TORUS_K


def test_tau_parsing():
    assert asy._parse_tau([0.3, 1.1]) == 0.3 + 1.1j
    assert asy._parse_tau("0.3+1.1i") == 0.3 + 1.1j
    assert asy._parse_tau(2j) == 2j


def test_functoriality_rows():
    rows = asy.run(asy.Experiment("f", "functoriality", k_list=(8, 16, 32, 64)))
    assert [r["k"] for r in rows] == [8, 16, 32, 64]
    assert all(r["defect"] > 0 and r["gram_cond"] < 1e8 for r in rows)
    print("functoriality defects:", [f"{r['defect']:.2e}" for r in rows])


def test_constant_path_transport_is_identity():
    rows = asy.run(asy.Experiment("t", "transport_vs_fio", {"path": [[0.0, 1.0]]}, SHORT))
    assert all(r["defect"] <= 1e-8 for r in rows)


def test_nodecay_bounded_below():
    rows = asy.run(asy.Experiment("c", "curvature_nodecay", k_list=SHORT), jobs=2)
    assert min(r["defect"] for r in rows) > 0.2


def test_errors_name_failing_k():
    exp = asy.Experiment("s", "schrodinger", {"cutoff": 8, "hamiltonian": [0.0, 1.0, 0.0], "t": 3.0}, (4, 8, 12, 16))
    with pytest.raises(asy.ModelError, match="k=4"):
        asy.run(exp)


def test_run_is_deterministic_and_order_stable():
    exp = asy.Experiment("c", "commutator_decay", k_list=SHORT)
    a, b = asy.run(exp, jobs=1), asy.run(exp, jobs=4)
    assert a == b


def test_judge_spectrum_and_floor():
    exp = asy.Experiment("s", "spectrum", k_list=(4, 8, 12, 16))
    rec = asy.judge(exp, asy.run(exp))
    assert rec["pass"] and rec["max_defect"] <= 1e-6
    plain = asy.Experiment("p", "spectrum", {"corrected": False}, (4, 8, 12, 16))
    assert asy.judge(plain, asy.run(plain))["pass"]
    nod = asy.Experiment("n", "curvature_nodecay", k_list=SHORT)
    fake = [{"k": k, "defect": 0.01} for k in SHORT]
    rec = asy.judge(nod, fake)
    assert not rec["pass"] and "below" in rec["reason"]


@pytest.mark.parametrize("family", ["commutator_decay", "curvature_nodecay"])
def test_refinement_is_stable(family):
    changes = asy.refinement_changes(asy.Experiment("r", family, k_list=SHORT), jobs=2)
    assert max(changes) < 0.1


@pytest.mark.parametrize("family,params", [("functoriality", {}), ("transport_vs_fio", {}),
                                           ("curvature_decay", {}), ("schrodinger", {}), ("spectrum", {})])
def test_refinement_of_exact_families_stays_at_roundoff(family, params):
    # these defects sit at roundoff, where a relative change carries no information
    ks = SHORT if asy.FAMILIES[family]["model"] == "torus" else (4, 8, 12, 16)
    exp = asy.Experiment("r", family, params, ks)
    base = asy.run(exp, jobs=2)
    fine = asy.run(asy.Experiment("r", family, {**params, "grid_scale": 2}, ks), jobs=2)
    assert max(r["defect"] for r in base + fine) <= 1e-10
