import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dipolelab.errors import HypothesisViolated
from dipolelab.lemma_suite import (
    DEFAULT_EPS,
    REGISTRY,
    check,
    fit_exponent,
    ledger_json,
    ledger_table,
    run_ledger,
)
from dipolelab.recovery_map import RecoveryParams, g_eps_prime

# measured failures, analysed in the ledger notes
KNOWN_FAILURES = {
    ("grad_integrals", 0.25), ("grad_integrals", 1 / 3),  # data track eps |ln eps|, not eps^2 |ln eps|
    ("u_rho_a_prime", 0.25),  # cos(phi) + 2 eps^gamma exceeds 2 at eps = 0.1
}


def test_registry_ids():
    assert len(REGISTRY) == 19
    assert {"positive_h", "energy_stereo", "g_prime", "part_I", "part_III", "H_tail"} <= set(REGISTRY)
    with pytest.raises(KeyError):
        check("no_such_lemma")


@given(st.floats(0.5, 3.0), st.floats(0.1, 10.0), st.sampled_from([0.0, 1.0, 2.0]))
def test_fit_exponent_recovers_power(p, c, k):
    e = np.array([1e-1, 1e-2, 1e-3])
    v = c * e ** p * np.abs(np.log(e)) ** k
    assert abs(fit_exponent(e, v, k) - p) < 1e-9


def test_positive_h_example():
    res = check("positive_h", (1e-2,), density=100)
    assert res.passed and res.worst_margin > 0


def test_energy_stereo_example():
    res = check("energy_stereo", (1e-3,))
    assert res.passed


def test_g_prime_example():
    p = RecoveryParams(1e-2)
    g1 = g_eps_prime(np.linspace(0, np.pi / 2, 200), p)
    assert g1.min() >= p.eps ** 2 / 2 and g1.max() <= 2
    assert check("g_prime", (1e-2,)).passed


def test_hypothesis_outside_range():
    with pytest.raises(HypothesisViolated):
        check("f_derivatives_a", (0.5,))


@pytest.fixture(scope="module")
def ledger():
    return run_ledger(DEFAULT_EPS, (0.25, 1 / 3))


def _cases():
    return [(i, g) for g in (0.25, 1 / 3) for i in REGISTRY]


@pytest.mark.parametrize("lemma_id,gamma", _cases(), ids=[f"{i}-g{g:.2f}" for i, g in _cases()])
def test_ledger_entry(ledger, lemma_id, gamma):
    entry = next(c for c in ledger if c.id == lemma_id and abs(c.gamma - gamma) < 1e-12)
    if (lemma_id, gamma) in KNOWN_FAILURES:
        assert not entry.passed
        pytest.xfail("claimed bound does not hold on the default grid; see notes")
    assert entry.passed, ledger_table([entry])


def test_ledger_outputs(ledger):
    rows = json.loads(ledger_json(ledger))
    assert len(rows) == 38 and {"id", "gamma", "passed", "claims", "worst_margin"} <= set(rows[0])
    table = ledger_table(ledger).splitlines()
    assert len(table) == 39 and "FAIL" in ledger_table(ledger)


def test_ledger_is_reproducible(ledger):
    again = run_ledger(DEFAULT_EPS, (0.25, 1 / 3), ids=["h_bounds", "e_prime_bounds"])
    first = [c for c in ledger if c.id in ("h_bounds", "e_prime_bounds")]
    assert ledger_json(again) == ledger_json(sorted(first, key=lambda c: (c.gamma, c.id != "h_bounds")))
