"""The thirteen acceptance criteria, each at its stated tolerance.

Every test records one pass/fail line, shown in the terminal summary.
Criteria 2, 6 and 11 are red on this implementation and are marked as
strict expected failures; the reasons carry the measured numbers.
"""
import pytest

from dipolelab.acceptance import CRITERIA, TITLES, CriterionResult
from dipolelab.cli import main

RED = {
    2: "c_eps energy converges like eps^gamma |ln eps|: relative deviation 0.83 at eps=1e-3 (needs 0.15); "
       "part I is 0.653 against 1/2 +- 0.1",
    6: "three ledger claims fail: int |grad phi|^2 over a'_eps tracks eps |ln eps| rather than eps^2 |ln eps| "
       "(both gammas), and cos(phi) + 2 eps^gamma <= 2 is false at eps=0.1, gamma=1/4 (2.125)",
    11: "pointwise conformality holds only in the core r <= eps^2/2 of c_eps (2.8e-4 at eps=1e-3); "
        "further out the residual ratio tends to 1/2 because u_r dominates",
}


def _check(k, criterion_log):
    res = CRITERIA[k]()
    criterion_log.append(res.line())
    print(res.line())
    assert res.passed, res.summary


def _case(k):
    if k in RED:
        return pytest.param(k, marks=pytest.mark.xfail(strict=True, reason=RED[k]), id=f"criterion_{k:02d}")
    return pytest.param(k, id=f"criterion_{k:02d}")


@pytest.mark.parametrize("k", [_case(k) for k in range(1, 13)])
def test_criterion(k, criterion_log):
    _check(k, criterion_log)


def test_criterion_13_determinism(tmp_path, criterion_log):
    args = ["report", "--criteria", "1,4,5,9,11,13", "--seed", "0"]
    outs = []
    for name in ("first", "second"):
        main([*args, "--out", str(tmp_path / name)])
        outs.append({p.name: p.read_bytes() for p in sorted((tmp_path / name).iterdir())})
    same = outs[0] == outs[1] and set(outs[0]) == {"report.csv", "report.json"}
    res = CriterionResult(13, same, "two report runs give byte-identical CSV and JSON" if same
                          else "report outputs differ between runs")
    criterion_log.append(res.line())
    print(res.line())
    assert same


def test_titles_cover_all_criteria():
    assert sorted(TITLES) == list(range(1, 14))


if __name__ == "__main__":
    for k in range(1, 13):
        print(CRITERIA[k]().line(), flush=True)
