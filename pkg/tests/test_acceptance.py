"""One test per acceptance criterion, each running its shipped config.

A PASS/FAIL line per criterion is printed in the terminal summary.
"""

from pathlib import Path

import pytest

from opcalc.harness import load_config, run_suite

from .conftest import ACCEPTANCE

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

CRITERIA = [
    (1, "c01_lemma0", "closed form of d^a |t-z|^-2, exact, nu<=3, |a|<=6, under 60 s"),
    (2, "c02_h1_h2", "both T-coefficient recursions, exact"),
    (3, "c03_basestep", "base-step commutator identity, residual <= 1e-10"),
    (4, "c04_lemma1", "order-n expansion of [ad^a0 B, g(A)], residual <= 1e-9"),
    (5, "c05_acommb", "expansion of [B, (A_l - conj z_l)|A-z|^-2nu], residual <= 1e-9"),
    (6, "c06_leibniz", "Leibniz expansion with 2 and 3 factors, residual <= 1e-9"),
    (7, "c07_calibration", "calibrated constant 1/pi (1e-3) and 1/pi^2 (1e-2), under 5 min"),
    (8, "c08_hs_apply", "quadrature f(A) vs spectral oracle, 1e-4 / 1e-3, estimate consistent"),
    (9, "c09_theorem", "quadrature remainder vs direct remainder within 3x its estimate"),
    (10, "c10_bound_sweep", "max weighted ratio varies < 10x across d in {4, 8, 16}"),
    (11, "c11_hadamard", "decay slope of the kernel remainder >= -(n + 2 nu) - 0.2"),
    (12, "c12_aae_decay", "fitted vanishing order of dbar f~ equals N within 0.2"),
]


@pytest.mark.parametrize("number, config, label", CRITERIA, ids=[c[1] for c in CRITERIA])
def test_criterion(number, config, label, tmp_path):
    ACCEPTANCE[number] = (label, False)
    result = run_suite(load_config(CONFIGS / f"{config}.json"), tmp_path)
    ACCEPTANCE[number] = (label, result.passed)
    failed = [i for i, case in enumerate(result.report["cases"]) if not case["passed"]]
    assert result.passed, f"{config}: failing cases {failed}"
