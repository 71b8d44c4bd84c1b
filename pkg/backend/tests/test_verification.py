import pytest

from app import verification
from app.exceptions import BadParams, VerificationFailed
from app.schemas import Verdict, VerificationReport
from app.verification import LEMMAS, run_verification, verify


def test_lemma_table():
    assert set(LEMMAS) == {"tq", "finiteorbits", "gna", "radii", "isometry-b", "isometry-a", "cantor-mu", "dpo-rz"}


def test_tq_small_range():
    report = verify("tq", n=3, m=3)
    assert report.established
    assert report.details["sizes"]["1"] == 3
    assert report.details["sizes"]["2"] == 15


def test_finite_orbits():
    report = verify("finiteorbits", n_max=3)
    assert report.verdict == Verdict.ESTABLISHED
    assert report.details["orbits_searched"] > 0


def test_cantor_orbits_match_the_oracle():
    report = verify("gna", period=3, levels=5, count=6)
    assert report.established
    assert len(report.details["sequences"]) == 6
    assert report.details["three_node_orbit_of_01"]


def test_radii_conditions():
    report = verify("radii", n_max=3, probes=2_000, seed=4)
    assert report.established
    exps = report.details["radius_exponents"]
    assert exps == sorted(exps) and len(set(exps)) == len(exps)


def test_family_b_certificate_and_control():
    report = verify("isometry-b", n_max=4)
    assert report.established
    assert report.certificate.established
    assert report.details["control_verdict"] == Verdict.COUNTEREXAMPLE.value
    assert "certificate" in report.payload()


def test_cantor_mu():
    report = verify("cantor-mu", levels=6)
    assert report.established
    assert report.details["g_defined_at_mu"]


def test_dpo_on_the_line_needs_the_restriction():
    report = verify("dpo-rz", samples=10, global_samples=20, global_bound=200)
    assert report.established
    assert report.details["max_restricted_orbit"] <= 2
    assert report.details["global_finite_orbits"] == 0
    assert report.payload()["evidence"]["probe"] == "dpo"


def test_unknown_lemma_and_bad_params():
    with pytest.raises(BadParams):
        run_verification("nope")
    with pytest.raises(BadParams):
        run_verification("tq", colour="blue")
    with pytest.raises(BadParams):
        run_verification("tq", n=0)


def test_failed_check_raises_with_report(monkeypatch):
    failing = VerificationReport(lemma="tq", claim="nothing holds", verdict=Verdict.COUNTEREXAMPLE)
    monkeypatch.setitem(verification.LEMMAS, "tq", lambda **_: failing)
    with pytest.raises(VerificationFailed) as info:
        verify("tq")
    assert info.value.report is failing
    assert info.value.status_code == 409


def test_tq_full_range():
    report = verify("tq", n=5, m=5)
    assert report.established
    assert set(report.details["sizes"]) >= {"1", "2", "3", "4", "5"}


def test_radii_up_to_level_four():
    report = verify("radii", n_max=4)
    assert report.established
    exps = report.details["radius_exponents"]
    assert len(exps) == 5 and exps == sorted(set(exps))


def test_family_b_certificate_up_to_level_eight():
    report = verify("isometry-b", n_max=8)
    assert report.established
    assert report.certificate.established


def test_family_a_group_action_separates_by_an_eighth():
    report = verify("isometry-a")
    assert report.established
    assert report.details["group_action_c_hat"] >= 1 / 8
    assert report.details["group_action_verdict"] == Verdict.EVIDENCE_FOR
