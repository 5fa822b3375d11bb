from dataclasses import asdict
from pathlib import Path

import pytest

import unlearnlab.experiment as E
from unlearnlab.evaluation import BiasReport
from unlearnlab.model import ConfigError


def parse(text):
    return E.parse_config(text, base_dir=Path("/data"))


def test_defaults_without_sections():
    cfg = parse("")
    assert cfg.overlaps == [1.0, 0.0]
    assert cfg.modes == ["masked", "full-sequence"]
    assert cfg.unlearn.learning_rate == 1e-5 and cfg.unlearn.steps == 50
    assert cfg.units() == ["rho1.00", "rho0.00"]


def test_typed_values_and_comments():
    cfg = parse("[unlearn]\nlearning_rate = 1e-4 ; shipped value\nclip_norm = none\n"
                "[pretrain]\nsteps = 7\n[acceptance]\ncheck_determinism = no\n")
    assert cfg.unlearn.learning_rate == 1e-4
    assert cfg.unlearn.clip_norm is None
    assert cfg.pretrain.steps == 7
    assert cfg.thresholds.check_determinism is False


def test_relative_data_paths_resolve_against_config_dir():
    keys = "".join(f"{k} = f/{k}.x\n" for k in E.DATA_KEYS)
    with pytest.raises(ConfigError, match="does not exist"):
        parse("[data]\n" + keys)


def test_partial_external_data_rejected():
    with pytest.raises(ConfigError, match="missing"):
        parse("[data]\npairs = p.csv\n")


def test_overrides_only_touch_seed_and_output():
    cfg = parse("[experiment]\nseed = 3\n[unlearn]\nlearning_rate = 1e-4\n")
    new = cfg.with_overrides(seed=11, output_dir="elsewhere")
    assert new.seed == new.unlearn.seed == new.pretrain.seed == 11
    assert new.output_dir == Path("elsewhere")
    assert new.unlearn.learning_rate == 1e-4
    assert cfg.seed == 3 and cfg.unlearn.seed == 3


def test_unit_modes():
    cfg = parse("[experiment]\noverlaps = 1.0, 0.5, 0.0\n")
    assert cfg.units() == ["rho1.00", "rho0.50", "rho0.00"]
    assert cfg.unit_modes("rho1.00") == ["masked", "full-sequence"]
    assert cfg.unit_modes("rho0.50") == ["masked"]


def test_invalid_unlearn_config_is_a_config_error():
    with pytest.raises(ConfigError, match=r"\[unlearn\]"):
        parse("[unlearn]\nsteps = 50\ncheckpoint_every = 7\n")


def test_shipped_acceptance_config():
    cfg = E.acceptance_config()
    assert cfg.seed == 0
    assert cfg.unlearn.learning_rate == 1e-4
    assert (cfg.unlearn.steps, cfg.unlearn.batch_size, cfg.unlearn.checkpoint_every) == (50, 8, 10)
    t = cfg.thresholds
    assert (t.retain_max_ratio, t.lm_max_drop, t.unlearn_min_ratio, t.crows_min_drop, t.crows_floor,
            t.runtime_budget_s) == (1.10, 5.0, 1.5, 2.0, 45.0, 600.0)


def test_calibration_record_matches_shipped_config():
    rec = E.calibration_record()
    cfg = E.acceptance_config()
    assert rec["thresholds"] == asdict(cfg.thresholds)
    assert rec["seeds"] == [s["seed"] for s in rec["per_seed"]]
    assert rec["passing_seeds"] == sum(s["passed_4_to_8"] for s in rec["per_seed"])
    assert all(s["baseline_target_crows"] > rec["bias_injection_floor"] for s in rec["per_seed"])


def _reports(a, b, retain, ul, lm=100.0):
    """Two-step report rows: crows for domains A and B, retain and unlearn-set ppl ratios at step 50."""
    rows = []
    for step, (ca, cb, r, u) in ((0, (a[0], b[0], 1.0, 1.0)), (50, (a[1], b[1], retain, ul))):
        ppl = {"retain": 10 * r, "unlearn_train": 10 * u, "unlearn_test": 10 * u}
        rows.append(BiasReport(step, "domain_a", ca, 50.0, lm, ppl, unlearned=True))
        rows.append(BiasReport(step, "domain_b", cb, 50.0, lm, ppl))
    return rows


def test_check_trends_on_hand_built_reports():
    cfg = parse("")
    masked = _reports((90, 60), (80, 70), 1.01, 2.0)
    contrast = _reports((90, 60), (80, 78), 1.01, 2.0)
    full = _reports((90, 60), (80, 70), 1.05, 2.0)
    checks = E.check_trends(cfg, {("rho1.00", "masked"): masked, ("rho0.00", "masked"): contrast,
                                  ("rho1.00", "full-sequence"): full})
    assert [c.criterion for c in checks] == [4, 5, 6, 7, 8]
    assert all(c.passed for c in checks)


@pytest.mark.parametrize("a,b_contrast,retain,ul,failing", [
    ((90, 40), (80, 78), 1.01, 2.0, 6),    # crossed below the floor
    ((90, 89), (80, 78), 1.01, 2.0, 6),    # moved by less than 2
    ((90, 60), (80, 90), 1.01, 2.0, 7),    # disjoint bundle moved more than shared
    ((90, 60), (80, 78), 1.20, 2.0, 4),    # retain blew up
    ((90, 60), (80, 78), 1.01, 1.2, 5),    # unlearn set barely moved
])
def test_check_trends_names_the_violated_criterion(a, b_contrast, retain, ul, failing):
    cfg = parse("")
    reports = {("rho1.00", "masked"): _reports(a, (80, 70), retain, ul),
               ("rho0.00", "masked"): _reports(a, b_contrast, retain, ul),
               ("rho1.00", "full-sequence"): _reports(a, (80, 70), 1.5, ul)}
    failed = [c.criterion for c in E.check_trends(cfg, reports) if not c.passed]
    assert failing in failed
