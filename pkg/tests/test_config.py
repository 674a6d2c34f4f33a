from pathlib import Path

import pytest

from diffwave.config import (
    DEFAULTS,
    build_config,
    describe_defaults,
    load_config,
    parse_config_text,
    snapshot_schedule,
)
from diffwave.errors import ParseError, ValidationError

REPO_ROOT = Path(__file__).resolve().parent.parent


def write(tmp_path, text, name="exp.conf"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


# ========================================
# Defaults and derived values
# ========================================

def test_empty_file_gives_defaults(tmp_path):
    cfg = load_config(write(tmp_path, "# nothing here\n\n"))
    assert cfg.params.alpha == 1.0
    assert cfg.params.rho_minus == 0.8 and cfg.params.rho_plus == 1.2
    assert cfg.kappa == 2.0
    assert cfg.grid.nx == 8192
    assert cfg.scheme.order == 2
    assert cfg.scheme.diffusion_mode == "implicit"
    assert cfg.k_e == pytest.approx(5.0)
    assert cfg.fit_window == (20.0, 200.0)
    assert cfg.log_level == "INFO"


def test_derived_values_follow_their_sources():
    cfg = build_config({"alpha": 2.0, "t_end": 50.0})
    assert cfg.k_e == pytest.approx(3.0)
    assert cfg.fit_window == (5.0, 50.0)


@pytest.mark.parametrize("path", sorted((REPO_ROOT / "experiments").glob("*.conf")) + [REPO_ROOT / "config" / "default.conf"])
def test_shipped_configs_are_valid(path):
    cfg = load_config(path)
    assert cfg.schedule()[0] == 0.0


def test_exponent_floats_without_a_dot():
    cfg = build_config(parse_config_text("profile_tol = 1e-8\n"))
    assert cfg.profile_tol == 1e-8


# ========================================
# Parse errors
# ========================================

def test_unknown_key_names_the_key(tmp_path):
    with pytest.raises(ParseError) as excinfo:
        load_config(write(tmp_path, "alpha = 1.0\nalpha2 = 3\n"))
    err = excinfo.value
    assert err.key == "alpha2"
    assert err.line == 2 and err.col == 1
    assert "alpha2" in err.message
    assert err.exit_code == 2


def test_duplicate_key():
    with pytest.raises(ParseError) as excinfo:
        parse_config_text("nx = 128\n  nx = 256\n")
    assert excinfo.value.line == 2
    assert excinfo.value.col == 3


def test_line_without_equals():
    with pytest.raises(ParseError) as excinfo:
        parse_config_text("alpha 1.0\n")
    assert excinfo.value.line == 1


def test_bad_value_syntax():
    with pytest.raises(ParseError) as excinfo:
        parse_config_text("snapshot_times = [1, 2\n")
    assert excinfo.value.key == "snapshot_times"


def test_yaml_config(tmp_path):
    cfg = load_config(write(tmp_path, "alpha: 0.5\nnx: 1024\nx_min: -400\n", name="exp.yaml"))
    assert cfg.params.alpha == 0.5
    assert cfg.grid.nx == 1024


def test_yaml_unknown_key(tmp_path):
    with pytest.raises(ParseError):
        load_config(write(tmp_path, "speed: 3\n", name="exp.yml"))


# ========================================
# Validation errors
# ========================================

def test_inadmissible_pressure_law():
    with pytest.raises(ValidationError) as excinfo:
        build_config({"kappa": 1.0})
    records = excinfo.value.errors
    assert [r["path"] for r in records] == ["kappa"]
    assert "admissibility" in records[0]["message"]
    assert excinfo.value.exit_code == 2


def test_every_failure_is_reported():
    with pytest.raises(ValidationError) as excinfo:
        build_config({"alpha": -1.0, "nx": 10, "order": 3, "cfl": 2.0, "diffusion_mode": "spectral"})
    paths = {r["path"] for r in excinfo.value.errors}
    assert {"alpha", "nx", "order", "cfl", "diffusion_mode"} <= paths


def test_type_errors():
    with pytest.raises(ValidationError) as excinfo:
        build_config({"nx": 1.5, "alpha": "fast"})
    assert {r["path"] for r in excinfo.value.errors} == {"nx", "alpha"}


def test_energy_weight_below_threshold():
    with pytest.raises(ValidationError) as excinfo:
        build_config({"k_e": 0.5})
    assert excinfo.value.errors[0]["path"] == "k_e"


def test_domain_too_small_for_the_wave():
    with pytest.raises(ValidationError) as excinfo:
        build_config({"x_min": -20.0, "x_max": 20.0})
    assert excinfo.value.errors[0]["path"] == "x_min"


def test_constant_state_needs_no_clearance():
    cfg = build_config({"rho_minus": 1.0, "rho_plus": 1.0, "x_min": -20.0, "x_max": 20.0, "nx": 256})
    assert cfg.grid.x_max == 20.0


# ========================================
# Overrides, schedule and canonical text
# ========================================

def test_overrides_win_over_the_file(tmp_path):
    path = write(tmp_path, "t_end = 100\nnx = 4096\n")
    cfg = load_config(path, {"t_end": 10.0, "nx": None, "out_dir": str(tmp_path / "out")})
    assert cfg.t_end == 10.0
    assert cfg.grid.nx == 4096
    assert cfg.out_dir == str(tmp_path / "out")


def test_log_spaced_schedule():
    times = snapshot_schedule(99.0, 3)
    assert times == pytest.approx([0.0, 9.0, 99.0])
    assert times[-1] == 99.0


def test_explicit_schedule():
    assert snapshot_schedule(10.0, 40, (20.0, 1.0, 5.0, 1.0)) == [0.0, 1.0, 5.0]
    assert snapshot_schedule(0.0, 40) == [0.0]


def test_scheme_snapshot_times_exclude_zero():
    cfg = build_config({"t_end": 10.0, "snapshots": 5})
    assert cfg.scheme.snapshot_times == tuple(cfg.schedule()[1:])
    assert len(cfg.schedule()) == 5


def test_canonical_text_reloads_to_the_same_config(tmp_path):
    cfg = build_config({"alpha": 0.5, "snapshot_times": [1, 10], "t_end": 20.0, "zero_mass": True})
    again = load_config(write(tmp_path, cfg.to_text()))
    assert again == cfg
    assert again.config_hash() == cfg.config_hash()
    assert again.to_text() == cfg.to_text()


def test_describe_defaults_lists_every_key():
    text = describe_defaults()
    for key in DEFAULTS:
        assert key in text
