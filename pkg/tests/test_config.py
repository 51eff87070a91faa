import os

import pytest

from meanfieldpy.core.errors import ConfigurationError
from meanfieldpy.utils.config import RunConfig, load_config, parse_config

CONFIGS = os.path.join(os.path.dirname(__file__), "..", "configs")
BASE = {"group": {"order": 2}, "h": {"constant": 1.0}}


def with_section(**sections):
    raw = dict(BASE)
    raw.update(sections)
    return raw


def test_defaults():
    cfg = parse_config(BASE)
    assert isinstance(cfg, RunConfig)
    assert cfg.solver.grid == 256
    assert cfg.schedule.eps == (0.4, 0.35, 0.3)
    assert cfg.group.ell == 2
    assert cfg.lattice.volume == pytest.approx(1.0)
    assert cfg.output_dir == "runs"


def test_shipped_configurations():
    assert load_config(os.path.join(CONFIGS, "half_shift.yaml")).group.ell == 2
    cfg = load_config(os.path.join(CONFIGS, "quarter_shift.yaml"))
    assert cfg.group.ell == 4
    h = cfg.h_field(32)
    assert h.min() > 0.0


def test_incompatible_grid_names_key():
    with pytest.raises(ConfigurationError, match="solver.grid"):
        parse_config({"group": {"order": 4}, "h": {"constant": 1.0}, "solver": {"grid": 250}})
    with pytest.raises(ConfigurationError, match="bubble.grid"):
        parse_config(with_section(bubble={"grid": 30}, group={"order": 4}))


def test_non_invariant_mode():
    raw = {"group": {"order": 2}, "h": {"fourier": {"constant": 1.0, "modes": [{"k": [1, 0], "cos": 0.1}]}}}
    with pytest.raises(ConfigurationError, match=r"h\.fourier\.modes\[0\]"):
        parse_config(raw)


def test_negative_weight():
    raw = {"group": {"order": 2}, "h": {"fourier": {"constant": 0.5, "modes": [{"k": [2, 0], "cos": 1.0}]}}}
    with pytest.raises(ConfigurationError, match="non-positive"):
        parse_config(raw)


def test_structure_errors():
    with pytest.raises(ConfigurationError, match="unknown sections"):
        parse_config(with_section(plotting={}))
    with pytest.raises(ConfigurationError, match="missing key 'group'"):
        parse_config({"h": {"constant": 1.0}})
    with pytest.raises(ConfigurationError, match="solver: unknown keys"):
        parse_config(with_section(solver={"grid_size": 64}))
    with pytest.raises(ConfigurationError, match="solver.max_iter"):
        parse_config(with_section(solver={"max_iter": "many"}))


def test_explicit_shifts():
    cfg = parse_config({"group": {"shifts": [["1/2", "0"], ["0", "1/2"]]}, "h": {"constant": 2.0}})
    assert cfg.group.ell == 4
    assert sorted(cfg.to_dict()["group"]["shifts"]) == sorted(cfg.group.as_strings())


def test_overrides():
    cfg = parse_config(with_section(solver={"rho": 30.0})).with_overrides(grid=64, eps=0.25, seed=7)
    assert (cfg.solver.grid, cfg.bubble.grid, cfg.testfn.grid) == (64, 64, 64)
    assert cfg.solver.epsilon == 0.25 and cfg.solver.rho is None
    assert cfg.bubble.eps == 0.25 and cfg.testfn.eps == (0.25,)
    assert cfg.solver.seed == 7
    assert cfg.problem_spec().rho == pytest.approx(16.0 * 3.141592653589793 * 0.75)
    with pytest.raises(ConfigurationError, match="--grid"):
        cfg.with_overrides(grid=31)


def test_problem_spec_needs_parameter():
    with pytest.raises(ConfigurationError, match="epsilon"):
        parse_config(BASE).problem_spec(grid=16)


def test_load_errors(tmp_path, write_config):
    with pytest.raises(ConfigurationError, match="cannot read"):
        load_config(str(tmp_path / "missing.yaml"))
    broken = tmp_path / "broken.yaml"
    broken.write_text("group: [1, 2\n", encoding="utf-8")
    with pytest.raises(ConfigurationError, match="invalid YAML"):
        load_config(str(broken))
    assert load_config(write_config(BASE)).h.constant == 1.0


@pytest.mark.parametrize("section,key", [("solver", "force"), ("bubble", "clamp")])
def test_flags_must_be_booleans(section, key):
    with pytest.raises(ConfigurationError, match=rf"{section}\.{key}"):
        parse_config(with_section(**{section: {key: "false"}}))
    cfg = parse_config(with_section(**{section: {key: False}}))
    assert getattr(getattr(cfg, section), key) is False
