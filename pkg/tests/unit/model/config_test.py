from pathlib import Path

import pytest

from dbar_lab.model.config import (
    DiscExampleSettings,
    ExperimentConfig,
    ExperimentKind,
    MkhSettings,
    ShrinkSettings,
    load_config,
)
from dbar_lab.model.options import ConfigError, QuadratureOptions, SolverOptions


def _write(tmp_path, text: str) -> Path:
    path = tmp_path / "lab.toml"
    path.write_text(text, encoding="utf-8")
    return path


# --------------------------------------------------------------------------
# load_config layering
# --------------------------------------------------------------------------


@pytest.mark.parametrize("kind", list(ExperimentKind))
def test_packaged_defaults_load_for_every_kind(kind):
    cfg = load_config(kind)
    assert cfg.kind is kind
    assert cfg.domain == "product-model"
    assert cfg.disc_example.j == (2, 3, 4, 5, 6)
    assert cfg.probe.alpha_scale == 0.5
    assert cfg.quadrature.tol == 1e-8
    assert cfg.settings() is getattr(cfg, kind.section)


def test_user_file_overlays_defaults(tmp_path):
    path = _write(tmp_path, "[solver]\nseed = 9\n[disc_example]\nj = [5]\n")
    cfg = load_config("disc-example", path)
    assert cfg.solver.seed == 9
    assert cfg.solver.tol == 1e-8
    assert cfg.disc_example.j == (5,)
    assert cfg.disc_example.grid_alpha_scale == 0.5
    assert cfg.disc_example.cross_check_cells == 64


def test_overrides_apply_last(tmp_path):
    path = _write(tmp_path, "[experiment]\nseed = 3\n")
    cfg = load_config(
        ExperimentKind.PROBE,
        path,
        {"seed": 11, "out": "runs", "threads": 4, "quad_tol": 1e-6, "solver_tol": 1e-7, "j": [2, 5]},
    )
    assert cfg.seed == 11
    assert cfg.solver.seed == 11
    assert cfg.out_dir == Path("runs")
    assert cfg.threads == 4
    assert cfg.quadrature.tol == 1e-6
    assert cfg.solver.tol == 1e-7
    assert cfg.probe.j == (2, 5)


def test_none_overrides_are_ignored():
    cfg = load_config("anchors", None, {"seed": None, "h": None})
    assert cfg.seed == 0
    assert cfg.anchors.h == (0.125, 0.1, 1.0 / 12.0)


@pytest.mark.parametrize(
    "kind, attr",
    [
        ("mkh-suite", lambda c: c.mkh_suite.h),
        ("anchors", lambda c: c.anchors.h),
        ("disc-example", lambda c: c.h),
        ("shrink-study", lambda c: c.h),
    ],
)
def test_h_override_targets_the_kind(kind, attr):
    cfg = load_config(kind, None, {"h": [0.5]})
    assert attr(cfg) == (0.5,)


def test_j_override_defaults_to_disc_example():
    cfg = load_config("disc-example", None, {"j": [7]})
    assert cfg.disc_example.j == (7,)


# --------------------------------------------------------------------------
# validation
# --------------------------------------------------------------------------


def test_negative_h_names_the_key(tmp_path):
    path = _write(tmp_path, "[grid]\nh = [0.1, -0.05]\n")
    with pytest.raises(ConfigError, match="h must be positive") as exc:
        load_config("disc-example", path)
    assert exc.value.key == "grid.h"


def test_negative_h_override():
    with pytest.raises(ConfigError, match="h must be positive"):
        load_config("disc-example", None, {"h": [-1.0]})


@pytest.mark.parametrize(
    "text, key",
    [
        ("[solver]\ntol = 0.0\n", "solver.tol"),
        ("[solver]\nbogus = 1\n", "solver.bogus"),
        ("[quadrature]\ntol = 0.5\n", "quadrature.tol"),
        ("[disc_example]\nj = [1]\n", "disc_example.j"),
        ("[disc_example]\nj = []\n", "disc_example.j"),
        ("[disc_example]\ncross_check_cells = 2\n", "disc_example.cross_check_cells"),
        ("[disc_example]\ngrid_alpha_scale = 0.0\n", "disc_example.grid_alpha_scale"),
        ("[shrink_study]\nregression_tol = 0.0\n", "shrink_study.regression_tol"),
        ("[probe]\nalpha_scale = -0.5\n", "probe.alpha_scale"),
        ("[shrink_study]\ncells_per_radius = 1\n", "shrink_study.cells_per_radius"),
        ("[mkh_suite]\nweight = \"cubic\"\n", "mkh_suite.weight"),
        ("[probe]\nepsilon_factor = -1.0\n", "probe.epsilon_factor"),
        ("[anchors]\nside = 0.0\n", "anchors.side"),
        ("[experiment]\nthreads = 0\n", "experiment.threads"),
        ("[model]\na1 = 2.0\n", "model.a1"),
        ("[regions.r]\nkind = \"blob\"\n", "kind"),
        ("disc_example = 3\n", "disc_example"),
    ],
)
def test_invalid_sections(tmp_path, text, key):
    with pytest.raises(ConfigError) as exc:
        load_config("disc-example", _write(tmp_path, text))
    assert exc.value.key == key


def test_missing_file():
    with pytest.raises(ConfigError) as exc:
        load_config("probe", "/nonexistent/lab.toml")
    assert exc.value.key == "config"


def test_malformed_toml(tmp_path):
    with pytest.raises(ConfigError) as exc:
        load_config("probe", _write(tmp_path, "[grid\n"))
    assert exc.value.key == "config"


def test_unknown_kind():
    with pytest.raises(ConfigError) as exc:
        ExperimentConfig.from_mapping({"experiment": {"kind": "nope"}})
    assert exc.value.key == "experiment.kind"
    with pytest.raises(ConfigError):
        ExperimentConfig.from_mapping({})


# --------------------------------------------------------------------------
# regions, domains and round trips
# --------------------------------------------------------------------------


def test_configured_domains_resolve_named_regions(tmp_path):
    text = (
        "[regions.big]\nkind = \"disc\"\nradius = 1.0\n"
        "[regions.low]\nkind = \"intersection\"\nmembers = [\"big\", {kind = \"half_disc\", radius = 2.0}]\n"
        "[domains.mine]\nfactor1 = \"big\"\nfactor2 = \"low\"\n"
        "[experiment]\ndomain = \"mine\"\n"
    )
    cfg = load_config("anchors", _write(tmp_path, text))
    assert cfg.domain == "mine"
    dom = cfg.domains["mine"]
    assert dom.name == "mine"
    assert dom.factor1.radius == 1.0
    assert dom.factor2.contains(-0.5j)


def test_config_mapping_roundtrip():
    cfg = load_config("mkh-suite", None, {"seed": 5})
    again = ExperimentConfig.from_mapping(cfg.to_mapping())
    assert again == cfg


def test_settings_mapping_roundtrips():
    for settings in (DiscExampleSettings(), ShrinkSettings(), MkhSettings()):
        assert type(settings).from_mapping(settings.to_mapping()) == settings


def test_options_defaults():
    assert SolverOptions().dense_threshold == 2000
    assert QuadratureOptions().max_cells == 20_000
