import pytest

from anomalyflow.config import ConfigError, RunConfig, load_config, parse_config, render_config


def test_empty_config_gives_defaults():
    assert parse_config("") == RunConfig()


def test_minimal_config():
    cfg = parse_config(
        """
        # a comment
        [grid]
        N = 32
        active_axes = x1, x2   # two axes

        [initial]
        kind = balanced_psi
        amplitude = 0.01
        axes = x2

        [flow]
        alpha_prime = 0.01
        phi_source = chern_weil_background
        """
    )
    assert cfg.grid.N == 32
    assert cfg.grid.active_axes == ("x1", "x2")
    assert cfg.initial.axes == ("x2",)
    assert cfg.flow.alpha_prime == 0.01
    assert cfg.monitor.p == 3.0


def test_negative_alpha_prime_names_line():
    with pytest.raises(ConfigError) as exc:
        parse_config("[flow]\nt_max = 1\nalpha_prime = -0.1\n")
    assert exc.value.line == 3
    assert str(exc.value).startswith("line 3:")
    assert "alpha_prime must be ≥ 0" in str(exc.value)


@pytest.mark.parametrize(
    "text, line",
    [
        ("[grid]\nN = 7\n", 2),
        ("[grid]\nN = sixteen\n", 2),
        ("N = 16\n", 1),
        ("[nope]\n", 1),
        ("[grid\n", 1),
        ("[grid]\nsize = 4\n", 2),
        ("[grid]\nN = 8\nN = 8\n", 3),
        ("[grid]\njust text\n", 2),
        ("[flow]\nrhs_mode = euler\n", 2),
        ("[flow]\nphi_coefficients = 1, 2\n", 2),
        ("[monitor]\nmax_order = 3\n", 2),
        ("[output]\nemit_figures = maybe\n", 2),
        ("[grid]\nactive_axes = x1\n[initial]\nkind = conformal\naxes = y2\n", 5),
        ("[initial]\nkind = snapshot\n", 2),
    ],
)
def test_errors_carry_line_numbers(text, line):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert exc.value.line == line


def test_render_roundtrip():
    cfg = parse_config(
        "[grid]\nN = 8\nactive_axes = y1, x3\nperiods = 1, 2, 3, 4, 5, 6\n"
        "[flow]\nphi_source = constant_form\nphi_coefficients = 1, 0.5+0.25j, 0, 0.5-0.25j, 1, 0, 0, 0, 1\n"
        "dt_initial = 0.1\n[output]\nemit_figures = false\n"
    )
    assert parse_config(render_config(cfg)) == cfg
    assert parse_config(render_config(RunConfig())) == RunConfig()


def test_load_from_file(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text("[monitor]\ncadence = 3\n", encoding="utf-8")
    assert load_config(path).monitor.cadence == 3
