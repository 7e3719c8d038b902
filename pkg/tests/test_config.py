"""Tests for run configuration loading and validation."""

import logging
from pathlib import Path

import pytest

from flexclear.config import (
    CaseRecipe,
    CompareConfig,
    ConfigError,
    MarketConfig,
    MonteCarloConfig,
    NetworkConfig,
    OutputConfig,
    RunConfig,
    SolverConfig,
    load_run_config,
    load_yaml_file,
    parse_band,
    parse_formulations,
)
from flexclear.models.bids import SpreadLevel
from flexclear.models.system import Formulation

CONFIG_DIR = Path(__file__).parent.parent / "config"


class TestDefaults:
    """Tests for built-in defaults."""

    def test_run_defaults(self) -> None:
        config = load_run_config()
        assert config.market.spread is SpreadLevel.SL2
        assert config.market.v_band == (0.99, 1.01)
        assert config.market.polygon_sides == 12
        assert config.market.formulations == [Formulation.LP, Formulation.SOCP]
        assert config.solver.backend == "ipm"
        assert config.solver.tol == 1e-8
        assert config.mc.samples == 1000
        assert config.mc.sigma_cost == 0.15
        assert config.mc.sigma_qty == 0.3
        assert config.output.formats == ["csv", "json"]
        assert config.logging.level == "WARNING"

    def test_case_label_falls_back_to_spread(self) -> None:
        assert MarketConfig().case_label == "SL2"
        assert MarketConfig(label="custom").case_label == "custom"

    def test_scenario(self) -> None:
        cfg = MonteCarloConfig(samples=20, sigma_cost=0.1).scenario(seed=4)
        assert (cfg.samples, cfg.sigma_cost, cfg.sigma_qty, cfg.seed) == (20, 0.1, 0.3, 4)


class TestParseBand:
    """Tests for voltage band parsing."""

    @pytest.mark.parametrize("value", ["0.95:1.05", [0.95, 1.05], (0.95, 1.05), ["0.95", "1.05"]])
    def test_accepted_forms(self, value: object) -> None:
        assert parse_band(value) == (0.95, 1.05)

    @pytest.mark.parametrize(
        ("value", "message"),
        [
            ("0.95", "exactly two"),
            ([0.9, 1.0, 1.1], "exactly two"),
            ("a:b", "numbers"),
            ("0:1.1", "positive"),
            ("1.1:0.9", "exceeds"),
            (0.95, "lo:hi"),
        ],
    )
    def test_rejected_forms(self, value: object, message: str) -> None:
        with pytest.raises(ConfigError, match=message):
            parse_band(value)


class TestParseFormulations:
    """Tests for formulation lists."""

    def test_comma_list(self) -> None:
        assert parse_formulations("socp,lp,socp") == [Formulation.SOCP, Formulation.LP]

    def test_yaml_list(self) -> None:
        assert parse_formulations(["LP"]) == [Formulation.LP]

    def test_unknown(self) -> None:
        with pytest.raises(ConfigError):
            parse_formulations("lp,acopf")

    def test_empty(self) -> None:
        with pytest.raises(ConfigError, match="non-empty"):
            parse_formulations([])


class TestSections:
    """Tests for per-section validation."""

    def test_network(self) -> None:
        net = NetworkConfig.from_dict({"case_path": "x.m", "root": "3", "line_capacity": {"2": 5}})
        assert net.case_path == "x.m"
        assert net.root == 3
        assert net.line_capacity == {2: 5.0}
        assert net.interface_capacity is None

    def test_network_invalid_capacity(self) -> None:
        with pytest.raises(ConfigError, match="must be positive"):
            NetworkConfig.from_dict({"line_capacity": {2: 0}})
        with pytest.raises(ConfigError, match="slack_voltage"):
            NetworkConfig.from_dict({"slack_voltage": 0})

    def test_market(self) -> None:
        market = MarketConfig.from_dict(
            {"spread": "sl1", "v_band": "0.9:1.1", "v_overrides": {1: [0.95, 1.05]}, "sl1_buses": [4, 6]}
        )
        assert market.spread is SpreadLevel.SL1
        assert market.v_band == (0.9, 1.1)
        assert market.v_overrides == {1: (0.95, 1.05)}
        assert market.sl1_buses == [4, 6]

    @pytest.mark.parametrize(
        ("data", "message"),
        [
            ({"polygon_sides": 7}, "even"),
            ({"polygon_sides": 2}, ">= 4"),
            ({"polygon_sides": 12.5}, "integer"),
            ({"spread": "SL9"}, "Unknown spread level"),
            ({"load_scale": 0}, "load_scale"),
            ({"seed": -1}, "seed"),
            ({"seed": True}, "integer"),
            ({"reactive_margin": -0.5}, "reactive_margin"),
            ({"v_overrides": [1, 2]}, "v_overrides"),
        ],
    )
    def test_market_invalid(self, data: dict[str, object], message: str) -> None:
        with pytest.raises(ConfigError, match=message):
            MarketConfig.from_dict(data)

    def test_solver(self) -> None:
        solver = SolverConfig.from_dict({"backend": "HiGHS", "tol": 1e-6, "max_iter": 50})
        assert (solver.backend, solver.tol, solver.max_iter) == ("highs", 1e-6, 50)

    @pytest.mark.parametrize(
        ("data", "message"),
        [
            ({"backend": "gurobi"}, "backend"),
            ({"tol": 0}, "tol"),
            ({"tol": 1e-3}, "tol"),
            ({"max_iter": 0}, "max_iter"),
        ],
    )
    def test_solver_invalid(self, data: dict[str, object], message: str) -> None:
        with pytest.raises(ConfigError, match=message):
            SolverConfig.from_dict(data)

    def test_monte_carlo_invalid(self) -> None:
        with pytest.raises(ConfigError, match="samples"):
            MonteCarloConfig.from_dict({"samples": 0})
        with pytest.raises(ConfigError, match="sigma_qty"):
            MonteCarloConfig.from_dict({"sigma_qty": -0.1})
        with pytest.raises(ConfigError, match="drift_window"):
            MonteCarloConfig.from_dict({"drift_window": 0})

    def test_output_formats(self) -> None:
        assert OutputConfig.from_dict({"formats": "JSON"}).formats == ["json"]
        with pytest.raises(ConfigError, match="unknown output format"):
            OutputConfig.from_dict({"formats": ["xlsx"]})


class TestCompareConfig:
    """Tests for comparison recipes."""

    def test_recipe_apply(self) -> None:
        """Test that a case overrides only the fields it sets."""
        market = MarketConfig(seed=7, load_scale=0.6)
        recipe = CaseRecipe.from_dict({"label": "SL2-s2", "spread": "SL2", "v_band": [0.9, 1.1]})
        applied = recipe.apply(market)
        assert applied.label == "SL2-s2"
        assert applied.v_band == (0.9, 1.1)
        assert applied.load_scale == 0.6
        assert applied.seed == 7
        assert market.label is None

    def test_missing_label(self) -> None:
        with pytest.raises(ConfigError, match="label"):
            CaseRecipe.from_dict({"spread": "SL1"})

    def test_duplicate_labels(self) -> None:
        with pytest.raises(ConfigError, match="unique"):
            CompareConfig.from_dict({"cases": [{"label": "SL1"}, {"label": "SL1"}]})

    def test_cases_must_be_list(self) -> None:
        with pytest.raises(ConfigError, match="list"):
            CompareConfig.from_dict({"cases": {"label": "SL1"}})


class TestLoadRunConfig:
    """Tests for YAML recipes."""

    def test_load_recipe(self, tmp_path: Path) -> None:
        path = tmp_path / "run.yaml"
        path.write_text(
            "network:\n  case_path: data/case69.m\nmarket:\n  spread: SL1\n  v_band: [0.95, 1.05]\n"
            "solver:\n  backend: highs\n",
            encoding="utf-8",
        )
        config = load_run_config(path)
        assert config.network.case_path == "data/case69.m"
        assert config.market.spread is SpreadLevel.SL1
        assert config.market.v_band == (0.95, 1.05)
        assert config.solver.backend == "highs"
        assert config.mc.samples == 1000

    def test_unknown_section_warns(self, tmp_path: Path, caplog: pytest.LogCaptureFixture) -> None:
        path = tmp_path / "run.yaml"
        path.write_text("plotting:\n  dpi: 300\n", encoding="utf-8")
        with caplog.at_level(logging.WARNING, logger="flexclear"):
            load_run_config(path)
        assert "plotting" in caplog.text

    def test_empty_file(self, tmp_path: Path) -> None:
        path = tmp_path / "empty.yaml"
        path.write_text("", encoding="utf-8")
        assert load_yaml_file(path) == {}

    def test_invalid_yaml(self, tmp_path: Path) -> None:
        path = tmp_path / "bad.yaml"
        path.write_text("market: [unclosed\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="Invalid YAML"):
            load_run_config(path)

    def test_top_level_list(self, tmp_path: Path) -> None:
        path = tmp_path / "list.yaml"
        path.write_text("- a\n- b\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="mapping"):
            load_run_config(path)

    def test_missing_file(self, tmp_path: Path) -> None:
        with pytest.raises(FileNotFoundError):
            load_run_config(tmp_path / "nope.yaml")

    @pytest.mark.parametrize("name", sorted(p.name for p in CONFIG_DIR.glob("*.yaml")))
    def test_shipped_recipes_load(self, name: str) -> None:
        config = load_run_config(CONFIG_DIR / name)
        assert config.market.v_band[0] > 0

    def test_compare_recipe(self) -> None:
        config = load_run_config(CONFIG_DIR / "case141-compare.yaml")
        assert [c.label for c in config.compare.cases] == ["SL1", "SL2", "SL2-s2"]
        assert config.network.line_capacity == {2: 5.5, 3: 5.0}

    def test_to_dict_round_trip(self) -> None:
        """Test that the plain-data echo loads back to the same configuration."""
        config = load_run_config(CONFIG_DIR / "case141-compare.yaml")
        data = config.to_dict()
        assert data["market"]["spread"] == "SL2"
        assert data["market"]["formulations"] == ["lp", "socp"]
        assert RunConfig.from_dict(data) == config
