"""Full-size feeder runs.

Seeded synthetic 69- and 141-bus feeders always run. The Matpower test
systems run when case69.m and case141.m are found in FLEXCLEAR_CASE_DIR or
data/.
"""

from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from flexclear.config import RunConfig, load_run_config
from flexclear.models.bids import ScenarioConfig, SpreadLevel
from flexclear.models.market import ClearingResult, MarketInstance
from flexclear.models.report import ComparisonReport
from flexclear.models.system import Formulation
from flexclear.processing.analysis import compare_deterministic
from flexclear.processing.bid_generator import synthesize_base_supply
from flexclear.processing.market import clear, verify_physics
from flexclear.processing.monte_carlo import convergence_trace, run_monte_carlo
from flexclear.processing.pipeline import build_instance, load_network
from flexclear.solver import InteriorPointSolver
from tests.conftest import case_file, congested_instance, synthetic_feeder

CONFIG_DIR = Path(__file__).parent.parent / "config"
SEEDS = range(10)

pytestmark = pytest.mark.slow


def clear_both(inst: MarketInstance) -> tuple[ClearingResult, ClearingResult]:
    return clear(inst.with_formulation(Formulation.LP)), clear(inst.with_formulation(Formulation.SOCP))


def compared(inst: MarketInstance, label: str | None = None) -> ComparisonReport:
    lp, socp = clear_both(inst)
    return compare_deterministic(lp, socp, label=label)


def mean_nonzero_flow(result: ClearingResult) -> float:
    flows = np.array([f.s for f in result.flows.values()])
    return float(flows[flows > 1e-9].mean())


def recipe(case: str, name: str) -> RunConfig:
    path = case_file(case)
    if path is None:
        pytest.skip(f"{case} not available")
    config = load_run_config(CONFIG_DIR / name)
    config.network.case_path = str(path)
    return config


def recipe_instance(config: RunConfig, seed: int, **market: object) -> MarketInstance:
    cfg = replace(config.market, seed=seed, **market)
    return build_instance(load_network(config.network), cfg)


class TestSyntheticRobustness:
    """The conic market clears on long, lossy feeders across seeds."""

    @pytest.mark.parametrize("seed", range(5))
    def test_socp_clears_high_impedance_feeder(self, seed: int) -> None:
        net = synthetic_feeder(141, seed, r_range=(0.002, 0.02))
        inst = congested_instance(net, seed, v_band=(0.8, 1.2)).with_formulation(Formulation.SOCP)
        solver = InteriorPointSolver()
        result = clear(inst, solver)
        assert result.solved
        assert max(result.report.kkt_residuals) <= solver.relaxed_tol
        physics = verify_physics(result, inst)
        assert physics.max_residual <= 1e-3
        assert physics.min_cone_gap is not None and physics.min_cone_gap > -1e-3

    @pytest.mark.parametrize("n_buses", [69, 141])
    def test_lp_clears_high_impedance_feeder(self, n_buses: int) -> None:
        net = synthetic_feeder(n_buses, 0, r_range=(0.002, 0.02))
        result = clear(congested_instance(net, 0, v_band=(0.8, 1.2)))
        assert result.solved
        assert 2 in result.binding_flows or 3 in result.binding_flows


class TestSyntheticFeeders:
    """LP-versus-SOCP behaviour on congested synthetic feeders."""

    @pytest.mark.parametrize("n_buses", [69, 141])
    @pytest.mark.parametrize("formulation", [Formulation.LP, Formulation.SOCP])
    def test_no_bids_zero_objective(self, n_buses: int, formulation: Formulation) -> None:
        net = synthetic_feeder(n_buses, 1)
        inst = MarketInstance(
            net=net, profile=synthesize_base_supply(net, 1), bids=(), formulation=formulation, label=net.name
        )
        result = clear(inst)
        assert result.objective == pytest.approx(0.0, abs=1e-9)
        assert result.activations == {}

    @pytest.mark.parametrize("seed", range(3))
    def test_physics_of_both_formulations(self, seed: int) -> None:
        """Test that both clearings satisfy their own equations and the LP misses only the losses."""
        inst = congested_instance(synthetic_feeder(141, seed), seed)
        lp, socp = clear_both(inst)
        lp_physics = verify_physics(lp, inst)
        assert lp_physics.max_residual <= 1e-6
        for bus, loss in lp_physics.loss_residuals.items():
            assert loss >= 0.0
            assert lp_physics.socp_balance_residuals[bus] == pytest.approx(-loss, abs=1e-6)
        socp_inst = inst.with_formulation(Formulation.SOCP)
        socp_physics = verify_physics(socp, socp_inst)
        assert socp_physics.max_residual <= 1e-6
        assert socp_physics.min_cone_gap is not None and socp_physics.min_cone_gap > -1e-6

    @pytest.mark.parametrize("seed", range(3))
    def test_congested_head_flow_agrees(self, seed: int) -> None:
        """Test that the head-line flows differ by no more than the gap between polygon and circle."""
        inst = congested_instance(synthetic_feeder(141, seed), seed)
        lp, socp = clear_both(inst)
        cap = inst.net.branch(2).s_max
        gap = (1.0 - np.cos(np.pi / inst.polygon_sides)) * cap
        assert 2 in socp.binding_flows
        assert socp.flows[2].s == pytest.approx(cap, rel=1e-5)
        assert abs(lp.flows[2].s - socp.flows[2].s) <= gap + 1e-5 * cap
        report = compare_deterministic(lp, socp)
        assert report.rmse["flow"] < mean_nonzero_flow(socp)

    @pytest.mark.parametrize("seed", range(3))
    def test_largest_deviation_away_from_root(self, seed: int) -> None:
        """Test that the free-interface root prices at zero and never carries the largest deviation."""
        inst = congested_instance(synthetic_feeder(141, seed), seed)
        lp, socp = clear_both(inst)
        assert abs(lp.dlmp[inst.net.root]) <= 1e-3
        assert abs(socp.dlmp[inst.net.root]) <= 1e-3
        bus, deviation = compare_deterministic(lp, socp).max_dlmp_dev
        assert bus is not None and bus != inst.net.root
        assert np.isfinite(deviation)

    def test_monte_carlo_reduced_scale(self) -> None:
        """Test 200 perturbed samples: moments, convergence and LP-versus-SOCP mean prices."""
        inst = congested_instance(synthetic_feeder(141, 0), 0)
        cfg = ScenarioConfig(sigma_cost=0.15, sigma_qty=0.3, seed=11, samples=200)
        lp, socp = run_monte_carlo(inst, cfg)
        assert lp.sample_ids == socp.sample_ids
        assert lp.samples >= 190
        for stats in (lp, socp):
            trace = convergence_trace(stats, "dlmp", threshold=0.02)
            assert trace.converged, f"{stats.formulation.value} drift {trace.drift:.4f}"
            flow_mean = np.abs(stats.mean("flow"))
            flagged = stats.cv_flags("flow")
            assert np.all(flow_mean[flagged] < 1e-3 * flow_mean.mean())
        lp_mean, socp_mean = lp.mean("dlmp"), socp.mean("dlmp")
        priced = np.abs(socp_mean) > 1e-3 * np.abs(socp_mean).max()
        assert priced.any()
        gap = np.abs(lp_mean[priced] - socp_mean[priced]) / np.abs(socp_mean[priced])
        assert gap.max() <= 0.10


@pytest.mark.parametrize(("case", "name"), [("case69.m", "case69-sl2.yaml"), ("case141.m", "case141-sl2.yaml")])
def test_recipe_clears(case: str, name: str) -> None:
    """Test that the shipped recipe clears under both formulations with small residuals."""
    config = recipe(case, name)
    base = build_instance(load_network(config.network), config.market)
    lp, socp = clear_both(base)
    assert verify_physics(lp, base).max_residual < 1e-6
    physics = verify_physics(socp, base.with_formulation(Formulation.SOCP))
    assert physics.max_residual < 1e-6
    assert physics.min_cone_gap is not None and physics.min_cone_gap > -1e-6
    assert all(v >= 0.0 for v in compare_deterministic(lp, socp).rmse.values())


class TestMatpowerCases:
    """Direction and band checks on the Matpower test systems."""

    @pytest.mark.parametrize(("case", "name"), [("case69.m", "case69-sl2.yaml"), ("case141.m", "case141-sl2.yaml")])
    def test_wider_spread_lowers_dlmp_error(self, case: str, name: str) -> None:
        config = recipe(case, name)
        below = 0
        for seed in SEEDS:
            sl1 = compared(recipe_instance(config, seed, spread=SpreadLevel.SL1, label="SL1"))
            sl2 = compared(recipe_instance(config, seed, spread=SpreadLevel.SL2, label="SL2"))
            assert len(sl1.binding_socp) >= 2
            below += sl2.normalized_by(sl1)["dlmp"] < 1.0
        assert below >= 8

    def test_wider_voltage_band_trade_off(self) -> None:
        """Test that widening the band raises the voltage error and lowers the price and flow errors."""
        config = recipe("case141.m", "case141-sl2.yaml")
        held = 0
        for seed in SEEDS:
            tight = compared(recipe_instance(config, seed, v_band=(0.99, 1.01)))
            wide = compared(recipe_instance(config, seed, v_band=(0.9, 1.1)))
            held += (
                wide.rmse["voltage"] > tight.rmse["voltage"]
                and wide.rmse["dlmp"] < tight.rmse["dlmp"]
                and wide.rmse["flow"] < tight.rmse["flow"]
            )
        assert held >= 8

    def test_largest_dlmp_deviation_band(self) -> None:
        config = recipe("case141.m", "case141-sl2.yaml")
        within = 0
        for seed in SEEDS:
            inst = recipe_instance(config, seed)
            bus, deviation = compared(inst).max_dlmp_dev
            assert bus != inst.net.root
            within += deviation <= 10.0
        assert within >= 8

    def test_flow_agreement(self) -> None:
        config = recipe("case141.m", "case141-sl2.yaml")
        for seed in range(3):
            lp, socp = clear_both(recipe_instance(config, seed))
            assert compare_deterministic(lp, socp).rmse["flow"] <= 0.01 * mean_nonzero_flow(socp)

