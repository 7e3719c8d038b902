"""Tests for base-supply synthesis, bid generation and perturbation."""

from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flexclear.models.bids import BaseProfile, FlexBid, ScenarioConfig, SpreadLevel
from flexclear.models.network import RadialNetwork
from flexclear.output.bid_export import export_bids
from flexclear.output.csv_exporter import CSVExporter
from flexclear.parsers.bid_csv import BidCsvParser
from flexclear.processing.bid_generator import (
    generate_bids,
    perturb_bids,
    select_sl1_buses,
    synthesize_base_supply,
    truncated_factor,
)


def sample_bids() -> list[FlexBid]:
    return [
        FlexBid(
            bus=3,
            qty_p_up=0.2,
            qty_p_dn=0.4,
            qty_d_up=0.8,
            qty_d_dn=0.4,
            cost_p_up=50,
            cost_p_dn=48,
            cost_d_up=40,
            cost_d_dn=37,
        ),
        FlexBid(bus=5, qty_d_up=0.4, qty_d_dn=0.2, cost_d_up=42, cost_d_dn=36),
    ]


class TestSynthesizeBaseSupply:
    """Tests for synthesize_base_supply."""

    def test_supply_within_fraction_of_load(self, feeder8: RadialNetwork) -> None:
        """Test that every loaded bus gets between 10% and 90% of its load."""
        profile = synthesize_base_supply(feeder8, seed=3)
        for bus in feeder8.buses:
            load = profile.p_load[bus.id]
            if load > 0:
                assert 0.1 * load <= profile.p_gen[bus.id] <= 0.9 * load
            else:
                assert profile.p_gen[bus.id] == 0.0

    def test_deterministic(self, feeder8: RadialNetwork) -> None:
        """Test that the same seed gives the same profile and another seed differs."""
        a = synthesize_base_supply(feeder8, seed=11)
        b = synthesize_base_supply(feeder8, seed=11)
        c = synthesize_base_supply(feeder8, seed=12)
        assert a == b
        assert a.p_gen != c.p_gen

    def test_load_scale(self, feeder8: RadialNetwork) -> None:
        """Test that loads are scaled and the scale is recorded."""
        profile = synthesize_base_supply(feeder8, seed=0, load_scale=2.0)
        assert profile.p_load[3] == pytest.approx(1.6)
        assert profile.q_load[3] == pytest.approx(0.8)
        assert profile.load_scale == 2.0
        assert profile.total_load == pytest.approx(7.6)

    def test_negative_scale(self, feeder8: RadialNetwork) -> None:
        with pytest.raises(ValueError, match="load_scale"):
            synthesize_base_supply(feeder8, seed=0, load_scale=-1.0)


class TestBaseProfile:
    """Tests for BaseProfile validation."""

    def test_negative_load(self) -> None:
        with pytest.raises(ValueError, match="non-negative"):
            BaseProfile(p_gen={}, p_load={1: -1.0}, q_load={})

    def test_supply_without_demand(self) -> None:
        with pytest.raises(ValueError, match="without demand"):
            BaseProfile(p_gen={1: 0.5}, p_load={1: 0.0}, q_load={})

    def test_net_load(self) -> None:
        profile = BaseProfile(p_gen={2: 0.3}, p_load={2: 1.0}, q_load={2: 0.1})
        assert profile.net_load(2) == pytest.approx(0.7)
        assert profile.net_load(9) == 0.0
        assert profile.has_resources(2)
        assert not profile.has_resources(9)


class TestGenerateBids:
    """Tests for bid generation and SL1 selection."""

    def test_sl2_covers_every_loaded_bus(self, feeder8: RadialNetwork) -> None:
        """Test one bid per bus with load, sized from the base profile."""
        profile = synthesize_base_supply(feeder8, seed=5)
        bids = generate_bids(profile, SpreadLevel.SL2, feeder8, seed=5)
        assert [b.bus for b in bids] == [b for b in feeder8.bus_ids if profile.p_load[b] > 0]
        for bid in bids:
            load, gen = profile.p_load[bid.bus], profile.p_gen[bid.bus]
            assert bid.qty_d_up == pytest.approx(load)
            assert bid.qty_d_dn == pytest.approx(0.5 * load)
            assert bid.qty_p_dn == pytest.approx(gen)
            assert bid.qty_p_up == pytest.approx(0.5 * gen)
            assert 35.0 <= bid.cost_d_up <= 45.0
            assert 35.0 <= bid.cost_d_dn <= 45.0
            assert 45.0 <= bid.cost_p_up <= 55.0
            assert 45.0 <= bid.cost_p_dn <= 55.0

    def test_sl1_is_filtered_sl2(self, feeder8: RadialNetwork) -> None:
        """Test that SL1 bids equal the SL2 bids at the same buses."""
        profile = synthesize_base_supply(feeder8, seed=9)
        sl2 = {b.bus: b for b in generate_bids(profile, "sl2", feeder8, seed=9)}
        sl1 = generate_bids(profile, "sl1", feeder8, seed=9)
        assert sl1
        for bid in sl1:
            assert bid == sl2[bid.bus]

    def test_sl1_selects_lateral_ends(self, feeder8: RadialNetwork) -> None:
        """Test the depth rule picks leaves, topped up to the minimum count."""
        profile = synthesize_base_supply(feeder8, seed=0)
        assert select_sl1_buses(feeder8, profile) == [b for b in feeder8.bus_ids if b in (5, 7, 8)]
        assert select_sl1_buses(feeder8, profile, min_leaves=1) == [b for b in feeder8.bus_ids if b in (5, 7)]

    def test_explicit_sl1_buses(self, feeder8: RadialNetwork) -> None:
        profile = synthesize_base_supply(feeder8, seed=0)
        bids = generate_bids(profile, SpreadLevel.SL1, feeder8, seed=0, sl1_buses=[4, 6])
        assert [b.bus for b in bids] == [4, 6]
        with pytest.raises(ValueError, match="unknown buses"):
            select_sl1_buses(feeder8, profile, explicit=[99])

    def test_spread_level_parse(self) -> None:
        assert SpreadLevel.parse(" sl1 ") is SpreadLevel.SL1
        with pytest.raises(ValueError, match="Unknown spread level"):
            SpreadLevel.parse("sl3")


class TestPerturbBids:
    """Tests for Monte Carlo bid perturbation."""

    def test_zero_sigma_is_identity(self) -> None:
        bids = sample_bids()
        cfg = ScenarioConfig(sigma_cost=0.0, sigma_qty=0.0, seed=1, samples=1)
        assert perturb_bids(bids, cfg, 0) == bids

    def test_deterministic_per_sample(self) -> None:
        """Test that draws repeat for a sample and differ between samples."""
        cfg = ScenarioConfig(seed=4, samples=10)
        a = perturb_bids(sample_bids(), cfg, 3)
        b = perturb_bids(sample_bids(), cfg, 3)
        c = perturb_bids(sample_bids(), cfg, 4)
        assert a == b
        assert a != c

    def test_draws_keyed_by_bus(self) -> None:
        """Test that removing one bid leaves the draws of the others unchanged."""
        cfg = ScenarioConfig(seed=2, samples=10)
        both = perturb_bids(sample_bids(), cfg, 7)
        only_second = perturb_bids(sample_bids()[1:], cfg, 7)
        assert only_second[0] == both[1]

    def test_negative_sample_index(self) -> None:
        with pytest.raises(ValueError, match="sample index"):
            perturb_bids(sample_bids(), ScenarioConfig(), -1)

    @settings(max_examples=50, deadline=None)
    @given(
        seed=st.integers(min_value=0, max_value=10_000),
        sample=st.integers(min_value=0, max_value=500),
        sigma=st.floats(min_value=0.0, max_value=3.0),
    )
    def test_perturbed_values_stay_non_negative(self, seed: int, sample: int, sigma: float) -> None:
        """Test that truncated factors never produce negative caps or costs."""
        cfg = ScenarioConfig(sigma_cost=sigma, sigma_qty=sigma, seed=seed, samples=1)
        for bid in perturb_bids(sample_bids(), cfg, sample):
            assert min(bid.quantities) >= 0.0
            assert min(bid.costs) >= 0.0

    def test_truncated_factor_zero_sigma(self) -> None:
        assert truncated_factor(np.random.default_rng(0), 0.0) == 1.0

    @pytest.mark.parametrize("sigma", [0.15, 0.3])
    def test_truncated_factor_mean_is_one(self, sigma: float) -> None:
        """Test that 1e5 factors average to one within 1%."""
        rng = np.random.default_rng(11)
        draws = [truncated_factor(rng, sigma) for _ in range(100_000)]
        assert np.mean(draws) == pytest.approx(1.0, abs=0.01)

    def test_perturbed_caps_average_to_base(self) -> None:
        """Test that keyed per-sample factors average to one across samples."""
        bid = FlexBid(bus=4, qty_d_up=1.0, cost_d_up=40.0)
        cfg = ScenarioConfig(sigma_cost=0.15, sigma_qty=0.3, seed=5, samples=2000)
        perturbed = [perturb_bids([bid], cfg, k)[0] for k in range(2000)]
        assert np.mean([b.qty_d_up for b in perturbed]) == pytest.approx(1.0, abs=0.02)
        assert np.mean([b.cost_d_up for b in perturbed]) == pytest.approx(40.0, abs=0.4)

    @pytest.mark.parametrize("sigma", [-0.1, float("nan"), float("inf")])
    def test_truncated_factor_rejects_bad_sigma(self, sigma: float) -> None:
        with pytest.raises(ValueError, match="perturbation spread"):
            truncated_factor(np.random.default_rng(0), sigma)

    def test_truncated_factor_warns_when_exhausted(self, caplog: pytest.LogCaptureFixture) -> None:
        """Test that a generator that never yields a non-negative factor is reported."""

        class AlwaysNegative:
            def normal(self, loc: float, scale: float) -> float:
                return -1.0

        with caplog.at_level("WARNING", logger="flexclear"):
            assert truncated_factor(AlwaysNegative(), 0.3) == 0.0  # type: ignore[arg-type]
        assert "No non-negative factor" in caplog.text


class TestScenarioConfig:
    """Tests for ScenarioConfig validation."""

    def test_invalid_values(self) -> None:
        with pytest.raises(ValueError, match="sigmas"):
            ScenarioConfig(sigma_cost=-0.1)
        with pytest.raises(ValueError, match="samples"):
            ScenarioConfig(samples=0)


class TestBidExport:
    """Tests for writing bid sets back to CSV."""

    def test_exported_bids_read_back(self, tmp_path: Path) -> None:
        """Test that an exported bid file, provenance header included, parses to the same bids."""
        exporter = CSVExporter(tmp_path, {"command": "clear", "config": {"market": {"seed": 1}}})
        export_bids(exporter, sample_bids(), "toy_bids")
        path = tmp_path / "toy_bids.csv"
        assert path.read_text(encoding="utf-8").startswith("# command: clear\n")
        assert BidCsvParser().parse(path) == sample_bids()
