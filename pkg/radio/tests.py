"""
Tests for radio app
"""

import math

import numpy as np
from django.test import SimpleTestCase

from Hybridsim.exceptions import ConfigError
from .services import (
    LATENCY_CEILING_MS,
    SPEED_OF_LIGHT,
    RadioChannel,
    RatKind,
    RatParams,
    channel_load,
    collision_probability,
    delivery_outcome,
    fading_gain_db,
    latency_sample,
    path_loss_db,
    snir_db,
)

G5 = RatKind.ITS_G5
LTE = RatKind.LTE_V2X_PC5


class PathLossTestCase(SimpleTestCase):
    """Test log-distance path loss"""

    def test_reference_distance(self):
        """At d0 the loss is the free-space value"""
        f = 5.9e9
        self.assertAlmostEqual(path_loss_db(1.0, f), 20 * math.log10(4 * math.pi * f / SPEED_OF_LIGHT))

    def test_doubling_distance(self):
        """Doubling distance adds 6.02 dB at exponent 2"""
        self.assertAlmostEqual(path_loss_db(200, 5.9e9) - path_loss_db(100, 5.9e9), 6.0206, places=4)

    def test_free_space_value(self):
        """300 m at 5.9 GHz is about 97.41 dB"""
        self.assertAlmostEqual(path_loss_db(300, 5.9e9), 97.41, places=1)


class FadingTestCase(SimpleTestCase):
    """Test fading models"""

    def test_g5_unfaded(self):
        """ITS-G5 has no fading"""
        rng = np.random.default_rng(0)
        self.assertEqual({fading_gain_db(G5, rng) for _ in range(100)}, {0.0})

    def test_lte_unit_mean(self):
        """Rayleigh power gain has unit mean"""
        rng = np.random.default_rng(1)
        gains = np.array([fading_gain_db(LTE, rng) for _ in range(100_000)])
        mean = np.mean(10 ** (gains / 10))
        self.assertTrue(0.98 <= mean <= 1.02)

    def test_lte_deep_fade_probability(self):
        """P(gain < -10 dB) matches the exponential CDF"""
        rng = np.random.default_rng(2)
        gains = np.array([fading_gain_db(LTE, rng) for _ in range(100_000)])
        self.assertAlmostEqual(np.mean(gains < -10), 1 - math.exp(-0.1), delta=0.01)


class SnirTestCase(SimpleTestCase):
    """Test SNIR computation"""

    def test_noise_only(self):
        """-60 dBm over -90 dBm noise is 30 dB"""
        self.assertAlmostEqual(snir_db(-60, -90), 30.0)

    def test_one_interferer(self):
        """An interferer at the noise level costs about 3 dB"""
        self.assertAlmostEqual(snir_db(-60, -90, [-90]), 26.99, places=2)

    def test_interference_monotone(self):
        """Every added interferer lowers SNIR"""
        base = snir_db(-60, -90, [-95])
        self.assertLess(snir_db(-60, -90, [-95, -120]), base)


class LoadTestCase(SimpleTestCase):
    """Test channel load, collisions and latency"""

    def test_channel_load(self):
        """Load is active transmitters over capacity"""
        self.assertEqual(channel_load(G5, 0, 50), 0.0)
        self.assertEqual(channel_load(G5, 50, 50), 1.0)
        self.assertEqual(channel_load(G5, 25, 50), 0.5)
        self.assertEqual(channel_load(G5, 80, 50), 1.0)

    def test_collision_probability(self):
        """1 - exp(-kappa * rho)"""
        self.assertEqual(collision_probability(G5, 0.0), 0.0)
        self.assertAlmostEqual(collision_probability(G5, 0.5, 2.0), 0.6321, places=4)
        self.assertAlmostEqual(collision_probability(G5, 1.0, 2.0), 0.8647, places=4)

    def test_latency_without_load(self):
        """Zero load gives exactly the base latency"""
        rng = np.random.default_rng(0)
        params = RatParams.defaults_for(G5)
        self.assertEqual(latency_sample(G5, params, 0.0, rng), params.base_latency_ms)

    def test_latency_clamped(self):
        """Samples stay below the beacon period"""
        rng = np.random.default_rng(0)
        params = RatParams(latency_load_scale_ms=500.0)
        samples = [latency_sample(G5, params, 1.0, rng) for _ in range(1000)]
        self.assertLessEqual(max(samples), LATENCY_CEILING_MS)

    def test_latency_mean(self):
        """ITS-G5 at half load averages base plus 20 ms"""
        rng = np.random.default_rng(3)
        params = RatParams.defaults_for(G5)
        mean = np.mean([latency_sample(G5, params, 0.5, rng) for _ in range(100_000)])
        self.assertAlmostEqual(mean, 22.0, delta=1.0)


class DeliveryOutcomeTestCase(SimpleTestCase):
    """Test per-segment delivery"""

    def setUp(self):
        self.params = RatParams.defaults_for(G5)

    def test_below_sensitivity(self):
        """Power 20 dB under sensitivity never decodes"""
        rng = np.random.default_rng(0)
        for _ in range(200):
            sample = delivery_outcome(G5, self.params, 50.0, 0.0, 1.0, rng,
                                      rx_power_dbm=self.params.rx_sensitivity_dbm - 20)
            self.assertFalse(sample.delivered)

    def test_midpoint(self):
        """At snir50 without load half the frames decode"""
        rng = np.random.default_rng(1)
        rate = np.mean([delivery_outcome(G5, self.params, self.params.snir50_db, 0.0, 1.0, rng).delivered
                        for _ in range(10_000)])
        self.assertAlmostEqual(rate, 0.5, delta=0.02)

    def test_strong_signal(self):
        """30 dB above snir50 nearly always decodes"""
        rng = np.random.default_rng(2)
        rate = np.mean([delivery_outcome(G5, self.params, self.params.snir50_db + 30, 0.0, 1.0, rng).delivered
                        for _ in range(10_000)])
        self.assertGreaterEqual(rate, 0.999)

    def test_shorter_frames_collide_less(self):
        """Half-size segments see half the collision probability"""
        rng = np.random.default_rng(4)
        full = np.mean([delivery_outcome(G5, self.params, 40, 0.5, 1.0, rng).collided for _ in range(20_000)])
        half = np.mean([delivery_outcome(G5, self.params, 40, 0.5, 0.5, rng).collided for _ in range(20_000)])
        self.assertAlmostEqual(full, 0.632, delta=0.02)
        self.assertAlmostEqual(half, 0.316, delta=0.02)

    def test_invalid_fraction(self):
        """Payload fraction must lie in (0, 1]"""
        with self.assertRaises(ValueError):
            delivery_outcome(G5, self.params, 10, 0.0, 0.0, np.random.default_rng(0))


class RadioChannelTestCase(SimpleTestCase):
    """Test composed link draws"""

    def setUp(self):
        self.channel = RadioChannel({rat: RatParams.defaults_for(rat) for rat in RatKind})

    def test_close_link_quiet_channel(self):
        """A 10 m link on an idle channel delivers"""
        rng = np.random.default_rng(0)
        rate = np.mean([self.channel.sample_link(G5, 10.0, [], 0, 1.0, rng).delivered for _ in range(500)])
        self.assertGreater(rate, 0.99)

    def test_interference_lowers_snir(self):
        """Nearby interferers lower the reported SNIR"""
        rng = np.random.default_rng(0)
        quiet = self.channel.sample_link(G5, 100.0, [], 0, 1.0, rng).snir_db
        loud = self.channel.sample_link(G5, 100.0, [50.0, 80.0], 2, 1.0, rng).snir_db
        self.assertLess(loud, quiet)


class RatParamsTestCase(SimpleTestCase):
    """Test radio parameter defaults and validation"""

    def test_defaults(self):
        """Both RATs transmit at 23 dBm with -85 dBm sensitivity"""
        for rat in RatKind:
            params = RatParams.defaults_for(rat)
            self.assertEqual(params.tx_power_dbm, 23.0)
            self.assertEqual(params.rx_sensitivity_dbm, -85.0)
        self.assertEqual(RatParams.defaults_for(LTE).background_noise_dbm, -110.0)

    def test_labels(self):
        """Labels round-trip"""
        for rat in RatKind:
            self.assertIs(RatKind.from_label(rat.label), rat)

    def test_invalid(self):
        """Sensitivity above transmit power is rejected"""
        with self.assertRaises(ConfigError):
            RatParams(rx_sensitivity_dbm=30.0).validate()
