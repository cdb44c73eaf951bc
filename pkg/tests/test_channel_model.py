"""
Tests for round timing and energy.
"""

import unittest

from rlnc_tdd.channel_model import derive_timing, packet_duration, round_duration, round_energy, wait_time
from rlnc_tdd.errors import PreconditionError
from rlnc_tdd.models import LinkParams


def _link(**overrides) -> LinkParams:
    values = dict(pe=0.2, pe_ack=0.0, rate_bps=1.5e6, payload_bits=10000, header_bits=80,
                  coeff_bits=20, ack_bits=100, prop_delay_s=12.5e-3)
    values.update(overrides)
    return LinkParams(**values)


class TestPacketDuration(unittest.TestCase):

    def test_high_latency_link_batch_of_five(self):
        self.assertAlmostEqual(packet_duration(_link(), 5), 10180 / 1.5e6, places=15)

    def test_payload_equal_to_rate(self):
        link = _link(header_bits=0, payload_bits=1_500_000)
        self.assertAlmostEqual(packet_duration(link, 1), (1.5e6 + 20) / 1.5e6, places=12)

    def test_affine_in_batch_size(self):
        link = _link()
        for batch in range(1, 10):
            step = packet_duration(link, batch + 1) - packet_duration(link, batch)
            self.assertAlmostEqual(step, 20 / 1.5e6, places=15)
            self.assertGreater(step, 0)

    def test_batch_size_must_be_positive(self):
        with self.assertRaises(PreconditionError):
            packet_duration(_link(), 0)


class TestWaitTime(unittest.TestCase):

    def test_round_trip_plus_ack(self):
        self.assertAlmostEqual(wait_time(_link()), 25e-3 + 100 / 1.5e6, places=15)

    def test_doubling_propagation_changes_round_trip_term_only(self):
        base = wait_time(_link())
        doubled = wait_time(_link(prop_delay_s=25e-3))
        self.assertAlmostEqual(doubled - base, 2 * 12.5e-3, places=15)

    def test_zero_propagation_leaves_ack_time(self):
        self.assertAlmostEqual(wait_time(_link(prop_delay_s=0.0)), 100 / 1.5e6, places=15)

    def test_override(self):
        self.assertEqual(wait_time(_link(t_wait_s=0.05)), 0.05)

    def test_derive_timing(self):
        timing = derive_timing(_link(), 3)
        self.assertEqual(timing.batch_size, 3)
        self.assertEqual(timing.t_packet_s, packet_duration(_link(), 3))
        self.assertEqual(timing.t_wait_s, wait_time(_link()))


class TestRoundDuration(unittest.TestCase):

    def test_single_packet_round(self):
        link = _link()
        self.assertAlmostEqual(round_duration(link, 4, 2, 1), packet_duration(link, 4) + wait_time(link), places=15)

    def test_seven_packets_batch_of_five(self):
        expected = 7 * 10180 / 1.5e6 + 25e-3 + 100 / 1.5e6
        self.assertAlmostEqual(round_duration(_link(), 5, 5, 7), expected, places=12)
        self.assertAlmostEqual(round_duration(_link(), 5, 5, 7), 7.2573e-2, places=5)

    def test_one_more_packet_adds_one_packet_duration(self):
        link = _link()
        for n in range(1, 20):
            step = round_duration(link, 5, 3, n + 1) - round_duration(link, 5, 3, n)
            self.assertAlmostEqual(step, packet_duration(link, 5), places=14)

    def test_rejects_zero_packets_and_bad_state(self):
        with self.assertRaises(PreconditionError):
            round_duration(_link(), 5, 3, 0)
        with self.assertRaises(PreconditionError):
            round_duration(_link(), 5, 6, 7)
        with self.assertRaises(PreconditionError):
            round_duration(_link(), 5, 0, 7)


class TestRoundEnergy(unittest.TestCase):

    def test_unit_powers_equal_duration(self):
        link = _link()
        for batch in (1, 3, 5):
            for state in range(1, batch + 1):
                for n in (state, state + 4):
                    self.assertEqual(round_energy(link, batch, state, n), round_duration(link, batch, state, n))

    def test_transmit_only(self):
        link = _link(tx_power=2.0, rx_power=0.0)
        self.assertAlmostEqual(round_energy(link, 5, 5, 7), 2 * 7 * packet_duration(link, 5), places=15)

    def test_half_receive_power(self):
        link = _link(tx_power=1.0, rx_power=0.5)
        self.assertAlmostEqual(round_energy(link, 5, 5, 7), 6.0040e-2, places=6)


class TestLinkParams(unittest.TestCase):

    def test_rejects_certain_erasure(self):
        with self.assertRaises(PreconditionError):
            _link(pe=1.0)
        with self.assertRaises(PreconditionError):
            _link(pe_ack=1.0)

    def test_rejects_non_positive_sizes(self):
        for name in ("rate_bps", "payload_bits", "coeff_bits", "ack_bits"):
            with self.subTest(name=name):
                with self.assertRaises(PreconditionError):
                    _link(**{name: 0})

    def test_allows_zero_header_and_propagation(self):
        link = _link(header_bits=0, prop_delay_s=0.0)
        self.assertEqual(link.header_bits, 0)

    def test_rejects_negative_header(self):
        with self.assertRaises(PreconditionError):
            _link(header_bits=-1)


if __name__ == "__main__":
    unittest.main()
