"""
End-to-end checks on the high-latency link (Pe = 0.2, 12.5 ms, 1.5 Mbps, B = 30).

Reference values are the known E[Q] / E[Z] grids for λ = 1 and λ = 30; the
packaged link (pe_ack = 0) is expected to reproduce them within 5 %.
"""

import unittest
from dataclasses import replace

import numpy as np

from rlnc_tdd.bulk_queue import queue_ratio, sweep
from rlnc_tdd.config import load_default_params

CAPACITY = 30

# (m, K) -> E[Q] at λ = 1
REFERENCE_EQ_LOW_LOAD = {
    (1, 1): 0.0408, (1, 2): 0.0398, (1, 3): 0.0397, (1, 4): 0.0397, (1, 5): 0.0397,
    (2, 2): 0.0495, (2, 3): 0.0495, (2, 4): 0.0495, (2, 5): 0.0495,
    (3, 3): 0.0595, (3, 4): 0.0595, (3, 5): 0.0595,
    (4, 4): 0.0696, (4, 5): 0.0696,
    (5, 5): 0.07844,
}

# (m, K) -> E[Z] at λ = 1
REFERENCE_EZ_LOW_LOAD = {
    (1, 1): 1.0, (1, 2): 1.0009, (1, 3): 1.0009, (1, 4): 1.0009, (1, 5): 1.0009,
    (2, 2): 2.0, (2, 3): 2.0, (2, 4): 2.0, (2, 5): 2.0,
    (3, 3): 3.0, (3, 4): 3.0, (3, 5): 3.0,
    (4, 4): 4.0, (4, 5): 4.0,
    (5, 5): 5.0,
}

# (m, K) -> (E[Q], E[Z]) at λ = 30; m = K = 1 is unstable and left out
REFERENCE_HIGH_LOAD = {
    (1, 2): (2.2972, 1.5504), (1, 3): (1.5904, 1.6442), (1, 4): (1.4499, 1.6664), (1, 5): (1.4085, 1.6710),
    (2, 2): (2.5720, 2.0000), (2, 3): (1.8114, 2.2645), (2, 4): (1.6542, 2.3301), (2, 5): (1.6092, 2.3468),
    (3, 3): (2.1548, 3.0000), (3, 4): (1.9433, 3.1455), (3, 5): (1.8766, 3.1893),
    (4, 4): (2.2397, 4.0000), (4, 5): (2.1575, 4.0769),
    (5, 5): (2.4345, 5.0000),
}


def _cells(table, lambda_rate, column):
    rows = table[table["lambda"] == lambda_rate]
    return {(int(m), int(k)): float(v) for m, k, v in zip(rows["m"], rows["K"], rows[column])}


class TestHighLatencyLink(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.link = load_default_params()
        cls.result = sweep(range(1, 6), range(1, 6), [1.0, 10.0, 30.0], CAPACITY, cls.link)
        cls.table = cls.result.table

    def test_every_cell_solved(self):
        self.assertEqual(self.result.errors, {})
        self.assertEqual(len(self.table), 45)
        self.assertTrue(np.isfinite(self.table["EQ"]).all())

    def test_low_load_queue_sizes(self):
        computed = _cells(self.table, 1.0, "EQ")
        for cell, expected in REFERENCE_EQ_LOW_LOAD.items():
            with self.subTest(cell=cell):
                self.assertLessEqual(abs(computed[cell] - expected), max(0.05 * expected, 0.002))

    def test_low_load_batch_sizes(self):
        computed = _cells(self.table, 1.0, "EZ")
        for cell, expected in REFERENCE_EZ_LOW_LOAD.items():
            with self.subTest(cell=cell):
                self.assertLessEqual(abs(computed[cell] - expected), 0.005)

    def test_low_load_ordering(self):
        computed = _cells(self.table, 1.0, "EQ")
        for k in range(1, 6):
            column = [computed[(m, k)] for m in range(1, k + 1)]
            with self.subTest(K=k):
                self.assertTrue(all(b >= a - 1e-12 for a, b in zip(column, column[1:])))
        first_row = [computed[(1, k)] for k in range(1, 6)]
        self.assertLess((max(first_row) - min(first_row)) / min(first_row), 0.03)

    def test_high_load_grid(self):
        queue = _cells(self.table, 30.0, "EQ")
        batch = _cells(self.table, 30.0, "EZ")
        for cell, (expected_q, expected_z) in REFERENCE_HIGH_LOAD.items():
            with self.subTest(cell=cell):
                self.assertLessEqual(abs(queue[cell] - expected_q), 0.05 * expected_q)
                self.assertLessEqual(abs(batch[cell] - expected_z), 0.05 * expected_z)

    def test_fixed_batch_penalty(self):
        ratio = queue_ratio(self.table, 30.0, (3, 3), (1, 5))
        self.assertAlmostEqual(ratio, 1.53, delta=0.08)

    def test_best_fixed_batch_grows_with_load(self):
        self.assertEqual(self.result.fixed_batch_argmin, {1.0: [1], 10.0: [2], 30.0: [3]})

    def test_stability_flags(self):
        stable = {(lam, m, k): s for lam, m, k, s in
                  zip(self.table["lambda"], self.table["m"], self.table["K"], self.table["stable"])}
        self.assertFalse(stable[(30.0, 1, 1)])
        self.assertTrue(stable[(30.0, 1, 5)])
        self.assertTrue(all(s for (lam, _, _), s in stable.items() if lam == 1.0))

    def test_waiting_mass_shifts_up_with_threshold(self):
        below = []
        for m in range(1, 6):
            pi = self.result.distributions[(30.0, m, 5)]
            below.append(float(pi[:5].sum()))
        self.assertTrue(all(b < a for a, b in zip(below, below[1:])), below)
        self.assertLessEqual(int(np.argmax(self.result.distributions[(30.0, 1, 5)])), 2)


class TestLossyAcknowledgements(unittest.TestCase):
    """pe_ack = pe slows every service down but keeps the ordering in m."""

    @classmethod
    def setUpClass(cls):
        link = load_default_params()
        cls.link = replace(link, pe_ack=link.pe)
        cls.result = sweep(range(1, 6), range(1, 6), [1.0], CAPACITY, cls.link, tol=1e-8)

    def test_ordering_in_m(self):
        self.assertEqual(self.result.errors, {})
        computed = _cells(self.result.table, 1.0, "EQ")
        for k in range(1, 6):
            column = [computed[(m, k)] for m in range(1, k + 1)]
            with self.subTest(K=k):
                self.assertTrue(all(b >= a - 1e-12 for a, b in zip(column, column[1:])))

    def test_slower_than_ideal_feedback(self):
        ideal = sweep([1], [1], [1.0], CAPACITY, load_default_params()).table["EQ"].iloc[0]
        lossy = _cells(self.result.table, 1.0, "EQ")[(1, 1)]
        self.assertGreater(lossy, ideal)


if __name__ == "__main__":
    unittest.main()
